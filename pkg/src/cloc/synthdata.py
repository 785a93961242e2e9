"""Procedural region-text corpus: scenes of coloured shapes with boxes and captions.

Scenes are a pure function of their seed, so datasets store seeds instead of
pixels by default and re-rasterize on load. Records are JSON lines:

    {"id": ..., "seed": ... | "pixels": ..., "caption": ...,
     "regions": [{"box": [x1, y1, x2, y2], "text": ..., "conf": ...}],
     "schema_version": 1}
"""

from __future__ import annotations

import functools
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import CorruptRecord, PlacementFailure, VersionMismatch
from .geometry import BoundingBox, intersection_over_min, iou, validate_box

SCHEMA_VERSION = 1

SHAPES = ("circle", "square", "triangle")
SIZES = ("small", "big")
COLORS = {
    "red": (0.90, 0.10, 0.10),
    "green": (0.10, 0.75, 0.15),
    "blue": (0.15, 0.25, 0.95),
    "yellow": (0.95, 0.90, 0.10),
    "cyan": (0.10, 0.85, 0.90),
    "magenta": (0.90, 0.15, 0.85),
    "orange": (1.00, 0.55, 0.00),
    "white": (1.00, 1.00, 1.00),
}
RADIUS_RANGE = {"small": (0.09, 0.12), "big": (0.15, 0.20)}
MAX_OBJECTS = 6
MAX_PAIR_IOU = 0.3
# stricter than the IoU bound: keeps small objects from hiding under big ones
MAX_PAIR_COVER = 0.4
MAX_ATTEMPTS = 1000
TEMPLATE_WORDS = ("a", "picture", "with", "and")

ALL_PHRASES = tuple(f"{s} {c} {sh}" for s in SIZES for c in COLORS for sh in SHAPES)


def corpus_vocabulary() -> list[str]:
    """Every word the generator can emit, in a fixed order."""
    return [*TEMPLATE_WORDS, *SIZES, *COLORS, *SHAPES]


@dataclass(frozen=True)
class SceneObject:
    shape: str
    color: str
    size: str
    cx: float
    cy: float
    radius: float

    @property
    def box(self) -> BoundingBox:
        r = self.radius
        return BoundingBox(self.cx - r, self.cy - r, self.cx + r, self.cy + r)

    @property
    def phrase(self) -> str:
        return f"{self.size} {self.color} {self.shape}"


def compose_caption(phrases: list[str]) -> str:
    items = [f"a {p}" for p in phrases]
    if not items:
        return "a picture"
    if len(items) == 1:
        body = items[0]
    else:
        body = ", ".join(items[:-1]) + " and " + items[-1]
    return f"a picture with {body}"


@dataclass(frozen=True)
class SceneSpec:
    seed: int
    objects: tuple[SceneObject, ...]
    canvas_size: int = 32

    @property
    def regions(self) -> list[tuple[BoundingBox, str]]:
        return [(o.box, o.phrase) for o in self.objects]

    @property
    def caption(self) -> str:
        return compose_caption([o.phrase for o in self.objects])

    @property
    def impoverished_caption(self) -> str:
        return compose_caption([o.phrase for o in self.objects[:1]])


def generate_scene(seed: int, canvas_size: int = 32, n_objects: int | None = None) -> SceneSpec:
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, MAX_OBJECTS + 1)) if n_objects is None else n_objects
    attrs = [
        (SHAPES[rng.integers(len(SHAPES))], list(COLORS)[rng.integers(len(COLORS))], SIZES[rng.integers(len(SIZES))])
        for _ in range(n)
    ]
    placed: list[SceneObject] = []
    attempts = 0
    for shape, color, size in attrs:
        lo, hi = RADIUS_RANGE[size]
        r = float(rng.uniform(lo, hi))
        while True:
            attempts += 1
            if attempts > MAX_ATTEMPTS:
                raise PlacementFailure(f"seed {seed}: could not place {n} objects in {MAX_ATTEMPTS} attempts")
            cx, cy = (float(v) for v in rng.uniform(r, 1.0 - r, size=2))
            cand = SceneObject(shape, color, size, cx, cy, r)
            if all(
                iou(cand.box, o.box) <= MAX_PAIR_IOU and intersection_over_min(cand.box, o.box) <= MAX_PAIR_COVER
                for o in placed
            ):
                placed.append(cand)
                break
    return SceneSpec(seed, tuple(placed), canvas_size)


def shape_mask(obj: SceneObject, size: int) -> np.ndarray:
    centres = (np.arange(size) + 0.5) / size
    x = centres[None, :]
    y = centres[:, None]
    dx, dy = x - obj.cx, y - obj.cy
    r = obj.radius
    if obj.shape == "circle":
        return dx**2 + dy**2 <= r**2
    if obj.shape == "square":
        return (np.abs(dx) <= r) & (np.abs(dy) <= r)
    if obj.shape == "triangle":
        # apex at the top centre, base along the bottom edge
        depth = y - (obj.cy - r)
        return (depth >= 0) & (depth <= 2 * r) & (np.abs(dx) <= depth / 2)
    raise ValueError(f"unknown shape {obj.shape!r}")


def rasterize(scene: SceneSpec, image_size: int | None = None) -> np.ndarray:
    """RGB float32 image (S, S, 3) in [0, 1]; later objects paint over earlier ones."""
    s = scene.canvas_size if image_size is None else image_size
    img = np.zeros((s, s, 3), dtype=np.float32)
    for obj in scene.objects:
        img[shape_mask(obj, s)] = COLORS[obj.color]
    return img


@functools.lru_cache(maxsize=8192)
def _raster_for_seed(seed: int, image_size: int) -> np.ndarray:
    img = rasterize(generate_scene(seed), image_size)
    img.flags.writeable = False
    return img


@dataclass(frozen=True)
class RegionAnnotation:
    box: BoundingBox
    text: str
    conf: float = 1.0

    def __post_init__(self):
        if not (0.1 < self.conf <= 1.0):
            raise ValueError(f"confidence {self.conf} not in (0.1, 1]")

    def to_json(self) -> dict:
        return {"box": self.box.as_list(), "text": self.text, "conf": self.conf}


@dataclass
class DatasetRecord:
    id: str
    caption: str
    seed: int | None = None
    pixels: np.ndarray | None = None
    regions: list[RegionAnnotation] | None = None

    def __post_init__(self):
        if self.regions is not None and len(self.regions) == 0:
            self.regions = None
        if (self.seed is None) == (self.pixels is None):
            raise ValueError("a record carries exactly one of seed or pixels")

    @property
    def has_regions(self) -> bool:
        return self.regions is not None

    def image(self, image_size: int) -> np.ndarray:
        if self.pixels is not None:
            if self.pixels.shape[:2] == (image_size, image_size):
                return self.pixels
            from .encoders import resize_with_pad

            return resize_with_pad(self.pixels, image_size)
        return _raster_for_seed(self.seed, image_size)

    def to_json(self) -> dict:
        out: dict = {"id": self.id}
        if self.seed is not None:
            out["seed"] = self.seed
        else:
            out["pixels"] = self.pixels.tolist()
        out["caption"] = self.caption
        if self.regions is not None:
            out["regions"] = [r.to_json() for r in self.regions]
        out["schema_version"] = SCHEMA_VERSION
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "DatasetRecord":
        version = obj.get("schema_version")
        if version != SCHEMA_VERSION:
            raise VersionMismatch(f"unsupported schema_version {version!r}")
        pixels = obj.get("pixels")
        regions = obj.get("regions")
        return cls(
            id=str(obj["id"]),
            caption=str(obj["caption"]),
            seed=None if obj.get("seed") is None else int(obj["seed"]),
            pixels=None if pixels is None else np.asarray(pixels, dtype=np.float32),
            regions=None
            if regions is None
            else [RegionAnnotation(validate_box(r["box"]), str(r["text"]), float(r["conf"])) for r in regions],
        )


def scene_seed(corpus_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([corpus_seed, index]).generate_state(1, np.uint64)[0])


def truth_regions(scene: SceneSpec) -> list[RegionAnnotation]:
    return [RegionAnnotation(box, phrase, 1.0) for box, phrase in scene.regions]


def generate_corpus(
    count: int,
    seed: int,
    caption_mode: str = "rich",
    regions: str = "none",
    raw_pixels: bool = False,
    image_size: int = 32,
) -> Iterator[DatasetRecord]:
    """Yield ``count`` records. ``regions`` is "none" (captions only) or "truth"."""
    if caption_mode not in ("rich", "impoverished"):
        raise ValueError(f"unknown caption mode {caption_mode!r}")
    if regions not in ("none", "truth"):
        raise ValueError(f"unknown regions mode {regions!r}")
    for i in range(count):
        s = scene_seed(seed, i)
        scene = generate_scene(s)
        caption = scene.caption if caption_mode == "rich" else scene.impoverished_caption
        yield DatasetRecord(
            id=f"{seed}-{i:06d}",
            caption=caption,
            seed=None if raw_pixels else s,
            pixels=rasterize(scene, image_size) if raw_pixels else None,
            regions=truth_regions(scene) if regions == "truth" else None,
        )


def write_dataset(records: Iterable[DatasetRecord], path: str | Path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json(), separators=(",", ":")) + "\n")
            n += 1
    return n


def iter_dataset(path: str | Path) -> Iterator[DatasetRecord]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorruptRecord(f"invalid JSON ({exc.msg})", lineno) from None
            if not isinstance(obj, dict):
                raise CorruptRecord("record is not an object", lineno)
            try:
                yield DatasetRecord.from_json(obj)
            except VersionMismatch:
                raise
            except (KeyError, TypeError, ValueError) as exc:
                raise CorruptRecord(f"bad record: {exc}", lineno) from None


def read_dataset(path: str | Path) -> list[DatasetRecord]:
    return list(iter_dataset(path))


def take_regions(records: Iterable[DatasetRecord], n_regions: int) -> list[DatasetRecord]:
    """Shortest prefix of ``records`` holding at least ``n_regions`` regions, trimmed to exactly that many."""
    out = []
    total = 0
    for rec in itertools.takewhile(lambda _: total < n_regions, records):
        if not rec.regions:
            continue
        keep = rec.regions[: n_regions - total]
        out.append(DatasetRecord(rec.id, rec.caption, rec.seed, rec.pixels, keep))
        total += len(keep)
    return out
