"""End-to-end training: region sampling, AdamW with warmup-cosine LR, checkpoints."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import struct
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from .encoders import ModelConfig
from .errors import ChecksumMismatch, NonFiniteLoss, VersionMismatch
from .geometry import clamp_box
from .losses import BatchEmbeddings, LossBreakdown, total_loss
from .model import CLOCModel
from .synthdata import DatasetRecord, RegionAnnotation, corpus_vocabulary
from .tokenizer import Tokenizer, split_words

log = logging.getLogger(__name__)

MAGIC = b"CLOC"
FORMAT_VERSION = 1


# "dihedral": one of the 8 square symmetries; "shift": optional left-right
# mirror plus an integer-pixel translation that keeps every labeled box on the canvas
AUGMENTATIONS = ("none", "dihedral", "shift")


@dataclass
class TrainConfig:
    batch_size: int = 64
    max_regions: int = 4
    peak_lr: float = 5e-4
    # 2k of 439k steps, scaled to the step budget
    warmup_steps: int = 14
    total_steps: int = 3000
    weight_decay: float = 0.2
    beta1: float = 0.9
    beta2: float = 0.98
    adam_eps: float = 1e-8
    seed: int = 0
    filter_threshold: float = 0.9
    region_extractor: str = "prompter"
    use_grounding: bool = True
    augment: str = "shift"

    def __post_init__(self):
        if self.max_regions < 1:
            raise ValueError("max_regions must be >= 1")
        if not 0 <= self.warmup_steps < self.total_steps:
            raise ValueError("need 0 <= warmup_steps < total_steps")
        if self.region_extractor not in ("prompter", "roi_align"):
            raise ValueError(f"unknown region_extractor {self.region_extractor!r}")
        if self.augment not in AUGMENTATIONS:
            raise ValueError(f"unknown augment {self.augment!r}")


def build_tokenizer(records: Sequence[DatasetRecord] = ()) -> Tokenizer:
    words = list(corpus_vocabulary())
    extra = set()
    for rec in records:
        extra.update(split_words(rec.caption))
        for reg in rec.regions or []:
            extra.update(split_words(reg.text))
    return Tokenizer(words + sorted(extra))


def lr_at(step: int, cfg: TrainConfig) -> float:
    if step < cfg.warmup_steps:
        return cfg.peak_lr * step / cfg.warmup_steps
    progress = (step - cfg.warmup_steps) / (cfg.total_steps - cfg.warmup_steps)
    progress = min(max(progress, 0.0), 1.0)
    return cfg.peak_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def sample_regions(record: DatasetRecord, m: int, rng: np.random.Generator) -> list[RegionAnnotation]:
    if not record.regions:
        return []
    n = len(record.regions)
    idx = rng.choice(n, size=min(m, n), replace=False)
    return [record.regions[i] for i in sorted(idx)]


def dihedral_box(box: tuple[float, float, float, float], k: int) -> tuple[float, float, float, float]:
    """Box under ``k`` quarter turns counter-clockwise, then a left-right mirror if ``k >= 4``."""
    x1, y1, x2, y2 = box
    for _ in range(k % 4):
        x1, y1, x2, y2 = y1, 1.0 - x2, y2, 1.0 - x1
    if k >= 4:
        x1, x2 = 1.0 - x2, 1.0 - x1
    return x1, y1, x2, y2


def dihedral_image(image: np.ndarray, k: int) -> np.ndarray:
    out = np.rot90(image, k % 4, axes=(0, 1))
    return np.ascontiguousarray(out[:, ::-1] if k >= 4 else out)


def augment_record(record: DatasetRecord, regions: Sequence[RegionAnnotation], k: int, image_size: int):
    """Apply one of the 8 square symmetries to the image and its sampled boxes; captions are unchanged."""
    if k == 0:
        return record, list(regions)
    image = dihedral_image(record.image(image_size), k)
    moved = [RegionAnnotation(clamp_box(dihedral_box(r.box.as_tuple(), k)), r.text, r.conf) for r in regions]
    return DatasetRecord(record.id, record.caption, None, image, record.regions), moved


def shift_image(image: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Translate by ``dx`` columns right and ``dy`` rows down, filling with zeros."""
    out = np.zeros_like(image)
    h, w = image.shape[:2]
    out[max(dy, 0) : h + min(dy, 0), max(dx, 0) : w + min(dx, 0)] = image[
        max(-dy, 0) : h + min(-dy, 0), max(-dx, 0) : w + min(-dx, 0)
    ]
    return out


def shift_box(box: tuple[float, float, float, float], mirror: bool, dx: int, dy: int, size: int):
    x1, y1, x2, y2 = box
    if mirror:
        x1, x2 = 1.0 - x2, 1.0 - x1
    return x1 + dx / size, y1 + dy / size, x2 + dx / size, y2 + dy / size


def shift_range(boxes: Sequence[tuple[float, float, float, float]], size: int) -> tuple[int, int, int, int]:
    """Integer (dx_min, dx_max, dy_min, dy_max) keeping all boxes inside the canvas."""
    if not boxes:
        return 0, 0, 0, 0
    lo_x, lo_y = min(b[0] for b in boxes), min(b[1] for b in boxes)
    hi_x, hi_y = max(b[2] for b in boxes), max(b[3] for b in boxes)
    return (-math.floor(lo_x * size + 1e-9), math.floor((1 - hi_x) * size + 1e-9),
            -math.floor(lo_y * size + 1e-9), math.floor((1 - hi_y) * size + 1e-9))


def shift_record(record: DatasetRecord, regions: Sequence[RegionAnnotation], rng: np.random.Generator, image_size: int):
    """Random mirror and translation of the image and its sampled boxes; captions are unchanged."""
    mirror = bool(rng.integers(2))
    boxes = [shift_box(r.box.as_tuple(), mirror, 0, 0, image_size) for r in record.regions or []]
    x0, x1, y0, y1 = shift_range(boxes, image_size)
    dx, dy = int(rng.integers(x0, x1 + 1)), int(rng.integers(y0, y1 + 1))
    image = record.image(image_size)
    image = shift_image(image[:, ::-1] if mirror else image, dx, dy)
    moved = [RegionAnnotation(clamp_box(shift_box(r.box.as_tuple(), mirror, dx, dy, image_size)), r.text, r.conf)
             for r in regions]
    return DatasetRecord(record.id, record.caption, None, image, record.regions), moved


def make_optimizer(model: CLOCModel, cfg: TrainConfig) -> torch.optim.AdamW:
    decay, no_decay = [], []
    for name, p in model.named_parameters():
        # gains, biases and the log-temperature are not decayed
        (no_decay if p.ndim < 2 or name == "log_temp" else decay).append(p)
    groups = [
        {"params": decay, "weight_decay": cfg.weight_decay},
        {"params": no_decay, "weight_decay": 0.0},
    ]
    return torch.optim.AdamW(groups, lr=0.0, betas=(cfg.beta1, cfg.beta2), eps=cfg.adam_eps)


@dataclass
class TrainState:
    step: int
    model: CLOCModel
    optimizer: torch.optim.AdamW
    rng: np.random.Generator
    train_cfg: TrainConfig
    loss_ema: float = 0.0
    loss_count: int = 0

    @property
    def model_cfg(self) -> ModelConfig:
        return self.model.cfg


def init_state(
    model_cfg: ModelConfig, train_cfg: TrainConfig, tokenizer: Tokenizer | None = None, dtype=torch.float32
) -> TrainState:
    torch.manual_seed(train_cfg.seed)
    model = CLOCModel(model_cfg, tokenizer or build_tokenizer()).to(dtype)
    return TrainState(0, model, make_optimizer(model, train_cfg), np.random.default_rng(train_cfg.seed), train_cfg)


def images_tensor(records: Sequence[DatasetRecord], image_size: int, dtype=torch.float32) -> torch.Tensor:
    return torch.from_numpy(np.stack([r.image(image_size) for r in records])).to(dtype)


def embed_batch(
    model: CLOCModel,
    records: Sequence[DatasetRecord],
    regions: Sequence[Sequence[RegionAnnotation]],
    extractor: str = "prompter",
    grounding: bool = True,
) -> BatchEmbeddings:
    """Forward pass for one mini-batch; the image encoder runs once per image."""
    dtype = model.log_temp.dtype
    tokens = model.encode_image_tokens(images_tensor(records, model.cfg.image_size, dtype))
    batch = BatchEmbeddings(
        image_emb=model.pool_project_image(tokens),
        text_emb=model.encode_texts([r.caption for r in records]),
        temperature=model.temperature,
        has_region_labels=torch.tensor([r.has_regions for r in records]),
    )
    idx = [i for i, regs in enumerate(regions) for _ in regs]
    if not idx:
        return batch
    flat = [reg for regs in regions for reg in regs]
    region_image = torch.tensor(idx)
    boxes = torch.tensor([reg.box.as_tuple() for reg in flat], dtype=dtype)
    region_tokens = tokens[region_image]
    batch.region_image = region_image
    batch.gt_boxes = boxes
    batch.region_text_emb = model.encode_texts([reg.text for reg in flat])
    batch.region_emb = model.regions(boxes, region_tokens, extractor)
    if grounding and extractor == "prompter":
        z = model.prompter.by_text(batch.region_text_emb, region_tokens)
        batch.pred_boxes = model.prompter.predict_box(z)
    return batch


def forward_losses(
    model: CLOCModel, records: Sequence[DatasetRecord], cfg: TrainConfig, rng: np.random.Generator
) -> LossBreakdown:
    regions = [sample_regions(r, cfg.max_regions, rng) for r in records]
    if not any(r.has_regions for r in records):
        regions = [[] for _ in records]
    if cfg.augment == "dihedral":
        ks = rng.integers(0, 8, size=len(records))
        pairs = [augment_record(r, regs, int(k), model.cfg.image_size) for r, regs, k in zip(records, regions, ks)]
        records = [p[0] for p in pairs]
        regions = [p[1] for p in pairs]
    elif cfg.augment == "shift":
        pairs = [shift_record(r, regs, rng, model.cfg.image_size) for r, regs in zip(records, regions)]
        records = [p[0] for p in pairs]
        regions = [p[1] for p in pairs]
    batch = embed_batch(model, records, regions, cfg.region_extractor, cfg.use_grounding)
    return total_loss(batch, cfg.filter_threshold)


def train_step(state: TrainState, records: Sequence[DatasetRecord]) -> tuple[TrainState, LossBreakdown]:
    cfg = state.train_cfg
    state.optimizer.zero_grad(set_to_none=True)
    losses = forward_losses(state.model, records, cfg, state.rng)
    values = {name: float(getattr(losses, name).detach()) for name in ("l_clip", "l_cloc", "l_grounding", "total")}
    for name, value in values.items():
        if not math.isfinite(value):
            raise NonFiniteLoss(name, value)
    losses.total.backward()
    lr = lr_at(state.step + 1, cfg)
    for group in state.optimizer.param_groups:
        group["lr"] = lr
    state.optimizer.step()
    state.step += 1
    total = values["total"]
    state.loss_count += 1
    state.loss_ema = total if state.loss_count == 1 else 0.98 * state.loss_ema + 0.02 * total
    return state, losses


def next_batch(state: TrainState, corpus: Sequence[DatasetRecord]) -> list[DatasetRecord]:
    n = state.train_cfg.batch_size
    if n > len(corpus):
        raise ValueError(f"batch_size {n} exceeds corpus size {len(corpus)}")
    idx = state.rng.choice(len(corpus), size=n, replace=False)
    return [corpus[i] for i in idx]


def train(
    state: TrainState,
    corpus: Sequence[DatasetRecord],
    steps: int | None = None,
    callback: Callable[[TrainState, LossBreakdown], None] | None = None,
) -> TrainState:
    remaining = state.train_cfg.total_steps - state.step
    steps = remaining if steps is None else min(steps, remaining)
    for _ in range(steps):
        state, losses = train_step(state, next_batch(state, corpus))
        if callback is not None:
            callback(state, losses)
        if state.step % 100 == 0:
            log.info("step %d total %.4f ema %.4f", state.step, float(losses.total.detach()), state.loss_ema)
    return state


# checkpoint layout: magic | u32 version | u64 manifest length | manifest json | tensor payload


def _state_tensors(state: TrainState) -> dict[str, torch.Tensor]:
    out = {}
    params = dict(state.model.named_parameters())
    for name, p in params.items():
        out[f"param/{name}"] = p.detach()
    for name, p in params.items():
        st = state.optimizer.state.get(p)
        if not st:
            continue
        for key in ("step", "exp_avg", "exp_avg_sq"):
            out[f"adam/{key}/{name}"] = torch.as_tensor(st[key]).detach()
    return out


def save_checkpoint(state: TrainState, path: str | Path) -> None:
    tensors = _state_tensors(state)
    entries, chunks, offset = [], [], 0
    for name, t in tensors.items():
        arr = t.contiguous().numpy()
        raw = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
        entries.append({"name": name, "dtype": str(arr.dtype), "shape": list(arr.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    manifest = {
        "tensors": entries,
        "payload_bytes": len(payload),
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
        "meta": {
            "step": state.step,
            "model_cfg": asdict(state.model.cfg),
            "train_cfg": asdict(state.train_cfg),
            "vocab": state.model.tokenizer.vocab,
            "rng": state.rng.bit_generator.state,
            "loss_ema": state.loss_ema,
            "loss_count": state.loss_count,
        },
    }
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(blob)))
        fh.write(blob)
        fh.write(payload)


def _read_checkpoint(path: str | Path) -> tuple[dict, dict[str, torch.Tensor]]:
    data = Path(path).read_bytes()
    if len(data) < 4 or data[:4] != MAGIC:
        raise VersionMismatch(f"{path} is not a checkpoint (bad magic)")
    if len(data) < 16:
        raise ChecksumMismatch(f"{path} is truncated")
    version, mlen = struct.unpack("<IQ", data[4:16])
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"checkpoint format version {version}, expected {FORMAT_VERSION}")
    try:
        manifest = json.loads(data[16 : 16 + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise ChecksumMismatch(f"{path}: manifest unreadable (truncated?)") from None
    payload = data[16 + mlen :]
    if len(payload) != manifest["payload_bytes"] or hashlib.sha256(payload).hexdigest() != manifest["payload_sha256"]:
        raise ChecksumMismatch(f"{path}: payload checksum mismatch")
    tensors = {}
    for e in manifest["tensors"]:
        dt = np.dtype(e["dtype"]).newbyteorder("<")
        count = int(np.prod(e["shape"], dtype=np.int64))
        arr = np.frombuffer(payload, dtype=dt, count=count, offset=e["offset"]).reshape(e["shape"])
        tensors[e["name"]] = torch.from_numpy(arr.astype(arr.dtype.newbyteorder("="), copy=True))
    return manifest["meta"], tensors


def load_checkpoint(path: str | Path) -> TrainState:
    meta, tensors = _read_checkpoint(path)
    model_cfg = ModelConfig(**meta["model_cfg"])
    train_cfg = TrainConfig(**meta["train_cfg"])
    model = CLOCModel(model_cfg, Tokenizer(meta["vocab"][4:]))
    params = dict(model.named_parameters())
    dtype = tensors[f"param/{next(iter(params))}"].dtype
    model.to(dtype)
    with torch.no_grad():
        for name, p in model.named_parameters():
            p.copy_(tensors[f"param/{name}"])
    opt = make_optimizer(model, train_cfg)
    for name, p in model.named_parameters():
        if f"adam/step/{name}" in tensors:
            opt.state[p] = {
                "step": tensors[f"adam/step/{name}"],
                "exp_avg": tensors[f"adam/exp_avg/{name}"],
                "exp_avg_sq": tensors[f"adam/exp_avg_sq/{name}"],
            }
    rng = np.random.default_rng()
    rng.bit_generator.state = meta["rng"]
    return TrainState(meta["step"], model, opt, rng, train_cfg, meta["loss_ema"], meta["loss_count"])
