"""Normalized corner-form boxes, IoU and sinusoidal box prompts."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import torch

from .errors import CoordinateOutOfRange, DegenerateBox, OddDimension

FREQ_BASE = 1.0e4


@dataclass(frozen=True)
class BoundingBox:
    """Box in normalized image coordinates, (x1, y1) top-left, (x2, y2) bottom-right."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        _check_corners(self.x1, self.y1, self.x2, self.y2)

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)

    def as_list(self) -> list[float]:
        return list(self.as_tuple())


def _check_corners(x1: float, y1: float, x2: float, y2: float) -> None:
    for v in (x1, y1, x2, y2):
        if not math.isfinite(v) or v < 0.0 or v > 1.0:
            raise CoordinateOutOfRange(f"coordinate {v!r} outside [0, 1]")
    if x2 < x1 or y2 < y1:
        raise DegenerateBox(f"corners out of order: {(x1, y1, x2, y2)}")


def validate_box(raw: Sequence[float]) -> BoundingBox:
    values = [float(v) for v in raw]
    if len(values) != 4:
        raise ValueError(f"expected 4 coordinates, got {len(values)}")
    return BoundingBox(*values)


def clamp_box(raw: Iterable[float]) -> BoundingBox:
    """Clip to [0, 1] and reorder corners so any 4 finite numbers give a valid box."""
    x1, y1, x2, y2 = (min(max(float(v), 0.0), 1.0) for v in raw)
    return validate_box((min(x1, x2), min(y1, y2), max(x1, x2), max(y1, y2)))


def iou(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    inter = max(iw, 0.0) * max(ih, 0.0)
    union = a.area + b.area - inter
    if union <= 0.0:
        # both boxes have zero area
        return 1.0 if a == b else 0.0
    return inter / union


def intersection_over_min(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    inter = max(iw, 0.0) * max(ih, 0.0)
    smaller = min(a.area, b.area)
    return inter / smaller if smaller > 0 else 0.0


def _frequencies(n_dims: int, dtype: torch.dtype) -> torch.Tensor:
    n_freq = (n_dims + 1) // 2
    if n_freq == 1:
        return torch.ones(1, dtype=dtype)
    exponents = torch.arange(n_freq, dtype=dtype) / (n_freq - 1)
    return FREQ_BASE**exponents


def sinusoid(values: torch.Tensor, n_dims: int) -> torch.Tensor:
    """Encode each scalar as interleaved [sin(v w0), cos(v w0), sin(v w1), ...] of length n_dims."""
    freqs = _frequencies(n_dims, values.dtype)
    angles = values.unsqueeze(-1) * freqs
    enc = torch.stack([torch.sin(angles), torch.cos(angles)], dim=-1).flatten(-2)
    return enc[..., :n_dims]


def box_prompt_tokens(boxes: torch.Tensor, d_v: int) -> torch.Tensor:
    """Map boxes of shape (..., 4) to corner tokens of shape (..., 2, d_v)."""
    if d_v % 2 != 0:
        raise OddDimension(f"d_v={d_v} is not divisible by 2")
    if d_v < 4:
        raise ValueError(f"d_v={d_v} must be at least 4")
    half = d_v // 2
    corners = boxes.reshape(*boxes.shape[:-1], 2, 2)
    enc = sinusoid(corners, half)
    return enc.flatten(-2)


def encode_box_prompt(box: BoundingBox, d_v: int) -> torch.Tensor:
    return box_prompt_tokens(torch.tensor(box.as_tuple(), dtype=torch.float64), d_v)
