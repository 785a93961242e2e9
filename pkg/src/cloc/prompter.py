"""Promptable region extraction on top of the unpooled image tokens.

A box is turned into two sinusoidal corner tokens, a text embedding into one
adapter token; either is prepended to the image tokens and passed through a
single one-head transformer layer, averaged and projected into the joint space.
The RoI-align head is the ablation that replaces all of this with bilinear
pooling over the patch lattice.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .encoders import Block, ModelConfig, l2_normalize
from .geometry import BoundingBox, box_prompt_tokens


@dataclass
class RegionEmbedding:
    embedding: torch.Tensor
    image_id: str | int | None
    kind: str  # "box" | "text" | "roi"
    payload: object = None


class Prompter(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        d = cfg.d_v
        self.cfg = cfg
        # learned slot offsets for corner-0, corner-1 and text prompt tokens
        self.prompt_embed = nn.Parameter(torch.zeros(3, d))
        self.layer = Block(d, n_heads=1, mlp_ratio=cfg.mlp_ratio)
        self.ln = nn.LayerNorm(d)
        self.proj = nn.Linear(d, cfg.d_e)
        self.text_adapter = nn.Linear(cfg.d_e, d, bias=False)
        self.box_head = nn.Sequential(
            nn.Linear(cfg.d_e, cfg.box_head_hidden), nn.GELU(), nn.Linear(cfg.box_head_hidden, 4)
        )

    def _encode(self, prompts: torch.Tensor, tokens: torch.Tensor) -> torch.Tensor:
        n_prompt = prompts.shape[1]
        x = self.layer(torch.cat([prompts, tokens], dim=1))
        x = self.ln(x)
        pooled = x[:, :n_prompt].mean(dim=1) if self.cfg.prompter_pool == "prompt" else x.mean(dim=1)
        return l2_normalize(self.proj(pooled))

    def by_box(self, boxes: torch.Tensor, tokens: torch.Tensor) -> torch.Tensor:
        """boxes (R, 4), tokens (R, T, d_v) -> unit region embeddings (R, d_e)."""
        prompts = box_prompt_tokens(boxes.to(tokens.dtype), self.cfg.d_v) + self.prompt_embed[:2]
        return self._encode(prompts, tokens)

    def by_text(self, text_emb: torch.Tensor, tokens: torch.Tensor) -> torch.Tensor:
        """text_emb (R, d_e), tokens (R, T, d_v) -> text-grounded embeddings (R, d_e)."""
        prompts = (self.text_adapter(text_emb) + self.prompt_embed[2]).unsqueeze(1)
        return self._encode(prompts, tokens)

    def predict_box(self, z: torch.Tensor) -> torch.Tensor:
        return self.box_head(z)


def roi_align_points(boxes: torch.Tensor, grid: int, bins: int = 2) -> tuple[torch.Tensor, torch.Tensor]:
    """Sample-point lattice coordinates (R, bins*bins) for x and y, one sample at each bin centre.

    Lattice cell k covers [k/grid, (k+1)/grid]; its centre sits at coordinate k.
    """
    offsets = (torch.arange(bins, dtype=boxes.dtype) + 0.5) / bins
    x1, y1, x2, y2 = boxes.unbind(-1)
    xs = x1[:, None] + offsets * (x2 - x1)[:, None]
    ys = y1[:, None] + offsets * (y2 - y1)[:, None]
    gx = (xs * grid - 0.5)[:, None, :].expand(-1, bins, -1)
    gy = (ys * grid - 0.5)[:, :, None].expand(-1, -1, bins)
    return gx.reshape(len(boxes), -1), gy.reshape(len(boxes), -1)


def bilinear_sample(lattice: torch.Tensor, gx: torch.Tensor, gy: torch.Tensor) -> torch.Tensor:
    """lattice (R, G, G, D), coords (R, S) -> (R, S, D); coordinates clamped to the lattice."""
    r, g, _, d = lattice.shape
    gx = gx.clamp(0, g - 1)
    gy = gy.clamp(0, g - 1)
    x0 = gx.floor().long().clamp(max=g - 2) if g > 1 else gx.floor().long()
    y0 = gy.floor().long().clamp(max=g - 2) if g > 1 else gy.floor().long()
    x1 = (x0 + 1).clamp(max=g - 1)
    y1 = (y0 + 1).clamp(max=g - 1)
    wx = (gx - x0).unsqueeze(-1)
    wy = (gy - y0).unsqueeze(-1)
    flat = lattice.reshape(r, g * g, d)

    def at(yi, xi):
        idx = (yi * g + xi).unsqueeze(-1).expand(-1, -1, d)
        return flat.gather(1, idx)

    top = at(y0, x0) * (1 - wx) + at(y0, x1) * wx
    bottom = at(y1, x0) * (1 - wx) + at(y1, x1) * wx
    return top * (1 - wy) + bottom * wy


class RoIHead(nn.Module):
    def __init__(self, cfg: ModelConfig, bins: int = 2):
        super().__init__()
        self.cfg = cfg
        self.bins = bins
        self.proj = nn.Linear(cfg.d_v, cfg.d_e)

    def pooled(self, boxes: torch.Tensor, tokens: torch.Tensor) -> torch.Tensor:
        g = self.cfg.grid_size
        lattice = tokens[:, 1:].reshape(len(tokens), g, g, -1)
        gx, gy = roi_align_points(boxes.to(tokens.dtype), g, self.bins)
        return bilinear_sample(lattice, gx, gy).mean(dim=1)

    def forward(self, boxes: torch.Tensor, tokens: torch.Tensor) -> torch.Tensor:
        return l2_normalize(self.proj(self.pooled(boxes, tokens)))


def _single(tokens: torch.Tensor) -> torch.Tensor:
    return tokens.unsqueeze(0) if tokens.dim() == 2 else tokens


def extract_region_by_box(box: BoundingBox, tokens: torch.Tensor, prompter: Prompter, image_id=None) -> RegionEmbedding:
    tokens = _single(tokens)
    b = torch.tensor([box.as_tuple()], dtype=tokens.dtype)
    return RegionEmbedding(prompter.by_box(b, tokens)[0], image_id, "box", box)


def extract_region_by_text(text_emb: torch.Tensor, tokens: torch.Tensor, prompter: Prompter, image_id=None) -> RegionEmbedding:
    tokens = _single(tokens)
    return RegionEmbedding(prompter.by_text(text_emb.reshape(1, -1), tokens)[0], image_id, "text", None)


def predict_box(z: RegionEmbedding, prompter: Prompter) -> tuple[float, float, float, float]:
    return tuple(prompter.predict_box(z.embedding).detach().tolist())


def extract_region_roi_align(box: BoundingBox, tokens: torch.Tensor, head: RoIHead, image_id=None) -> RegionEmbedding:
    tokens = _single(tokens)
    b = torch.tensor([box.as_tuple()], dtype=tokens.dtype)
    return RegionEmbedding(head(b, tokens)[0], image_id, "roi", box)
