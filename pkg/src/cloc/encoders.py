"""Toy dual encoder: a patch transformer for images and a token transformer for text."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import ShapeMismatch


@dataclass
class ModelConfig:
    image_size: int = 32
    patch_size: int = 8
    d_v: int = 128
    n_layers: int = 2
    n_heads: int = 4
    d_e: int = 64
    vocab_size: int = 128
    max_text_len: int = 48
    init_temperature: float = 0.07
    mlp_ratio: int = 4
    box_head_hidden: int = 128
    # "all": average prompt and image tokens; "prompt": prompt tokens only
    prompter_pool: str = "prompt"

    def __post_init__(self):
        if self.image_size % self.patch_size:
            raise ValueError("image_size must be divisible by patch_size")
        if self.d_v % self.n_heads:
            raise ValueError("d_v must be divisible by n_heads")
        if self.max_text_len > 77:
            raise ValueError("max_text_len must not exceed 77")
        if self.prompter_pool not in ("all", "prompt"):
            raise ValueError(f"unknown prompter_pool {self.prompter_pool!r}")

    @property
    def grid_size(self) -> int:
        return self.image_size // self.patch_size

    @property
    def n_patches(self) -> int:
        return self.grid_size**2


def init_weights(module: nn.Module) -> None:
    if isinstance(module, nn.Linear):
        nn.init.trunc_normal_(module.weight, std=0.02)
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, nn.Embedding):
        nn.init.trunc_normal_(module.weight, std=0.02)
    elif isinstance(module, nn.LayerNorm):
        nn.init.ones_(module.weight)
        nn.init.zeros_(module.bias)


def l2_normalize(x: torch.Tensor) -> torch.Tensor:
    return x / x.norm(dim=-1, keepdim=True)


class SelfAttention(nn.Module):
    def __init__(self, dim: int, n_heads: int):
        super().__init__()
        self.n_heads = n_heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.out = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor, pad_mask: torch.Tensor | None = None) -> torch.Tensor:
        b, n, d = x.shape
        h = self.n_heads
        q, k, v = self.qkv(x).reshape(b, n, 3, h, d // h).permute(2, 0, 3, 1, 4)
        scores = q @ k.transpose(-1, -2) / math.sqrt(d // h)
        if pad_mask is not None:
            scores = scores.masked_fill(pad_mask[:, None, None, :], float("-inf"))
        attn = scores.softmax(dim=-1)
        y = (attn @ v).transpose(1, 2).reshape(b, n, d)
        return self.out(y)


class Block(nn.Module):
    """Pre-norm transformer encoder block."""

    def __init__(self, dim: int, n_heads: int, mlp_ratio: int = 4):
        super().__init__()
        self.ln1 = nn.LayerNorm(dim)
        self.attn = SelfAttention(dim, n_heads)
        self.ln2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(
            nn.Linear(dim, mlp_ratio * dim), nn.GELU(), nn.Linear(mlp_ratio * dim, dim)
        )

    def forward(self, x: torch.Tensor, pad_mask: torch.Tensor | None = None) -> torch.Tensor:
        x = x + self.attn(self.ln1(x), pad_mask)
        return x + self.mlp(self.ln2(x))


class AttentionPool(nn.Module):
    """Single learned query attending over tokens, followed by a linear projection."""

    def __init__(self, dim: int, n_heads: int, out_dim: int):
        super().__init__()
        self.n_heads = n_heads
        self.query = nn.Parameter(torch.empty(dim))
        self.kv = nn.Linear(dim, 2 * dim)
        self.q = nn.Linear(dim, dim)
        self.proj = nn.Linear(dim, out_dim)
        nn.init.trunc_normal_(self.query, std=0.02)

    def forward(self, x: torch.Tensor, pad_mask: torch.Tensor | None = None) -> torch.Tensor:
        b, n, d = x.shape
        h = self.n_heads
        q = self.q(self.query).reshape(h, 1, d // h)
        k, v = self.kv(x).reshape(b, n, 2, h, d // h).permute(2, 0, 3, 1, 4)
        scores = (q @ k.transpose(-1, -2)) / math.sqrt(d // h)
        if pad_mask is not None:
            scores = scores.masked_fill(pad_mask[:, None, None, :], float("-inf"))
        pooled = (scores.softmax(dim=-1) @ v).reshape(b, d)
        return self.proj(pooled)


def patchify(images: torch.Tensor, patch_size: int) -> torch.Tensor:
    """(B, H, W, C) -> (B, n_patches, patch_size * patch_size * C), row-major patch order."""
    b, hgt, wid, c = images.shape
    g_h, g_w = hgt // patch_size, wid // patch_size
    x = images.reshape(b, g_h, patch_size, g_w, patch_size, c)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(b, g_h * g_w, patch_size * patch_size * c)


class ImageEncoder(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        d = cfg.d_v
        self.patch_embed = nn.Linear(3 * cfg.patch_size**2, d, bias=False)
        self.cls_token = nn.Parameter(torch.empty(d))
        self.pos_embed = nn.Parameter(torch.empty(cfg.n_patches + 1, d))
        self.ln_pre = nn.LayerNorm(d)
        self.blocks = nn.ModuleList(Block(d, cfg.n_heads, cfg.mlp_ratio) for _ in range(cfg.n_layers))
        self.ln_post = nn.LayerNorm(d)
        self.pool = AttentionPool(d, cfg.n_heads, cfg.d_e)
        nn.init.trunc_normal_(self.cls_token, std=0.02)
        nn.init.trunc_normal_(self.pos_embed, std=0.02)

    def tokens(self, images: torch.Tensor) -> torch.Tensor:
        """Unpooled token grid (B, n_patches + 1, d_v); row 0 is the summary token."""
        s = self.cfg.image_size
        if images.dim() != 4 or tuple(images.shape[1:]) != (s, s, 3):
            raise ShapeMismatch(f"expected (B, {s}, {s}, 3) images, got {tuple(images.shape)}")
        x = self.patch_embed(patchify(images, self.cfg.patch_size))
        cls = self.cls_token.expand(x.shape[0], 1, -1)
        x = torch.cat([cls, x], dim=1) + self.pos_embed
        x = self.ln_pre(x)
        for blk in self.blocks:
            x = blk(x)
        return self.ln_post(x)

    def embed(self, tokens: torch.Tensor) -> torch.Tensor:
        return l2_normalize(self.pool(tokens))


class TextEncoder(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        d = cfg.d_v
        self.token_embed = nn.Embedding(cfg.vocab_size, d)
        self.pos_embed = nn.Parameter(torch.empty(cfg.max_text_len, d))
        self.blocks = nn.ModuleList(Block(d, cfg.n_heads, cfg.mlp_ratio) for _ in range(cfg.n_layers))
        self.ln_final = nn.LayerNorm(d)
        self.pool = AttentionPool(d, cfg.n_heads, cfg.d_e)
        nn.init.trunc_normal_(self.pos_embed, std=0.02)

    def forward(self, ids: torch.Tensor, pad_mask: torch.Tensor) -> torch.Tensor:
        x = self.token_embed(ids) + self.pos_embed[: ids.shape[1]]
        for blk in self.blocks:
            x = blk(x, pad_mask)
        x = self.ln_final(x)
        return l2_normalize(self.pool(x, pad_mask))


def resize_with_pad(image: np.ndarray, size: int) -> np.ndarray:
    """Resize the long side to ``size`` (nearest neighbour) and zero-pad to a square."""
    h, w = image.shape[:2]
    scale = size / max(h, w)
    nh, nw = max(1, round(h * scale)), max(1, round(w * scale))
    rows = np.minimum((np.arange(nh) / scale).astype(int), h - 1)
    cols = np.minimum((np.arange(nw) / scale).astype(int), w - 1)
    resized = image[rows][:, cols]
    out = np.zeros((size, size) + image.shape[2:], dtype=image.dtype)
    top, left = (size - nh) // 2, (size - nw) // 2
    out[top : top + nh, left : left + nw] = resized
    return out
