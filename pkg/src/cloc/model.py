"""The full model: dual encoder, learnable temperature, Prompter and RoI head."""

from __future__ import annotations

import math
from typing import Sequence

import torch
from torch import nn

from .encoders import ImageEncoder, ModelConfig, TextEncoder, init_weights
from .prompter import Prompter, RoIHead
from .tokenizer import Tokenizer


class CLOCModel(nn.Module):
    def __init__(self, cfg: ModelConfig, tokenizer: Tokenizer):
        super().__init__()
        if len(tokenizer) > cfg.vocab_size:
            raise ValueError(f"tokenizer has {len(tokenizer)} words but vocab_size={cfg.vocab_size}")
        self.cfg = cfg
        self.tokenizer = tokenizer
        self.image_encoder = ImageEncoder(cfg)
        self.text_encoder = TextEncoder(cfg)
        self.prompter = Prompter(cfg)
        self.roi_head = RoIHead(cfg)
        self.log_temp = nn.Parameter(torch.tensor(math.log(cfg.init_temperature)))
        self.apply(init_weights)
        # counts images passed through the ViT; used to check token reuse across prompts
        self.images_encoded = 0

    @property
    def temperature(self) -> torch.Tensor:
        return self.log_temp.exp()

    def encode_image_tokens(self, images: torch.Tensor) -> torch.Tensor:
        self.images_encoded += images.shape[0]
        return self.image_encoder.tokens(images.to(self.log_temp.dtype))

    def pool_project_image(self, tokens: torch.Tensor) -> torch.Tensor:
        return self.image_encoder.embed(tokens)

    def encode_texts(self, texts: Sequence[str]) -> torch.Tensor:
        ids, pad = self.tokenizer.batch(texts, self.cfg.max_text_len)
        return self.text_encoder(ids, pad)

    def regions(self, boxes: torch.Tensor, tokens: torch.Tensor, extractor: str = "prompter") -> torch.Tensor:
        if extractor == "prompter":
            return self.prompter.by_box(boxes, tokens)
        if extractor == "roi_align":
            return self.roi_head(boxes, tokens)
        raise ValueError(f"unknown region extractor {extractor!r}")


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
