"""Image-text and region-text contrastive losses, box grounding loss and their weighted sum."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .errors import EmptyBatch, NoRegions

FILTER_THRESHOLD = 0.9


@dataclass
class BatchEmbeddings:
    """Embeddings for one mini-batch.

    Regions are flattened across images; ``region_image[r]`` is the index of the
    image region ``r`` came from. All embeddings are expected to be unit-norm.
    """

    image_emb: torch.Tensor
    text_emb: torch.Tensor
    temperature: torch.Tensor
    has_region_labels: torch.Tensor
    region_emb: torch.Tensor | None = None
    region_text_emb: torch.Tensor | None = None
    region_image: torch.Tensor | None = None
    gt_boxes: torch.Tensor | None = None
    pred_boxes: torch.Tensor | None = None

    @property
    def n_regions(self) -> int:
        return 0 if self.region_emb is None else int(self.region_emb.shape[0])


@dataclass
class LossBreakdown:
    l_clip: torch.Tensor
    l_cloc: torch.Tensor
    l_grounding: torch.Tensor
    lambda_effective: float
    total: torch.Tensor

    def as_dict(self) -> dict[str, float]:
        return {
            "l_clip": float(self.l_clip.detach()),
            "l_cloc": float(self.l_cloc.detach()),
            "l_grounding": float(self.l_grounding.detach()),
            "lambda_effective": float(self.lambda_effective),
            "total": float(self.total.detach()),
        }


def _symmetric_ce(logits: torch.Tensor) -> torch.Tensor:
    target = torch.arange(logits.shape[0])
    return 0.5 * (F.cross_entropy(logits, target) + F.cross_entropy(logits.T, target))


def clip_loss(batch: BatchEmbeddings) -> torch.Tensor:
    if batch.image_emb.shape[0] == 0:
        raise EmptyBatch("clip_loss needs at least one image")
    logits = batch.image_emb @ batch.text_emb.T / batch.temperature
    return _symmetric_ce(logits)


@torch.no_grad()
def build_negative_mask(region_text_emb: torch.Tensor, threshold: float = FILTER_THRESHOLD) -> torch.Tensor:
    """True where a (region, text) pair is dropped from the contrastive denominators.

    A pair is dropped when the two captions have cosine similarity above
    ``threshold``; the diagonal (the positive pairs) is never dropped.
    """
    t = region_text_emb.detach()
    mask = (t @ t.T) > threshold
    mask.fill_diagonal_(False)
    return mask


def cloc_loss(batch: BatchEmbeddings, mask: torch.Tensor | None = None) -> torch.Tensor:
    if batch.n_regions == 0:
        raise NoRegions("cloc_loss needs at least one region in the batch")
    logits = batch.region_emb @ batch.region_text_emb.T / batch.temperature
    if mask is not None:
        logits = logits.masked_fill(mask, float("-inf"))
    return _symmetric_ce(logits)


def grounding_loss(batch: BatchEmbeddings, predicted_boxes: torch.Tensor | None = None) -> torch.Tensor:
    pred = batch.pred_boxes if predicted_boxes is None else predicted_boxes
    if pred is None or pred.shape[0] == 0:
        raise NoRegions("grounding_loss needs at least one predicted box")
    dist = torch.linalg.vector_norm(batch.gt_boxes.to(pred.dtype) - pred, dim=-1)
    return dist.sum() / (4 * pred.shape[0])


def total_loss(
    batch: BatchEmbeddings,
    threshold: float | None = FILTER_THRESHOLD,
    mask: torch.Tensor | None = None,
) -> LossBreakdown:
    """CLIP loss plus the label-fraction-weighted region losses.

    ``threshold=None`` disables negative filtering. A precomputed ``mask``
    takes precedence over ``threshold``.
    """
    l_clip = clip_loss(batch)
    n_images = batch.image_emb.shape[0]
    lam = float(batch.has_region_labels.sum()) / n_images
    zero = torch.zeros((), dtype=l_clip.dtype)
    if lam == 0.0 or batch.n_regions == 0:
        return LossBreakdown(l_clip, zero, zero, 0.0, l_clip)
    if mask is None and threshold is not None:
        mask = build_negative_mask(batch.region_text_emb, threshold)
    l_cloc = cloc_loss(batch, mask)
    l_ground = grounding_loss(batch) if batch.pred_boxes is not None else zero
    total = l_clip + lam * (l_cloc + l_ground)
    return LossBreakdown(l_clip, l_cloc, l_ground, lam, total)
