"""Zero-shot evaluation: region recognition, region/image retrieval and text grounding."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from typing import Sequence

import torch

from .errors import UnknownClass
from .geometry import clamp_box, iou, validate_box
from .model import CLOCModel
from .synthdata import ALL_PHRASES, DatasetRecord
from .trainer import images_tensor

CHUNK = 128


@dataclass(frozen=True)
class EvalReport:
    task: str
    metric: str
    value: float
    split_size: int
    config_hash: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def config_hash(model: CLOCModel, **params) -> str:
    payload = {"model_cfg": asdict(model.cfg), "vocab": model.tokenizer.vocab, **params}
    return hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()[:12]


def format_table(reports: Sequence[EvalReport]) -> str:
    rows = [("task", "metric", "value", "n", "config")]
    rows += [(r.task, r.metric, f"{r.value:.4f}", str(r.split_size), r.config_hash) for r in reports]
    widths = [max(len(row[i]) for row in rows) for i in range(5)]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in rows)


@torch.no_grad()
def image_tokens(model: CLOCModel, records: Sequence[DatasetRecord]) -> torch.Tensor:
    dtype = model.log_temp.dtype
    parts = [
        model.encode_image_tokens(images_tensor(records[i : i + CHUNK], model.cfg.image_size, dtype))
        for i in range(0, len(records), CHUNK)
    ]
    return torch.cat(parts)


@torch.no_grad()
def encode_texts(model: CLOCModel, texts: Sequence[str]) -> torch.Tensor:
    return torch.cat([model.encode_texts(texts[i : i + CHUNK]) for i in range(0, len(texts), CHUNK)])


@torch.no_grad()
def region_embeddings(
    model: CLOCModel, records: Sequence[DatasetRecord], extractor: str = "prompter"
) -> tuple[torch.Tensor, list[str], torch.Tensor, torch.Tensor]:
    """Embeddings, captions, boxes and image indices for every annotated region."""
    tokens = image_tokens(model, records)
    idx, texts, boxes = [], [], []
    for i, rec in enumerate(records):
        for reg in rec.regions or []:
            idx.append(i)
            texts.append(reg.text)
            boxes.append(reg.box.as_tuple())
    index = torch.tensor(idx, dtype=torch.long)
    box_t = torch.tensor(boxes, dtype=tokens.dtype).reshape(-1, 4)
    embs = [
        model.regions(box_t[s : s + CHUNK], tokens[index[s : s + CHUNK]], extractor)
        for s in range(0, len(idx), CHUNK)
    ]
    emb = torch.cat(embs) if embs else torch.zeros(0, model.cfg.d_e, dtype=tokens.dtype)
    return emb, texts, box_t, index


def region_classify(
    model: CLOCModel,
    records: Sequence[DatasetRecord],
    class_names: Sequence[str] = ALL_PHRASES,
    extractor: str = "prompter",
) -> EvalReport:
    """Macro-averaged accuracy of nearest-class-name prediction for each labeled box."""
    class_index = {c: i for i, c in enumerate(class_names)}
    emb, texts, _, _ = region_embeddings(model, records, extractor)
    for t in texts:
        if t not in class_index:
            raise UnknownClass(f"region label {t!r} not among the {len(class_names)} classes")
    labels = torch.tensor([class_index[t] for t in texts], dtype=torch.long)
    class_emb = encode_texts(model, list(class_names)).to(emb.dtype)
    pred = (emb @ class_emb.T).argmax(dim=1)
    per_class = [
        (pred[labels == c] == c).double().mean().item() for c in range(len(class_names)) if (labels == c).any()
    ]
    value = sum(per_class) / len(per_class) if per_class else 0.0
    h = config_hash(model, task="region-classify", extractor=extractor, classes=list(class_names))
    return EvalReport("region-classify", "mAcc", value, len(texts), h)


def _recall_at_k(sim: torch.Tensor, query_keys: Sequence[str], gallery_keys: Sequence[str], k: int, dedupe: bool) -> float:
    """Fraction of queries whose partner (same index, or same caption if ``dedupe``) is in the top k."""
    n_q, n_g = sim.shape
    k = min(k, n_g)
    top = sim.topk(k, dim=1).indices
    hits = 0
    for q in range(n_q):
        cand = top[q].tolist()
        if dedupe:
            hits += any(gallery_keys[g] == query_keys[q] for g in cand)
        else:
            hits += q in cand
    return hits / n_q if n_q else 0.0


def region_retrieve(
    model: CLOCModel,
    records: Sequence[DatasetRecord],
    k: int = 10,
    extractor: str = "prompter",
    count_duplicates: bool = True,
) -> list[EvalReport]:
    emb, texts, _, _ = region_embeddings(model, records, extractor)
    text_emb = encode_texts(model, texts).to(emb.dtype)
    sim = emb @ text_emb.T
    h = config_hash(model, task="region-retrieve", k=k, extractor=extractor, dup=count_duplicates)
    r2t = _recall_at_k(sim, texts, texts, k, count_duplicates)
    t2r = _recall_at_k(sim.T, texts, texts, k, count_duplicates)
    return [
        EvalReport("region-retrieve-r2t", f"recall@{k}", r2t, len(texts), h),
        EvalReport("region-retrieve-t2r", f"recall@{k}", t2r, len(texts), h),
    ]


def image_retrieve(
    model: CLOCModel, records: Sequence[DatasetRecord], k: int = 1, count_duplicates: bool = True
) -> list[EvalReport]:
    with torch.no_grad():
        img = model.pool_project_image(image_tokens(model, records))
    captions = [r.caption for r in records]
    txt = encode_texts(model, captions).to(img.dtype)
    sim = img @ txt.T
    h = config_hash(model, task="image-retrieve", k=k, dup=count_duplicates)
    return [
        EvalReport("image-retrieve-i2t", f"recall@{k}", _recall_at_k(sim, captions, captions, k, count_duplicates), len(records), h),
        EvalReport("image-retrieve-t2i", f"recall@{k}", _recall_at_k(sim.T, captions, captions, k, count_duplicates), len(records), h),
    ]


@torch.no_grad()
def predicted_boxes(model: CLOCModel, records: Sequence[DatasetRecord]) -> tuple[torch.Tensor, torch.Tensor]:
    """Raw head outputs and ground-truth boxes for every region, prompted by its caption."""
    tokens = image_tokens(model, records)
    idx, texts, boxes = [], [], []
    for i, rec in enumerate(records):
        for reg in rec.regions or []:
            idx.append(i)
            texts.append(reg.text)
            boxes.append(reg.box.as_tuple())
    index = torch.tensor(idx, dtype=torch.long)
    text_emb = encode_texts(model, texts).to(tokens.dtype)
    preds = []
    for s in range(0, len(idx), CHUNK):
        z = model.prompter.by_text(text_emb[s : s + CHUNK], tokens[index[s : s + CHUNK]])
        preds.append(model.prompter.predict_box(z))
    pred = torch.cat(preds) if preds else torch.zeros(0, 4)
    return pred, torch.tensor(boxes, dtype=torch.float64).reshape(-1, 4)


def grounding_accuracy(pred: torch.Tensor, gt: torch.Tensor, iou_threshold: float = 0.5) -> float:
    if len(gt) == 0:
        return 0.0
    correct = 0
    for p, g in zip(pred.tolist(), gt.tolist()):
        correct += iou(clamp_box(p), validate_box(g)) >= iou_threshold
    return correct / len(gt)


def grounding_eval(model: CLOCModel, records: Sequence[DatasetRecord], iou_threshold: float = 0.5) -> EvalReport:
    pred, gt = predicted_boxes(model, records)
    h = config_hash(model, task="grounding", iou_threshold=iou_threshold)
    return EvalReport("grounding", f"acc@iou{iou_threshold:g}", grounding_accuracy(pred, gt, iou_threshold), len(gt), h)
