"""The desk-scale overfit experiment: annotate a small corpus, train, evaluate on held-out scenes."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .encoders import ModelConfig
from .evaluate import grounding_eval, image_retrieve, region_classify, region_retrieve
from .synthdata import generate_corpus, take_regions
from .trainer import TrainConfig, build_tokenizer, init_state, save_checkpoint, train
from .vesl import AnnotationSummary, annotate_records

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OverfitSetup:
    train_count: int = 256
    train_seed: int = 0
    eval_seed: int = 1
    eval_regions: int = 256
    caption_mode: str = "rich"
    candidates: str = "ner"
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def key(self) -> dict:
        return asdict(self)


@dataclass
class OverfitResult:
    setup: dict
    annotation: dict
    train_seconds: float
    losses: list[dict]
    metrics: dict[str, float]

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "OverfitResult":
        return cls(**json.loads(text))


def held_out_split(setup: OverfitSetup):
    pool = generate_corpus(10 * setup.eval_regions, setup.eval_seed, regions="truth")
    return take_regions(pool, setup.eval_regions)


def run_overfit(setup: OverfitSetup, checkpoint: str | Path | None = None) -> OverfitResult:
    summary = AnnotationSummary()
    corpus = list(
        annotate_records(generate_corpus(setup.train_count, setup.train_seed, setup.caption_mode), setup.candidates, summary)
    )
    log.info("annotation %s", json.dumps(summary.as_dict()))
    state = init_state(setup.model, setup.train, build_tokenizer(corpus))
    losses: list[dict] = []
    start = time.perf_counter()
    train(state, corpus, callback=lambda s, b: losses.append(b.as_dict()))
    seconds = time.perf_counter() - start
    if checkpoint is not None:
        save_checkpoint(state, checkpoint)

    model = state.model.eval()
    held = held_out_split(setup)
    extractor = setup.train.region_extractor
    reports = [region_classify(model, held, extractor=extractor)]
    reports += region_retrieve(model, held, k=10, extractor=extractor)
    reports += image_retrieve(model, held, k=1)
    if extractor == "prompter":
        reports.append(grounding_eval(model, held))
    metrics = {r.task: r.value for r in reports}
    return OverfitResult(setup.key(), summary.as_dict(), seconds, losses, metrics)
