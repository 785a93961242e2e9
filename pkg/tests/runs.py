"""Cached desk-scale training runs for the acceptance suite.

A full run takes roughly a quarter of an hour on one CPU core, so results are
stored under ``$CLOC_RUN_CACHE`` (default ``<repo>/.run_cache``) keyed by the
run setup and a hash of the package sources. Any source change invalidates
the cache. Set ``CLOC_RUN_CACHE=off`` to always retrain.
"""

import hashlib
import json
import os
from pathlib import Path

from cloc.experiment import OverfitResult, OverfitSetup, run_overfit
from cloc.trainer import TrainConfig

SRC = Path(__file__).resolve().parent.parent / "src" / "cloc"


def _cache_dir() -> Path | None:
    value = os.environ.get("CLOC_RUN_CACHE", str(SRC.parent.parent / ".run_cache"))
    return None if value.lower() == "off" else Path(value)


def _source_digest() -> str:
    h = hashlib.sha256()
    for path in sorted(SRC.glob("*.py")):
        h.update(path.name.encode())
        h.update(path.read_bytes())
    return h.hexdigest()


def setup_for(name: str) -> OverfitSetup:
    """The acceptance runs: the default model, the RoI-align ablation and the alt-text ablation."""
    if name == "prompter":
        return OverfitSetup()
    if name == "roi_align":
        return OverfitSetup(train=TrainConfig(region_extractor="roi_align"))
    if name == "ngram_impoverished":
        return OverfitSetup(caption_mode="impoverished", candidates="ngram")
    raise KeyError(name)


def cached_run(name: str) -> OverfitResult:
    setup = setup_for(name)
    key = hashlib.sha256(
        json.dumps({"setup": setup.key(), "src": _source_digest()}, sort_keys=True).encode()
    ).hexdigest()[:16]
    cache = _cache_dir()
    path = None if cache is None else cache / f"{name}-{key}.json"
    if path is not None and path.exists():
        return OverfitResult.from_json(path.read_text())
    result = run_overfit(setup)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(result.to_json())
    return result

