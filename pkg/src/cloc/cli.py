"""Command line entry point: ``cloc <gen-data|annotate|train|eval|embed|stats> ...``.

Exit codes: 0 success, 2 usage or invalid configuration, 3 unreadable or
corrupt input and I/O failures, 1 any other package error. Logs go to stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .config import build, read_config_file
from .encoders import ModelConfig
from .errors import ChecksumMismatch, ClocError, CorruptRecord, VersionMismatch, ZeroImages
from .evaluate import format_table, grounding_eval, image_retrieve, region_classify, region_retrieve
from .geometry import validate_box
from .synthdata import DatasetRecord, generate_corpus, iter_dataset, read_dataset, write_dataset
from .trainer import (
    TrainConfig,
    build_tokenizer,
    init_state,
    load_checkpoint,
    lr_at,
    next_batch,
    save_checkpoint,
    train_step,
)
from .vesl import AnnotationSummary, annotate_records, dataset_stats

log = logging.getLogger("cloc")

EXIT_USAGE = 2
EXIT_IO = 3

# keys of the train command that are not dataclass fields but may still come from a config file
TRAIN_KEYS = ("data", "out", "log", "steps", "resume")


class UsageError(Exception):
    pass


def _float_list(text: str, n: int) -> list[float]:
    parts = [p for p in text.replace(" ", "").split(",") if p]
    if len(parts) != n:
        raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers, got {text!r}")
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number list: {text!r}") from None


def _box(text: str) -> list[float]:
    return _float_list(text, 4)


def _write_jsonl(rows, fh) -> None:
    for row in rows:
        fh.write(json.dumps(row, sort_keys=True) + "\n")


# ----------------------------------------------------------------------------- gen-data


def cmd_gen_data(args) -> int:
    if args.count <= 0:
        raise UsageError("--count must be positive")
    records = generate_corpus(
        args.count, args.seed, args.caption_mode, args.regions, raw_pixels=args.raw_pixels, image_size=args.image_size
    )
    n = write_dataset(records, args.out)
    log.info("wrote %d records to %s", n, args.out)
    return 0


# ----------------------------------------------------------------------------- annotate


def cmd_annotate(args) -> int:
    summary = AnnotationSummary()
    # materialize first so a corrupt input never leaves a partial output file
    records = read_dataset(args.inp)
    write_dataset(annotate_records(records, args.candidates, summary), args.out)
    print(json.dumps(summary.as_dict(), sort_keys=True))
    return 0


# ----------------------------------------------------------------------------- train


def _train_values(args) -> dict:
    values = read_config_file(args.config) if args.config else {}
    known = set(TRAIN_KEYS) | {f.name for f in dataclasses.fields(ModelConfig)} | {
        f.name for f in dataclasses.fields(TrainConfig)
    }
    unknown = sorted(set(values) - known)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    for key in known:
        cli = getattr(args, key, None)
        if cli is not None:
            values[key] = cli
    return values


def cmd_train(args) -> int:
    values = _train_values(args)
    if not values.get("data"):
        raise UsageError("--data is required (flag or config key)")
    if not values.get("out"):
        raise UsageError("--out is required (flag or config key)")
    corpus = read_dataset(values["data"])
    if not corpus:
        raise ZeroImages(f"{values['data']} has no records")
    try:
        if values.get("resume"):
            state = load_checkpoint(values["resume"])
            log.info("resumed from %s at step %d", values["resume"], state.step)
        else:
            model_cfg = build(ModelConfig, values)
            train_cfg = build(TrainConfig, values)
            state = init_state(model_cfg, train_cfg, build_tokenizer(corpus))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ClocError):
            raise
        raise UsageError(str(exc)) from None

    remaining = state.train_cfg.total_steps - state.step
    steps = remaining if values.get("steps") is None else min(int(values["steps"]), remaining)
    log_fh = open(values["log"], "w", encoding="utf-8") if values.get("log") else None
    try:
        for _ in range(steps):
            lr = lr_at(state.step + 1, state.train_cfg)
            state, losses = train_step(state, next_batch(state, corpus))
            if log_fh:
                row = {"step": state.step, "lr": lr, "loss_ema": state.loss_ema, **losses.as_dict()}
                log_fh.write(json.dumps(row, sort_keys=True) + "\n")
            if state.step % 100 == 0:
                log.info("step %d total %.4f ema %.4f", state.step, float(losses.total.detach()), state.loss_ema)
    finally:
        if log_fh:
            log_fh.close()
    save_checkpoint(state, values["out"])
    log.info("saved step %d to %s", state.step, values["out"])
    return 0


# ----------------------------------------------------------------------------- eval


def cmd_eval(args) -> int:
    state = load_checkpoint(args.checkpoint)
    model = state.model.eval()
    records = read_dataset(args.data)
    extractor = args.extractor or state.train_cfg.region_extractor
    if args.task == "region-classify":
        reports = [region_classify(model, records, extractor=extractor)]
    elif args.task == "region-retrieve":
        reports = region_retrieve(model, records, k=args.k, extractor=extractor, count_duplicates=not args.strict)
    elif args.task == "image-retrieve":
        reports = image_retrieve(model, records, k=args.k, count_duplicates=not args.strict)
    else:
        reports = [grounding_eval(model, records, args.iou_threshold)]
    lines = [r.to_json() for r in reports]
    if args.out:
        Path(args.out).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
        print(format_table(reports))
    else:
        print("\n".join(lines))
        print(format_table(reports), file=sys.stderr)
    return 0


# ----------------------------------------------------------------------------- embed


def _embed_records(args) -> list[DatasetRecord]:
    if args.data:
        records = []
        for rec in iter_dataset(args.data):
            records.append(rec)
            if len(records) >= args.limit:
                break
        return records
    return list(generate_corpus(1, args.seed))


def cmd_embed(args) -> int:
    if args.checkpoint:
        model = load_checkpoint(args.checkpoint).model
    else:
        model = init_state(ModelConfig(), TrainConfig(seed=args.seed)).model
    model.eval()
    try:
        boxes = [validate_box(b) for b in args.box or []]
    except ValueError as exc:
        raise UsageError(f"--box: {exc}") from None
    rows = []
    with torch.no_grad():
        dtype = model.log_temp.dtype
        for caption in args.caption or []:
            emb = model.encode_texts([caption])[0]
            rows.append({"kind": "caption", "text": caption, "embedding": emb.tolist()})
        records = _embed_records(args) if (boxes or args.text or not args.caption) else []
        for rec in records:
            img = torch.from_numpy(np.array(rec.image(model.cfg.image_size))).to(dtype)[None]
            tokens = model.encode_image_tokens(img)
            if not boxes and not args.text:
                emb = model.pool_project_image(tokens)[0]
                rows.append({"id": rec.id, "kind": "image", "embedding": emb.tolist()})
            for b in boxes:
                box_t = torch.tensor([b.as_tuple()], dtype=dtype)
                emb = model.regions(box_t, tokens, args.extractor)[0]
                rows.append({"id": rec.id, "kind": "box", "box": b.as_list(), "embedding": emb.tolist()})
            for text in args.text or []:
                z = model.prompter.by_text(model.encode_texts([text]), tokens)
                pred = model.prompter.predict_box(z)[0]
                rows.append({"id": rec.id, "kind": "text", "text": text, "embedding": z[0].tolist(),
                             "predicted_box": pred.tolist()})
    _write_jsonl(rows, sys.stdout)
    return 0


# ----------------------------------------------------------------------------- stats


def cmd_stats(args) -> int:
    print(json.dumps(dataset_stats(args.data).as_dict(), sort_keys=True))
    return 0


# ----------------------------------------------------------------------------- parser


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    for cls in (ModelConfig, TrainConfig):
        group = p.add_argument_group(cls.__name__)
        for f in dataclasses.fields(cls):
            if f.name == "seed":
                continue
            group.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name, default=None, metavar=f.name.upper())


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cloc", description="Synthetic-corpus pipeline for promptable region embeddings.")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic corpus")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--caption-mode", choices=("rich", "impoverished"), default="rich")
    p.add_argument("--regions", choices=("none", "truth"), default="none",
                   help="'truth' stores ground-truth boxes and phrases (for evaluation splits)")
    p.add_argument("--raw-pixels", action="store_true", help="store rasters instead of regeneration seeds")
    p.add_argument("--image-size", type=int, default=32)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("annotate", help="extract phrase candidates and match them to boxes")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--candidates", choices=("ner", "ngram"), default="ner")
    p.add_argument("--seed", type=int, default=0, help="accepted for uniformity; annotation is deterministic")
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("train", help="train from scratch or resume")
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--data")
    p.add_argument("--out", help="checkpoint path written at the end")
    p.add_argument("--log", help="JSON-lines loss log, one line per step")
    p.add_argument("--steps", type=int, help="steps to run now (default: until total_steps)")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--seed", type=int, default=None)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="zero-shot evaluation of a checkpoint")
    p.add_argument("--task", required=True, choices=("region-classify", "region-retrieve", "image-retrieve", "grounding"))
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--extractor", choices=("prompter", "roi_align"), default=None)
    p.add_argument("--iou-threshold", type=float, default=0.5)
    p.add_argument("--strict", action="store_true", help="duplicate captions do not count as hits")
    p.add_argument("--out", help="JSON-lines report file")
    p.add_argument("--seed", type=int, default=0, help="accepted for uniformity; evaluation is deterministic")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("embed", help="dump image, region and caption embeddings as JSON lines")
    p.add_argument("--checkpoint")
    p.add_argument("--data", help="records to embed (default: one generated scene)")
    p.add_argument("--limit", type=int, default=1)
    p.add_argument("--box", type=_box, action="append", help="x1,y1,x2,y2 in [0,1]")
    p.add_argument("--text", action="append", help="region text prompt")
    p.add_argument("--caption", action="append", help="caption to embed with the text encoder")
    p.add_argument("--extractor", choices=("prompter", "roi_align"), default="prompter")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("stats", help="corpus statistics")
    p.add_argument("--data", required=True)
    p.add_argument("--seed", type=int, default=0, help="accepted for uniformity")
    p.set_defaults(func=cmd_stats)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"cloc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, CorruptRecord, VersionMismatch, ChecksumMismatch, ZeroImages) as exc:
        print(f"cloc: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ClocError as exc:
        print(f"cloc: error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"cloc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
