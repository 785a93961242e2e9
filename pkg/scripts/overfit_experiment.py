"""Train on a small annotated synthetic corpus and evaluate on held-out scenes.

    python3 scripts/overfit_experiment.py --steps 3000 --extractor prompter
    python3 scripts/overfit_experiment.py --caption-mode impoverished --candidates ngram
"""

import argparse
import logging

from cloc.encoders import ModelConfig
from cloc.experiment import OverfitSetup, run_overfit
from cloc.trainer import TrainConfig


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--train-count", type=int, default=256)
    ap.add_argument("--train-seed", type=int, default=0)
    ap.add_argument("--eval-seed", type=int, default=1)
    ap.add_argument("--eval-regions", type=int, default=256)
    ap.add_argument("--steps", type=int, default=3000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--extractor", default="prompter")
    ap.add_argument("--caption-mode", default="rich")
    ap.add_argument("--candidates", default="ner")
    ap.add_argument("--pool", default=ModelConfig.prompter_pool)
    ap.add_argument("--augment", default=TrainConfig.augment)
    ap.add_argument("--lr", type=float, default=TrainConfig.peak_lr)
    ap.add_argument("--out", default=None, help="checkpoint path")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    # warmup keeps the default fraction of the step budget
    warmup = max(1, round(args.steps * TrainConfig.warmup_steps / TrainConfig.total_steps))
    setup = OverfitSetup(
        train_count=args.train_count,
        train_seed=args.train_seed,
        eval_seed=args.eval_seed,
        eval_regions=args.eval_regions,
        caption_mode=args.caption_mode,
        candidates=args.candidates,
        model=ModelConfig(prompter_pool=args.pool),
        train=TrainConfig(total_steps=args.steps, warmup_steps=warmup, seed=args.seed, peak_lr=args.lr,
                          region_extractor=args.extractor, augment=args.augment),
    )
    result = run_overfit(setup, args.out)
    print("annotation", result.annotation)
    print(f"trained {args.steps} steps in {result.train_seconds:.0f}s")
    width = max(len(k) for k in result.metrics)
    for task, value in result.metrics.items():
        print(f"{task.ljust(width)}  {value:.4f}")


if __name__ == "__main__":
    main()
