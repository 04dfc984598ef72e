"""CLI: train an adapter from training.jsonl, or sanity-generate with one."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import TrainerConfig
from .serve import serve_check
from .train import train


def entrypoint() -> None:
    sys.exit(main(sys.argv[1:]))


def main(argv: list[str]) -> int:
    parser = argparse.ArgumentParser(prog="hinttrainer")
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="fine-tune low-rank adapters on training.jsonl")
    t.add_argument("--data", required=True, help="training.jsonl from the export pipeline")
    t.add_argument("--base-model", required=True, help="HF model id or local path")
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--lr", type=float)
    t.add_argument("--epochs", type=int)
    t.add_argument("--max-steps", type=int)
    t.add_argument("--batch", type=int)
    t.add_argument("--accum", type=int)
    t.add_argument("--max-seq-len", type=int)
    t.add_argument("--val-split", type=float)
    t.add_argument("--seed", type=int)

    g = sub.add_parser("generate", help="greedy-generate one hint with an adapter")
    g.add_argument("--adapter", required=True)
    g.add_argument("--base-model", default=None)
    g.add_argument("--statement", required=True)
    g.add_argument("--state", default="")

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")

    if args.command == "train":
        overrides = {
            "learning_rate": args.lr,
            "epochs": args.epochs,
            "max_steps": args.max_steps,
            "per_device_batch": args.batch,
            "grad_accum": args.accum,
            "max_seq_len": args.max_seq_len,
            "validation_split": args.val_split,
            "seed": args.seed,
        }
        kwargs = {k: v for k, v in overrides.items() if v is not None}
        config = TrainerConfig(base_model_id=args.base_model, **kwargs)
        result = train(config, args.data, args.out)
        print(f"trained {result.steps} steps; adapter at {result.adapter_dir}")
        if result.train_losses:
            print(f"loss {result.train_losses[0]:.4f} -> {result.train_losses[-1]:.4f}")
        return 0

    text = serve_check(args.adapter, args.base_model, args.statement, args.state)
    print(text)
    return 0
