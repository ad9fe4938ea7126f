#!/usr/bin/env python3
"""Pruning sensitivity study: heuristic vs coarse-to-fine across K.

Trains one model per pruning mode on a long-range synthetic corpus, then
evaluates both at several antecedent budgets K. Heuristic pruning caps link
distance, so its score should fall off sharply at small K while the
coarse-to-fine ranking stays flat. Writes a CSV, an SVG plot, and a compute
report into --out-dir.
"""

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

from corefine.cli import main as cli_main
from corefine.corpus import write_documents
from corefine.inference import InferenceConfig
from corefine.model import ModelConfig
from corefine.synth import generate_synthetic, long_range_spec
from corefine.training import TrainConfig, train

MODEL = ModelConfig(token_dim=12, hidden_dim=10)
INFER = InferenceConfig(n_iters=2, max_antecedents=50, spans_per_token=1.5, mode="coarse_to_fine")


def build_corpora(out_dir: Path, seed: int, n_train: int, n_dev: int):
    train_docs = generate_synthetic(long_range_spec(seed=seed, n_docs=n_train))
    dev_docs = generate_synthetic(long_range_spec(seed=seed + 1, n_docs=n_dev))
    write_documents(train_docs, out_dir / "train.jsonl")
    write_documents(dev_docs, out_dir / "dev.jsonl")
    return train_docs, dev_docs


def train_mode(mode, train_docs, dev_docs, out_dir, epochs, lr, seed):
    infer = dataclasses.replace(INFER, mode=mode)
    tcfg = TrainConfig(epochs=epochs, learning_rate=lr, clip_norm=10.0, seed=seed)
    started = time.perf_counter()
    result = train(train_docs, dev_docs, MODEL, infer, tcfg)
    elapsed = time.perf_counter() - started
    ckpt = out_dir / f"{mode}.ckpt"
    meta = {
        "model": MODEL.to_dict(),
        "vocab": result.vocab,
        "inference": {
            "n_iters": infer.n_iters,
            "max_antecedents": infer.max_antecedents,
            "spans_per_token": infer.spans_per_token,
            "mode": infer.mode,
            "suppress_crossing": infer.suppress_crossing,
        },
    }
    result.store.save(ckpt, meta=meta)
    final = result.log[-1] if result.log else {}
    print(
        f"[{mode}] trained {epochs} epochs in {elapsed:.0f}s; "
        f"dev avg F1 {final.get('dev_avg_f1', 0.0):.3f}",
        flush=True,
    )
    return ckpt


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="out/pruning_study")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--n-train", type=int, default=24)
    parser.add_argument("--n-dev", type=int, default=10)
    parser.add_argument("--epochs", type=int, default=14)
    parser.add_argument("--learning-rate", type=float, default=3e-3)
    parser.add_argument("--k-values", default="5,10,25,50")
    args = parser.parse_args(argv)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_docs, dev_docs = build_corpora(out_dir, args.seed, args.n_train, args.n_dev)
    print(f"corpora: {len(train_docs)} train docs, {len(dev_docs)} dev docs", flush=True)

    heur = train_mode("heuristic", train_docs, dev_docs, out_dir, args.epochs,
                      args.learning_rate, args.seed)
    c2f = train_mode("coarse_to_fine", train_docs, dev_docs, out_dir, args.epochs,
                     args.learning_rate, args.seed)

    csv_path = out_dir / "pruning.csv"
    code = cli_main([
        "bench-pruning",
        "--checkpoint-heuristic", str(heur),
        "--checkpoint-coarse", str(c2f),
        "--dev", str(out_dir / "dev.jsonl"),
        "--k-values", args.k_values,
        "--csv", str(csv_path),
        "--plot", str(out_dir / "pruning.svg"),
    ])
    if code != 0:
        return code

    code = cli_main([
        "bench-compute",
        "--checkpoint", str(c2f),
        "--dev", str(out_dir / "dev.jsonl"),
        "--k-fine", "5",
        "--k-heuristic", "25",
        "--out", str(out_dir / "compute.json"),
    ])
    print(f"artifacts in {out_dir}", flush=True)
    return code


if __name__ == "__main__":
    sys.exit(main())
