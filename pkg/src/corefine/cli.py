"""Command-line entry points.

Commands: ``synth``, ``train``, ``predict``, ``evaluate``, ``bench-pruning``,
``bench-compute``. Settings resolve with precedence CLI (--set, then
dedicated flags) > config file (flat ``key = value`` lines) > defaults.

Exit codes: 0 ok, 2 input/config error, 3 checkpoint error, 4 doc alignment
error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from .corpus import (
    CorpusFormatError,
    Document,
    Span,
    document_to_record,
    load_documents,
    write_documents,
)
from .inference import InferenceConfig, run_inference
from .metrics import corpus_report
from .model import ModelConfig
from .params import CheckpointError, ParamStore
from .scoring import CostCounters
from .synth import SyntheticSpec, basic_spec, consistency_spec, generate_synthetic, long_range_spec
from .training import TrainConfig, train

__all__ = ["main"]

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CHECKPOINT = 3
EXIT_ALIGNMENT = 4


class InputError(Exception):
    pass


class AlignmentError(Exception):
    pass


_MODEL_KEYS = {f.name: f.type for f in dataclasses.fields(ModelConfig)}
_INFER_KEYS = {f.name: f.type for f in dataclasses.fields(InferenceConfig)}
_TRAIN_KEYS = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
_SYNTH_KEYS = {f.name: f.type for f in dataclasses.fields(SyntheticSpec)}

_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def _coerce(key: str, raw: str, keys: dict) -> object:
    typ = keys[key]
    typ = {"int": int, "float": float, "str": str, "bool": bool}.get(typ, typ)
    if typ is bool:
        low = raw.strip().lower()
        if low in _BOOL_TRUE:
            return True
        if low in _BOOL_FALSE:
            return False
        raise InputError(f"setting {key!r}: expected a boolean, got {raw!r}")
    try:
        return typ(raw)
    except (TypeError, ValueError) as e:
        raise InputError(f"setting {key!r}: {e}") from e


def _load_settings(config_path, set_pairs, allowed: dict) -> dict:
    settings: dict = {}
    if config_path:
        path = Path(config_path)
        if not path.exists():
            raise InputError(f"config file not found: {path}")
        for lineno, line in enumerate(path.read_text().splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InputError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = (part.strip() for part in line.split("=", 1))
            if key not in allowed:
                raise InputError(f"{path}:{lineno}: unknown setting {key!r}")
            settings[key] = _coerce(key, raw, allowed)
    for pair in set_pairs or []:
        if "=" not in pair:
            raise InputError(f"--set expects key=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        key = key.strip()
        if key not in allowed:
            raise InputError(f"unknown setting {key!r}")
        settings[key] = _coerce(key, raw, allowed)
    return settings


def _split(settings: dict) -> tuple[ModelConfig, InferenceConfig, TrainConfig]:
    try:
        model = ModelConfig(**{k: v for k, v in settings.items() if k in _MODEL_KEYS})
        infer = InferenceConfig(**{k: v for k, v in settings.items() if k in _INFER_KEYS})
        tcfg = TrainConfig(**{k: v for k, v in settings.items() if k in _TRAIN_KEYS})
    except ValueError as e:
        raise InputError(str(e)) from e
    return model, infer, tcfg


def _load_corpus(path) -> list[Document]:
    try:
        return load_documents(path)
    except CorpusFormatError as e:
        raise InputError(str(e)) from e


def _load_checkpoint(path, settings: dict) -> tuple[ParamStore, ModelConfig, InferenceConfig, dict]:
    store, meta = ParamStore.load(path)
    model_cfg = ModelConfig.from_dict(meta["model"])
    for key, value in settings.items():
        if key in _MODEL_KEYS and value != getattr(model_cfg, key):
            raise CheckpointError(
                f"checkpoint {path} was built with {key}={getattr(model_cfg, key)}, "
                f"requested {key}={value}"
            )
    infer_kwargs = dict(meta.get("inference", {}))
    infer_kwargs.update({k: v for k, v in settings.items() if k in _INFER_KEYS})
    try:
        infer_cfg = InferenceConfig(**infer_kwargs)
    except ValueError as e:
        raise InputError(str(e)) from e
    vocab = meta["vocab"]
    return store, model_cfg, infer_cfg, {w: i for i, w in enumerate(vocab)}


_PRESETS = {"basic": basic_spec, "long_range": long_range_spec, "consistency": consistency_spec}


def cmd_synth(args) -> int:
    allowed = dict(_SYNTH_KEYS)
    settings = _load_settings(args.config, args.set, allowed)
    preset = _PRESETS[args.preset]()
    try:
        spec = dataclasses.replace(preset, **settings)
        docs = generate_synthetic(spec)
    except ValueError as e:
        raise InputError(str(e)) from e
    write_documents(docs, args.out)
    print(f"wrote {len(docs)} documents to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    allowed = {**_MODEL_KEYS, **_INFER_KEYS, **_TRAIN_KEYS}
    settings = _load_settings(args.config, args.set, allowed)
    model_cfg, infer_cfg, train_cfg = _split(settings)
    train_docs = _load_corpus(args.train)
    dev_docs = _load_corpus(args.dev) if args.dev else []
    if not train_docs:
        raise InputError(f"training corpus {args.train} is empty")

    def log_line(entry: dict) -> None:
        print(json.dumps(entry), flush=True)

    result = train(
        train_docs,
        dev_docs,
        model_cfg,
        infer_cfg,
        train_cfg,
        checkpoint_pattern=args.epoch_checkpoints,
        log_fn=log_line,
    )
    meta = {
        "model": model_cfg.to_dict(),
        "vocab": result.vocab,
        "inference": {
            "n_iters": infer_cfg.n_iters,
            "max_antecedents": infer_cfg.max_antecedents,
            "spans_per_token": infer_cfg.spans_per_token,
            "mode": infer_cfg.mode,
            "suppress_crossing": infer_cfg.suppress_crossing,
        },
    }
    result.store.save(args.checkpoint, meta=meta)
    if args.log:
        with open(args.log, "w", encoding="utf-8") as f:
            for entry in result.log:
                f.write(json.dumps(entry) + "\n")
    if result.diverged:
        print("training diverged; kept last finite checkpoint", file=sys.stderr)
    return EXIT_OK


def cmd_predict(args) -> int:
    allowed = {**_MODEL_KEYS, **_INFER_KEYS}
    settings = _load_settings(args.config, args.set, allowed)
    store, model_cfg, infer_cfg, vocab_index = _load_checkpoint(args.checkpoint, settings)
    docs = _load_corpus(args.input)
    totals = CostCounters()
    with open(args.output, "w", encoding="utf-8") as f:
        for doc in docs:
            result = run_inference(doc, store, model_cfg, infer_cfg, vocab_index)
            totals = totals.merged(result.counters)
            f.write(json.dumps(document_to_record(doc, predicted=result.clusters)))
            f.write("\n")
    if args.cost_report:
        report = {
            "sa_evals": totals.sa_evals,
            "sc_pairs": totals.sc_pairs,
            "wall_ms": totals.wall_ms,
        }
        Path(args.cost_report).write_text(json.dumps(report) + "\n")
    return EXIT_OK


def _clusters_from_record(rec: dict, key: str, path, lineno: int) -> list[frozenset[Span]]:
    if key not in rec:
        raise InputError(f"{path}: line {lineno} has no {key!r} field")
    return [
        frozenset(Span(int(a), int(b)) for a, b in cluster) for cluster in rec[key]
    ]


def cmd_evaluate(args) -> int:
    gold_docs = _load_corpus(args.gold)
    pred_records: dict[str, dict] = {}
    with open(args.pred, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            raw = raw.strip()
            if not raw:
                continue
            rec = json.loads(raw)
            pred_records[rec.get("doc_key", f"<line {lineno}>")] = (rec, lineno)
    gold_keys = [d.doc_key for d in gold_docs]
    missing = [k for k in gold_keys if k not in pred_records]
    extra = [k for k in pred_records if k not in set(gold_keys)]
    if missing or extra:
        raise AlignmentError(
            "doc_key mismatch between gold and predictions; "
            f"missing from predictions: {missing}; unexpected: {extra}"
        )
    pairs = []
    for doc in gold_docs:
        rec, lineno = pred_records[doc.doc_key]
        pred = _clusters_from_record(rec, "predicted_clusters", args.pred, lineno)
        gold = [frozenset((s.start, s.end) for s in c) for c in doc.gold_clusters]
        pred = [frozenset((s.start, s.end) for s in c) for c in pred]
        pairs.append((gold, pred))
    report = corpus_report(pairs).to_dict()
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return EXIT_OK


def _avg_f1_for(docs, store, model_cfg, infer_cfg, vocab_index) -> tuple[float, CostCounters]:
    pairs = []
    totals = CostCounters()
    for doc in docs:
        result = run_inference(doc, store, model_cfg, infer_cfg, vocab_index)
        totals = totals.merged(result.counters)
        pairs.append((doc.gold_clusters, result.clusters))
    return corpus_report(pairs).avg_f1, totals


def cmd_bench_pruning(args) -> int:
    settings = _load_settings(args.config, args.set, dict(_INFER_KEYS))
    k_values = [int(k) for k in args.k_values.split(",")]
    dev_docs = _load_corpus(args.dev)
    rows = []
    for mode, ckpt in (("heuristic", args.checkpoint_heuristic), ("coarse_to_fine", args.checkpoint_coarse)):
        store, model_cfg, infer_cfg, vocab_index = _load_checkpoint(ckpt, settings)
        for k in k_values:
            cfg = dataclasses.replace(infer_cfg, mode=mode, max_antecedents=k)
            score, _ = _avg_f1_for(dev_docs, store, model_cfg, cfg, vocab_index)
            rows.append((mode, k, score))
            print(f"{mode},{k},{score:.4f}", flush=True)
    with open(args.csv, "w", encoding="utf-8") as f:
        f.write("mode,K,avg_f1\n")
        for mode, k, score in rows:
            f.write(f"{mode},{k},{score:.6f}\n")
    if args.plot:
        _plot_pruning(rows, args.plot)
    return EXIT_OK


def _plot_pruning(rows, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for mode in ("coarse_to_fine", "heuristic"):
        pts = sorted((k, f1) for m, k, f1 in rows if m == mode)
        if pts:
            ax.plot([k for k, _ in pts], [f1 for _, f1 in pts], marker="o", label=mode)
    ax.set_xlabel("antecedents per span K")
    ax.set_ylabel("dev avg F1")
    ax.grid(True, alpha=0.4)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def cmd_bench_compute(args) -> int:
    settings = _load_settings(args.config, args.set, dict(_INFER_KEYS))
    dev_docs = _load_corpus(args.dev)
    store, model_cfg, infer_cfg, vocab_index = _load_checkpoint(args.checkpoint, settings)
    report: dict = {}
    counters: dict[str, CostCounters] = {}
    for mode, k in (("heuristic", args.k_heuristic), ("coarse_to_fine", args.k_fine)):
        cfg = dataclasses.replace(infer_cfg, mode=mode, max_antecedents=k)
        score, totals = _avg_f1_for(dev_docs, store, model_cfg, cfg, vocab_index)
        counters[mode] = totals
        report[mode] = {
            "K": k,
            "avg_f1": score,
            "sa_evals": totals.sa_evals,
            "sc_pairs": totals.sc_pairs,
            "wall_ms": totals.wall_ms,
        }
    k_ratio = args.k_fine / args.k_heuristic
    sa_ratio = (
        counters["coarse_to_fine"].sa_evals / counters["heuristic"].sa_evals
        if counters["heuristic"].sa_evals
        else 0.0
    )
    report["k_ratio"] = k_ratio
    report["sa_ratio"] = sa_ratio
    report["slack"] = args.slack
    report["ratio_ok"] = sa_ratio <= k_ratio + args.slack
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return EXIT_OK if report["ratio_ok"] else 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="corefine")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key = value settings file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a setting")

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    common(p)
    p.add_argument("--preset", choices=sorted(_PRESETS), default="basic")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", help="train a model")
    common(p)
    p.add_argument("--train", required=True)
    p.add_argument("--dev")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--epoch-checkpoints", help="per-epoch path pattern with {epoch}")
    p.add_argument("--log", help="write per-epoch JSON log here")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("predict", help="predict clusters for a corpus")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--cost-report")
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against gold")
    common(p)
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("bench-pruning", help="avg F1 per (mode, K)")
    common(p)
    p.add_argument("--checkpoint-heuristic", required=True)
    p.add_argument("--checkpoint-coarse", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--k-values", default="5,10,25,50")
    p.add_argument("--csv", required=True)
    p.add_argument("--plot")
    p.set_defaults(fn=cmd_bench_pruning)

    p = sub.add_parser("bench-compute", help="cost comparison between pruning modes")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--k-fine", type=int, default=5)
    p.add_argument("--k-heuristic", type=int, default=25)
    p.add_argument("--slack", type=float, default=0.1)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_bench_compute)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (InputError, CorpusFormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except CheckpointError as e:
        print(f"checkpoint error: {e}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except AlignmentError as e:
        print(f"alignment error: {e}", file=sys.stderr)
        return EXIT_ALIGNMENT


if __name__ == "__main__":
    sys.exit(main())
