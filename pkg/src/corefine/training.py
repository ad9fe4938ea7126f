"""Marginal log-likelihood training over beam-surviving spans.

The best antecedent of a span is latent, so the objective marginalises over
every candidate that is gold-coreferent with the span. Spans that are not
gold mentions, or whose every gold antecedent was pruned away, fall back to
the "no antecedent" outcome; the rate of pruning-induced fallbacks is logged
per epoch as a diagnostic. The loss is computed on the final scoring pass
only and differentiates through all refinement passes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import Document, Span
from .inference import (
    AntecedentBeam,
    ForwardResult,
    InferenceConfig,
    SpanBeam,
    forward_document,
    run_inference,
)
from .metrics import corpus_report
from .model import ModelConfig, build_params, build_vocab
from .params import ParamStore

__all__ = [
    "EPSILON",
    "TrainConfig",
    "TrainResult",
    "gold_antecedents",
    "gold_masks",
    "marginal_nll",
    "document_loss",
    "Adam",
    "clip_gradients",
    "train",
]

# Sentinel for the "no antecedent" outcome in gold sets.
EPSILON = -1


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.learning_rate <= 0:
            raise ValueError("epochs must be >= 0 and learning_rate positive")


@dataclass
class TrainResult:
    store: ParamStore
    vocab: list[str]
    log: list[dict]
    diverged: bool = False


def gold_antecedents(
    beam: SpanBeam, gold_clusters, ante: AntecedentBeam
) -> list[frozenset[int]]:
    """Per beam span: candidate beam positions that are gold-coreferent.

    ``{EPSILON}`` when the span is not a gold mention or no gold antecedent
    survived pruning.
    """
    cluster_of: dict[Span, int] = {}
    for cid, cluster in enumerate(gold_clusters):
        for span in cluster:
            cluster_of[span] = cid
    out: list[frozenset[int]] = []
    for i in range(beam.size):
        cid = cluster_of.get(beam.spans[i])
        if cid is None:
            out.append(frozenset({EPSILON}))
            continue
        golds = frozenset(
            j for j in ante.candidates[i] if cluster_of.get(beam.spans[j]) == cid
        )
        out.append(golds if golds else frozenset({EPSILON}))
    return out


def gold_masks(
    ante: AntecedentBeam, golds: list[frozenset[int]]
) -> list[np.ndarray]:
    """0/1 masks over [no-antecedent] + candidates(i), aligned with dist rows."""
    masks = []
    for i, gold in enumerate(golds):
        mask = np.zeros(len(ante.candidates[i]) + 1)
        if gold == frozenset({EPSILON}):
            mask[0] = 1.0
        else:
            for slot, j in enumerate(ante.candidates[i], start=1):
                if j in gold:
                    mask[slot] = 1.0
        masks.append(mask)
    return masks


def fallback_rate(
    beam: SpanBeam, gold_clusters, golds: list[frozenset[int]]
) -> float:
    """Fraction of gold-anaphoric beam spans whose gold set fell back to epsilon."""
    cluster_of: dict[Span, int] = {}
    for cid, cluster in enumerate(gold_clusters):
        for span in cluster:
            cluster_of[span] = cid
    anaphoric = 0
    fell_back = 0
    for i in range(beam.size):
        cid = cluster_of.get(beam.spans[i])
        if cid is None:
            continue
        has_earlier = any(
            cluster_of.get(beam.spans[j]) == cid for j in range(i)
        )
        if not has_earlier:
            continue
        anaphoric += 1
        if golds[i] == frozenset({EPSILON}):
            fell_back += 1
    return fell_back / anaphoric if anaphoric else 0.0


def marginal_nll(tape: ad.Tape, dist_rows: list[Tensor], masks: list[np.ndarray]) -> Tensor:
    """-sum_i log(gold probability mass of span i); zero iff all mass is gold."""
    if len(dist_rows) != len(masks):
        raise ValueError("distributions and gold masks are misaligned")
    if not dist_rows:
        return tape.const(np.asarray(0.0))
    terms = []
    for row, mask in zip(dist_rows, masks):
        if mask.shape != row.shape:
            raise ValueError(f"gold mask shape {mask.shape} != row shape {row.shape}")
        if not mask.any():
            raise AssertionError("empty gold set; construction guarantees at least epsilon")
        terms.append(ad.dot(tape.const(mask), row))
    return ad.scale(ad.sum_(ad.log(ad.concat(terms))), -1.0)


def document_loss(
    tape: ad.Tape,
    doc: Document,
    store: ParamStore,
    model_cfg: ModelConfig,
    infer_cfg: InferenceConfig,
    vocab_index: dict[str, int],
) -> tuple[Tensor, ForwardResult, list[frozenset[int]]]:
    fwd = forward_document(tape, doc, store, model_cfg, infer_cfg, vocab_index)
    golds = gold_antecedents(fwd.beam, doc.gold_clusters, fwd.antecedents)
    loss = marginal_nll(tape, fwd.dist, gold_masks(fwd.antecedents, golds))
    return loss, fwd, golds


class Adam:
    """Per-block adaptive moment estimation; state keyed by parameter name."""

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.step_count = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, store: ParamStore, grads: dict[str, np.ndarray]) -> None:
        c = self.cfg
        self.step_count += 1
        t = self.step_count
        for name in sorted(grads):
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            self.m[name] = c.beta1 * self.m[name] + (1 - c.beta1) * g
            self.v[name] = c.beta2 * self.v[name] + (1 - c.beta2) * g * g
            m_hat = self.m[name] / (1 - c.beta1**t)
            v_hat = self.v[name] / (1 - c.beta2**t)
            store[name] = store[name] - c.learning_rate * m_hat / (np.sqrt(v_hat) + c.adam_eps)


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients so the global L2 norm is at most max_norm."""
    total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if max_norm > 0 and total > max_norm:
        factor = max_norm / total
        for name in grads:
            grads[name] = grads[name] * factor
    return total


def evaluate_avg_f1(
    docs: list[Document],
    store: ParamStore,
    model_cfg: ModelConfig,
    infer_cfg: InferenceConfig,
    vocab_index: dict[str, int],
) -> float:
    pairs = []
    for doc in docs:
        result = run_inference(doc, store, model_cfg, infer_cfg, vocab_index)
        pairs.append((doc.gold_clusters, result.clusters))
    return corpus_report(pairs).avg_f1


def train(
    train_docs: list[Document],
    dev_docs: list[Document],
    model_cfg: ModelConfig,
    infer_cfg: InferenceConfig,
    train_cfg: TrainConfig,
    checkpoint_pattern: Optional[str] = None,
    log_fn: Optional[Callable[[dict], None]] = None,
) -> TrainResult:
    """Single-threaded training loop; bit-deterministic for a fixed seed.

    Per document: forward, backward, global-norm clip, Adam step. Writes a
    checkpoint per epoch when ``checkpoint_pattern`` contains ``{epoch}``.
    A non-finite loss aborts, keeping the last finite-loss parameters.
    """
    if not train_docs:
        raise ValueError("training corpus is empty")
    rng = np.random.default_rng(train_cfg.seed)
    vocab = build_vocab(train_docs)
    vocab_index = {w: i for i, w in enumerate(vocab)}
    store = build_params(model_cfg, len(vocab), rng)
    optimizer = Adam(train_cfg)
    log: list[dict] = []
    meta = {
        "model": model_cfg.to_dict(),
        "vocab": vocab,
        "inference": {
            "n_iters": infer_cfg.n_iters,
            "max_antecedents": infer_cfg.max_antecedents,
            "spans_per_token": infer_cfg.spans_per_token,
            "mode": infer_cfg.mode,
            "suppress_crossing": infer_cfg.suppress_crossing,
        },
    }
    last_good = store.clone()
    diverged = False

    for epoch in range(1, train_cfg.epochs + 1):
        order = rng.permutation(len(train_docs))
        epoch_loss = 0.0
        fallback_num = 0.0
        fallback_den = 0
        for k in order:
            doc = train_docs[int(k)]
            tape = ad.Tape()
            try:
                loss, fwd, golds = document_loss(
                    tape, doc, store, model_cfg, infer_cfg, vocab_index
                )
            except ad.NonFiniteError:
                diverged = True
                break
            value = loss.item()
            if not math.isfinite(value):
                diverged = True
                break
            epoch_loss += value
            fallback_num += fallback_rate(fwd.beam, doc.gold_clusters, golds)
            fallback_den += 1
            grads = ad.backward(loss)
            clip_gradients(grads, train_cfg.clip_norm)
            optimizer.step(store, grads)
        if diverged:
            store = last_good
            entry = {"epoch": epoch, "diverged": True}
            log.append(entry)
            if log_fn:
                log_fn(entry)
            break
        last_good = store.clone()
        entry = {
            "epoch": epoch,
            "train_loss": epoch_loss / len(train_docs),
            "dev_avg_f1": (
                evaluate_avg_f1(dev_docs, store, model_cfg, infer_cfg, vocab_index)
                if dev_docs
                else 0.0
            ),
            "gold_fallback_rate": fallback_num / fallback_den if fallback_den else 0.0,
        }
        log.append(entry)
        if log_fn:
            log_fn(entry)
        if checkpoint_pattern:
            store.save(checkpoint_pattern.format(epoch=epoch), meta=meta)

    return TrainResult(store=store, vocab=vocab, log=log, diverged=diverged)
