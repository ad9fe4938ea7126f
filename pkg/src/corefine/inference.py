"""Beam pruning, antecedent distributions, gated refinement, cluster decoding.

Inference is a three-stage beam search. Stage 1 keeps the top
``ceil(spans_per_token * num_tokens)`` candidate spans by mention score.
Stage 2 restricts each surviving span to at most K antecedents, either the K
nearest predecessors ("heuristic") or the top K by the partial score
``mention(i) + mention(j) + coarse(i, j)`` ("coarse_to_fine"). Stage 3 runs
``n_iters`` scoring passes: each pass recomputes all factors from the current
span representations, normalises each span's scores together with the
implicit zero-score "no antecedent" outcome, and (except on the last pass)
interpolates every representation with its expected antecedent through a
learned sigmoid gate. Candidate sets are fixed after stage 2; only scores and
representations change across passes.

Cost identities enforced by the instrumentation counters: fine-factor
evaluations total ``n_iters * sum_i |candidates(i)|``; the coarse table is
``M x M`` pairs once per pass (zero in heuristic mode).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import Document, Span, candidate_spans
from .encoder import span_representations
from .model import ModelConfig, token_embeddings
from .scoring import (
    CostCounters,
    PairFeatures,
    antecedent_scores,
    coarse_score,
    coarse_scores,
    mention_score,
    mention_scores,
    pair_features,
)

__all__ = [
    "InferenceConfig",
    "SpanBeam",
    "AntecedentBeam",
    "AntecedentDistribution",
    "RefinementTrace",
    "ForwardResult",
    "InferenceResult",
    "stage1_prune",
    "heuristic_antecedents",
    "coarse_to_fine_antecedents",
    "pairwise_score",
    "antecedent_distribution",
    "expected_antecedent",
    "refine_spans",
    "forward_document",
    "run_inference",
    "decode_clusters",
]

MODES = ("heuristic", "coarse_to_fine", "coarse_only")


@dataclass(frozen=True)
class InferenceConfig:
    n_iters: int = 2
    max_antecedents: int = 50
    spans_per_token: float = 0.4
    mode: str = "coarse_to_fine"
    suppress_crossing: bool = False

    def __post_init__(self):
        if self.n_iters < 1:
            raise ValueError("n_iters must be >= 1")
        if self.max_antecedents < 1:
            raise ValueError("max_antecedents must be >= 1")
        if self.spans_per_token <= 0:
            raise ValueError("spans_per_token must be positive")
        mode = "heuristic" if self.mode == "baseline" else self.mode
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        object.__setattr__(self, "mode", mode)

    @property
    def uses_coarse(self) -> bool:
        return self.mode in ("coarse_to_fine", "coarse_only")

    @property
    def uses_fine(self) -> bool:
        return self.mode in ("heuristic", "coarse_to_fine")


@dataclass(frozen=True)
class SpanBeam:
    """Surviving spans in document order; ``candidate_index`` maps back to
    the stage-1 candidate list."""

    spans: tuple[Span, ...]
    candidate_index: tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.spans)


@dataclass(frozen=True)
class AntecedentBeam:
    """Per beam position: candidate antecedent beam positions (all < i).

    Heuristic candidates are stored nearest-first; coarse-to-fine candidates
    in descending partial score with the pruning scores retained.
    """

    candidates: tuple[tuple[int, ...], ...]
    partial_scores: Optional[tuple[tuple[float, ...], ...]] = None

    def total_pairs(self) -> int:
        return sum(len(c) for c in self.candidates)


@dataclass(frozen=True)
class AntecedentDistribution:
    """Per span: probabilities over [no-antecedent] + candidates(i)."""

    rows: tuple[np.ndarray, ...]
    candidates: tuple[tuple[int, ...], ...]


@dataclass
class RefinementTrace:
    """Numpy snapshots per pass, for invariant checks: reps g, expected
    antecedents a, gates f (one fewer than passes), and distributions."""

    reps: list[np.ndarray] = field(default_factory=list)
    expected: list[np.ndarray] = field(default_factory=list)
    gates: list[np.ndarray] = field(default_factory=list)
    distributions: list[list[np.ndarray]] = field(default_factory=list)


@dataclass
class ForwardResult:
    doc: Document
    beam: SpanBeam
    antecedents: AntecedentBeam
    dist: list[Tensor]
    counters: CostCounters
    trace: Optional[RefinementTrace] = None


@dataclass
class InferenceResult:
    doc: Document
    beam: SpanBeam
    antecedents: AntecedentBeam
    distribution: AntecedentDistribution
    clusters: list[frozenset[Span]]
    counters: CostCounters


def _crosses(a: Span, b: Span) -> bool:
    return (a.start < b.start <= a.end < b.end) or (b.start < a.start <= b.end < a.end)


def stage1_prune(
    spans: list[Span],
    scores: np.ndarray,
    spans_per_token: float,
    num_tokens: int,
    suppress_crossing: bool = False,
) -> SpanBeam:
    """Keep the top ceil(lambda*T) spans by score, ties toward (start, end)."""
    if spans_per_token <= 0:
        raise ValueError("spans_per_token must be positive")
    quota = min(math.ceil(spans_per_token * num_tokens), len(spans))
    order = sorted(range(len(spans)), key=lambda k: (-scores[k], spans[k].start, spans[k].end))
    kept: list[int] = []
    for k in order:
        if len(kept) == quota:
            break
        if suppress_crossing and any(_crosses(spans[k], spans[m]) for m in kept):
            continue
        kept.append(k)
    kept.sort(key=lambda k: (spans[k].start, spans[k].end))
    return SpanBeam(spans=tuple(spans[k] for k in kept), candidate_index=tuple(kept))


def heuristic_antecedents(beam: SpanBeam, max_antecedents: int) -> AntecedentBeam:
    """The K nearest predecessors of each span, nearest first."""
    if max_antecedents < 1:
        raise ValueError("max_antecedents must be >= 1")
    cands = tuple(
        tuple(range(i - 1, max(-1, i - 1 - max_antecedents), -1)) for i in range(beam.size)
    )
    return AntecedentBeam(candidates=cands)


def coarse_to_fine_antecedents(
    beam: SpanBeam, mention: np.ndarray, coarse: np.ndarray, max_antecedents: int
) -> AntecedentBeam:
    """Top-K predecessors by mention(i)+mention(j)+coarse(i,j), ties to nearer j."""
    if max_antecedents < 1:
        raise ValueError("max_antecedents must be >= 1")
    cands: list[tuple[int, ...]] = []
    partials: list[tuple[float, ...]] = []
    for i in range(beam.size):
        scored = [(mention[i] + mention[j] + coarse[i, j], j) for j in range(i)]
        scored.sort(key=lambda t: (-t[0], i - t[1]))
        top = scored[:max_antecedents]
        cands.append(tuple(j for _, j in top))
        partials.append(tuple(float(s) for s, _ in top))
    return AntecedentBeam(candidates=tuple(cands), partial_scores=tuple(partials))


def pairwise_score(
    tape: ad.Tape,
    gi: Tensor,
    gj: Tensor,
    feats: PairFeatures,
    store,
    scoring_cfg,
    mode: str = "coarse_to_fine",
) -> Tensor:
    """Single-pair score; the batched path must match this within 1e-10."""
    mode = "heuristic" if mode == "baseline" else mode
    if mode not in MODES:
        raise ValueError(f"bad mode {mode!r}")
    from .scoring import antecedent_score  # local to avoid import cycle noise

    total = ad.add(mention_score(tape, gi, store, scoring_cfg), mention_score(tape, gj, store, scoring_cfg))
    if mode in ("coarse_to_fine", "coarse_only"):
        total = ad.add(total, coarse_score(tape, gi, gj, store))
    if mode in ("heuristic", "coarse_to_fine"):
        total = ad.add(total, antecedent_score(tape, gi, gj, feats, store, scoring_cfg))
    return total


def antecedent_distribution(scores: Tensor) -> Tensor:
    """Probabilities over [no-antecedent] + candidates from candidate scores."""
    return ad.softmax_fixed_zero(scores)


def expected_antecedent(dist: Tensor, reps_with_self: Tensor) -> Tensor:
    """Attention-average antecedent representation.

    ``reps_with_self`` stacks the span's own representation (row 0, standing
    in for the no-antecedent outcome) above its candidates' representations,
    so a span confidently predicting "no antecedent" keeps itself unchanged.
    """
    if dist.shape[0] != reps_with_self.shape[0]:
        raise ad.ShapeError("expected_antecedent", [dist.shape, reps_with_self.shape])
    return ad.matmul(dist, reps_with_self)


def refine_spans(tape: ad.Tape, reps: Tensor, expected: Tensor, store) -> tuple[Tensor, Tensor]:
    """One gated interpolation step; returns (new reps, gate values)."""
    gate_w = tape.param(store, "gate.w")
    gates = ad.sigmoid(ad.matmul(ad.concat([reps, expected], axis=1), ad.transpose(gate_w)))
    ones = tape.const(np.ones(reps.shape))
    new_reps = ad.add(ad.mul(gates, reps), ad.mul(ad.sub(ones, gates), expected))
    return new_reps, gates


def forward_document(
    tape: ad.Tape,
    doc: Document,
    store,
    model_cfg: ModelConfig,
    infer_cfg: InferenceConfig,
    vocab_index: dict[str, int],
    trace: bool = False,
) -> ForwardResult:
    """Differentiable end-to-end pass producing final antecedent distributions."""
    counters = CostCounters()
    scoring_cfg = model_cfg.scoring
    tr = RefinementTrace() if trace else None
    if not 0 <= doc.genre < model_cfg.genre_count:
        raise ValueError(
            f"{doc.doc_key}: genre {doc.genre} outside configured range "
            f"[0, {model_cfg.genre_count})"
        )

    cands = candidate_spans(doc, model_cfg.max_span_width)
    if not cands:
        return ForwardResult(
            doc=doc,
            beam=SpanBeam(spans=(), candidate_index=()),
            antecedents=AntecedentBeam(candidates=()),
            dist=[],
            counters=counters,
            trace=tr,
        )

    embeds = token_embeddings(tape, doc, store, model_cfg, vocab_index)
    from .encoder import encode_tokens

    states = encode_tokens(tape, doc, embeds, store, model_cfg.encoder)
    all_reps = span_representations(tape, cands, states, embeds, store, model_cfg.encoder)
    all_mention = mention_scores(tape, all_reps, store, scoring_cfg, counters)

    beam = stage1_prune(
        cands,
        all_mention.data,
        infer_cfg.spans_per_token,
        doc.num_tokens,
        infer_cfg.suppress_crossing,
    )
    beam_idx = list(beam.candidate_index)
    reps = ad.take_rows(all_reps, beam_idx)
    mention = ad.take(all_mention, beam_idx)

    coarse = (
        coarse_scores(tape, reps, store, counters) if infer_cfg.uses_coarse else None
    )
    if infer_cfg.mode == "heuristic":
        ante = heuristic_antecedents(beam, infer_cfg.max_antecedents)
    else:
        ante = coarse_to_fine_antecedents(
            beam, mention.data, coarse.data, infer_cfg.max_antecedents
        )

    anaphors = np.array(
        [i for i in range(beam.size) for _ in ante.candidates[i]], dtype=np.intp
    )
    antecedents = np.array(
        [j for i in range(beam.size) for j in ante.candidates[i]], dtype=np.intp
    )
    feats = [
        pair_features(int(i), int(j), list(beam.spans), doc)
        for i, j in zip(anaphors, antecedents)
    ]
    offsets = np.zeros(beam.size + 1, dtype=np.intp)
    for i in range(beam.size):
        offsets[i + 1] = offsets[i] + len(ante.candidates[i])

    dist_rows: list[Tensor] = []
    for n in range(1, infer_cfg.n_iters + 1):
        if n > 1:
            mention = mention_scores(tape, reps, store, scoring_cfg, counters)
            if infer_cfg.uses_coarse:
                coarse = coarse_scores(tape, reps, store, counters)
        if anaphors.size:
            scores = ad.add(ad.take(mention, anaphors), ad.take(mention, antecedents))
            if infer_cfg.uses_coarse:
                scores = ad.add(scores, ad.take_pairs(coarse, anaphors, antecedents))
            if infer_cfg.uses_fine:
                scores = ad.add(
                    scores,
                    antecedent_scores(
                        tape, reps, anaphors, antecedents, feats, store, scoring_cfg, counters
                    ),
                )
        else:
            scores = tape.const(np.zeros(0))

        dist_rows = [
            antecedent_distribution(ad.slice1d(scores, offsets[i], offsets[i + 1]))
            for i in range(beam.size)
        ]
        if tr is not None:
            tr.distributions.append([row.data.copy() for row in dist_rows])
            tr.reps.append(reps.data.copy())

        if n == infer_cfg.n_iters:
            break
        expected_rows = [
            expected_antecedent(
                dist_rows[i], ad.take_rows(reps, [i, *ante.candidates[i]])
            )
            for i in range(beam.size)
        ]
        expected = ad.stack(expected_rows)
        reps, gates = refine_spans(tape, reps, expected, store)
        if tr is not None:
            tr.expected.append(expected.data.copy())
            tr.gates.append(gates.data.copy())

    return ForwardResult(
        doc=doc, beam=beam, antecedents=ante, dist=dist_rows, counters=counters, trace=tr
    )


def decode_clusters(
    rows: list[np.ndarray], ante: AntecedentBeam, beam: SpanBeam
) -> list[frozenset[Span]]:
    """Argmax links, connected components, singletons dropped.

    Clusters are ordered by their earliest span for deterministic output.
    """
    parent = list(range(beam.size))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    linked = [False] * beam.size
    for i, row in enumerate(rows):
        best = int(np.argmax(row))
        if best == 0:
            continue
        j = ante.candidates[i][best - 1]
        linked[i] = linked[j] = True
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    groups: dict[int, set[Span]] = {}
    for i in range(beam.size):
        if linked[i]:
            groups.setdefault(find(i), set()).add(beam.spans[i])
    clusters = [frozenset(g) for g in groups.values() if len(g) >= 2]
    clusters.sort(key=lambda c: sorted(c)[0])
    return clusters


def run_inference(
    doc: Document,
    store,
    model_cfg: ModelConfig,
    infer_cfg: InferenceConfig,
    vocab_index: dict[str, int],
    trace: bool = False,
) -> InferenceResult:
    start = time.perf_counter()
    tape = ad.Tape()
    fwd = forward_document(tape, doc, store, model_cfg, infer_cfg, vocab_index, trace=trace)
    rows = tuple(row.data.copy() for row in fwd.dist)
    clusters = decode_clusters(list(rows), fwd.antecedents, fwd.beam)
    fwd.counters.wall_ms = (time.perf_counter() - start) * 1000.0
    return InferenceResult(
        doc=doc,
        beam=fwd.beam,
        antecedents=fwd.antecedents,
        distribution=AntecedentDistribution(rows=rows, candidates=fwd.antecedents.candidates),
        clusters=clusters,
        counters=fwd.counters,
    )
