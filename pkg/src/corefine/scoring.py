"""The scoring factors of the pairwise coreference model.

Three learned factors feed the pairwise score: a unary mention score (is
this span a mention), an antecedent score over the concatenated pair
representation with elementwise similarity and pair features, and a cheap
bilinear "coarse" score used for pruning. The pair features encode the
bucketed antecedent-rank distance, whether the two spans share a speaker,
and the document genre; they enter only the antecedent factor.

Every scored span or pair increments a cost counter: the coarse factor is
two matrix products and contributes zero feed-forward evaluations.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import FfnnSpec, Tensor
from .corpus import Document, Span

__all__ = [
    "DISTANCE_BUCKETS",
    "distance_bucket",
    "PairFeatures",
    "CostCounters",
    "ScoringConfig",
    "scoring_param_shapes",
    "pair_features",
    "mention_score",
    "mention_scores",
    "antecedent_score",
    "antecedent_scores",
    "coarse_score",
    "coarse_scores",
]

# Bucket lower bounds for antecedent-rank distances 1,2,3,4,5-7,8-15,16-31,32-63,64+.
DISTANCE_BUCKETS = (1, 2, 3, 4, 5, 8, 16, 32, 64)


def distance_bucket(distance: int) -> int:
    if distance < 1:
        raise ValueError(f"antecedent distance must be >= 1, got {distance}")
    for i in range(len(DISTANCE_BUCKETS) - 1, -1, -1):
        if distance >= DISTANCE_BUCKETS[i]:
            return i
    raise ValueError(f"bad distance {distance}")


@dataclass(frozen=True)
class PairFeatures:
    distance_bucket: int
    same_speaker: bool
    genre: int


@dataclass
class CostCounters:
    """Instrumentation for the cost identities; counts are exact."""

    sa_evals: int = 0
    sm_evals: int = 0
    sc_pairs: int = 0
    wall_ms: float = 0.0

    def merged(self, other: "CostCounters") -> "CostCounters":
        return CostCounters(
            sa_evals=self.sa_evals + other.sa_evals,
            sm_evals=self.sm_evals + other.sm_evals,
            sc_pairs=self.sc_pairs + other.sc_pairs,
            wall_ms=self.wall_ms + other.wall_ms,
        )


@dataclass(frozen=True)
class ScoringConfig:
    rep_dim: int
    ffnn_hidden: int = 16
    feature_dim: int = 4
    genre_count: int = 4

    @property
    def phi_dim(self) -> int:
        return 3 * self.feature_dim

    @property
    def mention_ffnn(self) -> FfnnSpec:
        return FfnnSpec(self.rep_dim, (self.ffnn_hidden,), self.ffnn_hidden)

    @property
    def antecedent_ffnn(self) -> FfnnSpec:
        return FfnnSpec(3 * self.rep_dim + self.phi_dim, (self.ffnn_hidden,), self.ffnn_hidden)


def scoring_param_shapes(cfg: ScoringConfig) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    shapes.update(cfg.mention_ffnn.param_shapes("mention_ffnn"))
    shapes["mention_out"] = (cfg.ffnn_hidden,)
    shapes.update(cfg.antecedent_ffnn.param_shapes("antecedent_ffnn"))
    shapes["antecedent_out"] = (cfg.ffnn_hidden,)
    shapes["coarse_bilinear"] = (cfg.rep_dim, cfg.rep_dim)
    shapes["embed.distance"] = (len(DISTANCE_BUCKETS), cfg.feature_dim)
    shapes["embed.same_speaker"] = (2, cfg.feature_dim)
    shapes["embed.genre"] = (cfg.genre_count, cfg.feature_dim)
    return shapes


def pair_features(i: int, j: int, beam_spans: list[Span], doc: Document) -> PairFeatures:
    """Features for beam positions j < i; speaker read at each span's start token."""
    if not j < i:
        raise ValueError(f"antecedent must precede the span: got j={j}, i={i}")
    si, sj = beam_spans[i], beam_spans[j]
    return PairFeatures(
        distance_bucket=distance_bucket(i - j),
        same_speaker=doc.tokens[si.start].speaker == doc.tokens[sj.start].speaker,
        genre=doc.genre,
    )


def _phi_rows(tape: ad.Tape, feats: list[PairFeatures], store) -> Tensor:
    dist = tape.param(store, "embed.distance")
    spk = tape.param(store, "embed.same_speaker")
    genre = tape.param(store, "embed.genre")
    return ad.concat(
        [
            ad.take_rows(dist, [f.distance_bucket for f in feats]),
            ad.take_rows(spk, [int(f.same_speaker) for f in feats]),
            ad.take_rows(genre, [f.genre for f in feats]),
        ],
        axis=1,
    )


def mention_scores(
    tape: ad.Tape, reps: Tensor, store, cfg: ScoringConfig, counters: CostCounters
) -> Tensor:
    """Unary scores for a stack of span representations, shape (n,)."""
    hidden = ad.ffnn_forward(reps, cfg.mention_ffnn, store, "mention_ffnn")
    counters.sm_evals += reps.shape[0]
    return ad.matmul(hidden, tape.param(store, "mention_out"))


def mention_score(tape: ad.Tape, rep: Tensor, store, cfg: ScoringConfig) -> Tensor:
    hidden = ad.ffnn_forward(rep, cfg.mention_ffnn, store, "mention_ffnn")
    return ad.dot(tape.param(store, "mention_out"), hidden)


def antecedent_scores(
    tape: ad.Tape,
    reps: Tensor,
    anaphor_idx: np.ndarray,
    antecedent_idx: np.ndarray,
    feats: list[PairFeatures],
    store,
    cfg: ScoringConfig,
    counters: CostCounters,
) -> Tensor:
    """Pairwise fine scores for (anaphor, antecedent) index arrays, shape (P,)."""
    gi = ad.take_rows(reps, anaphor_idx)
    gj = ad.take_rows(reps, antecedent_idx)
    pair_input = ad.concat([gi, gj, ad.mul(gi, gj), _phi_rows(tape, feats, store)], axis=1)
    hidden = ad.ffnn_forward(pair_input, cfg.antecedent_ffnn, store, "antecedent_ffnn")
    counters.sa_evals += len(feats)
    return ad.matmul(hidden, tape.param(store, "antecedent_out"))


def antecedent_score(
    tape: ad.Tape, gi: Tensor, gj: Tensor, feats: PairFeatures, store, cfg: ScoringConfig
) -> Tensor:
    phi = ad.concat(
        [
            ad.take_row(tape.param(store, "embed.distance"), feats.distance_bucket),
            ad.take_row(tape.param(store, "embed.same_speaker"), int(feats.same_speaker)),
            ad.take_row(tape.param(store, "embed.genre"), feats.genre),
        ]
    )
    pair_input = ad.concat([gi, gj, ad.mul(gi, gj), phi])
    hidden = ad.ffnn_forward(pair_input, cfg.antecedent_ffnn, store, "antecedent_ffnn")
    return ad.dot(tape.param(store, "antecedent_out"), hidden)


def coarse_scores(tape: ad.Tape, reps: Tensor, store, counters: CostCounters) -> Tensor:
    """Bilinear score table over all ordered pairs, shape (n, n).

    Two matrix products of sizes (n, rep_dim) and (n, n); callers ignore
    entries with antecedent index >= anaphor index.
    """
    w = tape.param(store, "coarse_bilinear")
    table = ad.matmul(ad.matmul(reps, w), ad.transpose(reps))
    counters.sc_pairs += reps.shape[0] ** 2
    return table


def coarse_score(tape: ad.Tape, gi: Tensor, gj: Tensor, store) -> Tensor:
    return ad.dot(gi, ad.matmul(tape.param(store, "coarse_bilinear"), gj))
