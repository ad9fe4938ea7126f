"""Coreference evaluation: MUC, B-cubed, and entity CEAF (phi4).

All three follow the CoNLL scorer's conventions: each metric reduces to
precision/recall numerators and denominators, which aggregate across
documents before division; precision or recall with a zero denominator is 0,
and F1 is 0 when P + R is 0. The headline number is the arithmetic mean of
the three F1 values.

Metric lineage: MUC per Vilain et al. (1995) partition counting, B-cubed per
Bagga and Baldwin (1998), CEAF with the phi4 similarity of Luo (2005) under
an optimal one-to-one cluster alignment.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

__all__ = [
    "MetricScore",
    "MetricReport",
    "muc",
    "b_cubed",
    "ceaf_phi4",
    "avg_f1",
    "corpus_report",
    "phi4",
]

Cluster = frozenset
Clustering = Sequence[Iterable[Hashable]]


@dataclass(frozen=True)
class MetricScore:
    precision: float
    recall: float
    f1: float

    def to_dict(self) -> dict:
        return {"p": self.precision, "r": self.recall, "f1": self.f1}


@dataclass(frozen=True)
class MetricReport:
    muc: MetricScore
    bcub: MetricScore
    ceafe: MetricScore
    avg_f1: float

    def to_dict(self) -> dict:
        return {
            "muc": self.muc.to_dict(),
            "bcub": self.bcub.to_dict(),
            "ceafe": self.ceafe.to_dict(),
            "avg_f1": self.avg_f1,
        }


def _normalize(clustering: Clustering) -> list[frozenset]:
    return [frozenset(c) for c in clustering]


def _mention_map(clusters: list[frozenset]) -> dict:
    mapping: dict = {}
    for cid, cluster in enumerate(clusters):
        for m in cluster:
            mapping[m] = cid
    return mapping


def _prf(p_num: float, p_den: float, r_num: float, r_den: float) -> MetricScore:
    p = p_num / p_den if p_den > 0 else 0.0
    r = r_num / r_den if r_den > 0 else 0.0
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return MetricScore(precision=p, recall=r, f1=f1)


# --- MUC -------------------------------------------------------------------


def _muc_side(key: list[frozenset], response: list[frozenset]) -> tuple[float, float]:
    """Vilain recall counts of `key` against `response`: each key cluster
    contributes |c| minus the number of response partitions it is split into
    (unaligned mentions count as their own partitions)."""
    response_of = _mention_map(response)
    num = 0.0
    den = 0.0
    for cluster in key:
        partitions = set()
        unaligned = 0
        for m in cluster:
            if m in response_of:
                partitions.add(response_of[m])
            else:
                unaligned += 1
        num += len(cluster) - (len(partitions) + unaligned)
        den += len(cluster) - 1
    return num, den


def muc_counts(gold: Clustering, pred: Clustering) -> tuple[float, float, float, float]:
    g, p = _normalize(gold), _normalize(pred)
    r_num, r_den = _muc_side(g, p)
    p_num, p_den = _muc_side(p, g)
    return p_num, p_den, r_num, r_den


def muc(gold: Clustering, pred: Clustering) -> MetricScore:
    return _prf(*muc_counts(gold, pred))


# --- B-cubed ---------------------------------------------------------------


def _b_cubed_side(key: list[frozenset], response: list[frozenset]) -> tuple[float, float]:
    response_of = _mention_map(response)
    num = 0.0
    den = 0
    for cluster in key:
        for m in cluster:
            den += 1
            rid = response_of.get(m)
            if rid is not None:
                num += len(cluster & response[rid]) / len(cluster)
    return num, den


def b_cubed_counts(gold: Clustering, pred: Clustering) -> tuple[float, float, float, float]:
    g, p = _normalize(gold), _normalize(pred)
    r_num, r_den = _b_cubed_side(g, p)
    p_num, p_den = _b_cubed_side(p, g)
    return p_num, p_den, r_num, r_den


def b_cubed(gold: Clustering, pred: Clustering) -> MetricScore:
    return _prf(*b_cubed_counts(gold, pred))


# --- CEAF phi4 -------------------------------------------------------------


def phi4(a: frozenset, b: frozenset) -> float:
    return 2.0 * len(a & b) / (len(a) + len(b))


def _ceaf_alignment_value(g: list[frozenset], p: list[frozenset]) -> float:
    if not g or not p:
        return 0.0
    sim = np.array([[phi4(a, b) for b in p] for a in g])
    rows, cols = linear_sum_assignment(-sim)
    return float(sim[rows, cols].sum())


def ceaf_phi4_counts(gold: Clustering, pred: Clustering) -> tuple[float, float, float, float]:
    g, p = _normalize(gold), _normalize(pred)
    value = _ceaf_alignment_value(g, p)
    return value, float(len(p)), value, float(len(g))


def ceaf_phi4(gold: Clustering, pred: Clustering) -> MetricScore:
    return _prf(*ceaf_phi4_counts(gold, pred))


# --- Aggregation -----------------------------------------------------------


def avg_f1(scores: Sequence[MetricScore]) -> float:
    if len(scores) != 3:
        raise ValueError(f"expected three metric scores, got {len(scores)}")
    return sum(s.f1 for s in scores) / 3.0


def corpus_report(doc_pairs: Sequence[tuple[Clustering, Clustering]]) -> MetricReport:
    """Corpus-level scores: numerators/denominators summed over documents."""
    totals = {name: np.zeros(4) for name in ("muc", "bcub", "ceafe")}
    for gold, pred in doc_pairs:
        totals["muc"] += muc_counts(gold, pred)
        totals["bcub"] += b_cubed_counts(gold, pred)
        totals["ceafe"] += ceaf_phi4_counts(gold, pred)
    scores = {name: _prf(*vals) for name, vals in totals.items()}
    return MetricReport(
        muc=scores["muc"],
        bcub=scores["bcub"],
        ceafe=scores["ceafe"],
        avg_f1=avg_f1([scores["muc"], scores["bcub"], scores["ceafe"]]),
    )
