"""Metric oracles: hand-worked examples, brute-force CEAF, invariances."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corefine.metrics import (
    MetricScore,
    avg_f1,
    b_cubed,
    ceaf_phi4,
    corpus_report,
    muc,
    phi4,
)


def C(*mentions):
    return frozenset(mentions)


# ---------------------------------------------------------------------------
# identical / disjoint boundary behaviour
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("metric", [muc, b_cubed, ceaf_phi4])
def test_identical_clusterings_score_one(metric):
    clusters = [C("a", "b", "c"), C("d", "e")]
    score = metric(clusters, clusters)
    assert score.precision == score.recall == score.f1 == 1.0


@pytest.mark.parametrize("metric", [muc, b_cubed, ceaf_phi4])
def test_mention_disjoint_clusterings_score_zero(metric):
    gold = [C("a", "b")]
    pred = [C("x", "y")]
    score = metric(gold, pred)
    assert score.precision == score.recall == score.f1 == 0.0


def test_empty_prediction_zero_by_convention():
    gold = [C("a", "b", "c")]
    score = muc(gold, [])
    assert score.recall == 0.0 and score.precision == 0.0 and score.f1 == 0.0


# ---------------------------------------------------------------------------
# hand-worked examples
# ---------------------------------------------------------------------------


def test_muc_split_cluster_recall_half():
    # gold {a,b,c}; pred {a,b}: recall (3-2)/(3-1) = 0.5, precision (2-1)/(2-1) = 1
    gold = [C("a", "b", "c")]
    pred = [C("a", "b")]
    score = muc(gold, pred)
    assert score.recall == pytest.approx(0.5)
    assert score.precision == pytest.approx(1.0)
    assert score.f1 == pytest.approx(2 / 3)


def test_muc_two_gold_clusters_merged_in_pred():
    # gold {a,b} {c,d}; pred {a,b,c,d}: R = (1+1)/(1+1) = 1, P = (4-2)/3
    gold = [C("a", "b"), C("c", "d")]
    pred = [C("a", "b", "c", "d")]
    score = muc(gold, pred)
    assert score.recall == pytest.approx(1.0)
    assert score.precision == pytest.approx(2 / 3)
    assert score.recall <= 1.0


def test_b_cubed_split_cluster():
    # gold {a,b,c}; pred {a,b},{c}: R per mention = 2/3,2/3,1/3; P = 1
    gold = [C("a", "b", "c")]
    pred = [C("a", "b"), C("c")]
    score = b_cubed(gold, pred)
    assert score.recall == pytest.approx(5 / 9)
    assert score.precision == pytest.approx(1.0)


def test_b_cubed_singletons_recall_half():
    gold = [C("a", "b")]
    pred = [C("a"), C("b")]
    score = b_cubed(gold, pred)
    assert score.recall == pytest.approx(0.5)
    assert score.precision == pytest.approx(1.0)


def test_b_cubed_role_swap_symmetry():
    gold = [C("a", "b", "c"), C("d", "e")]
    pred = [C("a", "b"), C("c", "d", "e")]
    assert b_cubed(gold, pred).precision == pytest.approx(b_cubed(pred, gold).recall)
    assert b_cubed(gold, pred).recall == pytest.approx(b_cubed(pred, gold).precision)


def test_ceaf_phi4_hand_case():
    # gold {a,b,c}; pred {a,b},{c}: best alignment phi4 = 2*2/5 = 0.8
    # R = 0.8/1, P = 0.8/2
    gold = [C("a", "b", "c")]
    pred = [C("a", "b"), C("c")]
    score = ceaf_phi4(gold, pred)
    assert score.recall == pytest.approx(0.8)
    assert score.precision == pytest.approx(0.4)
    assert score.f1 == pytest.approx(2 * 0.8 * 0.4 / 1.2)


def test_ceaf_phi4_pair_split():
    gold = [C("a", "b")]
    pred = [C("a"), C("b")]
    score = ceaf_phi4(gold, pred)
    assert score.recall == pytest.approx(2 / 3)
    assert score.precision == pytest.approx(1 / 3)


def test_muc_pred_side_unaligned_mentions():
    # pred cluster spanning two gold clusters plus an unseen mention
    gold = [C("a", "b"), C("c", "d")]
    pred = [C("a", "c", "z")]
    score = muc(gold, pred)
    # precision: cluster {a,c,z} partitions into gold {a},{c} plus unaligned z
    assert score.precision == pytest.approx(0.0)
    assert score.recall == pytest.approx(0.0)


# ---------------------------------------------------------------------------
# avg F1
# ---------------------------------------------------------------------------


def one(x):
    return MetricScore(precision=x, recall=x, f1=x)


def test_avg_f1_unit_and_zero():
    assert avg_f1([one(1.0), one(1.0), one(1.0)]) == 1.0
    assert avg_f1([one(0.0), one(0.0), one(0.0)]) == 0.0


def test_avg_f1_headline_aggregation():
    # F1 triple (0.804, 0.708, 0.676) averages to about 0.729
    got = avg_f1([one(0.804), one(0.708), one(0.676)])
    assert got == pytest.approx(0.72933333, abs=1e-8)
    assert round(got, 2) == 0.73


# ---------------------------------------------------------------------------
# CEAF vs permutation brute force
# ---------------------------------------------------------------------------


def brute_force_ceaf_value(gold, pred):
    if not gold or not pred:
        return 0.0
    n = max(len(gold), len(pred))
    best = 0.0
    for perm in itertools.permutations(range(n)):
        total = 0.0
        for gi, pi in enumerate(perm):
            if gi < len(gold) and pi < len(pred):
                total += phi4(gold[gi], pred[pi])
        best = max(best, total)
    return best


def random_clustering(rng, mentions, max_clusters):
    labels = rng.integers(0, max_clusters, size=len(mentions))
    clusters = {}
    for m, l in zip(mentions, labels):
        clusters.setdefault(int(l), set()).add(m)
    return [frozenset(c) for c in clusters.values()]


def test_ceaf_assignment_matches_brute_force_on_200_cases():
    rng = np.random.default_rng(0)
    mentions = list("abcdefghijkl")
    for _ in range(200):
        gold = random_clustering(rng, mentions[: int(rng.integers(2, 13))], int(rng.integers(1, 7)))
        pred = random_clustering(rng, mentions[: int(rng.integers(2, 13))], int(rng.integers(1, 7)))
        if len(gold) > 6 or len(pred) > 6:
            continue
        got = ceaf_phi4(gold, pred)
        value = brute_force_ceaf_value(gold, pred)
        assert got.recall == pytest.approx(value / len(gold) if gold else 0.0, abs=1e-12)
        assert got.precision == pytest.approx(value / len(pred) if pred else 0.0, abs=1e-12)


# ---------------------------------------------------------------------------
# invariances and aggregation
# ---------------------------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_metrics_invariant_to_cluster_order(seed):
    rng = np.random.default_rng(seed)
    mentions = [f"m{i}" for i in range(10)]
    gold = random_clustering(rng, mentions, 4)
    pred = random_clustering(rng, mentions[: int(rng.integers(4, 11))], 4)
    shuffled_gold = [gold[i] for i in rng.permutation(len(gold))]
    shuffled_pred = [pred[i] for i in rng.permutation(len(pred))]
    for metric in (muc, b_cubed, ceaf_phi4):
        a, b = metric(gold, pred), metric(shuffled_gold, shuffled_pred)
        assert a.precision == pytest.approx(b.precision, abs=1e-12)
        assert a.recall == pytest.approx(b.recall, abs=1e-12)
        assert a.f1 == pytest.approx(b.f1, abs=1e-12)


def test_corpus_report_aggregates_counts_not_scores():
    # two docs with different sizes: aggregation must sum numerators and
    # denominators, which differs from averaging per-document F1
    doc1 = ([C("a", "b", "c")], [C("a", "b")])
    doc2 = ([C("x", "y")], [C("x", "y")])
    report = corpus_report([doc1, doc2])
    # MUC: R = (1 + 1) / (2 + 1) = 2/3, P = (1 + 1) / (1 + 1) = 1
    assert report.muc.recall == pytest.approx(2 / 3)
    assert report.muc.precision == pytest.approx(1.0)
    per_doc_mean = (muc(*doc1).recall + muc(*doc2).recall) / 2
    assert report.muc.recall != pytest.approx(per_doc_mean)


def test_report_json_shape():
    report = corpus_report([([C("a", "b")], [C("a", "b")])])
    d = report.to_dict()
    assert set(d) == {"muc", "bcub", "ceafe", "avg_f1"}
    for key in ("muc", "bcub", "ceafe"):
        assert set(d[key]) == {"p", "r", "f1"}
    assert d["avg_f1"] == pytest.approx(1.0)
