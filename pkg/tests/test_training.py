"""Gold antecedent extraction, marginal likelihood, optimisation loop."""

import math

import numpy as np
import pytest

from corefine import autodiff as ad
from corefine.corpus import Span
from corefine.inference import AntecedentBeam, InferenceConfig, SpanBeam, forward_document
from corefine.model import build_params, build_vocab
from corefine.synth import SyntheticSpec, generate_synthetic
from corefine.training import (
    EPSILON,
    TrainConfig,
    document_loss,
    gold_antecedents,
    gold_masks,
    marginal_nll,
    train,
)

from conftest import TINY_MODEL, make_doc


def beam_of(n):
    return SpanBeam(spans=tuple(Span(i, i) for i in range(n)), candidate_index=tuple(range(n)))


def test_no_gold_clusters_every_set_is_epsilon():
    beam = beam_of(4)
    ante = AntecedentBeam(candidates=((), (0,), (0, 1), (1, 2)))
    golds = gold_antecedents(beam, (), ante)
    assert golds == [frozenset({EPSILON})] * 4


def test_two_mention_cluster_later_points_to_earlier():
    beam = beam_of(3)
    ante = AntecedentBeam(candidates=((), (0,), (0, 1)))
    gold_clusters = (frozenset({Span(0, 0), Span(2, 2)}),)
    golds = gold_antecedents(beam, gold_clusters, ante)
    assert golds[0] == frozenset({EPSILON})
    assert golds[1] == frozenset({EPSILON})
    assert golds[2] == frozenset({0})


def test_pruned_gold_antecedent_falls_back_to_epsilon():
    beam = beam_of(3)
    # span 2's candidate set omits position 0 even though it is gold-coreferent
    ante = AntecedentBeam(candidates=((), (0,), (1,)))
    gold_clusters = (frozenset({Span(0, 0), Span(2, 2)}),)
    golds = gold_antecedents(beam, gold_clusters, ante)
    assert golds[2] == frozenset({EPSILON})
    # exhaustive check: with the full candidate set the gold antecedent is found
    full = AntecedentBeam(candidates=((), (0,), (0, 1)))
    assert gold_antecedents(beam, gold_clusters, full)[2] == frozenset({0})


def test_first_gold_mention_in_beam_gets_epsilon():
    beam = beam_of(2)
    ante = AntecedentBeam(candidates=((), (0,)))
    gold_clusters = (frozenset({Span(1, 1), Span(5, 5)}),)  # partner outside beam
    golds = gold_antecedents(beam, gold_clusters, ante)
    assert golds[1] == frozenset({EPSILON})


def test_gold_masks_alignment():
    ante = AntecedentBeam(candidates=((), (0,), (1, 0)))
    golds = [frozenset({EPSILON}), frozenset({0}), frozenset({0, 1})]
    masks = gold_masks(ante, golds)
    np.testing.assert_array_equal(masks[0], [1.0])
    np.testing.assert_array_equal(masks[1], [0.0, 1.0])
    np.testing.assert_array_equal(masks[2], [0.0, 1.0, 1.0])


# ---------------------------------------------------------------------------
# marginal NLL
# ---------------------------------------------------------------------------


def test_loss_zero_when_all_mass_on_gold():
    tape = ad.Tape()
    rows = [ad.softmax_fixed_zero(tape.leaf(np.array([50.0])))]
    masks = [np.array([0.0, 1.0])]
    assert marginal_nll(tape, rows, masks).item() == pytest.approx(0.0, abs=1e-12)


def test_loss_zero_for_epsilon_only_span():
    tape = ad.Tape()
    rows = [ad.softmax_fixed_zero(tape.leaf(np.zeros(0)))]
    masks = [np.array([1.0])]
    assert marginal_nll(tape, rows, masks).item() == 0.0


def test_loss_hand_value_two_zero_score_candidates():
    # scores (0, 0), both gold: P = (1/3, 1/3, 1/3), mass 2/3, loss -log(2/3)
    tape = ad.Tape()
    rows = [ad.softmax_fixed_zero(tape.leaf(np.zeros(2)))]
    masks = [np.array([0.0, 1.0, 1.0])]
    got = marginal_nll(tape, rows, masks).item()
    assert got == pytest.approx(-math.log(2.0 / 3.0), abs=1e-12)


def test_loss_nonnegative_and_zero_iff_full_mass():
    rng = np.random.default_rng(0)
    tape = ad.Tape()
    rows, masks = [], []
    for k in range(6):
        scores = rng.normal(size=k % 4)
        row = ad.softmax_fixed_zero(tape.leaf(scores))
        mask = np.zeros(row.shape[0])
        mask[int(rng.integers(row.shape[0]))] = 1.0
        rows.append(row)
        masks.append(mask)
    loss = marginal_nll(tape, rows, masks).item()
    assert loss > 0.0


def test_loss_rejects_empty_mask():
    tape = ad.Tape()
    rows = [ad.softmax_fixed_zero(tape.leaf(np.zeros(1)))]
    with pytest.raises(AssertionError):
        marginal_nll(tape, rows, [np.zeros(2)])


def test_loss_gradient_matches_finite_differences(tiny_setup):
    doc, mcfg, icfg, store, vidx = tiny_setup

    def loss_fn(s):
        tape = ad.Tape()
        loss, _, _ = document_loss(tape, doc, s, mcfg, icfg, vidx)
        return loss

    report = ad.finite_difference_check(loss_fn, store, epsilon=1e-5)
    assert max(report.values()) < 1e-4, report


def test_every_used_parameter_block_receives_gradient(tiny_setup):
    doc, mcfg, _, store, vidx = tiny_setup
    # generous beam so multi-token spans (head attention) reach the loss
    icfg = InferenceConfig(
        n_iters=2, max_antecedents=5, mode="coarse_to_fine", spans_per_token=3.0
    )
    tape = ad.Tape()
    loss, _, _ = document_loss(tape, doc, store, mcfg, icfg, vidx)
    grads = ad.backward(loss)
    dead = [name for name, g in grads.items() if not np.any(g)]
    assert dead == [], f"dead parameter blocks: {dead}"
    assert set(grads) == set(store.names())


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


def small_corpus(seed, n_docs=6):
    spec = SyntheticSpec(
        n_docs=n_docs,
        entities=3,
        mentions_per_entity=3,
        attr_alphabet=2,
        ambiguity_rate=0.0,
        vocab_size=24,
        sent_len_min=4,
        sent_len_max=6,
        genre_count=TINY_MODEL.genre_count,
        seed=seed,
    )
    return generate_synthetic(spec)


SMALL_ICFG = InferenceConfig(
    n_iters=2, max_antecedents=20, spans_per_token=1.2, mode="coarse_to_fine"
)


def test_zero_epochs_returns_initialized_params():
    docs = small_corpus(1)
    tcfg = TrainConfig(epochs=0, seed=5)
    result = train(docs, [], TINY_MODEL, SMALL_ICFG, tcfg)
    vocab = build_vocab(docs)
    expected = build_params(TINY_MODEL, len(vocab), np.random.default_rng(5))
    assert result.log == []
    for name in expected.names():
        np.testing.assert_array_equal(result.store[name], expected[name])


def test_training_reduces_loss():
    docs = small_corpus(2, n_docs=10)
    tcfg = TrainConfig(epochs=3, learning_rate=3e-3, clip_norm=10.0, seed=0)
    result = train(docs, [], TINY_MODEL, SMALL_ICFG, tcfg)
    losses = [entry["train_loss"] for entry in result.log]
    assert losses[-1] < losses[0]


def test_training_is_bit_deterministic(tmp_path):
    docs = small_corpus(3)
    tcfg = TrainConfig(epochs=2, seed=11)
    a = train(docs, [], TINY_MODEL, SMALL_ICFG, tcfg)
    b = train(docs, [], TINY_MODEL, SMALL_ICFG, tcfg)
    pa, pb = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    a.store.save(pa, meta={"vocab": a.vocab})
    b.store.save(pb, meta={"vocab": b.vocab})
    assert pa.read_bytes() == pb.read_bytes()


def test_training_writes_epoch_checkpoints_and_logs(tmp_path):
    docs = small_corpus(4)
    tcfg = TrainConfig(epochs=2, seed=1)
    pattern = str(tmp_path / "epoch{epoch}.ckpt")
    entries = []
    result = train(
        docs, docs[:2], TINY_MODEL, SMALL_ICFG, tcfg,
        checkpoint_pattern=pattern, log_fn=entries.append,
    )
    assert (tmp_path / "epoch1.ckpt").exists() and (tmp_path / "epoch2.ckpt").exists()
    assert [e["epoch"] for e in entries] == [1, 2]
    for entry in entries:
        assert set(entry) >= {"epoch", "train_loss", "dev_avg_f1", "gold_fallback_rate"}
        assert math.isfinite(entry["train_loss"])


def test_empty_corpus_rejected():
    with pytest.raises(ValueError, match="empty"):
        train([], [], TINY_MODEL, SMALL_ICFG, TrainConfig(epochs=1))
