import numpy as np
import pytest

from corefine.corpus import Document, Span, Token
from corefine.inference import InferenceConfig
from corefine.model import ModelConfig, build_params, build_vocab


def make_doc(sentences, speakers=None, clusters=(), doc_key="doc", genre=0):
    """Build a Document from lists of word lists; clusters as ((start, end), ...)."""
    tokens = []
    for s_idx, words in enumerate(sentences):
        spks = speakers[s_idx] if speakers else [0] * len(words)
        for w, spk in zip(words, spks):
            tokens.append(Token(text=w, speaker=spk, sentence_index=s_idx))
    gold = tuple(frozenset(Span(a, b) for a, b in cluster) for cluster in clusters)
    return Document(doc_key=doc_key, genre=genre, tokens=tuple(tokens), gold_clusters=gold)


def random_doc(rng, n_sentences=None, vocab_size=12, max_len=6, n_speakers=2, genre_count=2):
    """Small random document with an occasional 2-mention gold cluster."""
    n_sentences = n_sentences or int(rng.integers(1, 4))
    sentences, speakers = [], []
    for _ in range(n_sentences):
        length = int(rng.integers(2, max_len + 1))
        sentences.append([f"w{int(rng.integers(vocab_size))}" for _ in range(length)])
        speakers.append([int(rng.integers(n_speakers))] * length)
    doc = make_doc(sentences, speakers, genre=int(rng.integers(genre_count)))
    starts = [i for i in range(doc.num_tokens)]
    clusters = ()
    if doc.num_tokens >= 4 and rng.random() < 0.8:
        a, b = sorted(rng.choice(doc.num_tokens, size=2, replace=False).tolist())
        if a != b:
            clusters = (((a, a), (b, b)),)
    return make_doc(sentences, speakers, clusters, genre=doc.genre)


TINY_MODEL = ModelConfig(
    token_dim=5,
    hidden_dim=4,
    width_dim=3,
    ffnn_hidden=8,
    feature_dim=3,
    genre_count=2,
    max_span_width=3,
)


@pytest.fixture
def tiny_model():
    return TINY_MODEL


@pytest.fixture
def tiny_setup():
    """(doc, model config, infer config, param store, vocab index) at toy scale."""
    doc = make_doc(
        [["a", "b", "c", "d"], ["e", "b", "c", "f"]],
        speakers=[[0, 0, 0, 0], [1, 1, 1, 1]],
        clusters=(((1, 2), (5, 6)),),
        genre=1,
    )
    icfg = InferenceConfig(n_iters=2, max_antecedents=3, mode="coarse_to_fine", spans_per_token=0.6)
    vocab = build_vocab([doc])
    vidx = {w: i for i, w in enumerate(vocab)}
    store = build_params(TINY_MODEL, len(vocab), np.random.default_rng(7))
    return doc, TINY_MODEL, icfg, store, vidx
