"""Model configuration, vocabulary, and parameter construction."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import Document
from .encoder import EncoderConfig, encoder_param_shapes, span_rep_dim
from .params import ParamStore, init_uniform
from .scoring import ScoringConfig, scoring_param_shapes

__all__ = ["ModelConfig", "build_vocab", "build_params", "token_embeddings"]

UNK = "<unk>"


@dataclass(frozen=True)
class ModelConfig:
    """Dimensions and structural knobs; inference-time knobs live elsewhere."""

    token_dim: int = 10
    hidden_dim: int = 8
    num_layers: int = 1
    width_dim: int = 4
    ffnn_hidden: int = 16
    feature_dim: int = 4
    genre_count: int = 4
    max_span_width: int = 4
    embedding_source: str = "learned"  # "learned" table or "provided" doc vectors

    def __post_init__(self):
        if self.embedding_source not in ("learned", "provided"):
            raise ValueError(f"bad embedding_source {self.embedding_source!r}")
        if self.max_span_width < 1 or self.genre_count < 1:
            raise ValueError("max_span_width and genre_count must be positive")

    @property
    def encoder(self) -> EncoderConfig:
        return EncoderConfig(
            token_dim=self.token_dim,
            hidden_dim=self.hidden_dim,
            num_layers=self.num_layers,
            width_dim=self.width_dim,
        )

    @property
    def rep_dim(self) -> int:
        return span_rep_dim(self.encoder)

    @property
    def scoring(self) -> ScoringConfig:
        return ScoringConfig(
            rep_dim=self.rep_dim,
            ffnn_hidden=self.ffnn_hidden,
            feature_dim=self.feature_dim,
            genre_count=self.genre_count,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def build_vocab(docs: list[Document]) -> list[str]:
    """Deterministic closed vocabulary: unknown sentinel plus sorted words."""
    words = sorted({t.text for doc in docs for t in doc.tokens})
    return [UNK] + words


def param_shapes(cfg: ModelConfig, vocab_size: int) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    shapes.update(encoder_param_shapes(cfg.encoder))
    shapes.update(scoring_param_shapes(cfg.scoring))
    shapes["gate.w"] = (cfg.rep_dim, 2 * cfg.rep_dim)
    if cfg.embedding_source == "learned":
        shapes["embed.vocab"] = (vocab_size, cfg.token_dim)
    return shapes


def build_params(cfg: ModelConfig, vocab_size: int, rng: np.random.Generator) -> ParamStore:
    return init_uniform(param_shapes(cfg, vocab_size), rng)


def token_embeddings(
    tape: ad.Tape, doc: Document, store: ParamStore, cfg: ModelConfig, vocab_index: dict[str, int]
) -> Tensor:
    """Per-token input vectors, shape (num_tokens, token_dim)."""
    if cfg.embedding_source == "provided":
        if doc.embeddings is None:
            raise ValueError(f"{doc.doc_key}: document has no attached embeddings")
        if doc.embeddings.shape != (doc.num_tokens, cfg.token_dim):
            raise ValueError(
                f"{doc.doc_key}: embeddings shape {doc.embeddings.shape} "
                f"!= ({doc.num_tokens}, {cfg.token_dim})"
            )
        return tape.leaf(doc.embeddings, op="token_embeddings")
    table = tape.param(store, "embed.vocab")
    ids = [vocab_index.get(t.text, 0) for t in doc.tokens]
    return ad.take_rows(table, ids)
