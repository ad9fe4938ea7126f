"""Contextual token states and span representations.

Tokens are encoded per sentence by a stacked bidirectional gated recurrent
unit (state reset at sentence boundaries). The normative cell, per direction
with hidden width h and packed parameters wx (3h, in), wh (3h, h), b (3h,):

    p  = wx @ x_t + b            q = wh @ h_prev
    z  = sigmoid(p[0:h]   + q[0:h])          # update gate
    r  = sigmoid(p[h:2h]  + q[h:2h])         # reset gate
    c  = tanh   (p[2h:3h] + r * q[2h:3h])    # candidate state
    h_t = z * h_prev + (1 - z) * c

A span's representation concatenates the boundary states at its start and
end, an attention-weighted sum of the raw token embeddings inside the span
(weights from a learned linear score of the token states), and a learned
span-width bucket embedding:

    rep_dim = 2 * (2 * hidden_dim) + token_dim + width_dim
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import Document, Span

__all__ = [
    "EncoderConfig",
    "WIDTH_BUCKETS",
    "width_bucket",
    "encoder_param_shapes",
    "encode_tokens",
    "span_representation",
    "span_representations",
    "span_rep_dim",
]

# Bucket lower bounds for span widths 1,2,3,4,5-7,8-15,16-31,32+.
WIDTH_BUCKETS = (1, 2, 3, 4, 5, 8, 16, 32)


def width_bucket(width: int) -> int:
    for i in range(len(WIDTH_BUCKETS) - 1, -1, -1):
        if width >= WIDTH_BUCKETS[i]:
            return i
    raise ValueError(f"bad span width {width}")


@dataclass(frozen=True)
class EncoderConfig:
    token_dim: int = 10
    hidden_dim: int = 8
    num_layers: int = 1
    width_dim: int = 4

    def __post_init__(self):
        if min(self.token_dim, self.hidden_dim, self.num_layers, self.width_dim) <= 0:
            raise ValueError("encoder dims must be positive")


def span_rep_dim(cfg: EncoderConfig) -> int:
    return 4 * cfg.hidden_dim + cfg.token_dim + cfg.width_dim


def encoder_param_shapes(cfg: EncoderConfig) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    h = cfg.hidden_dim
    for layer in range(cfg.num_layers):
        in_dim = cfg.token_dim if layer == 0 else 2 * h
        for direction in ("fwd", "bwd"):
            p = f"encoder.l{layer}.{direction}"
            shapes[f"{p}.wx"] = (3 * h, in_dim)
            shapes[f"{p}.wh"] = (3 * h, h)
            shapes[f"{p}.b"] = (3 * h,)
    shapes["encoder.head.w"] = (2 * h,)
    shapes["embed.width"] = (len(WIDTH_BUCKETS), cfg.width_dim)
    return shapes


def _gru_direction(
    x_rows: list[Tensor], store, prefix: str, hidden: int, tape: ad.Tape
) -> list[Tensor]:
    wx = tape.param(store, f"{prefix}.wx")
    wh = tape.param(store, f"{prefix}.wh")
    b = tape.param(store, f"{prefix}.b")
    ones = tape.const(np.ones(hidden))
    h = tape.const(np.zeros(hidden))
    states = []
    for x in x_rows:
        p = ad.add(ad.matmul(wx, x), b)
        q = ad.matmul(wh, h)
        z = ad.sigmoid(ad.add(ad.slice1d(p, 0, hidden), ad.slice1d(q, 0, hidden)))
        r = ad.sigmoid(
            ad.add(ad.slice1d(p, hidden, 2 * hidden), ad.slice1d(q, hidden, 2 * hidden))
        )
        c = ad.tanh(
            ad.add(
                ad.slice1d(p, 2 * hidden, 3 * hidden),
                ad.mul(r, ad.slice1d(q, 2 * hidden, 3 * hidden)),
            )
        )
        h = ad.add(ad.mul(z, h), ad.mul(ad.sub(ones, z), c))
        states.append(h)
    return states


def encode_tokens(
    tape: ad.Tape, doc: Document, token_embeds: Tensor, store, cfg: EncoderConfig
) -> Tensor:
    """Per-token contextual states, shape (num_tokens, 2 * hidden_dim)."""
    if token_embeds.shape != (doc.num_tokens, cfg.token_dim):
        raise ad.ShapeError(
            "encode_tokens", [token_embeds.shape], f"expected ({doc.num_tokens}, {cfg.token_dim})"
        )
    layer_input = token_embeds
    for layer in range(cfg.num_layers):
        out_rows: list[Tensor] = [None] * doc.num_tokens  # type: ignore[list-item]
        for start, stop in doc.sentence_bounds():
            xs = [ad.take_row(layer_input, t) for t in range(start, stop)]
            fwd = _gru_direction(xs, store, f"encoder.l{layer}.fwd", cfg.hidden_dim, tape)
            bwd = _gru_direction(
                list(reversed(xs)), store, f"encoder.l{layer}.bwd", cfg.hidden_dim, tape
            )
            bwd.reverse()
            for off, t in enumerate(range(start, stop)):
                out_rows[t] = ad.concat([fwd[off], bwd[off]])
        layer_input = ad.stack(out_rows)
    return layer_input


def span_representation(
    tape: ad.Tape,
    span: Span,
    token_states: Tensor,
    token_embeds: Tensor,
    store,
    cfg: EncoderConfig,
) -> Tensor:
    """Single-span path; the batched variant must agree with this exactly."""
    head_w = tape.param(store, "encoder.head.w")
    width_table = tape.param(store, "embed.width")
    scores = ad.matmul(token_states, head_w)
    attn = ad.softmax(ad.take(scores, list(range(span.start, span.end + 1))))
    head = ad.matmul(attn, ad.take_rows(token_embeds, list(range(span.start, span.end + 1))))
    return ad.concat(
        [
            ad.take_row(token_states, span.start),
            ad.take_row(token_states, span.end),
            head,
            ad.take_row(width_table, width_bucket(span.width)),
        ]
    )


def span_representations(
    tape: ad.Tape,
    spans: list[Span],
    token_states: Tensor,
    token_embeds: Tensor,
    store,
    cfg: EncoderConfig,
) -> Tensor:
    """Representations for many spans at once, shape (len(spans), rep_dim).

    Head attention is batched per span width so the tape stays small on
    wide documents. Row order matches ``spans``.
    """
    if not spans:
        return tape.const(np.zeros((0, span_rep_dim(cfg))))
    head_w = tape.param(store, "encoder.head.w")
    width_table = tape.param(store, "embed.width")
    scores = ad.matmul(token_states, head_w)

    by_width: dict[int, list[int]] = {}
    for k, s in enumerate(spans):
        by_width.setdefault(s.width, []).append(k)

    head_chunks: list[Tensor] = []
    chunk_order: list[int] = []
    for w in sorted(by_width):
        members = by_width[w]
        starts = np.array([spans[k].start for k in members], dtype=np.intp)
        cols = [ad.take(scores, starts + t) for t in range(w)]
        attn = ad.softmax(ad.transpose(ad.stack(cols)))
        head = None
        for t in range(w):
            term = ad.scale_rows(ad.take_rows(token_embeds, starts + t), ad.take_col(attn, t))
            head = term if head is None else ad.add(head, term)
        head_chunks.append(head)
        chunk_order.extend(members)

    heads_concat = head_chunks[0] if len(head_chunks) == 1 else ad.concat(head_chunks, axis=0)
    inverse = np.empty(len(spans), dtype=np.intp)
    inverse[np.array(chunk_order, dtype=np.intp)] = np.arange(len(spans))
    heads = ad.take_rows(heads_concat, inverse)

    starts_all = [s.start for s in spans]
    ends_all = [s.end for s in spans]
    buckets = [width_bucket(s.width) for s in spans]
    return ad.concat(
        [
            ad.take_rows(token_states, starts_all),
            ad.take_rows(token_states, ends_all),
            heads,
            ad.take_rows(width_table, buckets),
        ],
        axis=1,
    )
