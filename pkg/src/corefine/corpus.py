"""Document model, jsonlines ingestion, embedding tables, candidate spans.

The interchange format is one JSON object per line:

    {"doc_key": str, "genre": int,
     "sentences": [[token, ...], ...],
     "speakers":  [[speaker_id, ...], ...],   # parallel to sentences
     "clusters":  [[[start, end], ...], ...]}  # global token indices, end inclusive

All types are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

__all__ = [
    "CorpusFormatError",
    "Token",
    "Span",
    "Document",
    "load_documents",
    "write_documents",
    "document_to_record",
    "document_from_record",
    "load_embeddings",
    "attach_embeddings",
    "candidate_spans",
]


class CorpusFormatError(ValueError):
    """Malformed corpus input; carries the offending line and field."""

    def __init__(self, message: str, line: Optional[int] = None, field_name: Optional[str] = None):
        self.line = line
        self.field = field_name
        loc = f" (line {line}" + (f", field {field_name!r})" if field_name else ")") if line else ""
        super().__init__(message + loc)


@dataclass(frozen=True, order=True)
class Span:
    """Contiguous token range, end inclusive."""

    start: int
    end: int

    def __post_init__(self):
        if self.start < 0 or self.end < self.start:
            raise ValueError(f"invalid span ({self.start}, {self.end})")

    @property
    def width(self) -> int:
        return self.end - self.start + 1


@dataclass(frozen=True)
class Token:
    text: str
    speaker: int
    sentence_index: int


@dataclass(frozen=True)
class Document:
    doc_key: str
    genre: int
    tokens: tuple[Token, ...]
    gold_clusters: tuple[frozenset[Span], ...]
    embeddings: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        last = -1
        for t in self.tokens:
            if t.sentence_index < last:
                raise ValueError(f"{self.doc_key}: sentence_index must be nondecreasing")
            last = t.sentence_index
        seen: set[Span] = set()
        for cluster in self.gold_clusters:
            if len(cluster) < 2:
                raise ValueError(f"{self.doc_key}: gold cluster with fewer than 2 mentions")
            for span in cluster:
                if span in seen:
                    raise ValueError(f"{self.doc_key}: span {span} appears in two clusters")
                seen.add(span)
                if span.end >= len(self.tokens):
                    raise ValueError(f"{self.doc_key}: gold span {span} out of token range")
                if (
                    self.tokens[span.start].sentence_index
                    != self.tokens[span.end].sentence_index
                ):
                    raise ValueError(f"{self.doc_key}: gold span {span} crosses a sentence")

    @property
    def num_tokens(self) -> int:
        return len(self.tokens)

    def sentence_bounds(self) -> list[tuple[int, int]]:
        """Half-open (start, stop) token ranges, one per sentence."""
        bounds: list[tuple[int, int]] = []
        start = 0
        for i in range(1, len(self.tokens) + 1):
            if i == len(self.tokens) or self.tokens[i].sentence_index != self.tokens[start].sentence_index:
                bounds.append((start, i))
                start = i
        return bounds

    def words(self) -> list[str]:
        return [t.text for t in self.tokens]


def document_from_record(rec: dict, line: Optional[int] = None) -> Document:
    for key in ("doc_key", "genre", "sentences", "speakers", "clusters"):
        if key not in rec:
            raise CorpusFormatError(f"missing field {key!r}", line, key)
    sentences = rec["sentences"]
    speakers = rec["speakers"]
    if len(sentences) != len(speakers):
        raise CorpusFormatError("speakers not parallel to sentences", line, "speakers")
    tokens: list[Token] = []
    for s_idx, (words, spks) in enumerate(zip(sentences, speakers)):
        if len(words) != len(spks):
            raise CorpusFormatError(
                f"sentence {s_idx}: {len(words)} tokens but {len(spks)} speakers", line, "speakers"
            )
        for w, spk in zip(words, spks):
            tokens.append(Token(text=str(w), speaker=int(spk), sentence_index=s_idx))
    clusters = []
    for cl in rec["clusters"]:
        spans = []
        for pair in cl:
            if len(pair) != 2:
                raise CorpusFormatError(f"bad mention {pair!r}", line, "clusters")
            spans.append(Span(int(pair[0]), int(pair[1])))
        clusters.append(frozenset(spans))
    try:
        return Document(
            doc_key=str(rec["doc_key"]),
            genre=int(rec["genre"]),
            tokens=tuple(tokens),
            gold_clusters=tuple(clusters),
        )
    except ValueError as e:
        raise CorpusFormatError(str(e), line, "clusters") from e


def document_to_record(doc: Document, predicted: Optional[Sequence[Iterable[Span]]] = None) -> dict:
    sentences: list[list[str]] = []
    speakers: list[list[int]] = []
    for start, stop in doc.sentence_bounds():
        sentences.append([doc.tokens[i].text for i in range(start, stop)])
        speakers.append([doc.tokens[i].speaker for i in range(start, stop)])
    rec = {
        "doc_key": doc.doc_key,
        "genre": doc.genre,
        "sentences": sentences,
        "speakers": speakers,
        "clusters": [
            [[s.start, s.end] for s in sorted(cluster)] for cluster in doc.gold_clusters
        ],
    }
    if predicted is not None:
        rec["predicted_clusters"] = [
            [[s.start, s.end] for s in sorted(cluster)] for cluster in predicted
        ]
    return rec


def load_documents(path) -> list[Document]:
    """Parse a jsonlines corpus; preserves order, validates every document."""
    path = Path(path)
    if not path.exists():
        raise CorpusFormatError(f"corpus file not found: {path}")
    docs: list[Document] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as e:
                raise CorpusFormatError(f"invalid JSON: {e.msg}", lineno) from e
            docs.append(document_from_record(rec, line=lineno))
    return docs


def write_documents(docs: Sequence[Document], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for doc in docs:
            f.write(json.dumps(document_to_record(doc), sort_keys=False))
            f.write("\n")


def load_embeddings(path, dim: int) -> dict[str, np.ndarray]:
    """Textual embedding table: token followed by `dim` floats per line.

    Lookups should go through :func:`attach_embeddings`, which maps unknown
    words to a deterministic all-zero vector.
    """
    table: dict[str, np.ndarray] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            parts = raw.split()
            if not parts:
                continue
            if len(parts) != dim + 1:
                raise CorpusFormatError(
                    f"expected {dim} floats, found {len(parts) - 1}", lineno, "vector"
                )
            try:
                vec = np.array([float(x) for x in parts[1:]], dtype=np.float64)
            except ValueError as e:
                raise CorpusFormatError(f"bad float: {e}", lineno, "vector") from e
            table[parts[0]] = vec
    return table


def attach_embeddings(doc: Document, table: dict[str, np.ndarray], dim: int) -> Document:
    """Return a copy of the document with fixed per-token vectors attached."""
    oov = np.zeros(dim, dtype=np.float64)
    rows = np.stack([table.get(t.text, oov) for t in doc.tokens]) if doc.tokens else np.zeros((0, dim))
    return Document(
        doc_key=doc.doc_key,
        genre=doc.genre,
        tokens=doc.tokens,
        gold_clusters=doc.gold_clusters,
        embeddings=rows,
    )


def candidate_spans(doc: Document, max_width: int) -> list[Span]:
    """Every within-sentence span of width <= max_width, ordered by (start, end)."""
    if max_width < 1:
        raise ValueError(f"max_width must be >= 1, got {max_width}")
    spans: list[Span] = []
    for start, stop in doc.sentence_bounds():
        for i in range(start, stop):
            for j in range(i, min(i + max_width, stop)):
                spans.append(Span(i, j))
    spans.sort(key=lambda s: (s.start, s.end))
    return spans
