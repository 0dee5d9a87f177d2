"""Entity-name embeddings from averaged word vectors."""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .kg import ParseError

log = logging.getLogger(__name__)

_TOKEN_SPLIT = re.compile(r"[\W_]+", re.UNICODE)


@dataclass(frozen=True)
class WordEmbeddingStore:
    dim: int
    vectors: Mapping[str, np.ndarray]

    def __post_init__(self):
        for word, vec in self.vectors.items():
            if len(vec) != self.dim:
                raise ValueError(f"vector for {word!r} has length {len(vec)}, expected {self.dim}")

    def __len__(self):
        return len(self.vectors)

    def __contains__(self, word):
        return word in self.vectors

    def get(self, word):
        return self.vectors.get(word)


def load_word_embeddings(path) -> WordEmbeddingStore:
    """Read a text vector dump (``word v1 ... vd`` per line, optional ``count dim`` header)."""
    vectors: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\r\n").rstrip(" ").split(" ")
            if not parts or parts == [""]:
                continue
            if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                continue
            word, values = parts[0], parts[1:]
            if dim is None:
                if not values:
                    raise ParseError(path, lineno, "vector line has no values")
                dim = len(values)
            elif len(values) != dim:
                raise ParseError(path, lineno, f"expected {dim} values, got {len(values)}")
            try:
                vec = np.array([float(v) for v in values])
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc)) from None
            vectors.setdefault(word, vec)
    return WordEmbeddingStore(dim or 0, vectors)


def write_word_embeddings(store: WordEmbeddingStore, path, header: bool = True) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if header:
            fh.write(f"{len(store)} {store.dim}\n")
        for word, vec in store.vectors.items():
            fh.write(word + " " + " ".join(repr(float(x)) for x in vec) + "\n")


def merge_stores(stores: Sequence[WordEmbeddingStore]) -> WordEmbeddingStore:
    """Concatenate stores; the first store wins on word collisions."""
    if not stores:
        raise ValueError("no stores to merge")
    dims = {s.dim for s in stores}
    if len(dims) != 1:
        raise ValueError(f"stores have different dimensions: {sorted(dims)}")
    merged: dict[str, np.ndarray] = {}
    collisions = 0
    for store in stores:
        for word, vec in store.vectors.items():
            if word in merged:
                collisions += 1
                continue
            merged[word] = vec
    if collisions:
        log.warning("%d duplicate words across embedding files; kept first occurrence", collisions)
    return WordEmbeddingStore(stores[0].dim, merged)


def tokenize_name(name: str) -> list[str]:
    return [tok for tok in _TOKEN_SPLIT.split(name.lower()) if tok]


def name_embedding(name: str, store: WordEmbeddingStore):
    """Mean vector of the in-vocabulary tokens of ``name``.

    Returns ``(vector, oov)``; ``oov`` is true when no token is known, in which
    case the vector is all zeros.
    """
    hits = [store.vectors[tok] for tok in tokenize_name(name) if tok in store.vectors]
    if not hits:
        return np.zeros(store.dim), True
    return np.mean(hits, axis=0), False


@dataclass(frozen=True)
class NameEmbeddingMatrix:
    values: np.ndarray
    oov: np.ndarray


def name_embedding_matrix(names: Iterable[str], store: WordEmbeddingStore) -> NameEmbeddingMatrix:
    rows, flags = [], []
    for name in names:
        vec, oov = name_embedding(name, store)
        rows.append(vec)
        flags.append(oov)
    values = np.array(rows, dtype=float).reshape(len(rows), store.dim)
    oov = np.array(flags, dtype=bool)
    # a known-token mean can still come out exactly zero
    oov |= ~values.any(axis=1)
    values[oov] = 0.0
    return NameEmbeddingMatrix(values, oov)


def semantic_similarity_matrix(names1: Sequence[str], names2: Sequence[str],
                               store: WordEmbeddingStore) -> np.ndarray:
    """Cosine similarity of name embeddings; OOV rows and columns are 0."""
    a = name_embedding_matrix(names1, store)
    b = name_embedding_matrix(names2, store)
    ua = _unit_rows(a.values)
    ub = _unit_rows(b.values)
    return np.clip(ua @ ub.T, -1.0, 1.0)


def _unit_rows(values):
    norms = np.linalg.norm(values, axis=1, keepdims=True)
    return np.divide(values, norms, out=np.zeros_like(values), where=norms > 0)
