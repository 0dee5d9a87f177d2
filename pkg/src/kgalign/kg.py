"""Knowledge graph and alignment-link IO.

Triple files hold one ``head<TAB>relation<TAB>tail`` per line; link files hold
one ``source<TAB>target`` pair per line. Both are UTF-8.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence
from urllib.parse import unquote

import numpy as np
import scipy.sparse as sp


class ParseError(ValueError):
    """Raised when an input file violates its line format."""

    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{self.path}:{lineno}: {message}")


@dataclass(frozen=True)
class KnowledgeGraph:
    entities: tuple[str, ...]
    relations: tuple[str, ...]
    triples: tuple[tuple[int, int, int], ...]
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        index = {e: i for i, e in enumerate(self.entities)}
        if len(index) != len(self.entities):
            raise ValueError("duplicate entity identifiers")
        n, r = len(self.entities), len(self.relations)
        for h, rel, t in self.triples:
            if not (0 <= h < n and 0 <= t < n and 0 <= rel < r):
                raise ValueError(f"triple {(h, rel, t)} out of vocabulary bounds")
        object.__setattr__(self, "_index", index)

    @classmethod
    def from_labelled(cls, triples: Iterable[tuple[str, str, str]], entities: Sequence[str] = ()):
        """Build a graph from string triples, indexing in first-appearance order.

        ``entities`` seeds the entity vocabulary, which lets isolated entities exist.
        """
        ent: dict[str, int] = {}
        rel: dict[str, int] = {}
        for e in entities:
            ent.setdefault(e, len(ent))
        out = []
        for h, r, t in triples:
            hi = ent.setdefault(h, len(ent))
            ri = rel.setdefault(r, len(rel))
            ti = ent.setdefault(t, len(ent))
            out.append((hi, ri, ti))
        return cls(tuple(ent), tuple(rel), tuple(out))

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    def index_of(self, entity_id: str) -> int:
        return self._index[entity_id]

    def __contains__(self, entity_id) -> bool:
        return entity_id in self._index

    def labelled_triples(self):
        for h, r, t in self.triples:
            yield self.entities[h], self.relations[r], self.entities[t]


@dataclass(frozen=True)
class AlignmentSet:
    pairs: tuple[tuple[str, str], ...]

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(tuple(p) for p in self.pairs))
        _check_one_to_one(self.pairs)

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    @property
    def sources(self) -> list[str]:
        return [s for s, _ in self.pairs]

    @property
    def targets(self) -> list[str]:
        return [t for _, t in self.pairs]

    def as_dict(self) -> dict[str, str]:
        return dict(self.pairs)


def _check_one_to_one(pairs):
    seen_src, seen_tgt = set(), set()
    for s, t in pairs:
        if s in seen_src:
            raise ValueError(f"duplicate source entity {s!r}")
        if t in seen_tgt:
            raise ValueError(f"duplicate target entity {t!r}")
        seen_src.add(s)
        seen_tgt.add(t)


def _read_fields(path, width):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != width:
                raise ParseError(path, lineno, f"expected {width} tab-separated fields, got {len(fields)}")
            yield lineno, fields


def parse_triples(path) -> KnowledgeGraph:
    """Read a triple file. Duplicate lines are kept as separate triples."""
    rows = [tuple(f) for _, f in _read_fields(path, 3)]
    if not rows:
        raise ParseError(path, 0, "no triples found")
    return KnowledgeGraph.from_labelled(rows)


def write_triples(kg: KnowledgeGraph, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for h, r, t in kg.labelled_triples():
            fh.write(f"{h}\t{r}\t{t}\n")


def parse_links(path) -> AlignmentSet:
    numbered = [(lineno, (f[0], f[1])) for lineno, f in _read_fields(path, 2)]
    # re-check with file line numbers so errors point at the offending line
    seen_src, seen_tgt = set(), set()
    for lineno, (s, t) in numbered:
        if s in seen_src:
            raise ParseError(path, lineno, f"duplicate source entity {s!r}")
        if t in seen_tgt:
            raise ParseError(path, lineno, f"duplicate target entity {t!r}")
        seen_src.add(s)
        seen_tgt.add(t)
    return AlignmentSet(tuple(p for _, p in numbered))


def write_links(links: Iterable[tuple[str, str]], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s, t in links:
            fh.write(f"{s}\t{t}\n")


def split_alignment(links: AlignmentSet, seed_fraction: float, rng_seed: int):
    """Shuffle ``links`` under ``rng_seed`` and cut off ``round(fraction * n)`` seeds.

    Returns ``(seed, test)``; both keep the shuffled order.
    """
    if not 0.0 < seed_fraction < 1.0:
        raise ValueError(f"seed_fraction must lie in (0, 1), got {seed_fraction}")
    if len(links) == 0:
        raise ValueError("cannot split an empty alignment set")
    pairs = list(links.pairs)
    random.Random(rng_seed).shuffle(pairs)
    cut = round(seed_fraction * len(pairs))
    return AlignmentSet(tuple(pairs[:cut])), AlignmentSet(tuple(pairs[cut:]))


def entity_name(entity_id: str) -> str:
    """Derive a display name from an entity identifier.

    >>> entity_name("http://dbpedia.org/resource/New_York")
    'New York'
    """
    name = entity_id
    if "://" in entity_id or entity_id.startswith("urn:"):
        cut = max(entity_id.rfind("/"), entity_id.rfind("#"))
        if cut >= 0:
            name = entity_id[cut + 1:]
    return unquote(name).replace("_", " ")


@dataclass(frozen=True, eq=False)
class NormalizedAdjacency:
    """Symmetric ``D^-1/2 (A + I) D^-1/2`` over an undirected view of the graph."""

    matrix: sp.csr_matrix

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def entries(self):
        coo = self.matrix.tocoo()
        return sorted(zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()))

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def __matmul__(self, other):
        return self.matrix @ other


def build_normalized_adjacency(kg: KnowledgeGraph) -> NormalizedAdjacency:
    n = kg.num_entities
    if n < 1:
        raise ValueError("graph has no entities")
    if kg.triples:
        heads = np.fromiter((h for h, _, _ in kg.triples), dtype=np.int64)
        tails = np.fromiter((t for _, _, t in kg.triples), dtype=np.int64)
    else:
        heads = tails = np.zeros(0, dtype=np.int64)
    idx = np.arange(n)
    rows = np.concatenate([heads, tails, idx])
    cols = np.concatenate([tails, heads, idx])
    a = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n)).tocsr()
    a.data[:] = 1.0  # multi-edges collapse to binary
    deg = np.asarray(a.sum(axis=1)).ravel()
    inv_sqrt = sp.diags(1.0 / np.sqrt(deg))
    norm = (inv_sqrt @ a @ inv_sqrt).tocsr()
    norm.sort_indices()
    return NormalizedAdjacency(norm)


def link_indices(links: AlignmentSet, kg1: KnowledgeGraph, kg2: KnowledgeGraph):
    """Map link ids to index pairs, raising ``KeyError`` for unknown entities."""
    out = []
    for s, t in links:
        if s not in kg1:
            raise KeyError(f"source entity {s!r} not in source graph")
        if t not in kg2:
            raise KeyError(f"target entity {t!r} not in target graph")
        out.append((kg1.index_of(s), kg2.index_of(t)))
    return out

