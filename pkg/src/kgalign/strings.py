"""Edit distances and the Levenshtein-ratio string similarity.

Strings are compared per Unicode code point. ``levenshtein_sub2`` charges 2
for a substitution, which makes ``ratio("a", "c") == 0`` rather than 0.5.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class StringSimConfig:
    normalize_case: bool = True


def _edit_distance(a: str, b: str, sub_cost: int) -> int:
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (0 if ca == cb else sub_cost)))
        prev = cur
    return prev[-1]


def levenshtein(a: str, b: str) -> int:
    return _edit_distance(a, b, 1)


def levenshtein_sub2(a: str, b: str) -> int:
    """Edit distance where a substitution costs 2 (insert/delete cost 1)."""
    return _edit_distance(a, b, 2)


def levenshtein_ratio(a: str, b: str) -> float:
    total = len(a) + len(b)
    if total == 0:
        return 1.0
    return (total - levenshtein_sub2(a, b)) / total


def _encode(strings: Sequence[str]):
    lengths = np.array([len(s) for s in strings], dtype=np.int64)
    width = int(lengths.max()) if len(strings) else 0
    codes = np.full((len(strings), width), -1, dtype=np.int64)
    for k, s in enumerate(strings):
        codes[k, :len(s)] = [ord(c) for c in s]
    return codes, lengths


def _sub2_against_many(a: str, codes: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """lev* from ``a`` to every encoded string; two DP rows per batch."""
    n, width = codes.shape
    cols = np.arange(width + 1, dtype=np.int64)
    prev = np.broadcast_to(cols, (n, width + 1)).copy()
    cur = np.empty_like(prev)
    for i, ch in enumerate(a, 1):
        subst = prev[:, :-1] + np.where(codes == ord(ch), 0, 2)
        diag_or_del = np.minimum(subst, prev[:, 1:] + 1)
        cur[:, 0] = i
        for j in range(width):
            cur[:, j + 1] = np.minimum(diag_or_del[:, j], cur[:, j] + 1)
        prev, cur = cur, prev
    return prev[np.arange(n), lengths]


def string_similarity_matrix(names1: Sequence[str], names2: Sequence[str],
                             config: StringSimConfig = StringSimConfig()) -> np.ndarray:
    """Levenshtein ratio between every source and target name."""
    if config.normalize_case:
        names1 = [s.casefold() for s in names1]
        names2 = [s.casefold() for s in names2]
    out = np.zeros((len(names1), len(names2)))
    if not names1 or not names2:
        return out
    codes, lengths = _encode(names2)
    for row, a in enumerate(names1):
        totals = lengths + len(a)
        dist = _sub2_against_many(a, codes, lengths)
        out[row] = np.where(totals == 0, 1.0, (totals - dist) / np.maximum(totals, 1))
    return out
