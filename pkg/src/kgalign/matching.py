"""Collective alignment as a stable matching problem.

Sources propose to targets in order of fused similarity; targets hold the
best proposer seen so far and may trade up (deferred acceptance). Similarity
ties are broken by ascending index so all preference orders are strict.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class PreferenceLists:
    """``sources[u]`` lists targets best-first; ``targets[v]`` lists sources best-first."""

    sources: np.ndarray
    targets: np.ndarray

    @property
    def target_rank(self) -> np.ndarray:
        """``target_rank[v, u]`` is the position of ``u`` in ``v``'s list (0 = best)."""
        rank = np.empty_like(self.targets)
        n_t, n_s = self.targets.shape
        rank[np.arange(n_t)[:, None], self.targets] = np.arange(n_s)[None, :]
        return rank

    @property
    def source_rank(self) -> np.ndarray:
        rank = np.empty_like(self.sources)
        n_s, n_t = self.sources.shape
        rank[np.arange(n_s)[:, None], self.sources] = np.arange(n_t)[None, :]
        return rank


@dataclass
class Matching:
    pairs: dict[int, int] = field(default_factory=dict)
    proposals: int = 0

    def __post_init__(self):
        if len(set(self.pairs.values())) != len(self.pairs):
            raise ValueError("matching is not injective")

    def __len__(self):
        return len(self.pairs)

    def __eq__(self, other):
        if isinstance(other, Matching):
            return self.pairs == other.pairs
        return NotImplemented

    def inverse(self) -> dict[int, int]:
        return {v: u for u, v in self.pairs.items()}

    def as_array(self, n_sources: int) -> np.ndarray:
        out = np.full(n_sources, -1, dtype=np.int64)
        for u, v in self.pairs.items():
            out[u] = v
        return out


@dataclass(frozen=True)
class BlockingPair:
    source: int
    target: int


def _ranked(M):
    # stable sort of the negated values: descending, ties by ascending index
    return np.argsort(-M, axis=1, kind="stable")


def preference_lists(M: np.ndarray) -> PreferenceLists:
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        raise ValueError("similarity matrix is empty")
    return PreferenceLists(_ranked(M), _ranked(M.T))


def deferred_acceptance(prefs: PreferenceLists, trace: list | None = None) -> Matching:
    """Source-proposing deferred acceptance, run in synchronous rounds.

    In every round each unmatched source proposes (in ascending index order)
    to its best target not yet proposed to; each target keeps the best of its
    current partner and the new proposers. If ``trace`` is a list, one entry
    ``(round, [(source, target, status), ...])`` is appended per round, with
    status ``held``, ``rejected`` or ``dumped`` (displaced by a better suitor).
    """
    n_s, n_t = prefs.sources.shape
    if n_s > n_t:
        raise ValueError(f"{n_s} sources cannot all be matched to {n_t} targets")
    rank = prefs.target_rank
    next_choice = np.zeros(n_s, dtype=np.int64)
    partner_of_target = np.full(n_t, -1, dtype=np.int64)
    free = list(range(n_s))
    proposals = 0
    rnd = 0
    while free:
        rnd += 1
        offers: dict[int, list[int]] = {}
        for u in free:
            v = int(prefs.sources[u, next_choice[u]])
            next_choice[u] += 1
            offers.setdefault(v, []).append(u)
            proposals += 1
        now_free = []
        events = []
        for v, suitors in offers.items():
            current = partner_of_target[v]
            pool = suitors + ([int(current)] if current >= 0 else [])
            best = min(pool, key=lambda u: rank[v, u])
            partner_of_target[v] = best
            for u in suitors:
                events.append((u, v, "held" if u == best else "rejected"))
                if u != best:
                    now_free.append(u)
            if current >= 0 and current != best:
                events.append((int(current), v, "dumped"))
                now_free.append(int(current))
        if trace is not None:
            trace.append((rnd, sorted(events)))
        free = sorted(now_free)
    pairs = {int(partner_of_target[v]): v for v in range(n_t) if partner_of_target[v] >= 0}
    return Matching(dict(sorted(pairs.items())), proposals)


def stable_match(M: np.ndarray, trace: list | None = None) -> Matching:
    return deferred_acceptance(preference_lists(M), trace)


def independent_match(M: np.ndarray) -> dict[int, int]:
    """Row argmax for every source; several sources may share a target."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        raise ValueError("similarity matrix is empty")
    return {u: int(v) for u, v in enumerate(M.argmax(axis=1))}


def blocking_pairs(M: np.ndarray, matching: Matching) -> list[BlockingPair]:
    """Pairs (u, v) that both strictly prefer each other to their assignments.

    Unmatched participants prefer any partner to none.
    """
    prefs = preference_lists(M)
    s_rank = prefs.source_rank
    t_rank = prefs.target_rank
    n_s, n_t = s_rank.shape
    inv = matching.inverse()
    out = []
    for u in range(n_s):
        mine = matching.pairs.get(u)
        limit = s_rank[u, mine] if mine is not None else n_t
        for v in prefs.sources[u, :limit]:
            v = int(v)
            holder = inv.get(v)
            if holder is None or t_rank[v, u] < t_rank[v, holder]:
                out.append(BlockingPair(u, v))
    return out


def is_stable(M: np.ndarray, matching: Matching) -> bool:
    return not blocking_pairs(M, matching)


def enumerate_stable_matchings(M: np.ndarray, max_size: int = 8) -> list[Matching]:
    """All stable perfect matchings of a square matrix, by brute force."""
    M = np.asarray(M, dtype=float)
    n, m = M.shape
    if n != m:
        raise ValueError("enumeration needs a square matrix")
    if n > max_size:
        raise ValueError(f"refusing to enumerate {n}! permutations (limit {max_size})")
    prefs = preference_lists(M)
    s_rank = prefs.source_rank
    t_rank = prefs.target_rank
    perms = _permutations(n)
    inv = np.argsort(perms, axis=1)
    idx = np.arange(n)
    mine = s_rank[idx[None, :], perms]          # (P, u): rank of u's partner
    held = t_rank[idx[None, :], inv]            # (P, v): rank of v's partner
    blocking = (s_rank[None] < mine[:, :, None]) & (t_rank.T[None] < held[:, None, :])
    keep = ~blocking.any(axis=(1, 2))
    return [Matching(dict(enumerate(p.tolist()))) for p in perms[keep]]


_PERMUTATIONS: dict[int, np.ndarray] = {}


def _permutations(n):
    if n not in _PERMUTATIONS:
        _PERMUTATIONS[n] = np.array(list(itertools.permutations(range(n))), dtype=np.int64).reshape(-1, n)
    return _PERMUTATIONS[n]


def format_trace(trace) -> str:
    """Render a proposal trace, one proposal per line."""
    lines = []
    for rnd, events in trace:
        for u, v, status in events:
            lines.append(f"round={rnd}\tsource={u}\ttarget={v}\t{status}")
    return "\n".join(lines) + ("\n" if lines else "")
