"""Adaptive outcome-level fusion of similarity matrices.

Each feature matrix nominates *confident correspondences* (cells that are the
strict maximum of both their row and their column). After conflicting and
uninformative nominations are filtered out, every surviving nomination is
weighted, and a feature's fusion weight is its share of the total nomination
weight. Fusion is a weighted sum of the matrices.
"""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)

STRUCTURAL = "structural"
SEMANTIC = "semantic"
STRING = "string"
TEXTUAL = "textual"


@dataclass(frozen=True)
class ConfidentCorrespondence:
    source: int
    target: int
    feature: str
    score: float

    @property
    def pair(self) -> tuple[int, int]:
        return self.source, self.target


@dataclass(frozen=True)
class FusionConfig:
    theta1: float = 0.98
    theta2: float = 0.1

    def __post_init__(self):
        if not 0 < self.theta1 <= 1:
            raise ValueError(f"theta1 must lie in (0, 1], got {self.theta1}")
        if not 0 < self.theta2 <= 1:
            raise ValueError(f"theta2 must lie in (0, 1], got {self.theta2}")


@dataclass(frozen=True)
class FusionWeights:
    weights: Mapping[str, float]

    def __post_init__(self):
        values = list(self.weights.values())
        if any(w < 0 for w in values):
            raise ValueError("fusion weights must be nonnegative")
        if values and abs(sum(values) - 1.0) > 1e-12:
            raise ValueError(f"fusion weights sum to {sum(values)}, not 1")

    def __getitem__(self, feature):
        return self.weights[feature]

    def features(self) -> list[str]:
        return list(self.weights)

    def values(self) -> list[float]:
        return list(self.weights.values())


def confident_correspondences(M: np.ndarray, feature: str = "") -> list[ConfidentCorrespondence]:
    """Cells strictly greater than every other entry of their row and column."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        raise ValueError("similarity matrix is empty")
    row_arg = M.argmax(axis=1)
    row_max = M[np.arange(M.shape[0]), row_arg]
    row_unique = (M == row_max[:, None]).sum(axis=1) == 1
    col_arg = M.argmax(axis=0)
    col_max = M[col_arg, np.arange(M.shape[1])]
    col_unique = (M == col_max[None, :]).sum(axis=0) == 1
    out = []
    for i in np.flatnonzero(row_unique):
        j = row_arg[i]
        if col_unique[j] and col_arg[j] == i:
            out.append(ConfidentCorrespondence(int(i), int(j), feature, float(M[i, j])))
    return out


def filter_candidates(per_feature: Mapping[str, Sequence[ConfidentCorrespondence]],
                      k: int | None = None) -> dict[str, list[ConfidentCorrespondence]]:
    """Drop source-side conflicts and pairs nominated by all ``k`` features."""
    k = len(per_feature) if k is None else k
    targets_by_source = defaultdict(set)
    sources_by_target = defaultdict(set)
    nominations = defaultdict(int)
    for cands in per_feature.values():
        for c in cands:
            targets_by_source[c.source].add(c.target)
            sources_by_target[c.target].add(c.source)
            nominations[c.pair] += 1
    conflicted = {s for s, ts in targets_by_source.items() if len(ts) > 1}
    target_conflicts = sum(1 for ss in sources_by_target.values() if len(ss) > 1)
    if target_conflicts:
        log.debug("%d targets nominated for different sources (not filtered)", target_conflicts)
    unanimous = {p for p, n in nominations.items() if k >= 2 and n >= k}
    return {
        feature: [c for c in cands if c.source not in conflicted and c.pair not in unanimous]
        for feature, cands in per_feature.items()
    }


def correspondence_weights(retained: Mapping[str, Sequence[ConfidentCorrespondence]],
                           config: FusionConfig = FusionConfig()) -> dict[tuple[str, tuple[int, int]], float]:
    """Weight each (feature, pair) nomination.

    A pair nominated by ``n`` features gives ``1/n`` to each of them; a
    nomination whose score exceeds ``theta1`` gives ``theta2`` instead.
    """
    shared = defaultdict(int)
    for cands in retained.values():
        for c in cands:
            shared[c.pair] += 1
    out = {}
    for feature, cands in retained.items():
        for c in cands:
            out[feature, c.pair] = config.theta2 if c.score > config.theta1 else 1.0 / shared[c.pair]
    return out


def feature_weights(contrib: Mapping[tuple[str, tuple[int, int]], float],
                    features: Sequence[str] | None = None) -> FusionWeights:
    if features is None:
        features = list(dict.fromkeys(f for f, _ in contrib))
    scores = {f: 0.0 for f in features}
    for (feature, _), w in contrib.items():
        scores[feature] += w
    total = sum(scores.values())
    if not scores:
        raise ValueError("no features to weight")
    if total == 0:
        return FusionWeights({f: 1.0 / len(scores) for f in scores})
    return FusionWeights({f: s / total for f, s in scores.items()})


def fuse(matrices: Sequence[np.ndarray], weights) -> np.ndarray:
    """Weighted elementwise sum ``sum_k w_k * M_k``."""
    if isinstance(weights, FusionWeights):
        weights = weights.values()
    weights = list(weights)
    if len(matrices) != len(weights) or not matrices:
        raise ValueError(f"{len(matrices)} matrices but {len(weights)} weights")
    shape = np.shape(matrices[0])
    out = np.zeros(shape)
    for m, w in zip(matrices, weights):
        if np.shape(m) != shape:
            raise ValueError(f"matrix shape {np.shape(m)} does not match {shape}")
        out += w * np.asarray(m, dtype=float)
    return out


@dataclass
class StageReport:
    name: str
    weights: dict[str, float]
    candidates: dict[str, int]
    retained: dict[str, int]
    damped: int
    fallback: bool


@dataclass
class FusionReport:
    stages: list[StageReport] = field(default_factory=list)

    def to_dict(self):
        return {"stages": [asdict(s) for s in self.stages]}

    def stage(self, name) -> StageReport:
        for s in self.stages:
            if s.name == name:
                return s
        raise KeyError(name)


def adaptive_fuse(matrices: Mapping[str, np.ndarray], config: FusionConfig = FusionConfig(),
                  name: str = "fused"):
    """One full fusion stage over named matrices; returns ``(fused, StageReport)``."""
    features = list(matrices)
    cands = {f: confident_correspondences(matrices[f], f) for f in features}
    retained = filter_candidates(cands, len(features))
    contrib = correspondence_weights(retained, config)
    weights = feature_weights(contrib, features)
    damped = sum(1 for f, cs in retained.items() for c in cs if c.score > config.theta1)
    report = StageReport(
        name=name,
        weights=dict(weights.weights),
        candidates={f: len(c) for f, c in cands.items()},
        retained={f: len(c) for f, c in retained.items()},
        damped=damped,
        fallback=sum(contrib.values()) == 0,
    )
    return fuse([matrices[f] for f in features], weights), report


def two_stage_fuse(Ms: np.ndarray, Mn: np.ndarray, Ml: np.ndarray, config: FusionConfig = FusionConfig()):
    """Fuse semantic and string into a textual matrix, then textual with structural."""
    text, first = adaptive_fuse({SEMANTIC: Mn, STRING: Ml}, config, name=TEXTUAL)
    final, second = adaptive_fuse({TEXTUAL: text, STRUCTURAL: Ms}, config, name="final")
    return final, FusionReport([first, second])


def fuse_enabled(matrices: Mapping[str, np.ndarray], config: FusionConfig = FusionConfig(),
                 adaptive: bool = True):
    """Fuse whichever of the structural/semantic/string matrices are present.

    With ``adaptive`` the two-stage schedule is used, skipping stages whose
    inputs are absent. Without it every present feature gets an equal weight
    in a single stage.
    """
    present = [f for f in (STRUCTURAL, SEMANTIC, STRING) if matrices.get(f) is not None]
    if not present:
        raise ValueError("at least one feature matrix is required")
    if not adaptive:
        w = {f: 1.0 / len(present) for f in present}
        fused = fuse([matrices[f] for f in present], list(w.values()))
        return fused, FusionReport([StageReport("equal", w, {}, {}, 0, True)])
    report = FusionReport()
    second = {}
    textual = {f: matrices[f] for f in (SEMANTIC, STRING) if f in present}
    if textual:
        text, stage = adaptive_fuse(textual, config, name=TEXTUAL)
        report.stages.append(stage)
        second[TEXTUAL] = text
    if STRUCTURAL in present:
        second[STRUCTURAL] = matrices[STRUCTURAL]
    final, stage = adaptive_fuse(second, config, name="final")
    report.stages.append(stage)
    return final, report
