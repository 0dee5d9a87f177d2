"""In-memory alignment workflow: features, fusion, matching.

Feature matrices are computed over the test split only; row ``i`` is the
``i``-th test source and column ``j`` the ``j``-th test target, so the gold
alignment is the diagonal.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fusion as ff
from .fusion import FusionConfig, FusionReport, fuse_enabled
from .kg import AlignmentSet, KnowledgeGraph, entity_name
from .matching import independent_match, stable_match
from .semantic import WordEmbeddingStore, semantic_similarity_matrix
from .strings import StringSimConfig, string_similarity_matrix
from .structural import TrainingConfig, cosine_similarity_matrix, train

FEATURES = (ff.STRUCTURAL, ff.SEMANTIC, ff.STRING)


@dataclass(frozen=True)
class Switches:
    collective: bool = True
    adaptive: bool = True
    structural: bool = True
    semantic: bool = True
    string: bool = True

    def __post_init__(self):
        if not self.enabled_features():
            raise ValueError("at least one feature must be enabled")

    def enabled_features(self) -> list[str]:
        return [f for f in FEATURES if getattr(self, f)]

    @property
    def label(self) -> str:
        off = []
        if not self.collective:
            off.append("C")
        if not self.adaptive:
            off.append("AFF")
        off += [{"structural": "Ms", "semantic": "Mn", "string": "Ml"}[f]
                for f in FEATURES if not getattr(self, f)]
        return "full" if not off else "w/o " + ",".join(off)


# Ablation rows in the usual reporting order.
STANDARD_ABLATIONS = (
    Switches(),
    Switches(structural=False),
    Switches(semantic=False),
    Switches(string=False),
    Switches(adaptive=False),
    Switches(collective=False),
    Switches(collective=False, structural=False),
    Switches(collective=False, semantic=False),
    Switches(collective=False, string=False),
    Switches(collective=False, adaptive=False),
)


@dataclass
class AlignmentTask:
    kg1: KnowledgeGraph
    kg2: KnowledgeGraph
    seed: AlignmentSet
    test: AlignmentSet
    store: WordEmbeddingStore | None = None

    def __post_init__(self):
        if len(self.test) == 0:
            raise ValueError("test split is empty; lower the seed fraction")

    def source_names(self) -> list[str]:
        return [entity_name(s) for s in self.test.sources]

    def target_names(self) -> list[str]:
        return [entity_name(t) for t in self.test.targets]

    def gold(self) -> list[tuple[int, int]]:
        return [(i, i) for i in range(len(self.test))]


def structural_features(task: AlignmentTask, config: TrainingConfig):
    """Train the GCN; returns ``(Z1, Z2, M_structural)``."""
    Z1, Z2 = train(task.kg1, task.kg2, task.seed, config)
    rows = [task.kg1.index_of(s) for s in task.test.sources]
    cols = [task.kg2.index_of(t) for t in task.test.targets]
    return Z1, Z2, cosine_similarity_matrix(Z1[rows], Z2[cols])


def semantic_features(task: AlignmentTask) -> np.ndarray:
    if task.store is None:
        raise ValueError("semantic feature needs word embeddings")
    return semantic_similarity_matrix(task.source_names(), task.target_names(), task.store)


def string_features(task: AlignmentTask, config: StringSimConfig = StringSimConfig()) -> np.ndarray:
    return string_similarity_matrix(task.source_names(), task.target_names(), config)


def feature_matrices(task: AlignmentTask, features=FEATURES, training: TrainingConfig = TrainingConfig(),
                     string_config: StringSimConfig = StringSimConfig()) -> dict[str, np.ndarray]:
    out = {}
    if ff.STRUCTURAL in features:
        out[ff.STRUCTURAL] = structural_features(task, training)[2]
    if ff.SEMANTIC in features:
        out[ff.SEMANTIC] = semantic_features(task)
    if ff.STRING in features:
        out[ff.STRING] = string_features(task, string_config)
    return out


@dataclass
class AlignmentOutcome:
    fused: np.ndarray
    report: FusionReport
    matching: dict[int, int]
    proposals: int | None = None
    switches: Switches = field(default_factory=Switches)


def match_fused(fused: np.ndarray, collective: bool = True):
    """``(mapping, proposals)``; ``proposals`` is None for independent matching."""
    if collective:
        m = stable_match(fused)
        return m.pairs, m.proposals
    return independent_match(fused), None


def align_matrices(matrices: dict[str, np.ndarray], switches: Switches = Switches(),
                   config: FusionConfig = FusionConfig()) -> AlignmentOutcome:
    enabled = {f: matrices[f] for f in switches.enabled_features()}
    missing = [f for f, m in enabled.items() if m is None]
    if missing:
        raise ValueError(f"missing feature matrices: {missing}")
    fused, report = fuse_enabled(enabled, config, adaptive=switches.adaptive)
    mapping, proposals = match_fused(fused, switches.collective)
    return AlignmentOutcome(fused, report, mapping, proposals, switches)
