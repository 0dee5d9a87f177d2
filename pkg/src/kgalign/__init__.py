"""Entity alignment across two knowledge graphs.

Structural (GCN), semantic (averaged word vectors) and string (Levenshtein
ratio) similarity matrices are fused with adaptively computed weights, and the
fused matrix is resolved into a one-to-one alignment by deferred acceptance.
"""
from .align import AlignmentTask, Switches, align_matrices, feature_matrices
from .evaluation import accuracy, generate_synthetic_pair, hits_and_mrr
from .fusion import FusionConfig, two_stage_fuse
from .kg import AlignmentSet, KnowledgeGraph, parse_links, parse_triples
from .matching import blocking_pairs, deferred_acceptance, independent_match, preference_lists
from .structural import TrainingConfig

__version__ = "0.1.0"

__all__ = [
    "AlignmentSet",
    "AlignmentTask",
    "FusionConfig",
    "KnowledgeGraph",
    "Switches",
    "TrainingConfig",
    "accuracy",
    "align_matrices",
    "blocking_pairs",
    "deferred_acceptance",
    "feature_matrices",
    "generate_synthetic_pair",
    "hits_and_mrr",
    "independent_match",
    "parse_links",
    "parse_triples",
    "preference_lists",
    "two_stage_fuse",
]
