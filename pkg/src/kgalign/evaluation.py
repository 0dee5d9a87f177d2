"""Alignment metrics, synthetic benchmarks and ablation grids."""
from __future__ import annotations

import random
import string
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .align import AlignmentTask, STANDARD_ABLATIONS, Switches, align_matrices, feature_matrices
from .fusion import FusionConfig
from .kg import AlignmentSet, KnowledgeGraph, split_alignment
from .matching import Matching
from .semantic import WordEmbeddingStore
from .strings import StringSimConfig
from .structural import TrainingConfig

DEFAULT_KS = (1, 10)


def _pairs(obj) -> dict:
    if isinstance(obj, Matching):
        return obj.pairs
    if isinstance(obj, AlignmentSet):
        return obj.as_dict()
    return dict(obj)


def correct_count(matching, gold) -> int:
    g = _pairs(gold)
    m = _pairs(matching)
    return sum(1 for u, v in g.items() if u in m and m[u] == v)


def accuracy(matching, gold) -> float:
    """Share of gold sources mapped to their gold target; unmatched count as wrong."""
    total = len(_pairs(gold))
    if not total:
        raise ValueError("gold alignment is empty")
    return correct_count(matching, gold) / total


def gold_ranks(M: np.ndarray, gold: Iterable[tuple[int, int]]) -> np.ndarray:
    """1-based rank of each gold target in its source row (ties by index)."""
    M = np.asarray(M, dtype=float)
    rows, cols = (np.array(x, dtype=np.int64) for x in zip(*gold))
    vals = M[rows, cols][:, None]
    sub = M[rows]
    before = (sub > vals) | ((sub == vals) & (np.arange(M.shape[1])[None, :] < cols[:, None]))
    return before.sum(axis=1) + 1


def hits_and_mrr(M: np.ndarray, gold: Sequence[tuple[int, int]], ks: Sequence[int] = DEFAULT_KS):
    ranks = gold_ranks(M, gold)
    hits = {int(k): float((ranks <= k).mean()) for k in ks}
    return hits, float((1.0 / ranks).mean())


@dataclass
class EvalReport:
    accuracy: float
    matched: int
    total: int
    hits_at: dict[int, float] = field(default_factory=dict)
    mrr: float | None = None
    label: str = ""

    def to_text(self) -> str:
        lines = []
        if self.label:
            lines.append(f"label={self.label}")
        lines += [f"accuracy={self.accuracy:.6f}", f"correct={self.matched}", f"total={self.total}"]
        for k, v in sorted(self.hits_at.items()):
            lines.append(f"hits@{k}={v:.6f}")
        if self.mrr is not None:
            lines.append(f"mrr={self.mrr:.6f}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "EvalReport":
        kv = dict(line.split("=", 1) for line in text.splitlines() if "=" in line)
        hits = {int(k[5:]): float(v) for k, v in kv.items() if k.startswith("hits@")}
        return cls(
            accuracy=float(kv["accuracy"]),
            matched=int(kv["correct"]),
            total=int(kv["total"]),
            hits_at=hits,
            mrr=float(kv["mrr"]) if "mrr" in kv else None,
            label=kv.get("label", ""),
        )


def evaluate(matching, fused: np.ndarray | None, gold: Sequence[tuple[int, int]],
             ks: Sequence[int] = DEFAULT_KS, label: str = "") -> EvalReport:
    """Accuracy of a matching, plus ranking metrics of the fused matrix if given."""
    report = EvalReport(accuracy(matching, gold), correct_count(matching, gold), len(gold), label=label)
    if fused is not None:
        report.hits_at, report.mrr = hits_and_mrr(fused, gold, ks)
    return report


@dataclass
class SyntheticBenchmark:
    kg1: KnowledgeGraph
    kg2: KnowledgeGraph
    gold: AlignmentSet
    name_noise: int
    structure_noise: float
    word_vectors: WordEmbeddingStore


_LETTERS = string.ascii_lowercase


def _random_word(rng: random.Random) -> str:
    return "".join(rng.choice(_LETTERS) for _ in range(rng.randint(3, 8)))


def perturb_name(name: str, edits: int, rng: random.Random) -> str:
    chars = list(name)
    for _ in range(edits):
        op = rng.choice(("insert", "delete", "substitute")) if len(chars) > 1 else rng.choice(("insert", "substitute"))
        if op == "insert":
            chars.insert(rng.randint(0, len(chars)), rng.choice(_LETTERS))
        elif op == "delete":
            del chars[rng.randrange(len(chars))]
        else:
            pos = rng.randrange(len(chars))
            chars[pos] = rng.choice([c for c in _LETTERS if c != chars[pos]])
    return "".join(chars)


def _uri(prefix: str, name: str) -> str:
    return prefix + name.replace(" ", "_")


def generate_synthetic_pair(n: int, triple_density: float = 3.0, name_noise: int = 0,
                            structure_noise: float = 0.0, rng_seed: int = 0, num_relations: int = 8,
                            vocab_size: int | None = None, vector_dim: int = 16) -> SyntheticBenchmark:
    """Random source graph plus a renamed, perturbed copy as the target graph.

    Names are 1-3 words from a shared random vocabulary. The target copy drops
    ``structure_noise`` of the triples (never isolating an entity) and applies
    ``name_noise`` random character edits to every name. Word vectors cover the
    clean vocabulary only, so edited words are out of vocabulary.
    """
    if n < 4:
        raise ValueError("n must be >= 4")
    if triple_density < 1.0:
        raise ValueError("triple_density must be >= 1 (a spanning tree needs n - 1 triples)")
    if name_noise < 0:
        raise ValueError("name_noise must be >= 0")
    if not 0.0 <= structure_noise < 1.0:
        raise ValueError("structure_noise must lie in [0, 1)")
    if num_relations < 1:
        raise ValueError("num_relations must be >= 1")
    rng = random.Random(rng_seed)
    vocab_size = vocab_size or max(16, n // 2)

    vocab: list[str] = []
    seen_words = set()
    while len(vocab) < vocab_size:
        w = _random_word(rng)
        if w not in seen_words:
            seen_words.add(w)
            vocab.append(w)

    names: list[str] = []
    bags = set()
    while len(names) < n:
        words = [rng.choice(vocab) for _ in range(rng.randint(1, 3))]
        bag = tuple(sorted(words))
        if bag in bags:
            continue
        bags.add(bag)
        names.append(" ".join(words))

    noisy: list[str] = []
    taken = set()
    for name in names:
        while True:
            cand = " ".join(perturb_name(name, name_noise, rng).split()) if name_noise else name
            if cand and cand not in taken:
                break
        taken.add(cand)
        noisy.append(cand)

    n_triples = max(n - 1, round(triple_density * n))
    triples: list[tuple[int, int, int]] = []
    seen_triples = set()

    def add(h, r, t):
        if h != t and (h, r, t) not in seen_triples:
            seen_triples.add((h, r, t))
            triples.append((h, r, t))
            return True
        return False

    for i in range(1, n):
        j = rng.randrange(i)
        h, t = (i, j) if rng.random() < 0.5 else (j, i)
        add(h, rng.randrange(num_relations), t)
    while len(triples) < n_triples:
        add(rng.randrange(n), rng.randrange(num_relations), rng.randrange(n))
    rng.shuffle(triples)

    degree = [0] * n
    for h, _, t in triples:
        degree[h] += 1
        degree[t] += 1
    to_drop = round(structure_noise * len(triples))
    dropped = set()
    for k in rng.sample(range(len(triples)), len(triples)):
        if len(dropped) >= to_drop:
            break
        h, _, t = triples[k]
        if degree[h] > 1 and degree[t] > 1:
            degree[h] -= 1
            degree[t] -= 1
            dropped.add(k)

    ids1 = [_uri("http://kg1.synthetic.example/resource/", s) for s in names]
    ids2 = [_uri("http://kg2.synthetic.example/entity/", s) for s in noisy]
    rel1 = [f"http://kg1.synthetic.example/relation/r{r}" for r in range(num_relations)]
    rel2 = [f"http://kg2.synthetic.example/property/p{r}" for r in range(num_relations)]
    kg1 = KnowledgeGraph.from_labelled((ids1[h], rel1[r], ids1[t]) for h, r, t in triples)
    kept = [triples[k] for k in range(len(triples)) if k not in dropped]
    rng.shuffle(kept)
    kg2 = KnowledgeGraph.from_labelled((ids2[h], rel2[r], ids2[t]) for h, r, t in kept)
    gold = AlignmentSet(tuple((ids1[i], ids2[i]) for i in sorted(range(n), key=lambda i: kg1.index_of(ids1[i]))))

    vrng = np.random.default_rng(rng.getrandbits(63))
    vectors = {w: vrng.standard_normal(vector_dim) for w in vocab}
    return SyntheticBenchmark(kg1, kg2, gold, name_noise, structure_noise,
                              WordEmbeddingStore(vector_dim, vectors))


def benchmark_task(bench: SyntheticBenchmark, seed_fraction: float = 0.3, rng_seed: int = 0) -> AlignmentTask:
    seed, test = split_alignment(bench.gold, seed_fraction, rng_seed)
    return AlignmentTask(bench.kg1, bench.kg2, seed, test, bench.word_vectors)


def ablation_grid(task: AlignmentTask, switches: Sequence[Switches] = STANDARD_ABLATIONS,
                  training: TrainingConfig = TrainingConfig(), fusion: FusionConfig = FusionConfig(),
                  string_config: StringSimConfig = StringSimConfig(), ks: Sequence[int] = DEFAULT_KS):
    """One evaluation per switch combination, as ``[(switches, EvalReport), ...]``.

    Each feature matrix is computed once and shared by every row that uses it.
    """
    if isinstance(task, SyntheticBenchmark):
        task = benchmark_task(task)
    if not switches:
        return []
    needed = sorted({f for s in switches for f in s.enabled_features()})
    matrices = feature_matrices(task, needed, training, string_config)
    gold = task.gold()
    rows = []
    for sw in switches:
        outcome = align_matrices(matrices, sw, fusion)
        rows.append((sw, evaluate(outcome.matching, outcome.fused, gold, ks, label=sw.label)))
    return rows


def format_grid(rows) -> str:
    """Tab-separated ablation table with a header line."""
    ks = sorted({k for _, r in rows for k in r.hits_at})
    header = ["setting", "collective", "adaptive", "structural", "semantic", "string", "accuracy"]
    header += [f"hits@{k}" for k in ks] + ["mrr"]
    lines = ["\t".join(header)]
    for sw, r in rows:
        cells = [sw.label] + [str(int(getattr(sw, f))) for f in
                              ("collective", "adaptive", "structural", "semantic", "string")]
        cells.append(f"{r.accuracy:.6f}")
        cells += [f"{r.hits_at.get(k, float('nan')):.6f}" for k in ks]
        cells.append(f"{r.mrr:.6f}" if r.mrr is not None else "")
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"
