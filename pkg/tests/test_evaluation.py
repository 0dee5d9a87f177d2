import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kgalign.align import STANDARD_ABLATIONS, AlignmentTask, Switches, align_matrices, feature_matrices
from kgalign.evaluation import (EvalReport, accuracy, ablation_grid, benchmark_task, evaluate, format_grid,
                                generate_synthetic_pair, gold_ranks, hits_and_mrr, perturb_name)
from kgalign.kg import AlignmentSet, entity_name
from kgalign.matching import Matching
from kgalign.strings import levenshtein_ratio, string_similarity_matrix
from kgalign.structural import TrainingConfig

FAST = TrainingConfig(dim=8, epochs=5)


def test_accuracy_examples():
    gold = [(0, 0), (1, 1), (2, 2)]
    assert accuracy(Matching({0: 0, 1: 1, 2: 2}), gold) == 1.0
    assert accuracy(Matching({}), gold) == 0.0
    assert accuracy({0: 0, 1: 2, 2: 1}, gold) == 1 / 3
    assert accuracy({0: 0, 1: 1, 2: 0}, gold) == pytest.approx(2 / 3)
    links = AlignmentSet((("a", "x"), ("b", "y")))
    assert accuracy({"a": "x", "b": "x"}, links) == 0.5
    with pytest.raises(ValueError):
        accuracy({}, [])


def test_ranking_examples():
    gold = [(0, 0), (1, 1)]
    hits, mrr = hits_and_mrr(np.eye(3)[:2], gold)
    assert hits == {1: 1.0, 10: 1.0} and mrr == 1.0
    M = np.array([[0.5, 0.9, 0.1], [0.9, 0.5, 0.1]])
    hits, mrr = hits_and_mrr(M, gold)
    assert hits == {1: 0.0, 10: 1.0} and mrr == 0.5
    M = np.array([[0.9, 0.1, 0.1, 0.1, 0.1], [0.1, 0.2, 0.9, 0.8, 0.7]])
    assert gold_ranks(M, gold).tolist() == [1, 4]
    assert hits_and_mrr(M, gold)[1] == 0.625


def test_rank_ties_break_by_index():
    M = np.array([[0.5, 0.5, 0.5]])
    assert gold_ranks(M, [(0, 0)]).tolist() == [1]
    assert gold_ranks(M, [(0, 2)]).tolist() == [3]


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 15))
def test_metric_bounds(seed, n):
    rng = np.random.default_rng(seed)
    M = rng.random((n, n))
    gold = [(i, int(j)) for i, j in enumerate(rng.permutation(n))]
    ks = (1, 3, 5, 10)
    hits, mrr = hits_and_mrr(M, gold, ks)
    vals = [hits[k] for k in ks]
    assert all(0 <= v <= 1 for v in vals) and vals == sorted(vals)
    assert hits[1] <= mrr <= 1
    # oracle: rank by a dense argsort
    order = np.argsort(-M, axis=1, kind="stable")
    ranks = [int(np.flatnonzero(order[u] == v)[0]) + 1 for u, v in gold]
    assert gold_ranks(M, gold).tolist() == ranks


def test_report_text_round_trip():
    r = EvalReport(0.75, 3, 4, {1: 0.5, 10: 1.0}, 0.625, "full")
    assert EvalReport.from_text(r.to_text()) == r
    r = evaluate({0: 0, 1: 0}, None, [(0, 0), (1, 1)])
    assert (r.accuracy, r.matched, r.total, r.mrr) == (0.5, 1, 2, None)


def test_synthetic_zero_noise_is_isomorphic():
    b = generate_synthetic_pair(60, rng_seed=2)
    gold = b.gold.as_dict()
    assert b.kg1.num_entities == b.kg2.num_entities == 60 == len(gold)
    t1 = {(gold[h], r.rsplit("r", 1)[1], gold[t]) for h, r, t in b.kg1.labelled_triples()}
    t2 = {(h, r.rsplit("p", 1)[1], t) for h, r, t in b.kg2.labelled_triples()}
    assert t1 == t2
    names1 = [entity_name(s) for s in b.gold.sources]
    names2 = [entity_name(t) for t in b.gold.targets]
    assert names1 == names2
    S = string_similarity_matrix(names1, names2)
    assert (np.diag(S) == 1.0).all()


def test_synthetic_is_deterministic():
    a = generate_synthetic_pair(50, name_noise=1, structure_noise=0.2, rng_seed=9)
    b = generate_synthetic_pair(50, name_noise=1, structure_noise=0.2, rng_seed=9)
    assert a.kg1 == b.kg1 and a.kg2 == b.kg2 and a.gold == b.gold
    assert all((a.word_vectors.get(w) == b.word_vectors.get(w)).all() for w in a.word_vectors.vectors)
    assert generate_synthetic_pair(50, rng_seed=10).kg1 != a.kg1


def test_structure_noise_drops_triples_without_isolating():
    b = generate_synthetic_pair(100, triple_density=3.0, structure_noise=0.3, rng_seed=1)
    assert len(b.kg2.triples) < len(b.kg1.triples)
    assert len(b.kg2.triples) >= 0.65 * len(b.kg1.triples)
    assert b.kg2.num_entities == 100


@pytest.mark.parametrize("kwargs", [dict(n=3), dict(n=10, triple_density=0.5), dict(n=10, name_noise=-1),
                                    dict(n=10, structure_noise=1.0), dict(n=10, num_relations=0)])
def test_synthetic_parameter_errors(kwargs):
    with pytest.raises(ValueError):
        generate_synthetic_pair(**kwargs)


def test_single_substitution_ratio():
    rng = random.Random(0)
    ratios = []
    for _ in range(200):
        name = "".join(rng.choice("abcdefghij") for _ in range(5))
        chars = list(name)
        pos = rng.randrange(5)
        chars[pos] = rng.choice([c for c in "abcdefghij" if c != chars[pos]])
        ratios.append(levenshtein_ratio(name, "".join(chars)))
    assert all(r == 0.8 for r in ratios)
    # any single edit keeps the ratio at or above (5 + 4 - 1) / 9 for deletion
    edited = [levenshtein_ratio(n, perturb_name(n, 1, rng)) for n in ("abcde", "fghij", "klmno") * 30]
    assert min(edited) >= 0.8 - 1e-12


def test_perturb_name_applies_edits():
    rng = random.Random(5)
    assert perturb_name("paris", 0, rng) == "paris"
    assert all(perturb_name("paris", 1, rng) != "paris" for _ in range(50))


def test_zero_noise_full_config_is_exact():
    rows = ablation_grid(benchmark_task(generate_synthetic_pair(80, rng_seed=4)), [Switches()], FAST)
    assert rows[0][1].accuracy == 1.0


def test_single_feature_row_matches_direct_pipeline():
    task = benchmark_task(generate_synthetic_pair(60, name_noise=2, structure_noise=0.1, rng_seed=3))
    only_string = Switches(structural=False, semantic=False)
    (_, row), = ablation_grid(task, [only_string], FAST)
    direct = align_matrices(feature_matrices(task, ["string"], FAST), only_string)
    np.testing.assert_array_equal(direct.fused, feature_matrices(task, ["string"])["string"])
    assert row.accuracy == accuracy(direct.matching, task.gold())


def test_grid_format_and_labels():
    bench = generate_synthetic_pair(40, name_noise=1, rng_seed=6)
    rows = ablation_grid(bench, STANDARD_ABLATIONS, FAST)
    assert [sw for sw, _ in rows] == list(STANDARD_ABLATIONS)
    text = format_grid(rows)
    lines = text.splitlines()
    assert lines[0].split("\t")[:2] == ["setting", "collective"]
    assert len(lines) == 1 + len(STANDARD_ABLATIONS)
    assert lines[1].startswith("full\t") and any(l.startswith("w/o C\t") for l in lines)
    assert ablation_grid(bench, [], FAST) == []


def test_switches_need_a_feature():
    with pytest.raises(ValueError):
        Switches(structural=False, semantic=False, string=False)
    assert Switches(collective=False, string=False).label == "w/o C,Ml"


def test_task_rejects_empty_test_split():
    b = generate_synthetic_pair(10)
    with pytest.raises(ValueError):
        AlignmentTask(b.kg1, b.kg2, b.gold, AlignmentSet(()))
