import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cardlab import executor, workload
from cardlab.query import Query, QueryError
from cardlab.relstore import JoinEdge, load_preset, generate_synthetic


def test_single_relation_queries(rdb):
    qs = workload.generate(rdb, 1, 3, seed=0)
    assert len(qs) == 3 and all(len(q.relations) == 1 and not q.joins for q in qs)


def test_two_relation_sets_are_connected(rdb):
    sets = {q.relations for q in workload.generate(rdb, 2, 200, seed=1)}
    assert sets == {("A", "B"), ("B", "C")}


def test_generate_deterministic(rdb):
    assert workload.generate(rdb, 3, 100, seed=7) == workload.generate(rdb, 3, 100, seed=7)


def test_generate_rejects_impossible_complexity(rdb):
    with pytest.raises(QueryError):
        workload.generate(rdb, 4, 1, seed=0)


def test_connected_subsets_match_brute_force():
    schema, _ = load_preset("star")
    import itertools
    for size in range(1, len(schema.relations) + 1):
        expected = [c for c in itertools.combinations(schema.relation_names, size) if schema.is_connected(c)]
        assert list(workload.connected_subsets(schema, size)) == expected


def test_thresholds_drawn_from_active_domain(rdb):
    from cardlab.relstore import active_domain
    for q in workload.generate(rdb, 3, 50, seed=2):
        for col, v in q.selections:
            assert v in set(active_domain(rdb, col).tolist())


def test_to_sequence_shapes(rdb):
    q = Query(("A",))
    seq = workload.to_sequence(q, 0)
    assert len(seq) == 1 and seq.steps[0].joins == ()
    q = Query(("A", "B"), (JoinEdge("A.a2", "B.b1"),))
    assert {workload.to_sequence(q, s).order for s in range(30)} == {("A", "B"), ("B", "A")}


def test_chain_sequences_have_one_predicate_per_step():
    schema, rows = load_preset("chain")
    db = generate_synthetic(schema, rows, 0)
    q = workload.generate(db, 6, 1, seed=0)[0]
    for s in range(20):
        seq = workload.to_sequence(q, s)
        assert [len(step.joins) for step in seq.steps] == [0, 1, 1, 1, 1, 1]


def test_label_full_scan_and_fk_join(rdb):
    full, join = workload.label(rdb, [Query(("B",)), Query(("A", "B"), (JoinEdge("A.a2", "B.b1"),))])
    assert full.selectivity == 1.0
    assert join.cardinality == 400 and join.selectivity == pytest.approx(400 / (400 * 100))


def test_label_matches_naive(rdb):
    exs = workload.label(rdb, workload.generate(rdb, 3, 20, seed=4))
    for ex in exs:
        prod = math.prod(rdb.row_count(r) for r in ex.query.relations)
        assert ex.selectivity == executor.cardinality_naive(rdb, ex.query) / prod


def test_label_parallel_matches_serial(rdb):
    qs = workload.mixed_workload(rdb, [1, 2, 3], 10, seed=3)
    assert workload.label(rdb, qs, True, jobs=2) == workload.label(rdb, qs, True, jobs=1)


def test_prefix_labels_end_with_selectivity(rexamples):
    for ex in rexamples:
        assert len(ex.prefix_selectivities) == len(ex.query.relations)
        assert ex.prefix_selectivities[-1] == ex.selectivity


def test_jsonl_round_trip(tmp_path, rexamples):
    workload.write_jsonl(tmp_path / "w.jsonl", rexamples)
    assert workload.read_jsonl(tmp_path / "w.jsonl") == rexamples


def test_split_cases(rexamples):
    ten = rexamples[:10]
    train, test = workload.split(ten, 0, seed=0)
    assert train == ten and test == []
    with pytest.raises(ValueError):
        workload.split(ten, 10, seed=0)
    train, test = workload.split(rexamples[:100], 10, seed=0)
    assert len(train) == 90 and len(test) == 10
    assert not {id(x) for x in train} & {id(x) for x in test}


def test_remove_selection_fraction_edges(rdb, rexamples):
    kept, held = workload.remove_selection_values(rexamples, "A.a1", 0.0, 1, db=rdb)
    assert held == [] and kept == rexamples
    kept, held = workload.remove_selection_values(rexamples, "A.a1", 1.0, 1, db=rdb)
    assert all(any(c == "A.a1" for c, _ in ex.query.selections) for ex in held)
    assert not any(any(c == "A.a1" for c, _ in ex.query.selections) for ex in kept)


def test_remove_selection_ten_percent_of_twenty():
    domain = np.arange(1, 21)
    chosen = workload.choose_held_values(domain, 0.10, seed=5)
    assert len(chosen) == 2
    qs = [Query(("A",), (), (("A.a1", int(v)),)) for v in range(1, 21)] + [Query(("A",))]
    kept, held = workload.remove_selection_values(qs, "A.a1", 0.10, 5, domain=domain)
    assert held == [q for q in qs if q.selections and q.selections[0][1] in set(chosen.tolist())]
    assert len(kept) + len(held) == len(qs)


@given(st.integers(0, 10**6))
@settings(max_examples=20, deadline=None)
def test_remove_join_partition_matches_scan(seed):
    rng = np.random.default_rng(seed)
    pool = [Query(("A",)), Query(("B",)), Query(("A", "B"), (JoinEdge("A.a2", "B.b1"),)),
            Query(("B", "C"), (JoinEdge("B.b2", "C.c1"),))]
    items = [pool[i] for i in rng.integers(0, 4, size=30)]
    target = [("A", "B"), ("B", "C"), ("A",)][seed % 3]
    kept, held = workload.remove_join(items, target)
    assert held == [q for q in items if set(q.relations) == set(target)]
    assert kept == [q for q in items if set(q.relations) != set(target)]


def test_remove_join_extremes():
    qs = [Query(("A",)), Query(("A",))]
    assert workload.remove_join(qs, ("B", "C")) == (qs, [])
    assert workload.remove_join(qs, ("A",)) == ([], qs)
