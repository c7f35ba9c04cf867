import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cardlab import lab, neural, workload
from cardlab.featurize import build_spec
from cardlab.neural import Hyper


@pytest.fixture(scope="module")
def flat(rdb, rexamples):
    spec = build_spec(rdb)
    train, val = workload.split(rexamples, 18, seed=0)
    return spec, neural.flat_data(spec, train), neural.flat_data(spec, val)


def _maker(spec):
    return lambda: neural.init("8w,1d", spec.width, 3)


def test_grid_winner_is_min_validation_loss(flat):
    spec, tr, va = flat
    grid = lab.GridSpec([1e-2, 1e-3], [16, 64], epochs=5, extension_epochs=5, patience=3)
    result = lab.grid_search(_maker(spec), tr, va, grid, seed=1)
    assert len(result.cells) == 4
    best = min((loss, lr, b) for (lr, b), loss in result.cells.items())
    assert (result.hyper.lr, result.hyper.batch) == best[1:]


def test_grid_duplicates_do_not_change_winner(flat):
    spec, tr, va = flat
    a = lab.grid_search(_maker(spec), tr, va, lab.GridSpec([1e-2, 1e-3], [16], 4, 4, 2), 1)
    b = lab.grid_search(_maker(spec), tr, va, lab.GridSpec([1e-2, 1e-3, 1e-2], [16, 16], 4, 4, 2), 1)
    assert (a.hyper.lr, a.hyper.batch) == (b.hyper.lr, b.hyper.batch)
    assert a.cells == b.cells


def test_single_cell_equals_train_plus_extension(flat):
    spec, tr, va = flat
    result = lab.grid_search(_maker(spec), tr, va, lab.GridSpec([1e-2], [16], 4, 6, 2), seed=5)
    net = _maker(spec)()
    state = neural.AdamState.for_net(net, lr=1e-2)
    net, _ = neural.train(net, tr, va, Hyper(1e-2, 16, 4, None), 5, state=state)
    net, _ = neural.train(net, tr, va, Hyper(1e-2, 16, 6, 2), 6, state=state)
    assert json.dumps(net.to_json()) == json.dumps(result.net.to_json())


def test_grid_all_diverged(flat):
    spec, tr, va = flat

    def broken():
        net = _maker(spec)()
        net.params["W0"][...] = np.nan
        return net

    with np.errstate(invalid="ignore"), pytest.raises(lab.GridDivergence):
        lab.grid_search(broken, tr, va, lab.GridSpec([1e-2], [16], 2, 2, 1), 0)


def test_select_within_budget():
    c = [lab.Candidate("a", 100, np.array([5.0, 1.0, 3.0])), lab.Candidate("b", 50, np.array([2.0, 2.0, 9.0])),
         lab.Candidate("c", 500, np.array([0.0, 0.0, 0.0]))]
    assert lab.select_within_budget(c, 10) is None
    assert lab.select_within_budget(c, 60).name == "b"
    medians = {x.name: sorted(x.abs_errors)[1] for x in c}
    assert lab.select_within_budget(c, 1000).name == min(medians, key=medians.get)
    assert lab.select_within_budget(c, 100).name == "b"


def test_qbc_basics():
    assert lab.committee_variance([[0.0], [1.0], [2.0]])[0] == pytest.approx(2 / 3)
    same = np.tile(np.arange(10.0), (3, 1))
    assert lab.qbc_select(None, same, 4) == [0, 1, 2, 3]
    with pytest.raises(ValueError):
        lab.qbc_select(None, same, 11)


@given(st.integers(0, 2**31))
@settings(max_examples=30, deadline=None)
def test_qbc_matches_full_sort(seed):
    rng = np.random.default_rng(seed)
    P = rng.normal(size=(5, 20))
    var = P.var(axis=0)
    brute = sorted(range(20), key=lambda i: (-var[i], i))[:4]
    chosen = lab.qbc_select(None, P, 4)
    assert chosen == brute
    assert min(var[chosen]) >= max(np.delete(var, chosen))


def test_cluster_select_whole_pool():
    rng = np.random.default_rng(0)
    X, P = rng.normal(size=(6, 3)), rng.normal(size=(3, 6))
    assert sorted(lab.qbc_cluster_select(X, P, 6)) == list(range(6))


def test_cluster_select_identical_vectors_deterministic():
    X = np.ones((4, 2))
    P = np.random.default_rng(1).normal(size=(3, 4))
    a = lab.qbc_cluster_select(X, P, 4, seed=3)
    assert sorted(a) == [0, 1, 2, 3] and a == lab.qbc_cluster_select(X, P, 4, seed=3)


def test_cluster_select_one_per_blob():
    rng = np.random.default_rng(2)
    X = np.vstack([rng.normal(0, 0.1, size=(10, 2)), rng.normal(50, 0.1, size=(10, 2))])
    P = rng.normal(size=(5, 20))
    for seed in range(10):
        picks = lab.qbc_cluster_select(X, P, 2, seed=seed)
        blobs = {int(np.linalg.norm(X[i]) > 25) for i in picks}
        assert blobs == {0, 1}


def test_kmeans_deterministic():
    X = np.random.default_rng(3).normal(size=(30, 2))
    a, b = lab.kmeans(X, 3, 7), lab.kmeans(X, 3, 7)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def _active_setup(rdb):
    qs = workload.mixed_workload(rdb, [1, 2, 3], 40, seed=11)
    pool = workload.sequences_for(qs, 1)
    seed_ex = workload.label(rdb, workload.generate(rdb, 2, 20, seed=12))
    val = workload.label(rdb, workload.generate(rdb, 3, 20, seed=13))
    fast = lab.ActiveConfig("8w,1d", 3, Hyper(1e-2, 16, 3, None), Hyper(1e-2, 16, 3, None, weight_decay=1e-4))
    return pool, seed_ex, val, fast


def test_random_method_takes_whole_pool(rdb):
    pool, seed_ex, val, fast = _active_setup(rdb)
    run = lab.active_learn(seed_ex, pool, "random", len(pool), 1, lambda items: workload.label(rdb, items),
                           build_spec(rdb), val, 0, fast)
    assert sorted(run.labeled_pool) == list(range(len(pool)))
    assert run.labeled_sizes == [len(seed_ex) + len(pool)]


def test_pool_growth_arithmetic(rdb):
    pool, seed_ex, val, fast = _active_setup(rdb)
    for method in ("random", "qbc", "qbc_cluster"):
        run = lab.active_learn(seed_ex, pool, method, 10, 3, lambda items: workload.label(rdb, items),
                               build_spec(rdb), val, 4, fast)
        assert run.labeled_sizes == [len(seed_ex) + 10 * i for i in (1, 2, 3)]
        assert len(set(run.labeled_pool)) == 30
        assert len(run.log_lines()) == 3


def test_active_run_replayable(rdb):
    pool, seed_ex, val, fast = _active_setup(rdb)
    runs = [lab.active_learn(seed_ex, pool, "qbc", 5, 2, lambda items: workload.label(rdb, items),
                             build_spec(rdb), val, 9, fast) for _ in range(2)]
    assert runs[0].chosen == runs[1].chosen and runs[0].validation_loss == runs[1].validation_loss


def test_labeler_failure_keeps_history(rdb):
    pool, seed_ex, val, fast = _active_setup(rdb)
    calls = []

    def flaky(items):
        calls.append(1)
        if len(calls) == 2:
            raise RuntimeError("boom")
        return workload.label(rdb, items)

    run = lab.active_learn(seed_ex, pool, "random", 5, 3, flaky, build_spec(rdb), val, 0, fast)
    assert len(run.chosen) == 1 and "boom" in run.error


def test_active_preconditions(rdb):
    pool, seed_ex, val, fast = _active_setup(rdb)
    with pytest.raises(ValueError):
        lab.active_learn(seed_ex, pool, "qbc", len(pool), 2, None, build_spec(rdb), val, 0, fast)
    with pytest.raises(ValueError):
        lab.active_learn(seed_ex, pool, "uncertainty", 1, 1, None, build_spec(rdb), val, 0, fast)


def test_parse_scenario():
    assert lab.parse_scenario("remove-selection:A.a1:0.1") == ("remove-selection", "A.a1", 0.1)
    assert lab.parse_scenario("remove-join:A+B") == ("remove-join", ("A", "B"))
    with pytest.raises(ValueError):
        lab.parse_scenario("drop:A")


def test_robustness_table(rdb, rexamples):
    rows, kept, held = lab.robustness(rdb, build_spec(rdb), rexamples, "remove-join:B+C", 0,
                                      epochs=5, trees=3)
    assert [r["model"] for r in rows] == list(lab.ROBUSTNESS_MODELS)
    assert held and all(set(ex.query.relations) == {"B", "C"} for ex in held)
    assert all(np.isfinite(r["median_abs"]) for r in rows)


def test_committee_fan_out_does_not_change_choices(rdb):
    pool, seed_ex, val, fast = _active_setup(rdb)
    parallel = lab.ActiveConfig(fast.arch, fast.committee_size, fast.committee_hyper, fast.report_hyper, jobs=2)
    runs = [lab.active_learn(seed_ex, pool, "qbc", 5, 2, lambda items: workload.label(rdb, items),
                             build_spec(rdb), val, 6, cfg) for cfg in (fast, parallel)]
    assert runs[0].chosen == runs[1].chosen
    assert runs[0].validation_loss == runs[1].validation_loss


def test_tree_grid_picks_lowest_validation_mse():
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(120, 3))
    y = np.where(X[:, 0] > 0.5, 2.0, -1.0) + X[:, 1]
    grid = lab.TreeGrid(trees=[1, 5], depths=[1, 4], shrinkages=[0.5, 1.0])
    for kind in ("rf", "gbt"):
        model, cell, scores = lab.tree_grid_search(kind, X[:80], y[:80], X[80:], y[80:], 3, grid)
        assert scores[cell] == min(scores.values())
        assert len(scores) == (8 if kind == "gbt" else 4)
        assert np.isclose(np.mean((model.predict(X[80:]) - y[80:]) ** 2), scores[cell])
