import json

import numpy as np
import pytest

from cardlab import neural
from cardlab.featurize import build_spec

from _helpers import finite_difference_check, random_net_and_batch


def test_biases_and_determinism():
    for rec in (False, True):
        a = neural.init("20w,2d", 11, 5, recurrent=rec)
        b = neural.init("20w,2d", 11, 5, recurrent=rec)
        for k in a.params:
            assert np.array_equal(a.params[k], b.params[k])
            if not k.startswith("W"):
                assert np.all(a.params[k] == 0.01)


def test_parameter_counts():
    assert neural.init("100w,1d", 11, 0).parameter_count() == 11 * 100 + 100 + 100 + 1 == 1301
    assert neural.init("100w,2d", 11, 0).parameter_count() > 1301
    assert neural.init("100w,1d", 11, 0, recurrent=True).parameter_count() == 11301


def test_parse_arch():
    assert neural.parse_arch("100w,1d") == (100, 1)
    for bad in ("100", "w,d", "0w,1d", "10w,0d"):
        with pytest.raises(ValueError):
            neural.parse_arch(bad)


def test_leaky_relu():
    assert neural.leaky_relu(np.array(-2.0)) == pytest.approx(-0.02)
    assert neural.leaky_relu(np.array(3.0)) == 3.0


def test_zero_recurrent_net_outputs_readout_bias():
    net = neural.RecurrentNet(4, 6, 2)
    net.params["bout"][0] = 0.7
    y, cache = net.forward_std(np.random.default_rng(0).normal(size=(3, 5, 4)))
    assert np.all(y == 0.7)
    assert all(np.all(out == 0) for _, _, out in cache)


def test_many_to_one_equals_last_many_to_many():
    rng = np.random.default_rng(1)
    seqs = [rng.normal(size=(t, 5)) for t in (1, 3, 4)]
    data = neural.SequenceData(seqs, [np.full(len(s), 0.1) * (i + 1) for i, s in enumerate(seqs)])
    m2m = neural.init("8w,2d", 5, 3, recurrent=True)
    m2o = neural.init("8w,2d", 5, 3, recurrent=True, mode="many_to_one")
    for net in (m2m, m2o):
        neural.fit_scalers(net, data)
    last = [p[-1] for p in m2m.predict_transformed(seqs)]
    assert np.array_equal(m2o.predict_last_transformed(seqs), np.array(last))


@pytest.mark.parametrize("recurrent", [False, True])
def test_gradients_match_finite_differences(recurrent):
    rng = np.random.default_rng(11 + recurrent)
    for _ in range(15):
        net, batch = random_net_and_batch(rng, recurrent)
        results = finite_difference_check(net, batch, rng, 10, weight_decay=float(rng.choice([0.0, 1e-3])))
        assert all(ok for *_, ok in results), results


def test_zero_error_gives_zero_gradients():
    rng = np.random.default_rng(2)
    net, (Z, _) = random_net_and_batch(rng, False)
    y, _ = net.forward_std(Z)
    _, grads = neural.gradients(net, (Z, y))
    assert all(np.allclose(g, 0, atol=1e-15) for g in grads.values())


def test_batch_gradient_is_mean_of_examples():
    rng = np.random.default_rng(3)
    net, (Z, target) = random_net_and_batch(rng, False)
    Z, target = np.vstack([Z[:1], Z[:1] * 2]), np.array([target[0], target[0] + 1])
    _, both = neural.gradients(net, (Z, target))
    _, g0 = neural.gradients(net, (Z[:1], target[:1]))
    _, g1 = neural.gradients(net, (Z[1:], target[1:]))
    for k in both:
        assert np.allclose(both[k], (g0[k] + g1[k]) / 2)


def test_adam_zero_gradient_leaves_params():
    net = neural.init("4w,1d", 3, 0)
    before = net.copy().params
    state = neural.AdamState.for_net(net, lr=0.1)
    neural.adam_step(net, {k: np.zeros_like(p) for k, p in net.params.items()}, state)
    assert all(np.array_equal(before[k], net.params[k]) for k in before)


def test_adam_first_step_is_signed_lr():
    net = neural.init("4w,1d", 3, 0)
    before = net.copy().params
    rng = np.random.default_rng(0)
    grads = {k: rng.normal(size=p.shape) for k, p in net.params.items()}
    neural.adam_step(net, grads, neural.AdamState.for_net(net, lr=0.01))
    for k in grads:
        assert np.allclose(net.params[k] - before[k], -0.01 * np.sign(grads[k]), rtol=1e-5)


def test_adam_two_steps_match_scalar_recurrence():
    net = neural.DenseNet(1, [1])
    net.params["W0"][...] = 1.0
    state = neural.AdamState.for_net(net, lr=0.1)
    gs = [0.5, -0.25]
    theta, m, v = 1.0, 0.0, 0.0
    for t, g in enumerate(gs, start=1):
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        theta -= 0.1 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        grads = {k: np.zeros_like(p) for k, p in net.params.items()}
        grads["W0"][...] = g
        neural.adam_step(net, grads, state)
    assert net.params["W0"][0, 0] == pytest.approx(theta, rel=1e-12)


def _data(rdb, rexamples):
    return neural.flat_data(build_spec(rdb), rexamples)


def test_train_zero_epochs_returns_initial(rdb, rexamples):
    data = _data(rdb, rexamples)
    net = neural.init("10w,1d", data.X.shape[1], 0)
    before = net.copy().params
    net, rep = neural.train(net, data, data, neural.Hyper(batch=16, max_epochs=0), seed=0)
    assert rep.train_loss == [] and all(np.array_equal(before[k], net.params[k]) for k in before)


def test_single_example_memorized():
    data = neural.FlatData(np.array([[0.2, 1.0, 0.0]]), np.array([0.01]))
    other = neural.FlatData(np.array([[0.2, 1.0, 0.0], [1.0, 0.0, 1.0]]), np.array([0.01, 0.5]))
    net = neural.init("10w,1d", 3, 0)
    neural.fit_scalers(net, other)
    net, rep = neural.train(net, data, data, neural.Hyper(lr=1e-2, batch=1, max_epochs=2000, patience=None), 0)
    assert rep.train_loss[-1] < 1e-6


def test_training_deterministic(rdb, rexamples):
    data = _data(rdb, rexamples)
    runs = []
    for _ in range(2):
        net = neural.init("10w,1d", data.X.shape[1], 4)
        net, rep = neural.train(net, data, data, neural.Hyper(batch=32, max_epochs=20), seed=9)
        runs.append((json.dumps(net.to_json()), rep.to_json(include_time=False)))
    assert runs[0] == runs[1]


def test_predict_cardinality_bounds(rdb, rexamples):
    spec = build_spec(rdb)
    net = neural.init("10w,1d", spec.width, 0)
    neural.fit_scalers(net, _data(rdb, rexamples))
    q = rexamples[0].query
    total = int(np.prod([rdb.row_count(r) for r in q.relations]))
    net.params["Wout"][...] = 0.0
    net.params["bout"][0] = float(net.label_transform.apply(1.0))
    assert neural.predict_cardinality(net, spec, q, rdb.row_counts()) == total
    net.params["bout"][0] = -1e6
    assert neural.predict_cardinality(net, spec, q, rdb.row_counts()) >= 0


def test_overfit_round_trip(rdb, rexamples):
    spec = build_spec(rdb)
    by_sel = {ex.selectivity: ex for ex in rexamples if ex.cardinality > 50}
    chosen = [by_sel[s] for s in sorted(by_sel)[:5]]
    data = neural.flat_data(spec, chosen)
    net = neural.init("30w,1d", spec.width, 0)
    net, _ = neural.train(net, data, data, neural.Hyper(lr=3e-3, batch=5, max_epochs=3000, patience=None), 0)
    for ex in chosen:
        est = neural.predict_cardinality(net, spec, ex.query, rdb.row_counts())
        assert est == pytest.approx(ex.cardinality, rel=0.01)


def test_latents(rdb, rexamples):
    spec = build_spec(rdb)
    data = neural.flat_data(spec, rexamples[:50])
    net = neural.init("100w,1d", spec.width, 0)
    neural.fit_scalers(net, data)
    lat = neural.extract_latents(net, data.X)
    assert lat.shape == (50, 100)
    twice = neural.extract_latents(net, np.vstack([data.X[:1], data.X[:1]]))
    assert np.array_equal(twice[0], twice[1])
    zero = neural.DenseNet(spec.width, [7])
    zero.input_standardizer, zero.label_transform = net.input_standardizer, net.label_transform
    assert np.all(neural.extract_latents(zero, data.X) == 0)


def test_unfitted_prediction_raises():
    with pytest.raises(neural.NotFittedError):
        neural.init("4w,1d", 3, 0).predict_transformed(np.zeros((1, 3)))


@pytest.mark.parametrize("recurrent", [False, True])
def test_save_load_round_trip(tmp_path, rdb, rexamples, recurrent):
    spec = build_spec(rdb)
    data = (neural.sequence_data if recurrent else neural.flat_data)(spec, rexamples)
    net = neural.init("6w,2d", spec.width, 1, recurrent=recurrent)
    net, _ = neural.train(net, data, data, neural.Hyper(batch=16, max_epochs=3), 0)
    net.save(tmp_path / "m.json")
    back = neural.load_net(tmp_path / "m.json")
    assert back.parameter_count() == net.parameter_count()
    inputs = data.sequences if recurrent else data.X
    a, b = net.predict_selectivity(inputs), back.predict_selectivity(inputs)
    assert np.array_equal(a, b)


def test_divergence_raises():
    data = neural.FlatData(np.array([[0.0, 1.0], [1.0, 0.0]]), np.array([0.5, 0.01]))
    net = neural.init("4w,1d", 2, 0)
    net.params["W0"][...] = np.inf
    with np.errstate(invalid="ignore"), pytest.raises(neural.TrainingDivergence):
        neural.train(net, data, data, neural.Hyper(batch=2, max_epochs=2), 0)
