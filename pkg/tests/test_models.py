import numpy as np
import pytest

from cardlab.featurize import build_spec
from cardlab.models import ModelNotFoundError, load_estimator, train_estimator


@pytest.mark.parametrize("kind", ["nn", "rnn", "rf", "gbt", "memo", "hist"])
def test_train_save_load_predict(tmp_path, rdb, rexamples, kind):
    spec = build_spec(rdb)
    est, report = train_estimator(kind, rexamples, rdb, spec, 3, epochs=5, trees=3, bins=10)
    assert report["parameter_count"] == est.parameter_count() > 0
    preds = est.estimate_examples(rexamples)
    assert preds.shape == (len(rexamples),) and np.all(preds >= 0)
    est.save(tmp_path / "m.json")
    back = load_estimator(tmp_path / "m.json", rdb, spec)
    assert np.array_equal(back.estimate_examples(rexamples), preds)
    assert est(rexamples[0].query) == pytest.approx(back.estimate_query(rexamples[0].query))


def test_memo_estimator_exact_on_training(rdb, rexamples):
    est, _ = train_estimator("memo", rexamples, rdb, build_spec(rdb), 0)
    assert np.array_equal(est.estimate_examples(rexamples), [ex.cardinality for ex in rexamples])


def test_baselines_and_missing(rdb, rexamples):
    spec = build_spec(rdb)
    truth = load_estimator("truth", rdb, spec)
    assert np.array_equal(truth.estimate_examples(rexamples), [ex.cardinality for ex in rexamples])
    assert load_estimator("hist:10", rdb, spec).name == "hist10"
    with pytest.raises(ModelNotFoundError):
        load_estimator("missing.json", rdb, spec)
    with pytest.raises(ValueError):
        train_estimator("svm", rexamples, rdb, spec, 0)
