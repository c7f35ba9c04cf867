"""Common estimator contract over every model family, plus file dispatch.

Each estimator predicts cardinalities for labeled/unlabeled examples and
single queries, and reports a parameter count.
"""
from __future__ import annotations

import json
import math
import time
from pathlib import Path

import numpy as np

from . import forest, histo, memo, neural
from .featurize import EncodingSpec, LabelTransform, encode_flat
from .query import Query
from .workload import LabeledExample


class ModelNotFoundError(FileNotFoundError):
    pass


def _totals(row_counts, examples) -> np.ndarray:
    return np.array([math.prod(row_counts[r] for r in ex.query.relations) for ex in examples], dtype=np.float64)


class Estimator:
    name = ""
    kind = ""
    train_seconds = 0.0

    def estimate_examples(self, examples) -> np.ndarray:
        raise NotImplementedError

    def estimate_query(self, q: Query) -> float:
        return float(self.estimate_examples([LabeledExample(q, _canonical_sequence(q))])[0])

    __call__ = estimate_query

    def parameter_count(self) -> int:
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)
            fh.write("\n")


def _canonical_sequence(q: Query):
    from .workload import left_deep_orders
    from .query import JoinSequence
    return JoinSequence.from_order(q, left_deep_orders(q)[0])


class NeuralEstimator(Estimator):
    def __init__(self, net, spec: EncodingSpec, row_counts, name: str = ""):
        self.net, self.spec, self.row_counts = net, spec, dict(row_counts)
        self.kind = "rnn" if isinstance(net, neural.RecurrentNet) else "nn"
        self.name = name or self.kind

    def estimate_examples(self, examples):
        return neural.predict_cardinalities(self.net, self.spec, examples, self.row_counts)

    def parameter_count(self):
        return self.net.parameter_count()

    def to_json(self):
        return {"estimator": self.kind, "name": self.name, "model": self.net.to_json()}


class TreeEstimator(Estimator):
    """Forest or boosted ensemble on raw features predicting transformed log-selectivity."""

    def __init__(self, model, transform: LabelTransform, spec: EncodingSpec, row_counts, name: str = ""):
        self.model, self.transform, self.spec, self.row_counts = model, transform, spec, dict(row_counts)
        self.kind = "rf" if isinstance(model, forest.RandomForest) else "gbt"
        self.name = name or self.kind

    def estimate_examples(self, examples):
        X = np.array([encode_flat(self.spec, ex.query) for ex in examples]).reshape(len(examples), self.spec.width)
        sel = self.transform.invert(self.model.predict(X))
        totals = _totals(self.row_counts, examples)
        return np.rint(np.clip(sel * totals, 0.0, totals))

    def parameter_count(self):
        return self.model.parameter_count()

    def to_json(self):
        return {"estimator": self.kind, "name": self.name, "transform": self.transform.to_json(),
                "model": self.model.to_json()}


class MemoEstimator(Estimator):
    kind = "memo"

    def __init__(self, table: memo.MemoTable, spec: EncodingSpec, name: str = "memo"):
        self.table, self.spec, self.name = table, spec, name

    def estimate_examples(self, examples):
        return np.array([self.table.lookup(encode_flat(self.spec, ex.query))[0] for ex in examples], dtype=np.float64)

    def parameter_count(self):
        return self.table.size_metric()

    def to_json(self):
        return {"estimator": "memo", "name": self.name, "model": self.table.to_json()}


class HistogramEstimator(Estimator):
    kind = "hist"

    def __init__(self, stats: histo.StatsCatalog, name: str = ""):
        self.stats = stats
        self.name = name or f"hist{stats.bins}"

    def estimate_examples(self, examples):
        return np.array([histo.estimate_query(self.stats, ex.query) for ex in examples], dtype=np.float64)

    def estimate_query(self, q):
        return histo.estimate_query(self.stats, q)

    __call__ = estimate_query

    def parameter_count(self):
        return self.stats.parameter_count()

    def to_json(self):
        return {"estimator": "hist", "name": self.name, "bins": self.stats.bins}


class TruthEstimator(Estimator):
    kind = "truth"

    def __init__(self, db, name: str = "truth"):
        from .planner import truth_estimator
        self._estimate = truth_estimator(db)
        self.name = name

    def estimate_examples(self, examples):
        return np.array([self._estimate(ex.query) for ex in examples], dtype=np.float64)

    def estimate_query(self, q):
        return self._estimate(q)

    __call__ = estimate_query

    def parameter_count(self):
        return 0


def load_estimator(path, db, spec: EncodingSpec) -> Estimator:
    """Load a saved model file; ``hist:<bins>`` and ``truth`` build baselines from ``db``."""
    text = str(path)
    if text == "truth":
        return TruthEstimator(db)
    if text.startswith("hist:"):
        return HistogramEstimator(histo.build_stats(db, int(text.split(":", 1)[1])))
    p = Path(text)
    if not p.is_file():
        raise ModelNotFoundError(f"model file {text} not found")
    with open(p) as fh:
        obj = json.load(fh)
    kind = obj.get("estimator")
    name = obj.get("name", p.stem)
    if kind in ("nn", "rnn"):
        return NeuralEstimator(neural.load_net(obj["model"]), spec, db.row_counts(), name)
    if kind in ("rf", "gbt"):
        return TreeEstimator(forest.load_model(obj["model"]), LabelTransform.from_json(obj["transform"]),
                             spec, db.row_counts(), name)
    if kind == "memo":
        return MemoEstimator(memo.MemoTable.from_json(obj["model"]), spec, name)
    if kind == "hist":
        return HistogramEstimator(histo.build_stats(db, obj["bins"]), name)
    raise ValueError(f"{text}: unknown estimator kind {kind!r}")


DEFAULTS = {
    "arch": "100w,1d", "lr": 1e-3, "batch": 128, "epochs": 500, "patience": 20, "min_delta": 1e-4,
    "trees": 50, "depth": None, "shrinkage": 1.0, "bins": 1000, "grid": False, "p": 2.0,
    "validation_fraction": 0.1, "mode": "many_to_many", "jobs": 1,
}


def _sub_seed(seed: int, name: str) -> int:
    return int(np.random.SeedSequence([seed, *name.encode()]).generate_state(1)[0])


def train_estimator(kind: str, examples, db, spec: EncodingSpec, seed: int, **options):
    """Fit one estimator family on labeled examples; returns (estimator, report dict).

    Neural nets hold out ``validation_fraction`` of the examples for early
    stopping; ``grid=True`` runs the learning-rate/batch grid search first.
    """
    from . import lab
    from .workload import split

    opts = {**DEFAULTS, **{k: v for k, v in options.items() if v is not None}}
    examples = list(examples)
    report: dict = {"kind": kind, "train_size": len(examples)}
    if kind in ("nn", "rnn"):
        n_val = max(1, int(round(opts["validation_fraction"] * len(examples))))
        train_ex, val_ex = split(examples, n_val, _sub_seed(seed, "validation"))
        recurrent = kind == "rnn"
        build = neural.sequence_data if recurrent else neural.flat_data
        tr, va = build(spec, train_ex), build(spec, val_ex)
        options_net = {"mode": opts["mode"]} if recurrent else {}

        def make():
            return neural.init(opts["arch"], spec.width, _sub_seed(seed, "init"), recurrent=recurrent, **options_net)

        if opts["grid"]:
            grid = lab.GridSpec(epochs=opts["epochs"], extension_epochs=opts["epochs"], patience=opts["patience"],
                                min_delta=opts["min_delta"])
            result = lab.grid_search(make, tr, va, grid, _sub_seed(seed, "shuffle"))
            net, rep = result.net, result.report
            report["grid"] = {f"{lr},{b}": loss for (lr, b), loss in result.cells.items()}
            report["chosen"] = {"lr": result.hyper.lr, "batch": result.hyper.batch}
        else:
            hyper = neural.Hyper(lr=opts["lr"], batch=min(opts["batch"], len(tr)), max_epochs=opts["epochs"],
                                 patience=opts["patience"], min_delta=opts["min_delta"])
            net, rep = neural.train(make(), tr, va, hyper, _sub_seed(seed, "shuffle"))
        est = NeuralEstimator(net, spec, db.row_counts(), kind)
        est.train_seconds = rep.seconds
        report["train"] = rep.to_json(include_time=False)
        report["train_seconds"] = rep.seconds
    elif kind in ("rf", "gbt"):
        X = np.array([encode_flat(spec, ex.query) for ex in examples]).reshape(len(examples), spec.width)
        transform = LabelTransform.fit([ex.selectivity for ex in examples])
        y = transform.apply(np.array([ex.selectivity for ex in examples], dtype=np.float64))
        start = time.perf_counter()
        if opts["grid"]:
            n_val = max(1, int(round(opts["validation_fraction"] * len(examples))))
            order = np.random.default_rng(_sub_seed(seed, "validation")).permutation(len(examples))
            va, tr = order[:n_val], order[n_val:]
            model, cell, scores = lab.tree_grid_search(
                kind, X[tr], y[tr], X[va], y[va], _sub_seed(seed, "bootstrap" if kind == "rf" else "boost"),
                feature_subsample=math.ceil(math.sqrt(spec.width)), jobs=opts["jobs"])
            report["grid"] = {f"{n},{d},{e}": mse for (n, d, e), mse in scores.items()}
            report["chosen"] = {"trees": cell[0], "depth": cell[1], "shrinkage": cell[2]}
        elif kind == "rf":
            params = forest.TreeParams(max_depth=opts["depth"], feature_subsample=math.ceil(math.sqrt(spec.width)))
            model = forest.fit_forest(X, y, opts["trees"], params, _sub_seed(seed, "bootstrap"), jobs=opts["jobs"])
        else:
            model = forest.fit_boosted(X, y, opts["trees"], opts["shrinkage"], forest.TreeParams(max_depth=opts["depth"]),
                                       _sub_seed(seed, "boost"))
        est = TreeEstimator(model, transform, spec, db.row_counts(), kind)
        est.train_seconds = time.perf_counter() - start
        report["train_seconds"] = est.train_seconds
    elif kind == "memo":
        table = memo.build(examples, spec, p=opts["p"])
        est = MemoEstimator(table, spec)
        est.train_seconds = table.build_seconds
        report["train_seconds"] = table.build_seconds
    elif kind == "hist":
        start = time.perf_counter()
        est = HistogramEstimator(histo.build_stats(db, opts["bins"]))
        est.train_seconds = time.perf_counter() - start
        report["train_seconds"] = est.train_seconds
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    report["parameter_count"] = est.parameter_count()
    return est, report
