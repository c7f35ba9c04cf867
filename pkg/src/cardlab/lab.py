"""Experiment orchestration: grid search, budgeted model selection and batch-mode active learning."""
from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import neural
from .featurize import EncodingSpec, encode_flat
from .neural import AdamState, Hyper, TrainingDivergence

KMEANS_ITERATIONS = 25
CANDIDATE_FACTOR = 4
COMMITTEE_SIZE = 5
WEIGHT_DECAY = 1e-4


@dataclass
class GridSpec:
    learning_rates: list = field(default_factory=lambda: [1e-2, 1e-3, 1e-4])
    batch_sizes: list = field(default_factory=lambda: [32, 128, 512])
    epochs: int = 500
    extension_epochs: int = 500
    patience: int = 20
    min_delta: float = 1e-4

    def cells(self) -> list[tuple[float, int]]:
        if not self.learning_rates or not self.batch_sizes:
            raise ValueError("grid needs at least one learning rate and one batch size")
        return [(lr, b) for lr in dict.fromkeys(self.learning_rates) for b in dict.fromkeys(self.batch_sizes)]


class GridDivergence(RuntimeError):
    pass


@dataclass
class GridResult:
    hyper: Hyper
    net: object
    report: neural.TrainReport
    cells: dict  # (lr, batch) -> best validation loss, or None when the cell diverged


def grid_search(make_net, train_set, validation_set, grid: GridSpec, seed: int) -> GridResult:
    """Train every (lr, batch) cell for ``grid.epochs``, then extend the winner under patience.

    The winner has the lowest validation loss; ties go to the lower learning
    rate, then the smaller batch.
    """
    scored, nets = {}, {}
    for lr, batch in grid.cells():
        batch = min(batch, len(train_set))
        net = make_net()
        state = AdamState.for_net(net, lr=lr)
        hyper = Hyper(lr=lr, batch=batch, max_epochs=grid.epochs, patience=None, min_delta=grid.min_delta)
        try:
            net, report = neural.train(net, train_set, validation_set, hyper, seed, state=state)
        except TrainingDivergence:
            scored[(lr, batch)] = None
            continue
        best = min(report.val_loss) if report.val_loss else neural.loss(
            net, neural._Prepared(net, validation_set).batch(np.arange(len(validation_set))))
        scored[(lr, batch)] = best
        nets[(lr, batch)] = (net, state, report)
    finite = [(loss, lr, b) for (lr, b), loss in scored.items() if loss is not None]
    if not finite:
        raise GridDivergence(f"every grid cell diverged: {sorted(scored)}")
    _, lr, batch = min(finite)
    net, state, first = nets[(lr, batch)]
    hyper = Hyper(lr=lr, batch=batch, max_epochs=grid.extension_epochs, patience=grid.patience,
                  min_delta=grid.min_delta)
    net, ext = neural.train(net, train_set, validation_set, hyper, seed + 1, state=state)
    report = neural.TrainReport(
        epochs=first.epochs + ext.epochs, train_loss=first.train_loss + ext.train_loss,
        val_loss=first.val_loss + ext.val_loss, stop_reason=ext.stop_reason,
        seconds=first.seconds + ext.seconds, best_epoch=None)
    # extension returns its best parameters, which may predate the extension
    if ext.epochs and min(ext.val_loss) > min(first.val_loss, default=math.inf):
        report.best_epoch = first.best_epoch
    else:
        report.best_epoch = None if ext.best_epoch is None else first.epochs + ext.best_epoch
    return GridResult(hyper, net, report, scored)


@dataclass
class TreeGrid:
    trees: list = field(default_factory=lambda: [1, 5, 50, 500])
    depths: list = field(default_factory=lambda: [4, 8, 16, None])
    shrinkages: list = field(default_factory=lambda: [0.1, 0.5, 1.0])  # boosting only


def tree_grid_search(kind: str, X_train, y_train, X_val, y_val, seed: int, grid: TreeGrid | None = None,
                     feature_subsample: int | None = None, jobs: int = 1):
    """Fit every ensemble configuration and keep the one with lowest validation MSE.

    Returns (model, chosen config, {config: validation MSE}). Ties keep the
    earlier cell, which is the smaller ensemble.
    """
    from . import forest
    grid = grid or TreeGrid()
    shrinks = grid.shrinkages if kind == "gbt" else [None]
    scores, best = {}, None
    for n in grid.trees:
        for depth in grid.depths:
            for eps in shrinks:
                if kind == "rf":
                    params = forest.TreeParams(max_depth=depth, feature_subsample=feature_subsample)
                    model = forest.fit_forest(X_train, y_train, n, params, seed, jobs=jobs)
                else:
                    model = forest.fit_boosted(X_train, y_train, n, eps, forest.TreeParams(max_depth=depth), seed)
                mse = float(np.mean((model.predict(X_val) - np.asarray(y_val)) ** 2))
                cell = (n, depth, eps)
                scores[cell] = mse
                if best is None or mse < best[0]:
                    best = (mse, cell, model)
    return best[2], best[1], scores


@dataclass
class Candidate:
    name: str
    parameter_count: int
    abs_errors: np.ndarray
    model: object = None

    @property
    def median_error(self) -> float:
        return float(np.median(self.abs_errors))


def select_within_budget(candidates, budget: int):
    """Lowest median absolute error among candidates with parameter_count <= budget (None if none fit)."""
    fitting = [c for c in candidates if c.parameter_count <= budget]
    if not fitting:
        return None
    return min(fitting, key=lambda c: c.median_error)


def committee_variance(predictions) -> np.ndarray:
    P = np.asarray(predictions, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] < 2:
        raise ValueError("committee predictions must be (members >= 2, pool)")
    return P.var(axis=0)


def _ranked(variance: np.ndarray) -> np.ndarray:
    # descending variance, lower index first on ties
    return np.lexsort((np.arange(variance.size), -variance))


def qbc_select(pool_vectors, predictions, K: int) -> list[int]:
    variance = committee_variance(predictions)
    if K > variance.size:
        raise ValueError(f"K={K} exceeds pool size {variance.size}")
    return _ranked(variance)[:K].tolist()


def kmeans(X, k: int, seed: int, iterations: int = KMEANS_ITERATIONS):
    """Lloyd's algorithm from a seeded k-means++ start; returns (labels, centers)."""
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    rng = np.random.default_rng(seed)
    chosen = [int(rng.integers(n))]
    d2 = np.sum((X - X[chosen[0]]) ** 2, axis=1)
    while len(chosen) < k:
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            nxt = next(i for i in range(n) if i not in chosen)
        chosen.append(nxt)
        d2 = np.minimum(d2, np.sum((X - X[nxt]) ** 2, axis=1))
    centers = X[chosen].copy()
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(iterations):
        dist = np.sum((X[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        labels = np.argmin(dist, axis=1)
        for c in range(k):
            members = labels == c
            if members.any():
                centers[c] = X[members].mean(axis=0)
    return labels, centers


def qbc_cluster_select(pool_vectors, predictions, K: int, seed: int = 0) -> list[int]:
    """Cluster the 4K highest-variance points into K groups; take each group's top-variance member."""
    variance = committee_variance(predictions)
    X = np.asarray(pool_vectors, dtype=np.float64)
    if K > variance.size:
        raise ValueError(f"K={K} exceeds pool size {variance.size}")
    if K == 0:
        return []
    ranked = _ranked(variance)
    cand = ranked[:min(variance.size, CANDIDATE_FACTOR * K)]
    labels, _ = kmeans(X[cand], K, seed)
    picks = []
    for c in range(K):
        members = cand[labels == c]  # already in variance rank order
        if members.size:
            picks.append(int(members[0]))
    taken = set(picks)
    for idx in ranked.tolist():
        if len(picks) >= K:
            break
        if idx not in taken:
            picks.append(idx)
            taken.add(idx)
    rank_of = {int(i): r for r, i in enumerate(ranked)}
    return sorted(picks, key=rank_of.__getitem__)


@dataclass
class ActiveRun:
    method: str
    seed_size: int
    K: int
    iterations: int
    validation_loss: list = field(default_factory=list)
    chosen: list = field(default_factory=list)  # per iteration, pool indices
    labeled_sizes: list = field(default_factory=list)
    wall_seconds: list = field(default_factory=list)
    error: str | None = None

    @property
    def labeled_pool(self) -> list[int]:
        return [i for batch in self.chosen for i in batch]

    def log_lines(self) -> list[str]:
        return [json.dumps({"method": self.method, "iteration": i + 1, "chosen": c,
                            "labeled_size": s, "validation_loss": v, "wall_seconds": w})
                for i, (c, s, v, w) in enumerate(zip(self.chosen, self.labeled_sizes,
                                                     self.validation_loss, self.wall_seconds))]


def _sub_seed(*parts) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


@dataclass
class ActiveConfig:
    arch: str = "100w,1d"
    committee_size: int = COMMITTEE_SIZE
    committee_hyper: Hyper = field(default_factory=lambda: Hyper(lr=1e-3, batch=32, max_epochs=50, patience=10))
    report_hyper: Hyper = field(default_factory=lambda: Hyper(lr=1e-3, batch=32, max_epochs=100, patience=20,
                                                               weight_decay=WEIGHT_DECAY))
    jobs: int = 1  # committee members trained in parallel; results do not depend on it


def _train_dense(examples, validation, spec, arch, hyper, seed):
    data = neural.flat_data(spec, examples)
    net = neural.init(arch, spec.width, seed)
    hyper = Hyper(**{**hyper.__dict__, "batch": min(hyper.batch, len(data))})
    net, _ = neural.train(net, data, validation, hyper, seed)
    return net


def _committee_member(args):
    examples, validation, spec, arch, hyper, seed, X = args
    net = _train_dense(examples, validation, spec, arch, hyper, seed)
    return np.log(net.predict_selectivity(X))


def active_learn(seed_examples, pool, method: str, K: int, iterations: int, labeler, spec: EncodingSpec,
                 validation_examples, seed: int, config: ActiveConfig | None = None) -> ActiveRun:
    """Batch-mode active learning over an unlabeled pool.

    ``pool`` holds queries (or unlabeled examples); ``labeler`` maps a list of
    them to labeled examples. Each iteration bootstraps a committee of dense
    nets from the labeled set, picks K pool points (``qbc``,
    ``qbc_cluster`` or ``random``), labels them and retrains the reporting
    net with L2 weight decay, recording its validation loss.
    """
    config = config or ActiveConfig()
    if method not in ("qbc", "qbc_cluster", "random"):
        raise ValueError(f"unknown method {method!r}")
    if config.committee_size < 2:
        raise ValueError("committee needs at least two members")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if len(pool) < K * iterations:
        raise ValueError(f"pool of {len(pool)} cannot supply {K} points for {iterations} iterations")
    labeled = list(seed_examples)
    validation = neural.flat_data(spec, validation_examples)
    pool_X = np.array([encode_flat(spec, getattr(p, "query", p)) for p in pool]).reshape(len(pool), spec.width)
    remaining = list(range(len(pool)))
    run = ActiveRun(method, len(labeled), K, iterations)
    for it in range(iterations):
        start = time.perf_counter()
        rem = np.array(remaining, dtype=np.int64)
        if method == "random":
            rng = np.random.default_rng(_sub_seed(seed, it, 0))
            local = sorted(rng.choice(rem.size, size=K, replace=False).tolist())
        else:
            tasks = []
            for member in range(config.committee_size):
                mseed = _sub_seed(seed, it, member + 1)
                rows = np.random.default_rng(mseed).integers(0, len(labeled), size=len(labeled))
                tasks.append(([labeled[r] for r in rows], validation, spec, config.arch,
                              config.committee_hyper, mseed, pool_X[rem]))
            if config.jobs > 1:
                with ProcessPoolExecutor(max_workers=config.jobs) as ex:
                    preds = list(ex.map(_committee_member, tasks))
            else:
                preds = [_committee_member(t) for t in tasks]
            if method == "qbc":
                local = qbc_select(pool_X[rem], preds, K)
            else:
                local = qbc_cluster_select(pool_X[rem], preds, K, seed=_sub_seed(seed, it, 0))
        chosen = [int(rem[i]) for i in local]
        try:
            new = labeler([pool[i] for i in chosen])
        except Exception as exc:  # keep the partial history
            run.error = f"labeler failed at iteration {it + 1}: {exc}"
            break
        labeled.extend(new)
        chosen_set = set(chosen)
        remaining = [i for i in remaining if i not in chosen_set]
        reporter = _train_dense(labeled, validation, spec, config.arch, config.report_hyper, _sub_seed(seed, it, 999))
        run.validation_loss.append(neural.loss(reporter, neural._Prepared(reporter, validation).batch(
            np.arange(len(validation)))))
        run.chosen.append(chosen)
        run.labeled_sizes.append(len(labeled))
        run.wall_seconds.append(time.perf_counter() - start)
    return run


ROBUSTNESS_MODELS = ("nn", "rf", "gbt", "memo")


def parse_scenario(text: str):
    """``remove-selection:<rel.col>:<fraction>`` or ``remove-join:<rel>+<rel>...``."""
    kind, _, rest = text.partition(":")
    if kind == "remove-selection":
        col, _, frac = rest.rpartition(":")
        if not col:
            raise ValueError(f"bad scenario {text!r}")
        return kind, col, float(frac)
    if kind == "remove-join":
        rels = tuple(r for r in rest.replace(",", "+").split("+") if r)
        if not rels:
            raise ValueError(f"bad scenario {text!r}")
        return kind, rels
    raise ValueError(f"unknown scenario {text!r}")


def robustness(db, spec, examples, scenario, seed: int, models=ROBUSTNESS_MODELS, **options):
    """Train each model family on the kept split and evaluate it on the held-out queries.

    Returns (rows, kept, held_out); one row per model with median/percentile
    absolute errors on the held-out set. No winner is declared.
    """
    from . import evaluation, models as model_lib
    from .workload import remove_join, remove_selection_values

    parsed = parse_scenario(scenario) if isinstance(scenario, str) else scenario
    if parsed[0] == "remove-selection":
        kept, held = remove_selection_values(examples, parsed[1], parsed[2], _sub_seed(seed, 1), db=db)
    else:
        kept, held = remove_join(examples, parsed[1])
    if not held:
        raise ValueError(f"scenario {scenario} holds out no queries")
    truths = np.array([ex.cardinality for ex in held], dtype=np.float64)
    rows = []
    for kind in models:
        est, _ = model_lib.train_estimator(kind, kept, db, spec, _sub_seed(seed, 2), **options)
        records = evaluation.errors(truths, est.estimate_examples(held), estimator=kind)
        s = evaluation.summary(records)
        rows.append({"model": kind, "held_out": len(held), "kept": len(kept), "median_abs": s["median"],
                     "p25_abs": s["p25"], "p75_abs": s["p75"], "mean_rel": s["mean_rel"],
                     "parameter_count": est.parameter_count()})
    return rows, kept, held
