"""Left-deep join ordering by dynamic programming under the C_out cost model.

An estimator is any callable mapping a connected (sub)query to an estimated
cardinality. Plan cost is the sum of estimated cardinalities of every prefix
with at least two relations.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

from . import executor
from .query import JoinSequence, Query
from .relstore import Database

COST_MODEL_NOTE = "cost = C_out (sum of intermediate result cardinalities)"


@dataclass(frozen=True)
class LeftDeepPlan:
    order: tuple[str, ...]
    prefix_estimates: tuple[float, ...]
    cost: float

    def sequence(self, q: Query) -> JoinSequence:
        return JoinSequence.from_order(q, self.order)


@dataclass(frozen=True)
class ImpactRecord:
    query_id: int
    chosen_cost: float
    optimal_cost: float
    ratio: float
    estimator: str = ""


class _Scorer:
    def __init__(self, q: Query, estimator):
        self.q = q
        self.estimator = estimator
        self.cache: dict[frozenset, float] = {}

    def __call__(self, rels) -> float:
        key = frozenset(rels)
        if key not in self.cache:
            self.cache[key] = float(self.estimator(self.q.subquery(key)))
        return self.cache[key]


def _rank(cost: float, first_estimate: float, order: tuple[str, ...]):
    # tie-break: smaller estimated first input, then lexicographic order
    return (cost, first_estimate, order)


def best_plan(q: Query, estimator) -> LeftDeepPlan:
    score = _Scorer(q, estimator)
    rels = q.relations
    best: dict[frozenset, tuple] = {}
    for r in rels:
        best[frozenset([r])] = _rank(0.0, score([r]), (r,))
    for size in range(2, len(rels) + 1):
        for combo in itertools.combinations(rels, size):
            subset = frozenset(combo)
            if not q.is_connected(subset):
                continue
            est = score(subset)
            cand = None
            for last in combo:
                prev = best.get(subset - {last})
                if prev is None or not q.joins_between(last, subset - {last}):
                    continue
                ranked = _rank(prev[0] + est, prev[1], prev[2] + (last,))
                if cand is None or ranked < cand:
                    cand = ranked
            if cand is not None:
                best[subset] = cand
    cost, _, order = best[frozenset(rels)]
    return LeftDeepPlan(order, tuple(score(order[:i + 1]) for i in range(len(order))), cost)


def plan_cost(q: Query, order, estimator) -> float:
    score = estimator if isinstance(estimator, _Scorer) else _Scorer(q, estimator)
    cost = 0.0
    for i in range(2, len(order) + 1):
        cost += score(order[:i])
    return cost


def exhaustive_best(q: Query, estimator) -> LeftDeepPlan:
    """Enumerate every valid left-deep order (the DP's oracle)."""
    from .workload import left_deep_orders

    score = _Scorer(q, estimator)
    ranked = min(_rank(plan_cost(q, o, score), score(o[:1]), tuple(o)) for o in left_deep_orders(q))
    order = ranked[2]
    return LeftDeepPlan(order, tuple(score(order[:i + 1]) for i in range(len(order))), ranked[0])


def truth_estimator(db: Database):
    @lru_cache(maxsize=None)
    def estimate(q: Query) -> float:
        return float(executor.cardinality(db, q))
    return estimate


def impact(q: Query, estimator, truth, query_id: int = 0, name: str = "") -> ImpactRecord:
    """True C_out of the estimator's plan relative to the true-cardinality optimum."""
    chosen = best_plan(q, estimator)
    optimal = best_plan(q, truth)
    truth_score = _Scorer(q, truth)
    chosen_cost = plan_cost(q, chosen.order, truth_score)
    optimal_cost = optimal.cost
    if optimal_cost == 0.0:
        ratio = 1.0 if chosen_cost == 0.0 else float("inf")
    else:
        ratio = chosen_cost / optimal_cost
    return ImpactRecord(query_id, chosen_cost, optimal_cost, ratio, name)


def write_impact_csv(path, records) -> None:
    with open(path, "w") as fh:
        fh.write(f"# {COST_MODEL_NOTE}\n")
        fh.write("query_id,chosen_cost,optimal_cost,ratio,estimator\n")
        for r in records:
            fh.write(f"{r.query_id},{r.chosen_cost!r},{r.optimal_cost!r},{r.ratio!r},{r.estimator}\n")
