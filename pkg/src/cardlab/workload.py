"""Query workload generation, left-deep expansion, labeling and scenario splits."""
from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import executor
from .query import JoinSequence, Query, QueryError, Step
from .relstore import Database, DatabaseSchema, active_domain

__all__ = [
    "Query", "JoinSequence", "Step", "LabeledExample", "generate", "to_sequence", "label",
    "split", "remove_selection_values", "remove_join", "read_jsonl", "write_jsonl",
]

SELECTION_PROBABILITY = 0.5


@dataclass(frozen=True)
class LabeledExample:
    query: Query
    sequence: JoinSequence
    cardinality: int | None = None
    selectivity: float | None = None
    prefix_selectivities: tuple[float, ...] | None = None

    @property
    def is_labeled(self) -> bool:
        return self.cardinality is not None

    def to_json(self) -> dict:
        obj = self.query.to_json()
        obj["order"] = list(self.sequence.order)
        obj["cardinality"] = self.cardinality
        obj["selectivity"] = self.selectivity
        obj["prefix_selectivities"] = (None if self.prefix_selectivities is None
                                       else list(self.prefix_selectivities))
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "LabeledExample":
        q = Query.from_json(obj)
        seq = JoinSequence.from_order(q, obj.get("order") or q.relations)
        prefixes = obj.get("prefix_selectivities")
        return cls(q, seq, obj.get("cardinality"), obj.get("selectivity"),
                   None if prefixes is None else tuple(prefixes))


def write_jsonl(path, examples) -> None:
    with open(path, "w") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_json()) + "\n")


def read_jsonl(path) -> list[LabeledExample]:
    with open(path) as fh:
        return [LabeledExample.from_json(json.loads(line)) for line in fh if line.strip()]


@lru_cache(maxsize=None)
def connected_subsets(schema: DatabaseSchema, size: int) -> tuple[tuple[str, ...], ...]:
    """All connected relation sets of ``size`` in declaration order."""
    return tuple(combo for combo in itertools.combinations(schema.relation_names, size)
                 if schema.is_connected(combo))


def generate(db: Database, complexity: int, n: int, seed: int) -> list[Query]:
    """``n`` random queries over ``complexity`` connected relations.

    Relation sets are drawn uniformly from all connected subsets of the
    requested size; each eligible column is predicated with probability 0.5
    and its threshold is drawn uniformly from the column's active domain.
    """
    schema = db.schema
    if not 1 <= complexity <= len(schema.relations):
        raise QueryError(f"complexity {complexity} outside 1..{len(schema.relations)}")
    subsets = connected_subsets(schema, complexity)
    if not subsets:
        raise QueryError(f"no connected relation set of size {complexity}")
    domains = {c: active_domain(db, c) for c in schema.selection_columns}
    rng = np.random.default_rng(seed)
    queries = []
    for _ in range(n):
        rels = subsets[rng.integers(len(subsets))]
        selections = []
        for rel in rels:
            for col in schema.selection_columns_of(rel):
                take = rng.random() < SELECTION_PROBABILITY
                dom = domains[col]
                if take and dom.size:
                    selections.append((col, int(dom[rng.integers(dom.size)])))
        queries.append(Query(rels, schema.edges_within(rels), tuple(selections)))
    return queries


def _left_deep_orders(q: Query, prefix: tuple[str, ...] = ()) -> list[tuple[str, ...]]:
    if len(prefix) == len(q.relations):
        return [prefix]
    out = []
    for rel in q.relations:
        if rel in prefix or (prefix and not q.joins_between(rel, prefix)):
            continue
        out.extend(_left_deep_orders(q, prefix + (rel,)))
    return out


def left_deep_orders(q: Query) -> list[tuple[str, ...]]:
    return _left_deep_orders(q)


def to_sequence(q: Query, seed: int) -> JoinSequence:
    """Uniformly random valid left-deep ordering of ``q``."""
    orders = left_deep_orders(q)
    if not orders:
        raise QueryError("query admits no left-deep order")
    rng = np.random.default_rng(seed)
    return JoinSequence.from_order(q, orders[rng.integers(len(orders))])


def _product(db: Database, rels) -> int:
    return math.prod(db.row_count(r) for r in rels)


def _selectivity(count: int, denominator: int) -> float:
    return count / denominator if denominator else 0.0


def _label_one(db: Database, q: Query, seq: JoinSequence, with_prefixes: bool) -> LabeledExample:
    if with_prefixes:
        counts = executor.prefix_cardinalities(db, seq)
        card = counts[-1]
        prefixes = tuple(_selectivity(c, _product(db, seq.order[:t + 1])) for t, c in enumerate(counts))
    else:
        card = executor.cardinality(db, q)
        prefixes = None
    return LabeledExample(q, seq, card, _selectivity(card, _product(db, q.relations)), prefixes)


_WORKER_DB: Database | None = None


def _init_worker(db):
    global _WORKER_DB
    _WORKER_DB = db


def _label_task(args):
    q, seq, with_prefixes = args
    return _label_one(_WORKER_DB, q, seq, with_prefixes)


def label(db: Database, queries, with_prefixes: bool = False, seed: int = 0, jobs: int = 1) -> list[LabeledExample]:
    """Label queries (or unlabeled examples) with exact cardinalities.

    Plain queries get a left-deep order from ``to_sequence`` seeded by
    ``(seed, index)``; examples keep their stored order. Output order always
    follows input order.
    """
    tasks = []
    for i, item in enumerate(queries):
        if isinstance(item, LabeledExample):
            q, seq = item.query, item.sequence
        else:
            q = item
            seq = to_sequence(q, seed=int(np.random.SeedSequence([seed, i]).generate_state(1)[0]))
        q.validate(db.schema)
        tasks.append((q, seq, with_prefixes))
    if jobs <= 1 or len(tasks) < 2:
        return [_label_one(db, *t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(db,)) as pool:
        return list(pool.map(_label_task, tasks, chunksize=max(1, len(tasks) // (jobs * 8))))


def sequences_for(queries, seed: int) -> list[LabeledExample]:
    """Attach seeded left-deep orders to queries without labeling them."""
    out = []
    for i, q in enumerate(queries):
        s = int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
        out.append(LabeledExample(q, to_sequence(q, s)))
    return out


def split(examples, test_n: int, seed: int):
    examples = list(examples)
    if not 0 <= test_n < len(examples):
        raise ValueError(f"test_n={test_n} must be below the number of examples ({len(examples)})")
    perm = np.random.default_rng(seed).permutation(len(examples))
    test_idx = set(perm[:test_n].tolist())
    train = [ex for i, ex in enumerate(examples) if i not in test_idx]
    test = [examples[i] for i in sorted(test_idx)]
    return train, test


def _query_of(item) -> Query:
    return item.query if isinstance(item, LabeledExample) else item


def choose_held_values(domain: np.ndarray, fraction: float, seed: int) -> np.ndarray:
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    k = math.ceil(round(fraction * domain.size, 9))
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(domain, size=k, replace=False)) if k else domain[:0]


def remove_selection_values(examples, column: str, fraction: float, seed: int,
                            domain=None, db: Database | None = None):
    """Hold out every example whose threshold on ``column`` falls in a random value subset.

    The subset has ``ceil(fraction * |active domain|)`` values. The domain comes
    from ``db`` when given, else from ``domain``.
    """
    if db is not None:
        if column not in db.schema.selection_columns:
            raise QueryError(f"unknown selection column {column}")
        domain = active_domain(db, column)
    if domain is None:
        raise ValueError("need the column's active domain or a database")
    chosen = set(choose_held_values(np.asarray(domain), fraction, seed).tolist())
    kept, held = [], []
    for ex in examples:
        thresholds = dict(_query_of(ex).selections)
        (held if thresholds.get(column) in chosen else kept).append(ex)
    return kept, held


def remove_join(examples, relation_set):
    target = set(relation_set)
    if not target:
        raise ValueError("relation_set must be nonempty")
    kept, held = [], []
    for ex in examples:
        (held if set(_query_of(ex).relations) == target else kept).append(ex)
    return kept, held


def mixed_workload(db: Database, complexities, n_per: int, seed: int) -> list[Query]:
    out = []
    for j, c in enumerate(complexities):
        out.extend(generate(db, c, n_per, seed=int(np.random.SeedSequence([seed, j]).generate_state(1)[0])))
    return out
