"""Exact SPJ counting, used to label workloads.

``cardinality`` filters each relation, then hash-joins in a connected order
while aggregating the intermediate result down to the join keys still needed
by later joins (plus a multiplicity column). ``cardinality_naive`` is an
independent nested-loop oracle for small inputs.
"""
from __future__ import annotations

import numpy as np

from .query import JoinSequence, Query, QueryError
from .relstore import Database, split_ref

NAIVE_LIMIT = 10**8
_INT64_GUARD = 2.0**62


class SizeGuardError(ValueError):
    pass


def _selection_mask(db: Database, rel: str, selections) -> np.ndarray:
    mask = np.ones(db.row_count(rel), dtype=bool)
    for col, threshold in selections:
        mask &= db.column(col) <= threshold
    return mask


def _check_overflow(counts: np.ndarray) -> None:
    if counts.size and float(counts.astype(np.float64).sum()) > _INT64_GUARD:
        raise OverflowError("cardinality exceeds 64-bit range")


def _group(keys: np.ndarray, counts: np.ndarray):
    """Sum ``counts`` over identical key rows (sort-based aggregation)."""
    _check_overflow(counts)
    if keys.shape[1] == 0:
        return keys[:1] if len(keys) else np.zeros((1, 0), np.int64), np.array([int(counts.sum())], np.int64)
    if len(keys) <= 1:
        return keys, counts
    order = np.argsort(keys[:, 0], kind="stable") if keys.shape[1] == 1 else np.lexsort(keys.T[::-1])
    sk, sc = keys[order], counts[order]
    change = np.any(sk[1:] != sk[:-1], axis=1)
    starts = np.concatenate(([0], np.flatnonzero(change) + 1))
    return sk[starts], np.add.reduceat(sc, starts)


def _key_ids(left: np.ndarray, right: np.ndarray):
    if left.shape[1] == 1:
        return left[:, 0], right[:, 0]
    _, inv = np.unique(np.vstack([left, right]), axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    return inv[:len(left)], inv[len(left):]


def _hash_join(lkeys, lcounts, rkeys, rcounts, lon, ron):
    """Index pairs (left_row, right_row) whose join columns agree."""
    lid, rid = _key_ids(lkeys[:, lon], rkeys[:, ron])
    order = np.argsort(rid, kind="stable")
    rs = rid[order]
    lo = np.searchsorted(rs, lid, side="left")
    reps = np.searchsorted(rs, lid, side="right") - lo
    total = int(reps.sum())
    left_idx = np.repeat(np.arange(len(lid)), reps)
    starts = np.cumsum(reps) - reps
    right_idx = order[np.arange(total) + np.repeat(lo - starts, reps)]
    return left_idx, right_idx


def _needed_columns(q: Query, inside: set[str]) -> list[str]:
    cols = set()
    for e in q.joins:
        a, b = e.relations
        if (a in inside) != (b in inside):
            cols.add(e.column_of(a if a in inside else b))
    return sorted(cols)


def _base(db: Database, q: Query, rel: str, keep: list[str]):
    mask = _selection_mask(db, rel, q.selections_on(rel))
    keys = np.column_stack([db.column(c)[mask] for c in keep]) if keep else np.zeros((int(mask.sum()), 0), np.int64)
    return _group(keys.astype(np.int64, copy=False), np.ones(len(keys), dtype=np.int64))


def _run(db: Database, q: Query, order) -> list[int]:
    """Join along ``order``; return the exact count after each prefix."""
    result = []
    inside: set[str] = set()
    cols: list[str] = []
    keys = counts = None
    for rel in order:
        connecting = q.joins_between(rel, inside)
        if inside and not connecting:
            raise QueryError(f"relation {rel} does not connect to {sorted(inside)}")
        after = inside | {rel}
        future = _needed_columns(q, after)
        own = sorted({e.column_of(rel) for e in connecting} | {c for c in future if split_ref(c)[0] == rel})
        rkeys, rcounts = _base(db, q, rel, own)
        if keys is None:
            keys, counts = rkeys[:, [own.index(c) for c in future]], rcounts
            keys, counts = _group(keys, counts)
        else:
            lon = [cols.index(e.column_of(e.other(rel))) for e in connecting]
            ron = [own.index(e.column_of(rel)) for e in connecting]
            li, ri = _hash_join(keys, counts, rkeys, rcounts, lon, ron)
            lc, rc = counts[li], rcounts[ri]
            if lc.size and float((lc.astype(np.float64) * rc).max()) > _INT64_GUARD:
                raise OverflowError("cardinality exceeds 64-bit range")
            parts = [keys[li, cols.index(c)] if c in cols else rkeys[ri, own.index(c)] for c in future]
            newkeys = np.column_stack(parts) if parts else np.zeros((len(li), 0), np.int64)
            keys, counts = _group(newkeys, lc * rc)
        cols = future
        inside = after
        _check_overflow(counts)
        result.append(int(counts.sum()))
    return result


def join_order(db: Database, q: Query) -> list[str]:
    """Greedy connected order by ascending filtered base size (ties by name)."""
    sizes = {r: int(_selection_mask(db, r, q.selections_on(r)).sum()) for r in q.relations}
    order = [min(q.relations, key=lambda r: (sizes[r], r))]
    rest = set(q.relations) - set(order)
    while rest:
        candidates = [r for r in rest if q.joins_between(r, order)]
        if not candidates:
            raise QueryError("query relations are disconnected")
        nxt = min(candidates, key=lambda r: (sizes[r], r))
        order.append(nxt)
        rest.remove(nxt)
    return order


def cardinality(db: Database, q: Query) -> int:
    q.validate(db.schema)
    return _run(db, q, join_order(db, q))[-1]


def prefix_cardinalities(db: Database, seq: JoinSequence) -> list[int]:
    seq.validate()
    q = seq.query
    q.validate(db.schema)
    return _run(db, q, seq.order)


def cardinality_naive(db: Database, q: Query, limit: int = NAIVE_LIMIT) -> int:
    """Nested-loop count over combinations of rows of the referenced relations.

    Predicates are tested as soon as every relation they mention is bound, so
    empty branches are abandoned early; no hashing or aggregation is used.
    ``limit`` caps the number of partial row combinations enumerated.
    """
    q.validate(db.schema)
    if any(db.row_count(rel) == 0 for rel in q.relations):
        return 0
    # connected visiting order so partial tuples stay small
    order = [q.relations[0]]
    while len(order) < len(q.relations):
        order.append(min(r for r in q.relations if r not in order and q.joins_between(r, order)))
    local = [_selection_mask(db, rel, q.selections_on(rel)) for rel in order]
    checks = []
    for i, rel in enumerate(order):
        level = []
        for e in q.joins_between(rel, order[:i]):
            j = order.index(e.other(rel))
            level.append((db.column(e.column_of(rel)), j, db.column(e.column_of(order[j]))))
        checks.append(level)

    bound = [0] * len(order)
    visited = 0

    def visit(i: int) -> int:
        nonlocal visited
        mask = local[i].copy()
        for col, j, other_col in checks[i]:
            mask &= col == other_col[bound[j]]
        if i == len(order) - 1:
            return int(mask.sum())
        rows = np.flatnonzero(mask)
        visited += rows.size
        if visited > limit:
            raise SizeGuardError(f"nested loop exceeded {limit} partial combinations")
        total = 0
        for row in rows:
            bound[i] = row
            total += visit(i + 1)
        return total

    return visit(0)
