"""Flat and per-step query encodings plus the log/standardize label transform.

A vector is the concatenation of a relation one-hot, one selection slot per
attribute of every relation, and a join-edge one-hot.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .query import JoinSequence, Query, QueryError
from .relstore import Database, JoinEdge, split_ref

SELECTIVITY_FLOOR = 1e-9


@dataclass(frozen=True, eq=False)
class EncodingSpec:
    relation_order: tuple[str, ...]
    attribute_order: tuple[str, ...]
    join_order: tuple[JoinEdge, ...]
    domain_cdfs: dict[str, np.ndarray]
    # per-column cumulative tuple fractions aligned with domain_cdfs, used when frequency_weighted
    frequency_cdfs: dict[str, np.ndarray] | None = None
    frequency_weighted: bool = False

    @property
    def width(self) -> int:
        return len(self.relation_order) + len(self.attribute_order) + len(self.join_order)

    def __eq__(self, other):
        if not isinstance(other, EncodingSpec):
            return NotImplemented
        return (self.relation_order == other.relation_order
                and self.attribute_order == other.attribute_order
                and self.join_order == other.join_order
                and self.frequency_weighted == other.frequency_weighted
                and self.domain_cdfs.keys() == other.domain_cdfs.keys()
                and all(np.array_equal(self.domain_cdfs[k], other.domain_cdfs[k]) for k in self.domain_cdfs))

    def segments(self) -> tuple[slice, slice, slice]:
        r, a = len(self.relation_order), len(self.attribute_order)
        return slice(0, r), slice(r, r + a), slice(r + a, self.width)


def build_spec(db: Database, frequency_weighted: bool = False) -> EncodingSpec:
    schema = db.schema
    attrs = tuple(f"{r.name}.{c}" for r in schema.relations for c in r.column_names)
    cdfs, freq = {}, {}
    for col in schema.selection_columns:
        values, counts = np.unique(db.column(col), return_counts=True)
        cdfs[col] = values
        freq[col] = np.cumsum(counts) / max(counts.sum(), 1)
    return EncodingSpec(tuple(schema.relation_names), attrs, tuple(schema.join_edges), cdfs, freq,
                        frequency_weighted)


def percentile(spec: EncodingSpec, column: str, value) -> float:
    """Fraction of distinct active-domain values <= ``value``."""
    try:
        dom = spec.domain_cdfs[column]
    except KeyError:
        raise QueryError(f"no domain statistics for {column}") from None
    if dom.size == 0:
        return 1.0
    k = int(np.searchsorted(dom, value, side="right"))
    if spec.frequency_weighted:
        return float(spec.frequency_cdfs[column][k - 1]) if k else 0.0
    return k / dom.size


class _Index:
    """Cached positions of spec elements."""

    def __init__(self, spec: EncodingSpec):
        self.rel = {r: i for i, r in enumerate(spec.relation_order)}
        off = len(spec.relation_order)
        self.attr = {a: off + i for i, a in enumerate(spec.attribute_order)}
        self.attrs_of: dict[str, list[int]] = {}
        for a, i in self.attr.items():
            self.attrs_of.setdefault(split_ref(a)[0], []).append(i)
        off += len(spec.attribute_order)
        self.join = {e: off + i for i, e in enumerate(spec.join_order)}


_INDEX_CACHE: dict[int, tuple[EncodingSpec, _Index]] = {}


def _index(spec: EncodingSpec) -> _Index:
    hit = _INDEX_CACHE.get(id(spec))
    if hit is None or hit[0] is not spec:
        hit = (spec, _Index(spec))
        _INDEX_CACHE[id(spec)] = hit
    return hit[1]


def _fill_relation(spec, idx, vec, rel, selections):
    try:
        vec[idx.rel[rel]] = 1.0
        vec[idx.attrs_of[rel]] = 1.0
        for col, value in selections:
            vec[idx.attr[col]] = percentile(spec, col, value)
    except KeyError as exc:
        raise QueryError(f"unknown schema element {exc}") from None


def _set_joins(idx, vec, joins):
    for e in joins:
        try:
            vec[idx.join[e]] = 1.0
        except KeyError:
            raise QueryError(f"unknown join edge {e}") from None


def encode_flat(spec: EncodingSpec, q: Query) -> np.ndarray:
    idx = _index(spec)
    vec = np.zeros(spec.width)
    for rel in q.relations:
        _fill_relation(spec, idx, vec, rel, q.selections_on(rel))
    _set_joins(idx, vec, q.joins)
    return vec


def encode_sequence(spec: EncodingSpec, seq: JoinSequence) -> np.ndarray:
    """One row per step: the newly added relation, its predicates and its connecting joins."""
    idx = _index(spec)
    out = np.zeros((len(seq), spec.width))
    for t, step in enumerate(seq.steps):
        _fill_relation(spec, idx, out[t], step.relation, step.selections)
        _set_joins(idx, out[t], step.joins)
    return out


def encode_many(spec: EncodingSpec, queries) -> np.ndarray:
    return np.array([encode_flat(spec, q) for q in queries]).reshape(len(queries), spec.width)


@dataclass
class LabelTransform:
    mean: float = 0.0
    std: float = 1.0
    floor: float = SELECTIVITY_FLOOR
    fitted: bool = False

    @classmethod
    def fit(cls, selectivities, floor: float = SELECTIVITY_FLOOR) -> "LabelTransform":
        """Fit on training selectivities.

        The floor is lowered below half the smallest positive selectivity so
        that no reachable nonzero label is clipped.
        """
        sel = np.asarray(selectivities, dtype=np.float64)
        positive = sel[sel > 0]
        if positive.size:
            floor = min(floor, float(positive.min()) / 2.0)
        logs = np.log(np.maximum(sel, floor))
        if logs.size < 2 or np.unique(logs).size < 2:
            raise ValueError("label transform needs at least two distinct selectivities")
        std = float(logs.std())
        return cls(float(logs.mean()), std, floor, True)

    def apply(self, selectivity):
        return (np.log(np.maximum(selectivity, self.floor)) - self.mean) / self.std

    def invert(self, transformed):
        return np.clip(np.exp(np.asarray(transformed) * self.std + self.mean), self.floor, 1.0)

    def to_json(self) -> dict:
        return {"mean": self.mean, "std": self.std, "floor": self.floor}

    @classmethod
    def from_json(cls, obj) -> "LabelTransform":
        return cls(obj["mean"], obj["std"], obj["floor"], True)


def fit_label_transform(selectivities, floor: float = SELECTIVITY_FLOOR) -> LabelTransform:
    return LabelTransform.fit(selectivities, floor)


def dump_csv(path, vectors) -> None:
    np.savetxt(path, np.atleast_2d(vectors), delimiter=",", fmt="%.17g")


def relation_product(row_counts: dict[str, int], relations) -> int:
    return math.prod(row_counts[r] for r in relations)
