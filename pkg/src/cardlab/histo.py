"""Equi-depth histogram baseline under uniformity and independence assumptions."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .query import Query
from .relstore import Database


class MissingStatisticsError(KeyError):
    pass


@dataclass(frozen=True, eq=False)
class EquiDepthHistogram:
    """``bounds[0]`` is the column minimum and ``bounds[i + 1]`` the maximum of bucket ``i``.

    Bucket 0 covers ``[bounds[0], bounds[1]]``; bucket ``i > 0`` covers
    ``(bounds[i], bounds[i + 1]]`` unless a heavy value split across buckets
    puts ``bounds[i]`` inside it as well.
    """

    bounds: np.ndarray
    counts: np.ndarray
    distinct: np.ndarray
    total_rows: int
    total_distinct: int

    @property
    def bins(self) -> int:
        return len(self.counts)

    def parameter_count(self) -> int:
        return len(self.bounds) + len(self.counts) + len(self.distinct) + 2

    def to_json(self) -> dict:
        return {"bounds": self.bounds.tolist(), "counts": self.counts.tolist(),
                "distinct": self.distinct.tolist(), "total_rows": self.total_rows,
                "total_distinct": self.total_distinct}


def build_histogram(values, bins: int) -> EquiDepthHistogram:
    if bins < 1:
        raise ValueError("bins must be >= 1")
    values = np.sort(np.asarray(values, dtype=np.int64))
    n = values.size
    if n == 0:
        empty = np.zeros(0, dtype=np.int64)
        return EquiDepthHistogram(empty, empty, empty, 0, 0)
    b = min(bins, n)
    edges = (np.arange(b + 1) * n) // b
    buckets = [values[edges[i]:edges[i + 1]] for i in range(b)]
    bounds = np.array([values[0]] + [bk[-1] for bk in buckets], dtype=np.int64)
    counts = np.array([bk.size for bk in buckets], dtype=np.int64)
    distinct = np.array([np.unique(bk).size for bk in buckets], dtype=np.int64)
    return EquiDepthHistogram(bounds, counts, distinct, int(n), int(np.unique(values).size))


def estimate_selection(hist: EquiDepthHistogram, threshold) -> float:
    """Fraction of rows with value <= threshold; linear interpolation inside the straddling bucket."""
    if hist.total_rows == 0:
        return 0.0
    b = hist.bounds
    if threshold >= b[-1]:
        return 1.0
    if threshold < b[0]:
        return 0.0
    covered = 0.0
    for i, count in enumerate(hist.counts):
        lo, hi = b[i], b[i + 1]
        if threshold >= hi:
            covered += count
            continue
        # more distinct values than integers in (lo, hi] means lo itself lies in the bucket
        if i == 0 or hist.distinct[i] > hi - lo:
            covered += count * (threshold - lo + 1) / (hi - lo + 1)
        elif threshold > lo:
            covered += count * (threshold - lo) / (hi - lo)
        break
    return min(max(covered / hist.total_rows, 0.0), 1.0)


@dataclass(frozen=True, eq=False)
class StatsCatalog:
    histograms: dict[str, EquiDepthHistogram]
    row_counts: dict[str, int]
    bins: int

    def histogram(self, column: str) -> EquiDepthHistogram:
        try:
            return self.histograms[column]
        except KeyError:
            raise MissingStatisticsError(f"no statistics for {column}") from None

    def parameter_count(self) -> int:
        return sum(h.parameter_count() for h in self.histograms.values())

    def estimate(self, q: Query) -> float:
        return estimate_query(self, q)

    def to_json(self) -> dict:
        return {"bins": self.bins, "row_counts": self.row_counts,
                "columns": {c: h.to_json() for c, h in self.histograms.items()}}

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)
            fh.write("\n")


def build_stats(db: Database, bins: int) -> StatsCatalog:
    columns = []
    for e in db.schema.join_edges:
        columns += [e.fk, e.pk]
    columns += list(db.schema.selection_columns)
    hists = {}
    for col in dict.fromkeys(columns):
        hists[col] = build_histogram(db.column(col), bins)
    return StatsCatalog(hists, db.row_counts(), bins)


def estimate_query(stats: StatsCatalog, q: Query) -> float:
    """Row-count product, times 1/max(V_fk, V_pk) per join, times each selection's marginal."""
    est = float(math.prod(stats.row_counts[r] for r in q.relations))
    for e in q.joins:
        v = max(stats.histogram(e.fk).total_distinct, stats.histogram(e.pk).total_distinct)
        est = est / v if v else 0.0
    for col, threshold in q.selections:
        est *= estimate_selection(stats.histogram(col), threshold)
    return max(est, 0.0)


def parameter_count(stats: StatsCatalog) -> int:
    return stats.parameter_count()
