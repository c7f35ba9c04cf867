"""Error metrics, CDF knees, Easy/Hard splits and trade-off reports.

Relative error is ``|estimate - true| / max(true, 1)``; absolute errors are in
tuples.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

RELATIVE_ERROR_NOTE = "relative error = |estimate - true| / max(true, 1)"


class DegenerateErrorsError(ValueError):
    pass


@dataclass(frozen=True)
class ErrorRecord:
    query_id: int
    true: float
    estimate: float
    absolute: float
    relative: float
    estimator: str = ""
    complexity: int | None = None


def errors(truths, estimates, estimator: str = "", complexities=None, query_ids=None) -> list[ErrorRecord]:
    truths = np.asarray(truths, dtype=np.float64)
    estimates = np.asarray(estimates, dtype=np.float64)
    if truths.shape != estimates.shape:
        raise ValueError(f"length mismatch: {truths.size} truths vs {estimates.size} estimates")
    ids = range(truths.size) if query_ids is None else query_ids
    comps = [None] * truths.size if complexities is None else list(complexities)
    out = []
    for qid, t, e, c in zip(ids, truths.tolist(), estimates.tolist(), comps):
        a = abs(e - t)
        out.append(ErrorRecord(int(qid), t, e, a, a / max(t, 1.0), estimator, c))
    return out


def absolute_errors(records) -> np.ndarray:
    return np.array([r.absolute for r in records], dtype=np.float64)


def cdf_points(errs):
    """Distinct sorted error values and the fraction of errors <= each."""
    errs = np.sort(np.asarray(errs, dtype=np.float64))
    values, counts = np.unique(errs, return_counts=True)
    return values, np.cumsum(counts) / errs.size


def chord_distances(errs):
    """Perpendicular distance of each CDF point to the first-to-last chord (log10(1+x), min-max normalized)."""
    values, ys = cdf_points(errs)
    xs = np.log10(1.0 + values)
    xs = (xs - xs[0]) / (xs[-1] - xs[0])
    dx, dy = xs[-1] - xs[0], ys[-1] - ys[0]
    dist = np.abs(dy * (xs - xs[0]) - dx * (ys - ys[0])) / np.hypot(dx, dy)
    return values, dist


def knee(errs, halve: bool = False) -> float:
    """Error value at the CDF point farthest from the chord; ties go to the smaller error."""
    errs = np.asarray(errs, dtype=np.float64)
    if np.unique(errs).size < 3:
        raise DegenerateErrorsError("knee needs at least three distinct error values")
    values, dist = chord_distances(errs)
    interior = dist[1:-1]
    k = float(values[1 + int(np.argmax(interior))])
    return k / 2.0 if halve else k


@dataclass
class CdfSplit:
    sorted_errors: np.ndarray
    knee: float
    easy: list
    hard: list
    halve_applied: bool = False

    @property
    def easy_fraction(self) -> float:
        total = len(self.easy) + len(self.hard)
        return len(self.easy) / total if total else 0.0

    @property
    def hard_fraction(self) -> float:
        total = len(self.easy) + len(self.hard)
        return len(self.hard) / total if total else 0.0


def split_easy_hard(records, k: float, halve_applied: bool = False) -> CdfSplit:
    if not np.isfinite(k):
        raise ValueError("knee must be finite")
    easy = [r for r in records if r.absolute <= k]
    hard = [r for r in records if r.absolute > k]
    return CdfSplit(np.sort(absolute_errors(records)), k, easy, hard, halve_applied)


def easy_fraction(subset, model_knee: float) -> float:
    """Share of ``subset`` records whose error is at most the model's own knee."""
    if not subset:
        raise ValueError("easy_fraction of an empty subset")
    return sum(r.absolute <= model_knee for r in subset) / len(subset)


def restrict(records, query_ids) -> list:
    ids = set(query_ids)
    return [r for r in records if r.query_id in ids]


def summary(records) -> dict:
    a = absolute_errors(records)
    rel = np.array([r.relative for r in records], dtype=np.float64)
    return {"median": float(np.median(a)), "p25": float(np.percentile(a, 25)),
            "p75": float(np.percentile(a, 75)), "mean_abs": float(a.mean()), "mean_rel": float(rel.mean())}


@dataclass
class EstimatorResult:
    name: str
    records: list
    parameter_count: int
    train_seconds: float


def write_errors_csv(path, records) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {RELATIVE_ERROR_NOTE}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["query_id", "true", "estimate", "abs", "rel", "estimator", "complexity"])
        for r in records:
            w.writerow([r.query_id, repr(r.true), repr(r.estimate), repr(r.absolute), repr(r.relative),
                        r.estimator, "" if r.complexity is None else r.complexity])


def write_cdf_csv(path, records) -> None:
    values, ys = cdf_points(absolute_errors(records))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["error", "cumulative_fraction"])
        for v, y in zip(values.tolist(), ys.tolist()):
            w.writerow([repr(v), repr(y)])


TRADEOFF_COLUMNS = ["estimator", "median_abs", "p25_abs", "p75_abs", "mean_abs", "mean_rel",
                    "parameter_count", "train_seconds"]


def tradeoff_rows(results) -> list[dict]:
    rows = []
    for res in results:
        s = summary(res.records)
        rows.append({"estimator": res.name, "median_abs": s["median"], "p25_abs": s["p25"], "p75_abs": s["p75"],
                     "mean_abs": s["mean_abs"], "mean_rel": s["mean_rel"],
                     "parameter_count": res.parameter_count, "train_seconds": res.train_seconds})
    return rows


def tradeoff_report(results, out_dir, include_time: bool = True) -> list[Path]:
    """Write per-estimator error and CDF CSVs plus ``tradeoff.csv`` and a gnuplot ``tradeoff.dat``.

    A memo-table result, if present, is written like any other row; its
    parameter count is the hash-table overhead reference line.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for res in results:
        p = out / f"errors_{res.name}.csv"
        write_errors_csv(p, res.records)
        c = out / f"cdf_{res.name}.csv"
        write_cdf_csv(c, res.records)
        written += [p, c]
    rows = tradeoff_rows(results)
    cols = TRADEOFF_COLUMNS if include_time else TRADEOFF_COLUMNS[:-1]
    path = out / "tradeoff.csv"
    with open(path, "w", newline="") as fh:
        fh.write(f"# {RELATIVE_ERROR_NOTE}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            w.writerow([row[c] if isinstance(row[c], str) else repr(row[c]) for c in cols])
    dat = out / "tradeoff.dat"
    with open(dat, "w") as fh:
        fh.write("# " + " ".join(cols) + "\n")
        for row in rows:
            fh.write(" ".join(str(row[c]).replace(" ", "_") for c in cols) + "\n")
    return written + [path, dat]
