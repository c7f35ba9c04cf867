"""Hash-table baseline: exact memorization with a nearest-neighbor fallback."""
from __future__ import annotations

import time

import numpy as np

from .featurize import EncodingSpec, encode_flat

KEY_DECIMALS = 9


def _key(x) -> tuple:
    return tuple(np.round(np.asarray(x, dtype=np.float64), KEY_DECIMALS).tolist())


class MemoTable:
    def __init__(self, width: int, p: float = 2.0):
        if p <= 0:
            raise ValueError("Minkowski order must be positive")
        self.width = width
        self.p = p
        self.entries: dict[tuple, int] = {}
        self._rows: dict[tuple, int] = {}  # key -> row in vectors (first insertion)
        self._vectors: list[np.ndarray] = []
        self._values: list[int] = []
        self.examples_seen = 0
        self.build_seconds = 0.0

    def add(self, x, cardinality: int) -> None:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.width,):
            raise ValueError(f"vector width {x.shape} != ({self.width},)")
        key = _key(x)
        self.examples_seen += 1
        self.entries[key] = int(cardinality)
        if key in self._rows:
            self._values[self._rows[key]] = int(cardinality)
        else:
            self._rows[key] = len(self._vectors)
            self._vectors.append(x)
            self._values.append(int(cardinality))

    def __len__(self):
        return len(self.entries)

    def size_metric(self) -> int:
        """One weight per feature per training example."""
        return self.examples_seen * self.width

    parameter_count = size_metric

    def lookup(self, x) -> tuple[int, bool]:
        if not self.entries:
            raise LookupError("memo table is empty")
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.width,):
            raise ValueError(f"vector width {x.shape} != ({self.width},)")
        hit = self.entries.get(_key(x))
        if hit is not None:
            return hit, True
        stored = np.asarray(self._vectors)
        dist = np.sum(np.abs(stored - x) ** self.p, axis=1)
        return self._values[int(np.argmin(dist))], False  # argmin keeps the earliest tie

    def to_json(self) -> dict:
        return {"format_version": 1, "kind": "memo", "width": self.width, "p": self.p,
                "examples_seen": self.examples_seen,
                "vectors": [v.tolist() for v in self._vectors], "values": self._values}

    @classmethod
    def from_json(cls, obj) -> "MemoTable":
        table = cls(obj["width"], obj["p"])
        for v, c in zip(obj["vectors"], obj["values"]):
            table.add(v, c)
        table.examples_seen = obj["examples_seen"]
        return table

    def lookup_many(self, X) -> np.ndarray:
        return np.array([self.lookup(x)[0] for x in np.atleast_2d(X)], dtype=np.float64)


def build(examples, spec: EncodingSpec, p: float = 2.0) -> MemoTable:
    start = time.perf_counter()
    table = MemoTable(spec.width, p)
    for ex in examples:
        table.add(encode_flat(spec, ex.query), ex.cardinality)
    table.build_seconds = time.perf_counter() - start
    return table


def lookup(table: MemoTable, x):
    return table.lookup(x)
