"""Schemas, columnar integer relations, synthetic generation and CSV ingestion.

Columns are referenced as ``"relation.column"`` strings throughout the package.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PRIMARY_KEY = "primary_key"
FOREIGN_KEY = "foreign_key"
ATTRIBUTE = "attribute"
_KINDS = (PRIMARY_KEY, FOREIGN_KEY, ATTRIBUTE)


class SchemaError(ValueError):
    pass


class DataError(ValueError):
    pass


def split_ref(ref: str) -> tuple[str, str]:
    rel, _, col = ref.partition(".")
    if not rel or not col:
        raise SchemaError(f"malformed column reference {ref!r}")
    return rel, col


@dataclass(frozen=True)
class Generator:
    """``sequential``, ``uniform(lo, hi)`` or ``zipf(domain_size, z)``.

    For foreign keys the drawn value is a 1-based rank into the target's
    primary-key values; ``domain_size=None`` means the whole target.
    """

    kind: str
    lo: int | None = None
    hi: int | None = None
    domain_size: int | None = None
    z: float | None = None

    def __post_init__(self):
        if self.kind == "uniform":
            if self.lo is None or self.hi is None or self.lo > self.hi:
                raise SchemaError("uniform generator needs lo <= hi")
        elif self.kind == "zipf":
            if self.z is None or self.z < 0:
                raise SchemaError("zipf generator needs z >= 0")
            if self.domain_size is not None and self.domain_size < 1:
                raise SchemaError("zipf domain_size must be >= 1")
        elif self.kind != "sequential":
            raise SchemaError(f"unknown generator {self.kind!r}")

    @classmethod
    def from_json(cls, obj) -> "Generator":
        if isinstance(obj, str):
            return cls(obj)
        return cls(obj["type"], obj.get("lo"), obj.get("hi"), obj.get("domain_size"), obj.get("z"))

    def to_json(self):
        if self.kind == "sequential":
            return "sequential"
        if self.kind == "uniform":
            return {"type": "uniform", "lo": self.lo, "hi": self.hi}
        return {"type": "zipf", "domain_size": self.domain_size, "z": self.z}


@dataclass(frozen=True)
class ColumnDef:
    name: str
    kind: str = ATTRIBUTE
    target: str | None = None  # "relation.column" of the referenced primary key
    generator: Generator | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise SchemaError(f"column {self.name}: unknown kind {self.kind!r}")
        if (self.kind == FOREIGN_KEY) != (self.target is not None):
            raise SchemaError(f"column {self.name}: target is required exactly for foreign keys")


@dataclass(frozen=True)
class RelationSchema:
    name: str
    columns: tuple[ColumnDef, ...]

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError(f"relation {self.name}: duplicate column names")
        if sum(c.kind == PRIMARY_KEY for c in self.columns) > 1:
            raise SchemaError(f"relation {self.name}: more than one primary key")

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def column(self, name: str) -> ColumnDef:
        for c in self.columns:
            if c.name == name:
                return c
        raise SchemaError(f"unknown column {self.name}.{name}")

    @property
    def primary_key(self) -> ColumnDef | None:
        return next((c for c in self.columns if c.kind == PRIMARY_KEY), None)


@dataclass(frozen=True)
class JoinEdge:
    fk: str  # "relation.column"
    pk: str

    @property
    def relations(self) -> tuple[str, str]:
        return split_ref(self.fk)[0], split_ref(self.pk)[0]

    def other(self, rel: str) -> str:
        a, b = self.relations
        return b if rel == a else a

    def column_of(self, rel: str) -> str:
        return self.fk if split_ref(self.fk)[0] == rel else self.pk

    def __str__(self):
        return f"{self.fk}={self.pk}"

    @classmethod
    def parse(cls, text: str) -> "JoinEdge":
        fk, _, pk = text.partition("=")
        return cls(fk, pk)


@dataclass(frozen=True)
class DatabaseSchema:
    relations: tuple[RelationSchema, ...]
    selection_columns: tuple[str, ...] = ()
    join_edges: tuple[JoinEdge, ...] = field(init=False)

    def __post_init__(self):
        names = [r.name for r in self.relations]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate relation names")
        edges = []
        for rel in self.relations:
            for col in rel.columns:
                if col.kind != FOREIGN_KEY:
                    continue
                trel, tcol = split_ref(col.target)
                target = self.relation(trel).column(tcol)
                if target.kind != PRIMARY_KEY:
                    raise SchemaError(f"{rel.name}.{col.name} targets non-key {col.target}")
                edges.append(JoinEdge(f"{rel.name}.{col.name}", col.target))
        object.__setattr__(self, "join_edges", tuple(edges))
        for ref in self.selection_columns:
            rel, col = split_ref(ref)
            if self.relation(rel).column(col).kind != ATTRIBUTE:
                raise SchemaError(f"selection column {ref} is not an attribute")
        if not self.is_connected(names):
            raise SchemaError("join graph is not connected")

    @property
    def relation_names(self) -> list[str]:
        return [r.name for r in self.relations]

    def relation(self, name: str) -> RelationSchema:
        for r in self.relations:
            if r.name == name:
                return r
        raise SchemaError(f"unknown relation {name!r}")

    def column(self, ref: str) -> ColumnDef:
        rel, col = split_ref(ref)
        return self.relation(rel).column(col)

    def neighbors(self, rel: str) -> set[str]:
        out = set()
        for e in self.join_edges:
            a, b = e.relations
            if a == rel:
                out.add(b)
            elif b == rel:
                out.add(a)
        return out

    def edges_within(self, rels) -> tuple[JoinEdge, ...]:
        rels = set(rels)
        return tuple(e for e in self.join_edges if set(e.relations) <= rels)

    def is_connected(self, rels) -> bool:
        rels = set(rels)
        if not rels:
            return False
        start = next(iter(sorted(rels)))
        seen, stack = {start}, [start]
        while stack:
            cur = stack.pop()
            for nb in self.neighbors(cur) & rels:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        return seen == rels

    def selection_columns_of(self, rel: str) -> list[str]:
        return [c for c in self.selection_columns if split_ref(c)[0] == rel]

    @classmethod
    def from_json(cls, obj: dict) -> "DatabaseSchema":
        rels = []
        for r in obj["relations"]:
            cols = []
            for c in r["columns"]:
                gen = c.get("generator")
                cols.append(ColumnDef(c["name"], c.get("kind", ATTRIBUTE), c.get("target"),
                                      Generator.from_json(gen) if gen is not None else None))
            rels.append(RelationSchema(r["name"], tuple(cols)))
        return cls(tuple(rels), tuple(obj.get("selection_columns", ())))

    def to_json(self) -> dict:
        rels = []
        for r in self.relations:
            cols = []
            for c in r.columns:
                d = {"name": c.name, "kind": c.kind}
                if c.target is not None:
                    d["target"] = c.target
                if c.generator is not None:
                    d["generator"] = c.generator.to_json()
                cols.append(d)
            rels.append({"name": r.name, "columns": cols})
        return {"relations": rels, "selection_columns": list(self.selection_columns)}


def load_schema(path) -> DatabaseSchema:
    with open(path) as fh:
        return DatabaseSchema.from_json(json.load(fh))


@dataclass(frozen=True, eq=False)
class Relation:
    schema: RelationSchema
    columns: dict[str, np.ndarray]

    def __post_init__(self):
        lengths = {len(self.columns[c]) for c in self.schema.column_names}
        if len(lengths) > 1:
            raise DataError(f"relation {self.schema.name}: ragged columns")
        cols = {}
        for name in self.schema.column_names:
            arr = np.array(self.columns[name], dtype=np.int64)
            arr.setflags(write=False)
            cols[name] = arr
        object.__setattr__(self, "columns", cols)
        pk = self.schema.primary_key
        if pk is not None:
            values = self.columns[pk.name]
            uniq, counts = np.unique(values, return_counts=True)
            if np.any(counts > 1):
                dup = int(uniq[np.argmax(counts > 1)])
                raise DataError(f"duplicate primary key {self.schema.name}.{pk.name} value {dup}")

    @property
    def name(self) -> str:
        return self.schema.name

    @property
    def row_count(self) -> int:
        if not self.schema.columns:
            return 0
        return len(self.columns[self.schema.columns[0].name])

    def __getitem__(self, column: str) -> np.ndarray:
        return self.columns[column]


@dataclass(frozen=True, eq=False)
class Database:
    schema: DatabaseSchema
    relations: dict[str, Relation]

    def __post_init__(self):
        for name in self.schema.relation_names:
            if name not in self.relations:
                raise DataError(f"relation {name} not materialized")
        check_referential_integrity(self)

    def column(self, ref: str) -> np.ndarray:
        rel, col = split_ref(ref)
        if rel not in self.relations:
            raise SchemaError(f"unknown relation {rel!r}")
        self.schema.relation(rel).column(col)
        return self.relations[rel][col]

    def row_count(self, rel: str) -> int:
        return self.relations[rel].row_count

    def row_counts(self) -> dict[str, int]:
        return {n: r.row_count for n, r in self.relations.items()}


def check_referential_integrity(db: Database) -> None:
    for edge in db.schema.join_edges:
        fk = db.column(edge.fk)
        pk = db.column(edge.pk)
        missing = np.setdiff1d(fk, pk)
        if missing.size:
            raise DataError(f"dangling foreign key {edge.fk} value {int(missing[0])} not in {edge.pk}")


def zipf_pmf(domain_size: int, z: float) -> np.ndarray:
    weights = 1.0 / np.arange(1, domain_size + 1, dtype=np.float64) ** z
    return weights / weights.sum()


def sample_zipf(rng: np.random.Generator, domain_size: int, z: float, n: int) -> np.ndarray:
    """Inverse-CDF draws from {1..domain_size} with P(v) proportional to v**-z."""
    cdf = np.cumsum(zipf_pmf(domain_size, z))
    cdf[-1] = 1.0
    idx = np.searchsorted(cdf, rng.random(n), side="right")
    return np.minimum(idx, domain_size - 1).astype(np.int64) + 1


def _draw(gen: Generator, rng: np.random.Generator, n: int, domain: int | None = None) -> np.ndarray:
    if gen.kind == "sequential":
        return np.arange(1, n + 1, dtype=np.int64)
    if gen.kind == "uniform":
        lo, hi = gen.lo, gen.hi
        if domain is not None:
            lo, hi = max(lo, 1), min(hi, domain)
        return rng.integers(lo, hi + 1, size=n, dtype=np.int64)
    size = gen.domain_size if gen.domain_size is not None else domain
    if size is None:
        raise SchemaError("zipf attribute needs a domain_size")
    if domain is not None:
        size = min(size, domain)
    return sample_zipf(rng, size, gen.z, n)


def _generation_order(schema: DatabaseSchema) -> list[str]:
    # targets before referencing relations
    deps = {r.name: {split_ref(c.target)[0] for c in r.columns if c.kind == FOREIGN_KEY} - {r.name}
            for r in schema.relations}
    order, done = [], set()
    while len(order) < len(deps):
        ready = [n for n in schema.relation_names if n not in done and deps[n] <= done]
        if not ready:
            raise SchemaError("cyclic foreign key dependencies")
        order.append(ready[0])
        done.add(ready[0])
    return order


def generate_synthetic(schema: DatabaseSchema, row_counts: dict[str, int], seed: int) -> Database:
    for name, n in row_counts.items():
        schema.relation(name)
        if n <= 0:
            raise DataError(f"row count for {name} must be positive")
    for name in schema.relation_names:
        if name not in row_counts:
            raise DataError(f"missing row count for {name}")
    ss = np.random.SeedSequence(seed)
    rel_seeds = dict(zip(schema.relation_names, ss.spawn(len(schema.relations))))
    built: dict[str, Relation] = {}
    for name in _generation_order(schema):
        rs = schema.relation(name)
        n = row_counts[name]
        col_seeds = rel_seeds[name].spawn(len(rs.columns))
        cols = {}
        for cdef, cseed in zip(rs.columns, col_seeds):
            rng = np.random.default_rng(cseed)
            gen = cdef.generator
            if cdef.kind == PRIMARY_KEY:
                gen = gen or Generator("sequential")
                if gen.kind != "sequential":
                    raise SchemaError(f"{name}.{cdef.name}: primary keys must be sequential")
                cols[cdef.name] = _draw(gen, rng, n)
            elif gen is None:
                raise SchemaError(f"{name}.{cdef.name}: no generator declared")
            elif cdef.kind == FOREIGN_KEY:
                trel, tcol = split_ref(cdef.target)
                target = built[trel][tcol]
                if target.size == 0:
                    raise DataError(f"{name}.{cdef.name}: foreign key target {trel} is empty")
                ranks = _draw(gen, rng, n, domain=target.size)
                cols[cdef.name] = target[ranks - 1]
            else:
                cols[cdef.name] = _draw(gen, rng, n)
        built[name] = Relation(rs, cols)
    return Database(schema, {n: built[n] for n in schema.relation_names})


def load_csv(path, schema: RelationSchema) -> Relation:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: missing header row") from None
        if header != schema.column_names:
            raise DataError(f"{path}: header {header} does not match {schema.column_names}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(f"{path}: row {lineno} has {len(row)} cells, expected {len(header)}")
            parsed = []
            for name, cell in zip(header, row):
                try:
                    v = int(cell)
                except ValueError:
                    raise DataError(f"{path}: row {lineno} column {name}: cannot parse {cell!r}") from None
                if not -(2**63) <= v < 2**63:
                    raise DataError(f"{path}: row {lineno} column {name}: {v} overflows int64")
                parsed.append(v)
            rows.append(parsed)
    data = np.array(rows, dtype=np.int64).reshape(len(rows), len(header))
    return Relation(schema, {name: data[:, i].copy() for i, name in enumerate(header)})


def write_csv(path, relation: Relation) -> None:
    names = relation.schema.column_names
    data = np.column_stack([relation[c] for c in names]) if relation.row_count else np.empty((0, len(names)), np.int64)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(names) + "\n")
        for row in data.tolist():
            fh.write(",".join(map(str, row)) + "\n")


def save_database(db: Database, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "schema.json", "w") as fh:
        json.dump(db.schema.to_json(), fh, indent=2)
        fh.write("\n")
    for name, rel in db.relations.items():
        write_csv(directory / f"{name}.csv", rel)


def load_database(directory) -> Database:
    directory = Path(directory)
    schema = load_schema(directory / "schema.json")
    rels = {r.name: load_csv(directory / f"{r.name}.csv", r) for r in schema.relations}
    return Database(schema, rels)


def active_domain(db: Database, column: str) -> np.ndarray:
    return np.unique(db.column(column))


PRESETS = ("running", "chain", "star", "imdb_like")


def preset_path(name: str) -> Path:
    if name not in PRESETS:
        raise SchemaError(f"unknown preset {name!r}; choose from {PRESETS}")
    return Path(__file__).parent / "configs" / f"{name}.json"


def load_schema_config(path) -> tuple[DatabaseSchema, dict[str, int]]:
    """Schema plus the optional default ``row_counts`` stored alongside it."""
    with open(path) as fh:
        obj = json.load(fh)
    return DatabaseSchema.from_json(obj), dict(obj.get("row_counts", {}))


def load_preset(name: str) -> tuple[DatabaseSchema, dict[str, int]]:
    return load_schema_config(preset_path(name))
