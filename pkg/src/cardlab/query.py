"""SPJ queries with single-sided range predicates and their left-deep orderings."""
from __future__ import annotations

from dataclasses import dataclass

from .relstore import DatabaseSchema, JoinEdge, SchemaError, split_ref


class QueryError(ValueError):
    pass


@dataclass(frozen=True)
class Query:
    """Relations, the join edges between them, and ``column <= threshold`` selections.

    All three fields are kept in canonical sorted order so equal queries
    compare and hash equal.
    """

    relations: tuple[str, ...]
    joins: tuple[JoinEdge, ...] = ()
    selections: tuple[tuple[str, int], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "relations", tuple(sorted(set(self.relations))))
        object.__setattr__(self, "joins", tuple(sorted(set(self.joins), key=str)))
        sels = tuple(sorted((c, int(v)) for c, v in self.selections))
        cols = [c for c, _ in sels]
        if len(set(cols)) != len(cols):
            raise QueryError("more than one selection on a column")
        object.__setattr__(self, "selections", sels)

    def selections_on(self, rel: str) -> tuple[tuple[str, int], ...]:
        return tuple(s for s in self.selections if split_ref(s[0])[0] == rel)

    def joins_between(self, rel: str, others) -> tuple[JoinEdge, ...]:
        others = set(others)
        return tuple(e for e in self.joins
                     if rel in e.relations and e.other(rel) in others and e.other(rel) != rel)

    def is_connected(self, rels=None) -> bool:
        rels = set(self.relations if rels is None else rels)
        if not rels:
            return False
        start = min(rels)
        seen, stack = {start}, [start]
        while stack:
            cur = stack.pop()
            for e in self.joins_between(cur, rels - seen):
                nb = e.other(cur)
                seen.add(nb)
                stack.append(nb)
        return seen == rels

    def subquery(self, rels) -> "Query":
        rels = set(rels)
        return Query(tuple(rels),
                     tuple(e for e in self.joins if set(e.relations) <= rels),
                     tuple(s for s in self.selections if split_ref(s[0])[0] in rels))

    def validate(self, schema: DatabaseSchema) -> None:
        if not self.relations:
            raise QueryError("query references no relations")
        for rel in self.relations:
            try:
                schema.relation(rel)
            except SchemaError as exc:
                raise QueryError(str(exc)) from None
        schema_edges = set(schema.join_edges)
        for e in self.joins:
            if e not in schema_edges:
                raise QueryError(f"join {e} is not a schema join edge")
            if not set(e.relations) <= set(self.relations):
                raise QueryError(f"join {e} references a relation outside the query")
        eligible = set(schema.selection_columns)
        for col, _ in self.selections:
            if col not in eligible:
                raise QueryError(f"column {col} is not eligible for selections")
            if split_ref(col)[0] not in self.relations:
                raise QueryError(f"selection on {col} outside referenced relations")
        if not self.is_connected():
            raise QueryError(f"relations {list(self.relations)} are not connected by the query's joins")

    def to_json(self) -> dict:
        return {"relations": list(self.relations),
                "joins": [str(e) for e in self.joins],
                "selections": [[c, v] for c, v in self.selections]}

    @classmethod
    def from_json(cls, obj: dict) -> "Query":
        return cls(tuple(obj["relations"]),
                   tuple(JoinEdge.parse(j) for j in obj.get("joins", ())),
                   tuple((c, int(v)) for c, v in obj.get("selections", ())))


@dataclass(frozen=True)
class Step:
    relation: str
    selections: tuple[tuple[str, int], ...] = ()
    joins: tuple[JoinEdge, ...] = ()  # predicates connecting to earlier steps; empty at step 0


@dataclass(frozen=True)
class JoinSequence:
    steps: tuple[Step, ...]

    def __len__(self):
        return len(self.steps)

    @property
    def order(self) -> tuple[str, ...]:
        return tuple(s.relation for s in self.steps)

    def prefix(self, length: int) -> "JoinSequence":
        return JoinSequence(self.steps[:length])

    @property
    def query(self) -> Query:
        return Query(self.order,
                     tuple(e for s in self.steps for e in s.joins),
                     tuple(sel for s in self.steps for sel in s.selections))

    def validate(self) -> None:
        seen: set[str] = set()
        for t, step in enumerate(self.steps):
            if step.relation in seen:
                raise QueryError(f"relation {step.relation} appears twice")
            if t == 0 and step.joins:
                raise QueryError("first step cannot carry join predicates")
            if t > 0 and not step.joins:
                raise QueryError(f"step {t} ({step.relation}) does not connect to earlier steps")
            for e in step.joins:
                if step.relation not in e.relations or e.other(step.relation) not in seen:
                    raise QueryError(f"step {t}: join {e} does not connect {step.relation} to the prefix")
            seen.add(step.relation)

    @classmethod
    def from_order(cls, q: Query, order) -> "JoinSequence":
        steps, seen = [], []
        for rel in order:
            joins = q.joins_between(rel, seen)
            steps.append(Step(rel, q.selections_on(rel), joins))
            seen.append(rel)
        seq = cls(tuple(steps))
        seq.validate()
        return seq
