import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cardlab.featurize import LabelTransform, build_spec, encode_flat, encode_sequence, percentile
from cardlab.query import JoinSequence, Query
from cardlab.relstore import (ColumnDef, Database, DatabaseSchema, JoinEdge, Relation, RelationSchema,
                              generate_synthetic, load_preset)

AB = JoinEdge("A.a2", "B.b1")


@pytest.fixture(scope="module")
def tenth_db():
    """Running schema where A.a1 holds ten equally frequent values 1..10."""
    schema, rows = load_preset("running")
    db = generate_synthetic(schema, rows, 0)
    rels = dict(db.relations)
    rels["A"] = Relation(schema.relation("A"), {"a1": np.arange(400) % 10 + 1, "a2": db.column("A.a2")})
    return Database(schema, rels)


def test_running_width(rdb):
    spec = build_spec(rdb)
    assert spec.width == 3 + 6 + 2 == 11
    assert build_spec(rdb) == spec


def test_single_relation_width():
    schema = DatabaseSchema((RelationSchema("R", (ColumnDef("x"), ColumnDef("y"))),), ("R.x",))
    db = Database(schema, {"R": Relation(schema.relation("R"), {"x": [1, 2], "y": [3, 4]})})
    assert build_spec(db).width == 3


def test_percentile_bounds(tenth_db):
    spec = build_spec(tenth_db)
    assert percentile(spec, "A.a1", 10) == 1.0
    assert percentile(spec, "A.a1", 0) == 0.0
    assert percentile(spec, "A.a1", 1) == pytest.approx(0.1)


def test_flat_encoding_running_example(tenth_db):
    spec = build_spec(tenth_db)
    q = Query(("A", "B"), (AB,), (("A.a1", 1),))
    assert encode_flat(spec, q).tolist() == pytest.approx([1, 1, 0, 0.1, 1, 1, 1, 0, 0, 1, 0])
    assert encode_flat(spec, Query(("A",))).tolist() == [1, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0]


def test_sequence_encoding_running_example(tenth_db):
    spec = build_spec(tenth_db)
    q = Query(("A", "B"), (AB,), (("A.a1", 1),))
    x = encode_sequence(spec, JoinSequence.from_order(q, ["A", "B"]))
    assert x[0].tolist() == pytest.approx([1, 0, 0, 0.1, 1, 0, 0, 0, 0, 0, 0])
    assert x[1].tolist() == [0, 1, 0, 0, 0, 1, 1, 0, 0, 1, 0]


def test_sequence_relation_segments_sum_to_flat(rdb, rexamples):
    spec = build_spec(rdb)
    rel_seg = spec.segments()[0]
    for ex in rexamples:
        seq = encode_sequence(spec, ex.sequence)
        flat = encode_flat(spec, ex.query)
        assert seq[:, rel_seg].sum(axis=0).tolist() == flat[rel_seg].tolist()
        assert seq.shape[1] == flat.size == spec.width
        assert np.all((flat >= 0) & (flat <= 1))
        if len(ex.sequence) == 1:
            assert seq[0].tolist() == flat.tolist()


def test_frequency_weighted_percentile(rdb):
    spec = build_spec(rdb, frequency_weighted=True)
    c2 = rdb.column("C.c2")
    for v in (1, 2, 5, 40):
        assert percentile(spec, "C.c2", v) == pytest.approx(np.mean(c2 <= v))


def test_label_transform_examples():
    t = LabelTransform.fit([math.exp(-2), math.exp(-4)])
    assert (t.mean, t.std) == pytest.approx((-3.0, 1.0))
    assert t.apply(math.exp(-2)) == pytest.approx(1.0)
    assert t.apply(math.exp(t.mean)) == pytest.approx(0.0, abs=1e-12)
    assert t.invert(t.apply(0.02)) == pytest.approx(0.02, rel=1e-9)


def test_label_transform_floor_below_smallest_label():
    t = LabelTransform.fit([1e-15, 0.5, 0.0])
    assert t.floor <= 5e-16
    assert t.invert(t.apply(1e-15)) == pytest.approx(1e-15, rel=1e-9)


@given(st.lists(st.floats(1e-12, 1.0), min_size=2, max_size=30, unique=True))
@settings(max_examples=50, deadline=None)
def test_label_transform_round_trip(sels):
    t = LabelTransform.fit(sels)
    back = t.invert(t.apply(np.array(sels)))
    assert np.allclose(back, sels, rtol=1e-9)
