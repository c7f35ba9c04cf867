import numpy as np
import pytest

from cardlab import memo
from cardlab.featurize import build_spec, encode_flat


def test_size_metric_and_exact_hits(rdb, rexamples):
    spec = build_spec(rdb)
    hundred = (rexamples * 2)[:100]
    table = memo.build(hundred, spec)
    assert table.size_metric() == 100 * 11
    for ex in hundred:
        assert memo.lookup(table, encode_flat(spec, ex.query)) == (ex.cardinality, True)


def test_duplicates_collapse():
    table = memo.MemoTable(2)
    table.add([0.1, 1.0], 5)
    table.add([0.1, 1.0], 5)
    assert len(table) == 1


def test_single_entry_answers_everything():
    table = memo.MemoTable(3)
    table.add([0, 0, 0], 42)
    assert table.lookup([5, 5, 5]) == (42, False)


@pytest.mark.parametrize("p", [1.0, 2.0, 3.5])
def test_miss_is_brute_force_nearest(p):
    rng = np.random.default_rng(int(p * 10))
    for _ in range(30):
        stored = rng.random((3, 4))
        table = memo.MemoTable(4, p)
        for i, v in enumerate(stored):
            table.add(v, i * 10)
        x = rng.random(4)
        dists = [sum(abs(a - b) ** p for a, b in zip(v, x)) ** (1 / p) for v in stored]
        assert table.lookup(x) == (int(np.argmin(dists)) * 10, False)


def test_round_trip():
    table = memo.MemoTable(2, 1.0)
    table.add([0.5, 1.0], 3)
    table.add([0.25, 0.0], 9)
    back = memo.MemoTable.from_json(table.to_json())
    assert back.size_metric() == table.size_metric()
    assert back.lookup([0.3, 0.1]) == table.lookup([0.3, 0.1])


def test_empty_table_lookup_fails():
    with pytest.raises(LookupError):
        memo.MemoTable(2).lookup([0, 0])
