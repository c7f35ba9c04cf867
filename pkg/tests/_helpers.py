"""Shared builders for tests: small schemas, random databases, labeled workloads."""
import numpy as np

from cardlab import workload
from cardlab.relstore import (ATTRIBUTE, FOREIGN_KEY, PRIMARY_KEY, ColumnDef, DatabaseSchema, Generator,
                              RelationSchema, generate_synthetic, load_preset)


def running_db(seed=0, rows=None):
    schema, counts = load_preset("running")
    return generate_synthetic(schema, rows or counts, seed)


def random_schema(rng, n_rel):
    """Random tree-shaped join graph; each edge is an FK in a random direction."""
    cols = {i: [ColumnDef("id", PRIMARY_KEY),
                ColumnDef("v", ATTRIBUTE, generator=Generator("zipf", domain_size=int(rng.integers(2, 20)),
                                                               z=float(rng.uniform(0, 1.5))))]
            for i in range(n_rel)}
    for i in range(1, n_rel):
        j = int(rng.integers(i))
        src, dst = (i, j) if rng.random() < 0.5 else (j, i)
        gen = (Generator("zipf", z=float(rng.uniform(0, 2))) if rng.random() < 0.5
               else Generator("uniform", lo=1, hi=10**6))
        cols[src].append(ColumnDef(f"fk{dst}", FOREIGN_KEY, target=f"R{dst}.id", generator=gen))
    rels = tuple(RelationSchema(f"R{i}", tuple(cols[i])) for i in range(n_rel))
    return DatabaseSchema(rels, tuple(f"R{i}.v" for i in range(n_rel)))


def random_db(rng, n_rel, max_rows):
    schema = random_schema(rng, n_rel)
    rows = {f"R{i}": int(rng.integers(1, max_rows + 1)) for i in range(n_rel)}
    return generate_synthetic(schema, rows, int(rng.integers(2**31)))


def labeled(db, complexities, n, seed=0, prefixes=False):
    qs = workload.mixed_workload(db, complexities, n, seed)
    return workload.label(db, workload.sequences_for(qs, seed), with_prefixes=prefixes)


def random_net_and_batch(rng, recurrent):
    """Small random net with fitted scalers plus a standardized batch."""
    from cardlab import neural
    w = int(rng.integers(2, 9))
    width, depth = int(rng.integers(2, 12)), int(rng.integers(1, 4))
    n = int(rng.integers(2, 7))
    if recurrent:
        seqs = [rng.normal(size=(int(rng.integers(1, 6)), w)) for _ in range(n)]
        sels = [np.exp(-rng.uniform(0, 10, size=len(s))) for s in seqs]
        mode = "many_to_many" if rng.random() < 0.5 else "many_to_one"
        net = neural.init(f"{width}w,{depth}d", w, int(rng.integers(2**31)), recurrent=True, mode=mode)
        data = neural.SequenceData(seqs, sels)
    else:
        net = neural.init(f"{width}w,{depth}d", w, int(rng.integers(2**31)))
        data = neural.FlatData(rng.normal(size=(n, w)), np.exp(-rng.uniform(0, 10, size=n)))
    # larger weights make the check exercise nonlinear regions
    for p in net.params.values():
        p += rng.normal(0, 0.3, size=p.shape)
    neural.fit_scalers(net, data)
    return net, neural._Prepared(net, data).batch(np.arange(n))


def finite_difference_check(net, batch, rng, coords, weight_decay=0.0, h=1e-6):
    """Compare analytic and central-difference gradients at random coordinates.

    Returns a list of (analytic, numeric, passed) with 1e-4 relative tolerance
    and a 1e-8 absolute floor.
    """
    from cardlab import neural
    _, grads = neural.gradients(net, batch, weight_decay)
    names = list(net.params)
    out = []
    for _ in range(coords):
        k = names[int(rng.integers(len(names)))]
        p = net.params[k].reshape(-1)
        i = int(rng.integers(p.size))
        old = p[i]
        p[i] = old + h
        up, _ = neural.gradients(net, batch, weight_decay)
        p[i] = old - h
        down, _ = neural.gradients(net, batch, weight_decay)
        p[i] = old
        numeric = (up - down) / (2 * h)
        analytic = float(grads[k].reshape(-1)[i])
        err = abs(analytic - numeric)
        out.append((analytic, numeric, err <= max(1e-8, 1e-4 * max(abs(analytic), abs(numeric)))))
    return out
