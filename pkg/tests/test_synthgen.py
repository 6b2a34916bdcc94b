"""Pattern generator and injector checks against direct enumeration."""

import numpy as np
import pytest

from linemvgnn import ILLICIT, LICIT, DataError
from linemvgnn.synthgen import (
    PATTERN_KINDS,
    POOL_AMOUNT,
    POOL_TIMESTAMP,
    InjectionConfig,
    assign_transactions,
    generate_pattern,
    inject,
    random_background,
    synthetic_pool,
)

# chi-square 99th percentiles, derived by numeric integration of the pdf
CHI2_CRIT = {5: 15.0863, 10: 23.2093}


def _attributed(kind, seed):
    rng = np.random.default_rng(seed)
    pool = synthetic_pool(200, seed=seed + 1)
    return assign_transactions(generate_pattern(kind, rng), pool, rng), pool


def test_path_structure():
    rng = np.random.default_rng(0)
    for _ in range(50):
        p = generate_pattern("path", rng)
        assert 10 <= p.num_nodes <= 20
        assert np.array_equal(p.src, np.arange(p.num_nodes - 1))
        assert np.array_equal(p.dst, np.arange(1, p.num_nodes))


def test_cycle_structure():
    rng = np.random.default_rng(1)
    for _ in range(50):
        p = generate_pattern("cycle", rng)
        n = p.num_nodes
        assert 10 <= n <= 20 and p.num_edges == n
        assert np.array_equal(p.src, np.arange(n))
        assert np.array_equal(p.dst, np.concatenate([np.arange(1, n), [0]]))


def test_clique_structure():
    rng = np.random.default_rng(2)
    for _ in range(50):
        p = generate_pattern("clique", rng)
        n = p.num_nodes
        assert 5 <= n <= 10 and p.num_edges == n * (n - 1)
        pairs = set(zip(p.src.tolist(), p.dst.tolist()))
        assert pairs == {(i, j) for i in range(n) for j in range(n) if i != j}


def test_multipartite_structure():
    p = generate_pattern("multipartite", np.random.default_rng(3))
    assert p.num_nodes == 9 and p.num_edges == 18 and p.layers == (5, 3, 1)
    first = set(zip(p.src[:15].tolist(), p.dst[:15].tolist()))
    last = set(zip(p.src[15:].tolist(), p.dst[15:].tolist()))
    assert first == {(i, j) for i in range(5) for j in range(5, 8)}
    assert last == {(j, 8) for j in range(5, 8)}


def test_unknown_kind_rejected():
    with pytest.raises(DataError):
        generate_pattern("star", np.random.default_rng(0))


def test_size_draws_uniform_chisquare():
    rng = np.random.default_rng(7)
    draws = 10_000
    path_sizes = np.array([generate_pattern("path", rng).num_nodes
                           for _ in range(draws)])
    clique_sizes = np.array([generate_pattern("clique", rng).num_nodes
                             for _ in range(draws)])
    assert path_sizes.min() >= 10 and path_sizes.max() <= 20
    assert clique_sizes.min() >= 5 and clique_sizes.max() <= 10
    for sizes, lo, hi in ((path_sizes, 10, 20), (clique_sizes, 5, 10)):
        counts = np.bincount(sizes - lo, minlength=hi - lo + 1)
        expected = draws / (hi - lo + 1)
        stat = ((counts - expected) ** 2 / expected).sum()
        assert stat < CHI2_CRIT[hi - lo]


def test_path_timestamps_strictly_ascend():
    for seed in range(30):
        p, _ = _attributed("path", seed)
        t = p.rows[:, POOL_TIMESTAMP]
        assert (np.diff(t) > 0).all()


def test_cycle_has_exactly_one_descent():
    for seed in range(30):
        p, _ = _attributed("cycle", seed)
        t = p.rows[:, POOL_TIMESTAMP]
        descents = int((np.roll(t, -1) < t).sum())
        assert descents == 1
        assert t[0] < t[-1]  # the wrap-around edge is the violator


def test_path_and_cycle_share_one_pool_amount():
    for kind in ("path", "cycle"):
        p, pool = _attributed(kind, 11)
        amounts = p.rows[:, POOL_AMOUNT]
        assert (amounts == amounts[0]).all()
        assert amounts[0] in pool[p.pool_rows, POOL_AMOUNT]
        # every other column is the chosen pool row, untouched
        keep = [c for c in range(pool.shape[1]) if c != POOL_AMOUNT]
        assert np.array_equal(p.rows[:, keep], pool[p.pool_rows][:, keep])


def test_multipartite_layer_timestamps_ordered():
    for seed in range(30):
        p, pool = _attributed("multipartite", seed)
        t = p.rows[:, POOL_TIMESTAMP]
        assert t[:15].max() < t[15:].min()
        assert np.array_equal(p.rows, pool[p.pool_rows])


def test_clique_rows_kept_as_drawn():
    p, pool = _attributed("clique", 5)
    assert np.array_equal(p.rows, pool[p.pool_rows])
    assert (np.diff(p.pool_rows) > 0).all()  # distinct rows, pool order


def test_insufficient_pool_rows():
    rng = np.random.default_rng(0)
    p = generate_pattern("path", rng)
    with pytest.raises(DataError):
        assign_transactions(p, synthetic_pool(5), rng)
    with pytest.raises(DataError):
        assign_transactions(p, np.zeros(30), rng)


def _background(n=1000, avg=2.0, seed=0, pool=None, **kwargs):
    if pool is None:
        pool = synthetic_pool(4000, seed=seed + 1)
    return random_background(n, avg, pool, seed, **kwargs), pool


def test_inject_reaches_fraction_with_bounded_overshoot():
    bg, pool = _background()
    out, patterns = inject(bg, InjectionConfig(pool, seed=3))
    frac = (out.node_labels == ILLICIT).mean()
    assert 1 / 3 <= frac <= 1 / 3 + 20 / 1333 + 1e-12
    assert len(patterns) > 0
    # removing the last pattern must leave the target unmet
    illicit = (out.node_labels == ILLICIT).sum()
    last = patterns[-1].node_ids.size
    assert (illicit - last) / (out.num_nodes - last) < 1 / 3


def test_inject_label_soundness_and_pattern_shapes():
    bg, pool = _background(n=400)
    out, patterns = inject(bg, InjectionConfig(pool, seed=4))
    member = np.zeros(out.num_nodes, dtype=bool)
    for p in patterns:
        assert p.node_ids.min() >= bg.num_nodes
        member[p.node_ids] = True
        n = p.node_ids.size
        expect_edges = {"path": n - 1, "cycle": n,
                        "clique": n * (n - 1), "multipartite": 18}[p.kind]
        assert p.edge_ids.size == expect_edges == p.pool_rows.size
        assert np.isin(out.edge_src[p.edge_ids], p.node_ids).all()
        assert np.isin(out.edge_dst[p.edge_ids], p.node_ids).all()
    assert np.array_equal(member, out.node_labels == ILLICIT)


def test_inject_preserves_background():
    bg, pool = _background(n=200)
    src0, dst0 = bg.edge_src.copy(), bg.edge_dst.copy()
    feat0, lab0 = bg.node_features.copy(), bg.node_labels.copy()
    out, _ = inject(bg, InjectionConfig(pool, seed=5))
    m, n = src0.size, lab0.size
    assert np.array_equal(out.edge_src[:m], src0)
    assert np.array_equal(out.edge_dst[:m], dst0)
    assert np.array_equal(out.edge_features[:m], bg.edge_features)
    assert np.array_equal(out.node_features[:n], feat0)
    assert np.array_equal(out.node_labels[:n], lab0)
    assert np.array_equal(bg.edge_src, src0) and np.array_equal(bg.node_labels, lab0)


def test_inject_zero_fraction_returns_graph_unchanged():
    bg, pool = _background(n=50)
    out, patterns = inject(bg, InjectionConfig(pool, target_illicit_fraction=0.0))
    assert out is bg and patterns == []


def test_inject_deterministic_per_seed():
    bg, pool = _background(n=300)
    a, pa = inject(bg, InjectionConfig(pool, seed=9))
    b, pb = inject(bg, InjectionConfig(pool, seed=9))
    assert np.array_equal(a.edge_src, b.edge_src)
    assert np.array_equal(a.edge_features, b.edge_features)
    assert np.array_equal(a.node_labels, b.node_labels)
    assert len(pa) == len(pb)
    for x, y in zip(pa, pb):
        assert x.kind == y.kind and np.array_equal(x.pool_rows, y.pool_rows)
    c, _ = inject(bg, InjectionConfig(pool, seed=10))
    assert c.num_nodes != a.num_nodes or not np.array_equal(a.edge_src, c.edge_src)


def test_attach_edges_flag():
    bg, pool = _background(n=300)
    out0, pats0 = inject(bg, InjectionConfig(pool, attach_edges=0, seed=2))
    cross = (out0.edge_src < bg.num_nodes) != (out0.edge_dst < bg.num_nodes)
    assert not cross.any()
    assert all(p.attach_edge_ids.size == 0 for p in pats0)

    out2, pats2 = inject(bg, InjectionConfig(pool, attach_edges=2, seed=2))
    for p in pats2:
        assert p.attach_edge_ids.size == 2
        for e in p.attach_edge_ids:
            ends = (out2.edge_src[e], out2.edge_dst[e])
            assert sum(v in p.node_ids for v in ends) == 1
            assert sum(v < bg.num_nodes for v in ends) == 1


def test_pattern_weights_select_kinds():
    bg, pool = _background(n=300)
    _, patterns = inject(bg, InjectionConfig(pool, pattern_weights=(1, 0, 0, 0),
                                             seed=6))
    assert {p.kind for p in patterns} == {"path"}


def test_inject_pool_width_mismatch():
    bg, _ = _background(n=50)
    with pytest.raises(DataError):
        inject(bg, InjectionConfig(synthetic_pool(100, extra_cols=0)))


def test_injection_config_validation():
    pool = synthetic_pool(100)
    for bad in (dict(target_illicit_fraction=1.0),
                dict(target_illicit_fraction=-0.1),
                dict(pattern_weights=(1, 1, 1)),
                dict(pattern_weights=(0, 0, 0, 0)),
                dict(path_cycle_sizes=(20, 10)),
                dict(clique_sizes=(1, 10)),
                dict(attach_edges=3),
                dict(multipartite_layers=(5,))):
        with pytest.raises(DataError):
            InjectionConfig(pool, **bad)
    with pytest.raises(DataError):
        InjectionConfig(np.zeros((4, 1)))  # amount column missing


def test_background_edge_count_concentration():
    pool = synthetic_pool(500, seed=1)
    counts = [random_background(100, 2.0, pool, seed).num_edges
              for seed in range(100)]
    assert min(counts) >= 150 and max(counts) <= 250
    assert len(set(counts)) > 1


def test_background_determinism_labels_and_features():
    pool = synthetic_pool(500, seed=1)
    a = random_background(120, 1.5, pool, 7)
    b = random_background(120, 1.5, pool, 7)
    assert np.array_equal(a.edge_src, b.edge_src)
    assert np.array_equal(a.edge_features, b.edge_features)
    assert (a.node_labels == LICIT).all()
    # default features are the degree columns
    expect = np.column_stack([
        np.bincount(a.edge_dst, minlength=120),
        np.bincount(a.edge_src, minlength=120)]).astype(np.float64)
    assert np.array_equal(a.node_features, expect)
    assert np.isin(a.edge_features, pool).all()


def test_background_feature_hooks():
    pool = synthetic_pool(50)
    g = random_background(30, 1.0, pool, 0,
                          feature_generator=lambda rng, n: np.ones((n, 4)))
    assert g.node_features.shape == (30, 4)
    bare = random_background(30, 1.0, pool, 0, structural_features=False)
    assert bare.node_features.shape == (30, 0)
    with pytest.raises(DataError):
        random_background(0, 1.0, pool, 0)
