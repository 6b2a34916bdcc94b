"""Synthetic laundering-pattern injector and random background generator.

Builds desk-scale benchmark graphs in two steps: `random_background` draws a
seeded random transaction graph with licit accounts, then `inject` embeds
path / cycle / clique / multipartite patterns of fresh illicit accounts until
the requested illicit node fraction is reached. Transaction attribute rows
come from a pool (real or synthetic), and pattern edges receive them under
flow-ordering and shared-amount rules so the patterns carry a learnable
signature rather than arbitrary noise.
"""

from dataclasses import dataclass, field, replace as dc_replace

import numpy as np

from .errors import DataError
from .graph import ILLICIT, LICIT, SPLIT_NONE, TransactionGraph, \
    augment_structural_features

PATTERN_KINDS = ("path", "cycle", "clique", "multipartite")

# Pool column layout: every row is one transaction's attribute vector.
POOL_TIMESTAMP = 0
POOL_AMOUNT = 1


def synthetic_pool(num_rows, seed=0, extra_cols=1):
    """Random transaction-attribute rows: [timestamp, amount, categories...].

    Timestamps are uniform on [0, 1), amounts log-normal, and the optional
    extra columns hold small category codes. Continuous timestamps make the
    flow-ordering rules below strict with probability one.
    """
    if num_rows < 1:
        raise DataError("pool needs at least one row")
    rng = np.random.default_rng(seed)
    cols = [rng.random(num_rows), rng.lognormal(0.0, 1.0, num_rows)]
    for _ in range(extra_cols):
        cols.append(rng.integers(0, 5, num_rows).astype(np.float64))
    return np.column_stack(cols)


@dataclass
class InjectionConfig:
    """Knobs for `inject`.

    pool: 2-D float array of transaction rows, columns [timestamp, amount,
        extras...]; pattern and attachment edges draw their features here.
    target_illicit_fraction: inject patterns until illicit/total >= this.
    pattern_weights: selection weights aligned with PATTERN_KINDS.
    attach_edges: benign edges added per pattern (0..2) linking it to the
        background so patterns are not trivially separable components.
    """

    pool: np.ndarray
    target_illicit_fraction: float = 1.0 / 3.0
    pattern_weights: tuple = (1.0, 1.0, 1.0, 1.0)
    path_cycle_sizes: tuple = (10, 20)
    clique_sizes: tuple = (5, 10)
    multipartite_layers: tuple = (5, 3, 1)
    attach_edges: int = 1
    seed: int = 0

    def __post_init__(self):
        self.pool = np.ascontiguousarray(self.pool, dtype=np.float64)
        if self.pool.ndim != 2 or self.pool.shape[1] < 2:
            raise DataError("pool must be 2-D with timestamp and amount columns")
        if not 0.0 <= self.target_illicit_fraction < 1.0:
            raise DataError("target_illicit_fraction must be in [0, 1)")
        if len(self.pattern_weights) != len(PATTERN_KINDS):
            raise DataError("pattern_weights must match PATTERN_KINDS")
        weights = np.asarray(self.pattern_weights, dtype=np.float64)
        if (weights < 0).any() or weights.sum() <= 0:
            raise DataError("pattern_weights must be non-negative, not all zero")
        for name in ("path_cycle_sizes", "clique_sizes"):
            lo, hi = getattr(self, name)
            if lo < 2 or hi < lo:
                raise DataError(f"{name} must satisfy 2 <= lo <= hi")
        if len(self.multipartite_layers) < 2 or min(self.multipartite_layers) < 1:
            raise DataError("multipartite_layers needs >= 2 positive layers")
        if self.attach_edges not in (0, 1, 2):
            raise DataError("attach_edges must be 0, 1, or 2")


@dataclass
class PatternDraft:
    """A pattern's local structure, plus attribute rows once assigned.

    src/dst use local node ids 0..num_nodes-1 in flow order (edge i of a
    path or cycle leaves node i). rows/pool_rows are filled in by
    `assign_transactions`: rows[i] is edge i's attribute vector, drawn from
    pool row pool_rows[i].
    """

    kind: str
    num_nodes: int
    src: np.ndarray
    dst: np.ndarray
    layers: tuple = None
    rows: np.ndarray = None
    pool_rows: np.ndarray = None

    @property
    def num_edges(self):
        return self.src.shape[0]


@dataclass
class InjectedPattern:
    """Provenance of one embedded pattern, in final-graph coordinates."""

    kind: str
    node_ids: np.ndarray
    edge_ids: np.ndarray
    pool_rows: np.ndarray
    attach_edge_ids: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))


def generate_pattern(kind, rng, path_cycle_sizes=(10, 20), clique_sizes=(5, 10),
                     multipartite_layers=(5, 3, 1)):
    """Draw one abstract pattern: local node count plus directed edge lists.

    Path/cycle sizes are uniform over their inclusive range; cliques take
    every ordered pair (complete directed); multipartite layers are fixed
    sizes with complete connectivity between consecutive layers.
    """
    if kind == "path":
        n = int(rng.integers(path_cycle_sizes[0], path_cycle_sizes[1] + 1))
        src, dst = np.arange(n - 1), np.arange(1, n)
    elif kind == "cycle":
        n = int(rng.integers(path_cycle_sizes[0], path_cycle_sizes[1] + 1))
        src, dst = np.arange(n), np.concatenate([np.arange(1, n), [0]])
    elif kind == "clique":
        n = int(rng.integers(clique_sizes[0], clique_sizes[1] + 1))
        src = np.repeat(np.arange(n), n)
        dst = np.tile(np.arange(n), n)
        keep = src != dst
        src, dst = src[keep], dst[keep]
    elif kind == "multipartite":
        sizes = tuple(multipartite_layers)
        n = sum(sizes)
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        blocks = []
        for a, b, c in zip(offsets[:-1], offsets[1:], offsets[2:]):
            upper = np.arange(a, b)
            lower = np.arange(b, c)
            blocks.append((np.repeat(upper, lower.size), np.tile(lower, upper.size)))
        src = np.concatenate([s for s, _ in blocks])
        dst = np.concatenate([d for _, d in blocks])
        return PatternDraft("multipartite", n, src.astype(np.int64),
                            dst.astype(np.int64), layers=sizes)
    else:
        raise DataError(f"unknown pattern kind: {kind!r}")
    return PatternDraft(kind, n, src.astype(np.int64), dst.astype(np.int64))


def assign_transactions(pattern, pool_rows, rng):
    """Attach pool rows to a pattern's edges under its ordering rules.

    Draws edge-count distinct rows. Paths and cycles receive them sorted by
    timestamp along the flow (ties broken by pool order) and share a single
    amount taken from one randomly chosen row, so a path ascends everywhere
    and a cycle descends exactly once, at the wrap-around edge. Multipartite
    patterns sort rows so every earlier-layer edge precedes every later-layer
    edge. Cliques keep rows as drawn.
    """
    pool = np.ascontiguousarray(pool_rows, dtype=np.float64)
    if pool.ndim != 2 or pool.shape[1] < 2:
        raise DataError("pool must be 2-D with timestamp and amount columns")
    e = pattern.num_edges
    if pool.shape[0] < e:
        raise DataError(
            f"pattern needs {e} pool rows but only {pool.shape[0]} available")
    chosen = np.sort(rng.choice(pool.shape[0], size=e, replace=False))
    rows = pool[chosen].copy()

    if pattern.kind in ("path", "cycle"):
        order = np.argsort(rows[:, POOL_TIMESTAMP], kind="stable")
        rows, chosen = rows[order], chosen[order]
        rows[:, POOL_AMOUNT] = rows[int(rng.integers(e)), POOL_AMOUNT]
    elif pattern.kind == "multipartite":
        order = np.argsort(rows[:, POOL_TIMESTAMP], kind="stable")
        rows, chosen = rows[order], chosen[order]

    return dc_replace(pattern, rows=rows, pool_rows=chosen)


def inject(g, config):
    """Embed fresh illicit-pattern accounts until the target fraction holds.

    Repeatedly selects a kind by weight, generates and attributes a pattern,
    and appends its nodes (zero features, illicit labels) and edges to the
    graph, stopping once illicit/total >= target_illicit_fraction. Per
    pattern, `attach_edges` extra benign edges with random pool rows link a
    random pattern node to a random background node (random direction).
    Pre-existing nodes, edges, and labels are never touched; a zero target
    returns the graph unchanged.
    """
    if g.num_nodes == 0:
        raise DataError("background graph is empty")
    if g.edge_features.shape[1] != config.pool.shape[1]:
        raise DataError("pool width does not match graph edge feature width")
    if config.target_illicit_fraction == 0.0:
        return g, []

    rng = np.random.default_rng(config.seed)
    weights = np.asarray(config.pattern_weights, dtype=np.float64)
    weights = weights / weights.sum()

    labels = g.node_labels.copy()
    base_labels = [labels]
    new_src, new_dst, new_rows = [], [], []
    patterns = []
    total = g.num_nodes
    illicit = int((labels == ILLICIT).sum())
    next_node = g.num_nodes
    next_edge = g.num_edges

    while illicit / total < config.target_illicit_fraction:
        kind = PATTERN_KINDS[rng.choice(len(PATTERN_KINDS), p=weights)]
        draft = generate_pattern(
            kind, rng, path_cycle_sizes=config.path_cycle_sizes,
            clique_sizes=config.clique_sizes,
            multipartite_layers=config.multipartite_layers)
        draft = assign_transactions(draft, config.pool, rng)

        node_ids = np.arange(next_node, next_node + draft.num_nodes)
        edge_ids = np.arange(next_edge, next_edge + draft.num_edges)
        new_src.append(node_ids[draft.src])
        new_dst.append(node_ids[draft.dst])
        new_rows.append(draft.rows)
        next_node += draft.num_nodes
        next_edge += draft.num_edges

        attach_ids = np.arange(next_edge, next_edge + config.attach_edges)
        for _ in range(config.attach_edges):
            inside = int(rng.choice(node_ids))
            outside = int(rng.integers(g.num_nodes))
            a, b = (inside, outside) if rng.random() < 0.5 else (outside, inside)
            new_src.append(np.array([a], dtype=np.int64))
            new_dst.append(np.array([b], dtype=np.int64))
            new_rows.append(config.pool[rng.integers(config.pool.shape[0])][None, :])
        next_edge += config.attach_edges

        patterns.append(InjectedPattern(kind, node_ids, edge_ids,
                                        draft.pool_rows, attach_ids))
        base_labels.append(np.full(draft.num_nodes, ILLICIT, dtype=np.int64))
        total += draft.num_nodes
        illicit += draft.num_nodes

    num_new = next_node - g.num_nodes
    node_features = np.vstack(
        [g.node_features, np.zeros((num_new, g.node_features.shape[1]))])
    split_mask = None
    if g.split_mask is not None:
        split_mask = np.concatenate(
            [g.split_mask, np.full(num_new, SPLIT_NONE, dtype=np.int64)])
    out = TransactionGraph(
        next_node,
        np.concatenate([g.edge_src] + new_src),
        np.concatenate([g.edge_dst] + new_dst),
        node_features=node_features,
        edge_features=np.vstack([g.edge_features] + new_rows),
        node_labels=np.concatenate(base_labels),
        split_mask=split_mask,
    )
    return out, patterns


def random_background(n_nodes, avg_out_degree, pool, seed,
                      structural_features=True, feature_generator=None):
    """Seeded random transaction graph of licit accounts.

    The edge count is binomial with mean n_nodes * avg_out_degree; endpoints
    are uniform (self-loops and parallel edges possible, as in real ledgers)
    and edge attributes are pool rows sampled with replacement. Node features
    default to structural (degree) columns; pass feature_generator(rng, n) to
    supply your own, or disable both for zero-width features.
    """
    if n_nodes < 1:
        raise DataError("background needs at least one node")
    pool = np.ascontiguousarray(pool, dtype=np.float64)
    if pool.ndim != 2:
        raise DataError("pool must be 2-D")
    rng = np.random.default_rng(seed)
    num_edges = int(rng.binomial(int(round(2 * n_nodes * avg_out_degree)), 0.5))
    src = rng.integers(0, n_nodes, num_edges)
    dst = rng.integers(0, n_nodes, num_edges)
    rows = pool[rng.integers(0, pool.shape[0], num_edges)]
    features = None
    if feature_generator is not None:
        features = feature_generator(rng, n_nodes)
    g = TransactionGraph(n_nodes, src, dst, node_features=features,
                         edge_features=rows,
                         node_labels=np.full(n_nodes, LICIT, dtype=np.int64))
    if structural_features and feature_generator is None:
        g = augment_structural_features(g)
    return g
