"""Directed attributed multigraph with CSR neighbor indices and split masks.

Nodes are accounts, directed edges are transactions (src pays dst). Parallel
edges and self-loops are allowed. Graphs are immutable after construction:
every transform returns a new value, so shared reads are always safe.
"""

import math

import numpy as np

from .errors import DataError

UNLABELED = -1
LICIT = 0
ILLICIT = 1

SPLIT_NONE = -1
SPLIT_TRAIN = 0
SPLIT_VAL = 1
SPLIT_TEST = 2

SPLIT_NAMES = {SPLIT_NONE: "none", SPLIT_TRAIN: "train", SPLIT_VAL: "val",
               SPLIT_TEST: "test"}


class TransactionGraph:
    """Directed attributed multigraph over dense node ids 0..num_nodes-1.

    Attributes:
        num_nodes: node count.
        edge_src, edge_dst: int64 arrays [num_edges]; src pays dst.
        node_features: float64 [num_nodes, d_node].
        edge_features: float64 [num_edges, d_edge].
        node_labels: int64 [num_nodes] in {LICIT, ILLICIT, UNLABELED}.
        split_mask: int64 [num_nodes] in {SPLIT_*}.
        in_indptr/in_ids, out_indptr/out_ids: CSR over incident edge ids,
            ascending edge id within each node, built once at construction.
    """

    def __init__(self, num_nodes, edge_src, edge_dst, node_features=None,
                 edge_features=None, node_labels=None, split_mask=None):
        self.num_nodes = int(num_nodes)
        self.edge_src = np.ascontiguousarray(edge_src, dtype=np.int64)
        self.edge_dst = np.ascontiguousarray(edge_dst, dtype=np.int64)
        if self.edge_src.ndim != 1 or self.edge_src.shape != self.edge_dst.shape:
            raise DataError("edge_src/edge_dst must be matching 1-D arrays")
        m = self.num_edges
        if m and (self.edge_src.min() < 0 or self.edge_src.max() >= num_nodes or
                  self.edge_dst.min() < 0 or self.edge_dst.max() >= num_nodes):
            raise DataError("edge endpoint out of range")

        self.node_features = _as_matrix(node_features, self.num_nodes, "node_features")
        self.edge_features = _as_matrix(edge_features, m, "edge_features")

        if node_labels is None:
            self.node_labels = np.full(self.num_nodes, UNLABELED, dtype=np.int64)
        else:
            self.node_labels = np.ascontiguousarray(node_labels, dtype=np.int64)
            if self.node_labels.shape != (self.num_nodes,):
                raise DataError("node_labels has wrong length")
            bad = ~np.isin(self.node_labels, (UNLABELED, LICIT, ILLICIT))
            if bad.any():
                raise DataError("node label must be 0, 1 or -1 (unlabeled)")

        if split_mask is None:
            self.split_mask = np.full(self.num_nodes, SPLIT_NONE, dtype=np.int64)
        else:
            self.split_mask = np.ascontiguousarray(split_mask, dtype=np.int64)
            if self.split_mask.shape != (self.num_nodes,):
                raise DataError("split_mask has wrong length")
            bad = ~np.isin(self.split_mask,
                           (SPLIT_NONE, SPLIT_TRAIN, SPLIT_VAL, SPLIT_TEST))
            if bad.any():
                raise DataError("unknown split mask value")
            if (self.node_labels[self.split_mask != SPLIT_NONE] == UNLABELED).any():
                raise DataError("split mask assigned to an unlabeled node")

        # edges sorted by endpoint with stable order -> ascending edge id per node
        self.in_ids = np.argsort(self.edge_dst, kind="stable").astype(np.int64)
        self.out_ids = np.argsort(self.edge_src, kind="stable").astype(np.int64)
        self.in_indptr = _indptr(self.edge_dst, self.num_nodes)
        self.out_indptr = _indptr(self.edge_src, self.num_nodes)

    @property
    def num_edges(self):
        return int(self.edge_src.shape[0])

    @property
    def in_degrees(self):
        return self.in_indptr[1:] - self.in_indptr[:-1]

    @property
    def out_degrees(self):
        return self.out_indptr[1:] - self.out_indptr[:-1]

    def in_edge_ids(self, v):
        self._check_node(v)
        return self.in_ids[self.in_indptr[v]:self.in_indptr[v + 1]]

    def out_edge_ids(self, v):
        self._check_node(v)
        return self.out_ids[self.out_indptr[v]:self.out_indptr[v + 1]]

    def in_neighbors(self, v):
        """All (payer, edge id) pairs for edges arriving at v, edge id ascending."""
        eids = self.in_edge_ids(v)
        return [(int(self.edge_src[e]), int(e)) for e in eids]

    def out_neighbors(self, v):
        """All (payee, edge id) pairs for edges leaving v, edge id ascending."""
        eids = self.out_edge_ids(v)
        return [(int(self.edge_dst[e]), int(e)) for e in eids]

    def replace(self, **kwargs):
        """New graph sharing all arrays except the given keyword overrides."""
        base = dict(num_nodes=self.num_nodes, edge_src=self.edge_src,
                    edge_dst=self.edge_dst, node_features=self.node_features,
                    edge_features=self.edge_features, node_labels=self.node_labels,
                    split_mask=self.split_mask)
        base.update(kwargs)
        return TransactionGraph(**base)

    def _check_node(self, v):
        if not 0 <= v < self.num_nodes:
            raise DataError(f"node id {v} out of range [0, {self.num_nodes})")

    def __repr__(self):
        return (f"TransactionGraph(nodes={self.num_nodes}, edges={self.num_edges}, "
                f"d_node={self.node_features.shape[1]}, "
                f"d_edge={self.edge_features.shape[1]})")


def _as_matrix(values, rows, name):
    if values is None:
        return np.zeros((rows, 0), dtype=np.float64)
    out = np.ascontiguousarray(values, dtype=np.float64)
    if out.ndim != 2 or out.shape[0] != rows:
        raise DataError(f"{name} must be a matrix with {rows} rows")
    return out


def _indptr(targets, num_nodes):
    counts = np.bincount(targets, minlength=num_nodes)
    indptr = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr


def augment_structural_features(g):
    """Append [in_degree, out_degree] columns to the node features.

    Not idempotent: calling twice appends twice, the caller guards.
    """
    degs = np.stack([g.in_degrees, g.out_degrees], axis=1).astype(np.float64)
    feats = np.concatenate([g.node_features, degs], axis=1)
    return g.replace(node_features=feats)


def random_split(g, ratios=(0.6, 0.2, 0.2), seed=0):
    """Assign train/val/test masks to labeled nodes by seeded permutation.

    Train gets ceil(r0*n) nodes, val ceil(r1*n) of the remainder, test the
    rest. Unlabeled nodes keep SPLIT_NONE. Deterministic per seed.
    """
    if abs(sum(ratios) - 1.0) > 1e-12:
        raise DataError("split ratios must sum to 1")
    labeled = np.flatnonzero(g.node_labels != UNLABELED)
    n = labeled.size
    if n == 0:
        raise DataError("cannot split a graph with no labeled nodes")
    rng = np.random.default_rng(seed)
    perm = labeled[rng.permutation(n)]
    n_train = _ceil_count(ratios[0], n)
    n_val = min(_ceil_count(ratios[1], n), n - n_train)
    mask = np.full(g.num_nodes, SPLIT_NONE, dtype=np.int64)
    mask[perm[:n_train]] = SPLIT_TRAIN
    mask[perm[n_train:n_train + n_val]] = SPLIT_VAL
    mask[perm[n_train + n_val:]] = SPLIT_TEST
    return g.replace(split_mask=mask)


def _ceil_count(ratio, n):
    return int(math.ceil(ratio * n - 1e-9))
