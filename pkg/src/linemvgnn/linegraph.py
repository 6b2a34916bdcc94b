"""Line-graph view of a transaction graph: edges become first-class nodes.

A line node stands for one original edge. A line edge (p -> q) means edge
q's payer is edge p's payee: money arriving through p can continue through
q. Non-backtracking mode drops successors that exactly reverse their
predecessor's endpoints (the pair forming a 2-cycle); a self-loop is its own
reversal, so it only yields a line self-loop in backtracking mode.

Hub sampling: when ``tau`` is set, nodes whose in-degree exceeds tau keep
only a seeded uniform sample of tau in-edges as predecessors. Line nodes are
never dropped, only line edges through over-degree nodes.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DataError


@dataclass
class LineGraphView:
    """Derived graph over edge ids, with back-references to the base graph."""

    base_edge_of: np.ndarray      # line node id -> original edge id (identity)
    line_pred: np.ndarray         # line edge tails (predecessor transactions)
    line_succ: np.ndarray         # line edge heads (successor transactions)
    dummy_edge_feature_dim: int = 1
    non_backtracking: bool = True
    tau: int | None = None
    seed: int | None = None
    # per original edge: retained as a predecessor at its payee node
    retained_mask: np.ndarray = field(default=None, repr=False)

    @property
    def num_line_nodes(self):
        return int(self.base_edge_of.shape[0])

    @property
    def num_line_edges(self):
        return int(self.line_pred.shape[0])

    @property
    def line_edges(self):
        return list(zip(self.line_pred.tolist(), self.line_succ.tolist()))


def sample_predecessor_mask(g, tau, seed=0):
    """Boolean mask over edges: retained as predecessor at the payee node.

    Nodes with in-degree <= tau keep everything; others keep a uniform
    sample of tau in-edges, drawn without replacement, seeded.
    """
    if tau is None:
        return np.ones(g.num_edges, dtype=bool)
    if tau < 1:
        raise DataError("tau must be >= 1")
    mask = np.ones(g.num_edges, dtype=bool)
    rng = np.random.default_rng(seed)
    indeg = g.in_degrees
    for w in np.flatnonzero(indeg > tau):
        eids = g.in_edge_ids(w)
        keep = rng.choice(eids, size=tau, replace=False)
        mask[eids] = False
        mask[keep] = True
    return mask


def build_line_graph(g, non_backtracking=True, tau=None, seed=0):
    """Materialize the line-graph view of g.

    One line node per original edge; a line edge for every ordered pair of
    edges (p, q) with payee(p) == payer(q), minus 2-cycle pairs in
    non-backtracking mode, minus pairs whose predecessor was sampled out at
    a hub node when tau is set. Sampling is fixed per call (seeded).
    """
    retained = sample_predecessor_mask(g, tau, seed)
    in_ids, in_indptr = _filtered_in_csr(g, retained)
    pred, succ = kernels.line_pairs(
        in_indptr, in_ids, g.out_indptr, g.out_ids,
        g.edge_src, g.edge_dst, bool(non_backtracking))
    return LineGraphView(
        base_edge_of=np.arange(g.num_edges, dtype=np.int64),
        line_pred=pred, line_succ=succ,
        non_backtracking=bool(non_backtracking),
        tau=tau, seed=seed if tau is not None else None,
        retained_mask=retained)


def _filtered_in_csr(g, retained):
    if retained.all():
        return g.in_ids, g.in_indptr
    in_ids = g.in_ids[retained[g.in_ids]]
    counts = np.bincount(g.edge_dst[retained], minlength=g.num_nodes)
    indptr = np.zeros(g.num_nodes + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return in_ids, indptr


def edge_predecessors(g, e, non_backtracking=True):
    """Edge ids whose payee is e's payer (money arriving at e's payer).

    Non-backtracking drops predecessors that e would exactly reverse.
    Ascending edge id order.
    """
    _check_edge(g, e)
    preds = g.in_edge_ids(g.edge_src[e])
    if non_backtracking:
        preds = preds[g.edge_src[preds] != g.edge_dst[e]]
    return preds


def edge_successors(g, e, non_backtracking=True):
    """Edge ids whose payer is e's payee (money leaving e's payee)."""
    _check_edge(g, e)
    succs = g.out_edge_ids(g.edge_dst[e])
    if non_backtracking:
        succs = succs[g.edge_dst[succs] != g.edge_src[e]]
    return succs


def _check_edge(g, e):
    if not 0 <= e < g.num_edges:
        raise DataError(f"edge id {e} out of range [0, {g.num_edges})")
