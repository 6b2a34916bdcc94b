"""Two-way message-passing layers and their line-graph composition.

A layer aggregates ReLU messages separately over in- and out-neighbors
using ONE shared message map, combines the two sums (learned convex-style
scalar, or concat + linear), and applies a ReLU vertex update. The full
model interleaves the same layer on the line graph (edges as nodes, with a
constant dummy feature on line edges) so transaction features flow along
payment chains, in two forms that must agree numerically:

* explicit — materializes the line-graph pair list and reuses the layer;
* refined  — node-grouped scatter/gather directly on the base graph with
  reverse-pair corrections, never building the pair list.

Node embeddings from every depth are blended by learned scalars whose
coefficients sum to one; a final affine map produces two logits.
"""

from dataclasses import dataclass

import numpy as np

from .autodiff import (Parameter, Tensor, concat_cols, glorot, relu,
                       row_gather, row_scatter_add, scale)
from .errors import DataError
from .linegraph import build_line_graph, sample_predecessor_mask

COMBINE_MODES = ("add", "cat")


@dataclass
class ModelConfig:
    d_node: int
    d_edge: int
    hidden_dim: int = 32
    depth: int = 2
    combine: str = "cat"
    use_line_graph_view: bool = True
    use_two_way: bool = True
    non_backtracking: bool = True
    refined_mode: bool = False

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1")
        if self.combine not in COMBINE_MODES:
            raise ValueError(f"combine must be one of {COMBINE_MODES}")
        if self.d_node < 0 or self.d_edge < 0:
            raise ValueError("feature dims must be >= 0")


class Linear:
    """Affine map x @ weight + bias (bias optional, zero-initialized)."""

    def __init__(self, rng, fan_in, fan_out, with_bias=True):
        self.weight = Parameter(glorot(rng, fan_in, fan_out))
        self.bias = Parameter(np.zeros((1, fan_out))) if with_bias else None

    def __call__(self, x):
        out = x @ self.weight
        if self.bias is not None:
            out = out + self.bias
        return out

    def named(self, prefix):
        pairs = [(f"{prefix}.weight", self.weight)]
        if self.bias is not None:
            pairs.append((f"{prefix}.bias", self.bias))
        return pairs


class LayerParams:
    """One layer's maps: shared message, vertex update, and combiner."""

    def __init__(self, rng, in_dim, edge_dim, hidden_dim, combine, two_way):
        self.message = Linear(rng, in_dim + edge_dim, hidden_dim)
        self.update = Linear(rng, in_dim + hidden_dim, hidden_dim)
        self.combine_map = None
        self.alpha = None
        if two_way:
            if combine == "cat":
                self.combine_map = Linear(rng, 2 * hidden_dim, hidden_dim)
            else:
                self.alpha = Parameter([[0.5]])

    def named(self, prefix):
        pairs = self.message.named(f"{prefix}.message")
        pairs += self.update.named(f"{prefix}.update")
        if self.combine_map is not None:
            pairs += self.combine_map.named(f"{prefix}.combine")
        if self.alpha is not None:
            pairs.append((f"{prefix}.alpha", self.alpha))
        return pairs


class ModelParameters:
    """All learnable state, allocated to match a ModelConfig."""

    def __init__(self, config, seed=0):
        rng = np.random.default_rng(seed)
        c = config
        edge_act_dim = c.hidden_dim if c.use_line_graph_view else c.d_edge
        self.node_layers = []
        self.edge_layers = []
        self.edge_input_proj = None
        for l in range(c.depth):
            node_in = c.d_node if l == 0 else c.hidden_dim
            self.node_layers.append(LayerParams(
                rng, node_in, edge_act_dim, c.hidden_dim, c.combine,
                c.use_two_way))
            if c.use_line_graph_view:
                edge_in = c.d_edge if l == 0 else c.hidden_dim
                self.edge_layers.append(LayerParams(
                    rng, edge_in, 1, c.hidden_dim, c.combine, c.use_two_way))
        if c.use_line_graph_view and c.d_edge != c.hidden_dim:
            self.edge_input_proj = Linear(rng, c.d_edge, c.hidden_dim,
                                          with_bias=False)
        self.betas = [Parameter([[1.0 / c.depth]]) for _ in range(c.depth - 1)]
        self.classifier = Linear(rng, c.hidden_dim, 2)

    def named_parameters(self):
        pairs = []
        for i, lp in enumerate(self.node_layers):
            pairs += lp.named(f"node{i}")
        for i, lp in enumerate(self.edge_layers):
            pairs += lp.named(f"edge{i}")
        if self.edge_input_proj is not None:
            pairs += self.edge_input_proj.named("edge_proj")
        for i, b in enumerate(self.betas):
            pairs.append((f"beta{i}", b))
        pairs += self.classifier.named("classifier")
        return pairs

    def parameters(self):
        return [p for _, p in self.named_parameters()]


# -------------------------------------------------------------------- layers

def _layer_core(edge_src, edge_dst, num_nodes, h, e, lp, combine, two_way):
    """One message-passing layer on raw index arrays (graph or line graph).

    In-messages for node v gather the activation at each in-edge's source;
    out-messages gather at each out-edge's destination; both go through the
    SAME message map before summing. Nodes without edges get zero sums.
    """
    def half(neighbor_idx, target_idx):
        inputs = concat_cols(row_gather(h, neighbor_idx), e)
        msgs = relu(lp.message(inputs))
        return row_scatter_add(msgs, target_idx, num_nodes)

    m_in = half(edge_src, edge_dst)
    if two_way:
        m_out = half(edge_dst, edge_src)
        if combine == "cat":
            combined = lp.combine_map(concat_cols(m_in, m_out))
        else:
            one = Tensor([[1.0]])
            combined = scale(m_in, lp.alpha) + scale(m_out, one - lp.alpha)
    else:
        combined = m_in
    return relu(lp.update(concat_cols(h, combined)))


def mvgnn_layer(g, h, e, lp, combine, two_way=True):
    """One layer on a transaction graph; ``h``/``e`` are activation tensors."""
    if h.data.shape[0] != g.num_nodes:
        raise DataError(f"h has {h.data.shape[0]} rows for {g.num_nodes} nodes")
    if e.data.shape[0] != g.num_edges:
        raise DataError(f"e has {e.data.shape[0]} rows for {g.num_edges} edges")
    return _layer_core(g.edge_src, g.edge_dst, g.num_nodes, h, e, lp,
                       combine, two_way)


def aggregate_layers(h_list, betas):
    """Blend per-depth node embeddings; coefficients sum to 1 by construction.

    z = beta_1 h(1) + ... + beta_{L-1} h(L-1) + (1 - sum(beta)) h(L).
    """
    if len(betas) != len(h_list) - 1:
        raise ValueError(f"{len(h_list)} layers need {len(h_list) - 1} betas")
    if not betas:
        return h_list[0]
    last_coeff = Tensor([[1.0]])
    z = None
    for h, b in zip(h_list[:-1], betas):
        term = scale(h, b)
        z = term if z is None else z + term
        last_coeff = last_coeff - b
    return z + scale(h_list[-1], last_coeff)


def classify(z, params):
    """Affine map to two logits; softmax lives in the loss."""
    return params.classifier(z)


# --------------------------------------------------------------- full models

def line_mvgnn_forward_explicit(g, lg, h0, e0, params, config):
    """Depth-L forward using a materialized line-graph view."""
    if config.use_line_graph_view:
        if lg is None or lg.num_line_nodes != g.num_edges:
            raise DataError("line-graph view does not match the graph")
        dummy = Tensor(np.ones((lg.num_line_edges, 1)))
    h, t = h0, e0
    per_layer = []
    for l in range(config.depth):
        if config.use_line_graph_view:
            delta = _layer_core(lg.line_pred, lg.line_succ, g.num_edges, t,
                                dummy, params.edge_layers[l], config.combine,
                                config.use_two_way)
            t = _residual_base(t, l, params) + delta
        h = mvgnn_layer(g, h, t, params.node_layers[l], config.combine,
                        config.use_two_way)
        per_layer.append(h)
    return aggregate_layers(per_layer, params.betas)


def line_mvgnn_forward_refined(g, h0, e0, params, config, tau=None, seed=0,
                               plan=None):
    """Same semantics as explicit mode without building the line graph.

    Per-edge messages are summed once per base node and redistributed by
    gather; the pairs a materialized line graph would have skipped
    (endpoint reversals under non-backtracking, predecessors dropped by
    tau-sampling) are removed with exact corrections.
    """
    if plan is None:
        plan = RefinedPlan.build(g, config, tau, seed)
    h, t = h0, e0
    per_layer = []
    for l in range(config.depth):
        if config.use_line_graph_view:
            delta = _edge_propagation_refined(g, t, params.edge_layers[l],
                                              config, plan)
            t = _residual_base(t, l, params) + delta
        h = mvgnn_layer(g, h, t, params.node_layers[l], config.combine,
                        config.use_two_way)
        per_layer.append(h)
    return aggregate_layers(per_layer, params.betas)


def model_forward(g, params, config, tau=None, seed=0):
    """Route a graph through the configured forward; returns embeddings z."""
    if g.node_features.shape[1] != config.d_node:
        raise DataError(f"graph has {g.node_features.shape[1]} node feature "
                        f"dims, model expects {config.d_node}")
    if g.edge_features.shape[1] != config.d_edge:
        raise DataError(f"graph has {g.edge_features.shape[1]} edge feature "
                        f"dims, model expects {config.d_edge}")
    h0 = Tensor(g.node_features)
    e0 = Tensor(g.edge_features)
    if config.refined_mode:
        return line_mvgnn_forward_refined(g, h0, e0, params, config,
                                          tau=tau, seed=seed)
    lg = None
    if config.use_line_graph_view:
        lg = build_line_graph(g, non_backtracking=config.non_backtracking,
                              tau=tau, seed=seed)
    return line_mvgnn_forward_explicit(g, lg, h0, e0, params, config)


def _residual_base(t, layer, params):
    if layer == 0 and params.edge_input_proj is not None:
        return params.edge_input_proj(t)
    return t


# ------------------------------------------------------------ refined detail

@dataclass
class RefinedPlan:
    """Static index structure for refined edge propagation on one graph."""

    retained: np.ndarray            # bool per edge: kept as a predecessor
    retained_ids: np.ndarray
    rev_e: np.ndarray               # (rev_e[i], rev_f[i]): edge and one of
    rev_f: np.ndarray               # its endpoint-reversed partners
    rev_e_kept: np.ndarray          # subset where the partner is retained
    rev_f_kept: np.ndarray

    @classmethod
    def build(cls, g, config, tau=None, seed=0):
        retained = sample_predecessor_mask(g, tau, seed=seed)
        if config.non_backtracking:
            rev_e, rev_f = _reverse_pairs(g)
        else:
            rev_e = rev_f = np.zeros(0, dtype=np.int64)
        kept = retained[rev_f]
        return cls(retained=retained,
                   retained_ids=np.flatnonzero(retained),
                   rev_e=rev_e, rev_f=rev_f,
                   rev_e_kept=rev_e[kept], rev_f_kept=rev_f[kept])


def _reverse_pairs(g):
    """All ordered pairs (e, f) whose endpoints are exact reversals."""
    n = g.num_nodes
    key = g.edge_src * n + g.edge_dst
    rev_key = g.edge_dst * n + g.edge_src
    order = np.argsort(key, kind="stable")
    sorted_key = key[order]
    lo = np.searchsorted(sorted_key, rev_key, side="left")
    hi = np.searchsorted(sorted_key, rev_key, side="right")
    counts = hi - lo
    e_list = np.repeat(np.arange(g.num_edges, dtype=np.int64), counts)
    f_list = np.concatenate(
        [order[a:b] for a, b in zip(lo, hi) if b > a]) if e_list.size else \
        np.zeros(0, dtype=np.int64)
    return e_list, f_list


def _subtract_pairs(m, msgs, e_list, f_list, num_edges):
    if e_list.size == 0:
        return m
    return m - row_scatter_add(row_gather(msgs, f_list), e_list, num_edges)


def _edge_propagation_refined(g, t, lp, config, plan):
    """One line-graph layer computed by node grouping on the base graph."""
    E = g.num_edges
    dummy = Tensor(np.ones((E, 1)))
    msgs = relu(lp.message(concat_cols(t, dummy)))

    # Predecessor side: sum retained messages at each base node, hand the
    # total to every edge leaving that node, then remove reversal partners.
    if plan.retained.all():
        sums_in = row_scatter_add(msgs, g.edge_dst, g.num_nodes)
    else:
        sums_in = row_scatter_add(row_gather(msgs, plan.retained_ids),
                                  g.edge_dst[plan.retained_ids], g.num_nodes)
    m_in = row_gather(sums_in, g.edge_src)
    m_in = _subtract_pairs(m_in, msgs, plan.rev_e_kept, plan.rev_f_kept, E)

    if config.use_two_way:
        # Successor side, mirrored; an edge dropped as a predecessor has no
        # outgoing line edges, so its successor sum is zeroed.
        sums_out = row_scatter_add(msgs, g.edge_src, g.num_nodes)
        m_out = row_gather(sums_out, g.edge_dst)
        m_out = _subtract_pairs(m_out, msgs, plan.rev_e, plan.rev_f, E)
        if not plan.retained.all():
            m_out = row_scatter_add(row_gather(m_out, plan.retained_ids),
                                    plan.retained_ids, E)
        if config.combine == "cat":
            combined = lp.combine_map(concat_cols(m_in, m_out))
        else:
            one = Tensor([[1.0]])
            combined = scale(m_in, lp.alpha) + scale(m_out, one - lp.alpha)
    else:
        combined = m_in
    return relu(lp.update(concat_cols(t, combined)))
