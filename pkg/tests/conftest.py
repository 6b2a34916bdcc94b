import numpy as np

from linemvgnn.graph import TransactionGraph


def random_graph(rng, num_nodes=None, num_edges=None, node_dim=3, edge_dim=2,
                 labeled=False):
    """Random multigraph (self-loops and parallel edges allowed)."""
    n = int(rng.integers(2, 12)) if num_nodes is None else num_nodes
    m = int(rng.integers(1, 4 * n)) if num_edges is None else num_edges
    src = rng.integers(0, n, size=m).astype(np.int64)
    dst = rng.integers(0, n, size=m).astype(np.int64)
    x = rng.normal(size=(n, node_dim))
    ef = rng.normal(size=(m, edge_dim))
    labels = None
    if labeled:
        labels = rng.integers(0, 2, size=n).astype(np.int64)
    return TransactionGraph(n, src, dst, node_features=x, edge_features=ef,
                            node_labels=labels)
