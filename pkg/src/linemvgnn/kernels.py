"""Hot numeric kernels: numba-jitted inner loops with a pure-numpy fallback.

The two loops that dominate runtime are row scatter-add (message aggregation)
and line-graph pair enumeration. Both exist in a numba and a numpy variant;
the active one is picked at import time. Set ``LINEMVGNN_DISABLE_NUMBA=1``
to force the numpy path (it is also used automatically when numba is not
importable). ``benchmarks/kernel_bench.py`` compares the two.
"""

import os

import numpy as np

_FLAG = os.environ.get("LINEMVGNN_DISABLE_NUMBA", "").strip().lower()
NUMBA_DISABLED = _FLAG in {"1", "true", "yes", "on"}

try:
    if NUMBA_DISABLED:
        raise ImportError("numba disabled via LINEMVGNN_DISABLE_NUMBA")
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False


def scatter_add_rows_numpy(src, index, out_rows):
    """Sum rows of ``src`` into ``out[index[i]]``; repeated targets accumulate."""
    out = np.zeros((out_rows, src.shape[1]), dtype=np.float64)
    np.add.at(out, index, src)
    return out


def line_pairs_numpy(in_indptr, in_ids, out_indptr, out_ids, edge_src, edge_dst,
                     non_backtracking):
    """Enumerate (predecessor edge, successor edge) pairs sharing a node.

    For each node w, every in-edge listed in the CSR feeds every out-edge;
    in non-backtracking mode a successor that exactly reverses its
    predecessor's endpoints is skipped. Pair order: nodes ascending, then
    predecessor, then successor (matching the numba variant).
    """
    preds = []
    succs = []
    n = in_indptr.shape[0] - 1
    for w in range(n):
        pi = in_ids[in_indptr[w]:in_indptr[w + 1]]
        qo = out_ids[out_indptr[w]:out_indptr[w + 1]]
        if pi.size == 0 or qo.size == 0:
            continue
        p = np.repeat(pi, qo.size)
        q = np.tile(qo, pi.size)
        if non_backtracking:
            keep = edge_src[p] != edge_dst[q]
            p = p[keep]
            q = q[keep]
        preds.append(p)
        succs.append(q)
    if not preds:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty.copy()
    return np.concatenate(preds), np.concatenate(succs)


if HAS_NUMBA:

    @njit(cache=True)
    def _scatter_add_rows_nb(src, index, out):
        for i in range(src.shape[0]):
            r = index[i]
            for j in range(src.shape[1]):
                out[r, j] += src[i, j]

    def scatter_add_rows_numba(src, index, out_rows):
        out = np.zeros((out_rows, src.shape[1]), dtype=np.float64)
        _scatter_add_rows_nb(np.ascontiguousarray(src), index, out)
        return out

    @njit(cache=True)
    def _line_pairs_nb(in_indptr, in_ids, out_indptr, out_ids, edge_src, edge_dst,
                       non_backtracking):
        n = in_indptr.shape[0] - 1
        total = 0
        for w in range(n):
            for i in range(in_indptr[w], in_indptr[w + 1]):
                p = in_ids[i]
                for j in range(out_indptr[w], out_indptr[w + 1]):
                    q = out_ids[j]
                    if non_backtracking and edge_src[p] == edge_dst[q]:
                        continue
                    total += 1
        preds = np.empty(total, dtype=np.int64)
        succs = np.empty(total, dtype=np.int64)
        k = 0
        for w in range(n):
            for i in range(in_indptr[w], in_indptr[w + 1]):
                p = in_ids[i]
                for j in range(out_indptr[w], out_indptr[w + 1]):
                    q = out_ids[j]
                    if non_backtracking and edge_src[p] == edge_dst[q]:
                        continue
                    preds[k] = p
                    succs[k] = q
                    k += 1
        return preds, succs

    def line_pairs_numba(in_indptr, in_ids, out_indptr, out_ids, edge_src, edge_dst,
                         non_backtracking):
        return _line_pairs_nb(in_indptr, in_ids, out_indptr, out_ids,
                              edge_src, edge_dst, non_backtracking)

    scatter_add_rows = scatter_add_rows_numba
    line_pairs = line_pairs_numba
else:
    scatter_add_rows_numba = None
    line_pairs_numba = None
    scatter_add_rows = scatter_add_rows_numpy
    line_pairs = line_pairs_numpy

USING_NUMBA = HAS_NUMBA
