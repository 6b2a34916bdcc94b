"""Compare the numba and numpy variants of the two hot kernels.

Usage:  python3 benchmarks/kernel_bench.py [--edges N] [--hidden H] [--repeat R]

Times scatter_add_rows (message aggregation) and line_pairs (line-graph
enumeration) on a random graph sized like a training workload, and prints
both implementations side by side. Run with LINEMVGNN_DISABLE_NUMBA unset;
if numba is unavailable only the numpy column is shown.
"""

import argparse
import time

import numpy as np

from linemvgnn import kernels
from linemvgnn.graph import TransactionGraph


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _fmt(seconds):
    return f"{seconds * 1e3:9.2f} ms"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--edges", type=int, default=200_000)
    ap.add_argument("--nodes", type=int, default=50_000)
    ap.add_argument("--hidden", type=int, default=32)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    src = rng.integers(0, args.nodes, size=args.edges)
    dst = rng.integers(0, args.nodes, size=args.edges)
    g = TransactionGraph(args.nodes, src, dst)
    msgs = rng.normal(size=(args.edges, args.hidden))

    print(f"graph: {args.nodes} nodes, {args.edges} edges, "
          f"hidden={args.hidden}, best of {args.repeat}")
    print(f"numba available: {kernels.HAS_NUMBA}")

    rows = []

    def scatter_np():
        kernels.scatter_add_rows_numpy(msgs, g.edge_dst, args.nodes)

    t_np = _time(scatter_np, args.repeat)
    if kernels.HAS_NUMBA:
        def scatter_nb():
            kernels.scatter_add_rows_numba(msgs, g.edge_dst, args.nodes)

        scatter_nb()  # JIT warm-up outside the timed region
        t_nb = _time(scatter_nb, args.repeat)
        rows.append(("scatter_add_rows", t_np, t_nb))
    else:
        rows.append(("scatter_add_rows", t_np, None))

    def pairs_np():
        kernels.line_pairs_numpy(g.in_indptr, g.in_ids, g.out_indptr,
                                 g.out_ids, g.edge_src, g.edge_dst, True)

    t_np = _time(pairs_np, args.repeat)
    if kernels.HAS_NUMBA:
        def pairs_nb():
            kernels.line_pairs_numba(g.in_indptr, g.in_ids, g.out_indptr,
                                     g.out_ids, g.edge_src, g.edge_dst, True)

        pairs_nb()
        t_nb = _time(pairs_nb, args.repeat)
        rows.append(("line_pairs", t_np, t_nb))
    else:
        rows.append(("line_pairs", t_np, None))

    header = f"{'kernel':<18}{'numpy':>12}{'numba':>12}{'speedup':>9}"
    print()
    print(header)
    print("-" * len(header))
    for name, t_numpy, t_numba in rows:
        if t_numba is None:
            print(f"{name:<18}{_fmt(t_numpy):>12}{'-':>12}{'-':>9}")
        else:
            print(f"{name:<18}{_fmt(t_numpy):>12}{_fmt(t_numba):>12}"
                  f"{t_numpy / t_numba:>8.1f}x")


if __name__ == "__main__":
    main()
