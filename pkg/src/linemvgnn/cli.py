"""Command-line pipeline: ingest, transform, inject, train, evaluate, check.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure. Every
failure prints one machine-parsable ``error: <kind>: <message>`` line on
stderr. All outputs land under ``--out``: ``report.json`` always (carrying
the complete effective configuration so the run can be replayed), plus
command-specific files — dataset bundles, ``metrics.csv``,
``checkpoint.json``, and ``curves.svg`` with ``--plot``.
"""

import argparse
import csv
import json
import os
import sys
from dataclasses import asdict, replace

import numpy as np

from . import autodiff as ad
from .dataio import (DatasetBundle, Schema, chronological_split, ingest_csv,
                     json_default, load_bundle, load_checkpoint,
                     read_config_file, save_bundle, save_checkpoint)
from .errors import DataError, NumericError
from .graph import (SPLIT_TEST, SPLIT_TRAIN, SPLIT_VAL, TransactionGraph,
                    augment_structural_features, random_split)
from .linegraph import build_line_graph
from .model import (ModelConfig, ModelParameters, classify,
                    line_mvgnn_forward_explicit, line_mvgnn_forward_refined,
                    model_forward)
from .synthgen import InjectionConfig, inject, random_background, synthetic_pool
from .train import TrainingConfig, evaluate, grid_search, train_once

SPLIT_BY_NAME = {"train": SPLIT_TRAIN, "val": SPLIT_VAL, "test": SPLIT_TEST}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _oneline(exc):
    return " ".join(str(exc).split())


# ------------------------------------------------------------ config plumbing

def _resolve(flag_value, cfg, key, default):
    if flag_value is not None:
        return flag_value
    return cfg.get(key, default)


def _as_tuple(value):
    return value if isinstance(value, tuple) else (value,)


def _field_default(cls, name):
    return cls.__dataclass_fields__[name].default


def _model_config(args, cfg, d_node, d_edge):
    kwargs = {"d_node": d_node, "d_edge": d_edge}
    for key in ("hidden_dim", "depth", "combine", "use_line_graph_view",
                "use_two_way", "non_backtracking", "refined_mode"):
        kwargs[key] = _resolve(getattr(args, key), cfg, key,
                               _field_default(ModelConfig, key))
    try:
        return ModelConfig(**kwargs)
    except (ValueError, TypeError) as exc:
        raise DataError(f"bad model config: {exc}") from None


def _training_config(args, cfg, grids=False):
    kwargs = {"seed": args.seed}
    for key, flag in (("max_epochs", args.epochs),
                      ("patience", args.patience),
                      ("eval_every", args.eval_every),
                      ("class_weighting", args.class_weighting)):
        kwargs[key] = _resolve(flag, cfg, key, _field_default(TrainingConfig, key))
    if grids:
        kwargs["lr_grid"] = _as_tuple(cfg.get("lr_grid", (0.1, 0.01, 0.001)))
        tau_grid = cfg.get("tau_grid", ())
        kwargs["tau_grid"] = _as_tuple(tau_grid) if tau_grid != () else ()
    try:
        return TrainingConfig(**kwargs)
    except (ValueError, TypeError, DataError) as exc:
        raise DataError(f"bad training config: {exc}") from None


def _parse_number_list(text, kind, what):
    try:
        return tuple(kind(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise _UsageError(f"{what} must be comma-separated numbers") from None


# ----------------------------------------------------------------- reporting

def _report(args, **fields_):
    payload = {"command": args.command, "seed": args.seed, **fields_}
    with open(os.path.join(args.out, "report.json"), "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True, default=json_default)
    return payload


def _write_metrics(out_dir, records):
    with open(os.path.join(out_dir, "metrics.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "lr", "train_loss", "val_loss", "val_f1"])
        for r in records:
            writer.writerow([
                r.epoch, repr(float(r.lr)), repr(float(r.train_loss)),
                "" if r.val_loss is None else repr(float(r.val_loss)),
                "" if r.val_f1 is None else repr(float(r.val_f1))])


def _write_curves(out_dir, records):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    ax.plot([r.epoch for r in records], [r.train_loss for r in records],
            label="train loss")
    evals = [r for r in records if r.val_loss is not None]
    if evals:
        ax.plot([r.epoch for r in evals], [r.val_loss for r in evals],
                label="val loss")
        twin = ax.twinx()
        twin.plot([r.epoch for r in evals], [r.val_f1 for r in evals],
                  color="tab:green", linestyle="--", label="val illicit F1")
        twin.set_ylabel("val illicit F1")
        twin.set_ylim(0.0, 1.05)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "curves.svg"), format="svg")
    plt.close(fig)


def _bundle_summary(bundle):
    return [{"num_nodes": g.num_nodes, "num_edges": g.num_edges}
            for g in bundle.graphs]


# ------------------------------------------------------------------ commands

def cmd_ingest(args, cfg):
    nodes = args.nodes or []
    if nodes and len(nodes) != len(args.edges):
        raise _UsageError("--nodes count must match --edges count")
    if args.timestamp and len(args.timestamp) != len(args.edges):
        raise _UsageError("--timestamp count must match --edges count")
    nodes = nodes or [None] * len(args.edges)
    parts = [ingest_csv(e, n) for e, n in zip(args.edges, nodes)]
    schema = parts[0].schema
    for part in parts[1:]:
        if part.schema != schema:
            raise DataError("all ingested files must share one schema")
    bundle = DatasetBundle(
        [b.graphs[0] for b in parts], schema,
        {"source_files": [f for b in parts
                          for f in b.provenance["source_files"]],
         "id_maps": [b.provenance["id_map"] for b in parts]},
        timestamps=args.timestamp)
    save_bundle(bundle, args.out)
    _report(args, graphs=_bundle_summary(bundle), schema=asdict(schema),
            source_files=bundle.provenance["source_files"])
    print(f"ingested {len(bundle.graphs)} graph(s) into {args.out}")


def cmd_augment_snf(args, cfg):
    bundle = load_bundle(args.data)
    graphs = [augment_structural_features(g) for g in bundle.graphs]
    schema = Schema(bundle.schema.node_columns + ("in_degree", "out_degree"),
                    bundle.schema.edge_columns)
    provenance = dict(bundle.provenance)
    provenance.setdefault("transforms", []).append("augment_structural_features")
    out = DatasetBundle(graphs, schema, provenance, bundle.timestamps)
    save_bundle(out, args.out)
    _report(args, graphs=_bundle_summary(out), schema=asdict(schema),
            data=args.data)
    print(f"appended degree features; bundle written to {args.out}")


def cmd_split(args, cfg):
    bundle = load_bundle(args.data)
    ratios = _parse_number_list(args.ratios, float, "--ratios")
    if len(ratios) != 3:
        raise _UsageError("--ratios needs exactly three values")
    if args.mode == "chronological":
        out = chronological_split(bundle, ratios)
    else:
        graphs = [random_split(g, ratios, seed=args.seed + i)
                  for i, g in enumerate(bundle.graphs)]
        provenance = dict(bundle.provenance)
        provenance["split"] = {"kind": "random", "ratios": list(ratios),
                               "seed": args.seed}
        out = DatasetBundle(graphs, bundle.schema, provenance,
                            bundle.timestamps)
    save_bundle(out, args.out)
    counts = {name: int(sum((g.split_mask == s).sum() for g in out.graphs))
              for name, s in SPLIT_BY_NAME.items()}
    _report(args, mode=args.mode, ratios=list(ratios), node_counts=counts,
            data=args.data)
    print(f"split sizes: {counts}")


def cmd_linegraph(args, cfg):
    bundle = load_bundle(args.data)
    nb = not args.backtracking
    entries = []
    for g in bundle.graphs:
        lg = build_line_graph(g, non_backtracking=nb)
        degree_product = int((g.in_degrees * g.out_degrees).sum())
        mutual = _mutual_pair_count(g)
        expected = degree_product - (mutual if nb else 0)
        entries.append({
            "line_nodes": lg.num_line_nodes,
            "line_edges": lg.num_line_edges,
            "sum_indeg_outdeg": degree_product,
            "mutual_pairs": mutual,
            "identity_holds": bool(lg.num_line_nodes == g.num_edges
                                   and lg.num_line_edges == expected),
        })
    _report(args, what=args.what, non_backtracking=nb, graphs=entries,
            data=args.data)
    for i, entry in enumerate(entries):
        print(f"graph {i}: {entry['line_nodes']} line nodes, "
              f"{entry['line_edges']} line edges, identity "
              f"{'holds' if entry['identity_holds'] else 'VIOLATED'}")


def _mutual_pair_count(g):
    """Ordered pairs (p, q) with dst(p)=src(q) and src(p)=dst(q)."""
    n = g.num_nodes
    keys = np.sort(g.edge_src * n + g.edge_dst)
    rev = g.edge_dst * n + g.edge_src
    lo = np.searchsorted(keys, rev, side="left")
    hi = np.searchsorted(keys, rev, side="right")
    return int((hi - lo).sum())


def cmd_inject(args, cfg):
    if args.data:
        bundle = load_bundle(args.data)
        pool = np.vstack([g.edge_features for g in bundle.graphs])
        pool_info = {"source": args.data, "rows": pool.shape[0]}
    else:
        pool_rows = args.pool_rows or 4 * args.background_nodes
        pool = synthetic_pool(pool_rows, seed=args.seed,
                              extra_cols=args.pool_extra_cols)
        edge_columns = ("timestamp", "amount") + tuple(
            f"cat{i}" for i in range(args.pool_extra_cols))
        bundle = DatasetBundle(
            [random_background(args.background_nodes, args.avg_out_degree,
                               pool, args.seed, structural_features=False)],
            Schema((), edge_columns),
            {"source_files": [], "background": {
                "num_nodes": args.background_nodes,
                "avg_out_degree": args.avg_out_degree, "seed": args.seed}})
        pool_info = {"source": "synthetic", "rows": pool.shape[0],
                     "seed": args.seed}

    base = {"target_illicit_fraction": _resolve(
        args.fraction, cfg, "target_illicit_fraction", 1.0 / 3.0)}
    for key in ("pattern_weights", "path_cycle_sizes", "clique_sizes",
                "multipartite_layers"):
        if key in cfg:
            base[key] = _as_tuple(cfg[key])
    base["attach_edges"] = _resolve(args.attach_edges, cfg, "attach_edges", 1)

    graphs, summaries = [], []
    for i, g in enumerate(bundle.graphs):
        icfg = InjectionConfig(pool, seed=args.seed + i, **base)
        injected, patterns = inject(g, icfg)
        if args.snf:
            injected = augment_structural_features(injected)
        graphs.append(injected)
        kinds = {}
        for p in patterns:
            kinds[p.kind] = kinds.get(p.kind, 0) + 1
        summaries.append({
            "patterns": kinds,
            "illicit_fraction": float((injected.node_labels == 1).mean()),
            "num_nodes": injected.num_nodes,
            "num_edges": injected.num_edges,
        })
    node_columns = bundle.schema.node_columns
    if args.snf:
        node_columns = node_columns + ("in_degree", "out_degree")
    provenance = dict(bundle.provenance)
    provenance["injection"] = {"pool": pool_info, "seed": args.seed,
                               "snf": bool(args.snf), **base}
    out = DatasetBundle(graphs, Schema(node_columns, bundle.schema.edge_columns),
                        provenance, bundle.timestamps)
    save_bundle(out, args.out)
    _report(args, graphs=summaries, injection=provenance["injection"],
            data=args.data)
    for i, s in enumerate(summaries):
        print(f"graph {i}: illicit fraction {s['illicit_fraction']:.4f}, "
              f"patterns {s['patterns']}")


def _load_training_data(args):
    bundle = load_bundle(args.data)
    g0 = bundle.graphs[0]
    return bundle, g0.node_features.shape[1], g0.edge_features.shape[1]


def cmd_train(args, cfg):
    bundle, d_node, d_edge = _load_training_data(args)
    mc = _model_config(args, cfg, d_node, d_edge)
    tc = _training_config(args, cfg)
    lr = _resolve(args.lr, cfg, "lr", 0.001)
    tau = _resolve(args.tau, cfg, "tau", None)
    params, run = train_once(bundle.graphs, mc, tc, lr, tau=tau)
    save_checkpoint(os.path.join(args.out, "checkpoint.json"), params, mc,
                    meta={"seed": args.seed, "lr": lr, "tau": tau})
    _write_metrics(args.out, run.records)
    if args.plot:
        _write_curves(args.out, run.records)
    _report(args, model_config=asdict(mc), training_config=asdict(tc),
            lr=lr, tau=tau, data=args.data, run=run.to_dict())
    test = run.test_metrics or {}
    print(f"best epoch {run.best_epoch}, val loss {run.best_val_loss:.4f}, "
          f"test illicit F1 {test.get('illicit_f1', float('nan')):.4f}")


def cmd_gridsearch(args, cfg):
    bundle, d_node, d_edge = _load_training_data(args)
    mc = _model_config(args, cfg, d_node, d_edge)
    tc = _training_config(args, cfg, grids=True)
    if args.lr_grid:
        tc = replace(tc, lr_grid=_parse_number_list(args.lr_grid, float,
                                                    "--lr-grid"))
    if args.tau_grid:
        tc = replace(tc, tau_grid=_parse_number_list(args.tau_grid, int,
                                                     "--tau-grid"))
    result = grid_search(bundle.graphs, mc, tc, jobs=args.jobs)
    save_checkpoint(os.path.join(args.out, "checkpoint.json"),
                    result.best_params, mc,
                    meta={"seed": args.seed, "lr": result.best.lr,
                          "tau": result.best.tau})
    _write_metrics(args.out, result.best.records)
    if args.plot:
        _write_curves(args.out, result.best.records)
    _report(args, model_config=asdict(mc), training_config=asdict(tc),
            jobs=args.jobs, data=args.data, grid=result.to_dict())
    print(f"{len(result.runs)} cells; best lr {result.best.lr}, "
          f"tau {result.best.tau}, val F1 {result.best.best_val_f1:.4f}")


def cmd_eval(args, cfg):
    params, mc, meta = load_checkpoint(args.checkpoint)
    bundle = load_bundle(args.data)
    tau = _resolve(args.tau, cfg, "tau", meta.get("tau"))
    metrics = evaluate(bundle.graphs, params, mc,
                       split=SPLIT_BY_NAME[args.split], tau=tau,
                       seed=args.seed)
    _report(args, model_config=asdict(mc), split=args.split, tau=tau,
            data=args.data, checkpoint=args.checkpoint, metrics=metrics)
    print(f"{args.split} illicit F1 {metrics['illicit_f1']:.4f} "
          f"(P {metrics['illicit_precision']:.4f}, "
          f"R {metrics['illicit_recall']:.4f})")


def _random_graph(rng, max_nodes, max_edges, d_node=3, d_edge=2):
    n = int(rng.integers(2, max_nodes + 1))
    m = int(rng.integers(1, max_edges + 1))
    return TransactionGraph(
        n, rng.integers(0, n, m), rng.integers(0, n, m),
        node_features=rng.standard_normal((n, d_node)),
        edge_features=rng.standard_normal((m, d_edge)))


def cmd_gradcheck(args, cfg):
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for trial in range(args.trials):
        g = _random_graph(rng, max_nodes=max(3, args.edges // 3),
                          max_edges=args.edges)
        labels = rng.integers(0, 2, g.num_nodes)
        mc = ModelConfig(d_node=3, d_edge=2, hidden_dim=4, depth=2,
                         combine="cat" if trial % 2 == 0 else "add",
                         refined_mode=trial % 2 == 1)
        params = ModelParameters(mc, seed=args.seed + trial)
        h0, e0 = ad.Tensor(g.node_features), ad.Tensor(g.edge_features)
        lg = None if mc.refined_mode else build_line_graph(g)

        def build():
            if mc.refined_mode:
                z = line_mvgnn_forward_refined(g, h0, e0, params, mc)
            else:
                z = line_mvgnn_forward_explicit(g, lg, h0, e0, params, mc)
            return ad.softmax_cross_entropy(classify(z, params), labels)

        worst = max(worst, ad.gradient_check(
            build, [h0, e0] + params.parameters(), h=args.h))
    _report(args, worst_rel_err=worst, tol=args.tol, trials=args.trials,
            edges=args.edges, h=args.h)
    print(f"gradcheck worst relative error {worst:.3g} over "
          f"{args.trials} trial(s)")
    if worst > args.tol:
        raise NumericError(f"gradient check failed: {worst:.3g} > {args.tol}")


def cmd_equivcheck(args, cfg):
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for trial in range(args.trials):
        g = _random_graph(rng, max_nodes=60, max_edges=args.edges)
        mc = ModelConfig(d_node=3, d_edge=2, hidden_dim=6, depth=2,
                         combine="cat" if trial % 2 == 0 else "add",
                         non_backtracking=trial % 4 < 2)
        params = ModelParameters(mc, seed=args.seed + trial)
        z_explicit = model_forward(g, params, mc).data
        z_refined = model_forward(g, params, replace(mc, refined_mode=True)).data
        worst = max(worst, float(np.abs(z_explicit - z_refined).max()))
    _report(args, max_abs_diff=worst, tol=args.tol, trials=args.trials,
            edges=args.edges)
    print(f"equivcheck max |explicit - refined| = {worst:.3g} over "
          f"{args.trials} trial(s)")
    if worst > args.tol:
        raise NumericError(
            f"explicit and refined forwards disagree: {worst:.3g} > {args.tol}")


# -------------------------------------------------------------------- parser

def _add_bool_pair(parser, name, dest):
    parser.add_argument(f"--{name}", dest=dest, action="store_const",
                        const=True, default=None)
    parser.add_argument(f"--no-{name}", dest=dest, action="store_const",
                        const=False)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="global RNG seed (default 0)")
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--out", default=None,
                        help="output directory (default ./out)")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--hidden-dim", dest="hidden_dim", type=int)
    model.add_argument("--depth", type=int)
    model.add_argument("--combine", choices=["add", "cat"])
    _add_bool_pair(model, "line-graph", "use_line_graph_view")
    _add_bool_pair(model, "two-way", "use_two_way")
    _add_bool_pair(model, "non-backtracking", "non_backtracking")
    _add_bool_pair(model, "refined", "refined_mode")

    training = argparse.ArgumentParser(add_help=False)
    training.add_argument("--epochs", type=int)
    training.add_argument("--patience", type=int)
    training.add_argument("--eval-every", dest="eval_every", type=int)
    training.add_argument("--class-weighting", dest="class_weighting",
                          choices=["none", "inv_sqrt"])
    training.add_argument("--tau", type=int)
    training.add_argument("--plot", action="store_true",
                          help="also write curves.svg")

    parser = _Parser(prog="linemvgnn",
                     description="Illicit-account detection pipeline on "
                                 "directed transaction graphs.")
    sub = parser.add_subparsers(dest="command", metavar="command",
                                parser_class=_Parser)

    p = sub.add_parser("ingest", parents=[common],
                       help="read edge/node CSV files into a dataset bundle")
    p.add_argument("--edges", action="append", required=True,
                   help="edge CSV (src,dst,features); repeat per graph")
    p.add_argument("--nodes", action="append",
                   help="node CSV (id,label,features); repeat per graph")
    p.add_argument("--timestamp", action="append", type=float,
                   help="chronological key per graph; repeat per graph")

    p = sub.add_parser("augment-snf", parents=[common],
                       help="append in/out degree node feature columns")
    p.add_argument("--data", required=True)

    p = sub.add_parser("split", parents=[common],
                       help="assign train/val/test masks")
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=["random", "chronological"],
                   default="random")
    p.add_argument("--ratios", default="0.6,0.2,0.2")

    p = sub.add_parser("linegraph", parents=[common],
                       help="line-graph statistics")
    p.add_argument("what", choices=["stats"])
    p.add_argument("--data", required=True)
    p.add_argument("--backtracking", action="store_true",
                   help="keep reverse-pair successors")

    p = sub.add_parser("inject", parents=[common],
                       help="embed laundering patterns into a background")
    p.add_argument("--data", help="background bundle; omit to synthesize")
    p.add_argument("--background-nodes", dest="background_nodes", type=int,
                   default=1000)
    p.add_argument("--avg-out-degree", dest="avg_out_degree", type=float,
                   default=2.0)
    p.add_argument("--pool-rows", dest="pool_rows", type=int)
    p.add_argument("--pool-extra-cols", dest="pool_extra_cols", type=int,
                   default=1)
    p.add_argument("--fraction", type=float,
                   help="target illicit node fraction (default 1/3)")
    p.add_argument("--attach-edges", dest="attach_edges", type=int,
                   choices=[0, 1, 2])
    p.add_argument("--no-snf", dest="snf", action="store_false",
                   help="skip degree-feature augmentation after injection")

    p = sub.add_parser("train", parents=[common, model, training],
                       help="train one model on a split bundle")
    p.add_argument("--data", required=True)
    p.add_argument("--lr", type=float)

    p = sub.add_parser("gridsearch", parents=[common, model, training],
                       help="train over an lr (x tau) grid and pick the best")
    p.add_argument("--data", required=True)
    p.add_argument("--lr-grid", dest="lr_grid")
    p.add_argument("--tau-grid", dest="tau_grid")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("eval", parents=[common],
                       help="evaluate a checkpoint on one split")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=sorted(SPLIT_BY_NAME), default="test")
    p.add_argument("--tau", type=int)

    p = sub.add_parser("gradcheck", parents=[common],
                       help="finite-difference check of model gradients")
    p.add_argument("--edges", type=int, default=24)
    p.add_argument("--trials", type=int, default=2)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)

    p = sub.add_parser("equivcheck", parents=[common],
                       help="explicit vs refined forward agreement")
    p.add_argument("--edges", type=int, default=200)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--tol", type=float, default=1e-9)

    return parser


HANDLERS = {
    "ingest": cmd_ingest,
    "augment-snf": cmd_augment_snf,
    "split": cmd_split,
    "linegraph": cmd_linegraph,
    "inject": cmd_inject,
    "train": cmd_train,
    "gridsearch": cmd_gridsearch,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "equivcheck": cmd_equivcheck,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise _UsageError("a subcommand is required")
        cfg = read_config_file(args.config) if args.config else {}
        if args.seed is None:
            args.seed = int(cfg.get("seed", 0))
        args.out = args.out or "out"
        os.makedirs(args.out, exist_ok=True)
        HANDLERS[args.command](args, cfg)
        return 0
    except _UsageError as exc:
        print(f"error: usage: {_oneline(exc)}", file=sys.stderr)
        print(parser.format_usage().rstrip(), file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: data: {_oneline(exc)}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: data: {_oneline(exc)}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"error: numeric: {_oneline(exc)}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
