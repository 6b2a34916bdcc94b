"""CSV ingestion, dataset bundles on disk, checkpoints, and config files.

Formats are deliberately plain: CSV for graphs and per-epoch metrics, JSON
for manifests, reports, and checkpoints. All 64-bit reals go through JSON's
shortest round-trip decimal encoding, so save/load is bitwise faithful.
"""

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DataError
from .graph import (ILLICIT, LICIT, SPLIT_NONE, SPLIT_TEST, SPLIT_TRAIN,
                    SPLIT_VAL, UNLABELED, TransactionGraph)
from .model import ModelConfig, ModelParameters

BUNDLE_FORMAT_VERSION = 1
CHECKPOINT_FORMAT_VERSION = 1

_LABEL_TO_TEXT = {LICIT: "0", ILLICIT: "1", UNLABELED: ""}
_TEXT_TO_LABEL = {"0": LICIT, "1": ILLICIT, "": UNLABELED}


def json_default(obj):
    """json.dump fallback for numpy scalars and arrays."""
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


@dataclass
class Schema:
    """Column names for the node and edge feature matrices."""

    node_columns: tuple = ()
    edge_columns: tuple = ()

    def __post_init__(self):
        self.node_columns = tuple(self.node_columns)
        self.edge_columns = tuple(self.edge_columns)


@dataclass
class DatasetBundle:
    """One or more graphs sharing a schema, plus replay provenance.

    Multi-graph bundles model per-day transaction snapshots; `timestamps`
    (when present, one per graph) give their chronological order.
    """

    graphs: list
    schema: Schema
    provenance: dict = field(default_factory=dict)
    timestamps: list = None

    def __post_init__(self):
        if not self.graphs:
            raise DataError("bundle needs at least one graph")
        for g in self.graphs:
            if g.node_features.shape[1] != len(self.schema.node_columns):
                raise DataError("graph node feature width does not match schema")
            if g.edge_features.shape[1] != len(self.schema.edge_columns):
                raise DataError("graph edge feature width does not match schema")
        if self.timestamps is not None and len(self.timestamps) != len(self.graphs):
            raise DataError("need one timestamp per graph")


# ------------------------------------------------------------- CSV ingestion

def _parse_floats(cells, path, lineno):
    try:
        return [float(c) for c in cells]
    except ValueError:
        raise DataError(f"{path}:{lineno}: non-numeric feature value") from None


def ingest_csv(edge_file, node_file=None, schema=None):
    """Read one graph from edge (and optional node) CSV files.

    Edge header is `src,dst,<feature cols...>`; node header is
    `id,label,<feature cols...>` with label 0, 1, or empty. Node ids may be
    arbitrary strings; they are remapped to dense ints in first-appearance
    order over the edge rows, and the map lands in provenance["id_map"].
    Node files may only reference ids that appear in some edge. Nodes
    without a row keep empty label and zero features.
    """
    id_map = {}
    src, dst = [], []
    edge_rows = []
    with open(edge_file, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2 or header[:2] != ["src", "dst"]:
            raise DataError(f"{edge_file}:1: edge header must be src,dst,...")
        edge_columns = tuple(header[2:])
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{edge_file}:{lineno}: expected "
                                f"{len(header)} columns, got {len(row)}")
            for key in row[:2]:
                if key not in id_map:
                    id_map[key] = len(id_map)
            src.append(id_map[row[0]])
            dst.append(id_map[row[1]])
            edge_rows.append(_parse_floats(row[2:], edge_file, lineno))

    num_nodes = len(id_map)
    node_columns = ()
    labels = np.full(num_nodes, UNLABELED, dtype=np.int64)
    node_features = None
    if node_file is not None:
        with open(node_file, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or len(header) < 2 or header[:2] != ["id", "label"]:
                raise DataError(f"{node_file}:1: node header must be id,label,...")
            node_columns = tuple(header[2:])
            node_features = np.zeros((num_nodes, len(node_columns)))
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(header):
                    raise DataError(f"{node_file}:{lineno}: expected "
                                    f"{len(header)} columns, got {len(row)}")
                if row[0] not in id_map:
                    raise DataError(f"{node_file}:{lineno}: node id {row[0]!r} "
                                    "does not appear in any edge")
                if row[1] not in _TEXT_TO_LABEL:
                    raise DataError(f"{node_file}:{lineno}: label must be "
                                    "0, 1, or empty")
                v = id_map[row[0]]
                labels[v] = _TEXT_TO_LABEL[row[1]]
                node_features[v] = _parse_floats(row[2:], node_file, lineno)

    found = Schema(node_columns, edge_columns)
    if schema is not None and (tuple(schema.node_columns) != node_columns or
                               tuple(schema.edge_columns) != edge_columns):
        raise DataError("CSV columns do not match the expected schema")
    g = TransactionGraph(num_nodes, np.array(src, dtype=np.int64),
                         np.array(dst, dtype=np.int64),
                         node_features=node_features,
                         edge_features=np.array(edge_rows).reshape(
                             len(edge_rows), len(edge_columns)),
                         node_labels=labels)
    provenance = {"source_files": [str(edge_file)] +
                  ([str(node_file)] if node_file else []),
                  "id_map": dict(id_map)}
    return DatasetBundle([g], found, provenance)


# ------------------------------------------------------- bundle persistence

def _write_graph_csvs(g, schema, out_dir, stem):
    edges_name, nodes_name = f"{stem}.edges.csv", f"{stem}.nodes.csv"
    with open(os.path.join(out_dir, edges_name), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["src", "dst", *schema.edge_columns])
        for i in range(g.num_edges):
            writer.writerow([g.edge_src[i], g.edge_dst[i],
                             *[repr(float(x)) for x in g.edge_features[i]]])
    with open(os.path.join(out_dir, nodes_name), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "label", *schema.node_columns])
        for v in range(g.num_nodes):
            writer.writerow([v, _LABEL_TO_TEXT[g.node_labels[v]],
                             *[repr(float(x)) for x in g.node_features[v]]])
    return edges_name, nodes_name


def save_bundle(bundle, out_dir):
    """Write manifest.json, per-graph CSVs, and the node id map under out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for i, g in enumerate(bundle.graphs):
        edges_name, nodes_name = _write_graph_csvs(
            g, bundle.schema, out_dir, f"graph_{i:03d}")
        entries.append({
            "edges_csv": edges_name,
            "nodes_csv": nodes_name,
            "num_nodes": g.num_nodes,
            "split_mask": (g.split_mask.tolist()
                           if g.split_mask is not None else None),
        })
    manifest = {
        "format_version": BUNDLE_FORMAT_VERSION,
        "schema": asdict(bundle.schema),
        "provenance": bundle.provenance,
        "timestamps": bundle.timestamps,
        "graphs": entries,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, default=json_default)
    maps = bundle.provenance.get("id_maps")
    if maps is None:
        single = bundle.provenance.get("id_map")
        maps = ([single] if single is not None and len(bundle.graphs) == 1
                else [{str(v): v for v in range(g.num_nodes)}
                      for g in bundle.graphs])
    for i, id_map in enumerate(maps):
        name = "id_map.csv" if len(maps) == 1 else f"id_map_{i:03d}.csv"
        with open(os.path.join(out_dir, name), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["original", "dense"])
            for original, dense in id_map.items():
                writer.writerow([original, dense])


def load_bundle(in_dir):
    """Read a bundle saved by save_bundle."""
    manifest_path = os.path.join(in_dir, "manifest.json")
    try:
        with open(manifest_path) as fh:
            manifest = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"{in_dir} has no manifest.json") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{manifest_path}: invalid JSON ({exc})") from None
    if manifest.get("format_version") != BUNDLE_FORMAT_VERSION:
        raise DataError(f"bundle format version "
                        f"{manifest.get('format_version')!r} unsupported, "
                        f"expected {BUNDLE_FORMAT_VERSION}")
    schema = Schema(**manifest["schema"])
    graphs = []
    for entry in manifest["graphs"]:
        num_nodes = entry["num_nodes"]
        edges_path = os.path.join(in_dir, entry["edges_csv"])
        nodes_path = os.path.join(in_dir, entry["nodes_csv"])
        src, dst, rows = [], [], []
        with open(edges_path, newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            for row in reader:
                src.append(int(row[0]))
                dst.append(int(row[1]))
                rows.append([float(x) for x in row[2:]])
        labels = np.full(num_nodes, UNLABELED, dtype=np.int64)
        features = np.zeros((num_nodes, len(schema.node_columns)))
        with open(nodes_path, newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            for row in reader:
                v = int(row[0])
                labels[v] = _TEXT_TO_LABEL[row[1]]
                features[v] = [float(x) for x in row[2:]]
        split = entry.get("split_mask")
        graphs.append(TransactionGraph(
            num_nodes, np.array(src, dtype=np.int64),
            np.array(dst, dtype=np.int64),
            node_features=features,
            edge_features=np.array(rows).reshape(len(rows),
                                                 len(schema.edge_columns)),
            node_labels=labels,
            split_mask=None if split is None else np.array(split,
                                                           dtype=np.int64)))
    return DatasetBundle(graphs, schema, manifest.get("provenance", {}),
                         timestamps=manifest.get("timestamps"))


# ------------------------------------------------------ chronological split

def _round_half_up(x):
    return int(math.floor(x + 0.5))


def chronological_split(bundle, ratios=(0.6, 0.2, 0.2)):
    """Whole-graph train/val/test masks in time order.

    Graphs are ordered by bundle.timestamps when present (stably), else kept
    in given order. The earliest round(r0*n) graphs become training graphs,
    the next round(r1*n) validation, the rest test; every labeled node in a
    graph gets that graph's split. Needs at least one graph per part.
    """
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-12 or min(ratios) <= 0:
        raise DataError("ratios must be three positive numbers summing to 1")
    n = len(bundle.graphs)
    if n < 3:
        raise DataError(f"chronological split needs >= 3 graphs, got {n}")
    order = np.arange(n)
    if bundle.timestamps is not None:
        order = np.argsort(np.asarray(bundle.timestamps, dtype=np.float64),
                           kind="stable")
    n_train = min(_round_half_up(ratios[0] * n), n - 2)
    n_val = min(max(_round_half_up(ratios[1] * n), 1), n - n_train - 1)
    if n_train < 1:
        n_train = 1
    split_of = np.full(n, SPLIT_TEST, dtype=np.int64)
    split_of[order[:n_train]] = SPLIT_TRAIN
    split_of[order[n_train:n_train + n_val]] = SPLIT_VAL
    graphs = []
    for g, s in zip(bundle.graphs, split_of):
        mask = np.where(g.node_labels == UNLABELED, SPLIT_NONE, int(s))
        graphs.append(g.replace(split_mask=mask))
    provenance = dict(bundle.provenance)
    provenance["split"] = {"kind": "chronological", "ratios": list(ratios),
                           "graph_order": order.tolist(),
                           "counts": [int(n_train), int(n_val),
                                      int(n - n_train - n_val)]}
    return DatasetBundle(graphs, bundle.schema, provenance, bundle.timestamps)


# ------------------------------------------------------------- checkpoints

def save_checkpoint(path, params, config, meta=None):
    """Serialize every parameter tensor to JSON, bitwise-recoverable.

    JSON floats use shortest round-trip decimals, so load_checkpoint
    restores the exact 64-bit values.
    """
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "model_config": asdict(config),
        "meta": meta or {},
        "parameters": [
            {"name": name, "shape": list(p.data.shape),
             "values": p.data.reshape(-1).tolist()}
            for name, p in params.named_parameters()
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_checkpoint(path):
    """Rebuild (ModelParameters, ModelConfig, meta) from save_checkpoint output."""
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"checkpoint {path} not found") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise DataError(f"checkpoint format version {version!r} unsupported, "
                        f"expected {CHECKPOINT_FORMAT_VERSION}")
    try:
        config = ModelConfig(**payload["model_config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"checkpoint model_config invalid: {exc}") from None
    params = ModelParameters(config, seed=0)
    expected = dict(params.named_parameters())
    saved = {entry["name"]: entry for entry in payload["parameters"]}
    if set(saved) != set(expected):
        missing = sorted(set(expected) - set(saved))
        extra = sorted(set(saved) - set(expected))
        raise DataError(f"checkpoint parameters do not match the config "
                        f"(missing {missing}, unexpected {extra})")
    for name, p in expected.items():
        entry = saved[name]
        if tuple(entry["shape"]) != p.data.shape:
            raise DataError(f"checkpoint parameter {name} has shape "
                            f"{entry['shape']}, expected {list(p.data.shape)}")
        values = np.asarray(entry["values"], dtype=np.float64)
        if values.size != p.data.size:
            raise DataError(f"checkpoint parameter {name} has {values.size} "
                            f"values, expected {p.data.size}")
        p.data = values.reshape(p.data.shape)
    return params, config, payload.get("meta", {})


# ------------------------------------------------------------- config files

def parse_config_text(text, source="<config>"):
    """Parse flat `key = value` lines into a dict.

    Blank lines and `#` comments are skipped. Values become int, float, or
    bool when they look like one; comma-separated values become tuples.
    """
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{source}:{lineno}: expected key = value")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key:
            raise DataError(f"{source}:{lineno}: empty key")
        if "," in value:
            out[key] = tuple(_coerce(v.strip()) for v in value.split(",")
                             if v.strip())
        else:
            out[key] = _coerce(value)
    return out


def _coerce(token):
    lowered = token.lower()
    if lowered in ("true", "yes", "on"):
        return True
    if lowered in ("false", "no", "off"):
        return False
    for kind in (int, float):
        try:
            return kind(token)
        except ValueError:
            pass
    return token


def read_config_file(path):
    try:
        with open(path) as fh:
            return parse_config_text(fh.read(), source=str(path))
    except FileNotFoundError:
        raise DataError(f"config file {path} not found") from None
