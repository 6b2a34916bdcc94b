"""Full-batch transductive training with grid search.

One epoch = one Adam step per training graph (chronological order for
multi-graph bundles). Loss is softmax cross-entropy over training nodes,
optionally weighted per class by 1/sqrt(class count). The learning rate
follows a half-cosine schedule with warm restarts; early stopping watches
validation loss; grid cells are selected by validation illicit-F1.
"""

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .autodiff import (adam_step, cosine_warm_restart_lr, no_grad, row_gather,
                       softmax_cross_entropy)
from .errors import DataError, NumericError
from .graph import ILLICIT, SPLIT_TEST, SPLIT_TRAIN, SPLIT_VAL
from .model import ModelParameters, classify, model_forward

LR_SCHEDULE_NOTE = ("half-cosine from base lr to 0; warm restarts at epochs "
                    "10, 20, 40, 80, ... (cycle length doubles after 20)")
GRID_SELECTION_METRIC = "val_illicit_f1"


@dataclass
class TrainingConfig:
    max_epochs: int = 200
    patience: int = 25
    lr_grid: tuple = (0.1, 0.01, 0.001)
    tau_grid: tuple = ()
    seed: int = 0
    class_weighting: str = "inv_sqrt"   # or "none"
    eval_every: int = 1

    def __post_init__(self):
        if not self.lr_grid:
            raise ValueError("lr_grid must be nonempty")
        if not 0 < self.patience < self.max_epochs:
            raise ValueError("need 0 < patience < max_epochs")
        if self.class_weighting not in ("none", "inv_sqrt"):
            raise ValueError("class_weighting is 'none' or 'inv_sqrt'")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")


@dataclass
class EpochRecord:
    epoch: int            # 1-indexed
    train_loss: float
    lr: float
    val_loss: float = None
    val_f1: float = None


@dataclass
class RunReport:
    lr: float
    tau: object
    seed: int
    records: list = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = math.inf
    best_val_f1: float = 0.0
    test_metrics: dict = None
    wall_clock_sec: float = 0.0
    lr_schedule: str = LR_SCHEDULE_NOTE
    grid_selection_metric: str = GRID_SELECTION_METRIC

    def to_dict(self):
        return {
            "lr": self.lr,
            "tau": self.tau,
            "seed": self.seed,
            "best_epoch": self.best_epoch,
            "best_val_loss": self.best_val_loss,
            "best_val_f1": self.best_val_f1,
            "test_metrics": self.test_metrics,
            "wall_clock_sec": self.wall_clock_sec,
            "lr_schedule": self.lr_schedule,
            "grid_selection_metric": self.grid_selection_metric,
            "epochs": [vars(r) for r in self.records],
        }


class EarlyStopping:
    """Minimum tracker: stop after ``patience`` updates without a new best."""

    def __init__(self, patience):
        self.patience = patience
        self.best_value = math.inf
        self.best_index = 0         # 1-indexed update count of the minimum
        self.updates = 0
        self._since_best = 0

    def update(self, value):
        """Record one evaluation; returns True when it is a new minimum."""
        self.updates += 1
        if value < self.best_value:
            self.best_value = value
            self.best_index = self.updates
            self._since_best = 0
            return True
        self._since_best += 1
        return False

    @property
    def should_stop(self):
        return self._since_best >= self.patience


def class_weights(labels):
    """Per-class weights 1/sqrt(count) over the given (training) labels."""
    labels = np.asarray(labels)
    counts = np.bincount(labels, minlength=2)
    if (counts == 0).any():
        raise DataError("both classes must appear among training nodes")
    return 1.0 / np.sqrt(counts.astype(np.float64))


def _as_graph_list(g):
    return list(g) if isinstance(g, (list, tuple)) else [g]


def _split_ids(graph, split):
    return np.flatnonzero(graph.split_mask == split)


def _pooled_loss(graphs, params, config, split, weights, tau, seed):
    """Class-weighted NLL pooled over every graph's nodes in ``split``.

    Returns (loss tensors per graph, pooled scalar value, preds, labels).
    Pooling divides the summed weighted NLL by the summed weights so the
    result is identical to evaluating one concatenated graph.
    """
    per_graph = []
    total_num = 0.0
    total_den = 0.0
    preds, labels = [], []
    with no_grad():
        for graph in graphs:
            ids = _split_ids(graph, split)
            if ids.size == 0:
                continue
            z = model_forward(graph, params, config, tau=tau, seed=seed)
            logits = row_gather(classify(z, params), ids)
            y = graph.node_labels[ids]
            loss = softmax_cross_entropy(logits, y, weights)
            w_sum = float(weights[y].sum())
            per_graph.append((loss, w_sum))
            total_num += loss.item() * w_sum
            total_den += w_sum
            preds.append(np.argmax(logits.data, axis=1))
            labels.append(y)
    if not per_graph:
        return [], math.nan, None, None
    pooled = total_num / total_den
    return per_graph, pooled, np.concatenate(preds), np.concatenate(labels)


def _confusion_metrics(preds, labels):
    tp = int(((preds == ILLICIT) & (labels == ILLICIT)).sum())
    fp = int(((preds == ILLICIT) & (labels != ILLICIT)).sum())
    fn = int(((preds != ILLICIT) & (labels == ILLICIT)).sum())
    tn = int(((preds != ILLICIT) & (labels != ILLICIT)).sum())
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall else 0.0)
    return {"tp": tp, "fp": fp, "fn": fn, "tn": tn,
            "illicit_precision": precision, "illicit_recall": recall,
            "illicit_f1": f1}


def evaluate(g, params, model_config, split=SPLIT_TEST, tau=None, seed=0):
    """Confusion counts and illicit-class P/R/F1 over one split's nodes."""
    graphs = _as_graph_list(g)
    preds, labels = [], []
    with no_grad():
        for graph in graphs:
            ids = _split_ids(graph, split)
            if ids.size == 0:
                continue
            z = model_forward(graph, params, model_config, tau=tau, seed=seed)
            logits = classify(z, params).data[ids]
            preds.append(np.argmax(logits, axis=1))
            labels.append(graph.node_labels[ids])
    if not preds:
        raise DataError("no nodes in the requested split")
    return _confusion_metrics(np.concatenate(preds), np.concatenate(labels))


def train_once(g, model_config, training_config, lr, tau=None):
    """Train one model; returns (best parameters, RunReport).

    Non-finite losses abort with NumericError rather than training on.
    """
    started = time.perf_counter()
    graphs = _as_graph_list(g)
    tc = training_config
    train_labels = np.concatenate(
        [graph.node_labels[_split_ids(graph, SPLIT_TRAIN)]
         for graph in graphs])
    if train_labels.size == 0:
        raise DataError("no training nodes in any graph")
    if tc.class_weighting == "inv_sqrt":
        weights = class_weights(train_labels)
    else:
        weights = np.ones(2)
    has_val = any(_split_ids(graph, SPLIT_VAL).size for graph in graphs)
    if not has_val:
        raise DataError("no validation nodes in any graph")

    params = ModelParameters(model_config, seed=tc.seed)
    report = RunReport(lr=lr, tau=tau, seed=tc.seed)
    best_state = None
    stopper = EarlyStopping(tc.patience)

    for epoch in range(1, tc.max_epochs + 1):
        epoch_lr = cosine_warm_restart_lr(epoch - 1, lr)
        step_losses = []
        for graph in graphs:
            ids = _split_ids(graph, SPLIT_TRAIN)
            if ids.size == 0:
                continue
            z = model_forward(graph, params, model_config, tau=tau,
                              seed=tc.seed)
            logits = row_gather(classify(z, params), ids)
            loss = softmax_cross_entropy(logits, graph.node_labels[ids],
                                         weights)
            value = loss.item()
            if not math.isfinite(value):
                raise NumericError(
                    f"non-finite training loss at epoch {epoch} (lr={lr})")
            loss.backward()
            adam_step(params.parameters(), epoch_lr)
            step_losses.append(value)
        record = EpochRecord(epoch=epoch,
                             train_loss=float(np.mean(step_losses)),
                             lr=epoch_lr)
        if epoch % tc.eval_every == 0 or epoch == tc.max_epochs:
            _, val_loss, val_preds, val_labels = _pooled_loss(
                graphs, params, model_config, SPLIT_VAL, weights, tau,
                tc.seed)
            if not math.isfinite(val_loss):
                raise NumericError(
                    f"non-finite validation loss at epoch {epoch} (lr={lr})")
            record.val_loss = val_loss
            record.val_f1 = _confusion_metrics(val_preds, val_labels)[
                "illicit_f1"]
            if stopper.update(val_loss):
                report.best_val_loss = val_loss
                report.best_val_f1 = record.val_f1
                report.best_epoch = epoch
                best_state = [p.data.copy() for p in params.parameters()]
        report.records.append(record)
        if stopper.should_stop:
            break

    for p, saved in zip(params.parameters(), best_state):
        p.data[:] = saved
    if any(_split_ids(graph, SPLIT_TEST).size for graph in graphs):
        report.test_metrics = evaluate(graphs, params, model_config,
                                       SPLIT_TEST, tau=tau, seed=tc.seed)
    report.wall_clock_sec = time.perf_counter() - started
    return params, report


# ----------------------------------------------------------------- grid search

@dataclass
class GridResult:
    best: RunReport
    best_params: object
    runs: list                      # one dict per cell, in grid order

    def to_dict(self):
        return {"selection_metric": GRID_SELECTION_METRIC,
                "best": self.best.to_dict() if self.best else None,
                "runs": self.runs}


def _grid_cells(model_config, training_config):
    taus = (tuple(training_config.tau_grid)
            if training_config.tau_grid and model_config.use_line_graph_view
            else (None,))
    return [(lr, tau) for lr in training_config.lr_grid for tau in taus]


def _run_cell(args):
    g, model_config, training_config, lr, tau = args
    return train_once(g, model_config, training_config, lr, tau=tau)


def grid_search(g, model_config, training_config, jobs=1):
    """Train every (lr, tau) cell; failures are recorded, not fatal.

    Selection: highest best-epoch validation illicit-F1, ties broken by
    lower validation loss, then lower lr, then lower tau.
    """
    cells = _grid_cells(model_config, training_config)
    argses = [(g, model_config, training_config, lr, tau)
              for lr, tau in cells]
    outcomes = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_cell, a) for a in argses]
            for fut in futures:
                try:
                    outcomes.append(fut.result())
                except NumericError as exc:
                    outcomes.append(exc)
    else:
        for args in argses:
            try:
                outcomes.append(_run_cell(args))
            except NumericError as exc:
                outcomes.append(exc)

    runs, candidates = [], []
    for (lr, tau), outcome in zip(cells, outcomes):
        if isinstance(outcome, NumericError):
            runs.append({"lr": lr, "tau": tau, "status": "failed",
                         "error": str(outcome)})
            continue
        params, report = outcome
        runs.append({"lr": lr, "tau": tau, "status": "ok",
                     "best_epoch": report.best_epoch,
                     "val_loss": report.best_val_loss,
                     "val_f1": report.best_val_f1,
                     "test_metrics": report.test_metrics})
        candidates.append((params, report))
    if not candidates:
        raise NumericError("every grid cell failed")

    def rank(item):
        _, r = item
        tau_key = r.tau if r.tau is not None else -1
        return (-r.best_val_f1, r.best_val_loss, r.lr, tau_key)

    best_params, best_report = min(candidates, key=rank)
    return GridResult(best=best_report, best_params=best_params, runs=runs)
