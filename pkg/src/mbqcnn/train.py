"""MSE loss, finite-difference gradients, the randomized-rate descent loop and
the average-gradient-magnitude study."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import models as M

BINARY = "binary"
THREE_CLASS = "three_class"


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class Dataset:
    """Encoded inputs (one row per sample) with real labels."""

    inputs: np.ndarray
    labels: np.ndarray
    task: str = BINARY

    def __post_init__(self):
        x = np.asarray(self.inputs)
        y = np.asarray(self.labels, dtype=float).reshape(-1)
        if x.ndim != 2 or x.shape[0] != y.size:
            raise ValueError("inputs must be (n_samples, dim) matching the label count")
        if self.task not in (BINARY, THREE_CLASS):
            raise ValueError(f"unknown task {self.task!r}")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.labels.size


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 100
    fd_step: float = 1e-3
    seed: int = 0
    lr_low_range: tuple = (0.25, 0.75)
    lr_high_range: tuple = (0.95, 1.45)
    repeats: int = 5
    init_range: tuple = (0.0, 2 * math.pi)

    def __post_init__(self):
        if self.fd_step <= 0:
            raise ValueError("fd_step must be positive")
        if self.epochs < 0 or self.repeats < 1:
            raise ValueError("epochs must be >= 0 and repeats >= 1")
        for lo, hi in (self.lr_low_range, self.lr_high_range, self.init_range):
            if not lo <= hi:
                raise ValueError("ranges must satisfy low <= high")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    test_accuracy: float
    gradient_norm: float
    learning_rate: float


@dataclass
class TrainingTrace:
    records: list
    final_params: np.ndarray

    def losses(self) -> np.ndarray:
        return np.array([r.train_loss for r in self.records])

    def accuracies(self) -> np.ndarray:
        return np.array([r.test_accuracy for r in self.records])

    def epochs_to_loss(self, target: float) -> Optional[int]:
        """First epoch (1-based) whose recorded training loss is <= target."""
        for r in self.records:
            if r.train_loss <= target:
                return r.epoch
        return None


@dataclass
class GradStudyResult:
    sample_counts: list
    log10_avg_grad: list


def _check_nonempty(data: Dataset) -> None:
    if len(data) == 0:
        raise ValueError("dataset is empty")


def mse_loss(model, data: Dataset) -> float:
    _check_nonempty(data)
    pred = model.predict_batch(data.inputs)
    return float(np.sum((data.labels - pred) ** 2) / (2 * len(data)))


def fd_gradient(model, data: Dataset, fd_step: float = 1e-3) -> np.ndarray:
    """Central differences, one parameter at a time."""
    if fd_step <= 0:
        raise ValueError("fd_step must be positive")
    theta = M.get_params(model)
    grad = np.empty_like(theta)
    for i in range(theta.size):
        up, down = theta.copy(), theta.copy()
        up[i] += fd_step
        down[i] -= fd_step
        grad[i] = (mse_loss(model.with_params(up), data) - mse_loss(model.with_params(down), data)) / (
            2 * fd_step
        )
    return grad


def classify(outputs: np.ndarray, task: str) -> np.ndarray:
    return M.haldane_classes(outputs) if task == BINARY else M.iris_classes(outputs)


def accuracy(model, data: Dataset, task: Optional[str] = None) -> float:
    _check_nonempty(data)
    pred = classify(model.predict_batch(data.inputs), task or data.task)
    return float(np.mean(pred == data.labels))


def train(model, train_set: Dataset, test_set: Optional[Dataset], cfg: TrainingConfig,
          callback: Optional[Callable] = None) -> TrainingTrace:
    """Randomized-rate finite-difference descent.

    Each epoch the rate is drawn from the low range when the gradient norm
    shrank since the previous epoch and from the high range otherwise (the
    first epoch uses the high range).  The recorded loss is the loss before
    the epoch's update.
    """
    rng = np.random.default_rng(cfg.seed)
    records = []
    prev_norm = None
    for epoch in range(1, cfg.epochs + 1):
        loss = mse_loss(model, train_set)
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite training loss {loss} at epoch {epoch}")
        acc = accuracy(model, test_set) if test_set is not None and len(test_set) else float("nan")
        g = fd_gradient(model, train_set, cfg.fd_step)
        norm = float(np.linalg.norm(g))
        lo, hi = cfg.lr_low_range if prev_norm is not None and norm < prev_norm else cfg.lr_high_range
        lr = float(rng.uniform(lo, hi))
        # with_params re-applies the CNN freeze
        model = model.with_params(M.get_params(model) - lr * g)
        records.append(EpochRecord(epoch, loss, acc, norm, lr))
        prev_norm = norm
        if callback is not None:
            callback(records[-1], model)
    return TrainingTrace(records, M.get_params(model))


def train_repeats(make_model: Callable[[np.random.Generator], object], train_set: Dataset,
                  test_set: Optional[Dataset], cfg: TrainingConfig) -> list:
    """``cfg.repeats`` runs with seeds ``seed + k``; the seed drives init and rates."""
    traces = []
    for k in range(cfg.repeats):
        seed = cfg.seed + k
        model = make_model(np.random.default_rng(seed))
        traces.append(train(model, train_set, test_set, _with_seed(cfg, seed)))
    return traces


def _with_seed(cfg: TrainingConfig, seed: int) -> TrainingConfig:
    return TrainingConfig(cfg.epochs, cfg.fd_step, seed, cfg.lr_low_range, cfg.lr_high_range,
                          cfg.repeats, cfg.init_range)


def aggregate(traces: Sequence[TrainingTrace]) -> np.ndarray:
    """Rows ``(epoch, mean_loss, var_loss, mean_acc, var_acc)``."""
    losses = np.array([t.losses() for t in traces])
    accs = np.array([t.accuracies() for t in traces])
    epochs = np.arange(1, losses.shape[1] + 1)
    return np.column_stack([epochs, losses.mean(0), losses.var(0), accs.mean(0), accs.var(0)])


def avg_gradient_magnitude(model_family: Callable[[np.ndarray], object], n_params: int,
                           data: Dataset, sample_counts: Sequence[int], seed: int = 0,
                           fd_step: float = 1e-3, low: float = 0.0,
                           high: float = 2 * math.pi) -> GradStudyResult:
    """log10 of the mean gradient norm over nested uniform parameter draws.

    ``model_family(v)`` builds a model from a parameter vector.  The first
    ``k`` draws for count ``k`` are a prefix of the draws for any larger count.
    A zero average is reported as ``-inf``.
    """
    counts = list(sample_counts)
    if any(b <= a for a, b in zip(counts, counts[1:])) or not counts or counts[0] < 1:
        raise ValueError("sample counts must be positive and strictly increasing")
    rng = np.random.default_rng(seed)
    draws = rng.uniform(low, high, size=(counts[-1], n_params))
    norms = np.array([np.linalg.norm(fd_gradient(model_family(v), data, fd_step)) for v in draws])
    running = np.cumsum(norms)
    out = []
    for k in counts:
        avg = running[k - 1] / k
        out.append(float(np.log10(avg)) if avg > 0 else float("-inf"))
    return GradStudyResult(counts, out)


# -- CSV output ----------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.12g}"


def _write_rows(path, header: Sequence[str], rows, comment: Optional[str]) -> None:
    with Path(path).open("w", newline="") as f:
        if comment:
            f.write(f"# {comment}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_trace(trace: TrainingTrace, path, comment: Optional[str] = None) -> None:
    rows = [(r.epoch, r.train_loss, r.test_accuracy, r.gradient_norm, r.learning_rate)
            for r in trace.records]
    _write_rows(path, ["epoch", "train_loss", "test_accuracy", "grad_norm", "lr"], rows, comment)


def write_aggregate(traces: Sequence[TrainingTrace], path, comment: Optional[str] = None) -> None:
    rows = [(int(r[0]), *r[1:]) for r in aggregate(traces)]
    _write_rows(path, ["epoch", "mean_loss", "var_loss", "mean_acc", "var_acc"], rows, comment)


def write_grad_study(result: GradStudyResult, path, comment: Optional[str] = None) -> None:
    rows = zip(result.sample_counts, result.log10_avg_grad)
    _write_rows(path, ["n_points", "log10_avg_grad"], rows, comment)
