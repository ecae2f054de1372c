"""Loss, metrics, the training loop and its instrumentation.

Besides loss/accuracy per epoch the loop records, for every adaptive
activation site, the current ``(a, b, c, d)`` and, for a few tracked weight
layers, the weight increment between successive epochs. The finite-difference
gradient oracle used by the test-suite and the ``gradcheck`` command also
lives here.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ArgumentError, DimensionError, NumericError, TrainingError
from .network import Model
from .optimizers import Optimizer, OptimizerConfig, lr_at_epoch
from .tensor import Rng

log = logging.getLogger(__name__)

DEFAULT_GRID = np.arange(-50, 51) / 10.0


def cross_entropy(logits, label: int):
    """Softmax cross-entropy of one sample. Returns ``(loss, dlogits)``."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1:
        raise DimensionError(f"expected a 1-d logit vector, got {logits.shape}")
    loss, grad = softmax_cross_entropy(logits[None, :], np.array([label]))
    return loss, grad[0]


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean loss over the batch and its gradient w.r.t. the logits."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    n, classes = logits.shape
    if labels.shape != (n,):
        raise DimensionError(f"{n} logit rows but labels of shape {labels.shape}")
    if n == 0:
        raise ArgumentError("empty batch")
    if np.any(labels < 0) or np.any(labels >= classes):
        raise ArgumentError(f"labels must lie in [0, {classes})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    expo = np.exp(shifted)
    total = expo.sum(axis=1, keepdims=True)
    logp = shifted - np.log(total)
    rows = np.arange(n)
    loss = -float(np.sum(logp[rows, labels])) / n
    grad = expo / total
    grad[rows, labels] -= 1.0
    return loss, grad / n


def accuracy(preds, truth) -> float:
    preds, truth = np.asarray(preds), np.asarray(truth)
    if preds.shape != truth.shape:
        raise DimensionError(f"{preds.shape} predictions vs {truth.shape} labels")
    if preds.size == 0:
        raise ArgumentError("accuracy of an empty set")
    return int(np.count_nonzero(preds == truth)) / preds.size


def evaluate(model: Model, images, labels) -> float:
    return accuracy(model.predict(images).argmax(axis=1), labels)


@dataclass
class WeightDelta:
    mean_abs: float
    tracked: tuple


@dataclass
class RunRecord:
    epoch: int
    train_loss: float
    test_accuracy: float
    lr: float
    adaptive: dict = field(default_factory=dict)  # site name -> tuple of learnable values
    deltas: dict = field(default_factory=dict)  # weight layer name -> WeightDelta


@dataclass
class TrainConfig:
    epochs: int
    optimizer: OptimizerConfig
    batch_size: int = 64
    freeze_adaptive: bool = False
    tracked_layers: list | None = None
    k_tracked: int = 4


def weight_increment(prev: dict, curr: dict, k: int = 4) -> dict:
    """``curr - prev`` per entry: mean |dw| and the first ``k`` raw increments in flat order."""
    out = {}
    for name, before in prev.items():
        after = curr[name]
        if np.shape(before) != np.shape(after):
            raise DimensionError(f"{name}: snapshots {np.shape(before)} vs {np.shape(after)}")
        dw = np.asarray(after, dtype=np.float64) - np.asarray(before, dtype=np.float64)
        out[name] = WeightDelta(float(np.mean(np.abs(dw))), tuple(float(v) for v in dw.ravel()[:k]))
    return out


def default_tracked_layers(model: Model) -> list[str]:
    """First, middle and last weight-bearing layers."""
    names = [layer.name for layer in model.weight_layers()]
    picks = [names[0], names[len(names) // 2], names[-1]]
    return list(dict.fromkeys(picks))


def convergence_area(curve) -> float:
    """Trapezoidal area under a loss-vs-epoch curve."""
    pts = [(float(e), float(v)) for e, v in curve]
    if len(pts) < 2:
        raise ArgumentError("convergence area needs at least two points")
    area = 0.0
    for (e0, l0), (e1, l1) in zip(pts, pts[1:]):
        if not e1 > e0:
            raise ArgumentError("epochs must be strictly increasing")
        if not (np.isfinite(l0) and np.isfinite(l1)):
            raise ArgumentError("loss values must be finite")
        area += 0.5 * (l0 + l1) * (e1 - e0)
    return area


def activation_shape_trace(model: Model, z_grid=None) -> dict:
    """Each adaptive site's current function sampled on ``z_grid`` (default -5..5 step 0.1)."""
    grid = DEFAULT_GRID if z_grid is None else np.asarray(z_grid, dtype=np.float64)
    return {site.name: site.evaluate(grid) for site in model.adaptive_sites()}


def train(model: Model, data, cfg: TrainConfig, rng: Rng, test_data=None,
          on_record: Callable[[RunRecord], None] | None = None) -> list[RunRecord]:
    """Mini-batch training; one :class:`RunRecord` per epoch.

    Batches come from a fresh seeded permutation each epoch and the last
    partial batch is kept. ``on_record`` sees every record as soon as it
    exists, so callers can flush partial results if a later epoch diverges.
    """
    if cfg.epochs > cfg.optimizer.total_epochs:
        raise ArgumentError(f"{cfg.epochs} epochs but the schedule covers {cfg.optimizer.total_epochs}")
    if cfg.batch_size <= 0:
        raise ArgumentError("batch size must be positive")
    images, labels = data.images, data.labels
    if images.shape[1:] != model.input_shape:
        raise DimensionError(f"data {images.shape[1:]} does not fit model input {model.input_shape}")
    if test_data is not None and len(test_data.labels):
        eval_images, eval_labels = test_data.images, test_data.labels
    else:
        eval_images, eval_labels = images, labels

    opt = Optimizer(cfg.optimizer)
    trainable = {name: arr for name, arr, role in model.named_parameters()
                 if not (cfg.freeze_adaptive and role == "adaptive")}
    tracked = cfg.tracked_layers or default_tracked_layers(model)
    weight_of = {layer.name: layer.params["w"] for layer in model.weight_layers()}
    for name in tracked:
        if name not in weight_of:
            raise ArgumentError(f"tracked layer {name!r} has no weights; choose from {sorted(weight_of)}")
    prev = {name: weight_of[name].copy() for name in tracked}

    n = len(labels)
    records = []
    for epoch in range(cfg.epochs):
        lr = lr_at_epoch(cfg.optimizer, epoch)
        order = rng.permutation(n)
        loss_sum = 0.0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            try:
                logits = model.forward(images[idx])
            except NumericError as exc:
                raise TrainingError(f"diverged at epoch {epoch}, batch {b}: {exc}", epoch, b) from exc
            loss, dlogits = softmax_cross_entropy(logits, labels[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}", epoch, b)
            grads = model.backward(dlogits)
            opt.step(trainable, grads, epoch)
            loss_sum += loss * len(idx)
        curr = {name: weight_of[name].copy() for name in tracked}
        rec = RunRecord(
            epoch=epoch,
            train_loss=loss_sum / n,
            test_accuracy=evaluate(model, eval_images, eval_labels),
            lr=lr,
            adaptive={site.name: tuple(float(v) for v in site.params["p"]) for site in model.adaptive_sites()},
            deltas=weight_increment(prev, curr, cfg.k_tracked),
        )
        prev = curr
        records.append(rec)
        if on_record is not None:
            on_record(rec)
        log.debug("epoch %d loss %.6f acc %.4f", epoch, rec.train_loss, rec.test_accuracy)
    return records


def finite_diff_grad(loss_fn: Callable[[], float] | Callable, params, h: float = 1e-4):
    """Central-difference gradient of ``loss_fn`` w.r.t. each entry of ``params``.

    ``params`` is a float array or a ``{name: array}`` mapping; entries are
    perturbed in place and restored. ``loss_fn`` is called with no arguments
    for the mapping form and with the array for the array form.
    """
    if not h > 0:
        raise ArgumentError("step must be positive")
    if isinstance(params, dict):
        return {name: _fd_array(loss_fn, arr, h, call_with=None) for name, arr in params.items()}
    arr = np.array(params, dtype=np.float64)
    return _fd_array(loss_fn, arr, h, call_with=arr)


def _fd_array(loss_fn, arr, h, call_with):
    grad = np.zeros(arr.shape)
    flat = arr.reshape(-1)
    call = (lambda: loss_fn(call_with)) if call_with is not None else loss_fn
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = float(call())
        flat[i] = orig - h
        down = float(call())
        flat[i] = orig
        if not (np.isfinite(up) and np.isfinite(down)):
            raise NumericError(f"non-finite loss while differencing entry {i}")
        grad.reshape(-1)[i] = (up - down) / (2 * h)
    return grad


def relative_error(analytic, numeric, floor: float = 1e-8) -> np.ndarray:
    """``|a - n| / max(|a|, |n|, floor)`` elementwise; the floor keeps 0/0 defined."""
    a = np.asarray(analytic, dtype=np.float64)
    nmr = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - nmr) / np.maximum(np.maximum(np.abs(a), np.abs(nmr)), floor)


def min_kink_gap(model: Model, batch) -> float:
    """Smallest distance to a non-differentiable point over every kinked site for ``batch``."""
    model.forward(batch)
    gap = np.inf
    for layer in model.all_layers():
        if hasattr(layer, "kink_gap"):
            x = layer.cached_input()
            if x is not None:
                gap = min(gap, float(np.min(layer.kink_gap(x))))
    model.predict(batch[:1])  # drops the caches
    return gap


def check_model_gradients(model: Model, images, labels, h: float = 1e-4, floor: float = 1e-8) -> dict:
    """Max relative error between backprop and central differences, per parameter array."""
    def loss():
        return softmax_cross_entropy(model.forward(images), labels)[0]

    logits = model.forward(images)
    _, dlogits = softmax_cross_entropy(logits, labels)
    analytic = {k: v.copy() for k, v in model.backward(dlogits).items()}
    numeric = finite_diff_grad(loss, model.parameters(), h)
    model._pending = None
    return {name: float(np.max(relative_error(analytic[name], numeric[name], floor)))
            for name in analytic}
