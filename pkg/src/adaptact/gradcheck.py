"""Finite-difference suites comparing every analytic derivative with central differences."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import activations as act
from .activations import ActivationKind
from .network import PRESETS, ModelSpec, init
from .tensor import Rng
from .training import (check_model_gradients, cross_entropy, finite_diff_grad,
                       min_kink_gap, relative_error)

H = 1e-4
KINK_MARGIN = 1e-3
NETWORK_KINK_MARGIN = 1e-4

# small enough that a full central-difference sweep stays under ~1e3 parameters
SMALL_SHAPES = {
    "mlp-2": dict(input_shape=(1, 4, 1), widths=(6, 5)),
    "cnn-mini": dict(input_shape=(3, 8, 8), widths=(2, 3, 4), dense_hidden=5),
    "cnn-mini-res": dict(input_shape=(3, 8, 8), widths=(2, 3, 4), dense_hidden=5),
}


@dataclass
class CheckResult:
    label: str
    max_rel_error: float


def random_params(kind: ActivationKind, rng: Rng) -> np.ndarray:
    if kind.tag == "arelu":
        return rng.uniform((4,), -1.5, 1.5)
    if kind.tag == "prelu":
        return rng.uniform((1,), 0.05, 0.9)
    if kind.is_adaptive:
        a, b = rng.uniform((2,), 0.3, 2.0) * np.where(rng.uniform((2,)) < 0.5, -1.0, 1.0)
        c, d = rng.uniform((2,), -1.0, 1.0)
        return np.array([a, b, c, d])
    return np.zeros(0)


def _scalar_fd(fn, x, h=H):
    return (fn(x + h) - fn(x - h)) / (2 * h)


def check_activation_point(kind: ActivationKind, p, z: float) -> float:
    """Max relative error over dz and every learnable-parameter derivative at one point."""
    z = float(z)
    up = np.ones(1)
    zz = np.array([z])
    if kind.is_fixed:
        num = _scalar_fd(lambda t: float(act.fixed_forward(kind, np.array([t]))[0]), z)
        return float(relative_error(act.fixed_grad(kind, zz)[0], num))
    if kind.tag == "prelu":
        s = float(p[0])
        dz, ds = act.prelu_backward(s, zz, up)
        ndz = _scalar_fd(lambda t: float(act.prelu_forward(s, np.array([t]))[0]), z)
        nds = _scalar_fd(lambda t: float(act.prelu_forward(t, zz)[0]), s)
        return float(max(relative_error(dz[0], ndz), relative_error(ds, nds)))
    p = np.asarray(p, dtype=np.float64)
    dz, g = act.adaptive_backward(kind, p, zz, up)
    analytic = np.concatenate([[dz[0]], g.as_array()])

    def f_of(vec):
        return float(act.adaptive_forward(kind, vec[1:], np.array([vec[0]]))[0])

    numeric = finite_diff_grad(f_of, np.concatenate([[z], p]), H)
    return float(np.max(relative_error(analytic, numeric)))


def activation_suite(n_points: int = 100, seed: int = 0) -> list[CheckResult]:
    rng = Rng(seed)
    out = []
    for tag in act.ALL_TAGS:
        kind = ActivationKind(tag)
        worst = 0.0
        done = 0
        while done < n_points:
            p = random_params(kind, rng) if kind.n_learnable else np.zeros(0)
            z = float(rng.uniform((1,), -4.0, 4.0)[0])
            if _near_kink(kind, p, z):
                continue
            worst = max(worst, check_activation_point(kind, p, z))
            done += 1
        out.append(CheckResult(f"activation/{tag}", worst))
    return out


def _near_kink(kind, p, z):
    if kind.tag in ("relu", "lrelu", "prelu"):
        return abs(z) <= KINK_MARGIN
    if kind.tag == "arelu":
        a, b, c, d = p
        return abs((a * z + c) - (b * z + d)) <= KINK_MARGIN
    return False


def loss_suite(n_points: int = 20, seed: int = 0) -> list[CheckResult]:
    rng = Rng(seed)
    worst = 0.0
    for _ in range(n_points):
        logits = rng.uniform((5,), -3.0, 3.0)
        label = int(rng.integers(0, 5))
        _, analytic = cross_entropy(logits, label)
        numeric = finite_diff_grad(lambda v: cross_entropy(v, label)[0], logits, H)
        worst = max(worst, float(np.max(relative_error(analytic, numeric))))
    return [CheckResult("loss/softmax_cross_entropy", worst)]


def network_configuration(index: int, seed: int = 0, batch: int = 2, classes: int = 3):
    """The ``index``-th seeded configuration: cycles presets x activation kinds.

    Random adaptive parameters and inputs are redrawn until no kinked site
    (ReLU-type zero crossing, AReLU branch switch, max-pool near-tie) lies
    within ``NETWORK_KINK_MARGIN`` of a non-differentiable point.
    """
    combos = [(p, t) for p in PRESETS for t in act.ALL_TAGS]
    preset, tag = combos[index % len(combos)]
    rng = Rng(seed * 100003 + index)
    kind = ActivationKind(tag)
    spec = ModelSpec(preset=preset, classes=classes, activation=tag, **SMALL_SHAPES[preset])
    model = init(spec, rng)
    while True:
        for site in model.adaptive_sites():
            site.params["p"][...] = random_params(kind, rng)
        x = rng.uniform((batch,) + spec.input_shape, 0.0, 1.0)
        if min_kink_gap(model, x) > NETWORK_KINK_MARGIN:
            break
    y = rng.integers(0, classes, batch)
    return model, x, y


def network_suite(n_configs: int = 100, seed: int = 0) -> list[CheckResult]:
    worst: dict[str, float] = {}
    for i in range(n_configs):
        model, x, y = network_configuration(i, seed)
        err = max(check_model_gradients(model, x, y, H).values())
        label = f"network/{model.spec.preset}/{model.spec.activation}"
        worst[label] = max(worst.get(label, 0.0), err)
    return [CheckResult(k, v) for k, v in worst.items()]
