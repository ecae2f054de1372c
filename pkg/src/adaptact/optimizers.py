"""Update rules (SGD, Momentum, AdaGrad, AdaDelta, Adam) and the staged learning rate.

All rules act on a ``{name: ndarray}`` mapping and update the arrays in place,
so weights, biases and the adaptive activation scalars go through exactly the
same machinery.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, DimensionError, ScheduleError

log = logging.getLogger(__name__)

KINDS = ("sgd", "momentum", "adagrad", "adadelta", "adam")
DEFAULT_RATES = (1e-3, 1e-4, 1e-5)


def thirds_schedule(epochs: int, rates=DEFAULT_RATES) -> list[tuple[int, float]]:
    """Split ``epochs`` into ``len(rates)`` near-equal stages; earlier stages take the remainder."""
    if epochs < len(rates):
        raise ScheduleError(f"{epochs} epochs cannot hold {len(rates)} stages")
    base, extra = divmod(epochs, len(rates))
    return [(base + (1 if i < extra else 0), float(r)) for i, r in enumerate(rates)]


@dataclass
class OptimizerConfig:
    kind: str = "sgd"
    # ordered (span_in_epochs, rate) stages
    schedule: list = field(default_factory=lambda: [(1, 1e-3)])
    momentum: float = 0.9
    eps: float = 1e-8
    beta1: float = 0.9
    beta2: float = 0.999
    rho: float = 0.95

    def __post_init__(self):
        self.kind = self.kind.lower()
        if self.kind not in KINDS:
            raise ArgumentError(f"unknown optimizer {self.kind!r}; expected one of {KINDS}")
        self.schedule = [(int(span), float(rate)) for span, rate in self.schedule]
        if not self.schedule:
            raise ScheduleError("empty learning-rate schedule")
        for span, rate in self.schedule:
            if span <= 0 or not rate > 0:
                raise ScheduleError(f"bad schedule stage ({span}, {rate})")

    @property
    def total_epochs(self) -> int:
        return sum(span for span, _ in self.schedule)


def lr_at_epoch(cfg: OptimizerConfig, epoch: int) -> float:
    if epoch < 0:
        raise ScheduleError(f"negative epoch {epoch}")
    end = 0
    for span, rate in cfg.schedule:
        end += span
        if epoch < end:
            return rate
    raise ScheduleError(f"epoch {epoch} is past the {end}-epoch schedule")


class OptimizerState:
    """Per-parameter buffers plus the step counter."""

    def __init__(self):
        self.t = 0
        self.buffers: dict[str, dict[str, np.ndarray]] = {}

    def slot(self, name, key, like):
        bufs = self.buffers.setdefault(name, {})
        if key not in bufs:
            bufs[key] = np.zeros_like(like, dtype=np.float64)
        return bufs[key]

    def audit(self, params) -> bool:
        return all(buf.shape == params[name].shape
                   for name, bufs in self.buffers.items() for buf in bufs.values())


def step(cfg: OptimizerConfig, state: OptimizerState, params: dict, grads: dict, epoch: int) -> dict:
    """Apply one update to every array in ``params`` (in place) and return ``params``."""
    lr = lr_at_epoch(cfg, epoch)
    state.t += 1
    t = state.t
    for name, w in params.items():
        g = grads[name]
        if g.shape != w.shape:
            raise DimensionError(f"{name}: gradient {g.shape} vs parameter {w.shape}")
        if cfg.kind == "sgd":
            w -= lr * g
        elif cfg.kind == "momentum":
            v = state.slot(name, "v", w)
            v *= cfg.momentum
            v += g
            w -= lr * v
        elif cfg.kind == "adagrad":
            acc = state.slot(name, "G", w)
            acc += g * g
            w -= lr * g / (np.sqrt(acc) + cfg.eps)
        elif cfg.kind == "adadelta":
            eg = state.slot(name, "Eg2", w)
            ex = state.slot(name, "Edx2", w)
            eg *= cfg.rho
            eg += (1.0 - cfg.rho) * g * g
            dx = -np.sqrt(ex + cfg.eps) / np.sqrt(eg + cfg.eps) * g
            ex *= cfg.rho
            ex += (1.0 - cfg.rho) * dx * dx
            w += dx
        else:
            m = state.slot(name, "m", w)
            v = state.slot(name, "v", w)
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            mhat = m / (1.0 - cfg.beta1 ** t)
            vhat = v / (1.0 - cfg.beta2 ** t)
            w -= lr * mhat / (np.sqrt(vhat) + cfg.eps)
    return params


class Optimizer:
    """Binds a config to its state; AdaDelta ignores the schedule's rates."""

    def __init__(self, cfg: OptimizerConfig):
        self.cfg = cfg
        self.state = OptimizerState()
        if cfg.kind == "adadelta":
            log.info("adadelta uses no external learning rate; schedule rates are ignored")

    def step(self, params, grads, epoch):
        return step(self.cfg, self.state, params, grads, epoch)

    def lr(self, epoch):
        return lr_at_epoch(self.cfg, epoch)
