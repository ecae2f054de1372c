"""Fixed and adaptive activation functions with their analytic derivatives.

The adaptive family wraps a fixed function ``f`` in two affine maps::

    f_A(z; a, b, c, d) = b * f(a * z + c) + d        (ASigmoid, ATanh)
    f_A(z; a, b, c, d) = max(a * z + c, b * z + d)   (AReLU)

One ``(a, b, c, d)`` quadruple is shared by every unit of a layer.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ArgumentError, ContractError, DimensionError

log = logging.getLogger(__name__)

FIXED_TAGS = ("sigmoid", "tanh", "relu", "lrelu", "swish")
ADAPTIVE_TAGS = ("asigmoid", "atanh", "arelu")
ALL_TAGS = FIXED_TAGS + ("prelu",) + ADAPTIVE_TAGS

LRELU_SLOPE = 0.01
SWISH_BETA = 1.0
PRELU_INIT = 0.25
DEGENERATE_SCALE = 1e-6


@dataclass(frozen=True)
class ActivationKind:
    tag: str
    # negative slope for lrelu, beta for swish; unused otherwise
    param: float | None = None

    def __post_init__(self):
        if self.tag not in ALL_TAGS:
            raise ArgumentError(f"unknown activation {self.tag!r}")
        if self.tag == "lrelu":
            if self.param is None:
                object.__setattr__(self, "param", LRELU_SLOPE)
            if not self.param > 0:
                raise ArgumentError("lrelu slope must be > 0")
        elif self.tag == "swish":
            if self.param is None:
                object.__setattr__(self, "param", SWISH_BETA)
            if not self.param > 0:
                raise ArgumentError("swish beta must be > 0")
        elif self.param is not None:
            raise ArgumentError(f"{self.tag} takes no parameter")

    @classmethod
    def parse(cls, name: str, param: float | None = None) -> "ActivationKind":
        return cls(name.strip().lower(), param)

    @property
    def is_adaptive(self) -> bool:
        return self.tag in ADAPTIVE_TAGS

    @property
    def is_fixed(self) -> bool:
        return self.tag in FIXED_TAGS

    @property
    def n_learnable(self) -> int:
        """Learnable scalars one activation layer of this kind owns."""
        if self.is_adaptive:
            return 4
        return 1 if self.tag == "prelu" else 0

    def __str__(self):
        return self.tag if self.param is None else f"{self.tag}({self.param:g})"


SIGMOID = ActivationKind("sigmoid")
TANH = ActivationKind("tanh")
RELU = ActivationKind("relu")
LRELU = ActivationKind("lrelu")
SWISH = ActivationKind("swish")
PRELU = ActivationKind("prelu")
ASIGMOID = ActivationKind("asigmoid")
ATANH = ActivationKind("atanh")
ARELU = ActivationKind("arelu")


@dataclass
class AdaptiveParams:
    a: float
    b: float
    c: float
    d: float

    def __iter__(self):
        return iter((self.a, self.b, self.c, self.d))

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c, self.d], dtype=np.float64)

    @classmethod
    def from_array(cls, arr) -> "AdaptiveParams":
        a, b, c, d = (float(v) for v in arr)
        return cls(a, b, c, d)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.as_array())))


def default_params(kind: ActivationKind) -> np.ndarray:
    """Initial learnable values: each adaptive kind starts exactly at its fixed baseline."""
    if kind.tag in ("asigmoid", "atanh"):
        return np.array([1.0, 1.0, 0.0, 0.0])
    if kind.tag == "arelu":
        return np.array([1.0, 0.0, 0.0, 0.0])
    if kind.tag == "prelu":
        return np.array([PRELU_INIT])
    return np.zeros(0)


def sigmoid(x):
    # exp(-|x|) never overflows
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _base(tag: str):
    if tag in ("sigmoid", "asigmoid"):
        return sigmoid
    return np.tanh


def _base_grad(tag: str, u, fu=None):
    if fu is None:
        fu = _base(tag)(u)
    if tag in ("sigmoid", "asigmoid"):
        return fu * (1.0 - fu)
    return 1.0 - fu * fu


def _require_fixed(kind: ActivationKind):
    if not kind.is_fixed:
        raise ContractError(f"{kind} is not a fixed activation")


def fixed_forward(kind: ActivationKind, x: np.ndarray) -> np.ndarray:
    _require_fixed(kind)
    x = np.asarray(x, dtype=np.float64)
    if kind.tag in ("sigmoid", "tanh"):
        return _base(kind.tag)(x)
    if kind.tag == "relu":
        return np.maximum(x, 0.0)
    if kind.tag == "lrelu":
        return np.where(x > 0, x, kind.param * x)
    return x * sigmoid(kind.param * x)


def fixed_grad(kind: ActivationKind, x: np.ndarray) -> np.ndarray:
    """Elementwise dy/dx. Kinks take the negative-side slope."""
    _require_fixed(kind)
    x = np.asarray(x, dtype=np.float64)
    if kind.tag in ("sigmoid", "tanh"):
        return _base_grad(kind.tag, x)
    if kind.tag == "relu":
        return np.where(x > 0, 1.0, 0.0)
    if kind.tag == "lrelu":
        return np.where(x > 0, 1.0, kind.param)
    beta = kind.param
    s = sigmoid(beta * x)
    return s + beta * x * s * (1.0 - s)


def prelu_forward(slope: float, z: np.ndarray) -> np.ndarray:
    return np.where(z > 0, z, slope * z)


def prelu_backward(slope: float, z: np.ndarray, upstream: np.ndarray):
    """Returns ``(dz, dslope)``."""
    if z.shape != upstream.shape:
        raise DimensionError(f"z {z.shape} vs upstream {upstream.shape}")
    pos = z > 0
    dz = upstream * np.where(pos, 1.0, slope)
    dslope = float(np.sum(np.where(pos, 0.0, upstream * z)))
    return dz, dslope


def _unpack(p):
    if isinstance(p, AdaptiveParams):
        return p.a, p.b, p.c, p.d
    a, b, c, d = (float(v) for v in p)
    return a, b, c, d


def _require_adaptive(kind: ActivationKind):
    if not kind.is_adaptive:
        raise ContractError(f"{kind} is not an adaptive activation")


def arelu_branch1(a, b, c, d, z):
    """Mask of elements whose gradient goes through the ``a*z + c`` line.

    On a tie the line with the smaller slope wins, i.e. the left derivative,
    which is the same negative-side convention the fixed ReLU family uses.
    """
    u1 = a * z + c
    u2 = b * z + d
    return (u1 > u2) | ((u1 == u2) & (a <= b))


def adaptive_forward(kind: ActivationKind, p, z: np.ndarray) -> np.ndarray:
    _require_adaptive(kind)
    a, b, c, d = _unpack(p)
    z = np.asarray(z, dtype=np.float64)
    if kind.tag == "arelu":
        return np.maximum(a * z + c, b * z + d)
    return b * _base(kind.tag)(a * z + c) + d


def adaptive_backward(kind: ActivationKind, p, z: np.ndarray, upstream: np.ndarray):
    """Gradients of ``sum(upstream * f_A(z))`` w.r.t. ``z`` and ``(a, b, c, d)``.

    Returns ``(dz, AdaptiveParams)``; the parameter gradients are summed over
    every element since the parameters are per-layer scalars.
    """
    _require_adaptive(kind)
    z = np.asarray(z, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if z.shape != upstream.shape:
        raise DimensionError(f"z {z.shape} vs upstream {upstream.shape}")
    a, b, c, d = _unpack(p)
    if kind.tag == "arelu":
        on1 = arelu_branch1(a, b, c, d, z)
        g1 = np.where(on1, upstream, 0.0)
        g2 = np.where(on1, 0.0, upstream)
        dz = g1 * a + g2 * b
        grads = AdaptiveParams(
            a=float(np.sum(g1 * z)),
            b=float(np.sum(g2 * z)),
            c=float(np.sum(g1)),
            d=float(np.sum(g2)),
        )
        return dz, grads
    u = a * z + c
    fu = _base(kind.tag)(u)
    inner = upstream * b * _base_grad(kind.tag, u, fu)
    dz = inner * a
    grads = AdaptiveParams(
        a=float(np.sum(inner * z)),
        b=float(np.sum(upstream * fu)),
        c=float(np.sum(inner)),
        d=float(np.sum(upstream)),
    )
    return dz, grads


class SpecialCase(NamedTuple):
    name: str  # "relu", "prelu" or "general"
    slope: float | None = None


def classify_special_case(p) -> SpecialCase:
    """Which fixed function an AReLU quadruple reduces to (exact comparison)."""
    a, b, c, d = _unpack(p)
    if a == 1 and b == 0 and c == 0 and d == 0:
        return SpecialCase("relu")
    if b == 1 and c == 0 and d == 0:
        return SpecialCase("prelu", a)
    return SpecialCase("general")


def warn_if_degenerate(kind: ActivationKind, p, where: str = "") -> bool:
    """Log when a smooth adaptive layer's input or output scale has collapsed."""
    if kind.tag not in ("asigmoid", "atanh"):
        return False
    a, b, _, _ = _unpack(p)
    if abs(a) < DEGENERATE_SCALE or abs(b) < DEGENERATE_SCALE:
        log.warning("%s %s: |a| or |b| below %g (a=%g, b=%g); layer output is nearly constant",
                    kind, where, DEGENERATE_SCALE, a, b)
        return True
    return False
