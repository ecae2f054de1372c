"""Layers, preset models and the forward/backward pipeline.

Every layer works on a whole batch. Parameters live in ``layer.params`` as
float64 arrays that optimizers update in place; ``layer.grads`` mirrors it
after a backward pass. Caches are stamped with the forward call that wrote
them so a backward pass can never consume a stale one.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import activations as act
from .activations import ActivationKind
from .errors import ContractError, DimensionError, FormatError, NumericError, SpecError
from .tensor import Rng, rand_uniform

CHECKPOINT_VERSION = 1
PRESETS = ("mlp-2", "cnn-mini", "cnn-mini-res")


class Layer:
    name = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    # role of each parameter: "weight", "bias" or "adaptive"
    roles: dict[str, str] = {}

    def output_shape(self, shape):
        return shape

    def forward(self, x, stamp):
        raise NotImplementedError

    def backward(self, dy, stamp):
        raise NotImplementedError

    def _store(self, stamp, *data):
        self._cache = (stamp, data)

    def _take(self, stamp):
        if self._cache is None or self._cache[0] != stamp:
            raise ContractError(f"{self.name}: backward without a matching forward")
        data = self._cache[1]
        self._cache = None
        return data

    def sublayers(self):
        return [self]

    def cached_input(self):
        """Input of the last un-consumed forward, for diagnostics."""
        if self._cache is None:
            return None
        data = self._cache[1]
        return data[-1] if data else None


def glorot_bound(fan_in: int, fan_out: int) -> float:
    return math.sqrt(6.0 / (fan_in + fan_out))


class Dense(Layer):
    roles = {"w": "weight", "b": "bias"}

    def __init__(self, n_in, n_out, name="dense"):
        super().__init__()
        self.name = name
        self.n_in, self.n_out = n_in, n_out
        self.params = {"w": np.zeros((n_out, n_in)), "b": np.zeros(n_out)}

    def init(self, rng: Rng):
        bound = glorot_bound(self.n_in, self.n_out)
        self.params["w"][...] = rand_uniform(rng, (self.n_out, self.n_in), -bound, bound)
        self.params["b"][...] = 0.0

    def output_shape(self, shape):
        if shape != (self.n_in,):
            raise DimensionError(f"{self.name} expects ({self.n_in},), got {shape}")
        return (self.n_out,)

    def forward(self, x, stamp):
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise DimensionError(f"{self.name} expects (N, {self.n_in}), got {x.shape}")
        self._store(stamp, x)
        return x @ self.params["w"].T + self.params["b"]

    def backward(self, dy, stamp):
        (x,) = self._take(stamp)
        self.grads = {"w": dy.T @ x, "b": dy.sum(axis=0)}
        return dy @ self.params["w"]


class Conv2d(Layer):
    roles = {"w": "weight", "b": "bias"}

    def __init__(self, in_c, out_c, k=3, stride=1, pad=None, name="conv"):
        super().__init__()
        self.name = name
        self.in_c, self.out_c, self.k, self.stride = in_c, out_c, k, stride
        # "same" padding for odd kernels at stride 1
        self.pad = (k - 1) // 2 if pad is None else pad
        self.params = {"w": np.zeros((out_c, in_c, k, k)), "b": np.zeros(out_c)}

    def init(self, rng: Rng):
        area = self.k * self.k
        bound = glorot_bound(self.in_c * area, self.out_c * area)
        self.params["w"][...] = rand_uniform(rng, self.params["w"].shape, -bound, bound)
        self.params["b"][...] = 0.0

    def _out_hw(self, h, w):
        ho = (h + 2 * self.pad - self.k) // self.stride + 1
        wo = (w + 2 * self.pad - self.k) // self.stride + 1
        return ho, wo

    def output_shape(self, shape):
        if len(shape) != 3 or shape[0] != self.in_c:
            raise DimensionError(f"{self.name} expects ({self.in_c}, H, W), got {shape}")
        ho, wo = self._out_hw(shape[1], shape[2])
        if ho <= 0 or wo <= 0:
            raise DimensionError(f"{self.name}: input {shape} too small for kernel {self.k}")
        return (self.out_c, ho, wo)

    def forward(self, x, stamp):
        n = x.shape[0]
        _, ho, wo = self.output_shape(x.shape[1:])
        p, s, k = self.pad, self.stride, self.k
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s][:, :, :ho, :wo]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, -1)
        out = cols @ self.params["w"].reshape(self.out_c, -1).T + self.params["b"]
        self._store(stamp, cols, x.shape)
        return out.reshape(n, ho, wo, self.out_c).transpose(0, 3, 1, 2)

    def backward(self, dy, stamp):
        cols, xshape = self._take(stamp)
        n, c, h, w = xshape
        ho, wo = dy.shape[2], dy.shape[3]
        k, s, p = self.k, self.stride, self.pad
        dy2 = dy.transpose(0, 2, 3, 1).reshape(-1, self.out_c)
        self.grads = {
            "w": (dy2.T @ cols).reshape(self.params["w"].shape),
            "b": dy2.sum(axis=0),
        }
        dcols = (dy2 @ self.params["w"].reshape(self.out_c, -1)).reshape(n, ho, wo, c, k, k)
        dxp = np.zeros((n, c, h + 2 * p, w + 2 * p))
        for i in range(k):
            for j in range(k):
                dxp[:, :, i:i + s * ho:s, j:j + s * wo:s] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return dxp[:, :, p:p + h, p:p + w]


class MaxPool2d(Layer):
    """2x2 max pooling at stride 2; odd trailing rows/columns are dropped."""

    def __init__(self, name="pool"):
        super().__init__()
        self.name = name

    def output_shape(self, shape):
        c, h, w = shape
        if h < 2 or w < 2:
            raise DimensionError(f"{self.name}: input {shape} too small to pool")
        return (c, h // 2, w // 2)

    def _windows(self, x):
        n, c, h, w = x.shape
        ho, wo = h // 2, w // 2
        xw = x[:, :, :2 * ho, :2 * wo].reshape(n, c, ho, 2, wo, 2)
        return xw.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, 4)

    def forward(self, x, stamp):
        win = self._windows(x)
        idx = win.argmax(axis=-1)
        self._store(stamp, idx, x)
        return np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]

    def backward(self, dy, stamp):
        idx, x = self._take(stamp)
        xshape = x.shape
        n, c, h, w = xshape
        ho, wo = h // 2, w // 2
        dwin = np.zeros((n, c, ho, wo, 4))
        np.put_along_axis(dwin, idx[..., None], dy[..., None], axis=-1)
        dx = np.zeros(xshape)
        dx[:, :, :2 * ho, :2 * wo] = (
            dwin.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * ho, 2 * wo)
        )
        return dx

    def kink_gap(self, x):
        """Per-window gap between the largest and second-largest entry."""
        top2 = np.sort(self._windows(x), axis=-1)[..., -2:]
        gap = top2[..., 1] - top2[..., 0]
        # all-zero ties come from saturated ReLU-type units and stay tied under small perturbations
        return np.where((gap == 0) & (top2[..., 1] == 0), np.inf, gap)


class Flatten(Layer):
    def __init__(self, name="flatten"):
        super().__init__()
        self.name = name

    def output_shape(self, shape):
        return (int(np.prod(shape)),)

    def forward(self, x, stamp):
        self._store(stamp, x.shape)
        return x.reshape(x.shape[0], -1)

    def backward(self, dy, stamp):
        (shape,) = self._take(stamp)
        return dy.reshape(shape)


class Activation(Layer):
    """One activation site; owns the per-layer learnable scalars if the kind has any."""

    roles = {"p": "adaptive"}

    def __init__(self, kind: ActivationKind, name="act"):
        super().__init__()
        self.name = name
        self.kind = kind
        if kind.n_learnable:
            self.params = {"p": act.default_params(kind)}
        self._warned = False

    def init(self, rng: Rng):
        if self.kind.n_learnable:
            self.params["p"][...] = act.default_params(self.kind)

    @property
    def adaptive(self) -> bool:
        return self.kind.n_learnable > 0

    def evaluate(self, z):
        """Apply the activation with the current parameters; no caching."""
        if self.kind.is_adaptive:
            return act.adaptive_forward(self.kind, self.params["p"], z)
        if self.kind.tag == "prelu":
            return act.prelu_forward(self.params["p"][0], z)
        return act.fixed_forward(self.kind, z)

    def forward(self, z, stamp):
        if self.kind.is_adaptive and not self._warned:
            self._warned = act.warn_if_degenerate(self.kind, self.params["p"], self.name)
        self._store(stamp, z)
        return self.evaluate(z)

    def backward(self, dy, stamp):
        (z,) = self._take(stamp)
        if self.kind.is_adaptive:
            dz, g = act.adaptive_backward(self.kind, self.params["p"], z, dy)
            self.grads = {"p": g.as_array()}
            return dz
        if self.kind.tag == "prelu":
            dz, ds = act.prelu_backward(self.params["p"][0], z, dy)
            self.grads = {"p": np.array([ds])}
            return dz
        self.grads = {}
        return dy * act.fixed_grad(self.kind, z)

    def kink_gap(self, z):
        """Distance of each element from the nearest non-differentiable point (inf if smooth)."""
        tag = self.kind.tag
        if tag in ("relu", "lrelu", "prelu"):
            return np.abs(z)
        if tag == "arelu":
            a, b, c, d = self.params["p"]
            return np.abs((a * z + c) - (b * z + d))
        return np.full(z.shape, np.inf)


class Residual(Layer):
    """Identity skip around a shape-preserving stack: ``y = x + inner(x)``."""

    def __init__(self, inner, name="res"):
        super().__init__()
        self.name = name
        self.inner = list(inner)

    def init(self, rng: Rng):
        for layer in self.inner:
            if hasattr(layer, "init"):
                layer.init(rng)

    def output_shape(self, shape):
        out = shape
        for layer in self.inner:
            out = layer.output_shape(out)
        if out != shape:
            raise DimensionError(f"{self.name}: inner stack maps {shape} to {out}")
        return shape

    def forward(self, x, stamp):
        y = x
        for layer in self.inner:
            y = layer.forward(y, stamp)
        self._store(stamp)
        return x + y

    def backward(self, dy, stamp):
        self._take(stamp)
        g = dy
        for layer in reversed(self.inner):
            g = layer.backward(g, stamp)
        return dy + g

    def sublayers(self):
        out = []
        for layer in self.inner:
            out.extend(layer.sublayers())
        return out


@dataclass
class ModelSpec:
    preset: str
    input_shape: tuple
    classes: int
    activation: str = "relu"
    activation_param: float | None = None
    # channel widths of the conv blocks (cnn presets) or hidden sizes (mlp-2)
    widths: tuple | None = None
    dense_hidden: int = 64

    def __post_init__(self):
        self.input_shape = tuple(int(v) for v in self.input_shape)
        if self.widths is not None:
            self.widths = tuple(int(v) for v in self.widths)

    @property
    def kind(self) -> ActivationKind:
        return ActivationKind.parse(self.activation, self.activation_param)

    def to_dict(self):
        d = asdict(self)
        d["input_shape"] = list(self.input_shape)
        d["widths"] = None if self.widths is None else list(self.widths)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class Model:
    def __init__(self, layers, input_shape, spec: ModelSpec | None = None):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        self.spec = spec
        self._stamp = 0
        self._pending = None
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.output_shape(shape)
        self.output_shape = shape

    def all_layers(self):
        out = []
        for layer in self.layers:
            out.extend(layer.sublayers())
        return out

    def forward(self, batch: np.ndarray) -> np.ndarray:
        batch = np.asarray(batch, dtype=np.float64)
        if batch.shape[1:] != self.input_shape:
            raise DimensionError(f"batch shape {batch.shape[1:]} does not match model input {self.input_shape}")
        self._stamp += 1
        stamp = self._stamp
        y = batch
        # overflow surfaces as NumericError below rather than as a numpy warning
        with np.errstate(over="ignore", invalid="ignore"):
            for i, layer in enumerate(self.layers):
                y = layer.forward(y, stamp)
                if not np.all(np.isfinite(y)):
                    self._pending = None
                    raise NumericError(f"non-finite output at layer {i} ({layer.name})")
        self._pending = stamp
        return y

    __call__ = forward

    def predict(self, batch, chunk=512):
        """Logits without leaving caches behind for a backward pass."""
        outs = []
        for i in range(0, len(batch), chunk):
            outs.append(self.forward(batch[i:i + chunk]))
        self._pending = None
        for layer in self.all_layers() + self.layers:
            layer._cache = None
        return np.concatenate(outs) if outs else np.zeros((0,) + self.output_shape)

    def backward(self, dlogits: np.ndarray) -> dict[str, np.ndarray]:
        if self._pending is None:
            raise ContractError("backward called without a matching forward")
        stamp, self._pending = self._pending, None
        g = np.asarray(dlogits, dtype=np.float64)
        for layer in reversed(self.layers):
            g = layer.backward(g, stamp)
        return self.gradients()

    def named_parameters(self):
        """``[(qualified_name, array, role)]`` in a fixed order."""
        out = []
        for layer in self.all_layers():
            for key, arr in layer.params.items():
                out.append((f"{layer.name}.{key}", arr, layer.roles[key]))
        return out

    def parameters(self) -> dict[str, np.ndarray]:
        return {name: arr for name, arr, _ in self.named_parameters()}

    def gradients(self) -> dict[str, np.ndarray]:
        out = {}
        for layer in self.all_layers():
            for key in layer.params:
                out[f"{layer.name}.{key}"] = layer.grads[key]
        return out

    def roles(self) -> dict[str, str]:
        return {name: role for name, _, role in self.named_parameters()}

    def activation_sites(self) -> list[Activation]:
        return [l for l in self.all_layers() if isinstance(l, Activation)]

    def adaptive_sites(self) -> list[Activation]:
        return [l for l in self.activation_sites() if l.adaptive]

    def weight_layers(self) -> list[Layer]:
        return [l for l in self.all_layers() if isinstance(l, (Dense, Conv2d))]

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: arr.copy() for name, arr, _ in self.named_parameters()}

    def load_snapshot(self, snap):
        for name, arr, _ in self.named_parameters():
            if snap[name].shape != arr.shape:
                raise DimensionError(f"{name}: {snap[name].shape} vs {arr.shape}")
            arr[...] = snap[name]

    def report(self) -> str:
        census = param_census(self)
        lines = [f"model {self.spec.preset if self.spec else '(custom)'} input={self.input_shape}"]
        for layer in self.all_layers():
            n = sum(a.size for a in layer.params.values())
            extra = f" kind={layer.kind}" if isinstance(layer, Activation) else ""
            lines.append(f"  {layer.name:<14}{extra} params={n}")
        lines.append(f"weights={census['weights']} adaptive={census['adaptive']} "
                     f"adaptive_sites={len(self.adaptive_sites())}")
        return "\n".join(lines)


def param_census(model: Model) -> dict[str, int]:
    counts = {"weights": 0, "adaptive": 0}
    for _, arr, role in model.named_parameters():
        counts["adaptive" if role == "adaptive" else "weights"] += arr.size
    return counts


def _build_layers(spec: ModelSpec):
    kind = spec.kind
    counters: dict[str, int] = {}

    def nm(prefix):
        counters[prefix] = counters.get(prefix, 0) + 1
        return f"{prefix}{counters[prefix]}"

    classes = spec.classes
    if spec.preset == "mlp-2":
        h1, h2 = spec.widths or (64, 64)
        d = int(np.prod(spec.input_shape))
        return [
            Flatten(nm("flatten")),
            Dense(d, h1, nm("dense")), Activation(kind, nm("act")),
            Dense(h1, h2, nm("dense")), Activation(kind, nm("act")),
            Dense(h2, classes, nm("dense")),
        ]
    if spec.preset in ("cnn-mini", "cnn-mini-res"):
        if len(spec.input_shape) != 3:
            raise SpecError(f"{spec.preset} needs a (C, H, W) input, got {spec.input_shape}")
        widths = spec.widths or (16, 32, 64)
        if len(widths) != 3:
            raise SpecError("cnn presets take exactly three conv widths")
        layers = []
        c = spec.input_shape[0]
        for i, w in enumerate(widths):
            layers += [Conv2d(c, w, name=nm("conv")), Activation(kind, nm("act")), MaxPool2d(nm("pool"))]
            c = w
            if spec.preset == "cnn-mini-res" and i == 1:
                res = nm("res")
                layers.append(Residual([Conv2d(c, c, name=f"{res}.conv"),
                                        Activation(kind, f"{res}.act")], name=res))
        h = spec.input_shape[1] // 8
        w_ = spec.input_shape[2] // 8
        if h <= 0 or w_ <= 0:
            raise SpecError(f"input {spec.input_shape} too small for three 2x2 pools")
        layers += [
            Flatten(nm("flatten")),
            Dense(c * h * w_, spec.dense_hidden, nm("dense")),
            Dense(spec.dense_hidden, classes, nm("dense")),
        ]
        return layers
    raise SpecError(f"unknown preset {spec.preset!r}; expected one of {PRESETS}")


def init(spec: ModelSpec, rng: Rng) -> Model:
    """Build a preset and draw its weights (Glorot uniform, zero biases)."""
    if spec.classes < 2:
        raise SpecError("need at least two classes")
    try:
        model = Model(_build_layers(spec), spec.input_shape, spec)
    except DimensionError as exc:
        raise SpecError(str(exc)) from exc
    init_layers(model.layers, rng)
    return model


def init_layers(layers, rng: Rng):
    for layer in layers:
        if hasattr(layer, "init"):
            layer.init(rng)


def save_checkpoint(model: Model, path, seed=None, extra=None):
    if model.spec is None:
        raise ContractError("only preset-built models can be checkpointed")
    meta = {"format_version": CHECKPOINT_VERSION, "spec": model.spec.to_dict(),
            "seed": seed, "extra": extra or {}}
    arrays = {f"param:{name}": arr for name, arr, _ in model.named_parameters()}
    buf = io.BytesIO()
    np.savez(buf, __meta__=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8), **arrays)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path):
    """Returns ``(model, meta)``."""
    with np.load(path, allow_pickle=False) as z:
        if "__meta__" not in z:
            raise FormatError(f"{path}: not a checkpoint")
        meta = json.loads(z["__meta__"].tobytes().decode())
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {meta.get('format_version')}")
        spec = ModelSpec.from_dict(meta["spec"])
        model = Model(_build_layers(spec), spec.input_shape, spec)
        for name, arr, _ in model.named_parameters():
            key = f"param:{name}"
            if key not in z:
                raise FormatError(f"{path}: missing {name}")
            if z[key].shape != arr.shape:
                raise FormatError(f"{path}: {name} has shape {z[key].shape}, expected {arr.shape}")
            arr[...] = z[key]
    return model, meta
