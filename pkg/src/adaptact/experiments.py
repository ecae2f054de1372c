"""Config-driven experiment runs, their CSV artefacts, and run comparison.

Config files are TOML, schema version 1::

    version = 1
    seed = 1234                 # required
    epochs = 30
    batch_size = 64             # default 64

    [dataset]
    name = "gaussians-3"        # gaussians-<k> | spirals-2 | cifar10 | idx
    n = 3000                    # synthetic only: samples generated
    n_train = 2400
    n_test = 600
    # cifar10: train_paths = [...], test_paths = [...]
    # idx:     images = "...", labels = "...", test_images = "...", test_labels = "..."

    [model]
    preset = "mlp-2"            # mlp-2 | cnn-mini | cnn-mini-res
    # widths = [64, 64]; dense_hidden = 64

    [activation]
    kind = "arelu"
    freeze = false              # true: learnable activation scalars never updated
    # param = 0.01              # lrelu slope / swish beta

    [optimizer]
    kind = "sgd"                # sgd | momentum | adagrad | adadelta | adam
    rates = [0.001, 0.0001, 0.00001]
    # spans = [10, 10, 10]      # default: equal thirds of `epochs`
    # momentum, eps, beta1, beta2, rho

    [tracking]
    # layers = ["conv1", "conv3"]  # default: first, middle, last weight layers
    k = 4

Relative paths are resolved against the config file's directory.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import numpy as np

from . import datasets as dsets
from .activations import ActivationKind
from .errors import AdaptActError, ArgumentError, ComparisonError, ConfigError, TrainingError
from .network import PRESETS, ModelSpec, init, save_checkpoint
from .optimizers import DEFAULT_RATES, KINDS, OptimizerConfig, thirds_schedule
from .tensor import Rng
from .training import TrainConfig, activation_shape_trace, convergence_area, train

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
RUN_COLUMNS = ["epoch", "loss", "acc", "lr"]
DELTA_COLUMNS = ["epoch", "layer", "mean_abs_dw"]
SHAPE_COLUMNS = ["layer", "z", "f"]

_SCHEMA = {
    "": {"version", "seed", "epochs", "batch_size", "dataset", "model", "activation", "optimizer", "tracking", "out"},
    "dataset": {"name", "n", "n_train", "n_test", "train_paths", "test_paths",
                "images", "labels", "test_images", "test_labels"},
    "model": {"preset", "widths", "dense_hidden"},
    "activation": {"kind", "freeze", "param"},
    "optimizer": {"kind", "rates", "spans", "momentum", "eps", "beta1", "beta2", "rho"},
    "tracking": {"layers", "k"},
}


@dataclass
class DatasetConfig:
    name: str
    n: int | None = None
    n_train: int | None = None
    n_test: int | None = None
    train_paths: list = field(default_factory=list)
    test_paths: list = field(default_factory=list)
    images: str | None = None
    labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None


@dataclass
class ExperimentConfig:
    seed: int
    epochs: int
    dataset: DatasetConfig
    preset: str
    activation: str
    optimizer: OptimizerConfig
    batch_size: int = 64
    activation_param: float | None = None
    freeze: bool = False
    widths: tuple | None = None
    dense_hidden: int = 64
    tracked_layers: list | None = None
    k_tracked: int = 4
    out: str | None = None
    rates: tuple = DEFAULT_RATES
    spans: tuple | None = None
    text: str = ""

    def resolved(self) -> dict:
        d = asdict(self)
        d.pop("text")
        d["optimizer"]["schedule"] = [list(s) for s in self.optimizer.schedule]
        return d

    def train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, optimizer=self.optimizer, batch_size=self.batch_size,
                           freeze_adaptive=self.freeze, tracked_layers=self.tracked_layers,
                           k_tracked=self.k_tracked)


def _schedule(epochs, rates, spans, problems):
    try:
        if spans is None:
            return thirds_schedule(epochs, rates)
        if len(spans) != len(rates):
            problems.append("optimizer.spans: needs one span per rate")
            return None
        if sum(spans) < epochs:
            problems.append(f"optimizer.spans: cover {sum(spans)} epochs but the run has {epochs}")
            return None
        return list(zip(spans, rates))
    except AdaptActError as exc:
        problems.append(f"optimizer.rates: {exc}")
        return None


def parse_config(text: str, base_dir=None, seed=None, epochs=None) -> ExperimentConfig:
    """Validate a TOML config; every problem is reported in one :class:`ConfigError`.

    ``seed``/``epochs`` override the file's values (CLI ``--seed``/``--epochs``).
    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"not valid TOML: {exc}") from None
    base = Path(base_dir) if base_dir else Path(".")
    problems: list[str] = []

    for key in raw:
        if key not in _SCHEMA[""]:
            problems.append(f"{key}: unknown key")
    for section in ("dataset", "model", "activation", "optimizer", "tracking"):
        body = raw.get(section, {})
        if not isinstance(body, dict):
            problems.append(f"{section}: must be a table")
            continue
        for key in body:
            if key not in _SCHEMA[section]:
                problems.append(f"{section}.{key}: unknown key")

    def get(section, key, default=None, typ=None):
        body = raw if section == "" else raw.get(section, {})
        if not isinstance(body, dict):
            return default
        val = body.get(key, default)
        path = key if section == "" else f"{section}.{key}"
        if val is not None and typ is not None and not isinstance(val, typ):
            problems.append(f"{path}: expected {typ.__name__ if isinstance(typ, type) else 'number'}, got {val!r}")
            return default
        if isinstance(val, bool) and typ in (int, float, (int, float)):
            problems.append(f"{path}: expected a number, got {val!r}")
            return default
        return val

    version = get("", "version", SCHEMA_VERSION, int)
    if version != SCHEMA_VERSION:
        problems.append(f"version: unsupported schema version {version}")

    if seed is None:
        seed = get("", "seed", None, int)
        if seed is None and "seed" not in raw:
            problems.append("seed: missing (a seed is mandatory)")
    if seed is not None and not 0 <= seed < 2**64:
        problems.append("seed: must be an unsigned 64-bit integer")
    if epochs is None:
        epochs = get("", "epochs", None, int)
        if epochs is None and "epochs" not in raw:
            problems.append("epochs: missing")
    if epochs is not None and epochs < 0:
        problems.append("epochs: must be >= 0")
    batch_size = get("", "batch_size", 64, int)
    if batch_size is not None and batch_size <= 0:
        problems.append("batch_size: must be positive")

    name = get("dataset", "name", None, str)
    if name is None:
        problems.append("dataset.name: missing")
    elif not (name in ("cifar10", "idx", "spirals-2") or name.startswith("gaussians-")):
        problems.append(f"dataset.name: unknown dataset {name!r}")

    def paths(key):
        val = get("dataset", key, [], list)
        return [str(base / p) for p in val]

    def one_path(key):
        val = get("dataset", key, None, str)
        return None if val is None else str(base / val)

    dataset = DatasetConfig(
        name=name or "",
        n=get("dataset", "n", None, int),
        n_train=get("dataset", "n_train", None, int),
        n_test=get("dataset", "n_test", None, int),
        train_paths=paths("train_paths"),
        test_paths=paths("test_paths"),
        images=one_path("images"),
        labels=one_path("labels"),
        test_images=one_path("test_images"),
        test_labels=one_path("test_labels"),
    )
    if name == "cifar10" and not dataset.train_paths:
        problems.append("dataset.train_paths: required for cifar10")
    if name == "idx" and not (dataset.images and dataset.labels):
        problems.append("dataset.images/dataset.labels: required for idx")
    if name and (name.startswith("gaussians-") or name == "spirals-2") and dataset.n is None:
        problems.append("dataset.n: required for synthetic data")

    preset = get("model", "preset", None, str)
    if preset is None:
        problems.append("model.preset: missing")
    elif preset not in PRESETS:
        problems.append(f"model.preset: unknown preset {preset!r}; expected one of {', '.join(PRESETS)}")
    widths = get("model", "widths", None, list)

    kind_name = get("activation", "kind", None, str)
    param = get("activation", "param", None, (int, float))
    if kind_name is None:
        problems.append("activation.kind: missing")
    else:
        try:
            ActivationKind.parse(kind_name, None if param is None else float(param))
        except AdaptActError as exc:
            problems.append(f"activation.kind: {exc}")
    freeze = get("activation", "freeze", False, bool)

    opt_kind = get("optimizer", "kind", "sgd", str)
    if opt_kind is not None and opt_kind.lower() not in KINDS:
        problems.append(f"optimizer.kind: unknown optimizer {opt_kind!r}; expected one of {', '.join(KINDS)}")
    rates = tuple(float(r) for r in get("optimizer", "rates", list(DEFAULT_RATES), list))
    if any(not r > 0 for r in rates) or not rates:
        problems.append("optimizer.rates: need at least one positive rate")
    spans = get("optimizer", "spans", None, list)
    schedule = None
    if epochs is not None and not problems:
        # runs shorter than the stage count still get a full schedule; only its head is used
        sched_epochs = epochs if spans is not None else max(epochs, len(rates))
        schedule = _schedule(sched_epochs, rates, spans, problems)
    hyper = {k: float(get("optimizer", k, v, (int, float)))
             for k, v in dict(momentum=0.9, eps=1e-8, beta1=0.9, beta2=0.999, rho=0.95).items()}

    tracked = get("tracking", "layers", None, list)
    k_tracked = get("tracking", "k", 4, int)

    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(
        seed=int(seed), epochs=int(epochs), dataset=dataset, preset=preset,
        activation=kind_name.lower(), optimizer=OptimizerConfig(opt_kind, schedule, **hyper),
        batch_size=batch_size, activation_param=None if param is None else float(param),
        freeze=bool(freeze), widths=None if widths is None else tuple(widths),
        dense_hidden=get("model", "dense_hidden", 64, int), tracked_layers=tracked,
        k_tracked=k_tracked, out=get("", "out", None, str), rates=rates,
        spans=None if spans is None else tuple(spans), text=text,
    )


def load_config(path, **overrides) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(), path.parent, **overrides)


def load_data(cfg: ExperimentConfig, rng: Rng):
    """Returns ``(train, test)`` for the configured source."""
    d = cfg.dataset
    if d.name == "cifar10":
        train_ds = dsets.load_cifar10_bin(d.train_paths)
        test_ds = dsets.load_cifar10_bin(d.test_paths) if d.test_paths else None
    elif d.name == "idx":
        train_ds = dsets.load_idx(d.images, d.labels)
        test_ds = dsets.load_idx(d.test_images, d.test_labels) if d.test_images else None
    else:
        full = dsets.make_synthetic(d.name, d.n, rng)
        n_train = len(full) if d.n_train is None else d.n_train
        n_test = len(full) - n_train if d.n_test is None else d.n_test
        return dsets.subset(full, n_train, n_test, rng)
    if test_ds is None:
        n_train = d.n_train if d.n_train is not None else len(train_ds) - (d.n_test or 0)
        return dsets.subset(train_ds, n_train, d.n_test or 0, rng)
    train_part, _ = dsets.subset(train_ds, d.n_train if d.n_train is not None else len(train_ds), 0, rng)
    _, test_part = dsets.subset(test_ds, 0, d.n_test if d.n_test is not None else len(test_ds), rng)
    return train_part, test_part


def fmt(v) -> str:
    """Shortest round-tripping text for a float; bit-identical values give identical text."""
    return repr(float(v))


def adaptive_columns(model) -> list[str]:
    cols = []
    for site in model.adaptive_sites():
        keys = ("a", "b", "c", "d") if site.kind.is_adaptive else ("slope",)
        cols += [f"{site.name}.{k}" for k in keys]
    return cols


@dataclass
class RunResult:
    out_dir: Path
    status: str
    epochs_done: int
    final_acc: float | None
    area: float | None
    error: str | None = None


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> RunResult:
    """Train one configuration and write run.csv, deltas.csv, shapes.csv, summary.txt, model.npz.

    CSV rows are flushed per epoch; on divergence the rows so far stay on disk
    and the result carries ``status="diverged"``.
    """
    out = Path(out_dir or cfg.out or "run")
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.toml").write_text(cfg.text)
    (out / "resolved.json").write_text(json.dumps(cfg.resolved(), indent=2, sort_keys=True) + "\n")

    rng = Rng(cfg.seed)
    data_rng, init_rng, train_rng = rng.spawn(), rng.spawn(), rng.spawn()
    train_ds, test_ds = load_data(cfg, data_rng)
    spec = ModelSpec(preset=cfg.preset, input_shape=train_ds.images.shape[1:], classes=train_ds.classes,
                     activation=cfg.activation, activation_param=cfg.activation_param,
                     widths=cfg.widths, dense_hidden=cfg.dense_hidden)
    model = init(spec, init_rng)
    (out / "model.txt").write_text(model.report() + "\n")
    tcfg = cfg.train_config()

    pcols = adaptive_columns(model)
    k = cfg.k_tracked
    records = []
    with open(out / "run.csv", "w", newline="") as run_fh, open(out / "deltas.csv", "w", newline="") as dfh:
        run_w = csv.writer(run_fh, lineterminator="\n")
        delta_w = csv.writer(dfh, lineterminator="\n")
        run_w.writerow(RUN_COLUMNS + pcols)
        delta_w.writerow(DELTA_COLUMNS + [f"dw{i}" for i in range(k)])

        def emit(rec):
            records.append(rec)
            row = [rec.epoch, fmt(rec.train_loss), fmt(rec.test_accuracy), fmt(rec.lr)]
            for site_vals in rec.adaptive.values():
                row += [fmt(v) for v in site_vals]
            run_w.writerow(row)
            for layer, dw in rec.deltas.items():
                tracked = [fmt(v) for v in dw.tracked] + [""] * (k - len(dw.tracked))
                delta_w.writerow([rec.epoch, layer, fmt(dw.mean_abs)] + tracked)
            run_fh.flush()
            dfh.flush()

        status, error = "ok", None
        try:
            train(model, train_ds, tcfg, train_rng, test_ds, on_record=emit)
        except TrainingError as exc:
            status, error = "diverged", str(exc)
            log.error("%s", exc)

    write_shapes(model, out / "shapes.csv")
    if status == "ok":
        save_checkpoint(model, out / "model.npz", seed=cfg.seed)
    final_acc = records[-1].test_accuracy if records else None
    area = (convergence_area([(r.epoch, r.train_loss) for r in records]) if len(records) >= 2 else None)
    summary = (f"status={status} epochs={len(records)} "
               f"final_acc={'n/a' if final_acc is None else fmt(final_acc)} "
               f"convergence_area={'n/a' if area is None else fmt(area)}")
    (out / "summary.txt").write_text(summary + "\n")
    return RunResult(out, status, len(records), final_acc, area, error)


def write_shapes(model, path, z_grid=None):
    traces = activation_shape_trace(model, z_grid)
    grid = np.arange(-50, 51) / 10.0 if z_grid is None else np.asarray(z_grid, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SHAPE_COLUMNS)
        for name, values in traces.items():
            for z, f in zip(grid, values):
                w.writerow([name, fmt(z), fmt(f)])
    return traces


def read_run(run_dir) -> dict:
    run_dir = Path(run_dir)
    with open(run_dir / "run.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ComparisonError(f"{run_dir}: run.csv has no epochs")
    epochs = [int(r["epoch"]) for r in rows]
    losses = [float(r["loss"]) for r in rows]
    return {"name": run_dir.name, "epochs": epochs, "losses": losses, "final_acc": float(rows[-1]["acc"])}


def compare(run_dirs, metric: str = "area") -> list[dict]:
    """Rank completed runs; area ascending (smaller converges faster), accuracy descending.

    Ties keep alphabetical run-name order.
    """
    if metric not in ("area", "final_acc"):
        raise ArgumentError(f"unknown metric {metric!r}")
    runs = [read_run(d) for d in run_dirs]
    if len(runs) < 2:
        raise ComparisonError("need at least two runs to compare")
    n_epochs = {len(r["epochs"]) for r in runs}
    if len(n_epochs) != 1:
        raise ComparisonError(f"runs have different epoch counts: {sorted(n_epochs)}")
    for r in runs:
        r["area"] = convergence_area(zip(r["epochs"], r["losses"])) if len(r["epochs"]) >= 2 else math.nan
    runs.sort(key=lambda r: r["name"])
    if metric == "area":
        runs.sort(key=lambda r: r["area"])
    else:
        runs.sort(key=lambda r: -r["final_acc"])
    return [{"rank": i + 1, "run": r["name"], "area": r["area"], "final_acc": r["final_acc"]}
            for i, r in enumerate(runs)]


def format_table(rows) -> str:
    lines = [f"{'rank':>4}  {'run':<32} {'area':>14} {'final_acc':>10}"]
    for r in rows:
        lines.append(f"{r['rank']:>4}  {r['run']:<32} {r['area']:>14.6f} {r['final_acc']:>10.4f}")
    return "\n".join(lines)
