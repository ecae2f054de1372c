"""Command line entry point: ``adaptact {train,gradcheck,compare,shapes}``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import gradcheck
from .errors import AdaptActError, ConfigError
from .experiments import compare, format_table, load_config, run_experiment, write_shapes
from .network import load_checkpoint


def _u64(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def cmd_train(args) -> int:
    cfg = load_config(args.config, seed=args.seed, epochs=args.epochs)
    result = run_experiment(cfg, args.out)
    print((result.out_dir / "summary.txt").read_text().strip())
    if result.status != "ok":
        print(f"error: {result.error}", file=sys.stderr)
        return 1
    return 0


def cmd_gradcheck(args) -> int:
    suites = [
        ("activations", gradcheck.activation_suite(args.points, args.seed)),
        ("loss", gradcheck.loss_suite(seed=args.seed)),
        ("network", gradcheck.network_suite(args.configs, args.seed)),
    ]
    failed = False
    for module, results in suites:
        worst = max(r.max_rel_error for r in results)
        print(f"{module:<12} max_rel_error={worst:.3e}")
        if args.verbose:
            for r in results:
                print(f"    {r.label:<36} {r.max_rel_error:.3e}")
        failed |= worst >= args.tol
    return 1 if failed else 0


def cmd_compare(args) -> int:
    rows = compare(args.runs, args.metric)
    print(format_table(rows))
    return 0


def cmd_shapes(args) -> int:
    model, _ = load_checkpoint(args.checkpoint)
    out = Path(args.out) if args.out else Path(args.checkpoint).with_name("shapes.csv")
    traces = write_shapes(model, out)
    names = list(traces)
    print(f"wrote {len(names)} adaptive layer traces to {out}")
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            gap = float(np.max(np.abs(traces[a] - traces[b])))
            print(f"  max |{a} - {b}| = {gap:.6g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adaptact", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run one experiment config")
    t.add_argument("--config", required=True)
    t.add_argument("--out", help="output directory (default: config's `out`, else ./run)")
    t.add_argument("--seed", type=_u64, help="override the config seed")
    t.add_argument("--epochs", type=int, help="override the config epoch count")
    t.set_defaults(func=cmd_train)

    g = sub.add_parser("gradcheck", help="finite-difference check of every analytic gradient")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--configs", type=int, default=100, help="random network configurations")
    g.add_argument("--points", type=int, default=100, help="random points per activation kind")
    g.add_argument("--tol", type=float, default=1e-4)
    g.set_defaults(func=cmd_gradcheck)

    c = sub.add_parser("compare", help="rank completed run directories")
    c.add_argument("runs", nargs="+")
    c.add_argument("--metric", choices=("area", "final_acc"), default="area")
    c.set_defaults(func=cmd_compare)

    s = sub.add_parser("shapes", help="dump per-layer activation traces from a checkpoint")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_shapes)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 2
    except (AdaptActError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
