"""Command line entry point.

Exit codes: 0 success, 1 invalid input or configuration, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NUMERICAL = 2
HELP_WIDTH = 80
VERIFY_TOL = 1e-7


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _formatter(prog):
    return argparse.HelpFormatter(prog, width=HELP_WIDTH)


def _common(seed=True, config=False, out=False, out_help="output path"):
    p = _Parser(add_help=False, formatter_class=_formatter)
    if seed:
        p.add_argument("--seed", type=int, default=None, help="seed overriding the config (default: config or 0)")
    if config:
        p.add_argument("--config", required=True, help="flat key = value experiment config")
    if out:
        p.add_argument("--out", required=True, help=out_help)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="eqtensor", description="Equivariant tensor maps: bases, audits and experiments.",
                     formatter_class=_formatter)
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("basis", help="list an isotropic tensor basis", formatter_class=_formatter,
                       parents=[_common(seed=False)])
    p.add_argument("--order", type=int, required=True, help="tensor order k")
    p.add_argument("--parity", choices=["+", "-"], default="+", help="tensor parity")
    p.add_argument("--metric", default="euclidean:3",
                   help="euclidean:D, minkowski:S,D or symplectic:D (default: euclidean:3)")
    p.add_argument("--tensors", action="store_true", help="also print every basis tensor's components")
    p.add_argument("--out", help="write the tensors as concatenated EQT1 records")

    p = sub.add_parser("verify", help="run the equivariance audit suite", formatter_class=_formatter,
                       parents=[_common()])
    p.add_argument("--group", choices=["o3", "lorentz", "sp4", "all"], default="all", help="group to audit")
    p.add_argument("--trials", type=int, default=32, help="random group elements per model (default: 32)")

    p = sub.add_parser("gen", help="generate a dataset file", formatter_class=_formatter,
                       parents=[_common(config=True, out=True, out_help="dataset file to write")])

    p = sub.add_parser("train", help="train a model and write checkpoint and metrics",
                       formatter_class=_formatter,
                       parents=[_common(config=True, out=True, out_help="run directory")])
    p.add_argument("--data", help="dataset file from gen (default: generate from the config)")
    p.add_argument("--model", help="model name overriding the config")
    p.add_argument("--epochs", type=int, help="epoch count overriding the config")
    p.add_argument("--quiet", action="store_true", help="do not print per-epoch progress")

    p = sub.add_parser("eval", help="score a checkpoint on a dataset", formatter_class=_formatter)
    p.add_argument("--checkpoint", required=True, help="checkpoint.eqm written by train")
    p.add_argument("--data", required=True, help="dataset file from gen")
    p.add_argument("--split", choices=["train", "val", "test"], default="test", help="split to score")

    p = sub.add_parser("report", help="summarize metrics CSV files", formatter_class=_formatter)
    p.add_argument("runs", nargs="+", help="run directories or metrics.csv files")
    p.add_argument("--out", help="also write the summary table here")
    return parser


def _fmt_perm(p) -> str:
    return "(" + ",".join(str(i + 1) for i in p) + ")"


def cmd_basis(args) -> int:
    from .isotropic import isotropic_basis
    from .tensor_core import MetricSignature, to_bytes

    metric = MetricSignature.parse(args.metric)
    if args.order < 0:
        raise ValueError("--order must be non-negative")
    basis = isotropic_basis(args.order, 1 if args.parity == "+" else -1, metric)
    print(f"{len(basis)} elements")
    for sigma, t in basis.elements:
        print(_fmt_perm(sigma))
        if args.tensors:
            print("  " + " ".join(f"{x:g}" for x in t.components))
    if args.out:
        Path(args.out).write_bytes(b"".join(to_bytes(t) for t in basis.tensors))
    return EXIT_OK


def _verify_targets(group: str, rng):
    from .models import EigenEquivariantModel, VecToTensorModel, enumerate_general_basis
    from .nn import DenseNet, PermEquivariantNet
    from .experiments.audit import group_metric
    from .experiments.sparse import LearnedH

    metric = group_metric(group)
    n = 3
    probe = VecToTensorModel(n, (1, 2, 3), metric, None)
    probe.coeff_net = DenseNet([probe.n_features, 16, 16, probe.n_terms], "gelu", rng)
    yield "vec_to_tensor", probe
    if group != "o3":
        return
    yield "eigen", EigenEquivariantModel(3, PermEquivariantNet((1, 8, 8, 1), "gelu", rng))
    yield "learned_h_full", LearnedH("full", 12, 3, (16, 16), "relu", rng)
    yield "learned_h_diag", LearnedH("diag", 12, 3, (16, 16), "relu", rng)
    maps = enumerate_general_basis([(1, 1), (2, 1)], (2, 1), 2, 3)
    yield "general_basis", (maps, rng.standard_normal(len(maps)))


def cmd_verify(args) -> int:
    from .experiments.audit import equivariance_audit

    if args.trials < 1:
        raise ValueError("--trials must be positive")
    seed = 0 if args.seed is None else args.seed
    groups = ["o3", "lorentz", "sp4"] if args.group == "all" else [args.group]
    worst = 0.0
    for group in groups:
        rng = np.random.default_rng(seed)
        for name, target in _verify_targets(group, rng):
            value = equivariance_audit(target, group, args.trials, rng)
            worst = max(worst, value)
            status = "ok" if value < VERIFY_TOL else "FAIL"
            print(f"{name:<16} {group:<8} {value:.3e} {status}")
    if not worst < VERIFY_TOL:
        print(f"max defect {worst:.3e} exceeds {VERIFY_TOL:g}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _load_cfg(args, **extra):
    from .experiments.io import load_config

    overrides = {k: v for k, v in extra.items() if v is not None}
    if args.seed is not None:
        overrides["seed"] = args.seed
    return load_config(args.config, overrides)


def cmd_gen(args) -> int:
    from .experiments.io import write_dataset
    from .experiments.training import generate_dataset

    cfg = _load_cfg(args)
    ds = generate_dataset(cfg)
    write_dataset(args.out, ds)
    counts = ", ".join(f"{k} {next(iter(v.values())).shape[0]}" for k, v in ds.splits.items())
    print(f"wrote {args.out}: {ds.tag}, d={ds.d}, {counts}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .experiments.io import read_dataset
    from .experiments.training import train_experiment

    cfg = _load_cfg(args, model=args.model, epochs=args.epochs)
    data = read_dataset(args.data) if args.data else None
    log = None if args.quiet else (lambda msg: print(msg, flush=True))
    result = train_experiment(cfg, args.out, data, log=log)
    task = result["task"]
    print(f"test {task.metric_name} {result[task.metric_name]:.6g}")
    for name, value in task.baselines("test").items():
        print(f"test {name} {value:.6g}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .experiments.io import read_dataset
    from .experiments.training import eval_experiment

    metrics = eval_experiment(args.checkpoint, read_dataset(args.data), args.split)
    for name, value in metrics.items():
        print(f"{args.split} {name} {value:.6g}")
    return EXIT_OK


def cmd_report(args) -> int:
    from .experiments.io import read_metrics

    lines = [f"{'run':<32} {'metric':<14} {'value':>14}"]
    for run in args.runs:
        path = Path(run)
        csv_path = path / "metrics.csv" if path.is_dir() else path
        if not csv_path.exists():
            raise FileNotFoundError(f"no metrics file at {csv_path}")
        label = str(path if path.is_dir() else path.parent)
        for epoch, split, metric, value in read_metrics(csv_path):
            if split == "test":
                lines.append(f"{label:<32} {metric:<14} {value:>14.6g}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text)
    return EXIT_OK


COMMANDS = {
    "basis": cmd_basis,
    "verify": cmd_verify,
    "gen": cmd_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "report": cmd_report,
}


def run(argv=None) -> int:
    from .experiments.io import ConfigError
    from .experiments.training import NumericalError

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ValueError, FileNotFoundError, IsADirectoryError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except RuntimeError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
