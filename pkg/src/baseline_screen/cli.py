"""Command-line interface: ``analyze``, ``distribution``, ``simulate``, ``validate``."""

import argparse
import os
from pathlib import Path
import secrets
import sys
from typing import Optional, Sequence

import numpy as np

from .dataset import DatasetError, GroupingError, group_categorical, parse_csv, parse_dataset
from .distributions import curve_csv, expectation, unconditional_distribution
from .report import AnalysisConfig, analyze_dataset, format_text
from .simulation import simulate_figure6
from .tables import EnumerationCapExceeded

SEED_ENV = "BASELINE_SCREEN_SEED"

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INPUT = 2


class _InputError(Exception):
    pass


def _resolve_seed(value: Optional[int]) -> int:
    if value is not None:
        return value
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise _InputError(f"{SEED_ENV}={env!r} is not an integer") from None
    # Fresh entropy; always echoed in the output so the run can be repeated.
    return secrets.randbits(63)


def _parse_group(spec: str):
    names, sep, new_name = spec.partition("=")
    parts = tuple(n.strip() for n in names.split(",") if n.strip())
    if not sep or not new_name.strip() or len(parts) < 2:
        raise _InputError(f"--group expects 'name1,name2[,...]=new_name', got {spec!r}")
    return parts, new_name.strip()


def _read_text(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise _InputError(f"{path}: {exc.strerror}") from None


def _load_dataset(path: str, as_csv: bool):
    text = _read_text(path)
    if as_csv or (path.lower().endswith(".csv")):
        return parse_csv(text)
    return parse_dataset(text)


def _emit(text: str, output: Optional[str]) -> None:
    if output:
        Path(output).write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _cmd_analyze(args) -> int:
    ds = _load_dataset(args.dataset, args.csv)
    groupings = tuple(_parse_group(g) for g in args.group)
    for names, new_name in groupings:
        ds = group_categorical(ds, list(names), new_name)
    config = AnalysisConfig(
        sims=args.sims,
        seed=_resolve_seed(args.seed),
        direction=args.direction,
        statistic=args.statistic,
        tie_adjust=args.tie_adjust,
        threshold=args.threshold,
        rel_eps=args.rel_eps,
        equal_variance=not args.welch,
        allow_degenerate=args.allow_degenerate,
        workers=args.workers,
        groupings=groupings,
    )
    report = analyze_dataset(ds, config)
    _emit(report.to_json() if args.format == "json" else format_text(report), args.output)
    return EXIT_OK


def _cmd_validate(args) -> int:
    ds = _load_dataset(args.dataset, args.csv)
    for spec in args.group:
        names, new_name = _parse_group(spec)
        ds = group_categorical(ds, list(names), new_name)
    print(f"ok: {len(ds.variables)} variables, groups "
          + ", ".join(f"{g.label} (n={g.n})" for g in ds.groups))
    return EXIT_OK


def _cmd_distribution(args) -> int:
    d = unconditional_distribution(args.n1, args.n2, args.p, args.test, args.direction)
    _emit(curve_csv(d), args.output)
    target = sys.stderr if args.output is None else sys.stdout
    print(f"expectation {expectation(d):.6f} ({args.test}, {args.direction}, "
          f"n1={args.n1}, n2={args.n2}, p={args.p:g}, {len(d.pvalues)} atoms)", file=target)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    seed = _resolve_seed(args.seed)
    res = simulate_figure6(
        args.tables, args.n1, args.n2, args.p, args.sims, seed, methods, workers=args.workers
    )
    alphas = np.linspace(0.0, 1.0, args.grid + 1)
    lines = ["alpha," + ",".join(methods) + ",reference"]
    columns = [res.ecdf(m, alphas) for m in methods]
    for i, a in enumerate(alphas):
        lines.append(",".join([repr(float(a))] + [repr(float(c[i])) for c in columns] + [repr(float(a))]))
    _emit("\n".join(lines), args.output)
    target = sys.stderr if args.output is None else sys.stdout
    print(f"seed {seed}, {args.sims} simulations, {args.tables} tables", file=target)
    for m in methods:
        print(f"{m}: mean combined p {res.mean_combined[m]:.4f}, "
              f"mean 1-combined {res.mean_one_minus[m]:.4f}", file=target)
    return EXIT_OK


def _positive_int(text: str) -> int:
    value = int(float(text)) if "e" in text.lower() else int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="baseline-screen",
        description="Screen randomized-trial baseline tables for implausible balance or imbalance.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def dataset_args(p):
        p.add_argument("dataset", help="JSON dataset, or CSV with header name,k1,n1,k2,n2 ('-' for stdin)")
        p.add_argument("--csv", action="store_true", help="read the dataset as CSV")
        p.add_argument("--group", action="append", default=[], metavar="A,B=NEW",
                       help="merge dichotomous rows into one categorical variable (repeatable)")

    p = sub.add_parser("analyze", help="per-variable and combined p-values for one dataset")
    dataset_args(p)
    p.add_argument("--sims", type=_positive_int, default=1_000_000)
    p.add_argument("--seed", type=int, default=None,
                   help=f"RNG seed (falls back to ${SEED_ENV}, then a random seed that is reported)")
    p.add_argument("--direction", choices=["reverse", "standard", "both"], default="both")
    p.add_argument("--statistic", choices=["logsum", "stouffer"], default="logsum")
    p.add_argument("--allow-degenerate", action="store_true",
                   help="permit the Stouffer statistic despite p-values equal to 1")
    p.add_argument("--tie-adjust", action="store_true",
                   help="separate equal rounded means by one reporting unit")
    p.add_argument("--welch", action="store_true", help="unequal-variance t-test for continuous variables")
    p.add_argument("--threshold", type=float, default=1e-4)
    p.add_argument("--rel-eps", type=float, default=1e-7, help="relative tie tolerance")
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--format", choices=["json", "text"], default="json")
    p.add_argument("--output", "-o", default=None)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("validate", help="parse and validate a dataset only")
    dataset_args(p)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("distribution", help="exact CDF of a 2x2 p-value under independent binomials")
    p.add_argument("--n1", type=int, required=True)
    p.add_argument("--n2", type=int, required=True)
    p.add_argument("--p", type=float, required=True, help="common 'yes' probability")
    p.add_argument("--test", choices=["fisher", "chisq", "chisq_yates"], default="fisher")
    p.add_argument("--direction", choices=["standard", "naive-reverse", "reverse"], default="standard")
    p.add_argument("--output", "-o", default=None, help="CSV path (default stdout)")
    p.set_defaults(func=_cmd_distribution)

    p = sub.add_parser("simulate", help="combined p-values of independent 2x2 tables")
    p.add_argument("--tables", type=_positive_int, default=20)
    p.add_argument("--n1", type=int, default=100)
    p.add_argument("--n2", type=int, default=100)
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--sims", type=_positive_int, default=100_000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--methods", default="stouffer,fisher,brown")
    p.add_argument("--grid", type=_positive_int, default=1000, help="number of CDF grid intervals")
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--output", "-o", default=None, help="CSV path (default stdout)")
    p.set_defaults(func=_cmd_simulate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DatasetError as exc:
        for line in exc.errors:
            print(f"error: {line}", file=sys.stderr)
        return EXIT_INPUT
    except (_InputError, GroupingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, EnumerationCapExceeded) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
