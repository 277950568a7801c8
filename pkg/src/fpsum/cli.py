"""Command-line front end: ``fpsum <sum|verify|bounds|experiment|coverage> ...``.

Every run first prints a header line with the version, subcommand and the
fully resolved flag set, which is enough to reproduce it.  Exit status is 0
on success, 1 for usage or input errors and 2 when a check fails.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import gmpy2

from . import __version__
from . import bounds as B
from . import experiments as X
from .algorithms import compensated_sum, general_sum, shifted_sum
from .data import choose_shift
from .fpmodel import is_representable, oracle_bits, parse_format, parse_mode, to_wide
from .sumtree import make_tree

EXIT_OK, EXIT_USAGE, EXIT_FAILED = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _ints(text: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(v) for v in text.split(",") if v)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("sizes must be positive")
    return vals


def _names(choices):
    def parse(text):
        vals = tuple(v for v in text.split(",") if v)
        bad = [v for v in vals if v not in choices]
        if bad or not vals:
            raise argparse.ArgumentTypeError(f"choose from {', '.join(choices)}")
        return vals

    return parse


def _prob(text: str) -> float:
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError("probabilities must lie in (0, 1)")
    return v


def _grid(text: str):
    try:
        return X.parse_grid(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


TREES = ("sequential", "pairwise", "random")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fpsum", description="Floating-point summation error laboratory.")
    p.add_argument("--version", action="version", version=f"fpsum {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, fmt="binary16"):
        sp.add_argument("--fmt", default=fmt, help="binary16|binary32|binary64|custom:p=..,emin=..,emax=..")
        sp.add_argument("--seed", type=int, default=1)
        sp.add_argument("--out", help="machine-readable output file")

    sp = sub.add_parser("sum", help="sum one input file and report the error")
    common(sp)
    sp.add_argument("--input", required=True, help="one decimal or hex-float literal per line ('-' for stdin)")
    sp.add_argument("--algo", choices=("general", "shifted", "compensated"), default="general")
    sp.add_argument("--tree", choices=TREES, default="sequential")
    sp.add_argument("--shift", default="auto", help="auto or a literal")
    sp.add_argument("--mode", choices=("nearest", "stochastic"), default="nearest")

    sp = sub.add_parser("verify", help="check the exact error expressions against the oracle")
    common(sp)
    sp.add_argument("--n", type=_ints, default=(2, 3, 4, 5, 8, 32, 64), help="comma-separated sizes")
    sp.add_argument("--trials", type=int, default=1000)
    sp.add_argument("--tree", type=_names(TREES), default=TREES, help="comma-separated tree kinds")
    sp.add_argument("--mode", choices=("nearest", "stochastic"), default="nearest")
    sp.add_argument("--jobs", type=int, default=0, help="worker processes (0: all cores)")

    sp = sub.add_parser("bounds", help="evaluate every bound for one input file")
    common(sp)
    sp.add_argument("--input", required=True)
    sp.add_argument("--algo", choices=("general", "shifted", "compensated", "all"), default="all")
    sp.add_argument("--tree", choices=TREES, default="sequential")
    sp.add_argument("--shift", default="auto")
    sp.add_argument("--mode", choices=("nearest", "stochastic"), default="nearest",
                    help="stochastic doubles u")
    sp.add_argument("--delta", type=_prob, default=0.01)
    sp.add_argument("--eta", type=_prob, default=0.01)

    sp = sub.add_parser("experiment", help="figures and bound sweeps")
    common(sp, fmt=None)
    sp.add_argument("--figure", required=True,
                    choices=("fig1", "fig2", "fig3", "fuzz", "truncation", "fkcheck"))
    sp.add_argument("--panel", choices=("left", "right", "both"), default="left",
                    help="left: uniform data, right: normal data")
    sp.add_argument("--grid", type=_grid, help="start:step:stop")
    sp.add_argument("--m", type=float, help="offset of the uniform data")
    sp.add_argument("--delta", type=_prob, default=0.01)
    sp.add_argument("--eta", type=_prob, default=0.01, help="fkcheck only")
    sp.add_argument("--trials", type=int, help="fuzz / truncation / fkcheck sample size")
    sp.add_argument("--n", type=_ints, help="sizes for fuzz / truncation / fkcheck")
    sp.add_argument("--svg", help="chart path (figures; default: --out with .svg)")
    sp.add_argument("--jobs", type=int, default=0)

    sp = sub.add_parser("coverage", help="Monte-Carlo coverage of the probabilistic bounds")
    common(sp)
    sp.add_argument("--n", type=_ints, default=(256, 1024))
    sp.add_argument("--tree", type=_names(("sequential", "pairwise")), default=("sequential", "pairwise"))
    sp.add_argument("--trials", type=int, default=10_000)
    sp.add_argument("--delta", type=_prob, default=0.005)
    sp.add_argument("--eta", type=_prob, default=0.005)
    sp.add_argument("--data", choices=("uniform", "normal"), default="uniform")
    sp.add_argument("--jobs", type=int, default=0)
    return p


def header(args) -> str:
    flags = []
    for key, val in sorted(vars(args).items()):
        if key == "command" or val is None:
            continue
        if isinstance(val, tuple):
            val = (":" if key == "grid" else ",").join(map(str, val))
        flags.append(f"--{key.replace('_', '-')} {val}")
    return f"# fpsum {__version__} {args.command} " + " ".join(flags)


def read_input(path: str, fmt) -> list:
    """Literals from the first column of each non-blank, non-comment line."""
    text = sys.stdin.read() if path == "-" else Path(path).read_text()
    lits = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            lits.append(line.split(",")[0].strip())
    if not lits:
        raise UsageError("input holds no values")
    bits = oracle_bits(fmt, len(lits)) + 64
    vals = []
    for i, lit in enumerate(lits, start=1):
        try:
            v = to_wide(lit, bits)
        except (ValueError, ArithmeticError) as exc:
            raise UsageError(f"line {i}: cannot parse {lit!r}") from exc
        if not is_representable(v, fmt):
            raise UsageError(f"value {i} ({lit}) is not representable in {fmt}")
        vals.append(v)
    return vals


def _shift(args, vals, fmt):
    if args.shift == "auto":
        return choose_shift([float(v) for v in vals], fmt) if fmt.precision_bits <= 53 else None
    c = to_wide(args.shift, oracle_bits(fmt) + 64)
    if not is_representable(c, fmt):
        raise UsageError(f"shift {args.shift} is not representable in {fmt}")
    return c


def _num(v) -> str:
    """Shortest round-trip text for a float, full oracle digits otherwise."""
    if isinstance(v, float):
        return repr(v)
    f = float(v)
    return repr(f) if gmpy2.mpfr(f) == v else str(v)


def cmd_sum(args, out) -> int:
    fmt = parse_format(args.fmt)
    vals = read_input(args.input, fmt)
    n = len(vals)
    mode = parse_mode(args.mode, args.seed)
    tree = make_tree(args.tree, n, args.seed)
    if args.algo == "general":
        tr = general_sum(tree, vals, fmt, mode)
    elif args.algo == "shifted":
        c = _shift(args, vals, fmt)
        if c is None:
            raise UsageError("give --shift explicitly for formats wider than binary64")
        tr = shifted_sum(tree, vals, c, fmt, mode)
    else:
        tr = compensated_sum(vals, fmt, mode)
    e = tr.e_n
    with gmpy2.context(precision=tr.oracle_bits):
        rel = abs(e) / abs(tr.exact_result) if tr.exact_result != 0 else gmpy2.nan()
    lines = [
        ("n", n),
        ("computed", _num(tr.result)),
        ("exact", _num(tr.exact_result)),
        ("error", _num(e)),
        ("relative_error", repr(float(rel))),
    ]
    if tr.shift is not None:
        lines.append(("shift", _num(tr.shift)))
    for k, v in lines:
        print(f"{k} = {v}", file=out)
    if args.out:
        Path(args.out).write_text(tr.to_json() + "\n")
    return EXIT_OK


def _print_table(header_row, rows, out, limit=None):
    print(",".join(header_row), file=out)
    for r in rows[:limit]:
        print(",".join(_cell(v) for v in r), file=out)


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write(path, header_row, rows):
    if path:
        Path(path).write_text(X.rows_to_csv(rows, header_row))


def cmd_verify(args, out) -> int:
    rows = X.verify_table(ns=args.n, trials=args.trials, fmt=args.fmt, seed=args.seed,
                          mode=args.mode, trees=args.tree, jobs=args.jobs)
    _print_table(X.VERIFY_HEADER, rows, out)
    _write(args.out, X.VERIFY_HEADER, rows)
    bad = [r for r in rows if not r[-1]]
    print(f"{len(rows) - len(bad)}/{len(rows)} rows within tolerance", file=out)
    return EXIT_FAILED if bad else EXIT_OK


BOUNDS_HEADER = ("bound_id", "value", "valid")


def cmd_bounds(args, out) -> int:
    fmt = parse_format(args.fmt)
    if fmt.precision_bits > 53:
        raise UsageError("bounds are evaluated in float64; use a format no wider than binary64")
    x = [float(v) for v in read_input(args.input, fmt)]
    n = len(x)
    mode = parse_mode(args.mode, args.seed)
    tree = make_tree(args.tree, n, args.seed)
    d, e = args.delta, args.eta
    reps = []
    if args.algo in ("general", "all"):
        s = B.node_sums(x, tree)
        reps += [
            B.det_bound_general(x, tree, fmt, mode=mode),
            B.prob_bound_first_order(s, fmt, d, mode),
            B.prob_bound_model1(s, tree.height, n, fmt, d, e, mode),
            B.prob_bound_model2(s, tree.height, n, fmt, d, e, mode),
        ]
    if args.algo in ("shifted", "all"):
        c = float(_shift(args, x, fmt))
        if args.tree == "sequential":
            reps += [B.shifted_seq_det_bound(x, c, fmt, mode), B.shifted_seq_prob_bound(x, c, fmt, d, mode)]
        reps += [B.shifted_gen_prob_bound(x, c, tree, fmt, d, e, m, mode) for m in (1, 2)]
    if args.algo in ("compensated", "all"):
        reps += [
            B.comp_first_order_bound(x, fmt, mode),
            B.comp_second_order_det_bound(x, fmt, mode),
            B.comp_prob_bound(x, fmt, d, 1, mode),
            B.comp_prob_bound(x, fmt, d, 2, mode),
        ]
    rows = [(r.bound_id, float(r.value), r.valid) for r in reps]
    _print_table(BOUNDS_HEADER, rows, out)
    _write(args.out, BOUNDS_HEADER, rows)
    return EXIT_OK


def _svg_path(args, suffix=""):
    if args.svg:
        p = Path(args.svg)
        return p.with_name(p.stem + suffix + p.suffix) if suffix else p
    if args.out:
        p = Path(args.out)
        return p.with_name(p.stem + suffix + ".svg")
    return None


def _out_path(args, suffix=""):
    if not args.out:
        return None
    p = Path(args.out)
    return p.with_name(p.stem + suffix + p.suffix) if suffix else p


def _run_panel(job):
    figure, panel, overrides = job
    return X.run_figure(X.figure_config(figure, panel, **overrides))


def cmd_experiment(args, out) -> int:
    if args.figure in ("fig1", "fig2", "fig3"):
        panels = ("left", "right") if args.panel == "both" else (args.panel,)
        overrides = dict(fmt=args.fmt, grid=args.grid, m=args.m, seed=args.seed, delta_fail=args.delta)
        results = X.pmap(_run_panel, [(args.figure, p, overrides) for p in panels], args.jobs)
        for panel, rows in zip(panels, results):
            suffix = f"-{panel}" if len(panels) > 1 else ""
            text = X.rows_to_csv(rows)
            if args.out:
                _out_path(args, suffix).write_text(text)
                _svg_path(args, suffix).write_text(X.svg_chart(text, f"{args.figure} {panel}"))
            elif args.svg:
                _svg_path(args, suffix).write_text(X.svg_chart(text, f"{args.figure} {panel}"))
            print(f"{args.figure} {panel}: {len(rows)} rows", file=out)
            _figure_summary(rows, out)
        return EXIT_OK
    fmt = args.fmt or "binary16"
    if args.figure == "fuzz":
        kw = {"ns": args.n} if args.n else {}
        rows = X.det_fuzz(cases=args.trials or 10_000, fmt=fmt, seed=args.seed, jobs=args.jobs, **kw)
        _print_table(X.FUZZ_HEADER, rows, out)
        _write(args.out, X.FUZZ_HEADER, rows)
        return EXIT_FAILED if any(r[4] for r in rows) else EXIT_OK
    if args.figure == "truncation":
        kw = {"ns": args.n} if args.n else {}
        rows = X.truncation_sweep(trials=args.trials or 200, fmt=fmt, seed=args.seed, jobs=args.jobs, **kw)
        _print_table(X.TRUNCATION_HEADER, rows, out)
        _write(args.out, X.TRUNCATION_HEADER, rows)
        return EXIT_OK if all(r[-1] for r in rows) else EXIT_FAILED
    res = X.fk_check(n=(args.n or (256,))[0], trials=args.trials or 10_000, eta_fail=args.eta,
                     fmt=fmt, seed=args.seed)
    keys = tuple(res)
    _print_table(keys, [tuple(res[k] for k in keys)], out)
    _write(args.out, keys, [tuple(res[k] for k in keys)])
    return EXIT_OK if res["hold_count"] >= res["target"] * res["trials"] else EXIT_FAILED


def _figure_summary(rows, out):
    by_alg: dict[str, list[float]] = {}
    for r in rows:
        if not math.isnan(r.rel_error):
            by_alg.setdefault(r.algorithm, []).append(r.rel_error)
    for alg, errs in by_alg.items():
        print(f"  {alg}: max rel_error {max(errs):.3e}, median {sorted(errs)[len(errs) // 2]:.3e}", file=out)


def cmd_coverage(args, out) -> int:
    cfg = X.CoverageConfig(ns=args.n, trees=args.tree, trials=args.trials, fmt=args.fmt, data=args.data,
                           delta_fail=args.delta, eta_fail=args.eta, seed=args.seed)
    rows = X.run_coverage(cfg, jobs=args.jobs)
    _print_table(X.COVERAGE_HEADER, rows, out)
    _write(args.out, X.COVERAGE_HEADER, rows)
    return EXIT_OK if all(r[-1] for r in rows) else EXIT_FAILED


COMMANDS = {
    "sum": cmd_sum,
    "verify": cmd_verify,
    "bounds": cmd_bounds,
    "experiment": cmd_experiment,
    "coverage": cmd_coverage,
}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", None) == 0:
        args.jobs = os.cpu_count() or 1
    print(header(args), file=out)
    try:
        return COMMANDS[args.command](args, out)
    except (UsageError, ValueError, OSError) as exc:
        print(f"fpsum: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
