"""Desk-scale reproductions of the summation experiments, plus Monte-Carlo studies.

Figures
-------
``fig1``  plain vs shifted sequential summation (binary64), shifted-bound column
``fig2``  plain, shifted and compensated summation (binary64)
``fig3``  plain vs compensated summation (binary16), compensated-bound column

Each figure has a ``left`` panel (uniform data, ``m = 1e4`` for fig1/fig2 and
``m = 0`` for fig3) and a ``right`` panel (normal data).  One data vector of
the largest grid size is drawn and every grid point uses its leading ``n``
entries.  binary64 runs use native float64 arithmetic; narrower formats run in
the vectorised engine with IEEE gradual underflow.

Besides the figures this module runs the coverage study for the probabilistic
bounds, the deterministic-bound fuzz and the expression verification table.
All of them are pure functions of their configuration and seed.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from pathlib import Path

import numpy as np

from . import bounds as B
from .algorithms import compensated_sum, general_sum, shifted_sum
from .batch import batch_compensated, batch_general, batch_sequential, batch_shifted
from .data import ExactPrefix, choose_shift, gen_fuzz, gen_normal, gen_uniform_shifted
from .expressions import (
    comp_expr_first,
    comp_first_order,
    comp_second_order,
    comp_expr_second,
    evaluate_all,
    tolerance,
)
from .fpmodel import BINARY64, NearestEven, StochasticNearness, parse_format
from .sumtree import make_tree, sequential_tree

__all__ = [
    "COVERAGE_HEADER",
    "CSV_HEADER",
    "CoverageConfig",
    "ExperimentConfig",
    "FUZZ_HEADER",
    "ResultRow",
    "TRUNCATION_HEADER",
    "VERIFY_HEADER",
    "choose_shift",
    "det_fuzz",
    "figure_config",
    "fk_check",
    "gen_normal",
    "gen_uniform_shifted",
    "order_scaling",
    "parse_grid",
    "pmap",
    "rows_to_csv",
    "run_coverage",
    "run_figure",
    "svg_chart",
    "truncation_sweep",
    "verify_table",
    "write_outputs",
]

CSV_HEADER = ("n", "algorithm", "rel_error", "bound_id", "bound_value", "fmt", "seed", "c")


def pmap(fn, items, jobs: int = 1) -> list:
    """``[fn(i) for i in items]``, optionally on a process pool; order is kept."""
    items = list(items)
    if jobs is None or jobs <= 0:
        jobs = os.cpu_count() or 1
    if jobs == 1 or len(items) < 2:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))


def _flatten(parts) -> list:
    return [row for part in parts for row in part]


def parse_grid(text: str) -> tuple[int, int, int]:
    """``"start:step:stop"`` (inclusive stop, MATLAB style)."""
    try:
        start, step, stop = (int(float(v)) for v in text.split(":"))
    except ValueError as exc:
        raise ValueError(f"grid must look like start:step:stop, got {text!r}") from exc
    if start < 1 or step < 1 or stop < start:
        raise ValueError(f"empty or invalid grid {text!r}")
    return start, step, stop


@dataclass(frozen=True)
class ExperimentConfig:
    figure: str
    fmt: str = "binary64"
    data: str = "uniform"
    m: float = 1e4
    grid: tuple[int, int, int] = (10, 1000, 100_000)
    seed: int = 1
    delta_fail: float = 0.01
    algorithms: tuple[str, ...] = ("plain", "shifted")
    bound: str | None = None  # algorithm whose rows carry the bound column

    @property
    def ns(self) -> list[int]:
        start, step, stop = self.grid
        return list(range(start, stop + 1, step))


_FIGURES = {
    "fig1": dict(fmt="binary64", grid=(10, 1000, 100_000), algorithms=("plain", "shifted"), bound="shifted"),
    "fig2": dict(fmt="binary64", grid=(10, 1000, 100_000), algorithms=("plain", "shifted", "compensated"), bound=None),
    "fig3": dict(fmt="binary16", grid=(10, 1000, 60_000), algorithms=("plain", "compensated"), bound="compensated"),
}


def figure_config(figure: str, panel: str = "left", **overrides) -> ExperimentConfig:
    """Default configuration of one figure panel; keyword overrides win."""
    if figure not in _FIGURES:
        raise ValueError(f"unknown figure {figure!r}")
    if panel not in ("left", "right"):
        raise ValueError("panel must be left or right")
    base = dict(_FIGURES[figure])
    base["data"] = "uniform" if panel == "left" else "normal"
    base["m"] = 0.0 if figure == "fig3" else 1e4
    base.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(figure=figure, **base)


@dataclass(frozen=True)
class ResultRow:
    n: int
    algorithm: str
    rel_error: float
    bound_id: str = ""
    bound_value: float | None = None
    fmt: str = ""
    seed: int = 0
    c: float | None = None


def _data(cfg: ExperimentConfig, n: int) -> np.ndarray:
    if cfg.data == "uniform":
        return gen_uniform_shifted(cfg.m, n, cfg.seed, cfg.fmt)
    if cfg.data == "normal":
        return gen_normal(n, cfg.seed, cfg.fmt)
    raise ValueError(f"unknown data generator {cfg.data!r}")


def _native_compensated_prefixes(x: np.ndarray) -> np.ndarray:
    out = np.empty(x.size)
    s, c = 0.0, 0.0
    vals = x.tolist()
    s = vals[0]
    out[0] = s
    for k in range(1, len(vals)):
        y = vals[k] - c
        t = s + y
        c = (t - s) - y
        s = t
        out[k] = s
    return out


def _shifted_at(x: np.ndarray, c: float, fmt) -> float:
    n = x.size
    if fmt == BINARY64:
        y = x - c
        t = float(np.cumsum(y)[-1])  # cumsum is strictly left to right
        return t + n * c
    return float(batch_shifted(sequential_tree(n), x, c, fmt, subnormal=True).computed[0])


def run_figure(cfg: ExperimentConfig) -> list[ResultRow]:
    """Relative errors (and bound column) for every grid point of one panel."""
    fmt = parse_format(cfg.fmt)
    ns = cfg.ns
    x_all = _data(cfg, ns[-1])
    exact = ExactPrefix(x_all)
    prefix = {}
    if "plain" in cfg.algorithms:
        if fmt == BINARY64:
            prefix["plain"] = np.cumsum(x_all)
        else:
            prefix["plain"] = batch_sequential(x_all, fmt, subnormal=True).computed[0]
    if "compensated" in cfg.algorithms:
        if fmt == BINARY64:
            prefix["compensated"] = _native_compensated_prefixes(x_all)
        else:
            prefix["compensated"] = batch_compensated(x_all, fmt, prefixes=True, subnormal=True).computed[0]
    rows = []
    for n in ns:
        x = x_all[:n]
        c = choose_shift(x, fmt)
        for alg in cfg.algorithms:
            if alg == "shifted":
                value = _shifted_at(x, c, fmt)
            else:
                value = float(prefix[alg][n - 1])
            rel = exact.rel_error(n, value)
            bound_id, bound_value = "", None
            if cfg.bound == alg and not math.isnan(rel):
                if cfg.figure == "fig1":
                    bound_id, bound_value = "shifted_seq_prob_rel", B.relative_bound_fig1(x, c, fmt, cfg.delta_fail)
                else:
                    bound_id, bound_value = "comp_first_order_prob_rel", B.relative_bound_fig3(x, fmt, cfg.delta_fail)
            rows.append(ResultRow(n, alg, rel, bound_id, bound_value, fmt.name, cfg.seed, c if alg == "shifted" else None))
    return rows


def _fmt_float(v) -> str:
    if v is None:
        return ""
    return repr(float(v))


def rows_to_csv(rows, header=CSV_HEADER) -> str:
    """CSV text; floats use the shortest round-trip repr."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        vals = r if isinstance(r, tuple) and not isinstance(r, ResultRow) else _row_values(r)
        w.writerow(["" if v is None else (_fmt_float(v) if isinstance(v, float) else v) for v in vals])
    return buf.getvalue()


def _row_values(r):
    if isinstance(r, ResultRow):
        return (r.n, r.algorithm, r.rel_error, r.bound_id, r.bound_value, r.fmt, r.seed, r.c)
    return tuple(r)


# --- SVG -------------------------------------------------------------------------

_COLORS = {"plain": "#2ca02c", "shifted": "#1f77b4", "compensated": "#d62728", "bound": "#ff7f0e"}


def svg_chart(csv_text: str, title: str = "") -> str:
    """Log-scale line chart of a figure CSV; a pure function of the CSV text."""
    series: dict[str, list[tuple[int, float]]] = {}
    for row in csv.DictReader(io.StringIO(csv_text)):
        n = int(row["n"])
        rel = float(row["rel_error"]) if row["rel_error"] else math.nan
        if math.isfinite(rel) and rel > 0:
            series.setdefault(row["algorithm"], []).append((n, rel))
        if row["bound_value"]:
            series.setdefault(row["bound_id"] or "bound", []).append((n, float(row["bound_value"])))
    W, H, L, R, T, Bm = 640, 420, 70, 150, 40, 50
    pts = [p for s in series.values() for p in s]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">']
    out.append(f'<rect width="{W}" height="{H}" fill="white"/>')
    out.append(f'<text x="{W // 2}" y="20" text-anchor="middle" font-size="13">{title}</text>')
    if not pts:
        out.append("</svg>")
        return "\n".join(out) + "\n"
    nmin, nmax = min(p[0] for p in pts), max(p[0] for p in pts)
    lo = math.floor(math.log10(min(p[1] for p in pts)))
    hi = math.ceil(math.log10(max(p[1] for p in pts)))
    hi = max(hi, lo + 1)
    nspan = max(nmax - nmin, 1)

    def px(n):
        return L + (W - L - R) * (n - nmin) / nspan

    def py(v):
        return T + (H - T - Bm) * (hi - math.log10(v)) / (hi - lo)

    out.append(f'<rect x="{L}" y="{T}" width="{W - L - R}" height="{H - T - Bm}" fill="none" stroke="black"/>')
    for d in range(lo, hi + 1):
        y = py(10.0**d)
        out.append(f'<line x1="{L}" y1="{y:.1f}" x2="{W - R}" y2="{y:.1f}" stroke="#ddd"/>')
        out.append(f'<text x="{L - 6}" y="{y + 4:.1f}" text-anchor="end">1e{d}</text>')
    for n in (nmin, (nmin + nmax) // 2, nmax):
        out.append(f'<text x="{px(n):.1f}" y="{H - Bm + 16}" text-anchor="middle">{n}</text>')
    out.append(f'<text x="{(L + W - R) // 2}" y="{H - 12}" text-anchor="middle">n</text>')
    for i, (name, s) in enumerate(sorted(series.items())):
        color = _COLORS.get(name, _COLORS["bound"])
        path = " ".join(f"{px(n):.1f},{py(v):.1f}" for n, v in sorted(s))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{path}"/>')
        ly = T + 14 * i + 8
        out.append(f'<line x1="{W - R + 10}" y1="{ly}" x2="{W - R + 28}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{W - R + 32}" y="{ly + 4}">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_outputs(rows, out: str | Path, svg: str | Path | None = None, title: str = "") -> None:
    text = rows_to_csv(rows)
    Path(out).write_text(text)
    if svg:
        Path(svg).write_text(svg_chart(text, title))


# --- coverage ------------------------------------------------------------------------

COVERAGE_HEADER = ("bound_id", "n", "tree", "trials", "hold_count", "target", "worst_ratio", "pass")


@dataclass(frozen=True)
class CoverageConfig:
    ns: tuple[int, ...] = (256, 1024)
    trees: tuple[str, ...] = ("sequential", "pairwise")
    trials: int = 10_000
    fmt: str = "binary16"
    data: str = "uniform"
    delta_fail: float = 0.005
    eta_fail: float = 0.005
    seed: int = 1


def _coverage_data(cfg: CoverageConfig, n: int) -> np.ndarray:
    if cfg.data == "uniform":
        return gen_uniform_shifted(0.0, n, cfg.seed, cfg.fmt, lattice=True)
    if cfg.data == "normal":
        return gen_normal(n, cfg.seed, cfg.fmt, lattice=True)
    raise ValueError(f"unknown data generator {cfg.data!r}")


def _hold(err, report):
    """(hold count, max |e| / bound); an invalid bound holds nowhere."""
    if not report.valid:
        return 0, math.inf
    err = np.abs(err)
    hold = int(np.count_nonzero(err <= report.value))
    top = float(err.max())
    if report.value > 0:
        return hold, top / report.value
    return hold, (0.0 if top == 0 else math.inf)


def run_coverage(cfg: CoverageConfig = CoverageConfig(), jobs: int = 1) -> list[tuple]:
    """Fraction of stochastic-rounding trials in which each probabilistic bound holds.

    The data vector is fixed per ``n``; trials differ only in their rounding
    draws.  Bounds use ``u -> 2u``.  Target is ``1 - (delta + eta) - 0.01``
    for two-probability bounds and ``1 - delta - 0.01`` otherwise.
    """
    return _flatten(pmap(partial(_coverage_one, cfg), cfg.ns, jobs))


def _coverage_one(cfg: CoverageConfig, n: int) -> list[tuple]:
    fmt = parse_format(cfg.fmt)
    d, e = cfg.delta_fail, cfg.eta_fail
    rows = []
    x = _coverage_data(cfg, n)
    c = choose_shift(x, fmt, lattice=True)
    for ti, tree_kind in enumerate(cfg.trees):
        tree = make_tree(tree_kind, n, cfg.seed)
        mode = StochasticNearness((cfg.seed, n, ti, 0))
        sr = batch_general(tree, x, fmt, mode, trials=cfg.trials)
        s = B.node_sums(x, tree)
        h = tree.height
        reps = [
            (B.prob_bound_first_order(s, fmt, d, mode), 1 - d),
            (B.prob_bound_model1(s, h, n, fmt, d, e, mode), 1 - d - e),
            (B.prob_bound_model2(s, h, n, fmt, d, e, mode), 1 - d - e),
        ]
        for rep, target in reps:
            rows.append(_cov_row(rep, n, tree_kind, cfg.trials, _hold(sr.errors, rep), target))
        mode = StochasticNearness((cfg.seed, n, ti, 1))
        sh = batch_shifted(tree, x, c, fmt, mode, trials=cfg.trials)
        reps = []
        if tree_kind == "sequential":
            reps.append((B.shifted_seq_prob_bound(x, c, fmt, d, mode), 1 - d))
        reps += [
            (B.shifted_gen_prob_bound(x, c, tree, fmt, d, e, 2, mode), 1 - d - e),
            (B.shifted_gen_prob_bound(x, c, tree, fmt, d, e, 1, mode), 1 - d - e),
        ]
        for rep, target in reps:
            rows.append(_cov_row(rep, n, tree_kind, cfg.trials, _hold(sh.errors, rep), target))
    mode = StochasticNearness((cfg.seed, n, 0, 2))
    cp = batch_compensated(x, fmt, mode, trials=cfg.trials)
    for order in (2, 1):
        rep = B.comp_prob_bound(x, fmt, d, order, mode)
        rows.append(_cov_row(rep, n, "sequential", cfg.trials, _hold(cp.errors, rep), 1 - d))
    return rows


def _cov_row(rep, n, tree, trials, held, target):
    hold, ratio = held
    target = round(target - 0.01, 6)
    return (rep.bound_id, n, tree, trials, hold, target, ratio, hold >= target * trials)


# --- deterministic-bound fuzz ---------------------------------------------------------

FUZZ_HEADER = ("bound_id", "n", "tree", "cases", "violations", "worst_ratio")


def det_fuzz(
    cases: int = 10_000,
    fmt: str = "binary16",
    seed: int = 1,
    ns=(1, 2, 3, 5, 8, 17, 32, 64, 100, 128, 256),
    jobs: int = 1,
) -> list[tuple]:
    """Deterministic bounds against measured errors under round-to-nearest.

    ``cases`` is the count per tree kind, spread evenly over ``ns``, so each
    bound sees at least ``cases`` inputs; every case draws its own lattice
    data.  ``worst_ratio`` is ``max |e| / bound``.
    """
    per = -(-cases // len(ns))
    return _flatten(pmap(partial(_fuzz_one, per, fmt, seed), ns, jobs))


def _fuzz_one(per: int, fmt: str, seed: int, n: int) -> list[tuple]:
    fmt = parse_format(fmt)
    rng = np.random.default_rng([seed, n, 4])
    rows = []
    for kind in ("sequential", "pairwise", "random"):
        tree = make_tree(kind, n, int(rng.integers(2**31)))
        X = np.stack([gen_fuzz(rng, n, fmt) for _ in range(per)])
        C = np.array([choose_shift(x, fmt, lattice=True) for x in X])
        g = batch_general(tree, X, fmt).errors
        sh = batch_shifted(tree, X, C, fmt).errors
        cp = batch_compensated(X, fmt).errors if kind == "sequential" else None
        checks = {"general_det": [], "shifted_seq_det": [], "comp_second_order_det": []}
        for i, x in enumerate(X):
            checks["general_det"].append((g[i], B.det_bound_general(x, tree, fmt).value))
            if kind == "sequential":
                checks["shifted_seq_det"].append((sh[i], B.shifted_seq_det_bound(x, C[i], fmt).value))
                r = B.comp_second_order_det_bound(x, fmt)
                checks["comp_second_order_det"].append((cp[i], r.value + r.constituents["slack"]))
        for bid, pairs in checks.items():
            if not pairs:
                continue
            err = np.abs([p[0] for p in pairs])
            bnd = np.array([p[1] for p in pairs])
            viol = int(np.count_nonzero(err > bnd))
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(bnd > 0, err / bnd, np.where(err > 0, np.inf, 0.0))
            rows.append((bid, n, kind, len(pairs), viol, float(ratio.max())))
    return rows


# --- expression verification ----------------------------------------------------------

VERIFY_HEADER = ("expression_id", "n", "fmt", "seed", "residual", "tolerance", "pass")


def _appendix_checks(trace):
    """Residuals of the appendix identities on a compensated trace."""
    out = {}
    first = comp_expr_first(trace)
    steps = first.extras["steps"]
    out["appendix_e2"] = steps[2]
    if trace.n >= 3:
        out["appendix_e3"] = steps[3]
        second = comp_expr_second(trace)
        out["appendix_steps"] = max((abs(v) for v in second.extras["step_residuals"].values()), default=0)
    return out


def verify_table(
    ns=(2, 3, 4, 5, 8, 32, 64),
    trials: int = 1000,
    fmt: str = "binary16",
    seed: int = 1,
    mode: str = "nearest",
    trees=("sequential", "pairwise", "random"),
    truncations: bool = True,
    jobs: int = 1,
) -> list[tuple]:
    """Worst residual per expression and ``n`` over seeded fuzz traces.

    Each row reports the trial with the largest ``|residual| / tolerance``;
    ``pass`` means every trial was within tolerance.  Tree-dependent ids
    carry the tree kind in brackets.
    """
    one = partial(_verify_one, trials, parse_format(fmt).name, seed, mode, tuple(trees), truncations)
    return _flatten(pmap(one, ns, jobs))


def _verify_one(trials, fmt, seed, mode, trees, truncations, n) -> list[tuple]:
    fmt = parse_format(fmt)
    rng = np.random.default_rng([seed, n])
    worst: dict[str, list] = {}

    def note(eid, res, tol):
        r = abs(float(res))
        ratio = r / tol if tol > 0 else (0.0 if r == 0 else math.inf)
        w = worst.setdefault(eid, [-1.0, 0.0, 0.0, True])
        if ratio > w[0]:
            w[:3] = [ratio, r, tol]
        w[3] = w[3] and r <= tol

    def keep(eid):
        return truncations or not eid.endswith("order")

    for t in range(trials):
        x = gen_fuzz(rng, n, fmt)
        md = NearestEven() if mode == "nearest" else StochasticNearness((seed, n, t))
        for kind in trees:
            tree = make_tree(kind, n, int(rng.integers(2**31)))
            tr = general_sum(tree, x, fmt, md)
            for r in evaluate_all(tr):
                if keep(r.expression_id):
                    note(f"{r.expression_id}[{kind}]", r.residual, tolerance(r.expression_id, tr))
        c = choose_shift(x, fmt, lattice=True)
        tr = shifted_sum(sequential_tree(n), x, c, fmt, md)
        for r in evaluate_all(tr):
            note(r.expression_id, r.residual, tolerance(r.expression_id, tr))
        tr = compensated_sum(x, fmt, md)
        for r in evaluate_all(tr):
            if keep(r.expression_id):
                note(r.expression_id, r.residual, tolerance(r.expression_id, tr))
        tol = tolerance("comp_explicit", tr)
        for eid, res in _appendix_checks(tr).items():
            note(eid, res, tol)
    return [(eid, n, fmt.name, seed, r, tol, ok) for eid, (_, r, tol, ok) in worst.items()]


# --- truncation orders ----------------------------------------------------------------

TRUNCATION_HEADER = ("expression_id", "n", "trials", "worst_residual", "worst_ratio", "pass")


def truncation_sweep(
    ns=(2, 3, 5, 8, 17, 32, 64, 128, 256),
    trials: int = 200,
    fmt: str = "binary16",
    seed: int = 1,
    jobs: int = 1,
) -> list[tuple]:
    """Worst compensated truncation residuals against their tolerances.

    ``worst_ratio`` is ``max |residual| / tolerance`` with the tolerances of
    :func:`fpsum.expressions.tolerance` (``50 u^2 n sum|x|`` and
    ``100 u^3 n sum|x|``).
    """
    return _flatten(pmap(partial(_truncation_one, trials, parse_format(fmt).name, seed), ns, jobs))


def _truncation_one(trials, fmt, seed, n) -> list[tuple]:
    fmt = parse_format(fmt)
    rng = np.random.default_rng([seed, n, 3])
    worst = {"comp_first_order": [0.0, 0.0], "comp_second_order": [0.0, 0.0]}
    for _ in range(trials):
        tr = compensated_sum(gen_fuzz(rng, n, fmt), fmt)
        for r in (comp_first_order(tr), comp_second_order(tr)):
            res = abs(float(r.residual))
            tol = tolerance(r.expression_id, tr)
            ratio = res / tol if tol > 0 else (0.0 if res == 0 else math.inf)
            w = worst[r.expression_id]
            if ratio > w[1]:
                w[:] = [res, ratio]
    return [(eid, n, trials, res, ratio, ratio <= 1) for eid, (res, ratio) in worst.items()]


def order_scaling(
    seed: int = 1,
    trials: int = 150,
    ns=(8, 16, 32, 64, 128, 256),
    kind: str = "normal",
) -> tuple[float, float]:
    """Median truncation residual in binary16 over the same with one more bit.

    Residuals are normalised by ``n sum|x|``; the p=12 format keeps binary16's
    exponent range.  Returns ``(first_order_ratio, second_order_ratio)``,
    which should sit near ``2**2`` and ``2**3``.
    """
    def medians(fmt, s):
        rng = np.random.default_rng(s)
        a1, a2 = [], []
        for _ in range(trials):
            for n in ns:
                tr = compensated_sum(gen_fuzz(rng, n, fmt, kind), fmt)
                scale = n * float(tr.abs_sum)
                a1.append(abs(float(comp_first_order(tr).residual)) / scale)
                a2.append(abs(float(comp_second_order(tr).residual)) / scale)
        return float(np.median(a1)), float(np.median(a2))

    lo = medians(parse_format("binary16"), seed)
    hi = medians(parse_format("custom:p=12,emin=-14,emax=15"), seed + 100)
    return lo[0] / hi[0], lo[1] / hi[1]


# --- child-error bound ----------------------------------------------------------------


def fk_check(
    n: int = 256,
    tree: str = "pairwise",
    trials: int = 10_000,
    eta_fail: float = 0.01,
    fmt: str = "binary16",
    seed: int = 1,
) -> dict:
    """How often ``|f_k| <= lambda u/(1 - lambda sqrt(h) u) (sum_{j below k} s_j^2)^(1/2)`` holds for every ``k`` at once.

    ``f_k`` is the sum of the errors of ``s_k``'s children, ``lambda =
    sqrt(2 ln(2n/eta))`` and ``u`` is doubled for stochastic rounding.
    """
    fmt = parse_format(fmt)
    x = gen_uniform_shifted(0.0, n, seed, fmt, lattice=True)
    t = make_tree(tree, n, seed)
    mode = StochasticNearness((seed, n, 7))
    res = batch_general(t, x, fmt, mode, trials=trials, record=True)
    u = 2 * fmt.u
    lam = math.sqrt(2 * math.log(2 * n / eta_fail))
    z = lam * math.sqrt(t.height) * u
    if z >= 1:
        raise ValueError("lambda sqrt(h) u >= 1: the bound does not apply")
    s = B.node_sums(x, t)
    ok = np.ones(trials, dtype=bool)
    worst = 0.0
    for k in range(2, n + 1):
        below = [s[j - 2] for j in t.descendants(k)]
        bound = lam * u / (1 - z) * math.sqrt(math.fsum(v * v for v in below))
        fk = np.abs(res.child_errors[k])
        ok &= fk <= bound
        if bound > 0:
            worst = max(worst, float(fk.max()) / bound)
        elif fk.max() > 0:
            worst = math.inf
    return {"n": n, "tree": tree, "trials": trials, "hold_count": int(ok.sum()), "target": 0.99, "worst_ratio": worst,
            "lambda": lam, "lambda_sqrt_h_u": z}
