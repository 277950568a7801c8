"""Deterministic and probabilistic error bounds for the three algorithms.

Every bound is a function of the inputs, their exact partial sums, the tree
shape, ``u`` and the failure probabilities only; none of them looks at the
roundoffs of an actual run.  Values are float64: a bound only has to be
accurate to a few digits, and ``(1 + u)**h`` and friends are formed through
``log1p``/``expm1`` so they keep full relative accuracy for tiny ``u``.

Every function takes an optional ``mode``.  Under stochastic rounding the
per-operation roundoff bound doubles, so ``u`` is replaced by ``2u``.

``A(delta) = sqrt(2 ln(2/delta))`` is the Azuma multiplier that appears in
all probabilistic bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import ExactPrefix
from .fpmodel import FpFormat, RoundingMode, effective_u, parse_format
from .sumtree import SumTree

__all__ = [
    "BoundReport",
    "ZeroSum",
    "azuma_multiplier",
    "azuma_radius",
    "comp_first_order_bound",
    "comp_prob_bound",
    "comp_second_order_det_bound",
    "det_bound_general",
    "node_sums",
    "prob_bound_first_order",
    "prob_bound_model1",
    "prob_bound_model2",
    "relative_bound_fig1",
    "relative_bound_fig3",
    "shifted_gen_prob_bound",
    "shifted_seq_det_bound",
    "shifted_seq_prob_bound",
]


class ZeroSum(ArithmeticError):
    """A relative bound was requested for data whose exact sum is zero."""


@dataclass(frozen=True)
class BoundReport:
    """A bound's value plus everything that went into it.

    ``value`` is ``nan`` when ``valid`` is false (a precondition such as
    ``lambda sqrt(h) u < 1`` failed).
    """

    bound_id: str
    value: float
    constituents: dict = field(default_factory=dict)
    valid: bool = True


def _u(fmt, mode, u):
    if u is not None:
        return float(u)
    return effective_u(parse_format(fmt), mode)


def _check_prob(name, p):
    if not 0 < p < 1:
        raise ValueError(f"{name} must lie in (0, 1), got {p}")


def azuma_multiplier(delta_fail: float) -> float:
    """``sqrt(2 ln(2/delta))``."""
    _check_prob("delta_fail", delta_fail)
    return math.sqrt(2 * math.log(2 / delta_fail))


def azuma_radius(c, delta_fail: float) -> float:
    """``(sum c_k^2)^(1/2) sqrt(2 ln(2/delta))``."""
    c = np.asarray(c, dtype=np.float64)
    return math.sqrt(math.fsum(c * c)) * azuma_multiplier(delta_fail)


def _pow1p(u, k):
    """``(1 + u)**k`` without cancellation."""
    return math.exp(k * math.log1p(u))


def _gamma(u, k):
    """``(1 + u)**k - 1``."""
    return math.expm1(k * math.log1p(u))


def _norm2(v) -> float:
    v = np.asarray(v, dtype=np.float64)
    return math.sqrt(math.fsum(v * v))


def node_sums(x, tree: SumTree) -> np.ndarray:
    """Exact node sums ``s_2 .. s_n`` (correctly rounded to float64)."""
    ints, scale = ExactPrefix.integers(x)
    s: dict[int, int] = {}
    for k, (a, b) in enumerate(tree.nodes, start=2):
        s[k] = (ints[-a - 1] if a < 0 else s[a]) + (ints[-b - 1] if b < 0 else s[b])
    return np.array([math.ldexp(float(s[k]), scale) if s[k] else 0.0 for k in range(2, tree.n + 1)])


# --- general summation ----------------------------------------------------------


def det_bound_general(
    x,
    tree: SumTree,
    fmt: FpFormat | str,
    trace=None,
    mode: RoundingMode | None = None,
    u: float | None = None,
) -> BoundReport:
    """``u (1+u)^h sum_k |s_k|``, the node-sum form.

    Constituents also hold the aggregate ``u (1+u)^h h sum|x|`` (valid for
    any ``h``), the printed aggregate ``h^2 u^2/(1-hu) sum|x|`` as a
    diagnostic, and, given a ``trace``, ``u sum|ŝ_k|`` over computed sums.
    """
    u = _u(fmt, mode, u)
    h = tree.height
    s = node_sums(x, tree)
    abs_s = math.fsum(np.abs(s))
    abs_x = math.fsum(np.abs(np.asarray(x, dtype=np.float64)))
    grow = _pow1p(u, h)
    value = u * grow * abs_s
    cons = {
        "u": u,
        "h": h,
        "sum_abs_s": abs_s,
        "sum_abs_x": abs_x,
        "aggregate": u * grow * h * abs_x,
        "printed_aggregate": h * h * u * u / (1 - h * u) * abs_x if h * u < 1 else math.nan,
        "hu_below_one": h * u < 1,
    }
    if trace is not None:
        cons["computed_partial_form"] = u * math.fsum(
            abs(float(trace.computed[k])) for k in range(2, tree.n + 1)
        )
    return BoundReport("general_det", value, cons)


def _lam(count: int, eta_fail: float) -> float:
    _check_prob("eta_fail", eta_fail)
    return math.sqrt(2 * math.log(2 * count / eta_fail))


def prob_bound_first_order(partial_sums, fmt, delta_fail, mode=None, u=None) -> BoundReport:
    """``u (sum s_k^2)^(1/2) A(delta)``; first order only."""
    u = _u(fmt, mode, u)
    norm = _norm2(partial_sums)
    a = azuma_multiplier(delta_fail)
    return BoundReport(
        "general_first_order_prob",
        u * norm * a,
        {"u": u, "norm_s": norm, "azuma": a, "delta_fail": delta_fail},
    )


def prob_bound_model1(partial_sums, h, n, fmt, delta_fail, eta_fail, mode=None, u=None) -> BoundReport:
    """``u exp(lambda sqrt(h) u) (sum s_k^2)^(1/2) A(delta)`` with ``lambda = sqrt(2 ln(2n/eta))``."""
    u = _u(fmt, mode, u)
    lam = _lam(n, eta_fail)
    norm = _norm2(partial_sums)
    a = azuma_multiplier(delta_fail)
    z = lam * math.sqrt(h) * u
    return BoundReport(
        "general_model1",
        u * math.exp(z) * norm * a,
        {"u": u, "h": h, "n": n, "lambda": lam, "lambda_sqrt_h_u": z, "norm_s": norm,
         "azuma": a, "delta_fail": delta_fail, "eta_fail": eta_fail, "failure_budget": delta_fail + eta_fail},
    )


def prob_bound_model2(partial_sums, h, n, fmt, delta_fail, eta_fail, mode=None, u=None) -> BoundReport:
    """``u/(1 - lambda sqrt(h) u) (sum s_k^2)^(1/2) A(delta)``; needs ``lambda sqrt(h) u < 1``."""
    u = _u(fmt, mode, u)
    lam = _lam(n, eta_fail)
    norm = _norm2(partial_sums)
    a = azuma_multiplier(delta_fail)
    z = lam * math.sqrt(h) * u
    ok = z < 1
    return BoundReport(
        "general_model2",
        u / (1 - z) * norm * a if ok else math.nan,
        {"u": u, "h": h, "n": n, "lambda": lam, "lambda_sqrt_h_u": z, "norm_s": norm,
         "azuma": a, "delta_fail": delta_fail, "eta_fail": eta_fail, "failure_budget": delta_fail + eta_fail},
        ok,
    )


# --- shifted summation ----------------------------------------------------------


def _shift_terms(x, c):
    """``|s_k - kc|`` (k = 1..n), ``|x_k - c|``, ``s_n`` and ``nc``, all exact before rounding."""
    ep = ExactPrefix(x)
    t = np.abs(ep.centered(c))
    y = np.abs(ep.centered_terms(c))
    return t, y, ep.total(), ep.n * float(c)


def shifted_seq_det_bound(x, c, fmt, mode=None, u=None) -> BoundReport:
    """``u (1+u)^n (sum_{k>=2} |s_k - kc| + sum |x_k - c| + |s| + |nc|)``."""
    u = _u(fmt, mode, u)
    t, y, s, nc = _shift_terms(x, c)
    n = len(y)
    inner = math.fsum(t[1:]) + math.fsum(y) + abs(s) + abs(nc)
    return BoundReport("shifted_seq_det", u * _pow1p(u, n) * inner, {"u": u, "n": n, "bracket": inner})


def shifted_seq_prob_bound(x, c, fmt, delta_fail, mode=None, u=None) -> BoundReport:
    """``max_k (|s_k - kc| + |x_k - c|) sqrt(u gamma_{2(n+2)}/2) A(delta)``.

    The maximum runs over ``k = 1..n+1`` with ``k = n+1`` contributing
    ``|s_n| + |nc|``.  ``constituents["simple"]`` uses ``sqrt(n+2) u`` in
    place of the square-root factor.
    """
    u = _u(fmt, mode, u)
    t, y, s, nc = _shift_terms(x, c)
    n = len(y)
    vmax = max(float(np.max(t + y)), abs(s) + abs(nc))
    factor = math.sqrt(u * _gamma(u, 2 * (n + 2)) / 2)
    a = azuma_multiplier(delta_fail)
    return BoundReport(
        "shifted_seq_prob",
        vmax * factor * a,
        {"u": u, "n": n, "max_term": vmax, "factor": factor, "azuma": a,
         "simple": vmax * math.sqrt(n + 2) * u * a, "delta_fail": delta_fail},
    )


def shifted_gen_prob_bound(x, c, tree: SumTree, fmt, delta_fail, eta_fail, model: int = 2, mode=None, u=None) -> BoundReport:
    """Shifted general summation, independent (``model=1``) or mean-independent (``model=2``) roundoffs.

    Radicand ``s_n^2 + sum_{k>=2} t_k^2 + sum y_k^2`` over the inner tree's
    node sums ``t_k``; the effective height is ``h + 2`` and the
    union bound runs over ``2n + 1`` nodes.
    """
    if model not in (1, 2):
        raise ValueError("model must be 1 or 2")
    u = _u(fmt, mode, u)
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    ep = ExactPrefix(x)
    y = ep.centered_terms(c)
    t = node_sums(y, tree) if n > 1 else np.zeros(0)
    s = ep.total()
    rad = math.sqrt(s * s + math.fsum(t * t) + math.fsum(y * y))
    h2 = tree.height + 2
    lam = _lam(2 * n + 1, eta_fail)
    z = lam * math.sqrt(h2) * u
    a = azuma_multiplier(delta_fail)
    cons = {"u": u, "h_plus_2": h2, "nodes": 2 * n + 1, "lambda": lam, "lambda_sqrt_h_u": z,
            "radicand_sqrt": rad, "azuma": a, "failure_budget": delta_fail + eta_fail}
    if model == 1:
        return BoundReport("shifted_general_model1", u * math.exp(z) * rad * a, cons)
    ok = z < 1
    return BoundReport("shifted_general_model2", u / (1 - z) * rad * a if ok else math.nan, cons, ok)


# --- compensated summation --------------------------------------------------------


def comp_first_order_bound(x, fmt, mode=None, u=None) -> BoundReport:
    """``3u sum|x|`` (first-order part only)."""
    u = _u(fmt, mode, u)
    ax = math.fsum(np.abs(np.asarray(x, dtype=np.float64)))
    return BoundReport("comp_first_order", 3 * u * ax, {"u": u, "sum_abs_x": ax})


def comp_second_order_det_bound(x, fmt, mode=None, u=None) -> BoundReport:
    """``(3u + 4nu^2) sum|x|``; ``constituents["slack"]`` is ``100 u^3 n sum|x|``."""
    u = _u(fmt, mode, u)
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    ax = math.fsum(np.abs(x))
    return BoundReport(
        "comp_second_order_det",
        (3 * u + 4 * n * u * u) * ax,
        {"u": u, "n": n, "sum_abs_x": ax, "slack": 100 * u**3 * n * ax},
    )


def comp_prob_bound(x, fmt, delta_fail, order: int = 2, mode=None, u=None) -> BoundReport:
    """Probabilistic compensated bound to first (``order=1``) or second order.

    Second order: ``u (2(1+3u) ||x||_2 + (s_n^2 + 16u^2 sum_{k<n} s_k^2)^(1/2)) A``;
    ``constituents["relaxed"]`` replaces the second root by
    ``sqrt(1 + 16(n-2)u^2) ||x||_1``.  First order: ``u (2||x||_2 + |s_n|) A``.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    u = _u(fmt, mode, u)
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    ep = ExactPrefix(x)
    sn = ep.total()
    x2 = _norm2(x)
    a = azuma_multiplier(delta_fail)
    if order == 1:
        return BoundReport("comp_first_order_prob", u * (2 * x2 + abs(sn)) * a,
                           {"u": u, "norm2_x": x2, "s_n": sn, "azuma": a})
    s = ep.prefixes()[:-1]
    inner = math.sqrt(sn * sn + 16 * u * u * math.fsum(s * s))
    x1 = math.fsum(np.abs(x))
    relaxed = u * (2 * (1 + 3 * u) * x2 + math.sqrt(1 + 16 * max(n - 2, 0) * u * u) * x1) * a
    return BoundReport(
        "comp_second_order_prob",
        u * (2 * (1 + 3 * u) * x2 + inner) * a,
        {"u": u, "norm2_x": x2, "norm1_x": x1, "s_n": sn, "azuma": a, "relaxed": relaxed},
    )


# --- relative forms used by the figures -----------------------------------------------


def relative_bound_fig1(x, c, fmt, delta_fail, mode=None, u=None) -> float:
    """``u sqrt(n+2) max_k (|s_k - kc| + |x_k - c|)/|s_n| A(delta)``."""
    u = _u(fmt, mode, u)
    t, y, s, nc = _shift_terms(x, c)
    if s == 0:
        raise ZeroSum("relative bound undefined for a zero sum")
    vmax = max(float(np.max(t + y)), abs(s) + abs(nc))
    return u * math.sqrt(len(y) + 2) * vmax / abs(s) * azuma_multiplier(delta_fail)


def relative_bound_fig3(x, fmt, delta_fail, mode=None, u=None) -> float:
    """``u (2||x||_2 + |s_n|)/|s_n| A(delta)``."""
    u = _u(fmt, mode, u)
    s = ExactPrefix(x).total()
    if s == 0:
        raise ZeroSum("relative bound undefined for a zero sum")
    return u * (2 * _norm2(x) + abs(s)) / abs(s) * azuma_multiplier(delta_fail)
