"""Closed-form error expressions evaluated from a recorded run.

Every function takes a :class:`~fpsum.algorithms.RunTrace` and rebuilds the
forward error ``e_n`` from the logged roundoffs and the exact partial sums
alone, in the oracle's precision.  ``residual`` is the rebuilt value minus the
measured error, so an exact expression has a residual at the level of oracle
rounding and a truncated one shows its neglected higher-order terms.

Identifiers used throughout (``expression_id``):

==========================  ==================================================
general_explicit            node errors pushed up through ancestor products
general_recursive           the same error via child-error sums ``f_k``
general_first_order         ``sum s_k delta_k``
shifted_sequential          summation plus centering parts, sequential tree
comp_matrix_recursion       2x2 recursion for ``(e_k, c_k)``
comp_explicit               unrolled matrix products
comp_expr_first             ``sigma``-product form with the ``c_j`` terms
comp_expr_second            ``X``/``Theta``/``E`` form
comp_first_order            first-order truncation
comp_second_order           second-order truncation
==========================  ==================================================
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import gmpy2
from gmpy2 import mpfr

from .algorithms import RunTrace

__all__ = [
    "EXACT_IDS",
    "ExpressionResult",
    "comp_expr_first",
    "comp_expr_second",
    "comp_explicit",
    "comp_first_order",
    "comp_matrix_recursion",
    "comp_second_order",
    "evaluate_all",
    "general_explicit",
    "general_first_order",
    "general_recursive",
    "shifted_sequential_exact",
    "tolerance",
]

EXACT_IDS = (
    "general_explicit",
    "general_recursive",
    "shifted_sequential",
    "comp_matrix_recursion",
    "comp_explicit",
    "comp_expr_first",
    "comp_expr_second",
)


@dataclass(frozen=True)
class ExpressionResult:
    """Reconstructed error and its residual against the measured ``e_n``."""

    expression_id: str
    value: mpfr
    residual: mpfr
    extras: dict = field(default_factory=dict, compare=False)

    def ok(self, tol) -> bool:
        return abs(float(self.residual)) <= float(tol)


def _ctx(trace: RunTrace):
    # a little headroom over the run's own oracle bits
    return gmpy2.context(precision=trace.oracle_bits + 32)


def _result(trace, eid, value, **extras):
    with _ctx(trace):
        res = value - trace.e_n
    return ExpressionResult(eid, value, res, extras)


def _need(trace, algorithm):
    if trace.algorithm != algorithm:
        raise ValueError(f"expected a {algorithm} trace, got {trace.algorithm}")


# --- general summation --------------------------------------------------------


def general_explicit(trace: RunTrace) -> ExpressionResult:
    """``sum_k s_k delta_k prod_{ancestors j of k} (1 + delta_j)``."""
    _need(trace, "general")
    tree, n = trace.tree, trace.n
    if n == 1:
        return _result(trace, "general_explicit", mpfr(0))
    delta, s = trace.family("delta"), trace.exact
    with _ctx(trace):
        # product over strict ancestors, filled top-down
        up = {n: mpfr(1)}
        for k in range(n - 1, 1, -1):
            p = tree.parent[k]
            up[k] = up[p] * (1 + delta[p])
        value = gmpy2.fsum(s[k] * delta[k] * up[k] for k in range(2, n + 1))
    return _result(trace, "general_explicit", value)


def general_recursive(trace: RunTrace) -> ExpressionResult:
    """``e_n = sum_{j <= n} (s_j + f_j) delta_j`` with ``f_k = sum_{j < k} (s_j + f_j) delta_j``.

    ``extras["f"]`` and ``extras["e"]`` hold ``f_k`` and ``e_k`` per node.
    """
    _need(trace, "general")
    tree, n = trace.tree, trace.n
    if n == 1:
        return _result(trace, "general_recursive", mpfr(0), f={}, e={})
    delta, s = trace.family("delta"), trace.exact
    f: dict[int, mpfr] = {}
    e: dict[int, mpfr] = {}
    with _ctx(trace):
        local = {}
        for k in range(2, n + 1):
            f[k] = gmpy2.fsum(local[j] for j in tree.descendants(k)) if k > 2 else mpfr(0)
            local[k] = (s[k] + f[k]) * delta[k]
            e[k] = f[k] + local[k]
    return _result(trace, "general_recursive", e[n], f=f, e=e)


def general_first_order(trace: RunTrace) -> ExpressionResult:
    """``sum_k s_k delta_k``; the residual is second order in ``u``."""
    _need(trace, "general")
    delta, s = trace.family("delta"), trace.exact
    with _ctx(trace):
        value = gmpy2.fsum(s[k] * delta[k] for k in range(2, trace.n + 1))
    return _result(trace, "general_first_order", value)


# --- shifted summation ----------------------------------------------------------


def shifted_sequential_exact(trace: RunTrace) -> ExpressionResult:
    """Summation part plus centering part for a sequential inner tree.

    Uses ``t_{n+1} = s_n``, ``y_{n+1} = n c`` and ``delta_1 = 0``.
    """
    _need(trace, "shifted")
    n = trace.n
    if trace.tree.kind != "sequential" and n > 2:
        raise ValueError("the shifted error expression needs a sequential tree")
    delta, eps = trace.family("delta"), trace.family("eps")
    t = dict(trace.exact)
    t[n + 1] = trace.exact_result
    y = trace.y_exact
    with _ctx(trace):
        # tail[k] = prod_{l=k}^{n+1} (1 + delta_l)
        tail = {n + 2: mpfr(1)}
        for k in range(n + 1, 0, -1):
            tail[k] = tail[k + 1] * (1 + delta.get(k, 0))
        summation = gmpy2.fsum(t[k] * delta[k] * tail[k + 1] for k in range(2, n + 2))
        centering = gmpy2.fsum(y[k] * eps[k] * tail[k] for k in range(1, n + 2))
        value = summation + centering
    return _result(trace, "shifted_sequential", value, summation=summation, centering=centering)


# --- compensated summation --------------------------------------------------------


def _comp_factors(trace):
    sig, eta, dl, bt = (trace.family(f) for f in ("sigma", "eta", "delta", "beta"))
    z = mpfr(0)
    return (lambda k: sig.get(k, z)), (lambda k: eta.get(k, z)), (lambda k: dl.get(k, z)), (lambda k: bt.get(k, z))


def _P(trace, k):
    sg, et, dl, bt = _comp_factors(trace)
    s, e, d, b = sg(k), et(k), dl(k), bt(k)
    gamma = (1 + s) * (1 + d)
    psi = (1 + d) * (1 + b)
    return ((1 + s, -(1 + e) * (1 + s)), (s * psi, (1 + e) * (1 - gamma) * (1 + b)))


def _P_tilde(trace, k):
    sg, et, dl, bt = _comp_factors(trace)
    s, e, d, b = sg(k), et(k), dl(k), bt(k)
    gamma = (1 + s) * (1 + d)
    psi = (1 + d) * (1 + b)
    return ((s, e * (1 + s)), (s * psi, (1 + b) * (d + e * (gamma - 1))))


def _mv(m, v):
    return (m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1])


def _mm(a, b):
    return (
        (a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]),
        (a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]),
    )


def comp_matrix_recursion(trace: RunTrace) -> ExpressionResult:
    """Iterate ``[e_k; c_k] = P_k [e_{k-1}; c_{k-1}] + P_k [s_{k-1}; -x_k] + [-s_k; 0]``.

    ``extras["series"]`` maps ``k`` to the recovered ``(e_k, c_k)``;
    ``extras["c_residual"]`` is the largest ``|c_k - trace c_k|``.
    """
    _need(trace, "compensated")
    x, s = trace.x, trace.exact
    series = {1: (mpfr(0), mpfr(0))}
    with _ctx(trace):
        ek, ck = series[1]
        for k in range(2, trace.n + 1):
            P = _P(trace, k)
            a = _mv(P, (ek, ck))
            b = _mv(P, (s[k - 1], -x[k - 1]))
            ek, ck = a[0] + b[0] - s[k], a[1] + b[1]
            series[k] = (ek, ck)
        c_res = max((abs(series[k][1] - trace.c_hat[k]) for k in series), default=mpfr(0))
    return _result(trace, "comp_matrix_recursion", ek, series=series, c_residual=c_res)


def comp_explicit(trace: RunTrace) -> ExpressionResult:
    """``sum_{j<n} (P_n ... P_{j+1}) Pt_j [s_j; x_j] + Pt_n [s_n; x_n]``.

    Evaluated from ``j = n`` downward, carrying the running product.
    """
    _need(trace, "compensated")
    n, x, s = trace.n, trace.x, trace.exact
    with _ctx(trace):
        acc = (mpfr(0), mpfr(0))
        M = ((mpfr(1), mpfr(0)), (mpfr(0), mpfr(1)))
        for j in range(n, 1, -1):
            term = _mv(M, _mv(_P_tilde(trace, j), (s[j], x[j - 1])))
            acc = (acc[0] + term[0], acc[1] + term[1])
            M = _mm(M, _P(trace, j))
    return _result(trace, "comp_explicit", acc[0], c=acc[1])


def _ab(trace, j):
    """``a_j = c_j (1 + eta_{j+1})`` and ``b_j = s_j sigma_j``."""
    eta, sig = trace.family("eta"), trace.family("sigma")
    z = mpfr(0)
    return trace.c_hat[j] * (1 + eta.get(j + 1, z)), trace.exact[j] * sig.get(j, z)


def comp_expr_first(trace: RunTrace, verbatim: bool = False) -> ExpressionResult:
    """``sigma``-product form of the compensated error.

    The ``x_j eta_j`` sum starts at ``j = 3``.  ``verbatim=True`` starts it at
    ``j = 4`` instead, which drops ``x_3 eta_3 (1 + sigma_3) ...`` and so is
    only exact when ``eta_3 = 0``.

    ``extras["steps"]`` holds the step recurrence
    ``e_k = (e_{k-1} - a_{k-1})(1 + sigma_k) + x_k eta_k (1 + sigma_k) + b_k``
    checked against the trace at ``k = 2, 3, 4`` (residuals), and
    ``extras["e3_short"]`` the residual of ``e_3 = (b_2 - a_2)(1 + sigma_3) + b_3``.
    """
    _need(trace, "compensated")
    n, x, s = trace.n, trace.x, trace.exact
    if n < 2:
        raise ValueError("the compensated expressions need n >= 2")
    sig, eta = trace.family("sigma"), trace.family("eta")
    start = 4 if verbatim else 3
    with _ctx(trace):
        tail = {n + 1: mpfr(1)}  # prod_{k=j}^{n} (1 + sigma_k)
        for k in range(n, 1, -1):
            tail[k] = tail[k + 1] * (1 + sig[k])
        value = s[n] * sig[n]
        value += gmpy2.fsum(x[j - 1] * eta[j] * tail[j] for j in range(start, n + 1))
        terms = []
        for j in range(2, n):
            a, b = _ab(trace, j)
            terms.append((b - a) * tail[j + 1])
        value += gmpy2.fsum(terms)

        steps = {}
        a2, b2 = _ab(trace, 2)
        steps[2] = b2 - trace.error(2)
        for k in (3, 4):
            if k > n:
                break
            a, _ = _ab(trace, k - 1)
            b = s[k] * sig[k]
            rhs = (trace.error(k - 1) - a) * (1 + sig[k]) + x[k - 1] * eta[k] * (1 + sig[k]) + b
            steps[k] = rhs - trace.error(k)
        e3_short = None
        if n >= 3:
            e3_short = (b2 - a2) * (1 + sig[3]) + s[3] * sig[3] - trace.error(3)
    eid = "comp_expr_first_verbatim" if verbatim else "comp_expr_first"
    return _result(trace, eid, value, steps=steps, e3_short=e3_short)


def comp_expr_second(trace: RunTrace, verbatim: bool = False) -> ExpressionResult:
    """``e_n = s_n sigma_n + (X_{n-1} + x_n eta_n + E_{n-1})(1 + sigma_n)``.

    ``X_k``, ``Theta_k`` and ``E_k`` (``2 <= k <= n-1``) are built from their
    sum definitions using the trace's ``e_j``.  ``verbatim=True`` uses
    ``x_n eta_n (1 + beta_n)`` in place of ``x_n eta_n``; that extra factor
    has no counterpart in the last step, so the verbatim form is off by
    ``x_n eta_n beta_n (1 + sigma_n)``.

    ``extras`` carries the ``X``, ``Theta``, ``E`` series and
    ``step_residuals[k] = (E_k + X_k) - (e_k - a_k)``.
    """
    _need(trace, "compensated")
    n, x = trace.n, trace.x
    if n < 3:
        raise ValueError("the second compensated expression needs n >= 3")
    sig, eta, dl, bt = _comp_factors(trace)
    with _ctx(trace):
        R = {l: (1 + bt(l)) * (1 + eta(l + 1)) for l in range(2, n)}
        theta = {k: 1 - (1 + dl(k)) * (1 + bt(k)) * (1 + eta(k + 1)) for k in range(2, n)}
        e = {j: trace.error(j) for j in range(2, n + 1)}
        X, E = {}, {}
        for k in range(2, n):
            # products run l = j..k for X and l = j+1..k for E
            prod = {k + 1: mpfr(1)}
            for l in range(k, 1, -1):
                prod[l] = prod[l + 1] * R[l]
            X[k] = gmpy2.fsum(x[j - 1] * (eta(j) - dl(j)) * prod[j] for j in range(2, k + 1))
            E[k] = e[k] * theta[k] + gmpy2.fsum(
                e[j] * (theta[j] + dl(j + 1)) * prod[j + 1] for j in range(2, k)
            )
        steps = {}
        for k in range(2, n):
            a, _ = _ab(trace, k)
            steps[k] = E[k] + X[k] - (e[k] - a)
        last = x[n - 1] * eta(n)
        if verbatim:
            last = last * (1 + bt(n))
        value = trace.exact[n] * sig(n) + (X[n - 1] + last + E[n - 1]) * (1 + sig(n))
    eid = "comp_expr_second_verbatim" if verbatim else "comp_expr_second"
    return _result(trace, eid, value, X=X, Theta=theta, E=E, step_residuals=steps)


def comp_first_order(trace: RunTrace) -> ExpressionResult:
    """``s_n sigma_n + x_n eta_n + sum_{j=2}^{n-1} x_j (eta_j - delta_j)``."""
    _need(trace, "compensated")
    n, x = trace.n, trace.x
    if n == 1:
        return _result(trace, "comp_first_order", mpfr(0))
    sig, eta, dl, _ = _comp_factors(trace)
    with _ctx(trace):
        value = trace.exact[n] * sig(n) + x[n - 1] * eta(n)
        value += gmpy2.fsum(x[j - 1] * (eta(j) - dl(j)) for j in range(2, n))
    return _result(trace, "comp_first_order", value)


def comp_second_order(trace: RunTrace) -> ExpressionResult:
    """Second-order truncation with ``mu_k = eta_k - delta_k`` and ``mu_n = eta_n``."""
    _need(trace, "compensated")
    n, x, s = trace.n, trace.x, trace.exact
    if n == 1:
        return _result(trace, "comp_second_order", mpfr(0))
    sig, eta, dl, bt = _comp_factors(trace)
    with _ctx(trace):
        mu = {k: eta(k) - dl(k) for k in range(2, n)}
        mu[n] = eta(n)
        value = s[n] * sig(n) + (1 + sig(n)) * gmpy2.fsum(x[k - 1] * mu[k] for k in range(2, n + 1))
        value -= gmpy2.fsum(s[k] * sig(k) * (mu[k + 1] + dl(k) + bt(k)) for k in range(2, n))
        value -= gmpy2.fsum(x[k - 1] * dl(k) * (mu[k + 1] + bt(k) + eta(k)) for k in range(2, n))
    return _result(trace, "comp_second_order", value)


# --- tolerances -------------------------------------------------------------------

_BY_ALGORITHM = {
    "general": ("general_explicit", "general_recursive", "general_first_order"),
    "shifted": ("shifted_sequential",),
    "compensated": (
        "comp_matrix_recursion",
        "comp_explicit",
        "comp_expr_first",
        "comp_expr_second",
        "comp_first_order",
        "comp_second_order",
    ),
}

_FUNCS = {
    "general_explicit": general_explicit,
    "general_recursive": general_recursive,
    "general_first_order": general_first_order,
    "shifted_sequential": shifted_sequential_exact,
    "comp_matrix_recursion": comp_matrix_recursion,
    "comp_explicit": comp_explicit,
    "comp_expr_first": comp_expr_first,
    "comp_expr_second": comp_expr_second,
    "comp_first_order": comp_first_order,
    "comp_second_order": comp_second_order,
}


def tolerance(expression_id: str, trace: RunTrace) -> float:
    """Allowed ``|residual|`` for an expression on a given trace.

    Exact expressions get ``2**-max(40, P/2) * sum|x|``.  The truncations get
    ``4 h^2 u^2 sum|x|`` (general first order), ``50 u^2 n sum|x|`` and
    ``100 u^3 n sum|x|`` (compensated first and second order).
    """
    ax = float(trace.abs_sum)
    u, n = trace.fmt.u, trace.n
    if expression_id == "general_first_order":
        return 4 * trace.tree.height**2 * u * u * ax
    if expression_id == "comp_first_order":
        return 50 * u * u * n * ax
    if expression_id == "comp_second_order":
        return 100 * u**3 * n * ax
    return math.ldexp(ax, -max(40, trace.oracle_bits // 2))


def evaluate_all(trace: RunTrace) -> list[ExpressionResult]:
    """Every expression that applies to the trace's algorithm and shape."""
    out = []
    for eid in _BY_ALGORITHM[trace.algorithm]:
        if eid == "shifted_sequential" and trace.tree.kind != "sequential" and trace.n > 2:
            continue
        if eid == "comp_expr_second" and trace.n < 3:
            continue
        out.append(_FUNCS[eid](trace))
    return out
