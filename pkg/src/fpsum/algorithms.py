"""General, shifted and compensated summation with full roundoff tracing.

Each runner emulates the algorithm in a target format and returns a
:class:`RunTrace` holding the computed and exact partial sums and every
relative roundoff, labelled as follows:

========  =======================================================================
family    meaning
========  =======================================================================
delta     addition at tree node ``k`` (general and shifted); for compensated
          summation the roundoff of ``fl(s_k - s_{k-1})``
eps       centering ``fl(x_k - c)`` for ``k <= n``; ``eps[n+1]`` is ``fl(n*c)``
sigma     compensated running sum ``fl(s_{k-1} + y_k)``
eta       compensated corrected summand ``fl(x_k - c_{k-1})``
beta      compensated correction ``fl(fl(s_k - s_{k-1}) - y_k)``
========  =======================================================================

Shifted summation logs the final uncentering addition as ``delta[n+1]`` and the
convention ``delta[1] = 0``; compensated summation stores ``eta[2] = 0``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import gmpy2
from gmpy2 import mpfr

from .fpmodel import (
    FpFormat,
    NearestEven,
    OpStream,
    OracleError,
    Roundoff,
    RoundingMode,
    fp_add,
    fp_mul,
    fp_sub,
    is_representable,
    oracle_bits,
    parse_format,
    parse_mode,
    to_wide,
    wide_context,
)
from .sumtree import SumTree, sequential_tree, tree_from_json

__all__ = [
    "RunTrace",
    "compensated_sum",
    "exact_sum",
    "general_sum",
    "replay_compensated",
    "shifted_sum",
    "trace_from_json",
]

FAMILIES = ("delta", "eps", "sigma", "eta", "beta")


@dataclass
class RunTrace:
    """Record of one summation run; treat as read-only once returned.

    ``computed`` and ``exact`` map a node or step index ``k`` to ``ŝ_k`` and
    ``s_k``.  For shifted summation they hold the inner sums ``t̂_k``/``t_k``
    over the centered data, and ``y_exact``/``y_hat`` the centered summands
    with ``y_{n+1} = n c``.
    """

    algorithm: str
    fmt: FpFormat
    mode: RoundingMode
    x: tuple
    oracle_bits: int
    tree: SumTree | None = None
    shift: mpfr | None = None
    computed: dict = field(default_factory=dict)
    exact: dict = field(default_factory=dict)
    roundoffs: list = field(default_factory=list)
    c_hat: dict = field(default_factory=dict)
    y_hat: dict = field(default_factory=dict)
    y_exact: dict = field(default_factory=dict)
    result: mpfr = None
    exact_result: mpfr = None
    ops: int = 0

    @property
    def n(self) -> int:
        return len(self.x)

    def log(self, r: Roundoff) -> None:
        self.roundoffs.append(r)
        self.__dict__.pop("_families", None)

    def next_draw(self) -> float:
        if isinstance(self.mode, NearestEven):
            return None
        stream = self.__dict__.get("_stream")
        if stream is None:
            stream = self.__dict__["_stream"] = OpStream(self.mode.stream)
        i = self.ops
        self.ops += 1
        return stream.uniform(i)

    def family(self, name: str) -> dict[int, mpfr]:
        """All roundoffs of one family, keyed by index."""
        fams = self.__dict__.get("_families")
        if fams is None:
            fams = {f: {} for f in FAMILIES}
            for r in self.roundoffs:
                fams[r.label][r.index] = r.value
            self.__dict__["_families"] = fams
        return fams[name]

    def rd(self, name: str, k: int) -> mpfr:
        """Roundoff ``name[k]``; indices outside the run read as zero."""
        return self.family(name).get(k, mpfr(0))

    def _diff(self, a, b) -> mpfr:
        try:
            return gmpy2.context(precision=self.oracle_bits, trap_inexact=True).sub(a, b)
        except gmpy2.InexactResultError as exc:
            raise OracleError("forward error not exact in the oracle") from exc

    @property
    def e_n(self) -> mpfr:
        """Forward error ``ŝ_n - s_n`` in the oracle."""
        return self._diff(self.result, self.exact_result)

    def error(self, k: int) -> mpfr:
        """``e_k = ŝ_k - s_k`` for a recorded node or step."""
        return self._diff(self.computed[k], self.exact[k])

    @property
    def abs_sum(self) -> mpfr:
        with gmpy2.context(precision=self.oracle_bits):
            return gmpy2.fsum(abs(v) for v in self.x)

    def to_json(self) -> str:
        return json.dumps(_trace_doc(self))


def _hex(v) -> str | None:
    if v is None:
        return None
    v = v if isinstance(v, gmpy2.mpfr) else mpfr(v)
    if v == 0:
        return "0x0p0"
    m, e = v.as_mantissa_exp()
    m, e = int(m), int(e)
    tz = (m & -m).bit_length() - 1
    m, e = m >> tz, e + tz
    sign = "-" if m < 0 else ""
    return f"{sign}0x{abs(m):x}p{e}"


def _unhex(s: str | None, bits: int):
    if s is None:
        return None
    mant, exp = s.lstrip("-")[2:].split("p")
    m = int(mant, 16)
    if s.startswith("-"):
        m = -m
    with gmpy2.context(precision=max(bits, m.bit_length() + 1)):
        return gmpy2.mul_2exp(mpfr(m), int(exp))


def _trace_doc(t: RunTrace) -> dict:
    steps = sorted(set(t.computed) | set(t.exact) | {r.index for r in t.roundoffs})
    records = []
    for k in steps:
        rec = {"k": k}
        if k in t.computed:
            rec["computed"] = _hex(t.computed[k])
        if k in t.exact:
            rec["exact"] = _hex(t.exact[k])
        for name in FAMILIES:
            if k in t.family(name):
                rec[name] = _hex(t.family(name)[k])
        for name in ("c_hat", "y_hat", "y_exact"):
            d = getattr(t, name)
            if k in d:
                rec[name] = _hex(d[k])
        records.append(rec)
    return {
        "algorithm": t.algorithm,
        "fmt": t.fmt.name,
        "mode": str(t.mode),
        "stream": list(t.mode.stream) if isinstance(getattr(t.mode, "stream", 0), tuple) else getattr(t.mode, "stream", None),
        "oracle_bits": t.oracle_bits,
        "x": [_hex(v) for v in t.x],
        "tree": json.loads(t.tree.to_json()) if t.tree is not None else None,
        "shift": _hex(t.shift),
        "result": _hex(t.result),
        "exact_result": _hex(t.exact_result),
        "records": records,
        # roundoff log order, so a reload reproduces the trace exactly
        "order": [[r.label, r.index] for r in t.roundoffs],
    }


def trace_from_json(text: str) -> RunTrace:
    doc = json.loads(text)
    bits = doc["oracle_bits"]
    stream = doc.get("stream")
    mode = parse_mode(doc["mode"], tuple(stream) if isinstance(stream, list) else (stream or 0))
    t = RunTrace(
        algorithm=doc["algorithm"],
        fmt=parse_format(doc["fmt"]),
        mode=mode,
        x=tuple(_unhex(v, bits) for v in doc["x"]),
        oracle_bits=bits,
        tree=tree_from_json(json.dumps(doc["tree"])) if doc.get("tree") else None,
        shift=_unhex(doc.get("shift"), bits),
        result=_unhex(doc["result"], bits),
        exact_result=_unhex(doc["exact_result"], bits),
    )
    values: dict[tuple[str, int], mpfr] = {}
    for rec in doc["records"]:
        k = rec["k"]
        if "computed" in rec:
            t.computed[k] = _unhex(rec["computed"], bits)
        if "exact" in rec:
            t.exact[k] = _unhex(rec["exact"], bits)
        for name in ("c_hat", "y_hat", "y_exact"):
            if name in rec:
                getattr(t, name)[k] = _unhex(rec[name], bits)
        for name in FAMILIES:
            if name in rec:
                values[(name, k)] = _unhex(rec[name], bits)
    for label, k in doc["order"]:
        t.log(Roundoff(label, k, values[(label, k)]))
    return t


# --- runners ------------------------------------------------------------------


def _prepare(x, fmt, n_ops_hint, bits):
    fmt = parse_format(fmt)
    n = len(x)
    if n < 1:
        raise ValueError("need at least one summand")
    bits = bits or oracle_bits(fmt, n)
    xs = tuple(to_wide(v, bits) for v in x)
    for i, v in enumerate(xs, start=1):
        if not is_representable(v, fmt):
            raise ValueError(f"x_{i} = {v} is not representable in {fmt}")
    return fmt, xs, bits


def _exact_ctx(bits):
    return gmpy2.context(precision=bits, trap_inexact=True)


def _exact_add(ctx, a, b):
    try:
        return ctx.add(a, b)
    except gmpy2.InexactResultError as exc:
        raise OracleError("exact partial sum does not fit the oracle") from exc


def general_sum(
    tree: SumTree,
    x,
    fmt: FpFormat | str,
    mode: RoundingMode = NearestEven(),
    bits: int | None = None,
) -> RunTrace:
    """Sum ``x`` in the order given by ``tree``, rounding each addition."""
    fmt, xs, bits = _prepare(x, fmt, tree.n, bits)
    if tree.n != len(xs):
        raise ValueError(f"tree has {tree.n} leaves but {len(xs)} inputs were given")
    t = RunTrace("general", fmt, mode, xs, bits, tree=tree)
    _run_tree(t, tree, xs, fmt, mode, t.computed, t.exact, "delta")
    if tree.n == 1:
        t.result = t.exact_result = xs[0]
    else:
        t.result, t.exact_result = t.computed[tree.n], t.exact[tree.n]
    return t


def _run_tree(t, tree, xs, fmt, mode, computed, exact, family, exact_leaves=None):
    exact_leaves = exact_leaves if exact_leaves is not None else xs
    ctx = _exact_ctx(t.oracle_bits)
    for k, (a, b) in enumerate(tree.nodes, start=2):
        va = xs[-a - 1] if a < 0 else computed[a]
        vb = xs[-b - 1] if b < 0 else computed[b]
        computed[k] = fp_add(va, vb, fmt, mode, t, (family, k))
        ea = exact_leaves[-a - 1] if a < 0 else exact[a]
        eb = exact_leaves[-b - 1] if b < 0 else exact[b]
        exact[k] = _exact_add(ctx, ea, eb)


def shifted_sum(
    tree: SumTree,
    x,
    c,
    fmt: FpFormat | str,
    mode: RoundingMode = NearestEven(),
    bits: int | None = None,
) -> RunTrace:
    """Center by ``c``, sum the centered values along ``tree``, add back ``n*c``.

    ``c`` must be representable in ``fmt``.
    """
    fmt, xs, bits = _prepare(x, fmt, tree.n, bits)
    n = len(xs)
    if tree.n != n:
        raise ValueError(f"tree has {tree.n} leaves but {n} inputs were given")
    cw = to_wide(c, bits)
    if not is_representable(cw, fmt):
        raise ValueError(f"shift {c} is not representable in {fmt}")
    t = RunTrace("shifted", fmt, mode, xs, bits, tree=tree, shift=cw)
    ctx = _exact_ctx(bits)
    try:
        for k in range(1, n + 1):
            t.y_exact[k] = ctx.sub(xs[k - 1], cw)
            t.y_hat[k] = fp_sub(xs[k - 1], cw, fmt, mode, t, ("eps", k))
        t.log(Roundoff("delta", 1, mpfr(0)))
        y_hat = tuple(t.y_hat[k] for k in range(1, n + 1))
        y_exact = tuple(t.y_exact[k] for k in range(1, n + 1))
        _run_tree(t, tree, y_hat, fmt, mode, t.computed, t.exact, "delta", y_exact)
        t_hat = t.computed[n] if n > 1 else y_hat[0]
        t.y_exact[n + 1] = ctx.mul(mpfr(n), cw)
        t.y_hat[n + 1] = fp_mul(mpfr(n), cw, fmt, mode, t, ("eps", n + 1))
        t.result = fp_add(t_hat, t.y_hat[n + 1], fmt, mode, t, ("delta", n + 1))
        t.exact_result = _sum_exact(xs, bits)
    except gmpy2.InexactResultError as exc:
        raise OracleError("centered values do not fit the oracle") from exc
    t.computed[n + 1] = t.result
    t.exact[n + 1] = t.exact_result
    return t


def compensated_sum(
    x,
    fmt: FpFormat | str,
    mode: RoundingMode = NearestEven(),
    bits: int | None = None,
) -> RunTrace:
    """Kahan's compensated sequential summation.

    ``computed[k]``/``exact[k]`` are ``ŝ_k``/``s_k`` for ``k = 1..n``; the
    corrections ``ĉ_k`` and corrected summands ``ŷ_k`` are kept as well.
    """
    fmt, xs, bits = _prepare(x, fmt, len(x), bits)
    n = len(xs)
    t = RunTrace("compensated", fmt, mode, xs, bits, tree=sequential_tree(n))
    ctx = _exact_ctx(bits)
    s, c = xs[0], mpfr(0)
    t.computed[1], t.exact[1], t.c_hat[1] = s, xs[0], c
    for k in range(2, n + 1):
        y = fp_sub(xs[k - 1], c, fmt, mode, t, ("eta", k))
        s_new = fp_add(s, y, fmt, mode, t, ("sigma", k))
        d = fp_sub(s_new, s, fmt, mode, t, ("delta", k))
        c = fp_sub(d, y, fmt, mode, t, ("beta", k))
        s = s_new
        t.y_hat[k], t.c_hat[k], t.computed[k] = y, c, s
        t.exact[k] = _exact_add(ctx, t.exact[k - 1], xs[k - 1])
    t.result, t.exact_result = t.computed[n], t.exact[n]
    return t


def _sum_exact(xs, bits):
    ctx = _exact_ctx(bits)
    acc = mpfr(0)
    for v in xs:
        acc = _exact_add(ctx, acc, v)
    return acc


def exact_sum(x, bits: int | None = None) -> mpfr:
    """Oracle sum of ``x``; raises :class:`OracleError` if it is not exact."""
    from .sumtree import _bits_for

    bits = bits or _bits_for(list(x))
    return _sum_exact([to_wide(v, bits) for v in x], bits)


def replay_compensated(x, sigma, eta=None, delta=None, beta=None, bits: int = 256):
    """Re-evaluate the compensated rounding model with prescribed roundoffs.

    No rounding into a format takes place: each step applies the given
    relative perturbations in the oracle.  Missing roundoffs read as zero.
    Returns ``(s_hat, c_hat)`` dictionaries over ``k = 1..n``.
    """
    eta, delta, beta = eta or {}, delta or {}, beta or {}
    ctx = wide_context(bits)
    xs = [to_wide(v, bits) for v in x]
    s_hat, c_hat = {1: xs[0]}, {1: mpfr(0)}
    z = mpfr(0)
    with gmpy2.context(ctx):
        for k in range(2, len(xs) + 1):
            y = (xs[k - 1] - c_hat[k - 1]) * (1 + eta.get(k, z))
            s_hat[k] = (s_hat[k - 1] + y) * (1 + sigma.get(k, z))
            c_hat[k] = ((s_hat[k] - s_hat[k - 1]) * (1 + delta.get(k, z)) - y) * (1 + beta.get(k, z))
    return s_hat, c_hat
