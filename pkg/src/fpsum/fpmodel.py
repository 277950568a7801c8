"""Emulated binary floating-point arithmetic with exact roundoff extraction.

Every emulated operation works on values held in a wide binary oracle
(``gmpy2.mpfr`` at ``P`` bits, see :func:`oracle_bits`).  The exact result of
``a + b``, ``a - b`` or ``a * b`` is formed in the oracle -- an inexact oracle
operation raises :class:`OracleError` rather than silently losing bits -- and is
then rounded once into the target :class:`FpFormat`.  The relative roundoff
``delta = fl(x)/x - 1`` is returned alongside the rounded value.

Two rounding modes are supported: round-to-nearest-even and stochastic rounding
"by nearness" (round away from the truncated value with probability equal to
the remainder in ulps).  Stochastic draws come from a counter-based generator
indexed by operation number, so a run is reproducible from its stream key
alone.

A second, vectorised path (:func:`round_array`) rounds float64 arrays.  It is
only exact when the float64 carrier holds the unrounded value exactly, which
callers guarantee (see :mod:`fpsum.batch`).
"""

from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import gmpy2
import numpy as np
from gmpy2 import mpfr

__all__ = [
    "BINARY16",
    "BINARY32",
    "BINARY64",
    "FpFormat",
    "NearestEven",
    "OpStream",
    "OracleError",
    "RangeError",
    "Roundoff",
    "RoundingMode",
    "StochasticNearness",
    "effective_u",
    "fp_add",
    "fp_mul",
    "fp_sub",
    "is_representable",
    "oracle_bits",
    "parse_format",
    "parse_mode",
    "round_array",
    "round_value",
    "to_wide",
    "unit_roundoff",
    "wide_context",
]

WideReal = mpfr


class RangeError(ArithmeticError):
    """Result overflows the format or falls into its subnormal range."""


class OracleError(ArithmeticError):
    """An operation that must be exact in the oracle was not."""


@dataclass(frozen=True)
class FpFormat:
    """Binary floating-point format with ``precision_bits`` significand bits.

    ``precision_bits`` counts the implicit bit, so binary64 has 53.  Normal
    numbers have exponents ``emin <= e <= emax`` in the convention
    ``x = m * 2**e`` with ``1 <= |m| < 2``.
    """

    precision_bits: int
    emin: int
    emax: int
    name: str = ""

    def __post_init__(self):
        if self.precision_bits < 2:
            raise ValueError(f"precision_bits must be >= 2, got {self.precision_bits}")
        if self.emin >= self.emax:
            raise ValueError(f"need emin < emax, got emin={self.emin}, emax={self.emax}")
        if not self.name:
            object.__setattr__(
                self,
                "name",
                f"custom:p={self.precision_bits},emin={self.emin},emax={self.emax}",
            )

    @property
    def u(self) -> float:
        """Unit roundoff as a Python float."""
        return math.ldexp(1.0, -self.precision_bits)

    @property
    def min_normal(self) -> mpfr:
        return gmpy2.mul_2exp(mpfr(1), self.emin)

    @property
    def max_finite(self) -> mpfr:
        p = self.precision_bits
        with gmpy2.context(precision=p + 2):
            return gmpy2.mul_2exp(mpfr(2) - gmpy2.mul_2exp(mpfr(1), 1 - p), self.emax)

    def __str__(self) -> str:
        return self.name


BINARY16 = FpFormat(11, -14, 15, "binary16")
BINARY32 = FpFormat(24, -126, 127, "binary32")
BINARY64 = FpFormat(53, -1022, 1023, "binary64")

_NAMED = {f.name: f for f in (BINARY16, BINARY32, BINARY64)}
_CUSTOM = re.compile(r"^custom:p=(\d+),emin=(-?\d+),emax=(-?\d+)$")


def parse_format(spec: str | FpFormat) -> FpFormat:
    """Accept ``binary16|binary32|binary64`` or ``custom:p=<bits>,emin=<e>,emax=<e>``."""
    if isinstance(spec, FpFormat):
        return spec
    key = spec.strip().replace(" ", "")
    if key in _NAMED:
        return _NAMED[key]
    m = _CUSTOM.match(key)
    if m is None:
        raise ValueError(f"unknown format {spec!r}")
    p, emin, emax = (int(g) for g in m.groups())
    return FpFormat(p, emin, emax)


def unit_roundoff(fmt: FpFormat) -> mpfr:
    """``2**-precision_bits``, exactly."""
    return gmpy2.mul_2exp(mpfr(1), -fmt.precision_bits)


# --- rounding modes ---------------------------------------------------------


@dataclass(frozen=True)
class NearestEven:
    """Round to nearest, ties to even."""

    bound_factor = 1

    def __str__(self) -> str:
        return "nearest"


@dataclass(frozen=True)
class StochasticNearness:
    """Stochastic rounding; ``stream`` keys the per-operation random draws."""

    stream: int | tuple[int, ...] = 0

    bound_factor = 2

    def __str__(self) -> str:
        return "stochastic"


RoundingMode = Union[NearestEven, StochasticNearness]


def parse_mode(name: str, stream: int | tuple[int, ...] = 0) -> RoundingMode:
    if name in ("nearest", "NearestEven", "rne"):
        return NearestEven()
    if name in ("stochastic", "StochasticNearness", "sr"):
        return StochasticNearness(stream)
    raise ValueError(f"unknown rounding mode {name!r}")


def effective_u(fmt: FpFormat, mode: RoundingMode | None = None) -> float:
    """Roundoff bound per operation: ``u`` for nearest, ``2u`` for stochastic."""
    factor = 1 if mode is None else mode.bound_factor
    return factor * fmt.u


def _philox_key(stream) -> int:
    entropy = list(stream) if isinstance(stream, tuple) else [stream]
    words = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint64)
    return int(words[0]) | (int(words[1]) << 64)


class OpStream:
    """Uniform draws on [0, 1) addressed by absolute operation index.

    Draw ``i`` depends only on ``(stream, i)``; a Philox counter of ``c``
    yields draws ``4c .. 4c+3``.
    """

    BLOCK = 1024  # multiple of 4

    def __init__(self, stream):
        self.stream = stream
        self._key = _philox_key(stream)
        self._cache: dict[int, np.ndarray] = {}

    def _raw(self, start: int, count: int) -> np.ndarray:
        offset = start % 4
        gen = np.random.Philox(key=self._key, counter=start // 4)
        raw = gen.random_raw(count + offset)[offset:]
        return (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def block(self, start: int, count: int) -> np.ndarray:
        return self._raw(start, count)

    def uniform(self, i: int) -> float:
        b, r = divmod(i, self.BLOCK)
        blk = self._cache.get(b)
        if blk is None:
            blk = self._raw(b * self.BLOCK, self.BLOCK)
            if len(self._cache) > 64:
                self._cache.clear()
            self._cache[b] = blk
        return float(blk[r])


# --- the wide oracle ----------------------------------------------------------


def oracle_bits(fmt: FpFormat, n: int = 1) -> int:
    """Oracle precision ``P`` for runs of length ``n`` in ``fmt``.

    Default ``4p + ceil(log2 n) + 32``; ``FPSUM_ORACLE_BITS`` overrides it.
    """
    env = os.environ.get("FPSUM_ORACLE_BITS")
    if env:
        return int(env)
    return 4 * fmt.precision_bits + math.ceil(math.log2(max(n, 1))) + 32


@lru_cache(maxsize=None)
def _exact_ctx(bits: int):
    return gmpy2.context(precision=bits, trap_inexact=True)


@lru_cache(maxsize=None)
def wide_context(bits: int):
    """Round-to-nearest oracle context used for roundoffs and expressions."""
    return gmpy2.context(precision=bits)


@lru_cache(maxsize=None)
def _fmt_ctx(p: int, rnd):
    return gmpy2.context(precision=p, round=rnd)


def to_wide(v, bits: int) -> mpfr:
    """Exact conversion into the oracle; raises :class:`OracleError` if lossy."""
    if isinstance(v, str):
        return _parse_literal(v, bits)
    r = mpfr(v, bits)
    if r != v:  # comparisons between mpfr and int/float are exact
        raise OracleError(f"{v!r} does not fit in {bits} oracle bits")
    return r


def _parse_literal(text: str, bits: int) -> mpfr:
    text = text.strip()
    if "x" in text.lower():
        return to_wide(float.fromhex(text), bits)
    return mpfr(text, bits)


def _exact(op: str, a, b, bits: int) -> mpfr:
    try:
        return getattr(_exact_ctx(bits), op)(a, b)
    except gmpy2.InexactResultError as exc:
        raise OracleError(
            f"exact {op} of {a} and {b} needs more than {bits} oracle bits"
        ) from exc


def _check_range(value: mpfr, exact: mpfr, fmt: FpFormat) -> None:
    # no abs(): it would round to the ambient 53-bit context
    tiny = fmt.min_normal
    if exact != 0 and -tiny < exact < tiny:
        raise RangeError(f"{exact} underflows into the subnormal range of {fmt}")
    big = fmt.max_finite
    if value > big or value < -big:
        raise RangeError(f"{exact} overflows {fmt}")


def round_value(
    x: mpfr,
    fmt: FpFormat,
    mode: RoundingMode,
    draw: float | None = None,
    bits: int | None = None,
) -> tuple[mpfr, mpfr]:
    """Round the oracle value ``x`` into ``fmt``.

    Returns ``(value, delta)`` with ``value = x * (1 + delta)``; ``delta`` is
    computed in the oracle and is exactly zero when ``x`` is representable.
    Stochastic rounding needs ``draw``, a uniform number on [0, 1): the
    result rounds away from the truncated value iff ``draw < remainder``.
    """
    bits = bits or oracle_bits(fmt)
    p = fmt.precision_bits
    if x == 0:
        return mpfr(0), mpfr(0)
    if isinstance(mode, NearestEven):
        value = _fmt_ctx(p, gmpy2.RoundToNearest).plus(x)
    else:
        down = _fmt_ctx(p, gmpy2.RoundToZero).plus(x)
        if down == x:
            value = down
        else:
            if draw is None:
                raise ValueError("stochastic rounding needs a uniform draw")
            up = _fmt_ctx(p, gmpy2.RoundAwayZero).plus(x)
            ctx = wide_context(bits)
            frac = ctx.div(ctx.sub(x, down), ctx.sub(up, down))
            value = up if draw < frac else down
    _check_range(value, x, fmt)
    if value == x:
        return value, mpfr(0)
    ctx = wide_context(bits)
    return value, ctx.div(ctx.sub(value, x), x)


def is_representable(v, fmt: FpFormat) -> bool:
    x = v if isinstance(v, mpfr) else mpfr(v)
    if x == 0:
        return True
    if not gmpy2.is_finite(x):
        return False
    if _fmt_ctx(fmt.precision_bits, gmpy2.RoundToNearest).plus(x) != x:
        return False
    tiny, big = fmt.min_normal, fmt.max_finite
    return (tiny <= x <= big) or (-big <= x <= -tiny)


@dataclass(frozen=True)
class Roundoff:
    """One logged relative roundoff, e.g. ``Roundoff("delta", 3, value)``."""

    label: str
    index: int
    value: mpfr


def _draw(mode: RoundingMode, trace) -> float | None:
    if isinstance(mode, NearestEven):
        return None
    if trace is not None:
        return trace.next_draw()
    raise ValueError("stochastic operations outside a trace need an explicit draw")


def _fp_op(op, a, b, fmt, mode, trace, label, draw):
    bits = trace.oracle_bits if trace is not None else oracle_bits(fmt)
    exact = _exact(op, a, b, bits)
    if draw is None:
        draw = _draw(mode, trace)
    value, delta = round_value(exact, fmt, mode, draw, bits)
    if trace is not None and label is not None:
        trace.log(Roundoff(label[0], label[1], delta))
    return value, delta


def fp_add(a, b, fmt, mode, trace=None, label=None, draw=None):
    """``fl(a + b)``; logs ``Roundoff(*label, delta)`` into ``trace``.

    ``label`` is a ``(family, index)`` pair such as ``("sigma", 4)``.
    Returns the rounded value; the roundoff is recorded in the trace.
    """
    return _fp_op("add", a, b, fmt, mode, trace, label, draw)[0]


def fp_sub(a, b, fmt, mode, trace=None, label=None, draw=None):
    return _fp_op("sub", a, b, fmt, mode, trace, label, draw)[0]


def fp_mul(a, b, fmt, mode, trace=None, label=None, draw=None):
    return _fp_op("mul", a, b, fmt, mode, trace, label, draw)[0]


# --- vectorised float64 path ----------------------------------------------------


def round_array(
    x: np.ndarray,
    fmt: FpFormat,
    uniforms: np.ndarray | None = None,
    subnormal: bool = False,
) -> np.ndarray:
    """Round exact float64 values into ``fmt``; nearest-even unless ``uniforms``.

    The caller guarantees that each entry of ``x`` is the exact, unrounded
    result.  Scaling by powers of two keeps every step exact, so the only
    rounding is the integer rounding of the scaled significand.  Stochastic
    rounding works on magnitudes, matching :func:`round_value`: away from zero
    iff ``uniform < remainder``.

    With ``subnormal=True`` tiny results round on the fixed quantum
    ``2**(emin - p + 1)`` (IEEE gradual underflow) instead of raising.
    """
    x = np.asarray(x, dtype=np.float64)
    p = fmt.precision_bits
    if p > 53:
        raise ValueError("float64 carrier cannot hold formats wider than binary64")
    _, expo = np.frexp(x)
    tiny = (x != 0) & (expo - 1 < fmt.emin)
    if tiny.any():
        if not subnormal:
            raise RangeError(f"{x[tiny].ravel()[0]!r} underflows into the subnormal range of {fmt}")
        expo = np.maximum(expo, fmt.emin + 1)
    a = np.ldexp(np.abs(x), p - expo)
    if uniforms is None:
        r = np.rint(a)
    else:
        lo = np.floor(a)
        r = lo + (uniforms < a - lo)
    out = np.copysign(np.ldexp(r, expo - p), x)
    if fmt.emax <= 1023 and np.any(np.abs(out) > float(fmt.max_finite)):
        raise RangeError(f"result overflows {fmt}")
    return out
