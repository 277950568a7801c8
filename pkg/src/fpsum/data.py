"""Input generators and shift selection.

All generators return float64 arrays whose entries are machine numbers of the
requested format.  ``lattice=True`` additionally snaps every value to a
multiple of the format's smallest normal number ``2**emin``; sums and
differences of such values can never land strictly between zero and
``2**emin``, so runs on lattice data stay clear of the subnormal range.
"""

from __future__ import annotations

import math
from fractions import Fraction
from itertools import accumulate

import numpy as np

from .fpmodel import FpFormat, parse_format, round_array

__all__ = ["ExactPrefix", "choose_shift", "gen_fuzz", "gen_normal", "gen_uniform_shifted", "to_format"]


def _snap(x: np.ndarray, fmt: FpFormat) -> np.ndarray:
    q = math.ldexp(1.0, fmt.emin)
    return np.rint(x / q) * q


def to_format(x, fmt: FpFormat | str, lattice: bool = False) -> np.ndarray:
    """Round float64 values into ``fmt`` (nearest-even).

    Values below the normal range are flushed to the lattice (``lattice``) or,
    for binary64, left to the hardware.
    """
    fmt = parse_format(fmt)
    x = np.asarray(x, dtype=np.float64)
    if fmt.precision_bits == 53 and fmt.emin == -1022:
        return x.copy()
    if lattice:
        x = _snap(x, fmt)
    else:
        # values under the normal range are flushed to zero
        x = np.where(np.abs(x) < math.ldexp(1.0, fmt.emin), 0.0, x)
    return round_array(x, fmt)


def gen_uniform_shifted(m: float, n: int, seed: int, fmt: FpFormat | str = "binary64", lattice: bool = False) -> np.ndarray:
    """``m + uniform[0, 1]`` draws rounded into ``fmt``."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    rng = np.random.default_rng(seed)
    return to_format(m + rng.random(n), fmt, lattice)


def gen_normal(n: int, seed: int, fmt: FpFormat | str = "binary64", lattice: bool = False) -> np.ndarray:
    """Standard normal draws rounded into ``fmt``."""
    rng = np.random.default_rng(seed)
    return to_format(rng.standard_normal(n), fmt, lattice)


def gen_fuzz(rng: np.random.Generator, n: int, fmt: FpFormat | str, kind: str | None = None) -> np.ndarray:
    """Lattice test data of a random (or given) flavour.

    ``normal`` mixes signs, ``uniform`` is positive, ``clustered`` sits near
    a common offset, ``wide`` spans several binades and ``ties`` uses
    full-width significands so that rounding ties occur.
    """
    fmt = parse_format(fmt)
    kinds = ("normal", "uniform", "clustered", "wide", "ties")
    kind = kind or kinds[rng.integers(len(kinds))]
    if kind == "normal":
        x = rng.standard_normal(n)
    elif kind == "uniform":
        x = rng.random(n)
    elif kind == "clustered":
        x = 16.0 + rng.random(n)
    elif kind == "wide":
        x = rng.choice([-1.0, 1.0], n) * np.exp2(rng.uniform(-3, 5, n))
    elif kind == "ties":
        # full-width significands: most two-term sums need one bit too many
        p = fmt.precision_bits
        m = rng.integers(1 << (p - 1), 1 << p, n).astype(np.float64)
        x = rng.choice([-1.0, 1.0], n) * np.ldexp(m, -(n.bit_length() + 1))
    else:
        raise ValueError(f"unknown fuzz kind {kind!r}")
    return to_format(x, fmt, lattice=True)


def choose_shift(x, fmt: FpFormat | str = "binary64", lattice: bool = False) -> float:
    """``(min x + max x) / 2``, formed exactly and then rounded into ``fmt``."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot choose a shift for empty data")
    # float() of the exact midpoint rounds correctly; narrower formats fit exactly
    mid = float((Fraction(float(x.min())) + Fraction(float(x.max()))) / 2)
    return float(to_format(np.array([mid]), fmt, lattice)[0])


class ExactPrefix:
    """Exact prefix sums of float data, held as integers times ``2**scale``.

    Every float is an integer multiple of a power of two, so scaling all
    inputs to the finest such power turns the prefix sums into exact integer
    sums.  Results are converted back to float64 with a single correct
    rounding.
    """

    def __init__(self, x):
        self.x = np.asarray(x, dtype=np.float64)
        self.n = self.x.size
        self.ints, self.scale = self.integers(self.x)
        self._pref = list(accumulate(self.ints)) if self.ints else []

    @staticmethod
    def integers(x, scale: int | None = None) -> tuple[list[int], int]:
        """``(ints, scale)`` with ``x[i] == ints[i] * 2**scale`` exactly."""
        ratios = [float(v).as_integer_ratio() for v in np.asarray(x, dtype=np.float64).ravel()]
        shifts = [den.bit_length() - 1 for _, den in ratios]
        if scale is None:
            scale = -max(shifts, default=0)
        return [num << (-scale - d) for (num, _), d in zip(ratios, shifts)], scale

    def _float(self, i: int, scale: int | None = None) -> float:
        return math.ldexp(float(i), self.scale if scale is None else scale) if i else 0.0

    def _with(self, c: float):
        """Integers of ``x`` and ``c`` on a common scale."""
        _, sc = self.integers([c])
        scale = min(self.scale, sc)
        ints = [v << (self.scale - scale) for v in self.ints]
        ci = self.integers([c], scale)[0][0]
        return ints, ci, scale

    def total(self) -> float:
        return self._float(self._pref[-1]) if self._pref else 0.0

    def prefix(self, k: int) -> Fraction:
        """``s_k`` as an exact fraction (``k`` is 1-based)."""
        return Fraction(self._pref[k - 1]) * Fraction(2) ** self.scale

    def prefixes(self) -> np.ndarray:
        return np.array([self._float(v) for v in self._pref])

    def centered(self, c: float) -> np.ndarray:
        """``s_k - k c`` for ``k = 1..n``."""
        ints, ci, scale = self._with(c)
        return np.array([self._float(v - (k + 1) * ci, scale) for k, v in enumerate(accumulate(ints))])

    def centered_terms(self, c: float) -> np.ndarray:
        """``x_k - c``."""
        ints, ci, scale = self._with(c)
        return np.array([self._float(v - ci, scale) for v in ints])

    def rel_error(self, k: int, computed: float) -> float:
        """``|computed - s_k| / |s_k|``, or ``nan`` when ``s_k == 0``."""
        s = self.prefix(k)
        if s == 0:
            return math.nan
        return float(abs(Fraction(float(computed)) - s) / abs(s))
