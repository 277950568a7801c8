"""Vectorised summation across many trials at once.

Each algorithm runs on a ``(T, n)`` array (or one length-``n`` vector shared by
all ``T`` trials) with every arithmetic step applied to a length-``T`` column.
Values are carried in float64, which holds every exact sum, difference and
``n * c`` product of the emulated format exactly as long as

* the format's whole range fits in 53 bits: ``emax - emin + p + 2 <= 53``;
* ``n.bit_length() + p <= 53`` for the product ``n * c``.

Those conditions are checked up front, so each emulated operation is one exact
float64 operation followed by :func:`~fpsum.fpmodel.round_array`.

Stochastic draws for operation ``i`` of trial ``t`` come from index
``i * T + t`` of the :class:`~fpsum.fpmodel.OpStream`; with ``T == 1`` a batch
run consumes exactly the draws of the scalar engine in :mod:`fpsum.algorithms`
and returns the same result.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fpmodel import FpFormat, NearestEven, OpStream, RoundingMode, parse_format, round_array
from .sumtree import SumTree

__all__ = ["BatchResult", "batch_compensated", "batch_general", "batch_sequential", "batch_shifted", "check_carrier"]


@dataclass
class BatchResult:
    """Per-trial computed and exact sums.

    ``node_errors`` (if requested) maps a node index to the length-``T``
    array ``e_k = ŝ_k - s_k``; ``child_errors`` maps it to ``f_k``, the sum of
    its children's errors.
    """

    computed: np.ndarray
    exact: np.ndarray
    node_errors: dict = field(default_factory=dict)
    child_errors: dict = field(default_factory=dict)

    @property
    def errors(self) -> np.ndarray:
        return self.computed - self.exact


def check_carrier(fmt: FpFormat, n: int) -> None:
    """Raise unless float64 can carry exact results for ``fmt`` and ``n`` inputs."""
    p = fmt.precision_bits
    if fmt.emax - fmt.emin + p + 2 > 53:
        raise ValueError(f"{fmt} is too wide for the float64 batch engine")
    if n.bit_length() + p > 53:
        raise ValueError(f"n = {n} is too large for exact n*c products in {fmt}")


class _Rounder:
    def __init__(self, fmt, mode, T, subnormal):
        self.fmt, self.T, self.subnormal = fmt, T, subnormal
        self.stream = None if isinstance(mode, NearestEven) else OpStream(mode.stream)
        self.op = 0

    def __call__(self, exact: np.ndarray) -> np.ndarray:
        u = None
        if self.stream is not None:
            u = self.stream.block(self.op * self.T, self.T)
        self.op += 1
        return round_array(exact, self.fmt, u, self.subnormal)


def _prep(x, fmt, trials):
    fmt = parse_format(fmt)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        T = trials or 1
        x = np.broadcast_to(x, (T, x.size))
    elif trials not in (None, x.shape[0]):
        raise ValueError("trials disagrees with the data's leading dimension")
    T, n = x.shape
    if n < 1:
        raise ValueError("need at least one summand")
    check_carrier(fmt, n)
    if not np.array_equal(round_array(x, fmt, subnormal=True), x):
        raise ValueError(f"inputs are not representable in {fmt}")
    return fmt, x, T, n


def _tree_sum(tree, leaves, exact_leaves, rnd, record):
    """Run ``tree`` over columns; returns (computed, exact, errors, f)."""
    comp: dict[int, np.ndarray] = {}
    ex: dict[int, np.ndarray] = {}
    errs: dict[int, np.ndarray] = {}
    fs: dict[int, np.ndarray] = {}
    for k, (a, b) in enumerate(tree.nodes, start=2):
        va = leaves[:, -a - 1] if a < 0 else comp.pop(a)
        vb = leaves[:, -b - 1] if b < 0 else comp.pop(b)
        ea = exact_leaves[:, -a - 1] if a < 0 else ex.pop(a)
        eb = exact_leaves[:, -b - 1] if b < 0 else ex.pop(b)
        comp[k] = rnd(va + vb)
        ex[k] = ea + eb
        if record:
            fa = (leaves[:, -a - 1] - exact_leaves[:, -a - 1]) if a < 0 else errs[a]
            fb = (leaves[:, -b - 1] - exact_leaves[:, -b - 1]) if b < 0 else errs[b]
            fs[k] = fa + fb
            errs[k] = comp[k] - ex[k]
    root = tree.n
    if tree.n == 1:
        return leaves[:, 0].copy(), exact_leaves[:, 0].copy(), errs, fs
    return comp[root], ex[root], errs, fs


def batch_general(
    tree: SumTree,
    x,
    fmt: FpFormat | str,
    mode: RoundingMode = NearestEven(),
    trials: int | None = None,
    record: bool = False,
    subnormal: bool = False,
) -> BatchResult:
    """General summation along ``tree`` for every trial.

    ``record=True`` keeps ``e_k`` and ``f_k`` for every node.
    """
    fmt, x, T, n = _prep(x, fmt, trials)
    if tree.n != n:
        raise ValueError(f"tree has {tree.n} leaves but {n} inputs were given")
    rnd = _Rounder(fmt, mode, T, subnormal)
    comp, ex, errs, fs = _tree_sum(tree, x, x, rnd, record)
    return BatchResult(comp, ex, errs, fs)


def batch_shifted(
    tree: SumTree,
    x,
    c,
    fmt: FpFormat | str,
    mode: RoundingMode = NearestEven(),
    trials: int | None = None,
    subnormal: bool = False,
) -> BatchResult:
    """Shifted summation; ``c`` is a scalar or one shift per trial."""
    fmt, x, T, n = _prep(x, fmt, trials)
    if tree.n != n:
        raise ValueError(f"tree has {tree.n} leaves but {n} inputs were given")
    c = np.broadcast_to(np.asarray(c, dtype=np.float64), (T,))
    if not np.array_equal(round_array(c, fmt, subnormal=True), c):
        raise ValueError(f"shift is not representable in {fmt}")
    rnd = _Rounder(fmt, mode, T, subnormal)
    y_exact = x - c[:, None]
    y_hat = np.empty_like(y_exact)
    for k in range(n):
        y_hat[:, k] = rnd(y_exact[:, k])
    t_hat, _, _, _ = _tree_sum(tree, y_hat, y_exact, rnd, False)
    nc = rnd(n * c)
    result = rnd(t_hat + nc)
    return BatchResult(result, x.sum(axis=1))


def batch_compensated(
    x,
    fmt: FpFormat | str,
    mode: RoundingMode = NearestEven(),
    trials: int | None = None,
    prefixes: bool = False,
    subnormal: bool = False,
) -> BatchResult:
    """Compensated summation for every trial.

    ``prefixes=True`` returns ``(T, n)`` arrays of every ``ŝ_k`` and ``s_k``.
    """
    fmt, x, T, n = _prep(x, fmt, trials)
    rnd = _Rounder(fmt, mode, T, subnormal)
    s = x[:, 0].copy()
    c = np.zeros(T)
    exact = np.cumsum(x, axis=1)
    hats = np.empty((T, n)) if prefixes else None
    if prefixes:
        hats[:, 0] = s
    for k in range(1, n):
        y = rnd(x[:, k] - c)
        s_new = rnd(s + y)
        d = rnd(s_new - s)
        c = rnd(d - y)
        s = s_new
        if prefixes:
            hats[:, k] = s
    if prefixes:
        return BatchResult(hats, exact)
    return BatchResult(s, exact[:, -1])


def batch_sequential(
    x,
    fmt: FpFormat | str,
    mode: RoundingMode = NearestEven(),
    trials: int | None = None,
    subnormal: bool = False,
) -> BatchResult:
    """Left-to-right summation returning every prefix: ``(T, n)`` arrays of ``ŝ_k`` and ``s_k``."""
    fmt, x, T, n = _prep(x, fmt, trials)
    rnd = _Rounder(fmt, mode, T, subnormal)
    hats = np.empty((T, n))
    hats[:, 0] = x[:, 0]
    for k in range(1, n):
        hats[:, k] = rnd(hats[:, k - 1] + x[:, k])
    return BatchResult(hats, np.cumsum(x, axis=1))
