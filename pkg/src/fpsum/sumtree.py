"""Binary computational trees describing a summation order.

A tree over ``n`` inputs has leaves ``x_1 .. x_n`` and internal nodes
``s_2 .. s_n``; the index of an internal node is also its execution time, so
``s_n`` is the root and the children of ``s_k`` are leaves or nodes ``s_j`` with
``j < k``.  Children are encoded as integers: ``-i`` for leaf ``x_i`` and ``k``
for node ``s_k``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property

import gmpy2
import numpy as np

from .fpmodel import OracleError, to_wide

__all__ = [
    "SumTree",
    "exact_partial_sums",
    "make_tree",
    "pairwise_tree",
    "random_tree",
    "sequential_tree",
    "tree_from_json",
]


def _ref_name(ref: int) -> str:
    return f"x{-ref}" if ref < 0 else f"s{ref}"


def _parse_ref(name: str) -> int:
    kind, idx = name[0], int(name[1:])
    if kind == "x":
        return -idx
    if kind == "s":
        return idx
    raise ValueError(f"bad node reference {name!r}")


@dataclass(frozen=True)
class SumTree:
    """Summation order over ``n`` leaves; ``nodes[k - 2]`` holds the children of ``s_k``."""

    n: int
    nodes: tuple[tuple[int, int], ...]
    kind: str = "custom"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("a summation tree needs at least one leaf")
        if len(self.nodes) != self.n - 1:
            raise ValueError(f"{self.n} leaves need {self.n - 1} internal nodes")
        seen: set[int] = set()
        for k, pair in enumerate(self.nodes, start=2):
            for ref in pair:
                if ref < 0 and not 1 <= -ref <= self.n:
                    raise ValueError(f"node s{k} references missing leaf x{-ref}")
                if ref >= 0 and not 2 <= ref < k:
                    raise ValueError(f"node s{k} references s{ref}, not executed before it")
                if ref in seen:
                    raise ValueError(f"{_ref_name(ref)} has two parents")
                seen.add(ref)
        if self.n > 1 and len(seen) != 2 * self.n - 2:
            raise ValueError("tree is not connected")

    @property
    def root(self) -> int:
        """Root reference: ``s_n``, or the lone leaf ``x_1`` when ``n == 1``."""
        return self.n if self.n > 1 else -1

    def children(self, k: int) -> tuple[int, int]:
        self._check(k)
        return self.nodes[k - 2]

    def _check(self, k: int) -> None:
        if not 2 <= k <= self.n:
            raise IndexError(f"no internal node s{k} in a tree with n={self.n}")

    @cached_property
    def parent(self) -> dict[int, int]:
        """Parent node index for every reference except the root."""
        out = {}
        for k, pair in enumerate(self.nodes, start=2):
            for ref in pair:
                out[ref] = k
        return out

    @cached_property
    def node_heights(self) -> dict[int, int]:
        h: dict[int, int] = {}
        for k, (a, b) in enumerate(self.nodes, start=2):
            h[k] = 1 + max(h.get(a, 0) if a > 0 else 0, h.get(b, 0) if b > 0 else 0)
        return h

    @cached_property
    def height(self) -> int:
        return self.node_heights[self.n] if self.n > 1 else 0

    @cached_property
    def _ancestors(self) -> dict[int, tuple[int, ...]]:
        anc: dict[int, tuple[int, ...]] = {self.n: ()} if self.n > 1 else {}
        # parents have larger indices, so walk downward from the root
        for k in range(self.n - 1, 1, -1):
            p = self.parent[k]
            anc[k] = (p,) + anc[p]
        return {k: tuple(sorted(v)) for k, v in anc.items()}

    def ancestors(self, k: int) -> tuple[int, ...]:
        """Internal nodes ``j`` with ``k`` below ``j``, in execution order."""
        self._check(k)
        return self._ancestors[k]

    @cached_property
    def _descendants(self) -> dict[int, tuple[int, ...]]:
        desc: dict[int, list[int]] = {k: [] for k in range(2, self.n + 1)}
        for k, up in self._ancestors.items():
            for j in up:
                desc[j].append(k)
        return {k: tuple(sorted(v)) for k, v in desc.items()}

    def descendants(self, k: int) -> tuple[int, ...]:
        """Internal nodes strictly below ``s_k``."""
        self._check(k)
        return self._descendants[k]

    def is_descendant(self, j: int, k: int) -> bool:
        """``True`` iff ``s_j`` lies strictly below ``s_k``."""
        self._check(j)
        self._check(k)
        return k in self._ancestors[j]

    @cached_property
    def leaves(self) -> dict[int, tuple[int, ...]]:
        """Leaf indices (1-based) under each internal node."""
        out: dict[int, tuple[int, ...]] = {}
        for k, pair in enumerate(self.nodes, start=2):
            acc: list[int] = []
            for ref in pair:
                acc.extend((-ref,) if ref < 0 else out[ref])
            out[k] = tuple(acc)
        return out

    @cached_property
    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Children as integer arrays, for the vectorised engine."""
        if not self.nodes:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        a = np.array(self.nodes, dtype=np.int64)
        return a[:, 0], a[:, 1]

    def to_json(self) -> str:
        return json.dumps(
            {
                "n": self.n,
                "kind": self.kind,
                "nodes": [
                    {"id": f"s{k}", "left": _ref_name(a), "right": _ref_name(b)}
                    for k, (a, b) in enumerate(self.nodes, start=2)
                ],
            }
        )


def tree_from_json(text: str) -> SumTree:
    doc = json.loads(text)
    nodes = sorted(doc["nodes"], key=lambda d: _parse_ref(d["id"]))
    for k, d in enumerate(nodes, start=2):
        if _parse_ref(d["id"]) != k:
            raise ValueError(f"node ids must be s2..s{doc['n']}, found {d['id']}")
    return SumTree(
        doc["n"],
        tuple((_parse_ref(d["left"]), _parse_ref(d["right"])) for d in nodes),
        doc.get("kind", "custom"),
    )


def sequential_tree(n: int) -> SumTree:
    """Left-to-right accumulation; ``s_k = s_{k-1} + x_k``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    nodes = tuple((k - 1 if k > 2 else -1, -k) for k in range(2, n + 1))
    return SumTree(n, nodes, "sequential")


def pairwise_tree(n: int) -> SumTree:
    """Balanced pairing level by level; an odd element moves up unchanged."""
    if n < 1:
        raise ValueError("n must be >= 1")
    level = [-i for i in range(1, n + 1)]
    nodes: list[tuple[int, int]] = []
    while len(level) > 1:
        nxt = []
        for i in range(0, len(level) - 1, 2):
            nodes.append((level[i], level[i + 1]))
            nxt.append(len(nodes) + 1)
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return SumTree(n, tuple(nodes), "pairwise")


def random_tree(n: int, seed: int) -> SumTree:
    """Merge two uniformly chosen pool members until one remains."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    pool = [-i for i in range(1, n + 1)]
    nodes: list[tuple[int, int]] = []
    while len(pool) > 1:
        i, j = sorted(rng.choice(len(pool), size=2, replace=False).tolist())
        b = pool.pop(j)
        a = pool.pop(i)
        nodes.append((a, b))
        pool.append(len(nodes) + 1)
    return SumTree(n, tuple(nodes), "random")


def make_tree(kind: str, n: int, seed: int = 0) -> SumTree:
    if kind == "sequential":
        return sequential_tree(n)
    if kind == "pairwise":
        return pairwise_tree(n)
    if kind == "random":
        return random_tree(n, seed)
    raise ValueError(f"unknown tree kind {kind!r}")


def exact_partial_sums(tree: SumTree, x, bits: int | None = None) -> dict[int, gmpy2.mpfr]:
    """Exact ``s_k`` for every internal node, formed in the oracle.

    ``bits`` defaults to enough for any sum of the given float64 inputs'
    magnitudes; an inexact oracle addition raises :class:`OracleError`.
    """
    if len(x) != tree.n:
        raise ValueError(f"tree has {tree.n} leaves but {len(x)} inputs were given")
    if bits is None:
        bits = _bits_for(x)
    ctx = gmpy2.context(precision=bits, trap_inexact=True)
    xs = [to_wide(v, bits) for v in x]
    s: dict[int, gmpy2.mpfr] = {}
    try:
        for k, (a, b) in enumerate(tree.nodes, start=2):
            s[k] = ctx.add(xs[-a - 1] if a < 0 else s[a], xs[-b - 1] if b < 0 else s[b])
    except gmpy2.InexactResultError as exc:
        raise OracleError(f"partial sums need more than {bits} oracle bits") from exc
    return s


def _bits_for(x) -> int:
    """Bits that hold every exact partial sum of ``x`` (binary inputs)."""
    exps = [gmpy2.mpfr(v).as_mantissa_exp() for v in x if v != 0]
    if not exps:
        return 64
    lo = min(int(e) + int(gmpy2.bit_scan1(m)) for m, e in exps)
    hi = max(int(e) + int(gmpy2.mpz(abs(m)).bit_length()) for m, e in exps)
    return max(64, hi - lo + math.ceil(math.log2(len(x))) + 2)
