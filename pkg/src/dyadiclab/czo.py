"""Discretized multilinear Calderon-Zygmund operators and their commutators.

Kernels are truncated inverse powers of D = sum_j |x - y_j| + eps*h:

  positive:  s / D^n
  odd:       s * sum_j (x - y_j) / D^(n+1)

Both depend on (x, y) only through the signed cell offsets, so T f at a
cell a is a contraction of the "distance histograms" G_j[a, d] (mass of f_j
at distance d from a) against F(d_1 + ... + d_n).  For n = 2 that is a
matrix product with the Hankel matrix F(d1 + d2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .grid import DyadicCube, DyadicGrid, GridFunction, values_of

BUDGET = 1 << 30
FAMILIES = ("positive", "odd")


class BudgetError(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    n: int = 2
    family: str = "odd"
    eps: float = 1.0
    delta: float = 1.0
    c0: int = 3
    sign: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("arity must be >= 1")
        if self.family not in FAMILIES:
            raise ValueError(f"kernel family must be one of {FAMILIES}")
        if self.eps <= 0:
            raise ValueError("truncation eps must be positive")
        if not 0 < self.delta <= 1:
            raise ValueError("delta must lie in (0, 1]")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")

    @property
    def dini_norm(self) -> float:
        """int_0^1 omega(t) dt/t for omega(t) = t^delta."""
        return 1.0 / self.delta

    def value(self, x, ys: Sequence, h: float) -> np.ndarray:
        """Pointwise kernel K(x, y_1, ..., y_n) (broadcasting)."""
        x = np.asarray(x, dtype=float)
        dist = sum(np.abs(x - np.asarray(y)) for y in ys)
        den = dist + self.eps * h
        if self.family == "positive":
            return self.sign / den ** self.n
        num = sum(x - np.asarray(y) for y in ys)
        return self.sign * num / den ** (self.n + 1)


def _check_budget(n: int, grid: DyadicGrid):
    if grid.n_cells ** (n + 1) > BUDGET:
        raise BudgetError(f"2^{(n + 1) * grid.depth} kernel evaluations exceed the budget; "
                          f"use a smaller operator depth")


def _histograms(f: np.ndarray, rows: np.ndarray, signed: bool) -> np.ndarray:
    """G[r, d] = sum over cells b with |a_r - b| = d of f(b) (times a - b if signed)."""
    N = f.size
    pad = np.concatenate([np.zeros(N), f, np.zeros(N)])
    a = rows[:, None]
    d = np.arange(N)[None, :]
    plus = pad[N + a + d]
    minus = pad[N + a - d]
    if signed:
        return d * (minus - plus)
    G = plus + minus
    G[:, 0] *= 0.5
    return G


def apply_operator(K: KernelSpec, fs: Sequence, grid: Optional[DyadicGrid] = None,
                   rows: Optional[np.ndarray] = None) -> GridFunction:
    """T(f_1, ..., f_n)(x_a) = h^n sum_b K(x_a, y_b) prod f_j(y_{b_j}) at cell midpoints."""
    if len(fs) != K.n:
        raise ValueError(f"expected {K.n} inputs, got {len(fs)}")
    grid = grid or fs[0].grid
    _check_budget(K.n, grid)
    vals = [values_of(f) for f in fs]
    if any(v.shape != (grid.n_cells,) for v in vals):
        raise ValueError("inputs do not match the operator grid")
    N, h = grid.n_cells, grid.cell_width
    r = np.arange(N) if rows is None else np.asarray(rows)
    n = K.n
    power = n if K.family == "positive" else n + 1
    s = np.arange(n * (N - 1) + 1, dtype=float)
    F = 1.0 / (h * s + K.eps * h) ** power
    G = [_histograms(v, r, False) for v in vals]
    if K.family == "positive":
        out = _contract(G, F, n, N)
    else:
        Gs = [_histograms(v, r, True) for v in vals]
        out = np.zeros(r.size)
        for j in range(n):
            out += _contract(G[:j] + [Gs[j]] + G[j + 1:], F, n, N)
        out *= h
    out *= K.sign * h ** n
    if rows is not None:
        full = np.zeros(N)
        full[r] = out
        out = full
    return GridFunction(out, grid)


def _contract(G: list, F: np.ndarray, n: int, N: int) -> np.ndarray:
    """sum_{d_1..d_n} F(d_1 + ... + d_n) prod_j G_j[a, d_j] for each row a."""
    if n == 1:
        return G[0] @ F[:N]
    if n == 2:
        idx = np.arange(N)
        H = F[idx[:, None] + idx[None, :]]
        return np.einsum("ad,ad->a", G[0], G[1] @ H)
    out = np.empty(G[0].shape[0])
    for a in range(out.size):
        conv = G[0][a]
        for g in G[1:]:
            conv = np.convolve(conv, g[a])
        out[a] = conv @ F[:conv.size]
    return out


def apply_operator_dense(K: KernelSpec, fs: Sequence, grid: Optional[DyadicGrid] = None) -> GridFunction:
    """Brute-force oracle: evaluate K on every cell tuple (small grids only)."""
    grid = grid or fs[0].grid
    if grid.n_cells ** (K.n + 1) > 1 << 24:
        raise BudgetError("dense oracle limited to 2^24 evaluations")
    x = grid.midpoints()
    h = grid.cell_width
    out = np.zeros(grid.n_cells)
    vals = [values_of(f) for f in fs]
    mesh = np.meshgrid(*([x] * K.n), indexing="ij")
    weight = np.ones_like(mesh[0])
    for j, v in enumerate(vals):
        shape = [1] * K.n
        shape[j] = -1
        weight = weight * v.reshape(shape)
    for a in range(grid.n_cells):
        out[a] = (K.value(x[a], mesh, h) * weight).sum() * h ** K.n
    return GridFunction(out, grid)


def kernel_size_constant(K: KernelSpec, samples: int = 10_000, seed: int = 0, h: float = 2.0 ** -8) -> float:
    """max |K(x, y)| (sum |x - y_j|)^n over random off-diagonal tuples."""
    rng = np.random.default_rng(seed)
    x = rng.random(samples)
    ys = [rng.random(samples) for _ in range(K.n)]
    dist = sum(np.abs(x - y) for y in ys)
    keep = dist > 0
    val = np.abs(K.value(x[keep], [y[keep] for y in ys], h)) * dist[keep] ** K.n
    return float(val.max())


@dataclass(frozen=True)
class Partner:
    cube: DyadicCube
    sign: int
    c: float
    side: str


def nondegenerate_partner(Q: DyadicCube, K: KernelSpec, grid: DyadicGrid, allow_left: bool = True) -> Partner:
    """Same-level cube at distance C0*l(Q) on which K(x, y, ..., y) has constant sign.

    Returns sign and c with sign*K(x, y, ..., y) >= c |Q|^{-n} for all sampled
    x in the partner and y in Q (cell midpoints of the operator grid).
    """
    if Q.level > grid.depth:
        raise ValueError("cube finer than the operator grid")
    shift = K.c0 + 1
    if Q.index + shift < (1 << Q.level):
        qt, side = DyadicCube(Q.level, Q.index + shift), "right"
    elif allow_left and Q.index - shift >= 0:
        qt, side = DyadicCube(Q.level, Q.index - shift), "left"
    else:
        raise ValueError("partner cube leaves the domain: choose smaller/left cube")
    x = grid.midpoints()
    xs = x[qt.cells(grid)][:, None]
    ys = x[Q.cells(grid)][None, :]
    vals = K.value(xs, [ys] * K.n, grid.cell_width)
    if np.all(vals > 0):
        sign = 1
    elif np.all(vals < 0):
        sign = -1
    else:
        raise ValueError("kernel changes sign on the partner rectangle")
    c = float((sign * vals).min()) * Q.measure ** K.n
    return Partner(qt, sign, c, side)


# commutators ----------------------------------------------------------------

Operator = Callable[[Sequence[np.ndarray]], np.ndarray]


def operator_of(K: KernelSpec, grid: DyadicGrid) -> Operator:
    return lambda fs: apply_operator(K, fs, grid).values


def _commute(op: Operator, b: np.ndarray, slot: int) -> Operator:
    def new(fs):
        moved = list(fs)
        moved[slot] = b * np.asarray(fs[slot])
        return b * op(fs) - op(moved)
    return new


def commutator(K: KernelSpec, b, slot: int, fs: Sequence, grid: Optional[DyadicGrid] = None) -> GridFunction:
    """[b, T]_slot(f) = b T(f) - T(..., b f_slot, ...)."""
    grid = grid or fs[0].grid
    vals = [values_of(f) for f in fs]
    return GridFunction(_commute(operator_of(K, grid), values_of(b), slot)(vals), grid)


@dataclass(frozen=True, eq=False)
class CommutatorSpec:
    """Slots I (in recursion order), symbols per slot and theta partitions."""

    slots: tuple
    symbols: tuple            # one tuple of GridFunctions/arrays per slot
    thetas: Optional[tuple] = None

    def __post_init__(self):
        if len(self.slots) != len(self.symbols) or len(set(self.slots)) != len(self.slots):
            raise ValueError("one distinct slot per symbol list")
        if any(len(bs) == 0 for bs in self.symbols):
            raise ValueError("every slot needs at least one symbol")
        th = self.thetas
        if th is None:
            th = tuple(tuple(1.0 / len(bs) for _ in bs) for bs in self.symbols)
        for t, bs in zip(th, self.symbols):
            if len(t) != len(bs) or abs(sum(t) - 1) > 1e-12 or any(not 0 <= x <= 1 for x in t):
                raise ValueError("each theta partition must match its symbols and sum to 1")
        object.__setattr__(self, "thetas", tuple(tuple(float(x) for x in t) for t in th))

    @property
    def orders(self) -> tuple:
        return tuple(len(bs) for bs in self.symbols)

    @property
    def total_order(self) -> int:
        return sum(self.orders)

    def reordered(self, order: Sequence[int]) -> "CommutatorSpec":
        return CommutatorSpec(tuple(self.slots[k] for k in order),
                              tuple(self.symbols[k] for k in order),
                              tuple(self.thetas[k] for k in order))

    def pairs(self) -> list:
        """(slot, symbol values) for every symbol, in recursion order."""
        return [(i, values_of(b)) for i, bs in zip(self.slots, self.symbols) for b in bs]


def iterated_operator(K: KernelSpec, spec: CommutatorSpec, grid: DyadicGrid) -> Operator:
    op = operator_of(K, grid)
    # the last slot of the recursion is applied innermost
    for i, bs in reversed(list(zip(spec.slots, spec.symbols))):
        for b in bs:
            op = _commute(op, values_of(b), i)
    return op


def iterated_commutator(K: KernelSpec, spec: CommutatorSpec, fs: Sequence,
                        grid: Optional[DyadicGrid] = None) -> GridFunction:
    grid = grid or fs[0].grid
    vals = [values_of(f) for f in fs]
    return GridFunction(iterated_operator(K, spec, grid)(vals), grid)


def binomial_commutator(K: KernelSpec, b, k: int, slot: int, fs: Sequence,
                        grid: Optional[DyadicGrid] = None, rows: Optional[np.ndarray] = None) -> GridFunction:
    """sum_m (-1)^m C(k, m) b^{k-m} T(..., b^m f_slot, ...), optionally on ``rows`` only."""
    grid = grid or fs[0].grid
    bv = values_of(b)
    vals = [values_of(f) for f in fs]
    out = np.zeros(grid.n_cells)
    for m in range(k + 1):
        moved = list(vals)
        moved[slot] = bv ** m * vals[slot]
        out += (-1) ** m * math.comb(k, m) * bv ** (k - m) * apply_operator(K, moved, grid, rows).values
    return GridFunction(out, grid)
