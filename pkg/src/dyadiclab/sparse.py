"""Sparse families of dyadic cubes and the operators built on them."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .grid import (ROOT, DyadicCube, DyadicGrid, GridFunction, level_averages,
                   values_of)
from .weights import Weight

_REL = 1e-12


@dataclass(frozen=True, eq=False)
class SparseFamily:
    grid: DyadicGrid
    cubes: frozenset
    rho: float = 0.5
    base_measure: Optional[Weight] = None
    selected: Optional[dict] = None

    def __post_init__(self):
        object.__setattr__(self, "cubes", frozenset(self.cubes))
        if not 0 < self.rho <= 1:
            raise ValueError("rho must lie in (0, 1]")
        for q in self.cubes:
            if q.level > self.grid.depth:
                raise ValueError(f"{q} is finer than the grid")

    def __iter__(self):
        return iter(sorted(self.cubes))

    def __len__(self):
        return len(self.cubes)

    def __contains__(self, q):
        return q in self.cubes

    @property
    def measure_id(self) -> str:
        if self.base_measure is None:
            return "lebesgue"
        return self.base_measure.label or "weighted"

    def level_masks(self) -> dict:
        masks: dict = {}
        for q in self.cubes:
            m = masks.setdefault(q.level, np.zeros(1 << q.level, dtype=bool))
            m[q.index] = True
        return masks

    def union(self, other: "SparseFamily", rho: Optional[float] = None) -> "SparseFamily":
        return SparseFamily(self.grid, self.cubes | other.cubes,
                            rho if rho is not None else min(self.rho, other.rho) / 2,
                            self.base_measure)

    def with_selection(self, selected: dict) -> "SparseFamily":
        return SparseFamily(self.grid, self.cubes, self.rho, self.base_measure, selected)


def _cube_mass(q: DyadicCube, grid: DyadicGrid, mu: Optional[Weight]) -> float:
    if mu is None:
        return q.measure
    return float(mu.mass[q.cells(grid)].sum())


def nearest_ancestors(cubes: Iterable[DyadicCube]) -> dict:
    """Map each cube to its nearest proper ancestor inside the collection (or None)."""
    cset = set(cubes)
    out = {}
    for q in cset:
        parent = None
        for lev in range(q.level - 1, -1, -1):
            a = q.ancestor(lev)
            if a in cset:
                parent = a
                break
        out[q] = parent
    return out


def tree_children(cubes: Iterable[DyadicCube]) -> dict:
    """Maximal proper sub-cubes of each cube within the collection."""
    anc = nearest_ancestors(cubes)
    kids: dict = {q: [] for q in anc}
    for q, a in anc.items():
        if a is not None:
            kids[a].append(q)
    return kids


def carleson_constant(S: SparseFamily, mu: Optional[Weight] = None) -> float:
    """max_{Q in S} mu(Q)^{-1} sum_{P in S, P in Q} mu(P)."""
    if not S.cubes:
        return 0.0
    mu = mu if mu is not None else S.base_measure
    anc = nearest_ancestors(S.cubes)
    mass = {q: _cube_mass(q, S.grid, mu) for q in S.cubes}
    total = dict(mass)
    for q in sorted(S.cubes, key=lambda c: -c.level):
        a = anc[q]
        if a is not None:
            total[a] += total[q]
    return max(total[q] / mass[q] for q in S.cubes)


@dataclass
class SparseCheck:
    ok: bool
    method: str
    carleson: float
    selection: Optional[dict] = None
    counterexample: Optional[DyadicCube] = None
    worst_fraction: float = 1.0
    refine: int = 0           # selection indexes cells of the grid refined by this many levels


MAX_REFINE = 4


def _fine(S: SparseFamily, mu: Optional[Weight], refine: int) -> tuple:
    """Grid refined by ``refine`` levels and the cell masses of mu split evenly onto it."""
    grid = S.grid
    mass = mu.mass if mu is not None else np.full(grid.n_cells, grid.cell_width)
    fine = DyadicGrid(grid.depth + refine, grid.shift) if refine else grid
    return fine, np.repeat(mass / (1 << refine), 1 << refine)


def _greedy_selection(S: SparseFamily, rho: float, mu: Optional[Weight], refine: int = 0) -> Optional[dict]:
    grid, mass = _fine(S, mu, refine)
    free = np.ones(grid.n_cells, dtype=bool)
    sel = {}
    for q in sorted(S.cubes, key=lambda c: (-c.level, c.index)):
        cells = q.cells(grid)
        avail = cells[free[cells]]
        need = rho * mass[cells].sum() * (1 - _REL)
        avail = avail[np.argsort(mass[avail], kind="stable")]
        cum = np.cumsum(mass[avail])
        k = int(np.searchsorted(cum, need)) + 1
        if avail.size == 0 or k > avail.size:
            return None
        take = avail[:k]
        free[take] = False
        sel[q] = take
    return sel


def verify_sparse(S: SparseFamily, rho: Optional[float] = None, mu: Optional[Weight] = None) -> SparseCheck:
    """Check rho-sparseness of S, producing an explicit disjoint selection.

    First try E_S = S minus its maximal proper S-descendants.  If that
    fails, fall back to the Carleson constant (dyadic equivalence) and build
    a selection bottom-up.  Whole cells cannot always realize it (a cube
    with both one-cell children in S), so the selection may be drawn from
    sub-cells up to MAX_REFINE levels below the grid.
    """
    rho = S.rho if rho is None else rho
    mu = mu if mu is not None else S.base_measure
    grid = S.grid
    if not S.cubes:
        return SparseCheck(True, "empty", 0.0, {})
    kids = tree_children(S.cubes)
    worst, bad = 1.0, None
    for q in sorted(S.cubes):
        m = _cube_mass(q, grid, mu)
        e = m - sum(_cube_mass(c, grid, mu) for c in kids[q])
        frac = e / m
        if frac < worst:
            worst = frac
            if frac < rho * (1 - _REL) and bad is None:
                bad = q
    lam = carleson_constant(S, mu)
    if bad is None:
        sel = {}
        for q in S.cubes:
            mask = np.zeros(grid.n_cells, dtype=bool)
            mask[q.cells(grid)] = True
            for c in kids[q]:
                mask[c.cells(grid)] = False
            sel[q] = np.flatnonzero(mask)
        return SparseCheck(True, "stopping-sets", lam, sel, None, worst)
    ok = lam <= (1.0 / rho) * (1 + _REL)
    sel, refine = None, 0
    for refine in range(MAX_REFINE + 1):
        sel = _greedy_selection(S, rho, mu, refine)
        if sel is not None:
            break
    return SparseCheck(ok, "carleson", lam, sel, None if ok else bad, worst, refine)


def selection_is_valid(S: SparseFamily, selection: dict, rho: float, mu: Optional[Weight] = None,
                       refine: int = 0) -> bool:
    """E_S inside S, pairwise disjoint, mu(E_S) >= rho mu(S), on the grid refined by ``refine`` levels."""
    grid, mass = _fine(S, mu, refine)
    seen = np.zeros(grid.n_cells, dtype=bool)
    for q in S.cubes:
        e = np.asarray(selection[q])
        inside = np.zeros(grid.n_cells, dtype=bool)
        inside[q.cells(grid)] = True
        if not inside[e].all() or seen[e].any() or np.unique(e).size != e.size:
            return False
        seen[e] = True
        if mass[e].sum() < rho * mass[inside].sum() * (1 - _REL):
            return False
    return True


# families ---------------------------------------------------------------

def full_tree(grid: DyadicGrid, depth: int, top: DyadicCube = ROOT) -> SparseFamily:
    cubes = [DyadicCube(top.level + d, (top.index << d) + j)
             for d in range(depth + 1) for j in range(1 << d)]
    return SparseFamily(grid, frozenset(cubes), rho=1.0 / (depth + 1))


def _random_subcube(q: DyadicCube, rng: np.random.Generator, top: int) -> DyadicCube:
    lev = min(q.level + int(rng.geometric(0.3)), top)
    d = lev - q.level
    return DyadicCube(lev, (q.index << d) + int(rng.integers(0, 1 << d)))


def random_sparse_family(grid: DyadicGrid, size: int, seed, rho: float = 0.5,
                         max_level: Optional[int] = None, include_root: bool = False) -> SparseFamily:
    """Random Lebesgue rho-sparse family of (up to) ``size`` cubes.

    Grown top-down: the children of a cube Q are disjoint sub-cubes of total
    measure <= (1 - rho)|Q|, so E_Q = Q minus its children has |E_Q| >= rho|Q|.
    Without the root, the top cubes are disjoint and otherwise unconstrained.
    """
    rng = np.random.default_rng(seed)
    top = grid.depth if max_level is None else min(max_level, grid.depth)
    if size <= 0:
        return SparseFamily(grid, frozenset(), rho)
    first = ROOT if include_root else _random_subcube(ROOT, rng, top) if top > 0 else ROOT
    kids = {None: [first], first: []}
    used = {None: first.measure, first: 0.0}
    fails = {None: 0, first: 0}
    open_ = [first] if include_root else [None, first]
    count = 1
    while count < size and open_:
        k = int(rng.integers(len(open_)))
        q = open_[k]
        if (q is not None and q.level >= top) or fails[q] >= 16:
            open_.pop(k)
            continue
        c = _random_subcube(ROOT if q is None else q, rng, top)
        if q is None and c == ROOT:
            fails[q] += 1
            continue
        budget = 1.0 if q is None else (1 - rho) * q.measure
        if used[q] + c.measure > budget * (1 + _REL) or any(o.contains(c) or c.contains(o) for o in kids[q]):
            fails[q] += 1
            continue
        kids[q].append(c)
        used[q] += c.measure
        kids[c], used[c], fails[c] = [], 0.0, 0
        open_.append(c)
        count += 1
    cubes = [c for c in kids if c is not None]
    return SparseFamily(grid, frozenset(cubes), rho)


# operators ----------------------------------------------------------------

def apply_sparse(S: SparseFamily, fs: Sequence, s: float = 1.0) -> GridFunction:
    """sum_{Q in S} prod_i <|f_i|^s>_Q^{1/s} 1_Q."""
    if s < 1:
        raise ValueError("s must be >= 1")
    grid = S.grid
    vals = [np.abs(values_of(f)) ** s for f in fs]
    out = np.zeros(grid.n_cells)
    for lev, mask in S.level_masks().items():
        prod = np.ones(1 << lev)
        for v in vals:
            prod = prod * level_averages(v, grid, lev) ** (1.0 / s)
        out += grid.expand(np.where(mask, prod, 0.0), lev)
    return GridFunction(out, _plain(grid))


def apply_weighted_sparse(S: SparseFamily, sigma: Weight, f) -> GridFunction:
    """A_S^sigma f = sum_{Q in S} <f>_Q^sigma 1_Q."""
    grid = S.grid
    v = values_of(f)
    out = np.zeros(grid.n_cells)
    for lev, mask in S.level_masks().items():
        avg = level_averages(v, grid, lev, sigma)
        out += grid.expand(np.where(mask, avg, 0.0), lev)
    return GridFunction(out, _plain(grid))


def _plain(grid: DyadicGrid) -> DyadicGrid:
    return grid if grid.shift == 0 else DyadicGrid(grid.depth)


# stopping times -------------------------------------------------------------

@dataclass
class CZDecomposition:
    family: SparseFamily
    constant: float
    bound: float
    packing: dict = field(default_factory=dict)

    @property
    def max_packing(self) -> float:
        return max(self.packing.values(), default=0.0)


def doubling_constant(sigma: Optional[Weight], grid: DyadicGrid, top: DyadicCube = ROOT) -> float:
    """max sigma(parent(P)) / sigma(P) over dyadic P strictly inside ``top``."""
    if sigma is None:
        return 2.0
    best = 1.0
    for lev in range(top.level + 1, grid.depth + 1):
        m = grid.level_sums(sigma.mass, lev)
        par = np.repeat(grid.level_sums(sigma.mass, lev - 1), 2)
        k = lev - top.level
        sl = slice(top.index << k, (top.index + 1) << k)
        best = max(best, float((par[sl] / m[sl]).max()))
    return best


def _stopping_children(g: np.ndarray, sm: np.ndarray, q: DyadicCube, depth: int,
                       alpha: float, extra: Optional[dict] = None) -> list:
    """Maximal sub-cubes P of q with <g>^sm_P > alpha (or flagged in ``extra``)."""
    kids = []
    covered = np.zeros(g.size, dtype=bool)
    gs = g * sm
    for m in range(q.level + 1, depth + 1):
        k = g.size >> (m - q.level)
        num = gs.reshape(-1, k).sum(axis=1)
        den = sm.reshape(-1, k).sum(axis=1)
        hit = num > alpha * den if alpha > 0 else np.zeros(num.size, dtype=bool)
        if extra is not None and m in extra:
            base = q.index << (m - q.level)
            hit = hit | extra[m][base:base + num.size]
        hit &= ~covered.reshape(-1, k)[:, 0]
        if hit.any():
            base = q.index << (m - q.level)
            for j in np.flatnonzero(hit):
                kids.append(DyadicCube(m, base + int(j)))
            covered |= np.repeat(hit, k)
    return kids


def cz_sparse(b, sigma: Optional[Weight] = None, Q0: DyadicCube = ROOT,
              grid: Optional[DyadicGrid] = None) -> CZDecomposition:
    """Stopping-time family dominating |b - b_{Q0}^sigma| 1_{Q0}.

    Children of a stopping cube Q are the maximal dyadic sub-cubes where
    <|b - b_Q^sigma|>^sigma exceeds twice its value on Q.
    """
    grid = grid or b.grid
    bv = values_of(b)
    mass = sigma.mass if sigma is not None else np.full(grid.n_cells, grid.cell_width)
    rhs = np.zeros(grid.n_cells)
    cubes, packing = [], {}
    stack = [Q0]
    ref = None
    while stack:
        q = stack.pop()
        cells = q.cells(grid)
        sm = mass[cells]
        c = float((bv[cells] * sm).sum() / sm.sum())
        if ref is None:
            ref = c
        g = np.abs(bv[cells] - c)
        osc = float((g * sm).sum() / sm.sum())
        cubes.append(q)
        rhs[cells] += osc
        kids = _stopping_children(g, sm, q, grid.depth, 2.0 * osc)
        packing[q] = sum(float(mass[k.cells(grid)].sum()) for k in kids) / float(sm.sum())
        stack.extend(kids)
    cells0 = Q0.cells(grid)
    lhs = np.abs(bv[cells0] - ref)
    constant = _ratio_max(lhs, rhs[cells0])
    fam = SparseFamily(grid, frozenset(cubes), 0.5, sigma)
    bound = 2.0 * (doubling_constant(sigma, grid, Q0) + 1.0)
    return CZDecomposition(fam, constant, bound, packing)


def _ratio_max(lhs: np.ndarray, rhs: np.ndarray) -> float:
    pos = lhs > 0
    if not pos.any():
        return 0.0
    if np.any(rhs[pos] <= 0):
        return math.inf
    return float((lhs[pos] / rhs[pos]).max())


@dataclass
class Augmentation:
    family: SparseFamily
    constant: float
    bound: float
    added: frozenset


def augment_sparse(S: SparseFamily, b, threshold: float = 2.0) -> Augmentation:
    """Enlarge a gamma-sparse S so every member has a uniform oscillation bound.

    For each T in the enlarged family the children are the maximal cubes
    that are either in S or carry <|b - b_T|> above ``threshold`` times the
    oscillation of b on T.  The result is gamma/(2(1+gamma))-sparse and
    |b - b_Q| 1_Q <= 2*threshold * sum_{P in S~, P in Q} <|b - b_P|>_P 1_P.
    """
    grid = S.grid
    bv = values_of(b)
    h = grid.cell_width
    smask = S.level_masks()
    roots = [q for q, a in nearest_ancestors(S.cubes).items() if a is None]
    osc: dict = {}
    mean: dict = {}
    stack = sorted(roots)
    ones = np.full(grid.n_cells, h)
    while stack:
        t = stack.pop()
        if t in osc:
            continue
        cells = t.cells(grid)
        c = float(bv[cells].mean())
        g = np.abs(bv[cells] - c)
        osc[t], mean[t] = float(g.mean()), c
        kids = _stopping_children(g, ones[cells], t, grid.depth, threshold * osc[t], smask)
        stack.extend(kids)
    cubes = frozenset(osc)
    gamma = S.rho
    fam = SparseFamily(grid, cubes, gamma / (2 * (1 + gamma)))
    # uniform domination: accumulate oscillations from fine to coarse
    acc = np.zeros(grid.n_cells)
    worst = 0.0
    for lev in sorted({q.level for q in cubes}, reverse=True):
        level_cubes = [q for q in cubes if q.level == lev]
        for q in level_cubes:
            cells = q.cells(grid)
            worst = max(worst, _ratio_max(np.abs(bv[cells] - mean[q]), acc[cells] + osc[q]))
        for q in level_cubes:
            acc[q.cells(grid)] += osc[q]
    return Augmentation(fam, worst, 2.0 * threshold, cubes - S.cubes)


# serialization --------------------------------------------------------------

def dump_family(S: SparseFamily) -> str:
    lines = [f"# rho={S.rho!r} measure={S.measure_id} depth={S.grid.depth} shift={S.grid.shift!r}"]
    lines += [f"{q.level} {q.index}" for q in sorted(S.cubes)]
    return "\n".join(lines) + "\n"


def load_family(text: str, base_measure: Optional[Weight] = None) -> SparseFamily:
    header, *rows = [ln for ln in text.splitlines() if ln.strip()]
    if not header.startswith("#"):
        raise ValueError("missing family header line")
    meta = dict(tok.split("=", 1) for tok in header[1:].split())
    grid = DyadicGrid(int(meta["depth"]), float(meta.get("shift", "0.0")))
    if meta.get("measure", "lebesgue") != "lebesgue" and base_measure is None:
        raise ValueError(f"family was built for measure {meta['measure']!r}; pass base_measure")
    cubes = []
    for ln in rows:
        lev, idx = ln.split()
        cubes.append(DyadicCube(int(lev), int(idx)))
    return SparseFamily(grid, frozenset(cubes), float(meta["rho"]), base_measure)
