"""Experiment configs, runners and reports.

Every experiment yields named assertions.  Claims of the form "bounded by a
constant" are checked with the stability policy: the reported constant may
grow by at most 25% when the depth increases by 2.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import numpy as np
import yaml

from . import bounds, chains, czo, domination
from .bmo import (bloom_bmo_norm, bmo_from_family, bmo_norm, jn_functional, oscillation_profile,
                  tilde_bmo_norm)
from .grid import DyadicCube, DyadicGrid, GridFunction, lp_norm, median, weak_lp_norm
from .probes import KINDS, random_input, trial_rng
from .sparse import (SparseFamily, augment_sparse, cz_sparse, full_tree, random_sparse_family,
                     selection_is_valid, verify_sparse)
from .weights import (BloomPair, INF, Weight, WeightTuple, ainfty_constant, ap_constant, bloom_nu,
                      combine, converse_rhi_constant, factorization_check, lebesgue, multi_ap_constant,
                      piecewise_weight, power_weight, random_log_weight, rhi_constant)

GROWTH = 1.25
KINDS_RUN = ("upper", "lower", "dominate", "suite")
SUITE_MIN_DEPTH = 6
SUITES = ("weights", "rhi", "sparse", "bmo", "chains", "fs", "lms", "example")


class ConfigError(ValueError):
    pass


# configuration ----------------------------------------------------------------

@dataclass
class ExperimentConfig:
    id: str
    kind: str
    depth: int = 10
    op_depth: int = 8
    exponents: tuple = (2.0, 2.0)
    weights: tuple = (1, 1)
    lam: Any = 1
    slot: int = 0
    thetas: tuple = (1.0,)
    trials: int = 50
    seed: int = 0
    design_level: Optional[int] = None
    complexity: int = 12
    negative_control: bool = False
    kernel: dict = field(default_factory=dict)
    suites: tuple = SUITES
    depths: Optional[tuple] = None

    @property
    def order(self) -> int:
        return len(self.thetas)

    @property
    def design(self) -> int:
        if self.design_level is not None:
            return self.design_level
        return max(3, self.op_depth - 3)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("each experiment must be a mapping")
        known = {f.name for f in fields(cls)} | {"orders"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        d = dict(d)
        orders = d.pop("orders", None)
        if "thetas" not in d and orders is not None:
            d["thetas"] = [1.0 / int(orders)] * int(orders)
        elif orders is not None and len(d["thetas"]) != int(orders):
            raise ConfigError("orders does not match the number of thetas")
        for key in ("exponents", "weights", "thetas", "suites", "depths"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        if "id" not in d or "kind" not in d:
            raise ConfigError("experiments need 'id' and 'kind'")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def validate(self):
        if self.kind not in KINDS_RUN:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if any(not float(p) > 1 for p in self.exponents):
            raise ConfigError("each exponent p_i must exceed 1")
        if len(self.weights) != len(self.exponents):
            raise ConfigError("need one weight per exponent")
        if not 0 <= self.slot < len(self.exponents):
            raise ConfigError("slot out of range")
        if not self.thetas or any(not 0 <= t <= 1 for t in self.thetas) or abs(sum(self.thetas) - 1) > 1e-9:
            raise ConfigError("thetas must lie in [0, 1] and sum to 1")
        if self.depth < 4 or self.op_depth < 3:
            raise ConfigError("depths too small")
        if self.kind == "suite" and self.depth < SUITE_MIN_DEPTH:
            raise ConfigError(f"suites need depth >= {SUITE_MIN_DEPTH} (they compare depths L-2 and L)")
        if self.kind in ("upper", "lower", "dominate"):
            if self.design > self.op_depth - 2:
                raise ConfigError("design_level must be at most op_depth - 2")
            try:
                czo.KernelSpec(n=len(self.exponents), **self.kernel)
            except (TypeError, ValueError) as e:
                raise ConfigError(f"bad kernel: {e}") from e
        if self.trials < 0 or self.complexity < 0:
            raise ConfigError("trials and complexity must be non-negative")
        unknown = set(self.suites) - set(SUITES)
        if unknown:
            raise ConfigError(f"unknown suites {sorted(unknown)}")


def load_config(source) -> tuple:
    """Parse a YAML/JSON document into (experiments, output dir or None)."""
    if isinstance(source, (str, Path)) and Path(source).exists():
        text = Path(source).read_text()
    elif isinstance(source, dict):
        text = None
    else:
        raise ConfigError(f"config file not found: {source}")
    try:
        doc = source if text is None else yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse config: {e}") from e
    doc = doc or {}
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping")
    try:
        exps = [ExperimentConfig.from_dict(e) for e in doc.get("experiments") or []]
    except TypeError as e:
        raise ConfigError(str(e)) from e
    ids = [e.id for e in exps]
    if len(set(ids)) != len(ids):
        raise ConfigError("experiment ids must be unique")
    out = (doc.get("output") or {}).get("dir")
    return exps, out


def make_weight(spec, grid: DyadicGrid) -> Weight:
    """1 / "lebesgue", a number a (|x|^a), {a, c, coef}, or a list of such factors."""
    if spec in (None, 1, "1", "one", "lebesgue"):
        return lebesgue(grid)
    if isinstance(spec, (int, float)):
        return power_weight(float(spec), 0.0, grid)
    if isinstance(spec, dict):
        kind = spec.get("kind", "power")
        if kind == "power":
            return power_weight(float(spec["a"]), float(spec.get("c", 0.0)), grid,
                                float(spec.get("coef", 1.0)))
        if kind == "log":
            return random_log_weight(grid, int(spec.get("seed", 0)), float(spec.get("amplitude", 1.0)),
                                     int(spec.get("bumps", 12)), spec.get("max_level"))
        raise ConfigError(f"unknown weight kind {kind!r}")
    if isinstance(spec, (list, tuple)):
        return combine([(make_weight(s, grid), 1.0) for s in spec])
    raise ConfigError(f"cannot build a weight from {spec!r}")


# reports ----------------------------------------------------------------------

@dataclass
class Assertion:
    experiment: str
    anchor: str
    constant: float
    depth: str
    passed: bool
    detail: str = ""


@dataclass
class ExperimentReport:
    results: list = field(default_factory=list)     # one dict per experiment
    environment: dict = field(default_factory=dict)

    @property
    def assertions(self) -> list:
        return [a for r in self.results for a in r["assertions"]]

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)

    def extend(self, other: "ExperimentReport"):
        self.results.extend(other.results)

    def to_dict(self) -> dict:
        res = []
        for r in self.results:
            r = dict(r)
            r["assertions"] = [asdict(a) for a in r["assertions"]]
            res.append(r)
        return _jsonable({"environment": self.environment, "passed": self.passed, "results": res})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["experiment", "anchor", "constant", "depth", "pass"])
        for a in self.assertions:
            w.writerow([a.experiment, a.anchor, _fmt(a.constant), a.depth, "true" if a.passed else "false"])
        return buf.getvalue()

    def write(self, out_dir) -> tuple:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        js, cs = out / "report.json", out / "report.csv"
        js.write_text(self.to_json() + "\n")
        cs.write_text(self.to_csv())
        return js, cs


def _fmt(x: float) -> str:
    return "inf" if x == math.inf else repr(float(x))


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return _fmt(x) if not math.isfinite(x) else x
    return x


def _result(cfg: ExperimentConfig, assertions: list, **data) -> dict:
    return {"id": cfg.id, "kind": cfg.kind, "assertions": assertions, "data": data}


def _env(cfgs: Sequence[ExperimentConfig]) -> dict:
    return {"stability_policy": f"constant may grow at most {int(round((GROWTH - 1) * 100))}% per +2 depth",
            "experiments": [{"id": c.id, "depth": c.depth, "op_depth": c.op_depth, "seed": c.seed,
                             "trials": c.trials} for c in cfgs]}


def stable(small: float, large: float, growth: float = GROWTH) -> bool:
    if not (math.isfinite(small) and math.isfinite(large)):
        return False
    return large <= growth * small + 1e-300


def _map(fn: Callable, jobs: list, workers: int = 1) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


# shared trial pieces ------------------------------------------------------------

@dataclass
class _Setup:
    grid: DyadicGrid
    tup: WeightTuple
    pair: BloomPair
    target: Weight      # lam_i^{p/p_i} prod_{j != i} w_j^{p/p_j}
    duals: list
    kernel: czo.KernelSpec


def _setup(cfg: ExperimentConfig, depth: int) -> _Setup:
    grid = DyadicGrid(depth)
    ws = [make_weight(s, grid) for s in cfg.weights]
    lam = make_weight(cfg.lam, grid)
    tup = WeightTuple(tuple(ws), cfg.exponents)
    i = cfg.slot
    pair = BloomPair(i, ws[i], lam, tup.exponents[i])
    target = chains._target_weight(tup, pair)
    return _Setup(grid, tup, pair, target, tup.duals(), czo.KernelSpec(n=tup.n, **cfg.kernel))


def weight_centers(ws: Sequence[Weight]) -> list:
    """Points where some power-law weight degenerates or blows up."""
    out = set()
    for w in ws:
        if w.law is not None:
            out.update(float(c) for c, a in w.law.terms if a != 0)
    return sorted(out)


def anchored_cube(grid: DyadicGrid, rng: np.random.Generator, centers: Sequence[float]) -> DyadicCube:
    """Random-level dyadic cube containing one of ``centers``."""
    lev = int(rng.integers(0, grid.depth + 1))
    c = centers[int(rng.integers(len(centers)))]
    return DyadicCube(lev, min(int(c * (1 << lev)), (1 << lev) - 1))


def _design_inputs(cfg: ExperimentConfig, rng: np.random.Generator, n: int,
                   centers: Sequence[float] = ()) -> list:
    """Input shapes on the design grid, so every depth sees the same functions.

    Half of the trials use indicators of cubes at a weight singularity, which
    is where weighted inequalities are extremal.
    """
    design = DyadicGrid(cfg.design)
    anchored = bool(centers) and rng.random() < 0.5
    out = []
    for _ in range(n):
        kind = KINDS[int(rng.integers(len(KINDS)))]
        if anchored:
            base = np.zeros(design.n_cells)
            base[anchored_cube(design, rng, centers).cells(design)] = 1.0
        else:
            base = random_input(design, rng, "indicator" if kind == "dual" else kind)
        out.append((base, kind == "dual"))
    return out


def _refine(shape: tuple, setup: _Setup, j: int, design: int) -> np.ndarray:
    base, dual = shape
    f = np.repeat(base, 1 << (setup.grid.depth - design))
    return f * setup.duals[j].density if dual else f


def _design_symbol(cfg: ExperimentConfig, rng: np.random.Generator, centers: Sequence[float] = ()) -> tuple:
    """Random sparse family on the design grid; with probability 1/2 a cube at a
    weight singularity is added, since that is where <nu>_Q can degenerate."""
    design = DyadicGrid(cfg.design)
    S = random_sparse_family(design, cfg.complexity, int(rng.integers(2**62)), 0.5, include_root=True)
    cubes = set(S.cubes)
    if centers and rng.random() < 0.5:
        cubes.add(anchored_cube(design, rng, centers))
    cubes = sorted(cubes)
    signs = rng.choice((-1.0, 1.0), size=len(cubes))
    return cubes, signs


# upper bound ----------------------------------------------------------------------

def check_upper_preconditions(cfg: ExperimentConfig, depth: int):
    s = _setup(cfg, depth)
    c1 = multi_ap_constant(s.tup)
    c2 = multi_ap_constant(s.tup.replace(cfg.slot, s.pair.lam))
    nu = bloom_nu(s.pair.with_theta(max(cfg.thetas)))
    if not math.isfinite(c1):
        raise ConfigError(f"[{cfg.id}] A_pvec constant of (w_1..w_n) is infinite")
    if not math.isfinite(c2):
        raise ConfigError(f"[{cfg.id}] A_pvec constant of the tuple with lambda in slot {cfg.slot} is infinite")
    if nu.singular:
        raise ConfigError(f"[{cfg.id}] A_inf constant of nu^theta is undefined (singular weight)")
    return c1, c2, ainfty_constant(nu)


def _upper_trial(job) -> float:
    cfg, depth, t = job
    s = _setup(cfg, depth)
    rng = trial_rng(cfg.seed, t)
    shapes = _design_inputs(cfg, rng, s.tup.n)
    fs = [_refine(sh, s, j, cfg.design) for j, sh in enumerate(shapes)]
    symbols = []
    centers = weight_centers(list(s.tup.weights) + [s.pair.lam])
    for theta in cfg.thetas:
        cubes, signs = _design_symbol(cfg, rng, centers)
        nu = bloom_nu(s.pair.with_theta(theta))
        b = bmo_from_family(nu, cubes, signs).values
        nrm = bmo_norm(b, nu)
        symbols.append(GridFunction(b / nrm if nrm > 0 else np.zeros_like(b), s.grid))
    spec = czo.CommutatorSpec((cfg.slot,), (tuple(symbols),), (tuple(cfg.thetas),))
    g = czo.iterated_commutator(s.kernel, spec, fs, s.grid)
    den = math.prod(lp_norm(f, w, p) for f, w, p in zip(fs, s.tup.weights, s.tup.exponents))
    if den == 0:
        return 0.0
    return lp_norm(g, s.target, s.tup.p) / den


def run_upper(cfg: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    """Two-weight bound for C^k_b(T) with BMO_{nu^theta}-normalized symbols."""
    pre = {}
    if not cfg.negative_control:
        c1, c2, ai = check_upper_preconditions(cfg, cfg.op_depth)
        pre = {"multi_ap": c1, "multi_ap_lambda": c2, "ainfty_nu": ai}
    depths = (cfg.op_depth - 2, cfg.op_depth)
    ratios = {}
    for d in depths:
        ratios[d] = _map(_upper_trial, [(cfg, d, t) for t in range(cfg.trials)], workers)
    mx = {d: max(r, default=0.0) for d, r in ratios.items()}
    ok = stable(mx[depths[0]], mx[depths[1]])
    pair = f"{depths[0]}/{depths[1]}"
    if cfg.negative_control:
        a = Assertion(cfg.id, "upper.negative-control", mx[depths[1]], pair, not ok,
                      f"expected unstable; max R {mx[depths[0]]:.4g} -> {mx[depths[1]]:.4g}")
    else:
        a = Assertion(cfg.id, "upper.commutator-bound", mx[depths[1]], pair,
                      ok and math.isfinite(mx[depths[1]]),
                      f"max R {mx[depths[0]]:.4g} -> {mx[depths[1]]:.4g}")
    rep = ExperimentReport([_result(cfg, [a], preconditions=pre,
                                    ratios={str(d): r for d, r in ratios.items()},
                                    max_ratio={str(d): v for d, v in mx.items()})], _env([cfg]))
    return rep


# lower bound ----------------------------------------------------------------------

def admissible_levels(K: czo.KernelSpec, top: int) -> range:
    lo = 1
    while (1 << lo) < K.c0 + 2:
        lo += 1
    return range(lo, top + 1)


def _lower_trial(job) -> dict:
    cfg, depth, t = job
    s = _setup(cfg, depth)
    g, K, i, k = s.grid, s.kernel, cfg.slot, cfg.order
    rng = trial_rng(cfg.seed, t)
    p, exps, qq = s.tup.p, s.tup.exponents, s.tup.dual_exponents
    sig = s.duals
    eta = combine([(s.pair.lam, 1.0 - qq[i])])
    nu_k = bloom_nu(s.pair.with_theta(1.0 / k))
    cubes, signs = _design_symbol(cfg, rng)
    b = bmo_from_family(nu_k, cubes, signs).values
    sig_k = combine([(sig[i], 1.0 / k)])
    nusig = combine([(nu_k, 1.0), (sig_k, 1.0)])
    levels = admissible_levels(K, cfg.design)
    w_sup, dual_min, ii_max = 0.0, math.inf, 0.0
    for lev in levels:
        for j in range(1 << lev):
            Q = DyadicCube(lev, j)
            qt = czo.nondegenerate_partner(Q, K, g).cube
            cq, ct = Q.cells(g), qt.cells(g)
            alpha = median(b, qt, g)
            norm = math.prod(float(sig[m].mass[cq].sum()) ** (1.0 / exps[m]) for m in range(s.tup.n))
            sides = []
            for low in (True, False):
                a_mask = np.zeros(g.n_cells, dtype=bool)
                a_mask[cq] = b[cq] <= alpha if low else b[cq] >= alpha
                e_mask = np.zeros(g.n_cells, dtype=bool)
                e_mask[ct] = b[ct] >= alpha if low else b[ct] <= alpha
                fs = []
                for m in range(s.tup.n):
                    ind = a_mask if m == i else np.isin(np.arange(g.n_cells), cq)
                    fs.append(ind * sig[m].density)
                out = czo.binomial_commutator(K, b, k, i, fs, g, rows=ct).values
                w_val = weak_lp_norm(np.where(e_mask, out, 0.0), s.target, p) / norm
                dev = np.maximum(alpha - b[cq], 0.0) if low else np.maximum(b[cq] - alpha, 0.0)
                lhs = float((dev * sig_k.mass[cq]).sum()) / Q.measure
                sides.append((w_val, lhs))
            W = max(w for w, _ in sides)
            w_sup = max(w_sup, W)
            avg = float(nusig.mass[cq].sum()) / Q.measure
            for w_val, lhs in sides:
                if lhs > 0:
                    ii_max = max(ii_max, lhs / (avg * w_val ** (1.0 / k)) if w_val > 0 else math.inf)
            h = Q.measure
            dual = (float(s.target.mass[cq].sum()) / h) ** (1.0 / p) * (float(eta.mass[cq].sum()) / h) ** (1.0 / qq[i])
            for m in range(s.tup.n):
                if m != i:
                    dual *= (float(sig[m].mass[cq].sum()) / h) ** (1.0 / qq[m])
            dual_min = min(dual_min, dual)
    bm = bmo_norm(b, nu_k, coarsest_level=levels.start) ** k
    c = 0.0 if bm == 0 else (bm / w_sup if w_sup > 0 else math.inf)
    return {"bmo_k": bm, "w_sup": w_sup, "constant": c, "dual_min": dual_min, "median_ratio": ii_max}


def check_lower_preconditions(cfg: ExperimentConfig, depth: int):
    s = _setup(cfg, depth)
    c1 = multi_ap_constant(s.tup)
    c2 = multi_ap_constant(s.tup.replace(cfg.slot, s.pair.lam))
    if not (math.isfinite(c1) and math.isfinite(c2)):
        raise ConfigError(f"[{cfg.id}] weight tuples are not admissible (A_pvec constant infinite)")
    nu = bloom_nu(s.pair.with_theta(1.0 / cfg.order))
    if nu.singular:
        raise ConfigError(f"[{cfg.id}] A_inf constant of nu^(1/k) is undefined (singular weight)")
    admissible_levels(s.kernel, cfg.design)
    if (1 << cfg.design) < s.kernel.c0 + 2:
        raise ConfigError(f"[{cfg.id}] no admissible partner cube inside the domain")
    return c1, c2, ainfty_constant(nu)


def run_lower(cfg: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    """Median-method lower bound: ||b||^k_{BMO_{nu^{1/k}}} <= C sup_Q W(Q)."""
    c1, c2, ai = check_lower_preconditions(cfg, cfg.op_depth)
    depths = (cfg.op_depth - 2, cfg.op_depth)
    rows = {d: _map(_lower_trial, [(cfg, d, t) for t in range(cfg.trials)], workers) for d in depths}
    pair = f"{depths[0]}/{depths[1]}"
    dual_min = min((r["dual_min"] for rs in rows.values() for r in rs), default=math.inf)
    cmax = {d: max((r["constant"] for r in rs), default=0.0) for d, rs in rows.items()}
    mmax = {d: max((r["median_ratio"] for r in rs), default=0.0) for d, rs in rows.items()}
    hi = depths[1]
    tol = 1e-12
    asserts = [
        Assertion(cfg.id, "lower.duality", dual_min, pair, dual_min >= 1 - tol,
                  "min over cubes of the Holder product (must be >= 1)"),
        Assertion(cfg.id, "lower.median-step", mmax[hi], pair,
                  stable(mmax[depths[0]], mmax[hi]) or (mmax[hi] == 0 and mmax[depths[0]] == 0),
                  f"max ratio {mmax[depths[0]]:.4g} -> {mmax[hi]:.4g}"),
        Assertion(cfg.id, "lower.bmo-bound", cmax[hi], pair,
                  all(math.isfinite(r["constant"]) for rs in rows.values() for r in rs)
                  and (stable(cmax[depths[0]], cmax[hi]) or cmax[hi] == 0),
                  f"max C {cmax[depths[0]]:.4g} -> {cmax[hi]:.4g}"),
    ]
    data = {"preconditions": {"multi_ap": c1, "multi_ap_lambda": c2, "ainfty_nu": ai},
            "trials": {str(d): rs for d, rs in rows.items()}}
    return ExperimentReport([_result(cfg, asserts, **data)], _env([cfg]))


# sparse domination of commutators ----------------------------------------------

def _dominate_trial(job) -> dict:
    cfg, depth, t = job
    s = _setup(cfg, depth)
    rng = trial_rng(cfg.seed, t)
    shapes = _design_inputs(cfg, rng, s.tup.n)
    fs = [_refine(sh, s, j, cfg.design) for j, sh in enumerate(shapes)]
    symbols = []
    for _ in cfg.thetas:
        cubes, signs = _design_symbol(cfg, rng)
        symbols.append(bmo_from_family(lebesgue(s.grid), cubes, signs))
    spec = czo.CommutatorSpec((cfg.slot,), (tuple(symbols),), (tuple(cfg.thetas),))
    d = domination.dominate_commutator(spec, s.kernel, fs, s.grid)
    return {"constant": d.constant, "carleson": max(d.carleson),
            "counterexample": d.counterexample}


def run_dominate(cfg: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    depths = cfg.depths or (cfg.op_depth - 2, cfg.op_depth - 1, cfg.op_depth)
    rows = {d: _map(_dominate_trial, [(cfg, d, t) for t in range(cfg.trials)], workers) for d in depths}
    cmax = {d: max((r["constant"] for r in rs), default=0.0) for d, rs in rows.items()}
    lo, hi = min(cmax.values()), max(cmax.values())
    ok = hi <= domination.CAP and (hi == 0 or (lo > 0 and hi / lo <= 2.0))
    a = Assertion(cfg.id, "domination.commutator", hi, "/".join(map(str, depths)), ok,
                  "max C per depth " + ", ".join(f"{d}:{v:.4g}" for d, v in cmax.items()))
    return ExperimentReport([_result(cfg, [a], trials={str(d): rs for d, rs in rows.items()})], _env([cfg]))


# property suites ----------------------------------------------------------------

def _power_tuple(grid: DyadicGrid, expos: Sequence[float], ps: Sequence[float]) -> WeightTuple:
    return WeightTuple(tuple(power_weight(a, 0.0, grid) for a in expos), tuple(ps))


def weight_tuples(seed: int, count: int = 20) -> list:
    """(exponents, p-vector) pairs, including tuples outside A_pvec."""
    rng = np.random.default_rng(seed)
    out = [((-2.0, 2.0), (2.0, 4.0)), ((0.5, 0.5), (2.0, 2.0)), ((1.5, 0.0), (2.0, 2.0))]
    while len(out) < count:
        n = int(rng.integers(2, 4))
        ps = tuple(float(rng.choice((1.5, 2.0, 3.0, 4.0))) for _ in range(n))
        ex = tuple(float(np.round(rng.uniform(-2.5, 3.5), 2)) for _ in range(n))
        out.append((ex, ps))
    return out


def suite_weights(cfg: ExperimentConfig) -> tuple:
    L = cfg.depth
    rows, agree = [], True
    for ex, ps in weight_tuples(cfg.seed):
        eff = {}
        for d in (L, L + 2):
            rep = factorization_check(_power_tuple(DyadicGrid(d), ex, ps))
            eff[d] = rep
        multi = stable(eff[L].multi, eff[L + 2].multi)
        parts = [stable(eff[L].product_constant, eff[L + 2].product_constant)]
        parts += [stable(a, b) for a, b in zip(eff[L].dual_constants, eff[L + 2].dual_constants)]
        same = multi == all(parts)
        agree &= same
        rows.append({"exponents": ex, "p": ps, "multi": eff[L + 2].multi, "multi_finite": multi,
                     "factors_finite": all(parts)})
    g = DyadicGrid(12)
    ap = ap_constant(power_weight(0.5, 0.0, g), 2.0)
    ai = [ainfty_constant(power_weight(0.5, 0.0, DyadicGrid(d))) for d in (10, 12)]
    asserts = [
        Assertion(cfg.id, "weights.factorization", float(sum(r["multi_finite"] for r in rows)), f"{L}/{L + 2}",
                  agree, "multi-linear finiteness agrees with factorization on every tuple"),
        Assertion(cfg.id, "weights.ap-closed-form", ap, "12", abs(ap - 4 / 3) <= 0.02 * 4 / 3,
                  "A_2 constant of |x|^(1/2) against 4/3"),
        Assertion(cfg.id, "weights.ainfty-stable", ai[1], "10/12", abs(ai[1] - ai[0]) <= 0.05 * ai[0],
                  "A_inf constant of |x|^(1/2)"),
    ]
    return asserts, {"tuples": rows}


def rhi_tuples(seed: int, count: int = 20) -> list:
    rng = np.random.default_rng(seed + 1)
    out = []
    while len(out) < count:
        n = int(rng.integers(2, 4))
        ex = tuple(float(np.round(rng.uniform(-0.8, 2.0), 2)) for _ in range(n))
        t = tuple(float(np.round(rng.uniform(0.2, 1.5), 2)) for _ in range(n))
        if sum(a * s for a, s in zip(ex, t)) > -0.8:
            out.append((ex, t))
    return out


def holder_direction_holds(weights: Sequence[Weight], t: Sequence[float], tol: float = 1e-12) -> bool:
    """<prod w_i^{t_i}>_Q <= prod <w_i>_Q^{t_i} on every dyadic cube (needs sum t_i <= 1)."""
    prod = combine(list(zip(weights, t)))
    g = weights[0].grid
    for lev in range(g.depth + 1):
        rhs = np.ones(1 << lev)
        for w, ti in zip(weights, t):
            rhs = rhs * w.level_avg(lev) ** ti
        if np.any(prod.level_avg(lev) > rhs * (1 + tol)):
            return False
    return True


def suite_rhi(cfg: ExperimentConfig) -> tuple:
    L = cfg.depth
    rows, ok = [], True
    for ex, t in rhi_tuples(cfg.seed):
        vals = {}
        for d in (L, L + 2):
            ws = [power_weight(a, 0.0, DyadicGrid(d)) for a in ex]
            vals[d] = (rhi_constant(ws, t), converse_rhi_constant(ws, t))
        good = all(stable(vals[L][m], vals[L + 2][m], 1.05) for m in range(2))
        ok &= good
        rows.append({"exponents": ex, "t": t, "rhi": vals[L + 2][0], "converse": vals[L + 2][1], "ok": good})
    # Holder direction on tuples with sum t <= 1, including non-power weights
    rng = np.random.default_rng(cfg.seed + 2)
    g = DyadicGrid(L)
    hold = True
    for m in range(20):
        n = int(rng.integers(2, 4))
        t = rng.dirichlet(np.ones(n + 1))[:n]
        if m % 2:
            ws = [random_log_weight(g, int(rng.integers(1 << 30)), 1.0) for _ in range(n)]
        else:
            ws = [power_weight(float(rng.uniform(-0.9, 2)), float(rng.choice((0.0, 0.5))), g) for _ in range(n)]
        hold &= holder_direction_holds(ws, t)
    worst = max(max(r["rhi"], r["converse"]) for r in rows)
    return [Assertion(cfg.id, "weights.reverse-holder", worst, f"{L}/{L + 2}", ok,
                      "both constants finite with <= 5% growth on 20 tuples"),
            Assertion(cfg.id, "weights.holder-direction", 1.0, str(L), hold,
                      "exact cube-by-cube inequality for sum t_i <= 1")], {"tuples": rows}


def suite_sparse(cfg: ExperimentConfig) -> tuple:
    L = cfg.depth
    g = DyadicGrid(L)
    leb = lebesgue(g)
    sigmas = [None, power_weight(0.5, 0.0, g), power_weight(-0.5, 0.5, g)]
    pack_ok, dom_ok, worst_c, worst_pack = True, True, 0.0, 0.0
    aug_ok, aug_worst = True, 0.0
    for t in range(cfg.trials):
        rng = trial_rng(cfg.seed, t)
        S = random_sparse_family(g, 20, int(rng.integers(2**62)), 0.5, include_root=True)
        signs = rng.choice((-1.0, 1.0), size=len(S))
        b = bmo_from_family(leb, sorted(S.cubes), signs)
        sigma = sigmas[t % len(sigmas)]
        cz = cz_sparse(b, sigma)
        pack_ok &= cz.max_packing <= 0.5 + 1e-12
        worst_pack = max(worst_pack, cz.max_packing)
        dom_ok &= cz.constant <= cz.bound
        worst_c = max(worst_c, cz.constant)
        S2 = random_sparse_family(g, 20, int(rng.integers(2**62)), 0.5)
        aug = augment_sparse(S2, b)
        rho = 0.5 / (2 * 1.5)
        chk = verify_sparse(aug.family, rho)
        good = (chk.ok and chk.selection is not None and aug.family.cubes >= S2.cubes
                and selection_is_valid(aug.family, chk.selection, rho, refine=chk.refine) and aug.constant <= aug.bound)
        aug_ok &= good
        aug_worst = max(aug_worst, aug.constant)
    return [Assertion(cfg.id, "sparse.cz-packing", worst_pack, str(L), pack_ok, "per-node packing <= 1/2"),
            Assertion(cfg.id, "sparse.cz-domination", worst_c, str(L), dom_ok, "C <= 2(D_sigma + 1)"),
            Assertion(cfg.id, "sparse.augmentation", aug_worst, str(L), aug_ok,
                      "augmented family is 1/6-sparse with explicit selection; C <= 4")], {}


BMO_PAIRS = (
    # (mu, lambda, sigma) with nu = mu^{1/2} lambda^{-1/2}
    ({"a": 0.5}, {"a": -0.5}, {"a": -0.5}),
    ({"a": 0.6}, 1, {"a": 0.4}),
    (1, {"a": 0.5}, {"a": 0.5, "c": 0.5}),
    ({"a": 0.4, "c": 0.5}, {"a": -0.4}, {"a": -0.3}),
    ({"a": -0.5}, {"a": 0.5}, {"a": 0.3}),
)


def suite_bmo(cfg: ExperimentConfig, pairs=BMO_PAIRS, q: float = 2.0) -> tuple:
    L = cfg.depth
    design = DyadicGrid(L - 2)
    families = []
    for t in range(cfg.trials):
        rng = trial_rng(cfg.seed, t)
        S = random_sparse_family(design, 50, int(rng.integers(2**62)), 0.5, include_root=True)
        cubes = sorted(S.cubes)
        families.append((cubes, rng.choice((-1.0, 1.0), size=len(cubes))))
    widths, rows, two_sided, tilde_ok = {}, [], True, True
    for k, (mu_s, lam_s, sig_s) in enumerate(pairs):
        bands = {}
        for d in (L - 2, L):
            g = DyadicGrid(d)
            mu, lam, sig = make_weight(mu_s, g), make_weight(lam_s, g), make_weight(sig_s, g)
            nu = combine([(mu, 1 / q), (lam, -1 / q)])
            r = {"bloom/bmo": [], "tilde/bloom": [], "jn/bmo": []}
            for cubes, signs in families:
                b = bmo_from_family(nu, cubes, signs)
                base = bmo_norm(b, nu)
                if base == 0:
                    continue
                bl = bloom_bmo_norm(b, nu, sig)
                ti = tilde_bmo_norm(b, nu, sig)
                r["bloom/bmo"].append(bl / base)
                r["tilde/bloom"].append(ti / bl)
                r["jn/bmo"].append(jn_functional(b, mu, lam, q) / base)
                if d == L:
                    prof_b = oscillation_profile(b, nu, sig)
                    prof_t = oscillation_profile(b, nu, sig, tilde=True)
                    # roundoff floor relative to the norm scale: cubes where b is constant
                    atol = 1e-12 * max(bl, ti)
                    tilde_ok &= all(np.all(x <= 2 * y * (1 + 1e-12) + atol) for x, y in zip(prof_t, prof_b))
            bands[d] = {key: (min(v), max(v)) for key, v in r.items()}
        for key in bands[L]:
            lo, hi = bands[L][key]
            two_sided &= lo > 0 and math.isfinite(hi)
            w_small = bands[L - 2][key][1] / bands[L - 2][key][0]
            w_large = hi / lo
            widths[(k, key)] = (w_small, w_large)
            rows.append({"pair": k, "ratio": key, "band": bands[L][key], "width": [w_small, w_large]})
    stab = all(stable(a, b) for a, b in widths.values())
    worst = max(b for _, b in widths.values())
    return [Assertion(cfg.id, "bmo.equivalence-bands", worst, f"{L - 2}/{L}", two_sided and stab,
                      "bloom/bmo, tilde/bloom, jn/bmo bands two-sided and stable"),
            Assertion(cfg.id, "bmo.tilde-comparison", 2.0, str(L), tilde_ok,
                      "<|b - b_Q^sigma|>^sigma <= 2 <|b - b_Q|>^sigma on every cube")], {"bands": rows}


CHAIN_SWEEP = {
    "w": (0.5, -0.3, 1.2),
    "lam": (-0.25, 0.4, 0.0),
    "theta": ((1.0,), (0.5, 0.5), (0.2, 0.3, 0.5)),
}


def suite_chains(cfg: ExperimentConfig) -> tuple:
    L = cfg.depth
    g = DyadicGrid(L)
    worst, ok = 0.0, True
    for aw, al, th in itertools.product(CHAIN_SWEEP["w"], CHAIN_SWEEP["lam"], CHAIN_SWEEP["theta"]):
        for ps in ((2.0, 2.0), (3.0, 1.5), (2.0, 4.0), (4.0, 4.0)):
            w1 = power_weight(aw, 0.0, g)
            tup = WeightTuple((w1, power_weight(0.3, 0.5, g)), ps)
            pair = BloomPair(0, w1, power_weight(al, 0.0, g), ps[0])
            k = len(th)
            for r in range(1, k + 1):
                for sub in itertools.permutations(range(k), r):
                    for side in ("B", "A"):
                        if side == "A" and tup.p <= 1:
                            continue
                        try:
                            ch = chains.build_weight_chain(tup, pair, th, sub, side)
                            worst = max(worst, ch.residual)
                        except chains.ChainError:
                            ok = False
    # h-recursion over random f
    ratios = {}
    for d in (L - 2, L):
        gd = DyadicGrid(d)
        w1 = power_weight(0.5, 0.0, gd)
        lam = power_weight(-0.25, 0.0, gd)
        tup = WeightTuple((w1, lebesgue(gd)), (2.0, 2.0))
        pair = BloomPair(0, w1, lam, 2.0)
        ch = chains.build_weight_chain(tup, pair, (0.5, 0.5), (0, 1), "B")
        rs = []
        design = DyadicGrid(L - 4)
        for t in range(cfg.trials):
            rng = trial_rng(cfg.seed, t)
            S = random_sparse_family(design, 20, int(rng.integers(2**62)), 0.5, include_root=True)
            cubes = sorted(S.cubes)
            b = bmo_from_family(lebesgue(gd), cubes, rng.choice((-1.0, 1.0), size=len(cubes)))
            fam = augment_sparse(SparseFamily(gd, S.cubes, 0.5), b).family
            f = np.repeat(random_input(design, rng), 1 << (d - design.depth))
            rs.append(chains.h_recursion(f, fam, ch, pair).ratio)
        ratios[d] = max(rs)
    return [Assertion(cfg.id, "chains.identities", worst, str(L), ok and worst <= chains.IDENTITY_TOL,
                      "zeta/eta bookkeeping identities, worst relative error"),
            Assertion(cfg.id, "chains.h-recursion", ratios[L], f"{L - 2}/{L}",
                      stable(ratios[L - 2], ratios[L]), f"max ratio {ratios[L - 2]:.4g} -> {ratios[L]:.4g}")], {}


FS_CAP = 2.0


def fs_weights(grid: DyadicGrid, rng: np.random.Generator) -> Weight:
    """Arbitrary positive weights, many outside A_p."""
    kind = int(rng.integers(4))
    if kind == 0:
        return power_weight(float(rng.uniform(-0.9, 4.0)), float(rng.choice((0.0, 0.25, 0.5))), grid)
    if kind == 1:
        return random_log_weight(grid, int(rng.integers(1 << 30)), float(rng.uniform(0.5, 3.0)), 20)
    if kind == 2:
        d = np.full(grid.n_cells, 1e-3)
        q = DyadicCube(int(rng.integers(1, min(6, grid.depth) + 1)), 0)
        q = DyadicCube(q.level, int(rng.integers(0, 1 << q.level)))
        d[q.cells(grid)] = 1.0
        return piecewise_weight(grid, d)
    return piecewise_weight(grid, np.exp(3 * rng.standard_normal(grid.n_cells)))


def suite_fs(cfg: ExperimentConfig, p: float = 2.0, r: float = 1.25) -> tuple:
    L = cfg.depth
    res = {}
    for d in (L - 2, L):
        g = DyadicGrid(d)
        S = full_tree(g, min(6, d))
        mx, mxw = 0.0, 0.0
        for t in range(cfg.trials):
            rng = trial_rng(cfg.seed, t)
            w = fs_weights(g, rng)
            sigma = power_weight(float(rng.uniform(-0.5, 1.0)), 0.0, g)
            f = random_input(g, rng)
            mx = max(mx, bounds.fs_check(S, f, w, p, r))
            mxw = max(mxw, bounds.weighted_fs_check(S, f, w, sigma, p, r))
        res[d] = (mx, mxw)
    lo, hi = res[L - 2], res[L]
    return [Assertion(cfg.id, "fs.unweighted", hi[0], f"{L - 2}/{L}", hi[0] <= FS_CAP and lo[0] <= FS_CAP,
                      f"max ratio over {cfg.trials} (f, w) pairs, cap {FS_CAP}"),
            Assertion(cfg.id, "fs.weighted", hi[1], f"{L - 2}/{L}", hi[1] <= FS_CAP and lo[1] <= FS_CAP,
                      f"max ratio over {cfg.trials} (f, w, sigma) triples, cap {FS_CAP}")], {}


def suite_lms(cfg: ExperimentConfig) -> tuple:
    L = cfg.depth
    vals = {}
    for d in (L - 2, L):
        g = DyadicGrid(d)
        S = full_tree(g, min(5, d))
        ex = bounds.lms_bound_check(S, _power_tuple(g, (-2.0, 2.0), (2.0, 4.0)), cfg.trials, cfg.seed)
        one = bounds.lms_bound_check(S, _power_tuple(g, (0.5, -0.3), (2.0, 2.0)), cfg.trials, cfg.seed)
        vals[d] = (ex.ratio, one.ratio, one.sum_ratio)
    lo, hi = vals[L - 2], vals[L]
    ok = stable(lo[0], hi[0]) and stable(lo[1], hi[1]) and hi[2] >= hi[1] * (1 - 1e-12)
    return [Assertion(cfg.id, "sparse.multilinear-bound", max(hi[:2]), f"{L - 2}/{L}", ok,
                      "ratio against [w]^max(1, p_i'/p) stable; l^p-sum form dominates for p = 1")], {}


def suite_example(cfg: ExperimentConfig) -> tuple:
    L = cfg.depth
    consts, avgs = {}, {}
    for d in range(L - 2, L + 1):
        g = DyadicGrid(d)
        w1, w2 = power_weight(-2.0, 0.0, g), power_weight(2.0, 0.0, g)
        lam = lebesgue(g)
        consts[d] = (multi_ap_constant(WeightTuple((w1, w2), (2.0, 4.0))),
                     multi_ap_constant(WeightTuple((lam, w2), (2.0, 4.0))))
        nu = bloom_nu(BloomPair(0, w1, lam, 2.0))
        avgs[d] = float(nu.mass[DyadicCube(3, 0).cells(g)].sum()) * 8
    st = all(stable(consts[L - 2][m], consts[L][m]) for m in range(2))
    growth = min(avgs[d + 1] - avgs[d] for d in range(L - 2, L))
    return [Assertion(cfg.id, "example.ap-stable", max(consts[L]), f"{L - 2}/{L}", st,
                      "A_pvec constants of both tuples stable"),
            Assertion(cfg.id, "example.nu-divergence", growth, f"{L - 2}..{L}", growth >= 0.5,
                      "<nu>_[0,1/8) grows by at least 0.5 per unit depth")], {"nu_avg": avgs}


SUITE_FUNCS = {"weights": suite_weights, "rhi": suite_rhi, "sparse": suite_sparse, "bmo": suite_bmo,
               "chains": suite_chains, "fs": suite_fs, "lms": suite_lms, "example": suite_example}


def _suite_job(job):
    cfg, name = job
    return SUITE_FUNCS[name](cfg)


def run_suite(cfg: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    """Run the property suites; a failing suite is recorded and the run continues."""
    outs = _map(_suite_job_safe, [(cfg, name) for name in cfg.suites], workers)
    asserts, data = [], {}
    for name, (a, d) in zip(cfg.suites, outs):
        asserts.extend(a)
        data[name] = d
    return ExperimentReport([_result(cfg, asserts, **data)], _env([cfg]))


def _suite_job_safe(job):
    cfg, name = job
    try:
        return _suite_job(job)
    except Exception as e:  # recorded, run continues
        return [Assertion(cfg.id, f"suite.{name}", math.nan, str(cfg.depth), False,
                          f"{type(e).__name__}: {e}")], {}


RUNNERS = {"upper": run_upper, "lower": run_lower, "dominate": run_dominate, "suite": run_suite}


def run_experiments(cfgs: Sequence[ExperimentConfig], workers: int = 1) -> ExperimentReport:
    rep = ExperimentReport([], _env(cfgs))
    for c in cfgs:
        rep.extend(RUNNERS[c.kind](c, workers))
    return rep


# operator norm probe -------------------------------------------------------------

def operator_norm_probe(op: Callable, grid: DyadicGrid, in_weights: Sequence[Weight],
                        exponents: Sequence[float], out_weight: Optional[Weight], trials: int,
                        seed: int = 0, weak: bool = False) -> float:
    """Max of ||op(f)||_{L^p(v)} / prod ||f_j||_{L^{p_j}(w_j)} over seeded random inputs.

    Trial 0 always uses f_j = 1 on [0, 1); later trials draw indicators,
    Rademacher combinations and modulated inputs.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    p = 1.0 / sum(1.0 / q for q in exponents)
    best = 0.0
    for t in range(trials):
        rng = trial_rng(seed, t)
        if t == 0:
            fs = [np.ones(grid.n_cells) for _ in exponents]
        else:
            fs = [random_input(grid, rng) for _ in exponents]
        den = math.prod(lp_norm(f, w, q, grid) for f, w, q in zip(fs, in_weights, exponents))
        if den == 0:
            continue
        out = np.asarray(op(fs), dtype=float)
        norm = weak_lp_norm(out, out_weight, p, grid) if weak else lp_norm(out, out_weight, p, grid)
        best = max(best, norm / den)
    return best


# default configuration ----------------------------------------------------------

UPPER_CONFIGS = (
    ("cfg-a", (0.5, 0), -0.25, (2.0, 2.0)),
    ("cfg-b", (-0.3, 0.2), 0.3, (3.0, 3.0)),
    ("cfg-c", ({"a": 0.3, "c": 0.5}, 0.2), {"a": -0.3, "c": 0.5}, (2.0, 4.0)),
)


def _w(spec):
    return spec if isinstance(spec, dict) else (1 if spec == 0 else {"a": spec})


KERNEL = {"family": "odd", "eps": 0.25}


def default_config(depth: int = 10, op_depth: int = 8, seed: int = 20240, trials: int = 50) -> dict:
    exps = []
    for name, ws, lam, ps in UPPER_CONFIGS:
        for thetas in ((1.0,), (0.5, 0.5)):
            exps.append({"id": f"upper-{name}-k{len(thetas)}", "kind": "upper", "op_depth": op_depth,
                         "exponents": list(ps), "weights": [_w(x) for x in ws], "lam": _w(lam),
                         "thetas": list(thetas), "trials": trials, "seed": seed,
                         "design_level": 4, "complexity": 2, "kernel": dict(KERNEL)})
    exps.append({"id": "upper-negative-control", "kind": "upper", "op_depth": op_depth,
                 "exponents": [2.0, 4.0], "weights": [{"a": -2.0}, {"a": 2.0}], "lam": 1,
                 "thetas": [1.0], "trials": trials, "seed": seed, "negative_control": True,
                 "design_level": 4, "complexity": 2, "kernel": dict(KERNEL)})
    for name, ws, lam, ps, th in (("unweighted", (0, 0), 0, (2.0, 2.0), [1.0]),
                                  ("power", (0.5, 0), -0.25, (2.0, 2.0), [1.0]),
                                  ("power-k2", (0.5, 0), -0.25, (3.0, 3.0), [0.5, 0.5])):
        exps.append({"id": f"lower-{name}", "kind": "lower", "op_depth": op_depth, "exponents": list(ps),
                     "weights": [_w(x) for x in ws], "lam": _w(lam), "thetas": th, "trials": 20,
                     "seed": seed, "design_level": 5, "kernel": dict(KERNEL)})
    exps.append({"id": "dominate-k1", "kind": "dominate", "op_depth": 9, "depths": [7, 8, 9],
                 "exponents": [2.0, 2.0], "weights": [1, 1], "thetas": [1.0], "trials": trials,
                 "seed": seed, "design_level": 5, "kernel": dict(KERNEL)})
    exps.append({"id": "suite", "kind": "suite", "depth": depth, "trials": 200, "seed": seed})
    return {"experiments": exps}
