"""Command line entry point: ``dyadiclab verify upper|lower|suite``, ``weights scan``, ``sparse dominate``."""
from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from typing import Optional, Sequence

from . import lab
from .chains import _target_weight
from .weights import INF, ainfty_constant, bloom_nu, multi_ap_constant

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="YAML or JSON experiment file (default: built-in configuration)")
    p.add_argument("--depth", type=int, help="grid depth L for weight/BMO/sparse suites")
    p.add_argument("--op-depth", type=int, dest="op_depth", help="operator grid depth L'")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--trials", type=int, help="trials per experiment")
    p.add_argument("--out", help="directory for report.json and report.csv")
    p.add_argument("--workers", type=int, default=1, help="worker processes (results do not depend on it)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dyadiclab", description="Dyadic two-weight commutator laboratory")
    sub = parser.add_subparsers(dest="group", required=True)
    verify = sub.add_parser("verify", help="run upper/lower bound experiments or the property suites")
    verify.add_argument("target", choices=("upper", "lower", "suite"))
    _common(verify)
    weights = sub.add_parser("weights", help="weight characteristics of the configured experiments")
    weights.add_argument("action", choices=("scan",))
    _common(weights)
    sparse = sub.add_parser("sparse", help="sparse domination experiments")
    sparse.add_argument("action", choices=("dominate",))
    _common(sparse)
    return parser


def _load(args) -> tuple:
    if args.config:
        cfgs, out = lab.load_config(args.config)
    else:
        cfgs, out = lab.load_config(lab.default_config())
    over = {}
    for key in ("depth", "op_depth", "seed", "trials"):
        if getattr(args, key) is not None:
            over[key] = getattr(args, key)
    cfgs = [replace(c, **over) for c in cfgs]
    for c in cfgs:
        if "op_depth" in over and c.design_level is not None and c.design_level > c.op_depth - 2:
            c.design_level = None
        c.validate()
    return cfgs, args.out or out


def _emit(rep: lab.ExperimentReport, out: Optional[str]):
    sys.stdout.write(rep.to_csv())
    if out:
        js, cs = rep.write(out)
        print(f"wrote {js} and {cs}", file=sys.stderr)


def weights_scan(cfgs: Sequence[lab.ExperimentConfig]) -> lab.ExperimentReport:
    """Precondition constants of every operator experiment at its operator depth."""
    results = []
    for c in cfgs:
        if c.kind not in ("upper", "lower", "dominate"):
            continue
        s = lab._setup(c, c.op_depth)
        theta = max(c.thetas) if c.kind == "upper" else 1.0 / c.order
        nu = bloom_nu(s.pair.with_theta(theta))
        vals = {"multi_ap": multi_ap_constant(s.tup),
                "multi_ap_lambda": multi_ap_constant(s.tup.replace(c.slot, s.pair.lam)),
                "ainfty_nu": INF if nu.singular else ainfty_constant(nu),
                "target_total": _target_weight(s.tup, s.pair).total()}
        asserts = [lab.Assertion(c.id, f"weights.{k.replace('_', '-')}", v, str(c.op_depth),
                                 math.isfinite(v) or c.negative_control, "")
                   for k, v in vals.items() if k != "target_total"]
        results.append(lab._result(c, asserts, **vals))
    return lab.ExperimentReport(results, lab._env(cfgs))


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfgs, out = _load(args)
        if args.group == "verify":
            chosen = [c for c in cfgs if c.kind == args.target]
            rep = lab.run_experiments(chosen, args.workers)
        elif args.group == "weights":
            rep = weights_scan(cfgs)
        else:
            chosen = [c for c in cfgs if c.kind == "dominate"]
            rep = lab.run_experiments(chosen, args.workers)
    except lab.ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    _emit(rep, out)
    return EXIT_OK if rep.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
