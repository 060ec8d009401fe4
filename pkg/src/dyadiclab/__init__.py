"""Dyadic-grid laboratory for two-weight bounds of multilinear commutators."""
from .grid import DyadicCube, DyadicGrid, GridFunction, dyadic_maximal, lp_norm, median, weak_lp_norm
from .weights import (BloomPair, Weight, WeightTuple, ainfty_constant, ap_constant, bloom_nu, combine,
                      lebesgue, multi_ap_constant, power_weight)
from .bmo import bloom_bmo_norm, bmo_norm, jn_functional, random_bmo, tilde_bmo_norm
from .sparse import SparseFamily, augment_sparse, cz_sparse, random_sparse_family, verify_sparse
from .czo import CommutatorSpec, KernelSpec, apply_operator, iterated_commutator
from .lab import ExperimentConfig, ExperimentReport, load_config, run_lower, run_suite, run_upper

__version__ = "0.1.0"
