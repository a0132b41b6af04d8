"""Exact ReLU networks for maxima and CPWL functions, with verification and polytope tools."""

from .ir import AffineMap, ReluNetwork, evaluate, evaluate_batch, stats
from .passes import cse, optimize, prune
from .synth import (
    build_five_ary_max,
    build_max2,
    build_max5,
    build_ternary_max,
    build_tree_max,
    compile_cpwl,
)
from .verify import check_exact_equiv, check_random, enumerate_regions

__all__ = [
    "AffineMap", "ReluNetwork", "evaluate", "evaluate_batch", "stats",
    "cse", "optimize", "prune",
    "build_five_ary_max", "build_max2", "build_max5", "build_ternary_max", "build_tree_max",
    "compile_cpwl",
    "check_exact_equiv", "check_random", "enumerate_regions",
]
