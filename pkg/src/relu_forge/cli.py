"""``relu-forge`` command line.

Exit codes: 0 pass, 1 semantic failure (a witness is printed), 2 input
error, 3 resource guard tripped, 4 inconclusive.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path
from typing import Callable, Optional, Sequence

from . import geometry as geo
from .formats import FormatError, dump_network, load_complex, load_decomp, load_network
from .ir import ReluNetwork, evaluate, stats
from .passes import optimize
from .synth import MAX_BUILDERS, TermLimitExceeded, build_ternary_max, build_tree_max, compile_cpwl
from .synth import ternary_term_bound, term_limit
from .verify import (
    COUNTEREXAMPLE,
    DEFAULT_EQUIV_CAP,
    EQUIVALENT,
    check_exact_equiv,
    check_random,
    oracle_max,
)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_INPUT = 2
EXIT_GUARD = 3
EXIT_INCONCLUSIVE = 4

log = logging.getLogger("relu_forge")


class InputError(Exception):
    pass


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None


def _load_net(path: str) -> ReluNetwork:
    try:
        return load_network(_read(path))
    except (FormatError, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from None


def stats_line(net: ReluNetwork) -> str:
    st = stats(net)
    return f"hidden_layers={st.hidden_layers} neurons={st.neurons} dyadic={str(st.is_dyadic).lower()}"


# ---------------------------------------------------------------------------
# synth

def build_max(n: int, method: str, fallback: bool = False) -> ReluNetwork:
    if method == "ternary":
        return build_ternary_max(n, fallback=fallback)
    return MAX_BUILDERS[method](n)


def cmd_synth(args) -> int:
    if args.target == "max":
        if args.n is None or args.n < 1:
            raise InputError("--target max needs --n >= 1")
        try:
            net = build_max(args.n, args.method, fallback=args.fallback_five)
        except TermLimitExceeded as exc:
            print(f"error: {exc}; pass --fallback-five to build the five-ary network instead",
                  file=sys.stderr)
            return EXIT_GUARD
    else:
        if not args.decomp:
            raise InputError("--target cpwl needs --decomp <path>")
        try:
            decomp = load_decomp(_read(args.decomp))
        except (FormatError, ValueError) as exc:
            raise InputError(f"{args.decomp}: {exc}") from None
        try:
            net = compile_cpwl(decomp, args.method)
        except TermLimitExceeded as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_GUARD
    if args.opt:
        net = optimize(net)
    if args.out:
        try:
            Path(args.out).write_text(dump_network(net))
        except OSError as exc:
            raise InputError(f"cannot write {args.out}: {exc.strerror}") from None
    print(stats_line(net))
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify

def _reference(net: ReluNetwork, against: str) -> tuple[Optional[ReluNetwork], Callable]:
    if against == "max":
        if net.output_dim != 1:
            raise InputError(f"--against max needs a scalar network, got output_dim={net.output_dim}")
        return None, oracle_max
    if against.startswith("net:"):
        other = _load_net(against[4:])
        if (other.input_dim, other.output_dim) != (net.input_dim, net.output_dim):
            raise InputError("reference network has different input/output dimensions")
        return other, lambda x: evaluate(other, x)
    raise InputError(f"--against must be 'max' or 'net:<path>', got {against!r}")


def cmd_verify(args) -> int:
    net = _load_net(args.net)
    other, oracle = _reference(net, args.against)
    if args.mode == "random":
        if args.samples < 1:
            raise InputError("--samples must be >= 1")
        report = check_random(net, oracle, samples=args.samples, seed=args.seed)
    else:
        if other is None:
            other = build_tree_max(net.input_dim)
        report = check_exact_equiv(net, other, cap=args.cap)
    print(json.dumps(report.to_dict(), sort_keys=True))
    if report.verdict == COUNTEREXAMPLE:
        return EXIT_FAIL
    if args.mode == "exact" and report.verdict != EQUIVALENT:
        return EXIT_INCONCLUSIVE
    return EXIT_OK


# ---------------------------------------------------------------------------
# geom

def _fmt(v: Sequence[Fraction]) -> str:
    return "(" + ", ".join(str(x) for x in v) + ")"


class _Checks:
    def __init__(self):
        self.ok = True

    def __call__(self, name: str, passed: bool, detail: str = "") -> None:
        self.ok &= bool(passed)
        line = f"{'PASS' if passed else 'FAIL'} {name}"
        print(line + (f": {detail}" if detail else ""))


def _additivity(check: _Checks, c: geo.SubdivisionComplex, directions: int, seed: int) -> None:
    bad = geo.additivity_failure(c, directions, seed)
    check(f"full additivity on {directions} directions", bad is None,
          "" if bad is None else f"fails at direction {_fmt(bad)}")


def _simplex3_checks(check: _Checks, c: geo.SubdivisionComplex, directions: int, seed: int) -> None:
    check("union covers the tetrahedron", geo.check_cover(c, 1000, seed))
    vols = [geo.volume(p.polytope) for p in c.pieces]
    total = geo.volume(c.ambient)
    check("pyramid volumes", all(v == Fraction(2, 3) for v in vols),
          ", ".join(str(v) for v in vols))
    check("volumes add up", sum(vols) == total, f"{sum(vols)} vs {total}")
    for p in c.pieces:
        value, depth = geo.eval_expr(p.certificate)
        check(f"{p.name} certificate", value == p.polytope and depth == 2, f"depth {depth}")
    for a, b in itertools.combinations(c.pieces, 2):
        inter = geo.intersect(a.polytope, b.polytope)
        if inter is None or inter.affine_dim < c.dim - 1:
            continue
        check(f"valuation {a.name},{b.name}",
              geo.check_valuation(a.polytope, b.polytope, directions, seed))
    _additivity(check, c, directions, seed)


def cmd_geom(args) -> int:
    check = _Checks()
    if args.geom_cmd == "simplex3":
        _simplex3_checks(check, geo.build_simplex3_subdivision(), args.directions, args.seed)
    elif args.geom_cmd == "lift4":
        lifted = geo.lift_to_simplex4(geo.build_simplex3_subdivision())
        check("four pieces", len(lifted.pieces) == 4)
        for p in lifted.pieces:
            value, depth = geo.eval_expr(p.certificate)
            check(f"{p.name} has 6 vertices", len(p.polytope.vertices) == 6)
            check(f"{p.name} certificate depth 2", value == p.polytope and depth == 2,
                  f"depth {depth}")
            newton = geo.map_polytope(geo.term_newton_polytope("P" + p.name[1:]),
                                      geo.simplex_identification)
            check(f"{p.name} is half the Newton polytope of P{p.name[1:]}",
                  newton == geo.scale(p.polytope, 2))
        hull = geo.Polytope([v for p in lifted.pieces for v in p.polytope.vertices])
        check("union hull is the 4-simplex", all(
            geo.support(hull, x) == geo.support(lifted.ambient, x)
            for x in geo.sample_directions(4, args.directions, args.seed)))
        check("union covers the 4-simplex", geo.check_cover(lifted, 200, args.seed))
    else:
        try:
            c = load_complex(_read(args.complex))
        except (FormatError, ValueError) as exc:
            raise InputError(f"{args.complex}: {exc}") from None
        check("pieces cover the ambient polytope", geo.check_cover(c, 1000, args.seed))
        try:
            _additivity(check, c, args.directions, args.seed)
        except geo.EmptyIntersection as exc:
            raise InputError(f"{exc}; full additivity needs every Q_S nonempty") from None
        except geo.GeometryInputError as exc:
            raise InputError(str(exc)) from None
    return EXIT_OK if check.ok else EXIT_FAIL


# ---------------------------------------------------------------------------
# bench

BENCH_COLUMNS = ("n", "method", "hidden_layers", "neurons_raw", "neurons_after_cse", "dyadic")


def bench_rows(n_max: int, methods: Sequence[str]):
    limit = term_limit()
    for n in range(2, n_max + 1):
        for method in methods:
            if method == "ternary" and n > 5 and ternary_term_bound(n) > limit:
                yield (n, method) + ("skipped",) * 4
                continue
            net = build_max(n, method)
            st = stats(net)
            yield (n, method, st.hidden_layers, st.neurons, optimize(net).neurons,
                   str(st.is_dyadic).lower())


def cmd_bench(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in MAX_BUILDERS]
    if bad or not methods:
        raise InputError(f"unknown methods {bad}; choose from {', '.join(MAX_BUILDERS)}")
    if args.n_max < 2:
        raise InputError("--n-max must be >= 2")
    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(BENCH_COLUMNS)
    for row in bench_rows(args.n_max, methods):
        out.writerow(row)
        sys.stdout.flush()
    return EXIT_OK


# ---------------------------------------------------------------------------

def cmd_inspect(args) -> int:
    net = _load_net(args.net)
    print(stats_line(net))
    print("widths=" + ",".join(str(w) for w in net.hidden_widths))
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relu-forge",
                                     description="Exact ReLU networks for maxima and CPWL functions.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("synth", help="build a network and write it as relu-net/1 JSON")
    p.add_argument("--target", choices=("max", "cpwl"), required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--decomp", help="cpwl-decomp/1 file (with --target cpwl)")
    p.add_argument("--method", choices=tuple(MAX_BUILDERS), default="ternary")
    p.add_argument("--out", help="output path; omit to only print stats")
    p.add_argument("--opt", action="store_true", help="apply CSE and pruning")
    p.add_argument("--fallback-five", action="store_true",
                   help="build five-ary instead of failing when the ternary term guard trips")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("verify", help="check a network against max or another network")
    p.add_argument("--net", required=True)
    p.add_argument("--against", default="max", help="'max' or 'net:<path>'")
    p.add_argument("--mode", choices=("random", "exact"), default="random")
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cap", type=int, default=DEFAULT_EQUIV_CAP,
                   help="hidden neuron budget for exact mode")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("geom", help="polytope identity checks")
    gsub = p.add_subparsers(dest="geom_cmd", required=True)
    for name in ("simplex3", "lift4", "check-subdivision"):
        g = gsub.add_parser(name)
        g.add_argument("--directions", type=int, default=200)
        g.add_argument("--seed", type=int, default=0)
        if name == "check-subdivision":
            g.add_argument("--complex", required=True)
    p.set_defaults(func=cmd_geom)

    p = sub.add_parser("bench", help="CSV table of depths and sizes")
    p.add_argument("--n-max", type=int, default=12)
    p.add_argument("--methods", default="tree,five,ternary")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("inspect", help="print stats of a network file")
    p.add_argument("--net", required=True)
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
