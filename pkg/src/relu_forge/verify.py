"""Exact verification of networks against oracles and against each other.

Two routes:

* :func:`check_random` evaluates the network exactly on seeded random
  rational points.  It can find a counterexample but never certifies.
* :func:`check_exact_equiv` enumerates the activation regions of the
  difference network with exact LPs and checks that the affine piece on
  every full-dimensional region is identically zero.
"""

from __future__ import annotations

import math
import random
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence

from .ir import (
    AffineMap,
    ReluNetwork,
    as_rational,
    evaluate,
    evaluate_batch,
    pad_depth,
    stack,
    stats,
    then_affine,
)
from .lp import max_slack_int

EQUIVALENT = "equivalent"
COUNTEREXAMPLE = "counterexample"
INCONCLUSIVE = "inconclusive"

DEFAULT_REGION_CAP = 40
# The difference of the nine-term MAX5 network and the tree network has 66
# hidden neurons before depth padding, so equivalence needs a larger budget.
DEFAULT_EQUIV_CAP = 128
_POINT_CACHE = 8
SAMPLE_NUMERATOR_BOUND = 2**16
SAMPLE_DENOMINATORS = (1, 2, 4, 8)


class RegionCapExceeded(ValueError):
    pass


@dataclass
class VerificationReport:
    verdict: str
    method: str
    samples_tested: int = 0
    witness: Optional[list[Fraction]] = None
    regions_enumerated: Optional[int] = None
    reason: Optional[str] = None
    expected: Optional[list[Fraction]] = None
    actual: Optional[list[Fraction]] = None

    def to_dict(self) -> dict:
        out = asdict(self)
        for k in ("witness", "expected", "actual"):
            if out[k] is not None:
                out[k] = [str(v) for v in out[k]]
        return out


def oracle_max(x: Sequence) -> Fraction:
    if not x:
        raise ValueError("max of an empty vector")
    return max(as_rational(v) for v in x)


def sample_points(dim: int, count: int, seed: int) -> list[list[Fraction]]:
    rng = random.Random(seed)
    b = SAMPLE_NUMERATOR_BOUND
    return [[Fraction(rng.randint(-b, b), rng.choice(SAMPLE_DENOMINATORS)) for _ in range(dim)]
            for _ in range(count)]


def _as_vector(v) -> list[Fraction]:
    if isinstance(v, (list, tuple)):
        return [as_rational(t) for t in v]
    return [as_rational(v)]


def check_random(net: ReluNetwork, oracle: Callable, samples: int = 10_000, seed: int = 0,
                 chunk: int = 2_000) -> VerificationReport:
    """Compare ``net`` with ``oracle`` on seeded random rational inputs."""
    if samples < 1:
        raise ValueError("need at least one sample")
    points = sample_points(net.input_dim, samples, seed)
    for start in range(0, samples, chunk):
        batch = points[start:start + chunk]
        for p, got in zip(batch, evaluate_batch(net, batch)):
            want = _as_vector(oracle(p))
            if got != want:
                return VerificationReport(COUNTEREXAMPLE, "random", samples_tested=samples,
                                          witness=p, expected=want, actual=got)
    return VerificationReport(INCONCLUSIVE, "random", samples_tested=samples,
                              reason="random testing cannot certify equivalence")


def check_dyadic(net: ReluNetwork) -> bool:
    return stats(net).is_dyadic


# ---------------------------------------------------------------------------
# activation regions

# An affine form in the input x is a list of d coefficients followed by the constant.

@dataclass(frozen=True)
class ActivationPattern:
    """Per layer, per neuron: True for pre-activation >= 0, False for < 0.

    ``None`` marks neurons whose sign was not branched on because their
    combined contribution downstream is linear (only with ``collapse_linear``).
    """

    signs: tuple[tuple[Optional[bool], ...], ...]

    def agrees_with(self, other: ActivationPattern) -> bool:
        return all(a is None or b is None or a == b
                   for la, lb in zip(self.signs, other.signs) for a, b in zip(la, lb))


@dataclass(frozen=True)
class Region:
    pattern: ActivationPattern
    affine: AffineMap          # the network restricted to this region
    point: tuple[Fraction, ...]  # strict interior point


def activation_pattern(net: ReluNetwork, x: Sequence) -> ActivationPattern:
    h = [as_rational(v) for v in x]
    signs = []
    for layer in net.layers[:-1]:
        pre = layer.apply(h)
        signs.append(tuple(t >= 0 for t in pre))
        h = [t if t > 0 else Fraction(0) for t in pre]
    return ActivationPattern(tuple(signs))


def _form_eval(f: Sequence[Fraction], x: Sequence[Fraction]) -> Fraction:
    return sum((a * b for a, b in zip(f, x)), f[-1])


def _integer_form(f: Sequence[Fraction]) -> list[int]:
    den = 1
    for v in f:
        den = math.lcm(den, v.denominator)
    ints = [int(v * den) for v in f]
    g = 0
    for v in ints:
        g = math.gcd(g, v)
    return [v // g for v in ints] if g > 1 else ints


def _canonical(f: list[Fraction]) -> tuple[tuple[Fraction, ...], Fraction] | None:
    """Hyperplane key with leading coefficient +1 and the signed scale, or None if constant."""
    lead = next((v for v in f[:-1] if v), None)
    if lead is None:
        return None
    inv = 1 / lead
    return tuple(v * inv for v in f), lead


def _apply_layer(layer: AffineMap, inputs: list[list[Fraction]], d: int) -> list[list[Fraction]]:
    out = []
    for row, b in zip(layer.rows, layer.bias):
        acc = [Fraction(0)] * d + [b]
        for j, w in row:
            src = inputs[j]
            for t in range(d + 1):
                if src[t]:
                    acc[t] += w * src[t]
        out.append(acc)
    return out


def enumerate_regions(net: ReluNetwork, cap: int = DEFAULT_REGION_CAP,
                      collapse_linear: bool = False) -> list[Region]:
    """All full-dimensional activation regions of ``net``, depth first.

    Signs are fixed layer by layer.  Neurons whose pre-activations are
    positive multiples of one hyperplane (or of its negation) are decided by
    a single branch.  A branch is kept iff its open polyhedron is non-empty,
    which is decided by an exact LP unless the parent's interior point
    already lies strictly on the required side.

    With ``collapse_linear`` a hyperplane group whose downstream effect is
    the same on both sides (the ``relu(t) - relu(-t)`` pass-through) is not
    branched on; regions are then unions of activation regions on which the
    network is still affine.  This is what equivalence checking needs.
    """
    if net.neurons > cap:
        raise RegionCapExceeded(f"network has {net.neurons} hidden neurons, cap is {cap}")
    d = net.input_dim
    identity = [[Fraction(int(i == j)) for j in range(d)] + [Fraction(0)] for i in range(d)]
    out: list[Region] = []
    n_hidden = net.hidden_layers

    def region_done(inputs, point, signs):
        final = _apply_layer(net.layers[-1], inputs, d)
        affine = AffineMap.from_dense([f[:-1] for f in final], [f[-1] for f in final], cols=d)
        out.append(Region(ActivationPattern(tuple(signs)), affine, tuple(point)))

    def visit_layer(li, inputs, constraints, points, signs):
        if li == n_hidden:
            region_done(inputs, points[0], signs)
            return
        pre = _apply_layer(net.layers[li], inputs, d)
        # neuron -> (on, reported sign); constant neurons are settled here
        settled: dict[int, tuple[bool, Optional[bool]]] = {}
        groups: dict[tuple, list[tuple[int, Fraction]]] = {}
        for k, f in enumerate(pre):
            canon = _canonical(f)
            if canon is None:
                settled[k] = (f[-1] > 0, f[-1] >= 0)
            else:
                key, scale = canon
                groups.setdefault(key, []).append((k, scale))
        cols = _columns(net.layers[li + 1]) if collapse_linear else None
        todo = []
        for key, members in groups.items():
            if collapse_linear and _is_linear(members, cols):
                for k, s in members:
                    settled[k] = (s > 0, None)
            else:
                todo.append((key, members))

        def finish(chosen, constraints, points):
            layer_signs, post = [], []
            for k, f in enumerate(pre):
                on, sign = chosen[k] if k in chosen else settled[k]
                layer_signs.append(sign)
                post.append(f if on else [Fraction(0)] * (d + 1))
            visit_layer(li + 1, post, constraints, points, signs + [tuple(layer_signs)])

        def branch(gi, chosen, constraints, points):
            if gi == len(todo):
                finish(chosen, constraints, points)
                return
            key, members = todo[gi]
            for side in (1, -1):
                f = [side * v for v in key]
                ci = _integer_form(f)
                inside = [p for p in points if _form_eval(f, p) > 0]
                if not inside:
                    cons = constraints + [ci]
                    t, x = max_slack_int([c[:-1] for c in cons], [-c[-1] for c in cons])
                    if t <= 0:
                        continue
                    inside = [x]
                ch = dict(chosen)
                for k, s in members:
                    on = (s > 0) == (side > 0)
                    ch[k] = (on, on)
                branch(gi + 1, ch, constraints + [ci], inside[:_POINT_CACHE])

        branch(0, {}, constraints, points)

    visit_layer(0, identity, [], [[Fraction(0)] * d], [])
    return out


def _columns(layer: AffineMap) -> dict[int, dict[int, Fraction]]:
    cols: dict[int, dict[int, Fraction]] = {}
    for i, row in enumerate(layer.rows):
        for j, v in row:
            cols.setdefault(j, {})[i] = v
    return cols


def _is_linear(members: list[tuple[int, Fraction]], cols) -> bool:
    """Is ``sum_k col_k relu(s_k h)`` linear in ``h``?

    The sum is ``u relu(h) + v relu(-h)`` with ``u`` collecting ``s col`` over
    ``s > 0`` and ``v`` collecting ``|s| col`` over ``s < 0``; it equals ``u h``
    exactly when ``u + v = 0``.
    """
    total: dict[int, Fraction] = {}
    for k, s in members:
        for i, v in cols.get(k, {}).items():
            total[i] = total.get(i, 0) + abs(s) * v
    return all(v == 0 for v in total.values())


def difference_network(a: ReluNetwork, b: ReluNetwork) -> ReluNetwork:
    if a.input_dim != b.input_dim or a.output_dim != b.output_dim:
        raise ValueError("networks must have the same input and output dimensions")
    depth = max(a.hidden_layers, b.hidden_layers)
    both = stack([pad_depth(a, depth), pad_depth(b, depth)])
    m = a.output_dim
    readout = AffineMap.from_rows(2 * m, [[(i, Fraction(1)), (m + i, Fraction(-1))]
                                          for i in range(m)])
    return then_affine(both, readout)


def _nonzero_witness(region: Region, constraints_ok: Callable) -> list[Fraction]:
    p = list(region.point)
    for row, b in zip(region.affine.rows, region.affine.bias):
        val = sum((v * p[j] for j, v in row), b)
        if val:
            return p
    # zero at the interior point; step along a nonzero gradient until it is not
    for row, b in zip(region.affine.rows, region.affine.bias):
        if not row:
            continue
        eps = Fraction(1)
        while True:
            q = list(p)
            for j, v in row:
                q[j] += eps * v
            if constraints_ok(q):
                return q
            eps /= 2
    return p


def check_exact_equiv(a: ReluNetwork, b: ReluNetwork,
                      cap: int = DEFAULT_EQUIV_CAP) -> VerificationReport:
    """Certify ``a == b`` everywhere, or produce a point where they differ.

    Both networks are continuous, so agreement on every full-dimensional
    region of the difference network is agreement everywhere.
    """
    diff = difference_network(a, b)
    if diff.neurons > cap:
        return VerificationReport(INCONCLUSIVE, "regions",
                                  reason=f"difference network has {diff.neurons} hidden neurons, "
                                         f"above the cap of {cap}")
    regions = enumerate_regions(diff, cap=cap, collapse_linear=True)
    for i, region in enumerate(regions):
        if any(region.affine.rows) or any(region.affine.bias):
            def inside(q, region=region):
                return activation_pattern(diff, q).agrees_with(region.pattern)
            w = _nonzero_witness(region, inside)
            return VerificationReport(COUNTEREXAMPLE, "regions", witness=w,
                                      regions_enumerated=i + 1,
                                      expected=evaluate(b, w), actual=evaluate(a, w))
    return VerificationReport(EQUIVALENT, "regions", regions_enumerated=len(regions))
