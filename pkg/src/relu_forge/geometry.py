"""Exact polytope calculus at desk scale.

Polytopes are stored by their vertices.  Facets, intersections and volumes
are found by exhaustive search over vertex or constraint subsets, which is
only sensible in dimension <= 4, so those routines refuse anything bigger.
Identities between polytopes are checked through support functions at
seeded random rational directions.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Optional, Sequence, Union

from .ir import DimensionError, as_rational
from .lp import GT, lp_feasible

MAX_EXACT_DIM = 4
DIRECTION_BOUND = 2**10
DIRECTION_DENOMINATORS = (1, 2, 4, 8)

Point = tuple[Fraction, ...]


class GeometryInputError(ValueError):
    pass


class EmptyIntersection(GeometryInputError):
    def __init__(self, subset: tuple[str, ...]):
        super().__init__(f"intersection of {{{', '.join(subset)}}} is empty")
        self.subset = subset


def _point(p: Sequence) -> Point:
    return tuple(as_rational(v) for v in p)


def _dot(a: Sequence[Fraction], b: Sequence[Fraction]) -> Fraction:
    return sum((x * y for x, y in zip(a, b)), Fraction(0))


def _sub(a: Sequence[Fraction], b: Sequence[Fraction]) -> Point:
    return tuple(x - y for x, y in zip(a, b))


# ---------------------------------------------------------------------------
# small exact linear algebra

def _rref(rows: list[list[Fraction]], ncols: int) -> tuple[list[list[Fraction]], list[int]]:
    m = [list(r) for r in rows]
    pivots: list[int] = []
    r = 0
    for c in range(ncols):
        pr = next((i for i in range(r, len(m)) if m[i][c]), None)
        if pr is None:
            continue
        m[r], m[pr] = m[pr], m[r]
        inv = 1 / m[r][c]
        m[r] = [v * inv for v in m[r]]
        for i in range(len(m)):
            if i != r and m[i][c]:
                f = m[i][c]
                m[i] = [a - f * b for a, b in zip(m[i], m[r])]
        pivots.append(c)
        r += 1
        if r == len(m):
            break
    return m[:r], pivots


def _nullspace(rows: list[list[Fraction]], ncols: int) -> list[list[Fraction]]:
    red, pivots = _rref(rows, ncols) if rows else ([], [])
    free = [c for c in range(ncols) if c not in pivots]
    basis = []
    for f in free:
        v = [Fraction(0)] * ncols
        v[f] = Fraction(1)
        for row, p in zip(red, pivots):
            v[p] = -row[f]
        basis.append(v)
    return basis


def _solve_square(A: list[list[Fraction]], b: list[Fraction]) -> Optional[list[Fraction]]:
    n = len(A)
    red, pivots = _rref([row + [v] for row, v in zip(A, b)], n + 1)
    if pivots != list(range(n)):
        return None
    return [row[n] for row in red]


def _det(rows: list[list[Fraction]]) -> Fraction:
    m = [list(r) for r in rows]
    n = len(m)
    det = Fraction(1)
    for c in range(n):
        pr = next((i for i in range(c, n) if m[i][c]), None)
        if pr is None:
            return Fraction(0)
        if pr != c:
            m[c], m[pr] = m[pr], m[c]
            det = -det
        det *= m[c][c]
        for i in range(c + 1, n):
            if m[i][c]:
                f = m[i][c] / m[c][c]
                m[i] = [a - f * b for a, b in zip(m[i], m[c])]
    return det


def _primitive(v: Sequence[Fraction]) -> tuple[int, ...]:
    den = 1
    for x in v:
        den = math.lcm(den, x.denominator)
    ints = [int(x * den) for x in v]
    g = 0
    for x in ints:
        g = math.gcd(g, x)
    return tuple(x // g for x in ints) if g else tuple(ints)


# ---------------------------------------------------------------------------
# H-representation by exhaustive search

@dataclass(frozen=True)
class HRep:
    """``eq . x == c`` for every equality, ``a . x <= b`` for every facet."""

    equalities: tuple[tuple[tuple[Fraction, ...], Fraction], ...]
    facets: tuple[tuple[tuple[Fraction, ...], Fraction], ...]

    def contains(self, x: Sequence[Fraction]) -> bool:
        return (all(_dot(e, x) == c for e, c in self.equalities)
                and all(_dot(a, x) <= b for a, b in self.facets))

    def inequalities(self) -> list[tuple[tuple[Fraction, ...], Fraction]]:
        out = list(self.facets)
        for e, c in self.equalities:
            out.append((e, c))
            out.append((tuple(-v for v in e), -c))
        return out


def _affine_hull(verts: Sequence[Point], d: int):
    """Direction basis of the affine hull and the equalities cutting it out."""
    v0 = verts[0]
    diffs = [list(_sub(v, v0)) for v in verts[1:]]
    red, _ = _rref(diffs, d) if diffs else ([], [])
    eqs = []
    for e in _nullspace(diffs, d):
        e = tuple(Fraction(x) for x in _primitive(e))
        eqs.append((e, _dot(e, v0)))
    return red, eqs


def _hrep(verts: Sequence[Point], d: int) -> HRep:
    basis, eqs = _affine_hull(verts, d)
    k = len(basis)
    facets: dict[tuple, tuple[tuple[Fraction, ...], Fraction]] = {}
    if k:
        for subset in itertools.combinations(verts, k):
            s0 = subset[0]
            # a = sum_i c_i basis_i, orthogonal to every difference in the subset
            eqn = [[_dot(b, _sub(s, s0)) for b in basis] for s in subset[1:]]
            null = _nullspace(eqn, k)
            if len(null) != 1:
                continue
            a = [sum((ci * b[j] for ci, b in zip(null[0], basis)), Fraction(0)) for j in range(d)]
            a = tuple(Fraction(x) for x in _primitive(a))
            beta = _dot(a, s0)
            vals = [_dot(a, v) for v in verts]
            if not all(v <= beta for v in vals):
                if not all(v >= beta for v in vals):
                    continue
                a, beta = tuple(-x for x in a), -beta
            facets[a + (beta,)] = (a, beta)
    return HRep(tuple(eqs), tuple(facets[key] for key in sorted(facets)))


# ---------------------------------------------------------------------------
# polytopes

def _is_extreme(v: Point, others: Sequence[Point]) -> bool:
    """Some direction has ``v`` as its unique maximizer among ``others``."""
    if not others:
        return True
    cons = [(_sub(v, u), GT, 0) for u in others]
    return lp_feasible(cons, dim=len(v)) is not None


class Polytope:
    """Convex hull of finitely many rational points, kept as an irredundant vertex list."""

    def __init__(self, points: Sequence[Sequence], dim: int | None = None):
        pts = sorted({_point(p) for p in points})
        if not pts:
            raise GeometryInputError("a polytope needs at least one point")
        d = len(pts[0])
        if dim is not None and dim != d:
            raise DimensionError(f"points have dimension {d}, expected {dim}")
        if any(len(p) != d for p in pts):
            raise DimensionError("points have different dimensions")
        self.dim = d
        self.vertices: tuple[Point, ...] = tuple(
            v for i, v in enumerate(pts) if _is_extreme(v, pts[:i] + pts[i + 1:]))

    def __repr__(self) -> str:
        verts = ", ".join("(" + ", ".join(str(x) for x in v) + ")" for v in self.vertices)
        return f"Polytope([{verts}])"

    def __eq__(self, other) -> bool:
        return isinstance(other, Polytope) and self.vertices == other.vertices

    def __hash__(self) -> int:
        return hash(self.vertices)

    def _require_small(self) -> None:
        if self.dim > MAX_EXACT_DIM:
            raise DimensionError(f"exact facet routines support dim <= {MAX_EXACT_DIM}, got {self.dim}")

    @cached_property
    def hrep(self) -> HRep:
        self._require_small()
        return _hrep(self.vertices, self.dim)

    @property
    def affine_dim(self) -> int:
        return self.dim - len(self.hrep.equalities)

    def contains(self, x: Sequence) -> bool:
        return self.hrep.contains(_point(x))

    def facet_vertex_sets(self) -> list[tuple[Point, ...]]:
        return [tuple(v for v in self.vertices if _dot(a, v) == b) for a, b in self.hrep.facets]


def support(p: Polytope, x: Sequence) -> Fraction:
    x = _point(x)
    if len(x) != p.dim:
        raise DimensionError(f"direction has dimension {len(x)}, polytope has {p.dim}")
    return max(_dot(x, v) for v in p.vertices)


def _same_dim(p: Polytope, q: Polytope) -> None:
    if p.dim != q.dim:
        raise DimensionError(f"polytopes have dimensions {p.dim} and {q.dim}")


def minkowski_sum(p: Polytope, q: Polytope) -> Polytope:
    _same_dim(p, q)
    return Polytope([tuple(a + b for a, b in zip(u, v)) for u in p.vertices for v in q.vertices])


def join(p: Polytope, q: Polytope) -> Polytope:
    _same_dim(p, q)
    return Polytope(p.vertices + q.vertices)


def scale(p: Polytope, c) -> Polytope:
    c = as_rational(c)
    return Polytope([tuple(c * x for x in v) for v in p.vertices])


def newton_polytope(terms: Sequence[Sequence]) -> Polytope:
    """The polytope whose support function is ``x -> max_t <t, x>``."""
    return Polytope(terms)


def intersect(p: Polytope, q: Polytope) -> Optional[Polytope]:
    """``p`` and ``q`` intersected, or ``None`` when they are disjoint.

    The combined inequality system is solved for every ``d``-subset of its
    rows taken as equalities; feasible unique solutions are the vertices.
    """
    _same_dim(p, q)
    p._require_small()
    d = p.dim
    rows = sorted(set(p.hrep.inequalities()) | set(q.hrep.inequalities()))
    found = []
    for subset in itertools.combinations(rows, d):
        x = _solve_square([list(a) for a, _ in subset], [b for _, b in subset])
        if x is None:
            continue
        if all(_dot(a, x) <= b for a, b in rows):
            found.append(tuple(x))
    if not found:
        return None
    return Polytope(found)


def is_face(f: Polytope, p: Polytope) -> bool:
    """Is ``f`` a face of ``p``?

    The smallest face containing ``f`` is cut out by every facet of ``p``
    that contains all of ``f``'s vertices; ``f`` is a face iff it has exactly
    the vertices of ``p`` lying on that intersection.
    """
    _same_dim(f, p)
    if not set(f.vertices) <= set(p.vertices):
        return False
    tight = [(a, b) for a, b in p.hrep.facets if all(_dot(a, v) == b for v in f.vertices)]
    on = {v for v in p.vertices if all(_dot(a, v) == b for a, b in tight)}
    return on == set(f.vertices)


def _triangulate(verts: tuple[Point, ...], d: int) -> list[tuple[Point, ...]]:
    """Pulling triangulation: cone the first vertex over the facets missing it."""
    hrep = _hrep(verts, d)
    k = d - len(hrep.equalities)
    if len(verts) == k + 1:
        return [verts]
    v0 = verts[0]
    out = []
    for a, b in hrep.facets:
        if _dot(a, v0) == b:
            continue
        facet = tuple(v for v in verts if _dot(a, v) == b)
        out.extend((v0,) + s for s in _triangulate(facet, d))
    return out


def simplices(p: Polytope) -> list[tuple[Point, ...]]:
    p._require_small()
    return _triangulate(p.vertices, p.dim)


def volume(p: Polytope) -> Fraction:
    """Exact ``dim``-dimensional volume; zero for flat polytopes."""
    if p.affine_dim < p.dim:
        return Fraction(0)
    total = Fraction(0)
    for s in simplices(p):
        total += abs(_det([list(_sub(v, s[0])) for v in s[1:]]))
    return total / math.factorial(p.dim)


# ---------------------------------------------------------------------------
# expressions certifying membership in the depth classes

@dataclass(frozen=True)
class Leaf:
    point: Point

    def __init__(self, point: Sequence):
        object.__setattr__(self, "point", _point(point))


@dataclass(frozen=True)
class Sum:
    children: tuple

    def __init__(self, *children):
        object.__setattr__(self, "children", tuple(children))


@dataclass(frozen=True)
class Join:
    children: tuple

    def __init__(self, *children):
        object.__setattr__(self, "children", tuple(children))


PolytopeExpr = Union[Leaf, Sum, Join]


class ExprError(ValueError):
    pass


def _join_depth(depths: list[int]) -> int:
    # a join of m members can be bracketed as a binary tree; the best tree
    # has the least D with sum 2**d_i <= 2**D (Kraft), D > max d_i when m > 1
    if len(depths) == 1:
        return depths[0]
    total = sum(2**d for d in depths)
    D = max(depths) + 1
    while 2**D < total:
        D += 1
    return D


def eval_expr(e: PolytopeExpr) -> tuple[Polytope, int]:
    """The polytope an expression denotes and the depth class it certifies.

    Points have depth 0, a sum has the largest depth of its terms, and a
    join of depth-``k`` members has depth ``k + 1``.  Joins nested directly
    in joins are flattened first and rebracketed optimally, since ``*`` is
    associative.
    """
    if isinstance(e, Leaf):
        if not e.point:
            raise ExprError("leaf point is empty")
        return Polytope([e.point]), 0
    if isinstance(e, (Sum, Join)):
        if not e.children:
            raise ExprError(f"{type(e).__name__} node has no children")
        kids = list(e.children)
        if isinstance(e, Join):
            flat = []
            while kids:
                k = kids.pop(0)
                if isinstance(k, Join):
                    if not k.children:
                        raise ExprError("Join node has no children")
                    kids[:0] = list(k.children)
                else:
                    flat.append(k)
            kids = flat
        values = [eval_expr(k) for k in kids]
        dims = {p.dim for p, _ in values}
        if len(dims) != 1:
            raise ExprError(f"children have mixed dimensions {sorted(dims)}")
        if isinstance(e, Sum):
            acc = values[0][0]
            for p, _ in values[1:]:
                acc = minkowski_sum(acc, p)
            return acc, max(d for _, d in values)
        return (Polytope([v for p, _ in values for v in p.vertices]),
                _join_depth([d for _, d in values]))
    raise ExprError(f"not a polytope expression: {e!r}")


# ---------------------------------------------------------------------------
# identity checks

def sample_directions(dim: int, count: int, seed: int) -> list[Point]:
    rng = random.Random(seed)
    b = DIRECTION_BOUND
    return [tuple(Fraction(rng.randint(-b, b), rng.choice(DIRECTION_DENOMINATORS))
                  for _ in range(dim)) for _ in range(count)]


def sample_points(p: Polytope, count: int, seed: int) -> list[Point]:
    """Random rational convex combinations of the vertices of ``p``."""
    rng = random.Random(seed)
    out = []
    for _ in range(count):
        w = [Fraction(rng.randint(0, 64)) for _ in p.vertices]
        if not any(w):
            w[rng.randrange(len(w))] = Fraction(1)
        s = sum(w)
        out.append(tuple(sum((wi * v[j] for wi, v in zip(w, p.vertices)), Fraction(0)) / s
                         for j in range(p.dim)))
    return out


def union_is_convex(p: Polytope, q: Polytope, samples: int = 200, seed: int = 0) -> bool:
    """Does ``conv(p | q)`` stay inside ``p | q``?

    For a full-dimensional hull this is exact: the union is closed, so any
    gap would have positive volume.  Flat hulls fall back to sampling.
    """
    hull = join(p, q)
    if hull.affine_dim == hull.dim:
        inter = intersect(p, q)
        overlap = volume(inter) if inter is not None else Fraction(0)
        return volume(hull) == volume(p) + volume(q) - overlap
    return all(p.contains(x) or q.contains(x) for x in sample_points(hull, samples, seed))


def check_valuation(p: Polytope, q: Polytope, directions: int = 100, seed: int = 0) -> bool:
    """``h(p | q) + h(p & q) == h(p) + h(q)`` at random directions."""
    _same_dim(p, q)
    inter = intersect(p, q)
    if inter is None:
        raise GeometryInputError("the polytopes are disjoint; the identity needs a nonempty intersection")
    if not union_is_convex(p, q, seed=seed):
        raise GeometryInputError("the union of the polytopes is not convex")
    hull = join(p, q)
    for x in sample_directions(p.dim, directions, seed):
        if support(hull, x) + support(inter, x) != support(p, x) + support(q, x):
            return False
    return True


@dataclass(frozen=True)
class Piece:
    name: str
    polytope: Polytope
    certificate: Optional[PolytopeExpr] = None
    base_certificate: Optional[PolytopeExpr] = None


@dataclass(frozen=True)
class SubdivisionComplex:
    ambient: Polytope
    pieces: tuple[Piece, ...]

    @property
    def dim(self) -> int:
        return self.ambient.dim

    def __post_init__(self):
        for piece in self.pieces:
            if piece.polytope.dim != self.ambient.dim:
                raise DimensionError(f"piece {piece.name} has dimension {piece.polytope.dim}")


MAX_ADDITIVITY_PIECES = 5


def intersections(c: SubdivisionComplex) -> dict[tuple[int, ...], Polytope]:
    """``Q_S`` for every nonempty index set ``S``; raises on the first empty one."""
    m = len(c.pieces)
    if m > MAX_ADDITIVITY_PIECES:
        raise GeometryInputError(f"full additivity is limited to {MAX_ADDITIVITY_PIECES} pieces, got {m}")
    out: dict[tuple[int, ...], Polytope] = {}
    for size in range(1, m + 1):
        for S in itertools.combinations(range(m), size):
            if size == 1:
                q = c.pieces[S[0]].polytope
            else:
                q = intersect(out[S[:-1]], c.pieces[S[-1]].polytope)
            if q is None:
                raise EmptyIntersection(tuple(c.pieces[i].name for i in S))
            out[S] = q
    return out


def additivity_failure(c: SubdivisionComplex, directions: int = 200,
                       seed: int = 0) -> Optional[Point]:
    """First sampled direction violating full additivity, or ``None``."""
    qs = intersections(c)
    for x in sample_directions(c.dim, directions, seed):
        lhs = support(c.ambient, x)
        rhs = Fraction(0)
        for S, q in qs.items():
            if len(S) % 2:
                rhs += support(q, x)
            else:
                lhs += support(q, x)
        if lhs != rhs:
            return x
    return None


def check_full_additivity(c: SubdivisionComplex, directions: int = 200, seed: int = 0) -> bool:
    """``h_X + sum_{|S| even} h_{Q_S} == sum_{|S| odd} h_{Q_S}`` at random directions.

    Raises :class:`EmptyIntersection` naming the first empty ``Q_S``.
    """
    return additivity_failure(c, directions, seed) is None


def check_cover(c: SubdivisionComplex, samples: int = 1000, seed: int = 0) -> bool:
    """Every sampled point of the ambient polytope lies in some piece, and no piece sticks out."""
    if not all(c.ambient.contains(v) for piece in c.pieces for v in piece.polytope.vertices):
        return False
    return all(any(piece.polytope.contains(x) for piece in c.pieces)
               for x in sample_points(c.ambient, samples, seed))


# ---------------------------------------------------------------------------
# the tetrahedron and its lift

def _pt(*xs) -> Point:
    return tuple(Fraction(x) for x in xs)


TETRAHEDRON = {
    1: _pt(-1, -1, -1),
    2: _pt(1, 1, -1),
    3: _pt(-1, 1, 1),
    4: _pt(1, -1, 1),
}


def midpoint(i: int, j: int) -> Point:
    return tuple((a + b) / 2 for a, b in zip(TETRAHEDRON[i], TETRAHEDRON[j]))


# apex, then the rhombus base in cyclic order
PYRAMID_TABLE: tuple[tuple[tuple[int, int], tuple], ...] = (
    ((1, 2), (1, (1, 4), (3, 4), (1, 3))),
    ((1, 2), (2, (2, 3), (3, 4), (2, 4))),
    ((3, 4), (3, (1, 3), (1, 2), (2, 3))),
    ((3, 4), (4, (1, 4), (1, 2), (2, 4))),
)


def _table_point(label) -> Point:
    return midpoint(*label) if isinstance(label, tuple) else TETRAHEDRON[label]


def rhombus_expr(base: Sequence[Point]) -> PolytopeExpr:
    """``(b1 * b2) + (0 * (b4 - b1))`` for a parallelogram listed cyclically."""
    b1, b2, _, b4 = base
    zero = tuple(Fraction(0) for _ in b1)
    return Sum(Join(Leaf(b1), Leaf(b2)), Join(Leaf(zero), Leaf(_sub(b4, b1))))


def build_simplex3_subdivision() -> SubdivisionComplex:
    pieces = []
    for idx, (apex_label, base_labels) in enumerate(PYRAMID_TABLE, start=1):
        apex = _table_point(apex_label)
        base = [_table_point(b) for b in base_labels]
        z = rhombus_expr(base)
        pieces.append(Piece(f"Q{idx}", Polytope([apex] + base),
                            certificate=Join(Leaf(apex), z), base_certificate=z))
    return SubdivisionComplex(Polytope(list(TETRAHEDRON.values())), tuple(pieces))


def _lift_point(p: Point) -> Point:
    return p + (Fraction(0),)


LIFT_APEX = _pt(0, 0, 0, 1)


def _lift_expr(e: PolytopeExpr) -> PolytopeExpr:
    if isinstance(e, Leaf):
        return Leaf(_lift_point(e.point))
    if isinstance(e, Sum):
        return Sum(*(_lift_expr(k) for k in e.children))
    if isinstance(e, Join):
        return Join(*(_lift_expr(k) for k in e.children))
    raise ExprError(f"not a polytope expression: {e!r}")


def lift_to_simplex4(c: SubdivisionComplex) -> SubdivisionComplex:
    """Embed a 3-dimensional complex at height 0 in R^4 and cone it from ``e4``.

    A piece certified as ``p * Z`` becomes ``(apex * p) * Z``.
    """
    if c.dim != 3:
        raise GeometryInputError(f"expected a 3-dimensional complex, got dimension {c.dim}")
    apex = Leaf(LIFT_APEX)
    pieces = []
    for piece in c.pieces:
        poly = Polytope([_lift_point(v) for v in piece.polytope.vertices] + [LIFT_APEX])
        cert = None
        if isinstance(piece.certificate, Join) and len(piece.certificate.children) == 2:
            p, z = piece.certificate.children
            cert = Join(Join(apex, _lift_expr(p)), _lift_expr(z))
        elif piece.certificate is not None:
            cert = Join(apex, _lift_expr(piece.certificate))
        base = _lift_expr(piece.base_certificate) if piece.base_certificate is not None else None
        pieces.append(Piece(piece.name, poly, certificate=cert, base_certificate=base))
    ambient = Polytope([_lift_point(v) for v in c.ambient.vertices] + [LIFT_APEX])
    return SubdivisionComplex(ambient, tuple(pieces))


def simplex_identification(x: Sequence) -> Point:
    """Linear map R^5 -> R^4 sending e_i to the i-th lifted tetrahedron vertex and e_5 to the apex."""
    x = _point(x)
    if len(x) != 5:
        raise DimensionError(f"expected a 5-vector, got {len(x)}")
    images = [_lift_point(TETRAHEDRON[i]) for i in range(1, 5)] + [LIFT_APEX]
    return tuple(sum((xi * img[j] for xi, img in zip(x, images)), Fraction(0)) for j in range(4))


def term_newton_polytope(term_id: str) -> Polytope:
    """Newton polytope of one of the nine terms: hull of ``e_i + e_j`` over its linear pieces."""
    from .synth import TERM_FORMS

    forms = TERM_FORMS[term_id]
    pts = []
    for i, j in forms:
        v = [Fraction(0)] * 5
        v[i] += 1
        v[j] += 1
        pts.append(v)
    return newton_polytope(pts)


def map_polytope(p: Polytope, f) -> Polytope:
    return Polytope([f(v) for v in p.vertices])
