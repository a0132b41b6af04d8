"""Exact linear programming over the rationals.

The simplex runs on an integer tableau with fraction-free (Bareiss style)
pivoting: the tableau holds ``T / D`` with integer ``T`` and a shared positive
denominator ``D``, so every update is an exact integer division.  Bland's
least-index rule prevents cycling.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Sequence

from .ir import DimensionError, as_rational

GE = ">="
GT = ">"

Constraint = tuple[Sequence, str, object]


class Unbounded(Exception):
    pass


def _row_scale(values: Sequence[Fraction]) -> int:
    den = 1
    for v in values:
        den = math.lcm(den, v.denominator)
    return den


def _pivot_loop(T: list[list[int]], m: int, n: int) -> tuple[int, list[int], list[int]]:
    """Run Bland's rule on a condensed integer tableau, in place.

    Rows ``0..m-1`` read ``sum_j T[i][j] x_nb[j] + x_bs[i] = T[i][n]`` (all over
    ``D``); row ``m`` is the objective with negated costs.  Returns ``D`` and
    the final non-basic / basic labels.
    """
    nb = list(range(n))
    bs = list(range(n, n + m))
    D = 1
    obj = T[m]
    while True:
        col, best = None, None
        for j in range(n):
            if obj[j] < 0 and (best is None or nb[j] < best):
                col, best = j, nb[j]
        if col is None:
            return D, nb, bs
        r = None
        for i in range(m):
            a = T[i][col]
            if a <= 0:
                continue
            if r is None:
                r = i
                continue
            lhs, rhs = T[i][n] * T[r][col], T[r][n] * a
            if lhs < rhs or (lhs == rhs and bs[i] < bs[r]):
                r = i
        if r is None:
            raise Unbounded()
        prow = T[r]
        p = prow[col]
        for i in range(m + 1):
            if i == r:
                continue
            row = T[i]
            f = row[col]
            if f:
                for j in range(n + 1):
                    row[j] = (row[j] * p - f * prow[j]) // D
            else:
                for j in range(n + 1):
                    row[j] = row[j] * p // D
            row[col] = -f
        prow[col] = D
        D = p
        nb[col], bs[r] = bs[r], nb[col]


def _solve_int(T: list[list[int]], m: int, n: int) -> tuple[Fraction, list[Fraction]]:
    D, nb, bs = _pivot_loop(T, m, n)
    z = [Fraction(0)] * n
    for i, var in enumerate(bs):
        if var < n:
            z[var] = Fraction(T[i][n], D)
    return Fraction(T[m][n], D), z


def maximize(c: Sequence, A: Sequence[Sequence], b: Sequence) -> tuple[Fraction, list[Fraction]]:
    """``max c.z`` subject to ``A z <= b``, ``z >= 0``, where ``b >= 0``.

    ``z = 0`` must be feasible, which is what every caller here arranges.
    Returns the optimum and an optimal ``z``.
    """
    m, n = len(A), len(c)
    c = [as_rational(v) for v in c]
    b = [as_rational(v) for v in b]
    if any(v < 0 for v in b):
        raise ValueError("maximize() needs b >= 0 so that the origin is feasible")
    T: list[list[int]] = []
    for i, row in enumerate(A):
        row = [as_rational(v) for v in row]
        if len(row) != n:
            raise DimensionError("constraint row length differs from objective length")
        # scaling a row rescales its slack variable only
        s = _row_scale(row + [b[i]])
        T.append([int(v * s) for v in row] + [int(b[i] * s)])
    cs = _row_scale(c)
    T.append([-int(v * cs) for v in c] + [0])
    value, z = _solve_int(T, m, n)
    return value / cs, z


def max_slack_int(rows: Sequence[Sequence[int]], rhs: Sequence[int],
                  cap: int = 1) -> tuple[Fraction, list[Fraction]]:
    """Integer-data variant of :func:`max_slack` used by region enumeration."""
    d = len(rows[0])
    t0 = min([cap] + [-v for v in rhs])
    T = []
    for r, v in zip(rows, rhs):
        t = []
        for a in r:
            t.append(-a)
            t.append(a)
        t.append(1)
        t.append(-v - t0)
        T.append(t)
    T.append([0] * (2 * d) + [1, cap - t0])
    T.append([0] * (2 * d) + [-1, 0])
    _, z = _solve_int(T, len(rows) + 1, 2 * d + 1)
    return t0 + z[-1], _unsplit(z, d)


def _split(vals: Sequence[Fraction]) -> list[Fraction]:
    out = []
    for v in vals:
        out.extend((v, -v))
    return out


def _unsplit(z: Sequence[Fraction], d: int) -> list[Fraction]:
    return [z[2 * i] - z[2 * i + 1] for i in range(d)]


def max_slack(constraints: Sequence[tuple[Sequence, object]], cap=1) -> tuple[Fraction, list[Fraction]]:
    """Maximize ``t <= cap`` subject to ``row.x - t >= rhs`` for every constraint.

    The optimum is the largest uniform margin; ``t > 0`` means the system is
    strictly feasible.
    """
    rows = [[as_rational(v) for v in r] for r, _ in constraints]
    rhs = [as_rational(v) for _, v in constraints]
    d = len(rows[0]) if rows else 0
    if any(len(r) != d for r in rows):
        raise DimensionError("constraint rows have different lengths")
    cap = as_rational(cap)
    t0 = min([cap] + [-v for v in rhs])
    # variables: x+ / x- interleaved, then u = t - t0 >= 0
    A = [[-v for v in _split(r)] + [Fraction(1)] for r in rows]
    b = [-v - t0 for v in rhs]
    A.append([Fraction(0)] * (2 * d) + [Fraction(1)])
    b.append(cap - t0)
    c = [Fraction(0)] * (2 * d) + [Fraction(1)]
    _, z = maximize(c, A, b)
    return t0 + z[-1], _unsplit(z, d)


def lp_feasible(constraints: Sequence[Constraint], dim: int | None = None) -> list[Fraction] | None:
    """Exact point satisfying every ``row . x  (>= | >)  rhs``, or ``None``.

    First the uniform margin over all constraints is maximized; if it is
    positive the optimizer already satisfies everything strictly.  If it is
    exactly zero and some constraints are strict, a second LP keeps the
    non-strict ones as hard constraints and maximizes the margin of the
    strict ones only.
    """
    if not constraints:
        return [Fraction(0)] * (dim or 0)
    rows = [[as_rational(v) for v in r] for r, _, _ in constraints]
    d = len(rows[0])
    if dim is not None and d != dim:
        raise DimensionError(f"constraints have dimension {d}, expected {dim}")
    if any(len(r) != d for r in rows):
        raise DimensionError("constraint rows have different lengths")
    rels = [rel for _, rel, _ in constraints]
    if any(rel not in (GE, GT) for rel in rels):
        raise ValueError(f"relations must be {GE!r} or {GT!r}")
    rhs = [as_rational(v) for _, _, v in constraints]
    t, x = max_slack(list(zip(rows, rhs)))
    if t < 0:
        return None
    if t > 0 or GT not in rels:
        return x
    # closed system feasible at x with zero margin; push the strict rows off their bounds
    slack = [sum((a * xi for a, xi in zip(r, x)), -v) for r, v in zip(rows, rhs)]
    A, b = [], []
    for r, rel, s in zip(rows, rels, slack):
        A.append([-v for v in _split(r)] + [Fraction(1 if rel == GT else 0)])
        b.append(s)
    A.append([Fraction(0)] * (2 * d) + [Fraction(1)])
    b.append(Fraction(1))
    c = [Fraction(0)] * (2 * d) + [Fraction(1)]
    value, z = maximize(c, A, b)
    if value <= 0:
        return None
    y = _unsplit(z, d)
    return [xi + yi for xi, yi in zip(x, y)]


def satisfies(point: Sequence[Fraction], constraints: Sequence[Constraint]) -> bool:
    for row, rel, rhs in constraints:
        lhs = sum(as_rational(a) * p for a, p in zip(row, point))
        rhs = as_rational(rhs)
        if rel == GT and not lhs > rhs:
            return False
        if rel == GE and not lhs >= rhs:
            return False
    return True
