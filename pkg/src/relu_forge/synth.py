"""Constructors for exact max networks and compiled CPWL functions.

Three strategies build ``MAX_n``:

* ``tree``    -- pairwise maxima in a balanced binary tree, ``ceil(log2 n)``
  hidden layers;
* ``five``    -- the same tree idea with the two-hidden-layer ``MAX_5``
  gadget as the node, ``2 ceil(log5 n)`` hidden layers;
* ``ternary`` -- the inductive construction that rewrites ``T_{0,3^k+2}``
  into a signed sum of ``T_{3^(k-1),2}`` terms and realizes each with one
  extra layer on top of ``MAX_{3^(k-1)+2}``, ``ceil(log3(n-2)) + 1`` hidden
  layers.

``T_{a,b}`` is the maximum over ``a`` blocks ``max(y1,y2) + max(y3,y4)`` and
``b`` plain arguments.  Symbolic sums of such terms are :class:`TermCombo`.
"""

from __future__ import annotations

import logging
import os
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

from .ir import (
    AffineMap,
    DimensionError,
    ReluNetwork,
    affine_network,
    as_rational,
    compose,
    concat,
    identity_network,
    linear_combination,
    pad_depth,
    stack,
    then_affine,
)

log = logging.getLogger(__name__)

HALF = Fraction(1, 2)
DEFAULT_TERM_LIMIT = 10**6
TERM_LIMIT_ENV = "RELU_FORGE_TERM_LIMIT"


class TermLimitExceeded(RuntimeError):
    """The ternary expansion would exceed the configured term budget."""

    def __init__(self, n: int, bound: int, limit: int):
        self.n, self.bound, self.limit = n, bound, limit
        super().__init__(
            f"ternary term guard: MAX_{n} needs up to {bound} terms before dedup "
            f"(limit {limit}, set {TERM_LIMIT_ENV} to raise it, or fall back to the five-ary method)")


def term_limit() -> int:
    raw = os.environ.get(TERM_LIMIT_ENV)
    return int(raw) if raw else DEFAULT_TERM_LIMIT


# ---------------------------------------------------------------------------
# baseline gadgets

def build_max2() -> ReluNetwork:
    """``max(x1, x2) = relu(x2 - x1) + x1``.

    A layered network cannot skip ``x1`` past the ReLU, so it rides along as
    ``relu(x1) - relu(-x1)``: three hidden neurons.
    """
    first = AffineMap.from_dense([[-1, 1], [1, 0], [-1, 0]])
    readout = AffineMap.from_dense([[1, 1, -1]])
    return ReluNetwork(2, (first, readout))


def _reduce_levels(n: int, arity: int, gadget: Callable[[], ReluNetwork]) -> ReluNetwork:
    if n < 1:
        raise ValueError(f"MAX_n needs n >= 1, got {n}")
    node = gadget()
    net = identity_network(n)
    width = n
    while width > 1:
        parts = []
        for start in range(0, width, arity):
            size = min(arity, width - start)
            if size == 1:
                parts.append(pad_depth(identity_network(1), node.hidden_layers))
            elif size == arity:
                parts.append(node)
            else:
                # repeat the group's first argument to fill the gadget
                sel = [[1 if j == (i if i < size else 0) else 0 for j in range(size)]
                       for i in range(arity)]
                parts.append(compose(node, affine_network(sel)))
        net = compose(concat(parts), net)
        width = net.output_dim
    return net


def build_tree_max(n: int) -> ReluNetwork:
    return _reduce_levels(n, 2, build_max2)


def build_five_ary_max(n: int) -> ReluNetwork:
    return _reduce_levels(n, 5, build_max5)


# ---------------------------------------------------------------------------
# the nine terms of the five-input identity

# Each closed form is a maximum of sums x_i + x_j (0-based indices; (4, 4) is 2*x5).
TERM_FORMS: dict[str, tuple[tuple[int, int], ...]] = {
    "P1": ((4, 4), (0, 1), (0, 0), (0, 2), (0, 3), (2, 3)),
    "P2": ((4, 4), (0, 1), (1, 1), (1, 2), (1, 3), (2, 3)),
    "P3": ((4, 4), (2, 3), (2, 2), (2, 0), (2, 1), (0, 1)),
    "P4": ((4, 4), (2, 3), (3, 3), (3, 0), (3, 1), (0, 1)),
    "Q": ((4, 4), (0, 1), (2, 3)),
    "R13": ((4, 4), (0, 2), (0, 1), (2, 3)),
    "R14": ((4, 4), (0, 3), (0, 1), (2, 3)),
    "R23": ((4, 4), (1, 2), (0, 1), (2, 3)),
    "R24": ((4, 4), (1, 3), (0, 1), (2, 3)),
}
TERM_SIGNS: dict[str, int] = {
    "P1": 1, "P2": 1, "P3": 1, "P4": 1, "Q": 1,
    "R13": -1, "R14": -1, "R23": -1, "R24": -1,
}


def _x(*idx: int) -> tuple:
    coef: dict[int, int] = {}
    for i in idx:
        coef[i] = coef.get(i, 0) + 1
    return ("lin", tuple(sorted(coef.items())))


def _max(a, b):
    return ("max", a, b)


def _sum(a, b):
    return ("sum", a, b)


def _p_term(i: int, j: int, p: int, k: int, l: int):
    # max(max(2x5, x_i + x_j), max(x_p, x_k) + max(x_p, x_l))
    return _max(_max(_x(4, 4), _x(i, j)), _sum(_max(_x(p), _x(k)), _max(_x(p), _x(l))))


def _r_term(i: int, j: int):
    return _max(_max(_x(4, 4), _x(i, j)), _max(_x(0, 1), _x(2, 3)))


# Nested (depth-2) forms used to build the networks.
TERM_EXPRESSIONS = {
    "P1": _p_term(0, 1, 0, 2, 3),
    "P2": _p_term(0, 1, 1, 2, 3),
    "P3": _p_term(2, 3, 2, 0, 1),
    "P4": _p_term(2, 3, 3, 0, 1),
    "Q": _max(_x(4, 4), _max(_x(0, 1), _x(2, 3))),
    "R13": _r_term(0, 2),
    "R14": _r_term(0, 3),
    "R23": _r_term(1, 2),
    "R24": _r_term(1, 3),
}


def term_eval(term_id: str, x: Sequence) -> Fraction:
    """Closed-form value of one of the nine terms at a 5-vector."""
    try:
        forms = TERM_FORMS[term_id]
    except KeyError:
        raise ValueError(f"unknown term {term_id!r}") from None
    if len(x) != 5:
        raise DimensionError(f"terms take 5 inputs, got {len(x)}")
    x = [as_rational(v) for v in x]
    return max(x[i] + x[j] for i, j in forms)


def eval_m(x: Sequence) -> Fraction:
    if len(x) != 5:
        raise DimensionError(f"M takes 5 inputs, got {len(x)}")
    total = sum(TERM_SIGNS[t] * term_eval(t, x) for t in TERM_FORMS)
    return HALF * total


def compile_expression(expr, dim: int) -> ReluNetwork:
    """Compile a nested max/sum expression over linear forms into a network."""
    kind = expr[0]
    if kind == "lin":
        row = [0] * dim
        for i, c in expr[1]:
            row[i] = c
        return affine_network([row])
    left, right = compile_expression(expr[1], dim), compile_expression(expr[2], dim)
    both = stack([left, right])
    if kind == "sum":
        return then_affine(both, [[1, 1]])
    if kind == "max":
        return compose(build_max2(), both)
    raise ValueError(f"unknown expression node {kind!r}")


def term_network(term_id: str) -> ReluNetwork:
    return compile_expression(TERM_EXPRESSIONS[term_id], 5)


def build_max5() -> ReluNetwork:
    """Two-hidden-layer ``MAX_5`` as half the signed sum of the nine terms."""
    ids = list(TERM_FORMS)
    return linear_combination([term_network(t) for t in ids],
                              [HALF * TERM_SIGNS[t] for t in ids])


# ---------------------------------------------------------------------------
# symbolic T_{a,b} terms

Form = tuple[tuple[tuple[int, Fraction], ...], Fraction]  # (sparse row, constant)
_ZERO_FORM: Form = ((), Fraction(0))


def _form_add(f: Form, g: Form) -> Form:
    acc: dict[int, Fraction] = dict(f[0])
    for j, v in g[0]:
        acc[j] = acc.get(j, 0) + v
    return tuple((j, acc[j]) for j in sorted(acc) if acc[j]), f[1] + g[1]


def _form_scale(f: Form, c: Fraction) -> Form:
    return tuple((j, c * v) for j, v in f[0]), c * f[1]


def _form_value(f: Form, x: Sequence[Fraction]) -> Fraction:
    return sum((v * x[j] for j, v in f[0]), f[1])


def t_value(a: int, b: int, y: Sequence[Fraction]) -> Fraction:
    """``T_{a,b}(y)``."""
    if len(y) != 4 * a + b:
        raise DimensionError(f"T_{{{a},{b}}} takes {4 * a + b} inputs, got {len(y)}")
    cands = [max(y[4 * k], y[4 * k + 1]) + max(y[4 * k + 2], y[4 * k + 3]) for k in range(a)]
    cands.extend(y[4 * a:])
    return max(cands)


@dataclass(frozen=True)
class TabTerm:
    """``x -> coef * T_{a,b}(pre_map(x))``."""

    coef: Fraction
    a: int
    b: int
    pre_map: AffineMap

    def __post_init__(self):
        if self.a < 0 or self.b < 0:
            raise ValueError("a and b must be non-negative")
        if self.pre_map.n_rows != 4 * self.a + self.b:
            raise DimensionError(
                f"pre_map has {self.pre_map.n_rows} rows, T_{{{self.a},{self.b}}} "
                f"needs {4 * self.a + self.b}")
        if self.a + self.b == 0:
            raise ValueError("T_{0,0} is the maximum of nothing")

    @property
    def forms(self) -> list[Form]:
        return list(zip(self.pre_map.rows, self.pre_map.bias))

    def value(self, x: Sequence) -> Fraction:
        x = [as_rational(v) for v in x]
        return self.coef * t_value(self.a, self.b, self.pre_map.apply(x))

    def canonical_key(self):
        """Key invariant under the symmetries of ``T_{a,b}``.

        Pairs inside a block, the two pairs of a block, the blocks themselves
        and the plain arguments may all be permuted without changing the value.
        """
        forms = self.forms
        blocks = []
        for k in range(self.a):
            p = sorted(forms[4 * k:4 * k + 2])
            q = sorted(forms[4 * k + 2:4 * k + 4])
            blocks.append(tuple(sorted([tuple(p), tuple(q)])))
        extras = sorted(forms[4 * self.a:])
        return self.a, self.b, tuple(sorted(blocks)), tuple(extras)


def _term_from_key(coef: Fraction, key, cols: int) -> TabTerm:
    a, b, blocks, extras = key
    forms = [f for blk in blocks for pair in blk for f in pair] + list(extras)
    pre = AffineMap(cols, tuple(f[0] for f in forms), tuple(f[1] for f in forms))
    return TabTerm(coef, a, b, pre)


@dataclass(frozen=True)
class TermCombo:
    ambient_dim: int
    terms: tuple[TabTerm, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        for t in self.terms:
            if t.pre_map.cols != self.ambient_dim:
                raise DimensionError("term pre_map does not read the ambient space")

    def value(self, x: Sequence) -> Fraction:
        x = [as_rational(v) for v in x]
        return sum((t.value(x) for t in self.terms), Fraction(0))

    def __len__(self):
        return len(self.terms)

    def simplified(self) -> TermCombo:
        """Merge terms equal up to the symmetries of ``T``; drop zero terms.

        Output is ordered by canonical key, so it does not depend on input order.
        """
        acc: dict = {}
        for t in self.terms:
            key = t.canonical_key()
            acc[key] = acc.get(key, 0) + t.coef
        terms = [_term_from_key(Fraction(c), k, self.ambient_dim)
                 for k, c in sorted(acc.items(), key=lambda kv: kv[0]) if c]
        return TermCombo(self.ambient_dim, tuple(terms))


# (sign, block builder, new extra) for the nine children, with u = the four
# peeled arguments (0-based) and h = halving.
def _children(u: Sequence[Form]):
    h = [_form_scale(f, HALF) for f in u]

    def s(i, j):
        return _form_scale(_form_add(u[i], u[j]), HALF)

    z = _ZERO_FORM
    return [
        (1, (h[0], h[2], h[0], h[3]), s(0, 1)),   # P1
        (1, (h[1], h[2], h[1], h[3]), s(0, 1)),   # P2
        (1, (h[2], h[0], h[2], h[1]), s(2, 3)),   # P3
        (1, (h[3], h[0], h[3], h[1]), s(2, 3)),   # P4
        (1, (s(0, 1), s(2, 3), z, z), s(0, 1)),   # Q, extra repeated to fill the shape
        (-1, (s(0, 2), s(0, 1), z, z), s(2, 3)),  # R13
        (-1, (s(0, 3), s(0, 1), z, z), s(2, 3)),  # R14
        (-1, (s(1, 2), s(0, 1), z, z), s(2, 3)),  # R23
        (-1, (s(1, 3), s(0, 1), z, z), s(2, 3)),  # R24
    ]


def expand_step(term: TabTerm) -> TermCombo:
    """Rewrite ``T_{a,b}`` (b >= 4) as nine signed ``T_{a+1,b-3}`` terms.

    The last four plain arguments are peeled off and the rest of the term
    plays the role of the fifth input of the nine-term identity.
    """
    a, b = term.a, term.b
    if b < 4:
        raise ValueError(f"expand_step needs b >= 4, got b={b}")
    if a == 0 and b == 4:
        raise ValueError("T_{0,4} has no remainder to play the fifth input; pad it to T_{0,5}")
    forms = term.forms
    blocks, extras = forms[:4 * a], forms[4 * a:]
    rest, peeled = extras[:b - 4], extras[b - 4:]
    cols = term.pre_map.cols
    out = []
    for sign, block, extra in _children(peeled):
        fs = blocks + list(block) + rest + [extra]
        pre = AffineMap(cols, tuple(f[0] for f in fs), tuple(f[1] for f in fs))
        out.append(TabTerm(sign * term.coef, a + 1, b - 3, pre))
    return TermCombo(cols, tuple(out))


def expand_full(start: TermCombo, target_b: int, *, simplify: bool = False,
                limit: int | None = None) -> TermCombo:
    """Expand every term down to ``b == target_b``.

    ``limit`` bounds the pre-dedup term count ``sum(9**steps)``.
    """
    bound = 0
    for t in start.terms:
        if t.b < target_b or (t.b - target_b) % 3:
            raise ValueError(
                f"term T_{{{t.a},{t.b}}} cannot reach b={target_b} in steps of 3")
        bound += 9 ** ((t.b - target_b) // 3)
    if limit is not None and bound > limit:
        raise TermLimitExceeded(start.ambient_dim, bound, limit)
    combo = start
    while any(t.b > target_b for t in combo.terms):
        nxt = []
        for t in combo.terms:
            nxt.extend(expand_step(t).terms if t.b > target_b else (t,))
        combo = TermCombo(start.ambient_dim, tuple(nxt))
        if simplify:
            combo = combo.simplified()
        log.debug("expansion step: %d terms", len(combo))
    return combo


def ternary_term_bound(n: int) -> int:
    """Pre-dedup term count of the top expansion for ``MAX_n`` (0 if none is needed)."""
    if n <= 5:
        return 0
    k = _ternary_level(n)
    return 9 ** (3 ** (k - 1))


def _ternary_level(n: int) -> int:
    k = 1
    while 3 ** k + 2 < n:
        k += 1
    return k


def realize_term(term: TabTerm, inner_budget_layers: int | None = None,
                 inner: ReluNetwork | None = None) -> ReluNetwork:
    """Network for ``coef * T_{a,b}(pre_map(x))`` with one layer on top of ``MAX_{a+b}``.

    The first hidden layer holds one gap neuron ``relu(q - p)`` per pair and
    carries the ambient input as ``relu(x_i), relu(-x_i)``; the readout forms
    the ``a`` block sums and the ``b`` plain arguments, which feed ``inner``.
    """
    a, b = term.a, term.b
    if inner is None:
        inner = build_ternary_max(a + b)
    if inner.input_dim != a + b or inner.output_dim != 1:
        raise DimensionError(f"inner network must compute MAX_{a + b}")
    if inner_budget_layers is not None and inner.hidden_layers > inner_budget_layers:
        raise ValueError(
            f"MAX_{a + b} needs {inner.hidden_layers} hidden layers, budget is {inner_budget_layers}")
    d = term.pre_map.cols
    forms = term.forms
    gap_rows, gap_bias = [], []
    for k in range(2 * a):
        p, q = forms[2 * k], forms[2 * k + 1]
        diff = _form_add(q, _form_scale(p, Fraction(-1)))
        gap_rows.append(diff[0])
        gap_bias.append(diff[1])
    carry_rows = []
    for i in range(d):
        carry_rows.append(((i, Fraction(1)),))
        carry_rows.append(((i, Fraction(-1)),))
    first = AffineMap(d, tuple(gap_rows) + tuple(carry_rows),
                      tuple(gap_bias) + (Fraction(0),) * (2 * d))
    g = 2 * a  # offset of the carry neurons

    def linear(f: Form) -> list[tuple[int, Fraction]]:
        out = []
        for j, v in f[0]:
            out.append((g + 2 * j, v))
            out.append((g + 2 * j + 1, -v))
        return out

    rows, bias = [], []
    for k in range(a):
        p0, p1 = forms[4 * k], forms[4 * k + 2]
        rows.append([(2 * k, Fraction(1)), (2 * k + 1, Fraction(1))] + linear(p0) + linear(p1))
        bias.append(p0[1] + p1[1])
    for f in forms[4 * a:]:
        rows.append(linear(f))
        bias.append(f[1])
    readout = AffineMap.from_rows(first.n_rows, rows, bias)
    net = compose(inner, ReluNetwork(d, (first, readout)))
    return then_affine(net, AffineMap.from_rows(1, [[(0, term.coef)]]))


def build_ternary_max(n: int, *, limit: int | None = None, fallback: bool = False) -> ReluNetwork:
    """``MAX_n`` in ``ceil(log3(n-2)) + 1`` hidden layers (n >= 4).

    Sizes that are not of the form ``3^k + 2`` repeat ``x1`` up to the next
    one.  If the expansion would exceed ``limit`` terms (default from
    ``RELU_FORGE_TERM_LIMIT``), raise :class:`TermLimitExceeded`, or with
    ``fallback=True`` warn and build the five-ary network instead.
    """
    if n < 1:
        raise ValueError(f"MAX_n needs n >= 1, got {n}")
    if n == 1:
        return identity_network(1)
    if n == 2:
        return build_max2()
    if n <= 4:
        return build_tree_max(n)
    if n == 5:
        return build_max5()
    limit = term_limit() if limit is None else limit
    bound = ternary_term_bound(n)
    if bound > limit:
        if fallback:
            warnings.warn(f"ternary MAX_{n} exceeds term limit {limit}; using five-ary",
                          RuntimeWarning, stacklevel=2)
            return build_five_ary_max(n)
        raise TermLimitExceeded(n, bound, limit)
    k = _ternary_level(n)
    m = 3 ** k + 2
    pad = AffineMap.from_rows(n, [[(i if i < n else 0, Fraction(1))] for i in range(m)])
    start = TermCombo(n, (TabTerm(Fraction(1), 0, m, pad),))
    combo = expand_full(start, 2, simplify=True, limit=limit)
    inner = build_ternary_max(3 ** (k - 1) + 2, limit=limit)
    nets = [realize_term(t, inner=inner) for t in combo.terms]
    log.info("ternary MAX_%d: %d distinct terms", n, len(nets))
    return linear_combination(nets, [1] * len(nets))


MAX_BUILDERS: dict[str, Callable[[int], ReluNetwork]] = {
    "tree": build_tree_max,
    "five": build_five_ary_max,
    "ternary": build_ternary_max,
}


# ---------------------------------------------------------------------------
# CPWL compilation

@dataclass(frozen=True)
class CpwlDecomposition:
    """``f(x) = sum sign_i * MAX_{n+1}(A_i x + c_i)``."""

    n: int
    terms: tuple[tuple[int, AffineMap], ...]

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if self.n < 1:
            raise ValueError("n must be positive")
        if not self.terms:
            raise ValueError("decomposition has no terms")
        for sign, amap in self.terms:
            if sign not in (1, -1):
                raise ValueError(f"sign must be +1 or -1, got {sign!r}")
            if amap.cols != self.n or amap.n_rows != self.n + 1:
                raise DimensionError(
                    f"affine map must be {self.n + 1}x{self.n}, got {amap.n_rows}x{amap.cols}")

    def evaluate(self, x: Sequence) -> Fraction:
        x = [as_rational(v) for v in x]
        return sum((s * max(a.apply(x)) for s, a in self.terms), Fraction(0))


def compile_cpwl(decomp: CpwlDecomposition, method: str = "ternary") -> ReluNetwork:
    try:
        builder = MAX_BUILDERS[method]
    except KeyError:
        raise ValueError(f"unknown method {method!r}") from None
    max_net = builder(decomp.n + 1)
    nets = [compose(max_net, ReluNetwork(decomp.n, (amap,))) for _, amap in decomp.terms]
    return linear_combination(nets, [s for s, _ in decomp.terms])
