"""Exact-arithmetic intermediate representation for ReLU networks.

A network is a chain of affine layers with a ReLU after every layer except
the last one.  Every number is a :class:`fractions.Fraction`; nothing is ever
rounded.  Weight matrices are stored sparsely (one tuple of ``(column,
value)`` pairs per row) because the constructors in :mod:`relu_forge.synth`
produce wide, block-structured layers.

All objects here are immutable; combinators return new networks.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

Rational = Fraction
Row = tuple[tuple[int, Fraction], ...]

_INT64_SAFE = 1 << 62
# widest layer times batch size; larger batches are evaluated in slices
_BATCH_ENTRIES = 1 << 22


class DimensionError(ValueError):
    """Raised when vector or layer dimensions do not line up."""


def as_rational(value) -> Fraction:
    """Coerce ints, strings like ``"-7/2"`` and Fractions to a Fraction.

    Floats are rejected: they would smuggle rounding into exact code paths.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool) or isinstance(value, float):
        raise TypeError(f"refusing non-exact value {value!r}")
    if isinstance(value, (int, str)):
        return Fraction(value)
    if isinstance(value, np.integer):
        return Fraction(int(value))
    raise TypeError(f"cannot interpret {value!r} as a rational")


def relu(t: Fraction) -> Fraction:
    return t if t > 0 else Fraction(0)


def _sparse_row(entries: Iterable[tuple[int, Fraction]]) -> Row:
    acc: dict[int, Fraction] = {}
    for j, v in entries:
        if v:
            acc[j] = acc.get(j, 0) + v
    return tuple((j, Fraction(acc[j])) for j in sorted(acc) if acc[j])


@dataclass(frozen=True)
class AffineMap:
    """``x -> W x + b`` with ``W`` stored as sparse rows."""

    cols: int
    rows: tuple[Row, ...]
    bias: tuple[Fraction, ...]

    def __post_init__(self):
        if len(self.rows) != len(self.bias):
            raise DimensionError(
                f"{len(self.rows)} rows but {len(self.bias)} bias entries")
        for row in self.rows:
            for j, _ in row:
                if not 0 <= j < self.cols:
                    raise DimensionError(f"column {j} out of range {self.cols}")

    @classmethod
    def from_dense(cls, matrix: Sequence[Sequence], bias: Sequence | None = None,
                   cols: int | None = None) -> AffineMap:
        matrix = [[as_rational(v) for v in r] for r in matrix]
        if cols is None:
            if not matrix:
                raise DimensionError("cannot infer column count of an empty matrix")
            cols = len(matrix[0])
        for r in matrix:
            if len(r) != cols:
                raise DimensionError("ragged matrix")
        if bias is None:
            bias = [Fraction(0)] * len(matrix)
        rows = tuple(_sparse_row(enumerate(r)) for r in matrix)
        return cls(cols, rows, tuple(as_rational(b) for b in bias))

    @classmethod
    def from_rows(cls, cols: int, rows: Iterable[Iterable[tuple[int, Fraction]]],
                  bias: Iterable | None = None) -> AffineMap:
        rows = tuple(_sparse_row(r) for r in rows)
        if bias is None:
            bias = (Fraction(0),) * len(rows)
        return cls(cols, rows, tuple(as_rational(b) for b in bias))

    @classmethod
    def identity(cls, n: int) -> AffineMap:
        return cls(n, tuple(((i, Fraction(1)),) for i in range(n)), (Fraction(0),) * n)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def dense(self) -> list[list[Fraction]]:
        out = []
        for row in self.rows:
            r = [Fraction(0)] * self.cols
            for j, v in row:
                r[j] = v
            out.append(r)
        return out

    def apply(self, x: Sequence[Fraction]) -> list[Fraction]:
        if len(x) != self.cols:
            raise DimensionError(f"expected {self.cols} inputs, got {len(x)}")
        return [sum((v * x[j] for j, v in row), b) for row, b in zip(self.rows, self.bias)]

    def after(self, inner: AffineMap) -> AffineMap:
        """The fused map ``self ∘ inner``."""
        if inner.n_rows != self.cols:
            raise DimensionError(
                f"cannot compose: inner has {inner.n_rows} outputs, outer takes {self.cols}")
        rows, bias = [], []
        for row, b in zip(self.rows, self.bias):
            acc: dict[int, Fraction] = {}
            for k, w in row:
                b += w * inner.bias[k]
                for j, v in inner.rows[k]:
                    acc[j] = acc.get(j, 0) + w * v
            rows.append(tuple((j, acc[j]) for j in sorted(acc) if acc[j]))
            bias.append(b)
        return AffineMap(inner.cols, tuple(rows), tuple(bias))

    def scaled(self, c: Fraction) -> AffineMap:
        c = as_rational(c)
        if not c:
            return AffineMap(self.cols, tuple(() for _ in self.rows),
                             (Fraction(0),) * self.n_rows)
        return AffineMap(self.cols, tuple(tuple((j, c * v) for j, v in row) for row in self.rows),
                         tuple(c * b for b in self.bias))

    def coefficients(self):
        for row in self.rows:
            for _, v in row:
                yield v
        yield from self.bias

    @cached_property
    def _integer_form(self):
        """Common denominator, int64 CSR matrix (or None) and integer data."""
        den = 1
        for v in self.coefficients():
            den = math.lcm(den, v.denominator)
        data, indices, indptr = [], [], [0]
        row_abs = []
        for row in self.rows:
            s = 0
            for j, v in row:
                iv = v.numerator * (den // v.denominator)
                data.append(iv)
                indices.append(j)
                s += abs(iv)
            indptr.append(len(data))
            row_abs.append(s)
        bias = [b.numerator * (den // b.denominator) for b in self.bias]
        fits = all(abs(v) < _INT64_SAFE for v in data) and all(abs(b) < _INT64_SAFE for b in bias)
        csr = None
        if fits:
            csr = sparse.csr_matrix(
                (np.array(data, dtype=np.int64), np.array(indices, dtype=np.int64),
                 np.array(indptr, dtype=np.int64)), shape=(self.n_rows, self.cols))
        return den, csr, data, indices, indptr, row_abs, bias


def block_diagonal(maps: Sequence[AffineMap]) -> AffineMap:
    rows, bias, off = [], [], 0
    for m in maps:
        rows.extend(tuple((j + off, v) for j, v in row) for row in m.rows)
        bias.extend(m.bias)
        off += m.cols
    return AffineMap(off, tuple(rows), tuple(bias))


def vstack(maps: Sequence[AffineMap]) -> AffineMap:
    """Maps sharing one input, outputs concatenated."""
    cols = maps[0].cols
    if any(m.cols != cols for m in maps):
        raise DimensionError("vstack needs a common input dimension")
    return AffineMap(cols, tuple(r for m in maps for r in m.rows),
                     tuple(b for m in maps for b in m.bias))


@dataclass(frozen=True)
class ReluNetwork:
    """Affine layers with ReLU between consecutive layers (not after the last)."""

    input_dim: int
    layers: tuple[AffineMap, ...]

    def __post_init__(self):
        if self.input_dim < 1:
            raise DimensionError("input_dim must be positive")
        if not self.layers:
            raise DimensionError("a network needs at least one layer")
        object.__setattr__(self, "layers", tuple(self.layers))
        width = self.input_dim
        for i, layer in enumerate(self.layers):
            if layer.cols != width:
                raise DimensionError(
                    f"layer {i} takes {layer.cols} inputs but receives {width}")
            width = layer.n_rows

    @property
    def output_dim(self) -> int:
        return self.layers[-1].n_rows

    @property
    def hidden_layers(self) -> int:
        return len(self.layers) - 1

    @property
    def hidden_widths(self) -> list[int]:
        return [layer.n_rows for layer in self.layers[:-1]]

    @property
    def neurons(self) -> int:
        return sum(self.hidden_widths)

    def __call__(self, x: Sequence) -> list[Fraction]:
        return evaluate(self, x)


@dataclass(frozen=True)
class NetworkStats:
    hidden_layers: int
    neurons: int
    max_width: int
    weight_denominators: Counter
    is_dyadic: bool


def affine_network(matrix: Sequence[Sequence], bias: Sequence | None = None) -> ReluNetwork:
    m = AffineMap.from_dense(matrix, bias)
    return ReluNetwork(m.cols, (m,))


def identity_network(n: int) -> ReluNetwork:
    return ReluNetwork(n, (AffineMap.identity(n),))


def evaluate(net: ReluNetwork, x: Sequence) -> list[Fraction]:
    if len(x) != net.input_dim:
        raise DimensionError(f"network expects {net.input_dim} inputs, got {len(x)}")
    h = [as_rational(v) for v in x]
    last = len(net.layers) - 1
    for i, layer in enumerate(net.layers):
        h = layer.apply(h)
        if i < last:
            h = [relu(t) for t in h]
    return h


def evaluate_batch(net: ReluNetwork, points: Sequence[Sequence]) -> list[list[Fraction]]:
    """Evaluate many points at once, exactly.

    Each layer is rescaled to integer weights over a common denominator; the
    batch then flows through as integer numerators with one shared
    denominator.  int64 sparse products are used whenever an a-priori bound
    on every intermediate value stays below 2**62, otherwise Python integers.
    """
    if not points:
        return []
    step = max(1, _BATCH_ENTRIES // max([net.input_dim] + [l.n_rows for l in net.layers]))
    if len(points) > step:
        out = []
        for start in range(0, len(points), step):
            out.extend(evaluate_batch(net, points[start:start + step]))
        return out
    pts = [[as_rational(v) for v in p] for p in points]
    for p in pts:
        if len(p) != net.input_dim:
            raise DimensionError(f"network expects {net.input_dim} inputs, got {len(p)}")
    den = 1
    for p in pts:
        for v in p:
            den = math.lcm(den, v.denominator)
    vals = [[v.numerator * (den // v.denominator) for v in p] for p in pts]
    bound = max((abs(v) for p in vals for v in p), default=0)
    V = np.array(vals, dtype=object).T  # (dim, batch)
    last = len(net.layers) - 1
    for i, layer in enumerate(net.layers):
        lden, csr, data, indices, indptr, row_abs, bias = layer._integer_form
        new_bound = max((ra * bound + abs(b) * den for ra, b in zip(row_abs, bias)), default=0)
        if csr is not None and new_bound < _INT64_SAFE and bound < _INT64_SAFE:
            V64 = V.astype(np.int64) if V.dtype != np.int64 else V
            out = csr @ V64 + (np.array(bias, dtype=np.int64) * den)[:, None]
        else:
            V = V.astype(object)
            out = np.empty((layer.n_rows, V.shape[1]), dtype=object)
            for r in range(layer.n_rows):
                acc = np.full(V.shape[1], bias[r] * den, dtype=object)
                for k in range(indptr[r], indptr[r + 1]):
                    acc = acc + data[k] * V[indices[k]]
                out[r] = acc
        den *= lden
        bound = new_bound
        if i < last:
            out = np.maximum(out, 0)
        V = out
    return [[Fraction(int(v), den) for v in col] for col in V.T]


def compose(outer: ReluNetwork, inner: ReluNetwork) -> ReluNetwork:
    """Serial composition ``outer ∘ inner``; the boundary affine maps are fused."""
    if outer.input_dim != inner.output_dim:
        raise DimensionError(
            f"outer takes {outer.input_dim} inputs, inner produces {inner.output_dim}")
    fused = outer.layers[0].after(inner.layers[-1])
    return ReluNetwork(inner.input_dim, inner.layers[:-1] + (fused,) + outer.layers[1:])


def _check_equal_depth(nets: Sequence[ReluNetwork]) -> int:
    if not nets:
        raise ValueError("need at least one network")
    depth = nets[0].hidden_layers
    if any(n.hidden_layers != depth for n in nets):
        raise DimensionError("networks have unequal hidden layer counts; pad_depth first")
    return depth


def concat(nets: Sequence[ReluNetwork]) -> ReluNetwork:
    """Parallel juxtaposition: inputs and outputs are both concatenated."""
    depth = _check_equal_depth(nets)
    layers = tuple(block_diagonal([n.layers[i] for n in nets]) for i in range(depth + 1))
    return ReluNetwork(sum(n.input_dim for n in nets), layers)


def stack(nets: Sequence[ReluNetwork]) -> ReluNetwork:
    """Like :func:`concat` but every network reads the same input vector."""
    nets = list(nets)
    if not nets:
        raise ValueError("need at least one network")
    dim = nets[0].input_dim
    if any(n.input_dim != dim for n in nets):
        raise DimensionError("stack needs a common input dimension")
    target = max(n.hidden_layers for n in nets)
    nets = [pad_depth(n, target) for n in nets]
    first = vstack([n.layers[0] for n in nets])
    rest = tuple(block_diagonal([n.layers[i] for n in nets]) for i in range(1, target + 1))
    return ReluNetwork(dim, (first,) + rest)


def then_affine(net: ReluNetwork, matrix: Sequence[Sequence] | AffineMap,
                bias: Sequence | None = None) -> ReluNetwork:
    """Post-compose an affine map onto the output layer (no extra depth)."""
    m = matrix if isinstance(matrix, AffineMap) else AffineMap.from_dense(matrix, bias, cols=net.output_dim)
    return ReluNetwork(net.input_dim, net.layers[:-1] + (m.after(net.layers[-1]),))


def after_affine(net: ReluNetwork, matrix: Sequence[Sequence] | AffineMap,
                 bias: Sequence | None = None) -> ReluNetwork:
    """Pre-compose an affine map onto the input layer (no extra depth)."""
    m = matrix if isinstance(matrix, AffineMap) else AffineMap.from_dense(matrix, bias)
    return ReluNetwork(m.cols, (net.layers[0].after(m),) + net.layers[1:])


def linear_combination(nets: Sequence[ReluNetwork], coefs: Sequence) -> ReluNetwork:
    """Network computing ``sum(c * n(x))`` over scalar-output networks."""
    nets = list(nets)
    if not nets:
        raise ValueError("linear_combination of an empty sequence")
    if len(coefs) != len(nets):
        raise ValueError("need one coefficient per network")
    if any(n.output_dim != 1 for n in nets):
        raise DimensionError("linear_combination needs scalar-output networks")
    if any(n.input_dim != nets[0].input_dim for n in nets):
        raise DimensionError("mismatched input_dim")
    coefs = [as_rational(c) for c in coefs]
    stacked = stack(nets)
    readout = AffineMap.from_rows(stacked.output_dim, [list(enumerate(coefs))])
    return then_affine(stacked, readout)


def pad_depth(net: ReluNetwork, target_hidden: int) -> ReluNetwork:
    """Deepen ``net`` to ``target_hidden`` hidden layers without changing it.

    Outputs are carried as ``relu(v) - relu(-v)``: the first added layer
    doubles the output width, later ones are identities on the pair.
    """
    k = net.hidden_layers
    if target_hidden < k:
        raise ValueError(f"cannot pad a {k}-hidden-layer network down to {target_hidden}")
    if target_hidden == k:
        return net
    last = net.layers[-1]
    r = last.n_rows
    split = vstack([last, last.scaled(-1)])
    layers = list(net.layers[:-1]) + [split]
    layers += [AffineMap.identity(2 * r)] * (target_hidden - k - 1)
    readout = AffineMap.from_rows(
        2 * r, [[(i, Fraction(1)), (r + i, Fraction(-1))] for i in range(r)])
    layers.append(readout)
    return ReluNetwork(net.input_dim, tuple(layers))


def is_power_of_two(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def stats(net: ReluNetwork) -> NetworkStats:
    dens = Counter(v.denominator for layer in net.layers for v in layer.coefficients())
    widths = net.hidden_widths
    return NetworkStats(
        hidden_layers=net.hidden_layers,
        neurons=sum(widths),
        max_width=max(widths, default=0),
        weight_denominators=dens,
        is_dyadic=all(is_power_of_two(d) for d in dens),
    )
