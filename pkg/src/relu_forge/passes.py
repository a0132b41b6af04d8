"""Semantics-preserving network passes: neuron CSE and dead-neuron pruning."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .ir import AffineMap, ReluNetwork, Row


@dataclass(frozen=True)
class NeuronKey:
    """Incoming row and bias of a hidden neuron, scaled so the first nonzero has magnitude 1.

    Since ``relu(s t) = s relu(t)`` for ``s > 0``, equal keys in one layer
    mean the neurons are positive multiples of each other.
    """

    layer_index: int
    row: Row
    bias: Fraction


def neuron_key(layer_index: int, row: Row, bias: Fraction) -> tuple[NeuronKey, Fraction]:
    """Return the key and the scale ``s`` with ``neuron = s * canonical neuron``."""
    if row:
        s = abs(row[0][1])
    elif bias:
        s = abs(bias)
    else:
        s = Fraction(1)
    inv = 1 / s
    return NeuronKey(layer_index, tuple((j, v * inv) for j, v in row), bias * inv), s


def _remap_columns(layer: AffineMap, mapping: list[tuple[int, Fraction] | None],
                   new_cols: int) -> AffineMap:
    rows = []
    for row in layer.rows:
        acc: dict[int, Fraction] = {}
        for j, v in row:
            target = mapping[j]
            if target is None:
                continue
            k, s = target
            acc[k] = acc.get(k, 0) + v * s
        rows.append(tuple((k, acc[k]) for k in sorted(acc) if acc[k]))
    return AffineMap(new_cols, tuple(rows), layer.bias)


def cse(net: ReluNetwork) -> ReluNetwork:
    """Merge hidden neurons that compute positive multiples of one another.

    Layers are processed front to back, so merges upstream expose duplicates
    downstream.  Neurons with an all-zero row and bias are constant zero and
    are dropped.  The first occurrence of each key is kept, which makes the
    output deterministic.
    """
    layers = list(net.layers)
    for li in range(len(layers) - 1):
        layer = layers[li]
        reps: dict[NeuronKey, tuple[int, Fraction]] = {}
        keep_rows, keep_bias = [], []
        mapping: list[tuple[int, Fraction] | None] = []
        for row, b in zip(layer.rows, layer.bias):
            if not row and not b:
                mapping.append(None)
                continue
            key, s = neuron_key(li, row, b)
            hit = reps.get(key)
            if hit is None:
                idx = len(keep_rows)
                reps[key] = (idx, s)
                keep_rows.append(row)
                keep_bias.append(b)
                mapping.append((idx, Fraction(1)))
            else:
                idx, s_rep = hit
                mapping.append((idx, s / s_rep))
        layers[li] = AffineMap(layer.cols, tuple(keep_rows), tuple(keep_bias))
        layers[li + 1] = _remap_columns(layers[li + 1], mapping, len(keep_rows))
    return ReluNetwork(net.input_dim, tuple(layers))


def prune(net: ReluNetwork) -> ReluNetwork:
    """Drop hidden neurons that cannot influence the output.

    A neuron goes if its outgoing weights are all zero, or if it is constant
    zero (no incoming weights, bias <= 0).  Backward sweeps repeat until
    nothing changes, since dropping a constant-zero neuron can leave a
    downstream neuron constant zero too.
    """
    while True:
        out = _prune_sweep(net)
        if out.neurons == net.neurons:
            return out
        net = out


def _prune_sweep(net: ReluNetwork) -> ReluNetwork:
    layers = list(net.layers)
    for li in range(len(layers) - 2, -1, -1):
        layer, nxt = layers[li], layers[li + 1]
        used = set()
        for row in nxt.rows:
            used.update(j for j, _ in row)
        keep = [i for i, (row, b) in enumerate(zip(layer.rows, layer.bias))
                if i in used and (row or b > 0)]
        if len(keep) == layer.n_rows:
            continue
        mapping: list[tuple[int, Fraction] | None] = [None] * layer.n_rows
        for new, old in enumerate(keep):
            mapping[old] = (new, Fraction(1))
        layers[li] = AffineMap(layer.cols, tuple(layer.rows[i] for i in keep),
                               tuple(layer.bias[i] for i in keep))
        layers[li + 1] = _remap_columns(nxt, mapping, len(keep))
    return ReluNetwork(net.input_dim, tuple(layers))


def optimize(net: ReluNetwork) -> ReluNetwork:
    """``prune(cse(net))``, repeated until the neuron count stops falling."""
    while True:
        out = prune(cse(net))
        if out.neurons == net.neurons:
            return out
        net = out
