from fractions import Fraction as F

import pytest

from relu_forge.ir import AffineMap, ReluNetwork, evaluate, evaluate_batch
from relu_forge.passes import cse, neuron_key, optimize, prune
from relu_forge.synth import build_max2, build_max5, build_ternary_max, build_tree_max
from relu_forge.verify import EQUIVALENT, check_exact_equiv

from oracles import rand_vectors


def duplicated():
    # hidden units 0 and 1 are identical, unit 2 is twice unit 0
    first = AffineMap.from_dense([[1, -1], [1, -1], [2, -2], [0, 1]], [1, 1, 2, 0])
    out = AffineMap.from_dense([[1, 3, -1, 2]])
    return ReluNetwork(2, (first, out))


def widths_never_grow(before, after):
    return all(b <= a for a, b in zip(before.hidden_widths, after.hidden_widths))


def test_scaled_keys_match():
    k1, s1 = neuron_key(0, ((0, F(2)), (1, F(-2))), F(4))
    k2, s2 = neuron_key(0, ((0, F(1, 2)), (1, F(-1, 2))), F(1))
    assert k1 == k2 and s1 / s2 == 4
    k3, _ = neuron_key(0, ((0, F(-1)), (1, F(1))), F(-2))
    assert k3 != k1  # negative multiples are different functions after relu


def test_cse_merges_duplicates():
    net = duplicated()
    out = cse(net)
    assert out.neurons == 2
    for x in rand_vectors(2, 100, 0):
        assert evaluate(out, x) == evaluate(net, x)


def test_cse_on_max5(max5):
    out = cse(max5)
    assert out.neurons <= max5.neurons
    pts = rand_vectors(5, 10_000, 1)
    assert evaluate_batch(out, pts) == [[max(p)] for p in pts]


def test_cse_is_idempotent(max5):
    once = cse(max5)
    assert cse(once).neurons == once.neurons


def test_prune_removes_dead_outgoing():
    first = AffineMap.from_dense([[1, 0], [0, 1], [1, 1]])
    out = AffineMap.from_dense([[1, 0, 2]])
    net = ReluNetwork(2, (first, out))
    pruned = prune(net)
    assert pruned.neurons == 2
    for x in rand_vectors(2, 100, 2):
        assert evaluate(pruned, x) == evaluate(net, x)


def test_prune_reaches_fixpoint():
    # unit 0 of layer 2 reads only a constant-zero unit, so it dies on the second sweep
    l1 = AffineMap.from_dense([[0, 0], [1, -1]], [-1, 0])
    l2 = AffineMap.from_dense([[1, 0], [0, 1]], [0, 0])
    l3 = AffineMap.from_dense([[5, 1]])
    net = ReluNetwork(2, (l1, l2, l3))
    pruned = prune(net)
    assert pruned.hidden_widths == [1, 1]
    assert prune(pruned).neurons == pruned.neurons
    for x in rand_vectors(2, 100, 3):
        assert evaluate(pruned, x) == evaluate(net, x)


def test_prune_keeps_max2():
    net = build_max2()
    assert prune(net) == net


def test_prune_on_ternary5():
    net = build_ternary_max(5)
    pts = rand_vectors(5, 10_000, 4)
    assert evaluate_batch(prune(net), pts) == [[max(p)] for p in pts]


@pytest.mark.parametrize("net", [duplicated(), build_max2(), build_tree_max(3), build_tree_max(4)])
def test_passes_certified_on_small_networks(net):
    for p in (cse, prune, optimize):
        out = p(net)
        assert out.neurons <= net.neurons
        assert widths_never_grow(net, out)
        assert check_exact_equiv(out, net).verdict == EQUIVALENT


def test_optimize_shrinks_max11(max11, max11_opt):
    assert max11_opt.neurons < max11.neurons
    assert widths_never_grow(max11, max11_opt)
    assert max11_opt.hidden_layers == max11.hidden_layers


def test_passes_are_deterministic():
    a, b = optimize(build_max5()), optimize(build_max5())
    assert a == b
