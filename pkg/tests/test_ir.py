from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from relu_forge.ir import (
    AffineMap,
    DimensionError,
    ReluNetwork,
    affine_network,
    as_rational,
    compose,
    concat,
    evaluate,
    evaluate_batch,
    identity_network,
    linear_combination,
    pad_depth,
    stack,
    stats,
)
from relu_forge.synth import TERM_FORMS, TERM_SIGNS, build_max2, build_tree_max, term_network

from oracles import m_oracle, rand_vectors

rationals = st.fractions(min_value=-1000, max_value=1000, max_denominator=64)


def vec(n):
    return st.lists(rationals, min_size=n, max_size=n)


def random_net(seed, dims=(3, 4, 2, 1)):
    import random
    rng = random.Random(seed)
    layers = []
    for a, b in zip(dims, dims[1:]):
        m = [[F(rng.randint(-5, 5), rng.choice((1, 2, 3))) for _ in range(a)] for _ in range(b)]
        layers.append(AffineMap.from_dense(m, [F(rng.randint(-3, 3)) for _ in range(b)]))
    return ReluNetwork(dims[0], tuple(layers))


def test_rational_is_canonical():
    assert F(6, -4) == F(-3, 2)
    assert str(F(6, -4)) == "-3/2"
    assert F(1, 3) + F(1, 6) == F(1, 2)


def test_floats_are_rejected():
    with pytest.raises(TypeError):
        as_rational(0.5)
    assert as_rational("-7/2") == F(-7, 2)


def test_eval_examples():
    assert evaluate(affine_network([[1]], [0]), [F(7, 3)]) == [F(7, 3)]
    assert evaluate(build_max2(), [3, 5]) == [5]
    assert evaluate(build_max2(), [-2, -9]) == [-2]


def test_eval_dimension_error():
    with pytest.raises(DimensionError):
        evaluate(build_max2(), [1, 2, 3])


def test_network_rejects_broken_chain():
    with pytest.raises(DimensionError):
        ReluNetwork(2, (AffineMap.from_dense([[1, 1]]), AffineMap.from_dense([[1, 1]])))


@given(vec(2), vec(2), st.fractions(min_value=0, max_value=1, max_denominator=16))
def test_affine_map_is_affine(x, y, lam):
    m = AffineMap.from_dense([[1, F(-1, 2)], [3, 0], [0, 7]], [1, 2, F(-5, 3)])
    mix = [lam * a + (1 - lam) * b for a, b in zip(x, y)]
    lhs = m.apply(mix)
    rhs = [lam * a + (1 - lam) * b for a, b in zip(m.apply(x), m.apply(y))]
    assert lhs == rhs


def test_compose_examples():
    n = random_net(1)
    idn = identity_network(1)
    for x in rand_vectors(3, 100, 0):
        assert evaluate(compose(idn, n), x) == evaluate(n, x)
    embed = affine_network([[1], [0]])
    assert evaluate(compose(build_max2(), embed), [-4]) == [0]
    pair = concat([build_max2(), build_max2()])
    assert evaluate(compose(build_max2(), pair), [1, 7, 5, 2]) == [7]


@given(vec(3))
def test_compose_matches_functional_composition(x):
    inner = random_net(2, (3, 3, 2))
    outer = random_net(3, (2, 4, 1))
    net = compose(outer, inner)
    assert net.hidden_layers == inner.hidden_layers + outer.hidden_layers
    assert evaluate(net, x) == evaluate(outer, evaluate(inner, x))


def test_concat_examples():
    assert evaluate(concat([identity_network(1), identity_network(1)]), [1, 2]) == [1, 2]
    assert evaluate(concat([build_max2(), build_max2()]), [1, 7, 5, 2]) == [7, 5]
    terms = [pad_depth(term_network(t), 2) for t in TERM_FORMS]
    assert concat(terms).output_dim == 9
    with pytest.raises(DimensionError):
        concat([build_max2(), build_tree_max(4)])


def test_linear_combination_examples():
    n = random_net(4)
    same = linear_combination([n], [1])
    zero = linear_combination([n, n], [1, -1])
    for x in rand_vectors(3, 100, 1):
        assert evaluate(same, x) == evaluate(n, x)
        assert evaluate(zero, x) == [0]
    ids = list(TERM_FORMS)
    m = linear_combination([term_network(t) for t in ids], [F(TERM_SIGNS[t], 2) for t in ids])
    assert evaluate(m, [2, -1, 0, 1, 1]) == [2]
    assert m.hidden_layers == max(term_network(t).hidden_layers for t in ids)
    with pytest.raises(ValueError):
        linear_combination([], [])
    with pytest.raises(DimensionError):
        linear_combination([build_max2(), build_tree_max(3)], [1, 1])


def test_mixed_depth_combination_reproduces_m():
    # deepen every other term so the combination has to pad the rest
    ids = list(TERM_FORMS)
    nets = [pad_depth(term_network(t), 3) if i % 2 else term_network(t) for i, t in enumerate(ids)]
    assert len({n.hidden_layers for n in nets}) > 1
    m = linear_combination(nets, [F(TERM_SIGNS[t], 2) for t in ids])
    for x in rand_vectors(5, 100, 2):
        assert evaluate(m, x) == [m_oracle(x)]


def test_pad_depth_examples():
    padded = pad_depth(identity_network(1), 1)
    assert padded.hidden_layers == 1
    assert evaluate(padded, [-3]) == [-3]
    m2 = pad_depth(build_max2(), 3)
    assert m2.hidden_layers == 3
    assert evaluate(m2, [4, -1]) == [4]
    with pytest.raises(ValueError):
        pad_depth(build_tree_max(4), 1)


def test_pad_depth_width_at_most_doubles():
    n = random_net(5, (3, 4, 2))
    p = pad_depth(n, 4)
    widths = p.hidden_widths
    for a, b in zip(widths, widths[1:]):
        assert b <= 2 * max(a, n.output_dim)


def test_stack_pads_to_common_depth():
    s = stack([build_max2(), pad_depth(build_max2(), 2), affine_network([[1, -1]])])
    assert s.hidden_layers == 2
    assert evaluate(s, [3, 8]) == [8, 8, -5]


def test_stats_examples(max5, max11):
    st2 = stats(build_max2())
    assert st2.hidden_layers == 1 and st2.is_dyadic
    # a layered network needs relu(x2 - x1), relu(x1), relu(-x1): three units
    assert st2.neurons == 3
    assert stats(max5).hidden_layers == 2
    assert stats(max11).hidden_layers == 3
    third = affine_network([[F(1, 3)]])
    assert not stats(third).is_dyadic
    assert stats(third).weight_denominators[3] == 1


@given(vec(3), st.fractions(min_value=0, max_value=50, max_denominator=8))
def test_homogeneity_without_bias(x, lam):
    n = random_net(6)
    layers = tuple(AffineMap(l.cols, l.rows, tuple(F(0) for _ in l.bias)) for l in n.layers)
    h = ReluNetwork(n.input_dim, layers)
    assert evaluate(h, [lam * v for v in x]) == [lam * v for v in evaluate(h, x)]


def test_eval_is_deterministic():
    n = random_net(7)
    x = [F(1, 3), F(-2), F(5, 7)]
    a, b = evaluate(n, x), evaluate(n, x)
    assert a == b and [str(v) for v in a] == [str(v) for v in b]


@settings(max_examples=30)
@given(st.integers(0, 10_000))
def test_batch_matches_scalar(seed):
    n = random_net(seed % 50, (3, 5, 4, 2))
    pts = rand_vectors(3, 20, seed)
    assert evaluate_batch(n, pts) == [evaluate(n, p) for p in pts]


def test_batch_falls_back_to_big_integers():
    # weights large enough that int64 would overflow
    big = F(2**40)
    n = ReluNetwork(1, (AffineMap.from_dense([[big]]), AffineMap.from_dense([[big]]),
                        AffineMap.from_dense([[big]])))
    x = [F(2**20, 3)]
    assert evaluate_batch(n, [x]) == [evaluate(n, x)] == [[big ** 3 * x[0]]]
