import json
from fractions import Fraction as F

import pytest

from relu_forge.formats import (
    FormatError,
    dump_complex,
    dump_decomp,
    dump_network,
    load_complex,
    load_decomp,
    load_network,
    parse_rational,
)
from relu_forge.geometry import build_simplex3_subdivision
from relu_forge.ir import AffineMap, evaluate_batch
from relu_forge.synth import CpwlDecomposition, build_max5, build_tree_max

from oracles import rand_vectors


def test_rational_strings():
    assert parse_rational("-7/2") == F(-7, 2)
    assert parse_rational("0") == 0
    for bad in ("1.5", "2/4", "+1", "1/0", "-0", "01", 3):
        with pytest.raises(FormatError):
            parse_rational(bad)


def test_network_round_trip(max5):
    text = dump_network(max5)
    back = load_network(text)
    assert back == max5
    assert dump_network(back) == text
    pts = rand_vectors(5, 1000, 0)
    assert evaluate_batch(back, pts) == evaluate_batch(max5, pts)


def test_network_file_shape():
    obj = json.loads(dump_network(build_tree_max(2)))
    assert obj["format"] == "relu-net/1" and obj["input_dim"] == 2
    assert [l["activation"] for l in obj["layers"]] == ["relu", "none"]
    assert all(isinstance(v, str) for l in obj["layers"] for row in l["weights"] for v in row)


@pytest.mark.parametrize("mutate", [
    lambda o: o.update(format="relu-net/2"),
    lambda o: o.update(input_dim=0),
    lambda o: o["layers"][0].update(activation="none"),
    lambda o: o["layers"][-1].update(activation="relu"),
    lambda o: o["layers"][0]["bias"].append("0"),
    lambda o: o["layers"][0]["weights"][0].append("1"),
    lambda o: o["layers"][0]["weights"][0].__setitem__(0, 0.5),
    lambda o: o.pop("layers"),
])
def test_network_rejects_malformed(mutate):
    obj = json.loads(dump_network(build_tree_max(3)))
    mutate(obj)
    with pytest.raises(FormatError):
        load_network(json.dumps(obj))


def test_not_json():
    with pytest.raises(FormatError):
        load_network("{")


def test_decomp_round_trip():
    d = CpwlDecomposition(2, (
        (1, AffineMap.from_dense([[1, 0], [0, 1], [1, 0]])),
        (-1, AffineMap.from_dense([[1, 0], [0, 0], [F(1, 2), 0]], [0, 0, F(-3, 4)])),
    ))
    text = dump_decomp(d)
    back = load_decomp(text)
    assert dump_decomp(back) == text
    for x in rand_vectors(2, 50, 1):
        assert back.evaluate(x) == d.evaluate(x)
    obj = json.loads(text)
    obj["terms"][0]["sign"] = 2
    with pytest.raises(FormatError):
        load_decomp(json.dumps(obj))


def test_complex_round_trip():
    c = build_simplex3_subdivision()
    text = dump_complex(c)
    back = load_complex(text)
    assert dump_complex(back) == text
    assert [p.polytope for p in back.pieces] == [p.polytope for p in c.pieces]
    obj = json.loads(text)
    obj["pieces"][0]["vertices"][0] = ["1", "2"]
    with pytest.raises(FormatError):
        load_complex(json.dumps(obj))
