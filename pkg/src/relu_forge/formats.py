"""JSON file formats: networks, CPWL decompositions and subdivision complexes.

Rationals are written as canonical lowest-terms strings (``"3"``, ``"-7/2"``)
and never as floats.  Output is compact JSON with a fixed key order, so a
canonical file survives a load/save round trip byte for byte.
"""

from __future__ import annotations

import json
import re
from fractions import Fraction
from typing import Any

from .geometry import Piece, Polytope, SubdivisionComplex
from .ir import AffineMap, ReluNetwork
from .synth import CpwlDecomposition

NETWORK_FORMAT = "relu-net/1"
DECOMP_FORMAT = "cpwl-decomp/1"

_RATIONAL = re.compile(r"-?(0|[1-9][0-9]*)(/[1-9][0-9]*)?")


class FormatError(ValueError):
    pass


def rational_to_str(v: Fraction) -> str:
    return str(v)


def parse_rational(s: Any) -> Fraction:
    if not isinstance(s, str) or not _RATIONAL.fullmatch(s):
        raise FormatError(f"expected a rational string like '-7/2', got {s!r}")
    v = Fraction(s)
    if s != str(v):
        raise FormatError(f"rational {s!r} is not in lowest terms (expected {str(v)!r})")
    return v


def _matrix(rows: Any, what: str) -> list[list[Fraction]]:
    if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
        raise FormatError(f"{what} must be a list of lists")
    return [[parse_rational(v) for v in r] for r in rows]


def _vector(vals: Any, what: str) -> list[Fraction]:
    if not isinstance(vals, list):
        raise FormatError(f"{what} must be a list")
    return [parse_rational(v) for v in vals]


def _require(obj: Any, keys: tuple[str, ...], what: str) -> None:
    if not isinstance(obj, dict):
        raise FormatError(f"{what} must be a JSON object")
    missing = [k for k in keys if k not in obj]
    if missing:
        raise FormatError(f"{what} is missing {', '.join(missing)}")


def dumps(obj: Any) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=True) + "\n"


def _load_json(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc}") from None


# ---------------------------------------------------------------------------
# networks

def network_to_obj(net: ReluNetwork) -> dict:
    layers = []
    last = len(net.layers) - 1
    for i, layer in enumerate(net.layers):
        layers.append({
            "weights": [[rational_to_str(v) for v in row] for row in layer.dense()],
            "bias": [rational_to_str(v) for v in layer.bias],
            "activation": "none" if i == last else "relu",
        })
    return {"format": NETWORK_FORMAT, "input_dim": net.input_dim, "layers": layers}


def network_from_obj(obj: Any) -> ReluNetwork:
    _require(obj, ("format", "input_dim", "layers"), "network file")
    if obj["format"] != NETWORK_FORMAT:
        raise FormatError(f"unsupported network format {obj['format']!r}")
    d = obj["input_dim"]
    if not isinstance(d, int) or isinstance(d, bool) or d < 1:
        raise FormatError(f"input_dim must be a positive integer, got {d!r}")
    raw = obj["layers"]
    if not isinstance(raw, list) or not raw:
        raise FormatError("layers must be a non-empty list")
    layers = []
    cols = d
    for i, layer in enumerate(raw):
        _require(layer, ("weights", "bias", "activation"), f"layer {i}")
        want = "none" if i == len(raw) - 1 else "relu"
        if layer["activation"] != want:
            raise FormatError(f"layer {i} activation must be {want!r}, got {layer['activation']!r}")
        w = _matrix(layer["weights"], f"layer {i} weights")
        b = _vector(layer["bias"], f"layer {i} bias")
        if len(w) != len(b):
            raise FormatError(f"layer {i} has {len(w)} weight rows but {len(b)} biases")
        if any(len(r) != cols for r in w):
            raise FormatError(f"layer {i} weight rows must have length {cols}")
        layers.append(AffineMap.from_dense(w, b, cols=cols))
        cols = len(b)
    return ReluNetwork(d, tuple(layers))


def dump_network(net: ReluNetwork) -> str:
    return dumps(network_to_obj(net))


def load_network(text: str) -> ReluNetwork:
    return network_from_obj(_load_json(text))


# ---------------------------------------------------------------------------
# CPWL decompositions

def decomp_to_obj(decomp: CpwlDecomposition) -> dict:
    terms = [{"sign": s,
              "matrix": [[rational_to_str(v) for v in row] for row in amap.dense()],
              "bias": [rational_to_str(v) for v in amap.bias]}
             for s, amap in decomp.terms]
    return {"format": DECOMP_FORMAT, "n": decomp.n, "terms": terms}


def decomp_from_obj(obj: Any) -> CpwlDecomposition:
    _require(obj, ("format", "n", "terms"), "decomposition file")
    if obj["format"] != DECOMP_FORMAT:
        raise FormatError(f"unsupported decomposition format {obj['format']!r}")
    n = obj["n"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise FormatError(f"n must be a positive integer, got {n!r}")
    terms = []
    for i, t in enumerate(obj["terms"] if isinstance(obj["terms"], list) else []):
        _require(t, ("sign", "matrix", "bias"), f"term {i}")
        if t["sign"] not in (1, -1) or isinstance(t["sign"], bool):
            raise FormatError(f"term {i} sign must be 1 or -1")
        m = _matrix(t["matrix"], f"term {i} matrix")
        b = _vector(t["bias"], f"term {i} bias")
        if len(m) != n + 1 or len(b) != n + 1 or any(len(r) != n for r in m):
            raise FormatError(f"term {i} must have an {n + 1}x{n} matrix and {n + 1} biases")
        terms.append((t["sign"], AffineMap.from_dense(m, b, cols=n)))
    if not terms:
        raise FormatError("decomposition needs at least one term")
    return CpwlDecomposition(n, tuple(terms))


def dump_decomp(decomp: CpwlDecomposition) -> str:
    return dumps(decomp_to_obj(decomp))


def load_decomp(text: str) -> CpwlDecomposition:
    return decomp_from_obj(_load_json(text))


# ---------------------------------------------------------------------------
# subdivision complexes

def _points_to_obj(pts) -> list:
    return [[rational_to_str(v) for v in p] for p in pts]


def complex_to_obj(c: SubdivisionComplex) -> dict:
    return {"dim": c.dim,
            "ambient": _points_to_obj(c.ambient.vertices),
            "pieces": [{"name": p.name, "vertices": _points_to_obj(p.polytope.vertices)}
                       for p in c.pieces]}


def complex_from_obj(obj: Any) -> SubdivisionComplex:
    _require(obj, ("dim", "ambient", "pieces"), "complex file")
    d = obj["dim"]
    if not isinstance(d, int) or isinstance(d, bool) or d < 1:
        raise FormatError(f"dim must be a positive integer, got {d!r}")

    def polytope(rows, what):
        pts = _matrix(rows, what)
        if not pts:
            raise FormatError(f"{what} has no points")
        if any(len(p) != d for p in pts):
            raise FormatError(f"{what} points must have dimension {d}")
        return Polytope(pts)

    if not isinstance(obj["pieces"], list) or not obj["pieces"]:
        raise FormatError("pieces must be a non-empty list")
    pieces = []
    for i, p in enumerate(obj["pieces"]):
        _require(p, ("name", "vertices"), f"piece {i}")
        if not isinstance(p["name"], str):
            raise FormatError(f"piece {i} name must be a string")
        pieces.append(Piece(p["name"], polytope(p["vertices"], f"piece {p['name']}")))
    return SubdivisionComplex(polytope(obj["ambient"], "ambient"), tuple(pieces))


def dump_complex(c: SubdivisionComplex) -> str:
    return dumps(complex_to_obj(c))


def load_complex(text: str) -> SubdivisionComplex:
    return complex_from_obj(_load_json(text))
