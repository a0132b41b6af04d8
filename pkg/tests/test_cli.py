import csv
import io
import json
from fractions import Fraction as F

import pytest

from relu_forge.cli import main
from relu_forge.formats import dump_complex, dump_decomp, load_network
from relu_forge.geometry import Piece, Polytope, SubdivisionComplex
from relu_forge.ir import AffineMap, evaluate
from relu_forge.synth import CpwlDecomposition


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def seg(a, b):
    return Polytope([(a,), (b,)])


def test_synth_stats_line(capsys, tmp_path):
    out = tmp_path / "m5.json"
    code, text, _ = run(capsys, "synth", "--target", "max", "--n", 5, "--method", "ternary",
                        "--out", out)
    assert code == 0 and text.startswith("hidden_layers=2 ")
    assert "dyadic=true" in text
    assert load_network(out.read_text()).hidden_layers == 2
    code, text, _ = run(capsys, "synth", "--target", "max", "--n", 8, "--method", "tree")
    assert code == 0 and text.startswith("hidden_layers=3 ")


def test_synth_max11_opt(capsys):
    code, text, _ = run(capsys, "synth", "--target", "max", "--n", 11, "--method", "ternary", "--opt")
    assert code == 0 and text.startswith("hidden_layers=3 ")


def test_synth_is_deterministic(capsys, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for p in (a, b):
        run(capsys, "synth", "--target", "max", "--n", 6, "--method", "five", "--opt", "--out", p)
    assert a.read_bytes() == b.read_bytes()


def test_synth_guard(capsys, monkeypatch):
    code, _, err = run(capsys, "synth", "--target", "max", "--n", 14, "--method", "ternary")
    assert code == 3 and "guard" in err and "--fallback-five" in err
    code, text, _ = run(capsys, "synth", "--target", "max", "--n", 14, "--method", "ternary",
                        "--fallback-five")
    assert code == 0 and text.startswith("hidden_layers=4 ")
    monkeypatch.setenv("RELU_FORGE_TERM_LIMIT", "10")
    code, _, _ = run(capsys, "synth", "--target", "max", "--n", 8, "--method", "ternary")
    assert code == 3


def test_synth_cpwl(capsys, tmp_path):
    d = CpwlDecomposition(2, (
        (1, AffineMap.from_dense([[1, 0], [0, 1], [1, 0]])),
        (-1, AffineMap.from_dense([[1, 0], [0, 0], [1, 0]])),
    ))
    src, out = tmp_path / "d.json", tmp_path / "n.json"
    src.write_text(dump_decomp(d))
    code, text, _ = run(capsys, "synth", "--target", "cpwl", "--decomp", src, "--method", "ternary",
                        "--out", out)
    assert code == 0 and text.startswith("hidden_layers=2 ")
    assert evaluate(load_network(out.read_text()), [-1, 5]) == [5]


def test_synth_input_errors(capsys, tmp_path):
    assert run(capsys, "synth", "--target", "max")[0] == 2
    assert run(capsys, "synth", "--target", "cpwl", "--decomp", tmp_path / "nope.json")[0] == 2
    with pytest.raises(SystemExit) as err:
        main(["synth", "--target", "max", "--n", "5", "--method", "seven"])
    assert err.value.code == 2


@pytest.fixture
def max5_file(capsys, tmp_path):
    p = tmp_path / "m5.json"
    run(capsys, "synth", "--target", "max", "--n", 5, "--method", "ternary", "--opt", "--out", p)
    return p


def test_verify_exact(capsys, max5_file):
    code, text, _ = run(capsys, "verify", "--net", max5_file, "--against", "max", "--mode", "exact")
    report = json.loads(text)
    assert code == 0 and report["verdict"] == "equivalent" and report["regions_enumerated"] > 0


def test_verify_random(capsys, max5_file):
    code, text, _ = run(capsys, "verify", "--net", max5_file, "--mode", "random",
                        "--samples", 2000, "--seed", 42)
    assert code == 0 and json.loads(text)["samples_tested"] == 2000


def test_verify_against_net(capsys, tmp_path, max5_file):
    tree = tmp_path / "t5.json"
    run(capsys, "synth", "--target", "max", "--n", 5, "--method", "tree", "--out", tree)
    code, _, _ = run(capsys, "verify", "--net", max5_file, "--against", f"net:{tree}",
                     "--mode", "exact")
    assert code == 0
    code, text, _ = run(capsys, "verify", "--net", max5_file, "--against", f"net:{tree}",
                        "--mode", "exact", "--cap", 10)
    assert code == 4 and json.loads(text)["verdict"] == "inconclusive"


def test_verify_counterexample(capsys, tmp_path, max5_file):
    obj = json.loads(max5_file.read_text())
    obj["layers"][0]["bias"][0] = "5"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(obj))
    for mode in ("random", "exact"):
        code, text, _ = run(capsys, "verify", "--net", bad, "--mode", mode, "--samples", 500)
        report = json.loads(text)
        assert code == 1 and report["verdict"] == "counterexample"
        w = [F(v) for v in report["witness"]]
        assert evaluate(load_network(bad.read_text()), w) != [max(w)]


def test_verify_input_errors(capsys, tmp_path, max5_file):
    assert run(capsys, "verify", "--net", tmp_path / "missing.json")[0] == 2
    assert run(capsys, "verify", "--net", max5_file, "--against", "min")[0] == 2
    garbage = tmp_path / "g.json"
    garbage.write_text("not json")
    assert run(capsys, "verify", "--net", garbage)[0] == 2


def test_geom_simplex3(capsys):
    code, text, _ = run(capsys, "geom", "simplex3", "--directions", 50)
    assert code == 0 and "FAIL" not in text and "full additivity" in text


def test_geom_lift4(capsys):
    code, text, _ = run(capsys, "geom", "lift4", "--directions", 50)
    assert code == 0 and "FAIL" not in text


def write_complex(tmp_path, ambient, pieces):
    p = tmp_path / "c.json"
    p.write_text(dump_complex(SubdivisionComplex(ambient, tuple(
        Piece(name, poly) for name, poly in pieces))))
    return p


def test_geom_check_subdivision(capsys, tmp_path):
    good = write_complex(tmp_path, seg(0, 2), [("A", seg(0, 1)), ("B", seg(1, 2))])
    code, text, _ = run(capsys, "geom", "check-subdivision", "--complex", good)
    assert code == 0 and "FAIL" not in text


def test_geom_check_subdivision_empty_intersection(capsys, tmp_path):
    bad = write_complex(tmp_path, seg(0, 3), [("A", seg(0, 2)), ("B", seg(1, 3)),
                                              ("C", seg(0, F(1, 2)))])
    code, _, err = run(capsys, "geom", "check-subdivision", "--complex", bad)
    assert code == 2 and "{B, C}" in err


def test_geom_check_subdivision_failure(capsys, tmp_path):
    gap = write_complex(tmp_path, seg(0, 3), [("A", seg(0, 2)), ("B", seg(1, 2))])
    code, text, _ = run(capsys, "geom", "check-subdivision", "--complex", gap)
    assert code == 1 and "fails at direction" in text


def test_geom_malformed(capsys, tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{"dim": 1}')
    assert run(capsys, "geom", "check-subdivision", "--complex", p)[0] == 2


def test_bench(capsys, monkeypatch):
    # a tiny guard makes n=6 trip it, which keeps the run short
    monkeypatch.setenv("RELU_FORGE_TERM_LIMIT", "10")
    code, text, _ = run(capsys, "bench", "--n-max", 6, "--methods", "tree,five,ternary")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(text)))
    assert list(rows[0]) == ["n", "method", "hidden_layers", "neurons_raw", "neurons_after_cse",
                             "dyadic"]
    by = {(int(r["n"]), r["method"]): r for r in rows}
    assert len(by) == 15
    assert by[5, "ternary"]["hidden_layers"] == "2" and by[5, "tree"]["hidden_layers"] == "3"
    assert by[4, "ternary"]["hidden_layers"] == by[4, "tree"]["hidden_layers"] == "2"
    assert by[6, "ternary"]["hidden_layers"] == "skipped"
    assert by[6, "five"]["hidden_layers"] == "4"
    assert all(int(r["neurons_after_cse"]) <= int(r["neurons_raw"]) for r in rows
               if r["hidden_layers"] != "skipped")
    assert all(r["dyadic"] in ("true", "skipped") for r in rows)
    assert run(capsys, "bench", "--methods", "quad")[0] == 2
    assert run(capsys, "bench", "--n-max", 1)[0] == 2
