import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

import carnotlift
from carnotlift import algebra, curves, extension, group, hoelder, lifting, symplectic
from carnotlift.cli import COMMANDS, EXIT_DATA, EXIT_NOT_LIFTABLE, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, fmt, parse_eps_grid, parse_field, run

DATA = Path(__file__).resolve().parent.parent / "data"

SUBCOMMANDS = {
    "validate-algebra", "mul", "quotient", "dilate", "frame", "coframe", "build-extension", "potential",
    "obstruction", "endpoint", "lift-curve", "check-lift", "lift-map", "fiber-hom", "pansu", "moser-correct",
    "area-check", "quaternionic-check", "decay-experiment", "seminorm", "young", "weierstrass", "filiform-generator",
}

# operation name -> module that implements it
LIBRARY_OPS = {
    "validate": algebra,
    "multiply": group, "inverse": group, "left_quotient": group, "dilate": group, "quasi_metric": group,
    "left_invariant_frame": group, "contact_coframe": group,
    "lie_differential_d0": carnotlift.forms,
    "build_extension": extension, "potential_form": extension, "hom_obstruction": extension,
    "graded_hom_compose": extension, "top_wedge_coefficient": extension,
    "endpoint": curves, "horizontal_lift": curves, "line_integral": curves,
    "closed_loop_defect": lifting, "lift_map": lifting, "fiber_hom_extract": lifting, "pansu_quotient": lifting,
    "contact_generator_check": lifting,
    "symplectic_defect": symplectic, "lambda_from_det": symplectic, "moser_correct": symplectic,
    "poincare_primitive": symplectic, "area_preserving_check": symplectic, "quaternionic_structure": symplectic,
    "quaternionic_rigidity_check": symplectic,
    "group_convolve": hoelder, "pullback_derivative": hoelder, "decay_slope": hoelder, "hoelder_seminorm": hoelder,
    "weierstrass": hoelder, "young_integral": hoelder,
}


def call(args, out, capsys=None):
    code = run(list(args) + ["--out", str(out)])
    text = capsys.readouterr() if capsys is not None else None
    return code, text


def summary(out):
    return json.loads((Path(out) / "summary.json").read_text())


def test_every_operation_is_reachable_from_exactly_one_subcommand():
    owners = {}
    for name, (_, ops, _, _) in COMMANDS.items():
        for op in ops:
            owners.setdefault(op, []).append(name)
    assert set(COMMANDS) == SUBCOMMANDS
    assert set(owners) == set(LIBRARY_OPS)
    assert all(len(v) == 1 for v in owners.values()), {k: v for k, v in owners.items() if len(v) > 1}
    for op, module in LIBRARY_OPS.items():
        assert callable(getattr(module, op))


def test_mul_prints_worked_value(tmp_path, capsys):
    code, text = call(["mul", "--group", "heisenberg:1", "--p", "1,0,0", "--q", "0,1,0"], tmp_path, capsys)
    assert code == EXIT_OK
    assert text.out.strip() == "1,1,0.5"
    s = summary(tmp_path)
    assert s["result"] == [1.0, 1.0, 0.5]
    assert s["manifest"]["seed"] == 0 and s["exit_code"] == 0


def test_filiform_worked_value(tmp_path, capsys):
    code, text = call(["mul", "--group", "filiform:3", "--p", "1,0,0,0", "--q", "0,1,0,0"], tmp_path, capsys)
    assert code == EXIT_OK
    assert text.out.strip() == "1,1,0.5," + fmt(1 / 12)


def test_check_lift_exit_codes(tmp_path, capsys):
    code, _ = call(["check-lift", "--map", str(DATA / "a2b.json")], tmp_path / "a", capsys)
    assert code == EXIT_NOT_LIFTABLE
    witness = np.loadtxt(tmp_path / "a" / "witness_loop.csv", delimiter=",", skiprows=1)[:, 1:]
    assert np.array_equal(witness[0], witness[-1])
    code, _ = call(["check-lift", "--map", "quadratic-shear"], tmp_path / "b", capsys)
    assert code == EXIT_OK


def test_validation_failure_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"layers": [2, 1], "brackets": [{"i": 1, "j": 2, "k": 3, "c": 1}, {"i": 2, "j": 1, "k": 3, "c": 1}]}))
    code, text = call(["validate-algebra", "--group", str(bad)], tmp_path / "o", capsys)
    assert code == EXIT_VALIDATION
    assert "antisymmetry" in text.out


def test_generator_rejection_names_the_constraint(tmp_path, capsys):
    code, text = call(["filiform-generator", "--p4", "x4"], tmp_path, capsys)
    assert code == EXIT_VALIDATION
    assert "d4 p4 = 0" in text.out


def test_usage_and_data_errors(tmp_path, capsys):
    assert run(["no-such-command"]) == EXIT_USAGE
    assert call(["mul", "--bogus"], tmp_path, capsys)[0] == EXIT_USAGE
    assert call(["mul", "--group", "heisenberg:1", "--p", "1,0", "--q", "0,1,0"], tmp_path, capsys)[0] == EXIT_DATA
    missing = tmp_path / "missing.json"
    assert call(["validate-algebra", "--group", str(missing)], tmp_path, capsys)[0] == EXIT_DATA
    assert call(["mul", "--seed", "-1"], tmp_path, capsys)[0] == EXIT_USAGE


def test_output_directory_from_environment(tmp_path, monkeypatch, capsys):
    target = tmp_path / "env-out"
    monkeypatch.setenv("CARNOT_LIFT_OUT", str(target))
    code, _ = call(["dilate", "--group", "heisenberg:1", "--p", "1,1,1", "--lam", "2"], tmp_path / "flag-out", capsys)
    assert code == EXIT_OK
    assert (target / "summary.json").exists()
    assert not (tmp_path / "flag-out").exists()
    assert summary(target)["result"] == [2.0, 2.0, 4.0]


DETERMINISM_RUNS = [
    ["check-lift", "--map", "quadratic-shear", "--seed", "7"],
    ["endpoint", "--group", "filiform:3", "--curve", "square-loop"],
    ["young", "--levels", "4..10"],
    ["weierstrass", "--points", "65"],
    ["decay-experiment", "--eps-grid", "2^-4..2^-8"],
    ["quaternionic-check", "--count", "50", "--seed", "11"],
]


def _digest(folder: Path) -> dict:
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(folder.iterdir())}


@pytest.mark.parametrize("argv", DETERMINISM_RUNS, ids=[a[0] for a in DETERMINISM_RUNS])
def test_repeated_runs_are_hash_identical(argv, tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    ca, _ = call(argv, a, capsys)
    cb, _ = call(argv, b, capsys)
    assert ca == cb == EXIT_OK
    da, db = _digest(a), _digest(b)
    assert da == db
    assert any(name.endswith(".csv") for name in da)


def test_every_subcommand_runs_with_defaults(tmp_path, capsys):
    quick = {
        "validate-algebra": ["--group", "filiform:3"],
        "mul": ["--group", "heisenberg:1", "--p", "1,0,0", "--q", "0,1,0"],
        "quotient": ["--group", "heisenberg:1", "--p", "1,0,0", "--q", "0,1,0"],
        "dilate": ["--group", "heisenberg:1", "--p", "1,1,1", "--lam", "3"],
        "frame": ["--group", "heisenberg:1", "--p", "0.5,0.5,0"],
        "coframe": ["--group", "heisenberg:1", "--p", "1,2,0"],
        "build-extension": ["--extension", "heisenberg:1"],
        "potential": ["--p", "1,2"],
        "obstruction": ["--L", "2,0;0,1", "--phi", "2"],
        "endpoint": ["--group", "heisenberg:1", "--curve", "square-loop"],
        "lift-curve": ["--curve", "circle:257"],
        "check-lift": ["--map", "quadratic-shear"],
        "lift-map": ["--map", "quadratic-shear", "--resolution", "16"],
        "fiber-hom": ["--map", "quadratic-shear", "--resolution", "16"],
        "pansu": ["--map", "linear:2,1;1,1", "--resolution", "16"],
        "moser-correct": ["--map", "quadratic-shear", "--resolution", "16"],
        "area-check": ["--map", "quadratic-shear"],
        "quaternionic-check": ["--count", "10"],
        "decay-experiment": ["--eps-grid", "2^-4..2^-7"],
        "seminorm": ["--budget", "500"],
        "young": ["--levels", "4..8"],
        "weierstrass": ["--points", "33"],
        "filiform-generator": ["--p4", "x3 + x1*x2"],
    }
    assert set(quick) == SUBCOMMANDS
    for name, extra in quick.items():
        out = tmp_path / name
        code, text = call([name] + extra, out, capsys)
        assert code == EXIT_OK, (name, text.out, text.err)
        assert len(text.out.strip().splitlines()) == 1, name
        assert summary(out)["manifest"]["command"] == name


def test_parsers():
    assert np.allclose(parse_eps_grid("2^-4..2^-6"), [1 / 16, 1 / 32, 1 / 64])
    assert np.allclose(parse_eps_grid("0.1,0.05"), [0.1, 0.05])
    f = parse_field("x3 + x1*x2 + sin(x4)")
    x = np.array([[1.0, 2.0, 3.0, 0.0]])
    assert f(x)[0] == pytest.approx(5.0)
    with pytest.raises(Exception):
        parse_field("__import__('os').system('true')")


def test_fmt_round_trips():
    for v in (0.0, 0.5, 1 / 12, 1e-9, 123456.25, -3.0):
        assert float(fmt(v)) == v
