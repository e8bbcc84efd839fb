import json

import numpy as np
import pytest

from carnotlift.algebra import (
    StratifiedAlgebra,
    abelian,
    builtin,
    filiform,
    heisenberg,
    load_algebra,
    validate,
)
from carnotlift.errors import StructuralError, ValidationError
from carnotlift.forms import InvariantForm, lie_differential_d0


def test_heisenberg_constants_validate_clean():
    rep = validate(heisenberg(1))
    assert rep.ok and len(rep) == 0


def test_symmetric_bracket_entries_report_antisymmetry_at_123():
    alg = StratifiedAlgebra.from_brackets([2, 1], [(0, 1, 2, 1.0), (1, 0, 2, 1.0)])
    rep = validate(alg)
    assert "antisymmetry" in rep.kinds()
    assert any(v.kind == "antisymmetry" and v.indices == (1, 2, 3) for v in rep.violations)


def test_bracket_into_wrong_layer_reports_grading():
    alg = StratifiedAlgebra.from_brackets(None, [(0, 1, 2, 1.0)], weights=[1, 1, 3])
    rep = validate(alg)
    assert [v.kind for v in rep.violations] == ["grading"]
    assert rep.violations[0].indices == (1, 2, 3)


def test_jacobi_failure_is_reported_with_indices():
    # [X1,X2]=X4 and [X4,X3]=X5 alone: Jacobi(X1,X2,X3) = [X4,X3] = X5
    alg = StratifiedAlgebra.from_brackets(None, [(0, 1, 3, 1.0), (3, 2, 4, 1.0)], weights=[1, 1, 1, 2, 3])
    rep = validate(alg)
    assert rep.kinds() == {"jacobi"}
    assert (1, 2, 3, 5) in [v.indices for v in rep.violations]


def test_free_step3_table_is_valid():
    alg = StratifiedAlgebra.from_brackets(None, [(0, 1, 2, 1.0), (0, 2, 3, 1.0), (1, 2, 4, 1.0)], weights=[1, 1, 2, 3, 3])
    assert validate(alg).ok


def test_unvalidated_algebra_is_refused_by_group_ops():
    from carnotlift.group import GroupElement, multiply

    alg = StratifiedAlgebra.from_brackets(None, [(0, 1, 2, 1.0)], weights=[1, 1, 3])
    p = GroupElement([1, 0, 0], alg)
    with pytest.raises(ValidationError):
        multiply(p, p)


@pytest.mark.parametrize("name", ["heisenberg:1", "heisenberg:3", "filiform:3", "filiform:5", "quaternionic-heisenberg:2"])
def test_builtins_are_valid_and_generated(name):
    rep = validate(builtin(name))
    assert rep.ok
    assert rep.warnings == ()


def test_builtin_dimensions():
    assert builtin("heisenberg:2").layer_dims == (4, 1)
    assert builtin("filiform:3").weights == (1, 1, 2, 3)
    assert builtin("quaternionic-heisenberg:1").layer_dims == (4, 3)
    assert builtin("heisenberg:1").homogeneous_dimension == 4


def test_json_definition_round_trip(tmp_path):
    spec = {"name": "h", "layers": [2, 1], "brackets": [{"i": 1, "j": 2, "k": 3, "c": 1.0}]}
    p = tmp_path / "h.json"
    p.write_text(json.dumps(spec))
    a = load_algebra(str(p))
    assert a.same_as(heisenberg(1))
    again = load_algebra(a.to_json_dict())
    assert again.same_as(a)


def test_json_definition_errors_name_the_field():
    with pytest.raises(ValueError, match="layers"):
        load_algebra({"brackets": []})
    with pytest.raises(ValueError, match=r"brackets\[0\]"):
        load_algebra({"layers": [2, 1], "brackets": [{"i": 1, "j": 2}]})


def test_bracket_index_outside_basis():
    with pytest.raises(StructuralError):
        StratifiedAlgebra.from_brackets([2, 1], [(0, 1, 5, 1.0)])


def test_unknown_builtin_name():
    with pytest.raises(KeyError):
        builtin("nilpotent:4")


# Lie differential ---------------------------------------------------------------------


def test_d0_vanishes_on_abelian_algebra(rng):
    alg = abelian(4)
    M = rng.normal(size=(4, 4))
    rho = InvariantForm(alg, 2, M - M.T)
    assert lie_differential_d0(rho).is_zero()
    assert lie_differential_d0(InvariantForm(alg, 1, rng.normal(size=4))).is_zero()


def test_d0_of_filiform_cocycle_on_heisenberg_base():
    h = heisenberg(1)
    rho = InvariantForm.from_entries(h, 2, 1, {(0, 0, 2): 1.0})  # rho(X1, X3) = 1
    d = lie_differential_d0(rho)
    assert d.degree == 3
    assert d.values[0, 0, 1, 2] == pytest.approx(0.0, abs=1e-15)
    assert d.is_zero()


def test_d0_of_one_form_is_minus_form_of_bracket():
    h = heisenberg(1)
    theta3 = InvariantForm(h, 1, [0.0, 0.0, 1.0])
    d = lie_differential_d0(theta3)
    # d0 theta(X1, X2) = -theta([X1, X2]) = -1
    assert d.values[0, 0, 1] == pytest.approx(-1.0)
    assert d.values[0, 1, 0] == pytest.approx(1.0)


@pytest.mark.parametrize("name", ["heisenberg:2", "filiform:3", "filiform:4", "quaternionic-heisenberg:1"])
def test_d0_squared_is_zero(name, rng):
    alg = builtin(name)
    for _ in range(5):
        mu = InvariantForm(alg, 1, rng.normal(size=alg.total_dim))
        dd = lie_differential_d0(lie_differential_d0(mu))
        assert np.abs(dd.values).max() < 1e-12


def test_degree_two_form_must_be_antisymmetric():
    with pytest.raises(ValidationError):
        InvariantForm(abelian(2), 2, np.ones((2, 2)))


def test_form_weight():
    h = heisenberg(1)
    assert InvariantForm(h, 1, [0.0, 0.0, 1.0]).weight == -2
    rho = InvariantForm.from_entries(filiform(3), 2, 1, {(0, 0, 1): 1.0}, value_weights=(2,))
    assert rho.weight == 0
