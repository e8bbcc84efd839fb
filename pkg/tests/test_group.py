import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from carnotlift.algebra import builtin, heisenberg
from carnotlift.bch import bch
from carnotlift.errors import StructuralError
from carnotlift.group import (
    GroupElement,
    closed_form_coframe,
    closed_form_frame,
    closed_form_left_quotient,
    closed_form_multiply,
    coframe_coords,
    contact_coframe,
    dilate,
    frame_coords,
    inverse,
    left_invariant_frame,
    left_quotient,
    multiply,
    multiply_coords,
    quasi_metric,
)
from tests import oracles

H1 = builtin("heisenberg:1")
F3 = builtin("filiform:3")


def el(alg, c):
    return GroupElement(np.asarray(c, float), alg)


# multiply ------------------------------------------------------------------------------


def test_heisenberg_worked_product():
    r = multiply(el(H1, [1, 0, 0]), el(H1, [0, 1, 0]))
    assert r.coords.tolist() == [1.0, 1.0, 0.5]
    assert np.allclose(oracles.group_law(H1.tensor, 2, [1, 0, 0], [0, 1, 0]), r.coords)
    assert np.allclose(oracles.heisenberg_matrix_product([1, 0, 0], [0, 1, 0]), r.coords)


def test_filiform_worked_product():
    r = multiply(el(F3, [1, 0, 0, 0]), el(F3, [0, 1, 0, 0]))
    assert np.allclose(r.coords, [1, 1, 0.5, 1 / 12], atol=1e-15, rtol=0)
    assert np.allclose(oracles.group_law(F3.tensor, 3, [1, 0, 0, 0], [0, 1, 0, 0]), [1, 1, 0.5, 1 / 12])


def test_identity_is_neutral(builtin_algebra, rng):
    a = builtin_algebra
    p = el(a, rng.normal(size=a.total_dim))
    e = GroupElement.identity(a)
    assert multiply(p, e).allclose(p, 0)
    assert multiply(e, p).allclose(p, 0)


@pytest.mark.parametrize("name", ["heisenberg:1", "heisenberg:2", "filiform:3", "filiform:4", "filiform:5", "quaternionic-heisenberg:1"])
def test_product_matches_free_algebra_oracle(name, rng):
    a = builtin(name)
    P = rng.normal(size=(50, a.total_dim))
    Q = rng.normal(size=(50, a.total_dim))
    got = multiply_coords(a, P, Q)
    for p, q, g in zip(P, Q, got):
        assert np.allclose(g, oracles.group_law(a.tensor, a.step, p, q), atol=1e-10, rtol=0)


def test_heisenberg_matches_matrix_group(rng):
    for _ in range(100):
        p, q = rng.normal(size=3), rng.normal(size=3)
        assert np.allclose(multiply_coords(H1, p, q), oracles.heisenberg_matrix_product(p, q), atol=1e-12)


@pytest.mark.parametrize("name", ["heisenberg:1", "heisenberg:3", "filiform:3", "quaternionic-heisenberg:1"])
def test_closed_form_equals_series(name, rng):
    a = builtin(name)
    P = rng.normal(size=(1000, a.total_dim))
    Q = rng.normal(size=(1000, a.total_dim))
    assert np.abs(closed_form_multiply(a, P, Q) - bch(P, Q, a.tensor, a.step)).max() < 1e-10


def test_closed_form_refuses_step_four():
    with pytest.raises(StructuralError):
        closed_form_multiply(builtin("filiform:4"), np.zeros(5), np.zeros(5))


def test_mismatched_algebras():
    with pytest.raises(StructuralError):
        multiply(el(H1, [0, 0, 0]), el(F3, [0, 0, 0, 0]))


finite = st.floats(-3, 3, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(st.lists(finite, min_size=12, max_size=12))
def test_associativity_filiform_property(xs):
    p, q, r = (np.array(xs[4 * i : 4 * i + 4]) for i in range(3))
    lhs = multiply_coords(F3, multiply_coords(F3, p, q), r)
    rhs = multiply_coords(F3, p, multiply_coords(F3, q, r))
    assert np.allclose(lhs, rhs, atol=1e-9, rtol=1e-10)


# inverse, quotient ---------------------------------------------------------------------


def test_inverse_examples(builtin_algebra, rng):
    a = builtin_algebra
    e = GroupElement.identity(a)
    assert inverse(e).allclose(e, 0)
    p = el(a, rng.normal(size=a.total_dim))
    assert multiply(inverse(p), p).allclose(e, 1e-12)
    assert inverse(el(H1, [1, 2, 3])).coords.tolist() == [-1, -2, -3]


def test_left_quotient_examples(rng):
    p = el(H1, [1, 0, 0])
    assert left_quotient(p, p).allclose(GroupElement.identity(H1), 0)
    q = el(H1, [0, 1, 0])
    expected = oracles.group_law(H1.tensor, 2, [-1, 0, 0], [0, 1, 0])
    assert np.allclose(expected, [-1, 1, -0.5])
    assert np.allclose(left_quotient(p, q).coords, expected)
    assert np.allclose(oracles.heisenberg_matrix_product([-1, 0, 0], [0, 1, 0]), expected)


def test_left_quotient_closed_form_on_filiform(rng):
    P = rng.normal(size=(500, 4))
    Q = rng.normal(size=(500, 4))
    assert np.abs(closed_form_left_quotient(F3, P, Q) - multiply_coords(F3, -P, Q)).max() < 1e-12


# dilations and quasi-metric -----------------------------------------------------------------


def test_dilation_examples():
    assert dilate(2.0, el(H1, [1, 1, 1])).coords.tolist() == [2, 2, 4]
    assert dilate(2.0, el(F3, [1, 1, 1, 1])).coords.tolist() == [2, 2, 4, 8]
    assert dilate(3.0, GroupElement.identity(F3)).coords.tolist() == [0, 0, 0, 0]
    with pytest.raises(ValueError):
        dilate(0.0, el(H1, [1, 1, 1]))


def test_dilation_is_automorphism(builtin_algebra, rng):
    a = builtin_algebra
    for lam in (0.3, 2.5):
        p, q = el(a, rng.normal(size=a.total_dim)), el(a, rng.normal(size=a.total_dim))
        lhs = dilate(lam, multiply(p, q))
        rhs = multiply(dilate(lam, p), dilate(lam, q))
        assert lhs.allclose(rhs, 1e-10)


def test_quasi_metric_examples(rng):
    e = GroupElement.identity(H1)
    assert quasi_metric(e, e) == 0
    assert quasi_metric(e, el(H1, [1, 0, 0])) == pytest.approx(1.0)
    for _ in range(20):
        p, q = el(F3, rng.normal(size=4)), el(F3, rng.normal(size=4))
        assert quasi_metric(dilate(2, p), dilate(2, q)) == pytest.approx(2 * quasi_metric(p, q), rel=1e-12)
        assert quasi_metric(p, q) > 0


def test_quasi_metric_is_left_invariant(rng):
    for _ in range(20):
        g, p, q = (el(F3, rng.normal(size=4)) for _ in range(3))
        assert quasi_metric(multiply(g, p), multiply(g, q)) == pytest.approx(quasi_metric(p, q), rel=1e-9)


# frame and coframe -------------------------------------------------------------------------


def test_frame_at_identity(builtin_algebra):
    a = builtin_algebra
    e = GroupElement.identity(a)
    assert np.array_equal(left_invariant_frame(e), np.eye(a.total_dim))
    assert np.array_equal(contact_coframe(e), np.eye(a.total_dim))


def test_heisenberg_frame_and_coframe_values():
    x, y = 0.7, -1.3
    F = left_invariant_frame(el(H1, [x, y, 5.0]))
    assert np.allclose(F[:, 0], [1, 0, -y / 2])
    assert np.allclose(F[:, 1], [0, 1, x / 2])
    W = contact_coframe(el(H1, [1, 2, 0]))
    assert np.allclose(W[2], [1, -0.5, 1])


@pytest.mark.parametrize("name", ["heisenberg:2", "filiform:3", "filiform:4", "quaternionic-heisenberg:1"])
def test_frame_matches_finite_difference_of_product(name, rng):
    a = builtin(name)
    p = rng.normal(size=a.total_dim)
    h = 1e-5
    F = frame_coords(a, p)
    for j in range(a.total_dim):
        e = np.zeros(a.total_dim)
        e[j] = h
        fd = (multiply_coords(a, p, e) - multiply_coords(a, p, -e)) / (2 * h)
        assert np.allclose(F[:, j], fd, atol=1e-6)


@pytest.mark.parametrize("name", ["heisenberg:1", "filiform:3", "quaternionic-heisenberg:1"])
def test_closed_form_frame_and_coframe(name, rng):
    a = builtin(name)
    P = rng.normal(size=(200, a.total_dim))
    assert np.abs(closed_form_frame(a, P) - frame_coords(a, P)).max() < 1e-12
    assert np.abs(closed_form_coframe(a, P) - coframe_coords(a, P)).max() < 1e-12


def test_coframe_inverts_frame(builtin_algebra, rng):
    a = builtin_algebra
    P = rng.normal(size=(100, a.total_dim))
    prod = np.einsum("nij,njk->nik", coframe_coords(a, P), frame_coords(a, P))
    assert np.abs(prod - np.eye(a.total_dim)).max() < 1e-12


def test_frame_fields_are_left_invariant(rng):
    # (L_g)_* X(p) = X(g p)
    g, p = rng.normal(size=4), rng.normal(size=4)
    h = 1e-5
    for j in range(4):
        v = frame_coords(F3, p)[:, j]
        push = (multiply_coords(F3, g, p + h * v) - multiply_coords(F3, g, p - h * v)) / (2 * h)
        assert np.allclose(push, frame_coords(F3, multiply_coords(F3, g, p))[:, j], atol=1e-7)


def test_heisenberg_constructor_rejects_wrong_length():
    with pytest.raises(StructuralError):
        GroupElement([1.0, 2.0], heisenberg(1))
