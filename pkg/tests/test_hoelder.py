import numpy as np
import pytest

from carnotlift.algebra import abelian, builtin, heisenberg
from carnotlift.errors import ChartError, StructuralError
from carnotlift.extension import heisenberg_extension
from carnotlift.group import quasi_metric_coords
from carnotlift.hoelder import (
    KERNEL_NOTE,
    SHEARS,
    MollifierKernel,
    decay_slope,
    deltas_decay_from,
    fit_slope,
    group_convolve,
    hoelder_seminorm,
    pullback_derivative,
    weierstrass,
    weierstrass_tail_bound,
    young_integral,
)
from carnotlift.lifting import lift_map
from carnotlift.maps import SampledMap
from carnotlift.symplectic import moser_correct

H1 = heisenberg(1)
K_H1 = MollifierKernel(H1)
EPS = 2.0 ** -np.arange(4, 11)


def wrap(fn):
    return lambda P: np.asarray(fn(P[:, 0]))[:, None]


# kernel ------------------------------------------------------------------------------------


@pytest.mark.parametrize("name", ["heisenberg:1", "filiform:3", "abelian:2"])
def test_kernel_has_unit_mass_and_lives_in_the_unit_ball(name):
    alg = abelian(2) if name == "abelian:2" else builtin(name)
    K = MollifierKernel(alg)
    W, c = K.quadrature
    assert c.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.all(c > 0)
    assert quasi_metric_coords(alg, np.zeros_like(W), W).max() <= 1.0


def test_marginal_integrates_to_one():
    b, m, dm, db = K_H1.marginal(1)
    assert np.trapezoid(m, b) == pytest.approx(1.0, abs=1e-12)
    assert np.trapezoid(dm, b) == pytest.approx(0.0, abs=1e-8)


def test_kernel_metadata_names_the_substitute():
    assert K_H1.metadata()["kernel"] == KERNEL_NOTE


def test_derivative_weights_differentiate_linear_functions_exactly():
    W, _ = K_H1.quadrature
    for i in range(3):
        d = K_H1.derivative_weights(i)
        assert abs(d.sum()) < 1e-12
        assert float(W[:, i] @ d) == pytest.approx(-1.0, abs=1e-14)


# convolution ---------------------------------------------------------------------------------


def test_constant_is_fixed(rng):
    f = lambda P: np.full((P.shape[0], 2), 3.5)
    m = group_convolve(f, 0.1, K_H1)
    assert np.allclose(m(rng.normal(size=(10, 3))), 3.5, atol=1e-13)


def test_linear_map_is_fixed_on_abelian_group(rng):
    A = rng.normal(size=(2, 2))
    m = group_convolve(lambda P: P @ A.T, 0.2, MollifierKernel(abelian(2)))
    P = rng.normal(size=(10, 2))
    assert np.abs(m(P) - P @ A.T).max() < 1e-13


def test_absolute_value_smooths_to_positive():
    m = group_convolve(wrap(np.abs), 0.1, MollifierKernel(abelian(1)))
    assert m(np.zeros((1, 1)))[0, 0] > 0


def test_sampled_map_margin_violation():
    f = SampledMap.from_function(lambda x: x, [-1, -1], [1, 1], (9, 9))
    m = group_convolve(f, 0.1)
    with pytest.raises(ChartError):
        m(np.array([[0.99, 0.0]]))
    assert np.allclose(m(np.array([[0.2, 0.3]])), [[0.2, 0.3]], atol=1e-13)


def test_sample_returns_a_sampled_map():
    m = group_convolve(lambda P: P, 0.1, MollifierKernel(abelian(2)))
    sm = m.sample([-0.5, -0.5], [0.5, 0.5], (5, 5))
    assert isinstance(sm, SampledMap) and sm.values.shape == (5, 5, 2)


@pytest.mark.parametrize("name", ["square-shear", "abs-shear", "weierstrass-shear"])
def test_spectral_shear_matches_group_quadrature(name):
    shear = SHEARS[name]()
    P = np.array([[0.1, 0.2, 0.0], [0.3, -0.1, 0.4]])
    spectral = shear.mollified(0.1, K_H1)
    quad = group_convolve(shear, 0.1, K_H1, target=H1)
    # 17 nodes per axis under-resolve the oscillating series; the spectral path is exact in the kernel
    tol, rel = (1e-4, 2e-2) if name == "weierstrass-shear" else (1e-6, 1e-5)
    assert np.abs(spectral(P) - quad(P)).max() < tol
    for i in range(3):
        a, b = spectral.directional(P, i), quad.directional(P, i)
        assert np.abs(a - b).max() < rel * max(1.0, np.abs(a).max())


def test_directional_matches_finite_difference():
    from carnotlift.group import multiply_coords

    m = group_convolve(SHEARS["abs-shear"](), 0.1, K_H1, target=H1)
    P = np.array([[0.1, 0.2, 0.0], [0.3, -0.1, 0.4]])
    h = 1e-5
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        fd = (m(multiply_coords(H1, P, e)) - m(multiply_coords(H1, P, -e))) / (2 * h)
        assert np.abs(fd - m.directional(P, i)).max() < 1e-8


def test_mollifier_consistency_for_weierstrass():
    g = lambda y: weierstrass(y, 6)
    semi = hoelder_seminorm(g, 2 / 3, 100000, lower=[0], upper=[1]).seminorm
    y = np.linspace(0.2, 0.8, 2001)[:, None]
    K = MollifierKernel(abelian(1))
    for eps in (0.1, 0.03, 0.01):
        err = np.abs(group_convolve(wrap(g), eps, K)(y)[:, 0] - g(y[:, 0])).max()
        assert err <= semi * eps ** (2 / 3)


# pullback derivatives and slopes ----------------------------------------------------------------


def test_pullback_derivative_of_identity():
    m = group_convolve(lambda P: P, 0.1, K_H1, target=H1)
    p = np.array([[0.2, -0.1, 0.3]])
    assert pullback_derivative(m, 0, 0, p)[0] == pytest.approx(1.0, abs=1e-12)
    assert pullback_derivative(m, 2, 0, p)[0] == pytest.approx(0.0, abs=1e-12)
    assert pullback_derivative(m, 2, 1, p)[0] == pytest.approx(0.0, abs=1e-12)


def test_pullback_derivative_on_sampled_map_needs_stencil():
    f = SampledMap.from_function(lambda x: x, [-1] * 3, [1] * 3, (5, 5, 5))
    assert pullback_derivative(f, 0, 0, [[0.0, 0.0, 0.0]], source=H1, target=H1)[0] == pytest.approx(1.0)
    with pytest.raises(ChartError):
        pullback_derivative(f, 0, 0, [[1.0, 0.0, 0.0]], source=H1, target=H1)


def test_lipschitz_shear_decays_at_rate_one():
    fit = decay_slope(SHEARS["abs-shear"](), 2, 1, EPS, K_H1, beta=1.0)
    assert 0.7 <= fit.slope <= 1.3
    assert fit.certified


def test_smooth_shear_decays_at_rate_two():
    # the map of the running example is C^2, so it beats the Lipschitz rate
    fit = decay_slope(SHEARS["square-shear"](), 2, 1, EPS, K_H1)
    assert fit.slope == pytest.approx(2.0, abs=1e-3)


def test_weierstrass_shear_decays_at_least_at_the_hoelder_rate():
    fit = decay_slope(SHEARS["weierstrass-shear"](), 2, 1, EPS, K_H1, beta=2 / 3)
    assert fit.slope >= 2 * (2 / 3) - 1


def test_shear_pullback_on_first_frame_vector_vanishes():
    P = np.array([[0.1, 0.2, 0.0], [0.3, -0.4, 0.1]])
    m = SHEARS["weierstrass-shear"]().mollified(0.01, K_H1)
    assert np.abs(pullback_derivative(m, 2, 0, P)).max() < 1e-13


def test_fit_outside_weight_regime_is_reported_but_not_certified():
    # omega_0 has weight 1, the same as X_1
    fit = decay_slope(lambda P: P, 0, 1, EPS[:4], K_H1, target=H1)
    assert not fit.certified and "weight regime" in fit.note
    assert fit.meta["in_weight_regime"] is False
    assert decay_slope(SHEARS["abs-shear"](), 2, 1, EPS[:4], K_H1).meta["in_weight_regime"] is True


def test_constant_map_is_at_noise_floor():
    const = lambda P: np.tile([0.5, 0.5, 0.5], (P.shape[0], 1))
    fit = decay_slope(const, 2, 1, EPS[:4], K_H1, target=H1)
    assert fit.at_noise_floor and fit.slope is None and not fit.certified


def test_slope_fit_guards():
    with pytest.raises(ValueError):
        decay_slope(SHEARS["abs-shear"](), 2, 1, EPS[:3], K_H1)
    fit = fit_slope(EPS, EPS**0.4, beta=0.4)
    assert fit.slope == pytest.approx(0.4)
    assert not fit.certified and "1/2" in fit.note
    # with 8 or more scales the two largest and two smallest are dropped
    assert fit_slope(2.0 ** -np.arange(10), np.ones(10)).window == (2, 8)


def test_no_kernel_and_no_algebra():
    with pytest.raises(StructuralError):
        decay_slope(lambda P: P, 2, 1, EPS)


# seminorm ---------------------------------------------------------------------------------------


def test_seminorm_examples():
    assert hoelder_seminorm(lambda y: 0 * y + 2.0, 0.5, 1000, lower=[0], upper=[1]).seminorm == 0.0
    ident = hoelder_seminorm(lambda y: y, 1.0, 1000, lower=[0], upper=[1])
    assert 0.99 < ident.seminorm <= 1.0 + 1e-12
    assert ident.separation_decades >= 2


def test_seminorm_is_monotone_in_budget():
    g = lambda y: weierstrass(y, 6)
    vals = [hoelder_seminorm(g, 2 / 3, b, lower=[0], upper=[1]).seminorm for b in (100, 1000, 10000, 100000)]
    assert vals == sorted(vals)
    assert vals[3] < 2 * vals[2]


def test_localized_seminorm_is_at_most_global():
    g = lambda y: weierstrass(y, 6)
    loc = hoelder_seminorm(g, 2 / 3, 20000, lower=[0], upper=[1], max_sep=0.02)
    glob = hoelder_seminorm(g, 2 / 3, 20000, lower=[0], upper=[1])
    assert 0 < loc.seminorm <= 1.05 * glob.seminorm
    with pytest.raises(ValueError):
        hoelder_seminorm(g, 2 / 3, 10, lower=[0], upper=[1], min_sep=0.1, max_sep=0.01)


def test_seminorm_with_quasi_metric():
    f = SampledMap.from_function(lambda x: x, [-1] * 3, [1] * 3, (3, 3, 3))
    s = hoelder_seminorm(f, 1.0, 2000, source=H1, target=H1)
    assert s.seminorm == pytest.approx(1.0)


def test_seminorm_beta_range():
    for beta in (0.0, 1.5):
        with pytest.raises(ValueError):
            hoelder_seminorm(lambda y: y, beta, 10, lower=[0], upper=[1])


# Weierstrass ------------------------------------------------------------------------------------


def test_weierstrass_examples():
    y = np.linspace(-1, 1, 101)
    assert np.array_equal(weierstrass(y, 0), np.cos(np.pi * y))
    assert abs(weierstrass(0.0, 30) - 9 / 8) < 1e-15
    assert abs(weierstrass(0.0, 6) - 9 / 8) <= weierstrass_tail_bound(6)
    for N in range(6):
        assert np.abs(weierstrass(y, N + 1) - weierstrass(y, N)).max() <= 9.0 ** -(N + 1) + 1e-15
    with pytest.raises(ValueError):
        weierstrass(0.0, -1)


def test_weierstrass_is_odd_about_one_half():
    t = np.linspace(0, 1, 257)
    assert np.abs(weierstrass(1 - t, 6) + weierstrass(t, 6)).max() < 1e-12


# Young ------------------------------------------------------------------------------------------


def test_young_closed_forms_are_exact():
    g = lambda t: weierstrass(t, 6)
    r = young_integral(lambda t: 0 * t + 2.5, g, range(4, 9))
    assert all(s == pytest.approx(2.5 * (g(1.0) - g(0.0)), abs=1e-13) for s in r.sums)
    lin = young_integral(lambda t: t, lambda t: t, range(2, 8))
    assert all(s == 0.5 for s in lin.sums)


def test_young_on_the_unit_interval_vanishes_by_symmetry():
    g = lambda t: weierstrass(t, 6)
    r = young_integral(g, g, range(4, 15), 2 / 3, 2 / 3)
    assert max(abs(s) for s in r.sums) < 1e-12
    assert deltas_decay_from(r.deltas, 4)


def test_young_converges_to_the_closed_form_on_an_asymmetric_interval():
    g = lambda t: weierstrass(t, 6)
    exact = 0.5 * (g(0.7) ** 2 - g(0.0) ** 2)
    r = young_integral(g, g, range(4, 15), 2 / 3, 2 / 3, b=0.7)
    assert abs(r.value - exact) < 1e-5
    assert abs(r.sums[-1] - r.sums[-2]) < 1e-5
    assert r.ratio_bound == pytest.approx(2 ** (1 - 4 / 3))


def test_young_accepts_sampled_paths_and_is_bilinear(rng):
    t = np.linspace(0, 1, 1025)
    f1, f2, g = rng.normal(size=(3, 1025))
    a = young_integral(f1, g, range(3, 9)).sums
    b = young_integral(f2, g, range(3, 9)).sums
    c = young_integral(2 * f1 - 3 * f2, g, range(3, 9)).sums
    assert np.allclose(c, 2 * np.array(a) - 3 * np.array(b), atol=1e-12)


def test_young_needs_exponents_above_one():
    with pytest.raises(ValueError):
        young_integral(lambda t: t, lambda t: t, alpha=0.5, beta=0.5)
    with pytest.raises(ValueError):
        young_integral(lambda t: t, lambda t: t, tag="right")


def test_deltas_decay_floor_rule():
    assert deltas_decay_from([1.0, 0.5, 0.25], 0)
    assert not deltas_decay_from([1.0, 0.5, 0.75], 0)
    assert deltas_decay_from([1.0, 0.5, 1e-14, 3e-14], 0)


# mollified lifts converge ----------------------------------------------------------------------------


def test_lift_of_corrected_mollification_converges_to_lift():
    ext = heisenberg_extension(1)
    qshear = lambda P: np.stack([P[..., 0] + P[..., 1] ** 2, P[..., 1]], axis=-1)
    box = ([-1.0, -1.0], [1.0, 1.0])
    F = lift_map(SampledMap.from_function(qshear, *box, (33, 33)), ext, ext, check=False)
    K = MollifierKernel(abelian(2))
    ax = np.linspace(-0.5, 0.5, 9)
    probes = np.stack(np.meshgrid(ax, ax, [0.0], indexing="ij"), axis=-1).reshape(-1, 3)
    errs = []
    for k in range(3, 8):
        fe = group_convolve(lambda P: qshear(P), 2.0**-k, K).sample(*box, (33, 33))
        ge = moser_correct(fe)
        G = lift_map(ge, ext, ext, check=False)
        errs.append(np.abs(G(probes) - F(probes)).max())
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-4
