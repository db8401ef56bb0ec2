import math

import numpy as np
import pytest
from scipy import integrate, special

from src.logic import numerics
from src.logic.numerics import (
    QuadratureConfig, QuadratureError, adaptive_integrate, bessel_integral_representation, bessel_j, bessel_series,
    default_test_function, marginal_P_Em, marginal_half_integer_closed_form, mollified_fourier_cos,
    mollifier_trend, momentum_pairing_limit, weak_pairing,
)
from src.logic.wigner_states import EigenLabels, momentum_eigenstate


@pytest.mark.parametrize("nu", [0, 1, 2.5, 5])
@pytest.mark.parametrize("x", [0.0, 0.3, 4.0, 8.0])
def test_bessel_series_matches_scipy(nu, x):
    assert bessel_series(nu, x) == pytest.approx(bessel_j(nu, x), abs=1e-12)


def test_bessel_negative_integer_order():
    assert bessel_j(-3, 2.0) == pytest.approx(-bessel_j(3, 2.0))
    with pytest.raises(ValueError):
        bessel_j(-0.5, 1.0)
    with pytest.raises(ValueError):
        bessel_j(1, -1.0)


def test_bessel_integral_representation():
    for n, x in [(0, 1.0), (3, 7.5)]:
        assert bessel_integral_representation(n, x) == pytest.approx(bessel_j(n, x), abs=1e-12)


def test_endpoint_substitution_integrates_inverse_square_root():
    value, _ = adaptive_integrate(lambda x: 1.0 / math.sqrt(x), 0.0, 1.0, substitution="sqrt-left")
    assert value == pytest.approx(2.0, rel=1e-12)
    value, _ = adaptive_integrate(lambda x: 1.0 / math.sqrt(x * (1.0 - x)), 0.0, 1.0, substitution="sqrt-both")
    assert value == pytest.approx(math.pi, rel=1e-12)


def test_substitution_needs_to_be_enabled():
    with pytest.raises(ValueError):
        adaptive_integrate(lambda x: 1.0, 0.0, 1.0, QuadratureConfig(singularity_substitution=False), "sqrt-left")


def test_non_finite_integrand_raises():
    with pytest.raises(QuadratureError):
        adaptive_integrate(lambda x: math.inf, 0.0, 1.0)


def test_quadrature_config_from_settings_ignores_unknown_keys():
    cfg = QuadratureConfig.from_settings({"abs_tol": 1e-9, "other": 1})
    assert cfg.abs_tol == 1e-9
    with pytest.raises(ValueError):
        QuadratureConfig(rel_tol=0.0)


@pytest.mark.parametrize("m", [0, 1, 2, 5])
def test_integer_marginal_matches_the_bessel_closed_form(params, m):
    curve = marginal_P_Em(EigenLabels(1.0, m), params, np.linspace(0.0, 20.0 / math.sqrt(2.0), 41))
    assert curve.is_integer
    assert curve.max_relative_error < 1e-8
    assert curve.P.min() >= -1e-12


def test_half_integer_marginal_stays_positive(params):
    labels = EigenLabels(1.0, 0.5)
    r = np.linspace(0.0, 20.0 / math.sqrt(2.0), 200)
    curve = marginal_P_Em(labels, params, r)
    assert not curve.is_integer
    assert curve.P.min() > 0.0
    assert curve.max_relative_error < 1e-8
    assert np.allclose(curve.P, marginal_half_integer_closed_form(labels, params, r), atol=1e-12)


def test_half_integer_closed_form_at_the_origin(params):
    # P(0) = 4 pi M N sin(m pi) / (2 m)
    for m in (0.5, 1.5, 2.5, 3.5):
        labels = EigenLabels(1.0, m)
        scale = numerics.marginal_integrand_scale(labels, params)
        value = marginal_half_integer_closed_form(labels, params, [0.0])[0]
        assert value == pytest.approx(scale * math.sin(m * math.pi) / (2.0 * m), rel=1e-12)


@pytest.mark.parametrize("m", [1.5, 2.5, 3.5])
def test_higher_half_integer_marginals_match_quadrature(params, m):
    curve = marginal_P_Em(EigenLabels(1.0, m), params, np.linspace(0.0, 20.0 / math.sqrt(2.0), 60))
    assert curve.closed_form is not None
    assert curve.max_relative_error < 1e-8


@pytest.mark.parametrize("c", [1e-4, 0.5, 7.9, 8.0, 25.0])
def test_bessel_moments_match_quadrature(c):
    moments = numerics.bessel_moments(c, 6)
    for n, value in enumerate(moments):
        expected, _ = integrate.quad(lambda u: u ** n * special.j0(c * u), 0.0, 1.0, epsabs=1e-14, epsrel=1e-12, limit=200)
        assert value == pytest.approx(expected, abs=1e-11)


def test_half_integer_closed_form_rejects_other_labels(params):
    for m in (1.0, 0.75, 4.5):
        with pytest.raises(ValueError):
            marginal_half_integer_closed_form(EigenLabels(1.0, m), params, [1.0])


@pytest.mark.parametrize("m", [4 / 3, 1.5, 7 / 4])
def test_fractional_marginals_go_negative(params, m):
    curve = marginal_P_Em(EigenLabels(1.0, m), params, np.linspace(0.0, 20.0 / math.sqrt(2.0), 200))
    assert curve.P.min() < 0.0


def test_mollified_fourier_cos():
    numeric, analytic = mollified_fourier_cos(1.3, 0.4, 0.9, 0.2)
    assert numeric == pytest.approx(analytic, abs=1e-9)
    with pytest.raises(ValueError):
        mollified_fourier_cos(1.0, 0.0, 0.0, 0.0)


def test_test_function_moments():
    phi = numerics.TestFunction(harmonics=((0, 1.0), (2, 0.5)))
    assert phi.chi_moment(0) == pytest.approx(2.0 * math.pi)
    assert phi.chi_moment(-2) == pytest.approx(math.pi)
    assert phi.L_gaussian_integral(0.0) == pytest.approx(math.sqrt(2.0 * math.pi))
    with pytest.raises(ValueError):
        numerics.TestFunction(sigma_L=0.0)


def test_weak_pairing_of_an_eigenfunction_is_real_on_the_diagonal(params):
    phi = default_test_function()
    value = weak_pairing(EigenLabels(1.0, 1.0), phi, params=params)
    assert abs(value.imag) < 1e-14


def test_mollified_momentum_pairing_converges(params):
    phi = default_test_function()
    desc = momentum_eigenstate(1.0, 0.5, params, epsilon=1e-3)
    assert weak_pairing(desc, phi) == pytest.approx(momentum_pairing_limit(desc, phi), rel=1e-4)
    trend = mollifier_trend(1.0, 0.5, params, phi)
    assert trend.errors[-1] < trend.errors[0]
