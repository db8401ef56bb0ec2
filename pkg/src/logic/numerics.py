"""
Special functions, adaptive quadrature and weak pairings.

Bessel values come from scipy.special with an ascending-series oracle; integrals
go through scipy.integrate.quad with explicit endpoint substitutions instead of
loosened tolerances.
"""

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial
from scipy import integrate, special

from .symplectic_charts import TWO_PI, PhysParams
from .wigner_states import (
    EigenLabels, MomentumEigenDescriptor, WignerSpec, EnergyAngular, norm_constants, momentum_eigenstate,
)

MOLLIFIER_SCHEDULE = (1e-1, 3e-2, 1e-2, 3e-3)


class QuadratureError(RuntimeError):
    def __init__(self, message, estimate=None, error=None):
        self.estimate = estimate
        self.error = error
        super().__init__(message)


@dataclass(frozen=True)
class QuadratureConfig:
    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    max_subdivisions: int = 200
    singularity_substitution: bool = True

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("Quadrature tolerances must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be positive")

    @classmethod
    def from_settings(cls, settings):
        return cls(**{k: v for k, v in (settings or {}).items() if k in cls.__dataclass_fields__})


def bessel_j(nu, x):
    """J_nu(x) for x >= 0; negative integer orders use J_-n = (-1)^n J_n."""
    if not (math.isfinite(x) and x >= 0.0):
        logging.debug(f"bessel_j returning error 'x out of domain {x}'")
        raise ValueError(f"bessel_j needs finite x >= 0, got {x}")
    if nu < 0:
        if nu != int(nu):
            raise ValueError(f"Negative non-integer order {nu} is not supported")
        n = -int(nu)
        return (-1) ** n * float(special.jv(n, x))
    return float(special.jv(nu, x))


def bessel_series(nu, x, terms=60):
    """Ascending series sum (-1)^k (x/2)^(2k+nu) / (k! Gamma(k+nu+1)); accurate for moderate x."""
    if x < 0.0 or nu < 0.0:
        raise ValueError("bessel_series needs nu >= 0 and x >= 0")
    if x == 0.0:
        return 1.0 if nu == 0 else 0.0
    half = 0.5 * x
    log_half = math.log(half)
    total = 0.0
    for k in range(terms):
        magnitude = math.exp((2 * k + nu) * log_half - math.lgamma(k + 1) - math.lgamma(k + nu + 1))
        total += -magnitude if k % 2 else magnitude
    return total


def _integrand_guard(f):
    def guarded(x):
        value = f(x)
        if not np.isfinite(value):
            raise QuadratureError(f"Non-finite integrand sample {value} at x={x}")
        return value
    return guarded


def _substituted(f, a, b, substitution):
    if substitution is None:
        return f, a, b
    if substitution == "sqrt-left":
        # x = a + u^2
        return (lambda u: 2.0 * u * f(a + u * u)), 0.0, math.sqrt(b - a)
    if substitution == "sqrt-right":
        # x = b - u^2
        return (lambda u: 2.0 * u * f(b - u * u)), 0.0, math.sqrt(b - a)
    if substitution == "sqrt-both":
        # x = a + (b - a) sin^2 t
        width = b - a
        return (lambda t: width * math.sin(2.0 * t) * f(a + width * math.sin(t) ** 2)), 0.0, 0.5 * math.pi
    raise ValueError(f"Unknown substitution '{substitution}'")


def adaptive_integrate(f, a, b, cfg=None, substitution=None, points=None):
    """(value, error estimate) of the real integral of f over [a, b]."""
    cfg = cfg or QuadratureConfig()
    if substitution is not None and not cfg.singularity_substitution:
        raise ValueError("Endpoint substitution requested while singularity_substitution is disabled")
    g, lo, hi = _substituted(f, a, b, substitution)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        result = integrate.quad(_integrand_guard(g), lo, hi, epsabs=cfg.abs_tol, epsrel=cfg.rel_tol,
                                limit=cfg.max_subdivisions, points=points, full_output=1)
    value, error = result[0], result[1]
    if len(result) > 3 and error > max(cfg.abs_tol, cfg.rel_tol * abs(value)):
        logging.debug(f"adaptive_integrate returning error '{result[3]}'")
        raise QuadratureError(f"Quadrature did not converge: {result[3]}", estimate=value, error=error)
    return value, error


def adaptive_integrate_complex(f, a, b, cfg=None, substitution=None, points=None):
    re, re_err = adaptive_integrate(lambda x: f(x).real, a, b, cfg, substitution, points)
    im, im_err = adaptive_integrate(lambda x: f(x).imag, a, b, cfg, substitution, points)
    return complex(re, im), math.hypot(re_err, im_err)


def bessel_integral_representation(n, x, cfg=None):
    """(1/pi) int_0^pi cos(n theta - x sin theta) d theta."""
    value, _ = adaptive_integrate(lambda t: math.cos(n * t - x * math.sin(t)), 0.0, math.pi, cfg)
    return value / math.pi


@dataclass(frozen=True)
class MarginalCurve:
    r: np.ndarray
    P: np.ndarray
    closed_form: np.ndarray | None
    is_integer: bool

    @property
    def max_relative_error(self):
        if self.closed_form is None:
            return None
        scale = max(float(np.max(np.abs(self.closed_form))), 1e-300)
        return float(np.max(np.abs(self.P - self.closed_form)) / scale)

    def rows(self):
        return list(zip(self.r.tolist(), self.P.tolist()))


def marginal_integrand_scale(labels, params):
    n_em, _ = norm_constants(labels, params)
    return 4.0 * math.pi * params.M * n_em


def marginal_closed_form(labels, params, r):
    """2 pi^2 M N J_m(p0 r/hbar)^2 for integer m."""
    if not labels.is_integer:
        raise ValueError("Closed-form marginal requires integer m")
    n_em, _ = norm_constants(labels, params)
    z = labels.p0(params) * np.asarray(r, dtype=float) / params.hbar
    return 2.0 * math.pi ** 2 * params.M * n_em * special.jv(abs(int(round(labels.m))), z) ** 2


def bessel_moments(c, n_max):
    """int_0^1 u^n J_0(c u) du for n = 0..n_max.

    Ascending series below c = 8, where upward recurrence cancels; above it the
    recurrence from int_0^c J_0 is stable.
    """
    if n_max < 0:
        raise ValueError(f"n_max must be nonnegative, got {n_max}")
    n = np.arange(n_max + 1, dtype=float)
    if c < 8.0:
        total, term, j = np.zeros(n_max + 1), 1.0, 0
        while abs(term) > 1e-18 or j < 2:
            total += term / (n + 2.0 * j + 1.0)
            j += 1
            term *= -(0.5 * c) ** 2 / (j * j)
        return total
    j0, j1 = special.j0(c), special.j1(c)
    k = np.empty(n_max + 1)
    k[0] = special.itj0y0(c)[0]
    if n_max >= 1:
        k[1] = c * j1
    for order in range(2, n_max + 1):
        k[order] = c ** order * j1 + (order - 1) * c ** (order - 1) * j0 - (order - 1) ** 2 * k[order - 2]
    return k / c ** (n + 1.0)


def _chebyshev_u(degree):
    prev, cur = Polynomial([1.0]), Polynomial([0.0, 2.0])
    if degree == 0:
        return prev
    for _ in range(degree - 1):
        prev, cur = cur, Polynomial([0.0, 2.0]) * cur - prev
    return cur


def _has_half_integer_closed_form(m):
    two_m = 2.0 * abs(m)
    return abs(two_m - round(two_m)) <= 1e-12 and round(two_m) % 2 == 1 and two_m <= 7.0


def marginal_half_integer_closed_form(labels, params, r):
    """m = k + 1/2: P = 4 pi M N (-1)^k int_0^1 U_2k(u) J_0(c u) du with c = 2 p0 r/hbar.

    cos((2k+1) theta) = (-1)^k cos(theta) U_2k(sin(theta)), so u = sin(theta) leaves
    Bessel moments.  At m = 1/2 this is int_0^c J_0 / c, which stays positive.
    """
    if not _has_half_integer_closed_form(labels.m):
        raise ValueError(f"Half-integer m with |m| <= 7/2 required, got {labels.m}")
    k = (int(round(2.0 * abs(labels.m))) - 1) // 2
    coefficients = _chebyshev_u(2 * k).coef
    c = 2.0 * labels.p0(params) * np.asarray(r, dtype=float) / params.hbar
    values = np.array([float(np.dot(coefficients, bessel_moments(ci, 2 * k))) for ci in np.atleast_1d(c)])
    return (-1) ** k * marginal_integrand_scale(labels, params) * values.reshape(np.shape(c))


def marginal_P_Em(labels, params, r_grid, cfg=None):
    """P(r) = 4 pi M N int_0^{pi/2} cos(2 m theta) J_0(2 p0 r sin(theta)/hbar) d theta."""
    cfg = cfg or QuadratureConfig()
    logging.info(f"marginal_P_Em called for E '{labels.E}' and m '{labels.m}' on {len(r_grid)} radii")
    p0 = labels.p0(params)
    scale = marginal_integrand_scale(labels, params)
    r = np.asarray(r_grid, dtype=float)
    if np.any(r < 0.0):
        raise ValueError("Radii must be nonnegative")
    values = np.empty_like(r)
    for idx, radius in enumerate(r):
        c = 2.0 * p0 * radius / params.hbar
        value, _ = adaptive_integrate(lambda t: math.cos(2.0 * labels.m * t) * special.j0(c * math.sin(t)),
                                      0.0, 0.5 * math.pi, cfg)
        values[idx] = scale * value
    if labels.is_integer:
        closed = marginal_closed_form(labels, params, r)
    elif _has_half_integer_closed_form(labels.m):
        closed = marginal_half_integer_closed_form(labels, params, r)
    else:
        closed = None
    return MarginalCurve(r, values, closed, labels.is_integer)


def mollified_fourier_cos(a, b, t, eps, cfg=None):
    """(numeric, analytic) for int cos(a x - b) exp(i t x) exp(-eps x^2) dx."""
    if not eps > 0.0:
        raise ValueError(f"Mollifier width must be positive, got {eps}")
    cfg = cfg or QuadratureConfig()
    half_width = math.sqrt(40.0 / eps)
    # even/odd split keeps the integrand real
    re, _ = adaptive_integrate(lambda x: math.cos(a * x - b) * math.cos(t * x) * math.exp(-eps * x * x),
                               -half_width, half_width, cfg, points=[0.0])
    im, _ = adaptive_integrate(lambda x: math.cos(a * x - b) * math.sin(t * x) * math.exp(-eps * x * x),
                               -half_width, half_width, cfg, points=[0.0])
    analytic = 0.5 * math.sqrt(math.pi / eps) * (
        complex(math.cos(b), -math.sin(b)) * math.exp(-(t + a) ** 2 / (4.0 * eps))
        + complex(math.cos(b), math.sin(b)) * math.exp(-(t - a) ** 2 / (4.0 * eps))
    )
    return complex(re, im), analytic


@dataclass(frozen=True)
class TestFunction:
    """phi(chi, H, L) = P(chi) * h(H) * exp(-L^2 / (2 sigma_L^2))."""

    __test__ = False  # keep pytest from collecting this

    harmonics: tuple = ((0, 1.0), (1, 0.25), (-1, 0.25))  # P(chi) = sum c_n e^{i n chi}
    H_center: float = 1.0
    H_width: float = 0.5
    sigma_L: float = 1.0

    def __post_init__(self):
        if not self.sigma_L > 0.0:
            raise ValueError("sigma_L must be positive")
        if not self.H_width > 0.0:
            raise ValueError("H_width must be positive")
        if any(int(n) != n for n, _ in self.harmonics):
            raise ValueError("Harmonic indices must be integers")

    def chi_factor(self, chi):
        return sum(c * np.exp(1j * n * np.asarray(chi)) for n, c in self.harmonics)

    def H_factor(self, H):
        return np.exp(-0.5 * ((np.asarray(H) - self.H_center) / self.H_width) ** 2)

    def L_factor(self, L):
        return np.exp(-0.5 * (np.asarray(L) / self.sigma_L) ** 2)

    def __call__(self, chi, H, L):
        return self.chi_factor(chi) * self.H_factor(H) * self.L_factor(L)

    def chi_moment(self, nu):
        """int_0^{2 pi} P(chi) e^{i nu chi} d chi, exact for any real nu."""
        total = 0j
        for n, c in self.harmonics:
            w = n + nu
            if abs(w) < 1e-14:
                total += c * TWO_PI
            else:
                total += c * (complex(math.cos(TWO_PI * w), math.sin(TWO_PI * w)) - 1.0) / (1j * w)
        return total

    def L_gaussian_integral(self, k):
        """int exp(-L^2/(2 sigma^2)) e^{i k L} dL = sqrt(2 pi) sigma exp(-k^2 sigma^2 / 2)."""
        return math.sqrt(TWO_PI) * self.sigma_L * math.exp(-0.5 * (k * self.sigma_L) ** 2)

    def L_cos_integral(self, a, beta):
        """int cos(a L - beta) exp(-L^2/(2 sigma^2)) dL."""
        return self.L_gaussian_integral(a) * math.cos(beta)


def default_test_function(E_tilde=1.0, hbar=1.0):
    return TestFunction(harmonics=((0, 1.0), (1, 0.25), (-1, 0.25)), H_center=E_tilde, H_width=0.5 * E_tilde,
                        sigma_L=hbar)


def radial_pairing(labels, params, phi, cfg=None):
    """int_0^E dH int dL h(H) e^{-L^2/2s^2} cos(2L/hbar sqrt((E-H)/H) - (m+m') theta + D) / sqrt(H(E-H)).

    H = E sin^2 u removes both endpoint singularities: dH / sqrt(H(E-H)) = 2 du, theta = pi/2 - u,
    and the L integral is done in closed form.
    """
    cfg = cfg or QuadratureConfig()
    if not cfg.singularity_substitution:
        logging.debug("radial_pairing returning error 'singular family without substitution'")
        raise ValueError("The energy-angular family is singular at H = 0 and H = E; enable singularity_substitution")
    E, hbar = labels.E, params.hbar
    s = labels.m + labels.m_prime

    def integrand(u):
        if u <= 0.0:
            return 0.0
        H = E * math.sin(u) ** 2
        a = 2.0 / hbar * math.cos(u) / math.sin(u)
        theta = 0.5 * math.pi - u
        return 2.0 * float(phi.H_factor(H)) * phi.L_cos_integral(a, s * theta - labels.D_offset)

    value, _ = adaptive_integrate(integrand, 0.0, 0.5 * math.pi, cfg)
    return value


def weak_pairing(family, phi, cfg=None, params=None):
    """int d chi dH dL phi * family over chi in [0, 2 pi), H > 0 and all L."""
    cfg = cfg or QuadratureConfig()
    if isinstance(family, WignerSpec):
        params = family.params
        family = family.kind
    if isinstance(family, EnergyAngular):
        family = family.labels
    if isinstance(family, EigenLabels):
        params = params or PhysParams()
        _, n_emmp = norm_constants(family, params)
        return n_emmp * phi.chi_moment(family.m - family.m_prime) * radial_pairing(family, params, phi, cfg)
    if isinstance(family, MomentumEigenDescriptor):
        return _mollified_momentum_pairing(family, phi, cfg)
    raise TypeError(f"Unsupported family {type(family).__name__}")


def _mollified_momentum_pairing(desc, phi, cfg):
    if desc.degenerate:
        raise ValueError("Momentum eigenstate at rest cannot be paired in the (T, chi, H, L) chart")
    eps = desc.epsilon
    norm = 1.0 / (math.sqrt(TWO_PI) * eps)
    span = 10.0 * eps
    chi_value, _ = adaptive_integrate_complex(
        lambda c: complex(phi.chi_factor(c)) * norm * math.exp(-0.5 * ((c - desc.chi0) / eps) ** 2),
        desc.chi0 - span, desc.chi0 + span, cfg)
    lo = max(1e-300, desc.E_tilde - span)
    H_value, _ = adaptive_integrate(
        lambda h: float(phi.H_factor(h)) * norm * math.exp(-0.5 * ((h - desc.E_tilde) / eps) ** 2),
        lo, desc.E_tilde + span, cfg)
    return desc.N * chi_value * H_value * phi.L_gaussian_integral(0.0)


def momentum_pairing_limit(desc, phi):
    """N int dL phi(chi0, E~, L)."""
    return desc.N * complex(phi.chi_factor(desc.chi0)) * float(phi.H_factor(desc.E_tilde)) * phi.L_gaussian_integral(0.0)


@dataclass
class MollifierTrend:
    epsilons: tuple
    errors: list = field(default_factory=list)

    @property
    def observed_orders(self):
        out = []
        for (e1, r1), (e2, r2) in zip(zip(self.epsilons, self.errors), zip(self.epsilons[1:], self.errors[1:])):
            if r1 > 0 and r2 > 0:
                out.append(math.log(r1 / r2) / math.log(e1 / e2))
        return out


def mollifier_trend(px0, py0, params, phi, schedule=MOLLIFIER_SCHEDULE, cfg=None):
    """Pairing error against the eps -> 0 limit along the mollifier schedule."""
    trend = MollifierTrend(tuple(schedule))
    for eps in schedule:
        desc = momentum_eigenstate(px0, py0, params, epsilon=eps)
        trend.errors.append(abs(weak_pairing(desc, phi, cfg) - momentum_pairing_limit(desc, phi)))
    return trend
