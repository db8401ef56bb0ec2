"""
Reference Moyal products: the bidifferential series and the integral formula on
Gaussian-times-polynomial functions.  Both are independent of formal_weyl and
serve as its oracle.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import product
from math import factorial

import numpy as np
import sympy as sp

from .symbolic_core import ObservableExpr, parse_observable
from .symplectic_charts import get_chart, X, Y, PX, PY, HBAR

I = sp.I


def _to_sympy(f, chart):
    if isinstance(f, str):
        f = parse_observable(f)
    if isinstance(f, ObservableExpr):
        return chart.sympy_observable(f)
    return sp.sympify(f)


def _pairs(chart):
    syms = chart.symbols
    n = len(syms) // 2
    return [(syms[q], syms[q + n]) for q in range(n)]


def _bidifferential_term(f, g, pairs, k):
    """Order-k term of exp((i hbar/2) sum (d_q^L d_p^R - d_p^L d_q^R)) applied to f (x) g."""
    total = sp.Integer(0)
    n = len(pairs)
    # distribute k over (a_q, b_q) per pair
    for split in product(range(k + 1), repeat=2 * n):
        if sum(split) != k:
            continue
        weight = Fraction(1)
        left_args, right_args = [], []
        for q, (qs, ps) in enumerate(pairs):
            a, b = split[2 * q], split[2 * q + 1]
            weight *= Fraction((-1) ** b, factorial(a) * factorial(b))
            left_args += [qs] * a + [ps] * b
            right_args += [ps] * a + [qs] * b
        left = sp.diff(f, *left_args) if left_args else f
        if left == 0:
            continue
        right = sp.diff(g, *right_args) if right_args else g
        if right == 0:
            continue
        total += sp.Rational(weight.numerator, weight.denominator) * left * right
    return (I * HBAR / 2) ** k * total


def moyal_differential(f, g, order=6, chart="cartesian"):
    """sum_{k <= order} of the Moyal bidifferential series; exact once a polynomial factor runs out of derivatives."""
    chart = get_chart(chart)
    logging.debug(f"moyal_differential called for f '{f}' and g '{g}' and order '{order}'")
    fs, gs = _to_sympy(f, chart), _to_sympy(g, chart)
    pairs = _pairs(chart)
    result = sum((_bidifferential_term(fs, gs, pairs, k) for k in range(order + 1)), sp.Integer(0))
    return sp.expand(result)


def moyal_bracket(f, g, order=6, chart="cartesian"):
    chart = get_chart(chart)
    commutator = moyal_differential(f, g, order, chart) - moyal_differential(g, f, order, chart)
    return sp.expand(sp.cancel(sp.expand(commutator / (I * HBAR))))


def poisson_bracket_symbolic(f, g, chart="cartesian"):
    chart = get_chart(chart)
    fs, gs = _to_sympy(f, chart), _to_sympy(g, chart)
    return sp.expand(sum(sp.diff(fs, q) * sp.diff(gs, p) - sp.diff(fs, p) * sp.diff(gs, q) for q, p in _pairs(chart)))


CARTESIAN_ORDER = (X, Y, PX, PY)


@dataclass(frozen=True)
class GaussianPolynomial:
    """poly(v) * exp(-1/2 v^T A v + b^T v) over v = (x, y, px, py)."""

    poly: object  # sympy expression or observable text in x, y, px, py
    A: tuple  # 4x4 rational entries
    b: tuple = (0, 0, 0, 0)

    def __post_init__(self):
        poly = self.poly
        if isinstance(poly, (str, ObservableExpr)):
            poly = _to_sympy(poly, get_chart("cartesian"))
        object.__setattr__(self, "poly", sp.sympify(poly))
        A = tuple(tuple(Fraction(v) for v in row) for row in self.A)
        b = tuple(Fraction(v) for v in self.b)
        if len(A) != 4 or any(len(row) != 4 for row in A) or len(b) != 4:
            raise ValueError("GaussianPolynomial needs a 4x4 form and a 4-vector")
        if any(A[i][j] != A[j][i] for i in range(4) for j in range(4)):
            raise ValueError("Quadratic form must be symmetric")
        if np.min(np.linalg.eigvalsh(self.matrix_of(A))) < -1e-12:
            raise ValueError("Quadratic form must be positive semidefinite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @staticmethod
    def matrix_of(A):
        return np.array([[float(v) for v in row] for row in A])

    @property
    def matrix(self):
        return self.matrix_of(self.A)

    @property
    def vector(self):
        return np.array([float(v) for v in self.b])

    def sympy_expr(self):
        v = sp.Matrix(CARTESIAN_ORDER)
        A = sp.Matrix([[sp.Rational(x.numerator, x.denominator) for x in row] for row in self.A])
        b = sp.Matrix([sp.Rational(x.numerator, x.denominator) for x in self.b])
        return self.poly * sp.exp(-(v.T * A * v)[0] / 2 + (b.T * v)[0])

    def evaluate(self, pt):
        v = np.array(pt, dtype=float)
        value = complex(self.poly.subs(dict(zip(CARTESIAN_ORDER, v))))
        return value * np.exp(-0.5 * v @ self.matrix @ v + self.vector @ v)

    def shifted_poly(self, z):
        """Poly(z + u) as {exponent tuple: complex} in the shift u."""
        u = sp.symbols("u0:4")
        shifted = sp.expand(self.poly.subs({s: zi + ui for s, zi, ui in zip(CARTESIAN_ORDER, z, u)}, simultaneous=True))
        out = {}
        for monom, coeff in sp.Poly(shifted, *u).terms():
            out[monom] = complex(coeff)
        return out


def _gaussian_moments(mean, cov):
    @lru_cache(maxsize=None)
    def moment(alpha):
        for i, e in enumerate(alpha):
            if e:
                break
        else:
            return 1.0 + 0j
        reduced = alpha[:i] + (e - 1,) + alpha[i + 1:]
        total = mean[i] * moment(reduced)
        for j, ej in enumerate(reduced):
            if ej:
                lowered = reduced[:j] + (ej - 1,) + reduced[j + 1:]
                total += cov[i, j] * ej * moment(lowered)
        return total
    return moment


def moyal_integral_gaussian(f, g, pt, hbar=1.0):
    """(f * g)(pt) from the integral formula, evaluated in closed form by completing the square."""
    logging.debug(f"moyal_integral_gaussian called at pt '{tuple(pt)}' and hbar '{hbar}'")
    z = np.array(pt, dtype=float)
    n = 2
    J = np.zeros((4, 4))
    for q in range(n):
        J[q, q + n] = 1.0
        J[q + n, q] = -1.0
    c = -2j / hbar
    Q = np.zeros((8, 8), dtype=complex)
    Q[:4, :4] = f.matrix
    Q[4:, 4:] = g.matrix
    Q[:4, 4:] = c * J
    Q[4:, :4] = c * J.T
    eigenvalues = np.linalg.eigvals(Q)
    if np.min(np.abs(eigenvalues)) < 1e-14 or np.min(eigenvalues.real) < -1e-12:
        logging.debug("moyal_integral_gaussian returning error 'non-convergent quadratic form'")
        raise ValueError("Combined quadratic form does not give a convergent integral")
    B = np.concatenate([f.vector - f.matrix @ z, g.vector - g.matrix @ z])
    cov = np.linalg.inv(Q)
    mean = cov @ B
    det_factor = np.prod(1.0 / np.sqrt(eigenvalues))
    constant = (-0.5 * z @ f.matrix @ z + f.vector @ z) + (-0.5 * z @ g.matrix @ z + g.vector @ z)
    prefactor = (2.0 * np.pi) ** 4 * det_factor * np.exp(0.5 * B @ mean + constant) / (np.pi * hbar) ** (2 * n)
    moment = _gaussian_moments(mean, cov)
    total = 0j
    for mf, cf in f.shifted_poly(z).items():
        for mg, cg in g.shifted_poly(z).items():
            total += cf * cg * moment(tuple(mf) + tuple(mg))
    return complex(prefactor * total)
