"""
Formal Weyl algebra over a Darboux chart and the flat-section construction.

A WeylElement is a finite sum of terms keyed by (k, mu, S, jet):

    k    power of hbar
    mu   fiber multidegree over y^1..y^2n
    S    strictly increasing tuple of form indices (dx^S)
    jet  None, or a multi-index standing for a derivative of an undetermined g

Coefficients are ComplexCoeff pairs of exact rational functions.  The fiber
product contracts with the Poisson bivector (Pi^{q,q+n} = +1), which gives
y^q o y^{q+n} = y^q y^{q+n} + i hbar/2 and makes the recursion a = f + delta^-1(d a)
produce sections that are flat for D = d - delta.
"""

import logging
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import lru_cache
from itertools import product
from math import factorial, prod

import sympy as sp

from .symbolic_core import RationalCoeff, ObservableExpr, parse_observable, substitute, UnknownIdentifierError
from .symplectic_charts import get_chart, transform_connection, SYMBOLS

# Definitions of the conserved quantities in Cartesian variables.
CARTESIAN_DEFINITIONS = {
    "H": "(px^2 + py^2)/(2*M)",
    "L": "x*py - y*px",
    "T": "M*(x*px + y*py)/(px^2 + py^2)",
}


class ChartMismatchError(ValueError):
    pass


class NegativeHbarPowerError(ArithmeticError):
    pass


class TruncationError(ValueError):
    pass


@dataclass(frozen=True)
class TruncationConfig:
    max_grade: int = 8
    max_hbar: int = 3
    max_fiber_degree: int | None = None

    def __post_init__(self):
        if not (self.max_grade >= 2 * self.max_hbar >= 0):
            raise ValueError(f"Truncation needs max_grade >= 2*max_hbar >= 0, got G={self.max_grade}, K={self.max_hbar}")
        if self.max_fiber_degree is not None and self.max_fiber_degree < 0:
            raise ValueError("max_fiber_degree must be nonnegative")

    def admits(self, k, degree):
        if k > self.max_hbar or degree + 2 * k > self.max_grade:
            return False
        return self.max_fiber_degree is None or degree <= self.max_fiber_degree

    def widened(self):
        cap = None if self.max_fiber_degree is None else self.max_fiber_degree + 2
        return TruncationConfig(self.max_grade + 2, self.max_hbar + 1, cap)


@dataclass(frozen=True, eq=False)
class ComplexCoeff:
    re: RationalCoeff
    im: RationalCoeff

    @classmethod
    def real(cls, value):
        return cls(value, RationalCoeff.zero(value.variables))

    @classmethod
    def constant(cls, variables, re=0, im=0):
        return cls(RationalCoeff.constant(variables, re), RationalCoeff.constant(variables, im))

    def is_zero(self):
        return self.re.is_zero() and self.im.is_zero()

    def is_real(self):
        return self.im.is_zero()

    def __add__(self, other):
        return ComplexCoeff(self.re + other.re, self.im + other.im)

    def __sub__(self, other):
        return ComplexCoeff(self.re - other.re, self.im - other.im)

    def __neg__(self):
        return ComplexCoeff(-self.re, -self.im)

    def __mul__(self, other):
        if isinstance(other, ComplexCoeff):
            a, b, c, d = self.re, self.im, other.re, other.im
            if b.is_zero() and d.is_zero():
                return ComplexCoeff(a * c, b)
            if b.is_zero():
                return ComplexCoeff(a * c, a * d)
            if d.is_zero():
                return ComplexCoeff(a * c, b * c)
            return ComplexCoeff(a * c - b * d, a * d + b * c)
        return ComplexCoeff(self.re * other, self.im * other)

    __rmul__ = __mul__

    def times_i_power(self, power):
        power %= 4
        if power == 0:
            return self
        if power == 1:
            return ComplexCoeff(-self.im, self.re)
        if power == 2:
            return ComplexCoeff(-self.re, -self.im)
        return ComplexCoeff(self.im, -self.re)

    def conjugate(self):
        return ComplexCoeff(self.re, -self.im)

    def diff(self, var):
        return ComplexCoeff(self.re.diff(var), self.im.diff(var))

    def evaluate(self, env):
        im = 0.0 if self.im.is_zero() else self.im.evaluate(env)
        return complex(self.re.evaluate(env), im)

    def to_sympy(self, symbols=None):
        return self.re.to_sympy(symbols) + sp.I * self.im.to_sympy(symbols)

    def __eq__(self, other):
        if not isinstance(other, ComplexCoeff):
            return NotImplemented
        return self.re == other.re and self.im == other.im

    def __hash__(self):
        return hash((self.re, self.im))

    def __str__(self):
        if self.im.is_zero():
            return str(self.re)
        imag = _imaginary_text(self.im)
        if self.re.is_zero():
            return imag
        return f"({self.re} + {imag})"

    def __repr__(self):
        return f"ComplexCoeff({self})"


def _imaginary_text(im):
    if im.is_constant():
        value = im.as_fraction()
        sign = "-" if value < 0 else ""
        value = abs(value)
        if value == 1:
            return f"{sign}i"
        if value.numerator == 1:
            return f"({sign}i/{value.denominator})"
        if value.denominator == 1:
            return f"({sign}{value.numerator}*i)"
        return f"({sign}{value.numerator}*i/{value.denominator})"
    return f"i*({im})"


def _hbar_factor(k):
    return "hbar" if k == 1 else f"hbar^{k}"


@dataclass(frozen=True)
class HbarSeries:
    """A finite series sum_k c_k hbar^k with exact complex coefficients."""

    terms: tuple  # ((k, ComplexCoeff), ...) ascending k, nonzero only

    @classmethod
    def from_dict(cls, data):
        return cls(tuple((k, c) for k, c in sorted(data.items(), key=lambda kv: kv[0]) if not c.is_zero()))

    def coefficient(self, k):
        for power, c in self.terms:
            if power == k:
                return c
        return None

    def is_zero(self):
        return not self.terms

    def to_sympy(self, symbols=None, hbar=None):
        symbols = symbols or SYMBOLS
        h = symbols["hbar"] if hbar is None else hbar
        return sum((c.to_sympy(symbols) * h ** k for k, c in self.terms), sp.Integer(0))

    def evaluate(self, env, hbar):
        return sum(c.evaluate(env) * hbar ** k for k, c in self.terms)

    def __str__(self):
        if not self.terms:
            return "0"
        pieces = []
        for k, c in self.terms:
            text = str(c)
            if k == 0:
                pieces.append(text)
                continue
            factor = _hbar_factor(k)
            if text == "1":
                pieces.append(factor)
            elif text == "-1":
                pieces.append(f"-{factor}")
            elif text.startswith("(") or text.lstrip("-").replace("_", "").isalnum():
                pieces.append(f"{text}*{factor}")
            else:
                pieces.append(f"({text})*{factor}")
        out = pieces[0]
        for piece in pieces[1:]:
            out += f" - {piece[1:]}" if piece.startswith("-") else f" + {piece}"
        return out


class _Undetermined:
    def __repr__(self):
        return "g"


# The undetermined function g in operator extraction.
UNDETERMINED = _Undetermined()


def _unit(n2, index):
    return tuple(1 if i == index else 0 for i in range(n2))


def _add_index(mu, index):
    return mu[:index] + (mu[index] + 1,) + mu[index + 1:]


def _accumulate(target, key, coeff):
    current = target.get(key)
    coeff = coeff if current is None else current + coeff
    if coeff.is_zero():
        target.pop(key, None)
    else:
        target[key] = coeff


class WeylElement:
    """An immutable element of the truncated Weyl algebra (with forms) over a chart."""

    __slots__ = ("chart", "terms", "truncation")

    def __init__(self, chart, terms, truncation):
        self.chart = chart
        self.truncation = truncation
        self.terms = {key: c for key, c in terms.items()
                      if not c.is_zero() and truncation.admits(key[0], sum(key[1]))}

    @property
    def ring(self):
        return self.chart.ring_variables

    def is_zero(self):
        return not self.terms

    def _check(self, other):
        if other.chart is not self.chart:
            raise ChartMismatchError(f"Chart mismatch: {self.chart.name} vs {other.chart.name}")

    def __add__(self, other):
        self._check(other)
        out = dict(self.terms)
        for key, c in other.terms.items():
            _accumulate(out, key, c)
        return WeylElement(self.chart, out, self.truncation)

    def __sub__(self, other):
        return self + (-other)

    def __neg__(self):
        return WeylElement(self.chart, {k: -c for k, c in self.terms.items()}, self.truncation)

    def scale(self, factor):
        return WeylElement(self.chart, {k: c * factor for k, c in self.terms.items()}, self.truncation)

    def __eq__(self, other):
        if not isinstance(other, WeylElement):
            return NotImplemented
        return self.chart is other.chart and self.terms == other.terms

    def __repr__(self):
        return f"WeylElement({self.chart.name}, {len(self.terms)} terms)"

    def truncated(self, truncation):
        return WeylElement(self.chart, self.terms, truncation)

    def form_degrees(self):
        return sorted({len(key[2]) for key in self.terms})

    def part(self, fiber_degree=None, form_degree=None):
        return WeylElement(self.chart, {
            key: c for key, c in self.terms.items()
            if (fiber_degree is None or sum(key[1]) == fiber_degree)
            and (form_degree is None or len(key[2]) == form_degree)
        }, self.truncation)

    def lines(self):
        names = self.chart.variables
        out = []
        for (k, mu, s, jet), c in sorted(self.terms.items(), key=lambda kv: (kv[0][0], sum(kv[0][1]), kv[0][1], kv[0][2], kv[0][3] or ())):
            fiber = "*".join(f"y{i + 1}^{e}" if e > 1 else f"y{i + 1}" for i, e in enumerate(mu) if e) or "1"
            forms = "^".join(f"d{names[i]}" for i in s)
            jet_text = "" if jet is None else " g" + "".join(f"_{names[i]}" * e for i, e in enumerate(jet))
            out.append(f"[hbar^{k}] ({c}) {fiber}{' ' + forms if forms else ''}{jet_text}")
        return out


def weyl_element(chart, terms, truncation=None):
    """Build an element from {(k, mu, S[, jet]): coefficient}; coefficients may be text, RationalCoeff or ComplexCoeff."""
    chart = get_chart(chart)
    truncation = truncation or TruncationConfig()
    out = {}
    for key, value in terms.items():
        k, mu, s = key[:3]
        jet = key[3] if len(key) > 3 else None
        if list(s) != sorted(set(s)):
            raise ValueError(f"Form indices must be strictly increasing, got {s}")
        _accumulate(out, (k, tuple(mu), tuple(s), jet), _as_complex(value, chart))
    return WeylElement(chart, out, truncation)


def _as_complex(value, chart):
    if isinstance(value, ComplexCoeff):
        return value
    if isinstance(value, RationalCoeff):
        return ComplexCoeff.real(value)
    if isinstance(value, (int, Fraction)):
        return ComplexCoeff.constant(chart.ring_variables, value)
    return ComplexCoeff.real(observable_coeff(value, chart))


def observable_coeff(f, chart):
    """The exact coefficient of an observable in `chart`; H, L and T are expanded in the Cartesian chart."""
    chart = get_chart(chart)
    expr = parse_observable(f) if isinstance(f, str) else f
    if not isinstance(expr, ObservableExpr):
        raise TypeError(f"Expected an observable, got {type(f).__name__}")
    if "hbar" in expr.identifiers:
        raise ValueError("Observables lifted to the Weyl algebra must not contain hbar")
    if chart.is_cartesian:
        expr = substitute(expr, {k: v for k, v in CARTESIAN_DEFINITIONS.items() if k in expr.identifiers})
    foreign = expr.identifiers - set(chart.ring_variables)
    if foreign:
        raise UnknownIdentifierError(f"Identifiers {sorted(foreign)} are not rational in the {chart.name} chart")
    return expr.to_coeff(chart.ring_variables)


@lru_cache(maxsize=None)
def _falling(n, k):
    out = 1
    for i in range(k):
        out *= n - i
    return out


@lru_cache(maxsize=None)
def _fiber_contractions(mu, nu):
    """Terms of y^mu o y^nu as ((kk, result multidegree, rational factor), ...); the full coefficient is factor * (i hbar)^kk."""
    n = len(mu) // 2
    per_pair = []
    for q in range(n):
        options = []
        for a in range(min(mu[q], nu[q + n]) + 1):
            for b in range(min(mu[q + n], nu[q]) + 1):
                coeff = Fraction(_falling(mu[q], a) * _falling(nu[q + n], a) * _falling(mu[q + n], b) * _falling(nu[q], b),
                                 factorial(a) * factorial(b))
                if b % 2:
                    coeff = -coeff
                options.append((a, b, coeff))
        per_pair.append(options)
    out = {}
    for combo in product(*per_pair):
        kk = sum(a + b for a, b, _ in combo)
        result = [m + v for m, v in zip(mu, nu)]
        for q, (a, b, _) in enumerate(combo):
            result[q] -= a + b
            result[q + n] -= a + b
        key = (kk, tuple(result))
        out[key] = out.get(key, 0) + prod(c for _, _, c in combo) / 2 ** kk
    return tuple((kk, res, c) for (kk, res), c in sorted(out.items()) if c)


@lru_cache(maxsize=None)
def _wedge(s1, s2):
    """dx^s1 ^ dx^s2 as (sign, sorted indices), or None when an index repeats."""
    if set(s1) & set(s2):
        return None
    merged = list(s1 + s2)
    inversions = sum(1 for i in range(len(merged)) for j in range(i + 1, len(merged)) if merged[i] > merged[j])
    return (-1 if inversions % 2 else 1), tuple(sorted(merged))


def _multiply_terms(key1, c1, key2, c2, truncation, out, sign=1):
    k1, mu1, s1, j1 = key1
    k2, mu2, s2, j2 = key2
    wedge = _wedge(s1, s2)
    if wedge is None:
        return
    if j1 is not None and j2 is not None:
        raise ValueError("Products of two undetermined factors are not supported")
    if sum(mu1) + sum(mu2) + 2 * (k1 + k2) > truncation.max_grade:
        return
    form_sign, s = wedge
    jet = j1 if j1 is not None else j2
    base = c1 * c2
    for kk, mu, factor in _fiber_contractions(mu1, mu2):
        k = k1 + k2 + kk
        if not truncation.admits(k, sum(mu)):
            continue
        _accumulate(out, (k, mu, s, jet), (base * (factor * form_sign * sign)).times_i_power(kk))


def _product(a, b, truncation):
    out = {}
    for key1, c1 in a.terms.items():
        for key2, c2 in b.terms.items():
            _multiply_terms(key1, c1, key2, c2, truncation, out)
    return out


def _commutator(a, b, truncation):
    out = {}
    for key1, c1 in a.terms.items():
        for key2, c2 in b.terms.items():
            _multiply_terms(key1, c1, key2, c2, truncation, out)
            sign = -1 if (len(key1[2]) * len(key2[2])) % 2 == 0 else 1
            _multiply_terms(key2, c2, key1, c1, truncation, out, sign)
    return out


def graded_product(a, b, mode="product"):
    """a . b (fiber product with exterior multiplication), or the graded commutator when mode='commutator'."""
    a._check(b)
    truncation = a.truncation if a.truncation == b.truncation else TruncationConfig(
        min(a.truncation.max_grade, b.truncation.max_grade),
        min(a.truncation.max_hbar, b.truncation.max_hbar),
        None if a.truncation.max_fiber_degree is None and b.truncation.max_fiber_degree is None else
        min(x for x in (a.truncation.max_fiber_degree, b.truncation.max_fiber_degree) if x is not None),
    )
    if mode == "product":
        terms = _product(a, b, truncation)
    elif mode == "commutator":
        terms = _commutator(a, b, truncation)
    else:
        raise ValueError(f"Unknown product mode '{mode}'")
    return WeylElement(a.chart, terms, truncation)


def project_P(a):
    return WeylElement(a.chart, {key: c for key, c in a.terms.items() if not any(key[1])}, a.truncation)


def symbol(a):
    """sigma(a): the y-free, form-free, determined part as an hbar series."""
    data = {}
    for (k, mu, s, jet), c in a.terms.items():
        if not any(mu) and not s and jet is None:
            data[k] = c
    return HbarSeries.from_dict(data)


def delta_inv(a):
    out = {}
    for (k, mu, s, jet), c in a.terms.items():
        q = len(s)
        if q == 0:
            continue
        weight = sum(mu) + q
        for r, j in enumerate(s):
            sign = -1 if r % 2 else 1
            _accumulate(out, (k, _add_index(mu, j), s[:r] + s[r + 1:], jet), c * Fraction(sign, weight))
    return WeylElement(a.chart, out, a.truncation)


def delta(a):
    """dx^l ^ d/dy^l."""
    out = {}
    for (k, mu, s, jet), c in a.terms.items():
        for l, e in enumerate(mu):
            if not e or l in s:
                continue
            sign, new_s = _wedge((l,), s)
            new_mu = mu[:l] + (e - 1,) + mu[l + 1:]
            _accumulate(out, (k, new_mu, new_s, jet), c * (e * sign))
    return WeylElement(a.chart, out, a.truncation)


def exterior_derivative(a):
    chart = a.chart
    n2 = chart.dimension
    out = {}
    for (k, mu, s, jet), c in a.terms.items():
        for index, var in enumerate(chart.variables):
            if index in s:
                continue
            sign, new_s = _wedge((index,), s)
            derivative = c.diff(var)
            if not derivative.is_zero():
                _accumulate(out, (k, mu, new_s, jet), derivative * sign)
            if jet is not None:
                _accumulate(out, (k, mu, new_s, tuple(j + u for j, u in zip(jet, _unit(n2, index)))), c * sign)
    return WeylElement(chart, out, a.truncation)


@lru_cache(maxsize=None)
def _connection_terms(chart_name):
    chart = get_chart(chart_name)
    table = transform_connection(chart)
    n2 = chart.dimension
    terms = {}
    for k in range(n2):
        for a in range(n2):
            for b in range(a, n2):
                gamma = table[(a, b, k)]
                if gamma.is_zero():
                    continue
                weight = 1 if a < b else Fraction(1, 2)
                mu = tuple(x + y for x, y in zip(_unit(n2, a), _unit(n2, b)))
                terms[(0, mu, (k,), None)] = ComplexCoeff.real(gamma * weight)
    return terms


@lru_cache(maxsize=None)
def _omega_terms(chart_name):
    chart = get_chart(chart_name)
    n2 = chart.dimension
    terms = {}
    for i in range(n2):
        for j in range(n2):
            if chart.omega[i, j]:
                terms[(0, _unit(n2, i), (j,), None)] = ComplexCoeff.constant(chart.ring_variables, int(chart.omega[i, j]))
    return terms


def connection_form(chart, truncation=None):
    """Gamma = 1/2 gamma_ijk y^i y^j dx^k."""
    chart = get_chart(chart)
    truncation = (truncation or TruncationConfig()).widened()
    return WeylElement(chart, _connection_terms(chart.name), truncation)


def omega_form(chart, truncation=None):
    """omega_ij y^i dx^j."""
    chart = get_chart(chart)
    truncation = (truncation or TruncationConfig()).widened()
    return WeylElement(chart, _omega_terms(chart.name), truncation)


def _i_over_hbar_commutator(x, a):
    wide = a.truncation.widened()
    terms = _commutator(x.truncated(wide), a.truncated(wide), wide)
    out = {}
    for (k, mu, s, jet), c in terms.items():
        if k == 0:
            logging.debug(f"_i_over_hbar_commutator returning error 'hbar^-1 term {mu} {s}'")
            raise NegativeHbarPowerError(f"Commutator left an hbar^-1 term at fiber degree {mu}, forms {s}")
        _accumulate(out, (k - 1, mu, s, jet), c.times_i_power(1))
    return WeylElement(a.chart, out, a.truncation)


def apply_connection(a, mode="symplectic"):
    """Symplectic connection d + (i/hbar)[Gamma, .]; the abelian mode adds (i/hbar)[omega_ij y^i dx^j, .]."""
    if mode not in ("symplectic", "abelian"):
        raise ValueError(f"Unknown connection mode '{mode}'")
    result = exterior_derivative(a)
    gamma = connection_form(a.chart, a.truncation)
    if gamma.terms:
        result = result + _i_over_hbar_commutator(gamma, a)
    if mode == "abelian":
        result = result + _i_over_hbar_commutator(omega_form(a.chart, a.truncation), a)
    return result


def _seed(f, chart, truncation):
    n2 = chart.dimension
    zero = (0,) * n2
    if f is UNDETERMINED:
        one = ComplexCoeff.constant(chart.ring_variables, 1)
        return WeylElement(chart, {(0, zero, (), zero): one}, truncation)
    return WeylElement(chart, {(0, zero, (), None): _as_complex(f, chart)}, truncation)


def sigma_inv(f, trunc=None, chart="action-angle", max_fiber_degree=None):
    """The flat section lifting `f`: fixed point of a = f + delta^-1(d a) under the truncation."""
    chart = get_chart(chart)
    truncation = trunc or TruncationConfig()
    if max_fiber_degree is not None:
        truncation = replace(truncation, max_fiber_degree=max_fiber_degree)
    logging.debug(f"sigma_inv called for '{f}' in chart '{chart.name}' with {truncation}")
    result = increment = _seed(f, chart, truncation)
    for _ in range(truncation.max_grade + 2):
        increment = delta_inv(apply_connection(increment, "symplectic"))
        if increment.is_zero():
            return result
        result = result + increment
    logging.debug("sigma_inv returning error 'no fixed point within the grade bound'")
    raise RuntimeError("sigma_inv did not reach a fixed point within the grade bound")


def is_flat_section(a):
    """D(a) = 0 on every grade the truncation fully determines."""
    residual = apply_connection(a, "abelian")
    cap = a.truncation.max_fiber_degree
    for (k, mu, s, jet) in residual.terms:
        degree = sum(mu)
        if degree + 2 * k < a.truncation.max_grade and (cap is None or degree < cap):
            return False
    return True


@dataclass(frozen=True)
class DifferentialOperator:
    """g -> sum coefficient * hbar^k * d^alpha g over chart variables."""

    chart_name: str
    variables: tuple
    ring_variables: tuple
    terms: tuple  # (((alpha, k), ComplexCoeff), ...) in deterministic order

    @staticmethod
    def order_key(key):
        alpha, k = key
        return (k, sum(alpha), tuple(-a for a in alpha))

    @classmethod
    def from_dict(cls, chart, data):
        chart = get_chart(chart)
        items = sorted(((key, c) for key, c in data.items() if not c.is_zero()), key=lambda kv: cls.order_key(kv[0]))
        return cls(chart.name, chart.variables, chart.ring_variables, tuple(items))

    def as_dict(self):
        return dict(self.terms)

    def coefficient(self, alpha, k):
        return self.as_dict().get((tuple(alpha), k))

    @property
    def hbar_order(self):
        return max((k for (_, k), _ in self.terms), default=0)

    def hbar_part(self, k):
        return DifferentialOperator(self.chart_name, self.variables, self.ring_variables,
                                    tuple(item for item in self.terms if item[0][1] == k))

    def is_zero(self):
        return not self.terms

    def apply(self, g):
        """Exact hbar series of the operator applied to a RationalCoeff or observable."""
        if not isinstance(g, RationalCoeff):
            g = observable_coeff(g, self.chart_name)
        data = {}
        for (alpha, k), c in self.terms:
            derivative = g
            for var, order in zip(self.variables, alpha):
                for _ in range(order):
                    derivative = derivative.diff(var)
            if derivative.is_zero():
                continue
            value = c * derivative
            data[k] = value if k not in data else data[k] + value
        return HbarSeries.from_dict(data)

    def apply_sympy(self, expr, M=None, hbar=None):
        """Apply to a sympy expression in the chart symbols; M and hbar may be numbers."""
        symbols = dict(SYMBOLS)
        if M is not None:
            symbols["M"] = sp.Float(M)
        h = SYMBOLS["hbar"] if hbar is None else sp.Float(hbar)
        chart_symbols = [SYMBOLS[v] for v in self.variables]
        total = sp.Integer(0)
        for (alpha, k), c in self.terms:
            args = [s for s, order in zip(chart_symbols, alpha) for _ in range(order)]
            derivative = sp.diff(expr, *args) if args else expr
            total += c.to_sympy(symbols) * h ** k * derivative
        return total

    def lines(self):
        out = []
        for (alpha, k), c in self.terms:
            parts = [f"d_{v}^{a}" if a > 1 else f"d_{v}" for v, a in zip(self.variables, alpha) if a]
            derivative = " ".join(parts) if parts else "1"
            out.append(f"hbar^{k} * ({c}) * {derivative}")
        return out

    def to_json(self):
        return [{"derivative": list(alpha), "hbar": k, "re": str(c.re), "im": str(c.im)} for (alpha, k), c in self.terms]

    @classmethod
    def from_json(cls, chart, entries):
        chart = get_chart(chart)
        data = {}
        for entry in entries:
            re = parse_observable(entry["re"]).to_coeff(chart.ring_variables)
            im = parse_observable(entry["im"]).to_coeff(chart.ring_variables)
            data[(tuple(entry["derivative"]), int(entry["hbar"]))] = ComplexCoeff(re, im)
        return cls.from_dict(chart, data)

    def __eq__(self, other):
        if not isinstance(other, DifferentialOperator):
            return NotImplemented
        return self.chart_name == other.chart_name and self.as_dict() == other.as_dict()

    def __hash__(self):
        return hash((self.chart_name, self.terms))


def _contract_symbols(a, b, max_hbar):
    """sigma(a o b) for 0-form elements, keyed by (jet, k)."""
    by_degree = {}
    for key, c in b.terms.items():
        if not key[2]:
            by_degree.setdefault(sum(key[1]), []).append((key, c))
    out = {}
    for (k1, mu1, s1, j1), c1 in a.terms.items():
        if s1:
            continue
        degree = sum(mu1)
        for (k2, mu2, _, j2), c2 in by_degree.get(degree, ()):
            if degree + k1 + k2 > max_hbar:
                continue
            jet = j1 if j1 is not None else j2
            base = c1 * c2
            for kk, mu, factor in _fiber_contractions(mu1, mu2):
                if kk != degree:
                    continue
                _accumulate(out, (jet, k1 + k2 + kk), (base * factor).times_i_power(kk))
    return out


def _lifts(f, trunc, chart):
    truncation = trunc or TruncationConfig()
    cap = truncation.max_hbar
    if truncation.max_fiber_degree is not None and truncation.max_fiber_degree < cap:
        logging.debug("star operator returning error 'fiber degree cap below hbar order'")
        raise TruncationError(f"Fiber degree cap {truncation.max_fiber_degree} cannot close an hbar^{cap} operator")
    lift_f = sigma_inv(f, truncation, chart, max_fiber_degree=cap)
    lift_g = sigma_inv(UNDETERMINED, truncation, chart, max_fiber_degree=cap)
    return lift_f, lift_g, cap


def _operator(chart, contracted):
    zero = (0,) * chart.dimension
    data = {}
    for (jet, k), c in contracted.items():
        key = (zero if jet is None else jet, k)
        data[key] = c if key not in data else data[key] + c
    return DifferentialOperator.from_dict(chart, data)


def star_left_operator(f, trunc=None, chart="action-angle"):
    """The operator g -> f * g, extracted exactly over an undetermined g."""
    chart = get_chart(chart)
    logging.info(f"star_left_operator called for f '{f}' in chart '{chart.name}'")
    lift_f, lift_g, cap = _lifts(f, trunc, chart)
    op = _operator(chart, _contract_symbols(lift_f, lift_g, cap))
    logging.debug(f"star_left_operator returning {len(op.terms)} terms")
    return op


def star_right_operator(f, trunc=None, chart="action-angle"):
    """The operator g -> g * f."""
    chart = get_chart(chart)
    logging.info(f"star_right_operator called for f '{f}' in chart '{chart.name}'")
    lift_f, lift_g, cap = _lifts(f, trunc, chart)
    op = _operator(chart, _contract_symbols(lift_g, lift_f, cap))
    logging.debug(f"star_right_operator returning {len(op.terms)} terms")
    return op


def fedosov_star(f, g, trunc=None, chart="cartesian"):
    """f * g for two concrete observables as an exact hbar series."""
    chart = get_chart(chart)
    truncation = trunc or TruncationConfig()
    cap = truncation.max_hbar
    lift_f = sigma_inv(f, truncation, chart, max_fiber_degree=cap)
    lift_g = sigma_inv(g, truncation, chart, max_fiber_degree=cap)
    data = {k: c for (jet, k), c in _contract_symbols(lift_f, lift_g, cap).items()}
    return HbarSeries.from_dict(data)
