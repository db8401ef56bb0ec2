"""
Darboux charts on (R^4, omega): the Cartesian chart and the (T, chi, H, L) chart.

Each chart carries exact inverse maps as RationalCoeff over the chart variables
extended by a few auxiliary algebraic symbols (cos chi, sin chi, sqrt(2MH)).
Derivatives are taken as total derivatives through the auxiliaries and results
are reduced modulo their defining relations, so connection coefficients come out
as exact rational functions of the chart variables.
"""

import logging
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import NamedTuple

import numpy as np
import sympy as sp
from sympy.polys.domains import QQ
from sympy.polys.orderings import lex
from sympy.polys.rings import PolyRing

from .symbolic_core import RationalCoeff, coefficient_field, parse_observable, ObservableExpr

TWO_PI = 2.0 * math.pi

# sympy symbols shared by every module that builds closed forms
X, Y, PX, PY = sp.symbols("x y px py", real=True)
T, CHI, L = sp.symbols("T chi L", real=True)
H = sp.Symbol("H", positive=True)
M = sp.Symbol("M", positive=True)
HBAR = sp.Symbol("hbar", positive=True)
SYMBOLS = {"x": X, "y": Y, "px": PX, "py": PY, "T": T, "chi": CHI, "H": H, "L": L, "M": M, "hbar": HBAR}


class RestPointError(ValueError):
    pass


class ChartDomainError(ValueError):
    pass


@dataclass(frozen=True)
class PhysParams:
    M: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.M) and self.M > 0):
            raise ValueError(f"Mass must be positive, got {self.M}")
        if not (math.isfinite(self.hbar) and self.hbar > 0):
            raise ValueError(f"hbar must be positive, got {self.hbar}")


class CartesianPoint(NamedTuple):
    x: float
    y: float
    px: float
    py: float


class ActionAnglePoint(NamedTuple):
    T: float
    chi: float
    H: float
    L: float


class PolarPoint(NamedTuple):
    r: float
    phi: float
    p: float
    chi: float


def normalize_angle(angle):
    """Map an angle into [0, 2*pi)."""
    angle = math.fmod(angle, TWO_PI)
    if angle < 0.0:
        angle += TWO_PI
    if angle >= TWO_PI:
        angle = 0.0
    return angle


def to_action_angle(pt, params):
    x, y, px, py = pt
    p2 = px * px + py * py
    if p2 == 0.0:
        logging.debug(f"to_action_angle returning error 'Rest point {tuple(pt)}'")
        raise RestPointError(f"Point {tuple(pt)} has zero momentum; the (T, chi, H, L) chart excludes particles at rest")
    return ActionAnglePoint(
        T=params.M * (x * px + y * py) / p2,
        chi=normalize_angle(math.atan2(py, px)),
        H=p2 / (2.0 * params.M),
        L=x * py - y * px,
    )


def from_action_angle(pt, params):
    t, chi, h, l = pt
    if not h > 0.0:
        logging.debug(f"from_action_angle returning error 'Nonpositive H {h}'")
        raise ChartDomainError(f"H must be positive, got {h}")
    q = math.sqrt(2.0 * params.M * h)
    c, s = math.cos(chi), math.sin(chi)
    return CartesianPoint(
        x=(2.0 * h * t * c + l * s) / q,
        y=(2.0 * h * t * s - l * c) / q,
        px=q * c,
        py=q * s,
    )


def to_polar(pt):
    x, y, px, py = pt
    p = math.hypot(px, py)
    if p == 0.0:
        raise RestPointError(f"Point {tuple(pt)} has zero momentum")
    r = math.hypot(x, y)
    phi = normalize_angle(math.atan2(y, x)) if r > 0.0 else 0.0
    return PolarPoint(r=r, phi=phi, p=p, chi=normalize_angle(math.atan2(py, px)))


def from_polar(pt):
    r, phi, p, chi = pt
    if r < 0.0:
        raise ChartDomainError(f"r must be nonnegative, got {r}")
    if not p > 0.0:
        raise ChartDomainError(f"p must be positive, got {p}")
    return CartesianPoint(r * math.cos(phi), r * math.sin(phi), p * math.cos(chi), p * math.sin(chi))


def darboux_matrix(dimension):
    """Lower-index omega in block form: omega[q][q+n] = 1, omega[q+n][q] = -1."""
    n = dimension // 2
    omega = np.zeros((dimension, dimension), dtype=int)
    for q in range(n):
        omega[q, q + n] = 1
        omega[q + n, q] = -1
    return omega


@dataclass(frozen=True)
class AuxiliarySymbol:
    """An algebraic stand-in (e.g. c = cos chi) with its chart derivatives and numeric value."""

    name: str
    derivatives: tuple  # ((chart variable, RationalCoeff over the extended ring), ...)
    numeric: object  # callable(point, params) -> float


@dataclass(frozen=True)
class ConnectionTable:
    """All-lower-index symmetric connection coefficients, stored under sorted index triples."""

    variables: tuple
    ring_variables: tuple
    entries: tuple  # (((i, j, k), RationalCoeff), ...) with i <= j <= k, nonzero only

    def __getitem__(self, index):
        key = tuple(sorted(index))
        for k, value in self.entries:
            if k == key:
                return value
        return RationalCoeff.zero(self.ring_variables)

    def nonzero(self):
        return list(self.entries)

    def is_zero(self):
        return not self.entries

    def evaluate(self, env):
        n2 = len(self.variables)
        table = np.zeros((n2, n2, n2))
        for (i, j, k), value in self.entries:
            v = value.evaluate(env)
            for a, b, c in {(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)}:
                table[a, b, c] = v
        return table

    def lines(self):
        # 1-based indices in the chart's variable order
        return [f"gamma[{i + 1},{j + 1},{k + 1}] = {value}" for (i, j, k), value in self.entries]


class Chart:
    """A Darboux chart with exact inverse map and numeric maps in both directions."""

    def __init__(self, name, variables, forward, inverse, to_chart, from_chart, auxiliaries=(), relations=(),
                 substitutions=None):
        self.name = name
        self.variables = tuple(variables)
        self.ring_variables = self.variables + ("M",)
        self.aux_names = tuple(a.name for a in auxiliaries)
        self.extended_variables = self.ring_variables + self.aux_names
        self.forward = tuple(forward)  # sympy, in Cartesian symbols
        self.inverse = tuple(inverse)  # RationalCoeff over extended_variables
        self.auxiliaries = tuple(auxiliaries)
        self.relations = tuple(relations)
        self.substitutions = dict(substitutions or {})  # other-chart names -> sympy in chart symbols
        self._to_chart = to_chart
        self._from_chart = from_chart

    def __repr__(self):
        return f"Chart({self.name!r})"

    @property
    def dimension(self):
        return len(self.variables)

    @property
    def is_cartesian(self):
        return self.variables == ("x", "y", "px", "py")

    @cached_property
    def omega(self):
        return darboux_matrix(self.dimension)

    @cached_property
    def omega_inverse(self):
        return np.linalg.inv(self.omega).round().astype(int)

    @cached_property
    def poisson_tensor(self):
        # Pi^{q,q+n} = +1: the bivector with {q, p} = 1
        return -self.omega_inverse

    @property
    def symbols(self):
        return tuple(SYMBOLS[v] for v in self.variables)

    def to_chart(self, pt, params):
        return self._to_chart(pt, params)

    def from_chart(self, pt, params):
        return self._from_chart(pt, params)

    @cached_property
    def _forward_jacobian(self):
        jac = sp.Matrix(self.forward).jacobian(sp.Matrix([X, Y, PX, PY]))
        return sp.lambdify((X, Y, PX, PY, M), jac, "numpy")

    def forward_jacobian(self, cartesian_pt, params):
        self.to_chart(cartesian_pt, params)  # domain check
        return np.array(self._forward_jacobian(*cartesian_pt, params.M), dtype=float)

    def total_diff(self, coeff, var):
        """d/d(var) of an extended-ring coefficient, chaining through the auxiliaries."""
        out = coeff.diff(var)
        for aux in self.auxiliaries:
            for name, derivative in aux.derivatives:
                if name == var:
                    out = out + coeff.diff(aux.name) * derivative
        return out

    @cached_property
    def _reduction(self):
        ring = PolyRing(self.aux_names + self.ring_variables, QQ, lex)
        basis = [rel.numerator.set_ring(ring) for rel in self.relations]
        return ring, basis

    def eliminate_auxiliaries(self, coeff):
        """Rewrite an extended-ring coefficient as an exact RationalCoeff in the chart variables."""
        target = coefficient_field(self.ring_variables)
        if not self.aux_names:
            return RationalCoeff(target.new(coeff.numerator.set_ring(target.ring), coeff.denominator.set_ring(target.ring)))
        ring, basis = self._reduction
        num = coeff.numerator.set_ring(ring).rem(basis)
        den = coeff.denominator.set_ring(ring).rem(basis)
        for index, gen in enumerate(ring.gens[:len(self.aux_names)]):
            if any(monom[index] for monom in den.monoms()):
                conjugate = den.compose(gen, -gen)
                num = (num * conjugate).rem(basis)
                den = (den * conjugate).rem(basis)
        aux_count = len(self.aux_names)
        for poly in (num, den):
            if any(any(monom[:aux_count]) for monom in poly.monoms()):
                logging.debug(f"eliminate_auxiliaries returning error 'not rational in {self.variables}'")
                raise ValueError(f"Coefficient is not a rational function of the chart variables {self.variables}")
        return RationalCoeff(target.new(num.set_ring(target.ring), den.set_ring(target.ring)))

    def aux_values(self, pt, params):
        return {aux.name: aux.numeric(pt, params) for aux in self.auxiliaries}

    def check_point(self, pt):
        if not self.is_cartesian and not pt[2] > 0.0:
            raise ChartDomainError(f"H must be positive, got {pt[2]}")

    def sympy_observable(self, f):
        """An observable as a sympy expression in this chart's symbols (plus M, hbar)."""
        expr = parse_observable(f) if isinstance(f, str) else f
        out = expr.to_sympy(SYMBOLS)
        if self.substitutions:
            out = out.subs({SYMBOLS[k]: v for k, v in self.substitutions.items()})
        return out


def _cartesian_chart():
    ext = ("x", "y", "px", "py", "M")
    inverse = tuple(RationalCoeff.variable(ext, v) for v in ("x", "y", "px", "py"))
    p2 = PX ** 2 + PY ** 2
    substitutions = {
        "T": M * (X * PX + Y * PY) / p2,
        "chi": sp.atan2(PY, PX),
        "H": p2 / (2 * M),
        "L": X * PY - Y * PX,
    }
    return Chart(
        "cartesian", ("x", "y", "px", "py"), (X, Y, PX, PY), inverse,
        to_chart=lambda pt, params: CartesianPoint(*pt),
        from_chart=lambda pt, params: CartesianPoint(*pt),
        substitutions=substitutions,
    )


def _action_angle_chart():
    ext = ("T", "chi", "H", "L", "M", "c", "s", "q")
    t, h, l, m, c, s, q = (RationalCoeff.variable(ext, n) for n in ("T", "H", "L", "M", "c", "s", "q"))
    inverse = ((2 * h * t * c + l * s) / q, (2 * h * t * s - l * c) / q, q * c, q * s)
    auxiliaries = (
        AuxiliarySymbol("c", (("chi", -s),), lambda pt, params: math.cos(pt[1])),
        AuxiliarySymbol("s", (("chi", c),), lambda pt, params: math.sin(pt[1])),
        AuxiliarySymbol("q", (("H", m / q),), lambda pt, params: math.sqrt(2.0 * params.M * pt[2])),
    )
    relations = (c * c + s * s - 1, q * q - 2 * m * h)
    p2 = PX ** 2 + PY ** 2
    forward = (M * (X * PX + Y * PY) / p2, sp.atan2(PY, PX), p2 / (2 * M), X * PY - Y * PX)
    root = sp.sqrt(2 * M * H)
    substitutions = {
        "x": (2 * H * T * sp.cos(CHI) + L * sp.sin(CHI)) / root,
        "y": (2 * H * T * sp.sin(CHI) - L * sp.cos(CHI)) / root,
        "px": root * sp.cos(CHI),
        "py": root * sp.sin(CHI),
    }
    return Chart(
        "action-angle", ("T", "chi", "H", "L"), forward, inverse,
        to_chart=to_action_angle, from_chart=from_action_angle,
        auxiliaries=auxiliaries, relations=relations, substitutions=substitutions,
    )


CARTESIAN = _cartesian_chart()
ACTION_ANGLE = _action_angle_chart()
CHARTS = {CARTESIAN.name: CARTESIAN, ACTION_ANGLE.name: ACTION_ANGLE}


def get_chart(name):
    if isinstance(name, Chart):
        return name
    chart = CHARTS.get(name)
    if chart is None:
        raise ValueError(f"Unknown chart '{name}'. Available: {', '.join(CHARTS)}")
    return chart


def chart_jacobian_det(chart, pt, params):
    """Determinant of the forward-map Jacobian at the Cartesian point `pt`."""
    chart = get_chart(chart)
    if chart.is_cartesian:
        return 1.0
    return float(np.linalg.det(chart.forward_jacobian(pt, params)))


def finite_difference_jacobian(chart, pt, params, step=1e-5):
    chart = get_chart(chart)
    base = np.array(pt, dtype=float)
    jac = np.zeros((4, 4))
    for col in range(4):
        h = step * max(1.0, abs(base[col]))
        plus, minus = base.copy(), base.copy()
        plus[col] += h
        minus[col] -= h
        diff = np.array(chart.to_chart(plus, params)) - np.array(chart.to_chart(minus, params))
        if not chart.is_cartesian:
            diff[1] = (diff[1] + math.pi) % TWO_PI - math.pi
        jac[:, col] = diff / (2.0 * h)
    return jac


@lru_cache(maxsize=256)
def _bracket_function(f_text, g_text, chart_name):
    chart = get_chart(chart_name)
    f = chart.sympy_observable(f_text)
    g = chart.sympy_observable(g_text)
    n = chart.dimension // 2
    syms = chart.symbols
    bracket = sum(sp.diff(f, syms[q]) * sp.diff(g, syms[q + n]) - sp.diff(f, syms[q + n]) * sp.diff(g, syms[q])
                  for q in range(n))
    return sp.lambdify(syms + (M, HBAR), bracket, "math")


def poisson_bracket(f, g, pt, chart, params=None):
    """Numeric {f, g} at `pt` (chart coordinates) over the chart's conjugate pairs."""
    chart = get_chart(chart)
    params = params or PhysParams()
    chart.check_point(pt)
    fn = _bracket_function(str(f), str(g), chart.name)
    return float(fn(*pt, params.M, params.hbar))


def _inverse_derivatives(chart):
    n2 = chart.dimension
    first = [[chart.total_diff(chart.inverse[r], v) for v in chart.variables] for r in range(n2)]
    second = [[[chart.total_diff(first[d][j], chart.variables[k]) for k in range(n2)] for j in range(n2)]
              for d in range(n2)]
    return first, second


@lru_cache(maxsize=None)
def _derivative_tables(chart_name):
    return _inverse_derivatives(get_chart(chart_name))


def connection_entry(chart, i, j, k):
    """omega_rd dQ^r/dQ~^i d2Q^d/dQ~^j dQ~^k, unsymmetrized, as an exact coefficient."""
    chart = get_chart(chart)
    first, second = _derivative_tables(chart.name)
    omega = darboux_matrix(4)  # Cartesian source chart
    ext = chart.extended_variables
    total = RationalCoeff.zero(ext)
    for r in range(4):
        for d in range(4):
            if omega[r, d]:
                total = total + int(omega[r, d]) * first[r][i] * second[d][j][k]
    return chart.eliminate_auxiliaries(total)


@lru_cache(maxsize=None)
def _transform_connection(chart_name):
    chart = get_chart(chart_name)
    entries = []
    if not chart.is_cartesian:
        n2 = chart.dimension
        for i in range(n2):
            for j in range(i, n2):
                for k in range(j, n2):
                    value = connection_entry(chart, i, j, k)
                    if not value.is_zero():
                        entries.append(((i, j, k), value))
    return ConnectionTable(chart.variables, chart.ring_variables, tuple(entries))


def transform_connection(target_chart):
    """Transport the zero Cartesian connection into `target_chart`."""
    chart = get_chart(target_chart)
    logging.info(f"transform_connection called for chart '{chart.name}'")
    table = _transform_connection(chart.name)
    logging.debug(f"transform_connection returning {len(table.entries)} nonzero entries")
    return table


def connection_preserves_form(chart, pt, params=None):
    """Max of |nabla omega| and the mismatch between lowered Christoffel symbols and the table at `pt`."""
    chart = get_chart(chart)
    params = params or PhysParams()
    chart.check_point(pt)
    table = transform_connection(chart)
    if chart.is_cartesian:
        return 0.0
    cartesian = chart.from_chart(pt, params)
    forward = chart.forward_jacobian(cartesian, params)
    _, second = _derivative_tables(chart.name)
    env = dict(zip(chart.variables, pt))
    env["M"] = params.M
    env.update(chart.aux_values(pt, params))
    n2 = chart.dimension
    hessian = np.array([[[second[d][j][k].evaluate(env) for k in range(n2)] for j in range(n2)] for d in range(n2)])
    christoffel = np.einsum("ad,dbc->abc", forward, hessian)
    omega = chart.omega
    nabla = -np.einsum("lca,lb->cab", christoffel, omega) - np.einsum("lcb,al->cab", christoffel, omega)
    lowered = np.einsum("al,lbc->abc", omega, christoffel)
    env_chart = {k: v for k, v in env.items() if k in chart.ring_variables}
    mismatch = lowered - table.evaluate(env_chart)
    return float(max(np.max(np.abs(nabla)), np.max(np.abs(mismatch))))


def observable_in_chart(f, chart):
    """The exact coefficient of an observable whose identifiers all belong to `chart`."""
    chart = get_chart(chart)
    expr = parse_observable(f) if isinstance(f, str) else f
    if not isinstance(expr, ObservableExpr):
        raise TypeError(f"Expected an observable, got {type(f).__name__}")
    return expr.to_coeff(chart.ring_variables)
