"""
Executable checks for the workbench.

Every check returns a VerificationReport (pass iff max_error <= tolerance).  Checks
register themselves under an id and a suite; run_report runs a selection of them
in registry order with per-check seeds derived from the run seed, in-process or
through the worker pool.
"""

import logging
import math
import time
import zlib
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import sympy as sp
from scipy import integrate, optimize, special

from ..config_manager import DEFAULT_SECTIONS
from .formal_weyl import DifferentialOperator, TruncationConfig, fedosov_star, star_left_operator, star_right_operator
from .moyal_reference import moyal_differential
from .numerics import (
    QuadratureConfig, adaptive_integrate, adaptive_integrate_complex, default_test_function,
    marginal_P_Em, momentum_pairing_limit, mollified_fourier_cos,
    radial_pairing,
)
from .symbolic_core import parse_observable
from .symplectic_charts import (
    TWO_PI, PhysParams, RestPointError, ActionAnglePoint, CartesianPoint, connection_entry,
    connection_preserves_form, chart_jacobian_det, from_action_angle, get_chart, poisson_bracket,
    to_action_angle, transform_connection,
    T as T_SYM, CHI as CHI_SYM, H as H_SYM, L as L_SYM,
)
from .wigner_states import (
    EigenLabels, MomentumEigenDescriptor, SingularGridError, W_Emmp_array, eval_W_Em, eval_W_Em_polar,
    eval_general_solution_above, expansion_coefficients, norm_constants,
)

# --- Reports ---

@dataclass
class VerificationReport:
    id: str
    status: str
    max_error: float
    tolerance: float
    params: dict = field(default_factory=dict)
    seconds: float = 0.0

    @classmethod
    def from_error(cls, check_id, max_error, tolerance, params=None, started=None):
        max_error = float(max_error)
        status = "pass" if max_error <= tolerance else "fail"
        seconds = time.perf_counter() - started if started is not None else 0.0
        return cls(check_id, status, max_error, float(tolerance), _json_safe(params or {}), seconds)

    @classmethod
    def skipped(cls, check_id, reason):
        return cls(check_id, "skipped", float("nan"), 0.0, {"reason": reason}, 0.0)

    @classmethod
    def from_dict(cls, data):
        max_error = data.get("max_error")
        return cls(data["id"], data["status"], float("inf") if max_error is None else float(max_error),
                   float(data["tolerance"]), data.get("params", {}), float(data.get("seconds", 0.0)))

    @property
    def passed(self):
        return self.status == "pass"

    def to_dict(self, include_timing=True):
        return {
            "id": self.id,
            "status": self.status,
            "max_error": self.max_error if math.isfinite(self.max_error) else None,
            "tolerance": self.tolerance,
            "params": self.params,
            "seconds": round(self.seconds, 6) if include_timing else 0.0,
        }


def _json_safe(value):
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, (complex, np.complexfloating)):
        return {"re": float(value.real), "im": float(value.imag)}
    if isinstance(value, np.ndarray):
        return _json_safe(value.tolist())
    return value


def _ratio(error, tolerance):
    if error <= tolerance:
        return error / tolerance if tolerance > 0 else 0.0
    return error / tolerance if tolerance > 0 else float("inf")


def _combine(check_id, parts, params=None, started=None):
    """One report from (name, error, tolerance) parts; mixed tolerances report error/tolerance."""
    params = dict(params or {})
    params["components"] = {
        name: {"max_error": float(err), "tolerance": tol, "status": "pass" if err <= tol else "fail"}
        for name, err, tol in parts
    }
    tolerances = {tol for _, _, tol in parts}
    if len(tolerances) == 1:
        tolerance = tolerances.pop()
        max_error = max(float(err) for _, err, _ in parts)
    else:
        tolerance = 1.0
        ratios = [_ratio(float(err), tol) for _, err, tol in parts]
        max_error = float("nan") if any(math.isnan(r) for r in ratios) else max(ratios)
        params["normalized_error"] = True
    return VerificationReport.from_error(check_id, max_error, tolerance, params, started)


def resolve_settings(settings=None):
    """Settings merged over the built-in defaults, section by section."""
    merged = {name: dict(values) if isinstance(values, dict) else values for name, values in DEFAULT_SECTIONS.items()}
    for name, values in (settings or {}).items():
        if isinstance(values, dict) and isinstance(merged.get(name), dict):
            merged[name].update(values)
        else:
            merged[name] = values
    return merged


def _params_from(settings):
    return PhysParams(float(settings.get("M", 1.0)), float(settings.get("hbar", 1.0)))


def _tol(settings, key):
    return float(settings["tolerances"][key])


# --- Registry ---

@dataclass(frozen=True)
class RegisteredCheck:
    id: str
    suite: str
    description: str
    runner: object  # callable(settings, rng) -> VerificationReport


CHECKS = {}


def register_check(check_id, suite, description=""):
    def decorator(fn):
        CHECKS[check_id] = RegisteredCheck(check_id, suite, description, fn)
        return fn
    return decorator


def list_checks():
    return [{"id": c.id, "suite": c.suite, "description": c.description} for c in CHECKS.values()]


def suites():
    out = {}
    for c in CHECKS.values():
        out.setdefault(c.suite, []).append(c.id)
    return out


# --- Chart and connection checks ---

def _random_cartesian(rng, count):
    pts = []
    for _ in range(count):
        x, y = rng.normal(size=2)
        p = rng.uniform(0.5, 2.0)
        chi = rng.uniform(0.0, TWO_PI)
        pts.append(CartesianPoint(float(x), float(y), p * math.cos(chi), p * math.sin(chi)))
    return pts


CANONICAL_BRACKETS = (
    ("T", "H", 1.0), ("chi", "L", 1.0), ("T", "chi", 0.0), ("T", "L", 0.0), ("H", "chi", 0.0), ("H", "L", 0.0),
)


def chart_check(params=None, rng=None, points=100, settings=None):
    settings = resolve_settings(settings)
    params = params or PhysParams()
    rng = rng or np.random.default_rng(0)
    started = time.perf_counter()
    logging.info(f"chart_check called for {points} points and params '{params}'")
    pts = _random_cartesian(rng, points)
    round_trip = 0.0
    jacobian = 0.0
    for pt in pts:
        back = from_action_angle(to_action_angle(pt, params), params)
        round_trip = max(round_trip, float(np.max(np.abs(np.subtract(back, pt)))) / max(1.0, float(np.max(np.abs(pt)))))
        aa = to_action_angle(pt, params)
        again = to_action_angle(from_action_angle(aa, params), params)
        diff = np.subtract(again, aa)
        diff[1] = (diff[1] + math.pi) % TWO_PI - math.pi
        round_trip = max(round_trip, float(np.max(np.abs(diff))) / max(1.0, float(np.max(np.abs(aa)))))
        jacobian = max(jacobian, abs(chart_jacobian_det("action-angle", pt, params) - 1.0))
    bracket = 0.0
    for pt in pts[:20]:
        for f, g, expected in CANONICAL_BRACKETS:
            bracket = max(bracket, abs(poisson_bracket(f, g, pt, "cartesian", params) - expected))
    try:
        to_action_angle(CartesianPoint(1.0, 1.0, 0.0, 0.0), params)
        rest_rejected = False
    except RestPointError:
        rest_rejected = True
    parts = [
        ("round_trip", round_trip, _tol(settings, "round_trip")),
        ("jacobian", jacobian, _tol(settings, "jacobian")),
        ("bracket", bracket, _tol(settings, "bracket")),
        ("rest_point", 0.0 if rest_rejected else 1.0, 0.0),
    ]
    return _combine("chart_check", parts, {"points": points, "M": params.M}, started)


# gamma~ in (T, chi, H, L), 0-based sorted index triples
EXPECTED_CONNECTION = {
    (0, 1, 1): "-2*H",
    (0, 2, 2): "-1/(2*H)",
    (1, 1, 1): "-2*L",
    (1, 2, 2): "L/(2*H^2)",
    (1, 2, 3): "-1/(2*H)",
}


def connection_check(params=None, rng=None, points=100, settings=None):
    settings = resolve_settings(settings)
    params = params or PhysParams()
    rng = rng or np.random.default_rng(0)
    started = time.perf_counter()
    logging.info(f"connection_check called for {points} points")
    chart = get_chart("action-angle")
    table = transform_connection(chart)
    expected = {key: parse_observable(text).to_coeff(chart.ring_variables) for key, text in EXPECTED_CONNECTION.items()}
    found = dict(table.entries)
    mismatches = sum(1 for key in set(found) | set(expected) if found.get(key) != expected.get(key))
    symmetry = 0
    for (i, j, k) in expected:
        for perm in {(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)}:
            if connection_entry(chart, *perm) != expected[(i, j, k)]:
                symmetry += 1
    spot = 0.0
    for _ in range(points):
        env = {"H": float(rng.uniform(0.2, 3.0)), "L": float(rng.uniform(-3.0, 3.0)), "M": params.M,
               "T": 0.0, "chi": 0.0}
        values = table.evaluate(env)
        for (i, j, k), coeff in expected.items():
            spot = max(spot, abs(values[i, j, k] - coeff.evaluate(env)))
    form = 0.0
    for _ in range(10):
        pt = ActionAnglePoint(float(rng.normal()), float(rng.uniform(0.0, TWO_PI)), float(rng.uniform(0.2, 3.0)),
                              float(rng.uniform(-3.0, 3.0)))
        form = max(form, connection_preserves_form(chart, pt, params))
    parts = [
        ("exact_entries", mismatches, 0.0),
        ("total_symmetry", symmetry, 0.0),
        ("spot_values", spot, _tol(settings, "connection_spot")),
        ("preserves_form", form, _tol(settings, "connection_form")),
    ]
    return _combine("connection_check", parts, {"points": points, "entries": table.lines()}, started)


# --- Star products and operators ---

def random_polynomial(rng, max_degree=4, max_terms=3):
    """Random integer polynomial text in x, y, px, py."""
    names = ("x", "y", "px", "py")
    text = ""
    for index in range(int(rng.integers(1, max_terms + 1))):
        exponents = [0, 0, 0, 0]
        for _ in range(int(rng.integers(0, max_degree + 1))):
            exponents[int(rng.integers(0, 4))] += 1
        coeff = int(rng.integers(-3, 4)) or 1
        factors = [f"{n}^{e}" if e > 1 else n for n, e in zip(names, exponents) if e]
        body = "*".join([str(abs(coeff))] + factors)
        if index == 0:
            text = f"-{body}" if coeff < 0 else body
        else:
            text += f" - {body}" if coeff < 0 else f" + {body}"
    return text


def moyal_equivalence_check(pairs=200, rng=None, max_degree=4):
    """Cartesian Fedosov star against the Moyal series on random polynomial pairs, exactly."""
    rng = rng or np.random.default_rng(0)
    started = time.perf_counter()
    logging.info(f"moyal_equivalence_check called for {pairs} pairs")
    trunc = TruncationConfig(max_grade=2 * max_degree, max_hbar=max_degree)
    mismatches = []
    for _ in range(pairs):
        f, g = random_polynomial(rng, max_degree), random_polynomial(rng, max_degree)
        fedosov = fedosov_star(f, g, trunc, "cartesian").to_sympy()
        moyal = moyal_differential(f, g, order=max_degree)
        if sp.expand(fedosov - moyal) != 0:
            mismatches.append([f, g])
    params = {"pairs": pairs, "max_degree": max_degree, "mismatches": mismatches[:5]}
    return VerificationReport.from_error("moyal_equivalence_check", len(mismatches), 0.0, params, started)


# Hand-coded operators g -> H * g and g -> L * g in (T, chi, H, L).
REFERENCE_LEFT = {
    "H": [
        {"derivative": [0, 0, 0, 0], "hbar": 0, "re": "H", "im": "0"},
        {"derivative": [1, 0, 0, 0], "hbar": 1, "re": "0", "im": "-1/2"},
        {"derivative": [0, 0, 0, 2], "hbar": 2, "re": "-H/4", "im": "0"},
        {"derivative": [2, 0, 0, 0], "hbar": 2, "re": "-1/(16*H)", "im": "0"},
    ],
    "L": [
        {"derivative": [0, 0, 0, 0], "hbar": 0, "re": "L", "im": "0"},
        {"derivative": [0, 1, 0, 0], "hbar": 1, "re": "0", "im": "-1/2"},
        {"derivative": [0, 0, 0, 1], "hbar": 2, "re": "-1/2", "im": "0"},
        {"derivative": [0, 0, 0, 2], "hbar": 2, "re": "-L/4", "im": "0"},
        {"derivative": [0, 0, 1, 1], "hbar": 2, "re": "-H/2", "im": "0"},
        {"derivative": [1, 1, 0, 0], "hbar": 2, "re": "-1/(8*H)", "im": "0"},
        {"derivative": [2, 0, 0, 0], "hbar": 2, "re": "L/(16*H^2)", "im": "0"},
    ],
}


@lru_cache(maxsize=None)
def reference_operator(name, side="left"):
    """Right operators are the left ones with hbar -> -hbar."""
    entries = [dict(e) for e in REFERENCE_LEFT[name]]
    if side == "right":
        for e in entries:
            if e["hbar"] % 2:
                e["re"], e["im"] = f"-({e['re']})", f"-({e['im']})"
    elif side != "left":
        raise ValueError(f"Unknown side '{side}'")
    return DifferentialOperator.from_json("action-angle", entries)


@lru_cache(maxsize=4)
def derived_operators(max_grade=8, max_hbar=3):
    trunc = TruncationConfig(max_grade=max_grade, max_hbar=max_hbar)
    return {
        ("H", "left"): star_left_operator("H", trunc),
        ("L", "left"): star_left_operator("L", trunc),
        ("H", "right"): star_right_operator("H", trunc),
        ("L", "right"): star_right_operator("L", trunc),
    }


def operator_set(kind="reference", settings=None):
    if isinstance(kind, dict):
        return kind
    if kind == "reference":
        return {(name, side): reference_operator(name, side) for name in ("H", "L") for side in ("left", "right")}
    if kind == "derived":
        trunc = resolve_settings(settings)["truncation"]
        return derived_operators(int(trunc["max_grade"]), int(trunc["max_hbar"]))
    raise ValueError(f"Unknown operator set '{kind}'")


def operator_check(settings=None):
    """Derived star operators against the hand-coded ones, coefficient by coefficient."""
    settings = resolve_settings(settings)
    started = time.perf_counter()
    logging.info("operator_check called")
    derived = operator_set("derived", settings)
    mismatches = 0
    details = {}
    for (name, side), op in derived.items():
        top = op.hbar_part(op.hbar_order) if op.hbar_order > 2 else None
        lower = DifferentialOperator(op.chart_name, op.variables, op.ring_variables,
                                     tuple(item for item in op.terms if item[0][1] <= 2))
        reference = reference_operator(name, side)
        ref, got = reference.as_dict(), lower.as_dict()
        bad = [key for key in set(ref) | set(got) if ref.get(key) != got.get(key)]
        extra = 0 if top is None else len(top.terms)
        mismatches += len(bad) + extra
        details[f"{side} {name}"] = {"mismatched": [list(alpha) + [k] for alpha, k in bad],
                                     "high_order_terms": extra, "terms": op.lines()}
    return VerificationReport.from_error("operator_check", mismatches, 0.0,
                                         {"truncation": settings["truncation"], "operators": details}, started)


# --- Eigenfunction residuals ---

def closed_form_expr(labels, params):
    """W_Emm' inside 0 < H < E as a sympy expression in (chi, H, L)."""
    E = sp.Float(labels.E)
    _, n = norm_constants(labels, params)
    N = sp.Float(n.real) + sp.I * sp.Float(n.imag)
    argument = (2 * L_SYM / sp.Float(params.hbar) * sp.sqrt((E - H_SYM) / H_SYM)
                - sp.Float(labels.m + labels.m_prime) * sp.acos(sp.sqrt(H_SYM / E)) + sp.Float(labels.D_offset))
    phase = sp.exp(sp.I * sp.Float(labels.m - labels.m_prime) * CHI_SYM)
    return N * phase * sp.cos(argument) / sp.sqrt(H_SYM * (E - H_SYM))


def _numeric(expr):
    fn = sp.lambdify((T_SYM, CHI_SYM, H_SYM, L_SYM), expr, "numpy")

    def evaluate(chi, Hs, Ls):
        value = fn(np.zeros_like(Hs), chi, Hs, Ls)
        return np.broadcast_to(np.asarray(value, dtype=complex), np.shape(Hs))
    return evaluate


def default_grid(labels, settings=None, params=None):
    grid = resolve_settings(settings)["grid"]
    params = params or PhysParams()
    margin = float(grid["margin"])
    E = labels.E
    return {
        "H": np.linspace(margin * E, (1.0 - margin) * E, int(grid["nH"])),
        "L": np.linspace(-float(grid["L_max"]) * params.hbar, float(grid["L_max"]) * params.hbar, int(grid["nL"])),
        "chi": np.linspace(0.0, TWO_PI, int(grid["nchi"]), endpoint=False),
    }


def _check_interior(H_values, E):
    H_values = np.asarray(H_values, dtype=float)
    if np.any(H_values <= 0.0) or np.any(H_values >= E):
        logging.debug("residual check returning error 'grid touches H = 0 or H = E'")
        raise SingularGridError(f"H grid must lie strictly inside (0, {E})")


def _project_reduced(op):
    """Drop every term with a T or chi derivative."""
    return DifferentialOperator(op.chart_name, op.variables, op.ring_variables,
                                tuple(item for item in op.terms if item[0][0][0] == 0 and item[0][0][1] == 0))


SYSTEMS = {
    "full": (("H", "left"), ("L", "left")),
    "reduced": (("H", "left"), ("L", "left")),
    "cross": (("H", "left"), ("L", "left"), ("L", "right"), ("H", "right")),
}


def pde_residuals(labels, params=None, system="reduced", grid=None, operators="reference", settings=None):
    """Max normalized residual of the star-eigenvalue equations on an interior grid.

    The H equations are scaled by E |N| / sqrt(H (E - H)), the L equations by
    (hbar (1 + |m|) + |L|) |N| / sqrt(H (E - H)).
    """
    settings = resolve_settings(settings)
    params = params or PhysParams()
    started = time.perf_counter()
    logging.info(f"pde_residuals called for labels '{labels}' and system '{system}'")
    if system not in SYSTEMS:
        raise ValueError(f"Unknown system '{system}'. Available: {', '.join(SYSTEMS)}")
    grid = grid or default_grid(labels, settings, params)
    _check_interior(grid["H"], labels.E)
    ops = operator_set(operators, settings)
    W = closed_form_expr(labels, params)
    chi, Hs, Ls = np.meshgrid(np.asarray(grid["chi"], dtype=float), np.asarray(grid["H"], dtype=float),
                              np.asarray(grid["L"], dtype=float), indexing="ij")
    _, n = norm_constants(labels, params)
    envelope = abs(n) / np.sqrt(Hs * (labels.E - Hs))
    worst = {}
    for name, side in SYSTEMS[system]:
        op = ops[(name, side)]
        if system == "reduced":
            op = _project_reduced(op)
        if name == "H":
            eigenvalue = labels.E
            scale = labels.E * envelope
        else:
            index = labels.m if side == "left" else labels.m_prime
            eigenvalue = index * params.hbar
            scale = (params.hbar * (1.0 + abs(index)) + np.abs(Ls)) * envelope
        residual = op.apply_sympy(W, M=params.M, hbar=params.hbar) - eigenvalue * W
        values = _numeric(residual)(chi, Hs, Ls)
        worst[f"{side} {name}"] = float(np.max(np.abs(values) / scale))
    params_out = {
        "labels": {"E": labels.E, "m": labels.m, "m_prime": labels.m_prime, "alpha": labels.alpha,
                   "D_offset": labels.D_offset},
        "system": system,
        "operators": operators if isinstance(operators, str) else "custom",
        "grid": {"H": [float(np.min(Hs)), float(np.max(Hs)), len(grid["H"])],
                 "L": [float(np.min(Ls)), float(np.max(Ls)), len(grid["L"])], "chi": list(map(float, grid["chi"]))},
        "equations": worst,
    }
    return VerificationReport.from_error("pde_residuals", max(worst.values()), _tol(settings, "pde"), params_out, started)


def b_functions(labels, params):
    """(B1, B2) with W = B1 cos(Phi) + B2 sin(Phi), Phi = (2L/hbar) sqrt((E - H)/H)."""
    E = sp.Float(labels.E)
    _, n = norm_constants(labels, params)
    amplitude = ((sp.Float(n.real) + sp.I * sp.Float(n.imag))
                 * sp.exp(sp.I * sp.Float(labels.m - labels.m_prime) * CHI_SYM) / sp.sqrt(H_SYM * (E - H_SYM)))
    phase = sp.Float(labels.m + labels.m_prime) * sp.acos(sp.sqrt(H_SYM / E)) - sp.Float(labels.D_offset)
    return amplitude * sp.cos(phase), amplitude * sp.sin(phase)


def ode_residuals_B1B2(labels, H_grid=None, params=None, chi_values=(0.0, 1.0, 2.5), settings=None):
    settings = resolve_settings(settings)
    params = params or PhysParams()
    started = time.perf_counter()
    logging.info(f"ode_residuals_B1B2 called for labels '{labels}'")
    E = labels.E
    if H_grid is None:
        margin = float(settings["grid"]["margin"])
        H_grid = np.linspace(margin * E, (1.0 - margin) * E, 200)
    _check_interior(H_grid, E)
    B1, B2 = b_functions(labels, params)
    d = sp.Float(labels.m - labels.m_prime)
    s = sp.Float(labels.m + labels.m_prime)
    Es = sp.Float(E)
    root = sp.sqrt((Es - H_SYM) * H_SYM)
    equations = {
        "chi_B1": d * B1 + sp.I * sp.diff(B1, CHI_SYM),
        "chi_B2": d * B2 + sp.I * sp.diff(B2, CHI_SYM),
        "H_B2": root * s * B1 + (Es - 2 * H_SYM) * B2 + 2 * (Es - H_SYM) * H_SYM * sp.diff(B2, H_SYM),
        "H_B1": -root * s * B2 + (Es - 2 * H_SYM) * B1 + 2 * (Es - H_SYM) * H_SYM * sp.diff(B1, H_SYM),
    }
    chi, Hs = np.meshgrid(np.asarray(chi_values, dtype=float), np.asarray(H_grid, dtype=float), indexing="ij")
    Ls = np.zeros_like(Hs)
    _, n = norm_constants(labels, params)
    envelope = abs(n) / np.sqrt(Hs * (E - Hs))
    worst = {}
    for name, expr in equations.items():
        scale = (1.0 + abs(labels.m - labels.m_prime)) if name.startswith("chi") else E
        worst[name] = float(np.max(np.abs(_numeric(expr)(chi, Hs, Ls)) / (scale * envelope)))
    # the decomposition reproduces the closed form
    L_sample = 3.0 * params.hbar
    phi = 2.0 * L_sample / params.hbar * np.sqrt((E - Hs) / Hs)
    rebuilt = _numeric(B1)(chi, Hs, Ls) * np.cos(phi) + _numeric(B2)(chi, Hs, Ls) * np.sin(phi)
    direct = W_Emmp_array(labels, params, chi, Hs, np.full_like(Hs, L_sample))
    worst["decomposition"] = float(np.max(np.abs(rebuilt - direct) / envelope))
    params_out = {"labels": {"E": E, "m": labels.m, "m_prime": labels.m_prime}, "H_points": len(H_grid),
                  "chi": list(map(float, chi_values)), "equations": worst}
    return VerificationReport.from_error("ode_residuals_B1B2", max(worst.values()), _tol(settings, "ode"),
                                         params_out, started)


def hermiticity_check(params=None, rng=None, points=1000, settings=None):
    settings = resolve_settings(settings)
    params = params or PhysParams()
    rng = rng or np.random.default_rng(0)
    started = time.perf_counter()
    logging.info(f"hermiticity_check called for {points} points")
    E = 1.0
    chi = rng.uniform(0.0, TWO_PI, points)
    Hs = rng.uniform(0.01 * E, 0.99 * E, points)
    Ls = rng.uniform(-10.0 * params.hbar, 10.0 * params.hbar, points)
    conj_error = 0.0
    for m, mp in ((2.0, -1.0), (0.5, 1.25), (3.0, 0.0)):
        a = EigenLabels(E, m, mp, alpha=0.4)
        b = EigenLabels(E, mp, m, alpha=0.4)
        _, n = norm_constants(a, params)
        envelope = abs(n) / np.sqrt(Hs * (E - Hs))
        diff = np.conj(W_Emmp_array(a, params, chi, Hs, Ls)) - W_Emmp_array(b, params, chi, Hs, Ls)
        conj_error = max(conj_error, float(np.max(np.abs(diff) / envelope)))
    reduction = 0.0
    diagonal = EigenLabels(E, 1.0, alpha=0.4)
    n_em, _ = norm_constants(diagonal, params)
    for c, h, l in zip(chi[:100], Hs[:100], Ls[:100]):
        single = eval_W_Em(diagonal, ActionAnglePoint(0.0, c, h, l), params)
        vector = W_Emmp_array(diagonal, params, c, h, l)
        reduction = max(reduction, abs(complex(vector) - single) * math.sqrt(h * (E - h)) / n_em)
    expected_n = 1.0 / (4.0 * math.pi ** 3 * params.M * params.hbar ** 2)
    labels = EigenLabels(E, 2.0, -1.0, alpha=0.4)
    n_em, n_emmp = norm_constants(labels, params)
    constants = max(abs(n_em - expected_n) / expected_n, abs(abs(n_emmp) - n_em) / n_em,
                    abs(n_emmp / n_em - complex(math.cos(3.0 * 0.4), math.sin(3.0 * 0.4))))
    tol = _tol(settings, "hermiticity")
    parts = [("conjugate_swap", conj_error, tol), ("diagonal_reduction", reduction, tol), ("constants", constants, tol)]
    return _combine("hermiticity_check", parts, {"points": points, "E": E}, started)


def marginal_check(params=None, points=200, z_max=20.0, settings=None):
    """Integer m and m = 1/2 stay nonnegative; 1 < m < 2 goes negative; both closed forms match quadrature."""
    settings = resolve_settings(settings)
    params = params or PhysParams()
    started = time.perf_counter()
    logging.info(f"marginal_check called for {points} points up to z = {z_max}")
    cfg = QuadratureConfig.from_settings(settings["quadrature"])
    E = 1.0
    positivity_tol = _tol(settings, "positivity")
    closed_error = 0.0
    integer_negativity = 0.0
    positive = {}
    minima = {}
    for m in (0, 1, 2, 5):
        labels = EigenLabels(E, float(m))
        r = np.linspace(0.0, z_max, points) * params.hbar / labels.p0(params)
        curve = marginal_P_Em(labels, params, r, cfg)
        closed_error = max(closed_error, curve.max_relative_error)
        scale = float(np.max(np.abs(curve.P)))
        minima[str(m)] = float(np.min(curve.P))
        integer_negativity = max(integer_negativity, max(0.0, -float(np.min(curve.P))) / scale)
        positive[str(m)] = bool(np.min(curve.P) >= -positivity_tol * scale)
    # sin(m pi) < 0 puts P(0) below zero for 1 < m < 2
    missing_negativity = 0
    for m in (4.0 / 3.0, 1.5, 1.75):
        labels = EigenLabels(E, m)
        r = np.linspace(0.0, z_max, points) * params.hbar / labels.p0(params)
        curve = marginal_P_Em(labels, params, r, cfg)
        minima[f"{m:.6g}"] = float(np.min(curve.P))
        positive[f"{m:.6g}"] = bool(np.min(curve.P) >= 0.0)
        if np.min(curve.P) >= 0.0:
            missing_negativity += 1
    half_error = 0.0
    half_negativity = 0.0
    for m in (0.5, 1.5, 2.5):
        labels = EigenLabels(E, m)
        r = np.linspace(0.0, z_max, points) * params.hbar / labels.p0(params)
        curve = marginal_P_Em(labels, params, r, cfg)
        half_error = max(half_error, curve.max_relative_error)
        if m == 0.5:
            minima["0.5"] = float(np.min(curve.P))
            positive["0.5"] = bool(np.min(curve.P) >= 0.0)
            half_negativity = max(0.0, -float(np.min(curve.P))) / float(np.max(np.abs(curve.P)))
    # chi-integrated polar W does not depend on phi
    labels = EigenLabels(E, 1.0)
    p0 = labels.p0(params)
    phi_error = 0.0
    for r, p in ((1.5 * params.hbar / p0, 0.5 * p0), (4.0 * params.hbar / p0, 0.8 * p0)):
        values = [adaptive_integrate(lambda c: eval_W_Em_polar(labels, (r, phi, p, c), params), 0.0, TWO_PI, cfg)[0]
                  for phi in (0.0, 1.3)]
        phi_error = max(phi_error, abs(values[0] - values[1]) / max(abs(values[0]), 1e-300))
    tol = _tol(settings, "marginal")
    parts = [
        ("integer_closed_form", closed_error, tol),
        ("integer_nonnegative", integer_negativity, positivity_tol),
        ("non_integer_negative", missing_negativity, 0.0),
        ("half_integer_closed_form", half_error, tol),
        ("half_integer_nonnegative", half_negativity, positivity_tol),
        ("phi_independence", phi_error, tol),
    ]
    return _combine("marginal_check", parts, {"points": points, "z_max": z_max, "minima": minima,
                                              "marginal_positive": positive}, started)


def blowup_probe(E=1.0, m=0.0, params=None, A1=1.0, A2=0.0, H_ratio=2.0, steps=9, settings=None):
    """The H > E solution grows without bound along L = hbar 2^k unless A1 = A2 = 0."""
    params = params or PhysParams()
    started = time.perf_counter()
    logging.info(f"blowup_probe called for E '{E}' and m '{m}' and A1 '{A1}' and A2 '{A2}'")
    H = H_ratio * E
    kappa = 2.0 / params.hbar * math.sqrt((H - E) / H)
    Ls = [params.hbar * 2.0 ** k for k in range(steps)]
    values = [eval_general_solution_above(E, A1, A2, H, l, params) for l in Ls]
    ratio_error = 0.0
    for (l1, v1), (l2, v2) in zip(zip(Ls, values), zip(Ls[1:], values[1:])):
        if v1 != 0.0:
            expected = math.exp(kappa * (l2 - l1)) if A2 == 0.0 else v2 / v1
            ratio_error = max(ratio_error, abs(v2 / v1 - expected) / expected)
    growing = all(abs(b) > abs(a) for a, b in zip(values, values[1:]))
    zero = all(eval_general_solution_above(E, 0.0, 0.0, H, l, params) == 0.0 for l in Ls)
    mirror = max(abs(eval_general_solution_above(E, A1, A2, H, l, params)
                     - eval_general_solution_above(E, A2, A1, H, -l, params)) / max(abs(v), 1e-300)
                 for l, v in zip(Ls, values))
    parts = [
        ("unbounded_growth", 0.0 if growing or (A1 == 0.0 and A2 == 0.0) else 1.0, 0.0),
        ("growth_ratio", ratio_error, 1e-12),
        ("zero_solution", 0.0 if zero else 1.0, 0.0),
        ("mirror_symmetry", mirror, 1e-12),
    ]
    return _combine("blowup_probe", parts, {"E": E, "m": m, "H": H, "A1": A1, "A2": A2, "L": Ls,
                                            "values": values}, started)


# --- Identities ---

def floor_identity_sides(theta):
    """(sgn(tan t) arccos|cos t|, t - pi floor((t + pi/2)/pi)); arccos|cos| evaluated as atan2(|sin|, |cos|)."""
    theta = np.asarray(theta, dtype=float)
    lhs = np.sign(np.tan(theta)) * np.arctan2(np.abs(np.sin(theta)), np.abs(np.cos(theta)))
    rhs = theta - math.pi * np.floor((theta + 0.5 * math.pi) / math.pi)
    return lhs, rhs


def floor_identity_error(points=10_000, span=4.0 * math.pi):
    theta = np.linspace(-span, span, points)
    theta = theta[np.abs(np.cos(theta)) > 1e-9]
    lhs, rhs = floor_identity_sides(theta)
    return float(np.max(np.abs(lhs - rhs)))


def central_difference(f, x, scale=1.0):
    """Richardson-combined central difference with h = 1e-5 * scale; returns (derivative, estimate spread)."""
    h = 1e-5 * scale
    coarse = (f(x + h) - f(x - h)) / (2.0 * h)
    fine = (f(x + 0.5 * h) - f(x - 0.5 * h)) / h
    return (4.0 * fine - coarse) / 3.0, abs(fine - coarse)


def four_angles(E, H):
    """The set {theta, pi - theta, pi + theta, 2 pi - theta}, theta = arccos sqrt(H/E)."""
    if not 0.0 < H < E:
        raise ValueError(f"The angle set needs 0 < H < E, got H={H}, E={E}")
    theta = math.acos(math.sqrt(H / E))
    return (theta, math.pi - theta, math.pi + theta, TWO_PI - theta)


def chi_prime_constraint(chi1, chi2, E, H):
    """|tan chi''| - sqrt((E cos^2(chi' - chi'') - H cos^2 chi'') / (H cos^2 chi''))."""
    c2 = math.cos(chi2) ** 2
    return abs(math.tan(chi2)) - math.sqrt((E * math.cos(chi1 - chi2) ** 2 - H * c2) / (H * c2))


def energy_constraint(E_tilde, chi2, alpha, H):
    beta = chi2 + alpha
    cb = math.cos(beta) ** 2
    return abs(math.tan(beta)) - math.sqrt((E_tilde * math.cos(alpha) ** 2 - H * cb) / (H * cb))


def delta_factor_errors(rng, samples=25):
    """Relative errors of the three closed-form |d constraint|^-1 factors against finite differences."""
    F_error = G_error = shell_error = root_error = 0.0
    for _ in range(samples):
        E = float(rng.uniform(0.5, 2.0))
        H = float(rng.uniform(0.1, 0.9)) * E
        chi2 = float(rng.uniform(0.2, 0.5 * math.pi - 0.2)) + 0.5 * math.pi * int(rng.integers(0, 4))
        for alpha in four_angles(E, H):
            chi1 = chi2 + alpha
            root_error = max(root_error, abs(chi_prime_constraint(chi1, chi2, E, H)))
            d, _ = central_difference(lambda c: chi_prime_constraint(c, chi2, E, H), chi1)
            closed = math.sqrt(H / (E - H)) * abs(math.sin(chi2) * math.cos(chi2))
            F_error = max(F_error, abs(1.0 / abs(d) - closed) / closed)
            beta = chi2 + alpha
            if abs(math.sin(beta) * math.cos(beta)) > 0.05:
                d, _ = central_difference(lambda e: energy_constraint(e, chi2, alpha, H), E, scale=E)
                closed = 2.0 * E * abs(math.sin(beta) * math.cos(beta))
                G_error = max(G_error, abs(1.0 / abs(d) - closed) / closed)
        psi = math.acos(math.sqrt(H / E))
        for sign in (1.0, -1.0):
            d, _ = central_difference(lambda e: -sign * psi - sign * math.acos(math.sqrt(H / e)), E, scale=E)
            closed = 2.0 * E * math.sqrt((E - H) / H)
            shell_error = max(shell_error, abs(1.0 / abs(d) - closed) / closed)
    return {"chi_prime": F_error, "energy": G_error, "energy_shell": shell_error, "roots": root_error}


def _delta_systems():
    root3 = optimize.brentq(lambda x: math.sin(x) - 0.5 * (1.0 - x), 0.0, 1.0, xtol=1e-15)
    return [
        (lambda x, y: x - 0.3, lambda x, y: y + 0.2 + 0.5 * x * x,
         lambda x, y: np.array([[1.0, 0.0], [x, 1.0]]),
         lambda x, y: math.exp(-(x * x + y * y)) * (1.0 + x * y),
         [(0.3, -0.245)]),
        (lambda x, y: x * x + y * y - 1.0, lambda x, y: x - y,
         lambda x, y: np.array([[2.0 * x, 2.0 * y], [1.0, -1.0]]),
         lambda x, y: math.cos(x) + y * y,
         [(math.sqrt(0.5), math.sqrt(0.5)), (-math.sqrt(0.5), -math.sqrt(0.5))]),
        (lambda x, y: math.sin(x) - 0.5 * y, lambda x, y: x + y - 1.0,
         lambda x, y: np.array([[math.cos(x), -0.5], [1.0, 1.0]]),
         lambda x, y: math.exp(-x * x) * (2.0 + y),
         [(root3, 1.0 - root3)]),
    ]


def _mollified_delta_integral(f1, f2, h, jac, root, eps):
    """Gaussian-mollified int delta(f1) delta(f2) h over a box around one root, in u = (x - x0)/eps."""
    x0, y0 = root
    width = 12.0 * max(1.0, float(np.linalg.norm(np.linalg.inv(jac(x0, y0)), 2)))
    norm = 1.0 / (2.0 * math.pi)

    def integrand(v, u):
        x, y = x0 + eps * u, y0 + eps * v
        a, b = f1(x, y) / eps, f2(x, y) / eps
        return norm * math.exp(-0.5 * (a * a + b * b)) * h(x, y)

    value, _ = integrate.dblquad(integrand, -width, width, -width, width, epsabs=1e-13, epsrel=1e-12)
    return value


def delta_identity_error(eps=0.02):
    """Brute-force mollified delta products against the sum over roots of h / |det J|, Richardson in eps^2."""
    worst = 0.0
    for f1, f2, jac, h, roots in _delta_systems():
        expected = sum(h(x, y) / abs(np.linalg.det(jac(x, y))) for x, y in roots)
        levels = [sum(_mollified_delta_integral(f1, f2, h, jac, r, e) for r in roots) for e in (eps, eps / 2, eps / 4)]
        r1 = (4.0 * levels[1] - levels[0]) / 3.0
        r2 = (4.0 * levels[2] - levels[1]) / 3.0
        extrapolated = (16.0 * r2 - r1) / 15.0
        worst = max(worst, abs(extrapolated - expected) / max(abs(expected), 1.0))
    return worst


FOURIER_COS_CASES = ((1.5, 0.3, 1.2, 0.05), (2.0, 1.1, -2.0, 0.02), (0.7, -0.4, 0.0, 0.1))


def fourier_cos_error(cfg=None):
    worst = 0.0
    for a, b, t, eps in FOURIER_COS_CASES:
        numeric, analytic = mollified_fourier_cos(a, b, t, eps, cfg)
        worst = max(worst, abs(numeric - analytic) / math.sqrt(math.pi / eps))
    return worst


# Ranges as printed: (u_minus, u_plus, shifted floor, plain floor, phase exponent / pi)
TABLE_ROWS = (
    (lambda a: -0.5 * math.pi, lambda a: 0.5 * math.pi - a, 0, 0, lambda m, mp, mt, mtp: 0.0),
    (lambda a: 0.5 * math.pi, lambda a: 1.5 * math.pi - a, 1, 1, lambda m, mp, mt, mtp: -mt - mtp + m + mp),
    (lambda a: 2.5 * math.pi - a, lambda a: 1.5 * math.pi, 1, 3, lambda m, mp, mt, mtp: -3 * mt - 3 * mtp + m + mp),
    (lambda a: 1.5 * math.pi - a, lambda a: 0.5 * math.pi, 0, 2, lambda m, mp, mt, mtp: -2 * mt - 2 * mtp),
)


@dataclass(frozen=True)
class LedgerRow:
    alpha: float
    quadrant: int
    u_minus: float
    u_plus: float
    floor_shifted: int  # floor((chi'' - chi + alpha + pi/2)/pi) recomputed
    floor_plain: int  # floor((chi'' - chi + pi/2)/pi) recomputed
    table_floor_shifted: int
    table_floor_plain: int
    phase: complex
    table_phase: complex
    reduction: complex
    reduction_numeric: complex
    heaviside_ok: bool

    @property
    def floors_swapped(self):
        return ((self.table_floor_shifted, self.table_floor_plain) != (self.floor_shifted, self.floor_plain)
                and (self.table_floor_shifted, self.table_floor_plain) == (self.floor_plain, self.floor_shifted))


@dataclass(frozen=True)
class CaseLedger:
    E: float
    H: float
    indices: tuple  # (m, m', m~, m~')
    chi: float
    alphas: tuple
    rows: tuple

    def to_dict(self):
        return _json_safe({
            "E": self.E, "H": self.H, "indices": self.indices, "chi": self.chi, "alphas": self.alphas,
            "rows": [{**row.__dict__, "floors_swapped": row.floors_swapped} for row in self.rows],
        })


def _heaviside_product(x, alpha):
    return (math.cos(x + alpha) / math.cos(alpha) > 0.0) and (math.cos(x) / math.cos(alpha) > 0.0)


def reduction_factor(alpha, u_minus, u_plus, k, chi=0.0):
    """int_0^{2 pi} e^{2 i k chi''} over chi'' - chi in (u_-, u_+), closed form."""
    if abs(k) < 1e-14:
        return complex(abs(math.pi - alpha))
    A = (chi + u_minus) % TWO_PI
    B = (chi + u_plus) % TWO_PI
    wrap = 1.0 if A > B else 0.0
    e = lambda z: complex(math.cos(z), math.sin(z))
    return (e(2 * k * B) - e(2 * k * A) + wrap * (e(4 * math.pi * k) - 1.0)) / (2j * k)


def case_ledger(E, H, indices, chi=0.0, cfg=None):
    """The four alpha cases with recomputed floors, phases and reduction factors beside the printed table."""
    m, mp, mt, mtp = indices
    alphas = four_angles(E, H)
    k = mt - mp
    rows = []
    for quadrant, (alpha, row) in enumerate(zip(alphas, TABLE_ROWS), start=1):
        lo_fn, hi_fn, table_shifted, table_plain, exponent = row
        lo, hi = lo_fn(alpha), hi_fn(alpha)
        inner = np.linspace(lo, hi, 11)[1:-1]
        shifted = {math.floor((x + alpha + 0.5 * math.pi) / math.pi) for x in inner}
        plain = {math.floor((x + 0.5 * math.pi) / math.pi) for x in inner}
        inside = all(_heaviside_product(x, alpha) for x in inner)
        grid = np.linspace(0.0, TWO_PI, 4001)[:-1]
        measure = sum(_heaviside_product(x, alpha) for x in grid) * TWO_PI / len(grid)
        heaviside_ok = inside and len(shifted) == 1 and len(plain) == 1 and abs(measure - (hi - lo)) < 4.0 * TWO_PI / len(grid)
        f1, f2 = min(shifted), min(plain)
        phase = complex(np.exp(-1j * (mt + mtp) * math.pi * f1 + 1j * (m + mp) * math.pi * f2))
        table_phase = complex(np.exp(1j * math.pi * exponent(m, mp, mt, mtp)))
        reduction = reduction_factor(alpha, lo, hi, k, chi)
        points = sorted({(chi + lo) % TWO_PI, (chi + hi) % TWO_PI})
        numeric, _ = adaptive_integrate_complex(
            lambda c: complex(math.cos(2 * k * c), math.sin(2 * k * c)) if _heaviside_product(c - chi, alpha) else 0j,
            0.0, TWO_PI, cfg, points=points)
        rows.append(LedgerRow(alpha, quadrant, lo, hi, f1, f2, table_shifted, table_plain, phase, table_phase,
                              reduction, numeric, heaviside_ok))
    return CaseLedger(E, H, tuple(indices), chi, alphas, tuple(rows))


def ledger_errors(ledger):
    phase = max(abs(r.phase - r.table_phase) for r in ledger.rows)
    reduction = max(abs(r.reduction - r.reduction_numeric) for r in ledger.rows)
    floors = sum(1 for r in ledger.rows
                 if (r.table_floor_shifted, r.table_floor_plain) not in ((r.floor_shifted, r.floor_plain),
                                                                          (r.floor_plain, r.floor_shifted)))
    heaviside = sum(1 for r in ledger.rows if not r.heaviside_ok)
    return {"phase": phase, "reduction": reduction, "floors": floors, "heaviside": heaviside,
            "swapped_rows": [r.quadrant for r in ledger.rows if r.floors_swapped]}


def constraint_case_mismatches(H=0.4, points=10_000):
    """Solvability of -psi -/+ arccos sqrt(H/E) = 0 mod 2 pi with E = H / cos^2 psi against the interval rule."""
    mismatches = 0
    worst = 0.0
    psi_values = np.linspace(0.0, TWO_PI, points + 2)[1:-1]
    for psi in psi_values:
        if min(abs(math.cos(psi)), abs(math.sin(psi))) < 1e-6:
            continue
        E = H / math.cos(psi) ** 2
        for sign, rule in ((-1.0, 1.5 * math.pi < psi < TWO_PI), (1.0, 0.0 < psi < 0.5 * math.pi)):
            # sign = -1 is the '-' choice: chi - chi0 = -arccos(...) mod 2 pi
            residual = (psi - sign * math.acos(min(1.0, math.sqrt(H / E))) + math.pi) % TWO_PI - math.pi
            solvable = abs(residual) < 1e-9
            if solvable != rule:
                mismatches += 1
            if solvable:
                worst = max(worst, abs(residual))
    return mismatches, worst


def identity_suite(rng=None, settings=None):
    settings = resolve_settings(settings)
    rng = rng or np.random.default_rng(0)
    started = time.perf_counter()
    logging.info("identity_suite called")
    cfg = QuadratureConfig.from_settings(settings["quadrature"])
    factors = delta_factor_errors(rng)
    ledger_int = ledger_errors(case_ledger(1.0, 0.37, (1, 0, 1, 0), chi=0.9, cfg=cfg))
    ledger_frac = ledger_errors(case_ledger(1.0, 0.62, (0.5, 0.0, 0.25, 0.0), chi=2.3, cfg=cfg))
    mismatches, solution_residual = constraint_case_mismatches()
    fd = _tol(settings, "finite_difference")
    ledger_tol = _tol(settings, "ledger")
    parts = [
        ("floor_identity", floor_identity_error(), _tol(settings, "floor")),
        ("chi_prime_factor", factors["chi_prime"], fd),
        ("energy_factor", factors["energy"], fd),
        ("energy_shell_factor", factors["energy_shell"], fd),
        ("constraint_roots", factors["roots"], _tol(settings, "floor")),
        ("delta_identity", delta_identity_error(), _tol(settings, "delta_identity")),
        ("fourier_cos", fourier_cos_error(cfg), _tol(settings, "fourier_cos")),
        ("ledger_phase", max(ledger_int["phase"], ledger_frac["phase"]), ledger_tol),
        ("ledger_reduction", max(ledger_int["reduction"], ledger_frac["reduction"]), ledger_tol),
        ("ledger_floors", ledger_int["floors"] + ledger_frac["floors"], 0.0),
        ("ledger_heaviside", ledger_int["heaviside"] + ledger_frac["heaviside"], 0.0),
        ("constraint_cases", mismatches, 0.0),
        ("constraint_solution", solution_residual, ledger_tol),
    ]
    return _combine("identity_suite", parts, {"floor_columns_swapped_in_rows": ledger_int["swapped_rows"]}, started)


# --- Jacobi-Anger and the momentum expansion ---

def jacobi_anger_partial_sum(z, phi, M):
    m = np.arange(-M, M + 1)
    return complex(np.sum((1j ** m) * special.jv(m, z) * np.exp(1j * m * phi)))


def jacobi_anger_residual(z_max=10.0, M_max=40, nz=201, nphi=64, settings=None):
    settings = resolve_settings(settings)
    started = time.perf_counter()
    logging.info(f"jacobi_anger_residual called for z_max '{z_max}' and M_max '{M_max}'")
    if not 0.0 <= z_max <= 10.0 or M_max < 40:
        logging.debug("jacobi_anger_residual returning error 'needs z_max <= 10 and M_max >= 40'")
        raise ValueError(f"Jacobi-Anger residual needs 0 <= z_max <= 10 and M_max >= 40, got {z_max}, {M_max}")
    z = np.linspace(0.0, z_max, nz)
    phi = np.linspace(0.0, TWO_PI, nphi, endpoint=False)
    exact = np.exp(1j * np.outer(z, np.cos(phi)))

    def sup_error(M):
        m = np.arange(-M, M + 1)
        coeffs = (1j ** m)[None, :] * special.jv(m[None, :], z[:, None])
        return float(np.max(np.abs(coeffs @ np.exp(1j * np.outer(m, phi)) - exact)))

    tail = {M: sup_error(M) for M in (5, 10, 15, 20, 30, M_max)}
    params = {"z_max": z_max, "M_max": M_max, "nz": nz, "nphi": nphi, "tail": tail}
    return VerificationReport.from_error("jacobi_anger_residual", tail[M_max], _tol(settings, "jacobi_anger"),
                                         params, started)


def momentum_descriptor(E_tilde, chi0, params):
    return MomentumEigenDescriptor(E_tilde, chi0, 1.0 / ((2.0 * math.pi * params.hbar) ** 2 * params.M))


def expansion_terms(E_tilde, chi0, alpha, M_max, phi, params, cfg=None):
    """{(m~, m~'): C * <W_{E~ m~ m~'}, phi>} for |m~|, |m~'| <= M_max, zero chi moments skipped."""
    terms = {}
    scale = max(abs(c) for _, c in phi.harmonics)
    radial_cache = {}
    for mt in range(-M_max, M_max + 1):
        for mtp in range(-M_max, M_max + 1):
            if abs(phi.chi_moment(mt - mtp)) < 1e-12 * scale:
                continue  # harmonic orthogonality
            labels = EigenLabels(E_tilde, float(mt), float(mtp), alpha=alpha)
            s = mt + mtp
            if s not in radial_cache:
                radial_cache[s] = radial_pairing(labels, params, phi, cfg)
            _, n_emmp = norm_constants(labels, params)
            pairing = n_emmp * phi.chi_moment(mt - mtp) * radial_cache[s]
            terms[(mt, mtp)] = expansion_coefficients(mt, mtp, chi0, alpha) * pairing
    return terms


def truncated_sum(terms, M):
    return sum((v for (mt, mtp), v in terms.items() if abs(mt) <= M and abs(mtp) <= M), 0j)


def product_closed_form_pairing(E, m, m_prime, chi0, alpha, phi, params, cfg=None):
    """Paired product of W_Emm' with the momentum state (the common delta(E - E~) dropped)."""
    labels = EigenLabels(E, m, m_prime, alpha=alpha)
    _, n_emmp = norm_constants(labels, params)
    n_p = momentum_descriptor(E, chi0, params).N
    hbar = params.hbar

    def integrand(psi):
        c = math.cos(psi)
        if c <= 0.0:
            return 0j
        phase = complex(np.exp(1j * (2.0 * m * (chi0 + psi) - (m + m_prime) * chi0)))
        value = phase * complex(phi.chi_factor(chi0 + psi)) * float(phi.H_factor(E * c * c))
        return value * phi.L_gaussian_integral(2.0 * math.tan(psi) / hbar)

    value, _ = adaptive_integrate_complex(integrand, -0.5 * math.pi, 0.5 * math.pi, cfg, points=[0.0])
    return n_emmp * n_p * value


def product_sum_pairing(E, m, m_prime, chi0, alpha, M_max, phi, params, cfg=None):
    """Paired single sum over m~' left by the cross-Wigner normalisation rule."""
    labels = EigenLabels(E, m, m_prime, alpha=alpha)
    _, n_emmp = norm_constants(labels, params)
    n_p = momentum_descriptor(E, chi0, params).N
    total = 0j
    for mtp in range(-M_max, M_max + 1):
        moment = phi.chi_moment(m - mtp)
        if abs(moment) < 1e-12:
            continue
        weight = complex(math.cos((mtp - m_prime) * chi0), math.sin((mtp - m_prime) * chi0)) / TWO_PI
        total += weight * moment * radial_pairing(EigenLabels(E, m, float(mtp)), params, phi, cfg)
    return n_emmp * n_p * total


def product_expansion_check(E=1.0, m=1.0, m_prime=0.0, chi0=0.7, alpha=-0.5 * math.pi, M_max=40, phi=None,
                            params=None, settings=None):
    settings = resolve_settings(settings)
    params = params or PhysParams()
    started = time.perf_counter()
    logging.info(f"product_expansion_check called for E '{E}' and m '{m}' and m_prime '{m_prime}'")
    cfg = QuadratureConfig.from_settings(settings["quadrature"])
    phi = phi or default_test_function(E, params.hbar)
    closed = product_closed_form_pairing(E, m, m_prime, chi0, alpha, phi, params, cfg)
    summed = product_sum_pairing(E, m, m_prime, chi0, alpha, M_max, phi, params, cfg)
    error = abs(summed - closed) / abs(closed)
    return VerificationReport.from_error(
        "product_expansion_check", error, _tol(settings, "reconstruction"),
        {"E": E, "m": m, "m_prime": m_prime, "chi0": chi0, "alpha": alpha, "M_max": M_max,
         "closed_form": closed, "truncated_sum": summed}, started)


def reconstruction_check(E_tilde=1.0, chi0=0.7, alpha=-0.5 * math.pi, M_max=40, phi=None, params=None,
                         trend=(8, 16, 32, 40), settings=None):
    """Weak-form comparison of the momentum state with its truncated cross-Wigner expansion."""
    settings = resolve_settings(settings)
    params = params or PhysParams()
    started = time.perf_counter()
    logging.info(f"reconstruction_check called for E_tilde '{E_tilde}' and chi0 '{chi0}' and alpha '{alpha}' and M_max '{M_max}'")
    cfg = QuadratureConfig.from_settings(settings["quadrature"])
    if not cfg.singularity_substitution:
        logging.debug("reconstruction_check returning error 'pairing needs singularity substitution'")
        raise ValueError("reconstruction_check pairs singular families; enable singularity_substitution")
    phi = phi or default_test_function(E_tilde, params.hbar)
    lhs = momentum_pairing_limit(momentum_descriptor(E_tilde, chi0, params), phi)
    terms = expansion_terms(E_tilde, chi0, alpha, M_max, phi, params, cfg)
    levels = sorted({M for M in trend if M <= M_max} | {M_max})
    errors = {M: abs(truncated_sum(terms, M) - lhs) / abs(lhs) for M in levels}
    slack = 1e-9
    violations = sum(1 for a, b in zip(levels, levels[1:]) if errors[b] > errors[a] + slack)
    closed = product_closed_form_pairing(E_tilde, 1.0, 0.0, chi0, alpha, phi, params, cfg)
    summed = product_sum_pairing(E_tilde, 1.0, 0.0, chi0, alpha, M_max, phi, params, cfg)
    # alpha = -pi/2 gives the plane-wave coefficients i^m e^{-i m chi0} / sqrt(2 pi)
    phase = 0.0
    for mt in range(-5, 6):
        for mtp in range(-5, 6):
            c = expansion_coefficients(mt, mtp, chi0, -0.5 * math.pi)
            a = (1j ** mt) * np.exp(-1j * mt * chi0)
            b = (1j ** mtp) * np.exp(-1j * mtp * chi0)
            phase = max(phase, abs(c - a * np.conj(b) / TWO_PI))
    tol = _tol(settings, "reconstruction")
    parts = [
        ("double_sum", errors[M_max], tol),
        ("closed_form_product", abs(summed - closed) / abs(closed), tol),
        ("convergence_trend", violations, 0.0),
        ("plane_wave_phases", phase, 1e-12),
    ]
    params_out = {"E_tilde": E_tilde, "chi0": chi0, "alpha": alpha, "M_max": M_max, "lhs": lhs,
                  "double_sum": truncated_sum(terms, M_max), "trend": errors,
                  "test_function": {"harmonics": phi.harmonics, "H_center": phi.H_center, "H_width": phi.H_width,
                                    "sigma_L": phi.sigma_L}}
    return _combine("reconstruction_check", parts, params_out, started)


# --- Registered runners ---

@register_check("chart_check", "charts", "Round trips, Jacobian determinant, canonical brackets, rest-point rejection")
def _run_chart(settings, rng):
    return chart_check(_params_from(settings), rng, int(settings["checks"]["random_points"]), settings)


@register_check("connection_check", "charts", "Transported connection table, symmetry and form preservation")
def _run_connection(settings, rng):
    return connection_check(_params_from(settings), rng, int(settings["checks"]["random_points"]), settings)


@register_check("moyal_equivalence_check", "star", "Cartesian Fedosov star against the Moyal series")
def _run_moyal(settings, rng):
    return moyal_equivalence_check(int(settings["checks"]["moyal_pairs"]), rng)


@register_check("operator_check", "star", "Derived H and L star operators against hand-coded ones")
def _run_operators(settings, rng):
    return operator_check(settings)


@register_check("pde_residuals", "eigenfunctions", "Star-eigenvalue residuals of the closed forms")
def _run_pde(settings, rng):
    started = time.perf_counter()
    params = _params_from(settings)
    operators = settings["checks"]["operators"]
    runs = [(f"reduced m={m:g}", EigenLabels(1.0, m), "reduced") for m in (0.0, 1.0, -1.0, 5.0)]
    runs.append(("full m=1", EigenLabels(1.0, 1.0), "full"))
    runs.append(("reduced D=pi", EigenLabels(1.0, 1.0, D_offset=math.pi), "reduced"))
    runs.append(("cross m=2 m'=-1", EigenLabels(1.0, 2.0, -1.0, alpha=0.4), "cross"))
    runs.append(("cross m=1 m'=0", EigenLabels(1.0, 1.0, 0.0, alpha=0.4), "cross"))
    parts = []
    for name, labels, system in runs:
        report = pde_residuals(labels, params, system, operators=operators, settings=settings)
        parts.append((name, report.max_error, report.tolerance))
    return _combine("pde_residuals", parts, {"operators": operators, "grid": settings["grid"]}, started)


@register_check("ode_residuals_B1B2", "eigenfunctions", "Coupled equations for the B1, B2 amplitudes")
def _run_ode(settings, rng):
    started = time.perf_counter()
    params = _params_from(settings)
    parts = []
    for labels in (EigenLabels(1.0, 2.0, -1.0), EigenLabels(1.0, 1.0, 1.0),
                   EigenLabels(1.0, float(rng.uniform(-2, 2)), float(rng.uniform(-2, 2)))):
        report = ode_residuals_B1B2(labels, params=params, settings=settings)
        parts.append((f"m={labels.m:.6g} m'={labels.m_prime:.6g}", report.max_error, report.tolerance))
    return _combine("ode_residuals_B1B2", parts, {}, started)


@register_check("hermiticity_check", "eigenfunctions", "conj(W_Emm') = W_Em'm, diagonal reduction, constants")
def _run_hermiticity(settings, rng):
    return hermiticity_check(_params_from(settings), rng, int(settings["checks"]["hermiticity_points"]), settings)


@register_check("marginal_check", "eigenfunctions", "Position marginals: integer closed form, non-integer negativity")
def _run_marginal(settings, rng):
    return marginal_check(_params_from(settings), int(settings["checks"]["marginal_points"]), settings=settings)


@register_check("blowup_probe", "eigenfunctions", "Unbounded growth of the H > E solutions")
def _run_blowup(settings, rng):
    return blowup_probe(params=_params_from(settings), settings=settings)


@register_check("identity_suite", "identities", "Floor identity, delta factors, delta identity, case ledger")
def _run_identities(settings, rng):
    return identity_suite(rng, settings)


@register_check("jacobi_anger_residual", "identities", "Bessel partial sums against the plane wave")
def _run_jacobi_anger(settings, rng):
    return jacobi_anger_residual(10.0, int(settings["checks"]["mmax"]), settings=settings)


@register_check("reconstruction_check", "expansion", "Momentum state against its truncated cross-Wigner expansion")
def _run_reconstruction(settings, rng):
    return reconstruction_check(M_max=int(settings["checks"]["mmax"]), params=_params_from(settings),
                                settings=settings)


@register_check("product_expansion_check", "expansion", "Closed-form product against the truncated single sum")
def _run_product_expansion(settings, rng):
    return product_expansion_check(M_max=int(settings["checks"]["mmax"]), params=_params_from(settings),
                                   settings=settings)


# --- Running ---

def check_seed(seed, check_id):
    return (int(seed) + zlib.crc32(check_id.encode("utf-8"))) % 2 ** 32


def resolve_selection(selection=None):
    """Check ids for 'all', a suite name, a check id, or a list of those, in registry order."""
    if selection is None or selection == "all":
        return list(CHECKS)
    names = [selection] if isinstance(selection, str) else list(selection)
    groups = suites()
    wanted = set()
    for name in names:
        if name in CHECKS:
            wanted.add(name)
        elif name in groups:
            wanted.update(groups[name])
        elif name == "all":
            wanted.update(CHECKS)
        else:
            logging.debug(f"resolve_selection returning error 'Unknown check or suite {name}'")
            raise ValueError(f"Unknown check or suite '{name}'. Checks: {', '.join(CHECKS)}; suites: {', '.join(groups)}")
    return [check_id for check_id in CHECKS if check_id in wanted]


def run_check(check_id, settings=None, seed=0):
    """Run one registered check; exceptions become failing reports."""
    if check_id not in CHECKS:
        raise ValueError(f"Unknown check '{check_id}'")
    settings = resolve_settings(settings)
    rng = np.random.default_rng(check_seed(seed, check_id))
    started = time.perf_counter()
    logging.info(f"run_check called for '{check_id}' and seed '{seed}'")
    try:
        report = CHECKS[check_id].runner(settings, rng)
    except Exception as e:
        logging.error(f"Check '{check_id}' raised {type(e).__name__}: {e}")
        report = VerificationReport.from_error(check_id, float("inf"), 0.0,
                                               {"error": f"{type(e).__name__}: {e}"}, started)
    logging.debug(f"run_check returning status '{report.status}' for '{check_id}'")
    return report


def run_report(selection=None, settings=None, seed=None, worker_pool=None, omit_timing=False):
    """Reports in registry order; through worker_pool when given and settings ask for workers."""
    settings = resolve_settings(settings)
    seed = int(settings.get("seed", 0) if seed is None else seed)
    ids = resolve_selection(selection)
    logging.info(f"run_report called for {len(ids)} checks and seed '{seed}'")
    if worker_pool is not None and int(settings.get("workers", 0)) > 0:
        results = worker_pool.map_checks(ids, {"settings": settings, "seed": seed})
        reports = [VerificationReport.from_dict(r) for r in results]
    else:
        reports = [run_check(check_id, settings, seed) for check_id in ids]
    if omit_timing:
        for report in reports:
            report.seconds = 0.0
    logging.debug(f"run_report returning {sum(r.passed for r in reports)}/{len(reports)} passing")
    return reports


__all__ = [
    "SingularGridError", "VerificationReport", "CaseLedger", "LedgerRow", "CHECKS", "register_check", "list_checks", "suites",
    "pde_residuals", "ode_residuals_B1B2", "identity_suite", "jacobi_anger_residual", "reconstruction_check",
    "product_expansion_check", "blowup_probe", "hermiticity_check", "marginal_check", "chart_check",
    "connection_check", "operator_check", "moyal_equivalence_check", "case_ledger", "run_report", "run_check",
]
