"""
Closed-form Wigner eigenfunctions of the free particle in the (T, chi, H, L) chart.

    W_Em    energy E, angular momentum m*hbar
    W_Emm'  cross-Wigner function of the (E, m) and (E, m') states
    W_p     Cartesian momentum eigenstate, a product of two deltas in (H, chi)

Evaluators return a Singular marker on the H = E boundary instead of a value.
"""

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .symplectic_charts import (
    PhysParams, ActionAnglePoint, ChartDomainError, normalize_angle, to_action_angle, from_polar, TWO_PI,
)

INTEGER_TOLERANCE = 1e-12


@dataclass(frozen=True)
class Singular:
    reason: str


BOUNDARY = Singular("H = E: prefactor 1/sqrt(H(E-H)) diverges")


def _is_integer(value):
    return abs(value - round(value)) <= INTEGER_TOLERANCE


@dataclass(frozen=True)
class EigenLabels:
    E: float
    m: float
    m_prime: float | None = None
    alpha: float = 0.0
    D_offset: float = 0.0
    integer: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.E) and self.E > 0):
            raise ValueError(f"E must be positive, got {self.E}")
        if self.m_prime is None:
            object.__setattr__(self, "m_prime", self.m)
        if self.integer and not (_is_integer(self.m) and _is_integer(self.m_prime)):
            raise ValueError(f"Integer labels required, got m={self.m}, m'={self.m_prime}")

    def p0(self, params):
        return math.sqrt(2.0 * params.M * self.E)

    def k0(self, params):
        return self.p0(params) / params.hbar

    @property
    def is_integer(self):
        return _is_integer(self.m) and _is_integer(self.m_prime)

    @property
    def is_wigner_eigenfunction(self):
        """False when D_offset is not a multiple of pi or the indices are not integers."""
        return _is_integer(self.D_offset / math.pi) and self.is_integer

    @property
    def is_diagonal(self):
        return self.m == self.m_prime


@dataclass(frozen=True)
class EnergyAngular:
    labels: EigenLabels


@dataclass(frozen=True)
class CartesianMomentum:
    px0: float
    py0: float


@dataclass(frozen=True)
class WignerSpec:
    kind: object  # EnergyAngular | CartesianMomentum
    params: PhysParams = field(default_factory=PhysParams)


def norm_constants(labels, params):
    """(N_Em, N_Emm') with N_Em = 1/(4 pi^3 M hbar^2) and N_Emm' = N_Em exp(i (m - m') alpha)."""
    n_em = 1.0 / (4.0 * math.pi ** 3 * params.M * params.hbar ** 2)
    phase = (labels.m - labels.m_prime) * labels.alpha
    return n_em, n_em * complex(math.cos(phase), math.sin(phase))


def _check_H(H):
    if not H > 0.0:
        logging.debug(f"wigner evaluator returning error 'Nonpositive H {H}'")
        raise ChartDomainError(f"H must be positive, got {H}")


def _radial(labels, params, H, L, index_sum, normalization):
    """Heaviside-gated radial factor; BOUNDARY at H = E."""
    _check_H(H)
    E = labels.E
    if H > E:
        return 0.0
    if H == E:
        return BOUNDARY
    ratio = (E - H) / H
    argument = 2.0 * L / params.hbar * math.sqrt(ratio) - index_sum * math.acos(math.sqrt(H / E)) + labels.D_offset
    return normalization / math.sqrt(H * (E - H)) * math.cos(argument)


def eval_W_Em(labels, pt, params):
    n_em, _ = norm_constants(labels, params)
    return _radial(labels, params, pt.H, pt.L, 2.0 * labels.m, n_em)


def eval_W_Emmp(labels, pt, params):
    _, n_emmp = norm_constants(labels, params)
    radial = _radial(labels, params, pt.H, pt.L, labels.m + labels.m_prime, 1.0)
    if isinstance(radial, Singular):
        return radial
    phase = (labels.m - labels.m_prime) * pt.chi
    return n_emmp * complex(math.cos(phase), math.sin(phase)) * radial


def eval_W_Em_polar(labels, pt, params):
    r, phi, p, chi = pt
    if not p > 0.0:
        logging.debug(f"eval_W_Em_polar returning error 'Nonpositive p {p}'")
        raise ChartDomainError(f"p must be positive, got {p}")
    p0 = labels.p0(params)
    if p > p0:
        return 0.0
    if p == p0:
        return BOUNDARY
    n_em, _ = norm_constants(labels, params)
    root = math.sqrt(p0 * p0 - p * p)
    argument = 2.0 * r * root / params.hbar * math.sin(chi - phi) - 2.0 * labels.m * math.acos(p / p0) + labels.D_offset
    return 2.0 * params.M * n_em / (p * root) * math.cos(argument)


def eval_W_Em_via_chart(labels, pt, params):
    """W_Em at a polar point, routed through the Cartesian and (T, chi, H, L) maps."""
    return eval_W_Em(labels, to_action_angle(from_polar(pt), params), params)


def eval_general_solution_above(E, A1, A2, H, L, params):
    """A1 exp(kappa L) + A2 exp(-kappa L), kappa = (2/hbar) sqrt((H - E)/H), for H > E."""
    _check_H(H)
    if not H > E:
        raise ChartDomainError(f"The growing solution is defined for H > E, got H={H}, E={E}")
    kappa = 2.0 / params.hbar * math.sqrt((H - E) / H)
    return A1 * math.exp(kappa * L) + A2 * math.exp(-kappa * L)


def W_Emmp_array(labels, params, chi, H, L):
    """Vectorised W_Emm' (complex); NaN marks the H = E boundary."""
    chi, H, L = np.broadcast_arrays(np.asarray(chi, dtype=float), np.asarray(H, dtype=float), np.asarray(L, dtype=float))
    if np.any(H <= 0.0):
        raise ChartDomainError("H must be positive on the whole grid")
    E = labels.E
    _, n_emmp = norm_constants(labels, params)
    inside = H < E
    Hs = np.where(inside, H, 0.5 * E)
    argument = 2.0 * L / params.hbar * np.sqrt((E - Hs) / Hs) - (labels.m + labels.m_prime) * np.arccos(np.sqrt(Hs / E)) + labels.D_offset
    values = n_emmp * np.exp(1j * (labels.m - labels.m_prime) * chi) * np.cos(argument) / np.sqrt(Hs * (E - Hs))
    values = np.where(inside, values, 0.0)
    return np.where(H == E, np.nan, values)


@dataclass(frozen=True)
class MomentumEigenDescriptor:
    E_tilde: float
    chi0: float | None
    N: float
    epsilon: float = 1e-2
    degenerate: bool = False

    def mollified(self, chi, H):
        """N * G_eps(H - E~) * G_eps(chi - chi0), the chi Gaussian wrapped onto [0, 2 pi)."""
        if self.degenerate:
            raise ValueError("Momentum eigenstate at rest has no direction; the chart excludes it")
        eps = self.epsilon
        norm = 1.0 / (math.sqrt(2.0 * math.pi) * eps)
        gh = norm * np.exp(-0.5 * ((np.asarray(H) - self.E_tilde) / eps) ** 2)
        d = (np.asarray(chi) - self.chi0 + math.pi) % TWO_PI - math.pi
        gc = norm * np.exp(-0.5 * (d / eps) ** 2)
        return self.N * gh * gc


def momentum_eigenstate(px0, py0, params, epsilon=1e-2):
    E_tilde = (px0 * px0 + py0 * py0) / (2.0 * params.M)
    N = 1.0 / ((2.0 * math.pi * params.hbar) ** 2 * params.M)
    if px0 == 0.0 and py0 == 0.0:
        return MomentumEigenDescriptor(E_tilde, None, N, epsilon, degenerate=True)
    return MomentumEigenDescriptor(E_tilde, normalize_angle(math.atan2(py0, px0)), N, epsilon)


def expansion_coefficients(m_tilde, m_tilde_prime, chi0, alpha):
    """C = exp(i (m~' - m~)(alpha + chi0)) / (2 pi)."""
    if not (_is_integer(m_tilde) and _is_integer(m_tilde_prime)):
        logging.debug(f"expansion_coefficients returning error 'non-integer indices {m_tilde}, {m_tilde_prime}'")
        raise ValueError(f"Expansion indices must be integers, got {m_tilde}, {m_tilde_prime}")
    phase = (round(m_tilde_prime) - round(m_tilde)) * (alpha + chi0)
    return complex(math.cos(phase), math.sin(phase)) / TWO_PI


ACTION_ANGLE_HEADER = ("T", "chi", "H", "L", "re", "im")
POLAR_HEADER = ("r", "phi", "p", "chi", "re", "im")


class SingularGridError(ValueError):
    pass


def wigner_grid(labels, params, H_range, L_range, nH, nL, chi=0.0, T=0.0):
    """Rows (T, chi, H, L, re, im) in H-major order, then L."""
    if nH < 1 or nL < 1:
        raise ValueError("Grid sizes must be positive")
    H_values = np.linspace(H_range[0], H_range[1], nH)
    L_values = np.linspace(L_range[0], L_range[1], nL)
    if np.any(H_values <= 0.0) or np.any(np.isclose(H_values, labels.E, rtol=0.0, atol=1e-12 * labels.E)):
        logging.debug("wigner_grid returning error 'grid touches H <= 0 or H = E'")
        raise SingularGridError(f"H grid {tuple(H_range)} touches the singular loci H <= 0 or H = E = {labels.E}")
    HH, LL = np.meshgrid(H_values, L_values, indexing="ij")
    values = W_Emmp_array(labels, params, chi, HH, LL)
    rows = []
    for i in range(nH):
        for j in range(nL):
            v = values[i, j]
            rows.append((T, chi, H_values[i], L_values[j], float(v.real), float(v.imag)))
    return rows


def wigner_polar_grid(labels, params, r_range, p_range, nr, np_, phi=0.0, chi=0.0):
    """Rows (r, phi, p, chi, re, im) in r-major order, then p; W_Em only."""
    r_values = np.linspace(r_range[0], r_range[1], nr)
    p_values = np.linspace(p_range[0], p_range[1], np_)
    p0 = labels.p0(params)
    if np.any(p_values <= 0.0) or np.any(np.isclose(p_values, p0, rtol=0.0, atol=1e-12 * p0)) or np.any(r_values < 0.0):
        raise SingularGridError(f"Polar grid touches p <= 0, r < 0 or p = p0 = {p0}")
    rows = []
    for r in r_values:
        for p in p_values:
            v = eval_W_Em_polar(labels, (r, phi, p, chi), params)
            rows.append((r, phi, p, chi, float(v), 0.0))
    return rows


def format_number(value):
    return f"{float(value):.17g}"


def write_grid_csv(path, rows, header, comments=()):
    """CSV with '#' comment lines, a header row and 17-significant-digit numbers."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_number(v) for v in row])
    logging.info(f"write_grid_csv wrote {len(rows)} rows to '{path}'")
