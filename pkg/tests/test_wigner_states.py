import csv
import math

import numpy as np
import pytest

from src.logic.symplectic_charts import ActionAnglePoint, ChartDomainError, PhysParams, PolarPoint, TWO_PI
from src.logic.wigner_states import (
    ACTION_ANGLE_HEADER, BOUNDARY, EigenLabels, POLAR_HEADER, Singular, SingularGridError, W_Emmp_array,
    eval_W_Em, eval_W_Em_polar, eval_W_Em_via_chart, eval_W_Emmp, eval_general_solution_above,
    expansion_coefficients, momentum_eigenstate, norm_constants, wigner_grid, wigner_polar_grid, write_grid_csv,
)


def test_labels_default_to_the_diagonal():
    labels = EigenLabels(1.0, 2.0)
    assert labels.m_prime == 2.0
    assert labels.is_diagonal
    assert labels.is_wigner_eigenfunction


@pytest.mark.parametrize("kwargs, expected", [
    ({"m": 0.5}, False),
    ({"m": 1.0, "D_offset": 0.3}, False),
    ({"m": 1.0, "D_offset": math.pi}, True),
])
def test_wigner_eigenfunction_flag(kwargs, expected):
    assert EigenLabels(1.0, **kwargs).is_wigner_eigenfunction is expected


def test_labels_validate():
    with pytest.raises(ValueError):
        EigenLabels(0.0, 1.0)
    with pytest.raises(ValueError, match="Integer labels"):
        EigenLabels(1.0, 0.5, integer=True)


def test_value_at_a_known_point(params):
    # H = E/2: the square root is 1 and arccos(sqrt(1/2)) = pi/4
    labels = EigenLabels(2.0, 1.0)
    value = eval_W_Em(labels, ActionAnglePoint(0.0, 0.0, 1.0, 0.25), params)
    n_em, _ = norm_constants(labels, params)
    assert value == pytest.approx(n_em * math.cos(0.5 - 0.5 * math.pi))


def test_outside_the_energy_shell_is_zero_and_the_shell_is_singular(params):
    labels = EigenLabels(1.0, 0.0)
    assert eval_W_Em(labels, ActionAnglePoint(0.0, 0.0, 1.5, 1.0), params) == 0.0
    assert eval_W_Em(labels, ActionAnglePoint(0.0, 0.0, 1.0, 1.0), params) is BOUNDARY
    assert isinstance(eval_W_Emmp(EigenLabels(1.0, 1.0, 0.0), ActionAnglePoint(0.0, 0.0, 1.0, 1.0), params), Singular)
    with pytest.raises(ChartDomainError):
        eval_W_Em(labels, ActionAnglePoint(0.0, 0.0, 0.0, 1.0), params)


def test_cross_function_reduces_to_the_diagonal(rng, params):
    labels = EigenLabels(1.3, 2.0, alpha=0.4)
    for _ in range(20):
        pt = ActionAnglePoint(0.0, float(rng.uniform(0, TWO_PI)), float(rng.uniform(0.05, 1.25)), float(rng.normal()))
        assert eval_W_Emmp(labels, pt, params) == pytest.approx(eval_W_Em(labels, pt, params), rel=1e-14)


def test_cross_function_phase(params):
    labels = EigenLabels(1.0, 2.0, 0.0, alpha=0.3)
    pt = ActionAnglePoint(0.0, 0.7, 0.4, 0.2)
    value = eval_W_Emmp(labels, pt, params)
    diag = eval_W_Emmp(EigenLabels(1.0, 1.0), pt, params)
    # (m - m')(alpha + chi) = 2 * (0.3 + 0.7)
    assert value == pytest.approx(diag * complex(math.cos(2.0), math.sin(2.0)), rel=1e-13)


def test_array_evaluator_matches_pointwise(rng, params):
    labels = EigenLabels(1.0, 1.0, -2.0, alpha=0.1, D_offset=0.2)
    chi = rng.uniform(0, TWO_PI, 10)
    H = rng.uniform(0.05, 0.95, 10)
    L = rng.normal(size=10)
    values = W_Emmp_array(labels, params, chi, H, L)
    for i in range(10):
        assert values[i] == pytest.approx(eval_W_Emmp(labels, ActionAnglePoint(0.0, chi[i], H[i], L[i]), params), rel=1e-12)
    assert np.isnan(W_Emmp_array(labels, params, 0.0, 1.0, 0.0))


def test_polar_form_agrees_with_the_chart_route(rng):
    params = PhysParams(M=0.7, hbar=1.3)
    labels = EigenLabels(2.0, 1.5)
    p0 = labels.p0(params)
    for _ in range(20):
        pt = PolarPoint(float(rng.uniform(0, 5)), float(rng.uniform(0, TWO_PI)), float(rng.uniform(0.05, 0.95)) * p0,
                        float(rng.uniform(0, TWO_PI)))
        assert eval_W_Em_polar(labels, pt, params) == pytest.approx(eval_W_Em_via_chart(labels, pt, params), rel=1e-10, abs=1e-12)


def test_growing_solution_above_the_shell(params):
    kappa = 2.0 * math.sqrt(0.5)
    assert eval_general_solution_above(1.0, 1.0, 0.0, 2.0, 3.0, params) == pytest.approx(math.exp(3.0 * kappa))
    with pytest.raises(ChartDomainError):
        eval_general_solution_above(1.0, 1.0, 0.0, 0.5, 3.0, params)


def test_expansion_coefficients():
    assert expansion_coefficients(0, 0, 0.3, 1.0) == pytest.approx(1.0 / TWO_PI)
    c = expansion_coefficients(1, 3, 0.25, 0.5)
    assert c == pytest.approx(complex(math.cos(1.5), math.sin(1.5)) / TWO_PI)
    with pytest.raises(ValueError):
        expansion_coefficients(0.5, 0, 0.0, 0.0)


def test_momentum_eigenstate(params):
    desc = momentum_eigenstate(0.0, 2.0, params)
    assert desc.E_tilde == pytest.approx(2.0)
    assert desc.chi0 == pytest.approx(0.5 * math.pi)
    assert desc.N == pytest.approx(1.0 / (4.0 * math.pi ** 2))
    at_rest = momentum_eigenstate(0.0, 0.0, params)
    assert at_rest.degenerate
    with pytest.raises(ValueError):
        at_rest.mollified(0.0, 0.0)


def test_grid_rows_and_singular_grid(params):
    labels = EigenLabels(1.0, 0.0)
    rows = wigner_grid(labels, params, (0.1, 0.9), (-1.0, 1.0), 3, 2)
    assert len(rows) == 6
    assert [row[2] for row in rows[:2]] == [0.1, 0.1]
    assert [row[3] for row in rows[:2]] == [-1.0, 1.0]
    with pytest.raises(SingularGridError):
        wigner_grid(labels, params, (0.5, 1.0), (-1.0, 1.0), 3, 2)
    with pytest.raises(SingularGridError):
        wigner_polar_grid(labels, params, (0.0, 1.0), (0.5, labels.p0(params)), 2, 2)


def test_csv_layout(tmp_path, params):
    labels = EigenLabels(1.0, 1.0)
    path = tmp_path / "grid.csv"
    rows = wigner_grid(labels, params, (0.2, 0.8), (-1.0, 1.0), 2, 2)
    write_grid_csv(path, rows, ACTION_ANGLE_HEADER, ["seed = 0"])
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "# seed = 0"
    assert lines[1] == ",".join(ACTION_ANGLE_HEADER)
    parsed = list(csv.reader(lines[2:]))
    assert len(parsed) == 4
    assert float(parsed[0][4]) == rows[0][4]

    polar = wigner_polar_grid(labels, params, (0.0, 1.0), (0.2, 1.0), 2, 2)
    write_grid_csv(tmp_path / "polar.csv", polar, POLAR_HEADER)
    assert (tmp_path / "polar.csv").read_text(encoding="utf-8").splitlines()[0] == "r,phi,p,chi,re,im"


def test_csv_is_byte_identical_across_runs(tmp_path, params):
    labels = EigenLabels(1.0, 2.0, 0.0, alpha=0.4)
    rows = wigner_grid(labels, params, (0.1, 0.9), (-2.0, 2.0), 5, 5, chi=0.3)
    write_grid_csv(tmp_path / "a.csv", rows, ACTION_ANGLE_HEADER)
    write_grid_csv(tmp_path / "b.csv", wigner_grid(labels, params, (0.1, 0.9), (-2.0, 2.0), 5, 5, chi=0.3),
                   ACTION_ANGLE_HEADER)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
