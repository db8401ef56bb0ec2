import json
import math

import numpy as np
import pytest

from src.logic import verification
from src.logic.verification import (
    CHECKS, RegisteredCheck, SingularGridError, VerificationReport, _combine, blowup_probe, case_ledger,
    chart_check, check_seed, connection_check, constraint_case_mismatches, delta_factor_errors,
    floor_identity_error, floor_identity_sides, four_angles, hermiticity_check, jacobi_anger_partial_sum,
    jacobi_anger_residual, ledger_errors, list_checks, ode_residuals_B1B2, pde_residuals, reduction_factor,
    resolve_selection, run_check, run_report, suites,
)
from src.logic.wigner_states import EigenLabels

REGISTRY_ORDER = [
    "chart_check", "connection_check",
    "moyal_equivalence_check", "operator_check",
    "pde_residuals", "ode_residuals_B1B2", "hermiticity_check", "marginal_check", "blowup_probe",
    "identity_suite", "jacobi_anger_residual",
    "reconstruction_check", "product_expansion_check",
]


def test_registry_order_and_suites():
    assert [c["id"] for c in list_checks()] == REGISTRY_ORDER
    assert suites()["identities"] == ["identity_suite", "jacobi_anger_residual"]
    assert set(suites()) == {"charts", "star", "eigenfunctions", "identities", "expansion"}


def test_selection():
    assert resolve_selection("all") == REGISTRY_ORDER
    assert resolve_selection("charts") == ["chart_check", "connection_check"]
    assert resolve_selection(["blowup_probe", "charts"]) == ["chart_check", "connection_check", "blowup_probe"]
    with pytest.raises(ValueError, match="Unknown check or suite"):
        resolve_selection("nonsense")


def test_check_seeds_are_stable_and_distinct():
    assert check_seed(0, "chart_check") == check_seed(0, "chart_check")
    assert check_seed(0, "chart_check") != check_seed(0, "connection_check")
    assert check_seed(2 ** 32, "chart_check") == check_seed(0, "chart_check")


def test_report_serialization():
    report = VerificationReport.from_error("x", 1e-13, 1e-12, {"value": complex(1, 2), "array": np.arange(2)})
    data = report.to_dict(include_timing=False)
    assert data["status"] == "pass"
    assert data["seconds"] == 0.0
    assert data["params"] == {"value": {"re": 1.0, "im": 2.0}, "array": [0, 1]}
    assert VerificationReport.from_dict(json.loads(json.dumps(data))).passed
    failed = VerificationReport.from_error("x", float("inf"), 0.0)
    assert failed.to_dict()["max_error"] is None
    assert not VerificationReport.skipped("x", "no workers").passed


def test_combine_normalizes_mixed_tolerances():
    same = _combine("c", [("a", 1e-13, 1e-12), ("b", 5e-13, 1e-12)])
    assert same.max_error == 5e-13 and same.tolerance == 1e-12
    mixed = _combine("c", [("a", 5e-13, 1e-12), ("b", 2e-9, 1e-8), ("c", 0, 0.0)])
    assert mixed.tolerance == 1.0
    assert mixed.max_error == pytest.approx(0.5)
    assert mixed.params["components"]["b"]["status"] == "pass"
    assert not _combine("c", [("a", 1.0, 0.0), ("b", 0.0, 1e-8)]).passed


def test_run_check_turns_exceptions_into_failures(monkeypatch):
    def explode(settings, rng):
        raise RuntimeError("boom")
    monkeypatch.setitem(CHECKS, "explode", RegisteredCheck("explode", "test", "", explode))
    report = run_check("explode")
    assert report.status == "fail"
    assert "boom" in report.params["error"]
    with pytest.raises(ValueError):
        run_check("missing")


def test_chart_and_connection_checks_pass(params, rng, settings):
    assert chart_check(params, rng, 50, settings).passed
    assert connection_check(params, rng, 50, settings).passed


def test_hermiticity_check_passes(params, rng, settings):
    assert hermiticity_check(params, rng, 500, settings).passed


@pytest.mark.parametrize("m", [0.0, 1.0, -1.0, 5.0])
def test_reduced_residuals_vanish(params, settings, m):
    report = pde_residuals(EigenLabels(1.0, m), params, "reduced", settings=settings)
    assert report.passed, report.params["equations"]


def test_cross_residuals_vanish(params, settings):
    assert pde_residuals(EigenLabels(1.0, 2.0, -1.0, alpha=0.4), params, "cross", settings=settings).passed


def test_residuals_survive_offsets_and_hbar(params, settings):
    assert pde_residuals(EigenLabels(1.0, 1.0, D_offset=math.pi), params, "reduced", settings=settings).passed
    assert pde_residuals(EigenLabels(1.0, 1.0), verification.PhysParams(hbar=2.0), "reduced", settings=settings).passed


def test_residuals_detect_swapped_operators(params, settings):
    ops = verification.operator_set("reference")
    swapped = {("H", "left"): ops[("L", "left")], ("L", "left"): ops[("H", "left")]}
    report = pde_residuals(EigenLabels(1.0, 2.0), params, "reduced", operators=swapped, settings=settings)
    assert not report.passed
    assert report.params["operators"] == "custom"


def test_residual_grid_must_avoid_the_shell(params, settings):
    labels = EigenLabels(1.0, 0.0)
    grid = {"H": np.linspace(0.5, 1.0, 5), "L": np.linspace(-1, 1, 3), "chi": [0.0]}
    with pytest.raises(SingularGridError):
        pde_residuals(labels, params, grid=grid, settings=settings)
    with pytest.raises(ValueError, match="Unknown system"):
        pde_residuals(labels, params, system="sideways", settings=settings)


def test_amplitude_equations(params, settings):
    assert ode_residuals_B1B2(EigenLabels(1.0, 2.0, -1.0), params=params, settings=settings).passed
    assert ode_residuals_B1B2(EigenLabels(1.0, 0.3, 1.7), params=params, settings=settings).passed


def test_blowup_probe():
    report = blowup_probe()
    assert report.passed
    assert report.params["values"][-1] > 1e10


def test_floor_identity():
    lhs, rhs = floor_identity_sides([0.3, 2.0, -2.0, 7.0])
    assert np.allclose(lhs, rhs, atol=1e-15)
    assert floor_identity_error() < 1e-12


def test_four_angles():
    theta = math.acos(math.sqrt(0.25))
    assert four_angles(1.0, 0.25) == pytest.approx((theta, math.pi - theta, math.pi + theta, 2 * math.pi - theta))
    with pytest.raises(ValueError):
        four_angles(1.0, 1.0)


def test_delta_factors_match_finite_differences(rng):
    errors = delta_factor_errors(rng, samples=5)
    assert errors["chi_prime"] < 1e-6
    assert errors["energy"] < 1e-6
    assert errors["energy_shell"] < 1e-6
    assert errors["roots"] < 1e-12


def test_reduction_factor_zero_frequency():
    assert reduction_factor(0.4, -0.5 * math.pi, 0.5 * math.pi - 0.4, 0) == pytest.approx(math.pi - 0.4)


def test_case_ledger():
    ledger = case_ledger(1.0, 0.37, (1, 0, 1, 0), chi=0.9)
    errors = ledger_errors(ledger)
    assert errors["phase"] < 1e-10
    assert errors["reduction"] < 1e-10
    assert errors["floors"] == 0
    assert errors["heaviside"] == 0
    assert [row.quadrant for row in ledger.rows] == [1, 2, 3, 4]
    assert json.dumps(ledger.to_dict())


def test_constraint_cases():
    mismatches, worst = constraint_case_mismatches(points=2000)
    assert mismatches == 0
    assert worst < 1e-9


def test_jacobi_anger():
    z, phi = 3.7, 1.1
    assert jacobi_anger_partial_sum(z, phi, 40) == pytest.approx(complex(math.cos(z * math.cos(phi)), math.sin(z * math.cos(phi))), abs=1e-12)
    report = jacobi_anger_residual(nz=51, nphi=16)
    assert report.passed
    assert report.params["tail"]["5"] > report.params["tail"]["40"]
    with pytest.raises(ValueError):
        jacobi_anger_residual(z_max=12.0)
    with pytest.raises(ValueError):
        jacobi_anger_residual(M_max=20)


def test_report_is_reproducible_without_timing():
    first = run_report(["charts", "blowup_probe"], seed=5, omit_timing=True)
    second = run_report(["charts", "blowup_probe"], seed=5, omit_timing=True)
    dump = lambda reports: json.dumps([r.to_dict(include_timing=False) for r in reports])
    assert dump(first) == dump(second)
    assert [r.id for r in first] == ["chart_check", "connection_check", "blowup_probe"]


class FakePool:
    def __init__(self):
        self.calls = []

    def map_checks(self, ids, config):
        self.calls.append((list(ids), config["seed"]))
        return [run_check(i, config["settings"], config["seed"]).to_dict() for i in ids]


def test_report_goes_through_the_pool_when_workers_are_set():
    pool = FakePool()
    reports = run_report("blowup_probe", {"workers": 2}, seed=3, worker_pool=pool)
    assert pool.calls == [(["blowup_probe"], 3)]
    assert reports[0].passed
    run_report("blowup_probe", {"workers": 0}, seed=3, worker_pool=pool)
    assert len(pool.calls) == 1


@pytest.mark.slow
def test_identity_suite_passes(rng, settings):
    report = verification.identity_suite(rng, settings)
    assert report.passed, report.params["components"]


@pytest.mark.slow
def test_marginal_check_passes(params, settings):
    report = verification.marginal_check(params, 100, settings=settings)
    assert report.passed, report.params["components"]
    assert report.params["marginal_positive"]["0.5"] is True
    assert report.params["marginal_positive"]["1.5"] is False


@pytest.mark.slow
def test_moyal_equivalence_on_random_pairs(rng):
    assert verification.moyal_equivalence_check(10, rng).passed


@pytest.mark.slow
def test_operator_check_passes(settings):
    report = verification.operator_check(settings)
    assert report.passed, report.params["operators"]


@pytest.mark.slow
def test_pde_residuals_with_derived_operators(params, settings):
    report = pde_residuals(EigenLabels(1.0, 1.0), params, "full", operators="derived", settings=settings)
    assert report.passed


@pytest.mark.slow
def test_expansion_checks(settings):
    reconstruction = verification.reconstruction_check(M_max=40, settings=settings)
    assert reconstruction.passed, reconstruction.params["components"]
    assert verification.product_expansion_check(M_max=40, settings=settings).passed
