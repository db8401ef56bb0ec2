"""
logic/ package: domain logic for the Fedosov/Wigner workbench.

Tool-facing `_x_impl` functions live here directly (they are small glue around
the sub-modules); the computational modules are imported below so callers see a
flat namespace.
"""

import os
import logging
import glob

from .symplectic_charts import PhysParams, ActionAnglePoint, get_chart, transform_connection
from .formal_weyl import TruncationConfig, fedosov_star, star_left_operator, star_right_operator
from .wigner_states import EigenLabels, Singular, eval_W_Emmp, expansion_coefficients
from .numerics import QuadratureConfig, marginal_P_Em
from . import verification


def _settings(config_manager):
    return config_manager.settings() if config_manager is not None else verification.resolve_settings()


def _phys_params(config_manager):
    settings = _settings(config_manager)
    return PhysParams(float(settings.get("M", 1.0)), float(settings.get("hbar", 1.0)))


def _truncation(config_manager, hbar_order):
    section = _settings(config_manager)["truncation"]
    return TruncationConfig(max_grade=max(int(section["max_grade"]), 2 * hbar_order + 2), max_hbar=hbar_order)


def _complex(value):
    return {"re": float(value.real), "im": float(value.imag)}


# --- Charts and star products ---

def _connection_table_impl(chart: str = "action-angle") -> dict:
    logging.info(f"_connection_table_impl called for chart '{chart}'")
    table = transform_connection(chart)
    res = {
        "chart": get_chart(chart).name,
        "variables": list(table.variables),
        "entries": [{"indices": [i + 1, j + 1, k + 1], "value": str(value)} for (i, j, k), value in table.entries],
    }
    logging.debug(f"_connection_table_impl returning result '{res}'")
    return res


def _derive_star_operator_impl(config_manager, observable: str, side: str = "left", chart: str = "action-angle", hbar_order: int = 2) -> dict:
    logging.info(f"_derive_star_operator_impl called for observable '{observable}' and side '{side}' and chart '{chart}' and hbar_order '{hbar_order}'")
    if side not in ("left", "right"):
        logging.debug(f"_derive_star_operator_impl returning error 'Unknown side {side}'")
        raise ValueError(f"side must be 'left' or 'right', got '{side}'")
    trunc = _truncation(config_manager, hbar_order)
    derive = star_left_operator if side == "left" else star_right_operator
    op = derive(observable, trunc, chart)
    res = {
        "observable": observable,
        "side": side,
        "chart": op.chart_name,
        "variables": list(op.variables),
        "truncation": {"max_grade": trunc.max_grade, "max_hbar": trunc.max_hbar},
        "terms": op.to_json(),
        "lines": op.lines(),
    }
    logging.debug(f"_derive_star_operator_impl returning {len(op.terms)} terms")
    return res


def _star_product_impl(config_manager, f: str, g: str, chart: str = "cartesian", hbar_order: int = 2) -> dict:
    logging.info(f"_star_product_impl called for f '{f}' and g '{g}' and chart '{chart}' and hbar_order '{hbar_order}'")
    series = fedosov_star(f, g, _truncation(config_manager, hbar_order), chart)
    res = {"f": f, "g": g, "chart": chart, "hbar_order": hbar_order, "result": str(series)}
    logging.debug(f"_star_product_impl returning result '{res}'")
    return res


# --- Eigenfunctions ---

def _evaluate_wigner_impl(config_manager, E: float, m: float, m_prime: float | None = None, alpha: float = 0.0, D_offset: float = 0.0, chi: float = 0.0, H: float = 0.5, L: float = 0.0) -> dict:
    logging.info(f"_evaluate_wigner_impl called for E '{E}' and m '{m}' and m_prime '{m_prime}' and alpha '{alpha}' at chi '{chi}' and H '{H}' and L '{L}'")
    labels = EigenLabels(E, m, m_prime, alpha=alpha, D_offset=D_offset)
    value = eval_W_Emmp(labels, ActionAnglePoint(0.0, chi, H, L), _phys_params(config_manager))
    if isinstance(value, Singular):
        res = {"singular": value.reason}
    else:
        res = {"value": _complex(complex(value)), "wigner_eigenfunction": labels.is_wigner_eigenfunction}
    logging.debug(f"_evaluate_wigner_impl returning result '{res}'")
    return res


def _marginal_curve_impl(config_manager, E: float, m: float, r_max: float = 20.0, points: int = 200) -> dict:
    logging.info(f"_marginal_curve_impl called for E '{E}' and m '{m}' and r_max '{r_max}' and points '{points}'")
    if points < 2 or not r_max > 0.0:
        logging.debug("_marginal_curve_impl returning error 'invalid radial range'")
        raise ValueError(f"Need points >= 2 and r_max > 0, got {points}, {r_max}")
    settings = _settings(config_manager)
    params = _phys_params(config_manager)
    labels = EigenLabels(E, m)
    r = [r_max * i / (points - 1) for i in range(points)]
    curve = marginal_P_Em(labels, params, r, QuadratureConfig.from_settings(settings["quadrature"]))
    res = {
        "E": E,
        "m": m,
        "min_P": float(curve.P.min()),
        "closed_form_max_relative_error": curve.max_relative_error,
        "rows": curve.rows(),
    }
    logging.debug(f"_marginal_curve_impl returning {points} rows with min_P '{res['min_P']}'")
    return res


def _expansion_coefficient_impl(m_tilde: int, m_tilde_prime: int, chi0: float, alpha: float) -> dict:
    logging.info(f"_expansion_coefficient_impl called for m_tilde '{m_tilde}' and m_tilde_prime '{m_tilde_prime}' and chi0 '{chi0}' and alpha '{alpha}'")
    res = _complex(expansion_coefficients(m_tilde, m_tilde_prime, chi0, alpha))
    logging.debug(f"_expansion_coefficient_impl returning result '{res}'")
    return res


# --- Verification ---

def _list_checks_impl() -> list:
    logging.info("_list_checks_impl called")
    res = verification.list_checks()
    logging.debug(f"_list_checks_impl returning {len(res)} checks")
    return res


def _run_verification_impl(worker_pool, config_manager, selection: str = "all", seed: int | None = None) -> list:
    logging.info(f"_run_verification_impl called for selection '{selection}' and seed '{seed}'")
    reports = verification.run_report(selection, _settings(config_manager), seed, worker_pool)
    res = [r.to_dict() for r in reports]
    logging.debug(f"_run_verification_impl returning {len(res)} reports")
    return res


# --- Resource / Help Functions ---

def _list_help_topics_impl(skills_dir: str) -> str:
    logging.info("_list_help_topics_impl called")
    files = sorted(glob.glob(os.path.join(skills_dir, "*.md")))
    topics = [os.path.splitext(os.path.basename(f))[0] for f in files]
    res = "Available help topics:\n" + "\n".join(f"- {t}" for t in topics)
    logging.debug(f"_list_help_topics_impl returning result '{res}'")
    return res


def _get_help_topic_impl(topic: str, skills_dir: str) -> str:
    logging.info(f"_get_help_topic_impl called for topic '{topic}' and skills_dir '{skills_dir}'")
    if ".." in topic or "/" in topic or "\\" in topic:
        logging.debug("_get_help_topic_impl returning error 'Invalid topic name.'")
        raise ValueError("Invalid topic name.")
    safe_topic = os.path.basename(topic)
    file_path = os.path.join(skills_dir, f"{safe_topic}.md")
    if not os.path.exists(file_path):
        logging.debug(f"_get_help_topic_impl returning error 'Help topic '{topic}' not found.'")
        raise ValueError(f"Help topic '{topic}' not found.")
    with open(file_path, "r", encoding="utf-8") as f:
        res = f.read()
        logging.debug(f"_get_help_topic_impl returning result of length '{len(res)}'")
        return res
