"""
Command-line entry point: charts, star products, eigenfunction grids, marginals,
expansion checks and the verification suite.

Exit codes: 0 success, 1 failed check, 2 usage error.
"""

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from importlib.metadata import PackageNotFoundError, version

from scipy import constants

from .config_manager import ConfigManager, DEFAULT_SECTIONS, load_key_value_file, nest_settings
from .logging_setup import setup_logging
from .logic import verification
from .logic.formal_weyl import TruncationConfig, fedosov_star, star_left_operator, star_right_operator
from .logic.numerics import QuadratureConfig, marginal_P_Em
from .logic.symplectic_charts import PhysParams, transform_connection
from .logic.wigner_states import (
    ACTION_ANGLE_HEADER, POLAR_HEADER, EigenLabels, SingularGridError, wigner_grid, wigner_polar_grid, write_grid_csv,
)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2

base_dir = os.path.dirname(os.path.abspath(__file__))


def package_version():
    try:
        return version("fedosov-wigner-workbench")
    except PackageNotFoundError:
        return "0.1.0"


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    units: str = "natural"
    params: PhysParams = field(default_factory=PhysParams)
    settings: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    seed: int = 0
    scale_factors: dict = field(default_factory=dict)
    E_scale: float = 1.0  # natural energy per input unit
    action_scale: float = 1.0
    length_scale: float = 1.0
    momentum_scale: float = 1.0

    def header_lines(self):
        """Ordered `key = value` block echoed in every artifact."""
        lines = [f"version = {package_version()}", f"units = {self.units}",
                 f"M = {self.params.M!r}", f"hbar = {self.params.hbar!r}", f"seed = {self.seed}"]
        for name in DEFAULT_SECTIONS:
            for key, value in self.settings.get(name, {}).items():
                lines.append(f"{name}.{key} = {json.dumps(value)}")
        for key, value in self.scale_factors.items():
            lines.append(f"scale.{key} = {value!r}")
        if self.units == "si":
            lines.append(f"input_units = {SI_INPUT_UNITS}")
        for key, value in self.outputs.items():
            lines.append(f"output.{key} = {value}")
        return lines


SI_INPUT_UNITS = "E, H in eV; L in J*s; r in m; p in kg*m/s"

# Stable identifiers of the relation each artifact reproduces.
RELATIONS = {
    "grid": "cross_wigner_eigenfunction_action_angle",
    "polar": "diagonal_wigner_eigenfunction_polar",
    "marginal": "position_marginal_theta_integral",
    "marginal_integer": "position_marginal_bessel_square",
    "marginal_half_integer": "position_marginal_bessel_moments",
    "report": "verification_suite",
}


def si_scale_factors(E_eV, M_kg):
    """Natural units M = 1, hbar = 1, E = 1 for a particle of mass M_kg at energy E_eV."""
    if not (E_eV > 0 and M_kg > 0):
        raise UsageError(f"--E-eV and --M-kg must be positive, got {E_eV}, {M_kg}")
    energy = E_eV * constants.electron_volt
    return {
        "energy_J": energy,
        "mass_kg": M_kg,
        "length_m": constants.hbar / math.sqrt(M_kg * energy),
        "momentum_kg_m_per_s": math.sqrt(M_kg * energy),
        "time_s": constants.hbar / energy,
    }


def build_run_config(args, config_manager):
    """ConfigManager defaults, then the key=value file, then flags."""
    settings = config_manager.settings()
    if args.config:
        try:
            overrides = nest_settings(load_key_value_file(args.config))
        except OSError as e:
            raise UsageError(f"Cannot read config file: {e}")
        settings = verification.resolve_settings({**settings, **{
            k: ({**settings.get(k, {}), **v} if isinstance(v, dict) else v) for k, v in overrides.items()}})
    units = args.units or settings.get("units", "natural")
    if units not in ("natural", "si"):
        raise UsageError(f"Unknown units '{units}'")
    M = float(args.M if args.M is not None else settings.get("M", 1.0))
    hbar = float(args.hbar if args.hbar is not None else settings.get("hbar", 1.0))
    scale = {}
    factors = {}
    if units == "si":
        if args.E_eV is None or args.M_kg is None:
            raise UsageError("--units si needs --E-eV and --M-kg")
        scale = si_scale_factors(args.E_eV, args.M_kg)
        factors = {
            "E_scale": 1.0 / args.E_eV,
            "action_scale": 1.0 / constants.hbar,
            "length_scale": 1.0 / scale["length_m"],
            "momentum_scale": 1.0 / scale["momentum_kg_m_per_s"],
        }
        M, hbar = 1.0, 1.0
    seed = int(args.seed if args.seed is not None else settings.get("seed", 0))
    settings["M"], settings["hbar"], settings["seed"] = M, hbar, seed
    try:
        params = PhysParams(M, hbar)
    except ValueError as e:
        raise UsageError(str(e))
    return RunConfig(units, params, settings, {}, seed, scale, **factors)


def _pair(text):
    parts = text.split(",") if "," in text else text.split()
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected 'lo,hi', got '{text}'")
    lo, hi = float(parts[0]), float(parts[1])
    if not lo < hi:
        raise argparse.ArgumentTypeError(f"empty range '{text}'")
    return lo, hi


def _scaled(pair, factor):
    return None if pair is None else (pair[0] * factor, pair[1] * factor)


def build_parser():
    parser = argparse.ArgumentParser(prog="fedosov-wigner", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--config", help="key = value settings file")
    parser.add_argument("--units", choices=["natural", "si"])
    parser.add_argument("--E-eV", dest="E_eV", type=float, help="energy scale for --units si")
    parser.add_argument("--M-kg", dest="M_kg", type=float, help="mass for --units si")
    parser.add_argument("--M", type=float)
    parser.add_argument("--hbar", type=float)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--log-level", choices=["none", "error", "warning", "info", "debug"])
    sub = parser.add_subparsers(dest="command", required=True)

    chart = sub.add_parser("chart", help="chart integrity checks")
    chart.add_argument("action", choices=["check"])
    chart.add_argument("--points", type=int, default=100)

    connection = sub.add_parser("connection", help="print the transported connection table")
    connection.add_argument("--chart", default="action-angle")

    fedosov = sub.add_parser("fedosov", help="derive star operators")
    fedosov.add_argument("action", choices=["derive"])
    fedosov.add_argument("--obs", required=True)
    fedosov.add_argument("--hbar-order", dest="hbar_order", type=int, default=2)
    fedosov.add_argument("--side", choices=["left", "right"], default="left")
    fedosov.add_argument("--chart", default="action-angle")
    fedosov.add_argument("--json", action="store_true")

    star = sub.add_parser("star", help="star product of two observables")
    star.add_argument("--f", required=True)
    star.add_argument("--g", required=True)
    star.add_argument("--chart", default="cartesian")
    star.add_argument("--hbar-order", dest="hbar_order", type=int, default=2)

    wigner = sub.add_parser("wigner", help="eigenfunction grids")
    wigner.add_argument("action", choices=["grid", "polar"])
    wigner.add_argument("--E", type=float, required=True)
    wigner.add_argument("--m", type=float, required=True)
    wigner.add_argument("--mprime", type=float)
    wigner.add_argument("--alpha", type=float, default=0.0)
    wigner.add_argument("--D", dest="D_offset", type=float, default=0.0)
    wigner.add_argument("--chi", type=float, default=0.0)
    wigner.add_argument("--H-range", dest="H_range", type=_pair)
    wigner.add_argument("--L-range", dest="L_range", type=_pair)
    wigner.add_argument("--r-range", dest="r_range", type=_pair)
    wigner.add_argument("--p-range", dest="p_range", type=_pair)
    wigner.add_argument("--nr", type=int, default=101)
    wigner.add_argument("--np", dest="np_", type=int, default=101)
    wigner.add_argument("--phi", type=float, default=0.0)
    wigner.add_argument("--nH", type=int, default=101)
    wigner.add_argument("--nL", type=int, default=101)
    wigner.add_argument("--out", required=True)

    marginal = sub.add_parser("marginal", help="position marginal P(r)")
    marginal.add_argument("--E", type=float, required=True)
    marginal.add_argument("--m", type=float, required=True)
    marginal.add_argument("--r-max", dest="r_max", type=float, help="default: 20 natural length units")
    marginal.add_argument("--points", type=int, default=200)
    marginal.add_argument("--out")

    expand = sub.add_parser("expand", help="momentum-state expansion checks")
    expand.add_argument("--E", type=float, default=1.0)
    expand.add_argument("--chi0", type=float, default=0.7)
    expand.add_argument("--alpha", type=float, default=-0.5 * math.pi)
    expand.add_argument("--mmax", type=int, default=40)

    verify = sub.add_parser("verify", help="run verification checks")
    verify.add_argument("suite", nargs="*", default=["all"])
    verify.add_argument("--report")
    verify.add_argument("--omit-timing", action="store_true")
    verify.add_argument("--list", action="store_true")

    sub.add_parser("serve", help="start the MCP tool server on stdio")
    return parser


def _print_report(report, out):
    mark = {"pass": "PASS", "fail": "FAIL", "skipped": "SKIP"}[report.status]
    out.write(f"{mark} {report.id}: max_error={report.max_error:.3e} tolerance={report.tolerance:.1e}\n")


def _truncation(run, hbar_order):
    section = run.settings.get("truncation", {})
    return TruncationConfig(max_grade=max(int(section.get("max_grade", 8)), 2 * hbar_order + 2), max_hbar=hbar_order)


def cmd_chart(args, run, out):
    report = verification.chart_check(run.params, None, args.points, run.settings)
    _print_report(report, out)
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def cmd_connection(args, run, out):
    table = transform_connection(args.chart)
    out.write(f"# chart {args.chart}: variables {', '.join(table.variables)}\n")
    for line in table.lines():
        out.write(line + "\n")
    return EXIT_OK


def cmd_fedosov(args, run, out):
    derive = star_left_operator if args.side == "left" else star_right_operator
    op = derive(args.obs, _truncation(run, args.hbar_order), args.chart)
    if args.json:
        out.write(json.dumps(op.to_json(), indent=2) + "\n")
    else:
        out.write(f"# {args.side} star operator of {args.obs} in {op.chart_name} ({', '.join(op.variables)})\n")
        for line in op.lines():
            out.write(line + "\n")
    return EXIT_OK


def cmd_star(args, run, out):
    out.write(str(fedosov_star(args.f, args.g, _truncation(run, args.hbar_order), args.chart)) + "\n")
    return EXIT_OK


def cmd_wigner(args, run, out):
    E = args.E * run.E_scale
    labels = EigenLabels(E, args.m, args.mprime, alpha=args.alpha, D_offset=args.D_offset)
    if args.action == "polar":
        return _wigner_polar(args, run, labels, out)
    if args.H_range is None or args.L_range is None:
        raise UsageError("wigner grid needs --H-range and --L-range")
    H_range, L_range = _scaled(args.H_range, run.E_scale), _scaled(args.L_range, run.action_scale)
    rows = wigner_grid(labels, run.params, H_range, L_range, args.nH, args.nL, chi=args.chi)
    run.outputs["grid"] = args.out
    comments = run.header_lines() + [
        f"relation = {RELATIONS['grid']}",
        f"reproduces = cross-Wigner eigenfunction W_Emm' for E={E!r} m={labels.m!r} m'={labels.m_prime!r} alpha={labels.alpha!r}",
        f"wigner_eigenfunction = {labels.is_wigner_eigenfunction}",
    ]
    write_grid_csv(args.out, rows, ACTION_ANGLE_HEADER, comments)
    out.write(f"wrote {len(rows)} rows to {args.out}\n")
    return EXIT_OK


def _wigner_polar(args, run, labels, out):
    if labels.m_prime != labels.m:
        raise UsageError("wigner polar evaluates the diagonal W_Em only")
    if args.r_range is None or args.p_range is None:
        raise UsageError("wigner polar needs --r-range and --p-range")
    r_range, p_range = _scaled(args.r_range, run.length_scale), _scaled(args.p_range, run.momentum_scale)
    rows = wigner_polar_grid(labels, run.params, r_range, p_range, args.nr, args.np_, phi=args.phi, chi=args.chi)
    run.outputs["grid"] = args.out
    comments = run.header_lines() + [
        f"relation = {RELATIONS['polar']}",
        f"reproduces = polar form of W_Em for E={labels.E!r} m={labels.m!r}",
    ]
    write_grid_csv(args.out, rows, POLAR_HEADER, comments)
    out.write(f"wrote {len(rows)} rows to {args.out}\n")
    return EXIT_OK


def cmd_marginal(args, run, out):
    r_max = 20.0 if args.r_max is None else args.r_max * run.length_scale
    if args.points < 2 or not r_max > 0.0:
        raise UsageError(f"Need --points >= 2 and --r-max > 0, got {args.points}, {args.r_max}")
    labels = EigenLabels(args.E * run.E_scale, args.m)
    r = [r_max * i / (args.points - 1) for i in range(args.points)]
    curve = marginal_P_Em(labels, run.params, r, QuadratureConfig.from_settings(run.settings.get("quadrature")))
    minimum = float(curve.P.min())
    if args.out:
        run.outputs["marginal"] = args.out
        comments = run.header_lines() + [
            f"relation = {RELATIONS['marginal']}",
            f"reproduces = position marginal of W_Em for E={labels.E!r} m={labels.m!r}",
            f"min_P = {minimum!r}",
        ]
        if curve.closed_form is not None:
            closed = "marginal_integer" if curve.is_integer else "marginal_half_integer"
            comments.append(f"closed_form = {RELATIONS[closed]}")
            comments.append(f"closed_form_max_relative_error = {curve.max_relative_error!r}")
        write_grid_csv(args.out, curve.rows(), ("r", "P"), comments)
    out.write(f"min P = {minimum:.6e}" + (" (negative)\n" if minimum < 0 else "\n"))
    return EXIT_OK


def cmd_expand(args, run, out):
    reports = [
        verification.reconstruction_check(args.E, args.chi0, args.alpha, args.mmax, params=run.params,
                                          settings=run.settings),
        verification.product_expansion_check(args.E, 1.0, 0.0, args.chi0, args.alpha, args.mmax,
                                             params=run.params, settings=run.settings),
    ]
    for report in reports:
        _print_report(report, out)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_CHECK_FAILED


def cmd_verify(args, run, out):
    if args.list:
        for check in verification.list_checks():
            out.write(f"{check['suite']:15s} {check['id']}\n")
        return EXIT_OK
    selection = None if args.suite == ["all"] else args.suite
    try:
        ids = verification.resolve_selection(selection)
    except ValueError as e:
        raise UsageError(str(e))
    worker_pool = None
    if int(run.settings.get("workers", 0)) > 0:
        from .worker_pool import WorkerPool
        worker_pool = WorkerPool(_ConfigView(run.settings), base_dir)
    try:
        reports = verification.run_report(ids, run.settings, run.seed, worker_pool, args.omit_timing)
    finally:
        if worker_pool is not None:
            worker_pool.shutdown()
    for report in reports:
        _print_report(report, out)
    if args.report:
        run.outputs["report"] = args.report
        document = {"header": run.header_lines() + [f"relation = {RELATIONS['report']}"],
                    "reports": [r.to_dict(include_timing=not args.omit_timing) for r in reports]}
        with open(args.report, "w", encoding="utf-8") as f:
            json.dump(document, f, indent=2, sort_keys=False)
            f.write("\n")
    return EXIT_OK if all(r.passed for r in reports) else EXIT_CHECK_FAILED


class _ConfigView:
    """The slice of ConfigManager the worker pool reads, backed by resolved settings."""

    def __init__(self, settings):
        self.settings = settings

    def get_global_setting(self, key, default=None):
        return self.settings.get(key, default)


def cmd_serve(args, run, out):
    from . import server
    server.main()
    return EXIT_OK


COMMANDS = {
    "chart": cmd_chart,
    "connection": cmd_connection,
    "fedosov": cmd_fedosov,
    "star": cmd_star,
    "wigner": cmd_wigner,
    "marginal": cmd_marginal,
    "expand": cmd_expand,
    "verify": cmd_verify,
    "serve": cmd_serve,
}


def main(argv=None, out=None):
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK

    config_path = os.getenv("WORKBENCH_CONFIGPATH", os.path.join(base_dir, "..", "config.json"))
    config_manager = ConfigManager(config_path)
    if args.log_level:
        config_manager.config["log_level"] = args.log_level
    if args.command != "serve":
        setup_logging(config_manager, base_dir, console=True)

    try:
        run = build_run_config(args, config_manager)
        return COMMANDS[args.command](args, run, out)
    except (UsageError, SingularGridError) as e:
        logging.error(f"Usage error: {e}")
        sys.stderr.write(f"error: {e}\n")
        return EXIT_USAGE
    except ValueError as e:
        logging.error(f"Invalid input: {e}")
        sys.stderr.write(f"error: {e}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
