"""Command-line front end.

Every subcommand reads an optional TOML config (``--config``), applies flag
overrides, runs, and prints one canonical JSON report (sorted keys) to
stdout or ``--out``.  Wall-clock timings live under the ``timings`` key so
that two runs with the same config and seed differ only there.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 verdict FAIL.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time

import numpy as np

from . import __version__
from . import grid as gridio
from .besov import quotient_report
from .config import load_config, require
from .errors import ConfigurationError, NumericalError
from .exponents import AnisotropyProfile, check_conditions, closed_form_limit, exponent_report, iterate_scheme
from .integrand import PowerIntegrand, fuzz_inequalities
from .probe import regularity_verdict
from .solver import (
    QUADRATIC,
    Mesh,
    build_problem,
    continuation_gaps,
    epsilon_continuation,
    manufactured_source,
    minimize,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_FAIL = 0, 2, 3, 4


class Outcome:
    def __init__(self, result: dict, status: int = EXIT_OK, timings: dict | None = None):
        self.result = result
        self.status = status
        self.timings = timings or {}


def plain(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if math.isfinite(value) else None
    return obj


def dumps(report: dict) -> str:
    return json.dumps(plain(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


# ---------------------------------------------------------------- handlers

def run_exponents(config: dict) -> Outcome:
    N, ell, p, q = require(config, "profile", "N", "ell", "p", "q")
    profile = AnisotropyProfile(N, ell, p, q)
    return Outcome(exponent_report(profile, max_iter=config["profile"]["max_iter"]))


def scan_rows(N: int, ell: int, p_values, q_values) -> list[dict]:
    rows = []
    for p in p_values:
        for q in q_values:
            if q < p:
                continue
            profile = AnisotropyProfile(N, ell, float(p), float(q))
            verdict = iterate_scheme(profile, record=False).verdict
            L = None
            if p < q:
                lim = closed_form_limit(profile)
                L = None if lim.divergent else lim.value
            rows.append({"p": float(p), "q": float(q), "conditions_ok": check_conditions(profile),
                         "verdict": str(verdict), "L": L})
    return rows


def rows_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(["p", "q", "conditions_ok", "verdict", "L"])
    for r in rows:
        out.writerow([repr(r["p"]), repr(r["q"]), str(r["conditions_ok"]).lower(), r["verdict"],
                      "" if r["L"] is None else repr(r["L"])])
    return buf.getvalue()


def run_region_scan(config: dict) -> Outcome:
    scan = config["scan"]
    N = require(config, "scan", "N")
    ell = scan.get("ell", N - 1)
    if scan["steps"] < 1:
        raise ConfigurationError(f"scan steps must be >= 1, got {scan['steps']}")
    p_values = np.linspace(scan["p_min"], scan["p_max"], scan["steps"])
    q_values = np.linspace(scan["q_min"], scan["q_max"], scan["steps"])
    rows = scan_rows(N, ell, p_values, q_values)
    if scan.get("csv"):
        with open(scan["csv"], "w", newline="") as fh:
            fh.write(rows_csv(rows))
    ok = sum(r["conditions_ok"] for r in rows)
    return Outcome({"N": N, "ell": ell, "rows": rows, "row_count": len(rows), "conditions_ok_count": ok,
                    "note": "grid points with q < p are skipped"})


def run_besov(config: dict) -> Outcome:
    path = require(config, "besov", "grid")
    b = config["besov"]
    psi = gridio.load(path)
    if not 0 <= b["axis"] < psi.ndim:
        raise ConfigurationError(f"axis {b['axis']} out of range for a {psi.ndim}-d grid")
    return Outcome(quotient_report(psi, b["axis"], b["p"], b["order"]))


def _integrands(config: dict):
    p = require(config, "integrand", "p")
    delta = config["integrand"].get("delta", [0.0] * len(p))
    if len(delta) != len(p):
        raise ConfigurationError(f"integrand p and delta lengths differ: {len(p)} vs {len(delta)}")
    return tuple(PowerIntegrand(pi, di) for pi, di in zip(p, delta))


def _solve(config: dict, nodes) -> tuple:
    ints = _integrands(config)
    m = config["mesh"]
    mesh = Mesh(m["lower"], m["upper"], nodes)
    prob = config["problem"]
    sched = config["schedule"]
    eps_list = sched.get("eps_list")
    eps = eps_list[0] if eps_list else sched["eps"]
    if prob.get("source_file"):
        source = gridio.load(prob["source_file"])
        if source.dims != mesh.nodes:
            raise ConfigurationError(f"source grid {source.dims} does not match mesh {mesh.nodes}")
    else:
        source = prob["source"]
    problem = build_problem(mesh, ints, eps, source, prob["boundary"])
    if eps_list:
        follow = None
        if source == "manufactured":
            def follow(e):
                return manufactured_source(QUADRATIC, ints, mesh, e)
        stages = epsilon_continuation(problem, eps_list, prob["tol"], prob["max_iter"], source_for_eps=follow)
        return stages[-1], stages
    res = minimize(problem, prob["tol"], prob["max_iter"])
    return res, [res]


def _solve_summary(final, stages) -> dict:
    out = final.as_dict()
    out["nodes"] = list(final.u.dims)
    if len(stages) > 1:
        out["stages"] = [s.as_dict() for s in stages]
        out["continuation_gaps"] = continuation_gaps(stages)
    return out


def run_solve(config: dict) -> Outcome:
    nodes = require(config, "mesh", "nodes")
    started = time.perf_counter()
    final, stages = _solve(config, nodes)
    elapsed = time.perf_counter() - started
    solution = config.get("output", {}).get("solution")
    if solution:
        gridio.save(final.u, solution)
    status = EXIT_OK if final.converged else EXIT_NUMERICAL
    return Outcome(_solve_summary(final, stages), status, {"solve": elapsed})


def run_probe(config: dict) -> Outcome:
    ints = _integrands(config)
    probe = config["probe"]
    timings = {}
    levels = []
    if probe.get("solutions"):
        series = [gridio.load(path) for path in probe["solutions"]]
    else:
        node_counts = require(config, "probe", "levels")
        series = []
        for n in node_counts:
            started = time.perf_counter()
            final, stages = _solve(config, (n,) * len(ints))
            timings[f"solve_{n}"] = time.perf_counter() - started
            if not final.converged:
                raise NumericalError("refinement level did not converge", nodes=n,
                                     residual_inf=final.residual_inf)
            series.append(final.u)
            levels.append(_solve_summary(final, stages))
    report = regularity_verdict(series, ints, probe["margin"])
    csv_path = config.get("output", {}).get("csv")
    if csv_path:
        with open(csv_path, "w", newline="") as fh:
            fh.write(report.series_csv())
    result = report.as_dict()
    if levels:
        result["levels"] = levels
    return Outcome(result, EXIT_OK if report.passed else EXIT_FAIL, timings)


def run_inequalities(config: dict) -> Outcome:
    report = fuzz_inequalities(config["inequalities"]["samples"], config["seed"])
    out = report.as_dict()
    out["verdict"] = "PASS" if report.violations == 0 else "FAIL"
    return Outcome(out, EXIT_OK if report.violations == 0 else EXIT_FAIL)


HANDLERS = {
    "exponents": run_exponents,
    "region-scan": run_region_scan,
    "besov-estimate": run_besov,
    "solve": run_solve,
    "probe": run_probe,
    "inequalities": run_inequalities,
}


# ---------------------------------------------------------------- argument parsing

def _flag(parser, name, dest, kind=None, nargs=None, help=None):
    parser.add_argument(name, dest=dest, type=kind, nargs=nargs, default=None, help=help)


def _problem_flags(sub):
    _flag(sub, "--p", "integrand.p", float, "+", "growth exponent per axis")
    _flag(sub, "--delta", "integrand.delta", float, "+", "degeneracy threshold per axis")
    _flag(sub, "--lower", "mesh.lower", float, "+")
    _flag(sub, "--upper", "mesh.upper", float, "+")
    _flag(sub, "--eps", "schedule.eps", float)
    _flag(sub, "--eps-list", "schedule.eps_list", float, "+", "decreasing continuation schedule")
    _flag(sub, "--source", "problem.source", str, help="source preset: zero, one, sin-cos, manufactured")
    _flag(sub, "--source-file", "problem.source_file", str, help="source as a grid file")
    _flag(sub, "--boundary", "problem.boundary", str, help="boundary preset: zero, quadratic")
    _flag(sub, "--tol", "problem.tol", float)
    _flag(sub, "--max-iter", "problem.max_iter", int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="orthoreg", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    def sub(name, help):
        s = subs.add_parser(name, help=help)
        s.add_argument("--config", default=None, help="TOML config file")
        _flag(s, "--out", "out", str, help="write the JSON report here instead of stdout")
        _flag(s, "--seed", "seed", int)
        return s

    s = sub("exponents", "iterate the differentiability exponents for one profile")
    _flag(s, "--N", "profile.N", int)
    _flag(s, "--ell", "profile.ell", int)
    _flag(s, "--p", "profile.p", float)
    _flag(s, "--q", "profile.q", float)
    _flag(s, "--max-iter", "profile.max_iter", int)

    s = sub("region-scan", "tabulate conditions and verdicts over a (p, q) grid")
    _flag(s, "--N", "scan.N", int)
    _flag(s, "--ell", "scan.ell", int)
    for key in ("p_min", "p_max", "q_min", "q_max"):
        _flag(s, "--" + key.replace("_", "-"), "scan." + key, float)
    _flag(s, "--steps", "scan.steps", int)
    _flag(s, "--csv", "scan.csv", str)

    s = sub("besov-estimate", "difference quotients and order estimate of a grid file")
    _flag(s, "--grid", "besov.grid", str)
    _flag(s, "--axis", "besov.axis", int)
    _flag(s, "--p", "besov.p", float)
    _flag(s, "--order", "besov.order", int, help="1 for first differences, 2 for second")

    s = sub("solve", "minimize the regularized energy on a box")
    _problem_flags(s)
    _flag(s, "--nodes", "mesh.nodes", int, "+")
    _flag(s, "--solution", "output.solution", str, help="write the solution grid here")

    s = sub("probe", "regularity indicators across mesh refinements")
    _problem_flags(s)
    _flag(s, "--solutions", "probe.solutions", str, "+", "solution grid files, coarse to fine")
    _flag(s, "--levels", "probe.levels", int, "+", "node counts per axis to solve when no files are given")
    _flag(s, "--margin", "probe.margin", float)
    _flag(s, "--csv", "output.csv", str)

    s = sub("inequalities", "fuzz the pointwise integrand inequalities")
    _flag(s, "--samples", "inequalities.samples", int)
    return parser


def _overrides(args) -> dict:
    out = {}
    for dest, value in vars(args).items():
        if value is None or dest in ("command", "config"):
            continue
        if "." in dest:
            section, key = dest.split(".", 1)
            out.setdefault(section, {})[key] = value
        else:
            out[dest] = value
    return out


def run(command: str, config: dict) -> tuple[dict, int]:
    started = time.perf_counter()
    outcome = HANDLERS[command](config)
    timings = dict(outcome.timings)
    timings["total"] = time.perf_counter() - started
    # the report destination does not affect the result, so it stays out of the echo
    echo = {k: v for k, v in config.items() if k != "out"}
    report = {"command": command, "config": echo, "result": outcome.result,
              "version": __version__, "seed": config.get("seed", 0), "timings": timings}
    return report, outcome.status


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, _overrides(args))
        report, status = run(args.command, config)
    except NumericalError as exc:
        detail = f" {plain(exc.diagnostics)}" if getattr(exc, "diagnostics", None) else ""
        print(f"orthoreg {args.command}: numerical failure: {exc}{detail}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as exc:
        print(f"orthoreg {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = dumps(report)
    out = config.get("out")
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return status


if __name__ == "__main__":
    sys.exit(main())
