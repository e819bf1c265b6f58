"""End-to-end acceptance criteria at their stated tolerances.

Each test prints and records one ``criterion N: PASS|FAIL`` line; the lines
are repeated in the terminal summary of the pytest run.
"""

import json
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from orthoreg import grid as gridio
from orthoreg.besov import SeminormSpec, estimate_order, interpolation_check, lemma_comparison
from orthoreg.cli import main
from orthoreg.exponents import (
    AnisotropyProfile,
    check_conditions,
    closed_form_limit,
    condition_report,
    iterate_scheme,
    limit_polynomial,
)
from orthoreg.grid import GridFunction
from orthoreg.integrand import PowerIntegrand, fuzz_inequalities
from orthoreg.probe import v_fields
from orthoreg.solver import DiscreteProblem, Mesh, build_problem, minimize

pytestmark = pytest.mark.acceptance


def record(number, title, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}  ({detail})"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def cli_report(tmp_path, name, *args):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    return code, json.loads(out.read_text())


def test_criterion_1_exponent_oracle_equivalence():
    started = time.perf_counter()
    rng = np.random.default_rng(20240)
    worst = 0.0
    converged = violations = 0
    for _ in range(10_000):
        N = int(rng.integers(2, 9))
        ell = int(rng.integers(1, N))
        p = float(rng.uniform(2.0, 12.0))
        q = p * float(rng.uniform(1.001, 30.0))
        profile = AnisotropyProfile(N, ell, p, q)
        trace = iterate_scheme(profile, record=False)
        limit = closed_form_limit(profile)
        if trace.verdict.kind == "converges":
            converged += 1
            if limit.divergent:
                violations += 1
                continue
            worst = max(worst, abs(trace.last_iterate - limit.value))
            if ell != N - 2:
                roots = limit_polynomial(profile).roots
                worst = max(worst, min(abs(limit.value - r) for r in roots))
        rep = condition_report(profile)
        if rep.ok and rep.margin > 1e-3 and trace.verdict.kind != "full":
            violations += 1
        if ell <= N - 2 and not rep.ok and rep.margin < -1e-3:
            if trace.verdict.kind == "full" or limit.divergent or limit.value > 1.0:
                violations += 1
    elapsed = time.perf_counter() - started
    ok = worst <= 1e-6 and violations == 0 and converged > 0 and elapsed <= 30
    record(1, "exponent oracle equivalence", ok,
           f"{converged} converging runs, max gap {worst:.2e}, {violations} violations, {elapsed:.1f}s")


def test_criterion_2_boundary_pin():
    profile = AnisotropyProfile(6, 2, 2.0, 4.0)
    poly = limit_polynomial(profile)
    coeffs_ok = abs(poly.a2 - 2) <= 1e-12 and abs(poly.a1 - 1) <= 1e-12 and abs(poly.a0 - 1) <= 1e-12
    root_ok = abs(poly.roots[1] - 1.0) <= 1e-12 and abs(closed_form_limit(profile).value - 1.0) <= 1e-12
    rep = condition_report(profile)
    ok = coeffs_ok and root_ok and not check_conditions(profile) and rep.boundary
    record(2, "boundary pin P(t) = 2t^2 - t - 1", ok,
           f"coefficients ({poly.a2}, {poly.a1}, {poly.a0}), root {poly.roots[1]!r}, conditions {rep.ok}")


def test_criterion_3_besov_order_recovery():
    started = time.perf_counter()
    worst = 0.0
    for s in (0.1, 0.3, 0.45):
        psi = GridFunction.sample(lambda x: np.abs(x) ** s, [-1], [1], [2 ** 14])
        for p in (2.0, 4.0):
            est = estimate_order(psi, 0, p)
            worst = max(worst, abs(est.slope - min(1.0, s + 1 / p)))
    rng = np.random.default_rng(3)
    lemma_bad = interp_bad = 0
    for _ in range(1000):
        n = int(rng.integers(33, 130))
        g = GridFunction(rng.standard_normal(n), (float(rng.uniform(0.005, 0.1)),), (0.0,))
        t = float(rng.uniform(0.05, 0.95))
        p = float(rng.uniform(1.0, 8.0))
        half_besov, nik = lemma_comparison(g, SeminormSpec(0, t, p))
        lemma_bad += half_besov > nik * (1 + 1e-12)
        s_hi = float(rng.uniform(t + 0.01, 1.0))
        interp_bad += not interpolation_check(g, 0, p, t, s_hi).holds
    elapsed = time.perf_counter() - started
    ok = worst <= 0.05 and lemma_bad == 0 and interp_bad == 0 and elapsed <= 60
    record(3, "Besov order recovery", ok,
           f"max order error {worst:.3f}, {lemma_bad} + {interp_bad} inequality violations, {elapsed:.1f}s")


def test_criterion_4_inequality_fuzz(tmp_path):
    started = time.perf_counter()
    report = fuzz_inequalities(100_000, seed=7)
    elapsed = time.perf_counter() - started
    code, _ = cli_report(tmp_path, "ineq.json", "inequalities", "--samples", "1000", "--seed", "7")
    ok = report.violations == 0 and elapsed <= 20 and code == 0
    record(4, "pointwise inequality fuzz", ok,
           f"{report.violations} violations in 1e5 samples, worst relative gap "
           f"{report.worst_monotone_gap:.1e}, {elapsed:.1f}s")


def test_criterion_5_manufactured_solve():
    started = time.perf_counter()
    ints = (PowerIntegrand(2), PowerIntegrand(4))
    errors = {}
    residual = None
    for n in (33, 65, 129):
        mesh = Mesh((-1, -1), (1, 1), (n, n))
        res = minimize(build_problem(mesh, ints, 1e-3, "manufactured", "quadratic"), 1e-10)
        x, y = res.u.mesh()
        errors[n] = float(np.max(np.abs(res.u.values - x ** 2 - y ** 2)))
        if n == 65:
            residual = res.residual_inf
    factors = [errors[33] / errors[65], errors[65] / errors[129]]
    elapsed = time.perf_counter() - started
    ok = errors[65] <= 1e-2 and residual <= 1e-8 and min(factors) >= 3 and elapsed <= 300
    record(5, "manufactured solve", ok,
           f"error at 65^2 {errors[65]:.2e}, residual {residual:.1e}, "
           f"reduction {factors[0]:.2f}/{factors[1]:.2f}, {elapsed:.1f}s")


def test_criterion_6_regularity_probe(tmp_path):
    started = time.perf_counter()
    csv_path = tmp_path / "series.csv"
    code, rep = cli_report(tmp_path, "probe.json", "probe", "--p", "2", "6", "--delta", "0.5", "0.5",
                           "--source", "sin-cos", "--eps-list", "1e-1", "1e-2", "1e-3", "1e-4",
                           "--tol", "1e-10", "--levels", "33", "65", "129", "--csv", str(csv_path))
    elapsed = time.perf_counter() - started
    res = rep["result"]
    w12_max = max(r for row in res["w12_ratios"] for r in row)
    lip_max = max(res["lipschitz_ratios"])
    gaps_ok = all(all(b < a for a, b in zip(lv["continuation_gaps"], lv["continuation_gaps"][1:]))
                  for lv in res["levels"])
    # the criterion covers the ratio checks; the order check is reported in the verdict only
    ok = (code in (0, 4) and w12_max <= 1.1 and lip_max <= 1.1 and gaps_ok
          and "surrogate" in res["note"] and elapsed <= 900)
    record(6, "regularity probe under refinement", ok,
           f"max W12 ratio {w12_max:.3f}, max Lipschitz ratio {lip_max:.3f}, "
           f"gaps decreasing {gaps_ok}, verdict {res['verdict']}, {elapsed:.1f}s")


def test_criterion_7_degenerate_pin():
    started = time.perf_counter()
    mesh = Mesh((0,), (1,), (101,))
    trace = np.zeros(101)
    trace[-1] = 0.5
    integrand = PowerIntegrand(2, 1.0)
    res = minimize(DiscreteProblem(mesh, (integrand,), 0.0, trace, 1e-4))
    dist = float(np.max(np.abs(res.u.values - mesh.coords()[0] / 2)))
    v_zero = bool(np.all(v_fields(res.u, (integrand,))[0].values == 0))
    elapsed = time.perf_counter() - started
    ok = dist <= 1e-6 and v_zero and elapsed <= 5
    record(7, "degenerate 1-d pin", ok, f"distance {dist:.1e}, V identically zero {v_zero}, {elapsed:.2f}s")


def test_criterion_8_determinism(tmp_path):
    grid_path = tmp_path / "g.txt"
    gridio.save(GridFunction.sample(lambda x: np.abs(x) ** 0.3, [-1], [1], [1024]), grid_path)
    commands = [
        ["exponents", "--N", "2", "--ell", "1", "--p", "2", "--q", "4"],
        ["region-scan", "--N", "3", "--steps", "9"],
        ["besov-estimate", "--grid", str(grid_path), "--p", "4"],
        ["solve", "--nodes", "33", "33", "--p", "2", "6", "--delta", "0.5", "0.5", "--source", "sin-cos",
         "--eps-list", "1e-1", "1e-2", "1e-3"],
        ["probe", "--p", "2", "4", "--eps", "1e-3", "--source", "manufactured", "--boundary", "quadratic",
         "--tol", "1e-10", "--levels", "17", "33", "65"],
        ["inequalities", "--samples", "5000", "--seed", "7"],
    ]
    differing = []
    for args in commands:
        runs = []
        for name in ("a.json", "b.json"):
            code, rep = cli_report(tmp_path, name, *args)
            rep.pop("timings")
            runs.append((code, json.dumps(rep, sort_keys=True)))
        if runs[0] != runs[1]:
            differing.append(args[0])
    record(8, "determinism", not differing,
           f"{len(commands) - len(differing)}/{len(commands)} subcommands reproduce their reports exactly")
