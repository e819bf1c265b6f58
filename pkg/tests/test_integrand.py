import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orthoreg.errors import ConfigurationError, InvalidProfileError
from orthoreg.integrand import (
    PowerIntegrand,
    RegularizedIntegrand,
    envelope_constant,
    evaluate,
    fuzz_inequalities,
    growth_envelope_check,
    lipschitz_check,
    lipschitz_sides,
    monotone_gap,
    regularize,
    three_point_constant,
    v_difference,
    v_map,
)

exponents = st.floats(2.0, 8.0)
thresholds = st.floats(0.0, 2.0)
regs = st.sampled_from([0.0, 1e-4, 1e-3, 0.1])


def make(p, delta, eps):
    return regularize(PowerIntegrand(p, delta), eps)


def test_rejects_bad_parameters():
    with pytest.raises(InvalidProfileError):
        PowerIntegrand(1.5)
    with pytest.raises(InvalidProfileError):
        PowerIntegrand(3, -0.1)
    with pytest.raises(InvalidProfileError):
        RegularizedIntegrand(PowerIntegrand(2), 0.0)
    with pytest.raises(ConfigurationError):
        evaluate(PowerIntegrand(2), 1.0, 3)


def test_quartic_derivatives():
    g = PowerIntegrand(4, 0)
    assert (g(2.0), g(2.0, 1), g(2.0, 2)) == (4.0, 8.0, 12.0)


def test_inside_degeneracy_zone():
    g = PowerIntegrand(3, 1)
    assert (g(0.5), g(0.5, 1), g(0.5, 2)) == (0.0, 0.0, 0.0)


def test_regularized_quadratic_curvature():
    g = RegularizedIntegrand(PowerIntegrand(2, 0), 0.1)
    np.testing.assert_allclose(g(np.linspace(-5, 5, 101), 2), 1.1, rtol=1e-15)


def test_kink_uses_outside_limit():
    assert PowerIntegrand(2, 1)(1.0, 2) == 1.0
    assert PowerIntegrand(2, 1)(np.nextafter(1.0, 0), 2) == 0.0
    assert PowerIntegrand(3, 1)(1.0, 2) == 0.0


@given(exponents, thresholds, regs)
@settings(max_examples=50)
def test_convexity_scan(p, delta, eps):
    s = np.linspace(-6, 6, 10_000)
    d1 = make(p, delta, eps)(s, 1)
    assert np.all(np.diff(d1) >= 0)
    assert np.all(make(p, delta, eps)(s) >= 0)


@given(exponents, thresholds, regs, st.floats(-5, 5))
def test_derivatives_match_finite_differences(p, delta, eps, s):
    g = make(p, delta, eps)
    h = 1e-6
    # skip the kink where one-sided derivatives differ
    if abs(abs(s) - delta) < 1e-4 or abs(s) < 1e-4:
        return
    fd1 = (g(s + h) - g(s - h)) / (2 * h)
    fd2 = (g(s + h, 1) - g(s - h, 1)) / (2 * h)
    assert fd1 == pytest.approx(g(s, 1), rel=1e-6, abs=1e-7)
    assert fd2 == pytest.approx(g(s, 2), rel=1e-5, abs=1e-6)


# ---------------------------------------------------------------- V-map

def test_v_map_quartic():
    g = PowerIntegrand(4, 0)
    assert v_map(g, 1.0) == pytest.approx(math.sqrt(3) / 2, abs=1e-15)
    s = np.linspace(-3, 3, 61)
    np.testing.assert_allclose(v_map(g, s), math.sqrt(3) / 2 * s * np.abs(s), rtol=1e-14, atol=1e-15)


def test_v_map_quadratic_with_threshold():
    s = np.linspace(-4, 4, 81)
    expected = np.sign(s) * np.maximum(np.abs(s) - 1, 0)
    np.testing.assert_allclose(v_map(PowerIntegrand(2, 1), s), expected, atol=1e-15)
    np.testing.assert_allclose(v_map(PowerIntegrand(2, 1), s, quadrature=True), expected, atol=1e-12)


def test_v_map_regularized_quadratic_is_linear_outside():
    g = RegularizedIntegrand(PowerIntegrand(2, 1), 0.01)
    s = np.array([-3.0, -0.5, 0.0, 0.5, 3.0])
    expected = np.sign(s) * (0.1 * np.minimum(np.abs(s), 1) + math.sqrt(1.01) * np.maximum(np.abs(s) - 1, 0))
    np.testing.assert_allclose(v_map(g, s), expected, atol=1e-10)


@given(exponents, thresholds, regs, st.floats(-8, 8))
@settings(max_examples=60)
def test_v_map_odd_and_zero(p, delta, eps, s):
    g = make(p, delta, eps)
    assert v_map(g, 0.0) == 0.0
    assert v_map(g, -s) == pytest.approx(-v_map(g, s), abs=1e-10)


@given(exponents, thresholds, regs)
@settings(max_examples=30)
def test_v_map_monotone(p, delta, eps):
    s = np.linspace(-5, 5, 401)
    assert np.all(np.diff(v_map(make(p, delta, eps), s)) >= -1e-12)


@pytest.mark.parametrize("p, delta", [(2.0, 0.0), (2.3, 0.5), (2.01, 1.0), (4.0, 0.0), (7.5, 2.0)])
def test_quadrature_matches_closed_form(p, delta):
    g = PowerIntegrand(p, delta)
    s = np.linspace(-10, 10, 2001)
    np.testing.assert_allclose(v_map(g, s, quadrature=True), v_map(g, s), rtol=0, atol=1e-9)


@given(exponents, thresholds, regs, st.floats(0.05, 5.0), st.booleans())
@settings(max_examples=60)
def test_v_map_derivative_is_root_curvature(p, delta, eps, s, negative):
    s = -s if negative else s
    dist = min(abs(s), abs(abs(s) - delta))
    if dist < 1e-2:
        return
    g = make(p, delta, eps)
    h = 1e-2 * dist
    # fourth-order centered stencil
    near = v_difference(s + h, s - h, p, delta, eps, tol=1e-13)
    far = v_difference(s + 2 * h, s - 2 * h, p, delta, eps, tol=1e-13)
    fd = (8 * near - far) / (12 * h)
    exact = math.sqrt(g(s, 2))
    assert fd == pytest.approx(exact, rel=1e-6, abs=1e-9)


def test_v_difference_matches_v_map():
    rng = np.random.default_rng(2)
    a, b = rng.uniform(-4, 4, (2, 200))
    g = make(3.3, 0.7, 1e-3)
    np.testing.assert_allclose(v_difference(a, b, 3.3, 0.7, 1e-3), v_map(g, a) - v_map(g, b), atol=1e-9)


# ---------------------------------------------------------------- pointwise inequalities

def test_gap_vanishes_for_identity_map():
    rng = np.random.default_rng(0)
    a, b = rng.uniform(-10, 10, (2, 1000))
    assert np.max(np.abs(monotone_gap(PowerIntegrand(2, 0), a, b))) < 1e-12


def test_gap_quartic_example():
    assert monotone_gap(PowerIntegrand(4, 0), 1.0, 0.0) == pytest.approx(0.25, abs=1e-15)


def test_lipschitz_quartic_example():
    lhs, rhs = lipschitz_sides(PowerIntegrand(4, 0), 2.0, 1.0)
    assert lhs == pytest.approx(7.0)
    assert rhs == pytest.approx(9.0)
    assert lipschitz_check(PowerIntegrand(4, 0), 2.0, 1.0)
    assert lipschitz_check(PowerIntegrand(4, 0), 1.5, 1.5)


@given(exponents, thresholds, regs, st.floats(-5, 5), st.floats(-5, 5))
@settings(max_examples=200)
def test_inequalities_pointwise(p, delta, eps, a, b):
    g = make(p, delta, eps)
    scale = (1 + abs(a) + abs(b)) ** p
    assert monotone_gap(g, a, b, tol=1e-12) >= -1e-12 * scale
    assert lipschitz_check(g, a, b)


def test_fuzz_suite_small():
    report = fuzz_inequalities(samples=5000, seed=3)
    assert report.violations == 0
    assert report.as_dict()["samples"] == 5000


def test_fuzz_suite_is_seeded():
    assert fuzz_inequalities(2000, 9).as_dict() == fuzz_inequalities(2000, 9).as_dict()


# ---------------------------------------------------------------- envelopes

def test_envelope_quartic_tight_constant():
    g = PowerIntegrand(4, 0)
    assert envelope_constant(g) == 3.0
    s = np.linspace(-10, 10, 1001)
    assert growth_envelope_check(g, s, 3.0)
    assert not growth_envelope_check(g, s, 2.9)


def test_envelope_inside_zone_trivial():
    assert growth_envelope_check(PowerIntegrand(3, 2), np.linspace(-2, 2, 11), 1.0)


def test_envelope_rejects_small_constant():
    with pytest.raises(ConfigurationError):
        growth_envelope_check(PowerIntegrand(3), 1.0, 0.5)


@given(exponents, thresholds, regs)
@settings(max_examples=50)
def test_computed_and_closed_envelope_constants_hold(p, delta, eps):
    g = make(p, delta, eps)
    s = np.concatenate([np.linspace(-20, 20, 4001), [delta, -delta]])
    assert growth_envelope_check(g, s, envelope_constant(g))
    loose = max(p - 1, 1 / (p - 1)) * (1 + delta) ** (p - 2) + eps
    assert growth_envelope_check(g, s, max(loose, 1.0))


def test_regularized_envelope_enlarged_by_eps():
    base = PowerIntegrand(2, 0)
    assert envelope_constant(base) == 1.0
    assert envelope_constant(RegularizedIntegrand(base, 0.5)) == pytest.approx(1.0)
    # at p = 2 the ratio g''/(1 + 1) = (1 + eps)/2 exceeds one only once eps > 1
    assert envelope_constant(RegularizedIntegrand(base, 3.0)) == pytest.approx(2.0)


@given(exponents, thresholds, regs)
@settings(max_examples=30)
def test_three_point_constant_is_one(p, delta, eps):
    rng = np.random.default_rng(0)
    a, b = rng.uniform(-6, 6, (2, 500))
    assert three_point_constant(make(p, delta, eps), a, b) == 1.0
