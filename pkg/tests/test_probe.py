import math

import numpy as np
import pytest

from orthoreg.errors import ConfigurationError, EmptyDomainError, ShapeMismatchError
from orthoreg.grid import GridFunction
from orthoreg.integrand import PowerIntegrand
from orthoreg.probe import (
    face_fields,
    inner_box,
    lipschitz_estimate,
    profile_from_exponents,
    regularity_verdict,
    restrict,
    v_fields,
    w12_seminorm,
)
from orthoreg.solver import DiscreteProblem, Mesh, build_problem, minimize

QUARTIC = (PowerIntegrand(2), PowerIntegrand(4))


def sample(func, n, lower=(-1, -1), upper=(1, 1)):
    return GridFunction.sample(func, lower, upper, (n,) * len(lower))


def manufactured_series(nodes=(33, 65, 129)):
    out = []
    for n in nodes:
        p = build_problem(Mesh((-1, -1), (1, 1), (n, n)), QUARTIC, 1e-3, "manufactured", "quadratic")
        out.append(minimize(p, 1e-10).u)
    return out


def test_inner_box_margin_convention():
    lo, hi = inner_box((-1, 0), (1, 4), 0.25)
    np.testing.assert_allclose(lo, [-0.75, 0.5])
    np.testing.assert_allclose(hi, [0.75, 3.5])
    with pytest.raises(ConfigurationError):
        inner_box((0,), (1,), 1.0)


def test_restrict_rejects_thin_boxes():
    g = sample(lambda x, y: x, 9)
    with pytest.raises(EmptyDomainError):
        restrict(g, (-0.1, -1), (0.1, 1), 8)


# ---------------------------------------------------------------- V-fields

def test_v_fields_vanish_in_degeneracy_zone():
    u = sample(lambda x, y: 0.4 * x - 0.3 * y, 17)
    vs = v_fields(u, (PowerIntegrand(2, 0.5), PowerIntegrand(6, 0.5)))
    assert all(np.all(v.values == 0) for v in vs)


def test_v_fields_affine_closed_form():
    u = sample(lambda x, y: 2.0 * x - 3.0 * y, 17)
    vs = v_fields(u, (PowerIntegrand(4, 0.5), PowerIntegrand(3, 1.0)))
    np.testing.assert_allclose(vs[0].values, math.sqrt(3) * 0.5 * 1.5 ** 2, rtol=1e-13)
    np.testing.assert_allclose(vs[1].values, -math.sqrt(2) * (2 / 3) * 2.0 ** 1.5, rtol=1e-13)


def test_v_fields_of_quadratic():
    u = sample(lambda x, y: x ** 2 + y ** 2, 33)
    v2 = v_fields(u, QUARTIC)[1]
    y = v2.mesh()[1]
    # D_y u is exactly 2y at face midpoints, so V_2 = 2 sqrt(3) y|y| there
    np.testing.assert_allclose(v2.values, 2 * math.sqrt(3) * y * np.abs(y), rtol=1e-12, atol=1e-15)


def test_v_fields_identity_for_quadratic_integrands():
    rng = np.random.default_rng(0)
    u = GridFunction(rng.standard_normal((9, 7)), (0.1, 0.2), (0, 0))
    for v, d in zip(v_fields(u, (PowerIntegrand(2), PowerIntegrand(2))), face_fields(u)):
        np.testing.assert_allclose(v.values, d.values, rtol=1e-15)
        assert v.origin == d.origin


def test_v_fields_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        v_fields(sample(lambda x, y: x, 9), (PowerIntegrand(2),))


# ---------------------------------------------------------------- seminorms and Lipschitz bounds

def test_w12_constant_is_zero():
    assert w12_seminorm(sample(lambda x, y: np.full(np.shape(x), 3.0), 33)) == 0.0


@pytest.mark.parametrize("margin", [0.0, 0.25, 0.5])
def test_w12_of_linear_field_is_root_measure(margin):
    g = GridFunction.sample(lambda x, y: x, (0, 0), (1, 1), (65, 65))
    side = 1 - margin
    assert w12_seminorm(g, margin) == pytest.approx(side, rel=1e-12)


def test_w12_monotone_in_inner_box():
    rng = np.random.default_rng(3)
    g = GridFunction(rng.standard_normal((41, 41)), (0.05, 0.05), (-1, -1))
    values = [w12_seminorm(g, m) for m in (0.6, 0.5, 0.25, 0.1, 0.0)]
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_lipschitz_of_quadratic():
    u = sample(lambda x, y: x ** 2 + y ** 2, 129)
    assert lipschitz_estimate(u, 0.25) == pytest.approx(1.5, abs=u.spacing[0])


def test_lipschitz_of_affine():
    u = sample(lambda x, y: 0.7 * x - 1.9 * y, 33)
    for margin in (0.0, 0.25, 0.6):
        assert lipschitz_estimate(u, margin) == pytest.approx(1.9, rel=1e-13)


def test_lipschitz_of_degenerate_minimizer():
    m = Mesh((0,), (1,), (101,))
    trace = np.zeros(101)
    trace[-1] = 0.5
    r = minimize(DiscreteProblem(m, (PowerIntegrand(2, 1.0),), 0.0, trace, 1e-4))
    assert lipschitz_estimate(r.u, 0.25) == pytest.approx(0.5, abs=1e-6)
    assert np.all(v_fields(r.u, (PowerIntegrand(2, 1.0),))[0].values == 0)


def test_laplace_consistency_with_second_differences():
    # harmonic data, p = 2: V_i = D_i u, so the probe seminorm is a plain sum of squared mixed differences
    mesh = Mesh((-1, -1), (1, 1), (33, 33))
    p = build_problem(mesh, (PowerIntegrand(2), PowerIntegrand(2)), 0.0,
                      boundary=lambda x, y: x ** 2 - y ** 2)
    u = minimize(p, 1e-11).u
    box = ((-1.0, -1.0), (1.0, 1.0))
    h = mesh.spacing[0]
    for axis, v in enumerate(v_fields(u, p.integrands)):
        d = np.diff(u.values, axis=axis) / h
        lo, hi = inner_box(*box, 0.25)
        sub = restrict(v, lo, hi)
        # locate the same block in the raw difference array
        start = [int(round((o - c) / h)) for o, c in zip(sub.origin, v.origin)]
        block = d[tuple(slice(s, s + n) for s, n in zip(start, sub.dims))]
        total = 0.0
        for k in range(2):
            dd = np.diff(block, axis=k) / h
            w = np.ones(dd.shape) * h * h
            other = 1 - k
            edge = [slice(None)] * 2
            for end in (0, -1):
                edge[other] = end
                w[tuple(edge)] *= 0.5
            total += np.sum(w * dd * dd)
        assert w12_seminorm(v, 0.25, box) == pytest.approx(math.sqrt(total), rel=1e-10)


# ---------------------------------------------------------------- verdict

def test_profile_from_exponents():
    prof = profile_from_exponents([6, 2])
    assert (prof.N, prof.ell, prof.p, prof.q) == (2, 1, 2.0, 6.0)
    iso = profile_from_exponents([3, 3, 3])
    assert (iso.ell, iso.p, iso.q) == (2, 3.0, 3.0)
    assert profile_from_exponents([2, 3, 4]) is None


def test_manufactured_series_passes():
    report = regularity_verdict(manufactured_series(), QUARTIC)
    d = report.as_dict()
    assert d["verdict"] == "PASS"
    assert d["exponent_verdict"] == "FullDifferentiability(1)"
    assert d["predicted_initial"] == [0.5, 1.0]
    assert all(r <= 1.1 for row in d["w12_ratios"] for r in row)
    assert "h,quantity,value" in report.series_csv()


def test_isotropic_prediction_is_full():
    series = []
    for n in (17, 33, 65):
        p = build_problem(Mesh((-1, -1), (1, 1), (n, n)), (PowerIntegrand(3), PowerIntegrand(3)), 1e-3, "sin-cos")
        series.append(minimize(p).u)
    report = regularity_verdict(series, p.integrands)
    assert report.predicted_final == [1.0, 1.0]
    assert report.exponent_verdict == "FullDifferentiability(0)"


def test_verdict_preconditions():
    series = manufactured_series((17, 33, 65))
    with pytest.raises(ConfigurationError):
        regularity_verdict(series[:2], QUARTIC)
    with pytest.raises(ConfigurationError):
        regularity_verdict([series[0]] * 3, QUARTIC)
    with pytest.raises(ConfigurationError):
        regularity_verdict(series, QUARTIC, margin=0.1)
    shifted = [series[0], series[1], series[2].translated((0.5, 0.0))]
    with pytest.raises(ShapeMismatchError):
        regularity_verdict(shifted, QUARTIC)


def test_verdict_is_reproducible():
    series = manufactured_series((17, 33, 65))
    a = regularity_verdict(series, QUARTIC).as_dict()
    b = regularity_verdict(manufactured_series((17, 33, 65)), QUARTIC).as_dict()
    assert a == b
