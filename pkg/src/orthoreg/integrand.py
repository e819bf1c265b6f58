"""Degenerate power integrands ``(|s|-delta)_+^p / p``, their quadratic regularization,
the V-map ``V(s) = int_0^s sqrt(g'')`` and pointwise inequality checks.

All kernels are vectorized over ``s`` and over the parameters ``p, delta, eps``
so that a fuzz suite can evaluate many different integrands in one pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InvalidProfileError, NumericalError

V_ABS_TOL = 1e-10
# fuzz slack is 1e-12 relative, so V differences are integrated more tightly
FUZZ_QUAD_TOL = 1e-12
_SIMPSON_MAX_DEPTH = 60


@dataclass(frozen=True)
class PowerIntegrand:
    p: float
    delta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.p) and self.p >= 2):
            raise InvalidProfileError(f"growth exponent p must be >= 2, got {self.p}")
        if not (math.isfinite(self.delta) and self.delta >= 0):
            raise InvalidProfileError(f"degeneracy threshold must be >= 0, got {self.delta}")

    @property
    def eps(self) -> float:
        return 0.0

    def __call__(self, s, derivative: int = 0):
        return evaluate(self, s, derivative)


@dataclass(frozen=True)
class RegularizedIntegrand:
    base: PowerIntegrand
    eps: float

    def __post_init__(self):
        if not (math.isfinite(self.eps) and self.eps > 0):
            raise InvalidProfileError(f"regularization eps must be > 0, got {self.eps}")

    @property
    def p(self) -> float:
        return self.base.p

    @property
    def delta(self) -> float:
        return self.base.delta

    def __call__(self, s, derivative: int = 0):
        return evaluate(self, s, derivative)


def regularize(integrand, eps: float):
    """Attach ``eps s^2 / 2`` to a power integrand; ``eps = 0`` returns the bare integrand."""
    base = integrand.base if isinstance(integrand, RegularizedIntegrand) else integrand
    return base if eps == 0 else RegularizedIntegrand(base, float(eps))


def _params(integrand):
    return float(integrand.p), float(integrand.delta), float(integrand.eps)


# ---------------------------------------------------------------- vectorized kernels

def g_value(s, p, delta, eps):
    s = np.asarray(s, dtype=np.float64)
    x = np.maximum(np.abs(s) - delta, 0.0)
    return x ** p / p + 0.5 * eps * s * s


def g_first(s, p, delta, eps):
    s = np.asarray(s, dtype=np.float64)
    x = np.maximum(np.abs(s) - delta, 0.0)
    return np.sign(s) * x ** (p - 1) + eps * s


def g_second(s, p, delta, eps):
    """``g''``; at ``|s| = delta`` with ``p = 2`` the outside limit ``p - 1`` is used."""
    s = np.asarray(s, dtype=np.float64)
    a = np.abs(s)
    x = np.maximum(a - delta, 0.0)
    outside = (p - 1) * x ** (p - 2)  # 0**0 == 1 gives the one-sided value at the kink
    return np.where(a >= delta, outside, 0.0) + eps


def _outer_integrand(x, p, eps):
    # sqrt(g'') expressed in the distance x = |s| - delta >= 0 past the threshold
    return np.sqrt((p - 1) * x ** (p - 2) + eps)


def _simpson(lo, hi, p, eps, tol):
    """Vectorized adaptive Simpson of ``_outer_integrand`` over ``[lo_k, hi_k]``.

    Each interval k carries its own ``p_k, eps_k``.  Panels are bisected
    until the Richardson estimate meets their share of ``tol``; a panel at
    the depth cap (only reached next to ``x = 0`` for ``p`` close to 2) is
    accepted and its estimate still enters the error budget.
    """
    lo, hi, p, eps, tol = (np.asarray(v, dtype=np.float64).ravel() for v in np.broadcast_arrays(lo, hi, p, eps, tol))
    total = np.zeros(lo.shape)
    err = np.zeros(lo.shape)
    owner = np.arange(lo.size)
    a, b = lo.copy(), hi.copy()
    pk, ek = p.copy(), eps.copy()
    fa = _outer_integrand(a, pk, ek)
    fb = _outer_integrand(b, pk, ek)
    m = 0.5 * (a + b)
    fm = _outer_integrand(m, pk, ek)
    whole = (b - a) / 6.0 * (fa + 4 * fm + fb)
    tk = tol.copy()
    depth = 0
    while owner.size:
        lm = 0.5 * (a + m)
        rm = 0.5 * (m + b)
        flm = _outer_integrand(lm, pk, ek)
        frm = _outer_integrand(rm, pk, ek)
        left = (m - a) / 6.0 * (fa + 4 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4 * frm + fb)
        delta = left + right - whole
        done = (np.abs(delta) <= 15 * tk) | (depth >= _SIMPSON_MAX_DEPTH)
        if np.any(done):
            np.add.at(total, owner[done], left[done] + right[done] + delta[done] / 15.0)
            np.add.at(err, owner[done], np.abs(delta[done]) / 15.0)
        keep = ~done
        if not np.any(keep):
            break
        # split surviving panels into left and right halves
        owner = np.concatenate([owner[keep], owner[keep]])
        pk = np.concatenate([pk[keep], pk[keep]])
        ek = np.concatenate([ek[keep], ek[keep]])
        tk = np.concatenate([tk[keep], tk[keep]]) * 0.5
        na = np.concatenate([a[keep], m[keep]])
        nb = np.concatenate([m[keep], b[keep]])
        nfa = np.concatenate([fa[keep], fm[keep]])
        nfb = np.concatenate([fm[keep], fb[keep]])
        nfm = np.concatenate([flm[keep], frm[keep]])
        whole = np.concatenate([left[keep], right[keep]])
        a, b, fa, fb, fm = na, nb, nfa, nfb, nfm
        m = 0.5 * (a + b)
        depth += 1
    bad = err > 10 * tol + 1e-15 * np.abs(total)
    if np.any(bad):
        k = int(np.argmax(bad))
        raise NumericalError("V-map quadrature did not converge", interval=(lo[k], hi[k]),
                             p=p[k], eps=eps[k], error_estimate=err[k], tol=tol[k])
    return total


def v_difference(a, b, p, delta, eps, tol=V_ABS_TOL):
    """``V(a) - V(b)`` for arrays of arguments and parameters.

    With ``eps = 0`` the closed form is used.  Otherwise the difference is
    integrated directly over ``[b, a]`` so that nearby arguments do not
    cancel: the part inside ``[-delta, delta]`` is ``sqrt(eps)`` times its
    length, the parts outside go through adaptive Simpson in the variable
    ``x = |s| - delta``.
    """
    a, b, p, delta, eps = np.broadcast_arrays(*(np.asarray(v, dtype=np.float64) for v in (a, b, p, delta, eps)))
    shape = a.shape
    a, b, p, delta, eps = (v.ravel() for v in (a, b, p, delta, eps))
    closed = eps == 0
    out = np.empty(a.shape)
    if np.any(closed):
        c = closed
        out[c] = _closed_v(a[c], p[c], delta[c]) - _closed_v(b[c], p[c], delta[c])
    reg = ~closed
    if np.any(reg):
        out[reg] = _regularized_difference(a[reg], b[reg], p[reg], delta[reg], eps[reg], tol)
    return out.reshape(shape)


def _closed_v(s, p, delta):
    x = np.maximum(np.abs(s) - delta, 0.0)
    return np.sign(s) * np.sqrt(p - 1) * (2.0 / p) * x ** (p / 2)


def _regularized_difference(a, b, p, delta, eps, tol):
    inner = np.sqrt(eps) * (np.clip(a, -delta, delta) - np.clip(b, -delta, delta))
    la = np.maximum(np.abs(a) - delta, 0.0)
    lb = np.maximum(np.abs(b) - delta, 0.0)
    sa, sb = np.sign(a), np.sign(b)
    # V(s) = sign(s) * (sqrt(eps) * min(|s|, delta) + F(|s| - delta)) with F(L) = int_0^L
    same = (sa == sb) | (la == 0) | (lb == 0)
    lo = np.where(same, np.minimum(la, lb), 0.0)
    hi = np.where(same, np.maximum(la, lb), la)
    sign_same = np.where(la >= lb, np.where(la > 0, sa, 0.0), np.where(lb > 0, -sb, 0.0))
    first = np.zeros(a.shape)
    live = hi > lo
    if np.any(live):
        first[live] = _simpson(lo[live], hi[live], p[live], eps[live], tol)
    outer = np.where(same, sign_same * first, sa * first)
    cross = ~same
    if np.any(cross):
        second = _simpson(np.zeros(int(cross.sum())), lb[cross], p[cross], eps[cross], tol)
        outer[cross] = outer[cross] - sb[cross] * second
    return inner + outer


# ---------------------------------------------------------------- public operations

def evaluate(integrand, s, derivative: int = 0):
    """``g``, ``g'`` or ``g''`` of the integrand at ``s`` (scalar or array)."""
    kernel = {0: g_value, 1: g_first, 2: g_second}.get(derivative)
    if kernel is None:
        raise ConfigurationError(f"derivative must be 0, 1 or 2, got {derivative}")
    out = kernel(s, *_params(integrand))
    return float(out) if np.ndim(out) == 0 else out


def v_map(integrand, s, tol: float = V_ABS_TOL, quadrature: bool = False):
    """``V(s) = int_0^s sqrt(g'')``; closed form for bare power integrands.

    ``quadrature=True`` forces the adaptive Simpson path, which is how the
    closed form is cross-checked.
    """
    p, delta, eps = _params(integrand)
    s_arr = np.asarray(s, dtype=np.float64)
    if eps == 0 and not quadrature:
        out = _closed_v(s_arr, p, delta)
    else:
        out = _regularized_difference(*(np.ravel(v).astype(np.float64) for v in np.broadcast_arrays(
            s_arr, 0.0, p, delta, max(eps, 0.0))), tol).reshape(s_arr.shape)
    return float(out) if out.ndim == 0 else out


def monotone_gap(integrand, a, b, tol: float = V_ABS_TOL):
    """``(g'(a) - g'(b)) (a - b) - (V(a) - V(b))^2``, nonnegative by Cauchy-Schwarz."""
    p, delta, eps = _params(integrand)
    out = _gap(a, b, p, delta, eps, tol)
    return float(out) if np.ndim(out) == 0 else out


def _gap(a, b, p, delta, eps, tol, dv=None):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if dv is None:
        dv = v_difference(a, b, p, delta, eps, tol)
    return (g_first(a, p, delta, eps) - g_first(b, p, delta, eps)) * (a - b) - dv * dv


def _sup_sqrt_second(a, b, p, delta, eps, points: int = 1025):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    w = np.linspace(0.0, 1.0, points)
    grid = a[..., None] + (b - a)[..., None] * w
    p, delta, eps = (np.asarray(v, dtype=np.float64)[..., None] for v in (p, delta, eps))
    return np.sqrt(g_second(grid, p, delta, eps)).max(axis=-1)


def lipschitz_sides(integrand, a, b, tol: float = V_ABS_TOL):
    """Both sides of ``|g'(a) - g'(b)| <= sup_[a,b] sqrt(g'') |V(a) - V(b)|``.

    The supremum is taken over 1025 equispaced points including both endpoints.
    """
    p, delta, eps = _params(integrand)
    lhs = np.abs(g_first(a, p, delta, eps) - g_first(b, p, delta, eps))
    rhs = _sup_sqrt_second(a, b, p, delta, eps) * np.abs(v_difference(a, b, p, delta, eps, tol))
    return lhs, rhs


def lipschitz_check(integrand, a, b, rtol: float = 1e-12) -> bool:
    lhs, rhs = lipschitz_sides(integrand, a, b)
    scale = (1.0 + np.abs(a) + np.abs(b)) ** integrand.p
    return bool(np.all(lhs <= rhs + rtol * scale))


def envelope_constant(integrand, s_max: float = 1e6, points: int = 20001) -> float:
    """Tightest ``C >= 1`` with ``(|s|-delta)_+^(p-2) / C <= g'' <= C (|s|^(p-2) + 1)``.

    The lower bound needs ``C >= 1/(p-1) <= 1``; the upper ratio is scanned on
    a log grid and for ``p > 2`` its limit ``p - 1`` at infinity is added.
    """
    p, delta, eps = _params(integrand)
    s = np.concatenate([[0.0], np.geomspace(1e-8, s_max, points), [delta]])
    d2 = g_second(s, p, delta, eps)
    ratio = d2 / (s ** (p - 2) + 1.0)
    out = s > delta
    lower = (s[out] - delta) ** (p - 2) / d2[out]
    sup = max(float(ratio.max()), float(lower.max(initial=0.0)))
    if p > 2:
        sup = max(sup, p - 1)
    return max(1.0, sup)


def growth_envelope_check(integrand, s, C: float) -> bool:
    if not C >= 1:
        raise ConfigurationError(f"envelope constant must be >= 1, got {C}")
    p, delta, eps = _params(integrand)
    s = np.asarray(s, dtype=np.float64)
    d2 = g_second(s, p, delta, eps)
    x = np.maximum(np.abs(s) - delta, 0.0)
    below = np.where(np.abs(s) > delta, x ** (p - 2), 0.0) / C
    above = C * (np.abs(s) ** (p - 2) + 1.0)
    slack = 1e-13 * np.maximum(d2, 1.0)
    return bool(np.all((below <= d2 + slack) & (d2 <= above + slack)))


def three_point_constant(integrand, a, b, points: int = 257) -> float:
    """Smallest ``C~ >= 1`` with ``g''(s) <= C~ (g''(a) + g''(b) + 1)`` on the sampled triples."""
    p, delta, eps = _params(integrand)
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    b = np.atleast_1d(np.asarray(b, dtype=np.float64))
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    w = np.linspace(0.0, 1.0, points)
    inner = g_second(lo[:, None] + (hi - lo)[:, None] * w, p, delta, eps).max(axis=1)
    ratio = inner / (g_second(lo, p, delta, eps) + g_second(hi, p, delta, eps) + 1.0)
    return max(1.0, float(ratio.max()))


# ---------------------------------------------------------------- fuzz suites

@dataclass
class FuzzReport:
    samples: int
    seed: int
    monotone_violations: int
    lipschitz_violations: int
    power_monotone_violations: int
    power_lipschitz_violations: int
    worst_monotone_gap: float

    @property
    def violations(self) -> int:
        return (self.monotone_violations + self.lipschitz_violations
                + self.power_monotone_violations + self.power_lipschitz_violations)

    def as_dict(self) -> dict:
        return {"samples": self.samples, "seed": self.seed,
                "monotone_violations": self.monotone_violations,
                "lipschitz_violations": self.lipschitz_violations,
                "power_monotone_violations": self.power_monotone_violations,
                "power_lipschitz_violations": self.power_lipschitz_violations,
                "worst_relative_monotone_gap": self.worst_monotone_gap,
                "violations": self.violations}


def fuzz_samples(n: int, seed: int, p_range=(2.0, 8.0), delta_range=(0.0, 2.0), eps_values=(0.0, 1e-3)):
    """Seeded ``(a, b, p, delta, eps)`` draws; a fifth of the pairs are near-coincident."""
    rng = np.random.default_rng(seed)
    p = rng.uniform(*p_range, n)
    delta = rng.uniform(*delta_range, n)
    eps = rng.choice(np.asarray(eps_values, dtype=np.float64), n)
    a = rng.uniform(-4.0, 4.0, n)
    b = rng.uniform(-4.0, 4.0, n)
    close = rng.random(n) < 0.2
    b[close] = a[close] + rng.normal(0.0, 1e-3, int(close.sum()))
    return a, b, p, delta, eps


def fuzz_inequalities(samples: int = 100_000, seed: int = 0, rtol: float = 1e-12, chunk: int = 20_000) -> FuzzReport:
    """Count violations of the monotonicity and Lipschitz inequalities on seeded samples.

    Slack is ``rtol * (1 + |a| + |b|)^p``, the natural magnitude of both sides.
    The power-type bounds use the same draws with ``delta = 0, eps = 0``.
    """
    a, b, p, delta, eps = fuzz_samples(samples, seed)
    mono = lip = pmono = plip = 0
    worst = math.inf
    for start in range(0, samples, chunk):
        sl = slice(start, start + chunk)
        aa, bb, pp, dd, ee = a[sl], b[sl], p[sl], delta[sl], eps[sl]
        scale = (1.0 + np.abs(aa) + np.abs(bb)) ** pp
        dv = v_difference(aa, bb, pp, dd, ee, FUZZ_QUAD_TOL)
        gap = _gap(aa, bb, pp, dd, ee, FUZZ_QUAD_TOL, dv)
        mono += int(np.sum(gap < -rtol * scale))
        worst = min(worst, float(np.min(gap / scale)))
        lhs = np.abs(g_first(aa, pp, dd, ee) - g_first(bb, pp, dd, ee))
        rhs = _sup_sqrt_second(aa, bb, pp, dd, ee) * np.abs(dv)
        lip += int(np.sum(lhs > rhs + rtol * scale))

        # |t|^p / p: the same bounds with explicit constants
        half = (pp - 2) / 2
        wa = np.abs(aa) ** half * aa
        wb = np.abs(bb) ** half * bb
        fa = np.abs(aa) ** (pp - 2) * aa
        fb = np.abs(bb) ** (pp - 2) * bb
        pmono += int(np.sum((fa - fb) * (aa - bb) < (pp - 1) * 4 / pp ** 2 * (wa - wb) ** 2 - rtol * scale))
        bound = 2 * (pp - 1) / pp * (np.abs(aa) ** half + np.abs(bb) ** half) * np.abs(wa - wb)
        plip += int(np.sum(np.abs(fa - fb) > bound + rtol * scale))
    return FuzzReport(samples, seed, mono, lip, pmono, plip, worst)
