"""Directional difference quotients and Besov-Nikol'skii seminorms of grid functions.

Lags are integer node shifts along one axis; the physical shift is
``lag * spacing[axis]``.  The supremum over shifts is replaced by a maximum
over a finite lag set (dyadic by default), which under-estimates the
continuum seminorm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import ConfigurationError, EmptyDomainError
from .grid import GridFunction

# order estimation: smallest node lag trusted when enough larger lags exist
SAMPLING_MIN_LAG = 8
SLOPE_RANGE = (0.0, 1.5)


@dataclass(frozen=True)
class SeminormSpec:
    axis: int
    t: float
    p: float = 2.0
    lags: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        if not 0 < self.t <= 1:
            raise ConfigurationError(f"order t must lie in (0, 1], got {self.t}")
        if not self.p >= 1:
            raise ConfigurationError(f"norm exponent p must be >= 1, got {self.p}")
        if self.lags is not None:
            lags = tuple(int(h) for h in self.lags)
            if not lags or any(h < 1 for h in lags):
                raise ConfigurationError(f"lags must be positive integers, got {self.lags}")
            object.__setattr__(self, "lags", lags)

    def resolve_lags(self, psi: GridFunction, order: int = 1) -> tuple[int, ...]:
        if not 0 <= self.axis < psi.ndim:
            raise ConfigurationError(f"axis {self.axis} out of range for a {psi.ndim}-d grid")
        lags = self.lags if self.lags is not None else dyadic_lags(psi.dims[self.axis], order)
        n = psi.dims[self.axis]
        bad = [h for h in lags if order * h >= n]
        if bad:
            raise EmptyDomainError(f"lags {bad} leave no nodes along axis {self.axis} (n={n})")
        return lags


@dataclass
class OrderEstimate:
    slope: float
    intercept: float
    residual: float
    lags: list[int]
    saturated: bool = False
    reliable: bool = True
    method: str = "two-term"
    raw_slope: Optional[float] = None
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "residual": self.residual,
                "lags": list(self.lags), "saturated": self.saturated, "reliable": self.reliable,
                "method": self.method, "raw_slope": self.raw_slope}


@dataclass(frozen=True)
class InterpolationCheck:
    holds: bool
    lhs: float
    rhs: float


def dyadic_lags(n: int, order: int = 1) -> tuple[int, ...]:
    """Lags 1, 2, 4, ... up to a quarter of the axis extent (in nodes)."""
    cap = (n - 1) // 4
    lags = []
    h = 1
    while h <= cap and order * h < n:
        lags.append(h)
        h *= 2
    return tuple(lags)


def _shift(vals: np.ndarray, axis: int, start: int, stop: Optional[int]) -> np.ndarray:
    index = [slice(None)] * vals.ndim
    index[axis] = slice(start, stop)
    return vals[tuple(index)]


def shift_diff(psi: GridFunction, axis: int, lag: int, order: int = 1) -> GridFunction:
    """First or second forward difference ``delta_h psi`` / ``delta_h^2 psi`` along ``axis``.

    The result lives on the shrunken box of nodes ``x`` with ``x + order*h``
    still on the grid, so its origin coincides with ``psi.origin``.
    """
    if order not in (1, 2):
        raise ConfigurationError(f"difference order must be 1 or 2, got {order}")
    if lag < 1:
        raise ConfigurationError(f"lag must be >= 1, got {lag}")
    n = psi.dims[axis]
    if order * lag >= n:
        raise EmptyDomainError(f"lag {lag} with order {order} exceeds axis length {n}")
    vals = psi.values
    d = _shift(vals, axis, lag, None) - _shift(vals, axis, 0, n - lag)
    if order == 2:
        m = d.shape[axis]
        d = _shift(d, axis, lag, None) - _shift(d, axis, 0, m - lag)
    return GridFunction(d, psi.spacing, psi.origin)


def lp_norm(values: np.ndarray, cell_volume: float, p: float) -> float:
    """Midpoint-rule ``L^p`` norm ``(sum |v|^p * cell_volume)^(1/p)``."""
    a = np.abs(np.asarray(values, dtype=np.float64))
    if a.size == 0:
        return 0.0
    top = float(a.max())
    if top == 0.0:
        return 0.0
    # scale out the maximum so large p does not overflow
    return top * (float(np.sum((a / top) ** p)) * cell_volume) ** (1.0 / p)


def difference_norms(psi: GridFunction, axis: int, p: float, lags, order: int = 1) -> np.ndarray:
    vol = psi.cell_volume
    return np.array([lp_norm(shift_diff(psi, axis, h, order).values, vol, p) for h in lags])


def _seminorm(psi: GridFunction, spec: SeminormSpec, order: int) -> float:
    lags = spec.resolve_lags(psi, order)
    if not lags:
        raise EmptyDomainError(f"no admissible lags along axis {spec.axis}")
    norms = difference_norms(psi, spec.axis, spec.p, lags, order)
    h = np.asarray(lags, dtype=np.float64) * psi.spacing[spec.axis]
    return float(np.max(norms / h ** spec.t))


def nikolskii_seminorm(psi: GridFunction, spec: SeminormSpec) -> float:
    """Max over lags of ``||delta_h psi||_{L^p} / h^t`` on the valid box."""
    return _seminorm(psi, spec, 1)


def besov_seminorm(psi: GridFunction, spec: SeminormSpec) -> float:
    """Same as :func:`nikolskii_seminorm` with second differences."""
    return _seminorm(psi, spec, 2)


def lemma_comparison(psi: GridFunction, spec: SeminormSpec) -> tuple[float, float]:
    """Return ``(besov / 2, nikolskii)`` evaluated on one common lag set."""
    lags = spec.resolve_lags(psi, 2)
    common = SeminormSpec(spec.axis, spec.t, spec.p, lags)
    return 0.5 * besov_seminorm(psi, common), nikolskii_seminorm(psi, common)


def interpolation_check(psi: GridFunction, axis: int, p: float, t: float, s: float,
                        lags=None, rtol: float = 1e-12) -> InterpolationCheck:
    """Check the interpolation bound between second-difference seminorms of orders t < s.

    The bound ``[psi]_t <= s t^(-t/s) (3/(s-t))^((s-t)/s) [psi]_s^(t/s) ||psi||^((s-t)/s)``
    holds for the discrete maximum over any lag set, so the only slack
    allowed is floating-point round-off (``rtol``).
    """
    if not 0 < t < s <= 1:
        raise ConfigurationError(f"need 0 < t < s <= 1, got t={t}, s={s}")
    lags = SeminormSpec(axis, s, p, lags).resolve_lags(psi, 2)
    lhs = besov_seminorm(psi, SeminormSpec(axis, t, p, lags))
    top = besov_seminorm(psi, SeminormSpec(axis, s, p, lags))
    base = lp_norm(psi.values, psi.cell_volume, p)
    const = s * t ** (-t / s) * (3.0 / (s - t)) ** ((s - t) / s)
    rhs = const * top ** (t / s) * base ** ((s - t) / s)
    return InterpolationCheck(bool(lhs <= rhs * (1.0 + rtol)), lhs, rhs)


# ---------------------------------------------------------------- order estimation

def _power_fit(h: np.ndarray, norms: np.ndarray) -> tuple[float, float, float]:
    A = np.vstack([np.log(h), np.ones_like(h)]).T
    y = np.log(norms)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return float(coef[0]), float(coef[1]), resid


def _two_term_fit(h: np.ndarray, norms: np.ndarray, p: float, background: float):
    """Fit ``norms^p ~ A h^(tau p) + B h^(background p)`` by variable projection in tau."""
    y = norms ** p
    ones = np.ones_like(h)

    def solve(tau):
        M = np.vstack([h ** (tau * p) / y, h ** (background * p) / y]).T
        coef, *_ = np.linalg.lstsq(M, ones, rcond=None)
        return float(np.sum((M @ coef - ones) ** 2)), coef

    hi = background - 1e-3
    grid = np.linspace(0.005, hi, 400)
    costs = [solve(tau)[0] for tau in grid]
    i = int(np.argmin(costs))
    lo_b, hi_b = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = minimize_scalar(lambda tau: solve(tau)[0], bounds=(lo_b, hi_b), method="bounded",
                          options={"xatol": 1e-10})
    tau = float(res.x)
    cost, coef = solve(tau)
    at_edge = tau >= grid[-2]
    return tau, coef, math.sqrt(cost / len(h)), at_edge


def estimate_order(psi: GridFunction, axis: int, p: float = 2.0, order: int = 1,
                   lags=None, min_lag: Optional[int] = None,
                   residual_threshold: float = 0.15) -> OrderEstimate:
    """Estimate the fractional order of ``psi`` along ``axis`` from difference norms.

    The norms follow ``||delta_h psi||_p^p ~ A h^(t p) + B h^(order p)``
    where the second term is the smooth background of the field.  ``t`` is
    fitted by variable projection over the lags ``>= min_lag`` (defaults to
    8 nodes when at least five such lags exist, since the smallest lags are
    dominated by how the grid samples a singularity).  A plain log-log slope
    close to ``order`` marks the field as saturated, in which case that
    slope is reported instead.
    """
    if lags is None:
        lags = dyadic_lags(psi.dims[axis], order)
    lags = [int(h) for h in lags]
    if min_lag is None:
        min_lag = SAMPLING_MIN_LAG if sum(h >= SAMPLING_MIN_LAG for h in lags) >= 5 else 1
    lags = [h for h in lags if h >= min_lag]
    if len(lags) < 4:
        raise ConfigurationError(f"order estimation needs >= 4 lags, got {lags}")
    norms = difference_norms(psi, axis, p, lags, order)
    h = np.asarray(lags, dtype=np.float64) * psi.spacing[axis]
    lo, hi = SLOPE_RANGE
    if np.any(norms <= 0):
        return OrderEstimate(hi, 0.0, 0.0, lags, saturated=True, reliable=False, method="degenerate")

    slope, intercept, resid = _power_fit(h, norms)
    used = lags
    if resid > 0.02 and len(lags) >= 6:
        # large lags leave the asymptotic regime first
        slope, intercept, resid = _power_fit(h[:-2], norms[:-2])
        used = lags[:-2]
    if slope >= order - 0.03:
        return OrderEstimate(min(max(slope, lo), hi), intercept, resid, list(used), saturated=True,
                             reliable=resid <= residual_threshold, method="power-law",
                             raw_slope=slope)

    tau, coef, misfit, at_edge = _two_term_fit(h, norms, p, float(order))
    if at_edge or coef[0] <= 0:
        return OrderEstimate(min(max(slope, lo), hi), intercept, resid, list(used), saturated=True,
                             reliable=resid <= residual_threshold, method="power-law",
                             raw_slope=slope)
    clamped = min(max(tau, lo), hi)
    return OrderEstimate(clamped, math.log(coef[0]) / p, misfit, lags,
                         saturated=clamped != tau, reliable=misfit <= residual_threshold,
                         method="two-term", raw_slope=slope,
                         extra={"background_coef": float(coef[1])})


def quotient_report(psi: GridFunction, axis: int, p: float = 2.0, order: int = 1) -> dict:
    """JSON-ready lags, physical shifts, difference norms and the order estimate."""
    lags = dyadic_lags(psi.dims[axis], order)
    norms = difference_norms(psi, axis, p, lags, order)
    try:
        est = estimate_order(psi, axis, p, order).as_dict()
    except ConfigurationError as exc:
        est = {"error": str(exc)}
    return {
        "axis": axis,
        "p": p,
        "order": order,
        "lags": list(lags),
        "shifts": [h * psi.spacing[axis] for h in lags],
        "quotients": [float(v) for v in norms],
        "order_estimate": est,
    }
