"""Regularity indicators of discrete minimizers under mesh refinement.

The V-fields ``V_i(D_i u)`` live on the cell faces normal to axis ``i``.
The probe measures their discrete W^{1,2} seminorm and Nikol'skii orders on
an inner box, plus the largest difference quotient of ``u`` there, and
checks that these stay bounded as the mesh is refined.  Boundedness under
refinement is the falsifiable surrogate for the continuum estimates; it is
not a proof of them.

Margins are fractions of the half-extent removed on each side: margin
``m`` keeps ``centre +- (1 - m) * halfwidth``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .besov import estimate_order
from .errors import ConfigurationError, EmptyDomainError, InvalidProfileError, ShapeMismatchError
from .exponents import AnisotropyProfile, initial_vector, iterate_scheme
from .grid import GridFunction
from .integrand import v_difference

STABILITY_RATIO = 1.1
PREDICTION_CAP = 0.95
ORDER_SLACK = 0.1
MIN_MARGIN = 0.25
MIN_INNER_NODES = 8
SURROGATE_NOTE = ("bounded-under-refinement is an empirical surrogate for the continuum "
                  "estimates, not a reproduction of them")


def _box_of(field_: GridFunction):
    lower = np.asarray(field_.origin)
    upper = lower + np.asarray([field_.extent(i) for i in range(field_.ndim)])
    return lower, upper


def inner_box(lower, upper, margin: float):
    if not 0 <= margin < 1:
        raise ConfigurationError(f"margin must lie in [0, 1), got {margin}")
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    centre = 0.5 * (lower + upper)
    half = 0.5 * (upper - lower) * (1.0 - margin)
    return centre - half, centre + half


def restrict(field_: GridFunction, lower, upper, min_nodes: int = 1) -> GridFunction:
    """Nodes of ``field_`` lying in the box ``[lower, upper]`` (up to round-off)."""
    index = []
    origin = []
    for axis in range(field_.ndim):
        x = field_.coords(axis)
        tol = 1e-9 * field_.spacing[axis]
        keep = np.flatnonzero((x >= lower[axis] - tol) & (x <= upper[axis] + tol))
        if keep.size < min_nodes:
            raise EmptyDomainError(
                f"inner box keeps {keep.size} nodes along axis {axis}, need {min_nodes}")
        index.append(slice(int(keep[0]), int(keep[-1]) + 1))
        origin.append(float(x[keep[0]]))
    return GridFunction(field_.values[tuple(index)], field_.spacing, tuple(origin))


def face_fields(u: GridFunction) -> list[GridFunction]:
    """``D_i u`` on the faces normal to axis ``i`` (origin shifted half a cell)."""
    out = []
    for axis, h in enumerate(u.spacing):
        origin = list(u.origin)
        origin[axis] += 0.5 * h
        out.append(GridFunction(np.diff(u.values, axis=axis) / h, u.spacing, tuple(origin)))
    return out


def v_fields(u: GridFunction, integrands) -> list[GridFunction]:
    """``V_i(D_i u)`` per axis, using the unregularized profiles."""
    integrands = [getattr(g, "base", g) for g in integrands]
    if len(integrands) != u.ndim:
        raise ShapeMismatchError(f"{len(integrands)} integrands for a {u.ndim}-d field")
    out = []
    for g, d in zip(integrands, face_fields(u)):
        vals = v_difference(d.values, 0.0, g.p, g.delta, 0.0)
        out.append(d.with_values(vals))
    return out


def _trapezoid_weights(n: int) -> np.ndarray:
    w = np.ones(n)
    w[0] = w[-1] = 0.5
    return w


def w12_seminorm(field_: GridFunction, margin: float = MIN_MARGIN, box=None) -> float:
    """Discrete ``||grad field||_{L^2}`` on the inner box.

    Forward differences along each axis are weighted by the spacing along
    that axis and trapezoid weights across the others, so linear fields get
    the exact value ``|slope| * measure^(1/2)``.
    """
    lower, upper = box if box is not None else _box_of(field_)
    lo, hi = inner_box(lower, upper, margin)
    inner = restrict(field_, lo, hi, MIN_INNER_NODES)
    total = 0.0
    for axis, h in enumerate(inner.spacing):
        d = np.diff(inner.values, axis=axis) / h
        weight = np.ones(d.shape) * h
        for other in range(inner.ndim):
            if other != axis:
                shape = [1] * inner.ndim
                shape[other] = d.shape[other]
                weight = weight * (_trapezoid_weights(d.shape[other]) * inner.spacing[other]).reshape(shape)
        total += math.fsum((weight * d * d).ravel())
    return math.sqrt(total)


def lipschitz_estimate(u: GridFunction, margin: float = MIN_MARGIN, box=None) -> float:
    """Largest ``|D_i u|`` over the faces whose midpoints lie in the inner box."""
    lower, upper = box if box is not None else _box_of(u)
    lo, hi = inner_box(lower, upper, margin)
    return max(float(np.max(np.abs(restrict(d, lo, hi, 1).values))) for d in face_fields(u))


def profile_from_exponents(pvec) -> Optional[AnisotropyProfile]:
    """Two-level profile ``(p, ..., p, q, ..., q)`` matching sorted exponents, if any."""
    vec = sorted(float(v) for v in pvec)
    levels = sorted(set(vec))
    N = len(vec)
    if N < 2 or len(levels) > 2:
        return None
    p, q = levels[0], levels[-1]
    ell = vec.count(p) if p < q else N - 1
    try:
        return AnisotropyProfile(N, ell, p, q)
    except InvalidProfileError:
        return None


@dataclass
class ProbeReport:
    nodes: list
    spacings: list
    margin: float
    w12: list                       # [level][field]
    lipschitz: list                 # [level]
    w12_ratios: list                # [field][step]
    lipschitz_ratios: list
    orders: list                    # [field][axis] on the finest level
    predicted_initial: list
    predicted_final: list
    exponent_verdict: Optional[str]
    checks: dict
    passed: bool
    fields: list = field(default_factory=list, repr=False)

    def as_dict(self) -> dict:
        return {
            "nodes": self.nodes, "spacings": self.spacings, "margin": self.margin,
            "w12": self.w12, "lipschitz": self.lipschitz,
            "w12_ratios": self.w12_ratios, "lipschitz_ratios": self.lipschitz_ratios,
            "orders": self.orders, "predicted_initial": self.predicted_initial,
            "predicted_final": self.predicted_final, "exponent_verdict": self.exponent_verdict,
            "checks": self.checks, "verdict": "PASS" if self.passed else "FAIL",
            "stability_ratio": STABILITY_RATIO, "prediction_cap": PREDICTION_CAP,
            "order_slack": ORDER_SLACK, "note": SURROGATE_NOTE,
        }

    def series_csv(self) -> str:
        """``(h, field, w12)`` rows plus ``(h, lipschitz, value)`` for external plotting."""
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(["h", "quantity", "value"])
        for h, w_row, lip in zip(self.spacings, self.w12, self.lipschitz):
            for i, w in enumerate(w_row):
                out.writerow([repr(h[0]), f"w12_V{i + 1}", repr(w)])
            out.writerow([repr(h[0]), "lipschitz", repr(lip)])
        return buf.getvalue()


def _ratios(series):
    return [b / a if a > 0 else (1.0 if b == 0 else math.inf) for a, b in zip(series, series[1:])]


def _field_order(v: GridFunction, axis: int):
    try:
        return estimate_order(v, axis, 2.0).slope
    except (ConfigurationError, EmptyDomainError):
        return None


def regularity_verdict(series: Sequence[GridFunction], integrands, margin: float = MIN_MARGIN,
                       profile: Optional[AnisotropyProfile] = None) -> ProbeReport:
    """Assemble the probe report for solutions on at least three refined meshes.

    PASS needs every successive ratio of the W^{1,2} seminorms of the
    V-fields and (for N = 2) of the Lipschitz estimates to be at most 1.1,
    and every measured order of ``V_i`` along axis ``j`` on the finest mesh to
    reach ``min(t_j, 0.95) - 0.1`` with ``t`` the predicted final orders.
    """
    series = list(series)
    if len(series) < 3:
        raise ConfigurationError(f"need at least 3 refinement levels, got {len(series)}")
    if margin < MIN_MARGIN:
        raise ConfigurationError(f"probe margin must be >= {MIN_MARGIN}, got {margin}")
    box = _box_of(series[0])
    for u in series:
        if u.ndim != series[0].ndim:
            raise ShapeMismatchError("refinement levels have different dimensions")
        lo, hi = _box_of(u)
        if not (np.allclose(lo, box[0]) and np.allclose(hi, box[1])):
            raise ShapeMismatchError("refinement levels cover different boxes")
    sizes = [int(np.prod(u.dims)) for u in series]
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ConfigurationError(f"levels must be strictly refined, got node counts {[u.dims for u in series]}")
    integrands = [getattr(g, "base", g) for g in integrands]
    N = series[0].ndim

    w12, lips, finest = [], [], None
    for u in series:
        vs = v_fields(u, integrands)
        w12.append([w12_seminorm(v, margin, box) for v in vs])
        lips.append(lipschitz_estimate(u, margin, box))
        finest = vs
    w_ratios = [_ratios([row[i] for row in w12]) for i in range(N)]
    l_ratios = _ratios(lips)

    lo, hi = inner_box(*box, margin)
    inner = [restrict(v, lo, hi, MIN_INNER_NODES) for v in finest]
    orders = [[_field_order(v, axis) for axis in range(N)] for v in inner]

    pvec = [g.p for g in integrands]
    perm = np.argsort(pvec, kind="stable")
    if profile is None:
        profile = profile_from_exponents(pvec)
    sorted_initial = list(initial_vector(sorted(pvec)))
    predicted_initial = [0.0] * N
    for rank, axis in enumerate(perm):
        predicted_initial[axis] = sorted_initial[rank]
    if profile is not None:
        trace = iterate_scheme(profile)
        sorted_final = list(trace.final_vector(profile))
        verdict_text = str(trace.verdict)
    else:
        sorted_final = sorted_initial
        verdict_text = None
    predicted_final = [0.0] * N
    for rank, axis in enumerate(perm):
        predicted_final[axis] = sorted_final[rank]

    order_ok = all(o is not None and o >= min(predicted_final[j], PREDICTION_CAP) - ORDER_SLACK
                   for row in orders for j, o in enumerate(row))
    checks = {
        "w12_stable": all(r <= STABILITY_RATIO for row in w_ratios for r in row),
        "orders_reached": order_ok,
    }
    if N == 2:
        checks["lipschitz_stable"] = all(r <= STABILITY_RATIO for r in l_ratios)
    return ProbeReport(
        nodes=[list(u.dims) for u in series], spacings=[list(u.spacing) for u in series],
        margin=margin, w12=w12, lipschitz=lips, w12_ratios=w_ratios, lipschitz_ratios=l_ratios,
        orders=orders, predicted_initial=predicted_initial, predicted_final=predicted_final,
        exponent_verdict=verdict_text, checks=checks, passed=all(checks.values()), fields=finest)
