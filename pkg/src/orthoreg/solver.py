"""Finite-difference minimization of the regularized orthotropic energy on boxes.

The energy of a nodal field ``u`` is

    sum_i sum_faces g_i(D_i u) * vol  +  sum_nodes f * u * vol

with ``D_i`` the forward difference along axis ``i`` (living on cell faces)
and ``vol`` the product of the spacings.  Boundary nodes are pinned to the
Dirichlet trace, the unknowns are the interior nodes, and the residual is
the energy gradient divided by ``vol``: ``sum_i D_i^T g_i'(D_i u) + f``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import ConfigurationError, NumericalError, ShapeMismatchError
from .grid import GridFunction
from .integrand import PowerIntegrand, g_first, g_second, g_value, regularize

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 200_000
STAGNATION_ITERS = 10


@dataclass(frozen=True)
class Mesh:
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    nodes: tuple[int, ...]

    def __post_init__(self):
        lower = tuple(float(v) for v in self.lower)
        upper = tuple(float(v) for v in self.upper)
        nodes = tuple(int(n) for n in self.nodes)
        if not len(lower) == len(upper) == len(nodes):
            raise ShapeMismatchError("lower, upper and nodes need one entry per axis")
        if any(n < 3 for n in nodes):
            raise ConfigurationError(f"need at least 3 nodes per axis, got {nodes}")
        if any(not hi > lo for lo, hi in zip(lower, upper)):
            raise ConfigurationError(f"box must have positive extent, got {lower} to {upper}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "nodes", nodes)

    @property
    def ndim(self) -> int:
        return len(self.nodes)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple((hi - lo) / (n - 1) for lo, hi, n in zip(self.lower, self.upper, self.nodes))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def coords(self) -> list[np.ndarray]:
        return [lo + h * np.arange(n) for lo, h, n in zip(self.lower, self.spacing, self.nodes)]

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.coords(), indexing="ij")

    def sample(self, func) -> GridFunction:
        return GridFunction.sample(func, self.lower, self.upper, self.nodes)

    def interior_mask(self) -> np.ndarray:
        mask = np.zeros(self.nodes, dtype=bool)
        mask[tuple(slice(1, -1) for _ in self.nodes)] = True
        return mask

    def refined(self) -> "Mesh":
        """Halve every spacing (``n -> 2n - 1`` nodes)."""
        return Mesh(self.lower, self.upper, tuple(2 * n - 1 for n in self.nodes))


@dataclass(frozen=True)
class DiscreteProblem:
    """Energy data on a mesh.  ``integrands`` are the unregularized per-axis profiles."""

    mesh: Mesh
    integrands: tuple[PowerIntegrand, ...]
    source: np.ndarray
    boundary: np.ndarray
    eps: float = 0.0

    def __post_init__(self):
        integrands = tuple(getattr(g, "base", g) for g in self.integrands)
        if len(integrands) != self.mesh.ndim:
            raise ShapeMismatchError(f"{len(integrands)} integrands for a {self.mesh.ndim}-d mesh")
        source = np.asarray(getattr(self.source, "values", self.source), dtype=np.float64)
        boundary = np.asarray(getattr(self.boundary, "values", self.boundary), dtype=np.float64)
        source = np.broadcast_to(source, self.mesh.nodes).copy()
        boundary = np.broadcast_to(boundary, self.mesh.nodes).copy()
        if not np.all(np.isfinite(source)):
            raise ValueError("source must be finite")
        if not np.all(np.isfinite(boundary[~self.mesh.interior_mask()])):
            raise ValueError("boundary trace must be finite")
        if not (math.isfinite(self.eps) and self.eps >= 0):
            raise ConfigurationError(f"eps must be >= 0, got {self.eps}")
        for arr in (source, boundary):
            arr.setflags(write=False)
        object.__setattr__(self, "integrands", integrands)
        object.__setattr__(self, "source", source)
        object.__setattr__(self, "boundary", boundary)
        object.__setattr__(self, "eps", float(self.eps))

    @property
    def regularized(self):
        return tuple(regularize(g, self.eps) for g in self.integrands)

    def with_eps(self, eps: float) -> "DiscreteProblem":
        return DiscreteProblem(self.mesh, self.integrands, self.source, self.boundary, eps)

    def with_source(self, source) -> "DiscreteProblem":
        return DiscreteProblem(self.mesh, self.integrands, source, self.boundary, self.eps)

    def pinned(self, values) -> np.ndarray:
        """Copy of ``values`` with the boundary nodes reset to the trace."""
        u = np.array(values, dtype=np.float64)
        mask = ~self.mesh.interior_mask()
        u[mask] = self.boundary[mask]
        return u

    def grid(self, values) -> GridFunction:
        return GridFunction(values, self.mesh.spacing, self.mesh.lower)

    def is_coercive(self) -> bool:
        return self.eps > 0 or any(g.p == 2 and g.delta == 0 for g in self.integrands)


@dataclass
class SolveResult:
    u: GridFunction
    energy: float
    residual_inf: float
    iterations: int
    converged: bool
    energies: list = field(default_factory=list)
    eps: float = 0.0
    seconds: float = 0.0
    nonunique_risk: bool = False

    def as_dict(self) -> dict:
        return {"energy": self.energy, "residual_inf": self.residual_inf, "iterations": self.iterations,
                "converged": self.converged, "eps": self.eps, "nonunique_risk": self.nonunique_risk}


def _values(problem: DiscreteProblem, u) -> np.ndarray:
    vals = np.asarray(getattr(u, "values", u), dtype=np.float64)
    if vals.shape != problem.mesh.nodes:
        raise ShapeMismatchError(f"field shape {vals.shape} does not match mesh {problem.mesh.nodes}")
    return vals


def _params(problem: DiscreteProblem):
    return [(g.p, g.delta, problem.eps) for g in problem.integrands]


def differences(u: np.ndarray, spacing) -> list[np.ndarray]:
    """Forward differences ``D_i u`` on the faces normal to each axis."""
    return [np.diff(u, axis=i) / h for i, h in enumerate(spacing)]


def _adjoint(w: np.ndarray, axis: int, h: float, shape) -> np.ndarray:
    # D^T w at node j is (w_{j-1} - w_j) / h with zero padding at both ends
    pad = [(0, 0)] * len(shape)
    pad[axis] = (1, 1)
    wp = np.pad(w, pad)
    return -np.diff(wp, axis=axis) / h


def energy(problem: DiscreteProblem, u) -> float:
    u = _values(problem, u)
    vol = problem.mesh.cell_volume
    total = math.fsum(float(np.sum(g_value(d, *par))) for d, par in
                      zip(differences(u, problem.mesh.spacing), _params(problem)))
    return (total + float(np.sum(problem.source * u))) * vol


def _full_gradient(problem: DiscreteProblem, u: np.ndarray) -> np.ndarray:
    spacing = problem.mesh.spacing
    out = problem.source.copy()
    for i, (d, par) in enumerate(zip(differences(u, spacing), _params(problem))):
        out += _adjoint(g_first(d, *par), i, spacing[i], u.shape)
    return out


def el_residual(problem: DiscreteProblem, u) -> GridFunction:
    """Energy gradient divided by the cell volume, zero on boundary nodes."""
    u = _values(problem, u)
    res = _full_gradient(problem, u)
    res[~problem.mesh.interior_mask()] = 0.0
    return problem.grid(res)


# ---------------------------------------------------------------- optimizer

class _Operators:
    """Difference matrices restricted to interior unknowns, built once per mesh."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        self.mask = mesh.interior_mask()
        self.index = np.flatnonzero(self.mask.ravel())
        mats = []
        for axis, (n, h) in enumerate(zip(mesh.nodes, mesh.spacing)):
            d1 = sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n)) / h
            factors = [sp.identity(m, format="csr") for m in mesh.nodes]
            factors[axis] = d1
            full = factors[0].tocsr()
            for f in factors[1:]:
                full = sp.kron(full, f, format="csr")
            mats.append(full[:, self.index].tocsr())
        self.diffs = mats

    def hessian(self, problem: DiscreteProblem, u: np.ndarray) -> sp.csc_matrix:
        blocks = []
        for d, mat, par in zip(differences(u, self.mesh.spacing), self.diffs, _params(problem)):
            w = g_second(d, *par).ravel()
            blocks.append(mat.T @ sp.diags(w) @ mat)
        hess = blocks[0]
        for b in blocks[1:]:
            hess = hess + b
        diag = hess.diagonal()
        # a small floor keeps the lagged Hessian invertible inside degeneracy zones
        floor = 1e-10 * max(float(diag.max()), 1.0)
        return (hess + sp.diags(np.full(diag.shape, floor))).tocsc()


def _line_search(grad_at, x, d, slope0, t0=1.0, shrink_tol=0.1, max_evals=50):
    """Find ``t > 0`` with ``phi'(t) <= 0`` and ``phi'(t) >= shrink_tol * phi'(0)``.

    ``phi(t) = E(x + t d)`` is convex, so ``phi'(t) <= 0`` certifies
    ``phi(t) <= phi(0)`` without comparing energies (which lose all their
    digits to round-off near convergence).  Returns ``(t, gradient)`` for
    the accepted point, or ``(0, None)`` if no admissible step was found.
    """
    lo, slope_lo, grad_lo = 0.0, slope0, None
    hi = slope_hi = None
    t = t0
    for _ in range(max_evals):
        grad = grad_at(x + t * d)
        slope = float(grad @ d)
        if not math.isfinite(slope):
            hi, slope_hi = t, math.inf
        elif slope <= 0:
            lo, slope_lo, grad_lo = t, slope, grad
            if slope >= shrink_tol * slope0:
                return lo, grad_lo
        else:
            hi, slope_hi = t, slope
        if hi is None:
            t = 2.0 * lo
            continue
        width = hi - lo
        if width <= 1e-14 * max(hi, 1.0):
            break
        if math.isfinite(slope_hi):
            t = lo - slope_lo * width / (slope_hi - slope_lo)
            t = min(max(t, lo + 0.1 * width), hi - 0.1 * width)
        else:
            t = lo + 0.5 * width
    return lo, grad_lo


def minimize(problem: DiscreteProblem, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
             initial=None, refresh: int = 1, record_energy: bool = True) -> SolveResult:
    """Minimize the discrete energy by Hessian-preconditioned descent.

    Directions are ``-M^{-1} r`` with ``M`` the Hessian of the energy (a
    sparse matrix refreshed every ``refresh`` iterations and factorized with
    SuperLU).  Step lengths come from a derivative-only line search on the
    convex restriction of the energy, which makes every accepted step a
    descent step.  Convergence means ``max |residual| <= tol`` over interior
    nodes.
    """
    if not tol > 0:
        raise ConfigurationError(f"tol must be > 0, got {tol}")
    if not problem.is_coercive():
        raise ConfigurationError("need eps > 0 or an axis with p = 2 and delta = 0")
    started = time.perf_counter()
    ops = _Operators(problem.mesh)
    idx = ops.index
    vol = problem.mesh.cell_volume
    u = problem.pinned(problem.boundary if initial is None else _values(problem, initial))

    def grad_at(x):
        full = u.copy().ravel()
        full[idx] = x
        return _full_gradient(problem, full.reshape(u.shape)).ravel()[idx]

    x = u.ravel()[idx].copy()
    grad = grad_at(x)
    energies = []

    def current_energy(x):
        full = u.copy().ravel()
        full[idx] = x
        e = energy(problem, full.reshape(u.shape))
        if not math.isfinite(e):
            raise NumericalError("energy became non-finite", iteration=it)
        return e

    it = 0
    if record_energy:
        energies.append(current_energy(x))
    lu = None
    stalls = 0
    best, since_best = math.inf, 0
    while it < max_iter:
        res_inf = float(np.max(np.abs(grad))) if grad.size else 0.0
        if res_inf <= tol:
            break
        # round-off floor: the residual stopped shrinking
        if res_inf < 0.99 * best:
            best, since_best = res_inf, 0
        else:
            since_best += 1
            if since_best >= STAGNATION_ITERS:
                break
        if lu is None or it % refresh == 0:
            full = u.copy().ravel()
            full[idx] = x
            lu = splu(ops.hessian(problem, full.reshape(u.shape)))
        d = -lu.solve(grad)
        slope0 = float(grad @ d)
        if not slope0 < 0:
            # stale factorization: fall back to steepest descent for this step
            d = -grad
            slope0 = float(grad @ d)
        t, new_grad = _line_search(grad_at, x, d, slope0)
        it += 1
        if t == 0.0:
            stalls += 1
            lu = None
            if stalls >= 3:
                break
            continue
        stalls = 0
        x = x + t * d
        grad = new_grad
        if record_energy:
            energies.append(current_energy(x))
    full = u.copy().ravel()
    full[idx] = x
    u = full.reshape(u.shape)
    res_inf = float(np.max(np.abs(grad))) if grad.size else 0.0
    e = energy(problem, u)
    if not math.isfinite(e):
        raise NumericalError("energy became non-finite", iteration=it)
    risk = problem.eps == 0 and any(g.delta > 0 for g in problem.integrands)
    return SolveResult(problem.grid(u), e, res_inf, it, res_inf <= tol, energies, problem.eps,
                       time.perf_counter() - started, risk)


def epsilon_continuation(problem: DiscreteProblem, eps_schedule: Sequence[float], tol: float = DEFAULT_TOL,
                         max_iter: int = DEFAULT_MAX_ITER, source_for_eps: Optional[Callable] = None,
                         initial=None) -> list[SolveResult]:
    """Warm-started solves along a decreasing list of regularization levels.

    ``source_for_eps(eps)`` may supply an eps-dependent source (as for a
    manufactured solution); otherwise the problem's source is kept.
    """
    schedule = [float(e) for e in eps_schedule]
    if not schedule or any(e <= 0 for e in schedule):
        raise ConfigurationError(f"eps schedule must be a non-empty list of positive values, got {schedule}")
    if any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise ConfigurationError(f"eps schedule must be strictly decreasing, got {schedule}")
    results = []
    guess = initial
    for eps in schedule:
        stage = problem.with_eps(eps)
        if source_for_eps is not None:
            stage = stage.with_source(source_for_eps(eps))
        res = minimize(stage, tol, max_iter, initial=guess)
        if not res.converged:
            raise NumericalError("continuation stage did not converge", eps=eps,
                                 residual_inf=res.residual_inf, iterations=res.iterations)
        results.append(res)
        guess = res.u
    return results


def continuation_gaps(results: Sequence[SolveResult]) -> list[float]:
    """``max |u_k - u_{k+1}|`` between successive continuation stages."""
    return [float(np.max(np.abs(a.u.values - b.u.values))) for a, b in zip(results, results[1:])]


# ---------------------------------------------------------------- manufactured solutions

@dataclass(frozen=True)
class AnalyticField:
    """A field with optional exact first and pure second partial derivatives.

    Each callback takes the coordinate arrays ``(x_1, ..., x_N)``;
    ``gradient`` and ``second`` return one array per axis.
    """

    value: Callable
    gradient: Optional[Callable] = None
    second: Optional[Callable] = None


def manufactured_source(u_star, integrands, mesh: Mesh, eps: float = 0.0) -> GridFunction:
    """Source ``f = sum_i d/dx_i g_i'(d u*/dx_i)`` making ``u*`` an exact solution.

    With analytic derivatives the chain rule ``g_i''(u_i) u_ii`` is used;
    otherwise nested centered differences with a step of a quarter of the
    mesh spacing.
    """
    field_ = u_star if isinstance(u_star, AnalyticField) else AnalyticField(u_star)
    params = [(g.p, g.delta, eps) for g in (getattr(g, "base", g) for g in integrands)]
    if len(params) != mesh.ndim:
        raise ShapeMismatchError(f"{len(params)} integrands for a {mesh.ndim}-d mesh")
    coords = mesh.mesh()
    total = np.zeros(mesh.nodes)
    if field_.gradient is not None and field_.second is not None:
        grads = field_.gradient(*coords)
        seconds = field_.second(*coords)
        for par, gi, si in zip(params, grads, seconds):
            total += g_second(np.broadcast_to(gi, mesh.nodes), *par) * si
    else:
        for axis, (par, h) in enumerate(zip(params, mesh.spacing)):
            step = h / 4

            def shifted(offset):
                pts = list(coords)
                pts[axis] = pts[axis] + offset
                return np.broadcast_to(np.asarray(field_.value(*pts), dtype=np.float64), mesh.nodes)

            centre = shifted(0.0)
            ahead = (shifted(step) - centre) / step
            behind = (centre - shifted(-step)) / step
            total += (g_first(ahead, *par) - g_first(behind, *par)) / step
    if not np.all(np.isfinite(total)):
        raise ValueError("manufactured source is not finite; u* is not smooth enough on this mesh")
    return GridFunction(total, mesh.spacing, mesh.lower)


# ---------------------------------------------------------------- presets

def _quadratic(*x):
    return sum(xi * xi for xi in x)


SOURCE_PRESETS = {
    "zero": lambda *x: np.zeros(np.broadcast(*x).shape),
    "sin-cos": lambda *x: 10.0 * np.sin(np.pi * x[0]) * np.cos(np.pi * x[1]),
    "one": lambda *x: np.ones(np.broadcast(*x).shape),
}

BOUNDARY_PRESETS = {
    "zero": lambda *x: np.zeros(np.broadcast(*x).shape),
    "quadratic": _quadratic,
}

QUADRATIC = AnalyticField(
    _quadratic,
    gradient=lambda *x: [2.0 * xi for xi in x],
    second=lambda *x: [np.full(np.shape(xi), 2.0) for xi in x],
)


def build_problem(mesh: Mesh, integrands, eps: float = 0.0, source="zero", boundary="zero",
                  boundary_slope=None) -> DiscreteProblem:
    """Assemble a problem from preset names, callables or arrays.

    ``source="manufactured"`` takes the source that makes ``x_1^2 + ... + x_N^2``
    exact for the given integrands and eps.  A ``boundary_slope`` list gives
    the affine trace ``sum_i slope_i (x_i - lower_i)``.
    """
    coords = mesh.mesh()
    integrands = tuple(integrands)
    if boundary_slope is not None:
        trace = sum(s * (x - lo) for s, x, lo in zip(boundary_slope, coords, mesh.lower))
    elif isinstance(boundary, str):
        if boundary not in BOUNDARY_PRESETS:
            raise ConfigurationError(f"unknown boundary preset {boundary!r}; known: {sorted(BOUNDARY_PRESETS)}")
        trace = BOUNDARY_PRESETS[boundary](*coords)
    elif callable(boundary):
        trace = boundary(*coords)
    else:
        trace = np.asarray(getattr(boundary, "values", boundary), dtype=np.float64)
    if isinstance(source, str):
        if source == "manufactured":
            f = manufactured_source(QUADRATIC, integrands, mesh, eps).values
        elif source in SOURCE_PRESETS:
            f = SOURCE_PRESETS[source](*coords)
        else:
            raise ConfigurationError(
                f"unknown source preset {source!r}; known: {sorted(SOURCE_PRESETS) + ['manufactured']}")
    elif callable(source):
        f = source(*coords)
    else:
        f = np.asarray(getattr(source, "values", source), dtype=np.float64)
        if f.shape != mesh.nodes:
            raise ShapeMismatchError(f"source grid {f.shape} does not match mesh {mesh.nodes}")
    return DiscreteProblem(mesh, integrands, f, trace, eps)
