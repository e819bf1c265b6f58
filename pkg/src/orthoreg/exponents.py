"""Exponent arithmetic for orthotropic functionals with two growth exponents.

Everything here is a pure function of small value objects: harmonic means,
Sobolev and Nikol'skii embedding exponents, the differentiability recursion
``t_{k+1} = p/q + alpha_k * b(t_k)``, its limit analysis, and the admissibility
conditions on ``(N, ell, p, q)`` under which the recursion reaches order one.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Optional, Union

from .errors import (
    ConfigurationError,
    DegenerateEmbeddingError,
    DomainError,
    InvalidProfileError,
    UseLinearCaseError,
)

# relative tolerance used only to classify the critical Sobolev case
CRITICAL_RTOL = 1e-12
# increments below this for CONVERGENCE_STREAK steps count as convergence
CONVERGENCE_TOL = 1e-12
CONVERGENCE_STREAK = 3
_EPS = 2.0 ** -52


@dataclass(frozen=True)
class AnisotropyProfile:
    """``ell`` axes with exponent ``p`` followed by ``N - ell`` axes with ``q``."""

    N: int
    ell: int
    p: float
    q: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise InvalidProfileError(f"N must be an integer >= 2, got {self.N}")
        if int(self.ell) != self.ell or not 1 <= self.ell <= self.N - 1:
            raise InvalidProfileError(f"ell must lie in [1, N-1], got {self.ell}")
        if not (math.isfinite(self.p) and math.isfinite(self.q)):
            raise InvalidProfileError("p and q must be finite")
        if not 2 <= self.p <= self.q:
            raise InvalidProfileError(f"need 2 <= p <= q, got p={self.p}, q={self.q}")

    @property
    def pvec(self) -> tuple[float, ...]:
        return (float(self.p),) * self.ell + (float(self.q),) * (self.N - self.ell)

    @property
    def ratio(self) -> float:
        """The ratio p/q, which is also the starting order t_0."""
        return self.p / self.q

    def as_dict(self) -> dict:
        return {"N": self.N, "ell": self.ell, "p": self.p, "q": self.q}


@dataclass(frozen=True)
class DifferentiabilityVector:
    """Per-axis fractional orders, each in (0, 1], nondecreasing."""

    t: tuple[float, ...]

    def __post_init__(self):
        t = tuple(float(v) for v in self.t)
        object.__setattr__(self, "t", t)
        if not t:
            raise InvalidProfileError("empty differentiability vector")
        if any(not (0.0 < v <= 1.0) for v in t):
            raise InvalidProfileError(f"orders must lie in (0, 1], got {t}")
        if any(b < a for a, b in zip(t, t[1:])):
            raise InvalidProfileError(f"orders must be nondecreasing, got {t}")

    def __len__(self):
        return len(self.t)

    def __iter__(self):
        return iter(self.t)

    def __getitem__(self, i):
        return self.t[i]

    @property
    def gamma(self) -> float:
        return nikolskii_gamma(self)

    def chi(self, alpha: float) -> float:
        return chi_from_gamma(self.gamma, alpha)


@dataclass(frozen=True)
class SobolevExponent:
    """Tagged Sobolev exponent: ``subcritical`` carries a finite value."""

    kind: str
    value: Optional[float] = None

    @property
    def is_finite(self) -> bool:
        return self.kind == "subcritical"

    def admits(self, exponent: float) -> bool:
        """True when ``exponent`` lies strictly below the embedding exponent."""
        if self.kind == "subcritical":
            return exponent < self.value
        return True

    def as_dict(self) -> dict:
        return {"kind": self.kind, "value": self.value}


@dataclass(frozen=True)
class IterationStep:
    k: int
    alpha: float
    t: DifferentiabilityVector
    gamma: float
    chi: float

    def as_dict(self) -> dict:
        return {"k": self.k, "alpha": self.alpha, "t": list(self.t), "gamma": self.gamma, "chi": self.chi}


@dataclass(frozen=True)
class Verdict:
    """``full`` (with ``k0``), ``converges`` (with ``L``) or ``inconclusive``."""

    kind: str
    k0: Optional[int] = None
    L: Optional[float] = None

    def as_dict(self) -> dict:
        names = {"full": "FullDifferentiability", "converges": "ConvergesBelowOne",
                 "inconclusive": "Inconclusive"}
        out = {"kind": names[self.kind]}
        if self.k0 is not None:
            out["k0"] = self.k0
        if self.L is not None:
            out["L"] = self.L
        return out

    def __str__(self):
        if self.kind == "full":
            return f"FullDifferentiability({self.k0})"
        if self.kind == "converges":
            return f"ConvergesBelowOne({self.L!r})"
        return "Inconclusive"


@dataclass
class IterationTrace:
    steps: list[IterationStep]
    verdict: Verdict
    # scalar small-axis orders t_0, t_1, ... including the terminal value
    orders: list[float] = field(default_factory=list)

    @property
    def last_iterate(self) -> float:
        return self.orders[-1]

    def final_vector(self, profile: AnisotropyProfile) -> DifferentiabilityVector:
        """Orders predicted at the end of the run (1 on every axis if full)."""
        if self.verdict.kind == "full":
            return DifferentiabilityVector((1.0,) * profile.N)
        t = min(self.last_iterate, 1.0)
        return DifferentiabilityVector((t,) * profile.ell + (1.0,) * (profile.N - profile.ell))


@dataclass(frozen=True)
class LimitPolynomial:
    """``P(t) = a2 t^2 - a1 t - a0`` whose roots are the candidate limits."""

    a2: float
    a1: float
    a0: float
    discriminant: float
    roots: Optional[tuple[float, float]]

    def __call__(self, t: float) -> float:
        return self.a2 * t * t - self.a1 * t - self.a0

    def as_dict(self) -> dict:
        return {"a2": self.a2, "a1": self.a1, "a0": self.a0, "disc": self.discriminant,
                "roots": list(self.roots) if self.roots is not None else None}


@dataclass(frozen=True)
class LimitValue:
    """Closed-form limit of the recursion: finite ``value`` or divergent."""

    divergent: bool
    value: Optional[float] = None
    case: str = ""

    def as_dict(self) -> dict:
        return {"divergent": self.divergent, "value": self.value, "case": self.case}


@dataclass(frozen=True)
class ConditionReport:
    ok: bool
    branch: Optional[str]
    boundary: bool
    margin: float
    thresholds: dict

    def as_dict(self) -> dict:
        margin = self.margin if math.isfinite(self.margin) else None
        return {"ok": self.ok, "branch": self.branch, "boundary": self.boundary,
                "margin": margin, "thresholds": self.thresholds}


def _as_pvec(pvec) -> tuple[float, ...]:
    if isinstance(pvec, AnisotropyProfile):
        return pvec.pvec
    vec = tuple(float(v) for v in pvec)
    if not vec:
        raise InvalidProfileError("empty exponent vector")
    if any(not math.isfinite(v) for v in vec):
        raise InvalidProfileError("exponents must be finite")
    return vec


def harmonic_mean(pvec) -> float:
    vec = _as_pvec(pvec)
    if any(v < 1 for v in vec):
        raise InvalidProfileError(f"exponents must be >= 1, got {vec}")
    return len(vec) / math.fsum(1.0 / v for v in vec)


def sobolev_exponent(pbar: float, N: int) -> SobolevExponent:
    """Classify ``pbar`` against the dimension and return ``N pbar / (N - pbar)`` if finite."""
    if pbar < 1 or N < 2:
        raise InvalidProfileError(f"need pbar >= 1 and N >= 2, got pbar={pbar}, N={N}")
    if abs(pbar - N) <= CRITICAL_RTOL * N:
        return SobolevExponent("critical")
    if pbar > N:
        return SobolevExponent("supercritical")
    return SobolevExponent("subcritical", N * pbar / (N - pbar))


def nikolskii_gamma(t) -> float:
    vec = t.t if isinstance(t, DifferentiabilityVector) else DifferentiabilityVector(tuple(t)).t
    return math.fsum(1.0 / v for v in vec)


def nikolskii_embedding_sup(gamma: float, p: float) -> float:
    """Supremum (not attained) of the Lebesgue exponents ``p * chi`` reachable by the embedding."""
    if p < 1:
        raise InvalidProfileError(f"p must be >= 1, got {p}")
    if gamma <= p:
        raise DegenerateEmbeddingError(f"embedding degenerate for gamma={gamma} <= p={p}")
    return p * gamma / (gamma - p)


def tau0(profile: AnisotropyProfile) -> float:
    return 1.0 - profile.ratio / (profile.N - 1)


def b_of_t(profile: AnisotropyProfile, t: float) -> float:
    """Increment function of the recursion, ``p / (ell/t + N - 2 - ell)``."""
    if not t > 0:
        raise DomainError(f"b(t) requires t > 0, got {t}")
    N, ell = profile.N, profile.ell
    denom = ell / t + (N - 2 - ell)
    if denom == 0.0:
        raise DomainError(f"b(t) has a pole at t = {ell / (ell - (N - 2))}")
    return profile.p / denom


def initial_vector(pvec) -> DifferentiabilityVector:
    vec = _as_pvec(pvec)
    if any(v < 2 for v in vec):
        raise InvalidProfileError(f"exponents must be >= 2, got {vec}")
    if any(b < a for a, b in zip(vec, vec[1:])):
        raise InvalidProfileError(f"exponents must be nondecreasing, got {vec}")
    top = vec[-1]
    return DifferentiabilityVector(tuple(v / top for v in vec[:-1]) + (1.0,))


def chi_from_gamma(gamma: float, alpha: float) -> float:
    if gamma <= 2:
        raise DegenerateEmbeddingError(f"chi undefined for gamma={gamma} <= 2")
    if not 0 < alpha < 1:
        raise ConfigurationError(f"alpha must lie in (0, 1), got {alpha}")
    return 1.0 + alpha * 2.0 / (gamma - 2.0)


def improve(pvec, chi: float) -> DifferentiabilityVector:
    """One improvement step: ``r_j = min(p_j/p_N + (p_j/2)(chi - 1), 1)``."""
    vec = _as_pvec(pvec)
    if chi < 1:
        raise ConfigurationError(f"chi must be >= 1, got {chi}")
    if any(b < a for a, b in zip(vec, vec[1:])):
        raise InvalidProfileError(f"exponents must be nondecreasing, got {vec}")
    top = vec[-1]
    r = [min(v / top + 0.5 * v * (chi - 1.0), 1.0) for v in vec[:-1]]
    return DifferentiabilityVector(tuple(r) + (1.0,))


# ---------------------------------------------------------------- schedules

AlphaSchedule = Union[Callable[[int], float], Sequence[float]]


def geometric_schedule(profile: AnisotropyProfile, ratio: float = 0.5) -> Callable[[int], float]:
    """``alpha_k = 1 - (1 - tau0) * ratio**(k+1)``: increasing, in (tau0, 1), limit 1."""
    if not 0 < ratio < 1:
        raise ConfigurationError(f"ratio must lie in (0, 1), got {ratio}")
    t0 = tau0(profile)
    return lambda k: 1.0 - (1.0 - t0) * ratio ** (k + 1)


def harmonic_schedule(profile: AnisotropyProfile) -> Callable[[int], float]:
    """``alpha_k = 1 - (1 - tau0) / (k + 2)``; converges to 1 slowly."""
    t0 = tau0(profile)
    return lambda k: 1.0 - (1.0 - t0) / (k + 2)


def _schedule_fn(schedule: Optional[AlphaSchedule], profile) -> Callable[[int], float]:
    if schedule is None:
        return geometric_schedule(profile)
    if callable(schedule):
        return schedule
    values = [float(a) for a in schedule]

    def from_list(k):
        if k >= len(values):
            raise ConfigurationError(f"alpha schedule exhausted after {len(values)} values")
        return values[k]

    return from_list


# ---------------------------------------------------------------- limits

def limit_polynomial(profile: AnisotropyProfile) -> LimitPolynomial:
    N, ell, p = profile.N, profile.ell, profile.p
    r = profile.ratio
    m = N - 2 - ell
    if m == 0:
        raise UseLinearCaseError("ell == N - 2: the limit equation is linear, use closed_form_limit")
    a2 = float(m)
    a1 = m * r + p - ell
    a0 = r * ell
    disc = a1 * a1 + 4.0 * a2 * a0
    roots = None
    if disc >= 0:
        sq = math.sqrt(disc)
        # cancellation-free pair of roots for A t^2 + B t + C with B = -a1, C = -a0
        qq = 0.5 * (a1 + math.copysign(sq, a1))
        roots = tuple(sorted((qq / a2, -a0 / qq)))
    return LimitPolynomial(a2, a1, a0, disc, roots)


def discriminant_condition(profile: AnisotropyProfile) -> float:
    """``(N-2-ell) p/q + (sqrt(ell) - sqrt(p))^2``; nonnegative iff real roots exist."""
    return (profile.N - 2 - profile.ell) * profile.ratio + (math.sqrt(profile.ell) - math.sqrt(profile.p)) ** 2


def closed_form_limit(profile: AnisotropyProfile) -> LimitValue:
    """Limit of ``t_k`` when the recursion runs with ``alpha_k -> 1``."""
    N, ell, p, q = profile.N, profile.ell, profile.p, profile.q
    if not p < q:
        raise InvalidProfileError("closed_form_limit requires p < q")
    r = p / q
    if ell == N - 2:
        if p >= N - 2:
            return LimitValue(True, case="linear")
        return LimitValue(False, r * (N - 2) / (N - 2 - p), case="linear")
    poly = limit_polynomial(profile)
    if ell <= N - 3:
        # P(p/q) < 0 and a2 > 0, so p/q lies between the roots and t_k climbs to L2
        return LimitValue(False, poly.roots[1], case="quadratic-L2")
    # ell == N - 1
    if p >= N - 1 or poly.roots is None:
        return LimitValue(True, case="quadratic-no-limit")
    L1 = poly.roots[0]
    if L1 <= r:
        return LimitValue(True, case="quadratic-no-limit")
    return LimitValue(False, L1, case="quadratic-L1")


def l1_formula(profile: AnisotropyProfile) -> float:
    """Smaller root for ell = N-1 written with the conjugate q' = q/(q-1)."""
    N, p, q = profile.N, profile.p, profile.q
    p_over_qc = p * (q - 1.0) / q
    lead = N - 1 - p_over_qc
    rad = lead * lead - 4.0 * (N - 1) * p / q
    if rad < 0:
        raise DomainError("no real roots")
    return (lead - math.sqrt(rad)) / 2.0


# ---------------------------------------------------------------- recursion

def iterate_scheme(profile: AnisotropyProfile, alpha_schedule: Optional[AlphaSchedule] = None,
                   max_iter: int = 10_000, record: bool = True) -> IterationTrace:
    """Run ``t_{k+1} = p/q + alpha_k b(t_k)`` until order one is reached or the iterates settle.

    The verdict is ``full`` with the first index ``k0`` such that ``t_{k0} >= 1``
    (or ``t_{k0} >= N - 1``), ``converges`` when increments stay below
    ``CONVERGENCE_TOL`` for ``CONVERGENCE_STREAK`` consecutive steps, and
    ``inconclusive`` after ``max_iter`` steps.  For a converging run ``L`` is
    the matching closed-form root when one exists, else the last iterate; the
    raw iterate is kept in ``trace.last_iterate``.
    """
    N, ell, p, q = profile.N, profile.ell, profile.p, profile.q
    if p == q:
        return IterationTrace([], Verdict("full", k0=0), [1.0])
    alpha_at = _schedule_fn(alpha_schedule, profile)
    t_lo = tau0(profile)
    r = p / q
    t = r
    orders = [t]
    steps: list[IterationStep] = []
    prev_alpha = -math.inf
    streak = 0
    for k in range(max_iter):
        alpha = float(alpha_at(k))
        # late in a geometric schedule alpha stalls at 1 - ulp or rounds to 1.0
        stalled = alpha == prev_alpha and 1.0 - alpha <= 4 * _EPS
        if not (t_lo < alpha <= 1.0) or alpha < prev_alpha or (alpha == prev_alpha and not stalled):
            raise ConfigurationError(
                f"alpha schedule must be increasing in (tau0, 1); alpha_{k}={alpha}, tau0={t_lo}")
        prev_alpha = alpha
        gamma = ell / t + (N - ell)
        if record:
            chi = 1.0 + alpha * 2.0 / (gamma - 2.0)
            vec = DifferentiabilityVector((t,) * ell + (1.0,) * (N - ell))
            steps.append(IterationStep(k, alpha, vec, gamma, chi))
        nxt = r + alpha * b_of_t(profile, t)
        orders.append(nxt)
        if nxt >= 1.0 or nxt >= N - 1:
            return IterationTrace(steps, Verdict("full", k0=k + 1), orders)
        streak = streak + 1 if nxt - t < CONVERGENCE_TOL else 0
        t = nxt
        if streak >= CONVERGENCE_STREAK:
            L = t
            try:
                lim = closed_form_limit(profile)
            except (UseLinearCaseError, DomainError):
                lim = None
            if lim is not None and not lim.divergent:
                L = lim.value
            return IterationTrace(steps, Verdict("converges", L=L), orders)
    return IterationTrace(steps, Verdict("inconclusive"), orders)


# ---------------------------------------------------------------- conditions

def _thresholds(profile: AnisotropyProfile) -> dict:
    N, p = profile.N, profile.p
    out = {}
    if N - 2 - p > 0:
        out["q_linear"] = (N - 2) * p / ((N - 2) - p)
    if profile.ell == N - 1:
        out["p_split"] = (N - 2) ** 2 / (N - 1)
        gap = math.sqrt(N - 1) - math.sqrt(p)
        if gap != 0:
            out["q_root"] = p / gap ** 2
    return out


def condition_report(profile: AnisotropyProfile) -> ConditionReport:
    """Evaluate the admissibility conditions, naming the satisfied branch.

    ``margin`` is the smallest slack among the strict inequalities of the
    branch that decides the outcome (``inf`` when only a non-strict one is
    involved); ``boundary`` flags a strict inequality met with equality.
    """
    N, ell, p, q = profile.N, profile.ell, profile.p, profile.q
    th = _thresholds(profile)

    def tie(a, b):
        return abs(a - b) <= 1e-12 * max(abs(a), abs(b), 1.0)

    if ell == N - 1:
        if p >= N - 1:
            return ConditionReport(True, "p>=N-1", False, math.inf, th)
        split = th["p_split"]
        if p < split:
            qt = th.get("q_linear", math.inf)
            margin = min(split - p, qt - q)
            return ConditionReport(q < qt, "small-p" if q < qt else None,
                                   tie(q, qt), margin, th)
        qt = th.get("q_root", math.inf)
        margin = min(N - 1 - p, qt - q)
        return ConditionReport(q < qt, "root-free" if q < qt else None,
                               tie(q, qt) or tie(p, split), margin, th)
    if p >= N - 2:
        return ConditionReport(True, "p>=N-2", False, math.inf, th)
    qt = th["q_linear"]
    return ConditionReport(q < qt, "q-bound" if q < qt else None, tie(q, qt),
                           min(N - 2 - p, qt - q), th)


def check_conditions(profile: AnisotropyProfile) -> bool:
    return condition_report(profile).ok


def source_embedding_ok(pvec, N: Optional[int] = None) -> bool:
    """True iff the largest conjugate exponent stays below the conjugate Sobolev exponent."""
    vec = _as_pvec(pvec)
    if N is None:
        N = len(vec)
    if any(v <= 1 for v in vec):
        raise InvalidProfileError(f"conjugate exponents need entries > 1, got {vec}")
    conj = [v / (v - 1.0) for v in vec]
    star = sobolev_exponent(harmonic_mean(conj), N)
    return star.admits(max(conj))


def exponent_report(profile: AnisotropyProfile, max_iter: int = 10_000,
                    alpha_schedule: Optional[AlphaSchedule] = None) -> dict:
    """Everything the ``exponents`` subcommand prints, as plain JSON-ready data."""
    trace = iterate_scheme(profile, alpha_schedule, max_iter=max_iter)
    if profile.ell == profile.N - 2:
        a1 = profile.p - profile.ell
        a0 = profile.ratio * profile.ell
        roots = [-a0 / a1] if a1 != 0 else []
        poly = {"a2": 0.0, "a1": a1, "a0": a0, "disc": None, "roots": roots, "linear": True}
    else:
        poly = limit_polynomial(profile).as_dict()
        poly["linear"] = False
    limit = closed_form_limit(profile).as_dict() if profile.p < profile.q else None
    cond = condition_report(profile)
    return {
        "profile": profile.as_dict(),
        "tau0": tau0(profile),
        "initial_t": list(initial_vector(profile)),
        "trace": [s.as_dict() for s in trace.steps],
        "polynomial": poly,
        "limit": limit,
        "verdict": trace.verdict.as_dict(),
        "verdict_text": str(trace.verdict),
        "conditions_ok": cond.ok,
        "conditions": cond.as_dict(),
    }
