"""Convex-analysis engine: rate functions, Legendre-Fenchel conjugates,
infimal projections, and the sup-composition used by the random-sum LDP.

All scalar optimizations share one scheme: a coarse grid scan followed by
golden-section refinement, which needs no derivatives and tolerates
non-smooth catalog entries (the linear rate at 0, point indicators).
``+inf`` is represented by ``math.inf`` and handled by explicit guards;
objective values of ``-inf`` mark infeasible points during maximization.

Divergence at a search boundary (the scan still improving at the edge of
the interval) raises :class:`OptimizationDiverged` instead of silently
clamping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy import optimize as sp_optimize

from .models import (
    Deterministic,
    DomainError,
    IndexModel,
    SummandModel,
)

INF = math.inf

GOLDEN_TOL = 1e-9
SCAN_POINTS = 257
PROJECTION_GRID = (1e-4, 1e4, 4097)
LAMBDA_INTERVAL = (-50.0, 50.0)
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


class OptimizationDiverged(RuntimeError):
    """Scan still improving at a search boundary; the optimum lies outside."""

    def __init__(self, side: str, message: str):
        self.side = side
        super().__init__(message)


# ---------------------------------------------------------------------------
# Rate-function catalog
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RateFunction:
    """A convex rate function on an effective domain.

    Either a closed-form catalog entry (quadratic x^2/2; linear x on
    x >= 0; the Poisson entropy 1 - x + x log x; the Cramér conjugate of
    a model's CGF; a point indicator) or a tabulated convex function on a
    strictly increasing grid.  Evaluation outside the effective domain
    returns ``math.inf``.
    """

    kind: str
    model: object = None
    point: float = 0.0
    grid: tuple = ()
    values: tuple = ()

    @classmethod
    def quadratic(cls) -> "RateFunction":
        return cls(kind="quadratic")

    @classmethod
    def linear(cls) -> "RateFunction":
        return cls(kind="linear")

    @classmethod
    def poisson_entropy(cls) -> "RateFunction":
        return cls(kind="poisson_entropy")

    @classmethod
    def cramer_conjugate(cls, model) -> "RateFunction":
        if isinstance(model, Deterministic):
            # conjugate of u -> u is the indicator of {1}
            return cls(kind="indicator", point=1.0)
        return cls(kind="cramer", model=model)

    @classmethod
    def indicator(cls, point: float) -> "RateFunction":
        return cls(kind="indicator", point=float(point))

    @classmethod
    def tabulated(cls, grid, values, convex: bool = True) -> "RateFunction":
        grid = np.asarray(grid, dtype=float)
        values = np.asarray(values, dtype=float)
        if grid.ndim != 1 or grid.shape != values.shape or len(grid) < 2:
            raise ValueError("tabulated rate needs matching 1-d grid and values")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("tabulated grid must be strictly increasing")
        if convex:
            slopes = np.diff(values) / np.diff(grid)
            if np.any(np.diff(slopes) < -1e-9):
                raise ValueError("tabulated values fail the discrete convexity check")
        return cls(kind="tabulated", grid=tuple(grid), values=tuple(values))

    @property
    def effective_domain(self) -> tuple[float, float]:
        if self.kind == "quadratic":
            return (-INF, INF)
        if self.kind in ("linear", "poisson_entropy"):
            return (0.0, INF)
        if self.kind == "indicator":
            return (self.point, self.point)
        if self.kind == "tabulated":
            return (self.grid[0], self.grid[-1])
        if self.kind == "cramer":
            return _model_mean_range(self.model)
        raise ValueError(f"unknown rate function kind {self.kind!r}")

    @property
    def minimizer(self) -> float:
        if self.kind in ("quadratic", "linear"):
            return 0.0
        if self.kind == "poisson_entropy":
            return 1.0
        if self.kind == "indicator":
            return self.point
        if self.kind == "tabulated":
            return self.grid[int(np.argmin(self.values))]
        if self.kind == "cramer":
            if isinstance(self.model, IndexModel):
                return 1.0
            return self.model.mean()
        raise ValueError(f"unknown rate function kind {self.kind!r}")

    def __call__(self, x: float) -> float:
        if self.kind == "quadratic":
            return 0.5 * x * x
        if self.kind == "linear":
            return x if x >= 0.0 else INF
        if self.kind == "poisson_entropy":
            if x < 0.0:
                return INF
            if x == 0.0:
                return 1.0
            return 1.0 - x + x * math.log(x)
        if self.kind == "indicator":
            return 0.0 if x == self.point else INF
        if self.kind == "cramer":
            return cramer_rate(self.model, x)
        if self.kind == "tabulated":
            if x < self.grid[0] or x > self.grid[-1]:
                return INF
            return float(np.interp(x, self.grid, self.values))
        raise ValueError(f"unknown rate function kind {self.kind!r}")


# ---------------------------------------------------------------------------
# Scalar optimization scheme: coarse scan + golden section
# ---------------------------------------------------------------------------


class _ScanResult(NamedTuple):
    x: float
    value: float


def _golden_min(fn: Callable[[float], float], a: float, b: float,
                incumbent: _ScanResult, tol: float = GOLDEN_TOL) -> _ScanResult:
    """Golden-section minimization on [a, b], keeping the best point seen.

    The incumbent (typically the best coarse-grid point) guards against
    plateaus of ``inf`` around isolated finite points, where the section
    comparisons alone are uninformative.
    """
    best_x, best_v = incumbent
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = fn(c), fn(d)
    while (b - a) > tol:
        if fc < best_v:
            best_x, best_v = c, fc
        if fd < best_v:
            best_x, best_v = d, fd
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = fn(d)
    mid = 0.5 * (a + b)
    fmid = fn(mid)
    if fmid < best_v:
        best_x, best_v = mid, fmid
    return _ScanResult(best_x, best_v)


def _scan_then_golden_min(fn, grid, what: str, tol: float = GOLDEN_TOL,
                          open_left: bool = True, open_right: bool = True) -> _ScanResult:
    """Coarse scan, boundary-divergence detection, golden refinement.

    A boundary is *open* when the true feasible set extends beyond it;
    a scan minimum still decreasing into an open boundary raises
    :class:`OptimizationDiverged`.  At a closed boundary (a genuine
    domain edge, e.g. x >= 0) the edge is an attainable candidate and
    refinement proceeds within the first cell.
    """
    vals = np.array([fn(x) for x in grid])
    if not np.any(np.isfinite(vals)):
        raise ValueError(f"{what}: objective is nowhere finite on the search grid")
    i = int(np.argmin(vals))
    last = len(grid) - 1
    if open_left and i == 0 and vals[0] < vals[1]:
        raise OptimizationDiverged(
            "left", f"{what}: scan still decreasing at the left boundary {grid[0]!r}")
    if open_right and i == last and vals[last] < vals[last - 1]:
        raise OptimizationDiverged(
            "right", f"{what}: scan still decreasing at the right boundary {grid[last]!r}")
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, last)]
    return _golden_min(fn, lo, hi, _ScanResult(grid[i], vals[i]), tol)


# ---------------------------------------------------------------------------
# Conjugates
# ---------------------------------------------------------------------------


def legendre_fenchel(f, x: float, search_interval: tuple[float, float] = LAMBDA_INTERVAL,
                     n_scan: int = SCAN_POINTS, tol: float = GOLDEN_TOL,
                     closed_left: bool = False) -> float:
    """sup over lam in ``search_interval`` of ``lam * x - f(lam)``.

    ``f`` is any callable returning ``inf`` outside its domain (every
    :class:`RateFunction` qualifies).  Raises
    :class:`OptimizationDiverged` when the coarse scan is still
    increasing at an open interval end, i.e. the supremum is not
    bracketed.  ``closed_left`` marks the left end as a genuine domain
    edge (used by the x >= 0 sup-composition) rather than a truncation.
    """
    def neg_objective(lam: float) -> float:
        fv = f(lam)
        if fv == INF:
            return INF
        return fv - lam * x

    grid = np.linspace(search_interval[0], search_interval[1], n_scan)
    res = _scan_then_golden_min(neg_objective, grid, "legendre_fenchel", tol,
                                open_left=not closed_left)
    return -res.value


def cramer_rate(model, x: float) -> float:
    """Cramér conjugate sup_l [l x - CGF(l)] solved via the stationarity
    condition CGF'(l) = x.

    For index models the scaled CGF ``u -> cgf(u)/mean`` is conjugated,
    giving the rate of nu/mean at speed mean (for Poisson this is
    ``1 - x + x log x``).  Returns ``inf`` when x falls outside the
    closure of the range of CGF'; at a finite boundary of that range the
    limiting value is returned.
    """
    if isinstance(model, IndexModel):
        if model.variance() == 0.0:
            raise DomainError("cramer_rate: degenerate (deterministic) index model")
        cgf = model.scaled_cgf
        cgf_prime = model.scaled_cgf_prime
        dom_hi = model.cgf_domain_sup
        dom_lo = -INF
        m_lo, m_hi = model.scaled_mean_range()
        mean_at_zero = 1.0
    elif isinstance(model, SummandModel):
        if model.variance() == 0.0:
            raise DomainError("cramer_rate: degenerate summand model")
        cgf = model.cgf
        cgf_prime = model.cgf_prime
        dom_lo, dom_hi = model.cgf_domain
        m_lo, m_hi = model.mean_range()
        mean_at_zero = model.mean()
    else:
        raise TypeError("cramer_rate expects a SummandModel or IndexModel")

    if x < m_lo or x > m_hi:
        return INF
    if x == mean_at_zero:
        return 0.0

    lam_cap = 700.0  # exp-overflow guard for unbounded domains

    def stationarity(lam: float) -> float:
        return cgf_prime(lam) - x

    def boundary_limit(sign: float) -> float:
        # value of lam x - cgf(lam) as lam -> sign * inf; finite exactly
        # when the law has an atom at the endpoint (e.g. Rademacher at 1)
        v_prev = sign * 64.0 * x - cgf(sign * 64.0)
        for cap in (256.0, 1024.0):
            v = sign * cap * x - cgf(sign * cap)
            if v > v_prev + 1e-9 * (1.0 + abs(v)):
                return INF
            v_prev = v
        return v_prev

    if x > mean_at_zero:
        if x == m_hi:  # finite boundary of the mean range
            return boundary_limit(1.0)
        a = 0.0
        if math.isfinite(dom_hi):
            gap = dom_hi  # domain is (dom_lo, dom_hi) with dom_hi > 0
            b = dom_hi - 0.5 * gap
            while stationarity(b) < 0.0:
                gap *= 0.5
                b = dom_hi - 0.5 * gap
                if gap < 1e-300:
                    raise DomainError(f"cramer_rate: target {x} beyond numeric range")
        else:
            b = 1.0
            while stationarity(b) < 0.0 and b < lam_cap:
                b *= 2.0
            if stationarity(b) < 0.0:
                return lam_cap * x - cgf(lam_cap)
    else:
        if x == m_lo:
            return boundary_limit(-1.0)
        b = 0.0
        if math.isfinite(dom_lo):
            gap = -dom_lo
            a = dom_lo + 0.5 * gap
            while stationarity(a) > 0.0:
                gap *= 0.5
                a = dom_lo + 0.5 * gap
                if gap < 1e-300:
                    raise DomainError(f"cramer_rate: target {x} beyond numeric range")
        else:
            a = -1.0
            while stationarity(a) > 0.0 and a > -lam_cap:
                a *= 2.0
            if stationarity(a) > 0.0:
                return -lam_cap * x - cgf(-lam_cap)

    lam_star = sp_optimize.brentq(stationarity, a, b, xtol=1e-14, rtol=8.9e-16)
    return lam_star * x - cgf(lam_star)


# ---------------------------------------------------------------------------
# Infimal projections
# ---------------------------------------------------------------------------


class InfProjection(NamedTuple):
    value: float
    argmin: float


def _log_grid(lo: float, hi: float, n: int) -> np.ndarray:
    return np.power(10.0, np.linspace(math.log10(lo), math.log10(hi), n))


def inf_projection_quadratic(rate: RateFunction, y: float,
                             s_grid: tuple[float, float, int] = PROJECTION_GRID,
                             tol: float = GOLDEN_TOL) -> InfProjection:
    """inf over s > 0 of ``y^2 / (2 s) + rate(s)`` with its argmin.

    Coarse scan over a log-spaced grid, golden-section refinement.  Ties
    resolve to the smallest argmin (the grid scan takes the first
    minimum).  Raises :class:`OptimizationDiverged` when the scan is
    still decreasing at a grid boundary.
    """
    yy = 0.5 * y * y

    def objective(s: float) -> float:
        rv = rate(s)
        if rv == INF:
            return INF
        return yy / s + rv

    grid = _log_grid(s_grid[0], s_grid[1], s_grid[2])
    res = _scan_then_golden_min(objective, grid, "inf_projection_quadratic", tol)
    return InfProjection(value=res.value, argmin=res.x)


def inf_projection_scaled(outer: RateFunction, rate: RateFunction, y: float,
                          s_grid: tuple[float, float, int] = PROJECTION_GRID,
                          tol: float = GOLDEN_TOL) -> float:
    """inf over s > 0 of ``s * outer(y / s) + rate(s)``.

    The general rate composition for random sums; with a quadratic outer
    function it reduces to :func:`inf_projection_quadratic`.
    """
    def objective(s: float) -> float:
        rv = rate(s)
        if rv == INF:
            return INF
        kv = outer(y / s)
        if kv == INF:
            return INF
        return s * kv + rv

    grid = _log_grid(s_grid[0], s_grid[1], s_grid[2])
    res = _scan_then_golden_min(objective, grid, "inf_projection_scaled", tol)
    return res.value


# ---------------------------------------------------------------------------
# Sup-composition for the random-sum LDP
# ---------------------------------------------------------------------------

GAMMA_X_INTERVAL = (0.0, 1e4)


def gamma_sup(summand: SummandModel, rate: RateFunction, lam: float,
              x_interval: tuple[float, float] = GAMMA_X_INTERVAL) -> float:
    """sup over x >= 0 of ``cgf(lam) * x - rate(x)``.

    Definitionally the conjugate of ``rate`` evaluated at the summand CGF
    value.  Diverges (boundary signal) when ``rate`` grows at most
    linearly with slope below ``cgf(lam)``.
    """
    c = summand.cgf(lam)
    return legendre_fenchel(rate, c, search_interval=x_interval, closed_left=True)


def ldp_rate_via_gamma(summand: SummandModel, rate: RateFunction, y: float,
                       lam_interval: tuple[float, float] = LAMBDA_INTERVAL,
                       x_interval: tuple[float, float] = GAMMA_X_INTERVAL,
                       n_scan: int = SCAN_POINTS, tol: float = GOLDEN_TOL) -> float:
    """Outer conjugate sup_lam [lam y - Gamma(lam)] of the sup-composition.

    Inner divergence at some lam (rate dominated by the linear tilt)
    excludes that lam from the outer search instead of aborting it.
    """
    def neg_objective(lam: float) -> float:
        try:
            g = gamma_sup(summand, rate, lam, x_interval)
        except (OptimizationDiverged, OverflowError):
            return INF  # infeasible lam
        if g == INF:
            return INF
        return g - lam * y

    grid = np.linspace(lam_interval[0], lam_interval[1], n_scan)
    res = _scan_then_golden_min(neg_objective, grid, "ldp_rate_via_gamma", tol)
    return -res.value


# ---------------------------------------------------------------------------
# Varadhan moment-condition probe
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProbeEntry:
    """Per-scale diagnostic for the Varadhan moment condition."""

    mu: float
    value: float | None
    error: str | None = None

    @property
    def in_domain(self) -> bool:
        return self.error is None


def varadhan_condition_probe(summand: SummandModel, index_family: IndexModel,
                             t: float, gamma: float,
                             mu_sequence) -> list[ProbeEntry]:
    """Evaluate ``cgf_index(gamma * cgf_X(t)) / mu`` along a mean sequence.

    Boundedness of the returned values along ``mu`` is the caller's
    diagnostic for the exponential moment condition; an argument beyond
    the index CGF domain is reported per entry (the expected signal for
    geometric indices).
    """
    if gamma <= 1.0:
        raise ValueError("the moment probe requires gamma > 1")
    u = gamma * summand.cgf(t)
    entries = []
    for mu in mu_sequence:
        member = index_family.with_mean(mu)
        if u >= member.cgf_domain_sup:
            entries.append(ProbeEntry(
                mu=mu, value=None,
                error=f"argument {u!r} outside CGF domain (-inf, {member.cgf_domain_sup!r})"))
        else:
            entries.append(ProbeEntry(mu=mu, value=member.scaled_cgf(u)))
    return entries


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _model_mean_range(model) -> tuple[float, float]:
    if isinstance(model, IndexModel):
        return model.scaled_mean_range()
    return model.mean_range()
