"""Probability models: summand laws, summation-index laws, random-sum
specifications, and the two-point state-dependent martingale.

All models are immutable after construction and safe to share across
workers; sampling always goes through an explicitly passed
``numpy.random.Generator`` so that parallel callers can own private
streams.

Summand laws are standardized (mean 0, variance 1) unless configured
otherwise and expose their cumulant generating function (CGF) in three
forms: fast double precision (``cgf``), its derivative (``cgf_prime``),
and an ``mpmath`` version (``cgf_mp``) used by the high-order cumulant
differentiation in :mod:`raresum.cumulants`.

Sums over a summand count ``n`` are drawn from the exact conditional law
of the n-fold sum (Gaussian: ``sqrt(n)``-scaled normal, Rademacher:
shifted binomial, shifted exponential: shifted gamma), which is
distributionally identical to adding ``n`` independent draws but runs in
O(1) per sum.  The same closed families exist under exponential tilting,
which keeps the importance-sampling change of measure exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath as mp
import numpy as np
from scipy import stats


class DomainError(ValueError):
    """Argument outside a model's CGF domain (or a degenerate model)."""


def _as_int_array(counts):
    arr = np.asarray(counts, dtype=np.int64)
    if np.any(arr < 0):
        raise ValueError("summand counts must be nonnegative")
    return arr


# ---------------------------------------------------------------------------
# Summand models
# ---------------------------------------------------------------------------


class SummandModel:
    """Base class for summand laws satisfying Cramér's condition.

    The CGF ``cgf(t) = log E exp(t X)`` is finite on the open interval
    ``cgf_domain`` which always contains 0, and ``cgf(0) = 0``,
    ``cgf'(0) = mean``, ``cgf''(0) = variance``.
    """

    name: str = "summand"

    def mean(self) -> float:
        raise NotImplementedError

    def variance(self) -> float:
        raise NotImplementedError

    @property
    def cgf_domain(self) -> tuple[float, float]:
        """Open interval on which the CGF is finite."""
        raise NotImplementedError

    def mean_range(self) -> tuple[float, float]:
        """Closure of the range of ``cgf_prime`` over the CGF domain."""
        raise NotImplementedError

    def _check_domain(self, t: float) -> None:
        lo, hi = self.cgf_domain
        if not (lo < t < hi):
            raise DomainError(
                f"{self.name}: CGF argument {t!r} outside domain ({lo}, {hi})"
            )

    def cgf(self, t: float) -> float:
        raise NotImplementedError

    def cgf_prime(self, t: float) -> float:
        raise NotImplementedError

    def cgf_mp(self, t):
        raise NotImplementedError

    def cumulant(self, j: int) -> float:
        """Closed-form cumulant of order ``j >= 1``."""
        raise NotImplementedError

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        """Individual draws (used by moment tests, not by estimators)."""
        raise NotImplementedError

    def sample_sum(self, counts, rng: np.random.Generator) -> np.ndarray:
        """Exact law of the sum of ``counts[i]`` independent draws."""
        raise NotImplementedError

    def sample_sum_tilted(self, counts, theta: float, rng: np.random.Generator) -> np.ndarray:
        """Exact law of the sum of ``counts[i]`` draws from the theta-tilted law."""
        raise NotImplementedError


@dataclass(frozen=True)
class Gaussian(SummandModel):
    """Normal summand; standardized N(0, 1) by default."""

    mean_value: float = 0.0
    variance_value: float = 1.0
    name: str = field(default="gaussian", init=False)

    def __post_init__(self):
        if self.variance_value <= 0:
            raise ValueError("gaussian variance must be positive")

    def mean(self) -> float:
        return self.mean_value

    def variance(self) -> float:
        return self.variance_value

    @property
    def cgf_domain(self) -> tuple[float, float]:
        return (-math.inf, math.inf)

    def mean_range(self) -> tuple[float, float]:
        return (-math.inf, math.inf)

    def cgf(self, t: float) -> float:
        return self.mean_value * t + 0.5 * self.variance_value * t * t

    def cgf_prime(self, t: float) -> float:
        return self.mean_value + self.variance_value * t

    def cgf_mp(self, t):
        t = mp.mpf(t)
        return self.mean_value * t + mp.mpf(self.variance_value) * t * t / 2

    def cumulant(self, j: int) -> float:
        if j == 1:
            return self.mean_value
        if j == 2:
            return self.variance_value
        return 0.0

    def sample(self, size, rng):
        return rng.normal(self.mean_value, math.sqrt(self.variance_value), size)

    def sample_sum(self, counts, rng):
        n = _as_int_array(counts).astype(np.float64)
        return n * self.mean_value + np.sqrt(n * self.variance_value) * rng.standard_normal(n.shape)

    def sample_sum_tilted(self, counts, theta, rng):
        n = _as_int_array(counts).astype(np.float64)
        tilted_mean = self.mean_value + self.variance_value * theta
        return n * tilted_mean + np.sqrt(n * self.variance_value) * rng.standard_normal(n.shape)


@dataclass(frozen=True)
class Rademacher(SummandModel):
    """Symmetric two-point law on {-1, +1}; CGF is log cosh t."""

    name: str = field(default="rademacher", init=False)

    # log cosh t = t^2/2 - t^4/12 + t^6/45 - 17 t^8/2520 + ...
    _CUMULANTS = {2: 1.0, 4: -2.0, 6: 16.0, 8: -272.0}

    def mean(self) -> float:
        return 0.0

    def variance(self) -> float:
        return 1.0

    @property
    def cgf_domain(self) -> tuple[float, float]:
        return (-math.inf, math.inf)

    def mean_range(self) -> tuple[float, float]:
        return (-1.0, 1.0)

    def cgf(self, t: float) -> float:
        a = abs(t)
        # overflow-safe log cosh
        return a + math.log1p(math.exp(-2.0 * a)) - math.log(2.0)

    def cgf_prime(self, t: float) -> float:
        return math.tanh(t)

    def cgf_mp(self, t):
        return mp.log(mp.cosh(t))

    def cumulant(self, j: int) -> float:
        if j % 2 == 1:
            return 0.0
        if j in self._CUMULANTS:
            return self._CUMULANTS[j]
        raise NotImplementedError(f"rademacher cumulant of order {j} not tabulated")

    def sample(self, size, rng):
        return rng.integers(0, 2, size).astype(np.float64) * 2.0 - 1.0

    def sample_sum(self, counts, rng):
        n = _as_int_array(counts)
        return 2.0 * rng.binomial(n, 0.5) - n.astype(np.float64)

    def sample_sum_tilted(self, counts, theta, rng):
        n = _as_int_array(counts)
        p_up = 1.0 / (1.0 + math.exp(-2.0 * theta))
        return 2.0 * rng.binomial(n, p_up) - n.astype(np.float64)


@dataclass(frozen=True)
class ShiftedExponential(SummandModel):
    """Exp(1) - 1: mean 0, variance 1, one-sided CGF domain t < 1.

    Included to exercise a one-sided Cramér condition; the CGF is
    ``-t - log(1 - t)`` and blows up at t = 1.
    """

    name: str = field(default="shifted_exponential", init=False)

    def mean(self) -> float:
        return 0.0

    def variance(self) -> float:
        return 1.0

    @property
    def cgf_domain(self) -> tuple[float, float]:
        return (-math.inf, 1.0)

    def mean_range(self) -> tuple[float, float]:
        return (-1.0, math.inf)

    def cgf(self, t: float) -> float:
        self._check_domain(t)
        return -t - math.log1p(-t)

    def cgf_prime(self, t: float) -> float:
        self._check_domain(t)
        return t / (1.0 - t)

    def cgf_mp(self, t):
        t = mp.mpf(t)
        return -t - mp.log(1 - t)

    def cumulant(self, j: int) -> float:
        if j == 1:
            return 0.0
        return float(math.factorial(j - 1))

    def sample(self, size, rng):
        return rng.standard_exponential(size) - 1.0

    def sample_sum(self, counts, rng):
        n = _as_int_array(counts)
        return rng.standard_gamma(n) - n.astype(np.float64)

    def sample_sum_tilted(self, counts, theta, rng):
        if theta >= 1.0:
            raise DomainError(f"shifted exponential tilt {theta} outside domain t < 1")
        n = _as_int_array(counts)
        return rng.standard_gamma(n) / (1.0 - theta) - n.astype(np.float64)


# ---------------------------------------------------------------------------
# Summation-index models
# ---------------------------------------------------------------------------


class IndexModel:
    """Base class for integer-valued summation indices nu.

    Exposes the CGF and the *scaled* CGF ``u -> cgf(u) / mean`` whose
    convex conjugate is the Cramér rate of ``nu / mean`` at speed
    ``mean``.  ``tilted(u)`` returns the member of the same family whose
    pmf is proportional to ``pmf(k) exp(u k)``, used by the
    importance-sampling change of measure.
    """

    name: str = "index"

    def mean(self) -> float:
        raise NotImplementedError

    def variance(self) -> float:
        raise NotImplementedError

    @property
    def cgf_domain_sup(self) -> float:
        """Supremum of the CGF domain (the domain is (-inf, sup))."""
        raise NotImplementedError

    def _check_domain(self, u: float) -> None:
        if not (u < self.cgf_domain_sup):
            raise DomainError(
                f"{self.name}: CGF argument {u!r} outside domain (-inf, {self.cgf_domain_sup})"
            )

    def cgf(self, u: float) -> float:
        raise NotImplementedError

    def cgf_prime(self, u: float) -> float:
        raise NotImplementedError

    def cgf_mp(self, u):
        raise NotImplementedError

    def scaled_cgf(self, u: float) -> float:
        return self.cgf(u) / self.mean()

    def scaled_cgf_prime(self, u: float) -> float:
        return self.cgf_prime(u) / self.mean()

    def scaled_mean_range(self) -> tuple[float, float]:
        """Closure of the range of ``scaled_cgf_prime``."""
        raise NotImplementedError

    def cumulant(self, j: int) -> float:
        raise NotImplementedError

    def pmf(self, k: int) -> float:
        raise NotImplementedError

    def quantile(self, q: float) -> int:
        raise NotImplementedError

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def tilted(self, u: float) -> "IndexModel":
        raise NotImplementedError

    def with_mean(self, mu: float) -> "IndexModel":
        """The member of this family with mean ``mu``."""
        raise NotImplementedError


@dataclass(frozen=True)
class Poisson(IndexModel):
    """Poisson(lam) index; all cumulants equal lam, CGF lam (e^u - 1)."""

    lam: float
    name: str = field(default="poisson", init=False)

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("poisson rate must be positive")

    def mean(self) -> float:
        return self.lam

    def variance(self) -> float:
        return self.lam

    @property
    def cgf_domain_sup(self) -> float:
        return math.inf

    def cgf(self, u: float) -> float:
        return self.lam * math.expm1(u)

    def cgf_prime(self, u: float) -> float:
        return self.lam * math.exp(u)

    def cgf_mp(self, u):
        return mp.mpf(self.lam) * (mp.exp(u) - 1)

    def scaled_cgf(self, u: float) -> float:
        # lam cancels exactly; keeps the Varadhan probe mu-independent
        return math.expm1(u)

    def scaled_cgf_prime(self, u: float) -> float:
        return math.exp(u)

    def scaled_mean_range(self) -> tuple[float, float]:
        return (0.0, math.inf)

    def cumulant(self, j: int) -> float:
        return self.lam

    def pmf(self, k: int) -> float:
        if k < 0:
            return 0.0
        return math.exp(k * math.log(self.lam) - self.lam - math.lgamma(k + 1))

    def quantile(self, q: float) -> int:
        return int(stats.poisson.ppf(q, self.lam))

    def sample(self, size, rng):
        return rng.poisson(self.lam, size).astype(np.int64)

    def tilted(self, u: float) -> "Poisson":
        return Poisson(self.lam * math.exp(u))

    def with_mean(self, mu: float) -> "Poisson":
        return Poisson(mu)


@dataclass(frozen=True)
class Geometric(IndexModel):
    """Geometric index on {1, 2, ...} with pmf p (1-p)^(k-1); mean 1/p.

    Sampling uses the inverse CDF ``floor(log U / log(1-p)) + 1`` for
    reproducibility across platforms.  The CGF domain is bounded:
    ``u < -log(1-p)``, the feasibility boundary for exponential tilting.
    """

    p: float
    name: str = field(default="geometric", init=False)

    def __post_init__(self):
        if not (0.0 < self.p < 1.0):
            raise ValueError("geometric parameter must lie in (0, 1)")

    def mean(self) -> float:
        return 1.0 / self.p

    def variance(self) -> float:
        return (1.0 - self.p) / (self.p * self.p)

    @property
    def cgf_domain_sup(self) -> float:
        return -math.log1p(-self.p)

    def cgf(self, u: float) -> float:
        self._check_domain(u)
        # log[p e^u / (1 - (1-p) e^u)];  1 - (1-p) e^u = -expm1(u + log(1-p))
        return u + math.log(self.p) - math.log(-math.expm1(u + math.log1p(-self.p)))

    def cgf_prime(self, u: float) -> float:
        self._check_domain(u)
        return 1.0 / (-math.expm1(u + math.log1p(-self.p)))

    def cgf_mp(self, u):
        p = mp.mpf(self.p)
        return u + mp.log(p) - mp.log(1 - (1 - p) * mp.exp(u))

    def scaled_mean_range(self) -> tuple[float, float]:
        return (self.p, math.inf)

    def cumulant(self, j: int) -> float:
        # Gamma_1 = 1 + w, Gamma_j = W_{j-1}(w) for j >= 2 where w = (1-p)/p,
        # W_1 = w(1+w), W_{k+1} = w(1+w) W_k'(w)  (from d/du of qe^u/(1-qe^u))
        w = (1.0 - self.p) / self.p
        if j == 1:
            return 1.0 + w
        coeffs = [0.0, 1.0]  # W_0 = w
        for _ in range(j - 1):
            deriv = [coeffs[k] * k for k in range(1, len(coeffs))]
            # multiply by (w + w^2)
            nxt = [0.0] * (len(deriv) + 2)
            for k, c in enumerate(deriv):
                nxt[k + 1] += c
                nxt[k + 2] += c
            coeffs = nxt
        return float(sum(c * w**k for k, c in enumerate(coeffs)))

    def pmf(self, k: int) -> float:
        if k < 1:
            return 0.0
        return math.exp(math.log(self.p) + (k - 1) * math.log1p(-self.p))

    def quantile(self, q: float) -> int:
        # P(nu <= k) = 1 - (1-p)^k
        return max(1, int(math.ceil(math.log1p(-q) / math.log1p(-self.p))))

    def sample(self, size, rng):
        # inverse CDF; 1 - U is uniform on (0, 1], avoiding log(0)
        u = 1.0 - rng.random(size)
        return (np.floor(np.log(u) / math.log1p(-self.p)) + 1.0).astype(np.int64)

    def tilted(self, u: float) -> "Geometric":
        self._check_domain(u)
        p_new = -math.expm1(u + math.log1p(-self.p))
        if p_new <= 0.0:
            raise DomainError(f"geometric tilt {u} reaches the domain boundary")
        return Geometric(p_new)

    def with_mean(self, mu: float) -> "Geometric":
        return Geometric(1.0 / mu)


@dataclass(frozen=True)
class Deterministic(IndexModel):
    """Degenerate index fixed at a positive integer n."""

    n: int
    name: str = field(default="deterministic", init=False)

    def __post_init__(self):
        if self.n < 1 or int(self.n) != self.n:
            raise ValueError("deterministic index must be a positive integer")

    def mean(self) -> float:
        return float(self.n)

    def variance(self) -> float:
        return 0.0

    @property
    def cgf_domain_sup(self) -> float:
        return math.inf

    def cgf(self, u: float) -> float:
        return self.n * u

    def cgf_prime(self, u: float) -> float:
        return float(self.n)

    def cgf_mp(self, u):
        return self.n * mp.mpf(u)

    def scaled_cgf(self, u: float) -> float:
        return u

    def scaled_cgf_prime(self, u: float) -> float:
        return 1.0

    def scaled_mean_range(self) -> tuple[float, float]:
        return (1.0, 1.0)

    def cumulant(self, j: int) -> float:
        return float(self.n) if j == 1 else 0.0

    def pmf(self, k: int) -> float:
        return 1.0 if k == self.n else 0.0

    def quantile(self, q: float) -> int:
        return self.n

    def sample(self, size, rng):
        return np.full(size, self.n, dtype=np.int64)

    def tilted(self, u: float) -> "Deterministic":
        return self

    def with_mean(self, mu: float) -> "Deterministic":
        return Deterministic(int(round(mu)))


# ---------------------------------------------------------------------------
# Random-sum specification
# ---------------------------------------------------------------------------

SCALING_MODES = ("standardized", "blackwell_girshick")


@dataclass(frozen=True)
class RandomSumSpec:
    """The scaled random sum Z = (S_nu - center) / denominator.

    ``standardized`` scaling divides the raw sum by mean(nu)^(1/2+alpha)
    and requires a centered unit-variance summand.  ``blackwell_girshick``
    centers by mean(X) mean(nu) and divides by
    ``(var(X) mean(nu) + mean(X)^2 var(nu))^(1/2+alpha)``, the variance
    identity for random sums.
    """

    summand: SummandModel
    index: IndexModel
    alpha: float = 0.0
    scaling: str = "standardized"

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 0.5):
            raise ValueError("alpha must lie in [0, 1/2]")
        if self.scaling not in SCALING_MODES:
            raise ValueError(f"scaling must be one of {SCALING_MODES}")
        if self.scaling == "standardized":
            if abs(self.summand.mean()) > 1e-12 or abs(self.summand.variance() - 1.0) > 1e-12:
                raise ValueError(
                    "standardized scaling requires a centered unit-variance summand"
                )
        else:
            if self._bg_variance() <= 0.0:
                raise ValueError("blackwell_girshick denominator must be positive")

    def _bg_variance(self) -> float:
        a = self.summand.mean()
        c2 = self.summand.variance()
        return c2 * self.index.mean() + a * a * self.index.variance()

    def center(self) -> float:
        if self.scaling == "blackwell_girshick":
            return self.summand.mean() * self.index.mean()
        return 0.0

    def denominator(self) -> float:
        base = self._bg_variance() if self.scaling == "blackwell_girshick" else self.index.mean()
        return base ** (0.5 + self.alpha)

    def scale(self, s):
        return (s - self.center()) / self.denominator()

    def sum_threshold(self, t: float) -> float:
        """Raw-sum threshold equivalent to the event {Z >= t}."""
        return self.center() + t * self.denominator()


def sample_random_sum_block(spec: RandomSumSpec, rng: np.random.Generator, size: int):
    """Vectorized draw of (nu, s, z) triples.

    ``s`` is drawn from the exact conditional law of the nu-fold summand
    sum given nu, so the joint law of (nu, s) matches summing individual
    draws while the cost stays O(1) per sample.
    """
    nu = spec.index.sample(size, rng)
    s = spec.summand.sample_sum(nu, rng)
    return nu, s, spec.scale(s)


def sample_random_sum(spec: RandomSumSpec, rng: np.random.Generator):
    """Single draw of (nu, s, z); deterministic given the stream state."""
    nu, s, z = sample_random_sum_block(spec, rng, 1)
    return int(nu[0]), float(s[0]), float(z[0])


# ---------------------------------------------------------------------------
# Bounded-difference martingale
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MartingaleModel:
    """Two-point state-dependent martingale differences.

    With b = 1 + delta * sign(S) (sign(0) := +1) the next difference is
    +b with probability 1/(1+b^2) and -1/b otherwise.  The conditional
    mean is 0 and the conditional variance is 1 exactly, for every b > 0:

        b/(1+b^2) - (1/b) * b^2/(1+b^2) = 0
        b^2/(1+b^2) + (1/b^2) * b^2/(1+b^2) = 1

    and |difference| <= max(1+delta, 1/(1-delta)).  delta = 0 degenerates
    to the symmetric Rademacher walk.
    """

    delta: float
    length: int

    def __post_init__(self):
        if not (0.0 <= self.delta < 1.0):
            raise ValueError("delta must lie in [0, 1)")
        if self.length < 1:
            raise ValueError("length must be a positive integer")

    def b_for_sign(self, nonnegative: bool) -> float:
        return 1.0 + self.delta if nonnegative else 1.0 - self.delta

    def up_probability(self, nonnegative: bool) -> float:
        b = self.b_for_sign(nonnegative)
        return 1.0 / (1.0 + b * b)

    def difference_bound(self) -> float:
        return max(1.0 + self.delta, 1.0 / (1.0 - self.delta))


def sample_martingale_path(model: MartingaleModel, rng: np.random.Generator) -> np.ndarray:
    """One path of partial sums S_1..S_n."""
    n = model.length
    u = rng.random(n)
    out = np.empty(n)
    s = 0.0
    b_pos = 1.0 + model.delta
    b_neg = 1.0 - model.delta
    p_pos = 1.0 / (1.0 + b_pos * b_pos)
    p_neg = 1.0 / (1.0 + b_neg * b_neg)
    for i in range(n):
        if s >= 0.0:
            s += b_pos if u[i] < p_pos else -1.0 / b_pos
        else:
            s += b_neg if u[i] < p_neg else -1.0 / b_neg
        out[i] = s
    return out
