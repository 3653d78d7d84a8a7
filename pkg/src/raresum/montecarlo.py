"""Rare-event tail estimation: plain Monte Carlo and exponentially tilted
importance sampling for random sums, plain Monte Carlo for the martingale.

Reproducibility contract: samples are organized in blocks of 2^16, each
block drawn from a counter-based Philox stream keyed by (seed, block
index); partial results are reduced in block order with a fixed-order
summation.  Identical (configuration, seed) therefore yields bit-identical
estimates regardless of how many worker threads execute the blocks.

The tilted estimator changes measure on the joint (index, summand) law:
the index pmf is reweighted by exp(n * cgf_X(theta)) (Poisson stays
Poisson with rate lam * exp(cgf_X(theta)); geometric stays geometric with
1 - p' = (1 - p) exp(cgf_X(theta)); deterministic is unchanged) and the
summands are drawn theta-tilted, so the likelihood ratio
exp(-theta S + psi(theta)) with psi = cgf_index o cgf_X is exact and the
estimator unbiased.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import optimize as sp_optimize

from . import _kernels
from .models import (
    DomainError,
    MartingaleModel,
    RandomSumSpec,
)

BLOCK_SIZE = 1 << 16
THREADS_ENV_VAR = "RARESUM_THREADS"


class InfeasibleTiltError(RuntimeError):
    """The tilt target is unreachable inside the joint CGF domain."""


class UndefinedRateError(ValueError):
    """Empirical rate requested for a zero tail estimate."""


def resolve_threads(threads: int | None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get(THREADS_ENV_VAR)
    return max(1, int(env)) if env else 1


def block_rng(seed: int, block_index: int) -> np.random.Generator:
    """Counter-based stream for one sample block, keyed by (seed, block)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, block_index))))


def _block_sizes(n_samples: int):
    full, rem = divmod(n_samples, BLOCK_SIZE)
    sizes = [BLOCK_SIZE] * full
    if rem:
        sizes.append(rem)
    return sizes


def _run_blocks(worker, n_samples: int, threads: int):
    """Run ``worker(block_index, block_size)`` over all blocks; return the
    partial results ordered by block index (reduction order is fixed no
    matter which thread produced them)."""
    sizes = _block_sizes(n_samples)
    if threads <= 1:
        return [worker(i, m) for i, m in enumerate(sizes)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(worker, i, m) for i, m in enumerate(sizes)]
        return [f.result() for f in futures]


# ---------------------------------------------------------------------------
# Tail estimates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TailEstimate:
    """A tail probability estimate with its provenance.

    ``empirical_rate`` is -log(p_hat)/speed, NaN when the estimate is
    zero (flagged by ``zero_hits``).  ``ci_clamped`` reports whether the
    3-sigma interval around p_hat left [0, 1]; clamping is never applied
    silently.
    """

    p_hat: float
    std_error: float
    samples: int
    method: str  # "plain" | "tilted"
    threshold: float
    speed: float
    empirical_rate: float
    theta: float | None = None
    zero_hits: bool = False
    ci_clamped: bool = False


def empirical_rate(p_hat: float, speed: float) -> float:
    """-log(p_hat) / speed, the finite-scale analogue of the rate bound."""
    if speed <= 0.0:
        raise ValueError("speed must be positive")
    if not (0.0 < p_hat <= 1.0):
        raise UndefinedRateError(f"empirical rate undefined for p_hat = {p_hat}")
    return -math.log(p_hat) / speed


def _finish_estimate(p_hat, std_error, n_samples, method, threshold, speed,
                     theta=None) -> TailEstimate:
    zero = p_hat == 0.0
    rate = math.nan if zero else -math.log(p_hat) / speed
    clamped = (p_hat - 3.0 * std_error < 0.0) or (p_hat + 3.0 * std_error > 1.0)
    return TailEstimate(
        p_hat=p_hat, std_error=std_error, samples=n_samples, method=method,
        threshold=threshold, speed=speed, empirical_rate=rate, theta=theta,
        zero_hits=zero, ci_clamped=clamped)


def estimate_tail_plain(spec: RandomSumSpec, t: float, n_samples: int, seed: int,
                        *, speed: float, threads: int | None = None) -> TailEstimate:
    """Plain Monte Carlo frequency of {Z >= t} with binomial standard error."""
    threads = resolve_threads(threads)
    threshold_sum = spec.sum_threshold(t)

    def worker(block_index: int, m: int) -> int:
        rng = block_rng(seed, block_index)
        nu = spec.index.sample(m, rng)
        s = spec.summand.sample_sum(nu, rng)
        return int(np.count_nonzero(s >= threshold_sum))

    hits = 0
    for partial in _run_blocks(worker, n_samples, threads):
        hits += partial
    p_hat = hits / n_samples
    se = math.sqrt(p_hat * (1.0 - p_hat) / n_samples)
    return _finish_estimate(p_hat, se, n_samples, "plain", t, speed)


@dataclass(frozen=True)
class TiltSolution:
    """Exponential tilt solving psi'(theta) = target for the compound CGF."""

    theta: float
    psi: float
    psi_prime: float
    iterations: int


def solve_tilt(spec: RandomSumSpec, target_sum: float) -> TiltSolution:
    """Solve psi'(theta) = target_sum, psi(theta) = cgf_index(cgf_X(theta)).

    Feasibility requires cgf_X(theta) to stay below the index CGF domain
    supremum; when the boundary is reached before the target (possible
    for bounded psi', and numerically for extreme targets against a
    geometric index) an :class:`InfeasibleTiltError` is raised and the
    caller is expected to fall back to plain estimation.
    """
    if target_sum < 0.0:
        raise ValueError("tilt target must be nonnegative")
    if target_sum == 0.0:
        return TiltSolution(theta=0.0, psi=0.0, psi_prime=0.0, iterations=0)

    summand, index = spec.summand, spec.index
    u_max = index.cgf_domain_sup
    dom_hi = summand.cgf_domain[1]

    def psi_prime(theta: float) -> float:
        u = summand.cgf(theta)
        if u >= u_max:
            raise DomainError("tilt leaves the index CGF domain")
        return index.cgf_prime(u) * summand.cgf_prime(theta)

    # supremum of admissible theta > 0: the summand domain end, tightened
    # to where cgf_X crosses the index domain boundary
    theta_limit = dom_hi - 1e-12 if math.isfinite(dom_hi) else math.inf
    theta_sup = theta_limit
    if math.isfinite(u_max):
        hi = min(1.0, theta_limit)
        while summand.cgf(hi) < u_max and hi < min(theta_limit, 1e6):
            hi = min(hi * 2.0, theta_limit)
        if summand.cgf(hi) >= u_max:
            theta_sup = sp_optimize.brentq(
                lambda th: summand.cgf(th) - u_max, 0.0, hi, xtol=1e-15, rtol=8.9e-16)
        else:
            theta_sup = hi

    evals = 0

    def g(theta: float) -> float:
        nonlocal evals
        evals += 1
        return psi_prime(theta) - target_sum

    if math.isfinite(theta_sup):
        # approach the boundary geometrically from inside
        b = None
        for k in range(1, 60):
            cand = theta_sup * (1.0 - 0.5**k)
            try:
                if g(cand) >= 0.0:
                    b = cand
                    break
            except DomainError:
                continue
        if b is None:
            raise InfeasibleTiltError(
                f"psi' cannot reach target {target_sum!r} inside the joint CGF domain")
    else:
        b = 1.0
        while b < 750.0 and g(b) < 0.0:
            b *= 2.0
        if g(b) < 0.0:
            raise InfeasibleTiltError(
                f"psi' saturates below target {target_sum!r} (bounded summand support)")

    theta = sp_optimize.brentq(g, 0.0, b, xtol=1e-15, rtol=8.9e-16)
    u = summand.cgf(theta)
    sol = TiltSolution(theta=theta, psi=index.cgf(u), psi_prime=psi_prime(theta),
                       iterations=evals)
    if abs(sol.psi_prime - target_sum) > 1e-9 * max(1.0, abs(target_sum)):
        raise InfeasibleTiltError(
            f"tilt solve did not reach the target: psi'={sol.psi_prime!r} vs {target_sum!r}")
    return sol


def estimate_tail_tilted(spec: RandomSumSpec, t: float, n_samples: int, seed: int,
                         *, speed: float, threads: int | None = None) -> TailEstimate:
    """Importance-sampling estimate of P(Z >= t) under the exact joint tilt.

    Unbiased: the average of exp(-theta S + psi(theta)) 1{Z >= t} under
    the tilted joint law equals the plain tail probability.
    """
    threads = resolve_threads(threads)
    threshold_sum = spec.sum_threshold(t)
    tilt = solve_tilt(spec, threshold_sum)
    theta = tilt.theta
    if theta == 0.0:
        plain = estimate_tail_plain(spec, t, n_samples, seed, speed=speed, threads=threads)
        # identity tilt: unit weights reproduce the plain estimator
        return TailEstimate(
            p_hat=plain.p_hat, std_error=plain.std_error, samples=plain.samples,
            method="tilted", threshold=plain.threshold, speed=plain.speed,
            empirical_rate=plain.empirical_rate, theta=0.0,
            zero_hits=plain.zero_hits, ci_clamped=plain.ci_clamped)

    u = spec.summand.cgf(theta)
    tilted_index = spec.index.tilted(u)
    psi = tilt.psi

    def worker(block_index: int, m: int):
        rng = block_rng(seed, block_index)
        nu = tilted_index.sample(m, rng)
        s = spec.summand.sample_sum_tilted(nu, theta, rng)
        hit = s >= threshold_sum
        w = np.exp(psi - theta * s[hit])
        return float(w.sum()), float(np.square(w).sum()), int(hit.sum())

    sum_w = 0.0
    sum_w2 = 0.0
    hits = 0
    for pw, pw2, ph in _run_blocks(worker, n_samples, threads):
        sum_w += pw
        sum_w2 += pw2
        hits += ph

    p_hat = sum_w / n_samples
    if n_samples > 1:
        var = max(0.0, (sum_w2 - n_samples * p_hat * p_hat) / (n_samples - 1))
        se = math.sqrt(var / n_samples)
    else:
        se = math.nan
    est = _finish_estimate(p_hat, se, n_samples, "tilted", t, speed, theta=theta)
    if hits == 0 and not est.zero_hits:
        raise AssertionError("zero hits must imply a zero estimate")
    return est


# ---------------------------------------------------------------------------
# Martingale tail
# ---------------------------------------------------------------------------


def _xoshiro_state(seed: int, block_index: int):
    state = np.random.SeedSequence((seed, block_index)).generate_state(4, np.uint64)
    if not state.any():  # all-zero state is the one forbidden xoshiro seed
        state[0] = np.uint64(0x9E3779B97F4A7C15)
    return state


def estimate_martingale_tail(model: MartingaleModel, a_n: float, t: float,
                             n_samples: int, seed: int, *,
                             threads: int | None = None) -> TailEstimate:
    """Plain Monte Carlo frequency of {S_n / (a_n sqrt(n)) >= t}.

    No tilting: the differences are dependent through the sign of the
    running sum, so no product change of measure is exact.
    """
    if a_n < 1.0:
        raise ValueError("a_n must be >= 1")
    threads = resolve_threads(threads)
    threshold = t * a_n * math.sqrt(model.length)
    b_pos = model.b_for_sign(True)
    b_neg = model.b_for_sign(False)
    p_pos = model.up_probability(True)
    p_neg = model.up_probability(False)

    def worker(block_index: int, m: int) -> int:
        s0, s1, s2, s3 = _xoshiro_state(seed, block_index)
        return int(_kernels.martingale_block_hits(
            model.length, b_pos, b_neg, p_pos, p_neg, threshold, m, s0, s1, s2, s3))

    hits = 0
    for partial in _run_blocks(worker, n_samples, threads):
        hits += partial
    p_hat = hits / n_samples
    se = math.sqrt(p_hat * (1.0 - p_hat) / n_samples)
    return _finish_estimate(p_hat, se, n_samples, "plain", t, a_n * a_n)
