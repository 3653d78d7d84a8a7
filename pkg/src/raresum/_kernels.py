"""Numba kernels for the martingale path simulation.

The martingale walk is inherently sequential (each difference depends on
the sign of the running sum), so path batches run in a compiled scalar
loop.  Uniform variates come from an inline xoshiro256+ generator whose
256-bit state is derived per sample block from a ``numpy`` SeedSequence
keyed by (seed, block index); any worker that processes a given block
reproduces it bit-for-bit, which is what makes the estimate independent
of the worker count.  Only the top 53 bits of each xoshiro output feed
the uniform, avoiding the weak low bits.
"""

import numba
import numpy as np

_U64_17 = np.uint64(17)
_U64_45 = np.uint64(45)
_U64_19 = np.uint64(19)
_U64_11 = np.uint64(11)
_INV_2_53 = 1.0 / 9007199254740992.0  # 2^-53


@numba.njit(cache=True, nogil=True)
def martingale_block_hits(n_steps, b_pos, b_neg, p_pos, p_neg, threshold,
                          n_paths, s0, s1, s2, s3):
    """Count paths whose final sum reaches ``threshold``.

    Two-point state-dependent differences: from a nonnegative running sum
    the step is +b_pos w.p. p_pos else -1/b_pos, mirrored with b_neg from
    a negative sum.
    """
    d_pos = -1.0 / b_pos
    d_neg = -1.0 / b_neg
    hits = 0
    for _ in range(n_paths):
        s = 0.0
        for _ in range(n_steps):
            result = s0 + s3
            t = s1 << _U64_17
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = (s3 << _U64_45) | (s3 >> _U64_19)
            u = np.float64(result >> _U64_11) * _INV_2_53
            if s >= 0.0:
                s += b_pos if u < p_pos else d_pos
            else:
                s += b_neg if u < p_neg else d_neg
        if s >= threshold:
            hits += 1
    return hits
