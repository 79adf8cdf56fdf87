"""Counter-based random number generation (Philox4x64-10).

Every Gaussian draw is addressed by a (stream, row, column) triple: the
stream tags which driver the draw belongs to, rows index sample paths and
columns index time steps.  Because the generator is a pure function of
(seed, stream, row, column), any sub-block of a draw matrix can be produced
independently — by any worker, in any order — and is bit-identical to the
same block of a full-matrix generation.
"""

from __future__ import annotations

import numpy as np

# Philox4x64 round multipliers and Weyl key increments (Salmon et al. 2011).
_MULT_HI = np.uint64(0xD2E7470EE14C6C93)
_MULT_LO = np.uint64(0xCA5A826395121157)
_BUMP_0 = np.uint64(0x9E3779B97F4A7C15)
_BUMP_1 = np.uint64(0xBB67AE8584CAA73B)
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
_ROUNDS = 10

# Stream tags. Streams 0 and 1 feed the two Brownian drivers; higher tags
# are reserved for auxiliary consumers so they can never collide with them.
STREAM_W = 0
STREAM_B = 1
STREAM_AUDIT = 2


def _mul_hi_lo(a: np.uint64, b: np.ndarray):
    """Full 64x64 -> 128 bit product as (high, low) uint64 words."""
    lo = a * b
    al = a & _MASK32
    ah = a >> _SHIFT32
    bl = b & _MASK32
    bh = b >> _SHIFT32
    t = ah * bl + ((al * bl) >> _SHIFT32)
    u = al * bh + (t & _MASK32)
    hi = ah * bh + (t >> _SHIFT32) + (u >> _SHIFT32)
    return hi, lo


def philox_block(c0, c1, c2, c3, k0, k1):
    """One Philox4x64-10 block per element of the counter arrays.

    All arguments are uint64 arrays of a common shape; returns the four
    output words. Matches numpy.random.Philox output for the same key and
    counter (numpy emits counter value n+1 as its n-th block).
    """
    c0 = np.asarray(c0, dtype=np.uint64).copy()
    c1 = np.asarray(c1, dtype=np.uint64).copy()
    c2 = np.asarray(c2, dtype=np.uint64).copy()
    c3 = np.asarray(c3, dtype=np.uint64).copy()
    k0 = np.asarray(k0, dtype=np.uint64).copy()
    k1 = np.asarray(k1, dtype=np.uint64).copy()
    for _ in range(_ROUNDS):
        hi0, lo0 = _mul_hi_lo(_MULT_HI, c0)
        hi1, lo1 = _mul_hi_lo(_MULT_LO, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        k0 = k0 + _BUMP_0
        k1 = k1 + _BUMP_1
    return c0, c1, c2, c3


def _to_unit_interval(words: np.ndarray) -> np.ndarray:
    """Map uint64 words to doubles in (0, 1]; never returns 0."""
    return 1.0 - (words >> np.uint64(11)) * (2.0 ** -53)


def standard_normals(seed: int, stream: int, rows, cols) -> np.ndarray:
    """Standard normal draws addressed by (seed, stream, row, column).

    ``rows`` and ``cols`` are index arrays (broadcast against each other);
    the result has the broadcast shape.  One Philox block is spent per
    element; its first two words feed a Box-Muller pair and the first
    normal of the pair is returned.
    """
    rows = np.asarray(rows, dtype=np.uint64)
    cols = np.asarray(cols, dtype=np.uint64)
    rows, cols = np.broadcast_arrays(rows, cols)
    shape = rows.shape
    zeros = np.zeros(shape, dtype=np.uint64)
    k0 = np.full(shape, np.uint64(seed), dtype=np.uint64)
    k1 = np.full(shape, np.uint64(stream), dtype=np.uint64)
    w0, w1, _, _ = philox_block(rows, cols, zeros, zeros, k0, k1)
    radius = np.sqrt(-2.0 * np.log(_to_unit_interval(w0)))
    angle = (2.0 * np.pi) * ((w1 >> np.uint64(11)) * (2.0 ** -53))
    return radius * np.cos(angle)


def uniforms(seed: int, stream: int, rows, cols) -> np.ndarray:
    """Uniform (0, 1] draws under the same addressing scheme."""
    rows = np.asarray(rows, dtype=np.uint64)
    cols = np.asarray(cols, dtype=np.uint64)
    rows, cols = np.broadcast_arrays(rows, cols)
    shape = rows.shape
    zeros = np.zeros(shape, dtype=np.uint64)
    k0 = np.full(shape, np.uint64(seed), dtype=np.uint64)
    k1 = np.full(shape, np.uint64(stream), dtype=np.uint64)
    w0, _, _, _ = philox_block(rows, cols, zeros, zeros, k0, k1)
    return _to_unit_interval(w0)
