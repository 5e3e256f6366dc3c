"""Counter-based random streams built on Philox4x32-10.

Every random number in the package is a pure function of a 64-bit master
seed and a 128-bit counter, evaluated through the Philox4x32-10 bijection.
Streams are separated by dedicating counter words to a stream id and a
stream kind, so they provably never overlap under one key:

    counter = (index_lo, index_hi, stream_id, kind)

with the master seed as the Philox key. This makes trajectories
reproducible under engine refactoring, lets checkpoints store plain
integer counters, and gives exact global-flip equivariance (draws never
depend on spin values).

Kinds:
    KIND_RING   per-site exponential clock gaps (stream_id = site index)
    KIND_COIN   per-site tie-breaking coins (stream_id = site index)
    KIND_EVENT  master stream of the rejection-free engine (stream_id = 0)
    KIND_INIT   product-measure initial spins (index = site index)
    KIND_DERIVE replica seed derivation (index = replica index)
"""

from __future__ import annotations

import numpy as np

KIND_RING = 0
KIND_COIN = 1
KIND_EVENT = 2
KIND_INIT = 3
KIND_DERIVE = 4

_M32 = 0xFFFFFFFF
_M0 = 0xD2511F53
_M1 = 0xCD9E8D57
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85

# uniforms use the top 53 of 64 bits -> values in [0, 1)
_INV53 = 1.0 / (1 << 53)


def philox4x32(c0: int, c1: int, c2: int, c3: int, k0: int, k1: int):
    """One Philox4x32-10 block: four 32-bit counter words, two key words.

    Returns four 32-bit output words. Reference scalar implementation;
    the numba kernels and the vectorized version below must agree with it
    bit for bit.
    """
    for _ in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0, lo0 = (p0 >> 32) & _M32, p0 & _M32
        hi1, lo1 = (p1 >> 32) & _M32, p1 & _M32
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        k0 = (k0 + _W0) & _M32
        k1 = (k1 + _W1) & _M32
    return c0, c1, c2, c3


def philox4x32_array(c0, c1, c2, c3, k0: int, k1: int):
    """Vectorized Philox4x32-10 over uint32 arrays (broadcast together)."""
    c0 = np.asarray(c0, dtype=np.uint32)
    c1 = np.asarray(c1, dtype=np.uint32)
    c2 = np.asarray(c2, dtype=np.uint32)
    c3 = np.asarray(c3, dtype=np.uint32)
    c0, c1, c2, c3 = np.broadcast_arrays(c0, c1, c2, c3)
    c0, c1, c2, c3 = c0.copy(), c1.copy(), c2.copy(), c3.copy()
    k0 = np.uint32(k0)
    k1 = np.uint32(k1)
    m0 = np.uint64(_M0)
    m1 = np.uint64(_M1)
    for _ in range(10):
        p0 = m0 * c0.astype(np.uint64)
        p1 = m1 * c2.astype(np.uint64)
        hi0 = (p0 >> np.uint64(32)).astype(np.uint32)
        lo0 = p0.astype(np.uint32)
        hi1 = (p1 >> np.uint64(32)).astype(np.uint32)
        lo1 = p1.astype(np.uint32)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        k0 = np.uint32((int(k0) + _W0) & _M32)
        k1 = np.uint32((int(k1) + _W1) & _M32)
    return c0, c1, c2, c3


def _key_words(seed: int):
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    return seed & _M32, seed >> 32


def block(seed: int, index: int, stream_id: int, kind: int):
    """128 random bits for (seed, index, stream_id, kind), as 4 uint32."""
    k0, k1 = _key_words(seed)
    idx = int(index)
    return philox4x32(idx & _M32, (idx >> 32) & _M32, int(stream_id) & _M32,
                      int(kind) & _M32, k0, k1)


def _to_unit(hi: int, lo: int) -> float:
    return (((hi << 32) | lo) >> 11) * _INV53


def uniforms2(seed: int, index: int, stream_id: int, kind: int):
    """Two float64 uniforms in [0, 1) from one block."""
    r0, r1, r2, r3 = block(seed, index, stream_id, kind)
    return _to_unit(r0, r1), _to_unit(r2, r3)


def ring_gap(seed: int, site: int, i: int) -> float:
    """i-th Exp(1) inter-ring gap of a site's clock."""
    u, _ = uniforms2(seed, i, site, KIND_RING)
    return -np.log1p(-u)


def tie_coin(seed: int, site: int, j: int) -> bool:
    """j-th tie coin of a site; True means flip."""
    u, _ = uniforms2(seed, j, site, KIND_COIN)
    return u < 0.5


def event_uniforms(seed: int, event_index: int):
    """(u_time, u_select) pair driving one rejection-free event."""
    return uniforms2(seed, event_index, 0, KIND_EVENT)


def init_uniforms(seed: int, n: int) -> np.ndarray:
    """Per-site uniforms for product initial configurations (vectorized)."""
    idx = np.arange(n, dtype=np.uint64)
    r0, r1, _, _ = philox4x32_array(
        (idx & np.uint64(_M32)).astype(np.uint32),
        (idx >> np.uint64(32)).astype(np.uint32),
        np.uint32(0), np.uint32(KIND_INIT), *_key_words(seed))
    bits = (r0.astype(np.uint64) << np.uint64(32)) | r1.astype(np.uint64)
    return (bits >> np.uint64(11)).astype(np.float64) * _INV53


def derive_seed(seed: int, index: int) -> int:
    """Independent 64-bit sub-seed (replica streams, sweep cells)."""
    r0, r1, _, _ = block(seed, index, 0, KIND_DERIVE)
    return (r0 << 32) | r1
