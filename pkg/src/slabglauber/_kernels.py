"""Numba kernels: the event loops of both engines.

Both kernels consume randomness through the same Philox4x32-10 counter
scheme as `rng` (bit-identical), so trajectories are pure functions of
(seed, initial state) and checkpoints only need to store integer
counters. The rejection-free kernel draws one 128-bit block per event
from the master event stream; the full-clock kernel draws per-site ring
gaps and tie coins from per-site streams.

Status codes returned by the run kernels:
    0  reached the target time
    1  quiescent (no site with energy >= 0 remains)
    2  event budget exhausted (used for single-stepping)
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

MASK32 = np.uint64(0xFFFFFFFF)
_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53

KIND_RING = np.uint64(0)
KIND_COIN = np.uint64(1)
KIND_EVENT = np.uint64(2)

STATUS_T_REACHED = 0
STATUS_QUIESCENT = 1
STATUS_BUDGET = 2


@njit(cache=True, inline="always")
def _philox(c0, c1, c2, c3, k0, k1):
    for _ in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0 = p0 >> np.uint64(32)
        lo0 = p0 & MASK32
        hi1 = p1 >> np.uint64(32)
        lo1 = p1 & MASK32
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
        k0 = (k0 + _W0) & MASK32
        k1 = (k1 + _W1) & MASK32
    return c0, c1, c2, c3


@njit(cache=True, inline="always")
def _unit(hi, lo):
    return float(((hi << np.uint64(32)) | lo) >> np.uint64(11)) * _INV53


@njit(cache=True, inline="always")
def _stream_uniforms(k0, k1, index, stream_id, kind):
    r0, r1, r2, r3 = _philox(index & MASK32, index >> np.uint64(32),
                             stream_id, kind, k0, k1)
    return _unit(r0, r1), _unit(r2, r3)


@njit(cache=True)
def philox_block(c0, c1, c2, c3, k0, k1):
    """Exposed for tests: one block as four uint64-held 32-bit words."""
    return _philox(np.uint64(c0), np.uint64(c1), np.uint64(c2),
                   np.uint64(c3), np.uint64(k0), np.uint64(k1))


@njit(cache=True, inline="always")
def _window_of(t, n_windows):
    # window j covers [2^j, 2^(j+1)); everything below t=2 folds into 0.
    # frexp gives floor(log2(t)) exactly, so this matches the pure-python
    # reference bit for bit.
    if t < 2.0:
        return 0
    _, e = math.frexp(t)
    w = e - 1
    if w > n_windows - 1:
        w = n_windows - 1
    return w


@njit(cache=True, inline="always")
def _log_flip(s, t, pre, n_windows, total_flips, el_flips, last_flip,
              win_total, win_el):
    total_flips[s] += 1
    last_flip[s] = t
    w = _window_of(t, n_windows)
    win_total[s, w] += 1
    if pre > 0:
        el_flips[s] += 1
        win_el[s, w] += 1


@njit(cache=True, inline="always")
def _set_remove(lst, pos, n, s):
    i = pos[s]
    last = lst[n - 1]
    lst[i] = last
    pos[last] = i
    pos[s] = -1
    return n - 1


@njit(cache=True, inline="always")
def _set_add(lst, pos, n, s):
    lst[n] = s
    pos[s] = n
    return n + 1


@njit(cache=True, inline="always")
def _eclass(e):
    if e > 0:
        return 2
    if e == 0:
        return 1
    return 0


@njit(cache=True)
def run_thinned(spins, energy, nbr_idx, nbr_mult,
                hi_list, hi_pos, tie_list, tie_pos, counts,
                clock, evctr, seed_lo, seed_hi, t_target,
                total_flips, el_flips, last_flip, win_total, win_el,
                max_events):
    """Rejection-free engine: forced flips at rate 1, tie flips at 1/2.

    Mutates all state arrays in place. counts = [n_hi, n_tie]; clock and
    evctr are 1-element arrays. Returns (events, flips, status, last_site,
    last_pre): the last two describe the final event (for single-step use).
    """
    n_windows = win_total.shape[1]
    k0 = np.uint64(seed_lo)
    k1 = np.uint64(seed_hi)
    t = clock[0]
    ctr = evctr[0]
    events = 0
    flips = 0
    status = STATUS_BUDGET
    last_site = -1
    last_pre = 0
    while events < max_events:
        n_hi = counts[0]
        n_tie = counts[1]
        if n_hi == 0 and n_tie == 0:
            status = STATUS_QUIESCENT
            break
        rate = float(n_hi) + 0.5 * float(n_tie)
        u1, u2 = _stream_uniforms(k0, k1, ctr, np.uint64(0), KIND_EVENT)
        dt = -np.log1p(-u1) / rate
        if t + dt > t_target:
            # not consumed: the same counter re-draws this event later
            status = STATUS_T_REACHED
            break
        ctr += np.uint64(1)
        t += dt
        x = u2 * rate
        if x < float(n_hi):
            j = int(x)
            if j >= n_hi:
                j = n_hi - 1
            s = hi_list[j]
        else:
            j = int((x - float(n_hi)) * 2.0)
            if j >= n_tie:
                j = n_tie - 1
            s = tie_list[j]
        pre = energy[s]
        old = spins[s]
        spins[s] = -old
        _log_flip(s, t, pre, n_windows, total_flips, el_flips, last_flip,
                  win_total, win_el)
        # own energy negates; tie sites stay ties, forced sites turn stable
        energy[s] = -pre
        if pre > 0:
            counts[0] = _set_remove(hi_list, hi_pos, counts[0], s)
        for slot in range(6):
            m = nbr_mult[s, slot]
            if m == 0:
                continue
            nb = nbr_idx[s, slot]
            e_old = energy[nb]
            e_new = e_old + 2 * m * spins[nb] * old
            energy[nb] = e_new
            c_old = _eclass(e_old)
            c_new = _eclass(e_new)
            if c_old != c_new:
                if c_old == 2:
                    counts[0] = _set_remove(hi_list, hi_pos, counts[0], nb)
                elif c_old == 1:
                    counts[1] = _set_remove(tie_list, tie_pos, counts[1], nb)
                if c_new == 2:
                    counts[0] = _set_add(hi_list, hi_pos, counts[0], nb)
                elif c_new == 1:
                    counts[1] = _set_add(tie_list, tie_pos, counts[1], nb)
        events += 1
        flips += 1
        last_site = s
        last_pre = pre
    # clock keeps the last *event* time: the overshooting gap was not
    # consumed, so a continued run re-draws it from the same counter and
    # reproduces the uninterrupted trajectory exactly
    clock[0] = t
    evctr[0] = ctr
    return events, flips, status, last_site, last_pre


# --- indexed binary heap keyed by (next ring time, site index) -------------


@njit(cache=True, inline="always")
def _heap_less(next_ring, a, b):
    ta = next_ring[a]
    tb = next_ring[b]
    if ta < tb:
        return True
    if ta > tb:
        return False
    return a < b


@njit(cache=True, inline="always")
def _heap_swap(heap, hpos, i, j):
    heap[i], heap[j] = heap[j], heap[i]
    hpos[heap[i]] = i
    hpos[heap[j]] = j


@njit(cache=True)
def _sift_down(heap, hpos, next_ring, n, i):
    while True:
        left = 2 * i + 1
        if left >= n:
            return
        best = left
        right = left + 1
        if right < n and _heap_less(next_ring, heap[right], heap[left]):
            best = right
        if _heap_less(next_ring, heap[best], heap[i]):
            _heap_swap(heap, hpos, i, best)
            i = best
        else:
            return


@njit(cache=True)
def heap_build(heap, hpos, next_ring):
    n = heap.shape[0]
    for s in range(n):
        heap[s] = s
        hpos[s] = s
    for i in range(n // 2 - 1, -1, -1):
        _sift_down(heap, hpos, next_ring, n, i)


@njit(cache=True)
def run_fullclock(spins, energy, nbr_idx, nbr_mult,
                  heap, hpos, next_ring, ring_ctr, coin_ctr, n_elig,
                  clock, seed_lo, seed_hi, t_target,
                  total_flips, el_flips, last_flip, win_total, win_el,
                  max_events):
    """Reference engine: every site rings at rate 1, no-op rings included.

    n_elig is a 1-element array holding the count of sites with energy
    >= 0; when it hits zero no flip can ever happen again, so remaining
    rings are skipped wholesale (their draws stay unconsumed, which is
    consistent across checkpoint boundaries because the skip depends only
    on state). Returns (events, flips, status, last_site, last_pre,
    last_flipped).
    """
    n = spins.shape[0]
    n_windows = win_total.shape[1]
    k0 = np.uint64(seed_lo)
    k1 = np.uint64(seed_hi)
    t = clock[0]
    events = 0
    flips = 0
    status = STATUS_BUDGET
    last_site = -1
    last_pre = 0
    last_flipped = False
    while events < max_events:
        if n_elig[0] == 0:
            status = STATUS_QUIESCENT
            break
        s = heap[0]
        tr = next_ring[s]
        if tr > t_target:
            status = STATUS_T_REACHED
            break
        t = tr
        pre = energy[s]
        flipped = False
        if pre > 0:
            flipped = True
        elif pre == 0:
            u, _ = _stream_uniforms(k0, k1, coin_ctr[s], np.uint64(s),
                                    KIND_COIN)
            coin_ctr[s] += np.uint64(1)
            flipped = u < 0.5
        if flipped:
            old = spins[s]
            spins[s] = -old
            _log_flip(s, t, pre, n_windows, total_flips, el_flips,
                      last_flip, win_total, win_el)
            energy[s] = -pre
            if pre > 0:
                n_elig[0] -= 1
            for slot in range(6):
                m = nbr_mult[s, slot]
                if m == 0:
                    continue
                nb = nbr_idx[s, slot]
                e_old = energy[nb]
                e_new = e_old + 2 * m * spins[nb] * old
                energy[nb] = e_new
                if e_old >= 0 and e_new < 0:
                    n_elig[0] -= 1
                elif e_old < 0 and e_new >= 0:
                    n_elig[0] += 1
            flips += 1
        u, _ = _stream_uniforms(k0, k1, ring_ctr[s], np.uint64(s), KIND_RING)
        ring_ctr[s] += np.uint64(1)
        next_ring[s] = tr - np.log1p(-u)
        _sift_down(heap, hpos, next_ring, n, 0)
        events += 1
        last_site = s
        last_pre = pre
        last_flipped = flipped
    clock[0] = t
    return events, flips, status, last_site, last_pre, last_flipped
