"""Exact reference computations on tiny systems.

Two independent ground truths for validating the optimized engines:

* a full continuous-time Markov chain treatment of systems with at most
  12 sites (4096 states): exact absorbing-state hitting probabilities
  and expected absorption times from any initial distribution;
* ``naive_simulate``, a deliberately dumb full-clock simulator that
  recomputes every energy from scratch at every ring and scans for the
  next clock linearly. It consumes the same per-site random streams as
  the optimized full-clock engine, so the two must agree flip for flip.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla

from . import rng
from .dynamics import FlipLog, Simulation, window_of
from .geometry import SlabGeometry
from .state import SpinConfig

MAX_ORACLE_SITES = 12


@dataclass
class TinySystem:
    """A fully periodic slab small enough to enumerate its 2^N states."""

    geometry: SlabGeometry

    def __post_init__(self):
        if self.geometry.vertical_bc != "periodic":
            raise ValueError("the exact oracle only treats fully periodic "
                             "tiny systems; use naive_simulate for free bc")
        if self.geometry.n_sites > MAX_ORACLE_SITES:
            raise ValueError(f"{self.geometry.n_sites} sites exceed the "
                             f"exact-solver cap of {MAX_ORACLE_SITES}")

    @property
    def n_sites(self) -> int:
        return self.geometry.n_sites

    @property
    def n_states(self) -> int:
        return 1 << self.n_sites

    def state_spins(self, state: int) -> np.ndarray:
        """Spins of one encoded state; bit i set means site i is +1."""
        bits = (state >> np.arange(self.n_sites)) & 1
        return np.where(bits == 1, 1, -1).astype(np.int8)

    def spins_matrix(self) -> np.ndarray:
        """(2^N, N) matrix of spins for every state."""
        states = np.arange(self.n_states, dtype=np.int64)[:, None]
        bits = (states >> np.arange(self.n_sites)[None, :]) & 1
        return np.where(bits == 1, 1, -1).astype(np.int8)

    def energies_matrix(self) -> np.ndarray:
        """(2^N, N) per-site energies for every state."""
        idx, mult = self.geometry.neighbor_table()
        s = self.spins_matrix().astype(np.int32)
        nbr_sum = np.einsum("ij,sij->si", mult.astype(np.int32), s[:, idx])
        return -s * nbr_sum

    def config_state(self, config: SpinConfig) -> int:
        bits = (config.spins > 0).astype(np.int64)
        return int((bits << np.arange(self.n_sites)).sum())


def build_generator(sys: TinySystem) -> sp.csr_matrix:
    """Sparse CTMC rate matrix: rate 1 flips for positive energy, 1/2 for
    ties, nothing for stable sites; diagonal is minus the row sum."""
    energies = sys.energies_matrix()
    n_states, n_sites = energies.shape
    states = np.arange(n_states, dtype=np.int64)
    rows, cols, vals = [], [], []
    for i in range(n_sites):
        e = energies[:, i]
        rate = np.where(e > 0, 1.0, np.where(e == 0, 0.5, 0.0))
        active = rate > 0
        rows.append(states[active])
        cols.append(states[active] ^ (1 << i))
        vals.append(rate[active])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    q = sp.coo_matrix((vals, (rows, cols)), shape=(n_states, n_states))
    q = q.tocsr()
    q = q - sp.diags(np.asarray(q.sum(axis=1)).ravel())
    return q.tocsr()


def absorbing_states(sys: TinySystem) -> np.ndarray:
    """States in which every site has strictly negative energy."""
    return np.flatnonzero(np.all(sys.energies_matrix() < 0, axis=1))


@dataclass
class AbsorptionResult:
    absorbing: np.ndarray            # encoded absorbing states
    probs: np.ndarray                # hitting probability of each, from init
    expected_time: float             # continuous-time mean absorption time
    certain: bool                    # absorption reachable from all support
    stuck_states: np.ndarray         # states that cannot reach absorption

    def prob_of(self, state: int) -> float:
        hits = np.flatnonzero(self.absorbing == state)
        return float(self.probs[hits[0]]) if len(hits) else 0.0


def absorption_analysis(sys: TinySystem,
                        initial: np.ndarray) -> AbsorptionResult:
    """Exact hitting probabilities and expected absorption time.

    If some state in the support of `initial` cannot reach an absorbing
    state, that is reported (certain=False, stuck_states) instead of
    being silently normalized away.
    """
    initial = np.asarray(initial, dtype=float)
    if initial.shape != (sys.n_states,):
        raise ValueError("initial distribution has wrong length")
    if initial.min() < 0 or not np.isclose(initial.sum(), 1.0):
        raise ValueError("initial must be a probability distribution")
    q = build_generator(sys)
    absorbing = absorbing_states(sys)
    is_abs = np.zeros(sys.n_states, dtype=bool)
    is_abs[absorbing] = True
    transient = np.flatnonzero(~is_abs)

    # states that cannot reach any absorbing state: breadth-first on the
    # reversed transition graph from the absorbing set
    reach = np.zeros(sys.n_states, dtype=bool)
    reach[absorbing] = True
    adj = (q > 0).T.tocsr()
    frontier = absorbing
    while len(frontier):
        nxt = np.unique(adj[frontier].nonzero()[1])
        nxt = nxt[~reach[nxt]]
        reach[nxt] = True
        frontier = nxt
    stuck = np.flatnonzero(~reach)
    certain = not np.any(initial[stuck] > 0)

    probs = np.zeros(len(absorbing))
    expected_time = np.nan
    if certain and len(transient):
        qtt = q[transient][:, transient].tocsc()
        qta = q[transient][:, absorbing].tocsc()
        # hitting probabilities: (-Q_TT) B = Q_TA
        b = spla.spsolve(-qtt, qta)
        if sp.issparse(b):
            b = b.toarray()
        b = np.asarray(b)
        if b.ndim == 1:
            b = b[:, None]
        # expected absorption time on the continuous chain: (-Q_TT) tau = 1
        tau = spla.spsolve(-qtt, np.ones(len(transient)))
        init_t = initial[transient]
        probs = initial[absorbing] + init_t @ b
        expected_time = float(init_t @ tau)
    elif certain:
        probs = initial[absorbing].astype(float)
        expected_time = 0.0
    return AbsorptionResult(absorbing=absorbing, probs=probs,
                            expected_time=expected_time, certain=certain,
                            stuck_states=stuck)


def product_distribution(sys: TinySystem, p: float) -> np.ndarray:
    """Product measure over encoded states: bit set (spin +1) w.p. p."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    states = np.arange(sys.n_states, dtype=np.int64)[:, None]
    bits = (states >> np.arange(sys.n_sites)[None, :]) & 1
    return np.prod(np.where(bits == 1, p, 1.0 - p), axis=1)


# --- naive reference simulator ------------------------------------------------


def naive_simulate(config: SpinConfig, seed: int, t_max: float):
    """Full-clock simulation with from-scratch energy recomputation.

    No caching, no thinning, no heap: ground truth for engine tests.
    Returns (FlipLog, final SpinConfig, events processed).
    """
    g = config.geometry
    n = g.n_sites
    spins = config.spins.copy()
    log = FlipLog(n, t_max)
    neighbors = [g.neighbors(g.site_id(i)) for i in range(n)]
    nbr_flat = [[(g.site_index(*nbr), m) for nbr, m in nbs]
                for nbs in neighbors]

    def energy(i):
        return -int(spins[i]) * sum(m * int(spins[j])
                                    for j, m in nbr_flat[i])

    next_ring = np.array([rng.ring_gap(seed, s, 0) for s in range(n)])
    ring_ctr = [1] * n
    coin_ctr = [0] * n
    events = 0
    while True:
        if all(energy(i) < 0 for i in range(n)):
            break  # quiescent; remaining rings can never flip anything
        s = min(range(n), key=lambda i: (next_ring[i], i))
        tr = next_ring[s]
        if tr > t_max:
            break
        pre = energy(s)
        flipped = False
        if pre > 0:
            flipped = True
        elif pre == 0:
            flipped = rng.tie_coin(seed, s, coin_ctr[s])
            coin_ctr[s] += 1
        if flipped:
            spins[s] = -spins[s]
            log.total[s] += 1
            log.last_flip_time[s] = tr
            w = window_of(tr, log.n_windows)
            log.window_total[s, w] += 1
            if pre > 0:
                log.energy_lowering[s] += 1
                log.window_el[s, w] += 1
        next_ring[s] = tr + rng.ring_gap(seed, s, ring_ctr[s])
        ring_ctr[s] += 1
        events += 1
    return log, SpinConfig(g, spins), events


def mc_absorption(sys: TinySystem, p: float, n_replicas: int, seed: int,
                  t_max: float = 1e6) -> dict[int, int]:
    """Monte Carlo absorbing-state frequencies using the thinned engine."""
    counts: dict[int, int] = {}
    for r in range(n_replicas):
        rep_seed = rng.derive_seed(seed, r)
        config = SpinConfig.from_product(sys.geometry, p, rep_seed)
        sim = Simulation(config, rep_seed, t_max, mode="thinned")
        summary = sim.run()
        if not summary.quiescent:
            raise RuntimeError(f"replica {r} not absorbed by t={t_max}")
        state = sys.config_state(sim.snapshot())
        counts[state] = counts.get(state, 0) + 1
    return counts


def total_variation(exact: AbsorptionResult, counts: dict[int, int]) -> float:
    """TV distance between exact hitting law and empirical frequencies."""
    n = sum(counts.values())
    support = set(int(s) for s in exact.absorbing) | set(counts)
    tv = 0.0
    for s in support:
        tv += abs(exact.prob_of(s) - counts.get(s, 0) / n)
    return 0.5 * tv
