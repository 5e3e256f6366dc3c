"""Continuous-time zero-temperature Glauber evolution on a slab.

Two statistically equivalent engines:

* ``thinned`` (default): rejection-free. Only sites with energy >= 0
  carry events; a site with positive energy flips at rate 1, a tie site
  at rate 1/2; no-op events are never generated. This is an exact
  thinning of the full-clock process.
* ``full_clock``: every site rings at rate 1; a ring flips on positive
  energy, flips with probability 1/2 on a tie (one coin consumed), and
  does nothing otherwise. Kept as the trusted reference.

Trajectories are pure functions of (initial configuration, seed, engine
mode). Flips are logged per site: totals, energy-lowering counts (flips
with positive pre-flip energy), last flip time, and per-dyadic-window
counters for both. Checkpoints round-trip bit-exactly: a restored run
continues identically to an uninterrupted one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels, rng
from .geometry import SiteId, SlabGeometry
from .state import SpinConfig

MODES = ("thinned", "full_clock")

CHECKPOINT_VERSION = 1


def window_count(t_max: float) -> int:
    """Number of dyadic windows needed to cover [0, t_max].

    Window j covers [2^j, 2^(j+1)); window 0 additionally absorbs [0, 1).
    """
    if t_max <= 0:
        raise ValueError(f"t_max must be positive, got {t_max}")
    return max(1, math.ceil(math.log2(t_max)))


def window_bounds(j: int) -> tuple[float, float]:
    return (0.0 if j == 0 else float(2 ** j), float(2 ** (j + 1)))


def window_of(t: float, n_windows: int) -> int:
    """Dyadic window holding time t; the kernels use the same arithmetic."""
    if t < 2.0:
        return 0
    _, e = math.frexp(t)
    return min(e - 1, n_windows - 1)


class FlipLog:
    """Per-site flip counters for one run."""

    def __init__(self, n_sites: int, t_max: float):
        self.t_max = float(t_max)
        self.n_windows = window_count(t_max)
        self.total = np.zeros(n_sites, dtype=np.int64)
        self.energy_lowering = np.zeros(n_sites, dtype=np.int64)
        # -1 marks "never flipped"
        self.last_flip_time = np.full(n_sites, -1.0)
        self.window_total = np.zeros((n_sites, self.n_windows),
                                     dtype=np.int64)
        self.window_el = np.zeros((n_sites, self.n_windows), dtype=np.int64)

    def active_in_window(self, j: int) -> np.ndarray:
        return self.window_total[:, j] > 0

    def active_fraction(self, j: int) -> float:
        return float(np.mean(self.active_in_window(j)))

    def equals(self, other: "FlipLog") -> bool:
        return (self.n_windows == other.n_windows
                and np.array_equal(self.total, other.total)
                and np.array_equal(self.energy_lowering,
                                   other.energy_lowering)
                and np.array_equal(self.last_flip_time, other.last_flip_time)
                and np.array_equal(self.window_total, other.window_total)
                and np.array_equal(self.window_el, other.window_el))


@dataclass
class Event:
    site: SiteId
    time: float
    flipped: bool
    pre_energy: int


@dataclass
class RunSummary:
    events: int
    flips: int
    quiescent: bool
    t: float


class Simulation:
    """One run: owns the evolving state, the clock and the flip log."""

    def __init__(self, config: SpinConfig, seed: int, t_max: float,
                 mode: str = "thinned"):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        if t_max <= 0:
            raise ValueError("t_max must be positive")
        self.geometry = config.geometry
        self.mode = mode
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.t_max = float(t_max)
        self.spins = config.spins.copy()
        self.energy = config.energy_all().astype(np.int32)
        self.nbr_idx, self.nbr_mult = self.geometry.neighbor_table()
        self.log = FlipLog(self.geometry.n_sites, t_max)
        self.time_reached = 0.0
        self._clock = np.zeros(1)
        self._seed_lo = np.uint64(self.seed & 0xFFFFFFFF)
        self._seed_hi = np.uint64(self.seed >> 32)
        if mode == "thinned":
            self._init_thinned()
        else:
            self._init_fullclock()

    # --- engine state ------------------------------------------------------

    def _init_thinned(self):
        n = self.geometry.n_sites
        self.hi_list = np.zeros(n, dtype=np.int32)
        self.hi_pos = np.full(n, -1, dtype=np.int32)
        self.tie_list = np.zeros(n, dtype=np.int32)
        self.tie_pos = np.full(n, -1, dtype=np.int32)
        self.counts = np.zeros(2, dtype=np.int64)
        self._load_eligible(np.flatnonzero(self.energy > 0),
                            np.flatnonzero(self.energy == 0))
        self.evctr = np.zeros(1, dtype=np.uint64)

    def _load_eligible(self, hi_sites, tie_sites):
        self.counts[0] = len(hi_sites)
        self.counts[1] = len(tie_sites)
        self.hi_list[:len(hi_sites)] = hi_sites
        self.hi_pos[hi_sites] = np.arange(len(hi_sites), dtype=np.int32)
        self.tie_list[:len(tie_sites)] = tie_sites
        self.tie_pos[tie_sites] = np.arange(len(tie_sites), dtype=np.int32)

    def _init_fullclock(self):
        n = self.geometry.n_sites
        sites = np.arange(n, dtype=np.uint64)
        r0, r1, _, _ = rng.philox4x32_array(
            np.uint32(0), np.uint32(0), sites.astype(np.uint32),
            np.uint32(rng.KIND_RING), int(self._seed_lo), int(self._seed_hi))
        bits = (r0.astype(np.uint64) << np.uint64(32)) | r1.astype(np.uint64)
        u = (bits >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
        self.next_ring = -np.log1p(-u)
        self.ring_ctr = np.ones(n, dtype=np.uint64)
        self.coin_ctr = np.zeros(n, dtype=np.uint64)
        self.heap = np.zeros(n, dtype=np.int32)
        self.hpos = np.zeros(n, dtype=np.int32)
        _kernels.heap_build(self.heap, self.hpos, self.next_ring)
        self.n_elig = np.array([int(np.count_nonzero(self.energy >= 0))],
                               dtype=np.int64)

    # --- running -----------------------------------------------------------

    def is_quiescent(self) -> bool:
        if self.mode == "thinned":
            return int(self.counts[0] + self.counts[1]) == 0
        return int(self.n_elig[0]) == 0

    def check_quiescent_scan(self) -> bool:
        """Full-scan cross-check of the maintained eligibility counters."""
        scan = bool(np.all(self.energy < 0))
        assert scan == self.is_quiescent(), \
            "eligibility bookkeeping disagrees with a fresh energy scan"
        return scan

    def _dispatch(self, t_target: float, max_events: int):
        if self.mode == "thinned":
            ev, fl, status, site, pre = _kernels.run_thinned(
                self.spins, self.energy, self.nbr_idx, self.nbr_mult,
                self.hi_list, self.hi_pos, self.tie_list, self.tie_pos,
                self.counts, self._clock, self.evctr,
                self._seed_lo, self._seed_hi, t_target,
                self.log.total, self.log.energy_lowering,
                self.log.last_flip_time, self.log.window_total,
                self.log.window_el, max_events)
            flipped = True
        else:
            ev, fl, status, site, pre, flipped = _kernels.run_fullclock(
                self.spins, self.energy, self.nbr_idx, self.nbr_mult,
                self.heap, self.hpos, self.next_ring, self.ring_ctr,
                self.coin_ctr, self.n_elig, self._clock,
                self._seed_lo, self._seed_hi, t_target,
                self.log.total, self.log.energy_lowering,
                self.log.last_flip_time, self.log.window_total,
                self.log.window_el, max_events)
        return ev, fl, status, site, pre, flipped

    def run_until(self, t_target: float) -> RunSummary:
        """Advance to t_target or quiescence, whichever comes first."""
        if not self.time_reached <= t_target <= self.t_max:
            raise ValueError(f"t_target must lie in [{self.time_reached}, "
                             f"{self.t_max}], got {t_target}")
        events = flips = 0
        while True:
            ev, fl, status, _, _, _ = self._dispatch(t_target, 1 << 62)
            events += ev
            flips += fl
            if status != _kernels.STATUS_BUDGET:
                break
        self.time_reached = float(t_target)
        return RunSummary(events, flips,
                          status == _kernels.STATUS_QUIESCENT, t_target)

    def run(self) -> RunSummary:
        return self.run_until(self.t_max)

    def step(self) -> Event | None:
        """Process one event (thinned: one flip; full clock: one ring).

        Returns None when nothing happens before t_max: the system is
        quiescent or out of time. Quiescence is a signal, not a fault.
        """
        ev, _, status, site, pre, flipped = self._dispatch(self.t_max, 1)
        if ev == 0:
            self.time_reached = self.t_max
            return None
        t = float(self._clock[0])
        self.time_reached = max(self.time_reached, t)
        return Event(self.geometry.site_id(int(site)), t, bool(flipped),
                     int(pre))

    def snapshot(self) -> SpinConfig:
        return SpinConfig(self.geometry, self.spins.copy())

    @property
    def t(self) -> float:
        return self.time_reached


# --- checkpointing -----------------------------------------------------------


def save_checkpoint(sim: Simulation, path) -> None:
    """Versioned binary blob; restore continues the run bit-exactly."""
    g = sim.geometry
    payload = {
        "version": np.int64(CHECKPOINT_VERSION),
        "mode": np.bytes_(sim.mode.encode()),
        "lx": np.int64(g.lx), "ly": np.int64(g.ly), "k": np.int64(g.k),
        "vertical_bc": np.bytes_(g.vertical_bc.encode()),
        "seed": np.uint64(sim.seed),
        "t_max": np.float64(sim.t_max),
        "time_reached": np.float64(sim.time_reached),
        "clock": sim._clock,
        "spins": np.packbits(sim.spins > 0),
        "log_total": sim.log.total,
        "log_el": sim.log.energy_lowering,
        "log_last": sim.log.last_flip_time,
        "log_window_total": sim.log.window_total,
        "log_window_el": sim.log.window_el,
    }
    if sim.mode == "thinned":
        payload["evctr"] = sim.evctr
        payload["hi_list"] = sim.hi_list[:sim.counts[0]].copy()
        payload["tie_list"] = sim.tie_list[:sim.counts[1]].copy()
    else:
        payload["next_ring"] = sim.next_ring
        payload["ring_ctr"] = sim.ring_ctr
        payload["coin_ctr"] = sim.coin_ctr
    np.savez(path, **payload)


def load_checkpoint(path) -> Simulation:
    with np.load(path) as data:
        version = int(data["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        mode = bytes(data["mode"]).decode()
        g = SlabGeometry(int(data["lx"]), int(data["ly"]), int(data["k"]),
                         bytes(data["vertical_bc"]).decode())
        n = g.n_sites
        bits = np.unpackbits(data["spins"], count=n)
        spins = np.where(bits == 1, 1, -1).astype(np.int8)
        sim = Simulation(SpinConfig(g, spins), int(data["seed"]),
                         float(data["t_max"]), mode)
        sim.time_reached = float(data["time_reached"])
        sim._clock[0] = data["clock"][0]
        sim.log.total[:] = data["log_total"]
        sim.log.energy_lowering[:] = data["log_el"]
        sim.log.last_flip_time[:] = data["log_last"]
        sim.log.window_total[:] = data["log_window_total"]
        sim.log.window_el[:] = data["log_window_el"]
        if mode == "thinned":
            sim.evctr[:] = data["evctr"]
            hi = data["hi_list"].astype(np.int32)
            tie = data["tie_list"].astype(np.int32)
            # selection depends on list order, so restore it exactly
            sim.hi_pos[:] = -1
            sim.tie_pos[:] = -1
            sim._load_eligible(hi, tie)
        else:
            sim.next_ring[:] = data["next_ring"]
            sim.ring_ctr[:] = data["ring_ctr"]
            sim.coin_ctr[:] = data["coin_ctr"]
            _kernels.heap_build(sim.heap, sim.hpos, sim.next_ring)
    return sim
