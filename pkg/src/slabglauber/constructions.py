"""Deterministic certificates for explicit configurations.

Two constructions are built and verified here:

* the absorbing block: a 2x2 square of monochromatic columns. Every site
  in it keeps strictly negative energy even when every spin outside the
  block disagrees, so the block can never flip - a worst-case, not
  statistical, statement.
* the width-4 non-fixation gadget: a 14x12 column box (shipped as a data
  asset) in which four designated level-0 spins cycle forever through
  exact ties while every other specified spin is stable against
  adversarial surroundings in all states of the cycle.

Verification treats every unspecified or out-of-box neighbor as
disagreeing, which makes "fixed" a certificate valid for arbitrary
surroundings. The asset itself is gated by these verifiers: a corrupt
transcription cannot pass.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .geometry import SiteId, SlabGeometry
from .state import Pattern, UNSPECIFIED

FIG7_WIDTH = 14
FIG7_HEIGHT = 12
FIG7_K = 4


def _pattern_neighbors(width, height, k, vertical_bc, x, y, z):
    """Neighbors of a pattern cell: (site or None, multiplicity).

    None marks a neighbor outside the lateral box (adversarial). The
    vertical direction follows the slab rule, including the doubled k=2
    periodic edge. Lateral wrap is deliberately not applied: the
    certificate must hold for arbitrary surroundings.
    """
    out = []
    for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        nx, ny = x + dx, y + dy
        if 0 <= nx < width and 0 <= ny < height:
            out.append(((nx, ny, z), 1))
        else:
            out.append((None, 1))
    if vertical_bc == "periodic":
        up, down = (z + 1) % k, (z - 1) % k
        if up == down:
            out.append(((x, y, up), 2))
        else:
            out.append(((x, y, down), 1))
            out.append(((x, y, up), 1))
    else:
        if z > 0:
            out.append(((x, y, z - 1), 1))
        if z < k - 1:
            out.append(((x, y, z + 1), 1))
    return out


def _worst_case_energy(pattern: Pattern, vertical_bc: str, site,
                       overrides: dict | None = None):
    """(min, max) energy of a specified site over unknown neighbors.

    Known neighbors contribute -mult * s_s * s_n; every unspecified or
    out-of-box neighbor contributes +mult to the max (all disagree) and
    -mult to the min (all agree). overrides maps sites to spins (the
    cycling set's current values).
    """
    x, y, z = site
    overrides = overrides or {}
    s = overrides.get((x, y, z))
    if s is None:
        s = int(pattern.spins[x, y, z])
    if s == UNSPECIFIED:
        raise ValueError(f"site {site} is unspecified")
    e_known = 0
    unknown = 0
    for nbr, m in _pattern_neighbors(pattern.width, pattern.height,
                                     pattern.k, vertical_bc, x, y, z):
        if nbr is None:
            unknown += m
            continue
        v = overrides.get(nbr)
        if v is None:
            v = int(pattern.spins[nbr])
        if v == UNSPECIFIED:
            unknown += m
        else:
            e_known += -m * s * v
    return e_known - unknown, e_known + unknown


# --- absorbing 2x2 monochromatic column block --------------------------------


def build_absorbing_block(g: SlabGeometry, pos: tuple[int, int],
                          sign: int) -> Pattern:
    """2x2 block of monochromatic columns of one sign (4k specified spins)."""
    if sign not in (-1, 1):
        raise ValueError("sign must be +-1")
    x0, y0 = pos
    if not (0 <= x0 and x0 + 2 <= g.lx and 0 <= y0 and y0 + 2 <= g.ly):
        raise ValueError(f"2x2 block at {pos} does not fit {g}")
    return Pattern(np.full((2, 2, g.k), sign, dtype=np.int8), anchor=pos)


@dataclass
class AbsorbingReport:
    passed: bool
    worst_energy: int                    # max over sites of worst-case energy
    margins: dict                        # SiteId -> worst-case energy

    def __bool__(self):
        return self.passed


def verify_absorbing(g: SlabGeometry, pattern: Pattern) -> AbsorbingReport:
    """True iff every specified site is stable against adversarial
    surroundings (strictly negative worst-case energy)."""
    margins = {}
    for site in pattern.specified_sites():
        _, e_max = _worst_case_energy(pattern, g.vertical_bc, site)
        margins[site] = e_max
    worst = max(margins.values()) if margins else -1
    return AbsorbingReport(passed=worst < 0, worst_energy=worst,
                           margins=margins)


# --- the width-4 perpetual-flip gadget ----------------------------------------


@dataclass
class Figure7Pattern:
    """The shipped 14x12 (k=4) gadget with its three designated site sets."""

    pattern: Pattern
    flipping: list[SiteId]        # cycle order: rightmost first
    fixed: list[SiteId]
    unspecified: list[SiteId]

    @property
    def initial_flip_values(self) -> list[int]:
        return [int(self.pattern.spins[s]) for s in self.flipping]


def _load_asset(name: str) -> str:
    ref = resources.files("slabglauber").joinpath("data", name)
    try:
        return ref.read_text()
    except FileNotFoundError as exc:
        raise RuntimeError(f"construction asset {name} is missing") from exc


def build_figure7() -> Figure7Pattern:
    """Load and integrity-check the non-fixation gadget asset."""
    pattern = Pattern.from_text(_load_asset("figure7.pat"))
    sidecar = json.loads(_load_asset("figure7_sites.json"))
    if (pattern.width, pattern.height, pattern.k) != (FIG7_WIDTH,
                                                      FIG7_HEIGHT, FIG7_K):
        raise RuntimeError("gadget asset has wrong dimensions "
                           f"{pattern.width}x{pattern.height}x{pattern.k}")
    flipping = [SiteId(*s) for s in sidecar["flipping"]]
    fixed = [SiteId(*s) for s in sidecar["fixed"]]
    unspecified = [SiteId(*s) for s in sidecar["unspecified"]]
    specified = set(pattern.specified_sites())
    if set(unspecified) != set(pattern.unspecified_sites()):
        raise RuntimeError("sidecar unspecified set disagrees with pattern")
    if set(fixed) | set(flipping) != specified or set(fixed) & set(flipping):
        raise RuntimeError("sidecar fixed/flipping sets do not partition "
                           "the specified sites")
    if len(flipping) != 4 or any(s.z != 0 for s in flipping):
        raise RuntimeError("flipping set must be 4 level-0 sites")
    ys = {s.y for s in flipping}
    xs = sorted(s.x for s in flipping)
    if len(ys) != 1 or xs != list(range(xs[0], xs[0] + 4)):
        raise RuntimeError("flipping sites must be laterally adjacent in "
                           "one row")
    if any(int(pattern.spins[s]) != -1 for s in flipping):
        raise RuntimeError("flipping spins must start at -1")
    return Figure7Pattern(pattern, flipping, fixed, unspecified)


def cycle_states(fp: Figure7Pattern, inverted: bool = False):
    """The 9 assignments the flipping set visits (start + one per flip).

    Forward: sites flip to +1 in listed order (rightmost first), then
    back to -1 in reverse. Inverted starts from the all-flipped state and
    runs the mirror cycle.
    """
    start = -1 if not inverted else +1
    values = {s: start for s in fp.flipping}
    up_order = fp.flipping if not inverted else list(reversed(fp.flipping))
    states = [dict(values)]
    for site in up_order:
        values[site] = -start
        states.append(dict(values))
    for site in reversed(up_order):
        values[site] = start
        states.append(dict(values))
    return states


@dataclass
class FixedReport:
    passed: bool
    worst_energy: int
    violations: list               # (site, cycle_state_index, energy)

    def __bool__(self):
        return self.passed


def verify_figure7_fixed(fp: Figure7Pattern) -> FixedReport:
    """Certificate that every fixed site is stable in all cycle states.

    Checks worst-case energy (< 0) with unspecified and out-of-box spins
    adversarial, for all 9 configurations of the flipping set.
    """
    violations = []
    worst = -10
    states = cycle_states(fp)
    for state_i, overrides in enumerate(states):
        for site in fp.fixed:
            _, e_max = _worst_case_energy(fp.pattern, "periodic", site,
                                          overrides)
            if e_max > worst:
                worst = e_max
            if e_max >= 0:
                violations.append((site, state_i, e_max))
    return FixedReport(passed=not violations, worst_energy=worst,
                       violations=violations)


@dataclass
class CycleReport:
    flips: list                    # (site, direction, pre_energy)
    returns_to_start: bool
    all_ties: bool
    legal: bool

    def __bool__(self):
        return self.legal and self.returns_to_start


def verify_figure7_cycle(fp: Figure7Pattern,
                         inverted: bool = False) -> CycleReport:
    """Replay the deterministic flip cycle and check each flip is legal.

    Fixed spins are held at pattern values; unspecified spins are set
    adversarially against each flip (minimizing its pre-energy). A flip
    is legal if even then its pre-energy is >= 0; the cycle is consistent
    with finitely many energy-lowering flips only if every flip is an
    exact tie, which is reported as all_ties.
    """
    start = -1 if not inverted else +1
    values = {s: start for s in fp.flipping}
    up_order = fp.flipping if not inverted else list(reversed(fp.flipping))
    order = list(up_order) + list(reversed(up_order))
    flips = []
    legal = True
    all_ties = True
    for site in order:
        e_min, e_max = _worst_case_energy(fp.pattern, "periodic", site,
                                          values)
        direction = -values[site]
        flips.append((site, direction, e_min))
        if e_min < 0:
            legal = False
        if not (e_min == e_max == 0):
            all_ties = False
        values[site] = direction
    returns = all(values[s] == start for s in fp.flipping)
    return CycleReport(flips=flips, returns_to_start=returns,
                       all_ties=all_ties, legal=legal)
