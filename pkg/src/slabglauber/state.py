"""Spin configurations, local energies, column classification, patterns.

The spin assignment is held as a dense int8 array of +-1 in z-fastest
site order, so a column's k spins are one contiguous slice. Energies
here are the from-scratch reference computation; the engines keep their
own incrementally-maintained copies and are tested against this one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .geometry import SlabGeometry, SiteId

ETA_NONE = 0
ETA_TYPE1 = 1
ETA_TYPE2 = 2


class SpinConfig:
    """A full +-1 assignment to every site of a slab."""

    def __init__(self, geometry: SlabGeometry, spins: np.ndarray):
        spins = np.asarray(spins, dtype=np.int8)
        if spins.shape != (geometry.n_sites,):
            raise ValueError(f"expected {geometry.n_sites} spins, "
                             f"got shape {spins.shape}")
        if not np.all(np.abs(spins) == 1):
            raise ValueError("spins must be +-1")
        self.geometry = geometry
        self.spins = spins

    # --- constructors -----------------------------------------------------

    @classmethod
    def uniform(cls, geometry: SlabGeometry, sign: int) -> "SpinConfig":
        if sign not in (-1, 1):
            raise ValueError("sign must be +-1")
        return cls(geometry, np.full(geometry.n_sites, sign, dtype=np.int8))

    @classmethod
    def from_product(cls, geometry: SlabGeometry, p: float,
                     seed: int) -> "SpinConfig":
        """Each site independently +1 with probability p (deterministic)."""
        if not 0.0 < p < 1.0:
            raise ValueError(f"p must lie in (0, 1), got {p}")
        u = rng.init_uniforms(seed, geometry.n_sites)
        return cls(geometry, np.where(u < p, 1, -1).astype(np.int8))

    def copy(self) -> "SpinConfig":
        return SpinConfig(self.geometry, self.spins.copy())

    # --- energy and stability ----------------------------------------------

    def energy_all(self) -> np.ndarray:
        """e_s = -sum over neighbors (with multiplicity) of s_s * s_n."""
        idx, mult = self.geometry.neighbor_table()
        s = self.spins.astype(np.int32)
        nbr_sum = (mult.astype(np.int32) * s[idx]).sum(axis=1)
        return (-s * nbr_sum).astype(np.int32)

    def energy(self, site) -> int:
        i = self._index(site)
        g = self.geometry
        s = int(self.spins[i])
        total = 0
        for nbr, m in g.neighbors(g.site_id(i)):
            total += m * s * int(self.spins[g.site_index(*nbr)])
        return -total

    def is_unstable(self, site) -> bool:
        return self.energy(site) >= 0

    def is_quiescent(self) -> bool:
        """True iff no site can ever flip again (all energies < 0)."""
        return bool(np.all(self.energy_all() < 0))

    def global_flip(self) -> "SpinConfig":
        return SpinConfig(self.geometry, -self.spins)

    # --- columns ------------------------------------------------------------

    def column(self, x: int, y: int) -> np.ndarray:
        g = self.geometry
        base = g.site_index(x, y, 0)
        return self.spins[base:base + g.k]

    def is_monochromatic(self, x: int, y: int) -> bool:
        col = self.column(x, y)
        return bool(np.all(col == col[0]))

    def classify_column(self, x: int, y: int) -> int:
        """Column type in {0, 1, 2}; defined for k=3 slabs only.

        Type 1 is (+, +, -) reading levels 0, 1, 2; type 2 is (+, -, +).
        """
        if self.geometry.k != 3:
            raise ValueError("column classification is defined for k=3 "
                             f"slabs, geometry has k={self.geometry.k}")
        c0, c1, c2 = self.column(x, y)
        if c0 == 1 and c1 == 1 and c2 == -1:
            return ETA_TYPE1
        if c0 == 1 and c1 == -1 and c2 == 1:
            return ETA_TYPE2
        return ETA_NONE

    def column_spins(self) -> np.ndarray:
        """(n_columns, k) view of the spins."""
        g = self.geometry
        return self.spins.reshape(g.n_columns, g.k)

    def monochromatic_fraction(self) -> float:
        cols = self.column_spins()
        return float(np.mean(np.all(cols == cols[:, :1], axis=1)))

    def _index(self, site) -> int:
        if isinstance(site, (int, np.integer)):
            if not 0 <= site < self.geometry.n_sites:
                raise ValueError(f"site index {site} out of range")
            return int(site)
        return self.geometry.site_index(*site)


# --- patterns ---------------------------------------------------------------

UNSPECIFIED = 0

_CHAR_TO_SPIN = {"+": 1, "-": -1, "?": UNSPECIFIED}
_SPIN_TO_CHAR = {1: "+", -1: "-", UNSPECIFIED: "?"}


@dataclass
class Pattern:
    """Partial spin assignment over a lateral box.

    spins[x, y, z] in {+1, -1, 0}; 0 marks an unspecified cell. The anchor
    is the lateral offset of the box's (0, 0) corner when embedding.
    """

    spins: np.ndarray
    anchor: tuple[int, int] = (0, 0)

    def __post_init__(self):
        self.spins = np.asarray(self.spins, dtype=np.int8)
        if self.spins.ndim != 3:
            raise ValueError("pattern spins must be (width, height, k)")
        if not np.all(np.isin(self.spins, (-1, 0, 1))):
            raise ValueError("pattern entries must be in {+1, -1, 0}")

    @property
    def width(self) -> int:
        return self.spins.shape[0]

    @property
    def height(self) -> int:
        return self.spins.shape[1]

    @property
    def k(self) -> int:
        return self.spins.shape[2]

    def specified_sites(self) -> list[SiteId]:
        xs, ys, zs = np.nonzero(self.spins != UNSPECIFIED)
        return [SiteId(int(a), int(b), int(c)) for a, b, c in zip(xs, ys, zs)]

    def unspecified_sites(self) -> list[SiteId]:
        xs, ys, zs = np.nonzero(self.spins == UNSPECIFIED)
        return [SiteId(int(a), int(b), int(c)) for a, b, c in zip(xs, ys, zs)]

    def fits(self, geometry: SlabGeometry) -> bool:
        x0, y0 = self.anchor
        return (self.k == geometry.k and 0 <= x0 and 0 <= y0
                and x0 + self.width <= geometry.lx
                and y0 + self.height <= geometry.ly)

    def to_text(self) -> str:
        """ASCII form: header, then rows top to bottom (row y=0 last)."""
        lines = [f"pattern {self.width} {self.height} {self.k}"]
        for y in range(self.height - 1, -1, -1):
            cells = ["".join(_SPIN_TO_CHAR[int(v)] for v in self.spins[x, y])
                     for x in range(self.width)]
            lines.append(" ".join(cells))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Pattern":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("pattern"):
            raise ValueError("pattern text must start with a "
                             "'pattern <width> <height> <k>' header")
        parts = lines[0].split()
        if len(parts) != 4:
            raise ValueError(f"malformed pattern header: {lines[0]!r}")
        width, height, k = (int(v) for v in parts[1:])
        rows = lines[1:]
        if len(rows) != height:
            raise ValueError(f"expected {height} rows, got {len(rows)}")
        spins = np.zeros((width, height, k), dtype=np.int8)
        for row_i, line in enumerate(rows):
            y = height - 1 - row_i
            cells = line.split()
            if len(cells) != width:
                raise ValueError(f"row {row_i}: expected {width} cells, "
                                 f"got {len(cells)}")
            for x, cell in enumerate(cells):
                if len(cell) != k:
                    raise ValueError(f"cell ({x}, {y}): expected {k} "
                                     f"levels, got {cell!r}")
                for z, ch in enumerate(cell):
                    if ch not in _CHAR_TO_SPIN:
                        raise ValueError(f"bad spin char {ch!r} at "
                                         f"({x}, {y}, {z})")
                    spins[x, y, z] = _CHAR_TO_SPIN[ch]
        return cls(spins)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path) -> "Pattern":
        with open(path) as fh:
            return cls.from_text(fh.read())


def embed_pattern(config: SpinConfig, pattern: Pattern,
                  unspecified_policy: str = "keep_background",
                  adversarial_sites: list | None = None) -> SpinConfig:
    """Overwrite a config's spins with a pattern's specified cells.

    unspecified cells either keep the background ('keep_background') or,
    with 'adversarial_for', are set to disagree with the adjacent majority
    of the given target sites (verification aid; the deterministic
    certificates in `constructions` do a stronger per-site worst case).
    """
    g = config.geometry
    if not pattern.fits(g):
        raise ValueError(f"pattern {pattern.width}x{pattern.height}x"
                         f"{pattern.k} at {pattern.anchor} does not fit {g}")
    out = config.copy()
    x0, y0 = pattern.anchor
    for x in range(pattern.width):
        for y in range(pattern.height):
            col = pattern.spins[x, y]
            base = g.site_index(x0 + x, y0 + y, 0)
            mask = col != UNSPECIFIED
            out.spins[base:base + g.k][mask] = col[mask]
    if unspecified_policy == "keep_background":
        return out
    if unspecified_policy != "adversarial_for":
        raise ValueError(f"unknown policy {unspecified_policy!r}")
    if adversarial_sites is None:
        raise ValueError("adversarial_for needs the target site set")
    targets = {g.site_index(*s) for s in adversarial_sites}
    for x in range(pattern.width):
        for y in range(pattern.height):
            for z in range(pattern.k):
                if pattern.spins[x, y, z] != UNSPECIFIED:
                    continue
                i = g.site_index(x0 + x, y0 + y, z)
                vote = 0
                for nbr, m in g.neighbors(g.site_id(i)):
                    j = g.site_index(*nbr)
                    if j in targets:
                        vote += m * int(out.spins[j])
                if vote != 0:
                    out.spins[i] = -np.sign(vote)
    return out
