"""Slab lattice geometry: a lateral torus of columns of width-k stacks.

Sites live at (x, y, z) with 0 <= x < lx, 0 <= y < ly, 0 <= z < k. The
lateral directions always wrap (torus stand-in for the infinite plane);
the vertical direction is either free (levels 0 and k-1 have a single
vertical neighbor) or periodic. Whenever a wrap makes the two neighbors
along an axis coincide (extent-2 axes, including the periodic k=2
vertical), the single edge carries multiplicity 2 so the weighted degree
stays 6 on periodic slabs of any width.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

VERTICAL_BCS = ("free", "periodic")


class SiteId(NamedTuple):
    x: int
    y: int
    z: int


@dataclass(frozen=True)
class SlabGeometry:
    """Immutable slab lattice; shareable across threads and processes.

    lx, ly >= 2 is the hard floor (extent-2 axes double their wrap edge,
    which the exact tiny-system oracle relies on). Production runs and
    pattern embedding want lx, ly >= 4; the CLI enforces that.
    """

    lx: int
    ly: int
    k: int
    vertical_bc: str = "periodic"

    def __post_init__(self):
        if self.vertical_bc not in VERTICAL_BCS:
            raise ValueError(f"vertical_bc must be one of {VERTICAL_BCS}, "
                             f"got {self.vertical_bc!r}")
        if self.k < 2:
            raise ValueError(f"slab width k must be >= 2, got {self.k}")
        if self.lx < 2 or self.ly < 2:
            raise ValueError("lateral extents must be >= 2, got "
                             f"({self.lx}, {self.ly})")

    @property
    def n_sites(self) -> int:
        return self.lx * self.ly * self.k

    @property
    def n_columns(self) -> int:
        return self.lx * self.ly

    # z-fastest indexing: the k spins of one column are contiguous.
    def site_index(self, x: int, y: int, z: int) -> int:
        if not (0 <= x < self.lx and 0 <= y < self.ly and 0 <= z < self.k):
            raise ValueError(f"site ({x}, {y}, {z}) outside {self}")
        return (x * self.ly + y) * self.k + z

    def site_id(self, index: int) -> SiteId:
        if not (0 <= index < self.n_sites):
            raise ValueError(f"site index {index} outside {self}")
        z = index % self.k
        xy = index // self.k
        return SiteId(xy // self.ly, xy % self.ly, z)

    def neighbors(self, site: SiteId | tuple) -> list[tuple[SiteId, int]]:
        """All neighbors of a site as (SiteId, multiplicity) pairs."""
        x, y, z = site
        i = self.site_index(x, y, z)  # validates
        idx, mult = self.neighbor_table()
        return [(self.site_id(int(idx[i, j])), int(mult[i, j]))
                for j in range(6) if mult[i, j] > 0]

    def weighted_degree(self, site: SiteId | tuple) -> int:
        return sum(m for _, m in self.neighbors(site))

    # --- dense neighbor tables -------------------------------------------
    # idx[i, j], mult[i, j] for j < 6; unused slots carry mult 0 (idx 0).
    # Slot order is fixed (x+, x-, y+, y-, z-, z+) so the engines walk a
    # flipped site's neighborhood in a reproducible order. Extent-2 axes
    # fold both directions into the '+' slot with multiplicity 2.

    _table_cache: dict = field(default_factory=dict, compare=False,
                               repr=False, hash=False)

    def neighbor_table(self) -> tuple[np.ndarray, np.ndarray]:
        cached = self._table_cache.get("table")
        if cached is not None:
            return cached
        lx, ly, k = self.lx, self.ly, self.k
        n = self.n_sites
        i = np.arange(n, dtype=np.int64)
        z = i % k
        xy = i // k
        x = xy // ly
        y = xy % ly
        idx = np.zeros((n, 6), dtype=np.int32)
        mult = np.zeros((n, 6), dtype=np.int8)

        def flat(xx, yy, zz):
            return ((xx * ly + yy) * k + zz).astype(np.int32)

        idx[:, 0] = flat((x + 1) % lx, y, z)
        idx[:, 1] = flat((x - 1) % lx, y, z)
        mult[:, 0] = 2 if lx == 2 else 1
        mult[:, 1] = 0 if lx == 2 else 1
        idx[:, 2] = flat(x, (y + 1) % ly, z)
        idx[:, 3] = flat(x, (y - 1) % ly, z)
        mult[:, 2] = 2 if ly == 2 else 1
        mult[:, 3] = 0 if ly == 2 else 1
        if self.vertical_bc == "periodic":
            idx[:, 4] = flat(x, y, (z - 1) % k)
            idx[:, 5] = flat(x, y, (z + 1) % k)
            mult[:, 4] = 2 if k == 2 else 1
            mult[:, 5] = 0 if k == 2 else 1
        else:
            down_ok = z > 0
            up_ok = z < k - 1
            idx[:, 4] = np.where(down_ok, flat(x, y, np.maximum(z - 1, 0)), 0)
            idx[:, 5] = np.where(up_ok, flat(x, y, np.minimum(z + 1, k - 1)), 0)
            mult[:, 4] = down_ok.astype(np.int8)
            mult[:, 5] = up_ok.astype(np.int8)
        idx.setflags(write=False)
        mult.setflags(write=False)
        self._table_cache["table"] = (idx, mult)
        return idx, mult

    def describe(self) -> dict:
        return {"lx": self.lx, "ly": self.ly, "k": self.k,
                "vertical_bc": self.vertical_bc}
