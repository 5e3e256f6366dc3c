"""Observables: fixation census, column-type clusters, activity geometry.

The finite-run stand-ins for the limit statements are:

* activity per dyadic window [2^j, 2^(j+1)): fraction of sites that flip
  at least once in the window; a site is "fixated by horizon T" if it
  does not flip in [T/2, T];
* recurrence of a cluster: occurring as (cluster ∩ region) in at least
  min_occurrences snapshots (a declared proxy, configurable);
* monochromatic column fractions at snapshot times 2^j.

Everything here is a pure function of immutable snapshots and flip logs.
"""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass

import numpy as np
from scipy.stats import binomtest

from .dynamics import FlipLog
from .geometry import SlabGeometry
from .state import SpinConfig

NEIGH4 = ((1, 0), (-1, 0), (0, 1), (0, -1))
NEIGH8 = NEIGH4 + ((1, 1), (1, -1), (-1, 1), (-1, -1))


@dataclass
class EtaField:
    """Per-column type in {0, 1, 2} over the lateral grid (k=3 slabs)."""

    values: np.ndarray     # (lx, ly) uint8
    time: float = 0.0


def eta_snapshot(config: SpinConfig, time: float | None = None) -> EtaField:
    g = config.geometry
    if g.k != 3:
        raise ValueError(f"eta fields are defined for k=3, got k={g.k}")
    cols = config.column_spins()  # (n_columns, k), z-fastest
    plus = cols == 1
    type1 = plus[:, 0] & plus[:, 1] & ~plus[:, 2]
    type2 = plus[:, 0] & ~plus[:, 1] & plus[:, 2]
    values = np.zeros(g.n_columns, dtype=np.uint8)
    values[type1] = 1
    values[type2] = 2
    return EtaField(values.reshape(g.lx, g.ly), float(time or 0.0))


@dataclass
class ClusterLabeling:
    """Connected-component ids of type-r sites; -1 marks non-r sites.

    star=False uses 4-adjacency, star=True 8-adjacency. With a region,
    connectivity is confined to that box (no lateral wrap); without one,
    the whole field is labeled with torus adjacency.
    """

    labels: np.ndarray
    r: int
    star: bool
    region: tuple | None    # (x0, y0, width, height) or None
    n_clusters: int

    def component_of(self, x: int, y: int) -> int:
        if self.region is not None:
            x0, y0, w, h = self.region
            if not (x0 <= x < x0 + w and y0 <= y < y0 + h):
                raise ValueError(f"({x}, {y}) outside region {self.region}")
            return int(self.labels[x - x0, y - y0])
        return int(self.labels[x, y])

    def cluster_sites(self, label: int) -> frozenset:
        xs, ys = np.nonzero(self.labels == label)
        if self.region is not None:
            x0, y0 = self.region[:2]
            xs, ys = xs + x0, ys + y0
        return frozenset(zip(xs.tolist(), ys.tolist()))


def label_clusters(f: EtaField, r: int, star: bool = False,
                   region: tuple | None = None) -> ClusterLabeling:
    """BFS labeling of type-r clusters (exactly the connectivity rules)."""
    lx, ly = f.values.shape
    if region is not None:
        x0, y0, w, h = region
        if not (0 <= x0 and x0 + w <= lx and 0 <= y0 and y0 + h <= ly):
            raise ValueError(f"region {region} outside {lx}x{ly} field")
        mask = f.values[x0:x0 + w, y0:y0 + h] == r
        wrap = False
    else:
        mask = f.values == r
        wrap = True
    w, h = mask.shape
    labels = np.full((w, h), -1, dtype=np.int32)
    moves = NEIGH8 if star else NEIGH4
    n = 0
    for sx in range(w):
        for sy in range(h):
            if not mask[sx, sy] or labels[sx, sy] >= 0:
                continue
            labels[sx, sy] = n
            queue = deque([(sx, sy)])
            while queue:
                cx, cy = queue.popleft()
                for dx, dy in moves:
                    nx, ny = cx + dx, cy + dy
                    if wrap:
                        nx, ny = nx % w, ny % h
                    elif not (0 <= nx < w and 0 <= ny < h):
                        continue
                    if mask[nx, ny] and labels[nx, ny] < 0:
                        labels[nx, ny] = n
                        queue.append((nx, ny))
            n += 1
    return ClusterLabeling(labels=labels, r=r, star=star, region=region,
                           n_clusters=n)


def is_connected(labeling: ClusterLabeling, u_sites, v_sites) -> bool:
    """True iff some u in U and v in V lie in one type-r cluster.

    A site that is not type-r has an empty cluster, so it connects to
    nothing (not even itself).
    """
    u_ids = {labeling.component_of(x, y) for x, y in u_sites}
    v_ids = {labeling.component_of(x, y) for x, y in v_sites}
    u_ids.discard(-1)
    v_ids.discard(-1)
    return bool(u_ids & v_ids)


@dataclass
class RecurrentCluster:
    sites: frozenset
    count: int
    minimal: bool


def recurrent_cluster_census(snapshots, region, r: int,
                             min_occurrences: int = 5,
                             star: bool = False) -> list[RecurrentCluster]:
    """Sets occurring as (full-field r-cluster ∩ region) in at least
    min_occurrences snapshots; minimal if no returned proper subset also
    qualifies. The threshold is the finite-run proxy for recurrence."""
    if len(snapshots) < min_occurrences:
        raise ValueError(f"need at least {min_occurrences} snapshots, "
                         f"got {len(snapshots)}")
    x0, y0, w, h = region
    box = {(x, y) for x in range(x0, x0 + w) for y in range(y0, y0 + h)}
    counts: Counter = Counter()
    for f in snapshots:
        labeling = label_clusters(f, r, star=star, region=None)
        seen = set()
        for label in range(labeling.n_clusters):
            sites = labeling.cluster_sites(label)
            inter = sites & box
            if inter and inter not in seen:
                seen.add(inter)
        counts.update(seen)
    qualifying = {s: c for s, c in counts.items() if c >= min_occurrences}
    out = []
    for sites, count in sorted(qualifying.items(),
                               key=lambda kv: (len(kv[0]), -kv[1])):
        minimal = not any(other < sites for other in qualifying)
        out.append(RecurrentCluster(sites=sites, count=count,
                                    minimal=minimal))
    return out


# --- fixation census -----------------------------------------------------------


@dataclass
class FixationCensus:
    """Activity per dyadic window plus monochromaticity at window ends."""

    window_active_fraction: np.ndarray      # (n_windows,)
    mono_fraction: np.ndarray               # (n_windows,), NaN if no snapshot
    active_final: np.ndarray                # per-site flag, final window
    column_active_final: np.ndarray         # (lx, ly) bool
    n_windows: int
    window_el_total: np.ndarray             # energy-lowering flips per window


def fixation_census(log: FlipLog, snapshots,
                    geometry: SlabGeometry) -> FixationCensus:
    """snapshots: iterable of (time, SpinConfig) taken at dyadic times."""
    nw = log.n_windows
    active = np.array([log.active_fraction(j) for j in range(nw)])
    mono = np.full(nw, np.nan)
    by_time = {float(t): c for t, c in snapshots}
    for j in range(nw):
        t_end = float(2 ** (j + 1))
        if t_end in by_time:
            mono[j] = by_time[t_end].monochromatic_fraction()
    final = log.active_in_window(nw - 1)
    col_active = final.reshape(geometry.n_columns,
                               geometry.k).any(axis=1)
    return FixationCensus(
        window_active_fraction=active,
        mono_fraction=mono,
        active_final=final,
        column_active_final=col_active.reshape(geometry.lx, geometry.ly),
        n_windows=nw,
        window_el_total=log.window_el.sum(axis=0))


@dataclass
class NonfixatedGeometry:
    sizes: list                 # cluster sizes, descending
    histogram: dict             # size -> count
    largest_fraction: float     # largest cluster / n_columns
    spans_torus: bool           # any cluster wraps either lateral axis


def nonfixated_geometry(census: FixationCensus) -> NonfixatedGeometry:
    """4-adjacency components of the columns still active at the end."""
    return column_cluster_stats(census.column_active_final)


def column_cluster_stats(mask: np.ndarray) -> NonfixatedGeometry:
    """Cluster statistics of a boolean lateral mask on the torus."""
    lx, ly = mask.shape
    seen = np.zeros_like(mask, dtype=bool)
    sizes = []
    spans = False
    for sx in range(lx):
        for sy in range(ly):
            if not mask[sx, sy] or seen[sx, sy]:
                continue
            # BFS tracking unwrapped coordinates; revisiting a cell with a
            # different winding means the cluster wraps the torus
            seen[sx, sy] = True
            unwrapped = {(sx, sy): (sx, sy)}
            queue = deque([(sx, sy)])
            size = 1
            while queue:
                cx, cy = queue.popleft()
                ux, uy = unwrapped[(cx, cy)]
                for dx, dy in NEIGH4:
                    nx, ny = (cx + dx) % lx, (cy + dy) % ly
                    if not mask[nx, ny]:
                        continue
                    cand = (ux + dx, uy + dy)
                    if not seen[nx, ny]:
                        seen[nx, ny] = True
                        unwrapped[(nx, ny)] = cand
                        queue.append((nx, ny))
                        size += 1
                    elif (nx, ny) in unwrapped and \
                            unwrapped[(nx, ny)] != cand:
                        spans = True
            sizes.append(size)
    sizes.sort(reverse=True)
    n_cols = mask.size
    return NonfixatedGeometry(
        sizes=sizes,
        histogram=dict(Counter(sizes)),
        largest_fraction=(sizes[0] / n_cols) if sizes else 0.0,
        spans_torus=spans)


# --- central-site fixation ------------------------------------------------------


def central_site_fixated(log: FlipLog, geometry: SlabGeometry,
                         horizon: float,
                         lateral: tuple[int, int] | None = None) -> bool:
    """Zero flips in [horizon/2, horizon] at the central-level site."""
    if horizon <= 0:
        return True  # degenerate horizon: no window to flip in
    x, y = lateral if lateral is not None else (geometry.lx // 2,
                                                geometry.ly // 2)
    site = geometry.site_index(x, y, (geometry.k - 1) // 2)
    return bool(log.last_flip_time[site] < horizon / 2)


def central_site_fixation_probability(flags) -> dict:
    """Binomial estimate with a 95% Wilson interval."""
    flags = list(flags)
    n = len(flags)
    hits = sum(bool(f) for f in flags)
    if n == 0:
        raise ValueError("no replicas")
    ci = binomtest(hits, n).proportion_ci(confidence_level=0.95,
                                          method="wilson")
    return {"estimate": hits / n, "ci_low": float(ci.low),
            "ci_high": float(ci.high), "n": n}
