"""Site-percolation clusters on tori, open boxes and graphs.

Topologies expose ``n_sites`` and a neighbour table (``-1`` padded); the
labelling itself is a compiled union-find with path compression and
union by size.
"""
from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from . import _kernels
from .errors import DomainError, ParameterError


@lru_cache(maxsize=8)
def _lattice_neighbors(dim, side, periodic):
    n = side**dim
    dtype = np.int32 if n < 2**31 else np.int64
    idx = np.arange(n, dtype=dtype).reshape((side,) * dim)
    cols = []
    for axis in range(dim):
        for shift in (-1, 1):  # +1 neighbour first, then -1
            nb = np.roll(idx, shift, axis=axis)
            if not periodic:
                nb = nb.copy()
                edge = [slice(None)] * dim
                edge[axis] = -1 if shift == -1 else 0
                nb[tuple(edge)] = -1
            cols.append(nb.ravel())
    table = np.stack(cols, axis=1)
    table.setflags(write=False)
    return table


@dataclass(frozen=True)
class Torus:
    """``(Z mod side)^dim`` with nearest-neighbour (L1 = 1) adjacency.

    Sites are numbered in C order of their coordinates.
    """

    dim: int
    side: int

    def __post_init__(self):
        if self.dim < 1 or self.side < 3:
            raise ParameterError(f"need dim >= 1 and side >= 3, got {self.dim}, {self.side}")

    @property
    def shape(self):
        return (self.side,) * self.dim

    @property
    def n_sites(self):
        return self.side**self.dim

    @property
    def neighbors(self):
        return _lattice_neighbors(self.dim, self.side, True)

    @cached_property
    def displacements(self):
        disp = np.zeros((2 * self.dim, self.dim), dtype=np.int64)
        for a in range(self.dim):
            disp[2 * a, a] = 1
            disp[2 * a + 1, a] = -1
        return disp


@dataclass(frozen=True)
class Box:
    """Open (non-periodic) cube of side ``side``."""

    dim: int
    side: int

    @property
    def shape(self):
        return (self.side,) * self.dim

    @property
    def n_sites(self):
        return self.side**self.dim

    @property
    def neighbors(self):
        return _lattice_neighbors(self.dim, self.side, False)

    @property
    def center(self):
        return int(np.ravel_multi_index((self.side // 2,) * self.dim, self.shape))

    def boundary_mask(self):
        coords = np.indices(self.shape).reshape(self.dim, -1)
        return np.any((coords == 0) | (coords == self.side - 1), axis=0)


@dataclass(frozen=True, eq=False)
class OccupancyField:
    topology: object
    occupied: np.ndarray

    def __post_init__(self):
        occ = np.asarray(self.occupied, dtype=bool).ravel()
        if occ.size != self.topology.n_sites:
            raise ParameterError(
                f"field has {occ.size} sites, topology has {self.topology.n_sites}"
            )
        object.__setattr__(self, "occupied", occ)

    @property
    def density(self):
        return float(self.occupied.mean()) if self.occupied.size else 0.0


@dataclass(frozen=True, eq=False)
class ClusterLabeling:
    """``label`` is the smallest site id of each site's cluster (-1 if vacant);
    ``index`` numbers clusters 0..n_clusters-1 in the same order and
    ``sizes[index]`` is the size."""

    label: np.ndarray
    index: np.ndarray
    sizes: np.ndarray

    @property
    def n_clusters(self):
        return int(self.sizes.size)

    def site_sizes(self):
        """Size of each site's cluster, 0 for vacant sites."""
        out = np.zeros(self.index.size, dtype=np.int64)
        occ = self.index >= 0
        out[occ] = self.sizes[self.index[occ]]
        return out


def label_clusters(field):
    occ = field.occupied
    label, index, sizes = _kernels.label_uf(occ, field.topology.neighbors)
    return ClusterLabeling(label, index, sizes)


def wrapping_mask(field):
    """Per-site flag: the site's cluster winds around the torus."""
    topo = field.topology
    if not isinstance(topo, Torus):
        raise ParameterError("wrapping is only defined on a torus")
    index, wraps = _kernels.wrap_bfs(field.occupied, topo.neighbors, topo.displacements)
    out = np.zeros(index.size, dtype=bool)
    occ = index >= 0
    out[occ] = wraps[index[occ]]
    return out


# -- 3-tree cluster diameter --------------------------------------------

def _branch_heights(p, k):
    """Law of a binary branch's cluster height, restricted to the event that
    every path inside it has length at most ``k``.

    Entry ``h`` is P(height = h, internal paths <= k) for h = 0..k, height
    being counted from the branch's parent (vacant child -> 0).  Iterating
    ``k + 1`` levels makes every entry exact, since the event
    {height = h} only involves the first h + 1 levels.
    """
    hs = np.arange(k + 1)
    pair_ok = (hs[:, None] + hs[None, :]) <= k
    pair_max = np.maximum(hs[:, None], hs[None, :])
    b = np.zeros(k + 1)
    b[0] = 1.0
    for _ in range(k + 1):
        joint = np.outer(b, b) * pair_ok
        nxt = np.zeros(k + 2)
        np.add.at(nxt, pair_max.ravel() + 1, joint.ravel())
        b = p * nxt[: k + 1]
        b[0] = 1.0 - p
    return b


def tree_diameter_cdf(p, k):
    """P(diam(C0) <= k) for site percolation on the infinite 3-tree.

    A vacant origin counts as an empty cluster, so the result tends to
    ``(1 - p) + (p - theta_T(p))`` as ``k`` grows.
    """
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"p must lie in [0, 1], got {p!r}")
    if k < 0:
        raise ParameterError("k must be non-negative")
    k = int(k)
    b = _branch_heights(p, k)
    cum = np.cumsum(b)
    hs = np.arange(k + 1)
    s = hs[:, None] + hs[None, :]
    m = np.maximum(hs[:, None], hs[None, :])
    third = np.where(s <= k, cum[np.clip(k - m, 0, k)], 0.0)
    occupied = float(np.sum(np.outer(b, b) * third))
    return (1.0 - p) + p * occupied


# -- statistics ------------------------------------------------------------

@dataclass(frozen=True)
class ClusterStats:
    histogram: dict
    max_size: int
    mean_size: float

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["size", "count"])
            for size in sorted(self.histogram):
                w.writerow([size, self.histogram[size]])


def cluster_stats(labeling):
    """Size histogram, largest cluster and the mean cluster size seen from a
    uniformly chosen occupied site."""
    sizes = labeling.sizes
    hist = dict(sorted(Counter(sizes.tolist()).items()))
    if sizes.size == 0:
        return ClusterStats({}, 0, 0.0)
    mean = float(np.sum(sizes.astype(float) ** 2) / np.sum(sizes))
    return ClusterStats(hist, int(sizes.max()), mean)
