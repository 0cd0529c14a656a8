"""The growth/epidemic particle system.

Each generation every occupied site dies after sending a Poisson(beta)
number of offspring to uniform sites of its growth neighbourhood; then
infections land independently with probability ``alpha`` per site and wipe
out every occupied cluster they hit.

Both halves are sampled in thinned form.  Under Poisson offspring a site
receives a Poisson number of births with mean ``beta`` times the occupied
fraction of the neighbourhoods that contain it, so it is occupied after
growth with probability ``1 - exp(-beta * d)``.  A cluster of size ``s``
survives the epidemic with probability ``(1 - alpha)^s``.  Both are exact in
distribution and cost O(sites) per step.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import _kernels, rng
from .errors import ConfigError, DomainError, ParameterError
from .graphs import generate_3_regular
from .percolation import OccupancyField, Torus, label_clusters


@dataclass(frozen=True)
class ModelConfig:
    topology: str = "torus"  # "rrg" or "torus"
    n_nodes: int = 0  # rrg size
    dim: int = 2
    side: int = 0
    beta: float = 2.25
    dispersal: str = "global"  # "global" or "radius"
    radius: int = 0
    alpha: float = 0.01
    range_cap: int | None = None
    seed: int = 0
    record_half: bool = False

    def __post_init__(self):
        if self.topology not in ("rrg", "torus"):
            raise ConfigError(f"unknown topology {self.topology!r}")
        if self.dispersal not in ("global", "radius"):
            raise ConfigError(f"unknown dispersal {self.dispersal!r}")
        if not self.beta > 0:
            raise ConfigError("beta must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must lie in [0, 1]")
        if self.topology == "rrg":
            if self.dispersal != "global":
                raise ConfigError("radius dispersal requires a torus")
            if self.n_nodes < 4 or self.n_nodes % 2:
                raise ConfigError("rrg needs an even n_nodes >= 4")
        else:
            if self.dim < 1 or self.side < 3:
                raise ConfigError("torus needs dim >= 1 and side >= 3")
            if self.dispersal == "radius" and not 1 <= self.radius < self.side / 2:
                raise ConfigError("radius must satisfy 1 <= r < side/2")
        if self.range_cap is not None and self.range_cap < 0:
            raise ConfigError("range_cap must be non-negative")

    @classmethod
    def from_mapping(cls, values):
        """Build from string-valued ``key=value`` pairs (unknown keys rejected)."""
        types = {f.name: f.type for f in fields(cls)}
        kw = {}
        for key, raw in values.items():
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            raw = str(raw).strip()
            t = types[key]
            if key == "range_cap":
                kw[key] = None if raw.lower() in ("", "none") else int(raw)
            elif t == "bool":
                kw[key] = raw.lower() in ("1", "true", "yes", "on")
            elif t == "int":
                kw[key] = int(raw)
            elif t == "float":
                kw[key] = float(raw)
            else:
                kw[key] = raw
        return cls(**kw)

    def build_topology(self):
        if self.topology == "rrg":
            return generate_3_regular(self.n_nodes, self.seed)
        return Torus(self.dim, self.side)


# -- local densities ------------------------------------------------------

def window_counts(occupied, radius):
    """Occupied count of every sup-norm window of ``radius`` on a torus.

    Separable periodic prefix sums, exact in integer arithmetic.
    """
    arr = np.asarray(occupied, dtype=np.int32)
    side = arr.shape[0]
    if 2 * radius + 1 > side:
        raise ParameterError("window wider than the torus")
    w = 2 * radius + 1
    for axis in range(arr.ndim):
        padded = np.concatenate(
            [np.take(arr, range(side - radius, side), axis=axis), arr,
             np.take(arr, range(radius), axis=axis)], axis=axis)
        cs = np.cumsum(padded, axis=axis, dtype=np.int32)
        zero = np.zeros_like(np.take(cs, [0], axis=axis))
        cs = np.concatenate([zero, cs], axis=axis)
        arr = np.take(cs, range(w, w + side), axis=axis) - np.take(cs, range(side), axis=axis)
    return arr


@dataclass(frozen=True, eq=False)
class DensityField:
    values: np.ndarray  # d(i) over the full (2r+1)^d window
    counts: np.ndarray
    radius: int


def density_field(state, radius):
    topo = state.topology
    if not isinstance(topo, Torus):
        raise ParameterError("density fields need a torus")
    if not 0 <= radius < topo.side / 2:
        raise ParameterError("radius must satisfy 0 <= r < side/2")
    counts = window_counts(state.occupied.reshape(topo.shape), radius)
    vol = (2 * radius + 1) ** topo.dim
    return DensityField(counts / vol, counts, radius)


def good_site_fraction(field, target, eps):
    """Fraction of sites whose local density is within ``eps`` of ``target``."""
    if not eps > 0:
        raise ParameterError("eps must be positive")
    return float(np.mean(np.abs(field.values - target) < eps))


# -- one generation -----------------------------------------------------

def growth_probability(state, config):
    """Per-site probability of being occupied after the growth step."""
    occ = state.occupied
    if config.dispersal == "global":
        return np.full(occ.size, -np.expm1(-config.beta * occ.mean()))
    topo = state.topology
    r = config.radius
    counts = window_counts(occ.reshape(topo.shape), r).ravel()
    # punctured neighbourhood: a site never sends offspring to itself
    vol = (2 * r + 1) ** topo.dim - 1
    local = (counts - occ) / vol
    return -np.expm1(-config.beta * local)


def growth_step(state, config, step=0):
    prob = growth_probability(state, config)
    u = rng.stream(config.seed, rng.GROWTH, step).random(prob.size)
    return OccupancyField(state.topology, u < prob)


def epidemic_from_landings(state, landing, range_cap=None):
    """Deterministic epidemic given per-site landings.

    Without a cap every cluster containing an occupied landing site is
    removed.  With ``range_cap = l`` only sites within ``l`` steps (through
    occupied sites) of a landing are removed.
    """
    occ = state.occupied
    landing = np.asarray(landing, dtype=bool)
    if range_cap is None:
        lab = label_clusters(state)
        hit = np.zeros(lab.n_clusters, dtype=bool)
        hit[lab.index[occ & landing]] = True
        dead = np.zeros(occ.size, dtype=bool)
        dead[occ] = hit[lab.index[occ]]
    else:
        dead = _kernels.capped_kill(occ, state.topology.neighbors, landing, int(range_cap))
    return OccupancyField(state.topology, occ & ~dead)


def epidemic_step(state, config, step=0):
    gen = rng.stream(config.seed, rng.EPIDEMIC, step)
    if config.alpha == 0.0:
        return OccupancyField(state.topology, state.occupied.copy())
    if config.alpha == 1.0:
        return OccupancyField(state.topology, np.zeros_like(state.occupied))
    if config.range_cap is not None:
        landing = gen.random(state.occupied.size) < config.alpha
        return epidemic_from_landings(state, landing, config.range_cap)
    lab = label_clusters(state)
    # a cluster dies iff at least one of its sites receives an infection
    die = gen.random(lab.n_clusters) < -np.expm1(lab.sizes * np.log1p(-config.alpha))
    occ = state.occupied.copy()
    occ[occ] = ~die[lab.index[occ]]
    return OccupancyField(state.topology, occ)


# -- trajectories -------------------------------------------------------

@dataclass(eq=False)
class TrajectoryRecord:
    densities: np.ndarray
    config: ModelConfig
    p0: float
    half_densities: np.ndarray | None = None
    final_state: OccupancyField | None = field(default=None, repr=False)

    @property
    def seed(self):
        return self.config.seed

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            half = self.half_densities is not None
            w.writerow(["k", "rho"] + (["rho_half"] if half else []))
            for k, rho in enumerate(self.densities):
                row = [k, repr(float(rho))]
                if half:
                    row.append("" if k == 0 else repr(float(self.half_densities[k - 1])))
                w.writerow(row)

    def metadata(self):
        return {"config": asdict(self.config), "p0": self.p0,
                "k_max": len(self.densities) - 1}

    def write_metadata(self, path):
        with open(path, "w") as fh:
            json.dump(self.metadata(), fh, indent=2, sort_keys=True)


def initial_state(topology, p0, seed):
    if not 0.0 <= p0 <= 1.0:
        raise DomainError(f"p0 must lie in [0, 1], got {p0!r}")
    u = rng.stream(seed, rng.INIT).random(topology.n_sites)
    return OccupancyField(topology, u < p0)


def run(config, p0, k_max, topology=None, callback=None):
    """Simulate ``k_max`` generations from an i.i.d. Bernoulli(p0) start.

    ``callback(k, state)`` is called with the state after each generation.
    """
    if k_max < 0:
        raise ParameterError("k_max must be non-negative")
    topo = topology if topology is not None else config.build_topology()
    state = initial_state(topo, p0, config.seed)
    dens = np.empty(k_max + 1)
    half = np.empty(k_max) if config.record_half else None
    dens[0] = state.density
    for k in range(k_max):
        grown = growth_step(state, config, k)
        if half is not None:
            half[k] = grown.density
        state = epidemic_step(grown, config, k)
        dens[k + 1] = state.density
        if callback is not None:
            callback(k + 1, state)
    return TrajectoryRecord(dens, config, p0, half, state)


# -- snapshots ----------------------------------------------------------

def snapshot(state):
    """Occupancy of a two-dimensional torus as a ``uint8`` grid."""
    topo = state.topology
    if not isinstance(topo, Torus) or topo.dim != 2:
        raise ParameterError("snapshots need a two-dimensional torus")
    return state.occupied.reshape(topo.shape).astype(np.uint8)


def write_pgm(grid, path):
    """Plain PGM (P2) with maxval 1."""
    h, w = grid.shape
    with open(path, "w") as fh:
        fh.write(f"P2\n{w} {h}\n1\n")
        for row in grid:
            fh.write(" ".join(map(str, row.tolist())) + "\n")


def write_rle(grid, path):
    """One line per row of ``value:run`` tokens, after a ``w h`` header."""
    h, w = grid.shape
    with open(path, "w") as fh:
        fh.write(f"{w} {h}\n")
        for row in grid:
            change = np.flatnonzero(np.diff(row)) + 1
            starts = np.concatenate([[0], change])
            runs = np.diff(np.concatenate([starts, [w]]))
            fh.write(" ".join(f"{row[s]}:{n}" for s, n in zip(starts, runs)) + "\n")


def read_rle(path):
    with open(path) as fh:
        w, h = map(int, fh.readline().split())
        rows = []
        for line in fh:
            vals = []
            for tok in line.split():
                v, n = tok.split(":")
                vals.extend([int(v)] * int(n))
            rows.append(vals)
    grid = np.array(rows, dtype=np.uint8)
    assert grid.shape == (h, w)
    return grid
