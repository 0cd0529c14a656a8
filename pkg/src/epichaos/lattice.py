"""Limiting density map on Z^d built from a tabulated percolation function.

There is no closed form for ``theta_L``, so it is estimated by Monte Carlo
on finite systems and stored in a :class:`ThetaTable`.  The map
``h_L(p) = f(p) - theta_L(f(p))`` then interpolates the table, with the
identity branch enforced below ``p_c``.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import isotonic_regression

from . import _kernels, rng
from .errors import DomainError, InsufficientDataError, ParameterError, TableError
from .percolation import Box, OccupancyField, Torus, label_clusters, wrapping_mask
from .tree import growth_map

log = logging.getLogger(__name__)

# site percolation thresholds, used when no estimate is supplied
P_C = {2: 0.5927, 3: 0.3116}
CRITERIA = ("wrapping", "boundary")


def default_p_c(dimension):
    try:
        return P_C[dimension]
    except KeyError:
        raise ParameterError(f"no default p_c for d={dimension}; pass one") from None


def beta_c(p_c):
    """Offspring mean at which the growth fixed point sits at ``p_c``."""
    return math.log(1.0 / (1.0 - p_c)) / p_c


# -- estimation -----------------------------------------------------------

def _wrapping_fraction(p, topo, gen):
    occ = gen.random(topo.n_sites) < p
    return float(wrapping_mask(OccupancyField(topo, occ)).mean())


def _center_reaches_boundary(p, box, boundary, gen):
    occ = gen.random(box.n_sites) < p
    return float(_kernels.reaches(occ, box.neighbors, box.center, boundary))


def estimate_theta(p, dimension, box_side, n_samples, criterion="wrapping", seed=0):
    """Monte Carlo proxy for P(|C0| = inf), returning ``(theta_hat, std_err)``.

    ``wrapping``: fraction of sites of a torus of side ``box_side`` whose
    cluster winds around it.  By translation invariance this is an unbiased
    estimate of the probability for a fixed site, using every site of each
    sample; the error is the standard error over samples.

    ``boundary``: indicator that the centre of an open box of side
    ``box_side`` is connected to the box boundary; binomial error.

    Sample ``s`` always uses the stream ``(seed, SAMPLE, s)``, so runs at
    different box sizes are coupled sample by sample.
    """
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"p must lie in [0, 1], got {p!r}")
    if dimension < 2 or box_side < 8 or n_samples < 1:
        raise ParameterError("need dimension >= 2, box_side >= 8, n_samples >= 1")
    if criterion not in CRITERIA:
        raise ParameterError(f"criterion must be one of {CRITERIA}, got {criterion!r}")
    if p == 0.0:
        return 0.0, 0.0
    if p == 1.0:
        return 1.0, 0.0
    if criterion == "wrapping":
        topo = Torus(dimension, box_side)
        vals = np.array([_wrapping_fraction(p, topo, rng.stream(seed, rng.SAMPLE, s))
                         for s in range(n_samples)])
        theta = float(vals.mean())
        if n_samples > 1:
            se = float(vals.std(ddof=1) / math.sqrt(n_samples))
        else:
            se = math.sqrt(theta * (1 - theta) / topo.n_sites)
        return theta, se
    box = Box(dimension, box_side)
    boundary = box.boundary_mask()
    hits = sum(_center_reaches_boundary(p, box, boundary, rng.stream(seed, rng.SAMPLE, s))
               for s in range(n_samples))
    theta = hits / n_samples
    return theta, math.sqrt(theta * (1 - theta) / n_samples)


# -- tables ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ThetaTable:
    dimension: int
    box_side: int
    p: np.ndarray
    theta_hat: np.ndarray
    std_err: np.ndarray
    n_samples: np.ndarray
    criterion: str = "wrapping"
    seed: int | None = None

    def __post_init__(self):
        for name in ("p", "theta_hat", "std_err", "n_samples"):
            object.__setattr__(self, name, np.asarray(getattr(self, name)))
        if self.p.size == 0:
            raise TableError("table has no entries")
        if not (self.p.size == self.theta_hat.size == self.std_err.size == self.n_samples.size):
            raise TableError("table columns differ in length")
        if np.any(np.diff(self.p) <= 0):
            raise TableError("table entries must be strictly sorted by p")

    def __len__(self):
        return int(self.p.size)

    def metadata(self):
        return {"dimension": self.dimension, "box_side": self.box_side,
                "criterion": self.criterion, "seed": self.seed}

    def write(self, path):
        """Write ``path`` (CSV) and ``path + '.json'`` (metadata)."""
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["p", "theta_hat", "std_err", "n_samples"])
            for row in zip(self.p, self.theta_hat, self.std_err, self.n_samples):
                w.writerow([repr(float(row[0])), repr(float(row[1])), repr(float(row[2])), int(row[3])])
        with open(str(path) + ".json", "w") as fh:
            json.dump(self.metadata(), fh, indent=2, sort_keys=True)

    @classmethod
    def read(cls, path):
        path = Path(path)
        with open(str(path) + ".json") as fh:
            meta = json.load(fh)
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        col = lambda k, t: np.array([t(r[k]) for r in rows])  # noqa: E731
        return cls(meta["dimension"], meta["box_side"], col("p", float), col("theta_hat", float),
                   col("std_err", float), col("n_samples", int), meta["criterion"], meta["seed"])


def default_grid(p_c, n_below=16, n_dense=20, n_above=27, dense_step=0.005):
    """64 points by default, step 0.005 on (p_c, p_c + 0.1] where theta is steep."""
    lower = np.linspace(0.0, p_c, n_below + 1)[:-1]
    dense = p_c + dense_step * np.arange(1, n_dense + 1)
    top = dense[-1]
    upper = np.linspace(top, 1.0, n_above + 1)[1:]
    return np.round(np.concatenate([lower, [p_c], dense, upper]), 12)


def build_theta_table(dimension, box_side, grid=None, n_samples=32, criterion="wrapping",
                      seed=0, p_c=None, progress=None):
    if grid is None:
        grid = default_grid(p_c if p_c is not None else default_p_c(dimension))
    grid = np.asarray(grid, dtype=float)
    est = np.empty((grid.size, 2))
    for i, p in enumerate(grid):
        est[i] = estimate_theta(p, dimension, box_side, n_samples, criterion, seed)
        if progress is not None:
            progress(i + 1, grid.size)
    return ThetaTable(dimension, box_side, grid, est[:, 0], est[:, 1],
                      np.full(grid.size, n_samples), criterion, seed)


def table_cache_key(dimension, box_side, grid, n_samples, criterion, seed):
    h = hashlib.sha256()
    h.update(json.dumps([dimension, box_side, n_samples, criterion, seed]).encode())
    h.update(np.asarray(grid, dtype=float).tobytes())
    return h.hexdigest()[:16]


def cached_theta_table(cache_dir, dimension, box_side, grid=None, n_samples=32,
                       criterion="wrapping", seed=0, p_c=None):
    """Load the table for these parameters from ``cache_dir`` or build and store it."""
    if grid is None:
        grid = default_grid(p_c if p_c is not None else default_p_c(dimension))
    key = table_cache_key(dimension, box_side, grid, n_samples, criterion, seed)
    path = Path(cache_dir) / f"theta_d{dimension}_L{box_side}_{key}.csv"
    if path.exists():
        return ThetaTable.read(path)
    log.info("building theta table %s", path.name)
    table = build_theta_table(dimension, box_side, grid, n_samples, criterion, seed)
    path.parent.mkdir(parents=True, exist_ok=True)
    table.write(path)
    return table


# -- the map --------------------------------------------------------------

class LatticeMap:
    """``h_L`` for offspring mean ``beta`` from a tabulated ``theta``."""

    def __init__(self, beta, table, p_c=None):
        if not beta > 0:
            raise ParameterError("beta must be positive")
        if len(table) == 0:
            raise TableError("empty table")
        self.beta = beta
        self.table = table
        self.p_c = default_p_c(table.dimension) if p_c is None else p_c
        above = table.p > self.p_c
        ps = table.p[above]
        th = table.theta_hat[above]
        if ps.size:
            th = isotonic_regression(th).x
        th = np.clip(th, 0.0, 1.0)
        kp = np.concatenate([[0.0, self.p_c], ps])
        kt = np.concatenate([[0.0, 0.0], th])
        if kp[-1] < 1.0:
            kp = np.append(kp, 1.0)
            kt = np.append(kt, 1.0)
        self._knots = (kp, np.maximum.accumulate(kt))

    @property
    def beta_c(self):
        return beta_c(self.p_c)

    def theta(self, p):
        kp, kt = self._knots
        p = np.asarray(p, dtype=float)
        out = np.where(p <= self.p_c, 0.0, np.minimum(np.interp(p, kp, kt), p))
        return float(out) if out.ndim == 0 else out

    def g(self, p):
        p = np.asarray(p, dtype=float)
        if np.any((p < 0) | (p > 1)):
            raise DomainError("p must lie in [0, 1]")
        out = p - self.theta(p)
        return float(out) if np.ndim(out) == 0 else out

    def __call__(self, p):
        return self.g(growth_map(p, self.beta))


@dataclass(frozen=True)
class LatticeMapParams:
    beta: float
    table: ThetaTable
    p_c_estimate: float

    @property
    def beta_c(self):
        return beta_c(self.p_c_estimate)

    def map(self):
        return LatticeMap(self.beta, self.table, self.p_c_estimate)


def g_lattice(p, table, p_c=None):
    return LatticeMap(1.0, table, p_c).g(p)


def h_lattice(p, params):
    return params.map()(p)


@dataclass(frozen=True)
class SlopeReport:
    points: list  # (p, forward-difference slope)
    steepening: bool  # slope nearest p_c exceeds the farthest one


def theta_slope_diagnostic(table, p_c=None):
    """Forward-difference slopes of the estimated theta just above ``p_c``."""
    p_c = default_p_c(table.dimension) if p_c is None else p_c
    above = table.p > p_c
    ps, th = table.p[above], table.theta_hat[above]
    if ps.size < 3:
        raise InsufficientDataError("need at least 3 table entries above p_c")
    slopes = np.diff(th) / np.diff(ps)
    pts = list(zip(ps[:-1].tolist(), slopes.tolist()))
    return SlopeReport(pts, bool(slopes[0] > slopes[-1]))


def finite_alpha_survival(q, alpha, dimension, side, n_samples=2, seed=0):
    """Density left after one epidemic with landing rate ``alpha`` on an
    i.i.d. density-``q`` torus: the mean of ``(1 - alpha)^|C(i)|`` over
    occupied sites ``i``, divided by the number of sites.

    Tends to ``q - theta_L(q)`` as ``alpha -> 0`` after ``side -> inf``; at
    fixed ``alpha`` it is the map a finite system actually follows.
    """
    if not 0.0 <= q <= 1.0:
        raise DomainError(f"q must lie in [0, 1], got {q!r}")
    if not 0.0 <= alpha <= 1.0:
        raise ParameterError("alpha must lie in [0, 1]")
    topo = Torus(dimension, side)
    vals = []
    for s in range(n_samples):
        occ = rng.stream(seed, rng.SAMPLE, s).random(topo.n_sites) < q
        sizes = label_clusters(OccupancyField(topo, occ)).site_sizes()
        vals.append(np.sum(np.power(1.0 - alpha, sizes[occ])) / topo.n_sites)
    return float(np.mean(vals))
