"""Random 3-regular graphs and their local tree structure."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import _kernels, rng
from .errors import ParameterError, RetryBudgetError

log = logging.getLogger(__name__)

DEGREE = 3


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph as a ``(n, max_degree)`` neighbour table,
    ``-1`` padded.  Generated graphs are 3-regular and connected."""

    adjacency: np.ndarray
    seed: int | None = None
    attempts: int = 1

    @property
    def n_nodes(self):
        return int(self.adjacency.shape[0])

    # percolation code treats graphs as topologies
    @property
    def n_sites(self):
        return self.n_nodes

    @property
    def neighbors(self):
        return self.adjacency

    def degrees(self):
        return np.sum(self.adjacency >= 0, axis=1)

    def edges(self):
        """Edge list ``(m, 2)`` with ``u < v``, sorted."""
        u = np.repeat(np.arange(self.n_nodes), self.adjacency.shape[1])
        v = self.adjacency.ravel()
        keep = (v >= 0) & (u < v)
        e = np.column_stack([u[keep], v[keep]])
        return e[np.lexsort((e[:, 1], e[:, 0]))]

    @classmethod
    def from_edges(cls, n, edges, seed=None, attempts=1, max_degree=DEGREE):
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        adj = np.full((n, max_degree), -1, dtype=np.int64)
        fill = np.zeros(n, dtype=np.int64)
        for u, v in edges:
            for a, b in ((u, v), (v, u)):
                if fill[a] >= max_degree:
                    raise ParameterError(f"node {a} exceeds degree {max_degree}")
                adj[a, fill[a]] = b
                fill[a] += 1
        return cls(adj, seed, attempts)

    def write_edgelist(self, path):
        with open(path, "w") as fh:
            fh.write(f"n={self.n_nodes} d={DEGREE} seed={self.seed}\n")
            for u, v in self.edges():
                fh.write(f"{u} {v}\n")

    @classmethod
    def read_edgelist(cls, path):
        with open(path) as fh:
            header = dict(tok.split("=", 1) for tok in fh.readline().split())
            edges = [tuple(map(int, line.split())) for line in fh if line.strip()]
        seed = None if header.get("seed") in (None, "None") else int(header["seed"])
        return cls.from_edges(int(header["n"]), edges, seed=seed, max_degree=int(header["d"]))


def check_graph(g, degree=DEGREE):
    """Raise ``ValueError`` unless ``g`` is simple, symmetric, ``degree``-regular
    and connected."""
    adj = g.adjacency
    n = g.n_nodes
    if np.any(g.degrees() != degree):
        raise ValueError("graph is not regular")
    if np.any(adj == np.arange(n)[:, None]):
        raise ValueError("self-loop")
    srt = np.sort(adj, axis=1)
    if np.any(srt[:, 1:] == srt[:, :-1]):
        raise ValueError("parallel edge")
    for c in range(adj.shape[1]):
        back = adj[adj[:, c]]
        if not np.all(np.any(back == np.arange(n)[:, None], axis=1)):
            raise ValueError("adjacency is not symmetric")
    if not is_connected(g):
        raise ValueError("graph is not connected")


def is_connected(g):
    _, _, sizes = _kernels.label_uf(np.ones(g.n_nodes, dtype=bool), g.adjacency)
    return sizes.size == 1


def _pairing(n, gen):
    stubs = np.repeat(np.arange(n, dtype=np.int64), DEGREE)
    gen.shuffle(stubs)
    pairs = stubs.reshape(-1, 2)
    return np.sort(pairs, axis=1)


def _is_simple(pairs):
    if np.any(pairs[:, 0] == pairs[:, 1]):
        return False
    key = pairs[:, 0] * (pairs.max() + 1) + pairs[:, 1]
    return np.unique(key).size == key.size


def generate_3_regular(n, seed, max_attempts=1000):
    """Configuration-model sample conditioned on simple and connected.

    Half-edges are paired uniformly and the whole pairing is rejected on a
    self-loop, a repeated edge or a disconnected result, so accepted graphs
    are uniform over connected simple 3-regular graphs.
    """
    if n < 4 or n % 2:
        raise ParameterError(f"n must be even and >= 4, got {n!r}")
    gen = rng.stream(seed, rng.GRAPH)
    for attempt in range(1, max_attempts + 1):
        pairs = _pairing(n, gen)
        if not _is_simple(pairs):
            continue
        g = Graph.from_edges(n, pairs, seed=seed, attempts=attempt)
        if is_connected(g):
            log.debug("3-regular graph n=%d accepted after %d attempts", n, attempt)
            return g
    raise RetryBudgetError(f"no simple connected pairing in {max_attempts} attempts", max_attempts)


def ball(g, i, radius):
    """Sorted node ids within graph distance ``radius`` of ``i``."""
    if not 0 <= i < g.n_nodes:
        raise IndexError(f"node {i} out of range")
    if radius < 0:
        raise ParameterError("radius must be non-negative")
    return _kernels.ball_nodes(g.adjacency, int(i), int(radius))


def local_tree_fraction(g, radius):
    """Fraction of nodes whose radius-ball induces a cycle-free subgraph."""
    if radius < 1:
        raise ParameterError("radius must be >= 1")
    return float(np.mean(_kernels.tree_ball_flags(g.adjacency, int(radius))))
