"""Orbits and bifurcation scans for one-dimensional density maps.

A map is any callable ``p -> p'`` on [0, 1]; ``TreeMap`` and ``LatticeMap``
are the two used in practice.  Map families for scans are callables
``beta -> map``.
"""
from __future__ import annotations

import numpy as np

from .errors import DomainError, ParameterError


def orbit(h, p0, k_max):
    """Return ``(p0, h(p0), ..., h^k_max(p0))`` as a float array."""
    if not 0.0 <= p0 <= 1.0:
        raise DomainError(f"p0 must lie in [0, 1], got {p0!r}")
    if k_max < 0:
        raise ParameterError("k_max must be non-negative")
    out = np.empty(k_max + 1)
    out[0] = p = p0
    for k in range(1, k_max + 1):
        p = float(h(p))
        out[k] = p
    return out


def bifurcation_scan(family, beta_grid, p0=0.1, burn_in=500, keep=50):
    """Kept orbit tails for each parameter value.

    Returns an array of shape ``(len(beta_grid) * keep, 2)`` with columns
    ``beta, density``, ordered by grid index then iterate index.
    """
    if burn_in < 0 or keep < 1:
        raise ParameterError("need burn_in >= 0 and keep >= 1")
    rows = []
    for beta in beta_grid:
        tail = orbit(family(float(beta)), p0, burn_in + keep)[burn_in + 1:]
        rows.append(np.column_stack([np.full(keep, beta), tail]))
    return np.concatenate(rows) if rows else np.empty((0, 2))
