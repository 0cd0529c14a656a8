"""Limiting density map on the 3-regular tree.

One generation of the mean-field process moves the density ``p`` to
``h(p) = g(f(p))`` where ``f(p) = 1 - exp(-beta p)`` is the growth step and
``g`` keeps only occupied sites whose percolation cluster on the 3-tree is
finite.  Everything here is closed form except the preimage and fixed-point
solves, which use bisection so that the kink of ``h`` at ``a0`` never has to
be differentiated through.

All scalar functions also accept numpy arrays.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericalError, ParameterError

LOG2 = math.log(2.0)
BETA_C = 2.0 * LOG2
# upper end of the certified parameter range, and of the plotted scan
BETA_CERT_MAX = 2.48
BETA_SCAN_MAX = 2.6
# derivative bounds on (2 log 2, 2.48] x [a1, 1/2] \ {a0}
M1 = 2.48
M2 = 49.73
LIPSCHITZ = 917.6
CERT_SLACK = 1e-9
BISECT_TOL = 1e-13

LEFT, RIGHT = "left", "right"


def _as_density(p, name="p"):
    arr = np.asarray(p, dtype=float)
    if np.any(~((arr >= 0.0) & (arr <= 1.0))):
        raise DomainError(f"{name} must lie in [0, 1], got {p!r}")
    return arr


def _check_beta(beta):
    if not (beta > 0.0) or not math.isfinite(beta):
        raise ParameterError(f"beta must be positive and finite, got {beta!r}")


def _ret(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def growth_map(p, beta):
    """Density after a growth step: ``1 - exp(-beta p)``."""
    _check_beta(beta)
    p = _as_density(p)
    return _ret(-np.expm1(-beta * p))


def theta_binary(p):
    """Percolation probability of the root of the binary tree."""
    p = _as_density(p)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(p > 0.5, 2.0 - 1.0 / np.where(p > 0.5, p, 1.0), 0.0)
    return _ret(out)


def theta_tree(p):
    """Percolation probability of a vertex of the 3-tree."""
    p = _as_density(p)
    tb = np.asarray(theta_binary(p))
    return _ret(p * (1.0 - (1.0 - tb) ** 3))


def g_tree(p):
    """Probability that a vertex is occupied but in a finite cluster."""
    p = _as_density(p)
    with np.errstate(divide="ignore", invalid="ignore"):
        sup = (1.0 - p) ** 3 / np.where(p > 0.5, p, 1.0) ** 2
    return _ret(np.where(p > 0.5, sup, p))


def _h_right(p, beta):
    e = np.exp(-beta * p)
    with np.errstate(divide="ignore", invalid="ignore"):
        return e**3 / (1.0 - e) ** 2


def _h(p, beta, a0):
    # raw evaluation, no validation; beta may be an array broadcast with p
    return np.where(p <= a0, -np.expm1(-beta * p), _h_right(p, beta))


def _dh_left(p, beta):
    return beta * np.exp(-beta * p)


def _dh_right(p, beta):
    e = np.exp(-beta * p)
    with np.errstate(divide="ignore", invalid="ignore"):
        return e**3 / (1.0 - e) ** 3 * (-3.0 * beta + beta * e)


def h_tree(p, beta):
    """One growth-plus-epidemic update of the limiting density."""
    _check_beta(beta)
    p = _as_density(p)
    return _ret(_h(p, beta, LOG2 / beta))


def d_h_tree(p, beta, side=LEFT):
    """Derivative of ``h_tree`` in ``p``.

    ``side`` picks the one-sided derivative at the kink ``a0``; away from the
    kink both sides agree and the argument is ignored.
    """
    _check_beta(beta)
    if side not in (LEFT, RIGHT):
        raise ParameterError(f"side must be 'left' or 'right', got {side!r}")
    p = _as_density(p)
    a0 = LOG2 / beta
    use_left = (p < a0) | ((p == a0) & (side == LEFT))
    return _ret(np.where(use_left, _dh_left(p, beta), _dh_right(p, beta)))


@dataclass(frozen=True)
class TreeMap:
    """``h_tree`` with the offspring mean bound in."""

    beta: float

    def __post_init__(self):
        _check_beta(self.beta)

    def __call__(self, p):
        return h_tree(p, self.beta)

    def derivative(self, p, side=LEFT):
        return d_h_tree(p, self.beta, side)

    @property
    def a0(self):
        return LOG2 / self.beta


# -- solves ---------------------------------------------------------------

def _bisect(fun, lo, hi, target, increasing, tol=BISECT_TOL, max_iter=200):
    """Vectorised bisection for ``fun(x) = target`` on ``[lo, hi]``.

    ``fun`` must be monotone on every bracket; ``increasing`` gives the
    direction (scalar or per-element).  Elements with NaN brackets stay NaN.
    """
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    target = np.broadcast_to(np.asarray(target, dtype=float), lo.shape)
    increasing = np.broadcast_to(np.asarray(increasing, dtype=bool), lo.shape)
    for _ in range(max_iter):
        if np.all(~(hi - lo > tol)):
            break
        mid = 0.5 * (lo + hi)
        below = fun(mid) < target
        go_right = below == increasing
        lo = np.where(go_right, mid, lo)
        hi = np.where(go_right, hi, mid)
    return 0.5 * (lo + hi)


def f_inverse(y, beta):
    """Solve ``growth_map(x, beta) = y`` for ``x`` in [0, 1] by bisection."""
    _check_beta(beta)
    y = _as_density(y, "y")
    top = -math.expm1(-beta)
    if np.any(y > top):
        raise DomainError(f"y must not exceed f(1) = {top!r}")
    x = _bisect(lambda x: -np.expm1(-beta * x), np.zeros_like(y), np.ones_like(y), y, True)
    return _ret(x)


def growth_fixed_point(beta):
    """Largest solution of ``p = 1 - exp(-beta p)`` (0 when beta <= 1)."""
    _check_beta(beta)
    if beta <= 1.0:
        return 0.0
    # p - f(p) is negative just above 0 and positive at 1
    return float(_bisect(lambda x: x + np.expm1(-beta * x), np.array(1e-300), np.array(1.0), 0.0, True))


# -- landmarks and the period-three witness ---------------------------------

def _a1(beta):
    e = np.exp(-beta / 2.0)
    return e**3 / (1.0 - e) ** 2


def _c(beta):
    return np.log(beta / (beta - LOG2)) / beta


@dataclass(frozen=True)
class TreeMapLandmarks:
    beta: float
    a0: float
    a1: float
    c: float
    beta_c: float = BETA_C


def landmarks(beta):
    """Return ``a0``, ``a1 = h(1/2)`` and ``c = f^-1(a0)`` for ``beta >= 2 log 2``.

    ``c`` is found by bisection; the closed form is used as a cross-check.
    """
    _check_beta(beta)
    if beta < BETA_C:
        raise ParameterError(f"landmarks need beta >= 2 log 2 = {BETA_C!r}, got {beta!r}")
    a0 = LOG2 / beta
    c = f_inverse(a0, beta)
    if abs(c - _c(beta)) > 1e-11:
        raise NumericalError(f"bisection and closed form disagree for c at beta={beta}")
    return TreeMapLandmarks(beta=beta, a0=a0, a1=float(_a1(beta)), c=c)


@dataclass(frozen=True)
class WitnessCheck:
    holds: bool
    beta: float
    c: float
    h1: float
    h2: float
    h3: float

    @property
    def chain(self):
        return (self.h3, self.c, self.h1, self.h2)


def check_li_yorke_witness(beta):
    """Check ``h^3(c) <= c < h(c) < h^2(c)`` at ``c = f^-1(a0)``."""
    _check_beta(beta)
    if not beta > BETA_C:
        raise ParameterError(f"the witness needs beta > 2 log 2, got {beta!r}")
    lm = landmarks(beta)
    h1 = h_tree(lm.c, beta)
    h2 = h_tree(h1, beta)
    h3 = h_tree(h2, beta)
    return WitnessCheck(bool(h3 <= lm.c < h1 < h2), beta, lm.c, h1, h2, h3)


@dataclass(frozen=True)
class PhiCheck:
    beta: float
    phi1: float
    phi2: float
    holds: bool
    # 4 - beta/log 2, the separating line used for beta <= 1.75
    chord: float | None
    # beta^2 e^{-3beta/2} / (1 - e^{-beta/2})^2, compared to log 2 for beta >= 1.75
    tail_value: float | None
    tail_holds: bool | None


def verify_phi_inequality(beta):
    """Evaluate both sides of ``a1 <= c`` in exponential form.

    ``phi1 = exp(beta a1)`` and ``phi2 = beta / (beta - log 2)``; the
    inequality is non-strict so a 1e-12 slack is allowed.  Accepts the limit
    point ``beta = 2 log 2`` where both sides equal 2.
    """
    _check_beta(beta)
    if beta < BETA_C:
        raise ParameterError(f"phi inequality needs beta >= 2 log 2, got {beta!r}")
    sigma = beta * float(_a1(beta))
    phi1 = math.exp(sigma)
    phi2 = beta / (beta - LOG2)
    chord = 4.0 - beta / LOG2 if beta <= 1.75 else None
    tail = tail_ok = None
    if beta >= 1.75:
        tail = beta * sigma
        tail_ok = tail <= LOG2
    return PhiCheck(beta, phi1, phi2, phi1 <= phi2 + 1e-12, chord, tail, tail_ok)


# -- expansion of the third iterate ----------------------------------------

def derivative_bounds(beta_max=BETA_CERT_MAX):
    """Recompute ``(M1, M2, 3 M1^2 M2)`` from the bounding expressions.

    ``M1`` bounds ``|dh/dp|`` and ``M2`` bounds ``|d2h/dbeta dp|`` on
    ``[a1, 1/2] \\ {a0}`` for ``beta`` up to ``beta_max``.
    """
    right_end = math.exp(-3 * beta_max / 2) / 2.0**-3 * 4 * beta_max
    m1 = max(beta_max, right_end)
    m2 = 2.0**-1 / (1 - math.exp(-beta_max / 2)) ** 4 * (14 * beta_max / 2 + 8)
    return m1, m2, 3 * m1**2 * m2


def _one_sided(x, beta, side):
    a0 = LOG2 / beta
    use_left = (x < a0) | ((x == a0) & (side < 0))
    return np.where(use_left, _dh_left(x, beta), _dh_right(x, beta))


def _d3_one_sided(x, beta, side, level):
    """One-sided ``(h^3)'`` at ``x`` approached from ``side`` (-1 or +1).

    ``level`` is ``j`` when ``h^j(x) = a0`` exactly (``None`` otherwise); the
    orbit is snapped onto ``a0, 1/2, a1`` from that index on so the kink is
    hit exactly rather than up to bisection error.
    """
    a0 = LOG2 / beta
    xs = [x]
    for _ in range(2):
        xs.append(_h(xs[-1], beta, a0))
    if level is not None:
        snap = [a0, np.full_like(a0, 0.5), _a1(beta)]
        for i in range(level, 3):
            xs[i] = np.where(np.isnan(x), np.nan, snap[i - level])
    prod = np.ones_like(x)
    s = np.full_like(x, float(side))
    for xi in xs:
        d = _one_sided(xi, beta, s)
        prod = prod * d
        s = np.where(d > 0, s, -s)
    return np.abs(prod)


def _preimages(y, beta, a0, a1):
    """Preimages of ``y`` under ``h`` inside ``[a1, 1/2]``; NaN where absent."""
    half = np.full_like(beta, 0.5)
    # increasing piece [a1, a0] is f itself
    f_a1 = -np.expm1(-beta * a1)
    ok_left = (y >= f_a1) & (y <= 0.5)
    left = _bisect(lambda x: -np.expm1(-beta * x), a1, a0, y, True)
    # decreasing piece [a0, 1/2] runs from 1/2 down to a1
    ok_right = (y >= a1) & (y <= 0.5)
    right = _bisect(lambda x: _h_right(x, beta), a0, half, y, False)
    return np.where(ok_left, left, np.nan), np.where(ok_right, right, np.nan)


@dataclass(frozen=True)
class InfimumResult:
    beta: float
    infimum: float
    argmin: float
    breakpoints: tuple


def _d3_infimum_vec(betas):
    """Vectorised core of :func:`d3_infimum` over an array of parameters."""
    beta = np.asarray(betas, dtype=float)
    a0 = LOG2 / beta
    a1 = _a1(beta)
    levels = [[a0]]
    for _ in range(3):
        nxt = []
        for y in levels[-1]:
            nxt.extend(_preimages(y, beta, a0, a1))
        levels.append(nxt)
    cands, vals = [], []
    for j, pts in enumerate(levels):
        for x in pts:
            lvl = j if j < 3 else None
            for side in (-1, 1):
                cands.append(x)
                vals.append(_d3_one_sided(x, beta, side, lvl))
    cands.append(a1)
    vals.append(_d3_one_sided(a1, beta, 1, None))
    cands.append(np.full_like(beta, 0.5))
    vals.append(_d3_one_sided(np.full_like(beta, 0.5), beta, -1, None))
    cands = np.stack(cands)
    vals = np.where(np.isnan(cands), np.inf, np.stack(vals))
    idx = np.argmin(vals, axis=0)
    cols = np.arange(beta.size)
    inf = vals.reshape(len(vals), -1)[idx.ravel(), cols].reshape(beta.shape)
    arg = cands.reshape(len(cands), -1)[idx.ravel(), cols].reshape(beta.shape)
    return inf, arg, levels


def _check_cert_range(beta, beta_max):
    if not (BETA_C < beta <= beta_max):
        raise ParameterError(f"beta must lie in (2 log 2, {beta_max}], got {beta!r}")


def d3_infimum(beta, beta_max=BETA_CERT_MAX):
    """Infimum of ``|(h^3)'|`` over ``[a1, 1/2] \\ {a0}``.

    ``h`` is increasing then decreasing on ``[a1, 1/2]`` and ``h'`` is
    monotone on each piece, so the infimum is attained at a one-sided limit
    at a kink of ``h^3`` (a preimage of ``a0``) or at an endpoint.  Pass
    ``beta_max=BETA_SCAN_MAX`` to evaluate past the certified range.
    """
    _check_cert_range(beta, beta_max)
    inf, arg, levels = _d3_infimum_vec(np.array([beta]))
    bps = sorted({float(x[0]) for pts in levels for x in pts if not np.isnan(x[0])})
    if not np.isfinite(inf[0]):
        raise NumericalError(f"no finite candidate for the infimum at beta={beta}")
    return InfimumResult(beta, float(inf[0]), float(arg[0]), tuple(bps))


@dataclass
class CertificationReport:
    beta_lo: float
    beta_hi: float
    grid_step: float
    lipschitz_bound: float
    betas: np.ndarray = field(repr=False)
    infima: np.ndarray = field(repr=False)
    argmins: np.ndarray = field(repr=False)
    # None in scan-only mode (range extends past the certified window)
    certified: bool | None = None

    @property
    def per_beta_infimum(self):
        return list(zip(self.betas.tolist(), self.infima.tolist()))

    @property
    def min_infimum(self):
        return float(self.infima.min())

    @property
    def margin(self):
        """Guaranteed lower bound on ``|(h^3)'|`` between grid points."""
        gap = self.grid_step if self.betas.size > 1 else 0.0
        return self.min_infimum - self.lipschitz_bound * gap

    def to_dict(self):
        out = {
            "beta_lo": self.beta_lo,
            "beta_hi": self.beta_hi,
            "grid_step": self.grid_step,
            "lipschitz_bound": self.lipschitz_bound,
            "min_infimum": self.min_infimum,
            "margin": self.margin,
        }
        if self.certified is not None:
            out["certified"] = self.certified
        out["grid"] = [
            {"beta": b, "infimum": i, "argmin": a}
            for b, i, a in zip(self.betas.tolist(), self.infima.tolist(), self.argmins.tolist())
        ]
        return out

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def beta_grid(beta_lo, beta_hi, step):
    n = int(math.floor((beta_hi - beta_lo) / step * (1 + 1e-12))) + 1
    return beta_lo + step * np.arange(n)


def certify_expansion(beta_lo, beta_hi, grid_step, *, scan=False, chunk=20000, progress=None):
    """Evaluate the infimum on a parameter grid and apply the Lipschitz margin.

    Certified iff ``min infimum - LIPSCHITZ * grid_step > 1`` (with a 1e-9
    safety slack).  With ``scan=True`` the range may extend to 2.6 and the
    ``certified`` field is left unset.
    """
    beta_max = BETA_SCAN_MAX if scan else BETA_CERT_MAX
    _check_cert_range(beta_lo, beta_max)
    _check_cert_range(beta_hi, beta_max)
    if beta_hi < beta_lo:
        raise ParameterError("beta_hi must not be below beta_lo")
    if not grid_step > 0:
        raise ParameterError("grid_step must be positive")
    betas = beta_grid(beta_lo, beta_hi, grid_step)
    infs, args = np.empty_like(betas), np.empty_like(betas)
    for start in range(0, betas.size, chunk):
        sl = slice(start, start + chunk)
        infs[sl], args[sl], _ = _d3_infimum_vec(betas[sl])
        if progress is not None:
            progress(min(start + chunk, betas.size), betas.size)
    if not np.all(np.isfinite(infs)):
        raise NumericalError("infimum evaluation produced non-finite values")
    rep = CertificationReport(beta_lo, beta_hi, grid_step, LIPSCHITZ, betas, infs, args)
    if not scan:
        rep.certified = bool(rep.margin - CERT_SLACK > 1.0)
    return rep


def h_tree_alpha(p, beta, alpha):
    """Tree map with a fixed per-site infection probability ``alpha``.

    Finite clusters are also hit: the surviving density is
    ``E[(1 - alpha)^|C0|; origin occupied, |C0| < inf]`` on the 3-tree with
    occupation ``q = f(p)``.  A binary branch's cluster-size generating
    function ``G`` solves ``G = (1 - q) + q z G^2`` (minimal root), so the
    result is ``q z G(z)^3`` at ``z = 1 - alpha``.  Reduces to ``h_tree`` at
    ``alpha = 0``.
    """
    _check_beta(beta)
    if not 0.0 <= alpha <= 1.0:
        raise ParameterError(f"alpha must lie in [0, 1], got {alpha!r}")
    p = _as_density(p)
    q = -np.expm1(-beta * p)
    z = 1.0 - alpha
    disc = np.sqrt(np.maximum(1.0 - 4.0 * q * (1.0 - q) * z, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        gen = np.where(q * z > 0, (1.0 - disc) / (2.0 * q * z), 1.0 - q)
    return _ret(q * z * gen**3)
