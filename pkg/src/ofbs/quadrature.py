"""Gauss-Legendre rules with geometric edge refinement.

The kernels integrated here are continuous but have algebraic behavior
(t - u)^a with a in (0, 1/4) at a support edge, where derivatives blow up.
A fixed-order rule on panels shrinking geometrically (ratio 1/2) toward the
edge converges geometrically in the panel count for that class, so all
refined rules below are composite Gauss-Legendre over such panels.
"""

from functools import lru_cache

import numpy as np

from .errors import DomainError


@lru_cache(maxsize=None)
def gauss_legendre(order):
    if not 2 <= order <= 128:
        raise DomainError(f"Gauss-Legendre order must be in [2, 128], got {order}")
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def panel_rule(lo, hi, order):
    """Single Gauss-Legendre panel on [lo, hi]."""
    x, w = gauss_legendre(order)
    h = 0.5 * (hi - lo)
    return lo + h * (x + 1.0), w * h


def depth_for_tol(tol):
    """Panel count giving a 2^-depth tail below tol, clamped to [12, 48]."""
    return int(min(48, max(12, np.ceil(np.log2(1.0 / tol)) + 6)))


def _breakpoints(lo, hi, depth, toward_hi):
    w = hi - lo
    cuts = hi - w * 0.5 ** np.arange(1, depth + 1) if toward_hi else lo + w * 0.5 ** np.arange(depth, 0, -1)
    return np.concatenate(([lo], cuts, [hi]))


def edge_refined_rule(lo, hi, order, depth, edge="hi"):
    """Composite rule on [lo, hi] with panels shrinking toward one edge."""
    if hi <= lo:
        return np.empty(0), np.empty(0)
    if edge not in ("lo", "hi"):
        raise DomainError(f"edge must be 'lo' or 'hi', got {edge!r}")
    brk = _breakpoints(lo, hi, depth, edge == "hi")
    xs, ws = [], []
    for a, b in zip(brk[:-1], brk[1:]):
        x, w = panel_rule(a, b, order)
        xs.append(x)
        ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)


def two_sided_rule(lo, hi, order, depth):
    """Composite rule refined toward both edges (split at the midpoint)."""
    if hi <= lo:
        return np.empty(0), np.empty(0)
    mid = 0.5 * (lo + hi)
    x1, w1 = edge_refined_rule(lo, mid, order, depth, edge="lo")
    x2, w2 = edge_refined_rule(mid, hi, order, depth, edge="hi")
    return np.concatenate([x1, x2]), np.concatenate([w1, w2])


def kinked_rule(breaks, order, depth):
    """Composite rule over consecutive intervals of `breaks`, refined toward
    every interior/exterior breakpoint (used when the integrand has several
    support edges inside the domain)."""
    breaks = np.unique(np.asarray(breaks, dtype=float))
    xs, ws = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        x, w = two_sided_rule(a, b, order, depth)
        xs.append(x)
        ws.append(w)
    if not xs:
        return np.empty(0), np.empty(0)
    return np.concatenate(xs), np.concatenate(ws)
