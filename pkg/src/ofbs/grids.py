"""Grid index helpers shared by the sum and field modules."""

import math

from .errors import DomainError

# absorbs representation noise in n*t when t is an exact grid fraction
_FLOOR_EPS = 1e-10


def floor_index(n, t):
    """floor(n * t), robust to floating representation of grid fractions."""
    return int(math.floor(n * t + _FLOOR_EPS))


def grid_values(m):
    """The evaluation grid {p/m : p = 0..m}."""
    return [p / m for p in range(m + 1)]


def grid_coordinate(m, t):
    """Index p with p/m == t, or raise for off-grid points."""
    p = t * m
    q = round(p)
    if abs(p - q) > _FLOOR_EPS * m or not 0 <= q <= m:
        raise DomainError(f"point {t} is not on the grid {{p/{m}}}")
    return int(q)
