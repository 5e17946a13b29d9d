"""Two-parameter martingale-difference arrays.

Arrays hold the scaled differences xi[i, j, k] = eps[i, j, k] / n with
|eps| = 1, so the boundedness condition max n |xi| <= C holds with C = 1 and
the squared normalization n^2 xi^2 = 1 holds entrywise.  Vector components
k = 1..d come from independent sub-streams.

Note the normalization: the literal first-moment reading "n xi -> 1" is
incompatible with centered differences; what the partial-sum normalization
sum xi^2 -> t*s actually forces is n^2 xi^2 -> 1, and that squared reading
is what the generators and checks implement.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import ConfigError, DomainError
from .grids import floor_index

GENERATORS = ("rademacher", "product_sign")

# slack for n * (1/n) style round-trips; exact for power-of-two n
_REL_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class MDArray:
    """An n x n array of d-vector martingale differences with provenance."""

    n: int
    d: int
    xi: np.ndarray  # (n, n, d)
    generator: str
    seed: int
    C_bound: float

    def __post_init__(self):
        if self.xi.shape != (self.n, self.n, self.d):
            raise DomainError(f"xi shape {self.xi.shape} != ({self.n}, {self.n}, {self.d})")
        self.xi.setflags(write=False)


def _validate_size(n, d):
    if n < 1 or d < 1:
        raise DomainError(f"need n >= 1 and d >= 1, got n={n}, d={d}")


def gen_rademacher(n, d, seed):
    """xi[i,j,k] = eps/n with eps i.i.d. uniform on {-1, +1}; C = 1."""
    _validate_size(n, d)
    xi = np.empty((n, n, d))
    for k in range(d):
        g = rng.stream(seed, rng.DOMAIN_RADEMACHER, k)
        xi[:, :, k] = rng.signs(g, (n, n)) / n
    return MDArray(n=n, d=d, xi=xi, generator="rademacher", seed=seed, C_bound=1.0)


def gen_product_sign(n, d, seed):
    """xi[i,j,k] = r[i,k] * c[j,k] / n with independent row/column signs.

    A dependent, rank-one example: entries are centered given the boundary
    row/column sign fields, and both the boundedness and normalization
    conditions hold with C = 1.
    """
    _validate_size(n, d)
    xi = np.empty((n, n, d))
    for k in range(d):
        r = rng.signs(rng.stream(seed, rng.DOMAIN_PRODUCT_ROW, k), n)
        c = rng.signs(rng.stream(seed, rng.DOMAIN_PRODUCT_COL, k), n)
        xi[:, :, k] = np.outer(r, c) / n
    return MDArray(n=n, d=d, xi=xi, generator="product_sign", seed=seed, C_bound=1.0)


def generate(kind, n, d, seed):
    if kind == "rademacher":
        return gen_rademacher(n, d, seed)
    if kind == "product_sign":
        return gen_product_sign(n, d, seed)
    raise ConfigError(f"unknown generator {kind!r}; expected one of {GENERATORS}")


@dataclass
class ConditionReport:
    """Outcome of the boundedness / normalization / structure checks."""

    n: int
    d: int
    C_bound: float
    max_scaled_abs: float  # max over entries of n |xi|
    bound_ok: bool
    violations: list = field(default_factory=list)  # (i, j, k), 1-based, capped
    min_scaled_square: float = np.nan  # extremes of n^2 xi^2
    max_scaled_square: float = np.nan
    normalization_ok: bool = False
    martingale: str = "unverified"  # "certified" for the built-in generators

    @property
    def all_ok(self):
        return self.bound_ok and self.normalization_ok


def check_conditions(arr, max_violations=16):
    """Check the boundedness and squared-normalization conditions.

    The martingale-difference structure itself is certified by construction
    for the built-in generators; for externally loaded arrays it is reported
    as "unverified" (conditional expectations are not estimable from a single
    array).  Violations are reported, never raised.
    """
    scaled = arr.n * np.abs(arr.xi)
    max_scaled = float(scaled.max())
    bound_ok = max_scaled <= arr.C_bound * (1.0 + _REL_EPS)
    violations = []
    if not bound_ok:
        idx = np.argwhere(scaled > arr.C_bound * (1.0 + _REL_EPS))
        for i, j, k in idx[:max_violations]:
            violations.append((int(i) + 1, int(j) + 1, int(k) + 1))
    sq = scaled * scaled
    lo, hi = float(sq.min()), float(sq.max())
    normalization_ok = abs(lo - 1.0) <= _REL_EPS and abs(hi - 1.0) <= _REL_EPS
    return ConditionReport(
        n=arr.n,
        d=arr.d,
        C_bound=arr.C_bound,
        max_scaled_abs=max_scaled,
        bound_ok=bound_ok,
        violations=violations,
        min_scaled_square=lo,
        max_scaled_square=hi,
        normalization_ok=normalization_ok,
        martingale="certified" if arr.generator in GENERATORS else "unverified",
    )


def partial_sum_field(arr, t, s):
    """B_n(t, s): the partial sum of eta over i <= floor(n t), j <= floor(n s)."""
    if not (0 <= t <= 1 and 0 <= s <= 1):
        raise DomainError(f"(t, s) = ({t}, {s}) outside the unit square")
    it = floor_index(arr.n, t)
    js = floor_index(arr.n, s)
    if it == 0 or js == 0:
        return np.zeros(arr.d)
    return arr.xi[:it, :js, :].sum(axis=(0, 1))


def save_csv(arr, path):
    """Write the array as `i,j,k,value` rows (1-based indices, 17 significant digits)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "j", "k", "value"])
        for i in range(arr.n):
            for j in range(arr.n):
                for k in range(arr.d):
                    writer.writerow([i + 1, j + 1, k + 1, f"{arr.xi[i, j, k]:.17g}"])


def load_csv(path, C_bound=1.0):
    """Read an `i,j,k,value` file back into an MDArray marked external.

    The conditions can be checked afterwards; the martingale structure
    cannot, and the resulting array reports it unverified.
    """
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["i", "j", "k", "value"]:
            raise ConfigError(f"unexpected CSV header {header!r} in {path}")
        for line in reader:
            if not line:
                continue
            i, j, k, value = line
            rows.append((int(i), int(j), int(k), float(value)))
    if not rows:
        raise ConfigError(f"empty martingale-difference CSV: {path}")
    n = max(max(r[0], r[1]) for r in rows)
    d = max(r[2] for r in rows)
    if len(rows) != n * n * d:
        raise ConfigError(f"{path}: got {len(rows)} rows, expected {n * n * d} for n={n}, d={d}")
    xi = np.zeros((n, n, d))
    for i, j, k, value in rows:
        xi[i - 1, j - 1, k - 1] = value
    return MDArray(n=n, d=d, xi=xi, generator="external", seed=0, C_bound=C_bound)
