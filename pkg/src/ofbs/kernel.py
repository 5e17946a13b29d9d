"""Tensor Riemann-Liouville kernel, cell integrals, and covariance quadrature.

The kernel of the limit field is K(t, s, u, v) = (t-u)_+^A (s-v)_+^A with
A = D/2 - I/4 and the convention that the power vanishes for u >= t (support
u < t, v < s).  Both axes carry the same exponent, so every integral in this
module factorizes into one-dimensional matrix integrals in u and v; the
quadrature below exploits that throughout.
"""

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, QuadratureError
from .grids import floor_index
from .matfun import OperatorExponent, power_table
from .quadrature import depth_for_tol, edge_refined_rule, panel_rule

_CELL_MAGIC = b"OFBSCELL"
_CELL_VERSION = 1
# order bump used to estimate quadrature error by comparing two rules
_ERR_ORDER_STEP = 6


@dataclass(frozen=True)
class KernelSpec:
    """Evaluation parameters for the kernel and its integrals.

    staircase snaps time arguments to floor(n t)/n before integrating, the
    form the discrete-sum identities are stated in.  tol drives the adaptive
    refinement depth and the convergence gate of :func:`cov_integral`.
    """

    exponent: OperatorExponent
    quad_order: int = 16
    staircase: bool = False
    tol: float = 1e-9

    def __post_init__(self):
        if not 2 <= self.quad_order <= 64:
            raise DomainError(f"quad_order must be in [2, 64], got {self.quad_order}")
        if not 0 < self.tol < 1:
            raise DomainError(f"tol must be in (0, 1), got {self.tol}")

    @property
    def depth(self):
        return depth_for_tol(self.tol)


@dataclass(eq=False)
class CovarianceTensor:
    """d x d covariance blocks for each ordered pair of points.

    provenance records how the blocks were produced: "quadrature" (limit
    field), "exact-sum" (second moment of the approximation), or
    "empirical" (Monte Carlo).  meta carries n / replicates / quad_order
    accordingly.
    """

    points: list
    blocks: np.ndarray  # (Q, Q, d, d)
    provenance: str
    meta: dict = field(default_factory=dict)

    @property
    def Q(self):
        return len(self.points)

    @property
    def d(self):
        return self.blocks.shape[-1]

    def block(self, k, l):
        return self.blocks[k, l]

    def assembled(self):
        """The full (Q d) x (Q d) covariance matrix."""
        Q, d = self.Q, self.d
        return self.blocks.transpose(0, 2, 1, 3).reshape(Q * d, Q * d)


def kernel_eval(t, s, u, v, spec):
    """K(t, s, u, v); the zero matrix when u >= t or v >= s."""
    A = spec.exponent.A
    du, dv = max(t - u, 0.0), max(s - v, 0.0)
    if du == 0.0 or dv == 0.0:
        return np.zeros_like(A)
    P = power_table(A, np.array([du, dv]))
    return P[0] @ P[1]


def _staircased(n, t, spec):
    return floor_index(n, t) / n if spec.staircase else t


def axis_cell_table(n, t, spec):
    """One-axis cell integrals U_i(t) = int over cell i of (t - u)_+^A du.

    Returns an (n, d, d) array; rows beyond floor(n t) are zero.  The cell
    touching the support edge gets the geometrically refined rule, interior
    cells a single Gauss-Legendre panel (their integrand is analytic with
    the nearest singularity at least one cell away).
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    t_eff = _staircased(n, t, spec)
    A = spec.exponent.A
    d = spec.exponent.d
    out = np.zeros((n, d, d))
    k = floor_index(n, t_eff)
    if k == 0:
        return out
    nodes, weights, sizes = [], [], []
    for i in range(1, k + 1):
        lo, hi = (i - 1) / n, i / n
        if i == k:
            x, w = edge_refined_rule(lo, hi, spec.quad_order, spec.depth, edge="hi")
        else:
            x, w = panel_rule(lo, hi, spec.quad_order)
        nodes.append(x)
        weights.append(w)
        sizes.append(x.size)
    x = np.concatenate(nodes)
    w = np.concatenate(weights)
    P = power_table(A, np.maximum(t_eff - x, 0.0))
    pos = 0
    for i, size in enumerate(sizes):
        out[i] = np.einsum("n,nab->ab", w[pos : pos + size], P[pos : pos + size])
        pos += size
    return out


def cell_integral(n, i, j, t, s, spec):
    """n^2 times the kernel integral over cell (i, j) of the n-grid.

    This is the matrix weight multiplying eta_{i,j} in the approximating
    field.  Indices must lie on the grid (1..n); cells entirely beyond the
    kernel support (i > floor(n t) or j > floor(n s)) integrate to the zero
    matrix.
    """
    if not (1 <= i <= n and 1 <= j <= n):
        raise DomainError(f"cell index ({i}, {j}) outside the n={n} grid")
    t_eff = _staircased(n, t, spec)
    s_eff = _staircased(n, s, spec)
    kt, ks = floor_index(n, t_eff), floor_index(n, s_eff)
    d = spec.exponent.d
    if i > kt or j > ks:
        return np.zeros((d, d))
    U = axis_cell_table(n, t, spec)[i - 1]
    V = axis_cell_table(n, s, spec)[j - 1]
    return n * n * (U @ V)


class _AxisQuadrature:
    """Caches edge-refined rules and power tables for covariance integrals.

    Rules are keyed by the integration upper limit, tables by (coordinate,
    upper limit); both are reused heavily when many point pairs share
    coordinates.
    """

    def __init__(self, exponent, order, depth):
        self.A = exponent.A
        self.order = order
        self.depth = depth
        self._rules = {}
        self._tables = {}

    def rule(self, upper):
        got = self._rules.get(upper)
        if got is None:
            got = edge_refined_rule(0.0, upper, self.order, self.depth, edge="hi")
            self._rules[upper] = got
        return got

    def table(self, coord, upper):
        key = (coord, upper)
        got = self._tables.get(key)
        if got is None:
            x, _ = self.rule(upper)
            got = power_table(self.A, np.maximum(coord - x, 0.0))
            self._tables[key] = got
        return got

    def pair_integral(self, c1, c2):
        """int_0^min(c1,c2) (c1 - u)^A [(c2 - u)^A]^T du."""
        m = min(c1, c2)
        if m <= 0:
            d = self.A.shape[0]
            return np.zeros((d, d))
        _, w = self.rule(m)
        T1 = self.table(c1, m)
        T2 = self.table(c2, m)
        return np.einsum("n,nab,ncb->ac", w, T1, T2)

    def sandwich(self, c1, c2, G):
        """int_0^min(c1,c2) (c1 - u)^A G [(c2 - u)^A]^T du."""
        m = min(c1, c2)
        if m <= 0:
            d = self.A.shape[0]
            return np.zeros((d, d))
        _, w = self.rule(m)
        T1 = self.table(c1, m)
        T2 = self.table(c2, m)
        return np.einsum("n,nab,bc,ndc->ad", w, T1, G, T2)


def _cov_block(axis, t, s, t2, s2):
    G = axis.pair_integral(s, s2)
    return axis.sandwich(t, t2, G)


def _check_point(t, s):
    if not (np.isfinite(t) and np.isfinite(s)) or t < 0 or s < 0:
        raise DomainError(f"point ({t}, {s}) outside the nonnegative quadrant")


def cov_integral_with_error(t, s, t2, s2, spec):
    """Covariance block E[X(t,s) X(t2,s2)^T] of the limit field, with an
    error bound from comparing two quadrature orders."""
    _check_point(t, s)
    _check_point(t2, s2)
    depth = spec.depth
    lo = _AxisQuadrature(spec.exponent, spec.quad_order, depth)
    hi = _AxisQuadrature(spec.exponent, spec.quad_order + _ERR_ORDER_STEP, depth)
    S1 = _cov_block(lo, t, s, t2, s2)
    S2 = _cov_block(hi, t, s, t2, s2)
    scale = max(1.0, float(np.linalg.norm(S2)))
    err = max(10.0 * float(np.linalg.norm(S2 - S1)), 1e-15 * scale)
    if err > max(spec.tol, spec.tol * scale):
        raise QuadratureError(
            f"covariance quadrature did not converge at ({t},{s};{t2},{s2}): "
            f"error bound {err:.3e} exceeds tol {spec.tol:.3e}",
            estimate=S2,
            error_bound=err,
        )
    return S2, err


def cov_integral(t, s, t2, s2, spec):
    """Covariance block of the limit field (see cov_integral_with_error)."""
    return cov_integral_with_error(t, s, t2, s2, spec)[0]


def cov_blocks(points, spec):
    """CovarianceTensor of the limit field over a point set.

    Computes each unordered pair once (Block(l,k) = Block(k,l)^T exactly,
    since both use the same nodes) and shares node tables across pairs.
    """
    points = [(float(t), float(s)) for t, s in points]
    for t, s in points:
        _check_point(t, s)
    if len(set(points)) != len(points):
        raise DomainError("duplicate points in covariance point set")
    d = spec.exponent.d
    Q = len(points)
    depth = spec.depth
    lo = _AxisQuadrature(spec.exponent, spec.quad_order, depth)
    hi = _AxisQuadrature(spec.exponent, spec.quad_order + _ERR_ORDER_STEP, depth)
    blocks = np.zeros((Q, Q, d, d))
    worst = 0.0
    for k, (t, s) in enumerate(points):
        for l in range(k, Q):
            t2, s2 = points[l]
            S1 = _cov_block(lo, t, s, t2, s2)
            S2 = _cov_block(hi, t, s, t2, s2)
            scale = max(1.0, float(np.linalg.norm(S2)))
            err = max(10.0 * float(np.linalg.norm(S2 - S1)), 1e-15 * scale)
            if err > max(spec.tol, spec.tol * scale):
                raise QuadratureError(
                    f"covariance quadrature did not converge for pair {k},{l}",
                    estimate=S2,
                    error_bound=err,
                )
            worst = max(worst, err)
            blocks[k, l] = S2
            if l != k:
                blocks[l, k] = S2.T
    return CovarianceTensor(
        points=points,
        blocks=blocks,
        provenance="quadrature",
        meta={"quad_order": spec.quad_order, "error_bound": worst},
    )


# ---------------------------------------------------------------------------
# on-disk cache of grid cell tables
#
# Binary layout (little endian):
#   magic   8 bytes  b"OFBSCELL"
#   version u32
#   d       u32
#   n       u32
#   order   u32
#   m       u32      evaluation grid size (grid values p/m, p = 0..m)
#   stair   u32      0 or 1
#   payload (m+1) * n * d * d float64, row-major over (grid point, cell, row, col)
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<8sIIIIII")


def cell_table_path(cache_dir, exponent, n, quad_order, grid_m, staircase):
    from pathlib import Path

    name = (
        f"cells_{exponent.digest()}_n{n}_q{quad_order}_m{grid_m}_s{int(staircase)}.bin"
    )
    return Path(cache_dir) / name


def write_cell_table(path, d, n, quad_order, grid_m, staircase, table):
    table = np.ascontiguousarray(table, dtype="<f8")
    if table.shape != (grid_m + 1, n, d, d):
        raise DomainError(f"cell table shape {table.shape} does not match header")
    header = _HEADER.pack(_CELL_MAGIC, _CELL_VERSION, d, n, quad_order, grid_m, int(staircase))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(table.tobytes())


def read_cell_table(path, d, n, quad_order, grid_m, staircase):
    """Load a cached cell table; returns None on any mismatch or corruption."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read(_HEADER.size)
            if len(raw) != _HEADER.size:
                return None
            magic, version, hd, hn, hq, hm, hs = _HEADER.unpack(raw)
            if (
                magic != _CELL_MAGIC
                or version != _CELL_VERSION
                or (hd, hn, hq, hm, hs) != (d, n, quad_order, grid_m, int(staircase))
            ):
                return None
            payload = np.frombuffer(fh.read(), dtype="<f8")
    except OSError:
        return None
    expected = (grid_m + 1) * n * d * d
    if payload.size != expected:
        return None
    return payload.reshape(grid_m + 1, n, d, d).copy()
