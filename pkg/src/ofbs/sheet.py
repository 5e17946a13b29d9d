"""Evaluation of the approximating field on grids, and rectangle increments.

The field at a point is X_n(t, s) = sum_{i <= floor(nt), j <= floor(ns)}
M_ij(t, s) eta_ij with M_ij the n^2-scaled kernel cell integral.  Because the
kernel factorizes per axis, M_ij(t, s) = n^2 U_i(t) V_j(s), and evaluating on
a grid reduces to two cached axis tables plus batched matrix-vector sweeps
over the noise; replicates reuse the tables and only redraw the noise.

The displayed definition writes the noise on the left of the integral; since
the integrand is a d x d matrix and the field a d-vector, the only
composition that typechecks is (cell matrix) times (noise vector), which is
what the sweeps compute.
"""

import csv
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import ConfigError, DomainError
from .grids import floor_index, grid_coordinate, grid_values
from .kernel import axis_cell_table, cell_table_path, read_cell_table, write_cell_table
from .mdgen import GENERATORS

# fixed replicate chunk: keeps memory bounded and the floating-point
# reduction order independent of the worker count
REPLICATE_CHUNK = 512

_GRID_MAGIC = b"OFBSGRD1"
_PTS_MAGIC = b"OFBSPTS1"
_ENS_VERSION = 1
_ENS_HEADER = struct.Struct("<8sIIIIQ")


@dataclass(eq=False)
class GridField:
    """Sampled values of a d-vector field on the square grid {p/m}^2."""

    grid_m: int
    values: np.ndarray  # (m+1, m+1, d)
    source: str  # "approximation" | "oracle"
    exponent: object
    meta: dict = field(default_factory=dict)

    @property
    def d(self):
        return self.values.shape[-1]


class CellCache:
    """Axis cell-integral tables for a fixed coordinate list.

    table[p] holds U_i(coords[p]) for i = 1..n (zero rows past the support).
    Grid-shaped tables can persist under a cache directory (OFBS_CACHE_DIR by
    default); anything unreadable or mismatched is silently recomputed.
    """

    def __init__(self, spec, n, coords, grid_m=None, cache_dir=None):
        self.spec = spec
        self.n = n
        self.coords = [float(c) for c in coords]
        d = spec.exponent.d
        cache_dir = cache_dir if cache_dir is not None else os.environ.get("OFBS_CACHE_DIR")
        path = None
        if cache_dir and grid_m is not None:
            path = cell_table_path(cache_dir, spec.exponent, n, spec.quad_order, grid_m, spec.staircase)
            table = read_cell_table(path, d, n, spec.quad_order, grid_m, spec.staircase)
            if table is not None and table.shape[0] == len(self.coords):
                self.table = table
                return
        self.table = np.stack([axis_cell_table(n, c, spec) for c in self.coords])
        if path is not None:
            try:
                os.makedirs(cache_dir, exist_ok=True)
                write_cell_table(path, d, n, spec.quad_order, grid_m, spec.staircase, self.table)
            except OSError:
                pass  # cache is best effort


def _chunk_sizes(R):
    return [min(REPLICATE_CHUNK, R - start) for start in range(0, R, REPLICATE_CHUNK)]


def _draw_eta(generator, seed, chunk_id, count, n, d):
    """Chunk of noise arrays, shape (count, n, n, d), scaled by 1/n."""
    if generator == "rademacher":
        g = rng.stream(seed, rng.DOMAIN_ENSEMBLE, chunk_id)
        return rng.signs(g, (count, n, n, d)) / n
    if generator == "product_sign":
        r = rng.signs(rng.stream(seed, rng.DOMAIN_ENSEMBLE, chunk_id, 0), (count, n, d))
        c = rng.signs(rng.stream(seed, rng.DOMAIN_ENSEMBLE, chunk_id, 1), (count, n, d))
        return np.einsum("rik,rjk->rijk", r, c) / n
    raise ConfigError(f"unknown generator {generator!r}; expected one of {GENERATORS}")


def transform_grid(table, n, eta):
    """Batched field values on the grid for noise eta of shape (..., n, n, d)."""
    eta = np.asarray(eta)
    squeeze = eta.ndim == 3
    if squeeze:
        eta = eta[None]
    # optimize=True routes the contractions through BLAS; the path is a
    # deterministic function of the shapes, so outputs stay reproducible
    Z = np.einsum("qjab,rijb->rqia", table, eta, optimize=True)
    X = n * n * np.einsum("pice,rqie->rpqc", table, Z, optimize=True)
    return X[0] if squeeze else X


def transform_points(tables_t, tables_s, n, eta):
    """Batched field values at an arbitrary point list.

    tables_t[k] / tables_s[k] are the axis tables for point k's coordinates.
    """
    eta = np.asarray(eta)
    squeeze = eta.ndim == 3
    if squeeze:
        eta = eta[None]
    R = eta.shape[0]
    Q, d = len(tables_t), eta.shape[-1]
    X = np.empty((R, Q, d))
    for k in range(Q):
        Z = np.einsum("jab,rijb->ria", tables_s[k], eta, optimize=True)
        X[:, k, :] = n * n * np.einsum("iab,rib->ra", tables_t[k], Z, optimize=True)
    return X[0] if squeeze else X


def simulate_xn(cfg, arr, cache_dir=None):
    """Evaluate the approximating field for one noise array on the config grid."""
    if arr.n != cfg.n or arr.d != cfg.d:
        raise DomainError(
            f"array (n={arr.n}, d={arr.d}) does not match config (n={cfg.n}, d={cfg.d})"
        )
    spec = cfg.kernel_spec()
    cache = CellCache(spec, cfg.n, grid_values(cfg.grid_m), grid_m=cfg.grid_m, cache_dir=cache_dir)
    values = transform_grid(cache.table, cfg.n, arr.xi)
    return GridField(
        grid_m=cfg.grid_m,
        values=values,
        source="approximation",
        exponent=spec.exponent,
        meta={"n": cfg.n, "generator": arr.generator, "seed": arr.seed},
    )


def _run_chunks(worker, R, jobs):
    sizes = _chunk_sizes(R)
    if jobs <= 1:
        parts = [worker(cid, size) for cid, size in enumerate(sizes)]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(worker, range(len(sizes)), sizes))
    return np.concatenate(parts) if parts else np.empty((0,))


def grid_ensemble(cfg, jobs=1, cache_dir=None):
    """R replicate fields on the grid, shape (R, m+1, m+1, d)."""
    spec = cfg.kernel_spec()
    cache = CellCache(spec, cfg.n, grid_values(cfg.grid_m), grid_m=cfg.grid_m, cache_dir=cache_dir)

    def worker(chunk_id, count):
        eta = _draw_eta(cfg.generator, cfg.seed, chunk_id, count, cfg.n, cfg.d)
        return transform_grid(cache.table, cfg.n, eta)

    return _run_chunks(worker, cfg.replicates, jobs)


def points_ensemble(cfg, points, jobs=1):
    """R replicate field values at a point list, shape (R, Q, d)."""
    spec = cfg.kernel_spec()
    tables_t = [axis_cell_table(cfg.n, t, spec) for t, _ in points]
    tables_s = [axis_cell_table(cfg.n, s, spec) for _, s in points]

    def worker(chunk_id, count):
        eta = _draw_eta(cfg.generator, cfg.seed, chunk_id, count, cfg.n, cfg.d)
        return transform_points(tables_t, tables_s, cfg.n, eta)

    return _run_chunks(worker, cfg.replicates, jobs)


def increment(fld, t, s, t2, s2):
    """Rectangle increment X(t2,s2) - X(t,s2) - X(t2,s) + X(t,s) over grid corners."""
    if not (t <= t2 and s <= s2):
        raise DomainError(f"need (t, s) <= (t2, s2), got ({t},{s}) and ({t2},{s2})")
    m = fld.grid_m
    p0, q0 = grid_coordinate(m, t), grid_coordinate(m, s)
    p1, q1 = grid_coordinate(m, t2), grid_coordinate(m, s2)
    v = fld.values
    return v[p1, q1] - v[p0, q1] - v[p1, q0] + v[p0, q0]


# ---------------------------------------------------------------------------
# file formats
#
# Grid ensemble (little endian):
#   magic b"OFBSGRD1", version u32, d u32, m u32, R u32, seed u64,
#   payload R * (m+1) * (m+1) * d float64, replicate-major.
# Point ensemble: magic b"OFBSPTS1", version u32, d u32, Q u32, R u32,
#   seed u64, then Q * 2 float64 point coordinates, then R * Q * d float64.
# ---------------------------------------------------------------------------


def write_grid_ensemble(path, values, seed):
    values = np.ascontiguousarray(values, dtype="<f8")
    R, mp1, mp1b, d = values.shape
    if mp1 != mp1b:
        raise DomainError(f"grid ensemble must be square, got {values.shape}")
    with open(path, "wb") as fh:
        fh.write(_ENS_HEADER.pack(_GRID_MAGIC, _ENS_VERSION, d, mp1 - 1, R, seed & (2**64 - 1)))
        fh.write(values.tobytes())


def read_grid_ensemble(path):
    with open(path, "rb") as fh:
        raw = fh.read(_ENS_HEADER.size)
        if len(raw) != _ENS_HEADER.size:
            raise ConfigError(f"{path}: truncated ensemble header")
        magic, version, d, m, R, seed = _ENS_HEADER.unpack(raw)
        if magic != _GRID_MAGIC or version != _ENS_VERSION:
            raise ConfigError(f"{path}: not a grid ensemble file")
        payload = np.frombuffer(fh.read(), dtype="<f8")
    if payload.size != R * (m + 1) * (m + 1) * d:
        raise ConfigError(f"{path}: payload size does not match header")
    return payload.reshape(R, m + 1, m + 1, d).copy(), seed


def write_points_ensemble(path, points, values, seed):
    values = np.ascontiguousarray(values, dtype="<f8")
    R, Q, d = values.shape
    if Q != len(points):
        raise DomainError("point count does not match ensemble shape")
    coords = np.ascontiguousarray(np.asarray(points, dtype="<f8"))
    with open(path, "wb") as fh:
        fh.write(_ENS_HEADER.pack(_PTS_MAGIC, _ENS_VERSION, d, Q, R, seed & (2**64 - 1)))
        fh.write(coords.tobytes())
        fh.write(values.tobytes())


def read_points_ensemble(path):
    with open(path, "rb") as fh:
        raw = fh.read(_ENS_HEADER.size)
        if len(raw) != _ENS_HEADER.size:
            raise ConfigError(f"{path}: truncated ensemble header")
        magic, version, d, Q, R, seed = _ENS_HEADER.unpack(raw)
        if magic != _PTS_MAGIC or version != _ENS_VERSION:
            raise ConfigError(f"{path}: not a point ensemble file")
        coords = np.frombuffer(fh.read(Q * 2 * 8), dtype="<f8").reshape(Q, 2)
        payload = np.frombuffer(fh.read(), dtype="<f8")
    if payload.size != R * Q * d:
        raise ConfigError(f"{path}: payload size does not match header")
    points = [(float(t), float(s)) for t, s in coords]
    return points, payload.reshape(R, Q, d).copy(), seed


def field_csv(fld, path):
    """One row per (t, s, component): header t,s,component,value."""
    vals = grid_values(fld.grid_m)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "s", "component", "value"])
        for p, t in enumerate(vals):
            for q, s in enumerate(vals):
                for k in range(fld.d):
                    writer.writerow([f"{t:.17g}", f"{s:.17g}", k + 1, f"{fld.values[p, q, k]:.17g}"])


def ensemble_summary_csv(values, grid_m, path):
    """Per grid point and component: replicate mean and raw second moment."""
    vals = grid_values(grid_m)
    mean = values.mean(axis=0)
    second = (values * values).mean(axis=0)
    d = values.shape[-1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "s", "component", "mean", "second_moment"])
        for p, t in enumerate(vals):
            for q, s in enumerate(vals):
                for k in range(d):
                    writer.writerow(
                        [f"{t:.17g}", f"{s:.17g}", k + 1, f"{mean[p, q, k]:.17g}", f"{second[p, q, k]:.17g}"]
                    )
