"""Flat key-value experiment configuration.

Grammar (line oriented, diff friendly)::

    file    : line*
    line    : blank | comment | pair
    comment : '#' anything
    pair    : key '=' value
    key     : dotted lower-case identifier, e.g. exponent.row0, tol.cov_error
    value   : whitespace-separated tokens (integers, floats, words, or
              't:s' point pairs)

Recognized keys (defaults in parentheses)::

    d (1)                     vector dimension
    exponent.rowK             row K of the d x d exponent matrix D (required)
    n (32)                    approximation index
    grid_m (16)               evaluation grid {p/m}
    replicates (1000)         Monte Carlo ensemble size
    seed (0)                  64-bit master seed
    generator (rademacher)    rademacher | product_sign
    quad_order (16)           Gauss-Legendre points per panel, 2..64
    epsilon (0.1)             truncation level of the Lindeberg check
    c_list (0.5 2)            self-similarity scale factors
    points                    't:s' pairs; default 4x4 grid on {0.25..1}^2
    selfsim.points            base points for scaling checks (stay in [0,1]
                              after scaling by max c); default within [0,1/2]^2
    n_ladder (8 16 32 64)     covariance-convergence ladder
    fdd.points / fdd.a        finite-dimensional projection: points, point
    fdd.b                     weights a (len Q) and component weights b (len d)
    qv.point_k / qv.point_l   quadratic-variation point pair
    qv.q / qv.m (1 / 1)       component indices, 1-based
    tol.NAME                  metric tolerances, all strictly positive

The canonical rendering of a config (sorted keys, 17-digit floats) is hashed
with SHA-256; that hash stamps every output file so runs can be tied back to
their exact inputs.
"""

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError
from .kernel import KernelSpec
from .matfun import OperatorExponent

DEFAULT_POINTS = tuple(
    (t, s) for t in (0.25, 0.5, 0.75, 1.0) for s in (0.25, 0.5, 0.75, 1.0)
)
DEFAULT_SELFSIM_POINTS = (
    (0.125, 0.125),
    (0.25, 0.25),
    (0.375, 0.375),
    (0.5, 0.5),
    (0.125, 0.375),
    (0.375, 0.125),
)
DEFAULT_FDD_POINTS = ((0.5, 0.5), (0.75, 0.25), (1.0, 1.0))

DEFAULT_TOLERANCES = {
    "cov_error": 0.05,
    "cov_monotone": 1e-12,
    "selfsim": 1e-6,
    "holder_scalar": 0.02,
    "holder_matrix": 0.1,
    "lindeberg": 1e-12,
    "qv_factor": 10.0,
    "cw_p_min": 0.01,
    "mc_band": 4.0,
}

_GENERATORS = ("rademacher", "product_sign")


@dataclass
class SimConfig:
    """Full experiment description; see the module docstring for semantics."""

    d: int = 1
    D: np.ndarray = None
    n: int = 32
    grid_m: int = 16
    replicates: int = 1000
    seed: int = 0
    generator: str = "rademacher"
    quad_order: int = 16
    epsilon: float = 0.1
    c_list: tuple = (0.5, 2.0)
    points: tuple = DEFAULT_POINTS
    selfsim_points: tuple = DEFAULT_SELFSIM_POINTS
    n_ladder: tuple = (8, 16, 32, 64)
    fdd_points: tuple = DEFAULT_FDD_POINTS
    fdd_a: tuple = None
    fdd_b: tuple = None
    qv_point_k: tuple = (1.0, 1.0)
    qv_point_l: tuple = (0.5, 0.75)
    qv_q: int = 1
    qv_m: int = 1
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))

    def validate(self):
        """Check every invariant; raises ConfigError on the first violation."""
        if self.D is None:
            raise ConfigError("exponent matrix missing (exponent.row0 ... required)")
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        if D.shape != (self.d, self.d):
            raise ConfigError(f"exponent shape {D.shape} does not match d = {self.d}")
        exponent = self.exponent()  # spectrum gate; DomainError escapes with exit 2
        if self.n < 1 or self.grid_m < 1 or self.replicates < 1:
            raise ConfigError("n, grid_m and replicates must all be >= 1")
        if self.generator not in _GENERATORS:
            raise ConfigError(f"generator must be one of {_GENERATORS}, got {self.generator!r}")
        if not 2 <= self.quad_order <= 64:
            raise ConfigError(f"quad_order must be in [2, 64], got {self.quad_order}")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be > 0")
        if not self.c_list or any(c <= 0 for c in self.c_list):
            raise ConfigError("c_list entries must be > 0")
        if not self.n_ladder or any(n < 1 for n in self.n_ladder) or list(
            self.n_ladder
        ) != sorted(self.n_ladder):
            raise ConfigError("n_ladder must be a nondecreasing list of integers >= 1")
        # `points` may be empty (the covariance command then emits a bare header);
        # the other groups always feed a metric and must be populated
        for name, group in (("points", self.points), ("selfsim.points", self.selfsim_points),
                            ("fdd.points", self.fdd_points)):
            if not group and name != "points":
                raise ConfigError(f"{name} must not be empty")
            for t, s in group:
                if not (0 <= t <= 1 and 0 <= s <= 1):
                    raise ConfigError(f"{name} entry ({t}, {s}) outside the unit square")
            if len(set(group)) != len(group):
                raise ConfigError(f"duplicate entries in {name}")
        cmax = max(self.c_list)
        for t, s in self.selfsim_points:
            if cmax * t > 1 or cmax * s > 1:
                raise ConfigError(
                    f"selfsim point ({t}, {s}) leaves the unit square at scale {cmax}"
                )
        for t, s in self.fdd_points:
            if t <= 0 or s <= 0:
                raise ConfigError("fdd points must have strictly positive coordinates")
        a, b = self.fdd_weights()
        if len(a) != len(self.fdd_points):
            raise ConfigError("fdd.a length must match the number of fdd points")
        if len(b) != self.d:
            raise ConfigError("fdd.b length must match d")
        if max(abs(v) for v in a) == 0 or max(abs(v) for v in b) == 0:
            raise ConfigError("degenerate projection: fdd.a and fdd.b must be nonzero")
        if not 1 <= self.qv_q <= self.d or not 1 <= self.qv_m <= self.d:
            raise ConfigError("qv.q and qv.m must be component indices in 1..d")
        for name in self.tolerances:
            if name not in DEFAULT_TOLERANCES:
                raise ConfigError(f"unknown tolerance tol.{name}")
        for name, value in self.tolerances.items():
            if not value > 0:
                raise ConfigError(f"tolerance tol.{name} must be strictly positive")
        return exponent

    def exponent(self):
        return OperatorExponent.from_matrix(np.atleast_2d(np.asarray(self.D, dtype=float)))

    def kernel_spec(self, staircase=False, tol=1e-9):
        return KernelSpec(
            exponent=self.exponent(), quad_order=self.quad_order, staircase=staircase, tol=tol
        )

    def fdd_weights(self):
        a = self.fdd_a if self.fdd_a is not None else (1.0,) * len(self.fdd_points)
        b = self.fdd_b if self.fdd_b is not None else (1.0,) * self.d
        return tuple(float(v) for v in a), tuple(float(v) for v in b)

    def tol(self, name):
        return self.tolerances.get(name, DEFAULT_TOLERANCES[name])

    def with_seed(self, seed):
        return replace(self, seed=int(seed))


def _fmt(value):
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _fmt_points(points):
    return " ".join(f"{_fmt(float(t))}:{_fmt(float(s))}" for t, s in points)


def render_config(cfg):
    """Canonical text form; parsing it back reproduces the config."""
    D = np.atleast_2d(np.asarray(cfg.D, dtype=float))
    lines = [f"d = {cfg.d}"]
    for i in range(cfg.d):
        lines.append(f"exponent.row{i} = " + " ".join(_fmt(v) for v in D[i]))
    a, b = cfg.fdd_weights()
    lines += [
        f"n = {cfg.n}",
        f"grid_m = {cfg.grid_m}",
        f"replicates = {cfg.replicates}",
        f"seed = {cfg.seed}",
        f"generator = {cfg.generator}",
        f"quad_order = {cfg.quad_order}",
        f"epsilon = {_fmt(cfg.epsilon)}",
        "c_list = " + " ".join(_fmt(float(c)) for c in cfg.c_list),
        f"points = {_fmt_points(cfg.points)}",
        f"selfsim.points = {_fmt_points(cfg.selfsim_points)}",
        "n_ladder = " + " ".join(str(n) for n in cfg.n_ladder),
        f"fdd.points = {_fmt_points(cfg.fdd_points)}",
        "fdd.a = " + " ".join(_fmt(v) for v in a),
        "fdd.b = " + " ".join(_fmt(v) for v in b),
        f"qv.point_k = {_fmt_points([cfg.qv_point_k])}",
        f"qv.point_l = {_fmt_points([cfg.qv_point_l])}",
        f"qv.q = {cfg.qv_q}",
        f"qv.m = {cfg.qv_m}",
    ]
    for name in sorted(cfg.tolerances):
        lines.append(f"tol.{name} = {_fmt(float(cfg.tolerances[name]))}")
    return "\n".join(lines) + "\n"


def config_hash(cfg):
    return hashlib.sha256(render_config(cfg).encode()).hexdigest()


def _parse_point_list(value, key, lineno):
    points = []
    for token in value.split():
        if ":" not in token:
            raise ConfigError(f"line {lineno}: {key} entries must look like t:s, got {token!r}")
        t, s = token.split(":", 1)
        try:
            points.append((float(t), float(s)))
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad point {token!r} for {key}") from exc
    return tuple(points)


def _parse_floats(value, key, lineno):
    try:
        return tuple(float(v) for v in value.split())
    except ValueError as exc:
        raise ConfigError(f"line {lineno}: expected numbers for {key}, got {value!r}") from exc


def _parse_ints(value, key, lineno):
    try:
        return tuple(int(v) for v in value.split())
    except ValueError as exc:
        raise ConfigError(f"line {lineno}: expected integers for {key}, got {value!r}") from exc


def _parse_scalar_int(value, key, lineno):
    vals = _parse_ints(value, key, lineno)
    if len(vals) != 1:
        raise ConfigError(f"line {lineno}: {key} takes a single integer")
    return vals[0]


def _parse_scalar_float(value, key, lineno):
    vals = _parse_floats(value, key, lineno)
    if len(vals) != 1:
        raise ConfigError(f"line {lineno}: {key} takes a single number")
    return vals[0]


def parse_config(text):
    """Parse config text into a validated SimConfig."""
    cfg = SimConfig()
    rows = {}
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        if key == "d":
            cfg.d = _parse_scalar_int(value, key, lineno)
        elif key.startswith("exponent.row"):
            try:
                idx = int(key[len("exponent.row") :])
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: bad exponent key {key!r}") from exc
            rows[idx] = _parse_floats(value, key, lineno)
        elif key == "n":
            cfg.n = _parse_scalar_int(value, key, lineno)
        elif key == "grid_m":
            cfg.grid_m = _parse_scalar_int(value, key, lineno)
        elif key == "replicates":
            cfg.replicates = _parse_scalar_int(value, key, lineno)
        elif key == "seed":
            cfg.seed = _parse_scalar_int(value, key, lineno)
        elif key == "generator":
            cfg.generator = value
        elif key == "quad_order":
            cfg.quad_order = _parse_scalar_int(value, key, lineno)
        elif key == "epsilon":
            cfg.epsilon = _parse_scalar_float(value, key, lineno)
        elif key == "c_list":
            cfg.c_list = _parse_floats(value, key, lineno)
        elif key == "points":
            cfg.points = _parse_point_list(value, key, lineno)
        elif key == "selfsim.points":
            cfg.selfsim_points = _parse_point_list(value, key, lineno)
        elif key == "n_ladder":
            cfg.n_ladder = _parse_ints(value, key, lineno)
        elif key == "fdd.points":
            cfg.fdd_points = _parse_point_list(value, key, lineno)
        elif key == "fdd.a":
            cfg.fdd_a = _parse_floats(value, key, lineno)
        elif key == "fdd.b":
            cfg.fdd_b = _parse_floats(value, key, lineno)
        elif key == "qv.point_k":
            (cfg.qv_point_k,) = _parse_point_list(value, key, lineno)
        elif key == "qv.point_l":
            (cfg.qv_point_l,) = _parse_point_list(value, key, lineno)
        elif key == "qv.q":
            cfg.qv_q = _parse_scalar_int(value, key, lineno)
        elif key == "qv.m":
            cfg.qv_m = _parse_scalar_int(value, key, lineno)
        elif key.startswith("tol."):
            cfg.tolerances[key[len("tol.") :]] = _parse_scalar_float(value, key, lineno)
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    if rows:
        if sorted(rows) != list(range(len(rows))):
            raise ConfigError(f"exponent rows must be row0..row{len(rows) - 1}")
        width = len(rows[0])
        if any(len(rows[i]) != width for i in rows) or width != len(rows):
            raise ConfigError("exponent rows must form a square matrix")
        cfg.D = np.array([rows[i] for i in range(len(rows))], dtype=float)
        if "d" not in seen:
            cfg.d = len(rows)
    cfg.validate()
    return cfg


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from exc
    return parse_config(text)
