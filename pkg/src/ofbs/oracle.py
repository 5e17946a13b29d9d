"""Exact Gaussian sampler of the limit field on a point set.

The limit field is zero-mean Gaussian, so sampling it exactly on finitely
many points only needs the assembled covariance and a matrix factor.
Quadrature noise can leave the assembled matrix marginally indefinite; a
small jitter ladder (0, 1e-14, 1e-12, 1e-10 relative to the largest
diagonal entry) is climbed until the factorization succeeds.
"""

from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import DomainError, NumericError
from .grids import grid_coordinate
from .kernel import cov_blocks
from .sheet import GridField

_JITTER_LADDER = (0.0, 1e-14, 1e-12, 1e-10)


@dataclass(eq=False)
class OracleModel:
    """Factorized covariance for direct Gaussian sampling at `points`."""

    points: list
    Sigma: np.ndarray  # (Q d, Q d)
    factor: np.ndarray  # lower triangular, factor @ factor.T ~= Sigma
    jitter: float
    exponent: object
    d: int

    @property
    def Q(self):
        return len(self.points)


def build_oracle(points, spec):
    """Assemble the covariance on `points` and factor it.

    Points must be distinct with strictly positive coordinates (axis points
    are deterministic zeros and never enter the model).
    """
    points = [(float(t), float(s)) for t, s in points]
    for t, s in points:
        if t <= 0 or s <= 0:
            raise DomainError(f"oracle points need positive coordinates, got ({t}, {s})")
    tensor = cov_blocks(points, spec)
    Sigma = tensor.assembled()
    Sigma = 0.5 * (Sigma + Sigma.T)
    scale = float(Sigma.diagonal().max())
    for level in _JITTER_LADDER:
        jitter = level * scale
        try:
            factor = np.linalg.cholesky(Sigma + jitter * np.eye(Sigma.shape[0]))
        except np.linalg.LinAlgError:
            continue
        return OracleModel(
            points=points,
            Sigma=Sigma,
            factor=factor,
            jitter=jitter,
            exponent=spec.exponent,
            d=spec.exponent.d,
        )
    smallest = float(np.linalg.eigvalsh(Sigma).min())
    raise NumericError(
        f"covariance indefinite beyond the jitter budget: smallest eigenvalue {smallest:.6e}"
    )


def sample_oracle(model, seed, R):
    """R i.i.d. draws of the limit field at the model points, shape (R, Q, d)."""
    if R < 1:
        raise DomainError(f"replicate count must be >= 1, got {R}")
    g = rng.stream(seed, rng.DOMAIN_ORACLE)
    z = rng.normals(g, (R, model.Sigma.shape[0]))
    return (z @ model.factor.T).reshape(R, model.Q, model.d)


def sample_gridfields(model, grid_m, seed, R):
    """Oracle draws arranged on the grid; off-model grid points (the axes
    among them) are filled with zeros."""
    samples = sample_oracle(model, seed, R)
    values = np.zeros((R, grid_m + 1, grid_m + 1, model.d))
    for k, (t, s) in enumerate(model.points):
        p, q = grid_coordinate(grid_m, t), grid_coordinate(grid_m, s)
        values[:, p, q, :] = samples[:, k, :]
    return [
        GridField(
            grid_m=grid_m,
            values=values[r],
            source="oracle",
            exponent=model.exponent,
            meta={"seed": seed, "replicate": r},
        )
        for r in range(R)
    ]
