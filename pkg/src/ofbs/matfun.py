"""Dense real matrix functions for small dimensions.

Everything the kernel needs reduces to real powers t^A = exp(ln(t) * A) of a
single fixed matrix A, evaluated at many scalars t at once, so the central
routine here is the batched :func:`power_table`.  Dimensions are expected to
stay <= 8; no sparse or large-d path exists.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DomainError, NumericError

__all__ = [
    "OperatorExponent",
    "mat_exp",
    "mat_power",
    "power_table",
    "spectrum_bounds",
    "operator_norm",
    "power_bound_constant",
]


def _as_square(A):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise DomainError("matrix has non-finite entries")
    return A


def mat_exp(A):
    """Matrix exponential e^A (scaling-and-squaring with a Pade approximant)."""
    return scipy.linalg.expm(_as_square(A))


def spectrum_bounds(D):
    """(min, max) of the real parts of the eigenvalues of D."""
    D = _as_square(D)
    try:
        w = np.linalg.eigvals(D)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigenvalue iteration failed to converge: {exc}") from exc
    re = w.real
    return float(re.min()), float(re.max())


def operator_norm(A):
    """Spectral norm: largest singular value of A."""
    return float(np.linalg.norm(_as_square(A), 2))


def _expm_multi(A, c):
    """exp(c_k * A) stacked over the 1-D array c.

    d = 1 and d = 2 have exact closed forms (the 2x2 one covers defective
    matrices).  Larger d uses a validated eigendecomposition when A is
    diagonalizable and well conditioned, otherwise per-slice Pade.
    """
    d = A.shape[0]
    c = np.asarray(c, dtype=float)
    if d == 1:
        return np.exp(c * A[0, 0])[:, None, None]
    if d == 2:
        M = c[:, None, None] * A
        mu = 0.5 * (M[:, 0, 0] + M[:, 1, 1])
        B = M - mu[:, None, None] * np.eye(2)
        disc = (mu * mu - np.linalg.det(M)).astype(complex)  # z^2 where B^2 = z^2 I
        z = np.sqrt(disc)
        small = np.abs(z) < 1e-6
        zsafe = np.where(small, 1.0, z)
        coshz = np.where(small, 1.0 + disc / 2.0, np.cosh(zsafe))
        sinhc = np.where(small, 1.0 + disc / 6.0, np.sinh(zsafe) / zsafe)
        out = coshz[:, None, None] * np.eye(2) + sinhc[:, None, None] * B
        return (np.exp(mu)[:, None, None] * out).real
    w, S = np.linalg.eig(A)
    usable = False
    try:
        Sinv = np.linalg.inv(S)
        recon_err = np.abs((S * w) @ Sinv - A).max()
        usable = recon_err <= 1e-12 * max(1.0, np.abs(A).max()) and np.linalg.cond(S) < 1e8
    except np.linalg.LinAlgError:
        usable = False
    if usable:
        E = np.exp(np.multiply.outer(c, w))
        return np.einsum("ab,nb,bc->nac", S, E, Sinv).real
    return scipy.linalg.expm(c[:, None, None] * A)


def power_table(A, x):
    """Stacked real matrix powers x_k^A = exp(ln(x_k) * A) for x_k >= 0.

    x = 1 maps to the identity exactly; x = 0 maps to the zero matrix (the
    continuity limit, valid only when Re sigma(A) > 0, otherwise rejected).
    """
    A = _as_square(A)
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DomainError("power_table expects a 1-D array of scalars")
    if not np.all(np.isfinite(x)) or np.any(x < 0):
        raise DomainError("matrix powers require finite scalars t >= 0")
    d = A.shape[0]
    out = np.zeros((x.size, d, d))
    if np.any(x == 0) and spectrum_bounds(A)[0] <= 0:
        raise DomainError("t = 0 requires Re sigma(A) > 0 for the zero-matrix limit")
    out[x == 1.0] = np.eye(d)
    pos = (x > 0) & (x != 1.0)
    if np.any(pos):
        out[pos] = _expm_multi(A, np.log(x[pos]))
    return out


def mat_power(t, A):
    """t^A for a scalar t >= 0; see :func:`power_table` for the conventions."""
    if not np.isfinite(t) or t < 0:
        raise DomainError(f"matrix power needs t >= 0, got {t}")
    return power_table(A, np.array([float(t)]))[0]


def power_bound_constant(A, delta, k_max=40):
    """Smallest C with ||t^A|| <= C * t^(lambda_A - delta) on t = 2^-k, k = 0..k_max.

    The fitted constant is what the envelope bound on small-t powers uses;
    callers freeze it once per exponent.  Requires 0 <= delta < lambda_A.
    """
    A = _as_square(A)
    lam = spectrum_bounds(A)[0]
    if lam <= 0:
        raise DomainError("envelope bound requires Re sigma(A) > 0")
    if not 0 <= delta < lam:
        raise DomainError(f"delta must lie in [0, lambda_A = {lam}), got {delta}")
    t = 2.0 ** -np.arange(k_max + 1)
    norms = np.linalg.norm(power_table(A, t), ord=2, axis=(1, 2))
    return float(np.max(norms / t ** (lam - delta)))


def _charpoly_coeffs(A):
    """Characteristic polynomial coefficients by the Faddeev-LeVerrier recursion.

    Returns [1, c_1, ..., c_d] with p(x) = x^d + c_1 x^(d-1) + ... + c_d,
    using only traces and matrix products (independent of any eigensolver).
    """
    d = A.shape[0]
    coeffs = [1.0]
    M = np.zeros_like(A)
    for k in range(1, d + 1):
        M = A @ M + coeffs[-1] * np.eye(d)
        coeffs.append(-np.trace(A @ M) / k)
    return coeffs


@dataclass(frozen=True, eq=False)
class OperatorExponent:
    """Validated exponent matrix D with its derived kernel exponent A = D/2 - I/4.

    Construction rejects any D whose spectrum has real parts outside
    (1/2, 1); that gate guarantees Re sigma(A) in (0, 1/4), which is what
    makes the kernel continuous up to the support edge.
    """

    d: int
    D: np.ndarray
    A: np.ndarray
    lambda_D: float
    Lambda_D: float

    @classmethod
    def from_matrix(cls, D):
        D = _as_square(D)
        lam, Lam = spectrum_bounds(D)
        if not (0.5 < lam <= Lam < 1.0):
            raise DomainError(
                f"exponent spectrum must have real parts in (1/2, 1); got [{lam:.6g}, {Lam:.6g}]"
            )
        d = D.shape[0]
        A = D / 2.0 - np.eye(d) / 4.0
        D = D.copy()
        D.setflags(write=False)
        A.setflags(write=False)
        return cls(d=d, D=D, A=A, lambda_D=lam, Lambda_D=Lam)

    @property
    def lambda_A(self):
        return self.lambda_D / 2.0 - 0.25

    def digest(self):
        """Stable hex digest of D, used to key on-disk caches."""
        import hashlib

        h = hashlib.sha256()
        h.update(str(self.d).encode())
        h.update(np.ascontiguousarray(self.D).tobytes())
        return h.hexdigest()[:16]
