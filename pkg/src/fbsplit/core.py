"""Dense linear algebra and subspace helpers shared by the rest of the package."""
from dataclasses import dataclass

import numpy as np

ORTHO_TOL = 1e-10
POWER_MAX_ITER = 10_000
POWER_TOL = 1e-10
# Fixed seed so that power iteration (and therefore every step size) is reproducible.
_POWER_SEED = 20140612


class PowerIterationError(RuntimeError):
    """Raised when power iteration does not reach the requested tolerance."""


def as_vector(x, name="x"):
    """Return `x` as a finite 1-D float array."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite entries")
    return x


def as_matrix(A, name="A"):
    """Return `A` as a finite 2-D float array with positive dimensions."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] == 0 or A.shape[1] == 0:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains non-finite entries")
    return A


@dataclass(frozen=True)
class SubspaceBasis:
    """Orthonormal basis of a linear subspace of R^n.

    Parameters
    ----------
    basis : ndarray of shape (n, d)
        Columns are orthonormal. ``d`` may be zero.
    """

    basis: np.ndarray

    def __post_init__(self):
        B = np.asarray(self.basis, dtype=float)
        if B.ndim != 2:
            raise ValueError("basis must be a 2-D array")
        if not np.all(np.isfinite(B)):
            raise ValueError("basis contains non-finite entries")
        d = B.shape[1]
        if d > B.shape[0]:
            raise ValueError("more basis vectors than ambient dimension")
        if d and np.max(np.abs(B.T @ B - np.eye(d))) > ORTHO_TOL:
            raise ValueError("basis columns are not orthonormal")
        B.setflags(write=False)
        object.__setattr__(self, "basis", B)

    @property
    def dim(self):
        return self.basis.shape[1]

    @property
    def ambient_dim(self):
        return self.basis.shape[0]

    @classmethod
    def from_vectors(cls, vectors, n=None):
        """Orthonormalize `vectors` (columns) with Gram-Schmidt.

        Classical Gram-Schmidt is applied twice per column; columns left with
        norm below 1e-12 are dropped.
        """
        V = np.asarray(vectors, dtype=float)
        if V.ndim == 1:
            V = V[:, None]
        if V.size == 0:
            if n is None:
                raise ValueError("ambient dimension required for an empty basis")
            return cls(np.zeros((n, 0)))
        cols = []
        for j in range(V.shape[1]):
            v = V[:, j].copy()
            for _ in range(2):
                for q in cols:
                    v -= (q @ v) * q
            nrm = np.linalg.norm(v)
            if nrm >= 1e-12:
                cols.append(v / nrm)
        if not cols:
            return cls(np.zeros((V.shape[0], 0)))
        return cls(np.column_stack(cols))

    @classmethod
    def coordinates(cls, n, indices):
        """Basis of the coordinate subspace spanned by ``e_i`` for ``i`` in `indices`."""
        indices = np.asarray(sorted(indices), dtype=int)
        B = np.zeros((n, indices.size))
        B[indices, np.arange(indices.size)] = 1.0
        return cls(B)

    def projector(self):
        """Dense ``n x n`` orthogonal projector matrix."""
        return self.basis @ self.basis.T


def project(basis, x):
    """Orthogonal projection of `x` onto the span of `basis`."""
    x = np.asarray(x, dtype=float)
    if x.shape != (basis.ambient_dim,):
        raise ValueError(
            f"dimension mismatch: basis lives in R^{basis.ambient_dim}, x has shape {x.shape}"
        )
    B = basis.basis
    return B @ (B.T @ x)


def restricted_operator_spectrum(A, basis):
    """Extreme eigenvalues of ``B^T A^T A B``.

    Returns
    -------
    sigma_m, sigma_M : float
        Smallest and largest eigenvalue of the Gram matrix of ``A``
        restricted to the subspace spanned by `basis`.
    """
    A = as_matrix(A)
    if basis.ambient_dim != A.shape[1]:
        raise ValueError("basis ambient dimension must equal the number of columns of A")
    if basis.dim == 0:
        raise ValueError("the empty subspace has no spectrum")
    AB = A @ basis.basis
    ev = np.linalg.eigvalsh(AB.T @ AB)
    return max(float(ev[0]), 0.0), max(float(ev[-1]), 0.0)


def largest_singular_value_sq(A, tol=POWER_TOL, max_iter=POWER_MAX_ITER):
    """Largest eigenvalue of ``A^T A`` by power iteration.

    Iterates until the Rayleigh quotient changes by less than `tol` relative.
    Raises :class:`PowerIterationError` after `max_iter` iterations.
    """
    A = as_matrix(A)
    rng = np.random.default_rng(_POWER_SEED)
    v = rng.standard_normal(A.shape[1])
    v /= np.linalg.norm(v)
    theta = 0.0
    for _ in range(max_iter):
        Av = A @ v
        w = A.T @ Av
        theta_new = float(Av @ Av)
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            # v is in ker(A); restart would be needed only if A were zero
            if not np.any(A):
                return 0.0
            v = rng.standard_normal(A.shape[1])
            v /= np.linalg.norm(v)
            continue
        v = w / nrm
        if abs(theta_new - theta) <= tol * theta_new:
            return theta_new
        theta = theta_new
    raise PowerIterationError(f"power iteration did not converge in {max_iter} iterations")


def thin_svd(X):
    """Reduced SVD ``X = U diag(s) V^T`` with nonincreasing ``s``."""
    X = as_matrix(X, "X")
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    return U, s, Vt.T
