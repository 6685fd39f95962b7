"""Smooth data-fidelity terms ``F(x) = 0.5 ||A x - y||^2``."""
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .core import as_matrix, as_vector, largest_singular_value_sq, restricted_operator_spectrum


@dataclass(frozen=True)
class CurvatureReport:
    """Curvature of a quadratic ``F`` restricted to a subspace ``T``.

    ``alpha`` is the restricted strong convexity constant on ``T`` and ``nu``
    the Lipschitz constant of ``P_T grad F P_T``; for a quadratic they are the
    extreme eigenvalues ``sigma_m``, ``sigma_M`` of ``A_T^* A_T``.
    """

    alpha: float
    nu: float
    sigma_m: float
    sigma_M: float
    sigma_max: float

    @property
    def condition_number(self):
        return self.sigma_M / self.sigma_m if self.sigma_m > 0 else np.inf


class LeastSquares:
    """``F(x) = 0.5 ||A x - y||^2``.

    Parameters
    ----------
    A : array of shape (m, n)
    y : array of shape (m,)
    """

    def __init__(self, A, y):
        self.A = as_matrix(A)
        self.y = as_vector(y, "y")
        if self.y.size != self.A.shape[0]:
            raise ValueError(f"y has length {self.y.size}, A has {self.A.shape[0]} rows")
        self.A.setflags(write=False)
        self.y.setflags(write=False)

    @property
    def n_features(self):
        return self.A.shape[1]

    def _check(self, x):
        x = np.asarray(x, dtype=float).ravel()
        if x.size != self.n_features:
            raise ValueError(f"x has {x.size} entries, expected {self.n_features}")
        return x

    def residual(self, x):
        return self.A @ self._check(x) - self.y

    def value(self, x):
        r = self.residual(x)
        return 0.5 * float(r @ r)

    def gradient(self, x):
        """``A^T (A x - y)``, returned with the shape of `x`."""
        shape = np.shape(x)
        return (self.A.T @ self.residual(x)).reshape(shape)

    @cached_property
    def lipschitz(self):
        """``beta``, the largest eigenvalue of ``A^T A`` (power iteration)."""
        return largest_singular_value_sq(self.A)

    def curvature_on(self, T):
        """Restricted spectrum of ``A^T A`` on the subspace `T`."""
        sigma_m, sigma_M = restricted_operator_spectrum(self.A, T)
        return CurvatureReport(alpha=sigma_m, nu=sigma_M, sigma_m=sigma_m,
                               sigma_M=sigma_M, sigma_max=self.lipschitz)


def gaussian_blur_operator(n, kernel_sigma):
    """Matrix of 1-D convolution with a sampled Gaussian kernel.

    The kernel is truncated at ``ceil(3 * kernel_sigma)`` samples each side and
    renormalized to unit sum; samples falling outside the signal are dropped
    (zero padding), so boundary rows sum to less than one.
    """
    if int(n) != n or n < 3:
        raise ValueError("n must be an integer >= 3")
    if not kernel_sigma > 0:
        raise ValueError("kernel_sigma must be positive")
    n = int(n)
    half = int(np.ceil(3.0 * kernel_sigma))
    offsets = np.arange(-half, half + 1)
    w = np.exp(-0.5 * (offsets / kernel_sigma) ** 2)
    w /= w.sum()
    A = np.zeros((n, n))
    for off, wk in zip(offsets, w):
        A += wk * np.eye(n, k=int(off))
    return A


def blur_least_squares(y, kernel_sigma):
    """Least squares with a Gaussian blur as forward operator."""
    y = as_vector(y, "y")
    return LeastSquares(gaussian_blur_operator(y.size, kernel_sigma), y)
