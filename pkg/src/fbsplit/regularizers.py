"""Partly smooth regularizers.

Each regularizer ``lam * J0`` exposes its value, proximity operator, the
model tangent subspace ``T_x`` at a point, the generalized sign ``e_x`` (the
projection of the subdifferential onto ``T_x``) and the non-degeneracy slack
used by :func:`fbsplit.analysis.certify`.

Points are 1-D arrays, except for :class:`NuclearNorm` which accepts either an
``(n1, n2)`` matrix or its row-major flattening.
"""
import enum
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from .core import SubspaceBasis, as_vector


class SmoothnessClass(enum.Enum):
    """How the active manifold of a regularizer looks near a point."""

    GENERAL_MANIFOLD = "GeneralManifold"
    AFFINE_SUBSPACE = "AffineSubspace"
    LINEAR_SUBSPACE = "LinearSubspace"
    # subspace manifold and locally constant generalized sign
    LINEAR_SUBSPACE_CONSTANT_SIGN = "LinearSubspaceConstantSign"

    @property
    def is_subspace(self):
        return self is not SmoothnessClass.GENERAL_MANIFOLD

    @property
    def constant_sign(self):
        return self is SmoothnessClass.LINEAR_SUBSPACE_CONSTANT_SIGN


@dataclass(frozen=True)
class ModelSubspace:
    """Discrete description of the active manifold at a point plus a basis of ``T_x``.

    ``descriptor`` is hashable and is what manifold membership is decided on.
    ``extra`` holds variant-specific arrays (signs, singular vectors).
    """

    variant: str
    descriptor: tuple
    basis: SubspaceBasis
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def dim(self):
        return self.basis.dim


def default_zero_tol(x):
    return 1e-8 * (1.0 + float(np.max(np.abs(x), initial=0.0)))


def _l1_threshold(x, radius):
    """Threshold ``theta`` with ``sum(max(|x| - theta, 0)) = radius`` (assumes ``||x||_1 > radius``)."""
    a = np.sort(np.abs(x))[::-1]
    cs = np.cumsum(a)
    k = np.arange(1, a.size + 1)
    idx = np.nonzero(a - (cs - radius) / k > 0)[0][-1]
    return (cs[idx] - radius) / (idx + 1)


def project_l1_ball(x, radius):
    """Euclidean projection of `x` onto ``{z : ||z||_1 <= radius}``."""
    x = as_vector(x)
    if not radius > 0:
        raise ValueError("radius must be positive")
    if np.abs(x).sum() <= radius:
        return x.copy()
    theta = _l1_threshold(x, radius)
    return np.sign(x) * np.maximum(np.abs(x) - theta, 0.0)


def soft_threshold(x, tau):
    return np.sign(x) * np.maximum(np.abs(x) - tau, 0.0)


def tv1d_denoise(y, lam):
    """Exact solution of ``min_x 0.5 ||x - y||^2 + lam * sum |x[i+1] - x[i]|``.

    Direct taut-string-type algorithm (Condat, 2013): the output is built
    left to right by tracking the lower and upper admissible segment values
    and emitting a segment whenever the dual variable leaves ``[-lam, lam]``.
    Runs in ``O(n)`` on typical inputs.
    """
    y = as_vector(y, "y")
    n = y.size
    x = np.empty(n)
    if n == 0:
        return x
    if lam <= 0 or n == 1:
        x[:] = y
        return x
    k = k0 = kplus = kminus = 0
    umin, umax = lam, -lam
    vmin, vmax = y[0] - lam, y[0] + lam
    twolam = 2.0 * lam
    while True:
        while k == n - 1:
            if umin < 0.0:
                x[k0:kminus + 1] = vmin
                k0 = kminus + 1
                k = kminus = k0
                vmin = y[k]
                umin = lam
                umax = vmin + umin - vmax
            elif umax > 0.0:
                x[k0:kplus + 1] = vmax
                k0 = kplus + 1
                k = kplus = k0
                vmax = y[k]
                umax = -lam
                umin = vmax + umax - vmin
            else:
                vmin += umin / (k - k0 + 1)
                x[k0:k + 1] = vmin
                return x
        umin += y[k + 1] - vmin
        if umin < -lam:
            x[k0:kminus + 1] = vmin
            k0 = kminus + 1
            k = kplus = kminus = k0
            vmin = y[k]
            vmax = vmin + twolam
            umin, umax = lam, -lam
            continue
        umax += y[k + 1] - vmax
        if umax > lam:
            x[k0:kplus + 1] = vmax
            k0 = kplus + 1
            k = kplus = kminus = k0
            vmax = y[k]
            vmin = vmax - twolam
            umin, umax = lam, -lam
            continue
        k += 1
        if umin >= lam:
            kminus = k
            vmin += (umin - lam) / (kminus - k0 + 1)
            umin = lam
        if umax <= -lam:
            kplus = k
            vmax += (umax + lam) / (kplus - k0 + 1)
            umax = -lam


class Regularizer(ABC):
    """Base class for ``lam * J0`` with ``J0`` a partly smooth gauge.

    Parameters
    ----------
    lam : float
        Nonnegative weight. ``lam = 0`` turns the prox into the identity.
    """

    variant = None
    smoothness_class = None

    def __init__(self, lam):
        lam = float(lam)
        if not np.isfinite(lam) or lam < 0:
            raise ValueError("lam must be a finite nonnegative number")
        self.lam = lam

    def __repr__(self):
        return f"{type(self).__name__}(lam={self.lam!r})"

    # -- shape handling ------------------------------------------------------
    def _check(self, x):
        return as_vector(x)

    # -- core operations ------------------------------------------------------
    def value(self, x):
        return self.lam * self._value0(self._check(x))

    def prox(self, x, gamma):
        """``argmin_z ||z - x||^2 / (2 gamma) + lam * J0(z)``."""
        if not gamma > 0:
            raise ValueError("gamma must be positive")
        return self._prox0(self._check(x), gamma * self.lam)

    def descriptor(self, x, zero_tol=None):
        """Hashable identifier of the active manifold at `x`."""
        x = self._check(x)
        return self._descriptor(x, self._tol(x, zero_tol))

    def model_subspace(self, x, zero_tol=None):
        """Model tangent subspace ``T_x`` with an orthonormal basis."""
        x = self._check(x)
        tol = self._tol(x, zero_tol)
        desc = self._descriptor(x, tol)
        basis, extra = self._basis(x, desc, tol)
        return ModelSubspace(self.variant, desc, basis, extra)

    def generalized_sign(self, x, zero_tol=None):
        """``lam * e_x``, the projection of ``lam * dJ0(x)`` onto ``T_x``."""
        x = self._check(x)
        tol = self._tol(x, zero_tol)
        return self.lam * self._sign0(x, self._descriptor(x, tol), tol)

    def nondegeneracy_margin(self, x, g, zero_tol=None):
        """Slack of ``g`` inside the relative interior of ``lam * dJ0(x)``.

        `g` is the candidate subgradient, typically ``-grad F(x*)``. A positive
        value means ``g`` lies in the relative interior; the caller is
        responsible for checking that ``g`` is a subgradient at all.
        """
        x = self._check(x)
        g = np.asarray(g, dtype=float).reshape(x.shape)
        tol = self._tol(x, zero_tol)
        return float(self._margin(x, g, self._descriptor(x, tol), tol))

    @abstractmethod
    def manifold_dim(self, descriptor, n):
        """Dimension of ``T_x`` read off a descriptor, for points of size `n`."""

    def _tol(self, x, zero_tol):
        if zero_tol is None:
            return default_zero_tol(x)
        if zero_tol < 0:
            raise ValueError("zero_tol must be nonnegative")
        return float(zero_tol)

    @abstractmethod
    def _value0(self, x): ...

    @abstractmethod
    def _prox0(self, x, tau): ...

    @abstractmethod
    def _descriptor(self, x, tol): ...

    @abstractmethod
    def _basis(self, x, desc, tol): ...

    @abstractmethod
    def _sign0(self, x, desc, tol): ...

    @abstractmethod
    def _margin(self, x, g, desc, tol): ...


class L1Norm(Regularizer):
    """``lam * sum |x_i|``; ``T_x`` is the set of vectors supported on ``supp(x)``."""

    variant = "coordinate"
    smoothness_class = SmoothnessClass.LINEAR_SUBSPACE_CONSTANT_SIGN

    def _value0(self, x):
        return np.abs(x).sum()

    def _prox0(self, x, tau):
        return soft_threshold(x, tau)

    def dual_ball_projection(self, x, radius):
        return np.clip(x, -radius, radius)

    def _descriptor(self, x, tol):
        return tuple(int(i) for i in np.nonzero(np.abs(x) > tol)[0])

    def manifold_dim(self, descriptor, n):
        return len(descriptor)

    def _basis(self, x, desc, tol):
        return SubspaceBasis.coordinates(x.size, desc), {}

    def _sign0(self, x, desc, tol):
        e = np.zeros_like(x)
        idx = list(desc)
        e[idx] = np.sign(x[idx])
        return e

    def _margin(self, x, g, desc, tol):
        off = np.ones(x.size, dtype=bool)
        off[list(desc)] = False
        return self.lam - np.max(np.abs(g[off]), initial=0.0)


class GroupL1L2(Regularizer):
    """``lam * sum_b ||x_b||_2`` over a partition of the coordinates into blocks.

    Parameters
    ----------
    lam : float
    groups : array-like
        Either one group label per coordinate or a list of index lists.
    """

    variant = "block"
    smoothness_class = SmoothnessClass.LINEAR_SUBSPACE

    def __init__(self, lam, groups):
        super().__init__(lam)
        self.groups = _parse_groups(groups)
        self.n_features = sum(len(b) for b in self.groups)

    def __repr__(self):
        return f"GroupL1L2(lam={self.lam!r}, n_groups={len(self.groups)})"

    def _check(self, x):
        x = as_vector(x)
        if x.size != self.n_features:
            raise ValueError(f"expected a vector of length {self.n_features}, got {x.size}")
        return x

    def _norms(self, x):
        return np.array([np.linalg.norm(x[b]) for b in self.groups])

    def _value0(self, x):
        return self._norms(x).sum()

    def _prox0(self, x, tau):
        z = np.zeros_like(x)
        for b, nrm in zip(self.groups, self._norms(x)):
            if nrm > tau:
                z[b] = (1.0 - tau / nrm) * x[b]
        return z

    def dual_ball_projection(self, x, radius):
        z = x.copy()
        for b, nrm in zip(self.groups, self._norms(x)):
            if nrm > radius:
                z[b] *= radius / nrm
        return z

    def _descriptor(self, x, tol):
        return tuple(int(j) for j, nrm in enumerate(self._norms(x)) if nrm > tol)

    def manifold_dim(self, descriptor, n):
        return sum(len(self.groups[j]) for j in descriptor)

    def _basis(self, x, desc, tol):
        idx = [i for j in desc for i in self.groups[j]]
        return SubspaceBasis.coordinates(x.size, idx), {}

    def _sign0(self, x, desc, tol):
        e = np.zeros_like(x)
        for j in desc:
            b = self.groups[j]
            e[b] = x[b] / np.linalg.norm(x[b])
        return e

    def _margin(self, x, g, desc, tol):
        active = set(desc)
        slack = [self.lam - np.linalg.norm(g[b])
                 for j, b in enumerate(self.groups) if j not in active]
        return min(slack, default=self.lam)


def _parse_groups(groups):
    if len(groups) and np.ndim(groups[0]) == 0:
        labels = np.asarray(groups)
        blocks = [np.nonzero(labels == lab)[0] for lab in np.unique(labels)]
    else:
        blocks = [np.asarray(b, dtype=int) for b in groups]
    if not blocks or any(b.size == 0 for b in blocks):
        raise ValueError("groups must be non-empty")
    allidx = np.sort(np.concatenate(blocks))
    if not np.array_equal(allidx, np.arange(allidx.size)):
        raise ValueError("groups must partition {0, ..., n-1} without overlap")
    return [b.copy() for b in blocks]


def difference_matrix(n):
    """Forward differences ``(D x)_i = x[i+1] - x[i]`` as an ``(n-1) x n`` matrix."""
    D = np.zeros((n - 1, n))
    i = np.arange(n - 1)
    D[i, i] = -1.0
    D[i, i + 1] = 1.0
    return D


class TotalVariation1D(Regularizer):
    """Anisotropic 1-D total variation ``lam * sum |x[i+1] - x[i]|``.

    ``T_x`` consists of signals that are constant wherever `x` is; its basis
    is the normalized indicators of the constant runs of `x`.
    """

    variant = "tv"
    smoothness_class = SmoothnessClass.LINEAR_SUBSPACE_CONSTANT_SIGN

    def _check(self, x):
        x = as_vector(x)
        if x.size < 2:
            raise ValueError("total variation needs at least two samples")
        return x

    def _value0(self, x):
        return np.abs(np.diff(x)).sum()

    def _prox0(self, x, tau):
        return tv1d_denoise(x, tau)

    def _descriptor(self, x, tol):
        return tuple(int(i) for i in np.nonzero(np.abs(np.diff(x)) > tol)[0])

    def manifold_dim(self, descriptor, n):
        return len(descriptor) + 1

    def _basis(self, x, desc, tol):
        n = x.size
        edges = [0] + [i + 1 for i in desc] + [n]
        B = np.zeros((n, len(edges) - 1))
        for j, (a, b) in enumerate(zip(edges[:-1], edges[1:])):
            B[a:b, j] = 1.0 / np.sqrt(b - a)
        return SubspaceBasis(B), {}

    def _sign0(self, x, desc, tol):
        s = np.zeros(x.size - 1)
        idx = list(desc)
        s[idx] = np.sign(np.diff(x)[idx])
        v = difference_matrix(x.size).T @ s
        basis, _ = self._basis(x, desc, tol)
        B = basis.basis
        return B @ (B.T @ v)

    def _margin(self, x, g, desc, tol):
        # g = D^T u  <=>  u = -cumsum(g)[:-1]; off the jump set |u_i| must stay below lam
        u = -np.cumsum(g)[:-1]
        off = np.ones(x.size - 1, dtype=bool)
        off[list(desc)] = False
        return self.lam - np.max(np.abs(u[off]), initial=0.0)


class LInfNorm(Regularizer):
    """``lam * max |x_i|``.

    At ``x != 0`` with saturation set ``I`` and signs ``s``,
    ``T_x = {a : a_I = r s_I, r real}`` and ``e_x = s / |I|``.
    """

    variant = "saturation"
    smoothness_class = SmoothnessClass.LINEAR_SUBSPACE_CONSTANT_SIGN

    def _value0(self, x):
        return np.max(np.abs(x), initial=0.0)

    def _prox0(self, x, tau):
        if tau == 0.0:
            return x.copy()
        if np.abs(x).sum() <= tau:
            return np.zeros_like(x)
        # x - proj_{tau B_1}(x), written as a clip so saturated entries are exact
        theta = _l1_threshold(x, tau)
        return np.clip(x, -theta, theta)

    def dual_ball_projection(self, x, radius):
        return project_l1_ball(x, radius)

    def _descriptor(self, x, tol):
        top = np.max(np.abs(x), initial=0.0)
        if top <= tol:
            raise ValueError("the saturation set of the l-infinity norm is undefined at x = 0")
        idx = np.nonzero(np.abs(x) >= top - tol)[0]
        return tuple(int(i) for i in idx), tuple(int(np.sign(x[i])) for i in idx)

    def manifold_dim(self, descriptor, n):
        idx, _ = descriptor
        return n - len(idx) + 1

    def _basis(self, x, desc, tol):
        idx, signs = desc
        n = x.size
        sat = np.zeros(n)
        sat[list(idx)] = np.asarray(signs, dtype=float) / np.sqrt(len(idx))
        free = np.setdiff1d(np.arange(n), idx)
        B = np.zeros((n, free.size + 1))
        B[:, 0] = sat
        B[free, np.arange(1, free.size + 1)] = 1.0
        return SubspaceBasis(B), {"signs": np.asarray(signs)}

    def _sign0(self, x, desc, tol):
        idx, signs = desc
        e = np.zeros_like(x)
        e[list(idx)] = np.asarray(signs, dtype=float) / len(idx)
        return e

    def _margin(self, x, g, desc, tol):
        # g = lam * sum_i w_i s_i e_i with convex weights w; relative interior <=> all w_i > 0
        idx, signs = desc
        return np.min(np.asarray(signs) * g[list(idx)])


class NuclearNorm(Regularizer):
    """``lam * ||X||_*`` on ``n1 x n2`` matrices, manifold = matrices of fixed rank."""

    variant = "spectral"
    smoothness_class = SmoothnessClass.GENERAL_MANIFOLD

    def __init__(self, lam, shape):
        super().__init__(lam)
        n1, n2 = (int(s) for s in shape)
        if n1 < 1 or n2 < 1:
            raise ValueError("shape must be positive")
        self.shape = (n1, n2)

    def __repr__(self):
        return f"NuclearNorm(lam={self.lam!r}, shape={self.shape})"

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape not in (self.shape, (self.shape[0] * self.shape[1],)):
            raise ValueError(f"expected shape {self.shape} or its flattening, got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("x contains non-finite entries")
        return x

    def _mat(self, x):
        return x.reshape(self.shape)

    def _value0(self, x):
        return np.linalg.svd(self._mat(x), compute_uv=False).sum()

    def _prox0(self, x, tau):
        U, s, Vt = np.linalg.svd(self._mat(x), full_matrices=False)
        s = np.maximum(s - tau, 0.0)
        r = int(np.count_nonzero(s))
        Z = (U[:, :r] * s[:r]) @ Vt[:r]
        return Z.reshape(x.shape)

    def _descriptor(self, x, tol):
        s = np.linalg.svd(self._mat(x), compute_uv=False)
        return int(np.count_nonzero(s > tol))

    def manifold_dim(self, descriptor, n):
        n1, n2 = self.shape
        return descriptor * (n1 + n2 - descriptor)

    def _factors(self, x, r):
        U, s, Vt = np.linalg.svd(self._mat(x))
        return U, Vt.T, r

    def _basis(self, x, desc, tol):
        n1, n2 = self.shape
        U, V, r = self._factors(x, desc)
        Ur, Uperp, Vr = U[:, :r], U[:, r:], V[:, :r]
        # row-major vec(a b^T) = kron(a, b)
        cols = [np.kron(Ur[:, i], np.eye(n2)[j]) for i in range(r) for j in range(n2)]
        cols += [np.kron(Uperp[:, a], Vr[:, j]) for a in range(n1 - r) for j in range(r)]
        B = np.column_stack(cols) if cols else np.zeros((n1 * n2, 0))
        return SubspaceBasis(B), {"U": Ur, "V": Vr}

    def _sign0(self, x, desc, tol):
        U, V, r = self._factors(x, desc)
        return (U[:, :r] @ V[:, :r].T).reshape(x.shape)

    def _margin(self, x, g, desc, tol):
        U, V, r = self._factors(x, desc)
        G = self._mat(g)
        Uperp, Vperp = U[:, r:], V[:, r:]
        W = Uperp.T @ G @ Vperp
        top = np.linalg.norm(W, 2) if W.size else 0.0
        return self.lam - top


def same_manifold(J, a, b):
    """True iff `a` and `b` (from the same regularizer kind) describe the same manifold.

    For the nuclear norm only the rank is compared, since the manifold is
    the set of matrices of that rank.
    """
    if a.variant != b.variant or a.variant != J.variant:
        raise ValueError(f"cannot compare {a.variant!r} and {b.variant!r} subspaces with {J!r}")
    return a.descriptor == b.descriptor
