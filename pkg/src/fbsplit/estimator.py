"""Scikit-learn compatible front end: ``min_w 0.5 ||X w - y||^2 + alpha * J(w)``."""
import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from . import analysis
from .regularizers import GroupL1L2, L1Norm, LInfNorm, NuclearNorm, TotalVariation1D
from .smooth import LeastSquares
from .solver import SolverConfig, StepSchedule, fb_solve

PENALTIES = ("l1", "tv", "linf", "group", "nuclear")


def make_penalty(penalty, alpha, n_features, groups=None, coef_shape=None):
    """Regularizer instance for a penalty name."""
    if penalty == "l1":
        return L1Norm(alpha)
    if penalty == "tv":
        return TotalVariation1D(alpha)
    if penalty == "linf":
        return LInfNorm(alpha)
    if penalty == "group":
        if groups is None:
            raise ValueError("penalty='group' needs `groups`")
        J = GroupL1L2(alpha, groups)
        if J.n_features != n_features:
            raise ValueError(f"groups cover {J.n_features} features, X has {n_features}")
        return J
    if penalty == "nuclear":
        if coef_shape is None or int(np.prod(coef_shape)) != n_features:
            raise ValueError("penalty='nuclear' needs coef_shape with prod(coef_shape) == n_features")
        return NuclearNorm(alpha, coef_shape)
    raise ValueError(f"penalty must be one of {PENALTIES}, got {penalty!r}")


class ForwardBackwardRegressor(RegressorMixin, BaseEstimator):
    """Linear regression with a partly smooth penalty, fitted by Forward-Backward.

    Minimizes ``0.5 * ||X w - y||^2 + alpha * J(w)`` with
    ``w+ = prox_{gamma alpha J}(w - gamma X^T (X w - y))``.

    Parameters
    ----------
    penalty : {'l1', 'tv', 'linf', 'group', 'nuclear'}
    alpha : float
        Penalty weight.
    step : float, default=1.0
        Step size in units of ``1/beta``, ``beta = ||X||_2^2``; must lie in ``(0, 2)``.
    max_iter : int
    tol : float
        Stop when the fixed-point residual ``||w_{k+1} - w_k|| / gamma`` is below `tol`.
    groups : array-like, optional
        Block labels (one per feature) or index lists for ``penalty='group'``.
    coef_shape : tuple, optional
        ``(n1, n2)`` for ``penalty='nuclear'``; ``coef_`` is the row-major flattening.
    record_every : int
        Trajectory sampling period.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
    n_iter_ : int
    trajectory_ : Trajectory
    regularizer_ : Regularizer
    lipschitz_ : float
    manifold_ : ModelSubspace
        Active model subspace at ``coef_``.
    """

    def __init__(self, penalty="l1", alpha=1.0, step=1.0, max_iter=10_000, tol=1e-8,
                 groups=None, coef_shape=None, record_every=1):
        self.penalty = penalty
        self.alpha = alpha
        self.step = step
        self.max_iter = max_iter
        self.tol = tol
        self.groups = groups
        self.coef_shape = coef_shape
        self.record_every = record_every

    def fit(self, X, y, coef_init=None):
        X, y = validate_data(self, X, y, y_numeric=True)
        if not 0 < self.step < 2:
            raise ValueError("step must lie in (0, 2) (units of 1/beta)")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        n_features = X.shape[1]
        J = make_penalty(self.penalty, self.alpha, n_features, self.groups, self.coef_shape)
        F = LeastSquares(X, y)
        beta = F.lipschitz
        w0 = np.zeros(n_features) if coef_init is None else np.ravel(coef_init)
        cfg = SolverConfig(max_iters=self.max_iter, stop_tol=self.tol,
                           record_every=self.record_every, store_iterates=False)
        traj = fb_solve(F, J, w0, StepSchedule.constant(self.step / beta), cfg)
        self.coef_ = traj.x_final
        self.n_iter_ = traj.n_iter
        self.trajectory_ = traj
        self.regularizer_ = J
        self.lipschitz_ = beta
        self._fidelity = F
        try:
            self.manifold_ = J.model_subspace(self.coef_)
        except ValueError:
            self.manifold_ = None  # e.g. l-infinity at w = 0
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = validate_data(self, X, reset=False)
        return X @ self.coef_

    def certify(self, stationarity_tol=1e-6):
        """Non-degeneracy and restricted injectivity at the fitted coefficients."""
        check_is_fitted(self, "coef_")
        return analysis.certify(self._fidelity, self.regularizer_, self.coef_,
                                stationarity_tol=stationarity_tol)


__all__ = ["ForwardBackwardRegressor", "make_penalty"]
