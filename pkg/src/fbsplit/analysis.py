"""Identification detection, assumption certificates and local rate predictions."""
import warnings
from dataclasses import dataclass

import numpy as np

from .regularizers import ModelSubspace, SmoothnessClass
from .smooth import CurvatureReport
from .solver import fixed_point_residual

EPS = np.finfo(float).eps


class StaleCertificateError(ValueError):
    """The point handed to :func:`certify` is not (numerically) stationary."""


class RateDomainError(ValueError):
    """Step sizes outside the range where a rate formula applies."""

    def __init__(self, msg, valid_interval):
        super().__init__(f"{msg}; valid step interval is (0, {valid_interval[1]:.6g})")
        self.valid_interval = valid_interval


class DegenerateSpectrumError(ValueError):
    """``sigma_m = 0``: restricted injectivity fails."""


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class CertificateReport:
    nondegeneracy_margin: float
    alpha: float
    restricted_injectivity: bool
    curvature: CurvatureReport = None
    residual: float = 0.0
    manifold_dim: int = 0
    margin_tol: float = 0.0

    @property
    def nondegenerate(self):
        return self.nondegeneracy_margin > self.margin_tol

    @property
    def uniqueness_implied(self):
        return self.nondegenerate and self.restricted_injectivity

    @property
    def passed(self):
        return self.uniqueness_implied

    def items(self):
        return [
            ("nondegeneracy_margin", self.nondegeneracy_margin),
            ("alpha", self.alpha),
            ("restricted_injectivity", self.restricted_injectivity),
            ("uniqueness_implied", self.uniqueness_implied),
            ("manifold_dim", self.manifold_dim),
            ("residual", self.residual),
        ]


def certify(F, J, x_star, zero_tol=None, stationarity_tol=1e-8):
    """Check non-degeneracy and restricted injectivity at `x_star`.

    The margin is the regularizer-specific slack of ``-grad F(x*)`` inside
    the relative interior of ``lam dJ0(x*)``; ``alpha`` is the smallest
    eigenvalue of ``A^T A`` restricted to ``T_{x*}``.

    Raises
    ------
    StaleCertificateError
        If the fixed-point residual at `x_star` exceeds `stationarity_tol`.
    """
    x = np.ravel(np.asarray(x_star, dtype=float))
    res = fixed_point_residual(F, J, x)
    if res > stationarity_tol:
        raise StaleCertificateError(
            f"x_star is not stationary: fixed-point residual {res:.3e} > {stationarity_tol:.1e}"
        )
    ms = J.model_subspace(x, zero_tol)
    margin = J.nondegeneracy_margin(x, -F.gradient(x), zero_tol)
    if ms.dim:
        curv = F.curvature_on(ms.basis)
        alpha = curv.alpha
    else:
        # T = {0}: injectivity on T holds trivially
        curv, alpha = None, np.inf
    alpha_tol = 1e-10 * max(1.0, F.lipschitz)
    return CertificateReport(
        nondegeneracy_margin=margin,
        alpha=alpha,
        restricted_injectivity=bool(alpha > alpha_tol),
        curvature=curv,
        residual=res,
        manifold_dim=ms.dim,
        margin_tol=1e-10 * max(1.0, J.lam),
    )


@dataclass(frozen=True)
class RatePrediction:
    """Closed-form local linear rate.

    ``rho`` is the guaranteed per-step contraction over the step sizes given;
    ``rhos`` holds the value for each distinct step. ``upper_bound`` marks
    predictions known to be conservative for the regularizer at hand.
    """

    regime: str
    rho: float
    rhos: tuple
    params: dict
    gamma_validity: tuple
    gamma_opt: float
    rho_opt: float
    upper_bound: bool = False
    note: str = ""

    def rate_at(self, gamma):
        """Per-step rate formula evaluated at `gamma`."""
        return _rate_fn(self.regime, self.params)(gamma)

    def items(self):
        out = [("regime", self.regime), ("rho", self.rho)]
        out += list(self.params.items())
        out += [("gamma_validity_hi", self.gamma_validity[1]),
                ("gamma_opt", self.gamma_opt), ("rho_opt", self.rho_opt),
                ("upper_bound", self.upper_bound)]
        return out


def _steps(gammas):
    g = np.atleast_1d(np.asarray(gammas, dtype=float))
    if g.size == 0:
        raise ValueError("at least one step size is required")
    return g


def _check_range(g, hi, what):
    if np.any(g <= 0) or np.max(g) >= hi:
        raise RateDomainError(f"step sizes {g.min():.6g}..{g.max():.6g} invalid for {what}", (0.0, hi))


def _sqrt_q(alpha, L):
    return lambda g: float(np.sqrt(max(1.0 - 2.0 * alpha * g + L * L * g * g, 0.0)))


def _rate_fn(regime, p):
    if regime in ("Q_general", "Degenerate_PSFLS"):
        return _sqrt_q(p["alpha"], p["beta"])
    if regime == "R_subspace":
        return _sqrt_q(p["alpha"], p["nu"])
    if regime == "Q_quadratic":
        return _sqrt_q(p["sigma_m"], p["sigma_max"])
    if regime == "R_quadratic":
        sm, sM = p["sigma_m"], p["sigma_M"]
        return lambda g: float(max(abs(1.0 - g * sm), abs(1.0 - g * sM)))
    raise ValueError(f"unknown regime {regime!r}")


def predict_rate_q_general(alpha, beta, gamma_lo, gamma_hi=None):
    """Q-linear rate ``sqrt(max(q(gamma_lo), q(gamma_hi)))``, ``q(g) = 1 - 2 alpha g + beta^2 g^2``.

    Valid for ``0 < gamma_lo <= gamma_hi < min(2 alpha / beta^2, 2 / beta)``.
    """
    gamma_hi = gamma_lo if gamma_hi is None else gamma_hi
    if not 0 < alpha <= beta:
        raise ValueError("need 0 < alpha <= beta")
    hi = min(2.0 * alpha / beta**2, 2.0 / beta)
    g = _steps([gamma_lo, gamma_hi])
    if gamma_lo > gamma_hi:
        raise ValueError("gamma_lo must not exceed gamma_hi")
    _check_range(g, hi, "the Q-linear rate")
    fn = _sqrt_q(alpha, beta)
    rhos = tuple(fn(v) for v in g)
    return RatePrediction(
        regime="Q_general", rho=max(rhos), rhos=rhos,
        params={"alpha": alpha, "beta": beta},
        gamma_validity=(0.0, hi), gamma_opt=alpha / beta**2,
        rho_opt=float(np.sqrt(1.0 - (alpha / beta) ** 2)),
    )


def predict_rate_r_subspace(alpha, nu, beta, gammas, upper_bound=False):
    """Per-step rate ``rho_k^2 = 1 - 2 alpha gamma_k + nu^2 gamma_k^2`` on a subspace manifold.

    ``gamma_opt = alpha / nu^2`` gives ``rho_opt = sqrt(1 - alpha^2 / nu^2)``.
    """
    if not 0 < alpha <= nu <= beta * (1 + 1e-6):
        raise ValueError("need 0 < alpha <= nu <= beta")
    hi = min(2.0 * alpha / nu**2, 2.0 / beta)
    g = _steps(gammas)
    _check_range(g, hi, "the subspace rate")
    fn = _sqrt_q(alpha, nu)
    uniq = tuple(dict.fromkeys(g.tolist()))
    rhos = tuple(fn(v) for v in uniq)
    gamma_opt = alpha / nu**2
    return RatePrediction(
        regime="R_subspace", rho=max(rhos), rhos=rhos,
        params={"alpha": alpha, "nu": nu, "beta": beta},
        gamma_validity=(0.0, hi), gamma_opt=gamma_opt,
        rho_opt=float(np.sqrt(max(1.0 - (alpha / nu) ** 2, 0.0))),
        upper_bound=upper_bound,
        note="" if gamma_opt <= max(g) else "gamma_opt exceeds the largest step given",
    )


def predict_rate_quadratic(sigma_m, sigma_M, sigma_max, gammas, smoothness_class,
                           branch="auto", tangent_linearization=False):
    """Refined rates for ``F = 0.5 ||A x - y||^2``.

    R-branch (subspace manifolds, ``0 < gamma < 2 / sigma_max``):
    ``rho = max(|1 - gamma sigma_m|, |1 - gamma sigma_M|)`` at the extreme steps,
    optimal ``(phi - 1) / (phi + 1)`` at ``gamma = 2 / (sigma_m + sigma_M)`` with
    ``phi = sigma_M / sigma_m``.

    Q-branch (any manifold, ``0 < gamma < 2 sigma_m / sigma_max^2``):
    ``q(gamma) = 1 - 2 sigma_m gamma + sigma_max^2 gamma^2``.

    ``tangent_linearization=True`` allows the R-branch formula on a curved
    manifold, where it describes the iteration linearized on the tangent space
    rather than a proven bound.
    """
    if not sigma_m > 0:
        raise DegenerateSpectrumError(
            "sigma_m <= 0: ker(A) meets T; use predict_rate_degenerate instead"
        )
    if not sigma_m <= sigma_M <= sigma_max * (1 + 1e-6):
        raise ValueError("need sigma_m <= sigma_M <= sigma_max")
    smoothness_class = SmoothnessClass(smoothness_class)
    if branch == "auto":
        branch = "R" if smoothness_class.is_subspace or tangent_linearization else "Q"
    g = _steps(gammas)
    phi = sigma_M / sigma_m
    if branch == "R":
        if not (smoothness_class.is_subspace or tangent_linearization):
            raise ValueError("the R-linear rate needs a subspace (linear or affine) manifold")
        hi = 2.0 / sigma_max
        _check_range(g, hi, "the quadratic R-linear rate")

        def fn(v):
            return float(max(abs(1.0 - v * sigma_m), abs(1.0 - v * sigma_M)))

        # l(gamma) is convex piecewise linear: its max over [lo, hi] sits at an endpoint
        ends = (float(g.min()), float(g.max()))
        rhos = tuple(fn(v) for v in dict.fromkeys(ends))
        return RatePrediction(
            regime="R_quadratic", rho=max(rhos), rhos=rhos,
            params={"sigma_m": sigma_m, "sigma_M": sigma_M, "sigma_max": sigma_max,
                    "phi": phi},
            gamma_validity=(0.0, hi), gamma_opt=2.0 / (sigma_m + sigma_M),
            rho_opt=(phi - 1.0) / (phi + 1.0),
            upper_bound=not smoothness_class.constant_sign,
            note="tangent-space linearization" if not smoothness_class.is_subspace else "",
        )
    if branch == "Q":
        hi = 2.0 * sigma_m / sigma_max**2
        _check_range(g, hi, "the quadratic Q-linear rate")
        fn = _sqrt_q(sigma_m, sigma_max)
        ends = (float(g.min()), float(g.max()))
        rhos = tuple(fn(v) for v in dict.fromkeys(ends))
        return RatePrediction(
            regime="Q_quadratic", rho=max(rhos), rhos=rhos,
            params={"sigma_m": sigma_m, "sigma_M": sigma_M, "sigma_max": sigma_max,
                    "phi": phi},
            gamma_validity=(0.0, hi), gamma_opt=sigma_m / sigma_max**2,
            rho_opt=float(np.sqrt(1.0 - (sigma_m / sigma_max) ** 2)),
        )
    raise ValueError(f"unknown branch {branch!r}")


def predict_rate_degenerate(F, T, gammas, rel_tol=1e-10):
    """Rate when ``A`` is not injective on ``T`` (locally constant sign only).

    ``V = ker(A) on T`` is invariant along the iteration, and the contraction
    happens on ``T minus V`` with ``alpha`` the smallest nonzero eigenvalue of
    ``B^T A^T A B``. The result is an R-linear bound ``C rho^k`` with
    ``rho^2 = max q(gamma)``, ``q(gamma) = 1 - 2 alpha gamma + beta^2 gamma^2``.
    """
    B = T.basis.basis if isinstance(T, ModelSubspace) else T.basis
    if B.shape[1] == 0:
        raise ValueError("empty subspace")
    AB = F.A @ B
    ev = np.linalg.eigvalsh(AB.T @ AB)
    cut = rel_tol * max(ev[-1], EPS)
    nonzero = ev[ev > cut]
    if nonzero.size == 0:
        raise DegenerateSpectrumError("A vanishes on T")
    kernel_dim = int(ev.size - nonzero.size)
    if kernel_dim == 0:
        warnings.warn("A is injective on T; predict_rate_quadratic gives sharper rates",
                      stacklevel=2)
    alpha = float(nonzero[0])
    beta = F.lipschitz
    hi = min(2.0 * alpha / beta**2, 2.0 / beta)
    g = _steps(gammas)
    _check_range(g, hi, "the degenerate rate")
    fn = _sqrt_q(alpha, beta)
    ends = (float(g.min()), float(g.max()))
    rhos = tuple(fn(v) for v in dict.fromkeys(ends))
    return RatePrediction(
        regime="Degenerate_PSFLS", rho=max(rhos), rhos=rhos,
        params={"alpha": alpha, "beta": beta, "kernel_dim": kernel_dim},
        gamma_validity=(0.0, hi), gamma_opt=alpha / beta**2,
        rho_opt=float(np.sqrt(1.0 - (alpha / beta) ** 2)),
        note="R-linear: ||x_k - x*|| <= C rho^k",
    )


@dataclass(frozen=True)
class IdentificationResult:
    K: int
    descriptor: object
    confirming: int = 0

    @property
    def identified(self):
        return self.K is not None


def detect_identification(traj, target, J=None):
    """First recorded iteration from which every recorded descriptor equals `target`.

    Parameters
    ----------
    traj : Trajectory
    target : ModelSubspace or descriptor
        Typically ``J.model_subspace(x_ref)``.
    J : Regularizer, optional
        Used to check that `target` belongs to the same regularizer kind.
    """
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    if isinstance(target, ModelSubspace):
        if J is not None and target.variant != J.variant:
            raise ValueError("target subspace comes from a different regularizer kind")
        target = target.descriptor
    K_idx = None
    for i in range(len(traj) - 1, -1, -1):
        if traj.descriptor[i] != target:
            break
        K_idx = i
    if K_idx is None:
        return IdentificationResult(None, target, 0)
    return IdentificationResult(traj.k[K_idx], target, len(traj) - 1 - K_idx)


def noise_floor(ref_norm):
    return 1e3 * EPS * (1.0 + ref_norm)


def fit_observed_rate(traj, from_k=0, min_points=10):
    """``exp`` of the least-squares slope of ``log ||x_k - x_ref||`` against ``k``.

    The window starts at the first record with ``k >= from_k`` and stops at
    the first distance below ``1e3 eps (1 + ||x_ref||)``.
    """
    k = np.asarray(traj.k, dtype=float)
    d = np.asarray(traj.dist, dtype=float)
    if np.all(np.isnan(d)):
        raise InsufficientDataError("trajectory has no distances (no reference point)")
    floor = noise_floor(traj.ref_norm or 0.0)
    start = int(np.searchsorted(k, from_k))
    below = np.nonzero(d[start:] <= floor)[0]
    stop = start + (below[0] if below.size else d.size - start)
    kw, dw = k[start:stop], d[start:stop]
    if kw.size < min_points:
        raise InsufficientDataError(
            f"only {kw.size} points above the noise floor after k = {from_k}"
        )
    slope = np.polyfit(kw, np.log(dw), 1)[0]
    return float(np.exp(slope))
