"""Forward-Backward iteration ``x+ = prox_{gamma J}(x - gamma grad F(x))``."""
import logging
from dataclasses import dataclass, field
from itertools import count, cycle

import numpy as np

from .core import as_vector

logger = logging.getLogger(__name__)

MAX_STORED_DIM = 4096


class NumericalFailure(FloatingPointError):
    """An iterate became non-finite."""


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes ``gamma_k``.

    Use the constructors :meth:`constant`, :meth:`cyclic` and :meth:`random`.
    """

    mode: str
    values: tuple
    seed: int = 0

    @classmethod
    def constant(cls, gamma):
        return cls("constant", (float(gamma),))

    @classmethod
    def cyclic(cls, gammas):
        gammas = tuple(float(g) for g in gammas)
        if not gammas:
            raise ValueError("cyclic schedule needs at least one step size")
        return cls("cyclic", gammas)

    @classmethod
    def random(cls, gamma_lo, gamma_hi, seed=0):
        if gamma_lo > gamma_hi:
            raise ValueError("gamma_lo must not exceed gamma_hi")
        return cls("random", (float(gamma_lo), float(gamma_hi)), int(seed))

    @property
    def bounds(self):
        return min(self.values), max(self.values)

    def validate(self, beta):
        lo, hi = self.bounds
        if not lo > 0:
            raise ValueError("step sizes must be positive")
        if not hi < 2.0 / beta:
            raise ValueError(
                f"largest step {hi:.6g} violates gamma < 2/beta = {2.0 / beta:.6g}"
            )

    def __iter__(self):
        if self.mode == "constant":
            g = self.values[0]
            return (g for _ in count())
        if self.mode == "cyclic":
            return cycle(self.values)
        if self.mode == "random":
            rng = np.random.default_rng(self.seed)
            lo, hi = self.values
            return (float(rng.uniform(lo, hi)) for _ in count())
        raise ValueError(f"unknown schedule mode {self.mode!r}")


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 50_000
    stop_tol: float = 1e-10
    record_every: int = 1
    zero_tol: float = None
    store_iterates: bool = None  # None: store when n <= 4096

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.stop_tol < 0:
            raise ValueError("stop_tol must be >= 0")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")


@dataclass
class Trajectory:
    """Recorded Forward-Backward run.

    Record ``i`` describes iterate ``x_{k[i]}``; ``gamma[i]`` is the step that
    produced it (for ``k = 0``, the first step taken).
    """

    k: list = field(default_factory=list)
    gamma: list = field(default_factory=list)
    dist: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    descriptor: list = field(default_factory=list)
    manifold_dim: list = field(default_factory=list)
    iterates: list = None
    x_final: np.ndarray = None
    residual: float = np.nan
    n_iter: int = 0
    reason: str = ""
    ref_norm: float = None

    def __len__(self):
        return len(self.k)

    @classmethod
    def from_distances(cls, dists, descriptors=None, ref_norm=0.0):
        """Synthetic trajectory, mostly for testing the analysis helpers."""
        dists = list(map(float, dists))
        n = len(dists)
        descriptors = list(descriptors) if descriptors is not None else [None] * n
        return cls(k=list(range(n)), gamma=[np.nan] * n, dist=dists,
                   objective=[np.nan] * n, descriptor=descriptors,
                   manifold_dim=[-1] * n, n_iter=max(n - 1, 0), reason="synthetic",
                   ref_norm=ref_norm)

    def _append(self, k, gamma, x, F, J, x_ref, zero_tol):
        self.k.append(k)
        self.gamma.append(gamma)
        self.dist.append(float(np.linalg.norm(x - x_ref)) if x_ref is not None else np.nan)
        self.objective.append(F.value(x) + J.value(x))
        try:
            desc = J.descriptor(x, zero_tol)
            dim = J.manifold_dim(desc, x.size)
        except ValueError:
            desc, dim = None, -1
        self.descriptor.append(desc)
        self.manifold_dim.append(dim)
        if self.iterates is not None:
            self.iterates.append(x.copy())


def fb_step(F, J, x, gamma):
    return J.prox(x - gamma * F.gradient(x), gamma)


def fb_solve(F, J, x0, schedule, cfg=SolverConfig(), x_ref=None):
    """Run the Forward-Backward iteration.

    Stops when the fixed-point residual ``||x_{k+1} - x_k|| / gamma_k`` drops
    to ``cfg.stop_tol`` or after ``cfg.max_iters`` iterations.

    Parameters
    ----------
    F : LeastSquares
        Smooth term exposing ``value``, ``gradient`` and ``lipschitz``.
    J : Regularizer
    x0 : array-like
        Starting point (flattened for matrix-valued problems).
    schedule : StepSchedule
        Must satisfy ``max gamma < 2 / beta``.
    cfg : SolverConfig
    x_ref : array-like, optional
        Point to measure ``||x_k - x_ref||`` against.

    Returns
    -------
    Trajectory
    """
    x = as_vector(np.ravel(x0), "x0").copy()
    if x.size != F.n_features:
        raise ValueError(f"x0 has {x.size} entries, expected {F.n_features}")
    schedule.validate(F.lipschitz)
    if x_ref is not None:
        x_ref = as_vector(np.ravel(x_ref), "x_ref")
    store = cfg.store_iterates if cfg.store_iterates is not None else x.size <= MAX_STORED_DIM
    traj = Trajectory(iterates=[] if store else None,
                      ref_norm=float(np.linalg.norm(x_ref)) if x_ref is not None else None)

    steps = iter(schedule)
    gamma = next(steps)
    traj._append(0, gamma, x, F, J, x_ref, cfg.zero_tol)
    reason = "max_iters"
    residual = np.inf
    k = 0
    for k in range(1, cfg.max_iters + 1):
        x_new = fb_step(F, J, x, gamma)
        if not np.all(np.isfinite(x_new)):
            raise NumericalFailure(f"non-finite iterate at iteration {k}")
        residual = float(np.linalg.norm(x_new - x)) / gamma
        x = x_new
        done = residual <= cfg.stop_tol
        if done or k % cfg.record_every == 0 or k == cfg.max_iters:
            traj._append(k, gamma, x, F, J, x_ref, cfg.zero_tol)
        if done:
            reason = "converged"
            break
        gamma = next(steps)
    traj.x_final = x
    traj.residual = residual
    traj.n_iter = k
    traj.reason = reason
    logger.debug("fb_solve stopped after %d iterations (%s), residual %.3e", k, reason, residual)
    return traj


def fixed_point_residual(F, J, x, gamma=None):
    """``||x - prox_{gamma J}(x - gamma grad F(x))|| / gamma``, with ``gamma = 1/beta`` by default."""
    x = np.ravel(np.asarray(x, dtype=float))
    gamma = 1.0 / F.lipschitz if gamma is None else gamma
    return float(np.linalg.norm(x - fb_step(F, J, x, gamma))) / gamma


@dataclass(frozen=True)
class ReferenceSolution:
    x: np.ndarray
    polished: bool
    residual: float
    n_iter: int
    warning: str = None


def _polish(F, J, x, zero_tol):
    """Solve the first-order condition restricted to ``T_x`` exactly.

    For quadratic ``F`` and a locally constant generalized sign ``e``, the
    minimizer ``x* = B u`` on ``T_x = range(B)`` solves
    ``(A B)^T (A B) u = (A B)^T y - B^T e``.
    """
    ms = J.model_subspace(x, zero_tol)
    if ms.dim == 0:
        return np.zeros_like(x), ms
    e = np.ravel(J.generalized_sign(x, zero_tol))
    B = ms.basis.basis
    AB = F.A @ B
    M = AB.T @ AB
    if np.linalg.cond(M) > 1e12:
        raise np.linalg.LinAlgError("restricted system is singular")
    u = np.linalg.solve(M, AB.T @ F.y - B.T @ e)
    return B @ u, ms


def reference_solution(F, J, cfg=SolverConfig(), x0=None, tol=None, chunk=500):
    """High-accuracy minimizer of ``F + J``.

    Runs Forward-Backward with ``gamma = 1/beta`` until the fixed-point
    residual is below `tol` (default ``1e-12 (1 + ||y||)``). When ``J`` has a
    locally constant generalized sign and ``F`` is quadratic, the restricted
    first-order system on ``T_x`` is solved exactly; the polished point is
    kept only if it has the same manifold descriptor, a positive
    non-degeneracy margin and a residual below `tol`. Otherwise the iterate
    is returned with ``polished=False`` and, if polishing was impossible, a
    ``warning``.

    Without polishing, iterations continue past `tol` until the residual
    stagnates, so that the returned point is accurate to rounding level.
    """
    gamma = 1.0 / F.lipschitz
    y_norm = float(np.linalg.norm(F.y)) if hasattr(F, "y") else 0.0
    tol = 1e-12 * (1.0 + y_norm) if tol is None else tol
    x = np.zeros(F.n_features) if x0 is None else np.ravel(np.asarray(x0, dtype=float)).copy()
    can_polish = J.smoothness_class.constant_sign and hasattr(F, "A")
    warning = None
    singular = False
    n_iter = 0
    last_desc = None
    best = np.inf
    stall = 0
    sub = SolverConfig(max_iters=chunk, stop_tol=0.0, record_every=chunk + 1,
                       zero_tol=cfg.zero_tol, store_iterates=False)
    while n_iter < cfg.max_iters:
        traj = fb_solve(F, J, x, StepSchedule.constant(gamma), sub)
        x = traj.x_final
        n_iter += traj.n_iter
        res = traj.residual
        try:
            desc = J.descriptor(x, cfg.zero_tol)
        except ValueError:
            desc = None
        if can_polish and desc is not None and desc == last_desc and res < 1e-3 * (1.0 + y_norm):
            try:
                xp, ms = _polish(F, J, x, cfg.zero_tol)
            except np.linalg.LinAlgError:
                # descriptor may still be premature; retry at the next checkpoint
                singular = True
            else:
                if _accept_polish(F, J, xp, ms, tol, cfg.zero_tol):
                    return ReferenceSolution(xp, True, fixed_point_residual(F, J, xp), n_iter)
                if res <= tol:
                    # converged but polish rejected (e.g. degenerate point): stop trying
                    can_polish = False
        last_desc = desc
        if res <= tol:
            # keep going until rounding noise dominates
            if res < 0.5 * best:
                best, stall = res, 0
            else:
                stall += 1
            if stall >= 2:
                break
    res = fixed_point_residual(F, J, x)
    if singular:
        warning = "restricted system singular; returning unpolished iterate"
    if res > tol:
        warning = warning or f"reference residual {res:.3e} above tolerance {tol:.3e}"
        logger.warning(warning)
    return ReferenceSolution(x, False, res, n_iter, warning)


def _accept_polish(F, J, xp, ms, tol, zero_tol):
    try:
        if J.descriptor(xp, zero_tol) != ms.descriptor:
            return False
    except ValueError:
        return False
    margin = J.nondegeneracy_margin(xp, -F.gradient(xp), zero_tol)
    return margin > 0 and fixed_point_residual(F, J, xp) <= tol
