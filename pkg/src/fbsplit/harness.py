"""Seeded recovery experiments: build an instance, certify, predict, run, compare.

Randomness
----------
Every experiment draws from NumPy's PCG64 generator. The experiment seed is
turned into a :class:`numpy.random.SeedSequence` and split with ``spawn(4)``
into one child stream per generated object, in this order:

0. measurement matrix ``A``
1. ground-truth signal ``x0``
2. noise ``eps``
3. random starting points (uniqueness checks) and random step schedules
"""
import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import analysis
from .core import thin_svd
from .regularizers import (GroupL1L2, L1Norm, LInfNorm, NuclearNorm, SmoothnessClass,
                           TotalVariation1D)
from .smooth import LeastSquares, gaussian_blur_operator
from .solver import SolverConfig, StepSchedule, fb_solve, reference_solution

logger = logging.getLogger(__name__)

REGULARIZERS = ("l1", "tv", "linf", "group", "nuclear")
STREAM_A, STREAM_SIGNAL, STREAM_NOISE, STREAM_STARTS = range(4)
MIN_CONFIRMING = 50
POLYHEDRAL_REL_TOL = 0.05
BOUND_ABS_TOL = 0.02


@dataclass(frozen=True)
class ExperimentSpec:
    """Parameters of one recovery experiment.

    ``sparsity`` is the number of nonzeros (``l1``) or of jumps (``tv``).
    ``delta`` and ``lam`` default to ``noise_level * ||A x0|| / sqrt(m)`` and
    ``lam_scale * 2 delta sqrt(2 log n)``. When ``kernel_sigma`` is set, ``A`` is a
    Gaussian blur of size ``n x n`` instead of a Gaussian random matrix.
    """

    name: str
    regularizer: str
    m: int = 48
    n: int = 128
    shape: tuple = None
    sparsity: int = 8
    saturation: int = 10
    block_size: int = 4
    active_blocks: int = 2
    rank: int = 3
    kernel_sigma: float = None
    noise_level: float = 0.01
    delta: float = None
    lam: float = None
    lam_scale: float = 1.0
    seed: int = 0
    gamma: str = "auto"
    max_iters: int = 50_000
    record_every: int = 1
    stop_tol: float = None

    def __post_init__(self):
        if self.regularizer not in REGULARIZERS:
            raise ValueError(f"regularizer must be one of {REGULARIZERS}")
        if self.regularizer == "nuclear":
            if self.shape is None or len(self.shape) != 2:
                raise ValueError("nuclear experiments need shape=(n1, n2)")
            object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
            object.__setattr__(self, "n", self.shape[0] * self.shape[1])
        if self.kernel_sigma is not None:
            object.__setattr__(self, "m", self.n)
        if self.m < 1 or self.n < 1:
            raise ValueError("dimensions must be positive")
        if self.delta is not None and self.delta < 0:
            raise ValueError("delta must be >= 0")
        if self.lam is not None and self.lam < 0:
            raise ValueError("lam must be >= 0")
        if not self.lam_scale > 0:
            raise ValueError("lam_scale must be positive")

    @property
    def n_features(self):
        return self.n


BUILTINS = {
    "lasso-a": ExperimentSpec("lasso-a", "l1", m=48, n=128, sparsity=8, seed=1),
    "tv-b": ExperimentSpec("tv-b", "tv", m=48, n=128, sparsity=8, seed=1),
    "linf-c": ExperimentSpec("linf-c", "linf", m=123, n=128, saturation=10, seed=2,
                             max_iters=80_000, record_every=10),
    # the dual norm of A^T eps grows faster than 2 delta sqrt(2 log n) for blocks and
    # spectra, so lam is scaled up until the minimizer is certified (and, for the
    # nuclear norm, until spurious small singular values are thresholded away)
    "group-d": ExperimentSpec("group-d", "group", m=48, n=128, block_size=4,
                              active_blocks=2, lam_scale=8.0, seed=2),
    "nuclear-e": ExperimentSpec("nuclear-e", "nuclear", m=228, shape=(20, 20), rank=3,
                                lam_scale=160.0, seed=6),
    "deconv": ExperimentSpec("deconv", "tv", n=128, sparsity=8, kernel_sigma=2.0, seed=1),
}
# full-size low-rank setting; slow, not part of "all"
EXTRA = {
    "nuclear-e-full": ExperimentSpec("nuclear-e-full", "nuclear", m=1425, shape=(50, 50),
                                     rank=5, lam_scale=160.0, seed=1),
}


def get_builtin(name):
    try:
        return {**BUILTINS, **EXTRA}[name]
    except KeyError:
        raise ValueError(f"unknown builtin {name!r}; choose from {sorted({**BUILTINS, **EXTRA})}")


def streams(seed):
    return np.random.SeedSequence(seed).spawn(4)


def gen_gaussian_matrix(m, n, seed):
    """``m x n`` matrix with i.i.d. standard normal entries from PCG64 seeded by `seed`."""
    if m < 1 or n < 1:
        raise ValueError("m and n must be >= 1")
    return np.random.default_rng(seed).standard_normal((m, n))


def group_labels(spec):
    if spec.n % spec.block_size:
        raise ValueError("block_size must divide n")
    return np.arange(spec.n) // spec.block_size


def gen_signal(spec, seed):
    """Ground truth with the structure requested by `spec` (flattened for matrices)."""
    rng = np.random.default_rng(seed)
    n = spec.n
    kind = spec.regularizer
    if kind == "l1":
        if not 0 <= spec.sparsity <= n:
            raise ValueError("sparsity must lie in [0, n]")
        x = np.zeros(n)
        idx = rng.choice(n, spec.sparsity, replace=False)
        x[idx] = rng.choice([-1.0, 1.0], spec.sparsity) * rng.uniform(0.5, 1.5, spec.sparsity)
        return x
    if kind == "tv":
        if not 0 <= spec.sparsity <= n - 1:
            raise ValueError("jump count must lie in [0, n-1]")
        jumps = np.zeros(n - 1)
        idx = rng.choice(n - 1, spec.sparsity, replace=False)
        jumps[idx] = rng.choice([-1.0, 1.0], spec.sparsity) * rng.uniform(0.5, 1.5, spec.sparsity)
        start = rng.uniform(-1.0, 1.0)
        return start + np.concatenate([[0.0], np.cumsum(jumps)])
    if kind == "linf":
        if not 1 <= spec.saturation <= n:
            raise ValueError("saturation count must lie in [1, n]")
        x = rng.uniform(-0.9, 0.9, n)
        idx = rng.choice(n, spec.saturation, replace=False)
        x[idx] = rng.choice([-1.0, 1.0], spec.saturation)
        return x
    if kind == "group":
        labels = group_labels(spec)
        n_blocks = labels.max() + 1
        if not 0 <= spec.active_blocks <= n_blocks:
            raise ValueError("too many active blocks")
        x = np.zeros(n)
        for b in rng.choice(n_blocks, spec.active_blocks, replace=False):
            x[labels == b] = rng.standard_normal(spec.block_size)
        return x
    if kind == "nuclear":
        n1, n2 = spec.shape
        if not 0 <= spec.rank <= min(n1, n2):
            raise ValueError("rank exceeds matrix dimensions")
        L = rng.standard_normal((n1, spec.rank))
        R = rng.standard_normal((n2, spec.rank))
        return (L @ R.T).ravel()
    raise ValueError(kind)


def make_regularizer(spec, lam):
    kind = spec.regularizer
    if kind == "l1":
        return L1Norm(lam)
    if kind == "tv":
        return TotalVariation1D(lam)
    if kind == "linf":
        return LInfNorm(lam)
    if kind == "group":
        return GroupL1L2(lam, group_labels(spec))
    return NuclearNorm(lam, spec.shape)


@dataclass
class Problem:
    spec: ExperimentSpec
    F: LeastSquares
    J: object
    x_true: np.ndarray
    delta: float


def build_problem(spec):
    """Generate ``A``, ``x0``, noise and ``y = A x0 + eps`` for `spec`."""
    ss = streams(spec.seed)
    if spec.kernel_sigma is not None:
        A = gaussian_blur_operator(spec.n, spec.kernel_sigma)
    else:
        A = gen_gaussian_matrix(spec.m, spec.n, ss[STREAM_A])
    x_true = gen_signal(spec, ss[STREAM_SIGNAL])
    Ax = A @ x_true
    delta = spec.delta
    if delta is None:
        delta = spec.noise_level * np.linalg.norm(Ax) / np.sqrt(spec.m)
    y = Ax + delta * np.random.default_rng(ss[STREAM_NOISE]).standard_normal(spec.m)
    lam = spec.lam
    if lam is None:
        lam = spec.lam_scale * 2.0 * delta * np.sqrt(2.0 * np.log(spec.n))
    return Problem(spec, LeastSquares(A, y), make_regularizer(spec, lam), x_true, float(delta))


def make_schedule(policy, beta, curvature=None, smoothness_class=None, seed=None):
    """Turn a step policy string into a :class:`StepSchedule`.

    Policies: ``auto``, ``inv-beta``, ``const:c``, ``cyclic:c1,c2,...`` and
    ``random:lo,hi``; numbers are multiples of ``1/beta``. ``auto`` uses
    ``1/beta``, except on non-polyhedral subspace manifolds where it takes
    ``min(1/beta, alpha/nu^2)`` so the subspace rate applies.
    """
    policy = policy.strip()
    if policy == "auto":
        g = 1.0 / beta
        if (curvature is not None and smoothness_class is SmoothnessClass.LINEAR_SUBSPACE
                and curvature.alpha > 0):
            g = min(g, curvature.alpha / curvature.nu**2)
        return StepSchedule.constant(g)
    if policy == "inv-beta":
        return StepSchedule.constant(1.0 / beta)
    mode, _, args = policy.partition(":")
    try:
        vals = [float(v) / beta for v in args.split(",")]
    except ValueError:
        raise ValueError(f"bad step policy {policy!r}")
    if mode == "const" and len(vals) == 1:
        return StepSchedule.constant(vals[0])
    if mode == "cyclic" and vals:
        return StepSchedule.cyclic(vals)
    if mode == "random" and len(vals) == 2:
        seed = np.random.SeedSequence(seed).generate_state(1)[0] if seed is not None else 0
        return StepSchedule.random(vals[0], vals[1], int(seed))
    raise ValueError(f"bad step policy {policy!r}")


def predict_for(J, curvature, schedule):
    """Rate prediction matching the structure of `J` (``None`` when out of range)."""
    gammas = list(schedule.bounds)
    cls = J.smoothness_class
    c = curvature
    try:
        if cls is SmoothnessClass.LINEAR_SUBSPACE:
            return analysis.predict_rate_r_subspace(c.alpha, c.nu, c.sigma_max, gammas,
                                                    upper_bound=True)
        return analysis.predict_rate_quadratic(c.sigma_m, c.sigma_M, c.sigma_max, gammas, cls,
                                               branch="R", tangent_linearization=True)
    except ValueError as exc:
        logger.warning("no rate prediction: %s", exc)
        return None


@dataclass
class ExperimentReport:
    name: str
    regularizer: str
    lam: float
    delta: float
    beta: float
    gamma: float
    reference_polished: bool
    certificate: analysis.CertificateReport
    identification: analysis.IdentificationResult = None
    prediction: analysis.RatePrediction = None
    observed_rate: float = None
    trajectory: object = None
    flags: dict = field(default_factory=dict)
    x_ref: np.ndarray = None

    @property
    def passed(self):
        return all(self.flags.values())

    def rows(self):
        """``(field, value)`` pairs for the report CSV."""
        cert = self.certificate
        out = [("name", self.name), ("regularizer", self.regularizer), ("lam", self.lam),
               ("delta", self.delta), ("beta", self.beta), ("gamma", self.gamma),
               ("reference_polished", self.reference_polished)]
        out += [(f"certificate.{k}", v) for k, v in cert.items()]
        if cert.curvature is not None:
            out += [(f"curvature.{k}", v) for k, v in asdict(cert.curvature).items()]
        if self.identification is not None:
            out += [("identification.K", self.identification.K),
                    ("identification.confirming", self.identification.confirming)]
        if self.trajectory is not None:
            out += [("trajectory.n_iter", self.trajectory.n_iter),
                    ("trajectory.reason", self.trajectory.reason),
                    ("trajectory.records", len(self.trajectory))]
        if self.prediction is not None:
            out += [(f"prediction.{k}", v) for k, v in self.prediction.items()]
        out.append(("observed_rate", self.observed_rate))
        out += [(f"pass.{k}", v) for k, v in self.flags.items()]
        return out


def _rate_flag(J, prediction, observed):
    if prediction is None or observed is None:
        return False
    rho = prediction.rho
    if J.smoothness_class.constant_sign:
        return abs(observed - rho) <= POLYHEDRAL_REL_TOL * rho
    ok = observed <= rho + BOUND_ABS_TOL
    if J.smoothness_class is SmoothnessClass.LINEAR_SUBSPACE:
        ok = ok and observed < rho
    return ok


def run_experiment(spec, gamma=None, max_iters=None):
    """Full pipeline for one experiment.

    Generates the instance, computes a high-accuracy reference solution,
    certifies non-degeneracy and restricted injectivity, predicts the local
    rate, runs Forward-Backward from zero, detects identification and fits
    the observed rate after it. A failing certificate is reported and the
    rate comparison skipped.
    """
    if gamma is not None or max_iters is not None:
        spec = replace(spec, gamma=gamma or spec.gamma, max_iters=max_iters or spec.max_iters)
    prob = build_problem(spec)
    F, J = prob.F, prob.J
    beta = F.lipschitz
    y_norm = float(np.linalg.norm(F.y))
    ref = reference_solution(F, J, SolverConfig(max_iters=max(spec.max_iters, 200_000)))
    cert = analysis.certify(F, J, ref.x)
    report = ExperimentReport(
        name=spec.name, regularizer=spec.regularizer, lam=J.lam, delta=prob.delta, beta=beta,
        gamma=float("nan"), reference_polished=ref.polished, certificate=cert, x_ref=ref.x,
    )
    report.flags["certificate"] = cert.passed
    ss = streams(spec.seed)
    schedule = make_schedule(spec.gamma, beta, cert.curvature, J.smoothness_class,
                             seed=ss[STREAM_STARTS])
    report.gamma = schedule.bounds[1]
    stop_tol = spec.stop_tol if spec.stop_tol is not None else 1e-13 * (1.0 + y_norm)
    cfg = SolverConfig(max_iters=spec.max_iters, stop_tol=stop_tol,
                       record_every=spec.record_every, store_iterates=False)
    traj = fb_solve(F, J, np.zeros(F.n_features), schedule, cfg, x_ref=ref.x)
    report.trajectory = traj
    target = J.model_subspace(ref.x)
    ident = analysis.detect_identification(traj, target, J)
    report.identification = ident
    report.flags["identification"] = bool(ident.identified and ident.confirming >= MIN_CONFIRMING)
    if not cert.passed:
        logger.warning("%s: certificate failed, skipping rate comparison", spec.name)
        report.flags["rate"] = False
        return report
    report.prediction = predict_for(J, cert.curvature, schedule)
    if ident.identified:
        try:
            report.observed_rate = analysis.fit_observed_rate(traj, from_k=ident.K)
        except analysis.InsufficientDataError as exc:
            logger.warning("%s: %s", spec.name, exc)
    report.flags["rate"] = _rate_flag(J, report.prediction, report.observed_rate)
    return report


def deconvolution_experiment(n=128, kernel_sigma=2.0, jump_count=8, delta=None, lam=None,
                             seed=1, **kw):
    """1-D TV deconvolution: Gaussian blur forward operator, piecewise-constant truth."""
    spec = ExperimentSpec("deconv", "tv", n=n, sparsity=jump_count, kernel_sigma=kernel_sigma,
                          delta=delta, lam=lam, seed=seed, **kw)
    return run_experiment(spec)


def multistart(spec, n_starts=10, tol=None):
    """Reference solutions from `n_starts` random starting points.

    Returns the solutions and the largest pairwise distance between them.
    """
    prob = build_problem(spec)
    rng = np.random.default_rng(streams(spec.seed)[STREAM_STARTS])
    scale = max(1.0, float(np.max(np.abs(prob.x_true))))
    sols = []
    for _ in range(n_starts):
        x0 = scale * rng.standard_normal(prob.F.n_features)
        ref = reference_solution(prob.F, prob.J, SolverConfig(max_iters=500_000), x0=x0, tol=tol)
        sols.append(ref.x)
    spread = max((np.linalg.norm(a - b) for i, a in enumerate(sols) for b in sols[i + 1:]),
                 default=0.0)
    return sols, float(spread)


def degenerate_lasso_experiment(seed=0, m=40, n=10, support=4, lam=0.05, n_iter=5000):
    """Lasso whose design duplicates an active column, so ``A`` is not injective on ``T``.

    The duplicated pair stays in the support, ``ker(A_T)`` is one-dimensional
    and the minimizer is not unique; the distance is measured to the limit of
    the run itself. The step is ``alpha / beta^2`` with ``alpha`` the smallest
    nonzero restricted eigenvalue, which lies inside the validity range of
    the degenerate rate.

    Returns
    -------
    dict with the trajectory, prediction, observed rate and kernel dimension.
    """
    ss = streams(seed)
    base = gen_gaussian_matrix(m, n, ss[STREAM_A]) / np.sqrt(m)
    A = np.column_stack([base, base[:, 0]])
    rng = np.random.default_rng(ss[STREAM_SIGNAL])
    x_true = np.zeros(n + 1)
    x_true[:support] = rng.uniform(1.0, 2.0, support)
    x_true[n] = x_true[0]
    y = A @ x_true + 0.01 * np.random.default_rng(ss[STREAM_NOISE]).standard_normal(m)
    F, J = LeastSquares(A, y), L1Norm(lam)
    x0 = np.abs(0.1 * np.random.default_rng(ss[STREAM_STARTS]).standard_normal(n + 1))

    # locate the active subspace first, then pick the step inside the validity range
    ref = reference_solution(F, J, x0=x0)
    T = J.model_subspace(ref.x)
    if not {0, n} <= set(T.descriptor):
        raise RuntimeError("duplicated pair is not in the active support; change the seed")
    probe = analysis.predict_rate_degenerate(F, T.basis, [1e-12])
    gamma = probe.gamma_opt
    schedule = StepSchedule.constant(gamma)
    long_run = fb_solve(F, J, x0, schedule, SolverConfig(max_iters=n_iter, stop_tol=0.0,
                                                         record_every=n_iter,
                                                         store_iterates=False))
    x_star = long_run.x_final
    T_star = J.model_subspace(x_star)
    prediction = analysis.predict_rate_degenerate(F, T_star.basis, [gamma])
    traj = fb_solve(F, J, x0, schedule, SolverConfig(max_iters=long_run.n_iter, stop_tol=0.0),
                    x_ref=x_star)
    ident = analysis.detect_identification(traj, T_star, J)
    observed = analysis.fit_observed_rate(traj, from_k=ident.K or 0)
    return {"trajectory": traj, "prediction": prediction, "observed_rate": observed,
            "identification": ident, "x_star": x_star, "gamma": gamma,
            "kernel_dim": prediction.params["kernel_dim"]}


def rank_of(x, shape, tol=1e-10):
    """Number of singular values above `tol` for a flattened matrix."""
    _, s, _ = thin_svd(np.reshape(x, shape))
    return int(np.count_nonzero(s > tol))
