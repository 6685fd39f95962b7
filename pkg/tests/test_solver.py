import numpy as np
import pytest

from fbsplit.harness import build_problem, get_builtin, multistart
from fbsplit.regularizers import GroupL1L2, L1Norm, LInfNorm, TotalVariation1D, soft_threshold
from fbsplit.smooth import LeastSquares
from fbsplit.solver import (NumericalFailure, SolverConfig, StepSchedule, Trajectory, fb_solve,
                            fb_step, fixed_point_residual, reference_solution)


@pytest.fixture(scope="module")
def lasso():
    prob = build_problem(get_builtin("lasso-a"))
    ref = reference_solution(prob.F, prob.J)
    return prob, ref


# -- schedules ------------------------------------------------------------------

def test_constant_schedule():
    it = iter(StepSchedule.constant(0.5))
    assert [next(it) for _ in range(3)] == [0.5, 0.5, 0.5]


def test_cyclic_schedule():
    it = iter(StepSchedule.cyclic([0.1, 0.2]))
    assert [next(it) for _ in range(5)] == [0.1, 0.2, 0.1, 0.2, 0.1]
    with pytest.raises(ValueError):
        StepSchedule.cyclic([])


def test_random_schedule_is_seeded_and_bounded():
    a = iter(StepSchedule.random(0.1, 0.3, seed=4))
    b = iter(StepSchedule.random(0.1, 0.3, seed=4))
    xs = [next(a) for _ in range(100)]
    assert xs == [next(b) for _ in range(100)]
    assert min(xs) >= 0.1 and max(xs) <= 0.3
    with pytest.raises(ValueError):
        StepSchedule.random(0.3, 0.1)


def test_schedule_must_respect_step_bound():
    F = LeastSquares(np.eye(2), np.zeros(2))
    with pytest.raises(ValueError, match="2/beta"):
        fb_solve(F, L1Norm(1.0), np.zeros(2), StepSchedule.constant(2.0))
    with pytest.raises(ValueError):
        fb_solve(F, L1Norm(1.0), np.zeros(2), StepSchedule.constant(0.0))


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(max_iters=0)
    with pytest.raises(ValueError):
        SolverConfig(stop_tol=-1.0)
    with pytest.raises(ValueError):
        SolverConfig(record_every=0)


# -- closed-form runs --------------------------------------------------------------

def test_identity_operator_zero_weight_converges_in_one_step():
    y = np.array([1.0, -2.0, 3.0])
    F = LeastSquares(np.eye(3), y)
    tr = fb_solve(F, L1Norm(0.0), np.array([5.0, 5.0, 5.0]), StepSchedule.constant(1.0),
                  SolverConfig(max_iters=10, stop_tol=0.0))
    np.testing.assert_array_equal(tr.iterates[1], y)


def test_identity_operator_l1_one_prox_step_is_minimizer():
    y = np.array([3.0, -0.5, 1.2, -2.0])
    F, J = LeastSquares(np.eye(4), y), L1Norm(1.0)
    tr = fb_solve(F, J, np.zeros(4), StepSchedule.constant(1.0),
                  SolverConfig(max_iters=5, stop_tol=1e-14))
    np.testing.assert_array_equal(tr.iterates[1], soft_threshold(y, 1.0))
    assert tr.reason == "converged" and tr.n_iter == 2


def test_reference_identity_l1_is_soft_threshold():
    y = np.array([3.0, -0.5, 1.2, -2.0])
    ref = reference_solution(LeastSquares(np.eye(4), y), L1Norm(1.0))
    np.testing.assert_allclose(ref.x, soft_threshold(y, 1.0), atol=1e-15)
    assert ref.polished


def test_non_finite_iterate_is_reported():
    class Exploding(L1Norm):
        def _prox0(self, x, tau):
            return np.full_like(x, np.inf)

    F = LeastSquares(np.eye(2), np.ones(2))
    with pytest.raises(NumericalFailure):
        fb_solve(F, Exploding(1.0), np.zeros(2), StepSchedule.constant(0.5))


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        fb_solve(LeastSquares(np.eye(2), np.ones(2)), L1Norm(1.0), np.zeros(3),
                 StepSchedule.constant(0.5))


# -- recording ---------------------------------------------------------------------

def test_record_every_and_final_record():
    F = LeastSquares(np.random.default_rng(0).standard_normal((5, 4)), np.ones(5))
    tr = fb_solve(F, L1Norm(0.1), np.zeros(4), StepSchedule.constant(1.0 / F.lipschitz),
                  SolverConfig(max_iters=23, stop_tol=0.0, record_every=5))
    assert tr.k == [0, 5, 10, 15, 20, 23]
    assert np.all(np.diff(tr.k) > 0)
    assert tr.reason == "max_iters"


def test_distances_match_stored_iterates(lasso):
    prob, ref = lasso
    F, J = prob.F, prob.J
    tr = fb_solve(F, J, np.zeros(F.n_features), StepSchedule.constant(1.0 / F.lipschitz),
                  SolverConfig(max_iters=300, stop_tol=0.0), x_ref=ref.x)
    recomputed = [float(np.sqrt(np.sum((x - ref.x) ** 2))) for x in tr.iterates]
    np.testing.assert_allclose(tr.dist, recomputed, rtol=1e-14, atol=0)
    assert all(d >= 0 for d in tr.dist)


def test_synthetic_trajectory():
    tr = Trajectory.from_distances([1.0, 0.5, 0.25])
    assert len(tr) == 3 and tr.k == [0, 1, 2]


# -- convergence on harness setting (a) ------------------------------------------------

def test_lasso_reaches_stop_tol_on_reference_manifold(lasso):
    prob, ref = lasso
    F, J = prob.F, prob.J
    cfg = SolverConfig(max_iters=50_000, stop_tol=1e-9, record_every=100)
    tr = fb_solve(F, J, np.zeros(F.n_features), StepSchedule.constant(1.0 / F.lipschitz), cfg)
    assert tr.reason == "converged" and tr.residual <= 1e-9
    assert J.descriptor(tr.x_final) == J.descriptor(ref.x)


def test_polished_reference_satisfies_restricted_first_order_condition(lasso):
    prob, ref = lasso
    F, J = prob.F, prob.J
    assert ref.polished
    ms = J.model_subspace(ref.x)
    B = ms.basis.basis
    r = B.T @ (F.gradient(ref.x) + J.generalized_sign(ref.x))
    assert np.linalg.norm(r) <= 1e-10


def test_fixed_point_property(lasso):
    prob, ref = lasso
    F, J = prob.F, prob.J
    x1 = fb_step(F, J, ref.x, 1.0 / F.lipschitz)
    assert np.linalg.norm(x1 - ref.x) <= 1e-10
    assert fixed_point_residual(F, J, ref.x) <= 1e-8


def test_objective_descent_with_step_below_inverse_beta(lasso):
    prob, _ = lasso
    F, J = prob.F, prob.J
    tr = fb_solve(F, J, np.zeros(F.n_features), StepSchedule.constant(0.9 / F.lipschitz),
                  SolverConfig(max_iters=2000, stop_tol=0.0))
    assert np.all(np.diff(tr.objective) <= 1e-12 * (1 + np.abs(tr.objective[1:])))


@pytest.mark.parametrize("step", [0.5, 1.0, 1.9])
def test_distance_to_minimizer_nonincreasing(lasso, step):
    prob, ref = lasso
    F, J = prob.F, prob.J
    tr = fb_solve(F, J, np.zeros(F.n_features), StepSchedule.constant(step / F.lipschitz),
                  SolverConfig(max_iters=3000, stop_tol=0.0), x_ref=ref.x)
    assert np.all(np.diff(tr.dist) <= 1e-12)


def test_multistart_agrees():
    sols, spread = multistart(get_builtin("lasso-a"), n_starts=10)
    assert len(sols) == 10
    assert spread <= 1e-8


# -- reference solution without polishing ---------------------------------------------

def test_reference_group_lasso_unpolished_but_accurate():
    rng = np.random.default_rng(5)
    A = rng.standard_normal((20, 12))
    x0 = np.zeros(12)
    x0[:3] = [1.0, -2.0, 0.5]
    F = LeastSquares(A, A @ x0 + 0.01 * rng.standard_normal(20))
    J = GroupL1L2(1.0, np.arange(12) // 3)
    ref = reference_solution(F, J)
    assert not ref.polished
    assert ref.residual <= 1e-12 * (1 + np.linalg.norm(F.y))


def test_reference_singular_restricted_system_falls_back():
    # duplicated active column: A is not injective on T
    rng = np.random.default_rng(6)
    base = rng.standard_normal((15, 5))
    A = np.column_stack([base, base[:, 0]])
    y = A @ np.array([2.0, 1.0, 0, 0, 0, 2.0])
    ref = reference_solution(LeastSquares(A, y), L1Norm(0.1))
    assert not ref.polished
    assert ref.warning is not None and "singular" in ref.warning


def test_reference_tv_and_linf_polish():
    rng = np.random.default_rng(7)
    A = rng.standard_normal((30, 10))
    y = A @ np.repeat([1.0, -1.0], 5) + 0.01 * rng.standard_normal(30)
    for J in (TotalVariation1D(0.5), LInfNorm(0.5)):
        F = LeastSquares(A, y)
        ref = reference_solution(F, J)
        assert ref.polished
        assert ref.residual <= 1e-12 * (1 + np.linalg.norm(y))
