from dataclasses import replace

import numpy as np
import pytest

from fbsplit.analysis import certify
from fbsplit.harness import (BUILTINS, ExperimentSpec, build_problem, gen_gaussian_matrix,
                             gen_signal, get_builtin, make_schedule, rank_of, run_experiment,
                             streams)
from fbsplit.regularizers import SmoothnessClass
from fbsplit.smooth import CurvatureReport
from fbsplit.solver import reference_solution


@pytest.fixture(scope="module")
def lasso_report():
    return run_experiment(get_builtin("lasso-a"))


# -- generators ---------------------------------------------------------------------

def test_gaussian_matrix_is_deterministic():
    a = gen_gaussian_matrix(5, 4, 11)
    np.testing.assert_array_equal(a, gen_gaussian_matrix(5, 4, 11))
    assert not np.array_equal(a, gen_gaussian_matrix(5, 4, 12))


def test_gaussian_matrix_moments():
    a = gen_gaussian_matrix(100, 1000, 0)
    # 1e5 samples: standard errors 3.2e-3 (mean) and 4.5e-3 (variance)
    assert abs(a.mean()) < 0.02
    assert abs(a.var() - 1.0) < 0.03


def test_gaussian_matrix_rejects_empty():
    with pytest.raises(ValueError):
        gen_gaussian_matrix(0, 3, 0)


def test_streams_are_independent_and_reproducible():
    s1 = [np.random.default_rng(s).random() for s in streams(3)]
    s2 = [np.random.default_rng(s).random() for s in streams(3)]
    assert s1 == s2 and len(set(s1)) == 4


def test_sparse_signal_structure():
    x = gen_signal(get_builtin("lasso-a"), 0)
    assert np.count_nonzero(x) == 8
    nz = np.abs(x[x != 0])
    assert nz.min() >= 0.5 and nz.max() <= 1.5


def test_piecewise_constant_signal_structure():
    x = gen_signal(get_builtin("tv-b"), 0)
    assert np.count_nonzero(np.diff(x)) == 8


def test_saturated_signal_structure():
    x = gen_signal(get_builtin("linf-c"), 0)
    assert np.count_nonzero(np.abs(x) == 1.0) == 10
    assert np.max(np.abs(x)) == 1.0


def test_block_signal_structure():
    spec = get_builtin("group-d")
    x = gen_signal(spec, 0).reshape(-1, spec.block_size)
    assert np.count_nonzero(np.linalg.norm(x, axis=1)) == spec.active_blocks


def test_low_rank_signal_structure():
    spec = get_builtin("nuclear-e")
    assert rank_of(gen_signal(spec, 0), spec.shape) == spec.rank


def test_spec_validation():
    with pytest.raises(ValueError):
        ExperimentSpec("x", "lasso")
    with pytest.raises(ValueError):
        ExperimentSpec("x", "nuclear")
    with pytest.raises(ValueError):
        ExperimentSpec("x", "l1", delta=-1.0)
    with pytest.raises(ValueError):
        ExperimentSpec("x", "l1", lam_scale=0.0)
    with pytest.raises(ValueError):
        gen_signal(ExperimentSpec("x", "l1", n=5, sparsity=6), 0)
    with pytest.raises(ValueError):
        get_builtin("nope")


def test_deconvolution_spec_is_square():
    spec = get_builtin("deconv")
    assert spec.m == spec.n
    prob = build_problem(spec)
    assert prob.F.A.shape == (spec.n, spec.n)


# -- step policies -------------------------------------------------------------------

def test_step_policies():
    assert make_schedule("inv-beta", 4.0).bounds == (0.25, 0.25)
    assert make_schedule("const:1.5", 2.0).bounds == (0.75, 0.75)
    assert make_schedule("cyclic:0.5,1.5", 1.0).bounds == (0.5, 1.5)
    assert make_schedule("random:0.5,1", 1.0, seed=3).bounds == (0.5, 1.0)
    for bad in ("const:x", "const:1,2", "cyclic:", "bogus"):
        with pytest.raises(ValueError):
            make_schedule(bad, 1.0)


def test_auto_policy_shortens_step_on_curved_sign():
    c = CurvatureReport(sigma_m=1.0, sigma_M=2.0, sigma_max=2.0, alpha=1.0, nu=2.0)
    g = make_schedule("auto", 2.0, c, SmoothnessClass.LINEAR_SUBSPACE).bounds[1]
    assert g == pytest.approx(0.25)
    g = make_schedule("auto", 2.0, c, SmoothnessClass.LINEAR_SUBSPACE_CONSTANT_SIGN).bounds[1]
    assert g == pytest.approx(0.5)


# -- pipeline ------------------------------------------------------------------------

def test_report_is_deterministic(lasso_report):
    again = run_experiment(get_builtin("lasso-a"))
    assert again.rows() == lasso_report.rows()
    np.testing.assert_array_equal(again.trajectory.dist, lasso_report.trajectory.dist)


def test_lasso_report_flags(lasso_report):
    r = lasso_report
    assert r.passed
    assert r.identification.confirming >= 50
    assert r.observed_rate <= r.prediction.rho + 0.05
    fields = dict(r.rows())
    assert fields["name"] == "lasso-a" and fields["pass.rate"] is True


def test_overridden_gamma_and_iteration_cap():
    r = run_experiment(get_builtin("lasso-a"), gamma="const:0.5", max_iters=50)
    assert r.gamma == pytest.approx(0.5 / r.beta)
    assert r.trajectory.n_iter == 50


def test_noiseless_data_does_not_shrink_margin():
    # fixed lam; removing the noise should not bring -grad F closer to the boundary
    wins = 0
    for seed in range(10):
        noisy = ExperimentSpec("s", "l1", m=48, n=128, sparsity=4, seed=seed)
        prob = build_problem(noisy)
        lam = prob.J.lam
        clean = build_problem(replace(noisy, delta=0.0, lam=lam))
        margins = []
        for p in (prob, clean):
            ref = reference_solution(p.F, p.J)
            margins.append(certify(p.F, p.J, ref.x).nondegeneracy_margin)
        wins += margins[1] >= margins[0]
    assert wins >= 8


def test_noiseless_square_design_recovers_truth():
    spec = ExperimentSpec("sq", "l1", m=20, n=20, sparsity=5, delta=0.0, lam=1e-10, seed=3)
    prob = build_problem(spec)
    ref = reference_solution(prob.F, prob.J)
    assert np.linalg.norm(ref.x - prob.x_true) <= 1e-6


def test_vanishing_blur_reduces_to_denoising():
    spec = ExperimentSpec("d", "tv", n=64, sparsity=4, kernel_sigma=0.05, seed=2)
    prob = build_problem(spec)
    ref = reference_solution(prob.F, prob.J)
    np.testing.assert_allclose(ref.x, prob.J.prox(prob.F.y, 1.0), atol=1e-10)


def test_builtins_cover_every_regularizer():
    assert {s.regularizer for s in BUILTINS.values()} == {"l1", "tv", "linf", "group", "nuclear"}


def test_lasso_observed_rate_against_optimal_rate(lasso_report):
    r = lasso_report
    assert r.observed_rate <= r.prediction.rho_opt * 1.05


def _identified_ranks(spec):
    r = run_experiment(spec)
    assert r.passed
    tr = r.trajectory
    i0 = tr.k.index(r.identification.K)
    n1, n2 = spec.shape
    # dim of the rank-r manifold is r (n1 + n2 - r); invert it for each record after K
    ranks = set()
    for d in tr.manifold_dim[i0:]:
        q = [k for k in range(min(n1, n2) + 1) if k * (n1 + n2 - k) == d]
        ranks.update(q)
    return r, ranks


def test_low_rank_builtin_identifies_true_rank():
    spec = get_builtin("nuclear-e")
    r, ranks = _identified_ranks(spec)
    assert rank_of(r.x_ref, spec.shape, 1e-8) == spec.rank
    assert ranks == {spec.rank}


def test_full_size_low_rank_rank_is_constant_after_identification():
    spec = get_builtin("nuclear-e-full")
    r, ranks = _identified_ranks(spec)
    assert r.identification.K is not None and ranks == {5}
