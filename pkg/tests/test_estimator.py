import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.linear_model import Lasso

from fbsplit.estimator import ForwardBackwardRegressor, make_penalty
from fbsplit.regularizers import GroupL1L2, NuclearNorm
from fbsplit.smooth import LeastSquares
from fbsplit.solver import reference_solution


@pytest.fixture
def data():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((40, 15))
    w = np.zeros(15)
    w[[1, 4, 9]] = [2.0, -1.0, 1.5]
    return X, X @ w + 0.01 * rng.standard_normal(40), w


def test_params_roundtrip():
    est = ForwardBackwardRegressor(penalty="tv", alpha=0.3, step=1.5)
    p = est.get_params()
    assert p["penalty"] == "tv" and p["alpha"] == 0.3 and p["step"] == 1.5
    est.set_params(alpha=2.0)
    assert est.alpha == 2.0
    c = clone(est)
    assert c.get_params() == est.get_params() and c is not est


def test_not_fitted():
    with pytest.raises(NotFittedError):
        ForwardBackwardRegressor().predict(np.ones((2, 3)))


def test_fit_predict_shapes_and_recovery(data):
    X, y, w = data
    est = ForwardBackwardRegressor(alpha=0.5, tol=1e-10, max_iter=50_000).fit(X, y)
    assert est.coef_.shape == (15,)
    assert est.n_features_in_ == 15
    assert set(np.flatnonzero(est.coef_)) == {1, 4, 9}
    assert est.predict(X[:5]).shape == (5,)
    assert est.score(X, y) > 0.99
    assert est.manifold_.descriptor == (1, 4, 9)


def test_coef_matches_reference_solution(data):
    X, y, _ = data
    est = ForwardBackwardRegressor(alpha=0.5, tol=1e-12, max_iter=100_000).fit(X, y)
    ref = reference_solution(LeastSquares(X, y), make_penalty("l1", 0.5, 15))
    np.testing.assert_allclose(est.coef_, ref.x, atol=1e-9)


def test_lasso_agrees_with_coordinate_descent(data):
    # sklearn scales the data term by 1/n_samples
    X, y, _ = data
    n = X.shape[0]
    est = ForwardBackwardRegressor(alpha=0.5, tol=1e-12, max_iter=100_000).fit(X, y)
    sk = Lasso(alpha=0.5 / n, fit_intercept=False, tol=1e-14, max_iter=100_000).fit(X, y)
    np.testing.assert_allclose(est.coef_, sk.coef_, atol=1e-6)


def test_predict_feature_mismatch(data):
    X, y, _ = data
    est = ForwardBackwardRegressor(alpha=0.5).fit(X, y)
    with pytest.raises(ValueError):
        est.predict(X[:, :3])


def test_input_validation(data):
    X, y, _ = data
    with pytest.raises(ValueError):
        ForwardBackwardRegressor().fit(X, y[:-1])
    Xn = X.copy()
    Xn[0, 0] = np.nan
    with pytest.raises(ValueError):
        ForwardBackwardRegressor().fit(Xn, y)
    with pytest.raises(ValueError):
        ForwardBackwardRegressor(step=2.0).fit(X, y)
    with pytest.raises(ValueError):
        ForwardBackwardRegressor(alpha=-1.0).fit(X, y)


def test_penalty_errors():
    with pytest.raises(ValueError, match="penalty"):
        make_penalty("ridge", 1.0, 4)
    with pytest.raises(ValueError):
        make_penalty("group", 1.0, 4)
    with pytest.raises(ValueError):
        make_penalty("group", 1.0, 4, groups=[0, 0, 1])
    with pytest.raises(ValueError):
        make_penalty("nuclear", 1.0, 4, coef_shape=(3, 2))
    assert isinstance(make_penalty("group", 1.0, 4, groups=[0, 0, 1, 1]), GroupL1L2)
    assert isinstance(make_penalty("nuclear", 1.0, 6, coef_shape=(3, 2)), NuclearNorm)


@pytest.mark.parametrize("penalty,kw", [
    ("tv", {}), ("linf", {}), ("group", {"groups": np.arange(15) // 3}),
    ("nuclear", {"coef_shape": (3, 5)}),
])
def test_other_penalties_fit_and_certify(data, penalty, kw):
    X, y, _ = data
    est = ForwardBackwardRegressor(penalty=penalty, alpha=0.5, tol=1e-10, max_iter=100_000,
                                   **kw).fit(X, y)
    assert est.coef_.shape == (15,)
    rep = est.certify()
    assert rep.residual <= 1e-6


def test_warm_start_from_coef_init(data):
    X, y, _ = data
    cold = ForwardBackwardRegressor(alpha=0.5, tol=1e-10, max_iter=50_000).fit(X, y)
    warm = ForwardBackwardRegressor(alpha=0.5, tol=1e-10, max_iter=50_000).fit(
        X, y, coef_init=cold.coef_)
    assert warm.n_iter_ <= 2
    np.testing.assert_allclose(warm.coef_, cold.coef_, atol=1e-9)


def test_sklearn_estimator_checks():
    from sklearn.utils.estimator_checks import check_estimator

    results = check_estimator(ForwardBackwardRegressor(alpha=0.1), on_fail=None)
    failed = [r["check_name"] for r in results if r["status"] == "failed"]
    assert not failed
