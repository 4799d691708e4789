import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import FunctionTransformer

from tracersteer.estimator import CovarianceSteerer
from tracersteer.necessary_p1 import Problem1
from tracersteer.paths import TracerEndpoints, mccann_path

from conftest import SCENARIOS


def small_problem():
    s2 = np.sqrt(2.0)
    return Problem1(mccann_path(np.eye(2), [[2.0, s2], [s2, 2.0]]),
                    TracerEndpoints([[-1.0], [0.0]], [[0.0], [1.0]]))


def test_params_and_clone():
    est = CovarianceSteerer(problem=small_problem(), steps=400, multistart=0)
    params = est.get_params()
    assert params["steps"] == 400 and params["t"] == 1.0
    twin = clone(est).set_params(t=0.5)
    assert twin.t == 0.5 and twin.steps == 400 and not hasattr(twin, "solution_")


def test_unfitted_transform_raises():
    with pytest.raises(NotFittedError):
        CovarianceSteerer(problem=small_problem()).transform(np.zeros((3, 2)))


def test_fit_without_problem():
    with pytest.raises(ValueError):
        CovarianceSteerer().fit()


def test_fit_transform_moves_tracer_and_covariance():
    est = CovarianceSteerer(problem=small_problem(), steps=400, multistart=0)
    out = est.fit_transform(np.array([[-1.0, 0.0]]))
    assert np.allclose(out, [[0.0, 1.0]], atol=1e-8)
    x = np.random.default_rng(0).standard_normal((200_000, 2))
    cov = np.cov(est.transform(x).T)
    assert np.linalg.norm(cov - est.problem.path.sigma1) / np.linalg.norm(est.problem.path.sigma1) < 0.03
    assert np.allclose(est.inverse_transform(est.transform(x[:5])), x[:5])


def test_intermediate_time_and_grid_check():
    est = CovarianceSteerer(problem=small_problem(), steps=400, multistart=0, t=0.25).fit()
    assert np.allclose(est.transition(), est.solution_.phi[100])
    with pytest.raises(ValueError):
        est.transition(0.1234)
    with pytest.raises(ValueError):
        est.transform(np.zeros((2, 3)))


def test_from_config_and_pipeline():
    est = CovarianceSteerer.from_config(SCENARIOS / "example1.toml", steps=400, multistart=0)
    assert est.steps == 400 and est.tol == 1e-9
    pipe = make_pipeline(FunctionTransformer(lambda x: x), est)
    out = pipe.fit_transform(np.array([[-1.0, 0.0]]))
    assert np.allclose(out, [[0.0, 1.0]], atol=1e-8)
