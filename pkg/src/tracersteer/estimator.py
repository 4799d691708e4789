"""scikit-learn style wrapper: ``fit`` solves a steering problem, ``transform`` moves particles."""
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array

from .config import load_config
from .shoot import IntegratorGrid, ShootingOptions, solve_shooting


class CovarianceSteerer(TransformerMixin, BaseEstimator):
    """Optimal linear flow for a tracer-informed steering problem.

    Parameters
    ----------
    problem : Problem1 or Problem3
        Problem data. See :func:`from_config` to build from a scenario file.
    t : float
        Time in [0, 1] at which :meth:`transform` evaluates ``x -> Phi_t x``;
        it must fall on the solution grid.
    steps, tol, max_iter, multistart, seed
        Integrator and shooting settings.

    Attributes
    ----------
    solution_ : FlowSolution
    phi1_ : ndarray of shape (n, n)
    cost_ : float
        Total cost ``J_KE + epsilon J_A``.
    """

    def __init__(self, problem=None, t=1.0, steps=2000, tol=1e-9, max_iter=100, multistart=8, seed=0):
        self.problem = problem
        self.t = t
        self.steps = steps
        self.tol = tol
        self.max_iter = max_iter
        self.multistart = multistart
        self.seed = seed

    @classmethod
    def from_config(cls, path, **overrides):
        cfg = load_config(path)
        params = dict(steps=cfg.steps, tol=cfg.tol, max_iter=cfg.max_iter,
                      multistart=cfg.multistart, seed=cfg.seed)
        params.update(overrides)
        return cls(problem=cfg.build_problem(), **params)

    def fit(self, X=None, y=None):
        """Solve the problem; ``X`` and ``y`` are ignored (the data live in ``problem``)."""
        if self.problem is None:
            raise ValueError("problem must be set before fit")
        opts = ShootingOptions(residual_tol=self.tol, max_iterations=self.max_iter,
                               multistart=self.multistart, seed=self.seed)
        self.solution_ = solve_shooting(self.problem, IntegratorGrid(self.steps), opts)
        self.phi1_ = self.solution_.phi1
        self.cost_ = self.solution_.total_cost
        self.n_features_in_ = self.problem.n
        return self

    def transition(self, t=None):
        """``Phi_t`` at a grid time."""
        if not hasattr(self, "solution_"):
            raise NotFittedError("CovarianceSteerer is not fitted yet")
        t = self.t if t is None else t
        steps = self.solution_.steps
        j = int(round(t * steps))
        if not 0 <= j <= steps or abs(j / steps - t) > 1e-12:
            raise ValueError(f"t={t} is not a node of the {steps}-step solution grid")
        return self.solution_.phi[j]

    def transform(self, X):
        """Map particle rows ``x0`` to ``Phi_t x0``."""
        phi = self.transition()
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X @ phi.T

    def inverse_transform(self, X):
        phi = self.transition()
        X = check_array(X)
        return np.linalg.solve(phi, X.T).T
