"""Necessary conditions for the covariance-path / tracer-endpoint problem.

The gain is parametrized as ``K = (Sigma_dot / 2 + Omega) Sigma^{-1}`` with a
skew ``Omega``; the optimal ``Omega`` solves a Lyapunov equation driven by the
costate ``P``, and the Hamiltonian flow is ``Phi' = K Phi``, ``P' = -K^T P``.
All functions accept batched ``phi``/``p`` with leading axes.
"""
from dataclasses import dataclass

import numpy as np

from .boundary import TerminalSurface
from .errors import FlowDegenerate
from .matops import check_spd, lyapunov_operator, skew, solve_sym_lyapunov
from .paths import CovariancePath, TracerEndpoints

PHI_SINGULAR_TOL = 1e-10


def _t(a):
    return a.mT


def omega_rhs(phi, p, sigma, sigma_dot):
    """Right side ``(Phi P^T + Sd/2) Sigma - Sigma (P Phi^T + Sd/2)``; always skew."""
    a = phi @ _t(p) + 0.5 * sigma_dot
    return a @ sigma - sigma @ _t(a)


def omega_from_costate(phi, p, sigma, sigma_dot, check=True, op_inv=None):
    """Optimal skew parameter ``Omega`` for the current state and path data.

    Solves ``Omega Sigma + Sigma Omega = (Phi P^T + Sd/2) Sigma - Sigma (P Phi^T + Sd/2)``.
    The right side is skew, hence so is the solution; the returned array is
    re-skewed to remove round-off.
    """
    if check:
        sigma = check_spd(sigma, "sigma")
    rhs = omega_rhs(np.asarray(phi, float), np.asarray(p, float), sigma, sigma_dot)
    return skew(solve_sym_lyapunov(sigma, rhs, check=False, op_inv=op_inv))


def gain_p1(sigma, sigma_dot, omega, check=True, sigma_inv=None):
    """``K = (Sigma_dot / 2 + Omega) Sigma^{-1}``.

    Any skew ``omega`` yields ``K Sigma + Sigma K^T = Sigma_dot``.
    """
    if check:
        sigma = check_spd(sigma, "sigma")
    if sigma_inv is None:
        sigma_inv = np.linalg.inv(sigma)
    return (0.5 * sigma_dot + omega) @ sigma_inv


def p1_vector_field(t, state, path):
    """``(Phi', P')`` at time ``t`` for ``state = (phi, p)``."""
    phi, p = state
    sigma, sigma_dot = path.evaluate(t)
    omega = omega_from_costate(phi, p, sigma, sigma_dot)
    k = gain_p1(sigma, sigma_dot, omega, check=False)
    return k @ phi, -_t(k) @ p


@dataclass(frozen=True)
class Problem1:
    """Covariance known on all of [0, 1], tracer positions known at t = 0 and 1."""

    path: CovariancePath
    tracers: TracerEndpoints

    tag = "P1"
    epsilon = 0.0

    def __post_init__(self):
        if self.path.endpoints_only:
            raise ValueError("Problem 1 needs a covariance path on all of [0, 1]")
        if self.tracers.n != self.path.n:
            raise ValueError("tracer and covariance dimensions differ")

    @property
    def n(self):
        return self.path.n

    @property
    def sigma0(self):
        return self.path.sigma0

    @property
    def surface(self):
        return TerminalSurface(self.path.sigma0, self.path.sigma1,
                               self.tracers.y0, self.tracers.y1)

    def hamiltonian(self, steps):
        return P1System(self, steps)


class HalfGrid:
    """Index map for the RK4 stage times ``k / (2 * steps)``."""

    def __init__(self, steps):
        self.steps = int(steps)
        self.times = np.linspace(0.0, 1.0, 2 * self.steps + 1)

    def index(self, t):
        j = int(round(t * 2 * self.steps))
        if abs(self.times[j] - t) > 1e-12:
            raise KeyError(t)
        return j


class P1System:
    """The Problem 1 Hamiltonian system bound to a uniform RK4 grid.

    Path data, ``Sigma^{-1}`` and the inverse Lyapunov operator are tabulated
    at every RK4 stage time once, so integrating many costate guesses costs
    only a few small matrix products per stage.
    """

    def __init__(self, problem, steps):
        self.problem = problem
        self.grid = HalfGrid(steps)
        sig, sdot = zip(*(problem.path.evaluate(t) for t in self.grid.times))
        self.sigma = np.stack(sig)
        self.sigma_dot = np.stack(sdot)
        self.sigma_inv = np.linalg.inv(self.sigma)
        self.op_inv = np.linalg.inv(np.stack([lyapunov_operator(s) for s in self.sigma]))

    @property
    def n(self):
        return self.problem.n

    def initial_state(self, p0):
        p0 = np.asarray(p0, dtype=float)
        phi0 = np.broadcast_to(np.eye(self.n), p0.shape).copy()
        return phi0, p0.copy()

    def _data(self, t):
        j = self.grid.index(t)
        return self.sigma[j], self.sigma_dot[j], self.sigma_inv[j], self.op_inv[j]

    def controls(self, t, state):
        """Gain and skew parameter ``(K, Omega)`` at a grid time."""
        phi, p = state
        sigma, sdot, sinv, op_inv = self._data(t)
        omega = omega_from_costate(phi, p, sigma, sdot, check=False, op_inv=op_inv)
        return gain_p1(sigma, sdot, omega, check=False, sigma_inv=sinv), omega

    def field(self, t, state):
        k, _ = self.controls(t, state)
        phi, p = state
        return k @ phi, -k.mT @ p

    def degenerate(self, state):
        """Boolean mask over the batch: non-finite state or singular ``Phi``."""
        phi, p = state
        batch = phi.shape[:-2]
        bad = ~(np.isfinite(phi).reshape(batch + (-1,)).all(-1)
                & np.isfinite(p).reshape(batch + (-1,)).all(-1))
        s = np.linalg.svd(np.where(bad[..., None, None], np.eye(self.n), phi), compute_uv=False)
        return bad | (s[..., -1] <= PHI_SINGULAR_TOL)

    def monitor(self, state):
        if np.any(self.degenerate(state)):
            raise FlowDegenerate("state transition matrix became singular or non-finite")

    def sigma_at(self, t):
        j = self.grid.index(t)
        return self.sigma[j], self.sigma_dot[j]
