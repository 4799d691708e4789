"""Necessary conditions for the endpoint-covariance / tracer-trajectory problem.

Gains that move the tracers along ``Y_t`` are ``K = M + R N`` where
``M = Ydot (Y^T Y)^{-1} Y^T`` and the rows of ``N`` span the annihilator of
``Y_t`` (``N' = -N M``). The optimal residual gain ``R`` minimizes the
regularized kinetic energy with weight ``B = Phi Sigma0 Phi^T + eps I``.
"""
from dataclasses import dataclass

import numpy as np

from .boundary import TerminalSurface
from .errors import FlowDegenerate, SingularInnerMatrix
from .matops import check_spd, nullspace_basis
from .necessary_p1 import PHI_SINGULAR_TOL, HalfGrid
from .paths import TracerPath, _check_rank

N_RANK_TOL = 1e-8
INNER_COND_MAX = 1e12


def _t(a):
    return a.mT


def projector_m(y, y_dot):
    """``M = Ydot (Y^T Y)^{-1} Y^T``, the minimum-norm gain with ``M Y = Ydot``."""
    y = np.asarray(y, dtype=float)
    y_dot = np.asarray(y_dot, dtype=float)
    _check_rank(y, "Y")
    return y_dot @ np.linalg.solve(y.T @ y, y.T)


def initial_nullspace(y0):
    """Orthonormal rows ``N0`` with ``N0 Y0 = 0`` and ``[Y0, N0^T]`` of rank n.

    Each row is signed so that its largest-magnitude entry is positive.
    """
    y0 = np.asarray(y0, dtype=float)
    if y0.ndim == 1:
        y0 = y0[:, None]
    _check_rank(y0, "Y0")
    n0 = nullspace_basis(y0.T).T
    idx = np.argmax(np.abs(n0), axis=1)
    n0 *= np.sign(n0[np.arange(n0.shape[0]), idx])[:, None]
    return n0


def inner_weight(phi, sigma0, eps):
    """``B = Phi Sigma0 Phi^T + eps I``."""
    n = sigma0.shape[0]
    return phi @ sigma0 @ _t(phi) + eps * np.eye(n)


def feedback_r(phi, p, nmat, m_proj, sigma0, eps, check=True):
    """Optimal residual gain ``R = -(M B + P Phi^T) N^T (N B N^T)^{-1}``.

    Raises
    ------
    SingularInnerMatrix
        If ``N B N^T`` is numerically singular (``eps`` too small or ``N``
        degenerate).
    """
    b = inner_weight(phi, sigma0, eps)
    nt = _t(nmat)
    inner = nmat @ b @ nt
    if check:
        cond = np.linalg.cond(inner)
        if not np.all(np.isfinite(cond)) or np.any(cond > INNER_COND_MAX):
            raise SingularInnerMatrix("N B N^T is numerically singular")
    lhs = (m_proj @ b + p @ _t(phi)) @ nt
    # R = -lhs inner^{-1}, via the transposed solve (inner is symmetric).
    return -_t(np.linalg.solve(inner, _t(lhs)))


def r_stationarity(r, phi, p, nmat, m_proj, sigma0, eps):
    """``dH/dR = (M + R N) B N^T + P Phi^T N^T``."""
    b = inner_weight(phi, sigma0, eps)
    return (m_proj + r @ nmat) @ b @ _t(nmat) + p @ _t(phi) @ _t(nmat)


def p2_vector_field(t, state, tracers, sigma0, eps):
    """``(Phi', P', N')`` at time ``t`` for ``state = (phi, p, nmat)``."""
    phi, p, nmat = state
    y, y_dot = tracers.evaluate(t)
    m_proj = projector_m(y, y_dot)
    r = feedback_r(phi, p, nmat, m_proj, sigma0, eps)
    k = m_proj + r @ nmat
    return k @ phi, -_t(k) @ (k @ phi @ sigma0 + p), -nmat @ m_proj


@dataclass(frozen=True)
class Problem3:
    """Covariances known at t = 0 and 1, tracer trajectory known on [0, 1]."""

    sigma0: np.ndarray
    sigma1: np.ndarray
    tracers: TracerPath
    epsilon: float = 1.0

    tag = "P2"

    def __post_init__(self):
        object.__setattr__(self, "sigma0", check_spd(self.sigma0, "sigma0"))
        object.__setattr__(self, "sigma1", check_spd(self.sigma1, "sigma1"))
        if self.tracers.endpoints_only:
            raise ValueError("Problem 3 needs a tracer trajectory on all of [0, 1]")
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be non-negative")
        if self.tracers.n != self.n:
            raise ValueError("tracer and covariance dimensions differ")

    @property
    def n(self):
        return self.sigma0.shape[0]

    @property
    def surface(self):
        return TerminalSurface(self.sigma0, self.sigma1, self.tracers.y0, self.tracers.y1)

    def hamiltonian(self, steps):
        return P2System(self, steps)


class P2System:
    """The Problem 3 Hamiltonian system bound to a uniform RK4 grid."""

    def __init__(self, problem, steps):
        self.problem = problem
        self.grid = HalfGrid(steps)
        ys, ydots = zip(*(problem.tracers.evaluate(t) for t in self.grid.times))
        self.y = np.stack(ys)
        self.y_dot = np.stack(ydots)
        self.m_proj = np.stack([projector_m(y, yd) for y, yd in zip(ys, ydots)])
        self.n0 = initial_nullspace(self.y[0])
        self._eps_eye = problem.epsilon * np.eye(problem.n)

    @property
    def n(self):
        return self.problem.n

    def initial_state(self, p0):
        p0 = np.asarray(p0, dtype=float)
        batch = p0.shape[:-2]
        phi0 = np.broadcast_to(np.eye(self.n), p0.shape).copy()
        n0 = np.broadcast_to(self.n0, batch + self.n0.shape).copy()
        return phi0, p0.copy(), n0

    def controls(self, t, state):
        """Gain and residual gain ``(K, R)`` at a grid time."""
        phi, p, nmat = state
        m_proj = self.m_proj[self.grid.index(t)]
        r = feedback_r(phi, p, nmat, m_proj, self.problem.sigma0, self.problem.epsilon)
        return m_proj + r @ nmat, r

    def field(self, t, state):
        # Unchecked fast path of feedback_r; degeneracy is caught by the monitor.
        phi, p, nmat = state
        m_proj = self.m_proj[self.grid.index(t)]
        nt = nmat.mT
        phi_s = phi @ self.problem.sigma0
        b = phi_s @ phi.mT + self._eps_eye
        lhs = (m_proj @ b + p @ phi.mT) @ nt
        r = -np.linalg.solve(nmat @ b @ nt, lhs.mT).mT
        k = m_proj + r @ nmat
        return k @ phi, -k.mT @ (k @ phi_s + p), -nmat @ m_proj

    def degenerate(self, state):
        """Boolean mask: non-finite state, singular ``Phi`` or rank-deficient ``N``."""
        phi, p, nmat = state
        batch = phi.shape[:-2]
        bad = ~np.isfinite(phi).reshape(batch + (-1,)).all(-1)
        bad |= ~np.isfinite(p).reshape(batch + (-1,)).all(-1)
        bad |= ~np.isfinite(nmat).reshape(batch + (-1,)).all(-1)
        phi = np.where(bad[..., None, None], np.eye(self.n), phi)
        nmat = np.where(bad[..., None, None], self.n0, nmat)
        bad |= np.linalg.svd(phi, compute_uv=False)[..., -1] <= PHI_SINGULAR_TOL
        bad |= np.linalg.svd(nmat, compute_uv=False)[..., -1] <= N_RANK_TOL
        return bad

    def monitor(self, state):
        if np.any(self.degenerate(state)):
            raise FlowDegenerate("flow degenerated (singular Phi, rank-deficient N or overflow)")

    def tracers_at(self, t):
        j = self.grid.index(t)
        return self.y[j], self.y_dot[j]
