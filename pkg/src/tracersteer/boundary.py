"""Terminal surface ``S = {Phi : Phi Sigma0 Phi^T = Sigma1, Phi Y0 = Y1}``.

Points of S are ``Phi = Sigma1^{1/2} U Sigma0^{-1/2}`` with ``U`` orthogonal
and ``U (Sigma0^{-1/2} Y0) = Sigma1^{-1/2} Y1``.
"""
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleSurface, NotDetermined
from .matops import check_spd, inv_sqrt_spd, nullspace_basis, sqrt_spd, sym_flatten

RANK_TOL = 1e-8
GRAM_TOL = 1e-8


@dataclass(frozen=True)
class TerminalSurface:
    sigma0: np.ndarray
    sigma1: np.ndarray
    y0: np.ndarray
    y1: np.ndarray

    def __post_init__(self):
        s0 = check_spd(self.sigma0, "sigma0")
        s1 = check_spd(self.sigma1, "sigma1")
        y0 = np.asarray(self.y0, dtype=float).reshape(s0.shape[0], -1)
        y1 = np.asarray(self.y1, dtype=float).reshape(s0.shape[0], -1)
        if s0.shape != s1.shape or y0.shape != y1.shape:
            raise ValueError("inconsistent surface dimensions")
        if y0.shape[1] >= y0.shape[0]:
            raise ValueError("need m < n tracers")
        object.__setattr__(self, "sigma0", s0)
        object.__setattr__(self, "sigma1", s1)
        object.__setattr__(self, "y0", y0)
        object.__setattr__(self, "y1", y1)

    @property
    def n(self):
        return self.sigma0.shape[0]

    @property
    def m(self):
        return self.y0.shape[1]


def gram_feasibility(surface):
    """``||Y0^T Sigma0^{-1} Y0 - Y1^T Sigma1^{-1} Y1||_F``; zero is necessary for S != {}."""
    g0 = surface.y0.T @ np.linalg.solve(surface.sigma0, surface.y0)
    g1 = surface.y1.T @ np.linalg.solve(surface.sigma1, surface.y1)
    return float(np.linalg.norm(g0 - g1))


def surface_residual(phi, surface):
    """Isometric covariance residual followed by ``vec(Phi Y0 - Y1)``.

    Accepts a batch of ``phi`` with leading axes.
    """
    phi = np.asarray(phi, dtype=float)
    cov = phi @ surface.sigma0 @ np.swapaxes(phi, -1, -2) - surface.sigma1
    trc = phi @ surface.y0 - surface.y1
    return np.concatenate([sym_flatten(cov), trc.reshape(phi.shape[:-2] + (-1,))], axis=-1)


def surface_linearization(phi, surface):
    """Matrix of ``V -> (sym_flatten(V S0 Phi^T + Phi S0 V^T), vec(V Y0))`` on row-major vec(V)."""
    n = surface.n
    cols = []
    for i in range(n * n):
        v = np.zeros(n * n)
        v[i] = 1.0
        v = v.reshape(n, n)
        a = v @ surface.sigma0 @ phi.T
        cols.append(np.concatenate([sym_flatten(a + a.T), (v @ surface.y0).ravel()]))
    return np.array(cols).T


def tangent_basis(phi, surface, rank_tol=RANK_TOL):
    """Trace-orthonormal basis of the tangent space of S at ``phi``.

    Returns an array of shape ``(k, n, n)``; ``k`` equals
    ``(n - m)(n - m - 1) / 2`` at points of S.
    """
    n = surface.n
    basis = nullspace_basis(surface_linearization(np.asarray(phi, float), surface), rank_tol)
    return basis.T.reshape(-1, n, n)


def transversality_residual(p, phi, surface, rank_tol=RANK_TOL):
    """Components ``tr(P^T V_i)`` of the costate along the tangent basis."""
    basis = tangent_basis(phi, surface, rank_tol)
    return np.einsum("ij,kij->k", np.asarray(p, float), basis)


def tangent_projector(phi, surface, rank_tol=RANK_TOL):
    """Orthogonal projector onto the tangent space, acting on row-major vec(P).

    Unlike the basis itself this is unique, hence smooth in ``phi``.
    """
    basis = nullspace_basis(surface_linearization(np.asarray(phi, float), surface), rank_tol)
    return basis @ basis.T


def _positive_qr(a):
    q, r = np.linalg.qr(a, mode="complete")
    m = a.shape[1]
    signs = np.sign(np.diag(r[:m, :m]))
    signs[signs == 0] = 1.0
    q = q.copy()
    q[:, :m] *= signs
    return q


def determined_endpoint(surface, gram_tol=GRAM_TOL):
    """All terminal transitions when S is a discrete set (``m = n - 1``).

    The whitened tracers ``a0 = Sigma0^{-1/2} Y0`` and ``a1 = Sigma1^{-1/2} Y1``
    fix ``U`` on their span; the one remaining direction can map to either
    sign, giving a rotation (det U = +1, listed first) and a reflection.

    Returns
    -------
    list of (phi, u)
        Terminal transitions ``Sigma1^{1/2} U Sigma0^{-1/2}`` and their
        orthogonal factors.
    """
    resid = gram_feasibility(surface)
    if resid > gram_tol:
        raise InfeasibleSurface(f"tracer Gram matrices differ (residual {resid:.3e}); S is empty")
    n, m = surface.n, surface.m
    if n - m > 1:
        raise NotDetermined(
            f"terminal surface has dimension {(n - m) * (n - m - 1) // 2} > 0; "
            "use free-endpoint shooting")
    r1 = sqrt_spd(surface.sigma1)
    r0_inv = inv_sqrt_spd(surface.sigma0)
    a0 = r0_inv @ surface.y0
    a1 = np.linalg.solve(r1, surface.y1)
    q0 = _positive_qr(a0)
    q1 = _positive_qr(a1)
    u_rot = q1 @ q0.T
    if np.linalg.det(u_rot) < 0:
        q1[:, m:] *= -1.0
        u_rot = q1 @ q0.T
    q1[:, m:] *= -1.0
    u_ref = q1 @ q0.T
    return [(r1 @ u @ r0_inv, u) for u in (u_rot, u_ref)]
