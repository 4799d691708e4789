"""Dense small-matrix primitives.

Everything here works on plain ``numpy`` arrays. Matrices are small
(n <= 10), so eigendecompositions and n^2 x n^2 Kronecker systems are cheap
and preferred over iterative schemes.
"""
import numpy as np

from .errors import NotSpd

SYM_TOL = 1e-12
POS_TOL = 1e-12


def _scale(a):
    return max(1.0, float(np.linalg.norm(a)))


def check_spd(a, name="matrix", sym_tol=SYM_TOL, pos_tol=POS_TOL):
    """Certify that ``a`` is symmetric positive definite.

    Returns the symmetrized copy ``(a + a.T) / 2`` as a float array.

    Raises
    ------
    NotSpd
        If ``a`` is not square, not symmetric to within
        ``sym_tol * max(1, ||a||_F)``, or its smallest eigenvalue is not above
        ``pos_tol`` times the largest.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise NotSpd(f"{name} must be a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NotSpd(f"{name} has non-finite entries")
    asym = np.max(np.abs(a - a.T))
    if asym > sym_tol * _scale(a):
        raise NotSpd(f"{name} is not symmetric (max |A - A^T| = {asym:.3e})")
    s = 0.5 * (a + a.T)
    w = np.linalg.eigvalsh(s)
    if w[-1] <= 0 or w[0] <= pos_tol * w[-1]:
        raise NotSpd(f"{name} is not positive definite (eigenvalues {w[0]:.3e} .. {w[-1]:.3e})")
    return s


def is_skew(a, tol=SYM_TOL):
    a = np.asarray(a, dtype=float)
    return bool(np.max(np.abs(a + np.swapaxes(a, -1, -2)), initial=0.0) <= tol * _scale(a))


def sym(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def skew(a):
    return 0.5 * (a - np.swapaxes(a, -1, -2))


def spd_power(sigma, power, check=True):
    """Return ``sigma ** power`` via the symmetric eigendecomposition."""
    if check:
        sigma = check_spd(sigma)
    w, v = np.linalg.eigh(sigma)
    out = (v * w**power) @ v.T
    return sym(out)


def sqrt_spd(sigma, check=True):
    """Principal square root of an SPD matrix.

    >>> sqrt_spd(3 * np.eye(2))
    array([[1.73205081, 0.        ],
           [0.        , 1.73205081]])
    """
    return spd_power(sigma, 0.5, check=check)


def inv_sqrt_spd(sigma, check=True):
    return spd_power(sigma, -0.5, check=check)


def lyapunov_operator(sigma):
    """Matrix of ``X -> X @ sigma + sigma @ X`` acting on row-major ``vec(X)``."""
    n = sigma.shape[0]
    eye = np.eye(n)
    return np.kron(sigma, eye) + np.kron(eye, sigma.T)


def solve_sym_lyapunov(sigma, c, check=True, op_inv=None):
    """Solve ``X @ sigma + sigma @ X = c`` for ``X``.

    The system is solved in vectorized form
    ``(I (x) sigma + sigma^T (x) I) vec(X) = vec(c)``, which is invertible
    whenever ``sigma`` is positive definite. Skew (symmetric) right-hand
    sides give skew (symmetric) solutions.

    Parameters
    ----------
    sigma : (n, n) array_like
        SPD coefficient matrix.
    c : (..., n, n) array_like
        Right-hand side; leading axes are treated as a batch.
    check : bool
        Certify ``sigma`` first. Hot loops pass ``False``.
    op_inv : (n*n, n*n) ndarray, optional
        Precomputed inverse of :func:`lyapunov_operator`.
    """
    sigma = check_spd(sigma) if check else np.asarray(sigma, dtype=float)
    c = np.asarray(c, dtype=float)
    n = sigma.shape[0]
    rhs = c.reshape(c.shape[:-2] + (n * n,))
    if op_inv is None:
        x = np.linalg.solve(lyapunov_operator(sigma), rhs[..., None])[..., 0]
    else:
        x = rhs @ op_inv.T
    return x.reshape(c.shape)


def nullspace_basis(a, rank_tol=1e-8):
    """Orthonormal basis (as columns) of the kernel of ``a``.

    Singular values at or below ``rank_tol * sigma_max`` count as zero. A
    full-rank ``a`` yields a ``(q, 0)`` array.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    p, q = a.shape
    if p == 0 or q == 0:
        return np.eye(q)
    _, s, vt = np.linalg.svd(a, full_matrices=True)
    if s.size == 0 or s[0] == 0.0:
        return np.eye(q)
    rank = int(np.sum(s > rank_tol * s[0]))
    return vt[rank:].T.copy()


def sym_flatten(a):
    """Isometric flattening of symmetric matrices.

    Upper-triangular entries with off-diagonals scaled by ``sqrt(2)`` so the
    Euclidean norm of the result equals the Frobenius norm of ``a``.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[-1]
    iu = np.triu_indices(n)
    w = np.where(iu[0] == iu[1], 1.0, np.sqrt(2.0))
    return a[..., iu[0], iu[1]] * w


def rotation_angle(u):
    """Angle in degrees of a 2x2 rotation written ``[[c, s], [-s, c]]``.

    Clockwise-positive convention: a positive angle turns ``e1`` towards
    ``-e2``.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (2, 2):
        raise ValueError("rotation_angle expects a 2x2 matrix")
    return float(np.degrees(np.arctan2(u[0, 1], u[0, 0])))


def rotation_matrix(theta_deg):
    """Inverse of :func:`rotation_angle` (same clockwise-positive convention)."""
    th = np.radians(theta_deg)
    c, s = np.cos(th), np.sin(th)
    return np.array([[c, s], [-s, c]])
