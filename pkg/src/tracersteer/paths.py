"""Covariance paths (Sigma_t, dSigma_t) and tracer paths (Y_t, dY_t) on [0, 1].

Paths are immutable; ``evaluate(t)`` returns the value and its time
derivative. Sampled data are interpolated entrywise with a C^1 cubic.
"""
import numpy as np
from scipy.interpolate import CubicSpline

from .errors import (InterpolantNotSpd, NonMonotoneGrid, NotSpd,
                     RankDeficientTracer)
from .matops import check_spd, inv_sqrt_spd, sqrt_spd, sym

MCCANN = "mccann"
SAMPLED = "sampled"
ENDPOINTS = "endpoints"
TRAJECTORY = "trajectory"

RANK_TOL = 1e-10


def _check_time(t, endpoints_only=False):
    t = float(t)
    if endpoints_only:
        if t not in (0.0, 1.0):
            raise ValueError(f"endpoint-only data can only be evaluated at t in {{0, 1}}, got {t}")
    elif not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    return t


def bures_map(sigma0, sigma1):
    """Optimal linear map T with ``T sigma0 T = sigma1`` (T symmetric PD)."""
    r0 = sqrt_spd(sigma0)
    r0_inv = inv_sqrt_spd(sigma0)
    middle = sqrt_spd(sym(r0 @ sigma1 @ r0))
    return sym(r0_inv @ middle @ r0_inv)


class CovariancePath:
    """Base class; subclasses implement :meth:`_evaluate`."""

    kind = None

    def __init__(self, sigma0, sigma1):
        self.sigma0 = check_spd(sigma0, "sigma0")
        self.sigma1 = check_spd(sigma1, "sigma1")
        if self.sigma0.shape != self.sigma1.shape:
            raise ValueError("sigma0 and sigma1 must have the same shape")

    @property
    def n(self):
        return self.sigma0.shape[0]

    @property
    def endpoints_only(self):
        return False

    def evaluate(self, t):
        """Return ``(sigma_t, sigma_dot_t)``."""
        return self._evaluate(_check_time(t, self.endpoints_only))

    def __call__(self, t):
        return self.evaluate(t)


class McCannPath(CovariancePath):
    """Displacement interpolation ``sigma_t = A_t sigma0 A_t^T``, ``A_t = (1-t) I + t T``."""

    kind = MCCANN

    def __init__(self, sigma0, sigma1):
        super().__init__(sigma0, sigma1)
        self.transport_map = bures_map(self.sigma0, self.sigma1)
        self._adot = self.transport_map - np.eye(self.n)

    def _evaluate(self, t):
        a = np.eye(self.n) + t * self._adot
        left = self._adot @ self.sigma0 @ a.T
        sigma_dot = left + left.T
        if t == 0.0:
            return self.sigma0.copy(), sigma_dot
        if t == 1.0:
            return self.sigma1.copy(), sigma_dot
        return sym(a @ self.sigma0 @ a.T), sigma_dot


class SampledCovariancePath(CovariancePath):
    kind = SAMPLED

    def __init__(self, times, sigmas):
        times = np.asarray(times, dtype=float)
        sigmas = np.stack([check_spd(s, f"sample at t={t:g}") for t, s in zip(times, sigmas)])
        _check_grid(times)
        super().__init__(sigmas[0], sigmas[-1])
        self.times = times
        self.samples = sigmas
        self._spline = CubicSpline(times, sigmas, axis=0)
        self._dspline = self._spline.derivative()

    def _evaluate(self, t):
        i = np.searchsorted(self.times, t)
        if i < len(self.times) and self.times[i] == t:
            sigma = self.samples[i].copy()
        else:
            sigma = sym(self._spline(t))
            try:
                check_spd(sigma)
            except NotSpd as exc:
                raise InterpolantNotSpd(f"interpolated covariance at t={t:g} is not SPD") from exc
        return sigma, sym(self._dspline(t))


class EndpointCovariances(CovariancePath):
    """Covariances known only at t = 0 and t = 1."""

    kind = ENDPOINTS

    @property
    def endpoints_only(self):
        return True

    def _evaluate(self, t):
        sigma = self.sigma0 if t == 0.0 else self.sigma1
        return sigma.copy(), None


def mccann_path(sigma0, sigma1):
    return McCannPath(sigma0, sigma1)


def sampled_covariance_path(nodes):
    """Build a C^1 covariance path from ``[(t, sigma), ...]`` nodes.

    Nodes must be strictly increasing in t and cover both 0 and 1.
    """
    nodes = list(nodes)
    if len(nodes) < 2:
        raise NonMonotoneGrid("need at least two nodes")
    times, sigmas = zip(*nodes)
    return SampledCovariancePath(times, sigmas)


def _check_grid(times):
    if times.ndim != 1 or times.size < 2:
        raise NonMonotoneGrid("need at least two sample times")
    if np.any(np.diff(times) <= 0):
        raise NonMonotoneGrid("sample times must be strictly increasing")
    if times[0] != 0.0 or times[-1] != 1.0:
        raise NonMonotoneGrid("sample times must start at 0 and end at 1")


def _check_rank(y, where):
    if y.shape[1] == 0:
        return
    s = np.linalg.svd(y, compute_uv=False)
    if s[0] == 0.0 or s[-1] <= RANK_TOL * s[0]:
        raise RankDeficientTracer(f"tracer matrix {where} is not of full column rank")


class TracerPath:
    kind = None
    endpoints_only = False

    def evaluate(self, t):
        """Return ``(Y_t, Ydot_t)``; ``Ydot_t`` is None for endpoint-only data."""
        return self._evaluate(_check_time(t, self.endpoints_only))

    def __call__(self, t):
        return self.evaluate(t)

    @property
    def n(self):
        return self.y0.shape[0]

    @property
    def m(self):
        return self.y0.shape[1]


class TracerEndpoints(TracerPath):
    kind = ENDPOINTS
    endpoints_only = True

    def __init__(self, y0, y1):
        self.y0 = _as_tracer(y0)
        self.y1 = _as_tracer(y1)
        if self.y0.shape != self.y1.shape:
            raise ValueError(f"Y0 and Y1 shapes differ: {self.y0.shape} vs {self.y1.shape}")
        if self.m >= self.n:
            raise ValueError(f"need fewer tracers than dimensions (m={self.m}, n={self.n})")
        _check_rank(self.y0, "Y0")
        _check_rank(self.y1, "Y1")

    def _evaluate(self, t):
        return (self.y0 if t == 0.0 else self.y1).copy(), None


class TracerTrajectory(TracerPath):
    """Tracer curve given by a function ``t -> (Y_t, Ydot_t)``."""

    kind = TRAJECTORY

    def __init__(self, func, name=None):
        self._func = func
        self.name = name
        y0, _ = self._raw(0.0)
        y1, _ = self._raw(1.0)
        self.y0, self.y1 = y0, y1
        if self.m >= self.n or self.m == 0:
            raise ValueError(f"need 0 < m < n tracers (m={self.m}, n={self.n})")

    def _raw(self, t):
        y, ydot = self._func(t)
        return _as_tracer(y), _as_tracer(ydot)

    def _evaluate(self, t):
        y, ydot = self._raw(t)
        _check_rank(y, f"at t={t:g}")
        return y, ydot


def _as_tracer(y):
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if y.ndim != 2:
        raise ValueError(f"tracer data must be an n x m matrix, got shape {y.shape}")
    return y


def tracer_trajectory(func, name=None):
    return TracerTrajectory(func, name=name)


def sampled_tracer_path(nodes):
    """C^1 interpolated tracer path from ``[(t, Y), ...]`` nodes."""
    nodes = list(nodes)
    if len(nodes) < 2:
        raise NonMonotoneGrid("need at least two nodes")
    times = np.asarray([t for t, _ in nodes], dtype=float)
    ys = np.stack([_as_tracer(y) for _, y in nodes])
    _check_grid(times)
    for t, y in zip(times, ys):
        _check_rank(y, f"node at t={t:g}")
    spline = CubicSpline(times, ys, axis=0)
    dspline = spline.derivative()

    def func(t):
        i = np.searchsorted(times, t)
        y = ys[i].copy() if i < len(times) and times[i] == t else spline(t)
        return y, dspline(t)

    path = TracerTrajectory(func, name="sampled")
    path.times = times
    path.samples = ys
    return path
