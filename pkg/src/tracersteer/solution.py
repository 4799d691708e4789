"""Sampled flow solutions and the two cost functionals evaluated on them."""
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from .errors import GridTooCoarse

MIN_STEPS = 16


@dataclass
class FlowSolution:
    """A flow ``(K_t, Phi_t)`` sampled on a uniform grid over [0, 1].

    ``control`` holds the free gain parameter at each node: the skew
    ``Omega_t`` for problem 1, the residual gain ``R_t`` for problem 3.
    """

    times: np.ndarray
    phi: np.ndarray
    gain: np.ndarray
    problem: str
    epsilon: float = 0.0
    control: np.ndarray = None
    costate: np.ndarray = None
    nmat: np.ndarray = None
    residual_cov: np.ndarray = None
    residual_tracer: np.ndarray = None
    j_ke: float = float("nan")
    j_a: float = float("nan")
    p0: np.ndarray = None
    converged: bool = False
    iterations: int = 0
    residual_norm: float = float("nan")
    candidate: int = 0
    orthogonal_factor: np.ndarray = None
    log: list = field(default_factory=list)

    @property
    def n(self):
        return self.phi.shape[-1]

    @property
    def steps(self):
        return len(self.times) - 1

    @property
    def phi1(self):
        return self.phi[-1]

    @property
    def total_cost(self):
        return self.j_ke + self.epsilon * self.j_a


def _integrate(values, times):
    if len(times) - 1 < MIN_STEPS:
        raise GridTooCoarse(f"need at least {MIN_STEPS} steps, got {len(times) - 1}")
    return float(simpson(values, x=times))


def kinetic_integrand(gain, phi, sigma0):
    """``tr(K Phi Sigma0 Phi^T K^T) / 2`` per node."""
    a = gain @ phi
    return 0.5 * np.einsum("...ij,jk,...ik->...", a, sigma0, a)


def attention_integrand(gain):
    return 0.5 * np.einsum("...ij,...ij->...", gain, gain)


def kinetic_cost(solution, sigma0):
    """Kinetic energy ``1/2 int tr(K Phi Sigma0 Phi^T K^T) dt`` by composite Simpson."""
    return _integrate(kinetic_integrand(solution.gain, solution.phi, np.asarray(sigma0, float)),
                      solution.times)


def attention_cost(solution):
    """Attention ``1/2 int ||K||_F^2 dt`` by composite Simpson."""
    return _integrate(attention_integrand(solution.gain), solution.times)
