"""Verification layer: costs, Monte Carlo ensembles, optimality probes, transcription oracle.

The open-loop helpers below re-integrate a flow from node-wise samples of
its free gain parameter. A solution sampled on ``S`` RK4 steps supplies
exactly the stage times of an ``S / 2``-step RK4 scheme, so no interpolation
of the controls is needed.
"""
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import minimize

from .boundary import surface_residual
from .matops import sqrt_spd
from .necessary_p2 import initial_nullspace, projector_m
from .shoot import endpoint_targets
from .solution import (FlowSolution, attention_cost, attention_integrand,
                       kinetic_cost, kinetic_integrand)

__all__ = [
    "FlowSolution", "EnsembleReport", "OptimalityReport", "OracleResult",
    "kinetic_cost", "attention_cost", "simulate_ensemble", "perturbation_optimality_check",
    "transcription_oracle", "costs_from_transitions", "push_forward",
]

CHECKPOINTS = (0.0, 0.25, 0.5, 0.75, 1.0)


@dataclass
class EnsembleReport:
    particles: int
    seed: int
    checkpoints: np.ndarray
    empirical: np.ndarray
    target: np.ndarray
    covariance_error: np.ndarray
    tracer_error: float
    wall_time: float

    @property
    def max_covariance_error(self):
        return float(np.max(self.covariance_error))


def _coarse(solution):
    steps = solution.steps
    if steps % 2:
        raise ValueError("solution grid must have an even number of steps")
    return steps // 2


def _rk4_nodes(field, state, coarse_steps, on_node=None):
    """RK4 whose stage ``s`` of coarse step ``i`` uses fine node ``2 i + s``."""
    h = 1.0 / coarse_steps
    if on_node is not None:
        on_node(0, state)
    for i in range(coarse_steps):
        j = 2 * i
        k1 = field(j, state)
        k2 = field(j + 1, tuple(x + 0.5 * h * k for x, k in zip(state, k1)))
        k3 = field(j + 1, tuple(x + 0.5 * h * k for x, k in zip(state, k2)))
        k4 = field(j + 2, tuple(x + h * k for x, k in zip(state, k3)))
        state = tuple(x + (h / 6.0) * (a + 2 * b + 2 * c + d)
                      for x, a, b, c, d in zip(state, k1, k2, k3, k4))
        if on_node is not None:
            on_node(j + 2, state)
    return state


def push_forward(solution, x0, on_node=None):
    """Integrate columns ``x0`` through ``x' = K_t x`` with the stored node gains.

    Uses RK4 on every other grid node (the solution's in-between nodes serve
    as stage times). Returns the positions at ``t = 1``; ``on_node(j, x)`` is
    called at fine-grid node indices ``j = 0, 2, 4, ...``.
    """
    gain = solution.gain
    cb = None if on_node is None else (lambda j, s: on_node(j, s[0]))
    return _rk4_nodes(lambda j, s: (gain[j] @ s[0],), (np.asarray(x0, dtype=float),),
                      _coarse(solution), cb)[0]


def simulate_ensemble(solution, sigma0, tracers, particles=100_000, seed=0,
                      checkpoints=CHECKPOINTS):
    """Push ``x0 ~ N(0, sigma0)`` particles through ``x' = K_t x``.

    Particles are drawn from a counter-based Philox generator keyed by
    ``seed``, so a given ``(seed, particles)`` is bit-reproducible. Tracer
    columns ``Y0`` ride along in the same integrator; for endpoint-only
    tracer data only the terminal error is measured.
    """
    if particles < 100:
        raise ValueError("need at least 100 particles")
    start = time.perf_counter()
    sigma0 = np.asarray(sigma0, dtype=float)
    n = sigma0.shape[0]
    coarse = _coarse(solution)
    rng = np.random.Generator(np.random.Philox(seed))
    x0 = sqrt_spd(sigma0) @ rng.standard_normal((n, particles))
    y0 = tracers.y0

    wanted = {}
    for c in checkpoints:
        j = 2 * int(round(c * coarse))
        wanted.setdefault(j, []).append(float(c))
    emp, tgt, errs, cps = [], [], [], []
    trc_err = [0.0]

    def on_node(j, xy):
        x, y = xy[:, :particles], xy[:, particles:]
        if j in wanted:
            cov = x @ x.T / particles
            target = solution.phi[j] @ sigma0 @ solution.phi[j].T
            for c in wanted[j]:
                cps.append(solution.times[j])
                emp.append(cov)
                tgt.append(target)
                errs.append(np.linalg.norm(cov - target) / np.linalg.norm(target))
        if not tracers.endpoints_only:
            trc_err[0] = max(trc_err[0], float(np.linalg.norm(y - tracers.evaluate(solution.times[j])[0])))
        elif j == solution.steps:
            trc_err[0] = float(np.linalg.norm(y - tracers.y1))

    # particles and tracer columns share one integration
    push_forward(solution, np.hstack([x0, y0]), on_node)
    return EnsembleReport(particles=particles, seed=seed, checkpoints=np.array(cps),
                          empirical=np.array(emp), target=np.array(tgt),
                          covariance_error=np.array(errs), tracer_error=trc_err[0],
                          wall_time=time.perf_counter() - start)


def costs_from_transitions(solution, sigma0):
    """``(J_KE, J_A)`` with ``K`` recovered as ``Phi' Phi^{-1}`` by finite differences."""
    phidot = np.gradient(solution.phi, solution.times, axis=0, edge_order=2)
    gain = phidot @ np.linalg.inv(solution.phi)
    ke = simpson(kinetic_integrand(gain, solution.phi, np.asarray(sigma0, float)), x=solution.times)
    at = simpson(attention_integrand(gain), x=solution.times)
    return float(ke), float(at)


# -- open-loop re-integration ------------------------------------------------------------

class _OpenLoop:
    """Problem-specific open-loop flow from node-wise controls on a fine grid."""

    def __init__(self, problem, times):
        self.problem = problem
        self.times = times
        self.tag = problem.tag
        self.sigma0 = problem.sigma0
        if self.tag == "P1":
            data = [problem.path.evaluate(t) for t in times]
            self.sigma = np.stack([d[0] for d in data])
            self.sigma_dot = np.stack([d[1] for d in data])
            self.sigma_inv = np.linalg.inv(self.sigma)
            n = problem.n
            self.basis = np.array([_unit_skew(n, i, j) for i in range(n) for j in range(i + 1, n)])
        else:
            ys = [problem.tracers.evaluate(t) for t in times]
            self.m_proj = np.stack([projector_m(y, yd) for y, yd in ys])
            self.n0 = initial_nullspace(ys[0][0])
            n, k = problem.n, self.n0.shape[0]
            self.basis = np.eye(n * k).reshape(n * k, n, k)

    def run(self, controls):
        """Integrate; ``controls`` has shape (..., T, a, b). Returns (phi, gain) per coarse node."""
        coarse = (len(self.times) - 1) // 2
        n = self.problem.n
        batch = controls.shape[:-3]
        phi0 = np.broadcast_to(np.eye(n), batch + (n, n)).copy()
        nodes_phi, nodes_gain = [], []
        if self.tag == "P1":
            gain = (0.5 * self.sigma_dot + controls) @ self.sigma_inv

            def fld(j, s):
                return (gain[..., j, :, :] @ s[0],)

            def rec(j, s):
                nodes_phi.append(s[0])
                nodes_gain.append(gain[..., j, :, :])

            _rk4_nodes(fld, (phi0,), coarse, rec)
        else:
            n0 = np.broadcast_to(self.n0, batch + self.n0.shape).copy()
            mp = self.m_proj

            def fld(j, s):
                phi, nm = s
                k = mp[j] + controls[..., j, :, :] @ nm
                return k @ phi, -nm @ mp[j]

            def rec(j, s):
                phi, nm = s
                nodes_phi.append(phi)
                nodes_gain.append(mp[j] + controls[..., j, :, :] @ nm)

            _rk4_nodes(fld, (phi0, n0), coarse, rec)
        phi = np.stack(nodes_phi, axis=-3)
        gain = np.stack(nodes_gain, axis=-3)
        return phi, gain

    def cost(self, phi, gain):
        t = self.times[::2]
        total = simpson(kinetic_integrand(gain, phi, self.sigma0), x=t, axis=-1)
        if self.tag != "P1" and self.problem.epsilon:
            total = total + self.problem.epsilon * simpson(attention_integrand(gain), x=t, axis=-1)
        return total


def _unit_skew(n, i, j):
    a = np.zeros((n, n))
    a[i, j], a[j, i] = 1.0, -1.0
    return a / np.sqrt(2.0)


def _smooth_curves(rng, times, count, modes=4):
    """``count`` random smooth scalar curves on ``times`` with unit max modulus."""
    coef = rng.standard_normal((count, modes))
    k = np.arange(modes)
    curves = coef @ np.cos(np.pi * np.outer(k, times))
    return curves / np.max(np.abs(curves), axis=1, keepdims=True)


@dataclass
class OptimalityReport:
    magnitudes: np.ndarray
    delta_cost: np.ndarray          # (trials, magnitudes, 2) for +delta / -delta
    linear_coef: np.ndarray         # (trials,)
    quadratic_coef: np.ndarray      # (trials,)
    growth_exponent: float
    fraction_increase: float
    min_delta_cost: float
    constraint_residual: float
    tolerance: float = 1e-8
    notes: list = field(default_factory=list)

    @property
    def locally_optimal(self):
        return self.min_delta_cost >= -self.tolerance


def perturbation_optimality_check(solution, problem, magnitudes=(1e-3, 1e-2), trials=32,
                                  seed=0, tolerance=1e-8):
    """Probe first-order optimality with admissible perturbations of the free gain.

    For problem 1 the skew parameter ``Omega_t`` is perturbed, for problem 3
    the residual gain ``R_t``; both keep the path constraint exactly. Each
    perturbed flow is pulled back onto the terminal surface by adding a
    constant-in-time correction found by Gauss-Newton, and its cost is
    compared with the equally corrected unperturbed flow.
    """
    rng = np.random.default_rng(seed)
    loop = _OpenLoop(problem, solution.times)
    surface = problem.surface
    base = np.asarray(solution.control, dtype=float)
    basis = loop.basis
    mags = np.asarray(magnitudes, dtype=float)

    def corrected_costs(controls):
        """Lockstep Gauss-Newton over a batch of control histories (B, T, a, b)."""
        q = len(basis)
        coef = np.zeros((len(controls), q))
        offsets = np.concatenate([np.zeros((1, q)), 1e-7 * np.eye(q)])
        active = np.ones(len(controls), dtype=bool)
        for _ in range(30):
            trial = coef[active, None] + offsets
            ctl = controls[active, None] + np.einsum("bkq,qij->bkij", trial, basis)[:, :, None]
            phi, _ = loop.run(ctl)
            res = surface_residual(phi[..., -1, :, :], surface)
            r0 = res[:, 0]
            done = np.linalg.norm(r0, axis=-1) < 1e-12
            jac = np.swapaxes(res[:, 1:] - r0[:, None], -1, -2) / 1e-7
            step = np.stack([np.linalg.lstsq(j, r, rcond=1e-8)[0] for j, r in zip(jac, r0)])
            idx = np.flatnonzero(active)
            coef[idx[~done]] -= step[~done]
            active[idx[done]] = False
            if not active.any():
                break
        ctl = controls + np.einsum("bq,qij->bij", coef, basis)[:, None]
        phi, gain = loop.run(ctl)
        res = np.linalg.norm(surface_residual(phi[..., -1, :, :], surface), axis=-1)
        return loop.cost(phi, gain), res

    dirs = np.stack([np.einsum("qt,qij->tij", _smooth_curves(rng, solution.times, len(basis)), basis)
                     for _ in range(trials)])
    signs = np.array([1.0, -1.0])
    scaled = (mags[:, None, None, None, None] * signs[:, None, None, None])[None] * dirs[:, None, None]
    batch = np.concatenate([base[None], (base + scaled).reshape((-1,) + base.shape)])
    costs, res = corrected_costs(batch)
    delta = (costs[1:] - costs[0]).reshape(trials, len(mags), 2)
    worst = float(res.max())
    even = 0.5 * (delta[..., 0] + delta[..., 1])
    odd = 0.5 * (delta[..., 0] - delta[..., 1])
    with np.errstate(divide="ignore", invalid="ignore"):
        linear = odd[:, 0] / mags[0]
        quad = even[:, 0] / mags[0] ** 2
    if len(mags) > 1:
        with np.errstate(divide="ignore", invalid="ignore"):
            slopes = np.log(np.abs(even[:, -1] / even[:, 0])) / np.log(mags[-1] / mags[0])
        exponent = float(np.median(slopes))
    else:
        exponent = float("nan")
    return OptimalityReport(
        magnitudes=mags, delta_cost=delta, linear_coef=linear, quadratic_coef=quad,
        growth_exponent=exponent, fraction_increase=float(np.mean(np.all(delta > 0, axis=(1, 2)))),
        min_delta_cost=float(delta.min()), constraint_residual=worst, tolerance=tolerance)


# -- direct transcription oracle -------------------------------------------------------

@dataclass
class OracleResult:
    cost: float
    controls: np.ndarray
    constraint_residual: float
    iterations: int


def transcription_oracle(problem, intervals=16, steps_per_interval=8, target=None,
                         max_outer=25, tol=1e-10):
    """Upper bound on the optimal cost from piecewise-constant free gains.

    The free parameter (skew ``Omega`` for problem 1, ``R`` for problem 3) is
    held constant on each of ``intervals`` subintervals, which keeps the path
    constraint exact. The terminal condition ``Phi_1 = target`` (default: the
    reachable determined endpoint) is imposed with an augmented Lagrangian;
    inner minimizations use BFGS with central-difference gradients.
    """
    if steps_per_interval % 2:
        raise ValueError("steps_per_interval must be even")
    fine = np.linspace(0.0, 1.0, 2 * intervals * steps_per_interval + 1)
    loop = _OpenLoop(problem, fine)
    basis = loop.basis
    q = len(basis)
    if target is None:
        targets = endpoint_targets(problem.surface)
        if not targets:
            raise ValueError("oracle needs a determined, reachable terminal transition")
        target = targets[0][1]
    # a coarse step reads fine nodes 2i, 2i+1, 2i+2, all with the control
    # of the interval the step starts in
    per = 2 * steps_per_interval
    step_owner = np.minimum(np.arange(len(fine) - 1) // per, intervals - 1)

    def expand(w):
        """(B, intervals*q) -> per-node controls (B, T, a, b) for each stage."""
        w = w.reshape(w.shape[:-1] + (intervals, q))
        ctl = np.einsum("...iq,qab->...iab", w, basis)
        return ctl

    def evaluate(w):
        return _run_piecewise(loop, expand(w), step_owner, per)

    def objective(w):
        phi, gain, cost = evaluate(w)
        c = (phi[..., -1, :, :] - target).reshape(phi.shape[:-3] + (-1,))
        return cost, c

    dim = intervals * q
    lam = np.zeros(target.size)
    mu = 10.0
    w = np.zeros(dim)
    h = 1e-6
    iters = 0
    prev = np.inf
    for _ in range(max_outer):
        def aug(x):
            pts = np.concatenate([x[None], x[None] + h * np.eye(dim), x[None] - h * np.eye(dim)])
            cost, c = objective(pts)
            val = cost + c @ lam + 0.5 * mu * np.sum(c * c, axis=-1)
            grad = (val[1:dim + 1] - val[dim + 1:]) / (2 * h)
            return float(val[0]), grad

        res = minimize(aug, w, jac=True, method="BFGS", options={"gtol": 1e-10, "maxiter": 500})
        w = res.x
        iters += res.nit
        _, c = objective(w[None])
        c = c[0]
        cn = float(np.linalg.norm(c))
        if cn < tol:
            break
        lam = lam + mu * c
        if cn > 0.25 * prev:
            mu *= 10.0
        prev = cn
    cost, c = objective(w[None])
    return OracleResult(cost=float(cost[0]), controls=expand(w), constraint_residual=float(
        np.linalg.norm(c[0])), iterations=iters)


def _run_piecewise(loop, ctl, step_owner, per):
    """Open-loop run with piecewise-constant controls, cost integrated per interval."""
    times = loop.times
    coarse = (len(times) - 1) // 2
    n = loop.problem.n
    batch = ctl.shape[:-3]
    h = 1.0 / coarse
    phi = np.broadcast_to(np.eye(n), batch + (n, n)).copy()
    p1 = loop.tag == "P1"
    nm = None if p1 else np.broadcast_to(loop.n0, batch + loop.n0.shape).copy()

    def gain_at(j, interval, nmat):
        c = ctl[..., interval, :, :]
        if p1:
            return (0.5 * loop.sigma_dot[j] + c) @ loop.sigma_inv[j]
        return loop.m_proj[j] + c @ nmat

    total = np.zeros(batch)
    seg_vals = []
    seg_times = []
    nodes_phi = [phi]
    for i in range(coarse):
        j = 2 * i
        iv = step_owner[j]
        if j % per == 0:
            if seg_vals:
                total = total + simpson(np.stack(seg_vals, -1), x=np.array(seg_times), axis=-1)
            seg_vals, seg_times = [], []
            k0 = gain_at(j, iv, nm)
            seg_vals.append(_integrand(loop, k0, phi, j))
            seg_times.append(times[j])

        if p1:
            def f(jj, s):
                return (gain_at(jj, iv, None) @ s[0],)
            state = (phi,)
        else:
            def f(jj, s):
                k = gain_at(jj, iv, s[1])
                return k @ s[0], -s[1] @ loop.m_proj[jj]
            state = (phi, nm)
        k1 = f(j, state)
        k2 = f(j + 1, tuple(x + 0.5 * h * k for x, k in zip(state, k1)))
        k3 = f(j + 1, tuple(x + 0.5 * h * k for x, k in zip(state, k2)))
        k4 = f(j + 2, tuple(x + h * k for x, k in zip(state, k3)))
        state = tuple(x + (h / 6.0) * (a + 2 * b + 2 * c + d)
                      for x, a, b, c, d in zip(state, k1, k2, k3, k4))
        phi = state[0]
        if not p1:
            nm = state[1]
        nodes_phi.append(phi)
        seg_vals.append(_integrand(loop, gain_at(j + 2, iv, nm), phi, j + 2))
        seg_times.append(times[j + 2])
    total = total + simpson(np.stack(seg_vals, -1), x=np.array(seg_times), axis=-1)
    return np.stack(nodes_phi, axis=-3), None, total


def _integrand(loop, gain, phi, j):
    if loop.tag == "P1":
        # restated cost 1/2 tr(K Sigma K^T): exact path, independent of Phi
        return 0.5 * np.einsum("...ij,jk,...ik->...", gain, loop.sigma[j], gain)
    val = kinetic_integrand(gain, phi, loop.sigma0)
    if loop.problem.epsilon:
        val = val + loop.problem.epsilon * attention_integrand(gain)
    return val
