"""Fixed-step RK4 integration of matrix ODEs and single shooting over P0.

The shooting unknown is the initial costate ``P0`` (n x n). Residuals are
driven to zero by damped Gauss-Newton with a forward-difference Jacobian;
all Jacobian columns are integrated together as one batch.
"""
import logging
from dataclasses import dataclass

import numpy as np

from .boundary import (determined_endpoint, gram_feasibility, surface_residual,
                       tangent_projector)
from .errors import FlowDegenerate, InfeasibleSurface, NoConvergence, NotDetermined
from .matops import inv_sqrt_spd, sqrt_spd
from .solution import MIN_STEPS, FlowSolution, attention_cost, kinetic_cost

logger = logging.getLogger(__name__)

GRAM_TOL = 1e-8
MONITOR_EVERY = 8


@dataclass(frozen=True)
class IntegratorGrid:
    steps: int = 2000
    scheme: str = "rk4"

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < MIN_STEPS:
            raise ValueError(f"steps must be an integer >= {MIN_STEPS}, got {self.steps}")
        if self.scheme != "rk4":
            raise ValueError(f"unsupported scheme {self.scheme!r}")

    @property
    def times(self):
        return np.linspace(0.0, 1.0, self.steps + 1)


@dataclass(frozen=True)
class ShootingOptions:
    residual_tol: float = 1e-9
    max_iterations: int = 100
    fd_step: float = 1e-6
    damping: float = 1.0
    multistart: int = 8
    seed: int = 0
    seed_scale: float = 1.0
    min_damping: float = 1e-4
    rcond: float = 1e-6

    def __post_init__(self):
        for name in ("residual_tol", "fd_step", "damping", "seed_scale", "min_damping", "rcond"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iterations < 1 or self.multistart < 0:
            raise ValueError("max_iterations must be >= 1 and multistart >= 0")


def rk4_integrate(field, initial, grid, monitor=None, record=True):
    """Classical RK4 on ``[0, 1]`` with ``grid.steps`` uniform steps.

    ``initial`` is an array or a tuple of arrays (leading batch axes are fine
    as long as ``field`` broadcasts). With ``record`` the return value has a
    new leading time axis on every component; otherwise only the final state
    is returned. ``monitor(state)`` runs after every step and may raise
    :class:`FlowDegenerate`.
    """
    single = not isinstance(initial, tuple)
    state = (np.asarray(initial, dtype=float),) if single else tuple(
        np.asarray(x, dtype=float) for x in initial)
    f = (lambda t, s: (field(t, s[0]),)) if single else field
    steps = grid.steps
    h = 1.0 / steps
    out = [[x] for x in state] if record else None
    for i in range(steps):
        t = i * h
        k1 = f(t, state)
        k2 = f(t + 0.5 * h, tuple(x + 0.5 * h * k for x, k in zip(state, k1)))
        k3 = f(t + 0.5 * h, tuple(x + 0.5 * h * k for x, k in zip(state, k2)))
        k4 = f(t + h, tuple(x + h * k for x, k in zip(state, k3)))
        state = tuple(x + (h / 6.0) * (a + 2.0 * b + 2.0 * c + d)
                      for x, a, b, c, d in zip(state, k1, k2, k3, k4))
        if monitor is not None:
            monitor(state)
        if record:
            for o, x in zip(out, state):
                o.append(x)
    result = tuple(np.stack(o) for o in out) if record else state
    return result[0] if single else result


def endpoint_targets(surface):
    """Reachable terminal transitions when S is discrete, else ``None``.

    ``det Phi_t = exp(int tr K)`` stays positive, so candidates with
    ``det Phi_1 <= 0`` are dropped.
    """
    try:
        cands = determined_endpoint(surface)
    except NotDetermined:
        return None
    return [(i, phi, u) for i, (phi, u) in enumerate(cands) if np.linalg.det(phi) > 0]


def _residual_from_final(final, surface, target):
    phi1, p1 = final[0], final[1]
    n = phi1.shape[-1]
    if target is not None:
        return (phi1 - target).reshape(phi1.shape[:-2] + (n * n,))
    batch = phi1.shape[:-2]
    phi_b = phi1.reshape((-1, n, n))
    p_b = p1.reshape((-1, n * n))
    trans = np.stack([tangent_projector(f, surface) @ q for f, q in zip(phi_b, p_b)])
    res = np.concatenate([surface_residual(phi_b, surface), trans], axis=-1)
    return res.reshape(batch + (-1,))


def shooting_residual(p0, system, surface, grid=None, target=None):
    """Integrate from ``(I, P0)`` and return the terminal residual.

    With ``target`` (determined-endpoint mode) the residual is
    ``vec(Phi_1 - target)``. Otherwise it is ``surface_residual(Phi_1)``
    followed by the projection of ``P_1`` onto the tangent space of S (whose
    norm equals that of the transversality components, but which does not
    depend on a choice of tangent basis). ``p0`` may carry batch axes.
    """
    steps = grid.steps if grid is not None else system.grid.steps
    final = rk4_integrate(system.field, system.initial_state(p0), IntegratorGrid(steps),
                          monitor=system.monitor, record=False)
    return _residual_from_final(final, surface, target)


class _BatchShooter:
    """Damped Gauss-Newton run for many starts in lockstep.

    Every residual evaluation integrates one batch of costates; members whose
    flow degenerates are reset to their initial state and scored ``inf``.
    """

    def __init__(self, system, surface, target, opts):
        self.system = system
        self.surface = surface
        self.target = target
        self.opts = opts
        self.grid = IntegratorGrid(system.grid.steps)
        self.n = system.n

    def residual(self, p0):
        """Residuals of a batch ``(b, n, n)`` of costates; norms are ``inf`` for failures."""
        init = self.system.initial_state(p0)
        failed = np.zeros(p0.shape[0], dtype=bool)
        calls = [0]

        def guard(state):
            calls[0] += 1
            if calls[0] % MONITOR_EVERY and calls[0] != self.grid.steps:
                return
            bad = self.system.degenerate(state)
            if bad.any():
                failed[:] |= bad
                for x, x0 in zip(state, init):
                    x[bad] = x0[bad]

        with np.errstate(all="ignore"):
            final = rk4_integrate(self.system.field, init, self.grid, monitor=guard, record=False)
        res = _residual_from_final(final, self.surface, self.target)
        norms = np.linalg.norm(res, axis=-1)
        norms[failed | ~np.isfinite(norms)] = np.inf
        return res, norms

    def jacobian(self, p0):
        """Forward-difference Jacobians for a batch of costates."""
        a, n = p0.shape[0], self.n
        n2 = n * n
        h = self.opts.fd_step * np.maximum(1.0, np.linalg.norm(p0.reshape(a, -1), axis=1))
        pert = np.eye(n2).reshape(1, n2, n, n) * h[:, None, None, None]
        batch = np.concatenate([p0[:, None], p0[:, None] + pert], axis=1).reshape(-1, n, n)
        res, norms = self.residual(batch)
        res = res.reshape(a, n2 + 1, -1)
        ok = np.isfinite(norms.reshape(a, n2 + 1)).all(axis=1)
        jac = np.swapaxes(res[:, 1:] - res[:, :1], 1, 2) / h[:, None, None]
        return res[:, 0], jac, ok

    def _step(self, r, jac):
        u, s, vt = np.linalg.svd(jac, full_matrices=False)
        if s.size == 0 or s[0] == 0:
            return None, 0
        keep = s > self.opts.rcond * s[0]
        step = -(vt[keep].T @ ((u[:, keep].T @ r) / s[keep]))
        return step.reshape(self.n, self.n), int(keep.sum())

    def solve(self, starts, labels):
        opts = self.opts
        p = np.array(starts, dtype=float)
        nst = p.shape[0]
        lam = np.full(nst, float(opts.damping))
        iters = np.zeros(nst, dtype=int)
        history = []
        _, norm = self.residual(p)
        alive = np.isfinite(norm)
        while True:
            active = np.flatnonzero(alive & (norm > opts.residual_tol) & (iters < opts.max_iterations))
            if active.size == 0:
                break
            r0, jac, ok = self.jacobian(p[active])
            steps = {}
            ranks = {}
            for j, i in enumerate(active):
                step, rank = self._step(r0[j], jac[j]) if ok[j] else (None, 0)
                if step is None:
                    alive[i] = False
                else:
                    steps[i], ranks[i] = step, rank
            pending = [i for i in active if i in steps]
            accepted = set()
            while pending:
                trial = np.stack([p[i] + lam[i] * steps[i] for i in pending])
                _, tnorm = self.residual(trial)
                still = []
                for i, tp, tn in zip(pending, trial, tnorm):
                    if tn < norm[i]:
                        p[i], norm[i] = tp, tn
                        accepted.add(i)
                    else:
                        lam[i] *= 0.5
                        if lam[i] >= opts.min_damping:
                            still.append(i)
                        else:
                            alive[i] = False
                pending = still
            for i in steps:
                iters[i] += 1
                rank = ranks[i]
                rec = {"start": labels[i], "iteration": int(iters[i]), "residual": float(norm[i]),
                       "damping": float(lam[i]), "rank": rank,
                       "rank_deficient": rank < min(jac.shape[1:])}
                history.append(rec)
                logger.debug("shoot %s it=%d |r|=%.3e lam=%.3g rank=%d", labels[i],
                             rec["iteration"], rec["residual"], rec["damping"], rank)
                if i in accepted:
                    lam[i] = min(1.0, 2.0 * lam[i])
        return p, norm, iters, history


def _seeds(n, opts):
    rng = np.random.default_rng(opts.seed)
    starts = [np.zeros((n, n))]
    starts += [opts.seed_scale * rng.standard_normal((n, n)) for _ in range(opts.multistart)]
    return starts


def node_residuals(problem, phi, times, surface=None):
    """Per-node constraint residuals ``(cov, tracer)``; NaN where a constraint is not imposed.

    Problem 1 imposes the covariance at every node and the tracer at the
    endpoints; problem 3 the other way round.
    """
    surface = surface if surface is not None else problem.surface
    y0, y1 = surface.y0, surface.y1
    res_cov = np.full(len(times), np.nan)
    res_trc = np.full(len(times), np.nan)
    if problem.tag == "P1":
        for i, t in enumerate(times):
            sigma, _ = problem.path.evaluate(t)
            res_cov[i] = np.linalg.norm(phi[i] @ surface.sigma0 @ phi[i].T - sigma)
        res_trc[0] = np.linalg.norm(phi[0] @ y0 - y0)
        res_trc[-1] = np.linalg.norm(phi[-1] @ y0 - y1)
    else:
        res_cov[0] = np.linalg.norm(phi[0] @ surface.sigma0 @ phi[0].T - surface.sigma0)
        res_cov[-1] = np.linalg.norm(phi[-1] @ surface.sigma0 @ phi[-1].T - surface.sigma1)
        for i, t in enumerate(times):
            res_trc[i] = np.linalg.norm(phi[i] @ y0 - problem.tracers.evaluate(t)[0])
    return res_cov, res_trc


def build_solution(problem, system, p0, target_index=0, surface=None):
    """Integrate the Hamiltonian system from ``P0`` and sample everything on the grid."""
    grid = IntegratorGrid(system.grid.steps)
    surface = surface if surface is not None else problem.surface
    traj = rk4_integrate(system.field, system.initial_state(p0), grid,
                         monitor=system.monitor, record=True)
    times = grid.times
    gains, controls = [], []
    for i, t in enumerate(times):
        k, c = system.controls(t, tuple(x[i] for x in traj))
        gains.append(k)
        controls.append(c)
    phi = traj[0]
    res_cov, res_trc = node_residuals(problem, phi, times, surface)
    sol = FlowSolution(
        times=times, phi=phi, gain=np.stack(gains), problem=problem.tag,
        epsilon=float(problem.epsilon), control=np.stack(controls), costate=traj[1],
        nmat=traj[2] if len(traj) > 2 else None, residual_cov=res_cov,
        residual_tracer=res_trc, p0=np.array(p0, dtype=float), candidate=target_index)
    sol.j_ke = kinetic_cost(sol, surface.sigma0)
    sol.j_a = attention_cost(sol)
    sol.orthogonal_factor = (inv_sqrt_spd(surface.sigma1) @ phi[-1] @ sqrt_spd(surface.sigma0))
    return sol


def solve_shooting(problem, grid=None, opts=None, starts=None):
    """Solve the two-point boundary value problem by multistart single shooting.

    Parameters
    ----------
    problem : Problem1 or Problem3
        Problem data; ``problem.surface`` is the terminal surface.
    grid : IntegratorGrid, optional
    opts : ShootingOptions, optional
    starts : list of (n, n) arrays, optional
        Initial costates to try instead of ``{0} U random``.

    Returns
    -------
    FlowSolution
        The converged solution of lowest total cost, over all starts and all
        reachable terminal candidates.

    Raises
    ------
    InfeasibleSurface
        If the tracer Gram matrices rule out any terminal transition.
    NoConvergence
        If no start reaches ``opts.residual_tol``.
    """
    grid = grid or IntegratorGrid()
    opts = opts or ShootingOptions()
    surface = problem.surface
    gram = gram_feasibility(surface)
    if gram > GRAM_TOL:
        raise InfeasibleSurface(f"terminal surface is empty (Gram residual {gram:.3e})")
    system = problem.hamiltonian(grid.steps)
    targets = endpoint_targets(surface)
    if targets is None:
        targets = [(0, None, None)]
    elif not targets:
        raise InfeasibleSurface("no terminal candidate is reachable with det(Phi_1) > 0")
    starts = starts if starts is not None else _seeds(problem.n, opts)

    log = []
    found = []
    best = (np.inf, None)
    for index, target, _ in targets:
        shooter = _BatchShooter(system, surface, target, opts)
        labels = [f"{index}:{k}" for k in range(len(starts))]
        p0s, norms, iters, history = shooter.solve(starts, labels)
        for rec in history:
            rec["candidate"] = index
        log.extend(history)
        for k in range(len(starts)):
            if norms[k] < best[0]:
                best = (float(norms[k]), p0s[k])
            if norms[k] <= opts.residual_tol:
                try:
                    sol = build_solution(problem, system, p0s[k], index, surface)
                except FlowDegenerate:
                    continue
                sol.converged = True
                sol.iterations = int(iters[k])
                sol.residual_norm = float(norms[k])
                found.append(sol)
                logger.info("start %s converged in %d iterations, cost %.6g", labels[k],
                            iters[k], sol.total_cost)
    if not found:
        raise NoConvergence(f"no start converged (best residual {best[0]:.3e})",
                            best_residual=best[0], best=best[1])
    chosen = min(found, key=lambda s: (s.total_cost, s.residual_norm))
    chosen.log = log
    return chosen
