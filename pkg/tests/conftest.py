"""Shared fixtures. The two bundled scenarios are solved once per session."""
import time
from pathlib import Path

import numpy as np
import pytest

from tracersteer.config import load_config

SCENARIOS = Path(__file__).resolve().parents[1] / "src" / "tracersteer" / "scenarios"
SQRT2 = np.sqrt(2.0)
SQRT3 = np.sqrt(3.0)
PHI1_EXAMPLE1 = np.array([[0.0, SQRT2], [-1.0, 1.0]])
PHI1_EXAMPLE2 = np.array([[-SQRT3 / 2, -1.5], [1.5, -SQRT3 / 2]])


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: needs a full 2000-step solve")


class Solved:
    def __init__(self, path):
        from tracersteer.shoot import solve_shooting

        self.config = load_config(path)
        self.problem = self.config.build_problem()
        start = time.perf_counter()
        self.solution = solve_shooting(self.problem, self.config.grid, self.config.options)
        self.seconds = time.perf_counter() - start


@pytest.fixture(scope="session")
def example1():
    return Solved(SCENARIOS / "example1.toml")


@pytest.fixture(scope="session")
def example2():
    return Solved(SCENARIOS / "example2.toml")


@pytest.fixture(scope="session")
def example1_problem():
    return load_config(SCENARIOS / "example1.toml").build_problem()


@pytest.fixture(scope="session")
def example2_problem():
    return load_config(SCENARIOS / "example2.toml").build_problem()


def random_spd(rng, n, cond=50.0):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    w = np.exp(rng.uniform(0.0, np.log(cond), n))
    return (q * w) @ q.T


def random_skew(rng, n):
    a = rng.standard_normal((n, n))
    return a - a.T


@pytest.fixture(scope="session")
def oracles(example1, example2):
    from tracersteer.ensemble import transcription_oracle
    return {1: transcription_oracle(example1.problem), 2: transcription_oracle(example2.problem)}


@pytest.fixture(scope="session")
def perturbations(example1, example2):
    from tracersteer.ensemble import perturbation_optimality_check
    return {k: perturbation_optimality_check(s.solution, s.problem, magnitudes=(1e-3, 1e-2), trials=32)
            for k, s in ((1, example1), (2, example2))}


@pytest.fixture(scope="session")
def ensembles(example1, example2):
    from tracersteer.ensemble import simulate_ensemble
    return {k: simulate_ensemble(s.solution, s.problem.sigma0, s.problem.tracers, 100_000, seed=7)
            for k, s in ((1, example1), (2, example2))}


@pytest.fixture(scope="session")
def refined(example1, example2):
    """Both examples re-solved on a doubled grid, warm-started from the coarse P0."""
    from tracersteer.shoot import IntegratorGrid, ShootingOptions, solve_shooting
    return {k: solve_shooting(s.problem, IntegratorGrid(2 * s.config.steps), ShootingOptions(multistart=0),
                              starts=[s.solution.p0])
            for k, s in ((1, example1), (2, example2))}


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
