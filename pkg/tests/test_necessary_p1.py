import numpy as np
import pytest

from tracersteer.errors import FlowDegenerate, NotSpd
from tracersteer.necessary_p1 import (P1System, Problem1, gain_p1, omega_from_costate,
                                      p1_vector_field)
from tracersteer.paths import TracerEndpoints, mccann_path
from tracersteer.shoot import IntegratorGrid, rk4_integrate

from conftest import random_skew, random_spd

S2 = np.sqrt(2.0)
SIGMA1 = np.array([[2.0, S2], [S2, 2.0]])


def test_omega_vanishes_on_mccann_with_zero_costate():
    path = mccann_path(np.eye(2), SIGMA1)
    for t in (0.0, 0.25, 0.7, 1.0):
        s, sd = path(t)
        assert np.max(np.abs(omega_from_costate(np.eye(2), np.zeros((2, 2)), s, sd))) < 1e-14


def test_omega_small_examples():
    z = np.zeros((2, 2))
    assert np.allclose(omega_from_costate(np.eye(2), np.eye(2), np.eye(2), z), 0.0)
    p = np.array([[0.0, 1.0], [0.0, 0.0]])
    om = omega_from_costate(np.eye(2), p, np.eye(2), z)
    assert np.allclose(om, 0.5 * np.array([[0.0, -1.0], [1.0, 0.0]]))


def test_omega_satisfies_its_equation_and_is_skew():
    rng = np.random.default_rng(0)
    for n in (2, 3, 4):
        s = random_spd(rng, n)
        sd = rng.standard_normal((n, n))
        sd = sd + sd.T
        phi, p = rng.standard_normal((2, n, n))
        om = omega_from_costate(phi, p, s, sd)
        a = phi @ p.T + 0.5 * sd
        rhs = a @ s - s @ a.T
        assert np.array_equal(om, -om.T)
        assert np.linalg.norm(om @ s + s @ om - rhs) <= 1e-10 * max(1.0, np.linalg.norm(rhs))


def test_omega_is_stationary_point_of_hamiltonian():
    # H(Omega) = tr(K S K^T)/2 + tr(P^T K Phi), K = (Sd/2 + Omega) S^{-1}
    rng = np.random.default_rng(1)
    n = 3
    s = random_spd(rng, n)
    sd = rng.standard_normal((n, n))
    sd = sd + sd.T
    phi, p = rng.standard_normal((2, n, n))

    def ham(om):
        k = (0.5 * sd + om) @ np.linalg.inv(s)
        return 0.5 * np.trace(k @ s @ k.T) + np.trace(p.T @ k @ phi)

    om = omega_from_costate(phi, p, s, sd)
    for _ in range(5):
        v = random_skew(rng, n)
        h = 1e-5
        assert abs(ham(om + h * v) - ham(om - h * v)) / (2 * h) < 1e-7


def test_gain_examples():
    z = np.zeros((2, 2))
    assert np.allclose(gain_p1(np.eye(2), z, z), 0.0)
    assert np.allclose(gain_p1(np.eye(2), 2 * np.eye(2), z), np.eye(2))
    s = np.diag([1.0, 4.0])
    k = gain_p1(s, z, np.array([[0.0, 1.0], [-1.0, 0.0]]))
    assert np.allclose(k, [[0.0, 0.25], [-1.0, 0.0]])
    assert np.allclose(k @ s + s @ k.T, 0.0)
    with pytest.raises(NotSpd):
        gain_p1(-s, z, z)


def test_gain_satisfies_lyapunov_for_any_skew():
    rng = np.random.default_rng(2)
    for n in (2, 3, 5):
        s = random_spd(rng, n)
        sd = rng.standard_normal((n, n))
        sd = sd + sd.T
        k = gain_p1(s, sd, random_skew(rng, n))
        assert np.linalg.norm(k @ s + s @ k.T - sd) <= 1e-10 * max(1.0, np.linalg.norm(sd))


def test_vector_field_examples():
    const = mccann_path(np.eye(2), np.eye(2))
    dphi, dp = p1_vector_field(0.3, (np.eye(2), np.zeros((2, 2))), const)
    assert np.allclose(dphi, 0) and np.allclose(dp, 0)
    path = mccann_path(np.eye(2), SIGMA1)
    phi = np.array([[1.1, 0.2], [0.1, 0.9]])
    s, sd = path(0.4)
    dphi, _ = p1_vector_field(0.4, (phi, np.zeros((2, 2))), path)
    # with P = 0, Phi drops out of the Omega equation and Sd commutes with S: gradient flow
    assert np.allclose(dphi, 0.5 * sd @ np.linalg.inv(s) @ phi, atol=1e-13)


def test_pairing_derivative_vanishes_pointwise():
    rng = np.random.default_rng(3)
    path = mccann_path(random_spd(rng, 3), random_spd(rng, 3))
    for t in rng.uniform(0, 1, 5):
        phi, p = rng.standard_normal((2, 3, 3))
        dphi, dp = p1_vector_field(t, (phi, p), path)
        assert abs(np.trace(p.T @ dphi) + np.trace(dp.T @ phi)) < 1e-11 * (1 + np.linalg.norm(p) ** 2)


@pytest.fixture(scope="module")
def trajectory():
    path = mccann_path(np.eye(2), SIGMA1)
    problem = Problem1(path, TracerEndpoints([[-1.0], [0.0]], [[0.0], [1.0]]))
    system = P1System(problem, 2000)
    p0 = np.array([[0.4, -0.3], [0.8, 0.1]])
    traj = rk4_integrate(system.field, system.initial_state(p0), IntegratorGrid(2000),
                         monitor=system.monitor)
    return path, system, traj


def test_covariance_constraint_is_invariant(trajectory):
    path, _, (phi, _) = trajectory
    for i in np.linspace(0, 2000, 10).astype(int):
        t = i / 2000
        assert np.linalg.norm(phi[i] @ phi[i].T - path(t)[0]) <= 1e-6


def test_pairing_invariant_along_trajectory(trajectory):
    _, _, (phi, p) = trajectory
    pairing = np.einsum("tij,tij->t", p, phi)
    assert np.max(np.abs(pairing - pairing[0])) <= 1e-8


def test_controls_are_skew_at_every_node(trajectory):
    _, system, (phi, p) = trajectory
    for i in range(0, 2001, 50):
        _, om = system.controls(i / 2000, (phi[i], p[i]))
        assert np.array_equal(om, -om.T)


def test_system_tables_match_direct_field(trajectory):
    path, system, (phi, p) = trajectory
    t = 0.25
    direct = p1_vector_field(t, (phi[500], p[500]), path)
    fast = system.field(t, (phi[500], p[500]))
    for a, b in zip(direct, fast):
        assert np.allclose(a, b, atol=1e-12)


def test_monitor_flags_singular_phi(trajectory):
    _, system, _ = trajectory
    with pytest.raises(FlowDegenerate):
        system.monitor((np.zeros((2, 2)), np.zeros((2, 2))))
    mask = system.degenerate((np.stack([np.eye(2), np.full((2, 2), np.nan)]), np.zeros((2, 2, 2))))
    assert mask.tolist() == [False, True]


def test_problem1_needs_full_path():
    from tracersteer.paths import EndpointCovariances
    with pytest.raises(ValueError):
        Problem1(EndpointCovariances(np.eye(2), np.eye(2)), TracerEndpoints([1.0, 0.0], [1.0, 0.0]))
