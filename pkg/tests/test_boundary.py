import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tracersteer.boundary import (TerminalSurface, determined_endpoint, gram_feasibility,
                                  surface_linearization, surface_residual, tangent_basis,
                                  tangent_projector, transversality_residual)
from tracersteer.errors import InfeasibleSurface, NotDetermined
from tracersteer.matops import inv_sqrt_spd, rotation_angle, sqrt_spd, sym_flatten

from conftest import PHI1_EXAMPLE1, PHI1_EXAMPLE2, random_spd

S2, S3 = np.sqrt(2.0), np.sqrt(3.0)
EX1 = TerminalSurface(np.eye(2), np.array([[2, S2], [S2, 2]]), [[-1.0], [0.0]], [[0.0], [1.0]])
EX2 = TerminalSurface(np.eye(2), 3 * np.eye(2), [[-S3 / 2], [0.5]], [[0.0], [-S3]])


def test_gram_feasibility_examples():
    assert gram_feasibility(EX1) <= 1e-15
    assert gram_feasibility(EX2) <= 1e-15
    bad = TerminalSurface(np.eye(2), np.eye(2), [[1.0], [0.0]], [[2.0], [0.0]])
    assert gram_feasibility(bad) == pytest.approx(3.0)


def test_gram_feasibility_invariant_under_tracer_mixing():
    rng = np.random.default_rng(0)
    n, m = 4, 2
    s0, s1 = random_spd(rng, n), random_spd(rng, n)
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    y0 = rng.standard_normal((n, m))
    y1 = sqrt_spd(s1) @ q @ inv_sqrt_spd(s0) @ y0
    g = rng.standard_normal((m, m)) + 3 * np.eye(m)
    assert gram_feasibility(TerminalSurface(s0, s1, y0, y1)) < 1e-10
    assert gram_feasibility(TerminalSurface(s0, s1, y0 @ g, y1 @ g)) < 1e-9
    assert gram_feasibility(TerminalSurface(s0, s1, y0 @ g, 1.1 * y1 @ g)) > 1e-3


def test_surface_residual_examples():
    same = TerminalSurface(np.eye(2), np.eye(2), [[1.0], [0.0]], [[1.0], [0.0]])
    assert np.all(surface_residual(np.eye(2), same) == 0)
    assert np.linalg.norm(surface_residual(PHI1_EXAMPLE1, EX1)) <= 1e-12
    r = surface_residual(np.eye(2), EX1)
    assert len(r) == 3 + 2
    assert np.allclose(r[:3], sym_flatten(np.eye(2) - EX1.sigma1))


def test_tangent_dimension_determined_case_is_zero():
    assert tangent_basis(PHI1_EXAMPLE1, EX1).shape == (0, 2, 2)
    assert np.linalg.matrix_rank(surface_linearization(PHI1_EXAMPLE1, EX1)) == 4
    assert transversality_residual(np.ones((2, 2)), PHI1_EXAMPLE1, EX1).shape == (0,)


def test_tangent_no_tracers_is_skew():
    s = TerminalSurface(np.eye(2), np.eye(2), np.zeros((2, 0)), np.zeros((2, 0)))
    basis = tangent_basis(np.eye(2), s)
    assert basis.shape == (1, 2, 2)
    assert np.allclose(basis[0], -basis[0].T)
    assert transversality_residual(basis[0], np.eye(2), s) == pytest.approx([1.0])
    assert np.allclose(transversality_residual(np.zeros((2, 2)), np.eye(2), s), 0.0)


def _random_surface(rng, n, m):
    s0, s1 = random_spd(rng, n), random_spd(rng, n)
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    phi = sqrt_spd(s1) @ q @ inv_sqrt_spd(s0)
    y0 = rng.standard_normal((n, m))
    return TerminalSurface(s0, s1, y0, phi @ y0), phi


@pytest.mark.parametrize("n, m", [(3, 1), (3, 0), (4, 1), (4, 2), (5, 2)])
def test_tangent_dimension_count(n, m):
    # the stabilizer of m orthonormal directions in O(n) is O(n - m)
    surface, phi = _random_surface(np.random.default_rng(n * 10 + m), n, m)
    assert tangent_basis(phi, surface).shape[0] == (n - m) * (n - m - 1) // 2


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 5), data=st.data())
def test_tangent_basis_properties(seed, n, data):
    m = data.draw(st.integers(0, n - 1))
    surface, phi = _random_surface(np.random.default_rng(seed), n, m)
    basis = tangent_basis(phi, surface)
    lin = surface_linearization(phi, surface)
    for v in basis:
        assert np.max(np.abs(lin @ v.ravel())) <= 1e-10 * max(1.0, np.linalg.norm(lin))
    gram = np.einsum("aij,bij->ab", basis, basis)
    assert np.allclose(gram, np.eye(len(basis)), atol=1e-10)
    proj = tangent_projector(phi, surface)
    assert np.allclose(proj @ proj, proj, atol=1e-10)


def test_determined_endpoint_example1():
    cands = determined_endpoint(EX1)
    phi, u = cands[0]
    assert np.allclose(phi, PHI1_EXAMPLE1, atol=1e-14)
    assert rotation_angle(u) == pytest.approx(67.5, abs=1e-10)
    assert np.linalg.det(cands[1][0]) < 0


def test_determined_endpoint_example2():
    phi, u = determined_endpoint(EX2)[0]
    assert np.allclose(phi, PHI1_EXAMPLE2, atol=1e-14)
    assert rotation_angle(u) == pytest.approx(-120.0, abs=1e-10)


def test_determined_endpoint_trivial_and_all_on_surface():
    s = TerminalSurface(np.eye(2), np.eye(2), [[0.3], [0.4]], [[0.3], [0.4]])
    cands = determined_endpoint(s)
    assert any(np.allclose(phi, np.eye(2)) for phi, _ in cands)
    rng = np.random.default_rng(7)
    for n in (2, 3, 4):
        surface, _ = _random_surface(rng, n, n - 1)
        for phi, u in determined_endpoint(surface):
            assert np.linalg.norm(surface_residual(phi, surface)) <= 1e-10
            assert np.allclose(u @ u.T, np.eye(n), atol=1e-12)


def test_determined_endpoint_errors():
    with pytest.raises(InfeasibleSurface):
        determined_endpoint(TerminalSurface(np.eye(2), np.eye(2), [[1.0], [0.0]], [[2.0], [0.0]]))
    surface, _ = _random_surface(np.random.default_rng(3), 3, 1)
    with pytest.raises(NotDetermined):
        determined_endpoint(surface)
