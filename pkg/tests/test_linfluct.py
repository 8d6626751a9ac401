import math

import numpy as np
import pytest

import vkerr as vk
from vkerr import linfluct
from vkerr.errors import InvalidParameterError, NearSingularError

SWAP = np.array([[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]])


def liquid(delta, eta=+1):
    return vk.ModelParams(delta=delta, eta=eta)


def stable_state(delta, e2, pick=0):
    m = liquid(delta)
    roots = vk.singlemode_intensities(e2, m)
    return vk.singlemode_state(e2, m, roots[pick]), m


def random_stable_states(n, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        m = liquid(rng.uniform(-2, 1.6), eta=int(rng.choice([-1, 1])))
        e2 = rng.uniform(0.05, 4.0)
        for I in vk.singlemode_intensities(e2, m):
            s = vk.singlemode_state(e2, m, I)
            if s.stable is vk.Stability.STABLE:
                out.append((s, m))
                break
    return out[:n]


def test_vacuum_jacobian_diagonal():
    m = liquid(1.5)
    s = vk.singlemode_state(0.0, m, 0.0)
    A = vk.drift_jacobian(s, m)
    expect = np.diag([-(1 + 1.5j), -(1 - 1.5j), -(1 + 1.5j), -(1 - 1.5j)])
    assert np.allclose(A, expect, atol=1e-15)


def test_jacobian_frozen_entries():
    s, m = stable_state(1.0, 1.0)
    A = vk.drift_jacobian(s, m)
    assert A[0, 0] == pytest.approx(-1 + 1j, abs=1e-12)
    assert A[0, 1] == pytest.approx(1j, abs=1e-12)


def test_singlemode_block_decoupling():
    s, m = stable_state(0.8, 1.2)
    A = vk.drift_jacobian(s, m)
    D = vk.diffusion_at(s, m)
    for M in (A, D):
        assert np.all(M[:2, 2:] == 0)
        assert np.all(M[2:, :2] == 0)


def test_jacobian_matches_finite_differences():
    rng = np.random.default_rng(5)
    for _ in range(6):
        m = liquid(rng.uniform(-2, 2), eta=int(rng.choice([-1, 1])))
        u = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        e2 = rng.uniform(0.1, 3.0)
        A = linfluct.jacobian_at(u, m)
        h = 1e-6
        FD = np.zeros((4, 4), dtype=complex)
        for j in range(4):
            up, um = u.copy(), u.copy()
            up[j] += h
            um[j] -= h
            FD[:, j] = (linfluct.drift_vector(up, m, e2)
                        - linfluct.drift_vector(um, m, e2)) / (2 * h)
        assert np.max(np.abs(A - FD)) / np.max(np.abs(A)) < 1e-6


def test_diffusion_values_and_sparsity():
    s, m = stable_state(1.0, 1.0)
    D = vk.diffusion_at(s, m)
    assert D[0, 0] == pytest.approx(1j, abs=1e-12)
    assert D[2, 2] == pytest.approx(0.75j, abs=1e-12)
    assert D[0, 2] == 0
    allowed = set(linfluct.DIFFUSION_SPARSITY)
    for i in range(4):
        for j in range(4):
            if (i, j) not in allowed:
                assert D[i, j] == 0
    assert np.array_equal(D, D.T)


def test_diffusion_symmetric_on_bimode():
    m = liquid(1.0)
    s = [x for x in vk.bimode_states(3.0, m) if not x.phase_partner][0]
    D = vk.diffusion_at(s, m)
    assert np.array_equal(D, D.T)
    allowed = set(linfluct.DIFFUSION_SPARSITY)
    for i in range(4):
        for j in range(4):
            if (i, j) not in allowed:
                assert D[i, j] == 0


def test_vacuum_spectral_matrix_zero():
    m = liquid(0.5)
    s = vk.singlemode_state(0.0, m, 0.0)
    for om in (0.0, 0.7, 3.0):
        assert np.all(vk.spectral_matrix(s, m, om) == 0)


def test_spectral_matrix_transpose_identity():
    for s, m in random_stable_states(5, seed=8):
        for om in (0.0, 0.4, 1.3, 2.7):
            M = vk.spectral_matrix(s, m, om)
            Mm = vk.spectral_matrix(s, m, -om)
            assert np.max(np.abs(M.T - Mm)) < 1e-10


def test_spectral_matrix_conjugate_pairs():
    for s, m in random_stable_states(5, seed=9):
        M = vk.spectral_matrix(s, m, 0.9)
        assert np.max(np.abs(M.conj() - SWAP @ M.T @ SWAP)) < 1e-10


def test_output_is_twice_intracavity():
    s, m = stable_state(1.0, 1.0)
    M = vk.spectral_matrix(s, m, 0.6)
    Mo = vk.output_spectral_matrix(s, m, 0.6)
    assert np.allclose(Mo, 2.0 * M, atol=0, rtol=1e-15)


def test_near_singular_error_at_bifurcation():
    m = liquid(2.0)
    s = vk.state_at_bifurcation(m, "down")
    with pytest.raises(NearSingularError) as exc:
        vk.spectral_matrix(s, m, 0.0)
    assert exc.value.omega == 0.0
    # Away from omega = 0 the same state evaluates fine.
    M = vk.spectral_matrix(s, m, 0.5)
    assert np.all(np.isfinite(M))


def test_marginal_eigenvalue_at_pol_threshold():
    m = liquid(1.0)
    s = vk.state_at_bifurcation(m, "pol")
    lam = np.linalg.eigvals(vk.drift_jacobian(s, m))
    assert np.min(np.abs(lam.real)) < 1e-8


def test_frequency_grid_validation():
    with pytest.raises(InvalidParameterError):
        linfluct.FrequencyGrid(np.array([0.0, 0.0, 1.0]))
    with pytest.raises(InvalidParameterError):
        linfluct.FrequencyGrid(np.array([0.0, np.inf]))
    with pytest.raises(InvalidParameterError):
        linfluct.FrequencyGrid(np.array([]))
    g = linfluct.log_grid(5.0, n=10)
    assert g.omegas[0] == 0.0 and len(g) == 11
    assert np.all(np.diff(g.omegas) > 0)
