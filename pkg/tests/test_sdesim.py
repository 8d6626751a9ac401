import json
import math

import numpy as np
import pytest
from scipy.integrate import quad

import vkerr as vk
from vkerr import sdesim
from vkerr.errors import (
    DegenerateBlockError,
    InsufficientDataError,
    InvalidParameterError,
    UnreliableRegimeError,
)


def liquid(delta, eta=+1):
    return vk.ModelParams(delta=delta, eta=eta)


def resonant_state():
    m = liquid(1.0)
    return vk.singlemode_state(1.0, m, 1.0), m


# --- noise factorization --------------------------------------------------------


def test_noise_factor_zero():
    nf = vk.noise_factor(np.zeros((4, 4), dtype=complex))
    assert np.all(nf.b == 0)


def test_noise_factor_singlemode_values():
    s, m = resonant_state()
    nf = vk.noise_factor(vk.diffusion_at(s, m))
    assert nf.b[0, 0] == pytest.approx(np.exp(1j * math.pi / 4), abs=1e-12)
    assert nf.b[2, 2] == pytest.approx(math.sqrt(0.75) * np.exp(1j * math.pi / 4), abs=1e-12)
    assert nf.b[2, 0] == 0


def test_noise_factor_reconstruction_on_states():
    m = liquid(1.0)
    states = [vk.singlemode_state(1.0, m, 1.0)]
    states += vk.bimode_states(3.0, m)
    states += vk.bimode_states(6.0, m)
    for s in states:
        D = vk.diffusion_at(s, m)
        nf = vk.noise_factor(D)
        assert np.max(np.abs(nf.b @ nf.b.T - D)) < 1e-12
        # block-lower-triangular within the (0,2) and (1,3) blocks
        assert nf.b[0, 2] == 0 and nf.b[1, 3] == 0


def test_noise_factor_rejects_bad_sparsity():
    D = np.zeros((4, 4), dtype=complex)
    D[0, 1] = 1.0
    with pytest.raises(InvalidParameterError):
        vk.noise_factor(D)


def test_noise_factor_pivots_degenerate_leading_entry():
    D = np.zeros((4, 4), dtype=complex)
    D[2, 2] = 1.0j  # leading entry of the (0,2) block vanishes
    nf = vk.noise_factor(D)
    assert np.max(np.abs(nf.b @ nf.b.T - D)) < 1e-14


def test_noise_factor_degenerate_block_error():
    D = np.zeros((4, 4), dtype=complex)
    D[0, 2] = D[2, 0] = 1.0j  # coupling with vanishing diagonal
    with pytest.raises(DegenerateBlockError):
        vk.noise_factor(D)


# --- linearized ensemble ------------------------------------------------------------


def test_sim_config_validation():
    with pytest.raises(InvalidParameterError):
        vk.SimConfig(duration=1.0, dt=0.0)
    with pytest.raises(InvalidParameterError):
        vk.SimConfig(duration=1.0, burn_in=2.0)
    with pytest.raises(InvalidParameterError):
        vk.SimConfig(duration=1.0, burn_in=0.0, n_traj=0)


def test_refuses_unstable_state():
    m = liquid(2.0)
    roots = vk.singlemode_intensities(1.9, m)
    s_mid = vk.singlemode_state(1.9, m, roots[1])
    with pytest.raises(InvalidParameterError):
        vk.integrate_linearized(s_mid, m, vk.SimConfig(duration=1.0, burn_in=0.0))


def test_trajectories_deterministic():
    s, m = resonant_state()
    cfg = vk.SimConfig(duration=2.0, dt=1e-3, n_traj=3, seed=7, burn_in=0.0)
    a = vk.integrate_linearized(s, m, cfg)
    b = vk.integrate_linearized(s, m, cfg)
    for ta, tb in zip(a.trajectories(), b.trajectories()):
        assert np.array_equal(ta, tb)
    # different trajectory indices get independent streams
    assert not np.array_equal(a.trajectory(0), a.trajectory(1))


def test_trajectories_match_plain_euler():
    s, m = resonant_state()
    cfg = vk.SimConfig(duration=1.0, dt=2e-3, n_traj=1, seed=3, burn_in=0.0)
    ens = vk.integrate_linearized(s, m, cfg)
    traj = ens.trajectory(0)

    rng = sdesim._traj_rng(cfg.seed, 0)
    xi = rng.standard_normal((cfg.n_steps - 1, 4))
    step = np.eye(4) + cfg.dt * ens.A
    da = np.zeros(4, dtype=complex)
    ref = [da]
    for k in range(cfg.n_steps - 1):
        da = step @ da + math.sqrt(cfg.dt) * (ens.B @ xi[k])
        ref.append(da)
    assert np.max(np.abs(np.array(ref) - traj)) < 1e-10


def test_vacuum_ensemble_is_silent():
    m = liquid(0.4)
    s = vk.singlemode_state(0.0, m, 0.0)
    cfg = vk.SimConfig(duration=1.0, dt=1e-3, n_traj=2, seed=0, burn_in=0.0)
    ens = vk.integrate_linearized(s, m, cfg)
    for traj in ens.trajectories():
        assert np.all(traj == 0)


def test_equal_time_moments_match_spectral_integral():
    s, m = resonant_state()
    cfg = vk.SimConfig(duration=150.0, dt=1e-3, n_traj=48, seed=21, burn_in=10.0)
    ens = vk.integrate_linearized(s, m, cfg)
    mom = sdesim.equal_time_moments(ens)

    def m_entry(i, j):
        re = quad(lambda w: vk.spectral_matrix(s, m, w)[i, j].real, -150, 150, limit=300)[0]
        im = quad(lambda w: vk.spectral_matrix(s, m, w)[i, j].imag, -150, 150, limit=300)[0]
        return (re + 1j * im) / (2 * math.pi)

    for (i, j) in ((0, 1), (0, 0), (2, 3), (2, 2)):
        want = m_entry(i, j)
        # critically damped correlations decay slowly; allow a wide band
        assert abs(mom[i, j] - want) < 0.12 * max(1.0, abs(want))


def test_spectral_estimate_matches_analytic():
    s, m = resonant_state()
    cfg = vk.SimConfig(duration=120.0, dt=1e-3, n_traj=60, seed=5, burn_in=10.0)
    ens = vk.integrate_linearized(s, m, cfg)
    est = vk.estimate_spectral_matrix(ens, np.array([0.0, 0.5, 1.0, 2.0]))
    assert est.n_segments >= 8
    for bi, om in enumerate(est.omegas):
        want = vk.spectral_matrix(s, m, float(om))
        z = np.abs(est.m_hat[bi] - want) / np.maximum(est.stderr[bi], 1e-30)
        assert np.max(z) < 5.0
    q, se = est.quad_estimate(1, 0.0)
    assert abs(q[0]) < 4.0 * se[0]  # :q1(0, 0): = 0 inside the MC interval


def test_spectral_estimate_bimode_cross_entries():
    # Cross blocks of M are exercised only by the elliptic branch.
    m = liquid(1.0)
    s = [x for x in vk.bimode_states(3.0, m) if not x.phase_partner][0]
    cfg = vk.SimConfig(duration=120.0, dt=1e-3, n_traj=48, seed=13, burn_in=10.0)
    ens = vk.integrate_linearized(s, m, cfg)
    est = vk.estimate_spectral_matrix(ens, np.array([0.0, 0.5]))
    for bi, om in enumerate(est.omegas):
        want = vk.spectral_matrix(s, m, float(om))
        assert np.max(np.abs(want[:2, 2:])) > 1e-3  # genuinely nonzero
        z = np.abs(est.m_hat[bi] - want) / np.maximum(est.stderr[bi], 1e-30)
        assert np.max(z) < 5.0


def test_stderr_scales_with_ensemble_size():
    s, m = resonant_state()
    ses = []
    errs = []
    for n in (12, 48):
        cfg = vk.SimConfig(duration=60.0, dt=2e-3, n_traj=n, seed=17, burn_in=6.0)
        est = vk.estimate_spectral_matrix(
            vk.integrate_linearized(s, m, cfg), np.array([0.5]))
        q, se = est.quad_estimate(2, 0.0)
        ses.append(se[0])
        want = vk.quad_spectrum(s, m, 2, 0.0, float(est.omegas[0])).normal_ordered
        errs.append(abs(q[0] - want))
    # standard error shrinks like 1/sqrt(n); deviations stay within ~3 se
    assert ses[1] < ses[0] / 1.4
    assert errs[1] < 4.0 * ses[1]


def test_halving_dt_changes_less_than_error_bars():
    s, m = resonant_state()
    qs = []
    for dt in (2e-3, 1e-3):
        cfg = vk.SimConfig(duration=80.0, dt=dt, n_traj=40, seed=23, burn_in=8.0)
        est = vk.estimate_spectral_matrix(
            vk.integrate_linearized(s, m, cfg), np.array([0.0, 1.0]))
        q, se = est.quad_estimate(2, 0.0)
        qs.append((q, se))
    diff = np.abs(qs[0][0] - qs[1][0])
    band = 3.0 * np.hypot(qs[0][1], qs[1][1])
    assert np.all(diff < band)


def test_insufficient_data_error():
    s, m = resonant_state()
    cfg = vk.SimConfig(duration=2.0, dt=1e-3, n_traj=1, seed=0, burn_in=1.9)
    ens = vk.integrate_linearized(s, m, cfg)
    with pytest.raises(InsufficientDataError):
        vk.estimate_spectral_matrix(ens, np.array([0.0]))


def test_trajectory_dump_format(tmp_path):
    s, m = resonant_state()
    cfg = vk.SimConfig(duration=1.0, dt=1e-2, n_traj=2, seed=2, burn_in=0.0)
    ens = vk.integrate_linearized(s, m, cfg)
    path = ens.dump(tmp_path / "traj.bin")
    raw = np.fromfile(path, dtype="<f8")
    assert raw.size == cfg.n_traj * cfg.n_kept * 4 * 2
    sidecar = json.loads((tmp_path / "traj.bin.json").read_text())
    assert sidecar["n_traj"] == 2 and sidecar["seed"] == 2
    back = raw.reshape(cfg.n_traj, cfg.n_kept, 4, 2)
    t0 = ens.trajectory(0)
    assert np.allclose(back[0, :, :, 0] + 1j * back[0, :, :, 1], t0)


# --- full nonlinear integration -----------------------------------------------------


def test_full_deterministic_limit_matches_relax():
    m = liquid(1.0).with_pump(1.0)
    cfg = vk.SimConfig(duration=60.0, dt=1e-3, n_traj=1, seed=0, burn_in=0.0)
    res = vk.integrate_full(m, (0.5 + 0.0j, 0.0j), cfg, noise_scale=0.0, store_every=100)
    assert res.divergence_fraction == 0.0
    final = res.data[0, -1]
    target = vk.relax(m, (0.5 + 0.0j, 0.0j), 100.0)
    assert final[0] == pytest.approx(target.a1, abs=1e-6)
    assert final[1] == pytest.approx(np.conj(target.a1), abs=1e-6)


def test_full_small_noise_mean_field():
    m = liquid(1.0).with_pump(1.0)
    cfg = vk.SimConfig(duration=60.0, dt=1e-3, n_traj=8, seed=5, burn_in=15.0)
    res = vk.integrate_full(m, (1.0 + 0.0j, 0.0j), cfg, noise_scale=0.05, store_every=10)
    keep = res.times > cfg.burn_in
    mean_a1 = res.data[:, keep, 0].mean()
    assert abs(mean_a1 - 1.0) < 0.05


def test_full_divergence_guard():
    m = liquid(1.0).with_pump(4.0)
    cfg = vk.SimConfig(duration=40.0, dt=1e-3, n_traj=10, seed=3, burn_in=0.0)
    with pytest.raises(UnreliableRegimeError):
        vk.integrate_full(m, (1.0 + 0.0j, 0.1 + 0.0j), cfg, noise_scale=1.0,
                          store_every=100)
