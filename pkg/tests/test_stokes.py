import math

import numpy as np
import pytest

import vkerr as vk
from vkerr import stokes
from vkerr.errors import LimitRequiredError

SQRT3 = math.sqrt(3.0)


def liquid(delta, eta=+1):
    return vk.ModelParams(delta=delta, eta=eta)


def singlemode(delta, e2, pick=0):
    m = liquid(delta)
    roots = vk.singlemode_intensities(e2, m)
    return vk.singlemode_state(e2, m, roots[pick]), m


def bimode(delta, e2):
    m = liquid(delta)
    sts = [s for s in vk.bimode_states(e2, m) if not s.phase_partner]
    return sts[0], m


# --- means ---------------------------------------------------------------------


def test_means_singlemode():
    s, _ = singlemode(1.0, 1.0)
    mn = vk.stokes_means(s)
    assert (mn.s0, mn.s1, mn.s2, mn.s3) == pytest.approx((1.0, 1.0, 0.0, 0.0), abs=1e-12)


def test_means_twin_flips_s2_s3():
    s, m = bimode(1.0, 3.0)
    tw = vk.phase_twin(s, m)
    a, b = vk.stokes_means(s), vk.stokes_means(tw)
    assert b.s0 == pytest.approx(a.s0, abs=1e-12)
    assert b.s1 == pytest.approx(a.s1, abs=1e-12)
    assert b.s2 == pytest.approx(-a.s2, abs=1e-12)
    assert b.s3 == pytest.approx(-a.s3, abs=1e-12)


def test_means_circular_polarization():
    s = vk.SteadyState(
        branch=vk.Branch.BIMODE_PLUS, I1=1.0, I2=1.0, phi1=0.0, phi2=math.pi / 2,
        a1=1.0 + 0j, a2=1j, stable=vk.Stability.STABLE, pump_E2=0.0,
    )
    mn = vk.stokes_means(s)
    assert (mn.s0, mn.s1, mn.s2, mn.s3) == pytest.approx((2.0, 0.0, 0.0, 2.0), abs=1e-12)


def test_mean_vector_is_classical():
    s, _ = bimode(1.0, 4.0)
    mn = vk.stokes_means(s)
    assert mn.s0 >= 0
    assert mn.s0**2 >= mn.s1**2 + mn.s2**2 + mn.s3**2 - 1e-9


# --- variance spectra ---------------------------------------------------------------


def test_vacuum_variances_are_coherent():
    m = liquid(1.1)
    s = vk.singlemode_state(0.0, m, 0.0)
    for om in (0.0, 0.8):
        v = vk.stokes_variance_spectra(s, m, om)
        assert v.v_norm == pytest.approx([1.0, 1.0, 1.0, 1.0], abs=1e-12)


def test_singlemode_reduction():
    s, m = singlemode(1.0, 1.5)
    for om in (0.0, 0.6, 2.0):
        v = vk.stokes_variance_spectra(s, m, om)
        q1 = vk.quad_spectrum(s, m, 1, s.phi1, om).normal_ordered
        q2a = vk.quad_spectrum(s, m, 2, s.phi1, om).normal_ordered
        q2b = vk.quad_spectrum(s, m, 2, s.phi1 + math.pi / 2, om).normal_ordered
        assert v.v_norm[0] == pytest.approx(v.v_norm[1], abs=1e-12)
        assert v.v_norm[0] == pytest.approx(1 + q1, abs=1e-10)
        assert v.v_norm[2] == pytest.approx(1 + q2a, abs=1e-10)
        assert v.v_norm[3] == pytest.approx(1 + q2b, abs=1e-10)


def test_twins_have_identical_variances():
    s, m = bimode(1.0, 3.0)
    tw = vk.phase_twin(s, m)
    for om in (0.0, 0.5, 1.3):
        va = vk.stokes_variance_spectra(s, m, om)
        vb = vk.stokes_variance_spectra(tw, m, om)
        assert np.max(np.abs(va.v_norm - vb.v_norm)) < 1e-10


def test_closed_form_matches_pipeline_on_singlemode():
    for d in np.linspace(-1.5, 1.5, 7):
        m = liquid(float(d))
        i_pol = vk.polarization_threshold(m).i_pol
        for frac in (0.2, 0.7):
            I = frac * i_pol
            e2 = I * (1 + (d - I) ** 2)
            s = vk.singlemode_state(e2, m, I)
            for om in (0.0, 0.5, 1.8):
                got = vk.stokes_variance_spectra(s, m, om)
                want = vk.bifurcation_stokes(I, m, om)
                assert np.max(np.abs(got.v_norm - want.v_norm)) < 1e-9


def test_closed_form_v3_unity_when_intensity_equals_detuning():
    m = liquid(1.0)
    v = vk.bifurcation_stokes(1.0, m, 0.7)  # I = delta
    assert v.v_norm[3] == pytest.approx(1.0, abs=1e-12)


def test_closed_form_v3_squeezed_at_upper_fold():
    m = liquid(2.0)
    v = vk.bifurcation_stokes(5.0 / 3.0, m, 1e-3)
    assert v.v_norm[3] < 1.0


def test_closed_form_limit_error():
    # At delta=2 the fold I=1 zeroes C1 when omega = 0 exactly.
    m = liquid(2.0)
    with pytest.raises(LimitRequiredError):
        vk.bifurcation_stokes(1.0, m, 0.0)


# --- classification -------------------------------------------------------------------


def test_no_verdict_for_coherent_state():
    means = vk.StokesMeans(s0=1.0, s1=1.0, s2=0.0, s3=0.0)
    v = vk.StokesVariances(omega=0.0, v=np.ones(4), v_norm=np.ones(4))
    assert not vk.classify_polarization(means, v)
    # Vacuum: zero mean intensity never classifies.
    means0 = vk.StokesMeans(s0=0.0, s1=0.0, s2=0.0, s3=0.0)
    assert not vk.classify_polarization(means0, v)


def test_s3_squeezed_at_tangent_bifurcations():
    m = liquid(2.0)
    for which in ("up", "down"):
        s = vk.state_near_bifurcation(m, which, 1e-6)
        means = vk.stokes_means(s)
        om = max(vk.orthogonal_optimal_frequency_at_tangent(2.0, which), 1e-3)
        verdict = vk.classify_polarization(means, vk.stokes_variance_spectra(s, m, om))
        assert verdict.squeezed_param == 3
        l, mm, k, vl, bound, vk_ = verdict.witness[0]
        assert (l, mm, k) == (3, 1, 2)
        assert vl < 1.0 < vk_


def test_no_verdict_at_polarization_threshold():
    m = liquid(1.0)
    s = vk.state_near_bifurcation(m, "pol", 1e-6)
    means = vk.stokes_means(s)
    for om in np.concatenate(([0.0], np.geomspace(1e-3, 15.0, 40))):
        assert not vk.classify_polarization(means, vk.stokes_variance_spectra(s, m, om))


def test_verdict_scan_order_prefers_smallest_l():
    means = vk.StokesMeans(s0=1.0, s1=0.5, s2=0.4, s3=0.3)
    v = vk.StokesVariances(omega=0.0, v=np.ones(4),
                           v_norm=np.array([1.0, 0.1, 0.1, 10.0]))
    verdict = vk.classify_polarization(means, v)
    assert verdict.squeezed_param == 1
    assert len(verdict.witness) >= 2


# --- pump scan ----------------------------------------------------------------------------


def test_pump_scan_below_threshold_rows():
    m = liquid(1.0)
    grid = vk.log_grid(5.0, n=12)
    rows = vk.pump_scan(m, [1.0, 1.5], grid)
    assert len(rows) == 2
    for r in rows:
        assert r.state.branch is vk.Branch.SINGLEMODE
        assert r.min_v_norm[0] == pytest.approx(r.min_v_norm[1], abs=1e-10)
        assert not r.verdict


def test_pump_scan_records_twins_above_threshold():
    m = liquid(1.0)
    grid = vk.log_grid(5.0, n=12)
    rows = vk.pump_scan(m, [3.0], grid)
    assert len(rows) == 2
    assert {r.state.phase_partner for r in rows} == {False, True}
    assert rows[0].means.s2 == pytest.approx(-rows[1].means.s2, abs=1e-10)


def test_pump_scan_flags_pumps_without_stable_state():
    m = liquid(5.0)
    grid = vk.log_grid(5.0, n=8)
    rows = vk.pump_scan(m, [0.0, 21.0], grid)
    assert all(r.flagged for r in rows)
