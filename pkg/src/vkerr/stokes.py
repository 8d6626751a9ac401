"""Stokes parameters: means, variance spectra, and polarization squeezing.

The Stokes variances are assembled from the quadrature spectra at the
steady-state phase angles,

    V0 = I1 q1(p1) + I2 q2(p2) + sqrt(I1 I2) [q12(p1, p2) + q21(p1, p2)]
    V1 = same with the cross terms negated
    V2 = I2 q1(p2) + I1 q2(p1) + sqrt(I1 I2) [q12(p2, p1) + q21(p2, p1)]
    V3 = V2 pattern with both angles shifted by pi/2 and the cross terms negated

where p_j = phi_js, the single-mode q's are symmetric-ordered (1 + normal)
and the cross terms normal-ordered; this bookkeeping gives V_k/<S0> = 1 for
a coherent state and reduces on the singlemode branch to

    V0~ = V1~ = 1 + :q1(phi1):,  V2~ = 1 + :q2(phi1):,  V3~ = 1 + :q2(phi1 + pi/2):.

A state is polarization squeezed when V_l~ < |<S_m>/<S0>| < V_k~ for some
permutation (l, m, k) of {1, 2, 3}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from . import steady as steady_mod
from .errors import LimitRequiredError, NearSingularError, NumericalConsistencyError
from .linfluct import FrequencyGrid, log_grid
from .params import ModelParams
from .squeeze import cross_spectrum, quad_spectrum
from .steady import Stability, SteadyState

SQUEEZE_MARGIN = 1e-9


@dataclass(frozen=True)
class StokesMeans:
    """Mean-field Stokes vector (photon-flux units, normalized)."""

    s0: float
    s1: float
    s2: float
    s3: float

    def as_array(self):
        return np.array([self.s0, self.s1, self.s2, self.s3])


@dataclass(frozen=True)
class StokesVariances:
    """Stokes variance spectra at one frequency, raw and intensity-normalized."""

    omega: float
    v: np.ndarray
    v_norm: np.ndarray


@dataclass(frozen=True)
class PolSqueezeVerdict:
    """Outcome of the polarization-squeezing criterion.

    ``squeezed_param`` is the index l of the squeezed Stokes parameter (None
    when nothing qualifies); ``witness`` lists every satisfied (l, m, k)
    triple with the compared values (v_l, |<S_m>|/<S0>, v_k).
    """

    squeezed_param: Optional[int]
    witness: List[Tuple[int, int, int, float, float, float]]

    def __bool__(self):
        return self.squeezed_param is not None


def stokes_means(s: SteadyState) -> StokesMeans:
    """Mean Stokes parameters of a steady state."""
    root = math.sqrt(s.I1 * s.I2)
    dphi = s.phi2 - s.phi1
    return StokesMeans(
        s0=s.I1 + s.I2,
        s1=s.I1 - s.I2,
        s2=2.0 * root * math.cos(dphi),
        s3=2.0 * root * math.sin(dphi),
    )


def stokes_variance_spectra(s: SteadyState, m: ModelParams, omega) -> StokesVariances:
    """The four Stokes variance spectra V_k(omega) at a steady state.

    The cross spectra enter only through conjugate pairs, whose sums are
    real; an imaginary residue above tolerance in the assembled variances
    raises :class:`~vkerr.errors.NumericalConsistencyError`.
    """
    p1, p2 = s.phi1, s.phi2
    i1, i2 = s.I1, s.I2
    root = math.sqrt(i1 * i2)

    q1_p1 = quad_spectrum(s, m, 1, p1, omega).symmetric
    q2_p1 = quad_spectrum(s, m, 2, p1, omega).symmetric
    q1_q = quad_spectrum(s, m, 1, p2 + math.pi / 2, omega).symmetric
    q2_q = quad_spectrum(s, m, 2, p1 + math.pi / 2, omega).symmetric

    if i2 > 0:
        q1_p2 = quad_spectrum(s, m, 1, p2, omega).symmetric
        q2_p2 = quad_spectrum(s, m, 2, p2, omega).symmetric
        cross0 = (
            cross_spectrum(s, m, 12, p1, p2, omega).normal_ordered
            + cross_spectrum(s, m, 21, p1, p2, omega).normal_ordered
        )
        cross2 = (
            cross_spectrum(s, m, 12, p2, p1, omega).normal_ordered
            + cross_spectrum(s, m, 21, p2, p1, omega).normal_ordered
        )
        cross3 = (
            cross_spectrum(s, m, 12, p2 + math.pi / 2, p1 + math.pi / 2, omega).normal_ordered
            + cross_spectrum(s, m, 21, p2 + math.pi / 2, p1 + math.pi / 2, omega).normal_ordered
        )
    else:
        q1_p2 = q1_p1 if p2 == p1 else quad_spectrum(s, m, 1, p2, omega).symmetric
        q2_p2 = quad_spectrum(s, m, 2, p2, omega).symmetric
        cross0 = cross2 = cross3 = 0.0

    v = np.array(
        [
            i1 * q1_p1 + i2 * q2_p2 + root * cross0,
            i1 * q1_p1 + i2 * q2_p2 - root * cross0,
            i2 * q1_p2 + i1 * q2_p1 + root * cross2,
            i2 * q1_q + i1 * q2_q - root * cross3,
        ],
        dtype=complex,
    )
    scale = np.maximum(1.0, np.abs(v.real))
    if np.any(np.abs(v.imag) > 1e-9 * scale):
        raise NumericalConsistencyError(
            f"Stokes variance has imaginary residue {np.max(np.abs(v.imag)):.3e}"
        )
    v = v.real

    s0 = i1 + i2
    if s0 > 0:
        v_norm = v / s0
    else:
        # Vacuum limit: each V_k is intensity * (1 + :q:) with :q: -> 0.
        v_norm = np.array([q1_p1, q1_p1, q2_p1, q2_q])
    return StokesVariances(omega=omega, v=v, v_norm=v_norm)


def bifurcation_stokes(I1, m: ModelParams, omega) -> StokesVariances:
    """Closed-form normalized Stokes variances on the singlemode branch.

    V0~ = V1~ = 1 + 8 I (Delta - I) / C1,
    V2~      = 1 + 12 I (I + 2 Delta) / C2,
    V3~      = 1 + [2 (I - Delta) / (I + 2 Delta)] (V2~ - 1),

    with C1 = (omega^2 + 1 - 3 I^2 + 4 I Delta - Delta^2)^2
              + 4 (3 I^2 - 4 I Delta + Delta^2)
    and  C2 = (2 omega^2 + 2 + I^2 + I Delta - 2 Delta^2)^2
              - 8 (I - Delta) (I + 2 Delta).
    """
    I = float(I1)
    d = m.delta
    w2 = omega * omega
    c1 = (w2 + 1.0 - 3.0 * I * I + 4.0 * I * d - d * d) ** 2 + 4.0 * (
        3.0 * I * I - 4.0 * I * d + d * d
    )
    c2 = (2.0 * w2 + 2.0 + I * I + I * d - 2.0 * d * d) ** 2 - 8.0 * (I - d) * (I + 2.0 * d)
    if c1 == 0.0 or c2 == 0.0:
        raise LimitRequiredError(
            "closed-form Stokes variance is 0/0 exactly at the bifurcation"
        )
    v0 = 1.0 + 8.0 * I * (d - I) / c1
    v2 = 1.0 + 12.0 * I * (I + 2.0 * d) / c2
    v3 = 1.0 + 2.0 * (I - d) / (I + 2.0 * d) * (v2 - 1.0)
    v_norm = np.array([v0, v0, v2, v3])
    return StokesVariances(omega=omega, v=v_norm * I, v_norm=v_norm)


_TRIPLES = [(l, mm, k) for l in (1, 2, 3) for mm in (1, 2, 3) for k in (1, 2, 3)
            if len({l, mm, k}) == 3]


def classify_polarization(means: StokesMeans, v: StokesVariances) -> PolSqueezeVerdict:
    """Polarization-squeezing verdict for one frequency.

    Checks V_l~ < |<S_m>|/<S0> < V_k~ over all ordered triples of {1,2,3}
    with a strict margin; returns the first satisfied triple (smallest l
    wins) and all satisfied triples as the witness.
    """
    if means.s0 <= 0:
        return PolSqueezeVerdict(squeezed_param=None, witness=[])
    sv = means.as_array()
    witness = []
    for (l, mm, k) in _TRIPLES:
        bound = abs(sv[mm]) / means.s0
        vl = v.v_norm[l]
        vk = v.v_norm[k]
        if vl < bound - SQUEEZE_MARGIN and bound < vk - SQUEEZE_MARGIN:
            witness.append((l, mm, k, float(vl), float(bound), float(vk)))
    squeezed = witness[0][0] if witness else None
    return PolSqueezeVerdict(squeezed_param=squeezed, witness=witness)


@dataclass(frozen=True)
class PumpScanRow:
    """One pump point of a Stokes scan: state, means, per-parameter minima."""

    e2: float
    state: Optional[SteadyState]
    means: Optional[StokesMeans]
    min_v_norm: Optional[np.ndarray]
    verdict: Optional[PolSqueezeVerdict]
    verdict_omega: Optional[float]
    flagged: bool = False


def _scan_state(row_state, m, grid):
    means = stokes_means(row_state)
    min_v = np.full(4, np.inf)
    best_verdict = None
    best_omega = None
    for omega in grid:
        try:
            v = stokes_variance_spectra(row_state, m, omega)
        except NearSingularError:
            continue
        min_v = np.minimum(min_v, v.v_norm)
        verdict = classify_polarization(means, v)
        if verdict and best_verdict is None:
            best_verdict = verdict
            best_omega = omega
    if best_verdict is None:
        best_verdict = PolSqueezeVerdict(squeezed_param=None, witness=[])
    return means, min_v, best_verdict, best_omega


def pump_scan(m: ModelParams, e2_values, omega_grid: FrequencyGrid = None):
    """Stokes statistics of the stable steady state across a pump range.

    For each pump the stable state is selected (the bimode branch once the
    polarization threshold is crossed), both phase-bistable twins are
    recorded, and the minimum over the frequency grid of each normalized
    variance is reported together with the squeezing classification.
    Pumps with no stable state produce a flagged row and the scan continues.
    """
    rows = []
    for e2 in np.asarray(e2_values, dtype=float):
        if not e2 > 0:
            rows.append(PumpScanRow(e2, None, None, None, None, None, flagged=True))
            continue
        grid = omega_grid if omega_grid is not None else log_grid(10.0 + 5.0 * abs(m.delta))
        try:
            states = steady_mod.all_states(e2, m)
        except Exception:
            rows.append(PumpScanRow(e2, None, None, None, None, None, flagged=True))
            continue
        stable = [s for s in states if s.stable is Stability.STABLE]
        bimode = [s for s in stable if s.branch is not steady_mod.Branch.SINGLEMODE]
        chosen = bimode if bimode else stable[:1]
        if not chosen:
            rows.append(PumpScanRow(e2, None, None, None, None, None, flagged=True))
            continue
        for st in chosen:
            means, min_v, verdict, v_omega = _scan_state(st, m, grid)
            rows.append(
                PumpScanRow(
                    e2=e2,
                    state=st,
                    means=means,
                    min_v_norm=min_v,
                    verdict=verdict,
                    verdict_omega=v_omega,
                )
            )
    return rows
