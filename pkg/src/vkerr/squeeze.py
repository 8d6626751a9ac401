"""Quadrature and cross-quadrature squeezing spectra of the output field.

Spectra are normal- and time-ordered; -1 means perfect squeezing and 0 the
coherent shot-noise level.  The symmetric-ordered single-mode spectrum is
1 + the normal-ordered one; cross spectra carry no shot-noise term.

For the linearly polarized branch the closed forms at the bifurcations are

    :q1(beta, omega): = 4 I Q1n / [(Q1d - omega^2)^2 + 4 omega^2]
    :q2(beta, omega): = 6 I Q2  / [(Q2d + 2 omega^2)^2 + 16 omega^2]

with psi = 2*(beta - phi1s) twice the angle between the analyzed quadrature
and the steady-state phase; the q2 form is specific to the liquid
Maker-Terhune coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from . import linfluct
from .errors import (
    InvalidParameterError,
    LimitRequiredError,
    NearSingularError,
    NumericalConsistencyError,
)
from .params import ModelParams
from .steady import Stability, SteadyState

IMAG_TOL = 1e-9
_EPS = np.finfo(float).eps


def reduce_angle(beta):
    """Reduce an angle to (-pi, pi]."""
    b = math.remainder(beta, 2.0 * math.pi)
    if b <= -math.pi:
        b += 2.0 * math.pi
    return b


@dataclass(frozen=True)
class QuadratureSpec:
    """Which quadrature: mode 1 (parallel) or 2 (orthogonal), at angle beta."""

    mode: int
    beta: float

    def __post_init__(self):
        if self.mode not in (1, 2):
            raise InvalidParameterError(f"mode must be 1 or 2, got {self.mode}")
        object.__setattr__(self, "beta", reduce_angle(self.beta))


@dataclass(frozen=True)
class SpectrumRecord:
    """One spectrum value: normal-ordered, symmetric-ordered, and its context.

    Single-mode spectra are real (the imaginary residue is checked) and the
    symmetric value is 1 + normal.  Cross spectra are complex in general,
    with q21(beta2, beta1) the conjugate of q12(beta1, beta2); only
    conjugate-paired sums are observables, so no realness is enforced and
    symmetric equals normal.
    """

    omega: float
    normal_ordered: Union[float, complex]
    symmetric: Union[float, complex]
    spec: Union[QuadratureSpec, Tuple[QuadratureSpec, QuadratureSpec]]


def _phase_vector(mode, beta):
    v = np.zeros(4, dtype=complex)
    i = 0 if mode == 1 else 2
    v[i] = np.exp(-1j * beta)
    v[i + 1] = np.exp(1j * beta)
    return v


def _check_state(s):
    if s.stable is Stability.UNSTABLE:
        raise InvalidParameterError(
            "fluctuation spectra are undefined at an unstable state"
        )


def _real_part(value, cond, what):
    # The admissible imaginary residue grows with the solve conditioning:
    # close to a bifurcation no algorithm can do better than eps * cond.
    scale = max(1.0, abs(value.real))
    tol = scale * max(IMAG_TOL, 64.0 * _EPS * cond)
    if abs(value.imag) > tol:
        raise NumericalConsistencyError(
            f"{what} has imaginary residue {value.imag:.3e} (tolerance {tol:.3e})"
        )
    return value.real


def quad_spectrum(s: SteadyState, m: ModelParams, j, beta, omega) -> SpectrumRecord:
    """Normal-ordered squeezing spectrum :q_j(beta, omega): of the output field.

    Assembled from the output spectral matrix entries

        :q_j: = Mo_aa e^{-2i beta} + Mo_bb e^{+2i beta} + Mo_ab + Mo_ba

    with (a, b) the mode-j index pair, evaluated as a bilinear form against
    the quadrature phase vector for numerical stability near bifurcations.
    """
    _check_state(s)
    if not np.isfinite(omega):
        raise InvalidParameterError("omega must be finite")
    spec = QuadratureSpec(mode=j, beta=beta)
    v = _phase_vector(j, spec.beta)
    value, cond = linfluct.bilinear_spectrum(s, m, omega, v, v)
    q = _real_part(value, cond, f"quadrature spectrum q{j}")
    return SpectrumRecord(omega=omega, normal_ordered=q, symmetric=1.0 + q, spec=spec)


def cross_spectrum(s: SteadyState, m: ModelParams, order, beta1, beta2, omega) -> SpectrumRecord:
    """Cross-squeezing spectrum between the two polarization modes.

    ``order`` is 12 or 21 (which mode's quadrature enters first in the
    time-ordered correlation); ``beta1``/``beta2`` are the quadrature angles
    of mode 1 and mode 2.  Symmetric ordering equals normal ordering for
    cross spectra.  The value is complex in general; the 12 and 21 spectra
    at the same angle pair are conjugates, so the paired sums entering the
    Stokes variances are real.
    """
    _check_state(s)
    if order not in (12, 21):
        raise InvalidParameterError(f"order must be 12 or 21, got {order}")
    s1 = QuadratureSpec(mode=1, beta=beta1)
    s2 = QuadratureSpec(mode=2, beta=beta2)
    v1 = _phase_vector(1, s1.beta)
    v2 = _phase_vector(2, s2.beta)
    left, right = (v1, v2) if order == 12 else (v2, v1)
    value, _ = linfluct.bilinear_spectrum(s, m, omega, left, right)
    return SpectrumRecord(omega=omega, normal_ordered=value, symmetric=value, spec=(s1, s2))


# --- closed forms on the singlemode branch ---------------------------------------


def _psi_for_eta(psi, m):
    # Conjugating the fields maps eta = -1 onto eta = +1 with the quadrature
    # angle (hence psi) negated; the closed forms below are written for the
    # self-focusing sign.
    return psi if m.eta == +1 else -psi


def analytic_bifurcation_q(I1, m: ModelParams, field, psi, omega):
    """Closed-form singlemode-branch spectrum :q_field(psi, omega):.

    Valid algebraically at any singlemode intensity; the q2 form requires
    the liquid Maker-Terhune coefficients.  Exactly at a bifurcation with
    the vanishing denominator this is a 0/0 limit and raises
    :class:`LimitRequiredError`.
    """
    if field not in (1, 2):
        raise InvalidParameterError(f"field must be 1 or 2, got {field}")
    if field == 2 and not m.is_liquid:
        raise InvalidParameterError(
            "the orthogonal-field closed form is specific to the liquid "
            "Maker-Terhune coefficients (A=1/4, B=3/2)"
        )
    I = float(I1)
    d = m.delta
    ps = _psi_for_eta(psi, m)
    w2 = omega * omega
    if field == 1:
        q1n = (
            -(3 * I * I - 4 * I * d + d * d - 1.0 - w2) * math.sin(ps)
            + 2.0 * (d - 2.0 * I) * math.cos(ps)
            + 2.0 * I
        )
        q1d = 3 * I * I - 4 * I * d + d * d + 1.0
        den = (q1d - w2) ** 2 + 4.0 * w2
        if den == 0.0:
            raise LimitRequiredError(
                "q1 closed form is 0/0 exactly at the bifurcation with omega=0"
            )
        return 4.0 * I * q1n / den
    q2 = (
        (I * I + d * I - 2.0 * (d * d - 1.0 - w2)) * math.sin(ps)
        + (4.0 * d - I) * math.cos(ps)
        + 3.0 * I
    )
    q2d = I * I + d * I - 2.0 * d * d - 2.0
    den = (q2d + 2.0 * w2) ** 2 + 16.0 * w2
    if den == 0.0:
        raise LimitRequiredError(
            "q2 closed form is 0/0 exactly at the bifurcation with omega=0"
        )
    return 6.0 * I * q2 / den


def q1_denominator(I1, m: ModelParams):
    """Q1d = 3 I^2 - 4 Delta I + Delta^2 + 1; vanishes at the fold intensities."""
    return 3.0 * I1 * I1 - 4.0 * m.delta * I1 + m.delta**2 + 1.0


def q2_denominator(I1, m: ModelParams):
    """Q2d = I^2 + Delta I - 2 Delta^2 - 2; vanishes at the polarization threshold."""
    return I1 * I1 + m.delta * I1 - 2.0 * m.delta**2 - 2.0


def polarization_squeezed_psi(delta):
    """psi of the perfectly squeezed orthogonal quadrature at the polarization threshold.

    psi* = -arccos[(1 - Delta*sqrt(8 + 9 Delta^2)) / (3 (1 + Delta^2))];
    the squeezed quadrature angle offset is beta* - phi1s = psi*/2, which
    tends to 0 for large negative and to -pi/2 for large positive detuning.
    """
    x = (1.0 - delta * math.sqrt(8.0 + 9.0 * delta * delta)) / (3.0 * (1.0 + delta * delta))
    return -math.acos(min(1.0, max(-1.0, x)))


def tangent_squeezed_psi(delta, which):
    """psi of the perfectly squeezed parallel quadrature at a fold.

    psi_up = -arccos[(2 + Delta*sqrt(Delta^2-3))/(1+Delta^2)] at the upper
    fold, psi_down with the minus sign at the lower fold.
    """
    if which not in ("up", "down"):
        raise InvalidParameterError(f"which must be 'up' or 'down', got {which!r}")
    if delta < math.sqrt(3.0):
        raise InvalidParameterError("folds require delta >= sqrt(3)")
    s = math.sqrt(max(delta * delta - 3.0, 0.0))
    sign = +1.0 if which == "up" else -1.0
    x = (2.0 + sign * delta * s) / (1.0 + delta * delta)
    return -math.acos(min(1.0, max(-1.0, x)))


def parallel_optimal_frequency_at_polarization(delta):
    """Frequency minimizing the parallel-mode amplitude spectrum at the threshold.

    omega_opt = sqrt(5 - (7/2) Delta (-3 Delta + sqrt(8 + 9 Delta^2))).
    """
    arg = 5.0 - 3.5 * delta * (-3.0 * delta + math.sqrt(8.0 + 9.0 * delta * delta))
    return math.sqrt(max(arg, 0.0))


def orthogonal_optimal_frequency_at_tangent(delta, which):
    """Frequency minimizing :q2(psi=pi): at a fold of the singlemode branch.

    At the lower fold omega_opt = sqrt([7 Delta (Delta + sqrt(Delta^2-3)) - 15]/18),
    growing linearly with Delta from 1/sqrt(3).  At the upper fold the same
    form with the conjugate root applies and clamps to zero once the
    expression under the root turns negative (Delta above about 1.89).
    """
    if which not in ("up", "down"):
        raise InvalidParameterError(f"which must be 'up' or 'down', got {which!r}")
    if delta < math.sqrt(3.0):
        raise InvalidParameterError("folds require delta >= sqrt(3)")
    s = math.sqrt(max(delta * delta - 3.0, 0.0))
    sign = -1.0 if which == "up" else +1.0
    arg = (7.0 * delta * (delta + sign * s) - 15.0) / 18.0
    return math.sqrt(arg) if arg > 0 else 0.0


# --- numerical optimizers ----------------------------------------------------------


@dataclass(frozen=True)
class OptimalQuadrature:
    beta_opt: float
    q_min: float
    psi_opt: float


@dataclass(frozen=True)
class OptimalFrequency:
    omega_opt: float
    q_min: float


def _golden(f, a, b, tol=1e-12, max_iter=160):
    """Golden-section minimization on [a, b] for a unimodal bracket."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def optimal_quadrature(s: SteadyState, m: ModelParams, j, omega) -> OptimalQuadrature:
    """Quadrature angle minimizing :q_j(beta, omega): at fixed frequency.

    The spectrum is pi-periodic in beta, so the search runs over [0, pi):
    a 720-point scan followed by golden-section refinement of the best
    bracket.  Returns the angle, the minimum, and psi = 2*(beta - phi1s).
    """
    _check_state(s)

    def f(beta):
        return quad_spectrum(s, m, j, beta, omega).normal_ordered

    n = 720
    betas = np.arange(n) * (math.pi / n)
    vals = np.array([f(b) for b in betas])
    k = int(np.argmin(vals))
    lo = betas[k] - math.pi / n
    hi = betas[k] + math.pi / n
    beta_opt, q_min = _golden(f, lo, hi)
    if vals[k] < q_min:
        beta_opt, q_min = betas[k], vals[k]
    beta_opt = beta_opt % math.pi
    psi_opt = reduce_angle(2.0 * (beta_opt - s.phi1))
    return OptimalQuadrature(beta_opt=beta_opt, q_min=q_min, psi_opt=psi_opt)


def optimal_frequency(s: SteadyState, m: ModelParams, j, beta,
                      omega_max=None, n_scan=2001) -> OptimalFrequency:
    """Frequency in [0, omega_max] minimizing :q_j(beta, omega): at fixed angle.

    The spectrum is even in omega, so only omega >= 0 is searched.  Points
    where the spectral matrix is singular (omega = 0 exactly at a marginal
    state) are skipped; the default omega_max is 10 + 5|Delta|.
    """
    _check_state(s)
    if omega_max is None:
        omega_max = 10.0 + 5.0 * abs(m.delta)

    def f(omega):
        try:
            return quad_spectrum(s, m, j, beta, omega).normal_ordered
        except NearSingularError:
            return np.inf

    omegas = np.linspace(0.0, omega_max, n_scan)
    vals = np.array([f(w) for w in omegas])
    if not np.any(np.isfinite(vals)):
        raise NearSingularError("spectrum singular over the whole frequency scan")
    k = int(np.argmin(vals))
    step = omegas[1] - omegas[0]
    lo = max(0.0, omegas[k] - step)
    hi = min(omega_max, omegas[k] + step)
    omega_opt, q_min = _golden(f, lo, hi)
    if vals[k] < q_min:
        omega_opt, q_min = omegas[k], vals[k]
    # A singular omega=0 endpoint stands in for the omega -> 0 limit.
    if not np.isfinite(q_min):
        raise NearSingularError("frequency optimum could not be evaluated")
    return OptimalFrequency(omega_opt=omega_opt, q_min=q_min)
