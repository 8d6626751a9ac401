"""Classical steady states, bifurcation loci, and linear stability.

The linearly polarized (singlemode) branch solves the dispersive-bistability
cubic

    E^2 = I * [1 + (Delta - I)^2],

bistable for Delta > sqrt(3).  Above the polarization threshold the
orthogonally polarized mode switches on (elliptically polarized bimode
branch), with a pair of phase-bistable twins a2 -> -a2.
"""

from __future__ import annotations

import cmath
import enum
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from . import linfluct
from .errors import (
    InternalInconsistencyError,
    InvalidParameterError,
    NonConvergenceError,
    NoThresholdError,
)
from .params import ModelParams

RESIDUAL_TOL = 1e-9
STABILITY_TOL = 1e-8

DELTA_BISTABLE = math.sqrt(3.0)


class Branch(enum.Enum):
    SINGLEMODE = "singlemode"
    BIMODE_PLUS = "bimode+"
    BIMODE_MINUS = "bimode-"


class Stability(enum.Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"
    MARGINAL = "marginal"


@dataclass(frozen=True)
class SteadyState:
    """One classical steady state of the two-mode cavity.

    Amplitudes are normalized, a_j = sqrt(I_j) * exp(i*phi_j).  ``stable``
    is the linear classification from the drift Jacobian eigenvalues.
    ``phase_partner`` marks the phi2 + pi twin of a bimode solution.
    """

    branch: Branch
    I1: float
    I2: float
    phi1: float
    phi2: float
    a1: complex
    a2: complex
    stable: Stability
    pump_E2: float
    phase_partner: bool = False


@dataclass(frozen=True)
class BistableRange:
    """Pump window (e2_minus, e2_plus) and fold intensities of the bistable loop.

    The fold of the lower intensity branch sits at (e2_plus, i_minus); the
    fold of the upper branch at (e2_minus, i_plus).
    """

    e2_minus: float
    e2_plus: float
    i_minus: float
    i_plus: float


@dataclass(frozen=True)
class PolarizationThreshold:
    e2_pol: float
    i_pol: float


@dataclass(frozen=True)
class BifurcationSet:
    bistable: Optional[BistableRange]
    polarization: PolarizationThreshold


# --- residuals and polishing -------------------------------------------------


def residual(a1, a2, m: ModelParams, e2):
    """Largest magnitude of the two complex classical steady-state residuals."""
    r1, r2 = linfluct.classical_rhs(a1, a2, m, e2)
    return max(abs(r1), abs(r2))


def _polish_classical(a1, a2, m, e2, iters=10, tol=1e-13):
    """Newton-polish complex amplitudes onto the steady-state manifold."""
    x = np.array([a1.real, a1.imag, a2.real, a2.imag], dtype=float)

    def f(x):
        r1, r2 = linfluct.classical_rhs(x[0] + 1j * x[1], x[2] + 1j * x[3], m, e2)
        return np.array([r1.real, r1.imag, r2.real, r2.imag])

    for _ in range(iters):
        r = f(x)
        if np.max(np.abs(r)) < tol:
            break
        J = np.empty((4, 4))
        h = 1e-7 * max(1.0, np.max(np.abs(x)))
        for j in range(4):
            xp = x.copy()
            xp[j] += h
            xm = x.copy()
            xm[j] -= h
            J[:, j] = (f(xp) - f(xm)) / (2 * h)
        try:
            step = np.linalg.solve(J, r)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)):
            break
        x = x - step
    return x[0] + 1j * x[1], x[2] + 1j * x[3]


def _make_state(branch, a1, a2, m, e2, phase_partner=False):
    res = residual(a1, a2, m, e2)
    if res > RESIDUAL_TOL:
        raise InternalInconsistencyError(
            f"steady-state residual {res:.3e} exceeds {RESIDUAL_TOL:g} "
            f"for branch {branch.value} at E^2={e2:g}"
        )
    I1 = abs(a1) ** 2
    I2 = abs(a2) ** 2
    phi1 = cmath.phase(a1) if I1 > 0 else 0.0
    phi2 = cmath.phase(a2) if I2 > 0 else 0.0
    state = SteadyState(
        branch=branch,
        I1=I1,
        I2=I2,
        phi1=phi1,
        phi2=phi2,
        a1=a1,
        a2=a2,
        stable=Stability.STABLE,  # provisional, replaced below
        pump_E2=e2,
        phase_partner=phase_partner,
    )
    return replace(state, stable=classify_stability(state, m))


# --- singlemode branch -------------------------------------------------------


def _cubic_coeffs(e2, m):
    d = m.delta
    return np.array([1.0, -2.0 * d, d * d + 1.0, -e2])


def _cubic(e2, m, x):
    c = _cubic_coeffs(e2, m)
    return ((x + c[1]) * x + c[2]) * x + c[3]


def singlemode_intensities(e2, m: ModelParams):
    """All real roots I >= 0 of the singlemode intensity cubic, ascending.

    Roots come from companion-matrix eigenvalues (robust near the turning
    points, which are exact double roots).  A conjugate pair whose imaginary
    part is tiny is snapped back onto the real double root it approximates:
    the extremum of the cubic is polished and accepted when the cubic
    nearly vanishes there.
    """
    if e2 < 0:
        raise InvalidParameterError(f"pump E^2 must be >= 0, got {e2}")
    if e2 == 0:
        return np.array([0.0])
    roots = np.roots(_cubic_coeffs(e2, m))
    scale = max(1.0, float(np.max(np.abs(roots))))
    real = []
    complex_pair = []
    for r in roots:
        if abs(r.imag) < 1e-10 * scale:
            real.append(r.real)
        else:
            complex_pair.append(r)
    if len(complex_pair) == 2 and abs(complex_pair[0].imag) < 1e-6 * scale:
        # Candidate near-double root: polish onto the extremum of the cubic.
        x = float(np.mean([c.real for c in complex_pair]))
        d = m.delta
        disc = 4.0 * d * d - 3.0 * (d * d + 1.0)
        if disc >= 0:
            ext = [(2.0 * d + s * math.sqrt(disc)) / 3.0 for s in (+1.0, -1.0)]
            x = min(ext, key=lambda t: abs(t - x))
        if abs(_cubic(e2, m, x)) <= 1e-9 * max(1.0, e2):
            real.extend([x, x])
    out = np.sort([x for x in real if x > -1e-12])
    return np.clip(out, 0.0, None)


def singlemode_state(e2, m: ModelParams, I) -> SteadyState:
    """Construct the singlemode steady state at one intensity root.

    The magnitude of the phase comes from cos(phi1) = sqrt(I)/E; its sign
    (arccos is even) is fixed by whichever choice annihilates the complex
    steady-state residual.
    """
    if e2 < 0:
        raise InvalidParameterError(f"pump E^2 must be >= 0, got {e2}")
    if e2 == 0 or I == 0:
        if e2 == 0:
            return _make_state(Branch.SINGLEMODE, 0j, 0j, m, 0.0)
        raise InternalInconsistencyError("I = 0 is not a steady state at nonzero pump")

    # A couple of guarded Newton steps tighten roots handed in from scans.
    x = float(I)
    for _ in range(3):
        p = _cubic(e2, m, x)
        dp = (3.0 * x - 4.0 * m.delta) * x + m.delta**2 + 1.0
        if abs(dp) < 1e-8:
            break
        step = p / dp
        if abs(step) > 0.1 * max(1.0, x):
            break
        x -= step
    E = math.sqrt(e2)
    c = min(1.0, math.sqrt(x) / E)
    phi_abs = math.acos(c)
    best = None
    for sign in (+1.0, -1.0):
        a1 = math.sqrt(x) * cmath.exp(1j * sign * phi_abs)
        a1p, _ = _polish_classical(a1, 0j, m, e2)
        res = residual(a1p, 0j, m, e2)
        # Ties broken toward the phase closest to zero.
        key = (res, abs(cmath.phase(a1p)))
        if best is None or key < best[0]:
            best = (key, a1p)
    if best[0][0] > RESIDUAL_TOL:
        raise InternalInconsistencyError(
            f"no phase sign gives a consistent singlemode state at E^2={e2:g}, I={I:g} "
            f"(best residual {best[0][0]:.3e})"
        )
    return _make_state(Branch.SINGLEMODE, best[1], 0j, m, e2)


def singlemode_states(e2, m: ModelParams):
    """Singlemode states for every intensity root (deduplicating double roots)."""
    roots = singlemode_intensities(e2, m)
    out = []
    for I in roots:
        if out is not None and any(abs(I - s.I1) < 1e-10 * max(1.0, I) for s in out):
            continue
        out.append(singlemode_state(e2, m, I))
    return out


# --- bimode branch -------------------------------------------------------------


def _bimode_i2(i1, m, sign):
    b2 = m.b_mt / 2.0
    rad = b2 * b2 * i1 * i1 - 1.0
    if rad < 0:
        return None
    return m.delta - m.a_mt * i1 + sign * math.sqrt(rad)


def _bimode_pump_mismatch(i1, m, e2, sign):
    # Evaluated as an analytic continuation across the I2 = 0 boundary so a
    # root sitting right at the polarization onset can still be bracketed;
    # unphysical roots (I2 < 0) are discarded after refinement.
    i2 = _bimode_i2(i1, m, sign)
    if i2 is None:
        return None
    s = i1 + i2
    return s * s + (i1 - i2) ** 2 * (s - m.delta) ** 2 - e2 * i1


def bimode_states(e2, m: ModelParams):
    """All elliptically polarized steady states at pump ``e2``.

    For each sign branch of the I2(I1) relation, scans I1 over the physical
    window and refines each bracketed root of the pump condition by
    bisection; the candidate phases from the arccos forms (both signs; an
    arccos argument outside [-1, 1] marks an unphysical candidate and is
    dropped) are tested against the steady-state residual and Newton
    polished.  Both phase-bistable twins are returned.
    """
    if e2 <= 0:
        raise InvalidParameterError(f"pump E^2 must be > 0, got {e2}")
    if m.b_mt == 0:
        return []
    b2 = abs(m.b_mt) / 2.0
    lo = max(1.0 / b2, 1e-6)
    hi = max(4.0 * (m.delta + math.sqrt(e2)) + 10.0, e2, lo + 1.0)
    grid = np.linspace(lo, hi, 2000)

    states = []
    for sign, branch in ((+1.0, Branch.BIMODE_PLUS), (-1.0, Branch.BIMODE_MINUS)):
        vals = [(_bimode_pump_mismatch(i1, m, e2, sign)) for i1 in grid]
        for k in range(len(grid) - 1):
            f0, f1 = vals[k], vals[k + 1]
            if f0 is None or f1 is None or f0 * f1 > 0:
                continue
            a, b = grid[k], grid[k + 1]
            fa = f0
            for _ in range(80):  # bisection to ~1e-12 absolute
                mid = 0.5 * (a + b)
                fm = _bimode_pump_mismatch(mid, m, e2, sign)
                if fm is None:
                    break
                if fa * fm <= 0:
                    b = mid
                else:
                    a, fa = mid, fm
                if b - a < 1e-12:
                    break
            i1 = 0.5 * (a + b)
            i2 = _bimode_i2(i1, m, sign)
            if i2 is None or i2 < -1e-10:
                continue
            st = _bimode_state_from_intensities(i1, max(i2, 0.0), m, e2, branch)
            if st is not None:
                states.append(st)

    # Deduplicate (adjacent scan cells can bracket the same root).
    unique = []
    for st in states:
        if any(
            abs(st.a1 - u.a1) < 1e-7 and abs(st.a2 - u.a2) < 1e-7 for u in unique
        ):
            continue
        unique.append(st)

    out = []
    for st in unique:
        out.append(st)
        out.append(phase_twin(st, m))
    return out


def _bimode_state_from_intensities(i1, i2, m, e2, branch):
    # Dividing the steady equation of the orthogonal mode by a2 pins the
    # phase difference: sin(2 dphi) = eta/((B/2) I1) and
    # cos(2 dphi) = (Delta - I2 - A*I1)/((B/2) I1); the parallel phase then
    # follows from the pump equation.  (Magnitudes match the arccos forms;
    # the signs are the unique ones that annihilate the residual.)
    b2i1 = m.b_mt / 2.0 * i1
    sin2 = m.eta / b2i1
    cos2 = (m.delta - i2 - m.a_mt * i1) / b2i1
    if abs(sin2) > 1.0 + 1e-9 or math.hypot(sin2, cos2) > 1.0 + 1e-6:
        return None  # unphysical candidate (arccos argument out of range)
    dphi = 0.5 * math.atan2(sin2, cos2)
    phi1 = -math.atan2(
        m.eta * (i1 - i2) * (m.delta - i1 - i2), i1 + i2
    )
    a1 = math.sqrt(i1) * cmath.exp(1j * phi1)
    a2 = math.sqrt(i2) * cmath.exp(1j * (phi1 + dphi))
    a1, a2 = _polish_classical(a1, a2, m, e2)
    if residual(a1, a2, m, e2) > RESIDUAL_TOL:
        return None
    return _make_state(branch, a1, a2, m, e2)


def phase_twin(s: SteadyState, m: ModelParams) -> SteadyState:
    """The phi2 + pi phase-bistable partner of a bimode state."""
    return _make_state(s.branch, s.a1, -s.a2, m, s.pump_E2, phase_partner=not s.phase_partner)


# --- bifurcation loci ---------------------------------------------------------


def bistability_range(m: ModelParams) -> Optional[BistableRange]:
    """Fold positions of the bistable loop, or None for Delta < sqrt(3).

    At Delta = sqrt(3) the two folds merge; the degenerate point is still
    returned.  Values are ordered so e2_minus <= e2_plus for either sign of
    eta.
    """
    d = m.delta
    if d < DELTA_BISTABLE:
        return None
    disc = max(d * d - 3.0, 0.0)
    s = math.sqrt(disc)
    base = d * (d * d + 9.0)
    e2_hi = 2.0 / 27.0 * (base + s**3)
    e2_lo = 2.0 / 27.0 * (base - s**3)
    return BistableRange(
        e2_minus=min(e2_lo, e2_hi),
        e2_plus=max(e2_lo, e2_hi),
        i_minus=(2.0 * d - s) / 3.0,
        i_plus=(2.0 * d + s) / 3.0,
    )


def polarization_threshold(m: ModelParams) -> PolarizationThreshold:
    """Pump and intensity at which the orthogonal mode switches on.

    Solves the marginality condition (B/2)^2 I^2 = 1 + (Delta - A*I)^2 of
    the orthogonal fluctuation block for the smallest positive intensity;
    the threshold pump follows from the singlemode cubic.  For liquids this
    reduces to I_pol = (-Delta + sqrt(9 Delta^2 + 8))/2.
    """
    if m.b_mt == 0:
        raise NoThresholdError(
            "no polarization instability for b_mt = 0: the required pump "
            "diverges as the four-wave-mixing coefficient vanishes"
        )
    d, amt = m.delta, m.a_mt
    u = (m.b_mt / 2.0) ** 2 - amt * amt
    b = 2.0 * amt * d
    c = -(1.0 + d * d)
    roots = []
    if abs(u) < 1e-14:
        if b != 0:
            roots = [-c / b]
    else:
        disc = b * b - 4.0 * u * c
        if disc >= 0:
            sq = math.sqrt(disc)
            roots = [(-b + sq) / (2.0 * u), (-b - sq) / (2.0 * u)]
    roots = [r for r in roots if r > 0]
    if not roots:
        raise NoThresholdError(
            f"no positive-intensity polarization threshold for a_mt={amt}, b_mt={m.b_mt}"
        )
    i_pol = min(roots)
    e2_pol = i_pol * (1.0 + (d - i_pol) ** 2)
    return PolarizationThreshold(e2_pol=e2_pol, i_pol=i_pol)


def bifurcation_set(m: ModelParams) -> BifurcationSet:
    return BifurcationSet(bistable=bistability_range(m), polarization=polarization_threshold(m))


# --- stability and relaxation ---------------------------------------------------


def classify_stability(s: SteadyState, m: ModelParams, tol=STABILITY_TOL) -> Stability:
    """Linear stability from the eigenvalues of the drift Jacobian."""
    lam = np.linalg.eigvals(linfluct.drift_jacobian(s, m))
    re = lam.real
    if np.any(re > tol):
        return Stability.UNSTABLE
    if np.any(re >= -tol):
        return Stability.MARGINAL
    return Stability.STABLE


def all_states(e2, m: ModelParams):
    """Every known steady state at pump ``e2`` (singlemode roots and bimode twins)."""
    if e2 == 0:
        return [singlemode_state(0.0, m, 0.0)]
    return singlemode_states(e2, m) + bimode_states(e2, m)


def relax(m: ModelParams, a0, t_max) -> SteadyState:
    """Integrate the classical equations from ``a0`` until they settle.

    ``a0`` is the complex pair (a1, a2); the pump is m.E^2.  Returns the
    enumerated steady state nearest to the settled point.  Raises
    :class:`NonConvergenceError` if ||da/dtau|| has not dropped below 1e-10
    by ``t_max``.
    """
    if not t_max > 0:
        raise InvalidParameterError("t_max must be > 0")
    e2 = m.E2

    def rhs(_, y):
        r1, r2 = linfluct.classical_rhs(y[0] + 1j * y[1], y[2] + 1j * y[3], m, e2)
        return [r1.real, r1.imag, r2.real, r2.imag]

    y = [a0[0].real, a0[0].imag, a0[1].real, a0[1].imag]
    t = 0.0
    settled = False
    while t < t_max:
        chunk = min(10.0, t_max - t)
        sol = solve_ivp(rhs, (t, t + chunk), y, method="RK45", rtol=1e-10, atol=1e-12)
        if not sol.success:
            raise NonConvergenceError(f"integrator failed: {sol.message}")
        y = sol.y[:, -1]
        t += chunk
        if np.max(np.abs(rhs(t, y))) < 1e-10:
            settled = True
            break
    if not settled:
        raise NonConvergenceError(f"trajectory did not settle within t_max={t_max:g}")

    a1 = y[0] + 1j * y[1]
    a2 = y[2] + 1j * y[3]
    candidates = all_states(e2, m)
    return min(candidates, key=lambda s: abs(s.a1 - a1) + abs(s.a2 - a2))


# --- bifurcation operating points ------------------------------------------------

_BIF_KINDS = ("pol", "up", "down")


def state_at_bifurcation(m: ModelParams, which: str) -> SteadyState:
    """The exact (marginal) singlemode state at a bifurcation.

    ``which`` is 'pol' for the polarization threshold, 'up'/'down' for the
    folds of the upper/lower intensity branches.  The pump is derived from
    the bifurcation intensity through the cubic so the state satisfies the
    residual bound exactly.
    """
    if which not in _BIF_KINDS:
        raise InvalidParameterError(f"which must be one of {_BIF_KINDS}, got {which!r}")
    if which == "pol":
        I = polarization_threshold(m).i_pol
    else:
        rng = bistability_range(m)
        if rng is None:
            raise InvalidParameterError(
                f"no tangent bifurcations at delta={m.delta:g} (needs delta >= sqrt(3))"
            )
        I = rng.i_plus if which == "up" else rng.i_minus
    e2 = I * (1.0 + (m.delta - I) ** 2)
    return singlemode_state(e2, m, I)


def state_near_bifurcation(m: ModelParams, which: str, eps_rel=1e-6) -> SteadyState:
    """Singlemode state at relative pump offset ``eps_rel`` on the stable side.

    'down' approaches the lower-branch fold from below in pump, 'up' the
    upper-branch fold from above, 'pol' the polarization threshold from
    below.
    """
    if which not in _BIF_KINDS:
        raise InvalidParameterError(f"which must be one of {_BIF_KINDS}, got {which!r}")
    if not eps_rel > 0:
        raise InvalidParameterError("eps_rel must be > 0")
    if which == "pol":
        thr = polarization_threshold(m)
        e2 = thr.e2_pol * (1.0 - eps_rel)
        target = thr.i_pol
    else:
        rng = bistability_range(m)
        if rng is None:
            raise InvalidParameterError(
                f"no tangent bifurcations at delta={m.delta:g} (needs delta >= sqrt(3))"
            )
        if which == "down":
            e2 = rng.e2_plus * (1.0 - eps_rel)
            target = rng.i_minus
        else:
            e2 = rng.e2_minus * (1.0 + eps_rel)
            target = rng.i_plus
    roots = singlemode_intensities(e2, m)
    stable = []
    for I in roots:
        st = singlemode_state(e2, m, I)
        if st.stable is not Stability.UNSTABLE:
            stable.append(st)
    if not stable:
        raise InternalInconsistencyError(
            f"no stable singlemode root near the {which} bifurcation at E^2={e2:g}"
        )
    return min(stable, key=lambda s: abs(s.I1 - target))
