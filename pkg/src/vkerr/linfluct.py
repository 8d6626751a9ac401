"""Linearized fluctuation machinery: drift, diffusion, and spectral matrices.

Everything operates on the normalized c-number vector

    u = (a1, a1p, a2, a2p)

where the `p` channels are the independent conjugate-like variables of the
generalized-P representation (equal to the complex conjugates only on the
classical manifold).  The spectral matrix of the stationary fluctuations is

    M(omega) = (Abar + i*omega*I)^-1  Dbar  (Abar^T - i*omega*I)^-1

with Abar the drift Jacobian at the steady state and Dbar the (symmetric,
not Hermitian) diffusion matrix.  The output-field spectral matrix in
normalized units is 2*M(omega).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, NearSingularError
from .params import ModelParams

# Condition number above which a spectral-matrix solve is refused: the
# operating point is then effectively at a bifurcation and the physical
# statement is a limit, to be approached at an offset instead.
COND_LIMIT = 1e14

#: Index order of the fluctuation vector.
FLUCTUATION_ORDER = ("a1", "a1p", "a2", "a2p")

#: Index pairs of the diffusion matrix that may be nonzero (0-based).
DIFFUSION_SPARSITY = ((0, 0), (1, 1), (2, 2), (3, 3), (0, 2), (2, 0), (1, 3), (3, 1))


def drift_vector(u, m: ModelParams, e2):
    """Normalized drift A(u) of the Langevin equations.

    ``u`` is the 4-vector (a1, a1p, a2, a2p); ``e2`` the pump intensity.
    """
    a1, a1p, a2, a2p = u
    ieta = 1j * m.eta
    b2 = m.b_mt / 2.0
    amt = m.a_mt
    E = np.sqrt(e2)
    lin_p = 1.0 + ieta * m.delta   # decay + detuning for the plain channels
    lin_m = 1.0 - ieta * m.delta   # and for the `p` channels
    return np.array(
        [
            E - lin_p * a1 + ieta * (a1 * a1 * a1p + amt * a1 * a2 * a2p + b2 * a1p * a2 * a2),
            E - lin_m * a1p - ieta * (a1 * a1p * a1p + amt * a1p * a2 * a2p + b2 * a1 * a2p * a2p),
            -lin_p * a2 + ieta * (a2 * a2 * a2p + amt * a1 * a1p * a2 + b2 * a1 * a1 * a2p),
            -lin_m * a2p - ieta * (a2 * a2p * a2p + amt * a1 * a1p * a2p + b2 * a1p * a1p * a2),
        ],
        dtype=complex,
    )


def classical_rhs(a1, a2, m: ModelParams, e2):
    """Right-hand side of the classical equations (a_p identified with a*)."""
    rhs = drift_vector(np.array([a1, np.conj(a1), a2, np.conj(a2)]), m, e2)
    return rhs[0], rhs[2]


def jacobian_at(u, m: ModelParams):
    """Analytic Jacobian dA_i/du_j of :func:`drift_vector` at the point ``u``."""
    a1, a1p, a2, a2p = u
    ieta = 1j * m.eta
    b2 = m.b_mt / 2.0
    amt = m.a_mt
    lin_p = 1.0 + ieta * m.delta
    lin_m = 1.0 - ieta * m.delta

    J = np.empty((4, 4), dtype=complex)
    J[0, 0] = -lin_p + ieta * (2.0 * a1 * a1p + amt * a2 * a2p)
    J[0, 1] = ieta * (a1 * a1 + b2 * a2 * a2)
    J[0, 2] = ieta * (amt * a1 * a2p + 2.0 * b2 * a1p * a2)
    J[0, 3] = ieta * amt * a1 * a2

    J[1, 0] = -ieta * (a1p * a1p + b2 * a2p * a2p)
    J[1, 1] = -lin_m - ieta * (2.0 * a1 * a1p + amt * a2 * a2p)
    J[1, 2] = -ieta * amt * a1p * a2p
    J[1, 3] = -ieta * (amt * a1p * a2 + 2.0 * b2 * a1 * a2p)

    J[2, 0] = ieta * (amt * a1p * a2 + 2.0 * b2 * a1 * a2p)
    J[2, 1] = ieta * amt * a1 * a2
    J[2, 2] = -lin_p + ieta * (2.0 * a2 * a2p + amt * a1 * a1p)
    J[2, 3] = ieta * (a2 * a2 + b2 * a1 * a1)

    J[3, 0] = -ieta * amt * a1p * a2p
    J[3, 1] = -ieta * (amt * a1 * a2p + 2.0 * b2 * a1p * a2)
    J[3, 2] = -ieta * (a2p * a2p + b2 * a1p * a1p)
    J[3, 3] = -lin_m - ieta * (2.0 * a2 * a2p + amt * a1 * a1p)
    return J


def _state_vector(s):
    return np.array([s.a1, np.conj(s.a1), s.a2, np.conj(s.a2)], dtype=complex)


def drift_jacobian(s, m: ModelParams):
    """Drift Jacobian Abar at a steady state (4x4 complex)."""
    return jacobian_at(_state_vector(s), m)


def diffusion_from_amplitudes(a1, a1p, a2, a2p, m: ModelParams):
    """Normalized diffusion matrix at an arbitrary phase-space point.

    Only the diagonal and the (a1, a2)/(a1p, a2p) couplings are nonzero; the
    matrix is symmetric (plain transpose) by construction.
    """
    ieta = 1j * m.eta
    b2 = m.b_mt / 2.0
    amt = m.a_mt
    D = np.zeros((4, 4), dtype=complex)
    D[0, 0] = ieta * (a1 * a1 + b2 * a2 * a2)
    D[1, 1] = -ieta * (a1p * a1p + b2 * a2p * a2p)
    D[2, 2] = ieta * (a2 * a2 + b2 * a1 * a1)
    D[3, 3] = -ieta * (a2p * a2p + b2 * a1p * a1p)
    D[0, 2] = D[2, 0] = -ieta * amt * a1 * a2
    D[1, 3] = D[3, 1] = ieta * amt * a1p * a2p
    return D


def diffusion_at(s, m: ModelParams):
    """Normalized diffusion matrix Dbar at a steady state."""
    u = _state_vector(s)
    return diffusion_from_amplitudes(u[0], u[1], u[2], u[3], m)


def _guard_condition(mat, omega, m):
    cond = np.linalg.cond(mat)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise NearSingularError(
            f"spectral matrix is singular at omega={omega:g} "
            f"(condition number {cond:.3g}); the operating point sits on a "
            "bifurcation -- evaluate at a small pump or frequency offset",
            omega=omega,
            params=m,
        )
    return cond


def spectral_matrix(s, m: ModelParams, omega):
    """Intracavity spectral matrix M(omega) at a steady state.

    Evaluated with two dense LU solves; never forms an explicit inverse.
    Satisfies M(omega)^T = M(-omega).
    """
    A = drift_jacobian(s, m)
    D = diffusion_at(s, m)
    eye = np.eye(4)
    left = A + 1j * omega * eye
    right = A.T - 1j * omega * eye
    _guard_condition(left, omega, m)
    _guard_condition(right, omega, m)
    X = np.linalg.solve(left, D)
    # M = X @ right^-1  ==  solve(right^T, X^T)^T
    return np.linalg.solve(right.T, X.T).T


def output_spectral_matrix(s, m: ModelParams, omega):
    """Output-field spectral matrix, 2*M(omega) in normalized units."""
    return 2.0 * spectral_matrix(s, m, omega)


def bilinear_spectrum(s, m: ModelParams, omega, left, right):
    """Stably evaluate 2 * left^T M(omega) right (an output-spectrum entry combination).

    Solving against the quadrature phase vectors instead of combining
    explicit M entries avoids the catastrophic cancellation that sets in
    close to bifurcations, where individual entries diverge while physical
    quadrature combinations stay O(1).  Returns the complex value and the
    worse of the two solve condition numbers.
    """
    A = drift_jacobian(s, m)
    D = diffusion_at(s, m)
    eye = np.eye(4)
    plus = A.T + 1j * omega * eye   # transpose of (A + i omega I)
    minus = A.T - 1j * omega * eye
    c1 = _guard_condition(plus, omega, m)
    c2 = _guard_condition(minus, omega, m)
    ya = np.linalg.solve(plus, np.asarray(left, dtype=complex))
    yb = np.linalg.solve(minus, np.asarray(right, dtype=complex))
    return 2.0 * (ya @ D @ yb), max(c1, c2)


@dataclass(frozen=True)
class FrequencyGrid:
    """Strictly increasing grid of real fluctuation frequencies (units of gamma)."""

    omegas: np.ndarray

    def __post_init__(self):
        om = np.asarray(self.omegas, dtype=float)
        if om.ndim != 1 or om.size == 0:
            raise InvalidParameterError("frequency grid must be a non-empty 1-D array")
        if not np.all(np.isfinite(om)):
            raise InvalidParameterError("frequency grid must be finite")
        if np.any(np.diff(om) <= 0):
            raise InvalidParameterError("frequency grid must be strictly increasing")
        object.__setattr__(self, "omegas", om)

    def __iter__(self):
        return iter(self.omegas)

    def __len__(self):
        return self.omegas.size


def linear_grid(omega_max, n=201, omega_min=0.0):
    return FrequencyGrid(np.linspace(omega_min, omega_max, n))


def log_grid(omega_max, n=60, omega_min=1e-3, include_zero=True):
    """Log-dense grid on [omega_min, omega_max], optionally prepended with 0."""
    om = np.geomspace(omega_min, omega_max, n)
    if include_zero:
        om = np.concatenate(([0.0], om))
    return FrequencyGrid(om)
