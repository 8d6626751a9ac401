"""Monte Carlo oracle: Langevin integration and spectral estimation.

The linearized fluctuation equations

    d(da)/dtau = Abar * da + Bbar * xi(tau)

are integrated with fixed-step Euler-Maruyama (additive noise, so the
scheme is exact in distribution up to the O(dt) drift discretization);
trajectory spectra are averaged Welch-style and compared against the
analytic spectral matrix.  The full nonlinear phase-space equations can
also be integrated, but trajectories of the Kerr nonlinearity are known to
escape, so that route ships with divergence guards and is for exploration
only.

Each trajectory owns an independent, reproducible RNG stream derived from
(seed, trajectory index); reductions use a fixed order so a given seed and
configuration reproduce results bit for bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import schur
from scipy.signal import lfilter
from scipy.signal.windows import hann

from . import linfluct
from .errors import (
    DegenerateBlockError,
    InsufficientDataError,
    InternalInconsistencyError,
    InvalidParameterError,
    NumericalConsistencyError,
    UnreliableRegimeError,
)
from .params import ModelParams
from .steady import Stability, SteadyState

_PIVOT_TOL = 1e-14


@dataclass(frozen=True)
class SimConfig:
    """Integration configuration (times in units of 1/gamma)."""

    duration: float
    dt: float = 1e-3
    n_traj: int = 100
    seed: int = 0
    burn_in: float = 10.0

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidParameterError("dt must be > 0")
        if not self.duration > self.burn_in:
            raise InvalidParameterError("duration must exceed burn_in")
        if self.burn_in < 0:
            raise InvalidParameterError("burn_in must be >= 0")
        if self.n_traj < 1:
            raise InvalidParameterError("n_traj must be >= 1")

    @property
    def n_steps(self):
        return int(round(self.duration / self.dt)) + 1

    @property
    def n_burn(self):
        return int(round(self.burn_in / self.dt))

    @property
    def n_kept(self):
        return self.n_steps - self.n_burn


@dataclass(frozen=True)
class NoiseFactor:
    """Factor B with B @ B.T == D (plain transpose, not conjugate)."""

    b: np.ndarray


def _factor_block(d11, d13, d33):
    """Cholesky-style factor of one complex-symmetric 2x2 block.

    Returns (b11, b31, b33, pivoted); with pivoting the roles of the two
    indices are swapped so the small diagonal entry never divides.
    """
    if abs(d11) >= _PIVOT_TOL:
        b11 = np.sqrt(complex(d11))
        b31 = d13 / b11
        b33 = np.sqrt(d33 - b31 * b31)
        return b11, b31, b33, False
    if abs(d33) >= _PIVOT_TOL:
        c11 = np.sqrt(complex(d33))
        c31 = d13 / c11
        c33 = np.sqrt(d11 - c31 * c31)
        return c11, c31, c33, True
    if abs(d13) > _PIVOT_TOL:
        raise DegenerateBlockError(
            "diffusion block has vanishing diagonal but nonzero coupling "
            f"(|d13| = {abs(d13):.3e})"
        )
    return 0j, 0j, 0j, False


def noise_factor(d) -> NoiseFactor:
    """Factorize a diffusion matrix with the declared two-block sparsity.

    The two decoupled complex-symmetric blocks live on the index pairs
    (0, 2) and (1, 3); each gets a principal-branch complex Cholesky factor.
    """
    d = np.asarray(d, dtype=complex)
    if d.shape != (4, 4):
        raise InvalidParameterError("diffusion matrix must be 4x4")
    allowed = set(linfluct.DIFFUSION_SPARSITY)
    scale = max(1.0, float(np.max(np.abs(d))))
    for i in range(4):
        for j in range(4):
            if (i, j) not in allowed and abs(d[i, j]) > 1e-12 * scale:
                raise InvalidParameterError(
                    f"diffusion entry ({i},{j}) violates the block sparsity"
                )
    b = np.zeros((4, 4), dtype=complex)
    for (i, k) in ((0, 2), (1, 3)):
        f1, f2, f3, pivoted = _factor_block(d[i, i], d[i, k], d[k, k])
        if not pivoted:
            b[i, i], b[k, i], b[k, k] = f1, f2, f3
        else:
            b[k, k], b[i, k], b[i, i] = f1, f2, f3
    err = float(np.max(np.abs(b @ b.T - d)))
    if err > 1e-12 * scale:
        raise InternalInconsistencyError(f"noise factorization residual {err:.3e}")
    return NoiseFactor(b=b)


def _traj_rng(seed, index):
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def _ar1_series(a, forcing):
    """z[0] = 0, z[n+1] = a z[n] + forcing[n], returned for n = 0..len(forcing)."""
    out = np.empty(len(forcing) + 1, dtype=complex)
    out[0] = 0.0
    out[1:] = lfilter([1.0], [1.0, -a], forcing)
    return out


class LinearizedEnsemble:
    """Lazy ensemble of linearized fluctuation trajectories.

    Trajectories are generated on demand (memory stays bounded for long
    runs) from per-trajectory RNG streams, via a Schur triangularization of
    the one-step map: the recursion is solved component by component with
    linear filters, which reproduces plain Euler-Maruyama exactly while
    running at C speed and tolerating defective Jacobians.
    """

    def __init__(self, state: SteadyState, m: ModelParams, config: SimConfig):
        self.state = state
        self.m = m
        self.config = config
        self.A = linfluct.drift_jacobian(state, m)
        self.B = noise_factor(linfluct.diffusion_at(state, m)).b
        # Complex Schur form of the one-step map I + dt*A.
        T, Q = schur(np.eye(4) + config.dt * self.A, output="complex")
        self._T = T
        self._Q = Q
        self._QhB = Q.conj().T @ self.B

    @property
    def n_traj(self):
        return self.config.n_traj

    @property
    def n_kept(self):
        return self.config.n_kept

    @property
    def dt(self):
        return self.config.dt

    def trajectory(self, index):
        """Kept samples (post burn-in) of trajectory ``index``, shape (n_kept, 4)."""
        cfg = self.config
        n = cfg.n_steps
        rng = _traj_rng(cfg.seed, index)
        xi = rng.standard_normal((n - 1, 4))
        u = (math.sqrt(cfg.dt) * xi) @ self._QhB.T  # (n-1, 4) complex forcing
        T = self._T
        z = np.empty((n, 4), dtype=complex)
        z[:, 3] = _ar1_series(T[3, 3], u[:, 3])
        z[:, 2] = _ar1_series(T[2, 2], u[:, 2] + T[2, 3] * z[:-1, 3])
        z[:, 1] = _ar1_series(T[1, 1], u[:, 1] + T[1, 2] * z[:-1, 2] + T[1, 3] * z[:-1, 3])
        z[:, 0] = _ar1_series(
            T[0, 0],
            u[:, 0] + T[0, 1] * z[:-1, 1] + T[0, 2] * z[:-1, 2] + T[0, 3] * z[:-1, 3],
        )
        traj = z @ self._Q.T  # da = Q z
        traj = traj[cfg.n_burn:]
        if not np.all(np.isfinite(traj)):
            raise NumericalConsistencyError(
                f"non-finite sample in trajectory {index}; "
                f"dt={cfg.dt:g} may be too large for this operating point"
            )
        return traj

    def trajectories(self):
        for k in range(self.config.n_traj):
            yield self.trajectory(k)

    def dump(self, path):
        """Write raw trajectories as little-endian f64 (re, im interleaved) + JSON sidecar."""
        path = str(path)
        with open(path, "wb") as fh:
            for traj in self.trajectories():
                flat = np.empty(traj.shape + (2,), dtype="<f8")
                flat[..., 0] = traj.real
                flat[..., 1] = traj.imag
                fh.write(flat.tobytes())
        sidecar = {
            "layout": "trajectory-major, then sample, then channel, then (re, im)",
            "dtype": "<f8",
            "channels": list(linfluct.FLUCTUATION_ORDER),
            "n_traj": self.config.n_traj,
            "n_samples": self.config.n_kept,
            "dt": self.config.dt,
            "duration": self.config.duration,
            "burn_in": self.config.burn_in,
            "seed": self.config.seed,
        }
        with open(path + ".json", "w") as fh:
            json.dump(sidecar, fh, indent=2)
        return path


def integrate_linearized(s: SteadyState, m: ModelParams, cfg: SimConfig) -> LinearizedEnsemble:
    """Ensemble of linearized Langevin trajectories around a stable state."""
    if s.stable is not Stability.STABLE:
        raise InvalidParameterError(
            "linearized simulation requires a strictly stable state "
            f"(got {s.stable.value}); stationary spectra are undefined otherwise"
        )
    return LinearizedEnsemble(s, m, cfg)


def equal_time_moments(ensemble: LinearizedEnsemble):
    """Ensemble- and time-averaged second moments <da_i da_j> (plain products)."""
    acc = np.zeros((4, 4), dtype=complex)
    count = 0
    for traj in ensemble.trajectories():
        acc += traj.T @ traj
        count += traj.shape[0]
    return acc / count


# --- spectral estimation -----------------------------------------------------


@dataclass(frozen=True)
class SpectralEstimate:
    """Welch estimate of the spectral matrix on selected frequency bins."""

    omegas: np.ndarray          # actual bin frequencies
    m_hat: np.ndarray           # (n_bins, 4, 4) complex
    stderr: np.ndarray          # (n_bins, 4, 4) real
    n_segments: int
    per_traj: np.ndarray        # (n_traj, n_bins, 4, 4) complex

    def quad_estimate(self, j, beta):
        """Estimated :q_j(beta, omega): with standard errors on the bin grid.

        The estimator is 2 * v^T M_hat v with v the quadrature phase vector;
        errors are jackknife over trajectories (for this linear statistic the
        jackknife reduces to the standard error of the per-trajectory mean).
        """
        v = np.zeros(4, dtype=complex)
        i = 0 if j == 1 else 2
        v[i] = np.exp(-1j * beta)
        v[i + 1] = np.exp(1j * beta)
        per = 2.0 * np.einsum("i,tbij,j->tb", v, self.per_traj, v).real
        q = per.mean(axis=0)
        se = per.std(axis=0, ddof=1) / math.sqrt(per.shape[0])
        return q, se


def estimate_spectral_matrix(ensemble: LinearizedEnsemble, omega_grid,
                             segment_divisor=4) -> SpectralEstimate:
    """Welch-averaged cross-periodogram estimate of M(omega).

    Segments span duration/segment_divisor with a Hann window and 50%
    overlap.  The default divisor of 4 keeps the window-kernel bandwidth
    well below the O(1) width of the fluctuation spectra: shorter segments
    (say duration/16) smooth the peaks by several percent, which is far
    outside the Monte Carlo error bars at usual ensemble sizes.  The
    spectral matrix is defined through plain (unconjugated) products of the
    four c-number channels, so the estimator correlates F_i(omega_k) with
    F_j(-omega_k).  Frequencies are snapped to the nearest FFT bin.
    """
    cfg = ensemble.config
    L = int(round(cfg.duration / segment_divisor / cfg.dt))
    if L < 8:
        raise InsufficientDataError("segments too short; increase duration or reduce dt")
    step = L // 2
    n_seg = (cfg.n_kept - L) // step + 1 if cfg.n_kept >= L else 0
    if n_seg * cfg.n_traj < 8:
        raise InsufficientDataError(
            f"only {n_seg * cfg.n_traj} Welch segments available; need at least 8"
        )
    window = hann(L, sym=False)
    wnorm = float(np.sum(window**2))

    omegas = np.atleast_1d(np.asarray(
        omega_grid.omegas if hasattr(omega_grid, "omegas") else omega_grid, dtype=float
    ))
    dw = 2.0 * math.pi / (L * cfg.dt)
    bins = np.unique(np.clip(np.round(omegas / dw).astype(int), 0, L // 2))
    bin_omegas = bins * dw

    per_traj = np.empty((cfg.n_traj, bins.size, 4, 4), dtype=complex)
    for t, traj in enumerate(ensemble.trajectories()):
        acc = np.zeros((bins.size, 4, 4), dtype=complex)
        for si in range(n_seg):
            seg = traj[si * step: si * step + L]
            F = np.fft.fft(window[:, None] * seg, axis=0)
            Fp = F[bins]                 # F_i(+k)  ~ transform at -omega_k
            Fm = F[(-bins) % L]          # F_j(-k)  ~ transform at +omega_k
            acc += Fp[:, :, None] * Fm[:, None, :]
        per_traj[t] = acc * (cfg.dt / (wnorm * n_seg))

    m_hat = per_traj.mean(axis=0)
    if cfg.n_traj > 1:
        var = per_traj.real.var(axis=0, ddof=1) + per_traj.imag.var(axis=0, ddof=1)
        stderr = np.sqrt(var / cfg.n_traj)
    else:
        stderr = np.full_like(m_hat, np.inf, dtype=float)
    return SpectralEstimate(
        omegas=bin_omegas,
        m_hat=m_hat,
        stderr=stderr,
        n_segments=n_seg * cfg.n_traj,
        per_traj=per_traj,
    )


# --- full nonlinear phase-space integration (experimental) ---------------------


@dataclass(frozen=True)
class FullSimResult:
    """Batched nonlinear trajectories with divergence bookkeeping."""

    times: np.ndarray
    data: np.ndarray            # (n_traj, n_times, 4) complex; frozen after divergence
    diverged: np.ndarray        # (n_traj,) bool
    divergence_fraction: float


def _noise_factor_batch(d11, d13, d33):
    """Vectorized principal-branch block factorization (no pivoting needed
    away from measure-zero degeneracies; degenerate leading entries fall
    back to the swapped form)."""
    d11 = np.asarray(d11, dtype=complex)
    d13 = np.asarray(d13, dtype=complex)
    d33 = np.asarray(d33, dtype=complex)
    lead_ok = np.abs(d11) >= _PIVOT_TOL
    safe11 = np.where(lead_ok, d11, 1.0)
    b11 = np.sqrt(safe11)
    b31 = d13 / b11
    b33 = np.sqrt(d33 - b31 * b31)
    b11 = np.where(lead_ok, b11, 0.0)
    b31 = np.where(lead_ok, b31, 0.0)
    b33 = np.where(lead_ok, b33, 0.0)
    if not np.all(lead_ok):
        # Swapped factor: rows exchange roles, columns are free.
        alt = ~lead_ok
        d33a = np.where(alt, d33, 1.0)
        ok33 = np.abs(d33a) >= _PIVOT_TOL
        bad = alt & ~ok33 & (np.abs(d13) > _PIVOT_TOL)
        if np.any(bad):
            raise DegenerateBlockError("degenerate diffusion block in batch")
        c11 = np.sqrt(np.where(ok33, d33a, 1.0))
        c31 = d13 / c11
        c33 = np.sqrt(d11 - c31 * c31)
        use = alt & ok33
        # (b11, b31, b33) interpretation flips: see noise_factor for layout.
        return (
            np.where(use, c33, b11),
            np.where(use, c31, b31),
            np.where(use, c11, b33),
            use,
        )
    return b11, b31, b33, np.zeros(d11.shape, dtype=bool)


def integrate_full(m: ModelParams, a0, cfg: SimConfig, noise_scale=1.0,
                   store_every=1) -> FullSimResult:
    """Euler-Maruyama integration of the full nonlinear phase-space equations.

    ``a0`` is the classical complex pair (a1, a2); the pump is m.E^2.  The
    drift and the state-dependent noise factor are re-evaluated every step.
    ``noise_scale`` multiplies the noise factor (physically sqrt(g/gamma);
    0 recovers the deterministic classical flow).  A trajectory whose norm
    exceeds 1e3 is frozen and counted as diverged; if more than half
    diverge an :class:`UnreliableRegimeError` is raised, since ensemble
    averages would be biased.
    """
    e2 = m.E2
    n = cfg.n_steps
    n_traj = cfg.n_traj
    dt = cfg.dt
    sq = math.sqrt(dt) * noise_scale

    u = np.tile(
        np.array([a0[0], np.conj(a0[0]), a0[1], np.conj(a0[1])], dtype=complex),
        (n_traj, 1),
    )
    rngs = [_traj_rng(cfg.seed, k) for k in range(n_traj)]
    alive = np.ones(n_traj, dtype=bool)

    kept_idx = range(0, n, store_every)
    times = np.array([i * dt for i in kept_idx])
    data = np.empty((n_traj, len(times), 4), dtype=complex)
    data[:, 0] = u

    ieta = 1j * m.eta
    b2 = m.b_mt / 2.0
    amt = m.a_mt
    E = math.sqrt(e2)
    lin_p = 1.0 + ieta * m.delta
    lin_m = 1.0 - ieta * m.delta

    store_col = 1
    for step_i in range(1, n):
        a1, a1p, a2, a2p = u[:, 0], u[:, 1], u[:, 2], u[:, 3]
        drift = np.empty_like(u)
        drift[:, 0] = E - lin_p * a1 + ieta * (a1 * a1 * a1p + amt * a1 * a2 * a2p + b2 * a1p * a2 * a2)
        drift[:, 1] = E - lin_m * a1p - ieta * (a1 * a1p * a1p + amt * a1p * a2 * a2p + b2 * a1 * a2p * a2p)
        drift[:, 2] = -lin_p * a2 + ieta * (a2 * a2 * a2p + amt * a1 * a1p * a2 + b2 * a1 * a1 * a2p)
        drift[:, 3] = -lin_m * a2p - ieta * (a2 * a2p * a2p + amt * a1 * a1p * a2p + b2 * a1p * a1p * a2)

        if noise_scale != 0.0:
            # Block (0,2): d11, d13, d33; block (1,3): conjugate-like pattern.
            f11, f31, f33, sw1 = _noise_factor_batch(
                ieta * (a1 * a1 + b2 * a2 * a2),
                -ieta * amt * a1 * a2,
                ieta * (a2 * a2 + b2 * a1 * a1),
            )
            g11, g31, g33, sw2 = _noise_factor_batch(
                -ieta * (a1p * a1p + b2 * a2p * a2p),
                ieta * amt * a1p * a2p,
                -ieta * (a2p * a2p + b2 * a1p * a1p),
            )
            xi = np.stack([rng.standard_normal(4) for rng in rngs])
            x0, x1, x2, x3 = xi[:, 0], xi[:, 1], xi[:, 2], xi[:, 3]
            # Swapped blocks put the triangular factor on the other row.
            noise = np.empty_like(u)
            noise[:, 0] = np.where(sw1, f11 * x0 + f31 * x2, f11 * x0)
            noise[:, 2] = np.where(sw1, f33 * x2, f31 * x0 + f33 * x2)
            noise[:, 1] = np.where(sw2, g11 * x1 + g31 * x3, g11 * x1)
            noise[:, 3] = np.where(sw2, g33 * x3, g31 * x1 + g33 * x3)
            du = dt * drift + sq * noise
        else:
            du = dt * drift

        u = np.where(alive[:, None], u + du, u)
        over = np.max(np.abs(u), axis=1) > 1e3
        bad = ~np.isfinite(u).all(axis=1)
        alive &= ~(over | bad)
        if step_i % store_every == 0 and store_col < len(times):
            data[:, store_col] = u
            store_col += 1

    frac = float(np.count_nonzero(~alive)) / n_traj
    if frac > 0.5:
        raise UnreliableRegimeError(
            f"{frac:.0%} of trajectories diverged; ensemble averages are unreliable "
            "in this regime"
        )
    return FullSimResult(times=times, data=data, diverged=~alive, divergence_fraction=frac)
