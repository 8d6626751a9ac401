"""vkerr: vectorial Kerr cavity steady states, bifurcations, and squeezing spectra.

A numpy/scipy toolkit for the two-polarization (vectorial) Kerr cavity:
classical steady states and their bifurcations, linearized quantum
fluctuation spectra of the output field (quadrature, cross-quadrature and
Stokes/polarization squeezing), and an embedded stochastic Langevin
simulation used as a Monte Carlo cross-check.
"""

from .errors import (
    DegenerateBlockError,
    InsufficientDataError,
    InternalInconsistencyError,
    InvalidParameterError,
    LimitRequiredError,
    NearSingularError,
    NonConvergenceError,
    NoThresholdError,
    NumericalConsistencyError,
    UnreliableRegimeError,
    VKerrError,
)
from .linfluct import (
    FrequencyGrid,
    diffusion_at,
    drift_jacobian,
    linear_grid,
    log_grid,
    output_spectral_matrix,
    spectral_matrix,
)
from .params import (
    LIQUID_A,
    LIQUID_B,
    ModelParams,
    PhysicalParams,
    denormalize,
    from_config,
    mirror,
    normalize,
)
from .sdesim import (
    LinearizedEnsemble,
    NoiseFactor,
    SimConfig,
    SpectralEstimate,
    estimate_spectral_matrix,
    integrate_full,
    integrate_linearized,
    noise_factor,
)
from .squeeze import (
    OptimalFrequency,
    OptimalQuadrature,
    QuadratureSpec,
    SpectrumRecord,
    analytic_bifurcation_q,
    cross_spectrum,
    optimal_frequency,
    optimal_quadrature,
    orthogonal_optimal_frequency_at_tangent,
    parallel_optimal_frequency_at_polarization,
    polarization_squeezed_psi,
    quad_spectrum,
    tangent_squeezed_psi,
)
from .steady import (
    BifurcationSet,
    BistableRange,
    Branch,
    PolarizationThreshold,
    Stability,
    SteadyState,
    all_states,
    bifurcation_set,
    bimode_states,
    bistability_range,
    classify_stability,
    phase_twin,
    polarization_threshold,
    relax,
    singlemode_intensities,
    singlemode_state,
    singlemode_states,
    state_at_bifurcation,
    state_near_bifurcation,
)
from .stokes import (
    PolSqueezeVerdict,
    PumpScanRow,
    StokesMeans,
    StokesVariances,
    bifurcation_stokes,
    classify_polarization,
    pump_scan,
    stokes_means,
    stokes_variance_spectra,
)

__version__ = "0.1.0"
