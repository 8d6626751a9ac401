"""Exception types shared across the package."""


class VKerrError(Exception):
    """Base class for all vkerr errors."""


class InvalidParameterError(VKerrError, ValueError):
    """A model or configuration parameter is out of its admissible range."""


class NoThresholdError(VKerrError):
    """The polarization instability does not exist for these parameters.

    The pump needed to switch on the orthogonal mode diverges as the
    four-wave-mixing coefficient goes to zero.
    """


class InternalInconsistencyError(VKerrError):
    """A state failed its defining residual check; indicates a solver bug."""


class NonConvergenceError(VKerrError):
    """A time integration did not settle within the allotted time."""


class NearSingularError(VKerrError):
    """Spectral matrix requested too close to a bifurcation.

    Carries the frequency and the parameter point so callers can retry at an
    offset operating point.
    """

    def __init__(self, message, omega=None, params=None):
        super().__init__(message)
        self.omega = omega
        self.params = params


class NumericalConsistencyError(VKerrError):
    """A quantity that must be real came out with a large imaginary part."""


class LimitRequiredError(VKerrError):
    """Closed-form expression evaluated exactly at a point where it is 0/0.

    The physical statement is a limit; evaluate at a small offset instead.
    """


class DegenerateBlockError(VKerrError):
    """Diffusion block cannot be factorized (vanishing diagonal, nonzero coupling)."""


class InsufficientDataError(VKerrError):
    """Not enough data segments for a meaningful spectral estimate."""


class UnreliableRegimeError(VKerrError):
    """Too many simulated trajectories diverged to trust ensemble averages."""
