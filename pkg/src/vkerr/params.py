"""Model parameters and physical <-> normalized unit conversion.

All downstream modules work exclusively in normalized units: time in units
of 1/gamma, field amplitudes a_i = sqrt(g/gamma) alpha_i, pump amplitude
E = E0 * sqrt(g/gamma^3), frequencies in units of gamma.  Physical units
enter and leave only through :func:`normalize` / :func:`denormalize`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import InvalidParameterError

# Maker-Terhune coefficients for liquids (the default nonlinear medium).
LIQUID_A = 0.25
LIQUID_B = 1.5

_ISOTROPY_TOL = 1e-12


def _check_eta(eta):
    if eta not in (+1, -1):
        raise InvalidParameterError(f"eta must be +1 or -1, got {eta!r}")


@dataclass(frozen=True)
class PhysicalParams:
    """Cavity and medium parameters in physical (rad/s) units.

    Attributes
    ----------
    gamma : float
        Cavity amplitude loss rate (> 0); 2*gamma is the photon loss rate.
    g : float
        Nonlinear coupling rate (> 0).  Treated as a direct input.
    omega_c : float
        Bare cavity mode frequency.
    omega_0 : float
        Pump frequency.
    E0 : float
        Pump amplitude (real, >= 0).
    eta : int
        +1 self-focusing, -1 self-defocusing.
    a_mt, b_mt : float
        Maker-Terhune coefficients weighting cross-phase modulation and
        four-wave mixing.  Isotropic media satisfy a_mt + b_mt/2 = 1.
    isotropic : bool
        When set, the isotropy constraint is enforced on construction.
    """

    gamma: float
    g: float
    omega_c: float
    omega_0: float
    E0: float
    eta: int = +1
    a_mt: float = LIQUID_A
    b_mt: float = LIQUID_B
    isotropic: bool = True

    def __post_init__(self):
        if not self.gamma > 0:
            raise InvalidParameterError(f"gamma must be > 0, got {self.gamma}")
        if not self.g > 0:
            raise InvalidParameterError(f"g must be > 0, got {self.g}")
        if self.E0 < 0:
            raise InvalidParameterError(f"E0 must be >= 0, got {self.E0}")
        _check_eta(self.eta)
        if self.isotropic and abs(self.a_mt + self.b_mt / 2 - 1.0) > _ISOTROPY_TOL:
            raise InvalidParameterError(
                "isotropic medium requires a_mt + b_mt/2 = 1, got "
                f"{self.a_mt} + {self.b_mt}/2 = {self.a_mt + self.b_mt / 2}"
            )

    @property
    def omega_c_shifted(self):
        """Cavity frequency shifted by the vacuum-fluctuation contribution."""
        return self.omega_c - self.eta * self.g * (1.0 + self.a_mt / 2.0)


@dataclass(frozen=True)
class ModelParams:
    """Normalized system parameters (gamma = g = 1).

    ``delta`` is the detuning between the shifted cavity frequency and the
    pump, normalized by eta*gamma.  ``E`` is the pump amplitude; the pump
    intensity E^2 is what figures and scans are parametrized by.
    """

    delta: float
    eta: int = +1
    a_mt: float = LIQUID_A
    b_mt: float = LIQUID_B
    E: float = 0.0

    def __post_init__(self):
        _check_eta(self.eta)
        if self.E < 0:
            raise InvalidParameterError(f"E must be >= 0, got {self.E}")

    @property
    def E2(self):
        return self.E * self.E

    def with_pump(self, e2):
        """Copy of these parameters at pump intensity ``e2``."""
        if e2 < 0:
            raise InvalidParameterError(f"pump E^2 must be >= 0, got {e2}")
        return replace(self, E=math.sqrt(e2))

    @property
    def is_liquid(self):
        return (
            abs(self.a_mt - LIQUID_A) <= _ISOTROPY_TOL
            and abs(self.b_mt - LIQUID_B) <= _ISOTROPY_TOL
        )


def normalize(p: PhysicalParams) -> ModelParams:
    """Convert physical parameters to normalized ones.

    E = E0*sqrt(g/gamma^3) and delta = (omega_c_shifted - omega_0)/(eta*gamma).
    """
    delta = (p.omega_c_shifted - p.omega_0) / (p.eta * p.gamma)
    E = p.E0 * math.sqrt(p.g / p.gamma**3)
    return ModelParams(delta=delta, eta=p.eta, a_mt=p.a_mt, b_mt=p.b_mt, E=E)


def denormalize(m: ModelParams, gamma: float, g: float) -> PhysicalParams:
    """Reattach physical units to normalized parameters.

    The pump frequency is placed at omega_0 = 0; only the detuning is
    physical, so this choice is a pure gauge convention.  Round-trips
    through :func:`normalize` to machine precision.
    """
    if not gamma > 0:
        raise InvalidParameterError(f"gamma must be > 0, got {gamma}")
    if not g > 0:
        raise InvalidParameterError(f"g must be > 0, got {g}")
    omega_0 = 0.0
    omega_c = m.eta * gamma * m.delta + omega_0 + m.eta * g * (1.0 + m.a_mt / 2.0)
    E0 = m.E * math.sqrt(gamma**3 / g)
    isotropic = abs(m.a_mt + m.b_mt / 2 - 1.0) <= _ISOTROPY_TOL
    return PhysicalParams(
        gamma=gamma,
        g=g,
        omega_c=omega_c,
        omega_0=omega_0,
        E0=E0,
        eta=m.eta,
        a_mt=m.a_mt,
        b_mt=m.b_mt,
        isotropic=isotropic,
    )


def mirror(m: ModelParams) -> ModelParams:
    """Map to the conjugate-dynamics parameter point.

    Complex-conjugating both fields maps the self-focusing system onto the
    self-defocusing one: steady-state intensities are invariant and phases
    are negated.  Because the normalized detuning already carries a 1/eta,
    the involution flips ``eta`` and keeps ``delta`` (in terms of the raw,
    un-normalized detuning both signs flip).  ``mirror(mirror(m)) == m``.
    """
    return replace(m, eta=-m.eta)


# --- configuration mapping -------------------------------------------------
#
# Key-value schema (e.g. a JSON object):
#   delta   : float            normalized detuning            (required*)
#   eta     : +1 | -1          self-focusing sign             (default +1)
#   a_mt    : float            Maker-Terhune A                (default 0.25)
#   b_mt    : float            Maker-Terhune B                (default 1.5)
#   pump_E2 : float >= 0       pump intensity E^2             (default 0)
#   physical: {gamma, g, omega_c, omega_0, E0}   optional block
#
# (*) Either give the normalized keys, or give the `physical` block from
# which delta and pump are derived; mixing `physical` with `delta`/`pump_E2`
# is rejected as ambiguous.

_NORMALIZED_KEYS = {"delta", "eta", "a_mt", "b_mt", "pump_E2"}
_PHYSICAL_KEYS = {"gamma", "g", "omega_c", "omega_0", "E0"}


def from_config(cfg: dict) -> ModelParams:
    """Build :class:`ModelParams` from a configuration mapping."""
    if not isinstance(cfg, dict):
        raise InvalidParameterError("configuration must be a mapping")
    unknown = set(cfg) - _NORMALIZED_KEYS - {"physical"}
    if unknown:
        raise InvalidParameterError(f"unknown configuration keys: {sorted(unknown)}")

    if "physical" in cfg:
        overlap = (set(cfg) - {"eta", "a_mt", "b_mt"}) & _NORMALIZED_KEYS
        if overlap:
            raise InvalidParameterError(
                f"physical block conflicts with normalized keys {sorted(overlap)}"
            )
        block = cfg["physical"]
        if not isinstance(block, dict):
            raise InvalidParameterError("'physical' must be a mapping")
        unknown = set(block) - _PHYSICAL_KEYS
        if unknown:
            raise InvalidParameterError(f"unknown physical keys: {sorted(unknown)}")
        missing = _PHYSICAL_KEYS - set(block)
        if missing:
            raise InvalidParameterError(f"physical block missing keys: {sorted(missing)}")
        phys = PhysicalParams(
            gamma=float(block["gamma"]),
            g=float(block["g"]),
            omega_c=float(block["omega_c"]),
            omega_0=float(block["omega_0"]),
            E0=float(block["E0"]),
            eta=int(cfg.get("eta", +1)),
            a_mt=float(cfg.get("a_mt", LIQUID_A)),
            b_mt=float(cfg.get("b_mt", LIQUID_B)),
            isotropic=False,
        )
        return normalize(phys)

    if "delta" not in cfg:
        raise InvalidParameterError("configuration requires 'delta' (or a physical block)")
    m = ModelParams(
        delta=float(cfg["delta"]),
        eta=int(cfg.get("eta", +1)),
        a_mt=float(cfg.get("a_mt", LIQUID_A)),
        b_mt=float(cfg.get("b_mt", LIQUID_B)),
    )
    if "pump_E2" in cfg:
        m = m.with_pump(float(cfg["pump_E2"]))
    return m
