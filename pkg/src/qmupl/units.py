"""Physical parameters, derived model constants and the dimensionless scaling.

Every numerical routine in the package works in units where time is measured
in 1/omega and length in ell = sqrt(hbar / (m omega)).  In those units the free
particle model has hbar/m = 1 and lambda = 1/4 for *any* mass, so the SI layer
only enters at input/output.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import scipy.constants as const

HBAR = const.hbar
NUCLEON_MASS = const.m_p
ELECTRON_MASS = const.m_e
GRAM = 1e-3
EARTH_MASS = 5.972e24
LAMBDA0 = 1e-2  # m^-2 s^-1
DEFAULT_B = 10.0

PRESET_MASSES = {
    "electron": ELECTRON_MASS,
    "nucleon": NUCLEON_MASS,
    "gram": GRAM,
    "earth": EARTH_MASS,
}


class ParameterError(ValueError):
    """Raised for physically meaningless parameter values."""


@dataclass(frozen=True)
class ModelParams:
    m: float = NUCLEON_MASS
    m0: float = NUCLEON_MASS
    lambda0: float = LAMBDA0
    hbar: float = HBAR

    def __post_init__(self):
        for name in ("m", "m0", "lambda0", "hbar"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ParameterError(f"{name} must be positive and finite, got {value!r}")

    @classmethod
    def preset(cls, name: str, **overrides) -> "ModelParams":
        """Build parameters for a named particle (electron, nucleon, gram, earth)."""
        try:
            m = PRESET_MASSES[name]
        except KeyError:
            raise ParameterError(f"unknown preset {name!r}") from None
        return cls(m=m, **overrides)

    @classmethod
    def nucleons(cls, n: float, **overrides) -> "ModelParams":
        return cls(m=n * NUCLEON_MASS, **overrides)


@dataclass(frozen=True)
class DerivedConstants:
    """Model constants in SI units, see `derive_constants`."""

    params: ModelParams
    lam: float
    omega: float
    length_unit: float
    sigma_q_inf: float
    sigma_p_inf: float
    a_inf: complex
    energy_rate: float

    def lambda_cm(self, n_particles: float | None = None, total_mass: float | None = None) -> float:
        """Collapse rate of a centre of mass: (M/m0) lambda0.

        Either the number of constituents of mass m0 or the total mass M.
        """
        if (n_particles is None) == (total_mass is None):
            raise ParameterError("give exactly one of n_particles, total_mass")
        if n_particles is not None:
            return n_particles * self.params.lambda0
        return total_mass / self.params.m0 * self.params.lambda0


def derive_constants(p: ModelParams) -> DerivedConstants:
    lam = p.m / p.m0 * p.lambda0
    omega = 2.0 * math.sqrt(p.hbar * p.lambda0 / p.m0)
    ell = math.sqrt(p.hbar / (p.m * omega))
    return DerivedConstants(
        params=p,
        lam=lam,
        omega=omega,
        length_unit=ell,
        sigma_q_inf=ell,
        sigma_p_inf=math.sqrt(p.hbar * p.m * omega / 2.0),
        a_inf=complex(lam / omega, -lam / omega),
        energy_rate=p.lambda0 * p.hbar**2 / (2.0 * p.m0),
    )


@dataclass(frozen=True)
class Coefficients:
    """Coefficients of the dynamics as seen by the numerics.

    Defaults are the dimensionless values valid for every mass.  Tests use
    ``lam=0`` for the pure Schroedinger limit.
    """

    lam: float = 0.25
    hbar_m: float = 1.0

    def __post_init__(self):
        if self.lam < 0 or self.hbar_m <= 0:
            raise ParameterError("need lam >= 0 and hbar_m > 0")

    @property
    def omega(self) -> float:
        return 2.0 * math.sqrt(self.hbar_m * self.lam)

    @property
    def riccati_c(self) -> complex:
        # stationary width parameter; equals (lam/omega)(1 - i)
        return complex(1.0, -1.0) * 0.5 * math.sqrt(self.lam / self.hbar_m)

    @property
    def a_inf(self) -> complex:
        return self.riccati_c

    @property
    def sigma_q_inf(self) -> float:
        return 0.5 / math.sqrt(self.a_inf.real)


DIMLESS = Coefficients()


# unit of each kind of quantity, as a function of (time unit, length unit, hbar)
_UNIT = {
    "t": lambda T, L, h: T,
    "x": lambda T, L, h: L,
    "sigma_q": lambda T, L, h: L,
    "k": lambda T, L, h: 1.0 / L,
    "p": lambda T, L, h: h / L,
    "sigma_p": lambda T, L, h: h / L,
    "a": lambda T, L, h: 1.0 / L**2,
    "gamma": lambda T, L, h: 1.0,
    "lambda": lambda T, L, h: 1.0 / (L**2 * T),
    "C_q2": lambda T, L, h: L**2,
    "C_qp": lambda T, L, h: h,
    "C_p2": lambda T, L, h: (h / L) ** 2,
    "energy": lambda T, L, h: h / T,
    "power": lambda T, L, h: h / T**2,
    "diffusion": lambda T, L, h: L**2 / T,
}


@dataclass(frozen=True)
class Scale:
    """SI <-> dimensionless conversion for one particle."""

    constants: DerivedConstants
    time_unit: float = field(init=False)
    length_unit: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "time_unit", 1.0 / self.constants.omega)
        object.__setattr__(self, "length_unit", self.constants.length_unit)

    @classmethod
    def for_params(cls, p: ModelParams) -> "Scale":
        return cls(derive_constants(p))

    def unit(self, kind: str) -> float:
        try:
            f = _UNIT[kind]
        except KeyError:
            raise ParameterError(f"unknown quantity kind {kind!r}") from None
        return f(self.time_unit, self.length_unit, self.constants.params.hbar)

    def to_dimless(self, kind: str, value):
        return value / self.unit(kind)

    def to_si(self, kind: str, value):
        return value * self.unit(kind)

    def coefficients(self) -> Coefficients:
        c = self.constants
        return Coefficients(
            lam=self.to_dimless("lambda", c.lam),
            hbar_m=c.params.hbar / c.params.m * self.time_unit / self.length_unit**2,
        )


def macro_micro_estimates(p: ModelParams, X0: float, b: float = DEFAULT_B) -> dict:
    """Order-of-magnitude figures for a particle in a superposition of width X0.

    E_Tb: mean suppression time b / (lambda X0^2), taking X_t ~ X0.
    fluct_rate: stationary lower bound lambda / (4 a_inf_R^2) of d/dt V[<q>].
    """
    if not X0 > 0:
        raise ParameterError("X0 must be positive: no superposition otherwise")
    c = derive_constants(p)
    return {
        "E_Tb": b / (c.lam * X0**2),
        "sigma_q_inf": c.sigma_q_inf,
        "fluct_rate": c.lam / (4.0 * c.a_inf.real**2),
    }


def fluctuation_damping(c: DerivedConstants, t: float) -> dict:
    """Variances of <q> and <p> for a centre of mass already at the stationary spread.

    The position variance is the exact solution of the covariance ODEs with
    stationary a and zero initial covariance.
    """
    if t < 0:
        raise ParameterError("t must be non-negative")
    wt = c.omega * t
    prefactor = c.omega / (8.0 * c.lam)
    return {
        "V_q": prefactor * (wt**3 / 6.0 + wt**2 + 2.0 * wt),
        "V_p": c.lam * c.params.hbar**2 * t,
        "prefactor": prefactor,
        "assumption": "stationary spread: a_t = a_inf for all t",
    }
