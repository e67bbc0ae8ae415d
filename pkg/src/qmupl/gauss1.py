"""Single-Gaussian solutions.

The wavefunction is exp[-a (x - x_bar)^2 + i k_bar x + gamma].  The width
parameter a evolves deterministically by a Riccati equation and is always
taken from its closed form; only x_bar, k_bar and gamma are discretized.

All functions work in dimensionless units (see `units.Coefficients`).
Momenta are wavenumbers: p = hbar k.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .units import DIMLESS, Coefficients, ParameterError


def _tanh(z):
    """Complex tanh that does not overflow for large |Re z|."""
    z = np.asarray(z, dtype=complex)
    sign = np.where(z.real < 0, -1.0, 1.0)
    w = np.exp(-2.0 * z * sign)
    return sign * (1.0 - w) / (1.0 + w)


def _check_a0(a0):
    if np.any(np.real(a0) <= 0):
        raise ParameterError("Re a0 must be positive")


def a_exact(t, a0: complex, coef: Coefficients = DIMLESS):
    """Width parameter a_t solving da = [lam - 2i (hbar/m) a^2] dt.

    Evaluated as c tanh(b t + k) through the addition formula for tanh, so no
    inverse tanh (and no branch choice) is needed; finite for every t >= 0.
    """
    _check_a0(a0)
    t = np.asarray(t, dtype=float)
    a0 = complex(a0)
    if coef.lam == 0.0:
        return a0 / (1.0 + 2j * coef.hbar_m * a0 * t)
    c = coef.riccati_c
    b = complex(1.0, 1.0) * math.sqrt(coef.hbar_m * coef.lam)
    r = a0 / c
    T = _tanh(b * t)
    return c * (T + r) / (1.0 + r * T)


@dataclass(frozen=True)
class RiccatiClosedForm:
    c: complex
    b: complex
    k: complex

    @property
    def phi1(self) -> float:
        return 2.0 * self.k.real

    @property
    def phi2(self) -> float:
        return 2.0 * self.k.imag


def riccati_closed_form(a0: complex, coef: Coefficients = DIMLESS) -> RiccatiClosedForm:
    """Constants of a_t = c tanh(b t + k), with k = artanh(a0/c) on the principal branch."""
    _check_a0(a0)
    if coef.lam == 0.0:
        raise ParameterError("closed form needs lam > 0")
    c = coef.riccati_c
    b = complex(1.0, 1.0) * math.sqrt(coef.hbar_m * coef.lam)
    with np.errstate(divide="ignore", invalid="ignore"):
        k = complex(np.arctanh(complex(a0) / c))
    return RiccatiClosedForm(c=c, b=b, k=k)


def _phases(t, form: RiccatiClosedForm, coef: Coefficients):
    wt = coef.omega * np.asarray(t, dtype=float)
    return wt + form.phi1, wt + form.phi2


def a_phase_form(t, form: RiccatiClosedForm, coef: Coefficients = DIMLESS):
    """Real and imaginary parts of a_t written with the phases phi1, phi2.

    Returns nan where cosh(u) + cos(v) vanishes (removable singularity).
    Numerator and denominator are divided by cosh(u) to stay finite.
    """
    u, v = _phases(t, form, coef)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        sech = 1.0 / np.cosh(u)
        th = np.tanh(u)
        den = 1.0 + np.cos(v) * sech
        scale = coef.lam / coef.omega
        re = scale * (th + np.sin(v) * sech) / den
        im = -scale * (th - np.sin(v) * sech) / den
        bad = np.abs(den) <= 1e-12
    return np.where(bad, np.nan, re), np.where(bad, np.nan, im)


def spreads(t, a0: complex, coef: Coefficients = DIMLESS):
    """(sigma_q, sigma_p) from a_t; sigma_p in units of hbar/length."""
    a = a_exact(t, a0, coef)
    return 0.5 / np.sqrt(a.real), np.sqrt(np.abs(a) ** 2 / a.real)


def spreads_phase_form(t, form: RiccatiClosedForm, coef: Coefficients = DIMLESS):
    """Spreads written with hyperbolic and circular functions of the phases."""
    u, v = _phases(t, form, coef)
    with np.errstate(over="ignore", invalid="ignore"):
        sech = 1.0 / np.cosh(u)
        den = np.tanh(u) + np.sin(v) * sech
        sq = np.sqrt(coef.hbar_m / coef.omega) * np.sqrt((1.0 + np.cos(v) * sech) / den)
        sp = np.sqrt(coef.omega / (2.0 * coef.hbar_m)) * np.sqrt((1.0 - np.cos(v) * sech) / den)
    return sq, sp


def schroedinger_sigma_q(t, sigma0: float, hbar_m: float):
    """Free spreading of an unchirped Gaussian of initial spread sigma0."""
    t = np.asarray(t, dtype=float)
    return sigma0 * np.sqrt(1.0 + (hbar_m * t / (2.0 * sigma0**2)) ** 2)


@dataclass(frozen=True)
class GaussianState:
    a: complex
    x_bar: float
    k_bar: float
    gamma: complex = 0j
    t: float = 0.0

    def __post_init__(self):
        if not np.real(self.a) > 0:
            raise ParameterError("Re a must be positive")

    def norm_squared(self) -> float:
        return math.exp(2.0 * self.gamma.real) * math.sqrt(math.pi / (2.0 * self.a.real))

    def amplitude(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(-self.a * (x - self.x_bar) ** 2 + 1j * self.k_bar * x + self.gamma)


def normalized_gamma(a: complex) -> float:
    """gamma_R making the Gaussian of width parameter a unit-normalized."""
    return 0.25 * math.log(2.0 * a.real / math.pi)


def step_means(state: GaussianState, dW: float, dt: float, coef: Coefficients = DIMLESS) -> GaussianState:
    """One Euler-Maruyama step of the peak position and wavenumber (physical noise)."""
    if not dt > 0:
        raise ParameterError("dt must be positive")
    a = state.a
    sl = math.sqrt(coef.lam)
    x = state.x_bar + coef.hbar_m * state.k_bar * dt + sl / (2.0 * a.real) * dW
    k = state.k_bar - sl * a.imag / a.real * dW
    a_next = complex(a_exact(dt, a, coef))
    return replace(state, a=a_next, x_bar=x, k_bar=k, t=state.t + dt)


def gamma_step(state: GaussianState, d_xi, dt: float, coef: Coefficients = DIMLESS) -> complex:
    """Increment gamma over one step of the linear equation driven by d_xi.

    Drifts include the lam/(4 a_R) and lam a_I/(4 a_R^2) terms coming from the
    Ito correction of a x_bar^2.
    """
    a, x, k = state.a, state.x_bar, state.k_bar
    sl = math.sqrt(coef.lam)
    shifted = d_xi - 2.0 * sl * x * dt
    d_re = (coef.lam * x**2 + coef.hbar_m * a.imag + coef.lam / (4.0 * a.real)) * dt + sl * x * shifted
    d_im = (
        (-coef.hbar_m * a.real - 0.5 * coef.hbar_m * k**2 + coef.lam * a.imag / (4.0 * a.real**2)) * dt
        + sl * a.imag / a.real * x * shifted
    )
    return state.gamma + d_re + 1j * d_im


@dataclass
class MeanPaths:
    """Recorded histories of an ensemble of single-Gaussian paths."""

    t: np.ndarray
    a: np.ndarray
    x_bar: np.ndarray  # (n_paths, n_record)
    k_bar: np.ndarray
    gamma: np.ndarray | None = None


def simulate_means(a0: complex, x0, k0, dW: np.ndarray, dt: float, coef: Coefficients = DIMLESS,
                   record_every: int = 1, measure: str = "P", gamma0=None) -> MeanPaths:
    """Vectorized Euler-Maruyama over paths (rows of dW).

    measure="P": physical noise, gamma not tracked (it only fixes the norm).
    measure="Q": dW is read as the linear-equation noise xi; gamma is tracked
    so that the unnormalized norm e^{2 gamma_R} sqrt(pi / 2 a_R) is available.
    """
    _check_a0(a0)
    if measure not in ("P", "Q"):
        raise ParameterError("measure must be 'P' or 'Q'")
    dW = np.atleast_2d(dW)
    n_paths, n_steps = dW.shape
    if n_steps % record_every:
        raise ParameterError("record_every must divide the number of steps")
    t_grid = np.arange(n_steps + 1) * dt
    a = a_exact(t_grid, a0, coef)
    sl = math.sqrt(coef.lam)
    x = np.full(n_paths, float(x0))
    k = np.full(n_paths, float(k0))
    track = measure == "Q"
    g = np.full(n_paths, complex(normalized_gamma(complex(a0)) if gamma0 is None else gamma0))
    n_rec = n_steps // record_every + 1
    xs = np.empty((n_paths, n_rec))
    ks = np.empty((n_paths, n_rec))
    gs = np.empty((n_paths, n_rec), dtype=complex) if track else None
    xs[:, 0], ks[:, 0] = x, k
    if track:
        gs[:, 0] = g
    for n in range(n_steps):
        an = a[n]
        ar, ai = an.real, an.imag
        dw = dW[:, n]
        if track:
            shifted = dw - 2.0 * sl * x * dt
            g = g + (
                (coef.lam * x**2 + coef.hbar_m * ai + coef.lam / (4.0 * ar)) * dt + sl * x * shifted
                + 1j * ((-coef.hbar_m * ar - 0.5 * coef.hbar_m * k**2 + coef.lam * ai / (4.0 * ar**2)) * dt
                        + sl * ai / ar * x * shifted)
            )
        else:
            shifted = dw
        x, k = (x + coef.hbar_m * k * dt + sl / (2.0 * ar) * shifted,
                k - sl * ai / ar * shifted)
        if (n + 1) % record_every == 0:
            j = (n + 1) // record_every
            xs[:, j], ks[:, j] = x, k
            if track:
                gs[:, j] = g
    return MeanPaths(t=t_grid[::record_every], a=a[::record_every], x_bar=xs, k_bar=ks, gamma=gs)


def norm_squared(gamma_re, a_re):
    return np.exp(2.0 * np.asarray(gamma_re)) * np.sqrt(np.pi / (2.0 * np.asarray(a_re)))


@dataclass(frozen=True)
class CovarianceState:
    """Covariances of (<q>, <p>) with p = hbar k, in dimensionless units."""

    t: np.ndarray
    C_q2: np.ndarray
    C_qp: np.ndarray
    C_p2: np.ndarray


def _cov_rhs(a, C, coef: Coefficients):
    cq2, cqp, cp2 = C
    ar, ai = a.real, a.imag
    lam, hm = coef.lam, coef.hbar_m
    return np.array([
        2.0 * hm * cqp + lam / (4.0 * ar**2),
        hm * cp2 - 0.5 * lam * ai / ar**2,
        lam * (ai / ar) ** 2,
    ])


def covariance_evolution(t, a0: complex, coef: Coefficients = DIMLESS, h: float = 1e-3) -> CovarianceState:
    """RK4 integration of the covariance ODEs from C(0) = 0, reported at times t."""
    _check_a0(a0)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(np.diff(t) < 0) or t[0] < 0:
        raise ParameterError("times must be non-negative and sorted")
    out = np.zeros((len(t), 3))
    C = np.zeros(3)
    now = 0.0
    for i, target in enumerate(t):
        span = target - now
        n = max(1, int(math.ceil(span / h))) if span > 0 else 0
        if n:
            step = span / n
            for _ in range(n):
                a1 = complex(a_exact(now, a0, coef))
                a2 = complex(a_exact(now + 0.5 * step, a0, coef))
                a3 = complex(a_exact(now + step, a0, coef))
                k1 = _cov_rhs(a1, C, coef)
                k2 = _cov_rhs(a2, C + 0.5 * step * k1, coef)
                k3 = _cov_rhs(a2, C + 0.5 * step * k2, coef)
                k4 = _cov_rhs(a3, C + step * k3, coef)
                C = C + step / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
                now += step
        now = target
        out[i] = C
    return CovarianceState(t=t, C_q2=out[:, 0], C_qp=out[:, 1], C_p2=out[:, 2])


def stationary_covariance(t, coef: Coefficients = DIMLESS) -> CovarianceState:
    """Closed-form covariances when a_t = a_inf throughout."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    lam, hm, w = coef.lam, coef.hbar_m, coef.omega
    cp2 = lam * t
    cqp = hm * lam * t**2 / 2.0 + w * t / 2.0
    cq2 = hm**2 * lam * t**3 / 3.0 + hm * w * t**2 / 2.0 + w**2 * t / (4.0 * lam)
    return CovarianceState(t=t, C_q2=cq2, C_qp=cqp, C_p2=cp2)


def energy_law(t, k_bar: np.ndarray, a0: complex, coef: Coefficients = DIMLESS) -> dict:
    """Energy growth rate: analytic lam hbar^2 / 2m against the Monte Carlo slope.

    Energies are in units of hbar omega (with omega = 1 in the default units),
    so the analytic dimensionless rate is lam * hbar_m / 2.
    k_bar holds wavenumber histories (n_paths, len(t)) generated with a0 = a_inf.
    """
    k_bar = np.atleast_2d(k_bar)
    n = k_bar.shape[0]
    if n < 100:
        warnings.warn(f"energy slope from only {n} paths", RuntimeWarning, stacklevel=2)
    a = a_exact(t, a0, coef)
    sigma_k2 = np.abs(a) ** 2 / a.real
    H = 0.5 * coef.hbar_m * (k_bar**2 + sigma_k2)
    EH = H.mean(axis=0)
    slope, intercept = np.polyfit(np.asarray(t, dtype=float), EH, 1)
    return {"rate_analytic": 0.5 * coef.lam * coef.hbar_m, "rate_mc": float(slope), "mean_energy": EH}
