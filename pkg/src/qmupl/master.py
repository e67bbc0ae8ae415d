"""Ensemble-averaged dynamics: the position density of the statistical operator.

The diagonal of the averaged state is the pure Schroedinger density convolved
with a Gaussian of variance 1/(2 alpha_t), alpha_t = 3 m0 m / (2 hbar^2 lambda0 t^3).
Functions accept either SI `DerivedConstants` or dimensionless `Coefficients`;
the grid and time must be in the matching units.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import fft

from .units import DIMLESS, Coefficients, DerivedConstants, ParameterError

RESOLVED = "resolved"
DELTA = "delta"


class RefinementError(ParameterError):
    """Smoothing width neither resolved nor negligible on the grid."""


@dataclass
class DensityProfile:
    x: np.ndarray
    values: np.ndarray
    t: float = 0.0
    regime: str = RESOLVED

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.x.shape != self.values.shape or self.x.ndim != 1:
            raise ParameterError("x and values must be equal-length 1-d arrays")

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    def integral(self) -> float:
        return float(np.trapezoid(self.values, self.x))

    def normalized(self) -> "DensityProfile":
        return DensityProfile(self.x, self.values / self.integral(), self.t, self.regime)


@dataclass(frozen=True)
class KernelEvaluation:
    lam: float
    m: float
    t: float
    alpha_t: float


def _lam_inv_m(c) -> tuple[float, float]:
    """(lambda, 1/m) in the units of c; for dimensionless coefficients p = k so 1/m -> hbar/m."""
    if isinstance(c, DerivedConstants):
        return c.lam, 1.0 / c.params.m
    if isinstance(c, Coefficients):
        return c.lam, c.hbar_m
    raise ParameterError("expected DerivedConstants or Coefficients")


def kernel_F(p, x, t, c=DIMLESS):
    """exp[-(lam/2) t (x^2 - (p/m) x t + (p/m)^2 t^2 / 3)], a number in (0, 1]."""
    if np.any(np.asarray(t) < 0):
        raise ParameterError("t must be non-negative")
    lam, inv_m = _lam_inv_m(c)
    v = np.asarray(p) * inv_m
    x = np.asarray(x)
    return np.exp(-0.5 * lam * t * (x**2 - v * x * t + v**2 * t**2 / 3.0))


def alpha(c, t: float) -> float:
    if not t > 0:
        raise ParameterError("alpha_t needs t > 0")
    if isinstance(c, DerivedConstants):
        p = c.params
        return 3.0 * p.m0 * p.m / (2.0 * p.hbar**2 * p.lambda0 * t**3)
    if isinstance(c, Coefficients):
        if c.lam == 0:
            return math.inf
        return 3.0 / (2.0 * c.hbar_m**2 * c.lam * t**3)
    raise ParameterError("expected DerivedConstants or Coefficients")


def kernel_evaluation(c, t: float) -> KernelEvaluation:
    lam, inv_m = _lam_inv_m(c)
    return KernelEvaluation(lam=lam, m=1.0 / inv_m, t=t, alpha_t=alpha(c, t))


def density_convolve(pS: DensityProfile, t: float, c=DIMLESS) -> DensityProfile:
    """Gaussian smoothing of the Schroedinger density, done spectrally on the periodic grid.

    A smoothing scale 1/sqrt(alpha_t) below dx/10 returns pS unchanged with the
    delta-regime flag; between dx/10 and dx the grid must be refined.
    """
    x = pS.x
    h = np.diff(x)
    if not np.allclose(h, h[0], rtol=1e-9, atol=0.0):
        raise ParameterError("density grid must be uniform")
    if abs(pS.integral() - 1.0) > 1e-6:
        raise ParameterError("input density is not normalized")
    dx = h[0]
    if t == 0:
        return DensityProfile(x, pS.values.copy(), t, DELTA)
    a = alpha(c, t)
    width = 1.0 / math.sqrt(a)
    if width < dx / 10:
        return DensityProfile(x, pS.values.copy(), t, DELTA)
    if width < dx:
        raise RefinementError(f"smoothing width {width:.3g} unresolved on dx={dx:.3g}; refine the grid")
    k = 2.0 * np.pi * fft.fftfreq(len(x), d=dx)
    out = fft.irfft(fft.rfft(pS.values) * np.exp(-k[: len(x) // 2 + 1] ** 2 / (4.0 * a)), n=len(x))
    out = np.clip(out, 0.0, None)
    return DensityProfile(x, out, t, RESOLVED).normalized()


def free_gaussian_density(x, t: float, a0: complex, x0: float = 0.0, k0: float = 0.0,
                          hbar_m: float = 1.0) -> DensityProfile:
    """|psi_t|^2 of a freely evolving Gaussian exp(-a0 (x - x0)^2 + i k0 x)."""
    if not np.real(a0) > 0:
        raise ParameterError("Re a0 must be positive")
    a_t = a0 / (1.0 + 2j * hbar_m * a0 * t)
    var = 1.0 / (4.0 * a_t.real)
    mean = x0 + hbar_m * k0 * t
    x = np.asarray(x, dtype=float)
    vals = np.exp(-((x - mean) ** 2) / (2.0 * var)) / math.sqrt(2.0 * math.pi * var)
    return DensityProfile(x, vals, t)


def pure_schrodinger_density(x, t: float, initial, hbar_m: float = 1.0) -> DensityProfile:
    """Free-particle density at time t.

    `initial` is either a tuple (a0, x0, k0) for a Gaussian (closed form) or an
    array of initial amplitudes on the uniform periodic grid x (exact spectral
    propagation, no time stepping).
    """
    if isinstance(initial, tuple):
        return free_gaussian_density(x, t, *initial, hbar_m=hbar_m).normalized()
    x = np.asarray(x, dtype=float)
    psi0 = np.asarray(initial, dtype=complex)
    if psi0.shape != x.shape:
        raise ParameterError("initial amplitudes must match the grid")
    dx = x[1] - x[0]
    k = 2.0 * np.pi * fft.fftfreq(len(x), d=dx)
    psi = fft.ifft(fft.fft(psi0) * np.exp(-0.5j * hbar_m * k**2 * t))
    return DensityProfile(x, np.abs(psi) ** 2, t).normalized()


def measure_mu(p: DensityProfile, interval) -> float:
    """Integral of the density over [lo, hi], trapezoidal with interpolated ends."""
    lo, hi = interval
    if lo > hi:
        raise ParameterError("interval must satisfy lo <= hi")
    if lo < p.x[0] - 1e-12 * abs(p.x[0]) or hi > p.x[-1] + 1e-12 * abs(p.x[-1]):
        raise ParameterError(f"interval {interval} outside grid [{p.x[0]}, {p.x[-1]}]")
    inner = (p.x > lo) & (p.x < hi)
    xs = np.concatenate([[lo], p.x[inner], [hi]])
    ys = np.interp(xs, p.x, p.values)
    return float(np.trapezoid(ys, xs))


def l1_distance(p1: DensityProfile, p2: DensityProfile) -> float:
    if p1.x.shape != p2.x.shape or not np.allclose(p1.x, p2.x):
        raise ParameterError("profiles live on different grids")
    return float(np.trapezoid(np.abs(p1.values - p2.values), p1.x))


def write_density_csv(path, *profiles: DensityProfile, names=None):
    """Columns x followed by one density per profile."""
    names = names or [f"p{i}" for i in range(len(profiles))]
    x = profiles[0].x
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", *names])
        for i, xi in enumerate(x):
            w.writerow([repr(float(xi)), *(repr(float(p.values[i])) for p in profiles)])
    return path
