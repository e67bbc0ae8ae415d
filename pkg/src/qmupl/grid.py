"""Split-step solver for the nonlinear collapse equation on a periodic grid.

Each step is kinetic half-step, collapse factor, kinetic half-step,
renormalization.  The collapse factor

    exp[ sqrt(lam) (x - <q>) dW - lam (x - <q>)^2 dt ]

is the exact solution of the position part with <q> frozen (the extra
-lam/2 over the Ito drift is the Ito correction of the exponent).  Arrays carry
an optional leading batch axis, one row per path.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import fft

from .stochastic import WienerPath, girsanov_shift
from .units import DIMLESS, Coefficients, ParameterError

log = logging.getLogger(__name__)

EDGE_TOL = 1e-8


class ContainmentError(RuntimeError):
    """The wavefunction reached the edge of the periodic domain."""


@dataclass
class WaveGrid:
    n_points: int
    L: float
    amplitudes: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        n = self.n_points
        if n < 8 or n & (n - 1):
            raise ParameterError("n_points must be a power of two")
        if not self.L > 0:
            raise ParameterError("extent must be positive")
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape[-1] != n:
            raise ParameterError("amplitude array does not match n_points")

    @property
    def dx(self) -> float:
        return self.L / self.n_points

    @property
    def x(self) -> np.ndarray:
        return grid_x(self.n_points, self.L)

    @property
    def k(self) -> np.ndarray:
        return grid_k(self.n_points, self.L)

    def norm2(self):
        return np.sum(np.abs(self.amplitudes) ** 2, axis=-1) * self.dx

    def normalized(self) -> "WaveGrid":
        amp = self.amplitudes / np.sqrt(self.norm2())[..., None]
        return WaveGrid(self.n_points, self.L, amp, self.t)


def grid_x(n: int, L: float) -> np.ndarray:
    return -L / 2 + np.arange(n) * (L / n)


def grid_k(n: int, L: float) -> np.ndarray:
    return 2.0 * np.pi * fft.fftfreq(n, d=L / n)


def from_function(f, n_points: int = 1024, L: float = 40.0) -> WaveGrid:
    """Sample f on the grid and normalize."""
    x = grid_x(n_points, L)
    return WaveGrid(n_points, L, f(x)).normalized()


def gaussian_wave(a: complex, x_bar: float = 0.0, k_bar: float = 0.0, n_points: int = 1024,
                  L: float = 40.0) -> WaveGrid:
    return from_function(lambda x: np.exp(-a * (x - x_bar) ** 2 + 1j * k_bar * x), n_points, L)


def check_containment(amp: np.ndarray, t: float = 0.0, tol: float = EDGE_TOL):
    a = np.abs(np.atleast_2d(amp))
    edge = np.maximum(a[:, 0], a[:, -1])
    peak = a.max(axis=1)
    bad = edge > tol * peak
    if bad.any():
        rows = np.flatnonzero(bad)
        raise ContainmentError(
            f"wavefunction touches the domain edge at t={t:.6g} on paths {rows[:5].tolist()}: "
            f"edge/peak={float((edge / peak)[rows[0]]):.2e}; enlarge L"
        )


def moments(amp: np.ndarray, n_points: int, L: float) -> dict:
    """Position moments by quadrature and wavenumber moments spectrally.

    Returns <q>, Delta q, <k>, Delta k and the symmetrized covariance
    Re <(q - <q>)(k - <k>)>.  amp is assumed normalized.
    """
    amp = np.asarray(amp, dtype=complex)
    x = grid_x(n_points, L)
    k = grid_k(n_points, L)
    dx = L / n_points
    P = np.abs(amp) ** 2 * dx
    q = np.sum(P * x, axis=-1)
    dq = np.sum(P * (x - q[..., None]) ** 2, axis=-1)
    spec = fft.fft(amp, axis=-1)
    Pk = np.abs(spec) ** 2
    Pk = Pk / Pk.sum(axis=-1, keepdims=True)
    kb = np.sum(Pk * k, axis=-1)
    dk = np.sum(Pk * (k - kb[..., None]) ** 2, axis=-1)
    k_psi = fft.ifft(spec * (k - kb[..., None]), axis=-1)
    sigma = np.real(np.sum(np.conj(amp) * (x - q[..., None]) * k_psi, axis=-1)) * dx
    return {"q": q, "delta_q": dq, "k": kb, "delta_k": dk, "sigma_qk": sigma}


@dataclass(frozen=True)
class DeltaADiagnostic:
    """Variance of A = q + (i - 1) p / (m omega) and its parts (dimensionless units)."""

    delta_q: np.ndarray
    delta_p: np.ndarray
    sigma_qp: np.ndarray
    delta_A: np.ndarray


def delta_A_from_moments(mom: dict, coef: Coefficients = DIMLESS) -> DeltaADiagnostic:
    if coef.lam == 0:
        raise ParameterError("A is defined through omega; needs lam > 0")
    r = coef.hbar_m / coef.omega
    dA = mom["delta_q"] + 2.0 * r**2 * mom["delta_k"] - 2.0 * r * mom["sigma_qk"] - r
    return DeltaADiagnostic(delta_q=mom["delta_q"], delta_p=mom["delta_k"], sigma_qp=mom["sigma_qk"], delta_A=dA)


def delta_A(psi: WaveGrid, coef: Coefficients = DIMLESS) -> DeltaADiagnostic:
    return delta_A_from_moments(moments(psi.normalized().amplitudes, psi.n_points, psi.L), coef)


def interval_probability(psi_or_density, interval, n_points: int | None = None, L: float | None = None) -> np.ndarray:
    """Probability on [lo, hi]: sum of |psi|^2 dx (or of a density) over grid points inside.

    Accepts a WaveGrid, or a density array together with n_points and L.
    """
    if isinstance(psi_or_density, WaveGrid):
        n_points, L = psi_or_density.n_points, psi_or_density.L
        dens = np.abs(psi_or_density.amplitudes) ** 2
    else:
        if n_points is None or L is None:
            raise ParameterError("density input needs n_points and L")
        dens = np.asarray(psi_or_density, dtype=float)
    lo, hi = interval
    x = grid_x(n_points, L)
    if lo < x[0] - 1e-12 or hi > x[-1] + L / n_points + 1e-12 or lo > hi:
        raise ParameterError(f"interval {interval} outside domain [{x[0]}, {x[0] + L})")
    inside = (x >= lo) & (x <= hi)
    return np.sum(dens[..., inside], axis=-1) * (L / n_points)


@dataclass
class GridTrajectory:
    t: np.ndarray
    q: np.ndarray            # (batch, n_record)
    k: np.ndarray
    sigma_q: np.ndarray
    sigma_k: np.ndarray
    delta_A: np.ndarray | None
    states: list = field(default_factory=list)  # amplitude arrays at the recorded times
    max_norm_drift: float = 0.0
    n_points: int = 0
    L: float = 0.0

    def state(self, j: int, row: int = 0) -> WaveGrid:
        amp = self.states[j]
        amp = amp[row] if amp.ndim == 2 else amp
        return WaveGrid(self.n_points, self.L, amp, float(self.t[j]))


@dataclass
class LinearRecord:
    log_norm2: np.ndarray    # (batch, n_record): log ||phi_t||^2
    q_steps: np.ndarray      # (batch, n_steps): <q> used at each collapse factor
    shifted: np.ndarray      # (batch, n_steps): dW = dxi - 2 sqrt(lam) <q> dt


def _validate_step(n: int, L: float, dt: float, coef: Coefficients):
    if not dt > 0:
        raise ParameterError("dt must be positive")
    collapse = coef.lam * (L / 2) ** 2 * dt
    if collapse > 1.0:
        raise ParameterError(f"dt too large for the collapse scale: lam (L/2)^2 dt = {collapse:.3g} > 1")
    kmax = np.pi * n / L
    phase = 0.5 * coef.hbar_m * kmax**2 * dt
    if phase > np.pi:
        log.warning("kinetic phase per step %.3g exceeds pi at the grid cutoff", phase)


def _increments(path) -> np.ndarray:
    inc = path.increments if isinstance(path, WienerPath) else np.asarray(path, dtype=float)
    return np.atleast_2d(inc)


def _run(psi0: WaveGrid, dW: np.ndarray, dt: float, coef: Coefficients, linear: bool,
         record_every: int, keep_states: bool, with_delta_A: bool, check_every: int):
    n, L = psi0.n_points, psi0.L
    _validate_step(n, L, dt, coef)
    batch, n_steps = dW.shape
    if n_steps % record_every:
        raise ParameterError("record_every must divide the number of steps")
    x = grid_x(n, L)
    k = grid_k(n, L)
    dx = L / n
    half = np.exp(-0.25j * coef.hbar_m * k**2 * dt)
    full = half * half
    sl = math.sqrt(coef.lam)

    amp0 = np.broadcast_to(psi0.amplitudes, (batch, n))
    nrm = np.sqrt(np.sum(np.abs(amp0) ** 2, axis=-1) * dx)
    psi = amp0 / nrm[:, None]
    check_containment(psi, 0.0)
    log_norm = np.zeros(batch)

    n_rec = n_steps // record_every + 1
    rec = {name: np.empty((batch, n_rec)) for name in ("q", "k", "sigma_q", "sigma_k")}
    dA = np.empty((batch, n_rec)) if with_delta_A else None
    lognorm_rec = np.zeros((batch, n_rec))
    states = []
    q_steps = np.empty((batch, n_steps)) if linear else None
    shifted = np.empty((batch, n_steps)) if linear else None

    def record(j, amp):
        mom = moments(amp, n, L)
        rec["q"][:, j], rec["k"][:, j] = mom["q"], mom["k"]
        rec["sigma_q"][:, j], rec["sigma_k"][:, j] = np.sqrt(mom["delta_q"]), np.sqrt(mom["delta_k"])
        if with_delta_A:
            dA[:, j] = delta_A_from_moments(mom, coef).delta_A
        lognorm_rec[:, j] = log_norm
        if keep_states:
            states.append(amp.copy())

    record(0, psi)
    psi = fft.ifft(fft.fft(psi, axis=-1) * half, axis=-1)
    max_drift = 0.0
    for step in range(n_steps):
        P = np.abs(psi) ** 2
        q = np.sum(P * x, axis=-1) * dx
        dw = dW[:, step]
        if linear:
            # dW column holds dxi here
            q_steps[:, step] = q
            shifted[:, step] = dw - 2.0 * sl * q * dt
            expo = sl * x * dw[:, None] - coef.lam * x**2 * dt
            top = expo.max(axis=-1)
            expo -= top[:, None]
        else:
            u = x - q[:, None]
            expo = sl * u * dw[:, None] - coef.lam * u**2 * dt
        psi = psi * np.exp(expo)
        nrm2 = np.sum(np.abs(psi) ** 2, axis=-1) * dx
        if linear:
            # |exp(expo)|^2 squares the factor, hence 2 * top
            log_norm += np.log(nrm2) + 2.0 * top
        else:
            max_drift = max(max_drift, float(np.max(np.abs(nrm2 - 1.0))))
        psi = psi / np.sqrt(nrm2)[:, None]
        spec = fft.fft(psi, axis=-1)
        if (step + 1) % record_every == 0:
            out = fft.ifft(spec * half, axis=-1)
            t_now = (step + 1) * dt
            check_containment(out, t_now)
            record((step + 1) // record_every, out)
            if step + 1 < n_steps:
                psi = fft.ifft(fft.fft(out, axis=-1) * half, axis=-1)
        else:
            psi = fft.ifft(spec * full, axis=-1)
            if check_every and (step + 1) % check_every == 0:
                check_containment(psi, (step + 1) * dt)

    traj = GridTrajectory(t=np.arange(n_rec) * dt * record_every, delta_A=dA, states=states,
                          max_norm_drift=max_drift, n_points=n, L=L, **rec)
    lin = LinearRecord(log_norm2=lognorm_rec, q_steps=q_steps, shifted=shifted) if linear else None
    return traj, lin


def evolve_nonlinear(psi0: WaveGrid, horizon: float, dt: float, path, coef: Coefficients = DIMLESS,
                     record_every: int = 1, keep_states: bool = False, with_delta_A: bool = True,
                     check_every: int = 50) -> GridTrajectory:
    """Integrate the normalized collapse equation driven by physical increments.

    `path` is a WienerPath or an increment array (n_steps,) / (batch, n_steps).
    """
    dW = _increments(path)
    if abs(dW.shape[1] * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise ParameterError("path does not cover the horizon with this dt")
    traj, _ = _run(psi0, dW, dt, coef, False, record_every, keep_states, with_delta_A, check_every)
    return traj


def evolve_linear_then_normalize(psi0: WaveGrid, horizon: float, dt: float, xi_path, coef: Coefficients = DIMLESS,
                                 record_every: int = 1, keep_states: bool = False, with_delta_A: bool = False,
                                 check_every: int = 50):
    """Integrate the linear equation, normalize, and return the physical noise.

    Returns (trajectory of normalized states, LinearRecord).  The norm is kept
    as log ||phi||^2 throughout, so it cannot underflow.  The shifted increments
    reproduce the same trajectory when fed to `evolve_nonlinear`.
    """
    dxi = _increments(xi_path)
    if abs(dxi.shape[1] * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise ParameterError("path does not cover the horizon with this dt")
    traj, lin = _run(psi0, dxi, dt, coef, True, record_every, keep_states, with_delta_A, check_every)
    if isinstance(xi_path, WienerPath) and lin.q_steps.shape[0] == 1:
        shifted = girsanov_shift(xi_path, lin.q_steps[0], coef.lam)
        lin.shifted[0] = shifted.increments
    return traj, lin


def l2_distance(amp1: np.ndarray, amp2: np.ndarray, dx: float, align_phase: bool = False) -> np.ndarray:
    """L2 distance between wavefunctions; optionally minimized over a global phase."""
    if align_phase:
        ov = np.sum(np.conj(amp1) * amp2, axis=-1) * dx
        amp2 = amp2 * np.exp(-1j * np.angle(ov))[..., None]
    return np.sqrt(np.sum(np.abs(amp1 - amp2) ** 2, axis=-1) * dx)


@dataclass(frozen=True)
class ConvergenceReport:
    t: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    monotone: bool
    worst_rise: float          # largest rise in units of the combined standard error
    terminal_ratio: float
    late_rate: float
    within_envelope: bool


def collapse_convergence_report(t, mean_dA, stderr_dA, coef: Coefficients = DIMLESS, n_paths: int | None = None,
                                band: float = 2.0) -> ConvergenceReport:
    """Judge whether E[Delta A_t] is non-increasing and decays at least like exp(-omega t).

    Non-increasing: no later value exceeds an earlier one by more than `band`
    combined standard errors.  Envelope: E[Delta A_t] <= E[Delta A_0] exp(-omega t)
    within the same band.  late_rate is a log-linear fit over the second half.
    """
    if n_paths is not None and n_paths < 500:
        raise ParameterError("the convergence report needs at least 500 paths")
    t = np.asarray(t, dtype=float)
    m = np.asarray(mean_dA, dtype=float)
    se = np.asarray(stderr_dA, dtype=float)
    rise = (m[None, :] - m[:, None]) / np.sqrt(se[:, None] ** 2 + se[None, :] ** 2 + 1e-300)
    upper = np.triu(np.ones_like(rise, dtype=bool), k=1)
    worst = float(np.max(np.where(upper, rise, -np.inf))) if len(m) > 1 else -np.inf
    env = m[0] * np.exp(-coef.omega * (t - t[0]))
    within = bool(np.all(m <= env + band * np.sqrt(se**2 + se[0] ** 2)))
    half = len(t) // 2
    pos = m[half:] > 0
    rate = float(-np.polyfit(t[half:][pos], np.log(m[half:][pos]), 1)[0]) if pos.sum() >= 2 else float("nan")
    return ConvergenceReport(t=t, mean=m, stderr=se, monotone=worst <= band, worst_rise=worst,
                             terminal_ratio=float(m[-1] / m[0]), late_rate=rate, within_envelope=within)


def write_snapshot_csv(path, psi: WaveGrid):
    """Rows (x, Re psi, Im psi, |psi|^2) of one state."""
    amp = psi.amplitudes if psi.amplitudes.ndim == 1 else psi.amplitudes[0]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "re_psi", "im_psi", "density"])
        for xi, a in zip(psi.x, amp):
            w.writerow([repr(float(xi)), repr(float(a.real)), repr(float(a.imag)), repr(float(abs(a) ** 2))])
    return path


def write_summary_csv(path, traj: GridTrajectory, row: int = 0):
    """Rows (t, <q>, <p>, sigma_q, sigma_p, Delta A) of one path."""
    cols = [traj.t, traj.q[row], traj.k[row], traj.sigma_q[row], traj.sigma_k[row],
            traj.delta_A[row] if traj.delta_A is not None else np.full(len(traj.t), np.nan)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "q", "p", "sigma_q", "sigma_p", "delta_A"])
        for vals in zip(*cols):
            w.writerow([repr(float(v)) for v in vals])
    return path
