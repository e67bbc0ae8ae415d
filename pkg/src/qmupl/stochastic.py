"""Wiener increments with per-path substreams, the time change and the Girsanov shift."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .units import ParameterError

log = logging.getLogger(__name__)


def path_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based generator for path `index` of the ensemble seeded by `seed`.

    Each (seed, index) pair owns an independent Philox stream, so an ensemble
    gives the same paths whatever order (or process) they are produced in.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


@dataclass(frozen=True)
class WienerPath:
    dt: float
    increments: np.ndarray
    seed: int | None = None
    index: int | None = None

    @property
    def horizon(self) -> float:
        return len(self.increments) * self.dt

    @property
    def n_steps(self) -> int:
        return len(self.increments)

    def cumulative(self) -> np.ndarray:
        """W at the grid points 0, dt, 2dt, ..."""
        return np.concatenate([[0.0], np.cumsum(self.increments)])


def n_steps_for(horizon: float, dt: float) -> int:
    if not dt > 0:
        raise ParameterError("dt must be positive")
    if horizon < dt:
        raise ParameterError("horizon must be at least one step")
    return int(round(horizon / dt))


def sample_path(horizon: float, dt: float, seed: int, index: int = 0) -> WienerPath:
    n = n_steps_for(horizon, dt)
    dw = path_rng(seed, index).standard_normal(n) * math.sqrt(dt)
    return WienerPath(dt=dt, increments=dw, seed=seed, index=index)


def increments_block(seed: int, indices, n_steps: int, dt: float) -> np.ndarray:
    """Stack the increments of several paths, shape (len(indices), n_steps).

    Row i is identical to ``sample_path(n_steps*dt, dt, seed, indices[i]).increments``.
    """
    out = np.empty((len(indices), n_steps))
    for row, i in enumerate(indices):
        out[row] = path_rng(seed, int(i)).standard_normal(n_steps)
    out *= math.sqrt(dt)
    return out


class IncrementStream:
    """Block-wise draws for many paths; consecutive blocks continue each path's stream."""

    def __init__(self, seed: int, indices, dt: float):
        self.dt = dt
        self._sqdt = math.sqrt(dt)
        self._gens = [path_rng(seed, int(i)) for i in indices]

    def draw(self, n_steps: int, rows=None) -> np.ndarray:
        rows = range(len(self._gens)) if rows is None else rows
        block = np.empty((len(rows), n_steps))
        for j, r in enumerate(rows):
            block[j] = self._gens[r].standard_normal(n_steps)
        return block * self._sqdt


@dataclass(frozen=True)
class TimeChange:
    t: np.ndarray
    s: np.ndarray
    zero_interval: bool = False

    @property
    def s_infinity(self) -> float:
        return float(self.s[-1])


def time_change(t, X, lam: float, zero_tol: float = 0.0) -> TimeChange:
    """Cumulative trapezoidal s_t = lam * int_0^t X_u^2 du on a uniform grid."""
    t = np.asarray(t, dtype=float)
    X = np.asarray(X, dtype=float)
    if t.shape != X.shape or t.ndim != 1 or len(t) < 2:
        raise ParameterError("t and X must be equal-length 1-d arrays")
    h = np.diff(t)
    if not np.allclose(h, h[0], rtol=1e-9, atol=0.0):
        raise ParameterError("time grid must be uniform")
    x2 = X**2
    s = np.concatenate([[0.0], np.cumsum(0.5 * lam * h * (x2[1:] + x2[:-1]))])
    # X == 0 on a whole sub-interval: the Gaussians have merged for good
    zero = np.abs(X) <= zero_tol
    flagged = bool(np.any(zero[1:] & zero[:-1]))
    if flagged:
        log.warning("X vanishes on a sub-interval; s_t is constant from there on")
    return TimeChange(t=t, s=s, zero_interval=flagged)


def s_infinity(X_of_t, lam: float, t_max: float, n0: int = 1024, rtol: float = 1e-6,
               max_doublings: int = 20) -> tuple[float, int]:
    """Refine the grid until doubling it moves s(t_max) by less than rtol.

    Returns the estimate and the number of intervals used.
    """
    n = n0
    prev = None
    for _ in range(max_doublings):
        t = np.linspace(0.0, t_max, n + 1)
        cur = time_change(t, X_of_t(t), lam).s_infinity
        if prev is not None and abs(cur - prev) <= rtol * abs(cur):
            return cur, n
        prev = cur
        n *= 2
    raise RuntimeError("time change did not converge")


def girsanov_shift(xi: WienerPath, mean_history, lam: float) -> WienerPath:
    """dW = dxi - 2 sqrt(lam) <q> dt, with <q> taken at the start of each step."""
    q = np.asarray(mean_history, dtype=float)
    if q.shape != xi.increments.shape:
        raise ParameterError("mean history must align with the increment grid")
    dw = xi.increments - 2.0 * math.sqrt(lam) * q * xi.dt
    return WienerPath(dt=xi.dt, increments=dw, seed=xi.seed, index=xi.index)


def girsanov_unshift(w: WienerPath, mean_history, lam: float) -> WienerPath:
    """Inverse of `girsanov_shift`: dxi = dW + 2 sqrt(lam) <q> dt."""
    q = np.asarray(mean_history, dtype=float)
    if q.shape != w.increments.shape:
        raise ParameterError("mean history must align with the increment grid")
    dxi = w.increments + 2.0 * math.sqrt(lam) * q * w.dt
    return WienerPath(dt=w.dt, increments=dxi, seed=w.seed, index=w.index)
