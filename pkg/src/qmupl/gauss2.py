"""Superposition of two Gaussians with a common width parameter.

The log-weight difference Gamma_R = gamma_2R - gamma_1R decides which branch
survives.  Everything that can get astronomically small (the overlap factor h,
the sandwich constant c) is carried as a logarithm.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import gauss1
from .stochastic import IncrementStream, n_steps_for
from .units import DEFAULT_B, DIMLESS, Coefficients, ParameterError


@dataclass(frozen=True)
class DoubleGaussianState:
    """Parameters of both branches.  Fields may be arrays (one entry per path)."""

    a: complex
    x_bar_1: np.ndarray
    x_bar_2: np.ndarray
    k_bar_1: np.ndarray
    k_bar_2: np.ndarray
    gamma_1: np.ndarray
    gamma_2: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        if not np.real(self.a) > 0:
            raise ParameterError("Re a must be positive")

    @property
    def X(self):
        return self.x_bar_2 - self.x_bar_1

    @property
    def K(self):
        return self.k_bar_2 - self.k_bar_1

    @property
    def Gamma(self):
        return self.gamma_2 - self.gamma_1

    def amplitude(self, x):
        """phi_1 + phi_2 on the points x (single path only)."""
        x = np.asarray(x, dtype=float)
        return (np.exp(-self.a * (x - self.x_bar_1) ** 2 + 1j * self.k_bar_1 * x + self.gamma_1)
                + np.exp(-self.a * (x - self.x_bar_2) ** 2 + 1j * self.k_bar_2 * x + self.gamma_2))


def double_gaussian_state(X0: float, K0: float = 0.0, a0: complex | None = None, b0: float = 0.0,
                          center: float = 0.0, k_center: float = 0.0,
                          coef: Coefficients = DIMLESS, n_paths: int | None = None) -> DoubleGaussianState:
    """Branches at center -/+ X0/2 with initial log-weight difference b0.

    a0 defaults to the stationary value (situation A when K0 = 0).
    """
    a0 = coef.a_inf if a0 is None else complex(a0)
    shape = () if n_paths is None else (n_paths,)
    full = lambda v, dt=float: np.full(shape, v, dtype=dt)  # noqa: E731
    g = gauss1.normalized_gamma(a0)
    return DoubleGaussianState(
        a=a0,
        x_bar_1=full(center - X0 / 2), x_bar_2=full(center + X0 / 2),
        k_bar_1=full(k_center - K0 / 2), k_bar_2=full(k_center + K0 / 2),
        gamma_1=full(complex(g - b0 / 2), complex), gamma_2=full(complex(g + b0 / 2), complex),
    )


@dataclass(frozen=True)
class CollapseVariables:
    X: np.ndarray
    K: np.ndarray
    Gamma_R: np.ndarray
    Gamma_I: np.ndarray
    Y: np.ndarray
    theta: np.ndarray
    log_h: np.ndarray
    delta: np.ndarray

    @property
    def h(self):
        return np.exp(self.log_h)


def collapse_variables(s: DoubleGaussianState) -> CollapseVariables:
    a = complex(s.a)
    X, K = s.X, s.K
    G = s.Gamma
    Y = -(2.0 * a.imag * X + K) / (2.0 * a.real)
    theta = 0.5 * (s.x_bar_1 + s.x_bar_2) * K + np.imag(G)
    log_h = -0.5 * a.real * (X**2 + Y**2)
    delta = np.exp(log_h) * ((s.x_bar_1 + s.x_bar_2) * np.cos(theta) + Y * np.sin(theta))
    return CollapseVariables(X=X, K=K, Gamma_R=np.real(G), Gamma_I=np.imag(G), Y=Y, theta=theta,
                             log_h=log_h, delta=delta)


def quantum_mean_double(s: DoubleGaussianState, cv: CollapseVariables | None = None):
    """Normalized position expectation of phi_1 + phi_2.

    Numerator and norm^2 are both divided by exp(gamma_1R + gamma_2R + |Gamma_R|)
    so that neither overflows when one branch is suppressed.
    """
    cv = collapse_variables(s) if cv is None else cv
    G = cv.Gamma_R
    m = np.abs(G)
    w1 = np.exp(-G - m)
    w2 = np.exp(G - m)
    hc = np.exp(cv.log_h - m)
    num = s.x_bar_1 * w1 + s.x_bar_2 * w2 + hc * ((s.x_bar_1 + s.x_bar_2) * np.cos(cv.theta) + cv.Y * np.sin(cv.theta))
    den = w1 + w2 + 2.0 * hc * np.cos(cv.theta)
    if np.any(den <= 0):
        raise FloatingPointError("vanishing norm of the double Gaussian")
    return num / den


def _log_sech(G):
    m = np.abs(G)
    return -m + math.log(2.0) - np.log1p(np.exp(-2.0 * m))


def g_term(cv: CollapseVariables, coef: Coefficients = DIMLESS):
    """Part of the Gamma_R drift beyond lam X^2 tanh(Gamma_R).

    Equal to lam X h [Y sin(theta) - X cos(theta) tanh(Gamma_R)] / (cosh(Gamma_R) + h cos(theta)).
    """
    G = cv.Gamma_R
    hs = np.exp(cv.log_h + _log_sech(G))  # h / cosh(Gamma)
    num = cv.Y * np.sin(cv.theta) - cv.X * np.cos(cv.theta) * np.tanh(G)
    return coef.lam * cv.X * hs * num / (1.0 + hs * np.cos(cv.theta))


def g_bound(cv: CollapseVariables, a_re: float, coef: Coefficients = DIMLESS):
    """Upper bound lam z / (exp(a_R z / 4) - 1) on |g|, z = (|X| + |Y|)^2."""
    z = (np.abs(cv.X) + np.abs(cv.Y)) ** 2
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        val = coef.lam * z / np.expm1(0.25 * a_re * z)
    return np.where(z > 0, val, 4.0 * coef.lam / a_re)


def log_c_bound(a_m: float, X_m: float) -> float:
    """log of c = 1 / (exp(a_m X_m^2 / 4) - 1), finite even when c underflows."""
    z = 0.25 * a_m * X_m**2
    if not z > 0:
        raise ParameterError("a_m X_m^2 must be positive")
    if z > 30.0:
        return -z - math.log1p(-math.exp(-z))
    return -math.log(math.expm1(z))


def a_infinity_system(coef: Coefficients = DIMLESS):
    """Limit matrix of the (X, K) system and its eigenvalues -(1 +/- i) omega / 2."""
    w = coef.omega
    A = np.array([[-w, coef.hbar_m], [-2.0 * coef.lam, 0.0]])
    mu = np.array([complex(-w / 2, -w / 2), complex(-w / 2, w / 2)])
    return A, mu


def xk_matrix(t, a0: complex, coef: Coefficients = DIMLESS):
    a = gauss1.a_exact(t, a0, coef)
    A1 = coef.lam / a.real
    A2 = -2.0 * coef.lam * a.imag / a.real
    return A1, A2


def xk_evolve(X0: float, K0: float, a0: complex, t, coef: Coefficients = DIMLESS, h: float = 1e-3):
    """RK4 solution of the deterministic system for the peak separations.

    dX = (-A1 X + (hbar/m) K) dt,  dK = -A2 X dt, reported at the sorted times t.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))

    def rhs(tt, z):
        A1, A2 = xk_matrix(tt, a0, coef)
        return np.array([-A1 * z[0] + coef.hbar_m * z[1], -A2 * z[0]])

    z = np.array([X0, K0], dtype=float)
    out = np.empty((len(t), 2))
    now = 0.0
    for i, target in enumerate(t):
        span = target - now
        n = int(math.ceil(span / h)) if span > 0 else 0
        if n:
            step = span / n
            for _ in range(n):
                k1 = rhs(now, z)
                k2 = rhs(now + 0.5 * step, z + 0.5 * step * k1)
                k3 = rhs(now + 0.5 * step, z + 0.5 * step * k2)
                k4 = rhs(now + step, z + step * k3)
                z = z + step / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
                now += step
        now = target
        out[i] = z
    return out[:, 0], out[:, 1]


def situation_a_X(t, X0: float, coef: Coefficients = DIMLESS):
    """Closed-form separation for stationary widths and K0 = 0."""
    wt = coef.omega * np.asarray(t, dtype=float)
    return X0 * np.exp(-wt / 2) * (np.cos(wt / 2) - np.sin(wt / 2))


def gamma_full_step(s: DoubleGaussianState, q_mean, dW, dt: float, coef: Coefficients = DIMLESS,
                    cv: CollapseVariables | None = None):
    """Euler-Maruyama step of Gamma_R with the exact g term; returns the new Gamma_R.

    q_mean is accepted for interface symmetry with the full update; the drift
    lam X^2 tanh(Gamma_R) + g already encodes it.
    """
    cv = collapse_variables(s) if cv is None else cv
    drift = coef.lam * cv.X**2 * np.tanh(cv.Gamma_R) + g_term(cv, coef)
    return cv.Gamma_R + drift * dt + math.sqrt(coef.lam) * cv.X * dW


def step_double(s: DoubleGaussianState, dW, dt: float, coef: Coefficients = DIMLESS,
                a_next: complex | None = None, cv: CollapseVariables | None = None):
    """Advance every parameter by one step under the physical noise dW.

    Each branch follows the linear-equation update driven by
    dxi = dW + 2 sqrt(lam) <q> dt, with <q> from the whole superposition.
    Returns (new state, <q> used).
    """
    cv = collapse_variables(s) if cv is None else cv
    q = quantum_mean_double(s, cv)
    a = complex(s.a)
    ar, ai = a.real, a.imag
    sl = math.sqrt(coef.lam)
    dxi = dW + 2.0 * sl * q * dt
    lam, hm = coef.lam, coef.hbar_m

    def branch(x, k, g):
        shifted = dxi - 2.0 * sl * x * dt
        g_new = g + (
            (lam * x**2 + hm * ai + lam / (4.0 * ar)) * dt + sl * x * shifted
            + 1j * ((-hm * ar - 0.5 * hm * k**2 + lam * ai / (4.0 * ar**2)) * dt + sl * ai / ar * x * shifted)
        )
        x_new = x + hm * k * dt + sl / (2.0 * ar) * shifted
        k_new = k - sl * ai / ar * shifted
        return x_new, k_new, g_new

    x1, k1, g1 = branch(s.x_bar_1, s.k_bar_1, s.gamma_1)
    x2, k2, g2 = branch(s.x_bar_2, s.k_bar_2, s.gamma_2)
    if a_next is None:
        a_next = complex(gauss1.a_exact(dt, a, coef))
    new = DoubleGaussianState(a=a_next, x_bar_1=x1, x_bar_2=x2, k_bar_1=k1, k_bar_2=k2,
                              gamma_1=g1, gamma_2=g2, t=s.t + dt)
    return new, q


@dataclass
class DoublePaths:
    t: np.ndarray
    Gamma_R: np.ndarray      # (n_paths, n_record)
    X: np.ndarray            # (n_paths, n_record)
    q_mean: np.ndarray       # (n_paths, n_record)
    s: np.ndarray            # time change lam int X^2, (n_paths, n_record)
    final: DoubleGaussianState
    max_g_ratio: float       # max over steps of |g| / bound
    bound_violations: int
    sandwich: dict | None = None


def simulate_double(state0: DoubleGaussianState, dW: np.ndarray, dt: float, coef: Coefficients = DIMLESS,
                    record_every: int = 1, sandwich_c: float | None = None) -> DoublePaths:
    """Full coupled simulation of an ensemble (rows of dW) of double Gaussians.

    The g-term bound is evaluated on every step.  With sandwich_c, the
    comparison processes dGamma^pm = lam X^2 (tanh Gamma^pm +/- c) dt + sqrt(lam) X dW
    are run on the same noise and the ordering Gamma^- <= Gamma_R <= Gamma^+ is
    checked on every step.
    """
    dW = np.atleast_2d(dW)
    n_paths, n_steps = dW.shape
    if n_steps % record_every:
        raise ParameterError("record_every must divide the number of steps")
    t_grid = np.arange(n_steps + 1) * dt
    a_path = gauss1.a_exact(t_grid, state0.a, coef)
    bc = lambda v: np.broadcast_to(np.asarray(v), (n_paths,)).astype(np.asarray(v).dtype, copy=True)  # noqa: E731
    s = replace(state0, x_bar_1=bc(state0.x_bar_1).astype(float), x_bar_2=bc(state0.x_bar_2).astype(float),
                k_bar_1=bc(state0.k_bar_1).astype(float), k_bar_2=bc(state0.k_bar_2).astype(float),
                gamma_1=bc(state0.gamma_1).astype(complex), gamma_2=bc(state0.gamma_2).astype(complex))
    n_rec = n_steps // record_every + 1
    G_rec = np.empty((n_paths, n_rec))
    X_rec = np.empty((n_paths, n_rec))
    q_rec = np.empty((n_paths, n_rec))
    s_rec = np.empty((n_paths, n_rec))
    stime = np.zeros(n_paths)
    sl = math.sqrt(coef.lam)
    max_ratio = 0.0
    violations = 0
    if sandwich_c is not None:
        g_plus = np.real(s.Gamma).copy()
        g_minus = g_plus.copy()
        sw_viol = 0
        sw_gap = 0.0
    cv = collapse_variables(s)
    q = quantum_mean_double(s, cv)
    G_rec[:, 0], X_rec[:, 0], q_rec[:, 0], s_rec[:, 0] = cv.Gamma_R, cv.X, q, 0.0
    for n in range(n_steps):
        g = g_term(cv, coef)
        bound = g_bound(cv, s.a.real, coef)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(bound > 0, np.abs(g) / bound, 0.0)
        max_ratio = max(max_ratio, float(np.max(ratio)))
        violations += int(np.count_nonzero(np.abs(g) > bound * (1 + 1e-12) + 1e-300))
        X_now = cv.X
        dw = dW[:, n]
        if sandwich_c is not None:
            lx2 = coef.lam * X_now**2
            g_plus = g_plus + lx2 * (np.tanh(g_plus) + sandwich_c) * dt + sl * X_now * dw
            g_minus = g_minus + lx2 * (np.tanh(g_minus) - sandwich_c) * dt + sl * X_now * dw
        s, _ = step_double(s, dw, dt, coef, a_next=complex(a_path[n + 1]), cv=cv)
        cv = collapse_variables(s)
        stime = stime + 0.5 * coef.lam * dt * (X_now**2 + cv.X**2)
        if sandwich_c is not None:
            tol = 1e-9 * (1.0 + np.abs(cv.Gamma_R))
            bad = (g_minus > cv.Gamma_R + tol) | (cv.Gamma_R > g_plus + tol)
            sw_viol += int(np.count_nonzero(bad))
            sw_gap = max(sw_gap, float(np.max(np.maximum(g_minus - cv.Gamma_R, cv.Gamma_R - g_plus))))
        if (n + 1) % record_every == 0:
            j = (n + 1) // record_every
            G_rec[:, j], X_rec[:, j], s_rec[:, j] = cv.Gamma_R, cv.X, stime
            q_rec[:, j] = quantum_mean_double(s, cv)
    sandwich = None
    if sandwich_c is not None:
        sandwich = {"c": sandwich_c, "violations": sw_viol, "max_excess": sw_gap,
                    "Gamma_plus": g_plus, "Gamma_minus": g_minus}
    return DoublePaths(t=t_grid[::record_every], Gamma_R=G_rec, X=X_rec, q_mean=q_rec, s=s_rec, final=s,
                       max_g_ratio=max_ratio, bound_violations=violations, sandwich=sandwich)


# --- hitting-time statistics of the reduced equation dG = tanh(G) ds + dW ---

@dataclass(frozen=True)
class HittingConfig:
    b: float = DEFAULT_B
    b0: float = 0.0
    eta: float = 3.0

    def __post_init__(self):
        if not self.b > 0:
            raise ParameterError("b must be positive")
        if abs(self.b0) > self.b:
            raise ParameterError("need |b0| <= b")
        if not 0 < self.eta < self.b:
            raise ParameterError("need 0 < eta < b")

    def check_interior(self):
        if not abs(self.b0) < self.b:
            raise ParameterError("need |b0| < b")


@dataclass(frozen=True)
class HittingStats:
    mean_S: float
    var_S: float
    p_collapse_2: float
    p_collapse_1: float
    p_deloc_bound: float


def F(x):
    """Variance kernel x^2 tanh^2 x + x tanh x - x^2."""
    x = np.asarray(x, dtype=float)
    th = np.tanh(x)
    return x**2 * th**2 + x * th - x**2


def hitting_stats(config: HittingConfig) -> HittingStats:
    config.check_interior()
    b, b0, eta = config.b, config.b0, config.eta
    tb, tb0, te = math.tanh(b), math.tanh(b0), math.tanh(eta)
    return HittingStats(
        mean_S=b * tb - b0 * tb0,
        var_S=float(F(b) - F(b0)),
        p_collapse_2=(tb + tb0) / (2.0 * tb),
        p_collapse_1=(tb - tb0) / (2.0 * tb),
        p_deloc_bound=1.0 - (1.0 + tb) * te / (1.0 + te),
    )


def born_rule_check(gamma_10_R: float, gamma_20_R: float, b: float) -> dict:
    """Collapse probability to branch 2: exact formula against the norm ratio."""
    if b < 5:
        raise ParameterError("the norm-ratio reading needs b >= 5 (tanh b ~ 1)")
    b0 = gamma_20_R - gamma_10_R
    m = max(gamma_10_R, gamma_20_R)
    w1, w2 = math.exp(2 * (gamma_10_R - m)), math.exp(2 * (gamma_20_R - m))
    return {
        "norm_ratio": w2 / (w1 + w2),
        "exact": (math.tanh(b) + math.tanh(b0)) / (2.0 * math.tanh(b)),
        "tolerance": 1.0 - math.tanh(b),
    }


@dataclass
class ReducedHits:
    hit_time: np.ndarray    # nan where censored
    hit_sign: np.ndarray    # +1, -1, or 0 where censored
    censored: np.ndarray
    dipped: np.ndarray | None = None

    @property
    def outcome(self):
        return np.where(self.censored, "merged", np.where(self.hit_sign > 0, "phi2", "phi1"))


def reduced_gamma_ensemble(config: HittingConfig, n_paths: int, s_max: float, dt_s: float, seed: int,
                           first_index: int = 0, drift_shift: float = 0.0, track_dip: bool = False,
                           block: int = 1000) -> ReducedHits:
    """First exits of dG = (tanh G + drift_shift) ds + dW~ from (-b, b).

    Detection at grid resolution: the hit time is the first grid time with
    |G| >= b.  Paths not out by s_max are censored.  With track_dip, hit paths
    keep running until s_max to see whether they come back by eta.
    """
    n_total = n_steps_for(s_max, dt_s)
    b, eta = config.b, config.eta
    G = np.full(n_paths, float(config.b0))
    hit_time = np.full(n_paths, np.nan)
    sign = np.zeros(n_paths)
    dipped = np.zeros(n_paths, dtype=bool)
    at_start = np.abs(G) >= b
    hit_time[at_start] = 0.0
    sign[at_start] = np.sign(G[at_start])
    stream = IncrementStream(seed, range(first_index, first_index + n_paths), dt_s)

    def finished():
        hit = ~np.isnan(hit_time)
        return hit & (dipped | (not track_dip))

    active = np.flatnonzero(~finished())
    done_steps = 0
    while done_steps < n_total and active.size:
        nb = min(block, n_total - done_steps)
        dw = stream.draw(nb, rows=active)
        g = G[active]
        ht = hit_time[active]
        sg = sign[active]
        dp = dipped[active]
        for j in range(nb):
            g += (np.tanh(g) + drift_shift) * dt_s + dw[:, j]
            s_now = (done_steps + j + 1) * dt_s
            unhit = np.isnan(ht)
            if track_dip:
                dp |= ~unhit & (sg * g <= b - eta)
            new = unhit & (np.abs(g) >= b)
            if new.any():
                ht[new] = s_now
                sg[new] = np.sign(g[new])
        G[active], hit_time[active], sign[active], dipped[active] = g, ht, sg, dp
        done_steps += nb
        active = np.flatnonzero(~finished())
    censored = np.isnan(hit_time)
    return ReducedHits(hit_time=hit_time, hit_sign=sign, censored=censored,
                       dipped=dipped if track_dip else None)


def simulate_reduced_gamma(config: HittingConfig, s_max: float, dt_s: float, seed: int, index: int = 0) -> dict:
    r = reduced_gamma_ensemble(config, 1, s_max, dt_s, seed, first_index=index)
    return {
        "hit_time": float(r.hit_time[0]),
        "hit_sign": int(r.hit_sign[0]),
        "censored": bool(r.censored[0]),
        "outcome": str(r.outcome[0]),
    }


def bounding_sandwich(c_bound: float, config: HittingConfig, seed: int, n_paths: int,
                      s_max: float = 20.0, dt_s: float = 1e-3, block: int = 1000) -> dict:
    """Run G~ and G^pm = (tanh G^pm +/- c) on one noise; check G^- <= G~ <= G^+ at every step.

    The ordering makes the first time each process reaches +b (capped at s_max)
    ordered path by path, plus first, minus last; their means are reported
    together with the usual two-sided exit means.
    """
    if c_bound < 0:
        raise ParameterError("c must be non-negative")
    n_total = n_steps_for(s_max, dt_s)
    stream = IncrementStream(seed, range(n_paths), dt_s)
    g = np.full((3, n_paths), float(config.b0))  # minus, tilde, plus
    shift = np.array([-c_bound, 0.0, c_bound])[:, None]
    exit_time = np.full((3, n_paths), np.nan)
    up_time = np.full((3, n_paths), np.nan)
    violations = 0
    excess = 0.0
    done = 0
    while done < n_total:
        nb = min(block, n_total - done)
        dw = stream.draw(nb)
        for j in range(nb):
            g += (np.tanh(g) + shift) * dt_s + dw[:, j]
            bad = (g[0] > g[1]) | (g[1] > g[2])
            if bad.any():
                violations += int(np.count_nonzero(bad))
                excess = max(excess, float(np.max(np.maximum(g[0] - g[1], g[1] - g[2]))))
            s_now = (done + j + 1) * dt_s
            exit_time[np.isnan(exit_time) & (np.abs(g) >= config.b)] = s_now
            up_time[np.isnan(up_time) & (g >= config.b)] = s_now
        done += nb
    up_capped = np.where(np.isnan(up_time), s_max, up_time)
    up_ordered = bool(np.all(up_capped[2] <= up_capped[1]) and np.all(up_capped[1] <= up_capped[0]))
    exit_means = np.nanmean(exit_time, axis=1)
    up_means = up_capped.mean(axis=1)
    return {
        "c": c_bound,
        "violations": violations,
        "max_excess": excess,
        "up_hit_ordered": up_ordered,
        "mean_up_minus": float(up_means[0]),
        "mean_up_tilde": float(up_means[1]),
        "mean_up_plus": float(up_means[2]),
        "mean_exit_minus": float(exit_means[0]),
        "mean_exit_tilde": float(exit_means[1]),
        "mean_exit_plus": float(exit_means[2]),
        "censored": int(np.count_nonzero(np.isnan(exit_time))),
        "identical_when_c0": bool(c_bound == 0 and np.array_equal(g[0], g[2])),
    }
