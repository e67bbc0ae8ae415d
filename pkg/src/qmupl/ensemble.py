"""Monte Carlo harness: chunked ensembles, streaming moments, oracle scoring.

Paths are generated in fixed chunks of consecutive indices; every path draws
from its own (seed, index) substream, and chunk statistics are merged in chunk
order.  The result therefore does not depend on how chunks are scheduled.
"""
from __future__ import annotations

import csv
import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats as sps

from . import gauss1, gauss2, grid
from .stochastic import increments_block, n_steps_for
from .units import DIMLESS, ParameterError


class ConfigurationError(ParameterError):
    """Unknown scenario or malformed ensemble specification."""


@dataclass
class MomentStats:
    """Streaming first and second moments over paths, per observable and time point.

    m2 holds sums of squared deviations; comoment holds cross sums for the
    requested observable pairs.  Merging follows the pairwise update of Chan et al.
    """

    t: np.ndarray
    n: int
    mean: dict
    m2: dict
    comoment: dict = field(default_factory=dict)

    @classmethod
    def from_samples(cls, t, samples: dict, pairs=()) -> "MomentStats":
        n = None
        mean, m2, co = {}, {}, {}
        for name, x in samples.items():
            x = np.atleast_2d(np.asarray(x, dtype=float))
            n = x.shape[0] if n is None else n
            if x.shape[0] != n:
                raise ParameterError("all observables need the same number of paths")
            mean[name] = x.mean(axis=0)
            m2[name] = ((x - mean[name]) ** 2).sum(axis=0)
        for a, b in pairs:
            xa = np.atleast_2d(samples[a])
            xb = np.atleast_2d(samples[b])
            co[(a, b)] = ((xa - mean[a]) * (xb - mean[b])).sum(axis=0)
        return cls(t=np.asarray(t, dtype=float), n=int(n), mean=mean, m2=m2, comoment=co)

    def merge(self, other: "MomentStats") -> "MomentStats":
        if self.t.shape != other.t.shape or not np.allclose(self.t, other.t):
            raise ParameterError("cannot merge statistics on different grids")
        if set(self.mean) != set(other.mean) or set(self.comoment) != set(other.comoment):
            raise ParameterError("cannot merge statistics of different observables")
        na, nb = self.n, other.n
        n = na + nb
        mean, m2, co = {}, {}, {}
        delta = {k: other.mean[k] - self.mean[k] for k in self.mean}
        for k in self.mean:
            mean[k] = self.mean[k] + delta[k] * (nb / n)
            m2[k] = self.m2[k] + other.m2[k] + delta[k] ** 2 * (na * nb / n)
        for (a, b) in self.comoment:
            co[(a, b)] = self.comoment[(a, b)] + other.comoment[(a, b)] + delta[a] * delta[b] * (na * nb / n)
        return MomentStats(t=self.t, n=n, mean=mean, m2=m2, comoment=co)

    @property
    def variance_defined(self) -> bool:
        return self.n >= 2

    def variance(self, name: str) -> np.ndarray:
        if not self.variance_defined:
            return np.full_like(self.mean[name], np.nan)
        return self.m2[name] / (self.n - 1)

    def stderr(self, name: str) -> np.ndarray:
        return np.sqrt(self.variance(name) / self.n)

    def covariance(self, a: str, b: str) -> np.ndarray:
        if a == b:
            return self.variance(a)
        key = (a, b) if (a, b) in self.comoment else (b, a)
        if key not in self.comoment:
            raise ParameterError(f"pair {(a, b)} was not accumulated")
        if not self.variance_defined:
            return np.full_like(self.mean[a], np.nan)
        return self.comoment[key] / (self.n - 1)

    def covariance_stderr(self, a: str, b: str) -> np.ndarray:
        """Standard error of the sample covariance for jointly Gaussian observables.

        Var(s_ab) = (s_aa s_bb + s_ab^2) / (n - 1); for a == b this is 2 s^4 / (n - 1).
        """
        c = self.covariance(a, b)
        return np.sqrt((self.variance(a) * self.variance(b) + c**2) / max(self.n - 1, 1))

    def observables(self):
        return list(self.mean)


@dataclass(frozen=True)
class EnsembleSpec:
    scenario: str
    n_paths: int
    seed: int = 0
    dt: float = 1e-3
    horizon: float = 1.0
    observables: tuple = ()
    record_every: int = 1
    chunk: int = 500
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_paths < 1:
            raise ConfigurationError("n_paths must be at least 1")
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        if self.chunk < 1 or self.record_every < 1:
            raise ConfigurationError("chunk and record_every must be positive")
        if self.scenario not in SCENARIOS:
            raise ConfigurationError(f"unknown scenario {self.scenario!r}; known: {sorted(SCENARIOS)}")

    @property
    def n_steps(self) -> int:
        return n_steps_for(self.horizon, self.dt)

    def content_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


# --- scenarios: (spec, path indices) -> (time points, {observable: (n_chunk, n_points)}, pairs) ---

def _single(spec: EnsembleSpec, idx, stationary: bool = False):
    p = spec.params
    coef = p.get("coef", DIMLESS)
    a0 = coef.a_inf if stationary else complex(p.get("a0", 0.5))
    dW = increments_block(spec.seed, idx, spec.n_steps, spec.dt)
    mp = gauss1.simulate_means(a0, p.get("x0", 0.0), p.get("k0", 0.0), dW, spec.dt, coef,
                               record_every=spec.record_every)
    sigma_k2 = np.abs(mp.a) ** 2 / mp.a.real
    energy = 0.5 * coef.hbar_m * (mp.k_bar**2 + sigma_k2)
    return mp.t, {"q": mp.x_bar, "p": mp.k_bar, "energy": energy}, [("q", "p")]


def _norm_gauss(spec: EnsembleSpec, idx):
    p = spec.params
    coef = p.get("coef", DIMLESS)
    a0 = complex(p.get("a0", 0.5))
    dxi = increments_block(spec.seed, idx, spec.n_steps, spec.dt)
    mp = gauss1.simulate_means(a0, p.get("x0", 0.0), p.get("k0", 0.0), dxi, spec.dt, coef,
                               record_every=spec.record_every, measure="Q")
    return mp.t, {"norm2": gauss1.norm_squared(mp.gamma.real, mp.a.real)}, []


def _grid_wave(p):
    n, L = int(p.get("n_points", 512)), float(p.get("L", 64.0))
    if "X0" in p:
        s = gauss2.double_gaussian_state(float(p["X0"]), float(p.get("K0", 0.0)), p.get("a0"),
                                         float(p.get("b0", 0.0)))
        return grid.from_function(s.amplitude, n, L)
    return grid.gaussian_wave(complex(p.get("a0", 0.5)), float(p.get("x0", 0.0)), float(p.get("k0", 0.0)), n, L)


def _norm_grid(spec: EnsembleSpec, idx):
    psi0 = _grid_wave(spec.params)
    dxi = increments_block(spec.seed, idx, spec.n_steps, spec.dt)
    tr, lin = grid.evolve_linear_then_normalize(psi0, spec.horizon, spec.dt, dxi, spec.params.get("coef", DIMLESS),
                                                record_every=spec.record_every)
    return tr.t, {"norm2": np.exp(lin.log_norm2), "q": tr.q}, []


def _grid(spec: EnsembleSpec, idx):
    psi0 = _grid_wave(spec.params)
    dW = increments_block(spec.seed, idx, spec.n_steps, spec.dt)
    tr = grid.evolve_nonlinear(psi0, spec.horizon, spec.dt, dW, spec.params.get("coef", DIMLESS),
                               record_every=spec.record_every)
    return tr.t, {"q": tr.q, "p": tr.k, "sigma_q": tr.sigma_q, "sigma_p": tr.sigma_k, "delta_A": tr.delta_A}, []


def _grid_density(spec: EnsembleSpec, idx):
    """Terminal |psi|^2 over the grid; the 'time' axis of the result is x."""
    psi0 = _grid_wave(spec.params)
    dW = increments_block(spec.seed, idx, spec.n_steps, spec.dt)
    tr = grid.evolve_nonlinear(psi0, spec.horizon, spec.dt, dW, spec.params.get("coef", DIMLESS),
                               record_every=spec.n_steps, keep_states=True, with_delta_A=False)
    return psi0.x, {"density": np.abs(tr.states[-1]) ** 2}, []


def _double(spec: EnsembleSpec, idx):
    p = spec.params
    coef = p.get("coef", DIMLESS)
    s0 = gauss2.double_gaussian_state(float(p.get("X0", 4.0)), float(p.get("K0", 0.0)), p.get("a0"),
                                      float(p.get("b0", 0.0)), coef=coef)
    dW = increments_block(spec.seed, idx, spec.n_steps, spec.dt)
    dp = gauss2.simulate_double(s0, dW, spec.dt, coef, record_every=spec.record_every)
    return dp.t, {"Gamma_R": dp.Gamma_R, "X": dp.X, "q": dp.q_mean, "s": dp.s}, []


def _hitting(spec: EnsembleSpec, idx):
    p = spec.params
    cfg = gauss2.HittingConfig(b=float(p.get("b", 2.0)), b0=float(p.get("b0", 0.0)), eta=float(p.get("eta", 1.0)))
    idx = list(idx)
    r = gauss2.reduced_gamma_ensemble(cfg, len(idx), spec.horizon, spec.dt, spec.seed, first_index=idx[0],
                                      track_dip=bool(p.get("track_dip", False)))
    hit = np.where(r.censored, spec.horizon, r.hit_time)
    obs = {"hit_time": hit[:, None], "plus": (r.hit_sign > 0).astype(float)[:, None],
           "censored": r.censored.astype(float)[:, None]}
    if r.dipped is not None:
        obs["dipped"] = r.dipped.astype(float)[:, None]
    return np.array([spec.horizon]), obs, []


SCENARIOS = {
    "single": _single,
    "stationary": lambda spec, idx: _single(spec, idx, stationary=True),
    "norm": _norm_gauss,
    "norm-grid": _norm_grid,
    "grid": _grid,
    "grid-density": _grid_density,
    "double": _double,
    "hitting": _hitting,
}


def _chunks(spec: EnsembleSpec):
    return [range(i, min(i + spec.chunk, spec.n_paths)) for i in range(0, spec.n_paths, spec.chunk)]


def _run_chunk(spec: EnsembleSpec, idx) -> MomentStats:
    t, obs, pairs = SCENARIOS[spec.scenario](spec, idx)
    if spec.observables:
        missing = set(spec.observables) - set(obs)
        if missing:
            raise ConfigurationError(f"scenario {spec.scenario!r} does not record {sorted(missing)}")
        obs = {k: obs[k] for k in spec.observables}
        pairs = [pr for pr in pairs if pr[0] in obs and pr[1] in obs]
    return MomentStats.from_samples(t, obs, pairs)


def run_ensemble(spec: EnsembleSpec, workers: int = 1) -> MomentStats:
    """Run all paths in chunks and merge the chunk statistics in chunk order.

    Chunks are contiguous index ranges; threads only change scheduling, never
    the merge order, so the result is the same for any `workers`.
    """
    chunks = _chunks(spec)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda c: _run_chunk(spec, c), chunks))
    else:
        parts = [_run_chunk(spec, c) for c in chunks]
    out = parts[0]
    for part in parts[1:]:
        out = out.merge(part)
    return out


@dataclass(frozen=True)
class OracleReport:
    observable: str
    kind: str
    z: np.ndarray
    exceed: int
    allowed: int
    z_threshold: float
    passed: bool
    note: str = ("time points of one ensemble are strongly correlated, so exceedances cluster; "
                 "the allowance is the 99% binomial quantile for independent points")

    @property
    def fraction(self) -> float:
        return self.exceed / max(len(self.z), 1)


def score_against_oracle(stats: MomentStats, observable, oracle, z_threshold: float = 3.0,
                         kind: str = "mean", skip_zero_se: bool = True) -> OracleReport:
    """z-scores of the Monte Carlo estimate against a closed-form curve.

    kind is "mean", "variance" or "covariance" (observable then a pair (a, b)).
    oracle is an array on stats.t or a callable of t.  Points with zero standard
    error (deterministic initial values) are skipped.  The verdict passes when
    the number of |z| > z_threshold is within the 99% binomial quantile of
    chance exceedances, which is below 1% of the points for long series.
    """
    t = stats.t
    ref = oracle(t) if callable(oracle) else np.asarray(oracle, dtype=float)
    if np.shape(ref) != t.shape:
        raise ParameterError("oracle does not align with the statistics grid")
    if kind == "mean":
        est, se = stats.mean[observable], stats.stderr(observable)
    elif kind == "variance":
        est, se = stats.variance(observable), stats.covariance_stderr(observable, observable)
    elif kind == "covariance":
        a, b = observable
        est, se = stats.covariance(a, b), stats.covariance_stderr(a, b)
    else:
        raise ParameterError(f"unknown kind {kind!r}")
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (est - ref) / se
    zero = se == 0
    if skip_zero_se:
        z = np.where(zero & np.isclose(est, ref), 0.0, z)
    z = np.where(np.isnan(z), np.inf, z)
    exceed = int(np.count_nonzero(np.abs(z) > z_threshold))
    p0 = 2.0 * sps.norm.sf(z_threshold)
    allowed = int(sps.binom.ppf(0.99, len(z), p0))
    return OracleReport(observable=str(observable), kind=kind, z=z, exceed=exceed, allowed=allowed,
                        z_threshold=z_threshold, passed=exceed <= allowed)


def write_stats_csv(path, stats: MomentStats, oracles: dict | None = None):
    """Rows (t, observable, mean, stderr, oracle, z); oracle and z empty where not given."""
    oracles = oracles or {}
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "observable", "mean", "stderr", "oracle", "z"])
        for name in stats.observables():
            m, se = stats.mean[name], stats.stderr(name)
            ref = oracles.get(name)
            if callable(ref):
                ref = ref(stats.t)
            for i, ti in enumerate(stats.t):
                if ref is None:
                    w.writerow([repr(float(ti)), name, repr(float(m[i])), repr(float(se[i])), "", ""])
                else:
                    z = (m[i] - ref[i]) / se[i] if se[i] > 0 else 0.0
                    w.writerow([repr(float(ti)), name, repr(float(m[i])), repr(float(se[i])),
                                repr(float(ref[i])), repr(float(z))])
    return path


def manifest_entry(spec: EnsembleSpec) -> dict:
    return {"scenario": spec.scenario, "seed": spec.seed, "n_paths": spec.n_paths, "dt": spec.dt,
            "horizon": spec.horizon, "config_hash": spec.content_hash()}
