"""Acceptance criteria 1-13, shared by the test suite and `qmupl verify`.

Each criterion returns a `CriterionResult`; `run_suite` groups them.  All Monte
Carlo criteria are deterministic in (seed, n).
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import ensemble, gauss1, gauss2, grid, master, stochastic, units
from .units import DIMLESS

DEFAULT_SEED = 7


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] {self.number:2d} {self.title} ({self.seconds:.1f} s)"


def _timed(number, title):
    def wrap(fn):
        def run(*args, **kw):
            t0 = time.perf_counter()
            passed, details = fn(*args, **kw)
            return CriterionResult(number, title, bool(passed), details, time.perf_counter() - t0)
        run.number = number
        run.title = title
        return run
    return wrap


def _rel(a, b):
    return abs(a - b) / abs(b)


@_timed(1, "closed-form identities")
def closed_forms(seed=DEFAULT_SEED, n=None):
    c = units.derive_constants(units.ModelParams())
    prod = _rel(c.sigma_q_inf * c.sigma_p_inf, c.params.hbar / math.sqrt(2.0))
    hm = c.params.hbar / c.params.m
    riccati = abs(c.lam - 2j * hm * c.a_inf**2) / c.lam
    coef = DIMLESS
    A, mu = gauss2.a_infinity_system(coef)
    eig = np.sort_complex(np.linalg.eigvals(A))
    target = np.sort_complex(np.array([-(1 + 1j), -(1 - 1j)]) * coef.omega / 2)
    eig_err = float(np.max(np.abs(eig - target)) / coef.omega)
    d = {"sigma_product_rel": prod, "riccati_residual_rel": riccati, "eigen_err": eig_err}
    return prod < 1e-12 and riccati < 1e-12 and eig_err < 1e-12, d


def _riccati_rk4(a0, t_end, h, coef=DIMLESS):
    """Vectorized RK4 for da/dt = lam - 2i (hbar/m) a^2, reporting every unit of time."""
    f = lambda a: coef.lam - 2j * coef.hbar_m * a * a  # noqa: E731
    a = np.asarray(a0, dtype=complex).copy()
    per = int(round(1.0 / h))
    out = [a.copy()]
    for _ in range(int(round(t_end))):
        for _ in range(per):
            k1 = f(a)
            k2 = f(a + 0.5 * h * k1)
            k3 = f(a + 0.5 * h * k2)
            k4 = f(a + h * k3)
            a = a + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(a.copy())
    return np.array(out)


@_timed(2, "Riccati closed form vs RK4")
def riccati_oracle(seed=DEFAULT_SEED, n=None):
    rng = stochastic.path_rng(seed, 2)
    n0 = 100
    a0 = rng.uniform(0.05, 3.0, n0) + 1j * rng.uniform(-3.0, 3.0, n0)
    ref = _riccati_rk4(a0, 10.0, 2e-4)
    t = np.arange(ref.shape[0], dtype=float)
    exact = np.array([gauss1.a_exact(t, a) for a in a0]).T
    err = float(np.max(np.abs(exact - ref) / np.abs(ref)))
    return err < 1e-8, {"max_rel_err": err, "n_a0": n0}


@_timed(3, "positivity of Re a_t")
def positivity_sweep(seed=DEFAULT_SEED, n=None):
    rng = stochastic.path_rng(seed, 3)
    n0 = 1000
    a0 = rng.uniform(1e-3, 10.0, n0) + 1j * rng.uniform(-10.0, 10.0, n0)
    t = np.linspace(0.0, 50.0, 5001)
    worst = min(float(np.min(gauss1.a_exact(t, a).real)) for a in a0)
    return worst > 0, {"min_re_a": worst, "n_a0": n0}


@_timed(4, "situation A and s_infinity")
def situation_a(seed=DEFAULT_SEED, n=None):
    X0 = 3.0
    t = np.linspace(0.0, 20.0, 201)
    X, _ = gauss2.xk_evolve(X0, 0.0, DIMLESS.a_inf, t)
    ref = gauss2.situation_a_X(t, X0)
    # X crosses zero, so the error is taken relative to the envelope X0 e^{-t/2}
    env = X0 * np.exp(-0.5 * DIMLESS.omega * t)
    err = float(np.max(np.abs(X - ref) / env))
    s_inf, n_int = stochastic.s_infinity(lambda tt: gauss2.situation_a_X(tt, X0), DIMLESS.lam, 60.0, rtol=1e-9)
    s_ref = DIMLESS.lam * X0**2 / (2.0 * DIMLESS.omega)
    s_err = _rel(s_inf, s_ref)
    return err < 1e-8 and s_err < 1e-6, {"X_rel_err": err, "s_inf": s_inf, "s_inf_ref": s_ref, "s_rel_err": s_err}


def _var_se(x):
    m = x.mean()
    s2 = x.var(ddof=1)
    m4 = np.mean((x - m) ** 4)
    return s2, math.sqrt(max(m4 - s2**2, 0.0) / len(x))


@_timed(5, "hitting-time Monte Carlo")
def hitting_mc(seed=DEFAULT_SEED, n=None):
    N = n or 10_000
    dt_s, s_max = 1e-3, 40.0
    cfg = gauss2.HittingConfig(b=2.0, b0=0.0, eta=1.0)
    st = gauss2.hitting_stats(cfg)
    r = gauss2.reduced_gamma_ensemble(cfg, N, s_max, dt_s, seed)
    T = r.hit_time[~r.censored]
    mean, se = T.mean(), T.std(ddof=1) / math.sqrt(len(T))
    var, var_se = _var_se(T)
    plus = float(np.mean(r.hit_sign > 0))
    plus_sd = math.sqrt(0.25 / N)
    cfg2 = gauss2.HittingConfig(b=2.0, b0=0.5, eta=1.0)
    st2 = gauss2.hitting_stats(cfg2)
    r2 = gauss2.reduced_gamma_ensemble(cfg2, N, s_max, dt_s, seed + 1)
    p2 = float(np.mean(r2.hit_sign > 0))
    p2_sd = math.sqrt(st2.p_collapse_2 * (1 - st2.p_collapse_2) / N)
    # discrete-monitoring bias, measured by a refined run on a quarter of the paths
    rf = gauss2.reduced_gamma_ensemble(cfg, max(N // 4, 1), s_max, dt_s / 4, seed + 2)
    d = {
        "mean": mean, "mean_oracle": st.mean_S, "mean_z": (mean - st.mean_S) / se,
        "var": var, "var_oracle": st.var_S, "var_z": (var - st.var_S) / var_se,
        "plus_fraction": plus, "plus_z": (plus - 0.5) / plus_sd,
        "born_fraction": p2, "born_oracle": st2.p_collapse_2, "born_z": (p2 - st2.p_collapse_2) / p2_sd,
        "censored": int(r.censored.sum() + r2.censored.sum()),
        "mean_refined_dt_quarter": float(np.nanmean(rf.hit_time)),
    }
    ok = (abs(d["mean_z"]) < 3 and abs(d["var_z"]) < 4 and abs(d["plus_z"]) < 3 and abs(d["born_z"]) < 3
          and d["censored"] == 0)
    return ok, d


@_timed(6, "post-hit delocalization bound")
def delocalization(seed=DEFAULT_SEED, n=None):
    N = n or 10_000
    cfg = gauss2.HittingConfig(b=2.0, b0=0.0, eta=1.0)
    r = gauss2.reduced_gamma_ensemble(cfg, N, 40.0, 1e-3, seed, track_dip=True)
    freq = float(r.dipped.mean())
    bound = gauss2.hitting_stats(cfg).p_deloc_bound
    return freq <= bound, {"dip_frequency": freq, "bound": bound, "stderr": math.sqrt(freq * (1 - freq) / N)}


def _single_stats(seed, N, scenario, params):
    spec = ensemble.EnsembleSpec(scenario, N, seed=seed, dt=1e-3, horizon=5.0, record_every=100, chunk=2500,
                                 params=params)
    return ensemble.run_ensemble(spec)


@_timed(7, "ensemble classicality")
def classicality(seed=DEFAULT_SEED, n=None):
    N = n or 10_000
    k0 = 0.5
    st = _single_stats(seed, N, "single", {"a0": 0.5 + 0.2j, "k0": k0})
    flat = ensemble.score_against_oracle(st, "p", np.full_like(st.t, k0))
    drift = ensemble.score_against_oracle(st, "q", DIMLESS.hbar_m * k0 * st.t)
    ss = _single_stats(seed + 1, N, "stationary", {})
    rate = float(np.polyfit(ss.t, ss.mean["energy"], 1)[0])
    rate_ref = 0.5 * DIMLESS.lam * DIMLESS.hbar_m
    vp = ss.variance("p")[1:] / ss.t[1:]
    vp_err = float(np.max(np.abs(vp / DIMLESS.lam - 1.0)))
    d = {"p_flat_exceed": flat.exceed, "p_flat_max_z": float(np.max(np.abs(flat.z))),
         "q_drift_exceed": drift.exceed, "q_drift_max_z": float(np.max(np.abs(drift.z))),
         "energy_rate": rate, "energy_rate_ref": rate_ref, "energy_rel_err": _rel(rate, rate_ref),
         "Vp_over_t_max_rel_err": vp_err}
    ok = (np.all(np.abs(flat.z) < 3) and np.all(np.abs(drift.z) < 3) and d["energy_rel_err"] < 0.05
          and vp_err < 0.05)
    return ok, d


@_timed(8, "covariance ODEs vs Monte Carlo")
def covariances(seed=DEFAULT_SEED, n=None):
    N = n or 10_000
    a0 = 0.5 + 0.2j
    st = _single_stats(seed, N, "single", {"a0": a0, "k0": 0.5})
    cv = gauss1.covariance_evolution(st.t, a0)
    d = {}
    ok = True
    for pair, ref in ((("q", "q"), cv.C_q2), (("q", "p"), cv.C_qp), (("p", "p"), cv.C_p2)):
        rep = ensemble.score_against_oracle(st, pair, ref, kind="covariance")
        d["".join(pair)] = {"fraction": rep.fraction, "max_z": float(np.max(np.abs(rep.z)))}
        ok &= rep.fraction < 0.01
    return ok, d


def _grid_vs_gauss_distance(increments, dt, T=5.0, a0=0.5 + 0.1j, x0=0.3, k0=0.4):
    psi0 = grid.gaussian_wave(a0, x0, k0, 1024, 40.0)
    every = int(round(0.25 / dt))
    tr = grid.evolve_nonlinear(psi0, T, dt, increments, record_every=every, keep_states=True, with_delta_A=False)
    mp = gauss1.simulate_means(a0, x0, k0, increments, dt, record_every=every)
    dist = []
    for j in range(len(tr.t)):
        ref = gauss1.GaussianState(complex(mp.a[j]), mp.x_bar[0, j], mp.k_bar[0, j]).amplitude(psi0.x)
        ref = ref / math.sqrt(np.sum(np.abs(ref) ** 2) * psi0.dx)
        dist.append(float(grid.l2_distance(tr.states[j][0], ref, psi0.dx, align_phase=True)))
    return np.array(dist)


@_timed(9, "grid vs Gaussian on shared noise")
def grid_vs_gauss(seed=DEFAULT_SEED, n=None):
    # one Brownian path at two resolutions: coarse increments are sums of fine pairs
    fine = stochastic.sample_path(5.0, 5e-5, seed)
    coarse = fine.increments.reshape(-1, 2).sum(axis=1)
    d1 = _grid_vs_gauss_distance(coarse, 1e-4).max()
    d2 = _grid_vs_gauss_distance(fine.increments, 5e-5).max()
    return d1 < 1e-3 and d2 < d1, {"max_l2_dt": float(d1), "max_l2_half_dt": float(d2), "ratio": float(d1 / d2)}


@_timed(10, "collapse diagnostic E[Delta A]")
def collapse_diagnostic(seed=DEFAULT_SEED, n=None):
    N = max(n or 500, 500)
    spec = ensemble.EnsembleSpec("grid", N, seed=seed, dt=1e-3, horizon=5.0, record_every=250, chunk=250,
                                 observables=("delta_A",), params={"X0": 4.0, "n_points": 512, "L": 64.0})
    st = ensemble.run_ensemble(spec)
    rep = grid.collapse_convergence_report(st.t, st.mean["delta_A"], st.stderr("delta_A"), n_paths=st.n)
    d = {"initial": float(rep.mean[0]), "terminal": float(rep.mean[-1]), "terminal_ratio": rep.terminal_ratio,
         "worst_rise_se": rep.worst_rise, "late_rate": rep.late_rate, "within_envelope": rep.within_envelope}
    return rep.monotone and rep.terminal_ratio < 0.1, d


@_timed(11, "unraveling consistency")
def unraveling(seed=DEFAULT_SEED, n=None):
    N = n or 2000
    a0, T = 0.5 + 0.5j, 1.0
    spec = ensemble.EnsembleSpec("grid-density", N, seed=seed, dt=1e-3, horizon=T, chunk=500,
                                 params={"a0": a0, "n_points": 512, "L": 64.0})
    st = ensemble.run_ensemble(spec)
    x = st.t
    dens = master.DensityProfile(x, st.mean["density"], T).normalized()
    pS = master.pure_schrodinger_density(x, T, (a0, 0.0, 0.0))
    pt = master.density_convolve(pS, T)
    l1 = master.l1_distance(dens, pt)
    return l1 < 0.02, {"l1_master": l1, "l1_schroedinger_only": master.l1_distance(dens, pS), "n_paths": N}


def _within_factor(v, ref, f):
    return ref / f <= v <= ref * f


@_timed(12, "physical magnitudes")
def magnitudes(seed=DEFAULT_SEED, n=None):
    nuc = units.derive_constants(units.ModelParams.preset("nucleon"))
    ele = units.derive_constants(units.ModelParams.preset("electron"))
    gram = units.derive_constants(units.ModelParams.preset("gram"))
    kg = units.derive_constants(units.ModelParams(m=1.0))
    a_kg = master.alpha(kg, 1.0)
    e_tb = units.macro_micro_estimates(ele.params, 1.0)["E_Tb"]
    d = {"omega_nucleon": nuc.omega, "sigma_q_nucleon_cm": nuc.sigma_q_inf * 100,
         "sigma_q_electron_m": ele.sigma_q_inf, "sigma_q_gram_m": gram.sigma_q_inf, "alpha_1kg_1s": a_kg,
         "E_Tb_electron_s": e_tb, "energy_rate_J_per_s": nuc.energy_rate}
    checks = {
        "omega": 1e-5 <= nuc.omega < 1e-4,
        "sigma_nucleon": 0.3 <= d["sigma_q_nucleon_cm"] <= 30,
        "sigma_electron": 0.3 <= ele.sigma_q_inf <= 3,
        "sigma_gram": _within_factor(gram.sigma_q_inf, 1e-13, 3),
        "alpha": _within_factor(a_kg, 1e43, 10),
        "E_Tb": _within_factor(e_tb, 1e6, 5),
        "energy_rate": _within_factor(nuc.energy_rate, 1e-43, 10),
    }
    d["checks"] = checks
    return all(checks.values()), d


@_timed(13, "g bound and sandwich")
def bounds_and_sandwich(seed=DEFAULT_SEED, n=None):
    N = n or 1000
    s0 = gauss2.double_gaussian_state(4.0, n_paths=100)
    dW = stochastic.increments_block(seed, range(100), 10_000, 1e-3)
    full = gauss2.simulate_double(s0, dW, 1e-3, record_every=10_000)
    d = {"g_bound_violations": full.bound_violations, "max_g_ratio": full.max_g_ratio}
    ok = full.bound_violations == 0
    cfg = gauss2.HittingConfig(b=2.0, b0=0.0, eta=1.0)
    for c in (0.0, 0.582):
        sw = gauss2.bounding_sandwich(c, cfg, seed, N, s_max=20.0)
        d[f"reduced_c{c}"] = {k: sw[k] for k in ("violations", "up_hit_ordered", "mean_up_minus",
                                                  "mean_up_tilde", "mean_up_plus")}
        ok &= sw["violations"] == 0 and sw["up_hit_ordered"]
        if c == 0.0:
            ok &= sw["identical_when_c0"]
    # the full process obeys the c = 0.582 bracket while a_R X^2 >= 4 (here |X| >= 4)
    s1 = gauss2.double_gaussian_state(20.0, n_paths=N)
    dW1 = stochastic.increments_block(seed + 1, range(N), 5000, 1e-4)
    fs = gauss2.simulate_double(s1, dW1, 1e-4, record_every=5000, sandwich_c=0.582)
    d["full_c0.582"] = {"violations": fs.sandwich["violations"], "min_abs_X": float(np.min(np.abs(fs.X)))}
    ok &= fs.sandwich["violations"] == 0
    return ok, d


CRITERIA = [closed_forms, riccati_oracle, positivity_sweep, situation_a, hitting_mc, delocalization,
            classicality, covariances, grid_vs_gauss, collapse_diagnostic, unraveling, magnitudes,
            bounds_and_sandwich]

SUITES = {
    "closed-forms": [1, 2, 3, 4, 12],
    "monte-carlo": [5, 6, 7, 8, 13],
    "grid-vs-gauss": [9],
    "grid": [9, 10, 11],
    "all": list(range(1, 14)),
}


def run_suite(name: str = "all", seed: int = DEFAULT_SEED, n: int | None = None, echo=None) -> list:
    if name not in SUITES:
        raise ensemble.ConfigurationError(f"unknown suite {name!r}; known: {sorted(SUITES)}")
    out = []
    for k in SUITES[name]:
        res = CRITERIA[k - 1](seed=seed, n=n)
        if echo:
            echo(res.line())
        out.append(res)
    return out


def format_table(results) -> str:
    lines = [r.line() for r in results]
    n_ok = sum(r.passed for r in results)
    lines.append(f"{n_ok}/{len(results)} passed")
    return "\n".join(lines)
