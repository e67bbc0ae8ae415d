"""Command line: scenario config, subcommand dispatch, CSV/SVG output and a hashed manifest.

Exit codes: 0 success, 2 configuration or parameter error, 3 numerical
failure, 4 acceptance failure in `verify`.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, acceptance, ensemble, gauss1, gauss2, grid, master, units
from .grid import ContainmentError
from .stochastic import increments_block, n_steps_for, sample_path
from .units import DIMLESS, ParameterError

log = logging.getLogger("qmupl")

EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 2, 3, 4
SUBCOMMANDS = ("constants", "single", "double", "grid", "master", "hitting", "ensemble", "verify")


class SchemaError(ParameterError):
    """Config file does not follow the schema."""


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s: str):
    return [float(v) for v in str(s).split(",") if v.strip()]


# section -> key -> parser
SCHEMA = {
    "particle": {"preset": str, "m": float, "nucleons": float, "m0": float, "lambda0": float},
    "run": {"seed": int, "out": str, "format": str, "dt": float, "horizon": float, "n_paths": int,
            "scenario": str, "suite": str, "chunk": int, "record_every": int, "points": int, "log_time": _bool},
    "model": {"b": float, "b0": float, "eta": float, "X0": float, "K0": float, "a0": complex, "x0": float,
              "k0": float, "sigma0": _floats, "n_points": int, "L": float, "t": float, "snapshots": int},
}
FLAT_KEYS = {k: sec for sec, keys in SCHEMA.items() for k in keys}


@dataclass
class ScenarioConfig:
    values: dict = field(default_factory=dict)

    def get(self, key, default=None):
        return self.values.get(key, default)

    def set(self, key: str, raw):
        if key not in FLAT_KEYS:
            raise SchemaError(f"unknown key {key!r}")
        parser = SCHEMA[FLAT_KEYS[key]][key]
        try:
            self.values[key] = parser(raw) if isinstance(raw, str) else raw
        except ValueError as exc:
            raise SchemaError(f"bad value for {key!r}: {exc}") from None

    def params(self) -> units.ModelParams:
        preset = self.get("preset", "nucleon")
        extra = {k: self.values[k] for k in ("m0", "lambda0") if k in self.values}
        if preset == "custom":
            if "nucleons" in self.values:
                return units.ModelParams.nucleons(self.values["nucleons"], **extra)
            if "m" in self.values:
                return units.ModelParams(m=self.values["m"], **extra)
            raise SchemaError("preset 'custom' needs m or nucleons")
        if "m" in self.values or "nucleons" in self.values:
            raise SchemaError("m / nucleons only apply to preset 'custom'")
        return units.ModelParams.preset(preset, **extra)

    def as_dict(self) -> dict:
        return {k: (str(v) if isinstance(v, complex) else v) for k, v in sorted(self.values.items())}


def load_config(path) -> ScenarioConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise SchemaError(f"cannot read config: {exc}") from None
    cfg = ScenarioConfig()
    for section in cp.sections():
        if section not in SCHEMA:
            raise SchemaError(f"unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in SCHEMA[section]:
                raise SchemaError(f"unknown key {key!r} in [{section}]")
            cfg.set(key, raw)
    return cfg


# --- output helpers ---

def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header, rows) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def line_chart_svg(path: Path, x, series: dict, title: str = "", xlabel: str = "", ylabel: str = "",
                   logx: bool = False, logy: bool = False, width: int = 640, height: int = 420) -> Path:
    """Minimal SVG line chart; non-finite or non-positive (on log axes) points are dropped."""
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"]
    x = np.asarray(x, dtype=float)
    tx = np.log10 if logx else (lambda v: v)
    ty = np.log10 if logy else (lambda v: v)
    pts = {}
    for name, y in series.items():
        y = np.asarray(y, dtype=float)
        ok = np.isfinite(x) & np.isfinite(y)
        if logx:
            ok &= x > 0
        if logy:
            ok &= y > 0
        pts[name] = (tx(x[ok]), ty(y[ok]))
    allx = np.concatenate([p[0] for p in pts.values()]) if pts else np.array([0.0, 1.0])
    ally = np.concatenate([p[1] for p in pts.values()]) if pts else np.array([0.0, 1.0])
    x0, x1 = float(allx.min()), float(allx.max())
    y0, y1 = float(ally.min()), float(ally.max())
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0
    ml, mr, mt, mb = 70, 20, 30, 50
    pw, ph = width - ml - mr, height - mt - mb
    sx = lambda v: ml + (v - x0) / (x1 - x0) * pw  # noqa: E731
    sy = lambda v: mt + ph - (v - y0) / (y1 - y0) * ph  # noqa: E731
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" '
           f'font-size="11">',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>',
           f'<text x="{width / 2}" y="18" text-anchor="middle" font-size="13">{title}</text>',
           f'<text x="{ml + pw / 2}" y="{height - 10}" text-anchor="middle">{xlabel}</text>',
           f'<text x="14" y="{mt + ph / 2}" text-anchor="middle" transform="rotate(-90 14 {mt + ph / 2})">'
           f'{ylabel}</text>']
    for i in range(5):
        fx = x0 + (x1 - x0) * i / 4
        fy = y0 + (y1 - y0) * i / 4
        lx = f"1e{fx:.1f}" if logx else f"{fx:.3g}"
        ly = f"1e{fy:.1f}" if logy else f"{fy:.3g}"
        out.append(f'<text x="{sx(fx):.1f}" y="{mt + ph + 15}" text-anchor="middle">{lx}</text>')
        out.append(f'<text x="{ml - 5}" y="{sy(fy) + 4:.1f}" text-anchor="end">{ly}</text>')
    for j, (name, (px, py)) in enumerate(pts.items()):
        c = colors[j % len(colors)]
        if len(px):
            d = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(px, py))
            out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{d}"/>')
        out.append(f'<text x="{ml + 8}" y="{mt + 14 + 13 * j}" fill="{c}">{name}</text>')
    out.append("</svg>")
    path.write_text("\n".join(out) + "\n")
    return path


def sha256_of(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, command: str, cfg: ScenarioConfig, files) -> Path:
    # the output location is not part of the scenario
    content = {k: v for k, v in cfg.as_dict().items() if k != "out"}
    blob = json.dumps({"command": command, "config": content}, sort_keys=True).encode()
    manifest = {
        "version": __version__,
        "command": command,
        "config": cfg.as_dict(),
        "config_hash": hashlib.sha256(blob).hexdigest(),
        "files": [{"path": p.name, "sha256": sha256_of(p)} for p in files],
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


# --- subcommands; each returns (files, exit status) ---

def _wants(cfg, kind):
    return cfg.get("format", "csv") in (kind, "both")


def cmd_constants(cfg: ScenarioConfig, out: Path):
    p = cfg.params()
    c = units.derive_constants(p)
    rows = [("m", p.m, "kg"), ("lambda", c.lam, "m^-2 s^-1"), ("omega", c.omega, "s^-1"),
            ("time_unit", 1.0 / c.omega, "s"), ("length_unit", c.length_unit, "m"),
            ("sigma_q_inf", c.sigma_q_inf, "m"), ("sigma_p_inf", c.sigma_p_inf, "kg m s^-1"),
            ("a_inf_re", c.a_inf.real, "m^-2"), ("a_inf_im", c.a_inf.imag, "m^-2"),
            ("energy_rate", c.energy_rate, "J s^-1"), ("alpha_1s", master.alpha(c, 1.0), "m^-2")]
    if cfg.get("X0") is not None:
        est = units.macro_micro_estimates(p, cfg.get("X0"), cfg.get("b", units.DEFAULT_B))
        rows += [("E_Tb", est["E_Tb"], "s"), ("fluct_rate", est["fluct_rate"], "m^2 s^-1")]
    for name, v, u in rows:
        print(f"{name:12s} {v:.6g} {u}")
    return [write_csv(out / "constants.csv", ["quantity", "value", "unit"], rows)], 0


def _time_grid(cfg, horizon_dimless):
    n = cfg.get("points", 400)
    if cfg.get("log_time", True):
        return np.concatenate([[0.0], np.logspace(math.log10(horizon_dimless) - 11, math.log10(horizon_dimless), n)])
    return np.linspace(0.0, horizon_dimless, n + 1)


def cmd_single(cfg: ScenarioConfig, out: Path):
    """Spread of a single Gaussian in SI units: free spreading against the stochastic law."""
    p = cfg.params()
    sc = units.Scale.for_params(p)
    coef = sc.coefficients()
    sigmas = cfg.get("sigma0", [1e-3])
    horizon = cfg.get("horizon", 10.0 / sc.constants.omega)
    t = _time_grid(cfg, sc.to_dimless("t", horizon))
    cols = {"t_s": sc.to_si("t", t)}
    for s0 in sigmas:
        s0d = sc.to_dimless("sigma_q", s0)
        a0 = complex(1.0 / (4.0 * s0d**2))
        cols[f"sigma_schroedinger_{s0:g}"] = sc.to_si("sigma_q", gauss1.schroedinger_sigma_q(t, s0d, coef.hbar_m))
        cols[f"sigma_stochastic_{s0:g}"] = sc.to_si("sigma_q", gauss1.spreads(t, a0, coef)[0])
    files = [write_csv(out / "single.csv", list(cols), zip(*cols.values()))]
    for s0 in sigmas:
        final = cols[f"sigma_stochastic_{s0:g}"][-1]
        print(f"sigma0={s0:g} m: stochastic spread at t={horizon:.3g} s is {final:.4g} m "
              f"(stationary {sc.constants.sigma_q_inf:.4g} m)")
    if _wants(cfg, "svg"):
        series = {k: v for k, v in cols.items() if k != "t_s"}
        files.append(line_chart_svg(out / "single.svg", cols["t_s"], series, title="position spread",
                                    xlabel="t [s]", ylabel="sigma_q [m]", logx=True, logy=True))
    return files, 0


def cmd_double(cfg: ScenarioConfig, out: Path):
    n = cfg.get("n_paths", 100)
    dt = cfg.get("dt", 1e-3)
    horizon = cfg.get("horizon", 10.0)
    steps = n_steps_for(horizon, dt)
    every = cfg.get("record_every", max(1, steps // 500))
    if steps % every:
        raise ParameterError("record_every must divide the number of steps")
    s0 = gauss2.double_gaussian_state(cfg.get("X0", 4.0), cfg.get("K0", 0.0), cfg.get("a0"), cfg.get("b0", 0.0),
                                      n_paths=n)
    dW = increments_block(cfg.get("seed", 0), range(n), steps, dt)
    dp = gauss2.simulate_double(s0, dW, dt, record_every=every)
    files = [write_csv(out / "double.csv", ["t", "X", "Gamma_R", "q_mean", "s"],
                       zip(dp.t, dp.X[0], dp.Gamma_R[0], dp.q_mean[0], dp.s[0]))]
    final = dp.Gamma_R[:, -1]
    files.append(write_csv(out / "outcomes.csv", ["path", "Gamma_R_final", "s_final", "branch"],
                           [(i, final[i], dp.s[i, -1], 2 if final[i] > 0 else 1) for i in range(n)]))
    print(f"{n} paths: branch 2 fraction {np.mean(final > 0):.3f}; g bound violations {dp.bound_violations}")
    if _wants(cfg, "svg"):
        files.append(line_chart_svg(out / "double.svg", dp.t, {"Gamma_R": dp.Gamma_R[0], "X": dp.X[0]},
                                    title="double Gaussian, path 0", xlabel="t [1/omega]"))
    return files, 0


def _initial_wave(cfg):
    n, L = cfg.get("n_points", 1024), cfg.get("L", 40.0)
    if cfg.get("X0") is not None:
        s = gauss2.double_gaussian_state(cfg.get("X0"), cfg.get("K0", 0.0), cfg.get("a0"), cfg.get("b0", 0.0))
        return grid.from_function(s.amplitude, n, L)
    return grid.gaussian_wave(cfg.get("a0", DIMLESS.a_inf), cfg.get("x0", 0.0), cfg.get("k0", 0.0), n, L)


def cmd_grid(cfg: ScenarioConfig, out: Path):
    dt = cfg.get("dt", 1e-4)
    horizon = cfg.get("horizon", 5.0)
    psi0 = _initial_wave(cfg)
    path = sample_path(horizon, dt, cfg.get("seed", 0))
    snaps = cfg.get("snapshots", 5)
    steps = path.n_steps
    every = cfg.get("record_every", max(1, steps // 500))
    if steps % every:
        raise ParameterError("record_every must divide the number of steps")
    tr = grid.evolve_nonlinear(psi0, horizon, dt, path, record_every=every, keep_states=True)
    files = [grid.write_summary_csv(out / "summary.csv", tr)]
    for j in np.unique(np.linspace(0, len(tr.t) - 1, snaps + 1).round().astype(int)):
        files.append(grid.write_snapshot_csv(out / f"snapshot_{j:05d}.csv", tr.state(j)))
    print(f"final <q>={tr.q[0, -1]:.5g} sigma_q={tr.sigma_q[0, -1]:.5g} delta_A={tr.delta_A[0, -1]:.3g}; "
          f"max norm drift per step {tr.max_norm_drift:.2e}")
    if _wants(cfg, "svg"):
        files.append(line_chart_svg(out / "summary.svg", tr.t, {"sigma_q": tr.sigma_q[0], "delta_A": tr.delta_A[0]},
                                    title="grid trajectory", xlabel="t [1/omega]"))
    return files, 0


def cmd_master(cfg: ScenarioConfig, out: Path):
    n, L = cfg.get("n_points", 512), cfg.get("L", 64.0)
    t = cfg.get("t", 1.0)
    a0 = complex(cfg.get("a0", 0.5))
    x = grid.grid_x(n, L)
    pS = master.pure_schrodinger_density(x, t, (a0, cfg.get("x0", 0.0), cfg.get("k0", 0.0)))
    pt = master.density_convolve(pS, t)
    files = [master.write_density_csv(out / "density.csv", pS, pt, names=["p_schroedinger", "p_t"])]
    files.append(write_csv(out / "master_summary.csv", ["quantity", "value"],
                           [("t", t), ("alpha_t", master.alpha(DIMLESS, t)), ("regime", pt.regime),
                            ("l1_shift", master.l1_distance(pS, pt))]))
    print(f"t={t:g}: alpha_t={master.alpha(DIMLESS, t):.4g}, regime {pt.regime}")
    if _wants(cfg, "svg"):
        files.append(line_chart_svg(out / "density.svg", x, {"Schroedinger": pS.values, "averaged": pt.values},
                                    title="position density", xlabel="x [ell]"))
    return files, 0


def cmd_hitting(cfg: ScenarioConfig, out: Path):
    hc = gauss2.HittingConfig(b=cfg.get("b", 2.0), b0=cfg.get("b0", 0.0), eta=cfg.get("eta", 1.0))
    st = gauss2.hitting_stats(hc)
    n = cfg.get("n_paths", 10_000)
    dt = cfg.get("dt", 1e-3)
    s_max = cfg.get("horizon", 40.0)
    r = gauss2.reduced_gamma_ensemble(hc, n, s_max, dt, cfg.get("seed", 0), track_dip=True)
    T = r.hit_time[~r.censored]
    plus = float(np.mean(r.hit_sign > 0))
    dip = float(np.mean(r.dipped))
    rows = [
        ("mean_S", st.mean_S, T.mean(), T.std(ddof=1) / math.sqrt(len(T))),
        ("var_S", st.var_S, T.var(ddof=1), ""),
        ("p_collapse_2", st.p_collapse_2, plus, math.sqrt(plus * (1 - plus) / n)),
        ("p_deloc", st.p_deloc_bound, dip, math.sqrt(dip * (1 - dip) / n)),
        ("censored", 0, int(r.censored.sum()), ""),
    ]
    for name, f, mc, se in rows:
        print(f"{name:14s} formula {_fmt(f):>22s}  mc {_fmt(mc):>22s}")
    return [write_csv(out / "hitting.csv", ["quantity", "formula", "mc", "stderr"], rows)], 0


ENSEMBLE_PARAM_KEYS = ("a0", "x0", "k0", "X0", "K0", "b0", "b", "eta", "n_points", "L")


def cmd_ensemble(cfg: ScenarioConfig, out: Path):
    params = {k: cfg.get(k) for k in ENSEMBLE_PARAM_KEYS if cfg.get(k) is not None}
    try:
        spec = ensemble.EnsembleSpec(cfg.get("scenario", "single"), cfg.get("n_paths", 1000), seed=cfg.get("seed", 0),
                                     dt=cfg.get("dt", 1e-3), horizon=cfg.get("horizon", 1.0),
                                     record_every=cfg.get("record_every", 1), chunk=cfg.get("chunk", 500),
                                     params=params)
    except ensemble.ConfigurationError as exc:
        raise SchemaError(str(exc)) from None
    st = ensemble.run_ensemble(spec)
    files = [ensemble.write_stats_csv(out / "stats.csv", st)]
    (out / "ensemble.json").write_text(json.dumps(ensemble.manifest_entry(spec), indent=2, sort_keys=True) + "\n")
    files.append(out / "ensemble.json")
    print(f"{spec.scenario}: {st.n} paths, observables {', '.join(st.observables())}")
    if _wants(cfg, "svg") and len(st.t) > 1:
        files.append(line_chart_svg(out / "stats.svg", st.t, {k: st.mean[k] for k in st.observables()},
                                    title=f"ensemble means: {spec.scenario}", xlabel="t"))
    return files, 0


def cmd_verify(cfg: ScenarioConfig, out: Path):
    suite = cfg.get("suite", "all")
    if suite not in acceptance.SUITES:
        raise SchemaError(f"unknown suite {suite!r}; known: {sorted(acceptance.SUITES)}")
    results = acceptance.run_suite(suite, seed=cfg.get("seed", acceptance.DEFAULT_SEED), n=cfg.get("n_paths"),
                                   echo=print)
    print(f"{sum(r.passed for r in results)}/{len(results)} passed")
    rows = [(r.number, r.title, "pass" if r.passed else "fail", json.dumps(r.details, sort_keys=True, default=str))
            for r in results]
    files = [write_csv(out / "verify.csv", ["criterion", "title", "result", "details"], rows)]
    return files, 0 if all(r.passed for r in results) else EXIT_VERIFY


COMMANDS = {"constants": cmd_constants, "single": cmd_single, "double": cmd_double, "grid": cmd_grid,
            "master": cmd_master, "hitting": cmd_hitting, "ensemble": cmd_ensemble, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qmupl", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        if name == "verify":
            sp.add_argument("suite", nargs="?", help=f"one of {sorted(acceptance.SUITES)}")
        sp.add_argument("--config", help="INI file with [particle], [run], [model] sections")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory (default out/<command>)")
        sp.add_argument("--format", choices=("csv", "svg", "both"))
        sp.add_argument("--preset", choices=sorted(units.PRESET_MASSES) + ["custom"])
        sp.add_argument("--nucleons", type=float, help="mass in nucleon masses (preset custom)")
        sp.add_argument("--sigma0", help="initial spread(s) in m, comma separated")
        sp.add_argument("--n", type=int, dest="n_paths", help="number of paths")
        sp.add_argument("--horizon", type=float)
        sp.add_argument("--dt", type=float)
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def _fail(code: int, category: str, message: str) -> int:
    print(json.dumps({"error": category, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config) if args.config else ScenarioConfig()
        for key in ("seed", "out", "format", "preset", "nucleons", "sigma0", "n_paths", "horizon", "dt"):
            v = getattr(args, key)
            if v is not None:
                cfg.set(key, v)
        for item in args.set:
            if "=" not in item:
                raise SchemaError(f"--set expects KEY=VALUE, got {item!r}")
            k, v = item.split("=", 1)
            cfg.set(k.strip(), v.strip())
        if args.command == "verify" and args.suite:
            cfg.set("suite", args.suite)
        if cfg.get("nucleons") is not None and cfg.get("preset") is None:
            cfg.set("preset", "custom")
        if cfg.get("format", "csv") not in ("csv", "svg", "both"):
            raise SchemaError("format must be csv, svg or both")
        out = Path(cfg.get("out") or Path("out") / args.command)
        out.mkdir(parents=True, exist_ok=True)
        with np.errstate(over="raise", invalid="raise", divide="raise", under="ignore"):
            files, status = COMMANDS[args.command](cfg, out)
        manifest = write_manifest(out, args.command, cfg, files)
        print(f"wrote {len(files)} files and {manifest}")
        return status
    except ParameterError as exc:
        return _fail(EXIT_CONFIG, "configuration", str(exc))
    except (ContainmentError, FloatingPointError, ArithmeticError, RuntimeError) as exc:
        return _fail(EXIT_NUMERIC, "numeric", f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
