import csv
import json

import pytest

from qmupl import cli


def run(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = cli.main([*args, "--out", str(out)])
    return code, out


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_constants_electron(tmp_path, capsys):
    code, out = run(tmp_path, "constants", "--preset", "electron")
    assert code == 0
    rows = {r[0]: float(r[1]) for r in read_rows(out / "constants.csv")[1:]}
    assert 0.5 < rows["sigma_q_inf"] < 5.0
    man = json.loads((out / "manifest.json").read_text())
    assert man["files"][0]["path"] == "constants.csv"
    assert man["files"][0]["sha256"] == cli.sha256_of(out / "constants.csv")


def test_single_macro_body_stays_localized(tmp_path):
    code, out = run(tmp_path, "single", "--nucleons", "1e24", "--sigma0", "1e-2,1e-6", "--horizon", "1e-2",
                    "--set", "points=50")
    assert code == 0
    rows = read_rows(out / "single.csv")
    header, last = rows[0], rows[-1]
    for name, v in zip(header, last):
        if name.startswith("sigma_stochastic"):
            assert float(v) < 1e-7


def test_outputs_are_byte_identical(tmp_path):
    args = ("double", "--n", "20", "--horizon", "1", "--seed", "3")
    _, a = run(tmp_path, *args, name="a")
    _, b = run(tmp_path, *args, name="b")
    for f in ("double.csv", "outcomes.csv"):
        assert (a / f).read_bytes() == (b / f).read_bytes()
    ma, mb = (json.loads((d / "manifest.json").read_text()) for d in (a, b))
    assert ma["config_hash"] == mb["config_hash"]
    assert ma["files"] == mb["files"]
    _, c = run(tmp_path, "double", "--n", "20", "--horizon", "1", "--seed", "4", name="c")
    assert json.loads((c / "manifest.json").read_text())["config_hash"] != ma["config_hash"]


def test_grid_and_svg(tmp_path):
    code, out = run(tmp_path, "grid", "--horizon", "0.2", "--dt", "1e-3", "--format", "both",
                    "--set", "n_points=256", "--set", "L=40", "--set", "snapshots=2")
    assert code == 0
    assert (out / "summary.csv").exists() and (out / "summary.svg").read_text().startswith("<svg")
    assert len(list(out.glob("snapshot_*.csv"))) == 3


def test_master(tmp_path):
    code, out = run(tmp_path, "master", "--set", "t=2")
    assert code == 0
    summary = {r[0]: r[1] for r in read_rows(out / "master_summary.csv")[1:]}
    assert summary["regime"] == "resolved"
    assert float(summary["alpha_t"]) == pytest.approx(6 / 8)


def test_hitting(tmp_path):
    code, out = run(tmp_path, "hitting", "--n", "500", "--set", "b=2", "--set", "b0=0.5")
    assert code == 0
    rows = {r[0]: r for r in read_rows(out / "hitting.csv")[1:]}
    assert abs(float(rows["p_collapse_2"][1]) - float(rows["p_collapse_2"][2])) < 4 * float(rows["p_collapse_2"][3])


def test_ensemble_config_file(tmp_path):
    ini = tmp_path / "e.ini"
    ini.write_text("[run]\nscenario = stationary\nn_paths = 50\nhorizon = 0.5\nrecord_every = 100\n")
    code, out = run(tmp_path, "ensemble", "--config", str(ini))
    assert code == 0
    assert json.loads((out / "ensemble.json").read_text())["n_paths"] == 50


def test_unknown_key_exits_2(tmp_path, capsys):
    ini = tmp_path / "bad.ini"
    ini.write_text("[run]\nbogus = 1\n")
    code, _ = run(tmp_path, "constants", "--config", str(ini))
    assert code == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "configuration"
    assert run(tmp_path, "ensemble", "--set", "scenario=nope")[0] == 2
    assert run(tmp_path, "hitting", "--set", "b=-1")[0] == 2


def test_containment_exits_3(tmp_path, capsys):
    code, _ = run(tmp_path, "grid", "--horizon", "2", "--dt", "1e-3", "--set", "n_points=256", "--set", "L=12",
                  "--set", "k0=6")
    assert code == 3
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"] == "numeric"


def test_verify_suite(tmp_path):
    code, out = run(tmp_path, "verify", "closed-forms")
    assert code == 0
    rows = read_rows(out / "verify.csv")[1:]
    assert [int(r[0]) for r in rows] == [1, 2, 3, 4, 12]
    assert all(r[2] == "pass" for r in rows)


def test_readme_config_example_loads(tmp_path):
    import re
    from pathlib import Path

    text = (Path(__file__).resolve().parents[1] / "README.md").read_text()
    ini = tmp_path / "r.ini"
    ini.write_text(re.search(r"```ini\n(.*?)```", text, re.S).group(1))
    cfg = cli.load_config(ini)
    assert cfg.get("preset") == "nucleon" and cfg.get("a0") == 0.5 + 0.5j
    assert cfg.get("sigma0") == [1e-3, 1e-6]
    assert run(tmp_path, "constants", "--config", str(ini))[0] == 0
