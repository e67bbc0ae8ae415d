import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qmupl import ensemble, gauss1
from qmupl.ensemble import EnsembleSpec, MomentStats
from qmupl.units import DIMLESS


def _samples(rng, n, k=4):
    a = rng.normal(size=(n, k)) * 3 + 1
    return {"a": a, "b": 0.5 * a + rng.normal(size=(n, k))}


@given(st.lists(st.integers(1, 40), min_size=1, max_size=6), st.integers(0, 2**31))
@settings(max_examples=40)
def test_merge_equals_single_pass(sizes, seed):
    rng = np.random.default_rng(seed)
    data = _samples(rng, sum(sizes))
    t = np.arange(4.0)
    whole = MomentStats.from_samples(t, data, [("a", "b")])
    parts, start = [], 0
    for s in sizes:
        parts.append(MomentStats.from_samples(t, {k: v[start:start + s] for k, v in data.items()}, [("a", "b")]))
        start += s
    merged = parts[0]
    for p in parts[1:]:
        merged = merged.merge(p)
    assert merged.n == whole.n
    for k in data:
        assert np.allclose(merged.mean[k], whole.mean[k], rtol=1e-12, atol=1e-12)
        assert np.allclose(merged.m2[k], whole.m2[k], rtol=1e-12, atol=1e-10)
    assert np.allclose(merged.comoment[("a", "b")], whole.comoment[("a", "b")], rtol=1e-12, atol=1e-10)


def test_merge_is_associative():
    rng = np.random.default_rng(1)
    t = np.arange(4.0)
    x, y, z = (MomentStats.from_samples(t, _samples(rng, n), [("a", "b")]) for n in (3, 7, 11))
    left, right = x.merge(y).merge(z), x.merge(y.merge(z))
    for k in ("a", "b"):
        assert np.allclose(left.mean[k], right.mean[k], rtol=1e-13)
        assert np.allclose(left.m2[k], right.m2[k], rtol=1e-12)


def test_single_path_variance_undefined():
    s = MomentStats.from_samples([0.0, 1.0], {"a": np.array([[1.0, 2.0]])})
    assert not s.variance_defined
    assert np.all(np.isnan(s.variance("a")))


def test_merge_rejects_different_grids():
    a = MomentStats.from_samples([0.0, 1.0], {"a": np.ones((2, 2))})
    b = MomentStats.from_samples([0.0, 2.0], {"a": np.ones((2, 2))})
    with pytest.raises(ensemble.ParameterError):
        a.merge(b)


def test_covariance_stderr_reduces_to_variance_formula():
    rng = np.random.default_rng(2)
    s = MomentStats.from_samples([0.0], {"a": rng.normal(size=(500, 1))})
    v = s.variance("a")
    assert np.allclose(s.covariance_stderr("a", "a"), np.sqrt(2 * v**2 / 499))


def test_seed_determinism_and_worker_invariance():
    spec = EnsembleSpec("single", n_paths=130, seed=4, horizon=0.5, record_every=100, chunk=32)
    s1 = ensemble.run_ensemble(spec)
    s2 = ensemble.run_ensemble(spec, workers=3)
    s3 = ensemble.run_ensemble(EnsembleSpec("single", n_paths=130, seed=4, horizon=0.5, record_every=100, chunk=130))
    for k in s1.mean:
        assert np.array_equal(s1.mean[k], s2.mean[k])
        assert np.array_equal(s1.m2[k], s2.m2[k])
        assert np.allclose(s1.mean[k], s3.mean[k], rtol=1e-12, atol=1e-15)
    other = ensemble.run_ensemble(EnsembleSpec("single", n_paths=130, seed=5, horizon=0.5, record_every=100))
    assert not np.array_equal(s1.mean["q"], other.mean["q"])


def test_stderr_shrinks_with_paths():
    kw = dict(seed=6, horizon=2.0, record_every=2000, observables=("q",))
    small = ensemble.run_ensemble(EnsembleSpec("stationary", n_paths=1000, **kw))
    big = ensemble.run_ensemble(EnsembleSpec("stationary", n_paths=4000, **kw))
    ratio = small.stderr("q")[-1] / big.stderr("q")[-1]
    assert ratio == pytest.approx(2.0, rel=0.1)


def test_spec_validation():
    with pytest.raises(ensemble.ConfigurationError):
        EnsembleSpec("nope", n_paths=10)
    with pytest.raises(ensemble.ConfigurationError):
        EnsembleSpec("single", n_paths=0)
    with pytest.raises(ensemble.ConfigurationError):
        ensemble.run_ensemble(EnsembleSpec("single", n_paths=2, horizon=0.01, observables=("missing",)))


def test_content_hash_tracks_parameters():
    a = EnsembleSpec("single", n_paths=10, seed=1)
    assert a.content_hash() == EnsembleSpec("single", n_paths=10, seed=1).content_hash()
    assert a.content_hash() != EnsembleSpec("single", n_paths=10, seed=2).content_hash()


def test_stationary_ensemble_against_closed_forms():
    spec = EnsembleSpec("stationary", n_paths=4000, seed=8, horizon=3.0, record_every=250)
    s = ensemble.run_ensemble(spec)
    cov = lambda t: gauss1.stationary_covariance(t)  # noqa: E731
    assert ensemble.score_against_oracle(s, "q", np.zeros_like(s.t)).passed
    assert ensemble.score_against_oracle(s, "q", lambda t: cov(t).C_q2, kind="variance").passed
    assert ensemble.score_against_oracle(s, ("q", "p"), lambda t: cov(t).C_qp, kind="covariance").passed
    assert ensemble.score_against_oracle(s, "p", lambda t: DIMLESS.lam * t, kind="variance").passed


def test_oracle_scoring_discriminates():
    rng = np.random.default_rng(3)
    t = np.linspace(0, 1, 200)
    s = MomentStats.from_samples(t, {"a": rng.normal(size=(400, 200))})
    ok = ensemble.score_against_oracle(s, "a", np.zeros(200))
    assert ok.passed and ok.allowed >= 1
    shifted = ensemble.score_against_oracle(s, "a", np.full(200, -10 / math.sqrt(400)))
    assert not shifted.passed and shifted.exceed == 200
    with pytest.raises(ensemble.ParameterError):
        ensemble.score_against_oracle(s, "a", np.zeros(5))


def test_norm_scenario_is_martingale():
    s = ensemble.run_ensemble(EnsembleSpec("norm", n_paths=5000, seed=2, horizon=1.0, record_every=100))
    assert ensemble.score_against_oracle(s, "norm2", np.ones_like(s.t)).passed


def test_hitting_scenario_matches_probability():
    spec = EnsembleSpec("hitting", n_paths=2000, seed=1, dt=1e-3, horizon=40.0,
                        params={"b": 2.0, "b0": 0.5, "eta": 1.0})
    s = ensemble.run_ensemble(spec)
    p2 = (math.tanh(2.0) + math.tanh(0.5)) / (2 * math.tanh(2.0))
    assert abs(s.mean["plus"][0] - p2) < 4 * s.stderr("plus")[0]
    assert s.mean["censored"][0] == 0


def test_csv_and_manifest(tmp_path):
    spec = EnsembleSpec("single", n_paths=20, seed=1, horizon=0.1, record_every=50)
    s = ensemble.run_ensemble(spec)
    ensemble.write_stats_csv(tmp_path / "a.csv", s, {"q": np.zeros_like(s.t)})
    rows = (tmp_path / "a.csv").read_text().splitlines()
    assert rows[0] == "t,observable,mean,stderr,oracle,z"
    assert len(rows) == 1 + 3 * len(s.t)
    m = ensemble.manifest_entry(spec)
    assert m["config_hash"] == spec.content_hash()
