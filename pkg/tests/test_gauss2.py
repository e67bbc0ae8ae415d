import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qmupl import gauss1, gauss2
from qmupl.stochastic import increments_block
from qmupl.units import DIMLESS, Coefficients, ParameterError


def test_limit_matrix_spectrum():
    A, mu = gauss2.a_infinity_system()
    assert np.trace(A) == pytest.approx(-DIMLESS.omega)
    assert np.linalg.det(A) == pytest.approx(2 * DIMLESS.lam * DIMLESS.hbar_m)
    ev = np.sort_complex(np.linalg.eigvals(A))
    assert np.allclose(ev, np.sort_complex(mu), atol=1e-14)
    for m in mu:
        assert m * m + DIMLESS.omega * m + 2 * DIMLESS.lam * DIMLESS.hbar_m == pytest.approx(0, abs=1e-14)


def test_xk_matrix_tends_to_limit():
    A, _ = gauss2.a_infinity_system()
    A1, A2 = gauss2.xk_matrix(80.0, 2.0 + 1j)
    assert A1 == pytest.approx(-A[0, 0], rel=1e-12)
    assert A2 == pytest.approx(-A[1, 0], rel=1e-12)


def test_situation_a_closed_form():
    t = np.linspace(0, 12, 25)
    X, K = gauss2.xk_evolve(1.0, 0.0, DIMLESS.a_inf, t)
    assert np.allclose(X, gauss2.situation_a_X(t, 1.0), atol=1e-10)


def test_free_separation():
    c0 = Coefficients(lam=0.0)
    t = np.linspace(0, 3, 7)
    X, K = gauss2.xk_evolve(0.5, 0.2, 0.4 + 0.1j, t, c0)
    assert np.allclose(X, 0.5 + 0.2 * t, atol=1e-12)
    assert np.allclose(K, 0.2, atol=1e-15)


def test_separation_decays():
    X, K = gauss2.xk_evolve(3.0, 1.0, 1.5 - 0.5j, [40.0], h=5e-3)
    assert abs(X[0]) < 3e-8 and abs(K[0]) < 3e-8


def test_amplitude_and_mean_agree_with_quadrature():
    s = gauss2.double_gaussian_state(1.0, K0=0.3, a0=0.4 - 0.2j, b0=0.7, center=0.2)
    x = np.linspace(-20, 20, 40001)
    d = np.abs(s.amplitude(x)) ** 2
    ref = np.trapezoid(x * d, x) / np.trapezoid(d, x)
    assert float(gauss2.quantum_mean_double(s)) == pytest.approx(ref, abs=1e-6)


def test_mean_limits():
    sym = gauss2.double_gaussian_state(6.0, center=1.5)
    assert float(gauss2.quantum_mean_double(sym)) == pytest.approx(1.5, abs=1e-12)
    heavy = gauss2.double_gaussian_state(6.0, b0=800.0)
    assert float(gauss2.quantum_mean_double(heavy)) == pytest.approx(3.0, abs=1e-12)
    light = gauss2.double_gaussian_state(6.0, b0=-800.0)
    assert float(gauss2.quantum_mean_double(light)) == pytest.approx(-3.0, abs=1e-12)


@given(st.floats(0.01, 8.0), st.floats(-3.0, 3.0), st.floats(-30.0, 30.0), st.floats(-3.0, 3.0),
       st.floats(0.05, 3.0), st.floats(-2.0, 2.0))
def test_g_bounded(X, K, b0, phase, ar, ai):
    s = gauss2.double_gaussian_state(X, K0=K, a0=complex(ar, ai), b0=b0)
    s = gauss2.DoubleGaussianState(**{**s.__dict__, "gamma_2": s.gamma_2 + 1j * phase})
    cv = gauss2.collapse_variables(s)
    g = gauss2.g_term(cv)
    assert abs(float(g)) <= float(gauss2.g_bound(cv, ar)) * (1 + 1e-12) + 1e-300


def test_g_vanishes_for_distant_branches():
    s = gauss2.double_gaussian_state(200.0, b0=0.3)
    assert float(gauss2.g_term(gauss2.collapse_variables(s))) == 0.0


def test_reduced_drift_when_g_vanishes():
    s = gauss2.double_gaussian_state(200.0, b0=0.3)
    new = gauss2.gamma_full_step(s, 0.0, 0.01, 1e-3)
    X = 200.0
    ref = 0.3 + DIMLESS.lam * X**2 * math.tanh(0.3) * 1e-3 + math.sqrt(DIMLESS.lam) * X * 0.01
    assert float(new) == pytest.approx(ref, rel=1e-14)


def test_branch_update_matches_gamma_equation():
    s = gauss2.double_gaussian_state(1.5, K0=0.2, a0=0.3 - 0.1j, b0=0.4, n_paths=1)
    dt = 1e-5
    new, _ = gauss2.step_double(s, np.array([0.002]), dt)
    ref = gauss2.gamma_full_step(s, None, np.array([0.002]), dt)
    assert np.real(new.Gamma)[0] == pytest.approx(ref[0], abs=1e-8)


def test_log_c_bound():
    assert gauss2.log_c_bound(1.0, 2.0) == pytest.approx(-math.log(math.expm1(1.0)), rel=1e-14)
    big = gauss2.log_c_bound(4.0, 1e11)
    assert big == pytest.approx(-1e22, rel=1e-14)
    # both branches of the switch at z = 30 give the same value there
    z = 30.0
    X = math.sqrt(4 * z)
    assert gauss2.log_c_bound(1.0, X * (1 - 1e-12)) == pytest.approx(-math.log(math.expm1(z)), rel=1e-10)
    assert gauss2.log_c_bound(1.0, X * (1 + 1e-12)) == pytest.approx(-math.log(math.expm1(z)), rel=1e-10)
    with pytest.raises(ParameterError):
        gauss2.log_c_bound(0.0, 1.0)


def test_simulate_double_bound_holds():
    s = gauss2.double_gaussian_state(2.0, K0=0.5, a0=0.6 + 0.3j, b0=0.1, n_paths=50)
    dW = increments_block(4, range(50), 400, 1e-3)
    p = gauss2.simulate_double(s, dW, 1e-3, record_every=100)
    assert p.bound_violations == 0
    assert p.max_g_ratio <= 1.0
    assert p.Gamma_R.shape == (50, 5)
    assert np.all(np.diff(p.s, axis=1) >= 0)


def test_sandwich_with_zero_c_is_identity_on_reduced_equation():
    r = gauss2.bounding_sandwich(0.0, gauss2.HittingConfig(b=4.0), seed=3, n_paths=200, s_max=5.0, dt_s=1e-3)
    assert r["violations"] == 0
    assert r["mean_up_minus"] == r["mean_up_tilde"] == r["mean_up_plus"]


def test_sandwich_ordering():
    r = gauss2.bounding_sandwich(0.5, gauss2.HittingConfig(b=4.0), seed=3, n_paths=200, s_max=8.0, dt_s=1e-3)
    assert r["violations"] == 0
    assert r["up_hit_ordered"]
    assert r["mean_up_plus"] <= r["mean_up_tilde"] <= r["mean_up_minus"]


def test_hitting_stats_identities():
    h = gauss2.hitting_stats(gauss2.HittingConfig(b=6.0, b0=0.0))
    assert h.p_collapse_2 == 0.5 and h.mean_S == pytest.approx(6 * math.tanh(6))
    for b0 in (-2.0, 0.3, 5.9):
        h = gauss2.hitting_stats(gauss2.HittingConfig(b=6.0, b0=b0))
        assert h.p_collapse_1 + h.p_collapse_2 == pytest.approx(1.0, abs=1e-15)
        assert h.var_S > 0


def test_hitting_config_validation():
    with pytest.raises(ParameterError):
        gauss2.HittingConfig(b=2.0, b0=3.0, eta=1.0)
    with pytest.raises(ParameterError):
        gauss2.HittingConfig(b=2.0, eta=2.5)
    c = gauss2.HittingConfig(b=2.0, b0=2.0, eta=1.0)
    with pytest.raises(ParameterError):
        c.check_interior()


def test_boundary_start_hits_immediately():
    r = gauss2.reduced_gamma_ensemble(gauss2.HittingConfig(b=2.0, b0=2.0, eta=1.0), 5, 1.0, 1e-3, seed=1)
    assert np.all(r.hit_time == 0) and np.all(r.hit_sign == 1)


@given(st.floats(-20, 20))
def test_F_even(x):
    assert float(gauss2.F(x)) == pytest.approx(float(gauss2.F(-x)), abs=1e-9)


def test_F_increasing_on_positive_axis():
    x = np.linspace(0, 30, 3001)
    assert np.all(np.diff(gauss2.F(x)) > 0)


def test_born_rule():
    r = gauss2.born_rule_check(0.0, 0.5, 10.0)
    assert abs(r["norm_ratio"] - r["exact"]) < 0.01
    r = gauss2.born_rule_check(-0.2, -0.2, 8.0)
    assert r["norm_ratio"] == pytest.approx(0.5) and r["exact"] == pytest.approx(0.5)
    with pytest.raises(ParameterError):
        gauss2.born_rule_check(0.0, 1.0, 4.0)


def test_normalized_initial_state():
    s = gauss2.double_gaussian_state(20.0, b0=0.0, a0=0.3 + 0.1j)
    x = np.linspace(-40, 40, 80001)
    n2 = np.trapezoid(np.abs(s.amplitude(x)) ** 2, x)
    assert n2 == pytest.approx(2.0, rel=1e-8)
    assert gauss1.norm_squared(np.real(s.gamma_1), 0.3) == pytest.approx(1.0)
