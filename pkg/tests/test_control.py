import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import signal

from drivetrain_mfc.control import (ControllerConfig, EstimatorState, FFConfig, IPGains, IPIPController,
                                    NotReady, PPIController, PPIGains, derivative_estimate, f_hat_update,
                                    ip_law, make_controller, model_ff, model_ff_tf)
from drivetrain_mfc.errors import InvalidParameterError


# --- derivative estimator -----------------------------------------------------

@pytest.mark.parametrize("n", [2, 3, 5, 9, 21])
def test_derivative_of_constant_and_line(n):
    h = 1e-3
    t = h * np.arange(n)
    assert derivative_estimate(np.full(n, 4.2), h) == pytest.approx(0.0, abs=1e-9)
    assert derivative_estimate(3 * t, h) == pytest.approx(3.0, rel=1e-12)


def test_derivative_quadratic_example():
    h = 1e-3
    t = np.arange(6, 11) * h
    # least-squares line through (t, t^2) has slope 2 * mean(t)
    assert derivative_estimate(t**2, h) == pytest.approx(0.016, rel=1e-9)
    assert derivative_estimate(t**2, h) == pytest.approx(np.polyfit(t, t**2, 1)[0], rel=1e-9)


def test_derivative_two_samples_is_backward_difference():
    assert derivative_estimate([1.0, 1.5], 0.1) == pytest.approx(5.0)


@settings(max_examples=50)
@given(st.lists(st.floats(-100, 100), min_size=2, max_size=21), st.floats(1e-4, 1e-1))
def test_derivative_matches_polyfit(ys, h):
    t = h * np.arange(len(ys))
    assert derivative_estimate(ys, h) == pytest.approx(np.polyfit(t, ys, 1)[0], rel=1e-6, abs=1e-6 / h)


def test_derivative_not_ready():
    with pytest.raises(NotReady):
        derivative_estimate([1.0], 1e-3)


# --- F_hat estimator ---------------------------------------------------------

def test_f_hat_quadratic_output():
    h = 1e-3
    st_ = EstimatorState(n_d=2)
    for k in range(20):
        tk = k * h
        try:
            F = f_hat_update(st_, tk**2, 1.0, 2.0, h)
        except NotReady:
            continue
    # backward difference of t^2 at t_k is 2 t_k - h
    assert F == pytest.approx(2 * tk - h - 2.0, abs=1e-9)


def test_f_hat_constant_output():
    st_ = EstimatorState(n_d=5)
    for _ in range(5):
        try:
            F = f_hat_update(st_, 3.0, 0.0, 1.0, 1e-3)
        except NotReady:
            pass
    assert F == pytest.approx(0.0, abs=1e-12)


def test_f_hat_not_ready_then_ready():
    st_ = EstimatorState(n_d=3)
    for _ in range(2):
        with pytest.raises(NotReady):
            f_hat_update(st_, 0.0, 0.0, 1.0, 1e-3)
    assert f_hat_update(st_, 0.0, 0.0, 1.0, 1e-3) == 0.0


def test_f_hat_scalar_plant_converges():
    h, F, alpha = 1e-3, 0.7, 1.5
    st_ = EstimatorState(n_d=5)
    y, u_prev = 0.0, 0.0
    for k in range(60):
        try:
            Fh = f_hat_update(st_, y, u_prev, alpha, h)
        except NotReady:
            Fh = None
        u = 0.3 * math.sin(2 * math.pi * 0.5 * k * h)
        y += h * (F + alpha * u)
        u_prev = u
        if k >= 20 + st_.n_d:
            assert abs(Fh - F) < 0.01


def test_f_hat_rejects_zero_alpha():
    with pytest.raises(InvalidParameterError):
        f_hat_update(EstimatorState(), 0.0, 0.0, 0.0, 1e-3)


# --- iP law ------------------------------------------------------------------

def test_ip_law_example():
    # (Kp e + dy_ref - F_hat) / alpha
    assert ip_law(0.1, 0.5, 0.2, 10.0, 2.0) == pytest.approx(0.65, rel=1e-12)


def test_ip_law_cancellation_and_outer_example():
    assert ip_law(0.0, 0.3, 0.3, 7.0, 3.0) == 0.0
    assert ip_law(0.0, 0.0, -0.4, 0.0, 1.0) == pytest.approx(0.4)


@given(e=st.floats(-10, 10), d=st.floats(-10, 10), F=st.floats(-10, 10),
       Kp=st.floats(0, 100), alpha=st.floats(0.1, 100))
def test_ip_law_affine(e, d, F, Kp, alpha):
    de = 1e-3
    u0 = ip_law(e, d, F, Kp, alpha)
    assert (ip_law(e + de, d, F, Kp, alpha) - u0) / de == pytest.approx(Kp / alpha, rel=1e-5, abs=1e-6)
    assert (ip_law(e, d, F + de, Kp, alpha) - u0) / de == pytest.approx(-1 / alpha, rel=1e-5, abs=1e-6)


def test_ip_law_large_alpha_suppresses_f_hat():
    assert abs(ip_law(0.1, 0.2, 5.0, 10.0, 1e9) - ip_law(0.1, 0.2, 0.0, 10.0, 1e9)) < 1e-8


def test_ip_closed_loop_decay():
    Kp, alpha, F, h = 20.0, 1.0, 0.5, 1e-4
    st_ = EstimatorState(n_d=2)
    y, u = 1.0, 0.0
    ys = []
    for k in range(int(0.25 / h) + 1):
        try:
            Fh = f_hat_update(st_, y, u, alpha, h)
        except NotReady:
            Fh = F
        u = ip_law(0.0 - y, 0.0, Fh, Kp, alpha)
        ys.append(y)
        y += h * (F + alpha * u)
    assert abs(ys[-1]) <= abs(ys[0]) / 100


# --- P-PI ----------------------------------------------------------------------

def _ppi(**gains):
    return PPIController(ControllerConfig(kind="ppi", ppi=PPIGains(**gains)), ff_gain=0.02, h_ctrl=1e-3)


def test_ppi_zero():
    c = _ppi()
    assert c.step(0.0, 0.0, 0.0, 0.0, 0.0)[:2] == (0.0, 0.0)


def test_ppi_outer_example():
    c = _ppi(Kp_o=50.0)
    u1, *_ = c.step(0.0, 1.1, 0.002, 1.0, 0.0)
    assert u1 == pytest.approx(1.1)


def test_ppi_integral_example():
    c = _ppi(Kp_o=0.0, Kp_i=2.0, Ki_i=100.0)
    for _ in range(10):
        # no outer action, omega_m = -0.1 so e_m = 0.1
        u1, u2, *_ = c.step(0.0, -0.1, 0.0, 0.0, 0.0)
    assert c.S[0] == pytest.approx(0.1, rel=1e-12)
    assert u2 == pytest.approx(0.3, rel=1e-12)


def test_ppi_kinematic_feedforward_passes_through():
    c = _ppi()
    u1, u2, *_ = c.step(0.0, 0.7, 0.0, 0.7, 3.0)
    assert u1 == pytest.approx(0.7)
    assert u2 == pytest.approx(0.02 * 3.0)


def test_ppi_antiwindup_clamp():
    c = _ppi(Ki_i=1e4, integrator_limit=2.0)
    for _ in range(500):
        c.step(0.0, -100.0, 0.0, 0.0, 0.0)
        assert abs(c.S[0]) <= 2.0
    assert c.S[0] == pytest.approx(2.0)


def test_current_saturation_flag():
    c = PPIController(ControllerConfig(i_max=1.0), 0.02, 1e-3)
    _, u2, *_ = c.step(0.0, -100.0, 0.0, 0.0, 0.0)
    assert u2 == 1.0 and c.saturated


# --- iP-iP ---------------------------------------------------------------------

def _ipip(n_d=2, **kw):
    cfg = ControllerConfig(kind="ipip", ip=IPGains(**kw), n_d=n_d)
    return IPIPController(cfg, ff_gain=0.02, h_ctrl=1e-3)


def test_ipip_warmup_is_proportional():
    c = _ipip(n_d=5, alpha1=2.0, Kp_o_star=10.0)
    u1, _, F1, F2 = c.step(0.0, 0.0, 0.1, 0.0, 0.0)
    assert u1 == pytest.approx(10.0 * 0.1 / 2.0)
    assert F1 == 0.0 and F2 == 0.0


def test_ipip_zero_error_passes_feedforward():
    # reference moving at constant speed and measurements tracking it exactly
    c = _ipip(n_d=2)
    h, v = 1e-3, 0.4
    for k in range(10):
        th = v * k * h
        u1, u2, F1, F2 = c.step(th, v, th, v, 0.0)
    # after warm-up the outer F_hat equals dy_hat - alpha1 * phi_prev
    assert u1 == pytest.approx(v, abs=1e-9)
    assert u2 == pytest.approx(0.0, abs=1e-9)


def test_ipip_deterministic():
    rng = np.random.default_rng(0)
    data = rng.normal(size=(200, 5))

    def go():
        c = _ipip(n_d=5)
        return np.array([c.step(*row) for row in data])

    np.testing.assert_array_equal(go(), go())


def test_ipip_large_alpha_removes_f_hat_influence():
    c = _ipip(alpha1=1e9, alpha2=1e9)
    rng = np.random.default_rng(1)
    for row in rng.normal(size=(50, 5)):
        u1, u2, *_ = c.step(*row)
        # feedback contributions are O(1/alpha) per step; only the kinematic terms remain
        assert u1 == pytest.approx(row[3], abs=1e-4)
        assert u2 == pytest.approx(0.02 * row[4], abs=1e-4)


def test_make_controller_kind():
    assert isinstance(make_controller(ControllerConfig(kind="ipip"), 0.02, 1e-3), IPIPController)
    assert isinstance(make_controller(ControllerConfig(), 0.02, 1e-3), PPIController)


def test_controller_config_validation():
    with pytest.raises(InvalidParameterError):
        ControllerConfig(kind="pid").validate()
    with pytest.raises(InvalidParameterError):
        ControllerConfig(n_d=1).validate()
    with pytest.raises(InvalidParameterError):
        ControllerConfig(ip=IPGains(alpha1=0.0)).validate()
    with pytest.raises(InvalidParameterError):
        ControllerConfig(ppi=PPIGains(Kp_o=-1)).validate()
    with pytest.raises(InvalidParameterError):
        ControllerConfig(ff=FFConfig(ff_D1=1.5)).validate()


# --- model-based feedforward -------------------------------------------------------

@pytest.mark.parametrize("ratio", [1.0, 0.5, 3.0])
def test_model_ff_dc_gain(ratio):
    num, den = model_ff_tf(55.0, 0.13, ratio)
    assert num[-1] / den[-1] == pytest.approx(1 + ratio, rel=1e-12)
    y = model_ff(np.ones(20000), 55.0, 0.13, ratio, 1e-3)
    assert y[-1] == pytest.approx(1 + ratio, rel=1e-9)


def test_model_ff_matches_tustin_oracle():
    u = np.sin(np.linspace(0, 20, 3000))
    num, den = model_ff_tf(40.0, 0.1, 1.0)
    # independent bilinear discretization
    b, a = signal.bilinear(num, den, fs=1e3)
    np.testing.assert_allclose(model_ff(u, 40.0, 0.1, 1.0, 1e-3), signal.lfilter(b, a, u), rtol=1e-9, atol=1e-12)


def test_model_ff_rejects_bad_params():
    with pytest.raises(InvalidParameterError):
        model_ff_tf(55.0, 0.0, 1.0)
