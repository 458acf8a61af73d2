import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robosync import controller as ctl
from robosync import manipulator as mm
from robosync.errors import DimensionMismatch, ValidationError
from robosync.rbf import build_lattice, regressor


def test_errors_and_filtered_signal():
    e, ed, r = ctl.tracking_errors(np.array([0.2, 0.1]), np.array([0.0, 1.0]), np.zeros(2), np.array([0.5, 0.0]), 5.0)
    np.testing.assert_allclose(e, [0.2, 0.1])
    np.testing.assert_allclose(ed, [-0.5, 1.0])
    np.testing.assert_allclose(r, [0.5, 1.5])


def test_reference_signals_make_r_a_velocity_gap():
    rng = np.random.default_rng(0)
    q, qd, xh, xhd, xhdd = rng.normal(size=(5, 3, 2))
    lam = np.array([1.0, 5.0, 2.5])
    e, ed, r = ctl.tracking_errors(q, qd, xh, xhd, lam)
    xr_d, xr_dd = ctl.reference_signals(xhd, xhdd, e, ed, lam)
    np.testing.assert_allclose(r, qd - xr_d, atol=1e-14)


def test_nn_input_selection():
    parts = [np.full(2, k, dtype=float) for k in range(4)]
    np.testing.assert_array_equal(ctl.nn_input(*parts, (0, 1, 2, 3)), [0, 0, 1, 1])
    np.testing.assert_array_equal(ctl.nn_input(*parts, tuple(range(8))), [0, 0, 1, 1, 2, 2, 3, 3])


def test_torque_with_zero_weights_is_pure_feedback():
    lat = build_lattice(4, 4, (-1.2, 1.2), 0.8)
    W = np.zeros((256, 2))
    r = np.array([1.0, -0.3])
    tau = ctl.control_torque(W, lat, np.zeros(4), r, 10 * np.eye(2))
    np.testing.assert_allclose(tau, [-10.0, 3.0])


def test_adaptation_law_columns():
    rng = np.random.default_rng(1)
    W, S, r = rng.normal(size=(6, 2)), rng.uniform(size=6), np.array([0.4, -1.0])
    dW = ctl.adapt_weights(W, S, r, 10.0, 0.001)
    for j in range(2):
        np.testing.assert_allclose(dW[:, j], -10.0 * (S * r[j] + 0.001 * W[:, j]))


def test_adaptation_zero_gamma_freezes():
    W = np.ones((4, 2))
    assert not ctl.adapt_weights(W, np.ones(4), np.ones(2), 0.0, 0.001).any()


def test_target_function_oracle_matches_inverse_dynamics():
    p = mm.REFERENCE_ARMS[3]
    q, qd, a = np.array([0.3, -0.4]), np.array([0.2, 0.9]), np.array([-1.0, 0.5])
    # with xr_dot = qdot, H reduces to the inverse dynamics at acceleration xr_ddot
    np.testing.assert_allclose(ctl.target_function(p, q, qd, qd, a), mm.inverse_dynamics(p, q, qd, a), rtol=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 50), st.floats(0.1, 50), st.floats(-0.99, 0.99))
def test_symmetric_pd_gain_accepted(a, b, corr):
    off = corr * np.sqrt(a * b)
    gains = ctl.ControllerGains(K=((a, off), (off, b)))
    assert gains.K_matrix(2).shape == (2, 2)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"K": -1.0},
        {"K": 0.0},
        {"K": ((1.0, 2.0), (2.0, 1.0))},
        {"K": ((1.0, 0.5), (0.0, 1.0))},
        {"lam": 0.0},
        {"Gamma": -1.0},
        {"sigma": 0.0},
    ],
)
def test_gain_positivity(kwargs):
    with pytest.raises(ValidationError) as info:
        ctl.ControllerGains(**kwargs)
    if "K" in kwargs:
        assert "gain positivity" in str(info.value)


def test_shape_mismatch():
    with pytest.raises(DimensionMismatch):
        ctl.tracking_errors(np.zeros(2), np.zeros(3), np.zeros(2), np.zeros(2), 1.0)
    with pytest.raises(DimensionMismatch):
        ctl.torque_from_regressor(np.zeros((5, 2)), np.zeros(4), np.zeros(2), np.eye(2))


def test_ideal_weights_cancel_the_plant():
    # with W^T S = H exactly and r = 0 the closed loop follows xr_ddot
    lat = build_lattice(4, 4, (-1.2, 1.2), 0.8)
    p = mm.REFERENCE_ARMS[0]
    q, qd = np.array([0.1, 0.2]), np.array([0.3, -0.1])
    xr_d, xr_dd = qd.copy(), np.array([0.5, -0.2])
    H = ctl.target_function(p, q, qd, xr_d, xr_dd)
    S = regressor(lat, np.concatenate([q, qd]))
    W = np.outer(S, H) / (S @ S)  # minimum-norm weights reproducing H at this input
    tau = ctl.torque_from_regressor(W, S, qd - xr_d, 10 * np.eye(2))
    np.testing.assert_allclose(mm.forward_dynamics(p, q, qd, tau), xr_dd, atol=1e-12)


def test_logged_r_is_filtered_error():
    from robosync.config import default_config
    from robosync.engine import Simulation, rk4_step

    cfg = default_config()
    sim = Simulation(cfg)
    y = sim.initial_state()
    for k in range(50):
        t = k * 1e-3
        sig = sim.signals(t, y)
        w, d = sim.world(t, y), sim.world(t, sim.vector_field(t, y))
        e = w.x[:, :2] - w.chi_hat[:, :2]
        e_dot = w.x[:, 2:] - d.chi_hat[:, :2]
        np.testing.assert_array_equal(sig["e"], e)
        np.testing.assert_array_equal(sig["r"], e_dot + 5.0 * e)
        y = rk4_step(sim, t, y, 1e-3)


def test_closed_loop_error_equation():
    from robosync.config import default_config
    from robosync.engine import Simulation, rk4_step

    cfg = default_config()
    sim = Simulation(cfg)
    y = sim.initial_state()
    for k in range(200):
        y = rk4_step(sim, k * 1e-3, y, 1e-3)
    t, h = 0.2, 1e-6
    sig = sim.signals(t, y)
    r_next = sim.signals(t + h, rk4_step(sim, t, y, h))["r"]
    r_dot = (r_next - sig["r"]) / h
    w = sim.world(t, y)
    S = regressor(sim.lattice, sig["Z"])
    for i, p in enumerate(mm.REFERENCE_ARMS):
        q, qd = w.x[i, :2], w.x[i, 2:]
        M, C = mm.mass_matrix(p, q), mm.coriolis_matrix(p, q, qd)
        rhs = w.W[i].T @ S[i] - sig["H"][i] - 10.0 * sig["r"][i] - C @ sig["r"][i]
        np.testing.assert_allclose(M @ r_dot[i], rhs, atol=1e-4 * (1 + np.abs(rhs).max()))
