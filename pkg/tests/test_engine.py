from dataclasses import replace

import numpy as np
import pytest
from synthetic import make_log

from robosync.config import bundled_scenario, default_config, parse_and_validate
from robosync.engine import (
    Layout,
    ObserverNetwork,
    Simulation,
    WorldState,
    compute_metrics,
    integrate,
    leader_only_config,
    rk4_step,
    run_experiment,
    settling_time,
)
from robosync.errors import EmptyLog, NumericalBlowup, TorqueCapExceeded, ValidationError
from robosync.graph import chain
from robosync.leader import DEFAULT_A0, DEFAULT_CHI0, LeaderSystem, closed_form_default_leader, leader_vector_field
from robosync.rbf import regressor

LEADER = LeaderSystem(DEFAULT_A0, DEFAULT_CHI0)


@pytest.fixture(scope="module")
def chain_cfg():
    return parse_and_validate(bundled_scenario("chain"))


def short(cfg, duration, **kw):
    return cfg.with_sim(duration=duration, window=(duration / 2, duration), **kw)


def test_rk4_exact_on_cubic():
    # RK4 integrates y' = 3 t^2 exactly (polynomial of degree < 4 in t)
    y = integrate(lambda t, y: 3 * t**2 * np.ones_like(y), np.zeros(1), 0.1, 10)
    assert y[0] == pytest.approx(1.0, abs=1e-14)


def test_rk4_single_step_exponential():
    y = rk4_step(lambda t, y: -y, 0.0, np.array([1.0]), 0.1)
    assert y[0] == pytest.approx(1 - 0.1 + 0.1**2 / 2 - 0.1**3 / 6 + 0.1**4 / 24, abs=1e-15)


def test_layout_and_world_roundtrip():
    lay = Layout(followers=3, joints=2, nodes=16)
    assert lay.size == 4 + 12 + 48 + 12 + 96
    y = np.arange(lay.size, dtype=float)
    w = WorldState.view(lay, 0.0, y)
    assert w.W.shape == (3, 16, 2) and w.A_hat.shape == (3, 4, 4)
    np.testing.assert_array_equal(w.flatten(), y)
    w.x[1, 0] = -5.0
    assert y[4 + 12 + 48 + 4] == -5.0


def test_leader_only_world_reduces_to_leader_field():
    cfg = leader_only_config(LEADER, 1e-3, 1.0)
    sim = Simulation(cfg)
    y = np.array([0.3, -0.2, 0.9, 0.1])
    np.testing.assert_array_equal(sim.vector_field(0.0, y), leader_vector_field(LEADER, y))


def test_leader_only_rk4_against_closed_form():
    cfg = leader_only_config(LEADER, 1e-3, 10.0)
    sim = Simulation(cfg)
    y = integrate(sim.vector_field, sim.initial_state(), 1e-3, cfg.sim.steps)
    assert np.abs(y - closed_form_default_leader(10.0)).max() < 1e-9


def test_zero_field_leaves_world_unchanged():
    cfg = leader_only_config(LeaderSystem(np.zeros((4, 4)), DEFAULT_CHI0), 1e-3, 0.1)
    sim = Simulation(cfg)
    y0 = sim.initial_state()
    np.testing.assert_array_equal(integrate(sim.vector_field, y0, 1e-3, 100), y0)


def test_first_step_torque(chain_cfg):
    sim = Simulation(chain_cfg)
    sig = sim.signals(0.0, sim.initial_state())
    q0 = np.array([a.q0 for a in chain_cfg.agents])
    np.testing.assert_array_equal(sig["e"], q0)
    # followers that do not hear the leader start with a flat reference
    np.testing.assert_allclose(sig["tau"][1:], -10.0 * 5.0 * q0[1:], rtol=1e-15)
    # follower 1 hears the leader, so its position estimate already moves at chi0 positions
    lead_pos = np.asarray(chain_cfg.leader.chi0[:2])
    np.testing.assert_allclose(sig["tau"][0], -10.0 * (5.0 * q0[0] - lead_pos), rtol=1e-15)


def test_observer_layer_matches_standalone(chain_cfg):
    cfg = short(chain_cfg, 2.0)
    sim = Simulation(cfg)
    y = integrate(sim.vector_field, sim.initial_state(), cfg.sim.dt, cfg.sim.steps)
    net = ObserverNetwork(cfg.graph, cfg.leader)
    z = integrate(net, net.initial_state(), cfg.sim.dt, cfg.sim.steps)
    w = sim.world(2.0, y)
    chi0, chi_hat, A_hat = net.split(z)
    assert np.abs(w.A_hat - A_hat).max() < 1e-6
    assert np.abs(w.chi_hat - chi_hat).max() < 1e-6
    np.testing.assert_array_equal(w.chi0, chi0)


def test_phase_isolation_zero_torque(chain_cfg):
    cfg = short(chain_cfg, 0.5)
    runs = []
    for zero in (False, True):
        sim = Simulation(cfg, zero_torque=zero)
        runs.append(integrate(sim.vector_field, sim.initial_state(), cfg.sim.dt, cfg.sim.steps))
    a, b = (Simulation(cfg).world(0.5, y) for y in runs)
    np.testing.assert_array_equal(a.chi_hat, b.chi_hat)
    np.testing.assert_array_equal(a.A_hat, b.A_hat)
    assert not np.array_equal(a.x, b.x)


@pytest.mark.parametrize("workers", [2, 3, 5])
def test_parallel_blocks_are_bitwise_identical(workers):
    cfg = short(default_config(), 0.2)
    ref = run_experiment(cfg, workers=1)
    got = run_experiment(cfg, workers=workers)
    np.testing.assert_array_equal(ref.final_weights, got.final_weights)
    for key in ("e", "tau", "nn_residual", "chi_tilde"):
        np.testing.assert_array_equal(getattr(ref.log, key), getattr(got.log, key))


def test_fixed_point_of_error_system():
    cfg = default_config()
    sim = Simulation(cfg)
    world = sim.world(0.0, sim.initial_state())
    # every observer exact, every arm on its reference
    world.chi_hat[:] = cfg.leader.chi0
    world.A_hat[:] = cfg.leader.A0
    world.x[:] = cfg.leader.chi0
    y = world.flatten()
    sig = sim.signals(0.0, y)
    assert not sig["e"].any() and np.abs(sig["r"]).max() == 0.0
    # weights reproducing H at this input, then frozen
    S = regressor(sim.lattice, sig["Z"])
    W = np.einsum("nk,nj->nkj", S, sig["H"]) / np.einsum("nk,nk->n", S, S)[:, None, None]
    frozen = Simulation(cfg, initial_weights=W, freeze_weights=True)
    world = frozen.world(0.0, frozen.initial_state())
    world.chi_hat[:] = cfg.leader.chi0
    world.A_hat[:] = cfg.leader.A0
    world.x[:] = cfg.leader.chi0
    y = world.flatten()
    dy = frozen.vector_field(0.0, y)
    d = frozen.world(0.0, dy)
    xr_ddot = (cfg.leader.A0 @ cfg.leader.A0 @ cfg.leader.chi0)[:2]
    np.testing.assert_allclose(d.x[:, 2:], np.tile(xr_ddot, (5, 1)), atol=1e-12)
    assert not d.W.any()


def test_zero_duration_run():
    res = run_experiment(default_config().with_sim(duration=0.0))
    assert len(res.log) == 1
    assert res.weights is None


def test_torque_cap_aborts_with_agent():
    cfg = default_config()
    cfg = replace(cfg, safety=replace(cfg.safety, torque=5.0))
    with pytest.raises(TorqueCapExceeded) as info:
        run_experiment(short(cfg, 0.1))
    assert info.value.agent is not None and info.value.t == 0.0


def test_r_cap_aborts():
    cfg = default_config()
    cfg = replace(cfg, safety=replace(cfg.safety, r=0.5))
    with pytest.raises(NumericalBlowup):
        run_experiment(short(cfg, 0.1))


def test_replay_needs_weights():
    with pytest.raises(ValidationError):
        run_experiment(default_config().with_sim(mode="replay"))


def test_initial_weight_shape_checked():
    with pytest.raises(ValidationError):
        Simulation(default_config(), initial_weights=np.zeros((5, 10, 2)))


def test_learn_log_shapes():
    res = run_experiment(short(default_config(), 0.1))
    log = res.log
    assert len(log) == 11
    assert log.e.shape == (11, 5, 2) and log.Z.shape == (11, 5, 4) and log.chi_tilde.shape == (11, 5)
    np.testing.assert_allclose(log.t, np.arange(11) * 0.01)
    assert res.weights.shape == (5, 256, 2)


# -- metrics ------------------------------------------------------------------


def test_settling_rule():
    t = np.arange(0, 10, 0.5)
    err = np.where(t < 3, 1.0, 0.01)
    assert settling_time(t, err, 0.05, 2.0) == 3.0
    err[10] = 1.0  # relapse at t = 5
    assert settling_time(t, err, 0.05, 2.0) == 5.5
    assert settling_time(t, np.full_like(t, 0.2), 0.05, 2.0) is None


def test_metrics_perfect_tracking():
    summary = compute_metrics(make_log(samples=50))
    for a in summary["agents"]:
        assert a["settling_time"] == 0.0
        assert a["post_settling_sup_e"] == 0.0 and a["sup_r"] == 0.0 and a["sup_tau"] == 0.0


def test_metrics_constant_error_not_settled():
    summary = compute_metrics(make_log(samples=50, e_value=0.2))
    assert all(a["settling_time"] is None for a in summary["agents"])


def test_metrics_empty_log():
    with pytest.raises(EmptyLog):
        compute_metrics(make_log(samples=0))


def test_A_tilde_rate_on_chain_agent1():
    net = ObserverNetwork(chain(5), LEADER)
    y = net.initial_state()
    t, series = [0.0], [net.errors(y)[1][0]]
    for k in range(8000):
        y = rk4_step(net, k * 1e-3, y, 1e-3)
        if (k + 1) % 10 == 0:
            t.append((k + 1) * 1e-3)
            series.append(net.errors(y)[1][0])
    log = make_log(samples=len(t), agents=1)
    log.t = np.array(t)
    log.A_tilde = np.array(series)[:, None]
    rate = compute_metrics(log)["agents"][0]["A_tilde_rate"]
    assert rate == pytest.approx(-1.0, abs=0.05)
