from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robosync.engine import ObserverNetwork, integrate, rk4_step
from robosync.errors import DimensionMismatch, ValidationError
from robosync.estimator import (
    ObserverGains,
    ObserverState,
    estimation_errors,
    network_derivatives,
    observer_matrix_derivative,
    observer_state_derivative,
    observer_state_second_derivative,
)
from robosync.graph import build_graph, chain, laplacian
from robosync.leader import DEFAULT_A0, DEFAULT_CHI0, LeaderSystem

LEADER = LeaderSystem(DEFAULT_A0, DEFAULT_CHI0)


def test_zero_state_rate_is_leader_pull():
    own = ObserverState.zeros(4)
    rate = observer_state_derivative(own, [(1.0, DEFAULT_CHI0)], ObserverGains())
    np.testing.assert_array_equal(rate, DEFAULT_CHI0)
    np.testing.assert_array_equal(observer_matrix_derivative(own.A_hat, [(2.0, DEFAULT_A0)], ObserverGains(beta2=0.5)), DEFAULT_A0)


def test_consensus_fixed_point():
    own = ObserverState(DEFAULT_CHI0, DEFAULT_A0)
    rate = observer_state_derivative(own, [(1.0, DEFAULT_CHI0), (3.0, DEFAULT_CHI0)], ObserverGains())
    np.testing.assert_allclose(rate, DEFAULT_A0 @ DEFAULT_CHI0)
    assert not observer_matrix_derivative(DEFAULT_A0, [(1.0, DEFAULT_A0)], ObserverGains()).any()


def test_gains_validated():
    with pytest.raises(ValidationError):
        ObserverGains(beta1=0.0)
    with pytest.raises(DimensionMismatch):
        ObserverState(np.zeros(4), np.zeros((3, 3)))
    with pytest.raises(DimensionMismatch):
        observer_state_derivative(ObserverState.zeros(4), [(1.0, np.zeros(3))], ObserverGains())


def test_estimation_errors():
    obs = [ObserverState(DEFAULT_CHI0, DEFAULT_A0), ObserverState.zeros(4)]
    err = estimation_errors(obs, DEFAULT_CHI0, DEFAULT_A0)
    np.testing.assert_allclose(err[0], [0, 0])
    np.testing.assert_allclose(err[1], [np.linalg.norm(DEFAULT_CHI0), 2.0])


def _random_snapshot(rng, N):
    return rng.normal(size=(N, 4)), rng.normal(size=(N, 4, 4))


def test_batched_rates_match_per_agent():
    g = build_graph(5, [(0, 1, 1.0), (1, 2, 0.5), (0, 3, 2.0), (2, 3, 1.5), (3, 4, 1.0), (1, 4, 0.3)])
    rng = np.random.default_rng(7)
    chi_hat, A_hat = _random_snapshot(rng, 4)
    beta1, beta2 = np.array([1.0, 0.5, 2.0, 1.5]), np.array([1.0, 3.0, 0.7, 1.0])
    chi0_dot = DEFAULT_A0 @ DEFAULT_CHI0
    rates = network_derivatives(laplacian(g).L, beta1, beta2, DEFAULT_CHI0, chi0_dot, DEFAULT_A0, chi_hat, A_hat)

    states = [ObserverState(DEFAULT_CHI0, DEFAULT_A0)] + [ObserverState(c, A) for c, A in zip(chi_hat, A_hat)]
    chi_dots = [chi0_dot]
    for i in range(1, 5):
        gains = ObserverGains(beta1[i - 1], beta2[i - 1])
        nbrs = g.in_neighbors(i)
        chi_dot = observer_state_derivative(states[i], [(w, states[j].chi_hat) for j, w in nbrs], gains)
        A_dot = observer_matrix_derivative(states[i].A_hat, [(w, states[j].A_hat) for j, w in nbrs], gains)
        np.testing.assert_allclose(rates.chi_dot[i - 1], chi_dot, rtol=1e-13, atol=1e-13)
        np.testing.assert_allclose(rates.A_dot[i - 1], A_dot, rtol=1e-13, atol=1e-13)
        chi_dots.append(chi_dot)
    for i in range(1, 5):
        gains = ObserverGains(beta1[i - 1], beta2[i - 1])
        nbrs = g.in_neighbors(i)
        dd = observer_state_second_derivative(
            states[i], chi_dots[i], rates.A_dot[i - 1], [(w, chi_dots[j]) for j, w in nbrs], gains
        )
        np.testing.assert_allclose(rates.chi_ddot[i - 1], dd, rtol=1e-12, atol=1e-12)


def test_second_derivative_matches_finite_difference():
    net = ObserverNetwork(build_graph(4, [(0, 1, 1.0), (1, 2, 1.0), (0, 3, 0.5), (2, 3, 1.0)]), LEADER)
    rng = np.random.default_rng(2)
    y = net.initial_state(*_random_snapshot(rng, 3))
    h = 1e-5

    def chi_dot_at(yy):
        chi0, chi_hat, A_hat = net.split(yy)
        return network_derivatives(net.L, net.beta1, net.beta2, chi0, DEFAULT_A0 @ chi0, DEFAULT_A0, chi_hat, A_hat)

    ddot = chi_dot_at(y).chi_ddot
    fd = (chi_dot_at(rk4_step(net, 0.0, y, h)).chi_dot - chi_dot_at(rk4_step(net, 0.0, y, -h)).chi_dot) / (2 * h)
    np.testing.assert_allclose(ddot, fd, atol=1e-7)


def test_chain_agent1_matrix_closed_form():
    # A1 sees only the leader: A1(t) = (1 - exp(-beta2 t)) A0 from zero
    net = ObserverNetwork(chain(3), LEADER, beta2=2.0)
    y = integrate(net, net.initial_state(), 1e-3, 1500)
    A1 = net.split(y)[2][0]
    np.testing.assert_allclose(A1, (1 - np.exp(-2.0 * 1.5)) * DEFAULT_A0, atol=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 4))
def test_random_trees_converge(seed, N):
    rng = np.random.default_rng(seed)
    edges = [(int(rng.integers(0, k)), k, float(rng.uniform(0.8, 2.0))) for k in range(1, N + 1)]
    net = ObserverNetwork(build_graph(N + 1, edges), LEADER)
    y = net.initial_state(rng.uniform(-1, 1, (N, 4)), rng.uniform(-1, 1, (N, 4, 4)))
    y = integrate(net, y, 1e-2, 2500)
    chi_err, A_err = net.errors(y)
    assert chi_err.max() < 1e-3 and A_err.max() < 1e-3


def _chain_cascade(t, k):
    """Matrix error of chain follower k from zero estimates, unit gains."""
    poly = sum(t**j / factorial(j) for j in range(k))
    return -np.exp(-t) * poly * DEFAULT_A0


def test_chain_matrix_errors_follow_cascade():
    # each follower filters its parent's error: A~_k' = -(A~_k - A~_{k-1})
    net = ObserverNetwork(chain(5), LEADER)
    y = net.initial_state()
    worst = 0.0
    prev_max = np.inf
    for step in range(1, 15_001):
        y = rk4_step(net, (step - 1) * 1e-3, y, 1e-3)
        A_hat = net.split(y)[2]
        t = step * 1e-3
        for k in range(5):
            worst = max(worst, np.abs(A_hat[k] - DEFAULT_A0 - _chain_cascade(t, k + 1)).max())
        current = net.errors(y)[1].max()
        assert current <= prev_max
        prev_max = current
    assert worst < 1e-6


def test_chain_followers_converge_by_15_seconds():
    net = ObserverNetwork(chain(5), LEADER)
    y = integrate(net, net.initial_state(), 1e-3, 15_000)
    chi_err, A_err = net.errors(y)
    for k in range(5):
        assert chi_err[k] < 1e-3 and A_err[k] < 1e-3, f"follower {k + 1}: {chi_err[k]:.2e}, {A_err[k]:.2e}"
