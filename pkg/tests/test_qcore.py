import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from liftsim.qcore import (TOY_MDPS, FiniteMdp, bellman_backup, greedy_actions, load_toy,
                           parse_mdp, q_learning_step, train_tabular, value_iteration)

SLIPPERY = """\
discount 0.9
a right b 0.8 0.0
a right a 0.2 0.0
a left a 1.0 0.0
b right goal 0.8 1.0
b right b 0.2 0.0
b left a 0.8 0.0
b left b 0.2 0.0
"""


def policy_enumeration_q(mdp):
    """Optimal Q by solving the linear system of every deterministic policy."""
    S = mdp.n_states
    R = mdp.expected_reward()
    choices = [[a for a in range(mdp.n_actions) if mdp.legal[s, a]] or [None]
               for s in range(S)]
    best = np.full(S, -np.inf)
    for pi in itertools.product(*choices):
        P = np.zeros((S, S))
        r = np.zeros(S)
        for s, a in enumerate(pi):
            if a is not None:
                P[s] = mdp.transition[a, s]
                r[s] = R[s, a]
        v = np.linalg.solve(np.eye(S) - mdp.discount * P, r)
        best = np.maximum(best, v)
    q = R + mdp.discount * np.einsum("ast,t->sa", mdp.transition, best)
    return np.where(mdp.legal, q, 0.0)


def random_mdp(seed, S=4, A=3, discount=0.8):
    rng = np.random.default_rng(seed)
    P = rng.random((A, S, S))
    P /= P.sum(axis=2, keepdims=True)
    R = rng.normal(size=(A, S, S))
    return FiniteMdp(list(range(S)), list(range(A)), P, R, np.ones((S, A), bool), discount)


def test_zero_discount_is_expected_reward():
    mdp = random_mdp(1, discount=0.0)
    assert np.array_equal(value_iteration(mdp), mdp.expected_reward())


def test_two_state_closed_form():
    mdp = load_toy("two_state")
    q = value_iteration(mdp)
    s0, go = mdp.states.index("s0"), mdp.actions.index("go")
    assert q[s0, go] == pytest.approx(1 / (1 - 0.5 ** 2), abs=1e-9)
    assert np.allclose(q, policy_enumeration_q(mdp), atol=1e-9)


@pytest.mark.parametrize("name", TOY_MDPS)
def test_toys_match_policy_enumeration(name):
    mdp = load_toy(name)
    assert np.allclose(value_iteration(mdp), policy_enumeration_q(mdp), atol=1e-9)


def test_corridor_values():
    q = value_iteration(load_toy("corridor"))
    assert np.allclose(q, [[0.81, 0.729], [0.9, 0.729], [1.0, 0.81], [0, 0]], atol=1e-9)


def test_zero_rewards_give_zero_q():
    mdp = random_mdp(2)
    mdp = mdp.scaled(0.0)
    assert not value_iteration(mdp).any()


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), c=st.floats(0.01, 100))
def test_fixed_point_and_reward_scaling(seed, c):
    mdp = random_mdp(seed)
    q = value_iteration(mdp, tol=1e-10)
    assert np.max(np.abs(bellman_backup(mdp, q) - q)) <= 1e-10
    qc = value_iteration(mdp.scaled(c), tol=1e-10)
    assert np.allclose(qc, c * q, atol=1e-7 * max(c, 1))
    assert np.array_equal(greedy_actions(qc, mdp.legal), greedy_actions(q, mdp.legal))


def test_q_step_full_overwrite():
    q = np.zeros((2, 2))
    out = q_learning_step(q, 0, 1, 5.0, 1, alpha=1.0, discount=0.9)
    assert out[0, 1] == 5.0
    assert not q.any()  # input untouched


def test_q_step_zero_alpha_unchanged():
    q = np.arange(4.0).reshape(2, 2)
    assert np.array_equal(q_learning_step(q, 0, 0, 3.0, 1, alpha=0.0, discount=0.5), q)


def test_q_step_direct_evaluation():
    q = np.array([[2.0, 0.0], [4.0, 1.0]])
    out = q_learning_step(q, 0, 0, 1.0, 1, alpha=0.5, discount=0.5)
    assert out[0, 0] == 2.5


def test_q_step_terminal_and_mask():
    q = np.array([[0.0, 0.0], [9.0, 1.0]])
    assert q_learning_step(q, 0, 0, 1.0, None, 1.0, 0.5)[0, 0] == 1.0
    legal = np.array([[True, True], [False, True]])
    assert q_learning_step(q, 0, 0, 1.0, 1, 1.0, 0.5, legal)[0, 0] == 1.5


@pytest.mark.parametrize("name", TOY_MDPS)
def test_tabular_reaches_oracle(name):
    res = train_tabular(load_toy(name), 10_000, epsilon=0.2, alpha=0.1, seed=0)
    assert res.distances[-1] < 0.05


def test_zero_episodes_returns_initial_table():
    res = train_tabular(load_toy("two_state"), 0)
    assert res.distances == [] and not res.q.any()


def test_one_state_converges_to_two():
    res = train_tabular(load_toy("one_state"), 3000, seed=1)
    assert res.q.max() == pytest.approx(2.0, abs=1e-3)


@pytest.mark.parametrize("name", TOY_MDPS)
def test_smoothed_distance_nonincreasing(name):
    d = np.array(train_tabular(load_toy(name), 10_000, seed=0).distances)
    windows = d.reshape(-1, 100).mean(axis=1)[9:]
    assert np.all(np.diff(windows) <= 1e-12)


def test_tabular_is_seeded():
    a = train_tabular(load_toy("corridor"), 200, seed=3)
    b = train_tabular(load_toy("corridor"), 200, seed=3)
    assert np.array_equal(a.q, b.q)


def test_stochastic_chain_converges_with_harmonic_steps():
    mdp = parse_mdp(SLIPPERY)
    res = train_tabular(mdp, 10_000, epsilon=0.3, alpha="harmonic", seed=0)
    assert res.distances[-1] < 0.05
    assert np.allclose(value_iteration(mdp), policy_enumeration_q(mdp), atol=1e-9)


def test_bad_training_arguments():
    with pytest.raises(ValueError):
        train_tabular(load_toy("two_state"), 10, epsilon=0.0)
    with pytest.raises(ValueError):
        train_tabular(load_toy("two_state"), -1)
    with pytest.raises(ValueError):
        train_tabular(load_toy("two_state"), 1, alpha="cubic")


@pytest.mark.parametrize("text", [
    "a go b 1.0 0.0\n",  # no discount line
    "discount 1.0\na go b 1.0 0.0\n",
    "discount 0.5\na go b 0.6 0.0\n",
    "discount 0.5\na go b 1.0\n",
    "discount 0.5\na go b one 0.0\n",
])
def test_parse_errors(text):
    with pytest.raises(ValueError):
        parse_mdp(text)


def test_parse_marks_sink_states_terminal():
    mdp = parse_mdp("discount 0.5\n# comment\na go end 1.0 2.0\n")
    assert mdp.terminal(mdp.states.index("end"))
    assert value_iteration(mdp)[0, 0] == 2.0
