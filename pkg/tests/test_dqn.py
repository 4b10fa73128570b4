import numpy as np
import pytest

from lsdqn import dqn, env as envmod, net as qnet, optim
from lsdqn.replay import ReplayBuffer, Transition


def random_batch(rng, n, dim=3, actions=2, terminal_frac=0.3):
    out = []
    for _ in range(n):
        out.append(
            Transition(
                state=rng.standard_normal(dim),
                action=int(rng.integers(actions)),
                reward=float(rng.standard_normal()),
                next_state=rng.standard_normal(dim),
                terminal=bool(rng.random() < terminal_frac),
            )
        )
    return out


def test_targets_terminal_rule():
    rng = np.random.default_rng(0)
    network = qnet.init_network([3, 4, 2], rng)
    t = Transition(rng.standard_normal(3), 0, 5.0, rng.standard_normal(3), True)
    y = dqn.compute_targets_dqn([t], network, 0.9)
    assert y[0] == 5.0
    y2 = dqn.compute_targets_ddqn([t], network, network, 0.9)
    assert y2[0] == 5.0


def test_targets_gamma_zero():
    rng = np.random.default_rng(1)
    network = qnet.init_network([3, 4, 2], rng)
    batch = random_batch(rng, 16)
    y = dqn.compute_targets_dqn(batch, network, 0.0)
    assert np.array_equal(y, np.array([t.reward for t in batch]))


def test_targets_match_dp_backup_of_q_star():
    spec, env = envmod.make_gridworld(3, 3, slip_prob=0.1, gamma=0.9)
    q_star = envmod.dp_q_star(spec)
    # Identity feature map over one-hot inputs, head encoding Q*.
    network = qnet.QNetwork(
        weights=[np.eye(spec.n_states), q_star.T.copy()],
        biases=[np.zeros(spec.n_states), np.zeros(spec.n_actions)],
    )
    data = envmod.exhaustive_transitions(env)[:200]
    y = dqn.compute_targets_dqn(data, network, spec.gamma)
    v = np.where(spec.terminal, 0.0, q_star.max(axis=1))
    for t, got in zip(data, y):
        s2 = int(np.argmax(t.next_state))
        expected = t.reward if t.terminal else t.reward + spec.gamma * v[s2]
        assert got == pytest.approx(expected, abs=1e-12)


def test_ddqn_reduces_to_dqn_when_nets_equal():
    rng = np.random.default_rng(2)
    network = qnet.init_network([3, 8, 4], rng)
    for _ in range(20):
        batch = random_batch(rng, 32, actions=4)
        y_dqn = dqn.compute_targets_dqn(batch, network, 0.95)
        y_ddqn = dqn.compute_targets_ddqn(batch, network, network, 0.95)
        assert np.array_equal(y_dqn, y_ddqn)


def test_ddqn_uses_online_action_target_value():
    # Craft a 1-state, 2-action case where the online argmax differs from
    # the target argmax.
    online = qnet.QNetwork(weights=[np.array([[1.0], [-1.0]])], biases=[np.zeros(2)])
    target = qnet.QNetwork(weights=[np.array([[-5.0], [7.0]])], biases=[np.zeros(2)])
    t = Transition(np.array([1.0]), 0, 0.0, np.array([1.0]), False)
    # online q on s' = [1, -1] -> action 0; target value of action 0 = -5.
    y = dqn.compute_targets_ddqn([t], online, target, 1.0 - 1e-12)
    assert y[0] == pytest.approx(-5.0, rel=1e-9)
    # plain DQN would use max of target = 7.
    y_dqn = dqn.compute_targets_dqn([t], target, 1.0 - 1e-12)
    assert y_dqn[0] == pytest.approx(7.0, rel=1e-9)


def test_sync_target_exact_and_independent():
    rng = np.random.default_rng(3)
    a = qnet.init_network([3, 5, 2], rng)
    b = qnet.init_network([3, 5, 2], rng)
    dqn.sync_target(a, b)
    for x, y in zip(qnet.params(a), qnet.params(b)):
        assert np.array_equal(x, y)
    a.weights[0][0, 0] += 1.0
    assert b.weights[0][0, 0] != a.weights[0][0, 0]


def test_epsilon_greedy_zero_is_argmax_with_tie_rule():
    rng = np.random.default_rng(4)
    assert dqn.epsilon_greedy(np.array([0.0, 5.0, 5.0]), 0.0, rng) == 1
    assert dqn.epsilon_greedy(np.array([3.0, 1.0]), 0.0, rng) == 0


def test_epsilon_greedy_uniform_chi_square():
    rng = np.random.default_rng(5)
    q = np.array([9.0, 1.0, 0.0, 2.0])
    counts = np.zeros(4)
    for _ in range(100_000):
        counts[dqn.epsilon_greedy(q, 1.0, rng)] += 1
    expected = 25_000.0
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    assert chi2 < 16.266  # df=3, p=0.001


def test_epsilon_greedy_validates_epsilon():
    with pytest.raises(ValueError):
        dqn.epsilon_greedy(np.zeros(2), 1.5, np.random.default_rng(0))


def make_buffer(rng, n=64, dim=3, actions=2):
    buf = ReplayBuffer(1024)
    for t in random_batch(rng, n, dim=dim, actions=actions):
        buf.push(t)
    return buf


def test_train_step_zero_loss_at_fixed_point():
    # If targets equal current predictions the loss is 0.
    rng = np.random.default_rng(6)
    network = qnet.init_network([3, 4, 2], rng)
    buf = ReplayBuffer(8)
    state = rng.standard_normal(3)
    buf.push(Transition(state, 0, float(qnet.forward(network, state)[0][0]), state, True))
    cfg = dqn.DqnConfig(gamma=0.9, minibatch_size=4, optimizer="rmsprop")
    target = qnet.clone(network)
    loss, _ = dqn.train_step(network, target, buf, optim.init_rmsprop(qnet.params(network)),
                             cfg, np.random.default_rng(0))
    assert loss == pytest.approx(0.0, abs=1e-24)


def test_train_step_loss_decreases_on_frozen_batch():
    rng = np.random.default_rng(7)
    network = qnet.init_network([3, 8, 2], rng)
    target = qnet.clone(network)
    buf = make_buffer(rng, n=8)
    cfg = dqn.DqnConfig(gamma=0.9, minibatch_size=32, optimizer="adam", learning_rate=0.01)
    state = optim.init_adam(qnet.params(network), learning_rate=0.01)
    losses = []
    srng = np.random.default_rng(8)
    for _ in range(200):
        loss, state = dqn.train_step(network, target, buf, state, cfg, srng)
        losses.append(loss)
    assert np.mean(losses[-20:]) < 0.2 * np.mean(losses[:20])


def test_train_step_touches_only_net():
    rng = np.random.default_rng(9)
    network = qnet.init_network([3, 6, 2], rng)
    target = qnet.init_network([3, 6, 2], rng)
    before = [p.copy() for p in qnet.params(target)]
    buf = make_buffer(rng)
    cfg = dqn.DqnConfig(gamma=0.9, minibatch_size=16)
    dqn.train_step(network, target, buf, optim.init_rmsprop(qnet.params(network)),
                   cfg, np.random.default_rng(1))
    for a, b in zip(before, qnet.params(target)):
        assert np.array_equal(a, b)


def test_train_step_seeded_determinism():
    rng = np.random.default_rng(10)
    base = qnet.init_network([3, 6, 2], rng)
    buf = make_buffer(rng)
    cfg = dqn.DqnConfig(gamma=0.9, minibatch_size=16)

    def run():
        network = qnet.clone(base)
        target = qnet.clone(base)
        state = optim.init_rmsprop(qnet.params(network), learning_rate=0.01)
        srng = np.random.default_rng(11)
        out = []
        for _ in range(10):
            loss, state = dqn.train_step(network, target, buf, state, cfg, srng)
            out.append(loss)
        return out, qnet.params(network)

    (l1, p1), (l2, p2) = run(), run()
    assert l1 == l2
    for a, b in zip(p1, p2):
        assert np.array_equal(a, b)


def test_evaluate_deterministic_env_zero_epsilon():
    spec, env = envmod.make_gridworld(3, 3, slip_prob=0.0, gamma=0.9)
    q_star = envmod.dp_q_star(spec)
    network = qnet.QNetwork(
        weights=[np.eye(spec.n_states), q_star.T.copy()],
        biases=[np.zeros(spec.n_states), np.zeros(spec.n_actions)],
    )
    record = dqn.evaluate(network, env, 5, 0.0, np.random.default_rng(0))
    assert len(set(record.returns)) == 1
    assert record.mean_return == pytest.approx(np.mean(record.returns))
    # Optimal greedy play on a slip-free grid always collects the +1 goal.
    assert record.returns[0] == pytest.approx(1.0)


def test_trainer_runs_and_records():
    spec, env = envmod.make_gridworld(3, 3, slip_prob=0.1, gamma=0.9)
    eval_env = envmod.TabularEnv(spec)
    rng = dqn.stream_rng(0, dqn.STREAM_INIT)
    network = qnet.init_network([spec.n_states, 16, spec.n_actions], rng)
    cfg = dqn.DqnConfig(gamma=0.9, epsilon_decay_steps=500, warmup_steps=50,
                        target_sync_period=100, minibatch_size=8)
    trainer = dqn.Trainer(net=network, env=env, eval_env=eval_env, cfg=cfg, seed=0,
                          total_steps=1000, eval_period=500, eval_episodes=3)
    trainer.advance(1000)
    assert [r.epoch for r in trainer.records] == [0, 1, 2]
    assert all(len(r.returns) == 3 for r in trainer.records)


def test_trainer_bitwise_reproducible():
    spec, _ = envmod.make_gridworld(3, 3, slip_prob=0.2, gamma=0.9)

    def run():
        env = envmod.TabularEnv(spec)
        eval_env = envmod.TabularEnv(spec)
        network = qnet.init_network([spec.n_states, 8, spec.n_actions],
                                    dqn.stream_rng(3, dqn.STREAM_INIT))
        cfg = dqn.DqnConfig(gamma=0.9, epsilon_decay_steps=300, warmup_steps=20,
                            target_sync_period=50, minibatch_size=8)
        trainer = dqn.Trainer(net=network, env=env, eval_env=eval_env, cfg=cfg, seed=3,
                              total_steps=600, eval_period=200, eval_episodes=2)
        trainer.advance(600)
        return trainer

    t1, t2 = run(), run()
    assert [r.returns for r in t1.records] == [r.returns for r in t2.records]
    assert t1.losses == t2.losses
    for a, b in zip(qnet.params(t1.net), qnet.params(t2.net)):
        assert np.array_equal(a, b)
