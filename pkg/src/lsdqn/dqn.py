"""Online value-based training: DQN / DDQN steps, target sync, acting, eval.

All randomness flows through named, independently seeded streams derived
from the run seed, so interleaving extra work (batch refits, probe
evaluations) never perturbs the training trajectory, and two runs with the
same seed are bitwise identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import net as qnet
from . import optim
from .errors import EmptyBuffer
from .replay import ReplayBuffer, Transition, stack_batch

# Stream tags for per-purpose rngs.
STREAM_INIT = 0
STREAM_ENV = 1
STREAM_EXPLORE = 2
STREAM_SAMPLE = 3
STREAM_EVAL = 4
STREAM_PROBE = 5
STREAM_GATHER = 6


def stream_rng(seed: int, *tags: int) -> np.random.Generator:
    """Deterministic generator for (seed, purpose, indices...)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, tags)]))


@dataclass
class DqnConfig:
    gamma: float = 0.95
    variant: str = "dqn"  # "dqn" | "ddqn"
    epsilon_start: float = 1.0
    epsilon_end: float = 0.1
    epsilon_decay_steps: int = 20_000
    eval_epsilon: float = 0.05
    minibatch_size: int = 32
    target_sync_period: int = 1000
    train_period: int = 4
    warmup_steps: int = 500
    optimizer: str = "rmsprop"  # "rmsprop" | "adam"
    learning_rate: float = 0.001
    reward_clip: bool = False

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must be in [0, 1), got {self.gamma}")
        for name in ("epsilon_start", "epsilon_end", "eval_epsilon"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if self.variant not in ("dqn", "ddqn"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.optimizer not in ("rmsprop", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class EvalRecord:
    epoch: int
    mean_return: float
    returns: tuple[float, ...]
    episodes: int


def _targets_dqn_arrays(rewards, next_states, terminal, target_net, gamma) -> np.ndarray:
    q_next, _ = qnet.forward_batch(target_net, next_states)
    return np.where(terminal, rewards, rewards + gamma * q_next.max(axis=1))


def _targets_ddqn_arrays(rewards, next_states, terminal, net, target_net, gamma) -> np.ndarray:
    q_online, _ = qnet.forward_batch(net, next_states)
    q_target, _ = qnet.forward_batch(target_net, next_states)
    chosen = np.argmax(q_online, axis=1)
    values = q_target[np.arange(len(rewards)), chosen]
    return np.where(terminal, rewards, rewards + gamma * values)


def compute_targets_dqn(
    batch: list[Transition], target_net: qnet.QNetwork, gamma: float
) -> np.ndarray:
    """y = r + gamma * max_a' Q_target(s', a'), and exactly y = r on terminals."""
    if not batch:
        raise EmptyBuffer("empty batch")
    _, _, rewards, next_states, terminal = stack_batch(batch)
    return _targets_dqn_arrays(rewards, next_states, terminal, target_net, gamma)


def compute_targets_ddqn(
    batch: list[Transition],
    net: qnet.QNetwork,
    target_net: qnet.QNetwork,
    gamma: float,
) -> np.ndarray:
    """Action chosen by the online net, value read from the target net."""
    if not batch:
        raise EmptyBuffer("empty batch")
    _, _, rewards, next_states, terminal = stack_batch(batch)
    return _targets_ddqn_arrays(rewards, next_states, terminal, net, target_net, gamma)


def _clip_rewards(batch: list[Transition]) -> list[Transition]:
    return [
        Transition(t.state, t.action, float(np.clip(t.reward, -1.0, 1.0)), t.next_state, t.terminal)
        for t in batch
    ]


def train_step(
    net: qnet.QNetwork,
    target_net: qnet.QNetwork,
    buf: ReplayBuffer,
    optimizer_state,
    cfg: DqnConfig,
    rng: np.random.Generator,
):
    """One SGD step on a sampled minibatch; returns (pre-update MSE, new state).

    The loss is the mean squared error between Q(s, a) for the taken action
    and the (D)DQN regression target; gradients flow only through the taken
    action's output. Only `net`'s parameters change.
    """
    batch = buf.sample_minibatch(cfg.minibatch_size, rng)
    if cfg.reward_clip:
        batch = _clip_rewards(batch)
    states, actions, rewards, next_states, terminal = stack_batch(batch)
    if cfg.variant == "ddqn":
        targets = _targets_ddqn_arrays(rewards, next_states, terminal, net, target_net, cfg.gamma)
    else:
        targets = _targets_dqn_arrays(rewards, next_states, terminal, target_net, cfg.gamma)
    q, _ = qnet.forward_batch(net, states)
    n = len(batch)
    taken = q[np.arange(n), actions]
    err = taken - targets
    loss = float(np.mean(err**2))
    output_grads = np.zeros_like(q)
    output_grads[np.arange(n), actions] = 2.0 * err / n
    grads = qnet.backward_batch(net, states, output_grads)
    params = qnet.params(net)
    glist = qnet.grads_list(grads)
    if cfg.optimizer == "adam":
        new_params, optimizer_state = optim.adam_step(optimizer_state, params, glist)
    else:
        new_params, optimizer_state = optim.rmsprop_step(optimizer_state, params, glist)
    qnet.set_params(net, new_params)
    return loss, optimizer_state


def sync_target(net: qnet.QNetwork, target_net: qnet.QNetwork) -> None:
    """Copy net's parameters into target_net (exact, independent copies)."""
    target_net.weights = [w.copy() for w in net.weights]
    target_net.biases = [b.copy() for b in net.biases]


def epsilon_greedy(q_values: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Argmax with probability 1 - epsilon (ties to the lowest index),
    uniform otherwise."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    if rng.random() < epsilon:
        return int(rng.integers(0, len(q_values)))
    return int(np.argmax(q_values))


def evaluate(
    net: qnet.QNetwork,
    env,
    episodes: int,
    eval_epsilon: float,
    rng: np.random.Generator,
    epoch: int = 0,
    max_steps: int | None = None,
) -> EvalRecord:
    """Undiscounted returns of eval_epsilon-greedy rollouts, cap honored."""
    if episodes < 1:
        raise ValueError(f"episodes must be >= 1, got {episodes}")
    cap = max_steps if max_steps is not None else env.max_episode_steps
    returns = []
    for _ in range(episodes):
        obs = env.reset(rng)
        total = 0.0
        for _ in range(cap):
            q, _ = qnet.forward(net, obs)
            action = epsilon_greedy(q, eval_epsilon, rng)
            obs, reward, done = env.step(action, rng)
            total += reward
            if done:
                break
        returns.append(total)
    returns_t = tuple(returns)
    return EvalRecord(
        epoch=epoch,
        mean_return=float(np.mean(returns_t)),
        returns=returns_t,
        episodes=episodes,
    )


@dataclass
class Trainer:
    """Owns one training trajectory: net, target net, buffer, optimizer, rngs.

    `advance(n)` steps the environment n times, training/syncing/evaluating
    on schedule. Driving a Trainer for the full budget is the vanilla
    DQN/DDQN run; the hybrid loop interleaves last-layer refits between
    calls to advance, which touches none of the trainer's rng streams.
    """

    net: qnet.QNetwork
    env: object
    eval_env: object
    cfg: DqnConfig
    seed: int
    total_steps: int
    eval_period: int
    eval_episodes: int
    replay_capacity: int = 100_000

    def __post_init__(self):
        self.target_net = qnet.clone(self.net)
        self.buffer = ReplayBuffer(self.replay_capacity)
        self.step_count = 0
        self.records: list[EvalRecord] = []
        self.losses: list[float] = []
        self._env_rng = stream_rng(self.seed, STREAM_ENV)
        self._explore_rng = stream_rng(self.seed, STREAM_EXPLORE)
        self._sample_rng = stream_rng(self.seed, STREAM_SAMPLE)
        params = qnet.params(self.net)
        if self.cfg.optimizer == "adam":
            self.opt_state = optim.init_adam(params, learning_rate=self.cfg.learning_rate)
        else:
            self.opt_state = optim.init_rmsprop(params, learning_rate=self.cfg.learning_rate)
        self._obs = self.env.reset(self._env_rng)
        self._episode_steps = 0
        self.evaluate_now()  # epoch 0 baseline

    def epsilon(self) -> float:
        frac = min(1.0, self.step_count / max(1, self.cfg.epsilon_decay_steps))
        return self.cfg.epsilon_start + frac * (self.cfg.epsilon_end - self.cfg.epsilon_start)

    def evaluate_now(self) -> EvalRecord:
        epoch = self.step_count // self.eval_period if self.eval_period else 0
        rng = stream_rng(self.seed, STREAM_EVAL, epoch)
        record = evaluate(
            qnet.clone(self.net),
            self.eval_env,
            self.eval_episodes,
            self.cfg.eval_epsilon,
            rng,
            epoch=epoch,
        )
        self.records.append(record)
        return record

    def advance(self, n_steps: int) -> None:
        cap = getattr(self.env, "max_episode_steps", 500)
        for _ in range(n_steps):
            q, _ = qnet.forward(self.net, self._obs)
            action = epsilon_greedy(q, self.epsilon(), self._explore_rng)
            next_obs, reward, done = self.env.step(action, self._env_rng)
            self.buffer.push(Transition(self._obs, action, reward, next_obs, done))
            self._episode_steps += 1
            if done or self._episode_steps >= cap:
                self._obs = self.env.reset(self._env_rng)
                self._episode_steps = 0
            else:
                self._obs = next_obs
            self.step_count += 1
            if (
                self.step_count >= self.cfg.warmup_steps
                and len(self.buffer) > 0
                and self.step_count % self.cfg.train_period == 0
            ):
                loss, self.opt_state = train_step(
                    self.net, self.target_net, self.buffer,
                    self.opt_state, self.cfg, self._sample_rng,
                )
                self.losses.append(loss)
            if self.step_count % self.cfg.target_sync_period == 0:
                sync_target(self.net, self.target_net)
            if self.eval_period and self.step_count % self.eval_period == 0:
                self.evaluate_now()
