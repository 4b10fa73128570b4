"""Desk-scale MDPs with exact dynamic-programming oracles.

Tabular environments expose one-hot observations and carry an explicit
MdpSpec (transition tensor, reward table, discount, terminal set), so
value iteration and policy evaluation can certify every learner in the
package to tight tolerances. A small Euler-integrated cart-pole provides a
continuous-state exerciser for the neural features; it has no tabular spec
and no oracle.

Reward convention: R[s, a] is the expected immediate reward of taking a in
s (for the gridworld: step cost plus goal-entry probability), and `step`
returns exactly R[s, a]. Terminal states are absorbing with zero reward;
their Q row equals the immediate reward by convention, and DP backups give
terminal successors zero continuation value, matching the y = r masking
used by the learners.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidAction, InvalidGeometry
from .replay import Transition


@dataclass(frozen=True)
class MdpSpec:
    n_states: int
    n_actions: int
    transitions: np.ndarray  # [S, A, S] row-stochastic
    rewards: np.ndarray  # [S, A]
    gamma: float
    terminal: np.ndarray  # [S] bool

    def __post_init__(self):
        p, r = self.transitions, self.rewards
        if p.shape != (self.n_states, self.n_actions, self.n_states):
            raise InvalidGeometry(f"transition tensor has shape {p.shape}")
        if r.shape != (self.n_states, self.n_actions):
            raise InvalidGeometry(f"reward table has shape {r.shape}")
        if not (np.isfinite(p).all() and np.isfinite(r).all()):
            raise InvalidGeometry("non-finite transition or reward entries")
        if not 0.0 <= self.gamma < 1.0:
            raise InvalidGeometry(f"gamma must be in [0, 1), got {self.gamma}")
        row_sums = p.sum(axis=2)
        if np.abs(row_sums - 1.0).max() > 1e-12:
            raise InvalidGeometry("transition rows must sum to 1 within 1e-12")


class TabularEnv:
    """Steps a tabular MDP with one-hot observations.

    Instances are single-threaded; parallel rollouts should use independent
    instances with independently seeded rngs. The one-hot rows are shared
    read-only arrays, so observations can be stored without copying.
    """

    def __init__(self, spec: MdpSpec, start_state: int = 0, max_episode_steps: int = 500):
        self.spec = spec
        self.start_state = start_state
        self.max_episode_steps = max_episode_steps
        self.state = start_state
        eye = np.eye(spec.n_states, dtype=np.float64)
        eye.setflags(write=False)
        self._one_hot = eye
        # Cumulative rows make next-state draws a single searchsorted.
        self._cum = np.cumsum(spec.transitions, axis=2)

    @property
    def n_actions(self) -> int:
        return self.spec.n_actions

    @property
    def obs_dim(self) -> int:
        return self.spec.n_states

    def observe(self, state: int) -> np.ndarray:
        return self._one_hot[state]

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self.state = self.start_state
        return self.observe(self.state)

    def step(self, action: int, rng: np.random.Generator) -> tuple[np.ndarray, float, bool]:
        if not 0 <= action < self.spec.n_actions:
            raise InvalidAction(f"action {action} outside [0, {self.spec.n_actions})")
        s = self.state
        nxt = int(np.searchsorted(self._cum[s, action], rng.random(), side="right"))
        nxt = min(nxt, self.spec.n_states - 1)  # guard the cumsum's top edge
        reward = float(self.spec.rewards[s, action])
        self.state = nxt
        return self.observe(nxt), reward, bool(self.spec.terminal[nxt])


# Gridworld actions, in index order.
_GRID_MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))  # up, down, left, right


def make_gridworld(
    width: int,
    height: int,
    goal: tuple[int, int] | None = None,
    step_cost: float = 0.0,
    slip_prob: float = 0.0,
    gamma: float = 0.95,
    max_episode_steps: int = 500,
) -> tuple[MdpSpec, TabularEnv]:
    """Four-action grid MDP; the goal cell is terminal and entering it pays +1.

    With slip probability p the intended move happens with probability 1-p
    and each of the other three moves with p/3. Bumping a wall keeps the
    agent in place. State ids are row-major; the start is cell (0, 0).
    """
    if width < 1 or height < 1 or width * height < 2:
        raise InvalidGeometry(f"grid {width}x{height} is too small")
    if goal is None:
        goal = (height - 1, width - 1)
    gr, gc = goal
    if not (0 <= gr < height and 0 <= gc < width):
        raise InvalidGeometry(f"goal {goal} outside {height}x{width} grid")
    if not 0.0 <= slip_prob < 1.0:
        raise InvalidGeometry(f"slip_prob must be in [0, 1), got {slip_prob}")

    n_states = width * height
    n_actions = 4
    goal_state = gr * width + gc

    def move(state: int, direction: int) -> int:
        r, c = divmod(state, width)
        dr, dc = _GRID_MOVES[direction]
        nr, nc = r + dr, c + dc
        if not (0 <= nr < height and 0 <= nc < width):
            return state  # wall bump
        return nr * width + nc

    p = np.zeros((n_states, n_actions, n_states))
    rewards = np.zeros((n_states, n_actions))
    terminal = np.zeros(n_states, dtype=bool)
    terminal[goal_state] = True
    for s in range(n_states):
        for a in range(n_actions):
            if s == goal_state:
                p[s, a, s] = 1.0  # absorbing, zero reward
                continue
            for direction in range(n_actions):
                prob = 1.0 - slip_prob if direction == a else slip_prob / 3.0
                if prob == 0.0:
                    continue
                p[s, a, move(s, direction)] += prob
            rewards[s, a] = step_cost + p[s, a, goal_state] * 1.0

    spec = MdpSpec(
        n_states=n_states,
        n_actions=n_actions,
        transitions=p,
        rewards=rewards,
        gamma=gamma,
        terminal=terminal,
    )
    return spec, TabularEnv(spec, start_state=0, max_episode_steps=max_episode_steps)


@dataclass
class CartPoleParams:
    gravity: float = 9.8
    masscart: float = 1.0
    masspole: float = 0.1
    length: float = 0.5  # half pole length
    force_mag: float = 10.0
    tau: float = 0.02
    x_limit: float = 2.4
    theta_limit: float = 12 * np.pi / 180.0


class CartPoleEnv:
    """Euler-integrated pole balancing with 2 actions and a 4-dim observation.

    Observation is (x, x_dot, theta, theta_dot). Reward is +1 per step; an
    episode terminates when position or angle leaves its bound.
    """

    def __init__(self, params: CartPoleParams | None = None, max_episode_steps: int = 500):
        params = params or CartPoleParams()
        if min(params.masscart, params.masspole, params.length, params.tau) <= 0:
            raise InvalidGeometry("masses, length and tau must be positive")
        self.params = params
        self.max_episode_steps = max_episode_steps
        self.state = np.zeros(4)

    @property
    def n_actions(self) -> int:
        return 2

    @property
    def obs_dim(self) -> int:
        return 4

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self.state = rng.uniform(-0.05, 0.05, size=4)
        return self.state.copy()

    def step(self, action: int, rng: np.random.Generator) -> tuple[np.ndarray, float, bool]:
        if action not in (0, 1):
            raise InvalidAction(f"action {action} outside [0, 2)")
        p = self.params
        x, x_dot, theta, theta_dot = self.state
        force = p.force_mag if action == 1 else -p.force_mag
        total_mass = p.masscart + p.masspole
        polemass_length = p.masspole * p.length
        cos_t, sin_t = np.cos(theta), np.sin(theta)
        temp = (force + polemass_length * theta_dot**2 * sin_t) / total_mass
        theta_acc = (p.gravity * sin_t - cos_t * temp) / (
            p.length * (4.0 / 3.0 - p.masspole * cos_t**2 / total_mass)
        )
        x_acc = temp - polemass_length * theta_acc * cos_t / total_mass
        x = x + p.tau * x_dot
        x_dot = x_dot + p.tau * x_acc
        theta = theta + p.tau * theta_dot
        theta_dot = theta_dot + p.tau * theta_acc
        self.state = np.array([x, x_dot, theta, theta_dot])
        done = bool(abs(x) > p.x_limit or abs(theta) > p.theta_limit)
        return self.state.copy(), 1.0, done


def make_cartpole_discrete(
    params: CartPoleParams | None = None, max_episode_steps: int = 500
) -> CartPoleEnv:
    return CartPoleEnv(params=params, max_episode_steps=max_episode_steps)


# ---------------------------------------------------------------------------
# Dynamic-programming oracles
# ---------------------------------------------------------------------------

def dp_q_star(spec: MdpSpec, tol: float = 1e-12, max_sweeps: int = 200_000) -> np.ndarray:
    """Optimal Q by value iteration, to Bellman residual below 1e-10.

    Terminal rows are pinned to the immediate reward; terminal successors
    contribute zero continuation value.
    """
    s, a = spec.n_states, spec.n_actions
    p_flat = spec.transitions.reshape(s * a, s)
    q = np.zeros((s, a))

    def backup(cur: np.ndarray) -> np.ndarray:
        v = np.where(spec.terminal, 0.0, cur.max(axis=1))
        out = spec.rewards + spec.gamma * (p_flat @ v).reshape(s, a)
        out[spec.terminal] = spec.rewards[spec.terminal]
        return out

    for _ in range(max_sweeps):
        nxt = backup(q)
        delta = np.abs(nxt - q).max()
        q = nxt
        if delta < tol:
            break
    residual = np.abs(backup(q) - q).max()
    if residual >= 1e-10:
        raise RuntimeError(f"value iteration stalled at residual {residual:.3e}")
    return q


def _policy_matrix(spec: MdpSpec, policy: np.ndarray) -> np.ndarray:
    """Normalize a policy to an [S, A] distribution matrix."""
    policy = np.asarray(policy)
    if policy.ndim == 1:
        if policy.shape != (spec.n_states,):
            raise InvalidAction(f"policy must cover all {spec.n_states} states")
        mat = np.zeros((spec.n_states, spec.n_actions))
        mat[np.arange(spec.n_states), policy.astype(int)] = 1.0
        return mat
    if policy.shape != (spec.n_states, spec.n_actions):
        raise InvalidAction(f"policy matrix has shape {policy.shape}")
    if np.abs(policy.sum(axis=1) - 1.0).max() > 1e-12 or (policy < 0).any():
        raise InvalidAction("policy rows must be distributions")
    return np.asarray(policy, dtype=np.float64)


def dp_policy_eval(spec: MdpSpec, policy: np.ndarray) -> np.ndarray:
    """Q^pi by direct linear solve of the Bellman equation for pi.

    `policy` is either an [S] array of action indices or an [S, A]
    distribution matrix.
    """
    s, a = spec.n_states, spec.n_actions
    pi = _policy_matrix(spec, policy)
    n = s * a
    # B[(s,a),(s',a')] = P(s'|s,a) * pi(a'|s') with terminal s' contributing 0.
    cont = np.where(spec.terminal[:, None], 0.0, pi)  # [S, A]
    b = np.einsum("sat,tb->satb", spec.transitions, cont).reshape(n, n)
    m = np.eye(n) - spec.gamma * b
    rhs = spec.rewards.reshape(n).copy()
    term_rows = np.repeat(spec.terminal, a)
    m[term_rows] = 0.0
    m[term_rows, np.flatnonzero(term_rows)] = 1.0  # Q(terminal, a) = R(terminal, a)
    x = np.linalg.solve(m, rhs)
    if np.abs(m @ x - rhs).max() >= 1e-10:
        raise RuntimeError("policy evaluation solve exceeded residual bound")
    return x.reshape(s, a)


def greedy_policy(q: np.ndarray) -> np.ndarray:
    """Deterministic greedy policy; argmax ties break to the lowest index."""
    return np.argmax(q, axis=1)


def exhaustive_transitions(
    env: TabularEnv, copies_scale: int | None = None
) -> list[Transition]:
    """Every (s, a, s') with P > 0, replicated proportionally to probability.

    With copies_scale = D, each triple appears round(P * D) times, and all
    P * D must be integral (within 1e-9) so that empirical averages over the
    list equal exact expectations. When D is omitted the smallest D <= 10000
    that makes every probability integral is used. Terminal states contribute
    their absorbing self-loops (reward 0, terminal flag set), which pins
    their least-squares readout to the immediate reward.
    """
    spec = env.spec
    probs = spec.transitions
    if copies_scale is None:
        nonzero = probs[probs > 0]
        for d in range(1, 10001):
            if np.abs(nonzero * d - np.rint(nonzero * d)).max() < 1e-9:
                copies_scale = d
                break
        else:
            raise ValueError("no integral replication scale <= 10000; pass copies_scale")
    out: list[Transition] = []
    for s in range(spec.n_states):
        for a in range(spec.n_actions):
            for s2 in range(spec.n_states):
                prob = probs[s, a, s2]
                if prob == 0.0:
                    continue
                copies = prob * copies_scale
                if abs(copies - round(copies)) > 1e-9:
                    raise ValueError(
                        f"P({s2}|{s},{a}) = {prob} not integral at scale {copies_scale}"
                    )
                t = Transition(
                    state=env.observe(s),
                    action=a,
                    reward=float(spec.rewards[s, a]),
                    next_state=env.observe(s2),
                    terminal=bool(spec.terminal[s2]),
                )
                out.extend([t] * int(round(copies)))
    return out
