"""Batch least-squares side: action-augmented features, empirical systems,
and the prior-anchored regularized solves.

Feature layout. The network's penultimate activations phi(s) (length f) are
state-only; the batch solvers need state-action features. Each action owns a
contiguous block of width f+1: block a of Phi(s, a) holds (phi(s), 1) and
every other block is zero. The trailing 1 is the bias slot, so the solve
re-learns the head's bias together with its weights, and the flat solution
vector maps back to the head by splitting blocks.

Two empirical systems over a snapshot of N transitions, both k x k with
k = (f+1)*|A|:

    fixed-point kind ("lstdq"):
        A = (1/N) sum Phi_i (Phi_i - gamma * Phi'_i)^T      b = (1/N) sum Phi_i r_i
        where Phi'_i = Phi(s'_i, pi(s'_i)), pi greedy under the current net,
        zeroed on terminal transitions. A is asymmetric; it is solved with a
        general LU factorization, never a symmetrized Cholesky (symmetrizing
        changes the fixed point).
    regression kind ("fqi"):
        A = (1/N) sum Phi_i Phi_i^T                          b = (1/N) sum Phi_i y_i
        with y_i = r_i + gamma * max_a' Phi(s'_i, a') . w_prev, y_i = r_i on
        terminals. A is symmetric PSD and goes through Cholesky.

Regularized solution: (A + lambda*I) w = b + lambda*w_prior. The "none"
regularizer returns the exact least-squares minimizer of ||A w - b|| instead
(min-norm; exact on consistent systems), which is the unregularized
pseudo-inverse solution without a jitter approximation.

Features are always regenerated from the current network when a system is
built; the replay buffer stores raw observations only, so stale features
cannot leak in. Accumulation runs in float64 over fixed-size shards in a
fixed order, which keeps results bitwise reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from . import net as qnet
from .errors import DimensionMismatch, EmptyBuffer, InvalidAction, NotPositiveDefinite
from .replay import ReplayBuffer, Transition, stack_batch

_SHARD = 8192

KIND_LSTDQ = "lstdq"
KIND_FQI = "fqi"


@dataclass
class LSSystem:
    a_tilde: np.ndarray  # [k, k]
    b_tilde: np.ndarray  # [k]
    n_samples: int
    kind: str

    def __post_init__(self):
        k = self.b_tilde.shape[0]
        if self.a_tilde.shape != (k, k):
            raise DimensionMismatch(
                f"a_tilde {self.a_tilde.shape} does not match b_tilde length {k}"
            )
        if self.kind not in (KIND_LSTDQ, KIND_FQI):
            raise ValueError(f"unknown system kind {self.kind!r}")
        if self.n_samples < 1:
            raise EmptyBuffer("system built from no samples")


@dataclass(frozen=True)
class Regularizer:
    """Tagged choice: none | l2(lambda) | bayesian(lambda, prior)."""

    kind: str
    lam: float = 0.0
    prior: np.ndarray | None = None

    @staticmethod
    def none() -> "Regularizer":
        return Regularizer(kind="none")

    @staticmethod
    def l2(lam: float) -> "Regularizer":
        if lam < 0:
            raise ValueError(f"lambda must be nonnegative, got {lam}")
        return Regularizer(kind="l2", lam=lam)

    @staticmethod
    def bayesian(lam: float, prior: np.ndarray) -> "Regularizer":
        if lam < 0:
            raise ValueError(f"lambda must be nonnegative, got {lam}")
        return Regularizer(kind="bayesian", lam=lam, prior=np.asarray(prior, dtype=np.float64))


@dataclass
class SrlConfig:
    kind: str = KIND_FQI  # "lstdq" | "fqi"
    regularizer: str = "bayesian"  # "bayesian" | "l2" | "none"
    lam: float = 1.0
    n_srl: int = 50_000
    fqi_iterations: int = 1
    gamma: float = 0.95

    def __post_init__(self):
        if self.kind not in (KIND_LSTDQ, KIND_FQI):
            raise ValueError(f"unknown srl kind {self.kind!r}")
        if self.regularizer not in ("bayesian", "l2", "none"):
            raise ValueError(f"unknown regularizer {self.regularizer!r}")
        if self.lam < 0:
            raise ValueError(f"lambda must be nonnegative, got {self.lam}")
        if self.fqi_iterations < 1:
            raise ValueError("fqi_iterations must be >= 1")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must be in [0, 1), got {self.gamma}")


def augment_features(phi: np.ndarray, action: int, n_actions: int) -> np.ndarray:
    """Zero-padded block embedding: block `action` holds (phi, 1)."""
    phi = np.asarray(phi, dtype=np.float64)
    if phi.ndim != 1:
        raise DimensionMismatch(f"phi must be a vector, got shape {phi.shape}")
    if not 0 <= action < n_actions:
        raise InvalidAction(f"action {action} outside [0, {n_actions})")
    block = phi.shape[0] + 1
    out = np.zeros(block * n_actions)
    base = action * block
    out[base : base + phi.shape[0]] = phi
    out[base + phi.shape[0]] = 1.0
    return out


def flatten_last_layer(weights: np.ndarray, biases: np.ndarray) -> np.ndarray:
    """Head (W [|A|, f], b [|A|]) -> flat vector in block layout."""
    return np.concatenate([np.append(weights[a], biases[a]) for a in range(weights.shape[0])])


def unflatten_last_layer(w_flat: np.ndarray, n_actions: int) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of flatten_last_layer."""
    w_flat = np.asarray(w_flat, dtype=np.float64)
    if w_flat.shape[0] % n_actions != 0:
        raise DimensionMismatch(
            f"flat vector of length {w_flat.shape[0]} not divisible by {n_actions} blocks"
        )
    blocks = w_flat.reshape(n_actions, -1)
    return blocks[:, :-1].copy(), blocks[:, -1].copy()


def _embed_blocks(feats: np.ndarray, actions: np.ndarray, n_actions: int) -> np.ndarray:
    """[n, f] features and [n] actions -> [n, (f+1)*|A|] augmented rows."""
    n, f = feats.shape
    block = f + 1
    out = np.zeros((n, block * n_actions))
    cols = actions[:, None] * block + np.arange(block)[None, :]
    vals = np.concatenate([feats, np.ones((n, 1))], axis=1)
    np.put_along_axis(out, cols, vals, axis=1)
    return out


def _head_readout(feats: np.ndarray, w_flat: np.ndarray, n_actions: int) -> np.ndarray:
    """Q readout [n, |A|] of flat head weights on plain features."""
    w, b = unflatten_last_layer(w_flat, n_actions)
    return feats @ w.T + b


def build_lstdq_system(data: list[Transition], net: qnet.QNetwork, gamma: float) -> LSSystem:
    """Empirical fixed-point system with the greedy policy of `net`.

    Successor features are taken at pi(s') = argmax_a Q_net(s', a) (ties to
    the lowest index) and zeroed on terminal transitions. Features for both
    sides are generated fresh from `net`.
    """
    if not data:
        raise EmptyBuffer("no transitions")
    states, actions, rewards, next_states, terminal = stack_batch(data)
    return _assemble_lstdq(net, states, actions, rewards, next_states, terminal, gamma)


def _assemble_lstdq(net, states, actions, rewards, next_states, terminal, gamma,
                    policy_net=None) -> LSSystem:
    policy_net = policy_net if policy_net is not None else net
    n = states.shape[0]
    n_actions = net.n_actions
    k = (net.n_features + 1) * n_actions
    a_tilde = np.zeros((k, k))
    b_tilde = np.zeros(k)
    for lo in range(0, n, _SHARD):
        hi = min(lo + _SHARD, n)
        _, feats = qnet.forward_batch(net, states[lo:hi])
        q_next, feats_next = qnet.forward_batch(net, next_states[lo:hi])
        if policy_net is not net:
            q_next, _ = qnet.forward_batch(policy_net, next_states[lo:hi])
        pi_next = np.argmax(q_next, axis=1)
        phi = _embed_blocks(feats, actions[lo:hi], n_actions)
        phi_next = _embed_blocks(feats_next, pi_next, n_actions)
        phi_next[terminal[lo:hi]] = 0.0
        a_tilde += phi.T @ (phi - gamma * phi_next)
        b_tilde += phi.T @ rewards[lo:hi]
    a_tilde /= n
    b_tilde /= n
    return LSSystem(a_tilde=a_tilde, b_tilde=b_tilde, n_samples=n, kind=KIND_LSTDQ)


def build_fqi_system(
    data: list[Transition], net: qnet.QNetwork, w_prev: np.ndarray, gamma: float
) -> LSSystem:
    """Empirical regression system with targets from the previous solution.

    y_i = r_i + gamma * max_a' Phi(s'_i, a') . w_prev, y_i = r_i on
    terminals; the Gram matrix sum Phi Phi^T / N is symmetric PSD.
    """
    if not data:
        raise EmptyBuffer("no transitions")
    states, actions, rewards, next_states, terminal = stack_batch(data)
    gram, feats_cache = _fqi_gram(net, states, actions)
    b_tilde = _fqi_rhs(net, feats_cache, actions, rewards, next_states, terminal,
                       np.asarray(w_prev, dtype=np.float64), gamma)
    return LSSystem(a_tilde=gram, b_tilde=b_tilde, n_samples=states.shape[0], kind=KIND_FQI)


def _fqi_gram(net, states, actions):
    """Gram matrix of augmented rows, plus cached plain features per shard."""
    n = states.shape[0]
    n_actions = net.n_actions
    k = (net.n_features + 1) * n_actions
    gram = np.zeros((k, k))
    feats_cache = []
    for lo in range(0, n, _SHARD):
        hi = min(lo + _SHARD, n)
        _, feats = qnet.forward_batch(net, states[lo:hi])
        phi = _embed_blocks(feats, actions[lo:hi], n_actions)
        gram += phi.T @ phi
        feats_cache.append(feats)
    gram /= n
    return gram, feats_cache


def _fqi_rhs(net, feats_cache, actions, rewards, next_states, terminal, w_prev, gamma):
    n = rewards.shape[0]
    n_actions = net.n_actions
    k = (net.n_features + 1) * n_actions
    if w_prev.shape != (k,):
        raise DimensionMismatch(f"w_prev must have length {k}, got {w_prev.shape}")
    b_tilde = np.zeros(k)
    shard_idx = 0
    for lo in range(0, n, _SHARD):
        hi = min(lo + _SHARD, n)
        feats = feats_cache[shard_idx]
        shard_idx += 1
        _, feats_next = qnet.forward_batch(net, next_states[lo:hi])
        q_prev = _head_readout(feats_next, w_prev, n_actions)
        targets = np.where(
            terminal[lo:hi], rewards[lo:hi], rewards[lo:hi] + gamma * q_prev.max(axis=1)
        )
        phi = _embed_blocks(feats, actions[lo:hi], n_actions)
        b_tilde += phi.T @ targets
    return b_tilde / n


def solve_srl(sys: LSSystem, reg: Regularizer) -> np.ndarray:
    """Solve the regularized system; returns the flat weight vector.

    bayesian/l2 solve (A + lambda*I) w = b + lambda*prior (prior 0 for l2):
    Cholesky for the symmetric regression kind, LU for the asymmetric
    fixed-point kind. lambda = 0 on a singular system raises
    NotPositiveDefinite, the failure mode of unregularized solves on
    ill-conditioned feature matrices. The "none" regularizer returns the
    exact least-squares minimizer instead and cannot fail that way.
    """
    k = sys.b_tilde.shape[0]
    if reg.kind == "none":
        return linalg.least_squares(sys.a_tilde, sys.b_tilde)
    prior = reg.prior if reg.kind == "bayesian" else np.zeros(k)
    if prior is None or prior.shape != (k,):
        shape = None if prior is None else prior.shape
        raise DimensionMismatch(f"prior must have length {k}, got {shape}")
    if sys.kind == KIND_FQI:
        return linalg.solve_regularized(sys.a_tilde, sys.b_tilde, reg.lam, prior)
    m = sys.a_tilde + reg.lam * np.eye(k)
    rhs = sys.b_tilde + reg.lam * prior
    w = linalg.solve_linear(m, rhs)
    if reg.lam == 0.0:
        resid = np.linalg.norm(m @ w - rhs)
        if resid > 1e-8 * (1.0 + np.linalg.norm(rhs)):
            raise NotPositiveDefinite(
                f"unregularized fixed-point solve residual {resid:.3e}"
            )
    return w


def _regularizer_for(cfg: SrlConfig, prior: np.ndarray) -> Regularizer:
    if cfg.regularizer == "bayesian":
        return Regularizer.bayesian(cfg.lam, prior)
    if cfg.regularizer == "l2":
        return Regularizer.l2(cfg.lam)
    return Regularizer.none()


def ls_update(
    net: qnet.QNetwork,
    buf: ReplayBuffer,
    srl_config: SrlConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """One batch refit of the head: snapshot, rebuild features, solve.

    Returns the new head as (weights [|A|, f], biases [|A|]); the caller
    decides whether to install it. The prior is the current head (weights
    and biases flattened in block layout). With fqi_iterations > 1 the
    regression-kind solve is iterated on the same snapshot (the Gram matrix
    is reused; only targets move); the fixed-point kind re-derives its
    greedy policy from each iterate.
    """
    data = buf.snapshot(srl_config.n_srl)
    states, actions, rewards, next_states, terminal = stack_batch(data)
    w0, b0 = qnet.get_last_layer(net)
    prior = flatten_last_layer(w0, b0)
    reg = _regularizer_for(srl_config, prior)
    candidate = prior
    if srl_config.kind == KIND_FQI:
        gram, feats_cache = _fqi_gram(net, states, actions)
        for _ in range(srl_config.fqi_iterations):
            b_tilde = _fqi_rhs(net, feats_cache, actions, rewards, next_states,
                               terminal, candidate, srl_config.gamma)
            system = LSSystem(a_tilde=gram, b_tilde=b_tilde,
                              n_samples=states.shape[0], kind=KIND_FQI)
            candidate = solve_srl(system, reg)
    else:
        policy_net = qnet.clone(net)
        for _ in range(srl_config.fqi_iterations):
            w_cand, b_cand = unflatten_last_layer(candidate, net.n_actions)
            qnet.set_last_layer(policy_net, w_cand, b_cand)
            system = _assemble_lstdq(net, states, actions, rewards, next_states,
                                     terminal, srl_config.gamma,
                                     policy_net=policy_net)
            candidate = solve_srl(system, reg)
    return unflatten_last_layer(candidate, net.n_actions)


def dump_ls_diagnostics(
    path: str,
    system: LSSystem,
    reg: Regularizer,
    solution: np.ndarray,
    condition: float,
) -> None:
    """Persist one refit's raw material for offline analysis (npz)."""
    prior = reg.prior if reg.prior is not None else np.zeros_like(solution)
    np.savez(
        path,
        a_tilde=system.a_tilde,
        b_tilde=system.b_tilde,
        lam=np.asarray(reg.lam),
        prior=prior,
        solution=solution,
        condition=np.asarray(condition),
        kind=np.asarray(system.kind),
    )
