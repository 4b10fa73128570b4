"""Orchestration: the hybrid training loop, the periodic-probe protocol, and
the last-layer optimizer ablation.

The hybrid loop alternates n_drl steps of online DQN/DDQN training with one
batch refit of the network's linear head, installed via set_last_layer. With
srl_variant = "none" the loop degenerates to the vanilla trainer, bitwise:
refits never touch the trainer's rng streams, so the two paths produce
identical trajectories under the same seed.

Within an epoch the order is: advance (train steps, scheduled evaluations
inside), then refit. Evaluation records falling exactly on an epoch boundary
therefore reflect the pre-refit head; the refit shows up from the next
record on.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import linalg
from . import net as qnet
from . import optim, srl
from .dqn import (
    STREAM_GATHER,
    STREAM_INIT,
    STREAM_PROBE,
    DqnConfig,
    Trainer,
    evaluate,
    stream_rng,
)
from .errors import EmptyBuffer, NotPositiveDefinite
from .replay import ReplayBuffer, Transition, stack_batch
from .stats import LearningCurve, relative_weight_distance

logger = logging.getLogger(__name__)

# Extra stream tag for ablation shuffles (dqn owns 0..6).
STREAM_ABLATE = 7


@dataclass
class RunConfig:
    env_factory: Callable[[], object]
    hidden_sizes: tuple[int, ...] = (64, 64)
    total_steps: int = 200_000
    n_drl: int = 20_000
    seed: int = 1
    srl_variant: str = "none"  # "fqi" | "lstdq" | "none"
    regularizer: str = "bayesian"
    lam: float = 1.0
    n_srl: int = 50_000
    fqi_iterations: int = 1
    eval_period: int = 5_000
    eval_episodes: int = 20
    gather_fresh: bool = False
    replay_capacity: int = 100_000
    ls_dump_dir: str | None = None
    dqn: DqnConfig = field(default_factory=DqnConfig)

    def __post_init__(self):
        if self.n_drl < 1 or self.total_steps < self.n_drl:
            raise ValueError("need total_steps >= n_drl >= 1")
        if self.srl_variant not in ("fqi", "lstdq", "none"):
            raise ValueError(f"unknown srl variant {self.srl_variant!r}")

    @property
    def srl_iters(self) -> int:
        return self.total_steps // self.n_drl

    def srl_config(self) -> srl.SrlConfig:
        return srl.SrlConfig(
            kind=self.srl_variant if self.srl_variant != "none" else srl.KIND_FQI,
            regularizer=self.regularizer,
            lam=self.lam,
            n_srl=self.n_srl,
            fqi_iterations=self.fqi_iterations,
            gamma=self.dqn.gamma,
        )


@dataclass
class LsEvent:
    step: int
    epoch: int
    kind: str
    regularizer: str
    lam: float
    rel_weight_change: float
    condition: float
    ok: bool
    message: str = ""


@dataclass
class RunResult:
    curve: LearningCurve
    net: qnet.QNetwork
    ls_events: list[LsEvent]
    buffer: ReplayBuffer | None = None


@dataclass
class Checkpoint:
    epoch: int
    step: int
    net: qnet.QNetwork
    transitions: list[Transition]


def _build_trainer(cfg: RunConfig) -> Trainer:
    env = cfg.env_factory()
    eval_env = cfg.env_factory()
    sizes = [env.obs_dim, *cfg.hidden_sizes, env.n_actions]
    network = qnet.init_network(sizes, stream_rng(cfg.seed, STREAM_INIT))
    return Trainer(
        net=network,
        env=env,
        eval_env=eval_env,
        cfg=cfg.dqn,
        seed=cfg.seed,
        total_steps=cfg.total_steps,
        eval_period=cfg.eval_period,
        eval_episodes=cfg.eval_episodes,
        replay_capacity=cfg.replay_capacity,
    )


def _curve_from_records(records, cfg: RunConfig, variant: str) -> LearningCurve:
    return LearningCurve(
        steps=[r.epoch * cfg.eval_period for r in records],
        mean_returns=[r.mean_return for r in records],
        returns=[r.returns for r in records],
        meta={"variant": variant, "seed": cfg.seed, "lambda": cfg.lam},
    )


def _gather_fresh_buffer(trainer: Trainer, cfg: RunConfig, epoch: int) -> ReplayBuffer:
    """Roll out the current policy (eval-epsilon exploration) into a
    temporary buffer, leaving the live replay untouched."""
    env = cfg.env_factory()
    rng = stream_rng(cfg.seed, STREAM_GATHER, epoch)
    buf = ReplayBuffer(cfg.n_srl)
    policy_net = qnet.clone(trainer.net)
    cap = getattr(env, "max_episode_steps", 500)
    obs = env.reset(rng)
    steps_in_episode = 0
    from .dqn import epsilon_greedy  # local import avoids a cycle at module load

    for _ in range(cfg.n_srl):
        q, _ = qnet.forward(policy_net, obs)
        action = epsilon_greedy(q, cfg.dqn.eval_epsilon, rng)
        nxt, reward, done = env.step(action, rng)
        buf.push(Transition(obs, action, reward, nxt, done))
        steps_in_episode += 1
        if done or steps_in_episode >= cap:
            obs = env.reset(rng)
            steps_in_episode = 0
        else:
            obs = nxt
    return buf


def _apply_ls_update(trainer: Trainer, cfg: RunConfig, epoch: int) -> LsEvent:
    scfg = cfg.srl_config()
    w_before, b_before = qnet.get_last_layer(trainer.net)
    flat_before = srl.flatten_last_layer(w_before, b_before)
    try:
        buf = (
            _gather_fresh_buffer(trainer, cfg, epoch)
            if cfg.gather_fresh
            else trainer.buffer
        )
        w_new, b_new = srl.ls_update(trainer.net, buf, scfg, stream_rng(cfg.seed, STREAM_PROBE, epoch))
        qnet.set_last_layer(trainer.net, w_new, b_new)
        flat_after = srl.flatten_last_layer(w_new, b_new)
        base = float(np.linalg.norm(flat_before))
        change = (
            relative_weight_distance(flat_after, flat_before) if base > 0 else float("nan")
        )
        condition = float("nan")
        if cfg.ls_dump_dir is not None:
            condition = _dump_event_diagnostics(trainer, cfg, scfg, epoch, flat_before, flat_after)
        return LsEvent(
            step=trainer.step_count,
            epoch=epoch,
            kind=scfg.kind,
            regularizer=scfg.regularizer,
            lam=scfg.lam,
            rel_weight_change=change,
            condition=condition,
            ok=True,
        )
    except (NotPositiveDefinite, EmptyBuffer) as exc:
        # Fail open: keep the current head and keep training.
        logger.warning("ls update at step %d skipped: %s", trainer.step_count, exc)
        return LsEvent(
            step=trainer.step_count,
            epoch=epoch,
            kind=scfg.kind,
            regularizer=scfg.regularizer,
            lam=scfg.lam,
            rel_weight_change=float("nan"),
            condition=float("nan"),
            ok=False,
            message=str(exc),
        )


def _dump_event_diagnostics(trainer, cfg, scfg, epoch, prior, solution) -> float:
    """Write the refit's npz dump; returns the system's condition estimate."""
    data = trainer.buffer.snapshot(scfg.n_srl)
    if scfg.kind == srl.KIND_FQI:
        system = srl.build_fqi_system(data, trainer.net, prior, scfg.gamma)
        condition = linalg.condition_estimate(
            system.a_tilde + scfg.lam * np.eye(system.b_tilde.shape[0])
        )
    else:
        system = srl.build_lstdq_system(data, trainer.net, scfg.gamma)
        condition = float("nan")  # asymmetric system; no SPD estimate
    reg = srl.Regularizer.bayesian(scfg.lam, prior)
    path = os.path.join(cfg.ls_dump_dir, f"ls_update_epoch{epoch:04d}.npz")
    srl.dump_ls_diagnostics(path, system, reg, solution, condition)
    return condition


def run(cfg: RunConfig, variant_name: str | None = None) -> RunResult:
    """Full training run per the alternating schedule; seeded-deterministic.

    Returns the learning curve (one record per eval period, starting at step
    0), the final network, and one LsEvent per refit (empty for the vanilla
    run). A NotPositiveDefinite refit is logged and skipped, never fatal.
    """
    trainer = _build_trainer(cfg)
    events: list[LsEvent] = []
    done = 0
    epoch = 0
    while done < cfg.total_steps:
        block = min(cfg.n_drl, cfg.total_steps - done)
        trainer.advance(block)
        done += block
        epoch += 1
        if cfg.srl_variant != "none" and done % cfg.n_drl == 0:
            events.append(_apply_ls_update(trainer, cfg, epoch))
    if variant_name is None:
        variant_name = cfg.dqn.variant + ("" if cfg.srl_variant == "none" else f"+{cfg.srl_variant}")
    return RunResult(
        curve=_curve_from_records(trainer.records, cfg, variant_name),
        net=trainer.net,
        ls_events=events,
        buffer=trainer.buffer,
    )


def collect_checkpoints(cfg: RunConfig, snapshot_size: int) -> tuple[RunResult, list[Checkpoint]]:
    """Vanilla run that snapshots (net, replay window) at every epoch
    boundary, feeding the probe protocols."""
    trainer = _build_trainer(cfg)
    checkpoints: list[Checkpoint] = []
    done = 0
    epoch = 0
    while done < cfg.total_steps:
        block = min(cfg.n_drl, cfg.total_steps - done)
        trainer.advance(block)
        done += block
        epoch += 1
        checkpoints.append(
            Checkpoint(
                epoch=epoch,
                step=trainer.step_count,
                net=qnet.clone(trainer.net),
                transitions=trainer.buffer.snapshot(snapshot_size),
            )
        )
    result = RunResult(
        curve=_curve_from_records(trainer.records, cfg, cfg.dqn.variant),
        net=trainer.net,
        ls_events=[],
    )
    return result, checkpoints


@dataclass
class PeriodicTable:
    epochs: list[int]
    columns: list[str]  # first column is the baseline
    scores: list[list[float]]  # [n_epochs][n_columns]


def periodic_eval_run(
    cfg: RunConfig, grid: list[tuple[str, float]] | None = None
) -> PeriodicTable:
    """Probe protocol: train vanilla, and at every epoch boundary evaluate
    the unmodified network plus one refit per (regularizer, lambda) column,
    restoring the original head after each probe.

    Probes draw from their own rng streams and only read the replay buffer,
    so the underlying training trajectory is identical to a run without
    probes under the same seed. A probe whose solve fails scores NaN.
    """
    if grid is None:
        grid = [("bayesian", lam) for lam in (1e-2, 1e-1, 1.0, 1e1, 1e2)]
    probe_kind = cfg.srl_variant if cfg.srl_variant != "none" else srl.KIND_LSTDQ
    trainer = _build_trainer(cfg)
    probe_env = cfg.env_factory()
    columns = [cfg.dqn.variant] + [f"{reg}_lam{lam:g}" for reg, lam in grid]
    epochs: list[int] = []
    scores: list[list[float]] = []
    done = 0
    epoch = 0
    while done < cfg.total_steps:
        block = min(cfg.n_drl, cfg.total_steps - done)
        trainer.advance(block)
        done += block
        epoch += 1
        row = []
        base_record = evaluate(
            qnet.clone(trainer.net),
            probe_env,
            cfg.eval_episodes,
            cfg.dqn.eval_epsilon,
            stream_rng(cfg.seed, STREAM_PROBE, epoch, 0),
            epoch=epoch,
        )
        row.append(base_record.mean_return)
        w_orig, b_orig = qnet.get_last_layer(trainer.net)
        for j, (reg_kind, lam) in enumerate(grid, start=1):
            scfg = srl.SrlConfig(
                kind=probe_kind,
                regularizer=reg_kind,
                lam=lam,
                n_srl=cfg.n_srl,
                fqi_iterations=cfg.fqi_iterations,
                gamma=cfg.dqn.gamma,
            )
            try:
                w_new, b_new = srl.ls_update(
                    trainer.net, trainer.buffer, scfg, stream_rng(cfg.seed, STREAM_PROBE, epoch, j)
                )
                qnet.set_last_layer(trainer.net, w_new, b_new)
                record = evaluate(
                    qnet.clone(trainer.net),
                    probe_env,
                    cfg.eval_episodes,
                    cfg.dqn.eval_epsilon,
                    stream_rng(cfg.seed, STREAM_PROBE, epoch, j),
                    epoch=epoch,
                )
                row.append(record.mean_return)
            except (NotPositiveDefinite, EmptyBuffer) as exc:
                logger.warning("probe %s at epoch %d failed: %s", columns[j], epoch, exc)
                row.append(float("nan"))
            finally:
                qnet.set_last_layer(trainer.net, w_orig, b_orig)
        epochs.append(epoch)
        scores.append(row)
    return PeriodicTable(epochs=epochs, columns=columns, scores=scores)


# ---------------------------------------------------------------------------
# Ablation: which last-layer optimizer, at which batch size, with/without the
# prior term.
# ---------------------------------------------------------------------------

@dataclass
class AblationConfig:
    dataset_size: int = 80_000
    iterations: int = 20
    minibatch_sizes: tuple[int, ...] = (32, 512, 4096)
    lam: float = 1.0
    eval_episodes: int = 20

    def __post_init__(self):
        if self.dataset_size < 1 or self.iterations < 1:
            raise ValueError("dataset_size and iterations must be >= 1")
        if any(m < 1 for m in self.minibatch_sizes):
            raise ValueError("minibatch sizes must be >= 1")


@dataclass
class AblationRow:
    epoch: int
    method: str  # "fqi_ls" | "adam_prior" | "adam_noprior"
    minibatch: int | None  # None for the closed-form full-batch solve
    score: float
    score_delta: float
    rel_weight_distance: float
    reg_mse: float  # mean residual^2 + lam * ||w - prior||^2


def _taken_readout(feats: np.ndarray, actions: np.ndarray, w_flat: np.ndarray, n_actions: int):
    w, b = srl.unflatten_last_layer(w_flat, n_actions)
    return np.einsum("nf,nf->n", feats, w[actions]) + b[actions]


def _flat_gradient(feats, actions, resid, n_actions):
    """(1/m) * Phi^T resid without materializing Phi rows."""
    f = feats.shape[1]
    grad = np.zeros((f + 1) * n_actions)
    for a in range(n_actions):
        mask = actions == a
        if not mask.any():
            continue
        base = a * (f + 1)
        grad[base : base + f] = feats[mask].T @ resid[mask]
        grad[base + f] = resid[mask].sum()
    return grad / len(resid)


def ablation_run(
    acfg: AblationConfig,
    checkpoints: list[Checkpoint],
    env_factory: Callable[[], object],
    gamma: float,
    seed: int,
    eval_epsilon: float = 0.05,
) -> list[AblationRow]:
    """Head-only optimization at each checkpoint, by closed-form solve and by
    Adam with/without the prior pull, at several minibatch sizes.

    Every method starts from the checkpoint head (which is also the prior),
    optimizes the same frozen regression objective over the same dataset,
    and is scored by rollouts that share one rng stream per epoch, so score
    deltas are policy-driven. The reported objective value is
    mean residual^2 + lam * ||w - prior||^2.
    """
    if not checkpoints:
        raise EmptyBuffer("need at least one checkpoint")
    env = env_factory()
    rows: list[AblationRow] = []
    for ck in checkpoints:
        data = ck.transitions[-acfg.dataset_size :]
        states, actions, rewards, next_states, terminal = stack_batch(data)
        network = ck.net
        n_actions = network.n_actions
        w0, b0 = qnet.get_last_layer(network)
        prior = srl.flatten_last_layer(w0, b0)
        gram, feats_cache = srl._fqi_gram(network, states, actions)
        b_tilde = srl._fqi_rhs(
            network, feats_cache, actions, rewards, next_states, terminal, prior, gamma
        )
        feats = np.concatenate(feats_cache, axis=0)
        _, feats_next = qnet.forward_batch(network, next_states)
        q_prev = srl._head_readout(feats_next, prior, n_actions)
        y = np.where(terminal, rewards, rewards + gamma * q_prev.max(axis=1))
        n = len(data)

        def objective(w):
            resid = _taken_readout(feats, actions, w, n_actions) - y
            return float(np.mean(resid**2) + acfg.lam * np.sum((w - prior) ** 2))

        def score_of(w_flat):
            probe = qnet.clone(network)
            w_mat, b_vec = srl.unflatten_last_layer(w_flat, n_actions)
            qnet.set_last_layer(probe, w_mat, b_vec)
            record = evaluate(
                probe, env, acfg.eval_episodes, eval_epsilon,
                stream_rng(seed, STREAM_PROBE, ck.epoch), epoch=ck.epoch,
            )
            return record.mean_return

        baseline_score = score_of(prior)

        # Closed-form solve on the full batch.
        system = srl.LSSystem(a_tilde=gram, b_tilde=b_tilde, n_samples=n, kind=srl.KIND_FQI)
        w_ls = srl.solve_srl(system, srl.Regularizer.bayesian(acfg.lam, prior))
        ls_score = score_of(w_ls)
        ls_row = AblationRow(
            epoch=ck.epoch,
            method="fqi_ls",
            minibatch=None,
            score=ls_score,
            score_delta=ls_score - baseline_score,
            rel_weight_distance=relative_weight_distance(w_ls, prior),
            reg_mse=objective(w_ls),
        )

        for mb in acfg.minibatch_sizes:
            rows.append(ls_row)
            for method_idx, method in enumerate(("adam_prior", "adam_noprior")):
                rng = stream_rng(seed, STREAM_ABLATE, ck.epoch, method_idx, mb)
                w = prior.copy()
                state = optim.init_adam([w])  # paper-default hyperparameters
                for _ in range(acfg.iterations):
                    perm = rng.permutation(n)
                    for lo in range(0, n, mb):
                        idx = perm[lo : lo + mb]
                        resid = _taken_readout(feats[idx], actions[idx], w, n_actions) - y[idx]
                        grad = _flat_gradient(feats[idx], actions[idx], resid, n_actions)
                        if method == "adam_prior":
                            (w,), state = optim.adam_step_with_prior(
                                state, [w], [grad], acfg.lam, [prior]
                            )
                        else:
                            (w,), state = optim.adam_step(state, [w], [grad])
                score = score_of(w)
                rows.append(
                    AblationRow(
                        epoch=ck.epoch,
                        method=method,
                        minibatch=mb,
                        score=score,
                        score_delta=score - baseline_score,
                        rel_weight_distance=relative_weight_distance(w, prior),
                        reg_mse=objective(w),
                    )
                )
    return rows
