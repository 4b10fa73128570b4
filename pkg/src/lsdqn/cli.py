"""Command-line entry point binding configuration, runs, and file output.

Commands: train, periodic-eval, ablate, report. Each takes --config PATH
(optional; defaults apply), --seed N (overrides run.seed) and --out DIR.
Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from typing import Any

from . import artifacts, config as cfgmod, plots, stats
from . import net as qnet
from .dqn import DqnConfig
from .env import CartPoleParams, make_cartpole_discrete, make_gridworld
from .errors import ConfigError, LsdqnError
from .run import AblationConfig, RunConfig, ablation_run, collect_checkpoints, periodic_eval_run, run

logger = logging.getLogger(__name__)


def make_env_factory(values: dict[str, Any]):
    name = values["env.name"]
    if name == "gridworld":
        width, height = values["env.width"], values["env.height"]
        goal = None
        if values["env.goal_row"] >= 0 and values["env.goal_col"] >= 0:
            goal = (values["env.goal_row"], values["env.goal_col"])

        def factory():
            _, env = make_gridworld(
                width,
                height,
                goal=goal,
                step_cost=values["env.step_cost"],
                slip_prob=values["env.slip"],
                gamma=values["env.gamma"],
                max_episode_steps=values["env.max_episode_steps"],
            )
            return env

        return factory
    params = CartPoleParams(
        gravity=values["env.cartpole_gravity"],
        force_mag=values["env.cartpole_force"],
        tau=values["env.cartpole_tau"],
    )

    def factory():
        return make_cartpole_discrete(params, max_episode_steps=values["env.max_episode_steps"])

    return factory


def make_run_config(values: dict[str, Any], out_dir: str | None = None) -> RunConfig:
    decay = values["dqn.epsilon_decay_steps"]
    if decay == 0:
        decay = max(1, values["run.total_steps"] // 10)
    dqn_cfg = DqnConfig(
        gamma=values["env.gamma"],
        variant=values["dqn.variant"],
        epsilon_start=values["dqn.epsilon_start"],
        epsilon_end=values["dqn.epsilon_end"],
        epsilon_decay_steps=decay,
        eval_epsilon=values["dqn.eval_epsilon"],
        minibatch_size=values["dqn.minibatch_size"],
        target_sync_period=values["dqn.target_sync_period"],
        train_period=values["dqn.train_period"],
        warmup_steps=values["dqn.warmup_steps"],
        optimizer=values["dqn.optimizer"],
        learning_rate=values["dqn.learning_rate"],
        reward_clip=values["dqn.reward_clip"],
    )
    ls_dump_dir = None
    if values["srl.dump_diagnostics"] and out_dir is not None:
        ls_dump_dir = artifacts.ensure_out_dir(os.path.join(out_dir, "ls_diagnostics"))
    return RunConfig(
        env_factory=make_env_factory(values),
        hidden_sizes=values["net.hidden_sizes"],
        total_steps=values["run.total_steps"],
        n_drl=values["run.n_drl"],
        seed=values["run.seed"],
        srl_variant=values["run.srl"],
        regularizer=values["srl.regularizer"],
        lam=values["srl.lambda"],
        n_srl=values["srl.n_srl"],
        fqi_iterations=values["srl.fqi_iterations"],
        eval_period=values["run.eval_period"],
        eval_episodes=values["run.eval_episodes"],
        gather_fresh=values["srl.gather_fresh"],
        replay_capacity=values["dqn.replay_capacity"],
        ls_dump_dir=ls_dump_dir,
        dqn=dqn_cfg,
    )


def _load_values(args) -> dict[str, Any]:
    values = cfgmod.load_config(args.config) if args.config else cfgmod.default_config()
    if args.seed is not None:
        values["run.seed"] = args.seed
    return values


def cmd_train(args) -> int:
    values = _load_values(args)
    out = artifacts.ensure_out_dir(args.out)
    cfg_hash = cfgmod.config_hash(values)
    cfg = make_run_config(values, out_dir=out)
    started = time.perf_counter()
    result = run(cfg)
    elapsed = time.perf_counter() - started
    curve_path = os.path.join(out, "curve.csv")
    diag_path = os.path.join(out, "diagnostics.csv")
    ckpt_path = os.path.join(out, "checkpoint.qnet")
    artifacts.write_curve_csv(curve_path, result.curve, cfg_hash, cfg.seed)
    artifacts.write_diagnostics_csv(diag_path, result.ls_events, cfg_hash, cfg.seed)
    qnet.save_checkpoint(result.net, ckpt_path)
    outputs = [curve_path, diag_path, ckpt_path]
    if values["dqn.replay_dump"] and result.buffer is not None:
        buffer_path = os.path.join(out, "replay.csv")
        result.buffer.dump_csv(
            buffer_path, header_lines=(f"config_hash={cfg_hash} seed={cfg.seed}",)
        )
        outputs.append(buffer_path)
    artifacts.write_manifest(
        os.path.join(out, "manifest.txt"),
        cfgmod.resolved_text(values),
        cfg_hash,
        cfg.seed,
        elapsed,
        outputs,
    )
    logger.info("train finished in %.1fs; curve at %s", elapsed, curve_path)
    return 0


def cmd_periodic_eval(args) -> int:
    values = _load_values(args)
    out = artifacts.ensure_out_dir(args.out)
    cfg_hash = cfgmod.config_hash(values)
    cfg = make_run_config(values, out_dir=out)
    grid = [
        (reg, lam)
        for reg in values["periodic.regularizers"]
        for lam in values["periodic.lambda_grid"]
    ]
    started = time.perf_counter()
    table = periodic_eval_run(cfg, grid)
    elapsed = time.perf_counter() - started
    table_path = os.path.join(out, "periodic_eval.csv")
    artifacts.write_periodic_csv(table_path, table, cfg_hash, cfg.seed)
    artifacts.write_manifest(
        os.path.join(out, "manifest.txt"),
        cfgmod.resolved_text(values),
        cfg_hash,
        cfg.seed,
        elapsed,
        [table_path],
    )
    return 0


def cmd_ablate(args) -> int:
    values = _load_values(args)
    out = artifacts.ensure_out_dir(args.out)
    cfg_hash = cfgmod.config_hash(values)
    cfg = make_run_config(values, out_dir=out)
    acfg = AblationConfig(
        dataset_size=values["ablate.dataset_size"],
        iterations=values["ablate.iterations"],
        minibatch_sizes=values["ablate.minibatch_sizes"],
        lam=values["ablate.lambda"],
        eval_episodes=values["run.eval_episodes"],
    )
    started = time.perf_counter()
    result, checkpoints = collect_checkpoints(cfg, snapshot_size=acfg.dataset_size)
    limit = values["ablate.epochs"]
    if limit > 0:
        checkpoints = checkpoints[:limit]
    rows = ablation_run(
        acfg,
        checkpoints,
        cfg.env_factory,
        gamma=cfg.dqn.gamma,
        seed=cfg.seed,
        eval_epsilon=cfg.dqn.eval_epsilon,
    )
    elapsed = time.perf_counter() - started
    ablation_path = os.path.join(out, "ablation.csv")
    artifacts.write_ablation_csv(ablation_path, rows, cfg_hash, cfg.seed)
    curve_path = os.path.join(out, "curve.csv")
    artifacts.write_curve_csv(curve_path, result.curve, cfg_hash, cfg.seed)
    artifacts.write_manifest(
        os.path.join(out, "manifest.txt"),
        cfgmod.resolved_text(values),
        cfg_hash,
        cfg.seed,
        elapsed,
        [ablation_path, curve_path],
    )
    return 0


def cmd_report(args) -> int:
    if len(args.curves) < 2:
        raise ConfigError("report needs at least two curve files")
    curves = [artifacts.read_curve_csv(path) for path in args.curves]
    out = artifacts.ensure_out_dir(args.out)
    rows = stats.compare_runs(curves, baseline_index=0)
    seed = int(curves[0].meta.get("seed", 0))
    cfg_hash = "report"
    report_path = os.path.join(out, "report.csv")
    artifacts.write_report_csv(report_path, rows, cfg_hash, seed)
    curves_png = os.path.join(out, "learning_curves.png")
    scores_png = os.path.join(out, "max_scores.png")
    plots.plot_learning_curves(curves, curves_png)
    plots.plot_max_scores(rows, scores_png)
    summary_path = os.path.join(out, "report.txt")
    with open(summary_path, "w", encoding="utf-8") as fh:
        fh.write(f"baseline: {rows[0]['variant']}\n")
        for row in rows:
            p = row["p_vs_baseline"]
            p_text = f"p={p:.3g}" if isinstance(p, float) else str(p)
            fh.write(f"{row['variant']}: max score {row['max_score']:.4f} ({p_text})\n")
    logger.info("report written to %s", report_path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lsdqn",
        description="Hybrid deep/least-squares Q-learning laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="path to a key = value config file")
        p.add_argument("--seed", type=int, default=None, help="override run.seed")
        p.add_argument("--out", default="out", help="output directory")

    common(sub.add_parser("train", help="full training run; writes curve, diagnostics, checkpoint"))
    common(sub.add_parser("periodic-eval", help="probe refits across a lambda grid per epoch"))
    common(sub.add_parser("ablate", help="last-layer optimizer/batch-size ablation"))
    report = sub.add_parser("report", help="compare curve files; writes CSV, summary and figures")
    report.add_argument("curves", nargs="*", help="curve CSV files; first is the baseline")
    report.add_argument("--out", default="out", help="output directory")
    return parser


_COMMANDS = {
    "train": cmd_train,
    "periodic-eval": cmd_periodic_eval,
    "ablate": cmd_ablate,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (LsdqnError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
