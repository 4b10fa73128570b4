"""Flat key = value configuration files.

One `key = value` per line, `#` starts a comment, keys are namespaced by
module. Every key has a documented default; unknown keys are errors, so a
parse either fails or yields a complete configuration.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Any, Callable

from .errors import ConfigError


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(part.strip()) for part in text.split(",") if part.strip())


def _parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(part.strip()) for part in text.split(",") if part.strip())


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        value = text.strip()
        if value not in options:
            raise ValueError(f"must be one of {options}, got {value!r}")
        return value

    return parse


@dataclass(frozen=True)
class ConfigKey:
    default: Any
    parse: Callable[[str], Any]
    help: str


SCHEMA: dict[str, ConfigKey] = {
    # --- run orchestration ---
    "run.total_steps": ConfigKey(200_000, int, "environment steps in a full run"),
    "run.n_drl": ConfigKey(20_000, int, "steps between batch head refits"),
    "run.seed": ConfigKey(1, int, "master seed for all rng streams"),
    "run.srl": ConfigKey("fqi", _choice("fqi", "lstdq", "none"), "batch solver variant"),
    "run.eval_period": ConfigKey(5_000, int, "steps between evaluations"),
    "run.eval_episodes": ConfigKey(20, int, "rollouts per evaluation"),
    # --- batch solver ---
    "srl.lambda": ConfigKey(1.0, float, "regularization coefficient"),
    "srl.regularizer": ConfigKey(
        "bayesian", _choice("bayesian", "l2", "none"), "regularizer kind"
    ),
    "srl.n_srl": ConfigKey(50_000, int, "snapshot size per refit"),
    "srl.fqi_iterations": ConfigKey(1, int, "solver iterations per refit"),
    "srl.gather_fresh": ConfigKey(
        False, _parse_bool, "gather fresh rollouts for refits instead of replay snapshots"
    ),
    "srl.dump_diagnostics": ConfigKey(
        False, _parse_bool, "write per-refit npz dumps (system, prior, solution, condition)"
    ),
    # --- online trainer ---
    "dqn.variant": ConfigKey("dqn", _choice("dqn", "ddqn"), "target rule"),
    "dqn.minibatch_size": ConfigKey(32, int, "SGD minibatch size"),
    "dqn.epsilon_start": ConfigKey(1.0, float, "exploration epsilon at step 0"),
    "dqn.epsilon_end": ConfigKey(0.1, float, "exploration epsilon after decay"),
    "dqn.epsilon_decay_steps": ConfigKey(
        0, int, "linear decay horizon; 0 means 10% of run.total_steps"
    ),
    "dqn.eval_epsilon": ConfigKey(0.05, float, "epsilon during evaluation rollouts"),
    "dqn.target_sync_period": ConfigKey(1000, int, "steps between target-network syncs"),
    "dqn.train_period": ConfigKey(4, int, "environment steps per SGD step"),
    "dqn.warmup_steps": ConfigKey(500, int, "steps before SGD starts"),
    "dqn.optimizer": ConfigKey("rmsprop", _choice("rmsprop", "adam"), "trainer optimizer"),
    "dqn.learning_rate": ConfigKey(
        0.001, float, "trainer learning rate (desk default; 0.00025 is the large-scale value)"
    ),
    "dqn.reward_clip": ConfigKey(False, _parse_bool, "clip rewards to [-1, 1] for targets"),
    "dqn.replay_capacity": ConfigKey(100_000, int, "replay buffer capacity"),
    "dqn.replay_dump": ConfigKey(False, _parse_bool, "dump the final replay buffer to CSV"),
    # --- network ---
    "net.hidden_sizes": ConfigKey((64, 64), _parse_int_list, "hidden layer widths"),
    # --- environment ---
    "env.name": ConfigKey("gridworld", _choice("gridworld", "cartpole"), "environment"),
    "env.gamma": ConfigKey(0.95, float, "MDP discount (shared by trainer and solver)"),
    "env.max_episode_steps": ConfigKey(500, int, "episode cap"),
    "env.width": ConfigKey(5, int, "gridworld width"),
    "env.height": ConfigKey(5, int, "gridworld height"),
    "env.slip": ConfigKey(0.1, float, "gridworld slip probability"),
    "env.step_cost": ConfigKey(0.0, float, "gridworld per-step reward"),
    "env.goal_row": ConfigKey(-1, int, "gridworld goal row; -1 means bottom-right"),
    "env.goal_col": ConfigKey(-1, int, "gridworld goal column; -1 means bottom-right"),
    "env.cartpole_gravity": ConfigKey(9.8, float, "cart-pole gravity"),
    "env.cartpole_force": ConfigKey(10.0, float, "cart-pole push magnitude"),
    "env.cartpole_tau": ConfigKey(0.02, float, "cart-pole integration step"),
    # --- periodic probe protocol ---
    "periodic.lambda_grid": ConfigKey(
        (1e-2, 1e-1, 1.0, 1e1, 1e2), _parse_float_list, "lambda sweep for probe columns"
    ),
    "periodic.regularizers": ConfigKey(
        ("bayesian",),
        lambda text: tuple(_choice("bayesian", "l2", "none")(p.strip()) for p in text.split(",")),
        "regularizer kinds in the probe sweep",
    ),
    # --- ablation ---
    "ablate.dataset_size": ConfigKey(80_000, int, "samples drawn from replay per checkpoint"),
    "ablate.iterations": ConfigKey(20, int, "passes over the dataset for Adam variants"),
    "ablate.minibatch_sizes": ConfigKey((32, 512, 4096), _parse_int_list, "Adam minibatch sizes"),
    "ablate.lambda": ConfigKey(1.0, float, "prior coefficient in the ablation"),
    "ablate.epochs": ConfigKey(0, int, "checkpoints to ablate; 0 means every epoch"),
}


def parse_config(text: str) -> dict[str, Any]:
    """Parse overrides and merge over defaults; total (error or complete)."""
    values = {key: spec.default for key, spec in SCHEMA.items()}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = SCHEMA[key].parse(value.strip())
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
    return values


def load_config(path: str) -> dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def default_config() -> dict[str, Any]:
    return {key: spec.default for key, spec in SCHEMA.items()}


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def resolved_text(values: dict[str, Any]) -> str:
    """Canonical sorted rendering; the basis of the config hash."""
    return "\n".join(f"{key} = {_format_value(values[key])}" for key in sorted(values)) + "\n"


def config_hash(values: dict[str, Any]) -> str:
    return hashlib.sha256(resolved_text(values).encode("utf-8")).hexdigest()[:16]


def documented_defaults() -> str:
    """Render the full schema with help text, as a ready-to-edit config file."""
    lines = []
    for key, spec in SCHEMA.items():
        lines.append(f"# {spec.help}")
        lines.append(f"{key} = {_format_value(spec.default)}")
    return "\n".join(lines) + "\n"
