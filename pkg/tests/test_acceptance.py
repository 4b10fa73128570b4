"""Acceptance suite: one test per criterion, each printing a PASS line with
its runtime (run with -s to see them stream). Oracle-equivalence and
invariant checks replace benchmark score reproduction; tolerances are fixed
here, not calibrated.
"""

import itertools
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pytest

from lsdqn import config as cfgmod
from lsdqn import env as envmod
from lsdqn import net as qnet
from lsdqn import cli, dqn, optim, run as runmod, srl, stats
from lsdqn.replay import ReplayBuffer, Transition


def _report(number, description, started, budget):
    elapsed = time.perf_counter() - started
    print(f"ACCEPTANCE {number} PASS {description} ({elapsed:.1f}s, budget {budget:.0f}s)")
    assert elapsed < budget, f"criterion {number} exceeded its runtime budget"


def identity_feature_net(n_states, n_actions, head=None, bias=None):
    head = np.zeros((n_actions, n_states)) if head is None else head
    bias = np.zeros(n_actions) if bias is None else bias
    return qnet.QNetwork(
        weights=[np.eye(n_states), head.copy()],
        biases=[np.zeros(n_states), bias.copy()],
    )


# ---------------------------------------------------------------------------
# 1. Tabular FQI = value iteration
# ---------------------------------------------------------------------------

def test_criterion_1_tabular_fqi_equals_value_iteration():
    started = time.perf_counter()
    spec, env = envmod.make_gridworld(5, 5, slip_prob=0.1, gamma=0.95)
    q_star = envmod.dp_q_star(spec)
    data = envmod.exhaustive_transitions(env)
    buf = ReplayBuffer(len(data))
    for t in data:
        buf.push(t)
    network = identity_feature_net(spec.n_states, spec.n_actions)
    cfg = srl.SrlConfig(kind="fqi", regularizer="none", lam=0.0, n_srl=len(data),
                        fqi_iterations=400, gamma=spec.gamma)
    w, b = srl.ls_update(network, buf, cfg, np.random.default_rng(0))
    q_hat = np.eye(spec.n_states) @ w.T + b
    err = float(np.abs(q_hat - q_star).max())
    assert err <= 1e-6, f"sup-norm gap {err:.3e}"
    _report(1, f"iterated unregularized FQI matches value iteration (gap {err:.1e})",
            started, 10.0)


# ---------------------------------------------------------------------------
# 2. Tabular LSTD-Q = policy evaluation
# ---------------------------------------------------------------------------

def test_criterion_2_tabular_lstdq_equals_policy_evaluation():
    started = time.perf_counter()
    spec, env = envmod.make_gridworld(5, 5, slip_prob=0.1, gamma=0.95)
    rng = np.random.default_rng(7)
    head = rng.standard_normal((spec.n_actions, spec.n_states))
    network = identity_feature_net(spec.n_states, spec.n_actions, head=head)
    policy = envmod.greedy_policy(np.eye(spec.n_states) @ head.T)
    q_pi = envmod.dp_policy_eval(spec, policy)
    data = envmod.exhaustive_transitions(env)
    system = srl.build_lstdq_system(data, network, spec.gamma)
    w_flat = srl.solve_srl(system, srl.Regularizer.none())
    w, b = srl.unflatten_last_layer(w_flat, spec.n_actions)
    q_hat = np.eye(spec.n_states) @ w.T + b
    err = float(np.abs(q_hat - q_pi).max())
    assert err <= 1e-6, f"sup-norm gap {err:.3e}"
    _report(2, f"fixed-point solve matches policy evaluation (gap {err:.1e})", started, 10.0)


# ---------------------------------------------------------------------------
# 3. Prior-anchored solve: residual contract and monotone pull
# ---------------------------------------------------------------------------

def test_criterion_3_bayesian_prior_solve():
    started = time.perf_counter()
    rng = np.random.default_rng(3)
    lambdas = (1e-2, 1.0, 1e2, 1e4, 1e6)
    for trial in range(100):
        k = int(rng.integers(3, 12))
        rows = rng.standard_normal((4 * k, k)) * rng.uniform(0.5, 3.0)
        a = rows.T @ rows / (4 * k)
        b = rng.standard_normal(k) * 5.0
        prior = rng.standard_normal(k)
        system = srl.LSSystem(a_tilde=a, b_tilde=b, n_samples=4 * k, kind="fqi")
        dists = []
        for lam in lambdas:
            w = srl.solve_srl(system, srl.Regularizer.bayesian(lam, prior))
            resid = np.linalg.norm((a + lam * np.eye(k)) @ w - (b + lam * prior))
            assert resid <= 1e-8 * (1.0 + np.linalg.norm(b))
            dists.append(float(np.linalg.norm(w - prior)))
        assert all(x >= y - 1e-12 for x, y in zip(dists, dists[1:])), "pull not monotone"
        assert dists[-1] < 1e-3 * max(1.0, float(np.linalg.norm(prior)))
    _report(3, "prior-anchored solve meets residual bound with monotone pull", started, 5.0)


# ---------------------------------------------------------------------------
# 4. Gradient correctness
# ---------------------------------------------------------------------------

def test_criterion_4_gradient_checks():
    started = time.perf_counter()
    rng = np.random.default_rng(4)
    step = 1e-5
    for trial in range(10):
        sizes = [int(rng.integers(2, 6)), int(rng.integers(4, 10)),
                 int(rng.integers(4, 10)), int(rng.integers(2, 5))]
        network = qnet.init_network(sizes, rng)
        state = rng.standard_normal(sizes[0])
        out_grad = rng.standard_normal(sizes[-1])
        analytic = qnet.backward(network, state, out_grad)
        arrays = qnet.params(network)
        analytic_arrays = qnet.grads_list(analytic)
        for _ in range(10):
            which = int(rng.integers(len(arrays)))
            target = arrays[which]
            idx = tuple(int(rng.integers(s)) for s in target.shape)
            orig = target[idx]
            target[idx] = orig + step
            up = float(out_grad @ qnet.forward(network, state)[0])
            target[idx] = orig - step
            down = float(out_grad @ qnet.forward(network, state)[0])
            target[idx] = orig
            fd = (up - down) / (2 * step)
            an = analytic_arrays[which][idx]
            denom = max(abs(fd), 1e-6)
            assert abs(an - fd) / denom < 1e-4, f"grad mismatch {an} vs {fd}"
    _report(4, "backprop matches central finite differences", started, 10.0)


# ---------------------------------------------------------------------------
# 5. DDQN -> DQN reduction and terminal masking
# ---------------------------------------------------------------------------

def test_criterion_5_ddqn_reduction_and_terminal_masking():
    started = time.perf_counter()
    rng = np.random.default_rng(5)
    network = qnet.init_network([4, 16, 3], rng)
    for _ in range(1000):
        batch = [
            Transition(
                state=rng.standard_normal(4),
                action=int(rng.integers(3)),
                reward=float(rng.standard_normal()),
                next_state=rng.standard_normal(4),
                terminal=bool(rng.random() < 0.3),
            )
            for _ in range(16)
        ]
        y_dqn = dqn.compute_targets_dqn(batch, network, 0.95)
        y_ddqn = dqn.compute_targets_ddqn(batch, network, network, 0.95)
        assert np.array_equal(y_dqn, y_ddqn)
        for t, a, b in zip(batch, y_dqn, y_ddqn):
            if t.terminal:
                assert a == t.reward and b == t.reward
    _report(5, "double targets reduce to plain targets when nets coincide", started, 5.0)


# ---------------------------------------------------------------------------
# 6. Closed-form dominance and prior-distance ordering on a trained snapshot
# ---------------------------------------------------------------------------

def test_criterion_6_ls_minimizer_dominance():
    started = time.perf_counter()
    values = cfgmod.default_config()
    values["run.total_steps"] = 90_000
    values["run.n_drl"] = 90_000
    values["run.eval_period"] = 30_000
    values["run.eval_episodes"] = 5
    values["run.srl"] = "none"
    values["run.seed"] = 6
    cfg = cli.make_run_config(values)
    _, checkpoints = runmod.collect_checkpoints(cfg, snapshot_size=80_000)
    assert len(checkpoints[0].transitions) == 80_000
    acfg = runmod.AblationConfig(dataset_size=80_000, iterations=20,
                                 minibatch_sizes=(32, 512, 4096), lam=1.0,
                                 eval_episodes=5)
    rows = runmod.ablation_run(acfg, checkpoints, cfg.env_factory,
                               gamma=cfg.dqn.gamma, seed=6)
    fqi_mse = next(r.reg_mse for r in rows if r.method == "fqi_ls")
    adam_rows = [r for r in rows if r.method != "fqi_ls"]
    assert len(adam_rows) == 6
    for row in adam_rows:
        assert fqi_mse <= row.reg_mse + 1e-10, (
            f"closed form beaten by {row.method} mb={row.minibatch}: "
            f"{fqi_mse} vs {row.reg_mse}"
        )
    for mb in (32, 512, 4096):
        with_prior = next(r for r in adam_rows if r.method == "adam_prior" and r.minibatch == mb)
        without = next(r for r in adam_rows if r.method == "adam_noprior" and r.minibatch == mb)
        assert with_prior.rel_weight_distance < without.rel_weight_distance, (
            f"prior ordering violated at mb={mb}"
        )
    _report(6, "closed-form solve dominates every Adam variant; prior stays closer",
            started, 300.0)


# ---------------------------------------------------------------------------
# 7. End-to-end improvement at desk scale (10 seeds, paired)
# ---------------------------------------------------------------------------

def _c7_config(seed: int, srl_variant: str) -> runmod.RunConfig:
    values = cfgmod.default_config()  # desk defaults: 200k steps, refit every 20k
    values["run.seed"] = seed
    values["run.srl"] = srl_variant
    return cli.make_run_config(values)


def _c7_run(job):
    seed, srl_variant = job
    result = runmod.run(_c7_config(seed, srl_variant))
    return seed, srl_variant, result.curve.steps, result.curve.mean_returns


def test_criterion_7_desk_scale_improvement():
    started = time.perf_counter()
    seeds = list(range(1, 11))
    jobs = [(s, v) for s in seeds for v in ("none", "fqi")]
    outcomes = {}
    with ProcessPoolExecutor(max_workers=2) as pool:
        for seed, variant, steps, means in pool.map(_c7_run, jobs):
            outcomes[(seed, variant)] = (steps, means)
    vanilla_finals = [outcomes[(s, "none")][1][-1] for s in seeds]
    hybrid_finals = [outcomes[(s, "fqi")][1][-1] for s in seeds]
    mean_vanilla = float(np.mean(vanilla_finals))
    mean_hybrid = float(np.mean(hybrid_finals))
    # Paired per-epoch average scores (averaged over seeds at each epoch).
    epochs = len(outcomes[(seeds[0], "none")][1])
    x = [float(np.mean([outcomes[(s, "fqi")][1][e] for s in seeds])) for e in range(epochs)]
    y = [float(np.mean([outcomes[(s, "none")][1][e] for s in seeds])) for e in range(epochs)]
    try:
        res = stats.wilcoxon_signed_rank(x, y)
        p_text = f"wilcoxon p={res.p_value:.3g} (n_eff={res.n_effective}, {res.method})"
    except Exception as exc:  # all-tie curves leave nothing to rank
        p_text = f"wilcoxon: {type(exc).__name__}"
    print(f"ACCEPTANCE 7 detail: mean final hybrid={mean_hybrid:.4f} "
          f"vanilla={mean_vanilla:.4f}; {p_text}")
    assert mean_hybrid >= mean_vanilla - 1e-12, (
        f"hybrid mean final {mean_hybrid} < vanilla {mean_vanilla}"
    )
    _report(7, "hybrid final return >= vanilla over 10 paired seeds, p reported",
            started, 1800.0)


# ---------------------------------------------------------------------------
# 8. Degeneracy and determinism
# ---------------------------------------------------------------------------

def test_criterion_8_degeneracy_and_determinism(tmp_path):
    started = time.perf_counter()
    values = cfgmod.default_config()
    values["run.total_steps"] = 20_000
    values["run.n_drl"] = 5_000
    values["run.eval_period"] = 5_000
    values["run.eval_episodes"] = 5
    values["run.srl"] = "none"
    values["run.seed"] = 8
    cfg = cli.make_run_config(values)
    result = runmod.run(cfg)
    trainer = runmod._build_trainer(cfg)
    trainer.advance(cfg.total_steps)
    assert [tuple(r) for r in result.curve.returns] == [r.returns for r in trainer.records]
    for a, b in zip(qnet.params(result.net), qnet.params(trainer.net)):
        assert np.array_equal(a, b)

    config_text = "\n".join(
        [
            "run.total_steps = 2000", "run.n_drl = 500", "run.eval_period = 500",
            "run.eval_episodes = 3", "run.srl = fqi", "srl.n_srl = 1500",
            "net.hidden_sizes = 8", "env.width = 3", "env.height = 3",
            "dqn.warmup_steps = 100", "dqn.target_sync_period = 200",
        ]
    )
    cfg_path = tmp_path / "det.cfg"
    cfg_path.write_text(config_text)
    outs = []
    for name in ("r1", "r2"):
        out = tmp_path / name
        assert cli.main(["train", "--config", str(cfg_path), "--out", str(out)]) == 0
        outs.append(out)
    for fname in ("curve.csv", "diagnostics.csv"):
        sections = []
        for out in outs:
            lines = (out / fname).read_text().splitlines()
            sections.append([l for l in lines if not l.startswith("#")])
        assert sections[0] == sections[1], f"{fname} data sections differ"
    assert (outs[0] / "checkpoint.qnet").read_bytes() == (outs[1] / "checkpoint.qnet").read_bytes()
    _report(8, "refit-free loop is bitwise the vanilla trainer; reruns byte-identical",
            started, 300.0)


# ---------------------------------------------------------------------------
# 9. Signed-rank test correctness
# ---------------------------------------------------------------------------

def test_criterion_9_wilcoxon_correctness():
    started = time.perf_counter()
    for n in range(5, 13):
        magnitudes = np.arange(1.0, n + 1.0)
        ranks = magnitudes  # distinct magnitudes rank as themselves
        # Null distribution by full enumeration, shared across patterns.
        sums = [0.0]
        for r in ranks:
            sums = [s for s in sums] + [s + r for s in sums]
        sums = np.asarray(sums)
        total = ranks.sum()
        for pattern in itertools.product((1.0, -1.0), repeat=n):
            x = magnitudes * np.asarray(pattern)
            res = stats.wilcoxon_signed_rank(x, np.zeros(n), method="exact")
            w_min = min(res.w_plus, res.w_minus)
            oracle_p = min(1.0, 2.0 * float(np.mean(sums <= w_min + 1e-9)))
            assert res.p_value == pytest.approx(oracle_p, abs=1e-12), (
                f"n={n} pattern {pattern}"
            )
    rng = np.random.default_rng(9)
    for _ in range(10):
        x = rng.standard_normal(20)
        y = rng.standard_normal(20)
        exact = stats.wilcoxon_signed_rank(x, y, method="exact").p_value
        normal = stats.wilcoxon_signed_rank(x, y, method="normal").p_value
        assert abs(exact - normal) < 0.02
    _report(9, "exact enumeration oracle agreement and normal-approx match", started, 30.0)
