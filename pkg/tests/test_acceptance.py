"""End-to-end acceptance checks, one test per criterion.

Run just these with ``pytest -m acceptance``; a PASS/FAIL line per criterion is
printed in the terminal summary.
"""

import itertools
import time

import numpy as np
import pytest

from moa.advantage import moa_advantage
from moa.cli import cmd_run, final_reward, train_all
from moa.config import parse_config
from moa.conflict import brute_force_largest_subset, is_chain, largest_subset, ordered_pairs
from moa.simulator import (
    BanditEnv,
    PolicyParams,
    exact_dimension_gradient,
    orthogonal_env,
    policy_probs,
    reward_auc,
    run_training,
    surrogate_gradient,
    surrogate_objective,
    verify_theorem,
)
from moa.trend import first_order_weights, softmax_weights
from moa.types import HistoryBuffer, MoaConfig, WeightVector, push_history

pytestmark = pytest.mark.acceptance

GRID = (0.0, 0.5, 1.0)


def _central_diff(f, x, h=1e-5):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def _rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12))


def _chain_mismatch(R, w, d):
    M = largest_subset(R, w, d)
    pairs = ordered_pairs(R, w, d)
    return len(M) != len(brute_force_largest_subset(R, w, d)) or not is_chain([pairs[g] for g in M])


def test_chain_filter_matches_brute_force(record_property):
    record_property("criterion", "1 chain filter vs brute force")
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    mismatches = cases = 0
    for _ in range(100_000):
        G, D = int(rng.integers(1, 7)), int(rng.integers(1, 4))
        R = rng.choice(GRID, size=(G, D))
        w = rng.dirichlet(np.ones(D))
        d = int(rng.integers(D))
        # the sampled d* is forced to be the pivot by bumping its weight
        w[d] += 1.0
        w /= w.sum()
        mismatches += _chain_mismatch(R, WeightVector(w, d), d)
        cases += 1
    for D in (1, 2, 3):
        w = WeightVector.uniform(D)
        for G in (1, 2, 3, 4):
            for flat in itertools.product(GRID, repeat=G * D):
                mismatches += _chain_mismatch(np.reshape(flat, (G, D)), w, 0)
                cases += 1
    elapsed = time.perf_counter() - t0
    record_property("detail", f"{cases} cases, {mismatches} mismatches, {elapsed:.0f}s")
    assert mismatches == 0
    assert elapsed <= 120


def test_improvement_gap_matches_first_order_prediction(record_property):
    record_property("criterion", "2 improvement gap")
    t0 = time.perf_counter()
    env = orthogonal_env()
    uniform = PolicyParams.uniform(env.num_actions)
    s = np.array([np.sum(exact_dimension_gradient(uniform, env, d) ** 2) for d in range(env.n_dims)])
    assert env.n_dims == 4 and len(np.unique(s)) == 4
    sigma = 0.05 * float(np.mean(np.sqrt(s)))
    reports = [verify_theorem(env, 1.0, sigma, beta, 1.0, 10_000, 0) for beta in (0.01, 0.05)]
    elapsed = time.perf_counter() - t0
    record_property("detail", "; ".join(
        f"beta={r.beta}: measured {r.measured_gap:.4e} predicted {r.predicted_gap:.4e}" for r in reports
    ) + f"; {elapsed:.1f}s")
    for r in reports:
        assert r.measured_gap > 0
        assert abs(r.measured_gap - r.predicted_gap) <= 0.25 * abs(r.predicted_gap)
    assert elapsed <= 60


def test_softmax_first_order_expansion(record_property):
    record_property("criterion", "3 softmax expansion")
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(1000):
        D = int(rng.integers(2, 9))
        u = rng.uniform(-1, 1, size=D)
        beta = float(rng.uniform(0, 0.1))
        gap = np.abs(softmax_weights(u, beta).weights - first_order_weights(u, beta)).max()
        worst = max(worst, gap / (2 * beta ** 2) if beta > 0 else 0.0)
        assert gap <= 2 * beta ** 2
    record_property("detail", f"worst deviation {worst:.3f} of the bound")


def test_advantage_contracts(record_property):
    record_property("criterion", "4 advantage contracts")
    rng = np.random.default_rng(4)
    cfg = MoaConfig()
    worst_mean = 0.0
    for _ in range(10_000):
        D, G = int(rng.integers(1, 5)), int(rng.integers(2, 17))
        buf = HistoryBuffer(8)
        n_hist = int(rng.integers(0, 10))
        for k in range(n_hist):
            buf = push_history(buf, k, rng.uniform(size=D))
        R = rng.choice([0.0, 0.25, 0.5, 0.75, 1.0], size=(G, D)) if rng.random() < 0.5 else rng.uniform(size=(G, D))
        res = moa_advantage(R, buf, n_hist, cfg)
        full = (res.collapsed - res.group_mean) / (res.group_std + cfg.adv_epsilon)
        worst_mean = max(worst_mean, abs(full.mean()))
        assert abs(full.mean()) <= 1e-9
        assert np.all(res.advantages[~res.mask] == 0.0)

    env = BanditEnv([[0.3], [0.45], [0.55], [0.7]], noise_std=0.05)
    moa = run_training(env, "MoaGrpo", 100, seed=11, return_params=True)
    uni = run_training(env, "UniformGrpo", 100, seed=11, return_params=True)
    (moa_recs, moa_params), (uni_recs, uni_params) = moa, uni
    assert np.array_equal(moa_params.logits, uni_params.logits)
    strip = lambda recs: [(r.step, r.mean_rewards, r.weights, r.retained, r.scalarized) for r in recs]
    assert strip(moa_recs) == strip(uni_recs)
    record_property("detail", f"max |mean| {worst_mean:.1e}; D=1 trajectories bitwise equal")


def test_gradients_match_finite_differences(record_property):
    record_property("criterion", "5 gradient fidelity")
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        A, D, G = int(rng.integers(2, 9)), int(rng.integers(1, 5)), int(rng.integers(2, 17))
        env = BanditEnv(rng.uniform(size=(A, D)))
        theta = rng.normal(size=A)
        for d in range(D):
            g = exact_dimension_gradient(PolicyParams(theta), env, d)
            fd = _central_diff(lambda z: policy_probs(PolicyParams(z)) @ env.reward_table[:, d], theta)
            worst = max(worst, _rel(g, fd))
        pi = policy_probs(PolicyParams(theta))
        actions = rng.integers(0, A, size=G)
        # ratios kept clear of the clip kinks so the objective is smooth within h
        rho = rng.choice([rng.uniform(0.5, 0.79), rng.uniform(0.81, 1.19), rng.uniform(1.21, 1.5)], size=G)
        behavior = np.clip(pi[actions] / rho, 1e-12, 1.0)
        adv = rng.normal(size=G)
        g = surrogate_gradient(theta, actions, behavior, adv, 0.2)
        fd = _central_diff(lambda z: surrogate_objective(z, actions, behavior, adv, 0.2), theta)
        if np.linalg.norm(fd) > 1e-10:
            worst = max(worst, _rel(g, fd))
        else:
            assert np.linalg.norm(g) <= 1e-10
    record_property("detail", f"worst relative error {worst:.1e}")
    assert worst <= 1e-4


@pytest.mark.slow
def test_conflict_env_strategy_ordering(record_property):
    record_property("criterion", "6 conflict env ordering")
    t0 = time.perf_counter()
    cfg = parse_config(
        "[env]\nkind = conflict\n"
        "[train]\nstrategies = MoaGrpo, UniformGrpo, MoaMu, MoaSigma\nsteps = 500\n"
        f"seeds = {', '.join(map(str, range(20)))}\n"
    )
    runs = train_all(cfg)
    seeds = cfg.seeds
    auc = {k: np.array([reward_auc(runs[(s, k)]) for s in seeds]) for k in range(4)}
    fin = {k: np.mean([final_reward(runs[(s, k)]) for s in seeds]) for k in range(4)}
    win = float(np.mean(auc[0] > auc[1]))
    elapsed = time.perf_counter() - t0
    record_property("detail", (
        f"win rate {win:.2f}; final MoaGrpo {fin[0]:.4f} UniformGrpo {fin[1]:.4f} "
        f"MoaMu {fin[2]:.4f} MoaSigma {fin[3]:.4f}; {elapsed:.0f}s"
    ))
    assert elapsed <= 600
    assert win >= 0.9
    assert fin[0] > fin[2]
    assert fin[0] > fin[3]


def test_run_output_is_byte_identical(tmp_path, record_property):
    record_property("criterion", "7 deterministic output")
    cfg = parse_config(
        "[env]\nkind = conflict\n[train]\nstrategies = MoaGrpo, MoaRloo\nsteps = 30\nseeds = 0, 1\n"
    )
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cmd_run(cfg, str(a)) == 0
    assert cmd_run(cfg, str(b)) == 0
    assert a.read_bytes() == b.read_bytes()
    record_property("detail", f"{len(a.read_bytes())} bytes")
