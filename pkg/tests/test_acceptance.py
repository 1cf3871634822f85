"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import math

import numpy as np
import pytest

from commpac.bounds import PacParams, compute_eps_eff, compute_f, compute_tce_bound
from commpac.channels import CommGraph
from commpac.config import ExperimentConfig
from commpac.experiment import (
    aggregate,
    final_episode_rewards,
    metrics_csv_text,
    pac_report_for,
    run_replications,
    weight_surface,
)
from commpac.mdp import exact_value_iteration, greedy_policy, random_deterministic_mdp
from commpac.protocol import Channels, make_scheme, make_system, run_steps
from commpac.sampling import REPLACE, BellmanConfig, Sample, SampleTable, is_ladder_size
from commpac.weighting import (
    WeightVector,
    brute_force_weight_oracle,
    fused_variance,
    identical_case_weights,
    optimal_additive_weights,
    quantization_objective,
    quantization_weights,
    uniform_vs_learner_only,
)

from .conftest import ACCEPTANCE_LINES

pytestmark = pytest.mark.slow


def report(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


GRID = ExperimentConfig(
    side=5, wrap=True, agents=4, graph="full", sigma_l2=0.1, sigma_a2=0.1, sigma_r=0.0,
    k=9, k_m=3, eps_a=1e-7, eps_b=0.1, gamma=0.98, max_sweeps=30,
    episodes=10, steps_per_episode=50, replications=150, base_seed=0,
)

_runs = {}


def grid_run(sigma_a2, scheme, with_tce=False):
    key = (sigma_a2, scheme)
    if key not in _runs:
        cfg = GRID.replace(sigma_a2=sigma_a2, scheme=scheme)
        _runs[key] = run_replications(cfg, with_tce=with_tce)
    return _runs[key]


def _stats(results):
    x = final_episode_rewards(results)
    return x.mean(), x.std()


def _pooled(*stds):
    return math.sqrt(sum(s * s for s in stds) / len(stds))


def test_criterion_01_weak_noise_ordering():
    lo_m, lo_s = _stats(grid_run(0.1, "learner_only"))
    un_m, un_s = _stats(grid_run(0.1, "uniform"))
    op_m, op_s = _stats(grid_run(0.1, "optimal", with_tce=True))
    margin = 0.5 * _pooled(op_s, un_s)
    ok = un_m > lo_m and op_m >= un_m - margin
    report(1, ok, f"learner_only={lo_m:.3f} uniform={un_m:.3f} optimal={op_m:.3f} (margin {margin:.3f})")

    # monitored, not asserted
    results = grid_run(0.1, "optimal")
    bound = pac_report_for(GRID.replace(scheme="optimal")).tce_bound
    tces = [r.tce for r in results]
    above = sum(t > bound for t in tces)
    line = f"monitor    : empirical TCE <= bound in {len(tces) - above}/{len(tces)} replications " \
           f"(max {max(tces):.4g}, bound {bound:.4g})"
    ACCEPTANCE_LINES.append(line)
    print(line)


def test_criterion_02_strong_noise_ordering():
    lo_m, lo_s = _stats(grid_run(1.0, "learner_only"))
    un_m, un_s = _stats(grid_run(1.0, "uniform"))
    op_m, op_s = _stats(grid_run(1.0, "optimal"))
    margin = 0.5 * _pooled(op_s, un_s, lo_s)
    ok = lo_m > un_m and op_m >= lo_m - margin and op_m >= un_m - margin
    report(2, ok, f"learner_only={lo_m:.3f} uniform={un_m:.3f} optimal={op_m:.3f} (margin {margin:.3f})")


def test_criterion_03_crossover_identity():
    # The function takes standard deviations; the comparison is on their squares.
    rng = np.random.default_rng(3)
    mismatches = 0
    for _ in range(200):
        sl = math.sqrt(rng.uniform(0.01, 5))
        sa = math.sqrt(rng.uniform(0, 20))
        d = int(rng.integers(1, 12))
        direct = sl**2 / (d + 1) + d * sa**2 / (d + 1) ** 2 <= sl**2
        mismatches += uniform_vs_learner_only(sl, sa, d) != direct
    # exact boundary sigma_A^2 = (d+1) sigma_L^2 where d+1 is a perfect square
    for d, sa in [(3, 2.0), (8, 3.0), (15, 4.0)]:
        direct = 1.0 / (d + 1) + d * sa**2 / (d + 1) ** 2 <= 1.0
        mismatches += not (direct and uniform_vs_learner_only(1.0, sa, d))
    report(3, mismatches == 0, f"{mismatches} mismatches over 203 draws")


_sigma_c_checks = []


def _compare(closed: WeightVector, oracle: WeightVector, objective):
    dw = float(np.max(np.abs(closed.as_array() - oracle.as_array())))
    dobj = abs(objective(closed) - objective(oracle))
    return dw, dobj


def test_criterion_04_weight_oracle():
    rng = np.random.default_rng(4)
    worst = {"general": [0.0, 0.0], "identical": [0.0, 0.0], "quantization": [0.0, 0.0]}
    for i in range(102):
        d = 1 + i % 3
        sl = rng.uniform(0.1, 3.0)
        # heterogeneous agents
        sa = rng.uniform(0.0, 3.0, d)
        sln = rng.uniform(0.1, 3.0, d)
        closed = optimal_additive_weights(sl, sa, sln)
        oracle = brute_force_weight_oracle("additive", dict(sigma_l=sl, sigma_a=sa, sigma_l_neighbors=sln), 1e-6)
        dw, dobj = _compare(closed, oracle, lambda w: fused_variance(w, sl, sa, sln))
        worst["general"] = [max(worst["general"][0], dw), max(worst["general"][1], dobj)]
        _sigma_c_checks.append((closed, sl, sa, sln))
        # identical agents
        s = rng.uniform(0.0, 3.0)
        closed = identical_case_weights(sl, s, d)
        oracle = brute_force_weight_oracle("additive", dict(sigma_l=sl, sigma_a=[s] * d), 1e-6)
        dw, dobj = _compare(closed, oracle, lambda w: fused_variance(w, sl, [s] * d))
        worst["identical"] = [max(worst["identical"][0], dw), max(worst["identical"][1], dobj)]
        _sigma_c_checks.append((optimal_additive_weights(sl, [s] * d), sl, [s] * d, None))
        # quantization, both sides of f*sigma = dQ
        f, dq = rng.uniform(0.5, 8.0), rng.uniform(0.0, 3.0)
        closed = quantization_weights(sl, dq, d, f)
        oracle = brute_force_weight_oracle("quantization", dict(sigma_l=sl, delta_q=dq, d=d, f=f), 1e-6)
        dw, dobj = _compare(closed, oracle, lambda w: float(quantization_objective(w.self_weight, sl, dq, d, f)))
        worst["quantization"] = [max(worst["quantization"][0], dw), max(worst["quantization"][1], dobj)]
    ok = all(w <= 1e-3 and o <= 1e-6 for w, o in worst.values())
    detail = " ".join(f"{k}: dw={w:.2e} dobj={o:.2e}" for k, (w, o) in worst.items())
    report(4, ok, f"102 draws each, {detail}")


def test_criterion_05_sigma_c_identity():
    if not _sigma_c_checks:
        test_criterion_04_weight_oracle()
    worst = 0.0
    for w, sl, sa, sln in _sigma_c_checks:
        sigma_c = math.sqrt(fused_variance(w, sl, sa, sln))
        worst = max(worst, abs(sigma_c - sl * math.sqrt(w.self_weight)))
    report(5, worst <= 1e-9, f"max |sigma_c - sigma_L sqrt(w_ii)| = {worst:.2e} over {len(_sigma_c_checks)} solutions")


def test_criterion_06_contraction():
    rng = np.random.default_rng(6)
    violations, worst = 0, -np.inf
    for _ in range(1000):
        S, A = int(rng.integers(1, 6)), int(rng.integers(1, 4))
        k_m = int(rng.integers(1, 5))
        gamma = float(rng.uniform(0.0, 0.99))
        q_max = 1.0 / (1.0 - gamma)
        table = SampleTable(S, A, k_m * 2 ** int(rng.integers(0, 4)), k_m, REPLACE)
        for _ in range(int(rng.integers(0, 80))):
            s, a = int(rng.integers(S)), int(rng.integers(A))
            table.ingest(Sample(s, a, float(rng.normal(0.5, 1.0)), int(rng.integers(S))))
        cfg = BellmanConfig(gamma, q_max, eps_b=float(rng.uniform(0, 1)))
        q1, q2 = rng.uniform(0, q_max, (2, S, A))
        lhs = np.max(np.abs(table.sweep(q1, cfg) - table.sweep(q2, cfg)))
        excess = lhs - gamma * np.max(np.abs(q1 - q2))
        worst = max(worst, excess)
        violations += excess > 1e-12
    report(6, violations == 0, f"{violations} violations in 1000 triples (max excess {worst:.2e})")


class _Restarting:
    """A random MDP whose agent is re-placed uniformly after every step."""

    def __init__(self, mdp):
        self.mdp = mdp
        self.num_states, self.num_actions = mdp.num_states, mdp.num_actions

    def step(self, s, a, rng):
        return self.mdp.step(s, a, rng)

    def is_restart(self, s):
        return True


def test_criterion_07_noiseless_end_to_end():
    gamma, eps_a = 0.9, 1e-7
    failures, worst = 0, 0.0
    for size in (2, 5):
        for seed in range(20):
            mdp = random_deterministic_mdp(size, 3, gamma, np.random.default_rng(seed))
            graph = CommGraph.full(1)
            ch = Channels.identical(graph)
            cfg = BellmanConfig(gamma, mdp.q_max, eps_b=0.0, eps_a=eps_a, max_sweeps=100_000)
            sys = make_system(
                _Restarting(mdp), graph, ch, make_scheme("learner_only", graph, ch), cfg, 9, 3, seed=seed
            )
            sys, _ = run_steps(sys, 60 * size * 3, record=False)
            filled = bool(np.all(sys.learner.sample_sets.counts >= 3))
            q_star = exact_value_iteration(mdp, 1e-13)
            err = float(np.max(np.abs(sys.learner.q - q_star)))
            worst = max(worst, err)
            same = np.array_equal(greedy_policy(sys.learner.q), greedy_policy(q_star))
            failures += not (filled and same and err <= eps_a / (1 - gamma))
            # the agent's own committed policy is the learner's greedy policy
            failures += not np.array_equal(sys.agents[0].policy, greedy_policy(sys.learner.q))
    report(7, failures == 0, f"{failures} failures over 40 MDPs (max |Q - Q*| {worst:.2e}, tol {eps_a / (1 - gamma):.1e})")


def test_criterion_08_ladder_fuzz():
    rng = np.random.default_rng(8)
    bad = 0
    events = 0
    while events < 100_000:
        k_m = int(rng.integers(1, 5))
        k = k_m * 2 ** int(rng.integers(0, 5))
        S, A = 3, 2
        table = SampleTable(S, A, k, k_m, REPLACE)
        allowed = {0} | {k_m * 2**p for p in range(6) if k_m * 2**p <= k}
        for _ in range(5_000):
            s, a = int(rng.integers(S)), int(rng.integers(A))
            u = table[(s, a)]
            before, pending = len(u.active), len(u.pending)
            changed = table.ingest(Sample(s, a, 0.0, 0))
            after = len(u.active)
            if after not in allowed:
                bad += 1
            if changed and not (pending + 1 > before and is_ladder_size(pending + 1, k_m) and before < k):
                bad += 1
            if not changed and after != before:
                bad += 1
            events += 1
    report(8, bad == 0, f"{bad} ladder violations in {events} ingest events")


def test_criterion_09_special_cases():
    w33 = weight_surface([0.0], [0.0], [1])[0][3]
    ok = abs(w33 - 1 / 3) <= 1e-12
    spread = 0.0
    for r1, r2 in [(0.1, 1.0), (0.5, 2.0), (1.0, 1.0), (3.0, 0.2), (10.0, 0.5)]:
        ratios = [row[6] for row in weight_surface([r1], [r2], range(1, 6))]
        spread = max(spread, float(np.ptp(ratios)))
    ok = ok and spread <= 1e-12
    report(9, ok, f"w33 - 1/3 = {w33 - 1 / 3:.1e}, max spread of w13/w23 over N_A=1..5 {spread:.1e}")


F_PIN = 6.60016001792293907
TCE_PIN = 3053581.94556186432
EPS_EFF_PIN = 254.605922663148746


def test_criterion_10_bound_regression():
    base = dict(n_agents=4, num_actions=1, gamma=0.9, delta=0.1, k=9, k_m=3, q_max=10.0, eps_s=1.0)
    pins_ok = (
        math.isclose(compute_f(PacParams(num_states=100, **base)), F_PIN, rel_tol=1e-12)
        and math.isclose(compute_tce_bound(PacParams(num_states=25, sigma=1, sigma_r=1, **base)), TCE_PIN, rel_tol=1e-12)
        and math.isclose(
            compute_eps_eff(PacParams(num_states=25, sigma_c=[0.5] * 4, delta_q_c=[0.1] * 4, **base), F_PIN)[0],
            EPS_EFF_PIN, rel_tol=1e-12,
        )
    )
    rng = np.random.default_rng(10)
    bad = 0
    for _ in range(100):
        n, s, a = int(rng.integers(1, 9)), int(rng.integers(1, 60)), int(rng.integers(1, 6))
        gamma = float(rng.uniform(0.5, 0.99))
        ratio, k_m = int(2 ** rng.integers(0, 3)), int(rng.integers(1, 10))
        sig, sig_r = float(rng.uniform(0, 3)), float(rng.uniform(0, 3))

        def p(**kw):
            args = dict(n_agents=n, num_states=s, num_actions=a, gamma=gamma, delta=float(rng.uniform(0.01, 0.5)),
                        k=k_m * ratio, k_m=k_m, q_max=1 / (1 - gamma), eps_s=0.5, sigma=sig, sigma_r=sig_r)
            args.update(kw)
            return PacParams(**args)

        ref = p(delta=0.1)
        tce = compute_tce_bound(ref)
        bad += not compute_tce_bound(p(delta=0.1, n_agents=n + 1)) > tce
        bad += not compute_tce_bound(p(delta=0.1, sigma_r=sig_r + 0.25)) > tce
        bad += not compute_tce_bound(p(delta=0.1, k_m=k_m + 1, k=(k_m + 1) * ratio)) > tce
        bad += not compute_f(p(delta=0.1, n_agents=n + 1)) > compute_f(ref)
        # eps_eff is affine in the noise terms
        f = compute_f(ref)
        x = float(rng.uniform(0, 2))
        e = [compute_eps_eff(p(delta=0.1, n_agents=1, sigma_c=[t * x], delta_q_c=[t * x / 3]), f)[0] for t in (0, 1, 2)]
        bad += not math.isclose(e[2] - e[1], e[1] - e[0], rel_tol=1e-9, abs_tol=1e-9)
    report(10, pins_ok and bad == 0, f"pins {'match' if pins_ok else 'DIFFER'}, {bad} monotonicity/affinity failures in 100 draws")


def test_criterion_11_determinism(tmp_path):
    first = tmp_path / "a.csv"
    second = tmp_path / "b.csv"
    first.write_text(metrics_csv_text(aggregate(grid_run(0.1, "optimal", with_tce=True))))
    rerun = run_replications(GRID.replace(scheme="optimal"))
    second.write_text(metrics_csv_text(aggregate(rerun)))
    same = first.read_bytes() == second.read_bytes()
    report(11, same, f"CSV bytes identical: {same} ({len(first.read_bytes())} bytes)")
