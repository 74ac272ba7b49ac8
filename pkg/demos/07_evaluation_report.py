"""The benchmark harness: jittered trials, Welch t-tests per environment,
difficulty terciles, and the comparison report.

This demo compares two fixed parameter sets (a slow one and a fast one) so
it runs in seconds without training; `evaluate_suite` accepts any policy,
including a trained checkpoint's actor.

Run:  python demos/07_evaluation_report.py
"""

import numpy as np

from paramnav.envgen import CaConfig, build_suite
from paramnav.evalbench import build_report, run_trials, stratify, welch_t_test
from paramnav.metaenv import RewardConfig, constant_policy
from paramnav.planner import ParamBounds, PlannerParams

# Welch's test on a textbook pair
t, p = welch_t_test([1, 2, 3, 4, 5], [2, 3, 4, 5, 6])
print(f"welch_t_test([1..5], [2..6]): t={t:.6f} p={p:.6f}")

suite = build_suite(11, n=6, config=CaConfig(fill_probability=0.25))
reward = RewardConfig(timeout_steps=30)

fast = constant_policy(PlannerParams(max_vel_x=1.8))
slow = constant_policy(ParamBounds().midpoint_params())

fast_r, slow_r = {}, {}
for env in suite.envs:
    fast_r[env.index] = run_trials(env, fast, n=8, seed=2, jitter=0.05,
                                   method="learned-policy", reward=reward)
    slow_r[env.index] = run_trials(env, slow, n=8, seed=2, jitter=0.05,
                                   method="fixed-params", reward=reward)
    print(f"env {env.index}: fast {np.mean(fast_r[env.index].times):6.2f}s   "
          f"default {np.mean(slow_r[env.index].times):6.2f}s")

split = {i: ("train" if i in set(suite.train_indices) else "test")
         for i in range(len(suite.envs))}
report = build_report(fast_r, slow_r, split, alpha=0.05)

agg = report.aggregate["all"]
print(f"\naggregate: {agg['mean_learned']:.2f}s vs {agg['mean_fixed']:.2f}s "
      f"-> improvement {agg['improvement']:.2f}s ({agg['improvement_pct']:.1f}%)")
sig = report.significance["all"]
print(f"significantly better: fast on {sig['learned_better']}/{sig['n']} envs, "
      f"default on {sig['fixed_better']}/{sig['n']} (alpha=0.05)")

labels = stratify({i: slow_r[i].mean_time() for i in slow_r})
print(f"difficulty terciles (by default-params time): {labels}")
