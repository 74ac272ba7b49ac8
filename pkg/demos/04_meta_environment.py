"""The parameter-space MDP: states, the three-term reward, and full
deployments under fixed or varying parameter policies.

Run:  python demos/04_meta_environment.py
"""

import numpy as np

from paramnav.envgen import CaConfig, build_env
from paramnav.metaenv import (
    MetaEnv,
    RewardConfig,
    compute_reward,
    constant_policy,
    denormalize_action,
    run_deployment,
)
from paramnav.planner import ParamBounds

# actions in [-1, 1]^8 map onto the parameter box
mid = denormalize_action(np.zeros(8))
top = denormalize_action(np.ones(8))
print(f"action 0      -> max_vel_x {mid.max_vel_x}, inflation {mid.inflation_radius}")
print(f"action +1     -> max_vel_x {top.max_vel_x}, inflation {top.inflation_radius}")

# reward anatomy: step penalty + progress + obstacle proximity
cfg = RewardConfig(c_f=1.0, c_p=1.0, c_c=1.0)
r = compute_reward((2, 2), (2, 2), (5, 5), min_beam=1.0, terminal=False, cfg=cfg)
print(f"\nstationary, non-terminal, min beam 1 m: reward {r}  (-1 step - 1 proximity)")
r = compute_reward((2, 2), (2, 2.4), (2, 9), min_beam=2.0, terminal=False, cfg=cfg)
print(f"0.4 m of y-progress, min beam 2 m:      reward {r}")

# a full episode: one decision every 2 simulated seconds
spec = build_env(42, CaConfig(fill_probability=0.25))
env = MetaEnv(spec)
state = env.reset()
print(f"\nstate vector: {state.shape[0]} dims "
      f"(720 scan + 1 bearing + 8 previous params)")

result = run_deployment(env, constant_policy(ParamBounds().midpoint_params()))
print(f"default params: reached={result.reached} in {result.traversal_time:.2f} s "
      f"({result.decisions} decisions, return {result.total_reward:.2f})")


def speedy(state):
    action = np.zeros(8)
    action[0] = 1.0  # max_vel_x at its upper bound
    return action


result2 = run_deployment(MetaEnv(spec), speedy)
print(f"full-speed params: reached={result2.reached} in "
      f"{result2.traversal_time:.2f} s ({result2.decisions} decisions)")
