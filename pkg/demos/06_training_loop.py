"""A small end-to-end training run: actor workers feeding the replay
buffer, the learner pacing updates to collected experience, metrics with
moving averages, and a final checkpoint.

Sized to finish in a few minutes on a laptop.  For the full substitute
experiment (150k decision steps) see tests/test_acceptance.py.

Run:  python demos/06_training_loop.py
"""

import numpy as np

from paramnav.envgen import CaConfig, build_env
from paramnav.metaenv import MetaEnv, RewardConfig
from paramnav.td3 import Td3Config
from paramnav.trainer import TrainConfig, TrainRun

envs = [build_env(100 + i, CaConfig(fill_probability=0.25), index=i)
        for i in range(6)]

td3 = Td3Config(warmup_steps=500, buffer_capacity=10_000,
                expl_sigma_start=0.5,
                expl_sigma_decay_per_step=1e-4,  # anneal fast at demo scale
                expl_sigma_floor=0.05)
train = TrainConfig(total_env_steps=3000, workers=4, mode="sync",
                    master_seed=3, update_ratio=0.25)

print("training 3000 decision steps on 6 easy envs (a few minutes)...")
run = TrainRun(envs, train, td3, reward=RewardConfig(), run_dir="runs/demo06")
result = run.run()

rows = result.metrics_rows
k = max(1, len(rows) // 10)
first = np.mean([r[2] for r in rows[:k]])
last = np.mean([r[2] for r in rows[-k:]])
print(f"\n{result.env_steps} env steps, {result.updates} updates, "
      f"{result.episodes} episodes in {result.wall_time_s / 60:.1f} min")
print(f"100-episode moving return: {first:.2f} (early) -> {last:.2f} (late)")
print(f"final checkpoint: {result.final_checkpoint_path}")

# what did the policy learn? probe its action on a fresh initial state
state = MetaEnv(envs[0]).reset()
action = run.agent.actor.forward(state[None, :])[0]
print(f"\npolicy action on env 0 start state: {np.round(action, 2)}")
print("dimension 0 is max_vel_x: +1 means the policy drives the speed "
      "limit up to its bound in open space")
