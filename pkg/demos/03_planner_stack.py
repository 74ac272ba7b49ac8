"""The classical navigation stack: global Dijkstra paths, costmap
inflation, and how the 8 runtime parameters steer DWA's choices.

Run:  python demos/03_planner_stack.py
"""

from paramnav.envgen import CaConfig, build_env
from paramnav.planner import (
    PlannerContext,
    PlannerParams,
    build_local_costmap,
    dwa_plan,
    local_goal,
    plan_global,
)
from paramnav.world import Twist

env = build_env(42, CaConfig(fill_probability=0.25))

# global path on the footprint-inflated grid
path = plan_global(env.grid, env.start, env.goal)
print(f"global path: {len(path.waypoints)} waypoints, "
      f"{path.total_length:.2f} m")

phi = local_goal(path, env.start, lookahead=1.0)
print(f"local goal bearing from start: {phi:+.3f} rad")

# the same scene under different parameter choices
ctx = PlannerContext(grid=env.grid, goal=env.goal)
ctx.replan(env.start)
slow = PlannerParams(max_vel_x=0.4)
fast = PlannerParams(max_vel_x=2.0, vx_samples=12, vtheta_samples=30)
cautious = PlannerParams(max_vel_x=2.0, occdist_scale=1.0, inflation_radius=0.6)

for name, params in (("slow", slow), ("fast", fast), ("cautious", cautious)):
    cm = build_local_costmap(env.grid, env.start, params)
    dec = dwa_plan(cm, env.start, Twist(0.0, 0.0), ctx.path, params)
    print(f"{name:9s} -> v={dec.twist.linear:.2f} m/s  "
          f"w={dec.twist.angular:+.2f} rad/s  "
          f"({dec.candidate_count} candidates, cost {dec.best_cost:.3f})")

# the chosen speed tracks max_vel_x: that is exactly the lever the learned
# parameter policy pulls when the map is open
