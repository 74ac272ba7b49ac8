"""paramnav: a desk-scale stack for learning planner-parameter policies.

Subpackages by capability:

* ``world``     kinematics, occupancy grids, collision, lidar raycasting
* ``envgen``    cellular-automata environment suites with train/test splits
* ``planner``   Dijkstra global planning + parameterized DWA local planning
* ``metaenv``   the parameter-space MDP wrapping world + planner
* ``td3``       from-scratch TD3 (numpy MLPs, replay buffer, Adam)
* ``trainer``   actor/learner training orchestration
* ``evalbench`` trial harness, Welch t-tests, difficulty stratification
* ``config``    flat key=value configuration covering every tunable
* ``cli``       gen-envs / train / evaluate / plan-once / replay
"""

from .world import (
    LaserScan,
    OccupancyGrid,
    Pose2D,
    RobotSpec,
    Twist,
    check_collision,
    raycast_scan,
    step_kinematics,
    wrap_angle,
)

__all__ = [
    "LaserScan",
    "OccupancyGrid",
    "Pose2D",
    "RobotSpec",
    "Twist",
    "check_collision",
    "raycast_scan",
    "step_kinematics",
    "wrap_angle",
]

__version__ = "0.1.0"
