"""Tour of the simulation core: exact arc kinematics, occupancy grids,
collision checks, and the 720-beam lidar.

Run:  python demos/01_world_and_lidar.py
"""

import math

import numpy as np

from paramnav.world import (
    OccupancyGrid,
    Pose2D,
    RobotSpec,
    Twist,
    check_collision,
    raycast_scan,
    step_kinematics,
)

# --- kinematics: constant twists integrate along exact arcs ---------------

pose = Pose2D(0.0, 0.0, 0.0)
quarter_turn = Twist(linear=1.0, angular=math.pi / 2)
after = step_kinematics(pose, quarter_turn, dt=1.0)
print(f"quarter arc: x={after.x:.6f} y={after.y:.6f} heading={after.heading:.6f}")
print(f"  (both coordinates equal 2/pi = {2 / math.pi:.6f})")

# composition: two half steps equal one full step, to machine precision
half = step_kinematics(step_kinematics(pose, quarter_turn, 0.5),
                       quarter_turn, 0.5)
print(f"composition error: {math.hypot(after.x - half.x, after.y - half.y):.2e}")

# --- a small world with a wall, seen by the lidar ---------------------------

cells = np.zeros((120, 120), dtype=bool)
cells[0, :] = cells[-1, :] = cells[:, 0] = cells[:, -1] = True
grid = OccupancyGrid(cells=cells, resolution=0.05)
row, col = grid.world_to_cell(4.0, 3.0)
grid.cells[:, col] = True  # wall 1 m ahead of the robot below

robot = Pose2D(3.0, 3.0, 0.0)
scan = raycast_scan(grid, robot)
print(f"\nscan: {len(scan.ranges)} beams, min {scan.min_range():.3f} m, "
      f"max {scan.ranges.max():.3f} m (capped at {scan.max_range} m)")
fwd = scan.ranges[len(scan.ranges) // 2]
print(f"forward beam: {fwd:.3f} m (the wall cells begin 1.0 m ahead)")

# --- footprint collision checking ------------------------------------------
# collision is measured from the pose to occupied cell centers

spec = RobotSpec()
wall_cx, wall_cy = grid.cell_center(row, col)
touching = Pose2D(wall_cx - spec.footprint_radius + 0.01, wall_cy, 0.0)
clear = Pose2D(wall_cx - spec.footprint_radius - 0.06, wall_cy, 0.0)
print(f"\npose 1 cm inside the footprint distance collides: "
      f"{check_collision(grid, touching, spec)}")
print(f"pose 6 cm outside it collides: {check_collision(grid, clear, spec)}")
