"""Classical navigation stack: Dijkstra global planning on an inflated grid,
local-goal extraction, and a DWA local planner driven by 8 runtime-tunable
parameters.

The global planner computes a full distance field rooted at the goal once
per (grid, goal) pair; extracting the shortest path from any robot cell is
then a cheap greedy descent, which makes per-decision-period replanning
inexpensive.  Ties are always broken toward the lower flattened cell index
so plans are deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as _csgraph_dijkstra

from .world import LaserScan, OccupancyGrid, Pose2D, RobotSpec, Twist, rollout_arcs

LETHAL_COST = 1.0e6
INFLATION_DECAY_PER_M = 10.0


class NoPathError(RuntimeError):
    """Goal not reachable from start on the inflated grid."""


def traversable_mask(grid: OccupancyGrid, spec: RobotSpec) -> np.ndarray:
    """Cells whose center clearance exceeds the robot footprint (with a
    ULP-scale tolerance matching the costmap's lethal band)."""
    fr = spec.footprint_radius
    return grid.clearance_m() > fr * (1.0 + 1e-12) + 1e-12


@dataclass(frozen=True)
class PlannerParams:
    """The 8 tunable planner parameters (the action space of the MDP)."""

    max_vel_x: float = 1.1
    max_vel_theta: float = 1.727
    vx_samples: int = 8
    vtheta_samples: int = 24
    occdist_scale: float = 0.55
    pdist_scale: float = 0.8
    gdist_scale: float = 0.8
    inflation_radius: float = 0.35

    def __post_init__(self):
        if self.max_vel_x <= 0 or self.max_vel_theta <= 0:
            raise ValueError("velocity limits must be positive")
        if self.vx_samples < 1 or self.vtheta_samples < 1:
            raise ValueError("sample counts must be >= 1")
        if min(self.occdist_scale, self.pdist_scale, self.gdist_scale) < 0:
            raise ValueError("cost scales must be non-negative")
        if self.inflation_radius < 0:
            raise ValueError("inflation_radius must be non-negative")


PARAM_NAMES = tuple(f.name for f in fields(PlannerParams))
INT_PARAMS = ("vx_samples", "vtheta_samples")


@dataclass(frozen=True)
class ParamBounds:
    """Box bounds for each planner parameter; the policy acts in this box.

    Defaults are centered on common ROS settings; all are config-overridable.
    """

    max_vel_x: tuple[float, float] = (0.2, 2.0)
    max_vel_theta: tuple[float, float] = (0.314, 3.14)
    vx_samples: tuple[float, float] = (4, 12)
    vtheta_samples: tuple[float, float] = (8, 40)
    occdist_scale: tuple[float, float] = (0.1, 1.0)
    pdist_scale: tuple[float, float] = (0.1, 1.5)
    gdist_scale: tuple[float, float] = (0.1, 1.5)
    inflation_radius: tuple[float, float] = (0.1, 0.6)

    def lows(self) -> np.ndarray:
        return np.array([getattr(self, n)[0] for n in PARAM_NAMES], dtype=np.float64)

    def highs(self) -> np.ndarray:
        return np.array([getattr(self, n)[1] for n in PARAM_NAMES], dtype=np.float64)

    def midpoint_params(self) -> PlannerParams:
        mid = (self.lows() + self.highs()) / 2.0
        return params_from_array(mid)


def params_to_array(p: PlannerParams) -> np.ndarray:
    return np.array([getattr(p, n) for n in PARAM_NAMES], dtype=np.float64)


def params_from_array(a) -> PlannerParams:
    kw = {}
    for i, n in enumerate(PARAM_NAMES):
        v = float(a[i])
        if n in INT_PARAMS:
            v = int(math.floor(v + 0.5))  # round half toward +inf
        kw[n] = v
    return PlannerParams(**kw)


def normalize_params(p: PlannerParams, bounds: ParamBounds) -> np.ndarray:
    """Map params into [-1, 1]^8 over their bounds."""
    lo, hi = bounds.lows(), bounds.highs()
    return np.clip(2.0 * (params_to_array(p) - lo) / (hi - lo) - 1.0, -1.0, 1.0)


@dataclass
class GlobalPath:
    """Waypoints (N, 2) in meters from start to goal, one cell apart."""

    waypoints: np.ndarray
    total_length: float

    def __post_init__(self):
        self.waypoints = np.asarray(self.waypoints, dtype=np.float64)
        if self.waypoints.ndim != 2 or self.waypoints.shape[1] != 2:
            raise ValueError("waypoints must be (N, 2)")


@dataclass
class DwaDecision:
    twist: Twist
    feasible: bool
    candidate_count: int
    best_cost: float


# ---------------------------------------------------------------------------
# global planning
# ---------------------------------------------------------------------------

_MOVES = [(-1, 0, 1.0), (1, 0, 1.0), (0, -1, 1.0), (0, 1, 1.0),
          (-1, -1, math.sqrt(2)), (-1, 1, math.sqrt(2)),
          (1, -1, math.sqrt(2)), (1, 1, math.sqrt(2))]


def goal_distance_field(grid: OccupancyGrid, goal_cell: tuple[int, int],
                        spec: RobotSpec) -> np.ndarray:
    """Shortest 8-connected distance (meters) from every traversable cell to
    the goal cell; inf where blocked or unreachable.  Traversable means the
    cell-center clearance exceeds the robot footprint."""
    traversable = traversable_mask(grid, spec)
    h, w = traversable.shape
    if not (0 <= goal_cell[0] < h and 0 <= goal_cell[1] < w):
        raise NoPathError(f"goal cell {goal_cell} outside grid")
    if not traversable[goal_cell]:
        raise NoPathError("goal cell is blocked on the inflated grid")

    idx = np.arange(h * w).reshape(h, w)
    rows_src, cols_src, data = [], [], []
    for di, dj, cost in _MOVES:
        src_r = slice(max(0, -di), h - max(0, di))
        src_c = slice(max(0, -dj), w - max(0, dj))
        dst_r = slice(max(0, di), h - max(0, -di))
        dst_c = slice(max(0, dj), w - max(0, -dj))
        ok = traversable[src_r, src_c] & traversable[dst_r, dst_c]
        s = idx[src_r, src_c][ok]
        d = idx[dst_r, dst_c][ok]
        rows_src.append(s)
        cols_src.append(d)
        data.append(np.full(s.shape, cost * grid.resolution))
    graph = csr_matrix(
        (np.concatenate(data), (np.concatenate(rows_src), np.concatenate(cols_src))),
        shape=(h * w, h * w))
    dist = _csgraph_dijkstra(graph, directed=True, indices=idx[goal_cell])
    return dist.reshape(h, w)


def extract_path(grid: OccupancyGrid, field_m: np.ndarray,
                 start_cell: tuple[int, int]) -> list[tuple[int, int]]:
    """Greedy descent of the goal distance field from the start cell.

    At each step the neighbor minimizing (field + move cost) is taken; ties
    go to the lower flattened cell index.  On an exact field this is a
    minimal-cost Dijkstra path.
    """
    h, w = field_m.shape
    if not np.isfinite(field_m[start_cell]):
        raise NoPathError("start cell unreachable from goal")
    cells = [start_cell]
    cur = start_cell
    guard = h * w
    while field_m[cur] > 0.0 and guard > 0:
        guard -= 1
        best = None
        best_key = None
        for di, dj, cost in _MOVES:
            ni, nj = cur[0] + di, cur[1] + dj
            if not (0 <= ni < h and 0 <= nj < w):
                continue
            f = field_m[ni, nj]
            if not np.isfinite(f):
                continue
            key = (f + cost * grid.resolution, ni * w + nj)
            if best_key is None or key < best_key:
                best_key = key
                best = (ni, nj)
        if best is None or field_m[best] >= field_m[cur]:
            raise NoPathError("distance field descent stalled")
        cur = best
        cells.append(cur)
    return cells


def plan_global(grid: OccupancyGrid, start: Pose2D, goal: tuple[float, float],
                spec: RobotSpec = RobotSpec(),
                field_m: np.ndarray | None = None) -> GlobalPath:
    """Minimal-cost 8-connected path over the footprint-inflated grid
    (diagonal cost sqrt(2)); raises NoPathError when unreachable.

    ``field_m`` may carry a precomputed goal distance field for this
    (grid, goal) pair to avoid recomputing it on every replan.
    """
    start_cell = grid.world_to_cell(start.x, start.y)
    goal_cell = grid.world_to_cell(goal[0], goal[1])
    if field_m is None:
        field_m = goal_distance_field(grid, goal_cell, spec)
    if not (0 <= start_cell[0] < grid.height and 0 <= start_cell[1] < grid.width):
        raise NoPathError("start outside grid")
    if not np.isfinite(field_m[start_cell]):
        raise NoPathError("no path from start to goal")
    cells = extract_path(grid, field_m, start_cell)
    pts = np.array([grid.cell_center(r, c) for r, c in cells], dtype=np.float64)
    # pin the endpoints to the exact start/goal coordinates (same cells)
    pts[0] = (start.x, start.y)
    pts[-1] = goal
    if len(pts) > 1:
        seg = np.diff(pts, axis=0)
        length = float(np.hypot(seg[:, 0], seg[:, 1]).sum())
    else:
        length = 0.0
    return GlobalPath(waypoints=pts, total_length=length)


# ---------------------------------------------------------------------------
# local goal
# ---------------------------------------------------------------------------

def local_goal_point(path: GlobalPath, pose: Pose2D,
                     lookahead: float = 1.0) -> tuple[float, float]:
    """First path point at least ``lookahead`` away from the robot, falling
    back to the final waypoint when the whole remaining path is closer.

    The scan starts at the waypoint nearest the robot, so segments already
    passed never pull the goal backward when the robot has moved since the
    path was planned.
    """
    wp = path.waypoints
    if len(wp) == 0:
        raise ValueError("empty path")
    d = np.hypot(wp[:, 0] - pose.x, wp[:, 1] - pose.y)
    nearest = int(np.argmin(d))
    far = np.nonzero(d[nearest:] >= lookahead)[0]
    i = nearest + int(far[0]) if len(far) else len(wp) - 1
    return float(wp[i, 0]), float(wp[i, 1])


def local_goal(path: GlobalPath, pose: Pose2D, lookahead: float = 1.0) -> float:
    """Bearing of the local goal in the robot frame, in [-pi, pi]."""
    gx, gy = local_goal_point(path, pose, lookahead)
    dx, dy = gx - pose.x, gy - pose.y
    rx = dx * math.cos(-pose.heading) - dy * math.sin(-pose.heading)
    ry = dx * math.sin(-pose.heading) + dy * math.cos(-pose.heading)
    return math.atan2(ry, rx)


# ---------------------------------------------------------------------------
# local costmap
# ---------------------------------------------------------------------------

@dataclass
class LocalCostmap:
    """Window of inflated obstacle costs centered on the robot.

    Cost model: LETHAL_COST within the robot footprint of an obstacle,
    exp(-INFLATION_DECAY_PER_M * (clearance - footprint)) out to the
    inflation radius, 0 beyond it.
    """

    cost: np.ndarray
    row0: int
    col0: int
    grid: OccupancyGrid

    def query_many(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Costs at world points; queries clamp to the window edge cells."""
        res = self.grid.resolution
        rows = np.floor((ys - self.grid.origin.y) / res).astype(np.int64) - self.row0
        cols = np.floor((xs - self.grid.origin.x) / res).astype(np.int64) - self.col0
        rows = np.clip(rows, 0, self.cost.shape[0] - 1)
        cols = np.clip(cols, 0, self.cost.shape[1] - 1)
        return self.cost[rows, cols]

    def query(self, x: float, y: float) -> float:
        return float(self.query_many(np.array([x]), np.array([y]))[0])


def build_local_costmap(grid: OccupancyGrid, pose: Pose2D, params: PlannerParams,
                        spec: RobotSpec = RobotSpec(),
                        side_m: float = 4.0) -> LocalCostmap:
    res = grid.resolution
    half = int(round(side_m / 2.0 / res))
    row_c, col_c = grid.world_to_cell(pose.x, pose.y)
    row0 = max(0, row_c - half)
    row1 = min(grid.height, row_c + half)
    col0 = max(0, col_c - half)
    col1 = min(grid.width, col_c + half)
    clearance = grid.clearance_m()[row0:row1, col0:col1]
    fr = spec.footprint_radius
    cost = np.zeros_like(clearance)
    lethal = clearance <= fr * (1.0 + 1e-12) + 1e-12  # absorb EDT rounding
    soft = (~lethal) & (clearance < params.inflation_radius)
    cost[lethal] = LETHAL_COST
    cost[soft] = np.exp(-INFLATION_DECAY_PER_M * (clearance[soft] - fr))
    return LocalCostmap(cost=cost, row0=row0, col0=col0, grid=grid)


# ---------------------------------------------------------------------------
# DWA
# ---------------------------------------------------------------------------

def dwa_plan(costmap: LocalCostmap, pose: Pose2D, twist: Twist,
             path: GlobalPath, params: PlannerParams,
             spec: RobotSpec = RobotSpec(), horizon: float = 1.0,
             sim_dt: float = 0.05, goal_lookahead: float = 2.0) -> DwaDecision:
    """Sample the dynamic window, roll candidates out for ``horizon`` and
    return the minimum-cost collision-free twist.

    Score per candidate:
        pdist_scale * dist(endpoint, global path)
      + gdist_scale * dist(endpoint, goal point at the window edge)
      + occdist_scale * max inflated cost along the rollout
    Candidates touching lethal cost are discarded.  Ties break toward the
    lower linear index, then the lower angular index.

    The gdist goal point sits ``goal_lookahead`` along the path (the local
    costmap edge by default, mirroring ROS map-grid goal distance) so that,
    away from the global goal, faster candidates always score closer and
    raising max_vel_x raises the achieved speed.
    """
    v_hi_cap = min(params.max_vel_x, spec.max_linear_speed)
    w_cap = min(params.max_vel_theta, spec.max_angular_speed)
    v_lo = max(0.0, twist.linear - spec.max_linear_accel * horizon)
    v_hi = min(twist.linear + spec.max_linear_accel * horizon, v_hi_cap)
    v_lo = min(v_lo, v_hi)
    w_lo = max(-w_cap, twist.angular - spec.max_angular_accel * horizon)
    w_hi = min(w_cap, twist.angular + spec.max_angular_accel * horizon)
    w_lo = min(w_lo, w_hi)

    vs = np.linspace(v_lo, v_hi, params.vx_samples)
    ws = np.linspace(w_lo, w_hi, params.vtheta_samples)
    vv = np.repeat(vs, params.vtheta_samples)       # linear index varies slowest
    ww = np.tile(ws, params.vx_samples)
    n_cand = len(vv)

    n_steps = max(1, int(round(horizon / sim_dt)))
    times = (np.arange(n_steps) + 1) * sim_dt
    xs, ys, _ = rollout_arcs(pose, vv, ww, times)

    costs_along = costmap.query_many(xs.ravel(), ys.ravel()).reshape(n_cand, n_steps)
    max_cost = costs_along.max(axis=1)
    feasible = max_cost < LETHAL_COST
    if not feasible.any():
        return DwaDecision(Twist(0.0, 0.0), False, n_cand, float("inf"))

    end_x, end_y = xs[:, -1], ys[:, -1]
    wp = path.waypoints
    d_path = np.min(np.hypot(end_x[:, None] - wp[None, :, 0],
                             end_y[:, None] - wp[None, :, 1]), axis=1)
    gx, gy = local_goal_point(path, pose, goal_lookahead)
    d_goal = np.hypot(end_x - gx, end_y - gy)

    score = (params.pdist_scale * d_path
             + params.gdist_scale * d_goal
             + params.occdist_scale * max_cost)
    score = np.where(feasible, score, np.inf)
    best = int(np.argmin(score))  # first minimum = spec tie-break order
    return DwaDecision(Twist(float(vv[best]), float(ww[best])), True,
                       n_cand, float(score[best]))


def recovery_behavior(scan: LaserScan, max_angular_speed: float) -> Twist:
    """Rotate in place toward the side with more room (ties go left)."""
    half = len(scan.ranges) // 2
    right = float(scan.ranges[:half].mean())
    left = float(scan.ranges[half:].mean())
    direction = 1.0 if left >= right else -1.0
    return Twist(0.0, direction * 0.6 * max_angular_speed)


# ---------------------------------------------------------------------------
# per-episode planner state
# ---------------------------------------------------------------------------

@dataclass
class PlannerContext:
    """Episode-confined planner state: cached goal field, current global
    path, and the recovery counter.  Never shared across episodes."""

    grid: OccupancyGrid
    goal: tuple[float, float]
    spec: RobotSpec = field(default_factory=RobotSpec)
    horizon: float = 1.0
    sim_dt: float = 0.05
    lookahead: float = 1.0
    goal_lookahead: float = 2.0
    costmap_side: float = 4.0
    path: GlobalPath | None = None
    recovery_count: int = 0
    _field: np.ndarray | None = field(default=None, repr=False)

    def goal_field(self) -> np.ndarray:
        if self._field is None:
            goal_cell = self.grid.world_to_cell(*self.goal)
            # fields are pure in (grid, goal, footprint): share across
            # episodes on the same grid object
            key = (goal_cell, round(self.spec.footprint_radius, 9))
            cached = self.grid._goal_fields.get(key)
            if cached is None:
                cached = goal_distance_field(self.grid, goal_cell, self.spec)
                self.grid._goal_fields[key] = cached
            self._field = cached
        return self._field

    def replan(self, pose: Pose2D) -> GlobalPath:
        """Refresh the global path from the current pose (called once per
        decision period).  Keeps the previous path if the robot has strayed
        into an inflated cell where no plan starts."""
        try:
            self.path = plan_global(self.grid, pose, self.goal, self.spec,
                                    field_m=self.goal_field())
        except NoPathError:
            if self.path is None:
                raise
        return self.path


def run_planner_step(ctx: PlannerContext, pose: Pose2D, twist: Twist,
                     params: PlannerParams,
                     scan: LaserScan | None = None) -> tuple[Twist, DwaDecision]:
    """One local-planner cycle: DWA over the current path, or the recovery
    rotation when every candidate is infeasible."""
    if ctx.path is None:
        ctx.replan(pose)
    costmap = build_local_costmap(ctx.grid, pose, params, ctx.spec,
                                  ctx.costmap_side)
    decision = dwa_plan(costmap, pose, twist, ctx.path, params, ctx.spec,
                        ctx.horizon, ctx.sim_dt, ctx.goal_lookahead)
    if decision.feasible:
        ctx.recovery_count = 0
        return decision.twist, decision
    ctx.recovery_count += 1
    if scan is None:
        from .world import raycast_scan

        scan = raycast_scan(ctx.grid, pose)
    w_cap = min(params.max_vel_theta, ctx.spec.max_angular_speed)
    return recovery_behavior(scan, w_cap), decision
