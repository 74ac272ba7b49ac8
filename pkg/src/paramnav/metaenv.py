"""The parameter-space MDP: wraps the world and the navigation stack into
an environment whose action is the 8-dim planner parameter vector.

Each env step covers one decision period (2 s by default): the chosen
parameters are applied, the local planner runs at 5 Hz with physics at
20 Hz, and the reward combines a per-step penalty, local progress toward
the goal, and an obstacle-proximity penalty from the end-of-period scan.
Instances hold no shared mutable state and no RNG; a (spec, action
sequence) pair replays bit-exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .envgen import EnvSpec
from .planner import (
    ParamBounds,
    PlannerContext,
    PlannerParams,
    local_goal,
    normalize_params,
    params_from_array,
    run_planner_step,
)
from .world import (
    SCAN_BEAMS,
    SCAN_MAX_RANGE,
    LaserScan,
    Pose2D,
    RobotSpec,
    Twist,
    check_collision,
    raycast_scan,
    step_kinematics,
)

STATE_DIM = SCAN_BEAMS + 1 + 8  # scan, local-goal bearing, previous params


@dataclass(frozen=True)
class RewardConfig:
    """Coefficients and episode rules for the decision-period reward."""

    c_f: float = 1.0
    c_p: float = 1.0
    c_c: float = 0.05
    gamma: float = 0.99
    use_y_axis_progress: bool = True
    timeout_steps: int = 50
    goal_tolerance: float = 0.3
    terminal_on_collision: bool = False
    min_scan_over_period: bool = False

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must be in (0, 1)")
        if min(self.c_f, self.c_p, self.c_c) < 0:
            raise ValueError("reward coefficients must be non-negative")


@dataclass(frozen=True)
class NavConfig:
    """Rates and geometry of the planner/physics loop inside one step."""

    decision_period: float = 2.0
    planner_rate: float = 5.0
    physics_rate: float = 20.0
    rollout_horizon: float = 1.0
    lookahead: float = 1.0
    goal_lookahead: float = 2.0
    costmap_side: float = 4.0

    @property
    def physics_dt(self) -> float:
        return 1.0 / self.physics_rate

    @property
    def cycles_per_step(self) -> int:
        return int(round(self.decision_period * self.planner_rate))

    @property
    def ticks_per_cycle(self) -> int:
        return int(round(self.physics_rate / self.planner_rate))


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool

    def __post_init__(self):
        if not math.isfinite(self.reward):
            raise ValueError("reward must be finite")


def denormalize_action(action, bounds: ParamBounds = ParamBounds()) -> PlannerParams:
    """Map a policy action in [-1, 1]^8 onto the parameter box.

    Out-of-range entries are clipped.  Sample-count fields round to the
    nearest integer with ties toward +inf.
    """
    a = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
    if a.shape != (8,):
        raise ValueError("action must have 8 components")
    lo, hi = bounds.lows(), bounds.highs()
    raw = lo + (a + 1.0) / 2.0 * (hi - lo)
    return params_from_array(raw)


def compute_reward(p_start: tuple[float, float], p_end: tuple[float, float],
                   goal: tuple[float, float], min_beam: float, terminal: bool,
                   cfg: RewardConfig = RewardConfig()) -> float:
    """Decision-period reward: c_f * (1[terminal] - 1) + c_p * progress
    + c_c * (-1 / min_beam).

    Progress is the displacement projected on the start-to-goal direction,
    or plain y displacement when ``use_y_axis_progress`` is set.  The
    projection form fails on goal == p_start (degenerate direction).
    """
    r_f = (1.0 if terminal else 0.0) - 1.0
    if cfg.use_y_axis_progress:
        r_p = p_end[1] - p_start[1]
    else:
        dx, dy = goal[0] - p_start[0], goal[1] - p_start[1]
        norm = math.hypot(dx, dy)
        if norm == 0.0:
            raise ValueError("progress projection undefined: robot is at the goal")
        r_p = ((p_end[0] - p_start[0]) * dx + (p_end[1] - p_start[1]) * dy) / norm
    if min_beam <= 0.0:
        raise ValueError("min_beam must be positive")
    r_c = -1.0 / min_beam
    return cfg.c_f * r_f + cfg.c_p * r_p + cfg.c_c * r_c


def assemble_state(scan: LaserScan, phi: float, params: PlannerParams,
                   bounds: ParamBounds) -> np.ndarray:
    """Flatten (scan / max_range, phi, normalized previous params) into the
    fixed 729-dim state vector."""
    s = np.empty(STATE_DIM, dtype=np.float64)
    s[:SCAN_BEAMS] = scan.ranges / SCAN_MAX_RANGE
    s[SCAN_BEAMS] = phi
    s[SCAN_BEAMS + 1:] = normalize_params(params, bounds)
    return s


class EpisodeDoneError(RuntimeError):
    """step() called after the episode terminated."""


class MetaEnv:
    """One navigation task as an MDP over planner parameters."""

    def __init__(self, spec: EnvSpec, robot: RobotSpec = RobotSpec(),
                 reward: RewardConfig = RewardConfig(),
                 nav: NavConfig = NavConfig(),
                 bounds: ParamBounds = ParamBounds(),
                 default_params: PlannerParams | None = None,
                 start_pose: Pose2D | None = None):
        self.spec = spec
        self.robot = robot
        self.reward_cfg = reward
        self.nav = nav
        self.bounds = bounds
        # the manufacturer-default stand-in: bound midpoints
        self.default_params = default_params or bounds.midpoint_params()
        self.start_pose = start_pose or spec.start
        self._ctx: PlannerContext | None = None
        self.pose: Pose2D | None = None
        self.twist = Twist(0.0, 0.0)
        self.prev_params = self.default_params
        self.sim_time = 0.0
        self.decision_index = 0
        self.done = False
        self.collisions = 0

    def reset(self) -> np.ndarray:
        self.pose = self.start_pose
        self.twist = Twist(0.0, 0.0)
        self.prev_params = self.default_params
        self.sim_time = 0.0
        self.decision_index = 0
        self.done = False
        self.collisions = 0
        self._ctx = PlannerContext(
            grid=self.spec.grid, goal=self.spec.goal, spec=self.robot,
            horizon=self.nav.rollout_horizon, sim_dt=self.nav.physics_dt,
            lookahead=self.nav.lookahead, goal_lookahead=self.nav.goal_lookahead,
            costmap_side=self.nav.costmap_side)
        self._ctx.replan(self.pose)  # NoPathError propagates
        return self._observe()

    def _observe(self) -> np.ndarray:
        scan = raycast_scan(self.spec.grid, self.pose)
        phi = local_goal(self._ctx.path, self.pose, self.nav.lookahead)
        return assemble_state(scan, phi, self.prev_params, self.bounds)

    def _goal_reached(self) -> bool:
        return (math.hypot(self.spec.goal[0] - self.pose.x,
                           self.spec.goal[1] - self.pose.y)
                <= self.reward_cfg.goal_tolerance)

    def step(self, action) -> tuple[np.ndarray, float, bool, dict]:
        """Apply one parameter decision and run a full decision period."""
        if self._ctx is None:
            raise EpisodeDoneError("reset() must be called before step()")
        if self.done:
            raise EpisodeDoneError("episode is done; call reset()")
        params = denormalize_action(action, self.bounds)
        self._ctx.replan(self.pose)

        p_start = (self.pose.x, self.pose.y)
        reached = self._goal_reached()
        collided = False
        min_beam_period = math.inf
        cfg, nav = self.reward_cfg, self.nav
        for _cycle in range(nav.cycles_per_step):
            if reached:
                break
            cmd, _dec = run_planner_step(self._ctx, self.pose, self.twist, params)
            self.twist = cmd
            for _tick in range(nav.ticks_per_cycle):
                nxt = step_kinematics(self.pose, self.twist, nav.physics_dt)
                if check_collision(self.spec.grid, nxt, self.robot):
                    self.twist = Twist(0.0, 0.0)  # blocked: stop, stay put
                    self.collisions += 1
                    collided = True
                else:
                    self.pose = nxt
                self.sim_time += nav.physics_dt
                if cfg.min_scan_over_period:
                    beam = raycast_scan(self.spec.grid, self.pose).min_range()
                    min_beam_period = min(min_beam_period, beam)
                if self._goal_reached():
                    reached = True
                    break

        scan = raycast_scan(self.spec.grid, self.pose)
        min_beam = scan.min_range()
        if cfg.min_scan_over_period:
            min_beam = min(min_beam, min_beam_period)
        reward = compute_reward(p_start, (self.pose.x, self.pose.y),
                                self.spec.goal, min_beam, reached, cfg)

        self.decision_index += 1
        timeout = (not reached) and self.decision_index >= cfg.timeout_steps
        self.done = reached or timeout or (collided and cfg.terminal_on_collision)
        self.prev_params = params
        phi = local_goal(self._ctx.path, self.pose, nav.lookahead)
        state = assemble_state(scan, phi, params, self.bounds)
        info = {
            "reached": reached,
            "timeout": timeout,
            "collided": collided,
            "sim_time": self.sim_time,
            "min_beam": min_beam,
            "params": params,
        }
        return state, reward, self.done, info


@dataclass
class DeploymentResult:
    reached: bool
    timed_out: bool
    traversal_time: float  # simulated seconds; inf when timed out
    total_reward: float
    decisions: int
    rows: list  # trajectory log, one row per decision

    def profile_rows(self):
        return self.rows


TRAJECTORY_HEADER = ("decision_index,sim_time_s,x,y,heading,"
                     + ",".join(name for name in
                                ("max_vel_x", "max_vel_theta", "vx_samples",
                                 "vtheta_samples", "occdist_scale",
                                 "pdist_scale", "gdist_scale",
                                 "inflation_radius"))
                     + ",reward,done")


def run_deployment(env: MetaEnv, policy, max_decisions: int | None = None) -> DeploymentResult:
    """Run one episode under ``policy`` (state -> action in [-1,1]^8),
    logging one trajectory row per decision.

    The episode ends when the goal is reached or the configured timeout
    expires; timeouts are reported in the result, not raised.
    """
    state = env.reset()
    rows = []
    total = 0.0
    reached = False
    timed_out = False
    limit = max_decisions or env.reward_cfg.timeout_steps
    for _ in range(limit):
        action = np.asarray(policy(state), dtype=np.float64)
        state, reward, done, info = env.step(action)
        total += reward
        p = info["params"]
        rows.append([env.decision_index - 1, info["sim_time"],
                     env.pose.x, env.pose.y, env.pose.heading,
                     p.max_vel_x, p.max_vel_theta, p.vx_samples,
                     p.vtheta_samples, p.occdist_scale, p.pdist_scale,
                     p.gdist_scale, p.inflation_radius, reward, done])
        if done:
            reached = info["reached"]
            timed_out = info["timeout"]
            break
    else:
        timed_out = True
    time_s = env.sim_time if reached else math.inf
    return DeploymentResult(reached=reached, timed_out=timed_out,
                            traversal_time=time_s, total_reward=total,
                            decisions=len(rows), rows=rows)


def constant_policy(params: PlannerParams, bounds: ParamBounds = ParamBounds()):
    """Policy that always emits the given parameters (the fixed-DWA baseline)."""
    action = normalize_params(params, bounds)

    def policy(_state):
        return action

    return policy


def write_trajectory_csv(path: str, rows) -> None:
    with open(path, "w") as f:
        f.write(TRAJECTORY_HEADER + "\n")
        for row in rows:
            f.write(",".join(repr(v) if isinstance(v, float) else str(v)
                             for v in row) + "\n")


def read_trajectory_csv(path: str) -> list:
    rows = []
    with open(path) as f:
        header = f.readline()
        if header.strip() != TRAJECTORY_HEADER:
            raise ValueError("unrecognized trajectory header")
        for line in f:
            parts = line.strip().split(",")
            row = [int(parts[0])] + [float(v) for v in parts[1:14]]
            row.append(parts[14] == "True")
            rows.append(row)
    return rows
