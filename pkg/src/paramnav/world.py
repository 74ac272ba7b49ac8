"""Deterministic 2D world: differential-drive kinematics, occupancy grids,
footprint collision checks, and planar lidar raycasting.

Conventions used throughout the package:

* World frame: x right, y up, heading counter-clockwise from +x,
  normalized into (-pi, pi].
* Grids are row-major boolean arrays ``cells[row, col]`` where row indexes
  y and col indexes x.  A cell covers a ``resolution`` x ``resolution``
  square; ``cell_center`` returns its midpoint in meters.
* All functions here are pure: no hidden state, no RNG, safe to call from
  concurrent workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

SCAN_BEAMS = 720
SCAN_FOV_DEG = 270.0
SCAN_MAX_RANGE = 2.0


def wrap_angle(theta: float) -> float:
    """Normalize an angle into (-pi, pi]."""
    m = math.fmod(theta + math.pi, 2.0 * math.pi)
    if m <= 0.0:
        m += 2.0 * math.pi
    return m - math.pi


@dataclass(frozen=True)
class Pose2D:
    """Planar pose; heading is always stored normalized into (-pi, pi]."""

    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.heading)):
            raise ValueError(f"non-finite pose: {self}")
        object.__setattr__(self, "heading", wrap_angle(self.heading))


@dataclass(frozen=True)
class Twist:
    """Velocity command: linear m/s, angular rad/s."""

    linear: float
    angular: float

    def __post_init__(self):
        if not (math.isfinite(self.linear) and math.isfinite(self.angular)):
            raise ValueError(f"non-finite twist: {self}")


@dataclass(frozen=True)
class RobotSpec:
    """Robot geometry and actuator envelope (Jackal-like defaults)."""

    footprint_radius: float = 0.3
    max_linear_speed: float = 2.0
    max_angular_speed: float = 3.14
    max_linear_accel: float = 2.0
    max_angular_accel: float = 3.2

    def __post_init__(self):
        for name in ("footprint_radius", "max_linear_speed", "max_angular_speed",
                     "max_linear_accel", "max_angular_accel"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class OccupancyGrid:
    """Boolean obstacle map. True = occupied.

    ``origin`` is the world position of the grid's lower-left corner and
    must have heading 0 (axis-aligned grids only).  Treat instances as
    immutable once built: derived fields (clearance) are cached.
    """

    cells: np.ndarray
    resolution: float
    origin: Pose2D = field(default_factory=lambda: Pose2D(0.0, 0.0, 0.0))
    _clearance: np.ndarray | None = field(default=None, repr=False, compare=False)
    _goal_fields: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        if self.origin.heading != 0.0:
            raise ValueError("grid origin must have heading 0")
        self.cells = np.asarray(self.cells, dtype=bool)
        if self.cells.ndim != 2:
            raise ValueError("cells must be a 2D array")

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def world_width(self) -> float:
        return self.width * self.resolution

    @property
    def world_height(self) -> float:
        return self.height * self.resolution

    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        """(row, col) of the cell containing the point; may be out of bounds."""
        col = int(math.floor((x - self.origin.x) / self.resolution))
        row = int(math.floor((y - self.origin.y) / self.resolution))
        return row, col

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        return (self.origin.x + (col + 0.5) * self.resolution,
                self.origin.y + (row + 0.5) * self.resolution)

    def in_bounds(self, x: float, y: float) -> bool:
        return (self.origin.x <= x < self.origin.x + self.world_width
                and self.origin.y <= y < self.origin.y + self.world_height)

    def clearance_m(self) -> np.ndarray:
        """Per-cell distance (m) from the cell center to the nearest occupied
        cell center. Occupied cells have clearance 0. Cached after first call."""
        if self._clearance is None:
            if self.cells.any():
                dist = ndimage.distance_transform_edt(~self.cells)
            else:
                dist = np.full(self.cells.shape, np.inf)
            self._clearance = dist * self.resolution
        return self._clearance

    # --- plain-text serialization: "width height resolution" header, then
    # one row of 0/1 characters per grid row, top row last (row 0 first). ---

    def to_text(self) -> str:
        lines = [f"{self.width} {self.height} {self.resolution!r}"]
        for row in self.cells:
            lines.append("".join("1" if c else "0" for c in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "OccupancyGrid":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ValueError("empty grid file")
        head = lines[0].split()
        if len(head) != 3:
            raise ValueError(f"bad grid header: {lines[0]!r}")
        width, height, resolution = int(head[0]), int(head[1]), float(head[2])
        if len(lines) != height + 1:
            raise ValueError(f"expected {height} rows, got {len(lines) - 1}")
        cells = np.zeros((height, width), dtype=bool)
        for i, ln in enumerate(lines[1:]):
            if len(ln) != width:
                raise ValueError(f"row {i} has {len(ln)} cells, expected {width}")
            cells[i] = np.frombuffer(ln.encode("ascii"), dtype=np.uint8) == ord("1")
        return cls(cells=cells, resolution=resolution)

    def save(self, path) -> None:
        with open(path, "w", encoding="ascii") as f:
            f.write(self.to_text())

    @classmethod
    def load(cls, path) -> "OccupancyGrid":
        with open(path, "r", encoding="ascii") as f:
            return cls.from_text(f.read())


@dataclass
class LaserScan:
    """720-beam planar scan, 270 deg field of view, ranges capped at 2 m.

    Beam 0 points at -135 deg relative to the robot heading; beams are
    uniformly spaced with beam 719 at +135 deg.
    """

    ranges: np.ndarray
    fov_deg: float = SCAN_FOV_DEG
    max_range: float = SCAN_MAX_RANGE

    def __post_init__(self):
        self.ranges = np.asarray(self.ranges, dtype=np.float64)
        if self.ranges.shape != (SCAN_BEAMS,):
            raise ValueError(f"scan must have exactly {SCAN_BEAMS} beams")

    def min_range(self) -> float:
        return float(self.ranges.min())


def beam_angles() -> np.ndarray:
    """Beam directions relative to the robot heading, radians."""
    half = math.radians(SCAN_FOV_DEG / 2.0)
    return np.linspace(-half, half, SCAN_BEAMS)


_BEAM_ANGLES = beam_angles()


def step_kinematics(pose: Pose2D, twist: Twist, dt: float) -> Pose2D:
    """Integrate a constant twist exactly (circular arc / straight line).

    Uses the midpoint form  dx = v dt sinc(w dt / 2) cos(th0 + w dt / 2),
    an exact arc identity that is cancellation-free for any |w| (the naive
    (v/w)(sin th1 - sin th0) form loses ~v dt^2 * 1e-16/w near w = 0).
    """
    if not (isinstance(dt, (int, float)) and math.isfinite(dt)):
        raise ValueError(f"non-finite dt: {dt}")
    if dt <= 0:
        raise ValueError("dt must be positive")
    v, w = twist.linear, twist.angular
    th0 = pose.heading
    half = 0.5 * w * dt
    sinc = math.sin(half) / half if half != 0.0 else 1.0
    x = pose.x + v * dt * sinc * math.cos(th0 + half)
    y = pose.y + v * dt * sinc * math.sin(th0 + half)
    return Pose2D(x, y, th0 + w * dt)


def rollout_arcs(pose: Pose2D, v: np.ndarray, w: np.ndarray, times: np.ndarray):
    """Vectorized constant-twist rollout.

    v, w: (C,) candidate velocities; times: (T,) strictly positive offsets.
    Returns xs, ys, ths each (C, T), using the same closed-form arcs as
    ``step_kinematics``.
    """
    v = np.asarray(v, dtype=np.float64)[:, None]
    w = np.asarray(w, dtype=np.float64)[:, None]
    t = np.asarray(times, dtype=np.float64)[None, :]
    th0 = pose.heading
    half = 0.5 * w * t
    sinc = np.sinc(half / np.pi)  # sin(half)/half, exact 1 at 0
    xs = pose.x + v * t * sinc * np.cos(th0 + half)
    ys = pose.y + v * t * sinc * np.sin(th0 + half)
    return xs, ys, th0 + w * t


def check_collision(grid: OccupancyGrid, pose: Pose2D, spec: RobotSpec) -> bool:
    """True iff any occupied cell center lies within footprint_radius of the
    pose, or the pose is outside the grid."""
    if not grid.in_bounds(pose.x, pose.y):
        return True
    r = spec.footprint_radius
    res = grid.resolution
    row0 = max(0, int(math.floor((pose.y - grid.origin.y - r) / res)))
    row1 = min(grid.height - 1, int(math.floor((pose.y - grid.origin.y + r) / res)))
    col0 = max(0, int(math.floor((pose.x - grid.origin.x - r) / res)))
    col1 = min(grid.width - 1, int(math.floor((pose.x - grid.origin.x + r) / res)))
    if row1 < row0 or col1 < col0:
        return False
    patch = grid.cells[row0:row1 + 1, col0:col1 + 1]
    if not patch.any():
        return False
    rows, cols = np.nonzero(patch)
    cx = grid.origin.x + (cols + col0 + 0.5) * res
    cy = grid.origin.y + (rows + row0 + 0.5) * res
    d2 = (cx - pose.x) ** 2 + (cy - pose.y) ** 2
    return bool((d2 <= r * r).any())


def raycast_scan(grid: OccupancyGrid, pose: Pose2D) -> LaserScan:
    """Cast all 720 beams with exact grid traversal (Amanatides-Woo DDA).

    Each range is the distance to the boundary of the first occupied cell
    along the beam, capped at ``SCAN_MAX_RANGE`` and floored at half a cell
    so ranges stay strictly positive (a beam starting inside an occupied
    cell reports resolution/2).
    """
    if not grid.in_bounds(pose.x, pose.y):
        raise ValueError(f"pose ({pose.x}, {pose.y}) outside grid")
    res = grid.resolution
    floor_range = res / 2.0
    row, col = grid.world_to_cell(pose.x, pose.y)
    if grid.cells[row, col]:
        return LaserScan(np.full(SCAN_BEAMS, floor_range))

    ang = pose.heading + _BEAM_ANGLES
    dx = np.cos(ang)
    dy = np.sin(ang)

    ci = np.full(SCAN_BEAMS, row, dtype=np.int64)
    cj = np.full(SCAN_BEAMS, col, dtype=np.int64)
    step_j = np.sign(dx).astype(np.int64)
    step_i = np.sign(dy).astype(np.int64)

    with np.errstate(divide="ignore"):
        inv_dx = np.where(dx != 0.0, 1.0 / dx, np.inf)
        inv_dy = np.where(dy != 0.0, 1.0 / dy, np.inf)
    # parametric distance to the first vertical / horizontal cell boundary
    next_x = grid.origin.x + (cj + (step_j > 0)) * res
    next_y = grid.origin.y + (ci + (step_i > 0)) * res
    t_max_x = np.where(dx != 0.0, (next_x - pose.x) * inv_dx, np.inf)
    t_max_y = np.where(dy != 0.0, (next_y - pose.y) * inv_dy, np.inf)
    t_delta_x = np.abs(res * inv_dx)
    t_delta_y = np.abs(res * inv_dy)

    ranges = np.full(SCAN_BEAMS, SCAN_MAX_RANGE)
    active = np.ones(SCAN_BEAMS, dtype=bool)
    h, w = grid.height, grid.width
    max_iter = int(2.0 * SCAN_MAX_RANGE / res * 1.5) + 4
    for _ in range(max_iter):
        if not active.any():
            break
        take_x = active & (t_max_x <= t_max_y)
        take_y = active & ~(t_max_x <= t_max_y)
        t_enter = np.where(take_x, t_max_x, t_max_y)
        cj = cj + np.where(take_x, step_j, 0)
        ci = ci + np.where(take_y, step_i, 0)
        t_max_x = t_max_x + np.where(take_x, t_delta_x, 0.0)
        t_max_y = t_max_y + np.where(take_y, t_delta_y, 0.0)

        beyond = active & (t_enter >= SCAN_MAX_RANGE)
        active &= ~beyond  # capped at max range; ranges already hold the cap

        oob = active & ((ci < 0) | (ci >= h) | (cj < 0) | (cj >= w))
        hit = np.zeros(SCAN_BEAMS, dtype=bool)
        inb = active & ~oob
        if inb.any():
            hit[inb] = grid.cells[ci[inb], cj[inb]]
        stop = oob | hit
        if stop.any():
            ranges[stop] = t_enter[stop]
            active &= ~stop

    return LaserScan(np.clip(ranges, floor_range, SCAN_MAX_RANGE))
