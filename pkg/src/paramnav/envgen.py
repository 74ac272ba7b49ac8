"""Procedural navigation environments via cellular automata.

Maps are generated on a coarse lattice (cave-style birth/survive smoothing),
upsampled to the working grid resolution, and wrapped into EnvSpecs with a
fixed bottom-center start and top-center goal.  Everything is a pure
function of its seed, so suites are reproducible and hash-stable.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .world import OccupancyGrid, Pose2D, RobotSpec


class EnvGenError(RuntimeError):
    """Raised when a configuration cannot produce a usable environment."""


@dataclass(frozen=True)
class CaConfig:
    """Cave-automaton parameters.

    The automaton runs on ``cell_size`` cells and the result is upsampled
    to ``resolution``; obstacle features therefore have ~cell_size scale,
    which keeps corridors wide enough for a 0.3 m footprint.
    """

    fill_probability: float = 0.35
    smoothing_iterations: int = 4
    birth_threshold: int = 5
    survive_threshold: int = 3
    world_size: float = 10.0
    cell_size: float = 0.25
    resolution: float = 0.05

    def __post_init__(self):
        if not 0.0 <= self.fill_probability <= 1.0:
            raise ValueError("fill_probability must be in [0, 1]")
        if self.smoothing_iterations < 0:
            raise ValueError("smoothing_iterations must be >= 0")
        for name in ("birth_threshold", "survive_threshold"):
            if not 0 <= getattr(self, name) <= 8:
                raise ValueError(f"{name} must be in [0, 8]")
        if self.world_size <= 0 or self.cell_size <= 0 or self.resolution <= 0:
            raise ValueError("sizes must be positive")
        if self.cell_size < self.resolution:
            raise ValueError("cell_size must be >= resolution")


@dataclass
class EnvSpec:
    """One navigation task: a grid plus fixed start pose and goal point."""

    index: int
    seed: int
    grid: OccupancyGrid
    start: Pose2D
    goal: tuple[float, float]
    retries: int = 0


@dataclass
class EnvSuite:
    envs: list[EnvSpec]
    train_indices: list[int]
    test_indices: list[int]
    master_seed: int

    def train_envs(self) -> list[EnvSpec]:
        return [self.envs[i] for i in self.train_indices]

    def test_envs(self) -> list[EnvSpec]:
        return [self.envs[i] for i in self.test_indices]


def _neighbor_counts(occ: np.ndarray) -> np.ndarray:
    # out-of-lattice counts as free; the wall ring is stamped after smoothing
    padded = np.pad(occ.astype(np.int32), 1, constant_values=0)
    counts = np.zeros_like(occ, dtype=np.int32)
    h, w = occ.shape
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            counts += padded[1 + di:1 + di + h, 1 + dj:1 + dj + w]
    return counts


def generate_map(seed: int, config: CaConfig = CaConfig()) -> OccupancyGrid:
    """Deterministic cave map for a seed: random fill, then birth/survive
    smoothing (occupied iff >= birth neighbors, freed iff <= survive),
    upsampled to the working resolution.  Border cells are always occupied.
    """
    n = int(round(config.world_size / config.cell_size))
    rng = np.random.default_rng(seed)
    occ = rng.random((n, n)) < config.fill_probability
    for _ in range(config.smoothing_iterations):
        counts = _neighbor_counts(occ)
        occ = np.where(counts >= config.birth_threshold, True,
                       np.where(counts <= config.survive_threshold, False, occ))
    occ[0, :] = occ[-1, :] = occ[:, 0] = occ[:, -1] = True
    k = int(round(config.cell_size / config.resolution))
    fine = np.repeat(np.repeat(occ, k, axis=0), k, axis=1)
    return OccupancyGrid(cells=fine, resolution=config.resolution)


def _traversable_mask(grid: OccupancyGrid, spec: RobotSpec) -> np.ndarray:
    from .planner import traversable_mask

    return traversable_mask(grid, spec)


def _nearest_traversable(mask: np.ndarray, grid: OccupancyGrid,
                         target_xy: tuple[float, float], band_rows: slice):
    """Cell in the row band closest to the target point, or None."""
    band = np.zeros_like(mask)
    band[band_rows, :] = True
    candidates = mask & band
    if not candidates.any():
        return None
    rows, cols = np.nonzero(candidates)
    cx = grid.origin.x + (cols + 0.5) * grid.resolution
    cy = grid.origin.y + (rows + 0.5) * grid.resolution
    d2 = (cx - target_xy[0]) ** 2 + (cy - target_xy[1]) ** 2
    best = int(np.argmin(d2))  # argmin takes the first minimum: deterministic
    return int(rows[best]), int(cols[best])


def _connected(mask: np.ndarray, a: tuple[int, int], b: tuple[int, int]) -> bool:
    labels, _ = ndimage.label(mask, structure=np.array([[0, 1, 0],
                                                        [1, 1, 1],
                                                        [0, 1, 0]]))
    return labels[a] != 0 and labels[a] == labels[b]


def build_env(seed: int, config: CaConfig = CaConfig(),
              robot: RobotSpec = RobotSpec(), index: int = 0,
              max_retries: int = 100) -> EnvSpec:
    """Generate a map and place start (bottom center) and goal (top center).

    The start and goal must be collision-free, separated by at least 80% of
    the world height, and connected through cells with clearance above the
    robot footprint.  Failing maps are regenerated with seed+1, seed+2, ...
    until one passes; after ``max_retries`` the config is declared degenerate.
    """
    world_h = config.world_size
    for attempt in range(max_retries):
        grid = generate_map(seed + attempt, config)
        mask = _traversable_mask(grid, robot)
        h = grid.height
        band = max(1, int(round(0.15 * h)))
        start_cell = _nearest_traversable(
            mask, grid, (grid.world_width / 2, 0.075 * world_h), slice(0, band))
        goal_cell = _nearest_traversable(
            mask, grid, (grid.world_width / 2, 0.925 * world_h), slice(h - band, h))
        if start_cell is None or goal_cell is None:
            continue
        sx, sy = grid.cell_center(*start_cell)
        gx, gy = grid.cell_center(*goal_cell)
        if abs(gy - sy) < 0.8 * world_h:
            continue
        if not _connected(mask, start_cell, goal_cell):
            continue
        start = Pose2D(sx, sy, math.pi / 2)  # face the goal side
        return EnvSpec(index=index, seed=seed, grid=grid, start=start,
                       goal=(gx, gy), retries=attempt)
    raise EnvGenError(
        f"no valid environment after {max_retries} attempts from seed {seed}; "
        "the CA config produces degenerate worlds")


def build_suite(master_seed: int, n: int = 300,
                config: CaConfig = CaConfig(),
                robot: RobotSpec = RobotSpec()) -> EnvSuite:
    """Build n environments and split them 5/6 train, 1/6 test by shuffled
    index (300 -> 250 train + 50 test)."""
    if n < 2:
        raise ValueError("need at least 2 environments to split")
    rng = np.random.default_rng(master_seed)
    seeds = rng.integers(0, 2**31 - 1, size=n)
    envs = [build_env(int(seeds[i]), config, robot, index=i) for i in range(n)]
    perm = rng.permutation(n)
    n_train = (5 * n) // 6
    train = sorted(int(i) for i in perm[:n_train])
    test = sorted(int(i) for i in perm[n_train:])
    return EnvSuite(envs=envs, train_indices=train, test_indices=test,
                    master_seed=master_seed)


def suite_hash(suite: EnvSuite) -> str:
    """Stable content hash over grids, placements, and the split."""
    h = hashlib.sha256()
    h.update(json.dumps({"master_seed": suite.master_seed,
                         "train": suite.train_indices,
                         "test": suite.test_indices}).encode())
    for env in suite.envs:
        h.update(env.grid.to_text().encode())
        h.update(json.dumps({"index": env.index, "seed": env.seed,
                             "start": [env.start.x, env.start.y, env.start.heading],
                             "goal": list(env.goal)}).encode())
    return h.hexdigest()


# --- on-disk layout: <out>/{train,test}/NNN.grid + NNN.json ---

def _env_meta(env: EnvSpec, split: str) -> dict:
    return {
        "index": env.index,
        "seed": env.seed,
        "split": split,
        "start": {"x": env.start.x, "y": env.start.y, "heading": env.start.heading},
        "goal": {"x": env.goal[0], "y": env.goal[1]},
        "retries": env.retries,
    }


def save_suite(suite: EnvSuite, out_dir: str) -> None:
    for split, indices in (("train", suite.train_indices),
                           ("test", suite.test_indices)):
        d = os.path.join(out_dir, split)
        os.makedirs(d, exist_ok=True)
        for i in indices:
            env = suite.envs[i]
            stem = os.path.join(d, f"{env.index:03d}")
            env.grid.save(stem + ".grid")
            with open(stem + ".json", "w") as f:
                json.dump(_env_meta(env, split), f, indent=1, sort_keys=True)
    with open(os.path.join(out_dir, "suite.json"), "w") as f:
        json.dump({"master_seed": suite.master_seed,
                   "n": len(suite.envs),
                   "train": suite.train_indices,
                   "test": suite.test_indices,
                   "hash": suite_hash(suite)}, f, indent=1, sort_keys=True)


def load_env(stem: str) -> EnvSpec:
    grid = OccupancyGrid.load(stem + ".grid")
    with open(stem + ".json") as f:
        meta = json.load(f)
    start = Pose2D(meta["start"]["x"], meta["start"]["y"], meta["start"]["heading"])
    return EnvSpec(index=meta["index"], seed=meta["seed"], grid=grid,
                   start=start, goal=(meta["goal"]["x"], meta["goal"]["y"]),
                   retries=meta.get("retries", 0))


def load_suite(out_dir: str) -> EnvSuite:
    with open(os.path.join(out_dir, "suite.json")) as f:
        info = json.load(f)
    envs: dict[int, EnvSpec] = {}
    for split in ("train", "test"):
        d = os.path.join(out_dir, split)
        if not os.path.isdir(d):
            continue
        for name in sorted(os.listdir(d)):
            if name.endswith(".json"):
                env = load_env(os.path.join(d, name[:-5]))
                envs[env.index] = env
    ordered = [envs[i] for i in sorted(envs)]
    return EnvSuite(envs=ordered, train_indices=info["train"],
                    test_indices=info["test"], master_seed=info["master_seed"])
