"""Actor/learner training orchestration.

Many actor workers each drive one meta-environment and push transitions
into the shared replay buffer; a single learner consumes it and publishes
immutable policy snapshots that actors pick up at episode boundaries.
``sync`` mode runs one worker and the learner interleaved in a single
thread for bit-exact reproducibility (and checkpoint/resume); ``async``
mode runs workers as threads for throughput.

Shared state is exactly the replay buffer and the latest snapshot, both
behind locks; metrics rows are appended under their own lock.
"""

from __future__ import annotations

import json
import logging
import math
import os
import threading
import time
from collections import deque
from dataclasses import dataclass

import numpy as np

from .envgen import EnvSpec
from .metaenv import STATE_DIM, MetaEnv, NavConfig, RewardConfig
from .planner import NoPathError, ParamBounds
from .td3 import Mlp, ReplayBuffer, Td3Agent, Td3Config, exploration_noise_sigma
from .world import RobotSpec

METRICS_HEADER = "env_steps,updates,avg_return_100,avg_length_100"


@dataclass(frozen=True)
class TrainConfig:
    """``async`` runs workers as free-running threads (the throughput mode
    on many-core machines); ``sync`` interleaves the same logical workers
    round-robin in one thread, giving bit-exact reproducibility and
    checkpoint/resume, and avoiding interpreter-lock convoying on small
    machines."""

    total_env_steps: int = 10_000
    workers: int = 4
    mode: str = "async"  # "async" | "sync"
    master_seed: int = 0
    sync_interval: int = 100        # learner updates per published snapshot
    update_ratio: float = 1.0       # learner updates per env decision step
    metrics_window: int = 100
    checkpoint_at_step: int = 0     # full checkpoint at first episode end >= step
    stop_at_checkpoint: bool = False
    disk_snapshot_interval: int = 0  # actor-param dumps every N updates; 0 = off

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("need at least one worker")
        if self.mode not in ("sync", "async"):
            raise ValueError("mode must be 'sync' or 'async'")


@dataclass
class PolicySnapshot:
    """Immutable actor-parameter copy plus the schedule step it was cut at."""

    params: list
    version: int
    env_steps: int


class SnapshotHub:
    def __init__(self):
        self._lock = threading.Lock()
        self._snapshot: PolicySnapshot | None = None

    def publish(self, snapshot: PolicySnapshot) -> None:
        with self._lock:
            if self._snapshot is not None and snapshot.version <= self._snapshot.version:
                raise ValueError("snapshot versions must advance")
            self._snapshot = snapshot

    def latest(self) -> PolicySnapshot | None:
        with self._lock:
            return self._snapshot


class Counters:
    def __init__(self):
        self._lock = threading.Lock()
        self.env_steps = 0
        self.episodes = 0

    def add_step(self) -> int:
        with self._lock:
            self.env_steps += 1
            return self.env_steps

    def add_episode(self) -> int:
        with self._lock:
            self.episodes += 1
            return self.episodes

    def steps(self) -> int:
        with self._lock:
            return self.env_steps


class MetricsLog:
    """Per-episode metrics with moving averages, appended to a CSV."""

    def __init__(self, path: str | None, window: int = 100):
        self.path = path
        self.window = window
        self.returns: deque = deque(maxlen=window)
        self.lengths: deque = deque(maxlen=window)
        self.rows: list = []
        self._lock = threading.Lock()
        if path and not os.path.exists(path):
            with open(path, "w") as f:
                f.write(METRICS_HEADER + "\n")

    def log_episode(self, env_steps: int, updates: int,
                    ep_return: float, ep_length: int) -> None:
        with self._lock:
            self.returns.append(ep_return)
            self.lengths.append(ep_length)
            row = (env_steps, updates,
                   float(np.mean(self.returns)), float(np.mean(self.lengths)))
            self.rows.append(row)
            if self.path:
                with open(self.path, "a") as f:
                    f.write(f"{row[0]},{row[1]},{row[2]!r},{row[3]!r}\n")

    def state(self) -> dict:
        with self._lock:
            return {"returns": list(self.returns), "lengths": list(self.lengths),
                    "n_rows": len(self.rows)}

    def load_state(self, st: dict) -> None:
        with self._lock:
            self.returns = deque(st["returns"], maxlen=self.window)
            self.lengths = deque(st["lengths"], maxlen=self.window)


def worker_env_assignment(n_envs: int, workers: int) -> list[list[int]]:
    """Round-robin the env indices over workers: env i -> worker i % W."""
    if workers < 1:
        raise ValueError("workers must be >= 1")
    out = [[] for _ in range(workers)]
    for i in range(n_envs):
        out[i % workers].append(i)
    return out


def worker_seed(master_seed: int, worker_id: int) -> int:
    return master_seed + worker_id * 1_000_000


def snapshot_policy(snapshot: PolicySnapshot, state_dim: int, action_dim: int,
                    hidden) -> Mlp:
    net = Mlp([state_dim] + list(hidden) + [action_dim], head="tanh",
              rng=np.random.default_rng(0))
    for p, src in zip(net.parameters(), snapshot.params):
        p[...] = src
    return net


class ActorWorker:
    """One acting loop: pick an assigned env, run an episode with
    exploration noise, push every transition, refresh the policy snapshot
    at episode boundaries."""

    def __init__(self, worker_id: int, envs: list[EnvSpec], hub: SnapshotHub,
                 buffer: ReplayBuffer, counters: Counters, metrics: MetricsLog,
                 td3_cfg: Td3Config, budget: int,
                 robot: RobotSpec = RobotSpec(),
                 reward: RewardConfig = RewardConfig(),
                 nav: NavConfig = NavConfig(),
                 bounds: ParamBounds = ParamBounds(),
                 seed: int = 0):
        if not envs:
            raise ValueError(f"worker {worker_id} has no assigned envs")
        self.worker_id = worker_id
        self.envs = envs
        self.hub = hub
        self.buffer = buffer
        self.counters = counters
        self.metrics = metrics
        self.cfg = td3_cfg
        self.budget = budget
        self.robot = robot
        self.reward = reward
        self.nav = nav
        self.bounds = bounds
        self.rng = np.random.default_rng(seed)
        self.policy_net: Mlp | None = None
        self.snapshot_version = -1
        self.update_count_fn = lambda: 0
        self.episode_failures = 0
        self.use_live_policy = False  # sync mode acts with the learner's net

    def refresh_snapshot(self) -> None:
        snap = self.hub.latest()
        if snap is not None and snap.version > self.snapshot_version:
            if not self.use_live_policy:
                self.policy_net = snapshot_policy(
                    snap, STATE_DIM, 8, self.cfg.hidden_sizes)
            self.snapshot_version = snap.version

    def _act(self, state: np.ndarray, sigma: float) -> np.ndarray:
        a = self.policy_net.forward(state[None, :])[0]
        a = a + self.rng.normal(0.0, sigma, size=a.shape)
        return np.clip(a, -1.0, 1.0)

    def run_episode(self) -> bool:
        """One full episode; returns False when the step budget is gone."""
        self.refresh_snapshot()
        spec = self.envs[int(self.rng.integers(0, len(self.envs)))]
        try:
            env = MetaEnv(spec, self.robot, self.reward, self.nav, self.bounds)
            state = env.reset()
        except NoPathError as exc:  # degenerate env: log and skip it
            self.episode_failures += 1
            logging.getLogger(__name__).warning(
                "worker %d: env %d unusable (%s), skipped",
                self.worker_id, spec.index, exc)
            return self.counters.steps() < self.budget
        ep_return = 0.0
        ep_len = 0
        done = False
        while not done:
            sigma = exploration_noise_sigma(self.counters.steps(), self.cfg)
            action = self._act(state, sigma)
            next_state, reward, done, info = env.step(action)
            self.buffer.push(state, action, reward, next_state, done)
            steps_now = self.counters.add_step()
            state = next_state
            ep_return += reward
            ep_len += 1
            if steps_now >= self.budget and not done:
                # budget exhausted mid-episode: stop cleanly, episode unlogged
                return False
        self.counters.add_episode()
        self.metrics.log_episode(self.counters.steps(), self.update_count_fn(),
                                 ep_return, ep_len)
        return self.counters.steps() < self.budget


class Learner:
    """Paces updates to collected env steps and publishes snapshots."""

    def __init__(self, agent: Td3Agent, buffer: ReplayBuffer, hub: SnapshotHub,
                 counters: Counters, train_cfg: TrainConfig,
                 run_dir: str | None = None):
        self.agent = agent
        self.buffer = buffer
        self.hub = hub
        self.counters = counters
        self.cfg = train_cfg
        self.run_dir = run_dir
        self.version = 0
        self.snapshots_published = 0  # update-driven publishes only
        self._publish()  # initial policy so actors can run before updates

    def _publish(self) -> None:
        snap = PolicySnapshot(
            params=[p.copy() for p in self.agent.actor.parameters()],
            version=self.version, env_steps=self.counters.steps())
        self.hub.publish(snap)
        self.version += 1

    def publish(self) -> None:
        """Snapshot after a sync interval's worth of updates."""
        self._publish()
        self.snapshots_published += 1
        if self.cfg.disk_snapshot_interval and self.run_dir:
            n = self.agent.critic_updates
            if n % self.cfg.disk_snapshot_interval == 0:
                path = os.path.join(self.run_dir, f"snapshot_u{n:08d}.npz")
                np.savez(path, **{f"p{i}": p.copy() for i, p in enumerate(
                    self.agent.actor.parameters())})

    def target_updates(self) -> int:
        collectable = self.counters.steps() - self.agent.cfg.warmup_steps
        if collectable <= 0:
            return 0
        return int(math.floor(collectable * self.cfg.update_ratio))

    def behind(self) -> bool:
        return (self.agent.critic_updates < self.target_updates()
                and len(self.buffer) >= self.agent.cfg.batch_size)

    def catch_up(self, max_updates: int | None = None) -> int:
        """Run updates until the pacing target is met; returns count done."""
        done = 0
        while self.behind():
            if max_updates is not None and done >= max_updates:
                break
            self.agent.train_step(self.buffer)
            done += 1
            if self.agent.critic_updates % self.cfg.sync_interval == 0:
                self.publish()
        return done


@dataclass
class TrainResult:
    run_dir: str | None
    env_steps: int
    updates: int
    episodes: int
    metrics_rows: list
    checkpoint_path: str | None
    final_checkpoint_path: str | None
    snapshots_published: int
    wall_time_s: float


def _save_full_checkpoint(path: str, agent: Td3Agent, buffer: ReplayBuffer,
                          trainer_state: dict) -> None:
    arrays = agent.state_arrays(extra=trainer_state)
    buf = buffer.state_dict()
    arrays["buf__state"] = buf["state"]
    arrays["buf__action"] = buf["action"]
    arrays["buf__reward"] = buf["reward"]
    arrays["buf__next_state"] = buf["next_state"]
    arrays["buf__done"] = buf["done"]
    arrays["buf__cursor"] = np.array(buf["cursor"], dtype=np.int64)
    arrays["buf__size"] = np.array(buf["size"], dtype=np.int64)
    arrays["buf__rng"] = np.frombuffer(str(buf["rng"]).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def _load_full_checkpoint(path: str, agent: Td3Agent,
                          buffer: ReplayBuffer) -> dict:
    data = np.load(path)
    extra = agent.load_state_arrays(data)
    buffer.load_state_dict({
        "state": data["buf__state"],
        "action": data["buf__action"],
        "reward": data["buf__reward"],
        "next_state": data["buf__next_state"],
        "done": data["buf__done"],
        "cursor": int(data["buf__cursor"]),
        "size": int(data["buf__size"]),
        "rng": bytes(data["buf__rng"]).decode(),
    })
    return extra


class TrainRun:
    """Owns one training run: agent, buffer, workers, metrics, run dir."""

    def __init__(self, envs: list[EnvSpec], train_cfg: TrainConfig,
                 td3_cfg: Td3Config = Td3Config(),
                 robot: RobotSpec = RobotSpec(),
                 reward: RewardConfig = RewardConfig(),
                 nav: NavConfig = NavConfig(),
                 bounds: ParamBounds = ParamBounds(),
                 run_dir: str | None = None):
        if not envs:
            raise ValueError("no training environments")
        self.envs = envs
        self.cfg = train_cfg
        self.td3_cfg = td3_cfg
        self.robot = robot
        self.reward = reward
        self.nav = nav
        self.bounds = bounds
        self.run_dir = run_dir
        if run_dir:
            os.makedirs(run_dir, exist_ok=True)
        self.agent = Td3Agent(STATE_DIM, 8, td3_cfg,
                              seed=train_cfg.master_seed)
        self.buffer = ReplayBuffer(td3_cfg.buffer_capacity, STATE_DIM, 8,
                                   seed=train_cfg.master_seed + 777)
        self.hub = SnapshotHub()
        self.counters = Counters()
        metrics_path = os.path.join(run_dir, "metrics.csv") if run_dir else None
        self.metrics = MetricsLog(metrics_path, train_cfg.metrics_window)
        self.learner = Learner(self.agent, self.buffer, self.hub,
                               self.counters, train_cfg, run_dir)
        self.checkpoint_path: str | None = None
        self._checkpointed = False

    def _make_workers(self) -> list[ActorWorker]:
        n_workers = min(self.cfg.workers, len(self.envs))
        assignment = worker_env_assignment(len(self.envs), n_workers)
        workers = []
        for w in range(n_workers):
            worker = ActorWorker(
                w, [self.envs[i] for i in assignment[w]], self.hub,
                self.buffer, self.counters, self.metrics, self.td3_cfg,
                self.cfg.total_env_steps, self.robot, self.reward, self.nav,
                self.bounds, seed=worker_seed(self.cfg.master_seed, w))
            worker.update_count_fn = lambda: self.agent.critic_updates
            workers.append(worker)
        return workers

    # -- sync mode -----------------------------------------------------------

    def _trainer_state(self) -> dict:
        return {
            "env_steps": self.counters.env_steps,
            "episodes": self.counters.episodes,
            "snapshots_published": self.learner.snapshots_published,
            "learner_version": self.learner.version,
            "metrics": self.metrics.state(),
        }

    def _final_extra(self) -> dict:
        return {"env_steps": self.counters.env_steps,
                "episodes": self.counters.episodes,
                "updates": self.agent.critic_updates}

    def _sync_loop(self, workers: list[ActorWorker], next_worker: int = 0,
                   resume_worker_rngs=None) -> None:
        """Deterministic round-robin: each logical worker runs one episode,
        then the learner catches up to the pacing target."""
        if resume_worker_rngs is not None:
            for worker, state in zip(workers, resume_worker_rngs):
                worker.rng.bit_generator.state = json.loads(state)
        for worker in workers:
            # act with the live learner policy (classic single-process TD3);
            # snapshot versions still advance for the publication contract
            worker.use_live_policy = True
            worker.policy_net = self.agent.actor
        w = next_worker % len(workers)
        while True:
            more = workers[w].run_episode()
            w = (w + 1) % len(workers)
            self.learner.catch_up()
            if (self.cfg.checkpoint_at_step and not self._checkpointed
                    and self.counters.env_steps >= self.cfg.checkpoint_at_step):
                state = self._trainer_state()
                state["worker_rngs"] = [json.dumps(x.rng.bit_generator.state)
                                        for x in workers]
                state["next_worker"] = w
                path = os.path.join(self.run_dir or ".",
                                    f"checkpoint_step{self.counters.env_steps}.npz")
                _save_full_checkpoint(path, self.agent, self.buffer, state)
                self.checkpoint_path = path
                self._checkpointed = True
                if self.cfg.stop_at_checkpoint:
                    return
            if not more:
                return

    # -- async mode ------------------------------------------------------------

    def _async_loop(self, workers: list[ActorWorker]) -> None:
        stop = threading.Event()
        errors: list = []

        def actor_main(worker: ActorWorker):
            try:
                worker.refresh_snapshot()
                while not stop.is_set():
                    if not worker.run_episode():
                        break
            except Exception as exc:  # pragma: no cover - diagnostic path
                errors.append((worker.worker_id, exc))
                stop.set()

        threads = [threading.Thread(target=actor_main, args=(w,), daemon=True)
                   for w in workers]
        for t in threads:
            t.start()
        try:
            while any(t.is_alive() for t in threads):
                if self.learner.catch_up(max_updates=50) == 0:
                    time.sleep(0.002)
        finally:
            stop.set()
            for t in threads:
                t.join()
        self.learner.catch_up()  # drain the pacing target
        if errors:
            wid, exc = errors[0]
            raise RuntimeError(f"actor worker {wid} failed: {exc!r}") from exc

    # -- entry ----------------------------------------------------------------

    def run(self) -> TrainResult:
        t0 = time.perf_counter()
        workers = self._make_workers()
        if self.cfg.mode == "sync":
            self._sync_loop(workers)
        else:
            self._async_loop(workers)
        final_path = None
        if self.run_dir:
            # final checkpoint carries the learner state only (no replay
            # buffer): it exists for evaluation, not mid-run resumption
            final_path = os.path.join(self.run_dir, "checkpoint_final.npz")
            self.agent.save_checkpoint(final_path,
                                       extra=self._final_extra())
        return TrainResult(
            run_dir=self.run_dir, env_steps=self.counters.env_steps,
            updates=self.agent.critic_updates, episodes=self.counters.episodes,
            metrics_rows=list(self.metrics.rows),
            checkpoint_path=self.checkpoint_path,
            final_checkpoint_path=final_path,
            snapshots_published=self.learner.snapshots_published,
            wall_time_s=time.perf_counter() - t0)

    def resume(self, checkpoint_path: str) -> TrainResult:
        """Continue a sync-mode run from a full checkpoint; appends to the
        existing metrics.csv so the finished file is byte-identical to an
        uninterrupted run."""
        if self.cfg.mode != "sync":
            raise ValueError("resume is defined for sync mode")
        t0 = time.perf_counter()
        state = _load_full_checkpoint(checkpoint_path, self.agent, self.buffer)
        self.counters.env_steps = int(state["env_steps"])
        self.counters.episodes = int(state["episodes"])
        self.learner.snapshots_published = int(state["snapshots_published"])
        self.learner.version = int(state["learner_version"])
        self.metrics.load_state(state["metrics"])
        self._checkpointed = True  # do not re-checkpoint
        workers = self._make_workers()
        self._sync_loop(workers, next_worker=int(state["next_worker"]),
                        resume_worker_rngs=state["worker_rngs"])
        final_path = None
        if self.run_dir:
            final_path = os.path.join(self.run_dir, "checkpoint_final.npz")
            self.agent.save_checkpoint(final_path, extra=self._final_extra())
        return TrainResult(
            run_dir=self.run_dir, env_steps=self.counters.env_steps,
            updates=self.agent.critic_updates, episodes=self.counters.episodes,
            metrics_rows=list(self.metrics.rows),
            checkpoint_path=checkpoint_path,
            final_checkpoint_path=final_path,
            snapshots_published=self.learner.snapshots_published,
            wall_time_s=time.perf_counter() - t0)
