"""From-scratch TD3 on numpy: MLPs with exact reverse-mode gradients,
Adam, a seeded replay buffer, twin clipped critics, delayed actor updates,
and soft target tracking.

Everything runs in float64; desk-scale networks make that cheap and it
keeps finite-difference gradient checks tight.  All randomness flows
through explicit ``numpy.random.Generator`` instances whose states are
part of the checkpoint, so training traces are exactly reproducible.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass

import numpy as np


# ---------------------------------------------------------------------------
# multilayer perceptron
# ---------------------------------------------------------------------------

class Mlp:
    """Fully connected ReLU network with a linear or tanh head.

    Parameters live in ``weights``/``biases`` lists; ``forward`` caches
    activations for ``backward``, which returns exact gradients for every
    parameter plus the gradient w.r.t. the input (needed to push critic
    gradients into the actor).

    Activation, delta, and gradient storage is preallocated and reused
    between calls (fresh multi-MB temporaries each step dominate runtime on
    small machines).  Consequently the arrays returned by ``forward`` and
    ``backward`` are only valid until the next call on the same network;
    copy them to keep them.
    """

    def __init__(self, sizes, head="linear", rng=None, final_scale=1.0):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if head not in ("linear", "tanh"):
            raise ValueError(f"unknown head {head!r}")
        self.sizes = tuple(int(s) for s in sizes)
        self.head = head
        rng = rng or np.random.default_rng()
        self.weights = []
        self.biases = []
        for i, (n_in, n_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            bound = 1.0 / np.sqrt(n_in)  # uniform fan-in init
            w = rng.uniform(-bound, bound, size=(n_in, n_out))
            b = rng.uniform(-bound, bound, size=n_out)
            if i == len(self.sizes) - 2:
                w *= final_scale
                b *= final_scale
            self.weights.append(w)
            self.biases.append(b)
        self._cache = None
        self._acts: dict[int, list] = {}
        self._deltas: dict[int, list] = {}
        self._grads = None

    # -- parameter plumbing ------------------------------------------------

    def parameters(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def n_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.parameters()])

    def set_flat(self, flat: np.ndarray) -> None:
        i = 0
        for p in self.parameters():
            p[...] = flat[i:i + p.size].reshape(p.shape)
            i += p.size
        if i != flat.size:
            raise ValueError("flat vector size mismatch")

    def copy(self) -> "Mlp":
        other = Mlp.__new__(Mlp)
        other.sizes = self.sizes
        other.head = self.head
        other.weights = [w.copy() for w in self.weights]
        other.biases = [b.copy() for b in self.biases]
        other._cache = None
        other._acts = {}
        other._deltas = {}
        other._grads = None
        return other

    # -- buffer pools --------------------------------------------------------

    def _act_buffers(self, n: int) -> list:
        if n not in self._acts:
            self._acts[n] = [np.empty((n, s)) for s in self.sizes[1:]]
            if len(self._acts) > 4:  # bound the pool; keep recent batch sizes
                oldest = next(iter(self._acts))
                if oldest != n:
                    del self._acts[oldest]
        return self._acts[n]

    def _delta_buffers(self, n: int) -> list:
        if n not in self._deltas:
            # one per layer output plus one for the input gradient
            self._deltas[n] = ([np.empty((n, s)) for s in self.sizes[1:]]
                               + [np.empty((n, self.sizes[0]))])
            if len(self._deltas) > 4:
                oldest = next(iter(self._deltas))
                if oldest != n:
                    del self._deltas[oldest]
        return self._deltas[n]

    def _grad_buffers(self):
        if self._grads is None:
            self._grads = [np.zeros_like(p) for p in self.parameters()]
        return self._grads

    # -- forward / backward --------------------------------------------------

    def forward(self, x: np.ndarray, cache: bool = False) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.sizes[0]:
            raise ValueError(
                f"input dim {x.shape[1]} != expected {self.sizes[0]}")
        bufs = self._act_buffers(x.shape[0])
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = bufs[i]
            np.matmul(h, w, out=z)
            z += b
            if i < last:
                np.maximum(z, 0.0, out=z)
            elif self.head == "tanh":
                np.tanh(z, out=z)
            h = z
        if cache:
            self._cache = [x] + bufs
        return h

    def backward(self, d_out: np.ndarray, input_grad_only: bool = False):
        """Gradients from an upstream d(loss)/d(output).

        Returns (grads, d_input) where grads aligns with ``parameters()``
        (``None`` when ``input_grad_only``).  Requires a preceding
        ``forward(..., cache=True)``; buffers are reused by the next call.
        """
        if self._cache is None:
            raise RuntimeError("backward() without cached forward()")
        acts = self._cache
        d_out = np.atleast_2d(np.asarray(d_out, dtype=np.float64))
        if d_out.shape != acts[-1].shape:
            raise ValueError("upstream gradient shape mismatch")
        n = d_out.shape[0]
        dbufs = self._delta_buffers(n)
        last = len(self.weights) - 1
        delta = dbufs[last]
        if self.head == "tanh":
            np.multiply(acts[-1], acts[-1], out=delta)
            np.subtract(1.0, delta, out=delta)
            delta *= d_out
        else:
            delta[...] = d_out
        grads = None if input_grad_only else self._grad_buffers()
        for i in range(last, -1, -1):
            if not input_grad_only:
                np.matmul(acts[i].T, delta, out=grads[2 * i])
                np.sum(delta, axis=0, out=grads[2 * i + 1])
            nxt = dbufs[i - 1] if i > 0 else dbufs[-1]
            np.matmul(delta, self.weights[i].T, out=nxt)
            if i > 0:
                nxt *= acts[i] > 0.0
            delta = nxt
        self._cache = None
        return grads, delta


def soft_update(target: Mlp, online: Mlp, tau: float) -> None:
    """target <- tau * online + (1 - tau) * target, in place."""
    for pt, po in zip(target.parameters(), online.parameters()):
        pt *= 1.0 - tau
        pt += tau * po


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

class Adam:
    def __init__(self, params, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self._scratch = [np.empty_like(p) for p in params]

    def step(self, params, grads) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        # p -= lr/b1c * m / (sqrt(v/b2c) + eps), all in reused scratch
        step_scale = self.lr / b1c
        sqrt_b2c = np.sqrt(b2c)
        for p, g, m, v, s in zip(params, grads, self.m, self.v, self._scratch):
            m *= self.beta1
            np.multiply(g, 1.0 - self.beta1, out=s)
            m += s
            v *= self.beta2
            np.multiply(g, g, out=s)
            s *= 1.0 - self.beta2
            v += s
            np.sqrt(v, out=s)
            s /= sqrt_b2c
            s += self.eps
            np.divide(m, s, out=s)
            s *= step_scale
            p -= s

    def state(self) -> dict:
        return {"t": self.t, "m": self.m, "v": self.v}

    def load_state(self, state) -> None:
        self.t = int(state["t"])
        for dst, src in zip(self.m, state["m"]):
            dst[...] = src
        for dst, src in zip(self.v, state["v"]):
            dst[...] = src


# ---------------------------------------------------------------------------
# replay buffer
# ---------------------------------------------------------------------------

class ReplayBuffer:
    """Uniform ring buffer of transitions.

    Appends may come from many actor threads; sampling happens on the
    learner thread.  A single lock guarantees a sample never observes a
    partially written transition.  Storage is float32 (observations are
    normalized), math upstream stays float64.
    """

    def __init__(self, capacity: int, state_dim: int, action_dim: int,
                 seed: int = 0):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.state = np.zeros((capacity, state_dim), dtype=np.float32)
        self.action = np.zeros((capacity, action_dim), dtype=np.float32)
        self.reward = np.zeros(capacity, dtype=np.float32)
        self.next_state = np.zeros((capacity, state_dim), dtype=np.float32)
        self.done = np.zeros(capacity, dtype=np.float32)
        self.cursor = 0
        self.size = 0
        self.rng = np.random.default_rng(seed)
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return self.size

    def push(self, state, action, reward, next_state, done) -> None:
        with self._lock:
            i = self.cursor
            self.state[i] = state
            self.action[i] = action
            self.reward[i] = reward
            self.next_state[i] = next_state
            self.done[i] = 1.0 if done else 0.0
            self.cursor = (i + 1) % self.capacity
            self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int) -> dict:
        with self._lock:
            if self.size < batch_size:
                raise ValueError(
                    f"buffer holds {self.size} < batch {batch_size}")
            idx = self.rng.integers(0, self.size, size=batch_size)
            return {
                "state": self.state[idx].astype(np.float64),
                "action": self.action[idx].astype(np.float64),
                "reward": self.reward[idx].astype(np.float64),
                "next_state": self.next_state[idx].astype(np.float64),
                "done": self.done[idx].astype(np.float64),
            }

    def state_dict(self) -> dict:
        with self._lock:
            return {
                "state": self.state[:self.size].copy(),
                "action": self.action[:self.size].copy(),
                "reward": self.reward[:self.size].copy(),
                "next_state": self.next_state[:self.size].copy(),
                "done": self.done[:self.size].copy(),
                "cursor": self.cursor,
                "size": self.size,
                "rng": json.dumps(self.rng.bit_generator.state),
            }

    def load_state_dict(self, st) -> None:
        with self._lock:
            n = int(st["size"])
            self.state[:n] = st["state"]
            self.action[:n] = st["action"]
            self.reward[:n] = st["reward"]
            self.next_state[:n] = st["next_state"]
            self.done[:n] = st["done"]
            self.cursor = int(st["cursor"])
            self.size = n
            self.rng.bit_generator.state = json.loads(str(st["rng"]))


# ---------------------------------------------------------------------------
# TD3
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Td3Config:
    gamma: float = 0.99
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    batch_size: int = 256
    policy_delay: int = 2
    tau: float = 0.005
    target_noise_sigma: float = 0.2
    target_noise_clip: float = 0.5
    smoothing_enabled: bool = True
    warmup_steps: int = 2000
    buffer_capacity: int = 500_000
    hidden_sizes: tuple = (512, 512, 512)
    actor_final_scale: float = 0.01
    expl_sigma_start: float = 0.5
    expl_sigma_decay_per_step: float = 0.125e-6
    expl_sigma_floor: float = 0.02

    def __post_init__(self):
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must be in (0, 1]")
        if self.policy_delay < 1:
            raise ValueError("policy_delay must be >= 1")


def exploration_noise_sigma(env_steps: int, cfg: Td3Config = Td3Config()) -> float:
    """Linearly decaying action-noise sigma with a floor."""
    if env_steps < 0:
        raise ValueError("env_steps must be >= 0")
    return max(cfg.expl_sigma_floor,
               cfg.expl_sigma_start - cfg.expl_sigma_decay_per_step * env_steps)


class Td3Agent:
    """Actor + twin critics + targets + optimizers, all mutated only from
    the learner thread."""

    def __init__(self, state_dim: int, action_dim: int,
                 cfg: Td3Config = Td3Config(), seed: int = 0):
        self.cfg = cfg
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.rng = np.random.default_rng(seed)
        h = list(cfg.hidden_sizes)
        self.actor = Mlp([state_dim] + h + [action_dim], head="tanh",
                         rng=self.rng, final_scale=cfg.actor_final_scale)
        self.critic1 = Mlp([state_dim + action_dim] + h + [1], rng=self.rng)
        self.critic2 = Mlp([state_dim + action_dim] + h + [1], rng=self.rng)
        self.target_actor = self.actor.copy()
        self.target_critic1 = self.critic1.copy()
        self.target_critic2 = self.critic2.copy()
        self.opt_actor = Adam(self.actor.parameters(), lr=cfg.actor_lr)
        self.opt_critic1 = Adam(self.critic1.parameters(), lr=cfg.critic_lr)
        self.opt_critic2 = Adam(self.critic2.parameters(), lr=cfg.critic_lr)
        self.critic_updates = 0
        self.actor_updates = 0

    # -- acting -------------------------------------------------------------

    def act(self, state: np.ndarray, sigma: float = 0.0,
            rng: np.random.Generator | None = None) -> np.ndarray:
        a = self.actor.forward(state[None, :])[0]
        if sigma > 0.0:
            rng = rng or self.rng
            a = a + rng.normal(0.0, sigma, size=a.shape)
        return np.clip(a, -1.0, 1.0)

    # -- training -----------------------------------------------------------

    def compute_targets(self, batch: dict,
                        noise: np.ndarray | None = None) -> np.ndarray:
        """y = r + (1 - done) * gamma * min(Q1', Q2')(s', clip(pi'(s') + eps))."""
        cfg = self.cfg
        s2 = batch["next_state"]
        a2 = self.target_actor.forward(s2)
        if noise is None and cfg.smoothing_enabled:
            noise = self.rng.normal(0.0, cfg.target_noise_sigma, size=a2.shape)
            noise = np.clip(noise, -cfg.target_noise_clip, cfg.target_noise_clip)
        if noise is not None:
            a2 = np.clip(a2 + noise, -1.0, 1.0)
        q_in = np.concatenate([s2, a2], axis=1)
        q1 = self.target_critic1.forward(q_in)[:, 0]
        q2 = self.target_critic2.forward(q_in)[:, 0]
        q_min = np.minimum(q1, q2)
        return batch["reward"] + (1.0 - batch["done"]) * cfg.gamma * q_min

    def critic_update(self, batch: dict,
                      noise: np.ndarray | None = None) -> tuple[float, float]:
        """One MSE regression step of both critics toward the clipped
        double-Q target; returns the two losses."""
        y = self.compute_targets(batch, noise)
        q_in = np.concatenate([batch["state"], batch["action"]], axis=1)
        n = q_in.shape[0]
        losses = []
        for critic, opt in ((self.critic1, self.opt_critic1),
                            (self.critic2, self.opt_critic2)):
            q = critic.forward(q_in, cache=True)[:, 0]
            err = q - y
            losses.append(float(np.mean(err ** 2)))
            d_q = (2.0 / n) * err[:, None]
            grads, _ = critic.backward(d_q)
            opt.step(critic.parameters(), grads)
        self.critic_updates += 1
        return losses[0], losses[1]

    def actor_update(self, batch: dict) -> float:
        """Deterministic policy gradient ascent on Q1(s, pi(s)), then soft
        updates of all three target networks."""
        cfg = self.cfg
        s = batch["state"]
        n = s.shape[0]
        a = self.actor.forward(s, cache=True)
        q_in = np.concatenate([s, a], axis=1)
        q = self.critic1.forward(q_in, cache=True)
        loss = -float(np.mean(q))
        # dQ/d(input) -> take the action slice, scale for the mean
        d_q = np.full((n, 1), -1.0 / n)
        _, d_in = self.critic1.backward(d_q, input_grad_only=True)
        d_action = d_in[:, self.state_dim:]
        grads, _ = self.actor.backward(d_action)
        self.opt_actor.step(self.actor.parameters(), grads)
        soft_update(self.target_actor, self.actor, cfg.tau)
        soft_update(self.target_critic1, self.critic1, cfg.tau)
        soft_update(self.target_critic2, self.critic2, cfg.tau)
        self.actor_updates += 1
        return loss

    def train_step(self, buffer: ReplayBuffer) -> dict:
        """One learner iteration: critic update, plus an actor update every
        ``policy_delay`` critic updates."""
        batch = buffer.sample(self.cfg.batch_size)
        l1, l2 = self.critic_update(batch)
        out = {"critic1_loss": l1, "critic2_loss": l2}
        if self.critic_updates % self.cfg.policy_delay == 0:
            out["actor_loss"] = self.actor_update(batch)
        return out

    # -- checkpointing --------------------------------------------------------

    def _nets(self) -> dict:
        return {"actor": self.actor, "critic1": self.critic1,
                "critic2": self.critic2, "target_actor": self.target_actor,
                "target_critic1": self.target_critic1,
                "target_critic2": self.target_critic2}

    def state_arrays(self, extra: dict | None = None) -> dict:
        """Every parameter, optimizer moment, RNG state, and counter as a
        flat dict of arrays (JSON metadata encoded as a uint8 array)."""
        arrays = {}
        for name, net in self._nets().items():
            for i, p in enumerate(net.parameters()):
                arrays[f"{name}__p{i}"] = p
        for name, opt in (("opt_actor", self.opt_actor),
                          ("opt_critic1", self.opt_critic1),
                          ("opt_critic2", self.opt_critic2)):
            st = opt.state()
            arrays[f"{name}__t"] = np.array(st["t"], dtype=np.int64)
            for i, m in enumerate(st["m"]):
                arrays[f"{name}__m{i}"] = m
            for i, v in enumerate(st["v"]):
                arrays[f"{name}__v{i}"] = v
        meta = {
            "rng": self.rng.bit_generator.state,
            "critic_updates": self.critic_updates,
            "actor_updates": self.actor_updates,
            "state_dim": self.state_dim,
            "action_dim": self.action_dim,
            "extra": extra or {},
        }
        arrays["meta_json"] = np.frombuffer(
            json.dumps(meta).encode(), dtype=np.uint8)
        return arrays

    def load_state_arrays(self, data) -> dict:
        for name, net in self._nets().items():
            for i, p in enumerate(net.parameters()):
                p[...] = data[f"{name}__p{i}"]
        for name, opt in (("opt_actor", self.opt_actor),
                          ("opt_critic1", self.opt_critic1),
                          ("opt_critic2", self.opt_critic2)):
            opt.t = int(data[f"{name}__t"])
            for i in range(len(opt.m)):
                opt.m[i][...] = data[f"{name}__m{i}"]
                opt.v[i][...] = data[f"{name}__v{i}"]
        meta = json.loads(bytes(data["meta_json"]).decode())
        self.rng.bit_generator.state = meta["rng"]
        self.critic_updates = int(meta["critic_updates"])
        self.actor_updates = int(meta["actor_updates"])
        return meta.get("extra", {})

    def save_checkpoint(self, path: str, extra: dict | None = None) -> None:
        """Write the full learner state; round-trips bit-exactly through
        ``load_checkpoint``."""
        np.savez(path, **self.state_arrays(extra))

    def load_checkpoint(self, path: str) -> dict:
        data = np.load(path if str(path).endswith(".npz") else str(path) + ".npz")
        return self.load_state_arrays(data)
