import math

import numpy as np
import pytest

from paramnav.td3 import (
    Adam,
    Mlp,
    ReplayBuffer,
    Td3Agent,
    Td3Config,
    exploration_noise_sigma,
)


def finite_difference_grads(net, x, upstream, h=1e-5):
    """Central-difference gradient of sum(forward(x) * upstream) w.r.t.
    every parameter; the independent oracle for backward()."""
    flat0 = net.get_flat().copy()

    def objective(flat):
        net.set_flat(flat)
        return float((net.forward(x) * upstream).sum())

    num = np.zeros_like(flat0)
    for i in range(flat0.size):
        fp = flat0.copy()
        fp[i] += h
        fm = flat0.copy()
        fm[i] -= h
        num[i] = (objective(fp) - objective(fm)) / (2 * h)
    net.set_flat(flat0)
    return num


def analytic_grads(net, x, upstream):
    net.forward(x, cache=True)
    grads, _ = net.backward(upstream)
    return np.concatenate([g.ravel() for g in grads]).copy()


def max_rel_err(a, b):
    scale = np.maximum(np.abs(a), np.abs(b))
    scale[scale < 1e-8] = 1e-8
    return float(np.max(np.abs(a - b) / scale))


class TestMlpForward:
    def test_zero_net_tanh_outputs_zero(self):
        net = Mlp([4, 3, 2], head="tanh", rng=np.random.default_rng(0))
        for w in net.weights:
            w[...] = 0.0
        for b in net.biases:
            b[...] = 0.0
        out = net.forward(np.ones((5, 4)))
        assert np.all(out == 0.0)

    def test_hand_computed_single_unit(self):
        # 1-1-1 net: y = w2 * relu(w1 * x + b1) + b2
        net = Mlp([1, 1, 1], rng=np.random.default_rng(0))
        net.weights[0][...] = 2.0
        net.biases[0][...] = -1.0
        net.weights[1][...] = 3.0
        net.biases[1][...] = 0.5
        # x=2: relu(3)=3 -> 9.5 ; x=0: relu(-1)=0 -> 0.5
        out = net.forward(np.array([[2.0], [0.0]]))
        assert out[0, 0] == pytest.approx(9.5)
        assert out[1, 0] == pytest.approx(0.5)

    def test_tanh_head_bounds(self):
        rng = np.random.default_rng(3)
        net = Mlp([10, 16, 8], head="tanh", rng=rng)
        x = rng.standard_normal((1000, 10)) * 5
        out = net.forward(x)
        assert np.all(out > -1.0) and np.all(out < 1.0)

    def test_dimension_mismatch(self):
        net = Mlp([4, 3, 2], rng=np.random.default_rng(0))
        with pytest.raises(ValueError):
            net.forward(np.ones((2, 5)))

    def test_backward_without_cache(self):
        net = Mlp([4, 3, 2], rng=np.random.default_rng(0))
        net.forward(np.ones((1, 4)))
        with pytest.raises(RuntimeError):
            net.backward(np.ones((1, 2)))


class TestMlpGradients:
    @pytest.mark.parametrize("head", ["linear", "tanh"])
    def test_small_net_matches_finite_differences(self, head):
        rng = np.random.default_rng(11)
        net = Mlp([6, 8, 5, 3], head=head, rng=rng)
        x = rng.standard_normal((7, 6))
        up = rng.standard_normal((7, 3))
        ana = analytic_grads(net, x, up)
        num = finite_difference_grads(net, x, up)
        assert max_rel_err(ana, num) < 1e-5

    def test_input_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(12)
        net = Mlp([5, 9, 2], rng=rng)
        x = rng.standard_normal((3, 5))
        up = rng.standard_normal((3, 2))
        net.forward(x, cache=True)
        _, d_in = net.backward(up)
        d_in = d_in.copy()
        num = np.zeros_like(x)
        h = 1e-6
        for r in range(x.shape[0]):
            for c in range(x.shape[1]):
                xp = x.copy()
                xp[r, c] += h
                xm = x.copy()
                xm[r, c] -= h
                num[r, c] = ((net.forward(xp) * up).sum()
                             - (net.forward(xm) * up).sum()) / (2 * h)
        assert max_rel_err(d_in.ravel(), num.ravel()) < 1e-5

    def test_zero_output_layer_blocks_earlier_gradients(self):
        rng = np.random.default_rng(13)
        net = Mlp([4, 6, 2], rng=rng)
        net.weights[-1][...] = 0.0
        x = rng.standard_normal((5, 4))
        net.forward(x, cache=True)
        grads, _ = net.backward(np.ones((5, 2)))
        # all earlier-layer gradients vanish; only the last layer sees signal
        assert np.all(grads[0] == 0.0) and np.all(grads[1] == 0.0)
        assert np.any(grads[2] != 0.0)

    def test_gradient_linearity(self):
        rng = np.random.default_rng(14)
        net = Mlp([4, 5, 2], rng=rng)
        x = rng.standard_normal((3, 4))
        up1 = rng.standard_normal((3, 2))
        up2 = rng.standard_normal((3, 2))
        g1 = analytic_grads(net, x, up1)
        g2 = analytic_grads(net, x, up2)
        g12 = analytic_grads(net, x, up1 + up2)
        assert np.allclose(g12, g1 + g2, atol=1e-12)

    def test_actor_through_critic_path(self):
        # composed gradient d/d(actor params) of mean Q(s, pi(s))
        rng = np.random.default_rng(15)
        state_dim, action_dim = 4, 2
        actor = Mlp([state_dim, 6, action_dim], head="tanh", rng=rng)
        critic = Mlp([state_dim + action_dim, 7, 1], rng=rng)
        s = rng.standard_normal((5, state_dim))

        def objective():
            a = actor.forward(s)
            q = critic.forward(np.concatenate([s, a], axis=1))
            return float(np.mean(q))

        a = actor.forward(s, cache=True)
        critic.forward(np.concatenate([s, a], axis=1), cache=True)
        n = s.shape[0]
        _, d_in = critic.backward(np.full((n, 1), 1.0 / n))
        grads, _ = actor.backward(d_in[:, state_dim:])
        ana = np.concatenate([g.ravel() for g in grads]).copy()

        flat0 = actor.get_flat().copy()
        num = np.zeros_like(flat0)
        h = 1e-5
        for i in range(flat0.size):
            fp = flat0.copy()
            fp[i] += h
            actor.set_flat(fp)
            up = objective()
            fm = flat0.copy()
            fm[i] -= h
            actor.set_flat(fm)
            dn = objective()
            num[i] = (up - dn) / (2 * h)
        actor.set_flat(flat0)
        assert max_rel_err(ana, num) < 1e-5


class TestAdam:
    def test_matches_reference_formula(self):
        rng = np.random.default_rng(1)
        p = rng.standard_normal((3, 2))
        p0 = p.copy()
        g = rng.standard_normal((3, 2))
        opt = Adam([p], lr=0.01)
        opt.step([p], [g])
        # reference: first step moves by lr * g/(|g| + eps') elementwise
        m = 0.1 * g
        v = 0.001 * g * g
        ref = p0 - 0.01 * (m / 0.1) / (np.sqrt(v / 0.001) + 1e-8)
        assert np.allclose(p, ref, atol=1e-12)

    def test_state_round_trip(self):
        rng = np.random.default_rng(2)
        p = rng.standard_normal(5)
        opt = Adam([p])
        for _ in range(3):
            opt.step([p], [rng.standard_normal(5)])
        st = {"t": opt.t, "m": [m.copy() for m in opt.m],
              "v": [v.copy() for v in opt.v]}
        opt2 = Adam([p])
        opt2.load_state(st)
        assert opt2.t == opt.t
        assert np.array_equal(opt2.m[0], opt.m[0])


class TestCriticUpdate:
    def make_agent(self, **kw):
        cfg = Td3Config(hidden_sizes=(16, 16), batch_size=8, **kw)
        return Td3Agent(state_dim=6, action_dim=3, cfg=cfg, seed=5)

    def batch_of(self, agent, n=8, done=0.0, reward=1.0, seed=4):
        rng = np.random.default_rng(seed)
        return {
            "state": rng.standard_normal((n, 6)),
            "action": rng.uniform(-1, 1, (n, 3)),
            "reward": np.full(n, reward),
            "next_state": rng.standard_normal((n, 6)),
            "done": np.full(n, done),
        }

    def test_terminal_target_is_reward(self):
        agent = self.make_agent()
        batch = self.batch_of(agent, done=1.0, reward=2.5)
        y = agent.compute_targets(batch, noise=np.zeros((8, 3)))
        assert np.allclose(y, 2.5)

    def test_min_clipping_arithmetic(self):
        # force Q1'=2, Q2'=5 by zeroing nets and setting output biases
        agent = self.make_agent()
        for net, val in ((agent.target_critic1, 2.0), (agent.target_critic2, 5.0)):
            for w in net.weights:
                w[...] = 0.0
            for b in net.biases:
                b[...] = 0.0
            net.biases[-1][...] = val
        batch = self.batch_of(agent, done=0.0, reward=1.0)
        y = agent.compute_targets(batch, noise=np.zeros((8, 3)))
        assert np.allclose(y, 1.0 + 0.99 * 2.0)
        assert y[0] == pytest.approx(2.98, abs=1e-12)

    def test_target_never_exceeds_max_critic(self):
        agent = self.make_agent()
        batch = self.batch_of(agent)
        a2 = agent.target_actor.forward(batch["next_state"]).copy()
        q_in = np.concatenate([batch["next_state"], a2], axis=1)
        q1 = agent.target_critic1.forward(q_in)[:, 0].copy()
        q2 = agent.target_critic2.forward(q_in)[:, 0].copy()
        y = agent.compute_targets(batch, noise=np.zeros((8, 3)))
        upper = batch["reward"] + 0.99 * np.maximum(q1, q2)
        lower = batch["reward"] + 0.99 * np.minimum(q1, q2)
        assert np.all(y <= upper + 1e-12)
        assert np.allclose(y, lower)

    def test_identical_twins_stay_identical(self):
        agent = self.make_agent()
        # clone critic2 from critic1 (weights and optimizer state)
        agent.critic2.set_flat(agent.critic1.get_flat())
        agent.target_critic2.set_flat(agent.target_critic1.get_flat())
        batch = self.batch_of(agent)
        l1, l2 = agent.critic_update(batch, noise=np.zeros((8, 3)))
        assert l1 == pytest.approx(l2, abs=1e-15)
        assert np.array_equal(agent.critic1.get_flat(), agent.critic2.get_flat())

    def test_losses_decrease_on_fixed_batch(self):
        agent = self.make_agent()
        batch = self.batch_of(agent)
        noise = np.zeros((8, 3))
        first = agent.critic_update(batch, noise=noise)
        for _ in range(60):
            last = agent.critic_update(batch, noise=noise)
        assert last[0] < first[0]


class TestActorUpdate:
    def test_tau_one_copies_online_to_target(self):
        cfg = Td3Config(hidden_sizes=(8, 8), tau=1.0, batch_size=4)
        agent = Td3Agent(5, 2, cfg, seed=3)
        rng = np.random.default_rng(0)
        batch = {
            "state": rng.standard_normal((4, 5)),
            "action": rng.uniform(-1, 1, (4, 2)),
            "reward": np.zeros(4),
            "next_state": rng.standard_normal((4, 5)),
            "done": np.zeros(4),
        }
        agent.actor_update(batch)
        assert np.array_equal(agent.target_actor.get_flat(),
                              agent.actor.get_flat())
        assert np.array_equal(agent.target_critic1.get_flat(),
                              agent.critic1.get_flat())

    def test_constant_critic_gives_zero_actor_gradient(self):
        cfg = Td3Config(hidden_sizes=(8, 8), batch_size=4)
        agent = Td3Agent(5, 2, cfg, seed=3)
        for w in agent.critic1.weights:
            w[...] = 0.0
        for b in agent.critic1.biases:
            b[...] = 0.0
        agent.critic1.biases[-1][...] = 7.0  # Q == 7 everywhere
        before = agent.actor.get_flat().copy()
        rng = np.random.default_rng(0)
        batch = {
            "state": rng.standard_normal((4, 5)),
            "action": rng.uniform(-1, 1, (4, 2)),
            "reward": np.zeros(4),
            "next_state": rng.standard_normal((4, 5)),
            "done": np.zeros(4),
        }
        agent.actor_update(batch)
        # zero gradient: Adam moves nothing (0/(sqrt(0)+eps) = 0)
        assert np.array_equal(agent.actor.get_flat(), before)

    def test_toy_quadratic_chain_rule(self):
        # 2-parameter linear actor a = tanh(w x + b), critic Q = -(a - 0.5)^2
        # hand gradient: dQ/dw = -2 (a - .5) (1 - a^2) x ; dQ/db likewise
        actor = Mlp([1, 1], head="tanh", rng=np.random.default_rng(0))
        actor.weights[0][...] = 0.3
        actor.biases[0][...] = -0.2
        x = np.array([[0.8]])
        a = actor.forward(x, cache=True)
        d_q = 2.0 * (a - 0.5)  # d(loss)/da for loss = (a-0.5)^2
        grads, _ = actor.backward(d_q)
        a_val = math.tanh(0.3 * 0.8 - 0.2)
        hand_dw = 2 * (a_val - 0.5) * (1 - a_val ** 2) * 0.8
        hand_db = 2 * (a_val - 0.5) * (1 - a_val ** 2)
        assert grads[0][0, 0] == pytest.approx(hand_dw, abs=1e-12)
        assert grads[1][0] == pytest.approx(hand_db, abs=1e-12)

    def test_policy_delay_schedule(self):
        cfg = Td3Config(hidden_sizes=(8, 8), batch_size=4, policy_delay=3,
                        warmup_steps=0)
        agent = Td3Agent(5, 2, cfg, seed=3)
        buf = ReplayBuffer(64, 5, 2, seed=0)
        rng = np.random.default_rng(1)
        for _ in range(16):
            buf.push(rng.standard_normal(5), rng.uniform(-1, 1, 2), 0.1,
                     rng.standard_normal(5), False)
        for _ in range(12):
            agent.train_step(buf)
        assert agent.critic_updates == 12
        assert agent.actor_updates == 4  # every third critic update


class TestNoiseSchedule:
    def test_paper_endpoints(self):
        assert exploration_noise_sigma(0) == pytest.approx(0.5)
        assert exploration_noise_sigma(4_000_000) == pytest.approx(0.02)
        assert exploration_noise_sigma(10_000_000) == pytest.approx(0.02)

    def test_midpoint(self):
        assert exploration_noise_sigma(2_000_000) == pytest.approx(0.25)

    def test_monotone_nonincreasing(self):
        sig = [exploration_noise_sigma(s) for s in range(0, 5_000_001, 250_000)]
        assert all(a >= b for a, b in zip(sig, sig[1:]))

    def test_negative_steps_rejected(self):
        with pytest.raises(ValueError):
            exploration_noise_sigma(-1)


class TestReplayBuffer:
    def test_eviction_at_capacity(self):
        buf = ReplayBuffer(2, 3, 1, seed=0)
        for k in range(3):
            buf.push(np.full(3, k), [0.0], float(k), np.full(3, k), False)
        assert len(buf) == 2
        stored = {float(buf.reward[i]) for i in range(2)}
        assert stored == {1.0, 2.0}  # transition 0 evicted

    def test_seeded_sampling_reproducible(self):
        def collect(seed):
            buf = ReplayBuffer(16, 2, 1, seed=seed)
            for k in range(16):
                buf.push([k, k], [0.0], float(k), [k, k], False)
            return [tuple(buf.sample(4)["reward"]) for _ in range(5)]

        assert collect(7) == collect(7)
        assert collect(7) != collect(8)

    def test_premature_sample_errors(self):
        buf = ReplayBuffer(8, 2, 1, seed=0)
        buf.push([0, 0], [0.0], 0.0, [0, 0], False)
        with pytest.raises(ValueError):
            buf.sample(2)

    def test_sampling_uniformity(self):
        # 100k draws over 10 items: each frequency within 3 sigma of 10%
        buf = ReplayBuffer(10, 1, 1, seed=123)
        for k in range(10):
            buf.push([0.0], [0.0], float(k), [0.0], False)
        counts = np.zeros(10)
        n_total = 100_000
        for _ in range(n_total // 10):
            r = buf.sample(10)["reward"]
            for k in r.astype(int):
                counts[k] += 1
        p = 0.1
        sigma = math.sqrt(n_total * p * (1 - p))
        assert np.all(np.abs(counts - n_total * p) < 3 * sigma)

    def test_state_round_trip(self):
        buf = ReplayBuffer(8, 2, 1, seed=3)
        for k in range(5):
            buf.push([k, k], [0.5], float(k), [k + 1, k], k == 4)
        st = buf.state_dict()
        # restoring into a differently seeded buffer gives the same contents
        # and the same rng continuation as the original
        buf2 = ReplayBuffer(8, 2, 1, seed=99)
        buf2.load_state_dict(st)
        assert np.array_equal(buf2.sample(3)["reward"], buf.sample(3)["reward"])
        assert np.array_equal(buf2.sample(5)["state"], buf.sample(5)["state"])


class TestStability:
    def test_parameters_finite_through_many_updates(self):
        cfg = Td3Config(hidden_sizes=(24, 24), batch_size=16)
        agent = Td3Agent(6, 2, cfg, seed=9)
        buf = ReplayBuffer(512, 6, 2, seed=10)
        rng = np.random.default_rng(11)
        for _ in range(256):
            buf.push(rng.standard_normal(6), rng.uniform(-1, 1, 2),
                     rng.uniform(-2, 1), rng.standard_normal(6),
                     rng.random() < 0.05)
        for _ in range(500):
            agent.train_step(buf)
        for net in (agent.actor, agent.critic1, agent.critic2,
                    agent.target_actor, agent.target_critic1,
                    agent.target_critic2):
            assert np.all(np.isfinite(net.get_flat()))

    def test_actor_critic_update_ratio(self):
        cfg = Td3Config(hidden_sizes=(8, 8), batch_size=4, policy_delay=2)
        agent = Td3Agent(4, 2, cfg, seed=1)
        buf = ReplayBuffer(64, 4, 2, seed=2)
        rng = np.random.default_rng(3)
        for _ in range(8):
            buf.push(rng.standard_normal(4), rng.uniform(-1, 1, 2), 0.0,
                     rng.standard_normal(4), False)
        for k in range(25):
            agent.train_step(buf)
            assert abs(agent.actor_updates * cfg.policy_delay
                       - agent.critic_updates) <= cfg.policy_delay - 1 + 1e-9


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        cfg = Td3Config(hidden_sizes=(12, 12), batch_size=4)
        agent = Td3Agent(5, 2, cfg, seed=42)
        buf = ReplayBuffer(64, 5, 2, seed=1)
        rng = np.random.default_rng(2)
        for _ in range(16):
            buf.push(rng.standard_normal(5), rng.uniform(-1, 1, 2), 0.3,
                     rng.standard_normal(5), False)
        for _ in range(7):
            agent.train_step(buf)
        path = str(tmp_path / "ck.npz")
        agent.save_checkpoint(path, extra={"env_steps": 123})

        agent2 = Td3Agent(5, 2, cfg, seed=0)
        extra = agent2.load_checkpoint(path)
        assert extra == {"env_steps": 123}
        assert np.array_equal(agent.actor.get_flat(), agent2.actor.get_flat())
        assert np.array_equal(agent.target_critic2.get_flat(),
                              agent2.target_critic2.get_flat())
        assert agent2.opt_critic1.t == agent.opt_critic1.t
        assert np.array_equal(agent2.opt_actor.m[0], agent.opt_actor.m[0])
        # continued training is identical (same rng continuation)
        st = buf.state_dict()
        buf2 = ReplayBuffer(64, 5, 2, seed=1)
        buf2.load_state_dict(st)
        r1 = agent.train_step(buf)
        r2 = agent2.train_step(buf2)
        assert r1 == r2
        assert np.array_equal(agent.actor.get_flat(), agent2.actor.get_flat())


def test_act_clips_and_is_deterministic_without_noise():
    cfg = Td3Config(hidden_sizes=(8, 8))
    agent = Td3Agent(4, 2, cfg, seed=0)
    s = np.ones(4)
    a1 = agent.act(s).copy()
    a2 = agent.act(s).copy()
    assert np.array_equal(a1, a2)
    assert np.all(np.abs(a1) <= 1.0)
    rng = np.random.default_rng(5)
    a3 = agent.act(s, sigma=10.0, rng=rng)
    assert np.all(np.abs(a3) <= 1.0)
