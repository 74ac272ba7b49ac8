"""TD3 internals on numpy: exact gradients, twin-critic targets, the
exploration schedule, and bit-exact checkpointing.

Run:  python demos/05_td3_numerics.py
"""

import numpy as np

from paramnav.td3 import Mlp, ReplayBuffer, Td3Agent, Td3Config, exploration_noise_sigma

rng = np.random.default_rng(0)

# --- gradient check against central finite differences ---------------------

net = Mlp([6, 16, 4], head="tanh", rng=rng)
x = rng.standard_normal((5, 6))
up = rng.standard_normal((5, 4))
net.forward(x, cache=True)
grads, _ = net.backward(up)
analytic = np.concatenate([g.ravel() for g in grads]).copy()

flat = net.get_flat()
numeric = np.zeros_like(flat)
h = 1e-6
for i in range(flat.size):
    bump = flat.copy()
    bump[i] += h
    net.set_flat(bump)
    f_plus = (net.forward(x) * up).sum()
    bump[i] -= 2 * h
    net.set_flat(bump)
    f_minus = (net.forward(x) * up).sum()
    numeric[i] = (f_plus - f_minus) / (2 * h)
net.set_flat(flat)
rel = np.max(np.abs(analytic - numeric) / np.maximum(np.abs(numeric), 1e-8))
print(f"gradient check: max relative error {rel:.2e} over {flat.size} params")

# --- clipped double-Q target -------------------------------------------------

cfg = Td3Config(hidden_sizes=(16, 16), batch_size=4)
agent = Td3Agent(state_dim=6, action_dim=3, cfg=cfg, seed=1)
for target_net, value in ((agent.target_critic1, 2.0), (agent.target_critic2, 5.0)):
    for w in target_net.weights:
        w[...] = 0.0
    for b in target_net.biases:
        b[...] = 0.0
    target_net.biases[-1][...] = value
batch = {"state": rng.standard_normal((4, 6)),
         "action": rng.uniform(-1, 1, (4, 3)),
         "reward": np.full(4, 1.0),
         "next_state": rng.standard_normal((4, 6)),
         "done": np.zeros(4)}
y = agent.compute_targets(batch, noise=np.zeros((4, 3)))
print(f"target with Q'=(2,5), r=1, gamma=0.99: {y[0]} (min-clipped: 1 + 0.99*2)")

# --- the exploration schedule ------------------------------------------------

for steps in (0, 1_000_000, 2_000_000, 4_000_000, 8_000_000):
    print(f"sigma at {steps:>9,} env steps: {exploration_noise_sigma(steps):.3f}")

# --- checkpoints round-trip bit-exactly ---------------------------------------

buf = ReplayBuffer(256, 6, 3, seed=2)
for _ in range(64):
    buf.push(rng.standard_normal(6), rng.uniform(-1, 1, 3),
             rng.normal(), rng.standard_normal(6), False)
for _ in range(5):
    agent.train_step(buf)
agent.save_checkpoint("/tmp/td3_demo_ckpt.npz", extra={"note": "demo"})
twin = Td3Agent(state_dim=6, action_dim=3, cfg=cfg, seed=99)
twin.load_checkpoint("/tmp/td3_demo_ckpt.npz")
same = np.array_equal(agent.actor.get_flat(), twin.actor.get_flat())
print(f"\ncheckpoint restores actor bit-exactly: {same}")
