"""A look at the grid tasks: layouts, egocentric observations, aliasing.

Capital letters are flags, lower-case letters beacons, '#' walls, '+' the
passable walls of the hallucinated-rooms overlay, and the arrow is the agent.
The agent sees a 2x3 window (its own row and the row ahead, each with the
left and right neighbour), one-hot coded over 11 cell types.
"""
import numpy as np

from dbgfqn.environments import CHANNELS, make_env, render_layout

NAMES = ["empty", "wall", "beacon-a", "beacon-b", "beacon-c", "flag-a", "flag-b", "flag-c", "key", "door", "goal"]

for name in ("gv_memory_5x5", "gv_memory_4rooms_7x7", "gv_keydoor_7x7", "gv_memory_13x13_hallucinated"):
    env = make_env(name, seed=0)
    env.reset()
    print(f"{name}\n{render_layout(env.state)}\n")

env = make_env("gv_memory_5x5", seed=1)
obs = env.reset()
window = obs.reshape(6, CHANNELS).argmax(axis=1).reshape(2, 3)
print("egocentric window (top row: ahead; bottom row: the agent's own row; columns left to right)")
for row in window:
    print("  " + "  ".join(f"{NAMES[c]:>8s}" for c in row))

# many distinct states produce the same observation; only memory tells them apart
seen = {}
rng = np.random.default_rng(0)
for _ in range(300):
    obs, _, done, _ = env.step(int(rng.integers(3)))
    seen.setdefault(obs.tobytes(), set()).add((*env.state.agent, env.state.heading))
    if done:
        env.reset()
aliased = max(seen.values(), key=len)
print(f"\none observation was emitted from {len(aliased)} different agent poses, e.g. {sorted(aliased)[:3]}")
