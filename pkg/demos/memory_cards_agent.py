"""Train a small DBGFQN on Memory Cards and compare it with random guessing.

Two pairs of cards, six guesses per episode: a random guesser clears the board
a bit under half the time (exact value below). A memoryless agent cannot do much
better, since it has to remember where each value was shown. A few thousand
steps are enough to see the agent pull ahead; expect a couple of minutes on
one core.
"""
import sys
import tempfile

from dbgfqn.environments import random_success_probability
from dbgfqn.harness import ExperimentConfig, read_metrics, run_experiment
from dbgfqn.rl_training import TrainConfig

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 20_000
cards = dict(pairs=2, max_episode_steps=6)
baseline = random_success_probability(cards["pairs"], cards["max_episode_steps"])

with tempfile.TemporaryDirectory() as out:
    cfg = ExperimentConfig.create(
        "memorycards", "dbgfqn", env_kwargs=cards,
        model_overrides=dict(embed_dim=16, heads=2, layers=1, context_length=6),
        train=TrainConfig(total_steps=steps, target_sync_period=1000, warmup_steps=500, eps_fraction=0.3),
        out_dir=out, deterministic=True,
    )
    summary = run_experiment(cfg)
    records = read_metrics(f"{out}/metrics_seed0.csv")

print(f"random guessing succeeds with probability {baseline:.3f}")
for rec in records[:: max(1, len(records) // 10)]:
    print(f"step {rec.global_step:>6}  episode {rec.episode_index:>5}  running success {rec.running_success_rate:.2f}  eps {rec.epsilon:.2f}")
print(f"final running success {summary['mean_final']:.2f} (best {summary['mean_best']:.2f})")
