import numpy as np
import pytest

from dbgfqn.environments import make_env
from dbgfqn.model_zoo import ConfigError, EncoderConfig, QNetwork
from dbgfqn.rl_training import (
    EmptyBufferError,
    ReplayBuffer,
    TrainConfig,
    epsilon_at,
    epsilon_greedy,
    record_step,
    sample_batch,
    sync_target,
    td_loss,
    td_targets,
    train_step,
)
from dbgfqn.rl_training.buffer import TransitionSequence
from dbgfqn.tensor_core import AdamState, Tape


def chi_square(counts, probs):
    counts = np.asarray(counts, dtype=float)
    expected = counts.sum() * np.asarray(probs)
    return float(((counts - expected) ** 2 / expected).sum())


# 99.9% quantiles of chi-square with k degrees of freedom
CHI2_999 = {1: 10.83, 2: 13.82, 3: 16.27, 4: 18.47, 9: 27.88}


def fill(buf, episodes, width=2, start=0.0):
    """Record episodes of the given lengths; obs row = (global index, episode id)."""
    g = start
    for ep, n in enumerate(episodes):
        for t in range(n):
            record_step(buf, [g, ep], t % 3, float(t), t == n - 1)
            g += 1
    return buf


# ---------------------------------------------------------------------------
# buffer


def test_record_step_grows_and_evicts():
    buf = ReplayBuffer(2, capacity=2)
    assert len(buf) == 0
    record_step(buf, [0, 0], 0, 0.0, False)
    assert len(buf) == 1
    record_step(buf, [1, 0], 0, 0.0, False)
    record_step(buf, [2, 0], 0, 0.0, False)
    assert len(buf) == 2
    assert buf.episode_spans() == [(1, 2)]
    assert sorted(buf.obs[:, 0]) == [1.0, 2.0]


def test_eviction_drops_whole_old_episodes():
    buf = fill(ReplayBuffer(2, capacity=6), [3, 3, 2])
    assert buf.episode_spans() == [(2, 2), (3, 5), (6, 7)]
    fill(buf, [4], start=8.0)
    assert [s for s in buf.episode_spans()] == [(6, 7), (8, 11)]


def test_windows_never_cross_episodes_exhaustive():
    buf = fill(ReplayBuffer(2, capacity=100), [5, 5])
    seen = set()
    for context in range(1, 8):
        for first, last in buf.episode_spans():
            for end in range(first, last + 1):
                w = buf.window(end, first, context)
                ids = w.obs[: w.valid_len, 1]
                assert np.all(ids == ids[0])
                assert np.all(w.obs[w.valid_len :] == 0)
                seen.add((end, context))
    assert len(seen) == 10 * 7
    rng = np.random.default_rng(0)
    batch = sample_batch(buf, 500, 4, rng)
    for i in range(len(batch)):
        w = batch[i]
        assert len(set(w.obs[: w.valid_len, 1])) == 1


def test_windows_after_wraparound_stay_within_episode():
    buf = fill(ReplayBuffer(2, capacity=7), [3, 4, 2, 5])
    for first, last in buf.episode_spans():
        for end in range(first, last + 1):
            w = buf.window(end, first, 6)
            np.testing.assert_array_equal(w.obs[: w.valid_len, 0], np.arange(end - w.valid_len + 1, end + 1))


def test_short_episode_is_right_padded():
    buf = fill(ReplayBuffer(2), [3])
    w = buf.window(2, 0, 5)
    assert w.valid_len == 3
    np.testing.assert_array_equal(w.obs[:3, 0], [0, 1, 2])
    np.testing.assert_array_equal(w.obs[3:], 0)
    np.testing.assert_array_equal(w.mask, [True, True, True, False, False])
    np.testing.assert_array_equal(w.dones, [False, False, True, False, False])


def test_full_length_window_has_no_padding():
    buf = fill(ReplayBuffer(2), [50])
    w = buf.window(49, 0, 50)
    assert w.valid_len == 50 and w.mask.all()


def test_next_obs_is_observation_shift():
    buf = ReplayBuffer(1)
    for t in range(4):
        buf.record([t], 0, 0.0, False)
    buf.record([4], 0, 1.0, True, next_obs=[99])
    w = buf.window(4, 0, 5)
    np.testing.assert_array_equal(w.next_obs[:, 0], [1, 2, 3, 4, 99])


def test_sampled_window_ends_are_uniform_within_an_episode():
    buf = fill(ReplayBuffer(2), [10])
    batch = sample_batch(buf, 10_000, 4, np.random.default_rng(1))
    ends = [int(batch.obs[i, batch.valid_len[i] - 1, 0]) for i in range(len(batch))]
    counts = np.bincount(ends, minlength=10)
    assert chi_square(counts, np.full(10, 0.1)) < CHI2_999[9]


def test_episodes_are_sampled_uniformly_regardless_of_length():
    buf = fill(ReplayBuffer(2), [2, 9, 5])
    batch = sample_batch(buf, 9_000, 3, np.random.default_rng(2))
    counts = np.bincount(batch.obs[:, 0, 1].astype(int), minlength=3)
    assert chi_square(counts, np.full(3, 1 / 3)) < CHI2_999[2]


def test_empty_buffer_cannot_be_sampled():
    with pytest.raises(EmptyBufferError):
        sample_batch(ReplayBuffer(2), 4, 3)


def test_buffer_state_round_trip():
    buf = fill(ReplayBuffer(2, capacity=9), [4, 3, 6])
    record_step(buf, [50, 9], 1, 0.5, False)
    clone = ReplayBuffer.restore(buf.state(), buf.arrays())
    a = sample_batch(buf, 16, 5, np.random.default_rng(3))
    b = sample_batch(clone, 16, 5, np.random.default_rng(3))
    for name in ("obs", "actions", "rewards", "dones", "next_obs", "valid_len"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))


# ---------------------------------------------------------------------------
# targets and loss

CARDS = EncoderConfig(obs_width=6, action_count=4, embed_dim=16, heads=2, layers=1, context_length=6, sublayer="bigru")


def cards_buffer(episodes=30, seed=0):
    env = make_env("memorycards", seed=seed, pairs=2, max_episode_steps=6)
    rng = np.random.default_rng(seed)
    buf = ReplayBuffer(env.obs_width)
    for _ in range(episodes):
        obs, done = env.reset(), False
        while not done:
            action = int(rng.integers(env.action_count))
            res = env.step(action)
            buf.record(obs, action, res.reward, res.done, res.obs)
            obs, done = res.obs, res.done
    return buf


def single(obs, actions, rewards, dones, next_obs, valid_len):
    return TransitionSequence(
        np.asarray(obs, float)[None], np.asarray(actions)[None], np.asarray(rewards, np.float32)[None],
        np.asarray(dones)[None], np.asarray(next_obs, float)[None], np.array([valid_len]),
    )


class ConstantQ:
    """Stands in for a network: the same Q-vector at every position."""

    def __init__(self, q):
        self.q = np.asarray(q, dtype=np.float32)

    def __call__(self, obs, valid_len):
        class Out:
            pass

        out = Out()
        out.data = np.broadcast_to(self.q, obs.shape[:-1] + self.q.shape).copy()
        return out


def test_terminal_and_one_step_targets():
    batch = single(np.zeros((2, 1)), [0, 0], [0.0, 1.0], [False, True], np.zeros((2, 1)), 2)
    y = td_targets(batch, None, ConstantQ([2.0, -1.0]), 0.99)
    assert y[0, 0] == pytest.approx(1.98, rel=1e-6)
    assert y[0, 1] == 1.0


def test_targets_match_naive_loop():
    buf = cards_buffer()
    batch = buf.sample(8, 6, np.random.default_rng(4))
    target = QNetwork(CARDS, seed=1)
    y = td_targets(batch, None, target, 0.9)
    q_next = target(batch.next_obs, batch.valid_len).data
    for b in range(8):
        for t in range(6):
            if t >= batch.valid_len[b]:
                expect = 0.0
            elif batch.dones[b, t]:
                expect = batch.rewards[b, t]
            else:
                expect = np.float32(batch.rewards[b, t]) + np.float32(0.9) * np.float32(max(q_next[b, t]))
            assert y[b, t] == np.float32(expect)


def test_gamma_zero_targets_are_rewards():
    buf = cards_buffer()
    batch = buf.sample(16, 6, np.random.default_rng(5))
    with pytest.raises(ConfigError):
        TrainConfig(gamma=0.0)
    y = td_targets(batch, None, QNetwork(CARDS), 0.0)
    np.testing.assert_array_equal(y, np.where(batch.mask, batch.rewards, 0.0))


def test_collapsed_target_loss_is_mean_squared_q():
    buf = cards_buffer()
    batch = buf.sample(8, 6, np.random.default_rng(6))
    batch.rewards[...] = 0.0
    net = QNetwork(CARDS, seed=2)
    y = td_targets(batch, net, net, 0.0)
    loss = float(td_loss(net, batch, y).data)
    q = net(batch.obs, batch.valid_len).data
    taken = np.take_along_axis(q, batch.actions[..., None], -1)[..., 0]
    assert loss == pytest.approx(float((taken[batch.mask] ** 2).mean()), rel=1e-5)


def test_loss_ignores_padding_when_context_doubles():
    buf = cards_buffer()
    net, target = QNetwork(CARDS.replace(context_length=12), seed=3), QNetwork(CARDS.replace(context_length=12), seed=4)
    spans = buf.episode_spans()
    short = [buf.window(last, first, 6) for first, last in spans[:8]]
    long = [buf.window(last, first, 12) for first, last in spans[:8]]

    def stack(ws):
        return TransitionSequence(*(np.stack([getattr(w, f) for w in ws]) for f in
                                    ("obs", "actions", "rewards", "dones", "next_obs")),
                                  np.array([w.valid_len for w in ws]))

    losses = []
    for b in (stack(short), stack(long)):
        y = td_targets(b, net, target, 0.99)
        losses.append(float(td_loss(net, b, y).data))
    assert losses[0] == pytest.approx(losses[1], rel=1e-6)


def test_restricted_loss_uses_only_the_last_valid_position():
    batch = single(np.zeros((3, 6)), [0, 1, 2], [0, 0, 0], [False] * 3, np.zeros((3, 6)), 2)
    net = QNetwork(CARDS, seed=5)
    y = np.zeros((1, 3), np.float32)
    q = net(batch.obs, batch.valid_len).data
    assert float(td_loss(net, batch, y, restricted=True).data) == pytest.approx(float(q[0, 1, 1] ** 2), rel=1e-6)


# ---------------------------------------------------------------------------
# training step


def make_trainer(seed=0, **kw):
    online, target = QNetwork(CARDS, seed=seed), QNetwork(CARDS, seed=seed + 100)
    sync_target(online, target)
    return online, target, AdamState(), TrainConfig(**kw)


def test_train_step_reduces_loss_on_memory_cards():
    buf = cards_buffer(60)
    online, target, opt, cfg = make_trainer()
    probe = buf.sample(64, 6, np.random.default_rng(7))

    def probe_loss():
        return float(td_loss(online, probe, td_targets(probe, online, target, cfg.gamma)).data)

    before = probe_loss()
    rng = np.random.default_rng(8)
    for _ in range(200):
        train_step(online, target, buf, opt, cfg, rng)
    assert probe_loss() < before


def test_train_step_leaves_target_untouched():
    buf = cards_buffer()
    online, target, opt, cfg = make_trainer(1)
    before = target.checksum()
    rng = np.random.default_rng(9)
    for _ in range(5):
        train_step(online, target, buf, opt, cfg, rng)
    assert target.checksum() == before
    assert online.checksum() != before


def test_train_step_is_deterministic():
    buf = cards_buffer()
    runs = []
    for _ in range(2):
        online, target, opt, cfg = make_trainer(2)
        rng = np.random.default_rng(10)
        losses = [train_step(online, target, buf, opt, cfg, rng) for _ in range(5)]
        runs.append((losses, online.checksum()))
    assert runs[0] == runs[1]


def test_gradients_flow_only_from_valid_positions():
    buf = cards_buffer()
    net, target = QNetwork(CARDS, seed=6), QNetwork(CARDS, seed=7)
    batch = buf.sample(4, 6, np.random.default_rng(11))
    y = td_targets(batch, net, target, 0.99)
    grads = []
    for scale in (1.0, 50.0):
        b = TransitionSequence(batch.obs.copy(), batch.actions, batch.rewards, batch.dones, batch.next_obs, batch.valid_len)
        b.obs[~batch.mask] = scale
        for p in net.parameters().values():
            p.grad = None
        with Tape() as tape:
            tape.backward(td_loss(net, b, y))
        grads.append({k: p.grad.copy() for k, p in net.parameters().items()})
    for k in grads[0]:
        np.testing.assert_allclose(grads[0][k], grads[1][k], atol=1e-6, err_msg=k)


# ---------------------------------------------------------------------------
# exploration and target sync


def test_epsilon_schedule():
    cfg = TrainConfig(total_steps=1000, eps_fraction=0.1)
    assert epsilon_at(0, cfg) == 1.0
    assert epsilon_at(50, cfg) == pytest.approx(0.55)
    assert epsilon_at(100, cfg) == pytest.approx(0.1)
    assert epsilon_at(999, cfg) == pytest.approx(0.1)


def test_zero_epsilon_is_greedy():
    rng = np.random.default_rng(0)
    assert all(epsilon_greedy([0.2, 0.9, 0.1], 0.0, rng) == 1 for _ in range(200))
    with pytest.raises(ValueError):
        epsilon_greedy([0.0], 1.5, rng)


def test_full_epsilon_is_uniform():
    rng = np.random.default_rng(1)
    counts = np.bincount([epsilon_greedy([0.0, 5.0, 1.0, 2.0, 3.0], 1.0, rng) for _ in range(10_000)], minlength=5)
    assert chi_square(counts, np.full(5, 0.2)) < CHI2_999[4]


def test_half_epsilon_mixture_frequency():
    rng = np.random.default_rng(2)
    freq = np.mean([epsilon_greedy([1.0, 0.0], 0.5, rng) == 0 for _ in range(10_000)])
    assert abs(freq - 0.75) <= 0.02


def test_sync_copies_and_decouples():
    online, target = QNetwork(CARDS, seed=1), QNetwork(CARDS, seed=2)
    sync_target(online, target)
    assert online.checksum() == target.checksum()
    obs = np.random.default_rng(3).normal(size=(3, 6, 6))
    np.testing.assert_array_equal(online(obs, 6).data, target(obs, 6).data)
    frozen = target.checksum()
    online.head.out.w.data += 1.0
    assert target.checksum() == frozen
    with pytest.raises(ConfigError):
        sync_target(online, QNetwork(CARDS.replace(embed_dim=32)))


def test_train_config_validation_and_round_trip():
    cfg = TrainConfig(total_steps=10, batch_size=4, loss="huber")
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
    for bad in (dict(batch_size=0), dict(gamma=1.5), dict(lr=0.0), dict(loss="l1"), dict(eps_end=2.0)):
        with pytest.raises(ConfigError):
            TrainConfig(**bad)
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"momentum": 0.9})
