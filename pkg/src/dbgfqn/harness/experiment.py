"""Experiment driver: config -> environment -> trainer -> metrics and checkpoints."""
from __future__ import annotations

import contextlib
import json
import os
import pickle
from collections import deque
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from ..environments import make_env
from ..environments.base import PomdpEnv
from ..model_zoo import VARIANTS, ConfigError, EncoderConfig, QNetwork, select_action
from ..rl_training import ReplayBuffer, TrainConfig, epsilon_at, sync_target, train_step
from ..tensor_core import AdamState, load_archive, save_archive
from .metrics import MetricsRecord, MetricsWriter, running_success_rate

# embedding width per environment; everything else uses 128
ENV_EMBED_DIM = {"carflag": 64, "hallway": 64, "heavenhell": 64}
LOSS_EMA = 0.01


def default_model(env: str, obs_width: int, action_count: int, variant: str = "dbgfqn",
                  ffn_layers: Optional[int] = None, **overrides) -> EncoderConfig:
    fields_ = dict(obs_width=obs_width, action_count=action_count, embed_dim=ENV_EMBED_DIM.get(env, 128))
    if ffn_layers is not None:
        fields_["ffn_layers"] = ffn_layers
    fields_.update(overrides)
    return EncoderConfig.for_variant(variant, **fields_)


def check_compatible(env: PomdpEnv, model: EncoderConfig) -> None:
    if env.obs_width != model.obs_width:
        raise ConfigError(
            f"environment {env.name!r} emits observations of width {env.obs_width} "
            f"but the model config has obs_width {model.obs_width}"
        )
    if env.action_count != model.action_count:
        raise ConfigError(
            f"environment {env.name!r} has {env.action_count} actions "
            f"but the model config has action_count {model.action_count}"
        )


@dataclass
class ExperimentConfig:
    env: str
    model: EncoderConfig
    train: TrainConfig = field(default_factory=TrainConfig)
    env_kwargs: dict = field(default_factory=dict)
    seeds: Sequence[int] = (0,)
    out_dir: str = "runs/experiment"
    checkpoint_every: int = 0  # steps; 0 disables
    deterministic: bool = False
    success_window: int = 100
    stop_at_success: Optional[float] = None  # end a seed early once the full-window rate reaches this

    @classmethod
    def create(cls, env: str, variant: str = "dbgfqn", ffn_layers: Optional[int] = None,
               model_overrides: Optional[dict] = None, env_kwargs: Optional[dict] = None, **kwargs):
        """Config with the model shaped to the environment's observation/action spaces."""
        probe = make_env(env, **(env_kwargs or {}))
        model = default_model(env, probe.obs_width, probe.action_count, variant, ffn_layers,
                              **(model_overrides or {}))
        return cls(env=env, model=model, env_kwargs=dict(env_kwargs or {}), **kwargs)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["model"] = self.model.to_dict()
        out["train"] = self.train.to_dict()
        out["seeds"] = list(self.seeds)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        known = {"env", "model", "train", "env_kwargs", "seeds", "out_dir", "checkpoint_every",
                 "deterministic", "success_window", "stop_at_success"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown experiment keys: {sorted(unknown)}")
        env_kwargs = data.get("env_kwargs", {}) or {}
        model = dict(data.get("model", {}))
        if "obs_width" not in model or "action_count" not in model:
            probe = make_env(data["env"], **env_kwargs)
            model.setdefault("obs_width", probe.obs_width)
            model.setdefault("action_count", probe.action_count)
        model.setdefault("embed_dim", ENV_EMBED_DIM.get(data["env"], 128))
        if "variant" in model:
            model["sublayer"] = VARIANTS[model.pop("variant").lower()]
        data["model"] = EncoderConfig.from_dict(model)
        data["train"] = TrainConfig.from_dict(data.get("train", {}))
        data["seeds"] = tuple(data.get("seeds", (0,)))
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@contextlib.contextmanager
def thread_limits(deterministic: bool = False):
    """Cap BLAS threads: 1 in determinism mode, else ``DBGFQN_THREADS`` if set."""
    limit = 1 if deterministic else os.environ.get("DBGFQN_THREADS")
    if limit is None:
        yield
    else:
        with threadpool_limits(limits=int(limit)):
            yield


# ---------------------------------------------------------------------------
# a single-seed training run


class Run:
    """All mutable state of one seed's training; checkpoints capture exactly this."""

    def __init__(self, cfg: ExperimentConfig, seed: int):
        self.cfg = cfg
        self.seed = seed
        init_ss, env_ss, agent_ss, eval_ss = np.random.SeedSequence(seed).spawn(4)
        self.env = make_env(cfg.env, seed=int(env_ss.generate_state(1)[0]), **cfg.env_kwargs)
        check_compatible(self.env, cfg.model)
        self.eval_env = make_env(cfg.env, seed=int(eval_ss.generate_state(1)[0]), **cfg.env_kwargs)
        self.online = QNetwork(cfg.model, np.random.default_rng(init_ss), dtype=np.float32)
        self.target = QNetwork(cfg.model, 0, dtype=np.float32)
        sync_target(self.online, self.target)
        self.opt = AdamState(lr=cfg.train.lr)
        self.buffer = ReplayBuffer(cfg.model.obs_width, min(cfg.train.buffer_capacity, max(cfg.train.total_steps, 1)))
        self.rng = np.random.default_rng(agent_ss)
        self.step = 0
        self.episode = 0
        self.flags: list[bool] = []
        self.loss_ema: Optional[float] = None
        self.history: deque = deque(maxlen=cfg.model.context_length)
        self.obs: Optional[np.ndarray] = None
        self.ep_return = 0.0
        self.stopped = False

    # acting ---------------------------------------------------------------
    def act(self, epsilon: float) -> int:
        # same draws as epsilon_greedy, but the network only runs when needed
        if self.rng.random() < epsilon:
            return int(self.rng.integers(self.env.action_count))
        window = np.asarray(self.history)
        q = self.online(window, len(window)).data
        return select_action(q[-1])

    def epsilon(self) -> float:
        if self.step < self.cfg.train.warmup_steps:
            return 1.0
        return epsilon_at(self.step, self.cfg.train)

    def advance(self, writer: Optional[MetricsWriter]) -> None:
        """One environment step plus whatever training it triggers."""
        tc = self.cfg.train
        if self.obs is None:
            self.obs = self.env.reset()
            self.history.clear()
            self.history.append(self.obs)
            self.ep_return = 0.0
        eps = self.epsilon()
        action = self.act(eps)
        next_obs, reward, done, success = self.env.step(action)
        self.buffer.record(self.obs, action, reward, done, next_obs)
        self.ep_return += reward
        self.step += 1
        if self.step > tc.warmup_steps and self.step % tc.train_every == 0:
            loss = train_step(self.online, self.target, self.buffer, self.opt, tc, self.rng)
            self.loss_ema = loss if self.loss_ema is None else (1 - LOSS_EMA) * self.loss_ema + LOSS_EMA * loss
        if self.step % tc.target_sync_period == 0:
            sync_target(self.online, self.target)
        if done:
            self.flags.append(bool(success))
            rate = running_success_rate(self.flags, self.cfg.success_window)
            rec = MetricsRecord(self.step, self.episode, float(self.ep_return), bool(success), rate, float(eps),
                                None if self.loss_ema is None else float(self.loss_ema))
            if writer is not None:
                writer.write(rec)
            self.episode += 1
            self.obs = None
            stop = self.cfg.stop_at_success
            if stop is not None and len(self.flags) >= self.cfg.success_window and rate >= stop:
                self.stopped = True
        else:
            self.obs = next_obs
            self.history.append(next_obs)

    def greedy_eval(self, episodes: int) -> tuple[float, float]:
        """Mean success and return of greedy episodes on the separate evaluation env."""
        wins, total = 0, 0.0
        hist: deque = deque(maxlen=self.cfg.model.context_length)
        for _ in range(episodes):
            hist.clear()
            hist.append(self.eval_env.reset())
            done = False
            while not done:
                window = np.asarray(hist)
                a = select_action(self.online(window, len(window)).data[-1])
                obs, r, done, success = self.eval_env.step(a)
                hist.append(obs)
                total += r
            wins += success
        return wins / episodes, total / episodes

    # checkpoints ----------------------------------------------------------
    def save(self, directory) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        arrays = {f"online/{k}": v for k, v in self.online.state_dict().items()}
        arrays.update({f"target/{k}": v for k, v in self.target.state_dict().items()})
        arrays.update({f"adam/{k}": v for k, v in self.opt.arrays().items()})
        arrays.update({f"buffer/{k}": v for k, v in self.buffer.arrays().items()})
        save_archive(directory / "tensors.npz", arrays)
        state = {
            "seed": self.seed, "step": self.step, "episode": self.episode, "flags": self.flags,
            "loss_ema": self.loss_ema, "history": list(self.history), "obs": self.obs, "ep_return": self.ep_return,
            "rng": self.rng.bit_generator.state, "adam_step": self.opt.step, "buffer": self.buffer.state(),
            "env": self.env.get_state(), "eval_env": self.eval_env.get_state(), "stopped": self.stopped,
        }
        tmp = directory / "state.pkl.tmp"
        with tmp.open("wb") as fh:
            pickle.dump(state, fh)
        tmp.replace(directory / "state.pkl")
        return directory

    @classmethod
    def load(cls, cfg: ExperimentConfig, directory) -> "Run":
        directory = Path(directory)
        with (directory / "state.pkl").open("rb") as fh:
            state = pickle.load(fh)
        run = cls(cfg, state["seed"])
        arrays = load_archive(directory / "tensors.npz")
        group = lambda prefix: {k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)}
        run.online.load_state_dict(group("online/"))
        run.target.load_state_dict(group("target/"))
        run.opt.load_arrays(group("adam/"))
        run.opt.step = state["adam_step"]
        run.buffer = ReplayBuffer.restore(state["buffer"], group("buffer/"))
        run.rng.bit_generator.state = state["rng"]
        run.env.set_state(state["env"])
        run.eval_env.set_state(state["eval_env"])
        run.step, run.episode, run.flags = state["step"], state["episode"], list(state["flags"])
        run.loss_ema, run.obs, run.ep_return = state["loss_ema"], state["obs"], state["ep_return"]
        run.history.extend(state["history"])
        run.stopped = state["stopped"]
        return run


def _paths(cfg: ExperimentConfig, seed: int) -> dict:
    out = Path(cfg.out_dir)
    return {
        "metrics": out / f"metrics_seed{seed}.csv",
        "eval": out / f"eval_seed{seed}.csv",
        "checkpoint": out / "checkpoints" / f"seed{seed}",
    }


def train_seed(cfg: ExperimentConfig, seed: int, resume: bool = False, stop_after: Optional[int] = None) -> dict:
    """Train one seed; ``stop_after`` halts early (as an interruption would) without finishing."""
    paths = _paths(cfg, seed)
    ckpt = paths["checkpoint"]
    if resume and (ckpt / "state.pkl").exists():
        run = Run.load(cfg, ckpt)
        writer = MetricsWriter(paths["metrics"], truncate_to=run.episode)
    else:
        run = Run(cfg, seed)
        if paths["metrics"].exists():
            paths["metrics"].unlink()
        writer = MetricsWriter(paths["metrics"])
    tc = cfg.train
    eval_fh = None
    if tc.eval_every:
        fresh = not paths["eval"].exists() or not resume
        eval_fh = paths["eval"].open("w" if fresh else "a")
        if fresh:
            eval_fh.write("global_step,greedy_success_rate,greedy_return\n")
    try:
        while run.step < tc.total_steps and not run.stopped:
            if stop_after is not None and run.step >= stop_after:
                break
            run.advance(writer)
            if cfg.checkpoint_every and run.step % cfg.checkpoint_every == 0:
                run.save(ckpt)
            if eval_fh is not None and run.step % tc.eval_every == 0:
                success, ret = run.greedy_eval(tc.eval_episodes)
                eval_fh.write(f"{run.step},{success!r},{ret!r}\n")
                eval_fh.flush()
    finally:
        writer.close()
        if eval_fh is not None:
            eval_fh.close()
    return summarize_seed(run, cfg.success_window)


def summarize_seed(run: Run, window: int) -> dict:
    rates = [running_success_rate(run.flags[: i + 1], window) for i in range(len(run.flags))]
    full = rates[window - 1:] if len(rates) >= window else rates
    return {
        "steps": run.step,
        "episodes": run.episode,
        "final": rates[-1] if rates else 0.0,
        "best": max(full) if full else 0.0,
        "stopped_early": run.stopped,
    }


def run_experiment(cfg: ExperimentConfig, resume: bool = False) -> dict:
    """Train every seed; returns per-seed final/best running success and their means.

    ``best`` only considers points with a full success window when one exists.
    """
    Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
    (Path(cfg.out_dir) / "config.json").write_text(cfg.to_json())
    per_seed = {}
    with thread_limits(cfg.deterministic):
        for seed in cfg.seeds:
            per_seed[seed] = train_seed(cfg, seed, resume=resume)
    finals = [s["final"] for s in per_seed.values()]
    bests = [s["best"] for s in per_seed.values()]
    return {
        "seeds": per_seed,
        "mean_final": float(np.mean(finals)) if finals else 0.0,
        "mean_best": float(np.mean(bests)) if bests else 0.0,
    }


def evaluate_checkpoint(cfg: ExperimentConfig, directory, episodes: int = 10) -> tuple[float, float]:
    run = Run.load(cfg, directory)
    return run.greedy_eval(episodes)


def with_steps(cfg: ExperimentConfig, steps: int) -> ExperimentConfig:
    return replace(cfg, train=replace(cfg.train, total_steps=steps))
