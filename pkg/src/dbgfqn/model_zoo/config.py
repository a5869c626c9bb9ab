from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from typing import Optional

SUBLAYERS = ("ffn", "rnn", "lstm", "gru", "birnn", "bilstm", "bigru")
BIDIRECTIONAL = frozenset({"birnn", "bilstm", "bigru"})
GATES_PER_CELL = {"rnn": 1, "gru": 3, "lstm": 4}

# model family name -> sublayer variant
VARIANTS = {
    "dtqn": "ffn",
    "drfqn": "rnn",
    "dlfqn": "lstm",
    "dgfqn": "gru",
    "dbrfqn": "birnn",
    "dblfqn": "bilstm",
    "dbgfqn": "bigru",
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EncoderConfig:
    """Architecture of a Q-network.

    ``ffn_expansion`` is the hidden-width multiplier of the feed-forward
    sublayer and ``ffn_layers`` the number of (linear + ReLU) hidden stages;
    ``ffn_layers=0`` gives a single D->D linear map. ``recurrent_hidden``
    defaults to D for uni-directional and D/2 for bi-directional sublayers.
    ``obs_vocab`` switches the observation embedding from a linear map to a
    per-dimension lookup table (``embed_per_obs_dim`` wide) followed by a linear
    map, for integer-coded observations.
    """

    obs_width: int
    action_count: int
    embed_dim: int = 128
    heads: int = 8
    layers: int = 2
    context_length: int = 50
    sublayer: str = "bigru"
    ffn_expansion: int = 4
    ffn_layers: int = 1
    recurrent_hidden: Optional[int] = None
    head_hidden: bool = False
    obs_vocab: Optional[int] = None
    embed_per_obs_dim: int = 8
    ln_eps: float = 1e-5

    def __post_init__(self):
        if self.sublayer not in SUBLAYERS:
            raise ConfigError(f"unknown sublayer {self.sublayer!r}; expected one of {SUBLAYERS}")
        for name in ("obs_width", "action_count", "embed_dim", "heads", "layers", "context_length"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.embed_dim % self.heads:
            raise ConfigError(f"embed_dim {self.embed_dim} is not divisible by heads {self.heads}")
        if self.recurrent_hidden is None:
            hidden = self.embed_dim // 2 if self.bidirectional else self.embed_dim
            object.__setattr__(self, "recurrent_hidden", hidden)
        if self.sublayer != "ffn":
            if self.bidirectional and 2 * self.recurrent_hidden != self.embed_dim:
                raise ConfigError(
                    f"bi-directional sublayer needs 2*recurrent_hidden == embed_dim, "
                    f"got 2*{self.recurrent_hidden} != {self.embed_dim}"
                )
            if not self.bidirectional and self.recurrent_hidden != self.embed_dim:
                raise ConfigError(
                    f"uni-directional sublayer needs recurrent_hidden == embed_dim, "
                    f"got {self.recurrent_hidden} != {self.embed_dim}"
                )
        if self.ffn_layers < 0 or self.ffn_expansion < 1:
            raise ConfigError("ffn_layers must be >= 0 and ffn_expansion >= 1")
        if self.obs_vocab is not None and self.obs_vocab < 1:
            raise ConfigError(f"obs_vocab must be positive, got {self.obs_vocab}")

    @property
    def bidirectional(self) -> bool:
        return self.sublayer in BIDIRECTIONAL

    @property
    def recurrent(self) -> bool:
        return self.sublayer != "ffn"

    @property
    def cell(self) -> str:
        return self.sublayer[2:] if self.bidirectional else self.sublayer

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.heads

    @classmethod
    def for_variant(cls, variant: str, **kwargs) -> "EncoderConfig":
        try:
            sublayer = VARIANTS[variant.lower()]
        except KeyError:
            raise ConfigError(f"unknown variant {variant!r}; expected one of {sorted(VARIANTS)}") from None
        return cls(sublayer=sublayer, **kwargs)

    def replace(self, **changes) -> "EncoderConfig":
        if "sublayer" in changes and "recurrent_hidden" not in changes:
            changes["recurrent_hidden"] = None
        if "embed_dim" in changes and "recurrent_hidden" not in changes:
            changes["recurrent_hidden"] = None
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "EncoderConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown EncoderConfig keys: {sorted(unknown)}")
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EncoderConfig":
        return cls.from_dict(json.loads(text))
