"""Run configuration and its flat ``key = value`` file format.

Lines are ``key = value``; blank lines and ``#`` comments are ignored.
Keys prefixed ``synth_`` configure the synthetic corpus generator.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Union


class ConfigError(ValueError):
    pass


@dataclass
class SyntheticSpec:
    n_users: int = 200
    n_news: int = 500
    comments_min: int = 15
    comments_max: int = 35
    ability_log_mean: float = 0.5
    ability_log_sd: float = 1.0
    difficulty_mean: float = 0.0
    difficulty_sd: float = 1.0
    q_m: float = 0.7
    q_c: float = 0.7
    disjoint: bool = True
    fake_fraction: float = 0.5
    tokens_min: int = 12
    tokens_max: int = 30
    signal_rate: float = 0.3
    vocab_signal: int = 60
    vocab_neutral: int = 3000
    seed: int = 7

    def validate(self) -> None:
        if min(self.n_users, self.n_news, self.comments_min, self.tokens_min) < 1:
            raise ConfigError("synthetic counts must be positive")
        if self.comments_max < self.comments_min or self.tokens_max < self.tokens_min:
            raise ConfigError("synthetic ranges must satisfy min <= max")
        if self.comments_max > self.n_users:
            raise ConfigError("comments_max cannot exceed n_users")
        for name in ("q_m", "q_c", "fake_fraction", "signal_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.ability_log_sd < 0 or self.difficulty_sd < 0:
            raise ConfigError("spreads must be nonnegative")


@dataclass
class RahiConfig:
    # machine classifier
    dim: int = 4096
    hidden: int = 64
    dropout_rate: float = 0.5
    n_passes: int = 50
    machine_lr: float = 2.0
    machine_batch: int = 16
    # crowd reliabilities
    crowd_lr: float = 5.0
    crowd_steps: int = 10
    eps: float = 1e-6
    c_min: float = 0.01
    alpha_min: float = 0.05
    adjust: bool = True
    # fusion encoder
    fusion_hidden: int = 16
    fusion_lr: float = 0.01
    fusion_steps: int = 25
    fusion_augment: int = 256
    samples_per_side: int = 64
    delta: float = 1e-4
    fused_form: str = "gaussian"
    # schedule
    epochs: int = 20
    patience: int = 5
    split: str = "7:2:1"
    # data and reporting
    activity_threshold: int = 5
    activity_mode: str = "exclude"
    tie_rule: str = "fake"
    metric_mode: str = "macro"
    seed: int = 7
    synth: SyntheticSpec = field(default_factory=SyntheticSpec)

    def split_ratios(self) -> tuple[float, float, float]:
        try:
            parts = [float(p) for p in self.split.split(":")]
        except ValueError as exc:
            raise ConfigError(f"bad split {self.split!r}") from exc
        if len(parts) != 3 or min(parts) < 0 or parts[0] <= 0:
            raise ConfigError(f"bad split {self.split!r}")
        total = sum(parts)
        return parts[0] / total, parts[1] / total, parts[2] / total

    def validate(self) -> None:
        if self.dim < 1 or self.dim & (self.dim - 1):
            raise ConfigError("dim must be a power of two")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must lie in [0, 1)")
        if min(self.hidden, self.n_passes, self.machine_batch, self.fusion_hidden, self.samples_per_side) < 1:
            raise ConfigError("sizes must be positive")
        if min(self.machine_lr, self.crowd_lr, self.fusion_lr) < 0:
            raise ConfigError("learning rates must be nonnegative")
        if self.fused_form not in ("gaussian", "uniform"):
            raise ConfigError("fused_form must be gaussian or uniform")
        if self.tie_rule not in ("fake", "true"):
            raise ConfigError("tie_rule must be fake or true")
        if self.metric_mode not in ("macro", "binary"):
            raise ConfigError("metric_mode must be macro or binary")
        if self.activity_mode not in ("exclude", "count-in-denominator"):
            raise ConfigError("activity_mode must be exclude or count-in-denominator")
        if not 0.0 < self.eps < 0.5 or not 0.0 < self.delta < 0.5:
            raise ConfigError("eps and delta must lie in (0, 0.5)")
        self.split_ratios()
        self.synth.validate()


def _coerce(raw: str, typ, key: str):
    try:
        if typ is bool:
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


_TYPES = {"int": int, "float": float, "bool": bool, "str": str}


def _types(cls) -> dict:
    return {f.name: _TYPES.get(f.type, f.type) for f in fields(cls) if f.name != "synth"}


def parse_config(text: str) -> RahiConfig:
    cfg = RahiConfig()
    top, synth = _types(RahiConfig), _types(SyntheticSpec)
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (p.strip() for p in line.split("=", 1))
        if key.startswith("synth_") and key[6:] in synth:
            setattr(cfg.synth, key[6:], _coerce(raw, synth[key[6:]], key))
        elif key in top:
            setattr(cfg, key, _coerce(raw, top[key], key))
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    cfg.validate()
    return cfg


def load_config(path: Union[str, Path, None]) -> RahiConfig:
    if path is None:
        return RahiConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def dump_config(cfg: RahiConfig) -> str:
    lines = [f"{k} = {v}" for k, v in dataclasses.asdict(cfg).items() if k != "synth"]
    lines += [f"synth_{k} = {v}" for k, v in dataclasses.asdict(cfg.synth).items()]
    return "\n".join(lines) + "\n"
