"""Experiment configuration: an INI document with [env], [moa], [train], [theorem] and [output] sections.

Example::

    [env]
    kind = conflict
    noise_std = 0.1

    [moa]
    beta = 10

    [train]
    strategies = MoaGrpo, UniformGrpo
    steps = 500
    seeds = 0, 1, 2

    [output]
    path = results.csv
    format = csv

See ``docs/config.md`` for every key and its default.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .advantage import Strategy
from .simulator import OPTIMIZERS, BanditEnv, EnvKind, conflict_env, orthogonal_env
from .types import MoaConfig, MoaError


class ConfigError(MoaError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class EnvSpec:
    kind: EnvKind = EnvKind.CONFLICT
    table: tuple[tuple[float, ...], ...] | None = None
    num_actions: int = 8
    n_dims: int = 3
    table_seed: int | None = None
    noise_std: float | None = None
    amplitudes: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4)
    block_size: int = 4

    def build(self) -> BanditEnv:
        if self.kind is EnvKind.ORTHOGONAL:
            env = orthogonal_env(self.amplitudes, self.block_size)
            return replace(env, noise_std=self.noise_std or 0.0)
        if self.kind is EnvKind.CONFLICT:
            if self.noise_std is None:
                return conflict_env(self.table)
            return conflict_env(self.table, self.noise_std)
        if self.table is not None:
            table = np.array(self.table, dtype=float)
        else:
            rng = np.random.default_rng(self.table_seed or 0)
            table = rng.uniform(0.0, 1.0, size=(self.num_actions, self.n_dims))
        return BanditEnv(table, EnvKind.CUSTOM, self.noise_std or 0.0)


@dataclass(frozen=True)
class TheoremSpec:
    betas: tuple[float, ...] = (0.01, 0.05)
    trials: int = 10_000
    c: float = 1.0
    sigma_xi: float | None = None
    sigma_xi_rel: float = 0.05
    eta: float = 1.0


@dataclass(frozen=True)
class ExperimentConfig:
    env: EnvSpec = field(default_factory=EnvSpec)
    strategies: tuple[Strategy, ...] = (Strategy.MOA_GRPO,)
    steps: int = 100
    group_size: int = 16
    groups_per_step: int = 12
    off_policy_count: int = 1
    eta: float = 0.05
    optimizer: str = "sgd"
    expert_temperature: float = 0.05
    seeds: tuple[int, ...] = (0,)
    moa: MoaConfig = field(default_factory=MoaConfig)
    theorem: TheoremSpec = field(default_factory=TheoremSpec)
    output_path: str | None = None
    output_format: str = "csv"
    smooth: bool = False

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Replace the first seed (the ``--seed`` override)."""
        return replace(self, seeds=(int(seed),) + tuple(s for s in self.seeds[1:] if s != seed))


def _bool(v: str) -> bool:
    s = v.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _floats(v: str) -> tuple[float, ...]:
    return tuple(float(x) for x in v.replace(",", " ").split())


def _ints(v: str) -> tuple[int, ...]:
    return tuple(int(x) for x in v.replace(",", " ").split())


def _table(v: str) -> tuple[tuple[float, ...], ...]:
    rows = [r for r in v.replace("\n", ";").split(";") if r.strip()]
    return tuple(_floats(r) for r in rows)


_ENV_KEYS: dict[str, Callable] = {
    "kind": lambda v: EnvKind(v.strip().lower()),
    "table": _table,
    "num_actions": int,
    "n_dims": int,
    "table_seed": int,
    "noise_std": float,
    "amplitudes": _floats,
    "block_size": int,
}
_MOA_KEYS: dict[str, Callable] = {
    "beta": float,
    "history_capacity": int,
    "adv_epsilon": float,
    "clip_range": float,
    "min_history_for_trend": int,
    "singleton_chain_fallback": _bool,
}
_TRAIN_KEYS: dict[str, Callable] = {
    "strategies": lambda v: tuple(Strategy.parse(s.strip()) for s in v.split(",") if s.strip()),
    "strategy": lambda v: (Strategy.parse(v.strip()),),
    "steps": int,
    "group_size": int,
    "groups_per_step": int,
    "off_policy_count": int,
    "eta": float,
    "optimizer": lambda v: v.strip().lower(),
    "expert_temperature": float,
    "seeds": _ints,
    "seed": lambda v: (int(v),),
}
_THEOREM_KEYS: dict[str, Callable] = {
    "betas": _floats,
    "trials": int,
    "c": float,
    "sigma_xi": float,
    "sigma_xi_rel": float,
    "eta": float,
}
_OUTPUT_KEYS: dict[str, Callable] = {
    "path": str,
    "format": lambda v: v.strip().lower(),
    "smooth": _bool,
}
_SECTIONS = {
    "env": _ENV_KEYS,
    "moa": _MOA_KEYS,
    "train": _TRAIN_KEYS,
    "theorem": _THEOREM_KEYS,
    "output": _OUTPUT_KEYS,
}


def _read_sections(text: str) -> dict[str, dict[str, object]]:
    parser = configparser.ConfigParser(interpolation=None, strict=True)
    try:
        parser.read_string(text)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"{exc.section}.{exc.option}", "duplicate key") from exc
    except configparser.Error as exc:
        raise ConfigError("document", str(exc)) from exc
    values: dict[str, dict[str, object]] = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(section, "unknown section")
        keys = _SECTIONS[section]
        values[section] = {}
        for key, raw in parser.items(section):
            if key not in keys:
                raise ConfigError(f"{section}.{key}", "unknown key")
            try:
                values[section][key] = keys[key](raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(key, f"bad value {raw!r} ({exc})") from exc
    return values


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a configuration document, filling in defaults."""
    v = _read_sections(text)
    env_v, moa_v, train_v = v.get("env", {}), v.get("moa", {}), v.get("train", {})
    th_v, out_v = v.get("theorem", {}), v.get("output", {})

    env = EnvSpec(**env_v)
    if env.table is not None and len({len(r) for r in env.table}) != 1:
        raise ConfigError("table", "rows have differing lengths")
    if env.noise_std is not None and env.noise_std < 0:
        raise ConfigError("noise_std", "must be >= 0")

    moa_fields = {}
    for key, val in moa_v.items():
        try:
            MoaConfig(**{key: val})
        except MoaError as exc:
            raise ConfigError(key, str(exc)) from exc
        moa_fields[key] = val
    moa = MoaConfig(**moa_fields)

    train = dict(train_v)
    if "strategy" in train:
        if "strategies" in train:
            raise ConfigError("strategy", "give either strategy or strategies, not both")
        train["strategies"] = train.pop("strategy")
    if "seed" in train:
        if "seeds" in train:
            raise ConfigError("seed", "give either seed or seeds, not both")
        train["seeds"] = train.pop("seed")

    seeds = train.get("seeds", (0,))
    if not seeds:
        raise ConfigError("seeds", "at least one seed is required")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seeds", "duplicate seeds")
    if "strategies" in train and not train["strategies"]:
        raise ConfigError("strategies", "at least one strategy is required")
    for key in ("steps", "group_size", "groups_per_step"):
        if key in train and train[key] < 1:
            raise ConfigError(key, "must be >= 1")
    group_size = train.get("group_size", 16)
    off = train.get("off_policy_count", 1)
    if not 0 <= off < group_size:
        raise ConfigError("off_policy_count", "must satisfy 0 <= off_policy_count < group_size")
    if train.get("eta", 1.0) <= 0:
        raise ConfigError("eta", "must be > 0")
    if train.get("optimizer", "sgd") not in OPTIMIZERS:
        raise ConfigError("optimizer", f"choose from {sorted(OPTIMIZERS)}")

    theorem = TheoremSpec(**th_v)
    if theorem.trials < 1:
        raise ConfigError("trials", "must be >= 1")
    if any(b < 0 for b in theorem.betas):
        raise ConfigError("betas", "must be >= 0")

    fmt = out_v.get("format", "csv")
    if fmt not in ("csv", "jsonl"):
        raise ConfigError("format", "must be csv or jsonl")

    return ExperimentConfig(
        env=env,
        moa=moa,
        theorem=theorem,
        output_path=out_v.get("path"),
        output_format=fmt,
        smooth=out_v.get("smooth", False),
        **train,
    )


def load_config(path: str) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
