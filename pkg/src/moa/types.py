"""Shared value types, input validation and the rolling reward-history buffer."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class MoaError(ValueError):
    """Base class for errors raised by this package."""


class HistoryOrderError(MoaError):
    """A history entry was pushed with a step not after the last stored one."""


class DimensionMismatchError(MoaError):
    pass


class InsufficientDataError(MoaError):
    """Too few points or rollouts for the requested statistic."""


def check_reward_matrix(R) -> np.ndarray:
    """Validate a G x D reward matrix and return it as a float array.

    A 1-D input is read as a single-dimension reward column (G x 1).
    """
    R = np.asarray(R, dtype=float)
    if R.ndim == 1:
        R = R.reshape(-1, 1)
    if R.ndim != 2:
        raise DimensionMismatchError(f"reward matrix must be 2-D, got shape {R.shape}")
    if R.shape[0] < 1 or R.shape[1] < 1:
        raise MoaError(f"reward matrix needs G >= 1 and D >= 1, got shape {R.shape}")
    if not np.isfinite(R).all():
        raise MoaError("reward matrix contains non-finite values")
    return R


def check_vector(v, length: int | None = None, name: str = "vector") -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise DimensionMismatchError(f"{name} must be 1-D, got shape {v.shape}")
    if length is not None and v.shape[0] != length:
        raise DimensionMismatchError(f"{name} has length {v.shape[0]}, expected {length}")
    if not np.all(np.isfinite(v)):
        raise MoaError(f"{name} contains non-finite values")
    return v


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class HistoryBuffer:
    """The K most recent per-step mean reward vectors, oldest first.

    Instances are immutable; :func:`push_history` returns a new buffer.
    """

    capacity: int = 8
    entries: tuple[tuple[int, np.ndarray], ...] = ()

    def __post_init__(self):
        if int(self.capacity) < 1:
            raise MoaError("history capacity must be a positive integer")
        if len(self.entries) > self.capacity:
            raise MoaError("history holds more entries than its capacity")
        steps = [s for s, _ in self.entries]
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise HistoryOrderError("history steps must be strictly increasing")
        dims = {v.shape[0] for _, v in self.entries}
        if len(dims) > 1:
            raise DimensionMismatchError("history entries have differing dimensions")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def n_dims(self) -> int | None:
        return self.entries[0][1].shape[0] if self.entries else None

    @property
    def steps(self) -> list[int]:
        return [s for s, _ in self.entries]

    @property
    def last_step(self) -> int | None:
        return self.entries[-1][0] if self.entries else None

    def as_array(self) -> np.ndarray:
        """Stored means as a (len, D) array."""
        if not self.entries:
            return np.empty((0, 0))
        return np.vstack([v for _, v in self.entries])


def push_history(buffer: HistoryBuffer, step: int, means) -> HistoryBuffer:
    """Append ``(step, means)``, evicting the oldest entry when over capacity."""
    step = int(step)
    means = check_vector(means, buffer.n_dims, name="means")
    if buffer.last_step is not None and step <= buffer.last_step:
        raise HistoryOrderError(
            f"step {step} is not after the last stored step {buffer.last_step}"
        )
    entries = buffer.entries + ((step, _frozen(means)),)
    return HistoryBuffer(buffer.capacity, entries[-buffer.capacity:])


def history_column(buffer: HistoryBuffer, d: int) -> list[tuple[int, float]]:
    """Return ``[(step, mean_d), ...]`` for dimension ``d`` in step order."""
    if not buffer.entries:
        if d < 0:
            raise IndexError(f"dimension index {d} out of range")
        return []
    D = buffer.n_dims
    if not 0 <= d < D:
        raise IndexError(f"dimension index {d} out of range for D={D}")
    return [(s, float(v[d])) for s, v in buffer.entries]


@dataclass(frozen=True)
class WeightVector:
    weights: np.ndarray
    pivot: int

    def __post_init__(self):
        w = _frozen(self.weights)
        object.__setattr__(self, "weights", w)
        if w.ndim != 1 or w.size == 0:
            raise DimensionMismatchError("weights must be a non-empty 1-D vector")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise MoaError("weights must be nonnegative and sum to 1")
        if not 0 <= self.pivot < w.size or w[self.pivot] < w.max():
            raise MoaError("pivot must index a maximal weight")

    @classmethod
    def uniform(cls, D: int) -> "WeightVector":
        return cls(np.full(D, 1.0 / D), 0)

    @classmethod
    def one_hot(cls, D: int, d: int) -> "WeightVector":
        w = np.zeros(D)
        w[d] = 1.0
        return cls(w, d)

    def __len__(self) -> int:
        return self.weights.size


class Origin(enum.Enum):
    ON_POLICY = "on"
    OFF_POLICY = "off"


@dataclass(frozen=True)
class GroupSample:
    """One rollout: the action taken, its reward vector and who produced it."""

    action: int
    rewards: np.ndarray
    origin: Origin
    behavior_prob: float

    def __post_init__(self):
        object.__setattr__(self, "rewards", _frozen(self.rewards))
        if not 0.0 < self.behavior_prob <= 1.0:
            raise MoaError(f"behavior_prob must lie in (0, 1], got {self.behavior_prob}")


@dataclass(frozen=True)
class MoaConfig:
    beta: float = 10.0
    history_capacity: int = 8
    adv_epsilon: float = 1e-8
    clip_range: float = 0.2
    min_history_for_trend: int = 3
    singleton_chain_fallback: bool = False

    def __post_init__(self):
        if not self.beta > 0:
            raise MoaError("beta must be > 0")
        if int(self.history_capacity) < 2:
            raise MoaError("history_capacity must be >= 2")
        if not self.adv_epsilon > 0:
            raise MoaError("adv_epsilon must be > 0")
        if not 0 < self.clip_range < 1:
            raise MoaError("clip_range must lie in (0, 1)")
        if int(self.min_history_for_trend) < 2:
            raise MoaError("min_history_for_trend must be >= 2")

    def new_history(self) -> HistoryBuffer:
        return HistoryBuffer(self.history_capacity)


@dataclass(frozen=True)
class AdvantageResult:
    advantages: np.ndarray
    retained: tuple[int, ...]
    weights: WeightVector
    collapsed: np.ndarray
    group_mean: float
    group_std: float
    residuals: np.ndarray = field(default=None, repr=False)

    @property
    def pivot(self) -> int:
        return self.weights.pivot

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.advantages.shape[0], dtype=bool)
        m[list(self.retained)] = True
        return m


def as_index_set(M: Sequence[int] | np.ndarray, G: int) -> tuple[int, ...]:
    idx = sorted({int(i) for i in np.asarray(M, dtype=int).ravel()})
    if idx and (idx[0] < 0 or idx[-1] >= G):
        raise IndexError(f"retained index out of range for G={G}")
    return tuple(idx)
