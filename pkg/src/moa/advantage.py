"""Group advantages for multi-objective rewards.

The full pipeline (:func:`moa_advantage`) goes

    group means -> trend residuals -> softmax weights -> pivot
    -> largest chain -> collapse -> normalise -> mask

The two ablation selectors live here as well: one normalises each dimension
separately (:func:`moa_mu_advantages`), the other collapses onto the
highest-variance dimension (:func:`moa_sigma_advantage`).
"""

from __future__ import annotations

import enum

import numpy as np

from .conflict import largest_subset
from .trend import estimate_trend, group_mean_rewards, select_pivot, select_pivot_sigma, softmax_weights
from .types import (
    AdvantageResult,
    DimensionMismatchError,
    HistoryBuffer,
    InsufficientDataError,
    MoaConfig,
    WeightVector,
    as_index_set,
    check_reward_matrix,
    check_vector,
)


class Strategy(enum.Enum):
    MOA_GRPO = "MoaGrpo"
    MOA_RLOO = "MoaRloo"
    UNIFORM_GRPO = "UniformGrpo"
    UNIFORM_RLOO = "UniformRloo"
    MOA_SIGMA = "MoaSigma"
    MOA_MU = "MoaMu"

    @classmethod
    def parse(cls, name: "str | Strategy") -> "Strategy":
        if isinstance(name, cls):
            return name
        for s in cls:
            if s.value.lower() == str(name).lower():
                return s
        raise ValueError(f"unknown strategy {name!r}; choose from {[s.value for s in cls]}")


class Normalizer(enum.Enum):
    GRPO = "grpo"
    RLOO = "rloo"


def collapse_rewards(R, w: WeightVector) -> np.ndarray:
    R = check_reward_matrix(R)
    weights = w.weights if isinstance(w, WeightVector) else np.asarray(w, dtype=float)
    if weights.shape[0] != R.shape[1]:
        raise DimensionMismatchError(
            f"weights have length {weights.shape[0]}, rewards have D={R.shape[1]}"
        )
    return R @ weights


def grpo_normalize(R_prime, adv_epsilon: float = 1e-8) -> np.ndarray:
    """``(r - mean) / (std + eps)`` with the population standard deviation."""
    r = check_vector(R_prime, name="R_prime")
    return (r - r.mean()) / (r.std() + adv_epsilon)


def rloo_normalize(R_prime) -> np.ndarray:
    """Reward minus the mean of the other rollouts in the group."""
    r = check_vector(R_prime, name="R_prime")
    G = r.shape[0]
    if G < 2:
        raise InsufficientDataError("leave-one-out baseline needs at least 2 rollouts")
    loo = (r.sum() - r) / (G - 1)
    return r - loo


def mask_conflicts(A, M) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    keep = list(as_index_set(M, A.shape[0]))
    out = np.zeros_like(A)
    out[keep] = A[keep]
    return out


def _normalize(R_prime, normalizer: Normalizer, adv_epsilon: float) -> np.ndarray:
    if Normalizer(normalizer) is Normalizer.GRPO:
        return grpo_normalize(R_prime, adv_epsilon)
    return rloo_normalize(R_prime)


def moa_advantage(
    R,
    buffer: HistoryBuffer,
    step: int,
    config: MoaConfig,
    normalizer: Normalizer | str = Normalizer.GRPO,
) -> AdvantageResult:
    """Advantages for one group under residual-softmax weighting and conflict masking.

    The mean and standard deviation used for normalisation are taken over the
    whole collapsed group, before the conflicting rollouts are zeroed.
    """
    R = check_reward_matrix(R)
    G = R.shape[0]
    trend = estimate_trend(buffer, group_mean_rewards(R), step, config)
    w = softmax_weights(trend.residuals, config.beta)
    d_star = select_pivot(w)
    M = largest_subset(R, w, d_star)
    if config.singleton_chain_fallback and len(M) <= 1:
        M = tuple(range(G))
    collapsed = collapse_rewards(R, w)
    A = mask_conflicts(_normalize(collapsed, normalizer, config.adv_epsilon), M)
    return AdvantageResult(
        advantages=A,
        retained=M,
        weights=w,
        collapsed=collapsed,
        group_mean=float(collapsed.mean()),
        group_std=float(collapsed.std()),
        residuals=trend.residuals,
    )


def uniform_advantage(
    R, config: MoaConfig, normalizer: Normalizer | str = Normalizer.GRPO
) -> AdvantageResult:
    """Equal-weight scalarisation with every rollout retained (the plain baseline)."""
    R = check_reward_matrix(R)
    w = WeightVector.uniform(R.shape[1])
    collapsed = collapse_rewards(R, w)
    return AdvantageResult(
        advantages=_normalize(collapsed, normalizer, config.adv_epsilon),
        retained=tuple(range(R.shape[0])),
        weights=w,
        collapsed=collapsed,
        group_mean=float(collapsed.mean()),
        group_std=float(collapsed.std()),
    )


def moa_sigma_advantage(R, config: MoaConfig) -> AdvantageResult:
    """Normalise only the highest-variance dimension; other dimensions are discarded."""
    R = check_reward_matrix(R)
    d_star = select_pivot_sigma(R)
    w = WeightVector.one_hot(R.shape[1], d_star)
    collapsed = R[:, d_star].copy()
    return AdvantageResult(
        advantages=grpo_normalize(collapsed, config.adv_epsilon),
        retained=tuple(range(R.shape[0])),
        weights=w,
        collapsed=collapsed,
        group_mean=float(collapsed.mean()),
        group_std=float(collapsed.std()),
    )


def moa_mu_advantages(R, adv_epsilon: float = 1e-8) -> list[np.ndarray]:
    """One GRPO advantage vector per reward dimension, to be applied as D separate updates."""
    R = check_reward_matrix(R)
    return [grpo_normalize(R[:, d], adv_epsilon) for d in range(R.shape[1])]
