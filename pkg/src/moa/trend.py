"""Per-dimension reward trends, residual-softmax weights and pivot selection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .types import (
    HistoryBuffer,
    InsufficientDataError,
    MoaConfig,
    MoaError,
    WeightVector,
    check_reward_matrix,
    check_vector,
    history_column,
)


@dataclass(frozen=True)
class TrendEstimate:
    predicted: np.ndarray
    residuals: np.ndarray
    used_fallback: bool


def group_mean_rewards(R) -> np.ndarray:
    """Column means of a G x D reward matrix."""
    return check_reward_matrix(R).mean(axis=0)


def linreg_predict(series: Sequence[tuple[int, float]], target_step: int) -> float:
    """Ordinary least-squares line through ``(step, value)`` points, evaluated at ``target_step``.

    Steps are used as abscissae directly, so gaps left by evicted entries are
    handled without renumbering.
    """
    if len(series) < 2:
        raise InsufficientDataError("linear trend needs at least 2 points")
    x = np.array([s for s, _ in series], dtype=float)
    y = np.array([v for _, v in series], dtype=float)
    if target_step < x[-1]:
        raise MoaError("target_step must not precede the last observed step")
    # centre on the mean step so large step indices do not cost precision
    xm, ym = x.mean(), y.mean()
    dx = x - xm
    sxx = dx @ dx
    if sxx == 0.0:
        raise InsufficientDataError("linear trend needs at least 2 distinct steps")
    slope = (dx @ (y - ym)) / sxx
    return float(ym + slope * (target_step - xm))


def estimate_trend(
    buffer: HistoryBuffer, observed_means, step: int, config: MoaConfig
) -> TrendEstimate:
    """Residuals of the observed means against each dimension's linear trend.

    With fewer than ``config.min_history_for_trend`` stored steps the
    residuals are all zero (``used_fallback=True``), which yields uniform
    weights downstream.
    """
    observed = check_vector(observed_means, name="observed_means")
    D = observed.shape[0]
    if len(buffer) < config.min_history_for_trend:
        return TrendEstimate(observed.copy(), np.zeros(D), True)
    if buffer.n_dims != D:
        raise MoaError(f"history has D={buffer.n_dims}, observed means have D={D}")
    predicted = np.array([linreg_predict(history_column(buffer, d), step) for d in range(D)])
    return TrendEstimate(predicted, observed - predicted, False)


def softmax_weights(u, beta: float) -> WeightVector:
    u = np.asarray(u, dtype=float)
    if u.ndim != 1 or not np.all(np.isfinite(u)) or not np.isfinite(beta):
        raise FloatingPointError("softmax_weights needs a finite 1-D residual vector")
    z = beta * u
    e = np.exp(z - z.max())
    w = e / e.sum()
    # np.argmax returns the lowest index among ties
    return WeightVector(w, int(np.argmax(w)))


def first_order_weights(u, beta: float) -> np.ndarray:
    """Linearisation ``1/D + (beta/D)(u_d - mean(u))`` of the softmax around beta = 0.

    Only meaningful for small ``beta``; entries can leave [0, 1] otherwise.
    """
    u = np.asarray(u, dtype=float)
    D = u.shape[0]
    return 1.0 / D + (beta / D) * (u - u.mean())


def select_pivot(w: WeightVector) -> int:
    return w.pivot


def select_pivot_sigma(R) -> int:
    """Dimension with the largest population standard deviation across the group."""
    R = check_reward_matrix(R)
    if R.shape[0] < 2:
        raise InsufficientDataError("standard-deviation pivot needs at least 2 rollouts")
    return int(np.argmax(R.std(axis=0)))
