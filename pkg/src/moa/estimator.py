"""scikit-learn style wrapper around the advantage pipeline."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .advantage import Normalizer, moa_advantage
from .types import AdvantageResult, HistoryBuffer, MoaConfig, push_history


class MOAAdvantage(TransformerMixin, BaseEstimator):
    """Turn a group's reward matrix into per-rollout advantages.

    The estimator keeps the rolling history of per-step mean rewards that
    drives the dimension weights.  ``fit`` seeds that history from past
    steps, ``partial_fit`` records one more step, and ``transform`` scores a
    group at the step after the last recorded one.

    Parameters
    ----------
    beta : float, default=10.0
        Softmax temperature applied to the trend residuals.
    history_capacity : int, default=8
        Number of past steps kept for the trend fit.
    adv_epsilon : float, default=1e-8
        Added to the group standard deviation before dividing.
    min_history_for_trend : int, default=3
        Below this many stored steps the weights are uniform.
    singleton_chain_fallback : bool, default=False
        Keep every rollout when the conflict filter retains at most one.
    normalizer : {"grpo", "rloo"}, default="grpo"

    Examples
    --------
    >>> import numpy as np
    >>> est = MOAAdvantage().fit(np.array([[0.1, 0.5], [0.2, 0.5], [0.3, 0.5]]))
    >>> est.transform(np.array([[0.0, 0.0], [1.0, 1.0]])).round(3)
    array([-1.,  1.])
    """

    def __init__(
        self,
        beta: float = 10.0,
        history_capacity: int = 8,
        adv_epsilon: float = 1e-8,
        min_history_for_trend: int = 3,
        singleton_chain_fallback: bool = False,
        normalizer: str = "grpo",
    ):
        self.beta = beta
        self.history_capacity = history_capacity
        self.adv_epsilon = adv_epsilon
        self.min_history_for_trend = min_history_for_trend
        self.singleton_chain_fallback = singleton_chain_fallback
        self.normalizer = normalizer

    def _config(self) -> MoaConfig:
        return MoaConfig(
            beta=self.beta,
            history_capacity=self.history_capacity,
            adv_epsilon=self.adv_epsilon,
            min_history_for_trend=self.min_history_for_trend,
            singleton_chain_fallback=self.singleton_chain_fallback,
        )

    def fit(self, X, y=None):
        """Seed the history with past per-step mean rewards.

        ``X`` has one row per completed step (oldest first) and one column
        per reward dimension.  Rows are assigned steps ``0 .. n-1``.
        """
        X = check_array(X, dtype=np.float64)
        self.config_ = self._config()
        Normalizer(self.normalizer)
        self.n_features_in_ = X.shape[1]
        history = self.config_.new_history()
        for step, row in enumerate(X):
            history = push_history(history, step, row)
        self.history_ = history
        self.next_step_ = X.shape[0]
        return self

    def partial_fit(self, X, y=None):
        """Record one finished step given its pooled reward matrix (rows are rollouts)."""
        X = check_array(X, dtype=np.float64)
        if not hasattr(self, "history_"):
            self.config_ = self._config()
            self.n_features_in_ = X.shape[1]
            self.history_ = self.config_.new_history()
            self.next_step_ = 0
        self._check_width(X)
        self.history_ = push_history(self.history_, self.next_step_, X.mean(axis=0))
        self.next_step_ += 1
        return self

    def _check_width(self, X):
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} reward dimensions, estimator was fitted with {self.n_features_in_}"
            )

    def explain(self, X) -> AdvantageResult:
        """Full pipeline output for one group: weights, pivot, retained set and advantages."""
        check_is_fitted(self, "history_")
        X = check_array(X, dtype=np.float64)
        self._check_width(X)
        return moa_advantage(X, self.history_, self.next_step_, self.config_, Normalizer(self.normalizer))

    def transform(self, X) -> np.ndarray:
        return self.explain(X).advantages

    @property
    def history(self) -> HistoryBuffer:
        check_is_fitted(self, "history_")
        return self.history_
