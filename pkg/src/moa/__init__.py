"""Multi-objective group advantages with trend-driven dimension weights and conflict filtering."""

from .advantage import (
    Normalizer,
    Strategy,
    collapse_rewards,
    grpo_normalize,
    mask_conflicts,
    moa_advantage,
    moa_mu_advantages,
    moa_sigma_advantage,
    rloo_normalize,
    uniform_advantage,
)
from .conflict import OrderedPair, brute_force_largest_subset, dominates, largest_subset
from .estimator import MOAAdvantage
from .records import StepRecord
from .trend import (
    TrendEstimate,
    estimate_trend,
    first_order_weights,
    group_mean_rewards,
    linreg_predict,
    select_pivot,
    select_pivot_sigma,
    softmax_weights,
)
from .types import (
    AdvantageResult,
    GroupSample,
    HistoryBuffer,
    MoaConfig,
    Origin,
    WeightVector,
    history_column,
    push_history,
)

__version__ = "0.1.0"
