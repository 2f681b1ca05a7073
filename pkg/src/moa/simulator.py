"""Tabular multi-objective bandits and a softmax-policy trainer.

The trainer scores each group of sampled actions with one of the advantage
strategies and takes clipped-surrogate gradient steps on the logits.  The
module also carries the exact per-dimension policy gradients and the
small-temperature improvement check built on them.
"""

from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .advantage import (
    Normalizer,
    Strategy,
    moa_advantage,
    moa_mu_advantages,
    moa_sigma_advantage,
    uniform_advantage,
)
from .records import StepRecord
from .trend import softmax_weights
from .types import GroupSample, MoaConfig, MoaError, Origin, push_history

log = logging.getLogger(__name__)


class EnvKind(enum.Enum):
    ORTHOGONAL = "orthogonal"
    CONFLICT = "conflict"
    CUSTOM = "custom"


@dataclass(frozen=True)
class BanditEnv:
    """A single-state bandit whose actions pay a reward vector.

    ``reward_table[a, d]`` is the expected reward of action ``a`` on
    dimension ``d``.  When ``noise_std > 0`` each draw adds Gaussian noise and
    is clipped to [0, 1].
    """

    reward_table: np.ndarray
    kind: EnvKind = EnvKind.CUSTOM
    noise_std: float = 0.0

    def __post_init__(self):
        table = np.array(self.reward_table, dtype=float)
        if table.ndim != 2 or table.shape[0] < 2 or table.shape[1] < 1:
            raise MoaError("reward_table must be A x D with A >= 2, D >= 1")
        if np.any(table < 0) or np.any(table > 1):
            raise MoaError("rewards must lie in [0, 1]")
        table.setflags(write=False)
        object.__setattr__(self, "reward_table", table)
        object.__setattr__(self, "kind", EnvKind(self.kind))
        if self.noise_std < 0:
            raise MoaError("noise_std must be >= 0")

    @property
    def num_actions(self) -> int:
        return self.reward_table.shape[0]

    @property
    def n_dims(self) -> int:
        return self.reward_table.shape[1]

    def scalarized(self) -> np.ndarray:
        """Equal-weight mean reward of each action."""
        return self.reward_table.mean(axis=1)

    def draw(self, actions: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        R = self.reward_table[actions]
        if self.noise_std > 0:
            R = np.clip(R + rng.normal(0.0, self.noise_std, size=R.shape), 0.0, 1.0)
        return R


def orthogonal_env(amplitudes: Sequence[float] = (0.1, 0.2, 0.3, 0.4), block_size: int = 4,
                   base: float = 0.5) -> BanditEnv:
    """Actions split into one block per dimension; a dimension varies only inside its block.

    Within block ``d`` the rewards alternate ``base +/- amplitudes[d]`` and
    every other action pays exactly ``base``.  The centred reward vectors of
    different dimensions then have disjoint support, so the policy gradients
    of different dimensions are orthogonal at the uniform policy.
    """
    amplitudes = np.asarray(amplitudes, dtype=float)
    if block_size < 2 or block_size % 2:
        raise MoaError("block_size must be an even integer >= 2")
    D = amplitudes.size
    table = np.full((D * block_size, D), base)
    signs = np.tile([1.0, -1.0], block_size // 2)
    for d, amp in enumerate(amplitudes):
        table[d * block_size:(d + 1) * block_size, d] = base + amp * signs
    return BanditEnv(table, EnvKind.ORTHOGONAL)


# Each row is one action. The last three rows are a pairwise trade-off
# triple; the first row is the only action that is good on every dimension.
CONFLICT_TABLE = np.array([
    [0.80, 0.80, 0.80],
    [1.00, 0.05, 0.95],
    [0.95, 1.00, 0.05],
    [0.05, 0.95, 1.00],
    [0.60, 0.30, 0.30],
    [0.30, 0.60, 0.30],
    [0.30, 0.30, 0.60],
    [0.20, 0.20, 0.20],
])


def conflict_env(table=None, noise_std: float = 0.1) -> BanditEnv:
    return BanditEnv(CONFLICT_TABLE if table is None else table, EnvKind.CONFLICT, noise_std)


@dataclass(frozen=True)
class PolicyParams:
    logits: np.ndarray

    def __post_init__(self):
        logits = np.array(self.logits, dtype=float)
        if logits.ndim != 1 or not np.all(np.isfinite(logits)):
            raise MoaError("logits must be a finite 1-D vector")
        logits.setflags(write=False)
        object.__setattr__(self, "logits", logits)

    @classmethod
    def uniform(cls, num_actions: int) -> "PolicyParams":
        return cls(np.zeros(num_actions))


def _logits(params) -> np.ndarray:
    return params.logits if isinstance(params, PolicyParams) else np.asarray(params, dtype=float)


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / e.sum()


def policy_probs(params: PolicyParams) -> np.ndarray:
    return _softmax(_logits(params))


def exact_dimension_gradient(params: PolicyParams, env: BanditEnv, d: int) -> np.ndarray:
    """Gradient of ``E_{a~pi}[r_d(a)]`` with respect to the logits."""
    pi = policy_probs(params)
    r = env.reward_table[:, d]
    return pi * (r - pi @ r)


def gram_matrix(gradients: Sequence[np.ndarray]) -> np.ndarray:
    g = np.vstack([np.asarray(v, dtype=float) for v in gradients])
    return g @ g.T


def expected_improvement(weights, gram, eta: float) -> float:
    """First-order one-step improvement ``eta * v' G v`` of the scalarised objective."""
    v = np.asarray(weights, dtype=float)
    return float(eta * v @ np.asarray(gram, dtype=float) @ v)


def population_cov(u, s) -> float:
    u = np.asarray(u, dtype=float)
    s = np.asarray(s, dtype=float)
    return float(np.mean((u - u.mean()) * (s - s.mean())))


def predicted_gap(u, s, beta: float, eta: float) -> float:
    """Leading-order improvement of softmax over uniform weights: ``eta * (2 beta / D) * Cov(u, s)``."""
    u = np.asarray(u, dtype=float)
    return float(eta * (2.0 * beta / u.size) * population_cov(u, s))


@dataclass(frozen=True)
class TheoremReport:
    beta: float
    measured_gap: float
    predicted_gap: float
    covariance_u_s: float
    trials: int
    zero_covariance: bool = False

    def within(self, rel_tol: float = 0.25) -> bool:
        return abs(self.measured_gap - self.predicted_gap) <= rel_tol * abs(self.predicted_gap)


def verify_theorem(
    env: BanditEnv,
    c: float = 1.0,
    sigma_xi: float = 0.0,
    beta: float = 0.05,
    eta: float = 1.0,
    trials: int = 10_000,
    seed: int = 0,
    params: PolicyParams | None = None,
) -> TheoremReport:
    """Monte-Carlo comparison of softmax-weighted and uniform one-step improvement.

    Residuals are modelled as ``u_d = c * sqrt(s_d) + xi_d`` with
    ``xi_d ~ N(0, sigma_xi^2)`` and ``s_d`` the squared norm of the exact
    gradient of dimension ``d`` at ``params`` (uniform policy by default).
    Both the measured gap and its leading-order prediction are averaged over
    the same noise draws.
    """
    if env.kind is not EnvKind.ORTHOGONAL:
        raise MoaError(f"theorem check needs an orthogonal environment, got {env.kind.value}")
    if trials < 1:
        raise MoaError("trials must be >= 1")
    if beta > 0.2:
        warnings.warn(f"beta={beta} is outside the small-temperature regime", stacklevel=2)
    params = PolicyParams.uniform(env.num_actions) if params is None else params
    D = env.n_dims
    gram = gram_matrix([exact_dimension_gradient(params, env, d) for d in range(D)])
    s = np.diag(gram).copy()
    alpha = np.full(D, 1.0 / D)
    base = expected_improvement(alpha, gram, eta)

    rng = np.random.default_rng(seed)
    U = c * np.sqrt(s) + rng.normal(0.0, sigma_xi, size=(trials, D))
    measured = np.empty(trials)
    predicted = np.empty(trials)
    covs = np.empty(trials)
    for t, u in enumerate(U):
        w = softmax_weights(u, beta).weights
        measured[t] = expected_improvement(w, gram, eta) - base
        predicted[t] = predicted_gap(u, s, beta, eta)
        covs[t] = population_cov(u, s)
    flat = bool(np.ptp(s) <= 1e-12 * max(s.max(), 1e-300))
    return TheoremReport(
        beta=float(beta),
        measured_gap=float(measured.mean()),
        predicted_gap=float(predicted.mean()),
        covariance_u_s=float(covs.mean()),
        trials=int(trials),
        zero_covariance=flat,
    )


def expert_policy(env: BanditEnv, temperature: float = 0.05) -> PolicyParams:
    """Frozen guide policy concentrated on the actions with the best equal-weight reward."""
    score = env.scalarized()
    return PolicyParams((score - score.max()) / temperature)


def _draw_group(pi_policy, pi_expert, env, group_size, off_policy_count, rng):
    n_on = group_size - off_policy_count
    A = env.num_actions
    actions = np.concatenate([
        rng.choice(A, size=n_on, p=pi_policy),
        rng.choice(A, size=off_policy_count, p=pi_expert),
    ]).astype(int)
    off = np.arange(group_size) >= n_on
    behavior = np.where(off, pi_expert[actions], pi_policy[actions])
    return actions, env.draw(actions, rng), behavior, off


def group_rng(seed: int, step: int, group_index: int) -> np.random.Generator:
    """Independent stream per (seed, step, group) so groups can be drawn in any order."""
    return np.random.default_rng([seed, step, group_index])


def sample_group(
    params: PolicyParams,
    expert: PolicyParams,
    env: BanditEnv,
    group_size: int,
    off_policy_count: int,
    rng_seed,
) -> list[GroupSample]:
    """Draw ``group_size - off_policy_count`` actions from the policy and the rest from the expert."""
    if not 0 <= off_policy_count < group_size:
        raise MoaError("off_policy_count must satisfy 0 <= off_policy_count < group_size")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    actions, R, behavior, off = _draw_group(
        policy_probs(params), policy_probs(expert), env, group_size, off_policy_count, rng
    )
    return [
        GroupSample(int(a), r, Origin.OFF_POLICY if o else Origin.ON_POLICY, float(b))
        for a, r, b, o in zip(actions, R, behavior, off)
    ]


def _surrogate_terms(theta, actions, behavior, advantages, clip_range):
    pi = _softmax(theta)
    rho = pi[actions] / behavior
    clipped = np.clip(rho, 1.0 - clip_range, 1.0 + clip_range)
    objective = np.minimum(rho * advantages, clipped * advantages)
    # the unclipped branch carries the gradient whenever it attains the min
    active = rho * advantages <= clipped * advantages
    return pi, rho, objective, active


def surrogate_objective(theta, actions, behavior, advantages, clip_range: float) -> float:
    """``(1/G) sum_g min(rho_g A_g, clip(rho_g) A_g)``."""
    _, _, obj, _ = _surrogate_terms(np.asarray(theta, float), actions, behavior, advantages, clip_range)
    return float(obj.mean())


def surrogate_gradient(theta, actions, behavior, advantages, clip_range: float) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    actions = np.asarray(actions, dtype=int)
    advantages = np.asarray(advantages, dtype=float)
    pi, rho, _, active = _surrogate_terms(theta, actions, behavior, advantages, clip_range)
    coef = np.where(active, rho * advantages, 0.0) / actions.size
    # d rho_g / d theta = rho_g (e_{a_g} - pi)
    grad = np.bincount(actions, weights=coef, minlength=theta.size) - coef.sum() * pi
    return grad


def _behavior_probs(group: Sequence[GroupSample], old_params: PolicyParams) -> np.ndarray:
    pi_old = policy_probs(old_params)
    return np.array([
        s.behavior_prob if s.origin is Origin.OFF_POLICY else pi_old[s.action] for s in group
    ])


def surrogate_update(
    params: PolicyParams,
    old_params: PolicyParams,
    group: Sequence[GroupSample],
    advantages,
    eta: float,
    clip_range: float,
) -> PolicyParams:
    """One gradient-ascent step of size ``eta`` on the clipped surrogate.

    On-policy ratios use the old policy in the denominator; off-policy ratios
    use the probability under the policy that generated the sample.
    """
    advantages = np.asarray(advantages, dtype=float)
    if len(group) != advantages.size:
        raise MoaError("group and advantages differ in length")
    if not np.any(advantages):
        return params
    actions = np.array([s.action for s in group], dtype=int)
    grad = surrogate_gradient(
        params.logits, actions, _behavior_probs(group, old_params), advantages, clip_range
    )
    return PolicyParams(params.logits + eta * grad)


class AdamAscent:
    """Adam on the logits, used as an ascent rule (parameters move along ``+grad``)."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = self.v = None
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(theta)
            self.v = np.zeros_like(theta)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return theta + self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class SgdAscent:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        return theta + self.lr * grad


OPTIMIZERS = {"adam": AdamAscent, "sgd": SgdAscent}


def _group_advantages(strategy, R, history, step, config) -> tuple[list[np.ndarray], object]:
    if strategy is Strategy.MOA_GRPO:
        res = moa_advantage(R, history, step, config, Normalizer.GRPO)
    elif strategy is Strategy.MOA_RLOO:
        res = moa_advantage(R, history, step, config, Normalizer.RLOO)
    elif strategy is Strategy.UNIFORM_GRPO:
        res = uniform_advantage(R, config, Normalizer.GRPO)
    elif strategy is Strategy.UNIFORM_RLOO:
        res = uniform_advantage(R, config, Normalizer.RLOO)
    elif strategy is Strategy.MOA_SIGMA:
        res = moa_sigma_advantage(R, config)
    elif strategy is Strategy.MOA_MU:
        # every dimension gets its own update, so the record shows equal weights
        res = uniform_advantage(R, config, Normalizer.GRPO)
        return moa_mu_advantages(R, config.adv_epsilon), res
    else:  # pragma: no cover
        raise ValueError(strategy)
    return [res.advantages], res


def run_training(
    env: BanditEnv,
    strategy: Strategy | str,
    steps: int,
    config: MoaConfig | None = None,
    group_size: int = 16,
    groups_per_step: int = 12,
    off_policy_count: int = 1,
    seed: int = 0,
    eta: float = 0.05,
    expert_temperature: float = 0.05,
    optimizer: str = "sgd",
    return_params: bool = False,
):
    """Train a softmax policy on ``env`` and return one :class:`StepRecord` per step.

    Each step snapshots the policy, draws ``groups_per_step`` groups from the
    snapshot, scores them, and then applies one clipped-surrogate step per
    group (one per dimension for ``MoaMu``) in group order.  The step's mean
    reward vector is pushed into the history buffer afterwards.
    """
    strategy = Strategy.parse(strategy)
    config = config or MoaConfig()
    if steps < 1:
        raise MoaError("steps must be >= 1")
    if not 0 <= off_policy_count < group_size:
        raise MoaError("off_policy_count must satisfy 0 <= off_policy_count < group_size")
    D = env.n_dims
    if optimizer not in OPTIMIZERS:
        raise MoaError(f"unknown optimizer {optimizer!r}; choose from {sorted(OPTIMIZERS)}")
    opt = OPTIMIZERS[optimizer](eta)
    theta = np.zeros(env.num_actions)
    pi_expert = policy_probs(expert_policy(env, expert_temperature))
    history = config.new_history()
    records = []
    for step in range(steps):
        pi_old = _softmax(theta)
        batch_R = []
        weights = np.zeros(D)
        retained = 0
        updates = []
        for gi in range(groups_per_step):
            rng = group_rng(seed, step, gi)
            actions, R, behavior, _ = _draw_group(
                pi_old, pi_expert, env, group_size, off_policy_count, rng
            )
            adv_list, res = _group_advantages(strategy, R, history, step, config)
            batch_R.append(R)
            weights += res.weights.weights
            retained += len(res.retained)
            updates.extend((actions, behavior, A) for A in adv_list)

        for actions, behavior, A in updates:
            if np.any(A):
                theta = opt.step(theta, surrogate_gradient(theta, actions, behavior, A, config.clip_range))

        means = np.vstack(batch_R).mean(axis=0)
        weights /= groups_per_step
        records.append(StepRecord(
            seed=int(seed),
            strategy=strategy.value,
            step=step,
            mean_rewards=tuple(float(x) for x in means),
            weights=tuple(float(x) for x in weights),
            pivot=int(np.argmax(weights)),
            retained=retained / groups_per_step,
            scalarized=float(means.mean()),
        ))
        history = push_history(history, step, means)
        if log.isEnabledFor(logging.DEBUG):
            log.debug("seed=%d %s step=%d scalarized=%.4f", seed, strategy.value, step, means.mean())
    if return_params:
        return records, PolicyParams(theta)
    return records


def reward_auc(records: Sequence[StepRecord]) -> float:
    """Mean scalarised reward over the run (area under the curve per step)."""
    return float(np.mean([r.scalarized for r in records]))
