import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from moa.advantage import (
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
from moa.conflict import largest_subset
from moa.types import (
    DimensionMismatchError,
    HistoryBuffer,
    InsufficientDataError,
    MoaConfig,
    WeightVector,
    push_history,
)

TRIPLE = [[1, 0, 1], [1, 1, 0], [0, 1, 1]]
reward_vectors = st.lists(st.floats(0, 1), min_size=1, max_size=32)


def _direct_grpo(r, eps):
    """Mean and population std computed by plain summation."""
    r = [float(x) for x in r]
    mu = sum(r) / len(r)
    sd = (sum((x - mu) ** 2 for x in r) / len(r)) ** 0.5
    return np.array([(x - mu) / (sd + eps) for x in r])


@st.composite
def history_and_group(draw):
    D = draw(st.integers(1, 4))
    G = draw(st.integers(1, 16))
    n_hist = draw(st.integers(0, 10))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    buf = HistoryBuffer(8)
    for k in range(n_hist):
        buf = push_history(buf, k, rng.uniform(size=D))
    R = rng.choice([0.0, 0.25, 0.5, 0.75, 1.0], size=(G, D)) if seed % 2 else rng.uniform(size=(G, D))
    return R, buf, n_hist


class TestCollapse:
    def test_uniform_on_triple(self):
        np.testing.assert_allclose(collapse_rewards(TRIPLE, WeightVector.uniform(3)), [2 / 3] * 3)

    def test_one_hot_selects_column(self):
        R = [[0.3, 0.9], [0.7, 0.1]]
        np.testing.assert_allclose(collapse_rewards(R, WeightVector.one_hot(2, 0)), [0.3, 0.7])

    def test_half_half(self):
        np.testing.assert_allclose(collapse_rewards([[0.2, 0.8]], WeightVector.uniform(2)), [0.5])

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            collapse_rewards([[0.1, 0.2, 0.3]], WeightVector.uniform(2))


class TestGrpo:
    def test_constant_group(self):
        assert np.abs(grpo_normalize([0.4, 0.4, 0.4], 1e-8)).max() <= 1e-6

    @pytest.mark.parametrize(
        "r, expected",
        [([0, 1], [-1, 1]), ([0, 1, 1, 0], [-1, 1, 1, -1])],
    )
    def test_hand_values(self, r, expected):
        np.testing.assert_allclose(_direct_grpo(r, 1e-8), expected, atol=1e-6)
        np.testing.assert_allclose(grpo_normalize(r, 1e-8), expected, atol=1e-6)

    @given(reward_vectors)
    def test_zero_mean(self, r):
        assert abs(grpo_normalize(r).mean()) <= 1e-9

    @given(reward_vectors, st.sampled_from([1e-8, 1e-6, 1e-4]))
    def test_unit_scale(self, r, eps):
        r = np.asarray(r)
        sigma = r.std()
        if sigma < 1e-3:
            return
        s = grpo_normalize(r, eps).std()
        assert 1 - 10 * eps / sigma <= s <= 1 + 1e-12

    @given(reward_vectors)
    def test_matches_direct_formula(self, r):
        np.testing.assert_allclose(grpo_normalize(r, 1e-8), _direct_grpo(r, 1e-8), atol=1e-9)


class TestRloo:
    def test_identical(self):
        np.testing.assert_allclose(rloo_normalize([0.3, 0.3]), [0, 0])

    def test_pair(self):
        np.testing.assert_allclose(rloo_normalize([0, 1]), [-1, 1])

    def test_three(self):
        np.testing.assert_allclose(rloo_normalize([0, 0, 3]), [-1.5, -1.5, 3])

    def test_needs_two(self):
        with pytest.raises(InsufficientDataError):
            rloo_normalize([0.5])

    @given(st.lists(st.floats(0, 1), min_size=2, max_size=32))
    def test_affine_in_centred_rewards(self, r):
        r = np.asarray(r)
        G = r.size
        centred = r - r.mean()
        np.testing.assert_allclose(rloo_normalize(r), G / (G - 1) * centred, atol=1e-12)
        np.testing.assert_array_equal(np.sign(rloo_normalize(r)[np.abs(centred) > 1e-12]),
                                      np.sign(centred[np.abs(centred) > 1e-12]))
        # argmax agrees up to ulp-level near-ties
        assert centred[np.argmax(rloo_normalize(r))] >= centred.max() - 1e-12
        assert centred[np.argmax(grpo_normalize(r))] >= centred.max() - 1e-12


class TestMask:
    def test_identity(self):
        A = np.array([-1.0, 1.0, 0.5])
        np.testing.assert_array_equal(mask_conflicts(A, [0, 1, 2]), A)

    def test_total(self):
        np.testing.assert_array_equal(mask_conflicts([-1.0, 1.0, 0.5], []), [0, 0, 0])

    def test_partial(self):
        np.testing.assert_array_equal(mask_conflicts([-1.0, 1.0, 0.5], [1]), [0, 1, 0])

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            mask_conflicts([0.1, 0.2], [2])


class TestMoaAdvantage:
    def test_identical_rows(self):
        R = [[0.4, 0.6]] * 5
        res = moa_advantage(R, HistoryBuffer(8), 0, MoaConfig())
        np.testing.assert_allclose(res.weights.weights, 0.5)
        assert len(res.retained) == 1
        assert np.abs(res.advantages).max() <= 1e-6

    def test_identical_rows_with_fallback(self):
        R = [[0.4, 0.6]] * 5
        res = moa_advantage(R, HistoryBuffer(8), 0, MoaConfig(singleton_chain_fallback=True))
        assert res.retained == (0, 1, 2, 3, 4)

    def test_tradeoff_triple(self):
        res = moa_advantage(TRIPLE, HistoryBuffer(8), 0, MoaConfig())
        np.testing.assert_allclose(res.weights.weights, 1 / 3)
        assert res.pivot == 0
        assert len(res.retained) == 1
        assert res.advantages[list(res.retained)[0]] == pytest.approx(0.0, abs=1e-6)

    def test_totally_ordered_rows(self):
        R = [[0, 0], [0.5, 0.4], [1, 0.8]]
        res = moa_advantage(R, HistoryBuffer(8), 0, MoaConfig(), Normalizer.GRPO)
        # independent composition from the component oracles
        w = WeightVector.uniform(2)
        collapsed = np.array([0.0, 0.45, 0.9])
        expected = _direct_grpo(collapsed, 1e-8)
        assert res.pivot == 0
        assert res.retained == largest_subset(R, w, 0) == (0, 1, 2)
        np.testing.assert_allclose(res.collapsed, collapsed, atol=1e-15)
        np.testing.assert_allclose(res.advantages, expected, atol=1e-12)
        np.testing.assert_allclose(res.advantages, [-np.sqrt(1.5), 0, np.sqrt(1.5)], atol=1e-7)

    def test_stats_over_full_group(self):
        R = [[0.0, 1.0], [1.0, 0.0], [0.5, 0.5], [1.0, 1.0]]
        res = moa_advantage(R, HistoryBuffer(8), 0, MoaConfig())
        assert res.group_mean == pytest.approx(np.mean(res.collapsed))
        assert res.group_std == pytest.approx(np.std(res.collapsed))
        full = grpo_normalize(res.collapsed, 1e-8)
        np.testing.assert_allclose(res.advantages[res.mask], full[res.mask])

    def test_history_shifts_pivot(self):
        buf = HistoryBuffer(8)
        for k in range(4):
            buf = push_history(buf, k, [0.5, 0.5])
        # dimension 1 jumps above its flat trend
        res = moa_advantage([[0.5, 0.9], [0.5, 0.7]], buf, 4, MoaConfig())
        assert res.pivot == 1
        assert res.weights.weights[1] > 0.5

    def test_rloo_normalizer(self):
        R = [[0, 0], [0.5, 0.4], [1, 0.8]]
        res = moa_advantage(R, HistoryBuffer(8), 0, MoaConfig(), "rloo")
        np.testing.assert_allclose(res.advantages, rloo_normalize([0, 0.45, 0.9]))

    @settings(max_examples=300)
    @given(history_and_group())
    def test_masked_entries_are_zero(self, case):
        R, buf, n = case
        res = moa_advantage(R, buf, n, MoaConfig())
        assert len(res.retained) >= 1
        assert np.all(res.advantages[~res.mask] == 0.0)
        assert abs(res.weights.weights.sum() - 1) <= 1e-9

    @given(st.lists(st.integers(0, 10**6), min_size=2, max_size=16, unique=True), st.integers(0, 6))
    def test_single_dimension_reduces_to_grpo(self, r, n_hist):
        # distinct rewards: tied rollouts would be dropped by the strict chain
        r = [x / 10**6 for x in r]
        buf = HistoryBuffer(8)
        for k in range(n_hist):
            buf = push_history(buf, k, [0.3 + 0.01 * k])
        R = np.asarray(r).reshape(-1, 1)
        res = moa_advantage(R, buf, n_hist, MoaConfig())
        assert len(res.retained) == len(r)
        np.testing.assert_array_equal(res.advantages, grpo_normalize(r, 1e-8))

    @settings(max_examples=200)
    @given(history_and_group(), st.floats(-0.5, 0.5))
    def test_shift_equivariance(self, case, c):
        R, _, _ = case
        empty = HistoryBuffer(8)
        a = moa_advantage(R, empty, 0, MoaConfig())
        b = moa_advantage(R + c, empty, 0, MoaConfig())
        assert len(a.retained) == len(b.retained)
        np.testing.assert_allclose(
            grpo_normalize(a.collapsed), grpo_normalize(b.collapsed), atol=1e-6
        )


class TestAblations:
    def test_mu_single_dimension(self):
        r = [0.1, 0.5, 0.9]
        (only,) = moa_mu_advantages(np.reshape(r, (-1, 1)))
        np.testing.assert_array_equal(only, grpo_normalize(r))

    def test_mu_per_column(self):
        a0, a1 = moa_mu_advantages([[0, 1], [1, 0]])
        np.testing.assert_allclose(a0, [-1, 1], atol=1e-6)
        np.testing.assert_allclose(a1, [1, -1], atol=1e-6)

    def test_mu_constant_columns(self):
        for a in moa_mu_advantages([[0.2, 0.7]] * 4):
            assert np.abs(a).max() == 0.0

    def test_sigma_collapses_onto_widest_column(self):
        R = [[0.5, 0.0], [0.5, 1.0], [0.4, 0.5]]
        res = moa_sigma_advantage(R, MoaConfig())
        assert res.pivot == 1
        np.testing.assert_allclose(res.advantages, grpo_normalize([0.0, 1.0, 0.5]))

    def test_uniform_keeps_everything(self):
        res = uniform_advantage(TRIPLE, MoaConfig())
        assert res.retained == (0, 1, 2)

    def test_strategy_names(self):
        assert Strategy.parse("moagrpo") is Strategy.MOA_GRPO
        assert {s.value for s in Strategy} == {
            "MoaGrpo", "MoaRloo", "UniformGrpo", "UniformRloo", "MoaSigma", "MoaMu"
        }
        with pytest.raises(ValueError):
            Strategy.parse("Ppo")
