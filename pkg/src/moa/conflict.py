"""Conflict-rollout elimination.

Rollouts are compared on two scores: their reward on the pivot dimension and
their weighted reward sum.  Rollout ``i`` dominates ``j`` when it is strictly
better on both.  :func:`largest_subset` finds a maximum chain under that
order with a longest strictly-increasing-subsequence pass.
"""

from __future__ import annotations

import bisect
import itertools
from dataclasses import dataclass

import numpy as np

from .types import MoaError, WeightVector, check_reward_matrix

# weighted sums are rounded so that rows with mathematically equal sums
# (e.g. (1,0,1) and (1,1,0) under uniform weights) compare as ties
_SUM_DECIMALS = 12
BRUTE_FORCE_MAX_G = 20


@dataclass(frozen=True)
class OrderedPair:
    rollout_index: int
    pivot_reward: float
    weighted_sum: float


def dominates(i_pair: OrderedPair, j_pair: OrderedPair) -> bool:
    return (
        i_pair.pivot_reward > j_pair.pivot_reward
        and i_pair.weighted_sum > j_pair.weighted_sum
    )


def ordered_pairs(R, w: WeightVector, d_star: int) -> list[OrderedPair]:
    R = np.asarray(R, dtype=float)
    if R.size == 0:
        return []
    R = check_reward_matrix(R)
    weights = w.weights if isinstance(w, WeightVector) else np.asarray(w, dtype=float)
    if weights.shape[0] != R.shape[1]:
        raise MoaError(f"weights have length {weights.shape[0]}, rewards have D={R.shape[1]}")
    if not 0 <= d_star < R.shape[1]:
        raise IndexError(f"pivot {d_star} out of range for D={R.shape[1]}")
    sums = np.round(R @ weights, _SUM_DECIMALS)
    return [OrderedPair(g, float(R[g, d_star]), float(sums[g])) for g in range(R.shape[0])]


def is_chain(pairs: list[OrderedPair]) -> bool:
    """True when the pairs are totally ordered by :func:`dominates`."""
    ps = sorted(pairs, key=lambda p: p.pivot_reward)
    return all(dominates(b, a) for a, b in zip(ps, ps[1:]))


def largest_subset(R, w: WeightVector, d_star: int) -> tuple[int, ...]:
    """Indices of a maximum chain of rollouts, in ascending index order.

    Pairs are sorted ascending by pivot reward with ties in descending
    weighted sum, so a strictly increasing run of weighted sums can never
    contain two rollouts with the same pivot reward.  Among maximum chains,
    the one that is lexicographically first in that sort order is returned.
    Runs in O(G log G).
    """
    pairs = ordered_pairs(R, w, d_star)
    if not pairs:
        return ()
    order = sorted(pairs, key=lambda p: (p.pivot_reward, -p.weighted_sum, p.rollout_index))
    ys = [p.weighted_sum for p in order]
    n = len(ys)

    # longest strictly increasing run starting at each position, scanning from
    # the right on negated values
    from_here = [0] * n
    tails: list[float] = []
    for k in range(n - 1, -1, -1):
        v = -ys[k]
        pos = bisect.bisect_left(tails, v)
        if pos == len(tails):
            tails.append(v)
        else:
            tails[pos] = v
        from_here[k] = pos + 1

    need = len(tails)
    chain = []
    last = -np.inf
    for k in range(n):
        if from_here[k] == need and ys[k] > last:
            chain.append(order[k].rollout_index)
            last = ys[k]
            need -= 1
            if need == 0:
                break
    return tuple(sorted(chain))


def brute_force_largest_subset(R, w: WeightVector, d_star: int) -> tuple[int, ...]:
    """Exhaustive maximum chain search; a test oracle for :func:`largest_subset`."""
    pairs = ordered_pairs(R, w, d_star)
    G = len(pairs)
    if G > BRUTE_FORCE_MAX_G:
        raise MoaError(f"brute force refused for G={G} > {BRUTE_FORCE_MAX_G}")
    for size in range(G, 0, -1):
        for combo in itertools.combinations(pairs, size):
            if all(
                dominates(a, b) or dominates(b, a)
                for a, b in itertools.combinations(combo, 2)
            ):
                return tuple(p.rollout_index for p in combo)
    return ()
