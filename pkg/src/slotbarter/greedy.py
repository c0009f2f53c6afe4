"""Locally optimal one-attempt-at-a-time stuffing attacker.

Scales to data-driven ecosystems where the exhaustive planner cannot.
After each eligible bid the attacker projects every peer's next
proportional-response bid one step ahead, then repeatedly commits the
single stuffing attempt with the highest marginal expected gain until no
attempt helps, preferring users with the fewest accounts elsewhere to
preserve future options.  Ties break at random from a seeded generator.

Dodge probabilities, and therefore the cost accounting, consistently use
the projected allocations; marginal estimates refresh after every single
attempt.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from .attacker import BUDGET_TOLERANCE, available_pools
from .auction import AuctionState
from .ecosystem import PSI, Ecosystem
from .risk import dodge_value

REUSE_MEAN = "mean"
REUSE_PER_USER = "per-user"


@dataclass
class GreedyState:
    target: object
    aggression: float
    rng: random.Random
    reuse_combine: str = REUSE_MEAN
    pools: dict = field(default_factory=dict)
    batch_users: dict = field(default_factory=dict)
    captured: set = field(default_factory=set)
    projected: dict = field(default_factory=dict)
    batch_gain: dict = field(default_factory=dict)
    finalized_dodge: float = 1.0
    cumulative_cost: float = 0.0
    bid_index: int = 0
    trace: list = field(default_factory=list)

    def attempts(self, peer) -> int:
        return len(self.batch_users.get(peer, ()))


def project_allocations(eco: Ecosystem, auction: AuctionState, target) -> dict:
    """Each peer's slots toward the target if it were to bid next."""
    out = {}
    for s in eco.peers(target):
        alloc = auction.prop_bid(s)
        out[s] = alloc.slots.get(target, 0)
    return out


def start_state(
    eco: Ecosystem,
    auction: AuctionState,
    target,
    aggression: float,
    seed,
    reuse_combine: str = REUSE_MEAN,
) -> GreedyState:
    if reuse_combine not in (REUSE_MEAN, REUSE_PER_USER):
        raise ValueError("reuse_combine must be 'mean' or 'per-user'")
    state = GreedyState(target, aggression, random.Random(seed), reuse_combine)
    state.pools = {s: set(us) for s, us in available_pools(eco, target, set()).items()}
    state.batch_users = {s: [] for s in eco.peers(target)}
    state.batch_gain = {s: 0.0 for s in eco.peers(target)}
    state.projected = project_allocations(eco, auction, target)
    return state


def _dodge(eco: Ecosystem, target, s, k, f) -> float:
    n1 = eco.shared_count(target, s)
    pool = n1 if eco.privacy == PSI else eco.site_size(target)
    m = min(pool, math.floor(k))
    return dodge_value(pool, m, f)


def _batch_value(eco, state, peer, users) -> float:
    """Expected gain of a batch of the given users at the peer."""
    f = len(users)
    if f == 0:
        return 0.0
    dodge = _dodge(eco, state.target, peer, state.projected.get(peer, 0), f)
    if state.reuse_combine == REUSE_PER_USER:
        return sum(eco.reuse(u, state.target, peer) for u in users) * dodge
    mean = sum(eco.reuse(u, state.target, peer) for u in users) / f
    return f * mean * dodge


def preferred_users(eco: Ecosystem, state: GreedyState, peer) -> list:
    """Pool members with the fewest accounts at other sites."""
    pool = state.pools.get(peer, ())
    if not pool:
        return []
    best = min(len(eco.user_sites[u]) for u in pool)
    return sorted((u for u in pool if len(eco.user_sites[u]) == best), key=str)


def marginal_gain(eco: Ecosystem, state: GreedyState, peer) -> float:
    """Expected-gain delta of one more attempt at the peer; may be negative."""
    choices = preferred_users(eco, state, peer)
    if not choices:
        return float("-inf")
    users = state.batch_users[peer]
    return _batch_value(eco, state, peer, users + choices[:1]) - _batch_value(eco, state, peer, users)


def _within_budget(eco, state, peer) -> bool:
    product = 1.0
    for s, users in state.batch_users.items():
        f = len(users) + (1 if s == peer else 0)
        if f:
            product *= _dodge(eco, state.target, s, state.projected.get(s, 0), f)
    return 1.0 - state.finalized_dodge * product <= state.aggression + BUDGET_TOLERANCE


def greedy_step(eco: Ecosystem, state: GreedyState) -> bool:
    """Commit the best single attempt; False when no attempt helps."""
    gains = {}
    for s in state.batch_users:
        if not state.pools.get(s):
            continue
        delta = marginal_gain(eco, state, s)
        if delta > 0.0 and _within_budget(eco, state, s):
            gains[s] = delta
    if not gains:
        return False
    best = max(gains.values())
    tied = sorted((s for s, d in gains.items() if d == best), key=str)
    peer = tied[0] if len(tied) == 1 else state.rng.choice(tied)
    choices = preferred_users(eco, state, peer)
    user = choices[0] if len(choices) == 1 else state.rng.choice(choices)
    before = state.batch_gain[peer]
    state.batch_users[peer].append(user)
    after = _batch_value(eco, state, peer, state.batch_users[peer])
    state.batch_gain[peer] = after
    state.cumulative_cost += after - before
    state.captured.add(user)
    for pool in state.pools.values():
        pool.discard(user)
    return True


def run_batch(eco: Ecosystem, state: GreedyState) -> int:
    """Greedy attempts until exhaustion; returns the number committed."""
    steps = 0
    while greedy_step(eco, state):
        steps += 1
    return steps


def finalize_batch(eco: Ecosystem, state: GreedyState, auction: AuctionState) -> None:
    """Close the current batch after a new bid lands and reproject."""
    for s in sorted(state.batch_users, key=str):
        users = state.batch_users[s]
        if not users:
            continue
        f = len(users)
        dodge = _dodge(eco, state.target, s, state.projected.get(s, 0), f)
        state.finalized_dodge *= dodge
        state.trace.append(
            {
                "bid_index": state.bid_index,
                "peer": s,
                "attempts": f,
                "batch_dodge": dodge,
                "cumulative_dodge": state.finalized_dodge,
                "expected_gain": state.batch_gain[s],
            }
        )
    state.batch_users = {s: [] for s in state.batch_users}
    state.batch_gain = {s: 0.0 for s in state.batch_gain}
    state.bid_index += 1
    state.projected = project_allocations(eco, auction, state.target)
