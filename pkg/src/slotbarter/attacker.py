"""Worst-case credential stuffing planner under an aggression budget.

The attacker holds the target's breached credentials and stuffs them at
peers, trying to harvest accounts while keeping its cumulative detection
probability below the aggression level.  Plans are underspecified as
per-peer stuffing counts; a count vector is valid only when distinct
uncaptured shared users can realize it, a bipartite b-matching
feasibility question.

Planning explores bidder branches to ``foresight + lookahead`` depth and
returns the first batch on the path to the best-value leaf.  The
``lookahead = 1`` fast path searches the count-vector lattice from the
per-peer unimodal optima downward, maintaining a frontier of not yet
valid candidates that act as upper bounds, and stops at the first valid
vector popped in value order.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from fractions import Fraction

from .auction import AuctionState
from .ecosystem import PSI, Ecosystem
from .risk import INT_EXACT_MAX, bounded_optimal_attempts, dodge_fraction, dodge_value

BUDGET_TOLERANCE = 1e-12

GAIN_CONDITIONAL = "conditional"
GAIN_CUMULATIVE = "cumulative"


@dataclass(frozen=True)
class AttackerParams:
    foresight: int = 0
    lookahead: int = 1
    aggression: float = 1.0
    gain_weighting: str = GAIN_CONDITIONAL

    def __post_init__(self):
        if self.lookahead < 1:
            raise ValueError("lookahead must be at least 1")
        if self.foresight < 0:
            raise ValueError("foresight must be non-negative")
        if not 0.0 <= self.aggression <= 1.0:
            raise ValueError("aggression must lie in [0,1]")
        if self.gain_weighting not in (GAIN_CONDITIONAL, GAIN_CUMULATIVE):
            raise ValueError("gain_weighting must be 'conditional' or 'cumulative'")

    @property
    def depth(self) -> int:
        return self.foresight + self.lookahead


@dataclass(frozen=True)
class StuffingPlan:
    """One batch: per-peer counts, concrete users, and dodge odds."""

    counts: dict
    assignment: dict
    batch_dodge: dict
    expected_gain: float

    @classmethod
    def empty(cls) -> "StuffingPlan":
        return cls({}, {}, {}, 0.0)

    @property
    def is_empty(self) -> bool:
        return all(f == 0 for f in self.counts.values())

    def users(self) -> set:
        out = set()
        for us in self.assignment.values():
            out.update(us)
        return out


@dataclass
class AttackState:
    """Expected-capture bookkeeping across the whole attack."""

    captured: set = field(default_factory=set)
    expected_capture: dict = field(default_factory=dict)
    cumulative_dodge: float = 1.0
    cumulative_cost: float = 0.0
    bid_index: int = 0
    trace: list = field(default_factory=list)

    def clone(self) -> "AttackState":
        out = AttackState(
            set(self.captured),
            dict(self.expected_capture),
            self.cumulative_dodge,
            self.cumulative_cost,
            self.bid_index,
        )
        out.trace = list(self.trace)
        return out


def available_pools(eco: Ecosystem, target, captured: set) -> dict:
    """Uncaptured stuffable users per peer, in assignment preference order.

    Users with more accounts are saved for later, so pools sort by site
    count first.  Zero-reuse users never help the attacker and are left
    out entirely.
    """
    pools = {}
    for s in eco.peers(target):
        avail = [
            u
            for u in eco.attacker_shared_users(target, s)
            if u not in captured and eco.reuse(u, target, s) > 0.0
        ]
        avail.sort(key=lambda u: (len(eco.user_sites[u]), str(u)))
        pools[s] = tuple(avail)
    return pools


def assign_users(counts: dict, pools: dict):
    """Concrete disjoint user sets for a count vector, or None.

    Bipartite b-matching via augmenting paths: each peer demands
    ``counts[s]`` distinct users from its pool, and a user may serve only
    one peer.  Preference order inside each pool is respected where the
    matching allows.
    """
    demand_slots = []
    for s in sorted(counts, key=str):
        f = counts[s]
        if f < 0:
            raise ValueError("negative stuffing count")
        if f > len(pools.get(s, ())):
            return None
        demand_slots.extend([s] * f)
    owner: dict = {}

    def augment(slot_site, visited):
        for u in pools[slot_site]:
            if u in visited:
                continue
            visited.add(u)
            holder = owner.get(u)
            if holder is None or augment(holder, visited):
                owner[u] = slot_site
                return True
        return False

    for site in demand_slots:
        if not augment(site, set()):
            return None
    assignment: dict = {s: [] for s in counts}
    for u, s in owner.items():
        assignment[s].append(u)
    return {s: tuple(sorted(us, key=str)) for s, us in assignment.items()}


def feasible(counts: dict, pools: dict) -> bool:
    """Whether distinct uncaptured users can realize every count."""
    return assign_users(counts, pools) is not None


def _pool_rate(eco: Ecosystem, target, s, pool) -> float:
    rates = {eco.reuse(u, target, s) for u in pool}
    if len(rates) > 1:
        raise ValueError(
            "the worst-case planner requires pair-uniform reuse rates; "
            "use the greedy attacker for per-user rates"
        )
    return rates.pop() if rates else 1.0


class _PeerView:
    """Per-peer dodge/gain evaluation for one batch of stuffing attempts."""

    def __init__(self, eco: Ecosystem, target, s, allocation, pool):
        n1 = eco.shared_count(target, s)
        self.site = s
        self.pool = pool
        self.pool_size = n1 if eco.privacy == PSI else eco.site_size(target)
        self.m = min(self.pool_size, math.floor(allocation))
        self.rate = _pool_rate(eco, target, s, pool)
        self.bound = bounded_optimal_attempts(self.pool_size, self.m, len(pool))
        self._dodge_cache: dict = {}

    def dodge(self, f: int):
        got = self._dodge_cache.get(f)
        if got is None:
            if self.pool_size <= INT_EXACT_MAX:
                got = dodge_fraction(self.pool_size, self.m, f)
            else:
                got = dodge_value(self.pool_size, self.m, f)
            self._dodge_cache[f] = got
        return got

    def gain(self, f: int):
        return self.rate * f * self.dodge(f)


def _views(eco, target, allocations, pools):
    views = []
    for s in sorted(pools, key=str):
        if not pools[s]:
            continue
        views.append(_PeerView(eco, target, s, allocations.get(s, 0), pools[s]))
    return views


def _budget_floor(aggression: float, cumulative_dodge: float) -> Fraction:
    # Valid batches keep cumulative_dodge * prod(batch dodges) at or above
    # 1 - aggression; comparisons stay exact because floats are binary
    # rationals.
    if cumulative_dodge == 0.0:
        return Fraction(2)  # nothing passes; detection is already certain
    return (Fraction(1) - Fraction(aggression)) / Fraction(cumulative_dodge)


def _build_plan(views, counts_vec, pools) -> StuffingPlan:
    counts = {v.site: f for v, f in zip(views, counts_vec)}
    assignment = assign_users(counts, pools)
    if assignment is None:
        raise RuntimeError("plan concretization failed for a feasible vector")
    dodges = {}
    gain = Fraction(0) if all(isinstance(v.dodge(0), Fraction) for v in views) else 0.0
    for v, f in zip(views, counts_vec):
        d = v.dodge(f)
        dodges[v.site] = float(d)
        gain += v.gain(f)
    counts = {s: f for s, f in counts.items() if f > 0}
    assignment = {s: us for s, us in assignment.items() if us}
    dodges = {s: d for s, d in dodges.items() if s in counts}
    return StuffingPlan(counts, assignment, dodges, float(gain))


def fast_path_lookahead1(
    eco: Ecosystem, target, allocations: dict, state: AttackState, params: AttackerParams
) -> StuffingPlan:
    """Optimal single batch against the current allocations.

    Searches the count-vector lattice downward from the per-peer unimodal
    optima.  Gains are componentwise non-decreasing up to those bounds
    and both constraints (budget, matching feasibility) are downward
    closed, so the first valid vector popped in value order is a global
    maximum.
    """
    pools = available_pools(eco, target, state.captured)
    views = _views(eco, target, allocations, pools)
    if not views:
        return StuffingPlan.empty()
    floor_product = _budget_floor(params.aggression, state.cumulative_dodge)
    start = tuple(v.bound for v in views)
    heap = [_neg_gain(views, start)]
    seen = {start}
    while heap:
        _, vec = heapq.heappop(heap)
        product = _product(views, vec)
        counts = {v.site: f for v, f in zip(views, vec)}
        if product >= floor_product and feasible(counts, pools):
            return _build_plan(views, vec, pools)
        for i in range(len(vec)):
            if vec[i] > 0:
                child = vec[:i] + (vec[i] - 1,) + vec[i + 1 :]
                if child not in seen:
                    seen.add(child)
                    heapq.heappush(heap, _neg_gain(views, child))
    return StuffingPlan.empty()


def _neg_gain(views, vec):
    total = sum(v.gain(f) for v, f in zip(views, vec))
    # Heap entries sort by descending gain, then lexicographic counts.
    return (-total, vec)


def _product(views, vec):
    product = Fraction(1)
    for v, f in zip(views, vec):
        product *= v.dodge(f)
    return product


def plan_attack(
    eco: Ecosystem,
    target,
    auction: AuctionState,
    state: AttackState,
    params: AttackerParams,
    known_bidders=(),
) -> StuffingPlan:
    """First batch on the path to the best leaf of the stuffing tree.

    One batch is planned per explored bid: the first against the current
    allocations, later ones after each branched bid.  Within foresight
    the next bidders are known; beyond it every eligible bidder branches.
    Paths that would push one minus the cumulative dodge probability past
    the aggression level are cut.  Ties prefer the lexicographically
    smallest first-batch count vector.

    Exponential in depth and pool sizes; intended for small instances and
    for validating :func:`fast_path_lookahead1`, which handles the scale
    runs.
    """
    best: dict = {"value": None, "first": None}
    known = tuple(known_bidders)[: params.foresight]

    def batch_candidates(auct, captured, cum_dodge):
        pools = available_pools(eco, target, captured)
        views = _views(eco, target, auct.alloc_to(target), pools)
        floor_product = _budget_floor(params.aggression, cum_dodge)
        vectors = []

        def rec(idx, vec, product):
            if product < floor_product:
                return
            if idx == len(views):
                counts = {v.site: f for v, f in zip(views, vec)}
                if feasible(counts, pools):
                    vectors.append(tuple(vec))
                return
            v = views[idx]
            for f in range(v.bound + 1):
                rec(idx + 1, vec + [f], product * v.dodge(f))

        rec(0, [], Fraction(1))
        return views, pools, vectors

    def explore(auct, captured, cum_dodge, steps, known_rest, first, acc):
        views, pools, vectors = batch_candidates(auct, captured, cum_dodge)
        if not vectors:
            vectors = [tuple(0 for _ in views)] if views else [()]
        for vec in vectors:
            gain = sum((v.gain(f) for v, f in zip(views, vec)), Fraction(0))
            if params.gain_weighting == GAIN_CUMULATIVE:
                contribution = Fraction(cum_dodge) * gain
            else:
                contribution = gain
            value = acc + contribution
            plan_first = first if first is not None else (views, vec, pools)
            new_captured = captured
            if any(vec):
                counts = {v.site: f for v, f in zip(views, vec)}
                assignment = assign_users(counts, pools)
                new_captured = captured | {u for us in assignment.values() for u in us}
            new_cum = cum_dodge * float(_product(views, vec))
            if steps == 1:
                _offer(plan_first, value)
                continue
            if known_rest:
                bidders = [known_rest[0]]
                rest = known_rest[1:]
            else:
                bidders = auct.eligible()
                rest = ()
            for b in bidders:
                child = auct.clone()
                child.step_prop(b)
                explore(child, new_captured, new_cum, steps - 1, rest, plan_first, value)

    def _offer(plan_first, value):
        current = best["value"]
        if current is None or value > current:
            best["value"] = value
            best["first"] = plan_first
        elif value == current and plan_first is not None and best["first"] is not None:
            _, vec, _ = plan_first
            _, best_vec, _ = best["first"]
            if tuple(vec) < tuple(best_vec):
                best["first"] = plan_first

    explore(auction, set(state.captured), state.cumulative_dodge, params.depth, known, None, Fraction(0))
    if best["first"] is None:
        return StuffingPlan.empty()
    views, vec, pools = best["first"]
    if not views or not any(vec):
        return StuffingPlan.empty()
    return _build_plan(views, vec, pools)


def advance(
    eco: Ecosystem, target, state: AttackState, plan: StuffingPlan, params: AttackerParams
) -> AttackState:
    """Apply one executed batch to the attack bookkeeping.

    A batch's gain counts with its own dodge probability, conditional on
    every earlier batch having dodged; the aggression budget tracks the
    unconditional product.  Stuffed users leave the pools permanently,
    captured in expectation scaled by their reuse weight.
    """
    if plan.is_empty:
        return state
    product = 1.0
    for d in plan.batch_dodge.values():
        product *= d
    new_cum = state.cumulative_dodge * product
    if 1.0 - new_cum > params.aggression + BUDGET_TOLERANCE:
        raise ValueError("stuffing plan violates the aggression budget")
    before = state.cumulative_dodge
    gain_weight = before if params.gain_weighting == GAIN_CUMULATIVE else 1.0
    state.cumulative_dodge = new_cum
    for s in sorted(plan.assignment, key=str):
        users = plan.assignment[s]
        dodge = plan.batch_dodge[s]
        batch_gain = 0.0
        for u in users:
            if u in state.captured:
                raise ValueError(f"user {u!r} stuffed twice")
            state.captured.add(u)
            r = eco.reuse(u, target, s)
            state.expected_capture[u] = gain_weight * r * dodge
            batch_gain += r * dodge
        state.trace.append(
            {
                "bid_index": state.bid_index,
                "peer": s,
                "attempts": plan.counts[s],
                "batch_dodge": dodge,
                "cumulative_dodge": state.cumulative_dodge,
                "expected_gain": gain_weight * batch_gain,
            }
        )
        state.cumulative_cost += gain_weight * batch_gain
    return state
