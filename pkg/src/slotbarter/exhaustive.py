"""Benchmark bidding strategy: search over future bidding outcomes.

The strategic target enumerates its possible allocations on a fixed
increment grid, expands the known bidders for ``foresight`` steps and all
eligible bidders (uniformly weighted) for ``lookahead`` further steps,
and back-propagates the expected per-bid risk measured at the horizon.
This strategy exists to be beaten on cost; optimality at the configured
depth matters more than speed.
"""

from __future__ import annotations

from dataclasses import dataclass

from .auction import AuctionState
from .bidding import Allocation

DEPTH_CAP_DEFAULT = 3


@dataclass(frozen=True)
class ExhaustiveParams:
    cutline: bool = False
    foresight: int = 0
    lookahead: int = 1
    increment: int = 1
    depth_cap: int = DEPTH_CAP_DEFAULT
    alloc_tie: str = "smallest"
    insert_tie: str = "wait"

    def __post_init__(self):
        if self.lookahead < 1:
            raise ValueError("lookahead must be at least 1")
        if self.foresight < 0:
            raise ValueError("foresight must be non-negative")
        if self.increment < 1:
            raise ValueError("increment must be positive")
        if self.foresight + self.lookahead > self.depth_cap:
            raise ValueError("foresight + lookahead exceeds the depth cap")
        if self.alloc_tie not in ("smallest", "largest"):
            raise ValueError("alloc_tie must be 'smallest' or 'largest'")
        if self.insert_tie not in ("wait", "bid"):
            raise ValueError("insert_tie must be 'wait' or 'bid'")

    @property
    def depth(self) -> int:
        return self.foresight + self.lookahead


def allocation_grid(cap: int, peers: list, increment: int) -> list:
    """All capacity splits on the increment grid, in lexicographic order.

    Every peer but the last receives a multiple of ``increment``; the
    last absorbs the remainder, so each split sums to ``cap`` exactly.
    """
    peers = sorted(peers, key=str)
    units = cap // increment
    out = []

    def compose(prefix, remaining_units, idx):
        if idx == len(peers) - 1:
            slots = {p: c * increment for p, c in zip(peers, prefix)}
            slots[peers[-1]] = cap - increment * sum(prefix)
            out.append(slots)
            return
        for c in range(remaining_units + 1):
            compose(prefix + [c], remaining_units - c, idx + 1)

    if len(peers) == 1:
        return [{peers[0]: cap}]
    compose([], units, 0)
    return out


class Planner:
    """Expected-risk minimizer for one strategic target site.

    Subtree values beyond the foresight horizon are cached keyed by the
    full auction fingerprint; cached and uncached runs return identical
    allocations because every value is deterministic.
    """

    def __init__(self, target, params: ExhaustiveParams, use_cache: bool = True):
        self.target = target
        self.params = params
        self.use_cache = use_cache
        self.cache: dict = {}

    # -- public operations ---------------------------------------------

    def plan_bid(self, state: AuctionState, known_bidders: tuple = ()) -> Allocation:
        """The allocation minimizing expected per-bid risk at the horizon."""
        known = tuple(known_bidders)[: self.params.foresight]
        slots, _ = self._best_allocation(state, self.params.depth, known)
        return Allocation(self.target, slots)

    def plan_value(self, state: AuctionState, alloc: Allocation, known_bidders: tuple = ()) -> float:
        """Expected risk of a fixed allocation in the same search tree."""
        known = tuple(known_bidders)[: self.params.foresight]
        return self._value_after_bid(state, alloc.slots, self.params.depth, known)

    def decide_insert(self, state: AuctionState, known_bidders: tuple = ()) -> bool:
        """Whether cutting in line now beats deferring, ties wait.

        Both branches are explored to the same absolute horizon: bidding
        now spends the first tree level on the target's own bid, waiting
        spends it on a uniformly drawn peer bid before the target bids.
        """
        if not self.params.cutline:
            raise RuntimeError("decide_insert requires cutline semantics")
        if state.last_bidder == self.target:
            return False
        counts = dict(state.counts)
        floor_count = min(counts.values())
        if counts.get(self.target, 0) + 1 - floor_count > state.constraint.slack:
            return False
        known = tuple(known_bidders)[: self.params.foresight]
        depth = self.params.depth
        _, now_value = self._best_allocation(state, depth, known)
        others = [b for b in state.eligible() if b != self.target]
        if not others:
            return True
        wait_total = 0.0
        for b in others:
            nxt = state.clone()
            nxt.step_prop(b)
            _, v = self._best_allocation(nxt, max(depth - 1, 0), known[1:])
            wait_total += v
        wait_value = wait_total / len(others)
        if now_value == wait_value:
            return self.params.insert_tie == "bid"
        return now_value < wait_value

    # -- search internals ------------------------------------------------

    def _grid(self, state: AuctionState) -> list:
        cap = state.eco.cap(self.target)
        peers = state.eco.peers(self.target)
        grid = allocation_grid(cap, peers, self.params.increment)
        if self.params.alloc_tie == "largest":
            return list(reversed(grid))
        return grid

    def _best_allocation(self, state: AuctionState, depth: int, known: tuple) -> tuple:
        best_slots, best_value = None, None
        for slots in self._grid(state):
            v = self._value_after_bid(state, slots, depth, known)
            if best_value is None or v < best_value:
                best_slots, best_value = slots, v
        return best_slots, best_value

    def _value_after_bid(self, state: AuctionState, slots: dict, depth: int, known: tuple) -> float:
        nxt = state.clone()
        nxt.apply(Allocation(self.target, slots))
        return self._value(nxt, depth, known)

    def _value(self, state: AuctionState, depth: int, known: tuple) -> float:
        if depth == 0:
            return state.risk_of(self.target)[0]
        cache_key = None
        if self.use_cache and not known:
            cache_key = (depth, state.fingerprint())
            hit = self.cache.get(cache_key)
            if hit is not None:
                return hit
        if known:
            bidders = [known[0]]
            rest = known[1:]
        else:
            bidders = state.eligible()
            rest = ()
        total = 0.0
        for b in bidders:
            if b == self.target:
                if depth == 1:
                    # The target's own bid leaves the allocations it holds
                    # from peers unchanged, so every grid choice scores the
                    # current risk.
                    total += state.risk_of(self.target)[0]
                else:
                    _, v = self._best_allocation(state, depth - 1, rest)
                    total += v
            else:
                nxt = state.clone()
                nxt.step_prop(b)
                total += self._value(nxt, depth - 1, rest)
        value = total / len(bidders)
        if cache_key is not None:
            self.cache[cache_key] = value
        return value


def plan_bid(eco, target, state: AuctionState, params: ExhaustiveParams, known_bidders=()) -> Allocation:
    """One-shot planning entry point; the harness keeps a Planner for caching."""
    del eco  # the auction state already carries the ecosystem
    return Planner(target, params).plan_bid(state, known_bidders)


def decide_insert(eco, target, state: AuctionState, params: ExhaustiveParams, known_bidders=()) -> bool:
    del eco
    return Planner(target, params).decide_insert(state, known_bidders)
