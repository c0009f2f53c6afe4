"""Auction state machine driving sequential bids between sites.

Holds the evolving per-site proportional-response states, the latest
allocation matrix, and the slack bookkeeping.  Strategy planners clone
this state to explore hypothetical futures; clones are cheap value
copies and never share mutable structure with the original.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .bidding import Allocation, PropState, first_bid, receive_allocation, respond_bid
from .ecosystem import Ecosystem
from .risk import per_bid_risk
from .sequence import SequenceConstraint, eligible_bidders


@dataclass
class AuctionState:
    eco: Ecosystem
    constraint: SequenceConstraint
    target: object
    prop: dict
    last_alloc: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    has_bid: set = field(default_factory=set)
    last_bidder: object = None
    bid_index: int = 0

    @classmethod
    def start(cls, eco: Ecosystem, constraint: SequenceConstraint, target, smoothing) -> "AuctionState":
        """Fresh pre-bootstrap state. ``smoothing`` maps site to smf."""
        prop = {s: PropState(s, smoothing.get(s, 1.0) if isinstance(smoothing, dict) else smoothing)
                for s in eco.sites}
        counts = {s: 0 for s in eco.sites}
        return cls(eco, constraint, target, prop, {}, counts)

    def clone(self) -> "AuctionState":
        return AuctionState(
            self.eco,
            self.constraint,
            self.target,
            {s: st.clone() for s, st in self.prop.items()},
            {s: dict(a) for s, a in self.last_alloc.items()},
            dict(self.counts),
            set(self.has_bid),
            self.last_bidder,
            self.bid_index,
        )

    # -- bidding -----------------------------------------------------------

    def prop_bid(self, s) -> Allocation:
        """The bid site ``s`` would place under proportional response.

        The capacity-agnostic bootstrap formula applies until allocations
        have arrived from every peer; responses apply afterwards.
        """
        state = self.prop[s]
        if s in self.has_bid and state.has_received_from_all(self.eco.peers(s)):
            return respond_bid(self.eco, state)
        return first_bid(self.eco, state)

    def apply(self, alloc: Allocation, counted: bool = True) -> None:
        """Record a bid and deliver its allocations to every peer."""
        bidder = alloc.bidder
        if alloc.total() > self.eco.cap(bidder):
            raise ValueError("allocation exceeds the bidder's capacity")
        self.last_alloc[bidder] = dict(alloc.slots)
        self.has_bid.add(bidder)
        for peer, k in alloc.slots.items():
            receive_allocation(self.prop[peer], self.eco, bidder, k)
        self.last_bidder = bidder
        if counted:
            self.counts[bidder] = self.counts.get(bidder, 0) + 1
            self.bid_index += 1

    def step_prop(self, s, counted: bool = True) -> Allocation:
        alloc = self.prop_bid(s)
        self.apply(alloc, counted)
        return alloc

    def run_bootstrap_round(self) -> list:
        """One uncounted bootstrap bid per site in ascending id order.

        Every site, strategic targets included, opens with the
        capacity-agnostic bootstrap formula; slack accounting starts at
        zero afterwards.
        """
        out = []
        for s in sorted(self.eco.sites, key=str):
            alloc = first_bid(self.eco, self.prop[s])
            self.apply(alloc, counted=False)
            out.append(alloc)
        self.counts = {s: 0 for s in self.eco.sites}
        self.last_bidder = None
        return out

    # -- observation -------------------------------------------------------

    def alloc_to(self, s) -> dict:
        """Latest allocation each peer holds open toward ``s``."""
        return {b: slots[s] for b, slots in self.last_alloc.items() if s in slots}

    def risk_of(self, s) -> tuple[float, float]:
        return per_bid_risk(self.eco, s, self.alloc_to(s))

    def eligible(self) -> list:
        return eligible_bidders(self.counts, self.constraint, self.last_bidder)

    def fingerprint(self) -> tuple:
        """Canonical hashable snapshot for planner caches."""
        prop_part = tuple(
            (
                s,
                tuple(sorted(st.avg_alloc_from.items(), key=lambda kv: str(kv[0]))),
                tuple(sorted(st.received_count.items(), key=lambda kv: str(kv[0]))),
            )
            for s, st in sorted(self.prop.items(), key=lambda kv: str(kv[0]))
        )
        alloc_part = tuple(
            (b, tuple(sorted(slots.items(), key=lambda kv: str(kv[0]))))
            for b, slots in sorted(self.last_alloc.items(), key=lambda kv: str(kv[0]))
        )
        count_part = tuple(sorted(self.counts.items(), key=lambda kv: str(kv[0])))
        return (prop_part, alloc_part, count_part, self.last_bidder)
