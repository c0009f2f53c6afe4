"""Proportional-response bidding: bootstrap, smoothing, and responses.

A site's first bid splits its capacity by baseline weights derived from
the risk each peer would pose at a single slot.  Later bids interpolate
between those baseline weights and reciprocity weights derived from the
smoothed risk actually received, with mixing coefficient mu/(1+mu) where
mu is the largest smoothed per-peer risk.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .ecosystem import PSI, Ecosystem
from .risk import pair_risk


@dataclass(frozen=True)
class Allocation:
    """One bid: a mapping from peer to slot count."""

    bidder: object
    slots: dict

    def __post_init__(self):
        if self.bidder in self.slots:
            raise ValueError("a site cannot allocate slots to itself")
        for peer, k in self.slots.items():
            if k < 0:
                raise ValueError(f"negative slot count for peer {peer!r}")

    def total(self) -> int:
        return sum(self.slots.values())


@dataclass
class PropState:
    """Per-site bookkeeping for the proportional-response strategy."""

    site: object
    smoothing: float = 1.0
    base_weights: dict | None = None
    avg_alloc_from: dict = field(default_factory=dict)
    avg_risk: dict = field(default_factory=dict)
    received_count: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.smoothing <= 1.0:
            raise ValueError("smoothing factor must lie in (0, 1]")

    def clone(self) -> "PropState":
        out = PropState(self.site, self.smoothing)
        out.base_weights = dict(self.base_weights) if self.base_weights else None
        out.avg_alloc_from = dict(self.avg_alloc_from)
        out.avg_risk = dict(self.avg_risk)
        out.received_count = dict(self.received_count)
        return out

    def has_received_from_all(self, peers) -> bool:
        return all(self.received_count.get(p, 0) >= 1 for p in peers)


def receive_allocation(state: PropState, eco: Ecosystem, bidder, k: float) -> PropState:
    """Fold one received allocation into the smoothed per-peer average.

    The raw slot count is clamped to the usable level first: the shared
    user count under psi, the receiver's own user count under psica.  The
    first two allocations from a peer overwrite the average outright (the
    capacity-agnostic bootstrap bid would otherwise distort it); from the
    third on, exponential smoothing applies.  The per-peer risk is then
    recomputed at the smoothed allocation.
    """
    if k < 0:
        raise ValueError("negative allocation")
    s = state.site
    usable = eco.shared_count(s, bidder) if eco.privacy == PSI else eco.site_size(s)
    clamped = min(k, usable)
    seen = state.received_count.get(bidder, 0)
    if seen < 2:
        avg = clamped
    else:
        smf = state.smoothing
        avg = smf * clamped + (1.0 - smf) * state.avg_alloc_from[bidder]
    state.avg_alloc_from[bidder] = avg
    state.received_count[bidder] = seen + 1
    state.avg_risk[bidder] = pair_risk(eco, s, bidder, avg).risk
    return state


def baseline_weights(eco: Ecosystem, s) -> dict:
    """Capacity split for a bootstrap bid, from single-slot risks.

    Each peer's weight is one minus its share of the total single-slot
    risk, normalized by n-2 so the weights sum to one.  When every peer
    poses zero risk the split is uniform.
    """
    peers = eco.peers(s)
    risks = {p: pair_risk(eco, s, p, 1).risk for p in peers}
    total = sum(risks.values())
    if total == 0.0:
        return {p: 1.0 / len(peers) for p in peers}
    n = len(peers) + 1
    return {p: (1.0 / (n - 2)) * (1.0 - risks[p] / total) for p in peers}


def first_bid(eco: Ecosystem, state: PropState) -> Allocation:
    """Bootstrap bid placed before any allocation has been received.

    Stores the baseline weights on the state; later responses interpolate
    against them.
    """
    weights = baseline_weights(eco, state.site)
    state.base_weights = weights
    cap = eco.cap(state.site)
    slots = {p: math.floor(cap * w) for p, w in weights.items()}
    return Allocation(state.site, slots)


def respond_bid(eco: Ecosystem, state: PropState) -> Allocation:
    """Proportional response after allocations arrived from every peer.

    Reciprocity weights reward peers whose slots produced low smoothed
    risk.  The final split interpolates baseline and reciprocity weights
    with coefficient mu/(1+mu), mu being the largest smoothed risk; when
    every smoothed risk is zero this collapses to the pure baseline.
    Does not mutate the state.
    """
    if state.base_weights is None:
        raise RuntimeError("respond_bid before the bootstrap bid")
    peers = sorted(state.base_weights, key=str)
    if not state.has_received_from_all(peers):
        missing = [p for p in peers if state.received_count.get(p, 0) < 1]
        raise RuntimeError(f"respond_bid before receiving from peers {missing!r}")
    cap = eco.cap(state.site)
    combined = combined_weights(state)
    slots = {p: math.floor(cap * combined[p]) for p in peers}
    return Allocation(state.site, slots)


def combined_weights(state: PropState) -> dict:
    """Pre-floor interpolated weight vector, exposed for property checks."""
    peers = sorted(state.base_weights, key=str)
    n = len(peers) + 1
    total = sum(state.avg_risk[p] for p in peers)
    mu = max(state.avg_risk[p] for p in peers)
    if total == 0.0:
        weights = {p: 1.0 / len(peers) for p in peers}
    else:
        weights = {p: (1.0 / (n - 2)) * (1.0 - state.avg_risk[p] / total) for p in peers}
    return {
        p: (1.0 / (1.0 + mu)) * state.base_weights[p] + (mu / (1.0 + mu)) * weights[p]
        for p in peers
    }
