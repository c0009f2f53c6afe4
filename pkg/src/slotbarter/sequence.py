"""Bidder orderings under the slack constraint.

Slack bounds the spread between the most and fewest bids any site has
placed; slack 1 forces rotation rounds, infinite slack removes the
constraint.  Under cut-in-line semantics the designated target is kept
out of the dictated ordering and may not bid twice in a row.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass


@dataclass(frozen=True)
class SequenceConstraint:
    slack: float = math.inf
    cutline: bool = False
    target: object = None
    length: int = 10

    def __post_init__(self):
        if self.slack < 1:
            raise ValueError("slack must be at least 1 (or infinite)")
        if self.length < 0:
            raise ValueError("sequence length must be non-negative")
        if self.cutline and self.target is None:
            raise ValueError("cutline requires a designated target site")


def eligible_bidders(counts: dict, constraint: SequenceConstraint, last_bidder=None) -> list:
    """Sites allowed to bid next given post-bootstrap bid counts.

    A site is eligible when one more bid keeps it within ``slack`` of the
    least-bidding site.  Under cutline the target is additionally barred
    when it was the immediately preceding bidder.
    """
    if any(c < 0 for c in counts.values()):
        raise ValueError("bid counts must be non-negative")
    floor_count = min(counts.values())
    out = []
    for s in sorted(counts, key=str):
        if counts[s] + 1 - floor_count > constraint.slack:
            continue
        if constraint.cutline and s == constraint.target and last_bidder == s:
            continue
        out.append(s)
    return out


def generate_sequence(n: int, constraint: SequenceConstraint, seed) -> list:
    """Sample a bidding sequence of ``constraint.length`` entries.

    Sites are 1..n.  Bootstrap bids happen once per site in ascending id
    order before the counted sequence starts, so slack accounting begins
    at zero here.  Each entry is drawn uniformly from the eligible
    bidders; under cutline the target never appears (it inserts itself at
    run time).  Deterministic for a fixed seed.
    """
    if n < 3:
        raise ValueError("sequences require at least 3 sites")
    rng = random.Random(seed)
    sites = [s for s in range(1, n + 1) if not (constraint.cutline and s == constraint.target)]
    counts = {s: 0 for s in sites}
    out = []
    last = None
    for _ in range(constraint.length):
        options = eligible_bidders(counts, constraint, last)
        pick = rng.choice(options)
        counts[pick] += 1
        out.append(pick)
        last = pick
    return out


def dump_sequence(seq: list) -> str:
    return " ".join(str(s) for s in seq) + "\n"


def load_sequence(text: str) -> list:
    return [int(tok) if tok.isdigit() else tok for tok in text.split()]
