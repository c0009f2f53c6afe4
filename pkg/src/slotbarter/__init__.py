"""Monitoring-slot bartering economy: simulation library and experiments."""

from .ecosystem import (
    PSI,
    PSICA,
    Ecosystem,
    PlacementParams,
    PrivacyViolation,
    generate_placement,
    vulnerable_users,
)
from .risk import (
    RiskQuery,
    RiskResult,
    dodge_probability,
    optimal_stuffing,
    pair_risk,
    per_bid_risk,
    stirling_binom_ratio,
)
from .bidding import Allocation, PropState, first_bid, receive_allocation, respond_bid
from .sequence import SequenceConstraint, eligible_bidders, generate_sequence
from .auction import AuctionState
from .exhaustive import ExhaustiveParams, Planner, allocation_grid
from .attacker import AttackerParams, AttackState, StuffingPlan, fast_path_lookahead1, feasible, plan_attack
from .dataset import ReuseTable, ingest, quartile_sample, reuse_rate
from .harness import ExperimentConfig, bench_bid, run_attack, run_auction, run_paired

__version__ = "0.1.0"
