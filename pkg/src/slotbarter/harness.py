"""Experiment orchestration: auctions, paired runs, attacks, benchmarks.

Every run is a pure function of its configuration and explicit seeds;
replicate cells are independent and may execute in parallel.  Outputs
are tidy CSV rows plus a JSON manifest recording the configuration, the
seeds, and the package version, so a manifest reproduces every CSV byte
for byte (timing reports excluded).
"""

from __future__ import annotations

import csv
import json
import math
import random
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

from . import attacker as atk
from . import greedy as greedy_mod
from .auction import AuctionState
from .bidding import PropState, first_bid, receive_allocation, respond_bid
from .ecosystem import PSI, PSICA, Ecosystem, PlacementParams, generate_placement, vulnerable_users
from .exhaustive import ExhaustiveParams, Planner
from .sequence import SequenceConstraint, generate_sequence

VERSION = "0.1.0"

# The bidding-timing constraint preset: the strategic site can neither
# choose when to bid nor predict upcoming bidders, and sequences are
# unconstrained.
PRESET_PSI_STAR = {"cutline": False, "foresight": 0, "slack": math.inf}

STRATEGY_PROP = "prop"
STRATEGY_EXHAUSTIVE = "exhaustive"

ATTACKER_NONE = "none"
ATTACKER_CHECKER = "checker"
ATTACKER_GREEDY = "greedy"

# Per-monitoring-request generation cost (seconds) used as the bench
# denominator.  Derived from the published end-to-end benchmarks of the
# interactive monitoring protocol at 16 decoys per account; injectable.
DEFAULT_REQUEST_COST = 6.3e-3


@dataclass
class ExperimentConfig:
    """One fully seeded experiment cell."""

    schema_version: int = 1
    sites: int = 4
    users: int = 400
    popularity: float = 0.5
    cap_coeff: float = 1.0
    target_cap_coeff: float = -1.0  # negative means: same as cap_coeff
    privacy: str = PSI
    smf: float = 1.0
    target_smf: float = -1.0  # negative means: same as smf
    slack: float = math.inf
    length: int = 10
    target_site: int = 1
    target_strategy: str = STRATEGY_PROP
    cutline: bool = False
    foresight: int = 0
    lookahead: int = 1
    increment_divisor: int = 5
    attacker: str = ATTACKER_NONE
    aggression: float = 1.0
    attacker_foresight: int = 0
    attacker_lookahead: int = 1
    attack_window: int = 10
    replicates: int = 1
    sequences: int = 1
    base_seed: int = 0

    def __post_init__(self):
        if self.privacy not in (PSI, PSICA):
            raise ValueError(f"unknown privacy level {self.privacy!r}")
        if self.target_strategy not in (STRATEGY_PROP, STRATEGY_EXHAUSTIVE):
            raise ValueError(f"unknown strategy {self.target_strategy!r}")
        if self.attacker not in (ATTACKER_NONE, ATTACKER_CHECKER, ATTACKER_GREEDY):
            raise ValueError(f"unknown attacker kind {self.attacker!r}")

    @property
    def effective_target_cap_coeff(self) -> float:
        return self.cap_coeff if self.target_cap_coeff < 0 else self.target_cap_coeff

    @property
    def effective_target_smf(self) -> float:
        return self.smf if self.target_smf < 0 else self.target_smf

    def exhaustive_params(self, cap: int) -> ExhaustiveParams:
        increment = max(1, cap // max(1, self.increment_divisor))
        return ExhaustiveParams(
            cutline=self.cutline,
            foresight=self.foresight,
            lookahead=self.lookahead,
            increment=increment,
        )

    def attacker_params(self) -> atk.AttackerParams:
        return atk.AttackerParams(
            foresight=self.attacker_foresight,
            lookahead=self.attacker_lookahead,
            aggression=self.aggression,
        )

    def constraint(self) -> SequenceConstraint:
        return SequenceConstraint(
            slack=self.slack,
            cutline=self.cutline and self.target_strategy == STRATEGY_EXHAUSTIVE,
            target=self.target_site if self.cutline else None,
            length=self.length,
        )

    # -- seed derivation; recorded in the manifest -----------------------

    def placement_seed(self, replicate: int) -> int:
        return self.base_seed * 1_000_003 + 1_000 + replicate

    def sequence_seed(self, sequence: int) -> int:
        return self.base_seed * 1_000_003 + 500_000 + sequence

    def attacker_seed(self, replicate: int, sequence: int) -> int:
        return self.base_seed * 1_000_003 + 900_000 + replicate * 1_009 + sequence

    # -- key-value config files ------------------------------------------

    def to_text(self) -> str:
        lines = []
        for key, value in asdict(self).items():
            if isinstance(value, float) and math.isinf(value):
                value = "inf"
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        values = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"bad config line: {raw!r}")
            key, _, val = line.partition("=")
            values[key.strip()] = val.strip()
        if "schema_version" in values and int(values["schema_version"]) != 1:
            raise ValueError("unsupported config schema version")
        kwargs = {}
        for f_name, f_type in cls.__dataclass_fields__.items():
            if f_name not in values:
                continue
            raw = values.pop(f_name)
            kind = f_type.type
            if kind == "bool":
                kwargs[f_name] = raw.lower() in ("1", "true", "yes")
            elif kind == "int":
                kwargs[f_name] = int(raw)
            elif kind == "float":
                kwargs[f_name] = math.inf if raw == "inf" else float(raw)
            else:
                kwargs[f_name] = raw
        if values:
            raise ValueError(f"unknown config keys: {sorted(values)}")
        return cls(**kwargs)


def build_ecosystem(cfg: ExperimentConfig, replicate: int) -> Ecosystem:
    coeffs = {s: cfg.cap_coeff for s in range(1, cfg.sites + 1)}
    coeffs[cfg.target_site] = cfg.effective_target_cap_coeff
    params = PlacementParams(cfg.popularity, coeffs)
    eco = generate_placement(params, cfg.sites, cfg.users, cfg.placement_seed(replicate))
    return eco.with_privacy(cfg.privacy)


def smoothing_map(cfg: ExperimentConfig) -> dict:
    out = {s: cfg.smf for s in range(1, cfg.sites + 1)}
    out[cfg.target_site] = cfg.effective_target_smf
    return out


# ---------------------------------------------------------------------------
# Single auctions
# ---------------------------------------------------------------------------


@dataclass
class AuctionResult:
    rows: list = field(default_factory=list)  # bid_index, bidder, risk, norm_risk
    events: list = field(default_factory=list)  # bid_index, bidder, peer, slots
    state: AuctionState | None = None


def run_auction(
    eco: Ecosystem,
    constraint: SequenceConstraint,
    target,
    smoothing,
    sequence: list,
    strategy: str = STRATEGY_PROP,
    exh_params: ExhaustiveParams | None = None,
) -> AuctionResult:
    """Bootstrap round then the counted bids, tracing the target's risk.

    Proportional sites always bid their strategy; an exhaustive target
    plans every bid, including its bootstrap one (the bootstrap formula
    is part of the proportional strategy, not of the benchmark).
    """
    state = AuctionState.start(eco, constraint, target, smoothing)
    planner = None
    if strategy == STRATEGY_EXHAUSTIVE:
        if exh_params is None:
            raise ValueError("exhaustive runs need parameters")
        planner = Planner(target, exh_params)
    result = AuctionResult()

    def record_events(alloc, index):
        for peer in sorted(alloc.slots, key=str):
            result.events.append(
                {"bid_index": index, "bidder": alloc.bidder, "peer": peer, "slots": alloc.slots[peer]}
            )

    def bootstrap_known():
        order = sorted(eco.sites, key=str)
        after = order[order.index(target) + 1 :]
        return tuple(after) + tuple(sequence)

    if planner is not None:
        allocs = state.run_bootstrap_round(lambda st: planner.plan_bid(st, bootstrap_known()))
    else:
        allocs = state.run_bootstrap_round()
    for alloc in allocs:
        record_events(alloc, 0)

    bids_done = 0
    seq_pos = 0
    while bids_done < constraint.length:
        placed = None
        if planner is not None and constraint.cutline:
            known = tuple(sequence[seq_pos : seq_pos + exh_params.foresight])
            if target in state.eligible() and planner.decide_insert(state, known):
                placed = planner.plan_bid(state, known)
                state.apply(placed)
        if placed is None:
            if seq_pos >= len(sequence):
                raise ValueError("bidding sequence exhausted before the auction ended")
            bidder = sequence[seq_pos]
            seq_pos += 1
            if planner is not None and bidder == target:
                known = tuple(sequence[seq_pos : seq_pos + exh_params.foresight])
                placed = planner.plan_bid(state, known)
                state.apply(placed)
            else:
                placed = state.step_prop(bidder)
        bids_done += 1
        record_events(placed, bids_done)
        risk, norm = state.risk_of(target)
        result.rows.append(
            {"bid_index": bids_done, "bidder": placed.bidder, "risk": risk, "norm_risk": norm}
        )
    result.state = state
    return result


# ---------------------------------------------------------------------------
# Paired exhaustive-vs-proportional comparisons
# ---------------------------------------------------------------------------


@dataclass
class PairedMetrics:
    adv_freq: float
    abs_adv: float | None
    frac_adv: float | None
    median_rel_all: float
    samples: int


def paired_traces(
    eco: Ecosystem,
    constraint: SequenceConstraint,
    target,
    smoothing,
    sequence: list,
    exh_params: ExhaustiveParams,
) -> tuple:
    """Norm-risk traces of a prop target and its exhaustive twin.

    Both runs share the placement, capacities, smoothing, privacy level,
    and (without cutline) the bidding sequence.
    """
    prop_run = run_auction(eco, constraint, target, smoothing, sequence, STRATEGY_PROP)
    exh_run = run_auction(eco, constraint, target, smoothing, sequence, STRATEGY_EXHAUSTIVE, exh_params)
    prop_trace = [r["norm_risk"] for r in prop_run.rows]
    exh_trace = [r["norm_risk"] for r in exh_run.rows]
    return prop_trace, exh_trace


def paired_metrics(trace_pairs: list) -> PairedMetrics:
    """advFreq, absAdv, fracAdv over bid-index-aligned trace pairs.

    advFreq counts indices where the exhaustive twin strictly improved;
    absAdv and fracAdv are medians over those improving indices only.
    The all-pairs relative median treats a zero proportional risk as no
    improvement.
    """
    improving_abs = []
    improving_frac = []
    rel_all = []
    total = 0
    wins = 0
    for prop_trace, exh_trace in trace_pairs:
        if len(prop_trace) != len(exh_trace):
            raise ValueError("paired traces must share their length")
        for p, e in zip(prop_trace, exh_trace):
            total += 1
            rel_all.append((p - e) / p if p > 0 else 0.0)
            if e < p:
                wins += 1
                improving_abs.append(p - e)
                improving_frac.append((p - e) / p if p > 0 else 0.0)
    return PairedMetrics(
        adv_freq=wins / total if total else 0.0,
        abs_adv=statistics.median(improving_abs) if improving_abs else None,
        frac_adv=statistics.median(improving_frac) if improving_frac else None,
        median_rel_all=statistics.median(rel_all) if rel_all else 0.0,
        samples=total,
    )


def run_paired(cfg: ExperimentConfig) -> tuple:
    """All (replicate x sequence) paired runs for a config cell."""
    pairs = []
    rows = []
    for rep in range(cfg.replicates):
        eco = build_ecosystem(cfg, rep)
        exh_params = cfg.exhaustive_params(eco.cap(cfg.target_site))
        for seq_idx in range(cfg.sequences):
            constraint = cfg.constraint()
            sequence = generate_sequence(cfg.sites, constraint, cfg.sequence_seed(seq_idx))
            prop_trace, exh_trace = paired_traces(
                eco, constraint, cfg.target_site, smoothing_map(cfg), sequence, exh_params
            )
            pairs.append((prop_trace, exh_trace))
            for idx, (p, e) in enumerate(zip(prop_trace, exh_trace), start=1):
                rows.append(
                    {
                        "replicate": rep,
                        "sequence": seq_idx,
                        "bid_index": idx,
                        "prop_norm_risk": p,
                        "exh_norm_risk": e,
                    }
                )
    return paired_metrics(pairs), rows


# ---------------------------------------------------------------------------
# Attack runs
# ---------------------------------------------------------------------------


@dataclass
class AttackResult:
    rows: list = field(default_factory=list)  # bid_index, norm_risk, norm_cost_cum
    trace: list = field(default_factory=list)  # per-batch attacker rows
    norm_cost_window: float = 0.0
    vulnerable: int = 0
    max_budget_excess: float = 0.0


def _checker_batch(eco, target, auction, attack_state, params, known=()):
    if params.foresight == 0 and params.lookahead == 1:
        plan = atk.fast_path_lookahead1(eco, target, auction.alloc_to(target), attack_state, params)
    else:
        plan = atk.plan_attack(eco, target, auction, attack_state, params, known)
    atk.advance(eco, target, attack_state, plan, params)
    return plan


def run_attack_immediate(
    eco: Ecosystem,
    constraint: SequenceConstraint,
    target,
    smoothing,
    sequence: list,
    params: atk.AttackerParams,
) -> AttackResult:
    """Attack starting right after the bootstrap round.

    Batch ``r'`` lands before counted bid ``r'``, so the cost column at
    index ``r'`` reflects captures up to that point while the risk column
    reflects the allocations after bid ``r'``.
    """
    vuln = len(vulnerable_users(eco, target))
    state = AuctionState.start(eco, constraint, target, smoothing)
    state.run_bootstrap_round()
    attack = atk.AttackState()
    result = AttackResult(vulnerable=vuln)
    attack.bid_index = 1
    _checker_batch(eco, target, state, attack, params, tuple(sequence[:params.foresight]))
    result.max_budget_excess = max(
        result.max_budget_excess, (1.0 - attack.cumulative_dodge) - params.aggression
    )
    for idx, bidder in enumerate(sequence[: constraint.length], start=1):
        state.step_prop(bidder)
        _, norm_risk = state.risk_of(target)
        result.rows.append(
            {
                "bid_index": idx,
                "norm_risk": norm_risk,
                "norm_cost_cum": attack.cumulative_cost / vuln if vuln else 0.0,
            }
        )
        if idx < constraint.length:
            attack.bid_index = idx + 1
            known = tuple(sequence[idx : idx + params.foresight])
            _checker_batch(eco, target, state, attack, params, known)
            result.max_budget_excess = max(
                result.max_budget_excess, (1.0 - attack.cumulative_dodge) - params.aggression
            )
    result.trace = attack.trace
    result.norm_cost_window = attack.cumulative_cost / vuln if vuln else 0.0
    return result


def run_attack_window(
    eco: Ecosystem,
    constraint: SequenceConstraint,
    target,
    smoothing,
    sequence_seed,
    attacker_kind: str,
    params: atk.AttackerParams,
    window: int = 10,
    attacker_seed=None,
) -> AttackResult:
    """Attack over a bid window opening once responses are informed.

    Bids are drawn uniformly from the eligible bidders.  The window
    opens at the second counted bid of the first site to issue one (by
    then every site has responded at least once) and spans ``window``
    bids, the attacker stuffing after each.
    """
    vuln = len(vulnerable_users(eco, target))
    state = AuctionState.start(eco, constraint, target, smoothing)
    state.run_bootstrap_round()
    rng = random.Random(sequence_seed)
    result = AttackResult(vulnerable=vuln)

    def next_bidder():
        options = state.eligible()
        return rng.choice(options)

    # Warm-up: everyone bids at least once, then the first second bid.
    while not (min(state.counts.values()) >= 1 and max(state.counts.values()) >= 2):
        state.step_prop(next_bidder())

    greedy_state = None
    attack = None
    if attacker_kind == ATTACKER_GREEDY:
        greedy_state = greedy_mod.start_state(
            eco, state, target, params.aggression, attacker_seed
        )
        greedy_state.bid_index = 1
        greedy_mod.run_batch(eco, greedy_state)
        cum = lambda: greedy_state.cumulative_cost
        dodge = lambda: greedy_state.finalized_dodge
    elif attacker_kind == ATTACKER_CHECKER:
        attack = atk.AttackState()
        attack.bid_index = 1
        _checker_batch(eco, target, state, attack, params)
        cum = lambda: attack.cumulative_cost
        dodge = lambda: attack.cumulative_dodge
    else:
        raise ValueError(f"unsupported attacker kind {attacker_kind!r}")

    def record(idx):
        _, norm_risk = state.risk_of(target)
        result.rows.append(
            {
                "bid_index": idx,
                "norm_risk": norm_risk,
                "norm_cost_cum": cum() / vuln if vuln else 0.0,
            }
        )

    record(1)
    for idx in range(2, window + 1):
        state.step_prop(next_bidder())
        if greedy_state is not None:
            greedy_state.bid_index = idx
            greedy_mod.finalize_batch(eco, greedy_state, state)
            greedy_mod.run_batch(eco, greedy_state)
        else:
            attack.bid_index = idx
            _checker_batch(eco, target, state, attack, params)
        result.max_budget_excess = max(
            result.max_budget_excess, (1.0 - dodge()) - params.aggression
        )
        record(idx)
    if greedy_state is not None:
        greedy_mod.finalize_batch(eco, greedy_state, state)
        result.trace = greedy_state.trace
    else:
        result.trace = attack.trace
    result.max_budget_excess = max(
        result.max_budget_excess, (1.0 - dodge()) - params.aggression
    )
    result.norm_cost_window = cum() / vuln if vuln else 0.0
    return result


def run_attack(cfg: ExperimentConfig, mode: str = "window") -> list:
    """All (replicate x sequence) attack cells for a config."""
    out = []
    for rep in range(cfg.replicates):
        eco = build_ecosystem(cfg, rep)
        for seq_idx in range(cfg.sequences):
            if mode == "window":
                res = run_attack_window(
                    eco,
                    cfg.constraint(),
                    cfg.target_site,
                    smoothing_map(cfg),
                    cfg.sequence_seed(seq_idx),
                    cfg.attacker,
                    cfg.attacker_params(),
                    window=cfg.attack_window,
                    attacker_seed=cfg.attacker_seed(rep, seq_idx),
                )
            elif mode == "immediate":
                constraint = cfg.constraint()
                sequence = generate_sequence(cfg.sites, constraint, cfg.sequence_seed(seq_idx))
                res = run_attack_immediate(
                    eco, constraint, cfg.target_site, smoothing_map(cfg), sequence, cfg.attacker_params()
                )
            else:
                raise ValueError(f"unknown attack mode {mode!r}")
            out.append((rep, seq_idx, res))
    return out


# ---------------------------------------------------------------------------
# Micro-benchmarks
# ---------------------------------------------------------------------------


class CardinalityView:
    """Cardinality-only stand-in ecosystem for large-scale timing runs.

    Only the counts matter to the risk path, so a million-user system
    needs no materialized membership sets.
    """

    def __init__(self, n: int, users: int, privacy: str, cap: int):
        self.privacy = privacy
        self.n = n
        self.users = users
        self._cap = cap
        self.sites = list(range(1, n + 1))

    def peers(self, s) -> list:
        return [x for x in self.sites if x != s]

    def cap(self, s) -> int:
        return self._cap

    def site_size(self, s) -> int:
        return max(2, self.users // 2)

    def shared_count(self, s, s2) -> int:
        return max(1, self.users // 10)


@dataclass
class BenchReport:
    n: int
    cap: int
    users: int
    privacy: str
    first_bid_s: float
    respond_bid_s: float
    receive_each_s: float
    request_cost_s: float

    @property
    def time_ratio(self) -> float:
        """Bidding time over monitoring-request generation time."""
        bidding = self.respond_bid_s + (self.n - 1) * self.receive_each_s
        return bidding / (self.cap * self.request_cost_s)


def bench_bid(
    n: int,
    cap: int,
    users: int = 10_000,
    privacy: str = PSICA,
    request_cost: float = DEFAULT_REQUEST_COST,
    receive_samples: int = 200,
) -> BenchReport:
    """Wall-time of one response bid and of processing one received bid."""
    view = CardinalityView(n, users, privacy, cap)
    state = PropState(1, 1.0)
    t0 = time.perf_counter()
    first_bid(view, state)
    t_first = time.perf_counter() - t0
    rng = random.Random(7)
    for peer in view.peers(1):
        receive_allocation(state, view, peer, rng.randrange(0, max(2, cap // max(1, n - 1)) + 1))
        receive_allocation(state, view, peer, rng.randrange(0, max(2, cap // max(1, n - 1)) + 1))
    t0 = time.perf_counter()
    respond_bid(view, state)
    t_respond = time.perf_counter() - t0
    peers = view.peers(1)
    t0 = time.perf_counter()
    for i in range(receive_samples):
        receive_allocation(state, view, peers[i % len(peers)], (i * 13) % (cap + 1))
    t_receive = (time.perf_counter() - t0) / receive_samples
    return BenchReport(n, cap, users, privacy, t_first, t_respond, t_receive, request_cost)


# ---------------------------------------------------------------------------
# Output plumbing
# ---------------------------------------------------------------------------


def write_csv(path, rows: list, header: list) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=header)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def write_manifest(path, cfg: ExperimentConfig, extra: dict | None = None) -> None:
    payload = {"version": VERSION, "config": asdict(cfg)}
    payload["config"] = {
        k: ("inf" if isinstance(v, float) and math.isinf(v) else v)
        for k, v in payload["config"].items()
    }
    payload["seeds"] = {
        "placement": [cfg.placement_seed(i) for i in range(cfg.replicates)],
        "sequence": [cfg.sequence_seed(j) for j in range(cfg.sequences)],
    }
    if extra:
        payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_cells(fn, cells: list, workers: int = 1) -> list:
    """Map a pure cell function over a work queue, optionally in parallel."""
    if workers <= 1:
        return [fn(cell) for cell in cells]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, cells))
