"""Command line front end: auction, paired, attack, bench, ingest."""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import asdict
from pathlib import Path

from . import dataset as dataset_mod
from . import harness
from .ecosystem import Ecosystem
from .sequence import generate_sequence, load_sequence


def _load_config(args) -> harness.ExperimentConfig:
    if args.config:
        cfg = harness.ExperimentConfig.from_text(Path(args.config).read_text())
    else:
        cfg = harness.ExperimentConfig()
    if args.seed is not None:
        cfg.base_seed = args.seed
    if args.preset:
        cfg.privacy = args.preset
    if args.constraint == "psi-star":
        for key, value in harness.PRESET_PSI_STAR.items():
            setattr(cfg, key, value)
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _add_common(sub):
    sub.add_argument("--config", help="experiment config file (key = value lines)")
    sub.add_argument("--seed", type=int, default=None, help="override the base seed")
    sub.add_argument("--out-dir", default="out", help="output directory")
    sub.add_argument("--preset", choices=["psi", "psica"], help="privacy level preset")
    sub.add_argument(
        "--constraint",
        choices=["psi-star"],
        help="apply the no-cutline / no-foresight / unconstrained-slack preset",
    )


def cmd_auction(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    rows = []
    events = []
    for rep in range(cfg.replicates):
        eco = harness.build_ecosystem(cfg, rep)
        for seq_idx in range(cfg.sequences):
            constraint = cfg.constraint()
            if args.sequence_file:
                sequence = load_sequence(Path(args.sequence_file).read_text())
            else:
                sequence = generate_sequence(cfg.sites, constraint, cfg.sequence_seed(seq_idx))
            exh = (
                cfg.exhaustive_params(eco.cap(cfg.target_site))
                if cfg.target_strategy == harness.STRATEGY_EXHAUSTIVE
                else None
            )
            res = harness.run_auction(
                eco,
                constraint,
                cfg.target_site,
                harness.smoothing_map(cfg),
                sequence,
                cfg.target_strategy,
                exh,
            )
            for row in res.rows:
                rows.append({"replicate": rep, "sequence": seq_idx, **row})
            for ev in res.events:
                events.append({"replicate": rep, "sequence": seq_idx, **ev})
    harness.write_csv(out / "auction_risk.csv", rows, ["replicate", "sequence", "bid_index", "bidder", "risk", "norm_risk"])
    harness.write_csv(out / "auction_events.csv", events, ["replicate", "sequence", "bid_index", "bidder", "peer", "slots"])
    harness.write_manifest(out / "manifest.json", cfg)
    print(f"wrote {len(rows)} risk rows to {out / 'auction_risk.csv'}")
    return 0


def cmd_paired(args) -> int:
    cfg = _load_config(args)
    cfg.target_strategy = harness.STRATEGY_EXHAUSTIVE
    out = _out_dir(args)
    metrics, rows = harness.run_paired(cfg)
    harness.write_csv(
        out / "paired_risk.csv",
        rows,
        ["replicate", "sequence", "bid_index", "prop_norm_risk", "exh_norm_risk"],
    )
    summary = {
        "adv_freq": metrics.adv_freq,
        "abs_adv": metrics.abs_adv,
        "frac_adv": metrics.frac_adv,
        "median_rel_all": metrics.median_rel_all,
        "samples": metrics.samples,
    }
    harness.write_manifest(out / "manifest.json", cfg, {"summary": summary})
    print(
        f"advFreq={metrics.adv_freq:.4f} absAdv={metrics.abs_adv} "
        f"fracAdv={metrics.frac_adv} medianRelAll={metrics.median_rel_all:.4f}"
    )
    return 0


def cmd_attack(args) -> int:
    cfg = _load_config(args)
    if cfg.attacker == harness.ATTACKER_NONE:
        cfg.attacker = harness.ATTACKER_GREEDY
    out = _out_dir(args)
    cells = harness.run_attack(cfg, mode=args.mode)
    rows = []
    trace = []
    for rep, seq_idx, res in cells:
        for row in res.rows:
            rows.append({"replicate": rep, "sequence": seq_idx, **row})
        for t in res.trace:
            trace.append({"replicate": rep, "sequence": seq_idx, **t})
    harness.write_csv(
        out / "attack_metrics.csv", rows, ["replicate", "sequence", "bid_index", "norm_risk", "norm_cost_cum"]
    )
    harness.write_csv(
        out / "attack_trace.csv",
        trace,
        ["replicate", "sequence", "bid_index", "peer", "attempts", "batch_dodge", "cumulative_dodge", "expected_gain"],
    )
    harness.write_manifest(out / "manifest.json", cfg, {"mode": args.mode})
    worst = max((res.max_budget_excess for _, _, res in cells), default=0.0)
    print(f"wrote {len(rows)} metric rows; worst budget excess {worst:.3e}")
    return 0


def cmd_bench(args) -> int:
    out = _out_dir(args)
    rows = []
    for n in args.sites:
        for cap in args.caps:
            report = harness.bench_bid(n, cap, users=args.users, request_cost=args.request_cost)
            rows.append(
                {
                    "sites": n,
                    "cap": cap,
                    "users": args.users,
                    "respond_ms": report.respond_bid_s * 1e3,
                    "receive_us": report.receive_each_s * 1e6,
                    "first_bid_ms": report.first_bid_s * 1e3,
                    "time_ratio": report.time_ratio,
                }
            )
            print(
                f"n={n} cap={cap}: respond {report.respond_bid_s * 1e3:.2f} ms, "
                f"receive {report.receive_each_s * 1e6:.2f} us, ratio {report.time_ratio:.4f}"
            )
    harness.write_csv(
        out / "bench.csv",
        rows,
        ["sites", "cap", "users", "respond_ms", "receive_us", "first_bid_ms", "time_ratio"],
    )
    return 0


def cmd_ingest(args) -> int:
    salt = os.environ.get(args.salt_env)
    if not salt:
        print(f"error: environment variable {args.salt_env} is empty or unset", file=sys.stderr)
        return 2
    with open(args.input, encoding="utf-8", errors="replace") as fh:
        eco, table, summary = dataset_mod.ingest(fh, salt)
    Path(args.out).write_text(eco.dump())
    reuse_rows = [
        {
            "site_a": a,
            "site_b": b,
            "shared": table.shared[(a, b)],
            "same_password": table.same.get((a, b), 0),
            "rate": float(table.rate(a, b)),
        }
        for a, b in table.pairs()
    ]
    harness.write_csv(args.reuse_out, reuse_rows, ["site_a", "site_b", "shared", "same_password", "rate"])
    stats_rows = dataset_mod.site_statistics(eco)
    stats_path = Path(args.out).with_suffix(".stats.csv")
    harness.write_csv(stats_path, stats_rows, ["site", "total_users", "shared_users", "capturable_users"])
    print(
        f"lines={summary.lines} malformed={summary.malformed} duplicates={summary.duplicates} "
        f"hashed={summary.hashed_dropped} conflicting={summary.conflicting_dropped}"
    )
    print(
        f"kept {summary.entries_kept} entries, {summary.sites_kept}/{summary.sites_total} sites, "
        f"{summary.users_kept}/{summary.users_total} users in the largest component"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slotbarter", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("auction", help="run seeded auctions and trace the target's risk")
    _add_common(p)
    p.add_argument("--sequence-file", help="replay a whitespace-separated bidder id list")
    p.set_defaults(fn=cmd_auction)

    p = subs.add_parser("paired", help="exhaustive-vs-proportional paired comparison")
    _add_common(p)
    p.set_defaults(fn=cmd_paired)

    p = subs.add_parser("attack", help="run a stuffing attacker against live auctions")
    _add_common(p)
    p.add_argument("--mode", choices=["window", "immediate"], default="window")
    p.set_defaults(fn=cmd_attack)

    p = subs.add_parser("bench", help="micro-benchmark bidding-step costs")
    p.add_argument("--out-dir", default="out")
    p.add_argument("--sites", type=int, nargs="+", default=[100, 1000, 10000])
    p.add_argument("--caps", type=int, nargs="+", default=[100])
    p.add_argument("--users", type=int, default=10_000)
    p.add_argument(
        "--request-cost",
        type=float,
        default=harness.DEFAULT_REQUEST_COST,
        help="seconds per monitoring request generation",
    )
    p.set_defaults(fn=cmd_bench)

    p = subs.add_parser("ingest", help="parse a breach dump into an ecosystem file")
    p.add_argument("--input", required=True, help="site<TAB>email<TAB>password lines")
    p.add_argument("--salt-env", required=True, help="environment variable holding the hash salt")
    p.add_argument("--out", required=True, help="ecosystem output path")
    p.add_argument("--reuse-out", required=True, help="reuse-rate CSV output path")
    p.set_defaults(fn=cmd_ingest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
