"""Command-line entry point.

Subcommands:
  cache            run the caching phase, save placement/assignment/powers
  deliver          run delivery slots from a saved placement
  sweep            run the configured Monte Carlo sweep, write CSV + manifest
  oracle-gap       heuristic vs. exhaustive search on tiny instances
  validate-config  schema-check a config file and exit

All subcommands take a config file via --config (path or the name of a
shipped config: desk, paper, tiny).  Exit codes: 0 success, 1 runtime
error, 2 usage/config error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .channel import sample_channel
from .config import ConfigError, load_config, shipped_config, validate_config
from .harness import SweepSpec, oracle_gap, run_sweep, write_csv, write_manifest
from .model import sample_requests, total_cost
from .orchestrator import (
    PolicyConfig,
    ScenarioInfeasibleError,
    run_caching_phase,
    run_delivery_slot,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hetcache",
        description="Cache-enabled heterogeneous network cost simulator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True,
                       help="config file path, or shipped name (desk/paper/tiny)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config's sweep seed")

    p_cache = sub.add_parser("cache", help="run the caching phase")
    common(p_cache)
    p_cache.add_argument("--policy", default="ergodic",
                         choices=["ergodic", "mpc", "rc", "prc", "nc"])
    p_cache.add_argument("--out", required=True,
                         help="output .npz with rho/tau/p and the trace")

    p_del = sub.add_parser("deliver", help="run delivery slots from a placement")
    common(p_del)
    p_del.add_argument("--placement", required=True,
                       help=".npz produced by the cache subcommand")
    p_del.add_argument("--slots", type=int, default=1)
    p_del.add_argument("--trace-out", default=None,
                       help="optional per-iteration objective trace CSV")

    p_sweep = sub.add_parser("sweep", help="run the configured Monte Carlo sweep")
    common(p_sweep)
    p_sweep.add_argument("--out", required=True, help="output CSV path")
    p_sweep.add_argument("--manifest", default=None,
                         help="manifest path (default: <out>.manifest.json)")
    p_sweep.add_argument("--workers", type=int, default=None,
                         help="process count (default: HETCACHE_WORKERS or 1)")

    p_gap = sub.add_parser("oracle-gap",
                           help="heuristic vs. exhaustive search on tiny instances")
    common(p_gap)
    p_gap.add_argument("--instances", type=int, default=20)
    p_gap.add_argument("--levels", type=int, default=8,
                       help="power grid levels for the exhaustive search")

    p_val = sub.add_parser("validate-config", help="schema-check a config file")
    p_val.add_argument("--config", required=True)
    return parser


def _resolve_config(name_or_path: str) -> dict:
    path = Path(name_or_path)
    if not path.exists() and "/" not in name_or_path:
        path = shipped_config(name_or_path)
    return load_config(path)


def _cmd_cache(args) -> int:
    doc = _resolve_config(args.config)
    from .config import build_catalog, build_scenario

    seed = args.seed if args.seed is not None else doc.get("sweep", {}).get("seed", 0)
    rng = np.random.default_rng(seed)
    catalog = build_catalog(doc, rng)
    scenario = build_scenario(doc, catalog, rng)
    policy = PolicyConfig(caching=args.policy)
    try:
        result = run_caching_phase(scenario, catalog, policy, rng)
    except ScenarioInfeasibleError as exc:
        print(f"caching phase infeasible: {exc}", file=sys.stderr)
        return 1
    np.savez(args.out, rho=result.rho, tau=result.tau, p=result.p,
             trace=np.asarray(result.trace), seed=seed,
             sizes_bits=catalog.sizes_bits, popularity=catalog.popularity)
    print(f"caching phase done: cost trace {result.trace[0]:.4g} -> "
          f"{result.trace[-1]:.4g} in {len(result.trace)} steps, "
          f"{int(result.rho.sum())} contents cached, wrote {args.out}")
    return 0


def _cmd_deliver(args) -> int:
    doc = _resolve_config(args.config)
    from .config import build_catalog, build_scenario

    saved = np.load(args.placement)
    seed = args.seed if args.seed is not None else int(saved["seed"])
    rng = np.random.default_rng(seed)
    catalog = build_catalog(doc, rng)
    scenario = build_scenario(doc, catalog, rng)
    policy = PolicyConfig(caching="mpc")
    rho = saved["rho"]
    totals = []
    for slot_idx in range(args.slots):
        delta = sample_requests(catalog, scenario.n_users, rng)
        channel = sample_channel(scenario, rng)
        trace_path = None
        if args.trace_out:
            trace_path = args.trace_out if args.slots == 1 else (
                f"{args.trace_out}.{slot_idx}")
        slot = run_delivery_slot(scenario, rho, catalog, delta, channel,
                                 policy, rng, trace_path=trace_path)
        totals.append(slot.cost.total)
        print(f"slot {slot_idx}: cost {slot.cost.total:.4g} "
              f"(power {slot.cost.power_cost:.4g}, radio {slot.cost.radio_bw_cost:.4g}, "
              f"links {slot.cost.link_bw_cost:.4g}), "
              f"acceptance {slot.cost.acceptance_ratio:.3f}")
    print(f"mean cost over {args.slots} slot(s): {np.mean(totals):.4g}")
    return 0


def _cmd_sweep(args) -> int:
    doc = _resolve_config(args.config)
    if "sweep" not in doc:
        print("config has no sweep section", file=sys.stderr)
        return 2
    spec = SweepSpec.from_config(doc)
    if args.seed is not None:
        spec = SweepSpec(spec.swept_parameter, spec.values, spec.policies,
                         spec.runs, args.seed)
    rows, manifest = run_sweep(doc, spec, workers=args.workers)
    write_csv(rows, args.out)
    manifest_path = args.manifest or f"{args.out}.manifest.json"
    write_manifest(manifest, manifest_path)
    bad = sum(r.audit_violations for r in rows)
    print(f"wrote {len(rows)} rows to {args.out} "
          f"(manifest {manifest_path}, audit violations: {bad})")
    return 1 if bad else 0


def _cmd_oracle_gap(args) -> int:
    doc = _resolve_config(args.config)
    seed = args.seed if args.seed is not None else doc.get("sweep", {}).get("seed", 7)
    results = oracle_gap(doc, instances=args.instances, seed=seed,
                         power_levels=args.levels)
    gaps = np.array([r["gap"] for r in results])
    for r in results:
        print(f"instance {r['instance']:2d}: heuristic {r['heuristic_cost']:.6g} "
              f"oracle {r['oracle_cost']:.6g} gap {100 * r['gap']:.2f}%")
    print(f"mean gap {100 * gaps.mean():.2f}% over {len(results)} instances "
          f"(max {100 * gaps.max():.2f}%)")
    return 0


def _cmd_validate(args) -> int:
    doc = _resolve_config(args.config)
    validate_config(doc)
    print(f"config '{doc['name']}' is valid")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    handlers = {
        "cache": _cmd_cache,
        "deliver": _cmd_deliver,
        "sweep": _cmd_sweep,
        "oracle-gap": _cmd_oracle_gap,
        "validate-config": _cmd_validate,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"file not found: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - last-resort reporting
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
