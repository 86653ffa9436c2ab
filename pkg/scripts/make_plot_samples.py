#!/usr/bin/env python3
"""Regenerate the sample CSV files shipped with the plotting package.

The plotting package consumes only the frozen CSV schemas, so the samples
are produced here, on the simulator side, and copied into its data folder:

* policy_sweep.csv  -- all five caching policies over the user-count sweep
* mode_sweep.csv    -- cooperation x multiplexing modes, same sweep
* convergence.csv   -- per-iteration objective trace of one power solve
* gap.csv           -- heuristic vs. exhaustive-search cost per tiny instance

Run from the repository root:  python3 scripts/make_plot_samples.py
"""
import csv
import json
import pathlib
import sys

import numpy as np

ROOT = pathlib.Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from hetcache.channel import sample_channel
from hetcache.config import build_catalog, build_scenario
from hetcache.harness import SweepSpec, oracle_gap, run_sweep, write_csv
from hetcache.model import AllocationState, sample_requests
from hetcache.orchestrator import (
    PolicyConfig,
    _capped_mask_powers,
    apply_policy,
    build_assignment,
    decide_cases,
)
from hetcache.powerdc import RateModel, solve_power_delivery

OUT = ROOT / "plots" / "src" / "hetcache_plots" / "samples"
RUNS = 8


def load(name: str) -> dict:
    path = ROOT / "src" / "hetcache" / "configs" / f"{name}.json"
    return json.loads(path.read_text())


def make_policy_sweep(desk: dict) -> None:
    spec = SweepSpec(
        swept_parameter="users", values=(6, 10, 14),
        policies=tuple(PolicyConfig(caching=c)
                       for c in ("ergodic", "mpc", "prc", "rc", "nc")),
        runs=RUNS, seed=1)
    rows, _ = run_sweep(desk, spec, workers=4)
    write_csv(rows, OUT / "policy_sweep.csv")


def make_mode_sweep(desk: dict) -> None:
    spec = SweepSpec(
        swept_parameter="users", values=(6, 10, 14),
        policies=tuple(
            PolicyConfig(caching="ergodic", access=a, cooperative=co)
            for co in (True, False) for a in ("noma", "oma")),
        runs=RUNS, seed=1)
    rows, _ = run_sweep(desk, spec, workers=4)
    write_csv(rows, OUT / "mode_sweep.csv")


def make_convergence(desk: dict) -> None:
    """Trace one delivery power solve; the file must be non-increasing."""
    rng = np.random.default_rng(3)
    catalog = build_catalog(desk, rng)
    scenario = build_scenario(desk, catalog, rng)
    policy = PolicyConfig(caching="mpc")
    rho = apply_policy(scenario, catalog, policy, rng)
    delta = sample_requests(catalog, scenario.n_users, rng)
    channel = sample_channel(scenario, rng)

    requests = np.where(delta.any(axis=1), delta.argmax(axis=1), -1)
    sizes = catalog.sizes_bits
    targets = np.zeros(scenario.n_users)
    for u in np.flatnonzero(requests >= 0):
        targets[u] = sizes[requests[u]] / scenario.slot_duration_s
    active = requests >= 0
    tau = build_assignment(scenario, channel.h, targets,
                           policy.effective_l_max(scenario), active)
    model = RateModel(channel.h, tau, scenario.noise_power_mw,
                      scenario.subcarrier_bandwidth_hz)
    p0 = _capped_mask_powers(scenario, tau)
    access = model.rates(p0).sum(axis=2)
    decision = decide_cases(scenario, rho, tau, requests, access, rng,
                            cooperative=policy.cooperative)
    state = AllocationState.zeros(scenario, catalog.n_contents)
    state.tau, state.rho, state.p = tau, np.asarray(rho), p0
    state.x, state.y, state.z = decision.x, decision.y, decision.z
    path = OUT / "convergence.csv"
    solve_power_delivery(scenario, state, requests, channel.h, sizes,
                         trace_path=str(path))
    with open(path, encoding="utf-8") as fh:
        trace = [float(r["objective"]) for r in csv.DictReader(fh)]
    drops = [b - a for a, b in zip(trace, trace[1:])]
    if any(d > 1e-9 * max(1.0, abs(trace[0])) for d in drops):
        raise RuntimeError(f"trace is not non-increasing: {trace}")
    print(f"convergence trace: {len(trace)} iterations")


def make_gap(tiny: dict) -> None:
    rows = oracle_gap(tiny, instances=20, seed=7, power_levels=8)
    fields = ("instance", "heuristic_cost", "oracle_cost", "gap")
    with open(OUT / "gap.csv", "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in fields})


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    desk, tiny = load("desk"), load("tiny")
    make_policy_sweep(desk)
    make_mode_sweep(desk)
    make_convergence(desk)
    make_gap(tiny)
    for name in sorted(p.name for p in OUT.glob("*.csv")):
        print("wrote", name)


if __name__ == "__main__":
    main()
