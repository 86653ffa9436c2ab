"""Seeded Monte Carlo experiment runner with CSV/JSON emission.

One sweep iterates a single parameter over a value list; for every
(value, run) a fresh network, catalog, channel, and request draw is made
from seeds derived deterministically from the sweep seed, all configured
policies are executed on that same draw, and per-(value, policy) means and
standard deviations are aggregated into one CSV row.

The CSV schema is frozen (see CSV_COLUMNS); downstream tooling consumes
nothing else.  A JSON manifest records the config hash, seed, library
versions, and wall time.  HETCACHE_WORKERS selects the process count;
rows are sorted deterministically before writing, so the byte content is
independent of worker scheduling.
"""
from __future__ import annotations

import concurrent.futures
import hashlib
import json
import os
import platform
import time
from dataclasses import dataclass

import numpy as np
import scipy

from . import __version__
from .audit import audit_state
from .channel import sample_channel
from .config import apply_sweep_value, build_catalog, build_scenario, validate_config
from .model import sample_requests, total_cost
from .oracle import OracleBudget, exhaustive_delivery
from .orchestrator import (
    AsmConfig,
    PolicyConfig,
    ScenarioInfeasibleError,
    apply_policy,
    run_caching_phase,
    run_delivery_slot,
)

CSV_COLUMNS = (
    "sweep_parameter", "sweep_value", "policy", "runs",
    "mean_total_cost", "std_total_cost",
    "mean_power_cost", "std_power_cost",
    "mean_radio_bw_cost", "std_radio_bw_cost",
    "mean_link_bw_cost", "std_link_bw_cost",
    "mean_acceptance_ratio", "std_acceptance_ratio",
    "mean_asm_iterations", "audit_violations",
)


@dataclass(frozen=True)
class SweepSpec:
    """One swept parameter, its values, the policies to compare, and seeding."""

    swept_parameter: str
    values: tuple
    policies: tuple[PolicyConfig, ...]
    runs: int
    seed: int

    def __post_init__(self) -> None:
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        if not self.values:
            raise ValueError("values must be non-empty")
        if not self.policies:
            raise ValueError("need at least one policy")

    @classmethod
    def from_config(cls, doc: dict) -> "SweepSpec":
        sw = doc["sweep"]
        policies = tuple(
            PolicyConfig(
                caching=p["caching"],
                cooperative=p.get("cooperative", True),
                access=p.get("access", "noma"),
            )
            for p in sw["policies"]
        )
        return cls(sw["parameter"], tuple(sw["values"]), policies,
                   sw["runs"], sw["seed"])


@dataclass
class ResultRow:
    """Aggregated outcome of all Monte Carlo runs of one (value, policy)."""

    sweep_parameter: str
    sweep_value: float
    policy: str
    runs: int
    mean_total_cost: float
    std_total_cost: float
    mean_power_cost: float
    std_power_cost: float
    mean_radio_bw_cost: float
    std_radio_bw_cost: float
    mean_link_bw_cost: float
    std_link_bw_cost: float
    mean_acceptance_ratio: float
    std_acceptance_ratio: float
    mean_asm_iterations: float
    audit_violations: int
    wall_time: float = 0.0  # manifest only, never written to the CSV

    def csv_cells(self) -> list[str]:
        out = []
        for col in CSV_COLUMNS:
            val = getattr(self, col)
            out.append(val if isinstance(val, str) else _fmt(val))
        return out


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".10g")


def _run_seed(seed: int, value_index: int, run: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=seed, spawn_key=(value_index, run))


def _single_run(doc: dict, spec_tuple: tuple, value_index: int, run: int) -> list[dict]:
    """Execute every policy on one common network/catalog/request draw."""
    parameter, values, policies, runs, seed = spec_tuple
    doc = apply_sweep_value(doc, parameter, values[value_index])
    records = []
    for p_index, policy in enumerate(policies):
        draw = np.random.default_rng(_run_seed(seed, value_index, run))
        catalog = build_catalog(doc, draw)
        scenario = build_scenario(doc, catalog, draw)
        delta = sample_requests(catalog, scenario.n_users, draw)
        channel = sample_channel(scenario, draw)
        solver_rng = np.random.default_rng(
            np.random.SeedSequence(entropy=seed,
                                   spawn_key=(value_index, run, p_index)))
        record = {
            "value_index": value_index, "run": run, "policy": policy.label,
            "total": 0.0, "power": 0.0, "radio": 0.0, "link": 0.0,
            "acceptance": 0.0, "iterations": 0.0, "violations": 0,
        }
        try:
            rho = apply_policy(scenario, catalog, policy, solver_rng)
        except ScenarioInfeasibleError:
            records.append(record)
            continue
        slot = run_delivery_slot(scenario, rho, catalog, delta,
                                 channel, policy, solver_rng)
        requests = np.where(delta.any(axis=1), delta.argmax(axis=1), -1)
        violations = audit_state(
            scenario, slot.state, channel.h, catalog.sizes_bits,
            requests=requests, rejected=slot.rejected_users)
        record.update(
            total=slot.cost.total, power=slot.cost.power_cost,
            radio=slot.cost.radio_bw_cost, link=slot.cost.link_bw_cost,
            acceptance=slot.cost.acceptance_ratio,
            iterations=float(len(slot.trace)),
            violations=len(violations),
        )
        records.append(record)
    return records


def run_sweep(
    doc: dict,
    spec: SweepSpec | None = None,
    workers: int | None = None,
) -> tuple[list[ResultRow], dict]:
    """Run the configured sweep; returns rows plus the JSON manifest dict."""
    validate_config(doc)
    spec = spec or SweepSpec.from_config(doc)
    if workers is None:
        workers = int(os.environ.get("HETCACHE_WORKERS", "1"))
    spec_tuple = (spec.swept_parameter, spec.values, spec.policies,
                  spec.runs, spec.seed)
    started = time.perf_counter()

    jobs = [(vi, run) for vi in range(len(spec.values))
            for run in range(spec.runs)]
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(
                _single_run,
                *zip(*((doc, spec_tuple, vi, run) for vi, run in jobs)),
                chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        outputs = [_single_run(doc, spec_tuple, vi, run) for vi, run in jobs]

    records = [rec for group in outputs for rec in group]
    records.sort(key=lambda r: (r["value_index"], r["policy"], r["run"]))

    rows = []
    for vi, value in enumerate(spec.values):
        for policy in spec.policies:
            group = [r for r in records
                     if r["value_index"] == vi and r["policy"] == policy.label]
            series = {k: np.array([g[k] for g in group])
                      for k in ("total", "power", "radio", "link",
                                "acceptance", "iterations")}
            rows.append(ResultRow(
                sweep_parameter=spec.swept_parameter,
                sweep_value=float(value),
                policy=policy.label,
                runs=spec.runs,
                mean_total_cost=series["total"].mean(),
                std_total_cost=series["total"].std(),
                mean_power_cost=series["power"].mean(),
                std_power_cost=series["power"].std(),
                mean_radio_bw_cost=series["radio"].mean(),
                std_radio_bw_cost=series["radio"].std(),
                mean_link_bw_cost=series["link"].mean(),
                std_link_bw_cost=series["link"].std(),
                mean_acceptance_ratio=series["acceptance"].mean(),
                std_acceptance_ratio=series["acceptance"].std(),
                mean_asm_iterations=series["iterations"].mean(),
                audit_violations=int(sum(g["violations"] for g in group)),
            ))

    manifest = {
        "config_name": doc["name"],
        "config_sha256": config_hash(doc),
        "seed": spec.seed,
        "runs": spec.runs,
        "swept_parameter": spec.swept_parameter,
        "values": [float(v) for v in spec.values],
        "policies": [p.label for p in spec.policies],
        "workers": workers,
        "wall_time_s": round(time.perf_counter() - started, 3),
        "versions": {
            "hetcache": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "csv_columns": list(CSV_COLUMNS),
    }
    return rows, manifest


def config_hash(doc: dict) -> str:
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def write_csv(rows: list[ResultRow], path) -> None:
    lines = [",".join(CSV_COLUMNS)]
    lines += [",".join(row.csv_cells()) for row in rows]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_manifest(manifest: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def oracle_gap(
    doc: dict,
    instances: int = 20,
    seed: int = 7,
    power_levels: int = 8,
) -> list[dict]:
    """Heuristic vs. exhaustive-search cost on tiny instances.

    For each instance: build a network from the config, fill caches with
    the most-popular baseline, run one delivery slot, then exhaustively
    solve the same slot
    (same placement, same accepted requests) on the power grid.  The
    heuristic's own state is passed as a seed state, so the reported
    optimum never exceeds it.
    """
    policy = PolicyConfig(caching="mpc")
    budget = OracleBudget(power_levels=power_levels)
    results = []
    attempt = 0
    while len(results) < instances:
        attempt += 1
        if attempt > instances * 10:
            raise RuntimeError("could not build enough feasible tiny instances")
        draw = np.random.default_rng(
            np.random.SeedSequence(entropy=seed, spawn_key=(attempt,)))
        catalog = build_catalog(doc, draw)
        scenario = build_scenario(doc, catalog, draw)
        delta = sample_requests(catalog, scenario.n_users, draw)
        channel = sample_channel(scenario, draw)
        rho = apply_policy(scenario, catalog, policy, draw)
        slot = run_delivery_slot(scenario, rho, catalog, delta,
                                 channel, policy, draw)
        requests = np.where(delta.any(axis=1), delta.argmax(axis=1), -1)
        for u, _c in slot.rejected_users:
            requests[u] = -1
        if (requests < 0).all():
            continue
        heuristic = total_cost(slot.state, scenario).total
        res = exhaustive_delivery(
            scenario, rho, requests, channel.h, catalog.sizes_bits,
            budget, seed_states=(slot.state,))
        results.append({
            "instance": len(results),
            "heuristic_cost": heuristic,
            "oracle_cost": res.cost,
            "gap": (heuristic - res.cost) / res.cost,
            "states": res.states_visited,
        })
    return results
