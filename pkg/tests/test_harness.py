"""Config schema, sweep runner, and CLI checks."""
import json

import numpy as np
import pytest

from hetcache.cli import main
from hetcache.config import (
    ConfigError,
    apply_sweep_value,
    build_catalog,
    build_scenario,
    load_config,
    shipped_config,
    validate_config,
)
from hetcache.harness import (
    CSV_COLUMNS,
    SweepSpec,
    oracle_gap,
    run_sweep,
    write_csv,
    write_manifest,
)


def _tiny_doc():
    return load_config(shipped_config("tiny"))


def _fast_doc(values=(3,), runs=2, policies=None):
    doc = _tiny_doc()
    doc["sweep"]["values"] = list(values)
    doc["sweep"]["runs"] = runs
    if policies is not None:
        doc["sweep"]["policies"] = policies
    return doc


# --- config -----------------------------------------------------------------
def test_shipped_configs_validate():
    for name in ("desk", "paper", "tiny"):
        validate_config(load_config(shipped_config(name)))


def test_schema_error_names_the_field():
    doc = _tiny_doc()
    doc["geometry"]["n_sbs"] = -1
    with pytest.raises(ConfigError, match="geometry.n_sbs"):
        validate_config(doc)


def test_unknown_key_rejected():
    doc = _tiny_doc()
    doc["frobnicate"] = True
    with pytest.raises(ConfigError):
        validate_config(doc)


def test_sweep_overrides():
    doc = _tiny_doc()
    assert apply_sweep_value(doc, "users", 7)["users"] == 7
    assert apply_sweep_value(doc, "sbs_count", 3)["geometry"]["n_sbs"] == 3
    assert apply_sweep_value(doc, "sbs_cache_pct", 5.0)["cache"]["sbs_pct"] == 5.0
    assert apply_sweep_value(doc, "zipf_alpha", 1.2)["contents"]["zipf_alpha"] == 1.2
    assert doc["users"] == 3  # original untouched


def test_build_scenario_geometry_and_caches():
    doc = _tiny_doc()
    rng = np.random.default_rng(0)
    catalog = build_catalog(doc, rng)
    scenario = build_scenario(doc, catalog, rng)
    assert scenario.n_bs == 2
    assert scenario.n_users == 3
    total = catalog.sizes_bits.sum()
    caps = scenario.cache_capacities()
    assert caps[0] == pytest.approx(doc["cache"]["mbs_pct"] / 100.0 * total)
    assert caps[1] == pytest.approx(doc["cache"]["sbs_pct"] / 100.0 * total)
    # all positions inside the macro disk plus the small-cell radius
    dist = np.linalg.norm(scenario.user_positions, axis=1)
    assert (dist <= 120.0 + 30.0 + 1e-9).all()


# --- sweep ------------------------------------------------------------------
def test_degenerate_sweep_yields_one_row():
    doc = _fast_doc(values=(3,), runs=1)
    rows, manifest = run_sweep(doc)
    assert len(rows) == 1
    assert rows[0].runs == 1
    assert rows[0].std_total_cost == 0.0
    assert manifest["csv_columns"] == list(CSV_COLUMNS)


def test_same_seed_is_byte_identical(tmp_path):
    doc = _fast_doc(runs=2)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    rows1, _ = run_sweep(doc)
    rows2, _ = run_sweep(doc)
    write_csv(rows1, a)
    write_csv(rows2, b)
    assert a.read_bytes() == b.read_bytes()


def test_worker_count_does_not_change_bytes(tmp_path):
    doc = _fast_doc(runs=4)
    a, b = tmp_path / "serial.csv", tmp_path / "pooled.csv"
    rows1, _ = run_sweep(doc, workers=1)
    rows2, _ = run_sweep(doc, workers=4)
    write_csv(rows1, a)
    write_csv(rows2, b)
    assert a.read_bytes() == b.read_bytes()


def test_sweep_emits_clean_audits_and_sane_stats():
    doc = _fast_doc(runs=3)
    rows, _ = run_sweep(doc)
    for row in rows:
        assert row.audit_violations == 0
        assert row.std_total_cost >= 0
        assert 0.0 <= row.mean_acceptance_ratio <= 1.0


def test_manifest_records_hash_seed_versions(tmp_path):
    doc = _fast_doc(runs=1)
    rows, manifest = run_sweep(doc)
    assert manifest["seed"] == doc["sweep"]["seed"]
    assert len(manifest["config_sha256"]) == 64
    for key in ("hetcache", "numpy", "scipy", "python"):
        assert manifest["versions"][key]
    out = tmp_path / "m.json"
    write_manifest(manifest, out)
    assert json.loads(out.read_text())["seed"] == manifest["seed"]


def test_spec_validation():
    with pytest.raises(ValueError):
        SweepSpec("users", (), (), 1, 0)
    with pytest.raises(ValueError):
        SweepSpec("users", (10,), (), 0, 0)


# --- oracle gap --------------------------------------------------------------
def test_oracle_gap_bounded_on_tiny_instances():
    doc = _tiny_doc()
    results = oracle_gap(doc, instances=3, seed=5)
    assert len(results) == 3
    for r in results:
        assert r["heuristic_cost"] >= r["oracle_cost"] - 1e-9
        assert r["gap"] >= -1e-12


# --- cli ---------------------------------------------------------------------
def test_cli_validate_shipped_config():
    assert main(["validate-config", "--config", "tiny"]) == 0
    assert main(["validate-config", "--config", "desk"]) == 0


def test_cli_usage_errors_exit_2(capsys):
    assert main(["no-such-command"]) == 2
    assert main(["sweep", "--config", "tiny", "--bogus-flag"]) == 2
    capsys.readouterr()


def test_cli_bad_config_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"name": "x"}')
    assert main(["validate-config", "--config", str(bad)]) == 2
    assert "config" in capsys.readouterr().err


def test_cli_cache_then_deliver_roundtrip(tmp_path, capsys):
    placement = tmp_path / "placement.npz"
    rc = main(["cache", "--config", "tiny", "--policy", "mpc",
               "--out", str(placement), "--seed", "3"])
    assert rc == 0
    assert placement.exists()
    trace = tmp_path / "trace.csv"
    rc = main(["deliver", "--config", "tiny", "--placement", str(placement),
               "--seed", "3", "--trace-out", str(trace)])
    assert rc == 0
    lines = trace.read_text().strip().splitlines()
    assert lines[0] == "iteration,objective,max_violation"
    objs = [float(l.split(",")[1]) for l in lines[1:]]
    assert objs == sorted(objs, reverse=True) or len(objs) == 1
    capsys.readouterr()


def test_cli_sweep_writes_csv_and_manifest(tmp_path, capsys):
    doc = _fast_doc(runs=1)
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(doc))
    out = tmp_path / "rows.csv"
    rc = main(["sweep", "--config", str(cfg), "--out", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 2
    assert (tmp_path / "rows.csv.manifest.json").exists()
    capsys.readouterr()
