"""Configuration files: schema, validation, and scenario construction.

A config is a JSON document mirroring the simulation parameter sheet
(geometry, radio, content catalog, caches, prices, sweep description).
``load_config`` validates against a jsonschema and returns a plain dict;
``build_scenario`` / ``build_catalog`` turn it into model objects with all
random draws taken from a caller-supplied generator.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import jsonschema
import numpy as np

from .model import (
    MACRO,
    SMALL,
    BaseStation,
    ContentCatalog,
    CostConstants,
    NetworkScenario,
)

CONFIG_DIR = Path(__file__).parent / "configs"

SWEEPABLE = ("users", "sbs_count", "sbs_cache_pct", "zipf_alpha")

_policy_schema = {
    "type": "object",
    "properties": {
        "caching": {"enum": ["ergodic", "mpc", "rc", "prc", "nc"]},
        "cooperative": {"type": "boolean"},
        "access": {"enum": ["noma", "oma"]},
    },
    "required": ["caching"],
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "geometry": {
            "type": "object",
            "properties": {
                "mbs_radius_m": {"type": "number", "exclusiveMinimum": 0},
                "sbs_radius_m": {"type": "number", "exclusiveMinimum": 0},
                "n_sbs": {"type": "integer", "minimum": 0},
            },
            "required": ["mbs_radius_m", "sbs_radius_m", "n_sbs"],
            "additionalProperties": False,
        },
        "users": {"type": "integer", "minimum": 1},
        "subcarriers": {"type": "integer", "minimum": 1},
        "subcarrier_bandwidth_khz": {"type": "number", "exclusiveMinimum": 0},
        "noise_dbm_per_hz": {"type": "number"},
        "path_loss_exponent": {"type": "number", "minimum": 2},
        "contents": {
            "type": "object",
            "properties": {
                "count": {"type": "integer", "minimum": 1},
                "zipf_alpha": {"type": "number", "minimum": 0},
                "mean_size_bits": {"type": "number", "exclusiveMinimum": 0},
                "lognormal_mu": {"type": "number"},
                "lognormal_sigma2": {"type": "number", "minimum": 0},
            },
            "required": ["count", "zipf_alpha", "mean_size_bits"],
            "additionalProperties": False,
        },
        "cache": {
            "type": "object",
            "properties": {
                "mbs_pct": {"type": "number", "minimum": 0},
                "sbs_pct": {"type": "number", "minimum": 0},
            },
            "required": ["mbs_pct", "sbs_pct"],
            "additionalProperties": False,
        },
        "power_mw": {
            "type": "object",
            "properties": {
                "mbs_max": {"type": "number", "exclusiveMinimum": 0},
                "sbs_max": {"type": "number", "exclusiveMinimum": 0},
                "mask": {"type": "number", "exclusiveMinimum": 0},
                "mbs_hardware": {"type": "number", "minimum": 0},
                "sbs_hardware": {"type": "number", "minimum": 0},
                "sleep": {"type": "number", "minimum": 0},
                "bbu": {"type": "number", "minimum": 0},
            },
            "required": ["mbs_max", "sbs_max", "mask"],
            "additionalProperties": False,
        },
        "l_max": {"type": "integer", "minimum": 1},
        "slot_duration_us": {"type": "number", "exclusiveMinimum": 0},
        "fronthaul_mbps": {"type": "number", "minimum": 0},
        "costs": {
            "type": "object",
            "properties": {
                "c_power": {"type": "number", "minimum": 0},
                "c_bw": {"type": "number", "minimum": 0},
                "c_fh": {"type": "number", "minimum": 0},
                "c_bh": {"type": "number", "minimum": 0},
            },
            "required": ["c_power", "c_bw", "c_fh", "c_bh"],
            "additionalProperties": False,
        },
        "channel_samples": {"type": "integer", "minimum": 1},
        "link_rate_bound": {"enum": ["min", "max"]},
        "sweep": {
            "type": "object",
            "properties": {
                "parameter": {"enum": list(SWEEPABLE)},
                "values": {"type": "array", "minItems": 1,
                           "items": {"type": "number"}},
                "policies": {"type": "array", "minItems": 1,
                             "items": _policy_schema},
                "runs": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
            },
            "required": ["parameter", "values", "policies", "runs", "seed"],
            "additionalProperties": False,
        },
    },
    "required": [
        "name", "geometry", "users", "subcarriers",
        "subcarrier_bandwidth_khz", "noise_dbm_per_hz",
        "path_loss_exponent", "contents", "cache", "power_mw", "l_max",
        "slot_duration_us", "fronthaul_mbps", "costs", "channel_samples",
    ],
    "additionalProperties": False,
}


class ConfigError(ValueError):
    """Invalid configuration document, message names the offending field."""


def validate_config(doc: dict) -> None:
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config field '{path}': {exc.message}") from exc


def load_config(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"not valid JSON: {exc}") from exc
    validate_config(doc)
    return doc


def shipped_config(name: str) -> Path:
    """Path of a packaged config file by stem name (desk, paper, tiny)."""
    path = CONFIG_DIR / f"{name}.json"
    if not path.exists():
        raise ConfigError(f"no shipped config named '{name}'")
    return path


def apply_sweep_value(doc: dict, parameter: str, value) -> dict:
    """Copy of the config with one swept parameter overridden."""
    out = json.loads(json.dumps(doc))
    if parameter == "users":
        out["users"] = int(value)
    elif parameter == "sbs_count":
        out["geometry"]["n_sbs"] = int(value)
    elif parameter == "sbs_cache_pct":
        out["cache"]["sbs_pct"] = float(value)
    elif parameter == "zipf_alpha":
        out["contents"]["zipf_alpha"] = float(value)
    else:
        raise ConfigError(f"unknown swept parameter '{parameter}'")
    return out


def build_catalog(doc: dict, rng: np.random.Generator) -> ContentCatalog:
    c = doc["contents"]
    return ContentCatalog.generate(
        c["count"], c["zipf_alpha"], c["mean_size_bits"], rng,
        lognormal_mu=c.get("lognormal_mu", 0.5),
        lognormal_sigma2=c.get("lognormal_sigma2", 1.5),
    )


def build_scenario(
    doc: dict, catalog: ContentCatalog, rng: np.random.Generator
) -> NetworkScenario:
    """Drop BS and user positions and assemble the scenario.

    The MBS sits at the origin; SBS centers are uniform in the MBS disk;
    each user picks a BS uniformly and lands uniformly in its disk.  Cache
    capacities are percentages of the realized total catalog size.
    """
    geo = doc["geometry"]
    n_sbs = geo["n_sbs"]
    power = doc["power_mw"]
    total_bits = float(catalog.sizes_bits.sum())
    cache_mbs = doc["cache"]["mbs_pct"] / 100.0 * total_bits
    cache_sbs = doc["cache"]["sbs_pct"] / 100.0 * total_bits

    def disk_point(radius, center=(0.0, 0.0)):
        ang = rng.uniform(0, 2 * math.pi)
        rad = radius * math.sqrt(rng.uniform())
        return (center[0] + rad * math.cos(ang), center[1] + rad * math.sin(ang))

    bss = [BaseStation(
        id=0, kind=MACRO, position=(0.0, 0.0),
        cache_capacity_bits=cache_mbs,
        p_max_mw=power["mbs_max"], p_mask_mw=power["mask"],
        l_max=doc["l_max"],
        p_hardware_mw=power.get("mbs_hardware", 0.0),
        p_sleep_mw=power.get("sleep", 0.0), p_bbu_mw=power.get("bbu", 0.0),
    )]
    for i in range(n_sbs):
        bss.append(BaseStation(
            id=i + 1, kind=SMALL,
            position=disk_point(geo["mbs_radius_m"]),
            cache_capacity_bits=cache_sbs,
            p_max_mw=power["sbs_max"], p_mask_mw=power["mask"],
            l_max=doc["l_max"],
            p_hardware_mw=power.get("sbs_hardware", 0.0),
            p_sleep_mw=power.get("sleep", 0.0), p_bbu_mw=power.get("bbu", 0.0),
        ))

    users = []
    for _ in range(doc["users"]):
        b = int(rng.integers(len(bss)))
        radius = geo["mbs_radius_m"] if b == 0 else geo["sbs_radius_m"]
        users.append(disk_point(radius, bss[b].position))

    w_hz = doc["subcarrier_bandwidth_khz"] * 1e3
    cap = np.full((n_sbs + 1, n_sbs + 1), doc["fronthaul_mbps"] * 1e6)
    np.fill_diagonal(cap, 0.0)
    return NetworkScenario(
        bss=tuple(bss),
        user_positions=np.asarray(users, dtype=float),
        n_subcarriers=doc["subcarriers"],
        total_bandwidth_hz=w_hz * doc["subcarriers"],
        noise_dbm_per_hz=doc["noise_dbm_per_hz"],
        path_loss_exponent=doc["path_loss_exponent"],
        slot_duration_s=doc["slot_duration_us"] * 1e-6,
        fronthaul_capacity_bps=cap,
        costs=CostConstants(**doc["costs"]),
        mc_samples=doc["channel_samples"],
        link_rate_bound=doc.get("link_rate_bound", "min"),
    )
