"""Rendering of the four figure families from harness CSV files.

Families and the columns they consume:

* ``policy_sweep`` / ``mode_sweep`` read aggregated sweep rows
  (``sweep_parameter, sweep_value, policy, mean_total_cost,
  std_total_cost``): one mean line (or bar group) per policy with a
  one-standard-deviation band.
* ``convergence`` reads a per-iteration trace (``iteration, objective``).
* ``gap`` reads heuristic-vs-exhaustive results (``instance, gap``).

Rendering never mutates the input file and is deterministic for identical
input content.  A missing column raises :class:`SchemaError` naming it.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

FAMILIES = ("policy_sweep", "mode_sweep", "convergence", "gap")


class SchemaError(ValueError):
    """The input CSV lacks a column the figure family requires."""

    def __init__(self, column: str, family: str):
        self.column = column
        self.family = family
        super().__init__(
            f"family '{family}' requires column '{column}' missing from the CSV"
        )


@dataclass(frozen=True)
class FigureSpec:
    """One figure: input CSV, family, output image, optional axis labels."""

    input_csv: str | Path
    family: str
    output: str | Path
    xlabel: str | None = None
    ylabel: str | None = None

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(
                f"unknown family {self.family!r}; expected one of {FAMILIES}"
            )


def _read_table(path: str | Path) -> dict[str, list[str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        columns = {name: [] for name in reader.fieldnames or []}
        for row in reader:
            for name in columns:
                columns[name].append(row[name])
    return columns


def _require(table: dict[str, list[str]], names: tuple[str, ...], family: str):
    for name in names:
        if name not in table:
            raise SchemaError(name, family)
    return [np.asarray(table[name]) for name in names]


def _policy_series(table, family):
    value, policy, mean, std = _require(
        table,
        ("sweep_value", "policy", "mean_total_cost", "std_total_cost"),
        family,
    )
    value = value.astype(float)
    mean = mean.astype(float)
    std = std.astype(float)
    order = list(dict.fromkeys(policy))  # legend keeps the CSV's order
    series = []
    for name in order:
        sel = policy == name
        sub = np.argsort(value[sel], kind="stable")
        series.append((name, value[sel][sub], mean[sel][sub], std[sel][sub]))
    return series


def _render_policy_sweep(table, spec, ax):
    for name, x, mean, std in _policy_series(table, spec.family):
        ax.plot(x, mean, marker="o", label=name)
        ax.fill_between(x, mean - std, mean + std, alpha=0.2)
    ax.legend()
    param = table.get("sweep_parameter", ["value"])
    ax.set_xlabel(spec.xlabel or (param[0] if param else "value"))
    ax.set_ylabel(spec.ylabel or "mean total cost")


def _render_mode_sweep(table, spec, ax):
    series = _policy_series(table, spec.family)
    n_groups = len(series[0][1])
    width = 0.8 / len(series)
    base = np.arange(n_groups, dtype=float)
    for i, (name, x, mean, std) in enumerate(series):
        ax.bar(base + i * width, mean, width=width, yerr=std,
               capsize=3, label=name)
    ax.set_xticks(base + 0.4 - width / 2)
    ax.set_xticklabels([f"{v:g}" for v in series[0][1]])
    ax.legend()
    param = table.get("sweep_parameter", ["value"])
    ax.set_xlabel(spec.xlabel or (param[0] if param else "value"))
    ax.set_ylabel(spec.ylabel or "mean total cost")


def _render_convergence(table, spec, ax):
    iteration, objective = _require(
        table, ("iteration", "objective"), spec.family)
    ax.plot(iteration.astype(float), objective.astype(float), marker="o")
    ax.set_xlabel(spec.xlabel or "iteration")
    ax.set_ylabel(spec.ylabel or "objective")


def _render_gap(table, spec, ax):
    instance, gap = _require(table, ("instance", "gap"), spec.family)
    ax.bar(instance.astype(float), 100.0 * gap.astype(float))
    ax.set_xlabel(spec.xlabel or "instance")
    ax.set_ylabel(spec.ylabel or "optimality gap (%)")


_RENDERERS = {
    "policy_sweep": _render_policy_sweep,
    "mode_sweep": _render_mode_sweep,
    "convergence": _render_convergence,
    "gap": _render_gap,
}


def render(spec: FigureSpec) -> Path:
    """Render one figure to ``spec.output`` and return its path."""
    table = _read_table(spec.input_csv)
    if not table:
        raise SchemaError("<header>", spec.family)
    fig, ax = plt.subplots(figsize=(6.4, 4.2), dpi=120)
    try:
        _RENDERERS[spec.family](table, spec, ax)
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        out = Path(spec.output)
        fig.savefig(out)
    finally:
        plt.close(fig)
    return out
