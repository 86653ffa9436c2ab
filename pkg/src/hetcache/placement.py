"""Caching-phase content placement as per-BS two-constraint 0/1 knapsacks.

Each BS independently picks the set of contents maximizing cached popularity
mass subject to its storage capacity and its ergodic delivery budget
(total bits deliverable in one slot at the current ergodic rates).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EXACT_LIMIT = 25  # branch-and-bound up to this many items, greedy beyond


@dataclass(frozen=True)
class PlacementInstance:
    """One BS's knapsack: items with size / demand weights and a value."""

    storage_cap: float  # M_b, bits
    delivery_budget: float  # Q_b, bits deliverable per slot
    sizes: np.ndarray  # s_c
    demands: np.ndarray  # d_c * s_c
    values: np.ndarray  # maximized, default d_c * s_c

    def __post_init__(self) -> None:
        if self.storage_cap < 0 or self.delivery_budget < 0:
            raise ValueError("capacities must be non-negative")
        for name in ("sizes", "demands", "values"):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr)
        if not (self.sizes.shape == self.demands.shape == self.values.shape):
            raise ValueError("item arrays must share a shape")

    @property
    def n_items(self) -> int:
        return self.sizes.shape[0]

    def feasible(self, selection: np.ndarray) -> bool:
        return (
            float(self.sizes @ selection) <= self.storage_cap + 1e-9
            and float(self.demands @ selection) <= self.delivery_budget + 1e-9
        )


def solve_knapsack(instance: PlacementInstance) -> np.ndarray:
    """0/1 selection maximizing value under both weight constraints.

    Exact branch-and-bound for instances up to EXACT_LIMIT items, greedy by
    density with 1-swap local improvement above.  Ties break toward lower
    content index (the exact search visits take-first in density order and
    only replaces an incumbent on strict improvement).
    """
    if instance.n_items == 0:
        return np.zeros(0, dtype=np.int8)
    if instance.n_items <= EXACT_LIMIT:
        return _branch_and_bound(instance)
    return _greedy_with_swaps(instance)


def _fractional_bound(values, weights, capacity) -> float:
    """Fractional knapsack relaxation for one constraint."""
    density = np.where(weights > 0, values / np.where(weights > 0, weights, 1.0), np.inf)
    remaining = capacity
    bound = 0.0
    for i in np.argsort(-density):
        v, w = values[i], weights[i]
        if w <= 0:
            bound += v
        elif w <= remaining:
            bound += v
            remaining -= w
        else:
            bound += v * remaining / w
            break
    return bound


def _branch_and_bound(instance: PlacementInstance) -> np.ndarray:
    n = instance.n_items
    sizes, demands, values = instance.sizes, instance.demands, instance.values
    # density order wrt the tighter normalized weight
    with np.errstate(divide="ignore", invalid="ignore"):
        load = np.maximum(
            np.where(instance.storage_cap > 0, sizes / max(instance.storage_cap, 1e-300), np.inf),
            np.where(instance.delivery_budget > 0, demands / max(instance.delivery_budget, 1e-300), np.inf),
        )
    density = np.where(load > 0, values / np.where(load == 0, 1.0, load), np.inf)
    order = np.lexsort((np.arange(n), -density))
    s_o, d_o, v_o = sizes[order], demands[order], values[order]

    best_value = -1.0
    best_sel: np.ndarray | None = None
    sel = np.zeros(n, dtype=np.int8)

    def suffix_bound(k: int, cap_s: float, cap_d: float) -> float:
        return min(
            _fractional_bound(v_o[k:], s_o[k:], cap_s),
            _fractional_bound(v_o[k:], d_o[k:], cap_d),
        )

    def recurse(k: int, cap_s: float, cap_d: float, value: float) -> None:
        nonlocal best_value, best_sel
        if k == n:
            if value > best_value:
                best_value = value
                best_sel = sel.copy()
            return
        if value + suffix_bound(k, cap_s, cap_d) <= best_value + 1e-12:
            return
        if s_o[k] <= cap_s + 1e-9 and d_o[k] <= cap_d + 1e-9:
            sel[k] = 1
            recurse(k + 1, cap_s - s_o[k], cap_d - d_o[k], value + v_o[k])
            sel[k] = 0
        recurse(k + 1, cap_s, cap_d, value)

    recurse(0, instance.storage_cap, instance.delivery_budget, 0.0)
    out = np.zeros(n, dtype=np.int8)
    if best_sel is not None:
        out[order] = best_sel
    return out


def _greedy_with_swaps(instance: PlacementInstance) -> np.ndarray:
    n = instance.n_items
    sizes, demands, values = instance.sizes, instance.demands, instance.values
    cap_s = max(instance.storage_cap, 0.0)
    cap_d = max(instance.delivery_budget, 0.0)
    load = np.maximum(
        sizes / max(cap_s, 1e-300), demands / max(cap_d, 1e-300)
    )
    order = np.lexsort((np.arange(n), -values / np.maximum(load, 1e-300)))
    sel = np.zeros(n, dtype=np.int8)
    used_s = used_d = 0.0
    for i in order:
        if used_s + sizes[i] <= cap_s + 1e-9 and used_d + demands[i] <= cap_d + 1e-9:
            sel[i] = 1
            used_s += sizes[i]
            used_d += demands[i]
    improved = True
    while improved:
        improved = False
        ins = np.flatnonzero(sel)
        outs = np.flatnonzero(sel == 0)
        for j in outs:  # try a 1-for-1 swap that raises value
            for i in ins:
                if values[j] <= values[i]:
                    continue
                if (
                    used_s - sizes[i] + sizes[j] <= cap_s + 1e-9
                    and used_d - demands[i] + demands[j] <= cap_d + 1e-9
                ):
                    sel[i], sel[j] = 0, 1
                    used_s += sizes[j] - sizes[i]
                    used_d += demands[j] - demands[i]
                    improved = True
                    break
            if improved:
                break
    return sel


def solve_placement(instances: list[PlacementInstance]) -> np.ndarray:
    """Stack the per-BS knapsack solutions into rho[b, c]."""
    if not instances:
        raise ValueError("need at least one placement instance")
    return np.stack([solve_knapsack(inst) for inst in instances])
