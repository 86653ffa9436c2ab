"""Exhaustive reference solvers for very small instances.

Brute-force enumeration over user/subcarrier assignments, provisioning
cases, and a geometric transmit-power grid.  Exponential in every
dimension, so a state budget guards against accidental blow-ups; the
point is to bound the optimality gap of the polynomial heuristics on
instances small enough to enumerate.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .model import AllocationState, NetworkScenario, total_cost

LN2 = math.log(2.0)


class OracleBudgetExceeded(RuntimeError):
    """Raised when the enumeration would visit more states than allowed."""

    def __init__(self, estimate: float, limit: float):
        super().__init__(
            f"enumeration would visit about {estimate:.3g} states, above the "
            f"budget of {limit:.3g}; shrink the instance or raise the budget"
        )
        self.estimate = estimate
        self.limit = limit


@dataclass(frozen=True)
class OracleBudget:
    """Knobs bounding the exhaustive search."""

    max_states: float = 1e8
    power_levels: int = 8
    chunk: int = 1 << 16

    def __post_init__(self) -> None:
        if self.power_levels < 2:
            raise ValueError("need at least two power levels (zero and mask)")
        if self.max_states <= 0 or self.chunk < 1:
            raise ValueError("budget limits must be positive")


@dataclass
class OracleResult:
    cost: float
    state: AllocationState | None
    states_visited: int = 0
    feasible: bool = field(init=False)

    def __post_init__(self) -> None:
        self.feasible = np.isfinite(self.cost)


def power_grid(p_mask_mw: float, levels: int) -> np.ndarray:
    """Zero plus a geometric ladder from mask/64 up to the mask."""
    if levels < 2:
        raise ValueError("levels must be at least 2")
    if levels == 2:
        ladder = np.array([p_mask_mw])
    else:
        ladder = np.geomspace(p_mask_mw / 64.0, p_mask_mw, levels - 1)
    return np.concatenate(([0.0], ladder))


def _tau_combinations(scenario: NetworkScenario, users: list[int]):
    """Yield every assignment tensor placing each listed user on one BS
    and a nonempty subcarrier subset, respecting the multiplexing caps."""
    n_bs, n_users = scenario.n_bs, scenario.n_users
    n_sub = scenario.n_subcarriers
    subsets = [s for r in range(1, n_sub + 1)
               for s in itertools.combinations(range(n_sub), r)]
    options = [(b, s) for b in range(n_bs) for s in subsets]
    l_max = scenario.l_max()
    for combo in itertools.product(options, repeat=len(users)):
        occ = np.zeros((n_bs, n_sub), dtype=int)
        ok = True
        for b, subset in combo:
            for n in subset:
                occ[b, n] += 1
                if occ[b, n] > l_max[b]:
                    ok = False
                    break
            if not ok:
                break
        if not ok:
            continue
        tau = np.zeros((n_bs, n_users, n_sub), dtype=np.int8)
        for u, (b, subset) in zip(users, combo):
            for n in subset:
                tau[b, u, n] = 1
        yield tau


def _subcarrier_table(
    scenario: NetworkScenario,
    h: np.ndarray,
    tau: np.ndarray,
    n: int,
    grid_by_bs: list[np.ndarray],
):
    """Enumerate power combinations limited to one subcarrier.

    ``h`` may carry a leading sample axis; rates are then sample means and
    the decode-order rows use sample-mean interference.  Returns per-combo
    powers, per-user rate contributions, per-BS power sums; combinations
    breaking the decode order are dropped.
    """
    samples = h if h.ndim == 4 else h[None]
    h_ref = samples.mean(axis=0)
    noise = scenario.noise_power_mw
    w = scenario.subcarrier_bandwidth_hz

    entries = [(b, u) for b in range(scenario.n_bs)
               for u in range(scenario.n_users) if tau[b, u, n]]
    if not entries:
        zero = np.zeros((1, 0))
        return entries, zero, np.zeros((1, scenario.n_users)), np.zeros((1, scenario.n_bs))

    k = len(entries)
    own = np.array([[s[b, u, n] for b, u in entries] for s in samples])  # (S, k)
    coef = np.zeros((len(samples), k, k))
    for t, (bt, ut) in enumerate(entries):
        for e, (be, ue) in enumerate(entries):
            if be == bt:
                if ue != ut and h_ref[bt, ue, n] >= h_ref[bt, ut, n]:
                    coef[:, t, e] = own[:, t]
            else:
                coef[:, t, e] = samples[:, be, ut, n]

    grids = [grid_by_bs[b] for b, _ in entries]
    p = np.stack(np.meshgrid(*grids, indexing="ij"), axis=-1).reshape(-1, k)

    den = noise + np.einsum("ce,ste->sct", p, coef)  # (S, combos, k)
    gamma = own[:, None, :] * p[None] / den
    rate_entries = (w * np.log1p(gamma) / LN2).mean(axis=0)  # (combos, k)

    den_ref = den.mean(axis=0)
    own_ref = own.mean(axis=0)
    keep = np.ones(len(p), dtype=bool)
    for s in range(k):
        for t in range(k):
            bs, us = entries[s]
            bt, ut = entries[t]
            if s == t or bs != bt or own_ref[s] < own_ref[t]:
                continue
            keep &= own_ref[s] * den_ref[:, t] >= own_ref[t] * den_ref[:, s] * (1 - 1e-9)

    p, rate_entries = p[keep], rate_entries[keep]
    user_rates = np.zeros((len(p), scenario.n_users))
    bs_power = np.zeros((len(p), scenario.n_bs))
    for e, (b, u) in enumerate(entries):
        user_rates[:, u] += rate_entries[:, e]
        bs_power[:, b] += p[:, e]
    return entries, p, user_rates, bs_power


def _joint_blocks(tables, chunk: int):
    """Chunked cartesian product of per-subcarrier tables.

    Yields (multi-index tuple, user rates, per-BS powers) blocks so memory
    stays bounded regardless of the joint combination count.
    """
    sizes = [len(t[1]) for t in tables]
    total = int(np.prod(sizes))
    for start in range(0, total, chunk):
        flat = np.arange(start, min(start + chunk, total))
        multi = np.unravel_index(flat, sizes)
        rates = sum(t[2][idx] for t, idx in zip(tables, multi))
        power = sum(t[3][idx] for t, idx in zip(tables, multi))
        yield multi, rates, power


def _case_options(scenario, rho, pairs, cooperative):
    """All provisioning choices per requested (BS, content) pair."""
    out = []
    for b, c in pairs:
        if rho[b, c]:
            out.append([("x", b)])
            continue
        opts = []
        if cooperative:
            opts += [("y", i) for i in range(scenario.n_bs) if i != b and rho[i, c]]
        opts.append(("z", b))
        out.append(opts)
    return out


def _estimate_states(scenario, users, levels) -> float:
    # Sum over one user's (BS, subset) options of levels^|subset| is
    # n_bs * ((1 + levels)^n_sub - 1); the joint grid is that to the
    # power of the user count, times the provisioning-case choices.
    per_user = scenario.n_bs * ((1.0 + levels) ** scenario.n_subcarriers - 1.0)
    return per_user ** len(users)


def exhaustive_delivery(
    scenario: NetworkScenario,
    rho: np.ndarray,
    requests: np.ndarray,
    h: np.ndarray,
    content_sizes: np.ndarray,
    budget: OracleBudget | None = None,
    cooperative: bool = True,
    seed_states: tuple[AllocationState, ...] = (),
) -> OracleResult:
    """Minimum-cost delivery slot by full enumeration.

    Every user with a request is served: assignments, provisioning cases,
    and grid powers are enumerated jointly, infeasible combinations are
    discarded, and the cheapest survivor is returned.  ``seed_states``
    lets a caller inject known-feasible states (e.g. a heuristic's
    output) so the reported optimum never exceeds them.
    """
    budget = budget or OracleBudget()
    requests = np.asarray(requests, dtype=int)
    users = [u for u in range(scenario.n_users) if requests[u] >= 0]
    n_contents = rho.shape[1]

    estimate = _estimate_states(scenario, users, budget.power_levels)
    if estimate > budget.max_states:
        raise OracleBudgetExceeded(estimate, budget.max_states)

    best_cost = math.inf
    best_state: AllocationState | None = None
    for state in seed_states:
        cost = total_cost(state, scenario).total
        if cost < best_cost:
            best_cost, best_state = cost, state.copy()

    grid_by_bs = [power_grid(bs.p_mask_mw, budget.power_levels) for bs in scenario.bss]
    slot = scenario.slot_duration_s
    need_bits = np.array([content_sizes[requests[u]] for u in users])
    p_max = scenario.p_max()
    costs = scenario.costs
    hw = np.array([bs.p_hardware_mw for bs in scenario.bss])
    sleep = np.array([bs.p_sleep_mw for bs in scenario.bss])
    bbu = sum(bs.p_bbu_mw for bs in scenario.bss)
    visited = 0

    for tau in _tau_combinations(scenario, users):
        pairs = sorted({(int(np.argmax(tau[:, u, :].any(axis=1))), int(requests[u]))
                        for u in users})
        requester_sets = [[u for u in users
                           if requests[u] == c and tau[b, u, :].any()]
                          for b, c in pairs]
        case_lists = _case_options(scenario, rho, pairs, cooperative)
        case_combos = list(itertools.product(*case_lists))
        base = costs.c_bw * float(tau.sum()) * scenario.subcarrier_bandwidth_hz / 1e3

        tables = [_subcarrier_table(scenario, h, tau, n, grid_by_bs)
                  for n in range(scenario.n_subcarriers)]
        for multi, rates, power in _joint_blocks(tables, budget.chunk):
            visited += len(rates)
            ok = (power <= p_max[None] * (1 + 1e-12)).all(axis=1)
            for i, u in enumerate(users):
                b = int(np.argmax(tau[:, u, :].any(axis=1)))
                ok &= rates[:, u] * slot >= need_bits[i] * (1 - 1e-9)
            if not ok.any():
                continue
            rates, power = rates[ok], power[ok]
            kept = np.nonzero(ok)[0]

            p_cost = np.where(power > 0, hw[None] + costs.c_power * power,
                              sleep[None]).sum(axis=1) + bbu
            link_need = np.empty((len(rates), len(pairs)))
            for j, reqs in enumerate(requester_sets):
                vals = rates[:, reqs]
                link_need[:, j] = (vals.min(axis=1) if scenario.link_rate_bound == "min"
                                   else vals.max(axis=1))

            for combo in case_combos:
                coef = np.zeros(len(pairs))
                load: dict[tuple[int, int], np.ndarray] = {}
                for j, ((kind, src), (b, _c)) in enumerate(zip(combo, pairs)):
                    if kind == "y":
                        coef[j] = costs.c_fh
                        key = (src, b)
                        load[key] = load.get(key, 0.0) + link_need[:, j]
                    elif kind == "z":
                        coef[j] = costs.c_bh
                total = p_cost + base + link_need @ coef
                valid = np.ones(len(total), dtype=bool)
                for (i, b), used in load.items():
                    valid &= used <= scenario.fronthaul_capacity_bps[i, b] * (1 + 1e-9)
                total = np.where(valid, total, math.inf)
                j_min = int(np.argmin(total))
                if total[j_min] < best_cost:
                    best_cost = float(total[j_min])
                    best_state = _assemble(
                        scenario, n_contents, rho, tau, tables,
                        tuple(m[kept[j_min]] for m in multi),
                        pairs, combo, link_need[j_min])
    return OracleResult(best_cost, best_state, visited)


def _assemble(scenario, n_contents, rho, tau, tables, multi, pairs, combo, link_need):
    state = AllocationState.zeros(scenario, n_contents)
    state.rho = np.array(rho, dtype=np.int8)
    state.tau = tau.copy()
    for n, (entries, p, _, _) in enumerate(tables):
        row = p[multi[n]]
        for e, (b, u) in enumerate(entries):
            state.p[b, u, n] = row[e]
    for j, ((kind, src), (b, c)) in enumerate(zip(combo, pairs)):
        if kind == "x":
            state.x[b, c] = 1
        elif kind == "y":
            state.y[src, b, c] = 1
            state.r_fh[src, b, c] = link_need[j]
        else:
            state.z[b, c] = 1
            state.r_bh[b, c] = link_need[j]
    return state


def exhaustive_caching(instances) -> tuple[np.ndarray, float]:
    """Optimal placement by subset enumeration, one knapsack per BS.

    Accepts the same per-BS instance objects as the polynomial placement
    solver and returns the stacked selection plus its total value.
    """
    rows = []
    total = 0.0
    for inst in instances:
        n = inst.n_items
        if n > 30:
            raise OracleBudgetExceeded(2.0 ** n, 2.0 ** 30)
        best_val, best_sel = -1.0, np.zeros(n, dtype=np.int8)
        for bits in range(1 << n):
            sel = np.array([(bits >> i) & 1 for i in range(n)], dtype=np.int8)
            if not inst.feasible(sel):
                continue
            val = float(sel @ inst.values)
            if val > best_val:
                best_val, best_sel = val, sel
        rows.append(best_sel)
        total += best_val
    return np.stack(rows), total
