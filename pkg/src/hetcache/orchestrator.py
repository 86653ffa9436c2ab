"""Outer block-coordinate loops for the two operating phases, plus the
baseline caching policies and the access / cooperation mode switches.

Caching phase (per epoch): pick cached contents per BS, associate users and
subcarriers, then minimize transmit power against the ergodic rate implied
by the cached demand; cycle until the cost settles.

Delivery phase (per slot): assign requesting users, pick a provisioning case
per (BS, content), then minimize the full network cost over powers and
transport rates; cycle likewise.  Requests that cannot meet their deadline
even at full power are rejected one at a time, worst shortfall first.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelState, sample_channel_set
from .delivery import DeliveryDecision, decide_cases
from .hungarian import INFEASIBLE_COST, allocate_subcarriers, associate_users, min_power_for_rate
from .model import AllocationState, ContentCatalog, CostBreakdown, NetworkScenario, total_cost
from .placement import PlacementInstance, solve_knapsack
from .powerdc import InfeasibleStartError, RateModel, solve_power_caching, solve_power_delivery

CACHING_POLICIES = ("ergodic", "mpc", "prc", "rc", "nc")


class ScenarioInfeasibleError(RuntimeError):
    """No admissible subset of users yields a feasible operating point."""


@dataclass(frozen=True)
class AsmConfig:
    """Outer-loop stopping rule shared by both phases."""

    tolerance: float = 1e-3
    max_iters: int = 10
    sca_tolerance: float = 1e-3
    sca_max_iters: int = 30
    epoch_slots: int = 256

    def __post_init__(self) -> None:
        if not 0 < self.tolerance < 1:
            raise ValueError("tolerance must lie in (0, 1)")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.epoch_slots < 1:
            raise ValueError("epoch_slots must be at least 1")


@dataclass(frozen=True)
class PolicyConfig:
    """Caching policy plus access and cooperation mode switches."""

    caching: str = "ergodic"
    access: str = "noma"  # "noma" | "oma"
    cooperative: bool = True

    def __post_init__(self) -> None:
        if self.caching not in CACHING_POLICIES:
            raise ValueError(f"unknown caching policy {self.caching!r}")
        if self.access not in ("noma", "oma"):
            raise ValueError(f"unknown access mode {self.access!r}")

    def effective_l_max(self, scenario: NetworkScenario) -> np.ndarray:
        base = scenario.l_max()
        return np.ones_like(base) if self.access == "oma" else base

    @property
    def label(self) -> str:
        coop = "co" if self.cooperative else "nc"
        return f"{self.caching}-{coop}-{self.access}"


@dataclass
class CachingResult:
    rho: np.ndarray
    tau: np.ndarray
    p: np.ndarray
    trace: list[float]
    dropped_users: list[int]
    channel_samples: np.ndarray


@dataclass
class SlotResult:
    state: AllocationState
    cost: CostBreakdown
    trace: list[float]
    rejected_users: set
    decision: DeliveryDecision


# --- assignment construction ---------------------------------------------------
def _capped_mask_powers(scenario: NetworkScenario, tau: np.ndarray) -> np.ndarray:
    """Full-throttle start: per-variable mask, scaled down to the BS budget."""
    p = tau * scenario.p_mask()[:, None, None]
    totals = p.sum(axis=(1, 2))
    caps = scenario.p_max()
    for b in range(scenario.n_bs):
        if totals[b] > caps[b]:
            p[b] *= caps[b] / totals[b]
    return p.astype(float)


def build_assignment(
    scenario: NetworkScenario,
    h_ref: np.ndarray,
    targets: np.ndarray,
    l_max: np.ndarray,
    active: np.ndarray,
) -> np.ndarray:
    """User association and subcarrier allocation from min-power costs.

    h_ref is a single (B, U, N) gain reference (the sample mean during the
    caching phase, the slot draw during delivery).  Users outside ``active``
    or with no mask-feasible link are left unassigned (all-zero tau rows).
    """
    n_bs, n_users, n_sub = h_ref.shape
    noise = scenario.noise_power_mw
    w = scenario.subcarrier_bandwidth_hz
    with np.errstate(over="ignore"):
        snr_needed = 2.0 ** (np.asarray(targets) / w) - 1.0
    with np.errstate(divide="ignore"):
        need_p = snr_needed[None, :, None] * noise / h_ref  # (B, U, N)
    need_p = np.where(need_p <= scenario.p_mask()[:, None, None], need_p, INFEASIBLE_COST)

    p1 = need_p.min(axis=2)
    p1[:, ~active] = INFEASIBLE_COST

    def allocate(assignment):
        # BSs allocate in turn, pricing each subcarrier under the full-mask
        # interference of the cells already placed so collisions are avoided
        # whenever spare subcarriers exist
        tau = np.zeros((n_bs, n_users, n_sub), dtype=np.int8)
        int_noise = np.full((n_users, n_sub), noise)
        blocked: list[tuple[int, int]] = []
        for b in range(n_bs):
            users_b = np.flatnonzero(assignment == b)
            if users_b.size == 0:
                continue
            with np.errstate(divide="ignore"):
                need_pb = (snr_needed[users_b, None] * int_noise[users_b, :]
                           / h_ref[b, users_b, :])
            p_mask = scenario.bss[b].p_mask_mw
            need_pb = np.where(need_pb <= p_mask, need_pb, INFEASIBLE_COST)
            # leave every user at least one finite column so matching never
            # drops a user solely because interference pricing saturated its
            # row, but remember the pairing so association can be retried
            for k in range(users_b.size):
                if not (need_pb[k] < INFEASIBLE_COST).any():
                    need_pb[k] = need_p[b, users_b[k], :]
                    blocked.append((b, int(users_b[k])))

            def can_make_rate(k: int, owned: list[int]) -> bool:
                u = users_b[k]
                capacity = sum(
                    w * np.log2(1.0 + p_mask * h_ref[b, u, n] / int_noise[u, n])
                    for n in owned
                )
                return capacity >= targets[u]

            tau_b, _ = allocate_subcarriers(need_pb, int(l_max[b]), can_make_rate)
            tau[b, users_b, :] = tau_b
            used = tau_b.any(axis=0)
            int_noise[:, used] += p_mask * h_ref[b, :, used].T
        return tau, blocked

    # retry association after crossing out pairings whose every subcarrier
    # was infeasible under inter-cell interference; the retries stop once the
    # allocation is collision-clean or no blocked user has an alternative BS
    for _ in range(1 + n_bs):
        assignment = associate_users(p1, n_sub, l_max)
        tau, blocked = allocate(assignment)
        progressed = False
        for b, u in blocked:
            trial = p1[:, u].copy()
            trial[b] = INFEASIBLE_COST
            if (trial < INFEASIBLE_COST).any():
                p1[b, u] = INFEASIBLE_COST
                progressed = True
        if not progressed:
            break
    return tau


# --- caching policies -----------------------------------------------------------
def _fill_in_order(sizes: np.ndarray, order: np.ndarray, capacity: float) -> np.ndarray:
    sel = np.zeros(sizes.shape[0], dtype=np.int8)
    used = 0.0
    for c in order:
        if used + sizes[c] <= capacity + 1e-9:
            sel[c] = 1
            used += sizes[c]
    return sel


def apply_policy(
    scenario: NetworkScenario,
    catalog: ContentCatalog,
    policy: PolicyConfig,
    rng: np.random.Generator,
    asm: AsmConfig | None = None,
) -> np.ndarray:
    """Cache placement rho (B, C) under the requested baseline policy.

    The optimizing policy delegates to the full caching phase; the baselines
    fill each cache greedily in a policy-specific content order.
    """
    if policy.caching == "ergodic":
        return run_caching_phase(scenario, catalog, policy, rng, asm or AsmConfig()).rho
    caps = scenario.cache_capacities()
    sizes = catalog.sizes_bits
    n_contents = catalog.n_contents
    rho = np.zeros((scenario.n_bs, n_contents), dtype=np.int8)
    if policy.caching == "nc":
        return rho
    for b in range(scenario.n_bs):
        if policy.caching == "mpc":
            order = np.argsort(-catalog.popularity, kind="stable")
        elif policy.caching == "rc":
            order = rng.permutation(n_contents)
        else:  # prc: popularity-square-root weighted order
            weights = np.sqrt(catalog.popularity)
            order = rng.choice(n_contents, size=n_contents, replace=False,
                               p=weights / weights.sum())
        rho[b] = _fill_in_order(sizes, order, caps[b])
    return rho


# --- caching phase ----------------------------------------------------------------
def run_caching_phase(
    scenario: NetworkScenario,
    catalog: ContentCatalog,
    policy: PolicyConfig,
    rng: np.random.Generator,
    asm: AsmConfig | None = None,
) -> CachingResult:
    """Joint placement / assignment / power plan for one caching epoch.

    Users that cannot be served even at full power are dropped, cheapest
    channel first, until the remaining set admits a feasible starting point.
    """
    asm = asm or AsmConfig()
    samples = sample_channel_set(scenario, scenario.mc_samples, rng)
    h_mean = samples.mean(axis=0)
    l_max = policy.effective_l_max(scenario)
    mean_gain = h_mean.max(axis=(0, 2))  # per-user best mean link
    active = np.ones(scenario.n_users, dtype=bool)

    while True:
        if not active.any():
            raise ScenarioInfeasibleError("every user was dropped during admission")
        try:
            rho, tau, p, trace = _caching_asm(
                scenario, catalog, samples, h_mean, l_max, active, asm,
                cooperative=policy.cooperative,
            )
            dropped = [int(u) for u in np.flatnonzero(~active)]
            return CachingResult(rho, tau, p, trace, dropped, samples)
        except InfeasibleStartError:
            candidates = np.flatnonzero(active)
            worst = candidates[np.argmin(mean_gain[candidates])]
            active[worst] = False


def _cooperative_placement(scenario, catalog, budgets, users_per_bs,
                           cooperative, rounds=3):
    """Coordinate-descent cache placement with link-price-aware values.

    Each BS's knapsack values weight expected cached bits by the link cost a
    hit avoids: a local hit saves the backhaul price unless a neighbor already
    holds the content (then only the cheaper forward-link price), and in
    cooperative mode caching also upgrades sole-donor neighbors' misses from
    backhaul to forward-link deliveries.  Rounds repeat until the placement
    stops changing.
    """
    costs = scenario.costs
    n_bs = scenario.n_bs
    n_contents = catalog.n_contents
    caps = scenario.cache_capacities()
    demand_bits = catalog.popularity * catalog.sizes_bits
    rho = np.zeros((n_bs, n_contents), dtype=np.int8)
    for _ in range(rounds):
        prev = rho.copy()
        for b in range(n_bs):
            others = [i for i in range(n_bs) if i != b]
            if cooperative and others:
                donor = rho[others].astype(bool).any(axis=0)
            else:
                donor = np.zeros(n_contents, dtype=bool)
            unit = np.where(donor, costs.c_fh, costs.c_bh)
            weight = users_per_bs[b] * unit
            if cooperative:
                for i in others:
                    rest = [j for j in others if j != i]
                    covered = (rho[rest].astype(bool).any(axis=0)
                               if rest else np.zeros(n_contents, dtype=bool))
                    sole = ~rho[i].astype(bool) & ~covered
                    weight = weight + users_per_bs[i] * (costs.c_bh - costs.c_fh) * sole
            inst = PlacementInstance(
                storage_cap=float(caps[b]),
                delivery_budget=float(budgets[b]),
                sizes=catalog.sizes_bits,
                demands=demand_bits,
                values=demand_bits * weight,
            )
            rho[b] = solve_knapsack(inst)
        if np.array_equal(rho, prev):
            break
    return rho


def _caching_asm(scenario, catalog, samples, h_mean, l_max, active, asm,
                 cooperative=True):
    slot = scenario.slot_duration_s
    sizes = catalog.sizes_bits
    demand_bits = catalog.popularity * sizes  # expected bits per request
    ref_target = float(demand_bits.sum()) / slot

    tau = build_assignment(
        scenario, h_mean, np.full(scenario.n_users, ref_target), l_max, active
    )
    if not tau.any():
        raise InfeasibleStartError("no user could be assigned at the reference rate")

    model = RateModel(samples, tau, scenario.noise_power_mw,
                      scenario.subcarrier_bandwidth_hz)
    p_start = _capped_mask_powers(scenario, tau)
    start_rates = model.ergodic_rates(p_start).sum(axis=2)  # (B, U)
    users_per_bs = tau.any(axis=2).sum(axis=1).astype(float)

    def place(budgets):
        # a cache placement persists across a whole epoch of delivery slots
        return _cooperative_placement(
            scenario, catalog, budgets * asm.epoch_slots, users_per_bs,
            cooperative,
        )

    budgets = slot * start_rates.sum(axis=1)
    rho = place(budgets)

    def targets_for(rho_now):
        # split each BS's cached-demand rate across its users pro rata to
        # what they can absorb at the full-throttle start
        t = np.zeros(scenario.n_users)
        for b in range(scenario.n_bs):
            demand_rate = float((rho_now[b] * demand_bits).sum()) / slot
            rates_b = start_rates[b]
            total = rates_b.sum()
            if demand_rate <= 0 or total <= 0:
                continue
            t += demand_rate * rates_b / total
        return t

    def phase_cost(p_now):
        state = AllocationState.zeros(scenario, catalog.n_contents)
        state.tau, state.rho, state.p = tau, rho, p_now
        return total_cost(state, scenario).total

    p = p_start
    trace = [phase_cost(p)]
    for _ in range(asm.max_iters):
        targets = targets_for(rho)
        res = solve_power_caching(
            scenario, tau, samples, targets, p_start,
            tol=asm.sca_tolerance, max_iters=asm.sca_max_iters,
        )
        new_cost = phase_cost(res.p)
        if new_cost > trace[-1] + 1e-9 * max(1.0, abs(trace[-1])):
            break
        p = res.p
        improvement = trace[-1] - new_cost
        trace.append(new_cost)
        # re-place against the budget the optimized plan actually sustains
        new_budgets = slot * model.ergodic_rates(p_start).sum(axis=(1, 2))
        new_rho = place(new_budgets)
        if np.array_equal(new_rho, rho) and improvement <= asm.tolerance * max(1.0, abs(new_cost)):
            break
        rho = new_rho
    return rho, tau, p, trace


# --- delivery phase ----------------------------------------------------------------
def run_delivery_slot(
    scenario: NetworkScenario,
    rho: np.ndarray,
    catalog: ContentCatalog,
    delta: np.ndarray,
    channel: ChannelState,
    policy: PolicyConfig,
    rng: np.random.Generator,
    asm: AsmConfig | None = None,
    trace_path: str | None = None,
) -> SlotResult:
    """Serve one slot of requests against a fixed cache placement.

    ``trace_path``, if given, receives the per-iteration objective trace
    as a CSV with columns iteration, objective, max_violation.
    """
    asm = asm or AsmConfig()
    requests = np.where(delta.any(axis=1), delta.argmax(axis=1), -1)
    sizes = catalog.sizes_bits
    l_max = policy.effective_l_max(scenario)
    noise = scenario.noise_power_mw

    requesters = np.flatnonzero(requests >= 0)
    rejected: set[tuple[int, int]] = set()
    targets = np.zeros(scenario.n_users)
    for u in requesters:
        targets[u] = sizes[requests[u]] / scenario.slot_duration_s

    while True:
        active = np.array([
            requests[u] >= 0 and (u, int(requests[u])) not in rejected
            for u in range(scenario.n_users)
        ])
        tau = build_assignment(scenario, channel.h, targets, l_max, active)
        model = RateModel(channel.h, tau, noise, scenario.subcarrier_bandwidth_hz)
        p0 = _capped_mask_powers(scenario, tau)
        rates0 = model.rates(p0).sum(axis=2)  # (B, U)

        shortfalls = {}
        for u in np.flatnonzero(active):
            b = np.flatnonzero(tau[:, u, :].any(axis=1))
            if b.size == 0:
                shortfalls[u] = np.inf
                continue
            gap = targets[u] - rates0[int(b[0]), u]
            if gap > 1e-6 * max(1.0, targets[u]):
                shortfalls[u] = gap
        if shortfalls:
            worst = max(shortfalls, key=lambda u: shortfalls[u])
            rejected.add((int(worst), int(requests[worst])))
            continue
        break

    n_requests = len(requesters)
    acceptance = 1.0 if n_requests == 0 else 1.0 - len(rejected) / n_requests

    if not tau.any():
        state = AllocationState.zeros(scenario, catalog.n_contents)
        state.rho = np.asarray(rho)
        cost = total_cost(state, scenario, acceptance)
        empty = DeliveryDecision(
            x=np.zeros_like(state.z, dtype=np.int8),
            y=np.zeros_like(state.y, dtype=np.int8),
            z=np.zeros_like(state.z, dtype=np.int8),
            rejected=rejected,
        )
        if trace_path:
            _write_trace(trace_path, [cost.total])
        return SlotResult(state, cost, [cost.total], rejected, empty)

    p = p0
    best_state = None
    best_decision = None
    trace: list[float] = []
    for _ in range(asm.max_iters):
        access = model.rates(p).sum(axis=2)
        decision = decide_cases(
            scenario, rho, tau, requests, access, rng, cooperative=policy.cooperative
        )
        state = AllocationState.zeros(scenario, catalog.n_contents)
        state.tau, state.rho, state.p = tau, np.asarray(rho), p
        state.x, state.y, state.z = decision.x, decision.y, decision.z
        res = solve_power_delivery(
            scenario, state, requests, channel.h, sizes,
            tol=asm.sca_tolerance, max_iters=asm.sca_max_iters,
        )
        new_cost = total_cost(res.state, scenario, acceptance).total
        if trace and new_cost > trace[-1] + 1e-9 * max(1.0, abs(trace[-1])):
            break
        improvement = trace[-1] - new_cost if trace else np.inf
        trace.append(new_cost)
        p = res.state.p
        best_state, best_decision = res.state, decision
        if improvement <= asm.tolerance * max(1.0, abs(new_cost)):
            break

    best_decision.rejected = rejected
    cost = total_cost(best_state, scenario, acceptance)
    if trace_path:
        _write_trace(trace_path, trace)
    return SlotResult(best_state, cost, trace, rejected, best_decision)


def _write_trace(path: str, values: list[float]) -> None:
    lines = ["iteration,objective,max_violation"]
    lines += [f"{i},{v:.10g},0" for i, v in enumerate(values)]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
