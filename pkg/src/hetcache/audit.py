"""Post-hoc constraint auditor.

Re-evaluates every original constraint of an emitted allocation state with
deliberately naive loops, independent of the solver code paths.  Returns a
list of human-readable violation strings; an empty list means the state is
clean.
"""
from __future__ import annotations

import numpy as np

from .model import AllocationState, NetworkScenario


def _rates(scenario: NetworkScenario, h: np.ndarray, state: AllocationState) -> np.ndarray:
    """Per-(b, u) total access rate via straight-line triple loops."""
    n_bs, n_users, n_sub = state.tau.shape
    noise = scenario.noise_power_mw
    w = scenario.subcarrier_bandwidth_hz
    out = np.zeros((n_bs, n_users))
    for b in range(n_bs):
        for u in range(n_users):
            for n in range(n_sub):
                if not state.tau[b, u, n]:
                    continue
                interf = 0.0
                for d in range(n_users):
                    if d != u and state.tau[b, d, n] and h[b, d, n] >= h[b, u, n]:
                        interf += state.p[b, d, n] * h[b, u, n]
                for j in range(n_bs):
                    if j == b:
                        continue
                    for d in range(n_users):
                        if state.tau[j, d, n]:
                            interf += state.p[j, d, n] * h[j, u, n]
                gamma = state.p[b, u, n] * h[b, u, n] / (interf + noise)
                out[b, u] += w * np.log2(1.0 + gamma)
    return out


def audit_state(
    scenario: NetworkScenario,
    state: AllocationState,
    h: np.ndarray,
    content_sizes: np.ndarray,
    requests: np.ndarray | None = None,
    rejected: set | None = None,
    rel_tol: float = 1e-6,
) -> list[str]:
    """Check an emitted state against every original constraint.

    ``requests`` is the per-user requested-content vector (-1 for none);
    pairs listed in ``rejected`` are exempt from service checks.  Pass
    requests=None to audit a caching-phase state (no delivery cases).
    """
    v: list[str] = []
    n_bs, n_users, n_sub = state.tau.shape
    tau, p = state.tau, state.p
    rejected = rejected or set()

    for name, arr in (("tau", tau), ("rho", state.rho), ("x", state.x),
                      ("y", state.y), ("z", state.z)):
        if not np.isin(arr, (0, 1)).all():
            v.append(f"{name} is not binary")

    for u in range(n_users):
        if sum(tau[b, u, :].any() for b in range(n_bs)) > 1:
            v.append(f"user {u} draws from more than one BS")
    for b in range(n_bs):
        for n in range(n_sub):
            occ = int(tau[b, :, n].sum())
            if occ > scenario.bss[b].l_max:
                v.append(f"subcarrier ({b},{n}) carries {occ} users, cap {scenario.bss[b].l_max}")

    for b in range(n_bs):
        mask = scenario.bss[b].p_mask_mw
        total = float(p[b].sum())
        if total > scenario.bss[b].p_max_mw * (1 + rel_tol) + 1e-9:
            v.append(f"BS {b} transmit total {total:.3g} exceeds budget")
        for u in range(n_users):
            for n in range(n_sub):
                val = p[b, u, n]
                if val < -1e-12:
                    v.append(f"negative power at ({b},{u},{n})")
                if val > mask * (1 + rel_tol) + 1e-9:
                    v.append(f"power above mask at ({b},{u},{n})")
                if not tau[b, u, n] and val != 0.0:
                    v.append(f"power on unassigned ({b},{u},{n})")

    # decode-order feasibility on every shared subcarrier
    noise = scenario.noise_power_mw
    for b in range(n_bs):
        for n in range(n_sub):
            users = [u for u in range(n_users) if tau[b, u, n]]
            for us in users:
                for uw in users:
                    if us == uw or h[b, us, n] < h[b, uw, n]:
                        continue
                    den_s = noise + sum(
                        p[b, d, n] * h[b, us, n]
                        for d in users if d != us and h[b, d, n] >= h[b, us, n]
                    ) + sum(
                        p[j, d, n] * h[j, us, n]
                        for j in range(n_bs) if j != b for d in range(n_users) if tau[j, d, n]
                    )
                    den_w = noise + sum(
                        p[b, d, n] * h[b, uw, n]
                        for d in users if d != uw and h[b, d, n] >= h[b, uw, n]
                    ) + sum(
                        p[j, d, n] * h[j, uw, n]
                        for j in range(n_bs) if j != b for d in range(n_users) if tau[j, d, n]
                    )
                    lhs = h[b, us, n] * den_w
                    rhs = h[b, uw, n] * den_s
                    if lhs < rhs * (1 - rel_tol):
                        v.append(f"decode order violated at ({b},{n}) pair ({us},{uw})")

    caps = scenario.cache_capacities()
    for b in range(n_bs):
        used = float((state.rho[b] * content_sizes).sum())
        if used > caps[b] * (1 + rel_tol) + 1e-9:
            v.append(f"cache of BS {b} overfull: {used:.3g} > {caps[b]:.3g}")

    if requests is None:
        return v

    # delivery cases and transport rates
    cases = state.x + state.y.sum(axis=0) + state.z
    if (cases > 1).any():
        v.append("multiple provisioning cases for one (BS, content)")
    if (state.x > state.rho).any():
        v.append("local case without the content cached locally")
    for i in range(n_bs):
        if state.y[i, i, :].any():
            v.append(f"BS {i} is its own donor")
        for b in range(n_bs):
            for c in range(state.x.shape[1]):
                if state.y[i, b, c] and not state.rho[i, c]:
                    v.append(f"donor {i} lacks content {c}")

    access = _rates(scenario, h, state)
    slot = scenario.slot_duration_s
    requesters: dict[tuple[int, int], list[int]] = {}
    for u in range(n_users):
        c = int(requests[u])
        if c < 0 or (u, c) in rejected:
            continue
        bs = [b for b in range(n_bs) if tau[b, u, :].any()]
        if len(bs) != 1:
            v.append(f"accepted requester {u} has no serving BS")
            continue
        b = bs[0]
        requesters.setdefault((b, c), []).append(u)
        if access[b, u] * slot < content_sizes[c] * (1 - rel_tol):
            v.append(f"deadline missed for user {u}, content {c}")

    for (b, c), users in requesters.items():
        if not (state.x[b, c] or state.y[:, b, c].any() or state.z[b, c]):
            v.append(f"no provisioning case for requested ({b},{c})")
        vals = [access[b, u] for u in users]
        need = min(vals) if scenario.link_rate_bound == "min" else max(vals)
        for i in range(n_bs):
            if state.y[i, b, c] and state.r_fh[i, b, c] < need * (1 - rel_tol):
                v.append(f"forward-link rate below requirement on ({i},{b},{c})")
        if state.z[b, c] and state.r_bh[b, c] < need * (1 - rel_tol):
            v.append(f"backhaul rate below requirement on ({b},{c})")

    for i in range(n_bs):
        for b in range(n_bs):
            if i == b:
                continue
            load = float((state.y[i, b, :] * state.r_fh[i, b, :]).sum())
            cap = float(scenario.fronthaul_capacity_bps[i, b])
            if load > cap * (1 + rel_tol) + 1e-6:
                v.append(f"forward link ({i},{b}) overloaded: {load:.3g} > {cap:.3g}")
    return v
