"""Per-slot provisioning-case selection.

For every (serving BS, requested content) pair one of three cases is chosen:
serve from the local cache, fetch from a caching neighbor over the forward
link, or fetch from the remote provider over the backhaul.  Local hits win
outright; otherwise the cheapest capacity-feasible neighbor is picked, and
contents that jointly overload a donor link spill over to the backhaul.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import NetworkScenario


@dataclass
class DeliveryDecision:
    """Binary provisioning cases plus the requests dropped this slot."""

    x: np.ndarray  # (B, C) serve from local cache
    y: np.ndarray  # (B, B, C) y[i, b, c]: BS b fetches c from neighbor i
    z: np.ndarray  # (B, C) fetch over backhaul
    rejected: set = field(default_factory=set)  # {(user, content)}

    def validate(self, rho: np.ndarray) -> None:
        n_bs, n_contents = self.x.shape
        if self.y.shape != (n_bs, n_bs, n_contents) or self.z.shape != self.x.shape:
            raise ValueError("case array shapes disagree")
        cases = self.x + self.y.sum(axis=0) + self.z
        if (cases > 1).any():
            raise ValueError("a content may be provisioned through one case only")
        if (self.x > rho).any():
            raise ValueError("local serving requires the content in the local cache")
        if (self.y > rho[:, None, :]).any():
            raise ValueError("neighbor serving requires the content in the donor cache")
        if (np.einsum("iic->ic", self.y) != 0).any():
            raise ValueError("a BS cannot be its own donor")


def required_fronthaul_rate(
    b: int,
    c: int,
    requests: np.ndarray,
    tau: np.ndarray,
    access_rates: np.ndarray,
    bound_mode: str = "min",
) -> float:
    """Transport rate a link must sustain for content c at BS b.

    The bound over the requesting users' access rates; configurable because
    serving several users one stream arguably needs the max, not the min.
    """
    requesters = [
        u for u, cu in enumerate(requests)
        if int(cu) == c and tau[b, u, :].any()
    ]
    if not requesters:
        raise ValueError(f"no user of BS {b} requests content {c}")
    vals = [float(access_rates[b, u]) for u in requesters]
    return min(vals) if bound_mode == "min" else max(vals)


def decide_cases(
    scenario: NetworkScenario,
    rho: np.ndarray,
    tau: np.ndarray,
    requests: np.ndarray,
    access_rates: np.ndarray,
    rng: np.random.Generator,
    cooperative: bool = True,
) -> DeliveryDecision:
    """Pick a provisioning case for every requested (BS, content) pair.

    access_rates[b, u] is the user's current total access rate, used both to
    price donor links and to check forward-link capacity.  Donor choice is by
    lowest priced load (all donors price alike, so effectively by required
    rate) with residual capacity as a feasibility filter; ties break via the
    seeded RNG.  If a donor link still ends up overloaded, its contents are
    moved to the backhaul in ascending required-rate order until it fits.
    """
    rho = np.asarray(rho)
    requests = np.asarray(requests, dtype=int)
    n_bs, n_contents = rho.shape
    x = np.zeros((n_bs, n_contents), dtype=np.int8)
    y = np.zeros((n_bs, n_bs, n_contents), dtype=np.int8)
    z = np.zeros((n_bs, n_contents), dtype=np.int8)

    needed = set()
    for u, c in enumerate(requests):
        rows = np.flatnonzero(tau[:, u, :].any(axis=1))
        if rows.size == 1:
            needed.add((int(rows[0]), int(c)))

    residual = scenario.fronthaul_capacity_bps.astype(float).copy()
    load: dict[tuple[int, int], list[tuple[float, int]]] = {}

    for b, c in sorted(needed):
        if rho[b, c]:
            x[b, c] = 1
            continue
        donors = [i for i in range(n_bs) if i != b and rho[i, c]]
        if cooperative and donors:
            need = required_fronthaul_rate(
                b, c, requests, tau, access_rates, scenario.link_rate_bound
            )
            feasible = [i for i in donors if residual[i, b] >= need]
            if feasible:
                costs = np.array([scenario.costs.c_fh * need for _ in feasible])
                best = costs.min()
                tied = [i for i, v in zip(feasible, costs) if v <= best + 1e-12]
                donor = int(tied[int(rng.integers(len(tied)))]) if len(tied) > 1 else tied[0]
                y[donor, b, c] = 1
                residual[donor, b] -= need
                load.setdefault((donor, b), []).append((need, c))
                continue
        z[b, c] = 1

    # joint capacity pass: spill ascending-rate contents of overloaded links
    for (i, b), entries in load.items():
        cap = float(scenario.fronthaul_capacity_bps[i, b])
        total = sum(need for need, _ in entries)
        for need, c in sorted(entries):
            if total <= cap + 1e-9:
                break
            y[i, b, c] = 0
            z[b, c] = 1
            total -= need

    decision = DeliveryDecision(x=x, y=y, z=z)
    decision.validate(rho)
    return decision
