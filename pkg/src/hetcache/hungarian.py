"""Assignment solving: square Hungarian core plus the unbalanced wrappers used
for user association and per-BS subcarrier allocation.

The wrappers pad non-square cost matrices with zero-cost virtual rows/columns,
solve the square problem exactly, and then run a constraint-repairing pass
that hands extra subcarriers to rate-starved users (never revoking earlier
assignments, never exceeding the per-subcarrier occupancy cap).
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

# Cost assigned to infeasible links; large but finite so padding stays solvable.
INFEASIBLE_COST = 1e12


def solve_square(cost: np.ndarray) -> np.ndarray:
    """Minimum-cost perfect matching of a square matrix.

    Returns perm with perm[row] = column.  Exact: equals the brute-force
    minimum over all permutations.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError(f"cost matrix must be square, got {cost.shape}")
    if not np.isfinite(cost).all():
        raise ValueError("cost matrix must be finite")
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(cost.shape[0], dtype=int)
    perm[rows] = cols
    return perm


def pad_square(cost: np.ndarray, pad_value: float = 0.0) -> np.ndarray:
    """Pad a rectangular matrix to square with constant-cost virtual entries."""
    cost = np.asarray(cost, dtype=float)
    n = max(cost.shape)
    out = np.full((n, n), pad_value)
    out[: cost.shape[0], : cost.shape[1]] = cost
    return out


def associate_users(p1: np.ndarray, n_subcarriers: int, l_max: Sequence[int]) -> np.ndarray:
    """Assign every user to one BS (or none) from the cost matrix p1[b, u].

    Each real BS contributes one column per subcarrier slot it can host
    (n_subcarriers * l_max), so several users can share a BS while the square
    assignment stays a matching.  Users landing on zero-cost virtual columns
    (only present when users outnumber the network's slots) are unserved.

    Returns assignment[u] = BS index, or -1 for unserved users.
    """
    p1 = np.asarray(p1, dtype=float)
    n_bs, n_users = p1.shape
    l_max = np.broadcast_to(np.asarray(l_max, dtype=int), (n_bs,))
    col_bs: list[int] = []
    for b in range(n_bs):
        copies = min(n_subcarriers * int(l_max[b]), n_users)
        col_bs.extend([b] * copies)
    cost = p1[col_bs, :].T  # (U, n_cols): rows users, cols BS slots
    square = pad_square(cost)
    perm = solve_square(square)
    assignment = np.full(n_users, -1, dtype=int)
    for u in range(n_users):
        col = perm[u]
        if col < len(col_bs) and p1[col_bs[col], u] < INFEASIBLE_COST:
            assignment[u] = col_bs[col]
    return assignment


def allocate_subcarriers(
    p2: np.ndarray,
    l_max: int,
    rate_check: Callable[[int, list[int]], bool],
    n_repair_rounds: int | None = None,
) -> tuple[np.ndarray, list[int]]:
    """Subcarrier allocation for the users of one BS.

    p2[u, n] is the cost of putting (local) user u on subcarrier n.  A first
    Hungarian pass gives each user at most one subcarrier; users failing
    rate_check(u, owned_subcarriers) then greedily receive the cheapest
    non-saturated extra subcarrier for up to l_max repair rounds.  Assignments
    are never revoked.

    Returns (tau_local (U_b, N) int8, flagged users still failing the check).
    """
    p2 = np.asarray(p2, dtype=float)
    n_users, n_sub = p2.shape
    tau = np.zeros((n_users, n_sub), dtype=np.int8)
    if n_users == 0:
        return tau, []
    # each subcarrier can carry up to l_max multiplexed users, so replicate
    # its column that many times before the square matching; later copies get
    # a surcharge larger than any feasible power cost so multiplexing becomes
    # a last resort used only when the orthogonal columns run out
    copies = min(int(l_max), n_users)
    share_penalty = INFEASIBLE_COST / 1e4
    col_sub = [n for n in range(n_sub) for _ in range(copies)]
    cost = np.empty((n_users, len(col_sub)))
    for j, n in enumerate(col_sub):
        k = j % copies
        cost[:, j] = np.where(p2[:, n] < INFEASIBLE_COST,
                              p2[:, n] + k * share_penalty, INFEASIBLE_COST)
    perm = solve_square(pad_square(cost))
    for u in range(n_users):
        col = perm[u]
        if col < len(col_sub) and p2[u, col_sub[col]] < INFEASIBLE_COST:
            tau[u, col_sub[col]] = 1

    def owned(u: int) -> list[int]:
        return list(np.flatnonzero(tau[u]))

    rounds = l_max if n_repair_rounds is None else n_repair_rounds
    violating = [u for u in range(n_users) if not rate_check(u, owned(u))]
    for _ in range(rounds):
        if not violating:
            break
        added_any = False
        still = []
        for u in violating:
            occupancy = tau.sum(axis=0)
            candidates = [
                n for n in range(n_sub)
                if tau[u, n] == 0 and occupancy[n] < l_max and p2[u, n] < INFEASIBLE_COST
            ]
            if candidates:
                best = min(candidates, key=lambda n: (p2[u, n], n))
                tau[u, best] = 1
                added_any = True
            if not rate_check(u, owned(u)):
                still.append(u)
        violating = still
        if not added_any:
            # nothing left to hand out; further rounds cannot help
            break
    return tau, violating


def min_power_for_rate(
    rate_bps: float,
    bandwidth_hz: float,
    gain: float,
    interference_plus_noise_mw: float,
) -> float:
    """Transmit power achieving a Shannon rate against a fixed denominator."""
    if gain <= 0:
        return np.inf
    snr_needed = 2.0 ** (rate_bps / bandwidth_hz) - 1.0
    return snr_needed * interference_plus_noise_mw / gain


def power_cost_matrix(
    required_rate_bps: np.ndarray,
    bandwidth_hz: float,
    gains: np.ndarray,
    interference_plus_noise_mw: np.ndarray,
    p_mask_mw: np.ndarray,
) -> np.ndarray:
    """Min-power cost entries with the mask enforced as an infeasibility sentinel.

    Broadcasts over arbitrary leading shapes; required_rate, gains, denominators
    and masks must be mutually broadcastable.
    """
    snr_needed = 2.0 ** (required_rate_bps / bandwidth_hz) - 1.0
    with np.errstate(divide="ignore"):
        power = snr_needed * interference_plus_noise_mw / gains
    return np.where(power <= p_mask_mw, power, INFEASIBLE_COST)
