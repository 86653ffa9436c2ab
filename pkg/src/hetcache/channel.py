"""Fading channel generation, SINR / rate evaluation, SIC checks, ergodic rates.

Channel power gain model: h[b, u, n] = xi * d(b, u)^-kappa with xi drawn
exponential(1) (Rayleigh amplitude => exponential power) independently per
(b, u, n) and per slot.  Distances are floored at 1 m.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import NetworkScenario

LN2 = float(np.log(2.0))
DISTANCE_FLOOR_M = 1.0


@dataclass(frozen=True)
class ChannelState:
    """Per-slot linear channel power gains, shape (B+1, U, N)."""

    h: np.ndarray

    def __post_init__(self) -> None:
        h = np.asarray(self.h, dtype=float)
        if h.ndim != 3:
            raise ValueError("channel gains must be (B+1, U, N)")
        if (h <= 0).any():
            raise ValueError("channel gains must be positive")
        object.__setattr__(self, "h", h)
        h.setflags(write=False)


def bs_user_distances(scenario: NetworkScenario) -> np.ndarray:
    """(B+1, U) distances, floored at 1 m to avoid path-loss blowup."""
    bs_pos = np.array([bs.position for bs in scenario.bss])  # (B+1, 2)
    diff = bs_pos[:, None, :] - scenario.user_positions[None, :, :]
    return np.maximum(np.hypot(diff[..., 0], diff[..., 1]), DISTANCE_FLOOR_M)


def sample_channel(scenario: NetworkScenario, rng: np.random.Generator) -> ChannelState:
    """Draw one slot's gains: exponential(1) fading times d^-kappa path loss."""
    d = bs_user_distances(scenario)
    path = d ** (-scenario.path_loss_exponent)
    xi = rng.exponential(
        1.0, size=(scenario.n_bs, scenario.n_users, scenario.n_subcarriers)
    )
    return ChannelState(xi * path[:, :, None])


def sample_channel_set(
    scenario: NetworkScenario, n_samples: int, rng: np.random.Generator
) -> np.ndarray:
    """Stacked gains (S, B+1, U, N) for ergodic (common-random-number) averages."""
    if n_samples < 1:
        raise ValueError("need at least one channel sample")
    d = bs_user_distances(scenario)
    path = d ** (-scenario.path_loss_exponent)
    xi = rng.exponential(
        1.0,
        size=(n_samples, scenario.n_bs, scenario.n_users, scenario.n_subcarriers),
    )
    return xi * path[None, :, :, None]


def intra_interference(h: np.ndarray, tau: np.ndarray, p: np.ndarray) -> np.ndarray:
    """I_intra[b, u, n]: co-subcarrier power of same-BS users with gain >= own.

    The strongest user on a subcarrier therefore sees zero intra-cell
    interference.
    """
    # stronger[b, u, i, n] = 1 if user i (i != u) has h[b,i,n] >= h[b,u,n]
    stronger = (h[:, None, :, :] >= h[:, :, None, :]).astype(float)
    nu = h.shape[1]
    eye = np.eye(nu, dtype=bool)
    stronger[:, eye, :] = 0.0
    tp = tau * p  # (B, U, N)
    # sum_i stronger[b,u,i,n] * tp[b,i,n], then received through h[b,u,n]
    summed = np.einsum("buin,bin->bun", stronger, tp)
    return summed * h


def inter_interference(h: np.ndarray, tau: np.ndarray, p: np.ndarray) -> np.ndarray:
    """I_inter[b, u, n]: co-subcarrier power from every other BS's users."""
    per_bs = (tau * p).sum(axis=1)  # (B, N): transmitted power of BS j on n
    # received power at user u from BS j: per_bs[j, n] * h[j, u, n]
    received = per_bs[:, None, :] * h  # (j, u, n)
    total = received.sum(axis=0, keepdims=True)  # over all j
    return np.broadcast_to(total, h.shape) - received  # exclude j == b


def sinr_matrix(
    state: ChannelState, tau: np.ndarray, p: np.ndarray, scenario: NetworkScenario
) -> np.ndarray:
    """gamma[b, u, n] for every triple at once."""
    h = state.h
    denom = (
        intra_interference(h, tau, p)
        + inter_interference(h, tau, p)
        + scenario.noise_power_mw
    )
    return p * h / denom


def sinr(
    state: ChannelState,
    tau: np.ndarray,
    p: np.ndarray,
    b: int,
    u: int,
    n: int,
    scenario: NetworkScenario,
) -> float:
    return float(sinr_matrix(state, tau, p, scenario)[b, u, n])


def rate(tau: float, gamma: float, bandwidth_hz: float) -> float:
    """Shannon rate W * log2(1 + tau * gamma); zero on unassigned subcarriers."""
    if gamma < 0:
        raise ValueError("SINR must be non-negative")
    return bandwidth_hz * float(np.log2(1.0 + tau * gamma))


def rate_matrix(
    state: ChannelState, tau: np.ndarray, p: np.ndarray, scenario: NetworkScenario
) -> np.ndarray:
    """r[b, u, n] in bit/s."""
    gamma = sinr_matrix(state, tau, p, scenario)
    return scenario.subcarrier_bandwidth_hz * np.log2(1.0 + tau * gamma)


def access_rates(
    state: ChannelState, tau: np.ndarray, p: np.ndarray, scenario: NetworkScenario
) -> np.ndarray:
    """Per-(BS, user) access rate: sum of subcarrier rates."""
    return rate_matrix(state, tau, p, scenario).sum(axis=2)


def sic_feasible(
    state: ChannelState,
    tau: np.ndarray,
    p: np.ndarray,
    scenario: NetworkScenario,
    tol: float = 1e-9,
) -> tuple[bool, list[tuple[int, int, int, int]]]:
    """Check the SIC decoding order constraint in cross-multiplied linear form.

    For each BS b, subcarrier n and co-scheduled pair (u, u') with
    h[b,u,n] >= h[b,u',n] we require
        h_u * (I_u' + sigma^2) >= h_u' * (I_u + sigma^2),
    which is homogeneous of degree one in (p, sigma^2).  Returns the verdict
    plus the violating (b, n, u_strong, u_weak) tuples.
    """
    h = state.h
    denom = (
        intra_interference(h, tau, p)
        + inter_interference(h, tau, p)
        + scenario.noise_power_mw
    )
    violations: list[tuple[int, int, int, int]] = []
    scale = float(denom.max()) * float(h.max())
    for b in range(scenario.n_bs):
        for n in range(scenario.n_subcarriers):
            users = np.flatnonzero(tau[b, :, n])
            for i, u in enumerate(users):
                for v in users[i + 1:]:
                    strong, weak = (u, v) if h[b, u, n] >= h[b, v, n] else (v, u)
                    lhs = h[b, strong, n] * denom[b, weak, n]
                    rhs = h[b, weak, n] * denom[b, strong, n]
                    if lhs < rhs - tol * scale:
                        violations.append((b, n, int(strong), int(weak)))
    return not violations, violations


def ergodic_rate(
    scenario: NetworkScenario,
    tau: np.ndarray,
    p: np.ndarray,
    n_samples: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Monte Carlo mean of access rates over independent channel draws, (B+1, U)."""
    hs = sample_channel_set(scenario, n_samples, rng)
    return ergodic_rate_from_samples(scenario, tau, p, hs)


def ergodic_rate_from_samples(
    scenario: NetworkScenario, tau: np.ndarray, p: np.ndarray, h_samples: np.ndarray
) -> np.ndarray:
    """Same as ergodic_rate but over a fixed (common-random-number) sample set."""
    acc = np.zeros((scenario.n_bs, scenario.n_users))
    for h in h_samples:
        acc += access_rates(ChannelState(h), tau, p, scenario)
    return acc / h_samples.shape[0]
