"""Scenario data, content catalog, request process, and the network cost model.

Everything downstream (channel sampling, assignment, placement, power
allocation, delivery decisions) reads its parameters from the types in this
module.  All power quantities are in mW, bandwidths in Hz, rates in bit/s,
content sizes in bits, distances in meters.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

MACRO = "macro"
SMALL = "small"


@dataclass(frozen=True)
class CostConstants:
    """Unit prices for the three cost components.

    c_power is price per mW of transmit power, c_bw price per kHz of occupied
    radio bandwidth, c_fh / c_bh price per (bit/s) on the inter-BS fronthaul
    and backhaul optical links.  Fronthaul must be cheaper than backhaul.
    """

    c_power: float
    c_bw: float
    c_fh: float
    c_bh: float

    def __post_init__(self) -> None:
        if self.c_fh >= self.c_bh:
            raise ValueError(
                f"fronthaul price ({self.c_fh}) must be below backhaul price ({self.c_bh})"
            )
        for name in ("c_power", "c_bw", "c_fh", "c_bh"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class BaseStation:
    """One base station.  Index 0 is always the macro BS."""

    id: int
    kind: str  # MACRO or SMALL
    position: tuple[float, float]
    cache_capacity_bits: float
    p_max_mw: float
    p_mask_mw: float
    l_max: int
    p_hardware_mw: float = 0.0
    p_sleep_mw: float = 0.0
    p_bbu_mw: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in (MACRO, SMALL):
            raise ValueError(f"unknown BS kind {self.kind!r}")
        if self.id == 0 and self.kind != MACRO:
            raise ValueError("BS 0 must be the macro BS")
        if self.id != 0 and self.kind == MACRO:
            raise ValueError("only BS 0 may be the macro BS")
        if self.p_mask_mw > self.p_max_mw:
            raise ValueError("p_mask must not exceed p_max")
        if self.cache_capacity_bits < 0:
            raise ValueError("cache capacity must be non-negative")
        if self.l_max < 1:
            raise ValueError("l_max must be at least 1")


@dataclass(frozen=True)
class NetworkScenario:
    """Full static description of one network instance.

    Immutable after construction; channel states, requests and allocations are
    produced elsewhere from per-run RNGs.
    """

    bss: tuple[BaseStation, ...]
    user_positions: np.ndarray  # (U, 2) meters
    n_subcarriers: int
    total_bandwidth_hz: float
    noise_dbm_per_hz: float
    path_loss_exponent: float
    slot_duration_s: float
    fronthaul_capacity_bps: np.ndarray  # (B+1, B+1) directed, diagonal unused
    costs: CostConstants
    rng_seed: int = 0
    mc_samples: int = 50
    link_rate_bound: str = "min"  # how link rates couple to access rates

    def __post_init__(self) -> None:
        if not self.bss or self.bss[0].id != 0:
            raise ValueError("scenario needs at least the macro BS with id 0")
        for i, bs in enumerate(self.bss):
            if bs.id != i:
                raise ValueError("BS ids must be consecutive starting at 0")
        pos = np.asarray(self.user_positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise ValueError("user_positions must have shape (U, 2)")
        cap = np.asarray(self.fronthaul_capacity_bps, dtype=float)
        if cap.shape != (self.n_bs, self.n_bs):
            raise ValueError("fronthaul_capacity_bps must be (B+1, B+1)")
        if (cap < 0).any():
            raise ValueError("fronthaul capacities must be non-negative")
        if self.n_subcarriers < 1 or self.total_bandwidth_hz <= 0:
            raise ValueError("need at least one subcarrier of positive bandwidth")
        if self.slot_duration_s <= 0:
            raise ValueError("slot duration must be positive")
        if self.link_rate_bound not in ("min", "max"):
            raise ValueError("link_rate_bound must be 'min' or 'max'")
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be at least 1")
        object.__setattr__(self, "user_positions", pos)
        object.__setattr__(self, "fronthaul_capacity_bps", cap)
        pos.setflags(write=False)
        cap.setflags(write=False)

    @property
    def n_bs(self) -> int:
        return len(self.bss)

    @property
    def n_users(self) -> int:
        return self.user_positions.shape[0]

    @property
    def subcarrier_bandwidth_hz(self) -> float:
        return self.total_bandwidth_hz / self.n_subcarriers

    @property
    def noise_power_mw(self) -> float:
        """Per-subcarrier AWGN power: density (dBm/Hz) times subcarrier width."""
        return 10.0 ** (self.noise_dbm_per_hz / 10.0) * self.subcarrier_bandwidth_hz

    def p_max(self) -> np.ndarray:
        return np.array([bs.p_max_mw for bs in self.bss])

    def p_mask(self) -> np.ndarray:
        return np.array([bs.p_mask_mw for bs in self.bss])

    def l_max(self) -> np.ndarray:
        return np.array([bs.l_max for bs in self.bss], dtype=int)

    def cache_capacities(self) -> np.ndarray:
        return np.array([bs.cache_capacity_bits for bs in self.bss])

    def with_users(self, user_positions: np.ndarray) -> "NetworkScenario":
        return replace(self, user_positions=np.asarray(user_positions, dtype=float))


def zipf_popularity(n_contents: int, alpha: float) -> np.ndarray:
    """Zipf popularity vector d[c] = c^-alpha / sum_k k^-alpha (1-based ranks).

    alpha = 0 is accepted and yields the uniform distribution.
    """
    if n_contents < 1:
        raise ValueError("catalog must contain at least one content")
    if alpha < 0 or alpha > 1:
        raise ValueError("zipf alpha must lie in [0, 1]")
    ranks = np.arange(1, n_contents + 1, dtype=float)
    weights = ranks ** -alpha
    return weights / weights.sum()


@dataclass(frozen=True)
class ContentCatalog:
    """C contents with log-normal sizes and Zipf popularity (rank order)."""

    sizes_bits: np.ndarray
    popularity: np.ndarray
    zipf_alpha: float

    def __post_init__(self) -> None:
        sizes = np.asarray(self.sizes_bits, dtype=float)
        pop = np.asarray(self.popularity, dtype=float)
        if sizes.shape != pop.shape or sizes.ndim != 1:
            raise ValueError("sizes and popularity must be 1-D and equally long")
        if (sizes <= 0).any():
            raise ValueError("content sizes must be positive")
        if abs(pop.sum() - 1.0) > 1e-12:
            raise ValueError("popularity must sum to 1")
        if (np.diff(pop) > 1e-15).any():
            raise ValueError("popularity must be non-increasing in rank")
        object.__setattr__(self, "sizes_bits", sizes)
        object.__setattr__(self, "popularity", pop)
        sizes.setflags(write=False)
        pop.setflags(write=False)

    @property
    def n_contents(self) -> int:
        return self.sizes_bits.shape[0]

    @property
    def mean_size_bits(self) -> float:
        return float(self.sizes_bits.mean())

    @classmethod
    def generate(
        cls,
        n_contents: int,
        zipf_alpha: float,
        mean_size_bits: float,
        rng: np.random.Generator,
        lognormal_mu: float = 0.5,
        lognormal_sigma2: float = 1.5,
    ) -> "ContentCatalog":
        """Draw sizes once from log-normal(mu, sigma^2), rescaled to the target mean."""
        if mean_size_bits <= 0:
            raise ValueError("mean content size must be positive")
        raw = rng.lognormal(lognormal_mu, np.sqrt(lognormal_sigma2), size=n_contents)
        sizes = raw * (mean_size_bits / raw.mean())
        return cls(sizes, zipf_popularity(n_contents, zipf_alpha), zipf_alpha)


def sample_requests(
    catalog: ContentCatalog, n_users: int, rng: np.random.Generator
) -> np.ndarray:
    """One-content-per-user request matrix delta (U, C) for a delivery slot."""
    delta = np.zeros((n_users, catalog.n_contents), dtype=np.int8)
    picks = rng.choice(catalog.n_contents, size=n_users, p=catalog.popularity)
    delta[np.arange(n_users), picks] = 1
    return delta


def validate_requests(delta: np.ndarray) -> None:
    if not np.isin(delta, (0, 1)).all():
        raise ValueError("request matrix must be binary")
    if (delta.sum(axis=1) > 1).any():
        raise ValueError("each user may request at most one content per slot")


@dataclass
class AllocationState:
    """All decision variables of one slot / epoch, shaped on the scenario.

    tau, rho, x, y, z are 0/1 int8 arrays; p in mW, link rates in bit/s.
    y[i, b, c] = 1 means BS b fetches content c from neighbor BS i.
    """

    tau: np.ndarray  # (B+1, U, N)
    rho: np.ndarray  # (B+1, C)
    x: np.ndarray  # (B+1, C)
    y: np.ndarray  # (B+1, B+1, C)
    z: np.ndarray  # (B+1, C)
    p: np.ndarray  # (B+1, U, N) mW
    r_fh: np.ndarray  # (B+1, B+1, C) bit/s
    r_bh: np.ndarray  # (B+1, C) bit/s

    @classmethod
    def zeros(cls, scenario: NetworkScenario, n_contents: int) -> "AllocationState":
        nb, nu, nn = scenario.n_bs, scenario.n_users, scenario.n_subcarriers
        return cls(
            tau=np.zeros((nb, nu, nn), dtype=np.int8),
            rho=np.zeros((nb, n_contents), dtype=np.int8),
            x=np.zeros((nb, n_contents), dtype=np.int8),
            y=np.zeros((nb, nb, n_contents), dtype=np.int8),
            z=np.zeros((nb, n_contents), dtype=np.int8),
            p=np.zeros((nb, nu, nn)),
            r_fh=np.zeros((nb, nb, n_contents)),
            r_bh=np.zeros((nb, n_contents)),
        )

    def copy(self) -> "AllocationState":
        return AllocationState(*(getattr(self, f).copy() for f in
                                 ("tau", "rho", "x", "y", "z", "p", "r_fh", "r_bh")))

    def check_shapes(self, scenario: NetworkScenario) -> None:
        nb, nu, nn = scenario.n_bs, scenario.n_users, scenario.n_subcarriers
        nc = self.rho.shape[1]
        expected = {
            "tau": (nb, nu, nn), "rho": (nb, nc), "x": (nb, nc),
            "y": (nb, nb, nc), "z": (nb, nc), "p": (nb, nu, nn),
            "r_fh": (nb, nb, nc), "r_bh": (nb, nc),
        }
        for name, shape in expected.items():
            got = getattr(self, name).shape
            if got != shape:
                raise ValueError(f"{name} has shape {got}, expected {shape}")


@dataclass(frozen=True)
class CostBreakdown:
    power_cost: float
    radio_bw_cost: float
    link_bw_cost: float
    total: float
    acceptance_ratio: float = 1.0

    def __post_init__(self) -> None:
        parts = self.power_cost + self.radio_bw_cost + self.link_bw_cost
        scale = max(1.0, abs(parts))
        if abs(self.total - parts) > 1e-9 * scale:
            raise ValueError("total must equal the sum of the three components")
        if not 0.0 <= self.acceptance_ratio <= 1.0:
            raise ValueError("acceptance_ratio must lie in [0, 1]")


def power_cost(state: AllocationState, scenario: NetworkScenario) -> float:
    """Sum over BSs of hardware-or-sleep power plus priced transmit power plus BBU."""
    total = 0.0
    for b, bs in enumerate(scenario.bss):
        tx = float(state.p[b].sum())
        if tx > 0.0:
            total += bs.p_hardware_mw + scenario.costs.c_power * tx
        else:
            total += bs.p_sleep_mw
        total += bs.p_bbu_mw
    return total


def radio_bw_cost(state: AllocationState, scenario: NetworkScenario) -> float:
    w_khz = scenario.subcarrier_bandwidth_hz / 1e3
    return scenario.costs.c_bw * float(state.tau.sum()) * w_khz


def link_bw_cost(state: AllocationState, scenario: NetworkScenario) -> float:
    off_diag = ~np.eye(scenario.n_bs, dtype=bool)[:, :, None]
    fh = float((state.y * state.r_fh * off_diag).sum())
    bh = float((state.z * state.r_bh).sum())
    return scenario.costs.c_fh * fh + scenario.costs.c_bh * bh


def total_cost(
    state: AllocationState,
    scenario: NetworkScenario,
    acceptance_ratio: float = 1.0,
) -> CostBreakdown:
    """Evaluate the three-part network cost of an allocation state."""
    state.check_shapes(scenario)
    pc = power_cost(state, scenario)
    bw = radio_bw_cost(state, scenario)
    lk = link_bw_cost(state, scenario)
    return CostBreakdown(pc, bw, lk, pc + bw + lk, acceptance_ratio)
