import numpy as np
import pytest

from hetcache.model import (
    MACRO,
    SMALL,
    BaseStation,
    CostConstants,
    NetworkScenario,
)


def make_scenario(
    n_sbs=1,
    n_users=2,
    n_subcarriers=2,
    user_positions=None,
    noise_power_mw=1e-9,
    path_loss_exponent=3.0,
    subcarrier_bandwidth_hz=312_500.0,
    p_max_mw=5000.0,
    p_mask_mw=500.0,
    l_max=2,
    cache_bits=0.0,
    slot_duration_s=3e-4,
    fronthaul_bps=2.5e9,
    costs=None,
    p_hardware_mw=0.0,
    mc_samples=8,
    bs_positions=None,
    link_rate_bound="min",
):
    """Small configurable scenario for unit tests.

    noise_power_mw is the per-subcarrier noise power; the dBm/Hz density is
    back-computed from it so tests can state sigma^2 directly.
    """
    n_bs = n_sbs + 1
    if bs_positions is None:
        bs_positions = [(0.0, 0.0)] + [
            (100.0 * (i + 1), 0.0) for i in range(n_sbs)
        ]
    bss = []
    for b in range(n_bs):
        bss.append(
            BaseStation(
                id=b,
                kind=MACRO if b == 0 else SMALL,
                position=tuple(bs_positions[b]),
                cache_capacity_bits=cache_bits,
                p_max_mw=p_max_mw,
                p_mask_mw=p_mask_mw,
                l_max=l_max,
                p_hardware_mw=p_hardware_mw,
            )
        )
    if user_positions is None:
        rng = np.random.default_rng(7)
        radius = 200.0
        angles = rng.uniform(0, 2 * np.pi, n_users)
        radii = radius * np.sqrt(rng.uniform(0.04, 1.0, n_users))
        user_positions = np.c_[radii * np.cos(angles), radii * np.sin(angles)]
    user_positions = np.asarray(user_positions, dtype=float)
    total_bw = subcarrier_bandwidth_hz * n_subcarriers
    noise_dbm_per_hz = 10.0 * np.log10(noise_power_mw / subcarrier_bandwidth_hz)
    cap = np.full((n_bs, n_bs), fronthaul_bps)
    np.fill_diagonal(cap, 0.0)
    return NetworkScenario(
        bss=tuple(bss),
        user_positions=user_positions,
        n_subcarriers=n_subcarriers,
        total_bandwidth_hz=total_bw,
        noise_dbm_per_hz=noise_dbm_per_hz,
        path_loss_exponent=path_loss_exponent,
        slot_duration_s=slot_duration_s,
        fronthaul_capacity_bps=cap,
        costs=costs or CostConstants(c_power=5.0, c_bw=3.0, c_fh=7.0, c_bh=20.0),
        mc_samples=mc_samples,
        link_rate_bound=link_rate_bound,
    )


class ConstFadingRng:
    """RNG stub whose exponential() always returns 1 (degenerate fading)."""

    def exponential(self, scale=1.0, size=None):
        return np.ones(size) if size is not None else 1.0


@pytest.fixture
def tiny_scenario():
    return make_scenario(n_sbs=1, n_users=3, n_subcarriers=2)
