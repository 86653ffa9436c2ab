"""Independent constraint auditor checks."""
import numpy as np

from hetcache.audit import audit_state
from hetcache.channel import ChannelState
from hetcache.model import AllocationState, ContentCatalog
from hetcache.orchestrator import PolicyConfig, apply_policy, run_delivery_slot

from conftest import make_scenario


def _setup(seed=0):
    scenario = make_scenario(n_sbs=1, n_users=3, n_subcarriers=2,
                             cache_bits=3000, p_mask_mw=400, p_max_mw=2000)
    rng = np.random.default_rng(seed)
    catalog = ContentCatalog.generate(4, 0.9, 300.0, rng, lognormal_sigma2=0.0)
    h = 10.0 ** rng.uniform(-9.5, -8.0, size=(2, 3, 2))
    return scenario, catalog, h, rng


def _solved_slot(seed=0):
    scenario, catalog, h, rng = _setup(seed)
    policy = PolicyConfig(caching="mpc")
    rho = apply_policy(scenario, catalog, policy, rng)
    delta = np.zeros((3, 4), dtype=np.int8)
    for u in range(3):
        delta[u, rng.integers(4)] = 1
    slot = run_delivery_slot(scenario, rho, catalog, delta,
                             ChannelState(h), policy, rng)
    requests = np.where(delta.any(axis=1), delta.argmax(axis=1), -1)
    return scenario, catalog, h, slot, requests


def test_solver_output_is_clean():
    for seed in range(4):
        scenario, catalog, h, slot, requests = _solved_slot(seed)
        out = audit_state(scenario, slot.state, h, catalog.sizes_bits,
                          requests=requests, rejected=slot.rejected_users)
        assert out == []


def test_detects_power_above_mask():
    scenario, catalog, h, slot, requests = _solved_slot(1)
    state = slot.state.copy()
    b, u, n = np.unravel_index(np.argmax(state.tau), state.tau.shape)
    state.p[b, u, n] = scenario.bss[b].p_mask_mw * 2
    out = audit_state(scenario, state, h, catalog.sizes_bits,
                      requests=requests, rejected=slot.rejected_users)
    assert any("mask" in msg for msg in out)


def test_detects_power_on_unassigned_subcarrier():
    scenario, catalog, h, slot, requests = _solved_slot(1)
    state = slot.state.copy()
    b, u, n = np.unravel_index(np.argmin(state.tau), state.tau.shape)
    state.p[b, u, n] = 1.0
    out = audit_state(scenario, state, h, catalog.sizes_bits,
                      requests=requests, rejected=slot.rejected_users)
    assert any("unassigned" in msg for msg in out)


def test_detects_multiplexing_overflow():
    scenario, catalog, h, _, _ = _solved_slot(2)
    state = AllocationState.zeros(scenario, catalog.n_contents)
    state.tau[0, :, 0] = 1  # three users on one subcarrier, cap is 2
    out = audit_state(scenario, state, h, catalog.sizes_bits)
    assert any("carries" in msg for msg in out)


def test_detects_multi_bs_user_and_overfull_cache():
    scenario, catalog, h, _, _ = _solved_slot(3)
    state = AllocationState.zeros(scenario, catalog.n_contents)
    state.tau[0, 0, 0] = 1
    state.tau[1, 0, 1] = 1
    state.rho[1, :] = 1
    # scale sizes so the full catalog no longer fits in the cache
    out = audit_state(scenario, state, h, catalog.sizes_bits * 10)
    assert any("more than one BS" in msg for msg in out)
    assert any("overfull" in msg for msg in out)


def test_detects_bad_donor_and_missed_deadline():
    scenario, catalog, h, _, _ = _solved_slot(4)
    state = AllocationState.zeros(scenario, catalog.n_contents)
    state.tau[0, 0, 0] = 1
    state.p[0, 0, 0] = 1e-9  # far too little for any deadline
    state.y[1, 0, 0] = 1  # donor BS 1 does not cache content 0
    requests = np.array([0, -1, -1])
    out = audit_state(scenario, state, h, catalog.sizes_bits, requests=requests)
    assert any("lacks content" in msg for msg in out)
    assert any("deadline" in msg for msg in out)


def test_detects_decode_order_violation():
    scenario, catalog, h, _, _ = _solved_slot(5)
    h = h.copy()
    h[0, 0, 0], h[0, 1, 0] = 2e-8, 1e-9
    h[1, 0, 0], h[1, 1, 0] = 1e-7, 1e-12
    state = AllocationState.zeros(scenario, catalog.n_contents)
    state.tau[0, 0, 0] = 1
    state.tau[0, 1, 0] = 1
    state.tau[1, 2, 0] = 1
    state.p[0, 0, 0] = 1e-3
    state.p[0, 1, 0] = 400.0
    # heavy cross-BS interference hits only the nominally strong user,
    # so the cross-multiplied decode-order condition fails
    state.p[1, 2, 0] = 400.0
    out = audit_state(scenario, state, h, catalog.sizes_bits)
    assert any("decode order" in msg for msg in out)
