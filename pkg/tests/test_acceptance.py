"""End-to-end acceptance battery.

Each test checks one externally observable guarantee of the package:
exact assignment matching, sound rate bounds with correct gradients,
monotone solver traces, near-optimal heuristics on brute-forceable
instances, the expected cost orderings across caching policies and
access modes, cost trends across network parameters, a clean audit on
every emitted state, and bit-exact reproducibility of the CSV output.

The Monte Carlo sweeps are expensive, so each runs once per session
(module-scoped fixtures) and several tests read the same result set.
"""
import itertools
import time
from pathlib import Path

import numpy as np
import pytest

from hetcache.config import (
    build_catalog,
    build_scenario,
    load_config,
)
from hetcache.channel import sample_channel
from hetcache.harness import (
    SweepSpec,
    oracle_gap,
    run_sweep,
    write_csv,
)
from hetcache.hungarian import solve_square
from hetcache.model import sample_requests
from hetcache.orchestrator import (
    AsmConfig,
    PolicyConfig,
    run_caching_phase,
    run_delivery_slot,
)
from hetcache.powerdc import RateModel

CONFIG_DIR = Path(__file__).resolve().parents[1] / "src" / "hetcache" / "configs"
WORKERS = 4
TIE_BAND = 1.02  # two-percent tolerance on mean-cost inequalities

W_HZ = 312_500.0
NOISE_MW = 1e-9


def _sweep(doc, parameter, values, policies, runs, seed=1):
    spec = SweepSpec(
        swept_parameter=parameter,
        values=tuple(values),
        policies=tuple(policies),
        runs=runs,
        seed=seed,
    )
    rows, _ = run_sweep(doc, spec, workers=WORKERS)
    return rows


def _mean(rows, policy, value=None):
    picked = [
        r for r in rows
        if r.policy == policy and (value is None or r.sweep_value == value)
    ]
    assert picked, f"no rows for policy {policy!r} value {value!r}"
    assert len(picked) == 1
    return picked[0].mean_total_cost


def _series(rows, policy):
    picked = sorted((r for r in rows if r.policy == policy),
                    key=lambda r: r.sweep_value)
    return picked


@pytest.fixture(scope="module")
def desk_doc():
    return load_config(CONFIG_DIR / "desk.json")


@pytest.fixture(scope="module")
def tiny_doc():
    return load_config(CONFIG_DIR / "tiny.json")


@pytest.fixture(scope="module")
def policy_rows(desk_doc):
    policies = [PolicyConfig(caching=c) for c in
                ("ergodic", "mpc", "prc", "rc", "nc")]
    return _sweep(desk_doc, "users", [10], policies, runs=50)


@pytest.fixture(scope="module")
def mode_rows(desk_doc):
    policies = [
        PolicyConfig(caching="ergodic", cooperative=co, access=acc)
        for co, acc in itertools.product((True, False), ("noma", "oma"))
    ]
    return _sweep(desk_doc, "users", [10], policies, runs=50)


@pytest.fixture(scope="module")
def user_trend_rows(desk_doc):
    return _sweep(desk_doc, "users", [6, 10, 14],
                  [PolicyConfig(caching="ergodic")], runs=24)


@pytest.fixture(scope="module")
def sbs_count_trend_rows(desk_doc):
    return _sweep(desk_doc, "sbs_count", [1, 2, 3],
                  [PolicyConfig(caching="ergodic")], runs=24)


@pytest.fixture(scope="module")
def sbs_cache_trend_rows(desk_doc):
    return _sweep(desk_doc, "sbs_cache_pct", [5, 15, 25],
                  [PolicyConfig(caching="ergodic")], runs=24)


@pytest.fixture(scope="module")
def popularity_skew_rows(desk_doc):
    policies = [PolicyConfig(caching=c) for c in ("ergodic", "rc", "nc")]
    return _sweep(desk_doc, "zipf_alpha", [0.3, 0.7, 0.95], policies, runs=24)


# --- exact assignment matching -------------------------------------------------
def test_square_matching_agrees_with_permutation_brute_force():
    rng = np.random.default_rng(123)
    perms_by_n = {n: np.array(list(itertools.permutations(range(n))))
                  for n in range(1, 8)}
    cases = []
    for _ in range(1000):
        n = int(rng.integers(1, 8))
        cases.append(rng.uniform(0.0, 100.0, size=(n, n)))

    solver_cost = []
    elapsed = 0.0
    for cost in cases:
        t0 = time.perf_counter()
        perm = solve_square(cost)
        elapsed += time.perf_counter() - t0
        solver_cost.append(cost[np.arange(cost.shape[0]), perm].sum())

    for cost, got in zip(cases, solver_cost):
        n = cost.shape[0]
        perms = perms_by_n[n]
        best = cost[np.arange(n), perms].sum(axis=1).min()
        assert got == pytest.approx(best, rel=1e-12, abs=1e-9)
    assert elapsed < 5.0


# --- rate-bound soundness and gradients ------------------------------------------
def _random_rate_instance(rng, n_bs=2, n_users=3, n_sub=2):
    h = rng.uniform(1e-10, 1e-7, size=(n_bs, n_users, n_sub))
    tau = (rng.random((n_bs, n_users, n_sub)) < 0.6).astype(np.int8)
    for u in range(n_users):
        rows = np.flatnonzero(tau[:, u, :].any(axis=1))
        for b in rows[1:]:
            tau[b, u, :] = 0
    anchor = rng.uniform(1.0, 500.0, size=tau.shape) * tau
    point = rng.uniform(1.0, 500.0, size=tau.shape) * tau
    return h, tau, anchor, point


def _fd_grad(fun, p):
    """Central finite differences of an array-valued function of p."""
    n_bs, n_users, n_sub = p.shape
    base = fun(p)
    fd = np.zeros(base.shape + (n_bs, n_users))
    for j in range(n_bs):
        for d in range(n_users):
            for n in range(n_sub):
                step = 1e-5 * max(1.0, abs(p[j, d, n]))
                hi, lo = p.copy(), p.copy()
                hi[j, d, n] += step
                lo[j, d, n] -= step
                diff = (fun(hi) - fun(lo)) / (2.0 * step)
                fd[:, :, n, j, d] = diff[:, :, n]
    return fd


def test_rate_bounds_sound_tight_and_differentiable():
    rng = np.random.default_rng(456)
    for trial in range(1000):
        h, tau, anchor, point = _random_rate_instance(rng)
        model = RateModel(h, tau, NOISE_MW, W_HZ)
        exp = model.expansion(anchor)

        true = model.rates(point)
        scale = 1e-9 * np.maximum(1.0, np.abs(true))
        assert (exp.rate_lower(point) <= true + scale).all()
        assert (exp.rate_upper(point) >= true - scale).all()

        at_anchor = model.rates(anchor)
        np.testing.assert_allclose(exp.rate_lower(anchor), at_anchor,
                                   rtol=1e-9, atol=1e-9)
        np.testing.assert_allclose(exp.rate_upper(anchor), at_anchor,
                                   rtol=1e-9, atol=1e-9)

        fd_lower = _fd_grad(exp.rate_lower, point)
        fd_upper = _fd_grad(exp.rate_upper, point)
        np.testing.assert_allclose(exp.grad_rate_lower(point), fd_lower,
                                   rtol=1e-4, atol=1e-3)
        np.testing.assert_allclose(exp.grad_rate_upper(point), fd_upper,
                                   rtol=1e-4, atol=1e-3)


# --- monotone objective traces and convergence ------------------------------------
def _assert_non_increasing(trace):
    arr = np.asarray(trace)
    tol = 1e-9 * np.maximum(1.0, np.abs(arr[:-1]))
    assert (np.diff(arr) <= tol).all(), f"trace increased: {arr}"


def test_objective_traces_non_increasing_and_converged():
    doc = load_config(CONFIG_DIR / "desk.json")
    asm = AsmConfig()  # tolerance 1e-3, at most 10 outer iterations
    policy = PolicyConfig(caching="ergodic")
    for seed in range(5):
        draw = np.random.default_rng(np.random.SeedSequence(entropy=seed))
        catalog = build_catalog(doc, draw)
        scenario = build_scenario(doc, catalog, draw)
        delta = sample_requests(catalog, scenario.n_users, draw)
        channel = sample_channel(scenario, draw)

        caching = run_caching_phase(scenario, catalog, policy, draw, asm)
        _assert_non_increasing(caching.trace)
        outer = len(caching.trace) - 1
        assert outer <= asm.max_iters
        if outer == asm.max_iters:
            last_gain = caching.trace[-2] - caching.trace[-1]
            assert last_gain <= asm.tolerance * max(1.0, abs(caching.trace[-1]))

        slot = run_delivery_slot(scenario, caching.rho, catalog, delta,
                                 channel, policy, draw, asm)
        _assert_non_increasing(slot.trace)
        assert len(slot.trace) - 1 <= asm.sca_max_iters


# --- heuristic vs exhaustive search ------------------------------------------------
def test_heuristic_close_to_exhaustive_on_tiny_instances(tiny_doc):
    started = time.perf_counter()
    results = oracle_gap(tiny_doc, instances=20, seed=7, power_levels=8)
    elapsed = time.perf_counter() - started
    assert len(results) >= 20
    gaps = np.array([r["gap"] for r in results])
    assert (gaps >= -1e-9).all(), "heuristic beat the exhaustive optimum"
    assert gaps.mean() <= 0.15
    assert elapsed <= 120.0


# --- policy and mode orderings -----------------------------------------------------
def test_caching_policy_cost_ordering(policy_rows):
    order = ["ergodic", "mpc", "prc", "rc", "nc"]
    means = [_mean(policy_rows, f"{c}-co-noma") for c in order]
    for lo, hi, a, b in zip(means, means[1:], order, order[1:]):
        assert lo <= hi * TIE_BAND, (
            f"{a} ({lo:.4g}) should not cost more than {b} ({hi:.4g})")


def test_cooperation_and_multiplexing_cost_ordering(mode_rows):
    cost = {label: _mean(mode_rows, f"ergodic-{label}")
            for label in ("co-noma", "co-oma", "nc-noma", "nc-oma")}
    assert cost["co-noma"] <= cost["co-oma"] * TIE_BAND
    assert cost["co-oma"] <= cost["nc-oma"] * TIE_BAND
    assert cost["co-noma"] <= cost["nc-noma"] * TIE_BAND
    # cooperation plus multiplexing together must buy at least ten percent
    assert cost["co-noma"] <= 0.9 * cost["nc-oma"]


# --- parameter trends ---------------------------------------------------------------
def test_cost_grows_with_user_population(user_trend_rows):
    means = [r.mean_total_cost for r in _series(user_trend_rows, "ergodic-co-noma")]
    assert all(a <= b for a, b in zip(means, means[1:])), means


def test_cost_falls_with_small_cell_count(sbs_count_trend_rows):
    means = [r.mean_total_cost
             for r in _series(sbs_count_trend_rows, "ergodic-co-noma")]
    assert all(a >= b for a, b in zip(means, means[1:])), means


def test_cost_falls_with_small_cell_cache_size(sbs_cache_trend_rows):
    means = [r.mean_total_cost
             for r in _series(sbs_cache_trend_rows, "ergodic-co-noma")]
    assert all(a >= b for a, b in zip(means, means[1:])), means


def test_popularity_skew_helps_only_popularity_aware_caching(popularity_skew_rows):
    ergodic = [r.mean_total_cost
               for r in _series(popularity_skew_rows, "ergodic-co-noma")]
    assert all(a >= b for a, b in zip(ergodic, ergodic[1:])), ergodic

    for policy in ("rc-co-noma", "nc-co-noma"):
        rows = _series(popularity_skew_rows, policy)
        means = np.array([r.mean_total_cost for r in rows])
        sems = np.array([r.std_total_cost / np.sqrt(r.runs) for r in rows])
        for i, j in itertools.combinations(range(len(rows)), 2):
            band = 2.0 * np.hypot(sems[i], sems[j])
            assert abs(means[i] - means[j]) <= band, (
                f"{policy} not flat: {means[i]:.4g} vs {means[j]:.4g} "
                f"(band {band:.4g})")


# --- independent audit of every emitted state --------------------------------------
def test_audit_clean_on_every_sweep(policy_rows, mode_rows, user_trend_rows,
                                    sbs_count_trend_rows, sbs_cache_trend_rows,
                                    popularity_skew_rows):
    for rows in (policy_rows, mode_rows, user_trend_rows, sbs_count_trend_rows,
                 sbs_cache_trend_rows, popularity_skew_rows):
        for row in rows:
            assert row.audit_violations == 0, row


# --- bit-exact reproducibility -------------------------------------------------------
def test_identical_config_and_seed_yield_byte_identical_csv(desk_doc, tmp_path):
    spec = SweepSpec(
        swept_parameter="users",
        values=(8,),
        policies=(PolicyConfig(caching="ergodic"), PolicyConfig(caching="nc")),
        runs=4,
        seed=11,
    )
    blobs = []
    for tag, workers in (("a", 1), ("b", 1), ("c", 4)):
        rows, _ = run_sweep(desk_doc, spec, workers=workers)
        path = tmp_path / f"run_{tag}.csv"
        write_csv(rows, path)
        blobs.append(path.read_bytes())
    assert blobs[0] == blobs[1], "same seed, same workers gave different bytes"
    assert blobs[0] == blobs[2], "worker count changed the CSV bytes"


# --- figure rendering from shipped sample data ---------------------------------------
def test_plots_render_all_families_from_shipped_samples(tmp_path):
    plots = pytest.importorskip("hetcache_plots")
    import csv as _csv
    import importlib.resources

    samples = importlib.resources.files("hetcache_plots") / "samples"
    for family in plots.FAMILIES:
        src = Path(str(samples / f"{family}.csv"))
        assert src.is_file(), f"missing shipped sample for {family}"
        out = tmp_path / f"{family}.png"
        result = plots.render(plots.FigureSpec(
            input_csv=src, family=family, output=out))
        assert result == out and out.stat().st_size > 0

    with open(Path(str(samples / "convergence.csv")), encoding="utf-8") as fh:
        objective = [float(r["objective"]) for r in _csv.DictReader(fh)]
    tol = 1e-9 * max(1.0, abs(objective[0]))
    assert all(b <= a + tol for a, b in zip(objective, objective[1:])), \
        "shipped convergence trace is not non-increasing"
