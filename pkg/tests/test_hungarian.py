"""Assignment-solver tests: permutation brute force as the independent oracle."""
import itertools

import numpy as np
import pytest

from hetcache.hungarian import (
    INFEASIBLE_COST,
    allocate_subcarriers,
    associate_users,
    min_power_for_rate,
    pad_square,
    solve_square,
)


def _bruteforce_square(cost):
    """Best permutation by exhaustive search (oracle, n <= 8)."""
    n = cost.shape[0]
    best_perm, best_cost = None, np.inf
    for perm in itertools.permutations(range(n)):
        c = sum(cost[i, perm[i]] for i in range(n))
        if c < best_cost:
            best_cost, best_perm = c, perm
    return np.array(best_perm), best_cost


def _assignment_cost(cost, perm):
    return float(cost[np.arange(cost.shape[0]), perm].sum())


class TestSolveSquare:
    def test_identity_cheapest_on_diagonal(self):
        cost = np.full((3, 3), 5.0)
        np.fill_diagonal(cost, 1.0)
        perm = solve_square(cost)
        assert np.array_equal(perm, [0, 1, 2])

    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            n = int(rng.integers(2, 8))
            cost = rng.uniform(0, 10, size=(n, n))
            perm = solve_square(cost)
            _, oracle_cost = _bruteforce_square(cost)
            assert _assignment_cost(cost, perm) == pytest.approx(oracle_cost, abs=1e-9)

    def test_row_constant_shift_invariance(self):
        rng = np.random.default_rng(11)
        cost = rng.uniform(0, 5, size=(5, 5))
        shifted = cost + rng.uniform(-3, 3, size=(5, 1))
        assert _assignment_cost(cost, solve_square(cost)) == pytest.approx(
            _assignment_cost(cost, solve_square(shifted)), abs=1e-9
        )

    def test_column_constant_shift_invariance(self):
        rng = np.random.default_rng(13)
        cost = rng.uniform(0, 5, size=(5, 5))
        shifted = cost + rng.uniform(-3, 3, size=(1, 5))
        assert _assignment_cost(cost, solve_square(cost)) == pytest.approx(
            _assignment_cost(cost, solve_square(shifted)), abs=1e-9
        )

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            solve_square(np.zeros((2, 3)))

    def test_rejects_non_finite(self):
        cost = np.zeros((2, 2))
        cost[0, 0] = np.inf
        with pytest.raises(ValueError):
            solve_square(cost)


class TestPadSquare:
    def test_pads_wide_and_tall(self):
        wide = pad_square(np.ones((2, 4)))
        tall = pad_square(np.ones((4, 2)))
        assert wide.shape == tall.shape == (4, 4)
        assert wide[2:, :].sum() == 0.0
        assert tall[:, 2:].sum() == 0.0


class TestAssociateUsers:
    def test_every_user_assigned_when_capacity_suffices(self):
        # 2 BSs, 4 users, N=2, l_max=2 -> each BS can host 4 users
        power = np.array([[1.0, 9.0, 1.0, 9.0], [9.0, 1.0, 9.0, 1.0]])
        assignment = associate_users(power, n_subcarriers=2, l_max=2)
        assert np.array_equal(assignment, [0, 1, 0, 1])

    def test_capacity_respected(self):
        # one BS, N=1, l_max=1: only one of three users can attach
        power = np.array([[1.0, 2.0, 3.0]])
        assignment = associate_users(power, n_subcarriers=1, l_max=1)
        assert (assignment == 0).sum() == 1
        assert (assignment == -1).sum() == 2
        assert assignment[0] == 0  # cheapest user wins

    def test_infeasible_entries_never_chosen(self):
        power = np.array([[INFEASIBLE_COST, 1.0], [2.0, INFEASIBLE_COST]])
        assignment = associate_users(power, n_subcarriers=4, l_max=2)
        assert np.array_equal(assignment, [1, 0])


class TestAllocateSubcarriers:
    def test_each_user_gets_one_before_repair(self):
        power = np.array([[1.0, 5.0], [5.0, 1.0]])
        tau, flagged = allocate_subcarriers(power, l_max=1, rate_check=lambda u, owned: True)
        assert np.array_equal(tau, np.eye(2, dtype=np.int8))
        assert flagged == []

    def test_pigeonhole_three_users_two_subcarriers(self):
        # NOMA: a subcarrier can carry several users, everyone still lands one
        power = np.array([[1.0, 2.0], [2.0, 1.0], [1.5, 1.5]])
        tau, _ = allocate_subcarriers(power, l_max=2, rate_check=lambda u, owned: True)
        assert (tau.sum(axis=1) >= 1).all()
        assert tau.sum() == 3

    def test_repair_adds_subcarriers_for_starved_users(self):
        power = np.array([[1.0, 2.0, 3.0]])
        calls = []

        def rate_check(u, owned):
            calls.append(list(owned))
            return len(owned) >= 2  # needs two subcarriers to make rate

        tau, flagged = allocate_subcarriers(power, l_max=2, rate_check=rate_check)
        assert tau.sum() == 2
        assert np.array_equal(tau[0, :2], [1, 1])  # cheapest pair
        assert flagged == []

    def test_unfixable_user_flagged(self):
        power = np.array([[1.0, 2.0]])
        tau, flagged = allocate_subcarriers(power, l_max=2, rate_check=lambda u, owned: False)
        assert flagged == [0]
        assert tau.sum() == 2  # kept its best-effort allocation

    def test_repair_round_count_bounds_grants(self):
        # 1 initial subcarrier + at most l_max repair additions
        power = np.array([[1.0, 2.0, 3.0, 4.0]])
        tau, flagged = allocate_subcarriers(power, l_max=2, rate_check=lambda u, owned: False)
        assert tau[0].sum() == 3
        assert flagged == [0]


class TestMinPowerForRate:
    def test_closed_form_example(self):
        # rate W on bandwidth W needs SINR 1 -> p = (I + sigma2) / h
        p = min_power_for_rate(100.0, bandwidth_hz=100.0, gain=0.5, interference_plus_noise_mw=2.0)
        assert p == pytest.approx(4.0)

    def test_zero_rate_needs_zero_power(self):
        assert min_power_for_rate(0.0, 100.0, 0.5, 2.0) == 0.0

    def test_monotone_in_rate(self):
        rates = np.linspace(0, 1e6, 50)
        powers = [min_power_for_rate(r, 312_500.0, 1e-9, 1e-12) for r in rates]
        assert all(b >= a for a, b in zip(powers, powers[1:]))
