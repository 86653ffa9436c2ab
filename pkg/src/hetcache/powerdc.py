"""Rate decomposition into a difference of concave log terms, plus the
successive-convex-approximation (SCA) power solvers built on it.

Every per-(BS, user, subcarrier) rate is W·log2(1 + p·h/(I + σ²)) with the
interference I affine in the full power tensor, so the rate splits as f − g
with f = W·log2(σ² + own·p + A·p) and g = W·log2(σ² + A·p), both concave in p.
Linearizing g at an anchor yields a global lower bound on the rate;
linearizing f yields an upper bound.  The solvers iterate: expand at the
current anchor, solve the resulting convex program (SLSQP with analytic
Jacobians), accept the step only if the true objective does not increase.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .channel import LN2
from .model import AllocationState, NetworkScenario, total_cost


class InfeasibleStartError(RuntimeError):
    """The given starting point violates a hard constraint; callers should
    fall back to the elasticized initialization path."""


class RateModel:
    """Affine-denominator view of all access rates for a fixed assignment.

    Channel gains ``h`` may carry a leading sample axis (S, B, U, N); every
    evaluation then returns per-sample values suited to ergodic averaging.
    Internally stores, per target (b, u, n), the coefficient of each power
    variable p[j, d, n] in the target's interference term: co-subcarrier
    users of the same BS with a stronger gain contribute at the target's own
    gain (imperfect-cancellation ordering), users of other BSs at the
    cross-link gain.
    """

    def __init__(self, h: np.ndarray, tau: np.ndarray, noise_mw: float, bandwidth_hz: float):
        h = np.asarray(h, dtype=float)
        tau = np.asarray(tau)
        if h.shape[-3:] != tau.shape:
            raise ValueError(f"channel {h.shape} does not end with tau shape {tau.shape}")
        self.h = h
        self.tau = tau
        self.noise = float(noise_mw)
        self.bandwidth = float(bandwidth_hz)
        n_bs, n_users, _ = tau.shape

        self.own = tau * h  # numerator coefficient of p[b,u,n] for (b,u,n)

        hu = h[..., :, :, :, None]  # (..., B, U, N, 1): target gain
        hd = np.swapaxes(h[..., :, None, :, :], -2, -1)  # (..., B, 1, N, D)
        tau_dn = np.swapaxes(tau[:, None, :, :], -2, -1)  # (B, 1, N, D)
        not_self = ~np.eye(n_users, dtype=bool)[None, :, None, :]
        same = np.where((hd >= hu) & not_self & (tau_dn == 1), hu, 0.0)

        hj = np.moveaxis(h, -3, -1)  # (..., U, N, J)
        cross = hj[..., None, :, :, :, None] * np.transpose(tau, (2, 0, 1))[None, None]
        same_bs = np.eye(n_bs, dtype=bool)[:, None, None, :, None]
        # (..., B, U, N, J, D): coefficient of p[j,d,n] in (b,u,n)'s denominator
        self.interf = np.where(same_bs, same[..., :, :, :, None, :], cross)
        self.numer = self.interf.copy()
        for b in range(n_bs):
            for u in range(n_users):
                self.numer[..., b, u, :, b, u] += self.own[..., b, u, :]

    # --- denominators and values -------------------------------------------
    def _den_g(self, p: np.ndarray) -> np.ndarray:
        return self.noise + np.einsum("...bunjd,jdn->...bun", self.interf, p)

    def _den_f(self, p: np.ndarray) -> np.ndarray:
        return self._den_g(p) + self.own * p

    def interference(self, p: np.ndarray) -> np.ndarray:
        return self._den_g(p) - self.noise

    def f_values(self, p: np.ndarray) -> np.ndarray:
        return self.bandwidth * np.log2(self._den_f(p))

    def g_values(self, p: np.ndarray) -> np.ndarray:
        return self.bandwidth * np.log2(self._den_g(p))

    def rates(self, p: np.ndarray) -> np.ndarray:
        return self.f_values(p) - self.g_values(p)

    def ergodic_rates(self, p: np.ndarray) -> np.ndarray:
        r = self.rates(p)
        return r.mean(axis=0) if r.ndim == 4 else r

    # --- gradients -----------------------------------------------------------
    def grad_g(self, p: np.ndarray) -> np.ndarray:
        """d g[...,b,u,n] / d p[j,d,n], shape (..., B, U, N, J, D)."""
        return (self.bandwidth / LN2) * self.interf / self._den_g(p)[..., None, None]

    def grad_f(self, p: np.ndarray) -> np.ndarray:
        return (self.bandwidth / LN2) * self.numer / self._den_f(p)[..., None, None]

    def expansion(self, p0: np.ndarray) -> "DcExpansion":
        return DcExpansion(
            model=self,
            p0=np.asarray(p0, dtype=float).copy(),
            f0=self.f_values(p0),
            g0=self.g_values(p0),
            grad_f0=self.grad_f(p0),
            grad_g0=self.grad_g(p0),
        )


def _contract(grad: np.ndarray, dp: np.ndarray) -> np.ndarray:
    return np.einsum("...bunjd,jdn->...bun", grad, dp)


@dataclass(frozen=True)
class DcExpansion:
    """First-order expansion of the rate's two concave halves at an anchor."""

    model: RateModel
    p0: np.ndarray
    f0: np.ndarray
    g0: np.ndarray
    grad_f0: np.ndarray
    grad_g0: np.ndarray

    def rate_lower(self, p: np.ndarray) -> np.ndarray:
        """f(p) minus the linearized g: a global lower bound, tight at p0."""
        return self.model.f_values(p) - (self.g0 + _contract(self.grad_g0, p - self.p0))

    def rate_upper(self, p: np.ndarray) -> np.ndarray:
        """Linearized f minus g(p): a global upper bound, tight at p0."""
        return self.f0 + _contract(self.grad_f0, p - self.p0) - self.model.g_values(p)

    def grad_rate_lower(self, p: np.ndarray) -> np.ndarray:
        return self.model.grad_f(p) - self.grad_g0

    def grad_rate_upper(self, p: np.ndarray) -> np.ndarray:
        return self.grad_f0 - self.model.grad_g(p)


# --- single-entry functional views (used by the verification suite) ----------
def dc_decompose(h, tau, p, noise_mw, bandwidth_hz, b, u, n):
    """(f, g) of one target; f − g equals the plain Shannon rate."""
    model = RateModel(h, tau, noise_mw, bandwidth_hz)
    return float(model.f_values(p)[b, u, n]), float(model.g_values(p)[b, u, n])


def grad_g(h, tau, p, noise_mw, bandwidth_hz, b, u, n) -> np.ndarray:
    """Gradient of one target's g over the full power tensor (B, U, N)."""
    model = RateModel(h, tau, noise_mw, bandwidth_hz)
    out = np.zeros(tau.shape)
    out[:, :, n] = model.grad_g(p)[b, u, n]
    return out


def grad_f(h, tau, p, noise_mw, bandwidth_hz, b, u, n) -> np.ndarray:
    model = RateModel(h, tau, noise_mw, bandwidth_hz)
    out = np.zeros(tau.shape)
    out[:, :, n] = model.grad_f(p)[b, u, n]
    return out


class CompactRates:
    """Rates of the active entries as functions of the packed power vector.

    Same mathematics as RateModel restricted to the entries listed in
    ``idx`` (shape (K, 3) of (b, u, n) rows), with interference coupling
    stored as a dense (K, K) matrix instead of the full six-axis tensor.
    The packed vector x holds p at exactly those entries.  ``h`` may carry
    a leading sample axis, in which case every value gains it too.
    """

    def __init__(self, h: np.ndarray, tau: np.ndarray, idx: np.ndarray,
                 noise_mw: float, bandwidth_hz: float):
        h = np.asarray(h, dtype=float)
        self.idx = idx
        self.noise = float(noise_mw)
        self.bandwidth = float(bandwidth_hz)
        k = idx.shape[0]
        bt, ut, nt = idx[:, 0], idx[:, 1], idx[:, 2]
        self.own = h[..., bt, ut, nt]  # target gain, (S?, K)
        # pairwise masks: variable j interferes with target t only on t's
        # subcarrier; same-BS entries couple through the decode ordering
        same_bs = bt[:, None] == bt[None, :]
        same_sub = nt[:, None] == nt[None, :]
        other_user = ut[:, None] != ut[None, :]
        # gain of j's user at t's BS / of t's user at j's BS, on t's subcarrier
        h_dj_at_bt = h[..., bt[:, None], ut[None, :], nt[:, None]]
        h_ut_at_bj = h[..., bt[None, :], ut[:, None], nt[:, None]]
        same_coef = np.where(
            (h_dj_at_bt >= self.own[..., :, None]) & other_user,
            self.own[..., :, None], 0.0)
        self.coef = np.where(same_bs, same_coef, h_ut_at_bj) * same_sub
        self.numer = self.coef.copy()
        diag = np.arange(k)
        self.numer[..., diag, diag] += self.own

    def den_g(self, x: np.ndarray) -> np.ndarray:
        return self.noise + np.einsum("...tk,k->...t", self.coef, x)

    def den_f(self, x: np.ndarray) -> np.ndarray:
        return self.den_g(x) + self.own * x

    def f_values(self, x: np.ndarray) -> np.ndarray:
        return self.bandwidth * np.log2(self.den_f(x))

    def g_values(self, x: np.ndarray) -> np.ndarray:
        return self.bandwidth * np.log2(self.den_g(x))

    def rates(self, x: np.ndarray) -> np.ndarray:
        return self.f_values(x) - self.g_values(x)

    def mean_rates(self, x: np.ndarray) -> np.ndarray:
        r = self.rates(x)
        return r.mean(axis=0) if r.ndim == 2 else r

    def grad_g(self, x: np.ndarray) -> np.ndarray:
        return (self.bandwidth / LN2) * self.coef / self.den_g(x)[..., None]

    def grad_f(self, x: np.ndarray) -> np.ndarray:
        return (self.bandwidth / LN2) * self.numer / self.den_f(x)[..., None]

    def expansion(self, x0: np.ndarray) -> "CompactExpansion":
        return CompactExpansion(
            model=self, x0=np.asarray(x0, dtype=float).copy(),
            f0=self.f_values(x0), g0=self.g_values(x0),
            grad_f0=self.grad_f(x0), grad_g0=self.grad_g(x0))

    def user_selector(self, users) -> np.ndarray:
        """Rows summing the entries of each listed user."""
        m = np.zeros((len(users), self.idx.shape[0]))
        for i, u in enumerate(users):
            m[i, self.idx[:, 1] == u] = 1.0
        return m

    def access_matrix(self, x: np.ndarray, n_bs: int, n_users: int) -> np.ndarray:
        """Per-(BS, user) total rate from the packed powers."""
        out = np.zeros((n_bs, n_users))
        np.add.at(out, (self.idx[:, 0], self.idx[:, 1]), self.mean_rates(x))
        return out


@dataclass(frozen=True)
class CompactExpansion:
    """First-order expansion of CompactRates' concave halves at an anchor."""

    model: CompactRates
    x0: np.ndarray
    f0: np.ndarray
    g0: np.ndarray
    grad_f0: np.ndarray
    grad_g0: np.ndarray

    def rate_lower(self, x: np.ndarray) -> np.ndarray:
        dx = x - self.x0
        return self.model.f_values(x) - (
            self.g0 + np.einsum("...tk,k->...t", self.grad_g0, dx))

    def rate_upper(self, x: np.ndarray) -> np.ndarray:
        dx = x - self.x0
        return (self.f0 + np.einsum("...tk,k->...t", self.grad_f0, dx)
                - self.model.g_values(x))

    def grad_rate_lower(self, x: np.ndarray) -> np.ndarray:
        return self.model.grad_f(x) - self.grad_g0

    def grad_rate_upper(self, x: np.ndarray) -> np.ndarray:
        return self.grad_f0 - self.model.grad_g(x)


def _sic_rows_compact(cm: CompactRates, tau: np.ndarray, h: np.ndarray):
    """Decode-order rows A·x + b ≥ 0 over the packed powers (cf. sic_rows)."""
    n_bs, _, n_sub = tau.shape
    h = np.asarray(h, dtype=float)
    h_mean = h.mean(axis=0) if h.ndim == 4 else h
    row_of = {tuple(e): k for k, e in enumerate(cm.idx)}
    rows, offsets = [], []
    for b in range(n_bs):
        for n in range(n_sub):
            users = np.flatnonzero(tau[b, :, n])
            if users.size < 2:
                continue
            order = sorted(users, key=lambda u: -h_mean[b, u, n])
            for a_i in range(len(order)):
                for w_i in range(a_i + 1, len(order)):
                    us, uw = order[a_i], order[w_i]
                    rs, rw = row_of[(b, us, n)], row_of[(b, uw, n)]
                    hs, hw = h[..., b, us, n], h[..., b, uw, n]
                    coef = (hs[..., None] * cm.coef[..., rw, :]
                            - hw[..., None] * cm.coef[..., rs, :])
                    const = cm.noise * (hs - hw)
                    if coef.ndim == 2:  # sample axis: averaged (ergodic) form
                        coef = coef.mean(axis=0)
                        const = const.mean()
                    rows.append(coef)
                    offsets.append(float(const))
    if not rows:
        return np.zeros((0, cm.idx.shape[0])), np.zeros(0)
    return np.stack(rows), np.array(offsets)


# --- solver plumbing ----------------------------------------------------------
@dataclass
class SolveResult:
    p: np.ndarray
    trace: list[float]
    converged: bool
    iterations: int
    max_violation: float = 0.0


def _active_index(tau: np.ndarray) -> np.ndarray:
    return np.argwhere(tau == 1)


def _scatter(x: np.ndarray, idx: np.ndarray, shape) -> np.ndarray:
    p = np.zeros(shape)
    if idx.size:
        p[idx[:, 0], idx[:, 1], idx[:, 2]] = x
    return p


def _gather(arr: np.ndarray, idx: np.ndarray) -> np.ndarray:
    return arr[..., idx[:, 0], idx[:, 1], idx[:, 2]]


def _user_grad(grad: np.ndarray, b: int, u: int) -> np.ndarray:
    """Gradient of Σ_n rate(b,u,n) over p[j,d,m], as (..., J, D, M)."""
    return np.moveaxis(grad[..., b, u, :, :, :], -3, -1)


def _assigned_bs(tau: np.ndarray, u: int) -> int:
    rows = np.flatnonzero(tau[:, u, :].any(axis=1))
    if rows.size != 1:
        raise ValueError(f"user {u} assigned to {rows.size} base stations")
    return int(rows[0])


def sic_rows(model: RateModel, idx: np.ndarray):
    """Linear decode-order rows A·x + b ≥ 0 over the active power variables.

    For each subcarrier shared by several users of one BS, the user with
    the stronger (sample-mean) gain must see a denominator no worse, after
    gain normalization, than each weaker co-user's: cross-multiplied this is
    linear in p.  Sample-averaged when the model carries a sample axis.
    """
    tau, h = model.tau, model.h
    n_bs, n_users, n_sub = tau.shape
    rows, offsets = [], []
    h_mean = h.mean(axis=0) if h.ndim == 4 else h
    for b in range(n_bs):
        for n in range(n_sub):
            users = np.flatnonzero(tau[b, :, n])
            if users.size < 2:
                continue
            order = sorted(users, key=lambda u: -h_mean[b, u, n])
            for a in range(len(order)):
                for w in range(a + 1, len(order)):
                    us, uw = order[a], order[w]
                    hs = h[..., b, us, n]
                    hw = h[..., b, uw, n]
                    coef = (
                        hs[..., None, None] * model.interf[..., b, uw, n, :, :]
                        - hw[..., None, None] * model.interf[..., b, us, n, :, :]
                    )
                    const = model.noise * (hs - hw)
                    if coef.ndim == 3:  # sample axis: ergodic (averaged) form
                        coef = coef.mean(axis=0)
                        const = const.mean()
                    full = np.zeros(tau.shape)
                    full[:, :, n] = coef
                    rows.append(_gather(full, idx))
                    offsets.append(float(const))
    if not rows:
        return np.zeros((0, idx.shape[0])), np.zeros(0)
    return np.stack(rows), np.array(offsets)


def _budget_rows(scenario: NetworkScenario, idx: np.ndarray):
    """Per-BS total-power rows: p_max[b] − Σ x ≥ 0."""
    n_bs = scenario.n_bs
    a = np.zeros((n_bs, idx.shape[0]))
    for k, (b, _, _) in enumerate(idx):
        a[b, k] = -1.0
    return a, scenario.p_max()


def _dump_trace(path, trace, violations):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "objective", "max_violation"])
        for k, (obj, viol) in enumerate(zip(trace, violations)):
            writer.writerow([k, f"{obj:.10g}", f"{viol:.3e}"])


def _true_violation_caching(model, p, idx, scenario, targets, sic_a, sic_b):
    """Worst raw violation of the original (non-surrogate) constraints."""
    worst = 0.0
    x = _gather(p, idx)
    worst = max(worst, float((sic_a @ x + sic_b).min(initial=0.0)) * -1)
    tx = np.zeros(scenario.n_bs)
    for k, (b, _, _) in enumerate(idx):
        tx[b] += x[k]
    worst = max(worst, float((tx - scenario.p_max()).max(initial=0.0)))
    rates = model.ergodic_rates(p)
    for u, target in enumerate(targets):
        if target <= 0:
            continue
        b = _assigned_bs(model.tau, u)
        worst = max(worst, (target - float(rates[b, u, :].sum())) / model.bandwidth)
    return worst


def _true_violation_compact(cm, x, scenario, idx, sel, targets_v, sic_a, sic_b):
    """Worst raw constraint violation, evaluated on the packed powers."""
    worst = float((-(sic_a @ x + sic_b)).max(initial=0.0))
    tx = np.zeros(scenario.n_bs)
    np.add.at(tx, idx[:, 0], x)
    worst = max(worst, float((tx - scenario.p_max()).max(initial=0.0)))
    if len(targets_v):
        user_rates = sel @ cm.mean_rates(x)
        worst = max(worst, float(((targets_v - user_rates) / cm.bandwidth).max()))
    return worst


def solve_power_caching(
    scenario: NetworkScenario,
    tau: np.ndarray,
    channel_samples: np.ndarray,
    rate_targets: np.ndarray,
    p0: np.ndarray,
    tol: float = 1e-3,
    max_iters: int = 30,
    trace_path: str | None = None,
) -> SolveResult:
    """Minimum-power transmit plan meeting per-user ergodic rate targets.

    Minimizes the linear power cost subject to per-BS budgets, per-variable
    masks, sample-averaged decode-order rows, and the lower-bound-surrogate
    ergodic rate constraint re-expanded each round.  Because the surrogate
    under-estimates the rate everywhere, any returned plan also meets the
    true targets.
    """
    tau = np.asarray(tau)
    rate_targets = np.asarray(rate_targets, dtype=float)
    idx = _active_index(tau)
    if idx.size == 0:
        if (rate_targets > 0).any():
            raise InfeasibleStartError("positive rate targets with no assignment")
        return SolveResult(p=np.zeros(tau.shape), trace=[0.0], converged=True, iterations=0)

    cm = CompactRates(channel_samples, tau, idx, scenario.noise_power_mw,
                      scenario.subcarrier_bandwidth_hz)
    sic_a, sic_b = _sic_rows_compact(cm, tau, channel_samples)
    budget_a, budget_b = _budget_rows(scenario, idx)
    scale = scenario.p_mask()[idx[:, 0]]
    wsub = cm.bandwidth
    demand_users = [u for u in range(scenario.n_users)
                    if rate_targets[u] > 0 and tau[:, u, :].any()]
    sel = cm.user_selector(demand_users)
    targets_v = rate_targets[demand_users]

    def objective(x):
        return float(scenario.costs.c_power * (x * scale).sum())

    obj_ref = max(1.0, scenario.costs.c_power * float(scale.sum()))
    obj_jac = scenario.costs.c_power * scale / obj_ref

    x0 = _gather(np.asarray(p0, dtype=float), idx)
    start_viol = _true_violation_compact(cm, x0, scenario, idx, sel, targets_v, sic_a, sic_b)
    if start_viol > 1e-6 or (p0 < -1e-12).any() or (p0 > (tau * scenario.p_mask()[:, None, None]) + 1e-9).any():
        raise InfeasibleStartError(
            f"starting point violates hard constraints by {start_viol:.3e}; "
            "run the elasticized initialization first"
        )

    x_anchor = x0
    trace = [objective(x_anchor / scale)]
    violations = [max(0.0, start_viol)]
    converged = False
    iterations = 0

    for k in range(max_iters):
        iterations = k + 1
        exp = cm.expansion(x_anchor)

        def rate_fun(x):
            rl = exp.rate_lower(x * scale)
            if rl.ndim == 2:
                rl = rl.mean(axis=0)
            return (sel @ rl - targets_v) / wsub

        def rate_jac(x):
            grad = exp.grad_rate_lower(x * scale)
            if grad.ndim == 3:
                grad = grad.mean(axis=0)
            return (sel @ grad) * scale[None, :] / wsub

        constraints = [
            {"type": "ineq",
             "fun": lambda x: budget_a @ (x * scale) + budget_b,
             "jac": lambda x: budget_a * scale},
        ]
        if sic_a.shape[0]:
            norm = np.maximum(np.abs(sic_b), np.abs(sic_a * scale).sum(axis=1)) + 1e-300
            constraints.append({
                "type": "ineq",
                "fun": lambda x: (sic_a @ (x * scale) + sic_b) / norm,
                "jac": lambda x: sic_a * scale / norm[:, None],
            })
        if demand_users:
            constraints.append({"type": "ineq", "fun": rate_fun, "jac": rate_jac})

        res = minimize(
            lambda x: objective(x) / obj_ref, x_anchor / scale,
            jac=lambda x: obj_jac, method="SLSQP",
            bounds=[(0.0, 1.0)] * idx.shape[0], constraints=constraints,
            options={"maxiter": 150, "ftol": 1e-10},
        )
        x_new = np.clip(res.x, 0.0, 1.0)
        x_new[x_new < 1e-12] = 0.0
        x_new = x_new * scale
        viol = _true_violation_compact(cm, x_new, scenario, idx, sel, targets_v, sic_a, sic_b)
        new_obj = objective(x_new / scale)
        if viol > 1e-6 or new_obj > trace[-1] + 1e-9 * max(1.0, abs(trace[-1])):
            converged = True  # keep the anchor: no admissible improving step
            break
        improvement = trace[-1] - new_obj
        x_anchor = x_new
        trace.append(new_obj)
        violations.append(max(0.0, viol))
        if improvement <= tol * max(1.0, abs(trace[-1])):
            converged = True
            break

    if trace_path:
        _dump_trace(trace_path, trace, violations)
    return SolveResult(p=_scatter(x_anchor, idx, tau.shape), trace=trace,
                       converged=converged, iterations=iterations,
                       max_violation=max(violations))


def _snap_to_floors(cm, user_sel, need, x0, scale, rounds=60):
    """Jacobi power control: scale each user's powers until every served
    request sits exactly on its rate floor.

    The total cost is non-decreasing in every access rate, so any slack
    above the floors is pure waste; from a feasible point this fixed point
    converges because lowering one user's power only raises the others'
    rates.  Returns None when the floors cannot all be met.
    """
    x = np.maximum(np.asarray(x0, dtype=float).copy(), 0.0)
    # each selector row marks the entries carrying that served user's rate
    entries = [np.flatnonzero(row > 0) for row in user_sel]
    for _ in range(rounds):
        rates = user_sel @ cm.rates(x)
        rel = (rates - need) / need
        if np.abs(rel).max() <= 1e-6:
            return x
        for k in np.argsort(-np.abs(rel)):
            ent = entries[k]
            if ent.size == 0 or x[ent].max() <= 0.0:
                continue

            def rate_at(gamma):
                xt = x.copy()
                xt[ent] = x[ent] * gamma
                return float(user_sel[k] @ cm.rates(xt))

            hi = float(np.min(scale[ent] / np.maximum(x[ent], 1e-300)))
            hi = min(hi, 1e9)
            if rate_at(hi) < need[k]:
                gamma = hi
            else:
                lo = 0.0
                for _b in range(50):
                    mid = 0.5 * (lo + hi)
                    if rate_at(mid) >= need[k]:
                        hi = mid
                    else:
                        lo = mid
                gamma = hi
            x[ent] = x[ent] * gamma
    rates = user_sel @ cm.rates(x)
    if ((need - rates) <= 1e-6 * need).all():
        return x
    return None


@dataclass
class DeliveryPowerResult:
    state: AllocationState
    trace: list[float]
    converged: bool
    iterations: int
    capacity_violations: list[tuple[int, int, float]] = field(default_factory=list)


def _link_rate(access_rates: np.ndarray, requesters: list[int], mode: str) -> float:
    vals = [float(access_rates[u]) for u in requesters]
    return min(vals) if mode == "min" else max(vals)


def fill_link_rates(
    scenario: NetworkScenario,
    state: AllocationState,
    requests: np.ndarray,
    access_rates_bu: np.ndarray,
) -> list[tuple[int, int, float]]:
    """Set every active transport rate to its tight bound from the current
    access rates and report per-link forward-capacity overflows."""
    n_bs, n_contents = state.z.shape
    mode = scenario.link_rate_bound
    state.r_fh[:] = 0.0
    state.r_bh[:] = 0.0
    requesters_at: dict[tuple[int, int], list[int]] = {}
    for u, c in enumerate(requests):
        if c < 0:
            continue
        rows = np.flatnonzero(state.tau[:, u, :].any(axis=1))
        if rows.size == 1:
            requesters_at.setdefault((int(rows[0]), int(c)), []).append(u)
    for b in range(n_bs):
        for c in range(n_contents):
            reqs = requesters_at.get((b, c), [])
            if not reqs:
                continue
            rate = _link_rate(access_rates_bu[b], reqs, mode)
            if state.z[b, c]:
                state.r_bh[b, c] = rate
            donors = np.flatnonzero(state.y[:, b, c])
            for i in donors:
                state.r_fh[i, b, c] = rate
    overflows = []
    for i in range(n_bs):
        for b in range(n_bs):
            if i == b:
                continue
            load = float((state.y[i, b, :] * state.r_fh[i, b, :]).sum())
            cap = float(scenario.fronthaul_capacity_bps[i, b])
            if load > cap + 1e-6:
                overflows.append((i, b, load - cap))
    return overflows


def solve_power_delivery(
    scenario: NetworkScenario,
    state: AllocationState,
    requests: np.ndarray,
    channel: np.ndarray,
    content_sizes: np.ndarray,
    tol: float = 1e-3,
    max_iters: int = 30,
    trace_path: str | None = None,
) -> DeliveryPowerResult:
    """Minimum-cost powers and transport rates for fixed provisioning cases.

    The transport-rate variables are eliminated: each active link rate is
    pinned to its tight bound, the min (or max, per scenario config) over the
    requesting users of the upper-bound surrogate access rate, anchored at
    the current iterate.  The remaining problem in p is convex: linear power
    cost plus convex surrogate link terms, under linear budgets, decode-order
    rows, and concave lower-bound deadline rows.
    """
    tau = state.tau
    requests = np.asarray(requests, dtype=int)
    idx = _active_index(tau)
    out = state.copy()
    if idx.size == 0:
        out.p[:] = 0.0
        overflows = fill_link_rates(scenario, out, requests, np.zeros((scenario.n_bs, scenario.n_users)))
        cost = total_cost(out, scenario).total
        return DeliveryPowerResult(out, [cost], True, 0, overflows)

    cm = CompactRates(channel, tau, idx, scenario.noise_power_mw,
                      scenario.subcarrier_bandwidth_hz)
    sic_a, sic_b = _sic_rows_compact(cm, tau, channel)
    budget_a, budget_b = _budget_rows(scenario, idx)
    scale = scenario.p_mask()[idx[:, 0]]
    wsub = cm.bandwidth
    slot = scenario.slot_duration_s

    # accepted requests: user is assigned somewhere and the serving BS has a case
    served = [(u, int(requests[u]), _assigned_bs(tau, u))
              for u in range(scenario.n_users)
              if tau[:, u, :].any() and requests[u] >= 0]
    requesters_at: dict[tuple[int, int], list[int]] = {}
    for u, c, b in served:
        requesters_at.setdefault((b, c), []).append(u)

    # links priced in the objective: (unit cost, serving BS, content)
    links: list[tuple[float, int, int]] = []
    for (b, c), _ in requesters_at.items():
        if state.z[b, c]:
            links.append((scenario.costs.c_bh, b, c))
        for i in np.flatnonzero(state.y[:, b, c]):
            if i != b:
                links.append((scenario.costs.c_fh, b, c))

    user_sel = cm.user_selector([u for u, _, _ in served])
    need_v = np.array([content_sizes[c] / slot for _, c, _ in served])
    # the deadline rows handed to the NLP carry a small relative margin so a
    # solution that is feasible only up to solver tolerance still meets the
    # true per-request rate floor
    need_solver = need_v * (1.0 + 1e-4)

    def true_cost(x: np.ndarray):
        cand = out.copy()
        cand.p = _scatter(x, idx, tau.shape)
        access = cm.access_matrix(x, scenario.n_bs, scenario.n_users)
        overflows = fill_link_rates(scenario, cand, requests, access)
        return total_cost(cand, scenario).total, cand, overflows

    def deadline_violation(x: np.ndarray) -> float:
        # worst relative shortfall against the true per-request rate floors
        if not len(need_v):
            return 0.0
        user_rates = user_sel @ cm.rates(x)
        return float(((need_v - user_rates) / need_v).max())

    x_start = _gather(state.p, idx)
    def combined_violation(x: np.ndarray) -> float:
        return max(
            deadline_violation(x),
            float((-(sic_a @ x + sic_b)).max(initial=0.0)),
            float((budget_a @ x + budget_b).min(initial=0.0)) * -1,
        )

    start_viol = combined_violation(x_start)
    if start_viol > 1e-6:
        raise InfeasibleStartError(
            f"starting point violates delivery constraints by {start_viol:.3e}; "
            "run the elasticized initialization first"
        )

    x_anchor = x_start
    x_feasible = x_start
    cost0, best_state, overflows = true_cost(x_anchor)
    trace = [cost0]
    violations = [max(0.0, start_viol)]
    converged = False
    iterations = 0

    for k in range(max_iters):
        iterations = k + 1
        exp = cm.expansion(x_anchor)
        anchor_access = cm.access_matrix(x_anchor, scenario.n_bs, scenario.n_users)
        # pin each link's reference user at the anchor so the surrogate stays convex
        link_rows = []  # (unit cost, selector row over entries)
        pick = min if scenario.link_rate_bound == "min" else max
        for cost_coef, b, c in links:
            u_ref = pick(requesters_at[(b, c)], key=lambda u: anchor_access[b, u])
            link_rows.append((cost_coef, cm.user_selector([u_ref])[0]))

        def raw_objective(x):
            ru = exp.rate_upper(x * scale)
            val = scenario.costs.c_power * float((x * scale).sum())
            for cost_coef, row in link_rows:
                val += cost_coef * float(row @ ru)
            return val

        obj_ref = max(1.0, abs(raw_objective(x_anchor / scale)))

        def objective(x):
            return raw_objective(x) / obj_ref

        def objective_jac(x):
            gu = exp.grad_rate_upper(x * scale)
            jac = scenario.costs.c_power * scale.copy()
            for cost_coef, row in link_rows:
                jac = jac + cost_coef * (row @ gu) * scale
            return jac / obj_ref

        def deadline_fun(x):
            rl = exp.rate_lower(x * scale)
            return (user_sel @ rl - need_solver) / wsub

        def deadline_jac(x):
            grad = exp.grad_rate_lower(x * scale)
            return (user_sel @ grad) * scale[None, :] / wsub

        constraints = [
            {"type": "ineq",
             "fun": lambda x: budget_a @ (x * scale) + budget_b,
             "jac": lambda x: budget_a * scale},
            {"type": "ineq", "fun": deadline_fun, "jac": deadline_jac},
        ]
        if sic_a.shape[0]:
            norm = np.maximum(np.abs(sic_b), np.abs(sic_a * scale).sum(axis=1)) + 1e-300
            constraints.append({
                "type": "ineq",
                "fun": lambda x: (sic_a @ (x * scale) + sic_b) / norm,
                "jac": lambda x: sic_a * scale / norm[:, None],
            })

        res = minimize(
            objective, x_anchor / scale, jac=objective_jac,
            method="SLSQP", bounds=[(0.0, 1.0)] * idx.shape[0],
            constraints=constraints, options={"maxiter": 300, "ftol": 1e-10},
        )
        x_new = np.clip(res.x, 0.0, 1.0)
        x_new[x_new < 1e-12] = 0.0
        x_new = x_new * scale
        viol = combined_violation(x_new)
        if viol > 1e-6:
            # the NLP often stops at a near-optimal point with a tiny residual;
            # pull back toward the last feasible iterate just far enough to
            # restore feasibility instead of discarding the step
            lo, hi = 0.0, 1.0
            for _ in range(40):
                mid = 0.5 * (lo + hi)
                if combined_violation(x_new + mid * (x_feasible - x_new)) <= 1e-7:
                    hi = mid
                else:
                    lo = mid
            x_new = x_new + hi * (x_feasible - x_new)
            viol = combined_violation(x_new)
        new_cost, new_state, new_overflows = true_cost(x_new)
        if viol <= 1e-6 and new_cost <= trace[-1] + 1e-9 * max(1.0, abs(trace[-1])):
            improvement = trace[-1] - new_cost
            x_anchor = x_new
            x_feasible = x_new
            best_state, overflows = new_state, new_overflows
            trace.append(new_cost)
            violations.append(max(0.0, viol))
            if improvement <= tol * max(1.0, abs(trace[-1])):
                converged = True
                break
        else:
            converged = True
            break

    # the NLP can stall with rates above the floors (ill-conditioned QP at
    # near-zero powers); snap every served request onto its floor and keep
    # the result when it is feasible and cheaper
    if len(need_v):
        rates_now = user_sel @ cm.rates(x_feasible)
        if ((rates_now - need_v) / need_v).max() > 1e-4:
            x_snap = _snap_to_floors(cm, user_sel, need_v * (1.0 + 1e-5),
                                     x_feasible, scale)
            if x_snap is not None and combined_violation(x_snap) <= 1e-6:
                new_cost, new_state, new_overflows = true_cost(x_snap)
                if new_cost < trace[-1] - 1e-12:
                    best_state, overflows = new_state, new_overflows
                    trace.append(new_cost)
                    violations.append(max(0.0, combined_violation(x_snap)))

    if trace_path:
        _dump_trace(trace_path, trace, violations)
    return DeliveryPowerResult(best_state, trace, converged, iterations, overflows)
