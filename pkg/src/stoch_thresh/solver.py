"""Exact threshold solver for budget-constrained integrals of step processes.

Solves

    minimize    sum_i w_i Y_i * int_0^{tau_i} xi_i(s) ds
    subject to  0 <= tau_i <= T_i,   sum_i w_i A_i tau_i = alpha   (or <= alpha)

by searching the finite set of critical levels ``Y_i v_ij / A_i``.  At a level
``lam`` the candidate rules are the capped first-passage times

    lower_i = inf{t : Y_i xi_i(t) >= A_i lam} ^ T_i
    upper_i = inf{t : Y_i xi_i(t) >  A_i lam} ^ T_i

and the budget constraint is met either by one of them or by the convex
combination ``(1 - q) lower + q upper``.  The budget map is a step function
of ``lam`` so no root finding (and no tolerance) is involved in locating the
multiplier.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .model import INF, Scenario, ScenarioSet, ensure_valid, shift_window, window_offset

DETERMINISTIC = "deterministic-combination"
MIXED = "mixed-strategy"

FEAS_TOL = 1e-9
CERT_TOL = 1e-9


class SolverError(Exception):
    """Base class for solver failures that carry a machine-readable reason."""

    reason = "solver-error"


class InfeasibleAlphaError(SolverError):
    reason = "infeasible-alpha"


class UnboundedBudgetError(SolverError):
    reason = "unbounded-budget"


class NonIntegerGridError(SolverError):
    reason = "non-integer-grid"


class RuleInfeasibleError(SolverError):
    reason = "rule-infeasible"


@dataclass(frozen=True, eq=False)
class StoppingRule:
    """Per-scenario pair of first-passage times plus the mixing weight.

    In deterministic mode every scenario stops at ``(1 - mix) * lower +
    mix * upper``.  In mixed mode a single Bernoulli(``mix``) coin picks
    ``upper`` for all scenarios, otherwise ``lower``.
    """

    lower: np.ndarray
    upper: np.ndarray
    mix: float = 0.0
    mode: str = DETERMINISTIC

    def __post_init__(self):
        lo = np.array(self.lower, dtype=np.float64)
        hi = np.array(self.upper, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be 1-d arrays of equal length")
        if not 0.0 <= self.mix <= 1.0:
            raise ValueError(f"mix must lie in [0, 1], got {self.mix}")
        if self.mode not in (DETERMINISTIC, MIXED):
            raise ValueError(f"unknown rule mode {self.mode!r}")
        if np.array_equal(lo, hi):
            object.__setattr__(self, "mix", 0.0)
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "mix", float(self.mix))

    @property
    def effective(self) -> np.ndarray:
        """Deterministic-combination stopping times, clipped into ``[lower, upper]``."""
        q = self.mix
        if q == 0.0:
            return self.lower
        if q == 1.0:
            return self.upper
        eff = (1.0 - q) * self.lower + q * self.upper
        eff = np.clip(eff, self.lower, self.upper)
        return np.where(self.lower == self.upper, self.lower, eff)

    def __eq__(self, other):
        if not isinstance(other, StoppingRule):
            return NotImplemented
        return (np.array_equal(self.lower, other.lower)
                and np.array_equal(self.upper, other.upper)
                and self.mix == other.mix and self.mode == other.mode)

    __hash__ = None


@dataclass(frozen=True)
class Certificate:
    margin: float
    scenario: int
    time: float
    scale: float

    @property
    def ok(self):
        return self.margin >= -CERT_TOL * self.scale


@dataclass(frozen=True)
class Solution:
    rule: StoppingRule
    multiplier: float
    objective: float
    budget: float
    alpha: float
    certificate_margin: float | None = None
    draws: tuple | None = field(default=None)

    @property
    def scale(self):
        return max(1.0, abs(self.objective))

    def feasible(self, tol=FEAS_TOL):
        return abs(self.budget - self.alpha) <= tol * max(1.0, self.alpha)


# -- single-scenario primitives ---------------------------------------------

def _scenario_keys(scenario: Scenario):
    d, a = scenario.density, scenario.rate
    return [d * v / a for v in scenario.process.values]


def pseudo_inverse(scenario: Scenario, level: float, strict: bool = False) -> float:
    """``inf{t : Y xi(t) >= A level}`` (``>`` when ``strict``), ``inf`` if never met."""
    for b, k in zip(scenario.process.breakpoints, _scenario_keys(scenario)):
        if (k > level) if strict else (k >= level):
            return b
    return INF


def tau_pair(scenario: Scenario, level: float) -> tuple[float, float]:
    """Capped first-passage times at ``level`` and just above it."""
    T = scenario.horizon
    return (min(pseudo_inverse(scenario, level), T),
            min(pseudo_inverse(scenario, level, strict=True), T))


# -- whole-set maps ----------------------------------------------------------

def crossing(sset: ScenarioSet, level: float, strict: bool = False) -> np.ndarray:
    """Vector of capped first-passage times for every scenario."""
    return kernels.crossing_times(sset.offsets, sset.breakpoints, sset.keys,
                                  sset.horizons, level, strict)


def spend(sset: ScenarioSet, times) -> float:
    """Budget ``sum(w A tau)`` with exactly rounded summation."""
    return math.fsum(sset.budget_weights * np.asarray(times, dtype=np.float64))


def cost(sset: ScenarioSet, times) -> float:
    """Objective ``sum(w Y phi(tau))`` of a deterministic rule."""
    times = np.asarray(times, dtype=np.float64)
    if np.any(~np.isfinite(times)):
        return INF
    return math.fsum(sset.cost_weights * sset.phi_at(times))


def budget_map(sset: ScenarioSet, level: float) -> tuple[float, float]:
    """Budgets of the lower and upper rules at ``level``."""
    return (spend(sset, crossing(sset, level)),
            spend(sset, crossing(sset, level, strict=True)))


def critical_levels(sset: ScenarioSet) -> np.ndarray:
    """Sorted distinct threshold keys; the budget map only jumps at these."""
    return np.unique(sset.keys)


def _pure(sset, alpha, level, times, mode=DETERMINISTIC, upper=None):
    hi = times if upper is None else upper
    rule = StoppingRule(times, hi, 0.0 if upper is None else 1.0, mode)
    chosen = rule.effective
    return Solution(rule=rule, multiplier=float(level), objective=cost(sset, chosen),
                    budget=spend(sset, chosen), alpha=float(alpha))


def _mixture(sset, alpha, level, lo, hi, b_lo, b_hi, mode):
    q = (alpha - b_lo) / (b_hi - b_lo)
    rule = StoppingRule(lo, hi, q, mode)
    c_lo, c_hi = cost(sset, lo), cost(sset, hi)
    objective = (1.0 - rule.mix) * c_lo + rule.mix * c_hi
    if mode == DETERMINISTIC:
        budget = spend(sset, rule.effective)
    else:
        budget = (1.0 - rule.mix) * b_lo + rule.mix * b_hi
    return Solution(rule=rule, multiplier=float(level), objective=objective,
                    budget=budget, alpha=float(alpha))


def _check_alpha(sset, alpha):
    total = sset.total_budget
    if not (math.isfinite(alpha) and 0.0 <= alpha <= total):
        raise InfeasibleAlphaError(f"alpha={alpha!r} outside [0, {total!r}]")


def solve_equality(sset: ScenarioSet, alpha: float, *, certify_grid: int | None = None,
                   mode: str = DETERMINISTIC) -> Solution:
    """Minimize the weighted integral subject to ``sum(w A tau) == alpha``.

    The multiplier is the smallest critical level whose lower rule spends
    exactly ``alpha``; failing that, the unique level whose lower and upper
    rules straddle ``alpha``, mixed with weight
    ``q = (alpha - B_lower) / (B_upper - B_lower)``.

    Raises
    ------
    InfeasibleAlphaError
        ``alpha`` outside ``[0, sum(w A T)]``.
    UnboundedBudgetError
        ``alpha`` is straddled by a level whose upper rule has infinite budget.
    """
    ensure_valid(sset)
    alpha = float(alpha)
    _check_alpha(sset, alpha)
    levels = critical_levels(sset)
    m = levels.shape[0]
    upper_cache = {}

    def upper_budget(k):
        if k not in upper_cache:
            upper_cache[k] = spend(sset, crossing(sset, levels[k], strict=True))
        return upper_cache[k]

    # smallest k with B_upper(L_k) >= alpha; B_upper(L_{m-1}) is the total budget
    lo_k, hi_k = 0, m - 1
    while lo_k < hi_k:
        mid = (lo_k + hi_k) // 2
        if upper_budget(mid) >= alpha:
            hi_k = mid
        else:
            lo_k = mid + 1
    k = lo_k
    lam = levels[k]
    lower = crossing(sset, lam)
    b_lo = spend(sset, lower)
    b_hi = upper_budget(k)
    if b_lo == alpha:
        sol = _pure(sset, alpha, lam, lower, mode)
    elif b_hi == alpha:
        upper = crossing(sset, lam, strict=True)
        if k + 1 < m:
            # the upper rule at L_k is the lower rule at L_{k+1}
            sol = _pure(sset, alpha, levels[k + 1], upper, mode)
        else:
            sol = _pure(sset, alpha, lam, lower, mode, upper=upper)
    else:
        if not math.isfinite(b_hi):
            raise UnboundedBudgetError(
                f"alpha={alpha!r} falls in the jump of the budget map at level {lam!r}, "
                "whose upper rule has infinite budget"
            )
        upper = crossing(sset, lam, strict=True)
        sol = _mixture(sset, alpha, lam, lower, upper, b_lo, b_hi, mode)
    if certify_grid:
        sol = replace(sol, certificate_margin=certify(sset, sol, certify_grid).margin)
    return sol


def solve_inequality(sset: ScenarioSet, alpha: float, *,
                     certify_grid: int | None = None) -> Solution:
    """Minimize subject to ``sum(w A tau) <= alpha``.

    The unconstrained minimizers are the level-0 rules.  When the upper one
    fits the budget it is returned (it weakly enlarges the zero-cost region),
    then the lower one; otherwise the constraint binds and the equality
    solver is used.
    """
    ensure_valid(sset)
    alpha = float(alpha)
    if not alpha >= 0.0:
        raise InfeasibleAlphaError(f"alpha={alpha!r} must be nonnegative")
    lower = crossing(sset, 0.0)
    upper = crossing(sset, 0.0, strict=True)
    b_lo, b_hi = spend(sset, lower), spend(sset, upper)
    if math.isfinite(b_hi) and b_hi <= alpha:
        sol = _pure(sset, b_hi, 0.0, lower, upper=upper)
    elif math.isfinite(b_lo) and b_lo <= alpha:
        sol = _pure(sset, b_lo, 0.0, lower)
    else:
        sol = solve_equality(sset, alpha)
    sol = replace(sol, alpha=alpha)
    if certify_grid:
        sol = replace(sol, certificate_margin=certify(sset, sol, certify_grid).margin)
    return sol


def _is_integral(a):
    a = a[np.isfinite(a)]
    return bool(np.all(a == np.floor(a)))


def solve_discrete(sset: ScenarioSet, alpha: float, seed: int | None = None,
                   draws: int = 1) -> Solution:
    """Integer-time variant: the rule is a randomized choice between two integer rules.

    With integer breakpoints and horizons every first-passage time is already
    an integer, so the search is the continuous one; the mixture is reported
    as a mixed strategy.  When ``seed`` is given, ``draws`` realizations of the
    Bernoulli(``q``) coin are attached (True means "use the upper rule").
    """
    ensure_valid(sset)
    if not (_is_integral(sset.breakpoints) and _is_integral(sset.horizons)):
        raise NonIntegerGridError("breakpoints and finite horizons must be integers")
    sol = solve_equality(sset, alpha, mode=MIXED)
    if seed is not None:
        rng = np.random.default_rng(seed)
        coins = rng.random(int(draws)) < sol.rule.mix
        sol = replace(sol, draws=tuple(bool(c) for c in coins))
    return sol


def objective(sset: ScenarioSet, rule: StoppingRule) -> float:
    """Objective of ``rule``; mixed rules are valued in expectation over the coin."""
    lo, hi = rule.lower, rule.upper
    if lo.shape != (len(sset),):
        raise RuleInfeasibleError("rule length does not match the scenario set")
    if np.any(lo < 0) or np.any(hi < lo) or np.any(hi > sset.horizons) or \
            np.any(~np.isfinite(hi)):
        raise RuleInfeasibleError("rule times must satisfy 0 <= lower <= upper <= T, finite")
    if rule.mode == MIXED:
        if rule.mix == 0.0:
            return cost(sset, lo)
        return (1.0 - rule.mix) * cost(sset, lo) + rule.mix * cost(sset, hi)
    return cost(sset, rule.effective)


def certify(sset: ScenarioSet, solution: Solution, grid: int = 1000) -> Certificate:
    """Check the Lagrangian inequality behind optimality scenario by scenario.

    With ``g_i(t) = Y_i phi_i(t) - lam A_i t`` the rule is optimal when every
    stopping time minimizes ``g_i`` over ``[0, T_i]``.  ``g_i`` is evaluated at
    all breakpoints, the horizon, the rule times and ``grid`` equispaced points
    of ``[0, min(T_i, last breakpoint + 1)]``; the margin is the smallest
    ``g_i(t) - g_i(tau_i)`` seen.
    """
    n = len(sset)
    lam = solution.multiplier
    rule = solution.rule
    taus = np.stack([rule.lower, rule.upper, rule.effective])
    last_bp = sset.breakpoints[sset.offsets[1:] - 1]
    span = np.minimum(sset.horizons, last_bp + 1.0)
    u = np.linspace(0.0, 1.0, int(grid)) if grid > 0 else np.zeros(0)

    scen_parts = [np.repeat(np.arange(n), u.shape[0]), sset.scenario_of]
    time_parts = [np.outer(span, u).ravel(), sset.breakpoints]
    fin = np.isfinite(sset.horizons)
    scen_parts.append(np.flatnonzero(fin))
    time_parts.append(sset.horizons[fin])
    for row in taus:
        scen_parts.append(np.arange(n))
        time_parts.append(row)
    idx = np.concatenate(scen_parts)
    ts = np.concatenate(time_parts)
    keep = (ts <= sset.horizons[idx]) & np.isfinite(ts)
    idx, ts = idx[keep], ts[keep]

    def g(index, times):
        return sset.densities[index] * sset.phi_at(times, index) - lam * sset.rates[index] * times

    ref = np.max(np.stack([g(np.arange(n), row) for row in taus]), axis=0)
    gap = g(idx, ts) - ref[idx]
    worst = int(np.argmin(gap))
    return Certificate(margin=float(gap[worst]), scenario=int(idx[worst]),
                       time=float(ts[worst]), scale=solution.scale)


def value_curve(sset: ScenarioSet, alphas) -> list[tuple[float, float]]:
    """Optimal objective ``f(alpha)`` at each requested budget (convex in alpha)."""
    alphas = [float(a) for a in alphas]
    if not math.isfinite(sset.total_budget):
        raise UnboundedBudgetError("value curve requires a finite total budget")
    workers = kernels.worker_count()
    if workers > 1 and len(alphas) > 1:
        with ThreadPoolExecutor(workers) as pool:
            sols = list(pool.map(lambda a: solve_equality(sset, a), alphas))
    else:
        sols = [solve_equality(sset, a) for a in alphas]
    return [(a, s.objective) for a, s in zip(alphas, sols)]


def solve_window(sset: ScenarioSet, starts, alpha: float) -> Solution:
    """Solve with the extra constraint ``tau_i >= S_i``; times are reported unshifted."""
    starts = np.asarray(starts, dtype=np.float64)
    shifted = shift_window(sset, starts)
    sol = solve_equality(shifted, alpha - window_offset(sset, starts))
    rule = StoppingRule(sol.rule.lower + starts, sol.rule.upper + starts,
                        sol.rule.mix, sol.rule.mode)
    base = cost(sset, starts)
    return replace(sol, rule=rule, objective=base + sol.objective,
                   budget=spend(sset, rule.effective), alpha=float(alpha))
