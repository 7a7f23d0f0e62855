"""Special cases with explicit or nearly explicit threshold rules.

Each solver here either has a formula of its own (stationary excess
inverse, quadratic water level, renewal counting with exponential horizon)
or is a thin reduction onto :mod:`stoch_thresh.solver` (likelihood-ratio
tests, separable allocation, static portfolio budget).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .model import INF, Scenario, ScenarioSet, StepProcess
from .solver import (DETERMINISTIC, InfeasibleAlphaError, Solution, SolverError,
                     StoppingRule, solve_equality, solve_inequality)


class BisectionError(SolverError):
    reason = "bisection-failure"


# -- deterministic cost, random horizon ---------------------------------------

@dataclass(frozen=True)
class EmpiricalHorizon:
    """Sampled horizons; ``mean`` is their average."""

    samples: tuple

    def __post_init__(self):
        s = tuple(float(x) for x in self.samples)
        if not s:
            raise ValueError("need at least one horizon sample")
        if any(not (math.isfinite(x) and x >= 0) for x in s):
            raise ValueError("horizon samples must be finite and nonnegative")
        if sum(s) <= 0:
            raise ValueError("horizon samples must have a positive mean")
        object.__setattr__(self, "samples", s)

    @property
    def mean(self):
        return math.fsum(self.samples) / len(self.samples)

    def excess_cdf(self, t):
        """Stationary-excess CDF ``F_e(t) = E[min(t, T)] / E[T]``."""
        return math.fsum(min(t, x) for x in self.samples) / math.fsum(self.samples)


@dataclass(frozen=True)
class ExcessRule:
    threshold: float
    rule: np.ndarray
    mean: float
    objective: float | None = None


def stationary_excess_rule(horizon: EmpiricalHorizon, p: float,
                           psi: Callable[[float], float] | None = None) -> ExcessRule:
    """Cap every horizon sample at ``F_e^{-1}(p)``.

    For any strictly convex deterministic cost this is optimal among rules
    with ``E[tau] = p E[T]``, and it does not depend on the cost, so ``psi`` is
    only used to report ``E[psi(tau)]``.  The inverse is computed in rational
    arithmetic on the sample knots, so ``E[tau] == p E[T]`` holds exactly
    before the final rounding.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p!r}")
    xs = sorted(Fraction(x) for x in horizon.samples)
    n = len(xs)
    target = Fraction(p) * sum(xs)
    # on [x_(j), x_(j+1)]: sum(min(t, x)) = prefix_j + (n - j) t
    prefix = Fraction(0)
    knot = Fraction(0)
    t_star = None
    for j, x in enumerate(xs):
        at_x = prefix + (n - j) * x
        if at_x >= target:
            t_star = knot + (target - (prefix + (n - j) * knot)) / (n - j)
            break
        prefix += x
        knot = x
    assert t_star is not None  # p < 1 keeps the target below sum(xs)
    threshold = float(t_star)
    rule = np.minimum(np.asarray(horizon.samples), threshold)
    exact_mean = sum(min(t_star, x) for x in xs) / n
    obj = None
    if psi is not None:
        obj = math.fsum(psi(t) for t in rule) / n
    return ExcessRule(threshold=threshold, rule=rule, mean=float(exact_mean), objective=obj)


# -- quadratic cost with random coefficients ----------------------------------

@dataclass(frozen=True)
class QuadScenario:
    """One atom of ``E[a tau^2 + b tau + c]`` subject to ``E[d tau] = alpha``."""

    a: float
    b: float
    c: float
    d: float
    t_cap: float
    weight: float = 1.0

    def __post_init__(self):
        if not (self.a > 0 and self.d > 0 and self.t_cap >= 0 and self.weight > 0):
            raise ValueError("need a > 0, d > 0, t_cap >= 0, weight > 0")


def _quad_arrays(scenarios):
    arr = np.array([(s.a, s.b, s.c, s.d, s.t_cap, s.weight) for s in scenarios], dtype=float)
    return arr.T


def _quad_times(a, b, d, cap, lam):
    return np.minimum(np.maximum(d * lam - b, 0.0) / (2.0 * a), cap)


def quadratic_multiplier(a, b, d, cap, w, alpha, rtol=1e-10, max_iter=400):
    """Level ``lam`` with ``sum(w d tau_lam) == alpha`` for the quadratic rule.

    Monotone bisection on the continuous budget map, followed by one exact
    linear solve on the active set (the map is linear between kinks).
    Infinite caps are allowed; the bracket is then expanded geometrically.
    """
    a, b, d, cap, w = (np.asarray(x, dtype=float) for x in (a, b, d, cap, w))

    def budget(lam):
        return math.fsum(w * d * _quad_times(a, b, d, cap, lam))

    lo = float(np.min(b / d)) - 1.0
    finite = np.isfinite(cap)
    hi = float(np.max(np.where(finite, (b + 2.0 * a * np.where(finite, cap, 0.0)) / d,
                               b / d))) + 1.0
    width = max(1.0, abs(hi))
    for _ in range(2000):
        if budget(hi) >= alpha:
            break
        hi += width
        width *= 2.0
    else:
        raise BisectionError("could not bracket the multiplier")
    for _ in range(max_iter):
        if hi - lo <= rtol * max(1.0, abs(lo), abs(hi)):
            break
        mid = 0.5 * (lo + hi)
        if budget(mid) >= alpha:
            hi = mid
        else:
            lo = mid
    else:
        raise BisectionError(f"bisection did not converge in {max_iter} iterations")
    lam = 0.5 * (lo + hi)
    tau = _quad_times(a, b, d, cap, lam)
    active = (tau > 0) & (tau < cap)
    if np.any(active):
        slope = math.fsum((w * d * d / (2.0 * a))[active])
        fixed = math.fsum((w * d * np.where(active, 0.0, tau)))
        shift = math.fsum((w * d * b / (2.0 * a))[active])
        polished = (alpha - fixed + shift) / slope
        if lo - (hi - lo) <= polished <= hi + (hi - lo) and \
                abs(budget(polished) - alpha) <= abs(budget(lam) - alpha):
            lam = polished
    return lam


def solve_quadratic(scenarios: Sequence[QuadScenario], alpha: float) -> Solution:
    """Minimize ``sum w (a tau^2 + b tau + c)`` subject to ``sum w d tau = alpha``.

    The optimal rule is ``tau = (d lam - b)^+ / (2a)`` capped at ``t_cap``;
    no mixing is needed because the budget map is continuous in ``lam``.
    """
    a, b, c, d, cap, w = _quad_arrays(scenarios)
    total = math.fsum(w * d * cap)
    alpha = float(alpha)
    if not (0.0 <= alpha <= total) or not math.isfinite(alpha):
        raise InfeasibleAlphaError(f"alpha={alpha!r} outside [0, {total!r}]")
    if alpha == 0.0:
        tau, lam = np.zeros_like(a), float(np.min(b / d))
    elif alpha == total:
        tau, lam = cap.copy(), float(np.max((b + 2.0 * a * cap) / d))
    else:
        lam = quadratic_multiplier(a, b, d, cap, w, alpha)
        tau = _quad_times(a, b, d, cap, lam)
    objective = math.fsum(w * (a * tau * tau + b * tau + c))
    return Solution(rule=StoppingRule(tau, tau), multiplier=float(lam),
                    objective=objective, budget=math.fsum(w * d * tau), alpha=alpha)


def quadratic_staircase(scenarios: Sequence[QuadScenario], steps: int = 1000):
    """Step-function version of the quadratic problem for the generic solver.

    The derivative ``2 a t + b`` is sampled at the left end of ``steps`` cells
    of ``[0, t_cap]``.  Returns the set and the a-priori objective error bound
    ``sum w a h (t_cap + h)`` (``h`` the cell width), which also bounds the gap
    between the two optimal values.
    """
    scen = []
    bound = []
    for s in scenarios:
        h = s.t_cap / steps if s.t_cap > 0 else 1.0
        bp = np.arange(steps) * h if s.t_cap > 0 else np.zeros(1)
        scen.append(Scenario(weight=s.weight, density=1.0, horizon=s.t_cap, rate=s.d,
                             process=StepProcess(bp, 2.0 * s.a * bp + s.b)))
        bound.append(s.weight * s.a * h * (s.t_cap + h))
    constant = math.fsum(s.weight * s.c for s in scenarios)
    return ScenarioSet(scen), math.fsum(bound), constant


# -- likelihood-ratio tests ---------------------------------------------------

@dataclass(frozen=True)
class FiniteTest:
    """Randomized test on a finite sample space: reject point i with probability ``test[i]``."""

    p0: np.ndarray
    p1: np.ndarray
    test: np.ndarray

    @property
    def size(self):
        return math.fsum(self.p0 * self.test)

    @property
    def power(self):
        return math.fsum(self.p1 * self.test)


def np_test(p0, p1, alpha: float, mode: str = "equality") -> FiniteTest:
    """Most powerful randomized test of ``P0`` against ``P1`` at level ``alpha``.

    Points are rejected in decreasing order of the likelihood ratio
    ``p1/p0``; the boundary ratio class is randomized so that the size is
    exactly ``alpha`` (``mode="equality"``) or at most ``alpha`` with maximal
    power (``mode="at-most"``).  Points with ``p0 = 0 < p1`` are always
    rejected at no size cost.
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    if p0.shape != p1.shape or p0.ndim != 1:
        raise ValueError("p0 and p1 must be vectors of equal length")
    if np.any(p0 < 0) or np.any(p1 < 0) or not math.isclose(math.fsum(p0), 1.0, abs_tol=1e-12):
        raise ValueError("p0 must be a probability vector and p1 nonnegative")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    if mode not in ("equality", "at-most"):
        raise ValueError(f"unknown mode {mode!r}")
    support = np.flatnonzero(p0 > 0)
    scen = [Scenario(weight=p0[i], density=p1[i] / p0[i], horizon=1.0, rate=1.0,
                     process=StepProcess.constant(-1.0)) for i in support]
    sset = ScenarioSet(scen)
    # the set's total budget is sum(p0) which may round away from 1
    alpha_eff = min(alpha, sset.total_budget)
    if mode == "equality":
        sol = solve_equality(sset, alpha_eff)
    else:
        sol = solve_inequality(sset, alpha_eff)
    test = np.where(p1 > 0, 1.0, 0.0)
    test[support] = sol.rule.effective
    return FiniteTest(p0=p0, p1=p1, test=test)


# -- renewal counting cost with exponential horizon ----------------------------

@dataclass(frozen=True)
class RenewalModel:
    """Exponential horizon rate ``theta`` and ``lst = E exp(-theta X)`` of the inter-renewal time."""

    theta: float
    lst: float

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError("theta must be positive")
        if not 0.0 < self.lst < 1.0:
            raise ValueError("the Laplace-Stieltjes value must lie in (0, 1)")

    def expected_stop(self, k):
        """``E[min(T, S_k)] = (1 - lst^k) / theta`` for the k-th renewal epoch."""
        return (1.0 - self.lst ** k) / self.theta


@dataclass(frozen=True)
class RenewalResult:
    level: int
    q: float
    lower_budget: float
    upper_budget: float
    expected_budget: float


def renewal_exponential(model: RenewalModel, alpha: float, snap: float = 1e-12) -> RenewalResult:
    """Stop at renewal ``level`` or ``level + 1`` (the latter with probability ``q``).

    ``level = floor(log(1 - theta alpha) / log lst)``.  When the budget is hit
    exactly by an integer level (up to ``snap`` in ``q``) the rule is pure.
    """
    theta = model.theta
    if not 0.0 < alpha < 1.0 / theta:
        raise ValueError(f"alpha must lie in (0, 1/theta), got {alpha!r}")
    level = math.floor(math.log1p(-theta * alpha) / math.log(model.lst))
    lo, hi = model.expected_stop(level), model.expected_stop(level + 1)
    q = (alpha - lo) / (hi - lo)
    if q >= 1.0 - snap:
        level += 1
        lo, hi = hi, model.expected_stop(level + 1)
        q = 0.0
    elif q <= snap:
        q = 0.0
    return RenewalResult(level=level, q=q, lower_budget=lo, upper_budget=hi,
                         expected_budget=(1.0 - q) * lo + q * hi)


def renewal_scenarios(horizons, interarrival=1.0, rng=None) -> ScenarioSet:
    """Equal-weight scenarios whose cost is the renewal counting process.

    ``interarrival`` is either a constant spacing or a callable
    ``(rng, size) -> samples``.  Each path is kept only up to its horizon.
    """
    T = np.asarray(horizons, dtype=float)
    n = T.shape[0]
    if callable(interarrival):
        rng = np.random.default_rng(rng)
        epochs = [[] for _ in range(n)]
        clock = np.zeros(n)
        alive = np.arange(n)
        while alive.size:
            clock[alive] += interarrival(rng, alive.size)
            ok = clock[alive] <= T[alive]
            for i, t in zip(alive[ok], clock[alive][ok]):
                epochs[i].append(t)
            alive = alive[ok]
        counts = np.array([len(e) for e in epochs], dtype=np.int64)
        flat_epochs = np.concatenate([np.asarray(e, dtype=float) for e in epochs]) \
            if counts.sum() else np.zeros(0)
    else:
        x = float(interarrival)
        counts = np.floor(T / x).astype(np.int64)
        flat_epochs = None
    lens = counts + 1
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(lens, out=offsets[1:])
    pos = np.arange(offsets[-1]) - np.repeat(offsets[:-1], lens)
    values = pos.astype(float)
    if flat_epochs is None:
        breakpoints = values * float(interarrival)
    else:
        breakpoints = np.zeros(offsets[-1])
        breakpoints[pos > 0] = flat_epochs
    return ScenarioSet.from_arrays(offsets, breakpoints, values,
                                   weights=np.full(n, 1.0 / n), horizons=T)


# -- separable convex allocation ----------------------------------------------

def separable_set(derivatives: Sequence[StepProcess], caps, rates) -> ScenarioSet:
    caps = np.broadcast_to(np.asarray(caps, dtype=float), (len(derivatives),))
    rates = np.broadcast_to(np.asarray(rates, dtype=float), (len(derivatives),))
    return ScenarioSet(
        Scenario(weight=1.0, density=1.0, horizon=t, rate=r, process=f)
        for f, t, r in zip(derivatives, caps, rates)
    )


def separable_convex(derivatives: Sequence[StepProcess], caps, rates, alpha: float) -> np.ndarray:
    """Minimize ``sum f_i(x_i)`` over ``0 <= x_i <= caps_i``, ``sum rates_i x_i = alpha``.

    ``derivatives[i]`` is the (right) derivative of ``f_i`` as a step function.
    """
    sol = solve_equality(separable_set(derivatives, caps, rates), alpha)
    return sol.rule.effective.copy()


# -- static portfolio budget --------------------------------------------------

@dataclass(frozen=True)
class PortfolioPlan:
    consumption: np.ndarray | None
    terminal: np.ndarray | None
    spent: float
    utility: float
    solution: Solution


def _negated_marginal(marginal):
    bp, vals = marginal
    vals = np.asarray(vals, dtype=float)
    if np.any(np.diff(vals) > 0):
        raise ValueError("marginal utilities must be nonincreasing")
    return StepProcess(bp, -vals)


def solve_portfolio(h, h_terminal, u1_marginal, u2_marginal, x0, consumption_caps=None,
                    terminal_caps=None, probs=None, dt=None) -> PortfolioPlan:
    """Maximize expected utility of consumption and terminal wealth on a grid.

    Parameters
    ----------
    h : array (n_scenarios, n_times)
        Discounted price density at each grid time.
    h_terminal : array (n_scenarios,)
        Price density at the horizon.
    u1_marginal : sequence of (breakpoints, values) per grid time, or None
        Nonincreasing step marginal utility of consumption; None drops consumption.
    u2_marginal : (breakpoints, values) or None
        Nonincreasing step marginal utility of terminal wealth.
    x0 : float
        Initial wealth; the plan spends at most this much.
    consumption_caps, terminal_caps : arrays, optional
        Upper bounds on each decision (default unbounded).
    probs : array (n_scenarios,), optional
        Scenario probabilities (default uniform).
    dt : array (n_times,), optional
        Grid cell widths (default 1).

    The grid only approximates continuous-time consumption; no error claim
    is made for that approximation.
    """
    h = np.atleast_2d(np.asarray(h, dtype=float))
    n_s, n_t = h.shape
    hT = np.asarray(h_terminal, dtype=float).reshape(n_s)
    probs = np.full(n_s, 1.0 / n_s) if probs is None else np.asarray(probs, dtype=float)
    dt = np.ones(n_t) if dt is None else np.asarray(dt, dtype=float)
    if u1_marginal is None and u2_marginal is None:
        raise ValueError("need at least one utility")
    scen = []
    if u1_marginal is not None:
        if len(u1_marginal) != n_t:
            raise ValueError("need one consumption marginal per grid time")
        procs = [_negated_marginal(m) for m in u1_marginal]
        caps = np.full((n_s, n_t), INF) if consumption_caps is None else \
            np.broadcast_to(np.asarray(consumption_caps, dtype=float), (n_s, n_t))
        for s in range(n_s):
            for k in range(n_t):
                scen.append(Scenario(weight=probs[s] * dt[k], density=1.0,
                                     horizon=caps[s, k], rate=h[s, k],
                                     process=procs[k]))
    if u2_marginal is not None:
        proc = _negated_marginal(u2_marginal)
        caps = np.full(n_s, INF) if terminal_caps is None else \
            np.broadcast_to(np.asarray(terminal_caps, dtype=float), (n_s,))
        for s in range(n_s):
            scen.append(Scenario(weight=probs[s], density=1.0, horizon=caps[s],
                                 rate=hT[s], process=proc))
    sset = ScenarioSet(scen)
    sol = solve_inequality(sset, x0)
    alloc = sol.rule.effective
    n_c = n_s * n_t if u1_marginal is not None else 0
    consumption = alloc[:n_c].reshape(n_s, n_t) if n_c else None
    terminal = alloc[n_c:].copy() if u2_marginal is not None else None
    return PortfolioPlan(consumption=consumption, terminal=terminal, spent=sol.budget,
                         utility=-sol.objective, solution=sol)
