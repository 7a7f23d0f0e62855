"""Two-phase optimizers: pin the budget at ``alpha``, solve, then search ``alpha``.

The outer objectives (average cost per cycle, long-run cost rate, steady
state welfare) are scalar functions of ``alpha``.  Nothing guarantees they
are unimodal, so every outer search starts with a dense scan; golden-section
refinement only polishes the best bracket of that scan, and scans with more
than one local optimum are flagged.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .closed_form import _quad_times, quadratic_multiplier
from .model import INF, Scenario, ScenarioSet, StepProcess, ensure_valid, phi
from .solver import (SolverError, StoppingRule, cost, critical_levels, crossing,
                     solve_equality, spend)

log = logging.getLogger(__name__)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class NoPositiveRuleError(SolverError):
    reason = "no-positive-rule"


class BracketError(SolverError):
    reason = "bracket-expansion-failure"


def golden_section(f: Callable[[float], float], a: float, b: float, rtol: float = 1e-10,
                   max_iter: int = 500) -> tuple[float, float]:
    """Minimize ``f`` on ``[a, b]``; returns ``(x, f(x))`` of the best point evaluated."""
    best = min(((a, f(a)), (b, f(b))), key=lambda p: p[1])
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= rtol * max(1.0, abs(a), abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    for p in ((c, fc), (d, fd)):
        if p[1] < best[1]:
            best = p
    return best


def _local_minima(values) -> int:
    v = np.asarray(values, dtype=float)
    if v.size < 3:
        return 1
    inner = (v[1:-1] < v[:-2]) & (v[1:-1] <= v[2:])
    return int(inner.sum() + (v[0] < v[1]) + (v[-1] < v[-2]))


def scan_then_refine(f, grid, rtol=1e-10):
    """Dense scan of ``f`` on ``grid`` followed by golden-section around the best point.

    Returns ``(x, f(x), multimodal)``.
    """
    grid = np.asarray(grid, dtype=float)
    vals = np.array([f(x) for x in grid])
    j = int(np.argmin(vals))
    a = grid[max(j - 1, 0)]
    b = grid[min(j + 1, grid.size - 1)]
    x, fx = golden_section(f, a, b, rtol=rtol)
    if vals[j] <= fx:
        x, fx = grid[j], vals[j]
    return float(x), float(fx), _local_minima(vals) > 1


# -- optimal clearing ---------------------------------------------------------

@dataclass(frozen=True)
class ClearingProblem:
    """Setup cost ``K``, holding cost ``g`` applied to the paths of ``scenarios``.

    ``scenarios`` must have unit densities and rates and nonnegative paths;
    ``g`` is a nondecreasing step function on ``[0, inf)``.
    """

    setup_cost: float
    holding: StepProcess
    scenarios: ScenarioSet

    def __post_init__(self):
        if not self.setup_cost > 0:
            raise ValueError("setup cost must be positive")
        if self.holding.problems():
            raise ValueError("holding cost: " + "; ".join(self.holding.problems()))
        s = self.scenarios
        if np.any(s.densities != 1.0) or np.any(s.rates != 1.0):
            raise ValueError("clearing scenarios must have unit density and rate")
        if np.any(s.values < 0):
            raise ValueError("clearing paths must be nonnegative")

    def composed(self) -> ScenarioSet:
        """Scenario set whose processes are ``g(xi(t))``."""
        s = self.scenarios
        g = self.holding
        idx = np.searchsorted(np.asarray(g.breakpoints), s.values, side="right") - 1
        vals = np.asarray(g.values)[idx]
        return ScenarioSet.from_arrays(s.offsets, s.breakpoints, vals, s.weights,
                                       s.densities, s.horizons, s.rates)


@dataclass(frozen=True)
class ClearingResult:
    level: float
    rule: np.ndarray
    ratio: float
    two_phase_alpha: float
    two_phase_ratio: float
    multimodal: bool

    @property
    def gap(self):
        return abs(self.two_phase_ratio - self.ratio) / max(1.0, abs(self.ratio))


def clearing_scan(problem: ClearingProblem):
    """Minimize ``(K + E int_0^tau g(xi)) / E tau`` over first-passage rules.

    Returns ``(level, rule, ratio)``.  Only rules with positive finite expected
    length are candidates.
    """
    sset = problem.composed()
    ensure_valid(sset)
    K = problem.setup_cost
    best = None
    for lam in critical_levels(sset):
        for strict in (False, True):
            tau = crossing(sset, lam, strict)
            b = spend(sset, tau)
            if not (b > 0 and math.isfinite(b)):
                continue
            r = (K + cost(sset, tau)) / b
            if best is None or r < best[2]:
                best = (float(lam), tau, r)
    if best is None:
        raise NoPositiveRuleError("every first-passage rule has zero or infinite expected length")
    return best


def clearing_two_phase(problem: ClearingProblem, points: int = 64, rtol: float = 1e-12):
    """Minimize ``h(alpha) = (K + f(alpha)) / alpha`` by scan and golden section.

    Returns ``(alpha, h(alpha), multimodal)``.
    """
    sset = problem.composed()
    ensure_valid(sset)
    K = problem.setup_cost
    top = sset.total_budget
    if not math.isfinite(top):
        # largest finite budget the solver can meet
        finite = [spend(sset, crossing(sset, lam)) for lam in critical_levels(sset)]
        top = max(b for b in finite if math.isfinite(b))
    if not top > 0:
        raise NoPositiveRuleError("no rule with positive expected length")

    def h(alpha):
        return (K + solve_equality(sset, alpha).objective) / alpha

    grid = top * np.arange(1, points + 1) / points
    return scan_then_refine(h, grid, rtol=rtol)


def clearing_optimal(problem: ClearingProblem, points: int = 64,
                     tol: float = 1e-6) -> ClearingResult:
    """Optimal clearing rule by level scan, cross-checked by the two-phase search."""
    lam, tau, ratio = clearing_scan(problem)
    alpha, h_min, multimodal = clearing_two_phase(problem, points)
    res = ClearingResult(level=lam, rule=tau, ratio=ratio, two_phase_alpha=alpha,
                         two_phase_ratio=h_min, multimodal=multimodal)
    if res.gap > tol:
        log.warning("level scan (%r) and two-phase search (%r) disagree", ratio, h_min)
    return res


# -- output-rate control of a storage system ----------------------------------

@dataclass(frozen=True)
class StorageProblem:
    k1: float
    k2: float
    k3: float
    mu_rho: float
    h: float
    v_samples: tuple

    def __post_init__(self):
        v = tuple(float(x) for x in self.v_samples)
        if not v or any(not (x > 0 and math.isfinite(x)) for x in v):
            raise ValueError("V samples must be positive and finite")
        for name in ("k1", "k2", "k3", "mu_rho", "h"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        object.__setattr__(self, "v_samples", v)


@dataclass(frozen=True)
class StorageResult:
    alpha: float
    rule: np.ndarray
    cost: float
    inner_cost: float
    multimodal: bool


def storage_inner(problem: StorageProblem, alpha: float):
    """Cheapest ``E[V X / 2 + mu_rho X^2 / V]`` with ``E X = alpha``; returns ``(cost, X)``."""
    v = np.asarray(problem.v_samples)
    n = v.size
    w = np.full(n, 1.0 / n)
    a = problem.mu_rho / v
    b = v / 2.0
    if alpha <= 0.0:
        return 0.0, np.zeros(n)
    ones = np.ones(n)
    lam = quadratic_multiplier(a, b, ones, np.full(n, INF), w, alpha)
    x = _quad_times(a, b, ones, INF, lam)
    return math.fsum(w * (a * x * x + b * x)), x


def storage_rate(problem: StorageProblem, points: int = 200, rtol: float = 1e-8,
                 max_doublings: int = 200) -> StorageResult:
    """Minimize ``(K1 + K2 a + h inner(a)) / (K3 + a)`` over ``a = E X >= 0``."""
    p = problem

    def outer(alpha):
        return (p.k1 + p.k2 * alpha + p.h * storage_inner(p, alpha)[0]) / (p.k3 + alpha)

    scale = float(np.mean(p.v_samples))
    hi = scale
    prev = outer(hi / 2.0)
    for _ in range(max_doublings):
        cur = outer(hi)
        if cur > prev and cur > outer(0.0):
            break
        prev = cur
        hi *= 2.0
    else:
        raise BracketError("outer cost keeps decreasing; no finite optimal rate")
    grid = np.linspace(0.0, hi, points + 1)
    alpha, c, multimodal = scan_then_refine(outer, grid, rtol=rtol)
    inner, x = storage_inner(p, alpha)
    return StorageResult(alpha=alpha, rule=x, cost=c, inner_cost=inner, multimodal=multimodal)


# -- service-time regulation --------------------------------------------------

@dataclass(frozen=True)
class RegulationProblem:
    """Arrival rate and per-scenario nonincreasing marginal-utility paths.

    ``v_paths[i]`` is a ``(breakpoints, values)`` pair with nonincreasing values.
    """

    arrival_rate: float
    v_paths: tuple
    weights: tuple = None

    def __post_init__(self):
        if not self.arrival_rate > 0:
            raise ValueError("arrival rate must be positive")
        paths = tuple(StepProcess(bp, vs) for bp, vs in self.v_paths)
        if not paths:
            raise ValueError("need at least one marginal-utility path")
        for i, v in enumerate(paths):
            neg = StepProcess(v.breakpoints, [-x for x in v.values])
            if neg.problems():
                raise ValueError(f"path {i}: " + "; ".join(
                    m.replace("nondecreasing", "nonincreasing") for m in neg.problems()))
        w = self.weights
        w = tuple(1.0 / len(paths) for _ in paths) if w is None else tuple(float(x) for x in w)
        if len(w) != len(paths) or any(x <= 0 for x in w):
            raise ValueError("need one positive weight per path")
        object.__setattr__(self, "v_paths", paths)
        object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class RegulationResult:
    alpha: float
    rule: np.ndarray
    welfare: float
    multimodal: bool


def _waiting_slope(problem, alpha):
    lam = problem.arrival_rate
    return lam / (1.0 - lam * alpha)


def regulation_set(problem: RegulationProblem, alpha: float, time_step: float = 1e-3) -> ScenarioSet:
    """Staircase of ``kappa s - V(s)`` per path, ``kappa = lam / (1 - lam alpha)``.

    The grid merges a uniform mesh with the jumps of ``V``, so only the
    linear waiting term is discretized (left endpoints, never above the true
    cost rate).  Each staircase extends past every time the optimal rule can
    reach.
    """
    kappa = _waiting_slope(problem, alpha)
    v_min = min(v.values[-1] for v in problem.v_paths)
    scen = []
    for v, w in zip(problem.v_paths, problem.weights):
        v0 = v.values[0]
        end = max(alpha + (v0 - v_min) / kappa, v0 / kappa, 0.0) + 2.0 * time_step
        grid = np.union1d(np.arange(0.0, end, time_step), np.asarray(v.breakpoints))
        vals = np.array([v(s) for s in grid])
        xi = np.maximum.accumulate(kappa * grid - vals)
        scen.append(Scenario(weight=w, density=1.0, horizon=INF, rate=1.0,
                             process=StepProcess(grid, xi)))
    return ScenarioSet(scen)


def regulation_welfare(problem: RegulationProblem, alpha: float, times) -> float:
    """``E int_0^S [V(s) - kappa s] ds`` evaluated exactly for the given service times."""
    kappa = _waiting_slope(problem, alpha)
    terms = [w * (phi(v, s) - 0.5 * kappa * s * s)
             for v, w, s in zip(problem.v_paths, problem.weights, np.asarray(times).tolist())]
    return math.fsum(terms)


def regulation_inner(problem: RegulationProblem, alpha: float, time_step: float = 1e-3):
    """Welfare-maximizing service times with ``E S = alpha``; returns ``(welfare, S)``."""
    if alpha == 0.0:
        zero = np.zeros(len(problem.v_paths))
        return 0.0, zero
    sset = regulation_set(problem, alpha, time_step)
    sol = solve_equality(sset, alpha)
    times = sol.rule.effective
    return regulation_welfare(problem, alpha, times), times


def regulation_optimal(problem: RegulationProblem, alpha_grid=64,
                       time_step: float = 1e-3, rtol: float = 1e-8) -> RegulationResult:
    """Welfare-maximizing mean service time on ``[0, 1/arrival_rate)``.

    ``alpha_grid`` is either a number of grid points or an explicit grid.
    """
    cap = 1.0 / problem.arrival_rate
    if np.ndim(alpha_grid) == 0:
        n = int(alpha_grid)
        if n < 1:
            raise ValueError("alpha grid is empty")
        grid = cap * np.arange(n) / n
    else:
        grid = np.asarray(alpha_grid, dtype=float)
        if grid.size == 0:
            raise ValueError("alpha grid is empty")
        if np.any(grid < 0) or np.any(grid >= cap):
            raise ValueError("alpha grid must lie in [0, 1/arrival_rate)")
        grid = np.sort(grid)

    def loss(alpha):
        return -regulation_inner(problem, alpha, time_step)[0]

    alpha, neg_w, multimodal = scan_then_refine(loss, grid, rtol=rtol)
    welfare, times = regulation_inner(problem, alpha, time_step)
    return RegulationResult(alpha=alpha, rule=times, welfare=welfare, multimodal=multimodal)
