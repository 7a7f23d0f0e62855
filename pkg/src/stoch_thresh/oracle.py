"""Brute-force verifiers, deliberately independent of the threshold solver.

``greedy_grid`` re-derives the optimum by slicing time into cells and
filling the budget with the cheapest cells first; ``np_lp_enumerate`` walks
every vertex of the size-constrained test polytope; ``feasible_sampler``
produces random feasible rules for dominance checks.  None of them calls
into :mod:`stoch_thresh.solver` or the kernels.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .model import ScenarioSet


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class GridOracleConfig:
    step: float = 1e-3
    cap: float = 100.0

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("grid step must be positive")
        if not self.cap > 0:
            raise ValueError("truncation cap must be positive")


@dataclass(frozen=True)
class GridOracleResult:
    objective: float
    bound: float


def _integral(bp, vals, t):
    """Integral over [0, t] of the step function (bp, vals), vectorized in t."""
    widths = np.diff(bp)
    areas = np.concatenate(([0.0], np.cumsum(vals[:-1] * widths)))
    j = np.searchsorted(bp, t, side="right") - 1
    return areas[j] + vals[j] * (t - bp[j])


def greedy_grid(sset: ScenarioSet, alpha: float,
                config: GridOracleConfig = GridOracleConfig()) -> GridOracleResult:
    """Fill the budget with the cells of lowest marginal cost ``Y xi / A``.

    Each scenario timeline ``[0, T_i]`` (truncated at ``config.cap`` when
    uncapped) is cut into cells of width ``step``.  A cell costs
    ``w Y int_cell xi`` and consumes ``w A width`` budget; cells are taken in
    order of cost per unit budget, the boundary cell fractionally.  The
    result is exact for the problem with ``xi`` replaced by its cell averages,
    which differs from the true optimum by at most
    ``sum_i w_i Y_i max_cell(width * oscillation / 4)``; that quantity plus a
    floating-point allowance is returned as ``bound``.
    """
    if not alpha >= 0:
        raise OracleError("alpha must be nonnegative")
    step = config.step
    ratios, costs, budgets = [], [], []
    analytic = []
    for i in range(len(sset)):
        a, b = sset.offsets[i], sset.offsets[i + 1]
        bp = np.asarray(sset.breakpoints[a:b])
        vals = np.asarray(sset.values[a:b])
        w, y, rate, T = (float(sset.weights[i]), float(sset.densities[i]),
                         float(sset.rates[i]), float(sset.horizons[i]))
        if not math.isfinite(T):
            T = config.cap
        n_cells = int(math.ceil(T / step)) if T > 0 else 0
        if n_cells == 0:
            analytic.append(0.0)
            continue
        edges = np.minimum(np.arange(n_cells + 1) * step, T)
        edges[-1] = T
        width = np.diff(edges)
        keep = width > 0
        left, right, width = edges[:-1][keep], edges[1:][keep], width[keep]
        integ = _integral(bp, vals, right) - _integral(bp, vals, left)
        lo_val = vals[np.searchsorted(bp, left, side="right") - 1]
        # value just before the right edge
        hi_val = vals[np.searchsorted(bp, right, side="left") - 1]
        osc = np.maximum(hi_val - lo_val, 0.0)
        analytic.append(w * y * float(np.max(width * osc)) / 4.0)
        costs.append(w * y * integ)
        budgets.append(w * rate * width)
        ratios.append(y * integ / (rate * width))
    if not costs:
        if alpha > 0:
            raise OracleError("alpha exceeds the total budget")
        return GridOracleResult(0.0, 0.0)
    costs = np.concatenate(costs)
    budgets = np.concatenate(budgets)
    ratios = np.concatenate(ratios)
    total = math.fsum(budgets)
    if alpha > total * (1 + 1e-12):
        raise OracleError(f"alpha={alpha!r} exceeds the total budget {total!r}")
    order = np.argsort(ratios, kind="stable")
    cum = np.cumsum(budgets[order])
    k = int(np.searchsorted(cum, alpha, side="left"))
    taken = order[:k]
    objective = math.fsum(costs[taken])
    used = math.fsum(budgets[taken])
    if k < order.size:
        frac = (alpha - used) / budgets[order[k]]
        objective += min(max(frac, 0.0), 1.0) * costs[order[k]]
    scale = max(1.0, math.fsum(np.abs(costs)))
    bound = math.fsum(analytic) + 1e-9 * scale
    return GridOracleResult(objective=float(objective), bound=float(bound))


def feasible_sampler(sset: ScenarioSet, alpha: float, count: int, seed: int) -> list[np.ndarray]:
    """Random rules ``tau_i = min(c u_i T_i, T_i)`` scaled so they spend exactly ``alpha``."""
    T = np.asarray(sset.horizons)
    if not np.all(np.isfinite(T)):
        raise OracleError("the sampler needs finite horizons")
    wa = np.asarray(sset.weights) * np.asarray(sset.rates)
    total = math.fsum(wa * T)
    if not 0.0 <= alpha <= total:
        raise OracleError(f"alpha={alpha!r} outside [0, {total!r}]")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        u = 1.0 - rng.random(T.shape[0])
        if alpha == 0.0:
            out.append(np.zeros_like(T))
            continue
        if alpha == total:
            out.append(T.copy())
            continue

        def spend(c):
            return math.fsum(wa * np.minimum(c * u * T, T))

        lo, hi = 0.0, 1.0
        while spend(hi) < alpha:
            hi *= 2.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid in (lo, hi):
                break
            if spend(mid) < alpha:
                lo = mid
            else:
                hi = mid
        out.append(np.minimum(hi * u * T, T))
    return out


def np_lp_enumerate(p0, p1, alpha: float, max_dim: int = 12):
    """Maximum power over all vertices of ``{t in [0,1]^n : sum p0 t = alpha}``.

    Vertices have at most one fractional coordinate, so it suffices to try
    every 0/1 pattern with each coordinate (or none) freed to absorb the
    remaining size.  Returns ``(power, test)``.
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    n = p0.size
    if n > max_dim:
        raise OracleError(f"dimension {n} exceeds {max_dim}")
    masks = np.array(list(itertools.product((0.0, 1.0), repeat=n)))
    size = masks @ p0
    power = masks @ p1
    tol = 1e-12
    best_power = -math.inf
    best = None
    ok = np.abs(size - alpha) <= tol
    if np.any(ok):
        j = int(np.argmax(np.where(ok, power, -np.inf)))
        best_power, best = power[j], masks[j].copy()
    for i in range(n):
        if p0[i] <= 0:
            continue
        rest = size - masks[:, i] * p0[i]
        frac = (alpha - rest) / p0[i]
        ok = (frac >= -tol) & (frac <= 1 + tol)
        if not np.any(ok):
            continue
        pw = power - masks[:, i] * p1[i] + np.clip(frac, 0, 1) * p1[i]
        j = int(np.argmax(np.where(ok, pw, -np.inf)))
        if pw[j] > best_power:
            best_power = pw[j]
            best = masks[j].copy()
            best[i] = min(max(frac[j], 0.0), 1.0)
    if best is None:
        raise OracleError("no test of the requested size exists")
    return float(best_power), best
