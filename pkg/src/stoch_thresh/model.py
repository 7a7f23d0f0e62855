"""Finite weighted scenario sets and step-function cost processes.

A :class:`ScenarioSet` is the discrete stand-in for a measure space: each
atom carries a mass ``weight`` under the constraint measure, a density
``density`` of the objective measure with respect to it, a horizon, a budget
rate and a nondecreasing right-continuous step process.  Internally the set is
packed into flat arrays (CSR style) so the kernels can sweep it without
touching Python objects.
"""
from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from . import kernels

#: Horizon value meaning "no cap".  IEEE infinity is exact under ``min`` and
#: comparisons, so capped and uncapped atoms are never confused.
INF = math.inf


class InvalidScenarioError(ValueError):
    """Raised when a scenario set violates its invariants."""

    def __init__(self, report):
        self.report = list(report)
        super().__init__("; ".join(self.report))


def _readonly(a, dtype=np.float64):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class StepProcess:
    """Right-continuous step function ``xi(t) = values[j]`` on ``[bp[j], bp[j+1])``."""

    breakpoints: tuple
    values: tuple

    def __post_init__(self):
        bp = tuple(float(x) for x in self.breakpoints)
        vs = tuple(float(x) for x in self.values)
        if not bp:
            raise ValueError("a step process needs at least one breakpoint")
        if len(bp) != len(vs):
            raise ValueError(
                f"breakpoints and values differ in length ({len(bp)} != {len(vs)})"
            )
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vs)

    @classmethod
    def constant(cls, value):
        return cls((0.0,), (value,))

    def problems(self):
        """Invariant violations as human-readable strings (empty when valid)."""
        out = []
        bp, vs = self.breakpoints, self.values
        if not all(math.isfinite(x) for x in bp):
            out.append("breakpoints not finite")
        elif bp[0] != 0.0:
            out.append("first breakpoint is not 0")
        if any(b <= a for a, b in zip(bp, bp[1:])):
            out.append("breakpoints not strictly increasing")
        if not all(math.isfinite(v) for v in vs):
            out.append("values not finite")
        elif any(b < a for a, b in zip(vs, vs[1:])):
            out.append("values not nondecreasing")
        return out

    def __call__(self, t):
        j = bisect_right(self.breakpoints, t) - 1
        return self.values[max(j, 0)]

    def shifted(self, start):
        """The process ``t -> xi(start + t)``."""
        if start == 0:
            return self
        head = self(start)
        bp = [0.0]
        vs = [head]
        for b, v in zip(self.breakpoints, self.values):
            if b > start:
                bp.append(b - start)
                vs.append(v)
        return StepProcess(bp, vs)


def phi(process: StepProcess, t: float) -> float:
    """Exact integral of ``process`` over ``[0, t]``."""
    if t < 0 or not math.isfinite(t):
        raise ValueError(f"phi needs a finite nonnegative time, got {t!r}")
    bp, vs = process.breakpoints, process.values
    j = bisect_right(bp, t) - 1
    # same accumulation order as the kernels so results agree bit for bit
    cum = 0.0
    for k in range(j):
        cum = cum + vs[k] * (bp[k + 1] - bp[k])
    return cum + vs[j] * (t - bp[j])


@dataclass(frozen=True)
class Scenario:
    weight: float
    density: float
    horizon: float
    rate: float
    process: StepProcess

    def problems(self):
        out = []
        if not (self.weight > 0 and math.isfinite(self.weight)):
            out.append("weight must be positive and finite")
        if not (0 <= self.density < INF):
            out.append("density must be nonnegative and finite")
        if not (0 < self.rate < INF):
            out.append("rate must be positive and finite")
        if not (self.horizon >= 0):
            out.append("horizon must be nonnegative")
        out.extend(self.process.problems())
        if self.horizon == INF and self.process.values[-1] < 0:
            out.append("negative tail with infinite horizon")
        return out


class ScenarioSet:
    """Finite weighted family of scenarios stored as packed arrays.

    Parameters
    ----------
    scenarios : iterable of Scenario
        Must be nonempty.

    Use :meth:`from_arrays` to build large sets without creating
    per-scenario objects.
    """

    def __init__(self, scenarios: Iterable[Scenario]):
        scenarios = list(scenarios)
        if not scenarios:
            raise ValueError("a scenario set must contain at least one scenario")
        lens = [len(s.process.breakpoints) for s in scenarios]
        offsets = np.zeros(len(scenarios) + 1, dtype=np.int64)
        np.cumsum(lens, out=offsets[1:])
        self._init(
            offsets,
            [b for s in scenarios for b in s.process.breakpoints],
            [v for s in scenarios for v in s.process.values],
            [s.weight for s in scenarios],
            [s.density for s in scenarios],
            [s.horizon for s in scenarios],
            [s.rate for s in scenarios],
        )

    def _init(self, offsets, breakpoints, values, weights, densities, horizons, rates):
        self.offsets = _readonly(offsets, np.int64)
        self.breakpoints = _readonly(breakpoints)
        self.values = _readonly(values)
        self.weights = _readonly(weights)
        self.densities = _readonly(densities)
        self.horizons = _readonly(horizons)
        self.rates = _readonly(rates)
        n = self.weights.shape[0]
        for name in ("densities", "horizons", "rates"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must have one entry per scenario")
        if self.offsets.shape != (n + 1,) or self.offsets[0] != 0 or \
                self.offsets[-1] != self.breakpoints.shape[0] or \
                np.any(np.diff(self.offsets) < 1):
            raise ValueError("offsets do not describe nonempty breakpoint segments")
        if self.values.shape != self.breakpoints.shape:
            raise ValueError("breakpoints and values differ in length")

    @classmethod
    def from_arrays(cls, offsets, breakpoints, values, weights, densities=None,
                    horizons=None, rates=None):
        """Build a set from flat arrays; ``offsets[i]:offsets[i+1]`` slices scenario i."""
        n = len(weights)
        if n == 0:
            raise ValueError("a scenario set must contain at least one scenario")
        self = cls.__new__(cls)
        self._init(
            offsets, breakpoints, values, weights,
            np.ones(n) if densities is None else densities,
            np.full(n, INF) if horizons is None else horizons,
            np.ones(n) if rates is None else rates,
        )
        return self

    def __len__(self):
        return self.weights.shape[0]

    def __getitem__(self, i) -> Scenario:
        n = len(self)
        if i < 0:
            i += n
        if not 0 <= i < n:
            raise IndexError(i)
        a, b = self.offsets[i], self.offsets[i + 1]
        return Scenario(
            weight=float(self.weights[i]),
            density=float(self.densities[i]),
            horizon=float(self.horizons[i]),
            rate=float(self.rates[i]),
            process=StepProcess(self.breakpoints[a:b], self.values[a:b]),
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def __eq__(self, other):
        if not isinstance(other, ScenarioSet):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in ("offsets", "breakpoints", "values", "weights", "densities",
                      "horizons", "rates")
        )

    __hash__ = None

    def __repr__(self):
        return f"ScenarioSet(n={len(self)}, total_budget={self.total_budget!r})"

    # -- derived quantities (cached, the set is immutable) -------------------

    @cached_property
    def lengths(self):
        return np.diff(self.offsets)

    @cached_property
    def scenario_of(self):
        """Scenario index of every flat breakpoint."""
        return np.repeat(np.arange(len(self)), self.lengths)

    @cached_property
    def keys(self):
        """Per-breakpoint threshold keys ``Y * v / A``.

        Thresholds are compared in this level space so that a critical level
        taken from ``keys`` is met exactly by the breakpoint it came from.
        """
        idx = self.scenario_of
        k = self.densities[idx] * self.values / self.rates[idx]
        k.setflags(write=False)
        return k

    @cached_property
    def cumint(self):
        c = kernels.cumulative_integrals(self.offsets, self.breakpoints, self.values)
        c.setflags(write=False)
        return c

    @cached_property
    def budget_weights(self):
        """``weight * rate`` per scenario: budget consumed per unit time."""
        return self.weights * self.rates

    @cached_property
    def cost_weights(self):
        """``weight * density`` per scenario: objective mass per unit cost."""
        return self.weights * self.densities

    @cached_property
    def total_budget(self):
        """``sum(w * A * T)``, infinite when any horizon is uncapped."""
        return math.fsum(self.budget_weights * self.horizons)

    def phi_at(self, times, index=None):
        """Exact integrals ``phi_i(times[k])`` for scenario ``index[k]``."""
        times = np.asarray(times, dtype=np.float64)
        if index is None:
            index = np.arange(len(self))
        return kernels.integrate_at(self.offsets, self.breakpoints, self.values,
                                    self.cumint, index, times)

    def first_values(self):
        return self.values[self.offsets[:-1]]

    def last_values(self):
        return self.values[self.offsets[1:] - 1]


def validate(sset: ScenarioSet) -> list[str]:
    """Check every invariant; returns an empty list when the set is valid.

    Each entry names the violated invariant and the scenario index.
    """
    report = []
    n = len(sset)
    w, y, a, T = sset.weights, sset.densities, sset.rates, sset.horizons
    bp, vs, idx = sset.breakpoints, sset.values, sset.scenario_of
    starts = sset.offsets[:-1]

    def flag(mask, msg):
        for i in np.flatnonzero(mask):
            report.append(f"scenario {i}: {msg}")

    flag(~((w > 0) & np.isfinite(w)), "weight must be positive and finite")
    flag(~((y >= 0) & np.isfinite(y)), "density must be nonnegative and finite")
    flag(~((a > 0) & np.isfinite(a)), "rate must be positive and finite")
    flag(~(T >= 0), "horizon must be nonnegative")

    bad_bp = np.zeros(n, dtype=bool)
    np.logical_or.at(bad_bp, idx, ~np.isfinite(bp))
    flag(bad_bp, "breakpoints not finite")
    flag(~bad_bp & (bp[starts] != 0.0), "first breakpoint is not 0")
    inner = np.ones(bp.shape[0], dtype=bool)
    inner[starts] = False
    nonincr = np.zeros(n, dtype=bool)
    step = np.zeros(bp.shape[0], dtype=bool)
    step[1:] = bp[1:] <= bp[:-1]
    np.logical_or.at(nonincr, idx, inner & step)
    flag(nonincr, "breakpoints not strictly increasing")

    bad_v = np.zeros(n, dtype=bool)
    np.logical_or.at(bad_v, idx, ~np.isfinite(vs))
    flag(bad_v, "values not finite")
    down = np.zeros(vs.shape[0], dtype=bool)
    down[1:] = vs[1:] < vs[:-1]
    decr = np.zeros(n, dtype=bool)
    np.logical_or.at(decr, idx, inner & down)
    flag(~bad_v & decr, "values not nondecreasing")

    flag((T == INF) & (sset.last_values() < 0), "negative tail with infinite horizon")
    return sorted(report, key=lambda s: int(s.split()[1].rstrip(":")))


def ensure_valid(sset: ScenarioSet) -> None:
    report = validate(sset)
    if report:
        raise InvalidScenarioError(report)


def shift_window(sset: ScenarioSet, starts: Sequence[float]) -> ScenarioSet:
    """Re-parametrize ``tau in [S, T]`` as ``tau' = tau - S in [0, T - S]``.

    The process of scenario i becomes ``t -> xi_i(S_i + t)`` and the horizon
    ``T_i - S_i``.  A solve on the result with budget ``alpha - sum(w A S)``
    answers the window-constrained problem on the input.
    """
    starts = np.asarray(starts, dtype=np.float64)
    if starts.shape != (len(sset),):
        raise ValueError("need one start time per scenario")
    if np.any(~(starts >= 0)) or np.any(starts > sset.horizons) or \
            np.any(~np.isfinite(starts)):
        bad = np.flatnonzero(~((starts >= 0) & (starts <= sset.horizons) & np.isfinite(starts)))
        raise ValueError(f"start times must satisfy 0 <= S <= T (scenarios {bad.tolist()})")
    if not np.any(starts):
        return sset
    scen = [
        Scenario(s.weight, s.density, s.horizon - S, s.rate, s.process.shifted(S))
        for s, S in zip(sset, starts.tolist())
    ]
    return ScenarioSet(scen)


def window_offset(sset: ScenarioSet, starts) -> float:
    """Budget already committed by the window starts, ``sum(w A S)``."""
    return math.fsum(sset.budget_weights * np.asarray(starts, dtype=np.float64))
