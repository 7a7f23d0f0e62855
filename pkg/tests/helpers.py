"""Random instance generators shared by the test modules."""
import math

import numpy as np
from hypothesis import strategies as st

from stoch_thresh.model import INF, Scenario, ScenarioSet, StepProcess

#: one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


def random_process(rng, max_breakpoints=10, span=5.0, integer=False, low=-3.0, high=3.0):
    k = int(rng.integers(1, max_breakpoints + 1))
    if integer:
        inner = rng.choice(np.arange(1, int(span) + 1), size=min(k - 1, int(span)), replace=False)
    else:
        inner = rng.uniform(0.0, span, size=k - 1)
    bp = np.unique(np.concatenate(([0.0], inner)))
    vals = np.sort(rng.uniform(low, high, size=bp.size))
    return StepProcess(bp, vals)


def random_set(rng, max_scenarios=50, max_breakpoints=10, span=5.0, integer=False,
               unit=False):
    """Valid finite-horizon set; ``integer`` gives integer breakpoints and horizons."""
    n = int(rng.integers(1, max_scenarios + 1))
    scen = []
    for _ in range(n):
        if integer:
            T = float(rng.integers(0, int(span) + 1))
        else:
            T = float(rng.uniform(0.2, span))
        scen.append(Scenario(
            weight=float(rng.uniform(0.1, 1.0)),
            density=1.0 if unit else float(rng.uniform(0.2, 2.0)),
            horizon=T,
            rate=1.0 if unit else float(rng.uniform(0.2, 2.0)),
            process=random_process(rng, max_breakpoints, span, integer),
        ))
    return ScenarioSet(scen)


finite = st.floats(min_value=-5.0, max_value=5.0, allow_nan=False, allow_infinity=False)


@st.composite
def step_processes(draw, max_breakpoints=6):
    k = draw(st.integers(1, max_breakpoints))
    gaps = draw(st.lists(st.floats(0.01, 3.0), min_size=k - 1, max_size=k - 1))
    bp = [0.0]
    for g in gaps:
        bp.append(bp[-1] + g)
    vals = sorted(draw(st.lists(finite, min_size=k, max_size=k)))
    return StepProcess(bp, vals)


@st.composite
def scenario_sets(draw, max_scenarios=6, allow_inf=False):
    n = draw(st.integers(1, max_scenarios))
    scen = []
    for _ in range(n):
        proc = draw(step_processes())
        if allow_inf and proc.values[-1] >= 0 and draw(st.booleans()):
            T = INF
        else:
            T = draw(st.floats(0.0, 8.0))
        scen.append(Scenario(
            weight=draw(st.floats(0.05, 2.0)),
            density=draw(st.floats(0.0, 3.0)),
            horizon=T,
            rate=draw(st.floats(0.1, 3.0)),
            process=proc,
        ))
    return ScenarioSet(scen)


def exact_cost(sset, times):
    """Objective recomputed scenario by scenario with the scalar integral."""
    from stoch_thresh.model import phi
    return math.fsum(s.weight * s.density * phi(s.process, float(t))
                     for s, t in zip(sset, times))
