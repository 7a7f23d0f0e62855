import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import random_set, scenario_sets
from stoch_thresh.model import INF, Scenario, ScenarioSet, StepProcess
from stoch_thresh.oracle import (GridOracleConfig, OracleError, feasible_sampler, greedy_grid,
                                 np_lp_enumerate)
from stoch_thresh.solver import solve_equality, spend


def two():
    return ScenarioSet([
        Scenario(0.5, 1.0, 10.0, 1.0, StepProcess([0, 1], [0, 5])),
        Scenario(0.5, 1.0, 10.0, 1.0, StepProcess([0, 3], [0, 5])),
    ])


class TestGreedyGrid:
    @pytest.mark.parametrize("alpha,expected", [(0.0, 0.0), (2.0, 0.0), (2.5, 2.5),
                                                (10.0, 40.0)])
    def test_two_scenario_values(self, alpha, expected):
        res = greedy_grid(two(), alpha)
        assert abs(res.objective - expected) <= res.bound

    def test_bound_reflects_jumps_inside_cells(self):
        sset = ScenarioSet([Scenario(1.0, 1.0, 1.0, 1.0, StepProcess([0, 0.0005], [0, 4]))])
        res = greedy_grid(sset, 0.5, GridOracleConfig(step=1e-3))
        assert res.bound >= 1e-3 * 4 / 4

    def test_uncapped_horizon_truncated(self):
        sset = ScenarioSet([Scenario(1.0, 1.0, INF, 1.0, StepProcess([0], [1.0]))])
        assert greedy_grid(sset, 3.0, GridOracleConfig(cap=5.0)).objective == pytest.approx(3.0)
        with pytest.raises(OracleError):
            greedy_grid(sset, 6.0, GridOracleConfig(cap=5.0))

    @pytest.mark.parametrize("kwargs", [dict(step=0.0), dict(cap=-1.0)])
    def test_config_validation(self, kwargs):
        with pytest.raises(ValueError):
            GridOracleConfig(**kwargs)

    @settings(max_examples=40, deadline=None)
    @given(scenario_sets(max_scenarios=4), st.floats(0.0, 1.0))
    def test_agrees_with_solver(self, sset, frac):
        alpha = frac * sset.total_budget
        res = greedy_grid(sset, alpha, GridOracleConfig(step=1e-2))
        assert abs(solve_equality(sset, alpha).objective - res.objective) <= res.bound


class TestSampler:
    def test_rules_are_feasible(self):
        sset = random_set(np.random.default_rng(1), max_scenarios=10)
        alpha = 0.3 * sset.total_budget
        for rule in feasible_sampler(sset, alpha, 50, seed=2):
            assert np.all(rule >= 0) and np.all(rule <= sset.horizons)
            assert spend(sset, rule) == pytest.approx(alpha, rel=1e-12)

    def test_reproducible(self):
        sset = random_set(np.random.default_rng(1), max_scenarios=5)
        a = feasible_sampler(sset, 1.0, 3, seed=9)
        b = feasible_sampler(sset, 1.0, 3, seed=9)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_needs_finite_horizons(self):
        sset = ScenarioSet([Scenario(1.0, 1.0, INF, 1.0, StepProcess([0], [1.0]))])
        with pytest.raises(OracleError):
            feasible_sampler(sset, 1.0, 1, seed=0)


class TestLpEnumeration:
    def test_two_point(self):
        power, test = np_lp_enumerate([0.5, 0.5], [0.9, 0.1], 0.75)
        assert power == pytest.approx(0.95) and test.tolist() == [1.0, 0.5]

    def test_dimension_limit(self):
        with pytest.raises(OracleError):
            np_lp_enumerate(np.full(13, 1 / 13), np.full(13, 1 / 13), 0.5)

    def test_power_is_monotone_in_size(self):
        rng = np.random.default_rng(5)
        p0, p1 = rng.dirichlet(np.ones(6)), rng.dirichlet(np.ones(6))
        powers = [np_lp_enumerate(p0, p1, a)[0] for a in np.linspace(0.05, 0.95, 10)]
        assert all(b >= a - 1e-12 for a, b in zip(powers, powers[1:]))
