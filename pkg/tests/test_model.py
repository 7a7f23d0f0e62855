import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import scenario_sets, step_processes
from stoch_thresh import kernels
from stoch_thresh.model import (INF, InvalidScenarioError, Scenario, ScenarioSet, StepProcess,
                                ensure_valid, phi, shift_window, validate, window_offset)


def two_scenarios():
    return ScenarioSet([
        Scenario(0.5, 1.0, 10.0, 1.0, StepProcess([0, 1], [0, 5])),
        Scenario(0.5, 1.0, 10.0, 1.0, StepProcess([0, 3], [0, 5])),
    ])


class TestStepProcess:
    def test_evaluation_is_right_continuous(self):
        xi = StepProcess([0, 1, 2], [-1, 0, 4])
        assert [xi(t) for t in (0, 0.5, 1, 1.999, 2, 100)] == [-1, -1, 0, 0, 4, 4]

    @pytest.mark.parametrize("bp,vals,msg", [
        ([1, 2], [0, 1], "first breakpoint is not 0"),
        ([0, 1, 1], [0, 1, 2], "breakpoints not strictly increasing"),
        ([0, 1], [2, 1], "values not nondecreasing"),
        ([0, math.inf], [0, 1], "breakpoints not finite"),
        ([0, 1], [0, math.nan], "values not finite"),
    ])
    def test_problems(self, bp, vals, msg):
        assert msg in StepProcess(bp, vals).problems()

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="differ in length"):
            StepProcess([0, 1], [0])

    def test_shifted(self):
        xi = StepProcess([0, 1, 3], [0, 2, 5])
        s = xi.shifted(2.0)
        assert s.breakpoints == (0.0, 1.0) and s.values == (2.0, 5.0)
        assert xi.shifted(0) is xi


class TestPhi:
    def test_piecewise_linear(self):
        xi = StepProcess([0, 1, 3], [-2, 1, 4])
        assert phi(xi, 0.0) == 0.0
        assert phi(xi, 1.0) == -2.0
        assert phi(xi, 2.0) == -1.0
        assert phi(xi, 5.0) == -2.0 + 2.0 + 8.0

    @pytest.mark.parametrize("t", [-1.0, math.inf, math.nan])
    def test_rejects_bad_time(self, t):
        with pytest.raises(ValueError):
            phi(StepProcess.constant(1.0), t)

    @given(step_processes(), st.floats(0, 10), st.floats(0, 10))
    def test_convex_and_monotone_slopes(self, xi, s, t):
        # phi is convex: midpoint value below the chord
        mid = 0.5 * (s + t)
        assert phi(xi, mid) <= 0.5 * (phi(xi, s) + phi(xi, t)) + 1e-9 * (1 + abs(phi(xi, s))
                                                                           + abs(phi(xi, t)))

    @given(scenario_sets())
    def test_matches_packed_kernels(self, sset):
        times = np.array([min(s.horizon, 2.5) for s in sset])
        packed = sset.phi_at(times)
        scalar = [phi(s.process, t) for s, t in zip(sset, times)]
        assert packed.tolist() == scalar


class TestScenarioSet:
    def test_packing(self):
        sset = two_scenarios()
        assert len(sset) == 2
        assert sset.offsets.tolist() == [0, 2, 4]
        assert sset.keys.tolist() == [0, 5, 0, 5]
        assert sset.total_budget == 10.0
        assert sset[1].process.breakpoints == (0.0, 3.0)

    def test_from_arrays_round_trip(self):
        sset = two_scenarios()
        again = ScenarioSet.from_arrays(sset.offsets, sset.breakpoints, sset.values,
                                        sset.weights, sset.densities, sset.horizons,
                                        sset.rates)
        assert again == sset
        assert list(again) == list(sset)

    def test_arrays_are_read_only(self):
        with pytest.raises(ValueError):
            two_scenarios().values[0] = 1.0

    def test_validate_reports_each_scenario(self):
        sset = ScenarioSet([
            Scenario(0.5, 1.0, 1.0, 1.0, StepProcess([0, 1], [1, 0])),
            Scenario(-1.0, 1.0, INF, 1.0, StepProcess([0], [-1])),
        ])
        report = validate(sset)
        assert report == ["scenario 0: values not nondecreasing",
                          "scenario 1: weight must be positive and finite",
                          "scenario 1: negative tail with infinite horizon"]
        with pytest.raises(InvalidScenarioError) as err:
            ensure_valid(sset)
        assert err.value.report == report

    @given(scenario_sets(allow_inf=True))
    def test_generated_sets_are_valid(self, sset):
        assert validate(sset) == []
        # vectorized check agrees with per-scenario checks
        assert all(not s.problems() for s in sset)


class TestWindow:
    def test_shift_and_offset(self):
        sset = two_scenarios()
        shifted = shift_window(sset, [1.0, 2.0])
        assert shifted[0].horizon == 9.0 and shifted[1].horizon == 8.0
        assert shifted[1].process.values == (0.0, 5.0)
        assert window_offset(sset, [1.0, 2.0]) == 1.5

    def test_rejects_start_past_horizon(self):
        with pytest.raises(ValueError, match="0 <= S <= T"):
            shift_window(two_scenarios(), [0.0, 11.0])


@pytest.mark.skipif(len(kernels.available_backends()) < 2, reason="compiled kernels not built")
class TestBackends:
    @settings(max_examples=50)
    @given(scenario_sets(max_scenarios=10, allow_inf=True), st.floats(-5, 5), st.booleans())
    def test_bit_identical(self, sset, level, strict):
        fast, slow = (kernels.get_backend(n) for n in ("cython", "python"))
        args = (sset.offsets, sset.breakpoints, sset.keys, sset.horizons, level, strict)
        assert np.array_equal(fast.crossing_times(*args), slow.crossing_times(*args))
        cum_f = fast.cumulative_integrals(sset.offsets, sset.breakpoints, sset.values)
        cum_s = slow.cumulative_integrals(sset.offsets, sset.breakpoints, sset.values)
        assert np.array_equal(cum_f, cum_s)
        idx = np.arange(len(sset))
        times = np.minimum(sset.horizons, 3.3)
        a = fast.integrate_at(sset.offsets, sset.breakpoints, sset.values, cum_f, idx, times)
        b = slow.integrate_at(sset.offsets, sset.breakpoints, sset.values, cum_s, idx, times)
        assert np.array_equal(a, b)

    def test_long_paths_use_search(self):
        rng = np.random.default_rng(0)
        n, k = 5, 200
        offsets = np.arange(n + 1) * k
        bp = np.tile(np.arange(k, dtype=float), n)
        vals = np.sort(rng.normal(size=n * k).reshape(n, k), axis=1).ravel()
        fast, slow = (kernels.get_backend(m) for m in ("cython", "python"))
        cum = slow.cumulative_integrals(offsets, bp, vals)
        times = rng.uniform(0, 250, n)
        idx = np.arange(n)
        assert np.array_equal(fast.integrate_at(offsets, bp, vals, cum, idx, times),
                              slow.integrate_at(offsets, bp, vals, cum, idx, times))


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


def test_pure_fallback_selected_by_environment():
    code = ("from stoch_thresh import kernels, solve_equality, ScenarioSet, Scenario, StepProcess;"
            "s = ScenarioSet([Scenario(1.0, 1.0, 10.0, 1.0, StepProcess([0, 1], [0, 5]))]);"
            "print(kernels.BACKEND, solve_equality(s, 2.0).objective)")
    env = dict(os.environ, STOCH_THRESH_PURE="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True)
    assert out.stdout.split() == ["python", "5.0"]
