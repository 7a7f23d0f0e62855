import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stoch_thresh.model import INF, Scenario, ScenarioSet, StepProcess, phi
from stoch_thresh.ratio import (BracketError, ClearingProblem, NoPositiveRuleError,
                                RegulationProblem, StorageProblem, clearing_optimal,
                                clearing_scan, golden_section, regulation_inner,
                                regulation_optimal, scan_then_refine, storage_inner,
                                storage_rate)


def ramp(h, top=5.0):
    bp = np.arange(0.0, top + h / 2, h)
    return StepProcess(bp, bp)


class TestScalarSearch:
    def test_golden_section_parabola(self):
        x, fx = golden_section(lambda t: (t - 0.3) ** 2, 0.0, 1.0, rtol=1e-12)
        assert x == pytest.approx(0.3, abs=1e-6) and fx <= 1e-12

    def test_scan_flags_multiple_minima(self):
        grid = np.linspace(-2, 2, 41)
        x, fx, multimodal = scan_then_refine(lambda t: (t * t - 1.0) ** 2, grid)
        assert multimodal and abs(abs(x) - 1.0) <= 1e-6

    def test_scan_unimodal(self):
        x, fx, multimodal = scan_then_refine(lambda t: abs(t - 0.25), np.linspace(0, 1, 11))
        assert not multimodal and x == pytest.approx(0.25, abs=1e-8)


class TestClearing:
    def test_linear_path_gives_sqrt_two(self):
        h = 1e-2
        prob = ClearingProblem(1.0, ramp(h), ScenarioSet([Scenario(1.0, 1.0, INF, 1.0, ramp(h))]))
        res = clearing_optimal(prob)
        # staircase integral of t lies in [t^2/2 - h t/2, t^2/2]
        assert abs(res.ratio - math.sqrt(2.0)) <= h / 2
        assert res.gap <= 1e-6
        assert res.rule[0] == pytest.approx(math.sqrt(2.0), abs=h)

    def test_capped_horizon(self):
        # g = 2 everywhere: (1 + 2 tau) / tau is smallest at the cap
        prob = ClearingProblem(1.0, StepProcess([0.0], [2.0]),
                               ScenarioSet([Scenario(1.0, 1.0, 4.0, 1.0, ramp(1e-2))]))
        res = clearing_optimal(prob)
        assert res.ratio == 2.25 and res.two_phase_ratio == pytest.approx(2.25, rel=1e-12)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2**31))
    def test_scan_matches_two_phase(self, seed):
        rng = np.random.default_rng(seed)
        scen = []
        for _ in range(int(rng.integers(1, 5))):
            bp = np.concatenate(([0.0], np.sort(rng.uniform(0.1, 4, 3))))
            vals = np.concatenate(([0.0], np.sort(rng.uniform(0, 5, 3))))
            scen.append(Scenario(float(rng.uniform(0.2, 1)), 1.0, float(rng.uniform(0.5, 5)),
                                 1.0, StepProcess(bp, vals)))
        g = StepProcess([0.0, 1.0, 3.0], np.sort(rng.uniform(0, 2, 3)))
        res = clearing_optimal(ClearingProblem(float(rng.uniform(0.1, 2)), g, ScenarioSet(scen)))
        assert res.gap <= 1e-6

    def test_disagreement_is_logged(self, caplog, monkeypatch):
        import stoch_thresh.ratio as ratio
        monkeypatch.setattr(ratio, "clearing_two_phase", lambda p, n: (1.0, 99.0, False))
        prob = ClearingProblem(1.0, StepProcess([0.0], [2.0]),
                               ScenarioSet([Scenario(1.0, 1.0, 4.0, 1.0, ramp(1.0))]))
        with caplog.at_level("WARNING"):
            ratio.clearing_optimal(prob)
        assert "disagree" in caplog.text

    def test_zero_horizons_have_no_rule(self):
        prob = ClearingProblem(1.0, StepProcess([0.0], [1.0]),
                               ScenarioSet([Scenario(1.0, 1.0, 0.0, 1.0, ramp(1.0))]))
        with pytest.raises(NoPositiveRuleError):
            clearing_scan(prob)

    @pytest.mark.parametrize("scenario,msg", [
        (Scenario(1.0, 2.0, 1.0, 1.0, StepProcess([0.0], [0.0])), "unit density"),
        (Scenario(1.0, 1.0, 1.0, 1.0, StepProcess([0.0], [-1.0])), "nonnegative"),
    ])
    def test_rejects_bad_problem(self, scenario, msg):
        with pytest.raises(ValueError, match=msg):
            ClearingProblem(1.0, StepProcess([0.0], [1.0]), ScenarioSet([scenario]))


def storage_cost(p: StorageProblem, alpha, v):
    return (p.k1 + p.k2 * alpha + p.h * (v * alpha / 2 + p.mu_rho * alpha ** 2 / v)) / \
        (p.k3 + alpha)


class TestStorage:
    def test_constant_v_matches_grid_scan(self):
        prob = StorageProblem(5.0, 1.0, 1.0, 0.5, 1.0, (2.0,))
        res = storage_rate(prob)
        alphas = np.arange(1e-4, 20.0, 1e-4)
        costs = storage_cost(prob, alphas, 2.0)
        assert res.cost <= costs.min() + 1e-12
        assert abs(res.alpha - alphas[costs.argmin()]) <= 1e-3
        assert res.rule.tolist() == pytest.approx([res.alpha])

    def test_inner_is_uncapped_quadratic(self):
        prob = StorageProblem(1.0, 1.0, 1.0, 0.5, 1.0, (1.0, 2.0, 4.0))
        cost, x = storage_inner(prob, 2.0)
        assert x.mean() == pytest.approx(2.0, rel=1e-12)
        v = np.array(prob.v_samples)
        assert cost == pytest.approx(np.mean(v * x / 2 + 0.5 * x * x / v), rel=1e-12)
        # equal marginal cost v/2 + 2 mu rho x / v across funded samples
        marg = v / 2 + 2 * 0.5 * x / v
        assert np.ptp(marg[x > 0]) <= 1e-9

    def test_inner_convex_on_probe_grid(self):
        prob = StorageProblem(1.0, 1.0, 1.0, 0.3, 1.0, (0.5, 1.0, 3.0, 7.0))
        grid = np.linspace(0.0, 6.0, 31)
        f = np.array([storage_inner(prob, a)[0] for a in grid])
        assert np.all(f[2:] - 2 * f[1:-1] + f[:-2] >= -1e-9)

    def test_returned_cost_beats_probes(self):
        prob = StorageProblem(3.0, 0.5, 2.0, 0.3, 1.5, (0.5, 1.0, 3.0))
        res = storage_rate(prob)
        for a in np.linspace(0.05, 10.0, 40):
            c = (prob.k1 + prob.k2 * a + prob.h * storage_inner(prob, a)[0]) / (prob.k3 + a)
            assert res.cost <= c + 1e-12

    def test_rejects_nonpositive_constants(self):
        with pytest.raises(ValueError):
            StorageProblem(0.0, 1.0, 1.0, 1.0, 1.0, (1.0,))

    def test_unbounded_decrease_is_reported(self):
        # a huge setup cost pushes the minimizer far out; two doublings cannot bracket it
        prob = StorageProblem(1e6, 1.0, 1e-9, 1e-12, 1e-12, (1.0,))
        with pytest.raises(BracketError):
            storage_rate(prob, max_doublings=2)


def unit_ramp_down(h=1e-3):
    s = np.arange(0.0, 1.0, h)
    return s, 1.0 - s


class TestRegulation:
    def test_deterministic_linear_utility(self):
        bp, v = unit_ramp_down()
        prob = RegulationProblem(0.5, [(bp, v)])
        res = regulation_optimal(prob)
        V = StepProcess(bp, v)
        alphas = np.arange(0.0, 2.0, 1e-4)
        welfare = np.array([phi(V, a) - 0.5 * (0.5 / (1 - 0.5 * a)) * a * a for a in alphas])
        assert res.welfare >= welfare.max() - 1e-9
        assert abs(res.alpha - alphas[welfare.argmax()]) <= 1e-3
        assert res.rule.tolist() == pytest.approx([res.alpha], abs=1e-12)

    def test_zero_utility(self):
        res = regulation_optimal(RegulationProblem(0.5, [([0.0], [0.0])]))
        assert res.alpha == 0.0 and res.welfare == 0.0

    def test_inner_meets_mean_constraint(self):
        prob = RegulationProblem(0.8, [([0.0, 0.3], [2.0, 0.5]), ([0.0, 1.0], [1.0, 0.0])],
                                 weights=(0.3, 0.7))
        welfare, times = regulation_inner(prob, 0.4)
        assert 0.3 * times[0] + 0.7 * times[1] == pytest.approx(0.4, abs=1e-12)

    def test_optimum_beats_grid(self):
        prob = RegulationProblem(0.8, [([0.0, 0.3], [2.0, 0.5]), ([0.0, 1.0], [1.0, 0.0])])
        grid = np.linspace(0.0, 1.2, 25)
        res = regulation_optimal(prob, alpha_grid=grid)
        for a in grid:
            assert res.welfare >= regulation_inner(prob, a)[0] - 1e-12

    @pytest.mark.parametrize("grid", [[], [0.5, 2.5]])
    def test_rejects_bad_grid(self, grid):
        with pytest.raises(ValueError):
            regulation_optimal(RegulationProblem(0.5, [([0.0], [1.0])]), alpha_grid=grid)

    def test_rejects_increasing_utility(self):
        with pytest.raises(ValueError, match="nonincreasing"):
            RegulationProblem(0.5, [([0.0, 1.0], [0.0, 1.0])])
