"""Command-line front end: ``stoch-thresh <command> ...``.

Exit codes: 0 success, 1 input error, 2 infeasible budget, 3 unbounded
budget, 4 oracle disagreement.  Every failure prints one JSON line to stderr,
``{"error": <reason>, "detail": <message>}``.
"""
from __future__ import annotations

import csv
import json
import math
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import __version__
from .closed_form import (EmpiricalHorizon, QuadScenario, RenewalModel, np_test,
                          renewal_exponential, separable_convex, solve_portfolio,
                          solve_quadratic, stationary_excess_rule)
from .io import ScenarioFileError, digest, dump_report, jsonable, load_scenarios
from .model import InvalidScenarioError, StepProcess
from .oracle import GridOracleConfig, OracleError, greedy_grid
from .ratio import (ClearingProblem, RegulationProblem, StorageProblem, clearing_optimal,
                    regulation_optimal, storage_rate)
from .solver import (InfeasibleAlphaError, NonIntegerGridError, SolverError,
                     UnboundedBudgetError, certify, solve_discrete, solve_equality,
                     solve_inequality, value_curve)

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_UNBOUNDED, EXIT_ORACLE = 0, 1, 2, 3, 4


class CommandFailure(click.ClickException):
    def __init__(self, reason: str, detail: str, code: int):
        super().__init__(detail)
        self.reason = reason
        self.exit_code = code

    def show(self, file=None):
        line = json.dumps({"error": self.reason, "detail": " ".join(str(self.message).split())})
        click.echo(line, err=True)


def _fail_from(exc: Exception):
    if isinstance(exc, ScenarioFileError):
        return CommandFailure("parse-error", str(exc), EXIT_INPUT)
    if isinstance(exc, InvalidScenarioError):
        return CommandFailure("invalid-scenario", str(exc), EXIT_INPUT)
    if isinstance(exc, InfeasibleAlphaError):
        return CommandFailure("infeasible", str(exc), EXIT_INFEASIBLE)
    if isinstance(exc, UnboundedBudgetError):
        return CommandFailure("unbounded-budget", str(exc), EXIT_UNBOUNDED)
    if isinstance(exc, NonIntegerGridError):
        return CommandFailure("non-integer-grid", str(exc), EXIT_INPUT)
    if isinstance(exc, SolverError):
        return CommandFailure(getattr(exc, "reason", "solver-error"), str(exc), EXIT_INPUT)
    if isinstance(exc, OSError):
        return CommandFailure("io-error", str(exc), EXIT_INPUT)
    return CommandFailure("invalid-input", str(exc), EXIT_INPUT)


def _guarded(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (ValueError, SolverError, OSError, KeyError, TypeError) as exc:
        raise _fail_from(exc) from None


def _echo(ctx: click.Context) -> dict:
    return {"command": ctx.info_name, "params": jsonable(dict(ctx.params))}


def _base_report(ctx, input_path=None):
    report = {"tool_version": __version__, "invocation": _echo(ctx)}
    if input_path is not None:
        report["input_digest"] = "sha256:" + digest(input_path)
    return report


def _emit(report: dict, out):
    if out is None or out == "-":
        click.echo(json.dumps(jsonable(report), indent=2, sort_keys=True, allow_nan=False))
    else:
        dump_report(report, out)


def _floats(text: str):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise CommandFailure("invalid-input", f"not a comma-separated list of numbers: {text!r}",
                             EXIT_INPUT) from None


def _read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CommandFailure("parse-error", f"{exc.lineno}:{exc.colno}: {exc.msg}",
                             EXIT_INPUT) from None
    except OSError as exc:
        raise CommandFailure("io-error", str(exc), EXIT_INPUT) from None


def _load(path):
    return _guarded(load_scenarios, path)


@click.group()
@click.version_option(__version__, prog_name="stoch-thresh")
def main():
    """Threshold stopping rules for budget-constrained scenario problems."""


# -- core -----------------------------------------------------------------------

def _rule_rows(sol):
    rule = sol.rule
    eff = rule.effective
    for i in range(len(rule.lower)):
        yield [i, repr(float(rule.lower[i])), repr(float(rule.upper[i])),
               repr(rule.mix), repr(float(eff[i]))]


def write_rule_csv(sol, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scenario_index", "tau_lower", "tau_upper", "q", "effective_tau"])
        w.writerows(_rule_rows(sol))


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(dir_okay=False))
@click.option("--alpha", required=True, type=float)
@click.option("--inequality", is_flag=True, help="Spend at most alpha instead of exactly.")
@click.option("--discrete", is_flag=True, help="Integer-time variant with a mixed rule.")
@click.option("--seed", type=int, default=None, help="Seed for drawing the mixed rule.")
@click.option("--draws", type=int, default=1, show_default=True)
@click.option("--certify-grid", type=int, default=None)
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Report JSON path; the rule CSV goes next to it.")
@click.option("--rule-csv", type=click.Path(dir_okay=False), default=None,
              help="Rule CSV path (default: report path with .csv suffix).")
@click.option("--timing", is_flag=True, help="Add wall-clock timing (breaks byte identity).")
@click.pass_context
def solve(ctx, input_path, alpha, inequality, discrete, seed, draws, certify_grid, out,
          rule_csv, timing):
    """Solve the budget-constrained stopping problem for a scenario file."""
    start = time.perf_counter()
    sset = _load(input_path)
    if inequality and discrete:
        raise CommandFailure("invalid-input", "--inequality and --discrete are exclusive",
                             EXIT_INPUT)
    if discrete:
        sol = _guarded(solve_discrete, sset, alpha, seed=seed, draws=draws)
    elif inequality:
        sol = _guarded(solve_inequality, sset, alpha)
    else:
        sol = _guarded(solve_equality, sset, alpha)
    margin = None
    if certify_grid is not None:
        margin = _guarded(certify, sset, sol, grid=certify_grid).margin
    report = _base_report(ctx, input_path)
    report.update({
        "alpha": alpha,
        "multiplier": sol.multiplier,
        "q": sol.rule.mix,
        "mode": sol.rule.mode,
        "objective": sol.objective,
        "budget": sol.budget,
        "certificate_margin": margin,
        "rule": {"lower": sol.rule.lower, "upper": sol.rule.upper,
                 "effective": sol.rule.effective},
    })
    if sol.draws is not None:
        report["draws"] = list(sol.draws)
    if timing:
        report["timing_seconds"] = time.perf_counter() - start
    _emit(report, out)
    write_rule_csv(sol, rule_csv or str(Path(out).with_suffix(".csv")))


@main.command("value-curve")
@click.option("--input", "input_path", required=True, type=click.Path(dir_okay=False))
@click.option("--alpha-min", required=True, type=float)
@click.option("--alpha-max", required=True, type=float)
@click.option("--points", default=21, show_default=True, type=click.IntRange(min=2))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def value_curve_cmd(input_path, alpha_min, alpha_max, points, out):
    """Tabulate the optimal value over an evenly spaced budget range."""
    if not alpha_min <= alpha_max:
        raise CommandFailure("invalid-input", "alpha-min exceeds alpha-max", EXIT_INPUT)
    sset = _load(input_path)
    alphas = np.linspace(alpha_min, alpha_max, points)
    curve = _guarded(value_curve, sset, alphas)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha", "f_alpha"])
        for a, f in curve:
            w.writerow([repr(float(a)), repr(float(f))])


@main.command("oracle-check")
@click.option("--input", "input_path", required=True, type=click.Path(dir_okay=False))
@click.option("--alpha", required=True, type=float)
@click.option("--step", default=1e-3, show_default=True, type=float)
@click.option("--cap", default=100.0, show_default=True, type=float,
              help="Truncation for uncapped horizons in the grid oracle.")
@click.option("--out", default="-", type=str)
@click.pass_context
def oracle_check(ctx, input_path, alpha, step, cap, out):
    """Compare the exact solve against the brute-force grid oracle."""
    sset = _load(input_path)
    sol = _guarded(solve_equality, sset, alpha)
    try:
        grid = greedy_grid(sset, alpha, GridOracleConfig(step=step, cap=cap))
    except OracleError as exc:
        raise CommandFailure("oracle-error", str(exc), EXIT_INPUT) from None
    gap = abs(sol.objective - grid.objective)
    report = _base_report(ctx, input_path)
    report.update({"alpha": alpha, "objective": sol.objective,
                   "oracle_objective": grid.objective, "gap": gap, "bound": grid.bound,
                   "within_bound": gap <= grid.bound})
    _emit(report, out)
    if gap > grid.bound:
        raise CommandFailure("oracle-disagreement", f"gap {gap!r} exceeds bound {grid.bound!r}",
                             EXIT_ORACLE)


# -- closed forms ----------------------------------------------------------------

@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(dir_okay=False),
              help='JSON {"scenarios": [{"a", "b", "c", "d", "t_cap", "weight"}]}.')
@click.option("--alpha", required=True, type=float)
@click.option("--out", default="-", type=str)
@click.pass_context
def quadratic(ctx, input_path, alpha, out):
    """Linear-quadratic problem solved by its closed form."""
    doc = _read_json(input_path)

    def build():
        scen = []
        for s in doc["scenarios"]:
            t_cap = s.get("t_cap", "inf")
            scen.append(QuadScenario(a=s["a"], b=s["b"], c=s.get("c", 0.0), d=s.get("d", 1.0),
                                     t_cap=math.inf if t_cap == "inf" else t_cap,
                                     weight=s.get("weight", 1.0)))
        return solve_quadratic(scen, alpha)

    sol = _guarded(build)
    report = _base_report(ctx, input_path)
    report.update({"alpha": alpha, "multiplier": sol.multiplier, "objective": sol.objective,
                   "budget": sol.budget, "times": sol.rule.effective})
    _emit(report, out)


@main.command("np-test")
@click.option("--p0", required=True, help="Null probabilities, comma separated.")
@click.option("--p1", required=True, help="Alternative probabilities, comma separated.")
@click.option("--alpha", required=True, type=float)
@click.option("--mode", type=click.Choice(["equality", "at-most"]), default="equality",
              show_default=True)
@click.option("--out", default="-", type=str)
@click.pass_context
def np_test_cmd(ctx, p0, p1, alpha, mode, out):
    """Most powerful randomized test of a given size on a finite space."""
    test = _guarded(np_test, _floats(p0), _floats(p1), alpha, mode=mode)
    report = _base_report(ctx)
    report.update({"alpha": alpha, "size": test.size, "power": test.power, "test": test.test})
    _emit(report, out)


@main.command()
@click.option("--samples", required=True, help="Horizon draws, comma separated.")
@click.option("--p", "p", required=True, type=float, help="Budget as a fraction of E T.")
@click.option("--out", default="-", type=str)
@click.pass_context
def excess(ctx, samples, p, out):
    """Deterministic-process rule from the stationary excess distribution."""
    rule = _guarded(lambda: stationary_excess_rule(EmpiricalHorizon(_floats(samples)), p))
    report = _base_report(ctx)
    report.update({"p": p, "threshold": rule.threshold, "mean": rule.mean,
                   "rule": rule.rule, "objective": rule.objective})
    _emit(report, out)


@main.command()
@click.option("--theta", required=True, type=float, help="Exponential horizon rate.")
@click.option("--interarrival", type=float, default=None,
              help="Constant inter-renewal time X (sets E exp(-theta X)).")
@click.option("--lst", type=float, default=None, help="E exp(-theta X) directly.")
@click.option("--alpha", required=True, type=float)
@click.option("--out", default="-", type=str)
@click.pass_context
def renewal(ctx, theta, interarrival, lst, alpha, out):
    """Renewal-counting rule under an exponential horizon."""
    if (interarrival is None) == (lst is None):
        raise CommandFailure("invalid-input", "give exactly one of --interarrival and --lst",
                             EXIT_INPUT)
    if lst is None:
        lst = math.exp(-theta * interarrival)
    res = _guarded(lambda: renewal_exponential(RenewalModel(theta, lst), alpha))
    report = _base_report(ctx)
    report.update({"alpha": alpha, "level": res.level, "q": res.q,
                   "lower_budget": res.lower_budget, "upper_budget": res.upper_budget,
                   "expected_budget": res.expected_budget})
    _emit(report, out)


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(dir_okay=False),
              help='JSON {"derivatives": [{"breakpoints", "values"}], "caps", "rates"}.')
@click.option("--alpha", required=True, type=float)
@click.option("--out", default="-", type=str)
@click.pass_context
def separable(ctx, input_path, alpha, out):
    """Separable convex allocation with one linear budget."""
    doc = _read_json(input_path)

    def build():
        ders = [StepProcess(d["breakpoints"], d["values"]) for d in doc["derivatives"]]
        caps = [math.inf if c == "inf" else c for c in doc.get("caps", ["inf"] * len(ders))]
        return separable_convex(ders, caps, doc.get("rates", 1.0), alpha)

    x = _guarded(build)
    report = _base_report(ctx, input_path)
    report.update({"alpha": alpha, "allocation": x})
    _emit(report, out)


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(dir_okay=False),
              help="JSON with h, h_terminal, u1_marginal, u2_marginal, x0 and optional "
                   "consumption_caps, terminal_caps, probs, dt.")
@click.option("--out", default="-", type=str)
@click.pass_context
def portfolio(ctx, input_path, out):
    """Static-budget consumption and terminal-wealth plan."""
    doc = _read_json(input_path)

    def pair(m):
        return None if m is None else (m["breakpoints"], m["values"])

    def build():
        u1 = doc.get("u1_marginal")
        return solve_portfolio(
            doc["h"], doc["h_terminal"], None if u1 is None else [pair(m) for m in u1],
            pair(doc.get("u2_marginal")), doc["x0"],
            consumption_caps=doc.get("consumption_caps"), terminal_caps=doc.get("terminal_caps"),
            probs=doc.get("probs"), dt=doc.get("dt"))

    plan = _guarded(build)
    report = _base_report(ctx, input_path)
    report.update({"x0": doc["x0"], "spent": plan.spent, "utility": plan.utility,
                   "consumption": plan.consumption, "terminal": plan.terminal})
    _emit(report, out)


# -- ratio programs ----------------------------------------------------------------

@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(dir_okay=False),
              help="Scenario file of nonnegative paths with unit density and rate.")
@click.option("--setup-cost", required=True, type=float)
@click.option("--holding", "holding_path", type=click.Path(dir_okay=False), default=None,
              help='JSON {"breakpoints", "values"} for g; default is the identity.')
@click.option("--points", default=64, show_default=True, type=int)
@click.option("--out", default="-", type=str)
@click.pass_context
def clearing(ctx, input_path, setup_cost, holding_path, points, out):
    """Optimal clearing rule minimizing long-run average cost."""
    sset = _load(input_path)
    if holding_path is None:
        # identity on the values the paths actually take
        levels = np.unique(np.concatenate(([0.0], sset.values)))
        g = StepProcess(levels, levels)
    else:
        doc = _read_json(holding_path)
        g = _guarded(lambda: StepProcess(doc["breakpoints"], doc["values"]))
    res = _guarded(lambda: clearing_optimal(ClearingProblem(setup_cost, g, sset), points=points))
    report = _base_report(ctx, input_path)
    report.update({"setup_cost": setup_cost, "level": res.level, "ratio": res.ratio,
                   "rule": res.rule, "two_phase_alpha": res.two_phase_alpha,
                   "two_phase_ratio": res.two_phase_ratio, "relative_gap": res.gap,
                   "multimodal": res.multimodal})
    _emit(report, out)


@main.command()
@click.option("--k1", required=True, type=float)
@click.option("--k2", required=True, type=float)
@click.option("--k3", required=True, type=float)
@click.option("--mu-rho", required=True, type=float)
@click.option("--h", "h", required=True, type=float)
@click.option("--v-samples", required=True, help="Draws of V, comma separated.")
@click.option("--out", default="-", type=str)
@click.pass_context
def storage(ctx, k1, k2, k3, mu_rho, h, v_samples, out):
    """Output-rate choice minimizing the long-run storage cost ratio."""
    res = _guarded(lambda: storage_rate(StorageProblem(k1, k2, k3, mu_rho, h,
                                                       tuple(_floats(v_samples)))))
    report = _base_report(ctx)
    report.update({"alpha": res.alpha, "rule": res.rule, "cost": res.cost,
                   "inner_cost": res.inner_cost, "multimodal": res.multimodal})
    _emit(report, out)


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(dir_okay=False),
              help='JSON {"arrival_rate", "paths": [{"breakpoints", "values"}], "weights"}.')
@click.option("--alpha-grid", default=64, show_default=True, type=int)
@click.option("--time-step", default=1e-3, show_default=True, type=float)
@click.option("--out", default="-", type=str)
@click.pass_context
def regulation(ctx, input_path, alpha_grid, time_step, out):
    """Welfare-maximizing service-time distribution for a single-server queue."""
    doc = _read_json(input_path)

    def build():
        prob = RegulationProblem(doc["arrival_rate"],
                                 tuple((p["breakpoints"], p["values"]) for p in doc["paths"]),
                                 doc.get("weights"))
        return regulation_optimal(prob, alpha_grid=alpha_grid, time_step=time_step)

    res = _guarded(build)
    report = _base_report(ctx, input_path)
    report.update({"alpha": res.alpha, "rule": res.rule, "welfare": res.welfare,
                   "multimodal": res.multimodal})
    _emit(report, out)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
