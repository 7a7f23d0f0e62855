"""Exact threshold rules for budget-constrained integrals of monotone step processes."""
from .kernels import BACKEND
from .model import (INF, InvalidScenarioError, Scenario, ScenarioSet, StepProcess,
                    ensure_valid, phi, shift_window, validate)
from .solver import (Certificate, InfeasibleAlphaError, NonIntegerGridError,
                     RuleInfeasibleError, Solution, SolverError, StoppingRule,
                     UnboundedBudgetError, budget_map, certify, objective,
                     pseudo_inverse, solve_discrete, solve_equality,
                     solve_inequality, solve_window, tau_pair, value_curve)

__version__ = "0.1.0"
