"""Convex solve over a finite action grid.

With both the action set and the type set finite, the plan objective is
convex in the full |grid| x K matrix, so a projected-gradient solve finds
the global optimum.  Small instances of this solver act as the reference
the nonconvex schemes are compared against.
"""

from __future__ import annotations

import numpy as np

from .convexsolve import minimize_linear_plus_privacy
from .divergences import FDivergence
from .measures import (CostOracle, DiscreteDistribution, TransportPlan,
                       cost_matrix)


def solve_grid(action_atoms, type_atoms, prior_weights, cost: CostOracle,
               divergence: FDivergence, lam: float, max_steps: int = 5000,
               tol: float = 1e-8):
    """Minimize the plan objective over all couplings of grid x types.

    Returns (plan, objective value).
    """
    prior_weights = np.asarray(prior_weights, dtype=float)
    c = cost_matrix(cost, action_atoms, type_atoms)
    result = minimize_linear_plus_privacy(c, prior_weights, divergence, lam,
                                          max_steps=max_steps, tol=tol)
    prior = DiscreteDistribution(list(type_atoms), prior_weights)
    plan = TransportPlan(result.x, list(action_atoms), list(type_atoms), prior)
    return plan, result.value
