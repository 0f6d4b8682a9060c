"""Joint first-order descent on the finite-dimensional plan objective.

Optimizes the full (K+2) x K plan matrix together with the action atoms:
after each gradient step the plan columns are projected back onto their
scaled simplices and the atoms onto the cost box.  The differentiable
privacy term is the KL form sum_ik gamma_ik log(gamma_ik / (p0_k m_i));
other divergences have no tape expression here and are rejected.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .divergences import FDivergence, kl_divergence
from .measures import CostOracle, DiscreteDistribution, TransportPlan
from .optim import (DescentConfig, make_optimizer, optimizer_step,
                    project_box, project_columns)

_EPS = 1e-30  # keeps the 0 log 0 terms finite on the tape


def kl_plan_objective(gamma_var: ad.Var, cost_var: ad.Var, prior_weights,
                      lam: float) -> ad.Var:
    """Tape value of sum gamma*C + lam * sum_ik gamma_ik log(gamma_ik/(p0_k m_i))."""
    prior_weights = np.asarray(prior_weights, dtype=float)
    cost_term = ad.vsum(ad.mul(gamma_var, cost_var))
    if lam == 0.0:
        return cost_term
    masses = ad.vsum(gamma_var, axis=1)
    ref = ad.outer(masses, prior_weights)
    ratio = ad.div(ad.add(gamma_var, _EPS), ad.add(ref, _EPS))
    privacy = ad.vsum(ad.mul(gamma_var, ad.log(ratio)))
    return ad.add(cost_term, ad.mul(privacy, lam))


def minimize_direct(prior_weights, type_atoms, cost: CostOracle, lam: float,
                    n_atoms: int | None = None,
                    divergence: FDivergence | None = None,
                    config: DescentConfig | None = None,
                    seed: int = 0):
    """Descend the plan objective jointly in (gamma, atoms).

    Starts from the non-revealing product coupling with uniformly random
    atoms in the cost box.  Returns the final feasible plan and the
    per-step objective trace.
    """
    divergence = divergence or kl_divergence()
    if divergence.name != "kl":
        raise NotImplementedError(
            "the direct scheme only differentiates the KL privacy term")
    if cost.bounds is None:
        raise ValueError("minimize_direct needs a cost oracle with box bounds")
    config = config or DescentConfig()
    prior_weights = np.asarray(prior_weights, dtype=float)
    type_atoms_arr = np.asarray(type_atoms, dtype=float)
    k = prior_weights.size
    n = n_atoms if n_atoms is not None else k + 2
    bounds = np.asarray(cost.bounds, dtype=float)
    rng = np.random.default_rng(seed)
    atoms = rng.uniform(bounds[:, 0], bounds[:, 1], size=(n, bounds.shape[0]))
    gamma = np.tile(prior_weights / n, (n, 1))
    opt_gamma = make_optimizer(config.method, config.lr_weights, [gamma])
    opt_atoms = make_optimizer(config.method, config.lr_atoms, [atoms])
    trace = np.empty(config.steps)
    for step in range(config.steps):
        tape = ad.Tape()
        gamma_var = tape.leaf(gamma)
        atoms_var = tape.leaf(atoms)
        cost_var = cost.build_cost_matrix(atoms_var, type_atoms_arr)
        objective = kl_plan_objective(gamma_var, cost_var, prior_weights, lam)
        grad_gamma, grad_atoms = ad.grad(tape, objective, [gamma_var, atoms_var])
        trace[step] = float(objective.value)
        (gamma,) = optimizer_step(opt_gamma, [gamma], [grad_gamma])
        gamma = project_columns(gamma, prior_weights)
        (atoms,) = optimizer_step(opt_atoms, [atoms], [grad_atoms])
        atoms = project_box(atoms, bounds[:, 0], bounds[:, 1])
    prior = DiscreteDistribution(list(type_atoms_arr), prior_weights)
    plan = TransportPlan(gamma, list(atoms), list(type_atoms_arr), prior)
    return plan, trace
