"""Entropic optimal transport: scaling iterations, loss, and its minimization.

`sinkhorn_iterate` is the textbook diagonal-scaling loop on the kernel
exp(-C/lam); `sinkhorn_log_domain` is the numerically robust equivalent on
dual potentials.  `solve_sinkhorn` picks the path automatically: whenever a
kernel entry would leave the double range (|C|/lam > 690, i.e. entries below
1e-300), the log-domain recursion is used.

Every iteration runs the action-side update first and the type-side update
last, so the returned plan's column sums match the type marginal exactly.

`unrolled_loss` records a fixed number of updates on an autodiff tape; the
loss value after n updates equals

    sum C*P + lam * sum P log(P / (alpha x beta))
  = lam * [ sum_i r_i log(u_i/alpha_i) + sum_j c_j log(v_j/beta_j) ]

with r, c the marginals of the current plan P = diag(u) K diag(v).  The
second form is what the tape computes: it avoids log(0) for boundary
weights and holds before convergence as well.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .measures import CostOracle, DiscreteDistribution, TransportPlan
from .optim import (DescentConfig, make_optimizer, optimizer_step,
                    project_box, project_simplex)

_LOG_DOMAIN_EXPONENT = 690.0  # |C|/lam beyond this puts exp(-C/lam) under 1e-300


class NumericalUnderflow(ArithmeticError):
    """The plain-domain kernel left the positive floating-point range."""


class NonDifferentiableCost(TypeError):
    """Gradient requested through a cost oracle that declares none."""


@dataclass
class SinkhornProblem:
    """A discrete entropic-OT instance: marginals, cost matrix, temperature."""

    alpha: np.ndarray
    beta: np.ndarray
    cost_matrix: np.ndarray
    lam: float
    max_iter: int = 2000
    tol: float = 1e-9

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)
        self.cost_matrix = np.asarray(self.cost_matrix, dtype=float)
        if self.lam <= 0.0:
            raise ValueError("lam must be positive")
        for w, name in ((self.alpha, "alpha"), (self.beta, "beta")):
            if w.min(initial=0.0) < 0.0 or abs(w.sum() - 1.0) > 1e-9:
                raise ValueError(f"{name} must lie on the simplex")
        if self.cost_matrix.shape != (self.alpha.size, self.beta.size):
            raise ValueError("cost matrix shape must match the marginals")


@dataclass
class SinkhornResult:
    plan: np.ndarray
    u: np.ndarray
    v: np.ndarray
    log_u: np.ndarray
    log_v: np.ndarray
    loss: float
    iterations: int
    marginal_error: float


def _plan_loss(plan, alpha, beta, cost_matrix, lam) -> float:
    """Transport cost plus lam * KL(plan || alpha x beta), with 0 log 0 := 0."""
    mask = plan > 0.0
    ref = np.outer(alpha, beta)
    logs = np.log(np.where(mask, plan, 1.0)) - np.log(np.where(mask, ref, 1.0))
    return float((cost_matrix * plan).sum() + lam * (plan * logs)[mask].sum())


def _marginal_error(plan, alpha, beta) -> float:
    row = np.abs(plan.sum(axis=1) - alpha).max(initial=0.0)
    col = np.abs(plan.sum(axis=0) - beta).max(initial=0.0)
    return float(max(row, col))


def sinkhorn_iterate(problem: SinkhornProblem) -> SinkhornResult:
    """Plain diagonal scaling u <- alpha/(Kv), v <- beta/(K'u)."""
    alpha, beta, lam = problem.alpha, problem.beta, problem.lam
    with np.errstate(over="ignore"):
        kernel = np.exp(-problem.cost_matrix / lam)
    if (not np.isfinite(kernel).all()
            or (kernel.max(axis=1) == 0.0).any()
            or (kernel.max(axis=0) == 0.0).any()):
        raise NumericalUnderflow(
            "kernel leaves the floating-point range; use sinkhorn_log_domain")
    u = np.ones(alpha.size)
    v = np.ones(beta.size)
    iterations = 0
    error = np.inf
    for iterations in range(1, problem.max_iter + 1):
        u = alpha / (kernel @ v)
        v = beta / (u @ kernel)
        if not (np.isfinite(u).all() and np.isfinite(v).all()):
            raise NumericalUnderflow(
                "scaling vectors left the floating-point range; "
                "use sinkhorn_log_domain")
        plan = (u[:, None] * kernel) * v[None, :]
        error = _marginal_error(plan, alpha, beta)
        if error < problem.tol:
            break
    with np.errstate(divide="ignore"):
        log_u, log_v = np.log(u), np.log(v)
    return SinkhornResult(plan, u, v, log_u, log_v,
                          _plan_loss(plan, alpha, beta, problem.cost_matrix, lam),
                          iterations, error)


def _logsumexp(m, axis):
    shift = np.max(m, axis=axis, keepdims=True)
    shift = np.where(np.isfinite(shift), shift, 0.0)
    with np.errstate(divide="ignore"):
        return np.log(np.exp(m - shift).sum(axis=axis)) + np.squeeze(shift, axis=axis)


def sinkhorn_log_domain(problem: SinkhornProblem) -> SinkhornResult:
    """Same contract as sinkhorn_iterate, on log-scale potentials."""
    alpha, beta, lam = problem.alpha, problem.beta, problem.lam
    log_kernel = -problem.cost_matrix / lam
    with np.errstate(divide="ignore"):
        log_alpha, log_beta = np.log(alpha), np.log(beta)
    phi = np.zeros(alpha.size)
    psi = np.zeros(beta.size)
    iterations = 0
    error = np.inf
    plan = np.zeros_like(log_kernel)
    for iterations in range(1, problem.max_iter + 1):
        phi = log_alpha - _logsumexp(log_kernel + psi[None, :], axis=1)
        psi = log_beta - _logsumexp(log_kernel + phi[:, None], axis=0)
        plan = np.exp(phi[:, None] + psi[None, :] + log_kernel)
        error = _marginal_error(plan, alpha, beta)
        if error < problem.tol:
            break
    with np.errstate(over="ignore"):
        u, v = np.exp(phi), np.exp(psi)
    return SinkhornResult(plan, u, v, phi, psi,
                          _plan_loss(plan, alpha, beta, problem.cost_matrix, lam),
                          iterations, error)


def needs_log_domain(cost_matrix, lam: float) -> bool:
    c = np.abs(np.asarray(cost_matrix)).max(initial=0.0)
    return bool(c / lam > _LOG_DOMAIN_EXPONENT)


def solve_sinkhorn(problem: SinkhornProblem) -> SinkhornResult:
    """Dispatch to the numerically appropriate iteration."""
    if needs_log_domain(problem.cost_matrix, problem.lam):
        return sinkhorn_log_domain(problem)
    return sinkhorn_iterate(problem)


def sinkhorn_loss(problem: SinkhornProblem) -> float:
    """Entropic-OT value of the instance (solved to the problem's tolerance)."""
    return solve_sinkhorn(problem).loss


def unrolled_loss(alpha_var: ad.Var, cost_var: ad.Var, beta, lam: float,
                  iters: int) -> ad.Var:
    """Record `iters` full scaling updates and the resulting loss on the tape."""
    beta = np.asarray(beta, dtype=float)
    if needs_log_domain(cost_var.value, lam):
        return _unrolled_loss_log(alpha_var, cost_var, beta, lam, iters)
    return _unrolled_loss_plain(alpha_var, cost_var, beta, lam, iters)


def _unrolled_loss_plain(alpha_var, cost_var, beta, lam, iters):
    if iters < 1:
        raise ValueError("need at least one unrolled update")
    kernel = ad.exp(ad.mul(cost_var, -1.0 / lam))
    v = np.ones(beta.size)
    s = t = None
    for _ in range(iters):
        s = ad.matmul(kernel, v) if isinstance(v, ad.Var) else ad.vsum(kernel, axis=1)
        u = ad.div(alpha_var, s)
        t = ad.matmul(u, kernel)
        v = ad.div(beta, t)
    plan = ad.mul(ad.outer(u, v), kernel)
    r = ad.vsum(plan, axis=1)
    loss = ad.add(ad.dot(r, ad.neg(ad.log(s))), ad.dot(ad.neg(ad.log(t)), beta))
    return ad.mul(loss, lam)


def _unrolled_loss_log(alpha_var, cost_var, beta, lam, iters):
    if iters < 1:
        raise ValueError("need at least one unrolled update")
    n = alpha_var.value.size
    m = beta.size
    log_kernel = ad.mul(cost_var, -1.0 / lam)
    # the floor keeps log alpha finite for boundary weights; it must not be
    # too small, or the 1/alpha chain factor amplifies backward round-off
    # into huge spurious weight gradients
    log_alpha = ad.log(ad.add(alpha_var, 1e-9))
    log_beta = np.log(beta)
    psi = np.zeros(m)
    lse_u = lse_v = None
    for _ in range(iters):
        shifted = (ad.add(log_kernel, ad.reshape(psi, (1, m)))
                   if isinstance(psi, ad.Var) else log_kernel)
        lse_u = ad.logsumexp(shifted, axis=1)
        phi = ad.sub(log_alpha, lse_u)
        lse_v = ad.logsumexp(ad.add(log_kernel, ad.reshape(phi, (n, 1))), axis=0)
        psi = ad.sub(log_beta, lse_v)
    joint = ad.add(ad.add(ad.reshape(phi, (n, 1)), log_kernel),
                   ad.reshape(psi, (1, m)))
    plan = ad.exp(joint)
    r = ad.vsum(plan, axis=1)
    loss = ad.add(ad.dot(r, ad.neg(lse_u)), ad.dot(ad.neg(lse_v), beta))
    return ad.mul(loss, lam)


def sinkhorn_loss_grad(alpha, atoms, nu, cost: CostOracle, lam: float,
                       unroll_iters: int = 100):
    """Loss after `unroll_iters` updates plus its gradients in (alpha, atoms).

    `nu` is the fixed type-side marginal as a pair (weights, atoms).  The
    gradient comes from reverse-mode differentiation through exactly
    `unroll_iters` update steps (no early stopping inside the tape).
    """
    if not cost.differentiable or cost.build_cost_matrix is None:
        raise NonDifferentiableCost(
            "cost oracle does not support differentiation in the action")
    beta, type_atoms = nu
    tape = ad.Tape()
    alpha_var = tape.leaf(np.asarray(alpha, dtype=float))
    atoms_var = tape.leaf(np.asarray(atoms, dtype=float))
    cost_var = cost.build_cost_matrix(atoms_var, np.asarray(type_atoms, dtype=float))
    loss = unrolled_loss(alpha_var, cost_var, np.asarray(beta, dtype=float),
                         lam, unroll_iters)
    grad_alpha, grad_atoms = ad.grad(tape, loss, [alpha_var, atoms_var])
    return grad_alpha, grad_atoms, float(loss.value)


def minimize_sinkhorn(prior_weights, type_atoms, cost: CostOracle, lam: float,
                      n_atoms: int | None = None,
                      config: DescentConfig | None = None,
                      seed: int = 0):
    """First-order descent of the entropic-OT loss over (weights, atoms).

    Atom locations start uniform in the cost box and the weight vector starts
    uniform; after every step the weights are projected back onto the simplex
    and the atoms onto the box.  Returns the plan recovered from a converged
    final solve (its column sums equal the prior exactly) along with the
    per-step loss trace.  The trace is recorded for benchmarking and is not
    guaranteed to be monotone.
    """
    if cost.bounds is None:
        raise ValueError("minimize_sinkhorn needs a cost oracle with box bounds")
    config = config or DescentConfig()
    prior_weights = np.asarray(prior_weights, dtype=float)
    type_atoms_arr = np.asarray(type_atoms, dtype=float)
    k = prior_weights.size
    n = n_atoms if n_atoms is not None else k + 2
    if n < 1:
        raise ValueError("need at least one action atom")
    bounds = np.asarray(cost.bounds, dtype=float)
    rng = np.random.default_rng(seed)
    atoms = rng.uniform(bounds[:, 0], bounds[:, 1], size=(n, bounds.shape[0]))
    alpha = np.full(n, 1.0 / n)
    opt_alpha = make_optimizer(config.method, config.lr_weights, [alpha])
    opt_atoms = make_optimizer(config.method, config.lr_atoms, [atoms])
    trace = np.empty(config.steps)
    for step in range(config.steps):
        tape = ad.Tape()
        alpha_var = tape.leaf(alpha)
        atoms_var = tape.leaf(atoms)
        cost_var = cost.build_cost_matrix(atoms_var, type_atoms_arr)
        loss = unrolled_loss(alpha_var, cost_var, prior_weights, lam,
                             config.unroll_iters)
        grad_alpha, grad_atoms = ad.grad(tape, loss, [alpha_var, atoms_var])
        trace[step] = float(loss.value)
        (alpha,) = optimizer_step(opt_alpha, [alpha], [grad_alpha])
        alpha = project_simplex(alpha, floor=min(1e-6, 0.1 / n))
        (atoms,) = optimizer_step(opt_atoms, [atoms], [grad_atoms])
        atoms = project_box(atoms, bounds[:, 0], bounds[:, 1])
    final = SinkhornProblem(alpha, prior_weights,
                            _numpy_cost_matrix(cost, atoms, type_atoms_arr),
                            lam, max_iter=2000, tol=1e-9)
    result = solve_sinkhorn(final)
    prior = DiscreteDistribution(list(type_atoms_arr), prior_weights)
    plan = TransportPlan(result.plan, list(atoms), list(type_atoms_arr), prior)
    return plan, trace


def _numpy_cost_matrix(cost, atoms, type_atoms):
    out = np.empty((len(atoms), len(type_atoms)))
    for i, x in enumerate(atoms):
        for j, y in enumerate(type_atoms):
            out[i, j] = cost.evaluate(x, y)
    return out
