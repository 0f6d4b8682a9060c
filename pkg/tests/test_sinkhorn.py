import numpy as np
import pytest

import prp.autodiff as ad
from prp.divergences import kl_divergence
from prp.measures import (CostOracle, DiscreteDistribution, TransportPlan,
                          linear_cost, prp_objective)
from prp.optim import DescentConfig
from prp.sinkhorn import (NonDifferentiableCost, NumericalUnderflow,
                          SinkhornProblem, minimize_sinkhorn, sinkhorn_iterate,
                          sinkhorn_log_domain, sinkhorn_loss,
                          sinkhorn_loss_grad, solve_sinkhorn, unrolled_loss)

import oracles


def random_problem(rng, n, m, lam, cost_scale=1.0):
    alpha = rng.dirichlet(np.ones(n))
    beta = rng.dirichlet(np.ones(m))
    cost = rng.uniform(-1.0, 1.0, size=(n, m)) * cost_scale
    return SinkhornProblem(alpha, beta, cost, lam)


def test_single_atom_plan_is_forced():
    problem = SinkhornProblem(np.array([1.0]), np.array([1.0]),
                              np.array([[0.7]]), 1.0)
    result = sinkhorn_iterate(problem)
    assert np.allclose(result.plan, [[1.0]])
    assert result.loss == pytest.approx(0.7, abs=1e-12)


def test_zero_cost_gives_product_coupling_and_zero_loss():
    alpha = np.array([0.3, 0.7])
    beta = np.array([0.2, 0.5, 0.3])
    problem = SinkhornProblem(alpha, beta, np.zeros((2, 3)), 0.5)
    result = sinkhorn_iterate(problem)
    assert np.allclose(result.plan, np.outer(alpha, beta), atol=1e-12)
    assert result.loss == pytest.approx(0.0, abs=1e-12)


def test_two_by_two_matches_coupling_grid_oracle():
    alpha = np.array([0.5, 0.5])
    cost = np.array([[0.0, 1.0], [1.0, 0.0]])
    problem = SinkhornProblem(alpha, alpha, cost, 1.0)
    value = sinkhorn_loss(problem)
    reference = oracles.grid_minimize_coupling(alpha, alpha, cost, 1.0)
    assert value == pytest.approx(reference, abs=1e-5)


def test_log_domain_agrees_with_plain_iteration():
    rng = np.random.default_rng(0)
    for _ in range(10):
        problem = random_problem(rng, rng.integers(1, 4), rng.integers(1, 4),
                                 lam=float(rng.uniform(0.3, 3.0)))
        a = sinkhorn_iterate(problem)
        b = sinkhorn_log_domain(problem)
        assert np.abs(a.plan - b.plan).max() < 1e-8
        assert a.loss == pytest.approx(b.loss, abs=1e-8)


def test_plain_iteration_underflows_and_log_domain_survives():
    # top row of the kernel is entirely below the double range
    cost = np.array([[10.0, 9.5], [0.0, 0.5]])
    problem = SinkhornProblem(np.array([0.5, 0.5]), np.array([0.5, 0.5]),
                              cost, 1e-2)
    with pytest.raises(NumericalUnderflow):
        sinkhorn_iterate(problem)
    result = sinkhorn_log_domain(problem)
    assert np.isfinite(result.loss)
    assert result.marginal_error < 1e-9
    assert solve_sinkhorn(problem).loss == pytest.approx(result.loss)


def test_plan_factorizes_through_scalings():
    rng = np.random.default_rng(1)
    for _ in range(5):
        problem = random_problem(rng, 3, 3, lam=1.0)
        result = sinkhorn_iterate(problem)
        kernel = np.exp(-problem.cost_matrix / problem.lam)
        rebuilt = (result.u[:, None] * kernel) * result.v[None, :]
        assert np.abs(rebuilt - result.plan).max() < 1e-8


def test_type_marginal_is_exact_after_final_update():
    rng = np.random.default_rng(2)
    problem = random_problem(rng, 4, 3, lam=0.3)
    result = sinkhorn_iterate(problem)
    assert np.abs(result.plan.sum(axis=0) - problem.beta).max() < 1e-14


def test_marginal_error_decreases_with_iteration_budget():
    rng = np.random.default_rng(3)
    for _ in range(5):
        alpha = rng.dirichlet(np.ones(3))
        beta = rng.dirichlet(np.ones(3))
        cost = rng.uniform(0.0, 1.0, size=(3, 3))
        for t in (2, 5, 10):
            early = SinkhornProblem(alpha, beta, cost, 0.2, max_iter=t, tol=0.0)
            late = SinkhornProblem(alpha, beta, cost, 0.2, max_iter=2 * t, tol=0.0)
            err_t = sinkhorn_iterate(early).marginal_error
            err_2t = sinkhorn_iterate(late).marginal_error
            assert err_2t <= err_t + 1e-15


def test_loss_stays_in_coarse_bounds_and_entropy_term_nonnegative():
    rng = np.random.default_rng(4)
    for _ in range(10):
        problem = random_problem(rng, 3, 2, lam=float(rng.uniform(0.2, 2.0)))
        result = solve_sinkhorn(problem)
        c_min, c_max = problem.cost_matrix.min(), problem.cost_matrix.max()
        nm = problem.alpha.size * problem.beta.size
        assert (c_min - problem.lam * np.log(nm) - 1e-9 <= result.loss
                <= c_max + 1e-9)
        kl_term = (result.loss - (problem.cost_matrix * result.plan).sum())
        assert kl_term >= -1e-9


def test_loss_equals_constrained_plan_objective():
    # with both marginals pinned, the entropic value coincides with the
    # KL-regularized plan objective minimized over feasible couplings
    rng = np.random.default_rng(5)
    kl = kl_divergence()
    for _ in range(5):
        alpha = rng.dirichlet(np.ones(2))
        beta = rng.dirichlet(np.ones(2))
        cost = rng.uniform(-1.0, 1.0, size=(2, 2))
        lam = float(rng.uniform(0.3, 2.0))
        value = sinkhorn_loss(SinkhornProblem(alpha, beta, cost, lam))

        # oracle: scan couplings, evaluating the plan objective instead
        best = np.inf
        for t in np.linspace(0.0, 1.0, 2001):
            x = t * min(alpha[0], beta[0])
            plan = np.array([[x, alpha[0] - x],
                             [beta[0] - x, alpha[1] - beta[0] + x]])
            if plan.min() < 0.0:
                continue
            types = [0, 1]
            prior = DiscreteDistribution(types, beta)
            tp = TransportPlan(plan, [0, 1], types, prior, validate=False)
            cost_oracle = CostOracle(
                evaluate=lambda a, b, c=cost: float(c[a, b]))
            masses = plan.sum(axis=1)
            objective = prp_objective(tp, cost_oracle, kl, lam)
            # the plan objective has no row-marginal term; add the KL part
            # that pins the action marginal at alpha
            entropy_shift = sum(
                masses[i] * np.log(masses[i] / alpha[i])
                for i in range(2) if masses[i] > 0)
            best = min(best, objective + lam * entropy_shift)
        assert value == pytest.approx(best, abs=1e-5)


def test_unrolled_loss_matches_converged_value():
    rng = np.random.default_rng(6)
    problem = random_problem(rng, 3, 3, lam=1.0)
    tape = ad.Tape()
    alpha_var = tape.leaf(problem.alpha)
    cost_var = tape.leaf(problem.cost_matrix)
    loss = unrolled_loss(alpha_var, cost_var, problem.beta, 1.0, iters=200)
    assert float(loss.value) == pytest.approx(sinkhorn_loss(problem), abs=1e-10)


def test_unrolled_loss_log_and_plain_paths_agree():
    rng = np.random.default_rng(7)
    alpha = rng.dirichlet(np.ones(3))
    beta = rng.dirichlet(np.ones(3))
    cost = rng.uniform(0.0, 1.0, size=(3, 3))

    def value(fn):
        tape = ad.Tape()
        return float(fn(tape.leaf(alpha), tape.leaf(cost), beta, 0.5, 40).value)

    from prp.sinkhorn import _unrolled_loss_log, _unrolled_loss_plain
    assert value(_unrolled_loss_plain) == pytest.approx(
        value(_unrolled_loss_log), abs=1e-10)


def test_gradient_single_atom_reduces_to_cost_gradient():
    y = np.array([[0.3, -0.4]])
    cost = linear_cost(np.array([[-1.0, 1.0], [-1.0, 1.0]]))
    x = np.array([[0.2, 0.1]])
    grad_alpha, grad_x, loss = sinkhorn_loss_grad(
        np.array([1.0]), x, (np.array([1.0]), y), cost, lam=1.0,
        unroll_iters=30)
    assert np.allclose(grad_x, y, atol=1e-12)
    assert loss == pytest.approx(float(x[0] @ y[0]), abs=1e-12)
    assert np.isfinite(grad_alpha).all()


def test_gradient_vanishes_for_zero_cost():
    y = np.zeros((2, 2))
    cost = linear_cost(np.array([[-1.0, 1.0], [-1.0, 1.0]]))
    grad_alpha, grad_x, _ = sinkhorn_loss_grad(
        np.array([0.4, 0.6]), np.array([[0.1, 0.2], [-0.3, 0.4]]),
        (np.array([0.5, 0.5]), y), cost, lam=1.0, unroll_iters=30)
    assert np.abs(grad_x).max() < 1e-12


def test_graditems_match_finite_differences_on_random_instances():
    rng = np.random.default_rng(8)
    bounds = np.array([[-1.0, 1.0]] * 2)
    cost = linear_cost(bounds)
    for _ in range(5):
        y = rng.uniform(-1.0, 1.0, size=(3, 2))
        beta = rng.dirichlet(np.ones(3))
        alpha0 = rng.dirichlet(np.ones(3) * 5.0)
        x0 = rng.uniform(-0.8, 0.8, size=(3, 2))
        lam = float(rng.uniform(0.3, 1.5))

        def loss_alpha(a_var):
            c_var = cost.build_cost_matrix(a_var.tape.leaf(x0), y)
            return unrolled_loss(a_var, c_var, beta, lam, 25)

        def loss_x(x_var):
            a_var = x_var.tape.leaf(alpha0)
            c_var = cost.build_cost_matrix(x_var, y)
            return unrolled_loss(a_var, c_var, beta, lam, 25)

        assert ad.finite_diff_check(loss_alpha, alpha0) < 1e-4
        assert ad.finite_diff_check(loss_x, x0) < 1e-4


def test_nondifferentiable_cost_is_rejected():
    blob = CostOracle(evaluate=lambda x, y: 0.0)
    with pytest.raises(NonDifferentiableCost):
        sinkhorn_loss_grad(np.array([1.0]), np.zeros((1, 1)),
                           (np.array([1.0]), np.zeros((1, 1))), blob, 1.0)


def test_minimize_single_type_reaches_pointwise_minimum():
    # one type carries no information, so the objective is the best cost
    y = np.array([[0.6, -0.4]])  # unit 1-norm
    bounds = np.array([[-1.0, 1.0], [-1.0, 1.0]])
    cost = linear_cost(bounds)
    plan, trace = minimize_sinkhorn(
        np.array([1.0]), y, cost, lam=0.5,
        config=DescentConfig(steps=800), seed=0)
    value = prp_objective(plan, cost, kl_divergence(), 0.5)
    assert value == pytest.approx(-1.0, abs=0.02)
    assert len(trace) == 800


def test_minimize_with_dominant_privacy_collapses_to_average_vertex():
    rng = np.random.default_rng(9)
    y = rng.uniform(-1.0, 1.0, size=(3, 2))
    y /= np.abs(y).sum(axis=1, keepdims=True)
    prior = rng.dirichlet(np.ones(3))
    bounds = np.array([[-1.0, 1.0], [-1.0, 1.0]])
    cost = linear_cost(bounds)
    plan, _ = minimize_sinkhorn(prior, y, cost, lam=1e3,
                                config=DescentConfig(steps=800), seed=1)
    averaged = y.T @ prior
    vertices = oracles.box_vertices(bounds[:, 0], bounds[:, 1])
    best_vertex = vertices[np.argmin(vertices @ averaged)]
    heavy = int(np.argmax(plan.row_masses))
    assert np.abs(np.asarray(plan.action_atoms[heavy]) - best_vertex).max() < 0.15


def test_minimize_with_tiny_privacy_reaches_per_type_minima():
    rng = np.random.default_rng(10)
    y = rng.uniform(-1.0, 1.0, size=(2, 2))
    y /= np.abs(y).sum(axis=1, keepdims=True)
    prior = np.array([0.4, 0.6])
    bounds = np.array([[-1.0, 1.0], [-1.0, 1.0]])
    cost = linear_cost(bounds)
    plan, _ = minimize_sinkhorn(prior, y, cost, lam=1e-4,
                                config=DescentConfig(steps=1000), seed=2)
    expected = -1.0  # per-type minimum of x.y over the box is -|y|_1 = -1
    value = prp_objective(plan, cost, kl_divergence(), 0.0)
    assert value == pytest.approx(expected, abs=0.05)
