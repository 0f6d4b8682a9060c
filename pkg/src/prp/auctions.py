"""Bid shading against a known opponent, with a privacy-regularized strategy.

The bidder's value distribution is exponential with mean equal to the
private type; a policy is a monotone-ish map from the unit-mean base value
to a bid, parametrized as a single hidden layer of ReLUs.  Against a single
truthful opponent with uniform values, the expected per-auction revenue of
policy beta at type y is

    E_{v ~ Exp(1)} [ (y v - beta(v) + beta'(v)) G(beta(v)) 1{beta(v) - beta'(v) >= 0} ]

with G(x) = min(max(x, 0), 1) the opponent's highest-bid cdf.  Since the
indicator and G do not depend on the type, the revenue is affine in y:
r(beta, y) = y * A(beta) - B(beta), which keeps training and evaluation on
K types cheap.

Training descends the entropic-OT loss of the induced (policy, type)
coupling; the revenue indicator and the ReLU activation pattern are treated
as constants of each Monte-Carlo sample during differentiation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from . import seeds
from .divergences import kl_divergence, divergence
from .measures import CostOracle, DiscreteDistribution, TransportPlan, posterior
from .optim import DescentConfig, make_optimizer, optimizer_step, project_simplex
from .sinkhorn import SinkhornProblem, solve_sinkhorn, unrolled_loss

_CHUNK = 50_000  # Monte-Carlo batch size; the value stream is chunk invariant


@dataclass(frozen=True)
class BidPolicy:
    """b + sum_j a_j relu(w_j v + c_j), with its exact a.e. derivative."""

    weights: np.ndarray      # (W,) hidden slopes
    biases: np.ndarray       # (W,)
    out_weights: np.ndarray  # (W,)
    out_bias: float

    def __call__(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        act = v[:, None] * self.weights[None, :] + self.biases[None, :]
        return np.maximum(act, 0.0) @ self.out_weights + self.out_bias

    def derivative(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        act = v[:, None] * self.weights[None, :] + self.biases[None, :]
        return ((act > 0.0) * self.weights[None, :]) @ self.out_weights


def random_policy(rng: np.random.Generator, width: int = 100,
                  scale: float = 0.5) -> BidPolicy:
    """Near-linear increasing start with an adjustable bid level.

    Slopes in [0.5, 1.5] and output weights of order scale/width give an
    initial bid curve with slope roughly 0.6 * scale; the small positive
    output bias keeps bids (and therefore the revenue gradient) alive at
    low values.
    """
    return BidPolicy(
        weights=rng.uniform(0.5, 1.5, size=width),
        biases=rng.uniform(-0.5, 0.5, size=width),
        out_weights=rng.uniform(0.0, 2.0 * scale / width, size=width),
        out_bias=0.02,
    )


def ladder_policies(rng: np.random.Generator, n_atoms: int,
                    width: int = 100) -> list:
    """Initial policies with bid levels spread over a deterministic ladder.

    The types prefer different bid levels, so spreading the starting levels
    hands every atom a niche immediately; with identical starts the policy
    ensemble tends to collapse onto one or two survivors.
    """
    return [random_policy(rng, width, scale=0.1 + (i + 0.5) / n_atoms)
            for i in range(n_atoms)]


@dataclass(frozen=True)
class AuctionModel:
    """Types on midpoints of a K-cell grid of [0, 1], uniform prior."""

    n_types: int = 10

    @property
    def type_atoms(self) -> np.ndarray:
        k = self.n_types
        return (np.arange(k) + 0.5) / k

    @property
    def prior(self) -> DiscreteDistribution:
        return DiscreteDistribution(list(self.type_atoms),
                                    np.full(self.n_types, 1.0 / self.n_types))

    @staticmethod
    def opponent_cdf(x) -> np.ndarray:
        return np.clip(x, 0.0, 1.0)


def sample_values(seed: int, n_samples: int) -> np.ndarray:
    """Unit-mean exponential draws via inverse cdf -log(1 - U)."""
    u = np.random.default_rng(seed).random(n_samples)
    return -np.log1p(-u)


def _stats_numpy(policy: BidPolicy, v: np.ndarray):
    """(A, B) sums with A-part = sum v*G*ind and B-part = sum (beta-beta')*G*ind."""
    beta = policy(v)
    beta_prime = policy.derivative(v)
    weight = np.clip(beta, 0.0, 1.0) * ((beta - beta_prime) >= 0.0)
    return float(np.dot(v, weight)), float(np.dot(beta - beta_prime, weight))


def revenue(policy: BidPolicy, y: float, n_samples: int, seed: int) -> float:
    """Monte-Carlo expected revenue of `policy` at type `y`."""
    if n_samples < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    a_sum = 0.0
    b_sum = 0.0
    remaining = n_samples
    while remaining > 0:
        take = min(_CHUNK, remaining)
        v = -np.log1p(-rng.random(take))
        a_part, b_part = _stats_numpy(policy, v)
        a_sum += a_part
        b_sum += b_part
        remaining -= take
    return (y * a_sum - b_sum) / n_samples


def _policy_tape_stats(tape, v, w, c, a, b):
    """Per-policy (A, B) means on the tape, masks fixed from forward values."""
    act = ad.add(ad.outer(v, w), c)
    hidden = ad.relu(act)
    beta = ad.add(ad.matmul(hidden, a), b)
    active = (act.value > 0.0).astype(float)
    beta_prime = ad.matmul(ad.mul(w, active), a)
    indicator = ((beta.value - beta_prime.value) >= 0.0).astype(float)
    weight = ad.mul(ad.minimum(ad.relu(beta), 1.0), indicator)
    n = float(v.size)
    a_stat = ad.div(ad.dot(weight, v), n)
    b_stat = ad.div(ad.dot(ad.sub(beta, beta_prime), weight), n)
    return a_stat, b_stat


def revenue_grad(policy: BidPolicy, y: float, n_samples: int, seed: int):
    """Pathwise gradient of the Monte-Carlo revenue on a fixed sample set.

    Returns (value, grads) where grads maps the policy field names to
    arrays.  The revenue indicator and the ReLU activation pattern are
    constants of the sample; everything else is differentiated exactly.
    """
    v = sample_values(seed, n_samples)
    tape = ad.Tape()
    w = tape.leaf(policy.weights)
    c = tape.leaf(policy.biases)
    a = tape.leaf(policy.out_weights)
    b = tape.leaf(np.asarray(policy.out_bias, dtype=float))
    a_stat, b_stat = _policy_tape_stats(tape, v, w, c, a, b)
    value = ad.sub(ad.mul(a_stat, float(y)), b_stat)
    gw, gc, ga, gb = ad.grad(tape, value, [w, c, a, b])
    grads = {"weights": gw, "biases": gc, "out_weights": ga,
             "out_bias": float(gb)}
    return float(value.value), grads


def cost_oracle(model: AuctionModel, n_samples: int, seed: int) -> CostOracle:
    """Plan-objective cost c(policy, y) = 1 - revenue, deterministic per seed."""
    return CostOracle(
        evaluate=lambda policy, y: 1.0 - revenue(policy, float(y), n_samples, seed))


AUCTION_TRAINING = DescentConfig(lr_weights=0.02, lr_atoms=3e-4)


def _unroll_budget(alpha, cost, beta, lam, floor_iters, cap: int = 3000) -> int:
    """Iterations the scaling loop needs on these values, measured off-tape.

    Differentiating an unconverged coupling (common at small lam, where
    convergence takes ~1/lam iterations) feeds the optimizer marginals that
    are far from feasible; a cheap numpy pre-pass picks the fixed unroll
    length the tape then records.
    """
    probe = SinkhornProblem(alpha, beta, cost, lam, max_iter=cap, tol=1e-8)
    return int(min(cap, max(floor_iters, solve_sinkhorn(probe).iterations + 10)))


def train_strategy(model: AuctionModel, lam: float,
                   n_atoms: Optional[int] = None,
                   steps: int = 1000, train_samples: int = 1000,
                   config: Optional[DescentConfig] = None, seed: int = 0,
                   width: int = 100):
    """Jointly descend (atom weights, policy parameters) on the coupling loss.

    Per step, a fresh seeded sample set prices every policy against every
    type, and the entropic-OT loss of the induced coupling is differentiated
    through a fixed number of scaling updates (sized per step so the
    recorded coupling is converged).  Returns the plan recovered from a
    converged final solve (policies as action atoms) and the loss trace.
    """
    config = config or AUCTION_TRAINING
    n = n_atoms if n_atoms is not None else model.n_types + 2
    y = model.type_atoms
    prior_weights = model.prior.weights
    init_rng = seeds.rng_for(seed, seeds.INIT)
    policies = ladder_policies(init_rng, n, width)
    params = []
    for p in policies:
        params.extend([p.weights.copy(), p.biases.copy(), p.out_weights.copy(),
                       np.asarray(p.out_bias, dtype=float)])
    alpha = np.full(n, 1.0 / n)
    opt_alpha = make_optimizer(config.method, config.lr_weights, [alpha])
    opt_params = make_optimizer(config.method, config.lr_atoms, params)
    trace = np.empty(steps)
    ones = np.ones(model.n_types)
    for step in range(steps):
        v = sample_values(seeds.seed_for(seed, seeds.TRAIN_STEP, step),
                          train_samples)
        tape = ad.Tape()
        alpha_var = tape.leaf(alpha)
        leaves = [tape.leaf(p) for p in params]
        rows = []
        for i in range(n):
            w, c, a, b = leaves[4 * i: 4 * i + 4]
            a_stat, b_stat = _policy_tape_stats(tape, v, w, c, a, b)
            rows.append(ad.add(ad.sub(ones, ad.mul(a_stat, y)), b_stat))
        cost_var = ad.stack(rows)
        unroll = _unroll_budget(alpha, cost_var.value, prior_weights, lam,
                                config.unroll_iters)
        loss = unrolled_loss(alpha_var, cost_var, prior_weights, lam, unroll)
        gradients = ad.grad(tape, loss, [alpha_var] + leaves)
        trace[step] = float(loss.value)
        (alpha,) = optimizer_step(opt_alpha, [alpha], [gradients[0]])
        # the floor keeps every atom shipping a trickle of mass, so its
        # policy keeps training and the atom can win types back later
        alpha = project_simplex(alpha, floor=min(1e-4, 0.1 / n))
        params = optimizer_step(opt_params, params, gradients[1:])
    policies = [BidPolicy(params[4 * i], params[4 * i + 1], params[4 * i + 2],
                          float(params[4 * i + 3])) for i in range(n)]
    final_seed = seeds.seed_for(seed, seeds.FINAL_PLAN)
    v = sample_values(final_seed, train_samples)
    cost = np.empty((n, model.n_types))
    for i, p in enumerate(policies):
        a_part, b_part = _stats_numpy(p, v)
        cost[i] = 1.0 - (y * a_part - b_part) / v.size
    problem = SinkhornProblem(alpha, prior_weights, cost, lam,
                              max_iter=2000, tol=1e-9)
    result = solve_sinkhorn(problem)
    plan = TransportPlan(result.plan, policies, list(y), model.prior)
    return plan, trace


@dataclass(frozen=True)
class StrategyEvaluation:
    utility: float
    privacy: float
    utility_stderr: float


def evaluate_strategy(plan: TransportPlan, eval_samples: int = 1_000_000,
                      seed: int = 0) -> StrategyEvaluation:
    """Plan-weighted revenue (fresh Monte-Carlo draw) and KL privacy cost."""
    gamma = plan.gamma
    masses = plan.row_masses
    y = np.asarray(plan.type_atoms, dtype=float)
    coef = gamma @ y                     # per-row sum_k gamma_ik y_k
    rng = np.random.default_rng(seed)
    total = 0.0
    total_sq = 0.0
    remaining = eval_samples
    while remaining > 0:
        take = min(_CHUNK, remaining)
        v = -np.log1p(-rng.random(take))
        u = np.zeros(take)
        for i, policy in enumerate(plan.action_atoms):
            if masses[i] == 0.0:
                continue
            beta = policy(v)
            beta_prime = policy.derivative(v)
            weight = np.clip(beta, 0.0, 1.0) * ((beta - beta_prime) >= 0.0)
            u += (coef[i] * v - masses[i] * (beta - beta_prime)) * weight
        total += u.sum()
        total_sq += (u * u).sum()
        remaining -= take
    utility = total / eval_samples
    variance = max(0.0, total_sq / eval_samples - utility ** 2)
    stderr = float(np.sqrt(variance / eval_samples))
    kl = kl_divergence()
    privacy = 0.0
    for i in range(plan.n_actions):
        if masses[i] > 0.0:
            privacy += masses[i] * divergence(kl, posterior(plan, i).weights,
                                              plan.prior.weights)
    return StrategyEvaluation(float(utility), float(privacy), stderr)


@dataclass(frozen=True)
class SweepRow:
    lam: float
    utility: float
    utility_stderr: float
    privacy: float
    privacy_stderr: float


@dataclass(frozen=True)
class SweepRun:
    lam: float
    run: int
    plan: TransportPlan
    evaluation: StrategyEvaluation
    trace: np.ndarray


@dataclass(frozen=True)
class SweepResult:
    rows: list
    runs: list = field(default_factory=list)


def sweep_lambda(model: AuctionModel, lambdas, runs: int,
                 steps: int = 1000, train_samples: int = 1000,
                 eval_samples: int = 100_000,
                 config: Optional[DescentConfig] = None, seed: int = 0,
                 n_atoms: Optional[int] = None,
                 width: int = 100) -> SweepResult:
    """Train and evaluate per (lambda, run); aggregate the trade-off table.

    Per-row standard errors combine the spread across runs with the mean
    Monte-Carlo error of the evaluations.
    """
    rows = []
    details = []
    for li, lam in enumerate(lambdas):
        utilities = []
        privacies = []
        mc_vars = []
        for run in range(runs):
            train_seed = seeds.seed_for(seed, seeds.TRAIN_STEP, li, run)
            plan, trace = train_strategy(model, lam, n_atoms=n_atoms,
                                         steps=steps,
                                         train_samples=train_samples,
                                         config=config, seed=train_seed,
                                         width=width)
            eval_seed = seeds.seed_for(seed, seeds.EVAL, li, run)
            evaluation = evaluate_strategy(plan, eval_samples, eval_seed)
            utilities.append(evaluation.utility)
            privacies.append(evaluation.privacy)
            mc_vars.append(evaluation.utility_stderr ** 2)
            details.append(SweepRun(lam, run, plan, evaluation, trace))
        if not utilities:
            continue
        utilities = np.asarray(utilities)
        privacies = np.asarray(privacies)
        n_runs = len(utilities)
        util_se = float(np.sqrt((utilities.var(ddof=0) + np.mean(mc_vars))
                                / n_runs))
        priv_se = float(np.sqrt(privacies.var(ddof=0) / n_runs))
        rows.append(SweepRow(float(lam), float(utilities.mean()), util_se,
                             float(privacies.mean()), priv_se))
    return SweepResult(rows=rows, runs=details)


@dataclass(frozen=True)
class DominantActionMap:
    row_for_type: np.ndarray   # (K,) plan row with maximal mass per type
    value_grid: np.ndarray     # (G,) base values the curves are sampled on
    curves: np.ndarray         # (K, G) dominant bid curve per type


def dominant_action_map(plan: TransportPlan,
                        value_grid=None) -> DominantActionMap:
    """Per type, the most used action atom and its bid curve (ties: lowest row)."""
    grid = (np.linspace(0.0, 5.0, 101) if value_grid is None
            else np.asarray(value_grid, dtype=float))
    rows = np.argmax(plan.gamma, axis=0)
    curves = np.empty((plan.n_types, grid.size))
    for k, row in enumerate(rows):
        curves[k] = plan.action_atoms[row](grid)
    return DominantActionMap(rows, grid, curves)
