"""Projections and first-order optimizers used by all solvers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


def project_simplex(v, total: float = 1.0, floor: float = 0.0) -> np.ndarray:
    """Euclidean projection onto {w >= floor, sum w = total} (sort-and-threshold).

    With a positive floor the projection composes with a shift/rescale; the
    solvers use a tiny floor while optimizing mixture weights so that no
    component's weight reaches exact zero (where its gradient channel dies
    and backward-pass round-off gets amplified by 1/weight).
    """
    v = np.asarray(v, dtype=float)
    if total <= 0.0:
        raise ValueError("total must be positive")
    if floor > 0.0:
        slack = total - v.size * floor
        if slack <= 0.0:
            raise ValueError("floor leaves no mass to distribute")
        return floor + slack * project_simplex((v - floor) / slack)
    u = np.sort(v)[::-1]
    cumulative = np.cumsum(u) - total
    rho = np.nonzero(u - cumulative / np.arange(1, v.size + 1) > 0.0)[0][-1]
    w = np.maximum(v - cumulative[rho] / (rho + 1.0), 0.0)
    s = w.sum()
    # renormalize last so the output lies on the simplex exactly
    return w * (total / s) if s > 0.0 else np.full(v.size, total / v.size)


def project_box(v, lower, upper) -> np.ndarray:
    """Componentwise clamp onto the box [lower, upper]."""
    return np.clip(np.asarray(v, dtype=float), lower, upper)


def project_columns(matrix, totals) -> np.ndarray:
    """Project each column k of an (n, K) matrix onto {w >= 0, sum w = totals[k]}."""
    m = np.asarray(matrix, dtype=float)
    totals = np.asarray(totals, dtype=float)
    n, cols = m.shape
    u = -np.sort(-m, axis=0)
    cumulative = np.cumsum(u, axis=0) - totals[None, :]
    ranks = np.arange(1, n + 1)[:, None]
    cond = u - cumulative / ranks > 0.0
    rho = n - 1 - np.argmax(cond[::-1, :], axis=0)
    theta = cumulative[rho, np.arange(cols)] / (rho + 1.0)
    w = np.maximum(m - theta[None, :], 0.0)
    s = w.sum(axis=0)
    safe = s > 0.0
    scale = np.where(safe, totals / np.where(safe, s, 1.0), 0.0)
    w = w * scale[None, :]
    if not safe.all():
        w[:, ~safe] = totals[~safe] / n
    return w


@dataclass
class DescentConfig:
    """Shared knobs for the first-order solvers.

    The two learning rates follow the library defaults: 0.05 for
    simplex-constrained parameters (weights, plan columns) and 0.01 for
    atoms and network weights.
    """

    method: str = "adam"           # adam | rmsprop | pgd
    steps: int = 500
    lr_weights: float = 0.05
    lr_atoms: float = 0.01
    unroll_iters: int = 100


@dataclass
class OptimizerState:
    """First-order update state; accumulators mirror the parameter shapes."""

    method: str                    # adam | rmsprop | pgd
    lr: float
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0


def make_optimizer(method: str, lr: float, params: Sequence[np.ndarray]) -> OptimizerState:
    if method not in ("adam", "rmsprop", "pgd"):
        raise ValueError(f"unknown optimizer {method!r}")
    zeros = [np.zeros_like(np.asarray(p, dtype=float)) for p in params]
    return OptimizerState(method=method, lr=lr,
                          m=[z.copy() for z in zeros], v=zeros)


def optimizer_step(state: OptimizerState, params: Sequence[np.ndarray],
                   grads: Sequence[np.ndarray]) -> list:
    """One deterministic update; returns the new parameter list.

    ADAM uses beta1=0.9, beta2=0.999, eps=1e-8; RMSProp uses decay 0.9,
    eps=1e-8; pgd is a plain gradient step.
    """
    eps = 1e-8
    state.t += 1
    out = []
    if state.method == "adam":
        b1, b2 = 0.9, 0.999
        bc1 = 1.0 - b1 ** state.t
        bc2 = 1.0 - b2 ** state.t
        for i, (p, g) in enumerate(zip(params, grads)):
            state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
            state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
            m_hat = state.m[i] / bc1
            v_hat = state.v[i] / bc2
            out.append(p - state.lr * m_hat / (np.sqrt(v_hat) + eps))
    elif state.method == "rmsprop":
        for i, (p, g) in enumerate(zip(params, grads)):
            state.v[i] = 0.9 * state.v[i] + 0.1 * g * g
            out.append(p - state.lr * g / (np.sqrt(state.v[i]) + eps))
    else:
        for p, g in zip(params, grads):
            out.append(p - state.lr * g)
    return out


@dataclass(frozen=True)
class PGDResult:
    x: np.ndarray
    value: float
    steps: int
    converged: bool


def minimize_columns_pgd(objective: Callable[[np.ndarray], float],
                         gradient: Callable[[np.ndarray], np.ndarray],
                         init: np.ndarray,
                         column_totals: np.ndarray,
                         max_steps: int = 5000,
                         tol: float = 1e-8,
                         lr0: float = 1.0,
                         window: int = 25) -> PGDResult:
    """Monotone projected gradient over column-wise scaled simplices.

    Backtracking enforces an Armijo-type sufficient decrease, so the value
    sequence is strictly nonincreasing and the returned value never exceeds
    the value at ``init``.  The trial step is re-grown every iteration (with
    a floor), which lets the method recover after passing through a
    high-curvature region near the boundary; termination fires when a whole
    window of accepted steps improved the objective by less than
    ``tol * max(1, |f|)``.
    """
    x = project_columns(init, column_totals)
    f = objective(x)
    lr = lr0
    window_anchor = f
    for step in range(1, max_steps + 1):
        g = gradient(x)
        lr = min(max(lr * 2.0, 1e-6), 1e6)
        accepted = False
        while lr >= 1e-14:
            cand = project_columns(x - lr * g, column_totals)
            delta = cand - x
            sq = float((delta * delta).sum())
            if sq == 0.0:
                break
            fc = objective(cand)
            if fc <= f - 1e-4 * sq / lr:
                accepted = True
                break
            lr *= 0.5
        if not accepted:
            return PGDResult(x, f, step, True)
        x, f = cand, fc
        if sq <= tol * tol and lr >= 1e-2:
            return PGDResult(x, f, step, True)
        if step % window == 0:
            if window_anchor - f <= tol * max(1.0, abs(f)):
                return PGDResult(x, f, step, True)
            window_anchor = f
    return PGDResult(x, f, max_steps, False)
