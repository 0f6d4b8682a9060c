"""f-divergences between discrete distributions and their perspective functions.

A divergence is described by its convex generator f on the positive reals
with f(1) = 0, together with the two boundary limits that fix the extended
conventions:

* ``f_at_zero``  = lim_{t -> 0+} f(t), possibly +inf,
* ``f_slope_at_infinity`` = lim_{t -> inf} f(t)/t, possibly +inf.

Infinities are honest: every evaluator returns float('inf') where the
conventions dictate, never a large surrogate.

Generators must accept numpy arrays elementwise (all provided instances do);
solvers rely on this for vectorized evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

_INF = float("inf")


@dataclass(frozen=True)
class FDivergence:
    """Convex generator plus boundary conventions.

    ``f_prime`` is the derivative on t > 0 (a fixed subgradient choice at
    kinks); ``smooth`` is False when f has kinks away from the boundary,
    which makes first-order solvers switch to annealed smoothing.
    """

    name: str
    f: Callable[[np.ndarray], np.ndarray]
    f_at_zero: float
    f_slope_at_infinity: float
    f_prime: Optional[Callable[[np.ndarray], np.ndarray]] = None
    smooth: bool = True


def kl_divergence() -> FDivergence:
    """Kullback-Leibler: f(t) = t log t."""
    return FDivergence(
        name="kl",
        f=lambda t: t * np.log(t),
        f_at_zero=0.0,
        f_slope_at_infinity=_INF,
        f_prime=lambda t: np.log(t) + 1.0,
    )


def reverse_kl_divergence() -> FDivergence:
    """Reverse Kullback-Leibler: f(t) = -log t."""
    return FDivergence(
        name="reverse_kl",
        f=lambda t: -np.log(t),
        f_at_zero=_INF,
        f_slope_at_infinity=0.0,
        f_prime=lambda t: -1.0 / t,
    )


def total_variation() -> FDivergence:
    """Total variation: f(t) = |t - 1| / 2.  Subgradient 0 at the kink."""
    return FDivergence(
        name="tv",
        f=lambda t: 0.5 * np.abs(t - 1.0),
        f_at_zero=0.5,
        f_slope_at_infinity=0.5,
        f_prime=lambda t: 0.5 * np.sign(t - 1.0),
        smooth=False,
    )


def alpha_divergence(alpha: float) -> FDivergence:
    """f(t) = (t^alpha - 1)/(alpha - 1) for alpha in (1, inf); alpha=1 is KL."""
    if alpha < 1.0:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    if alpha == 1.0:
        return kl_divergence()
    return FDivergence(
        name=f"alpha:{alpha:g}",
        f=lambda t: (t ** alpha - 1.0) / (alpha - 1.0),
        f_at_zero=-1.0 / (alpha - 1.0),
        f_slope_at_infinity=_INF,
        f_prime=lambda t: alpha * t ** (alpha - 1.0) / (alpha - 1.0),
    )


def from_name(name: str) -> FDivergence:
    """Resolve a CLI/config divergence name: kl | reverse_kl | tv | alpha:<value>."""
    if name == "kl":
        return kl_divergence()
    if name == "reverse_kl":
        return reverse_kl_divergence()
    if name == "tv":
        return total_variation()
    if name.startswith("alpha:"):
        return alpha_divergence(float(name.split(":", 1)[1]))
    raise ValueError(f"unknown divergence {name!r}")


def divergence(div: FDivergence, p, q) -> float:
    """D(P, Q) = sum_k q_k f(p_k / q_k) over a shared atom set.

    Conventions: a term is q_k * f_at_zero when p_k = 0, it is
    p_k * f_slope_at_infinity when q_k = 0 < p_k, and 0 when both vanish.
    Returns +inf as a value where the conventions dictate.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("p and q must share the same atom set")
    total = 0.0
    for pk, qk in zip(p.ravel(), q.ravel()):
        if qk > 0.0:
            if pk > 0.0:
                total += qk * float(div.f(pk / qk))
            else:
                total += qk * div.f_at_zero
        elif pk > 0.0:
            total += pk * div.f_slope_at_infinity
        if total == _INF:
            return _INF
    return total


def perspective_h(div: FDivergence, gamma_row, prior, k: int) -> float:
    """Row-wise privacy cost h_k(row) = m * f(row_k / (prior_k * m)), m = sum(row).

    Zero rows cost 0; a zero k-th entry uses the f_at_zero convention.
    """
    row = np.asarray(gamma_row, dtype=float)
    m = float(row.sum())
    if m <= 0.0:
        return 0.0
    if row[k] == 0.0:
        return m * div.f_at_zero
    # divide by the mass first: row[k]/m is in [0, 1], so no underflow
    return m * float(div.f((row[k] / m) / prior[k]))


def perspective_total(div: FDivergence, gamma, prior) -> float:
    """sum_{i,k} prior_k * h_k(gamma_i) — the privacy cost of a plan matrix."""
    gamma = np.asarray(gamma, dtype=float)
    prior = np.asarray(prior, dtype=float)
    m = gamma.sum(axis=1)
    total = 0.0
    for i in range(gamma.shape[0]):
        if m[i] <= 0.0:
            continue
        row = gamma[i]
        zero = row == 0.0
        if zero.any():
            if div.f_at_zero == _INF:
                return _INF
            total += float(prior[zero].sum()) * m[i] * div.f_at_zero
        if (~zero).any():
            t = (row[~zero] / m[i]) / prior[~zero]
            total += m[i] * float(np.dot(prior[~zero], div.f(t)))
    return total


def perspective_total_grad(div: FDivergence, gamma, prior,
                           t_floor: float = 1e-16,
                           mass_floor: float = 1e-9):
    """Subgradient of :func:`perspective_total` in the plan matrix.

    On rows with mass, d/d gamma_ij = sum_k prior_k [f(t_ik) - t_ik f'(t_ik)]
    + f'(t_ij) with t_ik = gamma_ik / (prior_k * m_i); ratios are clamped
    below at ``t_floor`` so boundary subgradients stay finite.

    Rows with mass at most ``mass_floor`` are priced by the exact directional
    derivative of entering with pure column-k mass,
    prior_k f(1/prior_k) + (1 - prior_k) f(0).  This is what makes projected
    descent drain near-empty rows instead of feeding them mass the privacy
    term immediately claws back.
    """
    if div.f_prime is None:
        raise ValueError(f"divergence {div.name!r} has no derivative")
    gamma = np.asarray(gamma, dtype=float)
    prior = np.asarray(prior, dtype=float)
    m = gamma.sum(axis=1)
    # crumb rows (tiny relative to the heaviest row) are also priced as
    # empty: their exact gradient looks deceptively cheap and projected
    # descent would keep feeding them
    empty = m <= max(mass_floor, 1e-6 * float(m.max(initial=0.0)))
    safe_m = np.where(empty, 1.0, m)
    t = (gamma / safe_m[:, None]) / prior[None, :]
    t[empty, :] = 1.0
    t = np.maximum(t, t_floor)
    ft = div.f(t)
    fpt = div.f_prime(t)
    row_const = ((ft - t * fpt) * prior[None, :]).sum(axis=1)
    out = row_const[:, None] + fpt
    if empty.any():
        entry_rate = prior * div.f(1.0 / prior) + (1.0 - prior) * div.f_at_zero
        out[empty, :] = np.minimum(entry_rate, 1e30)[None, :]
    return out


def check_convexity(div: FDivergence) -> bool:
    """Sample f on a log-spaced grid of [1e-6, 1e6] and test midpoint convexity.

    The tolerance scales with the sampled values so that large-argument
    round-off does not produce false negatives.
    """
    grid = np.logspace(-6.0, 6.0, 121)
    values = np.asarray(div.f(grid), dtype=float)
    for i in range(len(grid) - 1):
        a, b = grid[i], grid[i + 1]
        fa, fb = values[i], values[i + 1]
        fm = float(div.f(0.5 * (a + b)))
        tol = max(1e-9, 1e-12 * max(abs(fa), abs(fb)))
        if fm > 0.5 * (fa + fb) + tol:
            return False
    return True
