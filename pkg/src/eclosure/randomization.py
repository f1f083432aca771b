"""Truncation boosting and stochastic rounding of e-collections.

Truncation exploits that membership only compares e_S against the finite
menu of thresholds loss(S, R)/alpha: replacing e_S by the largest menu
value below it loses nothing, so an e-value can be scaled up by the
largest factor b keeping E[T(b e)] <= 1. Stochastic rounding pushes each
e_S up to the largest attainable threshold with just the right
probability, enlarging the closure without spending any validity.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .core import ComparePolicy, DEFAULT_POLICY, LossFunction
from .ecollections import ECollection
from . import engine

__all__ = [
    "TruncationGrid",
    "RoundingSource",
    "truncation_grid",
    "truncate",
    "boost_factor",
    "stochastic_round",
]

SNAP_REL = 1e-12


@dataclass(frozen=True)
class TruncationGrid:
    """Attainable membership thresholds r/(alpha k) for k in [m],
    r in [k ^ cap], plus 0; sorted ascending, deduplicated."""

    alpha: float
    m: int
    cap: int
    values: tuple

    def __post_init__(self):
        if not self.values or self.values[0] != 0:
            raise ValueError("grid must start at 0")


def truncation_grid(alpha: float, m: int, cap: int | None = None) -> TruncationGrid:
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if m < 1:
        raise ValueError("m must be positive")
    if cap is None:
        cap = m
    if cap < 1:
        raise ValueError("cap must be positive")
    ratios = {Fraction(0)}
    for k in range(1, m + 1):
        for r in range(1, min(k, cap) + 1):
            ratios.add(Fraction(r, k))
    values = tuple(sorted(float(q) / alpha for q in ratios))
    return TruncationGrid(alpha=alpha, m=m, cap=cap, values=values)


def truncate(x: float, grid: TruncationGrid) -> float:
    """Largest grid value <= x; values within relative 1e-12 above x snap
    up, so float noise at exact thresholds does not lose a level."""
    if x < 0:
        raise ValueError("truncate needs x >= 0")
    if math.isinf(x):
        return grid.values[-1]
    vals = grid.values
    i = bisect_right(vals, x) - 1
    if i + 1 < len(vals):
        nxt = vals[i + 1]
        if nxt - x <= SNAP_REL * max(abs(x), abs(nxt), 1.0):
            return nxt
    return vals[i]


def boost_factor(expectation_oracle: Callable[[float], float],
                 grid: TruncationGrid, tol: float = 1e-9,
                 b_max: float = 1e6,
                 policy: ComparePolicy = DEFAULT_POLICY) -> float:
    """Largest b in [1, b_max] with E[T(b E)] <= 1, by bisection.

    The caller supplies the expectation as a function of b (analytic or
    Monte Carlo with fixed draws); it must be weakly increasing.
    """
    first = expectation_oracle(1.0)
    if policy.gt(first, 1.0):
        raise ValueError(
            f"expectation at b=1 is {first} > 1: the input is not a valid "
            f"e-value under the stated null"
        )
    if not policy.gt(expectation_oracle(b_max), 1.0):
        return b_max
    lo, hi = 1.0, b_max
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if policy.gt(expectation_oracle(mid), 1.0):
            hi = mid
        else:
            lo = mid
    return lo


@dataclass(frozen=True)
class RoundingSource:
    """One shared uniform draw plus where it came from."""

    u: float
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.u <= 1.0:
            raise ValueError(f"u must lie in [0, 1], got {self.u}")


def stochastic_round(E: ECollection, loss: LossFunction, alpha: float,
                     rounding: RoundingSource,
                     policy: ComparePolicy = DEFAULT_POLICY) -> ECollection:
    """Round every e_S onto the attainable-threshold grid of the current
    closure, using one shared uniform.

    For each subset S, ahat_S is the tightest threshold any current member
    imposes: max over members R of loss(S, R)/alpha. The rounded value is

        e'_S = ahat_S + (b_cap - ahat_S) * 1{u <= (e_S - ahat_S)/b_cap}

    with b_cap = max_S ahat_S. Every member of the base closure stays a
    member (e'_S >= ahat_S by construction) and E[e'_S] <= e_S pointwise,
    so validity is preserved while the closure can only grow.
    """
    members = engine.enumerate_collection(E, loss, alpha, policy)
    m = E.m
    n = 1 << m
    ahat = np.zeros(n)
    for r_mask in members:
        if r_mask == 0:
            continue
        np.maximum(ahat, engine._loss_over_all(loss, m, r_mask) / alpha,
                   out=ahat)
    ahat[0] = 0.0
    b_cap = float(ahat.max())
    if E.evaluate_all is not None:
        e_all = E.evaluate_all().copy()
    else:
        e_all = np.empty(n)
        e_all[0] = np.inf
        for mask in range(1, n):
            e_all[mask] = E.evaluate(mask)
    if b_cap == 0.0:
        rounded = e_all
    else:
        fire = rounding.u * b_cap <= (e_all - ahat)
        rounded = np.where(fire, b_cap, ahat)
        rounded[np.isinf(e_all)] = np.inf
        rounded[0] = np.inf
    source = {"builder": "rounded", "base": E.source, "alpha": alpha,
              "loss": loss.name, "loss_params": loss.params,
              "u": rounding.u, "provenance": rounding.provenance}
    col = ECollection(
        m=m,
        evaluate=lambda mask: float(rounded[mask]),
        feasible=E.feasible,
        source=source,
        order_hint=E.order_hint,
    )
    if m <= 16:
        col.evaluate_all = lambda: rounded
    return col
