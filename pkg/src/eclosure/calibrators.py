"""p-to-e calibrators and the Simes combination.

Two calibrator families turn p-values into e-values whose subset averages
stay valid under arbitrary dependence: a step calibrator built from the
Benjamini-Yekutieli correction and a smooth one built from the -1 branch of
the Lambert W function. Both integrate to at most one over a uniform
p-value, which is what makes their averages legitimate e-values.
"""

from __future__ import annotations

import math
from functools import lru_cache

from .core import ValueVector, indices_from_mask

__all__ = [
    "lambert_w_minus1",
    "su_level_factor",
    "su_calibrate",
    "harmonic_number",
    "by_calibrate",
    "simes_p",
]

_BRANCH_POINT = -math.exp(-1.0)


def lambert_w_minus1(x: float, rtol: float = 1e-12, max_iter: int = 100) -> float:
    """The -1 branch of the Lambert W function on [-1/e, 0).

    Returns the solution w <= -1 of ``w * exp(w) = x``. Uses Halley's
    iteration from an asymptotic seed ``log(-x) - log(-log(-x))``, or a
    branch-point series seed when x is near -1/e.

    Parameters
    ----------
    x : float
        Argument in [-1/e, 0).
    rtol : float
        Relative convergence tolerance on the update step.

    Returns
    -------
    float
    """
    if not _BRANCH_POINT <= x < 0.0:
        # Absorb one-ulp underflow below the branch point from upstream
        # float division; anything further out is a genuine domain error.
        if x < _BRANCH_POINT and (_BRANCH_POINT - x) <= 1e-12 * abs(_BRANCH_POINT):
            return -1.0
        raise ValueError(f"lambert_w_minus1 needs x in [-1/e, 0), got {x}")
    if x == _BRANCH_POINT:
        return -1.0

    if x > -0.2706705664732254:  # -e^{-1} * 0.736, away from the branch point
        l1 = math.log(-x)
        w = l1 - math.log(-l1)
    else:
        p = -math.sqrt(2.0 * (1.0 + math.e * x))
        w = -1.0 + p - p * p / 3.0 + 11.0 * p ** 3 / 72.0

    for _ in range(max_iter):
        ew = math.exp(w)
        f = w * ew - x
        denom = ew * (w + 1.0) - (w + 2.0) * f / (2.0 * w + 2.0)
        step = f / denom
        w -= step
        if abs(step) <= rtol * abs(w):
            break
    return w


@lru_cache(maxsize=256)
def su_level_factor(alpha: float) -> float:
    """The factor l(alpha) = -W_{-1}(-alpha/e) by which the Su procedure
    shrinks its working level; satisfies alpha = a'(1 + log(1/a')) at
    a' = alpha/l(alpha)."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    return -lambert_w_minus1(-alpha / math.e)


def su_calibrate(p: float, alpha: float) -> float:
    """Smooth p-to-e calibrator 1 / max(l(alpha) * p, alpha).

    Caps at 1/alpha for small p and integrates to exactly 1 over a uniform
    p-value; the subset e-value of the Su closure applies it to a Simes
    p-value.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    ell = su_level_factor(alpha)
    return 1.0 / max(ell * p, alpha)


@lru_cache(maxsize=4096)
def harmonic_number(k: int) -> float:
    """H_k = sum_{i<=k} 1/i."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > 1024:
        # Euler-Maclaurin tail keeps the cache bounded for very large k.
        return (math.log(k) + 0.5772156649015328606 + 1.0 / (2 * k)
                - 1.0 / (12 * k * k))
    total = 0.0
    for i in range(k, 0, -1):
        total += 1.0 / i
    return total


def _snapped_ceil(v: float, rel: float = 1e-12) -> int:
    """Ceiling with a pre-rounding snap so that values a hair above an
    integer (float noise on exact boundaries) do not jump a step."""
    r = round(v)
    if abs(v - r) <= rel * max(1.0, abs(v)):
        return int(r)
    return int(math.ceil(v))


def by_calibrate(p: float, k: int, alpha: float) -> float:
    """Step p-to-e calibrator of order k built from the BY correction.

    Returns ``k / (alpha * max(ceil(k * H_k * p / alpha), 1))`` when
    ``H_k * p <= alpha`` and 0 otherwise. Averaging the order-|S| calibrator
    over a subset S gives the BY closure's subset e-value. Both the support
    indicator and the ceiling snap to exact boundaries at relative 1e-12,
    since worked instances sit exactly on them and float products jitter.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if k < 1:
        raise ValueError("k must be >= 1")
    hk = harmonic_number(k)
    if hk * p > alpha * (1.0 + 1e-12):
        return 0.0
    c = max(_snapped_ceil(k * hk * p / alpha), 1)
    return k / (alpha * c)


def simes_p(p_values: ValueVector, s_mask: int) -> float:
    """Simes combination of the p-values inside a subset.

    Returns ``min_i |S| * p_(i) / i`` over the ascending order statistics of
    the subset, capped at 1. Weakly increasing in every coordinate, which is
    what the monotone membership shortcut relies on.
    """
    if p_values.kind != "pvalue":
        raise ValueError("simes_p needs p-values")
    if s_mask == 0:
        raise ValueError("empty subset")
    vals = sorted(p_values.values[i - 1] for i in indices_from_mask(s_mask))
    s = len(vals)
    best = min(s * v / i for i, v in enumerate(vals, start=1))
    return min(best, 1.0)
