"""Builders for e-collections: subset evaluators S -> e_S.

An e-collection assigns a nonnegative value e_S to every nonempty subset S
of hypotheses so that e_N is a valid e-value at the true null set N. A
candidate rejection set R then controls the chosen error rate at level
alpha exactly when e_S >= loss(S, R)/alpha for all S; the engine module
quantifies that condition, this module builds the evaluators.

Each builder returns an ECollection whose flags describe the structure the
shortcut algorithms exploit (arithmetic-mean form, monotonicity in the
p-values, independence from alpha). Builders also attach a vectorised
``evaluate_all`` hook at small m so the engine can sweep all 2^m subsets in
numpy instead of Python.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .calibrators import by_calibrate, harmonic_number, simes_p, su_calibrate, su_level_factor
from .core import (
    ComparePolicy,
    DEFAULT_POLICY,
    LossFunction,
    ValueVector,
    full_mask,
    indices_from_mask,
)

__all__ = [
    "ECollection",
    "KnockoffStats",
    "collection_fingerprint",
    "mean_collection",
    "product_collection",
    "by_collection",
    "su_collection",
    "bh_collection",
    "storey_adabh_collection",
    "storey_pi0",
    "knockoff_stats",
    "knockoff_collection",
    "compound_to_collection",
    "from_procedure_collection",
    "restrict_feasible",
    "step_up_count",
]

# evaluate_all hooks are only attached below this m; 2^16 float64 arrays are
# the largest dense sweeps worth holding in memory.
DENSE_CAP = 16

_POPCOUNT_CACHE: dict[int, np.ndarray] = {}


def popcount_table(m: int) -> np.ndarray:
    """Popcounts of all masks 0..2^m-1 (uint8), cached per m."""
    tbl = _POPCOUNT_CACHE.get(m)
    if tbl is None:
        tbl = np.zeros(1, dtype=np.uint8)
        for _ in range(m):
            tbl = np.concatenate([tbl, tbl + np.uint8(1)])
        _POPCOUNT_CACHE[m] = tbl
    return tbl


def subset_sums(values: Sequence[float]) -> np.ndarray:
    """Dense array of sum_{i in S} values[i] over all masks S."""
    sums = np.zeros(1)
    for v in values:
        sums = np.concatenate([sums, sums + v])
    return sums


def _memoized(builder: Callable[[], np.ndarray]) -> Callable[[], np.ndarray]:
    cache: list = []

    def wrapped() -> np.ndarray:
        if not cache:
            cache.append(builder())
        return cache[0]

    return wrapped


@dataclass
class ECollection:
    """A built e-collection: evaluator plus structural flags.

    Attributes
    ----------
    m : int
        Number of hypotheses.
    evaluate : callable
        Maps a nonempty subset bitmask to e_S (extended real, +inf allowed).
    alpha_independent : bool
        True when e_S does not depend on the nominal level, which is what
        licenses post hoc changes of alpha.
    monotone_in_p : bool
        True when e_S is weakly decreasing in every p-value (BY/Su), the
        property behind the quadratic-time membership shortcut.
    mean_type : bool
        True when e_S is the arithmetic mean of ``base_values`` over S.
    base_values : tuple or None
        Per-hypothesis e-values underlying a mean-type collection.
    feasible : callable or None
        Predicate marking subsets that can occur as null sets; infeasible
        subsets evaluate to +inf. None means everything is feasible.
    source : dict
        JSON-friendly descriptor of the builder and its inputs; hashed into
        the audit fingerprint.
    evaluate_all : callable or None
        Zero-argument hook returning e_S for every mask as a numpy array
        (index = mask, entry 0 unused and set to +inf). Present at small m.
    order_hint : tuple or None
        1-based hypothesis indices sorted best-first, the canonical prefix
        ordering for largest-set searches.
    """

    m: int
    evaluate: Callable[[int], float]
    alpha_independent: bool = False
    monotone_in_p: bool = False
    mean_type: bool = False
    base_values: Optional[tuple] = None
    feasible: Optional[Callable[[int], bool]] = None
    source: dict = field(default_factory=dict)
    evaluate_all: Optional[Callable[[], np.ndarray]] = None
    order_hint: Optional[tuple] = None


def collection_fingerprint(collection: ECollection) -> str:
    """Stable hash of the builder descriptor, used to prove that audited
    steps all came from one collection."""
    blob = json.dumps(collection.source, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def _order_desc(values: Sequence[float]) -> tuple:
    """1-based indices sorted by descending value, ties by smallest index."""
    m = len(values)
    return tuple(sorted(range(1, m + 1), key=lambda i: (-values[i - 1], i)))


def _order_asc(values: Sequence[float]) -> tuple:
    m = len(values)
    return tuple(sorted(range(1, m + 1), key=lambda i: (values[i - 1], i)))


def _mask_mean(base: Sequence[float], mask: int):
    total = 0
    n = 0
    b = mask
    while b:
        low = b & -b
        total = total + base[low.bit_length() - 1]
        n += 1
        b ^= low
    return total / n


def _dense_mean(base: Sequence[float], m: int) -> Callable[[], np.ndarray]:
    def build() -> np.ndarray:
        sums = subset_sums(base)
        sizes = popcount_table(m).astype(np.float64)
        sizes[0] = 1.0
        out = sums / sizes
        out[0] = np.inf
        return out

    return _memoized(build)


def mean_collection(e_values: ValueVector) -> ECollection:
    """Arithmetic-mean e-collection e_S = (sum_{i in S} e_i)/|S|.

    The closure of this collection is the mean-consistent family whose
    largest prefix set uniformly improves the eBH procedure.
    """
    if e_values.kind != "evalue":
        raise ValueError("mean_collection needs e-values")
    base = e_values.values
    m = e_values.m
    col = ECollection(
        m=m,
        evaluate=lambda mask: _mask_mean(base, mask),
        alpha_independent=True,
        mean_type=True,
        base_values=base,
        source={"builder": "mean", "e": list(map(float, base))},
        order_hint=_order_desc(base),
    )
    if m <= DENSE_CAP:
        col.evaluate_all = _dense_mean(base, m)
    return col


def product_collection(e_values: ValueVector) -> ECollection:
    """Product e-collection e_S = prod_{i in S} e_i for independent inputs.

    Computed in log space so long products neither under- nor overflow
    silently; a zero factor short-circuits to 0.
    """
    if e_values.kind != "evalue":
        raise ValueError("product_collection needs e-values")
    base = e_values.values
    m = e_values.m
    logs = [(-math.inf if v == 0 else math.log(v)) for v in base]

    def evaluate(mask: int) -> float:
        total = 0.0
        b = mask
        while b:
            low = b & -b
            lg = logs[low.bit_length() - 1]
            if lg == -math.inf:
                return 0.0
            total += lg
            b ^= low
        if total > 709.0:
            return math.inf
        return math.exp(total)

    def build() -> np.ndarray:
        logsum = subset_sums(logs)
        with np.errstate(over="ignore", invalid="ignore"):
            out = np.exp(logsum)
        out[np.isnan(out)] = 0.0  # -inf + inf never occurs: inputs finite or 0
        out[0] = np.inf
        return out

    col = ECollection(
        m=m,
        evaluate=evaluate,
        alpha_independent=True,
        source={"builder": "product", "e": list(map(float, base))},
        order_hint=_order_desc(base),
    )
    if m <= DENSE_CAP:
        col.evaluate_all = _memoized(build)
    return col


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")


def by_collection(p_values: ValueVector, alpha: float) -> ECollection:
    """BY-calibrated e-collection.

    e_S averages the order-|S| BY calibrator over the subset, so the
    calibrator sharpens as the candidate null set shrinks. Weakly decreasing
    in every p-value.
    """
    if p_values.kind != "pvalue":
        raise ValueError("by_collection needs p-values")
    _check_alpha(alpha)
    p = p_values.values
    m = p_values.m

    def evaluate(mask: int) -> float:
        idx = indices_from_mask(mask)
        s = len(idx)
        return sum(by_calibrate(p[i - 1], s, alpha) for i in idx) / s

    def build() -> np.ndarray:
        pc = popcount_table(m)
        out = np.full(1 << m, np.inf)
        for s in range(1, m + 1):
            cal = [by_calibrate(v, s, alpha) for v in p]
            sums = subset_sums(cal)
            sel = pc == s
            out[sel] = sums[sel] / s
        return out

    col = ECollection(
        m=m,
        evaluate=evaluate,
        monotone_in_p=True,
        source={"builder": "by", "p": list(map(float, p)), "alpha": alpha},
        order_hint=_order_asc(p),
    )
    if m <= DENSE_CAP:
        col.evaluate_all = _memoized(build)
    return col


def su_collection(p_values: ValueVector, alpha: float) -> ECollection:
    """Simes-based e-collection e_S = su_calibrate(simes_p(p, S), alpha).

    Valid under positive dependence on the true nulls; weakly decreasing in
    every p-value.
    """
    if p_values.kind != "pvalue":
        raise ValueError("su_collection needs p-values")
    _check_alpha(alpha)
    p = p_values.values
    m = p_values.m
    ell = su_level_factor(alpha)

    def evaluate(mask: int) -> float:
        return su_calibrate(simes_p(p_values, mask), alpha)

    def build() -> np.ndarray:
        # Work in ascending-p coordinates where in-subset ranks are cumsums,
        # then permute the mask index back to original coordinates.
        order = sorted(range(m), key=lambda j: (p[j], j))
        q = np.array([p[j] for j in order])
        n = 1 << m
        bits = np.zeros((n, m), dtype=bool)
        for j in range(m):
            bits[:, j] = (np.arange(n) >> j) & 1
        ranks = np.cumsum(bits, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(bits, q[None, :] / np.maximum(ranks, 1), np.inf)
        sizes = popcount_table(m).astype(np.float64)
        sizes[0] = 1.0  # mask 0 is overwritten below; avoid 0 * inf
        p_sub = np.minimum(sizes * ratios.min(axis=1), 1.0)
        e_sorted = 1.0 / np.maximum(ell * p_sub, alpha)
        # Map each original-coordinate mask to its sorted-coordinate twin.
        remap = np.zeros(1, dtype=np.int64)
        pos = {orig: sorted_pos for sorted_pos, orig in enumerate(order)}
        for j in range(m):
            remap = np.concatenate([remap, remap + (1 << pos[j])])
        out = e_sorted[remap]
        out[0] = np.inf
        return out

    col = ECollection(
        m=m,
        evaluate=evaluate,
        monotone_in_p=True,
        source={"builder": "su", "p": list(map(float, p)), "alpha": alpha},
        order_hint=_order_asc(p),
    )
    if m <= DENSE_CAP:
        col.evaluate_all = _memoized(build)
    return col


def step_up_count(p_values: ValueVector, thresholds: Sequence[float],
                  policy: ComparePolicy = DEFAULT_POLICY) -> tuple[int, int]:
    """Generic step-up: largest r with p_(r) <= thresholds[r-1].

    Returns (r, mask of the r smallest p-values), ties broken by smallest
    index. r = 0 and an empty mask when no index qualifies.
    """
    p = p_values.values
    m = p_values.m
    order = sorted(range(m), key=lambda j: (p[j], j))
    r = 0
    for i in range(m, 0, -1):
        if policy.le(p[order[i - 1]], thresholds[i - 1]):
            r = i
            break
    mask = 0
    for j in order[:r]:
        mask |= 1 << j
    return r, mask


def bh_collection(p_values: ValueVector, alpha: float,
                  policy: ComparePolicy = DEFAULT_POLICY) -> ECollection:
    """Mean-type e-collection recovering (and closing) the BH procedure.

    Base e-values are m/(alpha*r) on the BH rejection set at level alpha and
    0 elsewhere, with r the BH rejection count (r or 1 in the denominator
    when r = 0). Valid under positive regression dependence.
    """
    if p_values.kind != "pvalue":
        raise ValueError("bh_collection needs p-values")
    _check_alpha(alpha)
    m = p_values.m
    thresholds = [alpha * i / m for i in range(1, m + 1)]
    r, _ = step_up_count(p_values, thresholds, policy)
    return _indicator_mean_collection(p_values, alpha, r, pi0=1.0,
                                      builder="bh", policy=policy)


def storey_pi0(p_values: ValueVector, lam: float) -> float:
    """Null-proportion estimate: max over i of the Storey estimator
    (1 + #{p_j > lam}) / (m (1 - lam)) with p_i zeroed out.

    Not capped at 1; zeroing each coordinate in turn makes the estimate
    usable inside the per-hypothesis e-values.
    """
    if not 0.0 < lam < 1.0:
        raise ValueError(f"lambda must lie in (0, 1), got {lam}")
    p = p_values.values
    m = p_values.m
    best = 0.0
    for i in range(m):
        cnt = sum(1 for j in range(m) if j != i and p[j] > lam)
        best = max(best, (1 + cnt) / (m * (1 - lam)))
    return best


def storey_adabh_collection(p_values: ValueVector, alpha: float, lam: float,
                            policy: ComparePolicy = DEFAULT_POLICY) -> ECollection:
    """Mean-type e-collection recovering the Storey-adaptive BH procedure.

    The adaptive step-up runs at threshold alpha*i/(pi0*m); base e-values
    are m/(alpha*r) on its rejection set. Assumes independent p-values.
    """
    if p_values.kind != "pvalue":
        raise ValueError("storey_adabh_collection needs p-values")
    _check_alpha(alpha)
    pi0 = storey_pi0(p_values, lam)
    m = p_values.m
    thresholds = [alpha * i / (pi0 * m) for i in range(1, m + 1)]
    r, _ = step_up_count(p_values, thresholds, policy)
    return _indicator_mean_collection(p_values, alpha, r, pi0=pi0,
                                      builder="adabh", policy=policy,
                                      extra={"lambda": lam, "pi0": pi0})


def _indicator_mean_collection(p_values: ValueVector, alpha: float, r: int,
                               pi0: float, builder: str,
                               policy: ComparePolicy,
                               extra: Optional[dict] = None) -> ECollection:
    p = p_values.values
    m = p_values.m
    level = alpha * max(r, 1) / (m * pi0)
    weight = m / (alpha * max(r, 1))
    base = tuple(weight if policy.le(v, level) else 0.0 for v in p)
    source = {"builder": builder, "p": list(map(float, p)), "alpha": alpha,
              "r": r}
    if extra:
        source.update(extra)
    col = ECollection(
        m=m,
        evaluate=lambda mask: _mask_mean(base, mask),
        mean_type=True,
        base_values=base,
        source=source,
        order_hint=_order_asc(p),
    )
    if m <= DENSE_CAP:
        col.evaluate_all = _dense_mean(base, m)
    return col


@dataclass(frozen=True)
class KnockoffStats:
    """Knockoff filter threshold summary: statistics, threshold, and the
    count of stats at or below -c_alpha."""

    w: tuple
    c_alpha: float
    f_neg: int
    rejected: int  # bitmask {i : w_i >= c_alpha}


def knockoff_stats(w_values: ValueVector, alpha: float,
                   policy: ComparePolicy = DEFAULT_POLICY) -> KnockoffStats:
    """Scan candidate thresholds (distinct positive |w_i|, then +inf) for the
    smallest c with (1 + #{w <= -c}) / #{w >= c} <= alpha."""
    if w_values.kind != "knockoff_stat":
        raise ValueError("knockoff_stats needs knockoff statistics")
    _check_alpha(alpha)
    w = w_values.values
    for c in sorted({abs(x) for x in w if abs(x) > 0}):
        pos = sum(1 for x in w if x >= c)
        neg = sum(1 for x in w if x <= -c)
        if pos > 0 and policy.le((1 + neg) / pos, alpha):
            mask = 0
            for j, x in enumerate(w):
                if x >= c:
                    mask |= 1 << j
            return KnockoffStats(w=tuple(w), c_alpha=c, f_neg=neg, rejected=mask)
    return KnockoffStats(w=tuple(w), c_alpha=math.inf, f_neg=0, rejected=0)


def knockoff_collection(w_values: ValueVector, alpha: float,
                        policy: ComparePolicy = DEFAULT_POLICY) -> ECollection:
    """Knockoff e-collection e_S = #{i in S: w_i >= c} / (1 + #{j in S: w_j <= -c})."""
    stats = knockoff_stats(w_values, alpha, policy)
    w = stats.w
    c = stats.c_alpha
    m = w_values.m
    pos = tuple(1.0 if x >= c else 0.0 for x in w)
    neg = tuple(1.0 if x <= -c else 0.0 for x in w)

    def evaluate(mask: int) -> float:
        np_, nn = 0.0, 0.0
        b = mask
        while b:
            low = b & -b
            j = low.bit_length() - 1
            np_ += pos[j]
            nn += neg[j]
            b ^= low
        return np_ / (1.0 + nn)

    def build() -> np.ndarray:
        pos_sums = subset_sums(pos)
        neg_sums = subset_sums(neg)
        out = pos_sums / (1.0 + neg_sums)
        out[0] = np.inf
        return out

    col = ECollection(
        m=m,
        evaluate=evaluate,
        source={"builder": "knockoff", "w": list(map(float, w)),
                "alpha": alpha, "c_alpha": c, "f_neg": stats.f_neg},
        order_hint=_order_desc(w),
    )
    if m <= DENSE_CAP:
        col.evaluate_all = _memoized(build)
    return col


def compound_to_collection(compound_e: ValueVector) -> ECollection:
    """e_S = (1/m) * sum_{i in S} e~_i for compound e-values, whose
    expectations over true nulls sum to at most m."""
    if compound_e.kind != "evalue":
        raise ValueError("compound_to_collection needs e-values")
    base = compound_e.values
    m = compound_e.m

    def evaluate(mask: int) -> float:
        total = 0
        b = mask
        while b:
            low = b & -b
            total += base[low.bit_length() - 1]
            b ^= low
        return total / m

    def build() -> np.ndarray:
        out = subset_sums(base) / m
        out[0] = np.inf
        return out

    col = ECollection(
        m=m,
        evaluate=evaluate,
        alpha_independent=True,
        source={"builder": "compound", "e": list(map(float, base))},
        order_hint=_order_desc(base),
    )
    if m <= DENSE_CAP:
        col.evaluate_all = _memoized(build)
    return col


def from_procedure_collection(family: Sequence[int], loss: LossFunction,
                              alpha: float, m: int) -> ECollection:
    """The least e-collection making every set in a family a member:
    e_S = max_{R in family} loss(S, R) / alpha."""
    _check_alpha(alpha)
    fam = sorted(set(family))
    if not fam:
        raise ValueError("family must be nonempty (the empty set is always admissible)")
    for r_mask in fam:
        if r_mask < 0 or r_mask > full_mask(m):
            raise ValueError(f"family member {r_mask} outside subsets of [{m}]")

    def evaluate(mask: int) -> float:
        worst = max(loss.fn(mask, r_mask) for r_mask in fam)
        return max(worst, 0) / alpha

    def build() -> np.ndarray:
        idx = np.arange(1 << m, dtype=np.int64)
        pc = popcount_table(m)
        sizes = pc[idx].astype(np.int64)
        out = np.zeros(1 << m)
        for r_mask in fam:
            inter = pc[idx & r_mask].astype(np.int64)
            if loss.counts_fn is not None:
                lv = loss.counts_fn(inter, sizes, r_mask.bit_count())
            else:
                lv = np.array([loss.fn(int(s), r_mask) for s in idx])
            out = np.maximum(out, np.asarray(lv, dtype=np.float64))
        out /= alpha
        out[0] = np.inf
        return out

    col = ECollection(
        m=m,
        evaluate=evaluate,
        source={"builder": "from_procedure", "family": [int(x) for x in fam],
                "loss": loss.name, "loss_params": loss.params, "alpha": alpha},
    )
    if m <= DENSE_CAP:
        col.evaluate_all = _memoized(build)
    return col


def restrict_feasible(base: ECollection,
                      feasible: Callable[[int], bool]) -> ECollection:
    """Exploit restricted combinations: subsets that cannot be the null set
    evaluate to +inf, which drops their constraints from every closure."""
    prior = base.feasible

    def pred(mask: int) -> bool:
        ok = feasible(mask)
        if prior is not None:
            ok = ok and prior(mask)
        return ok

    def evaluate(mask: int) -> float:
        if not pred(mask):
            return math.inf
        return base.evaluate(mask)

    col = ECollection(
        m=base.m,
        evaluate=evaluate,
        alpha_independent=base.alpha_independent,
        feasible=pred,
        source={"builder": "restricted", "base": base.source},
        order_hint=base.order_hint,
    )
    if base.evaluate_all is not None:

        def build() -> np.ndarray:
            out = base.evaluate_all().copy()
            for mask in range(1, out.shape[0]):
                if not pred(mask):
                    out[mask] = np.inf
            return out

        col.evaluate_all = _memoized(build)
    return col
