"""Polynomial-time membership and largest-set algorithms.

The generic engine walks 2^m subsets; the structured collections admit far
smaller sufficient checks. For mean-type collections the worst case over
all null sets S with |S intersect R| = u and |S \\ R| = q is attained at
the u smallest e-values inside R and the q smallest outside, so membership
reduces to a scan over (u, q) count pairs. For p-monotone collections
(order-dependent calibrations) the worst case keeps the a largest p-values
inside R and b largest outside. Both scans also recover the engine's exact
membership margin because every subset class attains its minimum at the
canonical set.

The scans are quadratic in m rather than the asymptotically fastest known
form: the count-pair objective is not unimodal in u (plateaus and genuine
double dips occur), so search tricks that assume convexity can return
wrong verdicts. Exhaustive pair scans are exact, branch-free, and m is
capped at 64 anyway.

Derived closed-form rules for the step-up and knockoff closures validate
themselves against the count-pair scan on every call and fail loudly on
disagreement; setting ECLOSURE_DEBUG_RULES additionally cross-checks them
against the exhaustive engine at m <= 16.
"""

from __future__ import annotations

import math
import os
from typing import Optional, Sequence, Union

from .core import ComparePolicy, DEFAULT_POLICY, ValueVector, subset_size
from .ecollections import (
    ECollection,
    KnockoffStats,
    knockoff_stats,
    step_up_count,
)
from .engine import MembershipCertificate

__all__ = [
    "ebhbar_member_fast",
    "ebhbar_largest_fast",
    "monotone_member_fast",
    "monotone_largest",
    "closedbh_member_rule",
    "closedadabh_member_rule",
    "closedknockoff_member_rule",
    "eholm_fast",
    "greedy_boundary_ebh",
    "mean_true_discovery_bound",
    "monotone_true_discovery_bound",
    "mean_critical_alpha_fdp",
]

Evalues = Union[ValueVector, Sequence[float]]


def _as_evalues(e_values: Evalues) -> tuple:
    if isinstance(e_values, ValueVector):
        if e_values.kind != "evalue":
            raise ValueError(f"expected e-values, got kind {e_values.kind!r}")
        return e_values.values
    return tuple(e_values)


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")


def _split_sorted(values: tuple, r_mask: int, descending: bool):
    """Indices inside/outside R sorted by value (ties by smallest index),
    plus prefix sums of the sorted values."""
    m = len(values)
    ins, outs = [], []
    for i in range(1, m + 1):
        (ins if (r_mask >> (i - 1)) & 1 else outs).append(i)
    sign = -1 if descending else 1
    ins.sort(key=lambda i: (sign * values[i - 1], i))
    outs.sort(key=lambda i: (sign * values[i - 1], i))

    def prefix(idx):
        acc = [0]
        for i in idx:
            acc.append(acc[-1] + values[i - 1])
        return acc

    return ins, outs, prefix(ins), prefix(outs)


def _prefix_mask(indices: Sequence[int], k: int) -> int:
    mask = 0
    for i in indices[:k]:
        mask |= 1 << (i - 1)
    return mask


def _mean_scan(base: tuple, alpha: float, r_mask: int,
               policy: ComparePolicy) -> MembershipCertificate:
    """Exact FDP membership for the mean collection via the (u, q) pair
    scan: u smallest e-values inside R, q smallest outside."""
    r = subset_size(r_mask)
    if r == 0:
        return MembershipCertificate(True, None, math.inf)
    m = len(base)
    ins, outs, U, T = _split_sorted(base, r_mask, descending=False)
    margin = math.inf
    fail: Optional[tuple[int, int, float]] = None
    for u in range(0, r + 1):
        thr = u / (r * alpha)
        for q in range(0, m - r + 1):
            if u + q == 0:
                continue
            mean = (U[u] + T[q]) / (u + q)
            diff = mean - thr
            if diff < margin:
                margin = diff
            if fail is None and not policy.ge(mean, thr):
                fail = (u, q, float(mean - thr))
    if fail is None:
        return MembershipCertificate(True, None, float(margin))
    u, q, diff = fail
    witness = _prefix_mask(ins, u) | _prefix_mask(outs, q)
    return MembershipCertificate(False, witness, diff)


def ebhbar_member_fast(e_values: Evalues, alpha: float, r_mask: int,
                       policy: ComparePolicy = DEFAULT_POLICY) -> MembershipCertificate:
    """Membership of R in the closed mean collection under FDP, in O(m^2),
    with the engine's exact margin. Agrees with engine.member by the
    canonical-set argument (and by the oracle-equivalence test suite)."""
    _check_alpha(alpha)
    return _mean_scan(_as_evalues(e_values), alpha, r_mask, policy)


def _desc_order(values: tuple) -> list[int]:
    m = len(values)
    return sorted(range(1, m + 1), key=lambda i: (-values[i - 1], i))


def ebhbar_largest_fast(e_values: Evalues, alpha: float,
                        policy: ComparePolicy = DEFAULT_POLICY) -> int:
    """Longest member prefix of the descending e-value order (mask).

    Uniformly improves the base e-value step-up procedure: its rejection
    set is always one of the checked prefixes and passes the scan.
    """
    _check_alpha(alpha)
    base = _as_evalues(e_values)
    order = _desc_order(base)
    for r in range(len(base), 0, -1):
        r_mask = _prefix_mask(order, r)
        if _mean_scan(base, alpha, r_mask, policy).member:
            return r_mask
    return 0


def monotone_member_fast(E: ECollection, p_values: ValueVector, alpha: float,
                         r_mask: int,
                         policy: ComparePolicy = DEFAULT_POLICY) -> MembershipCertificate:
    """Membership under FDP for collections weakly decreasing in every
    p-value, via the canonical worst-case sets: a largest p-values inside R
    union b largest outside, for all (a, b). O(m^2) evaluations."""
    _check_alpha(alpha)
    if not E.monotone_in_p:
        raise ValueError("monotone_member_fast requires monotone_in_p")
    if E.feasible is not None:
        raise ValueError(
            "canonical worst-case sets may be infeasible on a restricted "
            "collection; use the engine"
        )
    if p_values.kind != "pvalue":
        raise ValueError("monotone_member_fast needs p-values")
    r = subset_size(r_mask)
    if r == 0:
        return MembershipCertificate(True, None, math.inf)
    p = p_values.values
    m = E.m
    ins, outs, _, _ = _split_sorted(p, r_mask, descending=True)
    in_masks = [_prefix_mask(ins, a) for a in range(r + 1)]
    out_masks = [_prefix_mask(outs, b) for b in range(m - r + 1)]
    margin = math.inf
    fail: Optional[tuple[int, float]] = None
    for a in range(0, r + 1):
        thr = a / (r * alpha)
        for b in range(0, m - r + 1):
            if a + b == 0:
                continue
            s_mask = in_masks[a] | out_masks[b]
            e = E.evaluate(s_mask)
            if e != math.inf:
                margin = min(margin, e - thr)
            if fail is None and not policy.ge(e, thr):
                fail = (s_mask, float(e - thr))
    if fail is None:
        return MembershipCertificate(True, None, float(margin))
    return MembershipCertificate(False, fail[0], fail[1])


def monotone_largest(E: ECollection, p_values: ValueVector, alpha: float,
                     policy: ComparePolicy = DEFAULT_POLICY) -> int:
    """Longest member prefix of the ascending p-value order (mask)."""
    _check_alpha(alpha)
    p = p_values.values
    m = p_values.m
    order = sorted(range(1, m + 1), key=lambda i: (p[i - 1], i))
    for r in range(m, 0, -1):
        r_mask = _prefix_mask(order, r)
        if monotone_member_fast(E, p_values, alpha, r_mask, policy).member:
            return r_mask
    return 0


def _debug_rules() -> bool:
    return bool(os.environ.get("ECLOSURE_DEBUG_RULES"))


def _indicator_base(m: int, alpha: float, r: int, selected_mask: int) -> tuple:
    weight = m / (alpha * max(r, 1))
    return tuple(weight if (selected_mask >> i) & 1 else 0.0 for i in range(m))


def _step_up_rule(p_values: ValueVector, alpha: float, r_mask: int,
                  policy: ComparePolicy, r: int, selected_mask: int,
                  rule_name: str) -> MembershipCertificate:
    """Shared closed-form rule for step-up closures whose local e-values
    are m/(alpha r) on the r selected hypotheses and 0 elsewhere:

        R member <=> R = empty, or (R subset of selection and
                     m |R| >= r (|R| + m - r)).

    The full count-pair scan runs alongside and any disagreement raises:
    the rule is derived, not assumed.
    """
    m = p_values.m
    size = subset_size(r_mask)
    rule = size == 0 or (
        r_mask & ~selected_mask == 0 and m * size >= r * (size + m - r)
    )
    base = _indicator_base(m, alpha, r, selected_mask)
    cert = _mean_scan(base, alpha, r_mask, policy)
    if cert.member != rule:
        raise AssertionError(
            f"{rule_name}: derived rule says member={rule} but the exact "
            f"scan says {cert.member}; inputs p={p_values.values}, "
            f"alpha={alpha}, R mask={r_mask}"
        )
    if _debug_rules() and m <= 16:
        from . import engine
        from .core import fdp_loss
        from .ecollections import ECollection as _EC

        col = _EC(m=m, evaluate=lambda mask: _mask_mean_of(base, mask),
                  mean_type=True, base_values=base)
        oracle = engine.member(col, fdp_loss(), alpha, r_mask, policy)
        if oracle.member != cert.member:
            raise AssertionError(
                f"{rule_name}: scan disagrees with exhaustive engine on "
                f"p={p_values.values}, alpha={alpha}, R mask={r_mask}"
            )
    return cert


def _mask_mean_of(base: tuple, mask: int) -> float:
    total = 0
    n = 0
    b = mask
    while b:
        low = b & -b
        total += base[low.bit_length() - 1]
        n += 1
        b ^= low
    return total / n


def closedbh_member_rule(p_values: ValueVector, alpha: float, r_mask: int,
                         policy: ComparePolicy = DEFAULT_POLICY) -> MembershipCertificate:
    """Closed-form membership for the closed step-up (BH) collection."""
    _check_alpha(alpha)
    if p_values.kind != "pvalue":
        raise ValueError("closedbh_member_rule needs p-values")
    m = p_values.m
    thresholds = [alpha * i / m for i in range(1, m + 1)]
    r, selected = step_up_count(p_values, thresholds, policy)
    return _step_up_rule(p_values, alpha, r_mask, policy, r, selected,
                         "closed-BH rule")


def closedadabh_member_rule(p_values: ValueVector, alpha: float, lam: float,
                            r_mask: int,
                            policy: ComparePolicy = DEFAULT_POLICY) -> MembershipCertificate:
    """Closed-form membership for the closed adaptive step-up collection;
    same rule as the plain step-up, with the adaptive rejection count."""
    _check_alpha(alpha)
    if p_values.kind != "pvalue":
        raise ValueError("closedadabh_member_rule needs p-values")
    from .ecollections import storey_pi0

    pi0 = storey_pi0(p_values, lam)
    m = p_values.m
    thresholds = [alpha * i / (pi0 * m) for i in range(1, m + 1)]
    r, selected = step_up_count(p_values, thresholds, policy)
    return _step_up_rule(p_values, alpha, r_mask, policy, r, selected,
                         "closed-adaptive-BH rule")


def closedknockoff_member_rule(w_values: ValueVector, alpha: float, r_mask: int,
                               policy: ComparePolicy = DEFAULT_POLICY) -> MembershipCertificate:
    """Closed-form membership for the knockoff closure:

        R member <=> R = empty, or (R subset of the filter's rejection set
                     and alpha |R| >= 1 + f_neg),

    where f_neg counts statistics at or below the negated threshold. The
    certificate's margin is the exact engine margin, computed over the
    count classes (|S ∩ R|, #negatives in S)."""
    _check_alpha(alpha)
    stats = knockoff_stats(w_values, alpha, policy)
    size = subset_size(r_mask)
    if size == 0:
        return MembershipCertificate(True, None, math.inf)
    m = w_values.m
    w = stats.w
    c = stats.c_alpha
    if r_mask & ~stats.rejected:
        rule = False
    else:
        rule = policy.ge(alpha * size, 1 + stats.f_neg)
    neg_mask = 0
    for j, x in enumerate(w):
        if x <= -c:
            neg_mask |= 1 << j
    others = ((1 << m) - 1) & ~stats.rejected & ~neg_mask
    margin = math.inf
    if others:
        margin = 0.0
    for a in range(0, size + 1):
        for g in range(0, stats.f_neg + 1):
            if a + g == 0:
                continue
            margin = min(margin, a / (1 + g) - a / (size * alpha))
    if rule:
        cert = MembershipCertificate(True, None, float(margin))
    elif r_mask & ~stats.rejected:
        outside = r_mask & ~stats.rejected
        witness = outside & -outside
        cert = MembershipCertificate(False, witness, 0.0 - 1 / (size * alpha))
    else:
        witness = r_mask | neg_mask
        e = size / (1 + stats.f_neg)
        cert = MembershipCertificate(False, witness, e - 1 / alpha)
    if _debug_rules() and m <= 16:
        from . import engine
        from .core import fdp_loss
        from .ecollections import knockoff_collection

        col = knockoff_collection(w_values, alpha, policy)
        oracle = engine.member(col, fdp_loss(), alpha, r_mask, policy)
        if oracle.member != cert.member:
            raise AssertionError(
                f"closed-knockoff rule disagrees with exhaustive engine on "
                f"w={w}, alpha={alpha}, R mask={r_mask}"
            )
    return cert


def eholm_fast(e_values: Evalues, alpha: float,
               policy: ComparePolicy = DEFAULT_POLICY) -> int:
    """Familywise-valid rejections from the mean closure: i is rejected
    when every augmented average (e_i plus the k smallest competitors,
    divided by k + 1) clears 1/alpha. One sort plus prefix sums."""
    _check_alpha(alpha)
    base = _as_evalues(e_values)
    m = len(base)
    order = sorted(range(m), key=lambda j: (base[j], j))
    pos = {j: idx for idx, j in enumerate(order)}
    prefix = [0]
    for j in order:
        prefix.append(prefix[-1] + base[j])
    target = 1.0 / alpha
    out = 0
    for j in range(m):
        ok = True
        for k in range(0, m):
            if pos[j] >= k:
                others = prefix[k]
            else:
                others = prefix[k + 1] - base[j]
            if not policy.ge((base[j] + others) / (k + 1), target):
                ok = False
                break
        if ok:
            out |= 1 << j
    return out


def mean_true_discovery_bound(e_values: Evalues, alpha: float, r_mask: int,
                              policy: ComparePolicy = DEFAULT_POLICY) -> int:
    """True-discovery bound for the mean collection without enumerating
    subsets: for each count d of dropped R-members, the smallest mean over
    sets keeping r - d inside members is attained keeping the d largest
    values out and averaging in the q smallest outside values."""
    _check_alpha(alpha)
    base = _as_evalues(e_values)
    r = subset_size(r_mask)
    m = len(base)
    target = 1.0 / alpha
    ins, _, U, T = _split_sorted(base, r_mask, descending=False)
    for d in range(0, r + 1):
        keep = r - d
        kept_sum = U[keep]
        for q in range(0, m - r + 1):
            if keep + q == 0:
                continue
            mean = (kept_sum + T[q]) / (keep + q)
            if not policy.ge(mean, target):
                return d
    return r


def monotone_true_discovery_bound(E: ECollection, p_values: ValueVector,
                                  alpha: float, r_mask: int,
                                  policy: ComparePolicy = DEFAULT_POLICY) -> int:
    """True-discovery bound for p-monotone collections: the smallest
    evaluation keeping r - d inside members keeps those with the largest
    p-values and adds the b largest outside."""
    _check_alpha(alpha)
    if not E.monotone_in_p or E.feasible is not None:
        raise ValueError("monotone_true_discovery_bound needs an "
                         "unrestricted p-monotone collection")
    p = p_values.values
    r = subset_size(r_mask)
    m = E.m
    target = 1.0 / alpha
    ins, outs, _, _ = _split_sorted(p, r_mask, descending=True)
    in_masks = [_prefix_mask(ins, a) for a in range(r + 1)]
    out_masks = [_prefix_mask(outs, b) for b in range(m - r + 1)]
    for d in range(0, r + 1):
        keep_mask = in_masks[r - d]
        for b in range(0, m - r + 1):
            s_mask = keep_mask | out_masks[b]
            if s_mask == 0:
                continue
            if not policy.ge(E.evaluate(s_mask), target):
                return d
    return r


def mean_critical_alpha_fdp(e_values: Evalues, r_mask: int) -> float:
    """Critical level for the mean collection under the false discovery
    proportion: max over count pairs of (u/r)/mean at the canonical set,
    with 0/0 = 0 and positive/0 = +inf."""
    base = _as_evalues(e_values)
    r = subset_size(r_mask)
    if r == 0:
        return 0.0
    m = len(base)
    _, _, U, T = _split_sorted(base, r_mask, descending=False)
    crit = 0.0
    for u in range(1, r + 1):
        for q in range(0, m - r + 1):
            mean = (U[u] + T[q]) / (u + q)
            if mean == 0:
                return math.inf
            crit = max(crit, (u / r) / mean)
    return float(crit)


def greedy_boundary_ebh(k: int, m: int, alpha: float) -> ValueVector:
    """Minimal descending e-value profile whose top-k prefix is a member
    of the closed mean collection, zeros below rank k.

    Built greedily from rank k upward: each rank takes the smallest value
    keeping every suffix-sum constraint satisfied. The constraint for the
    suffix starting at rank j (c = k - j + 1 values) is
    sum >= c (c + m - k) / (k alpha), from the worst-case null set holding
    the c smallest prefix values plus all m - k zeros.
    """
    _check_alpha(alpha)
    if not 1 <= k <= m:
        raise ValueError(f"k must lie in 1..m, got k={k}, m={m}")
    values = [0.0] * m
    tail = 0.0
    prev = 0.0
    for j in range(k, 0, -1):
        c = k - j + 1
        req = c * (c + m - k) / (k * alpha)
        v = max(req - tail, prev)
        values[j - 1] = v
        tail += v
        prev = v
    return ValueVector(kind="evalue", values=tuple(values))
