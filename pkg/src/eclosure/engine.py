"""Reference closure engine: exhaustive quantification over null sets.

Everything here is defined for arbitrary collections and losses by walking
all nonempty subsets S, so it doubles as the ground-truth oracle for the
structured fast paths in the shortcuts module. A candidate set R is a
member when e_S >= loss(S, R)/alpha for every nonempty feasible S; the
empty set is always a member.

Subsets are bitmasks walked in increasing integer order, so the reported
witness (first violating S) is the violating subset with the smallest
mask, deterministically. Collections built at small m carry a vectorised
``evaluate_all`` hook and the engine switches to a numpy sweep; both paths
produce identical verdicts and witnesses.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import ComparePolicy, DEFAULT_POLICY, LossFunction, subset_size
from .ecollections import ECollection, collection_fingerprint, popcount_table

__all__ = [
    "CapExceededError",
    "MembershipCertificate",
    "AuditStep",
    "PostHocAudit",
    "member",
    "enumerate_collection",
    "largest_member",
    "true_discovery_bound",
    "critical_alpha",
    "fwer_reject_set",
    "audit_post_hoc",
]

MEMBER_CAP = 24
ENUMERATE_CAP = 20


class CapExceededError(ValueError):
    """Raised when m exceeds the exhaustive-enumeration budget."""


def _cap(default: int) -> int:
    env = os.environ.get("ECLOSURE_ENUM_CAP")
    if env:
        return int(env)
    return default


def _require_cap(m: int, default: int, op: str) -> None:
    cap = _cap(default)
    if m > cap:
        raise CapExceededError(
            f"{op} enumerates 2^m subsets and is capped at m <= {cap}; "
            f"got m = {m}. Use the shortcuts module for structured "
            f"collections, or set ECLOSURE_ENUM_CAP to raise the cap."
        )


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")


def _eval(E: ECollection, mask: int) -> float:
    if E.feasible is not None and not E.feasible(mask):
        return math.inf
    return E.evaluate(mask)


@dataclass(frozen=True)
class MembershipCertificate:
    """Outcome of one closure check.

    ``witness`` is a violating subset mask when member is false (the one
    with the smallest mask). ``margin`` is min over nonempty feasible S of
    e_S - loss(S, R)/alpha when member is true (+inf for R = empty, where
    nothing binds); when member is false it is the slack at the witness,
    which is negative beyond comparison tolerance.
    """

    member: bool
    witness: Optional[int]
    margin: float

    def to_dict(self) -> dict:
        from .core import indices_from_mask

        return {
            "member": self.member,
            "witness": None if self.witness is None else list(indices_from_mask(self.witness)),
            "margin": float(self.margin),
        }


def _ge_array(policy: ComparePolicy, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ok = a >= b
    if policy.mode == "exact":
        return ok
    diff = b - a
    with np.errstate(invalid="ignore"):
        tol = policy.eps * np.maximum(np.maximum(np.abs(a), np.abs(b)), 1.0)
        near = diff <= tol
    near &= np.isfinite(diff)
    return ok | near


def _loss_over_all(loss: LossFunction, m: int, r_mask: int) -> np.ndarray:
    idx = np.arange(1 << m, dtype=np.int64)
    pc = popcount_table(m)
    if loss.counts_fn is not None:
        inter = pc[idx & r_mask].astype(np.int64)
        vals = loss.counts_fn(inter, pc[idx].astype(np.int64), r_mask.bit_count())
        return np.asarray(vals, dtype=np.float64)
    return np.array([loss.fn(int(s), r_mask) for s in idx], dtype=np.float64)


def _member_dense(E: ECollection, loss: LossFunction, alpha: float, r_mask: int,
                  policy: ComparePolicy) -> MembershipCertificate:
    e_all = E.evaluate_all()
    req = _loss_over_all(loss, E.m, r_mask) / alpha
    ok = _ge_array(policy, e_all, req)
    ok[0] = True
    if not ok.all():
        witness = int(np.argmin(ok))
        return MembershipCertificate(False, witness, float(e_all[witness] - req[witness]))
    diff = e_all - req
    diff[np.isnan(diff)] = np.inf
    diff[0] = np.inf
    return MembershipCertificate(True, None, float(diff.min()))


def member(E: ECollection, loss: LossFunction, alpha: float, r_mask: int,
           policy: ComparePolicy = DEFAULT_POLICY) -> MembershipCertificate:
    """Check e_S >= loss(S, R)/alpha over every nonempty feasible S."""
    _check_alpha(alpha)
    if r_mask == 0:
        return MembershipCertificate(True, None, math.inf)
    _require_cap(E.m, MEMBER_CAP, "member")
    if E.evaluate_all is not None:
        return _member_dense(E, loss, alpha, r_mask, policy)
    margin = math.inf
    for s_mask in range(1, 1 << E.m):
        e = _eval(E, s_mask)
        req = loss.fn(s_mask, r_mask) / alpha
        if not policy.ge(e, req):
            return MembershipCertificate(False, s_mask, float(e - req))
        if e != math.inf:
            margin = min(margin, e - req)
    return MembershipCertificate(True, None, float(margin))


def enumerate_collection(E: ECollection, loss: LossFunction, alpha: float,
                         policy: ComparePolicy = DEFAULT_POLICY) -> tuple[int, ...]:
    """All member masks, ascending; always contains 0 (the empty set)."""
    _check_alpha(alpha)
    _require_cap(E.m, ENUMERATE_CAP, "enumerate_collection")
    out = [0]
    if E.evaluate_all is not None:
        e_all = E.evaluate_all()
        for r_mask in range(1, 1 << E.m):
            req = _loss_over_all(loss, E.m, r_mask) / alpha
            ok = _ge_array(policy, e_all, req)
            ok[0] = True
            if ok.all():
                out.append(r_mask)
        return tuple(out)
    for r_mask in range(1, 1 << E.m):
        if member(E, loss, alpha, r_mask, policy).member:
            out.append(r_mask)
    return tuple(out)


def _prefix_masks(ordering: Sequence[int]) -> list[int]:
    masks = []
    acc = 0
    for i in ordering:
        acc |= 1 << (i - 1)
        masks.append(acc)
    return masks


def largest_member(E: ECollection, loss: LossFunction, alpha: float,
                   ordering: Optional[Sequence[int]] = None,
                   exhaustive: bool = False,
                   policy: ComparePolicy = DEFAULT_POLICY) -> int:
    """Longest member prefix of the evidence ordering (mask), or with
    ``exhaustive`` the global argmax-cardinality member.

    The default ordering is the collection's order hint (descending
    evidence, ties by smallest index). Exhaustive mode scans every subset
    and breaks cardinality ties by smallest mask.
    """
    _check_alpha(alpha)
    if exhaustive:
        best = 0
        for r_mask in enumerate_collection(E, loss, alpha, policy):
            if subset_size(r_mask) > subset_size(best):
                best = r_mask
        return best
    if ordering is None:
        ordering = E.order_hint or tuple(range(1, E.m + 1))
    if sorted(ordering) != list(range(1, E.m + 1)):
        raise ValueError("ordering must be a permutation of 1..m")
    for r_mask in reversed(_prefix_masks(ordering)):
        if member(E, loss, alpha, r_mask, policy).member:
            return r_mask
    return 0


def true_discovery_bound(E: ECollection, alpha: float, r_mask: int,
                         policy: ComparePolicy = DEFAULT_POLICY) -> int:
    """Simultaneous lower confidence bound on |R intersect non-nulls|:
    min |R \\ S| over nonempty feasible S with e_S < 1/alpha, and |R| when
    no subset falls below the closure threshold.

    Mean-type and p-monotone collections delegate to the exact canonical
    scans in shortcuts (no subset cap); everything else is exhaustive."""
    _check_alpha(alpha)
    if E.feasible is None:
        if E.mean_type and E.base_values is not None:
            from .shortcuts import mean_true_discovery_bound

            return mean_true_discovery_bound(E.base_values, alpha, r_mask,
                                             policy)
        if E.monotone_in_p and "p" in E.source:
            from .core import ValueVector
            from .shortcuts import monotone_true_discovery_bound

            p = ValueVector(kind="pvalue", values=tuple(E.source["p"]))
            return monotone_true_discovery_bound(E, p, alpha, r_mask, policy)
    _require_cap(E.m, MEMBER_CAP, "true_discovery_bound")
    target = 1.0 / alpha
    if E.evaluate_all is not None:
        e_all = E.evaluate_all()
        ok = _ge_array(policy, e_all, np.full_like(e_all, target))
        ok[0] = True
        if ok.all():
            return subset_size(r_mask)
        pc = popcount_table(E.m)
        masks = np.nonzero(~ok)[0]
        return int(pc[(~masks) & r_mask].min())
    bound = subset_size(r_mask)
    for s_mask in range(1, 1 << E.m):
        if bound == 0:
            break
        if not policy.ge(_eval(E, s_mask), target):
            bound = min(bound, subset_size(r_mask & ~s_mask))
    return bound


def critical_alpha(E: ECollection, loss: LossFunction, r_mask: int,
                   policy: ComparePolicy = DEFAULT_POLICY) -> float:
    """Smallest level at which R is a member: max over nonempty feasible S
    of loss(S, R)/e_S with 0/0 = 0 and x/0 = +inf for x > 0.

    Only meaningful when the collection does not bake in a level, hence the
    alpha_independent requirement; R is a member at alpha exactly when
    alpha >= the returned value (boundary inclusive under the policy).
    """
    if not E.alpha_independent:
        raise ValueError(
            "critical_alpha requires an alpha-independent collection; this "
            "one bakes the level into its e-values"
        )
    if r_mask == 0:
        return 0.0
    if (loss.name == "fdp" and E.mean_type and E.base_values is not None
            and E.feasible is None):
        from .shortcuts import mean_critical_alpha_fdp

        return mean_critical_alpha_fdp(E.base_values, r_mask)
    _require_cap(E.m, MEMBER_CAP, "critical_alpha")
    if E.evaluate_all is not None:
        e_all = E.evaluate_all()
        lv = _loss_over_all(loss, E.m, r_mask)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(lv <= 0.0, 0.0,
                             np.where(e_all == 0.0, np.inf, lv / e_all))
        ratio[0] = 0.0
        return float(ratio.max())
    crit = 0.0
    for s_mask in range(1, 1 << E.m):
        lv = loss.fn(s_mask, r_mask)
        if lv <= 0:
            continue
        e = _eval(E, s_mask)
        if e == 0:
            return math.inf
        crit = max(crit, lv / e)
    return float(crit)


def fwer_reject_set(E: ECollection, alpha: float,
                    policy: ComparePolicy = DEFAULT_POLICY) -> int:
    """Mask of hypotheses whose singletons are members under FDP loss,
    i.e. the familywise-valid rejection set implied by the closure.

    Mean-type collections route through the quadratic-time e-Holm
    equivalent; everything else is checked exhaustively.
    """
    _check_alpha(alpha)
    if E.mean_type and E.base_values is not None and E.feasible is None:
        from .shortcuts import eholm_fast

        return eholm_fast(E.base_values, alpha, policy)
    from .core import fdp_loss

    loss = fdp_loss()
    if E.monotone_in_p and E.feasible is None and "p" in E.source:
        from .core import ValueVector
        from .shortcuts import monotone_member_fast

        p = ValueVector(kind="pvalue", values=tuple(E.source["p"]))
        out = 0
        for i in range(E.m):
            if monotone_member_fast(E, p, alpha, 1 << i, policy).member:
                out |= 1 << i
        return out
    out = 0
    for i in range(E.m):
        if member(E, loss, alpha, 1 << i, policy).member:
            out |= 1 << i
    return out


@dataclass(frozen=True)
class AuditStep:
    loss: LossFunction
    alpha: float
    r_mask: int
    certificate: MembershipCertificate


@dataclass(frozen=True)
class PostHocAudit:
    """Trail of membership checks against one fixed collection.

    The fingerprint ties every step to the same collection source, so a
    reviewer can verify that losses and levels were switched post hoc
    without rebuilding the evidence.
    """

    steps: tuple[AuditStep, ...]
    fingerprint: str

    @property
    def passed(self) -> bool:
        return all(s.certificate.member for s in self.steps)


def audit_post_hoc(E: ECollection, steps: Sequence[tuple[LossFunction, float, int]],
                   policy: ComparePolicy = DEFAULT_POLICY) -> PostHocAudit:
    """Run membership for each (loss, alpha, R) step against one collection.

    Steps at different levels are only sound when the collection is
    alpha-independent; mixing levels on a level-baked collection raises.
    """
    alphas = {a for _, a, _ in steps}
    if len(alphas) > 1 and not E.alpha_independent:
        raise ValueError(
            "steps use multiple alpha levels but the collection is not "
            "alpha-independent"
        )
    done = tuple(
        AuditStep(loss, a, r, member(E, loss, a, r, policy))
        for loss, a, r in steps
    )
    return PostHocAudit(steps=done, fingerprint=collection_fingerprint(E))
