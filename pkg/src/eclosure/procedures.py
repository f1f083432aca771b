"""Classical baseline procedures and their closed counterparts.

Each classical procedure is a one-call step-up or threshold rule; each
closed counterpart builds the matching e-collection and returns the
longest member prefix of the evidence ordering, which provably contains
the classical rejection set. The collection handle on closed results is
what the session service keeps around for post hoc membership queries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .calibrators import harmonic_number, su_level_factor
from .core import (
    ComparePolicy,
    DEFAULT_POLICY,
    LossFunction,
    ValueVector,
    fdp_loss,
    subset_size,
)
from .ecollections import (
    ECollection,
    bh_collection,
    by_collection,
    knockoff_collection,
    knockoff_stats,
    mean_collection,
    step_up_count,
    storey_adabh_collection,
    storey_pi0,
    su_collection,
)
from . import engine
from . import shortcuts

__all__ = [
    "ProcedureResult",
    "CLASSICAL_METHODS",
    "CLOSED_METHODS",
    "METHOD_SPECS",
    "ebh",
    "ma_ebh",
    "bh",
    "by",
    "su",
    "storey_bh",
    "knockoff_filter",
    "closed_variant",
    "collection_member",
]

CLASSICAL_METHODS = ("eBH", "maEBH", "BH", "BY", "Su", "StoreyBH", "Knockoff")
CLOSED_METHODS = ("closed-eBH", "closed-BY", "closed-Su", "closed-BH",
                  "closed-adaBH", "closed-Knockoff", "eHolm")

# cli/service token -> (method name, input kind, closed?, needs lambda?)
METHOD_SPECS = {
    "ebh": ("eBH", "evalue", False, False),
    "ma-ebh": ("maEBH", "evalue", False, False),
    "bh": ("BH", "pvalue", False, False),
    "by": ("BY", "pvalue", False, False),
    "su": ("Su", "pvalue", False, False),
    "storey-bh": ("StoreyBH", "pvalue", False, True),
    "knockoff": ("Knockoff", "knockoff_stat", False, False),
    "closed-ebh": ("closed-eBH", "evalue", True, False),
    "closed-by": ("closed-BY", "pvalue", True, False),
    "closed-su": ("closed-Su", "pvalue", True, False),
    "closed-bh": ("closed-BH", "pvalue", True, False),
    "closed-adabh": ("closed-adaBH", "pvalue", True, True),
    "closed-knockoff": ("closed-Knockoff", "knockoff_stat", True, False),
    "eholm": ("eHolm", "evalue", True, False),
}


@dataclass
class ProcedureResult:
    """Outcome of one procedure run.

    ``rejected`` is a bitmask; ``collection`` is set on closed methods so
    callers can keep querying the same evidence; ``diagnostics`` carries
    the method's internal thresholds (r, c_alpha, pi0, ell, ...).
    """

    method: str
    rejected: int
    alpha: float
    m: int
    diagnostics: dict = field(default_factory=dict)
    collection: Optional[ECollection] = None

    def to_dict(self) -> dict:
        from .core import indices_from_mask

        return {
            "method": self.method,
            "alpha": self.alpha,
            "m": self.m,
            "rejected": list(indices_from_mask(self.rejected)),
            "diagnostics": {k: v for k, v in self.diagnostics.items()},
        }


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")


def _top_mask(values: tuple, r: int) -> int:
    order = sorted(range(len(values)), key=lambda j: (-values[j], j))
    mask = 0
    for j in order[:r]:
        mask |= 1 << j
    return mask


def ebh(e_values: ValueVector, alpha: float,
        policy: ComparePolicy = DEFAULT_POLICY) -> ProcedureResult:
    """e-value step-up: reject the top r with r = max{r : r e_(r) >= m/alpha}."""
    _check_alpha(alpha)
    if e_values.kind != "evalue":
        raise ValueError("ebh needs e-values")
    e = e_values.values
    m = e_values.m
    desc = sorted(e, reverse=True)
    r = 0
    for i in range(m, 0, -1):
        if policy.ge(i * desc[i - 1], m / alpha):
            r = i
            break
    return ProcedureResult("eBH", _top_mask(e, r), alpha, m, {"r": r})


def ma_ebh(e_values: ValueVector, alpha: float,
           policy: ComparePolicy = DEFAULT_POLICY) -> ProcedureResult:
    """Minimally adaptive e-value step-up: when the overall mean strictly
    exceeds 1/alpha, reject the top r with e_(r) >= (m-1)/(alpha r);
    otherwise reject nothing."""
    _check_alpha(alpha)
    if e_values.kind != "evalue":
        raise ValueError("ma_ebh needs e-values")
    e = e_values.values
    m = e_values.m
    r = 0
    if policy.gt(sum(e) / m, 1.0 / alpha):
        desc = sorted(e, reverse=True)
        for i in range(m, 0, -1):
            if policy.ge(desc[i - 1], (m - 1) / (alpha * i)):
                r = i
                break
    return ProcedureResult("maEBH", _top_mask(e, r), alpha, m, {"r": r})


def _step_up_result(method: str, p_values: ValueVector, alpha: float,
                    thresholds: list, policy: ComparePolicy,
                    diagnostics: dict) -> ProcedureResult:
    r, mask = step_up_count(p_values, thresholds, policy)
    diagnostics = {"r": r, **diagnostics}
    return ProcedureResult(method, mask, alpha, p_values.m, diagnostics)


def bh(p_values: ValueVector, alpha: float,
       policy: ComparePolicy = DEFAULT_POLICY) -> ProcedureResult:
    """Step-up at p_(i) <= alpha i / m."""
    _check_alpha(alpha)
    m = p_values.m
    return _step_up_result("BH", p_values, alpha,
                           [alpha * i / m for i in range(1, m + 1)],
                           policy, {})


def by(p_values: ValueVector, alpha: float,
       policy: ComparePolicy = DEFAULT_POLICY) -> ProcedureResult:
    """Step-up at p_(i) <= alpha i / (m h_m), valid under any dependence."""
    _check_alpha(alpha)
    m = p_values.m
    hm = harmonic_number(m)
    return _step_up_result("BY", p_values, alpha,
                           [alpha * i / (m * hm) for i in range(1, m + 1)],
                           policy, {"h_m": hm})


def su(p_values: ValueVector, alpha: float,
       policy: ComparePolicy = DEFAULT_POLICY) -> ProcedureResult:
    """Step-up at level alpha/ell_alpha, valid under positive dependence
    including the Simes configurations the plain step-up misses."""
    _check_alpha(alpha)
    m = p_values.m
    ell = su_level_factor(alpha)
    return _step_up_result("Su", p_values, alpha,
                           [(alpha / ell) * i / m for i in range(1, m + 1)],
                           policy, {"ell": ell})


def storey_bh(p_values: ValueVector, alpha: float, lam: float,
              policy: ComparePolicy = DEFAULT_POLICY) -> ProcedureResult:
    """Adaptive step-up at p_(i) <= alpha i / (pi0 m) with the
    leave-one-out null-proportion estimate at threshold lambda."""
    _check_alpha(alpha)
    pi0 = storey_pi0(p_values, lam)
    m = p_values.m
    return _step_up_result("StoreyBH", p_values, alpha,
                           [alpha * i / (pi0 * m) for i in range(1, m + 1)],
                           policy, {"pi0": pi0, "lambda": lam})


def knockoff_filter(w_values: ValueVector, alpha: float,
                    policy: ComparePolicy = DEFAULT_POLICY) -> ProcedureResult:
    """Knockoff threshold rule: c_alpha and the set {i : w_i >= c_alpha}."""
    _check_alpha(alpha)
    stats = knockoff_stats(w_values, alpha, policy)
    return ProcedureResult("Knockoff", stats.rejected, alpha, w_values.m,
                           {"c_alpha": stats.c_alpha, "f_neg": stats.f_neg})


def closed_variant(method: str, values: ValueVector, alpha: float,
                   lam: Optional[float] = None, exhaustive: bool = False,
                   policy: ComparePolicy = DEFAULT_POLICY) -> ProcedureResult:
    """Build the collection for a closed method and return its largest
    member as the rejection set, with the collection attached.

    ``exhaustive`` switches from the prefix search to the engine's global
    argmax-cardinality scan (subset-enumeration cap applies).
    """
    _check_alpha(alpha)
    if method not in CLOSED_METHODS:
        raise ValueError(f"unknown closed method {method!r}; "
                         f"expected one of {CLOSED_METHODS}")
    diagnostics: dict = {}
    if method in ("closed-eBH", "eHolm"):
        col = mean_collection(values)
        if method == "eHolm":
            rejected = shortcuts.eholm_fast(values, alpha, policy)
        else:
            rejected = shortcuts.ebhbar_largest_fast(values, alpha, policy)
    elif method == "closed-BY":
        col = by_collection(values, alpha)
        rejected = shortcuts.monotone_largest(col, values, alpha, policy)
        diagnostics["h_m"] = harmonic_number(values.m)
    elif method == "closed-Su":
        col = su_collection(values, alpha)
        rejected = shortcuts.monotone_largest(col, values, alpha, policy)
        diagnostics["ell"] = su_level_factor(alpha)
    elif method == "closed-BH":
        col = bh_collection(values, alpha, policy)
        rejected = shortcuts.ebhbar_largest_fast(col.base_values, alpha, policy)
        diagnostics["r"] = col.source["r"]
    elif method == "closed-adaBH":
        if lam is None:
            raise ValueError("closed-adaBH needs lambda")
        col = storey_adabh_collection(values, alpha, lam, policy)
        rejected = shortcuts.ebhbar_largest_fast(col.base_values, alpha, policy)
        diagnostics["r"] = col.source["r"]
        diagnostics["pi0"] = col.source["pi0"]
        diagnostics["lambda"] = lam
    else:  # closed-Knockoff
        col = knockoff_collection(values, alpha, policy)
        stats = knockoff_stats(values, alpha, policy)
        cert = shortcuts.closedknockoff_member_rule(values, alpha,
                                                    stats.rejected, policy)
        rejected = stats.rejected if cert.member else 0
        diagnostics["c_alpha"] = stats.c_alpha
        diagnostics["f_neg"] = stats.f_neg
    if exhaustive:
        if method == "eHolm":
            rejected = engine.fwer_reject_set(col, alpha, policy)
        else:
            rejected = engine.largest_member(col, fdp_loss(), alpha,
                                             exhaustive=True, policy=policy)
    diagnostics.setdefault("r", subset_size(rejected))
    return ProcedureResult(method, rejected, alpha, values.m, diagnostics,
                           collection=col)


def collection_member(E: ECollection, loss: LossFunction, alpha: float,
                      r_mask: int,
                      policy: ComparePolicy = DEFAULT_POLICY) -> engine.MembershipCertificate:
    """Membership via the fastest sound path for this collection and loss.

    FDP-loss queries on structured collections route to the quadratic
    scans; everything else goes to the exhaustive engine (cap applies).
    """
    if loss.name == "fdp" and E.feasible is None:
        if E.mean_type and E.base_values is not None:
            return shortcuts.ebhbar_member_fast(E.base_values, alpha, r_mask,
                                                policy)
        if E.monotone_in_p and "p" in E.source:
            p = ValueVector(kind="pvalue", values=tuple(E.source["p"]))
            return shortcuts.monotone_member_fast(E, p, alpha, r_mask, policy)
        if E.source.get("builder") == "knockoff" and alpha == E.source["alpha"]:
            # The derived rule couples the filter threshold and the closure
            # level; at any other level the exhaustive check decides.
            w = ValueVector(kind="knockoff_stat",
                            values=tuple(E.source["w"]))
            return shortcuts.closedknockoff_member_rule(w, alpha, r_mask,
                                                        policy)
    return engine.member(E, loss, alpha, r_mask, policy)
