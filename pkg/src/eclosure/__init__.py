"""Closed multiple testing with e-values.

Build an e-collection from per-hypothesis evidence, then treat error
control as membership: a set R of rejections is admissible at level alpha
exactly when every candidate null set S satisfies e_S >= loss(S, R)/alpha.
Membership certificates, uniform improvements of the classical step-up
procedures, post hoc switches of loss and level, and an auditable session
service all fall out of that one quantifier.
"""

from .core import (
    ComparePolicy,
    DEFAULT_POLICY,
    LossFunction,
    ValueVector,
    aer_loss,
    fdp_loss,
    fdx_loss,
    full_mask,
    indices_from_mask,
    kfwer_loss,
    loss_from_dict,
    loss_to_dict,
    mask_from_indices,
    pfer_loss,
    ratio_to_expectation_loss,
    rejection_count,
    subset_size,
)
from .calibrators import (
    by_calibrate,
    harmonic_number,
    lambert_w_minus1,
    simes_p,
    su_calibrate,
    su_level_factor,
)
from .ecollections import (
    ECollection,
    KnockoffStats,
    bh_collection,
    by_collection,
    collection_fingerprint,
    compound_to_collection,
    from_procedure_collection,
    knockoff_collection,
    knockoff_stats,
    mean_collection,
    product_collection,
    restrict_feasible,
    step_up_count,
    storey_adabh_collection,
    storey_pi0,
    su_collection,
)
from .engine import (
    CapExceededError,
    MembershipCertificate,
    PostHocAudit,
    audit_post_hoc,
    critical_alpha,
    enumerate_collection,
    fwer_reject_set,
    largest_member,
    member,
    true_discovery_bound,
)
from .shortcuts import (
    ebhbar_largest_fast,
    ebhbar_member_fast,
    eholm_fast,
    greedy_boundary_ebh,
    monotone_largest,
    monotone_member_fast,
)
from .procedures import (
    ProcedureResult,
    bh,
    by,
    closed_variant,
    collection_member,
    ebh,
    knockoff_filter,
    ma_ebh,
    storey_bh,
    su,
)
from .randomization import (
    RoundingSource,
    TruncationGrid,
    boost_factor,
    stochastic_round,
    truncate,
    truncation_grid,
)

__version__ = "0.1.0"
