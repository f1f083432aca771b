"""Every e-collection builder against direct formula oracles and worked values."""

import itertools
import math
import random

import pytest

from eclosure import (
    ValueVector,
    bh_collection,
    by_collection,
    compound_to_collection,
    fdp_loss,
    from_procedure_collection,
    full_mask,
    indices_from_mask,
    knockoff_collection,
    knockoff_stats,
    mask_from_indices,
    mean_collection,
    product_collection,
    restrict_feasible,
    step_up_count,
    storey_adabh_collection,
    storey_pi0,
    su_collection,
)
from eclosure.calibrators import by_calibrate, su_calibrate, su_level_factor
from eclosure.ecollections import collection_fingerprint
from conftest import (
    brute_largest,
    brute_member,
    fdp_set,
    rand_evalues,
    rand_pvalues,
    rand_wvalues,
    stepup_oracle,
)


def all_nonempty_masks(m):
    return range(1, 1 << m)


def dense_matches_scalar(col, rel=1e-12):
    """The vectorized table and the per-mask evaluator must agree everywhere."""
    assert col.evaluate_all is not None
    table = col.evaluate_all()
    assert table.shape == (1 << col.m,)
    for mask in all_nonempty_masks(col.m):
        a, b = float(table[mask]), col.evaluate(mask)
        if math.isinf(a) or math.isinf(b):
            assert a == b
        else:
            assert a == pytest.approx(b, rel=rel, abs=1e-15)


# ---------------------------------------------------------------------------
# Mean collection
# ---------------------------------------------------------------------------

def test_mean_worked_values():
    alpha = 0.05
    col = mean_collection(ValueVector("evalue", (2 / alpha, 0.5 / alpha, 0.5 / alpha)))
    assert col.evaluate(mask_from_indices([2, 3], 3)) == pytest.approx(10.0)
    assert col.evaluate(mask_from_indices([1], 3)) == pytest.approx(40.0)
    e20 = tuple(41.0 - 2 * i for i in range(1, 21))
    col20 = mean_collection(ValueVector("evalue", e20))
    assert col20.evaluate(full_mask(20)) == pytest.approx(20.0)


def test_mean_flags_and_formula(rng):
    e = rand_evalues(rng, 7)
    col = mean_collection(e)
    assert col.alpha_independent and col.mean_type
    assert col.base_values == e.values
    for mask in all_nonempty_masks(7):
        idx = indices_from_mask(mask)
        direct = math.fsum(e.values[i - 1] for i in idx) / len(idx)
        assert col.evaluate(mask) == pytest.approx(direct, rel=1e-12)
    dense_matches_scalar(col)


def test_mean_integer_inputs_stay_exact():
    col = mean_collection(ValueVector("evalue", (1, 2)))
    assert col.evaluate(0b11) == 1.5


def test_mean_with_infinite_entry():
    col = mean_collection(ValueVector("evalue", (math.inf, 1.0)))
    assert col.evaluate(0b11) == math.inf
    assert col.evaluate(0b10) == 1.0


# ---------------------------------------------------------------------------
# Product collection
# ---------------------------------------------------------------------------

def test_product_worked_values():
    col = product_collection(ValueVector("evalue", (2.0, 3.0)))
    assert col.evaluate(0b11) == pytest.approx(6.0)
    assert col.evaluate(0b01) == pytest.approx(2.0)
    assert col.alpha_independent


def test_product_zero_absorbs_and_overflow_saturates():
    col = product_collection(ValueVector("evalue", (0.0, 5.0, 1e300, 1e300)))
    assert col.evaluate(0b1111) == 0.0
    assert col.evaluate(0b1100) == math.inf  # 1e600 overflows to +inf
    dense_matches_scalar(col)


def test_product_matches_direct_product(rng):
    vals = [rng.expovariate(1.0) + 0.01 for _ in range(8)]
    col = product_collection(ValueVector("evalue", vals))
    for mask in all_nonempty_masks(8):
        direct = math.prod(vals[i - 1] for i in indices_from_mask(mask))
        assert col.evaluate(mask) == pytest.approx(direct, rel=1e-10)


# ---------------------------------------------------------------------------
# BY collection
# ---------------------------------------------------------------------------

def test_by_singletons_and_support():
    alpha = 0.05
    p = ValueVector("pvalue", (0.3, 0.01, 0.06))
    col = by_collection(p, alpha)
    assert col.monotone_in_p
    assert col.evaluate(0b001) == 0.0  # p=0.3 > alpha never rejects alone
    assert col.evaluate(0b010) == pytest.approx(by_calibrate(0.01, 1, alpha))
    assert by_collection(ValueVector("pvalue", (0.0,)), alpha).evaluate(1) == \
        pytest.approx(1 / alpha)


def test_by_worked_instance_clears_threshold():
    alpha = 0.05
    p = ValueVector("pvalue", (0.012, 0.018, 0.024, 0.027))
    col = by_collection(p, alpha)
    assert col.evaluate(full_mask(4)) >= 1 / alpha - 1e-9


def test_by_mean_of_calibrators(rng):
    alpha = 0.1
    p = rand_pvalues(rng, 7)
    col = by_collection(p, alpha)
    for mask in all_nonempty_masks(7):
        idx = indices_from_mask(mask)
        k = len(idx)
        direct = math.fsum(by_calibrate(p.values[i - 1], k, alpha) for i in idx) / k
        assert col.evaluate(mask) == pytest.approx(direct, rel=1e-12, abs=1e-15)
    dense_matches_scalar(col)


# ---------------------------------------------------------------------------
# Su collection
# ---------------------------------------------------------------------------

def su_fixture(alpha=0.05):
    ell = su_level_factor(alpha)
    m = 3
    return ValueVector("pvalue",
                       (alpha / (m * ell), 3 * alpha / (2 * ell), 3 * alpha / (2 * ell)))


def test_su_worked_values():
    alpha = 0.05
    p = su_fixture(alpha)
    col = su_collection(p, alpha)
    for mask in all_nonempty_masks(3):
        if mask & 1:
            assert col.evaluate(mask) == pytest.approx(1 / alpha, rel=1e-9)
    assert col.evaluate(0b110) == pytest.approx(2 / (3 * alpha), rel=1e-9)


def test_su_is_calibrated_simes(rng):
    from eclosure.calibrators import simes_p

    alpha = 0.2
    p = rand_pvalues(rng, 7)
    col = su_collection(p, alpha)
    assert col.monotone_in_p
    for mask in all_nonempty_masks(7):
        direct = su_calibrate(simes_p(p, mask), alpha)
        assert col.evaluate(mask) == pytest.approx(direct, rel=1e-12)
    dense_matches_scalar(col)


def test_su_clamp_region():
    alpha = 0.05
    col = su_collection(ValueVector("pvalue", (1e-8, 1e-8)), alpha)
    for mask in (0b01, 0b10, 0b11):
        assert col.evaluate(mask) == pytest.approx(1 / alpha)


# ---------------------------------------------------------------------------
# BH collection and step-up counting
# ---------------------------------------------------------------------------

FIG2_P = (0.0001, 0.013, 0.019, 0.021, 0.044, 0.052, 0.074, 0.124,
          0.486, 0.661, 0.848)


def test_step_up_count_matches_sort_oracle(rng):
    for _ in range(100):
        m = rng.randrange(1, 10)
        p = rand_pvalues(rng, m)
        alpha = rng.choice((0.05, 0.1, 0.2, 0.5))
        thresholds = tuple(alpha * i / m for i in range(1, m + 1))
        r, mask = step_up_count(p, thresholds)
        expect = stepup_oracle(p.values, thresholds)
        assert frozenset(indices_from_mask(mask)) == expect
        assert r == len(expect)


def test_bh_base_evalues_on_fig2():
    alpha = 0.2
    col = bh_collection(ValueVector("pvalue", FIG2_P), alpha)
    base = col.base_values
    assert base is not None and len(base) == 11
    for i, p in enumerate(FIG2_P):
        if i < 8:
            assert base[i] == pytest.approx(11 / (alpha * 8))  # = 6.875
        else:
            assert base[i] == 0.0
    assert col.mean_type and not col.alpha_independent


def test_bh_degenerate_no_rejections():
    col = bh_collection(ValueVector("pvalue", (0.9, 0.8, 0.7)), 0.05)
    for mask in all_nonempty_masks(3):
        assert col.evaluate(mask) == 0.0


def test_bh_dense_matches(rng):
    col = bh_collection(rand_pvalues(rng, 7), 0.2)
    dense_matches_scalar(col)


# ---------------------------------------------------------------------------
# Storey adaptive BH
# ---------------------------------------------------------------------------

def test_storey_pi0_fixture():
    p = ValueVector("pvalue", (0.001, 0.002, 0.003, 0.04, 0.05, 0.06,
                               0.3, 0.6, 0.7, 0.8))
    assert storey_pi0(p, 0.5) == pytest.approx(0.8)


def test_storey_pi0_single_large_p():
    lam = 0.4
    p = ValueVector("pvalue", (0.9,))
    # Zeroing the only entry leaves no p above lambda: (1 + 0) / (1 * (1 - lam)).
    assert storey_pi0(p, lam) == pytest.approx(1 / (1 - lam))


def test_storey_pi0_leave_one_out_oracle(rng):
    for _ in range(50):
        m = rng.randrange(1, 9)
        p = rand_pvalues(rng, m)
        lam = rng.choice((0.3, 0.5, 0.7))
        expect = 0.0
        for i in range(m):
            subbed = list(p.values)
            subbed[i] = 0.0
            expect = max(expect, (1 + sum(1 for q in subbed if q > lam))
                         / (m * (1 - lam)))
        assert storey_pi0(p, lam) == pytest.approx(expect)


def test_storey_reduces_to_bh_when_pi0_is_one():
    # Four of ten entries above lambda: zeroing a small entry keeps the count
    # at 4, so the leave-one-out maximum is exactly (1+4)/(10*0.5) = 1.
    p = ValueVector("pvalue", (0.001, 0.002, 0.003, 0.04, 0.05, 0.06,
                               0.6, 0.7, 0.8, 0.9))
    alpha, lam = 0.05, 0.5
    assert storey_pi0(p, lam) == pytest.approx(1.0)
    ada = storey_adabh_collection(p, alpha, lam)
    plain = bh_collection(p, alpha)
    for mask in range(1, 1 << 10, 37):
        assert ada.evaluate(mask) == pytest.approx(plain.evaluate(mask))


def test_storey_lambda_validation():
    p = ValueVector("pvalue", (0.5, 0.6))
    for lam in (0.0, 1.0, -0.2):
        with pytest.raises(ValueError):
            storey_adabh_collection(p, 0.05, lam)


def test_storey_dense_matches(rng):
    col = storey_adabh_collection(rand_pvalues(rng, 7), 0.1, 0.5)
    dense_matches_scalar(col)


# ---------------------------------------------------------------------------
# Knockoff collection
# ---------------------------------------------------------------------------

KNOCKOFF_W = (6.0, 5.0, 4.0, 3.0, -2.0, -1.0)


def test_knockoff_stats_worked_instance():
    stats = knockoff_stats(ValueVector("knockoff_stat", KNOCKOFF_W), 0.4)
    assert stats.c_alpha == 3.0
    assert stats.f_neg == 0
    assert indices_from_mask(stats.rejected) == (1, 2, 3, 4)


def test_knockoff_collection_worked_values():
    col = knockoff_collection(ValueVector("knockoff_stat", KNOCKOFF_W), 0.4)
    assert col.evaluate(mask_from_indices([5, 6], 6)) == 0.0
    assert col.evaluate(mask_from_indices([1, 5, 6], 6)) == pytest.approx(1.0)
    assert col.evaluate(mask_from_indices([1, 2, 3], 6)) == pytest.approx(3.0)
    dense_matches_scalar(col)


def test_knockoff_threshold_minimality(rng):
    for _ in range(200):
        m = rng.randrange(1, 10)
        w = rand_wvalues(rng, m)
        alpha = rng.choice((0.1, 0.2, 0.4, 0.5))
        stats = knockoff_stats(w, alpha)
        candidates = sorted({abs(x) for x in w.values if x != 0})
        feasible = [c for c in candidates
                    if sum(1 for x in w.values if x >= c) > 0
                    and (1 + sum(1 for x in w.values if x <= -c))
                    / sum(1 for x in w.values if x >= c) <= alpha + 1e-12]
        if feasible:
            assert stats.c_alpha == pytest.approx(min(feasible))
            assert stats.rejected == sum(
                1 << (i - 1) for i in range(1, m + 1)
                if w.values[i - 1] >= stats.c_alpha - 1e-12)
            assert stats.f_neg == sum(1 for x in w.values if x <= -stats.c_alpha)
        else:
            assert stats.c_alpha == math.inf
            assert stats.rejected == 0


def test_knockoff_all_nonpositive_w_rejects_nothing():
    stats = knockoff_stats(ValueVector("knockoff_stat", (0.0, -1.0, -2.0)), 0.5)
    assert stats.c_alpha == math.inf
    assert stats.rejected == 0


def test_knockoff_evaluate_formula(rng):
    alpha = 0.3
    w = rand_wvalues(rng, 7)
    col = knockoff_collection(w, alpha)
    stats = knockoff_stats(w, alpha)
    for mask in all_nonempty_masks(7):
        idx = indices_from_mask(mask)
        if stats.c_alpha == math.inf:
            expect = 0.0
        else:
            pos = sum(1 for i in idx if w.values[i - 1] >= stats.c_alpha)
            neg = sum(1 for i in idx if w.values[i - 1] <= -stats.c_alpha)
            expect = pos / (1 + neg)
        assert col.evaluate(mask) == pytest.approx(expect)


# ---------------------------------------------------------------------------
# Compound collection
# ---------------------------------------------------------------------------

def test_compound_worked_values():
    m = 4
    col = compound_to_collection(ValueVector("evalue", (float(m),) * m))
    for mask in all_nonempty_masks(m):
        assert col.evaluate(mask) == pytest.approx(len(indices_from_mask(mask)))
    col2 = compound_to_collection(ValueVector("evalue", (8.0, 2.0, 0.0)))
    assert col2.evaluate(0b001) == pytest.approx(8 / 3)
    assert col2.alpha_independent
    dense_matches_scalar(col2)


def test_compound_closure_equals_self_consistency(rng):
    """The compound closure's largest member is the top-r set with
    e_(r) >= m/(alpha*r), the self-consistent compound step-up."""
    from eclosure import engine

    alpha = 0.1
    for _ in range(40):
        m = rng.randrange(1, 8)
        e = rand_evalues(rng, m)
        col = compound_to_collection(e)
        got = engine.largest_member(col, fdp_loss(), alpha, exhaustive=True)
        order = sorted(range(1, m + 1), key=lambda i: (-e.values[i - 1], i))
        best = 0
        for r in range(m, 0, -1):
            if e.values[order[r - 1] - 1] >= m / (alpha * r) - 1e-9:
                best = r
                break
        expect = sum(1 << (i - 1) for i in order[:best])
        assert got == expect


# ---------------------------------------------------------------------------
# Procedure-induced collections
# ---------------------------------------------------------------------------

def test_from_procedure_worked_values():
    alpha = 0.05
    col = from_procedure_collection([0], fdp_loss(), alpha, 3)
    for mask in all_nonempty_masks(3):
        assert col.evaluate(mask) == 0.0
    col2 = from_procedure_collection([mask_from_indices([1], 3)], fdp_loss(), alpha, 3)
    for mask in all_nonempty_masks(3):
        expect = 20.0 if mask & 1 else 0.0
        assert col2.evaluate(mask) == pytest.approx(expect)
    with pytest.raises(ValueError):
        from_procedure_collection([], fdp_loss(), alpha, 3)
    dense_matches_scalar(col2)


def test_from_procedure_members_contain_family(rng):
    alpha = 0.1
    for _ in range(30):
        m = rng.randrange(1, 8)
        family = {rng.getrandbits(m) for _ in range(rng.randrange(1, 5))}
        col = from_procedure_collection(sorted(family), fdp_loss(), alpha, m)
        for r_mask in family:
            r = frozenset(indices_from_mask(r_mask))
            assert brute_member(col, fdp_set, alpha, r)


def test_from_procedure_idempotent(rng):
    from eclosure import engine

    alpha = 0.1
    for _ in range(20):
        m = rng.randrange(1, 7)
        family = sorted({rng.getrandbits(m) for _ in range(3)} | {0})
        col1 = from_procedure_collection(family, fdp_loss(), alpha, m)
        members = sorted(engine.enumerate_collection(col1, fdp_loss(), alpha))
        col2 = from_procedure_collection(members, fdp_loss(), alpha, m)
        for mask in all_nonempty_masks(m):
            assert col2.evaluate(mask) == pytest.approx(col1.evaluate(mask), abs=1e-12)


# ---------------------------------------------------------------------------
# Restricted combinations
# ---------------------------------------------------------------------------

def pairwise_feasible_masks():
    """Null sets realizable by labelings of 4 parameters tested pairwise.

    Hypothesis j is equality of the j-th pair of parameters in lexicographic
    order. The realizable null sets are the unions of cliques induced by a
    labeling, enumerated here directly from all 4^4 labelings.
    """
    pairs = list(itertools.combinations(range(4), 2))
    feas = set()
    for theta in itertools.product(range(4), repeat=4):
        mask = 0
        for j, (a, b) in enumerate(pairs):
            if theta[a] == theta[b]:
                mask |= 1 << j
        feas.add(mask)
    return feas


def test_pairwise_feasible_count():
    feas = pairwise_feasible_masks()
    assert 0 in feas
    assert len(feas - {0}) == 14


def test_restriction_enables_larger_members():
    alpha = 0.05
    base = mean_collection(
        ValueVector("evalue", (4 / alpha, 1 / alpha, 1 / alpha, 0.0, 0.0, 0.0)))
    feas = pairwise_feasible_masks()
    restricted = restrict_feasible(base, lambda msk: msk in feas)

    assert brute_largest(base, fdp_set, alpha) == frozenset({1})
    assert brute_member(restricted, fdp_set, alpha, frozenset({1, 2, 3}))
    assert brute_largest(restricted, fdp_set, alpha) == frozenset({1, 2, 3})
    infeasible = mask_from_indices([2, 3, 4, 5], 6)
    assert infeasible not in feas
    assert restricted.evaluate(infeasible) == math.inf
    dense_matches_scalar(restricted)


def test_restriction_with_trivial_predicate_is_identity(rng):
    col = mean_collection(rand_evalues(rng, 8))
    same = restrict_feasible(col, lambda mask: True)
    for mask in all_nonempty_masks(8):
        assert same.evaluate(mask) == col.evaluate(mask)
    assert same.alpha_independent == col.alpha_independent


def test_restriction_composes_predicates(rng):
    col = mean_collection(rand_evalues(rng, 5))
    first = restrict_feasible(col, lambda mask: mask % 2 == 1)
    second = restrict_feasible(first, lambda mask: mask < 8)
    for mask in all_nonempty_masks(5):
        expect = col.evaluate(mask) if (mask % 2 == 1 and mask < 8) else math.inf
        assert second.evaluate(mask) == expect


# ---------------------------------------------------------------------------
# Cross-cutting flag truthfulness and fingerprints
# ---------------------------------------------------------------------------

def test_alpha_independent_builders_ignore_alpha(rng):
    e = rand_evalues(rng, 6)
    cols = [mean_collection(e), product_collection(e), compound_to_collection(e)]
    for col in cols:
        assert col.alpha_independent


def test_monotone_builders_decrease_when_p_grows(rng):
    alpha = 0.1
    for _ in range(25):
        m = rng.randrange(2, 7)
        p = rand_pvalues(rng, m)
        bumped_vals = list(p.values)
        j = rng.randrange(m)
        bumped_vals[j] = min(1.0, bumped_vals[j] + rng.random() * (1 - bumped_vals[j]))
        bumped = ValueVector("pvalue", bumped_vals)
        for build in (by_collection, su_collection):
            before, after = build(p, alpha), build(bumped, alpha)
            for mask in all_nonempty_masks(m):
                assert after.evaluate(mask) <= before.evaluate(mask) + 1e-12


def test_fingerprint_is_stable_and_discriminates(rng):
    e = rand_evalues(rng, 5)
    a = collection_fingerprint(mean_collection(e))
    b = collection_fingerprint(mean_collection(e))
    assert a == b and len(a) == 64
    other = list(e.values)
    other[0] += 1.0
    c = collection_fingerprint(mean_collection(ValueVector("evalue", other)))
    assert c != a
