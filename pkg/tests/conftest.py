"""Shared brute-force oracles and instance generators.

The oracles here re-derive every quantity from first principles with plain
Python loops over index sets. They deliberately avoid the engine, the
shortcut module, and the dense evaluation hooks, so that agreement between
an oracle and a library function is genuine evidence rather than the same
code checked against itself. The only shared vocabulary is the documented
boundary rule: ``a >= b`` holds when the deficit is within a relative
epsilon of 1e-12, mirroring ComparePolicy's contract.
"""

import itertools
import math
import random

import pytest

from eclosure import ValueVector, mask_from_indices, indices_from_mask

REL = 1e-12


def oge(a: float, b: float) -> bool:
    """Tolerant a >= b, reimplementing the documented comparison contract."""
    if a >= b:
        return True
    diff = b - a
    if math.isinf(diff):
        return False
    return diff <= REL * max(abs(a), abs(b), 1.0)


# ---------------------------------------------------------------------------
# Set-based loss oracles (independent of core.LossFunction internals).
# ---------------------------------------------------------------------------

def fdp_set(s: frozenset, r: frozenset) -> float:
    return len(s & r) / max(len(r), 1)


def kfwer_set(k: int):
    def fn(s, r):
        return 1.0 if len(s & r) >= k else 0.0

    return fn


def pfer_set(s: frozenset, r: frozenset) -> float:
    return float(len(s & r))


def fdx_set(gamma: float):
    def fn(s, r):
        return 1.0 if fdp_set(s, r) > gamma else 0.0

    return fn


def aer_set(s: frozenset, r: frozenset) -> float:
    return len(s & r) / max(len(s), 1)


SET_LOSSES = {
    "fdp": fdp_set,
    "fwer": kfwer_set(1),
    "kfwer2": kfwer_set(2),
    "pfer": pfer_set,
    "fdx25": fdx_set(0.25),
    "aer": aer_set,
}


# ---------------------------------------------------------------------------
# Brute-force closure semantics.
# ---------------------------------------------------------------------------

def _subsets(m: int):
    """All nonempty subsets of {1..m} as frozensets, by size then lexicographic."""
    for size in range(1, m + 1):
        for combo in itertools.combinations(range(1, m + 1), size):
            yield frozenset(combo)


def _eval_set(E, s: frozenset) -> float:
    return E.evaluate(mask_from_indices(sorted(s), E.m))


def brute_member(E, loss_set_fn, alpha: float, r: frozenset) -> bool:
    """Direct quantifier: e_S >= loss(S, R)/alpha for every nonempty feasible S."""
    if not r:
        return True
    for s in _subsets(E.m):
        if E.feasible is not None and not E.feasible(mask_from_indices(sorted(s), E.m)):
            continue
        if not oge(_eval_set(E, s), loss_set_fn(s, r) / alpha):
            return False
    return True


def brute_margin(E, loss_set_fn, alpha: float, r: frozenset):
    """(member, witness_set_or_None, margin) mirroring the certificate contract.

    member=True: margin is the minimum slack over all nonempty feasible S.
    member=False: witness is the smallest violating mask; margin is its slack.
    """
    if not r:
        return True, None, math.inf
    best = math.inf
    for mask in range(1, 1 << E.m):
        s = frozenset(indices_from_mask(mask))
        if E.feasible is not None and not E.feasible(mask):
            continue
        slack = E.evaluate(mask) - loss_set_fn(s, r) / alpha
        if slack != slack:
            slack = math.inf
        if not oge(E.evaluate(mask), loss_set_fn(s, r) / alpha):
            return False, s, slack
        best = min(best, slack)
    return True, None, best


def brute_members(E, loss_set_fn, alpha: float):
    """All members as a set of frozensets (always includes the empty set)."""
    out = {frozenset()}
    for mask in range(1, 1 << E.m):
        r = frozenset(indices_from_mask(mask))
        if brute_member(E, loss_set_fn, alpha, r):
            out.add(r)
    return out


def brute_largest(E, loss_set_fn, alpha: float) -> frozenset:
    """Maximum-cardinality member; ties broken by smallest bitmask."""
    best, best_mask = frozenset(), 0
    for mask in range(1, 1 << E.m):
        r = frozenset(indices_from_mask(mask))
        if len(r) > len(best) and brute_member(E, loss_set_fn, alpha, r):
            best, best_mask = r, mask
    return best


def brute_tdb(E, alpha: float, r: frozenset) -> int:
    """min |R \\ S| over nonempty feasible S with e_S failing the 1/alpha test."""
    if not r:
        return 0
    best = len(r)
    for mask in range(1, 1 << E.m):
        if E.feasible is not None and not E.feasible(mask):
            continue
        if not oge(E.evaluate(mask), 1.0 / alpha):
            s = frozenset(indices_from_mask(mask))
            best = min(best, len(r - s))
    return best


def brute_critical_alpha(E, loss_set_fn, r: frozenset) -> float:
    """max over nonempty feasible S of loss(S,R)/e_S (0/0 skipped, x/0 = inf)."""
    if not r:
        return 0.0
    worst = 0.0
    for mask in range(1, 1 << E.m):
        if E.feasible is not None and not E.feasible(mask):
            continue
        s = frozenset(indices_from_mask(mask))
        lv = loss_set_fn(s, r)
        if lv <= 0:
            continue
        e = E.evaluate(mask)
        if e == 0:
            return math.inf
        worst = max(worst, lv / e)
    return worst


# ---------------------------------------------------------------------------
# Classical procedure oracles (sort-based definitions, no step_up_count).
# ---------------------------------------------------------------------------

def stepup_oracle(p: tuple, thresholds: tuple) -> frozenset:
    """Largest r with p_(r) <= t_r; rejects the r smallest p-values."""
    order = sorted(range(len(p)), key=lambda i: (p[i], i))
    r = 0
    for rank, i in enumerate(order, start=1):
        if oge(thresholds[rank - 1], p[i]):
            r = rank
    return frozenset(order[k] + 1 for k in range(r))


def ebh_oracle(e: tuple, alpha: float) -> frozenset:
    m = len(e)
    order = sorted(range(m), key=lambda i: (-e[i], i))
    r = 0
    for rank in range(m, 0, -1):
        if oge(e[order[rank - 1]], m / (alpha * rank)):
            r = rank
            break
    return frozenset(order[k] + 1 for k in range(r))


# ---------------------------------------------------------------------------
# Seeded instance generators.
# ---------------------------------------------------------------------------

def rand_evalues(rng: random.Random, m: int) -> ValueVector:
    vals = []
    for _ in range(m):
        u = rng.random()
        if u < 0.3:
            vals.append(0.0)
        elif u < 0.5:
            vals.append(float(rng.randrange(0, 60)))
        else:
            vals.append(rng.expovariate(1 / 15))
    return ValueVector("evalue", vals)


def rand_pvalues(rng: random.Random, m: int) -> ValueVector:
    vals = []
    for _ in range(m):
        u = rng.random()
        vals.append(u * u if rng.random() < 0.7 else u)
    return ValueVector("pvalue", vals)


def rand_wvalues(rng: random.Random, m: int) -> ValueVector:
    return ValueVector("knockoff_stat",
                       [round(rng.gauss(0, 3), 1) for _ in range(m)])


def rand_mask(rng: random.Random, m: int) -> int:
    return rng.getrandbits(m)


ALPHAS = (0.05, 0.1, 0.2, 0.5)


def rand_alpha(rng: random.Random) -> float:
    return rng.choice(ALPHAS)


@pytest.fixture
def rng():
    return random.Random(20260815)
