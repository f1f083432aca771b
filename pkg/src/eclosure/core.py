"""Core types: bitmask subsets, input vectors, loss functions, comparisons.

Hypotheses are numbered 1..m and subsets of them are stored as int bitmasks
(bit i-1 set means hypothesis i is in the set), which keeps subset algebra
O(1) and hashable. All error-rate comparisons go through a ComparePolicy so
that boundary cases (equalities that hold exactly in rational arithmetic but
not in binary floats) are decided consistently everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

__all__ = [
    "MAX_HYPOTHESES",
    "mask_from_indices",
    "indices_from_mask",
    "full_mask",
    "subset_size",
    "ValueVector",
    "ComparePolicy",
    "DEFAULT_POLICY",
    "LossFunction",
    "fdp_loss",
    "kfwer_loss",
    "pfer_loss",
    "fdx_loss",
    "aer_loss",
    "rejection_count",
    "ratio_to_expectation_loss",
    "loss_to_dict",
    "loss_from_dict",
    "loss_eval",
]

# Bitmask subsets fit in a machine-friendly int range.
MAX_HYPOTHESES = 64

VALUE_KINDS = ("pvalue", "evalue", "knockoff_stat")


def mask_from_indices(indices: Sequence[int], m: int) -> int:
    """Build a subset bitmask from 1-based hypothesis indices."""
    mask = 0
    for i in indices:
        if not 1 <= i <= m:
            raise ValueError(f"hypothesis index {i} outside 1..{m}")
        mask |= 1 << (i - 1)
    return mask


def indices_from_mask(mask: int) -> tuple[int, ...]:
    """Return the sorted 1-based indices contained in a subset bitmask."""
    out = []
    i = 1
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return tuple(out)


def full_mask(m: int) -> int:
    return (1 << m) - 1


def subset_size(mask: int) -> int:
    return mask.bit_count()


def _validate_values(kind: str, values: Sequence[float]) -> None:
    if kind not in VALUE_KINDS:
        raise ValueError(f"unknown value kind {kind!r}, expected one of {VALUE_KINDS}")
    if len(values) == 0:
        raise ValueError("empty value vector")
    if len(values) > MAX_HYPOTHESES:
        raise ValueError(f"m={len(values)} exceeds the bitmask cap of {MAX_HYPOTHESES}")
    for i, v in enumerate(values, start=1):
        if v != v:
            raise ValueError(f"NaN at index {i}")
        if kind == "pvalue" and not 0.0 <= v <= 1.0:
            raise ValueError(f"p-value {v} at index {i} outside [0, 1]")
        if kind == "evalue" and v < 0.0:
            raise ValueError(f"e-value {v} at index {i} is negative")
        if kind == "knockoff_stat" and math.isinf(v):
            raise ValueError(f"knockoff statistic at index {i} is not finite")


@dataclass(frozen=True)
class ValueVector:
    """A validated input vector of p-values, e-values, or knockoff statistics.

    Parameters
    ----------
    kind : str
        One of ``"pvalue"`` (each in [0, 1]), ``"evalue"`` (nonnegative,
        +inf allowed), ``"knockoff_stat"`` (finite signed reals).
    values : tuple of float
        One entry per hypothesis, 1-based hypothesis i at position i-1.
    """

    kind: str
    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        _validate_values(self.kind, self.values)

    @property
    def m(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class ComparePolicy:
    """Decides threshold comparisons between e-values and loss/alpha ratios.

    ``relative_epsilon`` treats ``a >= b`` as satisfied when the deficit
    ``b - a`` is within ``eps * max(|a|, |b|, 1)``; this keeps exact rational
    boundary fixtures (frequent in worked examples) on the accepting side
    after float round-off. ``exact`` compares raw values and is intended for
    Fraction-valued fixtures.
    """

    mode: str = "relative_epsilon"
    eps: float = 1e-12

    def __post_init__(self):
        if self.mode not in ("relative_epsilon", "exact"):
            raise ValueError(f"unknown compare mode {self.mode!r}")
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")

    def ge(self, a, b) -> bool:
        """a >= b under this policy."""
        if a != a or b != b:
            raise ValueError("NaN in comparison")
        if a >= b:
            return True
        if self.mode == "exact":
            return False
        # a < b from here on; inf deficits never pass.
        diff = b - a
        if math.isinf(diff):
            return False
        scale = max(abs(a), abs(b), 1)
        return diff <= self.eps * scale

    def le(self, a, b) -> bool:
        return self.ge(b, a)

    def lt(self, a, b) -> bool:
        return not self.ge(a, b)

    def gt(self, a, b) -> bool:
        return not self.ge(b, a)


DEFAULT_POLICY = ComparePolicy()


@dataclass(frozen=True)
class LossFunction:
    """A set-valued loss f_N(R) over (null set N, rejection set R).

    ``fn`` maps bitmasks (N, R) to a nonnegative number. ``counts_fn``, when
    present, is an equivalent evaluator over (|N & R|, |N|, |R|) that also
    accepts numpy arrays; every built-in family admits one and the engine
    uses it to vectorise subset sweeps.
    """

    name: str
    params: dict = field(default_factory=dict)
    fn: Callable[[int, int], float] = None
    counts_fn: Optional[Callable] = None

    def __call__(self, n_mask: int, r_mask: int) -> float:
        return self.fn(n_mask, r_mask)


def loss_eval(loss: LossFunction, n_mask: int, r_mask: int) -> float:
    """Evaluate a loss function on bitmask sets."""
    return loss.fn(n_mask, r_mask)


def fdp_loss() -> LossFunction:
    """False discovery proportion |N & R| / (|R| or 1)."""

    def fn(n, r):
        return (n & r).bit_count() / max(r.bit_count(), 1)

    def counts_fn(inter, n_size, r_size):
        return inter / max(r_size, 1)

    return LossFunction("fdp", {}, fn, counts_fn)


def kfwer_loss(k: int = 1) -> LossFunction:
    """Indicator of at least k false rejections; k=1 is the FWER loss."""
    if k < 1:
        raise ValueError("k must be >= 1")

    def fn(n, r):
        return 1.0 if (n & r).bit_count() >= k else 0.0

    def counts_fn(inter, n_size, r_size):
        return (inter >= k) * 1.0

    return LossFunction("kfwer", {"k": k}, fn, counts_fn)


def pfer_loss() -> LossFunction:
    """Count of false rejections |N & R|."""

    def fn(n, r):
        return float((n & r).bit_count())

    def counts_fn(inter, n_size, r_size):
        return inter * 1.0

    return LossFunction("pfer", {}, fn, counts_fn)


def fdx_loss(gamma: float) -> LossFunction:
    """Indicator that the false discovery proportion exceeds gamma."""
    if not 0 <= gamma < 1:
        raise ValueError("gamma must lie in [0, 1)")

    def fn(n, r):
        return 1.0 if (n & r).bit_count() / max(r.bit_count(), 1) > gamma else 0.0

    def counts_fn(inter, n_size, r_size):
        return (inter / max(r_size, 1) > gamma) * 1.0

    return LossFunction("fdx", {"gamma": gamma}, fn, counts_fn)


def aer_loss() -> LossFunction:
    """Arbitrary error rate |N & R| / (|N| or 1)."""

    def fn(n, r):
        return (n & r).bit_count() / max(n.bit_count(), 1)

    def counts_fn(inter, n_size, r_size):
        import numpy as np

        den = np.maximum(n_size, 1)
        return inter / den

    return LossFunction("aer", {}, fn, counts_fn)


def rejection_count() -> LossFunction:
    """The set function |R| or 1, useful as a ratio denominator."""

    def fn(n, r):
        return float(max(r.bit_count(), 1))

    def counts_fn(inter, n_size, r_size):
        return float(max(r_size, 1))

    return LossFunction("rejection_count", {}, fn, counts_fn)


def ratio_to_expectation_loss(f: LossFunction, g: LossFunction, eta: float,
                              alpha: float) -> LossFunction:
    """Fold a ratio guarantee E[f]/E[g] <= alpha into a single expectation loss.

    Controlling E[(f - alpha*g)/eta] <= alpha/eta at the same alpha is
    equivalent to the ratio constraint whenever eta > 0; e.g. mFDR arises
    from f = |N & R| and g = |R| or 1.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")

    def fn(n, r):
        return (f.fn(n, r) - alpha * g.fn(n, r)) / eta

    counts_fn = None
    if f.counts_fn is not None and g.counts_fn is not None:

        def counts_fn(inter, n_size, r_size):
            return (f.counts_fn(inter, n_size, r_size)
                    - alpha * g.counts_fn(inter, n_size, r_size)) / eta

    name = f"ratio[{f.name}-{alpha}*{g.name}]/{eta}"
    return LossFunction(name, {"eta": eta, "alpha": alpha,
                               "f": f.name, "g": g.name}, fn, counts_fn)


_LOSS_FACTORIES = {
    "fdp": lambda d: fdp_loss(),
    "kfwer": lambda d: kfwer_loss(int(d.get("k", 1))),
    "pfer": lambda d: pfer_loss(),
    "fdx": lambda d: fdx_loss(float(d["gamma"])),
    "aer": lambda d: aer_loss(),
}


def loss_to_dict(loss: LossFunction) -> dict:
    """Serialise a built-in loss to a plain JSON-friendly dict."""
    if loss.name not in _LOSS_FACTORIES:
        raise ValueError(f"loss {loss.name!r} has no serial form")
    return {"kind": loss.name, **loss.params}


def loss_from_dict(d: dict) -> LossFunction:
    """Rebuild a built-in loss from its dict form."""
    kind = d.get("kind")
    if kind not in _LOSS_FACTORIES:
        raise ValueError(f"unknown loss kind {kind!r}")
    return _LOSS_FACTORIES[kind](d)
