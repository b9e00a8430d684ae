"""Faithfulness, hierarchy diagnostics, and attribution-comparison metrics.

Undefined values (zero denominators) come back as NaN rather than being
silently coerced; MetricReport.undefined makes the flag explicit when the
metric is serialized.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .masks import Mask, ValueFunction
from .spectrum import FourierSpectrum, _submasks


@dataclass
class MetricReport:
    name: str
    value: float
    params: dict = field(default_factory=dict)
    sample_counts: dict = field(default_factory=dict)

    @property
    def undefined(self) -> bool:
        return isinstance(self.value, float) and math.isnan(self.value)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "value": None if self.undefined else self.value,
            "undefined": self.undefined,
            "params": self.params,
            "sample_counts": self.sample_counts,
        }


def r2(predictions: Sequence[float], truths: Sequence[float]) -> float:
    """Coefficient of determination against the mean baseline.

    Returns 1.0 for a perfect fit to a constant target and NaN when the
    target is constant but the fit is not (the ratio is undefined).
    """
    pred = np.asarray(predictions, dtype=float)
    truth = np.asarray(truths, dtype=float)
    if pred.shape != truth.shape or pred.ndim != 1 or pred.size == 0:
        raise InvalidArgumentError(
            f"need equal nonempty 1-d inputs, got {pred.shape} vs {truth.shape}"
        )
    sse = float(np.sum((pred - truth) ** 2))
    sst = float(np.sum((truth - truth.mean()) ** 2))
    if sst == 0.0:
        return 1.0 if sse == 0.0 else float("nan")
    return 1.0 - sse / sst


def top_k_family(spec: FourierSpectrum, k: int) -> tuple[set[int], int]:
    """Top-k support sets (as bitmasks) under the sparsify ranking; k is
    clamped to the support size and the effective value returned."""
    if k < 1:
        raise InvalidArgumentError(f"k must be >= 1, got {k}")
    ranked = spec.items_ranked()
    eff = min(k, len(ranked))
    return {m.bits for m, _ in ranked[:eff]}, eff


def dsr(spec: FourierSpectrum, k: int) -> float:
    """Direct subset rate: over the top-k sets, the average fraction of
    one-element-removed subsets that also rank top-k. The empty set
    contributes 1 (its 0/0 term is defined as 1)."""
    fam, eff = top_k_family(spec, k)
    if eff == 0:
        return float("nan")
    total = 0.0
    for bits in fam:
        size = bits.bit_count()
        if size == 0:
            total += 1.0
            continue
        hits = 0
        for i in range(bits.bit_length()):
            if bits >> i & 1 and (bits ^ (1 << i)) in fam:
                hits += 1
        total += hits / size
    return total / eff


def _has_chain(bits: int, fam: set[int]) -> bool:
    """True when some ordering of the members builds bits through sets
    that all lie in fam, starting from the empty set."""
    if 0 not in fam:
        return False
    reachable = {0}
    # grow by single elements, breadth-first over subset sizes
    frontier = [0]
    while frontier:
        nxt = []
        for cur in frontier:
            rest = bits & ~cur
            for i in range(rest.bit_length()):
                if rest >> i & 1:
                    cand = cur | (1 << i)
                    if cand in fam and cand not in reachable:
                        if cand == bits:
                            return True
                        reachable.add(cand)
                        nxt.append(cand)
        frontier = nxt
    return bits == 0


def hierarchy_rate(spec: FourierSpectrum, k: int, kind: str) -> float:
    """Chain ("scr") or all-subsets ("shr") membership rate of the top-k
    family. scr counts sets reachable from the empty set by adding one
    member at a time inside the family; shr counts sets whose every subset
    is in the family. shr <= scr always."""
    fam, eff = top_k_family(spec, k)
    if eff == 0:
        return float("nan")
    if kind == "scr":
        good = sum(1 for bits in fam if _has_chain(bits, fam))
    elif kind == "shr":
        good = sum(
            1
            for bits in fam
            if all(sub in fam for sub in _submasks(bits))
        )
    else:
        raise InvalidArgumentError(f"unknown hierarchy kind {kind!r}")
    return good / eff


def delta_output(vf: ValueFunction, solution_mask: Mask) -> float:
    """Relative output change from masking down to solution_mask, measured
    on the true value function. NaN when f(full) is zero."""
    if solution_mask.n != vf.n:
        raise InvalidArgumentError(
            f"mask width {solution_mask.n} != provider width {vf.n}"
        )
    f_full, f_sol = vf.query([Mask.full(vf.n), solution_mask])
    if f_full == 0.0:
        return float("nan")
    return abs(f_full - f_sol) / abs(f_full)


def compare_shapley(
    estimate: Sequence[float], truth: Sequence[float], k: int
) -> tuple[float, float]:
    """Recall of the top-k magnitudes plus mean squared error.

    Top-k selection sorts by |value| descending with ties broken by lower
    feature index.
    """
    est = np.asarray(estimate, dtype=float)
    tru = np.asarray(truth, dtype=float)
    if est.shape != tru.shape or est.ndim != 1:
        raise InvalidArgumentError(
            f"need equal-length vectors, got {est.shape} vs {tru.shape}"
        )
    n = est.size
    if k > n or k < 1:
        raise InvalidArgumentError(f"k={k} out of range for n={n}")

    def top(v):
        return set(sorted(range(n), key=lambda i: (-abs(v[i]), i))[:k])

    recall = len(top(est) & top(tru)) / k
    mse = float(np.mean((est - tru) ** 2))
    return recall, mse
