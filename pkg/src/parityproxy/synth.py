"""Synthetic value functions with known ground-truth spectra.

Three families:

* peak: a handful of same-cardinality interaction sets with no lower-order
  structure; hard for greedy tree learners.
* complete_hierarchy: the down-closure of sampled peak sets, every subset
  carrying its own coefficient; the structure trees pick up well.
* staircase: a single nested chain with unit coefficients.

make_synthetic returns both a queryable provider and the truth spectrum so
benchmarks can score recovery exactly.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import InvalidArgumentError
from .masks import Mask, ValueFunction
from .spectrum import FourierSpectrum, down_closure

DEFAULT_NUM_SETS = 10
DEFAULT_CARDINALITY = 5

FAMILIES = ("peak", "complete_hierarchy", "staircase")


@dataclass
class SyntheticSpec:
    family: str
    n: int
    num_sets: int = DEFAULT_NUM_SETS
    cardinality: int = DEFAULT_CARDINALITY
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidArgumentError(
                f"unknown family {self.family!r}; expected one of {FAMILIES}"
            )
        if self.cardinality > self.n:
            raise InvalidArgumentError(
                f"cardinality {self.cardinality} exceeds n={self.n}"
            )
        if self.num_sets < 1:
            raise InvalidArgumentError("num_sets must be >= 1")


class SpectrumValueFunction(ValueFunction):
    """Provider that evaluates a fixed spectrum exactly."""

    def __init__(self, spec: FourierSpectrum):
        self.n = spec.n
        self.spectrum = spec

    def query(self, masks: Sequence[Mask]) -> list[float]:
        return [float(v) for v in self.spectrum.evaluate_batch(masks)]


def _sample_distinct_sets(rng, n: int, cardinality: int, count: int) -> list[int]:
    if comb(n, cardinality) < count:
        raise InvalidArgumentError(
            f"cannot draw {count} distinct size-{cardinality} subsets of [{n}]"
        )
    seen: set[int] = set()
    out: list[int] = []
    while len(out) < count:
        members = rng.choice(n, size=cardinality, replace=False)
        bits = 0
        for i in members:
            bits |= 1 << int(i)
        if bits not in seen:
            seen.add(bits)
            out.append(bits)
    return out


def make_synthetic(spec: SyntheticSpec) -> tuple[ValueFunction, FourierSpectrum]:
    """Build (provider, truth spectrum) for the requested family.

    Coefficients are drawn iid Uniform(-1, 1) per support member in a
    deterministic order, so the pair is a pure function of its arguments.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    if spec.family == "peak":
        support_bits = _sample_distinct_sets(rng, n, spec.cardinality, spec.num_sets)
        coeffs = {
            Mask(n, b): float(rng.uniform(-1.0, 1.0)) for b in support_bits
        }
    elif spec.family == "complete_hierarchy":
        peaks = _sample_distinct_sets(rng, n, spec.cardinality, spec.num_sets)
        closure = down_closure([Mask(n, b) for b in peaks], n)
        ordered = sorted(closure, key=lambda b: (b.bit_count(), b))
        coeffs = {Mask(n, b): float(rng.uniform(-1.0, 1.0)) for b in ordered}
    else:  # staircase
        coeffs = {Mask(n, 0): 1.0}
        bits = 0
        for i in range(spec.cardinality):
            bits |= 1 << i
            coeffs[Mask(n, bits)] = 1.0
    truth = FourierSpectrum(n, coeffs)
    return SpectrumValueFunction(truth), truth
