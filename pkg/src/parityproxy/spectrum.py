"""Exact and sparse algebra on set-function spectra.

Two bases are used throughout:

* parity basis: f(S) = sum_T (-1)^{|T & S|} F(T), the orthonormal expansion
  under the uniform measure on subsets. F is the Fourier spectrum.
* monomial basis: f(S) = sum_{R subset S} I(R). I is the Mobius spectrum.

Sign convention, fixed repository-wide: bit i set means feature i retained,
and the parity character of T at S is (-1)^{|S & T|}.
"""

from __future__ import annotations

import json
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, InvalidArgumentError
from .masks import Mask, MaskDataset

TRANSFORM_N_GUARD = 24


def _validated_coeffs(n: int, coeffs: Mapping[Mask, float]) -> dict[Mask, float]:
    out = {}
    for m, c in coeffs.items():
        if m.n != n:
            raise InvalidArgumentError(f"key width {m.n} != spectrum width {n}")
        c = float(c)
        if c != 0.0:
            out[m] = c
    return out


class FourierSpectrum:
    """Sparse map from subsets to parity-basis coefficients.

    Exact zeros are dropped at construction so the stored support is the
    true support.
    """

    basis = "fourier"

    def __init__(self, n: int, coeffs: Mapping[Mask, float]):
        self.n = n
        self.coeffs = _validated_coeffs(n, coeffs)

    def __len__(self) -> int:
        return len(self.coeffs)

    def __getitem__(self, mask: Mask) -> float:
        return self.coeffs.get(mask, 0.0)

    def degree(self) -> int:
        return max((len(m) for m in self.coeffs), default=0)

    def evaluate(self, mask: Mask) -> float:
        """Reconstruct f(mask) from the stored support; O(support size)."""
        if mask.n != self.n:
            raise InvalidArgumentError(
                f"mask width {mask.n} != spectrum width {self.n}"
            )
        s = mask.bits
        return math.fsum(
            c if (m.bits & s).bit_count() % 2 == 0 else -c
            for m, c in self.coeffs.items()
        )

    def evaluate_batch(self, masks: Sequence[Mask]) -> np.ndarray:
        """Vectorized evaluate over many masks; the support is processed in
        chunks so large extracted spectra stay within memory."""
        for m in masks:
            if m.n != self.n:
                raise InvalidArgumentError(
                    f"mask width {m.n} != spectrum width {self.n}"
                )
        if not self.coeffs:
            return np.zeros(len(masks))
        keys = list(self.coeffs)
        out = np.zeros(len(masks))
        chunk = 4096
        for start in range(0, len(keys), chunk):
            part = keys[start : start + chunk]
            design = parity_design(masks, part, self.n)
            out += design @ np.array([self.coeffs[k] for k in part])
        return out

    def items_ranked(self) -> list[tuple[Mask, float]]:
        """Coefficients sorted by |coef| descending, ties by smaller
        cardinality then lexicographic index order."""
        return sorted(
            self.coeffs.items(),
            key=lambda kv: (-abs(kv[1]), len(kv[0]), kv[0].indices()),
        )

    def __repr__(self) -> str:
        return f"FourierSpectrum(n={self.n}, support={len(self.coeffs)})"


class MobiusSpectrum:
    """Sparse map from subsets to monomial-basis coefficients."""

    basis = "mobius"

    def __init__(self, n: int, coeffs: Mapping[Mask, float]):
        self.n = n
        self.coeffs = _validated_coeffs(n, coeffs)

    def __len__(self) -> int:
        return len(self.coeffs)

    def __getitem__(self, mask: Mask) -> float:
        return self.coeffs.get(mask, 0.0)

    def evaluate(self, mask: Mask) -> float:
        """f(mask) = sum of coefficients of stored subsets of mask."""
        if mask.n != self.n:
            raise InvalidArgumentError(
                f"mask width {mask.n} != spectrum width {self.n}"
            )
        s = mask.bits
        return math.fsum(c for m, c in self.coeffs.items() if m.bits & ~s == 0)

    def __repr__(self) -> str:
        return f"MobiusSpectrum(n={self.n}, support={len(self.coeffs)})"


def parity_design(
    masks: Sequence[Mask], keys: Sequence[Mask], n: int
) -> np.ndarray:
    """(len(masks), len(keys)) matrix of (-1)^{|S_i & T_j|} entries."""
    mmat = np.zeros((len(masks), n), dtype=np.float64)
    for r, m in enumerate(masks):
        for i in m.indices():
            mmat[r, i] = 1.0
    kmat = np.zeros((len(keys), n), dtype=np.float64)
    for r, k in enumerate(keys):
        for i in k.indices():
            kmat[r, i] = 1.0
    overlap = mmat @ kmat.T
    return 1.0 - 2.0 * (overlap % 2.0)


def _butterfly(values: np.ndarray, n: int) -> np.ndarray:
    """In-place Walsh-Hadamard butterfly; index bit i of the array position
    corresponds to feature i membership."""
    a = values.astype(np.float64, copy=True)
    for i in range(n):
        step = 1 << i
        a = a.reshape(-1, 2 * step)
        left = a[:, :step].copy()
        right = a[:, step:].copy()
        a[:, :step] = left + right
        a[:, step:] = left - right
        a = a.reshape(-1)
    return a


def _table_to_array(table, n: int | None) -> tuple[np.ndarray, int]:
    if isinstance(table, Mapping):
        widths = {m.n for m in table}
        if len(widths) != 1:
            raise InvalidArgumentError("table keys must share one width")
        n = widths.pop()
        if len(table) != 1 << n:
            raise InvalidArgumentError(
                f"table has {len(table)} entries, expected {1 << n} for n={n}"
            )
        arr = np.empty(1 << n, dtype=np.float64)
        seen = 0
        for m, v in table.items():
            arr[m.bits] = float(v)
            seen += 1
        return arr, n
    arr = np.asarray(table, dtype=np.float64).reshape(-1)
    if n is None:
        n = int(arr.size).bit_length() - 1
    if arr.size != 1 << n:
        raise InvalidArgumentError(
            f"value array has length {arr.size}, expected {1 << n}"
        )
    return arr, n


def exact_transform(table, n: int | None = None) -> FourierSpectrum:
    """Full-cube transform of a complete value table.

    `table` is either a Mapping from Mask to value covering all 2^n subsets
    or an array of length 2^n indexed by mask bits. Runs the in-place
    butterfly in O(n 2^n); guarded at n <= 24.
    """
    arr, n = _table_to_array(table, n)
    if n > TRANSFORM_N_GUARD:
        raise CapacityError(f"n={n} exceeds the transform guard {TRANSFORM_N_GUARD}")
    coefs = _butterfly(arr, n) / (1 << n)
    return FourierSpectrum(
        n, {Mask(n, t): coefs[t] for t in range(1 << n) if coefs[t] != 0.0}
    )


def inverse_transform_table(spec: FourierSpectrum) -> np.ndarray:
    """Full 2^n table of spec's reconstruction, indexed by mask bits."""
    if spec.n > TRANSFORM_N_GUARD:
        raise CapacityError(
            f"n={spec.n} exceeds the transform guard {TRANSFORM_N_GUARD}"
        )
    arr = np.zeros(1 << spec.n, dtype=np.float64)
    for m, c in spec.coeffs.items():
        arr[m.bits] = c
    return _butterfly(arr, spec.n)


def _submasks(bits: int):
    sub = bits
    while True:
        yield sub
        if sub == 0:
            return
        sub = (sub - 1) & bits


def fourier_to_mobius(spec: FourierSpectrum) -> MobiusSpectrum:
    """Convert parity coefficients to monomial coefficients.

    I(T) = (-2)^{|T|} * sum of F(S) over stored supersets S of T; the output
    support lies inside the down-closure of the input support.
    """
    acc: dict[int, float] = {}
    for m, c in spec.coeffs.items():
        for sub in _submasks(m.bits):
            acc[sub] = acc.get(sub, 0.0) + c
    out = {
        Mask(spec.n, b): float((-2) ** b.bit_count()) * v for b, v in acc.items()
    }
    return MobiusSpectrum(spec.n, out)


def down_closure(keys: Sequence[Mask], n: int) -> set[int]:
    """All subset bitmasks of the given keys (including the empty set)."""
    out: set[int] = set()
    for k in keys:
        out.update(_submasks(k.bits))
    return out


def sparsify(spec: FourierSpectrum, k: int) -> FourierSpectrum:
    """Keep the k largest coefficients by |value|.

    Ties break toward smaller cardinality, then lexicographic index order.
    Identity when the support is already within k.
    """
    if k < 1:
        raise InvalidArgumentError(f"k must be >= 1, got {k}")
    if len(spec.coeffs) <= k:
        return spec
    kept = spec.items_ranked()[:k]
    return FourierSpectrum(spec.n, dict(kept))


@dataclass
class RefineResult:
    """Outcome of least-squares coefficient refinement.

    accepted records which branch was taken: True means the refit
    coefficients had lower cross-validated MSE and were returned, False
    means the input spectrum was returned unchanged.
    """

    spectrum: FourierSpectrum
    accepted: bool
    cv_mse_refined: float
    cv_mse_original: float


def _fold_slices(m: int, folds: int, seed: int) -> list[np.ndarray]:
    perm = np.random.default_rng(seed).permutation(m)
    bounds = [m * i // folds for i in range(folds + 1)]
    return [perm[bounds[i] : bounds[i + 1]] for i in range(folds)]


def refine(
    spec: FourierSpectrum,
    data: MaskDataset,
    folds: int = 5,
    seed: int = 0,
) -> RefineResult:
    """Re-estimate coefficients on the fixed support by ordinary least
    squares against the parity design, keeping the refit only if it lowers
    folds-fold cross-validated MSE.

    Rank-deficient designs are solved by minimum-norm least squares; that
    is expected with sampled masks and is not an error.
    """
    if data.n != spec.n:
        raise InvalidArgumentError(f"data width {data.n} != spectrum {spec.n}")
    keys = [m for m, _ in spec.items_ranked()]
    m = len(data)
    if len(keys) > m:
        raise InvalidArgumentError(
            f"support size {len(keys)} exceeds sample count {m}"
        )
    if folds < 2:
        raise InvalidArgumentError(f"folds must be >= 2, got {folds}")
    if folds > m:
        raise InvalidArgumentError(f"folds {folds} exceeds sample count {m}")

    design = parity_design(data.masks(), keys, spec.n)
    y = data.values()
    base_pred = design @ np.array([spec.coeffs[k] for k in keys]) if keys else np.zeros(m)

    mse_ref, mse_orig = [], []
    for test_idx in _fold_slices(m, folds, seed):
        train = np.setdiff1d(np.arange(m), test_idx)
        coef, *_ = np.linalg.lstsq(design[train], y[train], rcond=None)
        mse_ref.append(float(np.mean((design[test_idx] @ coef - y[test_idx]) ** 2)))
        mse_orig.append(float(np.mean((base_pred[test_idx] - y[test_idx]) ** 2)))
    cv_ref = float(np.mean(mse_ref))
    cv_orig = float(np.mean(mse_orig))

    if cv_ref < cv_orig:
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        refined = FourierSpectrum(spec.n, dict(zip(keys, map(float, coef))))
        return RefineResult(refined, True, cv_ref, cv_orig)
    return RefineResult(spec, False, cv_ref, cv_orig)


def save_spectrum(path: str, spec: FourierSpectrum | MobiusSpectrum) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps({"n": spec.n, "basis": spec.basis}) + "\n")
        entries = sorted(
            spec.coeffs.items(),
            key=lambda kv: (-abs(kv[1]), len(kv[0]), kv[0].indices()),
        )
        for m, c in entries:
            fh.write(json.dumps({"set": list(m.indices()), "coef": c}) + "\n")


def load_spectrum(path: str) -> FourierSpectrum | MobiusSpectrum:
    with open(path) as fh:
        header = json.loads(fh.readline())
        n = int(header["n"])
        basis = header.get("basis", "fourier")
        coeffs = {}
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            coeffs[Mask.from_indices(n, obj["set"])] = float(obj["coef"])
    if basis == "fourier":
        return FourierSpectrum(n, coeffs)
    if basis == "mobius":
        return MobiusSpectrum(n, coeffs)
    raise InvalidArgumentError(f"unknown basis {basis!r} in {path}")
