"""Influential-feature identification on a sparse surrogate.

The surrogate is converted to the monomial basis, where choosing which
features to retain becomes a pseudo-Boolean program: maximize (or minimize)
the sum of monomial coefficients whose variables are all retained, subject
to retaining exactly n - r features. A monomial activates iff every member
feature is retained, which is the linear-program view with one 0/1 variable
per monomial tied to its singleton variables; here the program is solved
combinatorially, exactly by enumeration at small widths and by
depth-first branch-and-bound otherwise.

Features outside every monomial cannot move the objective; they fill the
remaining retained slots lowest-index-first, which keeps solutions
deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, InvalidArgumentError
from .masks import Mask
from .spectrum import FourierSpectrum, MobiusSpectrum, down_closure, fourier_to_mobius

BRUTE_VAR_GUARD = 24
DEFAULT_MAX_NODES = 10**6


@dataclass
class IdentProgram:
    """A cardinality-constrained monomial optimization instance.

    kplus is the down-closed family of monomial index sets (bitmasks);
    relevant_vars are the features that appear in it. retain is the exact
    number of features to keep out of n.
    """

    n: int
    mobius: MobiusSpectrum
    kplus: frozenset[int]
    relevant_vars: tuple[int, ...]
    retain: int
    direction: str

    def constant(self) -> float:
        return self.mobius[Mask(self.n, 0)]

    def monomials(self) -> list[tuple[int, float]]:
        """Nonzero nonempty monomials as (bitmask, coefficient)."""
        return sorted(
            (m.bits, c) for m, c in self.mobius.coeffs.items() if m.bits != 0
        )


@dataclass
class IdentSolution:
    mask: Mask
    objective: float
    optimality: str
    nodes_explored: int


def build_program(
    spec: FourierSpectrum, r: int, direction: str = "max"
) -> IdentProgram:
    """Convert a spectrum into the retain-(n-r) monomial program."""
    if direction not in ("max", "min"):
        raise InvalidArgumentError(f"direction must be max or min, not {direction!r}")
    if r < 0 or r > spec.n:
        raise InvalidArgumentError(f"r={r} out of range for n={spec.n}")
    mob = fourier_to_mobius(spec)
    kplus = frozenset(down_closure(list(mob.coeffs), spec.n))
    var_bits = 0
    for b in kplus:
        var_bits |= b
    relevant = tuple(i for i in range(spec.n) if var_bits >> i & 1)
    return IdentProgram(
        n=spec.n,
        mobius=mob,
        kplus=kplus,
        relevant_vars=relevant,
        retain=spec.n - r,
        direction=direction,
    )


def _feasible_relevant_range(program: IdentProgram) -> tuple[int, int]:
    """Bounds on how many relevant features the retained set may contain."""
    v = len(program.relevant_vars)
    removals = program.n - program.retain
    lo = max(0, v - removals)
    hi = min(v, program.retain)
    return lo, hi


def _finish_mask(program: IdentProgram, chosen_rel_bits: int) -> Mask:
    """Lift a relevant-variable assignment to a full retained mask, filling
    spare slots with the lowest-index irrelevant features."""
    bits = 0
    for j, feat in enumerate(program.relevant_vars):
        if chosen_rel_bits >> j & 1:
            bits |= 1 << feat
    need = program.retain - bits.bit_count()
    relevant_set = set(program.relevant_vars)
    for i in range(program.n):
        if need == 0:
            break
        if i not in relevant_set:
            bits |= 1 << i
            need -= 1
    return Mask(program.n, bits)


def _rel_monomials(program: IdentProgram) -> list[tuple[int, float]]:
    """Monomials re-indexed over positions in relevant_vars."""
    pos = {feat: j for j, feat in enumerate(program.relevant_vars)}
    out = []
    for bits, coef in program.monomials():
        rb = 0
        for i in range(bits.bit_length()):
            if bits >> i & 1:
                rb |= 1 << pos[i]
        out.append((rb, coef))
    return out


def _solve_brute(program: IdentProgram) -> IdentSolution:
    v = len(program.relevant_vars)
    if v > BRUTE_VAR_GUARD:
        raise CapacityError(
            f"{v} relevant variables exceed the brute-force guard {BRUTE_VAR_GUARD}"
        )
    lo, hi = _feasible_relevant_range(program)
    sign = 1.0 if program.direction == "max" else -1.0
    mons = _rel_monomials(program)

    best_val = -np.inf
    best_bits = 0
    total = 1 << v
    chunk = 1 << 16
    mon_bits = np.array([b for b, _ in mons], dtype=np.uint64)
    mon_coef = np.array([sign * c for _, c in mons], dtype=np.float64)
    explored = 0
    for start in range(0, total, chunk):
        stop = min(start + chunk, total)
        assign = np.arange(start, stop, dtype=np.uint64)
        sizes = np.bitwise_count(assign)
        ok = (sizes >= lo) & (sizes <= hi)
        if not ok.any():
            explored += stop - start
            continue
        assign = assign[ok]
        vals = np.zeros(len(assign))
        for b, c in zip(mon_bits, mon_coef):
            vals += np.where((assign & b) == b, c, 0.0)
        j = int(np.argmax(vals))
        if vals[j] > best_val:
            best_val = float(vals[j])
            best_bits = int(assign[j])
        explored += stop - start

    mask = _finish_mask(program, best_bits)
    objective = program.mobius.evaluate(mask)
    return IdentSolution(mask, objective, "proven", explored)


def _solve_bnb(program: IdentProgram, max_nodes: int) -> IdentSolution:
    lo, hi = _feasible_relevant_range(program)
    v = len(program.relevant_vars)
    sign = 1.0 if program.direction == "max" else -1.0
    mons = [(b, sign * c) for b, c in _rel_monomials(program)]

    # branch on variables in decreasing total |coefficient| participation
    part = [0.0] * v
    for b, c in mons:
        for j in range(v):
            if b >> j & 1:
                part[j] += abs(c)
    order = sorted(range(v), key=lambda j: (-part[j], j))
    var_bit = [1 << j for j in order]

    best_val = -np.inf
    best_bits = None
    nodes = 0
    exhausted = False

    def bound(chosen: int, removed: int) -> float:
        b = 0.0
        for mb, mc in mons:
            if mb & removed:
                continue
            if mc > 0.0:
                if (mb | chosen).bit_count() <= hi:
                    b += mc
            elif mb & ~chosen == 0:
                b += mc
        return b

    # iterative DFS; state = (pos, chosen_bits, removed_bits)
    stack = [(0, 0, 0)]
    while stack:
        if nodes >= max_nodes:
            exhausted = True
            break
        pos, chosen, removed = stack.pop()
        nodes += 1
        kept = chosen.bit_count()
        if kept > hi or kept + (v - pos) < lo:
            continue
        if best_bits is not None and bound(chosen, removed) <= best_val:
            continue
        if pos == v:
            val = 0.0
            for mb, mc in mons:
                if mb & ~chosen == 0:
                    val += mc
            if val > best_val:
                best_val = val
                best_bits = chosen
            continue
        bit = var_bit[pos]
        # explore retain before remove (LIFO: push remove first)
        stack.append((pos + 1, chosen, removed | bit))
        stack.append((pos + 1, chosen | bit, removed))

    if best_bits is None:
        # budget too small to reach any leaf: fall back to a feasible fill
        best_bits = 0
        for j in range(v):
            if best_bits.bit_count() >= lo:
                break
            best_bits |= 1 << j
    mask = _finish_mask(program, best_bits)
    objective = program.mobius.evaluate(mask)
    return IdentSolution(mask, objective, "heuristic" if exhausted else "proven", nodes)


def solve(
    program: IdentProgram,
    method: str = "bnb",
    max_nodes: int = DEFAULT_MAX_NODES,
) -> IdentSolution:
    """Solve the program exactly (method="brute", guarded width) or by
    branch-and-bound (method="bnb"); node-budget exhaustion downgrades the
    result to optimality="heuristic" instead of erroring.

    The returned objective is always the monomial-basis evaluation at the
    returned mask, so it is self-consistent with the surrogate.
    """
    if method == "brute":
        return _solve_brute(program)
    if method == "bnb":
        return _solve_bnb(program, max_nodes)
    raise InvalidArgumentError(f"unknown solve method {method!r}")


@dataclass
class InfluenceResult:
    """Outcome of the removal query: which retain-(n-r) mask moves the
    surrogate output farthest from its full-input value."""

    solution: IdentSolution
    direction: str
    surrogate_full: float
    surrogate_delta: float
    candidates: dict = field(default_factory=dict)


def most_influential_removal(
    spec: FourierSpectrum,
    r: int,
    method: str = "bnb",
    max_nodes: int = DEFAULT_MAX_NODES,
) -> InfluenceResult:
    """Find the r features whose removal moves the surrogate most.

    Solved as two runs (maximize and minimize the surrogate at the target
    cardinality), keeping whichever lands farther from the full-input
    surrogate value; ties keep the maximization branch.
    """
    full_val = spec.evaluate(Mask.full(spec.n))
    results = {}
    for direction in ("max", "min"):
        program = build_program(spec, r, direction)
        results[direction] = solve(program, method, max_nodes)
    d_max = abs(full_val - results["max"].objective)
    d_min = abs(full_val - results["min"].objective)
    direction = "max" if d_max >= d_min else "min"
    chosen = results[direction]
    return InfluenceResult(
        solution=chosen,
        direction=direction,
        surrogate_full=full_val,
        surrogate_delta=max(d_max, d_min),
        candidates={k: v.objective for k, v in results.items()},
    )
