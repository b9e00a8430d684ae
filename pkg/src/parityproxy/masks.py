"""Feature universes, masks, mask sampling, and pluggable value functions.

A mask is the subset of the n features that stays visible to the black box;
everything downstream (proxy fitting, spectra, attribution) consumes
(mask, value) pairs produced here.

Randomness policy: every sampling routine takes an integer seed and drives
numpy's PCG64 generator (``np.random.default_rng``). The generator name is
recorded in run reports so results can be reproduced bit for bit.
"""

from __future__ import annotations

import json
import os
import subprocess
import threading
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InvalidArgumentError, ProviderError

GENERATOR_NAME = "numpy.random.PCG64"

DEFAULT_BATCH_SIZE = 256


class Mask:
    """An immutable subset of [n], stored as an integer bitset.

    Bit i set means feature i is retained (unmasked). Equality and hashing
    are by bit content only, so masks are usable as sparse-spectrum keys.
    """

    __slots__ = ("n", "bits")

    def __init__(self, n: int, bits: int = 0):
        if n < 0:
            raise InvalidArgumentError(f"mask width must be >= 0, got {n}")
        if bits < 0 or bits >> n:
            raise InvalidArgumentError(
                f"bits 0x{bits:x} do not fit in a width-{n} mask"
            )
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "bits", bits)

    def __setattr__(self, name, value):
        raise AttributeError("Mask is immutable")

    @classmethod
    def from_indices(cls, n: int, indices: Iterable[int]) -> "Mask":
        bits = 0
        for i in indices:
            if i < 0 or i >= n:
                raise InvalidArgumentError(f"index {i} out of range for n={n}")
            bits |= 1 << i
        return cls(n, bits)

    @classmethod
    def from_bitstring(cls, s: str) -> "Mask":
        """Parse a '0'/'1' string with index 0 leftmost."""
        bits = 0
        for i, ch in enumerate(s):
            if ch == "1":
                bits |= 1 << i
            elif ch != "0":
                raise InvalidArgumentError(f"bad character {ch!r} in bitstring")
        return cls(len(s), bits)

    @classmethod
    def full(cls, n: int) -> "Mask":
        return cls(n, (1 << n) - 1)

    def indices(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.n) if self.bits >> i & 1)

    def to_bitstring(self) -> str:
        return "".join("1" if self.bits >> i & 1 else "0" for i in range(self.n))

    def __contains__(self, i: int) -> bool:
        return 0 <= i < self.n and bool(self.bits >> i & 1)

    def __iter__(self) -> Iterator[int]:
        return iter(self.indices())

    def __len__(self) -> int:
        return self.bits.bit_count()

    def __eq__(self, other) -> bool:
        return isinstance(other, Mask) and self.bits == other.bits

    def __hash__(self) -> int:
        return hash(self.bits)

    def __repr__(self) -> str:
        return f"Mask(n={self.n}, {{{','.join(map(str, self.indices()))}}})"


@dataclass
class MaskDataset:
    """Ordered (mask, value) pairs over a common width n.

    Duplicates are allowed: sampling is with replacement and proxy fitting
    tolerates repeats.
    """

    n: int
    samples: list[tuple[Mask, float]] = field(default_factory=list)

    def __post_init__(self):
        for m, _ in self.samples:
            if m.n != self.n:
                raise InvalidArgumentError(
                    f"mask width {m.n} != dataset width {self.n}"
                )

    def __len__(self) -> int:
        return len(self.samples)

    def masks(self) -> list[Mask]:
        return [m for m, _ in self.samples]

    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.samples], dtype=float)

    def bool_matrix(self) -> np.ndarray:
        """Samples-by-features 0/1 matrix (row i = mask i)."""
        out = np.zeros((len(self.samples), self.n), dtype=np.uint8)
        for r, (m, _) in enumerate(self.samples):
            for i in m.indices():
                out[r, i] = 1
        return out

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write(json.dumps({"n": self.n}) + "\n")
            for m, v in self.samples:
                fh.write(json.dumps({"mask": list(m.indices()), "value": v}) + "\n")

    @classmethod
    def load(cls, path: str) -> "MaskDataset":
        with open(path) as fh:
            header = json.loads(fh.readline())
            n = int(header["n"])
            samples = []
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                samples.append(
                    (Mask.from_indices(n, obj["mask"]), float(obj["value"]))
                )
        return cls(n, samples)


def sample_masks(n: int, count: int, seed: int) -> list[Mask]:
    """Draw `count` masks uniformly over the power set of [n].

    Each of the n bits is set independently with probability 1/2, which is
    the measure under which the parity basis is orthonormal. Sampling is
    with replacement and is a pure function of (n, count, seed).
    """
    if n < 1:
        raise InvalidArgumentError(f"need n >= 1, got {n}")
    if count < 1:
        raise InvalidArgumentError(f"need count >= 1, got {count}")
    rng = np.random.default_rng(seed)
    raw = rng.integers(0, 2, size=(count, n), dtype=np.uint8)
    packed = np.packbits(raw, axis=1, bitorder="little")
    return [Mask(n, int.from_bytes(row.tobytes(), "little")) for row in packed]


def subseed(seed: int, stream: int) -> int:
    """Derive an independent child seed for a named pipeline stage."""
    ss = np.random.SeedSequence(seed, spawn_key=(stream,))
    return int(ss.generate_state(1, np.uint64)[0])


class ValueFunction:
    """A deterministic real-valued function over masks, queried in batches.

    Subclasses set ``n`` and implement ``query``; identical masks must map
    to identical values within one session. ``query`` returns exactly one
    value per input mask, in order.
    """

    n: int

    def query(self, masks: Sequence[Mask]) -> list[float]:
        raise NotImplementedError

    def __call__(self, mask: Mask) -> float:
        return self.query([mask])[0]

    def close(self) -> None:
        pass


class TableValueFunction(ValueFunction):
    """Lookup-table provider; a partial table errors on missing subsets."""

    def __init__(self, n: int, table: Mapping[Mask, float]):
        self.n = n
        self._table = {}
        for m, v in table.items():
            if m.n != n:
                raise InvalidArgumentError(f"table key width {m.n} != n={n}")
            self._table[m.bits] = float(v)

    def query(self, masks: Sequence[Mask]) -> list[float]:
        out = []
        for m in masks:
            try:
                out.append(self._table[m.bits])
            except KeyError:
                raise ProviderError(
                    f"table has no entry for subset {sorted(m.indices())}"
                ) from None
        return out


class ConstantValueFunction(ValueFunction):
    def __init__(self, n: int, value: float):
        self.n = n
        self.value = float(value)

    def query(self, masks: Sequence[Mask]) -> list[float]:
        return [self.value] * len(masks)


class ExternalValueFunction(ValueFunction):
    """Subprocess provider speaking the line protocol.

    The command is spawned once with SPEX_VF_N set to the universe size.
    Per batch the engine writes one bitstring line per mask followed by a
    blank line; the child must answer with one decimal value per line, in
    order. Access to the child is serialized (single in-flight batch).
    """

    def __init__(self, cmd: Sequence[str] | str, n: int):
        self.n = n
        self._lock = threading.Lock()
        argv = [cmd] if isinstance(cmd, str) else list(cmd)
        env = dict(os.environ)
        env["SPEX_VF_N"] = str(n)
        try:
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
                env=env,
            )
        except OSError as exc:
            raise ProviderError(f"cannot spawn {argv[0]!r}: {exc}") from exc

    def query(self, masks: Sequence[Mask]) -> list[float]:
        with self._lock:
            if self._proc.poll() is not None:
                raise ProviderError(
                    f"provider exited with code {self._proc.returncode}"
                )
            try:
                for m in masks:
                    self._proc.stdin.write(m.to_bitstring() + "\n")
                self._proc.stdin.write("\n")
                self._proc.stdin.flush()
                out = []
                for k in range(len(masks)):
                    line = self._proc.stdout.readline()
                    if line == "":
                        raise ProviderError(
                            f"provider closed its output after {k} of "
                            f"{len(masks)} values"
                        )
                    try:
                        out.append(float(line.strip()))
                    except ValueError:
                        raise ProviderError(
                            f"provider wrote a non-numeric line: {line.strip()!r}"
                        ) from None
            except BrokenPipeError as exc:
                raise ProviderError("provider pipe closed") from exc
            return out

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.stdin.close()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def evaluate_dataset(
    vf: ValueFunction,
    masks: Sequence[Mask],
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> MaskDataset:
    """Query the value function over `masks` and pair results positionally."""
    if batch_size < 1:
        raise InvalidArgumentError(f"batch_size must be >= 1, got {batch_size}")
    for m in masks:
        if m.n != vf.n:
            raise InvalidArgumentError(
                f"mask width {m.n} does not match provider width {vf.n}"
            )
    samples: list[tuple[Mask, float]] = []
    for b, start in enumerate(range(0, len(masks), batch_size)):
        batch = masks[start : start + batch_size]
        try:
            values = vf.query(batch)
        except ProviderError as exc:
            raise ProviderError(str(exc), batch_index=b) from exc
        if len(values) != len(batch):
            raise ProviderError(
                f"provider returned {len(values)} values for a batch of "
                f"{len(batch)}",
                batch_index=b,
            )
        samples.extend(zip(batch, map(float, values)))
    return MaskDataset(vf.n, samples)


def make_value_function(spec: Mapping) -> ValueFunction:
    """Build a provider from a description.

    Kinds:
      table     {"kind": "table", "n": N, "entries": [{"mask": [...], "value": v}, ...]}
      synthetic {"kind": "synthetic", "family": ..., "n": N, "seed": s, ...}
      external  {"kind": "external", "cmd": argv-or-string, "n": N}
    """
    kind = spec.get("kind")
    if kind == "table":
        n = int(spec["n"])
        table = {
            Mask.from_indices(n, e["mask"]): float(e["value"])
            for e in spec["entries"]
        }
        return TableValueFunction(n, table)
    if kind == "synthetic":
        from . import synth  # deferred: synth builds on spectrum

        sspec = synth.SyntheticSpec(
            family=spec["family"],
            n=int(spec["n"]),
            num_sets=int(spec.get("num_sets", synth.DEFAULT_NUM_SETS)),
            cardinality=int(spec.get("cardinality", synth.DEFAULT_CARDINALITY)),
            seed=int(spec.get("seed", 0)),
        )
        vf, _ = synth.make_synthetic(sspec)
        return vf
    if kind == "external":
        if "cmd" not in spec or "n" not in spec:
            raise ConfigError("external provider needs 'cmd' and 'n'")
        return ExternalValueFunction(spec["cmd"], int(spec["n"]))
    raise ConfigError(f"unknown provider kind {kind!r}")


def load_value_function(path: str) -> ValueFunction:
    with open(path) as fh:
        return make_value_function(json.load(fh))


def load_mask_list(path: str) -> tuple[int, list[Mask]]:
    """Read a mask-list file: header {"n":N} then {"mask":[i,...]} per line."""
    with open(path) as fh:
        header = json.loads(fh.readline())
        n = int(header["n"])
        masks = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            masks.append(Mask.from_indices(n, json.loads(line)["mask"]))
    return n, masks


def save_mask_list(path: str, n: int, masks: Sequence[Mask]) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps({"n": n}) + "\n")
        for m in masks:
            fh.write(json.dumps({"mask": list(m.indices())}) + "\n")
