"""Binary cellular automata, attractor basins and dependency-vector classifiers.

States are tuples of 0/1 ints with cell 0 first. Where a state has to be
packed into an integer (attractor enumeration), cell 0 is the most
significant bit, so numeric order equals lexicographic order of the bit
string.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractError, ResourceLimitError

MAX_ENUM_CELLS = 24

Bits = tuple[int, ...]


def as_rng(rng: np.random.Generator | int | None) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _bits(value: Sequence[int] | str) -> Bits:
    if isinstance(value, str):
        if any(ch not in "01" for ch in value):
            raise ContractError(f"not a bit string: {value!r}")
        return tuple(int(ch) for ch in value)
    out = tuple(int(b) for b in value)
    if any(b not in (0, 1) for b in out):
        raise ContractError(f"bits must be 0 or 1, got {out}")
    return out


def bits_to_str(bits: Sequence[int]) -> str:
    return "".join(str(int(b)) for b in bits)


def state_to_int(bits: Sequence[int]) -> int:
    value = 0
    for b in bits:
        value = (value << 1) | int(b)
    return value


def int_to_state(value: int, n: int) -> Bits:
    return tuple((value >> (n - 1 - i)) & 1 for i in range(n))


# --------------------------------------------------------------------------
# Cellular automata
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CAConfig:
    """A null-boundary, radius-1 binary CA with one Wolfram rule per cell."""

    n: int
    rules: tuple[int, ...]

    def __post_init__(self):
        rules = tuple(int(r) for r in self.rules)
        object.__setattr__(self, "rules", rules)
        if self.n < 1:
            raise ContractError(f"cell count must be positive, got {self.n}")
        if len(rules) != self.n:
            raise ContractError(f"expected {self.n} rules, got {len(rules)}")
        bad = [r for r in rules if not 0 <= r <= 255]
        if bad:
            raise ContractError(f"rule numbers must lie in [0, 255], got {bad}")

    @classmethod
    def uniform(cls, n: int, rule: int) -> "CAConfig":
        return cls(n, (rule,) * n)

    @classmethod
    def from_rules(cls, rules: Sequence[int]) -> "CAConfig":
        return cls(len(rules), tuple(rules))


def step(ca: CAConfig, s: Sequence[int] | str) -> Bits:
    """Advance ``s`` by one synchronous update of ``ca``."""
    bits = _bits(s)
    if len(bits) != ca.n:
        raise ContractError(f"state has {len(bits)} cells, CA has {ca.n}")
    padded = (0,) + bits + (0,)
    return tuple(
        (ca.rules[i] >> (4 * padded[i] + 2 * padded[i + 1] + padded[i + 2])) & 1
        for i in range(ca.n)
    )


def successor_table(ca: CAConfig) -> np.ndarray:
    """Packed successor of every one of the 2**n states, as a uint32 array."""
    n = ca.n
    if n > MAX_ENUM_CELLS:
        raise ResourceLimitError(
            f"exhaustive enumeration limited to n <= {MAX_ENUM_CELLS} cells, got {n}"
        )
    states = np.arange(1 << n, dtype=np.uint32)
    nxt = np.zeros_like(states)
    zero = np.zeros_like(states)
    for i in range(n):
        shift = n - 1 - i
        centre = (states >> shift) & 1
        left = (states >> (shift + 1)) & 1 if i > 0 else zero
        right = (states >> (shift - 1)) & 1 if i < n - 1 else zero
        idx = (left << 2) | (centre << 1) | right
        nxt |= ((np.uint32(ca.rules[i]) >> idx) & 1) << shift
    return nxt


@dataclass(frozen=True)
class AttractorBasinMap:
    """Partition of the full state space into attractor basins.

    Basin ids are assigned in increasing order of each cycle's smallest
    state, and every cycle is stored rotated so that state comes first.
    """

    n: int
    attractors: tuple[tuple[int, ...], ...]
    basin_of: np.ndarray

    @property
    def basin_count(self) -> int:
        return len(self.attractors)

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.basin_of, minlength=self.basin_count)

    @property
    def cycle_lengths(self) -> tuple[int, ...]:
        return tuple(len(c) for c in self.attractors)

    def basin(self, state: Sequence[int] | str | int) -> int:
        key = state if isinstance(state, (int, np.integer)) else state_to_int(_bits(state))
        return int(self.basin_of[key])


def find_attractors(ca: CAConfig) -> AttractorBasinMap:
    """Enumerate every state of ``ca`` and group states by attractor cycle."""
    succ = successor_table(ca).tolist()
    total = len(succ)
    basin_of = [-1] * total
    cycles: list[list[int]] = []

    for start in range(total):
        if basin_of[start] != -1:
            continue
        on_path: dict[int, int] = {}
        path: list[int] = []
        s = start
        while basin_of[s] == -1 and s not in on_path:
            on_path[s] = len(path)
            path.append(s)
            s = succ[s]
        if basin_of[s] == -1:
            bid = len(cycles)
            cycles.append(path[on_path[s]:])
        else:
            bid = basin_of[s]
        for x in path:
            basin_of[x] = bid

    rotated = []
    for cyc in cycles:
        k = cyc.index(min(cyc))
        rotated.append(tuple(cyc[k:] + cyc[:k]))
    order = sorted(range(len(rotated)), key=lambda b: rotated[b][0])
    remap = np.empty(len(order), dtype=np.int64)
    remap[order] = np.arange(len(order))
    basin_arr = remap[np.asarray(basin_of, dtype=np.int64)]
    basin_arr.setflags(write=False)
    return AttractorBasinMap(ca.n, tuple(rotated[b] for b in order), basin_arr)


# --------------------------------------------------------------------------
# Dependency vectors and chromosomes
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DependencyVector:
    bits: Bits

    def __post_init__(self):
        bits = _bits(self.bits)
        if not bits:
            raise ContractError("dependency vector must have at least one bit")
        object.__setattr__(self, "bits", bits)

    def __len__(self) -> int:
        return len(self.bits)

    @property
    def is_zero(self) -> bool:
        return not any(self.bits)

    def __str__(self) -> str:
        return bits_to_str(self.bits)


@dataclass(frozen=True)
class DependencyString:
    segments: tuple[DependencyVector, ...]

    def __post_init__(self):
        segs = tuple(s if isinstance(s, DependencyVector) else DependencyVector(s) for s in self.segments)
        if not segs:
            raise ContractError("dependency string needs at least one segment")
        object.__setattr__(self, "segments", segs)

    @property
    def lengths(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.segments)

    @property
    def width(self) -> int:
        return sum(self.lengths)

    @property
    def m(self) -> int:
        return len(self.segments)


@dataclass(frozen=True)
class Chromosome:
    """Dependency string (classifier #1) followed by an m-bit vector (classifier #2)."""

    ds: DependencyString
    dv2: DependencyVector

    def __post_init__(self):
        if len(self.dv2) != self.ds.m:
            raise ContractError(
                f"dv2 has {len(self.dv2)} bits but the dependency string has {self.ds.m} segments"
            )

    @classmethod
    def from_bits(cls, segments: Sequence[Sequence[int] | str], dv2: Sequence[int] | str) -> "Chromosome":
        return cls(DependencyString(tuple(DependencyVector(s) for s in segments)), DependencyVector(dv2))

    @property
    def width(self) -> int:
        return self.ds.width

    @property
    def bit_length(self) -> int:
        return self.ds.width + len(self.dv2)

    def flat_bits(self) -> Bits:
        out: list[int] = []
        for seg in self.ds.segments:
            out.extend(seg.bits)
        out.extend(self.dv2.bits)
        return tuple(out)

    @classmethod
    def from_flat(cls, flat: Sequence[int], lengths: Sequence[int]) -> "Chromosome":
        flat = _bits(flat)
        if len(flat) != sum(lengths) + len(lengths):
            raise ContractError(f"flat length {len(flat)} does not fit layout {tuple(lengths)}")
        segs, pos = [], 0
        for L in lengths:
            segs.append(flat[pos:pos + L])
            pos += L
        return cls.from_bits(segs, flat[pos:])

    def effective_mask(self) -> np.ndarray:
        """Single GF(2) mask equivalent to the two-stage classifier."""
        parts = [np.asarray(seg.bits, dtype=np.uint8) * w for seg, w in zip(self.ds.segments, self.dv2.bits)]
        return np.concatenate(parts)

    def to_dict(self) -> dict:
        return {"segments": [str(s) for s in self.ds.segments], "dv2": str(self.dv2)}

    @classmethod
    def from_dict(cls, doc: dict) -> "Chromosome":
        try:
            return cls.from_bits(doc["segments"], doc["dv2"])
        except (KeyError, TypeError) as exc:
            raise ContractError(f"malformed chromosome document: {doc!r}") from exc


def ds_signature(ds: DependencyString, s: Sequence[int] | str) -> Bits:
    """Per-segment parity of the state against each dependency vector."""
    bits = _bits(s)
    if len(bits) != ds.width:
        raise ContractError(f"state has {len(bits)} cells, dependency string spans {ds.width}")
    out, pos = [], 0
    for seg in ds.segments:
        chunk = bits[pos:pos + len(seg)]
        out.append(sum(a & b for a, b in zip(chunk, seg.bits)) & 1)
        pos += len(seg)
    return tuple(out)


def classify(c: Chromosome, s: Sequence[int] | str) -> int:
    sig = ds_signature(c.ds, s)
    return sum(a & b for a, b in zip(sig, c.dv2.bits)) & 1


def classify_batch(c: Chromosome, patterns: np.ndarray) -> np.ndarray:
    """Vectorised :func:`classify` over the rows of a 0/1 matrix."""
    patterns = np.asarray(patterns)
    if patterns.ndim != 2 or patterns.shape[1] != c.width:
        raise ContractError(f"patterns of shape {patterns.shape} do not match width {c.width}")
    return (patterns.astype(np.int64) @ c.effective_mask().astype(np.int64)) & 1


def random_nonzero_bits(length: int, rng: np.random.Generator) -> Bits:
    while True:
        bits = rng.integers(0, 2, size=length)
        if bits.any():
            return tuple(int(b) for b in bits)


def random_composition(n: int, m: int, rng: np.random.Generator) -> tuple[int, ...]:
    """Uniform draw among the C(n-1, m-1) ordered ways to write n as m positive parts."""
    if not 1 <= m <= n:
        raise ContractError(f"need 1 <= m <= n, got n={n}, m={m}")
    cuts = np.sort(rng.choice(n - 1, size=m - 1, replace=False)) + 1 if m > 1 else np.array([], dtype=int)
    bounds = [0, *cuts.tolist(), n]
    return tuple(b - a for a, b in zip(bounds, bounds[1:]))


def synth_random_chromosome(n: int, m: int, rng: np.random.Generator | int | None = None) -> Chromosome:
    rng = as_rng(rng)
    lengths = random_composition(n, m, rng)
    segs = [random_nonzero_bits(L, rng) for L in lengths]
    return Chromosome.from_bits(segs, random_nonzero_bits(m, rng))
