"""Clonal selection and hybrid genetic-immune search over chromosomes.

Every random draw comes from one ``numpy.random.Generator`` in a fixed
order, so a run is fully determined by ``EvolveConfig.seed``. Affinity is
training accuracy and is cached on each antibody when it is created.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .ca_core import Chromosome, as_rng, classify_batch, synth_random_chromosome
from .errors import ContractError, LoadError

MODES = ("clonal", "hybrid")


@dataclass(frozen=True)
class PatternSet:
    """Binary patterns (rows) with one 0/1 label each."""

    patterns: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.patterns, dtype=np.uint8)
        y = np.asarray(self.labels, dtype=np.uint8).reshape(-1)
        if X.ndim != 2:
            raise ContractError(f"patterns must be a 2-D array, got shape {X.shape}")
        if len(X) != len(y):
            raise ContractError(f"{len(X)} patterns but {len(y)} labels")
        object.__setattr__(self, "patterns", X)
        object.__setattr__(self, "labels", y)

    @property
    def width(self) -> int:
        return self.patterns.shape[1]

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class Antibody:
    chromosome: Chromosome
    affinity: float
    id: int

    @property
    def sort_key(self):
        return (-self.affinity, self.id)


@dataclass
class Population:
    members: list[Antibody]
    memory: list[Antibody]
    size: int
    next_id: int = 0

    @property
    def best(self) -> Antibody:
        return self.memory[0]

    def mean_affinity(self) -> float:
        return float(np.mean([a.affinity for a in self.members]))


@dataclass(frozen=True)
class EvolveConfig:
    pop_size: int = 30
    n_select: int = 10
    clone_factor: float = 1.0
    mutation_sharpness: float = 5.0
    d_replace: int = 3
    crossover_count: int = 4
    max_generations: int = 200
    plateau_window: int = 30
    seed: int = 0
    mode: str = "clonal"
    # extensions beyond the core parameter set
    inner_repeats: int = 3
    n_segments: int = 2
    stochastic_replace: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ContractError(f"mode must be one of {MODES}, got {self.mode!r}")
        for name in ("pop_size", "n_select", "max_generations", "plateau_window", "inner_repeats", "n_segments"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be positive, got {getattr(self, name)}")
        if self.d_replace < 0 or self.crossover_count < 0:
            raise ContractError("d_replace and crossover_count must be non-negative")
        if self.n_select > self.pop_size:
            raise ContractError(f"n_select ({self.n_select}) exceeds pop_size ({self.pop_size})")
        if self.d_replace >= self.pop_size:
            raise ContractError(f"d_replace ({self.d_replace}) must be below pop_size ({self.pop_size})")
        if self.clone_factor <= 0 or self.mutation_sharpness <= 0:
            raise ContractError("clone_factor and mutation_sharpness must be positive")

    @classmethod
    def from_dict(cls, doc: dict) -> "EvolveConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ContractError(f"unknown evolve config fields: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path: str | Path) -> "EvolveConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise LoadError(f"cannot read evolve config {path}: {exc}") from exc
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return asdict(self)


class GenerationStats(NamedTuple):
    generation: int
    best_affinity: float
    mean_affinity: float


def affinity(c: Chromosome, data: PatternSet) -> float:
    """Fraction of ``data`` that ``c`` labels correctly."""
    if len(data) == 0:
        raise ContractError("affinity needs at least one pattern")
    if data.width != c.width:
        raise ContractError(f"pattern width {data.width} does not match chromosome width {c.width}")
    return float(np.mean(classify_batch(c, data.patterns) == data.labels))


def clone_count(rank: int, cfg: EvolveConfig) -> int:
    """Clones allotted to the rank-th best antibody (rank starts at 1)."""
    return max(1, math.floor(cfg.clone_factor * cfg.pop_size / rank + 0.5))


def mutation_rate(aff: float, sharpness: float, bit_length: int) -> float:
    """Per-bit flip probability; falls as affinity rises, never below one flip per chromosome."""
    return min(1.0, max(1.0 / bit_length, math.exp(-sharpness * aff)))


def _repair(flat: np.ndarray, lengths: Sequence[int], rng: np.random.Generator) -> np.ndarray:
    pos = 0
    for L in lengths:
        if not flat[pos:pos + L].any():
            flat[pos + int(rng.integers(L))] = 1
        pos += L
    return flat


def hypermutate(c: Chromosome, rate: float, rng: np.random.Generator) -> Chromosome:
    flat = np.array(c.flat_bits(), dtype=np.uint8)
    flat ^= (rng.random(flat.size) < rate).astype(np.uint8)
    return Chromosome.from_flat(_repair(flat, c.ds.lengths, rng), c.ds.lengths)


def repair(c: Chromosome, rng: np.random.Generator) -> Chromosome:
    """Set one random bit in every all-zero segment vector; other bits untouched."""
    if not any(seg.is_zero for seg in c.ds.segments):
        return c
    flat = np.array(c.flat_bits(), dtype=np.uint8)
    return Chromosome.from_flat(_repair(flat, c.ds.lengths, rng), c.ds.lengths)


def single_point_crossover(
    p1: Chromosome, p2: Chromosome, rng: np.random.Generator | int | None = None, q: int | None = None
) -> tuple[Chromosome, Chromosome]:
    """Exchange the tails of the two flat bit strings after position ``q``.

    ``q`` is drawn from [1, n-1] unless given. Offspring 1 keeps the segment
    layout of ``p1`` and offspring 2 that of ``p2``. Offspring may carry an
    all-zero segment vector; callers that need valid chromosomes pass them
    through :func:`repair`.
    """
    a, b = p1.flat_bits(), p2.flat_bits()
    n = len(a)
    if len(b) != n:
        raise ContractError(f"parents flatten to different lengths ({n} vs {len(b)})")
    if n < 2:
        raise ContractError("crossover needs at least two bits")
    if q is None:
        q = int(as_rng(rng).integers(1, n))
    if not 1 <= q <= n - 1:
        raise ContractError(f"crossover point {q} outside [1, {n - 1}]")
    return (
        Chromosome.from_flat(a[:q] + b[q:], p1.ds.lengths),
        Chromosome.from_flat(b[:q] + a[q:], p2.ds.lengths),
    )


# --------------------------------------------------------------------------
# Population bookkeeping
# --------------------------------------------------------------------------


class _Factory:
    """Hands out antibody ids in creation order and evaluates affinity."""

    def __init__(self, data: PatternSet, next_id: int):
        self.data = data
        self.next_id = next_id

    def make(self, c: Chromosome) -> Antibody:
        ab = Antibody(c, affinity(c, self.data), self.next_id)
        self.next_id += 1
        return ab


def _ranked(items: Sequence[Antibody]) -> list[Antibody]:
    return sorted(items, key=lambda a: a.sort_key)


def _update_memory(memory: list[Antibody], new: Sequence[Antibody], keep: int) -> list[Antibody]:
    seen = {a.id for a in memory}
    pool = list(memory) + [a for a in new if a.id not in seen]
    return _ranked(pool)[:keep]


def _chromosome_segments(cfg: EvolveConfig, width: int) -> int:
    return min(cfg.n_segments, width)


def _fresh(factory: _Factory, cfg: EvolveConfig, rng: np.random.Generator) -> Antibody:
    width = factory.data.width
    return factory.make(synth_random_chromosome(width, _chromosome_segments(cfg, width), rng))


def _worst_index(members: Sequence[Antibody]) -> int:
    return max(range(len(members)), key=lambda i: members[i].sort_key)


def _worst_indices(members: Sequence[Antibody], d: int, cfg: EvolveConfig, rng: np.random.Generator) -> list[int]:
    if d == 0:
        return []
    order = sorted(range(len(members)), key=lambda i: members[i].sort_key, reverse=True)
    if not cfg.stochastic_replace:
        return order[:d]
    # linear ranking: the worst member has the largest replacement weight
    weights = np.arange(len(order), 0, -1, dtype=float)
    picks = rng.choice(len(order), size=d, replace=False, p=weights / weights.sum())
    return [order[i] for i in sorted(picks)]


def init_population(data: PatternSet, cfg: EvolveConfig, rng: np.random.Generator | int | None = None) -> Population:
    rng = as_rng(rng)
    factory = _Factory(data, 0)
    members = [_fresh(factory, cfg, rng) for _ in range(cfg.pop_size)]
    return Population(members, _update_memory([], members, cfg.n_select), cfg.pop_size, factory.next_id)


def _check(p: Population, cfg: EvolveConfig, data: PatternSet) -> None:
    if p.size != cfg.pop_size or len(p.members) != cfg.pop_size:
        raise ContractError(f"population holds {len(p.members)} members, config expects {cfg.pop_size}")
    if not p.memory:
        raise ContractError("population has not been evaluated")
    if p.members[0].chromosome.width != data.width:
        raise ContractError("population chromosomes do not match the pattern width")


def _clone_and_mutate(parent: Antibody, rank: int, cfg: EvolveConfig, factory: _Factory, rng) -> list[Antibody]:
    c = parent.chromosome
    rate = mutation_rate(parent.affinity, cfg.mutation_sharpness, c.bit_length)
    return [factory.make(hypermutate(c, rate, rng)) for _ in range(clone_count(rank, cfg))]


def clonal_generation(
    p: Population, cfg: EvolveConfig, data: PatternSet, rng: np.random.Generator | int | None = None
) -> Population:
    """One pass of the six-step clonal selection loop."""
    _check(p, cfg, data)
    rng = as_rng(rng)
    factory = _Factory(data, p.next_id)
    members = list(p.members)
    memory = list(p.memory)

    # (1) candidates are P together with the memory cells
    member_ids = {a.id for a in members}
    candidates = members + [a for a in memory if a.id not in member_ids]
    # (2) n best
    selected = _ranked(candidates)[:cfg.n_select]

    matured: list[Antibody] = []
    for rank, parent in enumerate(selected, start=1):
        # (3) clone, (4) hypermutate
        group = _clone_and_mutate(parent, rank, cfg, factory, rng)
        matured.extend(group)
        # (5) an improved clone takes its parent's slot, or the worst slot if the parent lives only in memory
        champ = _ranked(group)[0]
        if champ.affinity <= parent.affinity:
            continue
        slot = next((i for i, a in enumerate(members) if a.id == parent.id), None)
        if slot is None:
            slot = _worst_index(members)
            if members[slot].affinity >= champ.affinity:
                continue
        members[slot] = champ

    memory = _update_memory(memory, matured, cfg.n_select)

    # (6) diversity: fresh antibodies replace the lowest-affinity members
    fresh = []
    for idx in _worst_indices(members, cfg.d_replace, cfg, rng):
        members[idx] = _fresh(factory, cfg, rng)
        fresh.append(members[idx])
    memory = _update_memory(memory, fresh, cfg.n_select)

    return Population(members, memory, cfg.pop_size, factory.next_id)


def hybrid_generation(
    p: Population, cfg: EvolveConfig, data: PatternSet, rng: np.random.Generator | int | None = None
) -> Population:
    """Clone/mutate/crossover rounds followed by one random-injection step."""
    _check(p, cfg, data)
    rng = as_rng(rng)
    factory = _Factory(data, p.next_id)
    members = list(p.members)
    memory = list(p.memory)

    for _ in range(cfg.inner_repeats):
        selected = _ranked(members)[:cfg.n_select]
        champions = []
        for rank, parent in enumerate(selected, start=1):
            group = _clone_and_mutate(parent, rank, cfg, factory, rng)
            memory = _update_memory(memory, group, cfg.n_select)
            champions.append(_ranked(group)[0])
        members.extend(champions)

        offspring = []
        for _ in range(cfg.crossover_count):
            i, j = rng.choice(len(members), size=2, replace=False)
            for child in single_point_crossover(members[i].chromosome, members[j].chromosome, rng):
                offspring.append(factory.make(repair(child, rng)))
        # offspring displace the current low-fitness items
        worst = sorted(range(len(members)), key=lambda k: members[k].sort_key, reverse=True)
        for slot, child in zip(worst, offspring):
            members[slot] = child
        memory = _update_memory(memory, offspring, cfg.n_select)

    members = _ranked(members)[:cfg.pop_size]

    fresh = []
    for idx in _worst_indices(members, cfg.d_replace, cfg, rng):
        members[idx] = _fresh(factory, cfg, rng)
        fresh.append(members[idx])
    memory = _update_memory(memory, fresh, cfg.n_select)

    return Population(members, memory, cfg.pop_size, factory.next_id)


GENERATIONS: dict[str, Callable[..., Population]] = {
    "clonal": clonal_generation,
    "hybrid": hybrid_generation,
}


def evolve(
    data: PatternSet,
    cfg: EvolveConfig,
    on_generation: Callable[[Population, GenerationStats], None] | None = None,
) -> tuple[Antibody, list[GenerationStats]]:
    """Run the configured search and return the best memory antibody with per-generation stats."""
    if len(data) == 0:
        raise ContractError("evolve needs at least one pattern")
    rng = np.random.default_rng(cfg.seed)
    pop = init_population(data, cfg, rng)
    step_fn = GENERATIONS[cfg.mode]

    history: list[GenerationStats] = []
    best_seen = pop.best.affinity
    stale = 0
    for gen in range(1, cfg.max_generations + 1):
        pop = step_fn(pop, cfg, data, rng)
        stats = GenerationStats(gen, pop.best.affinity, pop.mean_affinity())
        history.append(stats)
        if on_generation is not None:
            on_generation(pop, stats)
        if stats.best_affinity > best_seen:
            best_seen, stale = stats.best_affinity, 0
        else:
            stale += 1
            if stale >= cfg.plateau_window:
                break
    return pop.best, history


def history_csv(history: Sequence[GenerationStats]) -> str:
    buf = io.StringIO()
    buf.write("generation,best_affinity,mean_affinity\n")
    for h in history:
        buf.write(f"{h.generation},{h.best_affinity:.6f},{h.mean_affinity:.6f}\n")
    return buf.getvalue()
