"""Synthetic proteins for the demo and for self-checks.

Nothing here is real biology. The generators build sequences whose
structure labels follow exactly from a known model, so the pipeline's
output can be scored against ground truth.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .ca_core import as_rng
from .eval_harness import q3
from .protein_pipeline import (
    EncodingConfig,
    ProteinRecord,
    Signal,
    convolve,
    encode_hydrophobicity,
    predict_structure,
    threshold_decode,
)

DEMO_FILTER = (60.0, 45.0, 35.0, 25.0, 15.0, 10.0, 5.0)

# Kyte-Doolittle residue groups with disjoint value ranges, lowest first
CLASS_GROUPS = ("RKDE", "PYWS", "AMCF", "LVI")


def segment_states(length: int, rng: np.random.Generator, run_range: tuple[int, int] = (5, 12)) -> str:
    """Random H/E/C string built from runs of one state."""
    out: list[str] = []
    while len(out) < length:
        state = "HEC"[int(rng.integers(3))]
        out.extend(state * int(rng.integers(*run_range)))
    return "".join(out[:length])


def planted_protein(
    rid: str,
    length: int,
    filt: tuple[float, ...],
    cfg: EncodingConfig,
    rng: np.random.Generator,
    slack: float = 20.0,
) -> ProteinRecord:
    """Residues picked greedily so the filtered signal tracks a random state path.

    The returned structure is the band decoding of the planted filter's
    output, so it is exact for that filter whatever the greedy search hit.
    """
    letters = sorted(cfg.hydro_scale)
    values = np.array([cfg.hydro_scale[c] for c in letters])
    codes = dict(zip("HEC", cfg.structure_codes))
    goal = segment_states(length, rng)
    f = np.asarray(filt, dtype=float)
    hyd = np.zeros(length)
    seq = []
    for t in range(length):
        past = sum(f[k] * hyd[t - k] for k in range(1, len(f)) if t - k >= 0)
        err = np.abs(f[0] * values + past - codes[goal[t]])
        pick = int(rng.choice(np.flatnonzero(err <= err.min() + slack)))
        hyd[t] = values[pick]
        seq.append(letters[pick])
    structure = threshold_decode(convolve(Signal(hyd), Signal(f)), cfg)
    return ProteinRecord(rid, "".join(seq), structure)


def planted_family(
    count: int, length: int, cfg: EncodingConfig, rng: np.random.Generator | int | None = None,
    filt: tuple[float, ...] = DEMO_FILTER,
) -> list[ProteinRecord]:
    rng = as_rng(rng)
    return [planted_protein(f"syn{i:03d}", length, filt, cfg, rng) for i in range(count)]


def well_conditioned_protein(
    rid: str, length: int, cfg: EncodingConfig, rng: np.random.Generator | int | None = None,
    max_cond: float = 1e4, max_tries: int = 100_000,
) -> ProteinRecord:
    """Random protein whose square convolution system is well conditioned.

    With a filter as long as the sequence, the truncated convolution
    operator is square lower-triangular Toeplitz; most random sequences
    make it numerically singular, so draws are rejected until its
    condition number is at most ``max_cond``.
    """
    rng = as_rng(rng)
    letters = sorted(cfg.hydro_scale)
    for _ in range(max_tries):
        seq = "".join(letters[i] for i in rng.integers(len(letters), size=length))
        hyd = encode_hydrophobicity(seq, cfg).values
        T = scipy.linalg.convolution_matrix(hyd, length, mode="full")[:length]
        if np.linalg.cond(T) <= max_cond:
            return ProteinRecord(rid, seq, segment_states(length, rng))
    raise RuntimeError(f"no sequence with condition number <= {max_cond} in {max_tries} draws")


def planted_class_records(
    per_class: int, length: int, rng: np.random.Generator | int | None = None
) -> list[ProteinRecord]:
    """Two classes of alternating-group sequences.

    Class 0 alternates residues from the two most hydrophilic groups and
    class 1 from the two most hydrophobic ones. With equal record counts and
    even lengths each group holds a quarter of all residues, so 2-bit
    equal-population buckets coincide with the groups, and a window's class
    is a parity of its first two residues' bits.
    """
    if length % 2:
        raise ValueError("length must be even")
    rng = as_rng(rng)
    records = []
    for label, (ga, gb) in enumerate([(0, 1), (2, 3)]):
        for i in range(per_class):
            first = int(rng.integers(2))
            groups = [CLASS_GROUPS[ga], CLASS_GROUPS[gb]]
            seq = "".join(
                groups[(pos + first) % 2][int(rng.integers(len(groups[(pos + first) % 2])))] for pos in range(length)
            )
            records.append(ProteinRecord(f"c{label}_{i:03d}", seq, class_label=label))
    return records


@dataclass(frozen=True)
class DemoResult:
    predictions: dict[str, str]
    truths: dict[str, str]
    bases: dict[str, str]

    @property
    def per_target(self) -> list[tuple[str, float]]:
        return [(rid, q3(self.predictions[rid], self.truths[rid])) for rid in sorted(self.predictions)]

    @property
    def mean_q3(self) -> float:
        return float(np.mean([q for _, q in self.per_target]))


def run_demo(seed: int = 0, count: int = 20, length: int = 80, held_out: int = 5) -> DemoResult:
    """Planted-filter family: fit on the training members, predict the held-out ones."""
    cfg = EncodingConfig()
    rng = np.random.default_rng(seed)
    family = planted_family(count, length, cfg, rng)
    order = rng.permutation(count)
    train = [family[i] for i in order[held_out:]]
    test = [family[i] for i in sorted(order[:held_out])]
    preds, truths, bases = {}, {}, {}
    for target in test:
        pred = predict_structure(ProteinRecord(target.id, target.sequence), train, cfg)
        preds[target.id], truths[target.id], bases[target.id] = pred.structure, target.structure, pred.base_id
    return DemoResult(preds, truths, bases)
