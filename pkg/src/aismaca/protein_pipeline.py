"""Hydrophobicity signals, filter fitting and MACA class ensembles for proteins.

Structure prediction treats a protein as a linear system: the residue
hydrophobicity signal passes through a short FIR filter whose output,
read against per-state value bands, gives helix (H), strand (E) or
coil (C). The filter is fitted on the most similar protein of known
structure and applied to the target.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import numpy as np
import scipy.linalg

from .ca_core import Chromosome, classify_batch
from .errors import ContractError, EncodingError, LoadError, NumericalError
from .immune_evolve import EvolveConfig, PatternSet, evolve

STRUCTURE_ALPHABET = "HEC"
MIN_OVERLAP = 5


class CodeBandWarning(UserWarning):
    """Structure codes that do not decode back to their own state."""


@dataclass(frozen=True)
class ProteinRecord:
    id: str
    sequence: str
    structure: str | None = None
    class_label: int | None = None

    def __post_init__(self):
        if self.structure is not None:
            if len(self.structure) != len(self.sequence):
                raise ContractError(
                    f"record {self.id}: structure length {len(self.structure)} != sequence length {len(self.sequence)}"
                )
            bad = sorted(set(self.structure) - set(STRUCTURE_ALPHABET))
            if bad:
                raise ContractError(f"record {self.id}: structure contains {bad}")


@dataclass(frozen=True)
class Signal:
    values: np.ndarray
    role: str = "input"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(vals)):
            raise ContractError("signal values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.values)


# --------------------------------------------------------------------------
# Configuration
# --------------------------------------------------------------------------


def parse_scale(text: str) -> dict[str, float]:
    """Read ``LETTER<TAB>value`` lines; blank lines and ``#`` comments are skipped."""
    scale = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2 or len(parts[0]) != 1:
            raise LoadError(f"scale line {lineno}: expected 'LETTER<TAB>value', got {raw!r}")
        try:
            scale[parts[0].upper()] = float(parts[1])
        except ValueError as exc:
            raise LoadError(f"scale line {lineno}: bad value {parts[1]!r}") from exc
    return scale


def load_scale(path: str | Path | None = None) -> dict[str, float]:
    if path is None:
        text = resources.files("aismaca.data").joinpath("scale.tsv").read_text()
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise LoadError(f"cannot read hydrophobicity scale {path}: {exc}") from exc
    return parse_scale(text)


@dataclass(frozen=True)
class EncodingConfig:
    """Signal encoding, band decoding and filter-fit settings.

    ``tail`` controls how a per-residue output is matched to the longer
    full convolution when fitting: ``"truncate"`` drops the last L-1 rows of
    the convolution operator (the same trim :func:`convolve` applies),
    ``"pad"`` extends the output with coil codes instead.
    """

    hydro_scale: Mapping[str, float] = field(default_factory=load_scale)
    structure_codes: tuple[float, float, float] = (100.0, 700.0, 400.0)
    decode_bands: tuple[float, float, float, float] = (0.0, 200.0, 600.0, 800.0)
    filter_length: int = 7
    ridge: float = 1e-6
    tail: str = "truncate"

    def __post_init__(self):
        object.__setattr__(self, "structure_codes", tuple(float(v) for v in self.structure_codes))
        object.__setattr__(self, "decode_bands", tuple(float(v) for v in self.decode_bands))
        if len(self.structure_codes) != 3 or len(self.decode_bands) != 4:
            raise ContractError("need three structure codes and four band edges")
        h_lo, h_hi, s_lo, s_hi = self.decode_bands
        if h_lo > h_hi or s_lo > s_hi:
            raise ContractError(f"band edges out of order: {self.decode_bands}")
        if not (h_hi < s_lo or s_hi < h_lo):
            raise ContractError(f"helix and strand bands overlap: {self.decode_bands}")
        if self.filter_length < 1:
            raise ContractError(f"filter_length must be positive, got {self.filter_length}")
        if self.ridge < 0:
            raise ContractError(f"ridge must be non-negative, got {self.ridge}")
        if self.tail not in ("truncate", "pad"):
            raise ContractError(f"tail must be 'truncate' or 'pad', got {self.tail!r}")
        decoded = threshold_decode(Signal(self.structure_codes), self)
        if decoded != STRUCTURE_ALPHABET:
            warnings.warn(
                f"structure codes {self.structure_codes} decode to {decoded!r} under bands "
                f"{self.decode_bands}; encode/decode round trips will not hold",
                CodeBandWarning,
                stacklevel=3,
            )

    @classmethod
    def published_codes(cls, **kw) -> "EncodingConfig":
        """Codes 200/600/800 with bands 0-200 and 600-800 (coil code sits in the strand band)."""
        return cls(structure_codes=(200.0, 600.0, 800.0), **kw)

    @classmethod
    def published_alt_codes(cls, **kw) -> "EncodingConfig":
        """The alternative 400/800/1000 code set under the same bands."""
        return cls(structure_codes=(400.0, 800.0, 1000.0), **kw)

    @classmethod
    def from_dict(cls, doc: Mapping, base_dir: str | Path | None = None) -> "EncodingConfig":
        doc = dict(doc)
        known = {"scale", "structure_codes", "decode_bands", "filter_length", "ridge", "tail"}
        unknown = set(doc) - known
        if unknown:
            raise ContractError(f"unknown encoding config fields: {sorted(unknown)}")
        scale_path = doc.pop("scale", None)
        if scale_path is not None:
            p = Path(scale_path)
            if base_dir is not None and not p.is_absolute():
                p = Path(base_dir) / p
            doc["hydro_scale"] = load_scale(p)
        return cls(**doc)

    @classmethod
    def load(cls, path: str | Path) -> "EncodingConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise LoadError(f"cannot read encoding config {path}: {exc}") from exc
        return cls.from_dict(doc, Path(path).parent)


# --------------------------------------------------------------------------
# Encoding and decoding
# --------------------------------------------------------------------------


def encode_hydrophobicity(seq: str, cfg: EncodingConfig) -> Signal:
    values = []
    for pos, letter in enumerate(seq):
        try:
            values.append(cfg.hydro_scale[letter])
        except KeyError:
            raise EncodingError(f"no hydrophobicity value for {letter!r} at position {pos}") from None
    return Signal(values, "input")


def encode_structure(ss: str, cfg: EncodingConfig) -> Signal:
    codes = dict(zip(STRUCTURE_ALPHABET, cfg.structure_codes))
    values = []
    for pos, ch in enumerate(ss):
        try:
            values.append(codes[ch])
        except KeyError:
            raise EncodingError(f"structure symbol {ch!r} at position {pos} is not one of H, E, C") from None
    return Signal(values, "output")


def threshold_decode(o: Signal, cfg: EncodingConfig) -> str:
    h_lo, h_hi, s_lo, s_hi = cfg.decode_bands
    v = np.asarray(o.values)
    out = np.full(v.shape, "C")
    out[(v >= s_lo) & (v <= s_hi)] = "E"
    out[(v >= h_lo) & (v <= h_hi)] = "H"
    return "".join(out.tolist())


# --------------------------------------------------------------------------
# Similarity
# --------------------------------------------------------------------------


def similarity_score(a: Sequence[float], b: Sequence[float], min_overlap: int = MIN_OVERLAP) -> float:
    """Best Pearson correlation over all relative shifts with at least ``min_overlap`` residues."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    best = None
    for shift in range(-(len(b) - min_overlap), len(a) - min_overlap + 1):
        a0, b0 = max(0, shift), max(0, -shift)
        length = min(len(a) - a0, len(b) - b0)
        if length < min_overlap:
            continue
        x = a[a0:a0 + length] - a[a0:a0 + length].mean()
        y = b[b0:b0 + length] - b[b0:b0 + length].mean()
        nx, ny = np.linalg.norm(x), np.linalg.norm(y)
        if nx == 0 or ny == 0:
            continue
        r = float(np.clip(x @ y / (nx * ny), -1.0, 1.0))
        if best is None or r > best:
            best = r
    return 0.0 if best is None else best


def similarity_search(
    target: ProteinRecord, db: Sequence[ProteinRecord], cfg: EncodingConfig
) -> list[tuple[ProteinRecord, float]]:
    """Rank ``db`` by similarity to ``target``; best first, ties by record id."""
    if not db:
        raise ContractError("similarity search needs a non-empty database")
    t = encode_hydrophobicity(target.sequence, cfg).values
    scored = [(rec, similarity_score(t, encode_hydrophobicity(rec.sequence, cfg).values)) for rec in db]
    return sorted(scored, key=lambda rs: (-rs[1], rs[0].id))


# --------------------------------------------------------------------------
# Filter fitting and prediction
# --------------------------------------------------------------------------


def convolution_operator(i: Signal, length: int) -> np.ndarray:
    """(len(i) + length - 1) x length matrix T with T @ f == full convolution of i and f."""
    return scipy.linalg.convolution_matrix(np.asarray(i.values), length, mode="full")


def _fit_system(i_b: Signal, o_b: Signal, cfg: EncodingConfig) -> tuple[np.ndarray, np.ndarray]:
    L = cfg.filter_length
    n = len(i_b)
    if n < L:
        raise ContractError(f"input of length {n} is shorter than the filter length {L}")
    T = convolution_operator(i_b, L)
    o = np.asarray(o_b.values)
    if len(o) == n + L - 1:
        return T, o
    if len(o) != n:
        raise ContractError(f"output length {len(o)} matches neither {n} nor {n + L - 1}")
    if cfg.tail == "pad":
        return T, np.concatenate([o, np.full(L - 1, cfg.structure_codes[2])])
    return T[:n], o


def deconvolve(i_b: Signal, o_b: Signal, cfg: EncodingConfig) -> Signal:
    """Ridge least-squares filter F minimising |T(i_b) F - o_b|^2 + ridge |F|^2."""
    T, o = _fit_system(i_b, o_b, cfg)
    L = cfg.filter_length
    # augmented least squares has the same minimiser as the normal equations, without squaring cond(T)
    A = np.vstack([T, math.sqrt(cfg.ridge) * np.eye(L)])
    rhs = np.concatenate([o, np.zeros(L)])
    f, _, rank, _ = scipy.linalg.lstsq(A, rhs)
    if rank < L:
        raise NumericalError(
            f"convolution system is rank deficient (rank {rank} < {L}); use a ridge value > 0"
        )
    return Signal(f, "filter")


def fit_residual(i_b: Signal, o_b: Signal, f: Signal, cfg: EncodingConfig) -> float:
    """Root-mean-square misfit of the fitted equations (ridge term excluded)."""
    T, o = _fit_system(i_b, o_b, replace(cfg, filter_length=len(f)))
    return float(np.sqrt(np.mean((T @ np.asarray(f.values) - o) ** 2)))


def convolve(i_t: Signal, f: Signal) -> Signal:
    """Full linear convolution trimmed to ``len(i_t)`` so each residue gets one value."""
    if len(i_t) == 0 or len(f) == 0:
        raise ContractError("convolution operands must be non-empty")
    return Signal(np.convolve(i_t.values, f.values)[: len(i_t)], "output")


class Prediction(NamedTuple):
    structure: str
    base_id: str
    residual: float


def predict_structure(target: ProteinRecord, db: Sequence[ProteinRecord], cfg: EncodingConfig) -> Prediction:
    structured = [r for r in db if r.structure is not None]
    if not structured:
        raise ContractError("database has no record with a known structure")
    base, _ = similarity_search(target, structured, cfg)[0]
    i_b = encode_hydrophobicity(base.sequence, cfg)
    o_b = encode_structure(base.structure, cfg)
    f = deconvolve(i_b, o_b, cfg)
    residual = fit_residual(i_b, o_b, f, cfg)
    o_t = convolve(encode_hydrophobicity(target.sequence, cfg), f)
    return Prediction(threshold_decode(o_t, cfg), base.id, residual)


# --------------------------------------------------------------------------
# Window encoding and class ensembles
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class WindowEncoding:
    """Sliding residue windows quantised to ``bits_per_residue`` bits each.

    ``thresholds`` are the ascending bucket edges; a value equal to an edge
    falls in the upper bucket. Bucket indices are written most significant
    bit first.
    """

    window: int = 15
    bits_per_residue: int = 2
    thresholds: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "thresholds", tuple(float(t) for t in self.thresholds))
        if self.window < 1 or self.window % 2 == 0:
            raise ContractError(f"window must be a positive odd number, got {self.window}")
        if self.bits_per_residue < 1:
            raise ContractError("bits_per_residue must be positive")
        if self.thresholds and len(self.thresholds) != 2**self.bits_per_residue - 1:
            raise ContractError(
                f"{self.bits_per_residue} bits need {2**self.bits_per_residue - 1} thresholds, got {len(self.thresholds)}"
            )
        if list(self.thresholds) != sorted(self.thresholds):
            raise ContractError("thresholds must be ascending")

    @property
    def n(self) -> int:
        return self.window * self.bits_per_residue

    @property
    def fitted(self) -> bool:
        return bool(self.thresholds)

    def fit(self, sequences: Sequence[str], cfg: EncodingConfig) -> "WindowEncoding":
        """Equal-population bucket edges from every residue in ``sequences``."""
        values = np.concatenate([encode_hydrophobicity(s, cfg).values for s in sequences if s])
        if values.size == 0:
            raise ContractError("cannot fit quantisation thresholds without residues")
        levels = 2**self.bits_per_residue
        edges = np.quantile(values, np.arange(1, levels) / levels)
        return replace(self, thresholds=tuple(float(e) for e in edges))

    def residue_bits(self, seq: str, cfg: EncodingConfig) -> np.ndarray:
        if not self.fitted:
            raise ContractError("window encoding has no thresholds; fit it first")
        buckets = np.searchsorted(np.asarray(self.thresholds), encode_hydrophobicity(seq, cfg).values, side="right")
        shifts = np.arange(self.bits_per_residue - 1, -1, -1)
        return ((buckets[:, None] >> shifts) & 1).astype(np.uint8)

    def windows(self, seq: str, cfg: EncodingConfig) -> np.ndarray:
        """One row of ``n`` bits per window start position."""
        if len(seq) < self.window:
            raise ContractError(f"sequence of length {len(seq)} is shorter than the window ({self.window})")
        bits = self.residue_bits(seq, cfg)
        count = len(seq) - self.window + 1
        idx = np.arange(count)[:, None] + np.arange(self.window)[None, :]
        return bits[idx].reshape(count, self.n)

    def to_dict(self) -> dict:
        return {"window": self.window, "bits_per_residue": self.bits_per_residue, "thresholds": list(self.thresholds)}


@dataclass(frozen=True)
class ClassEnsemble:
    encoding: WindowEncoding
    chromosomes: tuple[Chromosome, ...]
    affinities: tuple[float, ...] = ()
    histories: tuple = field(default=(), compare=False, repr=False)

    @property
    def class_count(self) -> int:
        return len(self.chromosomes)

    def to_dict(self) -> dict:
        doc = self.encoding.to_dict()
        doc["chromosomes"] = [c.to_dict() for c in self.chromosomes]
        doc["affinities"] = list(self.affinities)
        return doc

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ClassEnsemble":
        try:
            enc = WindowEncoding(doc["window"], doc["bits_per_residue"], tuple(doc["thresholds"]))
            chroms = tuple(Chromosome.from_dict(c) for c in doc["chromosomes"])
        except (KeyError, TypeError) as exc:
            raise LoadError(f"malformed ensemble document: missing {exc}") from exc
        return cls(enc, chroms, tuple(doc.get("affinities", ())))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ClassEnsemble":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise LoadError(f"cannot read ensemble {path}: {exc}") from exc
        return cls.from_dict(doc)


def class_patterns(
    records: Sequence[ProteinRecord], target_class: int, enc: WindowEncoding, cfg: EncodingConfig
) -> PatternSet:
    """Windows of every record, labelled 1 when the record belongs to ``target_class``."""
    blocks, labels = [], []
    for rec in records:
        w = enc.windows(rec.sequence, cfg)
        blocks.append(w)
        labels.append(np.full(len(w), int(rec.class_label == target_class), dtype=np.uint8))
    return PatternSet(np.vstack(blocks), np.concatenate(labels))


def train_class_ensemble(
    records: Sequence[ProteinRecord],
    k: int,
    enc: WindowEncoding,
    evolve_cfg: EvolveConfig,
    cfg: EncodingConfig,
) -> ClassEnsemble:
    """Evolve one one-vs-rest chromosome per class; class c uses seed ``evolve_cfg.seed + c``."""
    if k < 1:
        raise ContractError(f"class count must be positive, got {k}")
    for rec in records:
        if rec.class_label is None or not 0 <= rec.class_label < k:
            raise ContractError(f"record {rec.id} has class label {rec.class_label!r}, expected 0..{k - 1}")
    present = {rec.class_label for rec in records}
    missing = [c for c in range(k) if c not in present]
    if missing:
        raise ContractError(f"no training records for classes {missing}")
    if not enc.fitted:
        enc = enc.fit([r.sequence for r in records], cfg)

    chromosomes, affinities, histories = [], [], []
    for c in range(k):
        data = class_patterns(records, c, enc, cfg)
        best, history = evolve(data, replace(evolve_cfg, seed=evolve_cfg.seed + c))
        chromosomes.append(best.chromosome)
        affinities.append(best.affinity)
        histories.append(history)
    return ClassEnsemble(enc, tuple(chromosomes), tuple(affinities), tuple(histories))


def classify_sequence(seq: str, ensemble: ClassEnsemble, cfg: EncodingConfig) -> tuple[int, list[float]]:
    """Vote share of each class chromosome over the windows of ``seq``; ties go to the lower class."""
    X = ensemble.encoding.windows(seq, cfg)
    votes = [float(classify_batch(c, X).mean()) for c in ensemble.chromosomes]
    return int(np.argmax(votes)), votes

