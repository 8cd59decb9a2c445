"""FASTA-framed sequence and structure files, dataset manifests and splits."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractError, LoadError, ParseError
from .protein_pipeline import STRUCTURE_ALPHABET, Prediction, ProteinRecord


def parse_fasta(text: str) -> list[tuple[str, str]]:
    records: list[tuple[str, list[str], int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith(">"):
            parts = line[1:].split()
            if not parts:
                raise ParseError(f"line {lineno}: header without an id")
            records.append((parts[0], [], lineno))
        elif not records:
            raise ParseError(f"line {lineno}: sequence data before the first '>' header")
        else:
            records[-1][1].append("".join(line.split()).upper())

    out = []
    seen = set()
    for rid, chunks, lineno in records:
        seq = "".join(chunks)
        if not seq:
            raise ParseError(f"line {lineno}: record {rid!r} has no sequence")
        if rid in seen:
            raise ParseError(f"line {lineno}: duplicate record id {rid!r}")
        seen.add(rid)
        out.append((rid, seq))
    return out


def emit_fasta(records: Iterable[tuple[str, str]], width: int = 60) -> str:
    lines = []
    for rid, seq in records:
        lines.append(f">{rid}")
        lines.extend(seq[i:i + width] for i in range(0, len(seq), width))
    return "\n".join(lines) + ("\n" if lines else "")


def parse_labels(text: str) -> list[tuple[str, str]]:
    out = parse_fasta(text)
    for rid, ss in out:
        for pos, ch in enumerate(ss):
            if ch not in STRUCTURE_ALPHABET:
                raise ParseError(f"record {rid!r}: illegal structure symbol {ch!r} at position {pos}")
    return out


def read_text(path: str | Path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise LoadError(f"cannot read {path}: {exc.strerror or exc}") from exc


def read_fasta(path: str | Path) -> list[tuple[str, str]]:
    return parse_fasta(read_text(path))


def read_records(path: str | Path) -> list[ProteinRecord]:
    return [ProteinRecord(rid, seq) for rid, seq in read_fasta(path)]


def format_predictions(items: Sequence[tuple[str, Prediction]]) -> str:
    lines = []
    for rid, pred in items:
        lines.append(f">{rid} model={pred.base_id} residual={pred.residual:.6e}")
        lines.append(pred.structure)
    return "\n".join(lines) + ("\n" if lines else "")


@dataclass(frozen=True)
class LabeledDataset:
    records: tuple[ProteinRecord, ...]
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    seed: int
    class_count: int

    def __post_init__(self):
        ids = {r.id for r in self.records}
        train, test = set(self.train_ids), set(self.test_ids)
        if train & test:
            raise ContractError(f"ids in both train and test: {sorted(train & test)}")
        if train | test != ids:
            raise ContractError("train and test ids must cover every record")
        for r in self.records:
            if r.class_label is not None and not 0 <= r.class_label < self.class_count:
                raise ContractError(f"record {r.id} has class {r.class_label} outside 0..{self.class_count - 1}")

    def by_id(self) -> dict[str, ProteinRecord]:
        return {r.id: r for r in self.records}

    @property
    def train(self) -> list[ProteinRecord]:
        lookup = self.by_id()
        return [lookup[i] for i in self.train_ids]

    @property
    def test(self) -> list[ProteinRecord]:
        lookup = self.by_id()
        return [lookup[i] for i in self.test_ids]


def split_ids(ids: Sequence[str], fraction: float, seed: int) -> tuple[tuple[str, ...], tuple[str, ...]]:
    if not 0.0 <= fraction <= 1.0:
        raise ContractError(f"split_fraction must lie in [0, 1], got {fraction}")
    order = np.random.default_rng(seed).permutation(len(ids))
    shuffled = [ids[i] for i in order]
    cut = math.ceil(fraction * len(ids))
    return tuple(shuffled[:cut]), tuple(shuffled[cut:])


def _load_classes(spec, base: Path) -> dict[str, int]:
    if isinstance(spec, str):
        try:
            spec = json.loads(read_text(base / spec))
        except json.JSONDecodeError as exc:
            raise LoadError(f"class map {spec} is not valid JSON: {exc}") from exc
    if not isinstance(spec, dict):
        raise LoadError("classes must be an id -> label object or a path to one")
    try:
        return {str(k): int(v) for k, v in spec.items()}
    except (TypeError, ValueError) as exc:
        raise LoadError(f"class labels must be integers: {exc}") from exc


def load_dataset(manifest_path: str | Path) -> LabeledDataset:
    """Join sequences, optional structures and optional classes named by a JSON manifest.

    Paths inside the manifest are relative to the manifest's directory.
    """
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(read_text(manifest_path))
    except json.JSONDecodeError as exc:
        raise LoadError(f"manifest {manifest_path} is not valid JSON: {exc}") from exc
    if "sequences" not in manifest:
        raise LoadError(f"manifest {manifest_path} has no 'sequences' entry")
    base = manifest_path.parent

    seqs = read_fasta(base / manifest["sequences"])
    seq_ids = [rid for rid, _ in seqs]
    known = set(seq_ids)

    labels: dict[str, str] = {}
    if manifest.get("labels"):
        labels = dict(parse_labels(read_text(base / manifest["labels"])))
    classes = _load_classes(manifest["classes"], base) if manifest.get("classes") else {}

    for source, mapping in (("labels", labels), ("classes", classes)):
        for rid in mapping:
            if rid not in known:
                raise LoadError(f"{source} entry {rid!r} has no matching sequence")

    records = []
    for rid, seq in seqs:
        ss = labels.get(rid)
        if ss is not None and len(ss) != len(seq):
            raise LoadError(f"record {rid!r}: structure length {len(ss)} != sequence length {len(seq)}")
        label = classes.get(rid)
        if label is not None and label < 0:
            raise LoadError(f"record {rid!r}: negative class label {label}")
        records.append(ProteinRecord(rid, seq, ss, label))

    seed = int(manifest.get("seed", 0))
    train, test = split_ids(seq_ids, float(manifest.get("split_fraction", 0.8)), seed)
    class_count = max(classes.values()) + 1 if classes else 0
    return LabeledDataset(tuple(records), train, test, seed, class_count)


def write_dataset(
    directory: str | Path,
    records: Sequence[ProteinRecord],
    split_fraction: float = 0.8,
    seed: int = 0,
    name: str = "dataset",
) -> Path:
    """Write records as sequence/label/class files plus a manifest; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / f"{name}.fasta").write_text(emit_fasta((r.id, r.sequence) for r in records))
    manifest: dict = {"sequences": f"{name}.fasta", "split_fraction": split_fraction, "seed": seed}
    if any(r.structure for r in records):
        (directory / f"{name}.ss").write_text(emit_fasta((r.id, r.structure) for r in records if r.structure))
        manifest["labels"] = f"{name}.ss"
    if any(r.class_label is not None for r in records):
        manifest["classes"] = {r.id: r.class_label for r in records if r.class_label is not None}
    path = directory / f"{name}.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path
