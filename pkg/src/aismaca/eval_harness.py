"""Three-state accuracy, confusion counts and CSV/JSON accuracy reports.

The published comparison tables ship as ``REFERENCE_TABLE`` and
``EXPERIMENT_TABLE``. They are values reported in the literature, kept
for side-by-side display, and are never produced by this package.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

from .errors import ContractError, LoadError

STATES = "HEC"
CSV_HEADER = ("method", "target", "accuracy_percent")


class ReferenceRow(NamedTuple):
    method: str
    target: str
    accuracy_percent: int


# method x target accuracy (percent), per published comparison
REFERENCE_TABLE: tuple[ReferenceRow, ...] = tuple(
    ReferenceRow(method, target, pct)
    for method, row in [
        ("DSP", (92, 70, 96)),
        ("PHD", (70, 68, 84)),
        ("SAM-T99", (68, 77, 87)),
        ("SS Pro", (70, 73, 81)),
        ("AIS-MACA", (90, 85, 97)),
        ("AIS-AIS-MACA", (92, 83, 96)),
    ]
    for target, pct in zip(("1PFC", "1PP2", "1QL8"), row)
)

# (target, experiment) -> accuracy percent; the experimental conditions are not documented
EXPERIMENT_TABLE: dict[tuple[str, str], int] = {
    ("1PFC", "Exp 1"): 65, ("1PFC", "Exp 2"): 65, ("1PFC", "Exp 3"): 69, ("1PFC", "Exp 4"): 71,
    ("1PP2", "Exp 5"): 85, ("1PP2", "Exp 6"): 90, ("1PP2", "Exp 7"): 83, ("1PP2", "Exp 8"): 87,
    ("1QL8", "Exp 9"): 85, ("1QL8", "Exp 10"): 90, ("1QL8", "Exp 11"): 82, ("1QL8", "Exp 12"): 91,
}


def _check_pair(pred: str, truth: str) -> None:
    if len(pred) != len(truth):
        raise ContractError(f"prediction has {len(pred)} residues, truth has {len(truth)}")
    if not truth:
        raise ContractError("cannot score empty structure strings")


def q3(pred: str, truth: str) -> float:
    _check_pair(pred, truth)
    return sum(p == t for p, t in zip(pred, truth)) / len(truth)


def confusion(pred: str, truth: str) -> list[list[int]]:
    """counts[true][predicted] with rows and columns ordered H, E, C."""
    _check_pair(pred, truth)
    counts = [[0] * 3 for _ in STATES]
    for p, t in zip(pred, truth):
        try:
            counts[STATES.index(t)][STATES.index(p)] += 1
        except ValueError:
            raise ContractError(f"unexpected structure symbols {t!r}/{p!r}") from None
    return counts


def to_percent(fraction: float) -> int:
    return round(fraction * 100)


@dataclass
class EvalReport:
    per_target: list[tuple[str, str, float]] = field(default_factory=list)  # (target, method, q3)
    confusion: list[list[int]] = field(default_factory=lambda: [[0] * 3 for _ in STATES])
    reference_table: list[ReferenceRow] = field(default_factory=list)

    @property
    def overall(self) -> float:
        if not self.per_target:
            return 0.0
        return sum(q for _, _, q in self.per_target) / len(self.per_target)

    @property
    def total_residues(self) -> int:
        return sum(map(sum, self.confusion))


def build_report(
    predictions: Mapping[str, str],
    truths: Mapping[str, str],
    method: str = "AIS-MACA",
    with_reference: bool = False,
) -> EvalReport:
    """Score every predicted id against its truth string; ids are visited in sorted order."""
    report = EvalReport(reference_table=list(REFERENCE_TABLE) if with_reference else [])
    for rid in sorted(predictions):
        if rid not in truths:
            raise ContractError(f"no truth structure for prediction {rid!r}")
        pred, truth = predictions[rid], truths[rid]
        report.per_target.append((rid, method, q3(pred, truth)))
        for i, row in enumerate(confusion(pred, truth)):
            for j, v in enumerate(row):
                report.confusion[i][j] += v
    return report


def reference_report() -> EvalReport:
    return EvalReport(reference_table=list(REFERENCE_TABLE))


def csv_rows(report: EvalReport) -> list[tuple[str, str, int]]:
    rows = [(method, target, to_percent(acc)) for target, method, acc in report.per_target]
    rows += [tuple(r) for r in report.reference_table]
    return rows


def render_report(report: EvalReport, fmt: str = "csv") -> str:
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        writer.writerows(csv_rows(report))
        return buf.getvalue()
    if fmt == "json":
        doc = {
            "per_target": [
                {"method": m, "target": t, "accuracy": acc, "accuracy_percent": to_percent(acc)}
                for t, m, acc in report.per_target
            ],
            "confusion": report.confusion,
            "overall": report.overall,
            "reference_table": [r._asdict() for r in report.reference_table],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    raise ContractError(f"unknown report format {fmt!r}; use 'csv' or 'json'")


def emit_report(report: EvalReport, fmt: str, path: str | Path) -> None:
    Path(path).write_text(render_report(report, fmt))


def parse_report_json(text: str) -> EvalReport:
    try:
        doc = json.loads(text)
        return EvalReport(
            per_target=[(r["target"], r["method"], float(r["accuracy"])) for r in doc["per_target"]],
            confusion=[list(map(int, row)) for row in doc["confusion"]],
            reference_table=[
                ReferenceRow(r["method"], r["target"], int(r["accuracy_percent"])) for r in doc["reference_table"]
            ],
        )
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise LoadError(f"malformed report: {exc}") from exc


def format_confusion(counts: Sequence[Sequence[int]]) -> str:
    lines = ["true\\pred  " + "  ".join(f"{s:>5}" for s in STATES)]
    for s, row in zip(STATES, counts):
        lines.append(f"{s:>9}  " + "  ".join(f"{v:>5}" for v in row))
    return "\n".join(lines)
