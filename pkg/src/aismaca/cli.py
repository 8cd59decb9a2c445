"""Command-line entry point: ``aismaca <command> [flags]``.

Exit status is 0 on success, 1 on a data or runtime error (one-line
diagnostic on stderr) and 2 on a usage error.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .ca_core import CAConfig, bits_to_str, find_attractors, int_to_state, synth_random_chromosome
from .data_io import format_predictions, load_dataset, parse_labels, read_records, read_text
from .errors import AisMacaError, ContractError
from .eval_harness import build_report, emit_report, format_confusion
from .immune_evolve import EvolveConfig, history_csv
from .protein_pipeline import (
    ClassEnsemble,
    EncodingConfig,
    WindowEncoding,
    classify_sequence,
    load_scale,
    predict_structure,
    train_class_ensemble,
)
from .synthetic import run_demo


def _encoding(args) -> EncodingConfig:
    cfg = EncodingConfig.load(args.config) if getattr(args, "config", None) else EncodingConfig()
    if getattr(args, "scale", None):
        cfg = replace(cfg, hydro_scale=load_scale(args.scale))
    return cfg


def cmd_train(args) -> int:
    dataset = load_dataset(args.manifest)
    if dataset.class_count == 0:
        raise ContractError(f"manifest {args.manifest} carries no class labels")
    cfg = EvolveConfig.load(args.config) if args.config else EvolveConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    enc_cfg = EncodingConfig(hydro_scale=load_scale(args.scale)) if args.scale else EncodingConfig()
    ensemble = train_class_ensemble(
        dataset.train, dataset.class_count, WindowEncoding(args.window, args.bits), cfg, enc_cfg
    )
    ensemble.save(args.out)
    if args.history_dir:
        hdir = Path(args.history_dir)
        hdir.mkdir(parents=True, exist_ok=True)
        for c, hist in enumerate(ensemble.histories):
            (hdir / f"class_{c}.csv").write_text(history_csv(hist))
    for c, aff in enumerate(ensemble.affinities):
        print(f"class {c}: training affinity {aff:.4f}")
    return 0


def cmd_predict(args) -> int:
    cfg = _encoding(args)
    targets = read_records(args.target)
    db = list(load_dataset(args.db).records)
    results = [(t.id, predict_structure(t, db, cfg)) for t in targets]
    Path(args.out).write_text(format_predictions(results))
    for rid, pred in results:
        print(f"{rid}\tmodel={pred.base_id}\tresidual={pred.residual:.6e}")
    return 0


def cmd_classify(args) -> int:
    ensemble = ClassEnsemble.load(args.model)
    cfg = EncodingConfig(hydro_scale=load_scale(args.scale)) if args.scale else EncodingConfig()
    for rec in read_records(args.target):
        label, votes = classify_sequence(rec.sequence, ensemble, cfg)
        print(f"{rec.id}\tclass={label}\tvotes=" + ",".join(f"{v:.4f}" for v in votes))
    return 0


def cmd_evaluate(args) -> int:
    preds = dict(parse_labels(read_text(args.pred)))
    truths = dict(parse_labels(read_text(args.truth)))
    report = build_report(preds, truths, method=args.method, with_reference=args.reference)
    fmt = args.format or ("json" if str(args.out).endswith(".json") else "csv")
    emit_report(report, fmt, args.out)
    print(f"targets={len(report.per_target)} mean_q3={report.overall:.4f}")
    print(format_confusion(report.confusion))
    return 0


def _rule_list(text: str) -> list[int]:
    try:
        return [int(r) for r in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated rule numbers, got {text!r}") from None


def cmd_inspect_ca(args) -> int:
    rules = list(args.rules)
    if len(rules) == 1:
        rules *= args.n
    ca = CAConfig(args.n, tuple(rules))
    basins = find_attractors(ca)
    print(f"n={ca.n} rules={','.join(map(str, ca.rules))} basins={basins.basin_count}")
    for bid, (cycle, size) in enumerate(zip(basins.attractors, basins.sizes)):
        states = " -> ".join(bits_to_str(int_to_state(s, ca.n)) for s in cycle)
        print(f"basin {bid}: size={int(size)} cycle_length={len(cycle)} attractor={states}")
    return 0


def cmd_synth(args) -> int:
    c = synth_random_chromosome(args.n, args.m, 0 if args.seed is None else args.seed)
    print(json.dumps(c.to_dict()))
    return 0


def cmd_demo(args) -> int:
    result = run_demo(0 if args.seed is None else args.seed)
    report = build_report(result.predictions, result.truths, method="AIS-MACA")
    for target, _, score in report.per_target:
        print(f"{target}\tbase={result.bases[target]}\tq3={score:.4f}")
    print(f"Q3 {report.overall:.4f}")
    if args.out:
        emit_report(report, "csv", args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aismaca", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--seed", type=int, default=None, help="random seed (overrides config files)")
        p.set_defaults(func=func)
        return p

    p = add("train", cmd_train, "evolve one classifier chromosome per structural class")
    p.add_argument("--manifest", required=True, help="dataset manifest JSON with class labels")
    p.add_argument("--config", help="evolve config JSON")
    p.add_argument("--out", required=True, help="ensemble JSON to write")
    p.add_argument("--window", type=int, default=15)
    p.add_argument("--bits", type=int, default=2, help="bits per residue")
    p.add_argument("--scale", help="hydrophobicity scale TSV")
    p.add_argument("--history-dir", help="write per-class generation history CSVs here")

    p = add("predict", cmd_predict, "predict H/E/C strings by filter fitting on the most similar protein")
    p.add_argument("--target", required=True, help="FASTA of query sequences")
    p.add_argument("--db", required=True, help="manifest of proteins with known structure")
    p.add_argument("--config", help="encoding config JSON")
    p.add_argument("--scale", help="hydrophobicity scale TSV")
    p.add_argument("--out", required=True, help="prediction file to write")

    p = add("classify", cmd_classify, "assign each sequence to a class with a trained ensemble")
    p.add_argument("--target", required=True, help="FASTA of query sequences")
    p.add_argument("--model", required=True, help="ensemble JSON from 'train'")
    p.add_argument("--scale", help="hydrophobicity scale TSV")

    p = add("evaluate", cmd_evaluate, "score predictions against true structures")
    p.add_argument("--pred", required=True, help="prediction file")
    p.add_argument("--truth", required=True, help="FASTA-framed H/E/C truth file")
    p.add_argument("--out", required=True, help="report path (.csv or .json)")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--method", default="AIS-MACA", help="method name for the report rows")
    p.add_argument("--reference", action="store_true", help="append the published comparison table")

    p = add("inspect-ca", cmd_inspect_ca, "enumerate the attractor basins of a small CA")
    p.add_argument("--n", type=int, required=True, help="cell count (at most 24)")
    p.add_argument("--rules", type=_rule_list, required=True, help="one rule number, or n comma-separated ones")

    p = add("synth", cmd_synth, "print a random chromosome as JSON")
    p.add_argument("--n", type=int, required=True, help="classifier width")
    p.add_argument("--m", type=int, required=True, help="segment count")

    p = add("demo", cmd_demo, "planted-filter end-to-end run on synthetic proteins")
    p.add_argument("--out", help="write the per-target accuracy report (CSV) here")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (AisMacaError, OSError) as exc:
        print(f"aismaca {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
