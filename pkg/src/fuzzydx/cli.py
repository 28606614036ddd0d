"""Command-line entry points: parse, diagnose, eval, learn, diff, audit, serve.

Exit codes: 0 on success, 1 when the engine rejects the input (parse errors,
missing versions, inconsistent edits, ...), 2 for usage errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import dsl
from .audit import counterfactual_audit
from .evaluation import (
    BenchmarkMode,
    load_dataset,
    parse_case,
    percent,
    run_benchmark,
)
from .extraction import ExtractionConfig, TermTable
from .inference import EngineConfig, RescaleMode, TNorm
from .kb import KnowledgeSnapshot, SnapshotStore, diff, load_lexicon
from .learning import LearnerConfig, UpdateLog, pa_update
from .model import CaseRecord, Demographics, EngineError
from .ranking import CaseIndex, diagnose


class CliError(EngineError):
    pass


# ===================== configuration =====================


def _config_section(data: dict, name: str, factory):
    section = data.get(name, {})
    if not isinstance(section, dict):
        raise CliError(f"config section '{name}' must be an object")
    known = {field.name: field.type for field in dataclasses.fields(factory)}
    unknown = set(section) - set(known)
    if unknown:
        raise CliError(f"unknown {name} config keys: {', '.join(sorted(unknown))}")
    values = dict(section)
    if name == "engine":
        if "tnorm" in values:
            try:
                values["tnorm"] = TNorm(values["tnorm"])
            except ValueError as exc:
                raise CliError(f"unknown tnorm '{values['tnorm']}'") from exc
        if "rescale" in values:
            try:
                values["rescale"] = RescaleMode(values["rescale"])
            except ValueError as exc:
                raise CliError(f"unknown rescale mode '{values['rescale']}'") from exc
    try:
        return factory(**values)
    except (TypeError, ValueError) as exc:
        raise CliError(f"bad {name} config: {exc}") from exc


def load_config(path: Optional[str]) -> tuple[EngineConfig, LearnerConfig]:
    """Read ``{"engine": {...}, "learner": {...}}``; fields mirror the config
    dataclasses, with enums given by value (e.g. ``"tnorm": "minimum"``)."""
    if path is None:
        return EngineConfig(), LearnerConfig()
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise CliError("config root must be an object")
    unknown = set(data) - {"engine", "learner"}
    if unknown:
        raise CliError(f"unknown config sections: {', '.join(sorted(unknown))}")
    engine = _config_section(data, "engine", EngineConfig)
    learner = _config_section(data, "learner", LearnerConfig)
    return engine, learner


# ===================== shared loading =====================


def _read_text(path: str, what: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read {what} {path}: {exc}") from exc


def _snapshot_from_kb(path: str) -> KnowledgeSnapshot:
    program = dsl.parse_program(_read_text(path, "knowledge base"))
    return KnowledgeSnapshot.create(
        tuple(program.rules), priors=tuple(program.priors), timestamp=0.0
    )


def _open_store(path: str) -> SnapshotStore:
    store = SnapshotStore(path)
    if not store.versions():
        raise CliError(f"no snapshots in store {path}")
    return store


def _resolve_snapshot(args) -> KnowledgeSnapshot:
    if getattr(args, "kb", None) and getattr(args, "store", None):
        raise CliError("--kb and --store are mutually exclusive here")
    if getattr(args, "kb", None):
        return _snapshot_from_kb(args.kb)
    if not getattr(args, "store", None):
        raise CliError("give --kb or --store")
    store = _open_store(args.store)
    version = getattr(args, "version", None)
    return store.get(version) if version is not None else store.head()


def _extraction_config(args, snapshot: Optional[KnowledgeSnapshot]) -> Optional[ExtractionConfig]:
    terms = getattr(args, "terms", None)
    if not terms:
        return None
    table = TermTable.from_tsv(_read_text(terms, "term table"))
    if getattr(args, "hedges", None):
        hedges = load_lexicon(_read_text(args.hedges, "hedge lexicon"))
    elif snapshot is not None:
        hedges = dict(snapshot.lexicon)
    else:
        hedges = {}
    return ExtractionConfig(term_table=table, hedge_lexicon=hedges)


def _load_index(args) -> Optional[CaseIndex]:
    path = getattr(args, "index", None)
    return CaseIndex.load(path) if path else None


def _parse_symptom_list(listing: str) -> tuple[tuple[str, float], ...]:
    symptoms = []
    for chunk in listing.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        if "=" in chunk:
            name, _, raw = chunk.partition("=")
            try:
                weight = float(raw)
            except ValueError as exc:
                raise CliError(f"bad symptom weight in '{chunk}'") from exc
        else:
            name, weight = chunk, 1.0
        symptoms.append((name.strip(), weight))
    if not symptoms:
        raise CliError("no symptoms given")
    return tuple(symptoms)


def _demographics_from(args) -> Optional[Demographics]:
    if args.age is None and args.sex is None and args.region is None:
        return None
    return Demographics(age=args.age, sex=args.sex, region=args.region)


def _case_from_args(args) -> CaseRecord:
    given = [
        name
        for name, value in (
            ("--note", getattr(args, "note", None)),
            ("--case", getattr(args, "case", None)),
            ("--symptoms", getattr(args, "symptoms", None)),
        )
        if value
    ]
    if len(given) != 1:
        raise CliError("give exactly one of --note, --case, or --symptoms")
    if args.note:
        return CaseRecord(case_id="note", text=_read_text(args.note, "note"))
    if args.case:
        try:
            data = json.loads(_read_text(args.case, "case file"))
            record = parse_case(data)
        except (json.JSONDecodeError, TypeError, ValueError) as exc:
            raise CliError(f"bad case file {args.case}: {exc}") from exc
        return record
    return CaseRecord(case_id="cli", symptoms=_parse_symptom_list(args.symptoms))


def _facts_for(record: CaseRecord, args, snapshot: KnowledgeSnapshot):
    if record.symptoms is not None:
        return record.symptom_facts()
    config = _extraction_config(args, snapshot)
    if config is None:
        raise CliError("text input needs --terms for extraction")
    from .extraction import extract_facts

    return extract_facts(record.text or "", config).facts


def _emit(args, payload: dict, human: str) -> None:
    print(json.dumps(payload, indent=2) if args.json else human)


# ===================== subcommands =====================


def cmd_parse(args) -> int:
    program = dsl.parse_program(_read_text(args.file, "program"))
    payload = {
        "rules": len(program.rules),
        "facts": len(program.facts),
        "priors": len(program.priors),
        "diseases": sorted({rule.disease for rule in program.rules}),
    }
    lines = [
        f"{args.file}: {payload['rules']} rules, {payload['facts']} facts, "
        f"{payload['priors']} priors"
    ]
    if payload["diseases"]:
        lines.append("diseases: " + ", ".join(payload["diseases"]))
    _emit(args, payload, "\n".join(lines))
    return 0


def cmd_diagnose(args) -> int:
    engine_config, _ = load_config(args.config)
    snapshot = _resolve_snapshot(args)
    record = _case_from_args(args)
    facts = _facts_for(record, args, snapshot)
    demographics = _demographics_from(args) or (
        record.demographics if record.demographics != Demographics() else None
    )
    result = diagnose(
        snapshot,
        facts,
        engine_config,
        index=_load_index(args),
        demographics=demographics,
    )
    payload = {"version": snapshot.version, **result.to_json()}
    lines = [f"knowledge base version {snapshot.version}"]
    if not result.candidates:
        lines.append("no diagnosis fired")
    for rank, candidate in enumerate(result.candidates, start=1):
        prior = "-" if candidate.prior is None else f"{candidate.prior:.4f}"
        lines.append(
            f"{rank}. {candidate.disease}  activation={candidate.activation:.4f} "
            f"prior={prior} posterior={candidate.posterior:.4f}"
        )
    _emit(args, payload, "\n".join(lines))
    return 0


def cmd_eval(args) -> int:
    engine_config, _ = load_config(args.config)
    snapshot = _resolve_snapshot(args)
    cases = load_dataset(args.cases)
    index = _load_index(args)
    extraction = _extraction_config(args, snapshot)
    modes = list(BenchmarkMode) if args.mode == "all" else [BenchmarkMode(args.mode)]
    reports = []
    for mode in modes:
        result = run_benchmark(
            snapshot,
            cases,
            mode,
            engine_config,
            index=index if mode is BenchmarkMode.FULL else None,
            extraction_config=extraction,
        )
        reports.append(result.report)
    payload = {"reports": [report.to_json() for report in reports]}
    _emit(args, payload, "\n\n".join(report.table() for report in reports))
    return 0


def cmd_learn(args) -> int:
    _, learner_config = load_config(args.config)
    store = SnapshotStore(args.store)
    if not store.versions():
        if not args.kb:
            raise CliError(f"store {args.store} is empty; bootstrap it with --kb")
        SnapshotStore.initialize(args.store, _snapshot_from_kb(args.kb))
        store = SnapshotStore(args.store)
    cases = load_dataset(args.cases)
    log = UpdateLog(args.log) if args.log else None

    history: list[int] = []
    for _ in range(args.max_passes):
        violations = 0
        for record in cases:
            head = store.head()
            outcome = pa_update(head, record, learner_config)
            if outcome.changed:
                violations += 1
                store.commit_snapshot(
                    outcome.snapshot, head.version, note=f"case {record.case_id}"
                )
                if log is not None:
                    log.append(head, outcome)
        history.append(violations)
        if violations == 0:
            break
    head = store.head()
    payload = {
        "passes": len(history),
        "history": history,
        "version": head.version,
        "content_hash": head.content_hash,
        "converged": bool(history and history[-1] == 0),
    }
    human = (
        f"violations per pass: {history}\n"
        f"head version {head.version} ({'converged' if payload['converged'] else 'not converged'})"
    )
    _emit(args, payload, human)
    return 0


def cmd_diff(args) -> int:
    store = _open_store(args.store)
    delta = diff(store.get(args.older), store.get(args.newer))
    payload = {"older": args.older, "newer": args.newer, "diff": delta.to_json()}
    lines = [f"v{args.older} -> v{args.newer}"]
    for rule in delta.added_rules:
        lines.append(f"+ {dsl.format_rule(rule)}")
    for rule_id in delta.removed_rules:
        lines.append(f"- rule {rule_id}")
    for change in delta.weight_deltas:
        lines.append(
            f"~ {change.rule_id} {change.literal}: {change.old:.4f} -> {change.new:.4f}"
        )
    for change in delta.lexicon_deltas:
        lines.append(f"~ hedge {change.term}: {change.old} -> {change.new}")
    for change in delta.prior_deltas:
        lines.append(
            f"~ prior {change.disease}({change.age_band}, {change.sex}, "
            f"{change.region}): {change.old} -> {change.new}"
        )
    if len(lines) == 1:
        lines.append("no changes")
    _emit(args, payload, "\n".join(lines))
    return 0


def cmd_audit(args) -> int:
    engine_config, _ = load_config(args.config)
    store = _open_store(args.store)
    record = _case_from_args(args)
    facts = _facts_for(record, args, store.get(args.before))
    report = counterfactual_audit(
        store,
        facts,
        args.before,
        args.after,
        engine_config,
        index=_load_index(args),
        demographics=_demographics_from(args),
    )
    _emit(args, report.to_json(), report.summary())
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    engine_config, learner_config = load_config(args.config)
    store = SnapshotStore(args.store)
    if not store.versions():
        if not args.kb:
            raise CliError(f"store {args.store} is empty; bootstrap it with --kb")
        SnapshotStore.initialize(args.store, _snapshot_from_kb(args.kb))
        store = SnapshotStore(args.store)
    app = create_app(
        store,
        engine_config=engine_config,
        learner_config=learner_config,
        index=_load_index(args),
        extraction_config=_extraction_config(args, store.head()),
        static_dir=args.ui,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# ===================== parser =====================


def _add_kb_source(parser: argparse.ArgumentParser, store_only: bool = False) -> None:
    if not store_only:
        parser.add_argument("--kb", help="knowledge-base program file")
    parser.add_argument("--store", help="snapshot store directory")
    parser.add_argument("--version", type=int, help="store version (default: head)")


def _add_case_input(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--note", help="clinical note text file")
    parser.add_argument("--case", help="single case as a JSON file")
    parser.add_argument("--symptoms", help="inline symptoms, e.g. fever=0.8,cough")
    parser.add_argument("--age", type=int)
    parser.add_argument("--sex")
    parser.add_argument("--region")


def _add_extraction(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--terms", help="phrase table TSV for note extraction")
    parser.add_argument("--hedges", help="hedge lexicon TSV (default: stored lexicon)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fuzzydx", description="weighted-logic diagnosis toolkit"
    )
    parser.add_argument("--json", action="store_true", help="machine-readable output")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="validate a knowledge-base file")
    p.add_argument("file")
    p.set_defaults(handler=cmd_parse)

    p = sub.add_parser("diagnose", help="rank diagnoses for one case")
    _add_kb_source(p)
    _add_case_input(p)
    _add_extraction(p)
    p.add_argument("--index", help="case index JSONL for retrieval blending")
    p.add_argument("--config", help="JSON config file")
    p.set_defaults(handler=cmd_diagnose)

    p = sub.add_parser("eval", help="run a benchmark over a case file")
    _add_kb_source(p)
    p.add_argument("--cases", required=True, help="JSONL dataset")
    p.add_argument(
        "--mode",
        default="all",
        choices=[mode.value for mode in BenchmarkMode] + ["all"],
    )
    p.add_argument("--index", help="case index JSONL (used by the full mode)")
    _add_extraction(p)
    p.add_argument("--config", help="JSON config file")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("learn", help="run online updates over labelled cases")
    p.add_argument("--store", required=True)
    p.add_argument("--kb", help="bootstrap program if the store is empty")
    p.add_argument("--cases", required=True, help="JSONL dataset with labels")
    p.add_argument("--max-passes", type=int, default=50)
    p.add_argument("--log", help="append update-log entries to this JSONL file")
    p.add_argument("--config", help="JSON config file")
    p.set_defaults(handler=cmd_learn)

    p = sub.add_parser("diff", help="compare two stored versions")
    p.add_argument("--store", required=True)
    p.add_argument("older", type=int)
    p.add_argument("newer", type=int)
    p.set_defaults(handler=cmd_diff)

    p = sub.add_parser("audit", help="rerun one case under two versions")
    p.add_argument("--store", required=True)
    p.add_argument("--before", type=int, required=True)
    p.add_argument("--after", type=int, required=True)
    _add_case_input(p)
    _add_extraction(p)
    p.add_argument("--index", help="case index JSONL for retrieval blending")
    p.add_argument("--config", help="JSON config file")
    p.set_defaults(handler=cmd_audit)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--store", required=True)
    p.add_argument("--kb", help="bootstrap program if the store is empty")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--index", help="case index JSONL for retrieval blending")
    _add_extraction(p)
    p.add_argument("--ui", help="static frontend directory to mount at /ui")
    p.add_argument("--config", help="JSON config file")
    p.set_defaults(handler=cmd_serve)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return args.handler(args)
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
