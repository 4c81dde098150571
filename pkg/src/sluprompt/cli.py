"""Command-line driver: run experiments, score predictions, render reports.

Exit codes: 0 success, 1 configuration or input error, 2 partial run failure
(some utterances failed but the run completed).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .backend import BackendConfig
from .metrics import IdMismatch, MetricsSummary, compute_summary
from .ontology import DatasetError, load_dataset, load_ontology
from .pipeline import (
    ByPrompt,
    ByTemperature,
    RunConfig,
    build_manifest,
    expected_calls,
    read_predictions,
    run_dataset,
    write_predictions,
)
from .prompts import PromptMode, TemplateError, TemplateSet
from .report import UnknownBaseline, render_csv, render_report, summaries_to_json

_MODE_FLAGS = {
    "vanilla": (PromptMode.VANILLA, False),
    "cro-intent-slot": (PromptMode.CRO_INTENT_SLOT, False),
    "cro-slot-intent": (PromptMode.CRO_SLOT_INTENT, False),
    "no-interaction": (PromptMode.NO_INTERACTION, False),
    "gold-intent": (PromptMode.CRO_INTENT_SLOT, True),
}

_ROUTE_FLAGS = {
    "vanilla": PromptMode.VANILLA,
    "cro-intent-slot": PromptMode.CRO_INTENT_SLOT,
    "cro-slot-intent": PromptMode.CRO_SLOT_INTENT,
    "no-interaction": PromptMode.NO_INTERACTION,
}


class CliError(Exception):
    """A configuration problem the user must fix; exits with code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # noqa: A003 - argparse API
        raise CliError(message)


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dataset", required=True, help="dataset file or BIO directory")
    parser.add_argument("--ontology", required=True, help="ontology JSON document")
    parser.add_argument(
        "--mode", required=True, choices=sorted(_MODE_FLAGS), help="prompting variant"
    )
    parser.add_argument(
        "--consistency",
        choices=["none", "temperature", "prompt"],
        default="none",
        help="consistency route fan-out (default: none)",
    )
    parser.add_argument(
        "--temperatures",
        default="0.1,0.8,1.0",
        help="comma-separated temperatures for --consistency temperature",
    )
    parser.add_argument(
        "--routes",
        default="vanilla,cro-intent-slot,cro-slot-intent",
        help="comma-separated modes for --consistency prompt",
    )
    parser.add_argument("--backend", choices=["http", "replay"], default="http")
    parser.add_argument("--endpoint", help="chat-completions endpoint URL (http backend)")
    parser.add_argument("--model", default="gpt-3.5-turbo")
    parser.add_argument("--api-key-env", help="environment variable holding the API key")
    parser.add_argument("--cache-dir", help="response cache directory")
    parser.add_argument("--record", action="store_true", help="record responses to --replay-file")
    parser.add_argument("--replay-file", help="replay file to read (replay) or write (--record)")
    parser.add_argument("--temperature", type=float, default=0.1)
    parser.add_argument("--max-tokens", type=int, default=256)
    parser.add_argument("--max-in-flight", type=int, default=1)
    parser.add_argument("--templates", help="directory of prompt template overrides")
    parser.add_argument("--timeout", type=float, default=30.0)
    parser.add_argument("--max-retries", type=int, default=2)


def _build_parser() -> tuple[_Parser, dict[str, argparse.ArgumentParser]]:
    parser = _Parser(prog="sluprompt", description=__doc__)
    parser.add_argument("--config", help="JSON or TOML file of flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a prompting experiment over a dataset")
    _add_run_flags(run)
    run.add_argument("--out", required=True, help="predictions JSONL output path")
    run.add_argument("--manifest", help="manifest path (default: <out>.manifest.json)")

    evaluate = sub.add_parser("eval", help="score a predictions file against gold")
    evaluate.add_argument("--predictions", required=True)
    evaluate.add_argument("--dataset", required=True)
    evaluate.add_argument("--ontology", required=True)
    evaluate.add_argument("--out", help="write the summary as JSON")
    evaluate.add_argument("--name", help="run name stored in the summary (default: file stem)")

    report = sub.add_parser("report", help="compare run summaries in one table")
    report.add_argument("summaries", nargs="+", help="summary JSON files from 'eval --out'")
    report.add_argument("--baseline", help="run name whose metrics anchor the deltas")
    report.add_argument("--out", help="write the Markdown table to this path")
    report.add_argument("--csv", help="also write a CSV version")
    report.add_argument("--json", help="also write a machine-readable JSON version")

    check = sub.add_parser(
        "record-check", help="verify a replay file covers a dataset/config"
    )
    _add_run_flags(check)
    subparsers = {"run": run, "eval": evaluate, "report": report, "record-check": check}
    return parser, subparsers


def _parse_float_list(raw: str, flag: str) -> tuple[float, ...]:
    try:
        values = tuple(float(part) for part in raw.split(",") if part.strip())
    except ValueError as exc:
        raise CliError(f"{flag}: {exc}") from exc
    if not values:
        raise CliError(f"{flag}: no values given")
    return values


def _run_config(args: argparse.Namespace) -> RunConfig:
    mode, gold_intent = _MODE_FLAGS[args.mode]

    consistency = None
    if args.consistency == "temperature":
        try:
            consistency = ByTemperature(
                _parse_float_list(args.temperatures, "--temperatures")
            )
        except ValueError as exc:
            raise CliError(f"--temperatures: {exc}") from exc
    elif args.consistency == "prompt":
        modes = []
        for part in args.routes.split(","):
            part = part.strip()
            if not part:
                continue
            if part not in _ROUTE_FLAGS:
                raise CliError(
                    f"--routes: unknown mode {part!r} (choose from {', '.join(sorted(_ROUTE_FLAGS))})"
                )
            modes.append(_ROUTE_FLAGS[part])
        try:
            consistency = ByPrompt(tuple(modes))
        except ValueError as exc:
            raise CliError(f"--routes: {exc}") from exc

    if args.backend == "http" and not args.endpoint:
        raise CliError("--endpoint is required with --backend http")
    if args.backend == "replay" and not args.replay_file:
        raise CliError("--replay-file is required with --backend replay")
    if args.record and not args.replay_file:
        raise CliError("--record requires --replay-file")

    backend = BackendConfig(
        kind=args.backend,
        endpoint_url=args.endpoint,
        api_key_env=args.api_key_env,
        request_timeout=args.timeout,
        max_retries=args.max_retries,
        cache_dir=Path(args.cache_dir) if args.cache_dir else None,
        replay_file=Path(args.replay_file) if args.replay_file else None,
        record=args.record,
    )
    templates = TemplateSet.load(args.templates) if args.templates else None
    try:
        return RunConfig(
            mode=mode,
            backend=backend,
            consistency=consistency,
            gold_intent=gold_intent,
            temperature=args.temperature,
            model_name=args.model,
            max_tokens=args.max_tokens,
            max_in_flight=args.max_in_flight,
            record_replay=args.record,
            templates=templates,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def _load_inputs(args: argparse.Namespace):
    ontology = load_ontology(args.ontology)
    data = load_dataset(args.dataset, ontology)
    return ontology, data


def _cmd_run(args: argparse.Namespace) -> int:
    config = _run_config(args)
    ontology, data = _load_inputs(args)
    if config.gold_intent:
        missing = [gold.utterance_id for _, gold in data if gold.intent is None]
        if missing:
            raise CliError(
                f"--mode gold-intent requires gold intent labels; "
                f"missing for utterance(s): {', '.join(missing[:5])}"
            )
    records = run_dataset(data, config, ontology)
    write_predictions(records, args.out)
    manifest_path = args.manifest or f"{args.out}.manifest.json"
    manifest = build_manifest(config, args.ontology, args.dataset)
    Path(manifest_path).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    n_failed = sum(1 for r in records if r.failed)
    print(f"wrote {len(records)} predictions to {args.out} ({n_failed} failed)")
    return 2 if n_failed else 0


def _cmd_eval(args: argparse.Namespace) -> int:
    ontology, data = _load_inputs(args)
    preds = read_predictions(args.predictions)
    gold = [ann for _, ann in data]
    summary = compute_summary(preds, gold)
    print(f"intent_accuracy: {100 * summary.intent_accuracy:.2f}%")
    print(
        f"slot_f1: {100 * summary.slot_f1:.2f}% "
        f"(precision {100 * summary.slot_precision:.2f}%, "
        f"recall {100 * summary.slot_recall:.2f}%)"
    )
    print(f"sentence_accuracy: {100 * summary.sentence_accuracy:.2f}%")
    print(
        f"n_utterances: {summary.n_utterances}  n_failed: {summary.n_failed}  "
        f"avg_context_length: {summary.avg_context_length:.2f}"
    )
    if args.out:
        name = args.name or Path(args.predictions).stem
        doc = {"name": name, "summary": summary.to_dict()}
        Path(args.out).write_text(
            json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    summaries: dict[str, MetricsSummary] = {}
    for path in args.summaries:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        name = doc.get("name") or Path(path).stem
        if name in summaries:
            raise CliError(f"duplicate run name {name!r} across summary files")
        summaries[name] = MetricsSummary.from_dict(doc["summary"])
    try:
        table = render_report(summaries, baseline=args.baseline)
    except UnknownBaseline as exc:
        raise CliError(str(exc)) from exc
    print(table, end="")
    if args.out:
        Path(args.out).write_text(table, encoding="utf-8")
    if args.csv:
        Path(args.csv).write_text(
            render_csv(summaries, baseline=args.baseline), encoding="utf-8"
        )
    if args.json:
        Path(args.json).write_text(
            summaries_to_json(summaries, baseline=args.baseline), encoding="utf-8"
        )
    return 0


def _cmd_record_check(args: argparse.Namespace) -> int:
    if args.backend != "replay":
        args.backend = "replay"
    if not args.replay_file:
        raise CliError("--replay-file is required for record-check")
    config = _run_config(args)
    ontology, data = _load_inputs(args)
    records = run_dataset(data, config, ontology)
    want = expected_calls(config)
    problems = []
    for record in records:
        if record.failed:
            problems.append(f"{record.utterance_id}: {record.error}")
        elif len(record.calls) != want:
            problems.append(
                f"{record.utterance_id}: only {len(record.calls)} of {want} "
                f"calls answered from the replay file"
            )
    if problems:
        print(f"replay file {args.replay_file} is incomplete for this configuration:")
        for problem in problems:
            print(f"  {problem}")
        return 1
    print(
        f"replay file {args.replay_file} covers all "
        f"{len(records)} x {want} calls for this configuration"
    )
    return 0


def main(argv: list[str] | None = None) -> int:
    parser, subparsers = _build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        # Config-file values become parser defaults, so explicit flags win.
        if "--config" in argv:
            idx = argv.index("--config")
            if idx + 1 >= len(argv):
                raise CliError("--config needs a path")
            defaults = _load_config_file(argv[idx + 1])
            if not isinstance(defaults, dict):
                raise CliError("config file must hold a table/object of flag values")
            mapped = {k.replace("-", "_"): v for k, v in defaults.items()}
            for sub in subparsers.values():
                for action in sub._actions:  # noqa: SLF001
                    if action.dest in mapped and action.required:
                        action.required = False
                sub.set_defaults(
                    **{k: v for k, v in mapped.items()
                       if k in {a.dest for a in sub._actions}}  # noqa: SLF001
                )
        args = parser.parse_args(argv)
        handler = {
            "run": _cmd_run,
            "eval": _cmd_eval,
            "report": _cmd_report,
            "record-check": _cmd_record_check,
        }[args.command]
        return handler(args)
    except (CliError, DatasetError, TemplateError, IdMismatch, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _load_config_file(path: str) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    if path.endswith(".toml"):
        try:
            import tomllib
        except ModuleNotFoundError as exc:  # Python < 3.11
            raise CliError(
                "TOML config files need Python 3.11+; use JSON instead"
            ) from exc
        return tomllib.loads(text)
    return json.loads(text)


if __name__ == "__main__":
    sys.exit(main())
