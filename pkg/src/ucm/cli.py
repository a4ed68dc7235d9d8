"""Command-line entry point: batch tools plus a terminal-interactive session.

Exit codes: 0 success, 1 domain failure (lint errors, undefined metrics,
failed repair), 2 usage error.  In ``--output json`` mode stdout carries
exactly one JSON document; prompts, logs and errors go to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Sequence

from ucm import evaluate, report, stats
from ucm.gateway.providers import (
    ENV_API_KEY,
    ENV_ENDPOINT,
    ENV_MODEL,
    GatewayError,
    LiveProvider,
    Provider,
    ReplayProvider,
)
from ucm.model import InvalidModelError, RequirementsDoc, model_from_json, model_to_json
from ucm.pipeline import (
    Edit,
    EditKind,
    Engine,
    PipelineError,
    Session,
    Stage,
    session_to_json,
)
from ucm.plantuml import DiagramSource, ParseError, has_errors, lint, parse_model, render_model
from ucm.service import ENV_DATA_DIR, ServiceConfig, run_service

_STAGE_HELP = (
    "commands: ok (confirm) | rm <id> | mv <id> <new name> | add <name> "
    "| add <title> @ <actor-id>[,<actor-id>...] | relink <id> <actor-id>[,...] | quit"
)


class _CliError(Exception):
    def __init__(self, code: str, message: str, exit_code: int = 1):
        self.code = code
        self.message = message
        self.exit_code = exit_code
        super().__init__(f"{code}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ucm",
        description="Use case modeling workbench: pipeline, PlantUML tools, evaluation.",
    )
    parser.add_argument("--provider", choices=["live", "replay"], default="live")
    parser.add_argument("--fixtures", type=Path, help="replay fixtures directory")
    parser.add_argument("--data-dir", type=Path, help="session persistence directory")
    parser.add_argument("--output", choices=["text", "json"], default="text")
    parser.add_argument("--endpoint", help=f"live endpoint (overrides {ENV_ENDPOINT})")
    parser.add_argument("--model", help=f"model name (overrides {ENV_MODEL})")
    parser.add_argument("--api-key", help=f"API key (overrides {ENV_API_KEY})")

    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="interactive pipeline session")
    p_run.add_argument("requirements", type=Path)
    p_run.add_argument("--title", help="system name (defaults to the file stem)")
    p_run.add_argument("--export-dir", type=Path, help="write session JSON and .puml here")

    p_render = sub.add_parser("render", help="model JSON -> PlantUML on stdout")
    p_render.add_argument("model", type=Path)

    p_parse = sub.add_parser("parse", help="PlantUML -> model JSON on stdout")
    p_parse.add_argument("diagram", type=Path)

    p_lint = sub.add_parser("lint", help="lint a PlantUML file")
    p_lint.add_argument("diagram", type=Path)

    p_eval = sub.add_parser("eval", help="score a candidate model against ground truth")
    p_eval.add_argument("--truth", type=Path, required=True)
    p_eval.add_argument("--candidate", type=Path, required=True)
    p_eval.add_argument("--overrides", type=Path, help="JSON with synonyms/overrides")
    p_eval.add_argument("--report-dir", type=Path, help="write JSON/CSV/figure here")

    p_stats = sub.add_parser("stats", help="timing statistics from a CSV")
    p_stats.add_argument("--times", type=Path, required=True)
    p_stats.add_argument("--alpha", type=float, default=0.01)
    p_stats.add_argument("--report-dir", type=Path, help="write JSON/CSV/figure here")

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.add_argument("--cors-origin", help="allowed UI origin")

    return parser


def _emit_error(args: argparse.Namespace, code: str, message: str) -> None:
    if args.output == "json":
        print(json.dumps({"code": code, "message": message}), file=sys.stderr)
    else:
        print(f"{code}: {message}", file=sys.stderr)


def _build_provider(args: argparse.Namespace) -> Provider:
    if args.provider == "replay":
        if not args.fixtures:
            raise _CliError("E-USAGE", "--provider replay needs --fixtures", exit_code=2)
        return ReplayProvider(args.fixtures)
    endpoint = args.endpoint or os.environ.get(ENV_ENDPOINT)
    if not endpoint:
        raise _CliError(
            "E-USAGE", f"live provider needs --endpoint or {ENV_ENDPOINT}", exit_code=2
        )
    return LiveProvider(endpoint, api_key=args.api_key or os.environ.get(ENV_API_KEY))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _cmd_render(args: argparse.Namespace) -> int:
    model = model_from_json(args.model.read_text("utf-8"))
    sys.stdout.write(render_model(model).text)
    return 0


def _cmd_parse(args: argparse.Namespace) -> int:
    model = parse_model(DiagramSource(args.diagram.read_text("utf-8")))
    sys.stdout.write(model_to_json(model))
    return 0


def _cmd_lint(args: argparse.Namespace) -> int:
    findings = lint(DiagramSource(args.diagram.read_text("utf-8")))
    if args.output == "json":
        print(json.dumps([f.to_dict() for f in findings], indent=2))
    else:
        for finding in findings:
            print(f"{finding.line}: {finding.code} [{finding.severity.value}] {finding.message}")
        if not findings:
            print("clean", file=sys.stderr)
    return 1 if has_errors(findings) else 0


def _matcher_config(path: Path | None) -> evaluate.MatcherConfig:
    if path is None:
        return evaluate.MatcherConfig()
    data = json.loads(path.read_text("utf-8"))
    return evaluate.MatcherConfig(
        jaccard_threshold=data.get("jaccard_threshold", evaluate.DEFAULT_JACCARD_THRESHOLD),
        stopwords=frozenset(data.get("stopwords", evaluate.DEFAULT_STOPWORDS)),
        synonym_map=tuple(tuple(pair) for pair in data.get("synonyms", [])),
        manual_overrides=tuple(tuple(pair) for pair in data.get("overrides", [])),
    )


def _cmd_eval(args: argparse.Namespace) -> int:
    truth = model_from_json(args.truth.read_text("utf-8"))
    candidate = model_from_json(args.candidate.read_text("utf-8"))
    eval_report = evaluate.score_model(truth, candidate, _matcher_config(args.overrides))
    if args.output == "json":
        sys.stdout.write(eval_report.to_json())
    else:
        sys.stdout.write(evaluate.report_to_text(eval_report))
    if args.report_dir:
        for path in report.write_eval_report(eval_report, args.report_dir):
            print(f"wrote {path}", file=sys.stderr)
    if eval_report.has_undefined_metrics:
        _emit_error(args, "E-UNDEFINED-METRICS", "some metrics are undefined (no elements)")
        return 1
    return 0


def _cmd_stats(args: argparse.Namespace) -> int:
    manual, assisted, _ = stats.load_times_csv(args.times)
    stats_report = stats.analyze_paired_times(manual, assisted, alpha=args.alpha)
    if args.output == "json":
        sys.stdout.write(stats_report.to_json())
    else:
        sys.stdout.write(stats.report_to_text(stats_report))
    if args.report_dir:
        for path in report.write_stats_report(stats_report, manual, assisted, args.report_dir):
            print(f"wrote {path}", file=sys.stderr)
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    config = ServiceConfig(
        host=args.host,
        port=args.port,
        data_dir=args.data_dir or Path(os.environ.get(ENV_DATA_DIR, "data")),
        cors_allowed_origin=args.cors_origin,
        provider=args.provider,
        fixtures_dir=args.fixtures,
        endpoint=args.endpoint,
        model_name=args.model,
        api_key=args.api_key,
    )
    run_service(config)
    return 0


# ---------------------------------------------------------------------------
# Interactive run
# ---------------------------------------------------------------------------

def _say(args: argparse.Namespace, message: str) -> None:
    stream = sys.stderr if args.output == "json" else sys.stdout
    print(message, file=stream)


def _read_command(args: argparse.Namespace) -> str:
    _say(args, f"[{_STAGE_HELP}]")
    prompt_stream = sys.stderr if args.output == "json" else sys.stdout
    print("> ", end="", file=prompt_stream, flush=True)
    line = sys.stdin.readline()
    if not line:  # EOF confirms, so piped scripts can accept every proposal
        return "ok"
    return line.strip()


def _print_proposals(args: argparse.Namespace, session: Session) -> None:
    if session.stage == Stage.ACTORS_PROPOSED:
        _say(args, "Proposed actors:")
        for actor in session.proposed_actors:
            _say(args, f"  {actor.id}  {actor.name} ({actor.kind.value})")
    elif session.stage == Stage.USECASES_PROPOSED:
        _say(args, "Proposed use cases:")
        for usecase in session.proposed_usecases:
            links = ", ".join(usecase.actor_ids) or "-"
            _say(args, f"  {usecase.id}  {usecase.title} [{links}]")
    elif session.stage == Stage.MODEL_PROPOSED:
        _say(args, "Proposed model:")
        assert session.model_source is not None
        for line in session.model_source.splitlines():
            _say(args, f"  {line}")
    for warning in session.warnings:
        _say(args, f"  ! {warning.code}: {warning.message}")


def _parse_edit(session: Session, line: str) -> Edit | None:
    """One line-edit command -> Edit, or None for unknown syntax."""
    parts = line.split()
    if not parts:
        return None
    verb = parts[0].lower()
    if verb == "rm" and len(parts) == 2:
        return Edit(stage=session.stage, kind=EditKind.REMOVE, target_id=parts[1])
    if verb == "mv" and len(parts) >= 3:
        return Edit(
            stage=session.stage,
            kind=EditKind.RENAME,
            target_id=parts[1],
            payload={"name": " ".join(parts[2:])},
        )
    if verb == "relink" and len(parts) == 3:
        return Edit(
            stage=session.stage,
            kind=EditKind.RELINK,
            target_id=parts[1],
            payload={"actor_ids": parts[2].split(",")},
        )
    if verb == "add" and len(parts) >= 2:
        rest = " ".join(parts[1:])
        if "@" in rest and session.stage != Stage.ACTORS_PROPOSED:
            title, _, links = rest.rpartition("@")
            return Edit(
                stage=session.stage,
                kind=EditKind.ADD,
                payload={
                    "type": "usecase",
                    "title": title.strip(),
                    "actor_ids": [a for a in links.strip().split(",") if a],
                },
            )
        return Edit(
            stage=session.stage,
            kind=EditKind.ADD,
            payload={"type": "actor", "name": rest.strip()},
        )
    return None


def _gate(args: argparse.Namespace, engine: Engine, session: Session) -> bool:
    """Edit loop for the current proposal; returns False when the user quits."""
    _print_proposals(args, session)
    while True:
        line = _read_command(args)
        if line in ("", "ok"):
            engine.confirm(session)
            return True
        if line == "quit":
            return False
        edit = _parse_edit(session, line)
        if edit is None:
            _say(args, "unrecognized command")
            continue
        try:
            engine.apply_edits(session, [edit])
        except (PipelineError, InvalidModelError) as exc:
            _say(args, f"edit failed: {exc}")
        _print_proposals(args, session)


def _cmd_run(args: argparse.Namespace) -> int:
    provider = _build_provider(args)
    engine = Engine(provider, model_name=args.model)
    text = args.requirements.read_text("utf-8")
    title = args.title or args.requirements.stem.replace("_", " ").title()
    doc = RequirementsDoc(id=args.requirements.stem, title=title, text=text)
    session = engine.start_session(doc)
    _say(args, f"session {session.id} created ({title!r})")

    _say(args, "== Stage 1: actors ==")
    engine.run_actor_stage(session)
    if not _gate(args, engine, session):
        return 1

    _say(args, "== Stage 2: use cases ==")
    engine.run_usecase_stage(session)
    if not _gate(args, engine, session):
        return 1

    _say(args, "== Stage 3: model ==")
    engine.run_model_stage(session)
    if not _gate(args, engine, session):
        return 1

    _say(args, "== Stage 4: descriptions ==")
    assert session.model is not None
    ids = ", ".join(uc.id for uc in session.model.use_cases)
    _say(args, f"use case ids: {ids}")
    _say(args, "ids to describe (space-separated, blank to skip):")
    prompt_stream = sys.stderr if args.output == "json" else sys.stdout
    print("> ", end="", file=prompt_stream, flush=True)
    line = sys.stdin.readline().strip()
    engine.run_description_stage(session, line.split() if line else [])

    if args.export_dir:
        args.export_dir.mkdir(parents=True, exist_ok=True)
        json_path = args.export_dir / f"{session.id}.json"
        puml_path = args.export_dir / f"{session.id}.puml"
        json_path.write_text(engine.export(session, "json"), encoding="utf-8")
        puml_path.write_text(engine.export(session, "puml"), encoding="utf-8")
        _say(args, f"wrote {json_path} and {puml_path}")

    if args.output == "json":
        sys.stdout.write(session_to_json(session))
    else:
        _say(args, "final model:")
        sys.stdout.write(engine.export(session, "puml"))
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "render": _cmd_render,
    "parse": _cmd_parse,
    "lint": _cmd_lint,
    "eval": _cmd_eval,
    "stats": _cmd_stats,
    "serve": _cmd_serve,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except _CliError as exc:
        _emit_error(args, exc.code, exc.message)
        return exc.exit_code
    except (ParseError, InvalidModelError) as exc:
        code = getattr(exc, "code", "E-INVALID-MODEL")
        _emit_error(args, code, str(exc))
        return 1
    except (PipelineError, GatewayError) as exc:
        _emit_error(args, exc.code, exc.message)
        return 1
    except (stats.StatsError, ValueError) as exc:
        code = getattr(exc, "code", "E-VALUE")
        _emit_error(args, code, str(exc))
        return 1
    except OSError as exc:
        _emit_error(args, "E-IO", str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
