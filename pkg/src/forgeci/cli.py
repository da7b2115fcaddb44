"""The forgeci operator command: serve the master, run an agent, trigger and
inspect builds over the master API, and run the offline quality/doc tools.

Exit codes: 0 success, 1 operation failure, 2 usage error. Data goes to
stdout (JSON behind --json on read commands), diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import urllib.error
import urllib.request
from typing import Optional

from . import docworks, pipeline, quality
from .status import StatusState, render_badge

CONFIG_ENV = "FORGECI_CONFIG"


def _fail(message: str) -> int:
    print(message, file=sys.stderr)
    return 1


def _emit(payload: dict, as_json: bool, text: str) -> None:
    print(json.dumps(payload, indent=2) if as_json else text)


def _config_path(explicit: Optional[str]) -> Optional[str]:
    return explicit or os.environ.get(CONFIG_ENV)


def _api(master: str, method: str, path: str, body: Optional[dict] = None) -> tuple[int, dict]:
    url = master.rstrip("/") + path
    data = json.dumps(body).encode("utf-8") if body is not None else None
    request = urllib.request.Request(
        url, data=data, method=method, headers={"Content-Type": "application/json"}
    )
    try:
        with urllib.request.urlopen(request, timeout=30) as resp:
            return resp.status, json.loads(resp.read().decode("utf-8"))
    except urllib.error.HTTPError as exc:
        try:
            return exc.code, json.loads(exc.read().decode("utf-8"))
        except ValueError:
            return exc.code, {"error": "HTTPError", "detail": str(exc)}


def _collect_sources(src: str) -> list[str]:
    files = []
    for dirpath, dirnames, filenames in os.walk(src):
        dirnames.sort()
        for name in sorted(filenames):
            if name.endswith(".m"):
                files.append(os.path.join(dirpath, name))
    return files


# --- subcommand bodies ----------------------------------------------------------


def cmd_master_serve(args) -> int:
    from .master import load_master_config
    from .master.server import MasterService

    path = _config_path(args.config)
    if not path:
        return _fail(f"no config given; pass --config or set {CONFIG_ENV}")
    config = load_master_config(path)
    service = MasterService(config, config_path=path)
    service.start()
    print(
        f"master listening: http on :{service.http_port}, agents on :{service.agent_port}",
        file=sys.stderr,
    )
    try:
        import threading

        threading.Event().wait()
    except KeyboardInterrupt:
        pass
    finally:
        service.stop()
    return 0


def cmd_agent_run(args) -> int:
    from .agent import AgentClient, load_agent_config

    path = _config_path(args.config)
    if not path:
        return _fail(f"no config given; pass --config or set {CONFIG_ENV}")
    client = AgentClient(load_agent_config(path))
    print(f"agent {client.config.agent_name} ({client.config.platform}) starting", file=sys.stderr)
    try:
        client.run_forever()
    except KeyboardInterrupt:
        client.stop()
    return 0


def cmd_trigger(args) -> int:
    status, payload = _api(
        args.master, "POST", f"/api/jobs/{args.job}/trigger", {"sha": args.sha, "actor": args.actor}
    )
    if status != 200:
        return _fail(payload.get("error", f"HTTP {status}"))
    _emit(
        payload,
        args.json,
        f"triggered {args.job} @ {payload['sha'][:12]}: builds {payload['builds']}",
    )
    return 0


def cmd_status(args) -> int:
    status, payload = _api(args.master, "GET", f"/api/status/{args.sha}")
    if status != 200:
        return _fail(payload.get("error", f"HTTP {status}"))
    lines = [f"commit {payload['sha'][:12]}  global: {payload['global']}"]
    for platform, state in sorted(payload["per_platform"].items()):
        lines.append(f"  {platform:<12} {state}")
    _emit(payload, args.json, "\n".join(lines))
    return 0


def cmd_trend(args) -> int:
    status, payload = _api(args.master, "GET", f"/api/jobs/{args.job}/trend")
    if status != 200:
        return _fail(payload.get("error", f"HTTP {status}"))
    lines = [f"{args.job}: {len(payload['points'])} builds"]
    for point in payload["points"]:
        lines.append(f"  #{point['build_id']:<6} {point['duration_ms']:>8} ms  {point['state']}")
    _emit(payload, args.json, "\n".join(lines))
    return 0


def cmd_badge(args) -> int:
    try:
        state = StatusState(args.state)
    except ValueError:
        return _fail(f"state must be one of {[s.value for s in StatusState]}")
    badge = render_badge(args.platform, state)
    with open(args.out, "wb") as fh:
        fh.write(badge.svg)
    print(f"wrote {args.out}")
    return 0


def cmd_coverage(args) -> int:
    files = _collect_sources(args.src)
    classifications = []
    for path in files:
        with open(path, "r", encoding="utf-8", errors="replace") as fh:
            rel = os.path.relpath(path, args.src)
            classifications.append(quality.classify_executable(rel, fh.read()))
    try:
        executed = quality.read_trace(args.trace)
        report = quality.compute_coverage(classifications, executed)
    except (OSError, ValueError, KeyError) as exc:
        return _fail(f"coverage failed: {exc}")
    _emit(report.to_dict(), args.json, report.to_text())
    return 0


def cmd_grade(args) -> int:
    files = _collect_sources(args.src)
    classifications = []
    counts = {}
    for path in files:
        with open(path, "r", encoding="utf-8", errors="replace") as fh:
            text = fh.read()
        rel = os.path.relpath(path, args.src)
        classifications.append(quality.classify_executable(rel, text))
        counts[rel] = len(quality.lint_text(rel, text))
    try:
        report = quality.grade(counts, classifications)
    except quality.EmptyCodebase as exc:
        return _fail(f"EmptyCodebase: {exc}")
    _emit(
        report.to_dict(),
        args.json,
        f"grade {report.letter} ({report.percent:.2f}%: {report.total_messages} messages "
        f"over {report.total_executable} executable lines)",
    )
    return 0


def cmd_lint(args) -> int:
    files = _collect_sources(args.dir)
    if args.fix:
        changed, remaining, errors = quality.lint_fix(files)
        for path in changed:
            print(f"fixed {path}")
        violations = remaining
    else:
        violations, errors = quality.lint_check(files)
    for error in errors:
        print(error, file=sys.stderr)
    if args.json:
        print(json.dumps({"violations": [v.to_dict() for v in violations]}, indent=2))
    else:
        for v in violations:
            print(f"{v.path}:{v.line}: {v.rule}: {v.message}")
    if errors or (violations and not args.fix):
        return 1
    return 0


def cmd_docs(args) -> int:
    records = docworks.extract_tree(args.src)
    if not records:
        return _fail(f"no function headers found under {args.src}")
    written = docworks.build_site(records, args.out)
    print(f"wrote {len(written)} pages to {args.out}")
    return 0


def cmd_pipeline_check(args) -> int:
    try:
        with open(args.file, "r", encoding="utf-8") as fh:
            spec = pipeline.parse_pipeline(fh.read())
    except OSError as exc:
        return _fail(f"cannot read {args.file}: {exc}")
    except pipeline.PipelineError as exc:
        return _fail(f"invalid: {exc}")
    n = len(spec.phases)
    if args.json:
        print(
            json.dumps(
                {
                    "valid": True,
                    "phases": {name: list(cmds) for name, cmds in spec.phases},
                    "language": spec.language,
                }
            )
        )
    else:
        print(f"valid: {n} phase{'s' if n != 1 else ''}")
    return 0


# --- parser wiring -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="forgeci", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def with_master(p):
        p.add_argument("--master", default="http://127.0.0.1:8080", help="master base URL")
        p.add_argument("--json", action="store_true", help="machine-readable output")

    p_master = sub.add_parser("master", help="master-side service")
    master_sub = p_master.add_subparsers(dest="master_command", required=True)
    p_serve = master_sub.add_parser("serve", help="run the orchestrator")
    p_serve.add_argument("--config", help=f"config file (falls back to ${CONFIG_ENV})")
    p_serve.set_defaults(func=cmd_master_serve)

    p_agent = sub.add_parser("agent", help="agent-side worker")
    agent_sub = p_agent.add_subparsers(dest="agent_command", required=True)
    p_run = agent_sub.add_parser("run", help="connect to the master and execute builds")
    p_run.add_argument("--config", help=f"config file (falls back to ${CONFIG_ENV})")
    p_run.set_defaults(func=cmd_agent_run)

    p_trigger = sub.add_parser("trigger", help="manually trigger a job by commit SHA")
    p_trigger.add_argument("--job", required=True)
    p_trigger.add_argument("--sha", required=True)
    p_trigger.add_argument("--actor", default=os.environ.get("USER", ""))
    with_master(p_trigger)
    p_trigger.set_defaults(func=cmd_trigger)

    p_status = sub.add_parser("status", help="per-platform status matrix for a commit")
    p_status.add_argument("--sha", required=True)
    with_master(p_status)
    p_status.set_defaults(func=cmd_status)

    p_trend = sub.add_parser("trend", help="build-time trend for a job")
    p_trend.add_argument("--job", required=True)
    with_master(p_trend)
    p_trend.set_defaults(func=cmd_trend)

    p_badge = sub.add_parser("badge", help="render a status badge SVG offline")
    p_badge.add_argument("--platform", required=True)
    p_badge.add_argument("--state", required=True, help="pending|success|failure")
    p_badge.add_argument("--out", required=True)
    p_badge.set_defaults(func=cmd_badge)

    p_cov = sub.add_parser("coverage", help="line coverage from an execution trace")
    p_cov.add_argument("--src", required=True)
    p_cov.add_argument("--trace", required=True)
    p_cov.add_argument("--json", action="store_true")
    p_cov.set_defaults(func=cmd_coverage)

    p_grade = sub.add_parser("grade", help="code-efficiency letter grade")
    p_grade.add_argument("--src", required=True)
    p_grade.add_argument("--json", action="store_true")
    p_grade.set_defaults(func=cmd_grade)

    p_lint = sub.add_parser("lint", help="style check (optionally fix in place)")
    p_lint.add_argument("dir")
    p_lint.add_argument("--fix", action="store_true")
    p_lint.add_argument("--json", action="store_true")
    p_lint.set_defaults(func=cmd_lint)

    p_docs = sub.add_parser("docs", help="extract docstrings and build the doc site")
    p_docs.add_argument("--src", required=True)
    p_docs.add_argument("--out", required=True)
    p_docs.set_defaults(func=cmd_docs)

    p_pipe = sub.add_parser("pipeline", help="pipeline config tools")
    pipe_sub = p_pipe.add_subparsers(dest="pipeline_command", required=True)
    p_check = pipe_sub.add_parser("check", help="validate a pipeline file")
    p_check.add_argument("file")
    p_check.add_argument("--json", action="store_true")
    p_check.set_defaults(func=cmd_pipeline_check)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except urllib.error.URLError as exc:
        return _fail(f"cannot reach master: {exc}")
    except (ValueError, OSError, RuntimeError) as exc:
        # domain errors (config, pipeline, model, agent) are operation failures
        return _fail(str(exc))
    except KeyboardInterrupt:
        return 1


if __name__ == "__main__":
    sys.exit(main())
