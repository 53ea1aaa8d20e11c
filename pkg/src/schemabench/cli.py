"""Command line entry point: gen-pack, render, validate-pack, run, analyze.

Exit codes: 0 success, 1 usage error, 2 validation findings, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

from schemabench import __version__
from schemabench.analysis.report import write_report
from schemabench.analysis.tokenizer import DEFAULT_TOKENIZER
from schemabench.contracts import (
    ContractError,
    default_contract_pack,
    dump_contract_pack,
    load_contract_pack,
    pack_digest,
)
from schemabench.harness.agents import scripted_agents, timeout_cells, with_timeouts
from schemabench.harness.matrix import plan_cells, run_matrix
from schemabench.harness.records import load_trajectory
from schemabench.harness.transport import AGENT_URL_ENV, RemoteTransport
from schemabench.oracle import validate_oracle
from schemabench.render import render_toolset
from schemabench.sandbox.generate import generate_pack
from schemabench.sandbox.packio import TaskPackError, load_task_pack, loads_task_pack, save_task_pack, verify_task_dict
from schemabench.sandbox.tasks import FAMILIES, Robustness, sha256

EXIT_OK, EXIT_USAGE, EXIT_FINDINGS, EXIT_RUNTIME = 0, 1, 2, 3
MANIFEST_NAME = "manifest.json"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(f"{self.prog}: {message}")


def _csv(kind: type, allowed: Optional[Sequence] = None):
    def parse(text: str) -> tuple:
        try:
            items = tuple(kind(x.strip()) for x in text.split(",") if x.strip())
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad list {text!r}") from None
        if not items:
            raise argparse.ArgumentTypeError("empty list")
        if allowed is not None and any(x not in allowed for x in items):
            raise argparse.ArgumentTypeError(f"values must be among {','.join(map(str, allowed))}")
        return items

    return parse


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="schemabench", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--workdir", default=".", help="base directory for every relative path")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-pack", help="generate a task pack")
    g.add_argument("--families", type=_csv(str, FAMILIES), default=FAMILIES)
    g.add_argument("--seeds", type=_csv(int), default=(0, 1))
    g.add_argument("--decoys", type=int, default=2)
    g.add_argument("--noise", type=int, default=0)
    g.add_argument("--schema-depth", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--contracts-out", help="also write the matching contract pack")

    r = sub.add_parser("render", help="render a contract pack for one condition")
    r.add_argument("--pack", help="contract pack (default: built-in tools)")
    r.add_argument("--condition", required=True, choices=("A", "B", "C"))
    r.add_argument("--out", required=True)

    v = sub.add_parser("validate-pack", help="integrity-check a task pack or contract pack")
    v.add_argument("--pack", required=True)

    x = sub.add_parser("run", help="run the episode matrix")
    x.add_argument("--pack", required=True)
    x.add_argument("--contracts", help="contract pack (default: built-in tools)")
    x.add_argument("--budgets", type=_csv(int), default=(3, 5, 8, 12))
    x.add_argument("--conditions", type=_csv(str, ("A", "B", "C")), default=("A", "B", "C"))
    x.add_argument("--seeds", type=_csv(int), default=(0, 1, 2))
    x.add_argument("--agent", help=f"scripted:<name> or remote:<url> (default: remote at ${AGENT_URL_ENV})")
    x.add_argument("--granularity", choices=("C1", "C2", "C3"), default="C3")
    x.add_argument("--timeout-ms", type=int, default=60_000)
    x.add_argument("--max-step-chars", type=int, default=4096)
    x.add_argument("--workers", type=int, default=1)
    x.add_argument("--stall", help="TASK_ID:SEED whose scripted cells stall past the timeout (test double)")
    x.add_argument("--stall-ms", type=int, default=200)
    x.add_argument("--log", required=True)

    a = sub.add_parser("analyze", help="compute metrics and reports from a trajectory log")
    a.add_argument("--log", required=True)
    a.add_argument("--out", required=True)
    a.add_argument("--manifest", help=f"default: {MANIFEST_NAME} next to the log")
    a.add_argument("--pack", help="task pack to check against the manifest")
    a.add_argument("--contracts", help="contract pack to check against the manifest")
    a.add_argument("--resamples", type=int, default=2000)
    a.add_argument("--rng-seed", type=int, default=0)
    a.add_argument("--alternative", choices=("two-sided", "greater", "less"), default="two-sided")
    return p


def _path(args: argparse.Namespace, p: str) -> Path:
    return Path(args.workdir) / p


def _out(args: argparse.Namespace, p: str) -> Path:
    path = _path(args, p)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _contracts(args: argparse.Namespace, attr: str):
    source = getattr(args, attr)
    if source is None:
        return default_contract_pack()
    return load_contract_pack(_path(args, source).read_bytes())


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# commands


def cmd_gen_pack(args: argparse.Namespace) -> int:
    rb = Robustness(args.decoys, args.noise, args.schema_depth)
    tasks = generate_pack(tuple(args.families), tuple(args.seeds), rb)
    digest = save_task_pack(tasks, _out(args, args.out))
    if args.contracts_out:
        _out(args, args.contracts_out).write_text(dump_contract_pack(default_contract_pack(args.schema_depth)), encoding="utf-8")
    print(f"wrote {len(tasks)} tasks to {args.out} (sha256 {digest})")
    return EXIT_OK


def cmd_render(args: argparse.Namespace) -> int:
    toolset = render_toolset(_contracts(args, "pack"), args.condition, DEFAULT_TOKENIZER)
    _out(args, args.out).write_text(toolset.text, encoding="utf-8")
    print(f"condition {args.condition}: {toolset.chars} chars, {toolset.tokens} {toolset.tokenizer} tokens")
    return EXIT_OK


def cmd_validate_pack(args: argparse.Namespace) -> int:
    raw = _path(args, args.pack).read_bytes()
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        print(f"not JSON: {exc}", file=sys.stderr)
        return EXIT_FINDINGS
    findings: list[str] = []
    if isinstance(doc, dict) and "tools" in doc:
        try:
            contracts = load_contract_pack(raw)
        except ContractError as exc:
            findings.append(str(exc))
        else:
            print(f"contract pack ok: {len(contracts)} tools, digest {pack_digest(contracts)}")
    elif isinstance(doc, dict) and "tasks" in doc:
        for d in doc.get("tasks") or []:
            tid = d.get("task_id", "?") if isinstance(d, dict) else "?"
            try:
                bad = verify_task_dict(d)
            except (KeyError, TypeError, ValueError) as exc:
                findings.append(f"{tid}: malformed entry ({exc})")
                continue
            findings += [f"{tid}: {b} digest mismatch" for b in bad]
        if not findings:
            try:
                tasks = loads_task_pack(raw)
            except TaskPackError as exc:
                findings.append(str(exc))
            else:
                for task in tasks:
                    findings += [f"{task.task_id}: oracle {f.rule} {f.detail}".rstrip() for f in validate_oracle(task.oracle, task)]
                if not findings:
                    print(f"task pack ok: {len(tasks)} tasks")
    else:
        findings.append("neither a task pack nor a contract pack")
    for f in findings:
        print(f, file=sys.stderr)
    return EXIT_FINDINGS if findings else EXIT_OK


def _agent_factory(args: argparse.Namespace):
    spec = args.agent or (f"remote:{os.environ[AGENT_URL_ENV]}" if os.environ.get(AGENT_URL_ENV) else None)
    if spec is None:
        raise UsageError(f"--agent is required when ${AGENT_URL_ENV} is unset")
    kind, _, rest = spec.partition(":")
    if kind == "scripted":
        agents = scripted_agents()
        if rest not in agents:
            raise UsageError(f"unknown scripted agent {rest!r}; choose from {', '.join(agents)}")
        factory = agents[rest]
        if args.stall:
            task_id, _, seed = args.stall.rpartition(":")
            if not task_id or not seed.lstrip("-").isdigit():
                raise UsageError("--stall expects TASK_ID:SEED")
            factory = with_timeouts(factory, timeout_cells(task_id, int(seed)), args.stall_ms / 1000)
        return spec, factory
    if kind == "remote" and rest:
        timeout_s = args.timeout_ms / 1000
        return spec, lambda task, cfg: RemoteTransport(rest, timeout_s)
    raise UsageError("--agent must be scripted:<name> or remote:<url>")


def manifest_core(args: argparse.Namespace, pack_path: Path, tasks, contracts, agent: str, planned: int) -> dict:
    """Manifest fields that are a pure function of the inputs."""
    import numpy
    import yaml

    return {
        "pack_digest": _file_digest(pack_path),
        "contract_pack_digest": pack_digest(contracts),
        "oracle_digests": {t.task_id: t.oracle.digest() for t in tasks},
        "factors": {
            "budgets": list(args.budgets),
            "conditions": list(args.conditions),
            "seeds": list(args.seeds),
            "granularity": args.granularity,
        },
        "agent": agent,
        "stall": args.stall,
        "step_timeout_ms": args.timeout_ms,
        "max_step_output_chars": args.max_step_chars,
        "planned_cells": planned,
        "tokenizer": DEFAULT_TOKENIZER.name,
        "tool_versions": {
            "schemabench": __version__,
            "python": platform.python_version(),
            "numpy": numpy.__version__,
            "pyyaml": yaml.__version__,
        },
    }


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    moment = datetime.fromtimestamp(int(epoch), timezone.utc) if epoch else datetime.now(timezone.utc)
    return moment.strftime("%Y-%m-%dT%H:%M:%SZ")


def cmd_run(args: argparse.Namespace) -> int:
    pack_path = _path(args, args.pack)
    tasks = load_task_pack(pack_path)
    contracts = _contracts(args, "contracts")
    agent, factory = _agent_factory(args)
    cells = plan_cells(tasks, args.budgets, args.conditions, args.seeds, args.granularity)
    log_path = _path(args, args.log)
    log_path.parent.mkdir(parents=True, exist_ok=True)
    core = manifest_core(args, pack_path, tasks, contracts, agent, len(cells))
    manifest = {**core, "manifest_digest": sha256(json.dumps(core, sort_keys=True)), "timestamp": _timestamp()}
    manifest_path = log_path.parent / MANIFEST_NAME
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    with open(log_path, "w", encoding="utf-8") as log:
        runs = run_matrix(
            tasks, args.budgets, args.conditions, args.seeds, factory, contracts,
            granularity=args.granularity, step_timeout_ms=args.timeout_ms,
            max_step_output_chars=args.max_step_chars, log=log, workers=args.workers,
        )
    manifest["log_digest"] = _file_digest(log_path)
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    scored = sum(r.scored for r in runs)
    print(f"{len(runs)} of {len(cells)} planned cells: {scored} scored, {len(runs) - scored} excluded")
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    log_path = _path(args, args.log)
    manifest_path = _path(args, args.manifest) if args.manifest else log_path.parent / MANIFEST_NAME
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    problems = []
    if manifest.get("log_digest") != _file_digest(log_path):
        problems.append("log digest does not match the manifest")
    if args.pack and manifest.get("pack_digest") != _file_digest(_path(args, args.pack)):
        problems.append("task pack digest does not match the manifest")
    if args.pack and not problems:
        tasks = load_task_pack(_path(args, args.pack))
        if manifest.get("oracle_digests") != {t.task_id: t.oracle.digest() for t in tasks}:
            problems.append("oracle digests do not match the manifest")
    if args.contracts and manifest.get("contract_pack_digest") != pack_digest(_contracts(args, "contracts")):
        problems.append("contract pack digest does not match the manifest")
    if problems:
        for p in problems:
            print(f"refusing to analyze: {p}", file=sys.stderr)
        return EXIT_FINDINGS
    runs = load_trajectory(log_path)
    doc = write_report(runs, _path(args, args.out), manifest.get("tokenizer", "whitespace"),
                       args.resamples, args.rng_seed, args.alternative)
    c = doc["counts"]
    print(f"{c['total']} runs: {c['scored']} scored, {c['excluded']} excluded; report in {args.out}")
    return EXIT_OK


COMMANDS = {
    "gen-pack": cmd_gen_pack,
    "render": cmd_render,
    "validate-pack": cmd_validate_pack,
    "run": cmd_run,
    "analyze": cmd_analyze,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except (TaskPackError, ContractError) as exc:
        print(f"invalid pack: {exc}", file=sys.stderr)
        return EXIT_FINDINGS
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
