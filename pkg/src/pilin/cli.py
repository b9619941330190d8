"""Command line: ``pilin check``, ``pilin run`` and ``pilin rank``.

Exit codes: 0 well typed (and terminated, for ``run``); 1 invalid (or a run
that got stuck); 2 not quasi typed; 3 unreadable, unparsable or ill-formed
input; 4 a resource limit (validity budget or run fuel) was hit.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import formulas as F
from .parser import ParseError, parse_program
from .process import Diagnostic, Program, check_well_formed
from .rank import INF, RankTable, program_ranks
from .runtime import MinRank, Random, run
from .typeck import AddressClash, IllTyped, ProofGraph, UnproductiveCycle, check_program, \
    derivation_report, graph_to_json
from .validity import (
    DEFAULT_SUMMARY_BUDGET, ResourceLimit, Verdict, automata_hoa, automata_json,
    check_validity, oracle_check,
)

SCHEMA = "pilin-report/1"
DEFAULT_FUEL = 10_000

EXIT_OK, EXIT_INVALID, EXIT_ILL_TYPED, EXIT_ILL_FORMED, EXIT_LIMIT = 0, 1, 2, 3, 4


@dataclass
class Report:
    command: str
    path: str
    diagnostics: list[dict] = field(default_factory=list)
    ranks: dict | None = None
    quasi_typed: bool | None = None
    verdict: dict | None = None
    run: dict | None = None
    extra: dict = field(default_factory=dict)
    exit_code: int = EXIT_OK
    elapsed_ms: float = 0.0

    def to_json(self) -> dict:
        out = {
            "schema": SCHEMA,
            "command": self.command,
            "path": self.path,
            "diagnostics": self.diagnostics,
            "ranks": self.ranks,
            "quasi_typed": self.quasi_typed,
            "verdict": self.verdict,
            "run": self.run,
        }
        out.update(self.extra)
        out["exit_code"] = self.exit_code
        out["elapsed_ms"] = round(self.elapsed_ms, 3)
        return out


def _diag(kind: str, message: str, line=None, col=None, definition=None) -> dict:
    return {"kind": kind, "message": message, "line": line, "col": col, "definition": definition}


def _from_diagnostic(d: Diagnostic) -> dict:
    return _diag(d.kind, d.message, d.loc.line if d.loc else None,
                 d.loc.col if d.loc else None, d.definition)


def _rank_json(table: RankTable) -> dict:
    return {name: ("inf" if r == INF else int(r)) for name, r in table.definitions().items()}


def _verdict_json(v: Verdict) -> dict:
    return {
        "well_typed": v.well_typed,
        "bounded": v.bounded,
        "explanation": v.explanation or None,
        "lasso": v.lasso.to_json() if v.lasso else None,
    }


@dataclass
class _Loaded:
    program: Program
    ranks: RankTable


def _load(path: str, report: Report) -> _Loaded | None:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        report.diagnostics.append(_diag("IOError", str(e)))
        report.exit_code = EXIT_ILL_FORMED
        return None
    try:
        prog = parse_program(text, path).program
    except ParseError as e:
        span = e.span
        report.diagnostics.append(_diag("ParseError", e.message, span.line if span else None,
                                        span.col if span else None))
        report.exit_code = EXIT_ILL_FORMED
        return None
    diags = [_from_diagnostic(d) for d in check_well_formed(prog)]
    if prog.main is None:
        diags.append(_diag("MainSignature", "no main definition"))
    else:
        d = prog.main_def
        if d.arity != 1 or d.params[0][1] != F.One():
            diags.append(_diag("MainSignature", "main must have exactly one parameter of type 1",
                               d.loc.line if d.loc else None, d.loc.col if d.loc else None, d.name))
    if diags:
        report.diagnostics += diags
        report.exit_code = EXIT_ILL_FORMED
        return None
    ranks = program_ranks(prog)
    report.ranks = _rank_json(ranks)
    return _Loaded(prog, ranks)


def _typecheck(loaded: _Loaded, report: Report) -> ProofGraph | None:
    try:
        g = check_program(loaded.program)
    except IllTyped as e:
        report.diagnostics.append(_diag("IllTyped", str(e), e.loc.line if e.loc else None,
                                        e.loc.col if e.loc else None, e.definition))
    except UnproductiveCycle as e:
        report.diagnostics.append(_diag("UnproductiveCycle", str(e)))
    except AddressClash as e:
        report.diagnostics.append(_diag("AddressClash", f"internal error: {e}"))
    else:
        report.quasi_typed = True
        return g
    report.quasi_typed = False
    report.exit_code = EXIT_ILL_TYPED
    return None


def _validate(loaded: _Loaded, g: ProofGraph, report: Report, oracle: int | None,
              budget: int) -> Verdict | None:
    try:
        if oracle is not None:
            v = oracle_check(g, loaded.ranks, g.closure, oracle)
        else:
            v = check_validity(g, loaded.ranks, g.closure, budget)
    except ResourceLimit as e:
        report.diagnostics.append(_diag("ResourceLimit", str(e)))
        report.exit_code = EXIT_LIMIT
        return None
    report.verdict = _verdict_json(v)
    if not v.well_typed:
        report.exit_code = EXIT_INVALID
    return v


def cmd_check(path: str, args) -> tuple[Report, list[str]]:
    report = Report("check", path)
    text: list[str] = []
    loaded = _load(path, report)
    if loaded is None:
        return report, text
    g = _typecheck(loaded, report)
    if g is None:
        return report, text
    if args.derivation:
        if args.json:
            report.extra["derivation"] = graph_to_json(g)
        else:
            text.append(derivation_report(g))
    if args.emit_automata:
        out = Path(args.emit_automata)
        out.mkdir(parents=True, exist_ok=True)
        stem = Path(path).stem
        data = automata_json(g, loaded.ranks)
        (out / f"{stem}.automata.json").write_text(json.dumps(data, indent=2, ensure_ascii=False) + "\n")
        (out / f"{stem}.hoa").write_text(automata_hoa(g, loaded.ranks))
    v = _validate(loaded, g, report, args.oracle, args.budget)
    if v is not None:
        text.append(f"{path}: {v}")
        if v.lasso:
            text.append(f"  lasso prefix: {_edges(v.lasso.prefix)}")
            text.append(f"  lasso cycle:  {_edges(v.lasso.cycle)}")
    return report, text


def _edges(es) -> str:
    return " ".join(f"{s}.{k}" for s, k in es) or "(empty)"


def cmd_rank(path: str, args) -> tuple[Report, list[str]]:
    report = Report("rank", path)
    loaded = _load(path, report)
    if loaded is None:
        return report, []
    width = max(len(n) for n in report.ranks)
    return report, [f"{n:<{width}}  {r}" for n, r in report.ranks.items()]


def cmd_run(path: str, args) -> tuple[Report, list[str]]:
    report = Report("run", path)
    text: list[str] = []
    loaded = _load(path, report)
    if loaded is None:
        return report, text
    if not args.unchecked:
        g = _typecheck(loaded, report)
        if g is None:
            return report, text
        v = _validate(loaded, g, report, None, args.budget)
        if v is None or not v.well_typed:
            return report, text
    policy = MinRank() if args.policy == "minrank" else Random(args.seed, args.patience)
    trace = run(loaded.program, policy, args.fuel, loaded.ranks)
    report.run = {
        "policy": args.policy,
        "seed": args.seed if args.policy == "random" else None,
        "patience": args.patience if args.policy == "random" else None,
        "fuel": args.fuel,
        "outcome": trace.outcome,
        "steps": trace.steps,
        "max_soup_size": trace.max_size,
        "final": str(trace.final),
    }
    if args.trace:
        if args.json:
            text += [json.dumps(e.to_json()) for e in trace.entries]
        else:
            text += [f"{e.rule} {e.subject} (soup size {e.size})" for e in trace.entries]
    text.append(f"{path}: {trace.outcome} after {trace.steps} step(s)")
    if trace.outcome == "FuelExhausted":
        report.exit_code = EXIT_LIMIT
    elif trace.outcome != "Terminated":
        report.exit_code = EXIT_INVALID
    return report, text


def _expand(paths: list[str]) -> list[str]:
    out = []
    for p in paths:
        if os.path.isdir(p):
            out += sorted(str(q) for q in Path(p).glob("*.pilin"))
        else:
            out.append(p)
    return out


def _default_fuel() -> int:
    raw = os.environ.get("PILIN_FUEL")
    if raw is None:
        return DEFAULT_FUEL
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"PILIN_FUEL must be an integer, got {raw!r}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pilin", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    check = sub.add_parser("check", help="type check and validate programs")
    check.add_argument("paths", nargs="+", help=".pilin files or directories")
    check.add_argument("--json", action="store_true", help="JSON report on standard output")
    check.add_argument("--oracle", type=int, metavar="B",
                       help="use the bounded brute-force oracle (cycles of length <= B)")
    check.add_argument("--derivation", action="store_true", help="print the derivation graph")
    check.add_argument("--emit-automata", metavar="DIR",
                       help="write M, U and N as JSON and HOA files into DIR")
    check.add_argument("--budget", type=int, default=DEFAULT_SUMMARY_BUDGET,
                       help="thread summary budget of the validity check")

    r = sub.add_parser("run", help="execute main")
    r.add_argument("paths", nargs=1, metavar="path")
    r.add_argument("--policy", choices=("minrank", "random"), default="minrank")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--patience", type=int, default=16)
    r.add_argument("--fuel", type=int, default=None, help="maximum number of reductions")
    r.add_argument("--trace", action="store_true", help="print every reduction")
    r.add_argument("--unchecked", action="store_true", help="skip type checking")
    r.add_argument("--json", action="store_true")
    r.add_argument("--budget", type=int, default=DEFAULT_SUMMARY_BUDGET)

    k = sub.add_parser("rank", help="print the rank of every definition")
    k.add_argument("paths", nargs="+")
    k.add_argument("--json", action="store_true")
    return ap


COMMANDS = {"check": cmd_check, "run": cmd_run, "rank": cmd_rank}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "fuel", 0) is None:
        args.fuel = _default_fuel()
    worst = EXIT_OK
    for path in _expand(args.paths):
        start = time.perf_counter()
        report, text = COMMANDS[args.command](path, args)
        report.elapsed_ms = (time.perf_counter() - start) * 1000
        for d in report.diagnostics:
            where = f"{path}:{d['line']}:{d['col']}" if d["line"] else path
            print(f"{where}: {d['kind']}: {d['message']}", file=sys.stderr)
        if args.json:
            trace_lines = [t for t in text if t.startswith("{")]
            for line in trace_lines:
                print(line)
            indent = None if trace_lines else 2
            print(json.dumps(report.to_json(), indent=indent, ensure_ascii=False))
        else:
            for line in text:
                print(line)
        worst = max(worst, report.exit_code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
