"""Command-line front end: ``omfmea solve | simulate | fmea``.

Exit codes:
  0  success
  2  the solved network contains a short circuit across a source (solve)
  3  model, scenario, constraint or report file missing or malformed
  4  unknown fault name
  5  invalid command line
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, TextIO, Tuple

from . import __version__, behavior, dsl, fmea, model, om
from .behavior import AMBIGUOUS, Limits, Simulator, UnknownFaultError, run_scenario
from .constraints import ConstraintError
from .expr import ExprError
from .model import ModelError
from .network import snapshot

EXIT_OK = 0
EXIT_SHORT = 2
EXIT_PARSE = 3
EXIT_FAULT = 4
EXIT_USAGE = 5


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    models: List[Path]
    system: Optional[str] = None
    scenario: Optional[Path] = None
    constraints: List[str] = field(default_factory=list)
    faults: Optional[List[str]] = None  # None: not given; ["all"]: every single fault
    pairs: List[Tuple[str, ...]] = field(default_factory=list)
    concurrent_slots: Optional[List[om.QualValue]] = None
    max_branches: int = 64
    max_depth: int = 200
    fmt: str = "text"
    interactive: bool = False
    against: Optional[Path] = None
    jobs: int = 1

    def __post_init__(self):
        if self.max_branches < 1 or self.max_depth < 1:
            raise UsageError("limits must be positive")
        if self.fmt not in ("text", "csv", "json"):
            raise UsageError(f"unknown format {self.fmt!r}")

    @property
    def limits(self) -> Limits:
        return Limits(self.max_branches, self.max_depth)


# ---------------------------------------------------------------------------
# input helpers

def _read(path: Path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelError(f"{path}: {exc.strerror or exc}") from None


def read_constraints(text: str) -> List[str]:
    """Constraint lines; ``;`` also separates, ``#`` starts a comment."""
    out = []
    for line in text.splitlines():
        line = line.split("#", 1)[0]
        out += [c.strip() for c in line.split(";") if c.strip()]
    return out


def read_pairs(text: str) -> List[Tuple[str, ...]]:
    """One fault tuple per line, names separated by spaces, commas or ``+``."""
    out = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].replace("+", " ").replace(",", " ")
        names = tuple(line.split())
        if names:
            out.append(names)
    return out


def _parse_slots(text: str) -> List[om.QualValue]:
    slots = []
    for item in text.replace(",", " ").split():
        v = om.parse_value(item, "t")
        if not (v.is_zero or v.is_finite):
            raise UsageError(f"bad concurrency slot {item!r}")
        slots.append(v)
    return slots


def _load_system(cfg: RunConfig) -> model.System:
    texts = [_read(p) for p in cfg.models]
    doc = dsl.stdlib_document()
    for path, text in zip(cfg.models, texts):
        try:
            doc = doc.merge(dsl.parse_model(text))
        except ModelError as exc:
            raise ModelError(f"{path}: {exc}") from None
    return model.instantiate(doc, cfg.system)


def _load_scenario(cfg: RunConfig):
    if cfg.scenario is None:
        return None
    try:
        return dsl.parse_scenario(_read(cfg.scenario))
    except ModelError as exc:
        raise ModelError(f"{cfg.scenario}: {exc}") from None


def _single_faults(cfg: RunConfig) -> List[str]:
    if not cfg.faults or cfg.faults == ["all"]:
        return []
    return list(cfg.faults)


def _check_faults(system: model.System, names: Sequence[str]) -> None:
    known = set(system.fault_names())
    for n in names:
        if n not in known:
            raise UnknownFaultError(f"unknown fault {n!r}")


# ---------------------------------------------------------------------------
# commands

def cmd_solve(cfg: RunConfig, out: TextIO) -> int:
    system = _load_system(cfg)
    faults = _single_faults(cfg)
    _check_faults(system, faults)
    sim = Simulator(system, faults=faults, constraints=cfg.constraints)
    st = sim.initial_state()
    sol = sim.solution_of(st)
    net = sim._network_for(dict(st.states), dict(st.overlay))
    if cfg.fmt == "json":
        doc = snapshot(net, sol)
        doc["system"] = system.name
        out.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    elif cfg.fmt == "csv":
        out.write("element,kind,F,E,P\r\n")
        for e in net.edges.values():
            out.write(f"{e.id},edge,{om.render(sol.F(e.id))},{om.render(sol.E(e.id))},{om.render(sol.P(e.id))}\r\n")
        for s in net.sources.values():
            out.write(f"{s.id},source,{om.render(sol.F(s.id))},{om.render(sol.E(s.id))},{om.render(sol.P(s.id))}\r\n")
    else:
        out.write(render_solution(system.name, net, sol))
    return EXIT_SHORT if any(v.variant == om.SHORT for v in sol.flows.values()) else EXIT_OK


def render_solution(name: str, net, sol) -> str:
    rows = [(e.id, sol.F(e.id), sol.E(e.id), sol.P(e.id)) for e in net.edges.values()]
    rows += [(s.id, sol.F(s.id), sol.E(s.id), sol.P(s.id)) for s in net.sources.values()]
    w = max([len("Element")] + [len(r[0]) for r in rows]) + 2
    lines = [f"system {name}", f"{'Element':<{w}}{'F':<10}{'E':<10}P"]
    for eid, f, e, p in rows:
        lines.append(f"{eid:<{w}}{om.render(f):<10}{om.render(e):<10}{om.render(p)}")
    if sol.labels:
        lines.append("node efforts: " + " ".join(f"{n}={om.render(v)}" for n, v in sol.labels.items()))
    subs = {n: s for n, s in sol.substances.items() if s}
    if subs:
        lines.append("substances: " + " ".join(f"{n}={{{','.join(sorted(s))}}}" for n, s in subs.items()))
    for r in sol.reports:
        lines.append(f"report: {r}")
    for c in sol.constraint_log:
        lines.append(f"constraint: {c}")
    return "\n".join(lines) + "\n"


def _ambiguity_stops(results) -> List[str]:
    notes = []
    for r in results:
        for leaf in r.tree.leaves():
            if leaf.leaf == AMBIGUOUS:
                notes += [f"{r.label}: {l}" for l in leaf.log if l.startswith(("indeterminate", "ambiguous"))]
    return notes


def cmd_simulate(cfg: RunConfig, out: TextIO, stdin: TextIO = None, err: TextIO = None) -> int:
    stdin = stdin or sys.stdin
    err = err or sys.stderr
    system = _load_system(cfg)
    scenario = _load_scenario(cfg)
    faults = _single_faults(cfg)
    _check_faults(system, faults)
    constraints = list(getattr(scenario, "constraints", []) or []) + list(cfg.constraints)
    kwargs = {} if cfg.concurrent_slots is None else {"concurrent_slots": cfg.concurrent_slots}
    while True:
        sim = Simulator(system, faults=faults, constraints=constraints, limits=cfg.limits,
                        initial=getattr(scenario, "initial", None), **kwargs)
        results = run_scenario(sim, scenario)
        stops = _ambiguity_stops(results)
        if not (cfg.interactive and stops):
            break
        for s in stops:
            err.write(f"ambiguity stop at {s}\n")
        err.write("Resolve> ")
        err.flush()
        line = stdin.readline()
        added = read_constraints(line)
        if not added:
            break
        for c in added:
            if not c.startswith("Resolve>") and not any(ch in c for ch in "<>="):
                c = f"Resolve> {c}"
            err.write(f"added constraint {c}\n")
            constraints.append(c)
    if cfg.fmt == "json":
        out.write(behavior.trace_json(sim, results) + "\n")
    elif cfg.fmt == "csv":
        out.write(trace_csv(sim, results))
    else:
        out.write(behavior.trace_text(sim, results))
    return EXIT_OK


def trace_csv(sim: Simulator, results) -> str:
    names = list(sim.system.instances)
    lines = [",".join(["step", "path", "leaf", "node", "time", "fired"] + names)]
    for r in results:
        for i, path in enumerate(behavior.trace_paths(sim, r.tree), 1):
            for row in path["rows"]:
                cells = [r.label, str(i), path["leaf"], str(row["node"]), row["time"],
                         " ".join(row["fired"])] + [row["states"][n] for n in names]
                lines.append(",".join(cells))
    return "\r\n".join(lines) + "\r\n"


def cmd_fmea(cfg: RunConfig, out: TextIO) -> int:
    system = _load_system(cfg)
    scenario = _load_scenario(cfg)
    if cfg.faults is None or cfg.faults == ["all"]:
        faults = None
    else:
        faults = list(cfg.faults)
    if cfg.pairs and cfg.faults is None:
        faults = []
    campaign = fmea.run_campaign(
        system, scenario, faults=faults, pairs=cfg.pairs, include_model_pairs=faults is None,
        constraints=cfg.constraints, limits=cfg.limits, concurrent_slots=cfg.concurrent_slots,
        jobs=cfg.jobs)
    rows = fmea.build_rows(campaign)
    if cfg.against is not None:
        text = _read(cfg.against)
        try:
            old = fmea.load_report(text)
        except (ValueError, KeyError, TypeError) as exc:
            raise ModelError(f"{cfg.against}: not a JSON or CSV report ({exc})") from None
        out.write(fmea.render_diff(fmea.diff_reports(old, rows), cfg.fmt))
        return EXIT_OK
    title = f"FMEA {campaign.system}" + (f" / {campaign.scenario}" if campaign.scenario else "")
    meta = {"system": campaign.system, "scenario": campaign.scenario}
    out.write(fmea.render_report(rows, cfg.fmt, title, meta))
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="omfmea", description="Qualitative network solving, simulation and FMEA.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("models", nargs="+", type=Path, help="model files (.omdl)")
    common.add_argument("--system", help="system to instantiate (default: the only one)")
    common.add_argument("--format", dest="fmt", choices=["text", "csv", "json"], default="text")
    common.add_argument("--constraints", type=Path, metavar="FILE", help="constraint file")
    common.add_argument("--constraint", action="append", default=[], metavar="TEXT",
                        help="inline constraint, repeatable")
    common.add_argument("--faults", nargs="+", metavar="SPEC",
                        help="LIST of faults, 'all', or 'pairs FILE'")

    sim = _Parser(add_help=False)
    sim.add_argument("--scenario", type=Path, metavar="FILE")
    sim.add_argument("--max-branches", type=int, default=64, metavar="N")
    sim.add_argument("--max-depth", type=int, default=200, metavar="N")
    sim.add_argument("--concurrent-slots", metavar="LIST",
                     help="time slots where same-slot events fire together (default: 0)")

    sub.add_parser("solve", parents=[common], help="solve the network in its initial state")
    s = sub.add_parser("simulate", parents=[common, sim], help="simulate and print the behaviour tree")
    group = s.add_mutually_exclusive_group()
    group.add_argument("--interactive", dest="interactive", action="store_true",
                       help="prompt on stdin for a constraint at ambiguity stops")
    group.add_argument("--no-interactive", dest="interactive", action="store_false")
    f = sub.add_parser("fmea", parents=[common, sim], help="run a fault campaign and print the report")
    f.add_argument("--against", type=Path, metavar="FILE", help="previous JSON/CSV report to diff against")
    f.add_argument("--jobs", type=int, default=1, metavar="N")
    return p


def _config(args) -> RunConfig:
    constraints = []
    if args.constraints is not None:
        constraints += read_constraints(_read(args.constraints))
    for c in args.constraint:
        constraints += read_constraints(c)
    faults, pairs = None, []
    if args.faults:
        if args.faults[0] == "pairs":
            if len(args.faults) != 2:
                raise UsageError("--faults pairs needs exactly one FILE")
            pairs = read_pairs(_read(Path(args.faults[1])))
        elif args.faults == ["all"]:
            faults = ["all"]
        else:
            faults = [n for item in args.faults for n in item.replace(",", " ").split()]
    slots = getattr(args, "concurrent_slots", None)
    return RunConfig(
        models=list(args.models),
        system=args.system,
        scenario=getattr(args, "scenario", None),
        constraints=constraints,
        faults=faults,
        pairs=pairs,
        concurrent_slots=_parse_slots(slots) if slots else None,
        max_branches=getattr(args, "max_branches", 64),
        max_depth=getattr(args, "max_depth", 200),
        fmt=args.fmt,
        interactive=getattr(args, "interactive", False),
        against=getattr(args, "against", None),
        jobs=getattr(args, "jobs", 1),
    )


def main(argv: Optional[Sequence[str]] = None, stdout: TextIO = None, stdin: TextIO = None,
         stderr: TextIO = None) -> int:
    out = stdout or sys.stdout
    err = stderr or sys.stderr
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        if args.command == "solve":
            return cmd_solve(cfg, out)
        if args.command == "simulate":
            return cmd_simulate(cfg, out, stdin, err)
        return cmd_fmea(cfg, out)
    except UsageError as exc:
        err.write(f"omfmea: error: {exc}\n")
        return EXIT_USAGE
    except UnknownFaultError as exc:
        err.write(f"omfmea: {exc}\n")
        return EXIT_FAULT
    except (ModelError, ExprError, ConstraintError, om.OMError) as exc:
        err.write(f"omfmea: {exc}\n")
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
