"""Fault campaigns, function-state classification and FMEA reports.

A campaign simulates the scenario once with no faults and once per fault
set.  At the end of every step each function is classified from its trigger
and effect expressions, and each observable is evaluated.  Comparing a
faulty run with the nominal one gives the per-step deltas that make up one
report row.
"""
from __future__ import annotations

import csv
import io
import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from . import om
from .behavior import MERGED, Limits, SimulationError, Simulator, UnknownFaultError, run_scenario
from .expr import INDETERMINATE, evaluate, value_of
from .model import FunctionSpec, ModelError, Observable, ScenarioDocument, System
from .om import QualValue

ACHIEVED = "Achieved"
FAILED = "Failed"
UNEXPECTED = "UnexpectedBehaviour"
INOPERATIVE = "Inoperative"
INDETERMINATE_STATE = "Indeterminate"

# most severe first; an undecidable function counts as possibly failed
SEVERITY = {FAILED: 4, INDETERMINATE_STATE: 3, UNEXPECTED: 2, INOPERATIVE: 1, ACHIEVED: 0}
STATE_WORDS = {ACHIEVED: "achieved", FAILED: "failed", UNEXPECTED: "unexpected",
               INOPERATIVE: "inoperative", INDETERMINATE_STATE: "indeterminate"}

Cause = Tuple[str, ...]


def classify_function_state(trigger, effect) -> str:
    """Map (trigger, effect) truth values to a function state."""
    if trigger is INDETERMINATE or effect is INDETERMINATE:
        return INDETERMINATE_STATE
    if trigger:
        return ACHIEVED if effect else FAILED
    return UNEXPECTED if effect else INOPERATIVE


def worst_state(states: Iterable[str]) -> str:
    return max(states, key=lambda s: SEVERITY[s], default=INOPERATIVE)


def compute_rpn(sev: Optional[int], det: Optional[int], occ: Optional[int] = None) -> int:
    """Product of the given factors; a missing factor counts as 1."""
    rpn = 1
    for f in (sev, det, occ):
        if f is not None:
            rpn *= f
    return rpn


# ---------------------------------------------------------------------------
# runs

@dataclass
class StepOutcome:
    label: str
    functions: Dict[str, str]
    observables: Dict[str, tuple]  # distinct values across leaves, in leaf order
    leaves: int
    incomplete: bool = False


@dataclass
class Run:
    cause: Cause
    steps: List[StepOutcome] = field(default_factory=list)
    incomplete: bool = False
    error: Optional[str] = None


@dataclass
class Campaign:
    system: str
    scenario: str
    nominal: Run
    runs: List[Run]
    functions: Dict[str, FunctionSpec]
    observables: Dict[str, Observable]
    system_ref: System = field(repr=False, default=None)


def _observe(obs: Observable, env):
    if obs.balance:
        return tuple(value_of(e, env) for _, e in obs.terms)
    return value_of(obs.terms[0][1], env)


def _step_outcome(sim: Simulator, label: str, tree) -> StepOutcome:
    from .behavior import _CompEnv

    system = sim.system
    fstates: Dict[str, List[str]] = {f.name: [] for f in system.functions}
    values: Dict[str, list] = {o.name: [] for o in system.observables}
    leaves = [n for n in tree.leaves() if n.leaf != MERGED]
    for leaf in leaves:
        env = _CompEnv(sim, leaf.state, sim.solution_of(leaf.state), None)
        for fn in system.functions:
            t = evaluate(fn.trigger, env) if fn.trigger is not None else True
            e = evaluate(fn.effect, env) if fn.effect is not None else True
            fstates[fn.name].append(classify_function_state(t, e))
        for obs in system.observables:
            v = _observe(obs, env)
            if v not in values[obs.name]:
                values[obs.name].append(v)
    return StepOutcome(
        label,
        {k: worst_state(v) for k, v in fstates.items()},
        {k: tuple(v) for k, v in values.items()},
        len(leaves),
        tree.incomplete,
    )


def simulate_run(system: System, scenario: Optional[ScenarioDocument], cause: Cause = (),
                 constraints: Sequence[str] = (), limits: Optional[Limits] = None,
                 concurrent_slots: Optional[Sequence[QualValue]] = None) -> Run:
    """Simulate one fault set through the scenario; failures are recorded, not raised."""
    run = Run(tuple(cause))
    kwargs = {}
    if concurrent_slots is not None:
        kwargs["concurrent_slots"] = concurrent_slots
    extra = list(getattr(scenario, "constraints", []) or []) + list(constraints)
    try:
        sim = Simulator(system, faults=cause, constraints=extra, limits=limits,
                        initial=getattr(scenario, "initial", None), **kwargs)
        for res in run_scenario(sim, scenario):
            run.steps.append(_step_outcome(sim, res.label, res.tree))
    except UnknownFaultError:
        raise
    except (SimulationError, ModelError, om.OMError) as exc:
        run.error = str(exc)
    run.incomplete = any(s.incomplete for s in run.steps)
    return run


def _check_faults(system: System, causes: Iterable[Cause]) -> None:
    known = set(system.fault_names())
    for cause in causes:
        for f in cause:
            if f not in known:
                raise UnknownFaultError(f"unknown fault {f!r}")


def run_campaign(
    system: System,
    scenario: Optional[ScenarioDocument],
    faults: Union[None, str, Sequence[Union[str, Cause]]] = None,
    pairs: Sequence[Cause] = (),
    include_model_pairs: bool = True,
    constraints: Sequence[str] = (),
    limits: Optional[Limits] = None,
    concurrent_slots: Optional[Sequence[QualValue]] = None,
    jobs: int = 1,
) -> Campaign:
    """One nominal run plus one run per fault set.

    ``faults`` is ``None`` or ``"all"`` for every single failure mode of every
    instance, or an explicit list of fault names and fault tuples.  ``pairs``
    adds multi-fault tuples, as do the system's own ``pair`` lines unless
    ``include_model_pairs`` is false.
    """
    if faults is None or faults == "all":
        causes: List[Cause] = [(f,) for f in system.fault_names()]
    else:
        causes = [(f,) if isinstance(f, str) else tuple(f) for f in faults]
    extra = [tuple(p) for p in pairs]
    if include_model_pairs:
        extra += [tuple(p) for p in system.fault_pairs]
    for c in extra:
        if c not in causes:
            causes.append(c)
    _check_faults(system, causes)

    def one(cause: Cause) -> Run:
        return simulate_run(system, scenario, cause, constraints, limits, concurrent_slots)

    nominal = one(())
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(one, causes))
    else:
        runs = [one(c) for c in causes]
    return Campaign(
        system.name,
        getattr(scenario, "name", "") or "",
        nominal,
        runs,
        {f.name: f for f in system.functions},
        {o.name: o for o in system.observables},
        system,
    )


def nominal_anomalies(campaign: Campaign) -> List[Tuple[str, str, str]]:
    """(step, function, state) for nominal functions that are not Achieved/Inoperative."""
    return [(s.label, f, st) for s in campaign.nominal.steps for f, st in s.functions.items()
            if st not in (ACHIEVED, INOPERATIVE)]


# ---------------------------------------------------------------------------
# comparison

@dataclass
class FunctionEffect:
    name: str
    state: str
    expected: str
    effect: str
    severity: Optional[int] = None
    detection: Optional[int] = None
    occurrence: Optional[int] = None

    @property
    def rpn(self) -> int:
        return compute_rpn(self.severity, self.detection, self.occurrence)


@dataclass
class StepDelta:
    step: int
    label: str
    observables: List[Tuple[str, str]] = field(default_factory=list)
    functions: List[FunctionEffect] = field(default_factory=list)

    def __bool__(self) -> bool:
        return bool(self.observables or self.functions)


def _describe(system: Optional[System], v) -> str:
    if isinstance(v, QualValue):
        if v.is_zero:
            return "none"
        if v.is_amb:
            return "indeterminate"
        if v.is_inf:
            return "unbounded"
        if not v.is_finite:
            return om.render(v)
        mag = om.om_abs(v)
        label = system.label_for(mag) if system is not None else None
        text = label or om.render(mag)
        return f"reverse {text}" if v.sign < 0 else text
    if isinstance(v, frozenset):
        return ", ".join(sorted(v)) or "nothing"
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is INDETERMINATE:
        return "indeterminate"
    return str(v)


def _relative(nom: QualValue, val: QualValue) -> Optional[str]:
    kn, kv = om.signed_key(nom), om.signed_key(val)
    if kv == kn:
        return None
    return "higher than expected" if kv > kn else "lower than expected"


def _scalar_phrase(system, nom, val) -> Optional[str]:
    if val == nom:
        return None
    exp = _describe(system, nom)
    if isinstance(nom, QualValue) and isinstance(val, QualValue):
        if val.is_amb:
            return f"indeterminate ({exp} expected)"
        if nom.is_amb or not (val.is_finite or val.is_zero) or not (nom.is_finite or nom.is_zero):
            return f"{_describe(system, val)} ({exp} expected)"
        if val.is_zero:
            return f"none ({exp} expected)"
        if nom.is_zero:
            return f"{_describe(system, val)} (none expected)"
        rel = _relative(nom, val)
        return None if rel is None else f"{rel} ({exp} expected)"
    return f"{_describe(system, val)} ({exp} expected)"


def _balance_total(obs: Observable, values: tuple) -> QualValue:
    terms = [v if s > 0 else -v for (s, _), v in zip(obs.terms, values)]
    return om.om_sum(terms)


def _balance_phrase(system, obs: Observable, nom: tuple, val: tuple) -> Optional[str]:
    deltas = []
    for (s, _), n, v in zip(obs.terms, nom, val):
        if n == v:
            continue
        d = om.om_add(v, -n)
        deltas.append(d if s > 0 else -d)
    if not deltas:
        return None
    total = om.om_sum(deltas)
    noun = obs.name.replace("_", " ")
    base = _balance_total(obs, nom)
    if base.is_zero:
        exp = f"steady {noun}"
    elif base.is_finite:
        label = system.label_for(om.om_abs(base)) if system is not None else None
        exp = f"{label or om.render(om.om_abs(base))} {noun} {'decrease' if base.sign < 0 else 'increase'}"
    else:
        exp = f"{_describe(system, base)} {noun} change"
    if total.is_zero:
        return None
    if total.is_amb:
        return f"possibly different ({exp} expected)"
    return f"{'higher' if total.sign > 0 else 'lower'} than expected ({exp} expected)"


def observable_phrase(system: Optional[System], obs: Observable, nominal: tuple, faulty: tuple) -> Optional[str]:
    """Relative description of a faulty observable against its nominal value(s)."""
    if set(faulty) == set(nominal) or not nominal:
        return None
    ref = nominal[0]
    phrases = []
    for v in faulty:
        p = _balance_phrase(system, obs, ref, v) if obs.balance else _scalar_phrase(system, ref, v)
        if p is not None and p not in phrases:
            phrases.append(p)
    return " or ".join(phrases) if phrases else None


def compare_runs(nominal: Run, faulty: Run, functions: Dict[str, FunctionSpec],
                 observables: Dict[str, Observable], system: Optional[System] = None) -> List[StepDelta]:
    """Per-step differences between a faulty run and the nominal run."""
    out = []
    for i, (ns, fs) in enumerate(zip(nominal.steps, faulty.steps), 1):
        delta = StepDelta(i, fs.label)
        for name, obs in observables.items():
            p = observable_phrase(system, obs, ns.observables.get(name, ()), fs.observables.get(name, ()))
            if p is not None:
                delta.observables.append((name, p))
        for name, spec in functions.items():
            a, b = ns.functions.get(name), fs.functions.get(name)
            if a == b or b is None:
                continue
            text = spec.texts.get(b, f"{name} {STATE_WORDS[b]}")
            delta.functions.append(FunctionEffect(name, b, a, text, spec.severity, spec.detection, spec.occurrence))
        if delta:
            out.append(delta)
    return out


# ---------------------------------------------------------------------------
# report rows

ALL = "ALL"
AS_PREVIOUS = "as previous step"


@dataclass
class StepEntry:
    step: int
    label: str
    observables: List[Tuple[str, str]] = field(default_factory=list)
    functions: List[FunctionEffect] = field(default_factory=list)
    same_as_previous: bool = False


@dataclass
class FmeaRow:
    item: str
    cause: str
    steps: List[StepEntry]
    severity: Optional[int] = None
    detection: Optional[int] = None
    occurrence: Optional[int] = None
    rpn: int = 1
    incomplete: bool = False
    error: Optional[str] = None


def cause_text(cause: Cause) -> str:
    return " + ".join(" - ".join(f.split(".", 1)) for f in cause)


def _item_number(item: str) -> int:
    m = re.search(r"\d+", item)
    return int(m.group()) if m else 0


def build_rows(campaign: Campaign) -> List[FmeaRow]:
    """Rows for every fault run that differs from nominal, highest RPN first."""
    rows = []
    n = 0
    for run in campaign.runs:
        deltas = compare_runs(campaign.nominal, run, campaign.functions, campaign.observables,
                              campaign.system_ref)
        if not deltas and run.error is None and not run.incomplete:
            continue
        n += 1
        entries = []
        prev = None
        for d in deltas:
            same = prev is not None and prev.step == d.step - 1 and bool(d.observables) \
                and d.observables == prev.observables
            entries.append(StepEntry(d.step, d.label, [] if same else list(d.observables),
                                     list(d.functions), same))
            prev = d
        effects = [f for d in deltas for f in d.functions]
        worst = max(effects, key=lambda f: (f.rpn, f.severity or 0), default=None)
        sev = worst.severity if worst else None
        det = worst.detection if worst else None
        occ = worst.occurrence if worst else None
        rows.append(FmeaRow(f"F{n}", cause_text(run.cause), entries, sev, det, occ,
                            compute_rpn(sev, det, occ), run.incomplete, run.error))
    rows.sort(key=lambda r: (-r.rpn, _item_number(r.item)))
    return rows


# ---------------------------------------------------------------------------
# rendering

def _opt(v: Optional[int]) -> str:
    return "" if v is None else str(v)


def _sd(f: FunctionEffect) -> str:
    return ", ".join(str(x) for x in (f.severity, f.detection) if x is not None)


def _obs_lines(entry: StepEntry) -> List[Tuple[str, str]]:
    return [(ALL, AS_PREVIOUS)] if entry.same_as_previous else entry.observables


def render_text(rows: Sequence[FmeaRow], title: str = "") -> str:
    out = []
    if title:
        out.append(title)
    out.append(f"{'Item':<6}{'Failure cause':<36}{'Sev':>4}{'Det':>4}{'Occ':>4}{'RPN':>5}")
    for r in rows:
        out.append(f"{r.item:<6}{r.cause:<36}{_opt(r.severity):>4}{_opt(r.detection):>4}"
                   f"{_opt(r.occurrence):>4}{r.rpn:>5}")
        if r.error:
            out.append(f"      simulation error: {r.error}")
        if r.incomplete:
            out.append("      exploration incomplete (limits reached)")
        for e in r.steps:
            out.append(f"      At {e.label} (step {e.step})")
            obs = _obs_lines(e)
            if obs:
                w = max(len("Observable"), *(len(n) for n, _ in obs)) + 2
                out.append(f"        {'Observable':<{w}}Value")
                for n, v in obs:
                    out.append(f"        {n:<{w}}{v}")
            if e.functions:
                w = max(len("Function"), *(len(f.name) for f in e.functions)) + 2
                out.append(f"        {'Function':<{w}}{'State':<14}{'Effect':<44}S,D")
                for f in e.functions:
                    out.append(f"        {f.name:<{w}}{STATE_WORDS[f.state]:<14}{f.effect:<44}{_sd(f)}")
    return "\n".join(out) + "\n"


CSV_FIELDS = ["item", "cause", "severity", "detection", "occurrence", "rpn", "incomplete", "error",
              "step", "label", "kind", "name", "value", "expected", "effect",
              "f_severity", "f_detection", "f_occurrence"]


def render_csv(rows: Sequence[FmeaRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(CSV_FIELDS)
    for r in rows:
        head = [r.item, r.cause, _opt(r.severity), _opt(r.detection), _opt(r.occurrence), r.rpn,
                "1" if r.incomplete else "", r.error or ""]
        if not r.steps:
            w.writerow(head + [""] * (len(CSV_FIELDS) - len(head)))
        for e in r.steps:
            for n, v in _obs_lines(e):
                w.writerow(head + [e.step, e.label, "observable", n, v, "", "", "", "", ""])
            for f in e.functions:
                w.writerow(head + [e.step, e.label, "function", f.name, f.state, f.expected, f.effect,
                                   _opt(f.severity), _opt(f.detection), _opt(f.occurrence)])
    return buf.getvalue()


def rows_to_json(rows: Sequence[FmeaRow]) -> list:
    return [asdict(r) for r in rows]


def render_json(rows: Sequence[FmeaRow], meta: Optional[dict] = None) -> str:
    doc = dict(meta or {})
    doc["rows"] = rows_to_json(rows)
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def render_report(rows: Sequence[FmeaRow], fmt: str = "text", title: str = "", meta: Optional[dict] = None) -> str:
    if fmt == "text":
        return render_text(rows, title)
    if fmt == "csv":
        return render_csv(rows)
    if fmt == "json":
        return render_json(rows, meta)
    raise ValueError(f"unknown format {fmt!r}")


def _int_or_none(s: str) -> Optional[int]:
    return int(s) if s not in ("", None) else None


def _row_from_dict(d: dict) -> FmeaRow:
    steps = []
    for e in d.get("steps", []):
        fns = [FunctionEffect(**f) for f in e.get("functions", [])]
        steps.append(StepEntry(e["step"], e["label"], [tuple(o) for o in e.get("observables", [])],
                               fns, e.get("same_as_previous", False)))
    return FmeaRow(d["item"], d["cause"], steps, d.get("severity"), d.get("detection"),
                   d.get("occurrence"), d.get("rpn", 1), d.get("incomplete", False), d.get("error"))


def load_report(text: str, fmt: Optional[str] = None) -> List[FmeaRow]:
    """Parse a JSON or CSV report back into rows."""
    if fmt is None:
        fmt = "json" if text.lstrip().startswith(("{", "[")) else "csv"
    if fmt == "json":
        doc = json.loads(text)
        items = doc["rows"] if isinstance(doc, dict) else doc
        return [_row_from_dict(d) for d in items]
    if fmt != "csv":
        raise ValueError(f"cannot load a {fmt} report")
    rows: Dict[str, FmeaRow] = {}
    for rec in csv.DictReader(io.StringIO(text)):
        row = rows.get(rec["item"])
        if row is None:
            row = rows[rec["item"]] = FmeaRow(
                rec["item"], rec["cause"], [], _int_or_none(rec["severity"]), _int_or_none(rec["detection"]),
                _int_or_none(rec["occurrence"]), int(rec["rpn"]), rec["incomplete"] == "1", rec["error"] or None)
        if not rec["step"]:
            continue
        step = int(rec["step"])
        if not row.steps or row.steps[-1].step != step:
            row.steps.append(StepEntry(step, rec["label"]))
        entry = row.steps[-1]
        if rec["kind"] == "observable":
            if rec["name"] == ALL and rec["value"] == AS_PREVIOUS:
                entry.same_as_previous = True
            else:
                entry.observables.append((rec["name"], rec["value"]))
        else:
            entry.functions.append(FunctionEffect(
                rec["name"], rec["value"], rec["expected"], rec["effect"],
                _int_or_none(rec["f_severity"]), _int_or_none(rec["f_detection"]),
                _int_or_none(rec["f_occurrence"])))
    return list(rows.values())


# ---------------------------------------------------------------------------
# incremental reports

DiffKey = Tuple[str, str, str]


@dataclass
class ReportDiff:
    added: List[Tuple[DiffKey, dict]] = field(default_factory=list)
    removed: List[Tuple[DiffKey, dict]] = field(default_factory=list)
    changed: List[Tuple[DiffKey, dict, dict]] = field(default_factory=list)

    def __bool__(self) -> bool:
        return bool(self.added or self.removed or self.changed)


def _records(rows: Sequence[FmeaRow]) -> Dict[DiffKey, dict]:
    """Flatten rows to records keyed by (cause, step label, function)."""
    out: Dict[DiffKey, dict] = {}
    for r in rows:
        if not r.steps:
            out[(r.cause, "", "")] = {"error": r.error, "incomplete": r.incomplete}
        for e in r.steps:
            obs = [list(o) for o in _obs_lines(e)]
            if not e.functions:
                out[(r.cause, e.label, "")] = {"observables": obs}
            for f in e.functions:
                out[(r.cause, e.label, f.name)] = {
                    "state": f.state, "effect": f.effect, "severity": f.severity,
                    "detection": f.detection, "occurrence": f.occurrence, "observables": obs}
    return out


def diff_reports(old: Sequence[FmeaRow], new: Sequence[FmeaRow]) -> ReportDiff:
    a, b = _records(old), _records(new)
    diff = ReportDiff()
    for k in sorted(set(a) | set(b)):
        if k not in b:
            diff.removed.append((k, a[k]))
        elif k not in a:
            diff.added.append((k, b[k]))
        elif a[k] != b[k]:
            diff.changed.append((k, a[k], b[k]))
    return diff


def _key_text(k: DiffKey) -> str:
    return " / ".join(p for p in k if p)


def render_diff(diff: ReportDiff, fmt: str = "text") -> str:
    if fmt == "json":
        doc = {
            "added": [{"key": list(k), "record": v} for k, v in diff.added],
            "removed": [{"key": list(k), "record": v} for k, v in diff.removed],
            "changed": [{"key": list(k), "old": o, "new": n} for k, o, n in diff.changed],
        }
        return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["change", "cause", "step", "function", "old", "new"])
        for k, v in diff.added:
            w.writerow(["added", *k, "", json.dumps(v, sort_keys=True)])
        for k, v in diff.removed:
            w.writerow(["removed", *k, json.dumps(v, sort_keys=True), ""])
        for k, o, n in diff.changed:
            w.writerow(["changed", *k, json.dumps(o, sort_keys=True), json.dumps(n, sort_keys=True)])
        return buf.getvalue()
    if fmt != "text":
        raise ValueError(f"unknown format {fmt!r}")
    out = [f"Incremental FMEA: {len(diff.added)} added, {len(diff.removed)} removed, {len(diff.changed)} changed"]
    for k, v in diff.added:
        out.append(f"+ {_key_text(k)}")
    for k, v in diff.removed:
        out.append(f"- {_key_text(k)}")
    for k, o, n in diff.changed:
        fields = sorted(f for f in set(o) | set(n) if o.get(f) != n.get(f))
        out.append(f"~ {_key_text(k)}: " + "; ".join(f"{f} {o.get(f)!r} -> {n.get(f)!r}" for f in fields))
    return "\n".join(out) + "\n"
