"""Event-queue simulation of component statecharts over OM time.

Each settled :class:`SimState` holds the pending event queue.  A step fires
the lowest non-empty time slot.  When several events compete in a slot
without the concurrency assumption, every choice is explored breadth-first.
Identical states are merged and a repeat of an ancestor is a cycle leaf.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from . import om
from .constraints import ConstraintSet
from .expr import INDETERMINATE, Env, evaluate, render_expr, value_of
from .model import (
    Action, EventSpec, FaultOp, Instance, ModelError, System, ZERO_NODE,
    resolve_element, resolve_node, resolve_value,
)
from .network import Network, Solution, solve
from .om import QualValue

QUIESCENT = "quiescent"
CYCLE = "cycle"
AMBIGUOUS = "ambiguity-stop"
LIMIT = "limit"
MERGED = "merged"


class UnknownFaultError(KeyError):
    """A fault name that names no instance failure mode."""

    def __str__(self) -> str:
        return self.args[0] if self.args else "unknown fault"


class SimulationError(RuntimeError):
    pass


def slot_key(t: QualValue) -> tuple:
    """Order of OM delays: 0 first, then t>2 before t>1 before t and so on."""
    if t.is_zero:
        return (0, 0)
    return (1, -t.n)


@dataclass(frozen=True)
class Queued:
    inst: str
    event: int  # index into the component type's event list
    slot: QualValue


@dataclass(frozen=True)
class SimState:
    """Global snapshot.  Equality over all fields identifies repeated states."""

    states: Tuple[Tuple[str, str], ...]
    variables: Tuple[Tuple[str, object], ...]
    overlay: Tuple[Tuple[str, QualValue], ...]
    substances: Tuple[Tuple[str, frozenset], ...]
    time: QualValue
    queue: Tuple[Queued, ...]

    def state_of(self, inst: str) -> str:
        return dict(self.states)[inst]

    def overlay_map(self) -> Dict[str, QualValue]:
        return dict(self.overlay)


def converged(a: SimState, b: SimState) -> bool:
    return a == b


@dataclass
class TreeNode:
    id: int
    state: SimState
    parent: Optional[int]
    depth: int
    fired: Tuple[str, ...] = ()
    removed: Tuple[str, ...] = ()
    reports: Tuple[str, ...] = ()
    log: Tuple[str, ...] = ()
    children: List[int] = field(default_factory=list)
    leaf: Optional[str] = None
    merged_into: Optional[int] = None
    branch: Optional[str] = None


@dataclass
class BehaviorTree:
    nodes: List[TreeNode]
    roots: List[int]
    incomplete: bool = False
    label: str = ""

    def leaves(self) -> List[TreeNode]:
        return [n for n in self.nodes if n.leaf in (QUIESCENT, CYCLE, AMBIGUOUS, LIMIT)]

    def path(self, node_id: int) -> List[TreeNode]:
        out = []
        cur: Optional[int] = node_id
        while cur is not None:
            out.append(self.nodes[cur])
            cur = self.nodes[cur].parent
        return out[::-1]


class Limits:
    def __init__(self, max_leaves: int = 64, max_depth: int = 200):
        if max_leaves < 1 or max_depth < 1:
            raise ValueError("limits must be positive")
        self.max_leaves = max_leaves
        self.max_depth = max_depth


class _CompEnv(Env):
    def __init__(self, sim: "Simulator", st: SimState, sol: Solution, inst: Optional[Instance]):
        self.sim, self.st, self.sol, self.inst = sim, st, sol, inst
        self.system = sim.system

    def _elem(self, name):
        eid = resolve_element(name, self.inst, self.sim.net)
        if eid is None:
            raise ModelError(f"unknown element {name!r}")
        return eid

    def _node(self, name):
        n = resolve_node(name, self.inst, self.system)
        if n is None:
            raise ModelError(f"unknown node {name!r}")
        return n

    def flow(self, name):
        return self.sol.F(self._elem(name))

    def power(self, name):
        return self.sol.P(self._elem(name))

    def effort(self, args):
        if len(args) == 1 and resolve_element(args[0], self.inst, self.sim.net) is not None:
            return self.sol.E(self._elem(args[0]))
        a = self.sol.labels.get(self._node(args[0]), om.amb("u"))
        if len(args) == 1:
            return a
        b = self.sol.labels.get(self._node(args[1]), om.amb("u"))
        if a.variant != om.FIN and not a.is_zero or b.variant != om.FIN and not b.is_zero:
            return om.amb("u")
        return om.om_add(a, -b)

    def substances(self, node):
        return self.sol.S(self._node(node))

    def lookup(self, name):
        inst = self.inst
        if "." in name:
            head, tail = name.split(".", 1)
            if head in self.system.instances:
                inst, name = self.system.instances[head], tail
        if inst is not None:
            if name == "state":
                return self.st.state_of(inst.name)
            key = f"{inst.name}.{name}"
            vars_ = dict(self.st.variables)
            if key in vars_:
                return vars_[key]
            if name in inst.params:
                return inst.params[name]
        return self.system.label_value(name)


@dataclass
class _Fired:
    state: "_Raw"
    fired: List[str]
    reports: List[str]
    branch: Optional[str] = None


@dataclass
class _Raw:
    """Mutable working copy of a state between firing and settling."""

    states: Dict[str, str]
    variables: Dict[str, object]
    overlay: Dict[str, QualValue]
    time: QualValue
    queue: List[Queued]

    @classmethod
    def of(cls, st: SimState) -> "_Raw":
        return cls(dict(st.states), dict(st.variables), dict(st.overlay), st.time, list(st.queue))


class Simulator:
    """Simulates one system under a fixed fault set and constraint set."""

    def __init__(
        self,
        system: System,
        faults: Sequence[str] = (),
        constraints: Sequence[str] = (),
        concurrent_slots: Sequence[QualValue] = (om.zero("t"),),
        limits: Optional[Limits] = None,
        initial: Optional[Dict[str, str]] = None,
    ):
        self.system = system
        self.limits = limits or Limits()
        self.concurrent = {slot_key(s) for s in concurrent_slots}
        self.constraints: ConstraintSet = system.constraint_set(constraints)
        self.net: Network = system.network.copy()
        self.pins: Dict[str, QualValue] = {}
        self.stuck: Dict[str, str] = {}
        self.suppressed: set = set()
        self.faults = tuple(faults)
        self._initial = dict(initial or {})
        for f in self.faults:
            self._apply_fault(f)
        self.constraints.bind({s.id: s.owner for s in self.net.sources.values()})
        self._cache: Dict[tuple, Solution] = {}
        self._inst_index = {name: i for i, name in enumerate(system.instances)}

    # --- setup -------------------------------------------------------------------

    def _apply_fault(self, name: str) -> None:
        inst_name, _, mode = name.partition(".")
        inst = self.system.instances.get(inst_name)
        if inst is None or mode not in inst.type.faults:
            raise UnknownFaultError(f"unknown fault {name!r}")
        labels = self.system.label_value
        for op in inst.type.faults[mode].ops:
            if op.kind == "R":
                self.pins[inst.element(op.target)] = resolve_value(op.value, inst.params, labels, "r")
            elif op.kind == "src":
                self.pins[inst.element(op.target)] = resolve_value(op.value, inst.params, labels, "u")
            elif op.kind == "leak":
                r = resolve_value(op.value, inst.params, labels, "r")
                eid = f"{inst.name}.leak_{op.target}"
                if eid not in self.net.edges:
                    self.net.add_edge(eid, inst.node(op.target, self.system.zero), self.system.zero, r, owner=inst.name)
            elif op.kind == "stuck":
                self.stuck[inst.name] = op.target
            elif op.kind == "suppress":
                self.suppressed.add((inst.name, op.target))

    def initial_state(self, overrides: Optional[Dict[str, str]] = None) -> SimState:
        raw = _Raw({}, {}, {}, om.zero("t"), [])
        for e in self.net.edges.values():
            raw.overlay[e.id] = e.r
        for s in self.net.sources.values():
            raw.overlay[s.id] = s.value
        init = dict(self._initial)
        init.update(overrides or {})
        reports: List[str] = []
        for inst in self.system.instances.values():
            st = self.stuck.get(inst.name) or init.get(inst.name) or inst.initial
            if st not in inst.type.states:
                raise ModelError(f"{inst.name}: unknown state {st!r}")
            raw.states[inst.name] = st
            for var, val in inst.type.variables.items():
                raw.variables[f"{inst.name}.{var}"] = self._var_value(inst, val)
        for inst in self.system.instances.values():
            self._run_actions(inst, inst.type.states[raw.states[inst.name]].entry, raw, reports)
        raw.overlay.update(self.pins)
        st, _, _ = self._settle(raw)
        return st

    def _var_value(self, inst: Instance, val):
        if isinstance(val, QualValue):
            return val
        return str(val)

    # --- network -------------------------------------------------------------------

    def _network_for(self, raw_states: Dict[str, str], overlay: Dict[str, QualValue]) -> Network:
        net = self.net.copy()
        for eid, v in overlay.items():
            if eid in net.edges:
                net.edges[eid].r = v
            elif eid in net.sources:
                net.sources[eid].value = v
        for inst in self.system.instances.values():
            spec = inst.type.states[raw_states[inst.name]]
            for (elem, node), subs in spec.outputs.items():
                eid = inst.element(elem)
                el = net.element(eid)
                ends = (el.t1, el.t2) if eid in net.edges else (el.neg, el.pos)
                if node == "*":
                    for n in ends:
                        el.out[n] = subs
                else:
                    el.out[inst.node(node, self.system.zero)] = subs
            for node, subs in spec.seeds.items():
                net.seeds.setdefault(inst.node(node, self.system.zero), set()).update(subs)
        return net

    def solution(self, states: Dict[str, str], overlay: Dict[str, QualValue]) -> Solution:
        key = (tuple(sorted(states.items())), tuple(sorted(overlay.items(), key=lambda kv: kv[0])))
        sol = self._cache.get(key)
        if sol is None:
            net = self._network_for(states, overlay)
            sol = solve(net, constraints=self.constraints)
            self._cache[key] = sol
        return sol

    def solution_of(self, st: SimState) -> Solution:
        return self.solution(dict(st.states), dict(st.overlay))

    # --- actions -------------------------------------------------------------------

    def _run_actions(self, inst: Instance, actions: Iterable[Action], raw: _Raw, reports: List[str]) -> None:
        labels = self.system.label_value
        for a in actions:
            if a.kind == "report":
                reports.append(f"{inst.name}: {a.value}")
            elif a.kind in ("R", "src"):
                eid = inst.element(a.target)
                if eid in self.pins:
                    continue
                kind = "r" if a.kind == "R" else ("u" if self.net.sources[eid].kind == "effort" else "f")
                raw.overlay[eid] = resolve_value(a.value, inst.params, labels, kind)
            elif a.kind == "var":
                val = a.value
                env_val = value_of(val, _StaticEnv(self.system, inst))
                raw.variables[f"{inst.name}.{a.target}"] = env_val

    def _fire(self, raw: _Raw, q: Queued, reports: List[str]) -> Optional[str]:
        inst = self.system.instances[q.inst]
        ev = inst.type.events[q.event]
        if raw.states[q.inst] != ev.source:
            return None
        self._run_actions(inst, ev.actions, raw, reports)
        raw.states[q.inst] = ev.target
        self._run_actions(inst, inst.type.states[ev.target].entry, raw, reports)
        raw.queue = [x for x in raw.queue if x != q]
        # events of this component queued from its old state are stale
        raw.queue = [x for x in raw.queue
                     if x.inst != q.inst or inst.type.events[x.event].source == ev.target]
        if slot_key(q.slot) > slot_key(raw.time):
            raw.time = q.slot
        return f"{q.inst}.{ev.name}"

    def fire_external(self, st: SimState, name: str, reports: List[str]) -> Tuple[SimState, Optional[str]]:
        """Fire ``Inst.event`` if an external transition leaves the current state."""
        inst_name, _, ev_name = name.partition(".")
        inst = self.system.instances.get(inst_name)
        if inst is None:
            raise ModelError(f"unknown instance in external event {name!r}")
        names = {e.name for e in inst.type.events if e.external}
        if ev_name not in names:
            raise ModelError(f"{inst_name} has no external event {ev_name!r}")
        raw = _Raw.of(st)
        if inst_name in self.stuck or (inst_name, ev_name) in self.suppressed:
            return st, None
        for idx, ev in enumerate(inst.type.events):
            if ev.external and ev.name == ev_name and ev.source == raw.states[inst_name]:
                label = self._fire(raw, Queued(inst_name, idx, om.zero("t")), reports)
                return self._settle(raw)[0], label
        return st, None

    def assign(self, st: SimState, inst_name: str, var: str, text: str) -> SimState:
        inst = self.system.instances.get(inst_name)
        if inst is None or var not in inst.type.variables:
            raise ModelError(f"unknown variable {inst_name}.{var}")
        raw = _Raw.of(st)
        text = text.strip()
        if len(text) >= 2 and text[0] == text[-1] == '"':
            val = text[1:-1]
        else:
            try:
                val = om.parse_value(text)
            except om.OMError:
                val = self.system.label_value(text) or text
        raw.variables[f"{inst_name}.{var}"] = val
        return self._settle(raw)[0]

    # --- settle: solve, enqueue, prune ---------------------------------------------------

    def _settle(self, raw: _Raw) -> Tuple[SimState, List[str], List[str]]:
        """Return the settled state plus removed-event notes and log lines."""
        sol = self.solution(raw.states, raw.overlay)
        frozen = self._freeze(raw, sol, tuple(raw.queue))
        log: List[str] = []
        removed: List[str] = []
        queue = list(raw.queue)
        queued = {(x.inst, x.event) for x in queue}
        for inst in self.system.instances.values():
            if inst.name in self.stuck:
                continue
            env = _CompEnv(self, frozen, sol, inst)
            cur = raw.states[inst.name]
            for idx, ev in enumerate(inst.type.events):
                if ev.external or ev.source != cur or (inst.name, idx) in queued:
                    continue
                if (inst.name, ev.name) in self.suppressed:
                    continue
                ok = evaluate(ev.tc, env)
                if ok is INDETERMINATE:
                    log.append(f"indeterminate trigger {inst.name}.{ev.name}")
                    continue
                if not ok:
                    continue
                delay = self._delay(ev, env, log, inst)
                if delay is None:
                    continue
                queue.append(Queued(inst.name, idx, delay))
                queued.add((inst.name, idx))
        kept = []
        for x in queue:
            inst = self.system.instances[x.inst]
            ev = inst.type.events[x.event]
            env = _CompEnv(self, frozen, sol, inst)
            ok = evaluate(ev.dc, env)
            if ok is False:
                removed.append(f"{x.inst}.{ev.name}: {render_expr(ev.dc)} no longer holds")
                continue
            if ok is INDETERMINATE:
                log.append(f"indeterminate during-condition {x.inst}.{ev.name}")
            kept.append(x)
        return self._freeze(raw, sol, tuple(kept)), removed, log

    def _delay(self, ev: EventSpec, env: _CompEnv, log: List[str], inst: Instance) -> Optional[QualValue]:
        if ev.delay is None:
            return om.zero("t")
        v = value_of(ev.delay, env)
        if v is None:
            return None
        if not isinstance(v, QualValue):
            raise ModelError(f"{inst.name}.{ev.name}: delay {render_expr(ev.delay)} is not a time")
        if v.is_amb:
            log.append(f"ambiguous delay {inst.name}.{ev.name}")
            return None
        if v.is_inf:
            return None
        if v.is_finite and v.q != "t":
            raise ModelError(f"{inst.name}.{ev.name}: delay {om.render(v)} is not a time")
        return om.zero("t") if v.is_zero else om.fin("t", v.n)

    def _freeze(self, raw: _Raw, sol: Solution, queue: Tuple[Queued, ...]) -> SimState:
        return SimState(
            states=tuple(raw.states.items()),
            variables=tuple(sorted(raw.variables.items())),
            overlay=tuple(sorted(raw.overlay.items(), key=lambda kv: kv[0])),
            substances=tuple(sorted(sol.substances.items())),
            time=raw.time,
            queue=tuple(sorted(queue, key=self._order)),
        )

    def _order(self, q: Queued) -> tuple:
        return (self._inst_index[q.inst], q.event, slot_key(q.slot))

    # --- one step -------------------------------------------------------------------------

    def _successors(self, st: SimState) -> Tuple[Optional[str], List[_Fired], List[str]]:
        """(leaf kind or None, successors, log) for a settled state."""
        if not st.queue:
            return QUIESCENT, [], []
        sol = self.solution_of(st)
        best = min(slot_key(x.slot) for x in st.queue)
        order = {(i.name, k): (n, k) for n, i in enumerate(self.system.instances.values())
                 for k in range(len(i.type.events))}
        cands = sorted((x for x in st.queue if slot_key(x.slot) == best), key=lambda x: order[(x.inst, x.event)])
        fireable, dropped, log = [], [], []
        for x in cands:
            inst = self.system.instances[x.inst]
            ev = inst.type.events[x.event]
            ok = evaluate(ev.fc, _CompEnv(self, st, sol, inst))
            if ok is INDETERMINATE:
                log.append(f"indeterminate fire condition {x.inst}.{ev.name}")
                return AMBIGUOUS, [], log
            (fireable if ok else dropped).append(x)
        base = _Raw.of(st)
        base.queue = [x for x in base.queue if x not in dropped]
        drop_notes = [f"{x.inst}.{self.system.instances[x.inst].type.events[x.event].name}: fire condition false"
                      for x in dropped]
        if not fireable:
            return None, [_Fired(base, [], [], None)], log + drop_notes
        if best in self.concurrent or len(fireable) == 1:
            raw = _Raw(dict(base.states), dict(base.variables), dict(base.overlay), base.time, list(base.queue))
            fired, reports = [], []
            for x in fireable:
                label = self._fire(raw, x, reports)
                if label:
                    fired.append(label)
            return None, [_Fired(raw, fired, reports)], log + drop_notes
        for choice in self.constraints.choices:
            chosen = [x for x in fireable if x.inst == choice.first]
            if chosen:
                raw = _Raw(dict(base.states), dict(base.variables), dict(base.overlay), base.time, list(base.queue))
                reports: List[str] = []
                label = self._fire(raw, chosen[0], reports)
                log.append(f"Resolve> {choice.first}")
                return None, [_Fired(raw, [label], reports)], log + drop_notes
        out = []
        for x in fireable:
            raw = _Raw(dict(base.states), dict(base.variables), dict(base.overlay), base.time, list(base.queue))
            reports = []
            label = self._fire(raw, x, reports)
            out.append(_Fired(raw, [label], reports, branch=f"Choose> {label}"))
        return None, out, log + drop_notes

    # --- exploration -------------------------------------------------------------------------

    def run(self, start: Optional[Sequence[SimState]] = None, label: str = "") -> BehaviorTree:
        """Breadth-first exploration from ``start`` (default: the initial state)."""
        if start is None:
            start = [self.initial_state()]
        tree = BehaviorTree([], [], label=label)
        seen: Dict[SimState, int] = {}
        frontier: List[int] = []
        for st in start:
            if st in seen:
                continue
            node = self._add(tree, st, None, 0)
            node.log = tuple(self._settle(_Raw.of(st))[2])
            tree.roots.append(node.id)
            seen[st] = node.id
            frontier.append(node.id)
        while frontier:
            nxt: List[int] = []
            for nid in frontier:
                node = tree.nodes[nid]
                if node.depth >= self.limits.max_depth:
                    node.leaf = LIMIT
                    tree.incomplete = True
                    continue
                kind, succ, log = self._successors(node.state)
                node.log = node.log + tuple(log)
                if kind is not None:
                    if kind == QUIESCENT and any(l.startswith("indeterminate") for l in node.log):
                        kind = AMBIGUOUS
                    node.leaf = kind
                    continue
                for s in succ:
                    st, removed, slog = self._settle(s.state)
                    child = self._add(tree, st, nid, node.depth + 1)
                    child.fired = tuple(s.fired)
                    child.reports = tuple(s.reports) + tuple(
                        r for r in self.solution_of(st).reports if not r.startswith("ambiguous flow"))
                    child.removed = tuple(removed)
                    child.log = tuple(slog)
                    child.branch = s.branch
                    node.children.append(child.id)
                    if self._is_ancestor_state(tree, child):
                        child.leaf = CYCLE
                    elif st in seen:
                        child.leaf = MERGED
                        child.merged_into = seen[st]
                    else:
                        seen[st] = child.id
                        nxt.append(child.id)
            open_leaves = len(tree.leaves()) + len(nxt)
            if open_leaves > self.limits.max_leaves:
                for nid in nxt[self.limits.max_leaves - len(tree.leaves()):]:
                    tree.nodes[nid].leaf = LIMIT
                nxt = [n for n in nxt if tree.nodes[n].leaf is None]
                tree.incomplete = True
            frontier = nxt
        return tree

    def _add(self, tree: BehaviorTree, st: SimState, parent: Optional[int], depth: int) -> TreeNode:
        node = TreeNode(len(tree.nodes), st, parent, depth)
        tree.nodes.append(node)
        return node

    @staticmethod
    def _is_ancestor_state(tree: BehaviorTree, node: TreeNode) -> bool:
        cur = node.parent
        while cur is not None:
            if tree.nodes[cur].state == node.state:
                return True
            cur = tree.nodes[cur].parent
        return False


class _StaticEnv(Env):
    """Parameters and labels only; used for action values."""

    def __init__(self, system: System, inst: Instance):
        self.system, self.inst = system, inst

    def lookup(self, name):
        if name in self.inst.params:
            return self.inst.params[name]
        return self.system.label_value(name)


# ---------------------------------------------------------------------------
# scenarios

@dataclass
class StepResult:
    label: str
    tree: BehaviorTree
    expect: Optional[str] = None


def run_scenario(sim: Simulator, scenario, initial: Optional[SimState] = None) -> List[StepResult]:
    """Run each scenario step to quiescence, continuing from every leaf."""
    from .model import ScenarioDocument, ScenarioStep

    steps = list(scenario.steps) if scenario is not None else []
    if not steps:
        steps = [ScenarioStep("run")]
    states = [initial or sim.initial_state(getattr(scenario, "initial", None))]
    results: List[StepResult] = []
    for step in steps:
        starts = []
        for st in states:
            reports: List[str] = []
            for inst, var, text in step.assignments:
                st = sim.assign(st, inst, var, text)
            for ev in step.events:
                st, _ = sim.fire_external(st, ev, reports)
            if st not in starts:
                starts.append(st)
        tree = sim.run(starts, label=step.label)
        results.append(StepResult(step.label, tree, step.expect))
        states = []
        for leaf in tree.leaves():
            if leaf.state not in states:
                states.append(leaf.state)
    return results


# ---------------------------------------------------------------------------
# trace export

def _state_row(st: SimState) -> Dict[str, str]:
    return dict(st.states)


def _queued_text(sim: Simulator, st: SimState) -> List[str]:
    out = []
    for x in st.queue:
        ev = sim.system.instances[x.inst].type.events[x.event]
        out.append(f"[{x.inst} -> {ev.name}, {om.render(x.slot)}]")
    return out


def _source_changes(sim: Simulator, before: Optional[SimState], after: SimState) -> List[str]:
    prev = dict(before.overlay) if before else {}
    out = []
    for k, v in after.overlay:
        if k in sim.net.sources and (prev.get(k) != v if before else v.is_finite):
            out.append(f"{k} = {om.render(v)}")
        elif k in sim.net.edges and before is not None and prev.get(k) != v:
            out.append(f"R({k}) = {om.render(v)}")
    return out


def trace_paths(sim: Simulator, tree: BehaviorTree) -> List[dict]:
    """One entry per leaf: the rows from a root down to that leaf."""
    paths = []
    for leaf in tree.leaves():
        rows = []
        prev = None
        for node in tree.path(leaf.id):
            rows.append({
                "node": node.id,
                "time": om.render(node.state.time),
                "branch": node.branch,
                "fired": list(node.fired),
                "states": _state_row(node.state),
                "changes": _source_changes(sim, prev, node.state),
                "queued": _queued_text(sim, node.state),
                "removed": list(node.removed),
                "reports": list(node.reports),
            })
            prev = node.state
        entry = {"leaf": leaf.leaf, "node": leaf.id, "rows": rows}
        if leaf.leaf == AMBIGUOUS:
            entry["stop"] = [l for l in leaf.log if l.startswith(("indeterminate", "ambiguous"))]
        paths.append(entry)
    return paths


def trace_json(sim: Simulator, results: Sequence[StepResult]) -> str:
    doc = {
        "system": sim.system.name,
        "faults": list(sim.faults),
        "steps": [
            {"label": r.label, "incomplete": r.tree.incomplete, "paths": trace_paths(sim, r.tree)}
            for r in results
        ],
    }
    return json.dumps(doc, indent=2, ensure_ascii=False)


def trace_text(sim: Simulator, results: Sequence[StepResult]) -> str:
    lines = [f"system {sim.system.name}" + (f" with faults {', '.join(sim.faults)}" if sim.faults else "")]
    for r in results:
        lines.append(f"step {r.label}" + (" (incomplete)" if r.tree.incomplete else ""))
        for i, path in enumerate(trace_paths(sim, r.tree), 1):
            lines.append(f"  path {i}: {path['leaf']}")
            for row in path["rows"]:
                head = f"    [{row['time']}]"
                if row["branch"]:
                    head += f" {row['branch']}"
                what = ", ".join(row["fired"]) if row["fired"] else ("start" if row["node"] in r.tree.roots else "-")
                lines.append(f"{head} {what}")
                for key in ("changes", "queued", "removed", "reports"):
                    if row[key]:
                        lines.append(f"        {key}: {'; '.join(row[key])}")
                lines.append("        states: " + " ".join(f"{k}={v}" for k, v in row["states"].items()))
            if path.get("stop"):
                lines.append(f"    stopped: {'; '.join(path['stop'])}")
    return "\n".join(lines) + "\n"
