"""Component types, events, system instances and scenarios.

A :class:`ComponentType` is a statechart plus a structural template of edges
and sources.  :func:`instantiate` materialises a :class:`System`: every
instance's template elements are renamed ``Instance.element`` and wired into
one global network.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from . import om
from .constraints import ConstraintSet
from .expr import Call, Const, Sym, calls, render_expr, symbols
from .network import Network
from .om import QualValue, QuantitySpace


class ModelError(ValueError):
    def __init__(self, msg: str, line: Optional[int] = None, col: Optional[int] = None):
        loc = ""
        if line is not None:
            loc = f"line {line}" + (f", column {col}" if col is not None else "") + ": "
        super().__init__(loc + msg)
        self.msg = msg
        self.line = line
        self.col = col

    def shifted(self, cols: int) -> "ModelError":
        """The same error with its column moved right by ``cols``."""
        return ModelError(self.msg, self.line, None if self.col is None else self.col + cols)


ZERO_NODE = "@"


@dataclass(frozen=True)
class Action:
    kind: str  # R | src | var | report
    target: str
    value: object = None  # expression (Const/Sym) or report text

    def render(self) -> str:
        if self.kind == "report":
            return f'report "{self.value}"'
        if self.kind == "R":
            return f"R({self.target}) = {render_expr(self.value)}"
        if self.kind == "var":
            return f"set {self.target} = {render_expr(self.value)}"
        return f"{self.target} = {render_expr(self.value)}"


@dataclass(frozen=True)
class EventSpec:
    name: str
    source: str
    target: str
    tc: object = None
    dc: object = None
    fc: object = None
    delay: object = None  # None means t = 0
    actions: Tuple[Action, ...] = ()
    during: bool = False
    external: bool = False

    def clause(self) -> str:
        """Render in the ``[if Tc [during]] name [after t [Fc]] / [A]`` form."""
        if self.external:
            parts = [f"external {self.name}"]
        else:
            parts = []
            if self.tc is not None:
                parts.append(f"if {render_expr(self.tc)}")
                if self.during:
                    parts.append("during")
            parts.append(self.name)
            if self.delay is not None:
                parts.append(f"after {render_expr(self.delay)}")
                if self.fc is not None and not (self.during and self.fc == self.tc):
                    parts.append(f"[{render_expr(self.fc)}]")
        if self.actions:
            parts.append("/ " + "; ".join(a.render() for a in self.actions))
        return " ".join(parts)


@dataclass
class StateSpec:
    name: str
    entry: Tuple[Action, ...] = ()
    # (edge, node) -> substances delivered into node; node "*" means both ends
    outputs: Dict[Tuple[str, str], frozenset] = field(default_factory=dict)
    seeds: Dict[str, frozenset] = field(default_factory=dict)


@dataclass(frozen=True)
class EdgeSpec:
    name: str
    a: str
    b: str
    r: object  # Const / Sym expression


@dataclass(frozen=True)
class SourceSpec:
    name: str
    neg: str
    pos: str
    value: object
    kind: str = "effort"


@dataclass(frozen=True)
class FaultOp:
    kind: str  # R | src | leak | stuck | suppress
    target: str
    value: object = None


@dataclass
class FaultSpec:
    name: str
    ops: List[FaultOp] = field(default_factory=list)


@dataclass
class ComponentType:
    name: str
    params: Dict[str, Optional[QualValue]] = field(default_factory=dict)
    ports: List[str] = field(default_factory=list)
    nodes: List[str] = field(default_factory=list)
    edges: List[EdgeSpec] = field(default_factory=list)
    sources: List[SourceSpec] = field(default_factory=list)
    variables: Dict[str, object] = field(default_factory=dict)
    states: Dict[str, StateSpec] = field(default_factory=dict)
    initial: Optional[str] = None
    events: List[EventSpec] = field(default_factory=list)
    faults: Dict[str, FaultSpec] = field(default_factory=dict)
    line: Optional[int] = None

    def edge_names(self):
        return [e.name for e in self.edges]

    def source_names(self):
        return [s.name for s in self.sources]

    def local_nodes(self):
        return list(self.ports) + list(self.nodes) + [ZERO_NODE]

    def check(self) -> None:
        """Structural invariants of the type on its own."""
        def err(msg):
            raise ModelError(f"component {self.name}: {msg}", self.line)

        if not self.states:
            err("no states")
        if self.initial not in self.states:
            err(f"initial state {self.initial!r} is not declared")
        names = self.ports + self.nodes + self.edge_names() + self.source_names()
        dup = {n for n in names if names.count(n) > 1}
        if dup:
            err(f"duplicate identifiers {sorted(dup)}")
        nodes = set(self.local_nodes())
        for e in self.edges:
            for n in (e.a, e.b):
                if n not in nodes:
                    err(f"edge {e.name} references undeclared node {n!r}")
        for s in self.sources:
            for n in (s.neg, s.pos):
                if n not in nodes:
                    err(f"source {s.name} references undeclared node {n!r}")
        elements = set(self.edge_names()) | set(self.source_names())
        for ev in self.events:
            for st in (ev.source, ev.target):
                if st not in self.states:
                    err(f"event {ev.name} references unknown state {st!r}")
            self._check_actions(ev.actions, err)
        for st in self.states.values():
            self._check_actions(st.entry, err)
            for (edge, node) in st.outputs:
                if edge not in elements:
                    err(f"state {st.name} outputs through unknown element {edge!r}")
                if node != "*" and node not in nodes:
                    err(f"state {st.name} outputs into unknown node {node!r}")
            for node in st.seeds:
                if node not in nodes:
                    err(f"state {st.name} seeds unknown node {node!r}")
        for f in self.faults.values():
            for op in f.ops:
                if op.kind == "R" and op.target not in self.edge_names():
                    err(f"fault {f.name} pins unknown edge {op.target!r}")
                if op.kind == "src" and op.target not in self.source_names():
                    err(f"fault {f.name} pins unknown source {op.target!r}")
                if op.kind == "leak" and op.target not in nodes:
                    err(f"fault {f.name} leaks from unknown node {op.target!r}")
                if op.kind == "stuck" and op.target not in self.states:
                    err(f"fault {f.name} sticks in unknown state {op.target!r}")
                if op.kind == "suppress" and op.target not in {e.name for e in self.events}:
                    err(f"fault {f.name} suppresses unknown event {op.target!r}")

    def _check_actions(self, actions, err):
        for a in actions:
            if a.kind == "R" and a.target not in self.edge_names():
                err(f"action sets R of unknown edge {a.target!r}")
            if a.kind == "src" and a.target not in self.source_names():
                err(f"action sets unknown source {a.target!r}")
            if a.kind == "var" and a.target not in self.variables:
                err(f"action sets unknown variable {a.target!r}")


@dataclass
class InstanceDecl:
    name: str
    type: str
    wiring: Dict[str, str] = field(default_factory=dict)
    params: Dict[str, object] = field(default_factory=dict)
    state: Optional[str] = None
    line: Optional[int] = None


@dataclass
class FunctionSpec:
    name: str
    trigger: object
    effect: object
    texts: Dict[str, str] = field(default_factory=dict)
    severity: Optional[int] = None
    detection: Optional[int] = None
    occurrence: Optional[int] = None


@dataclass
class Observable:
    name: str
    terms: Tuple[Tuple[int, object], ...]  # (sign, expression)
    balance: bool = False

    def render(self) -> str:
        if self.balance:
            body = " ".join(("+ " if s > 0 else "- ") + render_expr(e) for s, e in self.terms)
            return f"observe {self.name} = balance {body}"
        return f"observe {self.name} = {render_expr(self.terms[0][1])}"


@dataclass
class SystemDecl:
    name: str
    zero: str = "Z"
    instances: List[InstanceDecl] = field(default_factory=list)
    constraints: List[str] = field(default_factory=list)
    seeds: Dict[str, frozenset] = field(default_factory=dict)
    functions: List[FunctionSpec] = field(default_factory=list)
    observables: List[Observable] = field(default_factory=list)
    fault_pairs: List[Tuple[str, ...]] = field(default_factory=list)
    line: Optional[int] = None


@dataclass
class ModelDocument:
    quantities: Dict[str, QuantitySpace] = field(default_factory=dict)
    components: Dict[str, ComponentType] = field(default_factory=dict)
    systems: Dict[str, SystemDecl] = field(default_factory=dict)

    def merge(self, other: "ModelDocument") -> "ModelDocument":
        out = ModelDocument(dict(self.quantities), dict(self.components), dict(self.systems))
        for attr in ("quantities", "components", "systems"):
            mine, theirs = getattr(out, attr), getattr(other, attr)
            for k, v in theirs.items():
                if k in mine and mine[k] is not v:
                    raise ModelError(f"duplicate definition of {k!r}")
                mine[k] = v
        return out


@dataclass
class ScenarioStep:
    label: str
    events: List[str] = field(default_factory=list)        # "Inst.event"
    assignments: List[Tuple[str, str, str]] = field(default_factory=list)  # inst, var, value text
    expect: Optional[str] = None


@dataclass
class ScenarioDocument:
    name: str
    system: Optional[str] = None
    initial: Dict[str, str] = field(default_factory=dict)   # instance -> state
    constraints: List[str] = field(default_factory=list)
    steps: List[ScenarioStep] = field(default_factory=list)


# ---------------------------------------------------------------------------
# instantiation

@dataclass
class Instance:
    name: str
    type: ComponentType
    wiring: Dict[str, str]
    params: Dict[str, QualValue]
    initial: str

    def node(self, local: str, zero: str) -> str:
        if local == ZERO_NODE:
            return zero
        if local in self.wiring:
            return self.wiring[local]
        return f"{self.name}.{local}"

    def element(self, local: str) -> str:
        return f"{self.name}.{local}"


@dataclass
class System:
    name: str
    zero: str
    instances: Dict[str, Instance]
    network: Network
    quantities: Dict[str, QuantitySpace]
    constraints: List[str] = field(default_factory=list)
    seeds: Dict[str, frozenset] = field(default_factory=dict)
    functions: List[FunctionSpec] = field(default_factory=list)
    observables: List[Observable] = field(default_factory=list)
    fault_pairs: List[Tuple[str, ...]] = field(default_factory=list)

    def label_value(self, name: str) -> Optional[QualValue]:
        for qs in self.quantities.values():
            if name in qs.labels:
                return qs.value(name)
        return None

    def label_for(self, v: QualValue) -> Optional[str]:
        for qs in self.quantities.values():
            lab = qs.label(v)
            if lab is not None:
                return lab
        return None

    def constraint_set(self, extra: Sequence[str] = ()) -> ConstraintSet:
        cs = ConstraintSet.parse(list(self.constraints) + list(extra))
        cs.bind({s.id: s.owner for s in self.network.sources.values()})
        return cs

    def fault_names(self) -> List[str]:
        return [f"{i.name}.{f}" for i in self.instances.values() for f in i.type.faults]


def resolve_value(node, params: Dict[str, QualValue], system_labels, kind: str) -> QualValue:
    """Turn a Const/Sym expression into a QualValue of ``kind``."""
    if isinstance(node, Const) and isinstance(node.value, QualValue):
        v = node.value
    elif isinstance(node, Sym):
        if node.name in params:
            v = params[node.name]
        else:
            v = system_labels(node.name)
            if v is None:
                raise ModelError(f"unknown value {node.name!r}")
    else:
        raise ModelError(f"not a quantity: {render_expr(node)}")
    if v.is_zero:
        return om.zero(kind)
    if v.is_inf:
        return om.inf(kind)
    if v.is_amb:
        return om.amb(kind)
    if v.is_finite and v.q != kind:
        raise ModelError(f"expected a {kind!r} quantity, got {om.render(v)}")
    return v


def instantiate(doc: ModelDocument, system: Optional[str] = None) -> System:
    if system is None:
        if len(doc.systems) != 1:
            raise ModelError(f"choose a system among {sorted(doc.systems)}")
        system = next(iter(doc.systems))
    if system not in doc.systems:
        raise ModelError(f"unknown system {system!r}")
    decl = doc.systems[system]

    def labels(name):
        for qs in doc.quantities.values():
            if name in qs.labels:
                return qs.value(name)
        return None

    net = Network(decl.zero)
    instances: Dict[str, Instance] = {}
    for d in decl.instances:
        if d.name in instances:
            raise ModelError(f"duplicate instance {d.name!r}", d.line)
        ctype = doc.components.get(d.type)
        if ctype is None:
            raise ModelError(f"unknown component type {d.type!r}", d.line)
        given = dict(d.params)
        ports_given = {}
        for k, v in d.wiring.items():
            if k in ctype.params:
                given[k] = v
            elif k in ctype.ports:
                ports_given[k] = v
            else:
                raise ModelError(f"instance {d.name}: {ctype.name} has no port or parameter {k!r}", d.line)
        params: Dict[str, QualValue] = {}
        for p, default in ctype.params.items():
            if p in given:
                raw = given[p]
                try:
                    params[p] = raw if isinstance(raw, QualValue) else om.parse_value(str(raw))
                except om.OMError as exc:
                    raise ModelError(f"instance {d.name}: {exc}", d.line) from None
            elif default is not None:
                params[p] = default
            else:
                raise ModelError(f"instance {d.name}: parameter {p!r} has no value", d.line)
        wiring = {}
        for port in ctype.ports:
            if port not in ports_given:
                raise ModelError(f"instance {d.name}: port {port!r} is not wired", d.line)
            target = ports_given[port]
            wiring[port] = f"{d.name}.{port}" if target == "open" else (decl.zero if target == ZERO_NODE else target)
        initial = d.state or ctype.initial
        if initial not in ctype.states:
            raise ModelError(f"instance {d.name}: unknown state {initial!r}", d.line)
        inst = Instance(d.name, ctype, wiring, params, initial)
        instances[d.name] = inst
        for e in ctype.edges:
            r = resolve_value(e.r, params, labels, "r")
            net.add_edge(inst.element(e.name), inst.node(e.a, decl.zero), inst.node(e.b, decl.zero), r, owner=d.name)
        for s in ctype.sources:
            v = resolve_value(s.value, params, labels, "u" if s.kind == "effort" else "f")
            net.add_source(inst.element(s.name), inst.node(s.neg, decl.zero), inst.node(s.pos, decl.zero), v,
                           kind=s.kind, owner=d.name)
        for n in ctype.nodes:
            net.add_node(inst.node(n, decl.zero))
    for node, subs in decl.seeds.items():
        net.seeds[node] = set(subs)
    return System(decl.name, decl.zero, instances, net, dict(doc.quantities), list(decl.constraints),
                  dict(decl.seeds), list(decl.functions), list(decl.observables), list(decl.fault_pairs))


# ---------------------------------------------------------------------------
# validation

@dataclass(frozen=True)
class Diagnostic:
    level: str  # error | warning
    message: str

    def __str__(self) -> str:
        return f"{self.level}: {self.message}"


def _reachable_states(ctype: ComponentType) -> set:
    seen = {ctype.initial}
    todo = [ctype.initial]
    while todo:
        s = todo.pop()
        for ev in ctype.events:
            if ev.source == s and ev.target not in seen:
                seen.add(ev.target)
                todo.append(ev.target)
    return seen


def validate(system: System) -> List[Diagnostic]:
    """Connectivity, zero-node partition pre-check, reachability and references."""
    from .network import zero_node_bridged

    out: List[Diagnostic] = []
    net = system.network
    # connectivity over all elements
    parent = {n: n for n in net.nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for e in net.edges.values():
        parent[find(e.t1)] = find(e.t2)
    for s in net.sources.values():
        parent[find(s.neg)] = find(s.pos)
    groups = {find(n) for n in net.nodes}
    if len(groups) > 1:
        out.append(Diagnostic("warning", f"network has {len(groups)} disconnected parts"))
    if net.sources and zero_node_bridged(net, list(net.sources.values())):
        out.append(Diagnostic("warning", f"zero node {system.zero} bridges sources; node efforts may be withheld"))
    for inst in system.instances.values():
        ctype = inst.type
        unreachable = [s for s in ctype.states if s not in _reachable_states(ctype)]
        if unreachable:
            out.append(Diagnostic("warning", f"{inst.name}: states {unreachable} unreachable from {ctype.initial}"))
        for ev in ctype.events:
            for cond in (ev.tc, ev.dc, ev.fc, ev.delay):
                if cond is None:
                    continue
                for msg in check_references(cond, inst, system):
                    out.append(Diagnostic("error", f"{inst.name}.{ev.name}: {msg}"))
    for fn in system.functions:
        for cond in (fn.trigger, fn.effect):
            for msg in check_references(cond, None, system):
                out.append(Diagnostic("error", f"function {fn.name}: {msg}"))
    for ob in system.observables:
        for _, e in ob.terms:
            for msg in check_references(e, None, system):
                out.append(Diagnostic("error", f"observable {ob.name}: {msg}"))
    return out


def check_references(cond, inst: Optional[Instance], system: System) -> List[str]:
    msgs = []
    net = system.network
    for c in calls(cond):
        for arg in c.args:
            if c.fn in ("F", "P") or (c.fn == "E" and len(c.args) == 1 and _is_element(arg, inst, net)):
                if not _is_element(arg, inst, net):
                    msgs.append(f"unknown edge {arg!r} in {c.fn}()")
            elif resolve_node(arg, inst, system) is None:
                msgs.append(f"unknown node {arg!r} in {c.fn}()")
    for name in symbols(cond):
        if "." in name:
            head, tail = name.split(".", 1)
            target = system.instances.get(head)
            if target is None:
                msgs.append(f"unknown instance {head!r}")
            elif tail != "state" and tail not in target.type.variables and tail not in target.type.params:
                msgs.append(f"unknown reference {name!r}")
    return msgs


def _is_element(name: str, inst: Optional[Instance], net: Network) -> bool:
    return resolve_element(name, inst, net) is not None


def resolve_element(name: str, inst: Optional[Instance], net: Network) -> Optional[str]:
    if inst is not None:
        local = inst.element(name)
        if local in net.edges or local in net.sources:
            return local
    if name in net.edges or name in net.sources:
        return name
    return None


def resolve_node(name: str, inst: Optional[Instance], system: System) -> Optional[str]:
    net = system.network
    if name == ZERO_NODE:
        return system.zero
    if inst is not None:
        if name in inst.wiring:
            return inst.wiring[name]
        if name in inst.type.nodes:
            return inst.node(name, system.zero)
    if name in net._node_set:
        return name
    if "." in name:
        head, tail = name.split(".", 1)
        other = system.instances.get(head)
        if other is not None and (tail in other.wiring or tail in other.type.nodes):
            return other.node(tail, system.zero)
    return None
