"""Line-oriented model and scenario language.

Model files (``.omdl``)::

    quantity time t: mS Sec hour day @ Sec

    component tank
      param volume = d<1
      port inlet
      edge tk inlet @ R=0
      state empty initial
        out tk inlet air
      state full
        seed inlet fluid
      trans empty -> full : if F(tk) > 0 during filling after volume / F(tk)
      fault leak
        leak inlet R=r>1
    end

    system demo
      zero A
      instance T1 tank inlet=n1 volume=d
      constraint PipeA>PipeB
    end

Scenario files (``.omsc``) list ``step`` blocks of external events
(``Pump.activate``) and variable assignments (``Valve.position = open``).
``#`` starts a comment.
"""
from __future__ import annotations

import re
import shlex
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from . import om
from .constraints import ConstraintError, parse_constraint
from .expr import Const, ExprError, Parser, Sym, parse_expr, render_expr
from .model import (
    Action, ComponentType, EdgeSpec, EventSpec, FaultOp, FaultSpec, FunctionSpec, InstanceDecl,
    ModelDocument, ModelError, Observable, ScenarioDocument, ScenarioStep, SourceSpec, StateSpec,
    SystemDecl,
)
from .om import QuantitySpace

MODELS_DIR = Path(__file__).parent / "models"
_IDENT = re.compile(r"^[A-Za-z_][\w]*$")


def _strip_comment(line: str) -> str:
    out, quoted = [], False
    for ch in line:
        if ch == '"':
            quoted = not quoted
        if ch == "#" and not quoted:
            break
        out.append(ch)
    return "".join(out).rstrip()


def _split_top(text: str, sep: str) -> List[str]:
    """Split on ``sep`` outside double quotes."""
    parts, cur, quoted = [], [], False
    for ch in text:
        if ch == '"':
            quoted = not quoted
        if ch == sep and not quoted:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return [p.strip() for p in parts if p.strip()]


def _value(text: str, line: int):
    """A literal OM value or a symbolic name (parameter or label)."""
    t = text.strip()
    try:
        return Const(om.parse_value(t))
    except om.OMError:
        pass
    if _IDENT.match(t):
        return Sym(t)
    raise ModelError(f"bad value {text!r}", line)


def _quote(v) -> str:
    return f'"{v}"' if isinstance(v, str) else str(v)


def _ident(text: str, line: int, what: str = "identifier") -> str:
    if not _IDENT.match(text):
        raise ModelError(f"bad {what} {text!r}", line)
    return text


def _subs(text: str) -> frozenset:
    return frozenset(s.strip() for s in text.split(",") if s.strip())


# ---------------------------------------------------------------------------
# event clauses and actions

def parse_actions(text: str, line: Optional[int] = None) -> Tuple[Action, ...]:
    out = []
    for part in _split_top(text, ";"):
        m = re.match(r'^report\s+"([^"]*)"$', part)
        if m:
            out.append(Action("report", "", m.group(1)))
            continue
        m = re.match(r"^R\(\s*(\w+)\s*\)\s*=\s*(.+)$", part)
        if m:
            out.append(Action("R", m.group(1), _value(m.group(2), line)))
            continue
        m = re.match(r"^set\s+(\w+)\s*=\s*(.+)$", part)
        if m:
            out.append(Action("var", m.group(1), _value(m.group(2), line)))
            continue
        m = re.match(r"^(\w+)\s*=\s*(.+)$", part)
        if m:
            out.append(Action("src", m.group(1), _value(m.group(2), line)))
            continue
        raise ModelError(f"bad action {part!r}", line)
    return tuple(out)


def parse_event(text: str, source: str = "", target: str = "", line: Optional[int] = None) -> EventSpec:
    """Parse ``[if Tc [during]] name [after t [Fc]] [/ actions]`` or ``external name [/ actions]``."""
    try:
        p = Parser(text)
        if p.at("external"):
            p.take()
            name = p.take()
            if name.kind != "name":
                raise ExprError("expected an event name", name.pos)
            actions = ()
            if p.at("/"):
                actions = parse_actions(text[p.take().pos + 1:], line)
            elif not p.done():
                raise ExprError(f"unexpected {p.peek().text!r}", p.rest_pos())
            return EventSpec(name.text, source, target, actions=actions, external=True)
        tc = dc = fc = delay = None
        during = False
        if p.at("if"):
            p.take()
            tc = p.expr()
            if p.at("during"):
                p.take()
                during = True
        tok = p.take()
        if tok.kind != "name" or tok.text in ("after", "during", "if"):
            raise ExprError(f"expected an event name, got {tok.text!r}", tok.pos)
        name = tok.text
        if p.at("after"):
            p.take()
            if p.done() or p.at("/", "["):
                raise ExprError("'after' needs a delay", p.rest_pos())
            delay = p.term()
            if p.at("["):
                p.take()
                fc = p.expr()
                p.expect("]")
        actions: Tuple[Action, ...] = ()
        if p.at("/"):
            actions = parse_actions(text[p.take().pos + 1:], line)
        elif not p.done():
            raise ExprError(f"unexpected {p.peek().text!r}", p.rest_pos())
    except ExprError as exc:
        col = exc.pos + 1 if exc.pos is not None else None
        raise ModelError(f"event clause: {exc}", line, col) from None
    if during:
        dc = tc
        if fc is None:
            fc = tc
    return EventSpec(name, source, target, tc, dc, fc, delay, actions, during)


# ---------------------------------------------------------------------------
# model files

_COMPONENT_KEYS = {"param", "port", "node", "edge", "source", "var", "state", "trans", "fault", "end"}


def parse_model(text: str) -> ModelDocument:
    doc = ModelDocument()
    comp: Optional[ComponentType] = None
    system: Optional[SystemDecl] = None
    block = None  # current state / fault / function inside a component or system
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        word, _, rest = line.partition(" ")
        rest = rest.strip()
        try:
            if comp is None and system is None:
                if word == "quantity":
                    _quantity(doc, rest, lineno)
                elif word == "component":
                    name = _ident(rest, lineno, "component name")
                    if name in doc.components:
                        raise ModelError(f"duplicate component {name!r}", lineno)
                    comp = ComponentType(name, line=lineno)
                    block = None
                elif word == "system":
                    name = _ident(rest, lineno, "system name")
                    if name in doc.systems:
                        raise ModelError(f"duplicate system {name!r}", lineno)
                    system = SystemDecl(name, line=lineno)
                    block = None
                else:
                    raise ModelError(f"unexpected {word!r}", lineno, 1)
            elif comp is not None:
                if word == "end":
                    comp.check()
                    doc.components[comp.name] = comp
                    comp = None
                    continue
                if word in _COMPONENT_KEYS:
                    block = _component_line(comp, word, rest, lineno)
                else:
                    _block_line(comp, block, word, rest, line, lineno)
            else:
                if word == "end":
                    doc.systems[system.name] = system
                    system = None
                    continue
                block = _system_line(system, block, word, rest, line, lineno)
        except (om.OMError, ExprError, ConstraintError) as exc:
            raise ModelError(str(exc), lineno) from None
        except ModelError as exc:
            # columns are computed on the stripped line
            raise exc.shifted(len(raw) - len(raw.lstrip())) from None
    if comp is not None or system is not None:
        raise ModelError("missing 'end'", len(text.splitlines()))
    return doc


def _quantity(doc: ModelDocument, rest: str, lineno: int) -> None:
    m = re.match(r"^(\w+)\s+([rufptd])\s*:\s*(.+?)\s*@\s*(\w+)$", rest)
    if not m:
        raise ModelError("expected 'quantity NAME KIND: labels... @ ZERO_LABEL'", lineno)
    name, kind, labels, zero = m.groups()
    if name in doc.quantities:
        raise ModelError(f"duplicate quantity {name!r}", lineno)
    doc.quantities[name] = QuantitySpace(kind, tuple(labels.split()), zero)


def _kv(text: str, lineno: int) -> Tuple[str, str]:
    k, eq, v = text.partition("=")
    if not eq:
        raise ModelError(f"expected NAME=VALUE, got {text!r}", lineno)
    return k.strip(), v.strip()


def _component_line(comp: ComponentType, word: str, rest: str, lineno: int):
    if word == "param":
        name, eq, val = rest.partition("=")
        name = _ident(name.strip(), lineno, "parameter")
        comp.params[name] = om.parse_value(val.strip()) if eq else None
    elif word == "port":
        comp.ports += [_ident(p, lineno, "port") for p in rest.split()]
    elif word == "node":
        comp.nodes += [_ident(p, lineno, "node") for p in rest.split()]
    elif word == "var":
        name, val = _kv(rest, lineno)
        val = val.strip()
        if len(val) >= 2 and val[0] == val[-1] == '"':
            v = val[1:-1]
        else:
            v = _value(val, lineno)
            v = v.value if isinstance(v, Const) else v.name
        comp.variables[_ident(name, lineno, "variable")] = v
    elif word in ("edge", "source"):
        parts = rest.split()
        if len(parts) != 4:
            raise ModelError(f"expected '{word} NAME NODE NODE KEY=VALUE'", lineno)
        name, a, b, kv = parts
        key, val = _kv(kv, lineno)
        if word == "edge":
            if key != "R":
                raise ModelError("edge needs R=VALUE", lineno)
            comp.edges.append(EdgeSpec(_ident(name, lineno), a, b, _value(val, lineno)))
        else:
            if key not in ("u", "f"):
                raise ModelError("source needs u=VALUE or f=VALUE", lineno)
            comp.sources.append(SourceSpec(_ident(name, lineno), a, b, _value(val, lineno),
                                           "effort" if key == "u" else "flow"))
    elif word == "state":
        parts = rest.split()
        if not parts or len(parts) > 2 or (len(parts) == 2 and parts[1] != "initial"):
            raise ModelError("expected 'state NAME [initial]'", lineno)
        name = _ident(parts[0], lineno, "state")
        if name in comp.states:
            raise ModelError(f"duplicate state {name!r}", lineno)
        st = StateSpec(name)
        comp.states[name] = st
        if len(parts) == 2:
            if comp.initial is not None:
                raise ModelError("two initial states", lineno)
            comp.initial = name
        return st
    elif word == "trans":
        head, colon, clause = rest.partition(":")
        m = re.match(r"^(\w+)\s*->\s*(\w+)$", head.strip())
        if not colon or not m:
            raise ModelError("expected 'trans FROM -> TO : EVENT'", lineno)
        offset = len("trans ") + len(head) + 1 + (len(clause) - len(clause.lstrip()))
        try:
            ev = parse_event(clause.strip(), m.group(1), m.group(2), lineno)
        except ModelError as exc:
            col = exc.col + offset if exc.col is not None else None
            raise ModelError(exc.msg.split(" (at column")[0], lineno, col) from None
        if any(e.name == ev.name and e.source == ev.source for e in comp.events):
            raise ModelError(f"duplicate event {ev.name!r} from state {ev.source!r}", lineno)
        comp.events.append(ev)
    elif word == "fault":
        name = _ident(rest, lineno, "fault")
        if name in comp.faults:
            raise ModelError(f"duplicate fault {name!r}", lineno)
        f = FaultSpec(name)
        comp.faults[name] = f
        return f
    return None


def _block_line(comp, block, word, rest, line, lineno):
    if isinstance(block, StateSpec):
        if word == "entry":
            block.entry = block.entry + parse_actions(rest, lineno)
        elif word == "out":
            parts = rest.split(None, 2)
            if len(parts) != 3:
                raise ModelError("expected 'out ELEMENT NODE substances'", lineno)
            block.outputs[(parts[0], parts[1])] = _subs(parts[2])
        elif word == "seed":
            parts = rest.split(None, 1)
            if len(parts) != 2:
                raise ModelError("expected 'seed NODE substances'", lineno)
            block.seeds[parts[0]] = _subs(parts[1])
        else:
            raise ModelError(f"unexpected {word!r} in state {block.name}", lineno, 1)
        return
    if isinstance(block, FaultSpec):
        m = re.match(r"^R\(\s*(\w+)\s*\)\s*=\s*(.+)$", line)
        if m:
            block.ops.append(FaultOp("R", m.group(1), _value(m.group(2), lineno)))
        elif word == "pin":
            k, v = _kv(rest, lineno)
            block.ops.append(FaultOp("src", k, _value(v, lineno)))
        elif word == "leak":
            parts = rest.split()
            if len(parts) != 2:
                raise ModelError("expected 'leak NODE R=VALUE'", lineno)
            k, v = _kv(parts[1], lineno)
            if k != "R":
                raise ModelError("leak needs R=VALUE", lineno)
            block.ops.append(FaultOp("leak", parts[0], _value(v, lineno)))
        elif word in ("stuck", "suppress"):
            block.ops.append(FaultOp(word, _ident(rest, lineno)))
        else:
            raise ModelError(f"unexpected {word!r} in fault {block.name}", lineno, 1)
        return
    raise ModelError(f"unexpected {word!r} in component {comp.name}", lineno, 1)


def _int(text: str, lineno: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise ModelError(f"expected an integer, got {text!r}", lineno) from None


def _system_line(system: SystemDecl, block, word, rest, line, lineno):
    if word == "zero":
        system.zero = _ident(rest, lineno, "node")
    elif word == "seed":
        parts = rest.split(None, 1)
        if len(parts) != 2:
            raise ModelError("expected 'seed NODE substances'", lineno)
        system.seeds[parts[0]] = _subs(parts[1])
    elif word == "instance":
        parts = rest.split()
        if len(parts) < 2:
            raise ModelError("expected 'instance NAME TYPE key=value...'", lineno)
        decl = InstanceDecl(_ident(parts[0], lineno, "instance"), parts[1], line=lineno)
        for kv in parts[2:]:
            k, v = _kv(kv, lineno)
            if k == "state":
                decl.state = v
            else:
                decl.wiring[k] = v
        if any(i.name == decl.name for i in system.instances):
            raise ModelError(f"duplicate instance {decl.name!r}", lineno)
        system.instances.append(decl)
    elif word == "constraint":
        for piece in _split_top(rest, ";"):
            parse_constraint(piece)
            system.constraints.append(piece)
    elif word == "observe":
        system.observables.append(_observable(rest, lineno))
    elif word == "pair":
        system.fault_pairs.append(tuple(rest.split()))
    elif word == "function":
        fn = FunctionSpec(_ident(rest, lineno, "function"), None, None)
        system.functions.append(fn)
        return fn
    elif isinstance(block, FunctionSpec):
        if word == "trigger":
            block.trigger = parse_expr(rest)
        elif word == "effect":
            block.effect = parse_expr(rest)
        elif word == "text":
            state, _, txt = rest.partition(" ")
            m = re.match(r'^"([^"]*)"$', txt.strip())
            if state not in ("Achieved", "Failed", "UnexpectedBehaviour", "Inoperative") or not m:
                raise ModelError("expected 'text STATE \"description\"'", lineno)
            block.texts[state] = m.group(1)
        elif word in ("severity", "detection", "occurrence"):
            setattr(block, word, _int(rest, lineno))
        else:
            raise ModelError(f"unexpected {word!r} in function {block.name}", lineno, 1)
        return block
    else:
        raise ModelError(f"unexpected {word!r} in system {system.name}", lineno, 1)
    return None


def _observable(rest: str, lineno: int) -> Observable:
    name, val = _kv(rest, lineno)
    name = _ident(name, lineno, "observable")
    if val.startswith("balance "):
        body = val[len("balance "):].strip()
        terms = []
        for m in re.finditer(r"([+-])\s*([^+-]+)", body):
            terms.append((1 if m.group(1) == "+" else -1, parse_expr(m.group(2).strip())))
        if not terms or "".join(m.group(0) for m in re.finditer(r"([+-])\s*([^+-]+)", body)).replace(" ", "") \
                != body.replace(" ", ""):
            raise ModelError("expected 'balance + TERM - TERM ...'", lineno)
        return Observable(name, tuple(terms), balance=True)
    return Observable(name, ((1, parse_expr(val)),))


# ---------------------------------------------------------------------------
# rendering

def _render_value(v) -> str:
    return render_expr(v) if not isinstance(v, om.QualValue) else om.render(v)


def render_component(c: ComponentType) -> str:
    out = [f"component {c.name}"]
    for p, v in c.params.items():
        out.append(f"  param {p}" + (f" = {om.render(v)}" if v is not None else ""))
    if c.ports:
        out.append("  port " + " ".join(c.ports))
    if c.nodes:
        out.append("  node " + " ".join(c.nodes))
    for e in c.edges:
        out.append(f"  edge {e.name} {e.a} {e.b} R={render_expr(e.r)}")
    for s in c.sources:
        out.append(f"  source {s.name} {s.neg} {s.pos} {'u' if s.kind == 'effort' else 'f'}={render_expr(s.value)}")
    for k, v in c.variables.items():
        out.append(f"  var {k} = {om.render(v) if isinstance(v, om.QualValue) else _quote(v)}")
    for st in c.states.values():
        out.append(f"  state {st.name}" + (" initial" if st.name == c.initial else ""))
        if st.entry:
            out.append("    entry " + "; ".join(a.render() for a in st.entry))
        for (elem, node), subs in st.outputs.items():
            out.append(f"    out {elem} {node} {','.join(sorted(subs))}")
        for node, subs in st.seeds.items():
            out.append(f"    seed {node} {','.join(sorted(subs))}")
    for ev in c.events:
        out.append(f"  trans {ev.source} -> {ev.target} : {ev.clause()}")
    for f in c.faults.values():
        out.append(f"  fault {f.name}")
        for op in f.ops:
            if op.kind == "R":
                out.append(f"    R({op.target}) = {render_expr(op.value)}")
            elif op.kind == "src":
                out.append(f"    pin {op.target} = {render_expr(op.value)}")
            elif op.kind == "leak":
                out.append(f"    leak {op.target} R={render_expr(op.value)}")
            else:
                out.append(f"    {op.kind} {op.target}")
    out.append("end")
    return "\n".join(out)


def render_system(s: SystemDecl) -> str:
    out = [f"system {s.name}", f"  zero {s.zero}"]
    for node, subs in s.seeds.items():
        out.append(f"  seed {node} {','.join(sorted(subs))}")
    for i in s.instances:
        parts = [f"  instance {i.name} {i.type}"]
        parts += [f"{k}={v}" for k, v in i.wiring.items()]
        parts += [f"{k}={om.render(v)}" for k, v in i.params.items()]
        if i.state:
            parts.append(f"state={i.state}")
        out.append(" ".join(parts))
    for c in s.constraints:
        out.append(f"  constraint {c}")
    for ob in s.observables:
        out.append("  " + ob.render())
    for pair in s.fault_pairs:
        out.append("  pair " + " ".join(pair))
    for fn in s.functions:
        out.append(f"  function {fn.name}")
        out.append(f"    trigger {render_expr(fn.trigger)}")
        out.append(f"    effect {render_expr(fn.effect)}")
        for k, v in fn.texts.items():
            out.append(f'    text {k} "{v}"')
        for k in ("severity", "detection", "occurrence"):
            if getattr(fn, k) is not None:
                out.append(f"    {k} {getattr(fn, k)}")
    out.append("end")
    return "\n".join(out)


def render_model(doc: ModelDocument) -> str:
    parts = []
    for name, qs in doc.quantities.items():
        parts.append(f"quantity {name} {qs.q}: {' '.join(qs.labels)} @ {qs.zero_label}")
    parts += [render_component(c) for c in doc.components.values()]
    parts += [render_system(s) for s in doc.systems.values()]
    return "\n\n".join(parts) + "\n"


# ---------------------------------------------------------------------------
# scenarios

def parse_scenario(text: str) -> ScenarioDocument:
    doc: Optional[ScenarioDocument] = None
    step: Optional[ScenarioStep] = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        word, _, rest = line.partition(" ")
        rest = rest.strip()
        if word == "scenario":
            if doc is not None:
                raise ModelError("only one scenario per file", lineno)
            doc = ScenarioDocument(_ident(rest, lineno, "scenario name"))
            continue
        if doc is None:
            raise ModelError("expected 'scenario NAME' first", lineno, 1)
        if word == "system":
            doc.system = _ident(rest, lineno, "system name")
        elif word == "initial":
            for kv in rest.split():
                k, v = _kv(kv, lineno)
                doc.initial[k] = v
        elif word == "constraint":
            for piece in _split_top(rest, ";"):
                try:
                    parse_constraint(piece)
                except ConstraintError as exc:
                    raise ModelError(str(exc), lineno) from None
                doc.constraints.append(piece)
        elif word == "step":
            try:
                parts = shlex.split(rest)
            except ValueError as exc:
                raise ModelError(str(exc), lineno) from None
            if not parts:
                raise ModelError("step needs a label", lineno)
            step = ScenarioStep(parts[0])
            if len(parts) == 3 and parts[1] == "expect":
                step.expect = parts[2]
            elif len(parts) != 1:
                raise ModelError("expected 'step LABEL [expect \"text\"]'", lineno)
            doc.steps.append(step)
        elif word == "run":
            if step is None:
                raise ModelError("'run' outside a step", lineno)
        elif step is not None and "=" in line:
            lhs, v = _kv(line, lineno)
            inst, dot, var = lhs.partition(".")
            if not dot:
                raise ModelError("expected Instance.variable = value", lineno)
            step.assignments.append((inst, var, v))
        elif step is not None and re.match(r"^\w+\.\w+$", line):
            step.events.append(line)
        else:
            raise ModelError(f"unexpected {line!r}", lineno, 1)
    if doc is None:
        raise ModelError("empty scenario", 1)
    return doc


def render_scenario(doc: ScenarioDocument) -> str:
    out = [f"scenario {doc.name}"]
    if doc.system:
        out.append(f"system {doc.system}")
    if doc.initial:
        out.append("initial " + " ".join(f"{k}={v}" for k, v in doc.initial.items()))
    for c in doc.constraints:
        out.append(f"constraint {c}")
    for s in doc.steps:
        head = f"step {shlex.quote(s.label)}"
        if s.expect:
            head += f' expect "{s.expect}"'
        out.append(head)
        for inst, var, v in s.assignments:
            out.append(f"  {inst}.{var} = {v}")
        for e in s.events:
            out.append(f"  {e}")
        out.append("  run")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# files and the shipped library

def load_model(*paths: Union[str, Path], stdlib: bool = True) -> ModelDocument:
    doc = stdlib_document() if stdlib else ModelDocument()
    for p in paths:
        doc = doc.merge(parse_model(Path(p).read_text(encoding="utf-8")))
    return doc


def load_scenario(path: Union[str, Path]) -> ScenarioDocument:
    return parse_scenario(Path(path).read_text(encoding="utf-8"))


_STDLIB: Optional[ModelDocument] = None


def stdlib_document() -> ModelDocument:
    """Quantity spaces and component types from ``models/stdlib.omdl``."""
    global _STDLIB
    if _STDLIB is None:
        _STDLIB = parse_model((MODELS_DIR / "stdlib.omdl").read_text(encoding="utf-8"))
    return _STDLIB


def stdlib() -> Dict[str, ComponentType]:
    return dict(stdlib_document().components)


def shipped(name: str) -> Path:
    """Path of a model or scenario file shipped with the package."""
    p = MODELS_DIR / name
    if not p.exists():
        raise FileNotFoundError(name)
    return p
