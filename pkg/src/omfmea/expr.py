"""Condition and delay expressions used by component events.

Conditions evaluate to ``True``, ``False`` or :data:`INDETERMINATE`.  Any
comparison touching an ambiguous quantity is indeterminate, and the boolean
connectives follow three-valued (Kleene) logic.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple, Union

from . import om
from .om import QualValue


class ExprError(ValueError):
    def __init__(self, msg: str, pos: Optional[int] = None):
        super().__init__(msg if pos is None else f"{msg} (at column {pos + 1})")
        self.pos = pos


class _Indeterminate:
    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self) -> str:
        return "INDETERMINATE"

    def __bool__(self) -> bool:
        raise TypeError("INDETERMINATE has no truth value")


INDETERMINATE = _Indeterminate()


# --- AST ---------------------------------------------------------------------

@dataclass(frozen=True)
class Const:
    value: Union[QualValue, str, bool]


@dataclass(frozen=True)
class Sym:
    name: str


@dataclass(frozen=True)
class Call:
    fn: str  # F E P S
    args: Tuple[str, ...]


@dataclass(frozen=True)
class Cmp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Not:
    arg: object


@dataclass(frozen=True)
class BoolOp:
    op: str  # and | or
    args: Tuple[object, ...]


@dataclass(frozen=True)
class Div:
    left: object
    right: object


TRUE = Const(True)

# --- tokens ------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<str>"[^"]*")
  | (?P<om>-?[rufptd](?:[<>◁▷]\d+)?(?![\w.])|-?[rufptd][<>◁▷]\d+)
  | (?P<num>0(?![\w.]))
  | (?P<op>==|!=|<=|>=|≤|≥|<|>|∧|∨|¬|\(|\)|,|/|\[|\]|;|=)
  | (?P<name>[A-Za-z_∞?⊔∅~@][\w.]*|\?)
    """,
    re.VERBOSE,
)

_CANON = {"≤": "<=", "≥": ">=", "∧": "and", "∨": "or", "¬": "not"}
KEYWORDS = {"and", "or", "not", "has", "true", "false", "if", "during", "after"}
FUNCTIONS = {"F", "E", "P", "S"}


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    pos: int


def tokenize(text: str) -> List[Token]:
    out: List[Token] = []
    i = 0
    while i < len(text):
        m = _TOKEN_RE.match(text, i)
        if not m:
            raise ExprError(f"unexpected character {text[i]!r}", i)
        kind = m.lastgroup
        tok = m.group()
        if kind != "ws":
            if kind == "op":
                tok = _CANON.get(tok, tok)
                if tok in ("and", "or", "not"):
                    kind = "name"
            out.append(Token(kind, tok, i))
        i = m.end()
    return out


class Parser:
    """Recursive-descent parser over a token list; exposes a cursor so the
    event-clause parser can stop where an expression ends."""

    def __init__(self, text: str):
        self.text = text
        self.toks = tokenize(text)
        self.i = 0

    # cursor helpers
    def peek(self, k: int = 0) -> Optional[Token]:
        j = self.i + k
        return self.toks[j] if j < len(self.toks) else None

    def at(self, *texts: str) -> bool:
        t = self.peek()
        return t is not None and t.text in texts

    def take(self) -> Token:
        t = self.peek()
        if t is None:
            raise ExprError("unexpected end of expression", len(self.text))
        self.i += 1
        return t

    def expect(self, text: str) -> Token:
        t = self.peek()
        if t is None or t.text != text:
            where = t.pos if t else len(self.text)
            got = t.text if t else "end"
            raise ExprError(f"expected {text!r}, got {got!r}", where)
        self.i += 1
        return t

    def done(self) -> bool:
        return self.i >= len(self.toks)

    def rest_pos(self) -> int:
        t = self.peek()
        return t.pos if t else len(self.text)

    # grammar
    def expr(self):
        return self._or()

    def _or(self):
        args = [self._and()]
        while self.at("or"):
            self.take()
            args.append(self._and())
        return args[0] if len(args) == 1 else BoolOp("or", tuple(args))

    def _and(self):
        args = [self._not()]
        while self.at("and"):
            self.take()
            args.append(self._not())
        return args[0] if len(args) == 1 else BoolOp("and", tuple(args))

    def _not(self):
        if self.at("not"):
            self.take()
            return Not(self._not())
        return self._cmp()

    def _cmp(self):
        left = self.term()
        if self.at("==", "!=", "<", ">", "<=", ">=", "has"):
            op = self.take().text
            right = self.term()
            return Cmp(op, left, right)
        return left

    def term(self):
        left = self.atom()
        if self.at("/") and self._division_follows():
            self.take()
            left = Div(left, self.atom())
        return left

    def _division_follows(self) -> bool:
        nxt = self.peek(1)
        return nxt is not None and nxt.text in FUNCTIONS and self.peek(2) is not None and self.peek(2).text == "("

    def atom(self):
        t = self.peek()
        if t is None:
            raise ExprError("expected a value", len(self.text))
        if t.text == "(":
            self.take()
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "str":
            self.take()
            return Const(t.text[1:-1])
        if t.kind in ("om", "num"):
            self.take()
            return Const(om.parse_value(t.text.replace("▷", ">").replace("◁", "<")))
        if t.kind == "name":
            if t.text in ("and", "or", "not", "has"):
                raise ExprError(f"unexpected {t.text!r}", t.pos)
            self.take()
            if t.text in ("true", "false"):
                return Const(t.text == "true")
            if t.text in ("inf", "∞", "?"):
                return Const(om.parse_value(t.text))
            if t.text in FUNCTIONS and self.at("("):
                self.take()
                args = [self._ident()]
                while self.at(","):
                    self.take()
                    args.append(self._ident())
                self.expect(")")
                if t.text != "E" and len(args) != 1:
                    raise ExprError(f"{t.text}() takes one argument", t.pos)
                if len(args) > 2:
                    raise ExprError("E() takes one or two arguments", t.pos)
                return Call(t.text, tuple(args))
            return Sym(t.text)
        raise ExprError(f"unexpected {t.text!r}", t.pos)

    def _ident(self) -> str:
        t = self.take()
        # a bare quantity letter such as "p" is a valid element name here
        if t.kind != "name" and not (t.kind == "om" and t.text.isalpha()):
            raise ExprError(f"expected a name, got {t.text!r}", t.pos)
        return t.text


def parse_expr(text: str):
    p = Parser(text)
    e = p.expr()
    if not p.done():
        raise ExprError(f"unexpected {p.peek().text!r}", p.rest_pos())
    return e


# --- rendering -----------------------------------------------------------------

def render_expr(node, top: bool = True) -> str:
    if isinstance(node, Const):
        v = node.value
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, str):
            return f'"{v}"'
        return om.render(v)
    if isinstance(node, Sym):
        return node.name
    if isinstance(node, Call):
        return f"{node.fn}({', '.join(node.args)})"
    if isinstance(node, Cmp):
        return f"{render_expr(node.left, False)} {node.op} {render_expr(node.right, False)}"
    if isinstance(node, Div):
        return f"{render_expr(node.left, False)} / {render_expr(node.right, False)}"
    if isinstance(node, Not):
        inner = render_expr(node.arg, False)
        if isinstance(node.arg, (Cmp, BoolOp)):
            inner = f"({render_expr(node.arg)})"
        return f"not {inner}"
    if isinstance(node, BoolOp):
        parts = []
        for a in node.args:
            s = render_expr(a, False)
            if isinstance(a, BoolOp):
                s = f"({render_expr(a)})"
            parts.append(s)
        return f" {node.op} ".join(parts)
    raise TypeError(node)


def walk(node) -> Iterator[object]:
    yield node
    if isinstance(node, (Cmp, Div)):
        yield from walk(node.left)
        yield from walk(node.right)
    elif isinstance(node, Not):
        yield from walk(node.arg)
    elif isinstance(node, BoolOp):
        for a in node.args:
            yield from walk(a)


def calls(node) -> List[Call]:
    return [n for n in walk(node) if isinstance(n, Call)]


def symbols(node) -> List[str]:
    return [n.name for n in walk(node) if isinstance(n, Sym)]


# --- evaluation ---------------------------------------------------------------

class Env:
    """Lookup protocol used by :func:`evaluate`.  Subclasses bind names to a
    network solution and component state."""

    def flow(self, name: str) -> QualValue:
        raise NotImplementedError

    def effort(self, args: Sequence[str]) -> QualValue:
        raise NotImplementedError

    def power(self, name: str) -> QualValue:
        raise NotImplementedError

    def substances(self, node: str) -> frozenset:
        raise NotImplementedError

    def lookup(self, name: str):
        """Value of a parameter, variable, label or state reference; None if unbound."""
        return None


def value_of(node, env: Env):
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Sym):
        v = env.lookup(node.name)
        return node.name if v is None else v
    if isinstance(node, Call):
        if node.fn == "F":
            return env.flow(node.args[0])
        if node.fn == "E":
            return env.effort(node.args)
        if node.fn == "P":
            return env.power(node.args[0])
        return env.substances(node.args[0])
    if isinstance(node, Div):
        num, den = value_of(node.left, env), value_of(node.right, env)
        if not isinstance(num, QualValue) or not isinstance(den, QualValue):
            raise ExprError("division needs two quantities")
        if den.is_amb:
            return om.amb("t")
        return om.duration_from(num, den)
    return evaluate(node, env)


def _compare(op: str, a, b):
    if isinstance(a, frozenset) or isinstance(b, frozenset):
        if isinstance(b, frozenset) and not isinstance(a, frozenset):
            a, b = b, a
        if op == "has":
            return b in a
        want = frozenset([b]) if isinstance(b, str) else b
        if op == "==":
            return a == want
        if op == "!=":
            return a != want
        raise ExprError(f"substance sets support ==, != and has, not {op}")
    if op == "has":
        raise ExprError("'has' needs a substance set on the left")
    if isinstance(a, QualValue) and isinstance(b, QualValue):
        if a.is_amb or b.is_amb:
            return INDETERMINATE
        if a.is_structural or b.is_structural:
            if op == "==":
                return a.variant == b.variant and a.is_structural
            if op == "!=":
                return not (a.variant == b.variant and a.is_structural)
            return INDETERMINATE
        ka, kb = om.signed_key(a), om.signed_key(b)
        return {"==": ka == kb, "!=": ka != kb, "<": ka < kb, ">": ka > kb,
                "<=": ka <= kb, ">=": ka >= kb}[op]
    if isinstance(a, QualValue) or isinstance(b, QualValue):
        raise ExprError(f"cannot compare {a!r} with {b!r}")
    if op == "==":
        return a == b
    if op == "!=":
        return a != b
    raise ExprError(f"ordering needs quantities, got {a!r} and {b!r}")


def evaluate(node, env: Env):
    """Evaluate a condition to True, False or INDETERMINATE."""
    if node is None:
        return True
    if isinstance(node, Cmp):
        return _compare(node.op, value_of(node.left, env), value_of(node.right, env))
    if isinstance(node, Not):
        v = evaluate(node.arg, env)
        return v if v is INDETERMINATE else not v
    if isinstance(node, BoolOp):
        vals = [evaluate(a, env) for a in node.args]
        stop = node.op == "or"  # True short-circuits 'or', False short-circuits 'and'
        if any(v is stop for v in vals):
            return stop
        if any(v is INDETERMINATE for v in vals):
            return INDETERMINATE
        return not stop
    v = value_of(node, env)
    if isinstance(v, bool):
        return v
    if isinstance(v, QualValue):
        # a bare quantity means "non-zero"
        if v.is_amb:
            return INDETERMINATE
        return not v.is_zero
    raise ExprError(f"{render_expr(node)} is not a condition")
