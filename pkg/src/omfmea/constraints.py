"""Relations between source magnitudes used to settle equal-magnitude sums.

Constraints look like ``Pipe3=Pipe11``, ``Pipe3>Pipe1`` or
``Pipe1=Pipe0+Pipe13+Pipe12``.  Names refer to a source id or to the
component owning exactly one source.  Every named quantity is treated as an
unknown positive magnitude (at least 1) and a query ``sum(A) vs sum(B)`` is
settled only if the linear program proves the sign of the difference.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog

_REL_RE = re.compile(r"^(.+?)(<=|>=|=|<|>)(.+)$")
_NAME_RE = re.compile(r"^(?:E\()?\s*([A-Za-z_][\w.]*)\s*\)?$")
_EPS = 1e-9


class ConstraintError(ValueError):
    pass


@dataclass(frozen=True)
class Relation:
    lhs: Tuple[str, ...]
    op: str
    rhs: Tuple[str, ...]

    def __str__(self) -> str:
        return f"{'+'.join(self.lhs)}{self.op}{'+'.join(self.rhs)}"


@dataclass(frozen=True)
class Choice:
    """``Resolve> Name``: fire that component's event first."""

    first: str


def _names(side: str) -> Tuple[str, ...]:
    out = []
    for part in side.split("+"):
        m = _NAME_RE.match(part.strip())
        if not m:
            raise ConstraintError(f"bad constraint term {part.strip()!r}")
        out.append(m.group(1))
    return tuple(out)


def parse_constraint(text: str):
    t = text.strip()
    if t.startswith("Resolve>"):
        name = t[len("Resolve>"):].strip()
        if not name:
            raise ConstraintError("Resolve> needs a component name")
        return Choice(name)
    m = _REL_RE.match(t)
    if not m:
        raise ConstraintError(f"bad constraint {text!r}")
    return Relation(_names(m.group(1)), m.group(2), _names(m.group(3)))


@dataclass
class ConstraintSet:
    relations: List[Relation] = field(default_factory=list)
    choices: List[Choice] = field(default_factory=list)
    aliases: Dict[str, str] = field(default_factory=dict)
    _cache: Dict[tuple, Optional[str]] = field(default_factory=dict, repr=False)

    @classmethod
    def parse(cls, texts: Sequence[str]) -> "ConstraintSet":
        cs = cls()
        for text in texts:
            for piece in text.split(";"):
                if piece.strip():
                    cs.add(parse_constraint(piece))
        return cs

    def add(self, item) -> None:
        if isinstance(item, Choice):
            self.choices.append(item)
        else:
            self.relations.append(item)
        self._cache.clear()

    def bind(self, source_owners: Dict[str, Optional[str]]) -> None:
        """Map component names onto source ids (one source per owner)."""
        by_owner: Dict[str, List[str]] = {}
        for sid, owner in source_owners.items():
            if owner:
                by_owner.setdefault(owner, []).append(sid)
        self.aliases = {o: ids[0] for o, ids in by_owner.items() if len(ids) == 1}
        self._cache.clear()

    def _canon(self, name: str) -> str:
        return self.aliases.get(name, name)

    def __bool__(self) -> bool:
        return bool(self.relations or self.choices)

    def compare(self, pos: Sequence[str], neg: Sequence[str]) -> Optional[str]:
        """'>' / '<' / '=' if provable for sum(pos) vs sum(neg), else None."""
        if not self.relations:
            return None
        pos = tuple(sorted(self._canon(p) for p in pos))
        neg = tuple(sorted(self._canon(n) for n in neg))
        key = (pos, neg)
        if key not in self._cache:
            self._cache[key] = self._compare(pos, neg)
        return self._cache[key]

    def _compare(self, pos, neg) -> Optional[str]:
        names = sorted({self._canon(x) for r in self.relations for x in r.lhs + r.rhs} | set(pos) | set(neg))
        idx = {n: i for i, n in enumerate(names)}
        nv = len(names)
        a_eq, b_eq, a_ub, b_ub = [], [], [], []
        for r in self.relations:
            row = np.zeros(nv)
            for x in r.lhs:
                row[idx[self._canon(x)]] += 1
            for x in r.rhs:
                row[idx[self._canon(x)]] -= 1
            # row . x  (op)  0 ; strict inequalities become a margin of 1
            if r.op == "=":
                a_eq.append(row)
                b_eq.append(0.0)
            elif r.op == ">":
                a_ub.append(-row)
                b_ub.append(-1.0)
            elif r.op == ">=":
                a_ub.append(-row)
                b_ub.append(0.0)
            elif r.op == "<":
                a_ub.append(row)
                b_ub.append(-1.0)
            else:
                a_ub.append(row)
                b_ub.append(0.0)
        obj = np.zeros(nv)
        for x in pos:
            obj[idx[x]] += 1
        for x in neg:
            obj[idx[x]] -= 1
        kw = dict(
            A_ub=np.array(a_ub) if a_ub else None,
            b_ub=np.array(b_ub) if b_ub else None,
            A_eq=np.array(a_eq) if a_eq else None,
            b_eq=np.array(b_eq) if b_eq else None,
            bounds=[(1, None)] * nv,
            method="highs",
        )
        lo = linprog(obj, **kw)
        if lo.status == 2:
            raise ConstraintError("constraints are infeasible")
        hi = linprog(-obj, **kw)
        dmin = lo.fun if lo.status == 0 else -np.inf
        dmax = -hi.fun if hi.status == 0 else np.inf
        if dmin > _EPS:
            return ">"
        if dmax < -_EPS:
            return "<"
        if abs(dmin) <= _EPS and abs(dmax) <= _EPS:
            return "="
        return None

    def check(self) -> None:
        if self.relations:
            self._compare((), ())

    def __str__(self) -> str:
        parts = [str(r) for r in self.relations] + [f"Resolve> {c.first}" for c in self.choices]
        return "; ".join(parts)
