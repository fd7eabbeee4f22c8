"""Order-of-magnitude (OM) qualitative values and their arithmetic.

A value is a sign plus an integer index on a quantity kind.  ``q>n`` is ``n``
orders of magnitude below the nominal ``q``; ``q<n`` is ``n`` above it, so the
stored index ``n`` grows as the magnitude shrinks.

Quantity kinds are single letters::

    r  resistance      u  effort       f  flow
    p  power           t  time         d  displacement
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

KINDS = ("r", "u", "f", "p", "t", "d")

# variant tags
ZERO = "zero"
FIN = "fin"
INF = "inf"
AMB = "amb"
SHORT = "short"  # impossible flow, e.g. effort across a zero resistance
FLOAT = "float"  # effort of a fragment disconnected from every source
MID = "mid"      # node effort strictly between supply terminals

_PRODUCT_KIND = {
    ("r", "r"): "r",
    ("f", "r"): "u",
    ("r", "f"): "u",
    ("u", "f"): "p",
    ("f", "u"): "p",
    ("f", "t"): "d",
    ("t", "f"): "d",
}


class OMError(ValueError):
    """Raised on misuse of the OM algebra (kind mismatch, bad text)."""


@dataclass(frozen=True)
class QualValue:
    variant: str
    q: str = "r"
    sign: int = 0
    n: int = 0

    # --- predicates -------------------------------------------------------
    @property
    def is_zero(self) -> bool:
        return self.variant == ZERO

    @property
    def is_finite(self) -> bool:
        return self.variant == FIN

    @property
    def is_inf(self) -> bool:
        return self.variant == INF

    @property
    def is_amb(self) -> bool:
        return self.variant == AMB

    @property
    def is_definite(self) -> bool:
        return self.variant in (ZERO, FIN, INF)

    @property
    def is_structural(self) -> bool:
        return self.variant in (SHORT, FLOAT, MID)

    def __str__(self) -> str:
        return render(self)

    def __repr__(self) -> str:
        return f"QV({render(self)!r}:{self.q})"

    def __neg__(self) -> "QualValue":
        return om_neg(self)

    def __add__(self, other: "QualValue") -> "QualValue":
        return om_add(self, other)

    def __mul__(self, other: "QualValue") -> "QualValue":
        return om_mul(self, other)


# --- constructors ----------------------------------------------------------

def zero(q: str = "r") -> QualValue:
    return QualValue(ZERO, q)


def fin(q: str, n: int = 0, sign: int = 1) -> QualValue:
    if sign not in (1, -1):
        raise OMError(f"sign must be +1 or -1, got {sign}")
    return QualValue(FIN, q, sign, int(n))


def inf(q: str = "r") -> QualValue:
    return QualValue(INF, q)


def amb(q: str = "f") -> QualValue:
    return QualValue(AMB, q)


def short() -> QualValue:
    return QualValue(SHORT, "f")


def floating() -> QualValue:
    return QualValue(FLOAT, "u")


def mid() -> QualValue:
    return QualValue(MID, "u")


def below(q: str, n: int) -> QualValue:
    """``q>n``: a positive value ``n`` magnitudes below nominal."""
    return fin(q, n)


def above(q: str, n: int) -> QualValue:
    """``q<n``: a positive value ``n`` magnitudes above nominal."""
    return fin(q, -n)


# --- text form ---------------------------------------------------------------

_FIN_RE = re.compile(r"^([+-]?)([a-z])(?:([<>])(\d+))?$")


def render(v: QualValue) -> str:
    if v.variant == ZERO:
        return "0"
    if v.variant == INF:
        return "inf"
    if v.variant == AMB:
        return "?"
    if v.variant == SHORT:
        return "short"
    if v.variant == FLOAT:
        return "float"
    if v.variant == MID:
        return "mid"
    s = "-" if v.sign < 0 else ""
    if v.n > 0:
        return f"{s}{v.q}>{v.n}"
    if v.n < 0:
        return f"{s}{v.q}<{-v.n}"
    return f"{s}{v.q}"


def parse_value(text: str, q: Optional[str] = None) -> QualValue:
    """Parse the textual form; ``q`` supplies the kind for ``0``, ``?`` and ``inf``."""
    t = text.strip()
    if t == "0":
        return zero(q or "r")
    if t in ("inf", "∞"):
        return inf(q or "r")
    if t == "?":
        return amb(q or "f")
    if t in ("short", "⊔"):
        return short()
    if t in ("float", "∅"):
        return floating()
    if t in ("mid", "~"):
        return mid()
    m = _FIN_RE.match(t)
    if not m or m.group(2) not in KINDS:
        raise OMError(f"not an OM value: {text!r}")
    sign = -1 if m.group(1) == "-" else 1
    n = int(m.group(4)) if m.group(4) else 0
    if m.group(3) == "<":
        n = -n
    if q is not None and q != m.group(2):
        raise OMError(f"expected a {q!r} value, got {text!r}")
    return fin(m.group(2), n, sign)


# --- arithmetic ----------------------------------------------------------------

def _structural(a: QualValue, b: QualValue, q: str) -> Optional[QualValue]:
    # impossible dominates floating; both dominate everything else
    if SHORT in (a.variant, b.variant):
        return short()
    if FLOAT in (a.variant, b.variant):
        return floating()
    if MID in (a.variant, b.variant):
        raise OMError("'mid' is a node label and takes part in no arithmetic")
    return None


def product_kind(qa: str, qb: str) -> str:
    if qa == qb:
        return qa
    return _PRODUCT_KIND.get((qa, qb), qa)


def om_mul(a: QualValue, b: QualValue) -> QualValue:
    q = product_kind(a.q, b.q)
    s = _structural(a, b, q)
    if s is not None:
        return s
    if a.is_zero and b.is_zero:
        return zero(q)
    if (a.is_zero and b.is_inf) or (a.is_inf and b.is_zero):
        return amb(q)
    if a.is_zero or b.is_zero:
        # sign algebra: 0 x ? = 0
        return zero(q)
    if a.is_amb or b.is_amb:
        return amb(q)
    if a.is_inf or b.is_inf:
        return inf(q)
    return fin(q, a.n + b.n, a.sign * b.sign)


def om_div(a: QualValue, b: QualValue, q: str) -> QualValue:
    """Index subtraction ``a / b`` for finite operands, result kind ``q``."""
    if not (a.is_finite and b.is_finite):
        raise OMError("om_div needs finite operands")
    return fin(q, a.n - b.n, a.sign * b.sign)


def _check_kind(a: QualValue, b: QualValue) -> None:
    if a.is_structural or b.is_structural:
        return
    if a.q != b.q:
        raise OMError(f"cannot add {a.q!r} and {b.q!r} quantities")


def om_add(a: QualValue, b: QualValue) -> QualValue:
    _check_kind(a, b)
    s = _structural(a, b, a.q)
    if s is not None:
        return s
    if a.is_amb or b.is_amb:
        return amb(a.q)
    if a.is_inf or b.is_inf:
        return inf(a.q)
    if a.is_zero:
        return b
    if b.is_zero:
        return a
    if a.sign == b.sign:
        return fin(a.q, min(a.n, b.n), a.sign)
    if a.n == b.n:
        return amb(a.q)
    return a if a.n < b.n else b


def om_sum(terms: Iterable[QualValue], q: Optional[str] = None) -> QualValue:
    """n-ary sum by the dominant-magnitude rule (never a pairwise fold)."""
    ts = list(terms)
    kinds = {t.q for t in ts if not t.is_structural}
    if len(kinds) > 1:
        raise OMError(f"mixed quantity kinds in sum: {sorted(kinds)}")
    kind = q or (kinds.pop() if kinds else "f")
    variants = {t.variant for t in ts}
    if SHORT in variants:
        return short()
    if FLOAT in variants:
        return floating()
    if MID in variants:
        raise OMError("'mid' is a node label and takes part in no arithmetic")
    if AMB in variants:
        return amb(kind)
    if INF in variants:
        return inf(kind)
    finite = [t for t in ts if t.is_finite]
    if not finite:
        return zero(kind)
    top = min(t.n for t in finite)
    signs = {t.sign for t in finite if t.n == top}
    if len(signs) > 1:
        return amb(kind)
    return fin(kind, top, signs.pop())


def om_neg(a: QualValue) -> QualValue:
    if a.is_finite:
        return fin(a.q, a.n, -a.sign)
    return a


def om_abs(a: QualValue) -> QualValue:
    if a.is_finite and a.sign < 0:
        return fin(a.q, a.n, 1)
    return a


def _mag_key(v: QualValue) -> tuple:
    if v.is_zero:
        return (0, 0)
    if v.is_finite:
        return (1, -v.n)
    if v.is_inf:
        return (2, 0)
    raise OMError(f"no magnitude order for {render(v)}")


def om_min(a: QualValue, b: QualValue) -> QualValue:
    if a.is_amb or b.is_amb:
        return amb(a.q)
    return a if _mag_key(a) <= _mag_key(b) else b


def om_max(a: QualValue, b: QualValue) -> QualValue:
    if a.is_amb or b.is_amb:
        return amb(a.q)
    return a if _mag_key(a) >= _mag_key(b) else b


def om_min_all(values: Sequence[QualValue]) -> QualValue:
    out = values[0]
    for v in values[1:]:
        out = om_min(out, v)
    return out


def om_max_all(values: Sequence[QualValue]) -> QualValue:
    out = values[0]
    for v in values[1:]:
        out = om_max(out, v)
    return out


def signed_key(v: QualValue) -> tuple:
    """Total order on definite signed values: -f < -f>1 < 0 < f>1 < f < inf."""
    if v.is_zero:
        return (1, 0)
    if v.is_finite:
        return (0, v.n) if v.sign < 0 else (2, -v.n)
    if v.is_inf:
        return (3, 0)
    raise OMError(f"no order for {render(v)}")


def flow_from(e: QualValue, r: QualValue) -> QualValue:
    """Flow through a resistance ``r`` with effort ``e`` across it."""
    if e.variant == SHORT or r.variant == SHORT:
        return short()
    if e.variant == FLOAT:
        return floating()
    if r.is_inf:
        return zero("f")
    if r.is_amb:
        return amb("f")
    if e.is_amb:
        return amb("f")
    if e.is_zero:
        return amb("f") if r.is_zero else zero("f")
    if r.is_zero:
        return short()
    return fin("f", e.n - r.n, e.sign)


def duration_from(d: QualValue, flow: QualValue) -> Optional[QualValue]:
    """Time to move displacement ``d`` at ``flow``; ``None`` means never."""
    if not flow.is_finite:
        return None
    if d.is_zero:
        return zero("t")
    if not d.is_finite:
        return None
    return fin("t", d.n - flow.n, 1)


# --- quantity spaces -----------------------------------------------------------

@dataclass(frozen=True)
class QuantitySpace:
    """Named magnitude labels for one quantity kind, one label at index 0.

    Labels are listed from smallest to largest; adjacent labels are one OM
    apart.  ``QuantitySpace("t", ("mS", "Sec", "hour", "day"), "Sec")`` puts
    ``mS`` at ``t>1`` and ``day`` at ``t<2``.
    """

    q: str
    labels: tuple
    zero_label: str

    def __post_init__(self):
        if self.zero_label not in self.labels:
            raise OMError(f"{self.zero_label!r} not among labels {self.labels}")
        if len(set(self.labels)) != len(self.labels):
            raise OMError("duplicate quantity labels")

    def value(self, label: str) -> QualValue:
        i = self.labels.index(label) - self.labels.index(self.zero_label)
        return fin(self.q, -i)

    def label(self, v: QualValue) -> Optional[str]:
        if not v.is_finite or v.q != self.q:
            return None
        i = self.labels.index(self.zero_label) - v.n
        if 0 <= i < len(self.labels):
            return self.labels[i]
        return None
