"""Qualitative power network: reduction, flow/effort assignment, superposition.

A network is a multigraph of resistive edges plus effort (or flow) sources.
Solving for one source reduces the rest of the network to a single equivalent
resistance between the source terminals (series, parallel and star-mesh
steps, after zero-resistance edges are merged into supernodes), assigns the
root flow and expands the recorded steps back down to the original edges.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from . import om
from .om import QualValue

log = logging.getLogger(__name__)

F0 = om.zero("f")
U0 = om.zero("u")


class NetworkError(ValueError):
    pass


@dataclass
class Edge:
    id: str
    t1: str
    t2: str
    r: QualValue
    owner: Optional[str] = None
    # substance delivered into an end node when flow heads toward it;
    # None means pass-through (whatever is at the upstream node)
    out: Dict[str, Optional[frozenset]] = field(default_factory=dict)


@dataclass
class Source:
    id: str
    neg: str
    pos: str
    value: QualValue
    kind: str = "effort"  # or "flow"
    owner: Optional[str] = None
    out: Dict[str, Optional[frozenset]] = field(default_factory=dict)

    @property
    def enabled(self) -> bool:
        return not self.value.is_zero


class Network:
    def __init__(self, zero_node: Optional[str] = None):
        self.nodes: List[str] = []
        self._node_set: Set[str] = set()
        self.edges: Dict[str, Edge] = {}
        self.sources: Dict[str, Source] = {}
        self.zero_node = zero_node
        self.seeds: Dict[str, Set[str]] = {}
        if zero_node is not None:
            self.add_node(zero_node)

    def add_node(self, node: str) -> str:
        if node not in self._node_set:
            self._node_set.add(node)
            self.nodes.append(node)
        return node

    def add_edge(self, id: str, t1: str, t2: str, r, owner=None) -> Edge:
        if id in self.edges or id in self.sources:
            raise NetworkError(f"duplicate element id {id!r}")
        if isinstance(r, str):
            r = om.parse_value(r, "r")
        self.add_node(t1)
        self.add_node(t2)
        e = Edge(id, t1, t2, r, owner)
        self.edges[id] = e
        return e

    def add_source(self, id: str, neg: str, pos: str, value, kind="effort", owner=None) -> Source:
        if id in self.edges or id in self.sources:
            raise NetworkError(f"duplicate element id {id!r}")
        if isinstance(value, str):
            value = om.parse_value(value, "u" if kind == "effort" else "f")
        self.add_node(neg)
        self.add_node(pos)
        s = Source(id, neg, pos, value, kind, owner)
        self.sources[id] = s
        return s

    def copy(self) -> "Network":
        n = Network(self.zero_node)
        for node in self.nodes:
            n.add_node(node)
        for e in self.edges.values():
            n.edges[e.id] = Edge(e.id, e.t1, e.t2, e.r, e.owner, dict(e.out))
        for s in self.sources.values():
            n.sources[s.id] = Source(s.id, s.neg, s.pos, s.value, s.kind, s.owner, dict(s.out))
        n.seeds = {k: set(v) for k, v in self.seeds.items()}
        return n

    def element(self, id: str):
        if id in self.edges:
            return self.edges[id]
        if id in self.sources:
            return self.sources[id]
        raise KeyError(id)


# ---------------------------------------------------------------------------
# reduction

@dataclass
class Step:
    kind: str  # merge | loop | dangling | outside | series | parallel | star
    new: Optional[str] = None
    children: Tuple[str, ...] = ()
    flips: Tuple[bool, ...] = ()
    node: Optional[str] = None
    # star-mesh only: neighbour order and mesh edge per (j, k), j < k
    neighbours: Tuple[str, ...] = ()
    mesh: Dict[Tuple[int, int], str] = field(default_factory=dict)


@dataclass
class ReductionTree:
    steps: List[Step]
    resist: Dict[str, QualValue]
    ends: Dict[str, Tuple[str, str]]
    pos: str
    neg: str
    root: Optional[str]
    root_flip: bool
    shorted: bool

    @property
    def equivalent(self) -> QualValue:
        if self.shorted:
            return om.zero("r")
        if self.root is None:
            return om.inf()
        return self.resist[self.root]

    def count(self, kind: str) -> int:
        return sum(1 for s in self.steps if s.kind == kind)


class _Work:
    """Mutable working graph used during one reduction."""

    def __init__(self, edges: Dict[str, Tuple[str, str, QualValue]], terminals: Sequence[str]):
        self.parent: Dict[str, str] = {}
        self.label: Dict[str, str] = {}
        self.ends: Dict[str, Tuple[str, str]] = {}
        self.resist: Dict[str, QualValue] = {}
        self.adj: Dict[str, Set[str]] = {}
        self.active: Dict[str, None] = {}  # ordered set
        self.terminals = list(terminals)
        self.original_loops: Set[str] = set()
        for t in terminals:
            self.adj.setdefault(t, set())
        for eid, (a, b, r) in edges.items():
            self.resist[eid] = r
            self.ends[eid] = (a, b)
            if a == b:
                self.original_loops.add(eid)
            self._attach(eid, a, b)
        self._counter = 0

    def _attach(self, eid, a, b):
        self.ends[eid] = (a, b)
        self.active[eid] = None
        self.adj.setdefault(a, set()).add(eid)
        self.adj.setdefault(b, set()).add(eid)

    def detach(self, eid):
        a, b = self.ends[eid]
        del self.active[eid]
        self.adj[a].discard(eid)
        self.adj[b].discard(eid)

    def add(self, eid, a, b, r):
        self.resist[eid] = r
        self._attach(eid, a, b)

    def degree(self, node) -> int:
        d = 0
        for eid in self.adj.get(node, ()):
            a, b = self.ends[eid]
            d += 2 if a == b else 1
        return d

    def other(self, eid, node):
        a, b = self.ends[eid]
        return b if a == node else a

    def rename(self, old, new):
        for eid in list(self.adj.get(old, ())):
            a, b = self.ends[eid]
            self.adj[old].discard(eid)
            a = new if a == old else a
            b = new if b == old else b
            self.ends[eid] = (a, b)
            self.adj.setdefault(new, set()).add(eid)
        self.adj.pop(old, None)
        self.terminals = [new if t == old else t for t in self.terminals]


def _merge_label(a: str, b: str) -> str:
    return f"{a}.{b}"


def reduce_network(
    edges: Dict[str, Tuple[str, str, QualValue]],
    pos: str,
    neg: str,
    force_star: bool = False,
) -> ReductionTree:
    """Reduce ``edges`` to one equivalent edge between ``pos`` and ``neg``.

    Rule priority is supernode/loop/dangling, parallel, series, star-mesh
    (lowest-degree star first, ties by node label).  With ``force_star`` every
    series step is replaced by a star-mesh step on the degree-2 node.
    """
    w = _Work(edges, [pos, neg])
    steps: List[Step] = []
    counter = [0]

    def fresh(prefix):
        counter[0] += 1
        return f"{prefix}#{counter[0]}"

    # edges outside the component of the source terminals carry nothing
    comp = _component(w, pos)
    for eid in list(w.active):
        a, _ = w.ends[eid]
        if a not in comp:
            w.detach(eid)
            steps.append(Step("outside", children=(eid,)))

    def simplify() -> bool:
        changed = False
        again = True
        while again:
            again = False
            for eid in list(w.active):
                if eid not in w.active:
                    continue
                a, b = w.ends[eid]
                r = w.resist[eid]
                if a == b:
                    w.detach(eid)
                    if r.is_zero and eid not in w.original_loops:
                        steps.append(Step("merge", children=(eid,)))
                    else:
                        steps.append(Step("loop", children=(eid,)))
                    again = changed = True
                elif r.is_zero:
                    w.detach(eid)
                    label = _merge_label(a, b)
                    w.rename(a, label)
                    w.rename(b, label)
                    steps.append(Step("merge", children=(eid,), node=label))
                    again = changed = True
            for node in sorted(w.adj):
                if node in w.terminals:
                    continue
                if w.degree(node) == 1:
                    (eid,) = tuple(w.adj[node])
                    w.detach(eid)
                    steps.append(Step("dangling", children=(eid,), node=node))
                    again = changed = True
        return changed

    def parallel() -> bool:
        groups: Dict[frozenset, List[str]] = {}
        for eid in w.active:
            a, b = w.ends[eid]
            if a != b:
                groups.setdefault(frozenset((a, b)), []).append(eid)
        for key in sorted(groups, key=lambda k: sorted(k)):
            members = groups[key]
            if len(members) < 2:
                continue
            a, b = w.ends[members[0]]
            flips = tuple(w.ends[m][0] != a for m in members)
            r = om.om_min_all([w.resist[m] for m in members])
            for m in members:
                w.detach(m)
            new = "(" + "||".join(members) + ")"
            w.add(new, a, b, r)
            steps.append(Step("parallel", new=new, children=tuple(members), flips=flips))
            return True
        return False

    def series() -> bool:
        for node in sorted(w.adj):
            if node in w.terminals:
                continue
            inc = sorted(w.adj[node])
            if len(inc) != 2:
                continue
            e1, e2 = inc
            if w.ends[e1][0] == w.ends[e1][1] or w.ends[e2][0] == w.ends[e2][1]:
                continue
            x = w.other(e1, node)
            y = w.other(e2, node)
            flips = (w.ends[e1][0] != x, w.ends[e2][0] != node)
            r = om.om_max(w.resist[e1], w.resist[e2])
            w.detach(e1)
            w.detach(e2)
            new = f"({e1}|{e2})"
            w.add(new, x, y, r)
            w.adj.pop(node, None)
            steps.append(Step("series", new=new, children=(e1, e2), flips=flips, node=node))
            return True
        return False

    def star(min_degree: int = 3) -> bool:
        cands = [
            (w.degree(n), n)
            for n in w.adj
            if n not in w.terminals and len(w.adj[n]) >= min_degree
        ]
        if not cands:
            return False
        _, s = min(cands)
        legs = sorted(w.adj[s])
        neighbours = tuple(w.other(e, s) for e in legs)
        flips = tuple(w.ends[e][0] != s for e in legs)
        rs = [w.resist[e] for e in legs]
        denom = om.om_min_all(rs)
        mesh = {}
        for j in range(len(legs)):
            for k in range(j + 1, len(legs)):
                mesh[(j, k)] = fresh(f"e_{j + 1}{k + 1}")
        for e in legs:
            w.detach(e)
        w.adj.pop(s, None)
        for (j, k), eid in mesh.items():
            w.add(eid, neighbours[j], neighbours[k], _star_mesh_r(rs[j], rs[k], denom))
        steps.append(
            Step("star", children=tuple(legs), flips=flips, node=s, neighbours=neighbours, mesh=mesh)
        )
        return True

    while True:
        if simplify():
            continue
        t_pos, t_neg = w.terminals
        if t_pos == t_neg:
            break
        if parallel():
            continue
        if force_star:
            # a degree-2 star-mesh step stands in for every series step
            if star(2):
                continue
        elif series():
            continue
        if star():
            continue
        break

    t_pos, t_neg = w.terminals
    shorted = t_pos == t_neg
    root = None
    root_flip = False
    if not shorted:
        between = [e for e in w.active if set(w.ends[e]) == {t_pos, t_neg}]
        leftovers = [e for e in w.active if e not in between]
        if leftovers:
            raise NetworkError(f"reduction did not terminate cleanly: {leftovers}")
        if len(between) > 1:
            raise NetworkError("unmerged parallel root edges")
        if between:
            root = between[0]
            root_flip = w.ends[root][0] != t_pos
    return ReductionTree(steps, w.resist, w.ends, pos, neg, root, root_flip, shorted)


def _component(w: _Work, start: str) -> Set[str]:
    seen = {start}
    todo = [start]
    while todo:
        n = todo.pop()
        for eid in w.adj.get(n, ()):
            m = w.other(eid, n)
            if m not in seen:
                seen.add(m)
                todo.append(m)
    return seen


def _star_mesh_r(rj: QualValue, rk: QualValue, denom: QualValue) -> QualValue:
    if rj.is_zero or rk.is_zero or denom.is_zero:
        raise NetworkError("star-mesh over a zero-resistance leg is undefined")
    if denom.is_inf:
        return om.inf()
    if rj.is_inf or rk.is_inf:
        return om.inf()
    # r<(a+b-c) = r<a * r<b / r<c
    return om.fin("r", rj.n + rk.n - denom.n)


# ---------------------------------------------------------------------------
# expansion

def star_leg_flows(neighbours: Sequence, mesh_flows: Dict[tuple, QualValue]) -> Dict:
    """Flow in each star leg, oriented away from the centre.

    ``mesh_flows`` maps an ordered neighbour pair ``(a, b)`` to the flow in
    the mesh edge oriented a -> b.  The leg to ``k`` carries the sum of all
    mesh flows arriving at ``k``.
    """
    out = {}
    for k in neighbours:
        terms = []
        for (a, b), f in mesh_flows.items():
            if b == k and a != k:
                terms.append(f)
            elif a == k and b != k:
                terms.append(om.om_neg(f))
        out[k] = om.om_sum(terms, "f")
    return out


def _flip(v: QualValue, flip: bool) -> QualValue:
    return om.om_neg(v) if flip else v


def expand(tree: ReductionTree, magnitude: QualValue, kind: str = "effort"):
    """Assign root flow/effort and expand every recorded step.

    Returns ``(flows, efforts, reports)`` keyed by edge id; edges subsumed
    into supernodes get ``None`` flow (to be recovered by KCL).
    """
    F: Dict[str, Optional[QualValue]] = {}
    E: Dict[str, QualValue] = {}
    reports: List[str] = []
    R = tree.resist

    if tree.shorted:
        root_f = om.short() if kind == "effort" and not magnitude.is_zero else om.amb("f")
        if kind == "effort" and not magnitude.is_zero:
            reports.append("short circuit across source")
    elif tree.root is None:
        root_f = F0 if kind == "effort" else om.short()
    else:
        req = R[tree.root]
        if kind == "effort":
            f = om.flow_from(magnitude, req)
            F[tree.root] = _flip(f, tree.root_flip)
            E[tree.root] = _flip(magnitude, tree.root_flip)
            if f.variant == om.SHORT:
                reports.append("short circuit across source")
            root_f = f
        else:
            e = om.om_mul(magnitude, req)
            F[tree.root] = _flip(magnitude, tree.root_flip)
            E[tree.root] = _flip(e, tree.root_flip)
            root_f = magnitude

    for st in reversed(tree.steps):
        if st.kind in ("loop",):
            (eid,) = st.children
            F[eid] = F0
            E[eid] = U0
        elif st.kind in ("dangling", "outside"):
            (eid,) = st.children
            F[eid] = F0
            E[eid] = om.om_mul(F0, R[eid])
        elif st.kind == "merge":
            (eid,) = st.children
            F[eid] = None
            E[eid] = U0
        elif st.kind == "series":
            f = F[st.new]
            e = E[st.new]
            e1, e2 = st.children
            for child, sib, flip in ((e1, e2, st.flips[0]), (e2, e1, st.flips[1])):
                F[child] = _flip(f, flip) if f is not None else None
                if R[child].is_inf:
                    if R[sib].is_inf:
                        E[child] = om.amb("u")
                    else:
                        E[child] = _flip(e, flip)
                else:
                    E[child] = om.om_mul(F[child], R[child]) if F[child] is not None else om.amb("u")
        elif st.kind == "parallel":
            e = E[st.new]
            for child, flip in zip(st.children, st.flips):
                E[child] = _flip(e, flip)
                F[child] = om.flow_from(E[child], R[child])
        elif st.kind == "star":
            n = len(st.children)
            by_pair = {(j, k): F[eid] for (j, k), eid in st.mesh.items()}
            outs = star_leg_flows(list(range(n)), by_pair)
            leg_out = [outs[k] for k in range(n)]
            leg_e: List[Optional[QualValue]] = []
            for k in range(n):
                r = R[st.children[k]]
                leg_e.append(None if r.is_inf else om.om_mul(leg_out[k], r))
            for k in range(n):
                if leg_e[k] is not None:
                    continue
                # E(s->k) = E(s->j) + E(j->k) through each finite leg j;
                # use the answer only when every definite route agrees
                routes = set()
                for j in range(n):
                    if j == k or R[st.children[j]].is_inf or not leg_e[j].is_definite:
                        continue
                    if j < k:
                        ejk = E[st.mesh[(j, k)]]
                    else:
                        ejk = om.om_neg(E[st.mesh[(k, j)]])
                    cand = om.om_add(leg_e[j], ejk)
                    if cand.is_definite:
                        routes.add(cand)
                leg_e[k] = routes.pop() if len(routes) == 1 else om.amb("u")
            for k, child in enumerate(st.children):
                F[child] = _flip(leg_out[k], st.flips[k])
                E[child] = _flip(leg_e[k], st.flips[k])
    return F, E, root_f, reports


# ---------------------------------------------------------------------------
# KCL recovery of subsumed flows

def recover_flows(
    ends: Dict[str, Tuple[str, str]],
    flows: Dict[str, Optional[QualValue]],
) -> Dict[str, QualValue]:
    """Fill unknown (``None``) flows by qualitative KCL, to fixpoint.

    ``ends`` maps element id to ``(t1, t2)``; positive flow runs t1 -> t2.
    Any flow still unknown afterwards becomes ``?``.
    """
    flows = dict(flows)
    incident: Dict[str, List[str]] = {}
    for eid, (a, b) in ends.items():
        if a == b:
            continue
        incident.setdefault(a, []).append(eid)
        incident.setdefault(b, []).append(eid)
    def balance(node):
        inc = incident[node]
        unknown = [e for e in inc if flows.get(e) is None]
        if len(unknown) != 1:
            return None
        inflows = []
        for e in inc:
            if e != unknown[0]:
                f = flows[e]
                inflows.append(f if ends[e][1] == node else om.om_neg(f))
        total_in = om.om_sum(inflows, "f")
        u = unknown[0]
        # the unknown carries the balance away from (or into) the node
        return u, (total_in if ends[u][0] == node else om.om_neg(total_in))

    while True:
        fallback = None
        progress = False
        for node in sorted(incident):
            got = balance(node)
            if got is None:
                continue
            if got[1].is_definite or got[1].variant == om.SHORT:
                flows[got[0]] = got[1]
                progress = True
            elif fallback is None:
                fallback = got
        if progress:
            continue
        if fallback is None:
            break
        # only ambiguous balances remain; commit one and retry
        flows[fallback[0]] = fallback[1]
    return {e: (f if f is not None else om.amb("f")) for e, f in flows.items()}


def kcl_residuals(ends: Dict[str, Tuple[str, str]], flows: Dict[str, QualValue]) -> Dict[str, QualValue]:
    """om_sum of signed inflows at each node (0 or ? when KCL holds)."""
    acc: Dict[str, List[QualValue]] = {}
    for eid, (a, b) in ends.items():
        if a == b:
            continue
        f = flows[eid]
        acc.setdefault(b, []).append(f)
        acc.setdefault(a, []).append(om.om_neg(f))
    return {n: om.om_sum(v, "f") for n, v in acc.items()}


# ---------------------------------------------------------------------------
# solutions

@dataclass
class Solution:
    flows: Dict[str, QualValue]
    efforts: Dict[str, QualValue]
    powers: Dict[str, QualValue] = field(default_factory=dict)
    labels: Dict[str, QualValue] = field(default_factory=dict)
    substances: Dict[str, frozenset] = field(default_factory=dict)
    reports: List[str] = field(default_factory=list)
    constraint_log: List[str] = field(default_factory=list)
    trees: Dict[str, ReductionTree] = field(default_factory=dict)

    def F(self, id: str) -> QualValue:
        return self.flows[id]

    def E(self, id: str) -> QualValue:
        return self.efforts[id]

    def P(self, id: str) -> QualValue:
        return self.powers[id]

    def S(self, node: str) -> frozenset:
        return self.substances.get(node, frozenset())

    @property
    def ambiguous(self) -> List[str]:
        return sorted(k for k, v in self.flows.items() if v.is_amb)


def _ends(net: Network) -> Dict[str, Tuple[str, str]]:
    ends = {e.id: (e.t1, e.t2) for e in net.edges.values()}
    for s in net.sources.values():
        ends[s.id] = (s.neg, s.pos)
    return ends


def _single(net: Network, src: Source, force_star: bool = False):
    """Flows/efforts due to ``src`` alone; other sources inhibited."""
    base = {e.id: (e.t1, e.t2, e.r) for e in net.edges.values()}

    def build(opened: Set[str]):
        g = dict(base)
        for s in net.sources.values():
            if s.id == src.id:
                continue
            if s.kind == "flow" or s.id in opened:
                g[s.id] = (s.neg, s.pos, om.inf())
            else:
                g[s.id] = (s.neg, s.pos, om.zero("r"))
        return g

    opened: Set[str] = set()
    g = build(opened)
    tree = reduce_network(g, src.pos, src.neg, force_star=force_star)
    if tree.shorted and src.kind == "effort":
        # an inhibited source on the zero path is ignored (opened)
        bypass = {
            s.id for s in net.sources.values()
            if s.id != src.id and s.kind == "effort"
            and any(st.kind == "merge" and st.children == (s.id,) for st in tree.steps)
        }
        if bypass:
            opened = bypass
            g = build(opened)
            tree = reduce_network(g, src.pos, src.neg, force_star=force_star)
    F, E, root_f, reports = expand(tree, src.value, src.kind)
    # inside the source, flow runs neg -> pos
    F[src.id] = root_f if not tree.shorted or root_f.variant == om.SHORT else None
    E[src.id] = src.value if src.kind == "effort" else om.amb("u")
    ends = {eid: (t[0], t[1]) for eid, t in g.items()}
    ends[src.id] = (src.neg, src.pos)
    for eid in ends:
        F.setdefault(eid, None)
        E.setdefault(eid, U0)
    flows = recover_flows(ends, F)
    return flows, E, tree, reports


def solve(net: Network, source_id: Optional[str] = None, force_star: bool = False,
          constraints=None) -> Solution:
    """Solve for one source (the only enabled one when ``source_id`` is None)."""
    if source_id is None:
        enabled = [s for s in net.sources.values() if s.enabled]
        if len(enabled) != 1:
            return superpose(net, constraints, force_star=force_star)
        source_id = enabled[0].id
    src = net.sources[source_id]
    flows, efforts, tree, reports = _single(net, src, force_star)
    keep = set(net.edges) | set(net.sources)
    flows = {k: v for k, v in flows.items() if k in keep}
    efforts = {k: v for k, v in efforts.items() if k in keep}
    sol = Solution(flows, efforts, reports=list(reports), trees={src.id: tree})
    _finish(net, sol, [src])
    return sol


def superpose(net: Network, constraints=None, force_star: bool = False) -> Solution:
    """Sum per-source solutions; ambiguous sums may be resolved by constraints."""
    from .constraints import ConstraintSet

    if constraints is None:
        constraints = ConstraintSet()
    enabled = [s for s in net.sources.values() if s.enabled]
    ids = list(net.edges) + list(net.sources)
    if not enabled:
        flows = {i: F0 for i in ids}
        efforts = {i: om.om_mul(F0, net.edges[i].r) if i in net.edges else U0 for i in ids}
        sol = Solution(flows, efforts)
        _finish(net, sol, [])
        return sol
    parts = []
    sol_reports: List[str] = []
    trees = {}
    for s in enabled:
        flows, efforts, tree, reports = _single(net, s, force_star)
        parts.append((s, flows, efforts))
        trees[s.id] = tree
        sol_reports += [f"{s.id}: {r}" for r in reports]
    clog: List[str] = []
    total_f: Dict[str, QualValue] = {}
    total_e: Dict[str, QualValue] = {}
    for i in ids:
        total_f[i] = _resolved_sum([(s.id, fl[i]) for s, fl, _ in parts], constraints, clog, i, "f")
        if i in net.sources:
            total_e[i] = net.sources[i].value if net.sources[i].kind == "effort" else om.amb("u")
        else:
            total_e[i] = _resolved_sum([(s.id, ef[i]) for s, _, ef in parts], constraints, clog, i, "u")
    sol = Solution(total_f, total_e, reports=sol_reports, constraint_log=clog, trees=trees)
    _finish(net, sol, enabled)
    return sol


def _resolved_sum(terms, constraints, clog, where, q) -> QualValue:
    vals = [v for _, v in terms]
    total = om.om_sum(vals, q)
    if not total.is_amb or not all(v.is_definite for v in vals) or om.INF in {v.variant for v in vals}:
        return total
    remaining = [(sid, v) for sid, v in terms if v.is_finite]
    while remaining:
        top = min(v.n for _, v in remaining)
        level = [(sid, v) for sid, v in remaining if v.n == top]
        pos = sorted(sid for sid, v in level if v.sign > 0)
        neg = sorted(sid for sid, v in level if v.sign < 0)
        if not pos or not neg:
            return om.fin(q, top, 1 if pos else -1)
        rel = constraints.compare(pos, neg)
        if rel is None:
            return om.amb(q)
        clog.append(f"{where}: {'+'.join(pos)} {rel} {'+'.join(neg)}")
        if rel == ">":
            return om.fin(q, top, 1)
        if rel == "<":
            return om.fin(q, top, -1)
        remaining = [(sid, v) for sid, v in remaining if v.n != top]
    return om.zero(q)


def _finish(net: Network, sol: Solution, active: Sequence[Source]) -> None:
    for i, f in sol.flows.items():
        e = sol.efforts.get(i, U0)
        try:
            sol.powers[i] = om.om_mul(e, f)
        except om.OMError:
            sol.powers[i] = om.amb("p")
    sol.flows = {k: sol.flows[k] for k in sorted(sol.flows)}
    if any(f.variant == om.SHORT for f in sol.flows.values()):
        if not any("short" in r for r in sol.reports):
            sol.reports.append("short circuit across source")
    for eid, f in sol.flows.items():
        if f.is_amb:
            sol.reports.append(f"ambiguous flow in {eid}")
    label_node_efforts(net, sol, active)
    propagate_substances(net, sol)


# ---------------------------------------------------------------------------
# node effort labels

def zero_node_bridged(net: Network, active: Sequence[Source]) -> bool:
    """True when the distinguished node fails the partition condition.

    Two edges at the zero node whose far ends are joined without passing
    through a supply terminal put the zero node part-way along a flow path,
    so absolute efforts relative to it are not determinable.
    """
    z = net.zero_node
    if z is None or not active:
        return False
    supply = set()
    for s in active:
        supply.update((s.neg, s.pos))
    if z in supply:
        return False
    far = []
    for e in net.edges.values():
        if e.r.is_inf or e.t1 == e.t2:
            continue
        if z in (e.t1, e.t2):
            far.append(e.t2 if e.t1 == z else e.t1)
    far = sorted(set(far) - supply)
    if len(far) < 2:
        return False
    blocked = supply | {z}
    parent = {n: n for n in net.nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for e in net.edges.values():
        if e.r.is_inf or e.t1 in blocked or e.t2 in blocked:
            continue
        parent[find(e.t1)] = find(e.t2)
    for s in net.sources.values():
        if s in active or s.neg in blocked or s.pos in blocked:
            continue
        parent[find(s.neg)] = find(s.pos)
    roots = [find(x) for x in far]
    return len(set(roots)) < len(roots)


def _potentials(net: Network, sol: Solution, root: str) -> Dict[str, QualValue]:
    pot: Dict[str, QualValue] = {root: U0}
    links = []
    for e in net.edges.values():
        if e.t1 != e.t2:
            links.append((e.t1, e.t2, sol.efforts.get(e.id, om.amb("u"))))
    for s in net.sources.values():
        # E(neg, pos) = -value
        links.append((s.neg, s.pos, om.om_neg(sol.efforts.get(s.id, U0))))
    changed = True
    while changed:
        changed = False
        for a, b, e in links:
            if not e.is_definite or e.is_inf:
                continue
            for x, y in ((a, b), (b, a)):
                px = pot.get(x)
                if px is None or not px.is_definite:
                    continue
                # E(a, b) = pot(a) - pot(b)
                cand = om.om_add(px, om.om_neg(e)) if x == a else om.om_add(px, e)
                if not cand.is_definite:
                    continue
                if y not in pot:
                    pot[y] = cand
                    changed = True
                elif pot[y] != cand and not pot[y].is_amb:
                    pot[y] = om.amb("u")
                    changed = True
    return pot


def label_node_efforts(net: Network, sol: Solution, active: Sequence[Source]) -> None:
    """Absolute node efforts relative to the zero node (0, u>n, mid, float)."""
    sol.labels = {}
    live: Set[str] = set()
    parent = {n: n for n in net.nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for e in net.edges.values():
        if not e.r.is_inf:
            parent[find(e.t1)] = find(e.t2)
    for s in net.sources.values():
        parent[find(s.neg)] = find(s.pos)
    roots = {find(s.pos) for s in active if s.kind == "effort"}
    for n in net.nodes:
        if find(n) in roots:
            live.add(n)
    z = net.zero_node
    if z is None:
        return
    if zero_node_bridged(net, active):
        sol.reports.append(f"zero node {z} bridged: node efforts withheld")
        for n in net.nodes:
            sol.labels[n] = om.floating() if n not in live else om.amb("u")
        return
    pot = _potentials(net, sol, z) if z in live else {}
    single = [s for s in active if s.kind == "effort"]
    dp = dn = None
    if len(single) == 1:
        dp = _potentials(net, sol, single[0].pos)
        dn = _potentials(net, sol, single[0].neg)
    for n in net.nodes:
        if n not in live:
            sol.labels[n] = om.floating()
            continue
        if dp is not None:
            a, b = dp.get(n), dn.get(n)
            if (a is not None and b is not None and a.is_finite and b.is_finite
                    and a.sign < 0 < b.sign and a.n == b.n):
                sol.labels[n] = om.mid()
                continue
        sol.labels[n] = pot.get(n, om.amb("u"))


# ---------------------------------------------------------------------------
# substances

def _toward(f: QualValue, node: str, t1: str, t2: str) -> bool:
    if f.is_zero:
        return False
    if not f.is_finite:
        return True
    return (f.sign > 0 and node == t2) or (f.sign < 0 and node == t1)


def propagate_substances(net: Network, sol: Solution) -> None:
    """Union of substances delivered into each node by incoming flows."""
    S: Dict[str, Set[str]] = {n: set(net.seeds.get(n, ())) for n in net.nodes}
    elems = [(e.id, e.t1, e.t2, e.out) for e in net.edges.values()]
    elems += [(s.id, s.neg, s.pos, s.out) for s in net.sources.values()]
    for _ in range(len(net.nodes) + 1):
        changed = False
        for eid, t1, t2, out in elems:
            f = sol.flows.get(eid, F0)
            if t1 == t2:
                continue
            for node, other in ((t1, t2), (t2, t1)):
                if not _toward(f, node, t1, t2):
                    continue
                sub = out.get(node)
                add = set(sub) if sub is not None else S[other]
                if not add <= S[node]:
                    S[node] |= add
                    changed = True
        if not changed:
            break
    sol.substances = {n: frozenset(S[n]) for n in net.nodes}


# ---------------------------------------------------------------------------
# export

def snapshot(net: Network, sol: Optional[Solution] = None) -> dict:
    doc = {
        "nodes": list(net.nodes),
        "zero_node": net.zero_node,
        "edges": [
            {"id": e.id, "t1": e.t1, "t2": e.t2, "R": om.render(e.r)}
            for e in net.edges.values()
        ],
        "sources": [
            {"id": s.id, "neg": s.neg, "pos": s.pos, "kind": s.kind, "value": om.render(s.value)}
            for s in net.sources.values()
        ],
    }
    if sol is not None:
        doc["solution"] = {
            "F": {k: om.render(v) for k, v in sorted(sol.flows.items())},
            "E": {k: om.render(v) for k, v in sorted(sol.efforts.items())},
            "P": {k: om.render(v) for k, v in sorted(sol.powers.items())},
            "labels": {k: om.render(v) for k, v in sorted(sol.labels.items())},
            "substances": {k: sorted(v) for k, v in sorted(sol.substances.items())},
            "reports": list(sol.reports),
            "constraints": list(sol.constraint_log),
        }
    return doc


def snapshot_json(net: Network, sol: Optional[Solution] = None) -> str:
    return json.dumps(snapshot(net, sol), indent=2, sort_keys=True)
