"""Validity of circular derivations restricted to fair branches.

A derivation is well typed when every fair infinite branch carries a thread
that progresses infinitely often and whose least infinitely recurring
formula is a greatest fixed point.  Three automata over premise edges
describe the problem: M accepts every infinite branch, U the unfair ones
(those passing infinitely often through a choice of finite rank) and N the
valid ones.  The decision procedure checks the inclusion of L(M) minus L(U)
in L(N) with a Ramsey-based argument on thread summaries:

* a fair branch eventually stays in the graph G' obtained by deleting the
  finitely ranked choice nodes, so it suffices to look at cycles of G';
* a cycle through node ``s`` is summarized by the set of triples
  ``(x, y, p)``: some thread enters the cycle at slot ``x`` of ``s``, leaves
  it at slot ``y`` of ``s`` and the least priority it emits is ``p``;
* a branch that eventually repeats cycles whose summary is ``e`` with
  ``e ; e = e`` is valid iff ``e`` contains some ``(x, x, p)`` with ``p``
  even.  By Ramsey's theorem every fair branch decomposes that way, so
  checking all idempotent summaries of every cycle base decides inclusion.

:func:`oracle_check` is a brute-force alternative used for cross-checking:
it enumerates short cycles and searches the unrolled thread graph directly
with :func:`min_formula`, without priorities or summaries.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field

from . import formulas as F
from .formulas import Closure, min_formula, priority, subformula_leq
from .rank import INF, RankTable, rank_of
from .graphs import strongly_connected
from .typeck import ProofGraph

DEFAULT_SUMMARY_BUDGET = 200_000

EdgeId = tuple[int, int]        # (source node, premise index)


class ResourceLimit(Exception):
    """The inclusion check exceeded its budget; no verdict was reached."""


class UndefinedMinimum(AssertionError):
    """A thread cycle recurs on formulas without a subformula-least element."""


@dataclass(frozen=True)
class Lasso:
    """The ultimately periodic branch ``prefix . cycle . cycle ...``."""
    prefix: tuple[EdgeId, ...]
    cycle: tuple[EdgeId, ...]

    def nodes(self, g: ProofGraph) -> tuple[list[int], list[int]]:
        """Nodes visited by the prefix and by one turn of the cycle."""
        start = g.root
        pre = [start]
        for s, k in self.prefix:
            assert s == pre[-1], "prefix does not replay"
            pre.append(g.nodes[s].premises[k].target)
        cyc = [pre[-1]]
        for s, k in self.cycle:
            assert s == cyc[-1], "cycle does not replay"
            cyc.append(g.nodes[s].premises[k].target)
        assert cyc[-1] == cyc[0], "cycle does not return"
        return pre, cyc[:-1]

    def to_json(self) -> dict:
        return {"prefix": [list(e) for e in self.prefix], "cycle": [list(e) for e in self.cycle]}


@dataclass(frozen=True)
class Verdict:
    well_typed: bool
    lasso: Lasso | None = None
    explanation: str = ""
    bounded: int | None = None      # set by the oracle: the enumeration bound

    def __str__(self) -> str:
        tag = f" (bounded B={self.bounded})" if self.bounded is not None else ""
        if self.well_typed:
            return f"well typed{tag}"
        return f"invalid{tag}: {self.explanation}"


WELL_TYPED = Verdict(True)


# ---------------------------------------------------------------- automata


@dataclass
class BuchiAutomaton:
    states: list
    initial: list
    transitions: list               # (source, letter, target)
    accepting: set = field(default_factory=set)


@dataclass
class ParityAutomaton:
    states: list
    initial: list
    transitions: list               # (source, letter, target, priority)


WAIT = "wait"                       # N's layer before a thread is chosen


def _edge_ids(g: ProofGraph, nodes) -> list[tuple[EdgeId, int]]:
    out = []
    for s in nodes:
        for k, e in enumerate(g.nodes[s].premises):
            out.append(((s, k), e.target))
    return out


def build_M(g: ProofGraph) -> BuchiAutomaton:
    nodes = g.reachable()
    trans = [(s, eid, t) for eid, t in _edge_ids(g, nodes) for s in (eid[0],)]
    return BuchiAutomaton(sorted(nodes), [g.root], trans, set(nodes))


def finite_choice_nodes(g: ProofGraph, ranks: RankTable) -> set[int]:
    """Choice nodes whose process has finite rank (the unfair states)."""
    return {n.id for n in g.nodes
            if n.rule == "choice" and rank_of(ranks, n.process) != INF}


def build_U(g: ProofGraph, ranks: RankTable) -> BuchiAutomaton:
    m = build_M(g)
    return BuchiAutomaton(m.states, m.initial, m.transitions,
                          finite_choice_nodes(g, ranks) & set(m.states))


def _thread_steps(g: ProofGraph, c: Closure, src: int, k: int):
    """Thread transitions along edge (src, k): (slot, slot', priority)."""
    e = g.nodes[src].premises[k]
    target = g.nodes[e.target]
    out = []
    for p, parent, progressed in e.ancestry:
        f = target.type_of(p).formula
        out.append((parent, p, priority(c, f) if progressed else c.neutral))
    return out


def build_N(g: ProofGraph, c: Closure | None = None) -> ParityAutomaton:
    c = c or g.closure
    nodes = g.reachable()
    states: list = [(WAIT, n) for n in sorted(nodes)]
    states += [(n, x) for n in sorted(nodes) for x in g.nodes[n].names]
    trans = []
    for (s, k), t in _edge_ids(g, nodes):
        eid = (s, k)
        trans.append(((WAIT, s), eid, (WAIT, t), c.neutral))
        for x in g.nodes[t].names:
            trans.append(((WAIT, s), eid, (t, x), c.neutral))
        for parent, child, prio in _thread_steps(g, c, s, k):
            trans.append(((s, parent), eid, (t, child), prio))
    return ParityAutomaton(states, [(WAIT, g.root)], trans)


# ---------------------------------------------------------------- checking


def fair_subgraph(g: ProofGraph, ranks: RankTable) -> dict[int, list[tuple[EdgeId, int]]]:
    """Reachable nodes other than finite-rank choices, with their edges."""
    bad = finite_choice_nodes(g, ranks)
    keep = [n for n in g.reachable() if n not in bad]
    kept = set(keep)
    return {n: [(eid, t) for eid, t in _edge_ids(g, [n]) if t in kept] for n in keep}


def _compose(a: frozenset, b: frozenset) -> frozenset:
    out = set()
    for x, y, p in a:
        for y2, z, q in b:
            if y == y2:
                out.add((x, z, min(p, q)))
    return frozenset(out)


def _shortest_prefix(g: ProofGraph, target: int) -> tuple[EdgeId, ...]:
    prev: dict[int, tuple[int, EdgeId] | None] = {g.root: None}
    queue = deque([g.root])
    while queue:
        n = queue.popleft()
        if n == target:
            break
        for k, e in enumerate(g.nodes[n].premises):
            if e.target not in prev:
                prev[e.target] = (n, (n, k))
                queue.append(e.target)
    path = []
    n = target
    while prev[n] is not None:
        n, eid = prev[n]
        path.append(eid)
    return tuple(reversed(path))


def _explain(g: ProofGraph, cycle: tuple[EdgeId, ...]) -> str:
    rules = [g.nodes[s].rule for s, _ in cycle]
    unfolds = sorted({str(g.nodes[s].type_of(x).formula)
                      for s, _ in cycle for x in _principal(g, s)
                      if g.nodes[s].rule in ("mu", "nu")})
    text = f"fair cycle of {len(cycle)} step(s) through rules {', '.join(rules)} has no valid thread"
    if unfolds:
        text += f"; it unfolds {', '.join(unfolds)}"
    return text


def _principal(g: ProofGraph, s: int) -> list[str]:
    n = g.nodes[s]
    return [x for x in n.names if getattr(n.process, "x", None) == x]


def check_validity(g: ProofGraph, ranks: RankTable, c: Closure | None = None,
                   budget: int = DEFAULT_SUMMARY_BUDGET) -> Verdict:
    """Decide whether every fair infinite branch of ``g`` is valid."""
    c = c or g.closure
    sub = fair_subgraph(g, ranks)
    succ = lambda n: [t for _, t in sub[n]]
    spent = 0
    for comp in strongly_connected(sorted(sub), succ):
        members = set(comp)
        if len(comp) == 1 and comp[0] not in succ(comp[0]):
            continue
        # Every cycle of the derivation graph goes through a back-edge, so
        # the targets of back-edges are a sufficient set of cycle bases.
        bases = sorted({t for n in comp for (s, k), t in sub[n]
                        if t in members and g.nodes[s].premises[k].back})
        if not bases:
            bases = comp
        for base in bases:
            reached: dict[int, dict[frozenset, tuple[EdgeId, ...]]] = {n: {} for n in comp}
            queue: deque = deque()

            def add(node, summary, path):
                nonlocal spent
                if summary in reached[node]:
                    return
                reached[node][summary] = path
                spent += 1
                if spent > budget:
                    raise ResourceLimit(f"more than {budget} thread summaries")
                if node != base:
                    queue.append((node, summary))

            for eid, t in sub[base]:
                if t in members:
                    add(t, frozenset(_thread_steps(g, c, *eid)), (eid,))
            while queue:
                n, summary = queue.popleft()
                path = reached[n][summary]
                for eid, t in sub[n]:
                    if t in members:
                        add(t, _compose(summary, frozenset(_thread_steps(g, c, *eid))), path + (eid,))
            loops = dict(reached[base])
            # Close the cycle summaries under composition.
            todo = list(loops)
            while todo:
                a = todo.pop()
                for b in list(loops):
                    for left, right in ((a, b), (b, a)):
                        ab = _compose(left, right)
                        if ab not in loops:
                            loops[ab] = loops[left] + loops[right]
                            spent += 1
                            if spent > budget:
                                raise ResourceLimit(f"more than {budget} thread summaries")
                            todo.append(ab)
            for e, path in sorted(loops.items(), key=lambda kv: (len(kv[1]), kv[1])):
                if _compose(e, e) != e:
                    continue
                if not any(x == y and p % 2 == 0 for x, y, p in e):
                    lasso = Lasso(_shortest_prefix(g, base), path)
                    return Verdict(False, lasso, _explain(g, path))
    return WELL_TYPED


# ------------------------------------------------------------------ oracle


def _thread_graph(g: ProofGraph, cycle: tuple[EdgeId, ...]):
    """Slots of one turn of ``cycle`` and the ancestry steps between them."""
    nodes = [s for s, _ in cycle]
    L = len(cycle)
    vertices = [(i, x) for i in range(L) for x in g.nodes[nodes[i]].names]
    succ: dict = {v: [] for v in vertices}
    for i, (s, k) in enumerate(cycle):
        e = g.nodes[s].premises[k]
        j = (i + 1) % L
        for p, parent, progressed in e.ancestry:
            succ[(i, parent)].append(((j, p), progressed))
    formula = {(i, x): g.nodes[nodes[i]].type_of(x).formula for i, x in vertices}
    return vertices, succ, formula


def has_valid_thread(g: ProofGraph, cycle: tuple[EdgeId, ...]) -> bool:
    """Whether ``cycle`` repeated forever carries a progressing nu-thread.

    Some thread does iff, for a greatest fixed point ``m`` occurring on the
    cycle, the slots whose formula contains ``m`` as a subformula include a
    strongly connected piece that visits ``m`` and takes a step inside.
    """
    vertices, succ, formula = _thread_graph(g, cycle)
    candidates = {formula[v] for v in vertices if isinstance(formula[v], F.Nu)}
    for m in sorted(candidates, key=str):
        keep = [v for v in vertices if subformula_leq(m, formula[v])]
        kept = set(keep)
        inner = lambda v: [w for w, _ in succ[v] if w in kept]
        for comp in strongly_connected(keep, inner):
            cs = set(comp)
            if not any(formula[v] == m for v in comp):
                continue
            if any(prog and w in cs for v in comp for w, prog in succ[v]):
                return True
    return False


def _assert_min_defined(g: ProofGraph, cycle: tuple[EdgeId, ...]) -> None:
    vertices, succ, formula = _thread_graph(g, cycle)
    for comp in strongly_connected(vertices, lambda v: [w for w, _ in succ[v]]):
        cs = set(comp)
        if len(comp) == 1 and not any(w in cs for w, _ in succ[comp[0]]):
            continue
        if min_formula(formula[v] for v in comp) is None:
            raise UndefinedMinimum(f"thread cycle without least formula on {cycle}")


def oracle_check(g: ProofGraph, ranks: RankTable, c: Closure | None = None,
                 bound: int = 8) -> Verdict:
    """Bounded brute force: every fair cycle of length at most ``bound``."""
    if bound < 1:
        raise ValueError("bound must be at least 1")
    sub = fair_subgraph(g, ranks)
    for start in sorted(sub):
        stack = [(start, ())]
        while stack:
            n, path = stack.pop()
            grow = []
            for eid, t in sub[n]:
                walk = path + (eid,)
                if t == start:
                    _assert_min_defined(g, walk)
                    if not has_valid_thread(g, walk):
                        return Verdict(False, Lasso(_shortest_prefix(g, start), walk),
                                       _explain(g, walk), bounded=bound)
                # Walks are rooted at their least node, so each rotation
                # class of cycles is enumerated from one start only.
                if len(walk) < bound and t >= start:
                    grow.append((t, walk))
            stack.extend(reversed(grow))
    return Verdict(True, bounded=bound)


# ------------------------------------------------------------------ export


def _state_name(s) -> str:
    if isinstance(s, tuple):
        a, b = s
        return f"{a}:{b}"
    return str(s)


def automata_json(g: ProofGraph, ranks: RankTable, c: Closure | None = None) -> dict:
    """M, U and N as plain data; letters are ``"source.index"`` edge names."""
    c = c or g.closure
    m, u, n = build_M(g), build_U(g, ranks), build_N(g, c)
    letter = lambda e: f"{e[0]}.{e[1]}"

    def buchi(a: BuchiAutomaton) -> dict:
        return {
            "acceptance": "buchi",
            "states": [str(s) for s in a.states],
            "initial": [str(s) for s in a.initial],
            "accepting": sorted(str(s) for s in a.accepting),
            "transitions": [[str(s), letter(e), str(t)] for s, e, t in a.transitions],
        }

    return {
        "M": buchi(m),
        "U": buchi(u),
        "N": {
            "acceptance": "min-parity-even",
            "states": [_state_name(s) for s in n.states],
            "initial": [_state_name(s) for s in n.initial],
            "transitions": [[_state_name(s), letter(e), _state_name(t), p]
                            for s, e, t, p in n.transitions],
            "priorities": {str(f): priority(c, f) for f in c.formulas if F.is_fixpoint(f)},
            "neutral": c.neutral,
        },
    }


def _hoa(name: str, states: list, initial: list, transitions: list, letters: list,
         acceptance: str, acc_name: str, label) -> str:
    idx = {s: i for i, s in enumerate(states)}
    ap = {e: i for i, e in enumerate(letters)}
    nbits = max(1, (len(letters) - 1).bit_length())
    lines = ["HOA: v1", f'name: "{name}"', f"States: {len(states)}"]
    for s in initial:
        lines.append(f"Start: {idx[s]}")
    lines.append(f"AP: {nbits} " + " ".join(f'"b{i}"' for i in range(nbits)))
    lines += [f"acc-name: {acc_name}", f"Acceptance: {acceptance}", "--BODY--"]

    def code(e) -> str:
        v = ap[e]
        return " & ".join(("" if v >> i & 1 else "!") + str(i) for i in range(nbits))

    by_src: dict = {s: [] for s in states}
    for t in transitions:
        by_src[t[0]].append(t)
    for s in states:
        lines.append(f"State: {idx[s]} \"{_state_name(s)}\"")
        for t in by_src[s]:
            lines.append(f"  [{code(t[1])}] {idx[t[2]]}{label(t)}")
    lines.append("--END--")
    return "\n".join(lines)


def automata_hoa(g: ProofGraph, ranks: RankTable, c: Closure | None = None) -> str:
    """M, U and N in the HOA text format, edges binary-encoded as letters.

    Acceptance is transition-based: M and U mark transitions leaving an
    accepting state, N carries its priorities as acceptance sets.
    """
    c = c or g.closure
    m, u, n = build_M(g), build_U(g, ranks), build_N(g, c)
    letters = sorted({e for _, e, _ in m.transitions})
    out = []
    for name, a in (("M", m), ("U", u)):
        out.append(_hoa(name, a.states, a.initial, a.transitions, letters, "Inf(0)", "Buchi",
                        lambda t, a=a: " {0}" if t[0] in a.accepting else ""))
    prios = sorted({t[3] for t in n.transitions}) or [c.neutral]
    top = max(prios)
    # min-even parity over sets 0..top
    cond = _parity_condition(top)
    out.append(_hoa("N", n.states, n.initial, n.transitions, letters, f"{top + 1} {cond}",
                    f"parity min even {top + 1}", lambda t: f" {{{t[3]}}}"))
    return "\n".join(out) + "\n"


def _parity_condition(top: int) -> str:
    def go(i: int) -> str:
        if i == top:
            return f"Inf({i})" if i % 2 == 0 else f"Fin({i})"
        if i % 2 == 0:
            return f"Inf({i}) | {go(i + 1)}"
        return f"Fin({i}) & ({go(i + 1)})"
    return go(0)


def automata_json_text(g: ProofGraph, ranks: RankTable) -> str:
    return json.dumps(automata_json(g, ranks), indent=2, ensure_ascii=False)
