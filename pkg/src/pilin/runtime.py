"""Execution of programs on a flat "soup" of processes.

Nested parallel compositions are collapsed into a multiset of sequential
members connected by live channels, which makes the structural rearrangements
of restrictions (commutativity, associativity) invisible.  A member is a
process whose head is an action, a link or a choice; cuts are flattened and
calls unfolded as soon as they surface.

Every member carries the formulas of its free names, as seen from its side.
They orient the cut annotations when a soup is folded back into a process,
which is how subject reduction is checked.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

from . import formulas as F
from .formulas import Formula
from .process import (
    Call, Case, Choice, Close, Corec, Cut, Fail, Fork, Join, Link, Process,
    Program, Rec, Select, Wait, fresh_name, rename, subprocesses, unfold_call,
)
from .rank import RankTable, program_ranks, rank_of

MAX_UNFOLDINGS = 1000   # consecutive call unfoldings before giving up


class NoRedex(Exception):
    pass


class RuntimeFault(Exception):
    """The soup broke an invariant that typing guarantees."""


@dataclass(frozen=True, order=True)
class Member:
    process: Process = field(compare=False)
    context: tuple[tuple[str, Formula], ...] = field(compare=False)
    key: str = ""

    @staticmethod
    def make(p: Process, ctx: Mapping[str, Formula]) -> Member:
        context = tuple(sorted((x, f) for x, f in ctx.items() if x in p.fn))
        return Member(p, context, f"{p} :: " + ", ".join(f"{x}: {f}" for x, f in context))

    def formula(self, x: str) -> Formula:
        for y, f in self.context:
            if y == x:
                return f
        raise KeyError(x)

    @property
    def ctx(self) -> dict[str, Formula]:
        return dict(self.context)

    def __str__(self) -> str:
        return str(self.process)


@dataclass(frozen=True)
class Channel:
    name: str
    formula: Formula            # the positive one of the two dual formulas
    index: int                  # creation order; compare=True keeps soups exact


@dataclass(frozen=True)
class Soup:
    members: tuple[Member, ...]
    channels: tuple[Channel, ...]
    external: str
    next_index: int = field(default=0, compare=False)

    def __str__(self) -> str:
        chans = ", ".join(f"{c.name}#{c.index}: {c.formula}" for c in self.channels)
        body = " | ".join(str(m) for m in self.members)
        return f"[{chans}] {body}"

    @property
    def size(self) -> int:
        return len(self.members)

    def channel(self, name: str) -> Channel:
        for c in self.channels:
            if c.name == name:
                return c
        raise KeyError(name)

    def holders(self, name: str) -> list[int]:
        return [i for i, m in enumerate(self.members) if name in m.process.fn]

    @property
    def terminated(self) -> bool:
        return (not self.channels and len(self.members) == 1
                and self.members[0].process == Close(self.external))


def _positive(f: Formula) -> Formula:
    return f if f.positive else F.dual(f)


def _all_names(p: Process) -> set[str]:
    out: set[str] = set()
    for q in subprocesses(p):
        out |= q.fn
        match q:
            case Join(_, y, z, _) | Fork(_, y, z, _, _):
                out |= {y, z}
            case Select(y=y) | Case(y=y) | Rec(y=y) | Corec(y=y):
                out.add(y)
            case Cut(x=x):
                out.add(x)
    return out


def _canonical_link(p: Process) -> Process:
    if isinstance(p, Link) and p.y < p.x:
        return Link(p.y, p.x, loc=p.loc)
    return p


class _Normalizer:
    """Flattens unguarded cuts and unfolds unguarded calls."""

    def __init__(self, prog: Program | None, used: set[str], live: set[str]):
        self.prog = prog
        self.used = used        # every name in sight; fresh names avoid them
        self.live = live        # channel names in use; a cut may not reuse one
        self.channels: list[tuple[str, Formula]] = []

    def fresh(self, base: str) -> str:
        name = fresh_name(base, self.used)
        self.used.add(name)
        self.live.add(name)
        return name

    def members(self, p: Process, ctx: Mapping[str, Formula]) -> list[Member]:
        out: list[Member] = []
        todo = [(p, dict(ctx), 0)]
        while todo:
            q, g, depth = todo.pop()
            match q:
                case Cut(x, ann, left, right):
                    name = x
                    if x in self.live:
                        name = self.fresh(x)
                        left, right = rename(left, {x: name}), rename(right, {x: name})
                    self.used.add(name)
                    self.live.add(name)
                    self.channels.append((name, _positive(ann)))
                    todo.append((right, dict(g, **{name: F.dual(ann)}), 0))
                    todo.append((left, dict(g, **{name: ann}), 0))
                case Call(name, args):
                    if self.prog is None:
                        raise RuntimeFault(f"cannot unfold {q} without a program")
                    if depth >= MAX_UNFOLDINGS:
                        raise RuntimeFault(f"{name} keeps unfolding into calls")
                    body = unfold_call(self.prog, name, args)
                    self.used |= _all_names(body)
                    todo.append((body, g, depth + 1))
                case _:
                    out.append(Member.make(_canonical_link(q), g))
        return out


def _assemble(members: list[Member], channels: list[Channel], external: str, next_index: int) -> Soup:
    return Soup(tuple(sorted(members)), tuple(sorted(channels, key=lambda c: c.index)),
                external, next_index)


def to_soup(p: Process, context: Mapping[str, Formula], prog: Program | None = None) -> Soup:
    """The soup of ``p``, typed by ``context`` (one external channel).

    Channel creation indices of the initial soup follow channel names, so
    that any rearrangement of the same cuts gives the same soup.
    """
    if len(context) != 1:
        raise ValueError("a soup has exactly one external channel")
    (external,) = context
    norm = _Normalizer(prog, _all_names(p) | {external}, {external})
    members = norm.members(p, context)
    channels = [Channel(n, f, i) for i, (n, f) in enumerate(sorted(norm.channels, key=lambda c: c[0]))]
    return _assemble(members, channels, external, len(channels))


def main_soup(prog: Program) -> Soup:
    d = prog.main_def
    if d.arity != 1:
        raise ValueError("main must have exactly one parameter")
    return to_soup(d.body, dict(d.params), prog)


# ----------------------------------------------------------------- redexes


@dataclass(frozen=True)
class Redex:
    kind: str                   # link, unit, pair, sum, rec, choice
    channel: str | None = None  # for communications
    member: int | None = None   # for choices: index into soup.members

    def __str__(self) -> str:
        return f"{self.kind}@{self.channel if self.channel is not None else self.member}"


def _action(p: Process, c: str) -> str | None:
    match p:
        case Link(x, y) if c in (x, y):
            return "link"
        case Close(x) | Wait(x, _) if x == c:
            return "unit"
        case Fork(x=x) | Join(x=x) if x == c:
            return "pair"
        case Select(x=x) | Case(x=x) if x == c:
            return "sum"
        case Rec(x=x) | Corec(x=x) if x == c:
            return "rec"
    return None


_DUAL_HEADS = {"unit": (Close, Wait), "pair": (Fork, Join), "sum": (Select, Case), "rec": (Rec, Corec)}


def redexes(s: Soup) -> list[Redex]:
    """Enabled reductions: communications by channel age, then choices."""
    out = []
    for c in s.channels:
        holders = s.holders(c.name)
        if len(holders) != 2:
            raise RuntimeFault(f"channel {c.name} is held by {len(holders)} member(s)")
        a, b = (s.members[i].process for i in holders)
        ka, kb = _action(a, c.name), _action(b, c.name)
        if "link" in (ka, kb):
            out.append(Redex("link", c.name))
        elif ka is not None and ka == kb:
            pos, neg = _DUAL_HEADS[ka]
            if {type(a), type(b)} == {pos, neg}:
                out.append(Redex(ka, c.name))
    out += [Redex("choice", member=i) for i, m in enumerate(s.members)
            if isinstance(m.process, Choice)]
    return out


def apply(s: Soup, r: Redex, side: str | None = None, prog: Program | None = None) -> Soup:
    """Perform ``r``; choices need ``side`` ("left" or "right")."""
    members = list(s.members)
    channels = {c.name: c for c in s.channels}
    used = {c.name for c in s.channels} | {s.external}
    for m in members:
        used |= _all_names(m.process)
    norm = _Normalizer(prog, used, {c.name for c in s.channels} | {s.external})

    if r.kind == "choice":
        m = members.pop(r.member)
        if not isinstance(m.process, Choice) or side not in ("left", "right"):
            raise RuntimeFault(f"bad choice resolution {r} / {side}")
        branch = m.process.left if side == "left" else m.process.right
        new = norm.members(branch, m.ctx)
    else:
        c = r.channel
        i, j = s.holders(c)
        a, b = members[i], members[j]
        for k in sorted((i, j), reverse=True):
            members.pop(k)
        del channels[c]
        new = _communicate(r.kind, c, a, b, norm)
    idx = s.next_index
    for name, f in norm.channels:
        channels[name] = Channel(name, f, idx)
        idx += 1
    return _assemble(members + new, list(channels.values()), s.external, idx)


def _communicate(kind: str, c: str, a: Member, b: Member, norm: _Normalizer) -> list[Member]:
    pa, pb = a.process, b.process
    if kind == "link":
        if not (isinstance(pa, Link) and c in (pa.x, pa.y)):
            a, b, pa, pb = b, a, pb, pa
        other = pa.y if pa.x == c else pa.x
        ctx = b.ctx
        ctx[other] = ctx.pop(c)
        return norm.members(rename(pb, {c: other}), ctx)
    pos, _ = _DUAL_HEADS[kind]
    if not isinstance(pa, pos):
        a, b, pa, pb = b, a, pb, pa
    ga, gb = a.ctx, b.ctx
    fa = ga.pop(c)
    gb.pop(c)
    match kind:
        case "unit":
            return norm.members(pb.body, gb)
        case "pair":
            l, r = F.formula_steps(fa)
            n1, n2 = norm.fresh(c), norm.fresh(c)
            norm.channels += [(n1, _positive(l)), (n2, _positive(r))]
            left = norm.members(rename(pa.left, {pa.y: n1}), dict(ga, **{n1: l}))
            right = norm.members(rename(pa.right, {pa.z: n2}), dict(ga, **{n2: r}))
            recv = norm.members(rename(pb.body, {pb.y: n1, pb.z: n2}),
                                dict(gb, **{n1: F.dual(l), n2: F.dual(r)}))
            return left + right + recv
        case "sum":
            chosen = F.formula_steps(fa)[pa.tag - 1]
            n = norm.fresh(c)
            norm.channels.append((n, _positive(chosen)))
            branch = pb.left if pa.tag == 1 else pb.right
            return (norm.members(rename(pa.body, {pa.y: n}), dict(ga, **{n: chosen}))
                    + norm.members(rename(branch, {pb.y: n}), dict(gb, **{n: F.dual(chosen)})))
        case "rec":
            (step,) = F.formula_steps(fa)
            n = norm.fresh(c)
            norm.channels.append((n, _positive(step)))
            return (norm.members(rename(pa.body, {pa.y: n}), dict(ga, **{n: step}))
                    + norm.members(rename(pb.body, {pb.y: n}), dict(gb, **{n: F.dual(step)})))
    raise RuntimeFault(kind)


# ---------------------------------------------------------------- policies


def fair_choice(left: Process, right: Process, ranks: RankTable) -> str:
    """The left branch iff its rank is not larger (ties go left)."""
    return "left" if rank_of(ranks, left) <= rank_of(ranks, right) else "right"


@dataclass(frozen=True)
class MinRank:
    def chooser(self, ranks: RankTable):
        return lambda l, r: fair_choice(l, r, ranks)


@dataclass(frozen=True)
class Random:
    """Uniform choices for the first ``patience`` resolutions, then MinRank."""
    seed: int
    patience: int = 16

    def chooser(self, ranks: RankTable):
        rng = random.Random(self.seed)
        count = [0]

        def decide(l, r):
            count[0] += 1
            if count[0] > self.patience:
                return fair_choice(l, r, ranks)
            return rng.choice(("left", "right"))
        return decide


@dataclass(frozen=True)
class Script:
    """Replays ``decisions``; once they run out it falls back to MinRank."""
    decisions: tuple[str, ...] = ()

    def chooser(self, ranks: RankTable):
        it = iter(self.decisions)
        return lambda l, r: next(it, None) or fair_choice(l, r, ranks)


Policy = MinRank | Random | Script


# ------------------------------------------------------------------ traces


@dataclass(frozen=True)
class TraceEntry:
    rule: str
    subject: str
    size: int

    def to_json(self) -> dict:
        return {"rule": self.rule, "subject": self.subject, "size": self.size}


@dataclass
class Trace:
    entries: list[TraceEntry]
    outcome: str                # Terminated, StuckUnexpected, FuelExhausted, Failed
    final: Soup
    decisions: list[str] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.entries)

    @property
    def max_size(self) -> int:
        return max([e.size for e in self.entries] + [self.final.size])

    def script(self) -> Script:
        return Script(tuple(self.decisions))

    def jsonl(self) -> str:
        return "\n".join(json.dumps(e.to_json()) for e in self.entries)


RULE_NAMES = {"link": "r-link", "unit": "r-unit", "pair": "r-pair", "sum": "r-sum",
              "rec": "r-rec", "choice": "r-choice"}


def step(s: Soup, decide, prog: Program | None = None) -> tuple[Soup, TraceEntry, str | None]:
    """One reduction of the first enabled redex; raises NoRedex if stuck."""
    rs = redexes(s)
    if not rs:
        raise NoRedex(str(s))
    r = rs[0]
    side = None
    if r.kind == "choice":
        ch = s.members[r.member].process
        side = decide(ch.left, ch.right)
    t = apply(s, r, side, prog)
    return t, TraceEntry(RULE_NAMES[r.kind], side if side else r.channel, t.size), side


def _outcome(s: Soup) -> str:
    if s.terminated:
        return "Terminated"
    if any(isinstance(m.process, Fail) for m in s.members):
        return "Failed"
    return "StuckUnexpected"


def iterate(s: Soup, policy: Policy, prog: Program, ranks: RankTable,
            fuel: int) -> Iterator[tuple[Soup, TraceEntry | None]]:
    """The soups of a run, starting with ``s`` itself."""
    decide = policy.chooser(ranks)
    yield s, None
    for _ in range(fuel):
        try:
            s, entry, _ = step(s, decide, prog)
        except NoRedex:
            return
        yield s, entry


def run_soup(s: Soup, prog: Program, policy: Policy = MinRank(), fuel: int = 10_000,
             ranks: RankTable | None = None, observe=None) -> Trace:
    ranks = ranks or program_ranks(prog)
    decide = policy.chooser(ranks)
    entries: list[TraceEntry] = []
    decisions: list[str] = []
    for _ in range(fuel):
        try:
            s, entry, side = step(s, decide, prog)
        except NoRedex:
            return Trace(entries, _outcome(s), s, decisions)
        entries.append(entry)
        if side:
            decisions.append(side)
        if observe is not None:
            observe(len(entries), s)
    outcome = "FuelExhausted" if redexes(s) else _outcome(s)
    return Trace(entries, outcome, s, decisions)


def run(prog: Program, policy: Policy = MinRank(), fuel: int = 10_000,
        ranks: RankTable | None = None, observe=None) -> Trace:
    """Run ``main`` until it is stuck or the fuel (number of steps) runs out."""
    return run_soup(main_soup(prog), prog, policy, fuel, ranks, observe)


def probe_termination(s: Soup, prog: Program, fuel: int = 10_000,
                      ranks: RankTable | None = None) -> bool:
    """Whether MinRank scheduling from ``s`` terminates within ``fuel`` steps."""
    return run_soup(s, prog, MinRank(), fuel, ranks).outcome == "Terminated"


# ---------------------------------------------------------------- refolding


def refold(s: Soup) -> Process:
    """A process whose soup is ``s``: the members joined by nested cuts."""
    holders = {c.name: s.holders(c.name) for c in s.channels}
    start = [i for i, m in enumerate(s.members) if s.external in m.process.fn]
    if len(start) != 1:
        raise RuntimeFault(f"external channel held by {len(start)} member(s)")
    seen: set[int] = set()

    def fold(i: int, via: str | None) -> Process:
        seen.add(i)
        m = s.members[i]
        p = m.process
        for c in sorted((c for c in s.channels if c.name in m.process.fn and c.name != via),
                        key=lambda c: c.index):
            (other,) = [j for j in holders[c.name] if j != i]
            if other in seen:
                raise RuntimeFault(f"channels form a cycle at {c.name}")
            p = Cut(c.name, m.formula(c.name), p, fold(other, c.name))
        return p

    p = fold(start[0], None)
    if len(seen) != len(s.members):
        raise RuntimeFault("soup is not connected")
    return p


def _scripted(ranks: RankTable, decisions: Sequence[str]):
    """Decide the k-th choice of a run by ``decisions[k]``, then by MinRank."""
    def decide(k: int, left: Process, right: Process) -> str:
        return decisions[k] if k < len(decisions) else fair_choice(left, right, ranks)
    return decide


def schedules(s: Soup, prog: Program, ranks: RankTable, depth: int,
              decisions: Sequence[str] = ()) -> Iterator[tuple[int, ...]]:
    """Every sequence of ``depth`` redex picks (shorter if the run stops).

    A pick is an index into :func:`redexes` of the current soup, the format
    consumed by :func:`replay`.  Choices follow ``decisions`` and then MinRank.
    """
    decide = _scripted(ranks, decisions)

    def go(s: Soup, prefix: tuple[int, ...], made: int) -> Iterator[tuple[int, ...]]:
        rs = redexes(s)
        if len(prefix) == depth or not rs:
            yield prefix
            return
        for k, r in enumerate(rs):
            side = None
            if r.kind == "choice":
                ch = s.members[r.member].process
                side = decide(made, ch.left, ch.right)
            yield from go(apply(s, r, side, prog), prefix + (k,), made + (side is not None))

    yield from go(s, (), 0)


def replay(s: Soup, prog: Program, ranks: RankTable, picks: Sequence[int],
           fuel: int = 10_000, rng: random.Random | None = None,
           decisions: Sequence[str] = ()) -> Trace:
    """Adversarial run: ``picks[k]`` selects among the enabled redexes at step k.

    After the picks run out a seeded random redex order takes over (or the
    first redex when ``rng`` is None).  Choices follow ``decisions`` and are
    resolved by MinRank once those run out.
    """
    decide = _scripted(ranks, decisions)
    entries: list[TraceEntry] = []
    made: list[str] = []
    for k in range(fuel):
        rs = redexes(s)
        if not rs:
            return Trace(entries, _outcome(s), s, made)
        if k < len(picks):
            r = rs[picks[k]]
        else:
            r = rng.choice(rs) if rng else rs[0]
        side = None
        if r.kind == "choice":
            ch = s.members[r.member].process
            side = decide(len(made), ch.left, ch.right)
            made.append(side)
        s = apply(s, r, side, prog)
        entries.append(TraceEntry(RULE_NAMES[r.kind], side or r.channel, s.size))
    return Trace(entries, "FuelExhausted" if redexes(s) else _outcome(s), s, made)
