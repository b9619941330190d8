"""Random generators shared by the tests.

``random_formula`` draws closed formulas.  ``random_program`` draws small
programs (at most three definitions besides main) by type-directed
generation: a body is grown from the formulas of its context, recursive
calls are inserted whenever the context matches a definition signature, and
attempts that get stuck are discarded.  The result is always quasi typed.
"""

from __future__ import annotations

import random
from itertools import permutations

from pilin import formulas as F
from pilin.formulas import Formula
from pilin.process import (
    Call, Case, Choice, Close, Corec, Cut, Definition, Fail, Fork, Join, Link,
    Process, Program, Rec, Select, Wait,
)
from pilin.typeck import TypingError, check_program

CONSTANTS = (F.Zero, F.Top, F.One, F.Bot)
BINARY = (F.Plus, F.With, F.Tensor, F.Par)


def random_formula(rng: random.Random, depth: int, scope: tuple[str, ...] = (),
                   fixpoint_bias: float = 0.3, constants=CONSTANTS) -> Formula:
    """A formula of nesting depth at most ``depth`` whose free variables are in ``scope``."""
    if depth <= 0:
        if scope and rng.random() < 0.5:
            return F.Var(rng.choice(scope))
        return rng.choice(constants)()
    roll = rng.random()
    if roll < fixpoint_bias:
        var = f"X{len(scope)}"
        body = random_formula(rng, depth - 1, scope + (var,), fixpoint_bias, constants)
        return rng.choice((F.Mu, F.Nu))(var, body)
    if roll < 0.85:
        return rng.choice(BINARY)(random_formula(rng, depth - 1, scope, fixpoint_bias, constants),
                                  random_formula(rng, depth - 1, scope, fixpoint_bias, constants))
    return random_formula(rng, 0, scope, fixpoint_bias, constants)


def recursive_formula(rng: random.Random, depth: int = 4) -> Formula:
    """A closed fixed point whose variable occurs in its body.

    Units are drawn mostly from 1 and bot: a 0 can only be discharged by a
    call, which makes generation from such signatures mostly fail.
    """
    units = (F.One, F.Bot, F.One, F.Bot, F.Top, F.Zero)
    while True:
        body = random_formula(rng, depth - 1, ("X",), fixpoint_bias=0.15, constants=units)
        if "X" in body.free_vars and not isinstance(body, F.Var):
            return rng.choice((F.Mu, F.Nu))("X", body)


class Stuck(Exception):
    pass


def viable(ctx: dict[str, Formula]) -> bool:
    """A cheap necessary condition for a context to have a generated body.

    Not exact: a 0 can still be passed to a call, which this rejects.
    """
    kinds = [type(f) for f in ctx.values()]
    if not kinds or F.Zero in kinds or kinds.count(F.One) > 1:
        return False
    if all(k is F.Bot for k in kinds):
        return False
    return F.Top not in kinds or len(kinds) == 1


class _Gen:
    def __init__(self, rng: random.Random, defs: dict[str, tuple[tuple[str, Formula], ...]],
                 budget: int = 300):
        self.rng = rng
        self.defs = defs
        self.counter = 0
        self.budget = budget
        self.dead: set = set()
        self.memo: dict = {}

    def unfold(self, f: Formula) -> Formula:
        # cached so that the alpha-keys of unfoldings are computed once
        if ("u", f) not in self.memo:
            self.memo["u", f] = F.unfold(f)
        return self.memo["u", f]

    def dual(self, f: Formula) -> Formula:
        if ("d", f) not in self.memo:
            self.memo["d", f] = F.dual(f)
        return self.memo["d", f]

    def fresh(self) -> str:
        self.counter += 1
        return f"c{self.counter}"

    def call(self, ctx: dict[str, Formula], root: bool = False) -> Process | None:
        if root:
            return None
        names = sorted(ctx)
        options = []
        for name, params in self.defs.items():
            if len(params) != len(names):
                continue
            for perm in permutations(names):
                if all(ctx[a] == f for a, (_, f) in zip(perm, params)):
                    options.append(Call(name, tuple(perm)))
        return self.rng.choice(options) if options else None

    def finish(self, ctx: dict[str, Formula]) -> Process | None:
        items = sorted(ctx.items())
        # a split is read off free names, so fail may only absorb at the top
        if len(items) == 1 and isinstance(items[0][1], F.Top):
            return Fail(items[0][0])
        if len(items) == 1 and isinstance(items[0][1], F.One):
            return Close(items[0][0])
        if len(items) == 2 and items[0][1] == self.dual(items[1][1]):
            return Link(items[0][0], items[1][0])
        return None

    def split_viable(self, ctx, a: str, fa: Formula, b: str, fb: Formula):
        """Split ``ctx`` in two, adding ``a: fa`` on the left and ``b: fb`` on the right."""
        for _ in range(4):
            left, right = {a: fa}, {b: fb}
            for n, f in sorted(ctx.items()):
                (left if self.rng.random() < 0.5 else right)[n] = f
            if viable(left) and viable(right):
                return left, right
        raise Stuck()

    def gen(self, ctx: dict[str, Formula], fuel: int, root: bool = False,
            retries: int = 3) -> Process:
        # names do not matter for success, so failures are remembered by formulas
        key = (tuple(sorted(f.key for f in ctx.values())), fuel, root)
        if key in self.dead:
            raise Stuck()
        for _ in range(retries):
            try:
                return self._gen(ctx, fuel, root)
            except Stuck:
                if self.budget < 0:
                    raise
        self.dead.add(key)
        raise Stuck()

    def _gen(self, ctx: dict[str, Formula], fuel: int, root: bool) -> Process:
        self.budget -= 1
        if fuel < -6 or self.budget < 0:
            raise Stuck()
        rng = self.rng
        if fuel <= 0 or rng.random() < 0.15:
            for attempt in (self.call(ctx, root), self.finish(ctx)):
                if attempt is not None:
                    return attempt
        elif rng.random() < 0.25:
            c = self.call(ctx, root)
            if c is not None:
                return c
        roll = rng.random()
        if fuel > 0 and roll < 0.12:
            return Choice(self.gen(dict(ctx), fuel - 1), self.gen(dict(ctx), fuel - 1))
        if fuel > 0 and roll < 0.2:
            ann = random_formula(rng, 2, fixpoint_bias=0.0)
            x = self.fresh()
            left, right = self.split_viable(ctx, x, ann, x, self.dual(ann))
            return Cut(x, ann, self.gen(left, fuel - 1), self.gen(right, fuel - 1))
        actionable = [x for x, f in sorted(ctx.items())
                      if not isinstance(f, (F.One, F.Zero, F.Top, F.Var))]
        if not actionable:
            done = self.call(ctx, root) or self.finish(ctx)
            if done is None:
                raise Stuck()
            return done
        x = rng.choice(actionable)
        f = ctx[x]
        rest = {k: v for k, v in ctx.items() if k != x}
        match f:
            case F.Bot():
                if not viable(rest):
                    raise Stuck()
                return Wait(x, self.gen(rest, fuel - 1))
            case F.Par(l, r):
                y = self.fresh()
                return Join(x, y, x, self.gen(dict(rest, **{y: l, x: r}), fuel - 1))
            case F.Tensor(l, r):
                y = self.fresh()
                left, right = self.split_viable(rest, y, l, x, r)
                return Fork(x, y, x, self.gen(left, fuel - 1), self.gen(right, fuel - 1))
            case F.Plus(l, r):
                tags = [t for t in (1, 2) if viable(dict(rest, **{x: (l, r)[t - 1]}))]
                if not tags:
                    raise Stuck()
                tag = rng.choice(tags)
                return Select(x, tag, x, self.gen(dict(rest, **{x: (l, r)[tag - 1]}), fuel - 1))
            case F.With(l, r):
                return Case(x, x, self.gen(dict(rest, **{x: l}), fuel - 1),
                            self.gen(dict(rest, **{x: r}), fuel - 1))
            case F.Mu():
                return Rec(x, x, self.gen(dict(rest, **{x: self.unfold(f)}), fuel - 1))
            case F.Nu():
                return Corec(x, x, self.gen(dict(rest, **{x: self.unfold(f)}), fuel - 1))
        raise Stuck()


def random_program(rng: random.Random, max_defs: int = 3, depth: int = 4,
                   fuel: int = 6, attempts: int = 5000) -> Program:
    """A quasi-typed program with a main of type 1 and up to ``max_defs`` definitions."""
    for _ in range(attempts):
        n = rng.randint(1, max_defs)
        sigs: dict[str, tuple[tuple[str, Formula], ...]] = {}
        base = recursive_formula(rng, depth)
        for i in range(n):
            s = base if i == 0 or rng.random() < 0.5 else F.dual(base)
            if rng.random() < 0.5:
                sigs[f"D{i}"] = (("x", s), ("y", F.One()))
            else:
                sigs[f"D{i}"] = (("x", s),)
        g = _Gen(rng, sigs)
        try:
            defs = {name: Definition(name, params, g.gen(dict(params), fuel, root=True))
                    for name, params in sigs.items()}
            first, params = next(iter(sigs.items()))
            s = params[0][1]
            if len(params) == 2:
                body = Cut("x", F.dual(s), g.gen({"x": F.dual(s)}, fuel), Call(first, ("x", "y")))
            else:
                body = Cut("x", s, Call(first, ("x",)), g.gen({"x": F.dual(s), "y": F.One()}, fuel))
        except Stuck:
            continue
        defs["Main"] = Definition("Main", (("y", F.One()),), body)
        prog = Program(defs, "Main")
        try:
            check_program(prog)
        except (TypingError, RecursionError):
            continue
        return prog
    raise Stuck("no program generated")


# ------------------------------------------------------------ cut trees


def random_cut_forest(rng: random.Random, members: int):
    """A random tree of ``members`` leaves joined by typed channels.

    Returns (leaves, edges): leaf ``i`` is a process whose free names are its
    channels (leaf 0 also holds the external ``out``); each edge is
    ``(name, formula, i, j)`` with ``i`` using the channel at ``formula``.
    """
    edges = []
    for j in range(1, members):
        i = rng.randrange(j)
        f = random_formula(rng, 2, fixpoint_bias=0.2)
        if rng.random() < 0.5:
            i, j2 = j, i
        else:
            j2 = j
        edges.append((f"k{j}", f, i, j2))
    names: dict[int, list[str]] = {m: [] for m in range(members)}
    names[0].append("out")
    for name, _, i, j in edges:
        names[i].append(name)
        names[j].append(name)
    leaves = {}
    for m, ns in names.items():
        p: Process = Close(ns[-1])
        for n in reversed(ns[:-1]):
            p = Wait(n, p)
        leaves[m] = p
    return leaves, edges


def cut_terms(leaves, edges, rng: random.Random | None = None, limit: int | None = None):
    """Cut terms assembling the tree, by splitting at edges in every order.

    With ``rng`` the enumeration is a random sample of at most ``limit``.
    """
    def build(group: frozenset) -> list[Process]:
        inner = [e for e in edges if e[2] in group and e[3] in group]
        if not inner:
            (m,) = group
            return [leaves[m]]
        out = []
        choices = inner if rng is None else [rng.choice(inner)]
        for name, f, i, j in choices:
            side = _component(i, group, [e for e in inner if e[0] != name])
            other = group - side
            for lt in build(side):
                for rt in build(other):
                    out.append(Cut(name, f, lt, rt))
                    out.append(Cut(name, F.dual(f), rt, lt))
        return out if rng is None else [rng.choice(out)]

    everything = frozenset(leaves)
    if rng is None:
        return build(everything)
    return [build(everything)[0] for _ in range(limit or 1)]


def _component(start: int, group: frozenset, edges) -> frozenset:
    seen = {start}
    todo = [start]
    while todo:
        m = todo.pop()
        for _, _, i, j in edges:
            for a, b in ((i, j), (j, i)):
                if a == m and b in group and b not in seen:
                    seen.add(b)
                    todo.append(b)
    return frozenset(seen)
