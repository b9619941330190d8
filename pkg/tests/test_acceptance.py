"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import random
import time
from itertools import combinations, product

import pytest

from pilin import formulas as F
from pilin.formulas import Address, One, Top, Type, closure_of, priority, subformula_leq, type_steps
from pilin.process import Close
from pilin.rank import INF, Equation, EquationSystem, program_ranks, solve_rank
from pilin.runtime import MinRank, Random, main_soup, refold, replay, run, schedules, to_soup
from pilin.typeck import check_process, check_program
from pilin.validity import check_validity, has_valid_thread, oracle_check

from conftest import FIXTURES, WELL_TYPED, load, loaded
from gen import cut_terms, random_cut_forest, random_formula, random_program

VALID_BOUND = 20
DEEPENING = (8, 12, 16, 20, 24, 28, 32, 36, 40)
RANDOM_PROGRAMS = 210


@pytest.fixture
def verdict(capsys):
    """Print one PASS/FAIL line for the criterion, then fail the test if needed."""
    def say(number: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail
    return say


def test_criterion_1_rank_table(verdict):
    start = time.perf_counter()
    got = {
        "Buyer": program_ranks(load("buyer_seller"))["Buyer"],
        "Seller": program_ranks(load("buyer_seller"))["Seller"],
        "Omega": program_ranks(load("omega"))["Omega"],
        "Work": program_ranks(load("work_gather"))["Work"],
        "Machine": program_ranks(load("slot_machine"))["Machine"],
        "Player": program_ranks(load("slot_machine"))["Player"],
        "Fwd": program_ranks(load("forwarder"))["Fwd"],
    }
    # F(x1..x5) = (x2, 1 + min(x3, x4), x1, x5, 0) for Buyer(x), its choice,
    # the two selections and close
    buyer = EquationSystem([
        Equation(0, "copy", (1,), None),
        Equation(1, "choice", (2, 3), None),
        Equation(2, "copy", (0,), None),
        Equation(3, "copy", (4,), None),
        Equation(4, "zero", (), None),
    ], {}, {})
    least = solve_rank(buyer).values
    elapsed = time.perf_counter() - start
    expected = {"Buyer": 1, "Seller": 0, "Omega": INF, "Work": 1, "Machine": INF,
                "Player": 1, "Fwd": 0}
    ok = got == expected and least == [1, 1, 1, 0, 0] and elapsed < 1.0
    verdict(1, ok, f"ranks {got}, Buyer system {least}, {elapsed:.3f}s")


def test_criterion_2_verdicts(verdict):
    start = time.perf_counter()
    expected = {"buyer_seller": True, "omega": False, "compulsive_buyer": False,
                "work_gather": True, "forwarder": True, "slot_machine": True,
                "context_free_tree": True}
    got, lasso_ok = {}, True
    for name in expected:
        prog = load(name)
        g = check_program(prog)
        v = check_validity(g, program_ranks(prog))
        got[name] = v.well_typed
        if name == "compulsive_buyer":
            buyer = F.Mu("X", F.Plus(F.Var("X"), One()))
            _, cycle = v.lasso.nodes(g)
            unfolded = {g[n].type_of(x).formula for n in cycle for x in g[n].names
                        if g[n].rule == "mu" and g[n].process.x == x}
            lasso_ok = unfolded == {buyer}
    elapsed = time.perf_counter() - start
    ok = got == expected and lasso_ok and elapsed < 10.0
    verdict(2, ok, f"{got}, compulsive lasso unfolds mu X. X + 1: {lasso_ok}, {elapsed:.3f}s")


def test_criterion_3_oracle_equivalence(verdict):
    disagreements = []
    counts = {True: 0, False: 0}

    longest = [0]

    def compare(label, g, ranks):
        # Enumerating every walk up to the product-state count is exponential,
        # so a well-typed verdict is confirmed up to VALID_BOUND and an invalid
        # one must be matched by a counterexample the oracle finds on its own
        # by iterative deepening.
        v = check_validity(g, ranks)
        counts[v.well_typed] += 1
        bounds = (VALID_BOUND,) if v.well_typed else DEEPENING
        for bound in bounds:
            o = oracle_check(g, ranks, bound=bound)
            if not o.well_typed:
                longest[0] = max(longest[0], len(o.lasso.cycle))
                break
        if v.well_typed != o.well_typed:
            disagreements.append(label)
        if not v.well_typed and has_valid_thread(g, v.lasso.cycle):
            disagreements.append(f"{label} (lasso has a valid thread)")

    for name in FIXTURES:
        f = loaded(name)
        compare(name, f.graph, f.ranks)
    rng = random.Random(2024)
    for i in range(RANDOM_PROGRAMS):
        prog = random_program(rng, max_defs=3, depth=4)
        compare(f"random #{i}", check_program(prog), program_ranks(prog))
    ok = not disagreements
    verdict(3, ok, f"{len(FIXTURES)} corpus + {RANDOM_PROGRAMS} random programs "
                   f"({counts[True]} well typed, confirmed up to B={VALID_BOUND}; {counts[False]} "
                   f"invalid, oracle counterexamples up to {longest[0]} steps), "
                   f"disagreements: {disagreements or 'none'}")


_runs: dict = {}


def _soundness_runs():
    """Criterion 4's runs, with the residuals that criterion 5 re-checks."""
    if _runs:
        return _runs
    elapsed = 0.0
    for name in WELL_TYPED:
        f = loaded(name)
        policies = [("minrank", MinRank(), 1)] + [(f"seed {k}", Random(k, 16), 5) for k in range(100)]
        for label, policy, every in policies:
            sampled = []

            def observe(n, soup, every=every, sampled=sampled):
                if n % every == 0:
                    sampled.append(soup)
            start = time.perf_counter()
            trace = run(f.program, policy, 10_000, f.ranks, observe)
            elapsed += time.perf_counter() - start
            _runs[name, label] = (trace, [main_soup(f.program)] + sampled)
    _runs["elapsed"] = elapsed
    return _runs


def test_criterion_4_soundness(verdict):
    runs = _soundness_runs()
    bad = [key for key, (trace, _) in ((k, v) for k, v in runs.items() if k != "elapsed")
           if not (trace.outcome == "Terminated" and len(trace.final.members) == 1
                   and trace.final.members[0].process == Close(trace.final.external)
                   and not trace.final.channels)]
    n = len(runs) - 1
    ok = not bad and runs["elapsed"] < 30.0
    verdict(4, ok, f"{n} runs over {len(WELL_TYPED)} programs, all end in close on the "
                   f"external channel: {not bad}, {runs['elapsed']:.2f}s")


def test_criterion_5_subject_reduction(verdict):
    runs = _soundness_runs()
    checked, failures = 0, []
    for key, value in runs.items():
        if key == "elapsed":
            continue
        name, _ = key
        prog = loaded(name).program
        for soup in value[1]:
            try:
                check_process(prog, {soup.external: One()}, refold(soup))
            except Exception as e:  # any failure to re-type is a counterexample
                failures.append((key, str(e)))
            checked += 1
    verdict(5, not failures, f"{checked} residuals re-checked, failures: {failures[:3] or 'none'}")


def _decision_scripts(length: int):
    """Every left/right script of length at most ``length``."""
    for n in range(length + 1):
        yield from product(("left", "right"), repeat=n)


def test_criterion_6_zero_rank_termination(verdict):
    # A scheduler is a choice script, a depth-6 redex order and a seeded tail.
    details, ok = [], True
    for name in ("forwarder", "forwarder_chain", "context_free_tree"):
        f = loaded(name)
        s = main_soup(f.program)
        schedulers, traces, outcomes = set(), set(), set()
        for script in _decision_scripts(3):
            for picks in schedules(s, f.program, f.ranks, 6, script):
                for seed in range(4):
                    t = replay(s, f.program, f.ranks, picks, rng=random.Random(seed),
                               decisions=script)
                    schedulers.add((script, picks, seed))
                    traces.add(tuple(t.entries))
                    outcomes.add(t.outcome)
        ok = ok and outcomes == {"Terminated"} and len(schedulers) >= 50
        details.append(f"{name}: {len(schedulers)} schedulers, {len(traces)} distinct traces, "
                       f"outcomes {sorted(outcomes)}")
    verdict(6, ok, "; ".join(details))


def test_criterion_7_soup_canonicity(verdict):
    rng = random.Random(7)
    trees, arrangements, bad = 1000, 0, 0
    for _ in range(trees):
        leaves, edges = random_cut_forest(rng, rng.randint(1, 5))
        terms = cut_terms(leaves, edges)
        arrangements += len(terms)
        soups = {to_soup(p, {"out": Top()}) for p in terms}
        bad += len(soups) != 1
    verdict(7, bad == 0, f"{trees} cut trees, {arrangements} rearrangements, "
                         f"{bad} trees with more than one soup")


def test_criterion_8_formula_invariants(verdict):
    rng = random.Random(8)
    failures = {"involution": 0, "address growth": 0, "priority order": 0}
    for _ in range(10_000):
        f = random_formula(rng, rng.randint(0, 6), fixpoint_bias=0.35)
        if F.dual(F.dual(f)) != f:
            failures["involution"] += 1
        t = Type(f, Address(0))
        frontier = [t]
        for _ in range(6):
            nxt = []
            for s in frontier:
                for u in type_steps(s):
                    a, b = s.address, u.address
                    if not (a.prefix_of(b) and len(b.word) == len(a.word) + 1):
                        failures["address growth"] += 1
                    nxt.append(u)
            frontier = nxt[:8]
        c = closure_of([f, F.dual(f)])
        fixpoints = [g for g in c if F.is_fixpoint(g)]
        for a, b in combinations(fixpoints, 2):
            for x, y in ((a, b), (b, a)):
                if subformula_leq(x, y) and priority(c, x) > priority(c, y):
                    failures["priority order"] += 1
            for x in (a, b):
                if (priority(c, x) % 2 == 0) != isinstance(x, F.Nu):
                    failures["priority order"] += 1
    ok = not any(failures.values())
    verdict(8, ok, f"10000 random formulas of depth <= 6, failures {failures}")
