import pytest
from hypothesis import assume, given

from pilin.formulas import One
from pilin.parser import parse_process as pp
from pilin.parser import parse_program
from pilin.process import (
    ArityMismatch, Call, Definition, Program, UnknownDefinition, alpha_equivalent,
    check_well_formed, free_names, rename, substitute, unfold_call,
)
from strategies import processes

from conftest import FIXTURES, load


@pytest.mark.parametrize("text, expected", [
    ("close x", {"x"}),
    ("link x y", {"x", "y"}),
    ("wait x. close y", {"x", "y"}),
    ("recv x (y). link y x", {"x"}),
    ("recv x (y, z). link y z", {"x"}),
    ("send x (y) (close y | close x)", {"x"}),
    ("send x (y) (close y | close z)", {"x", "z"}),
    ("x.in1. close x", {"x"}),
    ("x.in1(y). close y", {"x"}),
    ("new (x: 1) (close x | wait x. close y)", {"y"}),
    ("A(x, y) (+) close z", {"x", "y", "z"}),
    ("case x { in1: close x; in2: fail x }", {"x"}),
])
def test_free_names(text, expected):
    assert free_names(pp(text)) == expected


def test_substitute_examples():
    assert substitute(pp("close x"), "y", "x") == pp("close y")
    assert substitute(pp("link x z"), "y", "x") == pp("link y z")
    # bound names are left alone
    p = pp("new (x: 1) (close x | wait x. close w)")
    assert substitute(p, "y", "x") == p
    # capture is avoided by renaming the binder
    q = substitute(pp("recv w (y). link y x"), "y", "x")
    assert free_names(q) == {"w", "y"}
    assert alpha_equivalent(q, pp("recv w (v). link v y"))


def test_unfold_call():
    prog = load("buyer_seller")
    body = unfold_call(prog, "Seller", ("a", "b"))
    assert free_names(body) == {"a", "b"}
    assert body == rename(prog["Seller"].body, {"x": "a", "y": "b"})
    with pytest.raises(UnknownDefinition):
        unfold_call(prog, "Nobody", ())
    with pytest.raises(ArityMismatch):
        unfold_call(prog, "Seller", ("a",))


@pytest.mark.parametrize("text, kinds", [
    ("def A(x: 1) = close y", ["UnboundName"]),
    ("def A(x: 1) = B(x)", ["UnknownDefinition"]),
    ("def A(x: 1) = A(x, x)", ["ArityMismatch"]),
    ("def A(x: 1 * 1) = send x (y) (close x | close y)", ["UnboundName", "ForkScope", "ForkScope"]),
    ("def A(x: 1) = close x", []),
])
def test_check_well_formed(text, kinds):
    prog = parse_program(text).program
    assert [d.kind for d in check_well_formed(prog)] == kinds


@pytest.mark.parametrize("name", FIXTURES)
def test_corpus_is_well_formed(name):
    assert check_well_formed(load(name)) == []


@given(processes)
def test_rename_round_trip(p):
    fresh = "zz"
    for x in sorted(p.fn):
        q = substitute(substitute(p, fresh, x), x, fresh)
        assert alpha_equivalent(p, q)


@given(processes)
def test_substitute_free_names(p):
    assume(p.fn)
    old = sorted(p.fn)[0]
    q = substitute(p, "zz", old)
    assert free_names(q) == (p.fn - {old}) | {"zz"}


@given(processes)
def test_unfold_call_free_names_within_arguments(p):
    params = tuple(sorted(p.fn))
    prog = Program({"A": Definition("A", tuple((x, One()) for x in params), p)}, None)
    args = tuple(f"arg{i}" for i in range(len(params)))
    assert free_names(unfold_call(prog, "A", args)) == set(args)


def test_calls_compare_structurally():
    assert Call("A", ("x",)) == pp("A(x)")
