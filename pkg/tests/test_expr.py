import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from symsearch.expr import (StructureError, Traversal, Vocabulary, arity, build_tree,
                            contains_variable, evaluate, is_complete, open_slots, parent_sibling,
                            push_token, to_infix)
from symsearch.parse import ParseError, parse_infix

V = Vocabulary.default(2)


def trav(*symbols, vocab=V, max_length=30):
    return Traversal.from_tokens([vocab[s] for s in symbols], max_length=max_length)


def test_arity_by_kind():
    assert arity(V["add"]) == 2
    assert arity(V["sin"]) == 1
    assert arity(V["x1"]) == 0
    assert arity(V["c"]) == 0


def test_vocabulary_ids_are_dense_and_unique():
    assert [t.id for t in V.tokens] == list(range(len(V)))
    assert len(set(V.symbols)) == len(V)
    assert sum(t.kind == "constant" for t in V.tokens) == 1
    with pytest.raises(ValueError):
        Vocabulary(["add", "add", "x1"])


def test_push_token_counter():
    assert push_token(Traversal(), V["add"]).counter == 2
    t = push_token(trav("add", "x1"), V["x1"])
    assert t.counter == 0 and t.complete
    assert push_token(trav("sin"), V["sin"]).counter == 1


def test_push_onto_complete_or_full_raises():
    with pytest.raises(StructureError):
        push_token(trav("x1"), V["x1"])
    with pytest.raises(StructureError):
        push_token(trav("sin", "sin", max_length=2), V["x1"])


def test_is_complete():
    assert is_complete(trav("add", "x1", "x1"))
    assert not is_complete(trav("add", "x1"))
    assert not is_complete(Traversal())


def test_build_tree_shapes():
    t = build_tree(trav("add", "x1", "x1"))
    assert to_infix(t) == "(x1 + x1)"
    t = build_tree(trav("sin", "add", "x1", "x1"))
    assert to_infix(t) == "sin((x1 + x1))"
    t = build_tree(trav("mul", "c", "sin", "x1"))
    assert t.n_constants == 1
    with pytest.raises(StructureError):
        build_tree(trav("add", "x1"))


def test_evaluate_examples():
    y, ok = evaluate(build_tree(trav("sin", "x1")), [[0.0]])
    assert ok and y[0] == 0.0
    y, ok = evaluate(build_tree(trav("add", "pow", "x1", "c", "x1")), [[2.0]], [2.0])
    assert ok and y[0] == 6.0
    _, ok = evaluate(build_tree(trav("log", "x1")), [[-1.0]])
    assert not ok


def test_evaluate_rejects_bad_inputs():
    t = build_tree(trav("mul", "c", "x2"))
    with pytest.raises(ValueError):
        evaluate(t, [[1.0, 2.0]], [])
    with pytest.raises(ValueError):
        evaluate(t, [[1.0]], [1.0])


def test_parent_sibling_examples():
    add, sin, x1 = V["add"], V["sin"], V["x1"]
    assert parent_sibling(trav("add")) == (add, None)
    assert parent_sibling(trav("add", "x1")) == (add, x1)
    assert parent_sibling(trav("add", "sin", "x1")) == (add, sin)
    assert parent_sibling(Traversal()) == (None, None)


def test_contains_variable():
    assert contains_variable(build_tree(trav("sin", "x1")), 1)
    assert not contains_variable(build_tree(trav("sin", "x1")), 2)
    assert contains_variable(build_tree(trav("add", "x1", "mul", "x2", "x2")), 2)


def test_to_infix_examples():
    assert to_infix(build_tree(trav("sin", "pow", "x1", "c")), [2.0]) == "sin((x1 ^ 2))"
    t = build_tree(trav("add", "mul", "c", "sin", "x1", "c"))
    assert to_infix(t, [2.2, 1.3]) == "((2.2 * sin(x1)) + 1.3)"


# random complete traversals

TOKENS = list(V.tokens)


@st.composite
def complete_traversals(draw, max_length=12):
    t = Traversal(max_length=max_length)
    while not t.complete:
        room = max_length - len(t) - 1
        choices = [k for k in TOKENS if t.counter + k.arity - 1 <= room]
        t = push_token(t, draw(st.sampled_from(choices)))
    return t


@given(complete_traversals())
def test_counter_matches_arity_sum(t):
    assert t.counter == 1 + sum(k.arity - 1 for k in t.tokens)
    assert t.counter == 0 and len(t) <= t.max_length
    # every proper prefix is incomplete
    p = Traversal(max_length=t.max_length)
    for k in t.tokens[:-1]:
        p = push_token(p, k)
        assert p.counter >= 1


@given(complete_traversals())
def test_build_tree_roundtrips_preorder(t):
    tree = build_tree(t)

    def pre(node):
        yield node.token
        for c in node.children:
            yield from pre(c)

    assert tuple(pre(tree.root)) == t.tokens


@given(complete_traversals(), st.data())
def test_parent_sibling_matches_slot_stack(t, data):
    cut = data.draw(st.integers(0, len(t) - 1))
    prefix = Traversal.from_tokens(t.tokens[:cut], max_length=t.max_length)
    stack = open_slots(prefix.tokens)
    parent, sibling = parent_sibling(prefix)
    if not stack:
        assert (parent, sibling) == (None, None)
    else:
        assert parent is stack[-1][0]
        assert sibling is stack[-1][2]


@settings(max_examples=60)
@given(complete_traversals(), st.data())
def test_infix_roundtrip_evaluates_identically(t, data):
    tree = build_tree(t)
    consts = data.draw(st.lists(st.floats(-3, 3, allow_nan=False).filter(lambda v: abs(v) > 1e-3),
                                min_size=tree.n_constants, max_size=tree.n_constants))
    X = np.random.default_rng(0).uniform(0.1, 2.0, size=(8, 2))
    y1, ok1 = evaluate(tree, X, consts)
    tree2, c2 = parse_infix(to_infix(tree, consts), n_variables=2)
    y2, ok2 = evaluate(tree2, X, c2)
    assert ok1 == ok2
    if ok1:
        np.testing.assert_allclose(y1, y2, rtol=1e-12, atol=1e-12)


def test_parse_infix_basics():
    tree, c = parse_infix("2.2*sin(x1) + 1.3")
    y, ok = evaluate(tree, [[math.pi / 2]], c)
    assert ok and y[0] == pytest.approx(3.5)
    tree, c = parse_infix("x1**2 - ln(x2)")
    y, _ = evaluate(tree, [[3.0, 1.0]], c)
    assert y[0] == pytest.approx(9.0)
    with pytest.raises(ParseError):
        parse_infix("sin(x1")
