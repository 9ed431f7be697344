import json
import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from szxc.lambda_core import LCons, LLit, LNil, LRange, NConst, NVar, NBin
from szxc.szx_ir import (
    BoundaryMismatch, Cap, Cup, Diagram, ExplicitPerm, FamilyBox, Ground,
    Hadamard, PExplicit, PRational, PSym, PUniform, Perm, SplitGather,
    TauSpec, Wire, XSpider, ZSpider, build_blocks_perm, build_sigma,
    build_tau, compose, diagram_to_dict, empty_diagram, from_json, gather,
    gather_count, identity_diagram, instantiate, invert_perm, node_count,
    simplify, split, substitute_param, tensor, to_dot, to_json, zero_phases,
)

from conftest import random_concrete_diagram


def spider_box(items):
    body = Diagram(params=["i"])
    z = body.add(ZSpider(1, 1, NVar("i"), PUniform(PRational(Fraction(0)),
                                                   NVar("i"))))
    body.add_input((z, 0))
    body.add_output((z, 0))
    fam = Diagram()
    box = fam.add(FamilyBox("i", items, body))
    fam.add_input((box, 0))
    fam.add_output((box, 0))
    return fam


def test_compose_wire_wire():
    d = compose(identity_diagram(2), identity_diagram(2))
    s = simplify(d)
    from szxc.oracle import cpm_equal_mod_scalar, cpm_identity, interpret

    assert cpm_equal_mod_scalar(interpret(s), cpm_identity(2), 1e-12)


def test_tensor_unit():
    d = tensor(empty_diagram(), identity_diagram(1))
    assert len(d.inputs) == 1
    assert node_count(d) == 0


def test_compose_mismatch_raises():
    with pytest.raises(BoundaryMismatch):
        compose(identity_diagram(1), identity_diagram(2))


def test_split_then_gather_simplifies_to_wire():
    d = Diagram()
    s = d.add(split(1, 2))
    g = d.add(gather(1, 2))
    d.connect((s, 0), (g, 0), 1)
    d.connect((s, 1), (g, 1), 2)
    d.add_input((s, 0))
    d.add_output((g, 0))
    out = simplify(d)
    assert node_count(out) == 0
    from szxc.oracle import cpm_equal_mod_scalar, cpm_identity, interpret

    assert cpm_equal_mod_scalar(interpret(out), cpm_identity(3), 1e-12)


def test_gather_then_split_simplifies_to_wires():
    d = Diagram()
    g = d.add(gather(2, 1))
    s = d.add(split(2, 1))
    d.connect((g, 0), (s, 0), 3)
    d.add_input((g, 0))
    d.add_input((g, 1))
    d.add_output((s, 0))
    d.add_output((s, 1))
    out = simplify(d)
    assert node_count(out) == 0


def test_zero_edge_removed():
    # an internal zero-width spider chain disappears entirely
    d = Diagram()
    z1 = d.add(ZSpider(0, 1, NConst(0), zero_phases(NConst(0))))
    z2 = d.add(ZSpider(1, 0, NConst(0), zero_phases(NConst(0))))
    w = d.add(Wire(NConst(1)))
    d.connect((z1, 0), (z2, 0), 0)
    d.add_input((w, 0))
    d.add_output((w, 0))
    out = simplify(d)
    assert node_count(out) == 0
    assert all(e.mult != NConst(0) for e in out.edges)


# -- sigma / tau ---------------------------------------------------------------


def test_sigma_fig1_singleton_is_identity():
    assert build_sigma([7], lambda n: 2, lambda n: 3) == (0, 1, 2, 3, 4)


def test_sigma_fig1_pair_interleave():
    assert build_sigma([1, 1], lambda n: 1, lambda n: 1) == (0, 2, 1, 3)


def test_sigma_empty():
    assert build_sigma([], lambda n: 1, lambda n: 1) == ()


def test_sigma_matches_block_construction():
    rng = random.Random(3)
    for _ in range(50):
        items = [rng.randint(0, 3) for _ in range(rng.randint(0, 4))]

        def v(n):
            return n

        def w(n):
            return n + 1

        lhs = build_sigma(items, v, w)
        rhs = build_blocks_perm([[v(n), w(n)] for n in items])
        assert lhs == rhs


def test_tau_identity_at_one():
    for a, b, c in [(1, 1, 1), (3, 2, 1), (2, 0, 4)]:
        k = a + c + b + c
        assert build_tau(1, a, b, c) == tuple(range(k))


def test_tau_spec_example():
    assert build_tau(2, 1, 1, 1) == (0, 2, 4, 6, 1, 3, 5, 7)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(0, 5), st.integers(0, 5),
       st.integers(0, 5))
def test_tau_bijection(n, a, b, c):
    dest = build_tau(n, a, b, c)
    assert sorted(dest) == list(range((a + c + b + c) * n))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 5), max_size=5))
def test_sigma_bijection(items):
    dest = build_sigma(items, lambda n: n, lambda n: 2 * n + 1)
    assert sorted(dest) == list(range(len(dest)))


def test_invert_perm():
    p = (2, 0, 1)
    assert invert_perm(p) == (1, 2, 0)


# -- instantiation --------------------------------------------------------------


def test_box_spider_merge():
    fam = spider_box(LLit((1, 2)))
    conc = instantiate(fam, {})
    spiders = [n for n in conc.nodes.values() if isinstance(n, ZSpider)]
    assert len(spiders) == 1
    assert spiders[0].mult == NConst(3)
    assert len(spiders[0].phases.phases) == 3


def test_box_empty_list_is_empty_map():
    from szxc.oracle import interpret

    fam = spider_box(LNil())
    conc = instantiate(fam, {})
    cpm = interpret(simplify(conc))
    assert cpm.q_in == cpm.q_out == 0
    assert cpm.mat.shape == (1, 1)
    assert cpm.mat[0, 0] != 0


def test_box_gather_gets_one_arrow():
    body = Diagram(params=["i"])
    g = body.add(gather(NVar("i"), NConst(1)))
    body.add_input((g, 0))
    body.add_input((g, 1))
    body.add_output((g, 0))
    fam = Diagram()
    box = fam.add(FamilyBox("i", LLit((1, 2)), body))
    for p in range(2):
        fam.add_input((box, p))
    fam.add_output((box, 0))
    conc = instantiate(fam, {})
    kinds = sorted(type(n).__name__ for n in conc.nodes.values())
    assert kinds == ["Perm", "SplitGather"]
    assert node_count(conc) - node_count(body) == gather_count(body)


def test_instantiate_unbound_param():
    from szxc.szx_ir import DiagramError

    fam = spider_box(LRange(NConst(0), NVar("n")))
    with pytest.raises(DiagramError):
        instantiate(fam, {})


def test_substitute_param():
    fam = spider_box(LRange(NConst(0), NVar("n")))
    fam.params = ["n"]
    fixed = substitute_param(fam, "n", NConst(2))
    assert fixed.params == []
    conc = instantiate(fixed, {})
    spiders = [n for n in conc.nodes.values() if isinstance(n, ZSpider)]
    assert spiders[0].mult == NConst(1)  # sizes 0 and 1 summed


def test_simplify_random_semantics():
    from szxc.oracle import cpm_residual, interpret

    rng = random.Random(11)
    for i in range(40):
        d = random_concrete_diagram(rng)
        before = interpret(d)
        after = interpret(simplify(d))
        assert cpm_residual(before, after) <= 1e-9, i


def test_node_count_empty():
    assert node_count(empty_diagram()) == 0


def test_node_count_qft_instantiated_equal(qft_term):
    from szxc.translator import translate

    fam = translate((), (), qft_term)
    counts = {n: node_count(instantiate(fam, {"n": n})) for n in (2, 8)}
    assert counts[2] == counts[8]


# -- serialization ---------------------------------------------------------------


def test_json_roundtrip():
    fam = spider_box(LCons(NConst(1), LRange(NConst(0), NVar("n"))))
    fam.params = ["n"]
    text = to_json(fam)
    back = from_json(text)
    assert to_json(back) == text
    assert back.params == ["n"]


def test_json_deterministic():
    fam = spider_box(LLit((1, 2)))
    assert to_json(fam) == to_json(fam.copy())


def test_json_schema_fields():
    fam = spider_box(LLit((1,)))
    doc = json.loads(to_json(fam))
    assert set(doc) == {"params", "nodes", "edges", "inputs", "outputs"}
    for node in doc["nodes"]:
        assert "id" in node and "kind" in node


def test_dot_smoke():
    d = instantiate(spider_box(LLit((1, 2))), {})
    text = to_dot(d)
    assert text.startswith("digraph")
    assert "ZSpider" in text
