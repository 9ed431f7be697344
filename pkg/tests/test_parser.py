import random

import pytest

from szxc.lambda_core import (
    App, Arith, Cons, For, Ifz, Lam, LetCons, LetTensor, Lit, Macro, Meas,
    New, PApp, PLam, Prim, Reverse, Rotation, Seq, SeqVec, Star, TBit,
    TLolli, TNat, TQubit, TTensor, TUnit, TVec, Tensor, Unitary, VNilT, Var,
    NConst, NVar, alpha_eq,
)
from szxc.parser import ParseError, parse_program, parse_term, pretty_print


def test_parse_single_definition():
    prog = parse_program("f = \\x:Q. x")
    assert len(prog.definitions) == 1
    d = prog.entry
    assert d.name == "f"
    assert alpha_eq(d.body, Lam("x", TQubit(), Var("x")))


def test_parse_crot_shape():
    text = ("crot : (n:Nat) -> (Q * Q) -o (Q * Q)\n"
            "crot = \\'n. \\qs. let c (*) q = qs in\n"
            "  let c2 (*) q2 = CNOT c (Rz @(2^n) q) in CNOT c2 (RzInv @(2^n) q2)\n")
    prog = parse_program(text)
    d = prog.entry
    from szxc.lambda_core import TArrow

    assert d.declared_type == TArrow("n", TLolli(TTensor(TQubit(), TQubit()),
                                                 TTensor(TQubit(), TQubit())))
    assert isinstance(d.body, PLam)
    assert isinstance(d.body.body, Lam)
    assert d.body.body.var_type is None  # annotation omitted in this spelling
    assert isinstance(d.body.body.body, LetTensor)


def test_parser_defers_linearity():
    prog = parse_program("f = \\x:Q. x x")
    body = prog.entry.body
    assert isinstance(body.body, App)


def test_range_sugar():
    t = parse_term("2..(n+1)")
    assert t == PApp(PApp(Prim("range"), Lit(2)), Arith("+", Var("n"), Lit(1)))


def test_all_primitive_names_parse():
    t = parse_term("accuMap[Q,B,Unit] @1 x y z")
    head = t.fn.fn.fn.fn
    assert head == Prim("accuMap", (TQubit(), TBit(), TUnit()))
    assert parse_term("split[Q]") == Prim("split", (TQubit(),))
    assert parse_term("append[Q]") == Prim("append", (TQubit(),))
    assert parse_term("drop") == Prim("drop")
    assert parse_term("range") == Prim("range")
    assert parse_term("map[Q,Q]") == Macro("map", (TQubit(), TQubit()))
    assert parse_term("fold[Q,Q]") == Macro("fold", (TQubit(), TQubit()))
    assert parse_term("compose[Q]") == Macro("compose", (TQubit(),))


def test_grammar_coverage():
    src = ("\\'n. \\x:(Vec Q n). \\y:Q. ifz n-1 then x else "
           "(let a:Q :: b:(Vec Q (n-1)) = x in ((meas y ; ()) ;v a :: b))")
    t = parse_term(src)
    assert isinstance(t, PLam)
    t2 = parse_term("() ; VNil[B] ;v new 0")
    assert isinstance(t2, Seq)
    assert isinstance(t2.rest, SeqVec)
    t3 = parse_term("for k in reverse (0..n) do k+1")
    assert isinstance(t3, For)
    assert isinstance(t3.vec, Reverse)


def test_pretty_vnil():
    assert pretty_print(Cons(Lit(0), VNilT(TBit()))) == "0 :: VNil[B]"


def test_pretty_ifz():
    t = Ifz(Var("n"), Var("m"), Var("p"))
    assert pretty_print(t) == "ifz n then m else p"


def test_syntax_error_reports_position():
    with pytest.raises(ParseError) as e:
        parse_program("f = \\x:Q. (x")
    assert e.value.line >= 1 and e.value.col >= 1


def test_undefined_reference_rejected():
    with pytest.raises(ParseError, match="undefined"):
        parse_program("f = \\x:Q. x ; y")


def test_duplicate_definition_rejected():
    with pytest.raises(ParseError, match="duplicate"):
        parse_program("f = \\x:Q. x\nf = \\x:Q. x")


# ---------------------------------------------------------------------------
# Roundtrip property: structurally generated terms up to depth 8


_TYPES = [TBit(), TQubit(), TUnit(), TNat(), TTensor(TQubit(), TBit()),
          TLolli(TQubit(), TQubit()), TVec(TQubit(), NVar("n")),
          TVec(TNat(), NConst(2))]


def _gen_term(rng, depth, scope):
    leaves = [
        lambda: Var(rng.choice(scope)) if scope else Lit(0),
        lambda: Lit(rng.randint(0, 9)),
        lambda: Star(),
        lambda: VNilT(rng.choice(_TYPES)),
        lambda: Meas(),
        lambda: New(),
        lambda: Unitary(rng.choice(["H", "CNOT"])),
        lambda: Rotation(rng.choice(["Rz", "RzInv", "Rx", "RxInv"])),
        lambda: Prim("split", (rng.choice(_TYPES),)),
        lambda: Macro("compose", (rng.choice(_TYPES),)),
    ]
    if depth <= 0:
        return rng.choice(leaves)()

    def sub(extra=()):
        return _gen_term(rng, depth - 1, scope + list(extra))

    nodes = [
        lambda: Lam(f"x{depth}", rng.choice(_TYPES), sub([f"x{depth}"])),
        lambda: PLam(f"p{depth}", None, sub([f"p{depth}"])),
        lambda: App(sub(), sub()),
        lambda: PApp(sub(), sub()),
        lambda: Tensor(sub(), sub()),
        lambda: LetTensor(f"a{depth}", rng.choice(_TYPES), f"b{depth}",
                          rng.choice(_TYPES), sub(),
                          sub([f"a{depth}", f"b{depth}"])),
        lambda: LetCons(f"h{depth}", None, f"t{depth}", None, sub(),
                        sub([f"h{depth}", f"t{depth}"])),
        lambda: Seq(sub(), sub()),
        lambda: SeqVec(sub(), sub()),
        lambda: Cons(sub(), sub()),
        lambda: Arith(rng.choice("+-*/^"), sub(), sub()),
        lambda: Ifz(sub(), sub(), sub()),
        lambda: For(f"k{depth}", sub(), sub([f"k{depth}"])),
        lambda: Reverse(sub()),
    ]
    return rng.choice(nodes + leaves)()


@pytest.mark.parametrize("seed", range(60))
def test_roundtrip_random_terms(seed):
    rng = random.Random(seed)
    term = _gen_term(rng, rng.randint(1, 8), ["u", "v"])
    printed = pretty_print(term)
    reparsed = parse_term(printed)
    assert alpha_eq(term, reparsed), printed


def test_roundtrip_corpus(qft_program):
    for d in qft_program.definitions:
        printed = pretty_print(d.body)
        assert alpha_eq(parse_term(printed), d.body)
