import pytest

from szxc.lambda_core import (
    App, Arith, Cons, Ifz, Lam, LetTensor, Lit, Meas, New, PApp, Rotation,
    SeqVec, Star, TQubit, Tensor, Unitary, VNilT, Var, alpha_eq,
)
from szxc.parser import parse_term, pretty_print
from szxc.reducer import (
    ReductionFuelError, expand_macros, is_value, make_binders_distinct,
    normalize, step, step_primitive,
)


def nf(src, fuel=10 ** 6):
    return normalize(make_binders_distinct(parse_term(src)), fuel)


def test_beta():
    assert step(parse_term("(\\x:Q. x) 0")) == Lit(0)


def test_beta_prime():
    assert step(parse_term("(\\'n. Rz @n) @3")) == PApp(Rotation("Rz"), Lit(3))


def test_let_tensor_fires_lazily():
    # components need not be values: tensors are lazy pairs
    t = parse_term("let a (*) b = (1+1) (*) x in b (*) a")
    out = step(t)
    assert out == Tensor(Var("x"), Arith("+", Lit(1), Lit(1)))


def test_let_cons_fires():
    t = parse_term("let a :: b = 1 :: VNil[Nat] in a")
    assert step(t) == Lit(1)


def test_ifz_numeral():
    assert step(parse_term("ifz 0 then 1 else 2")) == Lit(1)
    assert step(parse_term("ifz 7 then 1 else 2")) == Lit(2)


def test_star_seq():
    assert step(parse_term("() ; meas")) == Meas()


def test_vnil_seqvec():
    assert step(parse_term("VNil[Q] ;v new")) == New()


def test_numeral_arithmetic():
    assert nf("5-2") == Lit(3)
    assert nf("2^3") == Lit(8)


def test_for_nil():
    out = step(parse_term("for k in VNil[Nat] do k+1"))
    assert isinstance(out, VNilT)


def test_for_cons_unfolds():
    t = parse_term("for k in 1 :: VNil[Nat] do k+1")
    out = step(t)
    expected = parse_term("(1+1) :: (for k in VNil[Nat] do k+1)")
    assert alpha_eq(out, expected)


def test_range_normal_form():
    assert alpha_eq(nf("1..3"), parse_term("1 :: 2 :: VNil[Nat]"))


def test_drop_zero_unfolding():
    t = parse_term("drop @0 xs")
    out = step_primitive(t)
    assert isinstance(out, Ifz)
    out2 = step(step(t))  # the ifz guard is already a numeral
    assert alpha_eq(out2, SeqVec(Var("xs"), Star()))


def test_append_zero_unfolding():
    t = parse_term("append[Q] @0 @2 xs ys")
    cur = t
    for _ in range(2):
        cur = step(cur)
    assert alpha_eq(cur, SeqVec(Var("xs"), Var("ys")))


def test_accumap_unfold_shape():
    t = parse_term("accuMap[Q,Q,Q] @1 xs fs z")
    out = step(t)
    assert isinstance(out, Ifz)


def test_quantum_constants_inert():
    for src in ("meas x", "new x", "H x", "CNOT a b", "Rz @2 x"):
        assert step(parse_term(src)) is None, src


def test_partial_primitive_is_normal():
    v = parse_term("split[Q] @1 @1")
    assert is_value(v)
    assert step(v) is None


def test_map_macro_example():
    t = parse_term("map[Q,Q] @2 (x::y::VNil[Q]) (f::g::VNil[(Q -o Q)])")
    out = normalize(make_binders_distinct(t))
    assert alpha_eq(out, parse_term("f x :: g y :: VNil[Q]"))


def test_qft_at_one_reduces_to_hadamard(qft_term):
    from szxc.lambda_core import App, Cons, Lit, PApp

    applied = App(PApp(qft_term, Lit(1)), Cons(Var("q0"), VNilT(TQubit())))
    out = normalize(applied)
    assert alpha_eq(out, parse_term("H q0 :: VNil[Q]"))


def test_determinism_repeated_calls():
    t = parse_term("(\\x:B. x (*) new 0) (ifz 1-1 then 0 else 1)")
    first = step(t)
    assert first == step(t)
    # arguments reduce before functions
    assert alpha_eq(first,
                    parse_term("(\\x:B. x (*) new 0) (ifz 0 then 0 else 1)"))


def test_argument_before_function_order():
    t = parse_term("((\\x:Q. \\y:Q. x) a) (H b)")
    # the argument H b is stuck and not a value, so nothing fires
    assert step(t) is None


def test_arith_right_then_left():
    t = parse_term("(1+2) + (3+4)")
    out = step(t)
    assert out == parse_term("(1+2) + 7")


def test_fuel_exhaustion():
    with pytest.raises(ReductionFuelError):
        nf("split[Q] @3 @3 (q::qs)", fuel=2)


def test_macro_expansion_is_closed():
    from szxc.lambda_core import free_term_vars

    t = expand_macros(parse_term("compose[Q]"))
    assert free_term_vars(t) == set()
    printed = pretty_print(t)
    assert "compose" not in printed
    assert "fold" not in printed
    assert "accuMap" in printed  # macros bottom out in the primitive
