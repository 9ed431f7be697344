import pytest
from hypothesis import given, strategies as st

from szxc.lambda_core import (
    Arith, Cons, For, Ifz, Lam, Lit, NBin, NConst, NIte0, NVar,
    NatArithmeticError, PApp, PLam, Reverse, Rotation, TQubit, Tensor,
    UnboundParameterError, Var, VNilT, TNat, alpha_eq, free_vars, nat_eval,
    subst, term_to_natexpr,
)


def test_nat_eval_constant_arithmetic():
    assert nat_eval(NBin("+", NConst(3), NConst(4)), {}) == 7


def test_nat_eval_truncated_subtraction():
    assert nat_eval(NBin("-", NConst(2), NConst(5)), {}) == 0


def test_nat_eval_exponent():
    assert nat_eval(NBin("^", NConst(2), NVar("n")), {"n": 3}) == 8


def test_nat_eval_zero_pow_zero():
    assert nat_eval(NBin("^", NConst(0), NConst(0)), {}) == 1


def test_nat_eval_natural_division():
    assert nat_eval(NBin("/", NConst(7), NConst(2)), {}) == 3


def test_nat_eval_errors():
    with pytest.raises(UnboundParameterError):
        nat_eval(NVar("q"), {})
    with pytest.raises(NatArithmeticError):
        nat_eval(NBin("/", NConst(1), NConst(0)), {})


def test_nat_eval_ite0():
    e = NIte0(NVar("g"), NConst(10), NConst(20))
    assert nat_eval(e, {"g": 0}) == 10
    assert nat_eval(e, {"g": 5}) == 20


@given(st.integers(0, 20), st.integers(0, 20))
def test_monus_matches_bruteforce(a, b):
    assert nat_eval(NBin("-", NConst(a), NConst(b)), {}) == max(0, a - b)


def test_subst_tensor():
    m = Tensor(Var("x"), Var("y"))
    assert subst(m, "x", Lit(0)) == Tensor(Lit(0), Var("y"))


def test_subst_shadowing():
    m = Lam("x", TQubit(), Var("x"))
    assert subst(m, "x", Lit(1)) == m


def test_subst_distributes_over_ifz():
    m = Ifz(Var("n"), Var("n"), Arith("+", Var("n"), Lit(1)))
    out = subst(m, "n", Lit(0))
    assert out == Ifz(Lit(0), Lit(0), Arith("+", Lit(0), Lit(1)))


def test_subst_capture_avoidance():
    # (\y. x) [x := y] must not capture the bound y
    m = Lam("y", TQubit(), Tensor(Var("x"), Var("y")))
    out = subst(m, "x", Var("y"))
    assert isinstance(out, Lam)
    assert out.var != "y"
    assert out.body == Tensor(Var("y"), Var(out.var))


def test_subst_removes_free_occurrences():
    m = Tensor(Var("x"), Lam("z", TQubit(), Var("x")))
    out = subst(m, "x", Lit(0))
    _, states = free_vars(out)
    assert "x" not in states


def test_subst_commutes_with_renaming():
    # alpha-equivalent inputs give alpha-equivalent outputs
    m1 = Lam("a", TQubit(), Tensor(Var("a"), Var("x")))
    m2 = Lam("b", TQubit(), Tensor(Var("b"), Var("x")))
    assert alpha_eq(m1, m2)
    assert alpha_eq(subst(m1, "x", Lit(1)), subst(m2, "x", Lit(1)))


def test_subst_rewrites_type_annotations():
    from szxc.lambda_core import TVec, TQubit

    m = Lam("xs", TVec(TQubit(), NVar("n")), Var("xs"))
    out = subst(m, "n", Lit(3))
    assert out.var_type == TVec(TQubit(), NConst(3))


def test_free_vars_states():
    assert free_vars(Tensor(Var("x"), Var("y"))) == (set(), {"x", "y"})


def test_free_vars_closed_parameter_lambda():
    m = PLam("n", TNat(), PApp(Rotation("Rz"), Var("n")))
    assert free_vars(m) == (set(), set())


def test_free_vars_for_classifies_positions():
    m = For("k", Var("V"), Tensor(Var("x"), PApp(Rotation("Rz"), Var("k"))))
    params, states = free_vars(m)
    assert params == {"V"}
    assert states == {"x"}


def test_alpha_eq_binders():
    a = Lam("x", TQubit(), Var("x"))
    b = Lam("y", TQubit(), Var("y"))
    assert alpha_eq(a, b)
    assert not alpha_eq(a, Lam("y", TQubit(), Var("x")))


def test_term_to_natexpr():
    m = Arith("+", Lit(1), Ifz(Var("n"), Lit(0), Lit(2)))
    e = term_to_natexpr(m)
    assert nat_eval(e, {"n": 0}) == 1
    assert nat_eval(e, {"n": 9}) == 3


def test_spans_do_not_affect_equality():
    from szxc.lambda_core import Span

    assert Var("x", span=Span(1, 1)) == Var("x", span=Span(9, 9))
    assert Var("x", span=Span(1, 1)) == Var("x")
