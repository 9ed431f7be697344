import random

import pytest

from szxc.lambda_core import (
    Arith, Cons, For, Ifz, LetCons, Lit, PApp, PLam, Prim, Reverse, TNat,
    TVec, NVar, Var, VNilT, subst,
)
from szxc.param_eval import (
    Closure, EmptyVectorError, check_value_shape, eval_param,
    eval_preserved_by_step, values_equal,
)
from szxc.parser import parse_term
from szxc.reducer import step
from szxc.typechecker import classify, typecheck

from conftest import gen_eval_term


def ev(src, env=None):
    return eval_param(parse_term(src), (), env or {})


def test_range_expansion():
    assert ev("range @2 @5") == (2, 3, 4)


def test_range_empty():
    assert ev("range @3 @3") == ()


def test_for_squares():
    assert ev("for k in range @0 @3 do k*k") == (0, 1, 4)


def test_arithmetic_clauses():
    assert ev("2^n + (n-5)", {"n": 3}) == 8
    assert ev("7/2") == 3


def test_ifz_clause():
    assert ev("ifz n then 1 else 2", {"n": 0}) == 1
    assert ev("ifz n then 1 else 2", {"n": 4}) == 2


def test_lambda_and_application():
    assert ev("(\\'x. x+1) @4") == 5


def test_closure_captures_by_value():
    c = ev("\\'x. x+m", {"m": 10})
    assert isinstance(c, Closure)
    assert eval_param(PApp(parse_term("\\'x. x+m"), Lit(1)), (), {"m": 10}) == 11


def test_cons_and_nil():
    assert ev("1 :: 2 :: VNil[Nat]") == (1, 2)


def test_let_cons_destructuring():
    src = "let x :: y = 5 :: 6 :: VNil[Nat] in x :: reverse y"
    # plain let on a parameter pattern: use the vector form
    t = LetCons("x", None, "y", None, parse_term("5 :: 6 :: VNil[Nat]"),
                parse_term("x :: reverse y"))
    assert eval_param(t) == (5, 6)


def test_empty_destructuring_error():
    t = LetCons("x", None, "y", None, VNilT(TNat()), Var("x"))
    with pytest.raises(EmptyVectorError):
        eval_param(t)


def test_reverse_builtin():
    assert ev("reverse (0..4)") == (3, 2, 1, 0)


def test_shape_check_lemma():
    v = ev("for k in 0..n do k", {"n": 5})
    assert check_value_shape(v, TVec(TNat(), NVar("n")), {"n": 5})
    assert not check_value_shape(v, TVec(TNat(), NVar("n")), {"n": 4})
    assert check_value_shape(3, TNat(), {})


def test_eval_preserved_beta():
    m = parse_term("(\\'x. x+1) @4")
    n = parse_term("4+1")
    assert eval_preserved_by_step(m, n)


def test_eval_preserved_ifz():
    assert eval_preserved_by_step(parse_term("ifz 0 then 2 else 3"),
                                  parse_term("2"))


@pytest.mark.parametrize("seed", range(8))
def test_eval_preserved_random_sweep(seed):
    rng = random.Random(seed)
    checked = 0
    env = {"n": rng.randint(0, 8), "m": rng.randint(0, 8)}
    while checked < 25:
        term = gen_eval_term(rng)
        nxt = step(term)
        if nxt is None:
            continue
        try:
            before = eval_param(term, (), env)
        except Exception:
            continue
        after = eval_param(nxt, (), env)
        assert values_equal(before, after), term
        checked += 1


def test_substitution_coherence_random():
    # eval(M[N/x]) equals eval(M) at the point eval(N)
    rng = random.Random(42)
    done = 0
    while done < 200:
        env = {"n": rng.randint(0, 8), "m": rng.randint(0, 8)}
        from conftest import gen_nat_term

        m = gen_nat_term(rng, ["x", "n", "m"], 3)
        n_term = gen_nat_term(rng, ["n", "m"], 2)
        try:
            direct = eval_param(subst(m, "x", n_term), (), env)
            via_env = eval_param(m, (), dict(env, x=eval_param(n_term, (), env)))
        except Exception:
            continue
        assert direct == via_env
        done += 1


def test_evaluable_classification_guard():
    t = typecheck((), (), parse_term("\\'n. reverse (0..n)"))
    assert classify(t) == "evaluable"
