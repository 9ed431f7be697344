"""Evaluation of evaluable judgements into naturals and lists of naturals.

Terms whose type ends in a parameter type never touch quantum state; they
evaluate clause by clause into numbers, tuples of numbers, or closures for
the dependently typed functions among them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Tuple, Union

from .lambda_core import (
    App, Arith, Cons, For, Ifz, LetCons, Lit, PApp, PLam, Prim, Reverse,
    Term, TNat, TVec, TypeExpr, Var, VNilT, alpha_eq, nat_eval,
    NatArithmeticError,
)


class EvalTypeError(Exception):
    """A value had the wrong shape; signals a typechecker bug upstream."""


class EmptyVectorError(Exception):
    pass


@dataclass(frozen=True)
class Closure:
    var: str
    body: Term
    env: tuple  # captured environment, by value

    def __repr__(self):
        return f"<closure {self.var}>"


@dataclass(frozen=True)
class PrimValue:
    """A partially applied evaluable primitive (only range qualifies)."""

    name: str
    args: Tuple[int, ...] = ()


ParamValue = Union[int, Tuple[int, ...], Closure, PrimValue]


def eval_param(m: Term, phi=(), env: Dict[str, ParamValue] = None) -> ParamValue:
    """Evaluate an evaluable term under an environment binding all of phi."""
    env = dict(env or {})
    return _eval(m, env)


def _eval(m: Term, env: Dict[str, ParamValue]) -> ParamValue:
    if isinstance(m, Var):
        if m.name not in env:
            raise EvalTypeError(f"unbound parameter {m.name!r}")
        return env[m.name]
    if isinstance(m, Lit):
        return m.value
    if isinstance(m, Arith):
        a = _nat(_eval(m.left, env))
        b = _nat(_eval(m.right, env))
        if m.op == "+":
            return a + b
        if m.op == "-":
            return max(0, a - b)
        if m.op == "*":
            return a * b
        if m.op == "/":
            if b == 0:
                raise NatArithmeticError("division by zero")
            return a // b
        if m.op == "^":
            return a ** b
        raise EvalTypeError(f"unknown operator {m.op!r}")
    if isinstance(m, Cons):
        head = _nat(_eval(m.head, env))
        tail = _vec(_eval(m.tail, env))
        return (head,) + tail
    if isinstance(m, VNilT):
        return ()
    if isinstance(m, PLam):
        return Closure(m.var, m.body, tuple(sorted(env.items(),
                                                   key=lambda kv: kv[0])))
    if isinstance(m, PApp):
        fn = _eval(m.fn, env)
        arg = _eval(m.arg, env)
        return _apply(fn, arg)
    if isinstance(m, App):
        # state-level application never occurs in evaluable terms
        raise EvalTypeError("state application inside an evaluable term")
    if isinstance(m, Ifz):
        guard = _nat(_eval(m.guard, env))
        return _eval(m.then if guard == 0 else m.other, env)
    if isinstance(m, Prim):
        if m.name != "range":
            raise EvalTypeError(f"primitive {m.name!r} is not evaluable")
        return PrimValue("range")
    if isinstance(m, For):
        items = _vec(_eval(m.vec, env))
        out = []
        for v in items:
            inner = dict(env)
            inner[m.var] = v
            out.append(_nat(_eval(m.body, inner)))
        return tuple(out)
    if isinstance(m, LetCons):
        subject = _vec(_eval(m.subject, env))
        if not subject:
            raise EmptyVectorError("destructuring an empty parameter vector")
        inner = dict(env)
        inner[m.x] = subject[0]
        inner[m.y] = subject[1:]
        return _eval(m.body, inner)
    if isinstance(m, Reverse):
        return tuple(reversed(_vec(_eval(m.arg, env))))
    raise EvalTypeError(f"term is not evaluable: {m!r}")


def _apply(fn: ParamValue, arg: ParamValue) -> ParamValue:
    if isinstance(fn, Closure):
        env = dict(fn.env)
        env[fn.var] = arg
        return _eval(fn.body, env)
    if isinstance(fn, PrimValue) and fn.name == "range":
        args = fn.args + (_nat(arg),)
        if len(args) == 2:
            lo, hi = args
            return tuple(range(lo, hi))
        return PrimValue("range", args)
    raise EvalTypeError(f"applying a non-function value {fn!r}")


def _nat(v: ParamValue) -> int:
    if not isinstance(v, int):
        raise EvalTypeError(f"expected a natural, got {v!r}")
    return v


def _vec(v: ParamValue) -> Tuple[int, ...]:
    if not isinstance(v, tuple):
        raise EvalTypeError(f"expected a vector of naturals, got {v!r}")
    return v


def check_value_shape(value: ParamValue, t: TypeExpr, env: dict) -> bool:
    """Lemma-style runtime check: the value inhabits the evaluated type."""
    from .lambda_core import TArrow

    if isinstance(t, TNat):
        return isinstance(value, int)
    if isinstance(t, TVec) and isinstance(t.elem, TNat):
        if not isinstance(value, tuple):
            return False
        return len(value) == nat_eval(t.size, env)
    if isinstance(t, TArrow):
        return isinstance(value, (Closure, PrimValue))
    return False


def values_equal(a: ParamValue, b: ParamValue) -> bool:
    if isinstance(a, Closure) and isinstance(b, Closure):
        if a.env != b.env:
            return False
        from .lambda_core import PLam as _PLam

        return alpha_eq(_PLam(a.var, None, a.body), _PLam(b.var, None, b.body))
    return a == b


def eval_preserved_by_step(m: Term, n: Term, phi=(), env=None) -> bool:
    """Test-harness check that a single reduction step preserves evaluation."""
    return values_equal(eval_param(m, phi, env), eval_param(n, phi, env))
