"""Linear/non-linear type checking with leftover contexts.

State variables are consumed exactly once; parameter variables freely.
Context splits for the multiplicative rules are inferred by threading the
leftover state context left to right. Size equalities are decided by a
sound canonicalizer over symbolic naturals; inside the else branch of
``ifz g`` the fact ``g >= 1`` joins the normalization context, which is what
makes the controlled-rotation cascade in the QFT corpus check.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .lambda_core import (
    App, Arith, Cons, Context, For, Ifz, Lam, LetCons, LetTensor, Lit, Macro,
    Meas, New, NBin, NConst, NIte0, NSum, NVar, NatExpr, PApp, PLam, Prim,
    Reverse, Rotation, Seq, SeqVec, Span, Star, TArrow, TBit, TLolli, TNat,
    TQubit, TTensor, TUnit, TVec, Tensor, Term, Token, TypeExpr, Unitary,
    VNilT, Var, fresh_name, is_param_type, is_state_type, natlist_length,
    term_to_natexpr, term_to_natlistexpr, type_free_vars, type_subst,
    nat_free_vars,
)

KINDS = ("linearity", "mismatch", "size", "unbound", "param")


class TypeCheckError(Exception):
    """Typing failure carrying enough data for a one-line diagnostic."""

    def __init__(self, kind: str, message: str, span: Optional[Span] = None,
                 expected=None, found=None):
        assert kind in KINDS
        self.kind = kind
        self.message = message
        self.span = span
        self.expected = expected
        self.found = found
        super().__init__(self.render("<input>"))

    def render(self, filename: str) -> str:
        loc = f"{self.span}" if self.span else "?:?"
        extra = ""
        if self.expected is not None or self.found is not None:
            extra = f" (expected {self.expected!r}, found {self.found!r})"
        return f"{filename}:{loc}: {self.kind}: {self.message}{extra}"


@dataclass(frozen=True)
class Derivation:
    """One node of a typing derivation, consumed by the translator."""

    rule: str
    term: Term
    type: TypeExpr
    phi: tuple
    consumed: tuple  # state vars consumed, in ambient declaration order
    children: tuple = ()
    aux: dict = field(default_factory=dict, compare=False)


# ---------------------------------------------------------------------------
# Canonicalization of symbolic naturals
#
# A normalized expression is an integer-coefficient polynomial over atoms
# (variables and opaque heads). Monus collapses to exact subtraction when the
# guard facts entail it; otherwise it stays an opaque atom. Equal canonical
# forms imply equality under every environment satisfying the guards.

Poly = Tuple[Tuple[tuple, int], ...]  # sorted ((monomial, coeff), ...)


def _pconst(c: int) -> Poly:
    return (((), c),) if c else ()


def _patom(atom) -> Poly:
    return ((((atom, 1),), 1),)


def _padd(a: Poly, b: Poly) -> Poly:
    acc = dict(a)
    for mono, c in b:
        acc[mono] = acc.get(mono, 0) + c
        if acc[mono] == 0:
            del acc[mono]
    return tuple(sorted(acc.items()))


def _pneg(a: Poly) -> Poly:
    return tuple((m, -c) for m, c in a)


def _pmul(a: Poly, b: Poly) -> Poly:
    acc: dict = {}
    for m1, c1 in a:
        for m2, c2 in b:
            powers: dict = {}
            for at, p in m1 + m2:
                powers[at] = powers.get(at, 0) + p
            mono = tuple(sorted(powers.items()))
            acc[mono] = acc.get(mono, 0) + c1 * c2
            if acc[mono] == 0:
                del acc[mono]
    return tuple(sorted(acc.items()))


def _pint(a: Poly) -> Optional[int]:
    if not a:
        return 0
    if len(a) == 1 and a[0][0] == ():
        return a[0][1]
    return None


def _nonneg_coeffs(p: Poly) -> bool:
    return all(c >= 0 for _, c in p)


def _entails_nonneg(p: Poly, facts: Tuple[Poly, ...], depth: int = 3) -> bool:
    """Sound check that p >= 0 under facts of the form q >= 0."""
    if _nonneg_coeffs(p):
        return True
    if depth <= 0:
        return False
    for q in facts:
        if q and _entails_nonneg(_padd(p, _pneg(q)), facts, depth - 1):
            return True
    return False


def _merge_ite0(p: Poly) -> Poly:
    plain: dict = {}
    grouped: dict = {}
    for mono, c in p:
        if len(mono) == 1 and mono[0][1] == 1 and mono[0][0][0] == "ite0":
            _, g, t, e = mono[0][0]
            key = g
            ct, ce = grouped.get(key, ((), ()))
            grouped[key] = (_padd(ct, _pmul(_pconst(c), t)),
                            _padd(ce, _pmul(_pconst(c), e)))
        else:
            plain[mono] = plain.get(mono, 0) + c
    out = tuple(sorted(plain.items()))
    for g, (t, e) in sorted(grouped.items()):
        if t == e:
            out = _padd(out, t)
        elif not t and not e:
            continue
        else:
            out = _padd(out, _patom(("ite0", g, t, e)))
    return out


class _Normalizer:
    def __init__(self, facts: Tuple[Poly, ...] = (), zeros: frozenset = frozenset()):
        self.facts = facts
        self.zeros = zeros

    def poly(self, e: NatExpr) -> Poly:
        if isinstance(e, NConst):
            return _pconst(e.value)
        if isinstance(e, NVar):
            if e.name in self.zeros:
                return ()
            return _patom(("var", e.name))
        if isinstance(e, NBin):
            a = self.poly(e.left)
            b = self.poly(e.right)
            if e.op == "+":
                return _merge_ite0(_padd(a, b))
            if e.op == "*":
                return _merge_ite0(_pmul(a, b))
            if e.op == "-":
                diff = _padd(a, _pneg(b))
                if _entails_nonneg(diff, self.facts):
                    return diff
                if _entails_nonneg(_pneg(diff), self.facts):
                    return ()
                return _patom(("monus", a, b))
            if e.op == "/":
                ca, cb = _pint(a), _pint(b)
                if ca is not None and cb is not None and cb != 0:
                    return _pconst(ca // cb)
                return _patom(("div", a, b))
            if e.op == "^":
                ca, cb = _pint(a), _pint(b)
                if ca is not None and cb is not None:
                    return _pconst(ca ** cb)
                if cb is not None and 0 <= cb <= 4:
                    out = _pconst(1)
                    for _ in range(cb):
                        out = _pmul(out, a)
                    return out
                return _patom(("pow", a, b))
            raise ValueError(f"unknown operator {e.op!r}")
        if isinstance(e, NIte0):
            g = self.poly(e.guard)
            t = self.poly(e.then)
            o = self.poly(e.other)
            cg = _pint(g)
            if cg is not None:
                return t if cg == 0 else o
            if _entails_nonneg(_padd(g, _pconst(-1)), self.facts):
                return o
            if t == o:
                return t
            return _patom(("ite0", g, t, o))
        if isinstance(e, NSum):
            body_free = nat_free_vars(e.body)
            if e.index not in body_free:
                length = natlist_length(e.over)
                if length is not None:
                    return _merge_ite0(_pmul(self.poly(length), self.poly(e.body)))
            inner = _Normalizer(self.facts)
            return _patom(("sum", e.index, repr(e.over), inner.poly(e.body)))
        raise TypeError(f"not a NatExpr: {e!r}")


def _poly_to_nat(p: Poly) -> NatExpr:
    pos: List[NatExpr] = []
    neg: List[NatExpr] = []
    for mono, coeff in p:
        factors: List[NatExpr] = []
        for atom, power in mono:
            factors.extend([_atom_to_nat(atom)] * power)
        term: Optional[NatExpr] = None
        for f in factors:
            term = f if term is None else NBin("*", term, f)
        c = abs(coeff)
        if term is None:
            term = NConst(c)
        elif c != 1:
            term = NBin("*", NConst(c), term)
        (pos if coeff > 0 else neg).append(term)

    def chain(parts):
        out = None
        for t in parts:
            out = t if out is None else NBin("+", out, t)
        return out

    p_expr = chain(pos) or NConst(0)
    if neg:
        return NBin("-", p_expr, chain(neg))
    return p_expr


def _atom_to_nat(atom) -> NatExpr:
    tag = atom[0]
    if tag == "var":
        return NVar(atom[1])
    if tag == "monus":
        return NBin("-", _poly_to_nat(atom[1]), _poly_to_nat(atom[2]))
    if tag == "div":
        return NBin("/", _poly_to_nat(atom[1]), _poly_to_nat(atom[2]))
    if tag == "pow":
        return NBin("^", _poly_to_nat(atom[1]), _poly_to_nat(atom[2]))
    if tag == "ite0":
        return NIte0(_poly_to_nat(atom[1]), _poly_to_nat(atom[2]),
                     _poly_to_nat(atom[3]))
    if tag == "sum":
        raise ValueError("sum atoms have no closed rebuild; compare polys instead")
    raise ValueError(f"unknown atom {atom!r}")


def nat_normalize(e: NatExpr, guards: tuple = ()) -> NatExpr:
    """Sound canonical form: equal results imply equality in all environments
    satisfying the guards.

    A guard entry is either a NatExpr asserting >= 1 (the else branch of an
    ifz) or ("eq0", NatExpr) asserting = 0 (the then branch). Contradictory
    guards mark dead code, where every size equation holds vacuously.
    """
    facts, zeros, contradiction = _guard_state(guards)
    if contradiction:
        return NConst(0)
    return _poly_to_nat(_Normalizer(facts, zeros).poly(e))


def _guard_state(guards: tuple):
    facts: Tuple[Poly, ...] = ()
    zeros: frozenset = frozenset()
    contradiction = False
    for g in guards:
        if isinstance(g, tuple) and g and g[0] == "eq0":
            facts, zeros, contradiction = _add_zero_guard(
                g[1], facts, zeros, contradiction)
        else:
            facts, contradiction = _add_guard(g, facts, zeros, contradiction)
    return facts, zeros, contradiction


def _add_guard(g: NatExpr, facts, zeros, contradiction):
    # g >= 1. For a truncated subtraction a - b this also implies the exact
    # integer inequality a >= b + 1 (and in particular a >= 1), which is what
    # lets later occurrences of the same monus collapse to exact subtraction.
    if isinstance(g, NBin) and g.op == "-":
        facts, contradiction = _add_guard(g.left, facts, zeros, contradiction)
        n = _Normalizer(facts, zeros)
        a, b = n.poly(g.left), n.poly(g.right)
        facts = facts + (_padd(_padd(a, _pneg(b)), _pconst(-1)),)
    p = _Normalizer(facts, zeros).poly(g)
    c = _pint(p)
    if c is not None and c < 1:
        contradiction = True
    facts = facts + (_padd(p, _pconst(-1)),)
    return facts, contradiction


def _add_zero_guard(g: NatExpr, facts, zeros, contradiction):
    # g = 0. A vanishing subtraction a - b gives the inequality b >= a; a
    # vanishing nonneg sum of variables zeroes each of them.
    if isinstance(g, NBin) and g.op == "-":
        n = _Normalizer(facts, zeros)
        a, b = n.poly(g.left), n.poly(g.right)
        facts = facts + (_padd(b, _pneg(a)),)
        return facts, zeros, contradiction
    p = _Normalizer(facts, zeros).poly(g)
    c = _pint(p)
    if c is not None:
        if c != 0:
            contradiction = True
        return facts, zeros, contradiction
    if all(coeff > 0 for _, coeff in p) and ((), 0) not in dict(p).items():
        constant = dict(p).get((), 0)
        if constant > 0:
            return facts, zeros, True
        for mono, _ in p:
            if len(mono) == 1 and mono[0][1] == 1 and mono[0][0][0] == "var":
                zeros = zeros | {mono[0][0][1]}
    return facts, zeros, contradiction


def nats_equal(a: NatExpr, b: NatExpr, guards: tuple = ()) -> bool:
    facts, zeros, contradiction = _guard_state(guards)
    if contradiction:
        return True
    n = _Normalizer(facts, zeros)
    return n.poly(a) == n.poly(b)


def guards_contradictory(guards: tuple) -> bool:
    """True when the guard set cannot be satisfied (dead code)."""
    return _guard_state(guards)[2]


def types_equal(a: TypeExpr, b: TypeExpr, guards: Tuple[NatExpr, ...] = ()) -> bool:
    if isinstance(a, (TBit, TQubit, TUnit, TNat)):
        return type(a) is type(b)
    if isinstance(a, TTensor) and isinstance(b, TTensor):
        return types_equal(a.left, b.left, guards) and types_equal(a.right, b.right, guards)
    if isinstance(a, TLolli) and isinstance(b, TLolli):
        return types_equal(a.arg, b.arg, guards) and types_equal(a.res, b.res, guards)
    if isinstance(a, TVec) and isinstance(b, TVec):
        return types_equal(a.elem, b.elem, guards) and nats_equal(a.size, b.size, guards)
    if isinstance(a, TArrow) and isinstance(b, TArrow):
        if a.var == b.var:
            return types_equal(a.body, b.body, guards)
        fresh = fresh_name(a.var, type_free_vars(a.body) | type_free_vars(b.body))
        return types_equal(type_subst(a.body, a.var, NVar(fresh)),
                           type_subst(b.body, b.var, NVar(fresh)), guards)
    return False


def classify(a: TypeExpr) -> str:
    """Evaluable when the final codomain is a parameter type, translatable
    when it is a state type."""
    body = a
    while isinstance(body, TArrow):
        body = body.body
    if is_param_type(body):
        return "evaluable"
    if is_state_type(body):
        return "translatable"
    raise TypeCheckError("mismatch", f"type {body!r} is neither parameter nor state")


# ---------------------------------------------------------------------------
# Primitive and macro signatures


def prim_signature(name: str, type_args: tuple) -> TypeExpr:
    def freshes(count, avoid):
        out = []
        for base in ("n", "m", "p")[:count]:
            nm = fresh_name(base, avoid)
            avoid = avoid | {nm}
            out.append(nm)
        return out

    avoid = set()
    for t in type_args:
        avoid |= type_free_vars(t)
    if name == "accuMap":
        if len(type_args) != 3:
            raise TypeCheckError("mismatch", "accuMap needs three type arguments")
        a, b, c = type_args
        (n,) = freshes(1, avoid)
        nv = NVar(n)
        fn = TLolli(a, TLolli(c, TTensor(b, c)))
        return TArrow(n, TLolli(TVec(a, nv),
                                TLolli(TVec(fn, nv),
                                       TLolli(c, TTensor(TVec(b, nv), c)))))
    if name == "split":
        (a,) = _one_arg(name, type_args)
        n, m = freshes(2, avoid)
        nv, mv = NVar(n), NVar(m)
        return TArrow(n, TArrow(m, TLolli(TVec(a, NBin("+", nv, mv)),
                                          TTensor(TVec(a, nv), TVec(a, mv)))))
    if name == "append":
        (a,) = _one_arg(name, type_args)
        n, m = freshes(2, avoid)
        nv, mv = NVar(n), NVar(m)
        return TArrow(n, TArrow(m, TLolli(TVec(a, nv),
                                          TLolli(TVec(a, mv),
                                                 TVec(a, NBin("+", nv, mv))))))
    if name == "drop":
        if type_args:
            raise TypeCheckError("mismatch", "drop takes no type arguments")
        (n,) = freshes(1, avoid)
        return TArrow(n, TLolli(TVec(TUnit(), NVar(n)), TUnit()))
    if name == "range":
        if type_args:
            raise TypeCheckError("mismatch", "range takes no type arguments")
        n, m = freshes(2, avoid)
        return TArrow(n, TArrow(m, TVec(TNat(), NBin("-", NVar(m), NVar(n)))))
    raise TypeCheckError("unbound", f"unknown primitive {name!r}")


def _one_arg(name, type_args):
    if len(type_args) != 1:
        raise TypeCheckError("mismatch", f"{name} needs one type argument")
    return type_args


def macro_signature(name: str, type_args: tuple) -> TypeExpr:
    avoid = set()
    for t in type_args:
        avoid |= type_free_vars(t)
    n = fresh_name("n", avoid)
    nv = NVar(n)
    if name == "map":
        if len(type_args) != 2:
            raise TypeCheckError("mismatch", "map needs two type arguments")
        a, b = type_args
        return TArrow(n, TLolli(TVec(a, nv),
                                TLolli(TVec(TLolli(a, b), nv), TVec(b, nv))))
    if name == "fold":
        if len(type_args) != 2:
            raise TypeCheckError("mismatch", "fold needs two type arguments")
        a, c = type_args
        fn = TLolli(a, TLolli(c, c))
        return TArrow(n, TLolli(TVec(a, nv),
                                TLolli(TVec(fn, nv), TLolli(c, c))))
    if name == "compose":
        if len(type_args) != 1:
            raise TypeCheckError("mismatch", "compose needs one type argument")
        (a,) = type_args
        return TArrow(n, TLolli(TVec(TLolli(a, a), nv), TLolli(a, a)))
    raise TypeCheckError("unbound", f"unknown macro {name!r}")


# ---------------------------------------------------------------------------
# The checker


@dataclass
class _Env:
    phi: tuple            # ((name, type), ...) innermost first
    gamma: tuple          # ((name, type), ...) in declaration order
    avail: frozenset
    guards: tuple         # NatExpr facts, each >= 1

    def param_type(self, name):
        for n, t in self.phi:
            if n == name:
                return t
        return None

    def gamma_index(self, name):
        for i, (n, _) in enumerate(self.gamma):
            if n == name:
                return i
        return None


def _ordered(env: _Env, names) -> tuple:
    pairs = [(env.gamma_index(n), n) for n in names]
    return tuple((n, dict(env.gamma)[n]) for _, n in sorted(pairs))


class _Checker:
    def __init__(self):
        pass

    def infer(self, m: Term, env: _Env, expected: Optional[TypeExpr] = None):
        deriv, avail = self._infer(m, env, expected)
        if expected is not None and not types_equal(deriv.type, expected, env.guards):
            kind = "size" if _same_shape(deriv.type, expected) else "mismatch"
            raise TypeCheckError(kind, "term does not have the required type",
                                 getattr(m, "span", None),
                                 expected=expected, found=deriv.type)
        return deriv, avail

    def pcheck(self, m: Term, env: _Env, expected: Optional[TypeExpr] = None):
        """Check a parameter-position subterm: no state consumption allowed."""
        deriv, avail = self.infer(m, env)
        if deriv.consumed:
            raise TypeCheckError(
                "param",
                f"state variable {deriv.consumed[0][0]!r} used in a parameter position",
                getattr(m, "span", None))
        if not is_param_type(deriv.type) or \
                (expected is not None and
                 not types_equal(deriv.type, expected, env.guards)):
            raise TypeCheckError("param", "parameter position needs a parameter type",
                                 getattr(m, "span", None),
                                 expected=expected or TNat(), found=deriv.type)
        return deriv, avail

    # -- dispatch ------------------------------------------------------------

    def _infer(self, m: Term, env: _Env, expected):
        span = getattr(m, "span", None)

        if isinstance(m, Var):
            if env.gamma_index(m.name) is not None:
                if m.name not in env.avail:
                    raise TypeCheckError("linearity",
                                         f"state variable {m.name!r} used twice", span)
                t = dict(env.gamma)[m.name]
                d = Derivation("ax", m, t, env.phi, ((m.name, t),), aux={"kind": "state"})
                return d, env.avail - {m.name}
            t = env.param_type(m.name)
            if t is not None:
                return Derivation("ax", m, t, env.phi, (), aux={"kind": "param"}), env.avail
            raise TypeCheckError("unbound", f"unbound variable {m.name!r}", span)

        if isinstance(m, Lit):
            as_bit = isinstance(expected, TBit)
            if as_bit and m.value not in (0, 1):
                raise TypeCheckError("mismatch", f"{m.value} is not a bit", span,
                                     expected=TBit(), found=TNat())
            t = TBit() if as_bit else TNat()
            rule = f"ax{m.value}" if as_bit else "axn"
            return Derivation(rule, m, t, env.phi, (), aux={"as_bit": as_bit}), env.avail

        if isinstance(m, Star):
            return Derivation("ax_star", m, TUnit(), env.phi, ()), env.avail

        if isinstance(m, VNilT):
            elem = m.elem_type
            if elem is None:
                if isinstance(expected, TVec):
                    elem = expected.elem
                else:
                    raise TypeCheckError("mismatch",
                                         "cannot infer the element type of VNil; "
                                         "annotate it", span)
            t = TVec(elem, NConst(0))
            return Derivation("vnil", m, t, env.phi, ()), env.avail

        if isinstance(m, Meas):
            return Derivation("meas", m, TLolli(TQubit(), TBit()), env.phi, ()), env.avail
        if isinstance(m, New):
            return Derivation("new", m, TLolli(TBit(), TQubit()), env.phi, ()), env.avail

        if isinstance(m, Unitary):
            if m.name == "H":
                t: TypeExpr = TLolli(TQubit(), TQubit())
            else:
                t = TLolli(TQubit(), TLolli(TQubit(), TTensor(TQubit(), TQubit())))
            return Derivation("u", m, t, env.phi, ()), env.avail

        if isinstance(m, Rotation):
            t = TArrow("n", TLolli(TQubit(), TQubit()))
            return Derivation("r", m, t, env.phi, ()), env.avail

        if isinstance(m, Prim):
            t = prim_signature(m.name, m.type_args)
            return Derivation("prim", m, t, env.phi, ()), env.avail

        if isinstance(m, Macro):
            t = macro_signature(m.name, m.type_args)
            return Derivation("macro", m, t, env.phi, ()), env.avail

        if isinstance(m, Token):
            return Derivation("token", m, TQubit(), env.phi, ()), env.avail

        if isinstance(m, Lam):
            return self._infer_lam(m, env, expected, span)
        if isinstance(m, PLam):
            return self._infer_plam(m, env, expected, span)
        if isinstance(m, App):
            return self._infer_app(m, env, span)
        if isinstance(m, PApp):
            return self._infer_papp(m, env, span)
        if isinstance(m, Tensor):
            return self._infer_tensor(m, env, expected, span)
        if isinstance(m, LetTensor):
            return self._infer_let_tensor(m, env, expected, span)
        if isinstance(m, Cons):
            return self._infer_cons(m, env, expected, span)
        if isinstance(m, LetCons):
            return self._infer_let_cons(m, env, expected, span)
        if isinstance(m, Seq):
            return self._infer_seq(m, env, expected, span, vec=False)
        if isinstance(m, SeqVec):
            return self._infer_seq(m, env, expected, span, vec=True)
        if isinstance(m, Arith):
            dl, avail = self.pcheck(m.left, env, TNat())
            dr, avail = self.pcheck(m.right, _replace(env, avail=avail), TNat())
            d = Derivation("arith", m, TNat(), env.phi, (), (dl, dr))
            return d, avail
        if isinstance(m, Ifz):
            return self._infer_ifz(m, env, expected, span)
        if isinstance(m, For):
            return self._infer_for(m, env, span)
        if isinstance(m, Reverse):
            da, avail = self.pcheck(m.arg, env)
            if not (isinstance(da.type, TVec) and isinstance(da.type.elem, TNat)):
                raise TypeCheckError("mismatch", "reverse needs a parameter vector",
                                     span, expected=TVec(TNat(), NVar("n")),
                                     found=da.type)
            return Derivation("reverse", m, da.type, env.phi, (), (da,)), avail

        raise TypeCheckError("mismatch", f"cannot type {m!r}", span)

    # -- rule bodies ----------------------------------------------------------

    def _infer_lam(self, m: Lam, env, expected, span):
        binder = m.var_type
        body_expected = None
        if isinstance(expected, TLolli):
            if binder is None:
                binder = expected.arg
            elif not types_equal(binder, expected.arg, env.guards):
                raise TypeCheckError("mismatch", "binder annotation disagrees",
                                     span, expected=expected.arg, found=binder)
            body_expected = expected.res
        if binder is None:
            raise TypeCheckError("mismatch",
                                 f"cannot infer the type of binder {m.var!r}; "
                                 "annotate it", span)
        if not is_state_type(binder):
            raise TypeCheckError("param",
                                 "state lambda binder must have a state type",
                                 span, found=binder)
        name = m.var
        if env.gamma_index(name) is not None or env.param_type(name) is not None:
            raise TypeCheckError("mismatch", f"shadowed variable {name!r}; rename",
                                 span)
        inner = _replace(env, gamma=env.gamma + ((name, binder),),
                         avail=env.avail | {name})
        dbody, avail = self.infer(m.body, inner, body_expected)
        if name in avail:
            raise TypeCheckError("linearity",
                                 f"state variable {name!r} is never used", span)
        consumed = tuple((n, t) for n, t in dbody.consumed if n != name)
        t = TLolli(binder, dbody.type)
        d = Derivation("lam", m, t, env.phi, consumed, (dbody,),
                       aux={"binder": name, "binder_type": binder})
        return d, avail - {name}

    def _infer_plam(self, m: PLam, env, expected, span):
        if m.var_type is not None and not isinstance(m.var_type, TNat):
            raise TypeCheckError("param",
                                 "parameter lambda binders must have type Nat",
                                 span, expected=TNat(), found=m.var_type)
        name = m.var
        if env.gamma_index(name) is not None or env.param_type(name) is not None:
            raise TypeCheckError("mismatch", f"shadowed variable {name!r}; rename",
                                 span)
        body_expected = None
        if isinstance(expected, TArrow):
            body_expected = type_subst(expected.body, expected.var, NVar(name))
        inner = _replace(env, phi=((name, TNat()),) + env.phi)
        dbody, avail = self.infer(m.body, inner, body_expected)
        t = TArrow(name, dbody.type)
        d = Derivation("plam", m, t, env.phi, dbody.consumed, (dbody,),
                       aux={"binder": name})
        return d, avail

    def _infer_app(self, m: App, env, span):
        dfn, avail = self.infer(m.fn, env)
        if not isinstance(dfn.type, TLolli):
            if isinstance(dfn.type, TArrow):
                raise TypeCheckError("mismatch",
                                     "parameter function applied with a state "
                                     "argument; use @", span, found=dfn.type)
            raise TypeCheckError("mismatch", "applying a non-function", span,
                                 found=dfn.type)
        darg, avail = self.infer(m.arg, _replace(env, avail=avail), dfn.type.arg)
        consumed = _ordered(env, [n for n, _ in dfn.consumed + darg.consumed])
        d = Derivation("app", m, dfn.type.res, env.phi, consumed, (dfn, darg))
        return d, avail

    def _infer_papp(self, m: PApp, env, span):
        dfn, avail = self.infer(m.fn, env)
        if not isinstance(dfn.type, TArrow):
            raise TypeCheckError("mismatch", "@ applied to a non-parameter function",
                                 span, found=dfn.type)
        darg, avail = self.pcheck(m.arg, _replace(env, avail=avail), TNat())
        arg_expr = term_to_natexpr(m.arg)
        body = dfn.type.body
        if arg_expr is not None:
            result = type_subst(body, dfn.type.var, arg_expr)
        elif dfn.type.var not in type_free_vars(body):
            result = body
        else:
            raise TypeCheckError("size",
                                 "parameter argument is too complex for a size index",
                                 span)
        d = Derivation("papp", m, result, env.phi, dfn.consumed, (dfn, darg),
                       aux={"arg_expr": arg_expr})
        return d, avail

    def _infer_tensor(self, m: Tensor, env, expected, span):
        el = expected.left if isinstance(expected, TTensor) else None
        er = expected.right if isinstance(expected, TTensor) else None
        dl, avail = self.infer(m.left, env, el)
        dr, avail = self.infer(m.right, _replace(env, avail=avail), er)
        consumed = _ordered(env, [n for n, _ in dl.consumed + dr.consumed])
        t = TTensor(dl.type, dr.type)
        return Derivation("tensor", m, t, env.phi, consumed, (dl, dr)), avail

    def _infer_let_tensor(self, m: LetTensor, env, expected, span):
        dsub, avail = self.infer(m.subject, env)
        if not isinstance(dsub.type, TTensor):
            raise TypeCheckError("mismatch", "let (*) needs a tensor subject",
                                 span, found=dsub.type)
        xt, yt = dsub.type.left, dsub.type.right
        _check_annot(m.x_type, xt, env.guards, span)
        _check_annot(m.y_type, yt, env.guards, span)
        inner = _replace(env, gamma=env.gamma + ((m.x, xt), (m.y, yt)),
                         avail=avail | {m.x, m.y})
        dbody, avail2 = self.infer(m.body, inner, expected)
        for b in (m.x, m.y):
            if b in avail2:
                raise TypeCheckError("linearity",
                                     f"bound variable {b!r} is never used", span)
        consumed = _ordered(env, [n for n, _ in dsub.consumed] +
                            [n for n, _ in dbody.consumed if n not in (m.x, m.y)])
        d = Derivation("let_tensor", m, dbody.type, env.phi, consumed,
                       (dsub, dbody), aux={"x_type": xt, "y_type": yt})
        return d, avail2 - {m.x, m.y}

    def _infer_cons(self, m: Cons, env, expected, span):
        eh = expected.elem if isinstance(expected, TVec) else None
        et = None
        if isinstance(expected, TVec):
            et = TVec(expected.elem, NBin("-", expected.size, NConst(1)))
        if eh is None and isinstance(m.head, Lit):
            # bare 0/1 could be a bit; let the tail pick the element type
            dt, avail = self.infer(m.tail, env, et)
            if not isinstance(dt.type, TVec):
                raise TypeCheckError("mismatch", ":: needs a vector tail", span,
                                     found=dt.type)
            dh, avail = self.infer(m.head, _replace(env, avail=avail),
                                   dt.type.elem)
            t = TVec(dt.type.elem, NBin("+", dt.type.size, NConst(1)))
            consumed = _ordered(env, [n for n, _ in dh.consumed + dt.consumed])
            return Derivation("cons", m, t, env.phi, consumed, (dh, dt)), avail
        dh, avail = self.infer(m.head, env, eh)
        dt, avail = self.infer(m.tail, _replace(env, avail=avail), et)
        if not isinstance(dt.type, TVec):
            raise TypeCheckError("mismatch", ":: needs a vector tail", span,
                                 found=dt.type)
        if not types_equal(dh.type, dt.type.elem, env.guards):
            kind = "size" if _same_shape(dh.type, dt.type.elem) else "mismatch"
            raise TypeCheckError(kind, "cons head type disagrees with tail",
                                 span, expected=dt.type.elem, found=dh.type)
        t = TVec(dt.type.elem, NBin("+", dt.type.size, NConst(1)))
        consumed = _ordered(env, [n for n, _ in dh.consumed + dt.consumed])
        return Derivation("cons", m, t, env.phi, consumed, (dh, dt)), avail

    def _infer_let_cons(self, m: LetCons, env, expected, span):
        dsub, avail = self.infer(m.subject, env)
        if not isinstance(dsub.type, TVec):
            raise TypeCheckError("mismatch", "let :: needs a vector subject",
                                 span, found=dsub.type)
        size = dsub.type.size
        if nats_equal(size, NConst(0), env.guards) and \
                not guards_contradictory(env.guards):
            raise TypeCheckError("size", "destructuring an empty vector", span,
                                 found=dsub.type)
        elem = dsub.type.elem
        tail_size = nat_normalize(NBin("-", size, NConst(1)), env.guards)
        xt, yt = elem, TVec(elem, tail_size)
        _check_annot(m.x_type, xt, env.guards, span)
        _check_annot(m.y_type, yt, env.guards, span)
        if is_param_type(elem):
            inner = _replace(env, phi=((m.x, xt), (m.y, yt)) + env.phi, avail=avail)
            dbody, avail2 = self.infer(m.body, inner, expected)
            consumed = _ordered(env, [n for n, _ in dsub.consumed + dbody.consumed])
            d = Derivation("let_cons_param", m, dbody.type, env.phi, consumed,
                           (dsub, dbody), aux={"x_type": xt, "y_type": yt})
            return d, avail2
        inner = _replace(env, gamma=env.gamma + ((m.x, xt), (m.y, yt)),
                         avail=avail | {m.x, m.y})
        dbody, avail2 = self.infer(m.body, inner, expected)
        for b in (m.x, m.y):
            if b in avail2:
                raise TypeCheckError("linearity",
                                     f"bound variable {b!r} is never used", span)
        consumed = _ordered(env, [n for n, _ in dsub.consumed] +
                            [n for n, _ in dbody.consumed if n not in (m.x, m.y)])
        d = Derivation("let_cons", m, dbody.type, env.phi, consumed,
                       (dsub, dbody), aux={"x_type": xt, "y_type": yt})
        return d, avail2 - {m.x, m.y}

    def _infer_seq(self, m, env, expected, span, vec: bool):
        dfirst, avail = self.infer(m.first, env)
        if vec:
            if not isinstance(dfirst.type, TVec) or \
                    not nats_equal(dfirst.type.size, NConst(0), env.guards):
                raise TypeCheckError("size", ";v discards only empty vectors",
                                     span, expected=TVec(dfirst.type, NConst(0)),
                                     found=dfirst.type)
        else:
            if not isinstance(dfirst.type, TUnit):
                raise TypeCheckError("mismatch", "; discards only unit values",
                                     span, expected=TUnit(), found=dfirst.type)
        drest, avail = self.infer(m.rest, _replace(env, avail=avail), expected)
        consumed = _ordered(env, [n for n, _ in dfirst.consumed + drest.consumed])
        rule = "seq_vec" if vec else "seq"
        return Derivation(rule, m, drest.type, env.phi, consumed,
                          (dfirst, drest)), avail

    def _infer_ifz(self, m: Ifz, env, expected, span):
        dguard, avail = self.pcheck(m.guard, env, TNat())
        guard_expr = term_to_natexpr(m.guard)
        then_guards = env.guards
        else_guards = env.guards
        if guard_expr is not None:
            then_guards = env.guards + (("eq0", guard_expr),)
            else_guards = env.guards + (guard_expr,)
        env_then = _replace(env, avail=avail, guards=then_guards)
        dthen, avail_then = self.infer(m.then, env_then, expected)
        env_else = _replace(env, avail=avail, guards=else_guards)
        delse, avail_else = self.infer(m.other, env_else, expected)
        set_then = {n for n, _ in dthen.consumed}
        set_else = {n for n, _ in delse.consumed}
        if set_then != set_else:
            diff = sorted(set_then ^ set_else)
            raise TypeCheckError("linearity",
                                 f"ifz branches consume different variables: {diff}",
                                 span)
        # agreement is checked where the size arithmetic is richest; a branch
        # dead under a constant guard imposes no constraint of its own
        if not (types_equal(dthen.type, delse.type, else_guards) or
                types_equal(dthen.type, delse.type, then_guards)):
            kind = "size" if _same_shape(dthen.type, delse.type) else "mismatch"
            raise TypeCheckError(kind, "ifz branches have different types", span,
                                 expected=dthen.type, found=delse.type)
        live = dthen
        if guard_expr is not None:
            folded = nat_normalize(guard_expr, env.guards)
            if isinstance(folded, NConst) and folded.value > 0:
                live = delse
        consumed = _ordered(env, [n for n, _ in dguard.consumed] + sorted(set_then))
        d = Derivation("ifz", m, live.type, env.phi, consumed,
                       (dguard, dthen, delse), aux={"guard_expr": guard_expr})
        return d, avail_then

    def _infer_for(self, m: For, env, span):
        dvec, avail = self.pcheck(m.vec, env)
        if not (isinstance(dvec.type, TVec) and isinstance(dvec.type.elem, TNat)):
            raise TypeCheckError("mismatch", "for iterates over parameter vectors",
                                 span, expected=TVec(TNat(), NVar("n")),
                                 found=dvec.type)
        name = m.var
        if env.gamma_index(name) is not None or env.param_type(name) is not None:
            raise TypeCheckError("mismatch", f"shadowed variable {name!r}; rename",
                                 span)
        inner = _replace(env, phi=((name, TNat()),) + env.phi, avail=avail)
        dbody, avail2 = self.infer(m.body, inner)
        if name in type_free_vars(dbody.type):
            raise TypeCheckError("size",
                                 "for-body type may not depend on the index "
                                 "(index-dependent vectors are not representable)",
                                 span, found=dbody.type)
        length = dvec.type.size
        t = TVec(dbody.type, length)
        vec_expr = term_to_natlistexpr(m.vec)
        consumed = _ordered(env, [n for n, _ in dvec.consumed] +
                            [n for n, _ in dbody.consumed])
        d = Derivation("for", m, t, env.phi, consumed, (dvec, dbody),
                       aux={"vec_expr": vec_expr, "length": length, "index": name})
        return d, avail2

    # -- entry ---------------------------------------------------------------

    def run(self, phi, gamma, m: Term, expected=None) -> Derivation:
        env = _Env(tuple(phi), tuple(gamma),
                   frozenset(n for n, _ in gamma), ())
        deriv, avail = self.infer(m, env, expected)
        if avail:
            unused = sorted(avail)
            raise TypeCheckError("linearity",
                                 f"state variables never used: {unused}",
                                 getattr(m, "span", None))
        return deriv


def _replace(env: _Env, **kw) -> _Env:
    d = dict(phi=env.phi, gamma=env.gamma, avail=env.avail, guards=env.guards)
    d.update(kw)
    return _Env(**d)


def _check_annot(annot, actual, guards, span):
    if annot is not None and not types_equal(annot, actual, guards):
        kind = "size" if _same_shape(annot, actual) else "mismatch"
        raise TypeCheckError(kind, "pattern annotation disagrees with subject",
                             span, expected=actual, found=annot)


def _same_shape(a: TypeExpr, b: TypeExpr) -> bool:
    if type(a) is not type(b):
        return False
    if isinstance(a, TTensor):
        return _same_shape(a.left, b.left) and _same_shape(a.right, b.right)
    if isinstance(a, TLolli):
        return _same_shape(a.arg, b.arg) and _same_shape(a.res, b.res)
    if isinstance(a, TVec):
        return _same_shape(a.elem, b.elem)
    if isinstance(a, TArrow):
        return _same_shape(a.body, b.body)
    return True


def typecheck(phi, gamma, m: Term, expected: Optional[TypeExpr] = None) -> TypeExpr:
    """Type a judgement; returns the type or raises TypeCheckError."""
    return typecheck_full(phi, gamma, m, expected).type


def typecheck_full(phi, gamma, m: Term,
                   expected: Optional[TypeExpr] = None) -> Derivation:
    """Type a judgement and return the full derivation used by the translator."""
    return _Checker().run(tuple(phi), tuple(gamma), m, expected)


def check_program(program) -> Dict[str, TypeExpr]:
    """Check every definition with earlier definitions inlined."""
    from .lambda_core import subst
    from .reducer import make_binders_distinct

    types: Dict[str, TypeExpr] = {}
    inlined: Dict[str, Term] = {}
    for d in program.definitions:
        body = d.body
        for name, repl in inlined.items():
            body = subst(body, name, repl)
        body = make_binders_distinct(body)
        deriv = typecheck_full((), (), body, d.declared_type)
        types[d.name] = d.declared_type if d.declared_type is not None else deriv.type
        inlined[d.name] = body
    return types


def inline_definition(program, name: Optional[str] = None) -> Term:
    """Body of a definition (default: the entry) with earlier defs inlined,
    alpha-renamed so no binder shadows another."""
    from .lambda_core import subst
    from .reducer import make_binders_distinct

    inlined: Dict[str, Term] = {}
    target = name if name is not None else program.entry.name
    for d in program.definitions:
        body = d.body
        for n, repl in inlined.items():
            body = subst(body, n, repl)
        body = make_binders_distinct(body)
        if d.name == target:
            return body
        inlined[d.name] = body
    raise KeyError(f"no definition named {target!r}")
