"""Weak call-by-value small-step semantics, primitive unfoldings and macros.

The strategy is deterministic: a top-level redex fires first; otherwise the
congruence rules apply argument before function (right to left), matching
the printed rule pairs. Reduction never touches quantum constants: meas,
new, unitaries and rotations are inert.

Tensors are lazy pairs (any ``M (*) N`` is a value); cons cells require value
components so that unfolded ranges reach their list normal form. Stuck
non-value terms simply stop stepping; callers report them.
"""

from __future__ import annotations

from typing import Optional, Tuple

from .lambda_core import (
    App, Arith, Cons, For, Ifz, Lam, LetCons, LetTensor, Lit, Macro, Meas,
    New, PApp, PLam, Prim, Reverse, Rotation, Seq, SeqVec, Star, TLolli,
    TNat, TTensor, TUnit, TVec, Tensor, Term, Token, TypeExpr, Unitary,
    VNilT, Var, NVar, NBin, NConst, free_term_vars, fresh_name, subst,
    term_vars,
)


class ReductionFuelError(Exception):
    """The fuel bound was hit; signals a bug given strong normalization."""


# ---------------------------------------------------------------------------
# Values


def is_value(m: Term) -> bool:
    if isinstance(m, (Var, Lit, Star, Meas, New, Unitary, Rotation, Lam,
                      PLam, VNilT, Tensor, Prim, Macro, Token)):
        return True
    if isinstance(m, Cons):
        return is_value(m.head) and is_value(m.tail)
    if isinstance(m, (App, PApp)):
        return _partial_constant_spine(m)
    return False


_PRIM_ARITY = {
    # (parameter args, state args)
    "accuMap": (1, 3),
    "split": (2, 1),
    "append": (2, 2),
    "drop": (1, 1),
    "range": (2, 0),
}


def _spine(m: Term):
    """Decompose nested applications into (head, [(is_param, arg), ...])."""
    args = []
    while isinstance(m, (App, PApp)):
        args.append((isinstance(m, PApp), m.arg))
        m = m.fn
    return m, list(reversed(args))


def _partial_constant_spine(m: Term) -> bool:
    head, args = _spine(m)
    if not all(is_value(a) for _, a in args):
        return False
    if isinstance(head, Prim):
        np, ns = _PRIM_ARITY[head.name]
        return len(args) < np + ns
    if isinstance(head, Rotation):
        return len(args) < 2
    if isinstance(head, Unitary):
        return len(args) < (2 if head.name == "CNOT" else 1)
    return False


# ---------------------------------------------------------------------------
# Macro expansion

_Q = None  # placeholder to keep imports tidy


def _m(name, i):
    return f"{name}_x{i}"


def expand_macros(m: Term) -> Term:
    """Replace map/fold/compose with their definitional expansions."""
    counter = [0]

    def build(mac: Macro) -> Term:
        i = counter[0]
        counter[0] += 1
        if mac.name == "map":
            a, b = mac.type_args
            return _map_expansion(a, b, i)
        if mac.name == "fold":
            a, c = mac.type_args
            return _fold_expansion(a, c, i)
        if mac.name == "compose":
            (a,) = mac.type_args
            return _compose_expansion(a, i)
        raise ValueError(f"unknown macro {mac.name!r}")

    def go(t: Term) -> Term:
        if isinstance(t, Macro):
            if not t.type_args:
                raise ValueError(f"macro {t.name!r} is missing type arguments")
            return go(build(t))
        if isinstance(t, (Var, Lit, Star, VNilT, Meas, New, Unitary, Rotation,
                          Prim, Token)):
            return t
        kids = {f: getattr(t, f) for f in t.__dataclass_fields__}
        for f, val in list(kids.items()):
            if isinstance(val, Term):
                kids[f] = go(val)
        return type(t)(**kids)

    return go(m)


def _unit_range(n_name: str) -> Term:
    return PApp(PApp(Prim("range"), Lit(0)), Var(n_name))


def _map_expansion(a: TypeExpr, b: TypeExpr, i: int) -> Term:
    n, xs, fs, fs1, u1, xs1, u2, k, f, u, x, v = (
        _m(s, i) for s in ("n", "xs", "fs", "fs1", "u1", "xs1", "u2", "k",
                           "f", "u", "x", "v"))
    ab = TLolli(a, b)
    wrapped = TLolli(a, TLolli(TUnit(), TTensor(b, TUnit())))
    nv = NVar(n)
    gen = For(k, _unit_range(n),
              Lam(f, ab, Lam(u, TUnit(),
                             Tensor(Lam(x, a, Lam(v, TUnit(),
                                                  Tensor(App(Var(f), Var(x)), Var(v)))),
                                    Var(u)))))
    acc1 = App(App(App(PApp(Prim("accuMap", (ab, wrapped, TUnit())), Var(n)),
                       Var(fs)), gen), Star())
    acc2 = App(App(App(PApp(Prim("accuMap", (a, b, TUnit())), Var(n)),
                       Var(xs)), Var(fs1)), Star())
    body = LetTensor(fs1, TVec(wrapped, nv), u1, TUnit(), acc1,
                     LetTensor(xs1, TVec(b, nv), u2, TUnit(), acc2,
                               Seq(Var(u1), Seq(Var(u2), Var(xs1)))))
    return PLam(n, TNat(), Lam(xs, TVec(a, nv), Lam(fs, TVec(ab, nv), body)))


def _fold_expansion(a: TypeExpr, c: TypeExpr, i: int) -> Term:
    n, xs, fs, z, fs1, u, us, r, k, f, u2, x, y = (
        _m(s, i) for s in ("n", "xs", "fs", "z", "fs1", "u", "us", "r", "k",
                           "f", "u2", "x", "y"))
    acc = TLolli(a, TLolli(c, c))
    wrapped = TLolli(a, TLolli(c, TTensor(TUnit(), c)))
    nv = NVar(n)
    gen = For(k, _unit_range(n),
              Lam(f, acc, Lam(u2, TUnit(),
                              Tensor(Lam(x, a, Lam(y, c,
                                                   Tensor(Star(),
                                                          App(App(Var(f), Var(x)), Var(y))))),
                                     Var(u2)))))
    acc1 = App(App(App(PApp(Prim("accuMap", (acc, wrapped, TUnit())), Var(n)),
                       Var(fs)), gen), Star())
    acc2 = App(App(App(PApp(Prim("accuMap", (a, TUnit(), c)), Var(n)),
                       Var(xs)), Var(fs1)), Var(z))
    drop = App(PApp(Prim("drop"), Var(n)), Var(us))
    body = LetTensor(fs1, TVec(wrapped, nv), u, TUnit(), acc1,
                     LetTensor(us, TVec(TUnit(), nv), r, c, acc2,
                               Seq(Var(u), Seq(drop, Var(r)))))
    return PLam(n, TNat(),
                Lam(xs, TVec(a, nv),
                    Lam(fs, TVec(acc, nv), Lam(z, c, body))))


def _compose_expansion(a: TypeExpr, i: int) -> Term:
    n, xs, k, f, g, x, w = (_m(s, i) for s in ("n", "xs", "k", "f", "g", "x", "w"))
    aa = TLolli(a, a)
    nv = NVar(n)
    composer = For(k, _unit_range(n),
                   Lam(f, aa, Lam(g, aa,
                                  Lam(x, a, App(Var(f), App(Var(g), Var(x)))))))
    ident = Lam(w, a, Var(w))
    body = App(App(App(PApp(Macro("fold", (aa, aa)), Var(n)), Var(xs)),
                   composer), ident)
    return PLam(n, TNat(), Lam(xs, TVec(aa, nv), body))


def make_binders_distinct(m: Term) -> Term:
    """Alpha-rename so no binder shadows anything else (deterministic).

    Renames propagate into type annotations, where parameter binders occur
    as vector size indices.
    """
    from .lambda_core import NVar, type_subst, type_free_vars

    used = set(free_term_vars(m))

    def pick(name):
        if name not in used:
            used.add(name)
            return name
        new = fresh_name(name, used)
        used.add(new)
        return new

    def sub_type(ty, env):
        if ty is None:
            return None
        for old in type_free_vars(ty) & set(env):
            ty = type_subst(ty, old, NVar(env[old]))
        return ty

    def go(t, env):
        if isinstance(t, Var):
            return Var(env.get(t.name, t.name), span=t.span)
        if isinstance(t, (Lam, PLam)):
            new = pick(t.var)
            body = go(t.body, {**env, t.var: new})
            return type(t)(new, sub_type(t.var_type, env), body, span=t.span)
        if isinstance(t, For):
            vec = go(t.vec, env)
            new = pick(t.var)
            return For(new, vec, go(t.body, {**env, t.var: new}), span=t.span)
        if isinstance(t, (LetTensor, LetCons)):
            subject = go(t.subject, env)
            nx, ny = pick(t.x), pick(t.y)
            inner = {**env, t.x: nx, t.y: ny}
            body = go(t.body, inner)
            return type(t)(nx, sub_type(t.x_type, inner), ny,
                           sub_type(t.y_type, inner), subject, body,
                           span=t.span)
        if isinstance(t, VNilT):
            return VNilT(sub_type(t.elem_type, env), span=t.span)
        if isinstance(t, (Prim, Macro)):
            if not t.type_args:
                return t
            args = tuple(sub_type(a, env) for a in t.type_args)
            return type(t)(t.name, args, span=t.span)
        if isinstance(t, (Lit, Star, Meas, New, Unitary, Rotation, Token)):
            return t
        kids = {f: getattr(t, f) for f in t.__dataclass_fields__}
        for f, val in list(kids.items()):
            if isinstance(val, Term):
                kids[f] = go(val, env)
        return type(t)(**kids)

    return go(m, {})


# ---------------------------------------------------------------------------
# Stepping


def step(m: Term) -> Optional[Term]:
    """One deterministic step, or None for values and stuck terms."""
    r = _top_step(m)
    if r is not None:
        return r
    return _cong_step(m)


def _top_step(m: Term) -> Optional[Term]:
    if isinstance(m, App) and isinstance(m.fn, Lam) and is_value(m.arg):
        return subst(m.fn.body, m.fn.var, m.arg)
    if isinstance(m, PApp) and isinstance(m.fn, PLam) and is_value(m.arg):
        return subst(m.fn.body, m.fn.var, m.arg)
    if isinstance(m, LetTensor) and isinstance(m.subject, Tensor):
        body = subst(m.body, m.x, m.subject.left)
        return subst(body, m.y, m.subject.right)
    if isinstance(m, LetCons) and isinstance(m.subject, Cons):
        body = subst(m.body, m.x, m.subject.head)
        return subst(body, m.y, m.subject.tail)
    if isinstance(m, Ifz) and isinstance(m.guard, Lit):
        return m.then if m.guard.value == 0 else m.other
    if isinstance(m, Seq) and isinstance(m.first, Star):
        return m.rest
    if isinstance(m, SeqVec) and isinstance(m.first, VNilT):
        return m.rest
    if isinstance(m, Arith) and isinstance(m.left, Lit) and isinstance(m.right, Lit):
        a, b = m.left.value, m.right.value
        if m.op == "+":
            return Lit(a + b)
        if m.op == "-":
            return Lit(max(0, a - b))
        if m.op == "*":
            return Lit(a * b)
        if m.op == "/":
            return None if b == 0 else Lit(a // b)
        if m.op == "^":
            return Lit(a ** b)
    if isinstance(m, For):
        if isinstance(m.vec, Cons):
            head = subst(m.body, m.var, m.vec.head)
            return Cons(head, For(m.var, m.vec.tail, m.body))
        if isinstance(m.vec, VNilT):
            return VNilT(None)
    if isinstance(m, Reverse) and is_value(m.arg):
        items, tail = [], m.arg
        while isinstance(tail, Cons):
            items.append(tail.head)
            tail = tail.tail
        if isinstance(tail, VNilT):
            out: Term = tail
            for item in items:
                out = Cons(item, out)
            return out
        return None
    return step_primitive(m)


def step_primitive(m: Term) -> Optional[Term]:
    """Unfold a fully applied primitive per its rewrite rule."""
    if not isinstance(m, (App, PApp)):
        return None
    head, args = _spine(m)
    if not isinstance(head, Prim):
        return None
    np, ns = _PRIM_ARITY[head.name]
    if len(args) != np + ns:
        return None
    if any(p != (i < np) for i, (p, _) in enumerate(args)):
        return None
    vals = [a for _, a in args]
    avoid = set()
    for a in vals:
        avoid |= term_vars(a)

    def fv(base):
        name = fresh_name(base, avoid)
        avoid.add(name)
        return name

    if head.name == "range":
        n, mm = vals
        guard = Arith("-", mm, n)
        rec = PApp(PApp(Prim("range"), Arith("+", n, Lit(1))), mm)
        return Ifz(guard, VNilT(TNat()), Cons(n, rec))

    if head.name == "drop":
        n, xs = vals
        x, xs2 = fv("x"), fv("xs")
        rec = App(PApp(Prim("drop"), Arith("-", n, Lit(1))), Var(xs2))
        return Ifz(n, SeqVec(xs, Star()),
                   LetCons(x, None, xs2, None, xs, Seq(Var(x), rec)))

    if head.name == "append":
        (a,) = head.type_args
        n, mm, xs, ys = vals
        x, xs2 = fv("x"), fv("xs")
        rec = App(App(PApp(PApp(Prim("append", head.type_args),
                                Arith("-", n, Lit(1))), mm), Var(xs2)), ys)
        return Ifz(n, SeqVec(xs, ys),
                   LetCons(x, None, xs2, None, xs, Cons(Var(x), rec)))

    if head.name == "split":
        (a,) = head.type_args
        n, mm, xs = vals
        y, xs2, ys1, ys2 = fv("y"), fv("xs"), fv("ys1"), fv("ys2")
        rec = App(PApp(PApp(Prim("split", head.type_args),
                            Arith("-", n, Lit(1))), mm), Var(xs2))
        inner = LetTensor(ys1, None, ys2, None, rec,
                          Tensor(Cons(Var(y), Var(ys1)), Var(ys2)))
        return Ifz(n, Tensor(VNilT(a), xs),
                   LetCons(y, None, xs2, None, xs, inner))

    if head.name == "accuMap":
        a, b, c = head.type_args
        n, xs, fs, z = vals
        x, xs2, f, fs2, y, z1, ys, z2 = (fv(s) for s in
                                         ("x", "xs", "f", "fs", "y", "z1",
                                          "ys", "z2"))
        base = SeqVec(xs, SeqVec(fs, Tensor(VNilT(b), z)))
        rec = App(App(App(PApp(Prim("accuMap", head.type_args),
                               Arith("-", n, Lit(1))),
                          Var(xs2)), Var(fs2)), Var(z1))
        inner = LetTensor(y, None, z1, None, App(App(Var(f), Var(x)), z),
                          LetTensor(ys, None, z2, None, rec,
                                    Tensor(Cons(Var(y), Var(ys)), Var(z2))))
        return Ifz(n, base,
                   LetCons(x, None, xs2, None, xs,
                           LetCons(f, None, fs2, None, fs, inner)))

    return None


def _cong_step(m: Term) -> Optional[Term]:
    def right_then_left(right, left, rebuild):
        s = step(right)
        if s is not None:
            return rebuild(left, s)
        if is_value(right):
            s = step(left)
            if s is not None:
                return rebuild(s, right)
        return None

    if isinstance(m, App):
        return right_then_left(m.arg, m.fn, lambda f, a: App(f, a))
    if isinstance(m, PApp):
        return right_then_left(m.arg, m.fn, lambda f, a: PApp(f, a))
    if isinstance(m, Arith):
        return right_then_left(m.right, m.left,
                               lambda l, r: Arith(m.op, l, r))
    if isinstance(m, (LetTensor, LetCons)):
        s = step(m.subject)
        if s is not None:
            kw = {f: getattr(m, f) for f in m.__dataclass_fields__}
            kw["subject"] = s
            return type(m)(**kw)
        return None
    if isinstance(m, Seq):
        s = step(m.first)
        return None if s is None else Seq(s, m.rest)
    if isinstance(m, SeqVec):
        s = step(m.first)
        return None if s is None else SeqVec(s, m.rest)
    if isinstance(m, Ifz):
        s = step(m.guard)
        return None if s is None else Ifz(s, m.then, m.other)
    if isinstance(m, For):
        s = step(m.vec)
        return None if s is None else For(m.var, s, m.body)
    if isinstance(m, Reverse):
        s = step(m.arg)
        return None if s is None else Reverse(s)
    if isinstance(m, Cons):
        s = step(m.head)
        if s is not None:
            return Cons(s, m.tail)
        if is_value(m.head):
            s = step(m.tail)
            if s is not None:
                return Cons(m.head, s)
        return None
    return None


def normalize(m: Term, fuel: int = 10 ** 6, trace=None) -> Term:
    """Iterate to a value or a stuck term; macros expand up front."""
    term = expand_macros(m)
    for _ in range(fuel):
        nxt = step(term)
        if nxt is None:
            return term
        if trace is not None:
            trace(nxt)
        term = nxt
    raise ReductionFuelError(f"no normal form within {fuel} steps")
