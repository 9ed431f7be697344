"""Core syntax: terms, types, contexts, and symbolic natural-number expressions.

Everything here is immutable after construction and safe to share across
threads. Source spans are carried for diagnostics only and never take part
in equality.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union


class UnboundParameterError(Exception):
    """A parameter variable was not bound in the evaluation environment."""


class NatArithmeticError(Exception):
    """Division by zero during natural-number evaluation."""


# ---------------------------------------------------------------------------
# Symbolic natural-number expressions


class NatExpr:
    """Base class for symbolic naturals used as wire tags and vector sizes."""

    __slots__ = ()


@dataclass(frozen=True)
class NConst(NatExpr):
    value: int

    def __repr__(self):
        return str(self.value)


@dataclass(frozen=True)
class NVar(NatExpr):
    name: str

    def __repr__(self):
        return self.name


@dataclass(frozen=True)
class NBin(NatExpr):
    op: str  # one of + - * / ^
    left: NatExpr
    right: NatExpr

    def __repr__(self):
        return f"({self.left!r}{self.op}{self.right!r})"


@dataclass(frozen=True)
class NIte0(NatExpr):
    """Selects `then` when the guard evaluates to zero, `other` otherwise."""

    guard: NatExpr
    then: NatExpr
    other: NatExpr

    def __repr__(self):
        return f"ite0({self.guard!r},{self.then!r},{self.other!r})"


@dataclass(frozen=True)
class NSum(NatExpr):
    """Sum of `body` over the values a list expression takes.

    Internal form: it only arises as the flattened multiplicity of a
    family-box boundary and never appears in source programs.
    """

    index: str
    over: "NatListExpr"
    body: NatExpr

    def __repr__(self):
        return f"sum({self.index} in {self.over!r}: {self.body!r})"


def nat(value: Union[int, NatExpr]) -> NatExpr:
    if isinstance(value, NatExpr):
        return value
    return NConst(int(value))


def nat_eval(e: NatExpr, env: dict) -> int:
    """Evaluate a symbolic natural under a total environment.

    Subtraction is truncated at zero, division is natural division and
    0^0 = 1. Unbound names raise, as does division by zero.
    """
    if isinstance(e, NConst):
        return e.value
    if isinstance(e, NVar):
        if e.name not in env:
            raise UnboundParameterError(f"unbound parameter {e.name!r}")
        v = env[e.name]
        if not isinstance(v, int):
            raise UnboundParameterError(
                f"parameter {e.name!r} is not a natural (got {v!r})")
        return v
    if isinstance(e, NBin):
        a = nat_eval(e.left, env)
        b = nat_eval(e.right, env)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return max(0, a - b)
        if e.op == "*":
            return a * b
        if e.op == "/":
            if b == 0:
                raise NatArithmeticError(f"division by zero in {e!r}")
            return a // b
        if e.op == "^":
            return a ** b
        raise ValueError(f"unknown operator {e.op!r}")
    if isinstance(e, NIte0):
        g = nat_eval(e.guard, env)
        return nat_eval(e.then if g == 0 else e.other, env)
    if isinstance(e, NSum):
        values = natlist_eval(e.over, env)
        total = 0
        for v in values:
            inner = dict(env)
            inner[e.index] = v
            total += nat_eval(e.body, inner)
        return total
    raise TypeError(f"not a NatExpr: {e!r}")


def nat_free_vars(e: NatExpr) -> set:
    if isinstance(e, (NConst,)):
        return set()
    if isinstance(e, NVar):
        return {e.name}
    if isinstance(e, NBin):
        return nat_free_vars(e.left) | nat_free_vars(e.right)
    if isinstance(e, NIte0):
        return nat_free_vars(e.guard) | nat_free_vars(e.then) | nat_free_vars(e.other)
    if isinstance(e, NSum):
        inner = nat_free_vars(e.body) - {e.index}
        return natlist_free_vars(e.over) | inner
    raise TypeError(f"not a NatExpr: {e!r}")


def nat_subst(e: NatExpr, name: str, repl: NatExpr) -> NatExpr:
    if isinstance(e, NConst):
        return e
    if isinstance(e, NVar):
        return repl if e.name == name else e
    if isinstance(e, NBin):
        return NBin(e.op, nat_subst(e.left, name, repl), nat_subst(e.right, name, repl))
    if isinstance(e, NIte0):
        return NIte0(nat_subst(e.guard, name, repl),
                     nat_subst(e.then, name, repl),
                     nat_subst(e.other, name, repl))
    if isinstance(e, NSum):
        over = natlist_subst(e.over, name, repl)
        if e.index == name:
            return NSum(e.index, over, e.body)
        return NSum(e.index, over, nat_subst(e.body, name, repl))
    raise TypeError(f"not a NatExpr: {e!r}")


# ---------------------------------------------------------------------------
# Symbolic lists of naturals


class NatListExpr:
    __slots__ = ()


@dataclass(frozen=True)
class LNil(NatListExpr):
    def __repr__(self):
        return "[]"


@dataclass(frozen=True)
class LCons(NatListExpr):
    head: NatExpr
    tail: NatListExpr

    def __repr__(self):
        return f"({self.head!r}::{self.tail!r})"


@dataclass(frozen=True)
class LRange(NatListExpr):
    lo: NatExpr
    hi: NatExpr

    def __repr__(self):
        return f"[{self.lo!r}..{self.hi!r})"


@dataclass(frozen=True)
class LMap(NatListExpr):
    """For-comprehension: the image of `body` over `over`."""

    index: str
    over: NatListExpr
    body: NatExpr

    def __repr__(self):
        return f"[{self.body!r} for {self.index} in {self.over!r}]"


@dataclass(frozen=True)
class LJoin(NatListExpr):
    """Concatenation of a list-valued body over `over` (internal form)."""

    index: str
    over: NatListExpr
    body: NatListExpr

    def __repr__(self):
        return f"[*{self.body!r} for {self.index} in {self.over!r}]"


@dataclass(frozen=True)
class LReverse(NatListExpr):
    inner: NatListExpr

    def __repr__(self):
        return f"reverse({self.inner!r})"


@dataclass(frozen=True)
class LVar(NatListExpr):
    name: str

    def __repr__(self):
        return self.name


@dataclass(frozen=True)
class LLit(NatListExpr):
    """A concrete list of naturals (internal convenience form)."""

    values: tuple

    def __repr__(self):
        return repr(list(self.values))


def natlist_eval(l: NatListExpr, env: dict) -> list:
    if isinstance(l, LNil):
        return []
    if isinstance(l, LCons):
        return [nat_eval(l.head, env)] + natlist_eval(l.tail, env)
    if isinstance(l, LRange):
        lo = nat_eval(l.lo, env)
        hi = nat_eval(l.hi, env)
        return list(range(lo, hi))
    if isinstance(l, LMap):
        out = []
        for v in natlist_eval(l.over, env):
            inner = dict(env)
            inner[l.index] = v
            out.append(nat_eval(l.body, inner))
        return out
    if isinstance(l, LJoin):
        out = []
        for v in natlist_eval(l.over, env):
            inner = dict(env)
            inner[l.index] = v
            out.extend(natlist_eval(l.body, inner))
        return out
    if isinstance(l, LReverse):
        return list(reversed(natlist_eval(l.inner, env)))
    if isinstance(l, LVar):
        if l.name not in env:
            raise UnboundParameterError(f"unbound parameter vector {l.name!r}")
        v = env[l.name]
        if isinstance(v, int):
            raise UnboundParameterError(
                f"parameter {l.name!r} is not a vector (got {v!r})")
        return list(v)
    if isinstance(l, LLit):
        return list(l.values)
    raise TypeError(f"not a NatListExpr: {l!r}")


def natlist_free_vars(l: NatListExpr) -> set:
    if isinstance(l, (LNil, LLit)):
        return set()
    if isinstance(l, LCons):
        return nat_free_vars(l.head) | natlist_free_vars(l.tail)
    if isinstance(l, LRange):
        return nat_free_vars(l.lo) | nat_free_vars(l.hi)
    if isinstance(l, LMap):
        return natlist_free_vars(l.over) | (nat_free_vars(l.body) - {l.index})
    if isinstance(l, LJoin):
        return natlist_free_vars(l.over) | (natlist_free_vars(l.body) - {l.index})
    if isinstance(l, LReverse):
        return natlist_free_vars(l.inner)
    if isinstance(l, LVar):
        return {l.name}
    raise TypeError(f"not a NatListExpr: {l!r}")


def natlist_subst(l: NatListExpr, name: str, repl: NatExpr) -> NatListExpr:
    if isinstance(l, (LNil, LLit)):
        return l
    if isinstance(l, LCons):
        return LCons(nat_subst(l.head, name, repl), natlist_subst(l.tail, name, repl))
    if isinstance(l, LRange):
        return LRange(nat_subst(l.lo, name, repl), nat_subst(l.hi, name, repl))
    if isinstance(l, LMap):
        over = natlist_subst(l.over, name, repl)
        body = l.body if l.index == name else nat_subst(l.body, name, repl)
        return LMap(l.index, over, body)
    if isinstance(l, LJoin):
        over = natlist_subst(l.over, name, repl)
        body = l.body if l.index == name else natlist_subst(l.body, name, repl)
        return LJoin(l.index, over, body)
    if isinstance(l, LReverse):
        return LReverse(natlist_subst(l.inner, name, repl))
    if isinstance(l, LVar):
        return l
    raise TypeError(f"not a NatListExpr: {l!r}")


def natlist_length(l: NatListExpr) -> Optional[NatExpr]:
    """Symbolic length of a list expression, when it has a closed form."""
    if isinstance(l, LNil):
        return NConst(0)
    if isinstance(l, LLit):
        return NConst(len(l.values))
    if isinstance(l, LCons):
        t = natlist_length(l.tail)
        return None if t is None else NBin("+", NConst(1), t)
    if isinstance(l, LRange):
        return NBin("-", l.hi, l.lo)
    if isinstance(l, (LMap,)):
        return natlist_length(l.over)
    if isinstance(l, LReverse):
        return natlist_length(l.inner)
    if isinstance(l, LJoin):
        inner = natlist_length(l.body)
        if inner is None:
            return None
        return NSum(l.index, l.over, inner)
    return None


# ---------------------------------------------------------------------------
# Types


class TypeExpr:
    __slots__ = ()


@dataclass(frozen=True)
class TBit(TypeExpr):
    def __repr__(self):
        return "B"


@dataclass(frozen=True)
class TQubit(TypeExpr):
    def __repr__(self):
        return "Q"


@dataclass(frozen=True)
class TUnit(TypeExpr):
    def __repr__(self):
        return "Unit"


@dataclass(frozen=True)
class TNat(TypeExpr):
    def __repr__(self):
        return "Nat"


@dataclass(frozen=True)
class TTensor(TypeExpr):
    left: TypeExpr
    right: TypeExpr

    def __repr__(self):
        return f"({self.left!r} * {self.right!r})"


@dataclass(frozen=True)
class TLolli(TypeExpr):
    arg: TypeExpr
    res: TypeExpr

    def __repr__(self):
        return f"({self.arg!r} -o {self.res!r})"


@dataclass(frozen=True)
class TVec(TypeExpr):
    elem: TypeExpr
    size: NatExpr

    def __repr__(self):
        return f"Vec {self.elem!r} {self.size!r}"


@dataclass(frozen=True)
class TArrow(TypeExpr):
    """Dependent arrow (n:Nat) -> body[n]."""

    var: str
    body: TypeExpr

    def __repr__(self):
        return f"(({self.var}:Nat) -> {self.body!r})"


def is_state_type(t: TypeExpr) -> bool:
    if isinstance(t, (TBit, TQubit, TUnit)):
        return True
    if isinstance(t, (TTensor, TLolli)):
        return is_state_type(t.left if isinstance(t, TTensor) else t.arg) and \
            is_state_type(t.right if isinstance(t, TTensor) else t.res)
    if isinstance(t, TVec):
        return is_state_type(t.elem)
    return False


def is_param_type(t: TypeExpr) -> bool:
    if isinstance(t, TNat):
        return True
    if isinstance(t, TVec):
        return isinstance(t.elem, TNat)
    return False


def type_free_vars(t: TypeExpr) -> set:
    if isinstance(t, (TBit, TQubit, TUnit, TNat)):
        return set()
    if isinstance(t, TTensor):
        return type_free_vars(t.left) | type_free_vars(t.right)
    if isinstance(t, TLolli):
        return type_free_vars(t.arg) | type_free_vars(t.res)
    if isinstance(t, TVec):
        return type_free_vars(t.elem) | nat_free_vars(t.size)
    if isinstance(t, TArrow):
        return type_free_vars(t.body) - {t.var}
    raise TypeError(f"not a TypeExpr: {t!r}")


def type_subst(t: TypeExpr, name: str, repl: NatExpr) -> TypeExpr:
    if isinstance(t, (TBit, TQubit, TUnit, TNat)):
        return t
    if isinstance(t, TTensor):
        return TTensor(type_subst(t.left, name, repl), type_subst(t.right, name, repl))
    if isinstance(t, TLolli):
        return TLolli(type_subst(t.arg, name, repl), type_subst(t.res, name, repl))
    if isinstance(t, TVec):
        return TVec(type_subst(t.elem, name, repl), nat_subst(t.size, name, repl))
    if isinstance(t, TArrow):
        if t.var == name:
            return t
        return TArrow(t.var, type_subst(t.body, name, repl))
    raise TypeError(f"not a TypeExpr: {t!r}")


# ---------------------------------------------------------------------------
# Terms


@dataclass(frozen=True)
class Span:
    line: int
    col: int

    def __repr__(self):
        return f"{self.line}:{self.col}"


class Term:
    __slots__ = ()


def _spanfield():
    return field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Var(Term):
    name: str
    span: Optional[Span] = _spanfield()


@dataclass(frozen=True)
class Lit(Term):
    """Numeral literal; types as a bit for 0/1 or as a natural by context."""

    value: int
    span: Optional[Span] = _spanfield()


@dataclass(frozen=True)
class Star(Term):
    span: Optional[Span] = _spanfield()


@dataclass(frozen=True)
class VNilT(Term):
    elem_type: TypeExpr
    span: Optional[Span] = _spanfield()


@dataclass(frozen=True)
class Meas(Term):
    span: Optional[Span] = _spanfield()


@dataclass(frozen=True)
class New(Term):
    span: Optional[Span] = _spanfield()


@dataclass(frozen=True)
class Unitary(Term):
    name: str  # H | CNOT
    span: Optional[Span] = _spanfield()


@dataclass(frozen=True)
class Rotation(Term):
    name: str  # Rz | RzInv | Rx | RxInv
    span: Optional[Span] = _spanfield()


@dataclass(frozen=True)
class Lam(Term):
    var: str
    var_type: Optional[TypeExpr]
    body: Term
    span: Optional[Span] = _spanfield()


@dataclass(frozen=True)
class App(Term):
    fn: Term
    arg: Term
    span: Optional[Span] = _spanfield()


@dataclass(frozen=True)
class PLam(Term):
    var: str
    var_type: Optional[TypeExpr]
    body: Term
    span: Optional[Span] = _spanfield()


@dataclass(frozen=True)
class PApp(Term):
    fn: Term
    arg: Term
    span: Optional[Span] = _spanfield()


@dataclass(frozen=True)
class Tensor(Term):
    left: Term
    right: Term
    span: Optional[Span] = _spanfield()


@dataclass(frozen=True)
class LetTensor(Term):
    x: str
    x_type: Optional[TypeExpr]
    y: str
    y_type: Optional[TypeExpr]
    subject: Term
    body: Term
    span: Optional[Span] = _spanfield()


@dataclass(frozen=True)
class Seq(Term):
    first: Term
    rest: Term
    span: Optional[Span] = _spanfield()


@dataclass(frozen=True)
class SeqVec(Term):
    first: Term
    rest: Term
    span: Optional[Span] = _spanfield()


@dataclass(frozen=True)
class Cons(Term):
    head: Term
    tail: Term
    span: Optional[Span] = _spanfield()


@dataclass(frozen=True)
class LetCons(Term):
    x: str
    x_type: Optional[TypeExpr]
    y: str
    y_type: Optional[TypeExpr]
    subject: Term
    body: Term
    span: Optional[Span] = _spanfield()


@dataclass(frozen=True)
class Arith(Term):
    op: str
    left: Term
    right: Term
    span: Optional[Span] = _spanfield()


@dataclass(frozen=True)
class Ifz(Term):
    guard: Term
    then: Term
    other: Term
    span: Optional[Span] = _spanfield()


@dataclass(frozen=True)
class For(Term):
    var: str
    vec: Term
    body: Term
    span: Optional[Span] = _spanfield()


@dataclass(frozen=True)
class Prim(Term):
    """Primitive: accuMap, split, append, drop, range, with type annotations."""

    name: str
    type_args: tuple = ()
    span: Optional[Span] = _spanfield()


@dataclass(frozen=True)
class Macro(Term):
    """Function macro: map, fold, compose. Expanded before reduction."""

    name: str
    type_args: tuple = ()
    span: Optional[Span] = _spanfield()


@dataclass(frozen=True)
class Reverse(Term):
    """Built-in reversal of a parameter vector."""

    arg: Term
    span: Optional[Span] = _spanfield()


@dataclass(frozen=True)
class Token(Term):
    """Symbolic wire token used only during circuit extraction."""

    index: int
    span: Optional[Span] = _spanfield()


PRIM_NAMES = ("accuMap", "split", "append", "drop", "range")
MACRO_NAMES = ("map", "fold", "compose")
UNITARY_NAMES = ("H", "CNOT")
ROTATION_NAMES = ("Rz", "RzInv", "Rx", "RxInv")


# ---------------------------------------------------------------------------
# Contexts


@dataclass(frozen=True)
class Context:
    """Parameter part (non-linear) and state part (linear), both ordered."""

    params: tuple = ()
    states: tuple = ()

    def __post_init__(self):
        names = [n for n, _ in self.params] + [n for n, _ in self.states]
        if len(names) != len(set(names)):
            raise ValueError(f"duplicate names in context: {names}")
        for _, t in self.params:
            if not is_param_type(t):
                raise ValueError(f"non-parameter type in parameter context: {t!r}")
        for _, t in self.states:
            if not is_state_type(t):
                raise ValueError(f"non-state type in state context: {t!r}")

    def param_type(self, name):
        for n, t in self.params:
            if n == name:
                return t
        return None

    def state_type(self, name):
        for n, t in self.states:
            if n == name:
                return t
        return None

    def with_param(self, name, t):
        return Context(((name, t),) + self.params, self.states)

    def with_state(self, name, t):
        return Context(self.params, self.states + ((name, t),))


# ---------------------------------------------------------------------------
# Traversal helpers


def _children(m: Term):
    if isinstance(m, (Var, Lit, Star, VNilT, Meas, New, Unitary, Rotation,
                      Prim, Macro, Token)):
        return []
    if isinstance(m, (Lam, PLam)):
        return [m.body]
    if isinstance(m, App):
        return [m.fn, m.arg]
    if isinstance(m, PApp):
        return [m.fn, m.arg]
    if isinstance(m, Tensor):
        return [m.left, m.right]
    if isinstance(m, (LetTensor, LetCons)):
        return [m.subject, m.body]
    if isinstance(m, (Seq, SeqVec)):
        return [m.first, m.rest]
    if isinstance(m, Cons):
        return [m.head, m.tail]
    if isinstance(m, Arith):
        return [m.left, m.right]
    if isinstance(m, Ifz):
        return [m.guard, m.then, m.other]
    if isinstance(m, For):
        return [m.vec, m.body]
    if isinstance(m, Reverse):
        return [m.arg]
    raise TypeError(f"not a Term: {m!r}")


def term_vars(m: Term) -> set:
    """All variable names occurring in a term (free or bound)."""
    out = set()

    def go(t):
        if isinstance(t, Var):
            out.add(t.name)
            return
        if isinstance(t, (Lam, PLam, For)):
            out.add(t.var)
        if isinstance(t, (LetTensor, LetCons)):
            out.add(t.x)
            out.add(t.y)
        for c in _children(t):
            go(c)

    go(m)
    return out


def free_term_vars(m: Term) -> set:
    """Free variable names of a term, parameter and state alike."""
    if isinstance(m, Var):
        return {m.name}
    if isinstance(m, (Lam, PLam)):
        inner = free_term_vars(m.body) - {m.var}
        inner |= _annot_vars(m.var_type)
        return inner
    if isinstance(m, For):
        return free_term_vars(m.vec) | (free_term_vars(m.body) - {m.var})
    if isinstance(m, (LetTensor, LetCons)):
        body = free_term_vars(m.body) - {m.x, m.y}
        return free_term_vars(m.subject) | body | _annot_vars(m.x_type) | _annot_vars(m.y_type)
    out = set()
    if isinstance(m, VNilT):
        out |= _annot_vars(m.elem_type)
    if isinstance(m, (Prim, Macro)):
        for t in m.type_args:
            out |= _annot_vars(t)
    for c in _children(m):
        out |= free_term_vars(c)
    return out


def _annot_vars(t: Optional[TypeExpr]) -> set:
    return type_free_vars(t) if t is not None else set()


def free_vars(m: Term):
    """Free variables split into (parameter names, state names).

    Variables in parameter positions (arithmetic, @ arguments, ifz guards,
    for lists, type indices) are classified as parameters; the rest are
    treated as state variables.
    """
    params: set = set()
    states: set = set()

    def go(t, bound, in_param):
        if isinstance(t, Var):
            if t.name not in bound:
                (params if in_param else states).add(t.name)
            return
        if isinstance(t, (Lam, PLam)):
            if t.var_type is not None:
                params.update(type_free_vars(t.var_type) - bound)
            go(t.body, bound | {t.var}, in_param)
            return
        if isinstance(t, For):
            go(t.vec, bound, True)
            go(t.body, bound | {t.var}, in_param)
            return
        if isinstance(t, (LetTensor, LetCons)):
            for at in (t.x_type, t.y_type):
                if at is not None:
                    params.update(type_free_vars(at) - bound)
            go(t.subject, bound, in_param)
            go(t.body, bound | {t.x, t.y}, in_param)
            return
        if isinstance(t, Arith):
            go(t.left, bound, True)
            go(t.right, bound, True)
            return
        if isinstance(t, Ifz):
            go(t.guard, bound, True)
            go(t.then, bound, in_param)
            go(t.other, bound, in_param)
            return
        if isinstance(t, PApp):
            go(t.fn, bound, in_param)
            go(t.arg, bound, True)
            return
        if isinstance(t, Reverse):
            go(t.arg, bound, True)
            return
        if isinstance(t, VNilT):
            params.update(type_free_vars(t.elem_type) - bound)
            return
        if isinstance(t, (Prim, Macro)):
            for ta in t.type_args:
                params.update(type_free_vars(ta) - bound)
            return
        if isinstance(t, (Lit, Star, Meas, New, Unitary, Rotation, Token)):
            return
        for c in _children(t):
            go(c, bound, in_param)

    go(m, set(), False)
    return params, states


def fresh_name(base: str, avoid: set) -> str:
    if base not in avoid:
        return base
    i = 1
    while f"{base}_{i}" in avoid:
        i += 1
    return f"{base}_{i}"


def term_to_natexpr(m: Term) -> Optional[NatExpr]:
    """Convert a parameter-level term of type Nat to a symbolic natural."""
    if isinstance(m, Lit):
        return NConst(m.value)
    if isinstance(m, Var):
        return NVar(m.name)
    if isinstance(m, Arith):
        a = term_to_natexpr(m.left)
        b = term_to_natexpr(m.right)
        if a is None or b is None:
            return None
        return NBin(m.op, a, b)
    if isinstance(m, Ifz):
        g = term_to_natexpr(m.guard)
        t = term_to_natexpr(m.then)
        e = term_to_natexpr(m.other)
        if g is None or t is None or e is None:
            return None
        return NIte0(g, t, e)
    if isinstance(m, PApp) and isinstance(m.fn, PLam):
        arg = term_to_natexpr(m.arg)
        if arg is None:
            return None
        body = term_to_natexpr(m.fn.body)
        if body is None:
            return None
        return nat_subst(body, m.fn.var, arg)
    return None


def term_to_natlistexpr(m: Term) -> Optional[NatListExpr]:
    """Convert a parameter-level term of type Vec Nat n to a symbolic list."""
    if isinstance(m, VNilT):
        return LNil()
    if isinstance(m, Var):
        return LVar(m.name)
    if isinstance(m, Cons):
        h = term_to_natexpr(m.head)
        t = term_to_natlistexpr(m.tail)
        if h is None or t is None:
            return None
        return LCons(h, t)
    if isinstance(m, Reverse):
        inner = term_to_natlistexpr(m.arg)
        return None if inner is None else LReverse(inner)
    if isinstance(m, PApp) and isinstance(m.fn, PApp) and isinstance(m.fn.fn, Prim) \
            and m.fn.fn.name == "range":
        lo = term_to_natexpr(m.fn.arg)
        hi = term_to_natexpr(m.arg)
        if lo is None or hi is None:
            return None
        return LRange(lo, hi)
    if isinstance(m, For):
        over = term_to_natlistexpr(m.vec)
        body = term_to_natexpr(m.body)
        if over is None or body is None:
            return None
        return LMap(m.var, over, body)
    return None


# ---------------------------------------------------------------------------
# Substitution and alpha equivalence


def _with_body(m: Term, **kw):
    d = {f: getattr(m, f) for f in m.__dataclass_fields__}
    d.update(kw)
    return type(m)(**d)


def subst(m: Term, x: str, v: Term) -> Term:
    """Capture-avoiding substitution m[v/x].

    When v converts to a symbolic natural, the substitution also descends
    into type annotations so that size indices are rewritten.
    """
    vnat = term_to_natexpr(v)
    vfree = free_term_vars(v)

    def sub_type(t):
        if t is None or vnat is None:
            return t
        return type_subst(t, x, vnat)

    def go(t):
        if isinstance(t, Var):
            return v if t.name == x else t
        if isinstance(t, (Lam, PLam)):
            new_type = sub_type(t.var_type)
            if t.var == x:
                return _with_body(t, var_type=new_type)
            if t.var in vfree and x in free_term_vars(t.body):
                avoid = vfree | term_vars(t.body) | {x}
                nv = fresh_name(t.var, avoid)
                body = subst(t.body, t.var, Var(nv))
                return _with_body(t, var=nv, var_type=new_type, body=go(body))
            return _with_body(t, var_type=new_type, body=go(t.body))
        if isinstance(t, For):
            vec = go(t.vec)
            if t.var == x:
                return _with_body(t, vec=vec)
            if t.var in vfree and x in free_term_vars(t.body):
                avoid = vfree | term_vars(t.body) | {x}
                nv = fresh_name(t.var, avoid)
                body = subst(t.body, t.var, Var(nv))
                return _with_body(t, var=nv, vec=vec, body=go(body))
            return _with_body(t, vec=vec, body=go(t.body))
        if isinstance(t, (LetTensor, LetCons)):
            subj = go(t.subject)
            xt, yt = sub_type(t.x_type), sub_type(t.y_type)
            if x in (t.x, t.y):
                return _with_body(t, subject=subj, x_type=xt, y_type=yt)
            binders = {t.x, t.y}
            if binders & vfree and x in free_term_vars(t.body):
                avoid = vfree | term_vars(t.body) | {x}
                body = t.body
                names = {}
                for b in (t.x, t.y):
                    nb = fresh_name(b, avoid)
                    avoid.add(nb)
                    names[b] = nb
                    if nb != b:
                        body = subst(body, b, Var(nb))
                return _with_body(t, x=names[t.x], y=names[t.y],
                                  x_type=xt, y_type=yt,
                                  subject=subj, body=go(body))
            return _with_body(t, subject=subj, x_type=xt, y_type=yt, body=go(t.body))
        if isinstance(t, VNilT):
            return VNilT(sub_type(t.elem_type), span=t.span)
        if isinstance(t, (Prim, Macro)):
            if vnat is None or not t.type_args:
                return t
            return _with_body(t, type_args=tuple(type_subst(a, x, vnat)
                                                 for a in t.type_args))
        if isinstance(t, (Lit, Star, Meas, New, Unitary, Rotation, Token)):
            return t
        kids = {f: getattr(t, f) for f in t.__dataclass_fields__}
        for f, val in list(kids.items()):
            if isinstance(val, Term):
                kids[f] = go(val)
        return type(t)(**kids)

    return go(m)


def alpha_eq(a: Term, b: Term) -> bool:
    """Alpha equivalence; type annotations must match structurally."""

    def go(x, y, ex, ey):
        if type(x) is not type(y):
            return False
        if isinstance(x, Var):
            return ex.get(x.name, x.name) == ey.get(y.name, y.name)
        if isinstance(x, (Lam, PLam)):
            if x.var_type != y.var_type:
                return False
            tag = f"#{len(ex)}"
            return go(x.body, y.body, {**ex, x.var: tag}, {**ey, y.var: tag})
        if isinstance(x, For):
            if not go(x.vec, y.vec, ex, ey):
                return False
            tag = f"#{len(ex)}"
            return go(x.body, y.body, {**ex, x.var: tag}, {**ey, y.var: tag})
        if isinstance(x, (LetTensor, LetCons)):
            if x.x_type != y.x_type or x.y_type != y.y_type:
                return False
            if not go(x.subject, y.subject, ex, ey):
                return False
            t1, t2 = f"#{len(ex)}", f"#{len(ex)}b"
            return go(x.body, y.body,
                      {**ex, x.x: t1, x.y: t2}, {**ey, y.x: t1, y.y: t2})
        if isinstance(x, (Lit, Star, Meas, New, Unitary, Rotation, Prim,
                          Macro, Token, VNilT)):
            return x == y
        if isinstance(x, Arith) and x.op != y.op:
            return False
        cx, cy = _children(x), _children(y)
        return len(cx) == len(cy) and all(go(p, q, ex, ey) for p, q in zip(cx, cy))

    return go(a, b, {}, {})
