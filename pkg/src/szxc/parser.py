"""Concrete syntax for lambda-D programs (.ld files).

The surface grammar (see docs/grammar.ebnf):

    program    = { definition }
    definition = [ name ":" type ] name "=" term
    term       = lambdas, lets, ifz/for, sequencing, cons, tensor,
                 arithmetic, application
    type       = "B" | "Q" | "Unit" | "Nat" | "Vec" atom natatom
               | type "*" type | type "-o" type | "(" name ":" "Nat" ")" "->" type

Notation: ``\\x:T.`` state lambda, ``\\'n.`` parameter lambda, ``@`` parameter
application, ``(*)`` infix tensor, ``::`` cons, ``let p = M in N``,
``ifz L then M else N``, ``for k in V do M``, ``M ; N``, ``M ;v N``,
``n..m`` for ``range @n @m``, ``()`` for the unit value, ``--`` comments.
Plain ``let x = M in N`` desugars to ``(\\x. N) M``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import List, Optional, Tuple

from .lambda_core import (
    App, Arith, Cons, For, Ifz, Lam, LetCons, LetTensor, Lit, Macro, Meas,
    New, PApp, PLam, Prim, Reverse, Rotation, Seq, SeqVec, Span, Star, TArrow,
    TBit, TLolli, TNat, TQubit, TTensor, TUnit, TVec, Tensor, Term, Token,
    TypeExpr, Unitary, VNilT, Var, NBin, NConst, NVar, NatExpr, MACRO_NAMES,
    PRIM_NAMES, ROTATION_NAMES, UNITARY_NAMES,
)


class ParseError(Exception):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: syntax error: {message}")
        self.message = message
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Definition:
    name: str
    declared_type: Optional[TypeExpr]
    body: Term
    span: Span


@dataclass(frozen=True)
class Program:
    """Ordered, non-recursive definitions; the last one is the entry point."""

    definitions: Tuple[Definition, ...]

    @property
    def entry(self) -> Definition:
        return self.definitions[-1]

    def inlined_entry(self) -> Term:
        """Entry body with all earlier definitions inlined, in order."""
        from .lambda_core import subst

        term = self.entry.body
        for d in reversed(self.definitions[:-1]):
            term = subst(term, d.name, d.body)
        return term


# ---------------------------------------------------------------------------
# Lexer

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>--[^\n]*)
  | (?P<tensorop>\(\*\))
  | (?P<unit>\(\))
  | (?P<num>\d+)
  | (?P<name>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<sym>->|-o|\.\.|::|;v\b|\\'|[()\[\]{}@:;.,\\*+\-/^=])
""", re.VERBOSE)

_KEYWORDS = {"let", "in", "ifz", "then", "else", "for", "do", "Vec", "Nat",
             "B", "Q", "Unit", "VNil", "reverse", "meas", "new"}


@dataclass(frozen=True)
class Tok:
    kind: str
    text: str
    line: int
    col: int


def _lex(text: str) -> List[Tok]:
    toks = []
    line, col, pos = 1, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        value = m.group()
        if kind not in ("ws", "comment"):
            toks.append(Tok(kind, value, line, col))
        newlines = value.count("\n")
        if newlines:
            line += newlines
            col = len(value) - value.rfind("\n")
        else:
            col += len(value)
        pos = m.end()
    toks.append(Tok("eof", "", line, col))
    return toks


# ---------------------------------------------------------------------------
# Parser

class _Parser:
    def __init__(self, text: str):
        self.toks = _lex(text)
        self.pos = 0

    def peek(self, ahead=0) -> Tok:
        return self.toks[min(self.pos + ahead, len(self.toks) - 1)]

    def next(self) -> Tok:
        t = self.toks[self.pos]
        if t.kind != "eof":
            self.pos += 1
        return t

    def expect(self, text: str) -> Tok:
        t = self.peek()
        if t.text != text:
            raise ParseError(f"expected {text!r}, found {t.text or 'end of input'!r}",
                             t.line, t.col)
        return self.next()

    def at(self, text: str) -> bool:
        return self.peek().text == text

    def fail(self, msg: str):
        t = self.peek()
        raise ParseError(msg + f" (found {t.text or 'end of input'!r})", t.line, t.col)

    def _name(self, what: str) -> str:
        t = self.peek()
        if t.kind != "name" or t.text in _KEYWORDS:
            self.fail(f"expected {what}")
        return self.next().text

    # -- program -----------------------------------------------------------

    def program(self) -> Program:
        defs: List[Definition] = []
        declared: dict = {}
        seen: dict = {}
        while self.peek().kind != "eof":
            t = self.peek()
            if t.kind != "name":
                self.fail("expected a definition name")
            name = self.next().text
            if self.at(":"):
                self.next()
                ty = self.type_expr()
                if name in declared or name in seen:
                    raise ParseError(f"duplicate declaration of {name!r}", t.line, t.col)
                declared[name] = ty
                continue
            self.expect("=")
            body = self.term()
            if name in seen:
                raise ParseError(f"duplicate definition of {name!r}", t.line, t.col)
            refs = _undefined_references(body, set(seen))
            if refs:
                bad = sorted(refs)[0]
                raise ParseError(f"reference to undefined name {bad!r} in {name!r}",
                                 t.line, t.col)
            d = Definition(name, declared.pop(name, None), body, Span(t.line, t.col))
            seen[name] = d
            defs.append(d)
        if declared:
            name = next(iter(declared))
            raise ParseError(f"declaration of {name!r} has no definition", 1, 1)
        if not defs:
            raise ParseError("empty program", 1, 1)
        return Program(tuple(defs))

    # -- types --------------------------------------------------------------

    def type_expr(self) -> TypeExpr:
        t = self.peek()
        if t.text == "(" and self.peek(1).kind == "name" and self.peek(2).text == ":" \
                and self.peek(3).text == "Nat" and self.peek(4).text == ")":
            self.next()
            var = self.next().text
            self.next()
            self.next()
            self.next()
            self.expect("->")
            return TArrow(var, self.type_expr())
        left = self.type_tensor()
        if self.at("-o"):
            self.next()
            return TLolli(left, self.type_expr())
        return left

    def type_tensor(self) -> TypeExpr:
        left = self.type_atom()
        if self.at("*"):
            self.next()
            return TTensor(left, self.type_tensor())
        return left

    def type_atom(self) -> TypeExpr:
        t = self.peek()
        if t.text == "B":
            self.next()
            return TBit()
        if t.text == "Q":
            self.next()
            return TQubit()
        if t.text == "Unit":
            self.next()
            return TUnit()
        if t.text == "Nat":
            self.next()
            return TNat()
        if t.text == "Vec":
            self.next()
            elem = self.type_atom()
            size = self.nat_atom()
            return TVec(elem, size)
        if t.text == "(":
            self.next()
            inner = self.type_expr()
            self.expect(")")
            return inner
        self.fail("expected a type")

    def nat_atom(self) -> NatExpr:
        t = self.peek()
        if t.kind == "num":
            self.next()
            return NConst(int(t.text))
        if t.kind == "name" and t.text not in _KEYWORDS:
            self.next()
            return NVar(t.text)
        if t.text == "(":
            self.next()
            e = self.nat_expr()
            self.expect(")")
            return e
        self.fail("expected a size expression")

    def nat_expr(self) -> NatExpr:
        e = self.nat_term()
        while self.peek().text in ("+", "-"):
            op = self.next().text
            e = NBin(op, e, self.nat_term())
        return e

    def nat_term(self) -> NatExpr:
        e = self.nat_pow()
        while self.peek().text in ("*", "/"):
            op = self.next().text
            e = NBin(op, e, self.nat_pow())
        return e

    def nat_pow(self) -> NatExpr:
        e = self.nat_atom()
        if self.at("^"):
            self.next()
            return NBin("^", e, self.nat_pow())
        return e

    # -- terms ---------------------------------------------------------------

    def term(self) -> Term:
        t = self.peek()
        span = Span(t.line, t.col)
        if t.text == "\\":
            self.next()
            name = self._name("a variable")
            ty = None
            if self.at(":"):
                self.next()
                ty = self.type_expr()
            self.expect(".")
            return Lam(name, ty, self.term(), span=span)
        if t.text == "\\'":
            self.next()
            name = self._name("a parameter variable")
            ty = None
            if self.at(":"):
                self.next()
                ty = self.type_expr()
            self.expect(".")
            return PLam(name, ty, self.term(), span=span)
        if t.text == "let":
            return self.let_term(span)
        if t.text == "ifz":
            self.next()
            guard = self.seq_term()
            self.expect("then")
            then = self.term()
            self.expect("else")
            other = self.term()
            return Ifz(guard, then, other, span=span)
        if t.text == "for":
            self.next()
            var = self._name("an index variable")
            self.expect("in")
            vec = self.seq_term()
            self.expect("do")
            body = self.term()
            return For(var, vec, body, span=span)
        return self.seq_term()

    def let_term(self, span: Span) -> Term:
        self.expect("let")
        x, x_ty = self.pattern_binding()
        if self.at("(*)"):
            self.next()
            y, y_ty = self.pattern_binding()
            self.expect("=")
            subject = self.term()
            self.expect("in")
            body = self.term()
            return LetTensor(x, x_ty, y, y_ty, subject, body, span=span)
        if self.at("::"):
            self.next()
            y, y_ty = self.pattern_binding()
            self.expect("=")
            subject = self.term()
            self.expect("in")
            body = self.term()
            return LetCons(x, x_ty, y, y_ty, subject, body, span=span)
        if self.at("="):
            self.next()
            subject = self.term()
            self.expect("in")
            body = self.term()
            return App(Lam(x, x_ty, body, span=span), subject, span=span)
        self.fail("expected '(*)', '::' or '=' in let binding")

    def pattern_binding(self):
        name = self._name("a binder")
        ty = None
        if self.at(":"):
            self.next()
            ty = self.type_atom()
        return name, ty

    def seq_term(self) -> Term:
        left = self.tensor_term()
        t = self.peek()
        if t.text == ";":
            span = Span(t.line, t.col)
            self.next()
            return Seq(left, self.term(), span=span)
        if t.text == ";v":
            span = Span(t.line, t.col)
            self.next()
            return SeqVec(left, self.term(), span=span)
        return left

    def tensor_term(self) -> Term:
        left = self.cons_term()
        t = self.peek()
        if t.text == "(*)":
            span = Span(t.line, t.col)
            self.next()
            return Tensor(left, self.tensor_term(), span=span)
        return left

    def cons_term(self) -> Term:
        left = self.range_term()
        t = self.peek()
        if t.text == "::":
            span = Span(t.line, t.col)
            self.next()
            return Cons(left, self.cons_term(), span=span)
        return left

    def range_term(self) -> Term:
        left = self.add_term()
        t = self.peek()
        if t.text == "..":
            span = Span(t.line, t.col)
            self.next()
            hi = self.add_term()
            return PApp(PApp(Prim("range"), left, span=span), hi, span=span)
        return left

    def add_term(self) -> Term:
        left = self.mul_term()
        while self.peek().text in ("+", "-"):
            t = self.next()
            left = Arith(t.text, left, self.mul_term(), span=Span(t.line, t.col))
        return left

    def mul_term(self) -> Term:
        left = self.pow_term()
        while self.peek().text in ("*", "/"):
            t = self.next()
            left = Arith(t.text, left, self.pow_term(), span=Span(t.line, t.col))
        return left

    def pow_term(self) -> Term:
        left = self.app_term()
        if self.at("^"):
            t = self.next()
            return Arith("^", left, self.pow_term(), span=Span(t.line, t.col))
        return left

    def app_term(self) -> Term:
        if self.at("reverse"):
            t = self.next()
            term: Term = Reverse(self.atom(), span=Span(t.line, t.col))
        else:
            term = self.atom()
        while True:
            t = self.peek()
            if t.text == "@":
                self.next()
                arg = self.atom()
                term = PApp(term, arg, span=Span(t.line, t.col))
            elif self._starts_atom(t):
                term = App(term, self.atom(), span=Span(t.line, t.col))
            else:
                return term

    def _starts_atom(self, t: Tok) -> bool:
        if t.kind in ("num", "unit"):
            return True
        if t.kind == "name":
            if t.text in _KEYWORDS and t.text not in ("VNil", "meas", "new"):
                return False
            # a name opening the next top-level definition ends this term
            return self.peek(1).text not in (":", "=")
        return t.text == "("

    def atom(self) -> Term:
        t = self.peek()
        span = Span(t.line, t.col)
        if t.kind == "num":
            self.next()
            return Lit(int(t.text), span=span)
        if t.kind == "unit":
            self.next()
            return Star(span=span)
        if t.text == "(":
            self.next()
            inner = self.term()
            self.expect(")")
            return inner
        if t.text == "VNil":
            self.next()
            self.expect("[")
            if self.at("_"):
                self.next()
                ty = None
            else:
                ty = self.type_expr()
            self.expect("]")
            return VNilT(ty, span=span)
        if t.text == "meas":
            self.next()
            return Meas(span=span)
        if t.text == "new":
            self.next()
            return New(span=span)
        if t.kind == "name":
            name = self.next().text
            if name in UNITARY_NAMES:
                return Unitary(name, span=span)
            if name in ROTATION_NAMES:
                return Rotation(name, span=span)
            if name in PRIM_NAMES or name in MACRO_NAMES:
                type_args: Tuple[TypeExpr, ...] = ()
                if self.at("["):
                    self.next()
                    args = [self.type_expr()]
                    while self.at(","):
                        self.next()
                        args.append(self.type_expr())
                    self.expect("]")
                    type_args = tuple(args)
                if name in PRIM_NAMES:
                    return Prim(name, type_args, span=span)
                return Macro(name, type_args, span=span)
            return Var(name, span=span)
        self.fail("expected a term")


def _undefined_references(body: Term, defined: set) -> set:
    from .lambda_core import free_vars

    params, states = free_vars(body)
    return {n for n in (params | states) if n not in defined}


def parse_program(text: str) -> Program:
    """Parse a .ld source file into a Program."""
    return _Parser(text).program()


def parse_term(text: str) -> Term:
    """Parse a single term (convenience entry point for tests and the CLI)."""
    p = _Parser(text)
    term = p.term()
    t = p.peek()
    if t.kind != "eof":
        raise ParseError(f"trailing input {t.text!r}", t.line, t.col)
    return term


# ---------------------------------------------------------------------------
# Pretty printer

_PREC_TERM = 0      # lambdas, let, ifz, for
_PREC_SEQ = 1
_PREC_TENSOR = 2
_PREC_CONS = 3
_PREC_ADD = 5
_PREC_MUL = 6
_PREC_POW = 7
_PREC_APP = 8
_PREC_ATOM = 9


def pretty_type(t: TypeExpr) -> str:
    if isinstance(t, TBit):
        return "B"
    if isinstance(t, TQubit):
        return "Q"
    if isinstance(t, TUnit):
        return "Unit"
    if isinstance(t, TNat):
        return "Nat"
    if isinstance(t, TTensor):
        return f"({pretty_type(t.left)} * {pretty_type(t.right)})"
    if isinstance(t, TLolli):
        return f"({pretty_type(t.arg)} -o {pretty_type(t.res)})"
    if isinstance(t, TVec):
        return f"Vec {_pretty_type_atom(t.elem)} {_pretty_nat_atom(t.size)}"
    if isinstance(t, TArrow):
        return f"(({t.var}:Nat) -> {pretty_type(t.body)})"
    raise TypeError(f"not a TypeExpr: {t!r}")


def _pretty_type_atom(t: TypeExpr) -> str:
    s = pretty_type(t)
    if isinstance(t, (TBit, TQubit, TUnit, TNat)) or s.startswith("("):
        return s
    return f"({s})"


def pretty_nat(e: NatExpr) -> str:
    if isinstance(e, NConst):
        return str(e.value)
    if isinstance(e, NVar):
        return e.name
    if isinstance(e, NBin):
        return f"({pretty_nat(e.left)} {e.op} {pretty_nat(e.right)})"
    return repr(e)


def _pretty_nat_atom(e: NatExpr) -> str:
    s = pretty_nat(e)
    if isinstance(e, (NConst, NVar)) or s.startswith("("):
        return s
    return f"({s})"


def pretty_print(m: Term) -> str:
    """Render a term; parsing the result again gives an alpha-equivalent term."""
    return _pp(m, _PREC_TERM)


def _paren(s: str, need: bool) -> str:
    return f"({s})" if need else s


def _binding(name: str, ty) -> str:
    if ty is None:
        return name
    return f"{name}:{_pretty_type_atom(ty)}"


def _pp(m: Term, prec: int) -> str:
    if isinstance(m, Var):
        return m.name
    if isinstance(m, Lit):
        return str(m.value)
    if isinstance(m, Star):
        return "()"
    if isinstance(m, VNilT):
        if m.elem_type is None:
            return "VNil[_]"
        return f"VNil[{pretty_type(m.elem_type)}]"
    if isinstance(m, Meas):
        return "meas"
    if isinstance(m, New):
        return "new"
    if isinstance(m, Unitary):
        return m.name
    if isinstance(m, Rotation):
        return m.name
    if isinstance(m, (Prim, Macro)):
        if m.type_args:
            args = ",".join(pretty_type(t) for t in m.type_args)
            return f"{m.name}[{args}]"
        return m.name
    if isinstance(m, Token):
        return f"<wire {m.index}>"
    if isinstance(m, Lam):
        ann = "" if m.var_type is None else f":{pretty_type(m.var_type)}"
        return _paren(f"\\{m.var}{ann}. {_pp(m.body, _PREC_TERM)}", prec > _PREC_TERM)
    if isinstance(m, PLam):
        ann = "" if m.var_type is None else f":{pretty_type(m.var_type)}"
        return _paren(f"\\'{m.var}{ann}. {_pp(m.body, _PREC_TERM)}", prec > _PREC_TERM)
    if isinstance(m, LetTensor):
        s = (f"let {_binding(m.x, m.x_type)} (*) {_binding(m.y, m.y_type)} = "
             f"{_pp(m.subject, _PREC_TERM)} in {_pp(m.body, _PREC_TERM)}")
        return _paren(s, prec > _PREC_TERM)
    if isinstance(m, LetCons):
        s = (f"let {_binding(m.x, m.x_type)} :: {_binding(m.y, m.y_type)} = "
             f"{_pp(m.subject, _PREC_TERM)} in {_pp(m.body, _PREC_TERM)}")
        return _paren(s, prec > _PREC_TERM)
    if isinstance(m, Ifz):
        s = (f"ifz {_pp(m.guard, _PREC_SEQ)} then {_pp(m.then, _PREC_TERM)} "
             f"else {_pp(m.other, _PREC_TERM)}")
        return _paren(s, prec > _PREC_TERM)
    if isinstance(m, For):
        s = f"for {m.var} in {_pp(m.vec, _PREC_SEQ)} do {_pp(m.body, _PREC_TERM)}"
        return _paren(s, prec > _PREC_TERM)
    if isinstance(m, Seq):
        s = f"{_pp(m.first, _PREC_TENSOR)} ; {_pp(m.rest, _PREC_SEQ)}"
        return _paren(s, prec > _PREC_SEQ)
    if isinstance(m, SeqVec):
        s = f"{_pp(m.first, _PREC_TENSOR)} ;v {_pp(m.rest, _PREC_SEQ)}"
        return _paren(s, prec > _PREC_SEQ)
    if isinstance(m, Tensor):
        s = f"{_pp(m.left, _PREC_CONS)} (*) {_pp(m.right, _PREC_TENSOR)}"
        return _paren(s, prec > _PREC_TENSOR)
    if isinstance(m, Cons):
        s = f"{_pp(m.head, _PREC_ADD)} :: {_pp(m.tail, _PREC_CONS)}"
        return _paren(s, prec > _PREC_CONS)
    if isinstance(m, Arith):
        if m.op in ("+", "-"):
            inner, outer = _PREC_MUL, _PREC_ADD
        elif m.op in ("*", "/"):
            inner, outer = _PREC_POW, _PREC_MUL
        else:
            inner, outer = _PREC_APP, _PREC_POW
        if m.op == "^":
            s = f"{_pp(m.left, inner)} ^ {_pp(m.right, outer)}"
        else:
            s = f"{_pp(m.left, outer)} {m.op} {_pp(m.right, inner)}"
        return _paren(s, prec > outer)
    if isinstance(m, Reverse):
        return _paren(f"reverse {_pp(m.arg, _PREC_ATOM)}", prec > _PREC_APP)
    if isinstance(m, App):
        s = f"{_pp(m.fn, _PREC_APP)} {_pp(m.arg, _PREC_ATOM)}"
        return _paren(s, prec > _PREC_APP)
    if isinstance(m, PApp):
        s = f"{_pp(m.fn, _PREC_APP)} @{_pp(m.arg, _PREC_ATOM)}"
        return _paren(s, prec > _PREC_APP)
    raise TypeError(f"not a Term: {m!r}")
