"""Translation of translatable judgements into families of SZX diagrams.

A judgement with state context Gamma and type A becomes an open diagram
with one input bundle per consumed context variable (in declaration order)
and a single output bundle of width <A>. Function types are represented as
pairs of registers: the argument wires of a lambda are bent to the output
side through a cup, and application caps them against the argument's output.
Parameter lambdas add family parameters; parameter applications substitute
symbolic naturals into the family.

Both ifz branches are translated; each lives inside a list-instantiation
box whose list length is a Kronecker delta of the guard, so exactly one
branch survives instantiation and the dead one erases as an empty box.
The accumulating-map primitive gets the same treatment: the feedback-loop
encoding assumes at least one element, so a delta-guarded pair selects
between it and the pass-through-accumulator diagram at zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

import numpy as np

from .lambda_core import (
    LRange, NBin, NConst, NIte0, NVar, NatExpr, TArrow, TBit, TLolli, TNat,
    TQubit, TTensor, TUnit, TVec, Term, TypeExpr, nat, is_state_type,
)
from .typechecker import Derivation, TypeCheckError, classify, typecheck_full
from .szx_ir import (
    Cap, Cup, Diagram, FamilyBox, Ground, Hadamard, PExplicit, PRational,
    PSym, PUniform, Perm, SplitGather, TauSpec, Wire, XSpider, ZSpider,
    gather, split, substitute_param, zero_phases,
)


class TranslationError(Exception):
    pass


# ---------------------------------------------------------------------------
# Gate table (shared with the verification oracle)


@dataclass(frozen=True)
class GateTable:
    """Encodings of the fixed gate set, plus the rotation phase convention.

    ``rz_convention`` chooses whether a rotation parameter m denotes an angle
    of 2*pi/m or pi/m. The oracle reads the same table, so end-to-end
    verification is independent of the choice.
    """

    rz_convention: str = "2pi"

    def __post_init__(self):
        if self.rz_convention not in ("2pi", "pi"):
            raise ValueError("rz_convention must be '2pi' or 'pi'")

    def turns_denominator(self, m: NatExpr) -> NatExpr:
        if self.rz_convention == "2pi":
            return m
        return NBin("*", NConst(2), m)

    def rotation_turns(self, name: str, m: int) -> Fraction:
        c = 1 if self.rz_convention == "2pi" else 2
        sign = -1 if name.endswith("Inv") else 1
        if m * c == 0:
            raise TranslationError("rotation with zero angle denominator")
        return Fraction(sign, c * m)

    def unitary(self, name: str, turns: Optional[Fraction] = None) -> np.ndarray:
        """Unitary matrix of a gate, for the circuit-simulation oracle."""
        if name == "H":
            s = 1 / np.sqrt(2)
            return np.array([[s, s], [s, -s]], dtype=complex)
        if name == "CNOT":
            return np.array([[1, 0, 0, 0], [0, 1, 0, 0],
                             [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
        if name in ("Rz", "RzInv", "Rx", "RxInv"):
            if turns is None:
                raise ValueError("rotations need an angle")
            phase = np.exp(2j * np.pi * float(turns))
            rz = np.array([[1, 0], [0, phase]], dtype=complex)
            if name.startswith("Rx"):
                h = self.unitary("H")
                return h @ rz @ h
            return rz
        raise ValueError(f"unknown gate {name!r}")


DEFAULT_GATES = GateTable()


def gate_diagram(name: str, angle_param: Optional[NatExpr] = None,
                 table: GateTable = DEFAULT_GATES) -> Diagram:
    """Core diagram of a gate: 1->1 for single-qubit gates, 2->2 for CNOT."""
    d = Diagram()
    one = NConst(1)
    if name == "H":
        h = d.add(Hadamard(one))
        d.add_input((h, 0))
        d.add_output((h, 0))
        return d
    if name == "CNOT":
        zc = d.add(ZSpider(1, 2, one, zero_phases(one)))
        xt = d.add(XSpider(2, 1, one, zero_phases(one)))
        d.connect((zc, 1), (xt, 1), 1)
        d.add_input((zc, 0))
        d.add_input((xt, 0))
        d.add_output((zc, 0))
        d.add_output((xt, 0))
        return d
    if name in ("Rz", "RzInv", "Rx", "RxInv"):
        if angle_param is None:
            raise TranslationError("rotations need an angle parameter")
        sign = -1 if name.endswith("Inv") else 1
        phase = PSym(sign, table.turns_denominator(angle_param))
        cls = ZSpider if name.startswith("Rz") else XSpider
        sp = d.add(cls(1, 1, one, PExplicit((phase,))))
        d.add_input((sp, 0))
        d.add_output((sp, 0))
        return d
    raise TranslationError(f"unknown gate {name!r}")


# ---------------------------------------------------------------------------
# Type widths


def type_width(t: TypeExpr) -> NatExpr:
    """Register width of a state type: <B>=<Q>=1, <Unit>=0, vectors scale,
    products and linear functions both take the sum of the sides."""
    if isinstance(t, (TBit, TQubit)):
        return NConst(1)
    if isinstance(t, TUnit):
        return NConst(0)
    if isinstance(t, TTensor):
        return NBin("+", type_width(t.left), type_width(t.right))
    if isinstance(t, TLolli):
        return NBin("+", type_width(t.arg), type_width(t.res))
    if isinstance(t, TVec):
        return NBin("*", t.size, type_width(t.elem))
    raise TranslationError(f"not a state type: {t!r}")


def _strip_arrows(t: TypeExpr) -> TypeExpr:
    while isinstance(t, TArrow):
        t = t.body
    return t


# ---------------------------------------------------------------------------
# Translator


class _Translator:
    def __init__(self, table: GateTable):
        self.table = table
        self.fresh = 0

    def _dummy(self) -> str:
        self.fresh += 1
        return f"_live{self.fresh}"

    # Every translation returns a diagram whose inputs align one-to-one with
    # deriv.consumed (in ambient order) and whose single output carries the
    # stripped width of deriv.type.

    def go(self, deriv: Derivation) -> Diagram:
        rule = deriv.rule
        handler = getattr(self, f"_tr_{rule}", None)
        if handler is None:
            raise TranslationError(f"rule {rule!r} has no diagram translation "
                                   f"(is the term translatable?)")
        d = handler(deriv)
        d.params = [name for name, _ in deriv.phi]
        if isinstance(deriv.type, TArrow):
            prefix = []
            t = deriv.type
            while isinstance(t, TArrow):
                prefix.append(t.var)
                t = t.body
            d.params = prefix + [p for p in d.params if p not in prefix]
        return d

    # -- leaves ---------------------------------------------------------------

    def _tr_ax(self, deriv):
        if deriv.aux.get("kind") != "state":
            raise TranslationError("parameter variables are not translatable "
                                   "on their own")
        d = Diagram()
        w = d.add(Wire(type_width(deriv.type)))
        d.add_input((w, 0))
        d.add_output((w, 0))
        return d

    def _bit_state(self, turns: Fraction) -> Diagram:
        d = Diagram()
        x = d.add(XSpider(0, 1, NConst(1),
                          PExplicit((PRational(turns),))))
        d.add_output((x, 0))
        return d

    def _tr_ax0(self, deriv):
        return self._bit_state(Fraction(0))

    def _tr_ax1(self, deriv):
        return self._bit_state(Fraction(1, 2))

    def _tr_ax_star(self, deriv):
        return self._unit_value()

    def _tr_vnil(self, deriv):
        return self._unit_value()

    def _unit_value(self) -> Diagram:
        d = Diagram()
        g = d.add(SplitGather((), flipped=False))
        d.add_output((g, 0))
        return d

    def _tr_meas(self, deriv):
        return self._decoherence_value()

    def _tr_new(self, deriv):
        # new and meas share the same translation (symmetry kept on purpose)
        return self._decoherence_value()

    def _decoherence_value(self) -> Diagram:
        d = Diagram()
        one = NConst(1)
        cup = d.add(Cup(one))
        z = d.add(ZSpider(1, 2, one, zero_phases(one)))
        gr = d.add(Ground(one))
        g = d.add(gather(1, 1))
        d.connect((cup, 1), (z, 0), 1)
        d.connect((z, 0), (gr, 0), 1)
        d.connect((cup, 0), (g, 0), 1)
        d.connect((z, 1), (g, 1), 1)
        d.add_output((g, 0))
        return d

    def _tr_u(self, deriv):
        name = deriv.term.name
        core = gate_diagram(name, table=self.table)
        if name == "H":
            return self._bend_core(core, [NConst(1)], NConst(1))
        return self._bend_core_cnot(core)

    def _tr_r(self, deriv):
        var = deriv.type.var
        core = gate_diagram(deriv.term.name, NVar(var), table=self.table)
        return self._bend_core(core, [NConst(1)], NConst(1))

    def _bend_core(self, core: Diagram, in_widths, out_width) -> Diagram:
        """Wrap a k->1 core into a function value, currying left to right."""
        d = Diagram()
        m = d.merge(core)
        cups = []
        for (nid, p), w in zip(core.inputs, in_widths):
            cup = d.add(Cup(w))
            d.connect((cup, 1), (m[nid], p), w)
            cups.append((cup, w))
        (onid, op) = core.outputs[0]
        result_port, result_w = (m[onid], op), out_width
        for cup, w in reversed(cups):
            g = d.add(gather(w, result_w))
            d.connect((cup, 0), (g, 0), w)
            d.connect(result_port, (g, 1), result_w)
            result_port, result_w = (g, 0), NBin("+", w, result_w)
        d.add_output(result_port)
        return d

    def _bend_core_cnot(self, core: Diagram) -> Diagram:
        # CNOT core has two outputs; gather them into the Q*Q result first.
        d = Diagram()
        m = d.merge(core)
        g = d.add(gather(1, 1))
        for i, (nid, p) in enumerate(core.outputs):
            d.connect((m[nid], p), (g, i), 1)
        inner = Diagram()
        im = inner.merge(d)
        for nid, p in core.inputs:
            inner.add_input((im[m[nid]], p))
        inner.add_output((im[g], 0))
        return self._bend_core(inner, [NConst(1), NConst(1)], NConst(2))

    def _tr_prim(self, deriv):
        d = translate_primitive(deriv.term.name, deriv.term.type_args,
                                self.table)
        # Align the canonical parameter names with this judgement's fresh
        # signature binders (two phases to dodge accidental collisions).
        targets = []
        t = deriv.type
        while isinstance(t, TArrow):
            targets.append(t.var)
            t = t.body
        olds = list(d.params)
        for i, old in enumerate(olds):
            d = substitute_param(d, old, NVar(f"__tmp{i}"))
        for i, new in enumerate(targets):
            d = substitute_param(d, f"__tmp{i}", NVar(new))
        return d

    def _tr_token(self, deriv):
        raise TranslationError("wire tokens appear only during extraction")

    # -- structural rules ------------------------------------------------------

    def _child_ports(self, d: Diagram, deriv: Derivation, mapping) -> Dict[str, tuple]:
        return {name: (mapping[nid], p)
                for (name, _), (nid, p) in zip(deriv.consumed, d.inputs)}

    def _combine_inputs(self, out: Diagram, deriv: Derivation, ports: Dict[str, tuple]):
        for name, _ in deriv.consumed:
            out.add_input(ports[name])

    def _tr_lam(self, deriv):
        (body,) = deriv.children
        d_body = self.go(body)
        x = deriv.aux["binder"]
        wa = type_width(deriv.aux["binder_type"])
        wb = type_width(_strip_arrows(body.type))
        d = Diagram()
        m = d.merge(d_body)
        ports = self._child_ports(d_body, body, m)
        cup = d.add(Cup(wa))
        d.connect((cup, 1), ports.pop(x), wa)
        g = d.add(gather(wa, wb))
        d.connect((cup, 0), (g, 0), wa)
        d.connect((m[d_body.outputs[0][0]], d_body.outputs[0][1]), (g, 1), wb)
        self._combine_inputs(d, deriv, ports)
        d.add_output((g, 0))
        return d

    def _tr_app(self, deriv):
        dfn, darg = deriv.children
        wa = type_width(_strip_arrows(darg.type))
        wb = type_width(_strip_arrows(deriv.type))
        d = Diagram()
        f = self.go(dfn)
        a = self.go(darg)
        mf = d.merge(f)
        ma = d.merge(a)
        ports = self._child_ports(f, dfn, mf)
        ports.update(self._child_ports(a, darg, ma))
        s = d.add(split(wa, wb))
        d.connect((mf[f.outputs[0][0]], f.outputs[0][1]), (s, 0),
                  NBin("+", wa, wb))
        cap = d.add(Cap(wa))
        d.connect((s, 0), (cap, 0), wa)
        d.connect((ma[a.outputs[0][0]], a.outputs[0][1]), (cap, 1), wa)
        self._combine_inputs(d, deriv, ports)
        d.add_output((s, 1))
        return d

    def _tr_plam(self, deriv):
        (body,) = deriv.children
        return self.go(body)

    def _tr_papp(self, deriv):
        dfn, _ = deriv.children
        d = self.go(dfn)
        var = dfn.type.var
        expr = deriv.aux.get("arg_expr")
        if expr is None:
            expr = NConst(0)  # unused: the checker proved the type ignores it
        return substitute_param(d, var, expr)

    def _pair_like(self, deriv, wl, wr):
        dl, dr = deriv.children
        d = Diagram()
        left = self.go(dl)
        right = self.go(dr)
        ml = d.merge(left)
        mr = d.merge(right)
        ports = self._child_ports(left, dl, ml)
        ports.update(self._child_ports(right, dr, mr))
        g = d.add(gather(wl, wr))
        d.connect((ml[left.outputs[0][0]], left.outputs[0][1]), (g, 0), wl)
        d.connect((mr[right.outputs[0][0]], right.outputs[0][1]), (g, 1), wr)
        self._combine_inputs(d, deriv, ports)
        d.add_output((g, 0))
        return d

    def _tr_tensor(self, deriv):
        dl, dr = deriv.children
        return self._pair_like(deriv, type_width(_strip_arrows(dl.type)),
                               type_width(_strip_arrows(dr.type)))

    def _tr_cons(self, deriv):
        dh, dt = deriv.children
        return self._pair_like(deriv, type_width(_strip_arrows(dh.type)),
                               type_width(dt.type))

    def _tr_seq(self, deriv):
        dfirst, drest = deriv.children
        return self._pair_like(deriv, type_width(dfirst.type),
                               type_width(_strip_arrows(drest.type)))

    def _tr_seq_vec(self, deriv):
        return self._tr_seq(deriv)

    def _let_like(self, deriv, wx, wy):
        dsub, dbody = deriv.children
        term = deriv.term
        d = Diagram()
        sub = self.go(dsub)
        body = self.go(dbody)
        ms = d.merge(sub)
        mb = d.merge(body)
        sports = self._child_ports(sub, dsub, ms)
        bports = self._child_ports(body, dbody, mb)
        s = d.add(split(wx, wy))
        d.connect((ms[sub.outputs[0][0]], sub.outputs[0][1]), (s, 0),
                  NBin("+", wx, wy))
        d.connect((s, 0), bports.pop(term.x), wx)
        d.connect((s, 1), bports.pop(term.y), wy)
        ports = dict(sports)
        ports.update(bports)
        self._combine_inputs(d, deriv, ports)
        d.add_output((mb[body.outputs[0][0]], body.outputs[0][1]))
        return d

    def _tr_let_tensor(self, deriv):
        return self._let_like(deriv, type_width(deriv.aux["x_type"]),
                              type_width(deriv.aux["y_type"]))

    def _tr_let_cons(self, deriv):
        return self._let_like(deriv, type_width(deriv.aux["x_type"]),
                              type_width(deriv.aux["y_type"]))

    def _tr_let_cons_param(self, deriv):
        raise TranslationError("parameter-vector destructuring inside a "
                               "translatable term is not supported; evaluate "
                               "it at the parameter level instead")

    def _tr_ifz(self, deriv):
        dguard, dthen, delse = deriv.children
        guard = deriv.aux.get("guard_expr")
        if guard is None:
            raise TranslationError("ifz guard is too complex to translate")
        then_d = self.go(dthen)
        else_d = self.go(delse)
        w = type_width(_strip_arrows(dthen.type))
        delta_then = NIte0(guard, NConst(1), NConst(0))
        delta_else = NIte0(guard, NConst(0), NConst(1))
        d = Diagram()
        box_t = d.add(FamilyBox(self._dummy(), LRange(NConst(0), delta_then),
                                then_d))
        box_e = d.add(FamilyBox(self._dummy(), LRange(NConst(0), delta_else),
                                else_d))
        tports = {name: i for i, (name, _) in enumerate(dthen.consumed)}
        eports = {name: i for i, (name, _) in enumerate(delse.consumed)}
        for name, t in deriv.consumed:
            wi = type_width(t)
            s = d.add(split(NIte0(guard, wi, NConst(0)),
                            NIte0(guard, NConst(0), wi)))
            d.connect((s, 0), (box_t, tports[name]),
                      NIte0(guard, wi, NConst(0)))
            d.connect((s, 1), (box_e, eports[name]),
                      NIte0(guard, NConst(0), wi))
            d.add_input((s, 0))
        g = d.add(gather(NIte0(guard, w, NConst(0)),
                         NIte0(guard, NConst(0), w)))
        d.connect((box_t, 0), (g, 0), NIte0(guard, w, NConst(0)))
        d.connect((box_e, 0), (g, 1), NIte0(guard, NConst(0), w))
        d.add_output((g, 0))
        return d

    def _tr_for(self, deriv):
        dvec, dbody = deriv.children
        if dbody.consumed:
            names = [n for n, _ in dbody.consumed]
            raise TranslationError(
                f"for-body uses ambient state variables {names}; replicated "
                "contexts have no register translation")
        vec = deriv.aux.get("vec_expr")
        if vec is None:
            raise TranslationError("for-list is too complex to translate")
        body = self.go(dbody)
        d = Diagram()
        box = d.add(FamilyBox(deriv.aux["index"], vec, body))
        d.add_output((box, 0))
        return d

    def _tr_reverse(self, deriv):
        raise TranslationError("reverse is a parameter-level operation")

    def _tr_arith(self, deriv):
        raise TranslationError("arithmetic is a parameter-level operation")

    def _tr_axn(self, deriv):
        raise TranslationError("bare naturals are parameter-level values")

    def _tr_macro(self, deriv):
        raise TranslationError("expand macros before translating")


# ---------------------------------------------------------------------------
# Primitive value diagrams


def translate_primitive(name: str, type_args: tuple,
                        table: GateTable = DEFAULT_GATES) -> Diagram:
    """Family diagram of a vector primitive used as a value."""
    if name == "split":
        (a,) = type_args
        wa = type_width(a)
        wn = NBin("*", NVar("n"), wa)
        wm = NBin("*", NVar("m"), wa)
        d = Diagram(params=["n", "m"])
        whole = NBin("+", wn, wm)
        cup = d.add(Cup(whole))
        g = d.add(gather(whole, whole))
        d.connect((cup, 0), (g, 0), whole)
        d.connect((cup, 1), (g, 1), whole)
        d.add_output((g, 0))
        return d
    if name == "append":
        (a,) = type_args
        wa = type_width(a)
        wn = NBin("*", NVar("n"), wa)
        wm = NBin("*", NVar("m"), wa)
        d = Diagram(params=["n", "m"])
        cup_x = d.add(Cup(wn))
        cup_y = d.add(Cup(wm))
        g_res = d.add(gather(wn, wm))
        d.connect((cup_x, 1), (g_res, 0), wn)
        d.connect((cup_y, 1), (g_res, 1), wm)
        g2 = d.add(gather(wm, NBin("+", wn, wm)))
        d.connect((cup_y, 0), (g2, 0), wm)
        d.connect((g_res, 0), (g2, 1), NBin("+", wn, wm))
        g1 = d.add(gather(wn, NBin("+", wm, NBin("+", wn, wm))))
        d.connect((cup_x, 0), (g1, 0), wn)
        d.connect((g2, 0), (g1, 1), NBin("+", wm, NBin("+", wn, wm)))
        d.add_output((g1, 0))
        return d
    if name == "drop":
        d = Diagram(params=["n"])
        g = d.add(SplitGather((), flipped=False))
        d.add_output((g, 0))
        return d
    if name == "accuMap":
        return _accumap_diagram(type_args)
    if name == "range":
        raise TranslationError("range is evaluable, not translatable")
    raise TranslationError(f"unknown primitive {name!r}")


def _accumap_value_width(a, b, c) -> NatExpr:
    n = NVar("n")
    wk = NBin("+", a, NBin("+", c, NBin("+", b, c)))
    na, nk, nb = NBin("*", n, a), NBin("*", n, wk), NBin("*", n, b)
    return NBin("+", na, NBin("+", nk, NBin("+", c, NBin("+", nb, c))))


def _accumap_diagram(type_args: tuple) -> Diagram:
    ta, tb, tc = type_args
    a, b, c = type_width(ta), type_width(tb), type_width(tc)
    n = NVar("n")
    loop = _accumap_loop(a, b, c)
    base = _accumap_base(a, b, c)
    w = _accumap_value_width(a, b, c)
    d = Diagram(params=["n"])
    w_then = NIte0(n, w, NConst(0))
    w_else = NIte0(n, NConst(0), w)
    box_t = d.add(FamilyBox("_z", LRange(NConst(0), NIte0(n, NConst(1), NConst(0))),
                            base))
    box_e = d.add(FamilyBox("_p", LRange(NConst(0), NIte0(n, NConst(0), NConst(1))),
                            loop))
    g = d.add(gather(w_then, w_else))
    d.connect((box_t, 0), (g, 0), w_then)
    d.connect((box_e, 0), (g, 1), w_else)
    d.add_output((g, 0))
    return d


def _bundle(d: Diagram, parts: List[Tuple[tuple, NatExpr]]) -> Tuple[tuple, NatExpr]:
    """Right-nested gathers packing (port, width) pairs into one bundle."""
    port, width = parts[-1]
    for p, w in reversed(parts[:-1]):
        g = d.add(gather(w, width))
        d.connect(p, (g, 0), w)
        d.connect(port, (g, 1), width)
        port, width = (g, 0), NBin("+", w, width)
    return port, width


def _accumap_base(a, b, c) -> Diagram:
    """accuMap at n = 0: empty vectors pass, the accumulator is identity.

    The empty-vector registers are sourced from legless gathers; every
    symbolic width here evaluates to zero in the only environment where this
    branch is live.
    """
    n = NVar("n")
    na = NBin("*", n, a)
    nk = NBin("*", n, NBin("+", a, NBin("+", c, NBin("+", b, c))))
    nb = NBin("*", n, b)
    d = Diagram(params=["n"])
    src_xs = d.add(SplitGather((), flipped=False))
    src_fs = d.add(SplitGather((), flipped=False))
    src_ys = d.add(SplitGather((), flipped=False))
    cup_z = d.add(Cup(c))
    g_res = d.add(gather(nb, c))
    d.connect((src_ys, 0), (g_res, 0), nb)
    d.connect((cup_z, 1), (g_res, 1), c)
    port, _ = _bundle(d, [((src_xs, 0), na), ((src_fs, 0), nk),
                          ((cup_z, 0), c), ((g_res, 0), NBin("+", nb, c))])
    d.add_output(port)
    return d


def _accumap_loop(a, b, c) -> Diagram:
    """The feedback-loop encoding, valid for n >= 1.

    The function-vector register is rearranged by the tau permutation into
    contiguous argument, accumulator-in, result and accumulator-out groups;
    the accumulator threads stagewise by feeding all but the last
    accumulator-out back beside the initial value.
    """
    n = NVar("n")
    wk = NBin("+", a, NBin("+", c, NBin("+", b, c)))
    na, nk, nb, nc = (NBin("*", n, x) for x in (a, wk, b, c))
    n1c = NBin("*", NBin("-", n, NConst(1)), c)
    d = Diagram(params=["n"])
    cup_xs = d.add(Cup(na))
    cup_fs = d.add(Cup(nk))
    cup_z = d.add(Cup(c))
    tau = d.add(Perm(nk, TauSpec(n, a, b, c)))
    d.connect((cup_fs, 1), (tau, 0), nk)
    split4 = d.add(split(na, nc, nb, nc))
    d.connect((tau, 0), (split4, 0), nk)
    cap_x = d.add(Cap(na))
    d.connect((split4, 0), (cap_x, 0), na)
    d.connect((cup_xs, 1), (cap_x, 1), na)
    split_s = d.add(split(n1c, c))
    d.connect((split4, 3), (split_s, 0), nc)
    g_s = d.add(gather(c, n1c))
    d.connect((cup_z, 1), (g_s, 0), c)
    d.connect((split_s, 0), (g_s, 1), n1c)
    cap_c = d.add(Cap(nc))
    d.connect((g_s, 0), (cap_c, 0), nc)
    d.connect((split4, 1), (cap_c, 1), nc)
    g_res = d.add(gather(nb, c))
    d.connect((split4, 2), (g_res, 0), nb)
    d.connect((split_s, 1), (g_res, 1), c)
    port, _ = _bundle(d, [((cup_xs, 0), na), ((cup_fs, 0), nk),
                          ((cup_z, 0), c), ((g_res, 0), NBin("+", nb, c))])
    d.add_output(port)
    return d


# ---------------------------------------------------------------------------
# Entry points


def translate(phi, gamma, m: Term, a: Optional[TypeExpr] = None,
              table: GateTable = DEFAULT_GATES) -> Diagram:
    """Translate a typed judgement into a family diagram."""
    deriv = typecheck_full(tuple(phi), tuple(gamma), m, a)
    if classify(deriv.type) != "translatable":
        raise TranslationError(f"type {deriv.type!r} is evaluable, "
                               "not translatable")
    return translate_derivation(deriv, table)


def translate_derivation(deriv: Derivation,
                         table: GateTable = DEFAULT_GATES) -> Diagram:
    return _Translator(table).go(deriv)


def uncurry_value(d: Diagram, t: TypeExpr, table: GateTable = DEFAULT_GATES):
    """Turn a closed function-value diagram into an open map diagram.

    Splits the value bundle per the (nested) linear-function type, capping
    argument registers against fresh input wires. Returns the open diagram
    and the list of argument widths.
    """
    t = _strip_arrows(t)
    if d.inputs:
        raise TranslationError("uncurry expects a closed value diagram")
    arg_widths: List[NatExpr] = []
    while isinstance(t, TLolli):
        wa = type_width(t.arg)
        wb = type_width(t.res)
        out = Diagram(d.params)
        m = out.merge(d)
        s = out.add(split(wa, wb))
        (onid, op) = d.outputs[0]
        out.connect((m[onid], op), (s, 0), NBin("+", wa, wb))
        cap = out.add(Cap(wa))
        wire = out.add(Wire(wa))
        out.connect((s, 0), (cap, 0), wa)
        out.connect((wire, 0), (cap, 1), wa)
        out.inputs = [(m[n], p) for n, p in d.inputs] + [(wire, 0)]
        out.outputs = [(s, 1)]
        arg_widths.append(wa)
        d = out
        t = t.res
    return d, arg_widths
