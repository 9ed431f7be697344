"""Reference semantics: diagrams as completely positive maps, plus an
independent circuit-extraction oracle.

CPMaps are superoperators on vectorized density matrices in a per-qubit
fused basis: each qubit contributes one dimension-4 index coding
(ket bit, bra bit) as 2*ket+bra. In this basis the tensor product of maps
is a plain Kronecker product and composition is matrix multiplication.

Interpretation decomposes a concrete diagram into one small tensor per
spider/Hadamard/ground *qubit slot*; wires, gathers, splits, swaps,
permutation arrows, cups and caps are pure index identifications. A cup is
a bent identity wire, which is exactly what makes beta reduction semantics
preserving.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .lambda_core import (
    App, Cons, Lit, NConst, PApp, Rotation, Star, TArrow, TBit, TLolli, TNat,
    TQubit, TTensor, TUnit, TVec, Tensor, Term, Token, TypeExpr, Unitary,
    Meas, New, nat_eval, type_subst,
)
from .reducer import expand_macros, step
from .szx_ir import (
    Cap, Cup, Diagram, ExplicitPerm, FamilyBox, Ground, Hadamard, PExplicit,
    Perm, SplitGather, SwapNode, Wire, XSpider, ZSpider, eval_phase_vec,
    node_ports,
)
from .translator import DEFAULT_GATES, GateTable
from .typechecker import classify, typecheck_full


class OracleError(Exception):
    pass


class QubitLimitError(OracleError):
    pass


# ---------------------------------------------------------------------------
# CPMap


@dataclass
class CPMap:
    """Superoperator matrix of shape (4**q_out, 4**q_in), fused basis."""

    q_in: int
    q_out: int
    mat: np.ndarray

    def __post_init__(self):
        expected = (4 ** self.q_out, 4 ** self.q_in)
        if self.mat.shape != expected:
            raise ValueError(f"CPMap shape {self.mat.shape} != {expected}")

    def apply(self, rho_vec: np.ndarray) -> np.ndarray:
        return self.mat @ rho_vec


def cpm_identity(q: int) -> CPMap:
    return CPMap(q, q, np.eye(4 ** q, dtype=complex))


def cpm_compose(second: CPMap, first: CPMap) -> CPMap:
    if first.q_out != second.q_in:
        raise ValueError("dimension mismatch in composition")
    return CPMap(first.q_in, second.q_out, second.mat @ first.mat)


def cpm_tensor(a: CPMap, b: CPMap) -> CPMap:
    return CPMap(a.q_in + b.q_in, a.q_out + b.q_out, np.kron(a.mat, b.mat))


def unitary_to_superop(u: np.ndarray, qubits: int) -> np.ndarray:
    """Conjugation superoperator of a unitary, in the fused per-qubit basis."""
    s = np.kron(u, u.conj())
    t = s.reshape([2] * (4 * qubits))
    # axes: kets_out, bras_out, kets_in, bras_in; interleave per qubit
    perm = []
    for q in range(qubits):
        perm.extend([q, qubits + q])
    for q in range(qubits):
        perm.extend([2 * qubits + q, 3 * qubits + q])
    t = t.transpose(perm)
    return t.reshape(4 ** qubits, 4 ** qubits)


def kraus_to_superop(ops: Sequence[np.ndarray], q_in: int, q_out: int) -> np.ndarray:
    total = np.zeros((4 ** q_out, 4 ** q_in), dtype=complex)
    for k in ops:
        s = np.kron(k, k.conj())
        t = s.reshape([2] * (2 * q_out) + [2] * (2 * q_in))
        perm = []
        for q in range(q_out):
            perm.extend([q, q_out + q])
        for q in range(q_in):
            perm.extend([2 * q_out + q, 2 * q_out + q_in + q])
        total += t.transpose(perm).reshape(4 ** q_out, 4 ** q_in)
    return total


DECOHERE_1 = np.diag([1.0, 0.0, 0.0, 1.0]).astype(complex)
GROUND_1 = np.array([1.0, 0.0, 0.0, 1.0], dtype=complex)  # partial trace


def hadamard_channel() -> CPMap:
    return CPMap(1, 1, unitary_to_superop(DEFAULT_GATES.unitary("H"), 1))


def cpm_equal_mod_scalar(a: CPMap, b: CPMap, tol: float = 1e-9) -> bool:
    """Frobenius comparison after normalizing each map by its norm."""
    if (a.q_in, a.q_out) != (b.q_in, b.q_out):
        raise ValueError("CPMap dimension mismatch")
    na = np.linalg.norm(a.mat)
    nb = np.linalg.norm(b.mat)
    tiny = 1e-14
    if na < tiny or nb < tiny:
        return na < tiny and nb < tiny
    return float(np.linalg.norm(a.mat / na - b.mat / nb)) <= tol


def cpm_residual(a: CPMap, b: CPMap) -> float:
    na = np.linalg.norm(a.mat)
    nb = np.linalg.norm(b.mat)
    if na == 0 or nb == 0:
        return 0.0 if na == nb else float("inf")
    return float(np.linalg.norm(a.mat / na - b.mat / nb))


# ---------------------------------------------------------------------------
# Diagram interpretation


class _UnionFind:
    def __init__(self):
        self.parent: Dict[int, int] = {}

    def find(self, x: int) -> int:
        root = x
        while self.parent.get(root, root) != root:
            root = self.parent[root]
        while self.parent.get(x, x) != x:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def _z_slot_tensor(n_in: int, n_out: int, turns: Fraction) -> np.ndarray:
    legs = n_in + n_out
    alpha = 2 * np.pi * float(turns)
    if legs == 0:
        total = 0j
        for x in (0, 1):
            for y in (0, 1):
                total += np.exp(1j * alpha * (x - y))
        return np.array(total)
    t = np.zeros((4,) * legs, dtype=complex)
    for x in (0, 1):
        for y in (0, 1):
            code = 2 * x + y
            t[(code,) * legs] = np.exp(1j * alpha * (x - y))
    return t


_H_SLOT = unitary_to_superop(np.array([[1, 1], [1, -1]], dtype=complex), 1)


def _x_slot_tensor(n_in: int, n_out: int, turns: Fraction) -> np.ndarray:
    t = _z_slot_tensor(n_in, n_out, turns)
    for axis in range(t.ndim):
        t = np.tensordot(t, _H_SLOT, axes=([axis], [0]))
        t = np.moveaxis(t, -1, axis)
    return t


def interpret(d: Diagram, max_qubits: int = 8) -> CPMap:
    """Completely positive map of a concrete diagram."""
    if not d.is_concrete():
        raise OracleError("interpret needs a concrete diagram; instantiate first")
    d.validate()
    counter = itertools.count()
    port_slots: Dict[tuple, List[int]] = {}

    def fresh(k: int) -> List[int]:
        return [next(counter) for _ in range(k)]

    for e in d.edges:
        k = nat_eval(e.mult, {})
        slots = fresh(k)
        port_slots[("out",) + tuple(e.src)] = slots
        port_slots[("in",) + tuple(e.dst)] = slots
    in_slots: List[int] = []
    out_slots: List[int] = []
    for nid, p in d.inputs:
        w = nat_eval(node_ports(d.nodes[nid])[0][p], {})
        slots = fresh(w)
        port_slots[("in", nid, p)] = slots
        in_slots.extend(slots)
    for nid, p in d.outputs:
        w = nat_eval(node_ports(d.nodes[nid])[1][p], {})
        slots = fresh(w)
        port_slots[("out", nid, p)] = slots
        out_slots.extend(slots)

    if len(in_slots) + len(out_slots) > max_qubits:
        raise QubitLimitError(
            f"{len(in_slots)}+{len(out_slots)} boundary qubits exceed the "
            f"cap of {max_qubits}")

    uf = _UnionFind()
    tensors: List[Tuple[np.ndarray, List[int]]] = []

    for nid in sorted(d.nodes):
        node = d.nodes[nid]

        def ins(i):
            return port_slots[("in", nid, i)]

        def outs(i):
            return port_slots[("out", nid, i)]

        if isinstance(node, Wire):
            for a, b in zip(ins(0), outs(0)):
                uf.union(a, b)
        elif isinstance(node, Perm):
            dest = node.spec.dest if isinstance(node.spec, ExplicitPerm) else None
            if dest is None:
                raise OracleError("symbolic permutation in a concrete diagram")
            src = ins(0)
            dst = outs(0)
            for i, slot in enumerate(src):
                uf.union(slot, dst[dest[i]])
        elif isinstance(node, SwapNode):
            for a, b in zip(ins(0), outs(1)):
                uf.union(a, b)
            for a, b in zip(ins(1), outs(0)):
                uf.union(a, b)
        elif isinstance(node, SplitGather):
            if node.flipped:
                whole = ins(0)
                parts = [outs(i) for i in range(len(node.parts))]
            else:
                whole = outs(0)
                parts = [ins(i) for i in range(len(node.parts))]
            flat = [s for part in parts for s in part]
            for a, b in zip(whole, flat):
                uf.union(a, b)
        elif isinstance(node, Cup):
            for a, b in zip(outs(0), outs(1)):
                uf.union(a, b)
        elif isinstance(node, Cap):
            for a, b in zip(ins(0), ins(1)):
                uf.union(a, b)
        elif isinstance(node, (ZSpider, XSpider)):
            k = nat_eval(node.mult, {})
            phases = eval_phase_vec(node.phases, {})
            mk = _z_slot_tensor if isinstance(node, ZSpider) else _x_slot_tensor
            for j in range(k):
                legs = [ins(i)[j] for i in range(node.n_in)] + \
                    [outs(i)[j] for i in range(node.n_out)]
                tensors.append((np.asarray(mk(node.n_in, node.n_out,
                                              phases[j])), legs))
        elif isinstance(node, Hadamard):
            k = nat_eval(node.mult, {})
            for j in range(k):
                tensors.append((_H_SLOT, [ins(0)[j], outs(0)[j]]))
        elif isinstance(node, Ground):
            k = nat_eval(node.mult, {})
            for j in range(k):
                tensors.append((GROUND_1, [ins(0)[j]]))
        elif isinstance(node, FamilyBox):
            raise OracleError("family boxes must be instantiated away")
        else:
            raise OracleError(f"unknown node {node!r}")

    boundary = [uf.find(s) for s in out_slots + in_slots]
    mat = _contract(tensors, boundary, uf, max_qubits)
    q_out, q_in = len(out_slots), len(in_slots)
    return CPMap(q_in, q_out, mat.reshape(4 ** q_out, 4 ** q_in))


def _contract(tensors, boundary_reps, uf: _UnionFind, max_qubits: int) -> np.ndarray:
    work = [(np.asarray(t, dtype=complex), [uf.find(l) for l in legs])
            for t, legs in tensors]
    boundary = set(boundary_reps)

    def dedup(t, legs):
        # collapse repeated representatives: diagonal if boundary, trace if not
        while True:
            seen: Dict[int, int] = {}
            dup = None
            for i, l in enumerate(legs):
                if l in seen:
                    dup = (seen[l], i, l)
                    break
                seen[l] = i
            if dup is None:
                return t, legs
            i, j, rep = dup
            t = np.moveaxis(t, (i, j), (0, 1))
            if rep in boundary:
                t = np.einsum("aa...->a...", t)
                legs = [rep] + [l for k2, l in enumerate(legs) if k2 not in (i, j)]
            else:
                t = np.einsum("aa...->...", t)
                legs = [l for k2, l in enumerate(legs) if k2 not in (i, j)]

    work = [dedup(t, legs) for t, legs in work]

    scalar = complex(1.0)
    # all reps that appear on some tensor
    while True:
        occ: Dict[int, List[int]] = {}
        for idx, (_, legs) in enumerate(work):
            for l in legs:
                occ.setdefault(l, []).append(idx)
        best = None
        for rep, holders in occ.items():
            if rep in boundary or len(holders) != 2:
                continue
            i, j = holders
            if i == j:
                continue
            cost = work[i][0].ndim + work[j][0].ndim
            if best is None or cost < best[0]:
                best = (cost, i, j)
        if best is None:
            break
        _, i, j = best
        ti, li = work[i]
        tj, lj = work[j]
        shared = [r for r in set(li) & set(lj) if r not in boundary]
        ax_i = [li.index(r) for r in shared]
        ax_j = [lj.index(r) for r in shared]
        merged = np.tensordot(ti, tj, axes=(ax_i, ax_j))
        legs = [l for k2, l in enumerate(li) if k2 not in ax_i] + \
            [l for k2, l in enumerate(lj) if k2 not in ax_j]
        if merged.ndim > 2 * max_qubits + 6:
            raise QubitLimitError("intermediate tensor exceeds the qubit cap")
        merged, legs = dedup(merged, legs)
        rest = [w for k2, w in enumerate(work) if k2 not in (i, j)]
        work = rest + [(merged, legs)]

    # outer-product the remaining tensors
    total = np.array(scalar)
    legs: List[int] = []
    for t, ls in work:
        total = np.multiply.outer(total, t)
        legs = legs + ls
    total = np.asarray(total, dtype=complex)
    if total.ndim != len(legs):
        total = total.reshape([4] * len(legs))

    # closed wiring loops contribute a factor of 4 each
    tensor_reps = set(legs)
    all_reps = {uf.find(s) for s in uf.parent} | tensor_reps | set(boundary_reps)
    for rep in all_reps:
        if rep not in tensor_reps and rep not in boundary and \
                uf.find(rep) == rep:
            total = total * 4.0

    # Expand to one axis per boundary slot, in slot order. Axes for pending
    # tensor legs stay at the front; each processed slot appends one axis at
    # the end, so placed axes already sit in slot order.
    front = list(legs)
    placed: Dict[int, int] = {}  # rep -> index among placed axes
    eye = np.eye(4)
    n_placed = 0
    for rep in boundary_reps:
        if rep in placed:
            p = len(front) + placed[rep]
            total = np.moveaxis(total, p, -1)
            total = np.einsum("...a,ab->...ab", total, eye)
            total = np.moveaxis(total, -2, p)
        elif rep in front:
            axis = front.index(rep)
            total = np.moveaxis(total, axis, -1)
            front.pop(axis)
            placed[rep] = n_placed
        else:
            total = np.multiply.outer(total, np.ones(4))
            placed[rep] = n_placed
        n_placed += 1
    if front:
        raise OracleError(f"internal: dangling contraction axes {front}")
    return total


# ---------------------------------------------------------------------------
# Circuits and extraction


@dataclass(frozen=True)
class Instruction:
    kind: str                 # alloc | gate | decohere | discard
    wires: Tuple[int, ...]
    name: str = ""
    turns: Optional[Fraction] = None
    bit: int = 0


@dataclass
class Circuit:
    """Wire-level gate list produced by running the reducer with tokens."""

    n_inputs: int
    instructions: List[Instruction]
    outputs: List[int]
    n_wires: int

    def __post_init__(self):
        for ins in self.instructions:
            for w in ins.wires:
                if not (0 <= w < self.n_wires):
                    raise ValueError(f"wire {w} out of range")


def simulate_circuit(c: Circuit, table: GateTable = DEFAULT_GATES,
                     max_qubits: int = 8) -> CPMap:
    """Left-to-right superoperator composition of the instruction list."""
    if c.n_inputs + len(c.outputs) > max_qubits:
        raise QubitLimitError("circuit exceeds the qubit cap")
    labels: List[tuple] = [("w", i) for i in range(c.n_inputs)] + \
        [("in", i) for i in range(c.n_inputs)]
    t = np.eye(4 ** c.n_inputs, dtype=complex).reshape([4] * (2 * c.n_inputs)) \
        if c.n_inputs else np.array(1.0 + 0j)

    def wire_axis(w):
        return labels.index(("w", w))

    def apply_op(op: np.ndarray, wires):
        nonlocal t, labels
        k = len(wires)
        opt = op.reshape([4] * (2 * k))
        axes = [wire_axis(w) for w in wires]
        t = np.tensordot(opt, t, axes=(list(range(k, 2 * k)), axes))
        new_labels = [("w", w) for w in wires] + \
            [l for i, l in enumerate(labels) if i not in axes]
        labels = new_labels

    for ins in c.instructions:
        if ins.kind == "alloc":
            v = np.zeros(4, dtype=complex)
            v[0 if ins.bit == 0 else 3] = 1.0
            t = np.multiply.outer(v, t)
            labels = [("w", ins.wires[0])] + labels
        elif ins.kind == "gate":
            u = table.unitary(ins.name, ins.turns)
            apply_op(unitary_to_superop(u, len(ins.wires)), ins.wires)
        elif ins.kind == "decohere":
            apply_op(DECOHERE_1, ins.wires)
        elif ins.kind == "discard":
            axis = wire_axis(ins.wires[0])
            t = np.tensordot(t, GROUND_1, axes=([axis], [0]))
            labels = [l for i, l in enumerate(labels) if i != axis]
        else:
            raise OracleError(f"unknown instruction {ins.kind!r}")

    order = [("w", w) for w in c.outputs] + [("in", i) for i in range(c.n_inputs)]
    if sorted(map(tuple, labels)) != sorted(map(tuple, order)):
        raise OracleError("circuit discards or duplicates wires inconsistently")
    perm = [labels.index(l) for l in order]
    t = np.transpose(t, perm) if t.ndim else t
    return CPMap(c.n_inputs, len(c.outputs),
                 t.reshape(4 ** len(c.outputs), 4 ** c.n_inputs))


# -- extraction ---------------------------------------------------------------


class _Extractor:
    def __init__(self, table: GateTable):
        self.table = table
        self.instructions: List[Instruction] = []
        self.n_wires = 0

    def fresh_wire(self) -> int:
        w = self.n_wires
        self.n_wires += 1
        return w

    def build_arg(self, t: TypeExpr) -> Tuple[Term, List[int]]:
        if isinstance(t, (TQubit, TBit)):
            w = self.fresh_wire()
            return Token(w), [w]
        if isinstance(t, TUnit):
            return Star(), []
        if isinstance(t, TTensor):
            l, wl = self.build_arg(t.left)
            r, wr = self.build_arg(t.right)
            return Tensor(l, r), wl + wr
        if isinstance(t, TVec):
            size = nat_eval(t.size, {})
            items = [self.build_arg(t.elem) for _ in range(size)]
            from .lambda_core import VNilT

            term: Term = VNilT(t.elem)
            wires: List[int] = []
            for item, ws in reversed(items):
                term = Cons(item, term)
            for item, ws in items:
                wires.extend(ws)
            return term, wires
        raise OracleError(f"cannot build a register argument of type {t!r}")

    def flatten_value(self, v: Term, t: TypeExpr) -> List[int]:
        if isinstance(t, (TQubit, TBit)):
            if not isinstance(v, Token):
                raise OracleError(f"stuck non-token result: {v!r}")
            return [v.index]
        if isinstance(t, TUnit):
            if not isinstance(v, Star):
                raise OracleError(f"stuck non-unit result: {v!r}")
            return []
        if isinstance(t, TTensor):
            if not isinstance(v, Tensor):
                raise OracleError(f"stuck non-pair result: {v!r}")
            return self.flatten_value(v.left, t.left) + \
                self.flatten_value(v.right, t.right)
        if isinstance(t, TVec):
            size = nat_eval(t.size, {})
            out: List[int] = []
            cur = v
            for _ in range(size):
                if not isinstance(cur, Cons):
                    raise OracleError(f"stuck vector result: {v!r}")
                out.extend(self.flatten_value(cur.head, t.elem))
                cur = cur.tail
            return out
        raise OracleError(f"result type {t!r} is not first-order")

    def extract_once(self, m: Term) -> Optional[Term]:
        res = self._match(m)
        if res is not None:
            return res
        if isinstance(m, (Token,)):
            return None
        fields = getattr(m, "__dataclass_fields__", None)
        if fields is None:
            return None
        for f in fields:
            v = getattr(m, f)
            if isinstance(v, Term):
                r = self.extract_once(v)
                if r is not None:
                    kids = {k: getattr(m, k) for k in fields}
                    kids[f] = r
                    return type(m)(**kids)
        return None

    def _match(self, m: Term) -> Optional[Term]:
        if isinstance(m, App):
            fn, arg = m.fn, m.arg
            if isinstance(fn, Meas) and isinstance(arg, Token):
                self.instructions.append(Instruction("decohere", (arg.index,)))
                return arg
            if isinstance(fn, New):
                if isinstance(arg, Lit) and arg.value in (0, 1):
                    w = self.fresh_wire()
                    self.instructions.append(Instruction("alloc", (w,),
                                                         bit=arg.value))
                    self.instructions.append(Instruction("decohere", (w,)))
                    return Token(w)
                if isinstance(arg, Token):
                    self.instructions.append(Instruction("decohere",
                                                         (arg.index,)))
                    return arg
            if isinstance(fn, Unitary) and fn.name == "H" and isinstance(arg, Token):
                self.instructions.append(Instruction("gate", (arg.index,),
                                                     name="H"))
                return arg
            if isinstance(fn, App) and isinstance(fn.fn, Unitary) \
                    and fn.fn.name == "CNOT" and isinstance(fn.arg, Token) \
                    and isinstance(arg, Token):
                self.instructions.append(
                    Instruction("gate", (fn.arg.index, arg.index), name="CNOT"))
                return Tensor(fn.arg, arg)
            if isinstance(fn, PApp) and isinstance(fn.fn, Rotation) \
                    and isinstance(fn.arg, Lit) and isinstance(arg, Token):
                name = fn.fn.name
                turns = self.table.rotation_turns(name, fn.arg.value)
                self.instructions.append(Instruction("gate", (arg.index,),
                                                     name=name, turns=turns))
                return arg
        return None


def circuit_extract(m: Term, params: Optional[dict] = None,
                    table: GateTable = DEFAULT_GATES,
                    fuel: int = 10 ** 6) -> Circuit:
    """Run the program on fresh wire tokens, recording gate applications.

    The term must be closed and translatable; leading parameter arrows are
    applied from ``params`` and linear arrows receive registers of fresh
    tokens. The resulting circuit defines the reference semantics.
    """
    params = dict(params or {})
    deriv = typecheck_full((), (), m)
    t = deriv.type
    if classify(t) != "translatable":
        raise OracleError("only translatable programs have circuits")
    term = m
    while isinstance(t, TArrow):
        var = t.var
        if var not in params:
            raise OracleError(f"missing parameter {var!r}")
        value = int(params[var])
        term = PApp(term, Lit(value))
        t = type_subst(t.body, var, NConst(value))
    ex = _Extractor(table)
    input_wires: List[int] = []
    while isinstance(t, TLolli):
        arg, wires = ex.build_arg(t.arg)
        term = App(term, arg)
        input_wires.extend(wires)
        t = t.res
    term = expand_macros(term)
    for _ in range(fuel):
        nxt = step(term)
        if nxt is None:
            nxt = ex.extract_once(term)
        if nxt is None:
            break
        term = nxt
    else:
        raise OracleError("extraction did not terminate within the fuel bound")
    outputs = ex.flatten_value(term, t)
    return Circuit(len(input_wires), ex.instructions, outputs, ex.n_wires)
