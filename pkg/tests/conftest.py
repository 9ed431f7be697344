import random
from fractions import Fraction
from pathlib import Path

import pytest

from szxc.lambda_core import (
    Arith, Cons, For, Ifz, Lit, NConst, PApp, PLam, Prim, Reverse, TNat,
    Var, VNilT,
)
from szxc.parser import parse_program, parse_term
from szxc.reducer import expand_macros, make_binders_distinct
from szxc.szx_ir import (
    Cap, Cup, Diagram, Ground, Hadamard, PExplicit, PRational, Perm,
    ExplicitPerm, SplitGather, Wire, XSpider, ZSpider, instantiate, simplify,
)
from szxc.translator import translate, uncurry_value
from szxc.typechecker import inline_definition, typecheck_full

CORPUS = Path(__file__).resolve().parent.parent / "corpus"


@pytest.fixture(scope="session")
def qft_program():
    return parse_program((CORPUS / "qft.ld").read_text())


@pytest.fixture(scope="session")
def qft_term(qft_program):
    return make_binders_distinct(expand_macros(inline_definition(qft_program)))


def prepare(src: str):
    """Parse, expand and alpha-clean a single source term."""
    return make_binders_distinct(expand_macros(parse_term(src)))


def compiled_map(term, params, max_qubits=8, table=None):
    """Translate, uncurry, instantiate, simplify and interpret a judgement."""
    from szxc.oracle import interpret
    from szxc.translator import DEFAULT_GATES

    table = table or DEFAULT_GATES
    deriv = typecheck_full((), (), term)
    fam = translate((), (), term, table=table)
    unbent, _ = uncurry_value(fam, deriv.type)
    conc = instantiate(unbent, params)
    return interpret(simplify(conc), max_qubits)


def verify_residual(term, params, max_qubits=8, table=None):
    from szxc.oracle import circuit_extract, cpm_residual, simulate_circuit
    from szxc.translator import DEFAULT_GATES

    table = table or DEFAULT_GATES
    compiled = compiled_map(term, params, max_qubits, table)
    circ = circuit_extract(term, params, table)
    ref = simulate_circuit(circ, table, max_qubits)
    return cpm_residual(compiled, ref)


# ---------------------------------------------------------------------------
# Random generators (deterministic per seed)


def gen_nat_term(rng: random.Random, vars, depth):
    if depth <= 0 or rng.random() < 0.3:
        if vars and rng.random() < 0.5:
            return Var(rng.choice(vars))
        return Lit(rng.randint(0, 6))
    pick = rng.random()
    if pick < 0.45:
        op = rng.choice("+-*")
        return Arith(op, gen_nat_term(rng, vars, depth - 1),
                     gen_nat_term(rng, vars, depth - 1))
    if pick < 0.6:
        return Ifz(gen_nat_term(rng, vars, depth - 1),
                   gen_nat_term(rng, vars, depth - 1),
                   gen_nat_term(rng, vars, depth - 1))
    if pick < 0.75:
        base = Lit(rng.randint(0, 2))
        return Arith("^", base, gen_nat_term(rng, vars, depth - 1))
    x = f"v{rng.randint(0, 999)}"
    while x in vars:
        x = f"v{rng.randint(0, 999)}"
    body = gen_nat_term(rng, list(vars) + [x], depth - 1)
    return PApp(PLam(x, TNat(), body), gen_nat_term(rng, vars, depth - 1))


def gen_natvec_term(rng: random.Random, vars, depth):
    if depth <= 0 or rng.random() < 0.3:
        if rng.random() < 0.4:
            return VNilT(TNat())
        lo = rng.randint(0, 3)
        return PApp(PApp(Prim("range"), Lit(lo)), Lit(lo + rng.randint(0, 4)))
    pick = rng.random()
    if pick < 0.35:
        return Cons(gen_nat_term(rng, vars, depth - 1),
                    gen_natvec_term(rng, vars, depth - 1))
    if pick < 0.6:
        k = f"k{rng.randint(0, 999)}"
        while k in vars:
            k = f"k{rng.randint(0, 999)}"
        body = gen_nat_term(rng, list(vars) + [k], depth - 1)
        return For(k, gen_natvec_term(rng, vars, depth - 1), body)
    if pick < 0.8:
        return Reverse(gen_natvec_term(rng, vars, depth - 1))
    lo = gen_nat_term(rng, vars, depth - 1)
    hi = gen_nat_term(rng, vars, depth - 1)
    return PApp(PApp(Prim("range"), lo), hi)


def gen_eval_term(rng: random.Random, vars=("n", "m"), depth=4):
    if rng.random() < 0.5:
        return gen_nat_term(rng, list(vars), depth)
    return gen_natvec_term(rng, list(vars), depth)


def random_concrete_diagram(rng: random.Random, max_width=5, steps=7) -> Diagram:
    """A random well-formed concrete diagram with at most max_width qubits
    on each boundary side."""
    d = Diagram()
    n_wires = rng.randint(1, 2)
    open_ports = []  # (port, width)
    in_total = 0
    for _ in range(n_wires):
        w = rng.choice([0, 1, 1, 1, 2])
        node = d.add(Wire(NConst(w)))
        d.add_input((node, 0))
        open_ports.append(((node, 0), w))
        in_total += w

    def total():
        return sum(w for _, w in open_ports)

    for _ in range(steps):
        op = rng.choice(["spider", "spider", "h", "gather", "split", "cup",
                         "cap", "ground", "perm"])
        if op == "spider" and open_ports:
            i = rng.randrange(len(open_ports))
            (port, w) = open_ports.pop(i)
            n_out = rng.randint(1, 2)
            phases = PExplicit(tuple(
                PRational(Fraction(rng.randint(0, 7), 8)) for _ in range(w)))
            cls = ZSpider if rng.random() < 0.5 else XSpider
            if total() + w * n_out > 2 * max_width:
                n_out = 1
            node = d.add(cls(1, n_out, NConst(w), phases))
            d.connect(port, (node, 0), w)
            for j in range(n_out):
                open_ports.append(((node, j), w))
        elif op == "h" and open_ports:
            i = rng.randrange(len(open_ports))
            (port, w) = open_ports.pop(i)
            node = d.add(Hadamard(NConst(w)))
            d.connect(port, (node, 0), w)
            open_ports.append(((node, 0), w))
        elif op == "gather" and len(open_ports) >= 2:
            (p1, w1) = open_ports.pop(rng.randrange(len(open_ports)))
            (p2, w2) = open_ports.pop(rng.randrange(len(open_ports)))
            node = d.add(SplitGather((NConst(w1), NConst(w2))))
            d.connect(p1, (node, 0), w1)
            d.connect(p2, (node, 1), w2)
            open_ports.append(((node, 0), w1 + w2))
        elif op == "split" and open_ports:
            i = rng.randrange(len(open_ports))
            (port, w) = open_ports.pop(i)
            cut = rng.randint(0, w)
            node = d.add(SplitGather((NConst(cut), NConst(w - cut)),
                                     flipped=True))
            d.connect(port, (node, 0), w)
            open_ports.append(((node, 0), cut))
            open_ports.append(((node, 1), w - cut))
        elif op == "cup" and total() + 2 <= 2 * max_width:
            w = 1
            node = d.add(Cup(NConst(w)))
            open_ports.append(((node, 0), w))
            open_ports.append(((node, 1), w))
        elif op == "cap":
            same = {}
            for idx, (_, w) in enumerate(open_ports):
                same.setdefault(w, []).append(idx)
            pairs = [v for v in same.values() if len(v) >= 2]
            if pairs:
                a, b = rng.choice(pairs)[:2]
                (p1, w) = open_ports[a]
                (p2, _) = open_ports[b]
                for idx in sorted((a, b), reverse=True):
                    open_ports.pop(idx)
                node = d.add(Cap(NConst(w)))
                d.connect(p1, (node, 0), w)
                d.connect(p2, (node, 1), w)
        elif op == "ground" and open_ports:
            i = rng.randrange(len(open_ports))
            (port, w) = open_ports.pop(i)
            node = d.add(Ground(NConst(w)))
            d.connect(port, (node, 0), w)
        elif op == "perm" and open_ports:
            i = rng.randrange(len(open_ports))
            (port, w) = open_ports.pop(i)
            dest = list(range(w))
            rng.shuffle(dest)
            node = d.add(Perm(NConst(w), ExplicitPerm(tuple(dest))))
            d.connect(port, (node, 0), w)
            open_ports.append(((node, 0), w))
    while open_ports and in_total + total() > max_width + 3:
        (port, w) = max(open_ports, key=lambda pw: pw[1])
        open_ports.remove((port, w))
        node = d.add(Ground(NConst(w)))
        d.connect(port, (node, 0), w)
    for port, _ in open_ports:
        d.add_output(port)
    d.validate()
    return d
