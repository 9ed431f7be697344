import itertools
import random
from fractions import Fraction

import numpy as np
import pytest

from szxc.lambda_core import NConst
from szxc.oracle import (
    CPMap, Circuit, Instruction, OracleError, QubitLimitError, circuit_extract,
    cpm_compose, cpm_equal_mod_scalar, cpm_identity, cpm_residual, cpm_tensor,
    hadamard_channel, interpret, simulate_circuit, unitary_to_superop,
)
from szxc.szx_ir import (
    Cap, Cup, Diagram, ExplicitPerm, Ground, Hadamard, PExplicit, PRational,
    Perm, SplitGather, SwapNode, Wire, XSpider, ZSpider, compose, gather,
    identity_diagram, instantiate, tensor, zero_phases,
)
from szxc.translator import DEFAULT_GATES, gate_diagram

from conftest import prepare, random_concrete_diagram


def one_node(node, n_in, n_out):
    d = Diagram()
    nid = d.add(node)
    for i in range(n_in):
        d.add_input((nid, i))
    for i in range(n_out):
        d.add_output((nid, i))
    return d


def test_trivial_z_spider_is_identity():
    d = one_node(ZSpider(1, 1, NConst(1), zero_phases(NConst(1))), 1, 1)
    assert cpm_equal_mod_scalar(interpret(d), cpm_identity(1), 1e-12)


def test_hadamard_formula():
    d = one_node(Hadamard(NConst(1)), 1, 1)
    v = np.array([[1, 1], [1, -1]], dtype=complex)
    expected = CPMap(1, 1, unitary_to_superop(v, 1))
    assert np.allclose(interpret(d).mat, expected.mat)


def test_ground_is_trace():
    d = one_node(Ground(NConst(1)), 1, 0)
    cpm = interpret(d)
    assert np.allclose(cpm.mat, np.array([[1, 0, 0, 1]], dtype=complex))


def test_z_spider_phase_formula():
    alpha = Fraction(1, 3)
    d = one_node(ZSpider(1, 1, NConst(1), PExplicit((PRational(alpha),))), 1, 1)
    v = np.diag([1.0, np.exp(2j * np.pi * float(alpha))])
    assert np.allclose(interpret(d).mat, unitary_to_superop(v, 1))


def test_x_spider_is_hadamard_conjugated_z():
    # checked numerically for small arities and multiplicities
    for n, m, k in itertools.product((0, 1, 2), (0, 1, 2), (1, 2)):
        if n + m == 0:
            continue
        phases = PExplicit(tuple(PRational(Fraction(j, 4)) for j in range(k)))
        x = one_node(XSpider(n, m, NConst(k), phases), n, m)
        z = Diagram()
        zs = z.add(ZSpider(n, m, NConst(k), phases))
        hs_in = [z.add(Hadamard(NConst(k))) for _ in range(n)]
        hs_out = [z.add(Hadamard(NConst(k))) for _ in range(m)]
        for i, h in enumerate(hs_in):
            z.connect((h, 0), (zs, i), k)
            z.add_input((h, 0))
        for i, h in enumerate(hs_out):
            z.connect((zs, i), (h, 0), k)
            z.add_output((h, 0))
        assert cpm_equal_mod_scalar(interpret(x), interpret(z), 1e-9), (n, m, k)


def test_snake_identities():
    # bending a wire through a cup or cap gives the identity
    for first in (True, False):
        d = Diagram()
        cup = d.add(Cup(NConst(2)))
        cap = d.add(Cap(NConst(2)))
        w = d.add(Wire(NConst(2)))
        if first:
            d.connect((w, 0), (cap, 0), 2)
            d.connect((cup, 0), (cap, 1), 2)
            d.add_input((w, 0))
            d.add_output((cup, 1))
        else:
            d.connect((w, 0), (cap, 1), 2)
            d.connect((cup, 1), (cap, 0), 2)
            d.add_input((w, 0))
            d.add_output((cup, 0))
        assert cpm_equal_mod_scalar(interpret(d), cpm_identity(2), 1e-12)


def test_swap_semantics():
    d = one_node(SwapNode(NConst(1), NConst(1)), 2, 2)
    swap_u = np.eye(4)[[0, 2, 1, 3]]
    assert np.allclose(interpret(d).mat, unitary_to_superop(swap_u, 2))


def test_permutation_arrow_equals_wire_reordering():
    dest = (2, 0, 1)
    d = one_node(Perm(NConst(3), ExplicitPerm(dest)), 1, 1)
    u = np.zeros((8, 8))
    for x in range(8):
        bits = [(x >> (2 - i)) & 1 for i in range(3)]
        out = [0] * 3
        for i, b in enumerate(bits):
            out[dest[i]] = b
        y = (out[0] << 2) | (out[1] << 1) | out[2]
        u[y, x] = 1
    assert np.allclose(interpret(d).mat, unitary_to_superop(u, 3))


def test_identity_arrow_equals_plain_wire():
    d = one_node(Perm(NConst(2), ExplicitPerm((0, 1))), 1, 1)
    assert cpm_equal_mod_scalar(interpret(d), interpret(identity_diagram(2)),
                                1e-12)


def test_gather_is_identity_on_registers():
    d = Diagram()
    g = d.add(gather(1, 2))
    d.add_input((g, 0))
    d.add_input((g, 1))
    d.add_output((g, 0))
    assert cpm_equal_mod_scalar(interpret(d), cpm_identity(3), 1e-12)


def test_functoriality_random():
    rng = random.Random(5)
    pieces = [instantiate(gate_diagram("Rz", NConst(3)), {}),
              instantiate(gate_diagram("H"), {}),
              one_node(ZSpider(1, 1, NConst(1),
                               PExplicit((PRational(Fraction(1, 8)),))), 1, 1)]
    for _ in range(10):
        d1, d2 = rng.choice(pieces), rng.choice(pieces)
        assert np.allclose(interpret(tensor(d1, d2)).mat,
                           cpm_tensor(interpret(d1), interpret(d2)).mat)
        assert np.allclose(interpret(compose(d1, d2)).mat,
                           cpm_compose(interpret(d2), interpret(d1)).mat)


def test_decoherence_composition():
    d = Diagram()
    z = d.add(ZSpider(1, 2, NConst(1), zero_phases(NConst(1))))
    g = d.add(Ground(NConst(1)))
    d.connect((z, 1), (g, 0), 1)
    d.add_input((z, 0))
    d.add_output((z, 0))
    expected = CPMap(1, 1, np.diag([1, 0, 0, 1]).astype(complex))
    assert cpm_equal_mod_scalar(interpret(d), expected, 1e-12)


def test_qubit_limit():
    with pytest.raises(QubitLimitError):
        interpret(identity_diagram(5), max_qubits=8)
    interpret(identity_diagram(4), max_qubits=8)


# -- circuits -------------------------------------------------------------------


def test_empty_circuit_identity():
    c = Circuit(1, [], [0], 1)
    assert np.allclose(simulate_circuit(c).mat, np.eye(4))


def test_double_hadamard_identity():
    c = Circuit(1, [Instruction("gate", (0,), name="H"),
                    Instruction("gate", (0,), name="H")], [0], 1)
    assert cpm_equal_mod_scalar(simulate_circuit(c), cpm_identity(1), 1e-12)


def test_decohere_instruction():
    c = Circuit(1, [Instruction("decohere", (0,))], [0], 1)
    assert np.allclose(simulate_circuit(c).mat, np.diag([1, 0, 0, 1]))


def test_discard_instruction():
    c = Circuit(1, [Instruction("discard", (0,))], [], 1)
    assert np.allclose(simulate_circuit(c).mat, np.array([[1, 0, 0, 1]]))


def test_alloc_reorders_outputs():
    c = Circuit(1, [Instruction("alloc", (1,), bit=1)], [1, 0], 2)
    cpm = simulate_circuit(c)
    assert cpm.q_in == 1 and cpm.q_out == 2


def test_extract_crot():
    crot = prepare(
        r"\'n. \qs:(Q * Q). let c:Q (*) q:Q = qs in "
        r"let c2:Q (*) q2:Q = CNOT c (Rz @(2^n) q) in "
        r"CNOT c2 (RzInv @(2^n) q2)")
    circ = circuit_extract(crot, {"n": 2})
    got = [(i.name, i.wires, i.turns) for i in circ.instructions]
    assert got == [("Rz", (1,), Fraction(1, 4)),
                   ("CNOT", (0, 1), None),
                   ("RzInv", (1,), Fraction(-1, 4)),
                   ("CNOT", (0, 1), None)]


def test_extract_qft_one_is_hadamard(qft_term):
    circ = circuit_extract(qft_term, {"n": 1})
    assert [(i.kind, i.name) for i in circ.instructions] == [("gate", "H")]
    assert circ.outputs == [0]


def test_extract_new_zero():
    circ = circuit_extract(prepare("new 0"), {})
    assert [i.kind for i in circ.instructions] == ["alloc", "decohere"]


def test_extract_higher_order_rejected():
    with pytest.raises(OracleError):
        circuit_extract(prepare(r"\x:Q. \y:(Q -o Q). y x"), {})


# -- comparison ------------------------------------------------------------------


def test_equal_mod_scalar_positive_scaling():
    a = cpm_identity(1)
    b = CPMap(1, 1, 3 * np.eye(4, dtype=complex))
    assert cpm_equal_mod_scalar(a, b, 1e-12)


def test_identity_differs_from_hadamard():
    assert not cpm_equal_mod_scalar(cpm_identity(1), hadamard_channel(), 1e-9)


def test_zero_map_compares_only_to_zero():
    z = CPMap(1, 1, np.zeros((4, 4), dtype=complex))
    assert cpm_equal_mod_scalar(z, z, 1e-12)
    assert not cpm_equal_mod_scalar(z, cpm_identity(1), 1e-12)


def test_dimension_mismatch_raises():
    with pytest.raises(ValueError):
        cpm_equal_mod_scalar(cpm_identity(1), cpm_identity(2))
