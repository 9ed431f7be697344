import numpy as np
import pytest

from szxc.lambda_core import (
    NBin, NConst, NVar, TBit, TLolli, TNat, TQubit, TTensor, TUnit, TVec,
)
from szxc.oracle import (
    CPMap, cpm_equal_mod_scalar, cpm_identity, cpm_residual, interpret,
    unitary_to_superop,
)
from szxc.szx_ir import Hadamard, instantiate, node_count, simplify
from szxc.translator import (
    DEFAULT_GATES, GateTable, TranslationError, gate_diagram, translate,
    translate_primitive, type_width, uncurry_value,
)
from szxc.typechecker import nats_equal, typecheck_full

from conftest import compiled_map, prepare, verify_residual


def test_type_width_pairs():
    assert type_width(TTensor(TQubit(), TQubit())) == NBin("+", NConst(1),
                                                           NConst(1))


def test_type_width_function_vector():
    n = NVar("n")
    t = TLolli(TVec(TQubit(), n), TVec(TQubit(), n))
    assert nats_equal(type_width(t), NBin("*", NConst(2), n))


def test_type_width_unit():
    assert type_width(TUnit()) == NConst(0)


def test_type_width_rejects_parameter_types():
    with pytest.raises(TranslationError):
        type_width(TNat())


def test_gate_diagram_h_is_single_node():
    d = gate_diagram("H")
    assert [type(n) for n in d.nodes.values()] == [Hadamard]
    assert len(d.inputs) == len(d.outputs) == 1


def test_gate_diagram_rz_full_turn_is_identity():
    d = instantiate(gate_diagram("Rz", NConst(1)), {})
    assert cpm_equal_mod_scalar(interpret(d), cpm_identity(1), 1e-12)


def test_gate_diagram_cnot_matches_permutation_superop():
    d = instantiate(gate_diagram("CNOT"), {})
    expected = CPMap(2, 2, unitary_to_superop(DEFAULT_GATES.unitary("CNOT"), 2))
    assert cpm_equal_mod_scalar(interpret(d), expected, 1e-9)


def test_meas_is_decoherence():
    cpm = compiled_map(prepare(r"\x:Q. meas x"), {})
    expected = CPMap(1, 1, np.diag([1, 0, 0, 1]).astype(complex))
    assert cpm_equal_mod_scalar(cpm, expected, 1e-12)


def test_new_same_translation_as_meas():
    a = compiled_map(prepare(r"\x:Q. meas x"), {})
    b = compiled_map(prepare(r"\x:B. new x"), {})
    assert cpm_equal_mod_scalar(a, b, 1e-12)


def test_variable_is_identity_wire():
    cpm = compiled_map(prepare(r"\x:Q. x"), {})
    assert cpm_equal_mod_scalar(cpm, cpm_identity(1), 1e-12)


def test_bits_are_x_states():
    zero = compiled_map(prepare("new 0"), {})
    rho = zero.mat[:, 0].reshape(2, 2)
    rho = rho / np.trace(rho)
    assert np.allclose(rho, np.diag([1, 0]))
    one = compiled_map(prepare("new 1"), {})
    rho1 = one.mat[:, 0].reshape(2, 2)
    assert np.allclose(rho1 / np.trace(rho1), np.diag([0, 1]))


def test_boundary_width_soundness():
    # input widths match the context, output width matches the type
    term = prepare(r"\'n. \xs:(Vec Q n). \q:Q. append[Q] @n @1 xs (q :: VNil[Q])")
    deriv = typecheck_full((), (), term)
    fam = translate((), (), term)
    for n in (0, 1, 2, 5, 8):
        unbent, widths = uncurry_value(fam, deriv.type)
        conc = instantiate(unbent, {"n": n})
        from szxc.lambda_core import nat_eval

        assert [nat_eval(w, {"n": n}) for w in widths] == [n, 1]
        assert sum(nat_eval(w, {}) for w in conc.output_widths()) == n + 1


def test_split_applied_leaves_single_split():
    from szxc.szx_ir import SplitGather

    term = prepare(r"\qs:(Vec Q 3). split[Q] @1 @2 qs")
    assert verify_residual(term, {}) <= 1e-9
    deriv = typecheck_full((), (), term)
    fam = translate((), (), term)
    conc = simplify(instantiate(fam, {}))
    splits = [n for n in conc.nodes.values()
              if isinstance(n, SplitGather) and n.parts]
    assert len(splits) <= 2


def test_drop_is_width_zero():
    fam = translate_primitive("drop", ())
    conc = instantiate(fam, {"n": 4})
    cpm = interpret(simplify(conc))
    assert cpm.q_in == 0 and cpm.q_out == 0


def test_accumap_identity_base_case():
    src = (r"\x:Q. \z:Q. accuMap[Q,Q,Q] @1 (x :: VNil[Q]) "
           r"((\a:Q. \b:Q. a (*) b) :: VNil[(Q -o Q -o (Q * Q))]) z")
    cpm = compiled_map(prepare(src), {})
    assert cpm_equal_mod_scalar(cpm, cpm_identity(2), 1e-9)


def test_ifz_both_branches_live_and_dead():
    term = prepare(r"\'n. \x:Q. ifz n then H x else Rz @2 x")
    for n, gate in ((0, "H"), (1, "Rz"), (5, "Rz")):
        assert verify_residual(term, {"n": n}) <= 1e-9


def test_for_with_open_state_is_rejected():
    term = prepare(r"\x:Q. for k in 0..1 do meas x")
    with pytest.raises(TranslationError, match="state"):
        translate((), (), term)


def test_rotation_convention_knob():
    table = GateTable(rz_convention="pi")
    term = prepare(r"\x:Q. Rz @4 x")
    cpm = compiled_map(term, {}, table=table)
    rz = np.diag([1.0, np.exp(1j * np.pi / 4)])
    expected = CPMap(1, 1, unitary_to_superop(rz, 1))
    assert cpm_equal_mod_scalar(cpm, expected, 1e-9)


def test_convention_independence_end_to_end():
    crot = prepare(
        r"\'n. \qs:(Q * Q). let c:Q (*) q:Q = qs in "
        r"let c2:Q (*) q2:Q = CNOT c (Rz @(2^n) q) in "
        r"CNOT c2 (RzInv @(2^n) q2)")
    for conv in ("2pi", "pi"):
        table = GateTable(rz_convention=conv)
        assert verify_residual(crot, {"n": 3}, table=table) <= 1e-9


def test_translate_rejects_evaluable():
    with pytest.raises(TranslationError):
        translate((), (), prepare(r"\'n. n+1"))
