"""Batch driver: parse -> typecheck -> translate -> instantiate -> verify.

Exit codes: 0 success, 1 user error (bad input, type errors), 2 verification
failure. JSON output is deterministic: stable node ids, sorted keys.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .lambda_core import Term, TypeExpr
from .parser import ParseError, parse_program, pretty_print, pretty_type
from .reducer import ReductionFuelError, expand_macros, make_binders_distinct, \
    normalize
from .szx_ir import Diagram, DiagramError, instantiate, node_count, simplify, \
    to_dot, to_json
from .translator import DEFAULT_GATES, GateTable, TranslationError, translate, \
    uncurry_value
from .typechecker import Derivation, TypeCheckError, check_program, classify, \
    inline_definition, typecheck_full

DEFAULT_MAX_QUBITS = 8


@dataclass
class RunConfig:
    """One CLI invocation."""

    subcommand: str
    path: str
    params: Dict[str, object] = field(default_factory=dict)
    emit: str = "json"
    simplify: bool = True
    max_qubits: int = DEFAULT_MAX_QUBITS
    rz_convention: str = "2pi"
    trace: bool = False
    entry: Optional[str] = None

    @property
    def gate_table(self) -> GateTable:
        return GateTable(rz_convention=self.rz_convention)


class UserError(Exception):
    pass


def _load(config: RunConfig):
    try:
        with open(config.path, encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise UserError(f"cannot read {config.path}: {e}")
    try:
        program = parse_program(text)
    except ParseError as e:
        raise UserError(f"{config.path}:{e.line}:{e.col}: parse: {e.message}")
    return program


def prepare_entry(program, entry: Optional[str] = None) -> Tuple[Term, Derivation]:
    """Inline, expand macros and typecheck the designated entry definition."""
    term = inline_definition(program, entry)
    term = make_binders_distinct(expand_macros(term))
    deriv = typecheck_full((), (), term)
    return term, deriv


def compile_family(program, table: GateTable = DEFAULT_GATES,
                   entry: Optional[str] = None) -> Tuple[Diagram, Derivation]:
    term, deriv = prepare_entry(program, entry)
    fam = translate((), (), term, table=table)
    return fam, deriv


def instantiated_diagram(program, params: dict, table: GateTable,
                         do_simplify: bool = True,
                         entry: Optional[str] = None) -> Diagram:
    fam, _ = compile_family(program, table, entry)
    conc = instantiate(fam, params)
    return simplify(conc) if do_simplify else conc


def verify_program(program, params: dict, table: GateTable = DEFAULT_GATES,
                   max_qubits: int = DEFAULT_MAX_QUBITS,
                   entry: Optional[str] = None):
    """Compare the compiled diagram against circuit extraction.

    Returns (residual, compiled CPMap, reference CPMap).
    """
    from .oracle import circuit_extract, cpm_residual, interpret, \
        simulate_circuit

    term, deriv = prepare_entry(program, entry)
    fam = translate((), (), term, table=table)
    unbent, _ = uncurry_value(fam, deriv.type)
    conc = instantiate(unbent, params)
    simp = simplify(conc)
    compiled = interpret(simp, max_qubits)
    circuit = circuit_extract(term, params, table)
    reference = simulate_circuit(circuit, table, max_qubits)
    return cpm_residual(compiled, reference), compiled, reference


def _cpm_to_json(cpm) -> dict:
    return {
        "q_in": cpm.q_in,
        "q_out": cpm.q_out,
        "matrix": [[[z.real, z.imag] for z in row] for row in cpm.mat.tolist()],
    }


def _emit(diagram: Diagram, emit: str) -> str:
    if emit == "json":
        return to_json(diagram) + "\n"
    if emit == "dot":
        return to_dot(diagram)
    raise UserError(f"unknown emit format {emit!r}")


def run(config: RunConfig, out=sys.stdout) -> int:
    """Execute one subcommand; returns the process exit status."""
    try:
        return _run(config, out)
    except UserError as e:
        print(str(e), file=sys.stderr)
        return 1
    except ParseError as e:
        print(f"{config.path}: parse: {e}", file=sys.stderr)
        return 1
    except TypeCheckError as e:
        print(e.render(config.path), file=sys.stderr)
        return 1
    except (TranslationError, DiagramError, ReductionFuelError) as e:
        stage = type(e).__name__.replace("Error", "").lower()
        print(f"{config.path}: {stage}: {e}", file=sys.stderr)
        return 1


def _run(config: RunConfig, out) -> int:
    from .lambda_core import UnboundParameterError

    program = _load(config)
    table = config.gate_table

    if config.subcommand == "check":
        types = check_program(program)
        for name in types:
            print(f"{name} : {pretty_type(types[name])}", file=out)
        return 0

    if config.subcommand == "eval":
        from .param_eval import eval_param

        term, deriv = prepare_entry(program, config.entry)
        if classify(deriv.type) != "evaluable":
            raise UserError("eval needs an evaluable entry definition")
        term = _apply_params(term, deriv.type, config.params)
        value = eval_param(term, (), {})
        print(json.dumps(_param_value_json(value), sort_keys=True), file=out)
        return 0

    if config.subcommand == "reduce":
        term, _ = prepare_entry(program, config.entry)
        if config.params:
            deriv = typecheck_full((), (), term)
            term = _apply_params(term, deriv.type, config.params)
        trace = (lambda t: print(pretty_print(t), file=out)) if config.trace \
            else None
        result = normalize(term, trace=trace)
        print(pretty_print(result), file=out)
        return 0

    if config.subcommand == "compile":
        fam, _ = compile_family(program, table, config.entry)
        out.write(_emit(fam, config.emit))
        return 0

    if config.subcommand == "instantiate":
        try:
            diagram = instantiated_diagram(program, config.params, table,
                                           config.simplify, config.entry)
        except UnboundParameterError as e:
            raise UserError(str(e))
        out.write(_emit(diagram, config.emit))
        return 0

    if config.subcommand == "simulate":
        from .oracle import QubitLimitError, interpret

        try:
            diagram = instantiated_diagram(program, config.params, table,
                                           config.simplify, config.entry)
            cpm = interpret(diagram, config.max_qubits)
        except (UnboundParameterError, QubitLimitError) as e:
            raise UserError(str(e))
        print(json.dumps(_cpm_to_json(cpm), sort_keys=True), file=out)
        return 0

    if config.subcommand == "verify":
        from .oracle import OracleError

        try:
            residual, _, _ = verify_program(program, config.params, table,
                                            config.max_qubits, config.entry)
        except (UnboundParameterError, OracleError) as e:
            raise UserError(str(e))
        ok = residual <= 1e-9
        print(f"{'PASS' if ok else 'FAIL'} residual={residual:.3e}", file=out)
        return 0 if ok else 2

    raise UserError(f"unknown subcommand {config.subcommand!r}")


def _apply_params(term: Term, t: TypeExpr, params: dict) -> Term:
    from .lambda_core import Cons, Lit, PApp, TArrow, VNilT, TNat

    while isinstance(t, TArrow):
        if t.var not in params:
            raise UserError(f"missing --param {t.var}=...")
        value = params[t.var]
        if isinstance(value, int):
            term = PApp(term, Lit(value))
        else:
            vec: Term = VNilT(TNat())
            for item in reversed(list(value)):
                vec = Cons(Lit(item), vec)
            term = PApp(term, vec)
        t = t.body
    return term


def _param_value_json(value):
    from .param_eval import Closure

    if isinstance(value, int):
        return value
    if isinstance(value, Closure):
        return {"closure": value.var}
    return list(value)


def _parse_param(text: str):
    if "=" not in text:
        raise UserError(f"--param needs name=value, got {text!r}")
    name, _, raw = text.partition("=")
    try:
        if "," in raw:
            return name, tuple(int(v) for v in raw.split(","))
        return name, int(raw)
    except ValueError:
        raise UserError(f"--param value must be naturals: {text!r}")


def build_config(argv: List[str]) -> RunConfig:
    parser = argparse.ArgumentParser(
        prog="szxc",
        description="Compile lambda-D programs to families of SZX diagrams "
                    "and verify them against a density-matrix oracle.")
    parser.add_argument("subcommand",
                        choices=["check", "eval", "reduce", "compile",
                                 "instantiate", "simulate", "verify"])
    parser.add_argument("path", help="a .ld source file")
    parser.add_argument("--param", action="append", default=[],
                        metavar="NAME=VALUE",
                        help="parameter binding (repeatable; comma lists ok)")
    parser.add_argument("--emit", choices=["json", "dot"], default="json")
    parser.add_argument("--no-simplify", action="store_true")
    parser.add_argument("--max-qubits", type=int,
                        default=int(os.environ.get("SZXC_MAX_QUBITS",
                                                   DEFAULT_MAX_QUBITS)))
    parser.add_argument("--rz-convention", choices=["2pi", "pi"],
                        default="2pi")
    parser.add_argument("--trace", action="store_true",
                        help="print each reduction step (reduce only)")
    parser.add_argument("--entry", default=None,
                        help="entry definition (default: the last one)")
    ns = parser.parse_args(argv)
    params = dict(_parse_param(p) for p in ns.param)
    return RunConfig(subcommand=ns.subcommand, path=ns.path, params=params,
                     emit=ns.emit, simplify=not ns.no_simplify,
                     max_qubits=ns.max_qubits, rz_convention=ns.rz_convention,
                     trace=ns.trace, entry=ns.entry)


def main(argv: Optional[List[str]] = None) -> int:
    try:
        config = build_config(argv if argv is not None else sys.argv[1:])
    except UserError as e:
        print(str(e), file=sys.stderr)
        return 1
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
