from __future__ import annotations

import math
from collections import Counter

import pytest

from avsched.circuits import (
    Builder,
    IrreducibleGate,
    LatticeSpec,
    PhasePrecision,
    RotationModel,
    TOFFOLI_FAMILY,
    attach_distillations,
    build_controlled_unitary,
    build_qft_dagger,
    build_test_circuit,
    decompose_single_controls,
    emit_controlled_unitary,
    hamiltonian_one_norm,
    n_phase_bits,
    rotation_count,
    synthesize_rotation,
    toffoli_share,
    usp,
)
from avsched.dag import find_consumers, build_dag
from avsched.ir import AvTable, Circuit, Gate, GateKind, total_av, validate_circuit

TABLE = AvTable.default()


@pytest.fixture(scope="module")
def gadgets4():
    return build_test_circuit(LatticeSpec(4))


def test_lattice_spec():
    assert LatticeSpec(6).split() == (2, 3)
    assert LatticeSpec(8).split() == (8, 1)
    assert LatticeSpec(4).modes == 32
    with pytest.raises(ValueError):
        LatticeSpec(1)


@pytest.mark.parametrize("L", range(2, 11))
def test_phase_bits_at_the_reference_parameters(L):
    assert n_phase_bits(LatticeSpec(L)) == 15


def test_one_norm_conventions():
    s = LatticeSpec(4)
    assert hamiltonian_one_norm(s) == 4 * 16 + 0.75 * 8 * 16
    assert hamiltonian_one_norm(s, "jw_with_constant") == 4 * 16 + 8 * 16
    with pytest.raises(ValueError):
        hamiltonian_one_norm(s, "other")


def test_phase_bits_log_arithmetic():
    s = LatticeSpec(4)
    arg = math.pi * hamiltonian_one_norm(s) / (math.sqrt(2) * 16e-3)
    assert n_phase_bits(s) == math.ceil(math.log2(arg))
    # doubling eps_E lowers n_p by one unless log2 lands on an integer
    assert n_phase_bits(s, 2e-3) == n_phase_bits(s) - 1
    # quadrupling the 1-norm through t and U raises n_p by two
    big = LatticeSpec(4, t=4.0, U=32.0)
    assert n_phase_bits(big) == n_phase_bits(s) + 2
    eps = [1e-4, 3e-4, 1e-3, 3e-3, 1e-2]
    bits = [n_phase_bits(s, e) for e in eps]
    assert bits == sorted(bits, reverse=True)


def test_rotation_model():
    rot = RotationModel(jitter=0)
    assert rot.t_count(1e-4) == 40
    assert RotationModel(jitter=0).t_count(0.5) == 3
    assert RotationModel(K=0.1, jitter=0).t_count(0.5) == 0
    import numpy as np

    rng = np.random.default_rng(1)
    counts = {RotationModel().t_count(1e-4, rng) for _ in range(200)}
    assert counts <= set(range(38, 43)) and len(counts) > 1
    with pytest.raises(ValueError):
        rot.t_count(0)


def test_synthesize_rotation():
    a = synthesize_rotation(RotationModel(), 1e-4, 7)
    assert a == synthesize_rotation(RotationModel(), 1e-4, 7)
    assert 38 <= a.t_count <= 42
    assert set(a.gates) <= {GateKind.H, GateKind.S, GateKind.T}
    runs = a.runs()
    assert sum(n for _, n in runs) == len(a.gates)
    assert all(x[0] != y[0] for x, y in zip(runs, runs[1:]))
    flat = synthesize_rotation(RotationModel(jitter=0, s_prob=0.0), 1e-4, 0)
    assert flat.t_count == 40 and flat.runs()[:2] == [("H", 1), ("T", 1)]


def test_t_carries_the_injection_attributes():
    e = TABLE["T"]
    assert (e.stale_yield, e.y_prob) == (1, 0.5)


def test_decompose_fixpoint_on_cnots():
    c = Circuit([Gate("CNOT", (0,), (1,)), Gate("CNOT", (1,), (2,))], 3)
    assert decompose_single_controls(c).gates == c.gates


def test_decompose_controlled_swap():
    c = Circuit([Gate("CSWAP", (1, 2), (0,))], 3)
    out = decompose_single_controls(c)
    assert [g.kind for g in out] == [GateKind.CNOT, GateKind.TOFFOLI, GateKind.CNOT]
    assert total_av(out, TABLE) == 4 + 6 + 4


def test_decompose_controlled_s_and_h():
    cs = decompose_single_controls(Circuit([Gate("CS", (1,), (0,))], 2))
    assert Counter(g.kind for g in cs) == {GateKind.T: 3, GateKind.CNOT: 2}
    ch = decompose_single_controls(Circuit([Gate("CH", (1,), (0,))], 2))
    assert Counter(g.kind for g in ch)[GateKind.T] == 2


def test_decompose_is_idempotent():
    c = Circuit(
        [
            Gate("CSWAP", (1, 2), (0,)),
            Gate("CRZ", (1,), (0,), params={"phase": True}),
            Gate("MCX", (4,), (0, 1, 2, 3)),
        ],
        5,
    )
    once = decompose_single_controls(c)
    assert decompose_single_controls(once) == once
    assert validate_circuit(once) == []


def test_mcx_expansion_uses_elbows():
    out = decompose_single_controls(Circuit([Gate("MCX", (5,), (0, 1, 2, 3, 4))], 6))
    kinds = Counter(g.kind for g in out)
    assert kinds[GateKind.TOFFOLI] == 1
    assert kinds[GateKind.LEFT_ELBOW] == kinds[GateKind.RIGHT_ELBOW] == 3
    assert validate_circuit(out) == []


def test_irreducible_gate():
    sparse = AvTable({"CNOT": {"av": 4}})
    with pytest.raises(IrreducibleGate):
        decompose_single_controls(Circuit([Gate("H", (0,))], 1), sparse)


def test_distillations_are_attached_once():
    c = Circuit([Gate("TOFFOLI", (2,), (0, 1)), Gate("T", (0,))], 3)
    once = attach_distillations(c)
    kinds = [g.kind for g in once]
    assert kinds == [GateKind.CCZ_DISTILL, GateKind.TOFFOLI, GateKind.T_DISTILL, GateKind.T]
    assert attach_distillations(once) == once
    pairs = find_consumers(build_dag(once, TABLE))
    assert pairs == {0: 1, 2: 3}


def test_degenerate_usp_for_powers_of_two():
    b = Builder(0)
    reg, flag = b.alloc(2), b.alloc()[0]
    usp(b, reg, 4, 1, flag, 0.1)
    assert {g.kind for g in b.gates} == {GateKind.H}
    b = Builder(0)
    reg, flag = b.alloc(2), b.alloc()[0]
    usp(b, reg, 1, 3, flag, 0.1)
    assert GateKind.RZ in {g.kind for g in b.gates}


@pytest.mark.parametrize("L", [2, 3, 4, 6])
def test_emitted_circuits_are_valid(L):
    spec = LatticeSpec(L)
    cu = build_controlled_unitary(spec)
    assert validate_circuit(cu) == []
    total_av(cu, TABLE)  # every kind is costed
    assert all(g.kind in TABLE for g in cu)


def test_qft_dagger():
    one = build_qft_dagger(1)
    assert [g.kind for g in one] == [GateKind.H]
    assert rotation_count(15) <= 500
    a, b = build_qft_dagger(15, seed=0), build_qft_dagger(15, seed=0)
    assert a == b
    c = build_qft_dagger(15, seed=1)
    assert a != c
    cnots = lambda circ: sum(1 for g in circ if g.kind is GateKind.CNOT)  # noqa: E731
    assert cnots(a) == cnots(c)
    assert sum(1 for g in a if g.kind is GateKind.T) != sum(1 for g in c if g.kind is GateKind.T)
    assert validate_circuit(a) == []


def test_raw_emission_uses_multi_controls():
    raw, regs = emit_controlled_unitary(LatticeSpec(4), 15)
    assert len(regs.phase) == 15 and len(regs.system) == 32
    assert any(g.kind is GateKind.MCX for g in raw) or any(len(g.controls) > 1 for g in raw)


def test_test_circuit_structure(gadgets4):
    names = [g.name for g in gadgets4]
    assert names == ["controlled_u", "qft_dagger"]
    assert [g.multiplicity for g in gadgets4] == [2**15, 1]
    assert gadgets4.total_av == sum(g.multiplicity * total_av(g.circuit, TABLE) for g in gadgets4)
    for g in gadgets4:
        assert validate_circuit(g.circuit) == []


def test_test_circuit_two_by_two():
    gs = build_test_circuit(LatticeSpec(2))
    assert [g.multiplicity for g in gs] == [2**15, 1]


def test_toffoli_family_dominates_4x4(gadgets4):
    cu = gadgets4.gadgets[0].circuit
    assert toffoli_share(cu, TABLE) > 0.5
    assert GateKind.CCZ_DISTILL in TOFFOLI_FAMILY


def test_m_max_near_95(gadgets4):
    assert abs(gadgets4.m_max - 95) <= 9.5


def test_generation_is_deterministic():
    a = build_test_circuit(LatticeSpec(3), seed=4)
    b = build_test_circuit(LatticeSpec(3), seed=4)
    assert [g.circuit for g in a] == [g.circuit for g in b]


def test_fixed_phase_bits_override():
    assert PhasePrecision(n_p=5).phase_bits(LatticeSpec(4)) == 5
    gs = build_test_circuit(LatticeSpec(2), PhasePrecision(n_p=4))
    assert gs.gadgets[0].multiplicity == 16
