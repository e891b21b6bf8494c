from __future__ import annotations

import json

import pytest
from hypothesis import given, strategies as st

from avsched.ir import (
    AvTable,
    AvTableEntry,
    Circuit,
    Gate,
    GateKind,
    OverlapViolation,
    QubitOutOfRange,
    SupportViolation,
    UnknownGateKind,
    UseAfterMeasure,
    av_of,
    dumps_circuit,
    loads_circuit,
    total_av,
    validate_circuit,
)

TABLE = AvTable.default()


def test_default_table_values():
    assert av_of(Gate(GateKind.CNOT, (0,), (1,)), TABLE) == 4
    assert av_of(Gate(GateKind.CCZ_DISTILL, (0, 1, 2)), TABLE) == 35
    assert av_of(Gate(GateKind.T_DISTILL, (0,)), TABLE) == 25
    assert av_of(Gate(GateKind.IDENTITY, (0,)), TABLE) == 0


def test_ppr_pi8_entry():
    e = TABLE["PPR_PI8"]
    assert (e.stale_yield, e.y_prob) == (1, 0.5)


def test_total_av_examples():
    assert total_av(Circuit((), 0), TABLE) == 0
    fig1a = Circuit([Gate("CNOT", (0,), (4,)), Gate("CNOT", (1,), (2,))], 5)
    assert total_av(fig1a, TABLE) == 8
    mixed = Circuit([Gate("CNOT", (0,), (1,)), Gate("CCZ_DISTILL", (2, 3, 4))], 5)
    assert total_av(mixed, TABLE) == 39


def test_unknown_kind_raises():
    sparse = AvTable({"CNOT": {"av": 4}})
    with pytest.raises(UnknownGateKind):
        total_av(Circuit([Gate("H", (0,))], 1), sparse)


kinds = st.sampled_from([GateKind.H, GateKind.CNOT, GateKind.T, GateKind.TOFFOLI, GateKind.CCZ_DISTILL])
gates = st.builds(lambda k, q: Gate(k, (q,)), kinds, st.integers(0, 5))


@given(st.lists(gates, max_size=20), st.lists(gates, max_size=20))
def test_total_av_is_linear(a, b):
    c1, c2 = Circuit(a, 6), Circuit(b, 6)
    assert total_av(c1 + c2, TABLE) == total_av(c1, TABLE) + total_av(c2, TABLE)


def test_validate_well_formed():
    c = Circuit([Gate("H", (0,)), Gate("CNOT", (1,), (0,))], 2)
    assert validate_circuit(c) == []


def test_validate_overlap():
    v = validate_circuit(Circuit([Gate("CNOT", (0,), (0,))], 1))
    assert [type(x) for x in v] == [OverlapViolation]


def test_validate_use_after_measure():
    c = Circuit([Gate("MEAS_Z", (3,), measures=(3,)), Gate("H", (3,))], 4)
    v = validate_circuit(c)
    assert len(v) == 1 and isinstance(v[0], UseAfterMeasure) and v[0].qubit == 3


def test_validate_range_and_support():
    v = validate_circuit(Circuit([Gate("H", (5,)), Gate("H", (0,), initializes=(1,))], 2))
    assert {type(x) for x in v} == {QubitOutOfRange, SupportViolation}


def test_entry_invariants():
    with pytest.raises(ValueError):
        AvTableEntry("X", av=-1)
    with pytest.raises(ValueError):
        AvTableEntry("X", av=1, y_prob=1.5)
    with pytest.raises(ValueError):
        AvTableEntry("X", av=1.5)
    with pytest.raises(ValueError):
        AvTable({"H": {"stale_yield": 1}})


def test_table_round_trip_and_override(tmp_path):
    path = tmp_path / "t.json"
    path.write_text(json.dumps(TABLE.to_dict()))
    loaded = AvTable.load(path)
    assert loaded.to_dict() == TABLE.to_dict()
    pinned = TABLE.override(T={"av": 3})
    assert pinned["T"].av == 3 and pinned["T"].stale_yield == 1
    assert TABLE["T"].av == 2


def test_toml_table_defaults_missing_fields(tmp_path):
    path = tmp_path / "t.toml"
    path.write_text('[CNOT]\nav = 4\n\n[T]\nav = 2\ny_prob = 0.5\n')
    t = AvTable.load(path)
    assert t["CNOT"].stale_yield == 0 and t["T"].y_prob == 0.5


def test_circuit_text_round_trip():
    c = Circuit(
        [
            Gate("LEFT_ELBOW", (2,), (0, 1), initializes=(2,)),
            Gate("PPR_PI8", (0, 2), params={"pauli": "XZ"}),
            Gate("RIGHT_ELBOW", (2,), (0, 1), measures=(2,)),
        ],
        3,
        "demo",
    )
    text = dumps_circuit(c)
    assert loads_circuit(text) == c
    assert dumps_circuit(loads_circuit(text)) == text


def test_data_high_water_counts_ancillas():
    c = Circuit(
        [
            Gate("LEFT_ELBOW", (2,), (0, 1), initializes=(2,)),
            Gate("LEFT_ELBOW", (3,), (0, 2), initializes=(3,)),
            Gate("RIGHT_ELBOW", (3,), (0, 2), measures=(3,)),
            Gate("RIGHT_ELBOW", (2,), (0, 1), measures=(2,)),
            Gate("LEFT_ELBOW", (4,), (0, 1), initializes=(4,)),
        ],
        5,
    )
    assert c.data_high_water() == 4
