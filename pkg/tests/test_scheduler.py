from __future__ import annotations

import random
import warnings
from dataclasses import replace

import pytest

from avsched.dag import OperationDag, OpVertex, build_dag
from avsched.ir import Circuit, Gate
from avsched.scheduler import (
    BridgingCharge,
    DuplicateVertex,
    MissingVertex,
    PrecedenceViolation,
    QoomError,
    ReactionDominatedWarning,
    Schedule,
    SchedulerConfig,
    YMethod,
    cycle_reaction_layers,
    exhaustive_schedule_oracle,
    greedy_schedule,
    ledger_series,
    validate_schedule,
)

from _gen import TABLE, abc_circuit, abc_then_ccz, random_dag, tiny_dag


def test_empty_dag():
    s = greedy_schedule(OperationDag([], []), SchedulerConfig(5))
    assert s.n_cycles == 0 and s.peak_reaction_layers == 0


def test_config_validation():
    with pytest.raises(ValueError):
        SchedulerConfig(0)
    with pytest.raises(ValueError):
        SchedulerConfig(4, reaction_layer_threshold=0)
    assert SchedulerConfig(4).reaction_layer_threshold == 20
    assert SchedulerConfig(4).bridging_charge is BridgingCharge.PER_OVERLAP


def test_abc_single_cycle():
    d = build_dag(abc_circuit(), TABLE)
    s = greedy_schedule(d, SchedulerConfig(40))
    assert s.n_cycles == 1
    c = s.cycles[0]
    assert c.scheduled == (0, 1, 2)
    assert c.bridge == 2 and c.stale_produced == 1
    assert cycle_reaction_layers(c, d) == 1


def test_stale_deduction_in_next_cycle():
    d = abc_then_ccz()
    s = greedy_schedule(d, SchedulerConfig(40))
    first, second = s.cycles[0], s.cycles[1]
    assert first.scheduled == (0, 1, 2) and first.bridge == 2
    assert second.stale == first.stale_produced == 1


def test_qoom_on_oversized_vertex():
    v = OpVertex(0, 50, 0, frozenset({0}), 0.0, 0, frozenset(), 0)
    with pytest.raises(QoomError) as info:
        greedy_schedule(OperationDag([v], []), SchedulerConfig(10, preload_inputs=False))
    assert info.value.vertex == 0 and info.value.deficit > 0


def test_validate_detects_corruption():
    d = build_dag(abc_circuit(), TABLE)
    s = greedy_schedule(d, SchedulerConfig(6))
    assert validate_schedule(s, d) == []
    first = s.cycles[0]
    dropped = Schedule([replace(first, scheduled=first.scheduled[1:])] + s.cycles[1:], {}, [], s.config)
    assert any(isinstance(v, MissingVertex) for v in validate_schedule(dropped, d))
    # swap the cycles of A and its successors
    by_cycle = [c.scheduled for c in s.cycles]
    assert len(by_cycle) > 1
    swapped = [replace(c, scheduled=by_cycle[-1 - i]) for i, c in enumerate(s.cycles)]
    bad = Schedule(swapped, {}, [], s.config)
    assert any(isinstance(v, PrecedenceViolation) for v in validate_schedule(bad, d))
    dup = Schedule([replace(first, scheduled=first.scheduled + first.scheduled)], {}, [], s.config)
    assert any(isinstance(v, DuplicateVertex) for v in validate_schedule(dup, d))


def test_reaction_layers_examples():
    t2 = build_dag(Circuit([Gate("T", (0,)), Gate("T", (0,))], 1), TABLE)
    s = greedy_schedule(t2, SchedulerConfig(20))
    assert s.n_cycles == 1 and cycle_reaction_layers(s.cycles[0], t2) == 2
    clifford = build_dag(Circuit([Gate("H", (0,)), Gate("CNOT", (1,), (0,))], 2), TABLE)
    s = greedy_schedule(clifford, SchedulerConfig(20))
    assert all(cycle_reaction_layers(c, clifford) == 0 for c in s.cycles)


def test_ledger_layers_match_the_induced_subgraph():
    rng = random.Random(2)
    for _ in range(30):
        d = random_dag(rng)
        s = greedy_schedule(d, SchedulerConfig(80))
        assert [c.reaction_layers for c in s.cycles] == [cycle_reaction_layers(c, d) for c in s.cycles]


def test_reaction_dominated_warning():
    chain = build_dag(Circuit([Gate("T", (0,)) for _ in range(4)], 1), TABLE)
    with pytest.warns(ReactionDominatedWarning):
        s = greedy_schedule(chain, SchedulerConfig(40, reaction_layer_threshold=2))
    assert s.warnings


def test_conservation_and_precedence_random():
    rng = random.Random(9)
    for i in range(60):
        d = random_dag(rng)
        for cfg in (
            SchedulerConfig(60, rng_seed=i),
            SchedulerConfig(60, rng_seed=i, bridging_charge="kappa"),
            SchedulerConfig(60, rng_seed=i, y_method="1"),
            SchedulerConfig(60, rng_seed=i, credit="none"),
        ):
            try:
                s = greedy_schedule(d, cfg)
            except QoomError:
                continue
            assert validate_schedule(s, d) == []


def test_y_methods():
    rng = random.Random(13)
    saw_idle = False
    for i in range(40):
        d = random_dag(rng)
        two = greedy_schedule(d, SchedulerConfig(80, rng_seed=i))
        one = greedy_schedule(d, SchedulerConfig(80, rng_seed=i, y_method=YMethod.METHOD1))
        assert all(c.idle_y == 0 for c in two.cycles)
        assert all(c.idle_y >= 0 for c in one.cycles)
        saw_idle |= any(c.idle_y for c in one.cycles)
        for e in two.y_events:
            assert e.seed_path == (i, 0, e.cycle)
            assert e.needed == (e.draw < d.vertices[e.vertex].y_prob)
    assert saw_idle


def test_catalyst_is_shared_through_a_bridge():
    c = Circuit([Gate("S", (0,)), Gate("S", (1,))], 2)
    s = greedy_schedule(build_dag(c, TABLE), SchedulerConfig(20))
    assert s.n_cycles == 1 and s.cycles[0].bridge == 1


def test_determinism_and_seed_dependence():
    d = random_dag(random.Random(21), max_gates=60)
    a = greedy_schedule(d, SchedulerConfig(60, rng_seed=5))
    b = greedy_schedule(d, SchedulerConfig(60, rng_seed=5))
    assert a.ledger_csv() == b.ledger_csv()
    assert a.summary_json() == b.summary_json()
    assert a.y_events == b.y_events


def test_monotone_feasibility():
    rng = random.Random(23)
    for i in range(40):
        d = random_dag(rng, max_gates=30)
        ok = []
        for n in range(1, 90):
            try:
                greedy_schedule(d, SchedulerConfig(n, rng_seed=i))
                ok.append(True)
            except QoomError:
                ok.append(False)
        first = ok.index(True)
        assert all(ok[first:])


def test_oracle_examples():
    one = build_dag(Circuit([Gate("H", (0,))], 1), TABLE)
    assert exhaustive_schedule_oracle(one, SchedulerConfig(4)) == 1
    anti = build_dag(Circuit([Gate("H", (q,)) for q in range(4)], 4), TABLE)
    assert exhaustive_schedule_oracle(anti, SchedulerConfig(8)) == 1
    assert greedy_schedule(anti, SchedulerConfig(8)).n_cycles == 1
    with pytest.raises(QoomError):
        exhaustive_schedule_oracle(build_dag(Circuit([Gate("CNOT", (0,), (1,))], 2), TABLE), SchedulerConfig(2))


def test_greedy_never_beats_the_oracle():
    rng = random.Random(29)
    for i in range(60):
        d = tiny_dag(rng)
        for n in (6, 9, 14):
            try:
                g = greedy_schedule(d, SchedulerConfig(n, rng_seed=i)).n_cycles
            except QoomError:
                continue
            assert g >= exhaustive_schedule_oracle(d, SchedulerConfig(n))


def test_ledger_series():
    d = random_dag(random.Random(31), max_gates=60)
    s = greedy_schedule(d, SchedulerConfig(40))
    rows = ledger_series(s, 1)
    assert [r["unused"] for r in rows] == [c.unused for c in s.cycles]
    assert all(r["unused_avg"] == r["unused"] for r in rows)
    w = 3
    smooth = ledger_series(s, w)
    for i, r in enumerate(smooth):
        win = [c.bridge for c in s.cycles[max(0, i - w + 1) : i + 1]]
        assert r["bridge_avg"] == pytest.approx(sum(win) / len(win))
    with pytest.raises(ValueError):
        ledger_series(s, 0)


def test_ledger_series_constant_and_impulse():
    from avsched.scheduler import CycleLedger

    cfg = SchedulerConfig(10)
    flat = [CycleLedger(i, 2, 3, 0, 0, 5, 0, 0, ()) for i in range(40)]
    rows = ledger_series(Schedule(flat, {}, [], cfg), 25)
    assert all(r["workspace_avg"] == 2 for r in rows)
    pulse = [CycleLedger(i, 10 if i == 3 else 0, 0, 0, 0, 10 if i != 3 else 0, 0, 0, ()) for i in range(8)]
    rows = ledger_series(Schedule(pulse, {}, [], cfg), 4)
    expected = [0, 0, 0, 10 / 4, 10 / 4, 10 / 4, 10 / 4, 0]
    assert [r["workspace_avg"] for r in rows] == pytest.approx(expected)


def test_csv_and_summary():
    d = build_dag(abc_circuit(), TABLE)
    s = greedy_schedule(d, SchedulerConfig(40, rng_seed=3))
    lines = s.ledger_csv().splitlines()
    assert lines[0] == "cycle,workspace,data,bridge,stale,unused,idle_y,reaction_layers"
    assert len(lines) == 1 + s.n_cycles
    summ = s.summary()
    assert summ["seed"] == 3 and summ["config"]["total_qubits"] == 40
