"""Circuit intermediate representation and the Active Volume cost table.

A :class:`Circuit` is an ordered list of :class:`Gate` records acting on
opaque integer qubit labels.  Costs live outside the circuit in an
:class:`AvTable`, which maps a gate kind to its block cost, stale-state yield
and |Y> demand.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib


class GateKind(str, Enum):
    """Gate classes known to the toolchain.

    The value is the name used in circuit files and AV tables.
    """

    IDENTITY = "I"
    X = "X"
    Y = "Y"
    Z = "Z"
    H = "H"
    S = "S"
    T = "T"  # T-state injection
    RZ = "RZ"  # arbitrary angle, must be synthesized before costing
    CNOT = "CNOT"
    CZ = "CZ"
    TOFFOLI = "TOFFOLI"
    MCX = "MCX"
    LEFT_ELBOW = "LEFT_ELBOW"
    RIGHT_ELBOW = "RIGHT_ELBOW"
    CH = "CH"
    CS = "CS"
    CRZ = "CRZ"
    CSWAP = "CSWAP"
    CCZ_DISTILL = "CCZ_DISTILL"
    T_DISTILL = "T_DISTILL"
    Y_FACTORY = "Y_FACTORY"
    BELL_PREP = "BELL_PREP"
    BELL_MEAS = "BELL_MEAS"
    MEAS_X = "MEAS_X"
    MEAS_Z = "MEAS_Z"
    PPM = "PPM"
    PPR_PI8 = "PPR_PI8"

    def __str__(self) -> str:
        return self.value


DISTILLATION_KINDS = frozenset({GateKind.CCZ_DISTILL, GateKind.T_DISTILL})

# Kinds whose action is a Pauli product (used by the Pauli commutation mode).
# X/Y/Z carry their own letter; the rest read it from params["pauli"].
PAULI_KINDS = frozenset(
    {GateKind.X, GateKind.Y, GateKind.Z, GateKind.MEAS_X, GateKind.MEAS_Z, GateKind.PPM, GateKind.PPR_PI8}
)


class UnknownGateKind(KeyError):
    """Raised when a gate kind has no entry in the AV table."""


@dataclass(frozen=True)
class Gate:
    """One operation of a circuit.

    ``initializes`` and ``measures`` must be subsets of the gate support
    (targets plus controls).
    """

    kind: GateKind
    targets: tuple[int, ...] = ()
    controls: tuple[int, ...] = ()
    initializes: tuple[int, ...] = ()
    measures: tuple[int, ...] = ()
    params: tuple[tuple[str, object], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", GateKind(self.kind))
        for name in ("targets", "controls", "initializes", "measures"):
            object.__setattr__(self, name, tuple(int(q) for q in getattr(self, name)))
        if isinstance(self.params, Mapping):
            object.__setattr__(self, "params", tuple(sorted(self.params.items())))

    @cached_property
    def qubits(self) -> frozenset[int]:
        """Every qubit the gate acts on or initializes."""
        return frozenset(self.targets) | frozenset(self.controls)

    def param(self, name: str, default=None):
        for key, value in self.params:
            if key == name:
                return value
        return default

    def with_params(self, **updates) -> "Gate":
        merged = dict(self.params)
        merged.update(updates)
        return Gate(self.kind, self.targets, self.controls, self.initializes, self.measures, merged)

    def pauli_string(self) -> dict[int, str] | None:
        """Map qubit -> Pauli letter if this gate is a Pauli-product operation."""
        return self._pauli

    @cached_property
    def _pauli(self) -> dict[int, str] | None:
        if self.kind not in PAULI_KINDS:
            return None
        support = self.targets + self.controls
        if self.kind in (GateKind.X, GateKind.Y, GateKind.Z):
            return {q: self.kind.value for q in support}
        if self.kind is GateKind.MEAS_X:
            return {q: "X" for q in support}
        if self.kind is GateKind.MEAS_Z:
            return {q: "Z" for q in support}
        letters = self.param("pauli")
        if letters is None:
            return {q: "Z" for q in support}
        if len(letters) != len(support):
            raise ValueError(f"pauli string {letters!r} does not match support of {self.kind}")
        return dict(zip(support, letters))


@dataclass(frozen=True)
class Circuit:
    """Ordered gates on ``qubit_count`` qubits.  Program order is dependency order."""

    gates: tuple[Gate, ...]
    qubit_count: int
    name: str = "circuit"

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))

    def __len__(self) -> int:
        return len(self.gates)

    def __iter__(self) -> Iterator[Gate]:
        return iter(self.gates)

    def __add__(self, other: "Circuit") -> "Circuit":
        return Circuit(self.gates + other.gates, max(self.qubit_count, other.qubit_count), self.name)

    def input_qubits(self) -> set[int]:
        """Qubits alive from the start (never brought into existence by a gate)."""
        created = {q for g in self.gates for q in g.initializes}
        used = {q for g in self.gates for q in g.qubits}
        return (set(range(self.qubit_count)) - created) | (used - created)

    def data_high_water(self) -> int:
        """Maximum number of simultaneously live qubits along program order."""
        live = set(range(self.qubit_count)) - {q for g in self.gates for q in g.initializes}
        peak = len(live)
        for g in self.gates:
            live.update(g.initializes)
            peak = max(peak, len(live))
            live.difference_update(g.measures)
        return peak


@dataclass(frozen=True)
class AvTableEntry:
    kind: str
    av: int
    stale_yield: int = 0
    y_prob: float = 0.0
    y_catalyst: int = 0
    y_deterministic: int = 0

    def __post_init__(self):
        if not isinstance(self.av, int) or isinstance(self.av, bool):
            raise ValueError(f"{self.kind}: av must be an integer number of blocks, got {self.av!r}")
        if self.av < 0:
            raise ValueError(f"{self.kind}: av must be non-negative")
        if not 0.0 <= self.y_prob <= 1.0:
            raise ValueError(f"{self.kind}: y_prob must lie in [0, 1]")
        for name in ("stale_yield", "y_catalyst", "y_deterministic"):
            if getattr(self, name) < 0:
                raise ValueError(f"{self.kind}: {name} must be non-negative")


class AvTable(Mapping[str, AvTableEntry]):
    """Gate kind -> :class:`AvTableEntry`, loaded from JSON or TOML."""

    def __init__(self, entries: Iterable[AvTableEntry] | Mapping[str, Mapping] = ()):
        self._entries: dict[str, AvTableEntry] = {}
        if isinstance(entries, Mapping):
            entries = [_entry_from_mapping(k, v) for k, v in entries.items()]
        for entry in entries:
            self._entries[str(entry.kind)] = entry

    def __getitem__(self, kind) -> AvTableEntry:
        key = kind.value if isinstance(kind, GateKind) else str(kind)
        try:
            return self._entries[key]
        except KeyError:
            raise UnknownGateKind(key) from None

    def __contains__(self, kind) -> bool:
        key = kind.value if isinstance(kind, GateKind) else str(kind)
        return key in self._entries

    def __iter__(self):
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __repr__(self) -> str:
        return f"AvTable({len(self)} entries)"

    def override(self, **changes: Mapping) -> "AvTable":
        """Copy of the table with some entries replaced (e.g. ``T={"av": 3}``)."""
        merged = {k: _entry_as_dict(v) for k, v in self._entries.items()}
        for kind, fields in changes.items():
            merged[kind] = {**merged.get(kind, {}), **fields}
        return AvTable(merged)

    def to_dict(self) -> dict[str, dict]:
        return {k: _entry_as_dict(v) for k, v in self._entries.items()}

    @classmethod
    def load(cls, path: str | Path) -> "AvTable":
        path = Path(path)
        if path.suffix == ".toml":
            with path.open("rb") as fh:
                raw = tomllib.load(fh)
        else:
            raw = json.loads(path.read_text())
        return cls(raw)

    @classmethod
    def default(cls) -> "AvTable":
        text = resources.files("avsched.data").joinpath("av_table.json").read_text()
        return cls(json.loads(text))


def _entry_from_mapping(kind: str, raw: Mapping) -> AvTableEntry:
    if "av" not in raw:
        raise ValueError(f"AV table entry {kind!r} is missing the mandatory 'av' field")
    return AvTableEntry(
        kind=kind,
        av=raw["av"],
        stale_yield=int(raw.get("stale_yield", 0)),
        y_prob=float(raw.get("y_prob", 0.0)),
        y_catalyst=int(raw.get("y_catalyst", 0)),
        y_deterministic=int(raw.get("y_deterministic", 0)),
    )


def _entry_as_dict(entry: AvTableEntry) -> dict:
    return {
        "av": entry.av,
        "stale_yield": entry.stale_yield,
        "y_prob": entry.y_prob,
        "y_catalyst": entry.y_catalyst,
        "y_deterministic": entry.y_deterministic,
    }


def av_of(gate: Gate, table: AvTable) -> int:
    return table[gate.kind].av


def total_av(circuit: Circuit, table: AvTable) -> int:
    return sum(table[g.kind].av for g in circuit.gates)


# --- validation -------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    gate_index: int
    detail: str = ""

    @property
    def name(self) -> str:
        return type(self).__name__


@dataclass(frozen=True)
class OverlapViolation(Violation):
    pass


@dataclass(frozen=True)
class UseAfterMeasure(Violation):
    qubit: int = -1


@dataclass(frozen=True)
class QubitOutOfRange(Violation):
    qubit: int = -1


@dataclass(frozen=True)
class SupportViolation(Violation):
    """An initialized or measured qubit that the gate does not act on."""

    qubit: int = -1


def validate_circuit(circuit: Circuit) -> list[Violation]:
    violations: list[Violation] = []
    measured: dict[int, int] = {}
    for i, g in enumerate(circuit.gates):
        shared = set(g.targets) & set(g.controls)
        if shared:
            violations.append(OverlapViolation(i, f"targets and controls share {sorted(shared)}"))
        support = g.qubits
        for q in sorted(support):
            if not 0 <= q < circuit.qubit_count:
                violations.append(QubitOutOfRange(i, "qubit index out of range", q))
            if q in measured:
                violations.append(UseAfterMeasure(i, f"measured by gate {measured[q]}", q))
        for q in g.initializes:
            if q not in support:
                violations.append(SupportViolation(i, "initialized outside support", q))
        for q in g.measures:
            if q not in support:
                violations.append(SupportViolation(i, "measured outside support", q))
            else:
                measured.setdefault(q, i)
    return violations


# --- serialization ----------------------------------------------------------


def _fmt_list(qs: Iterable[int]) -> str:
    return "[" + ",".join(str(q) for q in qs) + "]"


def dumps_circuit(circuit: Circuit) -> str:
    """Line-oriented text: a header line then one gate per line."""
    lines = [f"# circuit name={circuit.name} qubits={circuit.qubit_count}"]
    for g in circuit.gates:
        line = (
            f"{g.kind.value} targets={_fmt_list(g.targets)} controls={_fmt_list(g.controls)}"
            f" init={_fmt_list(g.initializes)} meas={_fmt_list(g.measures)}"
        )
        if g.params:
            line += " params=" + json.dumps(dict(g.params), sort_keys=True, separators=(",", ":"))
        lines.append(line)
    return "\n".join(lines) + "\n"


def _parse_list(text: str) -> tuple[int, ...]:
    body = text.strip()[1:-1].strip()
    return tuple(int(x) for x in body.split(",")) if body else ()


def loads_circuit(text: str) -> Circuit:
    name, qubit_count, gates = "circuit", None, []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            for token in line[1:].split():
                if token.startswith("name="):
                    name = token[5:]
                elif token.startswith("qubits="):
                    qubit_count = int(token[7:])
            continue
        head, _, rest = line.partition(" ")
        params = {}
        if " params=" in " " + rest:
            rest, _, ptxt = (" " + rest).partition(" params=")
            params = json.loads(ptxt)
        fields = dict(tok.split("=", 1) for tok in rest.split())
        gates.append(
            Gate(
                GateKind(head),
                _parse_list(fields.get("targets", "[]")),
                _parse_list(fields.get("controls", "[]")),
                _parse_list(fields.get("init", "[]")),
                _parse_list(fields.get("meas", "[]")),
                params,
            )
        )
    if qubit_count is None:
        qubit_count = 1 + max((q for g in gates for q in g.qubits), default=-1)
    return Circuit(tuple(gates), qubit_count, name)
