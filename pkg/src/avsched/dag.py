"""Operation DAG construction, distillation pairing and graph queries."""

from __future__ import annotations

import hashlib
import json
import pickle
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path

import numpy as np

from .ir import DISTILLATION_KINDS, AvTable, Circuit, Gate, GateKind, dumps_circuit


class CommutationMode(str, Enum):
    SUPPORT = "support"
    PAULI = "pauli"


class CycleDetected(RuntimeError):
    """The graph handed to a layering query is not acyclic."""


class UnmatchedDistillation(ValueError):
    """A distillation vertex has no magic-state consumer."""


def _pauli_commute(pa: dict[int, str], pb: dict[int, str]) -> bool:
    clashes = 0
    for q, letter in pa.items():
        other = pb.get(q)
        if other is not None and other != letter and "I" not in (letter, other):
            clashes += 1
    return clashes % 2 == 0


def commutes(a: Gate, b: Gate, mode: CommutationMode = CommutationMode.SUPPORT) -> bool:
    """Conservative commutation test.

    A gate never commutes with itself, even when it is a Pauli operation:
    the comparison is by identity of the gate record.
    """
    if a is b:
        return False
    if not (a.qubits & b.qubits):
        return True
    if mode is CommutationMode.PAULI or mode == "pauli":
        pa, pb = a.pauli_string(), b.pauli_string()
        if pa is not None and pb is not None:
            return _pauli_commute(pa, pb)
    return False


@dataclass(frozen=True)
class OpVertex:
    id: int
    av: int
    stale: int
    qubits_acted: frozenset[int]
    y_prob: float
    y_catalyst: int
    qubits_measured: frozenset[int]
    gate_ref: int
    kind: GateKind = GateKind.IDENTITY
    y_deterministic: int = 0
    initializes: frozenset[int] = frozenset()

    @property
    def is_distillation(self) -> bool:
        return self.kind in DISTILLATION_KINDS

    @property
    def reactive(self) -> bool:
        return self.stale > 0 or self.y_prob > 0


def vertex_from_gate(index: int, gate: Gate, table: AvTable) -> OpVertex:
    entry = table[gate.kind]
    return OpVertex(
        id=index,
        av=entry.av,
        stale=entry.stale_yield,
        qubits_acted=gate.qubits,
        y_prob=entry.y_prob,
        y_catalyst=entry.y_catalyst,
        qubits_measured=frozenset(gate.measures),
        gate_ref=index,
        kind=gate.kind,
        y_deterministic=entry.y_deterministic,
        initializes=frozenset(gate.initializes),
    )


class OperationDag:
    """Immutable DAG over :class:`OpVertex` records.

    Edges are stored as sorted predecessor and successor tuples per vertex.
    Descendant counts and layers are computed on first use and cached.
    """

    def __init__(self, vertices, edges, qubit_count: int | None = None):
        self.vertices: tuple[OpVertex, ...] = tuple(vertices)
        # qubits of the source circuit; idle ones still occupy memory
        self.qubit_count = qubit_count
        n = len(self.vertices)
        preds: list[set[int]] = [set() for _ in range(n)]
        succs: list[set[int]] = [set() for _ in range(n)]
        for u, v in edges:
            if u == v:
                raise CycleDetected(f"self loop on {u}")
            preds[v].add(u)
            succs[u].add(v)
        self.preds: tuple[tuple[int, ...], ...] = tuple(tuple(sorted(p)) for p in preds)
        self.succs: tuple[tuple[int, ...], ...] = tuple(tuple(sorted(s)) for s in succs)

    def __len__(self) -> int:
        return len(self.vertices)

    def __eq__(self, other) -> bool:
        return isinstance(other, OperationDag) and self.vertices == other.vertices and self.edges == other.edges

    def __repr__(self) -> str:
        return f"OperationDag({len(self)} vertices, {len(self.edges)} edges)"

    @cached_property
    def edges(self) -> frozenset[tuple[int, int]]:
        return frozenset((u, v) for v, ps in enumerate(self.preds) for u in ps)

    @property
    def total_av(self) -> int:
        return sum(v.av for v in self.vertices)

    @cached_property
    def topological_order(self) -> tuple[int, ...]:
        indeg = [len(p) for p in self.preds]
        ready = deque(i for i, d in enumerate(indeg) if d == 0)
        order = []
        while ready:
            u = ready.popleft()
            order.append(u)
            for w in self.succs[u]:
                indeg[w] -= 1
                if indeg[w] == 0:
                    ready.append(w)
        if len(order) != len(self):
            raise CycleDetected(f"{len(self) - len(order)} vertices lie on or behind a cycle")
        return tuple(order)

    def is_acyclic(self) -> bool:
        try:
            self.topological_order
        except CycleDetected:
            return False
        return True

    @cached_property
    def descendant_counts(self) -> tuple[int, ...]:
        # Bitset reachability in reverse topological order, one block of
        # target columns at a time to bound memory on large gadgets.
        n = len(self)
        counts = np.zeros(n, dtype=np.int64)
        order = self.topological_order[::-1]
        chunk = 64 * 64
        for lo in range(0, n, chunk):
            hi = min(n, lo + chunk)
            width = (hi - lo + 63) // 64
            reach = np.zeros((n, width), dtype=np.uint64)
            for u in order:
                row = reach[u]
                for w in self.succs[u]:
                    row |= reach[w]
                    if lo <= w < hi:
                        k = w - lo
                        row[k >> 6] |= np.uint64(1) << np.uint64(k & 63)
            counts += np.bitwise_count(reach).sum(axis=1, dtype=np.int64)
        return tuple(int(c) for c in counts)

    @cached_property
    def layers(self) -> tuple[int, ...]:
        layer = [0] * len(self)
        for v in self.topological_order:
            if self.preds[v]:
                layer[v] = 1 + max(layer[u] for u in self.preds[v])
        return tuple(layer)

    def transitive_closure(self) -> frozenset[tuple[int, int]]:
        closure = set()
        below: dict[int, set[int]] = {}
        for u in reversed(self.topological_order):
            acc = set()
            for w in self.succs[u]:
                acc.add(w)
                acc |= below[w]
            below[u] = acc
            closure.update((u, w) for w in acc)
        return frozenset(closure)

    def to_text(self) -> str:
        lines = []
        for v in self.vertices:
            lines.append(
                f"vertex {v.id} kind={v.kind.value} av={v.av} stale={v.stale} y={v.y_prob:g} ybar={v.y_catalyst}"
                f" qa={sorted(v.qubits_acted)} qm={sorted(v.qubits_measured)} gate={v.gate_ref}"
            )
        lines.extend(f"edge {u} {v}" for u, v in sorted(self.edges))
        return "\n".join(lines) + "\n"


def descendant_counts(dag: OperationDag) -> tuple[int, ...]:
    return dag.descendant_counts


def layering(dag: OperationDag) -> tuple[int, ...]:
    return dag.layers


def reaction_depth(dag: OperationDag) -> int:
    """Number of layers; an empty DAG has depth 0."""
    if len(dag) == 0:
        return 0
    return 1 + max(dag.layers)


# --- construction -----------------------------------------------------------


def build_dag(
    circuit: Circuit,
    table: AvTable,
    mode: CommutationMode = CommutationMode.SUPPORT,
    method: str = "backward",
) -> OperationDag:
    """Build the operation DAG.

    ``method="backward"`` is the backward-search construction driven by the
    current sink set.  ``method="wire"`` links each gate to the last gate
    on each of its qubits; it yields the same transitive closure in Support
    mode at linear cost and is used for the large generated gadgets.
    """
    mode = CommutationMode(mode)
    vertices = [vertex_from_gate(i, g, table) for i, g in enumerate(circuit.gates)]
    if method == "wire":
        if mode is not CommutationMode.SUPPORT:
            raise ValueError("wire construction is only valid in Support mode")
        return OperationDag(vertices, _wire_edges(circuit), circuit.qubit_count)
    if method != "backward":
        raise ValueError(f"unknown DAG construction method {method!r}")

    gates = circuit.gates
    preds: list[list[int]] = [[] for _ in gates]
    edges = []
    leaves: list[int] = []  # insertion-ordered sink set
    leaf_set: set[int] = set()
    for v in range(len(gates)):
        queue = list(leaves)
        seen = set(leaves)
        i = 0
        while i < len(queue):
            u = queue[i]
            i += 1
            if commutes(gates[u], gates[v], mode):
                for p in preds[u]:
                    if p not in seen:
                        queue.append(p)
                        seen.add(p)
            else:
                edges.append((u, v))
                preds[v].append(u)
                leaf_set.discard(u)
        leaves = [x for x in leaves if x in leaf_set]
        leaves.append(v)
        leaf_set.add(v)
    return OperationDag(vertices, edges, circuit.qubit_count)


def _wire_edges(circuit: Circuit) -> list[tuple[int, int]]:
    last: dict[int, int] = {}
    edges = set()
    for v, g in enumerate(circuit.gates):
        for q in g.qubits:
            u = last.get(q)
            if u is not None:
                edges.add((u, v))
            last[q] = v
    return sorted(edges)


def naive_dag_oracle(
    circuit: Circuit, table: AvTable, mode: CommutationMode = CommutationMode.SUPPORT
) -> OperationDag:
    """Quadratic reference construction used to cross-check :func:`build_dag`.

    For each new gate v, a vertex u earlier in program order is linked to v
    when u does not commute with v and u can reach a current sink through
    vertices that all commute with v (u itself may be the sink).  The
    reachability is evaluated by one reverse sweep over the prefix rather
    than by a queue.
    """
    mode = CommutationMode(mode)
    gates = circuit.gates
    n = len(gates)
    succs: list[set[int]] = [set() for _ in range(n)]
    edges = []
    for v in range(n):
        comm = [commutes(gates[u], gates[v], mode) for u in range(v)]
        # open_path[u]: u is a sink, or has a successor w with comm[w] and open_path[w]
        open_path = [False] * v
        for u in range(v - 1, -1, -1):
            if not succs[u]:
                open_path[u] = True
            else:
                open_path[u] = any(comm[w] and open_path[w] for w in succs[u])
        for u in range(v):
            if open_path[u] and not comm[u]:
                edges.append((u, v))
        for u, w in edges:
            if w == v:
                succs[u].add(v)
    vertices = [vertex_from_gate(i, g, table) for i, g in enumerate(gates)]
    return OperationDag(vertices, edges, circuit.qubit_count)


# --- distillation pairing ---------------------------------------------------


def find_consumers(dag: OperationDag) -> dict[int, int]:
    """Map distillation vertex -> first later vertex that touches its magic qubits."""
    touch: dict[int, list[int]] = {}
    for v in dag.vertices:
        for q in v.qubits_acted:
            touch.setdefault(q, []).append(v.id)
    pairing = {}
    for d in dag.vertices:
        if not d.is_distillation:
            continue
        magic = d.initializes or d.qubits_acted
        users = [w for q in magic for w in touch.get(q, ()) if w > d.id]
        if not users:
            raise UnmatchedDistillation(f"distillation vertex {d.id} has no consumer")
        pairing[d.id] = min(users)
    return pairing


def pair_distillations(dag: OperationDag) -> OperationDag:
    """Insert each distillation at the position of the gate it feeds.

    Every predecessor P of a consumer G (other than G's own distillations)
    is rerouted to point at each distillation D feeding G, and D -> G is
    ensured.  Edges not entering a consumer are kept.
    """
    pairing = find_consumers(dag)
    if not pairing:
        return dag
    feeds: dict[int, list[int]] = {}
    for d, g in pairing.items():
        feeds.setdefault(g, []).append(d)
    edges = set(dag.edges)
    for g, ds in feeds.items():
        dset = set(ds)
        outer = [p for p in dag.preds[g] if p not in dset]
        for p in outer:
            edges.discard((p, g))
            for d in ds:
                edges.add((p, d))
        for d in ds:
            edges.add((d, g))
    paired = OperationDag(dag.vertices, edges, dag.qubit_count)
    paired.topological_order  # raises CycleDetected on a corrupt pairing
    return paired


# --- cache ------------------------------------------------------------------


def circuit_hash(circuit: Circuit, table: AvTable, mode: CommutationMode, method: str) -> str:
    h = hashlib.sha256()
    h.update(dumps_circuit(circuit).encode())
    h.update(json.dumps(table.to_dict(), sort_keys=True).encode())
    h.update(f"{CommutationMode(mode).value}:{method}".encode())
    return h.hexdigest()


class DagCache:
    """Content-addressed DAG store, in memory and optionally on disk."""

    def __init__(self, directory: str | Path | None = None):
        self.directory = Path(directory) if directory else None
        self._memory: dict[str, OperationDag] = {}
        if self.directory:
            self.directory.mkdir(parents=True, exist_ok=True)

    def get(
        self,
        circuit: Circuit,
        table: AvTable,
        mode: CommutationMode = CommutationMode.SUPPORT,
        method: str = "wire",
        paired: bool = True,
    ) -> OperationDag:
        key = circuit_hash(circuit, table, mode, method) + ("p" if paired else "")
        if key in self._memory:
            return self._memory[key]
        path = self.directory / f"{key}.pkl" if self.directory else None
        if path is not None and path.exists():
            dag = pickle.loads(path.read_bytes())
        else:
            dag = build_dag(circuit, table, mode, method)
            if paired:
                dag = pair_distillations(dag)
            if path is not None:
                tmp = path.with_suffix(".tmp")
                tmp.write_bytes(pickle.dumps(dag))
                tmp.replace(path)
        self._memory[key] = dag
        return dag
