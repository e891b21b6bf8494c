"""Greedy block scheduling of an operation DAG into logical cycles.

Every cycle is censused into five roles that always add up to the machine
size:

* workspace: AV blocks executed by the gates placed in the cycle
* data: live circuit qubits, magic states and idle |Y> states that are not
  engaged by a gate this cycle (an engaged data qubit is the input of one of
  its gate's blocks, so it is counted as workspace)
* bridge: Bell-pair halves paid for sharing a qubit between two gates
* stale: states waiting for a reactive measurement basis
* unused: everything left over
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from bisect import insort
from dataclasses import asdict, dataclass, field
from enum import Enum
import numpy as np

from .dag import OperationDag, OpVertex

CATALYST = -1  # virtual qubit label of the |Ybar> catalyst


class BridgingCharge(str, Enum):
    PER_OVERLAP = "overlap"
    PER_KAPPA = "kappa"


class YMethod(str, Enum):
    METHOD1 = "1"
    METHOD2 = "2"


class QoomError(RuntimeError):
    """Quantum out-of-memory: no remaining vertex can ever be placed."""

    def __init__(self, cycle: int, vertex: int, deficit: int, total_qubits: int):
        self.cycle = cycle
        self.vertex = vertex
        self.deficit = deficit
        self.total_qubits = total_qubits
        super().__init__(
            f"QOOM at cycle {cycle}: vertex {vertex} is short by {deficit} qubits on a {total_qubits}-qubit machine"
        )


class ReactionDominatedWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SchedulerConfig:
    total_qubits: int
    bridging_charge: BridgingCharge = BridgingCharge.PER_OVERLAP
    y_method: YMethod = YMethod.METHOD2
    rng_seed: int = 0
    reaction_layer_threshold: int = 20
    # "engaged": live data qubits engaged by a gate join its workspace blocks.
    # "none": no credit, every gate must fit in the unused budget.
    credit: str = "engaged"
    preload_inputs: bool = True
    stream: int = 0  # sub-stream of rng_seed, one per gadget

    def __post_init__(self):
        object.__setattr__(self, "bridging_charge", BridgingCharge(self.bridging_charge))
        object.__setattr__(self, "y_method", YMethod(str(getattr(self.y_method, "value", self.y_method))))
        if self.total_qubits < 1:
            raise ValueError("total_qubits must be at least 1")
        if self.reaction_layer_threshold < 1:
            raise ValueError("reaction_layer_threshold must be at least 1")
        if self.credit not in ("engaged", "none"):
            raise ValueError(f"unknown credit mode {self.credit!r}")

    def with_qubits(self, n: int) -> "SchedulerConfig":
        return SchedulerConfig(
            n,
            self.bridging_charge,
            self.y_method,
            self.rng_seed,
            self.reaction_layer_threshold,
            self.credit,
            self.preload_inputs,
            self.stream,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bridging_charge"] = self.bridging_charge.value
        d["y_method"] = self.y_method.value
        return d


@dataclass(frozen=True)
class CycleLedger:
    cycle: int
    workspace: int
    data: int
    bridge: int
    stale: int
    unused: int
    idle_y: int
    reaction_layers: int
    scheduled: tuple[int, ...]
    stale_produced: int = 0

    @property
    def total(self) -> int:
        return self.workspace + self.data + self.bridge + self.stale + self.unused


@dataclass(frozen=True)
class YEvent:
    cycle: int  # cycle in which the draw is resolved
    vertex: int
    seed_path: tuple[int, int, int]  # (seed, stream, cycle)
    draw: float
    needed: bool


@dataclass
class Schedule:
    cycles: list[CycleLedger]
    vertex_to_cycle: dict[int, int]
    y_events: list[YEvent]
    config: SchedulerConfig
    warnings: list[str] = field(default_factory=list)

    @property
    def n_cycles(self) -> int:
        return len(self.cycles)

    @property
    def total_qubits(self) -> int:
        return self.config.total_qubits

    @property
    def peak_reaction_layers(self) -> int:
        return max((c.reaction_layers for c in self.cycles), default=0)

    def mean_fraction(self, role: str) -> float:
        if not self.cycles:
            return 0.0
        return float(np.mean([getattr(c, role) for c in self.cycles])) / self.total_qubits

    @property
    def mean_bss_fraction(self) -> float:
        if not self.cycles:
            return 0.0
        return float(np.mean([c.bridge + c.stale for c in self.cycles])) / self.total_qubits

    def ledger_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(LEDGER_COLUMNS)
        for c in self.cycles:
            writer.writerow([getattr(c, k) for k in LEDGER_COLUMNS])
        return buf.getvalue()

    def summary(self) -> dict:
        n = max(self.n_cycles, 1)
        return {
            "cycles": self.n_cycles,
            "total_qubits": self.total_qubits,
            "workspace_blocks": sum(c.workspace for c in self.cycles),
            "bridge_blocks": sum(c.bridge for c in self.cycles),
            "stale_blocks": sum(c.stale for c in self.cycles),
            "unused_blocks": sum(c.unused for c in self.cycles),
            "data_blocks": sum(c.data for c in self.cycles),
            "idle_y_blocks": sum(c.idle_y for c in self.cycles),
            "mean_bss_fraction": self.mean_bss_fraction,
            "mean_unused_fraction": sum(c.unused for c in self.cycles) / (n * self.total_qubits),
            "mean_data_fraction": sum(c.data for c in self.cycles) / (n * self.total_qubits),
            "mean_workspace": sum(c.workspace for c in self.cycles) / n,
            "peak_reaction_layers": self.peak_reaction_layers,
            "y_draws": len(self.y_events),
            "seed": self.config.rng_seed,
            "config": self.config.to_dict(),
            "warnings": list(self.warnings),
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


LEDGER_COLUMNS = ("cycle", "workspace", "data", "bridge", "stale", "unused", "idle_y", "reaction_layers")


def _qa(v: OpVertex) -> frozenset[int]:
    return v.qubits_acted | {CATALYST} if v.y_catalyst > 0 else v.qubits_acted


def _initial_data(dag: OperationDag, preload: bool) -> set[int]:
    data: set[int] = set()
    if preload:
        created: set[int] = set()
        for v in dag.vertices:
            created |= v.initializes
        for v in dag.vertices:
            data |= v.qubits_acted - created
        if dag.qubit_count is not None:
            data |= set(range(dag.qubit_count)) - created
    if any(v.y_catalyst > 0 for v in dag.vertices):
        data.add(CATALYST)
    return data


def _admissible(vert, q, data, produced, reactive_y, pending, y_stock, method1, total) -> bool:
    """Would placing ``vert`` keep the next two cycles within the machine?

    The bound is worst case: every pending |Y> draw persists a state and
    every reactive vertex of this cycle persists one in the cycle after.
    """
    after = len(data) + len(q - data) - len(vert.qubits_measured)
    r = reactive_y + (1 if vert.y_prob > 0 else 0)
    if method1:
        return after + produced + vert.stale + max(y_stock, r) <= total
    nxt = after + produced + vert.stale + len(pending)
    return max(nxt, after + r) <= total


def greedy_schedule(dag: OperationDag, config: SchedulerConfig) -> Schedule:
    """Place every vertex of ``dag`` into a logical cycle.

    Within a cycle the ready list is swept in priority order (most
    descendants first, then source order).  A sweep that places nothing
    raises the allowed overlap kappa; kappa jumps straight to the next
    value at which some ready vertex becomes placeable, which is the same
    outcome as stepping through the values one by one.
    """
    total = config.total_qubits
    per_kappa = config.bridging_charge is BridgingCharge.PER_KAPPA
    credit_on = config.credit == "engaged"
    method1 = config.y_method is YMethod.METHOD1
    verts = dag.vertices
    n = len(verts)
    desc = dag.descendant_counts
    qa = [_qa(v) for v in verts]

    waiting = [len(p) for p in dag.preds]
    ready: list[tuple[int, int]] = sorted((-desc[i], i) for i in range(n) if waiting[i] == 0)
    data = _initial_data(dag, config.preload_inputs)
    cycle_of: dict[int, int] = {}
    ledgers: list[CycleLedger] = []
    events: list[YEvent] = []
    notes: list[str] = []

    stale_next = 0  # produced last cycle, sits in this cycle
    persisted_next = 0  # Method 2: states persisted for a pending |Y> correction
    pending_flips: list[int] = []  # reactive vertices from the previous cycle
    y_stock = 0  # Method 1 idle |Y> states
    y_prepared = 0  # Method 1 states made last cycle, idle from this cycle on
    k = 0
    # Stale states left by the final cycle resolve after the gadget ends and
    # add no cycle of their own.
    while ready:
        stale_in = stale_next + persisted_next
        persisted_next = 0
        y_stock += y_prepared
        y_prepared = 0

        d0 = data
        data_count = len(d0) + y_stock
        budget = total - data_count - stale_in
        if budget < 0:
            blocker = ready[0][1] if ready else -1
            raise QoomError(k, blocker, -budget, total)
        unused = budget
        engaged: set[int] = set()
        live_q: set[int] = set()
        placed: list[int] = []
        ws = bridge = 0
        det_y_used = False
        rdepth: dict[int, int] = {}
        new_data = set(d0)
        produced = 0
        reactive_y = 0

        kappa = 0
        while ready and kappa <= total:
            added = False
            newly_ready: list[tuple[int, int]] = []
            survivors: list[tuple[int, int]] = []
            best_next = None
            for key in ready:
                v = key[1]
                vert = verts[v]
                if vert.av == 0:
                    charge, credit, ok = 0, 0, True
                else:
                    q = qa[v]
                    overlap = len(q & live_q)
                    fresh = q - live_q
                    credit = len((fresh & d0) - engaged) if credit_on else 0
                    room = unused + credit
                    det = 1 if vert.y_deterministic and not det_y_used else 0
                    if per_kappa:
                        charge = kappa + det
                        ok = overlap <= kappa and vert.av + charge <= room
                        if not ok:
                            lo = max(overlap, kappa + 1)
                            if vert.av + lo + det <= room:
                                best_next = lo if best_next is None else min(best_next, lo)
                    else:
                        charge = overlap + det
                        ok = overlap <= kappa and vert.av + charge <= room
                        if not ok and overlap > kappa and vert.av + charge <= room:
                            best_next = overlap if best_next is None else min(best_next, overlap)
                if ok:
                    ok = _admissible(vert, qa[v], new_data, produced, reactive_y, pending_flips, y_stock, method1, total)
                if not ok:
                    survivors.append(key)
                    continue
                # place v
                added = True
                placed.append(v)
                cycle_of[v] = k
                if vert.av:
                    unused += credit - vert.av - charge
                    ws += vert.av
                    bridge += charge
                    engaged |= qa[v] & d0
                    live_q |= qa[v]
                    if vert.y_deterministic:
                        det_y_used = True
                live_q -= vert.qubits_measured
                new_data |= qa[v]
                new_data -= vert.qubits_measured
                produced += vert.stale
                if vert.y_prob > 0:
                    reactive_y += 1
                depth = max((rdepth[u] for u in dag.preds[v] if u in rdepth), default=0)
                rdepth[v] = depth + (1 if vert.reactive else 0)
                for w in dag.succs[v]:
                    waiting[w] -= 1
                    if waiting[w] == 0:
                        newly_ready.append((-desc[w], w))
            ready = survivors
            for key in newly_ready:
                insort(ready, key)
            if not added:
                if best_next is None:
                    break
                kappa = best_next
        data = new_data
        data_after_engaged = data_count - (len(engaged) if credit_on else 0)
        layers = max(rdepth.values(), default=0)
        if layers > config.reaction_layer_threshold:
            msg = f"cycle {k}: {layers} reaction layers exceed threshold {config.reaction_layer_threshold}"
            notes.append(msg)
            warnings.warn(msg, ReactionDominatedWarning, stacklevel=2)

        # resolve |Y> draws for the previous cycle's reactive vertices
        consumed = 0
        if pending_flips:
            rng = np.random.default_rng(np.random.SeedSequence(config.rng_seed, spawn_key=(config.stream, k)))
            draws = rng.random(len(pending_flips))
            for v, x in zip(pending_flips, draws):
                needed = bool(x < verts[v].y_prob)
                events.append(YEvent(k, v, (config.rng_seed, config.stream, k), float(x), needed))
                if needed:
                    if method1:
                        consumed += 1
                    else:
                        persisted_next += 1
        idle_y = y_stock if method1 else 0
        y_stock -= consumed
        reactive_now = [v for v in placed if verts[v].y_prob > 0]
        if method1 and reactive_now:
            y_prepared = max(0, len(reactive_now) - y_stock)
        pending_flips = reactive_now

        ledgers.append(
            CycleLedger(
                cycle=k,
                workspace=ws,
                data=data_after_engaged,
                bridge=bridge,
                stale=stale_in,
                unused=unused,
                idle_y=idle_y,
                reaction_layers=layers,
                scheduled=tuple(sorted(placed)),
                stale_produced=produced,
            )
        )
        stale_next = produced

        if not placed and ready and not (stale_in or persisted_next or consumed):
            if y_stock or y_prepared:
                # stalled on memory: idle |Y> states are disposable
                notes.append(f"cycle {k}: discarded {y_stock + y_prepared} idle |Y> states")
                y_stock = y_prepared = 0
                k += 1
                continue
            # nothing will change next cycle either
            v = ready[0][1]
            short = verts[v].av - budget - (len(qa[v] & d0) if credit_on else 0)
            raise QoomError(k, v, max(short, 1), total)
        k += 1

    return Schedule(ledgers, cycle_of, events, config, notes)


def cycle_reaction_layers(cycle: CycleLedger, dag: OperationDag) -> int:
    """Longest chain of reactive vertices inside one cycle."""
    members = set(cycle.scheduled)
    depth: dict[int, int] = {}

    def visit(v: int) -> int:
        if v not in depth:
            below = [visit(u) for u in dag.preds[v] if u in members]
            depth[v] = max(below, default=0) + (1 if dag.vertices[v].reactive else 0)
        return depth[v]

    return max((visit(v) for v in members), default=0)


# --- validation -------------------------------------------------------------


@dataclass(frozen=True)
class ScheduleViolation:
    detail: str

    @property
    def name(self) -> str:
        return type(self).__name__


class MissingVertex(ScheduleViolation):
    pass


class DuplicateVertex(ScheduleViolation):
    pass


class PrecedenceViolation(ScheduleViolation):
    pass


class VolumeMismatch(ScheduleViolation):
    pass


class RoleSumMismatch(ScheduleViolation):
    pass


class NegativeRole(ScheduleViolation):
    pass


def validate_schedule(schedule: Schedule, dag: OperationDag, table=None) -> list[ScheduleViolation]:
    """Check AV conservation, coverage, precedence and per-cycle role sums.

    ``table`` is accepted for interface symmetry; vertex AVs already come
    from the table the DAG was built with.
    """
    out: list[ScheduleViolation] = []
    ws = sum(c.workspace for c in schedule.cycles)
    if ws != dag.total_av:
        out.append(VolumeMismatch(f"workspace {ws} != circuit AV {dag.total_av}"))
    seen: dict[int, int] = {}
    for c in schedule.cycles:
        for v in c.scheduled:
            if v in seen:
                out.append(DuplicateVertex(f"vertex {v} in cycles {seen[v]} and {c.cycle}"))
            seen[v] = c.cycle
        if c.total != schedule.total_qubits:
            out.append(RoleSumMismatch(f"cycle {c.cycle}: roles sum to {c.total}"))
        for role in ("workspace", "data", "bridge", "stale", "unused", "idle_y"):
            if getattr(c, role) < 0:
                out.append(NegativeRole(f"cycle {c.cycle}: {role} = {getattr(c, role)}"))
    for v in range(len(dag)):
        if v not in seen:
            out.append(MissingVertex(f"vertex {v} never scheduled"))
    for u, v in dag.edges:
        if u in seen and v in seen and seen[u] > seen[v]:
            out.append(PrecedenceViolation(f"edge {u}->{v} runs backwards ({seen[u]} > {seen[v]})"))
    return out


# --- reporting --------------------------------------------------------------

ROLES = ("workspace", "data", "bridge", "stale", "unused", "idle_y", "reaction_layers")


def ledger_series(schedule: Schedule, window: int = 1) -> list[dict]:
    """One row per cycle with raw role counts and a trailing rolling mean.

    Smoothed columns carry a ``_avg`` suffix; the window shrinks at the start
    of the series.
    """
    if window < 1:
        raise ValueError("window must be at least 1")
    raw = {r: np.array([getattr(c, r) for c in schedule.cycles], dtype=float) for r in ROLES}
    smooth = {}
    for r, arr in raw.items():
        csum = np.concatenate([[0.0], np.cumsum(arr)])
        idx = np.arange(1, len(arr) + 1)
        lo = np.maximum(idx - window, 0)
        smooth[r] = (csum[idx] - csum[lo]) / (idx - lo) if len(arr) else arr
    rows = []
    for i, c in enumerate(schedule.cycles):
        row = {"cycle": c.cycle}
        for r in ROLES:
            row[r] = getattr(c, r)
            row[r + "_avg"] = float(smooth[r][i])
        rows.append(row)
    return rows


# --- exhaustive oracle ------------------------------------------------------


def exhaustive_schedule_oracle(dag: OperationDag, config: SchedulerConfig) -> int:
    """Minimum cycle count over all precedence-respecting assignments.

    Breadth-first search over (scheduled set, stale carried) states.  A
    cycle's vertex set is feasible when its aggregate AV plus per-shared-qubit
    bridges fits the budget left by data and stale qubits, with the same
    engaged-data credit the greedy scheduler grants.  Stochastic |Y> effects
    are ignored, so the result is a lower bound for the greedy scheduler.
    """
    n = len(dag)
    if n > 8:
        raise ValueError("oracle is limited to 8 vertices")
    if n == 0:
        return 0
    verts = dag.vertices
    qa = [_qa(v) for v in verts]
    pred_mask = [sum(1 << u for u in dag.preds[v]) for v in range(n)]
    base = frozenset(_initial_data(dag, config.preload_inputs))
    full = (1 << n) - 1
    credit_on = config.credit == "engaged"

    def data_after(mask: int) -> frozenset[int]:
        d = set(base)
        for v in range(n):
            if mask >> v & 1:
                d |= qa[v]
        for v in range(n):
            if mask >> v & 1:
                d -= verts[v].qubits_measured
        return frozenset(d)

    def cost(subset: int, d0: frozenset[int]) -> tuple[int, int]:
        av = charge = 0
        counts: dict[int, int] = {}
        for v in range(n):
            if subset >> v & 1 and verts[v].av:
                av += verts[v].av
                for q in qa[v]:
                    counts[q] = counts.get(q, 0) + 1
        charge = sum(c - 1 for c in counts.values() if c > 1)
        credit = len(set(counts) & d0) if credit_on else 0
        return av + charge - credit, sum(verts[v].stale for v in range(n) if subset >> v & 1)

    frontier = {(0, 0)}
    seen = set(frontier)
    cycles = 0
    while frontier:
        cycles += 1
        nxt = set()
        for mask, stale in frontier:
            d0 = data_after(mask)
            budget = config.total_qubits - len(d0) - stale
            if budget < 0:
                continue
            rest = full & ~mask
            sub = rest
            while True:
                # sub must be closed under predecessors given mask
                if all((pred_mask[v] & ~(mask | sub)) == 0 for v in range(n) if sub >> v & 1):
                    need, produced = cost(sub, d0)
                    if need <= budget:
                        if mask | sub == full:
                            return cycles
                        state = (mask | sub, produced)
                        if state not in seen:
                            seen.add(state)
                            nxt.add(state)
                if sub == 0:
                    break
                sub = (sub - 1) & rest
        frontier = nxt
    blocker = min(range(n), key=lambda v: -verts[v].av)
    raise QoomError(-1, blocker, verts[blocker].av, config.total_qubits)
