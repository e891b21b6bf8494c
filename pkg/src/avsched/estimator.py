"""Hardware model and the analytic and block-scheduled resource estimates."""

from __future__ import annotations

import json
import math
import sys
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

from .dag import CommutationMode, DagCache, OperationDag
from .ir import AvTable, Circuit, total_av
from .scheduler import QoomError, Schedule, SchedulerConfig, greedy_schedule

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib


class SaturatedMemory(ValueError):
    """Memory qubits consume all resource-state throughput."""


@dataclass(frozen=True)
class HardwareParams:
    """Photonic machine parameters.

    ``calibration`` is the fraction of the raw resource-state throughput
    ``n_im * r_im`` that turns into logical blocks.  It scales every formula
    that divides by the throughput and the default qubit budget.  At 1.0
    the formulas are the bare ones.
    """

    n_im: float = 30
    r_im: float = 1e9
    l_delay: float = 2000.0
    c_fiber: float = 2e8
    p_f: float = 0.005
    alpha: float = 0.5
    reaction_time: float = 1.5e-5
    calibration: float = 1.0

    def __post_init__(self):
        for name in ("n_im", "r_im", "l_delay", "c_fiber", "alpha", "reaction_time", "calibration"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if not 0 < self.p_f <= 1:
            raise ValueError("p_f must lie in (0, 1]")

    @property
    def throughput(self) -> float:
        return self.calibration * self.n_im * self.r_im

    def with_(self, **changes) -> "HardwareParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_mapping(cls, raw: dict) -> "HardwareParams":
        known = {k: raw[k] for k in cls.__dataclass_fields__ if k in raw}
        unknown = set(raw) - set(known)
        if unknown:
            raise ValueError(f"unknown hardware fields: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in known.items()})

    @classmethod
    def load(cls, path: str | Path) -> "HardwareParams":
        path = Path(path)
        if path.suffix == ".toml":
            with path.open("rb") as fh:
                return cls.from_mapping(tomllib.load(fh))
        return cls.from_mapping(json.loads(path.read_text()))

    @classmethod
    def default(cls) -> "HardwareParams":
        text = resources.files("avsched.data").joinpath("hardware_default.json").read_text()
        return cls.from_mapping(json.loads(text))


# --- closed-form model ------------------------------------------------------


def logical_cycle_time(d: int, hw: HardwareParams) -> float:
    if d < 1:
        raise ValueError("code distance must be at least 1")
    return hw.l_delay * d / hw.c_fiber


def _memory_fraction(d: int, m: float, hw: HardwareParams) -> float:
    return m * d * d * hw.c_fiber / (hw.throughput * hw.l_delay)


def v_max(d: int, m: float, hw: HardwareParams) -> float:
    """Largest AV executable at distance ``d`` with ``m`` memory qubits."""
    if d < 1 or m < 0:
        raise ValueError("need d >= 1 and m >= 0")
    return (1.0 - _memory_fraction(d, m, hw)) * hw.p_f * 10.0 ** (hw.alpha * d / 2.0)


def comp_time(V: float, d: int, m: float, hw: HardwareParams) -> float:
    """Seconds to execute ``V`` blocks at distance ``d`` next to ``m`` memory qubits."""
    denom = hw.throughput - (hw.c_fiber / hw.l_delay) * m * d * d
    if denom <= 0:
        raise SaturatedMemory(f"memory of {m} qubits saturates throughput at d={d}")
    return V * d**3 / denom


def t_max(d: int, hw: HardwareParams) -> float:
    if d < 1:
        raise ValueError("code distance must be at least 1")
    return d**3 / hw.throughput * hw.p_f * 10.0 ** (hw.alpha * d / 2.0)


def total_cycles(n_p: int, n_cu: int, n_qft: int) -> int:
    return 2**n_p * n_cu + n_qft


def qubit_budget_model(hw: HardwareParams, d: int) -> int:
    """Logical qubits the machine supports at distance ``d``.

    Proportional to ``n_im * r_im * l_delay / (c_fiber * d^2)`` with
    ``hw.calibration`` as the constant.  This is a modeling knob.
    """
    if d < 1:
        raise ValueError("code distance must be at least 1")
    raw = hw.throughput * hw.l_delay / (hw.c_fiber * d * d)
    return max(0, int(math.floor(raw + 1e-9)))


def calibrate(hw: HardwareParams, qubits: int, d: int) -> HardwareParams:
    """Return ``hw`` with the calibration that yields ``qubits`` at distance ``d``."""
    bare = hw.n_im * hw.r_im * hw.l_delay / (hw.c_fiber * d * d)
    return hw.with_(calibration=qubits / bare)


def reference_hardware() -> HardwareParams:
    """Default machine calibrated so it offers 188 logical qubits at d=32."""
    return calibrate(HardwareParams.default(), 188, 32)


# --- analytic estimate ------------------------------------------------------


@dataclass(frozen=True)
class AnalyticEstimate:
    distance: int
    time_s: float
    volume: float
    memory: int
    status: str  # "ok" or "failure"
    runtime_volume: float | None = None
    v_max: float = float("nan")

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mode"] = "analytic"
        if not self.ok:
            d["d_delta_min"] = self.distance
        return d


def analytic_estimate(
    V: float,
    m_max: float,
    hw: HardwareParams,
    d_max: int = 100,
    runtime_volume: float | None = None,
) -> AnalyticEstimate:
    """Smallest distance whose V_max exceeds ``V``, with its completion time.

    ``runtime_volume`` (default ``V``) is the volume whose completion time is
    reported; it lets the caller check feasibility on one pass of a gadget
    set while timing every repetition.
    """
    if V < 0 or m_max < 0:
        raise ValueError("V and m_max must be non-negative")
    memory = math.ceil(1.2 * m_max - 1e-9)
    best_d, best_gap = -1, math.inf
    for d in range(1, d_max + 1):
        cap = v_max(d, memory, hw)
        if V < cap:
            tv = V if runtime_volume is None else runtime_volume
            return AnalyticEstimate(d, comp_time(tv, d, memory, hw), V, memory, "ok", runtime_volume, cap)
        gap = abs(V - cap)
        if gap < best_gap:
            best_d, best_gap = d, gap
    cap = v_max(best_d, memory, hw) if best_d > 0 else float("nan")
    return AnalyticEstimate(best_d, math.inf, V, memory, "failure", runtime_volume, cap)


# --- gadgets ----------------------------------------------------------------


@dataclass
class Gadget:
    name: str
    circuit: Circuit
    multiplicity: int = 1

    def __post_init__(self):
        if self.multiplicity < 1:
            raise ValueError("gadget multiplicity must be at least 1")


@dataclass
class GadgetSet:
    gadgets: list[Gadget]
    table: AvTable = field(default_factory=AvTable.default)
    n_p: int | None = None
    _cache: DagCache = field(default_factory=DagCache, repr=False, compare=False)

    def __iter__(self):
        return iter(self.gadgets)

    def __len__(self) -> int:
        return len(self.gadgets)

    def dag(self, gadget: Gadget) -> OperationDag:
        # Support-mode DAGs of generated gadgets use the linear wire builder;
        # its transitive closure equals the backward-search DAG.
        return self._cache.get(gadget.circuit, self.table, CommutationMode.SUPPORT, "wire", paired=True)

    def gadget_av(self, gadget: Gadget) -> int:
        return total_av(gadget.circuit, self.table)

    @property
    def pass_av(self) -> int:
        """AV of one pass through every gadget (multiplicities ignored)."""
        return sum(self.gadget_av(g) for g in self.gadgets)

    @property
    def total_av(self) -> int:
        return sum(g.multiplicity * self.gadget_av(g) for g in self.gadgets)

    @property
    def m_max(self) -> int:
        return max((g.circuit.data_high_water() for g in self.gadgets), default=0)


# --- scheduled estimate -----------------------------------------------------


@dataclass
class Attempt:
    distance: int
    qubits: int
    outcome: str  # ok, qoom, too_slow
    cycles: int | None = None
    time_s: float | None = None
    t_max: float | None = None


@dataclass
class ScheduledEstimate:
    distance: int
    cycles: int
    time_s: float
    total_qubits: int
    per_gadget: list[dict]
    status: str
    attempts: list[Attempt] = field(default_factory=list)
    seed_distance: int | None = None
    schedules: dict[str, Schedule] = field(default_factory=dict, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> dict:
        return {
            "mode": "scheduled",
            "distance": self.distance,
            "cycles": self.cycles,
            "time_s": self.time_s,
            "total_qubits": self.total_qubits,
            "status": self.status,
            "seed_distance": self.seed_distance,
            "per_gadget": self.per_gadget,
            "attempts": [asdict(a) for a in self.attempts],
        }


def schedule_gadgets(gadgets: GadgetSet, config: SchedulerConfig) -> dict[str, Schedule]:
    """Schedule every gadget on one machine; each gadget gets its own RNG stream."""
    out = {}
    for i, g in enumerate(gadgets.gadgets):
        cfg = replace(config, stream=i)
        out[g.name] = greedy_schedule(gadgets.dag(g), cfg)
    return out


def scheduled_estimate(
    gadgets: GadgetSet,
    hw: HardwareParams,
    qubit_budget: Callable[[int], int] | None = None,
    seed: int = 0,
    config: SchedulerConfig | None = None,
    d_max: int = 100,
    volume_convention: str = "per_pass",
    descend_on_success: bool = True,
    start_distance: int | None = None,
    stop_distance: int | None = None,
) -> ScheduledEstimate:
    """Distance search driven by scheduled cycle counts.

    Starts from the analytic distance.  A QOOM lowers the distance (more
    qubits), a run slower than ``t_max`` raises it.  With
    ``descend_on_success`` a successful distance is followed by an attempt one
    lower, so the search keeps shrinking the distance while it works.  Every
    distance is tried at most once.

    ``volume_convention="per_pass"`` checks feasibility on one pass through
    the gadgets (cycle and AV sums with multiplicity 1) while the reported
    runtime always includes multiplicities; ``"total"`` checks the full run.
    """
    if volume_convention not in ("per_pass", "total"):
        raise ValueError(f"unknown volume convention {volume_convention!r}")
    budget = qubit_budget or (lambda d: qubit_budget_model(hw, d))
    base = config or SchedulerConfig(1, rng_seed=seed)
    base = replace(base, rng_seed=seed)

    if start_distance is None:
        pass_av, full_av = gadgets.pass_av, gadgets.total_av
        are = analytic_estimate(pass_av if volume_convention == "per_pass" else full_av, gadgets.m_max, hw, d_max)
        d = are.distance
    else:
        d = start_distance
    seed_d = d
    seen: set[int] = set()
    attempts: list[Attempt] = []
    best: ScheduledEstimate | None = None
    by_budget: dict[int, dict[str, Schedule] | None] = {}

    while 1 <= d <= d_max and d not in seen:
        seen.add(d)
        n = budget(d)
        if n < 1:
            attempts.append(Attempt(d, n, "qoom"))
            d -= 1
            continue
        if n not in by_budget:
            try:
                by_budget[n] = schedule_gadgets(gadgets, base.with_qubits(n))
            except QoomError:
                by_budget[n] = None
        scheds = by_budget[n]
        if scheds is None:
            attempts.append(Attempt(d, n, "qoom"))
            d -= 1
            continue
        cycles = sum(g.multiplicity * scheds[g.name].n_cycles for g in gadgets.gadgets)
        pass_cycles = sum(scheds[g.name].n_cycles for g in gadgets.gadgets)
        t = cycles * logical_cycle_time(d, hw)
        t_check = (pass_cycles if volume_convention == "per_pass" else cycles) * logical_cycle_time(d, hw)
        limit = t_max(d, hw)
        if t_check > limit:
            attempts.append(Attempt(d, n, "too_slow", cycles, t, limit))
            d += 1
            continue
        attempts.append(Attempt(d, n, "ok", cycles, t, limit))
        if best is None or t < best.time_s:
            per = [
                {
                    "name": g.name,
                    "multiplicity": g.multiplicity,
                    "cycles": scheds[g.name].n_cycles,
                    "av": gadgets.gadget_av(g),
                }
                for g in gadgets.gadgets
            ]
            best = ScheduledEstimate(d, cycles, t, n, per, "ok", schedules=scheds)
        if not descend_on_success:
            break
        if stop_distance is not None and d <= stop_distance:
            break
        d -= 1

    if best is None:
        return ScheduledEstimate(-1, 0, math.inf, 0, [], "failure", attempts, seed_d)
    best.attempts = attempts
    best.seed_distance = seed_d
    return best
