"""Post-scheduling analytics.

Bridge and stale-state (BSS) overhead fitting, machine-size sweeps,
reaction-layer profiles, utilization and the cost calculus of the two
reactive |Y> methods.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import spearmanr
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .estimator import (
    GadgetSet,
    HardwareParams,
    analytic_estimate,
    logical_cycle_time,
    qubit_budget_model,
    schedule_gadgets,
    t_max,
)
from .scheduler import QoomError, Schedule, SchedulerConfig, YMethod


class DegenerateFit(ValueError):
    """The rational-fit design matrix is rank deficient."""


class VolumeUnderflow(ValueError):
    """Circuit AV exceeds the spacetime volume it supposedly ran in."""


class SweepDataError(ValueError):
    """A sweep CSV is malformed."""


# --- rational fit -----------------------------------------------------------


@dataclass(frozen=True)
class FitResult:
    a: float
    b: float
    c: float
    r_squared: float
    degenerate: bool = False
    iterations: int = 0

    @property
    def asymptote(self) -> float:
        return self.a

    @property
    def asymptote_percent(self) -> float:
        return 100.0 * self.a

    def predict(self, x):
        x = np.asarray(x, dtype=float)
        return (self.a * x + self.b) / (x + self.c)

    def describe(self) -> str:
        return f"converges to {self.asymptote_percent:.1f}% of total qubits"

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "c": self.c, "r_squared": self.r_squared, "asymptote_percent": self.asymptote_percent}


def _r_squared(y: np.ndarray, pred: np.ndarray) -> float:
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0 if ss_res <= 1e-30 else 0.0
    return max(0.0, 1.0 - ss_res / ss_tot)


class RationalFit(RegressorMixin, BaseEstimator):
    """Least-squares fit of ``y = (a x + b) / (x + c)``.

    A linearized solve of ``y x = a x + b - c y`` seeds Gauss-Newton on the
    true residuals.  Constant data is representable by ``a = y`` and
    ``b = c = 0`` and is flagged in ``degenerate_``.
    """

    def __init__(self, max_iter: int = 100, tol: float = 1e-12):
        self.max_iter = max_iter
        self.tol = tol

    @staticmethod
    def _model(p, x):
        a, b, c = p
        return (a * x + b) / (x + c)

    def fit(self, X, y):
        x = np.asarray(X, dtype=float).reshape(-1)
        y = np.asarray(y, dtype=float).reshape(-1)
        if x.shape != y.shape:
            raise ValueError("X and y have different lengths")
        if len(x) < 4:
            raise DegenerateFit("need at least 4 points")
        if len(np.unique(x)) != len(x):
            raise DegenerateFit("x values must be distinct")

        self.degenerate_ = False
        if np.ptp(y) == 0.0:
            self.coef_ = np.array([y[0], 0.0, 0.0])
            self.degenerate_ = True
            self.n_iter_ = 0
            self.r_squared_ = 1.0
            return self

        design = np.column_stack([x, np.ones_like(x), -y])
        if np.linalg.matrix_rank(design) < 3:
            raise DegenerateFit("linearized design matrix is rank deficient")
        p, *_ = np.linalg.lstsq(design, x * y, rcond=None)

        it = 0
        for it in range(1, self.max_iter + 1):
            a, b, c = p
            den = x + c
            if np.any(den == 0):
                raise DegenerateFit("pole of the fitted function inside the data range")
            r = y - self._model(p, x)
            J = np.column_stack([x / den, 1.0 / den, -(a * x + b) / den**2])
            if np.linalg.matrix_rank(J) < 3:
                raise DegenerateFit("Jacobian is rank deficient")
            step, *_ = np.linalg.lstsq(J, r, rcond=None)
            p_new = p + step
            if np.linalg.norm(step) <= self.tol * max(np.linalg.norm(p_new), 1e-300):
                p = p_new
                break
            p = p_new
        if np.any(x + p[2] == 0):
            raise DegenerateFit("pole of the fitted function inside the data range")
        self.coef_ = p
        self.n_iter_ = it
        self.r_squared_ = _r_squared(y, self._model(p, x))
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        x = np.asarray(X, dtype=float).reshape(-1)
        return self._model(self.coef_, x)

    def result(self) -> FitResult:
        check_is_fitted(self, "coef_")
        a, b, c = (float(v) for v in self.coef_)
        return FitResult(a, b, c, float(self.r_squared_), bool(self.degenerate_), int(self.n_iter_))


def fit_rational(points: Iterable[tuple[float, float]], max_iter: int = 100, tol: float = 1e-12) -> FitResult:
    pts = list(points)
    if len(pts) < 4:
        raise DegenerateFit("need at least 4 points")
    x, y = zip(*pts)
    return RationalFit(max_iter, tol).fit(x, y).result()


# --- |Y> method calculus ------------------------------------------------------


def f_overhead(R: int) -> float:
    """Expected extra blocks of a Method-2 stale state with ``R`` reaction layers."""
    if R < 0:
        raise ValueError("R must be non-negative")
    return (2**R - 1) / 2


def method1_cost(n_y: float, t_idle_mean: float) -> float:
    """Blocks spent by Method 1 on ``n_y`` pre-provisioned |Y> states."""
    if n_y < 0 or t_idle_mean < 0:
        raise ValueError("inputs must be non-negative")
    return (1.0 + t_idle_mean / 2.0) * n_y


def method_threshold(R: int, t_idle_mean: float | None = None) -> YMethod:
    """Cheaper reactive-|Y> method per stale state.

    With ``t_idle_mean=None`` the answer must hold for every idle time,
    which is Method 2 iff ``R <= log2(3)``.
    """
    if t_idle_mean is None:
        return YMethod.METHOD2 if R <= math.log2(3) else YMethod.METHOD1
    return YMethod.METHOD2 if f_overhead(R) <= method1_cost(1, t_idle_mean) else YMethod.METHOD1


def utilization(total_qubits: int, cycles: int, circuit_av: float) -> float:
    """Idle fraction of the spacetime volume."""
    volume = total_qubits * cycles
    if circuit_av > volume:
        raise VolumeUnderflow(f"AV {circuit_av} exceeds spacetime volume {volume}")
    if volume == 0:
        return 0.0
    return 1.0 - circuit_av / volume


# --- sweep points -----------------------------------------------------------


@dataclass(frozen=True)
class SweepPoint:
    total_qubits: int
    mean_bss_fraction: float
    mean_workspace: float
    runtime_s: float
    peak_reaction_layers: int
    status: str = "ok"
    distance: int = -1
    cycles: int = 0
    mean_unused_fraction: float = 0.0
    mean_data_fraction: float = 0.0
    n_im: float | None = None

    def __post_init__(self):
        if self.total_qubits < 0:
            raise ValueError("total_qubits must be non-negative")
        if self.status == "ok" and not 0.0 <= self.mean_bss_fraction <= 1.0:
            raise ValueError("mean_bss_fraction must lie in [0, 1]")

    @property
    def ok(self) -> bool:
        return self.status == "ok"


SWEEP_COLUMNS = (
    "total_qubits",
    "distance",
    "cycles",
    "runtime_s",
    "mean_bss_fraction",
    "mean_workspace",
    "peak_reaction_layers",
    "status",
)


def weighted_metrics(gadgets: GadgetSet, schedules: Mapping[str, Schedule]) -> dict:
    """Cycle-weighted means over a whole run, each gadget counted ``multiplicity`` times."""
    w = {g.name: g.multiplicity for g in gadgets.gadgets}
    n = sum(w[k] * s.n_cycles for k, s in schedules.items())
    if n == 0:
        return {"cycles": 0}
    total = next(iter(schedules.values())).total_qubits

    def mean(role):
        return sum(w[k] * sum(getattr(c, role) for c in s.cycles) for k, s in schedules.items()) / n

    bss = mean("bridge") + mean("stale")
    return {
        "cycles": n,
        "mean_workspace": mean("workspace"),
        "mean_bss_fraction": bss / total,
        "mean_unused_fraction": mean("unused") / total,
        "mean_data_fraction": mean("data") / total,
        "mean_memory_fraction": (mean("data") + bss) / total,
        "peak_reaction_layers": max(s.peak_reaction_layers for s in schedules.values()),
    }


def bss_series(
    schedules: Sequence[tuple[int, Schedule]],
    hw: HardwareParams | None = None,
    distance: int | None = None,
) -> list[SweepPoint]:
    """One point per schedule; runtime is cycles times the logical cycle time when ``hw`` and ``distance`` are given."""
    out = []
    for x, s in schedules:
        n = max(s.n_cycles, 1)
        runtime = s.n_cycles * logical_cycle_time(distance, hw) if hw is not None and distance else float("nan")
        out.append(
            SweepPoint(
                total_qubits=x,
                mean_bss_fraction=s.mean_bss_fraction,
                mean_workspace=sum(c.workspace for c in s.cycles) / n,
                runtime_s=runtime,
                peak_reaction_layers=s.peak_reaction_layers,
                distance=distance or -1,
                cycles=s.n_cycles,
                mean_unused_fraction=s.mean_fraction("unused"),
                mean_data_fraction=s.mean_fraction("data"),
            )
        )
    return out


def are_bss_allowance(m_max: float, total_qubits: float) -> float:
    """The analytic model's BSS share: 20% of the data high-water, as a fraction of the machine."""
    return 0.2 * m_max / total_qubits


def bss_trend(points: Sequence[SweepPoint]) -> float:
    """Spearman correlation of BSS fraction against machine size over successful points."""
    ok = [p for p in points if p.ok]
    if len(ok) < 2:
        return float("nan")
    rho = spearmanr([p.total_qubits for p in ok], [p.mean_bss_fraction for p in ok]).statistic
    return float(rho)


def sweep_point(
    gadgets: GadgetSet,
    hw: HardwareParams,
    seed: int = 0,
    config: SchedulerConfig | None = None,
    back_off: int = 2,
) -> SweepPoint:
    """Smallest workable distance in ``[d_ARE - back_off, d_ARE]`` for one machine.

    Distances are tried from smallest to largest; a QOOM or a run slower
    than ``t_max`` moves on to the next distance.  Feasibility uses one pass
    through the gadgets, runtime counts every repetition.
    """
    base = replace(config or SchedulerConfig(1), rng_seed=seed)
    are = analytic_estimate(gadgets.pass_av, gadgets.m_max, hw)
    if not are.ok:
        return SweepPoint(0, 0.0, 0.0, math.inf, 0, "are_infeasible", are.distance, n_im=hw.n_im)
    status, last_n, last_d = "qoom", 0, are.distance
    for d in range(max(1, are.distance - back_off), are.distance + 1):
        n = qubit_budget_model(hw, d)
        last_n, last_d = n, d
        if n < 1:
            status = "qoom"
            continue
        try:
            scheds = schedule_gadgets(gadgets, base.with_qubits(n))
        except QoomError:
            status = "qoom"
            continue
        pass_cycles = sum(s.n_cycles for s in scheds.values())
        if pass_cycles * logical_cycle_time(d, hw) > t_max(d, hw):
            status = "too_slow"
            continue
        m = weighted_metrics(gadgets, scheds)
        return SweepPoint(
            total_qubits=n,
            mean_bss_fraction=m["mean_bss_fraction"],
            mean_workspace=m["mean_workspace"],
            runtime_s=m["cycles"] * logical_cycle_time(d, hw),
            peak_reaction_layers=m["peak_reaction_layers"],
            status="ok",
            distance=d,
            cycles=m["cycles"],
            mean_unused_fraction=m["mean_unused_fraction"],
            mean_data_fraction=m["mean_data_fraction"],
            n_im=hw.n_im,
        )
    return SweepPoint(last_n, 0.0, 0.0, math.inf, 0, status, last_d, n_im=hw.n_im)


def _workers(workers: int | None) -> int:
    if workers is not None:
        return max(1, workers)
    try:
        return max(1, int(os.environ.get("AV_SCHED_THREADS", "1")))
    except ValueError:
        return 1


def sweep(
    gadgets: GadgetSet,
    hardware: Sequence[HardwareParams],
    seed: int = 0,
    config: SchedulerConfig | None = None,
    workers: int | None = None,
) -> list[SweepPoint]:
    """One :func:`sweep_point` per machine; points are independent and may run in parallel."""
    if not hardware:
        raise ValueError("hardware range is empty")
    n = _workers(workers)
    if n == 1 or len(hardware) == 1:
        return [sweep_point(gadgets, hw, seed, config) for hw in hardware]
    with ProcessPoolExecutor(max_workers=min(n, len(hardware))) as pool:
        futures = [pool.submit(sweep_point, gadgets, hw, seed, config) for hw in hardware]
        return [f.result() for f in futures]


def machine_range(hw: HardwareParams, n_im_values: Iterable[float]) -> list[HardwareParams]:
    return [hw.with_(n_im=v) for v in n_im_values]


# --- reaction-layer studies -----------------------------------------------------


def reaction_layer_profile(
    gadgets: GadgetSet,
    qubit_counts: Iterable[int],
    seed: int = 0,
    config: SchedulerConfig | None = None,
) -> list[tuple[int, int | None]]:
    """Peak reaction layers over all gadgets per machine size (None on QOOM)."""
    base = replace(config or SchedulerConfig(1), rng_seed=seed)
    out = []
    for n in qubit_counts:
        try:
            scheds = schedule_gadgets(gadgets, base.with_qubits(n))
        except QoomError:
            out.append((n, None))
            continue
        out.append((n, max(s.peak_reaction_layers for s in scheds.values())))
    return out


def step_positions(profile: Sequence[tuple[int, int | None]]) -> list[int]:
    """Machine sizes where the running maximum of the peak reaction layers rises."""
    pts = [(x, r) for x, r in profile if r is not None]
    out = []
    best = None
    for x, r in pts:
        if best is not None and r > best:
            out.append(x)
        best = r if best is None else max(best, r)
    return out


def step_spacing(profile: Sequence[tuple[int, int | None]]) -> list[int]:
    pos = step_positions(profile)
    return [b - a for a, b in zip(pos, pos[1:])]


# --- serialization ----------------------------------------------------------


def sweep_csv(points: Sequence[SweepPoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for p in points:
        w.writerow([getattr(p, k) for k in SWEEP_COLUMNS])
    return buf.getvalue()


def read_sweep_csv(text: str) -> list[SweepPoint]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != SWEEP_COLUMNS:
        raise SweepDataError(f"expected header {','.join(SWEEP_COLUMNS)}")
    out = []
    for i, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(SWEEP_COLUMNS):
            raise SweepDataError(f"line {i}: expected {len(SWEEP_COLUMNS)} fields")
        rec = dict(zip(SWEEP_COLUMNS, row))
        try:
            out.append(
                SweepPoint(
                    total_qubits=int(rec["total_qubits"]),
                    distance=int(rec["distance"]),
                    cycles=int(rec["cycles"]),
                    runtime_s=float(rec["runtime_s"]),
                    mean_bss_fraction=float(rec["mean_bss_fraction"]),
                    mean_workspace=float(rec["mean_workspace"]),
                    peak_reaction_layers=int(rec["peak_reaction_layers"]),
                    status=rec["status"],
                )
            )
        except ValueError as exc:
            raise SweepDataError(f"line {i}: {exc}") from exc
    return out


def fit_json(result: FitResult) -> str:
    return json.dumps(result.to_dict(), indent=2, sort_keys=True)


def fit_sweep(points: Sequence[SweepPoint]) -> FitResult:
    """Fit the BSS fraction of successful points against machine size."""
    ok = [p for p in points if p.ok]
    return fit_rational((p.total_qubits, p.mean_bss_fraction) for p in ok)


def point_dict(p: SweepPoint) -> dict:
    return {f.name: getattr(p, f.name) for f in fields(p)}
