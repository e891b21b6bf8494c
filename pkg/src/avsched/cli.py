"""Command-line interface: ``avsched <command> [options]``.

Exit codes: 0 ok, 1 usage, 2 generation, 3 QOOM, 4 ARE infeasible,
5 data error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import warnings
from pathlib import Path

from . import __version__
from .analysis import (
    SweepDataError,
    DegenerateFit,
    fit_json,
    fit_sweep,
    machine_range,
    read_sweep_csv,
    sweep,
    sweep_csv,
    weighted_metrics,
)
from .circuits import IrreducibleGate, LatticeSpec, PhasePrecision, build_test_circuit
from .dag import CommutationMode, pair_distillations, reaction_depth, build_dag
from .estimator import (
    Gadget,
    GadgetSet,
    HardwareParams,
    analytic_estimate,
    reference_hardware,
    schedule_gadgets,
    scheduled_estimate,
)
from .ir import AvTable, UnknownGateKind, dumps_circuit, loads_circuit, total_av
from .scheduler import QoomError, ReactionDominatedWarning, SchedulerConfig

log = logging.getLogger("avsched")

EXIT_OK, EXIT_USAGE, EXIT_GEN, EXIT_QOOM, EXIT_ARE, EXIT_DATA = 0, 1, 2, 3, 4, 5
MANIFEST = "manifest.json"


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# --- helpers ----------------------------------------------------------------


def _config_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]


def _write(path: Path, text: str):
    """Atomic write: temp file then rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n"


def _table(args) -> AvTable:
    if not args.av_table:
        return AvTable.default()
    try:
        return AvTable.load(args.av_table)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(EXIT_DATA, f"cannot read AV table {args.av_table}: {exc}") from exc


def _hardware(args) -> HardwareParams:
    if not args.hardware:
        return reference_hardware()
    try:
        return HardwareParams.load(args.hardware)
    except (OSError, ValueError, TypeError) as exc:
        raise CliError(EXIT_DATA, f"cannot read hardware file {args.hardware}: {exc}") from exc


def _scheduler_config(args, qubits: int = 1) -> SchedulerConfig:
    return SchedulerConfig(qubits, bridging_charge=args.bridging, y_method=args.y_method, rng_seed=args.seed)


def _spec(args) -> LatticeSpec:
    try:
        return LatticeSpec(args.lattice)
    except ValueError as exc:
        raise CliError(EXIT_USAGE, str(exc)) from exc


def _generate(args) -> GadgetSet:
    spec = _spec(args)
    try:
        return build_test_circuit(spec, PhasePrecision(), seed=args.seed, table=_table(args))
    except (IrreducibleGate, UnknownGateKind, ValueError) as exc:
        raise CliError(EXIT_GEN, f"circuit generation failed: {exc}") from exc


def _gadgets(args) -> GadgetSet:
    """Gadgets from ``--manifest`` when given, else generated from ``--lattice``."""
    if not getattr(args, "manifest", None):
        return _generate(args)
    path = Path(args.manifest)
    if path.is_dir():
        path = path / MANIFEST
    try:
        man = json.loads(path.read_text())
        gadgets = [
            Gadget(g["name"], loads_circuit((path.parent / g["file"]).read_text()), int(g["multiplicity"]))
            for g in man["gadgets"]
        ]
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(EXIT_DATA, f"cannot read manifest {path}: {exc}") from exc
    return GadgetSet(gadgets, _table(args), man.get("n_p"))


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo(args) -> dict:
    return {
        "seed": args.seed,
        "y_method": args.y_method,
        "bridging": args.bridging,
        "lattice": args.lattice,
        "hardware": args.hardware,
        "av_table": args.av_table,
    }


def _range(text: str) -> list[float]:
    """``a:b:step`` (inclusive) or a comma list."""
    try:
        if ":" in text:
            a, b, step = (float(v) for v in text.split(":"))
            if step <= 0:
                raise ValueError
            n = int(round((b - a) / step)) + 1
            return [a + i * step for i in range(n)]
        return [float(v) for v in text.split(",") if v]
    except ValueError as exc:
        raise CliError(EXIT_USAGE, f"bad range {text!r}; use a:b:step or a,b,c") from exc


# --- commands ---------------------------------------------------------------


def cmd_gen(args) -> int:
    gs = _generate(args)
    out = _out(args)
    entries = []
    for g in gs.gadgets:
        fname = f"{g.name}.circ"
        _write(out / fname, dumps_circuit(g.circuit))
        entries.append({"name": g.name, "file": fname, "multiplicity": g.multiplicity, "av": gs.gadget_av(g)})
        print(f"{g.name}: {len(g.circuit.gates)} gates, AV {gs.gadget_av(g)}, multiplicity {g.multiplicity}")
    man = {"lattice": args.lattice, "n_p": gs.n_p, "m_max": gs.m_max, "gadgets": entries, **_echo(args)}
    man["config_hash"] = _config_hash(man)
    _write(out / MANIFEST, _json(man))
    return EXIT_OK


def cmd_dag(args) -> int:
    gs = _gadgets(args)
    out = _out(args)
    mode = CommutationMode(args.mode)
    summary = {}
    for g in gs.gadgets:
        dag = build_dag(g.circuit, gs.table, mode, method="wire" if mode is CommutationMode.SUPPORT else "backward")
        dag = pair_distillations(dag)
        _write(out / f"{g.name}.dag.txt", dag.to_text())
        summary[g.name] = {"vertices": len(dag.vertices), "edges": len(dag.edges), "reaction_depth": reaction_depth(dag)}
    body = {"mode": mode.value, "gadgets": summary, **_echo(args)}
    body["config_hash"] = _config_hash(body)
    _write(out / "dag_summary.json", _json(body))
    print(_json(summary), end="")
    return EXIT_OK


def cmd_schedule(args) -> int:
    gs = _gadgets(args)
    out = _out(args)
    cfg = _scheduler_config(args, args.qubits)
    try:
        scheds = schedule_gadgets(gs, cfg)
    except QoomError as exc:
        _write(out / "schedule.json", _json({"status": "qoom", "error": str(exc), **_echo(args)}))
        print(exc, file=sys.stderr)
        return EXIT_QOOM
    for name, s in scheds.items():
        _write(out / f"{name}.ledger.csv", s.ledger_csv())
    body = {
        "status": "ok",
        "total_qubits": args.qubits,
        "gadgets": {name: s.summary() for name, s in scheds.items()},
        "overall": weighted_metrics(gs, scheds),
        **_echo(args),
    }
    body["config_hash"] = _config_hash(_echo(args) | {"qubits": args.qubits})
    _write(out / "schedule.json", _json(body))
    print(_json(body["overall"]), end="")
    return EXIT_OK


def cmd_estimate(args) -> int:
    gs = _gadgets(args)
    hw = _hardware(args)
    out = _out(args)
    echo = _echo(args) | {"hardware_params": hw.to_dict(), "d_max": args.d_max}
    echo["config_hash"] = _config_hash(echo)
    if args.mode == "analytic":
        est = analytic_estimate(gs.pass_av, gs.m_max, hw, args.d_max, runtime_volume=gs.total_av)
        body = est.to_dict() | echo
        _write(out / "estimate_analytic.json", _json(body))
        print(_json(est.to_dict()), end="")
        return EXIT_OK if est.ok else EXIT_ARE
    est = scheduled_estimate(gs, hw, seed=args.seed, config=_scheduler_config(args), d_max=args.d_max)
    body = est.to_dict() | echo
    if est.ok:
        body["metrics"] = weighted_metrics(gs, est.schedules)
        for name, s in est.schedules.items():
            _write(out / f"{name}.ledger.csv", s.ledger_csv())
    _write(out / "estimate_scheduled.json", _json(body))
    print(_json(est.to_dict()), end="")
    return EXIT_OK if est.ok else EXIT_QOOM


def cmd_sweep(args) -> int:
    gs = _gadgets(args)
    hw = _hardware(args)
    out = _out(args)
    machines = machine_range(hw, _range(args.n_im))
    pts = sweep(gs, machines, seed=args.seed, config=_scheduler_config(args))
    _write(out / "sweep.csv", sweep_csv(pts))
    echo = _echo(args) | {"n_im": args.n_im}
    _write(out / "sweep_meta.json", _json(echo | {"config_hash": _config_hash(echo)}))
    print(sweep_csv(pts), end="")
    return EXIT_OK


def cmd_fit(args) -> int:
    try:
        pts = read_sweep_csv(Path(args.sweep).read_text())
        res = fit_sweep(pts)
    except OSError as exc:
        raise CliError(EXIT_DATA, f"cannot read {args.sweep}: {exc}") from exc
    except (SweepDataError, DegenerateFit) as exc:
        raise CliError(EXIT_DATA, f"malformed sweep data: {exc}") from exc
    text = fit_json(res)
    if args.out:
        _write(_out(args) / "fit.json", text + "\n")
    print(text)
    return EXIT_OK


def cmd_report(args) -> int:
    run = Path(args.run)
    try:
        sched = json.loads((run / "estimate_scheduled.json").read_text())
        analytic_path = run / "estimate_analytic.json"
        analytic = json.loads(analytic_path.read_text()) if analytic_path.exists() else None
    except (OSError, ValueError) as exc:
        raise CliError(EXIT_DATA, f"cannot read estimates in {run}: {exc}") from exc
    m = sched.get("metrics", {})
    table = {
        "logical qubits": sched.get("total_qubits"),
        "time to completion (s)": sched.get("time_s"),
        "avg bridging + stale (% of total qubits)": 100 * m.get("mean_bss_fraction", float("nan")),
        "code distance": sched.get("distance"),
        "avg memory usage (% of total qubits)": 100 * m.get("mean_memory_fraction", float("nan")),
        "avg unused qubits (% of total qubits)": 100 * m.get("mean_unused_fraction", float("nan")),
        "peak reaction layers": m.get("peak_reaction_layers"),
    }
    body = {"scheduler": table, "seed": sched.get("seed"), "config_hash": sched.get("config_hash")}
    if analytic:
        mem = analytic.get("memory", 0)
        body["analytic"] = {
            "code distance": analytic.get("distance"),
            "time to completion (s)": analytic.get("time_s"),
            "memory qubits": mem,
        }
        if analytic.get("time_s") and sched.get("time_s"):
            body["speedup"] = analytic["time_s"] / sched["time_s"]
    _write((Path(args.out) if args.out else run) / "report.json", _json(body))
    print(_json(body), end="")
    return EXIT_OK


# --- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--hardware", help="hardware parameter file (json or toml)")
    common.add_argument("--av-table", help="AV table file (json or toml)")
    common.add_argument("--lattice", type=int, default=4, help="Fermi-Hubbard lattice side L")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--y-method", choices=["1", "2"], default="2")
    common.add_argument("--bridging", choices=["overlap", "kappa"], default="overlap")
    common.add_argument("--out", default=".", help="output directory")

    p = argparse.ArgumentParser(prog="avsched", description="Active Volume block scheduler and resource estimator")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("gen", parents=[common], help="generate the test circuit gadgets").set_defaults(func=cmd_gen)

    s = sub.add_parser("dag", parents=[common], help="build operation DAGs")
    s.add_argument("--manifest")
    s.add_argument("--mode", choices=["support", "pauli"], default="support")
    s.set_defaults(func=cmd_dag)

    s = sub.add_parser("schedule", parents=[common], help="schedule every gadget on one machine")
    s.add_argument("--manifest")
    s.add_argument("--qubits", type=int, required=True)
    s.set_defaults(func=cmd_schedule)

    s = sub.add_parser("estimate", parents=[common], help="analytic or scheduled resource estimate")
    s.add_argument("--manifest")
    s.add_argument("--mode", choices=["analytic", "scheduled"], default="scheduled")
    s.add_argument("--d-max", type=int, default=100)
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("sweep", parents=[common], help="machine-size sweep over n_IM")
    s.add_argument("--manifest")
    s.add_argument("--n-im", default="30:120:10", help="a:b:step or comma list of interleaving-module counts")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("fit", parents=[common], help="rational fit of a sweep CSV")
    s.add_argument("--sweep", required=True)
    s.set_defaults(func=cmd_fit, out=None)

    s = sub.add_parser("report", parents=[common], help="consolidated metric summary of a run directory")
    s.add_argument("--run", required=True)
    s.set_defaults(func=cmd_report, out=None)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore", ReactionDominatedWarning)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"avsched: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
