"""Compiler and resource estimator for Active Volume quantum architectures."""

from .ir import AvTable, AvTableEntry, Circuit, Gate, GateKind, UnknownGateKind, av_of, total_av, validate_circuit
from .dag import CommutationMode, OperationDag, OpVertex, build_dag, commutes, pair_distillations
from .scheduler import (
    BridgingCharge,
    CycleLedger,
    QoomError,
    Schedule,
    SchedulerConfig,
    YMethod,
    greedy_schedule,
    validate_schedule,
)

__version__ = "0.1.0"
