"""Qubitized Fermi-Hubbard phase-estimation test circuit.

The generator emits two gadgets, one controlled walk step (PREP, SELECT,
PREP-dagger and the reflection) and the inverse QFT on the phase register.
High-level gates (multi-controlled X, controlled H/S/RZ/swap, arbitrary RZ)
are lowered by :func:`decompose_single_controls` and each magic-state
consumer then receives its distillation by :func:`attach_distillations`.

Only the resource structure is modeled: register sizes, control fan-in and
gate families.  Rotation synthesis is a T-count model, not a number
theoretic synthesizer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .estimator import Gadget, GadgetSet
from .ir import AvTable, Circuit, Gate, GateKind

G = GateKind

MAGIC_CONSUMERS = {G.TOFFOLI: (G.CCZ_DISTILL, 3), G.LEFT_ELBOW: (G.CCZ_DISTILL, 3), G.T: (G.T_DISTILL, 1)}
TOFFOLI_FAMILY = frozenset({G.TOFFOLI, G.LEFT_ELBOW, G.RIGHT_ELBOW, G.CCZ_DISTILL})


class IrreducibleGate(ValueError):
    """A gate has neither a decomposition rule nor an AV-table entry."""


# --- parameters -------------------------------------------------------------


@dataclass(frozen=True)
class LatticeSpec:
    L: int
    t: float = 1.0
    U: float = 8.0

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 2:
            raise ValueError("lattice side L must be an integer >= 2")

    @property
    def sites(self) -> int:
        return self.L * self.L

    @property
    def modes(self) -> int:
        """Spin orbitals, one system qubit each."""
        return 2 * self.sites

    def split(self) -> tuple[int, int]:
        """L = L_pow2 * L_odd."""
        pow2 = self.L & -self.L
        return pow2, self.L // pow2


def hamiltonian_one_norm(spec: LatticeSpec, convention: str = "jw_no_constant") -> float:
    """1-norm of the Jordan-Wigner Fermi-Hubbard Hamiltonian on a periodic L x L lattice.

    Hopping: 2 bonds per site and 2 spins, each bond giving X..X and Y..Y
    strings of weight t/2, so 4 t L^2 in total.  Interaction:
    U n_up n_dn = U/4 (I - Z_up - Z_dn + Z_up Z_dn) per site.
    ``jw_no_constant`` drops the identity term (3U/4 per site);
    ``jw_with_constant`` keeps it (U per site).
    """
    hop = 4.0 * abs(spec.t) * spec.sites
    if convention == "jw_no_constant":
        pot = 0.75 * abs(spec.U) * spec.sites
    elif convention == "jw_with_constant":
        pot = abs(spec.U) * spec.sites
    else:
        raise ValueError(f"unknown 1-norm convention {convention!r}")
    return hop + pot


def n_phase_bits(spec: LatticeSpec, eps_site: float = 1e-3, convention: str = "jw_no_constant") -> int:
    eps_e = spec.sites * eps_site
    return math.ceil(math.log2(math.pi * hamiltonian_one_norm(spec, convention) / (math.sqrt(2) * eps_e)))


@dataclass(frozen=True)
class PhasePrecision:
    epsilon_site: float = 1e-3
    rot_eps: float = 1e-4
    n_p: int | None = None  # derived from the lattice when None
    convention: str = "jw_no_constant"

    def __post_init__(self):
        if self.rot_eps <= 0 or self.epsilon_site <= 0:
            raise ValueError("precisions must be positive")

    def epsilon_e(self, spec: LatticeSpec) -> float:
        return spec.sites * self.epsilon_site

    def phase_bits(self, spec: LatticeSpec) -> int:
        if self.n_p is not None:
            return self.n_p
        return n_phase_bits(spec, self.epsilon_site, self.convention)


@dataclass(frozen=True)
class RotationModel:
    """T-count model: round(K log2(1/eps)) plus a seeded integer jitter."""

    K: float = 3.0
    jitter: int = 2
    s_prob: float = 0.5  # chance of an S between consecutive T steps

    def t_count(self, rot_eps: float, rng: np.random.Generator | None = None) -> int:
        if rot_eps <= 0:
            raise ValueError("rot_eps must be positive")
        base = round(self.K * math.log2(1.0 / rot_eps))
        delta = int(rng.integers(-self.jitter, self.jitter + 1)) if (rng is not None and self.jitter) else 0
        return max(0, base + delta)


@dataclass(frozen=True)
class RotationSequence:
    gates: tuple[GateKind, ...]

    @property
    def t_count(self) -> int:
        return sum(1 for g in self.gates if g is G.T)

    def runs(self) -> list[tuple[str, int]]:
        out: list[tuple[str, int]] = []
        for g in self.gates:
            if out and out[-1][0] == g.value:
                out[-1] = (g.value, out[-1][1] + 1)
            else:
                out.append((g.value, 1))
        return out


def synthesize_rotation(rot: RotationModel, rot_eps: float, seed) -> RotationSequence:
    """H/S/T word standing in for a synthesized single-qubit rotation.

    Each T step is ``H T`` with an optional leading ``S``; the sequence ends
    with one more ``H``.
    """
    rng = np.random.default_rng(seed)
    n_t = rot.t_count(rot_eps, rng)
    gates: list[GateKind] = []
    for _ in range(n_t):
        if rng.random() < rot.s_prob:
            gates.append(G.S)
        gates.extend((G.H, G.T))
    gates.append(G.H)
    return RotationSequence(tuple(gates))


# --- emission helpers -------------------------------------------------------


class Builder:
    """Accumulates gates and hands out fresh qubit labels."""

    def __init__(self, start: int = 0):
        self.gates: list[Gate] = []
        self.next_qubit = start

    def alloc(self, n: int = 1) -> list[int]:
        out = list(range(self.next_qubit, self.next_qubit + n))
        self.next_qubit += n
        return out

    def add(self, kind, targets=(), controls=(), init=(), meas=(), **params):
        self.gates.append(Gate(kind, tuple(targets), tuple(controls), tuple(init), tuple(meas), params))

    def extend(self, gates):
        self.gates.extend(gates)

    def circuit(self, name: str, qubit_count: int | None = None) -> Circuit:
        return Circuit(tuple(self.gates), max(self.next_qubit, qubit_count or 0), name)


def _mcx(b: Builder, controls, target):
    controls = list(controls)
    if not controls:
        b.add(G.X, (target,))
    elif len(controls) == 1:
        b.add(G.CNOT, (target,), controls)
    else:
        b.add(G.MCX, (target,), controls)


def _mcz(b: Builder, qubits):
    *controls, target = qubits
    b.add(G.H, (target,))
    _mcx(b, controls, target)
    b.add(G.H, (target,))


def _rz(b: Builder, q: int, angle: float):
    b.add(G.RZ, (q,), angle=float(angle))


# --- controlled unitary -----------------------------------------------------


@dataclass
class Registers:
    phase: list[int]
    system: list[int]
    u_flag: int
    px: list[int]
    py: list[int]
    sigma: int
    direction: list[int]
    qx: list[int]
    qy: list[int]
    sigma_q: int
    acc: int
    usp_flag: int

    @property
    def control(self) -> int:
        return self.phase[0]

    @property
    def prep(self) -> list[int]:
        return [self.u_flag, *self.px, *self.py, self.sigma, *self.direction, *self.qx, *self.qy, self.sigma_q]

    @classmethod
    def allocate(cls, b: Builder, spec: LatticeSpec, n_p: int) -> "Registers":
        nb = max(1, math.ceil(math.log2(spec.L)))
        return cls(
            phase=b.alloc(n_p),
            system=b.alloc(spec.modes),
            u_flag=b.alloc()[0],
            px=b.alloc(nb),
            py=b.alloc(nb),
            sigma=b.alloc()[0],
            direction=b.alloc(2),
            qx=b.alloc(nb),
            qy=b.alloc(nb),
            sigma_q=b.alloc()[0],
            acc=b.alloc()[0],
            usp_flag=b.alloc()[0],
        )


def _compare_less(b: Builder, reg: list[int], bound: int, flag: int):
    """flag ^= [reg < bound] as a ripple of multi-controlled flips (self-inverse)."""
    bits = len(reg)
    for i in reversed(range(bits)):
        if bound >> i & 1:
            # prefix equal above i and reg[i] == 0
            zeros = [reg[j] for j in range(i + 1, bits) if not bound >> j & 1]
            ones = [reg[j] for j in range(i + 1, bits) if bound >> j & 1]
            for q in zeros + [reg[i]]:
                b.add(G.X, (q,))
            _mcx(b, zeros + ones + [reg[i]], flag)
            for q in zeros + [reg[i]]:
                b.add(G.X, (q,))


def usp(b: Builder, reg: list[int], pow2: int, odd: int, flag: int, angle: float):
    """Uniform superposition over ``pow2 * odd`` basis states of ``reg``.

    The power-of-two part is a layer of Hadamards.  The odd part runs one
    round of amplitude amplification: inequality test, flag rotation,
    reflection about the start state, then a second test and rotation.
    """
    k = int(math.log2(pow2))
    low, high = reg[:k], reg[k:]
    for q in low:
        b.add(G.H, (q,))
    if odd == 1:
        return
    nodd = max(1, math.ceil(math.log2(odd)))
    high = high[:nodd]
    for q in high:
        b.add(G.H, (q,))
    _compare_less(b, high, odd, flag)
    b.add(G.H, (flag,))
    _rz(b, flag, angle)
    b.add(G.H, (flag,))
    _compare_less(b, high, odd, flag)
    for q in high:
        b.add(G.H, (q,))
    for q in high + [flag]:
        b.add(G.X, (q,))
    _mcz(b, high + [flag])
    for q in high + [flag]:
        b.add(G.X, (q,))
    for q in high:
        b.add(G.H, (q,))
    _compare_less(b, high, odd, flag)
    _rz(b, flag, -angle)
    _compare_less(b, high, odd, flag)


def increment_mod(b: Builder, reg: list[int], control: int, L: int):
    """reg <- reg + 1 mod L when ``control`` is set."""
    bits = len(reg)
    for i in reversed(range(bits)):
        _mcx(b, [control, *reg[:i]], reg[i])
    if L != 1 << bits:
        # wrap L -> 0: flag the pattern L, clear it, then unflag against 0
        fix = b.alloc()[0]
        zeros = [reg[j] for j in range(bits) if not L >> j & 1]
        ones = [reg[j] for j in range(bits) if L >> j & 1]
        for q in zeros:
            b.add(G.X, (q,))
        _and(b, [control, *reg], fix)
        for q in zeros:
            b.add(G.X, (q,))
        for q in ones:
            b.add(G.CNOT, (q,), (fix,))
        for q in reg:
            b.add(G.X, (q,))
        _and(b, [control, *reg], fix, uncompute=True)
        for q in reg:
            b.add(G.X, (q,))


def _and_tree(b: Builder, controls: list[int]) -> tuple[int, int, list[tuple]]:
    """Pairwise AND of ``controls`` down to two lines by a balanced elbow tree.

    Same elbow count as a ladder with logarithmic depth.  Returns the two
    remaining lines and the log needed to undo the tree.
    """
    level = list(controls)
    log = []
    while len(level) > 2:
        nxt, i = [], 0
        # pair while more than two lines would remain
        while i + 1 < len(level) and len(nxt) + len(level) - i > 2:
            a = b.alloc()[0]
            b.add(G.LEFT_ELBOW, (a,), (level[i], level[i + 1]), init=(a,))
            log.append((a, level[i], level[i + 1]))
            nxt.append(a)
            i += 2
        level = nxt + level[i:]
    return level[0], level[1], log


def _unand_tree(b: Builder, log):
    for a, p, c in reversed(log):
        b.add(G.RIGHT_ELBOW, (a,), (p, c), meas=(a,))


def _and(b: Builder, controls: list[int], target: int, uncompute: bool = False):
    """Logical AND of ``controls`` into a fresh ``target``."""
    x, y, log = _and_tree(b, controls)
    if uncompute:
        b.add(G.RIGHT_ELBOW, (target,), (x, y), meas=(target,))
    else:
        b.add(G.LEFT_ELBOW, (target,), (x, y), init=(target,))
    _unand_tree(b, log)


def decrement_mod(b: Builder, reg: list[int], control: int, L: int):
    """Inverse of :func:`increment_mod`; differs from it only by Paulis."""
    for q in reg:
        b.add(G.X, (q,))
    increment_mod(b, reg, control, L)
    for q in reg:
        b.add(G.X, (q,))


def _hopping_shift(b: Builder, r: Registers, L: int, inverse: bool):
    """Controlled +-1 mod L on qx or qy, selected by the direction bits."""
    shift = decrement_mod if inverse else increment_mod
    for axis, reg in ((0, r.qx), (1, r.qy)):
        if axis == 1:
            b.add(G.X, (r.direction[0],))
        sel = b.alloc()[0]
        b.add(G.LEFT_ELBOW, (sel,), (r.u_flag, r.direction[0]), init=(sel,))
        for q in reg:
            b.add(G.CNOT, (q,), (r.direction[1],))
        shift(b, reg, sel, L)
        for q in reg:
            b.add(G.CNOT, (q,), (r.direction[1],))
        b.add(G.RIGHT_ELBOW, (sel,), (r.u_flag, r.direction[0]), meas=(sel,))
        if axis == 1:
            b.add(G.X, (r.direction[0],))


def prep(b: Builder, r: Registers, spec: LatticeSpec, inverse: bool = False):
    pow2, odd = spec.split()
    weight = 2.0 * math.acos(math.sqrt(4 * abs(spec.t) / (4 * abs(spec.t) + 0.75 * abs(spec.U))))
    usp_angle = 2.0 * math.asin(1.0 / math.sqrt(odd)) if odd > 1 else 0.0
    steps = []

    def weight_rotation():
        b.add(G.H, (r.u_flag,))
        _rz(b, r.u_flag, -weight if inverse else weight)
        b.add(G.H, (r.u_flag,))

    def positions():
        usp(b, r.px, pow2, odd, r.usp_flag, usp_angle)
        usp(b, r.py, pow2, odd, r.usp_flag, usp_angle)
        b.add(G.H, (r.sigma,))

    def directions():
        for q in r.direction:
            b.add(G.CH, (q,), (r.u_flag,))

    def copy():
        for p, q in zip(r.px + r.py + [r.sigma], r.qx + r.qy + [r.sigma_q]):
            b.add(G.CNOT, (q,), (p,))

    def shift():
        _hopping_shift(b, r, spec.L, inverse)

    def swaps():
        for p, q in zip(r.px + r.py + [r.sigma], r.qx + r.qy + [r.sigma_q]):
            b.add(G.CSWAP, (p, q), (r.direction[1],))

    steps = [weight_rotation, positions, directions, copy, shift, swaps]
    for step in reversed(steps) if inverse else steps:
        step()


def _decode_tree(b: Builder, control: int, address: list[int], leaves: int) -> tuple[list[int], list[tuple]]:
    """Unary iteration: split ``control`` into ``leaves`` one-hot flags.

    The first level ANDs ``control`` with the top address bit and its
    complement; every further split spends one left elbow and one CNOT.
    The returned log lets :func:`_undecode_tree` undo the tree with right
    elbows.
    """
    bit = address[0]
    hi, lo = b.alloc(2)
    b.add(G.LEFT_ELBOW, (hi,), (control, bit), init=(hi,))
    b.add(G.X, (bit,))
    b.add(G.LEFT_ELBOW, (lo,), (control, bit), init=(lo,))
    b.add(G.X, (bit,))
    log = [("root", control, bit, lo), ("root", control, bit, hi)]
    upper = leaves // 2
    nodes = [(lo, 1, leaves - upper), (hi, 1, upper)]  # (qubit, depth, leaves below)
    out = []
    while nodes:
        q, depth, count = nodes.pop(0)
        if count == 1 or depth >= len(address):
            out.append(q)
            continue
        bit = address[depth]
        upper = count // 2
        child = b.alloc()[0]
        b.add(G.LEFT_ELBOW, (child,), (q, bit), init=(child,))
        b.add(G.CNOT, (q,), (child,))
        log.append(("split", q, bit, child))
        nodes.append((q, depth + 1, count - upper))
        nodes.append((child, depth + 1, upper))
    return out, log


def _undecode_tree(b: Builder, log):
    for kind, q, bit, child in reversed(log):
        if kind == "split":
            b.add(G.CNOT, (q,), (child,))
            b.add(G.RIGHT_ELBOW, (child,), (q, bit), meas=(child,))
        else:
            negated = child == log[0][3]
            if negated:
                b.add(G.X, (bit,))
            b.add(G.RIGHT_ELBOW, (child,), (q, bit), meas=(child,))
            if negated:
                b.add(G.X, (bit,))


def select(b: Builder, r: Registers, spec: LatticeSpec):
    """Selected Majorana operators on the (p, sigma) and (q, sigma') modes."""
    n = spec.modes
    for address, y_type in ((r.px + r.py + [r.sigma], False), (r.qx + r.qy + [r.sigma_q], True)):
        flags, log = _decode_tree(b, r.control, address, n)
        for flag, mode in zip(flags, r.system):
            if not y_type:
                # potential term: Z on the selected mode when u_flag is set
                w = b.alloc()[0]
                b.add(G.LEFT_ELBOW, (w,), (flag, r.u_flag), init=(w,))
                b.add(G.CZ, (mode,), (w,))
                b.add(G.RIGHT_ELBOW, (w,), (flag, r.u_flag), meas=(w,))
            b.add(G.CZ, (mode,), (r.acc,))
            if y_type:
                b.add(G.S, (mode,))
            b.add(G.CNOT, (mode,), (flag,))
            if y_type:
                b.add(G.S, (mode,))
            b.add(G.CNOT, (r.acc,), (flag,))
        _undecode_tree(b, log)


def reflect(b: Builder, r: Registers):
    """Controlled reflection about the all-zero state of the PREP registers."""
    qs = r.prep
    for q in qs:
        b.add(G.X, (q,))
    _mcz(b, [r.control, *qs])
    for q in qs:
        b.add(G.X, (q,))


def emit_controlled_unitary(spec: LatticeSpec, n_p: int) -> tuple[Circuit, Registers]:
    """One controlled walk step with high-level gates still present."""
    b = Builder()
    r = Registers.allocate(b, spec, n_p)
    prep(b, r, spec)
    select(b, r, spec)
    prep(b, r, spec, inverse=True)
    reflect(b, r)
    return b.circuit(f"controlled_u_L{spec.L}"), r


# --- QFT dagger -------------------------------------------------------------


def emit_qft_dagger(n_p: int, width: int | None = None) -> Circuit:
    """Inverse QFT on qubits 0..n_p-1; final swaps are a relabeling and omitted."""
    b = Builder()
    qs = b.alloc(n_p)
    for j in reversed(range(n_p)):
        for m in reversed(range(j + 1, n_p)):
            k = m - j
            if k == 1:
                b.add(G.CS, (qs[j],), (qs[m],), dagger=True)
            else:
                b.add(G.CRZ, (qs[j],), (qs[m],), angle=-math.pi / 2**k, phase=True)
        b.add(G.H, (qs[j],))
    return b.circuit("qft_dagger", width)


# --- lowering ---------------------------------------------------------------


def _expand_mcx(b: Builder, g: Gate):
    controls, (target,) = list(g.controls), g.targets
    if len(controls) <= 2:
        kind = {0: G.X, 1: G.CNOT, 2: G.TOFFOLI}[len(controls)]
        b.add(kind, (target,), controls)
        return
    x, y, log = _and_tree(b, controls)
    b.add(G.TOFFOLI, (target,), (x, y))
    _unand_tree(b, log)


def _expand_rotation(b: Builder, q: int, rot: RotationModel, rot_eps: float, seed):
    for kind in synthesize_rotation(rot, rot_eps, seed).gates:
        b.add(kind, (q,))


def decompose_single_controls(
    circuit: Circuit,
    table: AvTable | None = None,
    rot: RotationModel = RotationModel(),
    rot_eps: float = 1e-4,
    seed: int = 0,
) -> Circuit:
    """Lower every gate to kinds present in the AV table.

    Rules: multi-controlled X to a left-elbow ladder around one Toffoli;
    controlled H to two T gates around a CNOT; controlled swap to a
    Toffoli between two CNOTs; controlled S to three T gates and two CNOTs;
    controlled RZ to two target rotations and two CNOTs (a controlled phase
    adds a third rotation on the control); arbitrary RZ to an H/S/T word.
    Rotations are numbered in emission order and rotation i is synthesized
    with seed (seed, i).
    """
    table = table or AvTable.default()
    b = Builder(circuit.qubit_count)
    counter = [0]

    def rotation(q):
        _expand_rotation(b, q, rot, rot_eps, (seed, counter[0]))
        counter[0] += 1

    for g in circuit.gates:
        k = g.kind
        if k is G.MCX or (k is G.TOFFOLI and len(g.controls) != 2):
            _expand_mcx(b, g)
        elif k is G.CH:
            (c,), (t,) = g.controls, g.targets
            b.add(G.S, (t,))
            b.add(G.H, (t,))
            b.add(G.T, (t,))
            b.add(G.CNOT, (t,), (c,))
            b.add(G.T, (t,))
            b.add(G.H, (t,))
            b.add(G.S, (t,))
        elif k is G.CSWAP:
            (c,), (x, y) = g.controls, g.targets
            b.add(G.CNOT, (x,), (y,))
            b.add(G.TOFFOLI, (y,), (c, x))
            b.add(G.CNOT, (x,), (y,))
        elif k is G.CS:
            (c,), (t,) = g.controls, g.targets
            b.add(G.T, (c,))
            b.add(G.T, (t,))
            b.add(G.CNOT, (t,), (c,))
            b.add(G.T, (t,))
            b.add(G.CNOT, (t,), (c,))
        elif k is G.CRZ:
            (c,), (t,) = g.controls, g.targets
            if g.param("phase"):
                rotation(c)
            rotation(t)
            b.add(G.CNOT, (t,), (c,))
            rotation(t)
            b.add(G.CNOT, (t,), (c,))
        elif k is G.RZ:
            rotation(g.targets[0])
        elif k in table:
            b.extend([g])
        else:
            raise IrreducibleGate(f"no decomposition rule or AV entry for {k.value}")
    return Circuit(tuple(b.gates), b.next_qubit, circuit.name)


def attach_distillations(circuit: Circuit) -> Circuit:
    """Emit a distillation right before every magic-state consumer.

    The distillation initializes fresh magic qubits which the consumer acts
    on and measures.  Consumers already carrying magic qubits are skipped.
    """
    b = Builder(circuit.qubit_count)
    for g in circuit.gates:
        spec = MAGIC_CONSUMERS.get(g.kind)
        if spec is None or g.param("magic"):
            b.extend([g])
            continue
        kind, count = spec
        magic = b.alloc(count)
        b.add(kind, magic, init=magic)
        b.gates.append(
            Gate(g.kind, g.targets + tuple(magic), g.controls, g.initializes, g.measures + tuple(magic), {**dict(g.params), "magic": True})
        )
    return Circuit(tuple(b.gates), b.next_qubit, circuit.name)


def lower(circuit: Circuit, table: AvTable | None = None, rot=RotationModel(), rot_eps=1e-4, seed=0) -> Circuit:
    return attach_distillations(decompose_single_controls(circuit, table, rot, rot_eps, seed))


def build_controlled_unitary(
    spec: LatticeSpec,
    prec: PhasePrecision = PhasePrecision(),
    rot: RotationModel = RotationModel(),
    seed: int = 0,
    table: AvTable | None = None,
) -> Circuit:
    raw, _ = emit_controlled_unitary(spec, prec.phase_bits(spec))
    return lower(raw, table, rot, prec.rot_eps, (seed, 0))


def build_qft_dagger(
    n_p: int,
    prec: PhasePrecision = PhasePrecision(),
    rot: RotationModel = RotationModel(),
    seed: int = 0,
    table: AvTable | None = None,
    width: int | None = None,
) -> Circuit:
    """Inverse QFT gadget.  ``width`` pads the qubit count so idle registers
    of the surrounding computation stay in memory."""
    if n_p < 1:
        raise ValueError("n_p must be at least 1")
    return lower(emit_qft_dagger(n_p, width), table, rot, prec.rot_eps, (seed, 1))


def rotation_count(n_p: int) -> int:
    """Arbitrary-angle rotations emitted by the inverse QFT."""
    return sum(
        1 for g in emit_qft_dagger(n_p).gates if g.kind is G.CRZ for _ in range(3 if g.param("phase") else 2)
    )


def build_test_circuit(
    spec: LatticeSpec,
    prec: PhasePrecision = PhasePrecision(),
    rot: RotationModel = RotationModel(),
    seed: int = 0,
    table: AvTable | None = None,
) -> GadgetSet:
    table = table or AvTable.default()
    n_p = prec.phase_bits(spec)
    cu = build_controlled_unitary(spec, prec, rot, seed, table)
    _, regs = emit_controlled_unitary(spec, n_p)
    width = regs.usp_flag + 1  # every register of the walk stays live during the QFT
    qft = build_qft_dagger(n_p, prec, rot, seed, table, width)
    return GadgetSet([Gadget("controlled_u", cu, 2**n_p), Gadget("qft_dagger", qft, 1)], table, n_p)


def toffoli_share(circuit: Circuit, table: AvTable) -> float:
    total = sum(table[g.kind].av for g in circuit.gates)
    fam = sum(table[g.kind].av for g in circuit.gates if g.kind in TOFFOLI_FAMILY)
    return fam / total if total else 0.0
