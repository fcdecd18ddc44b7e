"""Dense state-vector simulation: gates, circuits, expectations, depth, preprocessing.

Qubit 0 is the most significant bit of the amplitude index, so basis labels read
left to right as qubits 0..n-1. Rotations follow R_P(theta) = exp(-i*theta*P/2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

if TYPE_CHECKING:
    from .pauli import PauliSum

GATE_KINDS = ("CNOT", "RX", "RY", "RZ")
IMAG_TOLERANCE = 1e-9


class StateVector:
    """Owned buffer of 2^n complex amplitudes."""

    __slots__ = ("n", "amps")

    def __init__(self, n: int, amps: np.ndarray):
        amps = np.asarray(amps, dtype=complex)
        if amps.shape != (1 << n,):
            raise ValueError(f"expected {1 << n} amplitudes for n={n}, got {amps.shape}")
        self.n = n
        self.amps = amps

    def copy(self) -> "StateVector":
        return StateVector(self.n, self.amps.copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))


def init_state(n: int, bitstring: str) -> StateVector:
    """Computational basis state labeled by ``bitstring`` (qubit 0 first)."""
    if len(bitstring) != n:
        raise ValueError(f"bitstring length {len(bitstring)} does not match n={n}")
    if set(bitstring) - {"0", "1"}:
        raise ValueError(f"bitstring must be 0/1, got {bitstring!r}")
    amps = np.zeros(1 << n, dtype=complex)
    amps[int(bitstring, 2)] = 1.0
    return StateVector(n, amps)


@dataclass(frozen=True)
class Gate:
    """One gate: CNOT(control, target) or a rotation RX/RY/RZ(target, angle)."""

    kind: str
    target: int
    control: int | None = None
    angle: float | None = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if self.kind == "CNOT":
            if self.control is None or self.angle is not None:
                raise ValueError("CNOT takes a control qubit and no angle")
            if self.control == self.target:
                raise ValueError("CNOT control and target must differ")
        else:
            if self.control is not None or self.angle is None:
                raise ValueError(f"{self.kind} takes an angle and no control")
            if not -math.pi < self.angle <= math.pi:
                raise ValueError(f"angle {self.angle} outside (-pi, pi]")

    @staticmethod
    def cnot(control: int, target: int) -> "Gate":
        return Gate("CNOT", target, control=control)

    @staticmethod
    def rx(target: int, angle: float) -> "Gate":
        return Gate("RX", target, angle=float(angle))

    @staticmethod
    def ry(target: int, angle: float) -> "Gate":
        return Gate("RY", target, angle=float(angle))

    @staticmethod
    def rz(target: int, angle: float) -> "Gate":
        return Gate("RZ", target, angle=float(angle))

    @property
    def qubits(self) -> tuple[int, ...]:
        if self.kind == "CNOT":
            return (self.control, self.target)
        return (self.target,)


@dataclass(frozen=True)
class Circuit:
    """Fixed initialization gates (prelude) followed by chosen gates."""

    n: int
    prelude: tuple[Gate, ...] = ()
    gates: tuple[Gate, ...] = ()

    def __post_init__(self):
        for g in (*self.prelude, *self.gates):
            if any(q < 0 or q >= self.n for q in g.qubits):
                raise ValueError(f"gate {g} addresses a qubit outside 0..{self.n - 1}")

    @property
    def all_gates(self) -> tuple[Gate, ...]:
        return (*self.prelude, *self.gates)


def apply_gate(state: StateVector, gate: Gate) -> StateVector:
    """Apply ``gate`` to ``state`` in place (the buffer is mutated) and return it."""
    n = state.n
    if any(q < 0 or q >= n for q in gate.qubits):
        raise ValueError(f"gate {gate} addresses a qubit outside 0..{n - 1}")
    a = state.amps
    if gate.kind == "CNOT":
        c, t = gate.control, gate.target
        hi, lo = (c, t) if c < t else (t, c)
        v = a.reshape(1 << hi, 2, 1 << (lo - hi - 1), 2, 1 << (n - 1 - lo))
        ctrl_axis, tgt_axis = (1, 3) if c < t else (3, 1)
        sel0 = [slice(None)] * 5
        sel1 = [slice(None)] * 5
        sel0[ctrl_axis] = sel1[ctrl_axis] = 1
        sel0[tgt_axis], sel1[tgt_axis] = 0, 1
        sel0, sel1 = tuple(sel0), tuple(sel1)
        tmp = v[sel0].copy()
        v[sel0] = v[sel1]
        v[sel1] = tmp
        return state
    q, theta = gate.target, gate.angle
    v = a.reshape(1 << q, 2, 1 << (n - 1 - q))
    if gate.kind == "RZ":
        v[:, 0, :] *= np.exp(-0.5j * theta)
        v[:, 1, :] *= np.exp(0.5j * theta)
        return state
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    a0 = v[:, 0, :].copy()
    if gate.kind == "RX":
        v[:, 0, :] = c * a0 - 1j * s * v[:, 1, :]
        v[:, 1, :] = -1j * s * a0 + c * v[:, 1, :]
    else:  # RY
        v[:, 0, :] = c * a0 - s * v[:, 1, :]
        v[:, 1, :] = s * a0 + c * v[:, 1, :]
    return state


def run_circuit(circuit: Circuit, start: StateVector) -> StateVector:
    """Prelude then gates applied in order to a copy of ``start``."""
    if circuit.n != start.n:
        raise ValueError(f"circuit has n={circuit.n}, state has n={start.n}")
    out = start.copy()
    for gate in circuit.all_gates:
        apply_gate(out, gate)
    return out


def _apply_pauli_string(amps: np.ndarray, ops: str) -> np.ndarray:
    """P|psi> for a Pauli string, as phase(i) * psi[i ^ flip_mask]."""
    n = len(ops)
    dim = 1 << n
    flip = 0
    phase = np.ones(dim, dtype=complex)
    idx = np.arange(dim)
    for q, sym in enumerate(ops):
        if sym == "I":
            continue
        bit_pos = n - 1 - q
        bits = (idx >> bit_pos) & 1
        if sym == "X":
            flip |= 1 << bit_pos
        elif sym == "Y":
            flip |= 1 << bit_pos
            phase = phase * (1j * (2 * bits - 1))
        else:  # Z
            phase = phase * (1 - 2 * bits)
    if flip:
        return phase * amps[idx ^ flip]
    return phase * amps


def expectation(state: StateVector, h: "PauliSum") -> float:
    """<psi|H|psi> as a real number (imaginary residue above tolerance raises)."""
    if state.n != h.n:
        raise ValueError(f"state has n={state.n}, Hamiltonian has n={h.n}")
    if h.is_diagonal:
        return float(np.dot(h.diagonal, np.abs(state.amps) ** 2))
    acc = 0.0 + 0.0j
    for coeff, pauli in h.terms:
        acc += coeff * np.vdot(state.amps, _apply_pauli_string(state.amps, pauli.ops))
    if abs(acc.imag) > IMAG_TOLERANCE:
        raise ValueError(f"non-real expectation (imag={acc.imag:g}); Hamiltonian not Hermitian?")
    return float(acc.real)


def fidelity(a: StateVector, b: StateVector) -> float:
    """|<a|b>|^2, insensitive to global phase on either argument."""
    if a.n != b.n:
        raise ValueError(f"qubit counts differ: {a.n} vs {b.n}")
    return float(abs(np.vdot(a.amps, b.amps)) ** 2)


def circuit_depth(circuit: Circuit) -> int:
    """Greedy layer count over prelude plus gates.

    Each gate lands in the earliest layer where all its qubits are free.
    """
    free = [0] * circuit.n
    depth = 0
    for gate in circuit.all_gates:
        layer = max(free[q] for q in gate.qubits)
        for q in gate.qubits:
            free[q] = layer + 1
        depth = max(depth, layer + 1)
    return depth


def wrap_angle(theta: float) -> float:
    """Map an angle into (-pi, pi]."""
    t = math.fmod(theta + math.pi, 2 * math.pi)
    if t <= 0:
        t += 2 * math.pi
    return t - math.pi


def _basis_bits_after_prelude(circuit: Circuit, start: StateVector) -> list[int] | None:
    """Bits of the post-prelude state when it is a basis state (up to phase), else None."""
    state = run_circuit(Circuit(circuit.n, circuit.prelude, ()), start)
    support = np.flatnonzero(np.abs(state.amps) > 1e-12)
    if len(support) != 1:
        return None
    idx = int(support[0])
    return [(idx >> (circuit.n - 1 - q)) & 1 for q in range(circuit.n)]


def preprocess_circuit(circuit: Circuit, start: StateVector) -> Circuit:
    """Strip redundancies from the chosen gates; the prelude is left untouched.

    Applied to a fixpoint:
      1. back-to-back identical CNOT pairs cancel;
      2. a CNOT is dropped when its control qubit is provably in |0> there: the
         post-prelude state is a basis state, the control's bit is 0, and no
         earlier surviving chosen gate touched the control qubit;
      3. list-adjacent same-axis rotations on one qubit merge by angle addition,
         wrapped into (-pi, pi].

    The result prepares the same final state up to global phase.
    """
    bits = _basis_bits_after_prelude(circuit, start)
    gates = list(circuit.gates)
    changed = True
    while changed:
        changed = False
        # rule 1: adjacent identical CNOT pair
        i = 0
        while i + 1 < len(gates):
            g, h = gates[i], gates[i + 1]
            if (
                g.kind == "CNOT"
                and h.kind == "CNOT"
                and g.control == h.control
                and g.target == h.target
            ):
                del gates[i : i + 2]
                changed = True
            else:
                i += 1
        # rule 3: merge adjacent same-axis rotations on the same qubit
        i = 0
        while i + 1 < len(gates):
            g, h = gates[i], gates[i + 1]
            if g.kind != "CNOT" and g.kind == h.kind and g.target == h.target:
                gates[i : i + 2] = [
                    Gate(g.kind, g.target, angle=wrap_angle(g.angle + h.angle))
                ]
                changed = True
            else:
                i += 1
        # rule 2: CNOT with control provably in |0>
        if bits is not None:
            touched = [False] * circuit.n
            i = 0
            while i < len(gates):
                g = gates[i]
                if g.kind == "CNOT" and not touched[g.control] and bits[g.control] == 0:
                    del gates[i]
                    changed = True
                    continue
                for q in g.qubits:
                    touched[q] = True
                i += 1
    return Circuit(circuit.n, circuit.prelude, tuple(gates))


def circuit_to_text(circuit: Circuit) -> str:
    """Serialize to the one-gate-per-line text format."""
    lines = [f"qubits {circuit.n}", f"prelude {len(circuit.prelude)}"]
    for gate in circuit.all_gates:
        if gate.kind == "CNOT":
            lines.append(f"CNOT {gate.control} {gate.target}")
        else:
            lines.append(f"{gate.kind} {gate.target} {gate.angle!r}")
    return "\n".join(lines) + "\n"


def circuit_from_text(text: str) -> Circuit:
    """Parse the text format produced by :func:`circuit_to_text`."""
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if len(lines) < 2 or not lines[0].startswith("qubits ") or not lines[1].startswith("prelude "):
        raise ValueError("expected 'qubits n' and 'prelude k' header lines")
    try:
        n = int(lines[0].split()[1])
        k = int(lines[1].split()[1])
    except (IndexError, ValueError):
        raise ValueError("malformed circuit header") from None
    gates = []
    for lineno, line in enumerate(lines[2:], start=3):
        parts = line.split()
        if parts[0] == "CNOT":
            if len(parts) != 3:
                raise ValueError(f"line {lineno}: expected 'CNOT control target'")
            gates.append(Gate.cnot(int(parts[1]), int(parts[2])))
        elif parts[0] in ("RX", "RY", "RZ"):
            if len(parts) != 3:
                raise ValueError(f"line {lineno}: expected '{parts[0]} qubit angle'")
            gates.append(Gate(parts[0], int(parts[1]), angle=float(parts[2])))
        else:
            raise ValueError(f"line {lineno}: unknown gate {parts[0]!r}")
    if k > len(gates):
        raise ValueError(f"prelude length {k} exceeds gate count {len(gates)}")
    return Circuit(n, tuple(gates[:k]), tuple(gates[k:]))
