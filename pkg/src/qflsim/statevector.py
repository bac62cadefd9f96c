"""Exact statevector simulation of small quantum circuits.

Qubit 0 is the least-significant bit of the basis index, so basis state
``|b_{n-1} ... b_1 b_0>`` lives at index ``sum(b_q << q)``.  Rotation
conventions: RY(w) = exp(-i w Y / 2), RX(w) = exp(-i w X / 2),
RZ(w) = diag(exp(-i w / 2), exp(+i w / 2)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MAX_QUBITS",
    "GateError",
    "CircuitError",
    "StateVector",
    "Gate",
    "Circuit",
    "apply_gate",
    "run_circuit",
    "expectation_z",
    "sample_z",
]

MAX_QUBITS = 12
_NORM_TOL = 1e-10

ROTATION_KINDS = ("RX", "RY", "RZ")
PAULI_KINDS = ("PauliX", "PauliY", "PauliZ")
TWO_QUBIT_KINDS = ("CNOT", "CZ")
GATE_KINDS = ROTATION_KINDS + PAULI_KINDS + TWO_QUBIT_KINDS

_PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
_PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


class GateError(ValueError):
    """Gate is malformed or does not fit the state it is applied to."""


class CircuitError(ValueError):
    """Circuit is malformed or does not match the initial state."""


def _rotation_matrix(kind: str, angle: float) -> np.ndarray:
    h = 0.5 * angle
    c, s = math.cos(h), math.sin(h)
    if kind == "RY":
        return np.array([[c, -s], [s, c]], dtype=complex)
    if kind == "RX":
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)
    if kind == "RZ":
        return np.array([[c - 1j * s, 0], [0, c + 1j * s]], dtype=complex)
    raise GateError(f"not a rotation kind: {kind}")


def _pauli_matrix(kind: str) -> np.ndarray:
    return {"PauliX": _PAULI_X, "PauliY": _PAULI_Y, "PauliZ": _PAULI_Z}[kind]


@dataclass(frozen=True)
class StateVector:
    """Normalized complex amplitudes over the 2**n_qubits basis states."""

    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if not 1 <= self.n_qubits <= MAX_QUBITS:
            raise ValueError(
                f"n_qubits must be in 1..{MAX_QUBITS}, got {self.n_qubits}"
            )
        amps = np.asarray(self.amplitudes, dtype=complex)
        object.__setattr__(self, "amplitudes", amps)
        if amps.shape != (1 << self.n_qubits,):
            raise ValueError(
                f"expected {1 << self.n_qubits} amplitudes, got shape {amps.shape}"
            )
        norm = float(np.linalg.norm(amps))
        if abs(norm - 1.0) > _NORM_TOL:
            raise ValueError(f"state norm {norm} deviates from 1 by > {_NORM_TOL}")

    @classmethod
    def zero(cls, n_qubits: int) -> "StateVector":
        """The all-|0> computational basis state."""
        amps = np.zeros(1 << n_qubits, dtype=complex)
        amps[0] = 1.0
        return cls(n_qubits, amps)

    @classmethod
    def basis(cls, n_qubits: int, index: int) -> "StateVector":
        amps = np.zeros(1 << n_qubits, dtype=complex)
        amps[index] = 1.0
        return cls(n_qubits, amps)


@dataclass(frozen=True)
class Gate:
    """One circuit element: a rotation, fixed Pauli, or two-qubit entangler."""

    kind: str
    targets: tuple[int, ...]
    angle: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        if self.kind not in GATE_KINDS:
            raise GateError(f"unknown gate kind {self.kind!r}")
        arity = 2 if self.kind in TWO_QUBIT_KINDS else 1
        if len(self.targets) != arity:
            raise GateError(
                f"{self.kind} takes {arity} target(s), got {len(self.targets)}"
            )
        if any(t < 0 for t in self.targets):
            raise GateError(f"negative qubit index in {self.targets}")
        if arity == 2 and self.targets[0] == self.targets[1]:
            raise GateError("two-qubit gate targets must be distinct")
        if self.kind in ROTATION_KINDS:
            if self.angle is None or not math.isfinite(self.angle):
                raise GateError(f"{self.kind} requires a finite angle")
        elif self.angle is not None:
            raise GateError(f"{self.kind} takes no angle")


def ry(qubit: int, angle: float) -> Gate:
    return Gate("RY", (qubit,), angle)


def rz(qubit: int, angle: float) -> Gate:
    return Gate("RZ", (qubit,), angle)


def rx(qubit: int, angle: float) -> Gate:
    return Gate("RX", (qubit,), angle)


def cz(a: int, b: int) -> Gate:
    return Gate("CZ", (a, b))


def cnot(control: int, target: int) -> Gate:
    return Gate("CNOT", (control, target))


@dataclass(frozen=True)
class Circuit:
    """Ordered gate list; gates apply left-to-right (earliest first)."""

    n_qubits: int
    gates: tuple[Gate, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        if not 1 <= self.n_qubits <= MAX_QUBITS:
            raise CircuitError(
                f"n_qubits must be in 1..{MAX_QUBITS}, got {self.n_qubits}"
            )
        for g in self.gates:
            if max(g.targets) >= self.n_qubits:
                raise CircuitError(
                    f"gate {g.kind} targets {g.targets} exceed {self.n_qubits} qubits"
                )

    def __add__(self, other: "Circuit") -> "Circuit":
        if other.n_qubits != self.n_qubits:
            raise CircuitError("cannot concatenate circuits of different width")
        return Circuit(self.n_qubits, self.gates + other.gates)

    def __len__(self) -> int:
        return len(self.gates)


# In-place kernels on raw amplitude buffers.  Public operations wrap these
# with value semantics; hot loops (shot trajectories) call them directly.

def _apply_1q(amps: np.ndarray, mat: np.ndarray, target: int) -> None:
    view = amps.reshape(-1, 2, 1 << target)
    a0 = view[:, 0, :].copy()
    a1 = view[:, 1, :]
    view[:, 0, :] = mat[0, 0] * a0 + mat[0, 1] * a1
    view[:, 1, :] = mat[1, 0] * a0 + mat[1, 1] * a1


def _apply_cnot(amps: np.ndarray, control: int, target: int, n: int) -> None:
    idx = np.arange(amps.size)
    src = idx[((idx >> control) & 1 == 1) & ((idx >> target) & 1 == 0)]
    dst = src | (1 << target)
    amps[src], amps[dst] = amps[dst], amps[src].copy()


def _apply_cz(amps: np.ndarray, a: int, b: int) -> None:
    idx = np.arange(amps.size)
    both = ((idx >> a) & 1 == 1) & ((idx >> b) & 1 == 1)
    amps[both] *= -1.0


def _apply_gate_inplace(amps: np.ndarray, gate: Gate, n: int) -> None:
    if gate.kind in ROTATION_KINDS:
        _apply_1q(amps, _rotation_matrix(gate.kind, gate.angle), gate.targets[0])
    elif gate.kind in PAULI_KINDS:
        _apply_1q(amps, _pauli_matrix(gate.kind), gate.targets[0])
    elif gate.kind == "CNOT":
        _apply_cnot(amps, gate.targets[0], gate.targets[1], n)
    elif gate.kind == "CZ":
        _apply_cz(amps, gate.targets[0], gate.targets[1])
    else:  # pragma: no cover - Gate validation makes this unreachable
        raise GateError(f"unknown gate kind {gate.kind!r}")


def apply_gate(state: StateVector, gate: Gate) -> StateVector:
    """Apply one gate, returning the new state (norm preserved)."""
    if max(gate.targets) >= state.n_qubits:
        raise GateError(
            f"gate targets {gate.targets} out of range for {state.n_qubits} qubits"
        )
    amps = state.amplitudes.copy()
    _apply_gate_inplace(amps, gate, state.n_qubits)
    return StateVector(state.n_qubits, amps)


def run_circuit(initial: StateVector, circuit: Circuit) -> StateVector:
    """Apply every gate of `circuit` in order.  Deterministic, no noise."""
    if circuit.n_qubits != initial.n_qubits:
        raise CircuitError(
            f"circuit is on {circuit.n_qubits} qubits, state on {initial.n_qubits}"
        )
    amps = initial.amplitudes.copy()
    for gate in circuit.gates:
        _apply_gate_inplace(amps, gate, circuit.n_qubits)
    return StateVector(initial.n_qubits, amps)


def _z_signs(n_qubits: int, qubit: int) -> np.ndarray:
    idx = np.arange(1 << n_qubits)
    return np.where((idx >> qubit) & 1 == 0, 1.0, -1.0)


def expectation_z(state: StateVector, qubit: int) -> float:
    """<Z> on one qubit: +1 weight where its bit is 0, -1 where it is 1."""
    if not 0 <= qubit < state.n_qubits:
        raise GateError(f"qubit {qubit} out of range for {state.n_qubits} qubits")
    probs = np.abs(state.amplitudes) ** 2
    return float(np.dot(_z_signs(state.n_qubits, qubit), probs))


def sample_z(state: StateVector, qubit: int, rng: np.random.Generator) -> int:
    """One projective Z-measurement outcome, +1 or -1.

    Consumes exactly one draw from `rng`; +1 occurs with probability
    (1 + <Z>) / 2.
    """
    p_plus = 0.5 * (1.0 + expectation_z(state, qubit))
    return 1 if rng.random() < p_plus else -1
