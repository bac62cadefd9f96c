"""Shared fixtures and helpers for the test suite."""

from __future__ import annotations

import math

import numpy as np
import pytest

from qflsim.statevector import Circuit, Gate, StateVector


def random_circuit(rng: np.random.Generator, max_qubits: int = 10,
                   max_gates: int = 40) -> tuple[StateVector, Circuit]:
    """A random initial state |0..0> and circuit over the gate set."""
    n = int(rng.integers(1, max_qubits + 1))
    n_gates = int(rng.integers(0, max_gates + 1))
    gates = []
    for _ in range(n_gates):
        kind = rng.choice(["RX", "RY", "RZ", "PauliX", "PauliY", "PauliZ", "CNOT", "CZ"])
        if kind in ("CNOT", "CZ"):
            if n < 2:
                kind = "RY"
            else:
                a, b = rng.choice(n, size=2, replace=False)
                gates.append(Gate(kind, (int(a), int(b))))
                continue
        q = int(rng.integers(n))
        if kind.startswith("Pauli"):
            gates.append(Gate(kind, (q,)))
        else:
            gates.append(Gate(kind, (q,), float(rng.uniform(0, 2 * math.pi))))
    return StateVector.zero(n), Circuit(n, tuple(gates))


@pytest.fixture
def cal_file(tmp_path):
    """Write a calibration file and return its path."""

    def write(text: str):
        path = tmp_path / "device.cal"
        path.write_text(text, encoding="utf-8")
        return path

    return write
