"""Variational quantum classifier.

Angle-encodes a feature vector (one RY per qubit), applies a layered
ansatz of RY+RZ rotations with a linear CZ entangling chain, and reads
class k off qubit k as a Pauli-Z expectation.  Expectations become class
probabilities through a softmax; gradients come from the parameter-shift
rule with the softmax/cross-entropy chain rule applied classically.

Expectations are available in two modes: exact (noiseless, infinite
shots) and finite-shot, where each shot is an independent noisy
trajectory of the circuit followed by per-class sampling and readout
flips.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .noise import NoiseModel
from .statevector import (
    Circuit,
    Gate,
    StateVector,
    _apply_1q,
    _apply_gate_inplace,
    _rotation_matrix,
    _pauli_matrix,
    _z_signs,
    run_circuit,
)

__all__ = [
    "EXACT",
    "ShapeError",
    "InvalidShotsError",
    "QnnSpec",
    "Prediction",
    "n_params",
    "init_params",
    "encode",
    "build_pqc",
    "forward_exact",
    "forward_shots",
    "softmax",
    "loss_ce",
    "expectation_jacobian",
    "finite_diff_jacobian",
    "param_shift_grad",
    "finite_diff_grad",
]

EXACT = "exact"
PROB_FLOOR = 1e-12
_SHIFT = math.pi / 2

_PAULI_MATS = tuple(_pauli_matrix(k) for k in ("PauliX", "PauliY", "PauliZ"))


class ShapeError(ValueError):
    """Input dimensions do not match the model specification."""


class InvalidShotsError(ValueError):
    """Shot count must be a positive integer or the EXACT sentinel."""


@dataclass(frozen=True)
class QnnSpec:
    """Model shape: qubit count (= feature dim), layers, class count."""

    n_qubits: int
    n_layers: int
    n_classes: int

    def __post_init__(self):
        if not 1 <= self.n_qubits <= 12:
            raise ValueError(f"n_qubits must be in 1..12, got {self.n_qubits}")
        if not 1 <= self.n_layers <= 10:
            raise ValueError(f"n_layers must be in 1..10, got {self.n_layers}")
        if not 1 <= self.n_classes <= self.n_qubits:
            raise ValueError(
                f"n_classes must be in 1..n_qubits={self.n_qubits}, "
                f"got {self.n_classes}"
            )


@dataclass(frozen=True)
class Prediction:
    """Per-class expectations in [-1, 1] and their softmax probabilities."""

    expectations: np.ndarray
    probabilities: np.ndarray


def n_params(spec: QnnSpec) -> int:
    """One RY and one RZ angle per qubit per layer."""
    return 2 * spec.n_qubits * spec.n_layers


def init_params(spec: QnnSpec, rng: np.random.Generator, scale: float = 0.1) -> np.ndarray:
    return rng.normal(0.0, scale, n_params(spec))


def _check_params(spec: QnnSpec, params: np.ndarray) -> np.ndarray:
    params = np.asarray(params, dtype=float)
    if params.shape != (n_params(spec),):
        raise ShapeError(
            f"expected {n_params(spec)} parameters, got shape {params.shape}"
        )
    if not np.all(np.isfinite(params)):
        raise ShapeError("parameters must be finite")
    return params


def _check_features(spec: QnnSpec, features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=float)
    if features.shape != (spec.n_qubits,):
        raise ShapeError(
            f"expected {spec.n_qubits} features, got shape {features.shape}"
        )
    return features


def encode(features: np.ndarray) -> Circuit:
    """Angle encoding: RY(w_i) on qubit i for each feature w_i."""
    features = np.asarray(features, dtype=float)
    if features.ndim != 1 or features.size == 0:
        raise ShapeError(f"features must be a non-empty vector, got {features.shape}")
    gates = [Gate("RY", (i,), float(w)) for i, w in enumerate(features)]
    return Circuit(features.size, tuple(gates))


def build_pqc(spec: QnnSpec, params: np.ndarray) -> Circuit:
    """Layered ansatz: RY then RZ on every qubit, then a CZ chain."""
    params = _check_params(spec, params)
    n = spec.n_qubits
    gates: list[Gate] = []
    for layer in range(spec.n_layers):
        base = 2 * n * layer
        for q in range(n):
            gates.append(Gate("RY", (q,), float(params[base + q])))
        for q in range(n):
            gates.append(Gate("RZ", (q,), float(params[base + n + q])))
        for q in range(n - 1):
            gates.append(Gate("CZ", (q, q + 1)))
    return Circuit(n, tuple(gates))


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = np.asarray(logits, dtype=float) - np.max(logits)
    e = np.exp(shifted)
    return e / e.sum()


def forward_exact(spec: QnnSpec, params: np.ndarray, features: np.ndarray) -> Prediction:
    """Noiseless infinite-shot forward pass."""
    params = _check_params(spec, params)
    features = _check_features(spec, features)
    circuit = encode(features) + build_pqc(spec, params)
    state = run_circuit(StateVector.zero(spec.n_qubits), circuit)
    probs = np.abs(state.amplitudes) ** 2
    exps = np.array(
        [np.dot(_z_signs(spec.n_qubits, k), probs) for k in range(spec.n_classes)]
    )
    return Prediction(expectations=exps, probabilities=softmax(exps))


# Compiled single-circuit plan.  Gates of up to DENSE_MAX qubits are
# expanded to full 2^n x 2^n unitaries (one matmul per gate beats many
# small slice operations); beyond that the sliced kernels apply.  The
# noiseless prefix states are cached so the common zero-error trajectory
# costs nothing and an error at gate i resumes from prefix state i.

DENSE_MAX = 6


class _TrajectoryPlan:
    def __init__(self, circuit: Circuit, model: NoiseModel):
        self.n = circuit.n_qubits
        self.dense = self.n <= DENSE_MAX
        self.gates = circuit.gates
        self.eps = np.array([model.gate_error(g) for g in circuit.gates])
        self.noisy_idx = np.nonzero(self.eps > 0.0)[0]
        if self.dense:
            self.mats = [_dense_unitary(g, self.n) for g in circuit.gates]
        amps = np.zeros(1 << self.n, dtype=complex)
        amps[0] = 1.0
        self.prefix = []
        for i, g in enumerate(circuit.gates):
            amps = self._apply(amps, i, in_place=True)
            self.prefix.append(amps.copy())
        self.final = amps
        self._pauli_cache: dict[tuple[int, int], np.ndarray] = {}

    def _apply(self, amps, gate_index, in_place=False):
        if self.dense:
            return self.mats[gate_index] @ amps
        if not in_place:
            amps = amps.copy()
        _apply_gate_inplace(amps, self.gates[gate_index], self.n)
        return amps

    def apply_pauli(self, amps, kind_index, qubit):
        if self.dense:
            key = (kind_index, qubit)
            mat = self._pauli_cache.get(key)
            if mat is None:
                mat = _dense_1q(_PAULI_MATS[kind_index], qubit, self.n)
                self._pauli_cache[key] = mat
            return mat @ amps
        _apply_1q(amps, _PAULI_MATS[kind_index], qubit)
        return amps

    def run(self, rng: np.random.Generator) -> np.ndarray | None:
        """One noisy trajectory; None means "identical to the noiseless
        final state" (no error fired)."""
        if self.noisy_idx.size == 0:
            return None
        fired = self.noisy_idx[rng.random(self.noisy_idx.size) < self.eps[self.noisy_idx]]
        if fired.size == 0:
            return None
        first = int(fired[0])
        fired_set = set(int(i) for i in fired[1:])
        amps = self.prefix[first].copy()
        for q in self.gates[first].targets:
            amps = self.apply_pauli(amps, int(rng.integers(3)), q)
        for i in range(first + 1, len(self.gates)):
            amps = self._apply(amps, i, in_place=True)
            if i in fired_set:
                for q in self.gates[i].targets:
                    amps = self.apply_pauli(amps, int(rng.integers(3)), q)
        return amps


def _dense_1q(mat: np.ndarray, target: int, n: int) -> np.ndarray:
    return np.kron(np.eye(1 << (n - 1 - target)), np.kron(mat, np.eye(1 << target)))


def _dense_unitary(gate: Gate, n: int) -> np.ndarray:
    dim = 1 << n
    if gate.kind in ("RX", "RY", "RZ"):
        return _dense_1q(_rotation_matrix(gate.kind, gate.angle), gate.targets[0], n)
    if gate.kind in ("PauliX", "PauliY", "PauliZ"):
        return _dense_1q(_pauli_matrix(gate.kind), gate.targets[0], n)
    idx = np.arange(dim)
    if gate.kind == "CZ":
        a, b = gate.targets
        signs = np.where(((idx >> a) & 1 == 1) & ((idx >> b) & 1 == 1), -1.0, 1.0)
        return np.diag(signs).astype(complex)
    control, target = gate.targets
    dest = np.where((idx >> control) & 1 == 1, idx ^ (1 << target), idx)
    mat = np.zeros((dim, dim), dtype=complex)
    mat[dest, idx] = 1.0
    return mat


def forward_shots(
    spec: QnnSpec,
    params: np.ndarray,
    features: np.ndarray,
    m_shots: int | str,
    model: NoiseModel,
    rng: np.random.Generator,
) -> Prediction:
    """Finite-shot forward pass under gate and readout noise.

    Each shot runs one fresh noisy trajectory of the full circuit, then
    samples Z on every class qubit and passes the outcome through the
    readout-flip channel.  Estimated expectations have granularity
    2/m_shots.  Passing EXACT delegates to forward_exact.
    """
    if m_shots == EXACT:
        return forward_exact(spec, params, features)
    if not isinstance(m_shots, (int, np.integer)) or m_shots < 1:
        raise InvalidShotsError(f"m_shots must be >= 1 or EXACT, got {m_shots!r}")
    params = _check_params(spec, params)
    features = _check_features(spec, features)

    n, n_cls = spec.n_qubits, spec.n_classes
    circuit = encode(features) + build_pqc(spec, params)
    plan = _TrajectoryPlan(circuit, model)
    signs = [_z_signs(n, k) for k in range(n_cls)]
    readout = [model.readout_error(k) for k in range(n_cls)]

    final_probs = np.abs(plan.final) ** 2
    clean_p_plus = [0.5 * (1.0 + float(np.dot(signs[k], final_probs)))
                    for k in range(n_cls)]

    totals = np.zeros(n_cls)
    for _ in range(int(m_shots)):
        amps = plan.run(rng)
        if amps is None:
            p_plus = clean_p_plus
        else:
            probs = np.abs(amps) ** 2
            p_plus = [0.5 * (1.0 + float(np.dot(signs[k], probs)))
                      for k in range(n_cls)]
        for k in range(n_cls):
            outcome = 1 if rng.random() < p_plus[k] else -1
            if readout[k] > 0 and rng.random() < readout[k]:
                outcome = -outcome
            totals[k] += outcome
    exps = totals / float(m_shots)
    return Prediction(expectations=exps, probabilities=softmax(exps))


def loss_ce(pred: Prediction, label: int) -> float:
    """Cross-entropy of the softmax probabilities against one label."""
    k = len(pred.probabilities)
    if not 0 <= label < k:
        raise ShapeError(f"label {label} out of range for {k} classes")
    p = max(float(pred.probabilities[label]), PROB_FLOOR)
    return -math.log(p)


def _forward(spec, params, features, m_shots, model, rng) -> Prediction:
    if m_shots == EXACT:
        return forward_exact(spec, params, features)
    return forward_shots(spec, params, features, m_shots, model, rng)


def _shift_jacobian(spec, params, features, m_shots, model, streams) -> np.ndarray:
    p = n_params(spec)
    jac = np.zeros((p, spec.n_classes))
    for d in range(p):
        shifted = params.copy()
        shifted[d] += _SHIFT
        plus = _forward(spec, shifted, features, m_shots, model,
                        None if streams is None else streams[2 * d])
        shifted[d] -= 2 * _SHIFT
        minus = _forward(spec, shifted, features, m_shots, model,
                         None if streams is None else streams[2 * d + 1])
        jac[d] = 0.5 * (plus.expectations - minus.expectations)
    return jac


def expectation_jacobian(
    spec: QnnSpec,
    params: np.ndarray,
    features: np.ndarray,
    m_shots: int | str = EXACT,
    model: NoiseModel | None = None,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Parameter-shift Jacobian d<Z_k>/d theta_d, shape (P, K).

    Every shifted evaluation draws from its own substream spawned off
    `rng`, so per-parameter evaluations are order-independent.
    """
    params = _check_params(spec, params)
    features = _check_features(spec, features)
    if m_shots == EXACT:
        return _shift_jacobian(spec, params, features, EXACT, None, None)
    if rng is None:
        raise ValueError("finite-shot mode requires an rng")
    streams = rng.spawn(2 * n_params(spec))
    return _shift_jacobian(spec, params, features, m_shots, model or NoiseModel.noiseless(), streams)


def finite_diff_jacobian(
    spec: QnnSpec,
    params: np.ndarray,
    features: np.ndarray,
    h: float = 1e-4,
) -> np.ndarray:
    """Central-difference Jacobian of the exact expectations (oracle)."""
    params = _check_params(spec, params)
    p = n_params(spec)
    jac = np.zeros((p, spec.n_classes))
    for d in range(p):
        shifted = params.copy()
        shifted[d] += h
        plus = forward_exact(spec, shifted, features)
        shifted[d] -= 2 * h
        minus = forward_exact(spec, shifted, features)
        jac[d] = (plus.expectations - minus.expectations) / (2 * h)
    return jac


def param_shift_grad(
    spec: QnnSpec,
    params: np.ndarray,
    sample: tuple[np.ndarray, int],
    m_shots: int | str = EXACT,
    model: NoiseModel | None = None,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Loss gradient via the parameter-shift rule, length P.

    d f_k / d theta_d comes from the +/- pi/2 shift formula; the loss
    gradient is assembled classically as
    sum_k (p_k - 1[k = label]) * d f_k / d theta_d, with p taken from the
    unshifted forward pass.  In finite-shot mode the center and every
    shifted evaluation use independent substreams spawned off `rng`
    (center first, then the +/- pair of each parameter in order).
    """
    features, label = sample
    params = _check_params(spec, params)
    features = _check_features(spec, features)
    if not 0 <= int(label) < spec.n_classes:
        raise ShapeError(f"label {label} out of range for {spec.n_classes} classes")
    if m_shots == EXACT:
        center = forward_exact(spec, params, features)
        jac = _shift_jacobian(spec, params, features, EXACT, None, None)
    else:
        if rng is None:
            raise ValueError("finite-shot mode requires an rng")
        model = model or NoiseModel.noiseless()
        streams = rng.spawn(1 + 2 * n_params(spec))
        center = forward_shots(spec, params, features, m_shots, model, streams[0])
        jac = _shift_jacobian(spec, params, features, m_shots, model, streams[1:])
    coeff = center.probabilities.copy()
    coeff[int(label)] -= 1.0
    return jac @ coeff


def finite_diff_grad(
    spec: QnnSpec,
    params: np.ndarray,
    sample: tuple[np.ndarray, int],
    h: float = 1e-4,
) -> np.ndarray:
    """Central-difference loss gradient in exact mode (oracle)."""
    features, label = sample
    params = _check_params(spec, params)
    p = n_params(spec)
    grad = np.zeros(p)
    for d in range(p):
        shifted = params.copy()
        shifted[d] += h
        lp = loss_ce(forward_exact(spec, shifted, features), int(label))
        shifted[d] -= 2 * h
        lm = loss_ce(forward_exact(spec, shifted, features), int(label))
        grad[d] = (lp - lm) / (2 * h)
    return grad
