"""Device-shaped stochastic noise.

Gate noise is realized as Monte-Carlo Pauli trajectories: with the gate's
error probability one uniformly chosen non-identity Pauli is applied to
each qubit the gate touched.  Readout noise flips individual measurement
outcomes.  Probabilities come from a calibration file and are scaled by a
regime factor, then clipped to hardware-plausible limits.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .statevector import Gate, StateVector, apply_gate

__all__ = [
    "CalibrationError",
    "NoiseModel",
    "PauliError",
    "apply_pauli",
    "inject_gate_noise",
    "flip_outcome",
    "apply_readout_flip",
    "scale_regime",
    "load_calibration",
]

# Hardware-plausible ceilings applied after regime scaling.
P1_CLIP = 0.03
P2_CLIP = 0.10
READOUT_CLIP = 0.10

REGIME_FACTORS = {"low": 1.0, "medium": 2.0, "high": 4.0}

_PAULI_KINDS = ("X", "Y", "Z")


class CalibrationError(ValueError):
    """Calibration file missing, malformed, or out of range."""


@dataclass(frozen=True)
class PauliError:
    """A single stochastic Pauli fault on one qubit."""

    kind: str
    qubit: int

    def __post_init__(self):
        if self.kind not in _PAULI_KINDS:
            raise ValueError(f"Pauli kind must be X, Y or Z, got {self.kind!r}")


def _check_prob(value: float, what: str) -> float:
    v = float(value)
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"{what} must be in [0, 1], got {v}")
    return v


@dataclass(frozen=True)
class NoiseModel:
    """Per-qubit / per-pair error probabilities plus a regime scale factor.

    Raw probabilities are stored unscaled; effective values are
    ``min(raw * scale, clip)``.  Qubits or pairs without an explicit entry
    fall back to the model-wide defaults.
    """

    p1: dict[int, float] = field(default_factory=dict)
    p2: dict[tuple[int, int], float] = field(default_factory=dict)
    readout: dict[int, float] = field(default_factory=dict)
    default_p1: float = 0.0
    default_p2: float = 0.0
    default_readout: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        for q, v in self.p1.items():
            _check_prob(v, f"p1 q{q}")
        for pair, v in self.p2.items():
            _check_prob(v, f"p2 q{pair[0]} q{pair[1]}")
        for q, v in self.readout.items():
            _check_prob(v, f"readout q{q}")
        _check_prob(self.default_p1, "default_p1")
        _check_prob(self.default_p2, "default_p2")
        _check_prob(self.default_readout, "default_readout")
        # Pair keys are unordered
        object.__setattr__(
            self,
            "p2",
            {tuple(sorted(k)): v for k, v in self.p2.items()},
        )

    @classmethod
    def noiseless(cls) -> "NoiseModel":
        return cls()

    def gate_error(self, gate: Gate) -> float:
        """Effective (scaled, clipped) error probability for one gate."""
        if len(gate.targets) == 1:
            raw = self.p1.get(gate.targets[0], self.default_p1)
            return min(raw * self.scale, P1_CLIP)
        pair = tuple(sorted(gate.targets))
        raw = self.p2.get(pair, self.default_p2)
        return min(raw * self.scale, P2_CLIP)

    def readout_error(self, qubit: int) -> float:
        raw = self.readout.get(qubit, self.default_readout)
        return min(raw * self.scale, READOUT_CLIP)

    def has_gate_noise(self) -> bool:
        """True if any gate anywhere could fire an error."""
        return (
            self.default_p1 > 0
            or self.default_p2 > 0
            or any(v > 0 for v in self.p1.values())
            or any(v > 0 for v in self.p2.values())
        )


def apply_pauli(state: StateVector, kind: str, qubit: int) -> StateVector:
    """Deterministically apply one Pauli fault (the fired-error branch)."""
    if kind not in _PAULI_KINDS:
        raise ValueError(f"Pauli kind must be X, Y or Z, got {kind!r}")
    return apply_gate(state, Gate(f"Pauli{kind}", (qubit,)))


def inject_gate_noise(
    state: StateVector,
    gate: Gate,
    model: NoiseModel,
    rng: np.random.Generator,
) -> StateVector:
    """Stochastic post-gate error channel, one trajectory.

    With the gate's effective error probability, applies one uniformly
    chosen Pauli (X/Y/Z) to each qubit the gate touches; otherwise the
    state passes through unchanged.  Draw order: one fire/no-fire draw,
    then one Pauli-choice draw per touched qubit when fired.
    """
    eps = model.gate_error(gate)
    if rng.random() >= eps:
        return state
    out = state
    for q in gate.targets:
        kind = _PAULI_KINDS[rng.integers(3)]
        out = apply_pauli(out, kind, q)
    return out


def flip_outcome(outcome: int, rate: float, rng: np.random.Generator) -> int:
    """Flip a +/-1 outcome with the given raw probability (no clipping)."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"flip rate must be in [0, 1], got {rate}")
    if rate > 0 and rng.random() < rate:
        return -outcome
    return outcome


def apply_readout_flip(
    outcome: int,
    qubit: int,
    model: NoiseModel,
    rng: np.random.Generator,
) -> int:
    """Flip a +/-1 measurement outcome with the qubit's readout error."""
    return flip_outcome(outcome, model.readout_error(qubit), rng)


def scale_regime(model: NoiseModel, regime: str) -> NoiseModel:
    """Scale a base (low-regime) model: low x1, medium x2, high x4.

    Effective probabilities remain clipped at the hardware limits, so
    entries already at a clip stay there.
    """
    try:
        factor = REGIME_FACTORS[regime]
    except KeyError:
        raise ValueError(
            f"regime must be one of {sorted(REGIME_FACTORS)}, got {regime!r}"
        ) from None
    return replace(model, scale=model.scale * factor)


def _parse_cal_line(line: str, lineno: int, path: str) -> tuple | None:
    text = line.split("#", 1)[0].strip()
    if not text:
        return None
    if "=" not in text:
        raise CalibrationError(f"{path}:{lineno}: expected 'key = value' in {line!r}")
    key_part, value_part = text.split("=", 1)
    tokens = key_part.split()
    try:
        value = float(value_part.strip())
    except ValueError:
        raise CalibrationError(
            f"{path}:{lineno}: value {value_part.strip()!r} is not a number"
        ) from None
    if not 0.0 <= value <= 1.0:
        raise CalibrationError(
            f"{path}:{lineno}: probability {value} outside [0, 1]"
        )

    def qubit(tok: str) -> int:
        if not tok.startswith("q") or not tok[1:].isdigit():
            raise CalibrationError(
                f"{path}:{lineno}: expected qubit token like 'q3', got {tok!r}"
            )
        return int(tok[1:])

    if tokens == ["default_p1"]:
        return ("default_p1", value)
    if tokens == ["default_p2"]:
        return ("default_p2", value)
    if tokens == ["default_readout"]:
        return ("default_readout", value)
    if len(tokens) == 2 and tokens[0] == "p1":
        return ("p1", qubit(tokens[1]), value)
    if len(tokens) == 2 and tokens[0] == "readout":
        return ("readout", qubit(tokens[1]), value)
    if len(tokens) == 3 and tokens[0] == "p2":
        return ("p2", qubit(tokens[1]), qubit(tokens[2]), value)
    raise CalibrationError(f"{path}:{lineno}: unknown key {key_part.strip()!r}")


def load_calibration(path: str | Path) -> NoiseModel:
    """Read a line-oriented calibration file into a low-regime NoiseModel.

    Grammar (one entry per line, '#' starts a comment)::

        default_p1 = 0.005
        default_p2 = 0.02
        default_readout = 0.03
        p1 q0 = 0.004
        p2 q0 q1 = 0.025
        readout q3 = 0.03
    """
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise CalibrationError(f"calibration file not found: {path}") from None
    p1: dict[int, float] = {}
    p2: dict[tuple[int, int], float] = {}
    readout: dict[int, float] = {}
    defaults = {"default_p1": 0.0, "default_p2": 0.0, "default_readout": 0.0}
    for lineno, line in enumerate(raw.splitlines(), start=1):
        parsed = _parse_cal_line(line, lineno, str(path))
        if parsed is None:
            continue
        if parsed[0] in defaults:
            defaults[parsed[0]] = parsed[1]
        elif parsed[0] == "p1":
            p1[parsed[1]] = parsed[2]
        elif parsed[0] == "readout":
            readout[parsed[1]] = parsed[2]
        else:
            p2[tuple(sorted((parsed[1], parsed[2])))] = parsed[3]
    return NoiseModel(p1=p1, p2=p2, readout=readout, scale=1.0, **defaults)
