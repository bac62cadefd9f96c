"""Experiment configuration: flat dotted-key text files.

Grammar: one ``section.key = value`` per line, ``#`` starts a comment,
blank lines ignored.  Every key has a documented default, so a minimal
file like::

    dataset.kind = synth
    seed = 7

is a complete experiment.  ``parse_config`` validates types and
cross-field invariants; ``resolved_text`` serializes the fully
materialized config, and parsing that text reproduces the same
ExperimentConfig (round-trip property).

Known keys and defaults:

    dataset.kind          synth | idx | csv        (synth)
    dataset.n_samples     int >= 1                 (120)    synth only
    dataset.n_classes     int >= 1                 (2)      synth only
    dataset.d             int >= 1                 (qnn.n_qubits) synth only
    dataset.sigma         float >= 0, radians      (0.1 * pi)     synth only
    dataset.images        path                     idx only
    dataset.labels        path                     idx only
    dataset.path          path                     csv only
    qnn.n_qubits          int 1..12                (4)
    qnn.n_layers          int 1..10                (1)
    qnn.n_classes         int 1..n_qubits          (2)
    qnn.init_scale        float > 0                (0.1)
    train.eta             float > 0                (0.1)
    train.lambda          float >= 0               (0.1)
    train.gamma           float >= 0               (1.0)
    train.T               int >= 1 local steps     (2)
    train.K               int >= 0 rounds          (30)
    train.M               int >= 1 or 'exact'      (25)
    train.E_max           int >= 0                 (3)
    train.beta            float > 0                (2.0)
    train.R               int >= 2                 (4)
    train.batch_size      int >= 1                 (4)
    train.sporadic        bool                     (true)
    train.personalization bool                     (true)
    train.noise_estimate_mode  empirical | analytic (empirical)
    train.nu              float > 0                (1.0)
    noise.calibration     path or 'none'           (none -> built-in lows)
    noise.regime          low | medium | high      (low)
    noise.recalibrate_each_round  bool             (false)
    federation.n_clients  int >= 1                 (10)
    federation.fractions  comma floats summing to 1 (split preset for
                          3/5/10 clients, else equal)
    federation.selection_fraction  float in (0, 1] (1.0)
    compare.acc_threshold float in (0, 1]          (0.9)
    seed                  int >= 0                 (0)
    out                   path                     (out)
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace
from pathlib import Path

from .client import TrainConfig
from .data import ten_client_fractions
from .qnn import EXACT, QnnSpec

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "parse_config",
    "parse_config_text",
    "resolved_text",
    "config_sha256",
]

PRESET_FRACTIONS = {
    3: (0.25, 0.35, 0.40),
    # the published five-device percentages total 110%, so they are
    # normalized here; on n = 110 the shard sizes come out exact
    5: tuple(v / 1.10 for v in (0.14, 0.18, 0.22, 0.26, 0.30)),
}


class ConfigError(ValueError):
    """Config file is malformed or violates an invariant."""


@dataclass(frozen=True)
class DatasetSection:
    kind: str = "synth"
    n_samples: int = 120
    n_classes: int = 2
    d: int | None = None
    sigma: float = 0.1 * math.pi
    images: str | None = None
    labels: str | None = None
    path: str | None = None


@dataclass(frozen=True)
class QnnSection:
    n_qubits: int = 4
    n_layers: int = 1
    n_classes: int = 2
    init_scale: float = 0.1


@dataclass(frozen=True)
class TrainSection:
    eta: float = 0.1
    lam: float = 0.1
    gamma: float = 1.0
    local_steps: int = 2
    rounds: int = 30
    m_shots: int | str = 25
    e_max: int = 3
    beta: float = 2.0
    noise_repeats: int = 4
    batch_size: int = 4
    sporadic: bool = True
    personalization: bool = True
    noise_estimate_mode: str = "empirical"
    nu: float = 1.0


@dataclass(frozen=True)
class NoiseSection:
    calibration: str | None = None
    regime: str = "low"
    recalibrate_each_round: bool = False


@dataclass(frozen=True)
class FederationSection:
    n_clients: int = 10
    fractions: tuple[float, ...] | None = None
    selection_fraction: float = 1.0


@dataclass(frozen=True)
class CompareSection:
    acc_threshold: float = 0.9


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSection
    qnn: QnnSection
    train: TrainSection
    noise: NoiseSection
    federation: FederationSection
    compare: CompareSection
    seed: int = 0
    out: str = "out"

    @property
    def qnn_spec(self) -> QnnSpec:
        return QnnSpec(self.qnn.n_qubits, self.qnn.n_layers, self.qnn.n_classes)

    @property
    def train_config(self) -> TrainConfig:
        t = self.train
        return TrainConfig(
            eta=t.eta,
            lam=t.lam,
            gamma=t.gamma,
            local_steps=t.local_steps,
            e_max=t.e_max,
            beta=t.beta,
            m_shots=t.m_shots,
            noise_repeats=t.noise_repeats,
            batch_size=t.batch_size,
            sporadic_enabled=t.sporadic,
            personalization_enabled=t.personalization,
            noise_estimate_mode=t.noise_estimate_mode,
            nu=t.nu,
        )


def _parse_bool(text: str) -> bool:
    if text.lower() in ("true", "1", "yes"):
        return True
    if text.lower() in ("false", "0", "no"):
        return False
    raise ValueError(f"expected true/false, got {text!r}")


def _parse_int(text: str) -> int:
    return int(text)


def _parse_float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"expected a finite number, got {text!r}")
    return value


def _parse_shots(text: str):
    if text.strip().lower() == EXACT:
        return EXACT
    return int(text)


def _parse_path_or_none(text: str):
    return None if text.strip().lower() == "none" else text.strip()


def _parse_fractions(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in text.split(",") if tok.strip())


def _parse_str(text: str) -> str:
    return text.strip()


_SCHEMA = {
    "dataset.kind": _parse_str,
    "dataset.n_samples": _parse_int,
    "dataset.n_classes": _parse_int,
    "dataset.d": _parse_int,
    "dataset.sigma": _parse_float,
    "dataset.images": _parse_path_or_none,
    "dataset.labels": _parse_path_or_none,
    "dataset.path": _parse_path_or_none,
    "qnn.n_qubits": _parse_int,
    "qnn.n_layers": _parse_int,
    "qnn.n_classes": _parse_int,
    "qnn.init_scale": _parse_float,
    "train.eta": _parse_float,
    "train.lambda": _parse_float,
    "train.gamma": _parse_float,
    "train.T": _parse_int,
    "train.K": _parse_int,
    "train.M": _parse_shots,
    "train.E_max": _parse_int,
    "train.beta": _parse_float,
    "train.R": _parse_int,
    "train.batch_size": _parse_int,
    "train.sporadic": _parse_bool,
    "train.personalization": _parse_bool,
    "train.noise_estimate_mode": _parse_str,
    "train.nu": _parse_float,
    "noise.calibration": _parse_path_or_none,
    "noise.regime": _parse_str,
    "noise.recalibrate_each_round": _parse_bool,
    "federation.n_clients": _parse_int,
    "federation.fractions": _parse_fractions,
    "federation.selection_fraction": _parse_float,
    "compare.acc_threshold": _parse_float,
    "seed": _parse_int,
    "out": _parse_str,
}


def default_fractions(n_clients: int) -> tuple[float, ...]:
    """The documented split for a client count: presets for 3/5, the
    9-16% ramp for 10, equal otherwise."""
    if n_clients in PRESET_FRACTIONS:
        return PRESET_FRACTIONS[n_clients]
    if n_clients == 10:
        return ten_client_fractions()
    return tuple(1.0 / n_clients for _ in range(n_clients))


def _build(values: dict) -> ExperimentConfig:
    dataset = DatasetSection(
        kind=values["dataset.kind"],
        n_samples=values["dataset.n_samples"],
        n_classes=values["dataset.n_classes"],
        d=values["dataset.d"],
        sigma=values["dataset.sigma"],
        images=values["dataset.images"],
        labels=values["dataset.labels"],
        path=values["dataset.path"],
    )
    qnn_sec = QnnSection(
        n_qubits=values["qnn.n_qubits"],
        n_layers=values["qnn.n_layers"],
        n_classes=values["qnn.n_classes"],
        init_scale=values["qnn.init_scale"],
    )
    train = TrainSection(
        eta=values["train.eta"],
        lam=values["train.lambda"],
        gamma=values["train.gamma"],
        local_steps=values["train.T"],
        rounds=values["train.K"],
        m_shots=values["train.M"],
        e_max=values["train.E_max"],
        beta=values["train.beta"],
        noise_repeats=values["train.R"],
        batch_size=values["train.batch_size"],
        sporadic=values["train.sporadic"],
        personalization=values["train.personalization"],
        noise_estimate_mode=values["train.noise_estimate_mode"],
        nu=values["train.nu"],
    )
    noise = NoiseSection(
        calibration=values["noise.calibration"],
        regime=values["noise.regime"],
        recalibrate_each_round=values["noise.recalibrate_each_round"],
    )
    federation = FederationSection(
        n_clients=values["federation.n_clients"],
        fractions=values["federation.fractions"],
        selection_fraction=values["federation.selection_fraction"],
    )
    compare = CompareSection(acc_threshold=values["compare.acc_threshold"])
    return ExperimentConfig(
        dataset=dataset,
        qnn=qnn_sec,
        train=train,
        noise=noise,
        federation=federation,
        compare=compare,
        seed=values["seed"],
        out=values["out"],
    )


def _validate(cfg: ExperimentConfig) -> ExperimentConfig:
    # Materialize derived defaults first
    if cfg.dataset.d is None:
        cfg = replace(cfg, dataset=replace(cfg.dataset, d=cfg.qnn.n_qubits))
    if cfg.federation.fractions is None:
        cfg = replace(
            cfg,
            federation=replace(
                cfg.federation,
                fractions=default_fractions(cfg.federation.n_clients),
            ),
        )

    if cfg.dataset.kind not in ("synth", "idx", "csv"):
        raise ConfigError(f"dataset.kind must be synth/idx/csv, got {cfg.dataset.kind!r}")
    if cfg.dataset.kind == "idx" and (cfg.dataset.images is None or cfg.dataset.labels is None):
        raise ConfigError("dataset.kind = idx requires dataset.images and dataset.labels")
    if cfg.dataset.kind == "csv" and cfg.dataset.path is None:
        raise ConfigError("dataset.kind = csv requires dataset.path")
    if cfg.dataset.kind == "synth":
        if cfg.dataset.n_samples < 1:
            raise ConfigError("dataset.n_samples must be >= 1")
        if cfg.dataset.n_classes != cfg.qnn.n_classes:
            raise ConfigError(
                f"dataset.n_classes ({cfg.dataset.n_classes}) must equal "
                f"qnn.n_classes ({cfg.qnn.n_classes}) for the synthetic task"
            )
        if cfg.dataset.d < cfg.qnn.n_qubits:
            raise ConfigError(
                f"dataset.d ({cfg.dataset.d}) must be >= qnn.n_qubits "
                f"({cfg.qnn.n_qubits})"
            )
        if cfg.dataset.sigma < 0:
            raise ConfigError("dataset.sigma must be >= 0")

    try:
        cfg.qnn_spec
    except ValueError as exc:
        raise ConfigError(f"qnn section invalid: {exc}") from None
    if cfg.qnn.init_scale <= 0:
        raise ConfigError("qnn.init_scale must be > 0")

    if cfg.train.rounds < 0:
        raise ConfigError("train.K must be >= 0")
    try:
        cfg.train_config
    except ValueError as exc:
        raise ConfigError(f"train section invalid: {exc}") from None

    if cfg.noise.regime not in ("low", "medium", "high"):
        raise ConfigError(f"noise.regime must be low/medium/high, got {cfg.noise.regime!r}")

    fed = cfg.federation
    if fed.n_clients < 1:
        raise ConfigError("federation.n_clients must be >= 1")
    if len(fed.fractions) != fed.n_clients:
        raise ConfigError(
            f"federation.fractions has {len(fed.fractions)} entries "
            f"for {fed.n_clients} clients"
        )
    if any(f <= 0 for f in fed.fractions):
        raise ConfigError("federation.fractions must be positive")
    if abs(sum(fed.fractions) - 1.0) > 1e-9:
        raise ConfigError(f"federation.fractions must sum to 1, got {sum(fed.fractions)}")
    if not 0 < fed.selection_fraction <= 1:
        raise ConfigError("federation.selection_fraction must be in (0, 1]")

    if not 0 < cfg.compare.acc_threshold <= 1:
        raise ConfigError("compare.acc_threshold must be in (0, 1]")
    if cfg.seed < 0:
        raise ConfigError("seed must be >= 0")
    return cfg


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    values = {key: None for key in _SCHEMA}
    defaults = _defaults()
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(
                f"{source}:{lineno}: duplicate key {key!r} (first at line {seen[key]})"
            )
        seen[key] = lineno
        try:
            values[key] = _SCHEMA[key](value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    for key, default in defaults.items():
        if values[key] is None and key not in seen:
            values[key] = default
    return _validate(_build(values))


def parse_config(path: str | Path) -> ExperimentConfig:
    """Parse and validate a config file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    return parse_config_text(text, source=str(path))


def _defaults() -> dict:
    d = DatasetSection()
    q = QnnSection()
    t = TrainSection()
    n = NoiseSection()
    f = FederationSection()
    c = CompareSection()
    return {
        "dataset.kind": d.kind,
        "dataset.n_samples": d.n_samples,
        "dataset.n_classes": d.n_classes,
        "dataset.d": d.d,
        "dataset.sigma": d.sigma,
        "dataset.images": d.images,
        "dataset.labels": d.labels,
        "dataset.path": d.path,
        "qnn.n_qubits": q.n_qubits,
        "qnn.n_layers": q.n_layers,
        "qnn.n_classes": q.n_classes,
        "qnn.init_scale": q.init_scale,
        "train.eta": t.eta,
        "train.lambda": t.lam,
        "train.gamma": t.gamma,
        "train.T": t.local_steps,
        "train.K": t.rounds,
        "train.M": t.m_shots,
        "train.E_max": t.e_max,
        "train.beta": t.beta,
        "train.R": t.noise_repeats,
        "train.batch_size": t.batch_size,
        "train.sporadic": t.sporadic,
        "train.personalization": t.personalization,
        "train.noise_estimate_mode": t.noise_estimate_mode,
        "train.nu": t.nu,
        "noise.calibration": n.calibration,
        "noise.regime": n.regime,
        "noise.recalibrate_each_round": n.recalibrate_each_round,
        "federation.n_clients": f.n_clients,
        "federation.fractions": f.fractions,
        "federation.selection_fraction": f.selection_fraction,
        "compare.acc_threshold": c.acc_threshold,
        "seed": 0,
        "out": "out",
    }


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ",".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def resolved_text(cfg: ExperimentConfig) -> str:
    """Serialize a config with every default materialized.

    Parsing the result reproduces the same ExperimentConfig.
    """
    pairs = [
        ("dataset.kind", cfg.dataset.kind),
        ("dataset.n_samples", cfg.dataset.n_samples),
        ("dataset.n_classes", cfg.dataset.n_classes),
        ("dataset.d", cfg.dataset.d),
        ("dataset.sigma", cfg.dataset.sigma),
        ("dataset.images", cfg.dataset.images),
        ("dataset.labels", cfg.dataset.labels),
        ("dataset.path", cfg.dataset.path),
        ("qnn.n_qubits", cfg.qnn.n_qubits),
        ("qnn.n_layers", cfg.qnn.n_layers),
        ("qnn.n_classes", cfg.qnn.n_classes),
        ("qnn.init_scale", cfg.qnn.init_scale),
        ("train.eta", cfg.train.eta),
        ("train.lambda", cfg.train.lam),
        ("train.gamma", cfg.train.gamma),
        ("train.T", cfg.train.local_steps),
        ("train.K", cfg.train.rounds),
        ("train.M", cfg.train.m_shots),
        ("train.E_max", cfg.train.e_max),
        ("train.beta", cfg.train.beta),
        ("train.R", cfg.train.noise_repeats),
        ("train.batch_size", cfg.train.batch_size),
        ("train.sporadic", cfg.train.sporadic),
        ("train.personalization", cfg.train.personalization),
        ("train.noise_estimate_mode", cfg.train.noise_estimate_mode),
        ("train.nu", cfg.train.nu),
        ("noise.calibration", cfg.noise.calibration),
        ("noise.regime", cfg.noise.regime),
        ("noise.recalibrate_each_round", cfg.noise.recalibrate_each_round),
        ("federation.n_clients", cfg.federation.n_clients),
        ("federation.fractions", cfg.federation.fractions),
        ("federation.selection_fraction", cfg.federation.selection_fraction),
        ("compare.acc_threshold", cfg.compare.acc_threshold),
        ("seed", cfg.seed),
        ("out", cfg.out),
    ]
    lines = [f"{key} = {_format_value(value)}" for key, value in pairs]
    return "\n".join(lines) + "\n"


def config_sha256(cfg: ExperimentConfig) -> str:
    """Experiment identity hash.

    The output directory is excluded so the same experiment hashes the
    same wherever its artifacts land.
    """
    normalized = replace(cfg, out="out")
    return hashlib.sha256(resolved_text(normalized).encode("utf-8")).hexdigest()
