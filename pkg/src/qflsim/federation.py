"""Server loop: selection, broadcast, aggregation, round bookkeeping.

Each round the server sends the global parameters to a selected client
set, clients train locally in parallel (fork-join), and the server takes
the unweighted coordinate-wise mean of the returned parameter vectors.
Global loss and accuracy are evaluated in exact (noiseless) mode for
reporting stability.  All per-client randomness is keyed by
(round, client), so results are identical for any worker count.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import data as data_mod
from . import qnn
from .client import ClientState, LocalReport, TrainConfig, local_round
from .noise import NoiseModel, load_calibration, scale_regime
from .qnn import QnnSpec
from .rng import SeedTree

__all__ = [
    "AggregationError",
    "RoundError",
    "ServerState",
    "RoundReport",
    "select_clients",
    "aggregate",
    "global_loss",
    "global_accuracy",
    "run_round",
    "run_training",
]

logger = logging.getLogger(__name__)


class AggregationError(ValueError):
    """Nothing to aggregate."""


class RoundError(RuntimeError):
    """A round produced no usable client updates."""


@dataclass(frozen=True)
class ServerState:
    global_params: np.ndarray
    round_index: int
    prev_global_loss: float
    history: tuple = field(default_factory=tuple)


@dataclass(frozen=True)
class RoundReport:
    """Per-round metrics record: client entries plus global aggregates."""

    round_index: int
    client_reports: tuple[LocalReport, ...]
    global_loss: float
    global_accuracy: float
    wall_seconds: float

    @property
    def mean_x(self) -> float:
        active = [r.weight_x for r in self.client_reports if not r.skipped]
        return float(np.mean(active)) if active else float("nan")

    @property
    def mean_extra_epochs(self) -> float:
        active = [r.epochs_run - 1 for r in self.client_reports if not r.skipped]
        return float(np.mean(active)) if active else float("nan")

    @property
    def mean_local_loss(self) -> float:
        active = [r.local_loss for r in self.client_reports if not r.skipped]
        return float(np.mean(active)) if active else float("nan")


def select_clients(
    n_total: int, fraction: float, rng: np.random.Generator
) -> tuple[int, ...]:
    """Uniform sample without replacement, size max(1, round(f * n)).

    fraction = 1 returns every client in canonical id order.
    """
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    if n_total < 1:
        raise ValueError(f"n_total must be >= 1, got {n_total}")
    if fraction == 1.0:
        return tuple(range(n_total))
    size = max(1, round(fraction * n_total))
    chosen = rng.choice(n_total, size=size, replace=False)
    return tuple(sorted(int(c) for c in chosen))


def aggregate(param_list: list[np.ndarray]) -> np.ndarray:
    """Coordinate-wise arithmetic mean over participating clients."""
    if not param_list:
        raise AggregationError("cannot aggregate an empty parameter list")
    arrays = [np.asarray(p, dtype=float) for p in param_list]
    shape = arrays[0].shape
    for a in arrays:
        if a.shape != shape:
            raise qnn.ShapeError(
                f"parameter length mismatch in aggregation: {a.shape} vs {shape}"
            )
    return np.mean(arrays, axis=0)


def _shard_metrics(spec: QnnSpec, params: np.ndarray, shard) -> tuple[float, float]:
    losses, correct = [], 0
    for feats, label in zip(shard.features, shard.labels):
        pred = qnn.forward_exact(spec, params, feats)
        losses.append(qnn.loss_ce(pred, int(label)))
        correct += int(np.argmax(pred.probabilities)) == int(label)
    return float(np.mean(losses)), correct / shard.n_samples


def _global_metrics(
    clients: list[ClientState], spec: QnnSpec, params: np.ndarray
) -> tuple[float, float]:
    losses, accs = [], []
    for c in clients:
        if c.shard.n_samples == 0:
            logger.warning("client %d has an empty shard; excluded from loss", c.client_id)
            continue
        loss, acc = _shard_metrics(spec, params, c.shard)
        losses.append(loss)
        accs.append(acc)
    if not losses:
        raise RoundError("no client has a non-empty shard")
    return float(np.mean(losses)), float(np.mean(accs))


def global_loss(
    clients: list[ClientState], spec: QnnSpec, params: np.ndarray
) -> float:
    """Mean over clients of their mean shard loss, exact mode."""
    return _global_metrics(clients, spec, params)[0]


def global_accuracy(
    clients: list[ClientState], spec: QnnSpec, params: np.ndarray
) -> float:
    """Mean over clients of their shard accuracy, exact mode."""
    return _global_metrics(clients, spec, params)[1]


def run_round(
    server: ServerState,
    clients: list[ClientState],
    config: TrainConfig,
    spec: QnnSpec,
    model: NoiseModel,
    seeds: SeedTree,
    selection_fraction: float = 1.0,
    workers: int = 1,
) -> tuple[ServerState, list[ClientState], RoundReport]:
    """One communication round: select, train in parallel, aggregate."""
    if not clients:
        raise RoundError("run_round needs at least one client")
    started = time.perf_counter()
    k = server.round_index + 1
    selected = select_clients(len(clients), selection_fraction, seeds.stream("select", k))

    def train(idx: int) -> tuple[ClientState, LocalReport]:
        return local_round(
            clients[idx], server.global_params, server.prev_global_loss,
            config, spec, model, seeds, k,
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(train, selected))
    else:
        results = [train(i) for i in selected]

    updated = list(clients)
    reports = []
    collected = []
    for idx, (state, report) in zip(selected, results):
        updated[idx] = state
        reports.append(report)
        if not report.skipped:
            collected.append(state.params)
    if not collected:
        raise RoundError(f"round {k}: every selected client was skipped")

    new_params = aggregate(collected)
    loss, acc = _global_metrics(updated, spec, new_params)
    report = RoundReport(
        round_index=k,
        client_reports=tuple(reports),
        global_loss=loss,
        global_accuracy=acc,
        wall_seconds=time.perf_counter() - started,
    )
    new_server = ServerState(
        global_params=new_params,
        round_index=k,
        prev_global_loss=loss,
        history=server.history + (report,),
    )
    return new_server, updated, report


def build_noise_model(noise_cfg) -> NoiseModel:
    """Realize an experiment's noise section as a scaled NoiseModel."""
    if noise_cfg.calibration is not None:
        base = load_calibration(noise_cfg.calibration)
    else:
        base = NoiseModel(
            default_p1=0.005, default_p2=0.02, default_readout=0.03
        )
    return scale_regime(base, noise_cfg.regime)


def load_experiment_dataset(cfg) -> data_mod.Dataset:
    """Materialize the configured dataset, reduced to the qubit count."""
    d = cfg.qnn.n_qubits
    if cfg.dataset.kind == "synth":
        ds = data_mod.synth_dataset(
            cfg.seed, cfg.dataset.n_samples, cfg.dataset.n_classes,
            cfg.dataset.d, cfg.dataset.sigma,
        )
        feats = ds.features
        if feats.shape[1] != d:
            feats = data_mod.reduce_features(feats, d)
        return data_mod.Dataset(feats, ds.labels, ds.n_classes)
    if cfg.dataset.kind == "idx":
        ds = data_mod.load_idx(cfg.dataset.images, cfg.dataset.labels)
    else:
        ds = data_mod.load_csv(cfg.dataset.path)
    feats = ds.features
    if feats.shape[1] != d:
        feats = data_mod.reduce_features(feats, d)
    feats = data_mod.normalize_to_angles(feats)
    return data_mod.Dataset(feats, ds.labels, ds.n_classes)


def init_clients(dataset, cfg, seeds: SeedTree) -> list[ClientState]:
    shards = data_mod.partition_noniid(
        dataset,
        data_mod.PartitionSpec(cfg.federation.fractions),
        seeds.stream("partition"),
    )
    rng = seeds.stream("init")
    w0 = qnn.init_params(cfg.qnn_spec, rng, cfg.qnn.init_scale)
    return [
        ClientState(client_id=i, shard=shard, params=w0.copy(), rng_seed=cfg.seed)
        for i, shard in enumerate(shards)
    ], w0


def run_training(cfg, on_round=None, workers: int = 1):
    """Run the full K-round schedule described by an ExperimentConfig.

    Returns (reports, server, clients).  `on_round` is called with each
    RoundReport as it is produced, so metric sinks can flush
    incrementally.  With rounds = 0 the initial model is the final model
    and the report list is empty.
    """
    seeds = SeedTree(cfg.seed)
    spec = cfg.qnn_spec
    dataset = load_experiment_dataset(cfg)
    clients, w0 = init_clients(dataset, cfg, seeds)
    model = build_noise_model(cfg.noise)
    config = cfg.train_config

    server = ServerState(
        global_params=w0,
        round_index=0,
        prev_global_loss=global_loss(clients, spec, w0),
    )
    reports = []
    for _ in range(cfg.train.rounds):
        if cfg.noise.recalibrate_each_round and cfg.noise.calibration is not None:
            model = build_noise_model(cfg.noise)
        server, clients, report = run_round(
            server, clients, config, spec, model, seeds,
            selection_fraction=cfg.federation.selection_fraction,
            workers=workers,
        )
        reports.append(report)
        if on_round is not None:
            on_round(report)
    return reports, server, clients
