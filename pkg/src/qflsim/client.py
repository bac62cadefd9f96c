"""One federated device's local training loop.

Per round a client measures its own noise level, derives a sporadic
weight x = exp(-gamma * xi) that damps the gradient step, and runs
proximally personalized SGD anchored at the round's global parameters.
Clients whose local loss stays above the previous global loss run extra
local epochs, capped.  With both toggles off the update law reduces to
plain SGD.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import qnn, theory
from .data import Dataset
from .noise import NoiseModel
from .qnn import EXACT, QnnSpec
from .rng import SeedTree

__all__ = [
    "TrainConfig",
    "ClientState",
    "LocalReport",
    "estimate_noise",
    "sporadic_weight",
    "local_step",
    "extra_epoch_count",
    "local_round",
]


@dataclass(frozen=True)
class TrainConfig:
    """Local-training hyperparameters.

    (sporadic_enabled, personalization_enabled) toggles select the method:
    (False, False) is the plain baseline, (False, True) personalization
    only, (True, True) the full scheme.
    """

    eta: float = 0.1
    lam: float = 0.1
    gamma: float = 1.0
    local_steps: int = 2
    e_max: int = 3
    beta: float = 2.0
    m_shots: int | str = 25
    noise_repeats: int = 4
    batch_size: int = 4
    sporadic_enabled: bool = True
    personalization_enabled: bool = True
    noise_estimate_mode: str = "empirical"
    nu: float = 1.0

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.local_steps < 1:
            raise ValueError(f"local_steps must be >= 1, got {self.local_steps}")
        if self.e_max < 0:
            raise ValueError(f"e_max must be >= 0, got {self.e_max}")
        if self.beta <= 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if self.m_shots != EXACT and (
            not isinstance(self.m_shots, (int, np.integer)) or self.m_shots < 1
        ):
            raise ValueError(f"m_shots must be >= 1 or EXACT, got {self.m_shots!r}")
        if self.noise_repeats < 2:
            raise ValueError(f"noise_repeats must be >= 2, got {self.noise_repeats}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.noise_estimate_mode not in ("empirical", "analytic"):
            raise ValueError(
                f"noise_estimate_mode must be empirical or analytic, "
                f"got {self.noise_estimate_mode!r}"
            )
        if self.nu <= 0:
            raise ValueError(f"nu must be > 0, got {self.nu}")


@dataclass(frozen=True)
class ClientState:
    """One device: its shard, local parameters, and noise estimate."""

    client_id: int
    shard: Dataset
    params: np.ndarray
    xi_hat: float = 0.0
    last_local_loss: float = math.inf
    rng_seed: int = 0

    def __post_init__(self):
        if self.xi_hat < 0:
            raise ValueError(f"xi_hat must be >= 0, got {self.xi_hat}")


@dataclass(frozen=True)
class LocalReport:
    """What a client sends back to the server after one round."""

    client_id: int
    local_loss: float
    weight_x: float
    epochs_run: int
    param_delta_norm: float
    skipped: bool = False


def estimate_noise(
    spec: QnnSpec,
    params: np.ndarray,
    probe_sample: tuple[np.ndarray, int],
    config: TrainConfig,
    model: NoiseModel,
    rng: np.random.Generator,
) -> float:
    """On-device noise magnitude estimate, >= 0.

    Empirical mode evaluates the probe sample `noise_repeats` times with
    finite shots and returns the per-class standard deviation of the
    estimated expectations, averaged over classes.  Analytic mode plugs
    the shot count into the closed-form variance bound instead.
    """
    if config.noise_estimate_mode == "analytic":
        if config.m_shots == EXACT:
            return 0.0
        bound = theory.grad_variance_bound(
            theory.BoundParams(
                nu=config.nu,
                n_outcomes=2,
                n_params=qnn.n_params(spec),
                obs_trace_sq=2.0,
                shots=int(config.m_shots),
            )
        )
        return math.sqrt(bound)
    if config.noise_repeats < 2:
        raise ValueError("empirical noise estimation needs noise_repeats >= 2")
    if config.m_shots == EXACT:
        # Exact evaluations are deterministic; spread is identically zero.
        return 0.0
    features, _ = probe_sample
    streams = rng.spawn(config.noise_repeats)
    estimates = np.stack(
        [
            qnn.forward_shots(spec, params, features, config.m_shots, model, s).expectations
            for s in streams
        ]
    )
    return float(np.mean(np.std(estimates, axis=0, ddof=1)))


def sporadic_weight(xi_hat: float, gamma: float) -> float:
    """Noise-aware update weight x = exp(-gamma * xi_hat), in (0, 1]."""
    if xi_hat < 0:
        raise ValueError(f"xi_hat must be >= 0, got {xi_hat}")
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    return math.exp(-gamma * xi_hat)


def _batch_grad(
    spec: QnnSpec,
    params: np.ndarray,
    batch: list[tuple[np.ndarray, int]],
    config: TrainConfig,
    model: NoiseModel,
    rng: np.random.Generator,
) -> np.ndarray:
    streams = rng.spawn(len(batch))
    grads = [
        qnn.param_shift_grad(spec, params, sample, config.m_shots, model, s)
        for sample, s in zip(batch, streams)
    ]
    return np.mean(grads, axis=0)


def local_step(
    state: ClientState,
    global_params: np.ndarray,
    config: TrainConfig,
    batch: list[tuple[np.ndarray, int]],
    spec: QnnSpec,
    model: NoiseModel,
    rng: np.random.Generator,
) -> ClientState:
    """One mini-batch update of the combined rule.

    w <- w - eta * (g * x + lambda * (w - w_global)), where x is the
    sporadic weight (1 when disabled) and the proximal term is dropped
    when personalization is disabled.
    """
    w = np.asarray(state.params, dtype=float)
    if np.asarray(global_params).shape != w.shape:
        raise qnn.ShapeError("global params shape does not match client params")
    g = _batch_grad(spec, w, batch, config, model, rng)
    x = sporadic_weight(state.xi_hat, config.gamma) if config.sporadic_enabled else 1.0
    step = g * x
    if config.personalization_enabled:
        step = step + config.lam * (w - np.asarray(global_params, dtype=float))
    return replace(state, params=w - config.eta * step)


def extra_epoch_count(local_loss: float, prev_global_loss: float,
                      beta: float, e_max: int) -> int:
    """Extra local epochs for an underperforming client, in [0, e_max]."""
    if prev_global_loss <= 0 or not math.isfinite(prev_global_loss):
        return 0
    if local_loss <= prev_global_loss:
        return 0
    gap = (local_loss - prev_global_loss) / prev_global_loss
    # tiny slack so float dust cannot push an exact integer over the ceil
    return min(math.ceil(beta * gap - 1e-9), e_max)


def _shard_loss(spec: QnnSpec, params: np.ndarray, shard: Dataset) -> float:
    losses = [
        qnn.loss_ce(qnn.forward_exact(spec, params, f), int(y))
        for f, y in zip(shard.features, shard.labels)
    ]
    return float(np.mean(losses))


def local_round(
    state: ClientState,
    global_params: np.ndarray,
    prev_global_loss: float,
    config: TrainConfig,
    spec: QnnSpec,
    model: NoiseModel,
    seeds: SeedTree,
    round_index: int,
) -> tuple[ClientState, LocalReport]:
    """One full client round: noise refresh, T steps, conditional extras.

    All randomness comes from substreams keyed by (round, client), so
    clients may run in parallel and in any order.  Mini-batches are
    consecutive slices of the per-round shuffled shard, wrapping around.
    """
    cid = state.client_id
    if state.shard.n_samples == 0:
        return state, LocalReport(cid, math.nan, 1.0, 0, 0.0, skipped=True)

    global_params = np.asarray(global_params, dtype=float)
    order = seeds.stream("shuffle", round_index, cid).permutation(state.shard.n_samples)
    samples = [
        (state.shard.features[i], int(state.shard.labels[i])) for i in order
    ]

    state = replace(state, params=global_params.copy())
    if config.sporadic_enabled:
        xi = estimate_noise(
            spec, state.params, samples[0], config, model,
            seeds.stream("probe", round_index, cid),
        )
        state = replace(state, xi_hat=xi)
    x = sporadic_weight(state.xi_hat, config.gamma) if config.sporadic_enabled else 1.0

    n = len(samples)
    step_count = 0

    def run_pass(st: ClientState) -> ClientState:
        nonlocal step_count
        for _ in range(config.local_steps):
            lo = (step_count * config.batch_size) % n
            batch = [samples[(lo + j) % n] for j in range(min(config.batch_size, n))]
            st = local_step(
                st, global_params, config, batch, spec, model,
                seeds.stream("grad", round_index, cid, step_count),
            )
            step_count += 1
        return st

    state = run_pass(state)
    local_loss = _shard_loss(spec, state.params, state.shard)
    epochs = 1
    if config.personalization_enabled and local_loss > prev_global_loss:
        extra = extra_epoch_count(local_loss, prev_global_loss, config.beta, config.e_max)
        for _ in range(extra):
            state = run_pass(state)
            epochs += 1
        if extra:
            local_loss = _shard_loss(spec, state.params, state.shard)

    state = replace(state, last_local_loss=local_loss)
    delta = float(np.linalg.norm(state.params - global_params))
    return state, LocalReport(cid, local_loss, x, epochs, delta)
