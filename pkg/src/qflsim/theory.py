"""Closed-form evaluators for the shot-noise and convergence bounds.

The bound family: a per-device gradient-variance bound
sigma^2 = nu * N_h * D * Tr(H^2) / (2M), a geometric-decay-plus-floor
convergence gap, the composite per-round noise term, the 1/K global rate,
and the iteration count sufficient for a target error.  Conventions used
throughout: N_h = 2 outcomes and Tr(H^2) = 2 for a single-qubit Z
observable in its own 2-dimensional space; nu is a free hardware
constant (default 1) with no derived functional form.

Empirical validators measure gradient variance on real circuits and
compare against the bound under those conventions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import qnn
from .noise import NoiseModel
from .qnn import QnnSpec

__all__ = [
    "BoundParams",
    "grad_variance_bound",
    "gap_bound",
    "composite_noise_term",
    "global_rate_bound",
    "shot_noise_iterations",
    "empirical_grad_variance",
]


@dataclass(frozen=True)
class BoundParams:
    """Constants entering the bounds.

    nu: hardware noise constant; n_outcomes: observable outcome count
    (2 for Z); n_params: trainable parameter count; obs_trace_sq:
    Tr(H^2) of the observable; shots: measurement shots per expectation;
    n_clients: participating devices; eta/lam: learning rate and proximal
    coefficient; mu: strong-convexity constant; smoothness / smoothness_p:
    the two smoothness constants; grad_norm_bound: G with ||grad||^2 <= G^2;
    local_steps: T; mean_weight: average sporadic weight in (0, 1];
    pl_constant: Polyak-Lojasiewicz constant.
    """

    nu: float = 1.0
    n_outcomes: int = 2
    n_params: int = 1
    obs_trace_sq: float = 2.0
    shots: int = 1
    n_clients: int = 1
    eta: float = 0.1
    lam: float = 0.0
    mu: float = 1.0
    smoothness: float = 1.0
    smoothness_p: float = 1.0
    grad_norm_bound: float = 1.0
    local_steps: int = 1
    mean_weight: float = 1.0
    pl_constant: float = 1.0

    def __post_init__(self):
        positives = {
            "n_outcomes": self.n_outcomes,
            "n_params": self.n_params,
            "obs_trace_sq": self.obs_trace_sq,
            "shots": self.shots,
            "n_clients": self.n_clients,
            "eta": self.eta,
            "mu": self.mu,
            "smoothness": self.smoothness,
            "smoothness_p": self.smoothness_p,
            "local_steps": self.local_steps,
            "pl_constant": self.pl_constant,
        }
        for name, value in positives.items():
            if value <= 0:
                raise ValueError(f"{name} must be > 0, got {value}")
        # nu and the gradient-norm bound admit 0 as the noiseless limit
        if self.nu < 0:
            raise ValueError(f"nu must be >= 0, got {self.nu}")
        if self.grad_norm_bound < 0:
            raise ValueError(f"grad_norm_bound must be >= 0, got {self.grad_norm_bound}")
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if not 0 < self.mean_weight <= 1:
            raise ValueError(f"mean_weight must be in (0, 1], got {self.mean_weight}")


def grad_variance_bound(params: BoundParams, aggregated: bool = False) -> float:
    """Per-device gradient-variance bound nu*N_h*D*Tr(H^2)/(2M).

    With aggregated=True, returns the bound on the N-client mean
    gradient, which divides by N^2.
    """
    value = (
        params.nu * params.n_outcomes * params.n_params * params.obs_trace_sq
    ) / (2.0 * params.shots)
    if aggregated:
        value /= params.n_clients**2
    return value


def gap_bound(params: BoundParams, t_steps: int, initial_gap: float) -> float:
    """Loss gap after T noisy-SGD steps: geometric decay plus noise floor."""
    if t_steps < 0:
        raise ValueError(f"t_steps must be >= 0, got {t_steps}")
    contraction = params.eta * params.mu
    if not 0 < contraction < 1:
        raise ValueError(f"eta*mu must be in (0, 1), got {contraction}")
    variance = grad_variance_bound(params)
    floor = 0.5 * params.eta * params.smoothness * variance / params.mu
    return (1.0 - contraction) ** t_steps * initial_gap + floor


def composite_noise_term(params: BoundParams) -> float:
    """Composite per-round noise/heterogeneity term.

    term = eta/2 * [2*lam*eta^2*(1+eta)
                   + (2*lam*eta^2*x + 2*Lp*(1 + 2*lam + lam*eta
                      + 2*lam/eta + 1/(2*eta))*x)] * T * G^2
          + (1 + 1/(2*eta)) * x^2 * N * nu*N_h*D*Tr(H^2) / (2*M*N^2)
    """
    eta, lam, x = params.eta, params.lam, params.mean_weight
    lp = params.smoothness_p
    drift = 2.0 * lam * eta**2 * (1.0 + eta) + (
        2.0 * lam * eta**2 * x
        + 2.0 * lp * (1.0 + 2.0 * lam + lam * eta + 2.0 * lam / eta + 1.0 / (2.0 * eta)) * x
    )
    drift_term = 0.5 * eta * drift * params.local_steps * params.grad_norm_bound**2
    shot_term = (
        (1.0 + 1.0 / (2.0 * eta))
        * x**2
        * params.n_clients
        * grad_variance_bound(params)
        / params.n_clients**2
    )
    return drift_term + shot_term


def global_rate_bound(
    params: BoundParams,
    rounds: int,
    initial_distance_sq: float,
    composite: float | None = None,
) -> float:
    """Global optimality-gap bound after K rounds, decaying like 1/K.

    `composite` defaults to composite_noise_term(params); pass a value
    to evaluate the rate at a fixed composite term.
    """
    if rounds < 0:
        raise ValueError(f"rounds must be >= 0, got {rounds}")
    if initial_distance_sq < 0:
        raise ValueError("initial_distance_sq must be >= 0")
    lsm, mu = params.smoothness, params.mu
    if composite is None:
        composite = composite_noise_term(params)
    return (lsm / (2.0 * (rounds + lsm / mu))) * (
        9.0 * composite / (8.0 * mu**2) + (lsm / mu + 1.0) * initial_distance_sq
    )


def shot_noise_iterations(
    delta: float, mu: float, smoothness: float, variance: float, c: float = 1.0
) -> int:
    """Iterations sufficient for an O(delta) error under shot noise.

    T = ceil(c * (log(1/delta) + V/(delta*mu)) * L/mu).  The hidden
    constant of the asymptotic statement is surfaced as `c`.
    """
    for name, value in (
        ("delta", delta), ("mu", mu), ("smoothness", smoothness), ("c", c),
    ):
        if value <= 0:
            raise ValueError(f"{name} must be > 0, got {value}")
    if variance < 0:
        raise ValueError(f"variance must be >= 0, got {variance}")
    return math.ceil(c * (math.log(1.0 / delta) + variance / (delta * mu)) * smoothness / mu)


def empirical_grad_variance(
    spec: QnnSpec,
    params: np.ndarray,
    sample: tuple[np.ndarray, int],
    m_shots: int | str,
    repeats: int,
    model: NoiseModel,
    rng: np.random.Generator,
) -> tuple[np.ndarray, float]:
    """Measured per-component gradient variance at fixed parameters.

    Repeats the shot-based parameter-shift gradient and returns the
    sample variance per component plus its mean.  The total (summed)
    variance is what the closed-form bound above caps.
    """
    if repeats < 30:
        raise ValueError(f"repeats must be >= 30, got {repeats}")
    if m_shots == qnn.EXACT:
        # exact evaluations are deterministic, so the sample variance is
        # identically zero; computing it numerically only adds dust
        return np.zeros(qnn.n_params(spec)), 0.0
    streams = rng.spawn(repeats)
    grads = np.stack(
        [
            qnn.param_shift_grad(spec, np.asarray(params, float), sample, m_shots, model, s)
            for s in streams
        ]
    )
    per_component = np.var(grads, axis=0, ddof=1)
    return per_component, float(per_component.mean())
