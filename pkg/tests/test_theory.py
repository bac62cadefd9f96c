"""Bound evaluator tests: hand-computed values and structural laws."""

import math

import numpy as np
import pytest

from qflsim.noise import NoiseModel
from qflsim.qnn import EXACT, QnnSpec, n_params
from qflsim.theory import (
    BoundParams,
    empirical_grad_variance,
    gap_bound,
    grad_variance_bound,
    composite_noise_term,
    shot_noise_iterations,
    global_rate_bound,
)


def bp(**kw) -> BoundParams:
    return BoundParams(**kw)


class TestLemma1Variance:
    def test_hand_value(self):
        p = bp(nu=1.0, n_outcomes=2, n_params=40, obs_trace_sq=2.0, shots=100)
        assert grad_variance_bound(p) == pytest.approx(0.8, abs=1e-15)

    def test_doubling_shots_halves(self):
        p = bp(n_params=12, shots=50)
        q = bp(n_params=12, shots=100)
        assert grad_variance_bound(q) == pytest.approx(grad_variance_bound(p) / 2, rel=1e-12)

    def test_aggregate_divides_by_n_squared(self):
        p = bp(nu=1.0, n_outcomes=2, n_params=40, obs_trace_sq=2.0, shots=100,
               n_clients=10)
        assert grad_variance_bound(p, aggregated=True) == pytest.approx(0.008, abs=1e-15)

    def test_linearity_laws(self):
        base = grad_variance_bound(bp(nu=1.0, n_params=10, obs_trace_sq=2.0, shots=20))
        assert grad_variance_bound(bp(nu=3.0, n_params=10, obs_trace_sq=2.0, shots=20)) \
            == pytest.approx(3 * base, rel=1e-12)
        assert grad_variance_bound(bp(nu=1.0, n_params=30, obs_trace_sq=2.0, shots=20)) \
            == pytest.approx(3 * base, rel=1e-12)
        assert grad_variance_bound(bp(nu=1.0, n_params=10, obs_trace_sq=6.0, shots=20)) \
            == pytest.approx(3 * base, rel=1e-12)
        assert grad_variance_bound(bp(nu=1.0, n_params=10, obs_trace_sq=2.0, shots=60)) \
            == pytest.approx(base / 3, rel=1e-12)

    def test_domain(self):
        with pytest.raises(ValueError):
            bp(shots=0)
        with pytest.raises(ValueError):
            bp(nu=-1.0)


class TestGapBound:
    def test_noiseless_limit_decays_to_zero(self):
        p = bp(nu=0.0, eta=0.1, mu=1.0, smoothness=2.0)
        assert gap_bound(p, 1000, 1.0) < 1e-40

    def test_zero_steps_boundary(self):
        p = bp(nu=1.0, n_params=40, obs_trace_sq=2.0, shots=100,
               eta=0.1, mu=1.0, smoothness=2.0)
        floor = 0.5 * 0.1 * 2.0 * 0.8 / 1.0
        assert gap_bound(p, 0, 3.0) == pytest.approx(3.0 + floor, rel=1e-12)

    def test_hand_value(self):
        p = bp(nu=1.0, n_outcomes=2, n_params=40, obs_trace_sq=2.0, shots=100,
               eta=0.1, mu=1.0, smoothness=2.0)
        expected = 0.9**10 + 0.08
        assert gap_bound(p, 10, 1.0) == pytest.approx(expected, rel=1e-9)
        assert expected == pytest.approx(0.4287, abs=5e-5)

    def test_contraction_domain(self):
        with pytest.raises(ValueError, match="eta"):
            gap_bound(bp(eta=1.0, mu=1.0), 5, 1.0)


def composite_lambda0_reference(p: BoundParams) -> float:
    """Independent simplification of the composite term at lambda = 0."""
    eta, x = p.eta, p.mean_weight
    drift = 0.5 * eta * 2 * p.smoothness_p * (1 + 1 / (2 * eta)) * x \
        * p.local_steps * p.grad_norm_bound**2
    shot = (1 + 1 / (2 * eta)) * x**2 \
        * p.nu * p.n_outcomes * p.n_params * p.obs_trace_sq \
        / (2 * p.shots * p.n_clients)
    return drift + shot


class TestCompositeNoiseTerm:
    def test_lambda_zero_matches_symbolic_reduction(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            p = bp(
                lam=0.0,
                eta=float(rng.uniform(0.01, 1.0)),
                mean_weight=float(rng.uniform(0.05, 1.0)),
                smoothness_p=float(rng.uniform(0.1, 5.0)),
                grad_norm_bound=float(rng.uniform(0.1, 3.0)),
                local_steps=int(rng.integers(1, 20)),
                nu=float(rng.uniform(0.1, 2.0)),
                n_params=int(rng.integers(2, 64)),
                shots=int(rng.integers(1, 512)),
                n_clients=int(rng.integers(1, 12)),
            )
            assert composite_noise_term(p) == pytest.approx(composite_lambda0_reference(p), rel=1e-9)

    def test_shot_term_monotone_in_weight(self):
        # with G = 0 only the shot-noise term remains; smaller x shrinks it
        lo = composite_noise_term(bp(grad_norm_bound=0.0, mean_weight=0.4, nu=1.0, shots=10))
        hi = composite_noise_term(bp(grad_norm_bound=0.0, mean_weight=0.9, nu=1.0, shots=10))
        assert lo < hi

    def test_all_noise_terms_zero(self):
        assert composite_noise_term(bp(nu=0.0, grad_norm_bound=0.0)) == 0.0


class TestTheorem1Rate:
    def test_hand_value_k_zero(self):
        p = bp(smoothness=2.0, mu=1.0)
        assert global_rate_bound(p, 0, 1.0, composite=0.0) == pytest.approx(1.5, abs=1e-12)

    def test_one_over_k_asymptotics(self):
        p = bp(smoothness=2.0, mu=1.0, nu=1.0, shots=10, grad_norm_bound=1.0)
        for k in (10_000, 40_000):
            ratio = global_rate_bound(p, 2 * k, 1.0) / global_rate_bound(p, k, 1.0)
            assert abs(ratio - 0.5) < 0.01

    def test_monotone_in_shots(self):
        values = [
            global_rate_bound(bp(nu=1.0, shots=m, grad_norm_bound=0.5), 100, 1.0)
            for m in (1, 10, 100, 1000)
        ]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_monotone_in_rounds_and_composite(self):
        p = bp(nu=1.0, shots=10)
        ks = [global_rate_bound(p, k, 1.0) for k in range(0, 200, 20)]
        assert all(a >= b for a, b in zip(ks, ks[1:]))
        values = [global_rate_bound(p, 50, 1.0, composite=v) for v in (0.0, 0.5, 1.0, 5.0)]
        assert all(a <= b for a, b in zip(values, values[1:]))


class TestShotNoiseIterations:
    def test_log_term_only(self):
        assert shot_noise_iterations(math.exp(-1), 1.0, 1.0, 0.0, 1.0) == 1

    def test_monotone_in_delta(self):
        a = shot_noise_iterations(0.02, 1.0, 2.0, 0.5)
        b = shot_noise_iterations(0.01, 1.0, 2.0, 0.5)
        assert b > a

    def test_hand_value(self):
        assert shot_noise_iterations(0.01, 1.0, 2.0, 0.5, 1.0) == 110

    def test_domain(self):
        with pytest.raises(ValueError):
            shot_noise_iterations(0.0, 1.0, 1.0, 0.5)


class TestEmpiricalGradVariance:
    def test_exact_mode_is_zero(self):
        spec = QnnSpec(2, 1, 2)
        rng = np.random.default_rng(0)
        params = rng.uniform(-1, 1, n_params(spec))
        vec, mean = empirical_grad_variance(
            spec, params, (np.array([0.3, 0.8]), 0), EXACT, 30,
            NoiseModel.noiseless(), np.random.default_rng(1),
        )
        assert mean == 0.0 and np.all(vec == 0.0)

    def test_repeats_floor(self):
        spec = QnnSpec(1, 1, 1)
        with pytest.raises(ValueError, match="repeats"):
            empirical_grad_variance(spec, np.zeros(2), (np.zeros(1), 0), 10, 10,
                                    NoiseModel.noiseless(), np.random.default_rng(0))

    def test_shot_scaling_and_bound(self):
        spec = QnnSpec(2, 1, 2)
        rng = np.random.default_rng(4)
        params = rng.uniform(-1, 1, n_params(spec))
        sample = (rng.uniform(0, math.pi, 2), 1)
        means = {}
        for m in (10, 100):
            vec, mean = empirical_grad_variance(
                spec, params, sample, m, 120, NoiseModel.noiseless(),
                np.random.default_rng(50 + m),
            )
            means[m] = mean
            bound = grad_variance_bound(bp(nu=1.0, n_outcomes=2,
                                       n_params=n_params(spec),
                                       obs_trace_sq=2.0, shots=m))
            assert float(vec.sum()) <= bound
        assert 3.0 <= means[10] / means[100] <= 20.0
