"""Exponent estimators: trajectory averages, periodic fixed point and
monodromy routes, integral bounds, contraction diagnostics."""

import math

import numpy as np
import pytest

import systems
from cooplyap import (
    ContractionFailureError,
    FourierMatrixMap,
    LambdaEstimate,
    MarkovSwitchEnvironment,
    PeriodicEnvironment,
    contraction_diagnostics,
    corollary_bounds,
    estimate_lambda,
    lambda_floquet,
    lambda_periodic_exact,
    perron_eigenpair,
)

CONSTANT_2X2 = np.array([[1.0, 2.0], [3.0, 0.0]])


def scalar_sine_env(base=0.0, amplitude=0.5):
    fmap = FourierMatrixMap(
        np.array([[base]]),
        np.zeros((1, 1, 1, 1)),
        np.full((1, 1, 1, 1), amplitude),
    )
    return PeriodicEnvironment(fmap)


class TestTrajectoryEstimators:
    def test_constant_system_both_methods(self):
        env = systems.constant_environment(CONSTANT_2X2)
        for method in ("ErgodicAverage", "LogNormGrowth"):
            est = estimate_lambda(env, None, method, 200.0, 1e-3, 20.0)
            assert est.value == pytest.approx(3.0, abs=1e-3)
            assert est.method == method
            assert est.half_split_gap >= 0.0

    def test_oscillation_averages_out(self):
        # scalar a(t) = 0.5 sin(2 pi t): the exponent is the mean, zero
        est = estimate_lambda(scalar_sine_env(), None, "ErgodicAverage", 500.0, 1e-3)
        assert abs(est.value) <= 1e-6
        est = estimate_lambda(scalar_sine_env(), None, "LogNormGrowth", 500.0, 1e-3)
        assert abs(est.value) <= 1e-6

    def test_scalar_switching_matches_occupation_average(self):
        # rates (1, 2) give mu = (2/3, 1/3); a = (-1, +1) averages to -1/3
        spec = MarkovSwitchEnvironment(
            rate_matrix=np.array([[-1.0, 1.0], [2.0, -2.0]]),
            matrices=(np.array([[-1.0]]), np.array([[1.0]])),
        )
        est = estimate_lambda(spec, 4242, "ErgodicAverage", 2000.0, 1e-2)
        assert est.value == pytest.approx(-1.0 / 3.0, abs=0.05)

    def test_methods_agree_on_periodic_system(self):
        rng = np.random.default_rng(14)
        spec = systems.random_periodic_environment(rng, 3, 1)
        a = estimate_lambda(spec, None, "ErgodicAverage", 300.0, 1e-3)
        b = estimate_lambda(spec, None, "LogNormGrowth", 300.0, 1e-3)
        assert a.value == pytest.approx(b.value, abs=1e-6)

    def test_theta0_independence_deterministic(self):
        rng = np.random.default_rng(15)
        spec = systems.random_periodic_environment(rng, 3, 2)
        values = [
            estimate_lambda(
                spec, None, "ErgodicAverage", 200.0, 1e-3,
                theta0=systems.random_interior_simplex(rng, 3),
            ).value
            for _ in range(3)
        ]
        assert max(values) - min(values) <= 1e-6

    def test_theta0_independence_stochastic(self):
        rng = np.random.default_rng(16)
        spec = systems.random_markov_environment(rng, 2, 2)
        a = estimate_lambda(
            spec, 5150, "ErgodicAverage", 500.0, 1e-2, theta0=np.array([0.9, 0.1])
        )
        b = estimate_lambda(
            spec, 5150, "ErgodicAverage", 500.0, 1e-2, theta0=np.array([0.1, 0.9])
        )
        slack = 2.0 * (a.half_split_gap + b.half_split_gap) + 1e-9
        assert abs(a.value - b.value) <= slack

    def test_shift_equivariance_exact(self):
        # replacing A(s) by A(s) + c I multiplies solutions by e^{ct}:
        # the simplex trajectory is untouched and the estimate shifts by c
        rng = np.random.default_rng(17)
        spec = systems.random_markov_environment(rng, 3, 2)
        shifted = MarkovSwitchEnvironment(
            rate_matrix=spec.rate_matrix,
            matrices=tuple(m.entries + 2.5 * np.eye(3) for m in spec.matrices),
        )
        for method in ("ErgodicAverage", "LogNormGrowth"):
            a = estimate_lambda(spec, 88, method, 100.0, 1e-2)
            b = estimate_lambda(shifted, 88, method, 100.0, 1e-2)
            assert b.value - a.value == pytest.approx(2.5, abs=1e-9)

    def test_argument_validation(self):
        env = systems.constant_environment(CONSTANT_2X2)
        with pytest.raises(ValueError, match="invalid method"):
            estimate_lambda(env, None, "PowerMethod", 10.0, 1e-2)
        with pytest.raises(ValueError):
            estimate_lambda(env, None, "ErgodicAverage", 10.0, 1e-2, 10.0)
        with pytest.raises(ValueError):
            estimate_lambda(env, None, "ErgodicAverage", 10.0, 1e-2, -1.0)

    def test_record_budget_thinning(self):
        # a horizon/step pair with 10^6 nodes must still return quickly and
        # carry the full-resolution integrand average
        env = systems.constant_environment(CONSTANT_2X2)
        est = estimate_lambda(env, None, "ErgodicAverage", 10000.0, 1e-2)
        assert est.value == pytest.approx(3.0, abs=1e-4)


class TestLambdaEstimate:
    def test_validation(self):
        with pytest.raises(ValueError):
            LambdaEstimate(1.0, "Nonsense", 10.0, 1e-2, 0.0, 0.0, None)
        with pytest.raises(ValueError):
            LambdaEstimate(1.0, "ErgodicAverage", 10.0, 1e-2, 0.0, -1.0, None)


class TestPeriodicRoutes:
    def test_constant_matches_perron(self):
        env = systems.constant_environment(CONSTANT_2X2)
        assert lambda_periodic_exact(env, 1e-3).value == pytest.approx(3.0, abs=1e-8)
        assert lambda_floquet(env, 1e-3).value == pytest.approx(3.0, abs=1e-8)

    def test_diagonal_oscillation_integrates_away(self):
        # A(s) = A0 + cos(2 pi s) I: the scalar part shifts the exponent by
        # its period average, which vanishes
        cos_c = np.zeros((1, 1, 2, 2))
        cos_c[0, 0] = np.eye(2)
        fmap = FourierMatrixMap(CONSTANT_2X2, cos_c, np.zeros_like(cos_c))
        env = PeriodicEnvironment(fmap)
        assert lambda_periodic_exact(env, 1e-3).value == pytest.approx(3.0, abs=1e-9)
        assert lambda_floquet(env, 1e-3).value == pytest.approx(3.0, abs=1e-9)

    def test_timescale_invariance_for_constant_map(self):
        # a constant map has the same exponent at every period length
        fmap = FourierMatrixMap.constant(CONSTANT_2X2)
        for big_t in (0.2, 1.0, 7.0):
            env = PeriodicEnvironment(fmap, timescale=big_t)
            assert lambda_periodic_exact(env, 1e-3).value == pytest.approx(3.0, abs=1e-8)
            assert lambda_floquet(env, 1e-3).value == pytest.approx(3.0, abs=1e-8)

    def test_three_routes_agree_on_random_systems(self):
        rng = np.random.default_rng(18)
        for _ in range(3):
            spec = systems.random_periodic_environment(rng, 3, 2)
            pe = lambda_periodic_exact(spec, 1e-3)
            fl = lambda_floquet(spec, 1e-3)
            ea = estimate_lambda(spec, None, "ErgodicAverage", 500.0, 1e-3)
            assert abs(pe.value - fl.value) <= 1e-6
            assert abs(fl.value - ea.value) <= 1e-3

    def test_periodic_shift_equivariance(self):
        rng = np.random.default_rng(19)
        fmap = systems.random_fourier_map(rng, 2, 1)
        shifted_map = FourierMatrixMap(
            fmap.base - 1.75 * np.eye(2), fmap.cos_coeffs, fmap.sin_coeffs
        )
        a = lambda_periodic_exact(PeriodicEnvironment(fmap), 1e-3)
        b = lambda_periodic_exact(PeriodicEnvironment(shifted_map), 1e-3)
        assert a.value - b.value == pytest.approx(1.75, abs=1e-9)

    def test_reducible_system_fails_to_contract(self):
        # the period map of a triangular system approaches its fixed point
        # only algebraically, so the tolerance cannot be met
        fmap = FourierMatrixMap.constant(np.array([[1.0, 0.0], [10.0, 1.0]]))
        with pytest.raises(ContractionFailureError) as info:
            lambda_periodic_exact(PeriodicEnvironment(fmap), 0.25)
        assert info.value.last_gap is not None
        assert info.value.last_gap > 0.0

    def test_non_periodic_spec_rejected(self):
        spec = systems.destabilization_environment(1.0)
        with pytest.raises(ValueError, match="periodic"):
            lambda_periodic_exact(spec, 1e-3)
        with pytest.raises(ValueError, match="periodic"):
            lambda_floquet(spec, 1e-3)


class TestBounds:
    def test_constant_frozen_values(self):
        env = systems.constant_environment(CONSTANT_2X2)
        (l1, u1), (l2, u2) = corollary_bounds(env)
        assert (l1, u1) == (pytest.approx(2.0, abs=1e-12), pytest.approx(4.0, abs=1e-12))
        assert l2 == pytest.approx(0.5 - math.sqrt(6.5), abs=1e-9)
        assert u2 == pytest.approx(0.5 + math.sqrt(6.5), abs=1e-9)

    def test_symmetric_constant_is_tight(self):
        env = systems.constant_environment(np.array([[0.0, 2.0], [2.0, 0.0]]))
        (l1, u1), (l2, u2) = corollary_bounds(env)
        assert l1 == u1 == pytest.approx(2.0, abs=1e-12)
        assert l2 == pytest.approx(-2.0, abs=1e-9)
        assert u2 == pytest.approx(2.0, abs=1e-9)

    def test_scalar_oscillation(self):
        env = scalar_sine_env(base=0.7)
        (l1, u1), (l2, u2) = corollary_bounds(env)
        # for d = 1 both reductions give the plain average of a(s)
        assert l1 == pytest.approx(0.7, abs=1e-8)
        assert u1 == pytest.approx(0.7, abs=1e-8)
        assert l2 == pytest.approx(0.7, abs=1e-8)
        assert u2 == pytest.approx(0.7, abs=1e-8)

    def test_markov_destabilization_pair(self):
        spec = systems.destabilization_environment(1.0)
        (l1, u1), (l2, u2) = corollary_bounds(spec)
        assert l1 == pytest.approx(-1.0, abs=1e-12)
        assert u1 == pytest.approx(9.0, abs=1e-12)
        assert l2 == pytest.approx(-6.0, abs=1e-9)
        assert u2 == pytest.approx(4.0, abs=1e-9)

    def test_sandwich_on_random_systems(self):
        rng = np.random.default_rng(20)
        for k in range(6):
            if k % 2 == 0:
                spec = systems.random_periodic_environment(rng, 3, 1)
                est = estimate_lambda(spec, None, "ErgodicAverage", 200.0, 1e-3)
            else:
                spec = systems.random_markov_environment(rng, 3, 2)
                est = estimate_lambda(spec, int(rng.integers(1 << 32)), "ErgodicAverage", 200.0, 1e-3)
            (l1, u1), (l2, u2) = corollary_bounds(spec)
            slack = 2.0 * est.half_split_gap + 1e-3
            assert l1 - slack <= est.value <= u1 + slack
            assert l2 - slack <= est.value <= u2 + slack
            assert l1 <= u1 and l2 <= u2


class TestContractionDiagnostics:
    def test_positive_constant_system(self):
        env = systems.constant_environment(CONSTANT_2X2)
        first_positive, rate = contraction_diagnostics(env, None, 5.0, 1e-2)
        # the flow map gains strict positivity after a single step here
        assert first_positive == pytest.approx(0.01, abs=1e-12)
        assert rate < 0.0

    def test_switching_system(self):
        spec = systems.destabilization_environment(1.0)
        first_positive, rate = contraction_diagnostics(spec, 7, 10.0, 1e-2)
        assert first_positive is not None
        assert first_positive <= 1.0
        assert rate < 0.0

    def test_reducible_never_positive(self):
        fmap = FourierMatrixMap.constant(np.array([[1.0, 0.0], [10.0, 1.0]]))
        first_positive, rate = contraction_diagnostics(
            PeriodicEnvironment(fmap), None, 5.0, 1e-2
        )
        assert first_positive is None
        assert math.isnan(rate)
