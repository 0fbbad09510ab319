import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from otmatch.logops import logsumexp
from otmatch.semidual import (
    Coupling,
    coupling,
    first_variation,
    log_reference,
    marginal_y,
    minus_transform,
    plus_transform,
    primal_value,
    semidual_value,
)
from otmatch.verify import random_instance, variance_identity_residual

from conftest import single_cell_instance, zero_cost_instance


def naive_plus(phi, inst):
    out = np.empty(inst.n)
    for i in range(inst.n):
        out[i] = np.log(sum(inst.b[j] * np.exp(phi[j] - inst.cost[i, j] / inst.epsilon) for j in range(inst.m)))
    return out


def naive_coupling(phi, inst):
    ph = naive_plus(phi, inst)
    out = np.empty((inst.n, inst.m))
    for i in range(inst.n):
        for j in range(inst.m):
            out[i, j] = inst.a[i] * inst.b[j] * np.exp(phi[j] - ph[i] - inst.cost[i, j] / inst.epsilon)
    return out


class TestTransforms:
    def test_plus_zero_cost_zero_potential(self):
        inst = zero_cost_instance()
        np.testing.assert_allclose(plus_transform(np.zeros(inst.m), inst), 0.0, atol=1e-15)

    def test_plus_single_cell(self):
        inst = single_cell_instance(cost=2.0, epsilon=1.0)
        assert plus_transform(np.array([0.5]), inst)[0] == pytest.approx(-1.5, abs=1e-15)

    def test_plus_matches_naive_sum(self, small_instance):
        rng = np.random.default_rng(1)
        phi = rng.normal(0, 1, small_instance.m)
        np.testing.assert_allclose(
            plus_transform(phi, small_instance), naive_plus(phi, small_instance), rtol=1e-12
        )

    def test_plus_shift_covariance(self, small_instance):
        rng = np.random.default_rng(2)
        phi = rng.normal(0, 1, small_instance.m)
        shift = 3.7
        np.testing.assert_allclose(
            plus_transform(phi + shift, small_instance),
            plus_transform(phi, small_instance) + shift,
            rtol=1e-12,
        )

    def test_minus_zero_cost_zero_potential(self):
        inst = zero_cost_instance()
        np.testing.assert_allclose(minus_transform(np.zeros(inst.n), inst), 0.0, atol=1e-15)

    def test_minus_single_cell(self):
        inst = single_cell_instance(cost=2.0, epsilon=1.0)
        assert minus_transform(np.array([1.0]), inst)[0] == pytest.approx(-3.0, abs=1e-15)

    def test_minus_matches_naive_sum(self, small_instance):
        inst = small_instance
        rng = np.random.default_rng(3)
        psi = rng.normal(0, 1, inst.n)
        naive = np.array([
            -np.log(sum(inst.a[i] * np.exp(psi[i] + inst.cost[i, j] / inst.epsilon) for i in range(inst.n)))
            for j in range(inst.m)
        ])
        np.testing.assert_allclose(minus_transform(psi, inst), naive, rtol=1e-12)

    def test_rejects_nonfinite(self, small_instance):
        with pytest.raises(ValueError):
            plus_transform(np.array([np.nan] * small_instance.m), small_instance)


class TestSemidualValue:
    def test_single_cell_shift_cancellation(self):
        inst = single_cell_instance(cost=2.0, epsilon=1.0)
        for phi in (-4.0, 0.0, 11.5):
            assert semidual_value(np.array([phi]), inst) == pytest.approx(2.0, abs=1e-12)

    def test_shift_invariance(self, medium_instance):
        rng = np.random.default_rng(4)
        phi = rng.normal(0, 1, medium_instance.m)
        for shift in rng.normal(0, 5, 4):
            assert semidual_value(phi + shift, medium_instance) == pytest.approx(
                semidual_value(phi, medium_instance), abs=1e-11
            )

    def test_matches_two_potential_dual_at_optimum(self, oracle_cache):
        inst = random_instance(np.random.default_rng(9), 4, 5, 0.6)
        phi = oracle_cache("dual-opt-4x5", inst)
        psi = plus_transform(phi, inst)
        log_mass = (
            inst.log_a[:, None] + inst.log_b[None, :] + phi[None, :] - psi[:, None] - inst.cost_over_eps
        )
        dual = float(inst.b @ phi - inst.a @ psi - logsumexp(log_mass.reshape(-1)))
        assert semidual_value(phi, inst) == pytest.approx(dual, abs=1e-10)


class TestMarginalAndVariation:
    def test_zero_cost_marginal_is_target(self):
        inst = zero_cost_instance()
        np.testing.assert_allclose(marginal_y(np.zeros(inst.m), inst), inst.b, atol=1e-15)

    def test_marginal_at_optimum_is_target(self, oracle_cache):
        inst = random_instance(np.random.default_rng(10), 6, 7, 0.4)
        phi = oracle_cache("marg-6x7", inst)
        np.testing.assert_allclose(marginal_y(phi, inst), inst.b, atol=1e-12)

    def test_marginal_matches_naive_coupling_columns(self, small_instance):
        rng = np.random.default_rng(5)
        phi = rng.normal(0, 1, small_instance.m)
        np.testing.assert_allclose(
            marginal_y(phi, small_instance),
            naive_coupling(phi, small_instance).sum(axis=0),
            rtol=1e-12,
        )

    def test_marginal_is_probability_vector(self, medium_instance):
        rng = np.random.default_rng(6)
        for _ in range(5):
            p = marginal_y(rng.normal(0, 2, medium_instance.m), medium_instance)
            assert abs(p.sum() - 1.0) <= 1e-12

    def test_variation_sums_to_zero(self, medium_instance):
        rng = np.random.default_rng(7)
        for _ in range(5):
            d = first_variation(rng.normal(0, 2, medium_instance.m), medium_instance)
            assert abs(d.sum()) <= 1e-12

    def test_variation_vanishes_at_optimum(self, oracle_cache):
        inst = random_instance(np.random.default_rng(10), 6, 7, 0.4)
        phi = oracle_cache("marg-6x7", inst)
        assert np.max(np.abs(first_variation(phi, inst))) <= 1e-12

    def test_variation_against_central_differences(self, small_instance):
        inst = small_instance
        rng = np.random.default_rng(8)
        phi = rng.normal(0, 0.8, inst.m)
        chi = rng.normal(0, 1, inst.m)
        chi -= chi.mean()
        h = 1e-5
        fd = (semidual_value(phi + h * chi, inst) - semidual_value(phi - h * chi, inst)) / (2 * h)
        exact = float(first_variation(phi, inst) @ chi)
        assert abs(exact - fd) / abs(exact) <= 1e-5


class TestCoupling:
    def test_zero_cost_zero_potential_is_product(self):
        inst = zero_cost_instance()
        np.testing.assert_allclose(
            coupling(np.zeros(inst.m), inst).masses, np.outer(inst.a, inst.b), rtol=1e-14
        )

    def test_single_cell(self):
        inst = single_cell_instance()
        np.testing.assert_allclose(coupling(np.array([3.3]), inst).masses, [[1.0]], rtol=1e-15)

    def test_row_sums_equal_first_marginal(self, medium_instance):
        rng = np.random.default_rng(9)
        pi = coupling(rng.normal(0, 2, medium_instance.m), medium_instance)
        np.testing.assert_allclose(pi.marginal_x(), medium_instance.a, atol=1e-12)

    def test_column_sums_at_optimum(self, oracle_cache):
        inst = random_instance(np.random.default_rng(10), 6, 7, 0.4)
        phi = oracle_cache("marg-6x7", inst)
        np.testing.assert_allclose(coupling(phi, inst).marginal_y(), inst.b, atol=1e-12)

    def test_two_code_paths_for_marginal_agree(self, medium_instance):
        rng = np.random.default_rng(11)
        phi = rng.normal(0, 1, medium_instance.m)
        np.testing.assert_allclose(
            coupling(phi, medium_instance).marginal_y(),
            marginal_y(phi, medium_instance),
            atol=1e-12,
        )

    def test_coupling_type_rejects_wrong_mass(self):
        with pytest.raises(ValueError):
            Coupling(log_masses=np.log(np.full((2, 2), 0.3)))


class TestPrimalValue:
    def test_reference_has_zero_divergence(self, small_instance):
        pi = Coupling(log_masses=log_reference(small_instance))
        assert primal_value(pi, small_instance) == pytest.approx(0.0, abs=1e-13)

    def test_zero_cost_product_coupling(self):
        inst = zero_cost_instance()
        pi = coupling(np.zeros(inst.m), inst)
        assert primal_value(pi, inst) == pytest.approx(0.0, abs=1e-13)

    def test_matches_term_by_term_sum(self):
        inst = random_instance(np.random.default_rng(12), 2, 2, 0.8)
        rng = np.random.default_rng(13)
        pi = coupling(rng.normal(0, 1, 2), inst)
        ref = np.exp(log_reference(inst))
        masses = pi.masses
        expected = sum(
            masses[i, j] * np.log(masses[i, j] / ref[i, j]) for i in range(2) for j in range(2)
        )
        assert primal_value(pi, inst) == pytest.approx(expected, rel=1e-12)


class TestBregmanStructure:
    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=50, deadline=None)
    def test_concave_and_linf_bounded(self, seed):
        rng = np.random.default_rng(seed)
        inst = random_instance(rng, 3, 5, float(rng.uniform(0.2, 2.0)))
        phi = rng.normal(0, 1, inst.m)
        phi_bar = phi + rng.normal(0, 1, inst.m)
        gap = (
            semidual_value(phi_bar, inst)
            - semidual_value(phi, inst)
            - float(first_variation(phi, inst) @ (phi_bar - phi))
        )
        assert gap <= 1e-10
        assert gap >= -0.5 * float(np.max(np.abs(phi_bar - phi))) ** 2 - 1e-10

    def test_variance_identity_quadrature(self, small_instance):
        rng = np.random.default_rng(14)
        phi = rng.normal(0, 1, small_instance.m)
        phi_bar = phi + rng.normal(0, 1, small_instance.m)
        assert variance_identity_residual(phi, phi_bar, small_instance) <= 1e-6
