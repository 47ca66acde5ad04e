import numpy as np
import pytest

from taplab.core.field_mc import (
    CheckReport,
    CheckRow,
    DeformedGOE,
    covariance_check,
    det_asymp_check,
    euler_residual,
    goe_logdet,
    hessian_blocks_check,
    sample_field,
    tanh_witness,
    tap_euler_residual,
    tap_hessian_diagonal,
)
from taplab.core.functionals import solve_projected
from taplab.core.measures import AtomicMeasure, EmpiricalMu
from taplab.core.mixture import Mixture
from taplab.exceptions import DomainError, FieldBudgetError


@pytest.fixture()
def field(mixture):
    return sample_field(mixture, 6, seed=5)


class TestFieldSample:
    """Derivatives of one Hamiltonian draw."""

    def test_same_seed_same_field(self, mixture):
        m = np.linspace(-0.5, 0.5, 6)
        a = sample_field(mixture, 6, seed=5).hamiltonian(m)
        assert sample_field(mixture, 6, seed=5).hamiltonian(m) == a

    def test_gradient_matches_finite_differences(self, field, rng):
        m = rng.uniform(-0.8, 0.8, size=6)
        h = 1e-5
        fd = np.array([
            (field.hamiltonian(m + h * e) - field.hamiltonian(m - h * e)) / (2 * h)
            for e in np.eye(6)
        ])
        np.testing.assert_allclose(field.gradient(m), fd, rtol=1e-6, atol=1e-8)

    def test_hessian_matches_gradient_differences(self, field, rng):
        m = rng.uniform(-0.8, 0.8, size=6)
        h = 1e-5
        fd = np.column_stack([
            (field.gradient(m + h * e) - field.gradient(m - h * e)) / (2 * h)
            for e in np.eye(6)
        ])
        hess = field.hessian(m)
        np.testing.assert_allclose(hess, fd, rtol=1e-6, atol=1e-8)
        np.testing.assert_allclose(hess, hess.T, atol=1e-12)

    def test_state_dimension_must_match(self, field):
        with pytest.raises(DomainError, match="entries"):
            field.hamiltonian(np.zeros(5))

    def test_euler_identity_for_pure_mixture(self, rng):
        fs = sample_field(Mixture.pure(4, 0.8), 8, seed=1)
        assert abs(euler_residual(fs, rng.uniform(-1, 1, size=8))) < 1e-10

    def test_euler_identity_needs_pure_mixture(self, field):
        with pytest.raises(DomainError, match="pure"):
            euler_residual(field, np.zeros(6))

    def test_tap_euler_identity_for_pure_mixture(self, grid):
        pure = Mixture.pure(4, 0.8)
        mu = EmpiricalMu([0.6, -0.4, 0.3, 0.7, -0.2, 0.5, -0.65, 0.1])
        sol = solve_projected(mu, AtomicMeasure.delta(0.0), pure, grid)
        fs = sample_field(pure, 8, seed=2)
        assert abs(tap_euler_residual(fs, sol, mu)) < 1e-8

    def test_tap_euler_identity_needs_pure_mixture(self, field, grid, mixture):
        mu = EmpiricalMu(np.full(6, 0.5))
        sol = solve_projected(mu, AtomicMeasure.delta(0.0), mixture, grid)
        with pytest.raises(DomainError, match="pure"):
            tap_euler_residual(field, sol, mu)

    def test_size_floor(self, mixture):
        with pytest.raises(DomainError, match="outside"):
            sample_field(mixture, 1)

    def test_tensor_budget(self):
        with pytest.raises(FieldBudgetError, match="budget"):
            sample_field(Mixture.pure(6), 64)


class TestCovarianceStructure:
    """Monte Carlo covariances of (H, ∇H, ∇²H)."""

    @pytest.mark.slow
    def test_covariances(self, mixture):
        a = np.array([0.5, -0.3, 0.7, 0.2])
        b = np.array([0.1, 0.6, -0.4, 0.5])
        report = covariance_check(mixture, a, b, samples=20_000, seed=7, multiplier=5.0)
        assert report.passed, report.to_rows()
        assert report.info["overlap"] == pytest.approx(float(a @ b) / 4)

    @pytest.mark.slow
    def test_hessian_block_law(self, mixture):
        report = hessian_blocks_check(mixture, np.array([0.5, -0.3, 0.7, 0.2]), samples=20_000,
                                      seed=8, multiplier=5.0)
        assert report.passed, report.to_rows()

    def test_states_must_match(self, mixture):
        with pytest.raises(DomainError, match="same dimension"):
            covariance_check(mixture, np.ones(3) * 0.5, np.ones(4) * 0.5, samples=10)

    def test_hessian_law_needs_three_sites(self, mixture):
        with pytest.raises(DomainError, match="N >= 3"):
            hessian_blocks_check(mixture, np.array([0.5, 0.2]), samples=10)

    def test_hessian_law_needs_positive_overlap(self, mixture):
        with pytest.raises(DomainError, match="q > 0"):
            hessian_blocks_check(mixture, np.zeros(4), samples=10)


class TestReports:
    """Check rows and their lookup."""

    def test_row_serialization(self):
        row = CheckRow("var_H", 1.02, 0.01, 1.0, True)
        assert row.to_dict() == {"quantity": "var_H", "estimate": 1.02, "se": 0.01,
                                 "target": 1.0, "pass": True}

    def test_lookup(self):
        report = CheckReport("demo", [CheckRow("a", 0.0, 0.0, 0.0, True),
                                      CheckRow("b", 1.0, 0.0, 0.0, False)])
        assert report.row("b").estimate == 1.0
        assert not report.passed
        with pytest.raises(KeyError):
            report.row("c")


class TestDeformedGOE:
    """Deformed GOE draws and their log-determinants."""

    def test_samples_are_symmetric(self, rng):
        d = DeformedGOE(30, 0.5, np.linspace(1.0, 2.0, 30))
        sample = d.sample(rng)
        np.testing.assert_array_equal(sample, sample.T)

    def test_from_tap_state(self, grid, sk_half):
        mu = tanh_witness(50, 0.5)
        sol = solve_projected(mu, AtomicMeasure.delta(0.0), sk_half, grid)
        d = DeformedGOE.from_tap(sol, mu, seed=3)
        assert d.n == 50
        assert d.t == pytest.approx(float(sk_half.d2(mu.q)))
        np.testing.assert_allclose(d.diagonal, tap_hessian_diagonal(sol, mu))

    def test_scalar_diagonal_is_broadcast(self):
        assert DeformedGOE(5, 1.0, 2.0).diagonal.shape == (5,)

    @pytest.mark.parametrize("n, t", [(0, 1.0), (5, -0.1)])
    def test_invalid_parameters(self, n, t):
        with pytest.raises(DomainError):
            DeformedGOE(n, t, 1.0)

    def test_zero_variance_is_the_diagonal(self):
        est = goe_logdet(DeformedGOE(4, 0.0, [1.0, 2.0, 3.0, 4.0], seed=0), samples=3)
        assert est.mean == pytest.approx(np.mean(np.log([1.0, 2.0, 3.0, 4.0])))
        assert est.se == pytest.approx(0.0, abs=1e-15)
        mean, se = est
        assert mean == est.mean

    def test_logdet_needs_two_samples(self):
        with pytest.raises(DomainError, match="2 samples"):
            goe_logdet(DeformedGOE(4, 1.0, 1.0), samples=1)


class TestDeterminantAsymptotics:
    """Closed form vs free convolution for the TAP Hessian determinant."""

    def test_tanh_witness_overlap(self):
        mu = tanh_witness(200, 0.5)
        assert mu.n == 200
        assert mu.q == pytest.approx(0.5, abs=1e-9)

    def test_tanh_witness_range(self):
        with pytest.raises(DomainError):
            tanh_witness(10, 1.0)

    def test_replica_symmetric_rows_pass(self, grid, sk_half):
        mu = tanh_witness(200, 0.5)
        sol = solve_projected(mu, AtomicMeasure.delta(0.0), sk_half, grid)
        report = det_asymp_check(sol, mu)
        assert [r.quantity for r in report.rows] == ["second_order", "stieltjes_residual",
                                                     "closed_vs_free"]
        assert report.passed, report.to_rows()
