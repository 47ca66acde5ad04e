import math

import numpy as np
import pytest

from taplab.core.ac_sde import KernelLaws
from taplab.core.functionals import (
    change_of_variables_sides,
    curvature_defect,
    defect,
    defect_mc,
    f_tap,
    h_profile,
    k_field,
    optimality_report,
    parisi_h_profile,
    parisi_value,
    solve_projected,
    susy1_residuals,
    tap_correction,
    tap_gradient,
    tap_value,
    txi2_integral,
    xxphi_representation,
)
from taplab.core.measures import AtomicMeasure, EmpiricalMu, project_at
from taplab.core.mixture import Mixture
from taplab.core.parisi_pde import solve
from taplab.exceptions import DomainError

from tests.conftest import _make_prefix


@pytest.fixture()
def mu() -> EmpiricalMu:
    return EmpiricalMu([0.55, -0.3, 0.7, 0.1, -0.62, 0.4])


class TestCorrections:
    """Plateau-exact integrals of tξ''(t)ζ([0,t])."""

    def test_point_mass_at_zero(self):
        # ∫_0^1 2t dt for ξ = t²
        assert txi2_integral(AtomicMeasure.delta(0.0), Mixture.sk(1.0), 0.0, 1.0) == 1.0
        assert tap_correction(AtomicMeasure.delta(0.0), Mixture.sk(1.0), 0.0) == 0.5

    def test_point_mass_at_one_contributes_nothing(self, mixture):
        assert txi2_integral(AtomicMeasure.delta(1.0), mixture, 0.0, 1.0) == 0.0

    def test_two_atoms(self, mixture, two_atoms):
        expected = 0.3 * mixture.int_t_xi2(0.0, 0.5) + mixture.int_t_xi2(0.5, 1.0)
        assert txi2_integral(two_atoms, mixture, 0.0, 1.0) == pytest.approx(expected, abs=1e-15)


class TestParisiValue:
    """𝒫(ζ) on the solved Parisi PDE."""

    @pytest.mark.parametrize("beta", [0.25, 0.5, 1.0])
    def test_replica_symmetric_closed_form(self, beta, grid):
        value = parisi_value(AtomicMeasure.delta(0.0), Mixture.sk(beta), grid)
        assert value == pytest.approx(math.log(2.0) + beta * beta / 2.0, abs=1e-8)

    def test_point_mass_at_zero_in_general(self, grid, mixture):
        value = parisi_value(AtomicMeasure.delta(0.0), mixture, grid)
        assert value == pytest.approx(math.log(2.0) + mixture(1.0) / 2.0, abs=1e-8)

    def test_reuses_a_given_solution(self, grid, mixture, two_atoms):
        sol = solve(two_atoms, mixture, grid)
        assert parisi_value(two_atoms, mixture, sol=sol) == parisi_value(two_atoms, mixture, grid)


class TestTapValue:
    """TAP(μ,ζ) and its relation to 𝒫."""

    @pytest.mark.parametrize(
        "u, q", [((0.3,), (0.4,)), ((0.2, 0.6), (0.3, 0.7)), ((0.1, 0.5, 0.8), (0.2, 0.5, 0.9))],
    )
    def test_equals_parisi_at_the_origin(self, grid, mixture, u, q):
        z = _make_prefix(u=u, q=q).assemble()
        origin = EmpiricalMu([0.0])
        assert tap_value(origin, z, mixture, grid) == pytest.approx(
            parisi_value(z, mixture, grid), abs=1e-9)

    def test_projection_of_measure_is_used(self, grid, mixture, mu, two_atoms):
        projected = project_at(two_atoms, mu.q)
        assert tap_value(mu, two_atoms, mixture, grid) == pytest.approx(
            tap_value(mu, projected, mixture, grid), abs=1e-12)

    def test_f_tap_is_hamiltonian_plus_extensive_tap(self, grid, mixture, mu, two_atoms):
        value = tap_value(mu, two_atoms, mixture, grid)
        assert f_tap(1.25, mu, two_atoms, mixture, grid) == pytest.approx(
            1.25 + mu.n * value, abs=1e-12)

    def test_gradient_matches_finite_differences(self, grid, mixture, mu, two_atoms):
        grad = np.asarray(tap_gradient(mu, two_atoms, mixture, grid=grid))
        h = 1e-4
        fd = np.empty(mu.n)
        for i in range(mu.n):
            up = tap_value(mu.with_point(i, mu.points[i] + h), two_atoms, mixture, grid)
            down = tap_value(mu.with_point(i, mu.points[i] - h), two_atoms, mixture, grid)
            fd[i] = (up - down) / (2 * h)
        np.testing.assert_allclose(mu.n * grad, mu.n * fd, rtol=1e-3, atol=1e-4)

    def test_single_gradient_component(self, grid, mixture, mu, two_atoms):
        full = tap_gradient(mu, two_atoms, mixture, grid=grid)
        assert tap_gradient(mu, two_atoms, mixture, i=2, grid=grid) == pytest.approx(full[2])

    def test_sign_flip_symmetry(self, grid, mixture, mu, two_atoms):
        flipped = EmpiricalMu(-mu.points)
        assert tap_value(flipped, two_atoms, mixture, grid) == pytest.approx(
            tap_value(mu, two_atoms, mixture, grid), abs=1e-10)

    def test_convex_in_the_measure(self, grid, mixture, mu, two_atoms):
        other = AtomicMeasure([0.2, 0.8], [0.6, 0.4])
        mid = AtomicMeasure([0.0, 0.2, 0.5, 0.8], [0.15, 0.3, 0.35, 0.2])
        ends = tap_value(mu, two_atoms, mixture, grid) + tap_value(mu, other, mixture, grid)
        assert tap_value(mu, mid, mixture, grid) <= 0.5 * ends + 1e-12


class TestDefect:
    """The defect Δ_ζ^μ through its estimators."""

    def test_quadrature_matches_curvature(self, grid, mixture, mu, two_atoms):
        quadrature = defect(mu, two_atoms, mixture, grid=grid)
        curvature = defect(mu, two_atoms, mixture, estimator="curvature", grid=grid)
        assert quadrature == pytest.approx(curvature, abs=1e-4)

    def test_unknown_estimator(self, grid, mixture, mu, two_atoms):
        with pytest.raises(DomainError, match="Unknown estimator"):
            defect(mu, two_atoms, mixture, estimator="spline", grid=grid)

    def test_vanishes_on_a_point_mass_projection(self, grid, mu):
        # ζ = δ_q gives ∂xxΦ(q,x) = 1 − tanh²x, so the defect is 1 − q − mean(1 − m²)
        sol = solve_projected(mu, AtomicMeasure.delta(0.0), Mixture.sk(0.5), grid)
        assert curvature_defect(sol, mu) == pytest.approx(0.0, abs=1e-7)

    def test_k_field_scalar_and_vector(self, grid, mixture, mu, two_atoms):
        sol = solve_projected(mu, two_atoms, mixture, grid)
        vec = k_field(sol, mu.q, mu.points)
        assert isinstance(k_field(sol, mu.q, 0.3), float)
        assert k_field(sol, mu.q, float(mu.points[1])) == pytest.approx(vec[1])

    @pytest.mark.slow
    def test_monte_carlo_matches_quadrature(self, grid, mixture, mu, two_atoms):
        quadrature = defect(mu, two_atoms, mixture, grid=grid)
        estimate, se = defect_mc(mu, two_atoms, mixture, grid=grid, paths=4000, seed=7)
        assert se > 0.0
        assert abs(estimate - quadrature) < 3.0 * se


class TestIdentities:
    """Representations of ∂xxΦ and the stationarity residuals."""

    @pytest.mark.parametrize("x", [-1.5, 0.0, 0.8])
    def test_xxphi_representation(self, grid, mixture, two_atoms, x):
        sol = solve(two_atoms, mixture, grid, splits=[0.3])
        assert xxphi_representation(sol, 0.3, x) == pytest.approx(
            sol.dxx_phi(0.3, x), abs=1e-4)

    def test_susy1_residuals(self, grid, mixture, mu, two_atoms):
        res = susy1_residuals(mu, two_atoms, mixture, mu.q, zeta_m=project_at(two_atoms, mu.q),
                              grid=grid)
        assert res.overlap == 0.0
        assert res.measure == 0.0
        assert res.field >= 0.0

    def test_susy1_without_measure(self, grid, mixture, mu, two_atoms):
        res = susy1_residuals(mu, two_atoms, mixture, 0.2, grid=grid)
        assert res.measure is None
        assert res.overlap == pytest.approx(abs(mu.q - 0.2))

    def test_change_of_variables_on_terminal_layer(self, grid, mixture, two_atoms):
        sol = solve(two_atoms, mixture, grid)
        lhs, rhs = change_of_variables_sides(sol, 1.0, 0.5)
        assert lhs == pytest.approx(rhs, rel=1e-9)

    def test_change_of_variables_inside_a_plateau(self, grid, mixture, two_atoms):
        sol = solve(two_atoms, mixture, grid, splits=[0.3])
        lhs, rhs = change_of_variables_sides(sol, 0.3, 0.4)
        assert lhs == pytest.approx(rhs, rel=1e-4)


class TestOptimality:
    """H-profiles and the optimality report."""

    def test_replica_symmetric_profile(self, grid, sk_half):
        # below the AT line E[M_t²] < t, so H increases to H(1) = 0
        profile = parisi_h_profile(solve(AtomicMeasure.delta(0.0), sk_half, grid))
        assert profile.at(1.0) == 0.0
        assert profile.argmin == 0.0
        assert np.all(np.diff(profile.values) >= -1e-12)
        assert profile.values[0] < 0.0

    def test_report_fields(self, grid, mixture, two_atoms):
        report = optimality_report(two_atoms, mixture, f=0.7, grid=grid)
        laws = KernelLaws(solve(two_atoms, mixture, grid))
        np.testing.assert_allclose(report.support, two_atoms.locations)
        np.testing.assert_allclose(report.first_order,
                                   [laws.m2(s) - s for s in two_atoms.locations], atol=1e-12)
        assert report.h_profile.at(1.0) == 0.0
        assert report.support_gap >= 0.0
        assert report.max_residual >= report.support_gap
        assert report.parisi == pytest.approx(parisi_value(two_atoms, mixture, grid), abs=1e-12)
        assert report.info == {"f": 0.7, "n": 1}

    def test_law_matched_profile_starts_at_q(self, grid, mixture, mu, two_atoms):
        profile = h_profile(mu, two_atoms, mixture, grid=grid, resolution=21)
        assert profile.q == pytest.approx(mu.q)
        assert profile.s[0] == pytest.approx(mu.q)
        assert profile.at(1.0) == 0.0
        assert profile.at(0.0) == profile.at(mu.q)
