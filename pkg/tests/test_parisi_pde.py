import math

import numpy as np
import pytest
from scipy.integrate import quad

from taplab.core.measures import AtomicMeasure
from taplab.core.mixture import Mixture
from taplab.core.parisi_pde import GridSpec, solve
from taplab.exceptions import BoundaryError, DomainError, GridError

from tests.conftest import _make_grid


def _gauss(fn) -> float:
    return quad(lambda y: fn(y) * math.exp(-0.5 * y * y) / math.sqrt(2.0 * math.pi),
                -12.0, 12.0, epsabs=1e-14, epsrel=1e-13, limit=200)[0]


class TestGridSpec:
    """Grid validation and the default half width."""

    @pytest.mark.parametrize("points", [1024, 255])
    def test_points_must_be_odd_and_large(self, points):
        with pytest.raises(DomainError, match="odd and >= 257"):
            GridSpec(points=points)

    def test_quadrature_order_floor(self):
        with pytest.raises(DomainError, match="quad_nodes"):
            GridSpec(quad_nodes=16)

    def test_half_width_must_be_positive(self):
        with pytest.raises(DomainError, match="half_width"):
            GridSpec(half_width=-1.0)

    def test_resolve_default_half_width(self):
        g = GridSpec().resolve(Mixture.sk(1.0))
        assert g.half_width == pytest.approx(10.0 + 6.0 * math.sqrt(2.0))

    def test_axis_is_symmetric_and_contains_zero(self):
        x = _make_grid(half_width=5.0).axis()
        assert x.size == 1025
        assert x[512] == 0.0
        np.testing.assert_allclose(x, -x[::-1])

    def test_unresolved_axis_is_rejected(self):
        with pytest.raises(DomainError, match="unresolved"):
            GridSpec().axis()


class TestParisiSolve:
    """Layer-composed solutions of the Parisi PDE."""

    @pytest.mark.parametrize("beta", [0.25, 0.5, 1.0])
    def test_replica_symmetric_value(self, beta, grid):
        sol = solve(AtomicMeasure.delta(0.0), Mixture.sk(beta), grid)
        assert sol.phi(0.0, 0.0) == pytest.approx(math.log(2.0) + beta * beta, abs=1e-8)

    def test_two_atom_value_matches_gaussian_integral(self, grid):
        z = AtomicMeasure([0.0, 0.5], [0.4, 0.6])
        sol = solve(z, Mixture.sk(1.0), grid)
        # σ² = 1 on both plateaus; Φ(0.5,x) = log 2cosh x + ½ exactly
        inner = _gauss(lambda y: (2.0 * math.cosh(y)) ** 0.4)
        expected = 0.5 + math.log(inner) / 0.4
        assert sol.phi(0.0, 0.0) == pytest.approx(expected, abs=1e-7)
        assert sol.phi(0.5, 0.7) == pytest.approx(math.log(2.0 * math.cosh(0.7)) + 0.5,
                                                  abs=1e-7)

    def test_terminal_layer_is_exact(self, grid, mixture):
        sol = solve(AtomicMeasure.delta(0.3), mixture, grid)
        x = np.array([-3.0, 0.2, 7.5])
        np.testing.assert_allclose(sol.phi(1.0, x), np.log(2.0 * np.cosh(x)), rtol=1e-13)
        np.testing.assert_allclose(sol.dx_phi(1.0, x), np.tanh(x), rtol=1e-13)
        np.testing.assert_allclose(sol.dxx_phi(1.0, x), 1.0 / np.cosh(x) ** 2, rtol=1e-12)
        np.testing.assert_allclose(sol.dxxx_phi(1.0, x), -2.0 * np.tanh(x) / np.cosh(x) ** 2,
                                   rtol=1e-12)

    def test_derivatives_match_finite_differences(self, grid, mixture, two_atoms):
        sol = solve(two_atoms, mixture, grid)
        h = 1e-3
        for x in (-1.3, 0.3, 2.1):
            fd1 = (sol.phi(0.0, x + h) - sol.phi(0.0, x - h)) / (2 * h)
            fd2 = (sol.dx_phi(0.0, x + h) - sol.dx_phi(0.0, x - h)) / (2 * h)
            assert sol.dx_phi(0.0, x) == pytest.approx(fd1, abs=1e-5)
            assert sol.dxx_phi(0.0, x) == pytest.approx(fd2, abs=1e-5)

    def test_solution_is_even_in_x(self, grid, mixture, two_atoms):
        sol = solve(two_atoms, mixture, grid)
        assert sol.dx_phi(0.0, 0.0) == pytest.approx(0.0, abs=1e-10)
        assert sol.phi(0.5, 1.7) == pytest.approx(sol.phi(0.5, -1.7), abs=1e-12)

    def test_splits_do_not_change_values(self, grid, mixture, two_atoms):
        plain = solve(two_atoms, mixture, grid)
        split = solve(two_atoms, mixture, grid, splits=[0.2, 0.35, 0.8])
        assert split.phi(0.0, 0.0) == pytest.approx(plain.phi(0.0, 0.0), abs=1e-7)
        assert split.has_time(0.35)
        assert not plain.has_time(0.35)

    def test_unknown_time_raises_boundary_error(self, grid, mixture, two_atoms):
        sol = solve(two_atoms, mixture, grid)
        with pytest.raises(BoundaryError, match="not a stored boundary"):
            sol.phi(0.37, 0.0)
        with pytest.raises(KeyError):
            sol.dx_phi(0.37, 0.0)

    def test_narrow_grid_is_rejected(self):
        z = AtomicMeasure([0.0, 0.5], [0.5, 0.5])
        g = GridSpec(half_width=1.0, points=257, quad_nodes=32)
        with pytest.raises(GridError, match="grid too narrow") as info:
            solve(z, Mixture.sk(2.0), g)
        assert info.value.required_half_width > 1.0

    def test_narrow_grid_warns_when_not_strict(self, caplog):
        z = AtomicMeasure([0.0, 0.5], [0.5, 0.5])
        g = GridSpec(half_width=1.0, points=257, quad_nodes=32)
        sol = solve(z, Mixture.sk(2.0), g, strict=False)
        assert sol.diagnostics["extension_weight"] > 0.0
        assert "grid too narrow" in caplog.text

    def test_diagnostics(self, grid, mixture, two_atoms):
        sol = solve(two_atoms, mixture, grid)
        assert sol.diagnostics["points"] == 1025
        assert sol.diagnostics["quad_nodes"] == 48
        assert sol.diagnostics["extension_weight"] < 1e-10


class TestLegendre:
    """h(q,·) as the Legendre transform of Φ(q,·)."""

    def test_inverse_and_curvature(self, grid, mixture, two_atoms):
        sol = solve(two_atoms, mixture, grid, splits=[0.4])
        m = np.array([-0.8, 0.05, 0.6])
        h, x, ddh = sol.legendre_h(0.4, m)
        np.testing.assert_allclose(sol.dx_phi(0.4, x), m, atol=1e-10)
        np.testing.assert_allclose(ddh, 1.0 / np.asarray(sol.dxx_phi(0.4, x)), rtol=1e-12)
        np.testing.assert_allclose(h, x * m - sol.phi(0.4, x), rtol=1e-12)

    def test_legendre_at_zero_magnetization(self, grid, mixture, two_atoms):
        sol = solve(two_atoms, mixture, grid, splits=[0.4])
        h, x, _ = sol.legendre_h(0.4, 0.0)
        assert abs(x) < 1e-9
        assert h == pytest.approx(-sol.phi(0.4, 0.0), abs=1e-12)

    def test_terminal_inverse_is_arctanh(self, grid, mixture, two_atoms):
        sol = solve(two_atoms, mixture, grid)
        assert sol.inverse_dx(1.0, 0.3) == pytest.approx(math.atanh(0.3))

    def test_unit_magnetization_is_rejected(self, grid, mixture, two_atoms):
        sol = solve(two_atoms, mixture, grid)
        with pytest.raises(DomainError, match=r"\|m\| < 1"):
            sol.inverse_dx(0.5, 1.0)

    def test_dq_h_matches_finite_difference_inside_plateau(self, grid):
        # On a plateau of mass 1, h(q,m) moves with q only through ξ'.
        m = Mixture.sk(0.6)
        z = AtomicMeasure.delta(0.2)
        q, dq = 0.5, 1e-3
        sol = solve(z, m, grid, splits=[q - dq, q, q + dq])
        fd = (sol.legendre_h(q + dq, 0.4)[0] - sol.legendre_h(q - dq, 0.4)[0]) / (2 * dq)
        assert sol.dq_h(q, 0.4) == pytest.approx(fd, abs=1e-5)
