import math

import numpy as np
import pytest
from scipy.integrate import trapezoid

from taplab.core.freeprob import (
    SpectralMeasure,
    edges,
    freeconv_density,
    freeconv_stieltjes,
    log_potential,
    log_potential_minimax,
    stieltjes,
    subordinate,
    v_boundary,
    v_profile,
)
from taplab.exceptions import DomainError, SubordinationError


@pytest.fixture()
def semicircle() -> SpectralMeasure:
    """δ_0, so μ⊞σ_t is the semicircle law of variance t."""
    return SpectralMeasure.delta(0.0)


@pytest.fixture()
def two_point() -> SpectralMeasure:
    return SpectralMeasure(np.array([-1.0, 1.0]), np.array([0.5, 0.5]))


class TestSpectralMeasure:
    """Atom bookkeeping."""

    def test_weights_are_normalized(self):
        mu = SpectralMeasure(np.array([1.0, -1.0]), np.array([2.0, 2.0]))
        np.testing.assert_array_equal(mu.atoms, [-1.0, 1.0])
        np.testing.assert_allclose(mu.weights, [0.5, 0.5])
        assert mu.is_symmetric()

    def test_close_atoms_are_merged(self):
        mu = SpectralMeasure(np.array([0.3, 0.3 + 1e-14, 0.8]), np.array([0.25, 0.25, 0.5]))
        assert mu.atoms.size == 2
        assert mu.weights[0] == pytest.approx(0.5)

    def test_negative_weight_is_rejected(self):
        with pytest.raises(DomainError, match="non-negative"):
            SpectralMeasure(np.array([0.0, 1.0]), np.array([1.5, -0.5]))

    def test_empirical(self):
        mu = SpectralMeasure.empirical([0.2, -0.4, 0.2, 1.0])
        np.testing.assert_allclose(mu.weights, [0.25, 0.5, 0.25])
        assert mu.lo == -0.4
        assert mu.hi == 1.0


class TestStieltjes:
    """G_μ away from the support."""

    def test_point_mass(self, semicircle):
        assert stieltjes(semicircle, 1j) == pytest.approx(-1j)

    def test_on_an_atom(self, semicircle):
        with pytest.raises(SubordinationError, match="atom"):
            stieltjes(semicircle, 0.0)

    def test_inside_the_hull(self, two_point):
        with pytest.raises(SubordinationError, match="convex hull"):
            stieltjes(two_point, 0.5)


class TestEdges:
    """Extremes of the support of μ⊞σ_t."""

    @pytest.mark.parametrize("t", [0.25, 1.0, 2.0])
    def test_semicircle_edges(self, semicircle, t):
        left, right = edges(semicircle, t)
        assert left == pytest.approx(-2.0 * math.sqrt(t), abs=1e-10)
        assert right == pytest.approx(2.0 * math.sqrt(t), abs=1e-10)

    def test_symmetric_measure_has_symmetric_edges(self, two_point):
        left, right = edges(two_point, 0.7)
        assert left == pytest.approx(-right, abs=1e-10)
        assert right > 1.0

    def test_variance_must_be_positive(self, semicircle):
        with pytest.raises(DomainError, match="positive"):
            edges(semicircle, 0.0)


class TestSubordination:
    """ω_{μ,t} on and above the real axis."""

    def test_real_root_left_of_the_bulk(self, semicircle):
        res = subordinate(semicircle, 1.0, -3.0)
        assert res.is_real
        assert res.omega.real == pytest.approx((-3.0 - math.sqrt(5.0)) / 2.0, abs=1e-12)
        assert res.domain_check == 0.0

    def test_inside_the_bulk(self, semicircle):
        res = subordinate(semicircle, 1.0, 0.0)
        assert res.omega == pytest.approx(1j, abs=1e-12)
        assert res.edge_left == pytest.approx(-2.0, abs=1e-10)

    def test_complex_query(self, two_point):
        res = subordinate(two_point, 1.0, 0.3 + 0.2j)
        assert res.omega.imag > 0.0
        assert res.residual < 1e-10

    def test_real_gap_between_atoms(self):
        mu = SpectralMeasure(np.array([-2.0, 2.0]), np.array([0.5, 0.5]))
        res = subordinate(mu, 0.5, 0.0)
        assert res.is_real
        assert abs(res.omega.real) < 1e-12

    def test_lower_half_plane_is_rejected(self, semicircle):
        with pytest.raises(DomainError, match="upper half-plane"):
            subordinate(semicircle, 1.0, 0.5 - 0.1j)

    def test_accepts_raw_samples(self):
        res = subordinate([-1.0, 1.0], 1.0, -4.0)
        assert res.is_real
        assert res.omega.real < -1.0


class TestDerivedQuantities:
    """Densities, Stieltjes transforms and the log potential of μ⊞σ_t."""

    def test_semicircle_log_potential(self, semicircle):
        assert log_potential(semicircle, 1.0, 0.0) == pytest.approx(-0.5, abs=1e-12)

    def test_semicircle_density_at_zero(self, semicircle):
        density = freeconv_density(semicircle, 1.0, [0.0])
        assert density[0] == pytest.approx(1.0 / math.pi, abs=1e-12)

    def test_density_vanishes_outside_the_bulk(self, semicircle):
        np.testing.assert_array_equal(freeconv_density(semicircle, 1.0, [-2.5, -2.01, 3.0]), 0.0)

    @pytest.mark.parametrize("which", ["semicircle", "two_point"])
    def test_density_integrates_to_one(self, which, request):
        mu = request.getfixturevalue(which)
        left, right = edges(mu, 1.0)
        xs = np.linspace(left, right, 4001)
        assert trapezoid(freeconv_density(mu, 1.0, xs), xs) == pytest.approx(1.0, abs=1e-3)

    def test_semicircle_stieltjes(self, semicircle):
        assert freeconv_stieltjes(semicircle, 1.0, 2j) == pytest.approx(1j * (1.0 - math.sqrt(2.0)),
                                                                       abs=1e-12)

    def test_minimax_form_agrees_left_of_the_bulk(self):
        mu = SpectralMeasure(np.array([-0.5, 0.5]), np.array([0.5, 0.5]))
        assert log_potential_minimax(mu, 1.0, -3.0) == pytest.approx(
            log_potential(mu, 1.0, -3.0), abs=1e-8)

    def test_minimax_form_needs_the_left_edge(self, semicircle):
        with pytest.raises(DomainError, match="minimax"):
            log_potential_minimax(semicircle, 1.0, 0.0)


class TestBoundaryProfile:
    """The lower edge v_t of Ω_{μ,t}."""

    def test_point_mass_values(self, semicircle):
        assert v_boundary(semicircle, 1.0, 0.0) == pytest.approx(1.0, abs=1e-12)
        assert v_boundary(semicircle, 1.0, -3.0) == 0.0

    def test_profile_is_semicircle_disc(self, semicircle):
        us = np.array([-0.6, 0.0, 0.6])
        np.testing.assert_allclose(v_profile(semicircle, 1.0, us), np.sqrt(1.0 - us ** 2),
                                   atol=1e-12)

    def test_profile_needs_positive_variance(self, semicircle):
        with pytest.raises(DomainError):
            v_profile(semicircle, -1.0, [0.0])
