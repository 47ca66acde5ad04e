import math

import pytest

from taplab.exceptions import ConvergenceError, DomainError
from taplab.services.verification import (
    CHECKS,
    check_gamma,
    check_hierarchy,
    check_ito_order,
    check_layer_identity,
    check_legendre_tangency,
    check_stationary,
    check_structure,
    check_witness_trend,
    run_suite,
)


def _stalls(grid, seed):
    raise ConvergenceError("no progress", trace=[1.0, 0.5])


def _rejects(grid, seed):
    raise DomainError("bad input")


class TestRunSuite:
    """Check rows, seeds and failure capture."""

    def test_cheap_checks_pass(self, grid):
        rows, converged = run_suite(grid, 0, [check_structure, check_legendre_tangency,
                                              check_gamma, check_hierarchy])
        assert converged
        assert {r["module"] for r in rows} == {"mixture", "measures", "variational",
                                                 "gaussian_geometry"}
        assert all(r["pass"] for r in rows), rows

    def test_row_layout(self, grid):
        rows, _ = run_suite(grid, 0, [check_legendre_tangency])
        assert list(rows[0]) == ["module", "check", "value", "target", "tolerance", "pass"]

    def test_seeds_are_offset_per_check(self, grid):
        seen = []

        def record(grid, seed):
            seen.append(seed)
            return []

        run_suite(grid, 5, [record, record, record])
        assert seen == [5, 1005, 2005]

    def test_non_convergence_is_reported(self, grid):
        rows, converged = run_suite(grid, 0, [_stalls])
        assert not converged
        assert rows[0]["check"] == "_stalls"
        assert rows[0]["pass"] is False
        assert math.isnan(rows[0]["value"])

    def test_library_errors_fail_the_row_only(self, grid):
        rows, converged = run_suite(grid, 0, [_rejects, check_structure])
        assert converged
        assert rows[0]["module"] == "suite" and not rows[0]["pass"]
        assert all(r["pass"] for r in rows[1:])

    def test_witness_trend(self, grid):
        rows, _ = run_suite(grid, 0, [check_witness_trend])
        assert [r["check"] for r in rows][-1] == "witness_trend"
        assert all(r["pass"] for r in rows), rows


class TestRegistry:
    """The default suite and its heavier checks."""

    def test_every_check_is_registered_once(self):
        names = [c.__name__ for c in CHECKS]
        assert len(names) == len(set(names))
        for name in ("check_layer_identity", "check_ito_order", "check_stationary",
                     "check_determinant", "check_hierarchy"):
            assert name in names

    def test_dual_bound_rows(self, grid):
        rows = {r["check"]: r for r in check_gamma(grid, 3)}
        for name in ("dual_bound_vs_dense", "dual_bound_optimal", "dual_bound_weak"):
            assert rows[name]["pass"], rows[name]

    def test_hierarchy_includes_conditional_logdensity(self, grid):
        rows = [r for r in check_hierarchy(grid, 0) if r["check"].startswith("conditional")]
        assert len(rows) == 3
        assert all(r["pass"] for r in rows), rows

    @pytest.mark.slow
    def test_layer_identity(self, grid):
        rows, converged = run_suite(grid, 0, [check_layer_identity])
        assert converged
        assert rows[0]["check"] == "prefix2_layer_identity"
        assert rows[0]["pass"], rows

    @pytest.mark.slow
    def test_ito_order(self, grid):
        rows, _ = run_suite(grid, 0, [check_ito_order])
        assert rows[0]["check"] == "ito_residual_halving"
        assert rows[0]["pass"], rows

    @pytest.mark.slow
    def test_stationary(self, grid):
        rows, converged = run_suite(grid, 0, [check_stationary])
        assert converged
        assert [r["check"] for r in rows] == [
            "stationary_point_recovered", "complexity_closed_form",
            "complexity_at_parisi_level", "stationary_optimality",
        ]
        assert all(r["pass"] for r in rows), rows
