import json

import pytest

from taplab.exceptions import ConfigError
from taplab.schemas import GridConfig, LambdaVariant, MeasureConfig, RunConfig, TaskName


class TestRunConfigLoad:
    """JSON validation and the error paths it reports."""

    def test_defaults(self):
        config = RunConfig.load("{}")
        assert config.task.name == TaskName.PARISI_SOLVE
        assert config.task.variant == LambdaVariant.ANNEALED
        assert config.xi.to_mixture()(1.0) == pytest.approx(0.25)
        assert config.measure.to_mu() is None
        assert config.output is None

    def test_odd_degree_is_reported_at_its_field(self):
        with pytest.raises(ConfigError, match="Degree p=3") as info:
            RunConfig.load(json.dumps({"xi": {"coeffs": [[3, 1.0]]}}))
        assert info.value.field_path == "xi.coeffs"

    def test_unknown_section(self):
        with pytest.raises(ConfigError) as info:
            RunConfig.load(json.dumps({"bogus": 1}))
        assert info.value.field_path == "bogus"

    def test_grid_floor(self):
        with pytest.raises(ConfigError) as info:
            RunConfig.load(json.dumps({"grid": {"points": 101}}))
        assert info.value.field_path == "grid.points"

    def test_unknown_task(self):
        with pytest.raises(ConfigError) as info:
            RunConfig.load(json.dumps({"task": {"name": "solve-everything"}}))
        assert info.value.field_path == "task.name"

    def test_malformed_json(self):
        with pytest.raises(ConfigError, match="invalid configuration"):
            RunConfig.load("{")

    def test_json_round_trip(self):
        config = RunConfig.load(json.dumps({
            "xi": {"coeffs": [[2, 0.5], [4, 0.25]]},
            "measure": {"atoms": [[0.0, 0.3], [0.5, 0.7]]},
            "task": {"name": "tap-eval"},
        }))
        assert RunConfig.model_validate_json(config.model_dump_json()) == config

    def test_seed_falls_back_to_settings(self):
        assert RunConfig().seed() == 0
        assert RunConfig.load(json.dumps({"mc": {"seed": 9}})).seed() == 9


class TestMeasureConfig:
    """Order parameters and magnetizations from configuration."""

    def test_default_is_point_mass_at_zero(self):
        z = MeasureConfig().to_measure()
        assert z.size == 1
        assert z.mass_at(0.0) == 1.0

    def test_atoms(self):
        z = MeasureConfig(atoms=[(0.0, 0.4), (0.5, 0.6)]).to_measure()
        assert z.cdf(0.0) == pytest.approx(0.4)

    def test_prefix(self):
        z = MeasureConfig(prefix={"u": [0.2, 0.6], "q": [0.3, 0.7]}).to_measure()
        assert z.locations.tolist() == pytest.approx([0.0, 0.3, 0.7])

    def test_atoms_and_prefix_are_exclusive(self):
        with pytest.raises(ConfigError, match="not both") as info:
            RunConfig.load(json.dumps({"measure": {"atoms": [[0.0, 1.0]],
                                                   "prefix": {"u": [0.5], "q": [0.4]}}}))
        assert info.value.field_path == "measure"

    def test_bad_weights(self):
        with pytest.raises(ConfigError, match="weights sum"):
            RunConfig.load(json.dumps({"measure": {"atoms": [[0.0, 0.4], [0.5, 0.4]]}}))

    def test_magnetizations(self):
        mu = MeasureConfig(magnetizations=[0.5, -0.5]).to_mu()
        assert mu.q == pytest.approx(0.25)
        with pytest.raises(ConfigError, match=r"\|m_i\| < 1"):
            RunConfig.load(json.dumps({"measure": {"magnetizations": [1.0, 0.0]}}))


class TestGridConfig:
    """Grid fields fall back to settings."""

    def test_settings_fill_unset_fields(self):
        g = GridConfig().to_grid()
        assert g.points == 1025
        assert g.quad_nodes == 48
        assert g.half_width is None

    def test_explicit_fields(self):
        g = GridConfig(L=12.0, points=2049).to_grid()
        assert g.half_width == 12.0
        assert g.points == 2049
