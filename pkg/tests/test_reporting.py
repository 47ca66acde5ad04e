import math

import numpy as np
import pytest

from taplab import __version__
from taplab.schemas import RunConfig
from taplab.services.reporting import (
    TIMESTAMP_PREFIX,
    body_without_timestamp,
    config_hash,
    provenance,
    read_artifact,
    render_csv,
    stable_json_dumps,
    write_artifact,
)


class TestStableJson:
    """Compact sorted JSON for provenance headers."""

    def test_sorted_and_compact(self):
        text = stable_json_dumps({"b": np.float64(1.5), "a": np.array([1, 2])})
        assert text == '{"a":[1,2],"b":1.5}'

    def test_non_finite_values(self):
        assert stable_json_dumps({"x": math.nan}) == '{"x":NaN}'


class TestProvenance:
    """Config hashing and the header block."""

    def test_hash_is_deterministic(self):
        assert config_hash(RunConfig()) == config_hash(RunConfig.load("{}"))

    def test_hash_tracks_changes(self):
        other = RunConfig.load('{"mc": {"seed": 3}}')
        assert config_hash(other) != config_hash(RunConfig())

    def test_header_fields(self):
        header = provenance(RunConfig(), "parisi-solve", {"converged": True})
        assert header["task"] == "parisi-solve"
        assert header["version"] == __version__
        assert header["seed"] == 0
        assert header["grid"]["points"] == 1025
        assert header["grid"]["L"] == pytest.approx(10.0 + 6.0 * math.sqrt(0.5))
        assert header["info"] == {"converged": True}


class TestArtifacts:
    """CSV rendering and reading."""

    def test_cells(self):
        rows = [{"a": True, "b": math.nan, "c": -math.inf, "d": None, "e": [1, 2]}]
        text = render_csv(rows, {"task": "demo"})
        lines = text.splitlines()
        assert lines[0].startswith(TIMESTAMP_PREFIX)
        assert lines[1] == '# {"task":"demo"}'
        assert lines[2] == "a,b,c,d,e"
        assert lines[3] == 'true,nan,-inf,,"[1,2]"'

    def test_columns_in_first_seen_order(self):
        text = render_csv([{"x": 1}, {"y": 2, "x": 3}], {})
        assert text.splitlines()[2] == "x,y"

    def test_write_and_read(self, tmp_path):
        path = write_artifact(tmp_path / "sub" / "run.csv", [{"q": 0.25, "ok": False}],
                              {"task": "demo", "seed": 1})
        header, rows = read_artifact(path)
        assert header == {"seed": 1, "task": "demo"}
        assert rows == [{"q": "0.25", "ok": "false"}]

    def test_repeat_writes_differ_only_in_timestamp(self, tmp_path):
        rows = [{"value": 0.1 + 0.2}]
        header = provenance(RunConfig(), "demo")
        a = write_artifact(tmp_path / "a.csv", rows, header)
        b = write_artifact(tmp_path / "b.csv", rows, header)
        assert body_without_timestamp(a) == body_without_timestamp(b)
        assert TIMESTAMP_PREFIX not in body_without_timestamp(a)
