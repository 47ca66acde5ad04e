"""CSV artifacts with a commented JSON provenance header.

File layout:

    # generated: 2026-01-01T00:00:00+00:00
    # {"config_hash": "...", "seed": 0, "task": "...", "tolerances": {...}, ...}
    <csv header>
    <csv rows>

Only the first line depends on the wall clock, so two runs of the same
configuration produce identical files apart from it.
"""

import csv
import hashlib
import io
import json
import logging
import math
from datetime import UTC, datetime
from pathlib import Path
from typing import Any

import numpy as np

from taplab import __version__
from taplab.config import get_settings
from taplab.schemas import RunConfig

logger = logging.getLogger(__name__)

TIMESTAMP_PREFIX = "# generated: "


def stable_json_dumps(obj: Any) -> str:
    return json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"), allow_nan=True)


def config_hash(config: RunConfig) -> str:
    payload = stable_json_dumps(config.model_dump(mode="json"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def provenance(config: RunConfig, task: str, info: dict | None = None) -> dict:
    s = get_settings()
    grid = config.grid.to_grid().resolve(config.xi.to_mixture())
    return {
        "task": task,
        "version": __version__,
        "config_hash": config_hash(config),
        "seed": config.seed(),
        "grid": {"L": grid.half_width, "points": grid.points, "quad_nodes": grid.quad_nodes},
        "tolerances": {
            "newton_tol": s.newton_tol,
            "residual_tol": s.residual_tol,
            "se_multiplier": s.se_multiplier,
            "grid_tail_tol": s.grid_tail_tol,
        },
        "info": info or {},
    }


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, list | tuple):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        return value.item()
    return value


def _cell(value: Any) -> str:
    value = _plain(value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    if value is None:
        return ""
    if isinstance(value, list | dict):
        return stable_json_dumps(value)
    return str(value)


def render_csv(rows: list[dict], header: dict) -> str:
    """Header block plus CSV body; columns in first-seen order."""
    fieldnames: list[str] = []
    for row in rows:
        for key in row:
            if key not in fieldnames:
                fieldnames.append(key)
    buf = io.StringIO()
    buf.write(TIMESTAMP_PREFIX + datetime.now(UTC).isoformat(timespec="seconds") + "\n")
    buf.write("# " + stable_json_dumps(header) + "\n")
    writer = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _cell(v) for k, v in row.items()})
    return buf.getvalue()


def write_artifact(path: str | Path, rows: list[dict], header: dict) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(render_csv(rows, header), encoding="utf-8")
    logger.info("Wrote %d rows to %s", len(rows), out)
    return out


def read_artifact(path: str | Path) -> tuple[dict, list[dict]]:
    """Provenance header and rows (as strings) of a written artifact."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = json.loads(lines[1][2:])
    body = list(csv.DictReader(lines[2:]))
    return header, body


def body_without_timestamp(path: str | Path) -> str:
    text = Path(path).read_text(encoding="utf-8")
    return "\n".join(ln for ln in text.splitlines() if not ln.startswith(TIMESTAMP_PREFIX))
