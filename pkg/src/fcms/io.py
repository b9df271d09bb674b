"""CSV and JSON emitters with lossless float rendering."""
from __future__ import annotations

import csv
import enum
import json
import math
from pathlib import Path

import numpy as np

TRAJECTORY_SCHEMA = ("t", "S", "d", "G1", "G2", "L_global")
EWS_SCHEMA = ("beta", "variance", "lag1_ac", "tau_theory", "tau_measured")
SWEEP_SCHEMA = ("beta", "regime", "rho", "final_abs_d", "diverged_at", "converged", "tau_theory")
SCALE_SCHEMA = ("N", "variance")
PHASE_SCHEMA = ("S", "d", "dS", "dd")
OVERLAY_SCHEMA = ("t", "S", "d")

METADATA_KEY = "metadata"


def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, enum.Enum):
        value = value.value
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return format(value, ".17g")
    return str(value)


def emit_csv(records, schema, path) -> Path:
    """Write ``records`` (mappings) with a header row given by ``schema``."""
    path = Path(path)
    schema = tuple(schema)
    lines = [",".join(schema)]
    for i, rec in enumerate(records):
        if set(rec) != set(schema):
            raise ValueError(f"record {i} has columns {sorted(rec)}, expected {list(schema)}")
        lines.append(",".join(format_value(rec[k]) for k in schema))
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def to_jsonable(obj):
    """Convert numpy scalars/arrays, enums and complex numbers; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        return obj if math.isfinite(obj) else None
    if isinstance(obj, complex):
        return {"re": to_jsonable(obj.real), "im": to_jsonable(obj.imag)}
    return obj


def emit_json(report: dict, path, metadata: dict | None = None) -> Path:
    """Write ``report`` with sorted keys; ``metadata`` goes under ``"metadata"``."""
    path = Path(path)
    body = dict(report)
    if metadata is not None:
        body[METADATA_KEY] = metadata
    text = json.dumps(to_jsonable(body), sort_keys=True, indent=2, allow_nan=False)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text + "\n")
    return path


def read_csv(path) -> list[dict]:
    """Read an emitted CSV back; numeric cells become floats, empty cells None."""
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            parsed = {}
            for k, v in row.items():
                if v == "":
                    parsed[k] = None
                    continue
                try:
                    parsed[k] = float(v)
                except ValueError:
                    parsed[k] = v
            rows.append(parsed)
    return rows
