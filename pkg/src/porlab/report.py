"""JSON and CSV report writers.

Every JSON report has the same envelope; the only run-dependent field is
``generated_at``, so two runs with the same configuration differ in that key
alone.
"""

import csv
import json
import math
import os
from datetime import datetime, timezone

import numpy as np

SCHEMA_VERSION = "1"
TIMESTAMP_KEY = "generated_at"


def report_schema_version() -> str:
    return SCHEMA_VERSION


def clean(obj):
    """Make an object JSON-safe: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def envelope(command: str, config: dict, measured: dict, result: dict) -> dict:
    return {"schema_version": SCHEMA_VERSION,
            TIMESTAMP_KEY: datetime.now(timezone.utc).isoformat(),
            "command": command, "config": config, "measured": measured, "result": result}


def dumps(doc: dict) -> str:
    return json.dumps(clean(doc), sort_keys=True, indent=2) + "\n"


def write_json(path, doc: dict):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        fh.write(dumps(doc))


def strip_timestamp(doc: dict) -> dict:
    return {k: v for k, v in doc.items() if k != TIMESTAMP_KEY}


def write_csv(path, header, rows):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
