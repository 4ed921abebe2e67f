"""Experiment records and their CSV / JSON-lines emission."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from dataclasses import asdict, dataclass, fields

import numpy as np

# header order is part of the output format
HEADER = (
    "command", "s", "p", "alpha", "sigma", "N", "lambda", "seminorm_term", "penalty_term",
    "iterations", "el_residual", "design_checksum", "seed", "wall_time_ms",
)
_INT_FIELDS = {"N", "iterations", "seed"}
_STR_FIELDS = {"command", "design_checksum"}


@dataclass(frozen=True)
class ExperimentRecord:
    command: str
    s: float | None
    p: float
    alpha: float | None
    sigma: float | None
    N: int
    lambda_: float
    seminorm_term: float
    penalty_term: float
    iterations: int
    el_residual: float
    design_checksum: str
    seed: int
    wall_time_ms: float

    def as_row(self) -> dict:
        row = asdict(self)
        row["lambda"] = row.pop("lambda_")
        return {k: row[k] for k in HEADER}


assert tuple(f.name.rstrip("_") for f in fields(ExperimentRecord)) == HEADER


def design_checksum(values) -> str:
    """sha256 of the design rounded to 1e-12 (little-endian float64)."""
    v = np.round(np.asarray(values, dtype=float), 12) + 0.0  # folds -0.0 into 0.0
    return hashlib.sha256(v.astype("<f8").tobytes()).hexdigest()


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return format(value, ".17g")
    return str(value)


def _json_value(value):
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


def render(records, fmt: str = "csv") -> str:
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(HEADER)
        for rec in records:
            writer.writerow([_fmt(v) for v in rec.as_row().values()])
        return buf.getvalue()
    if fmt == "jsonlines":
        # json writes floats with repr, the shortest exact round-trip form
        return "".join(
            json.dumps({k: _json_value(v) for k, v in rec.as_row().items()}) + "\n" for rec in records
        )
    raise ValueError(f"format must be 'csv' or 'jsonlines', got {fmt!r}")


def emit_records(records, path, fmt: str = "csv") -> None:
    """Write records to ``path``; ``OSError`` propagates for unwritable paths."""
    text = render(records, fmt)
    with open(os.fspath(path), "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _parse_field(key: str, text: str):
    if key in _STR_FIELDS:
        return text
    if text == "":
        return None
    if key in _INT_FIELDS:
        return int(text)
    return float(text)


def read_csv(path) -> list[ExperimentRecord]:
    with open(os.fspath(path), encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != HEADER:
            raise ValueError(f"unexpected header {header}")
        out = []
        for row in reader:
            values = {k: _parse_field(k, v) for k, v in zip(HEADER, row)}
            values["lambda_"] = values.pop("lambda")
            out.append(ExperimentRecord(**values))
        return out
