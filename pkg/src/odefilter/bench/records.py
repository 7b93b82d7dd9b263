"""Benchmark rows and their CSV/JSON serialisation.

Floats are written with 17 significant digits, so parsing an emitted file
gives back bit-identical values. Missing values (``None``) become empty CSV
cells and JSON ``null``; non-finite floats are written as ``nan``, ``inf``
and ``-inf`` in both formats.
"""

import csv
import io
import json
import math
import typing
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional


@dataclass(frozen=True)
class BenchmarkRecord:
    """One cell of a work-precision sweep.

    Exactly one of ``tol`` and ``fixed_step`` is set. Failed cells keep the
    configuration columns, leave the metrics empty and describe the failure
    in ``failure``.
    """

    problem: str
    method: str
    nu: int
    tol: Optional[float] = None
    fixed_step: Optional[float] = None
    n_steps: Optional[int] = None
    n_field_evals: Optional[int] = None
    n_jacobian_evals: Optional[int] = None
    wall_time: Optional[float] = None
    rmse: Optional[float] = None
    final_time_error: Optional[float] = None
    max_step: Optional[float] = None
    measured_order: Optional[float] = None
    failure: Optional[str] = None

    @property
    def ok(self):
        return self.failure is None


@dataclass(frozen=True)
class CondRow:
    """Conditioning of the process noise in one coordinate system (log10 values, NaN if undefined)."""

    nu: int
    coordinates: str
    h: Optional[float]
    log10_cond: float
    log10_rho: float
    log10_min_eig: float


@dataclass(frozen=True)
class TraceRow:
    """Condition numbers of one accepted step's predicted covariance factor."""

    step: int
    t: float
    h: float
    proposed: float
    nordsieck: float
    none: float


@dataclass(frozen=True)
class StepRow:
    step: int
    t: float
    h: float
    diffusion: float


def _format_float(value):
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return format(value, ".17g")


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return _format_float(value)
    return str(value)


def _json_value(value):
    if value is None:
        return "null"
    if isinstance(value, float):
        text = _format_float(value)
        return text if math.isfinite(value) else json.dumps(text)
    if isinstance(value, (int, str)):
        return json.dumps(value)
    raise TypeError(f"cannot serialise {type(value).__name__}")


def _normalise(row):
    # numpy scalars -> builtins so formatting is uniform
    out = {}
    for key, value in asdict(row).items():
        if hasattr(value, "item") and not isinstance(value, (str, bytes)):
            value = value.item()
        out[key] = value
    return out


def to_csv(rows, row_type=None):
    row_type = row_type or (type(rows[0]) if rows else BenchmarkRecord)
    names = [f.name for f in fields(row_type)]
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
    writer.writerow(names)
    for row in rows:
        values = _normalise(row)
        writer.writerow([_cell(values[name]) for name in names])
    return buffer.getvalue()


def to_json(rows, row_type=None):
    row_type = row_type or (type(rows[0]) if rows else BenchmarkRecord)
    names = [f.name for f in fields(row_type)]
    objects = []
    for row in rows:
        values = _normalise(row)
        members = ", ".join(f"{json.dumps(name)}: {_json_value(values[name])}" for name in names)
        objects.append("{" + members + "}")
    return "[" + ",\n ".join(objects) + "]\n"


def emit(rows, format="csv", path=None, row_type=None):
    """Serialise ``rows`` (dataclass instances of one type) and optionally write them.

    Returns the serialised text. IO errors are re-raised with the path.
    """
    rows = list(rows)
    if format == "csv":
        text = to_csv(rows, row_type)
    elif format == "json":
        text = to_json(rows, row_type)
    else:
        raise ValueError(f"unknown format {format!r}; expected 'csv' or 'json'")
    if path is not None:
        try:
            Path(path).write_text(text, newline="")
        except OSError as exc:
            raise OSError(f"could not write benchmark output to {path}: {exc}") from exc
    return text


def _base_type(annotation):
    if typing.get_origin(annotation) is typing.Union:
        return next(a for a in typing.get_args(annotation) if a is not type(None))
    return annotation


def _parse_scalar(text, kind):
    if text is None or text == "":
        return None
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    return text


def parse(text, format="csv", row_type=BenchmarkRecord):
    """Inverse of :func:`emit`."""
    kinds = {name: _base_type(hint) for name, hint in typing.get_type_hints(row_type).items()}
    if format == "csv":
        reader = csv.DictReader(io.StringIO(text, newline=""))
        return [row_type(**{k: _parse_scalar(v, kinds[k]) for k, v in raw.items()}) for raw in reader]
    if format == "json":
        out = []
        for raw in json.loads(text):
            values = {}
            for key, value in raw.items():
                if value is not None and kinds[key] is float:
                    value = float(value)
                values[key] = value
            out.append(row_type(**values))
        return out
    raise ValueError(f"unknown format {format!r}")
