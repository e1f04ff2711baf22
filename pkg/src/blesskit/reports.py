"""Machine-readable output: JSON/CSV reports and JSON artifacts.

JSON keys keep a fixed order and floats are written with ``repr``
precision, so two runs with the same configuration produce the same bytes
once wall-clock fields are left out (the default).
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, is_dataclass
from pathlib import Path

from .errors import InvalidArgumentError

TIMING_KEYS = frozenset({"wall_time"})


def strip_timings(obj):
    if isinstance(obj, dict):
        return {k: strip_timings(v) for k, v in obj.items() if k not in TIMING_KEYS}
    if isinstance(obj, list):
        return [strip_timings(v) for v in obj]
    return obj


def report_dict(report, timings: bool = False) -> dict:
    d = asdict(report) if is_dataclass(report) else dict(report)
    return d if timings else strip_timings(d)


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=True) + "\n"


def write_json(obj, path) -> None:
    Path(path).write_text(dumps(obj))


def read_json(path):
    return json.loads(Path(path).read_text())


def _csv_rows(d: dict):
    kind = d.get("kind")
    if kind == "scores":
        yield ["seed", "index", "exact", "approx", "ratio"]
        for r in d["per_seed"]:
            for i, (e, a, q) in enumerate(zip(r["exact"], r["approx"], r["ratios"])):
                yield [r["seed"], i, repr(e), repr(a), repr(q)]
    elif kind == "runtime":
        yield ["algorithm", "n", "median_time"]
        for algo, times in d["series"].items():
            for n, t in zip(d["n_grid"], times):
                yield [algo, n, repr(t)]
    elif kind == "learning":
        yield ["seed", "method", "iteration", "auc", "error"]
        for r in d["per_seed"]:
            for method in ("bless", "uniform"):
                curve = r[method]
                for t, (a, e) in enumerate(zip(curve["auc"], curve["error"])):
                    yield [r["seed"], method, t, repr(a), repr(e)]
    else:
        raise InvalidArgumentError(f"no CSV layout for report kind {kind!r}")


def render_report(report, fmt: str = "json", *, timings: bool = False) -> str:
    """``report`` as nested JSON or as flat CSV rows."""
    d = report_dict(report, timings)
    if fmt == "json":
        return dumps(d)
    if fmt == "csv":
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(_csv_rows(d))
        return buf.getvalue()
    raise InvalidArgumentError(f"unknown report format {fmt!r}")


def emit_report(report, path, fmt: str = "json", *, timings: bool = False) -> None:
    Path(path).write_text(render_report(report, fmt, timings=timings))
