"""Dataset ingestion (CSV, libsvm) and small synthetic generators."""
from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DataFormatError, InvalidArgumentError
from .kernels import Dataset

FORMATS = ("csv", "libsvm")


def _parse_float(text: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataFormatError(f"cannot parse {text!r} as a number", line=line) from None
    if not math.isfinite(value):
        raise DataFormatError(f"non-finite value {text!r}", line=line)
    return value


def _looks_numeric(row) -> bool:
    try:
        for field in row:
            float(field)
    except ValueError:
        return False
    return True


def _read_csv(path: Path, label_column: Optional[int], header: Optional[bool]) -> Dataset:
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not f.strip() for f in row):
                continue
            if lineno == 1 and (header is True or (header is None and not _looks_numeric(row))):
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DataFormatError(f"expected {width} columns, found {len(row)}", line=lineno)
            rows.append([_parse_float(f.strip(), lineno) for f in row])
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    table = np.asarray(rows, dtype=np.float64)
    if label_column is None:
        return Dataset(table)
    col = label_column if label_column >= 0 else width + label_column
    if not 0 <= col < width or width < 2:
        raise DataFormatError(f"label column {label_column} out of range for {width} columns")
    return Dataset(np.delete(table, col, axis=1), table[:, col])


def _read_libsvm(path: Path) -> Dataset:
    labels, entries = [], []
    max_index = 0
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            labels.append(_parse_float(tokens[0], lineno))
            row = {}
            for tok in tokens[1:]:
                idx, sep, val = tok.partition(":")
                if not sep:
                    raise DataFormatError(f"expected index:value, got {tok!r}", line=lineno)
                try:
                    j = int(idx)
                except ValueError:
                    raise DataFormatError(f"bad feature index {idx!r}", line=lineno) from None
                if j < 1:
                    raise DataFormatError(f"feature indices start at 1, got {j}", line=lineno)
                row[j] = _parse_float(val, lineno)
                max_index = max(max_index, j)
            entries.append(row)
    if not labels:
        raise DataFormatError(f"{path}: no data rows")
    if max_index == 0:
        raise DataFormatError(f"{path}: no features")
    points = np.zeros((len(labels), max_index))
    for i, row in enumerate(entries):
        for j, v in row.items():
            points[i, j - 1] = v
    return Dataset(points, np.asarray(labels))


def load_dataset(
    path, fmt: str = "csv", *, label_column: Optional[int] = 0, header: Optional[bool] = None
) -> Dataset:
    """Read a dataset.

    CSV: one sample per row, header auto-detected unless ``header`` is given,
    labels taken from ``label_column`` (``None`` for unlabeled data).
    libsvm: ``label idx:val ...`` with 1-based indices, densified to the
    largest index seen.
    """
    path = Path(path)
    if fmt == "csv":
        return _read_csv(path, label_column, header)
    if fmt == "libsvm":
        return _read_libsvm(path)
    raise InvalidArgumentError(f"unknown dataset format {fmt!r}; expected one of {FORMATS}")


def save_dataset(data: Dataset, path, fmt: str = "csv") -> None:
    """Write ``data`` so that :func:`load_dataset` reads back the same values."""
    g = lambda v: format(float(v), ".17g")  # noqa: E731 - shortest exact round-trip
    with open(path, "w", newline="") as fh:
        if fmt == "csv":
            w = csv.writer(fh, lineterminator="\n")
            for i in range(data.n):
                row = [g(x) for x in data.points[i]]
                if data.labels is not None:
                    row.insert(0, g(data.labels[i]))
                w.writerow(row)
        elif fmt == "libsvm":
            if data.labels is None:
                raise InvalidArgumentError("libsvm output needs labels")
            for i in range(data.n):
                feats = " ".join(
                    f"{j + 1}:{g(v)}" for j, v in enumerate(data.points[i]) if v != 0.0
                )
                fh.write(f"{g(data.labels[i])} {feats}".rstrip() + "\n")
        else:
            raise InvalidArgumentError(f"unknown dataset format {fmt!r}")


# -- synthetic data -----------------------------------------------------------


def gaussian_cloud(n: int, d: int = 3, seed: int = 0, noise: float = 0.1) -> Dataset:
    """Standard normal points with a smooth regression target ``sin(x_0)``."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    return Dataset(X, np.sin(X[:, 0]) + noise * rng.standard_normal(n))


def two_blobs(n: int, d: int = 2, seed: int = 0, gap: float = 4.0, scale: float = 0.5) -> Dataset:
    """Two well separated gaussian blobs labeled -1 / +1."""
    rng = np.random.default_rng(seed)
    y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    X = scale * rng.standard_normal((n, d))
    X[:, 0] += 0.5 * gap * y
    return Dataset(X, y)


def radial_sectors(n: int, seed: int = 0, sectors: int = 3, margin: float = 0.2) -> Dataset:
    """Heavy-tailed planar cloud labeled by alternating angular sectors.

    Radii are log-normal, so density (and hence leverage) varies strongly
    between the core and the halo.  Points within ``margin`` of a sector
    boundary (in ``|sin|``) are dropped, which makes the classes separable.
    """
    rng = np.random.default_rng(seed)
    X, y = [], []
    count = 0
    while count < n:
        m = 2 * (n - count) + 16
        r = np.exp(rng.standard_normal(m))
        th = rng.uniform(0.0, 2.0 * np.pi, m)
        s = np.sin(sectors * th)
        keep = np.abs(s) > margin
        X.append(np.c_[r * np.cos(th), r * np.sin(th)][keep])
        y.append(np.sign(s[keep]))
        count += int(keep.sum())
    return Dataset(np.vstack(X)[:n], np.concatenate(y)[:n])


SYNTHETIC = {
    "gaussian": gaussian_cloud,
    "blobs": two_blobs,
    "sectors": radial_sectors,
}


def make_synthetic(name: str, n: int, d: int = 3, seed: int = 0) -> Dataset:
    if name not in SYNTHETIC:
        raise InvalidArgumentError(f"unknown synthetic dataset {name!r}; choose from {sorted(SYNTHETIC)}")
    if name == "sectors":
        return radial_sectors(n, seed=seed)
    return SYNTHETIC[name](n, d=d, seed=seed)
