"""Kernel evaluation and lazy kernel sub-matrix construction.

Nothing in this module builds the full ``n x n`` Gram matrix unless a caller
explicitly asks for ``kernel_block(all, all)``.  Every entry of a block is an
independent scalar computation accumulated over the input dimensions in a
fixed order, so ``kernel_block(r, c)`` is bitwise the transpose of
``kernel_block(c, r)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidArgumentError

GAUSSIAN = "gaussian"
LINEAR = "linear"
FAMILIES = (GAUSSIAN, LINEAR)

# Rows per chunk when assembling large blocks; bounds the temporary memory.
_BLOCK_ROWS = 2048


@dataclass(frozen=True)
class Dataset:
    points: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise InvalidArgumentError("points must be a non-empty n x d matrix")
        if not np.all(np.isfinite(pts)):
            raise InvalidArgumentError("points contain non-finite values")
        object.__setattr__(self, "points", np.ascontiguousarray(pts))
        if self.labels is not None:
            y = np.asarray(self.labels, dtype=np.float64).reshape(-1)
            if y.shape[0] != pts.shape[0]:
                raise InvalidArgumentError(
                    f"labels have length {y.shape[0]}, expected {pts.shape[0]}"
                )
            if not np.all(np.isfinite(y)):
                raise InvalidArgumentError("labels contain non-finite values")
            object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        labels = None if self.labels is None else self.labels[idx]
        return Dataset(self.points[idx], labels)


@dataclass(frozen=True)
class KernelSpec:
    """A bounded positive definite kernel.

    ``bound`` is kappa^2 = sup_x K(x, x).  It is exactly 1 for the Gaussian
    kernel; for the linear kernel it is computed from the data it will be used
    with (see :meth:`linear`).
    """

    family: str
    sigma: Optional[float] = None
    bound: float = field(default=1.0)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidArgumentError(f"unknown kernel family {self.family!r}")
        if self.family == GAUSSIAN:
            if self.sigma is None or not np.isfinite(self.sigma) or self.sigma <= 0:
                raise InvalidArgumentError("gaussian kernel needs a bandwidth sigma > 0")
            object.__setattr__(self, "bound", 1.0)
        elif not (np.isfinite(self.bound) and self.bound >= 0):
            raise InvalidArgumentError("kernel bound must be finite and >= 0")

    @classmethod
    def gaussian(cls, sigma: float) -> "KernelSpec":
        return cls(GAUSSIAN, float(sigma), 1.0)

    @classmethod
    def linear(cls, data: Dataset) -> "KernelSpec":
        sq = np.einsum("ij,ij->i", data.points, data.points)
        return cls(LINEAR, None, float(sq.max()))

    def to_dict(self) -> dict:
        return {"family": self.family, "sigma": self.sigma, "bound": self.bound}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(d["family"], d.get("sigma"), float(d.get("bound", 1.0)))


def _as_vector(x, name):
    v = np.asarray(x, dtype=np.float64)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.ndim != 1:
        raise InvalidArgumentError(f"{name} must be a vector")
    return v


def eval_kernel(spec: KernelSpec, x, x_prime) -> float:
    x = _as_vector(x, "x")
    xp = _as_vector(x_prime, "x_prime")
    if x.shape != xp.shape:
        raise InvalidArgumentError(f"dimension mismatch: {x.shape[0]} vs {xp.shape[0]}")
    return float(_pairwise(spec, x[None, :], xp[None, :])[0, 0])


def _pairwise(spec: KernelSpec, xr: np.ndarray, xc: np.ndarray) -> np.ndarray:
    # Accumulate dimension by dimension; entry (a, b) sees exactly the same
    # floating point operations as entry (b, a) of the transposed call.
    out = np.zeros((xr.shape[0], xc.shape[0]))
    if spec.family == GAUSSIAN:
        for k in range(xr.shape[1]):
            diff = xr[:, k, None] - xc[None, :, k]
            out += diff * diff
        out *= -1.0 / (2.0 * spec.sigma**2)
        np.exp(out, out=out)
    else:
        for k in range(xr.shape[1]):
            out += xr[:, k, None] * xc[None, :, k]
    return out


def check_indices(idx, n: int) -> np.ndarray:
    arr = np.asarray(idx)
    if arr.size == 0:
        return np.zeros(0, dtype=np.int64)
    if arr.ndim != 1 or not np.issubdtype(arr.dtype, np.integer):
        raise InvalidArgumentError("index lists must be 1-d integer arrays")
    arr = arr.astype(np.int64, copy=False)
    if arr.min() < 0 or arr.max() >= n:
        raise InvalidArgumentError(f"index out of range [0, {n})")
    return arr


def kernel_between(spec: KernelSpec, xr: np.ndarray, xc: np.ndarray) -> np.ndarray:
    """Kernel block between two explicit point sets (rows of ``xr`` and ``xc``)."""
    xr = np.atleast_2d(np.asarray(xr, dtype=np.float64))
    xc = np.atleast_2d(np.asarray(xc, dtype=np.float64))
    if xr.shape[1] != xc.shape[1]:
        raise InvalidArgumentError(f"dimension mismatch: {xr.shape[1]} vs {xc.shape[1]}")
    out = np.empty((xr.shape[0], xc.shape[0]))
    for start in range(0, xr.shape[0], _BLOCK_ROWS):
        stop = min(start + _BLOCK_ROWS, xr.shape[0])
        out[start:stop] = _pairwise(spec, xr[start:stop], xc)
    return out


def kernel_block(spec: KernelSpec, data: Dataset, rows, cols) -> np.ndarray:
    rows = check_indices(rows, data.n)
    cols = check_indices(cols, data.n)
    return kernel_between(spec, data.points[rows], data.points[cols])


def kernel_diag(spec: KernelSpec, data: Dataset, idx) -> np.ndarray:
    idx = check_indices(idx, data.n)
    if spec.family == GAUSSIAN:
        return np.ones(idx.shape[0])
    x = data.points[idx]
    out = np.zeros(idx.shape[0])
    for k in range(x.shape[1]):
        out += x[:, k] * x[:, k]
    return out
