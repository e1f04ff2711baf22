"""Ridge leverage scores: the exact oracle and dictionary-based approximations.

A :class:`Dictionary` ``(lam, J, A)`` defines approximate scores for any
point ``i`` through

    l_J(i, lam) = (K_ii - K_{J,i}^T (K_{J,J} + lam * n * A)^{-1} K_{J,i}) / (lam * n)

with the convention ``l_{empty}(i, lam) = K_ii / (lam * n)``.  With ``J = [n]``
and ``A = I`` this reproduces the exact scores ``diag(K (K + lam n I)^{-1})``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla

from ._linalg import jittered_cholesky
from .errors import InvalidArgumentError, NumericError, ResourceLimitError
from .kernels import Dataset, KernelSpec, check_indices, kernel_block, kernel_diag

DEFAULT_ORACLE_CAP = 8192

# Targets scored per batch in oos_scores; bounds the M x batch temporary.
_SCORE_BATCH = 4096


def _check_lambda(lam, name="lambda"):
    if not (np.isfinite(lam) and lam > 0):
        raise InvalidArgumentError(f"{name} must be a finite positive number, got {lam}")
    return float(lam)


def check_oracle_cap(size: int, cap: int, what: str = "n"):
    if size > cap:
        raise ResourceLimitError(f"{what} = {size} exceeds the oracle cap {cap}")


@dataclass(frozen=True)
class Dictionary:
    """One leverage-score generator: selected indices with their weights.

    ``indices`` is a multiset (repeats allowed).  ``weights`` is the diagonal of
    ``A``; ``probs`` optionally records the probability used to select each
    entry.
    """

    lam: float
    indices: np.ndarray
    weights: np.ndarray
    probs: Optional[np.ndarray] = None
    level: int = 0

    def __post_init__(self):
        _check_lambda(self.lam)
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if idx.shape != w.shape:
            raise InvalidArgumentError("indices and weights must have equal length")
        if w.size and not (np.all(np.isfinite(w)) and np.all(w > 0)):
            raise InvalidArgumentError("dictionary weights must be finite and > 0")
        if idx.size and idx.min() < 0:
            raise InvalidArgumentError("dictionary indices must be non-negative")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "weights", w)
        if self.probs is not None:
            p = np.asarray(self.probs, dtype=np.float64).reshape(-1)
            if p.shape != idx.shape:
                raise InvalidArgumentError("probs must match indices in length")
            if p.size and not (np.all(p > 0) and np.all(p <= 1)):
                raise InvalidArgumentError("selection probabilities must lie in (0, 1]")
            object.__setattr__(self, "probs", p)

    @classmethod
    def empty(cls, lam: float, level: int = 0) -> "Dictionary":
        return cls(lam, np.zeros(0, dtype=np.int64), np.zeros(0), None, level)

    @classmethod
    def full(cls, n: int, lam: float) -> "Dictionary":
        """The whole ground set with unit weights (reproduces exact scores)."""
        return cls(lam, np.arange(n), np.ones(n), None, 0)

    @property
    def size(self) -> int:
        return int(self.indices.shape[0])

    def __len__(self):
        return self.size

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "level": self.level,
            "indices": self.indices.tolist(),
            "weights": self.weights.tolist(),
            "probs": None if self.probs is None else self.probs.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Dictionary":
        return cls(
            float(d["lambda"]),
            np.asarray(d["indices"], dtype=np.int64),
            np.asarray(d["weights"], dtype=np.float64),
            None if d.get("probs") is None else np.asarray(d["probs"], dtype=np.float64),
            int(d.get("level", 0)),
        )


@dataclass(frozen=True)
class ScoreVector:
    lam: float
    values: np.ndarray
    clamped: int = 0  # how many raw values were rounded below zero and clamped

    def __len__(self):
        return int(self.values.shape[0])


def score_summaries(scores: ScoreVector, n: int) -> tuple[float, float]:
    """Return ``(d_eff, d_inf)``: the sum of the scores and ``n`` times their max."""
    vals = np.asarray(scores.values)
    if vals.size == 0:
        raise InvalidArgumentError("score vector is empty")
    return float(vals.sum()), float(n * vals.max())


def exact_scores(
    data: Dataset,
    spec: KernelSpec,
    lam: float,
    *,
    oracle_cap: int = DEFAULT_ORACLE_CAP,
    method: str = "eigh",
) -> ScoreVector:
    """Exact ridge leverage scores ``diag(K (K + lam n I)^{-1})``.

    ``method="eigh"`` (default) uses the symmetric eigendecomposition
    ``K = V diag(s) V^T`` and returns ``sum_j s_j / (s_j + lam n) V_ij^2``.
    ``method="cholesky"`` computes ``1 - lam n diag((K + lam n I)^{-1})`` from a
    Cholesky factor; it is several times cheaper and is what the exact-RLS
    sampling baseline uses.
    """
    lam = _check_lambda(lam)
    n = data.n
    check_oracle_cap(n, oracle_cap)
    K = kernel_block(spec, data, np.arange(n), np.arange(n))
    if not np.all(np.isfinite(K)):
        raise NumericError("kernel matrix has non-finite entries")
    reg = lam * n
    if method == "eigh":
        s, V = np.linalg.eigh(K)
        s = np.clip(s, 0.0, None)
        vals = (V * V) @ (s / (s + reg))
    elif method == "cholesky":
        K[np.diag_indices(n)] += reg
        L = sla.cholesky(K, lower=True, check_finite=False)
        Linv, info = sla.lapack.dtrtri(L, lower=1)
        if info != 0:
            raise NumericError("triangular inversion failed")
        # diag((L L^T)^{-1}) = column sums of squares of L^{-1}
        inv_diag = np.einsum("ij,ij->j", Linv, Linv)
        vals = 1.0 - reg * inv_diag
    else:
        raise InvalidArgumentError(f"unknown method {method!r}")
    clamped = int(np.count_nonzero(vals < 0))
    return ScoreVector(lam, np.clip(vals, 0.0, 1.0), clamped)


def exact_score_path(
    data: Dataset, spec: KernelSpec, lambdas, *, oracle_cap: int = DEFAULT_ORACLE_CAP
) -> list:
    """Exact scores for several regularization values from one eigendecomposition."""
    lambdas = [_check_lambda(lam) for lam in lambdas]
    n = data.n
    check_oracle_cap(n, oracle_cap)
    K = kernel_block(spec, data, np.arange(n), np.arange(n))
    if not np.all(np.isfinite(K)):
        raise NumericError("kernel matrix has non-finite entries")
    s, V = np.linalg.eigh(K)
    s = np.clip(s, 0.0, None)
    V2 = V * V
    out = []
    for lam in lambdas:
        vals = V2 @ (s / (s + lam * n))
        out.append(ScoreVector(lam, np.clip(vals, 0.0, 1.0), 0))
    return out


@dataclass(frozen=True, eq=False)
class GeneratorHandle:
    """A dictionary with its factorized ``K_JJ + lam n A`` (lower Cholesky)."""

    data: Dataset
    spec: KernelSpec
    dictionary: Dictionary
    lam: float
    chol: Optional[np.ndarray] = field(default=None, repr=False)
    jitter: float = 0.0

    @property
    def is_empty(self) -> bool:
        return self.dictionary.size == 0

    def system_matrix(self) -> np.ndarray:
        J = self.dictionary.indices
        mat = kernel_block(self.spec, self.data, J, J)
        mat[np.diag_indices(J.shape[0])] += self.lam * self.data.n * self.dictionary.weights
        return mat

    def probe_residual(self, seed: int = 0) -> float:
        """Relative residual of solving the factorized system on a random probe."""
        if self.is_empty:
            return 0.0
        mat = self.system_matrix()
        rng = np.random.default_rng(seed)
        b = rng.standard_normal(mat.shape[0])
        x = sla.cho_solve((self.chol, True), b, check_finite=False)
        return float(np.linalg.norm(mat @ x - b) / np.linalg.norm(b))


def prepare_generator(
    data: Dataset, spec: KernelSpec, dictionary: Dictionary, lam: Optional[float] = None
) -> GeneratorHandle:
    """Factorize ``K_JJ + lam n A`` once so that many scores can be queried.

    ``lam`` defaults to the dictionary's own regularization; BLESS passes the
    next, smaller level's value here.
    """
    lam = dictionary.lam if lam is None else _check_lambda(lam)
    if dictionary.size == 0:
        return GeneratorHandle(data, spec, dictionary, lam)
    check_indices(dictionary.indices, data.n)
    handle = GeneratorHandle(data, spec, dictionary, lam)
    chol, jitter = jittered_cholesky(handle.system_matrix(), lower=True)
    return GeneratorHandle(data, spec, dictionary, lam, chol, jitter)


def oos_scores(
    handle: GeneratorHandle, targets, lambda_eval: Optional[float] = None
) -> ScoreVector:
    """Approximate leverage scores of ``targets`` from a prepared dictionary.

    The regularization is the one the handle was factorized with; passing a
    different ``lambda_eval`` is an error (build a new handle instead).
    Values that round below zero are clamped to 0 and counted.
    """
    if lambda_eval is not None:
        lambda_eval = _check_lambda(lambda_eval, "lambda_eval")
        if not np.isclose(lambda_eval, handle.lam, rtol=1e-12, atol=0.0):
            raise InvalidArgumentError(
                f"handle was factorized at lambda={handle.lam}; "
                f"prepare a new generator to evaluate at {lambda_eval}"
            )
    data, spec = handle.data, handle.spec
    targets = check_indices(targets, data.n)
    reg = handle.lam * data.n
    diag = kernel_diag(spec, data, targets)
    if handle.is_empty:
        return ScoreVector(handle.lam, diag / reg, 0)
    J = handle.dictionary.indices
    quad = np.empty(targets.shape[0])
    for start in range(0, targets.shape[0], _SCORE_BATCH):
        stop = min(start + _SCORE_BATCH, targets.shape[0])
        kji = kernel_block(spec, data, J, targets[start:stop])
        v = sla.solve_triangular(handle.chol, kji, lower=True, check_finite=False)
        quad[start:stop] = np.einsum("ij,ij->j", v, v)
    raw = (diag - quad) / reg
    if not np.all(np.isfinite(raw)):
        raise NumericError("non-finite approximate leverage score")
    clamped = int(np.count_nonzero(raw < 0))
    return ScoreVector(handle.lam, np.maximum(raw, 0.0), clamped)


def dictionary_scores(
    data: Dataset, spec: KernelSpec, dictionary: Dictionary, targets=None, lam=None
) -> ScoreVector:
    """Convenience wrapper: prepare a generator and score ``targets`` (default: all)."""
    handle = prepare_generator(data, spec, dictionary, lam)
    if targets is None:
        targets = np.arange(data.n)
    return oos_scores(handle, targets)
