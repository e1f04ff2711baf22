"""Reference samplers: uniform, Two-Pass and exact ridge-leverage-score sampling.

All of them return a :class:`~blesskit.leverage.Dictionary` whose weights follow
the same convention as BLESS: an entry drawn with probability ``p`` out of a
candidate set of size ``R`` in a draw of ``M`` columns gets weight
``R * M / n * p``.  With ``R = n`` that is ``M * p``.
"""
from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .bless import level_rng
from .errors import InvalidArgumentError, NumericError
from .kernels import Dataset, KernelSpec
from .leverage import (
    DEFAULT_ORACLE_CAP,
    Dictionary,
    dictionary_scores,
    exact_scores,
)


def uniform_dict(
    data: Dataset, M: int, lam: float, seed: int = 0, *, replace: bool = True
) -> Dictionary:
    """``M`` uniform draws from ``[n]`` (with replacement unless ``replace=False``).

    Every entry has probability ``1/n`` and weight ``M/n``, so that ``M = n``
    without replacement is exactly the full set with ``A = I``.
    """
    n = data.n
    M = int(M)
    if not 1 <= M <= n:
        raise InvalidArgumentError(f"M must be in [1, {n}], got {M}")
    rng = level_rng(seed, 0)
    if replace:
        idx = rng.integers(0, n, size=M)
    else:
        idx = rng.permutation(n)[:M]
    return Dictionary(lam, idx, np.full(M, M / n), np.full(M, 1.0 / n), level=0)


def _draw_from_probabilities(
    p: np.ndarray, M: int, lam: float, rng: np.random.Generator
) -> Dictionary:
    picks = rng.choice(p.shape[0], size=M, replace=True, p=p)
    chosen = p[picks]
    return Dictionary(lam, picks, M * chosen, chosen, level=0)


def _normalize(scores: np.ndarray, what: str) -> np.ndarray:
    total = float(scores.sum())
    if not (np.isfinite(total) and total > 0):
        raise NumericError(f"{what}: all leverage scores are zero")
    return scores / total


def default_first_pass_size(n: int, lam: float) -> int:
    return min(n, math.ceil(4.0 / lam))


def two_pass_probabilities(
    data: Dataset, spec: KernelSpec, lam: float, M1: Optional[int] = None, seed: int = 0
) -> np.ndarray:
    """Second-pass sampling distribution over ``[n]``.

    The first pass takes ``M1`` distinct uniform columns; their dictionary
    scores every point of the data set.
    """
    if M1 is None:
        M1 = default_first_pass_size(data.n, lam)
    M1 = int(M1)
    if M1 < 1:
        raise InvalidArgumentError("M1 must be >= 1")
    first = uniform_dict(data, min(M1, data.n), lam, seed, replace=False)
    scores = dictionary_scores(data, spec, first).values
    return _normalize(scores, "two-pass")


def two_pass(
    data: Dataset,
    spec: KernelSpec,
    lam: float,
    M1: Optional[int],
    M2: int,
    seed: int = 0,
) -> Dictionary:
    if int(M2) < 1:
        raise InvalidArgumentError("M2 must be >= 1")
    p = two_pass_probabilities(data, spec, lam, M1, seed)
    return _draw_from_probabilities(p, int(M2), lam, level_rng(seed, 1))


def exact_rls_probabilities(
    data: Dataset, spec: KernelSpec, lam: float, *, oracle_cap: int = DEFAULT_ORACLE_CAP
) -> np.ndarray:
    scores = exact_scores(data, spec, lam, oracle_cap=oracle_cap, method="cholesky").values
    return _normalize(scores, "exact-rls")


def exact_rls_dict(
    data: Dataset,
    spec: KernelSpec,
    lam: float,
    M: int,
    seed: int = 0,
    *,
    oracle_cap: int = DEFAULT_ORACLE_CAP,
) -> Dictionary:
    if int(M) < 1:
        raise InvalidArgumentError("M must be >= 1")
    p = exact_rls_probabilities(data, spec, lam, oracle_cap=oracle_cap)
    return _draw_from_probabilities(p, int(M), lam, level_rng(seed, 1))
