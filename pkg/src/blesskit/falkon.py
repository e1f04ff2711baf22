"""Nystrom kernel ridge regression solved by preconditioned conjugate gradient.

Given centers ``J`` with positive weights ``A``, the preconditioner is

    B = n^{-1/2} A^{-1/2} Q T^{-1} R^{-1},
    A^{-1/2} K_MM A^{-1/2} = Q T^T T Q^T,   R^T R = T T^T / M + lam I,

so that ``n B B^T = (K_MM A^{-1} K_MM / M + lam K_MM)^{-1}`` on the range of
``K_MM``.  CG then runs on ``W beta = b`` with
``W = B^T (K_nM^T K_nM + lam n K_MM) B`` and ``b = B^T K_nM^T y``; the
coefficients are ``alpha = B beta``.

Dictionaries carry leverage-score weights (the ``A`` of the approximate
score formula).  The preconditioner wants weights for which
``sum_j K_j K_j^T / (M A_j)`` estimates ``K_nM^T K_nM / n``; those are
``n / M`` times the dictionary weights, and :func:`preconditioner_weights`
performs that conversion.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla

from ._linalg import jittered_cholesky
from .errors import InvalidArgumentError, NumericError
from .kernels import Dataset, KernelSpec, kernel_between, kernel_block
from .leverage import DEFAULT_ORACLE_CAP, Dictionary, _check_lambda, check_oracle_cap

EPS_RANK = 1e-10
EPS_PINV = 1e-12

_ROW_BLOCK = 4096
_CACHE_ENTRIES = 2**25  # K_nM is kept in memory below this many entries


@dataclass(frozen=True, eq=False)
class PreconditionerFactors:
    Q: Optional[np.ndarray]  # None stands for the identity (full-rank path)
    T: np.ndarray
    R: np.ndarray
    weights: np.ndarray
    lam: float
    n: int
    path: str  # "cholesky" or "eigen"
    jitter: float = 0.0

    @property
    def M(self) -> int:
        return int(self.weights.shape[0])

    @property
    def rank(self) -> int:
        return int(self.T.shape[0])

    def q_matrix(self) -> np.ndarray:
        return np.eye(self.M) if self.Q is None else self.Q

    def _scale(self):
        return 1.0 / (np.sqrt(self.weights) * np.sqrt(self.n))

    def apply(self, v: np.ndarray) -> np.ndarray:
        """``B v`` for a vector (or the columns of a matrix) of length ``rank``."""
        z = sla.solve_triangular(self.R, v, lower=False, check_finite=False)
        z = sla.solve_triangular(self.T, z, lower=False, check_finite=False)
        if self.Q is not None:
            z = self.Q @ z
        s = self._scale()
        return z * (s if z.ndim == 1 else s[:, None])

    def apply_t(self, u: np.ndarray) -> np.ndarray:
        """``B^T u`` for a vector (or the columns of a matrix) of length ``M``."""
        s = self._scale()
        z = u * (s if u.ndim == 1 else s[:, None])
        if self.Q is not None:
            z = self.Q.T @ z
        z = sla.solve_triangular(self.T, z, trans="T", lower=False, check_finite=False)
        return sla.solve_triangular(self.R, z, trans="T", lower=False, check_finite=False)

    def dense(self) -> np.ndarray:
        """Explicit ``M x rank`` matrix ``B`` (small problems and tests only)."""
        return self.apply(np.eye(self.rank))


def preconditioner_weights(dictionary: Dictionary, n: int) -> np.ndarray:
    return (n / dictionary.size) * dictionary.weights


def build_preconditioner(
    K_MM: np.ndarray, weights, lam: float, n: int, *, eps_rank: float = EPS_RANK
) -> PreconditionerFactors:
    """Factor the generalized preconditioner.

    A numerically full-rank ``A^{-1/2} K_MM A^{-1/2}`` (every eigenvalue above
    ``eps_rank`` times the largest) uses ``Q = I`` and Cholesky factors.  Otherwise
    ``Q`` holds the leading eigenvectors and ``T``, ``R`` are diagonal.
    """
    K = np.asarray(K_MM, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1] or K.shape[0] == 0:
        raise InvalidArgumentError("K_MM must be a non-empty square matrix")
    if not np.all(np.isfinite(K)):
        raise NumericError("K_MM has non-finite entries")
    scale = max(float(np.max(np.abs(K))), np.finfo(float).tiny)
    if np.max(np.abs(K - K.T)) > 1e-10 * scale:
        raise InvalidArgumentError("K_MM is not symmetric")
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.shape[0] != K.shape[0] or not (np.all(np.isfinite(w)) and np.all(w > 0)):
        raise InvalidArgumentError("weights must be positive, one per center")
    lam = _check_lambda(lam)
    M = K.shape[0]

    sw = np.sqrt(w)
    Ks = K / sw[:, None] / sw[None, :]
    Ks = 0.5 * (Ks + Ks.T)
    evals, evecs = np.linalg.eigh(Ks)
    top = float(evals[-1])
    if not top > 0:
        raise NumericError("K_MM has no positive eigenvalue")
    keep = evals > eps_rank * top
    q = int(np.count_nonzero(keep))

    if q == M:
        try:
            T, jitter = jittered_cholesky(Ks, lower=False)
            R, _ = jittered_cholesky(T @ T.T / M + lam * np.eye(M), lower=False)
            return PreconditionerFactors(None, T, R, w, lam, int(n), "cholesky", jitter)
        except NumericError:
            pass

    order = np.argsort(evals)[::-1][:q]
    e = evals[order]
    Q = evecs[:, order]
    T = np.diag(np.sqrt(e))
    R = np.diag(np.sqrt(e / M + lam))
    return PreconditionerFactors(Q, T, R, w, lam, int(n), "eigen", 0.0)


class KnmOperator:
    """Products with ``K_nM`` computed block by block over rows.

    The block order is fixed so results do not depend on how the work is
    scheduled.  Small problems keep the whole matrix cached.
    """

    def __init__(self, spec: KernelSpec, points: np.ndarray, centers: np.ndarray):
        self.spec = spec
        self.points = points
        self.centers = centers
        self.shape = (points.shape[0], centers.shape[0])
        self._dense = None
        if self.shape[0] * self.shape[1] <= _CACHE_ENTRIES:
            self._dense = kernel_between(spec, points, centers)

    def _blocks(self):
        for start in range(0, self.shape[0], _ROW_BLOCK):
            stop = min(start + _ROW_BLOCK, self.shape[0])
            yield start, stop, kernel_between(self.spec, self.points[start:stop], self.centers)

    def matvec(self, a: np.ndarray) -> np.ndarray:
        if self._dense is not None:
            return self._dense @ a
        out = np.empty(self.shape[0])
        for start, stop, blk in self._blocks():
            out[start:stop] = blk @ a
        return out

    def rmatvec(self, r: np.ndarray) -> np.ndarray:
        if self._dense is not None:
            return self._dense.T @ r
        out = np.zeros(self.shape[1])
        for start, stop, blk in self._blocks():
            out += blk.T @ r[start:stop]
        return out


class FalkonSystem:
    """The preconditioned system ``W beta = b`` applied matrix-free."""

    def __init__(self, data: Dataset, spec: KernelSpec, dictionary: Dictionary, lam: float):
        if dictionary.size == 0:
            raise InvalidArgumentError("FALKON needs a non-empty dictionary")
        self.lam = _check_lambda(lam)
        self.n = data.n
        self.indices = dictionary.indices
        self.centers = data.points[dictionary.indices]
        self.K_MM = kernel_block(spec, data, dictionary.indices, dictionary.indices)
        self.factors = build_preconditioner(
            self.K_MM, preconditioner_weights(dictionary, data.n), self.lam, data.n
        )
        self.knm = KnmOperator(spec, data.points, self.centers)

    def hessian_apply(self, a: np.ndarray) -> np.ndarray:
        """``(K_nM^T K_nM + lam n K_MM) a`` using two ``K_nM`` products."""
        return self.knm.rmatvec(self.knm.matvec(a)) + self.lam * self.n * (self.K_MM @ a)

    def matvec(self, beta: np.ndarray) -> np.ndarray:
        # B^T K_MM B = (R R^T)^{-1} / n on both paths, so the ridge term is two
        # triangular solves; the literal product would square cond(T).
        f = self.factors
        if f.jitter > 0:  # T^T T = A^{-1/2} K_MM A^{-1/2} + jitter I, the identity is off
            return f.apply_t(self.hessian_apply(f.apply(beta)))
        data_term = f.apply_t(self.knm.rmatvec(self.knm.matvec(f.apply(beta))))
        ridge = sla.solve_triangular(
            f.R, sla.solve_triangular(f.R, beta, check_finite=False), trans="T", check_finite=False
        )
        return data_term + self.lam * ridge

    def rhs(self, y: np.ndarray) -> np.ndarray:
        return self.factors.apply_t(self.knm.rmatvec(y))


@dataclass
class CgState:
    beta: np.ndarray
    residual: np.ndarray
    direction: np.ndarray
    iteration: int = 0
    residual_norms: list = field(default_factory=list)


def conjugate_gradient(matvec, b: np.ndarray, iters: int, tol: Optional[float] = None,
                       callback=None) -> CgState:
    """Plain CG from ``beta = 0`` for exactly ``iters`` steps.

    Stops early only when the residual vanishes or, if ``tol`` is given, when
    ``||r|| <= tol * ||b||``.  ``callback(state)`` runs after every step
    (including skipped ones after an early stop, so callers always see
    ``iters`` calls).
    """
    beta = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rs = float(r @ r)
    bnorm = np.sqrt(rs)
    state = CgState(beta, r, p, 0, [bnorm])
    done = rs == 0.0
    for _ in range(iters):
        if not done and tol is not None and np.sqrt(rs) <= tol * bnorm:
            done = True
        if not done:
            Ap = matvec(p)
            pAp = float(p @ Ap)
            if not np.isfinite(pAp):
                raise NumericError(f"CG breakdown at iteration {state.iteration + 1}")
            if pAp <= 0.0:
                done = True
            else:
                step = rs / pAp
                beta += step * p
                r -= step * Ap
                rs_new = float(r @ r)
                if not np.isfinite(rs_new):
                    raise NumericError(f"non-finite CG residual at iteration {state.iteration + 1}")
                p *= rs_new / rs
                p += r
                rs = rs_new
                done = rs == 0.0
        state.iteration += 1
        state.residual_norms.append(float(np.sqrt(rs)))
        if callback is not None:
            callback(state)
    return state


@dataclass(frozen=True, eq=False)
class KernelExpansion:
    """A predictor ``f(x) = sum_j alpha_j K(x, c_j)``."""

    spec: KernelSpec
    centers: np.ndarray
    alpha: np.ndarray

    def predict(self, points) -> np.ndarray:
        return predict(self, points)


@dataclass(frozen=True, eq=False)
class FalkonModel(KernelExpansion):
    center_indices: np.ndarray = None
    lam: float = 0.0
    iterations: int = 0
    snapshots: Optional[list] = None  # alpha after 0, 1, ..., iterations steps
    residual_norms: Optional[list] = None
    preconditioner_path: str = ""

    def at_iteration(self, t: int) -> KernelExpansion:
        if self.snapshots is None:
            raise InvalidArgumentError("model was trained without snapshots")
        return KernelExpansion(self.spec, self.centers, self.snapshots[t])

    def to_dict(self) -> dict:
        return {
            "kernel": self.spec.to_dict(),
            "lambda": self.lam,
            "iterations": self.iterations,
            "center_indices": self.center_indices.tolist(),
            "centers": self.centers.tolist(),
            "alpha": self.alpha.tolist(),
            "preconditioner_path": self.preconditioner_path,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FalkonModel":
        return cls(
            KernelSpec.from_dict(d["kernel"]),
            np.asarray(d["centers"], dtype=np.float64),
            np.asarray(d["alpha"], dtype=np.float64),
            np.asarray(d["center_indices"], dtype=np.int64),
            float(d["lambda"]),
            int(d["iterations"]),
            preconditioner_path=d.get("preconditioner_path", ""),
        )


def _labels(data: Dataset, labels):
    y = data.labels if labels is None else np.asarray(labels, dtype=np.float64).reshape(-1)
    if y is None:
        raise InvalidArgumentError("training requires labels")
    if y.shape[0] != data.n:
        raise InvalidArgumentError("labels must have one entry per point")
    return y


def falkon_train(
    data: Dataset,
    spec: KernelSpec,
    dictionary: Dictionary,
    lam: float,
    cg_iters: int,
    labels=None,
    *,
    tol: Optional[float] = None,
    keep_snapshots: bool = False,
) -> FalkonModel:
    """Train the preconditioned Nystrom estimator with ``cg_iters`` CG steps."""
    y = _labels(data, labels)
    if int(cg_iters) < 1:
        raise InvalidArgumentError("cg_iters must be >= 1")
    system = FalkonSystem(data, spec, dictionary, lam)
    b = system.rhs(y)

    snapshots = [np.zeros(dictionary.size)] if keep_snapshots else None

    def record(state):
        snapshots.append(system.factors.apply(state.beta))

    state = conjugate_gradient(
        system.matvec, b, int(cg_iters), tol, record if keep_snapshots else None
    )
    alpha = system.factors.apply(state.beta)
    if not np.all(np.isfinite(alpha)):
        raise NumericError("non-finite FALKON coefficients")
    return FalkonModel(
        spec,
        system.centers,
        alpha,
        dictionary.indices,
        system.lam,
        state.iteration,
        snapshots,
        state.residual_norms,
        system.factors.path,
    )


def nystrom_krr_direct(
    data: Dataset,
    spec: KernelSpec,
    dictionary: Dictionary,
    lam: float,
    labels=None,
    *,
    oracle_cap: int = DEFAULT_ORACLE_CAP,
    eps_pinv: float = EPS_PINV,
) -> np.ndarray:
    """``alpha = (K_nM^T K_nM + lam n K_MM)^+ K_nM^T y`` by eigendecomposition."""
    y = _labels(data, labels)
    lam = _check_lambda(lam)
    check_oracle_cap(dictionary.size, oracle_cap, "M")
    J = dictionary.indices
    knm = kernel_block(spec, data, np.arange(data.n), J)
    kmm = kernel_block(spec, data, J, J)
    H = knm.T @ knm + lam * data.n * kmm
    H = 0.5 * (H + H.T)
    e, V = np.linalg.eigh(H)
    keep = e > eps_pinv * e[-1]
    Vk = V[:, keep]
    return Vk @ ((Vk.T @ (knm.T @ y)) / e[keep])


def krr_direct(
    data: Dataset, spec: KernelSpec, lam: float, labels=None, *, oracle_cap: int = DEFAULT_ORACLE_CAP
) -> np.ndarray:
    """Exact kernel ridge regression coefficients ``(K + lam n I)^{-1} y``."""
    y = _labels(data, labels)
    lam = _check_lambda(lam)
    check_oracle_cap(data.n, oracle_cap)
    K = kernel_block(spec, data, np.arange(data.n), np.arange(data.n))
    K[np.diag_indices(data.n)] += lam * data.n
    return sla.cho_solve(sla.cho_factor(K, lower=True, check_finite=False), y)


def predict(model: KernelExpansion, points) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.shape[1] != model.centers.shape[1]:
        raise InvalidArgumentError(
            f"points have dimension {pts.shape[1]}, model expects {model.centers.shape[1]}"
        )
    out = np.empty(pts.shape[0])
    for start in range(0, pts.shape[0], _ROW_BLOCK):
        stop = min(start + _ROW_BLOCK, pts.shape[0])
        out[start:stop] = kernel_between(model.spec, pts[start:stop], model.centers) @ model.alpha
    return out


def materialize_W(
    data: Dataset,
    spec: KernelSpec,
    dictionary: Dictionary,
    lam: float,
    *,
    oracle_cap: int = DEFAULT_ORACLE_CAP,
) -> np.ndarray:
    """Explicit preconditioned matrix ``B^T (K_nM^T K_nM + lam n K_MM) B``, symmetrized."""
    lam = _check_lambda(lam)
    check_oracle_cap(data.n, oracle_cap)
    check_oracle_cap(dictionary.size, oracle_cap, "M")
    J = dictionary.indices
    kmm = kernel_block(spec, data, J, J)
    factors = build_preconditioner(kmm, preconditioner_weights(dictionary, data.n), lam, data.n)
    B = factors.dense()
    G = kernel_block(spec, data, np.arange(data.n), J) @ B
    if factors.jitter > 0:
        ridge = data.n * (B.T @ kmm @ B)
    else:
        # n B^T K_MM B = (R R^T)^{-1}; the literal product loses ~cond(T)^2 digits
        Rinv = sla.solve_triangular(factors.R, np.eye(factors.rank), check_finite=False)
        ridge = Rinv.T @ Rinv
    W = G.T @ G + lam * ridge
    return 0.5 * (W + W.T)


def condition_number(W: np.ndarray) -> float:
    e = np.linalg.eigvalsh(0.5 * (W + W.T))
    if e[0] <= 0:
        return float("inf")
    return float(e[-1] / e[0])
