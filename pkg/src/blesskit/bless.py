"""Bottom-up leverage score sampling along a decreasing regularization path.

Both samplers start from the empty dictionary at ``lambda0 = kappa^2 / min(t, 1)``
and walk down ``lambda_h = lambda_{h-1} / q`` to the target value, using the
dictionary of level ``h - 1`` to score candidates for level ``h``.  Only sets of
size ``O(1 / lambda_h)`` are ever touched, so the cost does not grow with ``n``.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidArgumentError, ResourceLimitError
from .kernels import Dataset, KernelSpec
from .leverage import Dictionary, oos_scores, prepare_generator


def level_rng(seed: int, stream: int) -> np.random.Generator:
    """Counter-based (Philox) generator for substream ``(seed, stream)``.

    Each level draws from its own substream, so the draws of level ``h`` do
    not depend on how many numbers earlier levels consumed.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))


@dataclass(frozen=True)
class Schedule:
    lambda0: float
    lambda_final: float
    q: float
    lambdas: tuple

    @property
    def H(self) -> int:
        return len(self.lambdas)

    def to_dict(self) -> dict:
        return {
            "lambda0": self.lambda0,
            "lambda_final": self.lambda_final,
            "q": self.q,
            "H": self.H,
            "lambdas": list(self.lambdas),
        }


def make_schedule(lambda0: float, lambda_final: float, q: float) -> Schedule:
    if not (np.isfinite(lambda_final) and lambda_final > 0):
        raise InvalidArgumentError("lambda_final must be > 0")
    if not (np.isfinite(lambda0) and lambda0 >= lambda_final):
        raise InvalidArgumentError("lambda0 must be >= lambda_final")
    if not (np.isfinite(q) and q > 1):
        raise InvalidArgumentError("step q must be > 1")
    ratio = math.log(lambda0 / lambda_final) / math.log(q)
    # tolerance keeps exact powers (e.g. log2(16) = 4.0000000001) from rounding up
    H = max(1, math.ceil(ratio - 1e-9))
    lambdas = [lambda0 / q**h for h in range(1, H + 1)]
    lambdas[-1] = float(lambda_final)
    return Schedule(float(lambda0), float(lambda_final), float(q), tuple(lambdas))


@dataclass(frozen=True)
class BlessParams:
    """Sampler constants.

    The defaults are practical values checked against the exact oracle on
    desk-size problems; the theoretical lower bounds on ``q1``/``q2`` are far
    larger and can be passed explicitly.
    """

    q: float = 2.0
    q1: float = 4.0
    q2: float = 15.0
    accuracy_t: float = 1.0
    seed: int = 0
    max_size: int = 8192  # resource cap on |J_h| (the factorized system)
    max_candidates: int = 1 << 22  # resource cap on |U_h|

    def __post_init__(self):
        if not self.q > 1:
            raise InvalidArgumentError("q must be > 1")
        if not (self.q1 > 0 and self.q2 > 0 and self.accuracy_t > 0):
            raise InvalidArgumentError("q1, q2 and accuracy_t must be > 0")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidArgumentError("seed must be a 64-bit unsigned integer")

    def lambda0(self, kappa2: float) -> float:
        return kappa2 / min(self.accuracy_t, 1.0)

    def to_dict(self) -> dict:
        return {
            "q": self.q,
            "q1": self.q1,
            "q2": self.q2,
            "accuracy_t": self.accuracy_t,
            "seed": int(self.seed),
            "max_size": self.max_size,
            "max_candidates": self.max_candidates,
        }


@dataclass
class LevelDiagnostics:
    level: int
    lam: float
    candidates: int  # |U_h|: R_h for BLESS, realized Bernoulli set size for BLESS-R
    size: int  # |J_h|
    d_h: Optional[float] = None  # BLESS only
    beta: Optional[float] = None  # BLESS-R only
    accepted: Optional[int] = None
    violations: int = 0  # BLESS-R: candidates with p > beta (acceptance clamped to 1)
    clamped: int = 0  # negative raw scores clamped to zero
    uniform_fallback: bool = False
    jitter: float = 0.0
    wall_time: float = 0.0

    def to_dict(self, timings: bool = True) -> dict:
        out = {
            "level": self.level,
            "lambda": self.lam,
            "candidates": self.candidates,
            "size": self.size,
            "d_h": self.d_h,
            "beta": self.beta,
            "accepted": self.accepted,
            "violations": self.violations,
            "clamped": self.clamped,
            "uniform_fallback": self.uniform_fallback,
            "jitter": self.jitter,
        }
        if timings:
            out["wall_time"] = self.wall_time
        return out


@dataclass
class DictionaryPath:
    algorithm: str
    schedule: Schedule
    params: BlessParams
    levels: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)

    @property
    def final(self) -> Dictionary:
        return self.levels[-1]

    def level(self, h: int) -> Dictionary:
        """Dictionary of level ``h`` (1-based, as in the schedule)."""
        return self.levels[h - 1]

    def to_dict(self, timings: bool = True) -> dict:
        return {
            "algorithm": self.algorithm,
            "schedule": self.schedule.to_dict(),
            "params": self.params.to_dict(),
            "levels": [d.to_dict() for d in self.levels],
            "diagnostics": [g.to_dict(timings) for g in self.diagnostics],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DictionaryPath":
        s = d["schedule"]
        schedule = Schedule(s["lambda0"], s["lambda_final"], s["q"], tuple(s["lambdas"]))
        params = BlessParams(**d["params"])
        diags = []
        for g in d.get("diagnostics", []):
            g = dict(g)
            g["lam"] = g.pop("lambda")
            diags.append(LevelDiagnostics(**g))
        return cls(
            d["algorithm"],
            schedule,
            params,
            [Dictionary.from_dict(x) for x in d["levels"]],
            diags,
        )


def _setup(data: Dataset, spec: KernelSpec, lambda_final: float, params: BlessParams):
    if not (np.isfinite(lambda_final) and lambda_final > 0):
        raise InvalidArgumentError("lambda must be > 0")
    kappa2 = float(spec.bound)
    if kappa2 <= 0:
        raise InvalidArgumentError("kernel bound must be > 0")
    # a target above lambda0 collapses to a single level at the target
    lam0 = max(params.lambda0(kappa2), float(lambda_final))
    return kappa2, make_schedule(lam0, lambda_final, params.q)


def bless(
    data: Dataset, spec: KernelSpec, lambda_final: float, params: BlessParams = BlessParams()
) -> DictionaryPath:
    """BLESS: uniform candidate sets, multinomial selection with replacement."""
    kappa2, schedule = _setup(data, spec, lambda_final, params)
    n = data.n
    path = DictionaryPath("bless", schedule, params)
    prev = Dictionary.empty(schedule.lambda0, level=0)

    for h, lam_h in enumerate(schedule.lambdas, start=1):
        t0 = time.perf_counter()
        rng = level_rng(params.seed, h)
        R = max(1, math.ceil(params.q1 * min(kappa2 / lam_h, n)))
        if R > params.max_candidates:
            raise ResourceLimitError(
                f"level {h}: R_h = {R} exceeds max_candidates {params.max_candidates}"
            )
        U = rng.integers(0, n, size=R)

        handle = prepare_generator(data, spec, prev, lam=lam_h)
        sv = oos_scores(handle, U)
        total = float(sv.values.sum())
        fallback = total <= 0.0
        if fallback:
            p = np.full(R, 1.0 / R)
        else:
            p = sv.values / total
        d_h = n / R * total
        M = max(1, math.ceil(params.q2 * d_h))
        if M > params.max_size:
            raise ResourceLimitError(f"level {h}: M_h = {M} exceeds max_size {params.max_size}")

        picks = rng.choice(R, size=M, replace=True, p=p)
        chosen_p = p[picks]
        current = Dictionary(
            lam_h, U[picks], (R * M / n) * chosen_p, np.minimum(chosen_p, 1.0), level=h
        )
        path.levels.append(current)
        path.diagnostics.append(
            LevelDiagnostics(
                level=h,
                lam=lam_h,
                candidates=R,
                size=M,
                d_h=d_h,
                clamped=sv.clamped,
                uniform_fallback=fallback,
                jitter=handle.jitter,
                wall_time=time.perf_counter() - t0,
            )
        )
        prev = current
    return path


def bless_r(
    data: Dataset, spec: KernelSpec, lambda_final: float, params: BlessParams = BlessParams()
) -> DictionaryPath:
    """BLESS-R: Bernoulli candidate sets followed by rejection sampling.

    Produces duplicate-free dictionaries.  Candidates are scored with the
    previous level's dictionary at the previous level's regularization.
    ``params.q1`` is not used.
    """
    kappa2, schedule = _setup(data, spec, lambda_final, params)
    n = data.n
    path = DictionaryPath("bless-r", schedule, params)
    prev = Dictionary.empty(schedule.lambda0, level=0)

    for h, lam_h in enumerate(schedule.lambdas, start=1):
        t0 = time.perf_counter()
        rng = level_rng(params.seed, h)
        beta = min(params.q2 * kappa2 / (lam_h * n), 1.0)
        U = np.flatnonzero(rng.random(n) < beta)
        if U.shape[0] > params.max_candidates:
            raise ResourceLimitError(
                f"level {h}: |U_h| = {U.shape[0]} exceeds max_candidates {params.max_candidates}"
            )

        handle = prepare_generator(data, spec, prev)
        sv = oos_scores(handle, U)
        p = np.minimum(params.q2 * sv.values, 1.0)
        ratio = p / beta
        violations = int(np.count_nonzero(ratio > 1.0))
        accept = rng.random(U.shape[0]) < np.minimum(ratio, 1.0)

        current = Dictionary(lam_h, U[accept], p[accept], p[accept], level=h)
        path.levels.append(current)
        path.diagnostics.append(
            LevelDiagnostics(
                level=h,
                lam=lam_h,
                candidates=int(U.shape[0]),
                size=current.size,
                beta=beta,
                accepted=current.size,
                violations=violations,
                clamped=sv.clamped,
                uniform_fallback=False,
                jitter=handle.jitter,
                wall_time=time.perf_counter() - t0,
            )
        )
        prev = current
    return path
