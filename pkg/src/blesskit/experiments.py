"""Experiment protocols: score accuracy, runtime scaling and learning curves."""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Optional

import numpy as np
from scipy.stats import rankdata
from threadpoolctl import threadpool_limits

from . import __version__
from .baselines import exact_rls_dict, two_pass, uniform_dict
from .bless import BlessParams, bless, bless_r
from .datasets import FORMATS, load_dataset, make_synthetic
from .errors import InvalidArgumentError
from .falkon import falkon_train, predict
from .kernels import FAMILIES, GAUSSIAN, Dataset, KernelSpec
from .leverage import (
    DEFAULT_ORACLE_CAP,
    Dictionary,
    check_oracle_cap,
    dictionary_scores,
    exact_scores,
)

ALGORITHMS = ("bless", "bless-r", "two-pass", "uniform", "exact-rls")


@dataclass
class ExperimentConfig:
    """Everything an experiment needs; :meth:`resolved` fills in defaults."""

    data: Optional[str] = None
    format: str = "csv"
    label_column: Optional[int] = 0
    synthetic: Optional[str] = None
    n: int = 2000
    dim: int = 3
    data_seed: int = 0
    kernel: str = GAUSSIAN
    sigma: Optional[float] = 1.0
    algorithm: str = "bless"
    lam: Optional[float] = None
    lambda_bless: Optional[float] = None
    lambda_falkon: Optional[float] = None
    q: float = 2.0
    q1: float = 4.0
    q2: float = 15.0
    accuracy_t: float = 1.0
    size: Optional[int] = None  # dictionary size for the non-BLESS samplers
    first_pass: Optional[int] = None  # Two-Pass first-stage size
    iters: int = 20
    seeds: list = field(default_factory=lambda: [0])
    split: float = 0.2
    n_grid: list = field(default_factory=list)
    algorithms: list = field(default_factory=list)
    repeats: int = 3
    oracle_cap: int = DEFAULT_ORACLE_CAP

    def validate(self) -> "ExperimentConfig":
        if self.algorithm not in ALGORITHMS:
            raise InvalidArgumentError(f"unknown algorithm {self.algorithm!r}")
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise InvalidArgumentError(f"unknown algorithm {a!r}")
        if self.kernel not in FAMILIES:
            raise InvalidArgumentError(f"unknown kernel {self.kernel!r}")
        if self.format not in FORMATS:
            raise InvalidArgumentError(f"unknown format {self.format!r}")
        if not self.seeds:
            raise InvalidArgumentError("seeds must be non-empty")
        for name, label in (("lam", "lambda"), ("lambda_bless", "lambda_bless"),
                            ("lambda_falkon", "lambda_falkon")):
            v = getattr(self, name)
            if v is not None and not (math.isfinite(v) and v > 0):
                raise InvalidArgumentError(f"{label} must be > 0, got {v}")
        if self.lambda_bless is not None and self.lambda_falkon is not None:
            if self.lambda_bless < self.lambda_falkon:
                raise InvalidArgumentError("lambda_bless must be >= lambda_falkon")
        if not 0.0 < self.split < 1.0:
            raise InvalidArgumentError("split must lie in (0, 1)")
        if self.iters < 1:
            raise InvalidArgumentError("iters must be >= 1")
        if self.repeats < 1:
            raise InvalidArgumentError("repeats must be >= 1")
        self.params()  # BlessParams checks q, q1, q2, t
        return self

    def resolved(self) -> "ExperimentConfig":
        cfg = ExperimentConfig(**asdict(self))
        cfg.seeds = [int(s) for s in cfg.seeds]
        if cfg.lambda_falkon is None and cfg.lam is not None:
            cfg.lambda_falkon = cfg.lam
        if cfg.lambda_bless is None:
            cfg.lambda_bless = cfg.lam if cfg.lam is not None else cfg.lambda_falkon
        if cfg.lam is None:
            cfg.lam = cfg.lambda_bless
        if cfg.kernel != GAUSSIAN:
            cfg.sigma = None
        if not cfg.algorithms:
            cfg.algorithms = [cfg.algorithm]
        return cfg.validate()

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidArgumentError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def params(self, seed: int = 0) -> BlessParams:
        return BlessParams(q=self.q, q1=self.q1, q2=self.q2, accuracy_t=self.accuracy_t, seed=seed)

    def load(self) -> Dataset:
        if self.data is not None:
            return load_dataset(self.data, self.format, label_column=self.label_column)
        if self.synthetic is not None:
            return make_synthetic(self.synthetic, self.n, self.dim, self.data_seed)
        raise InvalidArgumentError("no dataset: give a data path or a synthetic generator")

    def kernel_spec(self, data: Dataset) -> KernelSpec:
        if self.kernel == GAUSSIAN:
            if self.sigma is None or not self.sigma > 0:
                raise InvalidArgumentError("gaussian kernel needs sigma > 0")
            return KernelSpec.gaussian(self.sigma)
        return KernelSpec.linear(data)


def require_lambda(value: Optional[float], name: str = "lambda") -> float:
    if value is None:
        raise InvalidArgumentError(f"{name} is required")
    return float(value)


def default_size(n: int, spec: KernelSpec, lam: float) -> int:
    """Dictionary budget for the non-adaptive samplers: ``min(n, kappa^2 / lam)``."""
    return max(1, min(n, math.ceil(spec.bound / lam)))


def sample_dictionary(
    cfg: ExperimentConfig, data: Dataset, spec: KernelSpec, lam: float, seed: int
):
    """Run the configured sampler.  Returns ``(dictionary, path_or_None)``."""
    if cfg.algorithm in ("bless", "bless-r"):
        fn = bless if cfg.algorithm == "bless" else bless_r
        path = fn(data, spec, lam, cfg.params(seed))
        return path.final, path
    M = cfg.size if cfg.size is not None else default_size(data.n, spec, lam)
    if cfg.algorithm == "uniform":
        return uniform_dict(data, M, lam, seed), None
    if cfg.algorithm == "two-pass":
        return two_pass(data, spec, lam, cfg.first_pass, M, seed), None
    return exact_rls_dict(data, spec, lam, M, seed, oracle_cap=cfg.oracle_cap), None


def thread_count() -> int:
    raw = os.environ.get("BLESSKIT_THREADS", "1")
    try:
        value = int(raw)
    except ValueError:
        raise InvalidArgumentError(f"BLESSKIT_THREADS must be an integer, got {raw!r}") from None
    return max(1, value)


def map_seeds(fn: Callable[[int], dict], seeds, threads: Optional[int] = None) -> list:
    """Apply ``fn`` to every seed, in parallel up to ``threads``.

    Results come back sorted by seed regardless of completion order.  With
    more than one worker each one runs its BLAS single-threaded.
    """
    seeds = sorted(seeds)
    threads = thread_count() if threads is None else threads
    if threads <= 1 or len(seeds) <= 1:
        return [fn(s) for s in seeds]
    with threadpool_limits(limits=1), ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, seeds))


# -- metrics ------------------------------------------------------------------


def binary_labels(y) -> np.ndarray:
    """Map a two-valued label vector to -1 / +1 (the larger value is +1)."""
    y = np.asarray(y, dtype=np.float64)
    values = np.unique(y)
    if values.shape[0] != 2:
        raise InvalidArgumentError(f"expected exactly two label values, found {values.shape[0]}")
    return np.where(y == values[1], 1.0, -1.0)


def auc(scores, labels) -> float:
    """Area under the ROC curve as the Mann-Whitney statistic, ties averaged."""
    y = binary_labels(labels)
    r = rankdata(np.asarray(scores, dtype=np.float64), method="average")
    pos = y > 0
    n1 = int(pos.sum())
    n0 = y.shape[0] - n1
    return float((r[pos].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def classification_error(scores, labels) -> float:
    """Error of the sign rule ``f > 0 -> +1``, ``f <= 0 -> -1``."""
    y = binary_labels(labels)
    pred = np.where(np.asarray(scores) > 0, 1.0, -1.0)
    return float(np.mean(pred != y))


def iterations_to_fraction(curve, fraction: float = 0.99) -> int:
    """First iteration whose value reaches ``fraction`` of the last one."""
    curve = np.asarray(curve)
    return int(np.argmax(curve >= fraction * curve[-1]))


# -- reports --------------------------------------------------------------------


@dataclass
class ScoreReport:
    config: dict
    seeds: list
    per_seed: list  # one dict per seed; see run_scores_experiment
    summary: dict
    kind: str = "scores"
    version: str = __version__


@dataclass
class RuntimeReport:
    config: dict
    seeds: list
    n_grid: list
    series: dict  # algorithm -> median wall time per grid point
    ratio: dict  # algorithm -> time(n_max) / time(n_min)
    spread: dict  # algorithm -> max / min over the grid
    kind: str = "runtime"
    version: str = __version__


@dataclass
class LearningReport:
    config: dict
    seeds: list
    split: dict
    per_seed: list
    summary: dict
    kind: str = "learning"
    version: str = __version__


def _quantiles(values: np.ndarray) -> dict:
    if values.size == 0:
        return {"mean": None, "median": None, "q05": None, "q95": None, "min": None, "max": None}
    q05, q50, q95 = np.quantile(values, [0.05, 0.5, 0.95])
    return {
        "mean": float(values.mean()),
        "median": float(q50),
        "q05": float(q05),
        "q95": float(q95),
        "min": float(values.min()),
        "max": float(values.max()),
    }


def run_scores_experiment(cfg: ExperimentConfig, data: Optional[Dataset] = None) -> ScoreReport:
    """Compare sampled leverage scores with the exact ones (R-ACC ratios)."""
    cfg = cfg.resolved()
    data = cfg.load() if data is None else data
    check_oracle_cap(data.n, cfg.oracle_cap)
    spec = cfg.kernel_spec(data)
    lam = require_lambda(cfg.lam)
    exact = exact_scores(data, spec, lam, oracle_cap=cfg.oracle_cap).values

    def one(seed: int) -> dict:
        t0 = time.perf_counter()
        if cfg.algorithm == "exact-rls" and cfg.size is None:
            dictionary, path = Dictionary.full(data.n, lam), None
        else:
            dictionary, path = sample_dictionary(cfg, data, spec, lam, seed)
        approx = dictionary_scores(data, spec, dictionary).values
        wall = time.perf_counter() - t0
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = approx / exact
        return {
            "seed": seed,
            "size": dictionary.size,
            "exact": exact.tolist(),
            "approx": approx.tolist(),
            "ratios": ratios.tolist(),
            "sandwich": bool(np.all((ratios >= 0.5) & (ratios <= 2.0))),
            "ratio_summary": _quantiles(ratios),
            "diagnostics": None if path is None else [g.to_dict(False) for g in path.diagnostics],
            "wall_time": wall,
        }

    per_seed = map_seeds(one, cfg.seeds)
    all_ratios = np.concatenate([np.asarray(r["ratios"]) for r in per_seed]) if per_seed else np.zeros(0)
    summary = _quantiles(all_ratios)
    summary["median_of_seed_means"] = (
        float(np.median([r["ratio_summary"]["mean"] for r in per_seed])) if per_seed else None
    )
    summary["sandwich_seeds"] = int(sum(r["sandwich"] for r in per_seed))
    return ScoreReport(cfg.to_dict(), list(cfg.seeds), per_seed, summary)


def _timed(fn, repeats: int) -> float:
    fn()  # warm-up, discarded
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def run_runtime_experiment(cfg: ExperimentConfig, data: Optional[Dataset] = None) -> RuntimeReport:
    """Median wall time of each sampler over an ``n`` grid of subsets."""
    cfg = cfg.resolved()
    grid = sorted(int(n) for n in cfg.n_grid) or [cfg.n]
    if cfg.data is None and data is None:
        data = make_synthetic(cfg.synthetic or "gaussian", max(grid), cfg.dim, cfg.data_seed)
    data = cfg.load() if data is None else data
    if max(grid) > data.n:
        raise InvalidArgumentError(f"grid point {max(grid)} exceeds dataset size {data.n}")
    spec = cfg.kernel_spec(data)
    lam = require_lambda(cfg.lam)
    seed = cfg.seeds[0]
    series = {}
    for algo in cfg.algorithms:
        run_cfg = ExperimentConfig(**{**asdict(cfg), "algorithm": algo})
        times = []
        for n in grid:
            sub = data.subset(np.arange(n))
            times.append(_timed(lambda: sample_dictionary(run_cfg, sub, spec, lam, seed), cfg.repeats))
        series[algo] = times
    ratio = {a: t[-1] / t[0] for a, t in series.items()}
    spread = {a: max(t) / min(t) for a, t in series.items()}
    return RuntimeReport(cfg.to_dict(), list(cfg.seeds), grid, series, ratio, spread)


def split_indices(n: int, test_fraction: float, seed: int):
    perm = np.random.default_rng(seed).permutation(n)
    n_test = max(1, int(round(test_fraction * n)))
    if n_test >= n:
        raise InvalidArgumentError("split leaves no training points")
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def learning_curve(model, points, labels) -> tuple[list, list]:
    """AUC and classification error after every recorded CG iteration."""
    aucs, errs = [], []
    for t in range(len(model.snapshots)):
        f = predict(model.at_iteration(t), points)
        aucs.append(auc(f, labels))
        errs.append(classification_error(f, labels))
    return aucs, errs


def run_learning_experiment(cfg: ExperimentConfig, data: Optional[Dataset] = None) -> LearningReport:
    """FALKON on BLESS centers versus FALKON on uniform centers of equal number."""
    cfg = cfg.resolved()
    data = cfg.load() if data is None else data
    if data.labels is None:
        raise InvalidArgumentError("learning experiment needs labels")
    y = binary_labels(data.labels)
    spec = cfg.kernel_spec(data)
    lam_b = require_lambda(cfg.lambda_bless, "lambda_bless")
    lam_f = require_lambda(cfg.lambda_falkon, "lambda_falkon")
    train_idx, test_idx = split_indices(data.n, cfg.split, cfg.data_seed)
    train = Dataset(data.points[train_idx], y[train_idx])
    x_test, y_test = data.points[test_idx], y[test_idx]

    def one(seed: int) -> dict:
        fn = bless_r if cfg.algorithm == "bless-r" else bless
        path = fn(train, spec, lam_b, cfg.params(seed))
        centers = {
            "bless": path.final,
            "uniform": uniform_dict(train, min(path.final.size, train.n), lam_b, seed, replace=False),
        }
        out = {"seed": seed, "size": path.final.size}
        for name, dictionary in centers.items():
            model = falkon_train(train, spec, dictionary, lam_f, cfg.iters, keep_snapshots=True)
            aucs, errs = learning_curve(model, x_test, y_test)
            out[name] = {
                "auc": aucs,
                "error": errs,
                "iterations_to_99": iterations_to_fraction(aucs, 0.99),
                "preconditioner": model.preconditioner_path,
            }
        return out

    per_seed = map_seeds(one, cfg.seeds)
    summary = {}
    for name in ("bless", "uniform"):
        its = [r[name]["iterations_to_99"] for r in per_seed]
        finals = [r[name]["auc"][-1] for r in per_seed]
        summary[name] = {
            "median_iterations_to_99": float(np.median(its)) if its else None,
            "median_final_auc": float(np.median(finals)) if finals else None,
        }
    split = {
        "test_fraction": cfg.split,
        "n_train": int(train_idx.shape[0]),
        "n_test": int(test_idx.shape[0]),
        "split_seed": cfg.data_seed,
    }
    return LearningReport(cfg.to_dict(), list(cfg.seeds), split, per_seed, summary)
