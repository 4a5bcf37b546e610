"""Synthetic experiments: instance generation, learner runs, scoring and persistence."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .em import MAX_ITERS, TOL, em_learn
from .mallows import PHI_MAX, PHI_MIN, MallowsModel
from .mixture import MallowsMixture
from .permutations import Permutation, random_permutation_at_distance
from .rankings import RankingSample
from .spectral import LearnedMixture, LearnerConfig, learn
from .spectral.types import ConfigError, _jsonable

LEARNERS = ("spectral", "em")
# fixed ids so adding a learner leaves the others' random streams alone
LEARNER_IDS = {"spectral": 1, "em": 2}
TABLE1_DISTANCES = (0, 2, 4, 8, 16, 24, 30, 35, 40, 45)


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 10
    sample_count: int = 5_000_000
    distances: tuple[int, ...] = TABLE1_DISTANCES
    trials: int = 20
    seed: int = 0
    learners: tuple[str, ...] = LEARNERS
    phi_log_range: tuple[float, float] = (0.0, 5.0)
    weight_range: tuple[float, float] = (0.05, 0.95)
    spectral: dict = field(default_factory=dict)
    em_max_iters: int = MAX_ITERS
    em_tol: float = TOL
    workers: int = 1

    def __post_init__(self):
        for name in ("distances", "learners", "phi_log_range", "weight_range"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.n < 3:
            raise ConfigError("n must be >= 3")
        top = self.n * (self.n - 1) // 2
        if not self.distances or any(not 0 <= d <= top for d in self.distances):
            raise ConfigError(f"distances must lie in [0, {top}]")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.sample_count < 1:
            raise ConfigError("sample_count must be >= 1")
        unknown = set(self.learners) - set(LEARNERS)
        if unknown or not self.learners:
            raise ConfigError(f"learners must be a nonempty subset of {LEARNERS}")
        lo, hi = self.phi_log_range
        if not 0 <= lo <= hi:
            raise ConfigError("phi_log_range must satisfy 0 <= lo <= hi")
        wlo, whi = self.weight_range
        if not 0 <= wlo < whi <= 1:
            raise ConfigError("weight_range must satisfy 0 <= lo < hi <= 1")
        LearnerConfig.from_dict(self.spectral)
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown experiment options: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


@dataclass
class TrialResult:
    distance: int
    trial: int
    learner: str
    success: bool
    truth: MallowsMixture
    recovered: LearnedMixture | None
    seconds: float
    error: str = ""
    dw: float = math.nan
    dphi: float = math.nan

    @property
    def path(self) -> str:
        return self.recovered.path if self.recovered is not None else "fail"

    def to_json_dict(self) -> dict:
        return {
            "distance": self.distance, "trial": self.trial, "learner": self.learner,
            "success": self.success, "path": self.path, "dw": _num(self.dw), "dphi": _num(self.dphi),
            "error": self.error, "truth": self.truth.to_json_dict(),
            "recovered": self.recovered.to_json_dict() if self.recovered is not None else None,
        }


def _num(x: float):
    return None if x is None or not math.isfinite(x) else float(x)


def generate_instance(n: int, d: int, rng: np.random.Generator,
                      phi_log_range=(0.0, 5.0), weight_range=(0.05, 0.95)) -> MallowsMixture:
    """Identity first central, second central uniform at Kendall distance ``d``.

    ``w1`` is uniform on ``[0, 1]`` and redrawn until it lands in
    ``weight_range``; each ``phi`` is ``exp(-U)`` with ``U`` uniform on
    ``phi_log_range``.
    """
    top = n * (n - 1) // 2
    if not 0 <= d <= top:
        raise ValueError(f"distance {d} outside [0, {top}]")
    while True:
        w1 = float(rng.uniform(0.0, 1.0))
        if weight_range[0] <= w1 <= weight_range[1]:
            break
    phis = [float(min(max(math.exp(-rng.uniform(*phi_log_range)), PHI_MIN), PHI_MAX)) for _ in range(2)]
    pi2 = random_permutation_at_distance(n, d, rng)
    return MallowsMixture(w1, MallowsModel(phis[0], Permutation.identity(n)), MallowsModel(phis[1], pi2))


def score_success(truth: MallowsMixture, result: LearnedMixture) -> bool:
    """Both recovered centrals equal the generating ones, as an unordered pair."""
    if result.n != truth.n:
        raise ValueError("size mismatch")
    got = (result.pi1, result.pi2)
    want = (truth.m1.central, truth.m2.central)
    return got == want or got == want[::-1]


def parameter_errors(truth: MallowsMixture, result: LearnedMixture) -> tuple[float, float]:
    """``(|dw1|, max |dphi|)`` under the label matching that fits best.

    When the centrals identify the labels that matching is used;
    otherwise the one with the smaller total parameter error.
    """
    def errs(r):
        return abs(r.w1 - truth.w1), max(abs(r.phi1 - truth.m1.phi), abs(r.phi2 - truth.m2.phi))

    straight = (result.pi1, result.pi2) == (truth.m1.central, truth.m2.central)
    crossed = (result.pi2, result.pi1) == (truth.m1.central, truth.m2.central)
    a, b = errs(result), errs(result.swapped())
    if straight and not crossed:
        return a
    if crossed and not straight:
        return b
    return min(a, b, key=sum)


def _streams(seed: int, d: int, trial: int):
    return np.random.SeedSequence([seed, d, trial])


def _learner_rng(seed: int, d: int, trial: int, learner: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, d, trial, LEARNER_IDS[learner]]))


def run_learner(name: str, sample: RankingSample, config: ExperimentConfig,
                rng: np.random.Generator) -> LearnedMixture:
    if name == "spectral":
        opts = dict(config.spectral)
        opts["seed"] = int(rng.integers(0, 2**63 - 1))
        return learn(sample, LearnerConfig.from_dict(opts))
    return em_learn(sample, max_iters=config.em_max_iters, tol=config.em_tol, rng=rng)


def run_trial(config: ExperimentConfig, d: int, trial: int) -> list[TrialResult]:
    """One generated instance and sample, shared by every selected learner."""
    rng = np.random.default_rng(_streams(config.seed, d, trial))
    truth = generate_instance(config.n, d, rng, config.phi_log_range, config.weight_range)
    sample = RankingSample.draw(truth, config.sample_count, rng)
    out = []
    for name in sorted(config.learners, key=LEARNERS.index):
        start = time.perf_counter()
        try:
            res = run_learner(name, sample, config, _learner_rng(config.seed, d, trial, name))
        except Exception as exc:  # a failed trial is a data point, not a crash
            out.append(TrialResult(d, trial, name, False, truth, None, time.perf_counter() - start,
                                   error=f"{type(exc).__name__}: {exc}"))
            continue
        secs = time.perf_counter() - start
        dw, dphi = parameter_errors(truth, res)
        out.append(TrialResult(d, trial, name, score_success(truth, res), truth, res, secs, dw=dw, dphi=dphi))
    return out


def _run_trial_args(args):
    return run_trial(*args)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    trials: list[TrialResult]
    seconds: float = 0.0

    def rows(self, learner: str | None = None, distance: int | None = None) -> list[TrialResult]:
        return [t for t in self.trials if (learner is None or t.learner == learner)
                and (distance is None or t.distance == distance)]

    def success_rate(self, learner: str, distance: int) -> float:
        rows = self.rows(learner, distance)
        return sum(t.success for t in rows) / len(rows) if rows else math.nan

    def summary(self) -> list[dict]:
        """One row per (distance, learner)."""
        out = []
        for d in self.config.distances:
            for name in [x for x in LEARNERS if x in self.config.learners]:
                rows = self.rows(name, d)
                dws = [t.dw for t in rows if math.isfinite(t.dw)]
                dps = [t.dphi for t in rows if math.isfinite(t.dphi)]
                out.append({
                    "distance": d, "learner": name, "trials": len(rows),
                    "success_rate": sum(t.success for t in rows) / len(rows),
                    "mean_dw": float(np.mean(dws)) if dws else math.nan,
                    "mean_dphi": float(np.mean(dps)) if dps else math.nan,
                    "mean_seconds": float(np.mean([t.seconds for t in rows])),
                })
        return out


def run_experiment(config: ExperimentConfig, progress=None) -> ExperimentResult:
    """Every (distance, trial) pair; rows come back ordered by (distance, trial, learner)."""
    jobs = [(config, d, t) for d in config.distances for t in range(config.trials)]
    start = time.perf_counter()
    results: list[TrialResult] = []
    if config.workers == 1:
        for job in jobs:
            rows = run_trial(*job)
            results.extend(rows)
            if progress:
                progress(rows)
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            for rows in pool.map(_run_trial_args, jobs):
                results.extend(rows)
                if progress:
                    progress(rows)
    results.sort(key=lambda t: (config.distances.index(t.distance), t.trial, LEARNERS.index(t.learner)))
    return ExperimentResult(config, results, time.perf_counter() - start)


def source_digest() -> str:
    """SHA-256 over the package sources, so stored results can be tied to the code that made them."""
    root = Path(__file__).resolve().parent
    h = hashlib.sha256()
    for path in sorted(root.rglob("*")):
        if path.suffix in (".py", ".pyx") and "__pycache__" not in path.parts:
            h.update(path.relative_to(root).as_posix().encode())
            h.update(path.read_bytes())
    return h.hexdigest()


def _sig6(x) -> str:
    if isinstance(x, float):
        return "nan" if not math.isfinite(x) else f"{x:.6g}"
    return str(x)


CSV_FIELDS = ("distance", "learner", "trials", "success_rate", "mean_dw", "mean_dphi")


def write_results(result: ExperimentResult, out_dir) -> dict[str, str]:
    """``results.json``, ``results.csv`` and ``metadata.json`` under ``out_dir``.

    The first two depend only on the configuration and seed; wall-clock
    figures and the worker count live in the metadata file.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = {k: os.path.join(out_dir, k) for k in ("results.json", "results.csv", "metadata.json")}
    summary = result.summary()
    config = result.config.to_dict()
    # parallelism changes nothing in the results, so it is recorded with the timings
    workers = config.pop("workers")
    payload = {
        "config": config,
        "summary": [{k: _num(v) if isinstance(v, float) else v for k, v in row.items() if k != "mean_seconds"}
                    for row in summary],
        "trials": [t.to_json_dict() for t in result.trials],
    }
    with open(paths["results.json"], "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
    with open(paths["results.csv"], "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for row in summary:
            writer.writerow([_sig6(row[k]) for k in CSV_FIELDS])
    meta = {
        "total_seconds": result.seconds,
        "mean_seconds": [{"distance": r["distance"], "learner": r["learner"], "mean_seconds": r["mean_seconds"]}
                         for r in summary],
        "trial_seconds": [{"distance": t.distance, "trial": t.trial, "learner": t.learner, "seconds": t.seconds}
                          for t in result.trials],
        "weight_range": list(result.config.weight_range),
        "workers": workers,
        "kernel_backend": kernels.BACKEND,
        "source_digest": source_digest(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "platform": platform.platform(),
    }
    with open(paths["metadata.json"], "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return paths
