"""Value types shared by the spectral learner stages."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ..mallows import PHI_MAX, PHI_MIN, MallowsModel
from ..mixture import MallowsMixture
from ..permutations import Permutation
from ..rankings import RankingSample

PATHS = ("tensor", "pivot", "degenerate-identical", "degenerate-staggered",
         "degenerate-aligned", "fail", "em")


class ConfigError(ValueError):
    """Invalid learner configuration or an unusable sample budget."""


class StageFailure(RuntimeError):
    """A learner stage could not produce an answer; carries a reason string."""


@dataclass(frozen=True)
class LearnerConfig:
    """Knobs of the spectral learner.

    ``None`` means "derive from the sample": ``noise_floor`` is three
    times the sampling error ``eps_s = 3 sqrt(log n / N)``, ``eps2`` is
    a fixed floor (tighter for exact laws), ``rounds`` is
    ``10 ceil(log2 n)`` and ``prefix_cap`` is ``n``.  ``snr`` is the
    margin by which every unfolding of an accepted moment block must
    rise above its estimated sampling noise.
    """

    eps: float = 1e-4
    eps2: float | None = None
    rounds: int | None = None
    prefix_cap: int | None = None
    noise_floor: float | None = None
    sample_split: tuple[float, float, float] = (0.4, 0.4, 0.2)
    seed: int = 0
    c_const: float = 10.0
    placement: str = "fit"
    min_conditioned: int = 1000
    snr: float = 4.0

    def __post_init__(self):
        split = tuple(float(s) for s in self.sample_split)
        object.__setattr__(self, "sample_split", split)
        if len(split) != 3 or any(s <= 0 for s in split) or not math.isclose(sum(split), 1.0, abs_tol=1e-9):
            raise ConfigError("sample_split must be three positive fractions summing to 1")
        if self.rounds is not None and self.rounds < 1:
            raise ConfigError("rounds must be >= 1")
        for name in ("eps", "eps2", "noise_floor", "c_const", "snr"):
            val = getattr(self, name)
            if val is not None and not val > 0:
                raise ConfigError(f"{name} must be positive")
        if self.placement not in ("fit", "linear"):
            raise ConfigError("placement must be 'fit' or 'linear'")

    @classmethod
    def from_dict(cls, d: dict) -> "LearnerConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown learner options: {sorted(unknown)}")
        d = dict(d)
        if "sample_split" in d:
            d["sample_split"] = tuple(d["sample_split"])
        return cls(**d)

    def to_dict(self) -> dict:
        return {f: (list(v) if isinstance(v, tuple) else v)
                for f, v in ((f, getattr(self, f)) for f in self.__dataclass_fields__)}


class SplitSample(NamedTuple):
    """Independent parts of the budget: moments, conditioning, completion."""

    moments: RankingSample
    conditioning: RankingSample
    completion: RankingSample

    def map(self, fn) -> "SplitSample":
        return SplitSample(*(fn(s) for s in self))

    @property
    def m(self) -> int:
        return self.moments.m

    @property
    def labels(self) -> np.ndarray:
        return self.moments.labels


@dataclass
class PrefixHypothesis:
    elems1: list[int]
    elems2: list[int]
    x_hat: np.ndarray
    y_hat: np.ndarray

    def __post_init__(self):
        for elems in (self.elems1, self.elems2):
            if len(set(elems)) != len(elems):
                raise ValueError("prefix repeats an element")


@dataclass
class BucketStructure:
    """Grouping of large elements by their level ``phi^r / Z``."""

    L: list[int]
    groups: dict[int, list[int]]
    bad: list[int]
    buckets: dict[int, list[int]] = field(default_factory=dict)
    majority: int | None = None


def bucket_by_shift(pi1: Permutation, pi2: Permutation, L) -> BucketStructure:
    """``B_l = {e in L : pos1(e) - pos2(e) = l}`` with a smallest-|l| tie-break for the majority."""
    buckets: dict[int, list[int]] = {}
    for e in L:
        buckets.setdefault(pi1.pos(e) - pi2.pos(e), []).append(e)
    majority = None
    if buckets:
        majority = min(buckets, key=lambda l: (-len(buckets[l]), abs(l), l))
    return BucketStructure(L=list(L), groups={}, bad=[], buckets=buckets, majority=majority)


def is_degenerate(mix: MallowsMixture, threshold: float) -> bool:
    """Equal dispersions and all but at most two large elements in one shift bucket."""
    if not math.isclose(mix.m1.phi, mix.m2.phi, rel_tol=0, abs_tol=1e-12):
        return False
    from ..moments import closed_form

    p1 = closed_form(mix, dense=False).p1
    L = [e for e in range(mix.n) if p1[e] >= threshold]
    b = bucket_by_shift(mix.m1.central, mix.m2.central, L)
    if b.majority is None:
        return True
    return len(b.buckets[b.majority]) >= len(L) - 2


def clamp_phi(phi: float) -> float:
    return float(min(max(phi, PHI_MIN), PHI_MAX))


@dataclass
class LearnedMixture:
    w1: float
    w2: float
    phi1: float
    phi2: float
    pi1: Permutation
    pi2: Permutation
    path: str
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.path not in PATHS:
            raise ValueError(f"unknown path {self.path!r}")
        if not math.isclose(self.w1 + self.w2, 1.0, abs_tol=1e-9):
            raise ValueError("weights must sum to 1")
        if sorted(self.pi1.order) != sorted(self.pi2.order):
            raise ValueError("recovered rankings cover different elements")
        self.phi1 = clamp_phi(self.phi1)
        self.phi2 = clamp_phi(self.phi2)

    @property
    def n(self) -> int:
        return len(self.pi1)

    def as_mixture(self) -> MallowsMixture:
        return MallowsMixture(min(max(self.w1, 0.0), 1.0),
                              MallowsModel(self.phi1, self.pi1), MallowsModel(self.phi2, self.pi2))

    def swapped(self) -> "LearnedMixture":
        return LearnedMixture(self.w2, self.w1, self.phi2, self.phi1, self.pi2, self.pi1,
                              self.path, self.diagnostics)

    def to_json_dict(self) -> dict:
        return {
            "w1": self.w1, "phi1": self.phi1, "pi1": self.pi1.to_one_based(),
            "w2": self.w2, "phi2": self.phi2, "pi2": self.pi2.to_one_based(),
            "path": self.path, "diagnostics": _jsonable(self.diagnostics),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "LearnedMixture":
        return cls(float(d["w1"]), float(d["w2"]), float(d["phi1"]), float(d["phi2"]),
                   Permutation.from_one_based(d["pi1"]), Permutation.from_one_based(d["pi2"]),
                   d["path"], d.get("diagnostics", {}))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        # strict JSON has no inf or nan
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, Permutation):
        return obj.to_one_based()
    return obj
