"""Two-component Mallows mixtures."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass

import numpy as np

from .mallows import (
    ENUMERATION_LIMIT,
    CapacityError,
    MallowsModel,
    exact_distribution,
    position_prob_table,
    sample_batch,
)
from .permutations import Permutation


class ComponentLabel(enum.Enum):
    FIRST = 1
    SECOND = 2


@dataclass(frozen=True)
class MallowsMixture:
    """``w1 * Mallows(m1) + w2 * Mallows(m2)`` over a shared element set."""

    w1: float
    m1: MallowsModel
    m2: MallowsModel

    def __post_init__(self):
        w1 = float(self.w1)
        if not 0.0 <= w1 <= 1.0:
            raise ValueError(f"w1={w1} outside [0, 1]")
        if self.m1.central.elements != self.m2.central.elements:
            raise ValueError("components must share the element universe")
        object.__setattr__(self, "w1", w1)

    @property
    def w2(self) -> float:
        return 1.0 - self.w1

    @property
    def n(self) -> int:
        return self.m1.n

    def swapped(self) -> "MallowsMixture":
        return MallowsMixture(self.w2, self.m2, self.m1)

    @classmethod
    def from_params(cls, w1, phi1, pi1, phi2, pi2) -> "MallowsMixture":
        return cls(w1, MallowsModel(phi1, Permutation(tuple(pi1))), MallowsModel(phi2, Permutation(tuple(pi2))))

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "w1": self.w1,
            "phi1": self.m1.phi,
            "pi1": self.m1.central.to_one_based(),
            "phi2": self.m2.phi,
            "pi2": self.m2.central.to_one_based(),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "MallowsMixture":
        mix = cls(
            float(d["w1"]),
            MallowsModel(float(d["phi1"]), Permutation.from_one_based(d["pi1"])),
            MallowsModel(float(d["phi2"]), Permutation.from_one_based(d["pi2"])),
        )
        if "n" in d and int(d["n"]) != mix.n:
            raise ValueError(f"n={d['n']} disagrees with permutation length {mix.n}")
        if "w2" in d and not math.isclose(float(d["w2"]), mix.w2, abs_tol=1e-12):
            raise ValueError("w1 + w2 must equal 1")
        return mix


def load_mixture(path) -> MallowsMixture:
    with open(path, encoding="utf-8") as fh:
        return MallowsMixture.from_json_dict(json.load(fh))


def save_mixture(mix: MallowsMixture, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(mix.to_json_dict(), fh, indent=2)
        fh.write("\n")


def _component_draws(mix: MallowsMixture, count: int, rng: np.random.Generator):
    labels = np.where(rng.random(count) < mix.w1, 1, 2).astype(np.int8)
    out = np.empty((count, mix.n), dtype=np.int32)
    for lab, model in ((1, mix.m1), (2, mix.m2)):
        idx = np.flatnonzero(labels == lab)
        if len(idx):
            out[idx] = sample_batch(model, len(idx), rng)
    return out, labels


def sample_mixture_batch(mix: MallowsMixture, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` i.i.d. rankings from the mixture, as an int32 array."""
    return _component_draws(mix, count, rng)[0]


def sample_mixture(mix: MallowsMixture, rng: np.random.Generator) -> Permutation:
    return Permutation(tuple(sample_mixture_batch(mix, 1, rng)[0].tolist()))


def exact_mixture_distribution(mix: MallowsMixture) -> dict[Permutation, float]:
    if mix.n > ENUMERATION_LIMIT:
        raise CapacityError(f"enumeration limited to n <= {ENUMERATION_LIMIT}")
    d1 = exact_distribution(mix.m1)
    d2 = exact_distribution(mix.m2)
    return {p: mix.w1 * d1[p] + mix.w2 * d2.get(p, 0.0) for p in d1}


def mixture_position_prob(mix: MallowsMixture, element: int, position: int) -> float:
    """Probability that ``element`` lands at 0-based ``position``."""
    t1 = position_prob_table(mix.n, mix.m1.phi).f
    t2 = position_prob_table(mix.n, mix.m2.phi).f
    return float(mix.w1 * t1[mix.m1.central.pos(element), position]
                 + mix.w2 * t2[mix.m2.central.pos(element), position])


def mixture_position_matrix(mix: MallowsMixture) -> np.ndarray:
    """``F[e, p]`` for every element and position."""
    n = mix.n
    out = np.zeros((n, n))
    for w, model in ((mix.w1, mix.m1), (mix.w2, mix.m2)):
        t = position_prob_table(n, model.phi).f
        out += w * t[model.central.inverse_array()]
    return out
