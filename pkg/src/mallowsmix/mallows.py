"""Single Mallows model: normalisers, exact sampling, enumeration and position laws."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .permutations import Permutation, PermutationError, as_permutation, kendall_tau

PHI_MIN = 1e-6
PHI_MAX = 1.0 - 1e-6
ENUMERATION_LIMIT = 8


class CapacityError(ValueError):
    """Raised when exhaustive enumeration would be too large."""


@dataclass(frozen=True)
class MallowsModel:
    """Mallows model with dispersion ``phi`` and central ranking ``central``."""

    phi: float
    central: Permutation

    def __post_init__(self):
        phi = float(self.phi)
        if not PHI_MIN <= phi <= PHI_MAX:
            raise ValueError(f"phi={phi} outside [{PHI_MIN}, {PHI_MAX}]")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "central", as_permutation(self.central))

    @property
    def n(self) -> int:
        return len(self.central)


def phi_powers(phi: float, m: int) -> np.ndarray:
    """``[1, phi, ..., phi^(m-1)]`` by running products."""
    out = np.empty(m)
    acc = 1.0
    for j in range(m):
        out[j] = acc
        acc *= phi
    return out


def z_single(i: int, phi: float) -> float:
    """``1 + phi + ... + phi^(i-1)``."""
    if i < 1:
        raise ValueError("i must be >= 1")
    if not 0.0 < phi < 1.0:
        raise ValueError("phi must lie in (0, 1)")
    return float(math.fsum(phi_powers(phi, i)))


def z_partition(n: int, phi: float) -> float:
    """Sum of ``phi^d(pi, pi0)`` over all permutations of ``n`` elements."""
    if n < 1:
        raise ValueError("n must be >= 1")
    out = 1.0
    for i in range(1, n + 1):
        out *= z_single(i, phi)
    return out


def insertion_cdf(phi: float, n: int) -> np.ndarray:
    """Row ``m`` holds the cumulative law ``phi^j / Z_m`` over ``j < m``."""
    cdf = np.zeros((n + 1, max(n, 1)))
    for m in range(1, n + 1):
        w = phi_powers(phi, m)
        c = np.cumsum(w) / w.sum()
        c[-1] = 1.0
        cdf[m, :m] = c
    return cdf


def sample_batch(model: MallowsModel, count: int, rng: np.random.Generator,
                 chunk: int = 1 << 17) -> np.ndarray:
    """Draw ``count`` rankings as an ``(count, n)`` int32 array."""
    n = model.n
    cdf = insertion_cdf(model.phi, n)
    central = model.central.as_array()
    out = np.empty((count, n), dtype=np.int32)
    for start in range(0, count, chunk):
        stop = min(count, start + chunk)
        u = rng.random((stop - start, n))
        out[start:stop] = kernels.insertion_sample(central, cdf, u)
    return out


def sample(model: MallowsModel, rng: np.random.Generator) -> Permutation:
    """One exact draw: repeatedly take remaining-rank ``j`` w.p. ``phi^(j-1)/Z_m``."""
    return Permutation(tuple(sample_batch(model, 1, rng)[0].tolist()))


def exact_distribution(model: MallowsModel) -> dict[Permutation, float]:
    """Probability of every permutation, by enumeration (``n <= 8``)."""
    n = model.n
    if n > ENUMERATION_LIMIT:
        raise CapacityError(f"enumeration limited to n <= {ENUMERATION_LIMIT}, got {n}")
    perms = [Permutation(o) for o in itertools.permutations(model.central.order)]
    weights = [model.phi ** kendall_tau(p, model.central) for p in perms]
    total = math.fsum(weights)
    return {p: w / total for p, w in zip(perms, weights)}


def dump_distribution_csv(dist: dict[Permutation, float], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["permutation", "probability"])
        for p, prob in dist.items():
            writer.writerow([" ".join(map(str, p.to_one_based())), repr(prob)])


def representative_vector(model: MallowsModel) -> np.ndarray:
    """Entry ``e``: probability that ``e`` is ranked first, ``phi^pos(e) / Z_n``."""
    n = model.n
    powers = phi_powers(model.phi, n)
    vec = np.empty(n)
    for p, e in enumerate(model.central.order):
        vec[e] = powers[p]
    return vec / math.fsum(powers)


@dataclass(frozen=True)
class PositionProbTable:
    """``f[i, l]``: chance the element at central position ``i`` lands at position ``l`` (0-based)."""

    n: int
    phi: float
    f: np.ndarray


def position_prob_table(n: int, phi: float) -> PositionProbTable:
    """Position law of a Mallows model, independent of the central's labels.

    Built by conditioning on which element is placed first: an element
    above ``i`` in the central shifts ``i`` up by one in the reduced model,
    an element below leaves it in place.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    f = np.array([[1.0]])
    for m in range(2, n + 1):
        powers = phi_powers(phi, m)
        zc = np.concatenate([[0.0], np.cumsum(powers)])  # zc[k] = Z_k
        zm = zc[m]
        g = np.zeros((m, m))
        g[:, 0] = powers / zm
        for i in range(m):
            above = zc[i] / zm
            below = (zm - zc[i + 1]) / zm
            if i >= 1:
                g[i, 1:] += above * f[i - 1, :]
            if i <= m - 2:
                g[i, 1:] += below * f[i, :]
        f = g
    return PositionProbTable(n=n, phi=float(phi), f=f)


def gain(n: int, phi: float) -> float:
    """Per-step ratio margin of the position law around its mode."""
    return (1.0 - phi) / (4.0 * phi) * min(1.0 / n, 1.0 - phi * phi)


def condition_on_first(model: MallowsModel, e: int) -> MallowsModel:
    """Law of positions ``2..n`` given ``e`` ranked first: Mallows over ``central`` minus ``e``."""
    if e not in model.central.elements:
        raise PermutationError(f"element {e} not in model")
    return MallowsModel(model.phi, model.central.without([e]))


def prepend_elements(sample: Permutation, k: int, phi: float, rng: np.random.Generator,
                     fresh: list[int] | None = None) -> Permutation:
    """Insert ``k`` fresh elements so the sample follows the extended model.

    The ``r``-th fresh element lands at slot ``j`` (1-based) of the current
    ``m + 1`` slots with probability ``phi^(j-1) / Z_{m+1}``; the result is
    distributed as Mallows over ``(fresh[k-1], ..., fresh[0], central)``.
    """
    sample = as_permutation(sample)
    if k < 1:
        raise ValueError("k must be >= 1")
    if fresh is None:
        start = max(sample.order) + 1 if len(sample) else 0
        fresh = list(range(start, start + k))
    out = prepend_batch(sample.as_array()[None, :], fresh, phi, rng)
    return Permutation(tuple(out[0].tolist()))


def prepend_batch(orders: np.ndarray, fresh, phi: float, rng: np.random.Generator,
                  chunk: int = 1 << 17) -> np.ndarray:
    orders = np.ascontiguousarray(orders, dtype=np.int32)
    fresh = np.asarray(fresh, dtype=np.int32)
    count, n = orders.shape
    k = len(fresh)
    cdf = insertion_cdf(phi, n + k)
    out = np.empty((count, n + k), dtype=np.int32)
    for start in range(0, count, chunk):
        stop = min(count, start + chunk)
        u = rng.random((stop - start, k))
        out[start:stop] = kernels.prepend_insert(orders[start:stop], fresh, cdf, u)
    return out


def expected_kt_distance(n: int, phi: float) -> float:
    """Mean Kendall distance to the central under Mallows(phi)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    terms = [phi / (1.0 - phi) - i * phi**i / (1.0 - phi**i) for i in range(1, n + 1)]
    return max(0.0, math.fsum(terms))


def tv_distance_param_sensitivity(n: int, phi: float, phi_hat: float,
                                  phi_min: float | None = None) -> float:
    """Upper bound ``n^2 / phi_min * |phi - phi_hat|`` on the total-variation gap."""
    if phi_min is None:
        phi_min = min(phi, phi_hat)
    if phi_min <= 0:
        raise ValueError("phi_min must be positive")
    return n * n / phi_min * abs(phi - phi_hat)


def tv_distance(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * math.fsum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)
