"""Weighted multisets of rankings.

Millions of draws over ten elements collapse to a few hundred thousand
distinct orders, so learners work on ``(unique orders, multiplicity)``
pairs.  The same container carries an exact distribution (weights are
probabilities), which is how the exact-statistics mode is driven.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import kernels
from .mallows import insertion_cdf
from .mixture import MallowsMixture, exact_mixture_distribution, sample_mixture_batch
from .moments import MomentStats, tally
from .permutations import orders_array

_LEHMER_LIMIT = 20


def _radix(m: int) -> np.ndarray:
    return np.array([math.factorial(m - 1 - p) for p in range(m)], dtype=np.int64)


def dedupe(orders: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Merge repeated rows, summing their weights; rows come back in a canonical order."""
    orders = np.ascontiguousarray(orders, dtype=np.int32)
    weights = np.asarray(weights, dtype=np.float64)
    if len(orders) == 0:
        return orders, weights
    m = orders.shape[1]
    if m <= _LEHMER_LIMIT:
        keys = kernels.lehmer_keys(orders, _radix(m))
        uniq, first, inv = np.unique(keys, return_index=True, return_inverse=True)
        return orders[first], np.bincount(inv, weights=weights, minlength=len(uniq))
    uniq, inv = np.unique(orders, axis=0, return_inverse=True)
    return np.ascontiguousarray(uniq), np.bincount(inv.ravel(), weights=weights, minlength=len(uniq))


@dataclass
class RankingSample:
    """Distinct rankings over local ids ``0..m-1`` with weights.

    ``labels[i]`` is the caller-facing id of local element ``i``;
    artificial elements added by :meth:`prepend` get negative labels.
    With ``exact=True`` the weights are probabilities of an exact law
    rather than draw counts.
    """

    orders: np.ndarray
    weights: np.ndarray
    labels: np.ndarray
    exact: bool = False

    def __post_init__(self):
        self.orders = np.ascontiguousarray(self.orders, dtype=np.int32)
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.orders.ndim != 2 or len(self.orders) != len(self.weights):
            raise ValueError("orders must be (U, m) with one weight per row")
        if self.orders.shape[1] != len(self.labels):
            raise ValueError("one label per element required")

    # -- construction -------------------------------------------------------

    @classmethod
    def from_orders(cls, orders, labels=None) -> "RankingSample":
        if not isinstance(orders, np.ndarray):
            orders = orders_array(orders)
        orders = np.asarray(orders, dtype=np.int32)
        if len(orders) == 0:
            raise ValueError("no rankings")
        m = orders.shape[1]
        rows, w = dedupe(orders, np.ones(len(orders)))
        return cls(rows, w, np.arange(m) if labels is None else labels)

    @classmethod
    def from_distribution(cls, dist: dict) -> "RankingSample":
        perms = list(dist)
        rows = orders_array(perms)
        w = np.array([dist[p] for p in perms])
        rows, w = dedupe(rows, w)
        return cls(rows, w, np.arange(rows.shape[1]), exact=True)

    @classmethod
    def exact_mixture(cls, mix: MallowsMixture) -> "RankingSample":
        return cls.from_distribution(exact_mixture_distribution(mix))

    @classmethod
    def draw(cls, mix: MallowsMixture, count: int, rng: np.random.Generator,
             chunk: int = 1 << 20) -> "RankingSample":
        """``count`` mixture draws, tallied chunk by chunk to bound memory."""
        parts_o, parts_w = [], []
        for start in range(0, count, chunk):
            rows = sample_mixture_batch(mix, min(chunk, count - start), rng)
            o, w = dedupe(rows, np.ones(len(rows)))
            parts_o.append(o)
            parts_w.append(w)
        rows, w = dedupe(np.concatenate(parts_o), np.concatenate(parts_w))
        return cls(rows, w, np.arange(mix.n))

    # -- basic facts --------------------------------------------------------

    @property
    def m(self) -> int:
        return self.orders.shape[1]

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    @property
    def size(self) -> float:
        """Number of draws; infinite for an exact law."""
        return math.inf if self.exact else self.total

    def expand(self) -> np.ndarray:
        """Materialise one row per draw (sample mode only)."""
        if self.exact:
            raise ValueError("an exact law has no draws to expand")
        return np.repeat(self.orders, self.weights.astype(np.int64), axis=0)

    # -- statistics ---------------------------------------------------------

    def moments(self) -> MomentStats:
        return tally(self.orders, self.weights, self.m, exact=self.exact)

    @cached_property
    def _position_counts(self) -> np.ndarray:
        return kernels.position_counts(self.orders, self.weights, self.m)

    def position_freq(self) -> np.ndarray:
        """``F[e, p]``: fraction of mass with element ``e`` at 0-based position ``p``."""
        return self._position_counts / self.total

    def first_freq(self) -> np.ndarray:
        return self._position_counts[:, 0] / self.total

    # -- transformations ----------------------------------------------------

    def condition_first(self, e: int) -> "RankingSample":
        """Rows whose first element is ``e``; ``e`` stays in place."""
        keep = self.orders[:, 0] == e
        return RankingSample(self.orders[keep], self.weights[keep], self.labels, self.exact)

    def condition_prefix(self, prefix) -> "RankingSample":
        keep = np.ones(len(self.orders), dtype=bool)
        for p, e in enumerate(prefix):
            keep &= self.orders[:, p] == e
        return RankingSample(self.orders[keep], self.weights[keep], self.labels, self.exact)

    def project_out(self, drop) -> "RankingSample":
        """Delete elements ``drop`` from every ranking and relabel the rest densely."""
        drop = np.asarray(sorted(set(int(d) for d in drop)), dtype=np.int64)
        keep_elems = np.setdiff1d(np.arange(self.m), drop)
        if len(drop) == 0:
            return self
        mask = ~np.isin(self.orders, drop)
        rows = self.orders[mask].reshape(len(self.orders), len(keep_elems))
        relabel = np.full(self.m, -1, dtype=np.int32)
        relabel[keep_elems] = np.arange(len(keep_elems), dtype=np.int32)
        rows, w = dedupe(relabel[rows], self.weights)
        return RankingSample(rows, w, self.labels[keep_elems], self.exact)

    def prepend(self, k: int, phi: float, rng: np.random.Generator,
                chunk: int = 1 << 20) -> "RankingSample":
        """Add ``k`` artificial elements ahead of the central by random insertion.

        New local ids are ``m, ..., m+k-1``; the resulting law is Mallows
        over ``(m+k-1, ..., m, central)`` for each component.  In exact
        mode every insertion outcome is enumerated with its probability.
        """
        fresh = np.arange(self.m, self.m + k, dtype=np.int32)
        labels = np.concatenate([self.labels, -np.arange(1, k + 1)])
        if self.exact:
            return self._prepend_exact(fresh, phi, labels)
        cdf = insertion_cdf(phi, self.m + k)
        counts = self.weights.astype(np.int64)
        parts_o, parts_w = [], []
        # walk unique rows in blocks so the expanded block stays near `chunk` draws
        cum = np.cumsum(counts)
        start = 0
        while start < len(counts):
            base = cum[start - 1] if start else 0
            stop = int(np.searchsorted(cum, base + chunk, side="right"))
            stop = max(stop, start + 1)
            rows = np.repeat(self.orders[start:stop], counts[start:stop], axis=0)
            u = rng.random((len(rows), k))
            out = kernels.prepend_insert(rows, fresh, cdf, u)
            o, w = dedupe(out, np.ones(len(out)))
            parts_o.append(o)
            parts_w.append(w)
            start = stop
        rows, w = dedupe(np.concatenate(parts_o), np.concatenate(parts_w))
        return RankingSample(rows, w, labels, exact=False)

    def _prepend_exact(self, fresh, phi, labels) -> "RankingSample":
        rows, w = self.orders, self.weights
        for e in fresh:
            m = rows.shape[1] + 1
            powers = phi ** np.arange(m)
            probs = powers / powers.sum()
            new_rows = []
            new_w = []
            for j in range(m):
                block = np.empty((len(rows), m), dtype=np.int32)
                block[:, :j] = rows[:, :j]
                block[:, j] = e
                block[:, j + 1:] = rows[:, j:]
                new_rows.append(block)
                new_w.append(w * probs[j])
            rows, w = dedupe(np.concatenate(new_rows), np.concatenate(new_w))
        return RankingSample(rows, w, labels, exact=True)

    def split(self, fractions, rng: np.random.Generator) -> list["RankingSample"]:
        """Partition the draws into independent sub-samples.

        Each draw goes to part ``t`` with probability ``fractions[t]``,
        which for i.i.d. draws gives independent parts.  An exact law is
        returned unchanged for every part.
        """
        fractions = np.asarray(fractions, dtype=np.float64)
        if self.exact:
            return [self for _ in fractions]
        counts = self.weights.astype(np.int64)
        alloc = rng.multinomial(counts, fractions / fractions.sum())
        out = []
        for t in range(len(fractions)):
            c = alloc[:, t]
            nz = c > 0
            out.append(RankingSample(self.orders[nz], c[nz].astype(np.float64), self.labels))
        return out
