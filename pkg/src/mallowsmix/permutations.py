"""Permutations, Kendall-Tau distance and inversion-table codecs."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np


class PermutationError(ValueError):
    """Raised for malformed permutations or mismatched element sets."""


@dataclass(frozen=True)
class Permutation:
    """An ordering of distinct integer element ids.

    ``order[p]`` is the element ranked at position ``p + 1``.  Most code
    works with the dense universe ``{0, ..., n-1}``; conditioning and
    prepending produce permutations over other id sets, which is why the
    constructor only demands distinctness.
    """

    order: tuple[int, ...]

    def __post_init__(self):
        order = tuple(int(e) for e in self.order)
        if len(set(order)) != len(order):
            raise PermutationError(f"repeated element in {order}")
        if any(e < 0 for e in order):
            raise PermutationError("element ids must be non-negative")
        object.__setattr__(self, "order", order)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(n)))

    @classmethod
    def from_one_based(cls, seq: Iterable[int]) -> "Permutation":
        return cls(tuple(int(e) - 1 for e in seq))

    def to_one_based(self) -> list[int]:
        return [e + 1 for e in self.order]

    def __len__(self) -> int:
        return len(self.order)

    def __iter__(self):
        return iter(self.order)

    def __getitem__(self, p):
        return self.order[p]

    @cached_property
    def _pos(self) -> dict[int, int]:
        return {e: p for p, e in enumerate(self.order)}

    def pos(self, e: int) -> int:
        """0-based position of element ``e``."""
        try:
            return self._pos[e]
        except KeyError:
            raise PermutationError(f"element {e} not in permutation") from None

    @property
    def elements(self) -> frozenset[int]:
        return frozenset(self.order)

    @property
    def is_dense(self) -> bool:
        return self.elements == frozenset(range(len(self)))

    def inverse_array(self) -> np.ndarray:
        """``inv[e] = pos(e)`` for a dense permutation."""
        if not self.is_dense:
            raise PermutationError("inverse array needs a dense permutation")
        inv = np.empty(len(self), dtype=np.int32)
        inv[list(self.order)] = np.arange(len(self), dtype=np.int32)
        return inv

    def without(self, elements: Iterable[int]) -> "Permutation":
        drop = set(elements)
        return Permutation(tuple(e for e in self.order if e not in drop))

    def reversed(self) -> "Permutation":
        return Permutation(self.order[::-1])

    def as_array(self) -> np.ndarray:
        return np.asarray(self.order, dtype=np.int32)

    def __repr__(self) -> str:
        return f"Permutation({list(self.order)})"


def as_permutation(p) -> Permutation:
    return p if isinstance(p, Permutation) else Permutation(tuple(p))


def kendall_tau(a, b) -> int:
    """Number of element pairs ordered oppositely by ``a`` and ``b``.

    Plain pair count, O(n^2).
    """
    a = as_permutation(a)
    b = as_permutation(b)
    if a.elements != b.elements:
        raise PermutationError("permutations are over different element sets")
    rb = [b.pos(e) for e in a.order]
    n = len(rb)
    return sum(1 for p in range(n) for q in range(p + 1, n) if rb[p] > rb[q])


@dataclass(frozen=True)
class InversionTable:
    """Lehmer-style code: ``code[i]`` counts elements larger than ``i`` placed before it."""

    code: tuple[int, ...]

    def __post_init__(self):
        code = tuple(int(c) for c in self.code)
        n = len(code)
        for i, c in enumerate(code):
            if c < 0 or c > n - 1 - i:
                raise PermutationError(f"code[{i}] = {c} outside [0, {n - 1 - i}]")
        object.__setattr__(self, "code", code)

    @property
    def total(self) -> int:
        return sum(self.code)


def decode_inversion_table(t: InversionTable | Sequence[int]) -> Permutation:
    """Permutation whose inversion table is ``t``.

    Elements are inserted from largest to smallest; element ``i`` goes
    after exactly ``code[i]`` of the larger ones already placed.
    """
    if not isinstance(t, InversionTable):
        t = InversionTable(tuple(t))
    n = len(t.code)
    order: list[int] = []
    for i in range(n - 1, -1, -1):
        order.insert(t.code[i], i)
    return Permutation(tuple(order))


def encode_inversion_table(p) -> InversionTable:
    p = as_permutation(p)
    if not p.is_dense:
        raise PermutationError("inversion tables are defined for dense permutations")
    n = len(p)
    pos = p.inverse_array()
    code = tuple(int(np.sum(pos[i + 1 :] < pos[i])) for i in range(n))
    return InversionTable(code)


def _composition_counts(n: int, d: int) -> list[list[int]]:
    """``ways[i][s]``: tables for ``code[i:]`` summing to ``s`` (exact ints)."""
    ways = [[0] * (d + 1) for _ in range(n + 1)]
    ways[n][0] = 1
    for i in range(n - 1, -1, -1):
        cap = n - 1 - i
        nxt = ways[i + 1]
        row = ways[i]
        running = 0
        # sliding window sum of nxt[s - cap .. s]
        for s in range(d + 1):
            running += nxt[s]
            if s - cap - 1 >= 0:
                running -= nxt[s - cap - 1]
            row[s] = running
    return ways


def _randbelow(rng: np.random.Generator, m: int) -> int:
    """Uniform integer in ``[0, m)`` for arbitrarily large ``m``."""
    if m <= 0:
        raise ValueError("m must be positive")
    if m < 2**62:
        return int(rng.integers(0, m))
    nbits = m.bit_length()
    nbytes = (nbits + 7) // 8
    while True:
        r = int.from_bytes(rng.bytes(nbytes), "little") >> (8 * nbytes - nbits)
        if r < m:
            return r


def count_tables_at_distance(n: int, d: int) -> int:
    """Number of permutations of ``n`` at Kendall distance ``d`` from identity."""
    if d < 0 or d > n * (n - 1) // 2:
        return 0
    return _composition_counts(n, d)[0][d]


def random_permutation_at_distance(n: int, d: int, rng: np.random.Generator) -> Permutation:
    """Uniform draw over inversion tables with entry sum ``d``.

    Bounded compositions are counted exactly, a uniform index is drawn,
    and the table is read off digit by digit.
    """
    dmax = n * (n - 1) // 2
    if not 0 <= d <= dmax:
        raise PermutationError(f"distance {d} outside [0, {dmax}]")
    ways = _composition_counts(n, d)
    r = _randbelow(rng, ways[0][d])
    code = []
    remaining = d
    for i in range(n):
        cap = n - 1 - i
        for c in range(min(cap, remaining) + 1):
            w = ways[i + 1][remaining - c]
            if r < w:
                code.append(c)
                remaining -= c
                break
            r -= w
    return decode_inversion_table(InversionTable(tuple(code)))


def all_permutations(n: int) -> Iterable[Permutation]:
    for order in itertools.permutations(range(n)):
        yield Permutation(order)


def orders_array(perms: Iterable) -> np.ndarray:
    """Stack permutations (or sequences) into an ``(N, n)`` int32 array."""
    rows = [p.order if isinstance(p, Permutation) else tuple(p) for p in perms]
    return np.asarray(rows, dtype=np.int32).reshape(len(rows), -1)


def read_rankings(path) -> np.ndarray:
    """Read a rankings file: one permutation per line, 1-based ids."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            row = [int(tok) - 1 for tok in line.split()]
            if rows and len(row) != len(rows[0]):
                raise PermutationError(f"line {lineno}: expected {len(rows[0])} ids, got {len(row)}")
            if sorted(row) != list(range(len(row))):
                raise PermutationError(f"line {lineno}: not a permutation of 1..{len(row)}")
            rows.append(row)
    if not rows:
        raise PermutationError(f"{path}: no rankings")
    return np.asarray(rows, dtype=np.int32)


def write_rankings(path, orders: np.ndarray, chunk: int = 200_000) -> None:
    orders = np.asarray(orders)
    with open(path, "w", encoding="utf-8") as fh:
        for start in range(0, len(orders), chunk):
            block = orders[start : start + chunk] + 1
            fh.write("\n".join(" ".join(map(str, row)) for row in block.tolist()))
            fh.write("\n")
