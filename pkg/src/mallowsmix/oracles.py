"""Brute-force references computed by enumerating every permutation.

Nothing here reuses the closed forms it is meant to check: distances are
counted pair by pair and probabilities are normalised by their own sums.
Only small ``n`` is practical.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .mixture import MallowsMixture


def pair_distance(a, b) -> int:
    pos = {e: i for i, e in enumerate(b)}
    r = [pos[e] for e in a]
    return sum(1 for i in range(len(r)) for j in range(i + 1, len(r)) if r[i] > r[j])


def partition_function(n: int, phi: float) -> float:
    ident = tuple(range(n))
    return math.fsum(phi ** pair_distance(p, ident) for p in itertools.permutations(ident))


def mallows_law(phi: float, central) -> dict[tuple, float]:
    central = tuple(central)
    w = {p: phi ** pair_distance(p, central) for p in itertools.permutations(central)}
    total = math.fsum(w.values())
    return {p: v / total for p, v in w.items()}


def mixture_law(mix: MallowsMixture) -> dict[tuple, float]:
    a = mallows_law(mix.m1.phi, mix.m1.central.order)
    b = mallows_law(mix.m2.phi, mix.m2.central.order)
    return {p: mix.w1 * a[p] + mix.w2 * b[p] for p in a}


def position_marginals(law: dict[tuple, float], n: int) -> np.ndarray:
    """``F[e, p]`` of a law over permutations."""
    out = np.zeros((n, n))
    for perm, pr in law.items():
        for p, e in enumerate(perm):
            out[e, p] += pr
    return out


def top_sets(law: dict[tuple, float], n: int):
    """``(P1, P2, P3)``: chances that a set fills the top one, two or three slots."""
    p1 = np.zeros(n)
    p2 = np.zeros((n, n))
    p3 = np.zeros((n, n, n))
    for perm, pr in law.items():
        a, b = perm[0], perm[1]
        p1[a] += pr
        for i, j in itertools.permutations((a, b)):
            p2[i, j] += pr
        if n >= 3:
            for i, j, k in itertools.permutations(perm[:3]):
                p3[i, j, k] += pr
    return p1, p2, p3


def mean_distance(phi: float, n: int) -> float:
    law = mallows_law(phi, range(n))
    ident = tuple(range(n))
    return math.fsum(pr * pair_distance(p, ident) for p, pr in law.items())


def conditional_law(law: dict[tuple, float], first) -> dict[tuple, float]:
    """Law of the remaining order given that ``first`` is ranked first."""
    sub = {p[1:]: pr for p, pr in law.items() if p[0] == first}
    total = math.fsum(sub.values())
    return {p: v / total for p, v in sub.items()}


def kemeny_brute_force(orders: np.ndarray, weights: np.ndarray) -> tuple[tuple, float]:
    """Exhaustive weighted Kemeny optimum (first in lexicographic order on ties)."""
    n = orders.shape[1]
    best = None
    for cand in itertools.permutations(range(n)):
        cost = math.fsum(w * pair_distance(cand, row) for row, w in zip(orders.tolist(), weights))
        if best is None or cost < best[1] - 1e-12:
            best = (cand, cost)
    return best
