"""EM baseline for two-component Mallows mixtures.

Soft responsibilities from the per-component likelihood
``w_r phi_r^d / Z_n(phi_r)``; the M-step moves each central by
adjacent-transposition local search on the responsibility-weighted
Kemeny objective and refits ``phi_r`` by matching the expected distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import kernels
from .mallows import PHI_MAX, PHI_MIN, MallowsModel, expected_kt_distance
from .mixture import MallowsMixture
from .permutations import Permutation
from .rankings import RankingSample
from .spectral.types import LearnedMixture

MAX_ITERS = 200
TOL = 1e-5
BISECT_TOL = 1e-8
DEAD_FRACTION = 1e-6
INIT_WEIGHTS = (0.1, 0.9)


def _inverse(order) -> np.ndarray:
    order = np.asarray(order, dtype=np.int64)
    inv = np.empty(len(order), dtype=np.int32)
    inv[order] = np.arange(len(order), dtype=np.int32)
    return inv


def kemeny_objective(prec: np.ndarray, order) -> float:
    """``sum_s w_s d(order, pi_s)`` from the weighted precedence matrix."""
    order = np.asarray(order)
    # pairs a-before-b in `order` cost the weight that put b before a
    upper = np.triu(prec[np.ix_(order, order)].T, k=1)
    return float(upper.sum())


def local_search(prec: np.ndarray, start) -> list[int]:
    """Adjacent-transposition hill climbing on a precedence matrix ``prec[a, b]``."""
    order = list(start)
    improved = True
    while improved:
        improved = False
        for p in range(len(order) - 1):
            a, b = order[p], order[p + 1]
            if prec[b, a] > prec[a, b]:
                order[p], order[p + 1] = b, a
                improved = True
    return order


def weighted_borda(orders: np.ndarray, weights: np.ndarray, n: int) -> list[int]:
    """Elements by increasing weighted mean position (ties by id)."""
    counts = kernels.position_counts(orders, weights, n)
    score = counts @ np.arange(orders.shape[1])
    return [int(e) for e in np.lexsort((np.arange(n), score))]


def weighted_kemeny_local_search(samples, weights, start) -> Permutation:
    """Local optimum of the weighted Kemeny objective reached from ``start``."""
    orders = _orders(samples)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    if len(weights) != len(orders):
        raise ValueError("one weight per sample required")
    if np.any(weights < 0) or not np.any(weights > 0):
        raise ValueError("weights must be nonnegative and not all zero")
    n = orders.shape[1]
    prec = kernels.precedence(orders, weights, n)
    return Permutation(tuple(local_search(prec, Permutation(tuple(start)).order)))


def _orders(samples) -> np.ndarray:
    if isinstance(samples, RankingSample):
        return samples.orders
    if isinstance(samples, np.ndarray):
        return np.ascontiguousarray(samples, dtype=np.int32)
    return np.ascontiguousarray([Permutation(tuple(s)).order for s in samples], dtype=np.int32)


def log_z(n: int, phi: float) -> float:
    i = np.arange(1, n + 1)
    return float(np.sum(np.log1p(-phi**i) - np.log1p(-phi)))


def fit_phi(n: int, mean_distance: float) -> float:
    """Solve ``expected_kt_distance(n, phi) = mean_distance`` by bisection."""
    lo, hi = PHI_MIN, PHI_MAX
    if mean_distance <= expected_kt_distance(n, lo):
        return lo
    if mean_distance >= expected_kt_distance(n, hi):
        return hi
    while hi - lo > BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if expected_kt_distance(n, mid) < mean_distance:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass
class EMState:
    params: MallowsMixture
    responsibilities: np.ndarray
    iteration: int = 0
    loglik: float = -math.inf
    history: list = field(default_factory=list)
    reseeds: int = 0


def _component_logpdf(orders: np.ndarray, model: MallowsModel) -> np.ndarray:
    d = kernels.distances_to(orders, _inverse(model.central.order))
    return d * math.log(model.phi) - log_z(len(model.central), model.phi)


def e_step(orders, counts, mix: MallowsMixture):
    """Responsibilities ``(U, 2)`` and the sample log-likelihood."""
    lp = np.column_stack([
        math.log(mix.w1) + _component_logpdf(orders, mix.m1) if mix.w1 > 0 else np.full(len(orders), -np.inf),
        math.log(mix.w2) + _component_logpdf(orders, mix.m2) if mix.w2 > 0 else np.full(len(orders), -np.inf),
    ])
    norm = logsumexp(lp, axis=1)
    resp = np.exp(lp - norm[:, None])
    return resp, float(counts @ norm)


def _m_component(orders, weights, model: MallowsModel) -> MallowsModel:
    n = orders.shape[1]
    prec = kernels.precedence(orders, weights, n)
    # the Borda start is the baseline's choice; the current central is kept
    # as a second start so the objective can never get worse
    cands = [local_search(prec, weighted_borda(orders, weights, n)),
             local_search(prec, model.central.order)]
    best = min(cands, key=lambda o: kemeny_objective(prec, o))
    d = kernels.distances_to(orders, _inverse(best))
    mean_d = float(weights @ d) / float(weights.sum())
    return MallowsModel(fit_phi(n, mean_d), Permutation(tuple(best)))


def refine_parameters(sample: RankingSample, order1, order2, w1: float, phi1: float, phi2: float,
                      max_iters: int = MAX_ITERS, tol: float = 1e-8) -> tuple[float, float, float, float]:
    """Maximum-likelihood ``(w1, phi1, phi2, loglik)`` by EM with both centrals held fixed."""
    n = sample.m
    top = n * (n - 1) // 2 + 1
    d1, d2 = (kernels.distances_to(sample.orders, _inverse(o)).astype(np.int64) for o in (order1, order2))
    # the likelihood sees a ranking only through its two distances
    binned = np.bincount(d1 * top + d2, weights=sample.weights, minlength=top * top)
    keep = np.flatnonzero(binned)
    counts = binned[keep]
    d = [(keep // top).astype(np.float64), (keep % top).astype(np.float64)]
    w1 = min(max(w1, 1e-6), 1 - 1e-6)
    loglik = -math.inf
    for _ in range(max_iters):
        lp = np.column_stack([math.log(w) + dr * math.log(phi) - log_z(n, phi)
                              for w, dr, phi in ((w1, d[0], phi1), (1 - w1, d[1], phi2))])
        norm = logsumexp(lp, axis=1)
        loglik = float(counts @ norm)
        resp = np.exp(lp - norm[:, None]) * counts[:, None]
        mass = resp.sum(axis=0)
        if np.any(mass <= 0):
            break
        new = (min(max(float(mass[0] / mass.sum()), 1e-6), 1 - 1e-6),
               fit_phi(n, float(resp[:, 0] @ d[0]) / mass[0]),
               fit_phi(n, float(resp[:, 1] @ d[1]) / mass[1]))
        step = max(abs(new[0] - w1), abs(new[1] - phi1), abs(new[2] - phi2))
        w1, phi1, phi2 = new
        if step < tol:
            break
    return w1, phi1, phi2, loglik


def random_init(n: int, rng: np.random.Generator) -> MallowsMixture:
    w1 = rng.uniform(*INIT_WEIGHTS)
    phis = rng.uniform(0.2, 0.8, size=2)
    return MallowsMixture(w1,
                          MallowsModel(float(phis[0]), Permutation(tuple(int(x) for x in rng.permutation(n)))),
                          MallowsModel(float(phis[1]), Permutation(tuple(int(x) for x in rng.permutation(n)))))


def _change(a: MallowsMixture, b: MallowsMixture) -> float:
    if a.m1.central != b.m1.central or a.m2.central != b.m2.central:
        return math.inf
    return max(abs(a.w1 - b.w1), abs(a.m1.phi - b.m1.phi), abs(a.m2.phi - b.m2.phi))


def em_learn(samples, init: MallowsMixture | None = None, max_iters: int = MAX_ITERS,
             tol: float = TOL, rng: np.random.Generator | None = None) -> LearnedMixture:
    """Fit a two-component mixture by EM from ``init`` or a random start."""
    rng = rng if rng is not None else np.random.default_rng()
    sample = samples if isinstance(samples, RankingSample) else RankingSample.from_orders(_orders(samples))
    if sample.total < 2 and not sample.exact:
        raise ValueError("EM needs at least 2 samples")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    orders, counts = sample.orders, sample.weights
    n = sample.m
    total = counts.sum()
    mix = init if init is not None else random_init(n, rng)
    resp, ll = e_step(orders, counts, mix)
    state = EMState(mix, resp, 0, ll, [ll])
    converged = False
    for it in range(1, max_iters + 1):
        wr = resp * counts[:, None]
        mass = wr.sum(axis=0)
        models = []
        reseeded = False
        for r, model in enumerate((mix.m1, mix.m2)):
            if mass[r] < DEAD_FRACTION * total:
                models.append(MallowsModel(model.phi, Permutation(tuple(int(x) for x in rng.permutation(n)))))
                reseeded = True
            else:
                models.append(_m_component(orders, np.ascontiguousarray(wr[:, r]), model))
        w1 = float(mass[0] / total)
        if reseeded:
            state.reseeds += 1
            w1 = rng.uniform(*INIT_WEIGHTS)
        new = MallowsMixture(w1, models[0], models[1])
        resp, ll = e_step(orders, counts, new)
        change = _change(mix, new)
        mix = new
        state = EMState(mix, resp, it, ll, state.history + [ll], state.reseeds)
        if not reseeded and change < tol:
            converged = True
            break
    diag = {"iterations": state.iteration, "loglik": state.loglik, "loglik_history": state.history,
            "converged": converged, "reseeds": state.reseeds}
    return LearnedMixture(mix.w1, mix.w2, mix.m1.phi, mix.m2.phi, mix.m1.central, mix.m2.central, "em", diag)
