"""Completing recovered prefixes into full central rankings.

Every element's position law is a two-term mixture of rows of the
position tables, ``F[e] = w1 f1[pos1(e)] + w2 f2[pos2(e)]``, and
conditioning on an element placed first yields a second mixture with
different weights.  The routines here turn those relations into
placements.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..mallows import position_prob_table, z_single
from ..rankings import RankingSample
from .types import LearnerConfig, PrefixHypothesis, SplitSample, StageFailure

DET_MIN = 1e-6
W_MIN_FIND = 1e-3


def greedy_place(scores: np.ndarray, fixed: dict[int, int] | None = None) -> list[int]:
    """Assign elements to positions by descending score.

    ``scores[e, p]`` rates element ``e`` at position ``p``.  Pairs are
    taken best-first; an element whose favourite position is already
    taken falls back to its next-best free one.  Equal scores prefer the
    position whose neighbours carry more of that element's mass.
    """
    m = scores.shape[0]
    fixed = dict(fixed or {})
    order = [-1] * m
    used_e = set(fixed)
    used_p = set()
    for e, p in fixed.items():
        if order[p] != -1:
            raise ValueError(f"position {p} fixed twice")
        order[p] = e
        used_p.add(p)
    padded = np.pad(scores, ((0, 0), (1, 1)))
    adjacent = padded[:, :-2] + padded[:, 2:]
    pairs = [(-scores[e, p], -adjacent[e, p], e, p) for e in range(m) if e not in used_e
             for p in range(m) if p not in used_p]
    pairs.sort()
    for _, _, e, p in pairs:
        if e in used_e or p in used_p:
            continue
        order[p] = e
        used_e.add(e)
        used_p.add(p)
    return order


def learn_single_mallows(sample: RankingSample) -> list[int]:
    """Central ranking of a (nearly) single Mallows sample by per-element position mode."""
    return greedy_place(sample.position_freq())


def model_rows(order: list[int], phi: float) -> np.ndarray:
    """``f[e, p]`` for a known central ``order``."""
    m = len(order)
    table = position_prob_table(m, phi).f
    out = np.empty((m, m))
    out[np.asarray(order)] = table
    return out


def solve_f2(F_hat: np.ndarray, order1: list[int], w1: float, w2: float, phi1: float) -> np.ndarray:
    """Second-component rows from ``F = w1 f1 + w2 f2`` with ``f1`` known."""
    if w2 < W_MIN_FIND:
        raise StageFailure("second weight too small to isolate its position law")
    return (F_hat - w1 * model_rows(order1, phi1)) / w2


def _assign(cost: np.ndarray, elems: list[int], positions: list[int], base: list[int]) -> list[int]:
    order = list(base)
    if elems:
        rows, cols = linear_sum_assignment(cost[np.ix_(elems, positions)])
        for r, c in zip(rows, cols):
            order[positions[c]] = elems[r]
    return order


def _free(prefix: list[int], m: int):
    placed = set(prefix)
    base = list(prefix) + [-1] * (m - len(prefix))
    return [e for e in range(m) if e not in placed], list(range(len(prefix), m)), base


def _loglik(data: np.ndarray, model: np.ndarray) -> np.ndarray:
    return np.tensordot(np.log(np.maximum(model, 1e-300)), data, axes=([-1], [-1]))


def find_pi(sample: RankingSample, order1: list[int], w1: float, w2: float, phi1: float, phi2: float,
            prefix2: list[int] | None = None, method: str = "argmax") -> list[int]:
    """Second central ranking given the first.

    ``argmax`` solves ``F = w1 f1 + w2 f2`` for ``f2`` and places each
    element at its mode; ``fit`` instead picks the assignment whose
    model rows best explain each element's observed position law.
    """
    m = len(order1)
    prefix2 = list(prefix2 or [])
    F_hat = sample.position_freq()
    if method == "argmax":
        f2 = solve_f2(F_hat, order1, w1, w2, phi1)
        return greedy_place(f2, {e: p for p, e in enumerate(prefix2)})
    if w2 < W_MIN_FIND:
        raise StageFailure("second weight too small to isolate its position law")
    f1 = model_rows(order1, phi1)
    t2 = position_prob_table(m, phi2).f
    pred = w1 * f1[:, None, :] + w2 * t2[None, :, :]  # (e, p2, j)
    ll = np.einsum("epj,ej->ep", np.log(np.maximum(pred, 1e-300)), F_hat)
    elems, positions, base = _free(prefix2, m)
    return _assign(-ll, elems, positions, base)


def _pivot_threshold(w_min: float, f1: float, m: int, phi: float, c_const: float) -> float:
    g = c_const * m * m * phi * phi / (1.0 - phi) ** 2 * math.log(m)
    return w_min / 16.0 * f1 / (m * m * g)


def _level(order: list[int], e: int, phi: float, m: int) -> float:
    if e not in order:
        return 0.0
    return phi ** order.index(e) / z_single(m, phi)


def recover_rest(splits: SplitSample, params, prefixes: PrefixHypothesis, config: LearnerConfig,
                 eps: float = 1e-4, diag: dict | None = None):
    """Extend both prefixes to complete rankings.

    Returns ``(order1, order2, path)`` in the samples' local ids where
    ``path`` is ``"pivot"`` if an element near the top of one ranking and
    negligible in the other isolated a single component, else
    ``"tensor"``.
    """
    w1, w2, phi1, phi2 = params
    m = splits.m
    diag = diag if diag is not None else {}
    pre1, pre2 = list(prefixes.elems1), list(prefixes.elems2)
    if not pre1 and not pre2:
        raise StageFailure("empty prefixes")

    # (a) pivot: conditioning on it leaves (almost) one component
    for flip in (False, True):
        pa, pb = (pre2, pre1) if flip else (pre1, pre2)
        wa, wb = (w2, w1) if flip else (w1, w2)
        fa, fb = (phi2, phi1) if flip else (phi1, phi2)
        for e in pa[: max(1, len(pa) // 2)]:
            ha = _level(pa, e, fa, m)
            # outside the other prefix an element can still sit just below it
            hb = _level(pb, e, fb, m) if e in pb else fb ** len(pb) / z_single(m, fb)
            if hb < _pivot_threshold(min(wa, wb), ha, m, fa, config.c_const):
                cond = splits.conditioning.condition_first(e)
                if cond.size < config.min_conditioned:
                    diag.setdefault("pivot_rejected", []).append(int(e))
                    continue
                # with e first the rest follows the centre minus e
                rest = [x for x in learn_single_mallows(cond) if x != e]
                order_a = rest[: pa.index(e)] + [e] + rest[pa.index(e):]
                method = "fit" if config.placement == "fit" else "argmax"
                order_b = find_pi(splits.completion, order_a, wa, wb, fa, fb, prefix2=pb, method=method)
                diag["pivot"] = int(e)
                if flip:
                    return order_b, order_a, "pivot"
                return order_a, order_b, "pivot"

    # (b) condition on an element whose two first-place chances differ
    if len(pre2) > len(pre1):
        o2, o1, _ = recover_rest(splits, (w2, w1, phi2, phi1),
                                 PrefixHypothesis(pre2, pre1, prefixes.y_hat, prefixes.x_hat),
                                 config, eps, diag)
        return o1, o2, "tensor"
    star = None
    for e in pre1:
        if abs(_level(pre1, e, phi1, m) - _level(pre2, e, phi2, m)) > eps:
            star = e
            break
    if star is None:
        raise StageFailure("no element separates the two components")
    x_star = _level(pre1, star, phi1, m)
    y_star = _level(pre2, star, phi2, m)
    wc1 = 1.0 / (1.0 + (w2 / w1) * (y_star / x_star))
    wc2 = 1.0 - wc1
    det = w1 * wc2 - w2 * wc1
    diag["conditioned_on"] = int(star)
    diag["conditional_weight"] = wc1
    if abs(det) < DET_MIN:
        raise StageFailure("conditioned system is singular")
    cond = splits.conditioning.condition_first(star)
    if cond.size < config.min_conditioned:
        raise StageFailure("too few samples with the conditioning element first")
    F_u = splits.completion.position_freq()
    F_c = cond.position_freq()
    if config.placement == "linear":
        return _linear_completion(F_u, F_c, (w1, w2, wc1, wc2, phi1, phi2), pre1, pre2, splits.completion)
    n_u = 1.0 if splits.completion.exact else splits.completion.total
    n_c = 1.0 if cond.exact else cond.total
    q1 = pre1.index(star)
    q2 = pre2.index(star) if star in pre2 else None
    return _fit_completion(F_u, n_u, F_c, n_c, star, q1, q2, (w1, w2, wc1, wc2, phi1, phi2), pre1, pre2)


def _linear_completion(F_u, F_c, coeffs, pre1, pre2, completion):
    w1, w2, wc1, wc2, phi1, phi2 = coeffs
    m = F_u.shape[0]
    a = np.array([[w1, w2], [wc1, wc2]])
    sol = np.linalg.solve(a, np.stack([F_u, F_c]).reshape(2, -1))
    f1 = sol[0].reshape(m, m)
    order1 = greedy_place(f1, {e: p for p, e in enumerate(pre1)})
    order2 = find_pi(completion, order1, w1, w2, phi1, phi2, prefix2=pre2, method="argmax")
    return order1, order2, "tensor"


def _fit_completion(F_u, n_u, F_c, n_c, star, q1, q2, coeffs, pre1, pre2):
    """Choose both positions of every element by likelihood of its position laws.

    Candidate pairs ``(p1, p2)`` predict the unconditioned row
    ``w1 f1[p1] + w2 f2[p2]`` and, with ``star`` first, the conditioned
    row built from the ``m - 1`` element tables at the reduced positions.
    """
    w1, w2, wc1, wc2, phi1, phi2 = coeffs
    m = F_u.shape[0]
    t1 = position_prob_table(m, phi1).f
    t2 = position_prob_table(m, phi2).f
    g1 = position_prob_table(m - 1, phi1).f
    g2 = position_prob_table(m - 1, phi2).f
    pos = np.arange(m)
    uncond = w1 * t1[:, None, :] + w2 * t2[None, :, :]  # (p1, p2, j)
    ll_u = n_u * np.einsum("abj,ej->eab", np.log(np.maximum(uncond, 1e-300)), F_u)

    def reduced(q):
        if q is None:
            return np.zeros(m, dtype=int)
        # the slot of the conditioning element itself is masked out below
        return np.minimum(np.where(pos > q, pos - 1, pos), m - 2)

    r1, r2 = reduced(q1), reduced(q2)
    cond = np.zeros((m, m, m))
    c2w = wc2 if q2 is not None else 0.0
    c1w = wc1 / (wc1 + c2w)
    cond[:, :, 1:] = c1w * g1[r1][:, None, :] + c2w * g2[r2][None, :, :]
    ll_c = n_c * np.einsum("abj,ej->eab", np.log(np.maximum(cond, 1e-300)), F_c)
    ll = ll_u + ll_c
    ll[star] = ll_u[star]
    # a position held by the conditioning element is unavailable to others
    invalid = np.zeros((m, m), dtype=bool)
    invalid[q1, :] = True
    if q2 is not None:
        invalid[:, q2] = True
    others = np.arange(m) != star
    ll[others] = np.where(invalid[None], -np.inf, ll[others])
    # fix prefix positions
    for p, e in enumerate(pre1):
        keep = np.full(m, -np.inf)
        keep[p] = 0.0
        ll[e] = ll[e] + keep[:, None]
    for p, e in enumerate(pre2):
        keep = np.full(m, -np.inf)
        keep[p] = 0.0
        ll[e] = ll[e] + keep[None, :]
    cost1 = -np.max(ll, axis=2)
    elems, positions, base = _free(pre1, m)
    order1 = _assign(_finite(cost1), elems, positions, base)
    p1 = np.empty(m, dtype=int)
    p1[np.asarray(order1)] = np.arange(m)
    cost2 = -ll[np.arange(m), p1, :]
    elems, positions, base = _free(pre2, m)
    order2 = _assign(_finite(cost2), elems, positions, base)
    return order1, order2, "tensor"


def _finite(cost: np.ndarray) -> np.ndarray:
    finite = np.isfinite(cost)
    if not finite.any():
        return np.zeros_like(cost)
    big = np.max(np.abs(cost[finite])) * 10 + 1e6
    return np.where(finite, cost, big)
