"""Mixtures the tensor stage cannot separate.

When every partition leaves some part with parallel factors, the two
components share their dispersion and their large elements sit at a
common shift.  Three situations remain: identical models, models that
become separable once artificial elements are put in front, and models
that agree except for one swapped pair.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from ..mallows import gain, z_single
from ..rankings import RankingSample
from .completion import recover_rest
from .learner import EXACT_FLOOR, Answer, tensor_stage, thresholds
from .types import BucketStructure, LearnerConfig, PrefixHypothesis, SplitSample, StageFailure

ARTIFICIAL = 3


def _first_among(sample: RankingSample, removed: set[int]) -> np.ndarray:
    """Frequency of each element being the first one not in ``removed``."""
    orders = sample.orders
    if removed:
        mask = ~np.isin(orders, list(removed))
        first = orders[np.arange(len(orders)), np.argmax(mask, axis=1)]
    else:
        first = orders[:, 0]
    return np.bincount(first, weights=sample.weights, minlength=sample.m) / sample.total


def _inv_z_slope(m: int, phi: float) -> float:
    # derivative of 1 / Z_m at phi
    dz = sum(k * phi ** (k - 1) for k in range(1, m))
    return dz / z_single(m, phi) ** 2


def prefix_tolerance(m: int, phi: float, p: float, count: float) -> float:
    """Allowed gap between an observed top frequency and ``1 / Z_m``."""
    floor = 0.1 * gain(m, phi) / z_single(m, phi)
    if math.isinf(count):
        return min(floor, 1e-6)
    sd = math.sqrt(max(p * (1.0 - p), 1e-12) / count)
    dphi = 3.0 * math.sqrt(2.0 / (count * max(p, 1e-12)))
    return max(floor, 5.0 * sd + _inv_z_slope(m, phi) * dphi)


def remove_common_prefix(sample: RankingSample, phi_hat: float) -> list[int]:
    """Leading elements on which both components agree, in order."""
    m = sample.m
    removed: list[int] = []
    count = sample.size
    for t in range(m):
        left = m - t
        if left == 1:
            rest = [e for e in range(m) if e not in set(removed)]
            removed.extend(rest)
            break
        p = _first_among(sample, set(removed))
        p[removed] = -1.0
        x = int(np.argmax(p))
        target = 1.0 / z_single(left, phi_hat)
        if abs(p[x] - target) > prefix_tolerance(left, phi_hat, p[x], count):
            break
        removed.append(x)
    return removed


def refine_phi(p: np.ndarray, phi_hat: float, floor: float) -> float:
    """Median consecutive ratio of the sorted first-place profile above ``floor``."""
    srt = np.sort(p)[::-1]
    srt = srt[srt > floor]
    if len(srt) < 3:
        return phi_hat
    return float(np.median(srt[1:] / srt[:-1]))


def group_levels(p: np.ndarray, phi: float, L: list[int], count: float, eps: float) -> BucketStructure:
    """Group large elements by the level ``phi^r / Z`` their first-place chance matches."""
    m = len(p)
    z = z_single(m, phi)
    levels = phi ** np.arange(m) / z
    groups: dict[int, list[int]] = {}
    unmatched = []
    for e in L:
        sd = 0.0 if math.isinf(count) else math.sqrt(max(p[e] * (1 - p[e]), 1e-12) / count)
        tol = max(eps, 5.0 * sd)
        r = int(np.argmin(np.abs(levels - p[e])))
        if abs(levels[r] - p[e]) <= tol:
            groups.setdefault(r, []).append(e)
        else:
            unmatched.append(e)
    bad = sorted([e for g in groups.values() if len(g) > 1 for e in g] + unmatched)
    return BucketStructure(L=list(L), groups=groups, bad=bad)


def fit_level_phi(p: np.ndarray, L: list[int], phi0: float, count: float, eps: float,
                  span: float = 0.15, steps: int = 3001) -> float:
    """Dispersion that puts the most of ``p[L]`` on some level ``phi^r / Z``.

    All but a swapped pair sit exactly on a level, so counting matches is
    robust where a ratio estimate is pulled by the two mixed elements.
    Ties go to the smallest standardised residual.
    """
    m = len(p)
    grid = np.linspace(max(phi0 - span, 1e-3), min(phi0 + span, 0.99), steps)
    levels = grid[:, None] ** np.arange(m)[None, :]
    levels /= levels.sum(axis=1, keepdims=True)
    q = p[L]
    sd = np.zeros_like(q) if math.isinf(count) else np.sqrt(np.maximum(q * (1 - q), 1e-12) / count)
    tol = np.maximum(eps, 5.0 * sd)
    resid = np.min(np.abs(levels[:, None, :] - q[None, :, None]), axis=2)
    hit = resid <= tol
    spread = np.where(hit, (resid / tol) ** 2, 0.0).sum(axis=1)
    best = np.lexsort((spread, -hit.sum(axis=1)))[0]
    return float(grid[best])


def aligned_prefixes(splits: SplitSample, phi: float, config: LearnerConfig, diag: dict):
    """Weight, dispersion and both prefixes when the models differ by one swapped pair."""
    sample = splits.moments
    m = sample.m
    p = sample.first_freq()
    root_eps = math.sqrt(config.eps)
    L = [e for e in range(m) if p[e] >= root_eps]
    phi = fit_level_phi(p, L, phi, sample.size, config.eps)
    diag["phi_levels"] = phi
    b = group_levels(p, phi, L, sample.size, config.eps)
    diag["groups"] = {int(r): g for r, g in b.groups.items()}
    diag["bad"] = b.bad
    if not 2 <= len(b.bad) <= 4:
        raise StageFailure(f"{len(b.bad)} ambiguous elements")
    placed = {r: g[0] for r, g in b.groups.items() if len(g) == 1}
    if 0 in placed:
        raise StageFailure("first position is shared, yet the common prefix stopped")
    single = [placed[r] for r in sorted(placed)]
    sa, sb = single[0::2], single[1::2]
    p2 = sample.moments().p2
    best = None
    for i1, j1 in itertools.permutations(b.bad, 2):
        M = p2[np.ix_(sa + [i1], sb + [j1])]
        s = float(np.linalg.svd(M, compute_uv=False)[1]) if min(M.shape) >= 2 else 0.0
        if best is None or s > best[0]:
            best = (s, i1, j1)
    if best is None:
        raise StageFailure("no candidate pair")
    _, i1, j1 = best
    diag["swapped"] = [int(i1), int(j1)]
    order1 = dict(placed)
    for r, g in b.groups.items():
        for e in g:
            if e not in (i1, j1) and r not in order1:
                order1[r] = e
    order1[0] = i1
    order2 = dict(order1)
    order2[0] = j1
    R = max(len(L), max(order1) + 1)
    gaps = [k for k in range(1, R) if k not in order1]
    level_sum = (p[i1] + p[j1]) * z_single(m, phi) - 1.0
    k_sum = None
    if 0 < level_sum < 1:
        k_sum = int(round(math.log(level_sum) / math.log(phi)))
    if len(gaps) == 1:
        k = gaps[0]
    elif k_sum is not None and k_sum in gaps:
        k = k_sum
    elif not gaps and k_sum is not None and k_sum >= R and k_sum < m:
        k = k_sum
    else:
        raise StageFailure(f"cannot locate the partner position (gaps {gaps})")
    order1[k] = j1
    order2[k] = i1

    def contiguous(d):
        out = []
        while len(out) in d:
            out.append(d[len(out)])
        return out

    pre1, pre2 = contiguous(order1), contiguous(order2)
    x = np.zeros(m)
    y = np.zeros(m)
    z = z_single(m, phi)
    for r, e in order1.items():
        x[e] = phi**r / z
    for r, e in order2.items():
        y[e] = phi**r / z
    dif = (x - y)[L]
    if not np.any(dif):
        raise StageFailure("swapped pair carries no weight information")
    w1 = float(np.dot(p[L] - y[L], dif) / np.dot(dif, dif))
    w1 = min(max(w1, 1e-3), 1.0 - 1e-3)
    return w1, phi, PrefixHypothesis(pre1, pre2, x, y)


def handle_degenerate(splits: SplitSample, phi_hat: float, config: LearnerConfig,
                      rng: np.random.Generator | None = None, diag: dict | None = None) -> Answer:
    """Resolve a mixture on which no partition gave separable factors."""
    rng = rng or np.random.default_rng(config.seed)
    diag = diag if diag is not None else {}
    m = splits.m
    th = thresholds(config, m, splits.moments)
    floor = max(th.noise_floor, EXACT_FLOOR)
    phi = refine_phi(splits.moments.first_freq(), phi_hat, floor)
    diag["phi_hat"] = phi_hat
    diag["phi_refined"] = phi

    common = remove_common_prefix(splits.moments, phi)
    diag["common_prefix"] = common
    if len(common) >= m:
        return Answer(0.5, phi, phi, list(common), list(common), "degenerate-identical", diag)

    rem = splits.map(lambda s: s.project_out(common))
    rem_ids = _kept_ids(m, common)  # rem local id -> id in `splits`
    k = rem.m

    def lift(order):
        return list(common) + [int(rem_ids[e]) for e in order]

    # the ratio refinement assumes one geometric profile, which a shifted pair is not
    aug = rem.map(lambda s: s.prepend(ARTIFICIAL, phi_hat, rng))
    sub_diag: dict = {}
    ans, _ = tensor_stage(aug, config, rng, sub_diag)
    diag["staggered"] = sub_diag
    if ans is not None:
        o1 = [e for e in ans.order1 if e < k]
        o2 = [e for e in ans.order2 if e < k]
        return Answer(ans.w1, ans.phi1, ans.phi2, lift(o1), lift(o2), "degenerate-staggered", diag)

    try:
        w1, phi, pre = aligned_prefixes(rem, phi, config, diag)
        o1, o2, _ = recover_rest(rem, (w1, 1.0 - w1, phi, phi), pre, config, eps=config.eps, diag=diag)
    except StageFailure as exc:
        diag["failure"] = str(exc)
        order = list(np.argsort(-rem.moments.first_freq(), kind="stable"))
        return Answer(0.5, phi, phi, lift(order), lift(order), "fail", diag)
    return Answer(w1, phi, phi, lift(o1), lift(o2), "degenerate-aligned", diag)


def _kept_ids(m: int, removed) -> np.ndarray:
    drop = set(removed)
    return np.array([e for e in range(m) if e not in drop], dtype=np.int64)
