"""Recovery by conditioning on frequent leading elements.

When a component is sharp its top one or two elements lead most of its
draws, so the rows starting with them are (nearly) a pure sample of that
component.  Candidate centrals read off those strata are paired, their
weights and dispersions fitted to the observed position law, and
hypotheses are ranked by how well they reproduce the observed position
and top-pair frequencies.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logit

from .. import kernels
from ..mallows import PHI_MAX, PHI_MIN, position_prob_table
from ..rankings import RankingSample
from .completion import greedy_place
from .types import LearnerConfig, SplitSample

MAX_LEADS = 4
MAX_PREFIXES = 6


def _complete(stratum: RankingSample, prefix: list[int]) -> list[int]:
    """The stratum's position modes with ``prefix`` pinned in front."""
    return greedy_place(stratum.position_freq(), {e: p for p, e in enumerate(prefix)})


def _stratum_phi(stratum: RankingSample, central: tuple[int, ...], skip: int) -> float:
    """Dispersion matching the stratum's mean distance to ``central`` past the prefix."""
    from ..em import fit_phi

    rest = stratum.orders[:, skip:]
    keep = [e for e in central[skip:]]
    pos = np.full(stratum.m, 0, dtype=np.int32)
    pos[np.asarray(keep)] = np.arange(len(keep), dtype=np.int32)
    d = kernels.distances_to(np.ascontiguousarray(rest), pos)
    return fit_phi(len(keep), float(stratum.weights @ d) / stratum.total)


def candidate_centrals(sample: RankingSample, config: LearnerConfig, floor: float):
    """``[(central, phi)]`` read from strata led by a frequent element or ordered pair."""
    m = sample.m
    first = sample.first_freq()
    leads = [int(e) for e in np.argsort(-first, kind="stable")[:MAX_LEADS] if first[e] > floor]
    prefixes = [[e] for e in leads]
    keys = sample.orders[:, 0].astype(np.int64) * m + sample.orders[:, 1]
    pair_mass = np.bincount(keys, weights=sample.weights, minlength=m * m) / sample.total
    top_pairs = np.argsort(-pair_mass, kind="stable")[:MAX_PREFIXES]
    prefixes += [[int(k // m), int(k % m)] for k in top_pairs if pair_mass[k] > floor]
    out: list[tuple[tuple[int, ...], float]] = []
    for prefix in prefixes:
        stratum = sample.condition_prefix(prefix)
        if stratum.size < config.min_conditioned:
            continue
        cand = tuple(_complete(stratum, prefix))
        if len(set(cand)) == m and cand not in [c for c, _ in out]:
            out.append((cand, _stratum_phi(stratum, cand, len(prefix))))
    return out


def _model_f(order, phi: float) -> np.ndarray:
    m = len(order)
    out = np.empty((m, m))
    out[np.asarray(order)] = position_prob_table(m, phi).f
    return out


def _model_p2(order, phi: float) -> np.ndarray:
    """Chance each unordered pair fills the top two slots of one component."""
    m = len(order)
    powers = phi ** np.arange(m)
    z_m, z_rest = powers.sum(), powers[: m - 1].sum()
    out = np.zeros((m, m))
    for i, a in enumerate(order):
        # given a first, the rest is Mallows on the central without a
        rest = [e for e in order if e != a]
        out[a, rest] = powers[i] / z_m * powers[: m - 1] / z_rest
    return out + out.T


def _first_weight(p1: np.ndarray, o1, phi1: float, o2, phi2: float) -> float:
    x = _model_f(o1, phi1)[:, 0]
    y = _model_f(o2, phi2)[:, 0]
    dif = x - y
    den = float(dif @ dif)
    return 0.5 if den == 0.0 else float(np.clip((p1 - y) @ dif / den, 0.01, 0.99))


def fit_params(F: np.ndarray, o1, o2, phi1: float, phi2: float) -> tuple[float, float, float, float]:
    """``(w1, phi1, phi2, loss)`` minimising the squared position-law mismatch from a start."""
    lo, hi = PHI_MIN, PHI_MAX

    def unpack(v):
        return float(expit(v[0])), float(np.clip(expit(v[1]), lo, hi)), float(np.clip(expit(v[2]), lo, hi))

    def loss(v):
        w, p1, p2 = unpack(v)
        return float(np.sum((w * _model_f(o1, p1) + (1 - w) * _model_f(o2, p2) - F) ** 2))

    w0 = _first_weight(F[:, 0], o1, phi1, o2, phi2)
    start = logit(np.clip([w0, phi1, phi2], 1e-4, 1 - 1e-4))
    res = minimize(loss, start, method="Nelder-Mead", options={"xatol": 1e-5, "fatol": 1e-13, "maxiter": 600})
    w, p1, p2 = unpack(res.x)
    return w, p1, p2, float(res.fun)


def misfit_noise(sample: RankingSample) -> float:
    """Expected misfit of the true model: the sampling variance of the matched statistics."""
    if sample.exact:
        return 0.0
    F = sample.position_freq()
    p2 = sample.moments().p2
    return float((np.sum(F * (1 - F)) + np.sum(p2 * (1 - p2))) / sample.total)


def moment_misfit(sample: RankingSample, w1: float, phi1: float, phi2: float, o1, o2) -> float:
    """Squared mismatch of the implied position law and top-pair frequencies."""
    F = sample.position_freq()
    stats = sample.moments()
    F_model = w1 * _model_f(o1, phi1) + (1 - w1) * _model_f(o2, phi2)
    p2_model = w1 * _model_p2(o1, phi1) + (1 - w1) * _model_p2(o2, phi2)
    return float(np.sum((F_model - F) ** 2) + np.sum((p2_model - stats.p2) ** 2))


def conditioned_hypotheses(splits: SplitSample, config: LearnerConfig, floor: float, diag: dict):
    """``[(misfit, w1, phi1, phi2, order1, order2)]`` sorted best first."""
    cands = candidate_centrals(splits.conditioning, config, floor)
    diag["conditioned_candidates"] = len(cands)
    F = splits.moments.position_freq()
    out = []
    for (o1, f1), (o2, f2) in itertools.combinations_with_replacement(cands, 2):
        w1, p1, p2, _ = fit_params(F, o1, o2, f1, f2)
        out.append((moment_misfit(splits.completion, w1, p1, p2, o1, o2), w1, p1, p2, list(o1), list(o2)))
    out.sort(key=lambda t: t[0])
    return out
