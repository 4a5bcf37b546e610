"""Top-level spectral learner: moment tensors, top-k inference, orchestration."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..mallows import PHI_MAX, PHI_MIN, z_single
from ..moments import MomentStats
from ..permutations import Permutation
from ..rankings import RankingSample
from ..tensor import Rank2Decomp, build_tensor, decompose_rank2, random_partition
from .completion import recover_rest
from .types import (
    ConfigError,
    LearnedMixture,
    LearnerConfig,
    PrefixHypothesis,
    SplitSample,
    StageFailure,
)

MIN_SAMPLES = 1000
WEIGHT_SLACK = 0.05
EXACT_FLOOR = 1e-9
EXACT_EPS2 = 1e-7
SAMPLE_EPS2 = 1e-4
MISFIT_SLACK = 3.0
# rounding-level misfit of an exact answer on an exact law
MISFIT_ATOL = 1e-16


@dataclass(frozen=True)
class Thresholds:
    eps_s: float
    noise_floor: float
    eps2: float
    rounds: int
    prefix_cap: int
    gap: float
    snr: float = 0.0
    count: float = math.inf

    def tensor_noise(self, t: np.ndarray) -> float:
        """Frobenius size of the sampling noise in a block of top-3 frequencies."""
        if math.isinf(self.count):
            return 0.0
        return math.sqrt(float(np.maximum(t, 0.0).sum()) / self.count)


def thresholds(config: LearnerConfig, m: int, sample: RankingSample) -> Thresholds:
    """Resolve data-dependent defaults for a sample over ``m`` elements."""
    rounds = config.rounds or 10 * math.ceil(math.log2(m))
    cap = config.prefix_cap or m
    if sample.exact:
        floor = config.noise_floor or EXACT_FLOOR
        eps2 = config.eps2 or EXACT_EPS2
        return Thresholds(0.0, floor, eps2, rounds, cap, 0.0)
    eps_s = 3.0 * math.sqrt(math.log(m) / sample.total)
    floor = config.noise_floor or 3.0 * eps_s
    eps2 = config.eps2 or SAMPLE_EPS2
    return Thresholds(eps_s, floor, eps2, rounds, cap, eps_s, config.snr, sample.total)


def as_sample(samples) -> RankingSample:
    if isinstance(samples, RankingSample):
        return samples
    return RankingSample.from_orders(samples)


def estimate_phi(p, noise_floor: float) -> float:
    """Largest ratio of consecutive sorted entries among those above ``sqrt(noise_floor)``."""
    p = np.sort(np.asarray(p, dtype=np.float64))[::-1]
    p = p[p > math.sqrt(noise_floor)]
    if len(p) < 2:
        raise StageFailure("fewer than two entries above the floor")
    return float(min(max(np.max(p[1:] / p[:-1]), PHI_MIN), PHI_MAX))


def _prefix(vec: np.ndarray, floor: float, gap: float, cap: int) -> list[int]:
    order = np.argsort(-vec, kind="stable")
    out = []
    for k, e in enumerate(order):
        if vec[e] <= floor or len(out) >= cap:
            break
        nxt = vec[order[k + 1]] if k + 1 < len(order) else -np.inf
        if vec[e] - nxt <= gap:
            break
        out.append(int(e))
    return out


def _paper_prefix_len(phi: float, w_min: float, n: int, phi_max: float) -> float:
    gamma = (1.0 - phi_max) ** 2 / (4.0 * n * phi_max)
    return math.log(n**10 / (w_min**2 * gamma**2)) / math.log(1.0 / phi)


def infer_top_k(stats: MomentStats, decomp: Rank2Decomp, th: Thresholds):
    """Weights, dispersions and ranking prefixes from an accepted decomposition."""
    n = stats.n
    x = np.zeros(n)
    y = np.zeros(n)
    for mode, s in enumerate(decomp.part.parts):
        M = decomp.factor(mode)
        alpha, beta = np.linalg.pinv(M) @ stats.p1[s]
        x[s] = alpha * M[:, 0]
        y[s] = beta * M[:, 1]
    w1 = float(np.abs(x).sum())
    if w1 < -WEIGHT_SLACK or w1 > 1.0 + WEIGHT_SLACK:
        raise StageFailure(f"recovered weight {w1:.4f} outside [0, 1]")
    w1 = min(max(w1, 1e-3), 1.0 - 1e-3)
    w2 = 1.0 - w1
    x_hat = np.maximum(x / w1, 0.0)
    y_hat = np.maximum(y / w2, 0.0)
    phis = []
    for vec in (x_hat, y_hat):
        top = np.sort(vec)[::-1]
        if top[0] <= 0:
            raise StageFailure("recovered representative vector vanishes")
        phis.append(float(min(max(top[1] / top[0], PHI_MIN), PHI_MAX)))
    prefixes = []
    for vec, phi in zip((x_hat, y_hat), phis):
        cap = th.prefix_cap
        r = _paper_prefix_len(phi, min(w1, w2), n, max(phis))
        cap = min(cap, max(1, int(math.floor(r))))
        prefixes.append(_prefix(vec, th.noise_floor, th.gap, cap))
    return w1, w2, phis[0], phis[1], PrefixHypothesis(prefixes[0], prefixes[1], x_hat, y_hat)


@dataclass
class Answer:
    """A stage result in the local ids of the sample it was computed on."""

    w1: float
    phi1: float
    phi2: float
    order1: list[int]
    order2: list[int]
    path: str
    diagnostics: dict


def tensor_stage(splits: SplitSample, config: LearnerConfig, rng: np.random.Generator, diag: dict):
    """Try random partitions; return an :class:`Answer` or ``None`` plus dispersion estimates.

    Every round is decomposed.  A round is accepted when its factors pass
    the ``sigma2`` floor and, for sampled data, each unfolding's second
    singular value exceeds ``snr`` times the estimated noise; accepted
    rounds are tried best-separated first.
    """
    m = splits.m
    th = thresholds(config, m, splits.moments)
    stats = splits.moments.moments()
    diag.update(eps2=th.eps2, noise_floor=th.noise_floor, rounds=th.rounds)
    accepted, phi_est, sig_log, snr_log = [], [], [], []
    for _ in range(th.rounds):
        part = random_partition(m, rng)
        if min(len(s) for s in part.parts) < 2:
            sig_log.append(0.0)  # a singleton part cannot hold two distinct factors
            snr_log.append(0.0)
            continue
        tensor = build_tensor(stats, part)
        dec = decompose_rank2(tensor, rng)
        s2 = (0.0, 0.0, 0.0) if dec.degenerate else dec.sigma2s()
        noise = th.tensor_noise(tensor.t)
        # rank-2 structure must stand clear of the sampling noise in every unfolding
        snr = min(dec.unfolding_s2) / noise if noise > 0 else math.inf
        sig_log.append(round(min(s2), 6))
        snr_log.append(round(snr, 3) if math.isfinite(snr) else None)
        if (not dec.degenerate and min(s2) >= th.eps2 and snr >= th.snr
                and dec.residual < th.eps2 / 10.0 + 2.0 * noise):
            key = snr if math.isfinite(snr) else min(s2)
            accepted.append((key, len(sig_log), dec))
            continue
        # parts whose factors are nearly parallel carry a single-model profile
        weak = [k for k in range(3) if s2[k] < th.eps2] or [0, 1, 2]
        ests = []
        for k in weak:
            try:
                ests.append(estimate_phi(stats.p1[part.parts[k]], th.eps_s ** 2 or EXACT_FLOOR))
            except StageFailure:
                pass
        if ests:
            phi_est.append(float(np.median(ests)))
    diag["snr"] = snr_log
    diag["sigma2"] = sig_log
    accepted.sort(key=lambda t: (-t[0], t[1]))
    for s2, _, dec in accepted:
        try:
            w1, w2, phi1, phi2, pre = infer_top_k(stats, dec, th)
            order1, order2, path = recover_rest(splits, (w1, w2, phi1, phi2), pre, config,
                                                eps=config.eps, diag=diag)
        except StageFailure as exc:
            diag.setdefault("rejected_rounds", []).append(str(exc))
            continue
        diag.update(accepted_score=s2, residual=dec.residual,
                    prefix_lengths=[len(pre.elems1), len(pre.elems2)])
        return Answer(w1, phi1, phi2, order1, order2, path, diag), phi_est
    return None, phi_est


def degenerate_phi(splits: SplitSample, config: LearnerConfig, phi_est: list[float]) -> float:
    """Shared dispersion for the degenerate branches: the median over rejected rounds' weak parts."""
    if phi_est:
        return float(np.median(phi_est))
    th = thresholds(config, splits.m, splits.moments)
    return estimate_phi(splits.moments.first_freq(), th.eps_s ** 2 or EXACT_FLOOR)


def split_budget(sample: RankingSample, config: LearnerConfig, rng) -> SplitSample:
    return SplitSample(*sample.split(config.sample_split, rng))


def learn(samples, config: LearnerConfig | None = None) -> LearnedMixture:
    """Learn a two-component Mallows mixture from rankings.

    ``samples`` is an ``(N, n)`` array of 0-based rankings, a list of
    permutations, or a :class:`RankingSample` (possibly an exact law).
    """
    from .degenerate import handle_degenerate

    config = config or LearnerConfig()
    sample = as_sample(samples)
    if sample.m < 3:
        raise ConfigError("need at least 3 elements")
    if sample.size < MIN_SAMPLES:
        raise ConfigError(f"need at least {MIN_SAMPLES} samples, got {int(sample.size)}")
    rng = np.random.default_rng(config.seed)
    splits = split_budget(sample, config, rng)
    diag: dict = {}
    ans, phi_est = tensor_stage(splits, config, rng, diag)
    if ans is None:
        diag["phi_round_estimates"] = phi_est
        ans = handle_degenerate(splits, degenerate_phi(splits, config, phi_est), config, rng=rng, diag=diag)
    ans = _refine(ans, sample, diag)
    better = _prefer_better_fit(ans, splits, config, diag)
    if better is not ans:
        ans = _refine(better, sample, diag)
    return to_learned(ans, sample.labels)


SHARED_CENTRAL_STARTS = ((0.5, 0.5, 1.5), (0.25, 0.25, 1.0), (0.75, 1.0, 4.0))


def _refine(ans: Answer, sample: RankingSample, diag: dict) -> Answer:
    """Polish ``(w, phi)`` by likelihood on the whole sample once the centrals are fixed.

    Exact laws are already solved exactly and are left alone.  With a
    shared central only the distance law is informative, so a few spread
    starts ``(w1, phi1 / phi, phi2 / phi)`` are tried and the most likely
    kept; equal dispersions then leave ``w`` arbitrary, as it must be.
    """
    from ..em import refine_parameters

    if sample.exact or ans.path == "fail":
        return ans
    diag["moment_estimates"] = [ans.w1, ans.phi1, ans.phi2]
    if list(ans.order1) != list(ans.order2):
        w1, phi1, phi2, _ = refine_parameters(sample, ans.order1, ans.order2, ans.w1, ans.phi1, ans.phi2)
        return replace(ans, w1=w1, phi1=phi1, phi2=phi2)
    phi = max(ans.phi1, ans.phi2)
    fits = [refine_parameters(sample, ans.order1, ans.order2, w, _clip_phi(a * phi), _clip_phi(b * phi))
            for w, a, b in SHARED_CENTRAL_STARTS]
    w1, phi1, phi2, _ = max(fits, key=lambda f: f[3])
    return replace(ans, w1=w1, phi1=phi1, phi2=phi2)


def _clip_phi(phi: float) -> float:
    return min(max(phi, 1e-3), 0.99)


def _prefer_better_fit(ans: Answer, splits: SplitSample, config: LearnerConfig, diag: dict) -> Answer:
    """Swap in a conditioned hypothesis when the branch answer misfits the data.

    An answer whose implied statistics match within a few times their
    sampling variance is kept as is.
    """
    from .conditioned import conditioned_hypotheses, misfit_noise, moment_misfit

    current = math.inf
    if ans.path != "fail":
        current = moment_misfit(splits.completion, ans.w1, ans.phi1, ans.phi2, ans.order1, ans.order2)
    noise = misfit_noise(splits.completion)
    diag["misfit"] = {"branch": current, "noise": noise}
    if current <= MISFIT_SLACK * noise + MISFIT_ATOL:
        return ans
    th = thresholds(config, splits.m, splits.moments)
    hyps = conditioned_hypotheses(splits, config, th.noise_floor, diag)
    if not hyps or hyps[0][0] >= current:
        return ans
    misfit, w1, phi1, phi2, o1, o2 = hyps[0]
    diag["misfit"]["conditioned"] = misfit
    diag["fallback"] = "conditioned"
    return Answer(w1, phi1, phi2, o1, o2, "pivot", diag)


def to_learned(ans: Answer, labels: np.ndarray) -> LearnedMixture:
    pi1 = Permutation(tuple(int(labels[e]) for e in ans.order1))
    pi2 = Permutation(tuple(int(labels[e]) for e in ans.order2))
    return LearnedMixture(ans.w1, 1.0 - ans.w1, ans.phi1, ans.phi2, pi1, pi2, ans.path, ans.diagnostics)


def level_vector(order: list[int], phi: float) -> np.ndarray:
    m = len(order)
    vec = np.zeros(m)
    vec[np.asarray(order)] = phi ** np.arange(m) / z_single(m, phi)
    return vec
