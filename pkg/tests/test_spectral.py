import math

import numpy as np
import pytest

from mallowsmix.mallows import PHI_MAX, MallowsModel, representative_vector
from mallowsmix.mixture import MallowsMixture, mixture_position_matrix, sample_mixture_batch
from mallowsmix.moments import closed_form
from mallowsmix.permutations import Permutation
from mallowsmix.rankings import RankingSample
from mallowsmix.spectral import (
    ConfigError,
    LearnedMixture,
    LearnerConfig,
    PrefixHypothesis,
    StageFailure,
    candidate_centrals,
    estimate_phi,
    find_pi,
    fit_params,
    greedy_place,
    handle_degenerate,
    infer_top_k,
    learn,
    moment_misfit,
    remove_common_prefix,
    solve_f2,
)
from mallowsmix.spectral.completion import model_rows
from mallowsmix.spectral.learner import EXACT_EPS2, EXACT_FLOOR, Thresholds
from mallowsmix.spectral.types import SplitSample, bucket_by_shift, is_degenerate
from mallowsmix.tensor import build_tensor, decompose_rank2, random_partition


def mixture(w1, phi1, pi1, phi2, pi2):
    return MallowsMixture.from_params(w1, phi1, pi1, phi2, pi2)


def matches(res: LearnedMixture, mix: MallowsMixture) -> LearnedMixture | None:
    """``res`` relabelled to agree with ``mix``, or ``None`` if the centrals differ."""
    if (res.pi1, res.pi2) == (mix.m1.central, mix.m2.central):
        return res
    if (res.pi2, res.pi1) == (mix.m1.central, mix.m2.central):
        return res.swapped()
    return None


def exact_splits(mix):
    s = RankingSample.exact_mixture(mix)
    return SplitSample(s, s, s)


class TestConfig:
    def test_defaults_roundtrip(self):
        cfg = LearnerConfig(seed=3, rounds=5)
        assert LearnerConfig.from_dict(cfg.to_dict()) == cfg

    @pytest.mark.parametrize("bad", [
        {"sample_split": [0.5, 0.5]},
        {"sample_split": [0.5, 0.4, 0.4]},
        {"rounds": 0},
        {"eps": -1.0},
        {"placement": "magic"},
        {"bogus": 1},
    ])
    def test_rejects(self, bad):
        with pytest.raises(ConfigError):
            LearnerConfig.from_dict(bad)


class TestEstimatePhi:
    def test_geometric_profile(self):
        p = representative_vector(MallowsModel(0.35, (4, 2, 0, 1, 3)))
        assert estimate_phi(p, 1e-12) == pytest.approx(0.35, abs=1e-12)

    def test_needs_two_entries(self):
        with pytest.raises(StageFailure):
            estimate_phi([1.0, 0.0, 0.0], 1e-6)


class TestGreedyPlace:
    def test_fixed_positions_respected(self):
        scores = np.eye(4)
        assert greedy_place(scores, {3: 0}) == [3, 1, 2, 0]

    def test_fixed_twice(self):
        with pytest.raises(ValueError):
            greedy_place(np.eye(3), {0: 1, 2: 1})

    def test_output_is_permutation(self, rng):
        out = greedy_place(rng.random((9, 9)))
        assert sorted(out) == list(range(9))


class TestFindPi:
    MIX = mixture(0.6, 0.45, (0, 1, 2, 3, 4, 5), 0.3, (3, 5, 1, 0, 4, 2))

    def test_solve_f2_exact(self):
        F = mixture_position_matrix(self.MIX)
        f2 = solve_f2(F, list(self.MIX.m1.central.order), 0.6, 0.4, 0.45)
        np.testing.assert_allclose(f2, model_rows(list(self.MIX.m2.central.order), 0.3), atol=1e-12)

    @pytest.mark.parametrize("method", ["argmax", "fit"])
    def test_recovers_second_central(self, method):
        sample = RankingSample.exact_mixture(self.MIX)
        got = find_pi(sample, list(self.MIX.m1.central.order), 0.6, 0.4, 0.45, 0.3, method=method)
        assert got == list(self.MIX.m2.central.order)

    def test_tiny_second_weight(self):
        with pytest.raises(StageFailure):
            solve_f2(np.eye(3), [0, 1, 2], 1.0, 1e-5, 0.5)


class TestInferTopK:
    def test_noiseless_n12(self):
        rng = np.random.default_rng(12)
        n = 12
        mix = mixture(0.3, 0.4, rng.permutation(n), 0.6, rng.permutation(n))
        stats = closed_form(mix)
        th = Thresholds(0.0, EXACT_FLOOR, EXACT_EPS2, 10, n, 0.0)
        while True:
            part = random_partition(n, rng)
            if min(len(s) for s in part.parts) >= 2:
                break
        w1, w2, phi1, phi2, pre = infer_top_k(stats, decompose_rank2(build_tensor(stats, part), rng), th)
        if abs(w1 - 0.3) > abs(w2 - 0.3):
            w1, w2, phi1, phi2 = w2, w1, phi2, phi1
            pre = PrefixHypothesis(pre.elems2, pre.elems1, pre.y_hat, pre.x_hat)
        assert abs(w1 - 0.3) < 1e-6 and abs(phi1 - 0.4) < 1e-6 and abs(phi2 - 0.6) < 1e-6
        for elems, model in ((pre.elems1, mix.m1), (pre.elems2, mix.m2)):
            assert len(elems) >= 1
            assert tuple(elems) == model.central.order[: len(elems)]


class TestDegenerate:
    def test_common_prefix_exact(self):
        mix = mixture(0.5, 0.4, (0, 1, 2, 3, 4, 5), 0.4, (0, 1, 2, 5, 4, 3))
        assert remove_common_prefix(RankingSample.exact_mixture(mix), 0.4) == [0, 1, 2]

    def test_identical_exact(self):
        mix = mixture(0.5, 0.4, (2, 0, 1, 3, 4), 0.4, (2, 0, 1, 3, 4))
        ans = handle_degenerate(exact_splits(mix), 0.4, LearnerConfig())
        assert ans.path == "degenerate-identical"
        assert ans.order1 == ans.order2 == [2, 0, 1, 3, 4]

    def test_identical_sampled(self):
        rng = np.random.default_rng(5)
        central = rng.permutation(8)
        mix = mixture(0.5, 0.5, central, 0.5, central)
        res = learn(RankingSample.draw(mix, 1_000_000, rng), LearnerConfig(seed=1))
        assert res.path == "degenerate-identical"
        assert res.pi1 == res.pi2 == mix.m1.central
        assert abs(res.phi1 - 0.5) < 0.02

    def test_level_fit_ignores_swapped_pair(self):
        from mallowsmix.spectral.degenerate import fit_level_phi

        mix = mixture(0.3, 0.55, (0, 1, 2, 3, 4, 5, 6, 7), 0.55, (3, 1, 2, 0, 4, 5, 6, 7))
        p = RankingSample.exact_mixture(mix).first_freq()
        assert fit_level_phi(p, list(range(8)), 0.65, math.inf, 1e-4) == pytest.approx(0.55, abs=2e-4)

    def test_is_degenerate(self):
        swap = mixture(0.5, 0.5, (0, 1, 2, 3, 4, 5), 0.5, (1, 0, 2, 3, 4, 5))
        assert is_degenerate(swap, 1e-4)
        assert not is_degenerate(mixture(0.5, 0.5, range(6), 0.51, (1, 0, 2, 3, 4, 5)), 1e-4)
        assert not is_degenerate(mixture(0.5, 0.5, range(6), 0.5, range(6)[::-1]), 1e-4)

    def test_buckets(self):
        b = bucket_by_shift(Permutation((0, 1, 2, 3)), Permutation((3, 0, 1, 2)), range(4))
        assert b.buckets == {-1: [0, 1, 2], 3: [3]} and b.majority == -1


class TestConditioned:
    MIX = mixture(0.35, 0.5, (0, 1, 2, 3, 4, 5, 6), 0.3, (6, 5, 4, 3, 2, 1, 0))

    def test_fit_params_exact(self):
        F = mixture_position_matrix(self.MIX)
        o1, o2 = list(range(7)), list(range(7))[::-1]
        w, p1, p2, loss = fit_params(F, o1, o2, 0.45, 0.35)
        assert abs(w - 0.35) < 1e-3 and abs(p1 - 0.5) < 1e-3 and abs(p2 - 0.3) < 1e-3
        assert loss < 1e-10

    def test_misfit_zero_at_truth(self):
        sample = RankingSample.exact_mixture(self.MIX)
        o1, o2 = list(range(7)), list(range(7))[::-1]
        assert moment_misfit(sample, 0.35, 0.5, 0.3, o1, o2) < 1e-20
        assert moment_misfit(sample, 0.5, 0.5, 0.3, o1, o2) > 1e-6

    def test_candidates_include_truth(self, rng):
        sample = RankingSample.draw(self.MIX, 200_000, rng)
        cands = [tuple(c) for c, _ in candidate_centrals(sample, LearnerConfig(), 1e-3)]
        assert tuple(range(7)) in cands and tuple(range(7))[::-1] in cands


class TestLearn:
    @pytest.mark.parametrize("seed", range(6))
    def test_exact_mode(self, seed):
        rng = np.random.default_rng(100 + seed)
        while True:
            mix = mixture(rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.permutation(6),
                          rng.uniform(0.2, 0.8), rng.permutation(6))
            if not is_degenerate(mix, 1e-4):
                break
        res = matches(learn(RankingSample.exact_mixture(mix), LearnerConfig(seed=seed)), mix)
        assert res is not None
        assert abs(res.w1 - mix.w1) < 1e-6
        assert abs(res.phi1 - mix.m1.phi) < 1e-6 and abs(res.phi2 - mix.m2.phi) < 1e-6

    def test_sampled_n8(self):
        rng = np.random.default_rng(3)
        mix = mixture(0.4, 0.5, rng.permutation(8), 0.35, rng.permutation(8))
        res = matches(learn(RankingSample.draw(mix, 500_000, rng), LearnerConfig(seed=2)), mix)
        assert res is not None
        assert abs(res.w1 - 0.4) < 0.05 and abs(res.phi1 - 0.5) < 0.05 and abs(res.phi2 - 0.35) < 0.05

    def test_plain_arrays(self, rng):
        mix = mixture(0.5, 0.3, range(5), 0.3, range(5)[::-1])
        res = learn(sample_mixture_batch(mix, 20_000, rng))
        assert matches(res, mix) is not None

    def test_too_few_samples(self):
        with pytest.raises(ConfigError):
            learn(np.tile(np.arange(4, dtype=np.int32), (10, 1)))

    def test_too_few_elements(self):
        with pytest.raises(ConfigError):
            learn(np.tile(np.arange(2, dtype=np.int32), (5000, 1)))

    def test_same_seed_same_answer(self, rng):
        mix = mixture(0.4, 0.5, range(7), 0.4, (3, 1, 6, 0, 2, 5, 4))
        sample = RankingSample.draw(mix, 50_000, rng)
        a = learn(sample, LearnerConfig(seed=9)).to_json_dict()
        b = learn(sample, LearnerConfig(seed=9)).to_json_dict()
        assert a == b


class TestLearnedMixture:
    def make(self, **kw):
        base = dict(w1=0.3, w2=0.7, phi1=0.5, phi2=0.2, pi1=Permutation((0, 1, 2)), pi2=Permutation((2, 1, 0)),
                    path="tensor")
        return LearnedMixture(**{**base, **kw})

    def test_json_roundtrip(self):
        res = self.make(diagnostics={"x": math.inf, "y": np.float64(2.0)})
        d = res.to_json_dict()
        assert d["diagnostics"] == {"x": None, "y": 2.0}
        back = LearnedMixture.from_json_dict(d)
        assert back.pi2 == res.pi2 and back.w1 == res.w1

    def test_validation(self):
        with pytest.raises(ValueError):
            self.make(path="magic")
        with pytest.raises(ValueError):
            self.make(w2=0.5)
        with pytest.raises(ValueError):
            self.make(pi2=Permutation((0, 1, 3)))

    def test_phi_clamped(self):
        assert self.make(phi1=1.0).phi1 == PHI_MAX

    def test_as_mixture(self):
        mix = self.make().as_mixture()
        assert mix.w1 == 0.3 and mix.m2.central == Permutation((2, 1, 0))
