import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mallowsmix import oracles
from mallowsmix.em import (
    e_step,
    em_learn,
    fit_phi,
    kemeny_objective,
    log_z,
    refine_parameters,
    weighted_kemeny_local_search,
)
from mallowsmix.kernels import precedence
from mallowsmix.mallows import PHI_MAX, PHI_MIN, expected_kt_distance, z_partition
from mallowsmix.mixture import MallowsMixture, sample_mixture_batch
from mallowsmix.permutations import Permutation, kendall_tau
from mallowsmix.rankings import RankingSample


def mixture(w1, phi1, pi1, phi2, pi2):
    return MallowsMixture.from_params(w1, phi1, pi1, phi2, pi2)


class TestHelpers:
    @given(st.integers(1, 30), st.floats(0.01, 0.99))
    def test_log_z(self, n, phi):
        assert log_z(n, phi) == pytest.approx(math.log(z_partition(n, phi)), rel=1e-10, abs=1e-12)

    @given(st.integers(2, 15), st.floats(0.02, 0.98))
    def test_fit_phi_inverts_expected_distance(self, n, phi):
        assert fit_phi(n, expected_kt_distance(n, phi)) == pytest.approx(phi, abs=1e-6)

    def test_fit_phi_clamps(self):
        assert fit_phi(6, 0.0) == PHI_MIN
        assert fit_phi(6, 15.0) == PHI_MAX

    def test_kemeny_objective(self, rng):
        orders = np.argsort(rng.random((30, 5)), axis=1).astype(np.int32)
        w = rng.random(30)
        cand = (4, 2, 0, 1, 3)
        want = sum(x * kendall_tau(cand, tuple(o)) for o, x in zip(orders.tolist(), w))
        assert kemeny_objective(precedence(orders, w, 5), cand) == pytest.approx(want)


class TestKemenyLocalSearch:
    @settings(max_examples=15)
    @given(st.integers(0, 10_000))
    def test_never_worse_than_start(self, seed):
        rng = np.random.default_rng(seed)
        orders = np.argsort(rng.random((12, 5)), axis=1).astype(np.int32)
        w = rng.random(12)
        start = tuple(rng.permutation(5))
        got = weighted_kemeny_local_search(orders, w, start)
        prec = precedence(orders, w, 5)
        assert kemeny_objective(prec, got.order) <= kemeny_objective(prec, start) + 1e-12

    def test_reaches_optimum_on_concentrated_data(self, rng):
        from mallowsmix.mallows import MallowsModel, sample_batch

        orders = sample_batch(MallowsModel(0.3, (2, 4, 0, 1, 3)), 40, rng)
        w = np.ones(40)
        best, cost = oracles.kemeny_brute_force(orders, w)
        got = weighted_kemeny_local_search(orders, w, (0, 1, 2, 3, 4))
        assert kemeny_objective(precedence(orders, w, 5), got.order) == pytest.approx(cost)

    def test_bad_weights(self):
        orders = np.array([[0, 1, 2]], dtype=np.int32)
        with pytest.raises(ValueError):
            weighted_kemeny_local_search(orders, [0.0], (0, 1, 2))
        with pytest.raises(ValueError):
            weighted_kemeny_local_search(orders, [1.0, 1.0], (0, 1, 2))


class TestEStep:
    def test_matches_enumeration(self):
        mix = mixture(0.3, 0.4, (0, 1, 2, 3), 0.6, (3, 1, 0, 2))
        law = oracles.mixture_law(mix)
        rows = np.array(list(law), dtype=np.int32)
        resp, ll = e_step(rows, np.ones(len(rows)), mix)
        want = math.fsum(math.log(v) for v in law.values())
        assert ll == pytest.approx(want, rel=1e-12)
        np.testing.assert_allclose(resp.sum(axis=1), 1.0)


class TestEMLearn:
    def test_loglik_monotone(self, rng):
        mix = mixture(0.4, 0.5, range(6), 0.4, (5, 3, 1, 0, 2, 4))
        sample = RankingSample.draw(mix, 20_000, rng)
        res = em_learn(sample, rng=np.random.default_rng(1))
        hist = res.diagnostics["loglik_history"]
        if res.diagnostics["reseeds"] == 0:
            assert all(b >= a - 1e-9 * abs(a) for a, b in zip(hist, hist[1:]))

    def test_truth_is_near_fixed_point(self, rng):
        mix = mixture(0.4, 0.5, range(7), 0.3, (6, 4, 2, 0, 1, 3, 5))
        sample = RankingSample.draw(mix, 200_000, rng)
        res = em_learn(sample, init=mix, rng=rng)
        assert (res.pi1, res.pi2) == (mix.m1.central, mix.m2.central)
        assert abs(res.w1 - 0.4) < 0.01 and abs(res.phi1 - 0.5) < 0.01 and abs(res.phi2 - 0.3) < 0.01
        assert res.path == "em" and res.diagnostics["converged"]

    def test_seeded_runs_agree(self, rng):
        rows = sample_mixture_batch(mixture(0.5, 0.5, range(5), 0.5, range(5)[::-1]), 3000, rng)
        a = em_learn(rows, rng=np.random.default_rng(4), max_iters=20)
        b = em_learn(rows, rng=np.random.default_rng(4), max_iters=20)
        assert a.to_json_dict() == b.to_json_dict()

    def test_accepts_permutation_list(self):
        perms = [Permutation((0, 1, 2)), Permutation((2, 1, 0)), Permutation((0, 2, 1))]
        res = em_learn(perms, rng=np.random.default_rng(0), max_iters=5)
        assert res.n == 3

    def test_rejects(self):
        with pytest.raises(ValueError):
            em_learn([Permutation((0, 1, 2))])
        with pytest.raises(ValueError):
            em_learn([Permutation((0, 1, 2))] * 3, max_iters=0)


class TestRefineParameters:
    def test_recovers_on_exact_law(self):
        mix = mixture(0.3, 0.45, range(5), 0.25, (4, 2, 0, 3, 1))
        sample = RankingSample.exact_mixture(mix)
        w1, p1, p2, ll = refine_parameters(sample, list(range(5)), [4, 2, 0, 3, 1], 0.5, 0.3, 0.5,
                                           max_iters=2000, tol=1e-12)
        assert abs(w1 - 0.3) < 1e-4 and abs(p1 - 0.45) < 1e-4 and abs(p2 - 0.25) < 1e-4
        law = oracles.mixture_law(mix)
        assert ll == pytest.approx(math.fsum(v * math.log(v) for v in law.values()), rel=1e-8)

    def test_sampled_shared_central(self, rng):
        mix = mixture(0.5, 0.2, range(8), 0.7, range(8))
        sample = RankingSample.draw(mix, 300_000, rng)
        w1, p1, p2, _ = refine_parameters(sample, list(range(8)), list(range(8)), 0.4, 0.3, 0.6)
        assert abs(w1 - 0.5) < 0.03 and abs(p1 - 0.2) < 0.03 and abs(p2 - 0.7) < 0.03
