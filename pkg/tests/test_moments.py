import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mallowsmix import oracles
from mallowsmix.mallows import MallowsModel, representative_vector
from mallowsmix.mixture import MallowsMixture, exact_mixture_distribution, sample_mixture_batch
from mallowsmix.moments import (
    c2,
    c3,
    cache_path,
    closed_form,
    estimate_from_samples,
    file_digest,
    load_moments,
    save_moments,
    tally,
)
from mallowsmix.permutations import Permutation, orders_array


def random_mixture(n, seed):
    rng = np.random.default_rng(seed)
    return MallowsMixture.from_params(rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.permutation(n),
                                      rng.uniform(0.1, 0.9), rng.permutation(n))


class TestConstants:
    def test_c2_example(self):
        law = oracles.mallows_law(0.5, range(3))
        _, p2, _ = oracles.top_sets(law, 3)
        x = representative_vector(MallowsModel(0.5, (0, 1, 2)))
        assert p2[0, 1] == pytest.approx(c2(0.5, 3) * x[0] * x[1], abs=1e-15)

    @pytest.mark.parametrize("f, n", [(c2, 1), (c3, 2)])
    def test_small_n(self, f, n):
        with pytest.raises(ValueError):
            f(0.5, n)


class TestClosedForm:
    @pytest.mark.parametrize("n", [4, 5, 6])
    @pytest.mark.parametrize("seed", range(8))
    def test_matches_enumeration(self, n, seed):
        mix = random_mixture(n, seed)
        p1, p2, p3 = oracles.top_sets(oracles.mixture_law(mix), n)
        stats = closed_form(mix)
        assert np.max(np.abs(stats.p1 - p1)) < 1e-12
        assert np.max(np.abs(stats.p2 - p2)) < 1e-12
        assert np.max(np.abs(stats.p3 - p3)) < 1e-12

    @given(st.integers(3, 6), st.integers(0, 10_000))
    def test_factored_equals_dense(self, n, seed):
        mix = random_mixture(n, seed)
        dense = closed_form(mix, dense=True)
        lazy = closed_form(mix, dense=False)
        idx = list(range(n))
        np.testing.assert_allclose(lazy.block(idx, idx, idx), dense.p3, atol=1e-15)
        assert lazy.triple(0, 1, 2) == pytest.approx(dense.p3[0, 1, 2], abs=1e-15)

    def test_rank_two_second_moment(self):
        stats = closed_form(random_mixture(8, 1))
        p2 = stats.p2.copy()
        np.fill_diagonal(p2, 1.0)  # diagonal is unobserved; off-diagonal blocks stay rank 2
        s = np.linalg.svd(p2[:4, 4:], compute_uv=False)
        assert s[2] < 1e-12 * s[0]


class TestTally:
    def test_exact_law_reproduces_closed_form(self):
        mix = random_mixture(5, 3)
        law = exact_mixture_distribution(mix)
        stats = tally(orders_array(list(law)), np.array(list(law.values())), exact=True)
        want = closed_form(mix)
        assert stats.is_exact
        assert np.max(np.abs(stats.p3 - want.p3)) < 1e-12

    def test_symmetry_and_totals(self, rng):
        draws = sample_mixture_batch(random_mixture(7, 2), 5000, rng)
        stats = estimate_from_samples(draws)
        assert stats.sample_count == 5000
        assert stats.p1.sum() == pytest.approx(1.0)
        assert stats.p2.sum() == pytest.approx(2.0)
        assert stats.p3.sum() == pytest.approx(6.0)
        np.testing.assert_array_equal(stats.p3, stats.p3.transpose(1, 0, 2))
        np.testing.assert_array_equal(stats.p3, stats.p3.transpose(2, 1, 0))

    def test_sparse_matches_dense(self, rng):
        draws = sample_mixture_batch(random_mixture(6, 4), 2000, rng)
        dense = tally(draws, dense=True)
        sparse = tally(draws, dense=False)
        idx = list(range(6))
        np.testing.assert_allclose(sparse.block(idx, idx, idx), dense.p3, atol=1e-15)
        assert sparse.triple(5, 1, 3) == dense.p3[5, 1, 3]

    def test_accepts_permutations(self):
        perms = [Permutation((0, 1, 2)), Permutation((2, 1, 0))]
        assert estimate_from_samples(perms).p1.tolist() == [0.5, 0.0, 0.5]

    @pytest.mark.parametrize("orders", [np.zeros((0, 4)), np.zeros((3, 2))])
    def test_rejects(self, orders):
        with pytest.raises(ValueError):
            tally(orders)

    def test_converges(self, rng):
        mix = random_mixture(6, 7)
        stats = tally(sample_mixture_batch(mix, 400_000, rng))
        assert np.max(np.abs(stats.p3 - closed_form(mix).p3)) < 0.003


class TestCache:
    @pytest.mark.parametrize("dense", [True, False])
    def test_roundtrip(self, tmp_path, rng, dense):
        stats = tally(sample_mixture_batch(random_mixture(6, 0), 3000, rng), dense=dense)
        save_moments(stats, tmp_path / "s.mom")
        back = load_moments(tmp_path / "s.mom")
        assert back.sample_count == 3000
        np.testing.assert_array_equal(back.p2, stats.p2)
        idx = list(range(6))
        np.testing.assert_array_equal(back.block(idx, idx, idx), stats.block(idx, idx, idx))

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x.mom").write_bytes(b"not a cache")
        with pytest.raises(ValueError):
            load_moments(tmp_path / "x.mom")

    def test_factored_not_cacheable(self, tmp_path):
        with pytest.raises(ValueError):
            save_moments(closed_form(random_mixture(5, 0), dense=False), tmp_path / "f.mom")

    def test_digest_keyed_path(self, tmp_path):
        f = tmp_path / "r.txt"
        f.write_text("1 2 3\n")
        digest = file_digest(f)
        assert len(digest) == 64
        assert cache_path(tmp_path, digest, "dense").name == f"{digest[:32]}.dense.mom"
