import itertools
import os
import subprocess
import sys

import numpy as np
import pytest

from mallowsmix import kernels
from mallowsmix.mallows import insertion_cdf
from mallowsmix.permutations import kendall_tau
from mallowsmix.rankings import _radix

BACKENDS = kernels.backends()


def random_orders(rng, count, n):
    return np.argsort(rng.random((count, n)), axis=1).astype(np.int32)


@pytest.fixture(params=sorted(BACKENDS))
def impl(request):
    return BACKENDS[request.param]


class TestAgainstReference:
    def test_insertion_sample_tiny_uniforms(self, impl):
        central = np.array([3, 0, 2, 1], dtype=np.int32)
        out = impl.insertion_sample(central, insertion_cdf(0.5, 4), np.zeros((5, 4)))
        assert (out == central).all()

    def test_insertion_sample_is_permutation(self, impl, rng):
        out = impl.insertion_sample(np.arange(7, dtype=np.int32), insertion_cdf(0.6, 7), rng.random((200, 7)))
        assert (np.sort(out, axis=1) == np.arange(7)).all()

    def test_distances(self, impl, rng):
        orders = random_orders(rng, 50, 6)
        central = rng.permutation(6)
        pos = np.argsort(central).astype(np.int32)
        want = [kendall_tau(tuple(o), tuple(central)) for o in orders.tolist()]
        assert impl.distances_to(orders, pos).tolist() == want

    def test_position_counts(self, impl, rng):
        orders = random_orders(rng, 300, 5)
        got = impl.position_counts(orders, np.ones(300), 5)
        want = np.zeros((5, 5))
        for o in orders:
            want[o, np.arange(5)] += 1
        np.testing.assert_array_equal(got, want)

    def test_precedence(self, impl, rng):
        orders = random_orders(rng, 100, 5)
        w = rng.integers(1, 4, size=100).astype(np.float64)
        want = np.zeros((5, 5))
        for o, x in zip(orders.tolist(), w):
            for i, j in itertools.combinations(o, 2):
                want[i, j] += x
        np.testing.assert_allclose(impl.precedence(orders, w, 5), want)

    def test_lehmer_keys_are_ranks(self, impl):
        perms = np.array(list(itertools.permutations(range(4))), dtype=np.int32)
        assert impl.lehmer_keys(perms, _radix(4)).tolist() == list(range(24))

    def test_top_counts(self, impl, rng):
        orders = random_orders(rng, 400, 6)
        p1, p2, keys, vals = impl.top_counts(orders, np.ones(400), 6)
        assert p1.tolist() == np.bincount(orders[:, 0], minlength=6).tolist()
        assert p2.sum() == 800 and vals.sum() == 400
        assert (np.diff(keys) > 0).all()


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled extension not built")
class TestBackendsAgree:
    def test_all_kernels(self, rng):
        py, cy = BACKENDS["python"], BACKENDS["cython"]
        n = 9
        orders = random_orders(rng, 2000, n)
        w = rng.integers(1, 5, size=2000).astype(np.float64)
        pos = np.argsort(rng.permutation(n)).astype(np.int32)
        cdf = insertion_cdf(0.4, n + 2)
        u = rng.random((2000, n))
        assert (py.insertion_sample(np.arange(n, dtype=np.int32), cdf, u)
                == cy.insertion_sample(np.arange(n, dtype=np.int32), cdf, u)).all()
        fresh = np.array([n, n + 1], dtype=np.int32)
        u2 = rng.random((2000, 2))
        assert (py.prepend_insert(orders, fresh, cdf, u2) == cy.prepend_insert(orders, fresh, cdf, u2)).all()
        for a, b in zip(py.top_counts(orders, w, n), cy.top_counts(orders, w, n)):
            np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(py.position_counts(orders, w, n), cy.position_counts(orders, w, n))
        np.testing.assert_array_equal(py.distances_to(orders, pos), cy.distances_to(orders, pos))
        np.testing.assert_array_equal(py.precedence(orders, w, n), cy.precedence(orders, w, n))
        np.testing.assert_array_equal(py.lehmer_keys(orders, _radix(n)), cy.lehmer_keys(orders, _radix(n)))


def test_environment_forces_fallback():
    code = "from mallowsmix import kernels; print(kernels.BACKEND)"
    env = {**os.environ, "MALLOWSMIX_BACKEND": "python"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
