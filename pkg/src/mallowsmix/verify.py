"""Self-check battery run by ``mallowsmix verify``.

Each check compares a library routine with an enumeration oracle or a
statistical test and reports the measured error next to its tolerance.
``fast`` keeps to ``n <= 7``; ``full`` adds ``n = 8`` and the sampler
chi-square batteries.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from . import kernels, mallows, moments, oracles, permutations
from .mixture import MallowsMixture, sample_mixture_batch
from .rankings import RankingSample


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    tolerance: float
    seconds: float = 0.0

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag}  {self.name:<44} measured={self.measured:.3g} tol={self.tolerance:.3g} ({self.seconds:.1f}s)"


def _max_err(pairs) -> float:
    return max((float(np.max(np.abs(np.asarray(a) - np.asarray(b)))) for a, b in pairs), default=0.0)


def _random_mixture(n: int, rng: np.random.Generator) -> MallowsMixture:
    phis = rng.uniform(0.1, 0.9, size=2)
    return MallowsMixture.from_params(float(rng.uniform(0.05, 0.95)), float(phis[0]), rng.permutation(n).tolist(),
                                      float(phis[1]), rng.permutation(n).tolist())


def check_kendall_metric(level):
    n = 4
    perms = list(itertools.permutations(range(n)))
    worst = 0
    for a, b in itertools.product(perms, repeat=2):
        worst = max(worst, abs(permutations.kendall_tau(a, b) - oracles.pair_distance(a, b)))
    tri = 0
    for a, b, c in itertools.product(perms[::3], repeat=3):
        k = permutations.kendall_tau
        tri = max(tri, k(a, c) - k(a, b) - k(b, c))
    return max(worst, max(tri, 0)), 0.0


def check_inversion_roundtrip(level):
    bad = 0
    for n in range(1, 6):
        for code in itertools.product(*[range(n - i) for i in range(n)]):
            p = permutations.decode_inversion_table(list(code))
            bad += permutations.encode_inversion_table(p).code != tuple(code)
            bad += permutations.kendall_tau(p, permutations.Permutation.identity(n)) != sum(code)
    return bad, 0.0


def check_partition_function(level):
    top = 6 if level == "fast" else 7
    pairs = [(mallows.z_partition(n, phi), oracles.partition_function(n, phi))
             for n in range(1, top + 1) for phi in (0.1, 0.3, 0.5, 0.7, 0.9)]
    return _max_err(pairs), 1e-12


def check_position_table(level):
    top = 6 if level == "fast" else 7
    pairs = []
    for n in range(1, top + 1):
        for phi in (0.2, 0.5, 0.8):
            law = oracles.mallows_law(phi, range(n))
            pairs.append((mallows.position_prob_table(n, phi).f, oracles.position_marginals(law, n)))
    return _max_err(pairs), 1e-10


def check_position_symmetry(level):
    """``f[i, l] == f[l, i]`` to rounding."""
    top = 6 if level == "fast" else 7
    worst = 0.0
    for n in range(2, top + 1):
        for phi in (0.2, 0.5, 0.8):
            f = mallows.position_prob_table(n, phi).f
            worst = max(worst, float(np.max(np.abs(f - f.T))))
    return worst, 1e-12


GAIN_PHI_GRID = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6)


def gain_violation(f: np.ndarray, g: float) -> float:
    """Largest ``g * lo - hi`` over steps toward the diagonal mode of each row."""
    n = len(f)
    worst = -math.inf
    for i in range(n):
        for j in range(n - 1):
            hi, lo = (f[i, j + 1], f[i, j]) if j < i else (f[i, j], f[i, j + 1])
            worst = max(worst, g * lo - hi)
    return worst


def check_position_gain(level):
    """Rows peak on the diagonal and fall by ``1 + gain`` per step, for ``phi <= 0.6``.

    For ``n <= 7`` the ratio bound first fails near ``phi = 0.62`` and
    the diagonal stops being the mode near 0.64 (at ``n = 4, phi = 0.8``
    the element second in the central is likelier first than second),
    so the grid stops at 0.6.
    """
    top = 6 if level == "fast" else 7
    worst = 0.0
    for n in range(2, top + 1):
        for phi in GAIN_PHI_GRID:
            f = mallows.position_prob_table(n, phi).f
            worst = max(worst, gain_violation(f, 1.0 + mallows.gain(n, phi)))
    return worst, 1e-12


def check_representative_vector(level):
    pairs = []
    for n in range(1, 7):
        for phi in (0.2, 0.5, 0.8):
            central = list(range(n))[::-1]
            law = oracles.mallows_law(phi, central)
            pairs.append((mallows.representative_vector(mallows.MallowsModel(phi, tuple(central))),
                          oracles.position_marginals(law, n)[:, 0]))
    return _max_err(pairs), 1e-12


def check_expected_distance(level):
    pairs = [(mallows.expected_kt_distance(n, phi), oracles.mean_distance(phi, n))
             for n in range(1, 7) for phi in (0.2, 0.5, 0.8)]
    return _max_err(pairs), 1e-10


def check_condition_on_first(level):
    worst = 0.0
    for n, phi in ((4, 0.5), (5, 0.3)):
        central = tuple(range(n))
        law = oracles.mallows_law(phi, central)
        for e in central:
            model = mallows.condition_on_first(mallows.MallowsModel(phi, central), e)
            want = oracles.mallows_law(model.phi, model.central.order)
            got = oracles.conditional_law(law, e)
            worst = max(worst, 0.5 * sum(abs(got[p] - want[p]) for p in want))
    return worst, 1e-12


def check_moment_identities(level):
    rng = np.random.default_rng(11)
    count = 10 if level == "fast" else 50
    pairs = []
    for k in range(count):
        n = (4, 5, 6)[k % 3]
        mix = _random_mixture(n, rng)
        p1, p2, p3 = oracles.top_sets(oracles.mixture_law(mix), n)
        st = moments.closed_form(mix, dense=True)
        pairs += [(st.p1, p1), (st.p2, p2), (st.dense_p3(), p3)]
    return _max_err(pairs), 1e-10


def check_mixture_positions(level):
    from .mixture import mixture_position_matrix

    rng = np.random.default_rng(5)
    pairs = []
    for _ in range(5):
        mix = _random_mixture(5, rng)
        pairs.append((mixture_position_matrix(mix), oracles.position_marginals(oracles.mixture_law(mix), 5)))
    return _max_err(pairs), 1e-10


def check_backends(level):
    impls = kernels.backends()
    if len(impls) < 2:
        return 0.0, 0.0
    rng = np.random.default_rng(3)
    orders = np.ascontiguousarray(np.array([rng.permutation(7) for _ in range(500)], dtype=np.int32))
    w = rng.random(500)
    cdf = mallows.insertion_cdf(0.6, 7)
    u = rng.random((500, 7))
    central = np.arange(7, dtype=np.int32)
    pos = np.ascontiguousarray(rng.permutation(7).astype(np.int32))
    radix = np.array([math.factorial(6 - p) for p in range(7)], dtype=np.int64)
    outs = []
    for mod in impls.values():
        outs.append([
            mod.insertion_sample(central, cdf, u),
            mod.position_counts(orders, w, 7),
            mod.distances_to(orders, pos),
            mod.precedence(orders, w, 7),
            mod.lehmer_keys(orders, radix),
            *mod.top_counts(orders, w, 7)[:2],
        ])
    return _max_err(zip(outs[0], outs[1])), 1e-9


def check_tensor_recovery(level):
    from .tensor import build_tensor, decompose_rank2, random_partition

    rng = np.random.default_rng(4)
    n = 12
    mix = MallowsMixture.from_params(0.3, 0.4, range(n), 0.6, range(n)[::-1])
    st = moments.closed_form(mix)
    x = mallows.representative_vector(mix.m1)
    y = mallows.representative_vector(mix.m2)
    worst = 0.0
    for _ in range(5):
        part = random_partition(n, rng)
        if min(len(s) for s in part.parts) < 2:
            continue
        dec = decompose_rank2(build_tensor(st, part), rng)
        for mode, s in enumerate(part.parts):
            got = dec.factor(mode)
            truth = np.column_stack([x[s], y[s]])
            errs = []
            for order in ((0, 1), (1, 0)):
                e = 0.0
                for c in range(2):
                    a, b = got[:, c], truth[:, order[c]]
                    cos = abs(a @ b) / (np.linalg.norm(a) * np.linalg.norm(b))
                    e = max(e, math.acos(min(1.0, cos)))
                errs.append(e)
            worst = max(worst, min(errs))
    return worst, 1e-6


def check_exact_learning(level):
    from .spectral import LearnerConfig, learn
    from .spectral.types import is_degenerate

    rng = np.random.default_rng(8)
    n = 6 if level == "fast" else 8
    count = 3 if level == "fast" else 10
    worst = 0.0
    done = 0
    while done < count:
        mix = _random_mixture(n, rng)
        if is_degenerate(mix, 1e-4):
            continue
        done += 1
        res = learn(RankingSample.exact_mixture(mix), LearnerConfig(seed=done))
        if (res.pi2, res.pi1) == (mix.m1.central, mix.m2.central):
            res = res.swapped()
        if (res.pi1, res.pi2) != (mix.m1.central, mix.m2.central):
            return math.inf, 1e-6
        worst = max(worst, abs(res.w1 - mix.w1), abs(res.phi1 - mix.m1.phi), abs(res.phi2 - mix.m2.phi))
    return worst, 1e-6


def _chi2_p(counts: np.ndarray, probs: np.ndarray) -> float:
    return float(sps.chisquare(counts, probs * counts.sum()).pvalue)


def check_sampler_chi2(level):
    rng = np.random.default_rng(21)
    worst = 1.0
    n = 4
    index = {p: i for i, p in enumerate(itertools.permutations(range(n)))}
    for phi in (0.2, 0.5, 0.8):
        law = oracles.mallows_law(phi, range(n))
        rows = mallows.sample_batch(mallows.MallowsModel(phi, tuple(range(n))), 200_000, rng)
        counts = np.bincount([index[tuple(r)] for r in rows.tolist()], minlength=len(index))
        probs = np.array([law[p] for p in index])
        worst = min(worst, _chi2_p(counts, probs))
    mix = MallowsMixture.from_params(0.3, 0.4, range(n), 0.7, [2, 0, 3, 1])
    law = oracles.mixture_law(mix)
    rows = sample_mixture_batch(mix, 200_000, rng)
    counts = np.bincount([index[tuple(r)] for r in rows.tolist()], minlength=len(index))
    worst = min(worst, _chi2_p(counts, np.array([law[p] for p in index])))
    # three elements plus one prepended fresh element is Mallows over four
    base = mallows.sample_batch(mallows.MallowsModel(0.5, (0, 1, 2)), 200_000, rng)
    rows = mallows.prepend_batch(base, [3], 0.5, rng)
    law = oracles.mallows_law(0.5, (3, 0, 1, 2))
    counts = np.bincount([index[tuple(r)] for r in rows.tolist()], minlength=len(index))
    worst = min(worst, _chi2_p(counts, np.array([law[p] for p in index])))
    return worst, 0.001


def check_distance_generator(level):
    rng = np.random.default_rng(31)
    n, d = 5, 3
    tables = [c for c in itertools.product(*[range(n - i) for i in range(n)]) if sum(c) == d]
    index = {permutations.decode_inversion_table(list(c)).order: i for i, c in enumerate(tables)}
    counts = np.zeros(len(tables))
    for _ in range(10_000):
        p = permutations.random_permutation_at_distance(n, d, rng)
        if permutations.kendall_tau(p, permutations.Permutation.identity(n)) != d:
            return 0.0, 0.001
        counts[index[p.order]] += 1
    return _chi2_p(counts, np.full(len(tables), 1.0 / len(tables))), 0.001


# (name, function, compare) where compare is "le" (measured <= tol) or "ge"
FAST = [
    ("kendall tau vs pair count, metric (n=4)", check_kendall_metric, "le"),
    ("inversion table round trip (n<=5)", check_inversion_roundtrip, "le"),
    ("partition function vs enumeration", check_partition_function, "le"),
    ("position table vs enumeration", check_position_table, "le"),
    ("position table symmetry", check_position_symmetry, "le"),
    ("position mode and gain ratio (phi<=0.6)", check_position_gain, "le"),
    ("representative vector vs enumeration", check_representative_vector, "le"),
    ("expected distance vs enumeration", check_expected_distance, "le"),
    ("conditioning on the first element", check_condition_on_first, "le"),
    ("top-set moment closed forms", check_moment_identities, "le"),
    ("mixture position law", check_mixture_positions, "le"),
    ("compiled vs python kernels", check_backends, "le"),
    ("noiseless tensor factors (n=12)", check_tensor_recovery, "le"),
    ("exact-statistics learning", check_exact_learning, "le"),
]
FULL_ONLY = [
    ("sampler chi-square battery (p-value)", check_sampler_chi2, "ge"),
    ("distance generator uniformity (p-value)", check_distance_generator, "ge"),
]


def verify_suite(level: str = "fast", echo=None) -> list[CheckResult]:
    if level not in ("fast", "full"):
        raise ValueError("level must be 'fast' or 'full'")
    checks = FAST + (FULL_ONLY if level == "full" else [])
    out = []
    for name, fn, cmp in checks:
        start = time.perf_counter()
        try:
            measured, tol = fn(level)
            measured = float(measured)
            passed = measured <= tol if cmp == "le" else measured >= tol
        except Exception:  # a crashing check is a failed check
            measured, tol, passed = math.inf, 0.0, False
        res = CheckResult(name, bool(passed), measured, float(tol), time.perf_counter() - start)
        out.append(res)
        if echo:
            echo(res.line())
    return out
