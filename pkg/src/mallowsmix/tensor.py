"""Random 3-partitions, cross-partition moment tensors and rank-2 decomposition."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .moments import MomentStats

PINV_RTOL = 1e-10
MAX_CONTRACTION_DRAWS = 8
COMPLEX_TOL = 0.1


@dataclass(frozen=True)
class Partition3:
    sa: np.ndarray
    sb: np.ndarray
    sc: np.ndarray

    def __post_init__(self):
        parts = [np.asarray(s, dtype=np.int64) for s in (self.sa, self.sb, self.sc)]
        allidx = np.concatenate(parts)
        if len(np.unique(allidx)) != len(allidx):
            raise ValueError("partition parts overlap")
        for name, s in zip(("sa", "sb", "sc"), parts):
            object.__setattr__(self, name, s)

    @property
    def parts(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.sa, self.sb, self.sc

    @property
    def n(self) -> int:
        return sum(len(s) for s in self.parts)


def random_partition(n: int, rng: np.random.Generator) -> Partition3:
    """Assign each index to one of three parts uniformly; redraw if a part is empty."""
    if n < 3:
        raise ValueError("need n >= 3")
    while True:
        lab = rng.integers(0, 3, size=n)
        if np.all(np.bincount(lab, minlength=3) > 0):
            idx = np.arange(n)
            return Partition3(idx[lab == 0], idx[lab == 1], idx[lab == 2])


@dataclass(frozen=True)
class MomentTensor3:
    t: np.ndarray
    part: Partition3

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.t.shape


def build_tensor(stats: MomentStats, part: Partition3) -> MomentTensor3:
    if part.n > stats.n or max(int(s.max()) for s in part.parts) >= stats.n:
        raise ValueError("partition indexes elements the statistics do not cover")
    return MomentTensor3(stats.block(*part.parts), part)


def sigma2(m: np.ndarray) -> float:
    """Second singular value of an ``(r, 2)`` matrix via its 2x2 Gram matrix."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[1] != 2 or m.shape[0] < 2:
        raise ValueError("need a matrix with >= 2 rows and exactly 2 columns")
    a = float(m[:, 0] @ m[:, 0])
    b = float(m[:, 0] @ m[:, 1])
    c = float(m[:, 1] @ m[:, 1])
    half_tr = 0.5 * (a + c)
    disc = math.sqrt(max(0.25 * (a - c) ** 2 + b * b, 0.0))
    lam_min = half_tr - disc
    # the subtraction cancels badly for nearly parallel columns
    if half_tr + disc > 0:
        lam_min = max(lam_min, (a * c - b * b) / (half_tr + disc))
    return math.sqrt(max(lam_min, 0.0))


@dataclass
class Rank2Decomp:
    """``t ~ ua (x) ub (x) uc + va (x) vb (x) vc``."""

    ua: np.ndarray
    ub: np.ndarray
    uc: np.ndarray
    va: np.ndarray
    vb: np.ndarray
    vc: np.ndarray
    residual: float
    degenerate: bool = False
    reason: str = ""
    part: Partition3 | None = field(default=None, repr=False)
    unfolding_s2: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def factor(self, mode: int) -> np.ndarray:
        """``(|S|, 2)`` matrix ``[u ; v]`` for mode 0, 1 or 2."""
        u = (self.ua, self.ub, self.uc)[mode]
        v = (self.va, self.vb, self.vc)[mode]
        return np.column_stack([u, v])

    def sigma2s(self) -> tuple[float, float, float]:
        return tuple(sigma2(self.factor(k)) if self.factor(k).shape[0] >= 2 else 0.0 for k in range(3))

    def reconstruct(self) -> np.ndarray:
        return (np.einsum("i,j,k->ijk", self.ua, self.ub, self.uc)
                + np.einsum("i,j,k->ijk", self.va, self.vb, self.vc))


def _balance(a, b, c):
    """Equal norms inside one rank-1 term, signs pushed to nonnegative sums."""
    na, nb, nc = (np.linalg.norm(x) for x in (a, b, c))
    scale = na * nb * nc
    if scale == 0.0:
        z = np.zeros
        return z(len(a)), z(len(b)), z(len(c))
    s = scale ** (1.0 / 3.0)
    a, b, c = a * (s / na), b * (s / nb), c * (s / nc)
    neg = [k for k, x in enumerate((a, b, c)) if x.sum() < 0]
    vecs = [a, b, c]
    # flipping two factors keeps the term; an odd count leaves one negative
    while len(neg) >= 2:
        i, j = neg.pop(), neg.pop()
        vecs[i], vecs[j] = -vecs[i], -vecs[j]
    if len(neg) == 1:
        k = neg[0]
        others = [x for x in range(3) if x != k]
        # flip the negative one and the other with the smallest |sum|
        j = min(others, key=lambda x: abs(vecs[x].sum()))
        if abs(vecs[j].sum()) < abs(vecs[k].sum()):
            vecs[k], vecs[j] = -vecs[k], -vecs[j]
    return tuple(vecs)


def _top2(mat):
    u, s, _ = np.linalg.svd(mat, full_matrices=False)
    return u[:, :2], s


def _degenerate(t, part, reason, spectra=(0.0, 0.0, 0.0)):
    z = [np.zeros(d) for d in t.shape]
    return Rank2Decomp(z[0], z[1], z[2], z[0].copy(), z[1].copy(), z[2].copy(),
                       residual=float(np.linalg.norm(t)), degenerate=True, reason=reason, part=part,
                       unfolding_s2=spectra)


def unfolding_s2(t: np.ndarray) -> tuple[float, float, float]:
    """Second singular value of each mode unfolding (0 for a mode of size 1)."""
    out = []
    for mode in range(3):
        mat = np.moveaxis(t, mode, 0).reshape(t.shape[mode], -1)
        s = np.linalg.svd(mat, compute_uv=False)
        out.append(float(s[1]) if len(s) > 1 else 0.0)
    return tuple(out)


def _solve_c(t, a_fac, b_fac):
    A, B, C = t.shape
    kr = np.einsum("ir,jr->ijr", a_fac, b_fac).reshape(A * B, 2)
    coef, *_ = np.linalg.lstsq(kr, t.reshape(A * B, C), rcond=None)
    return coef.T  # (C, 2)


def decompose_rank2(t, rng: np.random.Generator) -> Rank2Decomp:
    """Jennrich-style simultaneous diagonalisation of a rank-2 3-tensor.

    Two random contractions of the third mode, projected onto the top-2
    singular subspaces of the first two unfoldings, give a 2x2
    eigenproblem whose eigenvectors are the mode-a factors (and, from the
    transposed product, mode-b).  Mode-c follows by least squares.
    """
    part = t.part if isinstance(t, MomentTensor3) else None
    t = np.asarray(t.t if isinstance(t, MomentTensor3) else t, dtype=np.float64)
    A, B, C = t.shape
    if A < 2 or B < 2:
        raise ValueError("first two modes need at least 2 indices")
    spectra = unfolding_s2(t)
    if C < 2:
        return _degenerate(t, part, "third mode has a single index", spectra)
    ua, sa = _top2(t.reshape(A, B * C))
    ub, sb = _top2(t.transpose(1, 0, 2).reshape(B, A * C))
    if sa[0] == 0.0:
        return _degenerate(t, part, "zero tensor", spectra)
    if sa[1] <= PINV_RTOL * sa[0] or sb[1] <= PINV_RTOL * sb[0]:
        return _degenerate(t, part, "unfolding has rank < 2", spectra)
    core = np.einsum("ia,ijk,jb->abk", ua, t, ub)  # 2 x 2 x C

    best = None
    for _ in range(MAX_CONTRACTION_DRAWS):
        w1 = rng.standard_normal(C)
        w2 = rng.standard_normal(C)
        w1 /= np.linalg.norm(w1)
        w2 /= np.linalg.norm(w2)
        m1 = core @ w1
        m2 = core @ w2
        s2 = np.linalg.svd(m2, compute_uv=False)
        if s2[-1] <= PINV_RTOL * s2[0]:
            continue
        inv2 = np.linalg.inv(m2)
        lam_a, vec_a = np.linalg.eig(m1 @ inv2)
        lam_b, vec_b = np.linalg.eig((inv2 @ m1).T)
        spread = abs(lam_a[0] - lam_a[1]) / max(abs(lam_a[0]), abs(lam_a[1]), 1e-300)
        if best is None or spread > best[0]:
            best = (spread, lam_a, vec_a, lam_b, vec_b)
        if spread > 0.05 and np.all(np.abs(lam_a.imag) <= 1e-12 * np.abs(lam_a.real) + 1e-300):
            break
    if best is None:
        return _degenerate(t, part, "contracted slices are singular", spectra)
    _, lam_a, vec_a, lam_b, vec_b = best
    if np.any(np.abs(lam_a.imag) > COMPLEX_TOL * np.abs(lam_a.real)):
        return _degenerate(t, part, "complex eigenvalues", spectra)
    if abs(lam_a[0] - lam_a[1]) <= 1e-12 * max(abs(lam_a[0]), abs(lam_a[1])):
        return _degenerate(t, part, "repeated eigenvalues", spectra)
    lam_a, vec_a, lam_b, vec_b = lam_a.real, vec_a.real, lam_b.real, vec_b.real
    # pair mode-b eigenvectors with mode-a ones by eigenvalue
    if abs(lam_a[0] - lam_b[0]) + abs(lam_a[1] - lam_b[1]) > abs(lam_a[0] - lam_b[1]) + abs(lam_a[1] - lam_b[0]):
        vec_b = vec_b[:, ::-1]
    fa = ua @ vec_a
    fb = ub @ vec_b
    fc = _solve_c(t, fa, fb)
    terms = [_balance(fa[:, r], fb[:, r], fc[:, r]) for r in range(2)]
    (a0, b0, c0), (a1, b1, c1) = terms
    out = Rank2Decomp(a0, b0, c0, a1, b1, c1, residual=0.0, part=part, unfolding_s2=spectra)
    out.residual = float(np.linalg.norm(t - out.reconstruct()))
    return out
