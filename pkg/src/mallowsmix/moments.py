"""Top-position statistics: empirical tallies and closed forms.

``p1[i]`` is the chance element ``i`` is ranked first, ``p2[i, j]`` the
chance ``{i, j}`` fills the top two slots, ``p3`` the same for the top
three.  Under a two-component mixture these are rank-1/rank-2 tensors in
the components' representative vectors, which is what the tensor stage
exploits.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .mallows import representative_vector, z_single
from .mixture import MallowsMixture

DENSE_LIMIT = 32
_MAGIC = b"MMXMOM\x00\x01"
_VERSION = 1


def c2(phi: float, n: int) -> float:
    if n < 2:
        raise ValueError("c2 needs n >= 2")
    return z_single(n, phi) / z_single(n - 1, phi) * (1.0 + phi) / phi


def c3(phi: float, n: int) -> float:
    if n < 3:
        raise ValueError("c3 needs n >= 3")
    zn = z_single(n, phi)
    return (zn * zn / (z_single(n - 1, phi) * z_single(n - 2, phi))
            * (1.0 + 2.0 * phi + 2.0 * phi**2 + phi**3) / phi**3)


@dataclass
class MomentStats:
    """First/second/third-order top-set frequencies.

    Third-order values are held either as a dense symmetric array
    (``n <= 32``), as sorted sparse keys ``i*n*n + j*n + k`` with
    ``i < j < k``, or as rank-2 factors for closed forms.  ``block``
    hides the difference.
    """

    n: int
    p1: np.ndarray
    p2: np.ndarray
    p3: np.ndarray | None = None
    p3_keys: np.ndarray | None = None
    p3_vals: np.ndarray | None = None
    sample_count: int | str = "exact"
    factors: tuple | None = field(default=None, repr=False)

    @property
    def is_exact(self) -> bool:
        return self.sample_count == "exact"

    def triple(self, i: int, j: int, k: int) -> float:
        if len({i, j, k}) < 3:
            return 0.0
        if self.p3 is not None:
            return float(self.p3[i, j, k])
        if self.factors is not None:
            return float(self.block([i], [j], [k])[0, 0, 0])
        a, b, c = sorted((i, j, k))
        key = (a * self.n + b) * self.n + c
        idx = np.searchsorted(self.p3_keys, key)
        if idx < len(self.p3_keys) and self.p3_keys[idx] == key:
            return float(self.p3_vals[idx])
        return 0.0

    def block(self, rows, cols, tubes) -> np.ndarray:
        """``p3`` restricted to ``rows x cols x tubes`` (index lists)."""
        rows, cols, tubes = (np.asarray(x, dtype=np.int64) for x in (rows, cols, tubes))
        if self.p3 is not None:
            return self.p3[np.ix_(rows, cols, tubes)].copy()
        if self.factors is not None:
            out = np.zeros((len(rows), len(cols), len(tubes)))
            for weight, vec in self.factors:
                out += weight * np.einsum("i,j,k->ijk", vec[rows], vec[cols], vec[tubes])
            same = (rows[:, None, None] == cols[None, :, None]) | (rows[:, None, None] == tubes[None, None, :]) \
                | (cols[None, :, None] == tubes[None, None, :])
            out[same] = 0.0
            return out
        if self.p3_keys is None:
            raise ValueError("third-order statistics were not materialised")
        grid = np.stack(np.meshgrid(rows, cols, tubes, indexing="ij"), axis=-1)
        srt = np.sort(grid, axis=-1)
        keys = (srt[..., 0] * self.n + srt[..., 1]) * self.n + srt[..., 2]
        idx = np.clip(np.searchsorted(self.p3_keys, keys), 0, max(len(self.p3_keys) - 1, 0))
        out = np.zeros(keys.shape)
        if len(self.p3_keys):
            hit = self.p3_keys[idx] == keys
            out[hit] = self.p3_vals[idx[hit]]
        distinct = (srt[..., 0] != srt[..., 1]) & (srt[..., 1] != srt[..., 2])
        out[~distinct] = 0.0
        return out

    def dense_p3(self) -> np.ndarray:
        idx = np.arange(self.n)
        return self.block(idx, idx, idx)


def _dense_from_sparse(n, keys, vals):
    p3 = np.zeros((n, n, n))
    i, rem = np.divmod(keys, n * n)
    j, k = np.divmod(rem, n)
    for a, b, c in ((i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)):
        p3[a, b, c] = vals
    return p3


def tally(orders: np.ndarray, weights: np.ndarray | None = None, n: int | None = None,
          exact: bool = False, dense: bool | None = None) -> MomentStats:
    """Top-set frequencies of weighted rankings (weights are counts or probabilities)."""
    orders = np.ascontiguousarray(orders, dtype=np.int32)
    if orders.ndim != 2 or orders.shape[0] == 0:
        raise ValueError("need a non-empty (N, n) array of rankings")
    if n is None:
        n = orders.shape[1]
    if n < 3 or orders.shape[1] < 3:
        raise ValueError("third-order statistics need n >= 3")
    if weights is None:
        weights = np.ones(len(orders))
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    p1, p2, keys, vals = kernels.top_counts(orders, weights, n)
    total = float(weights.sum())
    p1 = p1 / total
    p2 = p2 / total
    vals = vals / total
    if dense is None:
        dense = n <= DENSE_LIMIT
    count = "exact" if exact else int(round(total))
    if dense:
        return MomentStats(n, p1, p2, p3=_dense_from_sparse(n, keys, vals), sample_count=count)
    return MomentStats(n, p1, p2, p3_keys=keys, p3_vals=vals, sample_count=count)


def estimate_from_samples(samples) -> MomentStats:
    """Empirical ``P_i``, ``P_ij``, ``P_ijk`` from rankings.

    Accepts an ``(N, n)`` array, a list of permutations or a
    :class:`~mallowsmix.rankings.RankingSample`.
    """
    from .rankings import RankingSample

    if isinstance(samples, RankingSample):
        return samples.moments()
    if not isinstance(samples, np.ndarray):
        from .permutations import orders_array

        samples = orders_array(samples)
    return tally(samples)


def closed_form(mix: MallowsMixture, dense: bool | None = None) -> MomentStats:
    """Exact statistics of a mixture from its representative vectors."""
    n = mix.n
    if n < 3:
        raise ValueError("closed form needs n >= 3")
    x = representative_vector(mix.m1)
    y = representative_vector(mix.m2)
    p1 = mix.w1 * x + mix.w2 * y
    a2 = mix.w1 * c2(mix.m1.phi, n)
    b2 = mix.w2 * c2(mix.m2.phi, n)
    p2 = a2 * np.outer(x, x) + b2 * np.outer(y, y)
    np.fill_diagonal(p2, 0.0)
    factors = ((mix.w1 * c3(mix.m1.phi, n), x), (mix.w2 * c3(mix.m2.phi, n), y))
    stats = MomentStats(n, p1, p2, sample_count="exact", factors=factors)
    if dense is None:
        dense = n <= DENSE_LIMIT
    if dense:
        stats.p3 = stats.dense_p3()
        stats.factors = None
    return stats


# -- binary cache -----------------------------------------------------------

def file_digest(path, chunk: int = 1 << 20) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        while block := fh.read(chunk):
            h.update(block)
    return h.hexdigest()


def cache_path(cache_dir, digest: str, mode: str) -> Path:
    return Path(cache_dir) / f"{digest[:32]}.{mode}.mom"


def save_moments(stats: MomentStats, path) -> None:
    """Versioned little-endian dump with an 8-byte magic header."""
    n = stats.n
    sparse = stats.p3 is None
    if sparse and stats.p3_keys is None:
        raise ValueError("only tallied statistics can be cached")
    count = 0 if stats.is_exact else int(stats.sample_count)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIIQ", _VERSION, n, int(sparse), count))
        fh.write(np.asarray(stats.p1, dtype="<f8").tobytes())
        fh.write(np.asarray(stats.p2, dtype="<f8").tobytes())
        if sparse:
            fh.write(struct.pack("<Q", len(stats.p3_keys)))
            fh.write(np.asarray(stats.p3_keys, dtype="<i8").tobytes())
            fh.write(np.asarray(stats.p3_vals, dtype="<f8").tobytes())
        else:
            fh.write(np.asarray(stats.p3, dtype="<f8").tobytes())


def load_moments(path) -> MomentStats:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != _MAGIC:
        raise ValueError(f"{path}: not a moment cache file")
    version, n, sparse, count = struct.unpack_from("<IIIQ", data, 8)
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported cache version {version}")
    off = 8 + struct.calcsize("<IIIQ")

    def take(dtype, size):
        nonlocal off
        arr = np.frombuffer(data, dtype=dtype, count=size, offset=off).copy()
        off += arr.nbytes
        return arr

    p1 = take("<f8", n)
    p2 = take("<f8", n * n).reshape(n, n)
    sample_count = "exact" if count == 0 else int(count)
    if sparse:
        (m,) = struct.unpack_from("<Q", data, off)
        off += 8
        keys = take("<i8", m)
        vals = take("<f8", m)
        return MomentStats(n, p1, p2, p3_keys=keys, p3_vals=vals, sample_count=sample_count)
    p3 = take("<f8", n * n * n).reshape(n, n, n)
    return MomentStats(n, p1, p2, p3=p3, sample_count=sample_count)
