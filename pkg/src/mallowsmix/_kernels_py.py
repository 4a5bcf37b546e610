"""Pure-numpy twins of the compiled kernels in ``_kernels.pyx``.

Outputs match the compiled versions exactly for integer weights (sample
counts); with fractional weights sums may differ in the last bit because
the accumulation order differs.
"""

import numpy as np


def _pick(cdf_row, u, m):
    # number of cumulative entries <= u among the first m - 1
    if m == 1:
        return np.zeros(len(u), dtype=np.intp)
    return np.searchsorted(cdf_row[: m - 1], u, side="right")


def insertion_sample(central, cdf, uniforms):
    central = np.asarray(central, dtype=np.int32)
    n = len(central)
    count = uniforms.shape[0]
    remaining = np.broadcast_to(central, (count, n)).copy()
    out = np.empty((count, n), dtype=np.int32)
    rows = np.arange(count)
    for t in range(n):
        m = n - t
        j = _pick(cdf[m], uniforms[:, t], m)
        out[:, t] = remaining[rows, j]
        keep = np.ones((count, m), dtype=bool)
        keep[rows, j] = False
        remaining = remaining[keep].reshape(count, m - 1)
    return out


def prepend_insert(orders, fresh, cdf, uniforms):
    orders = np.asarray(orders, dtype=np.int32)
    count, n = orders.shape
    cur = orders
    rows = np.arange(count)
    for r, e in enumerate(np.asarray(fresh, dtype=np.int32)):
        m = cur.shape[1] + 1
        j = _pick(cdf[m], uniforms[:, r], m)
        nxt = np.empty((count, m), dtype=np.int32)
        slot = np.arange(m)[None, :]
        src = np.where(slot > j[:, None], slot - 1, slot)
        src = np.clip(src, 0, m - 2)
        nxt[:] = np.take_along_axis(cur, src, axis=1)
        nxt[rows, j] = e
        cur = nxt
    return cur


def top_counts(orders, weights, n):
    orders = np.asarray(orders)
    weights = np.asarray(weights, dtype=np.float64)
    a = orders[:, 0].astype(np.int64)
    b = orders[:, 1].astype(np.int64)
    c = orders[:, 2].astype(np.int64)
    p1 = np.bincount(a, weights=weights, minlength=n)
    pair_keys = np.stack([a * n + b, b * n + a], axis=1).ravel()
    p2 = np.bincount(pair_keys, weights=np.repeat(weights, 2), minlength=n * n).reshape(n, n)
    trip = np.sort(np.stack([a, b, c], axis=1), axis=1)
    keys = (trip[:, 0] * n + trip[:, 1]) * n + trip[:, 2]
    order = np.argsort(keys, kind="stable")
    sorted_keys = keys[order]
    sorted_w = weights[order]
    uniq, start = np.unique(sorted_keys, return_index=True)
    vals = np.add.reduceat(sorted_w, start) if len(start) else np.zeros(0)
    return p1, p2, uniq, vals


def position_counts(orders, weights, n):
    orders = np.asarray(orders, dtype=np.int64)
    count, m = orders.shape
    keys = (orders * m + np.arange(m)[None, :]).ravel()
    w = np.repeat(np.asarray(weights, dtype=np.float64), m)
    return np.bincount(keys, weights=w, minlength=n * m).reshape(n, m)


def distances_to(orders, central_pos):
    r = np.asarray(central_pos)[np.asarray(orders)]
    count, n = r.shape
    d = np.zeros(count, dtype=np.int64)
    for p in range(n - 1):
        d += (r[:, p : p + 1] > r[:, p + 1 :]).sum(axis=1)
    return d


def precedence(orders, weights, n):
    orders = np.asarray(orders)
    count, m = orders.shape
    pos = np.full((count, n), m, dtype=np.int64)
    np.put_along_axis(pos, orders.astype(np.int64), np.arange(m)[None, :], axis=1)
    w = np.asarray(weights, dtype=np.float64)
    present = pos < m
    out = np.zeros((n, n))
    for a in range(n):
        ahead = (pos[:, a : a + 1] < pos) & present[:, a : a + 1] & present
        out[a] = w @ ahead
    out[np.arange(n), np.arange(n)] = 0.0
    return out


def lehmer_keys(orders, radix):
    orders = np.asarray(orders)
    count, n = orders.shape
    key = np.zeros(count, dtype=np.int64)
    for p in range(n - 1):
        c = (orders[:, p + 1 :] < orders[:, p : p + 1]).sum(axis=1)
        key += c * np.int64(radix[p])
    return key
