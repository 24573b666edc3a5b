"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``.

Every function performs the same floating-point operations in the same
order as its compiled twin, so both backends give bit-identical results.
"""
import numpy as np


def element_positions(cycle, indptr, indices, n):
    cycle = np.asarray(cycle, dtype=np.int64)
    slots = np.flatnonzero(cycle >= 0)
    tests = cycle[slots]
    sizes = indptr[tests + 1] - indptr[tests]
    flat_slots = np.repeat(slots, sizes)
    starts = np.repeat(indptr[tests], sizes)
    offsets = np.arange(flat_slots.size) - np.repeat(np.cumsum(sizes) - sizes, sizes)
    elems = indices[starts + offsets]
    order = np.argsort(elems, kind="stable")
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(elems, minlength=n), out=ptr[1:])
    return ptr, flat_slots[order].astype(np.int64)


def deterministic_profile(cycle, indptr, indices, weights):
    n = weights.shape[0]
    N = len(cycle)
    ptr, slots = element_positions(cycle, indptr, indices, n)
    mt = np.empty(n)
    tsum = np.empty(n)
    ee = np.zeros(N)
    me = np.zeros(N)
    t = np.arange(N)
    for e in range(n):
        pos = slots[ptr[e]:ptr[e + 1]]
        if pos.size == 0:
            mt[e] = tsum[e] = np.inf
            ee += np.inf
            me[:] = np.inf
            continue
        gaps = np.diff(pos, prepend=pos[-1] - N)
        mt[e] = float(gaps.max())
        tsum[e] = float(int((gaps * (gaps + 1) // 2).sum()))
        k = np.searchsorted(pos, t)
        nxt = np.where(k < pos.size, pos[np.minimum(k, pos.size - 1)], pos[0] + N)
        v = weights[e] * (nxt - t + 1).astype(float)
        ee += v
        np.maximum(me, v, out=me)
    return mt, tsum, ee, me


def accumulate_row(row, w, ee, me):
    v = w * row
    ee += v
    np.maximum(me, v, out=me)
    rsum = 0.0
    for x in row.tolist():
        rsum += x
    return float(row.max()), rsum


def probabilistic_row(pi):
    pi = np.asarray(pi, dtype=float).tolist()
    N = len(pi)
    rho = 1.0
    acc = 0.0
    for k, p in enumerate(pi):
        acc += (k + 1) * (p * rho)
        rho *= 1.0 - p
    if rho >= 1.0:
        return np.full(N, np.inf)
    out = np.empty(N)
    nxt = (acc + rho * N) / (1.0 - rho)
    for t in range(N - 1, -1, -1):
        nxt = 1.0 + (1.0 - pi[t]) * nxt
        out[t] = nxt
    return out


_pad_cache = {}


def _padded(indptr, indices):
    key = (id(indptr), id(indices))
    hit = _pad_cache.get(key)
    if hit is not None and hit[0] is indptr and hit[1] is indices:
        return hit[2]
    sizes = np.diff(indptr)
    m = sizes.size
    width = int(sizes.max()) if m else 0
    pad = np.full((m, width), -1, dtype=np.int64)
    for i in range(m):
        pad[i, : sizes[i]] = indices[indptr[i]:indptr[i + 1]]
    if len(_pad_cache) > 32:
        _pad_cache.clear()
    _pad_cache[key] = (indptr, indices, pad)
    return pad


def kt_best(indptr, indices, weights, x):
    pad = _padded(indptr, indices)
    xf = x.astype(float)
    # trailing 0.0 absorbs padding; adding +0.0 never changes a partial sum
    contrib = np.append(weights * xf * xf, 0.0)
    scores = np.zeros(pad.shape[0])
    for col in range(pad.shape[1]):
        scores += contrib[pad[:, col]]
    best = int(np.argmax(scores))
    return best if scores[best] > 0.0 else -1
