"""Hot numeric kernels: convolution, pooling, seeded forest growth.

Every kernel has two builds with identical semantics:

* ``*_numba`` -- plain loops compiled with ``@njit`` (the default path),
* ``*_numpy`` -- a vectorized numpy implementation.

The public wrappers (``conv_bank``, ``pool_map``, ``grow_forest``) dispatch on
:data:`flimsod.accel.NUMBA_ENABLED`.  All arithmetic is float64; loop order is
fixed (window rows outer, window columns inner, channels innermost) so both
builds agree with the naive reference loops used in the tests.

Convolution and pooling use zero padding; average pooling divides by the
number of in-domain pixels in the window.  Pooling windows are anchored at
``(row*stride, col*stride)`` and extend ``window-1`` pixels down/right.
"""

import heapq

import numpy as np

from .accel import NUMBA_ENABLED, jit

POOL_MAX = 0
POOL_AVG = 1


def _out_len(n: int, stride: int) -> int:
    return -(-n // stride)


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def _conv_bank_loops(data, kernels, biases, k, d, stride):
    h, w, m = data.shape
    n = kernels.shape[0]
    r = d * (k // 2)
    ho = (h + stride - 1) // stride
    wo = (w + stride - 1) // stride
    out = np.empty((ho, wo, n), dtype=np.float64)
    patch = np.empty(k * k * m, dtype=np.float64)
    for oy in range(ho):
        y = oy * stride
        for ox in range(wo):
            x = ox * stride
            idx = 0
            for dy in range(-r, r + 1, d):
                yy = y + dy
                for dx in range(-r, r + 1, d):
                    xx = x + dx
                    if 0 <= yy < h and 0 <= xx < w:
                        for c in range(m):
                            patch[idx] = data[yy, xx, c]
                            idx += 1
                    else:
                        for c in range(m):
                            patch[idx] = 0.0
                            idx += 1
            for i in range(n):
                acc = 0.0
                for j in range(k * k * m):
                    acc += patch[j] * kernels[i, j]
                out[oy, ox, i] = acc + biases[i]
    return out


_conv_bank_numba = jit()(_conv_bank_loops)


def _conv_bank_numpy(data, kernels, biases, k, d, stride):
    h, w, m = data.shape
    r = d * (k // 2)
    ho = _out_len(h, stride)
    wo = _out_len(w, stride)
    ys = np.arange(ho) * stride
    xs = np.arange(wo) * stride
    offsets = [(dy, dx) for dy in range(-r, r + 1, d) for dx in range(-r, r + 1, d)]
    # chunk output rows so the gathered patch matrix stays modest
    rows_per_chunk = max(1, int(4_000_000 // max(1, wo * k * k * m)))
    out = np.empty((ho, wo, kernels.shape[0]), dtype=np.float64)
    for y0 in range(0, ho, rows_per_chunk):
        rows = ys[y0 : y0 + rows_per_chunk]
        cols = np.empty((rows.size, wo, k * k, m), dtype=np.float64)
        for oi, (dy, dx) in enumerate(offsets):
            yy = rows[:, None] + dy
            xx = xs[None, :] + dx
            valid = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
            vals = data[np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1), :]
            cols[:, :, oi, :] = np.where(valid[..., None], vals, 0.0)
        mat = cols.reshape(rows.size * wo, k * k * m)
        res = mat @ kernels.T + biases
        out[y0 : y0 + rows.size] = res.reshape(rows.size, wo, kernels.shape[0])
    return out


def conv_bank(data, kernels, biases, k, d, stride):
    """Convolve an (H, W, m) map with a bank of flattened (n, k*k*m) kernels."""
    data = np.ascontiguousarray(data, dtype=np.float64)
    kernels = np.ascontiguousarray(kernels, dtype=np.float64)
    biases = np.ascontiguousarray(biases, dtype=np.float64)
    if NUMBA_ENABLED:
        return _conv_bank_numba(data, kernels, biases, k, d, stride)
    return _conv_bank_numpy(data, kernels, biases, k, d, stride)


# ---------------------------------------------------------------------------
# pooling
# ---------------------------------------------------------------------------

def _pool_loops(data, window, stride, kind):
    h, w, m = data.shape
    ho = (h + stride - 1) // stride
    wo = (w + stride - 1) // stride
    out = np.empty((ho, wo, m), dtype=np.float64)
    for oy in range(ho):
        y0 = oy * stride
        for ox in range(wo):
            x0 = ox * stride
            for c in range(m):
                if kind == 0:
                    best = -np.inf
                    for wy in range(window):
                        yy = y0 + wy
                        for wx in range(window):
                            xx = x0 + wx
                            if yy < h and xx < w:
                                v = data[yy, xx, c]
                            else:
                                v = 0.0  # zero padding
                            if v > best:
                                best = v
                    out[oy, ox, c] = best
                else:
                    acc = 0.0
                    cnt = 0
                    for wy in range(window):
                        yy = y0 + wy
                        for wx in range(window):
                            xx = x0 + wx
                            if yy < h and xx < w:
                                acc += data[yy, xx, c]
                                cnt += 1
                    out[oy, ox, c] = acc / cnt
    return out


_pool_numba = jit()(_pool_loops)


def _pool_numpy(data, window, stride, kind):
    h, w, m = data.shape
    ho = _out_len(h, stride)
    wo = _out_len(w, stride)
    pad_h = (ho - 1) * stride + window
    pad_w = (wo - 1) * stride + window
    padded = np.zeros((pad_h, pad_w, m), dtype=np.float64)
    padded[:h, :w] = data
    if kind == POOL_MAX:
        # the zero pad participates exactly where a window leaves the domain
        acc = np.full((ho, wo, m), -np.inf)
        for wy in range(window):
            for wx in range(window):
                acc = np.maximum(acc, padded[wy : wy + ho * stride : stride,
                                             wx : wx + wo * stride : stride])
        return acc
    acc = np.zeros((ho, wo, m), dtype=np.float64)
    for wy in range(window):
        for wx in range(window):
            acc += padded[wy : wy + ho * stride : stride, wx : wx + wo * stride : stride]
    cnt_y = np.minimum(np.arange(ho) * stride + window, h) - np.arange(ho) * stride
    cnt_x = np.minimum(np.arange(wo) * stride + window, w) - np.arange(wo) * stride
    counts = cnt_y[:, None] * cnt_x[None, :]
    return acc / counts[:, :, None]


def pool_map(data, window, stride, kind):
    """Max (kind=0) or average (kind=1) pooling over (H, W, m)."""
    data = np.ascontiguousarray(data, dtype=np.float64)
    if NUMBA_ENABLED:
        return _pool_numba(data, window, stride, kind)
    return _pool_numpy(data, window, stride, kind)


# ---------------------------------------------------------------------------
# seeded optimum-path forest with per-tree running mean colors
# ---------------------------------------------------------------------------
#
# Trees root at each seed pixel and compete for the image under 8-adjacency.
# The arc cost into q from the tree owning p is the Euclidean distance between
# the color of q and the tree's running mean color; the path cost is the max
# arc cost along the path.  Pops are ordered by (cost, insertion counter), so
# equal costs resolve FIFO.  A tree's mean updates when a pixel is finalized.
#
# The python build uses heapq; the numba build uses an explicit binary heap
# with the same (cost, counter) order, so both produce identical forests.

_NEIGH = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


def _grow_forest_python(colors, seed_idx, seed_labels):
    h, w, m = colors.shape
    n = h * w
    flat = colors.reshape(n, m)
    cost = np.full(n, np.inf)
    root = np.full(n, -1, dtype=np.int64)
    done = np.zeros(n, dtype=bool)
    tree_sum = np.zeros((seed_idx.size, m))
    tree_cnt = np.zeros(seed_idx.size, dtype=np.int64)

    heap = []
    counter = 0
    for si in range(seed_idx.size):
        p = int(seed_idx[si])
        cost[p] = 0.0
        root[p] = si
        heapq.heappush(heap, (0.0, counter, p))
        counter += 1

    while heap:
        c, _, p = heapq.heappop(heap)
        if done[p]:
            continue
        done[p] = True
        r = root[p]
        tree_sum[r] += flat[p]
        tree_cnt[r] += 1
        mean = tree_sum[r] / tree_cnt[r]
        py, px = divmod(p, w)
        for dy, dx in _NEIGH:
            qy = py + dy
            qx = px + dx
            if 0 <= qy < h and 0 <= qx < w:
                q = qy * w + qx
                if done[q]:
                    continue
                dist2 = 0.0
                for ci in range(m):  # sequential sum, matches the numba build
                    dv = flat[q, ci] - mean[ci]
                    dist2 += dv * dv
                cand = max(cost[p], np.sqrt(dist2))
                if cand < cost[q]:
                    cost[q] = cand
                    root[q] = root[p]
                    heapq.heappush(heap, (cand, counter, q))
                    counter += 1
    labels = np.where(root >= 0, seed_labels[root], 0)
    return labels.reshape(h, w), cost.reshape(h, w)


def _grow_forest_loops(colors, seed_idx, seed_labels):
    h, w, m = colors.shape
    n = h * w
    flat = colors.reshape(n, m)
    cost = np.full(n, np.inf)
    root = np.full(n, -1, dtype=np.int64)
    done = np.zeros(n, dtype=np.bool_)
    tree_sum = np.zeros((seed_idx.size, m))
    tree_cnt = np.zeros(seed_idx.size, dtype=np.int64)

    cap = 4 * n + 16
    hk = np.empty(cap, dtype=np.float64)   # heap keys: path cost
    hc = np.empty(cap, dtype=np.int64)     # insertion counters (FIFO ties)
    hp = np.empty(cap, dtype=np.int64)     # pixel indices
    size = 0
    counter = 0

    for si in range(seed_idx.size):
        p = seed_idx[si]
        cost[p] = 0.0
        root[p] = si
        hk[size] = 0.0
        hc[size] = counter
        hp[size] = p
        counter += 1
        size += 1
        i = size - 1
        while i > 0:
            parent = (i - 1) // 2
            if hk[i] < hk[parent] or (hk[i] == hk[parent] and hc[i] < hc[parent]):
                hk[i], hk[parent] = hk[parent], hk[i]
                hc[i], hc[parent] = hc[parent], hc[i]
                hp[i], hp[parent] = hp[parent], hp[i]
                i = parent
            else:
                break

    dys = np.array([-1, -1, -1, 0, 0, 1, 1, 1], dtype=np.int64)
    dxs = np.array([-1, 0, 1, -1, 1, -1, 0, 1], dtype=np.int64)

    while size > 0:
        top_k = hk[0]
        p = hp[0]
        size -= 1
        hk[0] = hk[size]
        hc[0] = hc[size]
        hp[0] = hp[size]
        i = 0
        while True:
            l = 2 * i + 1
            rch = l + 1
            smallest = i
            if l < size and (hk[l] < hk[smallest] or (hk[l] == hk[smallest] and hc[l] < hc[smallest])):
                smallest = l
            if rch < size and (hk[rch] < hk[smallest] or (hk[rch] == hk[smallest] and hc[rch] < hc[smallest])):
                smallest = rch
            if smallest == i:
                break
            hk[i], hk[smallest] = hk[smallest], hk[i]
            hc[i], hc[smallest] = hc[smallest], hc[i]
            hp[i], hp[smallest] = hp[smallest], hp[i]
            i = smallest

        if done[p]:
            continue
        done[p] = True
        r = root[p]
        for ci in range(m):
            tree_sum[r, ci] += flat[p, ci]
        tree_cnt[r] += 1
        py = p // w
        px = p - py * w
        for ni in range(8):
            qy = py + dys[ni]
            qx = px + dxs[ni]
            if 0 <= qy < h and 0 <= qx < w:
                q = qy * w + qx
                if done[q]:
                    continue
                dist2 = 0.0
                for ci in range(m):
                    dv = flat[q, ci] - tree_sum[r, ci] / tree_cnt[r]
                    dist2 += dv * dv
                cand = np.sqrt(dist2)
                if top_k > cand:
                    cand = top_k
                if cand < cost[q]:
                    cost[q] = cand
                    root[q] = r
                    if size >= cap:
                        new_cap = cap * 2
                        nhk = np.empty(new_cap, dtype=np.float64)
                        nhc = np.empty(new_cap, dtype=np.int64)
                        nhp = np.empty(new_cap, dtype=np.int64)
                        nhk[:size] = hk[:size]
                        nhc[:size] = hc[:size]
                        nhp[:size] = hp[:size]
                        hk, hc, hp, cap = nhk, nhc, nhp, new_cap
                    hk[size] = cand
                    hc[size] = counter
                    hp[size] = q
                    counter += 1
                    size += 1
                    i = size - 1
                    while i > 0:
                        parent = (i - 1) // 2
                        if hk[i] < hk[parent] or (hk[i] == hk[parent] and hc[i] < hc[parent]):
                            hk[i], hk[parent] = hk[parent], hk[i]
                            hc[i], hc[parent] = hc[parent], hc[i]
                            hp[i], hp[parent] = hp[parent], hp[i]
                            i = parent
                        else:
                            break

    labels = np.zeros(n, dtype=np.int64)
    for p in range(n):
        if root[p] >= 0:
            labels[p] = seed_labels[root[p]]
    return labels.reshape(h, w), cost.reshape(h, w)


_grow_forest_numba = jit()(_grow_forest_loops)


def grow_forest(colors, seed_idx, seed_labels):
    """Grow competing trees from seed pixels; returns (label map, cost map).

    ``seed_idx`` holds linear pixel indices, ``seed_labels`` the per-seed
    class (1 = object, 2 = background).  Unreached pixels (only possible with
    no seeds) keep label 0.
    """
    colors = np.ascontiguousarray(colors, dtype=np.float64)
    seed_idx = np.ascontiguousarray(seed_idx, dtype=np.int64)
    seed_labels = np.ascontiguousarray(seed_labels, dtype=np.int64)
    if NUMBA_ENABLED:
        return _grow_forest_numba(colors, seed_idx, seed_labels)
    return _grow_forest_python(colors, seed_idx, seed_labels)
