"""Pure-Python twins of the compiled kernels in ``_kernels.pyx``.

Same signatures, same in-place outputs. Used when the extension is not
built or when ``NNCMI_PURE_PYTHON`` is set.
"""
import math

import numpy as np
from scipy.special import gammaln

TWO_PI = 2.0 * math.pi


def _ball_extent(brk_row, length, h):
    end = h
    while end < length and not brk_row[end]:
        end += 1
    if end == h:
        return h, h
    c = h - 1
    while not brk_row[c]:
        c -= 1
    return end, c


def _classes(row, brk_row, length, h, truncate):
    """Members of one ball, their class (1 interior, 2 boundary) and the class weights."""
    end, c = _ball_extent(brk_row, length, h)
    cls = np.ones(end, dtype=np.int64)
    cls[c:] = 2
    edge = 1.0 if end == c else 0.0 if truncate else (h - c) / (end - c)
    return row[:end], cls, (0.0, 1.0, edge)


def ball_counts(rx, bx, lx, ry, by, ly, rz, bz, lz, h, truncate,
                out_xz, out_yz, out_xyz):
    n = lx.shape[0]
    mz = np.zeros(n, dtype=np.int64)
    mx = np.zeros(n, dtype=np.int64)
    for i in range(n):
        jz, cz, wz = _classes(rz[i], bz[i], lz[i], h, truncate)
        jx, cx, wx = _classes(rx[i], bx[i], lx[i], h, truncate)
        jy, cy, wy = _classes(ry[i], by[i], ly[i], h, truncate)
        mz[jz] = cz
        mx[jx] = cx
        nxz = np.bincount(cx * 3 + mz[jx], minlength=9).tolist()
        nyz = np.bincount(cy * 3 + mz[jy], minlength=9).tolist()
        nxyz = np.bincount((mx[jy] * 3 + cy) * 3 + mz[jy], minlength=27).tolist()
        s = 0.0
        for a in (1, 2):
            for c in (1, 2):
                s += nxz[a * 3 + c] * (wx[a] * wz[c])
        out_xz[i] = s
        s = 0.0
        for b in (1, 2):
            for c in (1, 2):
                s += nyz[b * 3 + c] * (wy[b] * wz[c])
        out_yz[i] = s
        s = 0.0
        for a in (1, 2):
            for b in (1, 2):
                for c in (1, 2):
                    s += nxyz[(a * 3 + b) * 3 + c] * ((wx[a] * wy[b]) * wz[c])
        out_xyz[i] = s
        mz[jz] = 0
        mx[jx] = 0


def ball_counts_pair(rx, bx, lx, ry, by, ly, h, truncate, out_xy):
    n = lx.shape[0]
    mx = np.zeros(n, dtype=np.int64)
    for i in range(n):
        jx, cx, wx = _classes(rx[i], bx[i], lx[i], h, truncate)
        jy, cy, wy = _classes(ry[i], by[i], ly[i], h, truncate)
        mx[jx] = cx
        nxy = np.bincount(mx[jy] * 3 + cy, minlength=9).tolist()
        s = 0.0
        for a in (1, 2):
            for b in (1, 2):
                s += nxy[a * 3 + b] * (wx[a] * wy[b])
        out_xy[i] = s
        mx[jx] = 0


def hypergeom_bias(h, a, b, logs, out):
    # Evaluated once per distinct (a, b) pair on log-gamma pmfs.
    pairs, inverse = np.unique(np.stack([a, b], axis=1), axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    values = np.empty(len(pairs))
    for q, (ai, bi) in enumerate(pairs.tolist()):
        lo = max(1, ai + bi - h)
        hi = min(ai, bi)
        r = np.arange(lo, hi + 1)
        logp = (gammaln(ai) - gammaln(r) - gammaln(ai - r + 1)
                + gammaln(h - ai + 1) - gammaln(bi - r + 1) - gammaln(h - ai - bi + r + 1)
                - gammaln(h) + gammaln(bi) + gammaln(h - bi + 1))
        p = np.exp(logp - logp.max())
        values[q] = float(np.dot(p, logs[r]) / p.sum()) + logs[h] - logs[ai] - logs[bi]
    out[:] = values[inverse]


def sort_tie_groups(rows, brk, length):
    # entries past ``length`` are padding, each flagged as its own group
    tied = np.flatnonzero((brk[:, 1:] == 0).any(axis=1))
    if tied.size == 0:
        return
    sub_rows = rows[tied]
    gid = np.cumsum(brk[tied], axis=1)
    order = np.lexsort((sub_rows, gid), axis=-1)
    rows[tied] = np.take_along_axis(sub_rows, order, axis=1)


def xy_sweeps(angles, L, causal, J, T, walk, proposals, uniforms, order,
              record, out, accepted):
    N = L * L
    theta = angles.tolist()
    cos = math.cos
    for t in range(walk.shape[0]):
        if causal >= 0:
            a = math.fmod(theta[causal] + float(walk[t]), TWO_PI)
            if a < 0.0:
                a += TWO_PI
                if a >= TWO_PI:
                    a = 0.0
            theta[causal] = a
        sites = order[t if order.shape[0] > 1 else 0].tolist()
        prop = proposals[t].tolist()
        unif = uniforms[t].tolist()
        acc = 0
        for x in sites:
            if x == causal:
                continue
            r, c = divmod(x, L)
            nbr = (((r + L - 1) % L) * L + c, ((r + 1) % L) * L + c,
                   r * L + (c + L - 1) % L, r * L + (c + 1) % L)
            th = theta[x]
            thp = math.fmod(th + prop[x], TWO_PI)
            if thp < 0.0:
                thp += TWO_PI
                if thp >= TWO_PI:
                    thp = 0.0
            dH = 0.0
            for nb in nbr:
                dH += cos(thp - theta[nb]) - cos(th - theta[nb])
            dH = -2.0 * J * dH
            if dH < 0.0 or unif[x] < math.exp(-dH / T):
                theta[x] = thp
                acc += 1
        accepted[t] = acc
        for k, site in enumerate(record.tolist()):
            out[t, k] = theta[site]
    angles[:] = theta
