# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops.

Every function here has a twin in :mod:`nncmi._pykernels` with the same
signature and output contract; :mod:`nncmi.kernels` picks one at import.
Compiled without fast-math so that the XY sweep reproduces the fallback
bit for bit.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, exp, fmod, fabs
from libc.stdlib cimport qsort

cnp.import_array()

ctypedef cnp.int32_t i32
ctypedef cnp.int64_t i64
ctypedef cnp.uint8_t u8

cdef double TWO_PI = 6.283185307179586


cdef inline Py_ssize_t _ball_extent(const u8[:, ::1] brk, const i32[::1] length,
                                    Py_ssize_t i, Py_ssize_t h,
                                    Py_ssize_t* interior) noexcept nogil:
    # Positions [0, end) form the ball; [interior, end) is the shared
    # boundary tie group when end > h.
    cdef Py_ssize_t end = h
    cdef Py_ssize_t c = h - 1
    cdef Py_ssize_t ln = length[i]
    while end < ln and brk[i, end] == 0:
        end += 1
    if end == h:
        interior[0] = h
        return h
    while brk[i, c] == 0:
        c -= 1
    interior[0] = c
    return end


cdef inline double _boundary_weight(Py_ssize_t h, Py_ssize_t c, Py_ssize_t e,
                                    bint truncate) noexcept nogil:
    if e == c:
        return 1.0
    return 0.0 if truncate else (<double>(h - c)) / (e - c)


ctypedef cnp.uint64_t u64

# Membership tallies are packed into 16-bit fields of one 64-bit word so a
# single running sum counts several classes at once. A z code is 1 for an
# interior member and 1 << 16 for a boundary member; an x-z code shifts that
# by another 32 bits when the point is on the x boundary. Fields hold counts
# below 2**16, hence the limit on n.
MAX_PACKED_N = 65535
cdef u64 FIELD = 0xFFFF


cdef inline u64 _f(u64 v, int k) noexcept nogil:
    return (v >> (16 * k)) & FIELD


def ball_counts(const i32[:, ::1] rx, const u8[:, ::1] bx, const i32[::1] lx,
                const i32[:, ::1] ry, const u8[:, ::1] by, const i32[::1] ly,
                const i32[:, ::1] rz, const u8[:, ::1] bz, const i32[::1] lz,
                Py_ssize_t h, bint truncate,
                double[::1] out_xz, double[::1] out_yz, double[::1] out_xyz):
    """Weighted intersection sizes of the three balls around every seed.

    Members are tallied by membership class (interior or boundary) in each
    ball and the tallies are combined with the class weights in a fixed
    order, so the result does not depend on the order of members inside a
    tie group.
    """
    cdef Py_ssize_t n = lx.shape[0]
    if n > MAX_PACKED_N:
        raise ValueError(f"compiled counter supports n <= {MAX_PACKED_N}")
    cdef u64[::1] zc = np.zeros(n, dtype=np.uint64)
    cdef u64[::1] xzc = np.zeros(n, dtype=np.uint64)
    cdef double wx[3]
    cdef double wy[3]
    cdef double wz[3]
    cdef Py_ssize_t i, p, j, ez, ex, ey, cz, cx, cy
    cdef u64 v, xz, yz1, yz2, t1, t2
    cdef double s
    wx[1] = 1.0
    wy[1] = 1.0
    wz[1] = 1.0
    with nogil:
        for i in range(n):
            ez = _ball_extent(bz, lz, i, h, &cz)
            ex = _ball_extent(bx, lx, i, h, &cx)
            ey = _ball_extent(by, ly, i, h, &cy)
            for p in range(cz):
                zc[rz[i, p]] = 1
            for p in range(cz, ez):
                zc[rz[i, p]] = 1 << 16
            xz = 0
            for p in range(cx):
                j = rx[i, p]
                v = zc[j]
                xzc[j] = v
                xz += v
            for p in range(cx, ex):
                j = rx[i, p]
                v = zc[j] << 32
                xzc[j] = v
                xz += v
            yz1 = 0
            t1 = 0
            for p in range(cy):
                j = ry[i, p]
                yz1 += zc[j]
                t1 += xzc[j]
            yz2 = 0
            t2 = 0
            for p in range(cy, ey):
                j = ry[i, p]
                yz2 += zc[j]
                t2 += xzc[j]
            wx[2] = _boundary_weight(h, cx, ex, truncate)
            wy[2] = _boundary_weight(h, cy, ey, truncate)
            wz[2] = _boundary_weight(h, cz, ez, truncate)
            # fields of xz: (x1 z1, x1 z2, x2 z1, x2 z2)
            s = 0.0
            s += <double>_f(xz, 0) * (wx[1] * wz[1])
            s += <double>_f(xz, 1) * (wx[1] * wz[2])
            s += <double>_f(xz, 2) * (wx[2] * wz[1])
            s += <double>_f(xz, 3) * (wx[2] * wz[2])
            out_xz[i] = s
            s = 0.0
            s += <double>_f(yz1, 0) * (wy[1] * wz[1])
            s += <double>_f(yz1, 1) * (wy[1] * wz[2])
            s += <double>_f(yz2, 0) * (wy[2] * wz[1])
            s += <double>_f(yz2, 1) * (wy[2] * wz[2])
            out_yz[i] = s
            # x class outermost, then y class (which loop), then z class
            s = 0.0
            s += <double>_f(t1, 0) * ((wx[1] * wy[1]) * wz[1])
            s += <double>_f(t1, 1) * ((wx[1] * wy[1]) * wz[2])
            s += <double>_f(t2, 0) * ((wx[1] * wy[2]) * wz[1])
            s += <double>_f(t2, 1) * ((wx[1] * wy[2]) * wz[2])
            s += <double>_f(t1, 2) * ((wx[2] * wy[1]) * wz[1])
            s += <double>_f(t1, 3) * ((wx[2] * wy[1]) * wz[2])
            s += <double>_f(t2, 2) * ((wx[2] * wy[2]) * wz[1])
            s += <double>_f(t2, 3) * ((wx[2] * wy[2]) * wz[2])
            out_xyz[i] = s
            for p in range(ez):
                zc[rz[i, p]] = 0
            for p in range(ex):
                xzc[rx[i, p]] = 0


def ball_counts_pair(const i32[:, ::1] rx, const u8[:, ::1] bx, const i32[::1] lx,
                     const i32[:, ::1] ry, const u8[:, ::1] by, const i32[::1] ly,
                     Py_ssize_t h, bint truncate, double[::1] out_xy):
    cdef Py_ssize_t n = lx.shape[0]
    if n > MAX_PACKED_N:
        raise ValueError(f"compiled counter supports n <= {MAX_PACKED_N}")
    cdef u64[::1] xc = np.zeros(n, dtype=np.uint64)
    cdef double wx[3]
    cdef double wy[3]
    cdef Py_ssize_t i, p, ex, ey, cx, cy
    cdef u64 y1, y2
    cdef double s
    wx[1] = 1.0
    wy[1] = 1.0
    with nogil:
        for i in range(n):
            ex = _ball_extent(bx, lx, i, h, &cx)
            ey = _ball_extent(by, ly, i, h, &cy)
            for p in range(cx):
                xc[rx[i, p]] = 1
            for p in range(cx, ex):
                xc[rx[i, p]] = 1 << 16
            y1 = 0
            y2 = 0
            for p in range(cy):
                y1 += xc[ry[i, p]]
            for p in range(cy, ey):
                y2 += xc[ry[i, p]]
            wx[2] = _boundary_weight(h, cx, ex, truncate)
            wy[2] = _boundary_weight(h, cy, ey, truncate)
            s = 0.0
            s += <double>_f(y1, 0) * (wx[1] * wy[1])
            s += <double>_f(y2, 0) * (wx[1] * wy[2])
            s += <double>_f(y1, 1) * (wx[2] * wy[1])
            s += <double>_f(y2, 1) * (wx[2] * wy[2])
            out_xy[i] = s
            for p in range(ex):
                xc[rx[i, p]] = 0


def hypergeom_bias(Py_ssize_t h, const i64[::1] a, const i64[::1] b,
                   const double[::1] logs, double[::1] out):
    """Per-seed expected log term under the urn model.

    ``logs[k] == log(k)`` for ``1 <= k <= h``. The pmf is walked outward
    from its mode by the term ratio and normalised at the end, so no
    factorials are formed.
    """
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t i, k, lo, hi, mode
    cdef Py_ssize_t N = h - 1
    cdef Py_ssize_t K, m
    cdef double w, tot, s
    with nogil:
        for i in range(n):
            K = a[i] - 1
            m = b[i] - 1
            lo = m + K - N
            if lo < 0:
                lo = 0
            hi = K if K < m else m
            if lo == hi:
                s = logs[lo + 1]
            else:
                mode = ((m + 1) * (K + 1)) // (N + 2)
                if mode < lo:
                    mode = lo
                if mode > hi:
                    mode = hi
                s = logs[mode + 1]
                tot = 1.0
                w = 1.0
                k = mode
                while k > lo:
                    w *= (<double>k * (N - K - m + k)) / ((<double>(K - k + 1)) * (m - k + 1))
                    if w == 0.0:
                        break
                    tot += w
                    s += w * logs[k]
                    k -= 1
                w = 1.0
                k = mode
                while k < hi:
                    w *= (<double>(K - k) * (m - k)) / ((<double>(k + 1)) * (N - K - m + k + 1))
                    if w == 0.0:
                        break
                    tot += w
                    s += w * logs[k + 2]
                    k += 1
                s = s / tot
            out[i] = s + logs[h] - logs[a[i]] - logs[b[i]]


cdef int _cmp_i32(const void* a, const void* b) noexcept nogil:
    cdef i32 x = (<const i32*>a)[0]
    cdef i32 y = (<const i32*>b)[0]
    return (x > y) - (x < y)


def sort_tie_groups(i32[:, ::1] rows, const u8[:, ::1] brk, const i32[::1] length):
    """Put every tie group of every row in ascending index order, in place."""
    cdef Py_ssize_t n = rows.shape[0]
    cdef Py_ssize_t i, p, start, ln
    with nogil:
        for i in range(n):
            ln = length[i]
            start = 0
            for p in range(1, ln + 1):
                if p == ln or brk[i, p]:
                    if p - start > 1:
                        qsort(&rows[i, start], p - start, sizeof(i32), _cmp_i32)
                    start = p


def neighbour_rows_1d(const double[::1] xs, const i32[::1] perm, bint circular,
                      Py_ssize_t max_h, i32[:, ::1] rows, u8[:, ::1] brk,
                      i32[::1] length, u8[::1] bad):
    """Merge outward from each seed along sorted 1-D values.

    ``xs`` is sorted and ``perm[s]`` is the original index at sorted
    position ``s``. Rows whose merge would exceed the output width, or
    whose merged distances are not non-decreasing, are flagged in ``bad``
    and left for the caller to rebuild.
    """
    cdef Py_ssize_t n = xs.shape[0]
    cdef Py_ssize_t cap = rows.shape[1]
    cdef Py_ssize_t s, i, pos, nl, nr, li, ri
    cdef double x0, dl, dr, d, last, t
    cdef bint has_l, has_r, take_left
    with nogil:
        for s in range(n):
            i = perm[s]
            x0 = xs[s]
            rows[i, 0] = <i32>i
            brk[i, 0] = 1
            pos = 1
            last = -1.0
            nl = 0
            nr = 0
            bad[i] = 0
            while nl + nr < n - 1:
                if circular:
                    has_l = True
                    has_r = True
                    li = (s - 1 - nl + n) % n
                    ri = (s + 1 + nr) % n
                else:
                    li = s - 1 - nl
                    ri = s + 1 + nr
                    has_l = li >= 0
                    has_r = ri < n
                dl = 0.0
                dr = 0.0
                if has_l:
                    dl = fabs(xs[li] - x0)
                    if circular:
                        t = TWO_PI - dl
                        if t < dl:
                            dl = t
                if has_r:
                    dr = fabs(xs[ri] - x0)
                    if circular:
                        t = TWO_PI - dr
                        if t < dr:
                            dr = t
                take_left = has_l and (not has_r or dl <= dr)
                d = dl if take_left else dr
                if pos >= max_h and d != last:
                    break
                if pos >= cap:
                    bad[i] = 1
                    break
                if d < last:
                    bad[i] = 1
                rows[i, pos] = perm[li] if take_left else perm[ri]
                brk[i, pos] = 1 if d != last else 0
                last = d
                pos += 1
                if take_left:
                    nl += 1
                else:
                    nr += 1
            length[i] = <i32>pos
            while pos < cap:
                rows[i, pos] = -1
                brk[i, pos] = 1
                pos += 1


def xy_sweeps(double[::1] angles, Py_ssize_t L, Py_ssize_t causal,
              double J, double T,
              const double[::1] walk, const double[:, ::1] proposals,
              const double[:, ::1] uniforms, const i32[:, ::1] order,
              const i64[::1] record, double[:, ::1] out, i64[::1] accepted):
    """Run ``walk.shape[0]`` Metropolis sweeps in place.

    Sweep ``t``: the causal site (if ``causal >= 0``) moves by ``walk[t]``,
    then sites are visited in ``order[t]`` (or ``order[0]`` when only one
    row is given) with sequential in-place updates. Angles of the sites in
    ``record`` are written to ``out[t]`` after the sweep.
    """
    cdef Py_ssize_t B = walk.shape[0]
    cdef Py_ssize_t N = L * L
    cdef Py_ssize_t t, q, x, r, c, nb, orow, k
    cdef Py_ssize_t nbr[4]
    cdef double th, thp, dH, a
    cdef i64 acc
    with nogil:
        for t in range(B):
            if causal >= 0:
                a = fmod(angles[causal] + walk[t], TWO_PI)
                if a < 0.0:
                    a += TWO_PI
                    if a >= TWO_PI:  # -tiny + 2*pi can round up to 2*pi
                        a = 0.0
                angles[causal] = a
            orow = t if order.shape[0] > 1 else 0
            acc = 0
            for q in range(N):
                x = order[orow, q]
                if x == causal:
                    continue
                r = x // L
                c = x % L
                nbr[0] = ((r + L - 1) % L) * L + c
                nbr[1] = ((r + 1) % L) * L + c
                nbr[2] = r * L + (c + L - 1) % L
                nbr[3] = r * L + (c + 1) % L
                th = angles[x]
                thp = fmod(th + proposals[t, x], TWO_PI)
                if thp < 0.0:
                    thp += TWO_PI
                    if thp >= TWO_PI:  # -tiny + 2*pi can round up to 2*pi
                        thp = 0.0
                dH = 0.0
                for k in range(4):
                    nb = nbr[k]
                    dH += cos(thp - angles[nb]) - cos(th - angles[nb])
                dH = -2.0 * J * dH
                if dH < 0.0 or uniforms[t, x] < exp(-dH / T):
                    angles[x] = thp
                    acc += 1
            accepted[t] = acc
            for k in range(record.shape[0]):
                out[t, k] = angles[record[k]]

