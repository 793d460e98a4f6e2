# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels.

Signatures and semantics match ``wearauth._kernels_py`` exactly; see that
module for the reference behaviour.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, sqrt, fabs, pow, INFINITY, M_PI

cnp.import_array()


def fft_radix2(x):
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] arr = np.array(x, dtype=np.complex128)
    cdef Py_ssize_t n = arr.shape[0]
    if n == 0 or n & (n - 1):
        raise ValueError("fft length must be a power of two, got %d" % n)
    cdef double complex[::1] a = arr
    cdef Py_ssize_t i, j, k, bit, size, half, start
    cdef double complex t, u, w, wstep
    cdef double ang
    # bit-reversal permutation
    j = 0
    for i in range(1, n):
        bit = n >> 1
        while j & bit:
            j ^= bit
            bit >>= 1
        j |= bit
        if i < j:
            t = a[i]
            a[i] = a[j]
            a[j] = t
    # twiddles recomputed per stage from angle to match the numpy fallback
    cdef double complex[::1] tw = np.empty(n // 2 if n > 1 else 1, dtype=np.complex128)
    size = 2
    while size <= n:
        half = size // 2
        for k in range(half):
            ang = -2.0 * M_PI * k / size
            tw[k] = cos(ang) + 1j * sin(ang)
        for start in range(0, n, size):
            for k in range(half):
                u = a[start + k]
                t = a[start + k + half] * tw[k]
                a[start + k] = u + t
                a[start + k + half] = u - t
        size *= 2
    return arr


def minkowski_cdist(A, B, double p):
    cdef double[:, ::1] a = np.ascontiguousarray(A, dtype=np.float64)
    cdef double[:, ::1] b = np.ascontiguousarray(B, dtype=np.float64)
    cdef Py_ssize_t na = a.shape[0], nb = b.shape[0], d = a.shape[1]
    out_arr = np.empty((na, nb), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, k
    cdef double acc, diff, term
    cdef int mode, ip = 0, e
    if p == 1.0:
        mode = 1
    elif p == 2.0:
        mode = 2
    elif p == INFINITY:
        mode = 3
    elif p == <int>p and 2 < p <= 16:
        mode = 4  # integer order: repeated multiplication instead of pow
        ip = <int>p
    else:
        mode = 0
    with nogil:
        for i in range(na):
            for j in range(nb):
                acc = 0.0
                for k in range(d):
                    diff = fabs(a[i, k] - b[j, k])
                    if mode == 1:
                        acc = acc + diff
                    elif mode == 2:
                        acc = acc + diff * diff
                    elif mode == 3:
                        if diff > acc:
                            acc = diff
                    elif mode == 4:
                        term = diff
                        for e in range(ip - 1):
                            term = term * diff
                        acc = acc + term
                    else:
                        acc = acc + pow(diff, p)
                if mode == 2:
                    acc = sqrt(acc)
                elif mode == 0 or mode == 4:
                    acc = pow(acc, 1.0 / p)
                out[i, j] = acc
    return out_arr


def best_gini_split(X, y, idx, features, Py_ssize_t max_features):
    cdef double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef cnp.int64_t[::1] yy = np.ascontiguousarray(y, dtype=np.int64)
    cdef cnp.int64_t[::1] ii = np.ascontiguousarray(idx, dtype=np.int64)
    cdef cnp.int64_t[::1] ff = np.ascontiguousarray(features, dtype=np.int64)
    cdef Py_ssize_t n = ii.shape[0], nf = ff.shape[0]
    cdef Py_ssize_t q, r, f, best_f = -1, visited = 0, best_pos
    cdef double c0, c1 = 0.0, parent, left0, left1, right0, right1, nl, nr
    cdef double gl, gr, child, gain, best_here, best_gain = 0.0, best_t = 0.0, t
    vals_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] vals = vals_arr
    cdef double[::1] vs = np.empty(n, dtype=np.float64)
    cdef cnp.int64_t[::1] ys = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] order
    for r in range(n):
        c1 += yy[ii[r]]
    c0 = n - c1
    parent = 1.0 - (c0 * c0 + c1 * c1) / (<double>n * n)
    for q in range(nf):
        if visited >= max_features and best_f >= 0:
            break
        f = ff[q]
        for r in range(n):
            vals[r] = x[ii[r], f]
        order = np.argsort(vals_arr, kind="stable").astype(np.int64)
        for r in range(n):
            vs[r] = vals[order[r]]
            ys[r] = yy[ii[order[r]]]
        if vs[0] == vs[n - 1]:
            continue
        visited += 1
        left1 = 0.0
        best_here = -INFINITY
        best_pos = 0
        for r in range(n - 1):
            left1 = left1 + ys[r]
            if not (vs[r + 1] > vs[r]):
                continue
            nl = r + 1
            nr = n - nl
            left0 = nl - left1
            right1 = c1 - left1
            right0 = nr - right1
            gl = 1.0 - (left0 * left0 + left1 * left1) / (nl * nl)
            gr = 1.0 - (right0 * right0 + right1 * right1) / (nr * nr)
            child = (nl * gl + nr * gr) / n
            gain = parent - child
            if gain > best_here:
                best_here = gain
                best_pos = r
        if best_here > best_gain or best_f < 0:
            t = 0.5 * (vs[best_pos] + vs[best_pos + 1])
            if t >= vs[best_pos + 1]:
                t = vs[best_pos]
            best_f = f
            best_t = t
            best_gain = best_here
    return int(best_f), float(best_t), float(best_gain)


def smo_solve(K, y, double C, double tol, Py_ssize_t max_iter):
    cdef double[:, ::1] k = np.ascontiguousarray(K, dtype=np.float64)
    cdef double[::1] yy = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t n = yy.shape[0]
    alpha_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] alpha = alpha_arr
    cdef double[::1] G = -np.ones(n, dtype=np.float64)
    cdef Py_ssize_t it = 0, r, i, j
    cdef double s, s_up, s_low, b, a, t, ti, tj, hi, lo, acc, obj, best, bj = 0.0, aj = 1.0
    cdef bint up, low, converged = False
    cdef Py_ssize_t nfree
    with nogil:
        while it < max_iter:
            s_up = -INFINITY
            s_low = INFINITY
            i = 0
            for r in range(n):
                s = -yy[r] * G[r]
                if yy[r] > 0:
                    up = alpha[r] < C
                    low = alpha[r] > 0
                else:
                    up = alpha[r] > 0
                    low = alpha[r] < C
                if up and s > s_up:
                    s_up = s
                    i = r
                if low and s < s_low:
                    s_low = s
            if s_low == INFINITY or s_up - s_low < tol:
                converged = True
                break
            j = 0
            best = INFINITY
            for r in range(n):
                if yy[r] > 0:
                    low = alpha[r] > 0
                else:
                    low = alpha[r] < C
                if not low:
                    continue
                b = s_up - (-yy[r] * G[r])
                if not b > 0.0:
                    continue
                a = k[i, i] + k[r, r] - 2.0 * k[i, r]
                if not a > 0.0:
                    a = 1e-12
                obj = -(b * b) / a
                if obj < best:
                    best = obj
                    j = r
                    bj = b
                    aj = a
            b = bj
            a = aj
            t = b / a
            ti = C - alpha[i] if yy[i] > 0 else alpha[i]
            tj = alpha[j] if yy[j] > 0 else C - alpha[j]
            if ti < t:
                t = ti
            if tj < t:
                t = tj
            alpha[i] = min(max(alpha[i] + yy[i] * t, 0.0), C)
            alpha[j] = min(max(alpha[j] - yy[j] * t, 0.0), C)
            for r in range(n):
                G[r] = G[r] + yy[r] * t * (k[r, i] - k[r, j])
            it += 1
        acc = 0.0
        nfree = 0
        hi = -INFINITY
        lo = INFINITY
        for r in range(n):
            s = -yy[r] * G[r]
            if alpha[r] > 0 and alpha[r] < C:
                acc = acc + s
                nfree += 1
            if yy[r] > 0:
                up = alpha[r] < C
                low = alpha[r] > 0
            else:
                up = alpha[r] > 0
                low = alpha[r] < C
            if up and s > hi:
                hi = s
            if low and s < lo:
                lo = s
    if nfree > 0:
        bias = acc / nfree
    else:
        bias = 0.5 * ((hi if hi != -INFINITY else 0.0) + (lo if lo != INFINITY else 0.0))
    return alpha_arr, float(bias), int(it), bool(converged)
