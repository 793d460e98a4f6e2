"""Pure numpy implementations of the hot kernels.

This module mirrors ``wearauth._kernels`` (Cython) function for function and
is used whenever the compiled extension is unavailable.
"""
import numpy as np


def fft_radix2(x):
    """Iterative radix-2 decimation-in-time FFT.

    Parameters
    ----------
    x : array_like of complex
        Input of length ``2**m``.

    Returns
    -------
    numpy.ndarray
        Complex128 spectrum of the same length.
    """
    a = np.array(x, dtype=np.complex128)
    n = a.shape[0]
    if n == 0 or n & (n - 1):
        raise ValueError("fft length must be a power of two, got %d" % n)
    if n == 1:
        return a
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    a = a[rev]
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(-2j * np.pi * np.arange(half) / size)
        blocks = a.reshape(-1, size)
        even = blocks[:, :half].copy()
        odd = blocks[:, half:] * tw
        blocks[:, :half] = even + odd
        blocks[:, half:] = even - odd
        size *= 2
    return a


def minkowski_cdist(A, B, p):
    """Pairwise Minkowski-``p`` distances between rows of ``A`` and ``B``."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    out = np.empty((A.shape[0], B.shape[0]))
    # bound the (rows, nB, d) temporary to a few MB
    step = max(1, 500_000 // max(1, B.shape[0] * max(1, A.shape[1])))
    for s in range(0, A.shape[0], step):
        diff = np.abs(A[s:s + step, None, :] - B[None, :, :])
        if p == 1:
            out[s:s + step] = diff.sum(axis=2)
        elif p == 2:
            out[s:s + step] = np.sqrt((diff * diff).sum(axis=2))
        elif np.isinf(p):
            out[s:s + step] = diff.max(axis=2)
        else:
            out[s:s + step] = (diff ** p).sum(axis=2) ** (1.0 / p)
    return out


def best_gini_split(X, y, idx, features, max_features):
    """Find the Gini-optimal axis-aligned split of one tree node.

    Features are visited in the given order; constant features are skipped
    and do not count toward ``max_features``.

    Returns
    -------
    (int, float, float)
        ``(feature, threshold, decrease)`` where ``decrease`` is the parent
        Gini minus the size-weighted child Gini. ``feature`` is -1 when no
        valid split exists.
    """
    y_node = y[idx]
    n = idx.shape[0]
    c1 = float(y_node.sum())
    c0 = n - c1
    parent = 1.0 - (c0 * c0 + c1 * c1) / (n * n)
    best_f, best_t, best_gain = -1, 0.0, 0.0
    visited = 0
    for f in features:
        if visited >= max_features and best_f >= 0:
            break
        v = X[idx, f]
        order = np.argsort(v, kind="stable")
        vs = v[order]
        if vs[0] == vs[-1]:
            continue
        visited += 1
        ys = y_node[order]
        left1 = np.cumsum(ys)[:-1].astype(np.float64)
        nl = np.arange(1, n, dtype=np.float64)
        nr = n - nl
        left0 = nl - left1
        right1 = c1 - left1
        right0 = nr - right1
        gl = 1.0 - (left0 * left0 + left1 * left1) / (nl * nl)
        gr = 1.0 - (right0 * right0 + right1 * right1) / (nr * nr)
        child = (nl * gl + nr * gr) / n
        valid = vs[1:] > vs[:-1]
        gain = np.where(valid, parent - child, -np.inf)
        i = int(np.argmax(gain))
        g = gain[i]
        if g > best_gain or best_f < 0:
            t = 0.5 * (vs[i] + vs[i + 1])
            if t >= vs[i + 1]:
                t = vs[i]
            best_f, best_t, best_gain = int(f), float(t), float(g)
    return best_f, best_t, best_gain


def smo_solve(K, y, C, tol, max_iter):
    """SMO for the C-SVC dual with second-order working-set selection.

    Minimizes ``0.5 a'Qa - sum(a)`` with ``Q = yy' * K``, ``0 <= a <= C``,
    ``y'a = 0``, stopping once the KKT gap drops below ``tol``. The first
    index is the maximal violator; the second maximizes the guaranteed
    decrease of the objective (Fan, Chen and Lin, 2005).

    Returns
    -------
    (numpy.ndarray, float, int, bool)
        Dual coefficients, bias, iterations used, converged flag.
    """
    K = np.asarray(K, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)
    pos = y > 0
    diag = np.diag(K).copy()
    converged = False
    it = 0
    while it < max_iter:
        up = np.where(pos, alpha < C, alpha > 0)
        low = np.where(pos, alpha > 0, alpha < C)
        score = -y * G
        s_up = np.where(up, score, -np.inf)
        i = int(np.argmax(s_up))
        if not low.any() or s_up[i] - score[low].min() < tol:
            converged = True
            break
        b = s_up[i] - score
        a = diag[i] + diag - 2.0 * K[i]
        a = np.where(a > 0.0, a, 1e-12)
        obj = np.where(low & (b > 0.0), -(b * b) / a, np.inf)
        j = int(np.argmin(obj))
        b = b[j]
        a = a[j]
        t = b / a
        ti = C - alpha[i] if y[i] > 0 else alpha[i]
        tj = alpha[j] if y[j] > 0 else C - alpha[j]
        if ti < t:
            t = ti
        if tj < t:
            t = tj
        alpha[i] = min(max(alpha[i] + y[i] * t, 0.0), C)
        alpha[j] = min(max(alpha[j] - y[j] * t, 0.0), C)
        G += y * t * (K[:, i] - K[:, j])
        it += 1
    score = -y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        bias = float(score[free].mean())
    else:
        up = np.where(pos, alpha < C, alpha > 0)
        low = np.where(pos, alpha > 0, alpha < C)
        hi = score[up].max() if up.any() else 0.0
        lo = score[low].min() if low.any() else 0.0
        bias = 0.5 * float(hi + lo)
    return alpha, bias, it, converged
