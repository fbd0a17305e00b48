"""Compiled inner loops.

Everything here works in mollifier-scaled coordinates (velocities divided by
epsilon) so the mollifier exponent is simply ``sqrt(1 + |x|^2)``.  Nothing is
compiled with ``fastmath``: the particle path and the arbitrary-point path of
the lattice sweep must produce the same bits.  Two-dimensional inputs take an
unrolled branch, which is about twice as fast as the generic loops.
"""

import numpy as np
from numba import njit

# below this the plain sum is redone with a max-shift
_TINY = 1e-280
_COINCIDENT = 1e-300


@njit(cache=True)
def _log_mix(tot, sig, logm):
    if tot > _TINY:
        return np.log(tot)
    amax = -np.inf
    for j in range(sig.shape[0]):
        a = logm[j] - sig[j]
        if a > amax:
            amax = a
    acc = 0.0
    for j in range(sig.shape[0]):
        acc += np.exp(logm[j] - sig[j] - amax)
    return amax + np.log(acc)


@njit(cache=True)
def log_mixture(U, P, m, logm):
    """log sum_j m_j exp(-<u - p_j>) for every row u of U."""
    M = U.shape[0]
    N, d = P.shape
    out = np.empty(M)
    sig = np.empty(N)
    for k in range(M):
        tot = 0.0
        for j in range(N):
            r2 = 0.0
            for c in range(d):
                x = P[j, c] - U[k, c]
                r2 += x * x
            s = np.sqrt(1.0 + r2)
            sig[j] = s
            tot += m[j] * np.exp(-s)
        out[k] = _log_mix(tot, sig, logm)
    return out


@njit(cache=True)
def _lattice_pass_2d(U, nw, P, m, logm, shift, X, reuse):
    M = U.shape[0]
    N = P.shape[0]
    T = X.shape[0]
    logmix = np.empty(M)
    acc = np.zeros((T, 2))
    sig = np.empty(N)
    ex = np.empty(N)
    px = P[:, 0].copy()
    py = P[:, 1].copy()
    qx = X[:, 0].copy()
    qy = X[:, 1].copy()
    for k in range(M):
        ux = U[k, 0]
        uy = U[k, 1]
        tot = 0.0
        for j in range(N):
            x = px[j] - ux
            y = py[j] - uy
            s = np.sqrt(1.0 + (x * x + y * y))
            e = np.exp(-s)
            sig[j] = s
            ex[j] = e
            tot += m[j] * e
        L = _log_mix(tot, sig, logm)
        logmix[k] = L
        c0 = (L + shift) * nw[k]
        if reuse:
            for t in range(T):
                f = c0 * ex[t] / sig[t]
                acc[t, 0] += f * (qx[t] - ux)
                acc[t, 1] += f * (qy[t] - uy)
        else:
            for t in range(T):
                x = qx[t] - ux
                y = qy[t] - uy
                s = np.sqrt(1.0 + (x * x + y * y))
                f = c0 * np.exp(-s) / s
                acc[t, 0] += f * (qx[t] - ux)
                acc[t, 1] += f * (qy[t] - uy)
    return logmix, acc


@njit(cache=True)
def _lattice_pass_nd(U, nw, P, m, logm, shift, X, reuse):
    M = U.shape[0]
    N, d = P.shape
    T = X.shape[0]
    logmix = np.empty(M)
    acc = np.zeros((T, d))
    sig = np.empty(N)
    ex = np.empty(N)
    for k in range(M):
        tot = 0.0
        for j in range(N):
            r2 = 0.0
            for c in range(d):
                x = P[j, c] - U[k, c]
                r2 += x * x
            s = np.sqrt(1.0 + r2)
            e = np.exp(-s)
            sig[j] = s
            ex[j] = e
            tot += m[j] * e
        L = _log_mix(tot, sig, logm)
        logmix[k] = L
        c0 = (L + shift) * nw[k]
        if reuse:
            for t in range(T):
                f = c0 * ex[t] / sig[t]
                for c in range(d):
                    acc[t, c] += f * (X[t, c] - U[k, c])
        else:
            for t in range(T):
                r2 = 0.0
                for c in range(d):
                    x = X[t, c] - U[k, c]
                    r2 += x * x
                s = np.sqrt(1.0 + r2)
                f = c0 * np.exp(-s) / s
                for c in range(d):
                    acc[t, c] += f * (X[t, c] - U[k, c])
    return logmix, acc


def lattice_pass(U, nw, P, m, logm, shift, X, reuse):
    """One sweep over lattice nodes U with relative node weights nw.

    Returns the log-mixture at every node and, for every target row of X,
    ``sum_k nw_k (logmix_k + shift) * exp(-s_tk) / s_tk * (x_t - u_k)`` with
    ``s_tk = <x_t - u_k>``.  When ``reuse`` is set X must be P and the
    exponentials of the density pass are recycled.
    """
    if P.shape[1] == 2:
        return _lattice_pass_2d(U, nw, P, m, logm, shift, X, reuse)
    return _lattice_pass_nd(U, nw, P, m, logm, shift, X, reuse)


@njit(cache=True)
def _unit(dv, n):
    # |dv| and dv/|dv| without underflow for tiny separations
    d = dv.shape[0]
    r2 = 0.0
    for c in range(d):
        r2 += dv[c] * dv[c]
    if r2 > 1e-200:
        r = np.sqrt(r2)
        for c in range(d):
            n[c] = dv[c] / r
        return r
    a = 0.0
    for c in range(d):
        if abs(dv[c]) > a:
            a = abs(dv[c])
    if a == 0.0:
        return 0.0
    q = 0.0
    for c in range(d):
        n[c] = dv[c] / a
        q += n[c] * n[c]
    q = np.sqrt(q)
    for c in range(d):
        n[c] /= q
    return a * q


@njit(cache=True)
def _pref(r, expo):
    if expo == 2.0:
        return r * r
    if expo == 0.0:
        return 1.0
    return r**expo


@njit(cache=True)
def pair_velocity(P, S, m, expo):
    """Symmetric pairwise accumulation of U_i = sum_j m_j K(v_i, v_j).

    Also returns the dissipation sum_{i<j} m_i m_j r^expo |Pi (s_i - s_j)|^2.
    Pairs are visited in fixed (i < j) lexicographic order.
    """
    N, d = P.shape
    U = np.zeros((N, d))
    diss = 0.0
    dv = np.empty(d)
    n = np.empty(d)
    pk = np.empty(d)
    for i in range(N):
        for j in range(i + 1, N):
            for c in range(d):
                dv[c] = P[i, c] - P[j, c]
            r = _unit(dv, n)
            if r <= _COINCIDENT:
                continue
            nb = 0.0
            for c in range(d):
                nb += n[c] * (S[i, c] - S[j, c])
            pref = _pref(r, expo)
            kn2 = 0.0
            for c in range(d):
                pk[c] = (S[i, c] - S[j, c]) - nb * n[c]
                kn2 += pk[c] * pk[c]
            for c in range(d):
                k = -pref * pk[c]
                U[i, c] += m[j] * k
                U[j, c] -= m[i] * k
            diss += m[i] * m[j] * pref * kn2
    return U, diss


@njit(cache=True)
def point_velocity(X, SX, P, S, m, expo):
    """U at arbitrary points X whose scores are SX, against the particles."""
    T, d = X.shape
    N = P.shape[0]
    U = np.zeros((T, d))
    dv = np.empty(d)
    n = np.empty(d)
    for t in range(T):
        for j in range(N):
            for c in range(d):
                dv[c] = X[t, c] - P[j, c]
            r = _unit(dv, n)
            if r <= _COINCIDENT:
                continue
            nb = 0.0
            for c in range(d):
                nb += n[c] * (SX[t, c] - S[j, c])
            pref = _pref(r, expo)
            for c in range(d):
                U[t, c] -= m[j] * pref * ((SX[t, c] - S[j, c]) - nb * n[c])
    return U


@njit(cache=True)
def min_pair_distance(P):
    N, d = P.shape
    best = np.inf
    for i in range(N):
        for j in range(i + 1, N):
            r2 = 0.0
            for c in range(d):
                x = P[i, c] - P[j, c]
                r2 += x * x
            if r2 < best:
                best = r2
    return np.sqrt(best)
