"""Hot round-loop kernels: numba-jitted with a pure-numpy fallback.

Set DPDA_NO_NUMBA=1 to force the numpy path.  Both paths implement the
same per-round update; the jitted loop exists to strip Python overhead
from Monte-Carlo sweeps and is benchmarked in benchmarks/bench_engines.py.
"""

import os

import numpy as np

NUMBA_ENV = "DPDA_NO_NUMBA"

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f
        if args and callable(args[0]):
            return args[0]
        return wrap


def numba_enabled():
    return HAS_NUMBA and os.environ.get(NUMBA_ENV, "") != "1"


# loss family codes shared with losses.FAMILY_CODES
_LS, _HINGE, _LOGISTIC = 0, 1, 2
_BOX, _BALL = 0, 1


@njit(cache=True)
def _grad_at(family, feats, labels, y, batch_norm):
    m, d = feats.shape
    g = np.zeros(d)
    for h in range(m):
        mg = 0.0
        for c in range(d):
            mg += feats[h, c] * y[c]
        if family == _LS:
            coef = -2.0 * (labels[h] - mg)
        elif family == _HINGE:
            coef = -labels[h] if labels[h] * mg < 1.0 else 0.0
        else:
            bm = labels[h] * mg
            if bm > 700.0:
                bm = 700.0
            coef = -labels[h] / (1.0 + np.exp(bm))
        for c in range(d):
            g[c] += coef * feats[h, c]
    if batch_norm:
        g /= m
    return g


@njit(cache=True)
def _project(v, set_kind, lo, hi, radius):
    d = v.shape[0]
    out = np.empty(d)
    if set_kind == _BOX:
        for c in range(d):
            x = v[c]
            if x < lo[c]:
                x = lo[c]
            elif x > hi[c]:
                x = hi[c]
            out[c] = x
    else:
        nrm = 0.0
        for c in range(d):
            nrm += v[c] * v[c]
        nrm = np.sqrt(nrm)
        scale = radius / nrm if nrm > radius else 1.0
        for c in range(d):
            out[c] = v[c] * scale
    return out


@njit(cache=True)
def _consensus_sq(Zlike):
    n, d = Zlike.shape
    zbar = np.zeros(d)
    for i in range(n):
        zbar += Zlike[i]
    zbar /= n
    err = np.zeros(n)
    for i in range(n):
        s = 0.0
        for c in range(d):
            dv = Zlike[i, c] - zbar[c]
            s += dv * dv
        err[i] = s
    return err


@njit(cache=True)
def run_c_rounds(Wseq, rowsums, feats, labels, family, batch_norm,
                 eta, xi, starts, alphas, set_kind, lo, hi, radius):
    T, n, d = eta.shape
    Z = np.zeros((n, d))
    Y = np.empty((n, d))
    zero = np.zeros(d)
    y0 = _project(zero, set_kind, lo, hi, radius)
    for i in range(n):
        Y[i] = y0
    x_hist = np.empty((T + 1, d))
    cons = np.empty((T, n))
    for i in range(n):
        x_hist[0, starts[i]:starts[i + 1]] = Y[i, starts[i]:starts[i + 1]]
    P = Wseq.shape[0]
    for t in range(T):
        cons[t] = _consensus_sq(Z)
        H = Z + eta[t]
        W = Wseq[t % P]
        rs = rowsums[t % P]
        Znew = H + np.dot(W, H)
        for i in range(n):
            for c in range(d):
                Znew[i, c] -= rs[i] * H[i, c]
        for i in range(n):
            g = _grad_at(family, feats[t], labels[t], Y[i], batch_norm)
            for c in range(starts[i], starts[i + 1]):
                Znew[i, c] += n * (g[c] + xi[t, i, c])
        for i in range(n):
            Y[i] = _project(-alphas[t] * Znew[i], set_kind, lo, hi, radius)
        Z = Znew
        for i in range(n):
            x_hist[t + 1, starts[i]:starts[i + 1]] = Y[i, starts[i]:starts[i + 1]]
    return x_hist, cons


@njit(cache=True)
def run_ps_rounds(Aseq, feats, labels, family, batch_norm,
                  eta, xi, starts, alphas, set_kind, lo, hi, radius):
    T, n, d = eta.shape
    Z = np.zeros((n, d))
    w = np.ones(n)
    Y = np.empty((n, d))
    zero = np.zeros(d)
    y0 = _project(zero, set_kind, lo, hi, radius)
    for i in range(n):
        Y[i] = y0
    x_hist = np.empty((T + 1, d))
    cons = np.empty((T, n))
    w_hist = np.empty((T + 1, n))
    w_hist[0] = w
    for i in range(n):
        x_hist[0, starts[i]:starts[i + 1]] = Y[i, starts[i]:starts[i + 1]]
    P = Aseq.shape[0]
    ratio = np.zeros((n, d))
    for t in range(T):
        for i in range(n):
            ratio[i] = Z[i] / w[i]
        cons[t] = _consensus_sq_vs_mean(ratio, Z)
        H = Z + eta[t]
        A = Aseq[t % P]
        Znew = np.dot(A, H)
        for i in range(n):
            g = _grad_at(family, feats[t], labels[t], Y[i], batch_norm)
            for c in range(starts[i], starts[i + 1]):
                Znew[i, c] += n * (g[c] + xi[t, i, c])
        wnew = np.dot(A, w)
        for i in range(n):
            if wnew[i] < 1e-12:
                # push-sum weight collapse: cannot happen on B-strongly
                # connected schedules with implicit self-loops
                raise ValueError("push-sum weight underflow")
        for i in range(n):
            Y[i] = _project(-alphas[t] * (Znew[i] / wnew[i]), set_kind, lo, hi, radius)
        Z = Znew
        w = wnew
        w_hist[t + 1] = w
        for i in range(n):
            x_hist[t + 1, starts[i]:starts[i + 1]] = Y[i, starts[i]:starts[i + 1]]
    return x_hist, cons, w_hist


@njit(cache=True)
def _consensus_sq_vs_mean(ratio, Z):
    n, d = Z.shape
    zbar = np.zeros(d)
    for i in range(n):
        zbar += Z[i]
    zbar /= n
    err = np.zeros(n)
    for i in range(n):
        s = 0.0
        for c in range(d):
            dv = ratio[i, c] - zbar[c]
            s += dv * dv
        err[i] = s
    return err
