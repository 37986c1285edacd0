"""Compiled coordinate-descent kernels.

The cyclic Lasso sweeps are the only part of the package that is too slow as
pure-numpy per-coordinate updates, so they live here as numba kernels.  Both
kernels are deterministic (no fastmath, no parallelism) so that repeated runs
produce bit-identical iterates.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def lasso_cd(W, Z, lam, v0, tol, max_sweeps):
    """Cyclic coordinate descent for (1/2m)||Z - Wv||^2 + lam*||v||_1.

    Starts from ``v0`` and keeps the residual ``r = Z - Wv`` updated in place.
    Returns ``(v, sweeps, converged)`` where convergence means the largest
    coefficient change in a full sweep fell below ``tol``.
    """
    m, p = W.shape
    v = v0.copy()
    r = Z.copy()
    for j in range(p):
        if v[j] != 0.0:
            for i in range(m):
                r[i] -= v[j] * W[i, j]
    colsq = np.zeros(p)
    for j in range(p):
        s = 0.0
        for i in range(m):
            s += W[i, j] * W[i, j]
        colsq[j] = s
    thr = m * lam
    for sweep in range(max_sweeps):
        max_delta = 0.0
        for j in range(p):
            cj = colsq[j]
            if cj <= 0.0:
                continue
            old = v[j]
            rho = old * cj
            for i in range(m):
                rho += W[i, j] * r[i]
            if rho > thr:
                new = (rho - thr) / cj
            elif rho < -thr:
                new = (rho + thr) / cj
            else:
                new = 0.0
            delta = new - old
            if delta != 0.0:
                for i in range(m):
                    r[i] -= delta * W[i, j]
                v[j] = new
            ad = abs(delta)
            if ad > max_delta:
                max_delta = ad
        if max_delta < tol:
            return v, sweep + 1, True
    return v, max_sweeps, False


@njit(cache=True)
def lasso_cd_gram(G, b, m, lam, v, tol, max_sweeps):
    """Gram-matrix form of the same sweep: G = W^T W, b = W^T Z.

    ``v`` is updated in place (callers warm-start it along a path of nearby
    problems); ``q = G v`` is rebuilt from the nonzeros of ``v`` on entry and
    maintained through the sweeps.  Returns ``(q, sweeps, converged)``.
    """
    p = b.shape[0]
    q = np.zeros(p)
    for j in range(p):
        vj = v[j]
        if vj != 0.0:
            for l in range(p):
                q[l] += vj * G[l, j]
    thr = m * lam
    sweeps = max_sweeps
    converged = False
    for sweep in range(max_sweeps):
        max_delta = 0.0
        for j in range(p):
            gjj = G[j, j]
            if gjj <= 0.0:
                continue
            old = v[j]
            rho = b[j] - q[j] + gjj * old
            if rho > thr:
                new = (rho - thr) / gjj
            elif rho < -thr:
                new = (rho + thr) / gjj
            else:
                new = 0.0
            delta = new - old
            if delta != 0.0:
                for l in range(p):
                    q[l] += delta * G[l, j]
                v[j] = new
            ad = abs(delta)
            if ad > max_delta:
                max_delta = ad
        if max_delta < tol:
            sweeps = sweep + 1
            converged = True
            break
    return q, sweeps, converged


@njit(cache=True)
def gram_bic_update(G, b, u, x, an2, c_t):
    """Advance G = W^T W and b = W^T Z by one time step, in place.

    With W <- W + 2 a x^T the Gram gains 2(u x^T + x u^T) + 4 ||a||^2 x x^T
    where u = W^T a, and b gains 2 (a . Z) x.  Fusing the rank-two update
    into one pass avoids three full-matrix temporaries per step.
    """
    p = b.shape[0]
    for j in range(p):
        xj = x[j]
        coef = 2.0 * u[j] + 4.0 * an2 * xj
        Gj = G[j]
        for l in range(p):
            Gj[l] += coef * x[l] + 2.0 * xj * u[l]
        b[j] += 2.0 * c_t * xj
