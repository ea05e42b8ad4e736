"""Compiled numerical kernels.

Everything on the per-replication hot path lives here with explicit loops:
no BLAS calls, so results are bitwise reproducible regardless of process or
thread configuration. All arrays are float64 and C-contiguous.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def gram(XT):
    """G = X'X/n from the transposed design (p x n). Exactly symmetric."""
    p, n = XT.shape
    G = np.empty((p, p))
    for k in range(p):
        for l in range(k, p):
            s = 0.0
            for i in range(n):
                s += XT[k, i] * XT[l, i]
            G[k, l] = s / n
            G[l, k] = G[k, l]
    return G


@njit(cache=True)
def matvec(A, x):
    n, m = A.shape
    out = np.empty(n)
    for i in range(n):
        s = 0.0
        for k in range(m):
            s += A[i, k] * x[k]
        out[i] = s
    return out


@njit(cache=True)
def matvec_t(A, x):
    """A.T @ x for C-ordered A (n x m), accumulated row by row."""
    n, m = A.shape
    out = np.zeros(m)
    for i in range(n):
        xi = x[i]
        if xi != 0.0:
            for k in range(m):
                out[k] += A[i, k] * xi
    return out


@njit(cache=True)
def matmul_bt(Z, B):
    """Z @ B.T with explicit loops (rows of both operands contiguous)."""
    n, m = Z.shape
    q = B.shape[0]
    out = np.empty((n, q))
    for i in range(n):
        for k in range(q):
            s = 0.0
            for l in range(m):
                s += Z[i, l] * B[k, l]
            out[i, k] = s
    return out


@njit(cache=True)
def cholesky_lower(A):
    """Lower Cholesky factor. Returns (L, ok); ok=False if not positive definite."""
    p = A.shape[0]
    L = np.zeros((p, p))
    for i in range(p):
        for j in range(i + 1):
            s = A[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            if i == j:
                if s <= 0.0 or not np.isfinite(s):
                    return L, False
                L[i, j] = np.sqrt(s)
            else:
                L[i, j] = s / L[j, j]
    return L, True


@njit(cache=True)
def gram_cd_cached(G, c, lam, b, q, skip, tol, max_sweeps):
    """Cyclic coordinate descent for min_b 0.5 b'Gb - c'b + lam*||b||_1.

    Coordinate `skip` (pass -1 for none) is frozen at zero. `b` is the warm
    start and `q` must hold G @ b on entry; both are updated in place so the
    gradient cache survives across warm-started path steps. Convergence is
    declared on the KKT residual of the quadratic program evaluated from the
    cache. Returns (sweeps, kkt_residual, n_updates).
    """
    p = b.shape[0]
    gmax = 0.0
    for k in range(p):
        if G[k, k] > gmax:
            gmax = G[k, k]
    # moves far below the tolerance scale cannot affect the verified KKT
    # residual; skipping them avoids O(p) cache updates for noise
    dmin = 1e-3 * tol / gmax if gmax > 0.0 else 0.0
    sweeps = 0
    n_updates = 0
    kkt = np.inf
    while sweeps < max_sweeps:
        sweeps += 1
        for k in range(p):
            if k == skip:
                continue
            gkk = G[k, k]
            if gkk <= 0.0:
                continue
            rho = c[k] - q[k] + gkk * b[k]
            if rho > lam:
                new = (rho - lam) / gkk
            elif rho < -lam:
                new = (rho + lam) / gkk
            else:
                new = 0.0
            d = new - b[k]
            if d != 0.0 and (abs(d) > dmin or (new == 0.0) != (b[k] == 0.0)):
                b[k] = new
                n_updates += 1
                for l in range(p):
                    q[l] += d * G[k, l]
        kkt = 0.0
        for k in range(p):
            if k == skip or G[k, k] <= 0.0:
                continue
            g = q[k] - c[k]
            if b[k] > 0.0:
                r = abs(g + lam)
            elif b[k] < 0.0:
                r = abs(g - lam)
            else:
                r = abs(g) - lam
                if r < 0.0:
                    r = 0.0
            if r > kkt:
                kkt = r
        if kkt <= tol:
            break
    return sweeps, kkt, n_updates


@njit(cache=True)
def gram_cd(G, c, lam, b, skip, tol, max_sweeps):
    """Single-penalty wrapper around gram_cd_cached with a fresh cache."""
    p = b.shape[0]
    q = np.empty(p)
    for k in range(p):
        s = 0.0
        for l in range(p):
            s += G[k, l] * b[l]
        q[k] = s
    return gram_cd_cached(G, c, lam, b, q, skip, tol, max_sweeps)


@njit(cache=True)
def wls_cd(XT, z, w, lam, b, tol, max_sweeps):
    """Coordinate descent for min_b (1/2n) sum_i w_i (z_i - x_i'b)^2 + lam*||b||_1.

    XT is the p x n transposed design. Warm start in `b`, updated in place.
    Returns (sweeps, kkt_residual) with the KKT residual evaluated exactly
    at the returned point.
    """
    p, n = XT.shape
    r = np.empty(n)
    for i in range(n):
        s = 0.0
        for k in range(p):
            if b[k] != 0.0:
                s += XT[k, i] * b[k]
        r[i] = z[i] - s
    a = np.empty(p)
    amax = 0.0
    for k in range(p):
        s = 0.0
        for i in range(n):
            s += w[i] * XT[k, i] * XT[k, i]
        a[k] = s / n
        if a[k] > amax:
            amax = a[k]
    dmin = 1e-3 * tol / amax if amax > 0.0 else 0.0
    sweeps = 0
    kkt = np.inf
    while sweeps < max_sweeps:
        sweeps += 1
        for k in range(p):
            if a[k] <= 0.0:
                continue
            s = 0.0
            for i in range(n):
                s += w[i] * XT[k, i] * r[i]
            rho = s / n + a[k] * b[k]
            if rho > lam:
                new = (rho - lam) / a[k]
            elif rho < -lam:
                new = (rho + lam) / a[k]
            else:
                new = 0.0
            d = new - b[k]
            if d != 0.0 and (abs(d) > dmin or (new == 0.0) != (b[k] == 0.0)):
                b[k] = new
                for i in range(n):
                    r[i] -= d * XT[k, i]
        kkt = 0.0
        for k in range(p):
            if a[k] <= 0.0:
                continue
            s = 0.0
            for i in range(n):
                s += w[i] * XT[k, i] * r[i]
            g = -s / n
            if b[k] > 0.0:
                res = abs(g + lam)
            elif b[k] < 0.0:
                res = abs(g - lam)
            else:
                res = abs(g) - lam
                if res < 0.0:
                    res = 0.0
            if res > kkt:
                kkt = res
        if kkt <= tol:
            break
    return sweeps, kkt


@njit(cache=True)
def nodewise_scan(X, XT, G, j, lams, w, wfloor, tol, max_sweeps):
    """Warm-started node-wise lasso scan over a descending penalty grid.

    For each grid value solves the column-j-on-the-rest lasso and evaluates
    the score-vector functionals of v = W^{-1} eta:
      vnorm   = ||v||_n = sqrt(sum_i w_i v_i^2)
      inner   = <v, x_j>_n (signed)
      zmax    = max_{k != j} |<v, x_k>_n|
    When no weight needs clamping, <v, x_k>_n = eta'x_k exactly (the W and
    W^{-1} cancel), so inner and zmax are read off the coordinate-descent
    gradient cache as n*(c - G gamma); otherwise they are accumulated from
    v directly. Returns (gamma_path, vnorm, inner, zmax, sweeps, kkts)
    where gamma_path row li holds the full-length coefficient vector
    (entry j fixed at 0).
    """
    n, p = X.shape
    L = lams.shape[0]
    gamma_path = np.zeros((L, p))
    vnorm = np.empty(L)
    inner = np.empty(L)
    zmax = np.empty(L)
    kkts = np.empty(L)
    sweeps = np.zeros(L, np.int64)
    b = np.zeros(p)
    q = np.zeros(p)  # G @ b, maintained across the warm-started path
    c = np.empty(p)
    for k in range(p):
        c[k] = G[k, j]
    clamped = False
    for i in range(n):
        if w[i] < wfloor:
            clamped = True
            break
    act = np.empty(p, np.int64)
    wv = np.empty(n)
    for li in range(L):
        sw, kk, nup = gram_cd_cached(G, c, lams[li], b, q, j, tol, max_sweeps)
        sweeps[li] = sw
        kkts[li] = kk
        for k in range(p):
            gamma_path[li, k] = b[k]
        if li > 0 and nup == 0:
            vnorm[li] = vnorm[li - 1]
            inner[li] = inner[li - 1]
            zmax[li] = zmax[li - 1]
            continue
        nact = 0
        for k in range(p):
            if b[k] != 0.0:
                act[nact] = k
                nact += 1
        if not clamped:
            vn2 = 0.0
            for i in range(n):
                s = 0.0
                for t in range(nact):
                    k = act[t]
                    s += X[i, k] * b[k]
                eta = X[i, j] - s
                vn2 += eta * eta / w[i]
            z = 0.0
            for k in range(p):
                if k == j:
                    continue
                a_ = abs(c[k] - q[k])
                if a_ > z:
                    z = a_
            vnorm[li] = np.sqrt(vn2)
            inner[li] = n * (c[j] - q[j])
            zmax[li] = n * z
        else:
            vn2 = 0.0
            inj = 0.0
            for i in range(n):
                s = 0.0
                for t in range(nact):
                    k = act[t]
                    s += X[i, k] * b[k]
                eta = X[i, j] - s
                wi = w[i]
                wc = wi if wi >= wfloor else wfloor
                vi = eta / wc
                vn2 += wi * vi * vi
                wvi = wi * vi
                wv[i] = wvi
                inj += wvi * X[i, j]
            z = 0.0
            for k in range(p):
                if k == j:
                    continue
                s = 0.0
                for i in range(n):
                    s += wv[i] * XT[k, i]
                a_ = abs(s)
                if a_ > z:
                    z = a_
            vnorm[li] = np.sqrt(vn2)
            inner[li] = inj
            zmax[li] = z
    return gamma_path, vnorm, inner, zmax, sweeps, kkts
