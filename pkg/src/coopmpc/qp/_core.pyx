# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled QP backend: primal active-set + phase-1 simplex.

Mirrors _pysolver.py operation for operation; any semantic change must land
in both files. This kernel exists because sweep workloads solve ~10^5-10^6
of these small dense QPs.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs
from libc.stdlib cimport free, malloc
from libc.string cimport memcpy, memset

cnp.import_array()

cdef double BIG_RHS_C = 1e30
cdef double VACUOUS_RHS_C = 1e29
cdef double DIR_TOL = 1e-10
cdef double STEP_TOL = 1e-10
cdef double RC_TOL = 1e-9
cdef int SIMPLEX_MAX_PIVOTS = 10000

BIG_RHS = BIG_RHS_C
VACUOUS_RHS = VACUOUS_RHS_C

STATUS_OPTIMAL = 0
STATUS_INFEASIBLE = 1
STATUS_MAXITER = 2


cdef int _lu_factor(double* K, int* piv, int n) nogil:
    """In-place partial-pivot LU; only exact zero pivots count as singular."""
    cdef int i, j, k, pr
    cdef double best, tmp, f
    for k in range(n):
        pr = k
        best = fabs(K[k * n + k])
        for i in range(k + 1, n):
            tmp = fabs(K[i * n + k])
            if tmp > best:
                best = tmp
                pr = i
        if best == 0.0:
            return -1
        piv[k] = pr
        if pr != k:
            for j in range(n):
                tmp = K[k * n + j]
                K[k * n + j] = K[pr * n + j]
                K[pr * n + j] = tmp
        for i in range(k + 1, n):
            f = K[i * n + k] / K[k * n + k]
            K[i * n + k] = f
            if f != 0.0:
                for j in range(k + 1, n):
                    K[i * n + j] -= f * K[k * n + j]
    return 0


cdef void _lu_solve_factored(const double* K, const int* piv, double* b, int n) nogil:
    # K holds L\U of the fully permuted matrix, so apply every row
    # interchange to b before substituting (LAPACK getrs order).
    cdef int i, k
    cdef double tmp
    for k in range(n):
        if piv[k] != k:
            tmp = b[k]
            b[k] = b[piv[k]]
            b[piv[k]] = tmp
    for k in range(n):
        for i in range(k + 1, n):
            b[i] -= K[i * n + k] * b[k]
    for k in range(n - 1, -1, -1):
        tmp = b[k]
        for i in range(k + 1, n):
            tmp -= K[k * n + i] * b[i]
        b[k] = tmp / K[k * n + k]


cdef int _kkt_solve(const double* K0, double* rhs, double* Kf, int* piv,
                    double* scratch, int n) nogil:
    """Solve K0 x = rhs with one iterative-refinement pass; x lands in rhs.

    Kf and scratch are work buffers (n*n and 2n doubles); returns -1 if
    singular.
    """
    cdef int i, j
    cdef double v
    memcpy(Kf, K0, n * n * sizeof(double))
    memcpy(scratch, rhs, n * sizeof(double))     # original rhs
    if _lu_factor(Kf, piv, n) != 0:
        return -1
    _lu_solve_factored(Kf, piv, rhs, n)          # rhs := x0
    for i in range(n):                           # residual r = rhs0 - K0 x0
        v = scratch[i]
        for j in range(n):
            v -= K0[i * n + j] * rhs[j]
        scratch[n + i] = v
    _lu_solve_factored(Kf, piv, scratch + n, n)  # dx
    for i in range(n):
        rhs[i] += scratch[n + i]
    return 0


cdef int _phase1(const double* G, const double* h, int m, int n, double* z,
                 double feas_tol) nogil:
    """Phase-1 simplex from the point z (modified in place on success).

    Returns 1 feasible, 0 infeasible, -1 pivot-limit/allocation failure.
    """
    cdef int i, j, k_art, mr, ncols, it, enter, leave, b
    cdef double hv, piv, f, best, ratio, infeas
    cdef int* rows = <int*> malloc(m * sizeof(int))
    if rows == NULL:
        return -1
    mr = 0
    for i in range(m):
        if h[i] < VACUOUS_RHS_C:
            rows[mr] = i
            mr += 1
    if mr == 0:
        free(rows)
        return 1

    cdef double* hr = <double*> malloc(mr * sizeof(double))
    cdef int* artcol = <int*> malloc(mr * sizeof(int))
    if hr == NULL or artcol == NULL:
        free(rows); free(hr); free(artcol)
        return -1
    k_art = 0
    for i in range(mr):
        hv = h[rows[i]]
        for j in range(n):
            hv -= G[rows[i] * n + j] * z[j]
        hr[i] = hv
        if hv < 0.0:
            artcol[i] = k_art
            k_art += 1
        else:
            artcol[i] = -1
    if k_art == 0:
        free(rows); free(hr); free(artcol)
        return 1

    ncols = 2 * n + mr + k_art
    cdef double* T = <double*> malloc(mr * (ncols + 1) * sizeof(double))
    cdef double* cost = <double*> malloc((ncols + 1) * sizeof(double))
    cdef int* basis = <int*> malloc(mr * sizeof(int))
    if T == NULL or cost == NULL or basis == NULL:
        free(rows); free(hr); free(artcol); free(T); free(cost); free(basis)
        return -1
    memset(T, 0, mr * (ncols + 1) * sizeof(double))
    memset(cost, 0, (ncols + 1) * sizeof(double))

    for i in range(mr):
        for j in range(n):
            f = G[rows[i] * n + j]
            T[i * (ncols + 1) + j] = f
            T[i * (ncols + 1) + n + j] = -f
        T[i * (ncols + 1) + 2 * n + i] = 1.0
        T[i * (ncols + 1) + ncols] = hr[i]
        if artcol[i] >= 0:
            T[i * (ncols + 1) + 2 * n + mr + artcol[i]] = -1.0
            for j in range(ncols + 1):
                T[i * (ncols + 1) + j] = -T[i * (ncols + 1) + j]
            basis[i] = 2 * n + mr + artcol[i]
        else:
            basis[i] = 2 * n + i

    for i in range(mr):
        if artcol[i] >= 0:
            for j in range(ncols + 1):
                cost[j] -= T[i * (ncols + 1) + j]
    for j in range(2 * n + mr, ncols):
        cost[j] += 1.0

    cdef int result = -1
    for it in range(SIMPLEX_MAX_PIVOTS):
        enter = -1
        for j in range(ncols):
            if cost[j] < -RC_TOL:
                enter = j
                break
        if enter == -1:
            result = 1
            break
        leave = -1
        best = 1e300
        for i in range(mr):
            f = T[i * (ncols + 1) + enter]
            if f > DIR_TOL:
                ratio = T[i * (ncols + 1) + ncols] / f
                if ratio < best - 1e-15:
                    best = ratio
                    leave = i
        if leave == -1:
            cost[enter] = 0.0
            continue
        piv = T[leave * (ncols + 1) + enter]
        for j in range(ncols + 1):
            T[leave * (ncols + 1) + j] /= piv
        for i in range(mr):
            if i != leave:
                f = T[i * (ncols + 1) + enter]
                if f != 0.0:
                    for j in range(ncols + 1):
                        T[i * (ncols + 1) + j] -= f * T[leave * (ncols + 1) + j]
        f = cost[enter]
        if f != 0.0:
            for j in range(ncols + 1):
                cost[j] -= f * T[leave * (ncols + 1) + j]
        basis[leave] = enter

    if result == 1:
        infeas = -cost[ncols]
        if infeas > feas_tol:
            result = 0
        else:
            for i in range(mr):
                b = basis[i]
                if b < n:
                    z[b] += T[i * (ncols + 1) + ncols]
                elif b < 2 * n:
                    z[b - n] -= T[i * (ncols + 1) + ncols]

    free(rows); free(hr); free(artcol); free(T); free(cost); free(basis)
    return result


def solve_unified(object H_in, object g_in, object G_in, object h_in,
                  object z0_in, double tol, int max_iter):
    """See _pysolver.solve_unified; identical contract."""
    cdef cnp.ndarray[double, ndim=2, mode="c"] H = np.ascontiguousarray(H_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] g = np.ascontiguousarray(g_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] G = np.ascontiguousarray(G_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] h = np.ascontiguousarray(h_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] z = np.array(z0_in, dtype=np.float64)
    cdef int m = G.shape[0]
    cdef int n = G.shape[1]
    cdef cnp.ndarray[double, ndim=1, mode="c"] lam = np.zeros(m, dtype=np.float64)

    cdef double* Hp = &H[0, 0]
    cdef double* gp = &g[0]
    cdef double* Gp_ = &G[0, 0]
    cdef double* hp = &h[0]
    cdef double* zp = &z[0]
    cdef double* lamp = &lam[0]

    cdef int i, j, k, it, nw, nmu, drop, block, status, ok, dim
    cdef double feas_scale, feas_tol, dual_tol, gmax, v, worst, pmax, zmax
    cdef double alpha, ai, num, den, primal, stat

    feas_scale = 0.0
    for i in range(m):
        if hp[i] < VACUOUS_RHS_C:
            v = fabs(hp[i])
            if v > feas_scale:
                feas_scale = v
    feas_tol = tol * (1.0 + feas_scale)
    gmax = 0.0
    for j in range(n):
        v = fabs(gp[j])
        if v > gmax:
            gmax = v
    dual_tol = tol * (1.0 + gmax)

    cdef int dim_max = 2 * n
    cdef double* grad = <double*> malloc(n * sizeof(double))
    cdef double* p = <double*> malloc(n * sizeof(double))
    cdef double* mu = <double*> malloc((n + 1) * sizeof(double))
    cdef int* work = <int*> malloc((n + 1) * sizeof(int))
    cdef double* K0 = <double*> malloc(dim_max * dim_max * sizeof(double))
    cdef double* Kf = <double*> malloc(dim_max * dim_max * sizeof(double))
    cdef double* rhs = <double*> malloc(dim_max * sizeof(double))
    cdef double* scratch = <double*> malloc(2 * dim_max * sizeof(double))
    cdef int* piv = <int*> malloc(dim_max * sizeof(int))
    cdef double* rownorm = <double*> malloc(m * sizeof(double))
    cdef int* group = <int*> malloc(m * sizeof(int))
    if (grad == NULL or p == NULL or mu == NULL or work == NULL or K0 == NULL
            or Kf == NULL or rhs == NULL or scratch == NULL or piv == NULL
            or rownorm == NULL or group == NULL):
        free(grad); free(p); free(mu); free(work); free(K0); free(Kf)
        free(rhs); free(scratch); free(piv); free(rownorm); free(group)
        raise MemoryError

    cdef int same, neg
    for i in range(m):
        v = 0.0
        for j in range(n):
            if fabs(Gp_[i * n + j]) > v:
                v = fabs(Gp_[i * n + j])
        rownorm[i] = v
        # group[i] = first row exactly equal to +/- row i (see _pysolver)
        group[i] = i
        for k in range(i):
            if group[k] != k:
                continue
            same = 1
            neg = 1
            for j in range(n):
                if Gp_[i * n + j] != Gp_[k * n + j]:
                    same = 0
                if Gp_[i * n + j] != -Gp_[k * n + j]:
                    neg = 0
                if not same and not neg:
                    break
            if same or neg:
                group[i] = k
                break

    status = STATUS_MAXITER
    it = 0
    nw = 0
    nmu = 0
    try:
        worst = -1e300
        for i in range(m):
            if hp[i] < VACUOUS_RHS_C:
                v = -hp[i]
                for j in range(n):
                    v += Gp_[i * n + j] * zp[j]
                if v > worst:
                    worst = v
        if worst > feas_tol:
            ok = _phase1(Gp_, hp, m, n, zp, feas_tol)
            if ok < 0:
                raise RuntimeError("phase-1 simplex did not converge")
            if ok == 0:
                primal = 0.0
                for i in range(m):
                    if hp[i] < VACUOUS_RHS_C:
                        v = -hp[i]
                        for j in range(n):
                            v += Gp_[i * n + j] * zp[j]
                        if v > primal:
                            primal = v
                return z, lam, STATUS_INFEASIBLE, 0, primal, 0.0

        while it < max_iter:
            it += 1
            for j in range(n):
                v = gp[j]
                for k in range(n):
                    v += Hp[j * n + k] * zp[k]
                grad[j] = v
            # KKT [[H, Gw'],[Gw, 0]] [p; mu] = [-grad; 0]
            dim = n + nw
            memset(K0, 0, dim * dim * sizeof(double))
            for j in range(n):
                for k in range(n):
                    K0[j * dim + k] = Hp[j * n + k]
            for i in range(nw):
                for j in range(n):
                    v = Gp_[work[i] * n + j]
                    K0[j * dim + n + i] = v
                    K0[(n + i) * dim + j] = v
            for j in range(n):
                rhs[j] = -grad[j]
            for i in range(nw):
                rhs[n + i] = 0.0
            ok = _kkt_solve(K0, rhs, Kf, piv, scratch, dim)
            if ok == 0:
                for j in range(dim):
                    if rhs[j] != rhs[j] or fabs(rhs[j]) > 1e200:
                        ok = -1
                        break
            if ok != 0:
                # numerically dependent working set: shed the latest addition
                if nw == 0:
                    break
                nw -= 1
                nmu = nw
                continue
            for j in range(n):
                p[j] = rhs[j]
            for i in range(nw):
                mu[i] = rhs[n + i]
            nmu = nw

            pmax = 0.0
            zmax = 0.0
            for j in range(n):
                if fabs(p[j]) > pmax:
                    pmax = fabs(p[j])
                if fabs(zp[j]) > zmax:
                    zmax = fabs(zp[j])
            if pmax <= STEP_TOL * (1.0 + zmax):
                drop = -1
                for i in range(nw):
                    if mu[i] < -dual_tol and (drop == -1 or work[i] < work[drop]):
                        drop = i
                if drop == -1:
                    status = STATUS_OPTIMAL
                    break
                for i in range(drop, nw - 1):
                    work[i] = work[i + 1]
                    mu[i] = mu[i + 1]
                nw -= 1
                nmu = nw
                continue

            alpha = 1.0
            block = -1
            for i in range(m):
                if hp[i] >= VACUOUS_RHS_C:
                    continue
                ok = 0
                for k in range(nw):
                    if work[k] == i or group[work[k]] == group[i]:
                        ok = 1
                        break
                if ok:
                    continue
                den = 0.0
                for j in range(n):
                    den += Gp_[i * n + j] * p[j]
                if den > DIR_TOL * (1.0 + rownorm[i] * pmax):
                    num = hp[i]
                    for j in range(n):
                        num -= Gp_[i * n + j] * zp[j]
                    ai = num / den
                    if ai < 0.0:
                        ai = 0.0
                    if ai < alpha:
                        alpha = ai
                        block = i
            for j in range(n):
                zp[j] += alpha * p[j]
            if block >= 0 and nw < n:
                work[nw] = block
                nw += 1

        for i in range(nw):
            lamp[work[i]] = mu[i] if i < nmu else 0.0
        primal = 0.0
        for i in range(m):
            if hp[i] < VACUOUS_RHS_C:
                v = -hp[i]
                for j in range(n):
                    v += Gp_[i * n + j] * zp[j]
                if v > primal:
                    primal = v
        stat = 0.0
        for j in range(n):
            v = gp[j]
            for k in range(n):
                v += Hp[j * n + k] * zp[k]
            for i in range(m):
                v += Gp_[i * n + j] * lamp[i]
            if fabs(v) > stat:
                stat = fabs(v)
        if status == STATUS_OPTIMAL:
            worst = 0.0
            for i in range(m):
                if lamp[i] < worst:
                    worst = lamp[i]
            if primal > feas_tol or worst < -dual_tol:
                status = STATUS_MAXITER
        return z, lam, status, it, primal, stat
    finally:
        free(grad); free(p); free(mu); free(work); free(K0); free(Kf)
        free(rhs); free(scratch); free(piv); free(rownorm); free(group)


def check_feasible_unified(object G_in, object h_in, object z0_in, double tol):
    """See _pysolver.check_feasible_unified; identical contract."""
    cdef cnp.ndarray[double, ndim=2, mode="c"] G = np.ascontiguousarray(G_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] h = np.ascontiguousarray(h_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] z = np.array(z0_in, dtype=np.float64)
    cdef int m = G.shape[0]
    cdef int n = G.shape[1]
    cdef int i, j, ok
    cdef double feas_scale = 0.0, worst = -1e300, v
    cdef int any_real = 0
    for i in range(m):
        if h[i] < VACUOUS_RHS_C:
            any_real = 1
            if fabs(h[i]) > feas_scale:
                feas_scale = fabs(h[i])
    if not any_real:
        return True
    cdef double feas_tol = tol * (1.0 + feas_scale)
    for i in range(m):
        if h[i] < VACUOUS_RHS_C:
            v = -h[i]
            for j in range(n):
                v += G[i, j] * z[j]
            if v > worst:
                worst = v
    if worst <= feas_tol:
        return True
    ok = _phase1(&G[0, 0], &h[0], m, n, &z[0], feas_tol)
    if ok < 0:
        raise RuntimeError("phase-1 simplex did not converge")
    return bool(ok)
