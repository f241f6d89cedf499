"""Pure-Python (numpy) QP backend: primal active-set method + phase-1 simplex.

Operates on the unified row form G z <= h (box bounds already expanded into
rows by the frontend). Rows with h >= VACUOUS_RHS are placeholders for
infinite bounds and are skipped everywhere. The Cython backend in _core.pyx
implements the identical algorithm; keep the two in lockstep.
"""

from __future__ import annotations

import numpy as np

BIG_RHS = 1e30
VACUOUS_RHS = 1e29

STATUS_OPTIMAL = 0
STATUS_INFEASIBLE = 1
STATUS_MAXITER = 2

_DIR_TOL = 1e-10       # minimum relative G_i . p to count a row as blocking
_STEP_TOL = 1e-10      # relative step size treated as "no move"
_RC_TOL = 1e-9         # simplex reduced-cost threshold
_SIMPLEX_MAX_PIVOTS = 10_000


def solve_unified(H, g, G, h, z0, tol, max_iter):
    """Minimize 0.5 z'Hz + g'z subject to G z <= h from a clipped start z0.

    Returns (z, lam, status, iterations, primal_res, stat_res) with lam >= 0
    per row (0 on inactive rows). H must be symmetric positive definite.
    """
    H = np.ascontiguousarray(H, dtype=float)
    g = np.ascontiguousarray(g, dtype=float)
    G = np.ascontiguousarray(G, dtype=float)
    h = np.ascontiguousarray(h, dtype=float)
    m, n = G.shape
    real = h < VACUOUS_RHS

    feas_scale = 1.0 + (np.max(np.abs(h[real])) if real.any() else 0.0)
    feas_tol = tol * feas_scale
    dual_tol = tol * (1.0 + np.max(np.abs(g)))

    z = np.array(z0, dtype=float)
    lam = np.zeros(m)

    rownorm = np.max(np.abs(G), axis=1) if m else np.zeros(0)
    group = _duplicate_groups(G)

    resid = G @ z - h
    if real.any() and np.max(resid[real]) > feas_tol:
        ok, z = _phase1(G, h, z, real, feas_tol)
        if not ok:
            primal = max(0.0, float(np.max((G @ z - h)[real]))) if real.any() else 0.0
            return z, lam, STATUS_INFEASIBLE, 0, primal, 0.0

    work: list[int] = []
    mu = np.zeros(0)
    status = STATUS_MAXITER
    it = 0
    while it < max_iter:
        it += 1
        grad = H @ z + g
        try:
            p, mu = _eqp_step(H, grad, G, work)
        except np.linalg.LinAlgError:
            # numerically dependent working set: shed the latest addition
            if not work:
                break
            work.pop()
            mu = np.zeros(len(work))
            continue
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(mu))):
            if not work:
                break
            work.pop()
            mu = np.zeros(len(work))
            continue
        if np.max(np.abs(p)) <= _STEP_TOL * (1.0 + np.max(np.abs(z))):
            drop = -1
            for k, row in enumerate(work):
                if mu[k] < -dual_tol and (drop == -1 or row < work[drop]):
                    drop = k
            if drop == -1:
                status = STATUS_OPTIMAL
                break
            work.pop(drop)
            continue
        alpha = 1.0
        block = -1
        Gp = G @ p
        slack = h - G @ z
        pmax = float(np.max(np.abs(p)))
        work_groups = {group[w] for w in work}
        for i in range(m):
            if not real[i] or i in work or group[i] in work_groups:
                continue
            if Gp[i] > _DIR_TOL * (1.0 + rownorm[i] * pmax):
                ai = slack[i] / Gp[i]
                if ai < 0.0:
                    ai = 0.0
                if ai < alpha:
                    alpha = ai
                    block = i
        z = z + alpha * p
        if block >= 0 and len(work) < G.shape[1]:
            work.append(block)

    for k, row in enumerate(work):
        lam[row] = mu[k] if k < len(mu) else 0.0
    primal = max(0.0, float(np.max((G @ z - h)[real]))) if real.any() else 0.0
    stat = float(np.max(np.abs(H @ z + g + G.T @ lam)))
    if status == STATUS_OPTIMAL and (primal > feas_tol or np.min(lam) < -dual_tol):
        status = STATUS_MAXITER
    return z, lam, status, it, primal, stat


def _duplicate_groups(G):
    """group[i] = index of the first row exactly equal to +/- row i.

    A row whose group-mate sits in the working set can never genuinely block
    (the mate already pins G_i p = 0), so the ratio test skips it; this keeps
    pinned-variable box pairs and repeated constraint rows from cycling.
    """
    m = G.shape[0]
    group = np.arange(m)
    seen: dict[bytes, int] = {}
    for i in range(m):
        row = G[i] + 0.0   # normalize -0.0
        key_p = row.tobytes()
        key_n = (-row + 0.0).tobytes()
        if key_p in seen:
            group[i] = seen[key_p]
        elif key_n in seen:
            group[i] = seen[key_n]
        else:
            seen[key_p] = i
    return group


def _eqp_step(H, grad, G, work):
    """Solve the equality-constrained step: min 0.5 p'Hp + grad'p, G_W p = 0.

    One iterative-refinement pass keeps degenerate (near-dependent) working
    sets from leaking noise into the ratio test.
    """
    n = H.shape[1]
    nw = len(work)
    if nw == 0:
        K = H
        rhs = -grad
    else:
        K = np.zeros((n + nw, n + nw))
        K[:n, :n] = H
        Gw = G[work]
        K[:n, n:] = Gw.T
        K[n:, :n] = Gw
        rhs = np.zeros(n + nw)
        rhs[:n] = -grad
    sol = np.linalg.solve(K, rhs)
    sol = sol + np.linalg.solve(K, rhs - K @ sol)
    return sol[:n], sol[n:]


def check_feasible_unified(G, h, z0, tol):
    """True iff some z satisfies all real rows of G z <= h within tol scaling."""
    G = np.ascontiguousarray(G, dtype=float)
    h = np.ascontiguousarray(h, dtype=float)
    real = h < VACUOUS_RHS
    if not real.any():
        return True
    feas_tol = tol * (1.0 + np.max(np.abs(h[real])))
    z = np.array(z0, dtype=float)
    if np.max((G @ z - h)[real]) <= feas_tol:
        return True
    ok, _ = _phase1(G, h, z, real, feas_tol)
    return ok


def _phase1(G, h, z0, real, feas_tol):
    """Phase-1 simplex: minimize total artificial infeasibility from z0.

    Shifts to d = z - z0, writes G d + s = h' with s >= 0 and artificials on
    rows with negative h', and runs Bland's rule to a certified answer.
    Returns (feasible, z).
    """
    rows = np.flatnonzero(real)
    Gr = G[rows]
    hr = h[rows] - Gr @ z0
    mr, n = Gr.shape
    art_rows = np.flatnonzero(hr < 0.0)
    k = len(art_rows)
    if k == 0:
        return True, z0.copy()

    ncols = 2 * n + mr + k
    T = np.zeros((mr, ncols + 1))
    T[:, 0:n] = Gr
    T[:, n:2 * n] = -Gr
    T[np.arange(mr), 2 * n + np.arange(mr)] = 1.0
    T[:, ncols] = hr
    art_col = {}
    for j, i in enumerate(art_rows):
        art_col[i] = 2 * n + mr + j
        T[i, 2 * n + mr + j] = -1.0
    neg = hr < 0.0
    T[neg] *= -1.0

    basis = np.empty(mr, dtype=int)
    for i in range(mr):
        basis[i] = art_col[i] if i in art_col else 2 * n + i

    # reduced-cost row for cost = sum(artificials)
    cost = np.zeros(ncols + 1)
    for i in art_rows:
        cost -= T[i]
    cost[2 * n + mr:ncols] += 1.0

    for _ in range(_SIMPLEX_MAX_PIVOTS):
        enter = -1
        for j in range(ncols):
            if cost[j] < -_RC_TOL:
                enter = j
                break
        if enter == -1:
            break
        leave = -1
        best = np.inf
        for i in range(mr):
            a = T[i, enter]
            if a > _DIR_TOL:
                ratio = T[i, ncols] / a
                if ratio < best - 1e-15:
                    best = ratio
                    leave = i
        if leave == -1:
            # cost is bounded below by zero, so this is numerical noise
            cost[enter] = 0.0
            continue
        piv = T[leave, enter]
        T[leave] /= piv
        for i in range(mr):
            if i != leave and T[i, enter] != 0.0:
                T[i] -= T[i, enter] * T[leave]
        if cost[enter] != 0.0:
            cost -= cost[enter] * T[leave]
        basis[leave] = enter
    else:
        raise RuntimeError("phase-1 simplex did not converge")

    infeas = -cost[ncols]   # current objective value
    if infeas > feas_tol:
        return False, z0.copy()
    d = np.zeros(n)
    for i in range(mr):
        b = basis[i]
        if b < n:
            d[b] += T[i, ncols]
        elif b < 2 * n:
            d[b - n] -= T[i, ncols]
    return True, z0 + d
