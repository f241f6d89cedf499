"""Standalone KKT verifier for QP solutions.

Deliberately shares no code with the solver backends: it re-derives every
condition from the raw instance and the reported point/duals, so a solver bug
cannot hide behind its own bookkeeping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import QpSolution, QuadraticProgram


@dataclass(frozen=True)
class KktReport:
    ok: bool
    primal: float          # worst constraint violation
    dual: float            # worst negative multiplier (0 if none)
    complementarity: float # worst |lambda_i * residual_i|, scaled
    stationarity: float    # ||H z + g + A' lambda + bound terms||_inf


def verify_kkt(qp: QuadraticProgram, sol: QpSolution, tol: float = 1e-8) -> KktReport:
    """Check primal/dual feasibility, complementary slackness and stationarity."""
    z = sol.z
    lam_in, lam_ub, lam_lb = sol.duals_in, sol.duals_ub, sol.duals_lb

    res_in = qp.A_in @ z - qp.b_in if qp.m else np.zeros(0)
    res_ub = np.where(np.isfinite(qp.ub), z - qp.ub, -np.inf)
    res_lb = np.where(np.isfinite(qp.lb), qp.lb - z, -np.inf)
    residuals = np.concatenate([res_in, res_ub, res_lb])
    duals = np.concatenate([lam_in, lam_ub, lam_lb])

    finite = np.isfinite(residuals)
    h_scale = 1.0 + (np.max(np.abs(residuals[finite])) if finite.any() else 0.0)
    primal = float(np.max(residuals[finite])) if finite.any() else 0.0
    dual = float(max(0.0, -np.min(duals))) if duals.size else 0.0

    comp = 0.0
    for lam_i, r_i in zip(duals, residuals):
        if np.isfinite(r_i):
            comp = max(comp, abs(lam_i * r_i) / ((1.0 + abs(lam_i)) * (1.0 + abs(r_i))))

    grad = qp.H @ z + qp.g + qp.A_in.T @ lam_in + lam_ub - lam_lb
    stat = float(np.max(np.abs(grad)))
    stat_scale = 1.0 + float(np.max(np.abs(qp.g))) + float(np.max(np.abs(qp.H @ z)))

    ok = (primal <= tol * h_scale
          and dual <= tol * (1.0 + float(np.max(np.abs(duals))) if duals.size else 1.0)
          and comp <= tol
          and stat <= tol * stat_scale)
    return KktReport(ok=ok, primal=primal, dual=dual, complementarity=comp,
                     stationarity=stat)
