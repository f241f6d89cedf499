"""Dense convex QP solving for the per-step MPC subproblems.

minimize    0.5 z' H z + g' z
subject to  A_in z <= b_in,  lb <= z <= ub

The numerical core is a primal active-set method with a phase-1 simplex for
feasible starts, implemented twice: a compiled Cython kernel (coopmpc.qp._core)
and a numpy fallback (_pysolver). The compiled kernel is selected at import
when available; set COOPMPC_QP_BACKEND=python|c to force one.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import _pysolver
from ._pysolver import BIG_RHS, VACUOUS_RHS

_core = None
if os.environ.get("COOPMPC_QP_BACKEND", "") != "python":
    try:
        import importlib
        _core = importlib.import_module(__name__ + "._core")
    except ImportError:
        _core = None
if os.environ.get("COOPMPC_QP_BACKEND", "") == "c" and _core is None:
    raise ImportError("COOPMPC_QP_BACKEND=c requested but the compiled core is missing")

_impl = _core if _core is not None else _pysolver


def backend_name() -> str:
    """Which solver kernel is active: 'c' (compiled) or 'python'."""
    return "c" if _impl is not _pysolver else "python"


class QpStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITER = "max_iter"


_STATUS_BY_CODE = {0: QpStatus.OPTIMAL, 1: QpStatus.INFEASIBLE, 2: QpStatus.MAX_ITER}


@dataclass
class QuadraticProgram:
    """Dense convex QP instance; missing pieces default to unconstrained."""

    H: np.ndarray
    g: np.ndarray
    A_in: np.ndarray | None = None
    b_in: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        self.g = np.atleast_1d(np.asarray(self.g, dtype=float))
        n = self.g.shape[0]
        if self.H.shape != (n, n):
            raise ValueError(f"H must be {n}x{n}, got {self.H.shape}")
        if self.A_in is None:
            self.A_in = np.zeros((0, n))
            self.b_in = np.zeros(0)
        else:
            self.A_in = np.atleast_2d(np.asarray(self.A_in, dtype=float))
            self.b_in = np.atleast_1d(np.asarray(self.b_in, dtype=float))
            if self.A_in.shape != (self.b_in.shape[0], n):
                raise ValueError("A_in/b_in shapes disagree")
        self.lb = (np.full(n, -np.inf) if self.lb is None
                   else np.atleast_1d(np.asarray(self.lb, dtype=float)))
        self.ub = (np.full(n, np.inf) if self.ub is None
                   else np.atleast_1d(np.asarray(self.ub, dtype=float)))
        if np.any(self.lb > self.ub):
            raise ValueError("box bounds must satisfy lb <= ub")

    @property
    def n(self) -> int:
        return self.g.shape[0]

    @property
    def m(self) -> int:
        return self.A_in.shape[0]


@dataclass
class QpSolution:
    """Certified solution: point, objective, status, residuals and duals."""

    z: np.ndarray
    objective: float
    status: QpStatus
    primal_residual: float
    stationarity_residual: float
    duals_in: np.ndarray = field(repr=False, default=None)
    duals_lb: np.ndarray = field(repr=False, default=None)
    duals_ub: np.ndarray = field(repr=False, default=None)
    iterations: int = 0


def _validated_pd(H: np.ndarray) -> np.ndarray:
    """Symmetry/PSD gate; returns a strictly PD copy (microscopic shift if singular)."""
    scale = 1.0 + np.max(np.abs(H))
    if np.max(np.abs(H - H.T)) > 1e-8 * scale:
        raise ValueError("H must be symmetric")
    Hs = 0.5 * (H + H.T)
    try:
        np.linalg.cholesky(Hs)
        return Hs
    except np.linalg.LinAlgError:
        pass
    w_min = float(np.linalg.eigvalsh(Hs)[0])
    if w_min < -1e-9 * scale:
        raise ValueError(f"H is not positive semidefinite (min eigenvalue {w_min:g})")
    shift = max(0.0, -w_min) + 1e-10 * scale
    return Hs + shift * np.eye(Hs.shape[0])


def unify_rows(qp: QuadraticProgram) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Expand boxes into rows: G z <= h in the fixed order [A_in, ub, lb].

    Infinite bounds become placeholder rows with h = BIG_RHS that the
    backends skip; keeping them preserves row indexing across instances.
    """
    n = qp.n
    eye = np.eye(n)
    G = np.vstack([qp.A_in, eye, -eye])
    h_ub = np.where(np.isfinite(qp.ub), qp.ub, BIG_RHS)
    h_lb = np.where(np.isfinite(qp.lb), -qp.lb, BIG_RHS)
    h = np.concatenate([qp.b_in, h_ub, h_lb])
    z0 = np.clip(np.zeros(n), qp.lb, qp.ub)
    return G, h, z0


def solve(qp: QuadraticProgram, tol: float = 1e-8, max_iter: int = 200) -> QpSolution:
    """Solve the QP; deterministic for identical inputs.

    Infeasible constraint sets are certified by the phase-1 simplex and
    reported as a status, never "solved" with penalties.
    """
    H = _validated_pd(qp.H)
    G, h, z0 = unify_rows(qp)
    z, lam, code, iters, primal, stat = _impl.solve_unified(
        H, qp.g, G, h, z0, tol, max_iter)
    z = np.asarray(z)
    lam = np.asarray(lam)
    m, n = qp.m, qp.n
    obj = float(0.5 * z @ qp.H @ z + qp.g @ z)
    return QpSolution(z=z, objective=obj, status=_STATUS_BY_CODE[int(code)],
                      primal_residual=float(primal), stationarity_residual=float(stat),
                      duals_in=lam[:m], duals_ub=lam[m:m + n], duals_lb=lam[m + n:],
                      iterations=int(iters))


def check_feasible(qp: QuadraticProgram, tol: float = 1e-8) -> bool:
    """True iff a point satisfying all constraints within tol scaling exists."""
    G, h, z0 = unify_rows(qp)
    return bool(_impl.check_feasible_unified(G, h, z0, tol))
