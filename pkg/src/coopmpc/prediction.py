"""Discrete double-integrator dynamics and stacked MPC prediction matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LinearDynamics:
    """x(k+1) = A x(k) + B u(k) for state [position, speed]."""

    A: np.ndarray
    B: np.ndarray
    tau: float


@dataclass(frozen=True)
class PredictionMatrices:
    """Stacked prediction X = M_x x0 + M_u U over n_p steps, n_c inputs.

    n_p = n_c + 1; the extra prediction step holds the last input, so the
    final block column is (A + I) B.
    """

    M_x: np.ndarray   # (2*n_p, 2)
    M_u: np.ndarray   # (2*n_p, n_c)
    n_p: int
    n_c: int


def build_dynamics(tau: float) -> LinearDynamics:
    """A = [[1, tau], [0, 1]], B = [tau^2/2, tau]."""
    if tau <= 0:
        raise ValueError(f"step length must be positive, got {tau}")
    A = np.array([[1.0, tau], [0.0, 1.0]])
    B = np.array([0.5 * tau * tau, tau])
    return LinearDynamics(A=A, B=B, tau=tau)


def build_prediction(dyn: LinearDynamics, n_p: int, n_c: int) -> PredictionMatrices:
    """Condensed prediction matrices with a terminal hold of the last input."""
    if n_p != n_c + 1:
        raise ValueError(f"prediction horizon must be control horizon + 1, "
                         f"got n_p={n_p}, n_c={n_c}")
    if n_c < 1:
        raise ValueError("control horizon must be at least 1")
    A, B = dyn.A, dyn.B
    # powers[k] = A^k
    powers = [np.eye(2)]
    for _ in range(n_p):
        powers.append(powers[-1] @ A)

    M_x = np.vstack([powers[n] for n in range(1, n_p + 1)])
    M_u = np.zeros((2 * n_p, n_c))
    for n in range(1, n_p + 1):          # prediction step
        for j in range(min(n, n_c)):     # input index
            M_u[2 * (n - 1):2 * n, j] += powers[n - 1 - j] @ B
        if n > n_c:                      # held last input
            M_u[2 * (n - 1):2 * n, n_c - 1] += powers[n - 1 - n_c] @ B
    return PredictionMatrices(M_x=M_x, M_u=M_u, n_p=n_p, n_c=n_c)


def predict(mats: PredictionMatrices, x0: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Stacked state sequence M_x x0 + M_u U, shape (2*n_p,)."""
    x0 = np.asarray(x0, dtype=float)
    u = np.asarray(u, dtype=float)
    if x0.shape != (2,):
        raise ValueError(f"state must have shape (2,), got {x0.shape}")
    if u.shape != (mats.n_c,):
        raise ValueError(f"input sequence must have shape ({mats.n_c},), got {u.shape}")
    return mats.M_x @ x0 + mats.M_u @ u


def simulate_with_hold(dyn: LinearDynamics, x0: np.ndarray, u: np.ndarray,
                       n_p: int) -> np.ndarray:
    """Step-by-step rollout of the dynamics with the last input held.

    Independent oracle for `predict`; kept free of the condensed matrices.
    """
    x0 = np.asarray(x0, dtype=float)
    u = np.asarray(u, dtype=float)
    out = np.empty(2 * n_p)
    state = x0.copy()
    for n in range(n_p):
        un = u[min(n, len(u) - 1)]
        state = dyn.A @ state + dyn.B * un
        out[2 * n:2 * n + 2] = state
    return out
