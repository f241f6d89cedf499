"""CAV lane-change trajectory planning.

Each step plans a cubic lateral profile y(x) over a longitudinal span x_e,
where x_e must clear the rollover-free bound and land strictly inside the
window spanned by the near CHDVs' projected end positions. The planner works
in a "printed" frame where the cubic runs from offset 0 down to -y_e; callers
apply the lane-change direction sign.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import SafetyParams, VehicleState


@dataclass(frozen=True)
class CubicPlan:
    """One step's lane-change plan: cubic coefficients plus the speed plan."""

    theta_i: float   # initial course angle, rad
    x_e: float       # longitudinal end position relative to plan origin, m
    y_e: float       # lateral displacement magnitude still to cover, m
    c1: float
    c2: float
    c3: float
    a_long: float    # planned longitudinal acceleration for this step, m/s^2
    u_i: float       # speed along the motion direction at plan time, m/s

    def offset(self, x: float) -> float:
        """Lateral offset of the cubic at x (clamped to the plan span).

        Runs from 0 at x=0 to -y_e at x=x_e; beyond x_e the vehicle holds the
        target lateral position.
        """
        if x >= self.x_e:
            return -self.y_e
        if x <= 0.0:
            return 0.0
        return self.c1 * x + self.c2 * x * x + self.c3 * x * x * x

    def slope(self, x: float) -> float:
        if x >= self.x_e or x < 0.0:
            return 0.0
        return self.c1 + 2.0 * self.c2 * x + 3.0 * self.c3 * x * x

    def curvature(self, x: float) -> float:
        """Second derivative y''(x) inside the plan span."""
        return 2.0 * self.c2 + 6.0 * self.c3 * x


@dataclass(frozen=True)
class EndPositionWindow:
    """Admissible absolute end positions: lower < x_e < upper."""

    lower: float
    upper: float

    @property
    def is_empty(self) -> bool:
        return not (self.upper > self.lower)


def rollover_free_end(u_i: float, y_e: float, a_s_r: float) -> float:
    """Minimum rollover-safe longitudinal end position u_i*sqrt(6*y_e/a_s_r).

    End positions in (x_f, inf) keep lateral acceleration under a_s_r for a
    straight-entry plan.
    """
    if y_e <= 0:
        raise ValueError(f"lateral span must be positive, got {y_e}")
    if a_s_r <= 0:
        raise ValueError(f"rollover bound must be positive, got {a_s_r}")
    if u_i < 0:
        raise ValueError(f"speed must be non-negative, got {u_i}")
    return 6.0 * y_e * u_i / math.sqrt(6.0 * y_e * a_s_r)


def fit_cubic(theta_i: float, x_e: float, y_e: float) -> tuple[float, float, float]:
    """Cubic coefficients (c1, c2, c3) with y(0)=0, y'(0)=-tan(theta_i),
    y(x_e)=-y_e, y'(x_e)=0."""
    if x_e <= 0:
        raise ValueError(f"end position must be positive, got {x_e}")
    t = math.tan(theta_i)
    c1 = -t
    c2 = (2.0 * x_e * t - 3.0 * y_e) / (x_e * x_e)
    c3 = (2.0 * y_e - x_e * t) / (x_e * x_e * x_e)
    return c1, c2, c3


def longitudinal_accel(u_i: float, x_target: float, T: float, a_max_L: float) -> float:
    """Acceleration covering x_target in time T from speed u_i, capped at a_max_L."""
    if T <= 0:
        raise ValueError(f"duration must be positive, got {T}")
    raw = 2.0 * (x_target - u_i * T) / (T * T)
    return min(raw, a_max_L)


def future_end_positions(fhdv: VehicleState, phdv: VehicleState, t_lc: float,
                         params: SafetyParams) -> EndPositionWindow:
    """Admissible CAV end-position window from constant-velocity projections.

    Projects both near CHDVs forward by t_lc and pads by l1 + l_v so a CAV
    center inside the window keeps the bumper gap l1 to both. An empty window
    is a valid "no gap" answer.
    """
    if t_lc <= 0:
        raise ValueError(f"projection horizon must be positive, got {t_lc}")
    margin = params.l1 + params.l_v
    e_f = fhdv.x + fhdv.v * t_lc
    e_p = phdv.x + phdv.v * t_lc
    return EndPositionWindow(lower=e_f + margin, upper=e_p - margin)


def remaining_duration(y_rem: float, y_full: float, t_nominal: float,
                       t_min: float) -> float:
    """Time left in a nominal S-curve maneuver given the remaining lateral offset.

    Inverts r = 3s^2 - 2s^3 for the remaining time fraction s (bisection).
    """
    if y_full <= 0 or t_nominal <= 0:
        raise ValueError("nominal maneuver span and duration must be positive")
    r = min(1.0, max(0.0, y_rem / y_full))
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if 3.0 * mid * mid - 2.0 * mid ** 3 < r:
            lo = mid
        else:
            hi = mid
    return max(t_min, 0.5 * (lo + hi) * t_nominal)


def plan_step(cav: VehicleState, window: EndPositionWindow, params: SafetyParams,
              y_e: float, theta_i: float = 0.0, t_remaining: float | None = None,
              eps: float = 0.1) -> CubicPlan | None:
    """One planning pass: pick an admissible end position, or None.

    The candidate set is (x_f, inf) intersected with the window (both made
    CAV-relative); eps enforces the strict inequalities. Among admissible end
    positions the one nearest the constant-speed landing point u_i*t_remaining
    is taken, so the speed plan stays bounded as the maneuver runs down; with
    the default rollover-limited t_remaining that landing point is x_f and the
    choice reduces to the smallest admissible position max(x_f+eps, lower+eps).
    """
    x_f = rollover_free_end(cav.v, y_e, params.a_s_r)
    if t_remaining is None:
        t_remaining = max(params.tau, math.sqrt(6.0 * y_e / params.a_s_r))
    floor = max(x_f + eps, window.lower - cav.x + eps, eps)
    ceil = window.upper - cav.x - eps
    if ceil < floor:
        return None
    x_e = min(max(cav.v * t_remaining, floor), ceil)
    c1, c2, c3 = fit_cubic(theta_i, x_e, y_e)
    a_long = max(params.d_max, longitudinal_accel(cav.v, x_e, t_remaining, params.a_max_L))
    return CubicPlan(theta_i=theta_i, x_e=x_e, y_e=y_e, c1=c1, c2=c2, c3=c3,
                     a_long=a_long, u_i=cav.v)


def reference_horizon(plan: CubicPlan, cav: VehicleState, n_p: int, tau: float,
                      params: SafetyParams, direction: float = 1.0,
                      ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Roll the CAV forward n_p steps along its plan: arrays (x, y, v).

    Longitudinal motion integrates a_long clamped to [d_max, a_max_L] with the
    speed floored at zero; lateral values follow the cubic at the rolled
    longitudinal offsets.
    """
    a = min(max(plan.a_long, params.d_max), params.a_max_L)
    xs = np.empty(n_p)
    ys = np.empty(n_p)
    vs = np.empty(n_p)
    x, v = cav.x, cav.v
    for n in range(n_p):
        x, v = kinematic_step(x, v, a, tau)
        xs[n] = x
        vs[n] = v
        ys[n] = cav.y - direction * plan.offset(x - cav.x)
    return xs, ys, vs


def kinematic_step(x: float, v: float, a: float, tau: float) -> tuple[float, float]:
    """Advance (x, v) by one step of constant-acceleration motion, never reversing."""
    v_next = v + a * tau
    if v_next >= 0.0:
        return x + v * tau + 0.5 * a * tau * tau, v_next
    # decelerates to rest inside the step
    if a >= 0.0 or v <= 0.0:
        return x, 0.0
    return x - v * v / (2.0 * a), 0.0
