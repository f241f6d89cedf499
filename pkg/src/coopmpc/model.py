"""Core domain types: vehicle states, roles, cooperation levels, safety geometry.

Positions are vehicle centers in meters, speeds in m/s, SI throughout.
Experiment-facing speed inputs are in mph and converted on entry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

MPS_PER_MPH = 0.44704


class VehicleRole(Enum):
    """The five vehicles of a scenario: one lane-changing CAV, four CHDVs."""

    TCAV = "tcav"
    FHDV_NEAR = "fhdv_near"
    PHDV_NEAR = "phdv_near"
    FHDV_FAR = "fhdv_far"
    PHDV_FAR = "phdv_far"

    @property
    def is_chdv(self) -> bool:
        return self is not VehicleRole.TCAV


CHDV_ROLES = (VehicleRole.FHDV_NEAR, VehicleRole.PHDV_NEAR,
              VehicleRole.FHDV_FAR, VehicleRole.PHDV_FAR)


class CooperationLevel(Enum):
    """Active: velocity safety rows are hard. Inactive: bounded slack allowed."""

    ACTIVE = "active"
    INACTIVE = "inactive"


@dataclass(frozen=True)
class VehicleState:
    """Longitudinal/lateral position, speed and acceleration at one step."""

    x: float
    y: float
    v: float
    a: float = 0.0

    def __post_init__(self):
        if self.v < 0:
            raise ValueError(f"speed must be non-negative, got {self.v}")


@dataclass(frozen=True)
class SafetyParams:
    """Physical and safety parameters (defaults from the experiment setup)."""

    d_max: float = -5.08     # max deceleration, m/s^2 (negative)
    a_max: float = 5.08      # max acceleration, m/s^2
    a_max_L: float = 3.024   # max CAV longitudinal accel while lane changing
    a_s_r: float = 6.958     # rollover lateral-acceleration bound, m/s^2
    tau: float = 0.2         # step length, s
    l1: float = 5.0          # CAV <-> near-CHDV longitudinal safety distance, m
    l2: float = 10.0         # near <-> far CHDV longitudinal safety distance, m
    l_v: float = 4.0         # vehicle length, m
    r_buf: float = 3.0       # buffer-disc radius, m
    l_w: float = 3.7         # lane width, m

    def __post_init__(self):
        if not (self.d_max < 0 < self.a_max):
            raise ValueError("need d_max < 0 < a_max")
        if self.a_max_L > self.a_max:
            raise ValueError("a_max_L must not exceed a_max")
        if self.r_buf < self.l_v / 2:
            raise ValueError("buffer disc must cover the vehicle half-length")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.l1 <= 0 or self.l2 <= 0:
            raise ValueError("safety distances must be positive")
        if self.a_s_r <= 0:
            raise ValueError("a_s_r must be positive")


@dataclass(frozen=True)
class BufferDisc:
    """Safety disc around a vehicle; tangency already counts as a collision."""

    cx: float
    cy: float
    radius: float

    def clearance(self, other: "BufferDisc") -> float:
        d = math.hypot(self.cx - other.cx, self.cy - other.cy)
        return d - (self.radius + other.radius)


def disc_clearance(a: VehicleState, b: VehicleState, r_buf: float) -> float:
    """Signed clearance between two buffer discs; <= 0 means collision.

    Tangent discs (clearance exactly 0) are treated as a violation.
    """
    return math.hypot(a.x - b.x, a.y - b.y) - 2.0 * r_buf


def initial_headway(v: float, t_h: float, l_v: float) -> float:
    """Bumper-to-bumper spacing v*t_h for a follower at speed v.

    Center-to-center spacing of a consecutive same-lane pair is v*t_h + l_v.
    """
    if v < 0:
        raise ValueError(f"speed must be non-negative, got {v}")
    if t_h <= 0:
        raise ValueError(f"time headway must be positive, got {t_h}")
    return v * t_h


def mph_to_mps(v_mph: float) -> float:
    return v_mph * MPS_PER_MPH
