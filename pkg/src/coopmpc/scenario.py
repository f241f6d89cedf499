"""Scenario construction: seeded speed draws and headway-based initial placement."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import (CHDV_ROLES, CooperationLevel, SafetyParams, VehicleRole,
                    VehicleState, initial_headway, mph_to_mps)

# Fixed draw order so a seed pins every speed regardless of caller.
_DRAW_ORDER = (VehicleRole.TCAV, VehicleRole.FHDV_NEAR, VehicleRole.PHDV_NEAR,
               VehicleRole.FHDV_FAR, VehicleRole.PHDV_FAR)

COOP_COMBOS = {
    "none": (),
    "fhdv": (VehicleRole.FHDV_NEAR, VehicleRole.FHDV_FAR),
    "phdv": (VehicleRole.PHDV_NEAR, VehicleRole.PHDV_FAR),
    "near": (VehicleRole.FHDV_NEAR, VehicleRole.PHDV_NEAR),
    "far": (VehicleRole.FHDV_FAR, VehicleRole.PHDV_FAR),
    "all": CHDV_ROLES,
}


def coop_assignment(name: str) -> dict[VehicleRole, CooperationLevel]:
    """Named cooperation combo -> role assignment ('none', 'fhdv', 'phdv', 'near', 'far', 'all')."""
    try:
        active = COOP_COMBOS[name]
    except KeyError:
        raise ValueError(f"unknown cooperation combo {name!r}; "
                         f"choose from {sorted(COOP_COMBOS)}") from None
    return {r: (CooperationLevel.ACTIVE if r in active else CooperationLevel.INACTIVE)
            for r in CHDV_ROLES}


@dataclass(frozen=True)
class Scenario:
    """Initial states plus lane geometry for one lane-change run."""

    states: dict[VehicleRole, VehicleState]
    coop: dict[VehicleRole, CooperationLevel]
    y_source: float
    y_target: float
    seed: int

    @property
    def direction(self) -> float:
        return 1.0 if self.y_target >= self.y_source else -1.0


def scenario_rng(seed: int, salt: int = 0) -> np.random.Generator:
    """Deterministic generator; salt > 0 derives an independent substream."""
    if salt == 0:
        return np.random.default_rng(seed)
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(salt,)))


def draw_speeds(mu_mph: float, sigma_mph: float,
                rng: np.random.Generator) -> dict[VehicleRole, float]:
    """Five Normal(mu, sigma) speeds in mph, converted to m/s, truncated at 0."""
    if mu_mph <= 0:
        raise ValueError("mean speed must be positive")
    if sigma_mph < 0:
        raise ValueError("speed standard deviation must be non-negative")
    draws = rng.normal(mph_to_mps(mu_mph), mph_to_mps(sigma_mph), size=len(_DRAW_ORDER))
    return {role: max(0.0, float(d)) for role, d in zip(_DRAW_ORDER, draws)}


def place_cohort(speeds: dict[VehicleRole, float], cav_x: float, t_h: float,
                 params: SafetyParams) -> dict[VehicleRole, float]:
    """Longitudinal centers for the four CHDVs around a CAV at cav_x.

    Consecutive same-lane spacing is the follower's headway plus l_v; the CAV
    sits midway between the two near CHDVs. Spacings are floored so the
    framework's standing safety requirements (l1 to the CAV, l2 between
    near/far) already hold at t=0; otherwise slow-speed draws would spawn
    states outside every controller's feasible set.
    """
    floor_near = 2.0 * params.l1 + 1.0
    floor_far = params.l2 + 0.5
    gap_near = max(initial_headway(speeds[VehicleRole.FHDV_NEAR], t_h, params.l_v)
                   + params.l_v, floor_near)
    x_fn = cav_x - gap_near / 2.0
    x_pn = cav_x + gap_near / 2.0
    x_ff = x_fn - max(initial_headway(speeds[VehicleRole.FHDV_FAR], t_h, params.l_v)
                      + params.l_v, floor_far)
    x_pf = x_pn + max(initial_headway(speeds[VehicleRole.PHDV_NEAR], t_h, params.l_v)
                      + params.l_v, floor_far)
    return {VehicleRole.FHDV_NEAR: x_fn, VehicleRole.PHDV_NEAR: x_pn,
            VehicleRole.FHDV_FAR: x_ff, VehicleRole.PHDV_FAR: x_pf}


def build_scenario(mu_mph: float, sigma_mph: float,
                   coop: dict[VehicleRole, CooperationLevel], seed: int,
                   params: SafetyParams = SafetyParams(), t_h: float = 1.0,
                   y_source: float = 0.0, y_target: float | None = None,
                   rng: np.random.Generator | None = None) -> Scenario:
    """Seeded initial condition: CAV on the source lane, 4 CHDVs on the target lane.

    Ordering FHDV_far < FHDV_near < TCAV < PHDV_near < PHDV_far always holds;
    the CAV starts centered between the near pair, laterally one lane over.
    """
    if y_target is None:
        y_target = y_source + params.l_w
    if rng is None:
        rng = scenario_rng(seed)
    speeds = draw_speeds(mu_mph, sigma_mph, rng)
    xs = place_cohort(speeds, cav_x=0.0, t_h=t_h, params=params)

    states = {VehicleRole.TCAV: VehicleState(0.0, y_source, speeds[VehicleRole.TCAV])}
    for role in CHDV_ROLES:
        states[role] = VehicleState(xs[role], y_target, speeds[role])
    return Scenario(states=states, coop=dict(coop), y_source=y_source,
                    y_target=y_target, seed=seed)
