"""Closed-loop lane-change execution with the waiting-adjusting strategy.

Loop per step: re-plan the CAV's cubic against the projected end-position
window; if no plan exists before the maneuver started, the CAV waits at
constant speed (up to the wait budget) while the CHDV MPC keeps adjusting;
once started it follows the plan, re-planned every step. A run ends when the
CAV's lateral error reaches the completion tolerance, the wait budget expires
unused, or (never, by design) a buffer-disc collision occurs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import combinations

from .model import (CHDV_ROLES, CooperationLevel, SafetyParams, VehicleRole,
                    VehicleState, disc_clearance)
from .mpc import ControlDecision, CooperativeController, MpcConfig
from .scenario import Scenario, build_scenario, draw_speeds, place_cohort, scenario_rng
from .trajectory import (CubicPlan, future_end_positions, kinematic_step, plan_step,
                         remaining_duration, rollover_free_end, fit_cubic,
                         longitudinal_accel)


@dataclass(frozen=True)
class SimConfig:
    """Simulator knobs not owned by SafetyParams/MpcConfig."""

    t_headway: float = 1.0       # initial bumper-to-bumper headway per m/s
    lc_duration: float = 4.5     # nominal maneuver duration / projection horizon, s
    window_eps: float = 0.1      # margin making the strict window inequalities testable
    completion_tol: float = 0.05  # lateral error that ends the maneuver, m
    wait_budget: float = 2.0     # waiting-adjusting budget, s
    max_sim_time: float = 60.0   # hard cap per run, s
    slot_kp: float = 0.3         # waiting CAV slot-keeping position gain, 1/s^2
    slot_kv: float = 0.8         # waiting CAV slot-keeping speed gain, 1/s


@dataclass
class RunResult:
    """Outcome and safety metrics of one lane-change run."""

    initially_feasible: bool
    started_after_wait: bool     # plan found within the wait budget
    wait_steps: int
    lc_steps: int
    total_time: float
    collision: bool
    min_clearance: float
    min_longitudinal_gap_near: float
    min_longitudinal_gap_far: float
    aborted: bool
    infeasible_control_steps: int = 0
    max_relax_tier: int = 0
    max_gap_relaxation: float = 0.0   # largest elastic slack granted on spacing rows, m
    final_cav: VehicleState | None = None


@dataclass
class BiLaneResult:
    """Two chained lane changes; efficient means total time within 10 s."""

    first: RunResult
    second: RunResult | None
    total_time: float
    efficient: bool


@dataclass(frozen=True)
class BiLaneSpec:
    """Inputs of a bi-lane run: one velocity distribution, two cohorts."""

    mu_mph: float
    sigma_mph: float
    coop_first: dict[VehicleRole, CooperationLevel]
    coop_second: dict[VehicleRole, CooperationLevel]
    seed: int


EFFICIENT_TIME_LIMIT = 10.0


def advance(states: dict[VehicleRole, VehicleState],
            decisions: dict[VehicleRole, ControlDecision],
            plan: CubicPlan | None, params: SafetyParams,
            direction: float = 1.0, wait_accel: float = 0.0,
            ) -> dict[VehicleRole, VehicleState]:
    """One time step: CHDVs under their u(0), the CAV along its cubic.

    Applied inputs are clamped so no speed crosses zero; lateral CHDV
    positions stay fixed, the CAV's follows its plan at the new offset.
    Without a plan the CAV stays in lane under wait_accel.
    """
    tau = params.tau
    out: dict[VehicleRole, VehicleState] = {}
    for role in CHDV_ROLES:
        st = states[role]
        u = float(decisions[role].u[0]) if role in decisions else 0.0
        u = max(u, -st.v / tau)
        x, v = kinematic_step(st.x, st.v, u, tau)
        out[role] = VehicleState(x, st.y, v, u)

    cav = states[VehicleRole.TCAV]
    if plan is None:
        a = max(wait_accel, -cav.v / tau)
        x, v = kinematic_step(cav.x, cav.v, a, tau)
        out[VehicleRole.TCAV] = VehicleState(x, cav.y, v, a)
    else:
        a = min(max(plan.a_long, params.d_max), params.a_max_L)
        a = max(a, -cav.v / tau)
        x, v = kinematic_step(cav.x, cav.v, a, tau)
        y = cav.y - direction * plan.offset(x - cav.x)
        out[VehicleRole.TCAV] = VehicleState(x, y, v, a)
    return out


def _pair_metrics(states: dict[VehicleRole, VehicleState],
                  params: SafetyParams) -> tuple[float, float, float]:
    """(min disc clearance over all pairs, min near gap, min far gap)."""
    clearance = min(disc_clearance(states[a], states[b], params.r_buf)
                    for a, b in combinations(states, 2))
    near = min(states[VehicleRole.TCAV].x - states[VehicleRole.FHDV_NEAR].x,
               states[VehicleRole.PHDV_NEAR].x - states[VehicleRole.TCAV].x)
    far = min(states[VehicleRole.FHDV_NEAR].x - states[VehicleRole.FHDV_FAR].x,
              states[VehicleRole.PHDV_FAR].x - states[VehicleRole.PHDV_NEAR].x)
    return clearance, near, far


def _plan_or_none(states, y_target, theta, params, cfg) -> tuple[CubicPlan | None, float]:
    """Window-gated plan attempt; returns (plan, remaining nominal duration)."""
    cav = states[VehicleRole.TCAV]
    y_rem = abs(y_target - cav.y)
    t_rem = remaining_duration(y_rem, params.l_w, cfg.lc_duration, params.tau)
    window = future_end_positions(states[VehicleRole.FHDV_NEAR],
                                  states[VehicleRole.PHDV_NEAR], t_rem, params)
    plan = plan_step(cav, window, params, y_e=y_rem, theta_i=theta,
                     t_remaining=t_rem, eps=cfg.window_eps)
    return plan, t_rem


def _wait_accel(states: dict[VehicleRole, VehicleState], params: SafetyParams,
                cfg: SimConfig) -> float:
    """Slot-keeping acceleration for the waiting CAV.

    Zero when the CAV already rides the midpoint of the near pair at their
    mean speed (the nominal case, where it reduces to holding the original
    speed); otherwise a gentle pull that keeps the CAV longitudinally
    staggered inside its slot, since buffer discs are wider than a lane and
    blindly holding speed would sweep the CAV through its neighbours' discs.
    """
    cav = states[VehicleRole.TCAV]
    fn = states[VehicleRole.FHDV_NEAR]
    pn = states[VehicleRole.PHDV_NEAR]
    x_slot = 0.5 * (fn.x + pn.x)
    v_slot = 0.5 * (fn.v + pn.v)
    a = cfg.slot_kp * (x_slot - cav.x) + cfg.slot_kv * (v_slot - cav.v)
    return min(max(a, params.d_max), params.a_max_L)


def _forced_plan(cav: VehicleState, y_rem: float, theta: float, t_rem: float,
                 params: SafetyParams, cfg: SimConfig) -> CubicPlan:
    """Mid-maneuver fallback when the window momentarily closes: keep turning
    toward the target with the rollover-bound end position, ignoring the stale
    window (spacing stays guarded by the CHDV constraint rows)."""
    x_f = rollover_free_end(cav.v, y_rem, params.a_s_r)
    x_e = x_f + cfg.window_eps
    c1, c2, c3 = fit_cubic(theta, x_e, y_rem)
    a_long = max(params.d_max,
                 longitudinal_accel(cav.v, x_e, t_rem, params.a_max_L))
    return CubicPlan(theta_i=theta, x_e=x_e, y_e=y_rem, c1=c1, c2=c2, c3=c3,
                     a_long=a_long, u_i=cav.v)


def check_initial_feasibility(scenario: Scenario, params: SafetyParams = SafetyParams(),
                              cfg: SimConfig = SimConfig()) -> bool:
    """True iff the trajectory planner finds a plan for the initial states."""
    plan, _ = _plan_or_none(scenario.states, scenario.y_target, 0.0, params, cfg)
    return plan is not None


def run_lane_change(scenario: Scenario, wait_budget: float | None = None,
                    cfg: SimConfig = SimConfig(), mpc_cfg: MpcConfig = MpcConfig(),
                    params: SafetyParams = SafetyParams(),
                    controller: CooperativeController | None = None,
                    trace: list | None = None) -> RunResult:
    """Closed-loop run of one lane change under the waiting-adjusting strategy."""
    if wait_budget is None:
        wait_budget = cfg.wait_budget
    if controller is None:
        controller = CooperativeController(mpc_cfg, params)
    budget_steps = int(round(wait_budget / params.tau))
    max_steps = int(round(cfg.max_sim_time / params.tau))

    states = dict(scenario.states)
    coop = scenario.coop
    direction = scenario.direction
    y_target = scenario.y_target

    clearance, gap_near, gap_far = _pair_metrics(states, params)
    min_clear, min_near, min_far = clearance, gap_near, gap_far

    wait_steps = 0
    lc_steps = 0
    started = False
    aborted = False
    collision = False
    infeasible_steps = 0
    max_tier = 0
    max_gap_relax = 0.0
    theta = 0.0
    initially_feasible = False

    if clearance <= 0.0:   # overlapping spawn draw: nothing sane to simulate
        return RunResult(initially_feasible=False, started_after_wait=False,
                         wait_steps=0, lc_steps=0, total_time=0.0, collision=True,
                         min_clearance=min_clear, min_longitudinal_gap_near=min_near,
                         min_longitudinal_gap_far=min_far, aborted=True,
                         final_cav=states[VehicleRole.TCAV])

    for step in range(max_steps):
        cav = states[VehicleRole.TCAV]
        plan, t_rem = _plan_or_none(states, y_target, theta, params, cfg)
        if step == 0:
            initially_feasible = plan is not None

        wait_accel = 0.0
        if started:
            if plan is None:
                plan = _forced_plan(cav, abs(y_target - cav.y), theta, t_rem, params, cfg)
            res = controller.step(states, plan, coop, direction)
        else:
            # a step only starts the maneuver if the planner found a window
            # AND every CHDV subproblem accepts the planned path; otherwise
            # the CAV keeps its slot at constant-ish speed and the CHDVs
            # keep adjusting
            res = None
            if plan is not None:
                tentative = controller.step(states, plan, coop, direction)
                if not tentative.infeasible:
                    started = True
                    res = tentative
            if res is None:
                if wait_steps >= budget_steps:
                    aborted = True
                    break
                wait_steps += 1
                plan = None
                wait_accel = _wait_accel(states, params, cfg)
                res = controller.step(states, None, coop, direction,
                                      wait_accel=wait_accel)

        if res.infeasible:
            infeasible_steps += 1
            for dec in res.decisions.values():
                max_tier = max(max_tier, dec.relax_tier)
                if dec.relax_tier >= 2:
                    max_gap_relax = max(max_gap_relax, dec.relax_amount)

        new_states = advance(states, res.decisions, plan if started else None,
                             params, direction, wait_accel)
        if started:
            lc_steps += 1
            dx = new_states[VehicleRole.TCAV].x - cav.x
            theta = math.atan(-plan.slope(dx))

        if trace is not None:
            trace.append(_trace_record(step, params.tau, states, res, plan if started else None,
                                       started, min_clear))
        states = new_states

        clearance, gap_near, gap_far = _pair_metrics(states, params)
        min_clear = min(min_clear, clearance)
        min_near = min(min_near, gap_near)
        min_far = min(min_far, gap_far)
        if clearance <= 0.0:
            collision = True
            aborted = not started
            break

        if started and abs(y_target - states[VehicleRole.TCAV].y) <= cfg.completion_tol:
            break
    else:
        aborted = True

    total_time = (wait_steps + lc_steps) * params.tau
    return RunResult(initially_feasible=initially_feasible,
                     started_after_wait=started,
                     wait_steps=wait_steps, lc_steps=lc_steps, total_time=total_time,
                     collision=collision, min_clearance=min_clear,
                     min_longitudinal_gap_near=min_near, min_longitudinal_gap_far=min_far,
                     aborted=aborted, infeasible_control_steps=infeasible_steps,
                     max_relax_tier=max_tier, max_gap_relaxation=max_gap_relax,
                     final_cav=states[VehicleRole.TCAV])


def run_bi_lane_change(spec: BiLaneSpec, wait_budget: float | None = None,
                       cfg: SimConfig = SimConfig(), mpc_cfg: MpcConfig = MpcConfig(),
                       params: SafetyParams = SafetyParams(),
                       controller: CooperativeController | None = None) -> BiLaneResult:
    """Two consecutive lane changes against independent cohorts.

    Stage 2 rebuilds the cohort one lane further over, placed around the
    CAV's stage-1 exit state with the same headway rule and a derived seed.
    """
    if controller is None:
        controller = CooperativeController(mpc_cfg, params)
    first_scen = build_scenario(spec.mu_mph, spec.sigma_mph, spec.coop_first,
                                spec.seed, params, cfg.t_headway)
    first = run_lane_change(first_scen, wait_budget, cfg, mpc_cfg, params, controller)
    if aborted_or_failed(first):
        return BiLaneResult(first=first, second=None, total_time=first.total_time,
                            efficient=False)

    cav = first.final_cav
    y2_source = first_scen.y_target
    y2_target = y2_source + first_scen.direction * params.l_w
    rng = scenario_rng(spec.seed, salt=1)
    speeds = draw_speeds(spec.mu_mph, spec.sigma_mph, rng)
    xs = place_cohort(speeds, cav_x=cav.x, t_h=cfg.t_headway, params=params)
    states = {VehicleRole.TCAV: VehicleState(cav.x, y2_source, cav.v)}
    for role in CHDV_ROLES:
        states[role] = VehicleState(xs[role], y2_target, speeds[role])
    second_scen = Scenario(states=states, coop=dict(spec.coop_second),
                           y_source=y2_source, y_target=y2_target, seed=spec.seed)
    second = run_lane_change(second_scen, wait_budget, cfg, mpc_cfg, params, controller)
    total = first.total_time + second.total_time
    efficient = (not aborted_or_failed(second)) and total <= EFFICIENT_TIME_LIMIT
    return BiLaneResult(first=first, second=second, total_time=total, efficient=efficient)


def aborted_or_failed(run: RunResult) -> bool:
    return run.aborted or run.collision or not run.started_after_wait


def _trace_record(step: int, tau: float, states, res, plan, started, min_clear) -> dict:
    rec = {
        "step": step,
        "t": round(step * tau, 9),
        "started": started,
        "feasible_plan": plan is not None,
        "vehicles": {r.value: [states[r].x, states[r].y, states[r].v, states[r].a]
                     for r in states},
        "u": {r.value: float(res.decisions[r].u[0]) for r in res.decisions},
        "delta": {r.value: float(res.decisions[r].delta[0]) for r in res.decisions},
        "min_clearance": min_clear,
    }
    return rec


def export_trace(records: list[dict], path: str) -> None:
    """Line-delimited JSON, one record per step."""
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
