"""Per-step MPC subproblems for the four controlled CHDVs.

Each CHDV solves a small dense QP over z = [u(0..Nc-1), delta(0..Nc-1)]:
tracking of a reference, input and jerk penalties, slack penalties, hard
spacing rows, buffer-disc rows against the CAV's planned path, and
secondary-collision acceleration rows against the far neighbour. Near
vehicles constrain against the CAV; far vehicles against their near
partner's freshly predicted stack (solve order: near before far).

Cooperation enters twice: Active vehicles track the shifted leader reference
(they deliberately open the gap) with hard velocity rows; Inactive vehicles
track their own constant-speed projection and merely comply with the
constraint rows, velocity rows slackened by up to delta_max.

The controller's hot path reuses per-role templates whose constraint matrix
is constant; per step only the cost vector and right-hand sides are filled
(rows toggle via a vacuous RHS the solver skips).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .model import CooperationLevel, SafetyParams, VehicleRole, VehicleState
from .prediction import PredictionMatrices, build_dynamics, build_prediction, predict
from .qp import (BIG_RHS, QpStatus, QuadraticProgram, _impl, _validated_pd,
                 solve as qp_solve)
from .trajectory import CubicPlan, kinematic_step, reference_horizon


class Side(Enum):
    """Whether the vehicle stays behind (-1) or ahead (+1) of its reference."""

    FOLLOWING = -1.0
    PRECEDING = 1.0


@dataclass(frozen=True)
class MpcConfig:
    """Horizons and weights; defaults are the experiment's parameter table."""

    n_p: int = 5
    n_c: int = 4
    q: float = 10.0        # state-tracking weight (applied to both components)
    r: float = 10.0        # input weight
    p: float = 15.0        # velocity-slack weight
    delta_max: float = 2.0  # slack cap for Inactive cooperation, m/s
    gap_margin: float = 2.0  # extra tracking gap beyond the hard spacing, m
    disc_margin: float = 0.1  # strictness pad on buffer-disc rows (tangency is forbidden), m
    tol: float = 1e-8
    max_iter: int = 200

    def __post_init__(self):
        if self.n_p != self.n_c + 1:
            raise ValueError("prediction horizon must be control horizon + 1")


@dataclass
class ControlDecision:
    """Optimized inputs/slacks plus the predicted stack actually implied by them."""

    u: np.ndarray
    delta: np.ndarray
    predicted: np.ndarray | None
    objective: float
    status: QpStatus
    relax_tier: int = 0       # 0 = clean solve; 1..3 = elastic fallback level
    relax_amount: float = 0.0  # elastic slack actually granted (m-scale rows)


@dataclass
class StepResult:
    """One controller step: all four decisions plus the infeasibility flag."""

    decisions: dict[VehicleRole, ControlDecision]
    infeasible: bool
    cav_ref: tuple[np.ndarray, np.ndarray, np.ndarray]   # (x, y, v) horizon


def jerk_matrix(n_c: int) -> np.ndarray:
    """Differencing quadratic form: u' C u = sum (u_{i+1} - u_i)^2."""
    if n_c < 2:
        raise ValueError("jerk cost needs at least two inputs")
    C = np.zeros((n_c, n_c))
    for i in range(n_c - 1):
        C[i, i] += 1.0
        C[i + 1, i + 1] += 1.0
        C[i, i + 1] -= 1.0
        C[i + 1, i] -= 1.0
    return C


# row kinds, in emission order (used by the elastic fallback tiers)
ROW_POS = "pos"
ROW_VEL = "vel"
ROW_VEL_TERM = "vel_term"
ROW_DISC = "disc"
ROW_SEC = "sec"

# escalation order: cooperation promises soften first, spacing next, the
# secondary anti-rear-end rows after that; the buffer-disc rows go strictly
# last and никогда fire in practice
_TIER_SOFT = {
    1: {ROW_VEL, ROW_VEL_TERM},
    2: {ROW_VEL, ROW_VEL_TERM, ROW_POS},
    3: {ROW_VEL, ROW_VEL_TERM, ROW_POS, ROW_SEC},
    4: {ROW_VEL, ROW_VEL_TERM, ROW_POS, ROW_SEC, ROW_DISC},
}


class QpTemplate:
    """Precomputed structure for one (side, spacing) QP family.

    Constraint rows reference the leader (CAV plan or near prediction). Row
    layout is fixed: [pos x n_p, vel x n_c, vel_term, disc x n_p, sec x n_c];
    disc/sec rows toggle per step through a vacuous RHS. `fill` updates the
    cost vector and RHS in place; `build` materializes a QuadraticProgram
    with only the active rows (public API and elastic fallbacks).
    """

    def __init__(self, side: Side, spacing: float, cfg: MpcConfig,
                 params: SafetyParams, with_disc: bool, with_secondary: bool):
        self.side = side
        self.spacing = spacing
        self.cfg = cfg
        self.params = params
        self.with_disc = with_disc
        self.with_secondary = with_secondary
        self.shift = spacing + params.l_v + cfg.gap_margin

        dyn = build_dynamics(params.tau)
        self.mats: PredictionMatrices = build_prediction(dyn, cfg.n_p, cfg.n_c)
        Mu, Mx = self.mats.M_u, self.mats.M_x
        self.Mu_pos, self.Mx_pos = Mu[0::2], Mx[0::2]
        self.Mu_vel, self.Mx_vel = Mu[1::2], Mx[1::2]

        n_c, n_p = cfg.n_c, cfg.n_p
        self.n = 2 * n_c
        H = np.zeros((self.n, self.n))
        H[:n_c, :n_c] = 2.0 * (cfg.q * Mu.T @ Mu + cfg.r * np.eye(n_c) + jerk_matrix(n_c))
        H[n_c:, n_c:] = 2.0 * cfg.p * np.eye(n_c)
        self.H = H
        self.H_pd = _validated_pd(H)
        self.K_g = 2.0 * cfg.q * Mu.T    # g_u = K_g @ (Mx x0 - target stack)

        s = side.value
        A_pos = np.hstack([-s * self.Mu_pos, np.zeros((n_p, n_c))])
        A_vel = np.vstack([np.hstack([-s * self.Mu_vel[:n_c], -np.eye(n_c)]),
                           np.hstack([-s * self.Mu_vel[-1:], np.zeros((1, n_c))])])
        blocks = [A_pos, A_vel]
        self.kinds = [ROW_POS] * n_p + [ROW_VEL] * n_c + [ROW_VEL_TERM]
        self._disc_at = self._sec_at = None
        if with_disc:
            self._disc_at = len(self.kinds)
            blocks.append(A_pos)
            self.kinds += [ROW_DISC] * n_p
        if with_secondary:
            # following: -u <= -(d_max + lift); preceding: u <= a_max - lift
            self._sec_at = len(self.kinds)
            blocks.append(np.hstack([s * np.eye(n_c), np.zeros((n_c, n_c))]))
            self.kinds += [ROW_SEC] * n_c
        self.A_rows = np.vstack(blocks)
        self.m_in = self.A_rows.shape[0]
        self.kinds_arr = np.array(self.kinds)

        # unified form: [A_rows, ub rows, lb rows], boxes constant per delta cap
        self.G_unified = np.ascontiguousarray(
            np.vstack([self.A_rows, np.eye(self.n), -np.eye(self.n)]))
        self._h = np.empty(self.m_in + 2 * self.n)
        self._h_box = {}
        for cap in (0.0, cfg.delta_max):
            ub = np.concatenate([np.full(n_c, params.a_max), np.full(n_c, cap)])
            lb = np.concatenate([np.full(n_c, params.d_max), np.zeros(n_c)])
            self._h_box[cap] = (np.concatenate([ub, -lb]), lb, ub)
        self._z0 = np.zeros(self.n)
        self._target = np.empty(2 * n_p)
        self._steps = np.arange(1.0, n_p + 1.0)

    def delta_cap(self, coop: CooperationLevel) -> float:
        return 0.0 if coop is CooperationLevel.ACTIVE else self.cfg.delta_max

    def fill(self, x0: np.ndarray, ref_x: np.ndarray, ref_v: np.ndarray,
             delta_cap: float, track_own: bool, dy: np.ndarray | None = None,
             far_gap: float | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Cost vector and unified RHS for the current state and reference."""
        cfg, params = self.cfg, self.params
        s = self.side.value
        n_c, n_p = cfg.n_c, cfg.n_p

        target = self._target
        if track_own:
            target[0::2] = x0[0] + x0[1] * params.tau * self._steps
            target[1::2] = x0[1]
        else:
            target[0::2] = ref_x + s * self.shift
            target[1::2] = ref_v
        g = np.zeros(self.n)
        g[:n_c] = self.K_g @ (self.mats.M_x @ x0 - target)

        pos_ref = s * (ref_x - self.Mx_pos @ x0)
        vel_ref = s * (ref_v - self.Mx_vel @ x0)
        h = self._h
        h[:n_p] = -self.spacing - pos_ref
        h[n_p:n_p + n_c] = -vel_ref[:n_c]
        h[n_p + n_c] = -vel_ref[-1]
        if self._disc_at is not None:
            i0 = self._disc_at
            h[i0:i0 + n_p] = BIG_RHS
            mask = np.abs(dy) < 2.0 * params.r_buf
            if mask.any():
                D = np.sqrt(4.0 * params.r_buf ** 2 - dy[mask] ** 2) + cfg.disc_margin
                h[i0:i0 + n_p][mask] = -D - pos_ref[mask]
        if self._sec_at is not None:
            i0 = self._sec_at
            if far_gap is not None and far_gap < params.l2:
                # bounds tighter than the physical envelope mean "use the
                # whole envelope", so clamp at the opposite box edge
                lift = 2.0 * (params.l2 - far_gap) / params.tau ** 2
                if self.side is Side.FOLLOWING:
                    bound = min(params.d_max + lift, params.a_max)  # u >= bound
                    h[i0:i0 + n_c] = -bound
                else:
                    bound = max(params.a_max - lift, params.d_max)  # u <= bound
                    h[i0:i0 + n_c] = bound
            else:
                h[i0:i0 + n_c] = BIG_RHS
        h[self.m_in:] = self._h_box[delta_cap][0]
        return g, h

    def build(self, x0: np.ndarray, ref_x: np.ndarray, ref_v: np.ndarray,
              coop: CooperationLevel, dy: np.ndarray | None = None,
              far_gap: float | None = None,
              track_own: bool | None = None) -> tuple[QuadraticProgram, np.ndarray]:
        """Materialized QP (active rows only) plus the row-kind labels."""
        if track_own is None:
            track_own = coop is CooperationLevel.INACTIVE
        cap = self.delta_cap(coop)
        g, h = self.fill(x0, ref_x, ref_v, cap, track_own, dy, far_gap)
        keep = h[:self.m_in] < BIG_RHS
        _, lb, ub = self._h_box[cap]
        qp = QuadraticProgram(H=self.H, g=g.copy(), A_in=self.A_rows[keep],
                              b_in=h[:self.m_in][keep].copy(), lb=lb.copy(), ub=ub.copy())
        return qp, self.kinds_arr[keep]


def build_near_qp(state: VehicleState, side: Side, coop: CooperationLevel,
                  ref_x: np.ndarray, ref_y: np.ndarray, ref_v: np.ndarray,
                  far_neighbor: VehicleState, cfg: MpcConfig,
                  params: SafetyParams,
                  track_own: bool | None = None) -> QuadraticProgram:
    """QP for a near CHDV constrained against the CAV reference horizon.

    Disc rows appear only at horizon steps whose known lateral offset lets the
    buffer circles touch; the secondary-collision rows only when the far
    neighbour is within l2.
    """
    tmpl = QpTemplate(side, params.l1, cfg, params, with_disc=True, with_secondary=True)
    dy = np.abs(state.y - ref_y)
    far_gap = abs(state.x - far_neighbor.x)
    qp, _ = tmpl.build(np.array([state.x, state.v]), ref_x, ref_v, coop, dy,
                       far_gap, track_own)
    return qp


def build_far_qp(state: VehicleState, side: Side, coop: CooperationLevel,
                 near_predicted: np.ndarray, cfg: MpcConfig, params: SafetyParams,
                 track_own: bool | None = None) -> QuadraticProgram:
    """QP for a far CHDV constrained against its near partner's predicted stack."""
    tmpl = QpTemplate(side, params.l2, cfg, params, with_disc=False, with_secondary=False)
    qp, _ = tmpl.build(np.array([state.x, state.v]), near_predicted[0::2],
                       near_predicted[1::2], coop, track_own=track_own)
    return qp


def relax_qp(qp: QuadraticProgram, soften: np.ndarray,
             weight: float = 1e6) -> QuadraticProgram:
    """Elastic version: one slack s >= 0 relaxes the masked rows, cost weight*s^2."""
    n = qp.n
    H = np.zeros((n + 1, n + 1))
    H[:n, :n] = qp.H
    H[n, n] = 2.0 * weight
    g = np.concatenate([qp.g, [0.0]])
    A = np.hstack([qp.A_in, np.where(soften, -1.0, 0.0)[:, None]])
    lb = np.concatenate([qp.lb, [0.0]])
    ub = np.concatenate([qp.ub, [np.inf]])
    return QuadraticProgram(H=H, g=g, A_in=A, b_in=qp.b_in, lb=lb, ub=ub)


class CooperativeController:
    """Solves the four CHDV QPs each step, near pair before far pair."""

    # (role, template side, far neighbour for the secondary rows)
    _NEAR = ((VehicleRole.FHDV_NEAR, Side.FOLLOWING, VehicleRole.FHDV_FAR),
             (VehicleRole.PHDV_NEAR, Side.PRECEDING, VehicleRole.PHDV_FAR))
    # (role, template side, near partner providing the reference)
    _FAR = ((VehicleRole.FHDV_FAR, Side.FOLLOWING, VehicleRole.FHDV_NEAR),
            (VehicleRole.PHDV_FAR, Side.PRECEDING, VehicleRole.PHDV_NEAR))

    def __init__(self, cfg: MpcConfig = MpcConfig(), params: SafetyParams = SafetyParams()):
        self.cfg = cfg
        self.params = params
        self.near_tmpl = {s: QpTemplate(s, params.l1, cfg, params, True, True)
                          for s in Side}
        self.far_tmpl = {s: QpTemplate(s, params.l2, cfg, params, False, False)
                         for s in Side}

    def _solve(self, tmpl: QpTemplate, x0, ref_x, ref_v, coop,
               dy=None, far_gap=None) -> tuple[ControlDecision, bool]:
        cfg = self.cfg
        cap = tmpl.delta_cap(coop)
        track_own = coop is CooperationLevel.INACTIVE
        g, h = tmpl.fill(x0, ref_x, ref_v, cap, track_own, dy, far_gap)
        z, _, code, _, _, _ = _impl.solve_unified(tmpl.H_pd, g, tmpl.G_unified, h,
                                                  tmpl._z0, cfg.tol, cfg.max_iter)
        z = np.asarray(z)
        if code == 0:
            n_c = cfg.n_c
            obj = float(0.5 * z @ (tmpl.H @ z) + g @ z)
            return ControlDecision(u=z[:n_c].copy(), delta=z[n_c:].copy(),
                                   predicted=None, objective=obj,
                                   status=QpStatus.OPTIMAL), False
        # infeasible (or stalled) instance: escalate through the elastic tiers
        qp, kinds = tmpl.build(x0, ref_x, ref_v, coop, dy, far_gap, track_own)
        base_status = QpStatus.INFEASIBLE if code == 1 else QpStatus.MAX_ITER
        for tier in (1, 2, 3):
            soften = np.isin(kinds, list(_TIER_SOFT[tier]))
            rsol = qp_solve(relax_qp(qp, soften), tol=cfg.tol, max_iter=cfg.max_iter)
            if rsol.status is QpStatus.OPTIMAL:
                n_c = cfg.n_c
                return ControlDecision(u=rsol.z[:n_c].copy(),
                                       delta=rsol.z[n_c:2 * n_c].copy(),
                                       predicted=None, objective=rsol.objective,
                                       status=base_status, relax_tier=tier,
                                       relax_amount=float(rsol.z[-1])), True
        # tier 3 keeps only the physical box bounds hard, so this means the
        # instance itself is malformed
        raise RuntimeError("elastic QP fallback failed to solve")

    def step(self, states: dict[VehicleRole, VehicleState], plan: CubicPlan | None,
             coop: dict[VehicleRole, CooperationLevel],
             direction: float = 1.0, wait_accel: float = 0.0) -> StepResult:
        """Run one control step; only u[0] of each decision gets applied.

        With no plan the CAV is waiting in its lane under wait_accel (zero in
        the nominal case; slot keeping otherwise) and the reference horizon is
        the corresponding constant-acceleration rollout.
        """
        cfg, params = self.cfg, self.params
        cav = states[VehicleRole.TCAV]
        if plan is not None:
            ref_x, ref_y, ref_v = reference_horizon(plan, cav, cfg.n_p, params.tau,
                                                    params, direction)
        else:
            ref_x = np.empty(cfg.n_p)
            ref_v = np.empty(cfg.n_p)
            x, v = cav.x, cav.v
            for n in range(cfg.n_p):
                x, v = kinematic_step(x, v, wait_accel, params.tau)
                ref_x[n] = x
                ref_v[n] = v
            ref_y = np.full(cfg.n_p, cav.y)

        decisions: dict[VehicleRole, ControlDecision] = {}
        infeasible = False
        for role, side, far_role in self._NEAR:
            st = states[role]
            tmpl = self.near_tmpl[side]
            x0 = np.array([st.x, st.v])
            dy = np.abs(st.y - ref_y)
            far_gap = abs(st.x - states[far_role].x)
            dec, fell_back = self._solve(tmpl, x0, ref_x, ref_v, coop[role],
                                         dy, far_gap)
            dec.predicted = predict(tmpl.mats, x0, dec.u)
            decisions[role] = dec
            infeasible = infeasible or fell_back

        for role, side, near_role in self._FAR:
            st = states[role]
            tmpl = self.far_tmpl[side]
            x0 = np.array([st.x, st.v])
            near_pred = decisions[near_role].predicted
            dec, fell_back = self._solve(tmpl, x0, near_pred[0::2],
                                         near_pred[1::2], coop[role])
            dec.predicted = predict(tmpl.mats, x0, dec.u)
            decisions[role] = dec
            infeasible = infeasible or fell_back

        return StepResult(decisions=decisions, infeasible=infeasible,
                          cav_ref=(ref_x, ref_y, ref_v))


def step_controller(states: dict[VehicleRole, VehicleState], plan: CubicPlan | None,
                    coop: dict[VehicleRole, CooperationLevel],
                    cfg: MpcConfig = MpcConfig(),
                    params: SafetyParams = SafetyParams(),
                    direction: float = 1.0) -> StepResult:
    """One-shot controller step (tests/small runs; sweeps reuse the class)."""
    return CooperativeController(cfg, params).step(states, plan, coop, direction)
