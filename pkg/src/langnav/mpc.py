"""Receding-horizon trajectory optimization.

Each control period the solver optimizes the weighted stage cost of the
active CostSpec over a single-shooting input sequence, subject to human
avoidance, corridor half-spaces and speed bounds enforced by an adaptive
quadratic penalty.  Several warm-start seeds are optimized independently
(serially or in threads) and the cheapest feasible plan wins.

Gradients are exact: forward-mode duals through the stage cost (with the
contour/lag and closest-human bindings chained in) and a discrete adjoint
sweep through the rollout.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .costspec import CostSpec
from .dsl import CondMasks, Dual, EvalError, compile_expr
from .world import (
    ControlInput,
    HumanPrediction,
    ReferencePath,
    RobotState,
    Scenario,
    _project_many,
    predict_humans,
    wrap_angle,
)

__all__ = [
    "MpcConfig",
    "PlanStatus",
    "TrajectoryPlan",
    "PlanningScene",
    "CostRejected",
    "human_constraint",
    "corridor_constraints",
    "stage_cost",
    "generate_seeds",
    "solve",
    "braking_input",
    "NavController",
]


class CostRejected(RuntimeError):
    """The active cost produced a non-finite value during optimization."""


@dataclass(frozen=True)
class MpcConfig:
    horizon: int = 30
    dt: float = 0.1
    a_min: float = -3.0
    a_max: float = 3.0
    omega_min: float = -1.5
    omega_max: float = 1.5
    v_max: float = 2.5
    tol_g: float = 1e-3
    max_iterations: int = 40
    mu_initial: float = 10.0
    mu_factor: float = 10.0
    mu_max: float = 1e5
    seed_count: int = 3

    def __post_init__(self) -> None:
        if self.horizon < 5:
            raise ValueError("horizon must be >= 5")
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.a_min >= self.a_max or self.omega_min >= self.omega_max:
            raise ValueError("input bounds must be ordered")
        if self.tol_g <= 0:
            raise ValueError("tol_g must be > 0")
        if self.seed_count < 1:
            raise ValueError("seed_count must be >= 1")

    @property
    def input_lower(self) -> np.ndarray:
        return np.array([self.a_min, self.omega_min])

    @property
    def input_upper(self) -> np.ndarray:
        return np.array([self.a_max, self.omega_max])


class PlanStatus(Enum):
    CONVERGED = "Converged"
    MAX_ITER = "MaxIter"
    INFEASIBLE = "Infeasible"


@dataclass(frozen=True)
class TrajectoryPlan:
    states: tuple[RobotState, ...]
    inputs: tuple[ControlInput, ...]
    cost: float
    max_violation: float
    seed_id: int
    status: PlanStatus

    def positions(self) -> np.ndarray:
        return np.array([[s.x, s.y] for s in self.states])


@dataclass(frozen=True)
class PlanningScene:
    """Everything one solve call needs about the world."""

    x_init: RobotState
    path: ReferencePath
    goal: tuple[float, float]
    corridors: tuple
    robot_radius: float
    predictions: tuple[HumanPrediction, ...]
    human_radii: tuple[float, ...]

    @classmethod
    def from_scenario(cls, scenario: Scenario, x: RobotState, humans,
                      config: MpcConfig) -> "PlanningScene":
        preds = tuple(predict_humans(humans, config.horizon, config.dt))
        by_id = {h.id: h.radius for h in humans}
        return cls(
            x_init=x,
            path=scenario.reference_path,
            goal=scenario.goal,
            corridors=scenario.corridors,
            robot_radius=scenario.robot_radius,
            predictions=preds,
            human_radii=tuple(by_id[p.human_id] for p in preds),
        )

    def prediction_array(self, horizon: int) -> np.ndarray:
        """(H, N+1, 2) array of predicted human positions, ordered by id."""
        if not self.predictions:
            return np.zeros((0, horizon + 1, 2))
        return np.stack([p.positions for p in self.predictions])


# ---------------------------------------------------------------------------
# Constraints (g <= 0 is satisfied)


def human_constraint(state, human_position, r_r: float, r_h: float) -> float:
    """Disc-avoidance constraint g = 1 - |p - o|^2 / r^2, r = r_r + r_h."""
    if r_r <= 0 or r_h <= 0:
        raise ValueError("radii must be > 0")
    px, py = (state.x, state.y) if isinstance(state, RobotState) else (
        float(state[0]), float(state[1]))
    r = r_r + r_h
    dx = px - float(human_position[0])
    dy = py - float(human_position[1])
    return 1.0 - (dx * dx + dy * dy) / (r * r)


def corridor_constraints(state, scenario: Scenario) -> np.ndarray:
    """Signed margins n.p - b + r_r per half-space; <= 0 when satisfied."""
    p = (state.x, state.y) if isinstance(state, RobotState) else state
    return np.array(
        [hs.signed_margin(p, scenario.robot_radius) for hs in scenario.corridors]
    )


# ---------------------------------------------------------------------------
# Stage bindings


_WRT = ("px", "py", "theta", "v", "a", "omega")


def _path_bindings(path: ReferencePath, positions: np.ndarray):
    """Projection-derived bindings for an (M, 2) array of positions.

    Returns e_c values, s_projected, and the d(e_c)/dp and d(s)/dp rows.
    """
    s, foot, tangent = _project_many(path, positions)
    normal = np.stack([-tangent[:, 1], tangent[:, 0]], axis=1)
    e_c = np.sum((positions - foot) * normal, axis=1)
    # ds/dp = tangent inside a segment, 0 where the projection clamps to an
    # endpoint (start/end of the polyline)
    interior = (s > 1e-12) & (s < path.total_length - 1e-12)
    ds_dp = tangent * interior[:, None]
    return e_c, s, normal, ds_dp


def _expected_arc(path: ReferencePath, s0: float, v_ref: float, dt: float,
                  horizon: int) -> np.ndarray:
    s = s0 + v_ref * dt * np.arange(horizon + 1)
    return np.minimum(s, path.total_length)


def _base_env(spec: CostSpec, scene: PlanningScene) -> dict:
    env: dict = dict(spec.params.values())
    env["goal_x"] = float(scene.goal[0])
    env["goal_y"] = float(scene.goal[1])
    return env


def _stage_env_values(base_env: dict, scene: PlanningScene,
                      states: np.ndarray, inputs: np.ndarray,
                      oh: np.ndarray, s_expected: np.ndarray) -> dict:
    positions = states[:, 0:2]
    e_c, s_proj, _, _ = _path_bindings(scene.path, positions)
    env = dict(base_env)
    env.update(
        px=states[:, 0], py=states[:, 1], theta=states[:, 2], v=states[:, 3],
        a=inputs[:, 0], omega=inputs[:, 1],
        oh_x=oh[:, 0], oh_y=oh[:, 1],
        e_c=e_c, e_l=s_expected - s_proj,
    )
    return env


def _stage_env_dual(base_env: dict, scene: PlanningScene,
                    states: np.ndarray, inputs: np.ndarray,
                    oh: np.ndarray, s_expected: np.ndarray) -> dict:
    m = states.shape[0]
    positions = states[:, 0:2]
    e_c, s_proj, normal, ds_dp = _path_bindings(scene.path, positions)

    def seeded(values, column: int) -> Dual:
        tan = np.zeros((m, len(_WRT)))
        tan[:, column] = 1.0
        return Dual(values, tan)

    def chained(values, dpx, dpy) -> Dual:
        tan = np.zeros((m, len(_WRT)))
        tan[:, 0] = dpx
        tan[:, 1] = dpy
        return Dual(values, tan)

    env = dict(base_env)
    env.update(
        px=seeded(states[:, 0], 0), py=seeded(states[:, 1], 1),
        theta=seeded(states[:, 2], 2), v=seeded(states[:, 3], 3),
        a=seeded(inputs[:, 0], 4), omega=seeded(inputs[:, 1], 5),
        oh_x=Dual.constant(oh[:, 0], len(_WRT)),
        oh_y=Dual.constant(oh[:, 1], len(_WRT)),
        e_c=chained(e_c, normal[:, 0], normal[:, 1]),
        e_l=chained(s_expected - s_proj, -ds_dp[:, 0], -ds_dp[:, 1]),
    )
    return env


def _closest_per_stage(positions: np.ndarray, pred: np.ndarray) -> np.ndarray:
    """Frozen closest-human positions, one row per stage (sentinel if none)."""
    m = positions.shape[0]
    if pred.shape[0] == 0:
        return np.full((m, 2), 1e6)
    d2 = np.sum((pred[:, :m, :] - positions[None, :, :]) ** 2, axis=2)  # (H, m)
    sel = np.argmin(d2, axis=0)  # lowest id wins ties
    return pred[sel, np.arange(m), :]


def _cost_value(spec: CostSpec, env: dict, masks: CondMasks | None):
    # caller is responsible for an np.errstate(all="ignore") scope
    total = None
    for term in spec.terms:
        w = spec.weights[term.name]
        if w == 0.0:
            continue  # also avoids 0 * inf from irrelevant singular terms
        value = compile_expr(term.expr)(env, masks)
        if isinstance(value, Dual):
            contrib = Dual(value.val * w, value.tan * w)
        else:
            contrib = value * w
        total = contrib if total is None else total + contrib
    return total if total is not None else 0.0


def stage_cost(spec: CostSpec, state: RobotState, inp: ControlInput, k: int,
               predictions, path: ReferencePath, config: MpcConfig | None = None,
               s_expected: float | None = None) -> float:
    """Weighted stage cost at one state/input with all bindings resolved.

    When `s_expected` is omitted the robot is assumed on schedule (zero lag
    error).  Raises CostRejected on a non-finite evaluation.
    """
    config = config or MpcConfig()
    states = state.as_array()[None, :]
    inputs = np.array([[inp.a, inp.omega]])
    pred = (np.stack([np.asarray(p.positions)[k][None, :] for p in predictions])
            if predictions else np.zeros((0, 1, 2)))
    oh = _closest_per_stage(states[:, 0:2], pred)
    if s_expected is None:
        s_arr, _, _ = _project_many(path, states[:, 0:2])
        s_expected = float(s_arr[0])
    goal = (spec.params["goal_x"].value if "goal_x" in spec.params else 0.0,
            spec.params["goal_y"].value if "goal_y" in spec.params else 0.0)
    scene = PlanningScene(
        x_init=state, path=path, goal=goal, corridors=(),
        robot_radius=0.3, predictions=(), human_radii=(),
    )
    env = _stage_env_values(_base_env(spec, scene), scene, states, inputs, oh,
                            np.array([s_expected]))
    try:
        with np.errstate(all="ignore"):
            value = _cost_value(spec, env, None)
    except EvalError as exc:
        raise CostRejected(str(exc)) from exc
    out = float(np.sum(value))
    if not math.isfinite(out):
        raise CostRejected(f"non-finite stage cost {out!r}")
    return out


# ---------------------------------------------------------------------------
# Rollout and adjoint


def _rollout(x0: RobotState, U: np.ndarray, dt: float) -> np.ndarray:
    """Single-shooting rollout; bit-identical to iterating unicycle_step."""
    x, y, th, v = x0.x, x0.y, x0.theta, x0.v
    rows = [(x, y, th, v)]
    cos, sin, wrap = math.cos, math.sin, wrap_angle
    for a, om in U.tolist():
        x = x + dt * v * cos(th)
        y = y + dt * v * sin(th)
        th = wrap(th + dt * om)
        v = v + dt * a
        rows.append((x, y, th, v))
    return np.array(rows)


def _adjoint_gradient(states: np.ndarray, gx: np.ndarray, gu: np.ndarray,
                      dt: float) -> np.ndarray:
    """Reverse sweep: dJ/dU from per-stage partials dJ/dx (gx) and dJ/du (gu)."""
    n = gu.shape[0]
    gx_rows = gx.tolist()
    gu_rows = gu.tolist()
    st_rows = states.tolist()
    l0, l1, l2, l3 = gx_rows[n]
    grad_rows = [None] * n
    cos, sin = math.cos, math.sin
    for k in range(n - 1, -1, -1):
        gxk = gx_rows[k]
        guk = gu_rows[k]
        grad_rows[k] = (guk[0] + dt * l3, guk[1] + dt * l2)
        th = st_rows[k][2]
        v = st_rows[k][3]
        c, s = cos(th), sin(th)
        n0 = gxk[0] + l0
        n1 = gxk[1] + l1
        n2 = gxk[2] + l2 + dt * v * (c * l1 - s * l0)
        n3 = gxk[3] + l3 + dt * (c * l0 + s * l1)
        l0, l1, l2, l3 = n0, n1, n2, n3
    return np.array(grad_rows)


# ---------------------------------------------------------------------------
# Constraint stack (vectorized over stages)


class _ConstraintStack:
    def __init__(self, scene: PlanningScene, config: MpcConfig) -> None:
        self.config = config
        self.pred = scene.prediction_array(config.horizon)  # (H, N+1, 2)
        radii = np.asarray(scene.human_radii, dtype=float)
        self.r2 = (scene.robot_radius + radii) ** 2 if radii.size else radii
        self.normals = np.array([hs.normal for hs in scene.corridors]) \
            if scene.corridors else np.zeros((0, 2))
        self.offsets = np.array([hs.offset for hs in scene.corridors])
        self.r_r = scene.robot_radius

    def residuals(self, states: np.ndarray) -> np.ndarray:
        """All constraint values stacked (positive entries are violations)."""
        parts = []
        p = states[:, 0:2]
        if self.pred.shape[0]:
            d2 = np.sum((self.pred - p[None, :, :]) ** 2, axis=2)  # (H, N+1)
            parts.append((1.0 - d2 / self.r2[:, None]).ravel())
        if self.normals.shape[0]:
            margins = p @ self.normals.T - self.offsets[None, :] + self.r_r
            parts.append(margins.ravel())
        v = states[:, 3]
        parts.append(v - self.config.v_max)
        parts.append(-v)
        return np.concatenate(parts) if parts else np.zeros(0)

    def penalty_value(self, states: np.ndarray, mu: float) -> float:
        res = self.residuals(states)
        viol = np.maximum(res, 0.0)
        return float(mu * np.sum(viol * viol))

    def penalty_and_violation(self, states: np.ndarray,
                              mu: float) -> tuple[float, float]:
        res = self.residuals(states)
        viol = np.maximum(res, 0.0)
        return float(mu * np.sum(viol * viol)), float(np.max(viol, initial=0.0))

    def max_violation(self, states: np.ndarray) -> float:
        res = self.residuals(states)
        return float(np.max(res, initial=0.0))

    def penalty_gradients(self, states: np.ndarray, mu: float) -> np.ndarray:
        """d(penalty)/d(state) per stage, shape (N+1, 4)."""
        gx = np.zeros((states.shape[0], 4))
        p = states[:, 0:2]
        if self.pred.shape[0]:
            delta = p[None, :, :] - self.pred  # (H, N+1, 2)
            d2 = np.sum(delta**2, axis=2)
            g = 1.0 - d2 / self.r2[:, None]
            coef = 2.0 * mu * np.maximum(g, 0.0) * (-2.0 / self.r2[:, None])
            gx[:, 0:2] += np.sum(coef[..., None] * delta, axis=0)
        if self.normals.shape[0]:
            margins = p @ self.normals.T - self.offsets[None, :] + self.r_r
            coef = 2.0 * mu * np.maximum(margins, 0.0)  # (N+1, C)
            gx[:, 0:2] += coef @ self.normals
        v = states[:, 3]
        gx[:, 3] += 2.0 * mu * np.maximum(v - self.config.v_max, 0.0)
        gx[:, 3] -= 2.0 * mu * np.maximum(-v, 0.0)
        return gx


# ---------------------------------------------------------------------------
# Seed generation


def _guided_inputs(scene: PlanningScene, config: MpcConfig,
                   detour: np.ndarray | None, v_ref: float) -> np.ndarray:
    """Greedy P-controller rollout toward the path (optionally via a detour
    waypoint), producing a feasible warm-start input sequence."""
    n, dt = config.horizon, config.dt
    U = np.zeros((n, 2))
    x, y, th, v = scene.x_init.x, scene.x_init.y, scene.x_init.theta, scene.x_init.v
    lookahead = 1.0
    for k in range(n):
        if detour is not None and math.hypot(detour[0] - x, detour[1] - y) > 0.6:
            target = detour
        else:
            s, _, _ = _project_many(scene.path, np.array([[x, y]]))
            target = _point_ahead(scene.path, float(s[0]) + lookahead)
        heading = math.atan2(target[1] - y, target[0] - x)
        om = float(np.clip(2.0 * wrap_angle(heading - th),
                           config.omega_min, config.omega_max))
        a = float(np.clip((v_ref - v) / (4 * dt), config.a_min, config.a_max))
        U[k] = (a, om)
        x = x + dt * v * math.cos(th)
        y = y + dt * v * math.sin(th)
        th = wrap_angle(th + dt * om)
        v = v + dt * a
    return U


def _point_ahead(path: ReferencePath, s: float) -> np.ndarray:
    from .world import point_at_arc_length

    return point_at_arc_length(path, s)


_SEED_LOOKAHEAD = 6.0  # humans farther than this do not earn detour seeds


def generate_seeds(scene: PlanningScene, spec: CostSpec, config: MpcConfig,
                   previous: TrajectoryPlan | None = None) -> list[np.ndarray]:
    """Deterministic warm-start input sequences.

    Straight-to-reference plus pass-left/pass-right of the nearest predicted
    human (lateral offset 2r), cycled to the configured seed count; the
    shifted previous solution is appended when available.  With no humans
    (or none within lookahead range) the straight seed is duplicated.
    """
    v_ref = spec.params["v_ref"].value if "v_ref" in spec.params else 1.5
    v_ref = min(max(v_ref, 0.0), config.v_max)
    straight = _guided_inputs(scene, config, None, v_ref)
    pred = scene.prediction_array(config.horizon)
    p0 = np.array([scene.x_init.x, scene.x_init.y])
    nearest_idx = None
    if pred.shape[0]:
        d2 = np.sum((pred[:, 0, :] - p0[None, :]) ** 2, axis=1)
        idx = int(np.argmin(d2))
        if d2[idx] <= _SEED_LOOKAHEAD**2:
            nearest_idx = idx
    if nearest_idx is None:
        seeds = [straight.copy() for _ in range(config.seed_count)]
    else:
        nearest = pred[nearest_idx, 0, :]
        r = scene.robot_radius + scene.human_radii[nearest_idx]
        to_h = nearest - p0
        norm = math.hypot(*to_h) or 1.0
        left = np.array([-to_h[1], to_h[0]]) / norm
        gens = [
            straight,
            _guided_inputs(scene, config, nearest + 2 * r * left, v_ref),
            _guided_inputs(scene, config, nearest - 2 * r * left, v_ref),
        ]
        seeds = [gens[i % 3].copy() for i in range(config.seed_count)]
    if previous is not None:
        shifted = np.array([[u.a, u.omega] for u in previous.inputs])
        shifted = np.vstack([shifted[1:], shifted[-1:]])
        seeds.append(shifted)
    lo, hi = config.input_lower, config.input_upper
    return [np.clip(s, lo[None, :], hi[None, :]) for s in seeds]


# ---------------------------------------------------------------------------
# Solver


_STEP_FLOOR = 3e-4  # accepted steps below this input resolution stop the loop


def _optimize_seed(seed_id: int, U0: np.ndarray, scene: PlanningScene,
                   spec: CostSpec, config: MpcConfig,
                   budget: int | None = None,
                   trace: list | None = None) -> TrajectoryPlan:
    with np.errstate(all="ignore"):
        return _optimize_seed_inner(seed_id, U0, scene, spec, config, budget,
                                    trace)


def _optimize_seed_inner(seed_id: int, U0: np.ndarray, scene: PlanningScene,
                         spec: CostSpec, config: MpcConfig,
                         budget: int | None = None,
                         trace: list | None = None) -> TrajectoryPlan:
    n, dt = config.horizon, config.dt
    lo, hi = config.input_lower, config.input_upper
    U = np.clip(U0, lo[None, :], hi[None, :])
    cons = _ConstraintStack(scene, config)
    base_env = _base_env(spec, scene)
    s0, _, _ = _project_many(scene.path, np.array([[scene.x_init.x,
                                                    scene.x_init.y]]))
    v_ref = spec.params["v_ref"].value if "v_ref" in spec.params else 1.5
    s_expected = _expected_arc(scene.path, float(s0[0]), v_ref, dt, n)
    pad = np.zeros((1, 2))

    def cost_and_partials(states, U_, masks):
        oh = _closest_per_stage(states[:, 0:2], cons.pred)
        env = _stage_env_dual(base_env, scene, states, np.vstack([U_, pad]),
                              oh, s_expected)
        dual = _cost_value(spec, env, masks)
        if not isinstance(dual, Dual):  # cost independent of the trajectory
            return float(np.sum(dual)), np.zeros((n + 1, len(_WRT)))
        if not np.all(np.isfinite(dual.val)) or not np.all(np.isfinite(dual.tan)):
            raise CostRejected("non-finite cost or gradient during optimization")
        return float(np.sum(dual.val)), dual.tan  # tan: (N+1, 6)

    def cost_value(states, U_, masks):
        oh = _closest_per_stage(states[:, 0:2], cons.pred)
        env = _stage_env_values(base_env, scene, states, np.vstack([U_, pad]),
                                oh, s_expected)
        total = float(np.sum(_cost_value(spec, env, masks)))
        if not math.isfinite(total):
            raise CostRejected("non-finite cost during optimization")
        return total

    mu = config.mu_initial
    alpha = 0.5
    converged = False
    initial_budget = budget if budget is not None else config.max_iterations
    iteration_budget = initial_budget
    total_cap = 3 * initial_budget  # escalations share this overall budget
    spent = 0
    while True:
        feasible_now = False
        for _ in range(min(iteration_budget, total_cap - spent)):
            spent += 1
            states = _rollout(scene.x_init, U, dt)
            masks = CondMasks()
            cost, tan = cost_and_partials(states, U, masks)
            gx = tan[:, 0:4].copy()
            gu = tan[:n, 4:6]
            gx += cons.penalty_gradients(states, mu)
            grad_u = _adjoint_gradient(states, gx, gu, dt)
            pen0, viol0 = cons.penalty_and_violation(states, mu)
            merit0 = cost + pen0
            if trace is not None:  # (mu, merit at the accepted iterate)
                trace.append((mu, merit0))

            scale = float(np.max(np.abs(grad_u)))
            if scale < 1e-10:
                converged = True
                feasible_now = viol0 <= config.tol_g
                break
            direction = -grad_u / scale
            accepted = False
            step = alpha
            while step > 1e-6:
                U_trial = np.clip(U + step * direction, lo[None, :], hi[None, :])
                delta = U_trial - U
                if float(np.max(np.abs(delta))) < 1e-12:
                    break
                states_t = _rollout(scene.x_init, U_trial, dt)
                cost_t = cost_value(states_t, U_trial, masks.rewind())
                pen_t, viol_t = cons.penalty_and_violation(states_t, mu)
                merit_t = cost_t + pen_t
                if merit_t <= merit0 + 1e-4 * float(np.sum(grad_u * delta)):
                    U = U_trial
                    accepted = True
                    break
                step *= 0.5
            if not accepted or step < _STEP_FLOOR:
                converged = True
                feasible_now = viol0 <= config.tol_g
                break
            feasible_now = viol_t <= config.tol_g
            alpha = min(step * 1.5, 1.0)
            improvement = merit0 - merit_t
            if improvement < 1e-6 * (1.0 + abs(merit0)):
                converged = True
                break
            # once feasible, stop polishing as soon as progress slows;
            # the next control period re-solves anyway
            if feasible_now and improvement < 1e-4 * (1.0 + abs(merit0)):
                converged = True
                break
        if feasible_now or mu >= config.mu_max or spent >= total_cap:
            break
        states = _rollout(scene.x_init, U, dt)
        if cons.max_violation(states) <= config.tol_g:
            break
        mu *= config.mu_factor
        # escalation continues from the current iterate; a shorter budget
        # suffices to re-satisfy the inflated penalty
        iteration_budget = max(10, initial_budget // 2)
        alpha = max(alpha, 0.1)
        converged = False

    states = _rollout(scene.x_init, U, dt)
    viol = cons.max_violation(states)
    final_cost = cost_value(states, U, None)
    if viol <= config.tol_g:
        status = PlanStatus.CONVERGED if converged else PlanStatus.MAX_ITER
    else:
        status = PlanStatus.INFEASIBLE
    plan_states = tuple(
        RobotState(x=row[0], y=row[1], theta=row[2], v=row[3]) for row in states
    )
    plan_inputs = tuple(ControlInput(a=row[0], omega=row[1]) for row in U)
    return TrajectoryPlan(plan_states, plan_inputs, final_cost, viol,
                          seed_id, status)


def solve(scene: PlanningScene, spec: CostSpec, config: MpcConfig,
          seeds: list[np.ndarray] | None = None,
          previous: TrajectoryPlan | None = None,
          parallel: bool = False) -> tuple[TrajectoryPlan, list[TrajectoryPlan]]:
    """Optimize every seed and return (best plan, all plans).

    The best plan is the minimum-cost one among those with violation within
    tolerance, ties broken by seed id; when none qualifies, the minimum-
    violation plan is returned flagged Infeasible.  Identical seed arrays
    are optimized once; with a previous solution available the heuristic
    seeds run on a reduced iteration budget.
    """
    warm = previous is not None
    if seeds is None:
        seeds = generate_seeds(scene, spec, config, previous)
    heuristic_budget = max(12, config.max_iterations // 2) if warm else None
    jobs: list[tuple[int, np.ndarray, int | None]] = []
    duplicate_of: dict[int, int] = {}
    seen: dict[bytes, int] = {}
    for i, U0 in enumerate(seeds):
        key = U0.tobytes()
        if key in seen:
            duplicate_of[i] = seen[key]
            continue
        seen[key] = i
        is_prev = warm and i == len(seeds) - 1
        jobs.append((i, U0, None if is_prev else heuristic_budget))

    def run(job):
        i, U0, job_budget = job
        return _optimize_seed(i, U0, scene, spec, config, job_budget)

    if parallel and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=len(jobs)) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(job) for job in jobs]
    by_id = {plan.seed_id: plan for plan in results}
    plans = []
    for i in range(len(seeds)):
        if i in by_id:
            plans.append(by_id[i])
        else:
            source = by_id[duplicate_of[i]]
            plans.append(TrajectoryPlan(source.states, source.inputs,
                                        source.cost, source.max_violation,
                                        i, source.status))
    feasible = [p for p in plans if p.status != PlanStatus.INFEASIBLE]
    if feasible:
        best = min(feasible, key=lambda p: (p.cost, p.seed_id))
    else:
        best = min(plans, key=lambda p: (p.max_violation, p.seed_id))
    return best, plans


def braking_input(state: RobotState, config: MpcConfig) -> ControlInput:
    """Safety fallback: decelerate without reversing, no rotation."""
    a = max(config.a_min, -state.v / config.dt)
    return ControlInput(a=min(a, config.a_max), omega=0.0)


class NavController:
    """Receding-horizon controller with hot-swappable cost specification.

    `swap_spec` is atomic with respect to `step`: the new spec takes effect
    at the next solve.  On CostRejected the controller reverts to the last
    spec that solved successfully.
    """

    def __init__(self, scenario: Scenario, spec: CostSpec,
                 config: MpcConfig | None = None) -> None:
        self.scenario = scenario
        self.config = config or MpcConfig()
        self._spec = spec
        self._last_good = spec
        self.previous_plan: TrajectoryPlan | None = None

    @property
    def spec(self) -> CostSpec:
        return self._spec

    def swap_spec(self, new_spec: CostSpec) -> None:
        self._spec = new_spec

    def step(self, x: RobotState, humans,
             parallel: bool = False) -> tuple[ControlInput, TrajectoryPlan, bool]:
        """One control period; returns (input, plan, cost_rejected_flag)."""
        scene = PlanningScene.from_scenario(self.scenario, x, humans, self.config)
        rejected = False
        try:
            best, _ = solve(scene, self._spec, self.config,
                            previous=self.previous_plan, parallel=parallel)
            self._last_good = self._spec
        except CostRejected:
            rejected = True
            self._spec = self._last_good
            best, _ = solve(scene, self._spec, self.config,
                            previous=self.previous_plan, parallel=parallel)
        self.previous_plan = best
        if best.status == PlanStatus.INFEASIBLE:
            return braking_input(x, self.config), best, rejected
        return best.inputs[0], best, rejected
