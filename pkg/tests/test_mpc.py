import math

import numpy as np
import pytest

from langnav.costspec import (
    CostTerm,
    ParameterSet,
    ParamValue,
    compose_cost,
    default_path_spec,
)
from langnav.mpc import (
    MpcConfig,
    NavController,
    PlanStatus,
    PlanningScene,
    braking_input,
    corridor_constraints,
    generate_seeds,
    human_constraint,
    solve,
    stage_cost,
)
from langnav.world import (
    ControlInput,
    HalfSpace,
    Human,
    ReferencePath,
    RobotState,
    Scenario,
    predict_humans,
    unicycle_step,
)


def goal_spec(goal=(5.0, 0.0), v_ref=1.5):
    return compose_cost(
        [CostTerm.from_builtin("goal")], {},
        ParameterSet({"v_ref": ParamValue(v_ref, "m/s")}), "goal test"
    ).with_params(
        ParameterSet({
            "v_ref": ParamValue(v_ref, "m/s"),
            "goal_x": ParamValue(goal[0], "m", tunable=False),
            "goal_y": ParamValue(goal[1], "m", tunable=False),
        })
    )


def empty_scene(goal=(5.0, 0.0), x0=RobotState(0, 0, 0, 0)):
    return PlanningScene(
        x_init=x0,
        path=ReferencePath([(0, 0), (goal[0] or 10.0, 0)]),
        goal=goal,
        corridors=(),
        robot_radius=0.3,
        predictions=(),
        human_radii=(),
    )


class TestHumanConstraint:
    def test_boundary_contact_is_zero(self):
        # |dp| = r  ->  g = 0
        g = human_constraint(RobotState(0.6, 0, 0, 0), (0, 0), 0.3, 0.3)
        assert g == pytest.approx(0.0)

    def test_coincident_is_one(self):
        g = human_constraint(RobotState(0, 0, 0, 0), (0, 0), 0.3, 0.3)
        assert g == pytest.approx(1.0)

    def test_double_radius_is_minus_three(self):
        g = human_constraint(RobotState(1.2, 0, 0, 0), (0, 0), 0.3, 0.3)
        assert g == pytest.approx(-3.0)

    def test_rotation_invariance(self, rng):
        # the disc form must depend on |dp| only
        for _ in range(20):
            d = rng.uniform(0, 3)
            angle = rng.uniform(0, 2 * math.pi)
            p = (d * math.cos(angle), d * math.sin(angle))
            g = human_constraint(RobotState(*p, 0, 0), (0, 0), 0.3, 0.3)
            g_axis = human_constraint(RobotState(d, 0, 0, 0), (0, 0), 0.3, 0.3)
            assert g == pytest.approx(g_axis, abs=1e-12)

    def test_rejects_bad_radii(self):
        with pytest.raises(ValueError):
            human_constraint(RobotState(0, 0, 0, 0), (1, 1), 0.0, 0.3)


class TestCorridorConstraints:
    def scenario_with_wall(self):
        return Scenario(
            name="wall",
            robot_start=RobotState(0, 0, 0, 0),
            robot_radius=0.3,
            goal=(5.0, 0.0),
            reference_path=ReferencePath([(0, 0), (5, 0)]),
            humans_init=(),
            corridors=(HalfSpace((0.0, 1.0), 2.0),),
            bounds=(-10, 10, -10, 10),
        )

    def test_inside_is_negative(self):
        g = corridor_constraints(RobotState(0, 1, 0, 0),
                                 self.scenario_with_wall())
        assert g[0] == pytest.approx(1 - 2 + 0.3)  # -0.7

    def test_on_inflated_boundary_is_zero(self):
        g = corridor_constraints(RobotState(0, 1.7, 0, 0),
                                 self.scenario_with_wall())
        assert g[0] == pytest.approx(0.0)

    def test_outside_is_positive(self):
        g = corridor_constraints(RobotState(0, 1.9, 0, 0),
                                 self.scenario_with_wall())
        assert g[0] > 0.0


class TestStageCost:
    def test_on_path_on_speed_zero_inputs_is_zero(self):
        spec = default_path_spec(v_ref=1.5)
        path = ReferencePath([(0, 0), (10, 0)])
        state = RobotState(3.0, 0.0, 0.0, 1.5)
        value = stage_cost(spec, state, ControlInput(0, 0), 0, [], path)
        assert value == pytest.approx(0.0, abs=1e-12)

    def test_lateral_offset_contour_only(self):
        spec = default_path_spec().with_weights(
            {"contour": 1.0, "lag": 0.0, "velocity": 0.0, "accel": 0.0,
             "omega": 0.0})
        path = ReferencePath([(0, 0), (10, 0)])
        state = RobotState(3.0, 1.0, 0.0, 0.0)
        value = stage_cost(spec, state, ControlInput(0, 0), 0, [], path)
        assert value == pytest.approx(1.0)

    def test_goal_spec_at_goal_is_zero(self):
        spec = goal_spec(goal=(5.0, 0.0))
        path = ReferencePath([(0, 0), (10, 0)])
        state = RobotState(5.0, 0.0, 0.0, 1.5)
        value = stage_cost(spec, state, ControlInput(0, 0), 0, [], path)
        assert value == pytest.approx(0.0, abs=1e-12)


class TestSeeds:
    def config(self):
        return MpcConfig()

    def test_no_humans_duplicates_straight(self):
        scene = empty_scene()
        seeds = generate_seeds(scene, default_path_spec(), self.config())
        assert len(seeds) == 3
        np.testing.assert_array_equal(seeds[0], seeds[1])
        np.testing.assert_array_equal(seeds[0], seeds[2])

    def test_head_on_human_diverges_omega_signs(self):
        cfg = self.config()
        humans = [Human(0, (3.0, 0.0), (0.0, 0.0))]
        scene = PlanningScene(
            x_init=RobotState(0, 0, 0, 1.0),
            path=ReferencePath([(0, 0), (10, 0)]),
            goal=(10.0, 0.0),
            corridors=(),
            robot_radius=0.3,
            predictions=tuple(predict_humans(humans, cfg.horizon, cfg.dt)),
            human_radii=(0.3,),
        )
        seeds = generate_seeds(scene, default_path_spec(), cfg)
        left_omega = np.sum(seeds[1][:5, 1])
        right_omega = np.sum(seeds[2][:5, 1])
        assert left_omega * right_omega < 0  # opposite initial turn

    def test_previous_plan_appended_shifted(self):
        scene = empty_scene()
        cfg = self.config()
        spec = default_path_spec()
        best, _ = solve(scene, spec, cfg)
        seeds = generate_seeds(scene, spec, cfg, previous=best)
        assert len(seeds) == 4
        prev = np.array([[u.a, u.omega] for u in best.inputs])
        np.testing.assert_array_equal(seeds[-1][:-1], prev[1:])
        np.testing.assert_array_equal(seeds[-1][-1], prev[-1])

    def test_seeds_respect_input_box(self):
        scene = empty_scene()
        cfg = self.config()
        for seed in generate_seeds(scene, default_path_spec(), cfg):
            assert np.all(seed[:, 0] >= cfg.a_min - 1e-12)
            assert np.all(seed[:, 0] <= cfg.a_max + 1e-12)
            assert np.all(seed[:, 1] >= cfg.omega_min - 1e-12)
            assert np.all(seed[:, 1] <= cfg.omega_max + 1e-12)


class TestSolve:
    def test_empty_world_reaches_goal(self):
        scene = empty_scene(goal=(5.0, 0.0))
        cfg = MpcConfig()
        best, _ = solve(scene, goal_spec(), cfg)
        final = best.states[-1]
        assert math.hypot(final.x - 5.0, final.y) < 0.5
        assert best.status != PlanStatus.INFEASIBLE

    def test_rollout_dynamics_bit_exact(self):
        scene = empty_scene()
        cfg = MpcConfig()
        best, _ = solve(scene, goal_spec(), cfg)
        for k in range(cfg.horizon):
            step = unicycle_step(best.states[k], best.inputs[k], cfg.dt)
            assert step == best.states[k + 1]

    def test_inputs_inside_box(self):
        scene = empty_scene()
        cfg = MpcConfig()
        best, _ = solve(scene, goal_spec(), cfg)
        for u in best.inputs:
            assert cfg.a_min <= u.a <= cfg.a_max
            assert cfg.omega_min <= u.omega <= cfg.omega_max

    def test_feasible_status_respects_tolerance(self):
        cfg = MpcConfig()
        humans = [Human(0, (2.5, 0.0), (0.0, 0.0))]
        scene = PlanningScene(
            x_init=RobotState(0, 0, 0, 1.0),
            path=ReferencePath([(0, 0), (10, 0)]),
            goal=(5.0, 0.0),
            corridors=(),
            robot_radius=0.3,
            predictions=tuple(predict_humans(humans, cfg.horizon, cfg.dt)),
            human_radii=(0.3,),
        )
        best, plans = solve(scene, goal_spec(), cfg)
        for p in plans:
            if p.status != PlanStatus.INFEASIBLE:
                assert p.max_violation <= cfg.tol_g

    def test_static_human_cleared_and_symmetric(self):
        # a human dead ahead on a symmetric scene: the best plan keeps
        # clearance and the left/right seeds land on mirror-image costs
        cfg = MpcConfig()
        humans = [Human(0, (2.5, 0.0), (0.0, 0.0))]
        scene = PlanningScene(
            x_init=RobotState(0, 0, 0, 1.0),
            path=ReferencePath([(0, 0), (10, 0)]),
            goal=(5.0, 0.0),
            corridors=(),
            robot_radius=0.3,
            predictions=tuple(predict_humans(humans, cfg.horizon, cfg.dt)),
            human_radii=(0.3,),
        )
        best, plans = solve(scene, goal_spec(), cfg)
        assert best.status != PlanStatus.INFEASIBLE
        clearance = min(
            math.hypot(s.x - 2.5, s.y) for s in best.states
        )
        assert clearance >= 0.6 - cfg.tol_g - 1e-6
        left, right = plans[1], plans[2]
        assert left.cost == pytest.approx(right.cost, rel=0.01)

    def test_infeasible_box_brakes(self):
        # goal behind an unbroken wall directly ahead of the robot
        cfg = MpcConfig()
        scenario = Scenario(
            name="boxed",
            robot_start=RobotState(0, 0, 0, 2.0),
            robot_radius=0.3,
            goal=(5.0, 0.0),
            reference_path=ReferencePath([(0, 0), (5, 0)]),
            humans_init=(),
            corridors=(HalfSpace((1.0, 0.0), 1.0),),  # x <= 1 wall
            bounds=(-10, 10, -10, 10),
        )
        nav = NavController(scenario, goal_spec(), cfg)
        # moving at 2 m/s toward a wall 1 m away cannot stay feasible
        inp, plan, _ = nav.step(scenario.robot_start, [])
        assert plan.status == PlanStatus.INFEASIBLE
        assert inp == braking_input(scenario.robot_start, cfg)
        assert inp.omega == 0.0
        assert inp.a < 0.0

    def test_serial_vs_parallel_identical(self, rng):
        cfg = MpcConfig(max_iterations=20)
        for _ in range(20):
            x0 = RobotState(float(rng.uniform(-1, 1)),
                            float(rng.uniform(-1, 1)),
                            float(rng.uniform(-0.5, 0.5)),
                            float(rng.uniform(0, 1.5)))
            humans = [
                Human(i, tuple(rng.uniform(1, 4, 2) * [1, 0.4]),
                      tuple(rng.uniform(-0.5, 0.5, 2)))
                for i in range(int(rng.integers(0, 3)))
            ]
            scene = PlanningScene(
                x_init=x0,
                path=ReferencePath([(0, 0), (10, 0)]),
                goal=(float(rng.uniform(4, 8)), 0.0),
                corridors=(),
                robot_radius=0.3,
                predictions=tuple(predict_humans(humans, cfg.horizon, cfg.dt))
                if humans else (),
                human_radii=tuple(0.3 for _ in humans),
            )
            serial_best, serial_all = solve(scene, goal_spec(), cfg,
                                            parallel=False)
            parallel_best, parallel_all = solve(scene, goal_spec(), cfg,
                                                parallel=True)
            assert serial_best.seed_id == parallel_best.seed_id
            assert serial_best.cost == parallel_best.cost
            for a, b in zip(serial_all, parallel_all):
                assert a.cost == b.cost
                assert a.max_violation == b.max_violation
                np.testing.assert_array_equal(
                    np.array([[u.a, u.omega] for u in a.inputs]),
                    np.array([[u.a, u.omega] for u in b.inputs]))

    def test_weight_scaling_leaves_trajectory_unchanged(self):
        scene = empty_scene(goal=(5.0, 0.0))
        cfg = MpcConfig()
        spec = goal_spec()
        lam = 7.5
        scaled = spec.with_weights(
            {k: lam * w for k, w in spec.weights.items()})
        base_best, _ = solve(scene, spec, cfg)
        scaled_best, _ = solve(scene, scaled, cfg)
        assert scaled_best.cost == pytest.approx(lam * base_best.cost,
                                                 rel=1e-6)
        for a, b in zip(base_best.states, scaled_best.states):
            assert math.hypot(a.x - b.x, a.y - b.y) < 1e-3

    def test_braking_input_never_reverses(self):
        cfg = MpcConfig()
        inp = braking_input(RobotState(0, 0, 0, 0.1), cfg)
        after = unicycle_step(RobotState(0, 0, 0, 0.1), inp, cfg.dt)
        assert after.v >= -1e-12
        inp_fast = braking_input(RobotState(0, 0, 0, 2.5), cfg)
        assert inp_fast.a == cfg.a_min


class TestMeritMonotonicity:
    def test_merit_non_increasing_across_accepted_steps(self):
        from langnav.mpc import _optimize_seed

        cfg = MpcConfig()
        spec = goal_spec()
        # include a constrained scene so the penalty path is exercised
        humans = [Human(0, (2.5, 0.0), (0.0, 0.0))]
        scenes = [
            empty_scene(goal=(5.0, 0.0)),
            PlanningScene(
                x_init=RobotState(0, 0, 0, 1.5),
                path=ReferencePath([(0, 0), (10, 0)]),
                goal=(5.0, 0.0),
                corridors=(),
                robot_radius=0.3,
                predictions=tuple(
                    predict_humans(humans, cfg.horizon, cfg.dt)),
                human_radii=(0.3,),
            ),
        ]
        for scene in scenes:
            for i, seed in enumerate(generate_seeds(scene, spec, cfg)):
                trace: list = []
                _optimize_seed(i, seed, scene, spec, cfg, trace=trace)
                assert trace, "optimizer recorded no iterations"
                # within one penalty level the merit at the iterate must
                # never increase (Armijo only accepts descent steps)
                for (mu_a, m_a), (mu_b, m_b) in zip(trace, trace[1:]):
                    if mu_a == mu_b:
                        assert m_b <= m_a + 1e-9
