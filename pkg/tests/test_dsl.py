import numpy as np
import pytest

from langnav import dsl
from langnav.dsl import (
    Add,
    Call,
    CondMasks,
    Dual,
    EvalError,
    Num,
    Param,
    ParseError,
    Pow,
    Sub,
    Var,
    eval_env,
    evaluate,
    grad,
    parse_expr,
    pretty,
)
from conftest import (
    finite_difference,
    random_bindings,
    random_expr,
    switch_margin,
)


class TestParser:
    def test_velocity_tracking_shape(self):
        assert parse_expr("(v - v_ref)^2") == Pow(
            Sub(Var("v"), Param("v_ref")), 2)

    def test_inverse_distance_shape(self):
        expr = parse_expr("1/((oh_x - px)^2 + (oh_y - py)^2 + eps)")
        assert isinstance(expr, dsl.Div)
        assert expr.left == Num(1.0)
        assert isinstance(expr.right, Add)
        assert dsl.param_names(expr) == {"eps"}
        assert dsl.variable_names(expr) == {"oh_x", "oh_y", "px", "py"}

    def test_conditional_shape(self):
        expr = parse_expr("if_else(d2 - d_safe, 0, (d2 - d_safe)^2)")
        assert isinstance(expr, Call) and expr.func == "if_else"
        assert len(expr.args) == 3

    def test_precedence_and_associativity(self):
        assert parse_expr("a - v - 1") == Sub(Sub(Var("a"), Var("v")), Num(1))
        assert parse_expr("a + v * 2") == Add(
            Var("a"), dsl.Mul(Var("v"), Num(2)))
        assert parse_expr("v^2 * a") == dsl.Mul(Pow(Var("v"), 2), Var("a"))

    def test_negative_exponent(self):
        assert parse_expr("v^-2") == Pow(Var("v"), -2)

    def test_scientific_notation(self):
        assert parse_expr("1e-3") == Num(0.001)
        assert parse_expr("2.5e2") == Num(250.0)

    def test_syntax_error_reports_offset(self):
        with pytest.raises(ParseError) as err:
            parse_expr("v + * 2")
        assert err.value.offset == 4

    def test_unknown_function(self):
        with pytest.raises(ParseError, match="unknown function"):
            parse_expr("tan(v)")

    def test_wrong_arity(self):
        with pytest.raises(ParseError, match="expects 2 arguments"):
            parse_expr("min(v)")
        with pytest.raises(ParseError, match="expects 3 arguments"):
            parse_expr("if_else(v, 1)")

    def test_trailing_garbage(self):
        with pytest.raises(ParseError, match="trailing"):
            parse_expr("v + 1 )")

    def test_no_unary_minus(self):
        with pytest.raises(ParseError):
            parse_expr("-v")


class TestPrettyPrinter:
    def test_round_trip_on_term_library(self):
        from langnav.costspec import _BUILTIN_SOURCES

        for source in _BUILTIN_SOURCES.values():
            ast = parse_expr(source)
            printed = pretty(ast)
            assert parse_expr(printed) == ast
            assert pretty(parse_expr(printed)) == printed  # fixpoint

    def test_round_trip_on_random_asts(self, rng):
        for _ in range(100):
            ast = random_expr(rng)
            printed = pretty(ast)
            assert parse_expr(printed) == ast
            assert pretty(parse_expr(printed)) == printed

    def test_parenthesization(self):
        assert pretty(Sub(Var("a"), Sub(Var("v"), Num(1)))) == "a - (v - 1)"
        assert pretty(Pow(Add(Var("a"), Var("v")), 2)) == "(a + v)^2"
        assert pretty(Pow(Pow(Var("v"), 2), 3)) == "(v^2)^3"


class TestEvaluate:
    def test_perfect_velocity_tracking_is_zero(self):
        expr = parse_expr("(v - v_ref)^2")
        assert evaluate(expr, {"v": 1.5, "v_ref": 1.5}) == 0.0

    def test_goal_cost_squared_distance(self):
        expr = parse_expr("(goal_x - px)^2 + (goal_y - py)^2")
        value = evaluate(expr, {"goal_x": 4, "goal_y": 6, "px": 1, "py": 2})
        assert value == 25.0  # 3^2 + 4^2

    def test_inverse_distance_value(self):
        expr = parse_expr("1/(d2 + eps)")
        assert evaluate(expr, {"d2": 1.0, "eps": 0.01}) == pytest.approx(
            1 / 1.01)

    def test_if_else_selects_branch_exactly(self):
        expr = parse_expr("if_else(v, 1, 2)")
        assert evaluate(expr, {"v": 0.0}) == 1.0  # cond >= 0 takes then
        assert evaluate(expr, {"v": -1e-12}) == 2.0

    def test_if_else_skips_inactive_branch(self):
        # exact semantics evaluate only the selected branch, so a division
        # by zero in the other branch is never touched
        expr = parse_expr("if_else(v, 1, 1/v)")
        assert evaluate(expr, {"v": 1.0}) == 1.0

    def test_unbound_name(self):
        with pytest.raises(EvalError, match="unbound"):
            evaluate(parse_expr("v + missing"), {"v": 1.0})

    def test_division_by_zero(self):
        with pytest.raises(EvalError):
            evaluate(parse_expr("1/v"), {"v": 0.0})

    def test_deterministic_bit_identical(self, rng):
        for _ in range(20):
            ast = random_expr(rng)
            b = random_bindings(rng)
            try:
                first = evaluate(ast, b)
            except EvalError:
                continue
            for _ in range(3):
                assert evaluate(ast, b) == first

    def test_min_max(self):
        assert evaluate(parse_expr("min(v, a)"), {"v": 1, "a": 2}) == 1.0
        assert evaluate(parse_expr("max(v, a)"), {"v": 1, "a": 2}) == 2.0

    def test_abs_smooth_near_abs(self):
        expr = parse_expr("abs_smooth(v)")
        assert evaluate(expr, {"v": -3.0}) == pytest.approx(3.0, abs=1e-4)


class TestGrad:
    def test_polynomial_derivative(self):
        expr = parse_expr("(v - v_ref)^2")
        g = grad(expr, {"v": 2.0, "v_ref": 1.0}, ["v"])
        assert g[0] == pytest.approx(2.0)

    def test_goal_gradient(self):
        expr = parse_expr("(goal_x - px)^2 + (goal_y - py)^2")
        g = grad(expr, {"goal_x": 4, "goal_y": 6, "px": 1, "py": 2},
                 ["px", "py"])
        np.testing.assert_allclose(g, [-6.0, -8.0])

    def test_active_branch_derivative_at_switch(self):
        expr = parse_expr("if_else(v, v^2, 0 - v)")
        g = grad(expr, {"v": 0.0}, ["v"])
        assert g[0] == 0.0  # then-branch (v^2)' at 0

    def test_matches_finite_differences_on_random_asts(self, rng):
        checked = 0
        wrt = ["px", "py", "theta", "v", "a", "omega"]
        while checked < 120:
            ast = random_expr(rng)
            bindings = random_bindings(rng)
            if switch_margin(ast, bindings) < 1e-4:
                continue
            try:
                value = evaluate(ast, bindings)
                analytic = grad(ast, bindings, wrt)
            except EvalError:
                continue
            if abs(value) > 1e6 or np.any(np.abs(analytic) > 1e6):
                continue  # ill-scaled samples hurt the FD oracle, not grad
            numeric = finite_difference(ast, bindings, wrt)
            scale = np.maximum(np.abs(numeric), 1.0)
            assert np.all(np.abs(analytic - numeric) / scale < 1e-5), \
                f"gradient mismatch for {pretty(ast)}"
            checked += 1


class TestVectorizedEval:
    def test_array_bindings_match_scalar_loop(self, rng):
        for _ in range(10):
            ast = random_expr(rng)
            rows = [random_bindings(rng) for _ in range(7)]
            env = {k: np.array([r[k] for r in rows]) for k in rows[0]}
            try:
                scalars = [dsl._eval_scalar(ast, r) for r in rows]
            except EvalError:
                continue
            if switch_margin(ast, rows[0]) == 0:
                continue
            vector = eval_env(ast, env)
            np.testing.assert_allclose(np.asarray(vector, dtype=float),
                                       scalars, rtol=1e-12, atol=1e-12)

    def test_dual_batch_matches_scalar_grad(self, rng):
        wrt = ["v", "a"]
        ast = parse_expr("(v - v_ref)^2 + a^2 * v")
        rows = [dict(random_bindings(rng), v_ref=float(rng.uniform(0, 2)))
                for _ in range(5)]
        env = {}
        for name in rows[0]:
            vals = np.array([r[name] for r in rows])
            seed = np.zeros(2)
            if name in wrt:
                seed[wrt.index(name)] = 1.0
            env[name] = Dual.seeded(vals, seed)
        result = eval_env(ast, env)
        for i, row in enumerate(rows):
            np.testing.assert_allclose(result.tan[i],
                                       grad(ast, row, wrt), rtol=1e-12)

    def test_frozen_masks_pin_branches(self):
        expr = parse_expr("if_else(v, 10, 20)")
        masks = CondMasks()
        first = eval_env(expr, {"v": np.array([1.0, -1.0])}, masks)
        np.testing.assert_array_equal(first, [10.0, 20.0])
        # replay with flipped condition values: branches stay pinned
        replay = eval_env(expr, {"v": np.array([-5.0, 5.0])}, masks.rewind())
        np.testing.assert_array_equal(replay, [10.0, 20.0])

    def test_masked_branch_nonfinite_is_discarded(self):
        expr = parse_expr("if_else(v, 1, 1/v)")
        out = eval_env(expr, {"v": np.array([2.0, 3.0])})
        np.testing.assert_array_equal(out, [1.0, 1.0])


class TestDivisionGuard:
    def test_guarded_forms_pass(self):
        assert dsl.division_guarded(parse_expr("1/(v^2 + eps)"))
        assert dsl.division_guarded(parse_expr("1/(v^2 + 0.01)"))
        assert dsl.division_guarded(parse_expr("v/2"))

    def test_unguarded_form_fails(self):
        assert not dsl.division_guarded(parse_expr("1/v"))
        assert not dsl.division_guarded(parse_expr("1/(px + py)"))
