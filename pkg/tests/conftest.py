"""Shared test helpers: random AST generation and reference integrators."""

from __future__ import annotations

import math

import numpy as np
import pytest

from langnav import dsl

CONTINUOUS_VARS = ["px", "py", "theta", "v", "a", "omega", "oh_x", "oh_y",
                   "e_c", "e_l"]
PARAMS = ["p0", "p1", "p2"]


def random_expr(rng: np.random.Generator, depth: int = 0,
                max_depth: int = 4) -> dsl.CostExpr:
    """Random well-formed AST with guarded divisions and positive sqrt args."""
    if depth >= max_depth or rng.random() < 0.25:
        which = rng.integers(0, 3)
        if which == 0:
            return dsl.Var(str(rng.choice(CONTINUOUS_VARS)))
        if which == 1:
            return dsl.Param(str(rng.choice(PARAMS)))
        return dsl.Num(round(float(rng.uniform(0.1, 3.0)), 6))

    op = rng.integers(0, 9)
    sub = lambda: random_expr(rng, depth + 1, max_depth)  # noqa: E731
    if op == 0:
        return dsl.Add(sub(), sub())
    if op == 1:
        return dsl.Sub(sub(), sub())
    if op == 2:
        return dsl.Mul(sub(), sub())
    if op == 3:
        # guarded division: denominator = (expr)^2 + positive constant
        guard = dsl.Add(dsl.Pow(sub(), 2),
                        dsl.Num(round(float(rng.uniform(0.5, 2.0)), 6)))
        return dsl.Div(sub(), guard)
    if op == 4:
        return dsl.Pow(sub(), int(rng.integers(1, 4)))
    if op == 5:
        # sqrt of a positive quantity
        arg = dsl.Add(dsl.Pow(sub(), 2),
                      dsl.Num(round(float(rng.uniform(0.1, 1.0)), 6)))
        return dsl.Call("sqrt", (arg,))
    if op == 6:
        return dsl.Call("abs_smooth", (sub(),))
    if op == 7:
        cond = dsl.Sub(sub(), dsl.Num(round(float(rng.uniform(0.0, 2.0)), 6)))
        return dsl.Call("if_else", (cond, sub(), sub()))
    name = "min" if rng.random() < 0.5 else "max"
    return dsl.Call(name, (sub(), sub()))


def random_bindings(rng: np.random.Generator) -> dict[str, float]:
    b = {name: float(rng.uniform(-2.0, 2.0)) for name in CONTINUOUS_VARS}
    b.update({name: float(rng.uniform(0.1, 2.0)) for name in PARAMS})
    return b


def switch_margin(expr: dsl.CostExpr, bindings: dict[str, float]) -> float:
    """Smallest |condition| over all branch points; inf when branch-free."""
    margin = math.inf

    def visit(node: dsl.CostExpr) -> None:
        nonlocal margin
        if isinstance(node, dsl.Call):
            if node.func == "if_else":
                margin = min(margin,
                             abs(dsl._eval_scalar(node.args[0], bindings)))
            elif node.func in ("min", "max"):
                a = dsl._eval_scalar(node.args[0], bindings)
                b = dsl._eval_scalar(node.args[1], bindings)
                margin = min(margin, abs(a - b))
            for a in node.args:
                visit(a)
        elif isinstance(node, (dsl.Add, dsl.Sub, dsl.Mul, dsl.Div)):
            visit(node.left)
            visit(node.right)
        elif isinstance(node, dsl.Pow):
            visit(node.base)

    visit(expr)
    return margin


def finite_difference(expr: dsl.CostExpr, bindings: dict[str, float],
                      wrt: list[str], h: float = 1e-6) -> np.ndarray:
    """Central finite differences, the gradient oracle."""
    out = np.zeros(len(wrt))
    for i, name in enumerate(wrt):
        up = dict(bindings)
        down = dict(bindings)
        up[name] = bindings[name] + h
        down[name] = bindings[name] - h
        out[i] = (dsl._eval_scalar(expr, up)
                  - dsl._eval_scalar(expr, down)) / (2 * h)
    return out


def rk4_unicycle(state: np.ndarray, inp: np.ndarray, dt: float,
                 substeps: int = 1) -> np.ndarray:
    """Reference integrator for the continuous second-order unicycle."""

    def f(s: np.ndarray) -> np.ndarray:
        return np.array([s[3] * math.cos(s[2]), s[3] * math.sin(s[2]),
                         inp[1], inp[0]])

    s = np.asarray(state, dtype=float)
    h = dt / substeps
    for _ in range(substeps):
        k1 = f(s)
        k2 = f(s + 0.5 * h * k1)
        k3 = f(s + 0.5 * h * k2)
        k4 = f(s + h * k3)
        s = s + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return s


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
