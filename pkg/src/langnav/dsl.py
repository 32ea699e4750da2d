"""Differentiable cost-expression language.

Grammar::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := atom ['^' int]
    atom   := number | ident | ident '(' args ')' | '(' expr ')'

Recognized functions: ``if_else/3``, ``min/2``, ``max/2``, ``sqrt/1``,
``abs_smooth/1``.  There is no unary minus; literals are non-negative and
negation is written ``0 - x``.  Identifiers naming one of the per-stage
quantities in VARIABLES parse as variables, everything else as a named
parameter.

Evaluation is scalar or vectorized (numpy arrays as bindings), and
forward-mode dual numbers provide exact derivatives.  ``if_else`` compares
its condition against zero and selects a branch; a condition-mask recorder
lets a solver freeze the active branches across the evaluations of one
iteration.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np

__all__ = [
    "CostExpr",
    "Num",
    "Var",
    "Param",
    "Add",
    "Sub",
    "Mul",
    "Div",
    "Pow",
    "Call",
    "VARIABLES",
    "FUNCTIONS",
    "ParseError",
    "EvalError",
    "parse_expr",
    "pretty",
    "evaluate",
    "grad",
    "Dual",
    "CondMasks",
    "eval_env",
    "param_names",
    "variable_names",
    "division_guarded",
]

#: Per-stage quantities a cost term may reference.
VARIABLES = frozenset(
    ["px", "py", "theta", "v", "a", "omega", "oh_x", "oh_y", "e_c", "e_l"]
)

#: name -> arity
FUNCTIONS = {"if_else": 3, "min": 2, "max": 2, "sqrt": 1, "abs_smooth": 1}

_ABS_SMOOTH_EPS = 1e-8  # abs_smooth(x) = sqrt(x^2 + eps)


class ParseError(ValueError):
    """Syntax error with the byte offset where it was detected."""

    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class EvalError(ValueError):
    """Unbound name or non-finite result during evaluation."""


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Add:
    left: "CostExpr"
    right: "CostExpr"


@dataclass(frozen=True)
class Sub:
    left: "CostExpr"
    right: "CostExpr"


@dataclass(frozen=True)
class Mul:
    left: "CostExpr"
    right: "CostExpr"


@dataclass(frozen=True)
class Div:
    left: "CostExpr"
    right: "CostExpr"


@dataclass(frozen=True)
class Pow:
    base: "CostExpr"
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple["CostExpr", ...]


CostExpr = Union[Num, Var, Param, Add, Sub, Mul, Div, Pow, Call]


# ---------------------------------------------------------------------------
# Tokenizer / parser

_TOKEN_OPS = set("+-*/^(),")


def _tokenize(source: str):
    tokens = []  # (kind, text, offset)
    i, n = 0, len(source)
    while i < n:
        c = source[i]
        if c.isspace():
            i += 1
            continue
        if c in _TOKEN_OPS:
            tokens.append(("op", c, i))
            i += 1
            continue
        if c.isdigit() or (c == "." and i + 1 < n and source[i + 1].isdigit()):
            j = i
            while j < n and (source[j].isdigit() or source[j] == "."):
                j += 1
            if j < n and source[j] in "eE":
                k = j + 1
                if k < n and source[k] in "+-":
                    k += 1
                if k < n and source[k].isdigit():
                    j = k
                    while j < n and source[j].isdigit():
                        j += 1
            text = source[i:j]
            try:
                float(text)
            except ValueError:
                raise ParseError(f"malformed number {text!r}", i) from None
            tokens.append(("num", text, i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            tokens.append(("ident", source[i:j], i))
            i = j
            continue
        raise ParseError(f"unexpected character {c!r}", i)
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, source: str) -> None:
        self.source = source
        self.tokens = _tokenize(source)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op: str):
        kind, text, off = self.peek()
        if kind != "op" or text != op:
            raise ParseError(f"expected {op!r}, found {text or 'end of input'!r}", off)
        return self.advance()

    def parse(self) -> CostExpr:
        expr = self.expr()
        kind, text, off = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected trailing input {text!r}", off)
        return expr

    def expr(self) -> CostExpr:
        node = self.term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.advance()
                rhs = self.term()
                node = Add(node, rhs) if text == "+" else Sub(node, rhs)
            else:
                return node

    def term(self) -> CostExpr:
        node = self.factor()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.advance()
                rhs = self.factor()
                node = Mul(node, rhs) if text == "*" else Div(node, rhs)
            else:
                return node

    def factor(self) -> CostExpr:
        node = self.atom()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.advance()
            node = Pow(node, self.int_literal())
        return node

    def int_literal(self) -> int:
        sign = 1
        kind, text, off = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            sign = -1
            kind, text, off = self.peek()
        if kind != "num" or any(ch in text for ch in ".eE"):
            raise ParseError(f"exponent must be an integer, found {text!r}", off)
        self.advance()
        return sign * int(text)

    def atom(self) -> CostExpr:
        kind, text, off = self.advance()
        if kind == "num":
            return Num(float(text))
        if kind == "op" and text == "(":
            inner = self.expr()
            self.expect_op(")")
            return inner
        if kind == "ident":
            k2, t2, _ = self.peek()
            if k2 == "op" and t2 == "(":
                return self.call(text, off)
            if text in VARIABLES:
                return Var(text)
            if text in FUNCTIONS:
                raise ParseError(f"function {text!r} requires argument list", off)
            return Param(text)
        raise ParseError(f"expected expression, found {text or 'end of input'!r}", off)

    def call(self, name: str, off: int) -> CostExpr:
        if name not in FUNCTIONS:
            raise ParseError(f"unknown function {name!r}", off)
        self.expect_op("(")
        args = [self.expr()]
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text == ",":
                self.advance()
                args.append(self.expr())
            else:
                break
        self.expect_op(")")
        if len(args) != FUNCTIONS[name]:
            raise ParseError(
                f"{name} expects {FUNCTIONS[name]} arguments, got {len(args)}", off
            )
        return Call(name, tuple(args))


def parse_expr(source: str) -> CostExpr:
    """Parse DSL source into an AST; raises ParseError with a byte offset."""
    return _Parser(source).parse()


# ---------------------------------------------------------------------------
# Pretty printer (parse(pretty(ast)) == ast structurally)

_LEVEL_ADD, _LEVEL_MUL, _LEVEL_POW, _LEVEL_ATOM = 1, 2, 3, 4


def _level(node: CostExpr) -> int:
    if isinstance(node, (Add, Sub)):
        return _LEVEL_ADD
    if isinstance(node, (Mul, Div)):
        return _LEVEL_MUL
    if isinstance(node, Pow):
        return _LEVEL_POW
    return _LEVEL_ATOM


def pretty(node: CostExpr) -> str:
    """Render an AST back to concrete syntax with minimal parentheses."""

    def render(n: CostExpr, min_level: int) -> str:
        text: str
        if isinstance(n, Num):
            text = repr(n.value) if n.value != int(n.value) else str(int(n.value))
        elif isinstance(n, (Var, Param)):
            text = n.name
        elif isinstance(n, Call):
            text = f"{n.func}({', '.join(render(a, _LEVEL_ADD) for a in n.args)})"
        elif isinstance(n, Pow):
            base = render(n.base, _LEVEL_ATOM)
            text = f"{base}^{n.exponent}"
        elif isinstance(n, (Add, Sub)):
            op = "+" if isinstance(n, Add) else "-"
            text = (
                f"{render(n.left, _LEVEL_ADD)} {op} {render(n.right, _LEVEL_ADD + 1)}"
            )
        elif isinstance(n, (Mul, Div)):
            op = "*" if isinstance(n, Mul) else "/"
            text = (
                f"{render(n.left, _LEVEL_MUL)} {op} {render(n.right, _LEVEL_MUL + 1)}"
            )
        else:
            raise TypeError(f"not a CostExpr node: {n!r}")
        if _level(n) < min_level:
            return f"({text})"
        return text

    return render(node, _LEVEL_ADD)


# ---------------------------------------------------------------------------
# Walkers

def param_names(node: CostExpr) -> set[str]:
    out: set[str] = set()
    _walk(node, lambda n: out.add(n.name) if isinstance(n, Param) else None)
    return out


def variable_names(node: CostExpr) -> set[str]:
    out: set[str] = set()
    _walk(node, lambda n: out.add(n.name) if isinstance(n, Var) else None)
    return out


def _walk(node: CostExpr, visit) -> None:
    visit(node)
    if isinstance(node, (Add, Sub, Mul, Div)):
        _walk(node.left, visit)
        _walk(node.right, visit)
    elif isinstance(node, Pow):
        _walk(node.base, visit)
    elif isinstance(node, Call):
        for a in node.args:
            _walk(a, visit)


def division_guarded(node: CostExpr) -> bool:
    """True when every division's denominator carries an additive positive
    constant or parameter (the declared-epsilon guard idiom), or is itself a
    nonzero constant."""
    ok = True

    def additive_chain(n: CostExpr):
        if isinstance(n, Add):
            yield from additive_chain(n.left)
            yield from additive_chain(n.right)
        else:
            yield n

    def check(n: CostExpr) -> None:
        nonlocal ok
        if isinstance(n, Div):
            den = n.right
            if isinstance(den, Num) and den.value != 0.0:
                return
            terms = list(additive_chain(den))
            if not any(
                isinstance(t, Param) or (isinstance(t, Num) and t.value > 0.0)
                for t in terms
            ):
                ok = False

    _walk(node, check)
    return ok


# ---------------------------------------------------------------------------
# Evaluation

class CondMasks:
    """Records or replays the active-branch masks of if_else nodes.

    A solver records masks once per iteration (at the current iterate) and
    replays them for every further evaluation within that iteration, keeping
    the cost piecewise-fixed across a line search.
    """

    def __init__(self) -> None:
        self.mode = "record"
        self._masks: list[np.ndarray] = []
        self._cursor = 0

    def rewind(self) -> "CondMasks":
        self.mode = "replay"
        self._cursor = 0
        return self

    def push(self, mask: np.ndarray) -> np.ndarray:
        if self.mode == "record":
            self._masks.append(mask)
            return mask
        mask = self._masks[self._cursor]
        self._cursor += 1
        return mask


def evaluate(expr: CostExpr, bindings: dict) -> float:
    """Evaluate the AST with scalar bindings.

    if_else evaluates only the selected branch (exact non-smooth semantics).
    Raises EvalError for unbound names and non-finite results.
    """
    result = _eval_scalar(expr, bindings)
    if not np.isfinite(result):
        raise EvalError(f"non-finite result {result!r} for {pretty(expr)!r}")
    return float(result)


def _lookup(name: str, bindings: dict):
    try:
        return bindings[name]
    except KeyError:
        raise EvalError(f"unbound name {name!r}") from None


def _eval_scalar(node: CostExpr, b: dict) -> float:
    if isinstance(node, Num):
        return node.value
    if isinstance(node, (Var, Param)):
        return float(_lookup(node.name, b))
    if isinstance(node, Add):
        return _eval_scalar(node.left, b) + _eval_scalar(node.right, b)
    if isinstance(node, Sub):
        return _eval_scalar(node.left, b) - _eval_scalar(node.right, b)
    if isinstance(node, Mul):
        return _eval_scalar(node.left, b) * _eval_scalar(node.right, b)
    if isinstance(node, Div):
        den = _eval_scalar(node.right, b)
        if den == 0.0:
            raise EvalError(f"division by zero in {pretty(node)!r}")
        return _eval_scalar(node.left, b) / den
    if isinstance(node, Pow):
        base = _eval_scalar(node.base, b)
        if base == 0.0 and node.exponent < 0:
            raise EvalError(f"zero base with negative exponent in {pretty(node)!r}")
        return base ** node.exponent
    if isinstance(node, Call):
        if node.func == "if_else":
            cond = _eval_scalar(node.args[0], b)
            branch = node.args[1] if cond >= 0.0 else node.args[2]
            return _eval_scalar(branch, b)
        args = [_eval_scalar(a, b) for a in node.args]
        if node.func == "min":
            return min(args)
        if node.func == "max":
            return max(args)
        if node.func == "sqrt":
            if args[0] < 0.0:
                raise EvalError(f"sqrt of negative value in {pretty(node)!r}")
            return float(np.sqrt(args[0]))
        if node.func == "abs_smooth":
            return float(np.sqrt(args[0] ** 2 + _ABS_SMOOTH_EPS))
    raise TypeError(f"not a CostExpr node: {node!r}")


class Dual:
    """Forward-mode dual number with array payloads.

    ``val`` has any shape; ``tan`` carries one trailing axis of tangents,
    shape ``val.shape + (n,)``.  All arithmetic broadcasts over the value
    shape, so a single AST walk differentiates a whole stage batch.  Mixed
    arithmetic with plain scalars/arrays treats them as constants.
    """

    __slots__ = ("val", "tan")
    __array_priority__ = 1000  # ndarray <op> Dual defers to Dual

    def __init__(self, val, tan) -> None:
        self.val = np.asarray(val, dtype=float)
        self.tan = np.asarray(tan, dtype=float)

    @classmethod
    def constant(cls, val, n: int) -> "Dual":
        val = np.asarray(val, dtype=float)
        return cls(val, np.zeros(val.shape + (n,)))

    @classmethod
    def seeded(cls, val, seed) -> "Dual":
        """Dual whose tangent row is `seed` at every value entry."""
        val = np.asarray(val, dtype=float)
        seed = np.asarray(seed, dtype=float)
        return cls(val, np.broadcast_to(seed, val.shape + seed.shape).copy())

    @property
    def n_tangents(self) -> int:
        return self.tan.shape[-1]

    def __add__(self, o):
        if isinstance(o, Dual):
            return Dual(self.val + o.val, self.tan + o.tan)
        return Dual(self.val + o, self.tan)

    __radd__ = __add__

    def __sub__(self, o):
        if isinstance(o, Dual):
            return Dual(self.val - o.val, self.tan - o.tan)
        return Dual(self.val - o, self.tan)

    def __rsub__(self, o):
        return Dual(o - self.val, -self.tan)

    def __mul__(self, o):
        if isinstance(o, Dual):
            return Dual(
                self.val * o.val,
                self.tan * o.val[..., None] + o.tan * self.val[..., None],
            )
        factor = np.asarray(o, dtype=float)
        return Dual(self.val * factor, self.tan * factor[..., None])

    __rmul__ = __mul__

    def __truediv__(self, o):
        if isinstance(o, Dual):
            inv = 1.0 / o.val
            val = self.val * inv
            return Dual(val, (self.tan - o.tan * val[..., None]) * inv[..., None])
        inv = 1.0 / np.asarray(o, dtype=float)
        return Dual(self.val * inv, self.tan * inv[..., None])

    def __rtruediv__(self, o):
        val = o / self.val
        return Dual(val, self.tan * (-val / self.val)[..., None])

    def __pow__(self, n: int) -> "Dual":
        return self.pow_int(n)

    def pow_int(self, n: int) -> "Dual":
        if n == 0:
            return Dual.constant(np.ones_like(self.val), self.n_tangents)
        val = self.val ** n
        dval = n * self.val ** (n - 1)
        return Dual(val, self.tan * dval[..., None])

    def sqrt(self) -> "Dual":
        root = np.sqrt(self.val)
        return Dual(root, self.tan * (0.5 / root)[..., None])

    def abs_smooth(self) -> "Dual":
        root = np.sqrt(self.val**2 + _ABS_SMOOTH_EPS)
        return Dual(root, self.tan * (self.val / root)[..., None])

    @staticmethod
    def select(mask: np.ndarray, a, b) -> "Dual":
        if not isinstance(a, Dual):
            a = Dual.constant(a, b.n_tangents)
        if not isinstance(b, Dual):
            b = Dual.constant(b, a.n_tangents)
        return Dual(
            np.where(mask, a.val, b.val),
            np.where(mask[..., None], a.tan, b.tan),
        )


def compile_expr(node: CostExpr):
    """Compile an AST into a closure f(env, masks) over array/Dual bindings.

    Compilation caches on the (hashable, immutable) AST, so repeated
    evaluation of the same cost terms pays the dispatch cost once.
    Inactive if_else branches are computed elementwise and discarded by the
    selection, so transient non-finite values in a masked-out branch do not
    contaminate the result; evaluate under np.errstate(all="ignore").
    """
    return _compile(node)


@lru_cache(maxsize=1024)
def _compile(node: CostExpr):
    if isinstance(node, Num):
        value = node.value
        return lambda env, masks: value
    if isinstance(node, (Var, Param)):
        name = node.name
        def load(env, masks, name=name):
            try:
                return env[name]
            except KeyError:
                raise EvalError(f"unbound name {name!r}") from None
        return load
    if isinstance(node, Add):
        f, g = _compile(node.left), _compile(node.right)
        return lambda env, masks: f(env, masks) + g(env, masks)
    if isinstance(node, Sub):
        f, g = _compile(node.left), _compile(node.right)
        return lambda env, masks: f(env, masks) - g(env, masks)
    if isinstance(node, Mul):
        f, g = _compile(node.left), _compile(node.right)
        return lambda env, masks: f(env, masks) * g(env, masks)
    if isinstance(node, Div):
        f, g = _compile(node.left), _compile(node.right)
        return lambda env, masks: f(env, masks) / g(env, masks)
    if isinstance(node, Pow):
        f, n = _compile(node.base), node.exponent
        def power(env, masks, f=f, n=n):
            base = f(env, masks)
            if isinstance(base, Dual):
                return base.pow_int(n)
            return base ** n
        return power
    if isinstance(node, Call):
        if node.func == "if_else":
            fc, ft, fe = (_compile(a) for a in node.args)
            def if_else(env, masks, fc=fc, ft=ft, fe=fe):
                cond = fc(env, masks)
                cond_val = cond.val if isinstance(cond, Dual) else cond
                mask = np.asarray(cond_val >= 0.0)
                if masks is not None:
                    mask = masks.push(mask)
                a, b = ft(env, masks), fe(env, masks)
                if isinstance(a, Dual) or isinstance(b, Dual):
                    return Dual.select(mask, a, b)
                return np.where(mask, a, b)
            return if_else
        if node.func in ("min", "max"):
            fa, fb = (_compile(a) for a in node.args)
            is_min = node.func == "min"
            def extremum(env, masks, fa=fa, fb=fb, is_min=is_min):
                a, b = fa(env, masks), fb(env, masks)
                aval = a.val if isinstance(a, Dual) else a
                bval = b.val if isinstance(b, Dual) else b
                mask = aval <= bval if is_min else aval >= bval
                if isinstance(a, Dual) or isinstance(b, Dual):
                    return Dual.select(mask, a, b)
                return np.where(mask, a, b)
            return extremum
        if node.func == "sqrt":
            fx = _compile(node.args[0])
            def root(env, masks, fx=fx):
                x = fx(env, masks)
                return x.sqrt() if isinstance(x, Dual) else np.sqrt(x)
            return root
        if node.func == "abs_smooth":
            fx = _compile(node.args[0])
            def smooth_abs(env, masks, fx=fx):
                x = fx(env, masks)
                if isinstance(x, Dual):
                    return x.abs_smooth()
                return np.sqrt(x**2 + _ABS_SMOOTH_EPS)
            return smooth_abs
    raise TypeError(f"not a CostExpr node: {node!r}")


def eval_env(expr: CostExpr, env: dict, masks: CondMasks | None = None):
    """Evaluate with array-valued bindings; returns ndarray (or Dual, when
    the env binds Dual instances)."""
    with np.errstate(all="ignore"):
        return _compile(expr)(env, masks)


def grad(expr: CostExpr, bindings: dict, wrt: list[str]) -> np.ndarray:
    """Partial derivatives of the expression with respect to `wrt`.

    At an if_else branch point the derivative of the active branch is
    returned.  Raises EvalError when a free name is unbound or the value is
    non-finite.
    """
    n = len(wrt)
    index = {name: i for i, name in enumerate(wrt)}
    env: dict[str, Dual] = {}
    for name, value in bindings.items():
        seed = np.zeros(n)
        if name in index:
            seed[index[name]] = 1.0
        env[name] = Dual(np.asarray(float(value)), seed)
    for name in wrt:
        if name not in env:
            raise EvalError(f"unbound name {name!r}")
    result = eval_env(expr, env)
    if not isinstance(result, Dual):  # constant expression
        return np.zeros(n)
    if not np.all(np.isfinite(result.val)) or not np.all(np.isfinite(result.tan)):
        raise EvalError(f"non-finite value or derivative for {pretty(expr)!r}")
    return np.asarray(result.tan, dtype=float)
