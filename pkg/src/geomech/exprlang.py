"""Arithmetic expression language used for Lagrangians, forces and connection
coefficients in run configs.

Grammar (Pratt parser, lowest to highest binding)::

    + -   left associative
    * /   left associative
    -x    prefix negation
    ^     right associative

Identifiers are ``t``, ``q<k>``, ``v<k>`` or declared parameters. Calls are
limited to :data:`FUNCTIONS`.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence, Union

__all__ = [
    "Num", "Var", "Neg", "BinOp", "Call", "Expression",
    "ExprSyntaxError", "ExprEvalError",
    "parse", "evaluate", "compile_expr", "compile_chart", "pretty", "free_variables", "bindings",
]


class ExprSyntaxError(ValueError):
    def __init__(self, message: str, offset: int, expected: Iterable[str] = ()):
        self.offset = offset
        self.expected = tuple(sorted(set(expected)))
        detail = f" (expected one of: {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{message} at byte offset {offset}{detail}")


class ExprEvalError(ArithmeticError):
    pass


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expression"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expression"
    right: "Expression"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


Expression = Union[Num, Var, Neg, BinOp, Call]


def _log(x):
    if x <= 0.0:
        raise ExprEvalError(f"log of non-positive value {x!r}")
    return math.log(x)


def _sqrt(x):
    if x < 0.0:
        raise ExprEvalError(f"sqrt of negative value {x!r}")
    return math.sqrt(x)


def _pow(a, b):
    try:
        r = math.pow(a, b)
    except ValueError as exc:
        raise ExprEvalError(f"pow({a!r}, {b!r}) undefined") from exc
    except OverflowError as exc:
        raise ExprEvalError(f"pow({a!r}, {b!r}) overflows") from exc
    return r


def _exp(x):
    try:
        return math.exp(x)
    except OverflowError as exc:
        raise ExprEvalError(f"exp({x!r}) overflows") from exc


# name -> (arity, implementation)
FUNCTIONS: dict[str, tuple[int, Callable[..., float]]] = {
    "sin": (1, math.sin),
    "cos": (1, math.cos),
    "tan": (1, math.tan),
    "exp": (1, _exp),
    "log": (1, _log),
    "sqrt": (1, _sqrt),
    "abs": (1, abs),
    "pow": (2, _pow),
}

_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),])"
    r")"
)
_COORD_RE = re.compile(r"^[qv]([1-9]\d*)$")

# binding powers
_BP = {"+": 10, "-": 10, "*": 20, "/": 20, "^": 40}
_PREFIX_BP = 30


@dataclass
class _Tok:
    kind: str  # num, name, op, end
    text: str
    offset: int  # byte offset


def _tokenize(source: str) -> list[_Tok]:
    toks = []
    pos = 0
    while True:
        m = _TOKEN_RE.match(source, pos)
        if m is None or m.end() == pos and m.lastgroup is None:
            rest = source[pos:]
            if rest.strip() == "":
                break
            stripped = len(rest) - len(rest.lstrip())
            bad = pos + stripped
            raise ExprSyntaxError(
                f"unexpected character {source[bad]!r}",
                len(source[:bad].encode("utf-8")),
                ("number", "identifier", "operator"),
            )
        kind = m.lastgroup
        if kind is None:
            break
        start = m.start(kind)
        toks.append(_Tok(kind, m.group(kind), len(source[:start].encode("utf-8"))))
        pos = m.end()
    toks.append(_Tok("end", "", len(source.encode("utf-8"))))
    return toks


class _Parser:
    def __init__(self, source: str, declared: frozenset[str] | None):
        self.toks = _tokenize(source)
        self.i = 0
        self.declared = declared

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def advance(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> _Tok:
        tok = self.peek()
        if tok.kind != "op" or tok.text != text:
            raise ExprSyntaxError(f"unexpected {tok.text or 'end of input'!r}", tok.offset, (text,))
        return self.advance()

    def parse(self) -> Expression:
        node = self.expr(0)
        tok = self.peek()
        if tok.kind != "end":
            raise ExprSyntaxError(f"unexpected {tok.text!r}", tok.offset, ("operator", "end of input"))
        return node

    def expr(self, rbp: int) -> Expression:
        left = self.nud(self.advance())
        while True:
            tok = self.peek()
            if tok.kind != "op" or tok.text not in _BP:
                return left
            lbp = _BP[tok.text]
            if lbp <= rbp:
                return left
            self.advance()
            # ^ is right associative
            right = self.expr(lbp - 1 if tok.text == "^" else lbp)
            left = BinOp(tok.text, left, right)

    def nud(self, tok: _Tok) -> Expression:
        if tok.kind == "num":
            return Num(float(tok.text))
        if tok.kind == "op" and tok.text == "-":
            return Neg(self.expr(_PREFIX_BP))
        if tok.kind == "op" and tok.text == "(":
            node = self.expr(0)
            self.expect(")")
            return node
        if tok.kind == "name":
            if self.peek().kind == "op" and self.peek().text == "(":
                return self.call(tok)
            if self.declared is not None and tok.text not in self.declared:
                raise ExprSyntaxError(f"unknown identifier {tok.text!r}", tok.offset, sorted(self.declared))
            return Var(tok.text)
        raise ExprSyntaxError(
            f"unexpected {tok.text or 'end of input'!r}", tok.offset,
            ("number", "identifier", "(", "-"),
        )

    def call(self, name: _Tok) -> Expression:
        if name.text not in FUNCTIONS:
            raise ExprSyntaxError(f"unknown function {name.text!r}", name.offset, FUNCTIONS)
        arity = FUNCTIONS[name.text][0]
        self.expect("(")
        args = [self.expr(0)]
        while self.peek().kind == "op" and self.peek().text == ",":
            comma = self.advance()
            if len(args) == arity:
                raise ExprSyntaxError(f"{name.text} takes {arity} argument(s)", comma.offset, (")",))
            args.append(self.expr(0))
        close = self.peek()
        self.expect(")")
        if len(args) != arity:
            raise ExprSyntaxError(
                f"{name.text} takes {arity} argument(s), got {len(args)}", close.offset, (",",)
            )
        return Call(name.text, tuple(args))


def declared_names(dim: int, params: Iterable[str] = ()) -> frozenset[str]:
    names = {"t"}
    for k in range(1, dim + 1):
        names.add(f"q{k}")
        names.add(f"v{k}")
    return frozenset(names | set(params))


def parse(source: str, declared: Iterable[str] | None = None) -> Expression:
    """Parse ``source``. When ``declared`` is given, unknown identifiers are a
    syntax error instead of an evaluation-time error."""
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    return _Parser(source, None if declared is None else frozenset(declared)).parse()


def free_variables(expr: Expression) -> set[str]:
    if isinstance(expr, Var):
        return {expr.name}
    if isinstance(expr, Num):
        return set()
    if isinstance(expr, Neg):
        return free_variables(expr.operand)
    if isinstance(expr, BinOp):
        return free_variables(expr.left) | free_variables(expr.right)
    return set().union(*(free_variables(a) for a in expr.args))


def _binop(op: str, a: float, b: float) -> float:
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        if b == 0.0:
            raise ExprEvalError("division by zero")
        return a / b
    return _pow(a, b)


def evaluate(expr: Expression, env: Mapping[str, float]) -> float:
    if isinstance(expr, Num):
        return expr.value
    if isinstance(expr, Var):
        try:
            return float(env[expr.name])
        except KeyError:
            raise ExprEvalError(f"unbound variable {expr.name!r}") from None
    if isinstance(expr, Neg):
        return -evaluate(expr.operand, env)
    if isinstance(expr, BinOp):
        return _binop(expr.op, evaluate(expr.left, env), evaluate(expr.right, env))
    fn = FUNCTIONS[expr.func][1]
    return fn(*(evaluate(a, env) for a in expr.args))


def _compile_closure(expr: Expression) -> Callable[[Mapping[str, float]], float]:
    if isinstance(expr, Num):
        value = expr.value
        return lambda env: value
    if isinstance(expr, Var):
        name = expr.name

        def var(env):
            try:
                return float(env[name])
            except KeyError:
                raise ExprEvalError(f"unbound variable {name!r}") from None
        return var
    if isinstance(expr, Neg):
        inner = _compile_closure(expr.operand)
        return lambda env: -inner(env)
    if isinstance(expr, BinOp):
        left, right, op = _compile_closure(expr.left), _compile_closure(expr.right), expr.op
        if op == "+":
            return lambda env: left(env) + right(env)
        if op == "-":
            return lambda env: left(env) - right(env)
        if op == "*":
            return lambda env: left(env) * right(env)
        return lambda env: _binop(op, left(env), right(env))
    fn = FUNCTIONS[expr.func][1]
    args = [_compile_closure(a) for a in expr.args]
    if len(args) == 1:
        a0 = args[0]
        return lambda env: fn(a0(env))
    return lambda env: fn(*(a(env) for a in args))


def _div(a: float, b: float) -> float:
    if b == 0.0:
        raise ExprEvalError("division by zero")
    return a / b


_RUNTIME = {"_div": _div, "_pow": _pow, "float": float,
            **{f"_fn_{name}": impl for name, (_, impl) in FUNCTIONS.items()}}


def _emit(expr: Expression, consts: list, local: Mapping[str, str]) -> str:
    if isinstance(expr, Num):
        consts.append(expr.value)
        return f"_c[{len(consts) - 1}]"
    if isinstance(expr, Var):
        return local[expr.name]
    if isinstance(expr, Neg):
        return f"(-{_emit(expr.operand, consts, local)})"
    if isinstance(expr, BinOp):
        a, b = _emit(expr.left, consts, local), _emit(expr.right, consts, local)
        if expr.op == "/":
            return f"_div({a}, {b})"
        if expr.op == "^":
            return f"_pow({a}, {b})"
        return f"({a} {expr.op} {b})"
    return f"_fn_{expr.func}({', '.join(_emit(x, consts, local) for x in expr.args)})"


def _generate(expr: Expression, args: str, prologue: Callable[[dict], list[str]]):
    """Python function ``f(args)`` evaluating ``expr``; None when the tree is
    too deep for the host compiler. Only literals, renamed identifiers and
    whitelisted helpers reach the generated source."""
    names = sorted(free_variables(expr))
    local = {name: f"_x{k}" for k, name in enumerate(names)}
    consts: list = []
    try:
        body = _emit(expr, consts, local)
        lines = [f"def _f({args}):", *prologue(local), f"    return {body}"]
        scope = {**_RUNTIME, "_c": tuple(consts), "ExprEvalError": ExprEvalError}
        exec(compile("\n".join(lines), "<expr>", "exec"), scope)
    except (RecursionError, SyntaxError, MemoryError):
        return None
    return scope["_f"]


def compile_expr(expr: Expression) -> Callable[[Mapping[str, float]], float]:
    """Compiled evaluator over an environment mapping; same semantics as
    :func:`evaluate` except that unbound variables are reported before any
    arithmetic error."""
    def prologue(local):
        if not local:
            return []
        loads = [f"        {x} = float(env[{name!r}])" for name, x in local.items()]
        return ["    try:", *loads, "    except KeyError as exc:",
                "        raise ExprEvalError(f'unbound variable {exc.args[0]!r}') from None"]
    return _generate(expr, "env", prologue) or _compile_closure(expr)


def compile_chart(expr: Expression, params: Mapping[str, float] | None = None
                  ) -> Callable[[float, Sequence[float], Sequence[float]], float]:
    """Compiled ``f(t, q, v)`` reading coordinates positionally and
    parameters as constants; avoids building an environment per call."""
    params = dict(params or {})
    for name in free_variables(expr):
        if name != "t" and name not in params and coordinate_index(name) is None:
            raise ExprEvalError(f"unbound variable {name!r}")

    def prologue(local):
        out = []
        for name, x in local.items():
            idx = coordinate_index(name)
            if name == "t":
                out.append(f"    {x} = float(t)")
            elif name in params:
                out.append(f"    {x} = {float(params[name])!r}")
            else:
                out.append(f"    {x} = float({idx[0]}[{idx[1] - 1}])")
        return out
    f = _generate(expr, "t, q, v", prologue)
    if f is None:
        g = _compile_closure(expr)
        f = lambda t, q, v: g(bindings(t, q, v, params))
    return f


def pretty(expr: Expression) -> str:
    """Render with explicit parentheses around every compound node."""
    if isinstance(expr, Num):
        return repr(expr.value)
    if isinstance(expr, Var):
        return expr.name
    if isinstance(expr, Neg):
        return f"(-{pretty(expr.operand)})"
    if isinstance(expr, BinOp):
        return f"({pretty(expr.left)} {expr.op} {pretty(expr.right)})"
    return f"{expr.func}({', '.join(pretty(a) for a in expr.args)})"


def bindings(t: float, q: Sequence[float], v: Sequence[float],
             params: Mapping[str, float] | None = None) -> dict[str, float]:
    env = dict(params or {})
    env["t"] = float(t)
    for k, (qk, vk) in enumerate(zip(q, v), start=1):
        env[f"q{k}"] = float(qk)
        env[f"v{k}"] = float(vk)
    return env


def coordinate_index(name: str) -> tuple[str, int] | None:
    m = _COORD_RE.match(name)
    if m is None:
        return None
    return name[0], int(m.group(1))
