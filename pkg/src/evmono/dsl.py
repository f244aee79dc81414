"""Vector-field expression DSL.

Fields are written as semicolon- or newline-separated arithmetic expressions
over named states and parameters, e.g. ``10/(1 + x2^2) - x1``.  Supported
nodes: literals, state/parameter references, ``+ - * /``, unary minus,
integer powers ``^``, and the calls ``tanh(...)`` and ``exp(...)``.
Precedence is power > unary minus > ``* /`` > ``+ -`` with left-associative
binary operators.

Parsed fields are immutable.  Evaluation and Jacobians run on a flattened
instruction tape interpreted by :mod:`evmono._kernels`; a tree-walking
evaluator (which also accepts :class:`Dual` operands) is kept as an
independent reference path.
"""

import json
import math
import re
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._kernels import tape_eval, tape_eval_dual

FUNCTIONS = ("tanh", "exp")


class ParseError(ValueError):
    """Lexical or syntactic error; carries the offending source position."""

    def __init__(self, message, pos):
        super().__init__(f"{message} (at position {pos})")
        self.pos = pos


class EvaluationError(ArithmeticError):
    """Runtime evaluation failure, e.g. division by zero in component i."""

    def __init__(self, message, component=None):
        super().__init__(message)
        self.component = component


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class StateRef:
    index: int
    name: str


@dataclass(frozen=True)
class ParamRef:
    index: int
    name: str


@dataclass(frozen=True)
class Neg:
    arg: object


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * /
    left: object
    right: object


@dataclass(frozen=True)
class Pow:
    base: object
    exponent: int  # nonnegative; negative literals are rewritten as 1/x^k


@dataclass(frozen=True)
class Call:
    func: str
    arg: object


# ---------------------------------------------------------------------------
# Lexer

_TOKEN_RE = re.compile(
    r"""
    (?P<num>(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[+\-*/^(),])
  | (?P<sep>[;\n])
  | (?P<ws>[ \t\r]+)
""",
    re.VERBOSE,
)


def _tokenize(src):
    tokens = []
    pos = 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            raise ParseError(f"unexpected character {src[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


# ---------------------------------------------------------------------------
# Pratt parser.  Binding powers: + - (10), * / (20), unary - (30), ^ (40).

_BIN_BP = {"+": 10, "-": 10, "*": 20, "/": 20}
_UNARY_BP = 30
_POW_BP = 40


class _Parser:
    def __init__(self, tokens, state_names, param_names):
        self.tokens = tokens
        self.i = 0
        self.state_index = {s: k for k, s in enumerate(state_names)}
        self.param_index = {p: k for k, p in enumerate(param_names)}

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, val, pos = self.advance()
        if kind != "op" or val != op:
            raise ParseError(f"expected {op!r}, found {val!r}", pos)

    def parse_expression(self, min_bp=0):
        left = self._nud()
        while True:
            kind, val, pos = self.peek()
            if kind == "op" and val == "^" and _POW_BP >= min_bp:
                self.advance()
                left = self._finish_power(left)
            elif kind == "op" and val in _BIN_BP and _BIN_BP[val] >= min_bp:
                self.advance()
                right = self.parse_expression(_BIN_BP[val] + 1)
                left = BinOp(val, left, right)
            else:
                return left

    def _nud(self):
        kind, val, pos = self.advance()
        if kind == "num":
            return Const(float(val))
        if kind == "ident":
            if val in FUNCTIONS:
                self.expect_op("(")
                args = [self.parse_expression()]
                while self.peek()[:2] == ("op", ","):
                    self.advance()
                    args.append(self.parse_expression())
                self.expect_op(")")
                if len(args) != 1:
                    raise ParseError(f"{val} takes 1 argument, got {len(args)}", pos)
                return Call(val, args[0])
            nxt = self.peek()
            if nxt[:2] == ("op", "("):
                raise ParseError(f"unknown function {val!r}", pos)
            if val in self.state_index:
                return StateRef(self.state_index[val], val)
            if val in self.param_index:
                return ParamRef(self.param_index[val], val)
            raise ParseError(f"unknown identifier {val!r}", pos)
        if kind == "op" and val == "-":
            return Neg(self.parse_expression(_UNARY_BP))
        if kind == "op" and val == "+":
            return self.parse_expression(_UNARY_BP)
        if kind == "op" and val == "(":
            inner = self.parse_expression()
            self.expect_op(")")
            return inner
        raise ParseError(f"unexpected token {val!r}", pos)

    def _finish_power(self, base):
        # exponent must be an integer literal, optionally negated
        sign = 1
        kind, val, pos = self.advance()
        if kind == "op" and val == "-":
            sign = -1
            kind, val, pos = self.advance()
        if kind != "num" or not re.fullmatch(r"\d+", val):
            raise ParseError("integer exponent expected after '^'", pos)
        k = int(val)
        if sign < 0:
            return BinOp("/", Const(1.0), Pow(base, k))
        return Pow(base, k)


def _split_statements(tokens):
    groups = [[]]
    for tok in tokens:
        if tok[0] == "sep":
            groups.append([])
        elif tok[0] != "end":
            groups[-1].append(tok)
    return [g for g in groups if g]


def _check_static_zero_division(expr, component):
    """Reject division nodes whose denominator is literally zero."""
    if isinstance(expr, BinOp):
        if expr.op == "/":
            den = expr.right
            if isinstance(den, Neg) and isinstance(den.arg, Const):
                den = Const(-den.arg.value)
            if isinstance(den, Const) and den.value == 0.0:
                raise ParseError(
                    f"constant zero denominator in component {component}", 0
                )
        _check_static_zero_division(expr.left, component)
        _check_static_zero_division(expr.right, component)
    elif isinstance(expr, (Neg, Call)):
        _check_static_zero_division(getattr(expr, "arg"), component)
    elif isinstance(expr, Pow):
        _check_static_zero_division(expr.base, component)


# ---------------------------------------------------------------------------
# Dual numbers (forward mode, vector tangent)


class Dual:
    """Value plus a tangent vector; arithmetic follows exact calculus rules."""

    __slots__ = ("value", "deriv")

    def __init__(self, value, deriv):
        self.value = float(value)
        self.deriv = np.asarray(deriv, dtype=float)

    def _lift(self, other):
        if isinstance(other, Dual):
            return other
        return Dual(other, np.zeros_like(self.deriv))

    def __add__(self, other):
        o = self._lift(other)
        return Dual(self.value + o.value, self.deriv + o.deriv)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._lift(other)
        return Dual(self.value - o.value, self.deriv - o.deriv)

    def __rsub__(self, other):
        o = self._lift(other)
        return Dual(o.value - self.value, o.deriv - self.deriv)

    def __mul__(self, other):
        o = self._lift(other)
        return Dual(self.value * o.value, self.value * o.deriv + o.value * self.deriv)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._lift(other)
        v = self.value / o.value
        return Dual(v, (self.deriv - v * o.deriv) / o.value)

    def __rtruediv__(self, other):
        return self._lift(other).__truediv__(self)

    def __neg__(self):
        return Dual(-self.value, -self.deriv)

    def ipow(self, k):
        if k == 0:
            return Dual(1.0, np.zeros_like(self.deriv))
        p = 1.0
        for _ in range(k - 1):
            p *= self.value
        return Dual(p * self.value, k * p * self.deriv)

    def tanh(self):
        v = math.tanh(self.value)
        return Dual(v, (1.0 - v * v) * self.deriv)

    def exp(self):
        v = math.exp(self.value)
        return Dual(v, v * self.deriv)

    def __repr__(self):
        return f"Dual({self.value}, {self.deriv})"


def _ipow(v, k):
    if isinstance(v, Dual):
        return v.ipow(k)
    p = 1.0
    for _ in range(k):
        p *= v
    return p


_CALL_TABLE = {
    "tanh": (math.tanh, lambda d: d.tanh()),
    "exp": (math.exp, lambda d: d.exp()),
}


def eval_expr(expr, x, params):
    """Tree-walking evaluation; entries of x may be floats or Duals."""
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, StateRef):
        return x[expr.index]
    if isinstance(expr, ParamRef):
        return params[expr.index]
    if isinstance(expr, Neg):
        return -eval_expr(expr.arg, x, params)
    if isinstance(expr, BinOp):
        a = eval_expr(expr.left, x, params)
        b = eval_expr(expr.right, x, params)
        if expr.op == "+":
            return a + b
        if expr.op == "-":
            return a - b
        if expr.op == "*":
            return a * b
        bv = b.value if isinstance(b, Dual) else b
        if bv == 0.0:
            raise ZeroDivisionError("division by zero")
        return a / b
    if isinstance(expr, Pow):
        return _ipow(eval_expr(expr.base, x, params), expr.exponent)
    if isinstance(expr, Call):
        v = eval_expr(expr.arg, x, params)
        plain, dual = _CALL_TABLE[expr.func]
        return dual(v) if isinstance(v, Dual) else plain(v)
    raise TypeError(f"unknown node {expr!r}")


# ---------------------------------------------------------------------------
# Pretty printing (inverse of the parser up to whitespace)

_PREC = {"+": 10, "-": 10, "*": 20, "/": 20, "neg": 30, "pow": 40, "atom": 50}


def format_expr(expr, parent_prec=0, right_side=False):
    if isinstance(expr, Const):
        return repr(expr.value)
    if isinstance(expr, (StateRef, ParamRef)):
        return expr.name
    if isinstance(expr, Neg):
        s = "-" + format_expr(expr.arg, _PREC["neg"])
        return f"({s})" if parent_prec > _PREC["neg"] else s
    if isinstance(expr, BinOp):
        prec = _PREC[expr.op]
        left = format_expr(expr.left, prec)
        right = format_expr(expr.right, prec + 1, right_side=True)
        s = f"{left} {expr.op} {right}"
        needs = parent_prec > prec or (right_side and parent_prec == prec)
        return f"({s})" if needs else s
    if isinstance(expr, Pow):
        base = format_expr(expr.base, _PREC["pow"] + 1)
        s = f"{base}^{expr.exponent}"
        return f"({s})" if parent_prec > _PREC["pow"] else s
    if isinstance(expr, Call):
        return f"{expr.func}({format_expr(expr.arg)})"
    raise TypeError(f"unknown node {expr!r}")


# ---------------------------------------------------------------------------
# Tape compilation


def compile_tape(exprs):
    """Flatten expression trees into (code, consts) for the kernel interpreters."""
    code = []
    consts = []

    def emit(expr):
        if isinstance(expr, Const):
            consts.append(expr.value)
            code.append((_kernels.OP_CONST, len(consts) - 1))
        elif isinstance(expr, StateRef):
            code.append((_kernels.OP_STATE, expr.index))
        elif isinstance(expr, ParamRef):
            code.append((_kernels.OP_PARAM, expr.index))
        elif isinstance(expr, Neg):
            emit(expr.arg)
            code.append((_kernels.OP_NEG, 0))
        elif isinstance(expr, BinOp):
            emit(expr.left)
            emit(expr.right)
            op = {
                "+": _kernels.OP_ADD,
                "-": _kernels.OP_SUB,
                "*": _kernels.OP_MUL,
                "/": _kernels.OP_DIV,
            }[expr.op]
            code.append((op, 0))
        elif isinstance(expr, Pow):
            emit(expr.base)
            code.append((_kernels.OP_POW, expr.exponent))
        elif isinstance(expr, Call):
            emit(expr.arg)
            op = _kernels.OP_TANH if expr.func == "tanh" else _kernels.OP_EXP
            code.append((op, 0))
        else:
            raise TypeError(f"unknown node {expr!r}")

    for comp, expr in enumerate(exprs):
        emit(expr)
        code.append((_kernels.OP_STORE, comp))
    return (
        np.asarray(code, dtype=np.int64).reshape(len(code), 2),
        np.asarray(consts, dtype=np.float64),
    )


# ---------------------------------------------------------------------------
# VectorField


class VectorField:
    """Parsed vector field f(x) with named states and numeric parameters.

    Immutable after construction; eval/jacobian are pure, so instances are
    safe to share across threads and workers.  ``lhs_scale`` carries optional
    per-state left-hand multipliers (eps_i * xdot_i = f_i); the raw RHS f is
    what :meth:`eval` returns, integrators divide by lhs_scale.
    """

    def __init__(self, state_names, params, exprs, lhs_scale=None):
        self.state_names = tuple(state_names)
        self.dim = len(self.state_names)
        self.params = dict(params)
        self.param_names = tuple(sorted(self.params))
        self.exprs = tuple(exprs)
        if len(self.exprs) != self.dim:
            raise ValueError(
                f"{self.dim} states but {len(self.exprs)} equations"
            )
        if lhs_scale is None:
            lhs_scale = np.ones(self.dim)
        self.lhs_scale = np.asarray(lhs_scale, dtype=float)
        if self.lhs_scale.shape != (self.dim,) or np.any(self.lhs_scale <= 0):
            raise ValueError("lhs_scale must be positive, one entry per state")
        self.inv_scale = 1.0 / self.lhs_scale
        self.param_values = np.array(
            [float(self.params[p]) for p in self.param_names]
        )
        self.code, self.consts = compile_tape(self.exprs)

    # -- construction -------------------------------------------------------

    @classmethod
    def parse(cls, src, state_names, params=None, lhs_scale=None):
        params = dict(params or {})
        tokens = _tokenize(src)
        groups = _split_statements(tokens)
        param_names = tuple(sorted(params))
        exprs = []
        for comp, group in enumerate(groups):
            parser = _Parser(group + [("end", "", group[-1][2])], state_names, param_names)
            expr = parser.parse_expression()
            kind, val, pos = parser.peek()
            if kind != "end":
                raise ParseError(f"trailing input {val!r}", pos)
            _check_static_zero_division(expr, comp)
            exprs.append(expr)
        return cls(state_names, params, exprs, lhs_scale=lhs_scale)

    def with_params(self, **overrides):
        """New field with some parameter values replaced."""
        unknown = set(overrides) - set(self.params)
        if unknown:
            raise KeyError(f"unknown parameters: {sorted(unknown)}")
        params = {**self.params, **overrides}
        return VectorField(self.state_names, params, self.exprs, self.lhs_scale)

    def with_lhs_scale(self, lhs_scale):
        return VectorField(self.state_names, self.params, self.exprs, lhs_scale)

    # -- evaluation ----------------------------------------------------------

    def eval(self, x):
        """Raw right-hand side f(x)."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected state of length {self.dim}")
        out = np.empty(self.dim)
        status = tape_eval(self.code, self.consts, self.param_values, x, out)
        if status != 0:
            raise EvaluationError(
                f"division by zero in component {status - 1} at x={x.tolist()}",
                component=status - 1,
            )
        if not np.all(np.isfinite(out)):
            bad = int(np.flatnonzero(~np.isfinite(out))[0])
            raise EvaluationError(f"non-finite value in component {bad}", component=bad)
        return out

    def jacobian(self, x):
        """J(x) = df/dx by one forward dual pass per state direction."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected state of length {self.dim}")
        out = np.empty(self.dim)
        jac = np.empty((self.dim, self.dim))
        status = tape_eval_dual(
            self.code, self.consts, self.param_values, x, np.eye(self.dim), out, jac
        )
        if status != 0:
            raise EvaluationError(
                f"division by zero in component {status - 1} at x={x.tolist()}",
                component=status - 1,
            )
        return jac

    def dyn_rhs(self, x):
        """Dynamics xdot = f(x) / lhs_scale."""
        return self.eval(x) * self.inv_scale

    def dyn_jacobian(self, x):
        """Jacobian of the dynamics (rows divided by lhs_scale)."""
        return self.jacobian(x) * self.inv_scale[:, None]

    def eval_tree(self, x):
        """Reference tree-walking evaluation (independent of the tape path)."""
        vals = []
        for comp, expr in enumerate(self.exprs):
            try:
                vals.append(eval_expr(expr, x, self.param_values))
            except ZeroDivisionError:
                raise EvaluationError(
                    f"division by zero in component {comp}", component=comp
                ) from None
        return np.array(vals)

    def pretty(self):
        """Source text that parses back to an equivalent field."""
        return ";\n".join(format_expr(e) for e in self.exprs)

    def __repr__(self):
        return (
            f"VectorField(states={list(self.state_names)}, "
            f"params={self.params})"
        )


def load_model_file(path):
    """Read a JSON model document: states, params, equations, epsilon_scaling."""
    with open(path) as fh:
        doc = json.load(fh)
    for key in ("states", "equations"):
        if key not in doc:
            raise ValueError(f"model file missing {key!r}")
    states = doc["states"]
    equations = doc["equations"]
    if len(states) != len(equations):
        raise ValueError(
            f"{len(states)} states but {len(equations)} equations in model file"
        )
    lhs = doc.get("epsilon_scaling")
    return VectorField.parse(
        ";\n".join(equations),
        state_names=states,
        params=doc.get("params", {}),
        lhs_scale=lhs,
    )
