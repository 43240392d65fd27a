"""Declarative coefficient expressions for time-periodic coupling fields.

Coefficients are built from a small, serializable grammar rather than
arbitrary callbacks so that run configurations round-trip through files
and evaluations are reproducible:

    expr    := term (('+' | '-') term)*
    term    := factor ('*' factor)*
    factor  := '-' factor | primary ('^' INT)?
    primary := NUMBER | IDENT | '(' expr ')'
    IDENT   := 'x<l>' | 'sin_t' | 'cos_t' | 'sin_x<l>' | 'cos_x<l>'

`x<l>` is the l-th spatial coordinate (1-based).  `sin_t`/`cos_t` evaluate
sin/cos of (2*pi*t/T); `sin_x<l>`/`cos_x<l>` evaluate sin/cos of
(2*pi*x_l/p_l) and require a periodic cell with periods p_l.

Time enters evaluation only through the reduced phase t/T mod 1, computed
with an exact `fmod` reduction.  Two time arguments therefore evaluate
bit-identically whenever their difference is an exact multiple of T (in
particular for any t such that t + T is exactly representable).
"""

import math
import re

import numpy as np

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<sym>[-+*^()]))"
)

_IDENT_COORD = re.compile(r"^x([1-9][0-9]*)$")
_IDENT_XTRIG = re.compile(r"^(sin|cos)_x([1-9][0-9]*)$")


class ExpressionError(ValueError):
    """Raised for syntax errors or identifiers invalid in context."""


def _tokenize(source):
    pos = 0
    tokens = []
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None or m.end() == pos:
            rest = source[pos:].strip()
            if not rest:
                break
            raise ExpressionError(f"unexpected character {rest[0]!r} in {source!r}")
        if m.group("num") is not None:
            tokens.append(("num", float(m.group("num"))))
        elif m.group("ident") is not None:
            tokens.append(("ident", m.group("ident")))
        else:
            tokens.append(("sym", m.group("sym")))
        pos = m.end()
    tokens.append(("end", None))
    return tokens


class _Parser:
    def __init__(self, tokens, source):
        self.tokens = tokens
        self.source = source
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_sym(self, sym):
        kind, val = self.next()
        if kind != "sym" or val != sym:
            raise ExpressionError(f"expected {sym!r} in {self.source!r}")

    def parse(self):
        node = self.expr()
        if self.peek()[0] != "end":
            raise ExpressionError(f"trailing input in {self.source!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek() == ("sym", "+") or self.peek() == ("sym", "-"):
            _, op = self.next()
            rhs = self.term()
            node = ("add" if op == "+" else "sub", node, rhs)
        return node

    def term(self):
        node = self.factor()
        while self.peek() == ("sym", "*"):
            self.next()
            node = ("mul", node, self.factor())
        return node

    def factor(self):
        if self.peek() == ("sym", "-"):
            self.next()
            return ("neg", self.factor())
        node = self.primary()
        if self.peek() == ("sym", "^"):
            self.next()
            kind, val = self.next()
            if kind != "num" or val != int(val) or val < 0:
                raise ExpressionError(f"exponent must be a nonnegative integer in {self.source!r}")
            node = ("pow", node, int(val))
        return node

    def primary(self):
        kind, val = self.next()
        if kind == "num":
            return ("const", val)
        if kind == "ident":
            return self._ident(val)
        if kind == "sym" and val == "(":
            node = self.expr()
            self.expect_sym(")")
            return node
        raise ExpressionError(f"unexpected token in {self.source!r}")

    def _ident(self, name):
        if name == "sin_t":
            return ("tsin",)
        if name == "cos_t":
            return ("tcos",)
        m = _IDENT_COORD.match(name)
        if m:
            return ("coord", int(m.group(1)))
        m = _IDENT_XTRIG.match(name)
        if m:
            return ("xsin" if m.group(1) == "sin" else "xcos", int(m.group(2)))
        raise ExpressionError(f"unknown identifier {name!r} in {self.source!r}")


def parse_expression(source):
    """Parse a coefficient expression string into an AST."""
    if not isinstance(source, str) or not source.strip():
        raise ExpressionError("expression must be a nonempty string")
    return _Parser(_tokenize(source), source).parse()


def validate_expression(node, dim, has_periods):
    """Check coordinate indices against `dim` and trig-in-x against periods."""
    kind = node[0]
    if kind in ("coord", "xsin", "xcos"):
        axis = node[1]
        if axis > dim:
            raise ExpressionError(f"coordinate index x{axis} exceeds dimension {dim}")
        if kind != "coord" and not has_periods:
            raise ExpressionError(
                "sin_x*/cos_x* atoms require a periodic cell with declared periods"
            )
    elif kind in ("add", "sub", "mul"):
        validate_expression(node[1], dim, has_periods)
        validate_expression(node[2], dim, has_periods)
    elif kind in ("neg",):
        validate_expression(node[1], dim, has_periods)
    elif kind == "pow":
        validate_expression(node[1], dim, has_periods)


def reduce_phase(t, period):
    """Exact phase t/period mod 1 in [0, 1): fmod is exact in IEEE arithmetic."""
    r = math.fmod(t, period)
    if r < 0.0:
        r += period
    return r / period


def evaluate(node, tau, x, periods=None):
    """Evaluate an AST.

    tau: reduced time phase in [0, 1), scalar or array.
    x: coordinates, array of shape (..., dim).
    periods: per-axis cell periods; required when the AST contains
        sin_x*/cos_x* atoms.

    Returns a value broadcast over tau and x[..., 0] shapes.
    """
    kind = node[0]
    if kind == "const":
        return node[1]
    if kind == "coord":
        return x[..., node[1] - 1]
    if kind == "tsin":
        return np.sin(2.0 * np.pi * np.asarray(tau))
    if kind == "tcos":
        return np.cos(2.0 * np.pi * np.asarray(tau))
    if kind in ("xsin", "xcos"):
        axis = node[1]
        p = periods[axis - 1]
        phase = np.mod(np.fmod(x[..., axis - 1], p) / p, 1.0)
        fn = np.sin if kind == "xsin" else np.cos
        return fn(2.0 * np.pi * phase)
    if kind == "add":
        return evaluate(node[1], tau, x, periods) + evaluate(node[2], tau, x, periods)
    if kind == "sub":
        return evaluate(node[1], tau, x, periods) - evaluate(node[2], tau, x, periods)
    if kind == "mul":
        return evaluate(node[1], tau, x, periods) * evaluate(node[2], tau, x, periods)
    if kind == "neg":
        return -evaluate(node[1], tau, x, periods)
    if kind == "pow":
        base = evaluate(node[1], tau, x, periods)
        return np.power(base, node[2])
    raise ExpressionError(f"corrupt AST node {node!r}")


def to_string(node):
    """Canonical string form (parenthesized; parses back to the same AST)."""
    kind = node[0]
    if kind == "const":
        return repr(node[1])
    if kind == "coord":
        return f"x{node[1]}"
    if kind == "tsin":
        return "sin_t"
    if kind == "tcos":
        return "cos_t"
    if kind == "xsin":
        return f"sin_x{node[1]}"
    if kind == "xcos":
        return f"cos_x{node[1]}"
    if kind == "add":
        return f"({to_string(node[1])} + {to_string(node[2])})"
    if kind == "sub":
        return f"({to_string(node[1])} - {to_string(node[2])})"
    if kind == "mul":
        return f"({to_string(node[1])} * {to_string(node[2])})"
    if kind == "neg":
        return f"(-{to_string(node[1])})"
    if kind == "pow":
        return f"{to_string(node[1])}^{node[2]}"
    raise ExpressionError(f"corrupt AST node {node!r}")
