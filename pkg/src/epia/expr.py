"""Arithmetic expression parser for user-defined coefficient functions.

Grammar (whitespace insensitive)::

    expr    :=  term  (("+" | "-") term)*
    term    :=  factor (("*" | "/") factor)*
    factor  :=  "-" factor | power
    power   :=  atom ("^" factor)?          # right associative
    atom    :=  NUMBER | NAME | NAME "(" expr ("," expr)* ")" | "(" expr ")"

Known functions: sin cos exp ln sqrt abs min max.  Known constants: pi, e.
Variables are declared up front (``x1..xd``, ``u1..uL`` by convention) and
evaluation is vectorized over numpy arrays.
"""

from __future__ import annotations

import math
import re

import numpy as np

__all__ = ["ExprError", "ExprDomainError", "parse_coefficient_expr", "CoefficientExpr"]

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)

_FUNCTIONS = {
    "sin": (1, np.sin),
    "cos": (1, np.cos),
    "exp": (1, np.exp),
    "ln": (1, None),  # domain-checked below
    "sqrt": (1, None),
    "abs": (1, np.abs),
    "min": (2, np.minimum),
    "max": (2, np.maximum),
}

_CONSTANTS = {"pi": math.pi, "e": math.e}


class ExprError(ValueError):
    """Parse failure; carries the character position of the offending token."""

    def __init__(self, message, position):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class ExprDomainError(ArithmeticError):
    """Evaluation hit an invalid input (e.g. ln of a non-positive value)."""

    def __init__(self, message, point):
        super().__init__(f"{message} at point {point}")
        self.point = point


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            raise ExprError(f"unexpected character {stripped[0]!r}", pos)
        if m.group("num") is not None:
            tokens.append(("num", float(m.group(0)), pos))
        elif m.group("name") is not None:
            tokens.append(("name", m.group("name"), pos))
        else:
            tokens.append(("op", m.group("op"), pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, tokens, variables):
        self.tokens = tokens
        self.variables = variables
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, value, pos = self.advance()
        if kind != "op" or value != op:
            raise ExprError(f"expected {op!r}, found {value!r}", pos)

    def parse(self):
        node = self.expr()
        kind, value, pos = self.peek()
        if kind != "end":
            raise ExprError(f"unexpected trailing token {value!r}", pos)
        return node

    def expr(self):
        node = self.term()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "+-":
                self.advance()
                rhs = self.term()
                node = ("add" if value == "+" else "sub", node, rhs)
            else:
                return node

    def term(self):
        node = self.factor()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "*/":
                self.advance()
                rhs = self.factor()
                node = ("mul" if value == "*" else "div", node, rhs)
            else:
                return node

    def factor(self):
        kind, value, _ = self.peek()
        if kind == "op" and value == "-":
            self.advance()
            return ("neg", self.factor())
        return self.power()

    def power(self):
        base = self.atom()
        kind, value, _ = self.peek()
        if kind == "op" and value == "^":
            self.advance()
            return ("pow", base, self.factor())
        return base

    def atom(self):
        kind, value, pos = self.advance()
        if kind == "num":
            return ("const", value)
        if kind == "name":
            nkind, nvalue, _ = self.peek()
            if nkind == "op" and nvalue == "(":
                if value not in _FUNCTIONS:
                    raise ExprError(f"unknown function {value!r}", pos)
                arity, _ = _FUNCTIONS[value]
                self.advance()
                args = [self.expr()]
                while True:
                    k2, v2, p2 = self.peek()
                    if k2 == "op" and v2 == ",":
                        self.advance()
                        args.append(self.expr())
                    else:
                        break
                self.expect_op(")")
                if len(args) != arity:
                    raise ExprError(
                        f"{value} takes {arity} argument(s), got {len(args)}", pos
                    )
                return ("call", value, args)
            if value in _CONSTANTS:
                return ("const", _CONSTANTS[value])
            if value not in self.variables:
                raise ExprError(f"unknown variable {value!r}", pos)
            return ("var", value)
        if kind == "op" and value == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        raise ExprError(f"unexpected token {value!r}", value and pos or pos)


def _first_bad_point(mask, env):
    """Describe the first broadcast index where ``mask`` is True."""
    idx = np.unravel_index(int(np.argmax(mask)), mask.shape)
    point = {}
    for name, val in env.items():
        arr = np.broadcast_to(np.asarray(val, dtype=float), mask.shape)
        point[name] = float(arr[idx])
    return point


def _eval(node, env):
    op = node[0]
    if op == "const":
        return node[1]
    if op == "var":
        return env[node[1]]
    if op == "neg":
        return -_eval(node[1], env)
    if op in ("add", "sub", "mul", "div", "pow"):
        a = _eval(node[1], env)
        b = _eval(node[2], env)
        if op == "add":
            return a + b
        if op == "sub":
            return a - b
        if op == "mul":
            return a * b
        if op == "div":
            bad = np.asarray(b == 0)
            if bad.any():
                raise ExprDomainError("division by zero", _first_bad_point(bad, env))
            return a / b
        # pow: allow negative bases only for integer exponents
        with np.errstate(invalid="ignore"):
            out = np.asarray(a, dtype=float) ** b
        bad = np.asarray(np.isnan(out) & ~np.isnan(np.asarray(a * np.ones_like(out))))
        if bad.any():
            raise ExprDomainError("invalid power", _first_bad_point(bad, env))
        return out if out.ndim else float(out)
    if op == "call":
        name = node[1]
        args = [_eval(a, env) for a in node[2]]
        if name == "ln":
            bad = np.asarray(np.asarray(args[0]) <= 0)
            if bad.any():
                raise ExprDomainError(
                    "ln of non-positive value", _first_bad_point(bad, env)
                )
            return np.log(args[0])
        if name == "sqrt":
            bad = np.asarray(np.asarray(args[0]) < 0)
            if bad.any():
                raise ExprDomainError(
                    "sqrt of negative value", _first_bad_point(bad, env)
                )
            return np.sqrt(args[0])
        return _FUNCTIONS[name][1](*args)
    raise AssertionError(f"unhandled node {op}")


class CoefficientExpr:
    """Compiled coefficient expression; immutable and shareable across threads."""

    def __init__(self, text, variables, ast):
        self.text = text
        self.variables = tuple(variables)
        self._ast = ast

    def __call__(self, *args, **kwargs):
        if args:
            if len(args) != len(self.variables):
                raise TypeError(
                    f"expected {len(self.variables)} arguments {self.variables}, "
                    f"got {len(args)}"
                )
            env = dict(zip(self.variables, args))
        else:
            env = {name: kwargs[name] for name in self.variables}
        return _eval(self._ast, env)

    def __repr__(self):
        return f"CoefficientExpr({self.text!r}, vars={self.variables})"


def parse_coefficient_expr(text, variables):
    """Parse ``text`` into an evaluator over the ordered variable names."""
    tokens = _tokenize(text)
    ast = _Parser(tokens, set(variables)).parse()
    return CoefficientExpr(text, variables, ast)
