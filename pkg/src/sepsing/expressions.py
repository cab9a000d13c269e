"""Closed-form analytic expressions with exact symbolic derivatives.

Scenario files declare maps and target functions as small expressions in one
or more complex variables (``z`` for boundary maps, ``w1..wn`` for functions
on the curve).  The grammar covers exactly what the scenario format promises:
complex literals, variables, + - * /, integer powers (`**` or `^`),
``exp(...)`` and the ``mobius(a, b, c, d[, arg])`` shorthand for
(a*arg + b)/(c*arg + d).  Evaluation is vectorised over numpy arrays and
differentiation is done on the syntax tree, so derivatives are exact.
"""

from __future__ import annotations

import re

import numpy as np

from .errors import ScenarioFormatError


class Expr:
    """Base node.  Subclasses implement eval / diff / subst."""

    def eval(self, **vars):
        raise NotImplementedError

    def diff(self, var="z"):
        raise NotImplementedError

    def subst(self, var, replacement):
        raise NotImplementedError

    def variables(self):
        return set()

    # operator sugar so maps can be assembled programmatically
    def __add__(self, other):
        return Add(self, _as_expr(other))

    def __radd__(self, other):
        return Add(_as_expr(other), self)

    def __sub__(self, other):
        return Sub(self, _as_expr(other))

    def __rsub__(self, other):
        return Sub(_as_expr(other), self)

    def __mul__(self, other):
        return Mul(self, _as_expr(other))

    def __rmul__(self, other):
        return Mul(_as_expr(other), self)

    def __truediv__(self, other):
        return Div(self, _as_expr(other))

    def __rtruediv__(self, other):
        return Div(_as_expr(other), self)

    def __pow__(self, n):
        return Pow(self, int(n))

    def __neg__(self):
        return Neg(self)


def _as_expr(x):
    if isinstance(x, Expr):
        return x
    return Const(complex(x))


class Const(Expr):
    def __init__(self, value):
        self.value = complex(value)

    def eval(self, **vars):
        return self.value

    def diff(self, var="z"):
        return Const(0.0)

    def subst(self, var, replacement):
        return self

    def __repr__(self):
        v = self.value
        if v.imag == 0:
            return repr(v.real)
        return f"({v.real!r}{v.imag:+r}j)".replace("+r", "+")  # pragma: no cover


class Var(Expr):
    def __init__(self, name="z"):
        self.name = name

    def eval(self, **vars):
        try:
            return vars[self.name]
        except KeyError:
            raise ScenarioFormatError(f"unbound variable {self.name!r}")

    def diff(self, var="z"):
        return Const(1.0) if var == self.name else Const(0.0)

    def subst(self, var, replacement):
        return replacement if var == self.name else self

    def variables(self):
        return {self.name}

    def __repr__(self):
        return self.name


class _Binary(Expr):
    op = "?"

    def __init__(self, a, b):
        self.a = a
        self.b = b

    def subst(self, var, replacement):
        return type(self)(self.a.subst(var, replacement), self.b.subst(var, replacement))

    def variables(self):
        return self.a.variables() | self.b.variables()

    def __repr__(self):
        return f"({self.a!r} {self.op} {self.b!r})"


class Add(_Binary):
    op = "+"

    def eval(self, **vars):
        return self.a.eval(**vars) + self.b.eval(**vars)

    def diff(self, var="z"):
        return Add(self.a.diff(var), self.b.diff(var))


class Sub(_Binary):
    op = "-"

    def eval(self, **vars):
        return self.a.eval(**vars) - self.b.eval(**vars)

    def diff(self, var="z"):
        return Sub(self.a.diff(var), self.b.diff(var))


class Mul(_Binary):
    op = "*"

    def eval(self, **vars):
        return self.a.eval(**vars) * self.b.eval(**vars)

    def diff(self, var="z"):
        return Add(Mul(self.a.diff(var), self.b), Mul(self.a, self.b.diff(var)))


class Div(_Binary):
    op = "/"

    def eval(self, **vars):
        return self.a.eval(**vars) / self.b.eval(**vars)

    def diff(self, var="z"):
        num = Sub(Mul(self.a.diff(var), self.b), Mul(self.a, self.b.diff(var)))
        return Div(num, Pow(self.b, 2))


class Pow(Expr):
    def __init__(self, base, n):
        if not isinstance(n, int):
            raise ScenarioFormatError("only integer powers are supported")
        self.base = base
        self.n = n

    def eval(self, **vars):
        return self.base.eval(**vars) ** self.n

    def diff(self, var="z"):
        if self.n == 0:
            return Const(0.0)
        return Mul(Mul(Const(self.n), Pow(self.base, self.n - 1)), self.base.diff(var))

    def subst(self, var, replacement):
        return Pow(self.base.subst(var, replacement), self.n)

    def variables(self):
        return self.base.variables()

    def __repr__(self):
        return f"({self.base!r}**{self.n})"


class Exp(Expr):
    def __init__(self, arg):
        self.arg = arg

    def eval(self, **vars):
        return np.exp(self.arg.eval(**vars))

    def diff(self, var="z"):
        return Mul(self, self.arg.diff(var))

    def subst(self, var, replacement):
        return Exp(self.arg.subst(var, replacement))

    def variables(self):
        return self.arg.variables()

    def __repr__(self):
        return f"exp({self.arg!r})"


class Neg(Expr):
    def __init__(self, arg):
        self.arg = arg

    def eval(self, **vars):
        return -self.arg.eval(**vars)

    def diff(self, var="z"):
        return Neg(self.arg.diff(var))

    def subst(self, var, replacement):
        return Neg(self.arg.subst(var, replacement))

    def variables(self):
        return self.arg.variables()

    def __repr__(self):
        return f"(-{self.arg!r})"


def mobius(a, b, c, d, arg=None):
    """(a*arg + b) / (c*arg + d) with constants a..d."""
    arg = Var("z") if arg is None else arg
    a, b, c, d = (_as_expr(v) for v in (a, b, c, d))
    return Div(Add(Mul(a, arg), b), Add(Mul(c, arg), d))


def blaschke(a, arg=None):
    """Degree-one Blaschke factor (arg - a)/(1 - conj(a)*arg)."""
    arg = Var("z") if arg is None else arg
    a = complex(a)
    return Div(Sub(arg, Const(a)), Sub(Const(1.0), Mul(Const(np.conj(a)), arg)))


_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?[jJ]?|\.\d+(?:[eE][+-]?\d+)?[jJ]?)"
    r"|(?P<name>[A-Za-z_]\w*)"
    r"|(?P<pow>\*\*|\^)"
    r"|(?P<op>[()+\-*/,]))"
)


def _tokenize(text):
    pos, out = 0, []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ScenarioFormatError(f"bad token at {text[pos:pos + 12]!r}")
        pos = m.end()
        if m.lastgroup == "num":
            s = m.group("num")
            out.append(("num", 1j * float(s[:-1]) if s[-1] in "jJ" else float(s)))
        elif m.lastgroup == "name":
            out.append(("name", m.group("name")))
        elif m.lastgroup == "pow":
            out.append(("op", "**"))
        else:
            out.append(("op", m.group("op")))
    out.append(("end", None))
    return out


class _Parser:
    def __init__(self, tokens):
        self.toks = tokens
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def next(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, op):
        kind, val = self.next()
        if kind != "op" or val != op:
            raise ScenarioFormatError(f"expected {op!r}, got {val!r}")

    def parse(self):
        e = self.expr()
        if self.peek()[0] != "end":
            raise ScenarioFormatError(f"trailing input at {self.peek()[1]!r}")
        return e

    def expr(self):
        e = self.term()
        while self.peek() == ("op", "+") or self.peek() == ("op", "-"):
            _, op = self.next()
            rhs = self.term()
            e = Add(e, rhs) if op == "+" else Sub(e, rhs)
        return e

    def term(self):
        e = self.unary()
        while self.peek() == ("op", "*") or self.peek() == ("op", "/"):
            _, op = self.next()
            rhs = self.unary()
            e = Mul(e, rhs) if op == "*" else Div(e, rhs)
        return e

    def unary(self):
        if self.peek() == ("op", "-"):
            self.next()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek() == ("op", "**"):
            self.next()
            neg = False
            if self.peek() == ("op", "-"):
                self.next()
                neg = True
            kind, val = self.next()
            if kind != "num" or isinstance(val, complex) or val != int(val):
                raise ScenarioFormatError("exponent must be an integer literal")
            n = -int(val) if neg else int(val)
            return Pow(base, n)
        return base

    def atom(self):
        kind, val = self.next()
        if kind == "num":
            return Const(val)
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "name":
            if val == "i" or val == "I":
                return Const(1j)
            if self.peek() == ("op", "("):
                self.next()
                args = [self.expr()]
                while self.peek() == ("op", ","):
                    self.next()
                    args.append(self.expr())
                self.expect(")")
                return self._call(val, args)
            return Var(val)
        raise ScenarioFormatError(f"unexpected token {val!r}")

    def _call(self, name, args):
        if name == "exp":
            if len(args) != 1:
                raise ScenarioFormatError("exp takes one argument")
            return Exp(args[0])
        if name == "mobius":
            if len(args) not in (4, 5):
                raise ScenarioFormatError("mobius takes 4 constants and an optional argument")
            arg = args[4] if len(args) == 5 else Var("z")
            return Div(Add(Mul(args[0], arg), args[1]), Add(Mul(args[2], arg), args[3]))
        raise ScenarioFormatError(f"unknown function {name!r}")


def parse_expr(text):
    """Parse an expression string into an Expr tree."""
    return _Parser(_tokenize(text)).parse()
