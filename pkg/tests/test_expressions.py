import numpy as np
import pytest

from sepsing.errors import ScenarioFormatError
from sepsing.expressions import Var, blaschke, mobius, parse_expr


def fd(expr, z, h=1e-6):
    return (expr.eval(z=z + h) - expr.eval(z=z - h)) / (2 * h)


@pytest.mark.parametrize("text,point,value", [
    ("z**2 + 1", 2.0, 5.0),
    ("(z + 0.5)/1.2", 0.7, 1.0),
    ("exp(z)", 1.0j, np.exp(1.0j)),
    ("mobius(1, 0.5, 0, 1.2)", 0.7, 1.0),
    ("mobius(1, 0.5, 0, 1.2, z**2)", 2.0, 4.5 / 1.2),
    ("-z + 2*z", 3.0, 3.0),
    ("1/(z - 3)", 0.4, 1 / (0.4 - 3)),
    ("z**-2", 2.0, 0.25),
])
def test_eval(text, point, value):
    assert parse_expr(text).eval(z=point) == pytest.approx(value)


@pytest.mark.parametrize("text", [
    "z**3 - 2*z", "exp(2*z)/(1 + z**2)", "mobius(1,2,3,4)", "(z - 0.3)**4",
])
def test_derivative_matches_fd(text, rng):
    expr = parse_expr(text)
    d = expr.diff("z")
    pts = 0.3 * (rng.standard_normal(5) + 1j * rng.standard_normal(5))
    assert np.abs(d.eval(z=pts) - fd(expr, pts)).max() < 1e-7


def test_vectorised_eval():
    expr = parse_expr("z**2 - z")
    z = np.array([1.0, 2.0, 1j])
    assert np.allclose(expr.eval(z=z), z**2 - z)


def test_compose_by_substitution():
    inner = parse_expr("z**2")
    outer = parse_expr("exp(z)")
    comp = outer.subst("z", inner)
    assert comp.eval(z=2.0) == pytest.approx(np.exp(4.0))
    # chain rule
    assert comp.diff("z").eval(z=0.5) == pytest.approx(2 * 0.5 * np.exp(0.25))


def test_blaschke_unimodular_on_circle():
    b = blaschke(0.3 + 0.1j)
    th = np.linspace(0, 2 * np.pi, 64)
    assert np.abs(np.abs(b.eval(z=np.exp(1j * th))) - 1).max() < 1e-14


def test_mobius_helper_matches_formula():
    m = mobius(2, 1, 1, 3, Var("z"))
    z = 0.7 + 0.2j
    assert m.eval(z=z) == pytest.approx((2 * z + 1) / (z + 3))


@pytest.mark.parametrize("bad", ["z +", "foo(z)", "z ** z", "(z", "z @ 2"])
def test_parse_errors(bad):
    with pytest.raises(ScenarioFormatError):
        parse_expr(bad)


def test_unbound_variable():
    with pytest.raises(ScenarioFormatError):
        parse_expr("w1 * 2").eval(z=1.0)
