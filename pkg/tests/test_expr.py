import math
import warnings

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from levelmeasure.expr import (
    ExpressionDomainError,
    ExpressionSyntaxError,
    SubgradientWarning,
    eval_with_gradient,
    parse,
)


def test_paraboloid_values():
    e = parse("x^2+y^2-1", 2)
    v, g = eval_with_gradient(e, (1.0, 0.0))
    assert v == 0.0 and list(g) == [2.0, 0.0]
    v, g = eval_with_gradient(e, (2.0, 0.0))
    assert v == 3.0 and list(g) == [4.0, 0.0]


def test_identity_and_sin():
    assert eval_with_gradient(parse("x", 1), [3.0])[0] == 3.0
    v, g = eval_with_gradient(parse("sin(x)", 1), [0.0])
    assert v == 0.0 and g[0] == 1.0


def test_syntax_error_offset():
    with pytest.raises(ExpressionSyntaxError) as ei:
        parse("x^2+", 1)
    assert ei.value.offset == 4


@pytest.mark.parametrize(
    "text, dim",
    [("", 1), ("foo(x)", 1), ("x +* y", 2), ("(x", 1), ("x^y", 2), ("z", 2), ("x4", 3), ("2 3", 1)],
)
def test_rejects(text, dim):
    with pytest.raises((ExpressionSyntaxError, ValueError)):
        parse(text, dim)


def test_precedence():
    e = parse("-x^2 + 2*3^2/6", 1)
    # unary minus binds looser than ^
    assert e.value([[3.0]])[0] == pytest.approx(-9 + 3)
    # one constant exponent per factor; chains need parentheses
    with pytest.raises(ExpressionSyntaxError):
        parse("2^3^2", 1)
    assert parse("(2^3)^2", 1).value([[0.0]])[0] == 64.0


def test_named_and_indexed_variables():
    a = parse("x*y + z", 3).value([[2.0, 3.0, 4.0]])[0]
    b = parse("x1*x2 + x3", 3).value([[2.0, 3.0, 4.0]])[0]
    assert a == b == 10.0
    assert parse("x5 - x1", 5).value([[1, 0, 0, 0, 7]])[0] == 6.0


def test_domain_error_names_node():
    e = parse("log(x - 2) + 1", 1)
    with pytest.raises(ExpressionDomainError) as ei:
        eval_with_gradient(e, [1.0])
    assert "log" in str(ei.value)
    with pytest.raises(ExpressionDomainError):
        e.evaluate(np.array([[3.0], [0.0]]))


def test_abs_subgradient_flagged():
    e = parse("abs(x)", 1)
    with pytest.warns(SubgradientWarning):
        v, g = eval_with_gradient(e, [0.0])
    assert v == 0.0 and g[0] == 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert eval_with_gradient(e, [-2.0])[1][0] == -1.0


def test_batch_matches_pointwise():
    e = parse("exp(x)*cos(y) - sqrt(x^2 + y^2 + 1)", 2)
    pts = np.random.default_rng(0).uniform(-2, 2, (50, 2))
    v, g = e.evaluate(pts)
    for p, vi, gi in zip(pts, v, g):
        pv, pg = eval_with_gradient(e, p)
        assert pv == vi and np.array_equal(pg, gi)


# random expressions in two variables, bounded to keep finite differences meaningful
leaves = st.sampled_from(["x", "y", "1", "2.5", "0.5"])


def _combine(children):
    unary = st.tuples(st.sampled_from(["sin({})", "cos({})", "exp(sin({}))", "log({}^2+1)", "sqrt({}^2+1)", "-({})", "({})^2"]), children).map(
        lambda t: t[0].format(t[1])
    )
    binary = st.tuples(children, st.sampled_from(["+", "-", "*"]), children).map(lambda t: f"({t[0]}){t[1]}({t[2]})")
    quotient = children.map(lambda c: f"({c})/(({c})^2+1)")
    return unary | binary | quotient


expressions = st.recursive(leaves, _combine, max_leaves=12)


@settings(max_examples=150, deadline=None)
@given(expressions)
def test_round_trip(text):
    e = parse(text, 2)
    again = parse(str(e), 2)
    assert again.root == e.root
    assert str(again) == str(e)


@settings(max_examples=200, deadline=None)
@given(expressions, st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
def test_gradient_vs_finite_differences(text, x, y):
    e = parse(text, 2)
    p = np.array([[x, y]])
    v, g = e.evaluate(p)
    assume(abs(v[0]) < 1e3)
    h = 1e-6
    for i in range(2):
        d = np.zeros((1, 2))
        d[0, i] = h
        fd = (e.value(p + d)[0] - e.value(p - d)[0]) / (2 * h)
        assert abs(fd - g[0, i]) <= 1e-5 * max(abs(g[0, i]), abs(v[0]), 1.0)


def test_expression_is_immutable():
    e = parse("x+1", 1)
    with pytest.raises(Exception):
        e.dim = 2
    assert math.isclose(e.value([[1.0]])[0], 2.0)
