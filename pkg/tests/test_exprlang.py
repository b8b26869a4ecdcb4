import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from finslerkit import exprlang as el

VARS = ["x1", "x2", "y1", "y2"]


def _expr_text(depth):
    leaf = st.one_of(st.sampled_from(VARS),
                     st.integers(1, 9).map(str),
                     st.sampled_from(["0.5", "2.25", "1e-1"]))
    if depth == 0:
        return leaf

    sub = _expr_text(depth - 1)
    return st.one_of(
        leaf,
        st.tuples(sub, st.sampled_from("+-*"), sub).map(lambda t: f"({t[0]} {t[1]} {t[2]})"),
        st.tuples(sub, st.integers(1, 3)).map(lambda t: f"{t[0]}^{t[1]}"),
        st.tuples(st.sampled_from(["sin", "cos", "exp", "atan"]), sub).map(lambda t: f"{t[0]}({t[1]})"),
        sub.map(lambda s: f"-{s}"),
    )


exprs = _expr_text(3)


def _env(rng):
    return {v: float(rng.uniform(0.3, 1.2)) for v in VARS}


@given(exprs)
@settings(max_examples=200, deadline=None)
def test_print_parse_round_trip(text):
    e = el.parse(text, 2)
    assert el.parse(el.to_string(e), 2) is e


@given(exprs, st.sampled_from(VARS))
@settings(max_examples=100, deadline=None)
def test_derivative_matches_central_difference(text, v):
    e = el.parse(text, 2)
    d = el.differentiate(e, v)
    env = _env(np.random.default_rng(len(text)))
    h = 1e-5
    try:
        plus = el.evaluate(e, {**env, v: env[v] + h})
        minus = el.evaluate(e, {**env, v: env[v] - h})
        exact = el.evaluate(d, env)
    except el.DomainError:
        return
    fd = (plus - minus) / (2 * h)
    assert abs(fd - exact) <= 1e-5 * (1 + abs(exact) + abs(plus))


@given(exprs, st.sampled_from(VARS), st.sampled_from(VARS))
@settings(max_examples=150, deadline=None)
def test_mixed_partials_commute_exactly(text, u, v):
    e = el.parse(text, 2)
    uv = el.differentiate(el.differentiate(e, u), v)
    vu = el.differentiate(el.differentiate(e, v), u)
    assert uv is vu
    # and numerically: central difference in v of the u-derivative
    du = el.differentiate(e, u)
    env = _env(np.random.default_rng(len(text) + 7))
    h = 1e-5
    try:
        fd = (el.evaluate(du, {**env, v: env[v] + h}) - el.evaluate(du, {**env, v: env[v] - h})) / (2 * h)
        exact = el.evaluate(uv, env)
    except el.DomainError:
        return
    assert abs(fd - exact) <= 1e-5 * (1 + abs(exact) + abs(fd))


@pytest.mark.parametrize("fname", ["sqrt", "exp", "log", "sin", "cos", "tan", "atan"])
@given(st.floats(0.2, 1.2), st.floats(0.2, 1.2))
@settings(max_examples=40, deadline=None)
def test_each_function_derivative_richardson(fname, a, b):
    e = el.parse(f"{fname}(x1*y1 + y1^2) * x1", 1)
    d = el.differentiate(e, "y1")
    env = {"x1": a, "y1": b}

    def central(h):
        return (el.evaluate(e, {**env, "y1": b + h}) - el.evaluate(e, {**env, "y1": b - h})) / (2 * h)

    h = 1e-5
    fd = (4 * central(h / 2) - central(h)) / 3
    exact = el.evaluate(d, env)
    assert abs(fd - exact) <= 1e-6 * max(1.0, abs(exact))


def test_precedence_and_associativity():
    env = {"x1": 2.0, "x2": 3.0, "y1": 0.5, "y2": 4.0}
    cases = {
        "x1 + x2 * y2": 2 + 3 * 4,
        "x1 - x2 - y2": 2 - 3 - 4,
        "x2 / x1 / y2": 3 / 2 / 4,
        "x1^x2^0.5": 2 ** (3 ** 0.5),
        "-x1^2": -4.0,
        "(x1 + x2) * y1": 2.5,
        "2*pi": 2 * math.pi,
        "sqrt(y2) + log(x1) + tan(y1)": 2 + math.log(2) + math.tan(0.5),
    }
    for text, want in cases.items():
        assert el.evaluate(el.parse(text, 2), env) == pytest.approx(want, rel=1e-15)


@pytest.mark.parametrize("text,fragment", [
    ("x1 +", "end of input"),
    ("x3", "out of range"),
    ("foo(x1)", "unknown function"),
    ("x1 $ y1", "unexpected character"),
    ("(x1 + y1", "expected ')'"),
    ("sqrt", "needs an argument"),
    ("z1", "unknown identifier"),
])
def test_parse_errors_name_the_position(text, fragment):
    with pytest.raises(el.ParseError) as info:
        el.parse(text, 2)
    assert fragment in str(info.value)
    assert "column" in str(info.value)


def test_parse_error_reports_line_and_column():
    with pytest.raises(el.ParseError) as info:
        el.parse("x1 +\n  * y1", 2)
    assert info.value.line == 2 and info.value.col == 3


@pytest.mark.parametrize("text,env", [
    ("sqrt(x1 - 2)", {"x1": 1.0}),
    ("log(x1)", {"x1": 0.0}),
    ("1 / (x1 - 1)", {"x1": 1.0}),
    ("x1^0.5", {"x1": -1.0}),
])
def test_domain_errors(text, env):
    with pytest.raises(el.DomainError):
        el.evaluate(el.parse(text, 1), env)


def test_domain_error_names_subexpression():
    with pytest.raises(el.DomainError) as info:
        el.evaluate(el.parse("y1 + sqrt(x1 - 2)", 1), {"x1": 1.0, "y1": 1.0})
    assert "sqrt(x1 - 2)" in str(info.value)


def test_hash_consing_gives_identity():
    a = el.parse("sin(x1) * y2 + 1", 2)
    b = el.parse("sin(x1) * y2 + 1", 2)
    assert a is b
    assert el.differentiate(a, "y2") is el.differentiate(b, "y2")


def test_partial_table_entries_and_mixed_partials():
    e = el.parse("sin(x1) * y1^3 + x2 * y2^2", 2)
    tab = el.partial_table(e, 2, 3)
    assert len(tab) == len(el.multi_indices(4, 3))
    env = {"x1": 0.3, "x2": 0.7, "y1": 1.1, "y2": -0.4}
    # d^3/dx1 dy1^2 = cos(x1) * 6 y1
    assert el.evaluate(tab[(1, 0, 2, 0)], env) == pytest.approx(math.cos(0.3) * 6 * 1.1)
    assert el.evaluate(tab[(0, 1, 0, 2)], env) == pytest.approx(2.0)
    assert el.evaluate(tab[(0, 0, 0, 3)], env) == 0.0


def test_node_cap():
    e = el.parse("sqrt(y1^2 + y2^2 + sin(x1)*y1)", 2)
    with pytest.raises(el.NodeCapError):
        el.partial_table(e, 2, 6, node_cap=200)


def test_batched_evaluation_matches_scalar():
    e = el.parse("sqrt(y1^2 + y2^2) / x2", 2)
    rng = np.random.default_rng(0)
    x = rng.uniform(0.5, 1.0, (7, 2))
    y = rng.uniform(-1, 1, (7, 2))
    batch = el.evaluate(e, (x, y))
    for i in range(7):
        assert batch[i] == el.evaluate(e, (x[i], y[i]))


def test_evaluate_many_shares_walk():
    e = el.parse("x1 * y1", 1)
    vals = el.evaluate_many([e, el.differentiate(e, "y1")], {"x1": 2.0, "y1": 3.0})
    assert [float(v) for v in vals] == [6.0, 2.0]
