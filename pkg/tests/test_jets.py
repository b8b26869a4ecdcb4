import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from finslerkit import exprlang as el
from finslerkit.jets import Jet, contract, expr_jets, jet_space, trace_jet
from finslerkit.spraycore import table_jet

SP = jet_space(4, 7)


def _base(seed, N=3):
    rng = np.random.default_rng(seed)
    return rng.uniform(0.4, 0.9, (N, 2)), rng.uniform(0.5, 1.5, (N, 2))


@pytest.mark.parametrize("text", [
    "sqrt(y1^2 + y2^2) / x2",
    "exp(x1 * y1) * cos(y2) + atan(x2 * y2)",
    "(y1^4 + y2^4)^(1/4)",
    "log(1 + x1^2) * y1 * y2 / (y1^2 + 3)",
    "tan(0.3 * x1) * y1^3 - sin(x2) * y2",
])
def test_taylor_mode_matches_symbolic_table(text):
    # two independent routes to every partial derivative up to order 7
    e = el.parse(text, 2)
    x, y = _base(len(text))
    a = expr_jets([e], SP, x, y)[0]
    b = table_jet(e, 2, x, y, 7)
    scale = 1 + np.abs(b.partials()).max()
    assert np.abs(a.partials() - b.partials()).max() <= 1e-10 * scale


@given(st.floats(0.2, 3.0), st.floats(-2, 2), st.floats(-1.5, 1.5))
@settings(max_examples=50, deadline=None)
def test_power_rules_agree(c0, c1, a):
    sp = jet_space(1, 6)
    j = Jet.constant(sp, np.array([c0]))
    j.data[0, 1] = c1
    lhs = j.power(a) * j.power(-a)
    assert np.allclose(lhs.data, Jet.constant(sp, np.array([1.0])).data, atol=1e-9 * (1 + c1 ** 6))
    assert np.allclose((j.sqrt() * j.sqrt()).data, j.data, atol=1e-10 * (1 + abs(c1) ** 6))


def test_product_rule_and_grad_axis_first():
    x, y = _base(1)
    f = table_jet(el.parse("x1 * y1^2", 2), 2, x, y, 5)
    g = table_jet(el.parse("sin(y2) + x2", 2), 2, x, y, 5)
    fg = table_jet(el.parse("x1 * y1^2 * (sin(y2) + x2)", 2), 2, x, y, 5)
    assert np.allclose((f * g).data, fg.data, atol=1e-13)
    gr = fg.grad([2, 3])
    assert gr.tshape == (2,)
    assert gr.order == 4
    assert np.allclose(gr[0].value, 2 * x[:, 0] * y[:, 0] * (np.sin(y[:, 1]) + x[:, 1]))
    assert np.allclose(gr[1].value, x[:, 0] * y[:, 0] ** 2 * np.cos(y[:, 1]))


def test_contract_and_trace():
    x, y = _base(2)
    rows = [table_jet(el.parse(t, 2), 2, x, y, 3) for t in ("y1", "x1*y2", "y2^2", "x2")]
    M = Jet(SP, np.stack([r.data for r in rows], 1).reshape(3, 2, 2, -1), 3)
    MM = contract("ab,bc->ac", M, M)
    assert np.allclose(MM.value, np.einsum("Nab,Nbc->Nac", M.value, M.value))
    tr = trace_jet("aa->", M)
    assert np.allclose(tr.value, y[:, 0] + x[:, 1])


def test_reciprocal_of_zero_raises():
    z = Jet.constant(SP, np.zeros(2))
    with pytest.raises(el.DomainError):
        z.reciprocal()


def test_order_exhaustion():
    j = Jet.constant(SP, np.ones(1), 0)
    with pytest.raises(ValueError):
        j.d(0)
