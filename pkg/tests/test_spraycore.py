import numpy as np
import pytest

from finslerkit import exprlang as el, manifold
from finslerkit.jets import Jet, jet_space
from finslerkit.manifold import load_manifest
from finslerkit.spraycore import (ORDER, OrderCapError, PointFrame, SingularMetricError,
                                  energy_expr, fd_extended_partials, horizontal_partial,
                                  inverse_jet, metric_at, spray_coefficients, spray_partials,
                                  table_jet)

from conftest import gallery, manifest


def _pts(name, count=20, seed=5):
    spec = gallery(name)
    return (spec,) + manifold.sample_arrays(spec, count, seed)


def _conformal_spray(grad_sigma, y):
    """Oracle for g = exp(2 sigma) delta: G = (d sigma . y) y - |y|^2 d sigma / 2."""
    dot = np.einsum("Ni,Ni->N", grad_sigma, y)
    return dot[:, None] * y - 0.5 * np.einsum("Ni,Ni->N", y, y)[:, None] * grad_sigma


def test_euclidean_metric_and_spray():
    spec, x, y = _pts("euclidean")
    g, ginv = metric_at(spec, x, y)
    assert np.allclose(g.data, np.eye(2), atol=1e-14)
    assert np.allclose(ginv.data, np.eye(2), atol=1e-14)
    assert np.abs(spray_coefficients(spec, x, y).data).max() == 0.0


@pytest.mark.parametrize("name", ["euclidean", "minkowski-quartic"])
def test_x_independent_spray_vanishes(name):
    spec, x, y = _pts(name)
    fr = PointFrame(spec, x, y)
    assert np.abs(fr.G.data).max() < 1e-13
    assert np.abs(fr.GJ.value).max() < 1e-13


def test_half_plane_spray_matches_christoffel_oracle():
    spec, x, y = _pts("poincare-half-plane")
    grad_sigma = np.stack([np.zeros(len(x)), -1.0 / x[:, 1]], 1)
    G = spray_coefficients(spec, x, y).data
    assert np.allclose(G, _conformal_spray(grad_sigma, y), atol=1e-13)


def test_sphere_spray_matches_christoffel_oracle():
    spec, x, y = _pts("sphere-stereographic")
    q = 1 + np.einsum("Ni,Ni->N", x, x)
    grad_sigma = -2 * x / q[:, None]
    G = spray_coefficients(spec, x, y).data
    assert np.allclose(G, _conformal_spray(grad_sigma, y), atol=1e-13)


def test_funk_spray_is_half_F_times_y():
    spec, x, y = _pts("funk-disk")
    fr = PointFrame(spec, x, y)
    F = el.evaluate(spec.F, (x, y))
    assert np.allclose(fr.G.value, 0.5 * F[:, None] * y, atol=1e-12)


def test_spray_is_two_homogeneous_and_connection_symmetric():
    spec, x, y = _pts("randers-3d", 10)
    G1 = PointFrame(spec, x, y, e_order=3).G.value
    G2 = PointFrame(spec, x, 1.7 * y, e_order=3).G.value
    assert np.allclose(G2, 1.7 ** 2 * G1, atol=1e-13)
    GC = PointFrame(spec, x, y).GC.value
    assert np.allclose(GC, np.swapaxes(GC, 2, 3), atol=1e-13)


def test_fd_extension_agrees_with_symbolic_table():
    spec, x, y = _pts("randers-variable", 6)
    E = energy_expr(spec.F)
    fd = fd_extended_partials(E, 2, x, y)
    exact = table_jet(E, 2, x, y, ORDER).partials()
    c5 = jet_space(4, ORDER).size(5)
    assert np.allclose(fd[:, :c5], exact[:, :c5], rtol=1e-13, atol=1e-13)
    scale = np.abs(exact[:, c5:]).max()
    assert np.abs(fd[:, c5:] - exact[:, c5:]).max() <= 1e-4 * scale


def test_forced_fd_marks_frame_and_keeps_low_orders():
    spec, x, y = _pts("randers-variable", 6)
    a = PointFrame(spec, x, y)
    b = PointFrame(spec, x, y, fd_fallback=True)
    assert np.allclose(a.G.value, b.G.value, atol=1e-14)
    assert b.fd_used and not a.fd_used


def test_node_cap_triggers_fallback():
    spec, x, y = _pts("randers-variable", 4)
    fr = PointFrame(spec, x, y, node_cap=3000)
    fr.B
    assert fr.fd_used


def test_spray_partials_order_cap():
    spec, x, y = _pts("poincare-half-plane", 3)
    with pytest.raises(OrderCapError):
        spray_partials(spec, x, y, 2, 4)
    t = spray_partials(spec, x, y, 0, 3)
    assert np.abs(t.data).max() < 1e-12


def test_fd_spray_partials_match_symbolic_ones():
    spec, x, y = _pts("randers-variable", 4)
    # order 5 both ways: one derivative by differences of the order-4 tensor
    from finslerkit.spraycore import _fd_spray_partials
    sym = spray_partials(spec, x, y, 2, 3).data
    fd = _fd_spray_partials(spec, x, y, 2, 3)
    assert fd.data.shape == sym.shape
    assert np.abs(fd.data - sym).max() <= 1e-6 * (1 + np.abs(sym).max())
    sym = spray_partials(spec, x, y, 3, 2).data
    fd = _fd_spray_partials(spec, x, y, 3, 2)
    assert np.abs(fd.data - sym).max() <= 1e-6 * (1 + np.abs(sym).max())
    t = spray_partials(spec, x, y, 2, 4, fd_fallback=True)
    assert t.data.shape == (4, 2, 2, 2, 2, 2, 2, 2)
    # symmetric in the y-slots
    assert np.allclose(t.data, np.swapaxes(t.data, 4, 7), atol=1e-6)
    assert np.allclose(t.data, np.swapaxes(t.data, 2, 3), atol=1e-6)


def test_horizontal_partial_of_energy_vanishes():
    spec, x, y = _pts("randers-variable")
    d = horizontal_partial(spec, x, y, energy_expr(spec.F))
    assert np.abs(d.data).max() < 1e-13


def test_inverse_jet_and_singular_metric():
    sp = jet_space(2, 4)
    rng = np.random.default_rng(0)
    data = rng.normal(size=(3, 2, 2, sp.size(4)))
    data[..., 0] += 3 * np.eye(2)
    M = Jet(sp, data, 4)
    from finslerkit.jets import contract
    prod = contract("ab,bc->ac", M, inverse_jet(M))
    ident = Jet.constant(sp, np.broadcast_to(np.eye(2), (3, 2, 2)), 4)
    assert np.abs(prod.data - ident.data).max() < 1e-12
    with pytest.raises(SingularMetricError):
        inverse_jet(Jet.constant(sp, np.zeros((1, 2, 2)), 4))


def test_zero_vector_rejected():
    spec = gallery("euclidean")
    with pytest.raises(ValueError):
        PointFrame(spec, np.zeros((1, 2)), np.zeros((1, 2)))


def test_spray_spec_uses_given_coefficients():
    spec = load_manifest(manifest(G=["x1*y1^2", "y1*y2"]))
    x = np.array([[0.5, 0.2]])
    y = np.array([[1.0, 2.0]])
    fr = PointFrame(spec, x, y)
    assert np.allclose(fr.G.value, [[0.5, 2.0]])
    assert np.allclose(fr.GJ.value, [[[1.0, 0.0], [2.0, 1.0]]])
