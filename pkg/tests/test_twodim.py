import numpy as np
import pytest

from finslerkit import manifold, twodim
from finslerkit.spraycore import metric_at

from conftest import gallery

SURFACES = ["euclidean", "funk-disk", "minkowski-quartic", "poincare-half-plane",
            "randers-variable", "sphere-stereographic"]


def test_euclidean_frame_at_e1():
    fr = twodim.berwald_frame(gallery("euclidean"), [0.2, 0.3], [1.0, 0.0])
    assert np.allclose(fr.ell, [[1.0, 0.0]]) and np.allclose(fr.m, [[0.0, 1.0]])


@pytest.mark.parametrize("name", SURFACES)
def test_frame_is_orthonormal_and_positively_oriented(name):
    spec = gallery(name)
    x, y = manifold.sample_arrays(spec, 30, 4)
    fr = twodim.berwald_frame(spec, x, y)
    g = metric_at(spec, x, y)[0].data
    assert fr.relations_residual(g).max() < 1e-12
    assert np.all(np.linalg.det(np.stack([fr.ell, fr.m], 2)) > 0)


@pytest.mark.parametrize("name,kappa", [("euclidean", 0.0), ("poincare-half-plane", -1.0),
                                        ("sphere-stereographic", 1.0), ("funk-disk", -0.25),
                                        ("minkowski-quartic", 0.0)])
def test_gauss_curvature_of_constant_curvature_examples(name, kappa):
    spec = gallery(name)
    x, y = manifold.sample_arrays(spec, 30, 4)
    assert np.abs(twodim.gauss_curvature(spec, x, y) - kappa).max() < 1e-10


def test_main_scalar_vanishes_exactly_for_riemannian():
    for name in ("poincare-half-plane", "sphere-stereographic"):
        spec = gallery(name)
        x, y = manifold.sample_arrays(spec, 10, 4)
        assert np.abs(twodim.main_scalar(spec, x, y)).max() < 1e-12
    spec = gallery("minkowski-quartic")
    x, y = manifold.sample_arrays(spec, 10, 4)
    assert np.abs(twodim.main_scalar(spec, x, y)).max() > 1e-2


@pytest.mark.parametrize("name", SURFACES)
def test_two_dim_report_passes(name):
    spec = gallery(name)
    x, y = manifold.sample_arrays(spec, 12, 8)
    rep = twodim.two_dim_report(spec, x, y)
    assert rep.ok, [(e.id, e.residual) for e in rep.entries if not e.passed]
    assert len(rep.records) == 12
    assert {e.id for e in rep.entries} >= {"BERWALD-2D", "JACFORM", "SURV-LANDS", "VAN-STRETCH",
                                           "W-ZERO-2D", "DOUGLAS-2D"}


def test_report_on_non_berwald_surface_has_content():
    spec = gallery("randers-variable")
    x, y = manifold.sample_arrays(spec, 12, 8)
    rep = twodim.two_dim_report(spec, x, y)
    SI = np.array([r["SI"] for r in rep.records if r["SI"] is not None])
    assert np.abs(SI).max() > 1e-3
    assert rep.get("SURV-LANDS").residual < 1e-4


@pytest.mark.parametrize("name,err", [("randers-3d", "dimension 2"), ("flat-spray", "Finsler")])
def test_frame_preconditions(name, err):
    spec = gallery(name)
    x, y = manifold.sample_arrays(spec, 2, 0)
    with pytest.raises(twodim.FrameError, match=err):
        twodim.berwald_frame(spec, x, y)


def test_derivative_is_nan_when_stencil_cannot_fit():
    spec = gallery("poincare-half-plane")
    x = np.array([[2.0, 0.1]])      # corner of the domain box
    y = np.array([[1.0, 0.0]])
    f = twodim.make_fields(spec)["I"]
    d = twodim.derivative(spec, f, "Hm", x, y)
    assert d.shape == (1,) and np.isnan(d[0])
    inner = twodim.derivative(spec, f, "Hm", np.array([[1.0, 1.0]]), y)
    assert np.isfinite(inner[0])
