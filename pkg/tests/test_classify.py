import pytest

from finslerkit import manifold
from finslerkit.classify import CLASSES, Verdict, _implies, classify
from finslerkit.curvature import ConsistencyError

from conftest import gallery

_cache = {}


def verdicts(name, count=20):
    if name not in _cache:
        spec = gallery(name)
        x, y = manifold.sample_arrays(spec, count, 1)
        _cache[name] = classify(spec, x, y)
    return _cache[name]


@pytest.mark.parametrize("name,sc", [("poincare-half-plane", -1.0), ("sphere-stereographic", 1.0)])
def test_riemannian_constant_curvature(name, sc):
    v = verdicts(name)
    for c in ("riemannian", "berwald", "isotropic", "constant_curvature", "r_quadratic"):
        assert v[c], c
    assert v.scalar_curvature["mean"] == pytest.approx(sc, abs=1e-10)
    assert v.scalar_curvature["std"] < 1e-10


def test_minkowski_is_berwald_not_riemannian():
    v = verdicts("minkowski-quartic")
    assert v["berwald"] and not v["riemannian"]
    assert v.verdicts["riemannian"].residual > 1e-3


def test_randers_variable_is_not_berwald():
    v = verdicts("randers-variable")
    assert not v["berwald"] and not v["landsberg_free"] and not v["douglas"]
    # every 2D Finsler surface is isotropic
    assert v["isotropic"] and not v["constant_curvature"]


def test_funk_is_douglas_with_constant_curvature():
    v = verdicts("funk-disk")
    assert v["douglas"] and not v["berwald"] and v["constant_curvature"]
    assert v.scalar_curvature["mean"] == pytest.approx(-0.25, abs=1e-10)


def test_randers_3d_scalar_curvature_undefined():
    v = verdicts("randers-3d", 10)
    assert not v["isotropic"]
    assert v.scalar_curvature is None
    assert v["constant_curvature"] is False
    assert "undefined" in v.verdicts["constant_curvature"].note


def test_spray_classes():
    v = verdicts("flat-spray")
    assert v["berwald"] and v["riemannian"] is None and v["landsberg_free"] is None
    assert set(v.as_dict()["verdicts"]) == set(CLASSES)


@pytest.mark.parametrize("name", manifold.gallery_names())
def test_implications_hold(name):
    v = verdicts(name, 10)
    if v["berwald"]:
        assert v["weakly_berwald"] and v["douglas"]
        assert v["landsberg_free"] in (True, None)
    if v["p_berwald"]:
        assert v["weakly_berwald"]


def test_implication_violation_raises():
    v = {"berwald": Verdict(True, 0.0), "weakly_berwald": Verdict(False, 0.5)}
    with pytest.raises(ConsistencyError):
        _implies(v, "berwald", ("weakly_berwald",), 1e-7)
    v = {"berwald": Verdict(True, 0.0), "weakly_berwald": Verdict(False, 2e-7)}
    _implies(v, "berwald", ("weakly_berwald",), 1e-7)
    assert v["weakly_berwald"].holds and "implied" in v["weakly_berwald"].note
