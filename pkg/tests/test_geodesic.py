import csv

import numpy as np
import pytest

from finslerkit import exprlang as el, geodesic as gd, projective as pj
from finslerkit.manifold import load_manifest
from finslerkit.spraycore import PointFrame

from conftest import gallery, manifest


@pytest.mark.parametrize("name", ["poincare-half-plane", "randers-3d", "funk-disk"])
def test_fast_evaluator_matches_point_frame(name):
    spec = gallery(name)
    from finslerkit import manifold
    x, y = manifold.sample_arrays(spec, 10, 2)
    assert np.allclose(gd.SprayEvaluator(spec)(x, y), PointFrame(spec, x, y).G.value,
                       atol=1e-13)
    derived = pj.apply_projective_change(spec, el.mul(el.const(0.2), spec.F)).spec
    assert np.allclose(gd.SprayEvaluator(derived)(x, y), PointFrame(derived, x, y).G.value,
                       atol=1e-13)


def test_flat_spray_moves_on_a_line():
    tr = gd.integrate_geodesic(gallery("flat-spray"), [0.0, 0.0], [1.0, 0.0], 0.9, 7)
    assert np.array_equal(tr.x[:, 1], np.zeros(8))
    assert np.allclose(tr.x[:, 0], tr.t, atol=1e-15)
    assert tr.completed and np.all(np.diff(tr.t) > 0)


def test_euclidean_conservation_is_exact():
    spec = gallery("euclidean")
    tr = gd.integrate_geodesic(spec, [0.0, 0.0], [0.6, 0.8], 1.0, 10)
    c = gd.conservation_report(spec, tr)
    assert c.energy_drift < 1e-15 and c.F_drift < 1e-15


def test_half_plane_oracle_and_drift():
    spec = gallery("poincare-half-plane")
    tr = gd.integrate_geodesic(spec, [0.0, 1.0], [1.0, 0.0], 1.0, 200)
    x_ref, y_ref = gd.half_plane_geodesic(tr.t)
    assert np.abs(tr.x - x_ref).max() < 1e-8
    assert np.abs(tr.y - y_ref).max() < 1e-8
    coarse = gd.conservation_report(spec, gd.integrate_geodesic(spec, [0, 1], [1, 0], 1.0, 10))
    fine = gd.conservation_report(spec, tr)
    assert coarse.energy_drift > fine.energy_drift


def test_projectively_related_spray_keeps_the_path():
    spec = gallery("poincare-half-plane")
    changed = pj.apply_projective_change(spec, el.mul(el.const(0.3), spec.F)).spec
    tr = gd.integrate_geodesic(changed, [0.0, 1.0], [1.0, 0.0], 1.0, 400)
    # still on the unit semicircle, only the parametrization differs
    assert np.abs(np.hypot(tr.x[:, 0], tr.x[:, 1]) - 1).max() < 1e-9


def test_exit_flags():
    spec = gallery("euclidean")
    tr = gd.integrate_geodesic(spec, [0.9, 0.0], [1.0, 0.0], 1.0, 10)
    assert tr.exit_flag == "left-domain" and not tr.completed
    assert len(tr.t) < 11
    spec = load_manifest(manifest(G=["-y1^2", "0"], box=(-100, 100)))
    tr = gd.integrate_geodesic(spec, [0.0, 0.0], [1.0, 0.0], 10.0, 100)
    assert tr.exit_flag == "speed-out-of-range"


def test_errors():
    spec = gallery("euclidean")
    with pytest.raises(gd.GeodesicError, match="zero"):
        gd.integrate_geodesic(spec, [0, 0], [0, 0], 1.0, 10)
    with pytest.raises(gd.GeodesicError, match="steps"):
        gd.integrate_geodesic(spec, [0, 0], [1, 0], 1.0, 0)
    with pytest.raises(gd.GeodesicError, match="non-finite"):
        gd.integrate_geodesic(spec, [np.nan, 0], [1, 0], 1.0, 1)
    blow = load_manifest(manifest(G=["-y1^2", "0"], box=(-1e300, 1e300)))
    with pytest.raises(gd.GeodesicError, match="non-finite"):
        gd.integrate_geodesic(blow, [0, 0], [1.0, 0], 5.0, 10, check_domain=False)
    with pytest.raises(gd.GeodesicError):
        gd.conservation_report(gallery("flat-spray"),
                               gd.integrate_geodesic(gallery("flat-spray"), [0, 0], [1, 0], 1, 2))


def test_csv_output(tmp_path):
    spec = gallery("poincare-half-plane")
    tr = gd.integrate_geodesic(spec, [0.0, 1.0], [1.0, 0.0], 0.1, 5)
    p = tmp_path / "g.csv"
    gd.write_csv(spec, tr, p)
    rows = list(csv.reader(p.open()))
    assert rows[0] == ["t", "x1", "x2", "y1", "y2", "E", "F"]
    assert len(rows) == 7
    assert float(rows[-1][0]) == pytest.approx(0.1)
    assert float(rows[1][6]) == pytest.approx(1.0, abs=1e-10)
