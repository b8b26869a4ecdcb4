import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from finslerkit import manifold
from finslerkit.manifold import ManifestError, load_manifest

from conftest import gallery, manifest

FINSLER = ["euclidean", "funk-disk", "minkowski-quartic", "poincare-half-plane", "randers-3d",
           "randers-variable", "sphere-stereographic"]


def test_gallery_contents():
    assert sorted(FINSLER + ["flat-spray"]) == manifold.gallery_names()
    assert gallery("flat-spray").kind == "spray"
    assert gallery("randers-3d").n == 3


@pytest.mark.parametrize("name", FINSLER)
def test_gallery_entries_validate(name):
    spec = gallery(name)
    x, y = manifold.sample_arrays(spec, 50, 3)
    rep = manifold.validate_finsler(spec, x, y)
    assert rep.ok, rep.failures()


def test_linear_function_fails_nondegeneracy():
    spec = load_manifest(manifest(F="y1"))
    x, y = manifold.sample_arrays(spec, 20, 0)
    rep = manifold.validate_finsler(spec, x, y)
    ids = {c.id for c in rep.failures()}
    assert "F3-NONDEGENERATE" in ids
    assert "F4-POSITIVE" in ids


def test_non_homogeneous_function_fails_f2():
    spec = load_manifest(manifest(F="sqrt(y1^2 + y2^2) + y1^2"))
    x, y = manifold.sample_arrays(spec, 20, 0)
    rep = manifold.validate_finsler(spec, x, y)
    assert "F2-HOMOGENEITY" in {c.id for c in rep.failures()}


def test_singular_expression_reports_f1():
    spec = load_manifest(manifest(F="sqrt(y1^2 + y2^2) / x1"))
    x, y = manifold.sample_arrays(spec, 20, 0)
    x[0, 0] = 0.0
    rep = manifold.validate_finsler(spec, x, y)
    assert [c.id for c in rep.failures()] == ["F1-SMOOTH"]


@pytest.mark.parametrize("text,fragment", [
    (manifest(F="y1", n=1), "dimension must be >= 2"),
    (manifest(F="y1 +"), "expression F"),
    (manifest(F="y3"), "out of range"),
    (manifest(G=["0"]), "G2"),
    ('[geometry]\nname="a"\ndim=2\nkind="finsler"\nF="y1"\n', "domain"),
    (manifest(F="y1").replace("y_annulus = [0.5, 2.0]", "y_annulus = [0.0, 2.0]"), "r_min"),
    (manifest(F="y1").replace('kind = "finsler"', 'kind = "metric"'), "kind"),
    ("[geometry\n", "syntax"),
    (manifest(F="y1", extra="samples = 0"), "samples"),
])
def test_manifest_errors(text, fragment):
    with pytest.raises(ManifestError) as info:
        load_manifest(text)
    assert fragment in str(info.value)


def test_options_table_overrides_defaults():
    spec = load_manifest(manifest(F="sqrt(y1^2+y2^2)") + "[options]\nsamples = 7\nseed = 9\ntol = 1e-5\n")
    assert (spec.samples, spec.seed, spec.tol) == (7, 9, 1e-5)


@given(st.integers(1, 40), st.integers(0, 2 ** 31))
@settings(max_examples=40, deadline=None)
def test_samples_lie_in_box_and_annulus(count, seed):
    spec = gallery("randers-3d")
    x, y = manifold.sample_arrays(spec, count, seed)
    assert x.shape == y.shape == (count, 3)
    assert manifold.in_domain(spec, x, y).all()
    r = np.linalg.norm(y, axis=1)
    assert np.all((r >= 0.5 - 1e-12) & (r <= 2.0 + 1e-12))


def test_sampling_is_deterministic():
    spec = gallery("euclidean")
    a = manifold.sample_arrays(spec, 5, 11)
    b = manifold.sample_arrays(spec, 5, 11)
    assert all(np.array_equal(u, v) for u, v in zip(a, b))
    pts = manifold.sample_points(spec, 5, 11)
    assert np.array_equal(manifold.points_to_arrays(pts)[0], a[0])


def test_zero_samples_rejected():
    with pytest.raises(ValueError):
        manifold.sample_arrays(gallery("euclidean"), 0, 1)
