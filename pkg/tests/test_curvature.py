import numpy as np
import pytest

from finslerkit import exprlang as el, manifold
from finslerkit.curvature import (ConsistencyError, CurvaturePack, relative_gap,
                                  trace_contract)
from finslerkit.jets import Jet
from finslerkit.spraycore import PointFrame

from conftest import gallery


def _pack(name, count=20, seed=7, **kw):
    spec = gallery(name)
    x, y = manifold.sample_arrays(spec, count, seed)
    return CurvaturePack(PointFrame(spec, x, y, **kw)), x, y


def _constant_flag_K(F, dF, y, kappa):
    n = y.shape[1]
    return kappa * (F[:, None, None] ** 2 * np.eye(n)[None]
                    - F[:, None, None] * np.einsum("Ni,Nj->Nij", y, dF))


@pytest.mark.parametrize("name,kappa", [
    ("poincare-half-plane", -1.0), ("sphere-stereographic", 1.0), ("funk-disk", -0.25),
])
def test_jacobi_endomorphism_of_constant_curvature_examples(name, kappa):
    cp, x, y = _pack(name)
    F = el.evaluate(gallery(name).F, (x, y))
    want = _constant_flag_K(F, cp.dF.value, y, kappa)
    assert np.abs(cp.K.value - want).max() < 1e-11


@pytest.mark.parametrize("name", ["randers-variable", "randers-3d", "funk-disk"])
def test_curvature_conventions(name):
    cp, x, y = _pack(name, 10)
    K, R, H = cp.K.value, cp.R.value, cp.H.value
    assert np.abs(np.einsum("Nij,Nj->Ni", K, y)).max() < 1e-12
    assert np.abs(np.einsum("Nijk,Nk->Nij", R, y) - K).max() < 1e-12
    assert np.abs(np.einsum("Nijkl,Nl->Nijk", H, y) - R).max() < 1e-12
    assert np.abs(R + np.swapaxes(R, 2, 3)).max() < 1e-12
    B = cp.B.value
    assert np.abs(np.einsum("Nijkl,Nl->Nijk", B, y)).max() < 1e-12


@pytest.mark.parametrize("name", ["randers-variable", "randers-3d"])
def test_dual_routes_agree(name):
    cp, _, _ = _pack(name, 10)
    gaps = cp.dual_routes()
    assert set(gaps) == {"K", "R", "H", "P", "Sigma"}
    assert max(gaps.values()) < 1e-9


def test_dual_routes_under_fd_fallback():
    cp, _, _ = _pack("randers-variable", 10, fd_fallback=True)
    gaps = cp.check_consistency()
    assert cp.fr.fd_used
    assert max(gaps.values()) < 1e-4


def test_consistency_error_on_disagreement():
    cp, _, _ = _pack("randers-variable", 5)
    bad = cp.K_from_R
    cp.__dict__["K_from_R"] = Jet(bad.space, bad.data * 1.01, bad.order)
    with pytest.raises(ConsistencyError, match="K"):
        cp.check_consistency()


def test_minkowski_is_berwald_but_not_riemannian():
    cp, _, _ = _pack("minkowski-quartic")
    assert np.abs(cp.B.value).max() == 0.0
    assert np.abs(cp.Cartan.value).max() > 1e-3
    C = cp.Cartan.value
    assert np.allclose(C, np.swapaxes(C, 1, 3), atol=1e-13)


def test_landsberg_of_funk_is_nonzero_and_matches_berwald_route():
    cp, _, _ = _pack("funk-disk")
    assert np.abs(cp.P_land.value).max() > 1e-2
    assert relative_gap(cp.P_land.value, cp.P_from_B.value) < 1e-10


def test_spray_pack_refuses_finsler_tensors():
    cp, _, _ = _pack("flat-spray", 3)
    assert "Cartan" not in cp.available()
    with pytest.raises(ValueError):
        cp.g
    assert np.abs(cp.tensor("Douglas").data).max() == 0.0


def test_trace_contract_validation():
    with pytest.raises(ValueError):
        trace_contract(np.zeros((1, 2, 2)), "dd")
    with pytest.raises(ValueError):
        trace_contract(np.zeros((1, 2, 2, 2)), "udu")
    t = np.arange(8.0).reshape(1, 2, 2, 2)
    assert np.allclose(trace_contract(t, "udd"), t[:, 0, 0] + t[:, 1, 1])


def test_relative_gap_floor():
    assert relative_gap([1e-12], [2e-12]) == pytest.approx(1e-6)
    assert relative_gap([1.0], [1.5]) == pytest.approx(1 / 3)


def test_component_tensor_signature():
    cp, _, _ = _pack("euclidean", 2)
    t = cp.tensor("WeylW")
    assert t.signature == "udd" and t.data.shape == (2, 2, 2, 2)
