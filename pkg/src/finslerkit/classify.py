"""Classification of a spray or Finsler function into the standard special classes."""
from dataclasses import dataclass, field

import numpy as np

from .curvature import ConsistencyError, CurvaturePack
from .identities import DEFAULT_TOL, isotropy_residual, point_residuals
from .spraycore import FD_TOL, PointFrame

CLASSES = ("riemannian", "berwald", "weakly_berwald", "douglas", "p_berwald",
           "landsberg_free", "r_quadratic", "isotropic", "constant_curvature")
FINSLER_CLASSES = {"riemannian", "p_berwald", "landsberg_free", "constant_curvature"}
# implied classes may sit slightly above tol when the implying tensor is just below it
IMPLICATION_SLACK = 100.0


@dataclass
class Verdict:
    holds: object           # True / False / None (not applicable)
    residual: object        # max normalized residual, None when not applicable
    note: str = ""

    def as_dict(self):
        return {"holds": self.holds, "residual": self.residual, "note": self.note}


@dataclass
class Verdicts:
    spec: str
    tol: float
    verdicts: dict
    scalar_curvature: object = None        # dict(mean, std, min, max) or None
    dual_routes: dict = field(default_factory=dict)
    fd_fallback: bool = False

    def __getitem__(self, name):
        return self.verdicts[name].holds

    def as_dict(self):
        return {"tol": self.tol, "fd_fallback": self.fd_fallback,
                "verdicts": {k: self.verdicts[k].as_dict() for k in CLASSES},
                "scalar_curvature": self.scalar_curvature, "dual_routes": self.dual_routes}


def _zero_res(a):
    return float(point_residuals(a, 0.0).max())


def _implies(v, a, consequents, tol):
    """a => each consequent; tolerate residuals up to IMPLICATION_SLACK * tol."""
    if not v[a].holds:
        return
    for c in consequents:
        vc = v[c]
        if vc.holds is None or vc.holds:
            continue
        if vc.residual <= IMPLICATION_SLACK * tol:
            vc.holds = True
            vc.note = f"implied by {a} (residual within {IMPLICATION_SLACK:g} tol)"
        else:
            raise ConsistencyError(
                f"{a} holds but {c} fails with residual {vc.residual:.3e}")


def classify(spec, x, y, tol=DEFAULT_TOL, fd_fallback=False):
    fr = PointFrame(spec, x, y, fd_fallback=fd_fallback)
    cp = CurvaturePack(fr)
    routes = cp.check_consistency()
    fin = spec.is_finsler
    deep_tol = max(tol, FD_TOL) if fr.fd_used else tol
    res = {
        "berwald": _zero_res(cp.B.value),
        "weakly_berwald": _zero_res(cp.trB.value),
        "douglas": _zero_res(cp.Douglas.value),
        "r_quadratic": _zero_res(cp.dH.value),
        "isotropic": isotropy_residual(cp),
    }
    if fin:
        res["riemannian"] = _zero_res(cp.Cartan.value)
        res["landsberg_free"] = _zero_res(cp.P_land.value)
        pb = cp.B.value + np.einsum("Njkl,Ni->Nijkl", cp.P_land.value, fr.y) / \
            cp.E.value[:, None, None, None, None]
        res["p_berwald"] = _zero_res(pb)
    v = {}
    for name in CLASSES:
        if name == "constant_curvature":
            continue
        if name not in res:
            v[name] = Verdict(None, None, "needs a Finsler function")
            continue
        t = deep_tol if name == "r_quadratic" else tol
        v[name] = Verdict(bool(res[name] <= t), res[name])
    sc = None
    if fin and v["isotropic"].holds:
        k = np.asarray(cp.scalar_curvature_raw.value, dtype=float)
        sc = {"mean": float(k.mean()), "std": float(k.std(ddof=1)) if k.size > 1 else 0.0,
              "min": float(k.min()), "max": float(k.max())}
        v["constant_curvature"] = Verdict(bool(sc["std"] <= tol), sc["std"])
    elif fin:
        v["constant_curvature"] = Verdict(False, None, "scalar curvature undefined: not isotropic")
    else:
        v["constant_curvature"] = Verdict(None, None, "needs a Finsler function")
    if fin and v["riemannian"].holds and not v["berwald"].holds:
        v["riemannian"].note = f"Cartan tensor vanishes but B does not (residual " \
                               f"{res['berwald']:.3e})"
    _implies(v, "berwald", ("weakly_berwald", "douglas", "landsberg_free", "p_berwald"), tol)
    _implies(v, "p_berwald", ("weakly_berwald",), tol)
    return Verdicts(spec.name, tol, v, sc, routes, fr.fd_used)
