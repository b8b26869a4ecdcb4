"""Two-dimensional Finsler surfaces: Berwald frame, Gauss curvature, main scalar.

The frame (l, m) is g-orthonormal with l = y/F and m obtained by
Gram-Schmidt from the rotated vector (-y2, y1); since that vector is never
parallel to y the construction needs no fallback, and det(l, m) > 0.

kappa_raw = g(R(m, l), m) is positively 1-homogeneous in y (it equals c F
for constant curvature c); the reported Gauss curvature is kappa_raw / F.
Directional derivatives of frame-dependent scalars (S I, S(S I), i_m kappa,
H_m I, ...) are central differences along straight lines p + t V(p) with
one Richardson step.
"""
from dataclasses import dataclass, field

import numpy as np

from .curvature import CurvaturePack
from .identities import ResidualEntry, point_residuals
from .spraycore import PointFrame

FD_H = 1e-3
FD_H_MIN = 1e-6
TWO_DIM_TOL = 1e-4
FRAME_TOL = 1e-10


class FrameError(ValueError):
    pass


@dataclass
class BerwaldFrame:
    x: np.ndarray
    y: np.ndarray
    ell: np.ndarray
    m: np.ndarray
    orientation: str = "det(l, m) > 0 in coordinates; m from Gram-Schmidt of (-y2, y1)"

    def relations_residual(self, g):
        gll = np.einsum("Nij,Ni,Nj->N", g, self.ell, self.ell)
        glm = np.einsum("Nij,Ni,Nj->N", g, self.ell, self.m)
        gmm = np.einsum("Nij,Ni,Nj->N", g, self.m, self.m)
        return np.max(np.abs(np.stack([gll - 1, glm, gmm - 1], 1)), axis=1)


def _require_2d(spec):
    if spec.n != 2:
        raise FrameError("the Berwald frame needs dimension 2")
    if not spec.is_finsler:
        raise FrameError("the Berwald frame needs a Finsler function")
    if not spec.positive_definite:
        raise FrameError("the Berwald frame needs a positive-definite metric")


def frame_from_metric(g, F, y):
    ell = y / F[:, None]
    X = np.stack([-y[:, 1], y[:, 0]], axis=1)
    c = np.einsum("Nij,Ni,Nj->N", g, X, ell)
    mp = X - c[:, None] * ell
    nn = np.einsum("Nij,Ni,Nj->N", g, mp, mp)
    if np.any(nn <= 0):
        raise FrameError("metric is not positive definite at some point")
    return ell, mp / np.sqrt(nn)[:, None]


class SurfaceData:
    """Pointwise 2D quantities at a batch of points (exact jets, no FD)."""

    def __init__(self, spec, x, y, e_order=7, fd_fallback=False):
        _require_2d(spec)
        self.spec = spec
        self.x = x
        self.y = y
        self.fr = PointFrame(spec, x, y, fd_fallback=fd_fallback, e_order=e_order)
        self.cp = CurvaturePack(self.fr)
        self.g = self.fr.g.value
        self.F = self.fr.F.value
        self.ell, self.m = frame_from_metric(self.g, self.F, y)

    @property
    def frame(self):
        return BerwaldFrame(self.x, self.y, self.ell, self.m)

    def kappa_raw(self):
        R = self.cp.R.value
        return np.einsum("Nab,Najk,Nj,Nk,Nb->N", self.g, R, self.m, self.ell, self.m)

    def kappa_complement(self):
        R = self.cp.R.value
        return np.einsum("Nab,Najk,Nj,Nk,Nb->N", self.g, R, self.m, self.ell, self.ell)

    def kappa(self):
        return self.kappa_raw() / self.F

    def main_scalar(self):
        C = self.cp.Cartan.value
        return np.einsum("Nijk,Ni,Nj,Nk->N", C, self.m, self.m, self.m)

    def spray_field(self):
        return np.concatenate([self.y, -2 * self.fr.G.value], axis=1)

    def hm_field(self):
        GJ = self.fr.GJ.value
        return np.concatenate([self.m, -np.einsum("Nir,Nr->Ni", GJ, self.m)], axis=1)

    def im_field(self):
        return np.concatenate([np.zeros_like(self.m), self.m], axis=1)


# -- scalar fields and their FD directional derivatives ----------------------

def _box_limit(spec, x, vx):
    """Largest t >= 0 with x +- t vx inside the domain box (per point)."""
    lo = np.array([b[0] for b in spec.domain])
    hi = np.array([b[1] for b in spec.domain])
    with np.errstate(divide="ignore", invalid="ignore"):
        up = np.where(vx > 0, (hi - x) / vx, np.where(vx < 0, (lo - x) / vx, np.inf))
        dn = np.where(vx > 0, (x - lo) / vx, np.where(vx < 0, (x - hi) / vx, np.inf))
    return np.minimum(up.min(axis=1), dn.min(axis=1))


def derivative(spec, field_fn, vec_name, x, y):
    """Directional derivative of `field_fn` along the vector field `vec_name`
    (one of 'S', 'Hm', 'im') at the points; NaN where the stencil does not fit.

    `field_fn(x, y)` returns values on a batch of points.
    """
    data = SurfaceData(spec, x, y, e_order=5)
    V = {"S": data.spray_field, "Hm": data.hm_field, "im": data.im_field}[vec_name]()
    n = spec.n
    scale = np.linalg.norm(y, axis=1)
    vnorm = np.maximum(np.linalg.norm(V, axis=1), 1e-300)
    h = FD_H * scale / vnorm
    limit = _box_limit(spec, x, V[:, :n])
    h = np.minimum(h, 0.9 * limit)
    ok = h * vnorm >= FD_H_MIN * scale
    h = np.where(ok, h, FD_H * scale / vnorm)
    M = x.shape[0]
    steps = np.array([1.0, -1.0, 0.5, -0.5])
    u = np.concatenate([x, y], axis=1)
    pts = (u[None, :, :] + steps[:, None, None] * h[None, :, None] * V[None, :, :]).reshape(-1, 2 * n)
    vals = field_fn(pts[:, :n], pts[:, n:]).reshape(4, M)
    d1 = (vals[0] - vals[1]) / (2 * h)
    d2 = (vals[2] - vals[3]) / h
    out = (4 * d2 - d1) / 3
    return np.where(ok, out, np.nan)


def make_fields(spec):
    """Scalar fields used by the 2D identities, as functions of (x, y)."""
    def I(x, y):
        return SurfaceData(spec, x, y, e_order=5).main_scalar()

    def kappa(x, y):
        return SurfaceData(spec, x, y, e_order=5).kappa_raw()

    def SI(x, y):
        return derivative(spec, I, "S", x, y)

    def HmI(x, y):
        return derivative(spec, I, "Hm", x, y)

    def imSI(x, y):
        return derivative(spec, SI, "im", x, y)

    return {"I": I, "kappa": kappa, "SI": SI, "HmI": HmI, "imSI": imSI}


@dataclass
class TwoDimReport:
    spec: str
    records: list = field(default_factory=list)
    entries: list = field(default_factory=list)
    skipped: list = field(default_factory=list)

    @property
    def ok(self):
        return all(e.passed or e.skipped for e in self.entries)

    def get(self, id_):
        for e in self.entries:
            if e.id == id_:
                return e
        raise KeyError(id_)


def _entry(id_, name, anchor, lhs, rhs, x, y, tol, valid=None):
    res = point_residuals(lhs, rhs)
    if valid is not None:
        res = np.where(valid, res, -1.0)
    if res.size == 0 or np.all(res < 0):
        return ResidualEntry(id_, name, anchor, 0.0, tol, True, [], skipped=True,
                             reason="no point with a usable finite-difference stencil")
    i = int(np.argmax(res))
    r = float(res[i])
    return ResidualEntry(id_, name, anchor, r, tol, r <= tol,
                         [float(v) for v in (*x[i], *y[i])])


def two_dim_report(spec, x, y, fd_tol=TWO_DIM_TOL, with_douglas=True):
    """Per-point 2D quantities and the identity residuals linking them."""
    d = SurfaceData(spec, x, y)
    cp = d.cp
    fields = make_fields(spec)
    F = d.F
    E = 0.5 * F ** 2
    m, ell = d.m, d.ell
    kraw = d.kappa_raw()
    I = d.main_scalar()
    SI = fields["SI"](x, y)
    SSI = derivative(spec, fields["SI"], "S", x, y)
    im_kappa = derivative(spec, fields["kappa"], "im", x, y)
    HmI = fields["HmI"](x, y)
    imSI = fields["imSI"](x, y)
    valid = np.isfinite(SI) & np.isfinite(SSI) & np.isfinite(im_kappa) & np.isfinite(HmI) \
        & np.isfinite(imSI)
    rep = TwoDimReport(spec.name)
    for i in np.where(~valid)[0]:
        rep.skipped.append({"point": [float(v) for v in (*x[i], *y[i])],
                            "reason": "finite-difference step underflow near the domain boundary"})

    def clean(a):
        return np.where(valid, a, 0.0)

    SI_, SSI_, imk_, HmI_, imSI_ = map(clean, (SI, SSI, im_kappa, HmI, imSI))
    g = d.g
    ents = []
    ents.append(_entry("FRAME-ORTHONORMAL", "Berwald frame is g-orthonormal",
                       "Berwald frame relations", d.frame.relations_residual(g), 0.0, x, y,
                       FRAME_TOL))
    ents.append(_entry("KAPPA-COMPLEMENT", "g(R(m,l), l) vanishes",
                       "only non-zero curvature component", d.kappa_complement(), 0.0, x, y,
                       1e-7))
    ents.append(_entry("BERWALD-2D", "I kappa + i_m kappa + S(S I)/F = 0",
                       "Berwald identity", I * kraw + imk_ + SSI_ / F, 0.0, x, y, fd_tol, valid))
    K = cp.K.value
    dF = cp.dF.value
    jac = kraw[:, None, None] * (F[:, None, None] * np.eye(2)[None]
                                  - np.einsum("Nj,Ni->Nij", dF, y))
    ents.append(_entry("JACFORM", "K = kappa (F 1 - dF (x) y)", "isotropic Jacobi endomorphism",
                       K, jac, x, y, 1e-6))
    P = cp.P_land.value
    Pmmm = np.einsum("Nijk,Ni,Nj,Nk->N", P, m, m, m)
    ents.append(_entry("SURV-LANDS", "P(m,m,m) = S I", "main scalar and the Landsberg tensor",
                       Pmmm, SI_, x, y, fd_tol, valid))
    Sig = cp.Sigma.value
    Slmmm = np.einsum("Nxyzu,Nx,Ny,Nz,Nu->N", Sig, ell, m, m, m)
    ents.append(_entry("VAN-STRETCH", "Sigma(l,m,m,m) = (2/F) S(S I)",
                       "stretch tensor in dimension 2", Slmmm, 2 * SSI_ / F, x, y, fd_tol,
                       valid))
    B = cp.B.value
    Bmmm = np.einsum("Nijkl,Nj,Nk,Nl->Ni", B, m, m, m)
    survb = (-2 * SI_ / F)[:, None] * ell + (imSI_ + HmI_)[:, None] * m
    ents.append(_entry("SURV-B", "B(m,m)m through S I, i_m S I and H_m I",
                       "surviving Berwald component", Bmmm, survb, x, y, fd_tol, valid))
    trB = cp.trB.value
    trBmm = np.einsum("Njk,Nj,Nk->N", trB, m, m)
    ents.append(_entry("TRB-MM", "trB(m,m) = i_m(S I) + H_m I", "trace of the Berwald curvature",
                       trBmm, imSI_ + HmI_, x, y, fd_tol, valid))
    ents.append(_entry("W-ZERO-2D", "Weyl endomorphism vanishes", "two-dimensional Weyl endomorphism",
                       cp.Weyl0.value, 0.0, x, y, 1e-7))
    if with_douglas:
        im_imSI = derivative(spec, fields["imSI"], "im", x, y)
        im_HmI = derivative(spec, fields["HmI"], "im", x, y)
        v2 = valid & np.isfinite(im_imSI) & np.isfinite(im_HmI)
        Dmmm = np.einsum("Nijkl,Nj,Nk,Nl->Ni", cp.Douglas.value, m, m, m)
        coef = -(3 * SI_ / E + np.where(v2, im_imSI, 0) + np.where(v2, im_HmI, 0)
                 + 2 * I * imSI_ + 2 * I * HmI_) / 3
        ents.append(_entry("DOUGLAS-2D", "D(m,m)m is a multiple of y",
                           "two-dimensional Douglas curvature", Dmmm, coef[:, None] * y, x, y,
                           fd_tol, v2))
    rep.entries = ents
    kap = kraw / F
    for i in range(x.shape[0]):
        rep.records.append({
            "point": [float(v) for v in (*x[i], *y[i])],
            "kappa": float(kap[i]), "I": float(I[i]),
            "SI": float(SI[i]) if valid[i] else None,
            "SSI": float(SSI[i]) if valid[i] else None,
            "berwald_residual": float(abs(I[i] * kraw[i] + im_kappa[i] + SSI[i] / F[i]))
            if valid[i] else None,
        })
    return rep


# -- thin functional API ----------------------------------------------------------

def berwald_frame(spec, x, y):
    return SurfaceData(spec, np.atleast_2d(x), np.atleast_2d(y), e_order=3).frame


def gauss_curvature(spec, x, y):
    d = SurfaceData(spec, np.atleast_2d(x), np.atleast_2d(y), e_order=5)
    return d.kappa()


def main_scalar(spec, x, y):
    return SurfaceData(spec, np.atleast_2d(x), np.atleast_2d(y), e_order=5).main_scalar()
