"""The identity catalogue: stable ids, residual functionals and the suite runner.

Each entry produces a pair (lhs, rhs) of arrays of shape (N, ...); the
residual at a point is max|lhs - rhs| / (1 + max(|lhs|, |rhs|)) over all
components, and the reported residual is the max over points.
"""
from dataclasses import dataclass, field

from itertools import permutations

import numpy as np

from . import exprlang as el
from . import manifold
from .curvature import CurvaturePack
from .jets import contract
from .spraycore import FD_TOL, PointFrame

DEFAULT_TOL = 1e-7


@dataclass(frozen=True)
class Identity:
    id: str
    name: str
    anchor: str
    fn: object
    finsler_only: bool = False
    deep: bool = False
    tol: float = DEFAULT_TOL
    applies: object = None      # ctx -> None or a skip reason


@dataclass
class ResidualEntry:
    id: str
    name: str
    anchor: str
    residual: float
    tolerance: float
    passed: bool
    witness: list
    skipped: bool = False
    reason: str = ""
    fd: bool = False

    def as_dict(self):
        return {"id": self.id, "paper_anchor": self.anchor, "residual": self.residual,
                "tolerance": self.tolerance, "pass": self.passed,
                "witness_point": self.witness, "skipped": self.skipped,
                "reason": self.reason, "fd_fallback": self.fd}


@dataclass
class ResidualReport:
    spec: str
    seed: object
    samples: int
    entries: list = field(default_factory=list)

    @property
    def ok(self):
        return all(e.passed or e.skipped for e in self.entries)

    def get(self, id_):
        for e in self.entries:
            if e.id == id_:
                return e
        raise KeyError(id_)

    def failures(self):
        return [e for e in self.entries if not (e.passed or e.skipped)]

    def as_list(self):
        return [e.as_dict() for e in self.entries]


def point_residuals(lhs, rhs):
    """Per-point normalized residual (1 + scale) over all components."""
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.broadcast_to(np.asarray(rhs, dtype=float), lhs.shape)
    N = lhs.shape[0]
    diff = np.abs(lhs - rhs).reshape(N, -1)
    scale = np.maximum(np.abs(lhs).reshape(N, -1), np.abs(rhs).reshape(N, -1))
    if diff.shape[1] == 0:
        return np.zeros(N)
    out = diff.max(axis=1) / (1.0 + scale.max(axis=1))
    return np.where(np.isfinite(out), out, np.inf)


def test_function(n):
    """A fixed smooth non-homogeneous function on the slit bundle."""
    ys = " + ".join(f"y{i + 1}^2" for i in range(n))
    text = (f"sin(x1 + 0.3)*y1^3/({ys}) + x1*x{n}*y{n}^2 + exp(0.5*x{n})*y1"
            f" + cos(x2)*y2*sqrt({ys})")
    return el.parse(text, n)


class SuiteContext:
    def __init__(self, spec, x, y, fd_fallback=False):
        self.spec = spec
        self.x = x
        self.y = y
        self.fr = PointFrame(spec, x, y, fd_fallback=fd_fallback)
        self.cp = CurvaturePack(self.fr)
        self._f = None

    @property
    def f(self):
        if self._f is None:
            self._f = self.fr.scalar_jet(test_function(self.spec.n), 4)
        return self._f

    def val(self, jet):
        return np.asarray(jet.value)


def _euler(fr, T, degree):
    """(y . d_y T, degree * T) for a jet T."""
    lhs = contract("r,r" + "abcdefg"[: len(T.tshape)] + "->" + "abcdefg"[: len(T.tshape)],
                   fr.Y, fr.vgrad(T))
    return lhs.value, degree * T.value


def _perm_spread(a, axes):
    """Stack all permutations of the given axes to compare with the original."""
    base = list(range(a.ndim))
    out = []
    for p in permutations(axes):
        perm = list(base)
        for src, dst in zip(axes, p):
            perm[src] = dst
        out.append(np.transpose(a, perm))
    return np.stack(out, axis=1), np.stack([a] * len(out), axis=1)


def _slots_contracted(a, y, slots):
    """Contract y into each listed axis separately; results stacked on axis 1."""
    return np.stack([np.einsum("N...r,Nr->N...", np.moveaxis(a, s, -1), y) for s in slots],
                    axis=1)


# -- residual functionals -----------------------------------------------------

def _hom_f(c):
    F = c.spec.F
    base = el.evaluate(F, (c.x, c.y))
    lhs, rhs = [], []
    for lam in manifold.LAMBDAS:
        lhs.append(el.evaluate(F, (c.x, lam * c.y)))
        rhs.append(lam * base)
    return np.stack(lhs, axis=1), np.stack(rhs, axis=1)


def _euler_e(c):
    fr = c.fr
    return np.einsum("Nr,Nr->N", c.y, fr.dE_y.value), 2 * fr.E.value


def _g_hom(c):
    return _euler(c.fr, c.fr.G, 2.0)


def _tension(c):
    fr = c.fr
    return np.einsum("Nijr,Nr->Nij", fr.GC.value, c.y), fr.GJ.value


def _torsion(c):
    GC = c.fr.GC.value
    return GC, np.swapaxes(GC, 2, 3)


def _cons(c):
    d = c.fr.delta(c.cp.F).value
    return d, 0.0


def _hilbert(c):
    return np.einsum("Nij,Nj->Ni", c.fr.g.value, c.y), c.fr.dE_y.value


def _metric_hom(c):
    return _euler(c.fr, c.fr.g, 0.0)


def _cartan_sym(c):
    return _perm_spread(c.cp.Cartan.value, [1, 2, 3])


def _cartan_delta(c):
    return _slots_contracted(c.cp.Cartan.value, c.y, [1, 2, 3]), 0.0


def _cartan_hom(c):
    return _euler(c.fr, c.cp.Cartan, -1.0)


def _third_deriv(c):
    cp = c.cp
    d3 = cp.fr.vgrad(cp.fr.vgrad(cp.dF)).value      # [z, y, x]
    F = cp.F.value[:, None, None, None]
    dF = cp.dF.value
    eta = cp.eta.value
    C = cp.Cartan.value
    rhs = (2.0 / F) * C - (np.einsum("Nx,Nyz->Nxyz", dF, eta)
                           + np.einsum("Ny,Nzx->Nxyz", dF, eta)
                           + np.einsum("Nz,Nxy->Nxyz", dF, eta)) / F ** 2
    return d3, rhs


def _b_sym(c):
    return _perm_spread(c.cp.B.value, [2, 3, 4])


def _b_delta(c):
    return _slots_contracted(c.cp.B.value, c.y, [2, 3, 4]), 0.0


def _b_hom(c):
    return _euler(c.fr, c.cp.B, -1.0)


def _tension_b(c):
    fr = c.fr
    t = contract("ijr,r->ij", fr.GC, fr.Y) - fr.GJ
    dt = fr.vgrad(t).value                            # [k, i, j]
    return np.einsum("Nijkl,Nl->Nijk", c.cp.B.value, c.y), np.einsum("Nkij->Nijk", dt)


def _k_delta(c):
    return np.einsum("Nij,Nj->Ni", c.cp.K.value, c.y), 0.0


def _k_hom(c):
    return _euler(c.fr, c.cp.K, 2.0)


def _r_hom(c):
    return _euler(c.fr, c.cp.R, 1.0)


def _h_hom(c):
    return _euler(c.fr, c.cp.H, 0.0)


def _r_from_k(c):
    return c.cp.R.value, c.cp.R_commutator.value


def _k_from_r(c):
    return c.cp.K_from_R.value, c.cp.K.value


def _tr_r(c):
    cp = c.cp
    trR = np.einsum("Niij->Nj", cp.R_commutator.value)
    dtrK = cp.fr.vgrad(cp.trK).value
    trdK = np.einsum("Niij->Nj", cp.dK.value)
    return trR, (dtrK - trdK) / 3.0


def _h_from_r(c):
    return c.cp.H.value, c.cp.H_formula.value


def _r_from_h(c):
    return np.einsum("Nijkl,Nl->Nijk", c.cp.H.value, c.y), c.cp.R.value


def _bianchi_alg(c):
    H = c.cp.H.value
    return H + np.einsum("Niklj->Nijkl", H) + np.einsum("Niljk->Nijkl", H), 0.0


def _bianchi_diff(c):
    dH = c.cp.dH.value
    hB = c.cp.hB.value
    return dH - np.einsum("Niyxzu->Nixyzu", hB) + np.einsum("Nizxyu->Nixyzu", hB), 0.0


def _bianchi_diff_sym(c):
    dH = c.cp.dH.value
    hB = c.cp.hB.value
    return dH - np.einsum("Niyzxu->Nixyzu", hB) + np.einsum("Nizyxu->Nixyzu", hB), 0.0


def _bianchi_gen(c):
    hR = c.cp.hR.value
    return hR + np.einsum("Nixyz->Niyzx", hR) + np.einsum("Nixyz->Nizxy", hR), 0.0


def _ricci_vh(c):
    fr = c.fr
    out_l, out_r = [], []
    fs = [c.f] + ([c.cp.F] if fr.is_finsler else [])
    for f in fs:
        a = fr.vgrad(fr.delta(f)).value               # [x, y] = d_{y^x} delta_y f
        b = fr.delta(fr.vgrad(f)).value               # [y, x] = delta_y d_{y^x} f
        corr = np.einsum("Nryx,Nr->Nxy", fr.GC.value, fr.vgrad(f).value)
        out_l.append(a)
        out_r.append(np.swapaxes(b, 1, 2) - corr)
    return np.stack(out_l, 1), np.stack(out_r, 1)


def _hh_ricci(c, f):
    fr = c.fr
    df = fr.delta(f)
    hh = fr.delta(df).value - np.einsum("Nrxy,Nr->Nxy", fr.GC.value, df.value)
    lhs = hh - np.swapaxes(hh, 1, 2)
    rhs = -np.einsum("Nrxy,Nr->Nxy", c.cp.R.value, fr.vgrad(f).value)
    return lhs, rhs


def _ricci_hh_f(c):
    return _hh_ricci(c, c.cp.F)


def _ricci_hh(c):
    return _hh_ricci(c, c.f)


def _land_from_b(c):
    return c.cp.P_land.value, c.cp.P_from_B.value


def _land_sym(c):
    P = c.cp.P_land.value
    a, b = _perm_spread(P, [1, 2, 3])
    d = _slots_contracted(P, c.y, [1, 2, 3])
    hl, hr = _euler(c.fr, c.cp.P_land, 0.0)
    N = P.shape[0]
    return (np.concatenate([a.reshape(N, -1), d.reshape(N, -1), hl.reshape(N, -1)], 1),
            np.concatenate([b.reshape(N, -1), np.zeros((N, d[0].size)), hr.reshape(N, -1)], 1))


def _nabla_s_g(c):
    return np.einsum("Nkij,Nk->Nij", c.cp.hg.value, c.y), 0.0


def _nabla_s_cartan(c):
    hC = c.fr.hgrad(c.cp.Cartan, "ddd").value
    return np.einsum("Nijkl,Ni->Njkl", hC, c.y), c.cp.P_land.value


def _stretch_h(c):
    return c.cp.Sigma.value, c.cp.Sigma_from_H.value


def _proj_idem(c):
    p = c.cp.proj_p.value
    return np.einsum("Nij,Njk->Nik", p, p), p


def _proj_trace(c):
    return np.einsum("Nii->N", c.cp.proj_p.value), float(c.spec.n - 1)


def _proj_hbasic(c):
    return c.fr.hgrad(c.cp.proj_p, "ud").value, 0.0


def _proj_metric(c):
    p = c.cp.proj_p.value
    return np.einsum("Nab,Nai,Nbj->Nij", c.cp.g.value, p, p), c.cp.eta.value


def _pB(c):
    p = c.cp.proj_p.value
    return np.einsum("Nia,Nabcd,Nbj,Nck,Ndl->Nijkl", p, c.cp.B.value, p, p, p)


def _proj_b(c):
    cp = c.cp
    rhs = cp.B.value + np.einsum("Njkl,Ni->Nijkl", cp.P_land.value, c.y) / \
        cp.E.value[:, None, None, None, None]
    return _pB(c), rhs


def _proj_d(c):
    cp = c.cp
    p = cp.proj_p.value
    pD = np.einsum("Nia,Nabcd,Nbj,Nck,Ndl->Nijkl", p, cp.Douglas.value, p, p, p)
    tr = cp.trB.value
    sym = (np.einsum("Njk,Nil->Nijkl", tr, p) + np.einsum("Nkl,Nij->Nijkl", tr, p)
           + np.einsum("Nlj,Nik->Nijkl", tr, p))
    return pD, _pB(c) - sym / (c.spec.n + 1)


def _p_berwald_trace(c):
    cp = c.cp
    pb = cp.B.value + np.einsum("Njkl,Ni->Nijkl", cp.P_land.value, c.y) / \
        cp.E.value[:, None, None, None, None]
    return np.einsum("Niikl->Nkl", pb), cp.trB.value


def _iso_form(c):
    cp = c.cp
    return cp.K.value, cp.Khat.value[:, None, None] * cp.proj_p.value


def _iso_curv_form(c):
    cp = c.cp
    Rs = cp.scalar_curvature_raw
    dRs = cp.fr.vgrad(Rs).value
    F = cp.F.value[:, None]
    beta = Rs.value[:, None] * cp.dF.value + F * dRs / 3.0
    p = cp.proj_p.value
    rhs = F[:, :, None, None] * (np.einsum("Nij,Nk->Nijk", p, beta) - np.einsum("Nik,Nj->Nijk", p, beta))
    return cp.R.value, rhs


def _w_zero(c):
    return c.cp.Weyl0.value, 0.0


def _douglas_delta(c):
    return _slots_contracted(c.cp.Douglas.value, c.y, [2, 3, 4]), 0.0


def _weyl_delta(c):
    return np.einsum("Nij,Nj->Ni", c.cp.Weyl0.value, c.y), 0.0


def _needs_2d(c):
    return None if c.spec.n == 2 else "only defined in dimension 2"


def isotropy_residual(cp):
    """Normalized max |W°| (n >= 3) or ISO-FORM residual (n = 2, Finsler)."""
    if cp.n == 2 and cp.is_finsler:
        lhs, rhs = cp.K.value, cp.Khat.value[:, None, None] * cp.proj_p.value
        return float(point_residuals(lhs, rhs).max())
    return float(point_residuals(cp.Weyl0.value, 0.0).max())


def _needs_isotropy(c):
    if c.spec.n == 2:
        return None
    r = float(point_residuals(c.cp.Weyl0.value, 0.0).max())
    if r <= DEFAULT_TOL:
        return None
    return f"not isotropic (max normalized |W°| = {r:.3e}); isotropic forms do not apply"


CATALOGUE = [
    Identity("HOM-F", "F is positively 1-homogeneous", "Finsler axiom F2", _hom_f, True),
    Identity("EULER-E", "Euler relation for the energy", "energy is 2-homogeneous", _euler_e, True),
    Identity("G-HOM", "spray coefficients are 2-homogeneous", "spray axiom S5", _g_hom),
    Identity("TENSION", "tension of the spray connection vanishes", "h-nabla of the canonical section is zero", _tension),
    Identity("TORSION", "connection coefficients are symmetric", "torsion of the Ehresmann connection vanishes", _torsion),
    Identity("CONS", "horizontal derivatives of F vanish", "the canonical connection is conservative", _cons, True),
    Identity("HILBERT", "g(y, .) equals the y-gradient of E", "Hilbert 1-form", _hilbert, True),
    Identity("METRIC-HOM", "metric tensor is 0-homogeneous", "metric tensor homogeneity", _metric_hom, True),
    Identity("CARTAN-SYM", "Cartan tensor is totally symmetric", "Cartan tensor symmetry", _cartan_sym, True),
    Identity("CARTAN-DELTA", "Cartan tensor annihilates y", "Cartan tensor with the canonical section", _cartan_delta, True),
    Identity("CARTAN-HOM", "Cartan tensor is (-1)-homogeneous", "Cartan tensor homogeneity", _cartan_hom, True),
    Identity("THIRD-DERIV", "third y-derivative of F via Cartan and angular metric", "third vertical derivative of F", _third_deriv, True),
    Identity("B-SYM", "Berwald curvature is totally symmetric", "Berwald curvature symmetry", _b_sym),
    Identity("B-DELTA", "Berwald curvature annihilates y in each slot", "Berwald curvature with the canonical section", _b_delta),
    Identity("B-HOM", "Berwald curvature is (-1)-homogeneous", "Berwald curvature homogeneity", _b_hom, deep=True),
    Identity("TENSION-B", "B(X,Y)y equals the vertical derivative of the tension", "tension and Berwald curvature", _tension_b),
    Identity("K-DELTA", "Jacobi endomorphism annihilates y", "Jacobi endomorphism on the canonical section", _k_delta),
    Identity("K-HOM", "Jacobi endomorphism is 2-homogeneous", "affine deviation homogeneity", _k_hom),
    Identity("K-FROM-R", "K equals R contracted with y", "curvature and affine deviation", _k_from_r),
    Identity("R-HOM", "curvature is 1-homogeneous", "curvature homogeneity", _r_hom, deep=True),
    Identity("H-HOM", "affine curvature is 0-homogeneous", "affine curvature homogeneity", _h_hom, deep=True),
    Identity("R-FROM-K", "R from K agrees with the horizontal commutator", "curvature and affine deviation", _r_from_k),
    Identity("TR-R", "trace of R from traces of dK", "trace of the curvature", _tr_r),
    Identity("H-FROM-R", "H from dR agrees with the connection formula", "affine curvature from the curvature", _h_from_r, deep=True),
    Identity("R-FROM-H", "R is H contracted with y", "curvature reproduced from the affine curvature", _r_from_h, deep=True),
    Identity("BIANCHI-ALG", "cyclic sum of H vanishes", "first Bianchi identity", _bianchi_alg, deep=True),
    Identity("BIANCHI-DIFF", "vertical H against horizontal B", "second Bianchi identity", _bianchi_diff, deep=True),
    Identity("BIANCHI-DIFF-SYM", "symmetric variant of the vertical-horizontal Bianchi identity", "second Bianchi identity, symmetric form", _bianchi_diff_sym, deep=True),
    Identity("BIANCHI-GEN", "cyclic sum of h-nabla R vanishes", "generalized Bianchi identity", _bianchi_gen, deep=True),
    Identity("RICCI-VH", "commuting vertical and horizontal derivatives of functions", "Ricci identity, mixed", _ricci_vh),
    Identity("RICCI-HH", "commutator of horizontal derivatives of a test function is -R", "Ricci identity, horizontal", _ricci_hh),
    Identity("RICCI-HH-F", "horizontal Ricci identity applied to F", "Ricci identity, horizontal, on F", _ricci_hh_f, True),
    Identity("LAND-FROM-B", "Landsberg tensor from theta and B", "Landsberg tensor through the Berwald curvature", _land_from_b, True),
    Identity("LAND-SYM", "Landsberg tensor symmetric, y-free and 0-homogeneous", "Landsberg tensor properties", _land_sym, True),
    Identity("NABLA-S-G", "dynamical derivative of g vanishes", "g is parallel along the spray", _nabla_s_g, True),
    Identity("NABLA-S-CARTAN", "dynamical derivative of the Cartan tensor is P", "Cartan and Landsberg tensors", _nabla_s_cartan, True),
    Identity("STRETCH-H", "stretch tensor from theta and dH", "stretch tensor through the affine curvature", _stretch_h, True, deep=True),
    Identity("PROJ-IDEMPOTENT", "p is idempotent", "orthogonal projection along y", _proj_idem, True),
    Identity("PROJ-TRACE", "trace of p is n-1", "orthogonal projection trace", _proj_trace, True),
    Identity("PROJ-HBASIC", "p is h-parallel", "orthogonal projection is h-basic", _proj_hbasic, True),
    Identity("PROJ-METRIC", "projected metric is the angular metric", "projected metric tensor", _proj_metric, True),
    Identity("PROJ-B", "projected Berwald curvature", "pB = B + (1/E) P (x) y", _proj_b, True),
    Identity("PROJ-D", "projected Douglas curvature", "projected Douglas tensor", _proj_d, True),
    Identity("P-BERWALD-TRACE", "trace of B + P (x) y / E equals trace of B", "p-Berwald implies weakly Berwald", _p_berwald_trace, True),
    Identity("DOUGLAS-DELTA", "Douglas curvature annihilates y", "Douglas curvature on the canonical section", _douglas_delta),
    Identity("WEYL-DELTA", "Weyl endomorphism annihilates y", "Weyl endomorphism on the canonical section", _weyl_delta),
    Identity("ISO-FORM", "K is the scalar multiple of p", "isotropic Jacobi endomorphism", _iso_form, True, applies=_needs_isotropy),
    Identity("ISO-CURV-FORM", "curvature of an isotropic Finsler function", "curvature through the scalar curvature", _iso_curv_form, True, applies=_needs_isotropy),
    Identity("W-ZERO-2D", "Weyl endomorphism vanishes in dimension 2", "two-dimensional Weyl endomorphism", _w_zero, applies=_needs_2d),
]

IDS = [c.id for c in CATALOGUE]


def _resolve_points(spec, samples):
    if isinstance(samples, tuple):
        return samples
    return manifold.points_to_arrays(samples)


def run_identity_suite(spec, samples, tol_overrides=None, fd_fallback=False, seed=None,
                       only=None):
    """Evaluate the catalogue at the sample points."""
    x, y = _resolve_points(spec, samples)
    tol_overrides = tol_overrides or {}
    ctx = SuiteContext(spec, x, y, fd_fallback=fd_fallback)
    report = ResidualReport(spec.name, seed, x.shape[0])
    for ident in CATALOGUE:
        if only is not None and ident.id not in only:
            continue
        tol = tol_overrides.get(ident.id, tol_overrides.get("*", ident.tol))
        if ident.finsler_only and not spec.is_finsler:
            report.entries.append(ResidualEntry(
                ident.id, ident.name, ident.anchor, 0.0, tol, True, [], skipped=True,
                reason="needs a Finsler function; spec is a spray"))
            continue
        try:
            reason = ident.applies(ctx) if ident.applies else None
            if reason:
                report.entries.append(ResidualEntry(
                    ident.id, ident.name, ident.anchor, 0.0, tol, True, [], skipped=True,
                    reason=reason))
                continue
            lhs, rhs = ident.fn(ctx)
            res = point_residuals(lhs, rhs)
            i = int(np.argmax(res))
            r = float(res[i])
            fd = bool(ident.deep and ctx.fr.fd_used)
            if fd:
                tol = max(tol, FD_TOL)
            witness = [float(v) for v in (*x[i], *y[i])]
            report.entries.append(ResidualEntry(ident.id, ident.name, ident.anchor, r, tol,
                                                r <= tol, witness, fd=fd))
        except Exception as exc:   # recorded per identity, not fatal to the suite
            report.entries.append(ResidualEntry(
                ident.id, ident.name, ident.anchor, float("inf"), tol, False, [],
                reason=f"{type(exc).__name__}: {exc}"))
    return report
