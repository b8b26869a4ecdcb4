"""Projective changes of sprays, their invariants, and Rapcsák-type metrizability tests.

A projective change with factor P (positively 1-homogeneous in y) replaces
the spray coefficients by G^i + P y^i.  The Rapcsák checks compare a given
spray S with a candidate Finsler function Fb; every horizontal operator is
built from S, never from Fb's own canonical spray.
"""
from dataclasses import dataclass, replace

import numpy as np

from . import exprlang as el
from .curvature import CurvaturePack
from .identities import ResidualEntry, ResidualReport, point_residuals
from .jets import contract
from .spraycore import PointFrame

DEFAULT_TOL = 1e-7


class ProjectiveError(ValueError):
    pass


@dataclass(frozen=True)
class ProjectiveChange:
    base: object
    factor: el.Expr
    spec: object


def _entry(id_, name, anchor, lhs, rhs, x, y, tol, skipped=False, reason=""):
    res = point_residuals(lhs, rhs)
    i = int(np.argmax(res))
    r = float(res[i])
    return ResidualEntry(id_, name, anchor, r, tol, r <= tol or skipped,
                         [float(v) for v in (*x[i], *y[i])], skipped=skipped, reason=reason)


def _euler_residual(fr, P, degree=1.0):
    lhs = contract("r,r->", fr.Y, fr.vgrad(P)).value
    return point_residuals(lhs, degree * P.value)


def factor_homogeneity_residual(spec, factor, x, y):
    fr = PointFrame(spec, x, y, e_order=3)
    P = fr.scalar_jet(factor, 1)
    return float(_euler_residual(fr, P).max())


def apply_projective_change(spec, factor, x=None, y=None, tol=DEFAULT_TOL):
    """The spray with coefficients G^i + P y^i, as a new spec of kind 'spray'.

    When sample arrays are given the factor's 1-homogeneity is checked first.
    """
    if x is not None:
        r = factor_homogeneity_residual(spec, factor, x, y)
        if not r <= tol:
            raise ProjectiveError(f"projective factor is not 1-homogeneous in y "
                                  f"(residual {r:.3e} > {tol:.1e})")
    name = f"{spec.name}+projective({el.to_string(factor)})"
    if spec.kind == "spray" and spec.derived is None:
        G = tuple(el.add(g, el.mul(factor, el.var(f"y{i + 1}"))) for i, g in enumerate(spec.G))
        new = replace(spec, name=name, G=G, source=None)
    else:
        new = replace(spec, name=name, kind="spray", F=None, G=None, source=None,
                      derived=("projective", spec, factor))
    return ProjectiveChange(spec, factor, new)


def projective_invariance_report(spec, factor, x, y, tol=DEFAULT_TOL, fd_fallback=False):
    """Transformation laws of the spray data and invariance of Douglas and Weyl tensors."""
    change = apply_projective_change(spec, factor)
    n = spec.n
    fr0 = PointFrame(spec, x, y, fd_fallback=fd_fallback)
    fr1 = PointFrame(change.spec, x, y, fd_fallback=fd_fallback)
    c0, c1 = CurvaturePack(fr0), CurvaturePack(fr1)
    P = fr0.scalar_jet(factor, 5)
    dP = fr0.vgrad(P)
    ddP = fr0.vgrad(dP)
    dddP = fr0.vgrad(ddP)
    Y = fr0.Y.value
    I = np.eye(n)[None]
    rep = ResidualReport(change.spec.name, None, x.shape[0])
    E = rep.entries
    hom = _euler_residual(fr0, P)
    i = int(np.argmax(hom))
    E.append(ResidualEntry("FACTOR-HOM", "projective factor is 1-homogeneous",
                           "projective factor homogeneity", float(hom[i]), tol, hom[i] <= tol,
                           [float(v) for v in (*x[i], *y[i])]))
    rhs31 = fr0.GJ.value + np.einsum("Nj,Ni->Nij", dP.value, Y) + P.value[:, None, None] * I
    E.append(_entry("CONNECTION-CHANGE", "connection coefficients after the change",
                    "change of the Ehresmann connection", fr1.GJ.value, rhs31, x, y, tol))
    Bb = fr1.B.value
    ddv, dddv = ddP.value, dddP.value
    law38 = (fr0.B.value + np.einsum("Njk,il->Nijkl", ddv, np.eye(n))
             + np.einsum("Njl,ik->Nijkl", ddv, np.eye(n))
             + np.einsum("Nkl,ij->Nijkl", ddv, np.eye(n))
             + np.einsum("Njkl,Ni->Nijkl", dddv, Y))
    E.append(_entry("BERWALD-CHANGE", "Berwald curvature after the change",
                    "change of the Berwald curvature", Bb, law38, x, y, tol))
    E.append(_entry("TRACE-B-CHANGE", "trace of the Berwald curvature after the change",
                    "change of the trace of the Berwald curvature", c1.trB.value,
                    c0.trB.value + (n + 1) * ddv, x, y, tol))
    E.append(_entry("DOUGLAS-INVARIANT", "Douglas curvature is unchanged",
                    "projective invariance of the Douglas curvature", c1.Douglas.value,
                    c0.Douglas.value, x, y, tol))
    E.append(_entry("WEYL0-INVARIANT", "Weyl endomorphism is unchanged",
                    "projective invariance of the Weyl endomorphism", c1.Weyl0.value,
                    c0.Weyl0.value, x, y, tol))
    E.append(_entry("WEYLW-INVARIANT", "Weyl curvature W is unchanged",
                    "projective invariance of W", c1.WeylW.value, c0.WeylW.value, x, y, tol))
    linear = float(point_residuals(ddv, 0.0).max())
    if linear <= 1e-12:
        E.append(_entry("BERWALD-LINEAR-FACTOR", "Berwald curvature is unchanged by a factor linear in y",
                        "projective invariance of the Berwald curvature", Bb, fr0.B.value,
                        x, y, tol))
    else:
        E.append(ResidualEntry("BERWALD-LINEAR-FACTOR", "Berwald curvature is unchanged by a factor "
                               "linear in y", "projective invariance of the Berwald curvature",
                               0.0, tol, True, [], skipped=True,
                               reason=f"factor is not linear in y (|d_y d_y P| ~ {linear:.2e})"))
    return rep


# -- Rapcsák ---------------------------------------------------------------------

@dataclass
class RapcsakResult:
    r1: float
    r6: float
    r1_witness: list
    r6_witness: list
    factor: object          # per-point P = S Fb / (2 Fb) or None when R1 fails
    factor_hom: float
    tol: float

    @property
    def passed(self):
        return self.r1 <= self.tol


class _Pair:
    """Jets of Fb with the horizontal structure of the given spray."""

    def __init__(self, spray_spec, finsler_spec, x, y, fd_fallback=False):
        if spray_spec.n != finsler_spec.n:
            raise ProjectiveError("spray and Finsler function live on different dimensions")
        if not finsler_spec.is_finsler:
            raise ProjectiveError("the target of a Rapcsák check must be a Finsler function")
        self.x, self.y = x, y
        self.fr = PointFrame(spray_spec, x, y, fd_fallback=fd_fallback)
        self.cp = CurvaturePack(self.fr)
        self.bar = PointFrame(finsler_spec, x, y, fd_fallback=fd_fallback)
        self.cbar = CurvaturePack(self.bar)
        fr = self.fr
        self.Fb = fr.scalar_jet(finsler_spec.F, 5)
        self.dFb = fr.vgrad(self.Fb)
        self.mu = fr.vgrad(self.dFb)
        self.SF = contract("r,r->", fr.Y, fr.xgrad(self.Fb)) - \
            contract("r,r->", fr.G, self.dFb).scale(2.0)
        self.P = self.SF * self.Fb.reciprocal().scale(0.5)


def _rapcsak(pair, tol):
    fr = pair.fr
    r1 = fr.delta(pair.Fb).scale(2.0) - fr.vgrad(pair.SF)
    res1 = point_residuals(r1.value, 0.0)
    T = fr.hgrad(pair.dFb, "d").value
    res6 = point_residuals(T, np.swapaxes(T, 1, 2))
    i, j = int(np.argmax(res1)), int(np.argmax(res6))
    w = lambda k: [float(v) for v in (*pair.x[k], *pair.y[k])]
    r1v = float(res1[i])
    fac = pair.P.value if r1v <= tol else None
    fh = float(_euler_residual(fr, pair.P).max())
    return RapcsakResult(r1v, float(res6[j]), w(i), w(j), fac, fh, tol)


def rapcsak_residual(spray_spec, finsler_spec, x, y, tol=DEFAULT_TOL, fd_fallback=False):
    """R1 and R6 residuals and, when R1 holds, the factor P = S Fb / (2 Fb)."""
    return _rapcsak(_Pair(spray_spec, finsler_spec, x, y, fd_fallback), tol)


def variationality_residual(spray_spec, finsler_spec, x, y):
    """max |delta_i Fb| with delta built from the given spray (absolute)."""
    fr = PointFrame(spray_spec, x, y, e_order=5)
    Fb = fr.scalar_jet(finsler_spec.F, 1)
    return float(np.abs(fr.delta(Fb).value).max())


def canonical_proportionality(spray_spec, finsler_spec, x, y):
    """Least-squares P with Gb - G = P y from Fb's own canonical spray, plus
    the residual of that proportionality."""
    G = PointFrame(spray_spec, x, y, e_order=3).G.value
    Gb = PointFrame(finsler_spec, x, y, e_order=3).G.value
    diff = Gb - G
    P = np.einsum("Ni,Ni->N", diff, y) / np.einsum("Ni,Ni->N", y, y)
    res = point_residuals(diff, P[:, None] * y)
    return P, float(res.max())


def _cyc(A, B):
    """Cyclic sum over (x, y, z) of A_x B_{yz}."""
    return (np.einsum("Nx,Nyz->Nxyz", A, B) + np.einsum("Ny,Nzx->Nxyz", A, B)
            + np.einsum("Nz,Nxy->Nxyz", A, B))


def necessary_condition_entries(pair, tol):
    fr, cp = pair.fr, pair.cp
    x, y = pair.x, pair.y
    Y = y
    out = []
    hmu = fr.hgrad(pair.mu, "dd")                       # [k, x, y]
    out.append(_entry("RAP-ALPHA", "dynamical derivative of the Hessian of Fb vanishes",
                      "Rapcsák necessary condition (alpha)",
                      np.einsum("Nkxy,Nk->Nxy", hmu.value, Y), 0.0, x, y, tol))
    dmu = fr.vgrad(pair.mu)                             # [x, y, z]
    hdmu = fr.hgrad(dmu, "ddd").value                   # [k, x, y, z]
    out.append(_entry("RAP-BETA", "nabla_S of the vertical derivative of mu plus h-nabla mu",
                      "Rapcsák necessary condition (beta)",
                      np.einsum("Nkxyz,Nk->Nxyz", hdmu, Y) + hmu.value, 0.0, x, y, tol))
    mu = pair.mu.value
    K = cp.K.value
    muK = np.einsum("Nay,Nax->Nxy", mu, K)
    out.append(_entry("SELF-ADJOINT", "K is self-adjoint for mu", "self-adjointness of K",
                      muK, np.swapaxes(muK, 1, 2), x, y, tol))
    R = cp.R.value
    t = np.einsum("Naz,Naxy->Nxyz", mu, R)
    pe = t + np.einsum("Nyzx->Nxyz", t) + np.einsum("Nzxy->Nxyz", t)
    out.append(_entry("PE", "cyclic sum of mu(R(X,Y),Z) vanishes", "cyclic curvature condition",
                      pe, 0.0, x, y, tol))
    hm = hmu.value
    out.append(_entry("HMU-SYM", "h-nabla mu is totally symmetric",
                      "total symmetry of h-nabla of the Hessian of Fb",
                      np.stack([np.swapaxes(hm, 1, 2), np.swapaxes(hm, 1, 3)], 1),
                      np.stack([hm, hm], 1), x, y, tol))
    if pair.bar.n == fr.n:
        Cb = pair.cbar.Cartan
        hC = fr.hgrad(Cb, "ddd").value
        SC = np.einsum("Nkxyz,Nk->Nxyz", hC, Y)
        Pf = pair.P.value
        out.append(_entry("RAP-N", "nabla_S of the Cartan tensor of Fb is P C + Landsberg of Fb",
                          "Cartan tensor under a projective relation", SC,
                          Pf[:, None, None, None] * Cb.value + pair.cbar.P_land.value, x, y, tol))
        lam = contract("i,->i", pair.dFb, pair.Fb.reciprocal())
        Slam = np.einsum("Nkx,Nk->Nx", fr.hgrad(lam, "d").value, Y)
        Fbv = pair.Fb.value[:, None, None, None]
        rhs = _cyc(Slam, mu) + (2.0 / Fbv) * (Pf[:, None, None, None] * Cb.value
                                              - pair.cbar.P_land.value)
        out.append(_entry("RAP-DELTA", "h-nabla mu through nabla_S lambda, Cartan and Landsberg",
                          "horizontal derivative of the Hessian of Fb", hm, rhs, x, y, tol))
    return out


def necessary_condition_residuals(spray_spec, finsler_spec, x, y, tol=1e-6, fd_fallback=False):
    pair = _Pair(spray_spec, finsler_spec, x, y, fd_fallback)
    return {e.id: e for e in necessary_condition_entries(pair, tol)}


def rapcsak_report(spray_spec, finsler_spec, x, y, tol=DEFAULT_TOL, fd_fallback=False):
    """Everything the rapcsak command prints: R1, R6, the factor, variationality
    and the necessary conditions (judged at 10 tol, and only when R1 holds)."""
    pair = _Pair(spray_spec, finsler_spec, x, y, fd_fallback)
    rr = _rapcsak(pair, tol)
    rep = ResidualReport(f"{spray_spec.name} -> {finsler_spec.name}", None, x.shape[0])
    rep.entries.append(ResidualEntry("R1", "Rapcsák equation 2 delta Fb = d_y(S Fb)",
                                     "Rapcsák equation (R1)", rr.r1, tol, rr.passed,
                                     rr.r1_witness))
    rep.entries.append(ResidualEntry("R6", "h-nabla of the y-gradient of Fb is symmetric",
                                     "Rapcsák equation (R6)", rr.r6, tol, rr.r6 <= tol,
                                     rr.r6_witness))
    var = variationality_residual(spray_spec, finsler_spec, x, y)
    rep.entries.append(ResidualEntry(
        "VARIATIONAL", "the spray is the canonical spray of Fb", "variationality criterion",
        var, tol, var <= tol, [],
        reason="" if var <= tol else "verdict: not the canonical spray of Fb"))
    for e in necessary_condition_entries(pair, 10 * tol):
        if not rr.passed:
            e.skipped = True
            e.passed = True
            e.reason = "R1 fails, so the necessary conditions need not hold"
        rep.entries.append(e)
    extra = {"factor_homogeneity": rr.factor_hom}
    if rr.factor is not None:
        Po, prop = canonical_proportionality(spray_spec, finsler_spec, x, y)
        extra["factor_mean"] = float(np.mean(rr.factor))
        extra["factor_vs_canonical"] = float(point_residuals(rr.factor, Po).max())
        extra["canonical_proportionality"] = prop
        extra["factor_samples"] = [float(v) for v in rr.factor]
    return rep, rr, extra
