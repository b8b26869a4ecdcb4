"""Curvature tensors of a spray (and of a Finsler function) from a PointFrame.

Index conventions, fixed once for the whole package:

    B[i,j,k,l]   = d^3 G^i / dy^j dy^k dy^l
    K[i,j]       = Jacobi endomorphism, K^i_j y^j = 0
    R[i,j,k]     = curvature, R^i_{jk} y^k = K^i_j
    H[i,j,k,l]   = d R^i_{jk} / dy^l   (so R = H contracted with y in the last slot)
    P[j,k,l]     = Landsberg tensor -1/2 h-nabla g
    Sigma[x,y,z,u] = 2 (hP[x,y,z,u] - hP[y,x,z,u])
    Cartan[i,j,k] = 1/2 d g_ij / dy^k
    Douglas[i,j,k,l], Weyl0[i,j], WeylW[i,j,k], WeylWstar[i,j,k,l] = d WeylW[i,j,k] / dy^l

Traces contract the upper index with the first lower one.  Derivative
tensors (dH, hB, hR, hP) keep the upper index first and the derivative slot
second.
"""
from functools import cached_property

import numpy as np

from .jets import Jet, contract, trace_jet
from .spraycore import ComponentTensor

SIGNATURES = {
    "B": "uddd", "K": "ud", "R": "udd", "H": "uddd", "P_land": "ddd", "Sigma": "dddd",
    "Cartan": "ddd", "CartanVec": "u", "trCartan": "d", "Douglas": "uddd", "Weyl0": "ud",
    "WeylW": "udd", "WeylWstar": "uddd", "eta": "dd", "theta": "d", "ell": "u",
    "proj_p": "ud", "trB": "dd", "trK": "", "trR": "d", "scalar_curvature": "",
    "g": "dd", "g_inv": "uu", "G": "u", "GJ": "ud", "GC": "udd",
}
FINSLER_ONLY = {"P_land", "Sigma", "Cartan", "CartanVec", "trCartan", "eta", "theta", "ell",
                "proj_p", "scalar_curvature", "g", "g_inv"}


# denominators below this are treated as "analytically zero" when checking routes
CONSISTENCY_FLOOR = 1e-3


class ConsistencyError(Exception):
    """Two independent routes to the same tensor disagree."""


def trace_contract(t, signature):
    """(tr t)_{j..} = t^k_{k j..} for a jet or a plain batched array."""
    if not signature.startswith("ud"):
        raise ValueError(f"trace needs one upper then lower indices, got {signature!r}")
    if any(c != "d" for c in signature[1:]):
        raise ValueError(f"trace needs exactly one upper index, got {signature!r}")
    rest = "bcdefgh"[: len(signature) - 2]
    if isinstance(t, Jet):
        return trace_jet(f"aa{rest}->{rest}", t)
    return np.einsum(f"Zaa{rest}->Z{rest}", np.asarray(t))


def relative_gap(a, b, floor=1e-6):
    """max|a-b| / max(max|a|, max|b|, floor) over all samples and components."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), floor)
    return float(np.abs(a - b).max(initial=0.0) / scale)


def _eye_jet(space, N, n, order):
    return Jet.constant(space, np.broadcast_to(np.eye(n), (N, n, n)), order)


class CurvaturePack:
    """Lazily computed curvature data at the points of one PointFrame."""

    def __init__(self, frame):
        self.fr = frame
        self.n = frame.n
        self.N = frame.N

    @property
    def is_finsler(self):
        return self.fr.is_finsler

    def _eye(self, order):
        return _eye_jet(self.fr.space, self.N, self.n, order)

    # -- spray curvature ---------------------------------------------------
    @cached_property
    def B(self):
        return self.fr.B

    @cached_property
    def trB(self):
        return trace_contract(self.B, "uddd")

    @cached_property
    def K(self):
        fr = self.fr
        G, GJ, GC, Y = fr.G, fr.GJ, fr.GC, fr.Y
        k1 = fr.xgrad(G).transpose(1, 0).scale(2.0)
        k2 = contract("r,rij->ij", Y, fr.xgrad(GJ))
        k3 = contract("ijr,r->ij", GC, G).scale(2.0)
        k4 = contract("ir,rj->ij", GJ, GJ)
        return k1 - k2 + k3 - k4

    @cached_property
    def dK(self):
        return self.fr.vgrad(self.K)             # [k, i, j]

    @cached_property
    def R(self):
        dK = self.dK
        return (dK.transpose(1, 2, 0) - dK.transpose(1, 0, 2)).scale(1.0 / 3.0)

    @cached_property
    def R_commutator(self):
        """Independent route: R^i_{jk} = delta_j G^i_k - delta_k G^i_j."""
        dG = self.fr.delta(self.fr.GJ)          # [j, i, k]
        return dG.transpose(1, 0, 2) - dG.transpose(1, 2, 0)

    @cached_property
    def K_from_R(self):
        return contract("ijk,k->ij", self.R, self.fr.Y)

    @cached_property
    def H(self):
        return self.fr.vgrad(self.R).transpose(1, 2, 3, 0)

    @cached_property
    def H_formula(self):
        """delta_j G^i_{kl} - delta_k G^i_{jl} + G^r_{kl} G^i_{jr} - G^r_{jl} G^i_{kr}."""
        fr = self.fr
        dGC = fr.delta(fr.GC)                   # [j, i, k, l]
        a = dGC.transpose(1, 0, 2, 3) - dGC.transpose(1, 2, 0, 3)
        q = contract("rkl,ijr->ijkl", fr.GC, fr.GC)
        return a + q - q.transpose(0, 2, 1, 3)

    @cached_property
    def dH(self):
        """dH[i, x, j, k, l] = d H^i_{jkl} / dy^x."""
        return self.fr.vgrad(self.H).moveaxis(0, 1)

    @cached_property
    def hB(self):
        """hB[i, x, j, k, l] = (h-nabla B) with the derivative slot x."""
        return self.fr.hgrad(self.B, "uddd").moveaxis(0, 1)

    @cached_property
    def hR(self):
        return self.fr.hgrad(self.R, "udd").moveaxis(0, 1)

    @cached_property
    def trK(self):
        return trace_contract(self.K, "ud")

    @cached_property
    def trR(self):
        return trace_contract(self.R, "udd")

    @cached_property
    def Douglas(self):
        n = self.n
        B, trB = self.B, self.trB
        Y = self.fr.Y
        dtr = self.fr.vgrad(trB)                # [j, k, l]
        I = self._eye(B.order)
        t1 = contract("jk,il->ijkl", trB, I)
        t2 = contract("kl,ij->ijkl", trB, I)
        t3 = contract("lj,ik->ijkl", trB, I)
        t4 = contract("i,jkl->ijkl", Y, dtr)
        return B - (t1 + t2 + t3 + t4).scale(1.0 / (n + 1))

    @cached_property
    def Khat(self):
        return self.trK.scale(1.0 / (self.n - 1))

    @cached_property
    def Weyl0(self):
        n = self.n
        K, Khat = self.K, self.Khat
        dKhat = self.fr.vgrad(Khat)             # [j]
        divK = trace_jet("aaj->j", self.dK)      # d_{y^r} K^r_j
        corr = contract("j,i->ij", dKhat - divK, self.fr.Y).scale(1.0 / (n + 1))
        return K - contract(",ij->ij", Khat, self._eye(K.order)) + corr

    @cached_property
    def WeylW(self):
        dW = self.fr.vgrad(self.Weyl0)          # [k, i, j]
        return (dW.transpose(1, 2, 0) - dW.transpose(1, 0, 2)).scale(1.0 / 3.0)

    @cached_property
    def WeylWstar(self):
        return self.fr.vgrad(self.WeylW).transpose(1, 2, 3, 0)

    # -- Finsler data ------------------------------------------------------
    def _need_finsler(self):
        if not self.is_finsler:
            raise ValueError("this tensor needs a Finsler function")

    @cached_property
    def g(self):
        self._need_finsler()
        return self.fr.g

    @cached_property
    def g_inv(self):
        self._need_finsler()
        return self.fr.ginv

    @cached_property
    def F(self):
        self._need_finsler()
        return self.fr.F

    @cached_property
    def E(self):
        self._need_finsler()
        return self.fr.E

    @cached_property
    def theta(self):
        self._need_finsler()
        return self.fr.theta

    @cached_property
    def dF(self):
        return self.fr.vgrad(self.F)

    @cached_property
    def ell(self):
        return contract("i,->i", self.fr.Y, self.F.reciprocal())

    @cached_property
    def eta(self):
        return self.g - contract("i,j->ij", self.dF, self.dF)

    @cached_property
    def proj_p(self):
        """p^i_j = delta^i_j - y^i F_j / F."""
        dF = self.dF
        return self._eye(dF.order) - contract("i,j->ij", self.ell, dF)

    @cached_property
    def hg(self):
        return self.fr.hgrad(self.g, "dd")

    @cached_property
    def P_land(self):
        return self.hg.scale(-0.5)

    @cached_property
    def P_from_B(self):
        return contract("i,ijkl->jkl", self.theta, self.B).scale(-0.5)

    @cached_property
    def hP(self):
        return self.fr.hgrad(self.P_land, "ddd")

    @cached_property
    def Sigma(self):
        hP = self.hP
        return (hP - hP.transpose(1, 0, 2, 3)).scale(2.0)

    @cached_property
    def Sigma_from_H(self):
        """Stretch tensor through theta(dH): Sigma[z,y,x,u] = theta_i dH[i,x,y,z,u]."""
        t = contract("i,ixyzu->xyzu", self.theta, self.dH)
        return t.transpose(2, 1, 0, 3)

    @cached_property
    def Cartan(self):
        return self.fr.vgrad(self.g).scale(0.5).transpose(1, 2, 0)

    @cached_property
    def trCartan(self):
        return contract("kl,klj->j", self.g_inv, self.Cartan)

    @cached_property
    def CartanVec(self):
        return contract("ij,j->i", self.g_inv, self.trCartan)

    @cached_property
    def scalar_curvature_raw(self):
        """trK / ((n-1) F^2); meaningful when the spray is isotropic."""
        return self.Khat * self.F.power(-2)

    # -- plain values --------------------------------------------------------
    def value(self, name):
        if name == "scalar_curvature":
            return np.array(self.scalar_curvature_raw.value)
        attr = {"g_inv": "g_inv", "G": None, "GJ": None, "GC": None}.get(name, name)
        if attr is None:
            return np.array(getattr(self.fr, name).value)
        return np.array(getattr(self, attr).value)

    def tensor(self, name):
        return ComponentTensor(name, SIGNATURES[name], self.value(name), self.fr.x, self.fr.y)

    def available(self):
        return [k for k in SIGNATURES if self.is_finsler or k not in FINSLER_ONLY]

    # -- dual routes ---------------------------------------------------------
    def dual_routes(self, floor=1e-6):
        """Relative gaps between independently computed versions of K, R, P and Sigma.

        `floor` bounds the denominator from below so that tensors which vanish
        analytically compare their roundoff absolutely.
        """
        pairs = {"K": (self.K, self.K_from_R), "R": (self.R, self.R_commutator),
                 "H": (self.H, self.H_formula)}
        if self.is_finsler:
            pairs["P"] = (self.P_land, self.P_from_B)
            pairs["Sigma"] = (self.Sigma, self.Sigma_from_H)
        return {k: relative_gap(a.value, b.value, floor) for k, (a, b) in pairs.items()}

    def check_consistency(self, tol=1e-6, floor=CONSISTENCY_FLOOR):
        gaps = self.dual_routes(floor)
        if self.fr.fd_used:
            tol = max(tol, 1e-4)
        bad = {k: v for k, v in gaps.items() if not v <= tol}
        if bad:
            raise ConsistencyError("independent routes disagree: " + ", ".join(
                f"{k} (relative gap {v:.3e})" for k, v in bad.items()))
        return gaps
