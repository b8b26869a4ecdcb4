"""Metric, canonical spray and horizontal derivatives at batches of tangent vectors.

Everything is carried as Taylor jets in the 2n variables (x1..xn, y1..yn)
around each sample point.  For a Finsler function the energy E = F^2/2 is
expanded to order 7 from its symbolic partial table; the metric, its
inverse and the spray coefficients follow by jet arithmetic, so every
derivative of G needed downstream is exact up to roundoff.

Tensor index layout: components are numpy axes after the batch axis, upper
and lower indices in the written order (G^i_{jk} -> [i, j, k]).  The
horizontal and vertical derivative operators put the new derivative slot
FIRST.
"""
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from . import exprlang as el
from .jets import Jet, contract, jet_space

ORDER = 7
SYMBOLIC_G_ORDER = ORDER - 2
FD_REL_STEP = 1e-3
FD_TOL = 1e-4
_L = "abcdefghijklmnopqrstuvw"


class SingularMetricError(el.ExprError):
    pass


class OrderCapError(el.ExprError):
    pass


@dataclass(frozen=True)
class ComponentTensor:
    name: str
    signature: str
    data: np.ndarray
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        n = self.x.shape[-1]
        if self.data.shape[1:] != (n,) * len(self.signature):
            raise ValueError(f"{self.name}: shape {self.data.shape} does not match "
                             f"signature {self.signature!r}")


@lru_cache(maxsize=64)
def cached_table(expr, n, order, node_cap=el.DEFAULT_NODE_CAP):
    return el.PartialTable(expr, n, order, node_cap=node_cap)


def energy_expr(F):
    return el.mul(el.const(0.5), el.power(F, el.const(2.0)))


def _table_partials(table, x, y, N):
    keys, vals = table.evaluate((x, y))
    return np.stack([np.broadcast_to(np.asarray(v, dtype=float), (N,)) for v in vals],
                    axis=-1)


def table_jet(expr, n, x, y, order, node_cap=el.DEFAULT_NODE_CAP):
    """Jet of an expression from its symbolic partial table."""
    sp = jet_space(2 * n, ORDER)
    tab = cached_table(expr, n, order, node_cap)
    return Jet.from_partials(sp, _table_partials(tab, x, y, x.shape[0]), order)


def _fd_step(x, y, v, n):
    if v < n:
        return FD_REL_STEP * np.maximum(1.0, np.abs(x[:, v]))
    return FD_REL_STEP * np.linalg.norm(y, axis=1)


def fd_extended_partials(expr, n, x, y, node_cap=el.DEFAULT_NODE_CAP):
    """Partials of `expr` to order 7: orders <= 5 symbolic, 6 and 7 by
    Richardson-extrapolated central differences of the order-5 entries."""
    sp = jet_space(2 * n, ORDER)
    tab = cached_table(expr, n, ORDER - 2, node_cap)
    N = x.shape[0]
    c5 = sp.size(ORDER - 2)
    base = _table_partials(tab, x, y, N)
    out = np.zeros((N, sp.size(ORDER)))
    out[:, :c5] = base
    m = 2 * n
    steps = [_fd_step(x, y, v, n) for v in range(m)]
    cache = {}

    def at(shift):
        key = tuple(shift)
        if key not in cache:
            u = np.concatenate([x, y], axis=1)
            for v, s in enumerate(shift):
                if s:
                    u[:, v] += s * steps[v]
            cache[key] = _table_partials(tab, u[:, :n], u[:, n:], N)
        return cache[key]

    def unit(v, s):
        e = [0.0] * m
        e[v] = s
        return e

    def first(v, scale):
        return (at(unit(v, scale)) - at(unit(v, -scale))) / (2 * scale * steps[v][:, None])

    def second(v, w, scale):
        if v == w:
            return ((at(unit(v, scale)) - 2 * base + at(unit(v, -scale)))
                    / (scale * steps[v][:, None]) ** 2)
        acc = 0.0
        for sv in (1, -1):
            for sw in (1, -1):
                e = [0.0] * m
                e[v] = sv * scale
                e[w] = sw * scale
                acc = acc + sv * sw * at(e)
        return acc / (4 * scale * scale * (steps[v] * steps[w])[:, None])

    d1 = {v: (4 * first(v, 0.5) - first(v, 1.0)) / 3 for v in range(m)}
    d2 = {}
    for k in range(c5, sp.size(ORDER)):
        alpha = sp.monos[k]
        nz = [v for v in range(m) for _ in range(alpha[v])]
        if sum(alpha) == ORDER - 1:
            v = nz[-1]
            parent = list(alpha)
            parent[v] -= 1
            out[:, k] = d1[v][:, sp.index[tuple(parent)]]
        else:
            v, w = nz[-2], nz[-1]
            if (v, w) not in d2:
                d2[v, w] = (4 * second(v, w, 0.5) - second(v, w, 1.0)) / 3
            parent = list(alpha)
            parent[v] -= 1
            parent[w] -= 1
            out[:, k] = d2[v, w][:, sp.index[tuple(parent)]]
    return out


def inverse_jet(M):
    """Inverse of a matrix-valued jet by the Neumann series around its value."""
    m0 = M.value
    det = np.linalg.det(m0)
    if np.any(np.abs(det) < 1e-12):
        raise SingularMetricError("singular metric: |det g| < 1e-12")
    inv0 = np.linalg.inv(m0)
    Inv0 = Jet.constant(M.space, inv0, M.order)
    delta = M.nilpotent()
    step = contract("ab,bc->ac", Inv0, delta).scale(-1.0)
    out = Inv0
    term = Inv0
    for _ in range(M.order):
        term = contract("ab,bc->ac", step, term)
        out = out + term
    return out


class PointFrame:
    """Jets of the geometric data of a spec at N tangent vectors (x, y).

    fd_fallback: use finite differences for the 6th and 7th partials of E
    (forced when True; engaged automatically when the symbolic table
    exceeds the node cap).
    """

    def __init__(self, spec, x, y, fd_fallback=False, node_cap=el.DEFAULT_NODE_CAP,
                 e_order=ORDER):
        self.spec = spec
        self.e_order = e_order
        self.x = np.atleast_2d(np.asarray(x, dtype=float))
        self.y = np.atleast_2d(np.asarray(y, dtype=float))
        self.n = spec.n
        self.N = self.x.shape[0]
        self.space = jet_space(2 * self.n, ORDER)
        self.xv = list(range(self.n))
        self.yv = list(range(self.n, 2 * self.n))
        self.node_cap = node_cap
        self.fd_used = False
        self._force_fd = fd_fallback
        if np.any(np.linalg.norm(self.y, axis=1) == 0):
            raise ValueError("tangent vectors must be non-zero")

    # -- coordinates -----------------------------------------------------
    @cached_property
    def Y(self):
        cols = [Jet.coordinate(self.space, self.y[:, i], self.n + i) for i in range(self.n)]
        return Jet(self.space, np.stack([c.data for c in cols], axis=1), ORDER)

    @property
    def is_finsler(self):
        return self.spec.kind == "finsler"

    @property
    def g_order(self):
        return self.e_order - 2

    # -- energy and metric -----------------------------------------------
    @cached_property
    def E(self):
        if not self.is_finsler:
            raise ValueError("energy is only defined for finsler specs")
        Eexpr = energy_expr(self.spec.F)
        if self.e_order < ORDER:
            return table_jet(Eexpr, self.n, self.x, self.y, self.e_order, self.node_cap)
        if not self._force_fd:
            try:
                return table_jet(Eexpr, self.n, self.x, self.y, ORDER, self.node_cap)
            except el.NodeCapError:
                pass
        self.fd_used = True
        parts = fd_extended_partials(Eexpr, self.n, self.x, self.y, self.node_cap)
        return Jet.from_partials(self.space, parts, ORDER)

    @cached_property
    def F(self):
        sign = np.sign(el.evaluate(self.spec.F, (self.x, self.y)))
        sign = np.where(sign == 0, 1.0, sign)
        return self.E.scale(2.0).sqrt().scale(sign)

    @cached_property
    def dE_y(self):
        return self.E.grad(self.yv)

    @cached_property
    def g(self):
        return self.dE_y.grad(self.yv)

    @cached_property
    def ginv(self):
        return inverse_jet(self.g)

    @cached_property
    def theta(self):
        """Hilbert form components g_ij y^j (as the y-gradient of E)."""
        return self.dE_y

    # -- spray -----------------------------------------------------------
    @cached_property
    def G(self):
        spec = self.spec
        if spec.derived is not None:
            kind, base, factor = spec.derived
            if kind != "projective":
                raise ValueError(f"unknown derived spray {kind!r}")
            bf = PointFrame(base, self.x, self.y, self._force_fd, self.node_cap, self.e_order)
            Gb = bf.G
            self.fd_used = self.fd_used or bf.fd_used
            P = table_jet(factor, self.n, self.x, self.y, self.g_order, self.node_cap)
            return Gb + contract(",i->i", P, self.Y)
        if spec.kind == "spray":
            cols = [table_jet(g, self.n, self.x, self.y, self.g_order, self.node_cap)
                    for g in spec.G]
            return Jet(self.space, np.stack([c.data for c in cols], axis=1), self.g_order)
        E = self.E
        Ex = E.grad(self.xv)
        Exy = self.dE_y.grad(self.xv)          # [r, j] = d_{x^r} d_{y^j} E
        v = contract("rj,r->j", Exy, self.Y) - Ex
        return contract("ij,j->i", self.ginv, v).scale(0.5)

    @cached_property
    def GJ(self):
        """G^i_j = dG^i/dy^j as [i, j]."""
        return self.G.grad(self.yv).moveaxis(0, 1)

    @cached_property
    def GC(self):
        """G^i_{jk} as [i, j, k]."""
        return self.GJ.grad(self.yv).moveaxis(0, 2)

    @cached_property
    def B(self):
        """Berwald curvature B^i_{jkl} as [i, j, k, l]."""
        return self.GC.grad(self.yv).moveaxis(0, 3)

    # -- operators -------------------------------------------------------
    def vgrad(self, T):
        """Vertical derivative, new slot first."""
        return T.grad(self.yv)

    def xgrad(self, T):
        return T.grad(self.xv)

    def delta(self, T):
        """delta_k T = d_{x^k} T - G^r_k d_{y^r} T, new slot first."""
        rest = _L[: len(T.tshape)]
        corr = contract(f"rk,r{rest}->k{rest}", self.GJ, T.grad(self.yv))
        return T.grad(self.xv) - corr

    def hgrad(self, T, signature):
        """Berwald h-derivative of a tensor with index roles `signature`."""
        if len(signature) != len(T.tshape):
            raise ValueError("signature does not match tensor rank")
        res = self.delta(T)
        idx = _L[: len(signature)]
        for a, role in enumerate(signature):
            src = idx[:a] + "r" + idx[a + 1:]
            if role == "d":
                res = res - contract(f"rk{idx[a]},{src}->k{idx}", self.GC, T)
            elif role == "u":
                res = res + contract(f"{idx[a]}kr,{src}->k{idx}", self.GC, T)
            else:
                raise ValueError(f"bad index role {role!r}")
        return res

    def scalar_jet(self, expr, order=SYMBOLIC_G_ORDER):
        return table_jet(expr, self.n, self.x, self.y, order, self.node_cap)


# -- module-level conveniences -------------------------------------------------

def _ct(name, sig, jet, fr):
    return ComponentTensor(name, sig, np.array(jet.value), fr.x, fr.y)


def metric_at(spec, x, y):
    fr = PointFrame(spec, x, y)
    g = fr.g.truncate(0)
    return _ct("g", "dd", g, fr), _ct("g_inv", "uu", fr.ginv.truncate(0), fr)


def spray_coefficients(spec, x, y):
    fr = PointFrame(spec, x, y)
    return _ct("G", "u", fr.G, fr)


def spray_partials(spec, x, y, x_order, y_order, fd_fallback=False):
    """Mixed partials d^a_x d^b_y G^i as [i, x-slots..., y-slots...].

    Total orders above SYMBOLIC_G_ORDER need fd_fallback: the excess
    derivatives are taken by Richardson central differences of the
    symbolic ones.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if x_order + y_order > SYMBOLIC_G_ORDER:
        if not fd_fallback:
            raise OrderCapError(f"spray partials of total order {x_order + y_order} exceed "
                                f"the symbolic cap {SYMBOLIC_G_ORDER}")
        return _fd_spray_partials(spec, x, y, x_order, y_order)
    fr = PointFrame(spec, x, y)
    T = fr.G
    for _ in range(y_order):
        T = T.grad(fr.yv).moveaxis(0, len(T.tshape))
    for k in range(x_order):
        T = T.grad(fr.xv).moveaxis(0, 1 + k)
    return _ct(f"G_x{x_order}_y{y_order}", "u" + "d" * (x_order + y_order), T, fr)


def _fd_spray_partials(spec, x, y, x_order, y_order):
    n = spec.n
    in_y = y_order > 0
    lower = (x_order, y_order - 1) if in_y else (x_order - 1, y_order)
    cols = []
    for v in range(n):
        var = n + v if in_y else v
        h = _fd_step(x, y, var, n)[:, None]
        e = np.zeros((1, n))
        e[0, v] = 1.0

        def at(s):
            xs, ys = (x, y + s * h * e) if in_y else (x + s * h * e, y)
            return spray_partials(spec, xs, ys, *lower, fd_fallback=True).data

        def central(s):
            d = (at(s) - at(-s)) / (2 * s)
            return d / h.reshape((-1,) + (1,) * (d.ndim - 1))

        cols.append((4 * central(0.5) - central(1.0)) / 3)
    data = np.stack(cols, axis=-1 if in_y else 2)
    return ComponentTensor(f"G_x{x_order}_y{y_order}", "u" + "d" * (x_order + y_order),
                           data, x, y)


def horizontal_partial(spec, x, y, field):
    """(delta_i f) at the points for a scalar expression f."""
    fr = PointFrame(spec, x, y)
    f = fr.scalar_jet(field, 1)
    return _ct("delta_f", "d", fr.delta(f), fr)
