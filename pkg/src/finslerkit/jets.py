"""Truncated multivariate Taylor jets, batched over sample points.

A jet of order d in m variables stores the Taylor coefficients
c_a = (d^a f)(p) / a!  for every multi-index |a| <= d.  Arrays have shape
(N, *tensor_shape, C) where N is the batch of base points and C the number of
coefficients; tensor contractions run over the middle axes.
"""
from functools import lru_cache
from math import comb, factorial

import numpy as np

from . import exprlang as el

_LETTERS = "abcdefghijklmnopqrstuvwxyz"


class JetSpace:
    """Monomial bookkeeping for jets in `nvars` variables up to `order`."""

    def __init__(self, nvars, order):
        self.nvars = nvars
        self.order = order
        self.monos = el.multi_indices(nvars, order)
        self.index = {a: i for i, a in enumerate(self.monos)}
        self.degree = np.array([sum(a) for a in self.monos])
        self.fact = np.array([np.prod([factorial(k) for k in a]) for a in self.monos],
                             dtype=float)
        self._build_products()
        self._build_derivatives()

    def size(self, d):
        return comb(d + self.nvars, self.nvars)

    def _build_products(self):
        ii, jj, kk = [], [], []
        for i, a in enumerate(self.monos):
            rest = self.order - self.degree[i]
            for j in range(self.size(rest)):
                b = self.monos[j]
                ii.append(i)
                jj.append(j)
                kk.append(self.index[tuple(x + y for x, y in zip(a, b))])
        kk = np.array(kk)
        # group pairs by output monomial; outputs are graded, so the pairs
        # feeding every output of degree <= d form a prefix
        order = np.argsort(kk, kind="stable")
        self.pi = np.array(ii)[order]
        self.pj = np.array(jj)[order]
        kk = kk[order]
        self.starts = np.searchsorted(kk, np.arange(len(self.monos)))
        self.npairs = np.array([np.searchsorted(kk, self.size(d))
                                for d in range(self.order + 1)])

    def _build_derivatives(self):
        self.dsrc = []
        self.dfac = []
        for v in range(self.nvars):
            src, fac = [], []
            for a in self.monos[: self.size(self.order - 1) if self.order else 0]:
                b = list(a)
                b[v] += 1
                src.append(self.index[tuple(b)])
                fac.append(b[v])
            self.dsrc.append(np.array(src, dtype=int))
            self.dfac.append(np.array(fac, dtype=float))


@lru_cache(maxsize=None)
def jet_space(nvars, order):
    return JetSpace(nvars, order)


class Jet:
    """A batched tensor-valued jet: data has shape (N, *tshape, size(order))."""

    __array_priority__ = 100

    def __init__(self, space, data, order):
        self.space = space
        self.order = order
        self.data = np.asarray(data, dtype=float)
        assert self.data.shape[-1] == space.size(order)

    # -- construction ----------------------------------------------------
    @classmethod
    def constant(cls, space, values, order=None):
        order = space.order if order is None else order
        values = np.asarray(values, dtype=float)
        data = np.zeros(values.shape + (space.size(order),))
        data[..., 0] = values
        return cls(space, data, order)

    @classmethod
    def coordinate(cls, space, values, v, order=None):
        """Jet of the v-th coordinate function based at `values` (shape (N,))."""
        j = cls.constant(space, values, order)
        if j.order >= 1:
            e = [0] * space.nvars
            e[v] = 1
            j.data[..., space.index[tuple(e)]] = 1.0
        return j

    @classmethod
    def from_partials(cls, space, partials, order):
        """From an array (..., C) of plain partial derivatives."""
        c = space.size(order)
        return cls(space, np.asarray(partials)[..., :c] / space.fact[:c], order)

    # -- basic access ----------------------------------------------------
    @property
    def tshape(self):
        return self.data.shape[1:-1]

    @property
    def value(self):
        return self.data[..., 0]

    def truncate(self, order):
        if order > self.order:
            raise ValueError("cannot raise jet order")
        return Jet(self.space, self.data[..., : self.space.size(order)], order)

    def nilpotent(self):
        """Copy with the constant term removed."""
        data = self.data.copy()
        data[..., 0] = 0.0
        return Jet(self.space, data, self.order)

    def partials(self):
        """Plain partial derivatives (..., C) at the base points."""
        return self.data * self.space.fact[: self.data.shape[-1]]

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Jet(self.space, self.data[(slice(None),) + idx + (Ellipsis,)], self.order)

    # -- linear structure ------------------------------------------------
    def _align(self, other):
        if isinstance(other, Jet):
            d = min(self.order, other.order)
            c = self.space.size(d)
            return self.data[..., :c], other.data[..., :c], d
        c = self.data.shape[-1]
        od = np.zeros(np.shape(other) + (c,))
        od[..., 0] = other
        return self.data, od, self.order

    def __add__(self, other):
        a, b, d = self._align(other)
        return Jet(self.space, a + b, d)

    __radd__ = __add__

    def __sub__(self, other):
        a, b, d = self._align(other)
        return Jet(self.space, a - b, d)

    def __rsub__(self, other):
        a, b, d = self._align(other)
        return Jet(self.space, b - a, d)

    def __neg__(self):
        return Jet(self.space, -self.data, self.order)

    def scale(self, s):
        """Multiply by plain numbers s (broadcast over N and tensor axes)."""
        s = np.asarray(s, dtype=float)
        return Jet(self.space, self.data * s[..., None], self.order)

    def __mul__(self, other):
        if isinstance(other, Jet):
            if self.tshape or other.tshape:
                raise ValueError("use contract() for tensor-valued jets")
            return contract("", self, other)
        return self.scale(other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return self.scale(1.0 / np.asarray(other, dtype=float))

    def __rtruediv__(self, other):
        return self.reciprocal().scale(other)

    # -- differentiation -------------------------------------------------
    def d(self, v):
        """Partial derivative in variable v; the order drops by one."""
        if self.order == 0:
            raise ValueError("jet order exhausted")
        c = self.space.size(self.order - 1)
        src = self.space.dsrc[v][:c]
        fac = self.space.dfac[v][:c]
        return Jet(self.space, self.data[..., src] * fac, self.order - 1)

    def grad(self, vars_):
        """Derivatives in the listed variables, stacked as a new FIRST tensor axis."""
        parts = [self.d(v).data for v in vars_]
        return Jet(self.space, np.stack(parts, axis=1), self.order - 1)

    def transpose(self, *axes):
        """Permute tensor axes (given as a permutation of tensor slots)."""
        perm = (0,) + tuple(a + 1 for a in axes) + (self.data.ndim - 1,)
        return Jet(self.space, self.data.transpose(perm), self.order)

    def moveaxis(self, src, dst):
        return Jet(self.space, np.moveaxis(self.data, src + 1, dst + 1), self.order)

    # -- nonlinear -------------------------------------------------------
    def compose(self, coeffs_fn):
        """f(self) for elementwise f given by its univariate Taylor coefficients.

        coeffs_fn(c0, d) must return an array (d+1, *c0.shape) with the
        coefficients f^(k)(c0)/k!.
        """
        d = self.order
        c0 = self.data[..., 0]
        coef = coeffs_fn(c0, d)
        h = Jet(self.space, self.data.copy(), d)
        h.data[..., 0] = 0.0
        out = Jet.constant(self.space, coef[d], d)
        for k in range(d - 1, -1, -1):
            out = multiply(out, h)
            out.data[..., 0] += coef[k]
        return out

    def reciprocal(self):
        c0 = self.data[..., 0]
        if np.any(c0 == 0):
            raise el.DomainError("division by a jet with zero value")
        return self.compose(_pow_coeffs(-1.0))

    def sqrt(self):
        if np.any(self.data[..., 0] <= 0):
            raise el.DomainError("sqrt of a non-positive jet")
        return self.compose(_pow_coeffs(0.5))

    def power(self, a):
        a = float(a)
        if a.is_integer():
            k = int(a)
            base = self if k >= 0 else self.reciprocal()
            return _int_power(base, abs(k))
        if np.any(self.data[..., 0] <= 0):
            raise el.DomainError("non-integer power of a non-positive jet")
        return self.compose(_pow_coeffs(a))


def _int_power(j, k):
    out = Jet.constant(j.space, np.ones(j.data.shape[:-1]), j.order)
    base = j
    while k:
        if k & 1:
            out = multiply(out, base)
        k >>= 1
        if k:
            base = multiply(base, base)
    return out


def multiply(a, b):
    """Elementwise product of two jets (tensor axes broadcast)."""
    sp = a.space
    d = min(a.order, b.order)
    p = sp.npairs[d]
    prod = a.data[..., sp.pi[:p]] * b.data[..., sp.pj[:p]]
    return Jet(sp, np.add.reduceat(prod, sp.starts[: sp.size(d)], axis=-1), d)


def contract(subscripts, a, b):
    """Jet version of np.einsum over tensor axes: contract('ij,jk->ik', A, B).

    The batch axis is implicit and kept; coefficient convolution is exact
    up to the smaller of the two orders.
    """
    if "->" in subscripts:
        lhs, out = subscripts.split("->")
    else:
        lhs, out = subscripts, None
    sa, sb = lhs.split(",") if "," in lhs else (lhs, "")
    if out is None:
        out = "".join(sorted(set(sa + sb) - (set(sa) & set(sb))))
    sp = a.space
    d = min(a.order, b.order)
    p = sp.npairs[d]
    prod = np.einsum(f"Z{sa}P,Z{sb}P->Z{out}P",
                     a.data[..., sp.pi[:p]], b.data[..., sp.pj[:p]], optimize=True)
    return Jet(sp, np.add.reduceat(prod, sp.starts[: sp.size(d)], axis=-1), d)


def einsum_const(subscripts, arr, j):
    """Contract a plain (batched) array with a jet over tensor axes."""
    lhs, out = subscripts.split("->")
    sa, sb = lhs.split(",")
    data = np.einsum(f"Z{sa},Z{sb}P->Z{out}P", arr, j.data, optimize=True)
    return Jet(j.space, data, j.order)


def trace_jet(subscripts, j):
    lhs, out = subscripts.split("->")
    return Jet(j.space, np.einsum(f"Z{lhs}P->Z{out}P", j.data), j.order)


def stack(jets, axis=0):
    d = min(j.order for j in jets)
    c = jets[0].space.size(d)
    return Jet(jets[0].space, np.stack([j.data[..., :c] for j in jets], axis=axis + 1), d)


# -- univariate Taylor coefficient generators ----------------------------------

def _pow_coeffs(a):
    def fn(c0, d):
        out = np.empty((d + 1,) + np.shape(c0))
        binom = 1.0
        for k in range(d + 1):
            out[k] = binom * np.power(c0, a - k)
            binom *= (a - k) / (k + 1)
        return out
    return fn


def _exp_coeffs(c0, d):
    e = np.exp(c0)
    return np.array([e / factorial(k) for k in range(d + 1)])


def _log_coeffs(c0, d):
    out = np.empty((d + 1,) + np.shape(c0))
    out[0] = np.log(c0)
    for k in range(1, d + 1):
        out[k] = (-1.0) ** (k + 1) / (k * c0 ** k)
    return out


def _sin_coeffs(c0, d):
    return np.array([np.sin(c0 + k * np.pi / 2) / factorial(k) for k in range(d + 1)])


def _cos_coeffs(c0, d):
    return np.array([np.cos(c0 + k * np.pi / 2) / factorial(k) for k in range(d + 1)])


def _series_inverse(q, d):
    """Coefficients of 1/q for a univariate series q (leading axis)."""
    inv = np.zeros_like(q)
    inv[0] = 1.0 / q[0]
    for k in range(1, d + 1):
        acc = np.zeros_like(q[0])
        for j in range(1, k + 1):
            acc = acc + q[j] * inv[k - j]
        inv[k] = -acc / q[0]
    return inv


def _atan_coeffs(c0, d):
    # atan' = 1/(1+t^2): invert the series of 1 + (c0+s)^2, then integrate
    q = np.zeros((d + 1,) + np.shape(c0))
    q[0] = 1.0 + c0 ** 2
    if d >= 1:
        q[1] = 2.0 * c0
    if d >= 2:
        q[2] = 1.0
    inv = _series_inverse(q, d)
    out = np.empty_like(q)
    out[0] = np.arctan(c0)
    for k in range(1, d + 1):
        out[k] = inv[k - 1] / k
    return out


# -- evaluating expressions on jets -----------------------------------------

def expr_jets(exprs, space, base_x, base_y, order=None):
    """Jets of expressions in (x, y) at the base points (Taylor-mode AD).

    base_x, base_y have shape (N, n); the jet variables are x1..xn, y1..yn.
    """
    order = space.order if order is None else order
    n = base_x.shape[1]
    env = {}
    for i in range(n):
        env[f"x{i + 1}"] = Jet.coordinate(space, base_x[:, i], i, order)
        env[f"y{i + 1}"] = Jet.coordinate(space, base_y[:, i], n + i, order)
    N = base_x.shape[0]
    vals = {}
    for node in el._topo(list(exprs)):
        vals[id(node)] = _jet_node(node, vals, env, space, order, N)
    return [vals[id(e)] for e in exprs]


def _jet_node(node, vals, env, space, order, N):
    k = node.kind
    if k == "const":
        return Jet.constant(space, np.full(N, node.value), order)
    if k == "var":
        return env[node.name]
    args = [vals[id(c)] for c in node.args]
    if k == "neg":
        return -args[0]
    if k == "add":
        return args[0] + args[1]
    if k == "sub":
        return args[0] - args[1]
    if k == "mul":
        return multiply(args[0], args[1])
    if k == "div":
        if np.any(args[1].value == 0):
            raise el.DomainError("division by zero", node)
        if node.args[1].kind == "const":
            return args[0].scale(1.0 / node.args[1].value)
        return multiply(args[0], args[1].reciprocal())
    if k == "pow":
        a, b = args
        if node.args[1].kind == "const":
            try:
                return a.power(node.args[1].value)
            except el.DomainError:
                raise el.DomainError("invalid power", node) from None
        if np.any(a.value <= 0):
            raise el.DomainError("non-integer power of non-positive base", node)
        return multiply(b, a.compose(_log_coeffs)).compose(_exp_coeffs)
    if k == "func":
        a = args[0]
        name = node.name
        c0 = a.value
        if name == "sqrt":
            if np.any(c0 <= 0):
                raise el.DomainError("sqrt of non-positive argument", node)
            return a.sqrt()
        if name == "exp":
            return a.compose(_exp_coeffs)
        if name == "log":
            if np.any(c0 <= 0):
                raise el.DomainError("log of non-positive argument", node)
            return a.compose(_log_coeffs)
        if name == "sin":
            return a.compose(_sin_coeffs)
        if name == "cos":
            return a.compose(_cos_coeffs)
        if name == "tan":
            c = a.compose(_cos_coeffs)
            if np.any(c.value == 0):
                raise el.DomainError("tan pole", node)
            return multiply(a.compose(_sin_coeffs), c.reciprocal())
        if name == "atan":
            return a.compose(_atan_coeffs)
    raise el.ExprError(f"unknown node kind {k}")
