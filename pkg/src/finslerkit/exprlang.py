"""Scalar expressions in the chart variables x1..xn, y1..yn.

Expressions are immutable, hash-consed trees: building the same node twice
returns the same object, so structural equality is identity and derivative
tables share subtrees for free.
"""
import math
import re
import weakref
from itertools import combinations_with_replacement

import numpy as np

FUNCS = ("sqrt", "exp", "log", "sin", "cos", "tan", "atan")
DEFAULT_NODE_CAP = 5_000_000


class ExprError(Exception):
    pass


class ParseError(ExprError):
    def __init__(self, msg, line, col):
        super().__init__(f"{msg} at line {line}, column {col}")
        self.line = line
        self.col = col


class DomainError(ExprError):
    def __init__(self, msg, node=None):
        if node is not None:
            msg = f"{msg} in '{to_string(node)}'"
        super().__init__(msg)
        self.node = node


class NodeCapError(ExprError):
    pass


_interned = weakref.WeakValueDictionary()


class Expr:
    """One node of an expression tree.

    kind is one of const, var, neg, add, sub, mul, div, pow, func.  Leaves
    carry `value` (const) or `name` (var, e.g. "y2"); function nodes carry the
    function name in `name`.
    """

    __slots__ = ("kind", "args", "value", "name", "__weakref__")

    def __init__(self, kind, args, value, name):
        self.kind = kind
        self.args = args
        self.value = value
        self.name = name

    def __setattr__(self, key, val):
        if hasattr(self, "name"):
            raise AttributeError("Expr is immutable")
        object.__setattr__(self, key, val)

    def __repr__(self):
        return f"Expr({to_string(self)!r})"

    def __str__(self):
        return to_string(self)

    @property
    def is_const(self):
        return self.kind == "const"

    def variables(self):
        """Set of variable names occurring in the tree."""
        out = set()
        for node in _topo([self]):
            if node.kind == "var":
                out.add(node.name)
        return out


def _node(kind, args=(), value=None, name=None):
    if value is not None:
        value = float(value)
        if value == 0.0:
            value = 0.0  # fold -0.0
        if not math.isfinite(value):
            raise DomainError(f"non-finite constant {value}")
    key = (kind, value, name) + tuple(id(a) for a in args)
    node = _interned.get(key)
    if node is None:
        node = Expr(kind, tuple(args), value, name)
        _interned[key] = node
    return node


def const(v):
    return _node("const", value=v)


def var(name):
    m = re.fullmatch(r"([xy])([1-9][0-9]*)", name)
    if m is None:
        raise ExprError(f"bad variable name {name!r}")
    return _node("var", name=name)


def _zero():
    return const(0.0)


def _one():
    return const(1.0)


def _is(e, v):
    return e.kind == "const" and e.value == v


# -- simplifying constructors -------------------------------------------------

def neg(a):
    if a.kind == "const":
        return const(-a.value)
    if a.kind == "neg":
        return a.args[0]
    return _node("neg", (a,))


def add(a, b):
    if a.kind == "const" and b.kind == "const":
        return const(a.value + b.value)
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    if b.kind == "neg":
        return sub(a, b.args[0])
    if b.kind == "const" and b.value < 0:
        return sub(a, const(-b.value))
    if a.kind == "neg":
        return sub(b, a.args[0])
    return _node("add", (a, b))


def sub(a, b):
    if a.kind == "const" and b.kind == "const":
        return const(a.value - b.value)
    if _is(b, 0.0):
        return a
    if a is b:
        return _zero()
    if _is(a, 0.0):
        return neg(b)
    if b.kind == "neg":
        return add(a, b.args[0])
    if b.kind == "const" and b.value < 0:
        return add(a, const(-b.value))
    return _node("sub", (a, b))


def mul(a, b):
    if a.kind == "const" and b.kind == "const":
        return const(a.value * b.value)
    if b.kind == "const":
        a, b = b, a
    if _is(a, 0.0):
        return _zero()
    if _is(a, 1.0):
        return b
    if _is(a, -1.0):
        return neg(b)
    if a.kind == "neg" and b.kind == "neg":
        return mul(a.args[0], b.args[0])
    if a.kind == "neg":
        return neg(mul(a.args[0], b))
    if b.kind == "neg":
        return neg(mul(a, b.args[0]))
    if a.kind == "const" and b.kind == "mul" and b.args[0].kind == "const":
        return mul(const(a.value * b.args[0].value), b.args[1])
    if a.kind == "const" and a.value < 0:
        return neg(mul(const(-a.value), b))
    return _node("mul", (a, b))


def div(a, b):
    if _is(b, 0.0):
        raise DomainError("division by constant zero")
    if a.kind == "const" and b.kind == "const":
        return const(a.value / b.value)
    if _is(a, 0.0):
        return _zero()
    if _is(b, 1.0):
        return a
    if a is b:
        return _one()
    if a.kind == "neg":
        return neg(div(a.args[0], b))
    if b.kind == "neg":
        return neg(div(a, b.args[0]))
    return _node("div", (a, b))


def power(a, b):
    if b.kind == "const":
        if b.value == 0.0:
            return _one()
        if b.value == 1.0:
            return a
        if a.kind == "const":
            try:
                v = a.value ** b.value
            except (OverflowError, ZeroDivisionError):
                v = None
            if isinstance(v, float) and math.isfinite(v):
                return const(v)
    if _is(a, 1.0):
        return _one()
    return _node("pow", (a, b))


def func(name, a):
    if name not in FUNCS:
        raise ExprError(f"unknown function {name!r}")
    if a.kind == "const":
        try:
            v = _SCALAR_FUNCS[name](a.value)
            return const(v)
        except (ValueError, ZeroDivisionError, DomainError):
            pass
    return _node("func", (a,), name=name)


# -- parser -------------------------------------------------------------------

_TOKEN = re.compile(
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()])"
    r"|(?P<ws>[ \t\r\n]+)"
)


def _tokenize(text):
    toks = []
    pos, line, col = 0, 1, 1
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        s = m.group()
        if kind != "ws":
            toks.append((kind, s, line, col))
        for ch in s:
            if ch == "\n":
                line, col = line + 1, 1
            else:
                col += 1
        pos = m.end()
    toks.append(("end", "", line, col))
    return toks


class _Parser:
    # Builds raw nodes (no simplification) so that printing and reparsing
    # reproduces the same tree; only -NUMBER is folded into a constant.

    def __init__(self, text, n):
        self.toks = _tokenize(text)
        self.i = 0
        self.n = n

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def fail(self, msg, tok=None):
        tok = tok or self.peek()
        if tok[0] == "end":
            msg += " (end of input)"
        raise ParseError(msg, tok[2], tok[3])

    def expect(self, s):
        tok = self.peek()
        if tok[1] != s or tok[0] == "num":
            self.fail(f"expected {s!r}")
        return self.take()

    def parse(self):
        e = self.expr()
        if self.peek()[0] != "end":
            self.fail(f"unexpected token {self.peek()[1]!r}")
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            e = _node("add" if op == "+" else "sub", (e, rhs))
        return e

    def term(self):
        e = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.unary()
            e = _node("mul" if op == "*" else "div", (e, rhs))
        return e

    def unary(self):
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.take()
            a = self.unary()
            if a.kind == "const":
                return const(-a.value)
            return _node("neg", (a,))
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return _node("pow", (base, self.unary()))
        return base

    def atom(self):
        tok = self.peek()
        kind, s = tok[0], tok[1]
        if kind == "num":
            self.take()
            return const(float(s))
        if kind == "op" and s == "(":
            self.take()
            e = self.expr()
            self.expect(")")
            return e
        if kind == "ident":
            self.take()
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                if s not in FUNCS:
                    self.fail(f"unknown function {s!r}", tok)
                self.take()
                a = self.expr()
                self.expect(")")
                return _node("func", (a,), name=s)
            if s == "pi":
                return const(math.pi)
            m = re.fullmatch(r"([xy])(\d+)", s)
            if m is None:
                if s in FUNCS:
                    self.fail(f"function {s!r} needs an argument", tok)
                self.fail(f"unknown identifier {s!r}", tok)
            k = int(m.group(2))
            if not 1 <= k <= self.n:
                self.fail(f"variable index out of range in {s!r} (n={self.n})", tok)
            return var(f"{m.group(1)}{k}")
        self.fail(f"unexpected token {s!r}" if s else "unexpected end of input")


def parse(text, n):
    """Parse `text` into an Expr over x1..xn, y1..yn."""
    if n < 1:
        raise ExprError("dimension must be positive")
    return _Parser(text, n).parse()


# -- printing -----------------------------------------------------------------

_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4}


def _num(v):
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _prec(e):
    if e.kind == "const" and e.value < 0:
        return 3
    return _PREC.get(e.kind, 5)


def to_string(e):
    """Render an expression; parse(to_string(e)) rebuilds the same tree."""
    memo = {}
    for node in _topo([e]):
        memo[id(node)] = _render(node, memo)
    return memo[id(e)]


def _render(e, memo):
    k = e.kind
    if k == "const":
        return _num(e.value)
    if k == "var":
        return e.name
    if k == "func":
        return f"{e.name}({memo[id(e.args[0])]})"
    if k == "neg":
        a = e.args[0]
        s = memo[id(a)]
        # '-' applies to a unary, so only sums and products need parentheses
        return f"-({s})" if _prec(a) < 3 or a.kind == "const" else f"-{s}"
    a, b = e.args
    sa, sb = memo[id(a)], memo[id(b)]
    if k == "pow":
        if _prec(a) < 5:
            sa = f"({sa})"
        if _prec(b) < 3:
            sb = f"({sb})"
        return f"{sa}^{sb}"
    p = _PREC[k]
    if _prec(a) < p:
        sa = f"({sa})"
    if _prec(b) <= p and not (_prec(b) == 3):
        sb = f"({sb})"
    sym = {"add": "+", "sub": "-", "mul": "*", "div": "/"}[k]
    return f"{sa} {sym} {sb}"


# -- traversal ----------------------------------------------------------------

def _topo(roots):
    """Unique nodes reachable from roots, children before parents."""
    seen = set()
    order = []
    for r in roots:
        if id(r) in seen:
            continue
        stack = [(r, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for c in node.args:
                if id(c) not in seen:
                    stack.append((c, False))
    return order


def node_count(roots):
    return len(_topo(list(roots)))


# -- differentiation ----------------------------------------------------------

def _diff_node(e, v, d):
    """Derivative of node e given the derivatives d[...] of its children."""
    k = e.kind
    if k == "const":
        return _zero()
    if k == "var":
        return _one() if e.name == v else _zero()
    if k == "neg":
        return neg(d[0])
    if k == "add":
        return add(d[0], d[1])
    if k == "sub":
        return sub(d[0], d[1])
    a = e.args[0]
    da = d[0]
    if k == "mul":
        b = e.args[1]
        return add(mul(da, b), mul(a, d[1]))
    if k == "div":
        b = e.args[1]
        db = d[1]
        if _is(db, 0.0):
            return div(da, b)
        # (a/b)' = (a' - (a/b) b') / b reuses the node a/b itself
        return div(sub(da, mul(e, db)), b)
    if k == "pow":
        b = e.args[1]
        db = d[1]
        if _is(da, 0.0) and _is(db, 0.0):
            return _zero()
        if b.kind == "const":
            c = b.value
            return mul(mul(const(c), power(a, const(c - 1.0))), da)
        # general exponent: d exp(b log a) = a^b (b' log a + b a'/a)
        return mul(e, add(mul(db, func("log", a)), div(mul(b, da), a)))
    if k == "func":
        if _is(da, 0.0):
            return _zero()
        name = e.name
        if name == "sqrt":
            return div(da, mul(const(2.0), e))
        if name == "exp":
            return mul(e, da)
        if name == "log":
            return div(da, a)
        if name == "sin":
            return mul(func("cos", a), da)
        if name == "cos":
            return neg(mul(func("sin", a), da))
        if name == "tan":
            return mul(add(_one(), power(e, const(2.0))), da)
        if name == "atan":
            return div(da, add(_one(), power(a, const(2.0))))
    raise ExprError(f"cannot differentiate node kind {k}")


class _Differ:
    """Memoized d/dv over a shared DAG."""

    def __init__(self):
        self.memo = {}

    def diff(self, e, v):
        memo = self.memo
        key = (id(e), v)
        hit = memo.get(key)
        if hit is not None:
            return hit[1]
        for node in _topo([e]):
            nk = (id(node), v)
            if nk in memo:
                continue
            if v not in _var_set(node):
                res = _zero()
            else:
                res = _diff_node(node, v, [memo[(id(c), v)][1] for c in node.args])
            # keep node alive so its id stays unique while memoized
            memo[nk] = (node, res)
        return memo[key][1]


_varsets = weakref.WeakKeyDictionary()


def _var_set(node):
    s = _varsets.get(node)
    if s is None:
        if node.kind == "var":
            s = frozenset((node.name,))
        elif not node.args:
            s = frozenset()
        else:
            s = frozenset().union(*(_var_set(c) for c in node.args))
        _varsets[node] = s
    return s


# derivative node -> (base, sorted variable names); lets repeated derivatives be
# rebuilt from the base in one canonical order, so d_u d_v e is d_v d_u e
_origins = weakref.WeakKeyDictionary()
_chains = weakref.WeakKeyDictionary()


def _var_key(name):
    return name[0], int(name[1:])


def _canonical_partial(base, names):
    chain = _chains.get(base)
    if chain is None:
        chain = _chains[base] = {(): base}
    hit = chain.get(names)
    if hit is None:
        hit = _Differ().diff(_canonical_partial(base, names[:-1]), names[-1])
        chain[names] = hit
        _origins.setdefault(hit, (base, names))
    return hit


def differentiate(e, v):
    """Exact symbolic partial derivative of e with respect to variable v.

    Mixed partials are canonical: differentiating a derivative restarts from
    its base expression with the variables sorted, so the order in which
    derivatives are taken never changes the resulting tree.
    """
    if isinstance(v, Expr):
        v = v.name
    var(v)
    base, names = _origins.setdefault(e, (e, ()))
    return _canonical_partial(base, tuple(sorted(names + (v,), key=_var_key)))


# -- evaluation ---------------------------------------------------------------

def _checked_sqrt(x):
    if x < 0:
        raise ValueError("sqrt of negative")
    return math.sqrt(x)


def _checked_log(x):
    if x <= 0:
        raise ValueError("log of non-positive")
    return math.log(x)


_SCALAR_FUNCS = {
    "sqrt": _checked_sqrt,
    "exp": math.exp,
    "log": _checked_log,
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "atan": math.atan,
}

_NP_FUNCS = {
    "sqrt": np.sqrt,
    "exp": np.exp,
    "log": np.log,
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "atan": np.arctan,
}


def _point_env(point):
    if isinstance(point, dict):
        return {k: np.asarray(v, dtype=float) for k, v in point.items()}
    x, y = point
    env = {}
    for i, xi in enumerate(np.atleast_1d(np.asarray(x, dtype=float).T)):
        env[f"x{i + 1}"] = xi
    for i, yi in enumerate(np.atleast_1d(np.asarray(y, dtype=float).T)):
        env[f"y{i + 1}"] = yi
    return env


def evaluate_many(exprs, point, topo=None):
    """Evaluate several expressions sharing one DAG walk.

    `point` is either a dict name -> value (scalars or equal-length arrays) or
    a pair (x, y) of arrays of shape (n,) or (N, n).  Domain violations raise
    DomainError naming the offending subexpression.  `topo` may pass a
    precomputed _topo(exprs) for repeated evaluation.
    """
    env = _point_env(point)
    vals = {}
    with np.errstate(all="ignore"):
        for node in topo if topo is not None else _topo(list(exprs)):
            vals[id(node)] = _eval_node(node, vals, env)
    return [vals[id(e)] for e in exprs]


def _eval_node(node, vals, env):
    k = node.kind
    if k == "const":
        return np.float64(node.value)
    if k == "var":
        try:
            return env[node.name]
        except KeyError:
            raise DomainError(f"variable {node.name} not assigned") from None
    args = [vals[id(c)] for c in node.args]
    if k == "neg":
        return -args[0]
    if k == "add":
        return args[0] + args[1]
    if k == "sub":
        return args[0] - args[1]
    if k == "mul":
        return args[0] * args[1]
    if k == "div":
        if np.any(args[1] == 0):
            raise DomainError("division by zero", node)
        return args[0] / args[1]
    if k == "pow":
        a, b = args
        if node.args[1].kind == "const" and float(b).is_integer():
            if b < 0 and np.any(a == 0):
                raise DomainError("division by zero", node)
            out = a ** b
        else:
            if np.any(a < 0) or (np.any(a == 0) and np.any(b <= 0)):
                raise DomainError("non-integer power of non-positive base", node)
            out = a ** b
        return _finite(out, node)
    if k == "func":
        a = args[0]
        name = node.name
        if name == "sqrt" and np.any(a < 0):
            raise DomainError("sqrt of negative argument", node)
        if name == "log" and np.any(a <= 0):
            raise DomainError("log of non-positive argument", node)
        if name == "tan" and np.any(np.cos(a) == 0):
            raise DomainError("tan pole", node)
        return _finite(_NP_FUNCS[name](a), node)
    raise ExprError(f"unknown node kind {k}")


def _finite(v, node):
    if not np.all(np.isfinite(v)):
        raise DomainError("non-finite result", node)
    return v


def evaluate(e, point):
    """Evaluate one expression to a float (or array for batched points)."""
    v = evaluate_many([e], point)[0]
    if np.ndim(v) == 0:
        v = float(v)
        if not math.isfinite(v):
            raise DomainError("non-finite result", e)
    return v


# -- partial tables -----------------------------------------------------------

def multi_indices(nvars, max_order):
    """All multi-indices of total order <= max_order, graded then lexicographic."""
    out = []
    for d in range(max_order + 1):
        block = []
        for combo in combinations_with_replacement(range(nvars), d):
            a = [0] * nvars
            for c in combo:
                a[c] += 1
            block.append(tuple(a))
        block.sort(reverse=True)
        out.extend(block)
    return out


class PartialTable:
    """All mixed partials of one expression up to a total order.

    Variables are ordered x1..xn, y1..yn; a multi-index gives the number of
    derivatives taken in each.  One entry per unordered multi-index, all
    entries sharing subtrees with each other.
    """

    def __init__(self, base, n, max_order, node_cap=DEFAULT_NODE_CAP):
        if max_order < 0:
            raise ExprError("max_order must be >= 0")
        self.base = base
        self.n = n
        self.max_order = max_order
        self.names = [f"x{i + 1}" for i in range(n)] + [f"y{i + 1}" for i in range(n)]
        self.entries = {}
        differ = _Differ()
        zero = (0,) * (2 * n)
        self.entries[zero] = base
        for alpha in multi_indices(2 * n, max_order)[1:]:
            j = next(i for i, a in enumerate(alpha) if a)
            parent = list(alpha)
            parent[j] -= 1
            self.entries[alpha] = differ.diff(self.entries[tuple(parent)], self.names[j])
            if len(differ.memo) > node_cap:
                raise NodeCapError(
                    f"partial table exceeded node cap {node_cap} at order {sum(alpha)}")
        count = node_count(self.entries.values())
        if count > node_cap:
            raise NodeCapError(f"partial table has {count} nodes, cap is {node_cap}")
        self.node_count = count
        self._topo_cache = None

    def __getitem__(self, alpha):
        return self.entries[tuple(alpha)]

    def __len__(self):
        return len(self.entries)

    def evaluate(self, point):
        """Array of all entries (in multi_indices order) at point(s)."""
        keys = list(self.entries)
        roots = [self.entries[k] for k in keys]
        if self._topo_cache is None:
            self._topo_cache = _topo(roots)
        return keys, evaluate_many(roots, point, self._topo_cache)


def partial_table(e, n, max_order, node_cap=DEFAULT_NODE_CAP):
    return PartialTable(e, n, max_order, node_cap=node_cap)
