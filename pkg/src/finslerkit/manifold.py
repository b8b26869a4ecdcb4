"""Geometry manifests, point sampling and numeric checks of the Finsler axioms."""
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import tomli

from . import exprlang as el

LAMBDAS = (0.5, 2.0, 3.0)
DET_TOL = 1e-10


class ManifestError(Exception):
    pass


@dataclass(frozen=True)
class GeometrySpec:
    name: str
    n: int
    kind: str
    domain: tuple
    y_annulus: tuple = (0.5, 2.0)
    F: el.Expr = None
    G: tuple = None
    positive_definite: bool = True
    samples: int = 50
    seed: int = 1
    tol: float = 1e-7
    source: dict = field(default=None, compare=False, repr=False)
    # a derived spray: ("projective", base_spec, factor_expr)
    derived: tuple = field(default=None, repr=False)

    @property
    def is_finsler(self):
        return self.kind == "finsler"

    def describe(self):
        out = {"name": self.name, "dim": self.n, "kind": self.kind}
        if self.F is not None:
            out["F"] = el.to_string(self.F)
        if self.G is not None:
            out["G"] = [el.to_string(g) for g in self.G]
        if self.derived is not None:
            out["base"] = self.derived[1].name
            out["factor"] = el.to_string(self.derived[2])
        out["domain"] = [list(b) for b in self.domain]
        out["y_annulus"] = list(self.y_annulus)
        out["positive_definite"] = self.positive_definite
        return out


@dataclass(frozen=True)
class TangentPoint:
    x: np.ndarray
    y: np.ndarray

    def as_list(self):
        return [float(v) for v in self.x] + [float(v) for v in self.y]


def _require(table, key, where):
    if key not in table:
        raise ManifestError(f"missing required field '{key}' in [{where}]")
    return table[key]


def _interval(v, what):
    if (not isinstance(v, list) or len(v) != 2
            or not all(isinstance(t, (int, float)) and not isinstance(t, bool) for t in v)):
        raise ManifestError(f"{what} must be an array [lo, hi]")
    lo, hi = float(v[0]), float(v[1])
    if not lo <= hi:
        raise ManifestError(f"{what} is empty: [{lo}, {hi}]")
    return lo, hi


def load_manifest(text):
    """Parse a manifest into a GeometrySpec."""
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ManifestError(f"manifest syntax error: {exc}") from None
    geo = _require(doc, "geometry", "geometry")
    dom = _require(doc, "domain", "domain")
    opts = dict(doc.get("options", {}))
    for k in ("positive_definite", "samples", "seed", "tol"):
        if k in geo:
            opts[k] = geo[k]
        if k in dom:
            opts[k] = dom[k]
    name = str(_require(geo, "name", "geometry"))
    n = _require(geo, "dim", "geometry")
    if not isinstance(n, int) or isinstance(n, bool):
        raise ManifestError("dim must be an integer")
    if n < 2:
        raise ManifestError("dimension must be >= 2 (manifolds are at least two-dimensional)")
    kind = _require(geo, "kind", "geometry")
    if kind not in ("finsler", "spray"):
        raise ManifestError(f"kind must be 'finsler' or 'spray', got {kind!r}")

    def expr(key):
        text_ = geo[key]
        if not isinstance(text_, str):
            raise ManifestError(f"{key} must be a quoted string")
        try:
            return el.parse(text_, n)
        except el.ParseError as exc:
            raise ManifestError(f"expression {key}: {exc}") from exc
        except el.ExprError as exc:
            raise ManifestError(f"expression {key}: {exc}") from exc

    F = G = None
    if kind == "finsler":
        _require(geo, "F", "geometry")
        F = expr("F")
    else:
        G = tuple(expr(f"G{i + 1}") for i in range(n)
                  if _require(geo, f"G{i + 1}", "geometry") is not None)
    box = tuple(_interval(_require(dom, f"x{i + 1}", "domain"), f"x{i + 1}") for i in range(n))
    ann = _interval(_require(dom, "y_annulus", "domain"), "y_annulus")
    if ann[0] <= 0:
        raise ManifestError("y_annulus must have r_min > 0")
    pd = opts.get("positive_definite", True)
    if not isinstance(pd, bool):
        raise ManifestError("positive_definite must be true or false")
    samples = opts.get("samples", 50)
    seed = opts.get("seed", 1)
    tol = opts.get("tol", 1e-7)
    if not isinstance(samples, int) or samples < 1:
        raise ManifestError("samples must be a positive integer")
    if not isinstance(seed, int):
        raise ManifestError("seed must be an integer")
    if not isinstance(tol, (int, float)) or tol <= 0:
        raise ManifestError("tol must be a positive number")
    return GeometrySpec(name=name, n=n, kind=kind, domain=box, y_annulus=ann, F=F, G=G,
                        positive_definite=pd, samples=samples, seed=seed, tol=float(tol),
                        source=doc)


def load_manifest_file(path):
    return load_manifest(Path(path).read_text(encoding="utf-8"))


def gallery_names():
    files = resources.files("finslerkit").joinpath("gallery").iterdir()
    return sorted(p.name[:-5] for p in files if p.name.endswith(".toml"))


def load_gallery(name):
    res = resources.files("finslerkit").joinpath("gallery", f"{name}.toml")
    if not res.is_file():
        raise FileNotFoundError(f"no gallery manifest named {name!r}")
    return load_manifest(res.read_text(encoding="utf-8"))


# -- sampling -----------------------------------------------------------------

def sample_arrays(spec, count, seed):
    """Sample (x, y) arrays of shape (count, n): uniform in box x annulus."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    n = spec.n
    lo = np.array([b[0] for b in spec.domain])
    hi = np.array([b[1] for b in spec.domain])
    x = lo + (hi - lo) * rng.random((count, n))
    d = rng.standard_normal((count, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r0, r1 = spec.y_annulus
    # radius density proportional to r^(n-1) gives uniform volume
    r = (r0 ** n + (r1 ** n - r0 ** n) * rng.random(count)) ** (1.0 / n)
    return x, d * r[:, None]


def sample_points(spec, count, seed):
    x, y = sample_arrays(spec, count, seed)
    return [TangentPoint(x[i].copy(), y[i].copy()) for i in range(count)]


def points_to_arrays(points):
    return (np.array([p.x for p in points], dtype=float),
            np.array([p.y for p in points], dtype=float))


def in_domain(spec, x, y=None, slack=0.0):
    lo = np.array([b[0] for b in spec.domain]) - slack
    hi = np.array([b[1] for b in spec.domain]) + slack
    ok = np.all((x >= lo) & (x <= hi), axis=-1)
    if y is not None:
        r = np.linalg.norm(y, axis=-1)
        ok &= (r > 0)
    return ok


# -- validation ---------------------------------------------------------------

@dataclass
class AxiomCheck:
    id: str
    residual: float
    tolerance: float
    passed: bool
    witness: list
    detail: str = ""


@dataclass
class ValidationReport:
    spec: str
    checks: list

    @property
    def ok(self):
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]


def _worst(values, x, y, larger_is_worse=True):
    values = np.asarray(values, dtype=float)
    bad = ~np.isfinite(values)
    if bad.any():
        i = int(np.argmax(bad))
        return float("inf"), [*x[i], *y[i]]
    i = int(np.argmax(values) if larger_is_worse else np.argmin(values))
    return float(values[i]), [float(v) for v in (*x[i], *y[i])]


def validate_finsler(spec, x, y, tol=None):
    """Check homogeneity (F2), non-degeneracy (F3), positivity (F4) and Euler's relation."""
    if not spec.is_finsler:
        raise ValueError("validate_finsler needs a finsler spec")
    tol = spec.tol if tol is None else tol
    F = spec.F
    E = el.mul(el.const(0.5), el.power(F, el.const(2.0)))
    tab = el.partial_table(E, spec.n, 2)
    n = spec.n
    checks = []
    try:
        Fv = el.evaluate(F, (x, y))
        Fv = np.broadcast_to(np.asarray(Fv, dtype=float), (x.shape[0],))
        hom = np.zeros(x.shape[0])
        for lam in LAMBDAS:
            Fl = np.broadcast_to(np.asarray(el.evaluate(F, (x, lam * y)), dtype=float),
                                 (x.shape[0],))
            hom = np.maximum(hom, np.abs(Fl - lam * Fv) / np.maximum(np.abs(Fv), 1e-300))
        r, w = _worst(hom, x, y)
        checks.append(AxiomCheck("F2-HOMOGENEITY", r, tol, r <= tol, w))

        keys, vals = tab.evaluate((x, y))
        vals = dict(zip(keys, [np.broadcast_to(np.asarray(v, float), (x.shape[0],))
                               for v in vals]))
        g = np.empty((x.shape[0], n, n))
        Ey = np.empty((x.shape[0], n))
        for i in range(n):
            a = [0] * (2 * n)
            a[n + i] += 1
            Ey[:, i] = vals[tuple(a)]
            for j in range(n):
                b = list(a)
                b[n + j] += 1
                g[:, i, j] = vals[tuple(b)]
        Ev = vals[(0,) * (2 * n)]
        euler = np.abs(np.einsum("ni,ni->n", y, Ey) - 2 * Ev) / np.maximum(np.abs(Ev), 1e-300)
        r, w = _worst(euler, x, y)
        checks.append(AxiomCheck("EULER-E", r, tol, r <= tol, w))
        det = np.linalg.det(g)
        r, w = _worst(np.abs(det), x, y, larger_is_worse=False)
        checks.append(AxiomCheck("F3-NONDEGENERATE", r, DET_TOL, r >= DET_TOL, w,
                                 detail=f"min |det g| = {r:.3e}"))
        if spec.positive_definite:
            eig = np.linalg.eigvalsh(g).min(axis=1)
            r, w = _worst(eig, x, y, larger_is_worse=False)
            checks.append(AxiomCheck("F3-POSITIVE-DEFINITE", r, 0.0, r > 0, w,
                                     detail=f"min eigenvalue of g = {r:.3e}"))
            r, w = _worst(Fv, x, y, larger_is_worse=False)
            checks.append(AxiomCheck("F4-POSITIVE", r, 0.0, r > 0, w,
                                     detail=f"min F = {r:.3e}"))
    except el.DomainError as exc:
        checks.append(AxiomCheck("F1-SMOOTH", float("inf"), tol, False, [], detail=str(exc)))
    return ValidationReport(spec.name, checks)
