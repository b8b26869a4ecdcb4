"""Geodesics of a spray: x'' + 2 G(x, x') = 0, integrated with classical RK4."""
import csv
from dataclasses import dataclass, field

import numpy as np

from . import exprlang as el
from .spraycore import cached_table, energy_expr


class GeodesicError(ValueError):
    pass


class SprayEvaluator:
    """Plain-array evaluation of G(x, y) at one or many points.

    Cheaper than a full PointFrame: a Finsler spec only needs the second
    partials of E and one linear solve per point.
    """

    def __init__(self, spec):
        self.spec = spec
        self.n = spec.n
        if spec.derived is not None:
            _, base, factor = spec.derived
            self.base = SprayEvaluator(base)
            self.factor = factor
        elif spec.kind == "finsler":
            self.table = cached_table(energy_expr(spec.F), spec.n, 2)

    def __call__(self, x, y):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        spec, n = self.spec, self.n
        N = x.shape[0]
        if spec.derived is not None:
            P = np.broadcast_to(el.evaluate(self.factor, (x, y)), (N,))
            return self.base(x, y) + P[:, None] * y
        if spec.kind == "spray":
            return np.stack([np.broadcast_to(el.evaluate(g, (x, y)), (N,)) for g in spec.G], 1)
        keys, vals = self.table.evaluate((x, y))
        part = {k: np.broadcast_to(np.asarray(v, dtype=float), (N,)) for k, v in zip(keys, vals)}

        def d(*vars_):
            a = [0] * (2 * n)
            for v in vars_:
                a[v] += 1
            return part[tuple(a)]

        Ex = np.stack([d(i) for i in range(n)], 1)
        Exy = np.stack([np.stack([d(r, n + j) for j in range(n)], 1) for r in range(n)], 1)
        g = np.stack([np.stack([d(n + i, n + j) for j in range(n)], 1) for i in range(n)], 1)
        rhs = np.einsum("Nrj,Nr->Nj", Exy, y) - Ex
        return 0.5 * np.linalg.solve(g, rhs[..., None])[..., 0]


def energy_and_F(spec, x, y):
    if not spec.is_finsler:
        return None, None
    x = np.atleast_2d(x)
    y = np.atleast_2d(y)
    F = np.broadcast_to(el.evaluate(spec.F, (x, y)), (x.shape[0],)).astype(float)
    return 0.5 * F * F, F


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    method: str = "rk4"
    steps: int = 0
    exit_flag: str = ""             # empty when the run reached t_end
    meta: dict = field(default_factory=dict)

    @property
    def endpoint(self):
        return self.x[-1], self.y[-1]

    @property
    def completed(self):
        return not self.exit_flag


def integrate_geodesic(spec, x0, y0, t_end, steps, check_domain=True):
    """Fixed-step RK4 on x' = y, y' = -2 G(x, y).

    Stops early (with exit_flag set) when x leaves the domain box or |y|
    leaves [r_min/10, 10 r_max]; the samples up to that point are kept.
    """
    steps = int(steps)
    if steps < 1:
        raise GeodesicError("steps must be >= 1")
    x = np.asarray(x0, dtype=float).reshape(-1)
    y = np.asarray(y0, dtype=float).reshape(-1)
    if x.shape != (spec.n,) or y.shape != (spec.n,):
        raise GeodesicError(f"initial point needs {spec.n} coordinates for x and y")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise GeodesicError("non-finite initial state")
    if np.linalg.norm(y) == 0:
        raise GeodesicError("initial velocity is zero")
    G = SprayEvaluator(spec)
    h = float(t_end) / steps
    lo = np.array([a for a, _ in spec.domain])
    hi = np.array([b for _, b in spec.domain])
    rmin, rmax = spec.y_annulus

    def rhs(s):
        xs, ys = s[: spec.n], s[spec.n:]
        return np.concatenate([ys, -2.0 * G(xs, ys)[0]])

    s = np.concatenate([x, y])
    ts, states = [0.0], [s.copy()]
    flag = ""
    for k in range(steps):
        try:
            k1 = rhs(s)
            k2 = rhs(s + 0.5 * h * k1)
            k3 = rhs(s + 0.5 * h * k2)
            k4 = rhs(s + h * k3)
        except el.DomainError as exc:
            raise GeodesicError(f"non-finite state at step {k + 1}: {exc}") from exc
        s = s + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(s)):
            raise GeodesicError(f"non-finite state at step {k + 1}")
        ts.append((k + 1) * h)
        states.append(s.copy())
        if check_domain:
            xs, speed = s[: spec.n], np.linalg.norm(s[spec.n:])
            if np.any(xs < lo) or np.any(xs > hi):
                flag = "left-domain"
            elif not (rmin / 10 <= speed <= 10 * rmax):
                flag = "speed-out-of-range"
            if flag:
                break
    S = np.array(states)
    return Trajectory(np.array(ts), S[:, : spec.n], S[:, spec.n:], "rk4", steps, flag,
                      {"t_end": float(t_end), "h": h})


@dataclass
class ConservationRecord:
    energy_drift: float
    F_drift: float
    E0: float
    F0: float


def conservation_report(spec, traj):
    """Relative max drifts of E and F along the trajectory."""
    if not spec.is_finsler:
        raise GeodesicError("conservation needs a Finsler function")
    E, F = energy_and_F(spec, traj.x, traj.y)
    return ConservationRecord(float(np.max(np.abs(E - E[0])) / abs(E[0])),
                              float(np.max(np.abs(F - F[0])) / abs(F[0])),
                              float(E[0]), float(F[0]))


def write_csv(spec, traj, path):
    n = spec.n
    E, F = energy_and_F(spec, traj.x, traj.y)
    header = (["t"] + [f"x{i + 1}" for i in range(n)] + [f"y{i + 1}" for i in range(n)]
              + ["E", "F"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k in range(len(traj.t)):
            row = [traj.t[k], *traj.x[k], *traj.y[k]]
            row += [E[k], F[k]] if E is not None else ["", ""]
            w.writerow([format(v, ".17g") if isinstance(v, float) else v for v in row])


def half_plane_geodesic(t):
    """Unit-speed hyperbolic geodesic through (0, 1) with velocity (1, 0)."""
    t = np.asarray(t, dtype=float)
    x = np.stack([np.tanh(t), 1.0 / np.cosh(t)], -1)
    y = np.stack([1.0 / np.cosh(t) ** 2, -np.tanh(t) / np.cosh(t)], -1)
    return x, y


def convergence_exponent(spec, x0, y0, t_end, oracle, steps=(20, 40, 80)):
    """Observed order log2(e_k / e_{k+1}) from endpoint errors at doubled step counts.

    Returns the smallest of the successive estimates and the errors.
    """
    errs = []
    for s in steps:
        tr = integrate_geodesic(spec, x0, y0, t_end, s, check_domain=False)
        errs.append(float(np.linalg.norm(tr.x[-1] - oracle(t_end)[0])))
    rates = [np.log(errs[i] / errs[i + 1]) / np.log(steps[i + 1] / steps[i])
             for i in range(len(errs) - 1)]
    return float(min(rates)), errs
