"""Command-line front end.

Exit codes: 0 success, 1 file not readable, 2 manifest or expression does
not parse, 3 the geometry fails validation (or a precondition of the
command), 4 internal inconsistency (dual routes disagree, an identity
fails, or an unexpected error).
"""
import argparse
import math
import os
import sys

import numpy as np
import tomli

from . import __version__
from . import exprlang as el
from . import geodesic as gd
from . import manifold
from .classify import classify
from .curvature import ConsistencyError
from .identities import run_identity_suite
from .projective import (ProjectiveError, apply_projective_change, projective_invariance_report,
                         rapcsak_report)
from .twodim import two_dim_report

EXIT_OK, EXIT_IO, EXIT_PARSE, EXIT_VALIDATION, EXIT_INTERNAL = 0, 1, 2, 3, 4


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


# -- JSON -----------------------------------------------------------------------

def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def _dump(obj, indent=0):
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}  {_dump(str(k))}: {_dump(v, indent + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_dump(v) for v in obj) + "]"
        return "[\n" + ",\n".join(f"{pad}  {_dump(v, indent + 1)}" for v in obj) + "\n" + pad + "]"
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        # JSON has no inf/nan; they become null
        return format(obj, ".17g") if math.isfinite(obj) else "null"
    s = str(obj)
    out = ['"']
    for ch in s:
        if ch in '"\\':
            out.append("\\" + ch)
        elif ord(ch) < 0x20:
            out.append(f"\\u{ord(ch):04x}")
        else:
            out.append(ch)
    out.append('"')
    return "".join(out)


def to_json(obj):
    """Deterministic JSON text: fixed key order, floats with 17 significant digits."""
    return _dump(_plain(obj)) + "\n"


def envelope(spec, samples, seed, sections):
    return {"tool_version": __version__, "spec": spec.describe() if spec else None,
            "samples": samples, "seed": seed, "sections": sections}


# -- tables -------------------------------------------------------------------

def _fmt(v):
    if v is None:
        return "-"
    if isinstance(v, (bool, np.bool_)):
        return "yes" if v else "no"
    if isinstance(v, (float, np.floating)):
        return f"{v:.3e}"
    return str(v)


def table(headers, rows):
    cells = [[_fmt(c) for c in r] for r in rows]
    widths = [max([len(h)] + [len(r[i]) for r in cells]) for i, h in enumerate(headers)]
    out = ["  ".join(h.ljust(w) for h, w in zip(headers, widths)),
           "  ".join("-" * w for w in widths)]
    out += ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in cells]
    return "\n".join(line.rstrip() for line in out)


def entry_rows(entries):
    rows = []
    for e in entries:
        status = "skip" if e.skipped else ("pass" if e.passed else "FAIL")
        note = e.reason or ("finite-difference fallback" if e.fd else "")
        rows.append([e.id, status, e.residual, e.tolerance, note])
    return rows


ENTRY_HEADERS = ["id", "status", "residual", "tolerance", "note"]


# -- loading ------------------------------------------------------------------

def load_spec(arg):
    """A manifest path, or the name of a gallery entry."""
    looks_like_path = arg.endswith(".toml") or os.sep in arg or os.path.exists(arg)
    try:
        if looks_like_path:
            return manifold.load_manifest_file(arg)
        if arg in manifold.gallery_names():
            return manifold.load_gallery(arg)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {arg}: {exc.strerror or exc}")
    except (manifold.ManifestError, el.ExprError, tomli.TOMLDecodeError) as exc:
        raise CliError(EXIT_PARSE, f"{arg}: {exc}")
    raise CliError(EXIT_IO, f"no such manifest or gallery entry: {arg}")


def _samples(spec, args):
    n = args.samples if args.samples is not None else spec.samples
    seed = args.seed if args.seed is not None else spec.seed
    x, y = manifold.sample_arrays(spec, n, seed)
    return x, y, n, seed


def _tol(spec, args):
    return args.tol if args.tol is not None else spec.tol


def validation_checks(spec, x, y, tol):
    """Axiom checks for a Finsler spec, 2-homogeneity of G for a spray."""
    if spec.is_finsler:
        rep = manifold.validate_finsler(spec, x, y, tol)
        return rep.checks
    try:
        e = run_identity_suite(spec, (x, y), tol_overrides={"G-HOM": tol},
                               only={"G-HOM"}).entries[0]
        detail = e.reason
        ok = e.passed and math.isfinite(e.residual)
        return [manifold.AxiomCheck("S-HOMOGENEITY", e.residual, tol, ok, e.witness, detail)]
    except el.DomainError as exc:
        return [manifold.AxiomCheck("S-SMOOTH", float("inf"), tol, False, [], str(exc))]


def _checks_json(checks):
    return [{"id": c.id, "residual": c.residual, "tolerance": c.tolerance, "pass": c.passed,
             "witness_point": c.witness, "detail": c.detail} for c in checks]


def require_valid(spec, x, y, tol):
    checks = validation_checks(spec, x, y, tol)
    bad = [c for c in checks if not c.passed]
    if bad:
        names = ", ".join(f"{c.id} ({c.detail or _fmt(c.residual)})" for c in bad)
        raise CliError(EXIT_VALIDATION, f"{spec.name} fails validation: {names}")
    return checks


# -- commands ------------------------------------------------------------------
# each returns (exit code, spec, samples, seed, sections, human text)

def cmd_validate(args):
    spec = load_spec(args.manifest)
    x, y, n, seed = _samples(spec, args)
    checks = validation_checks(spec, x, y, _tol(spec, args))
    ok = all(c.passed for c in checks)
    text = table(["check", "status", "residual", "tolerance", "detail"],
                 [[c.id, "pass" if c.passed else "FAIL", c.residual, c.tolerance, c.detail]
                  for c in checks])
    text += f"\n\n{spec.name}: " + ("valid" if ok else "INVALID")
    return (EXIT_OK if ok else EXIT_VALIDATION), spec, n, seed, \
        {"validation": {"ok": ok, "checks": _checks_json(checks)}}, text


def _classification(spec, x, y, args):
    v = classify(spec, x, y, tol=_tol(spec, args), fd_fallback=args.fd_fallback)
    rows = [[k, vv.holds, vv.residual, vv.note] for k, vv in v.verdicts.items()]
    text = table(["class", "holds", "residual", "note"], rows)
    if v.scalar_curvature:
        sc = v.scalar_curvature
        text += f"\n\nscalar curvature: mean {sc['mean']:.12g}, std {sc['std']:.3e}"
    else:
        text += "\n\nscalar curvature: undefined"
    return v.as_dict(), text


def cmd_classify(args):
    spec = load_spec(args.manifest)
    x, y, n, seed = _samples(spec, args)
    require_valid(spec, x, y, _tol(spec, args))
    sec, text = _classification(spec, x, y, args)
    return EXIT_OK, spec, n, seed, {"classification": sec}, text


def _identities(spec, x, y, seed, args):
    tol = {"*": args.tol} if args.tol is not None else None
    rep = run_identity_suite(spec, (x, y), tol_overrides=tol, fd_fallback=args.fd_fallback,
                             seed=seed)
    return rep, {"ok": rep.ok, "entries": rep.as_list()}, table(ENTRY_HEADERS, entry_rows(rep.entries))


def cmd_identities(args):
    spec = load_spec(args.manifest)
    x, y, n, seed = _samples(spec, args)
    require_valid(spec, x, y, _tol(spec, args))
    rep, sec, text = _identities(spec, x, y, seed, args)
    code = EXIT_OK if rep.ok else EXIT_INTERNAL
    text += f"\n\n{sum(1 for e in rep.entries if e.passed and not e.skipped)} pass, " \
            f"{len(rep.failures())} fail, {sum(1 for e in rep.entries if e.skipped)} skipped"
    return code, spec, n, seed, {"identities": sec}, text


def _twodim(spec, x, y):
    rep = two_dim_report(spec, x, y)
    sec = {"ok": rep.ok, "entries": [e.as_dict() for e in rep.entries],
           "points": rep.records, "skipped_points": rep.skipped}
    rows = [[r["point"], r["kappa"], r["I"], r["berwald_residual"]] for r in rep.records]
    text = table(["point (x, y)", "kappa", "I", "Berwald identity residual"],
                 [[" ".join(f"{v:+.3f}" for v in p), k, i, b] for p, k, i, b in rows])
    text += "\n\n" + table(ENTRY_HEADERS, entry_rows(rep.entries))
    return rep, sec, text


def cmd_frame2d(args):
    spec = load_spec(args.manifest)
    if spec.n != 2 or not spec.is_finsler:
        raise CliError(EXIT_VALIDATION, "frame2d needs a two-dimensional Finsler function")
    x, y, n, seed = _samples(spec, args)
    require_valid(spec, x, y, _tol(spec, args))
    rep, sec, text = _twodim(spec, x, y)
    return (EXIT_OK if rep.ok else EXIT_INTERNAL), spec, n, seed, {"twodim": sec}, text


def cmd_report(args):
    spec = load_spec(args.manifest)
    x, y, n, seed = _samples(spec, args)
    checks = validation_checks(spec, x, y, _tol(spec, args))
    ok = all(c.passed for c in checks)
    sections = {"validation": {"ok": ok, "checks": _checks_json(checks)}}
    parts = ["== validation", table(["check", "status", "residual"],
                                    [[c.id, "pass" if c.passed else "FAIL", c.residual]
                                     for c in checks])]
    if not ok:
        return EXIT_VALIDATION, spec, n, seed, sections, "\n".join(parts)
    code = EXIT_OK
    rep, sec, text = _identities(spec, x, y, seed, args)
    sections["identities"] = sec
    parts += ["", "== identities", text]
    if not rep.ok:
        code = EXIT_INTERNAL
    sec, text = _classification(spec, x, y, args)
    sections["classification"] = sec
    parts += ["", "== classification", text]
    if spec.n == 2 and spec.is_finsler:
        rep2, sec, text = _twodim(spec, x, y)
        sections["twodim"] = sec
        parts += ["", "== two-dimensional", text]
        if not rep2.ok:
            code = EXIT_INTERNAL
    return code, spec, n, seed, sections, "\n".join(parts)


def _vector(text, n, what):
    try:
        v = [float(t) for t in text.split(",")]
    except ValueError:
        raise CliError(EXIT_PARSE, f"{what}: expected {n} comma-separated numbers")
    if len(v) != n:
        raise CliError(EXIT_PARSE, f"{what}: expected {n} comma-separated numbers")
    return np.array(v)


def cmd_geodesic(args):
    spec = load_spec(args.manifest)
    n = spec.n
    x0 = _vector(args.x0, n, "--x0") if args.x0 else \
        np.array([(a + b) / 2 for a, b in spec.domain])
    y0 = _vector(args.y0, n, "--y0") if args.y0 else \
        np.eye(n)[0] * (sum(spec.y_annulus) / 2)
    if not manifold.in_domain(spec, x0[None])[0]:
        raise CliError(EXIT_VALIDATION, "--x0 lies outside the domain box")
    checks = validation_checks(spec, x0[None], y0[None], _tol(spec, args))
    if not all(c.passed for c in checks):
        bad = ", ".join(c.id for c in checks if not c.passed)
        raise CliError(EXIT_VALIDATION, f"initial point fails validation: {bad}")
    try:
        tr = gd.integrate_geodesic(spec, x0, y0, args.t, args.steps)
    except gd.GeodesicError as exc:
        raise CliError(EXIT_VALIDATION, str(exc))
    if args.csv:
        try:
            gd.write_csv(spec, tr, args.csv)
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot write {args.csv}: {exc.strerror or exc}")
    sec = {"method": tr.method, "steps": tr.steps, "t_end": args.t,
           "steps_taken": len(tr.t) - 1, "exit_flag": tr.exit_flag or None,
           "x0": x0, "y0": y0, "t_final": float(tr.t[-1]),
           "x_final": tr.x[-1], "y_final": tr.y[-1]}
    lines = [f"method rk4, {len(tr.t) - 1} of {tr.steps} steps, t = {tr.t[-1]:.17g}",
             "x(t) = " + " ".join(f"{v:.17g}" for v in tr.x[-1]),
             "y(t) = " + " ".join(f"{v:.17g}" for v in tr.y[-1])]
    if tr.exit_flag:
        lines.append(f"stopped early: {tr.exit_flag}")
    if spec.is_finsler:
        c = gd.conservation_report(spec, tr)
        sec["energy_drift"] = c.energy_drift
        sec["F_drift"] = c.F_drift
        lines.append(f"relative drift: E {c.energy_drift:.3e}, F {c.F_drift:.3e}")
    if args.csv:
        lines.append(f"wrote {args.csv}")
    return EXIT_OK, spec, None, None, {"geodesic": sec}, "\n".join(lines)


def cmd_projective(args):
    spec = load_spec(args.manifest)
    try:
        factor = el.parse(args.factor, spec.n)
    except el.ExprError as exc:
        raise CliError(EXIT_PARSE, f"--factor: {exc}")
    x, y, n, seed = _samples(spec, args)
    tol = _tol(spec, args)
    require_valid(spec, x, y, tol)
    try:
        change = apply_projective_change(spec, factor, x, y, tol)
    except ProjectiveError as exc:
        raise CliError(EXIT_VALIDATION, str(exc))
    except el.DomainError as exc:
        raise CliError(EXIT_VALIDATION, f"factor is not defined at the samples: {exc}")
    rep = projective_invariance_report(spec, factor, x, y, tol, args.fd_fallback)
    sec = {"factor": el.to_string(factor), "derived_spec": change.spec.describe(),
           "ok": rep.ok, "entries": rep.as_list()}
    text = f"factor P = {el.to_string(factor)}\n\n" + table(ENTRY_HEADERS, entry_rows(rep.entries))
    return (EXIT_OK if rep.ok else EXIT_INTERNAL), spec, n, seed, {"projective": sec}, text


def cmd_rapcsak(args):
    spray = load_spec(args.manifest)
    target = load_spec(args.target)
    if not target.is_finsler:
        raise CliError(EXIT_VALIDATION, "the second manifest must define a Finsler function")
    if spray.n != target.n:
        raise CliError(EXIT_VALIDATION, "the two manifests have different dimensions")
    x, y, n, seed = _samples(target, args)
    # points must lie in both domains
    keep = manifold.in_domain(spray, x)
    x, y = x[keep], y[keep]
    if x.shape[0] == 0:
        raise CliError(EXIT_VALIDATION, "the two domain boxes do not overlap at the samples")
    tol = _tol(target, args)
    require_valid(spray, x, y, tol)
    require_valid(target, x, y, tol)
    rep, rr, extra = rapcsak_report(spray, target, x, y, tol, args.fd_fallback)
    sec = {"spray": spray.describe(), "target": target.describe(), "points": int(x.shape[0]),
           "projectively_related": rr.passed, "entries": rep.as_list(), **extra}
    text = table(ENTRY_HEADERS, entry_rows(rep.entries))
    text += f"\n\nR1 residual {rr.r1:.3e}: " + \
        ("projectively related" if rr.passed else "not projectively related")
    if rr.factor is not None:
        text += f"\nrecovered factor P = S Fb / (2 Fb): mean {extra['factor_mean']:.12g}, " \
                f"matches the canonical spray of the target within " \
                f"{extra['factor_vs_canonical']:.3e}"
    # an R1 pass whose consequences fail means the engine is inconsistent
    code = EXIT_OK
    if rr.passed and any(not e.passed for e in rep.entries if e.id not in ("VARIATIONAL", "R6")):
        code = EXIT_INTERNAL
    return code, spray, n, seed, {"rapcsak": sec}, text


COMMANDS = {
    "validate": (cmd_validate, "check the Finsler axioms (or spray homogeneity)"),
    "classify": (cmd_classify, "decide membership in the special classes"),
    "identities": (cmd_identities, "evaluate the identity catalogue"),
    "report": (cmd_report, "validation, identities, classification and 2D data together"),
    "geodesic": (cmd_geodesic, "integrate a geodesic with RK4"),
    "projective": (cmd_projective, "apply a projective change and check its laws"),
    "rapcsak": (cmd_rapcsak, "test projective relatedness of a spray and a Finsler function"),
    "frame2d": (cmd_frame2d, "Berwald frame, Gauss curvature and main scalar in 2D"),
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--samples", type=int, default=None, help="number of sample points")
    common.add_argument("--seed", type=int, default=None, help="sampling seed")
    common.add_argument("--tol", type=float, default=None, help="tolerance override")
    common.add_argument("--json", action="store_true", help="emit the JSON report")
    common.add_argument("--fd-fallback", action="store_true",
                        help="finite differences for the highest partials of E")
    p = argparse.ArgumentParser(prog="finslerkit", description="Finsler and spray geometry checks")
    p.add_argument("--version", action="version", version=f"finslerkit {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        s = sub.add_parser(name, parents=[common], help=help_)
        s.add_argument("manifest", help="manifest path or gallery name")
        if name == "rapcsak":
            s.add_argument("target", help="manifest of the Finsler function")
        if name == "projective":
            s.add_argument("--factor", required=True, help="projective factor P(x, y)")
        if name == "geodesic":
            s.add_argument("--x0", help="initial position a,b,...")
            s.add_argument("--y0", help="initial velocity a,b,...")
            s.add_argument("--t", type=float, default=1.0, help="end time")
            s.add_argument("--steps", type=int, default=1000, help="RK4 steps")
            s.add_argument("--csv", help="write the trajectory as CSV")
    return p


def run(argv, out=None, err=None):
    """Run one command; returns the exit code."""
    out = out or sys.stdout
    err = err or sys.stderr
    args = build_parser().parse_args(argv)
    fn = COMMANDS[args.command][0]
    if args.samples is not None and args.samples < 1:
        err.write("finslerkit: --samples must be >= 1\n")
        return EXIT_PARSE
    try:
        code, spec, n, seed, sections, text = fn(args)
    except CliError as exc:
        err.write(f"finslerkit: {exc}\n")
        if args.json:
            out.write(to_json({"tool_version": __version__, "error": str(exc),
                               "exit_code": exc.code}))
        return exc.code
    except ConsistencyError as exc:
        err.write(f"finslerkit: internal inconsistency: {exc}\n")
        return EXIT_INTERNAL
    except Exception as exc:    # anything else is a bug or a numerical breakdown
        err.write(f"finslerkit: internal error: {type(exc).__name__}: {exc}\n")
        return EXIT_INTERNAL
    if args.json:
        out.write(to_json(envelope(spec, n, seed, sections)))
    else:
        out.write(text + "\n")
    return code


def main(argv=None):
    sys.exit(run(sys.argv[1:] if argv is None else argv))


if __name__ == "__main__":
    main()
