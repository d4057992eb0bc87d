"""Command-line entry point: solve, check, noether, transform, regularity.

Every command prints a JSON report on stdout. Exit codes: 0 success,
2 input error, 3 numerical failure, 4 internal invariant breach.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import symbolic as sym
from .config import DEFAULTS
from .errors import ExtremalLabError, InputError
from .problem import dump_problem, eliminate_control, hamiltonian, load_problem

SCHEMA_VERSION = "1"


def _sha256(path):
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError as err:
        raise InputError(f"cannot read {path}: {err}") from None


def _floats(text, what):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"{what} must be a comma list of numbers, got '{text}'") from None


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, sym.Expr):
        return sym.render(obj)
    return obj


def _load_trajectory(path, problem, psi0=None):
    from .extremal import Trajectory

    return Trajectory.from_csv(path, problem, psi0)


def _drift_summary(F, traj):
    from .conservation import monitor

    d = monitor(F, traj)
    return {"F": sym.render(sym._coerce(F)), **d.to_dict()}


# --------------------------------------------------------------------------
# commands


def cmd_solve(args, inputs):
    from .extremal import shoot

    p = load_problem(args.problem)
    if args.psi0 is not None:
        p = p.with_psi0(args.psi0)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        law = eliminate_control(hamiltonian(p))
    guess = _floats(args.guess, "--guess") if args.guess else None
    if guess is not None and len(guess) != p.n:
        raise InputError(f"--guess needs {p.n} values, got {len(guess)}")
    res = shoot(p, law, guess, steps=args.steps, tol=args.tol, max_iter=args.max_iter)
    tr = res.trajectory
    if args.out:
        tr.to_csv(args.out)
    out = {
        "problem": p.name,
        "psi0": p.psi0,
        "control_law": {"kind": law.kind, "exprs": [sym.render(e) for e in law.exprs] if law.exprs else None,
                        "stationary_extremal": law.stationary, "positive_curvature_samples": len(law.positive_curvature)},
        "converged": res.converged,
        "iterations": res.iterations,
        "psi_a": res.psi_a.tolist(),
        "residual": res.residual.tolist(),
        "residual_max": float(np.max(np.abs(res.residual))),
        "cost": tr.cost,
        "steps": tr.steps,
        "H_drift": float(np.max(np.abs(tr.H - tr.H[0]))),
        "warnings": [str(w.message) for w in caught],
    }
    if args.out:
        out["csv"] = {"path": args.out, "rows": len(tr.grid)}
    return out, (0 if res.converged else 3)


def cmd_check(args, inputs):
    from .conservation import check_conservation

    p = load_problem(args.problem)
    if args.psi0 is not None:
        p = p.with_psi0(args.psi0)
    F = sym.parse(args.f)
    traj = None
    if args.trajectory:
        inputs["trajectory"] = {"path": args.trajectory, "sha256": _sha256(args.trajectory)}
        traj = _load_trajectory(args.trajectory, p)
    v = check_conservation(p, F, traj)
    return {"problem": p.name, "F": sym.render(F), "verdict": v.to_dict()}, 0


def cmd_noether(args, inputs):
    from .noether import check_quasi_invariance, load_family

    p = load_problem(args.problem)
    inputs["family"] = {"path": args.family, "sha256": _sha256(args.family)}
    f = load_family(args.family, p)
    traj, source = None, None
    if args.trajectory:
        inputs["trajectory"] = {"path": args.trajectory, "sha256": _sha256(args.trajectory)}
        traj, source = _load_trajectory(args.trajectory, p), "file"
    elif p.boundary_complete:
        from .extremal import solve

        res = solve(p, steps=args.steps)
        if res.converged:
            traj, source = res.trajectory, "shooting"
    rep = check_quasi_invariance(p, f, traj, steps=args.steps)
    out = {"problem": p.name, **rep.to_dict(), "extremal": source}
    if traj is not None:
        out["drifts"] = {r.param: _drift_summary(r.conserved, traj) for r in rep.parameters if r.conserved is not None}
    return out, 0


def cmd_transform(args, inputs):
    from . import transform as tf
    from .box import parse_box

    p = load_problem(args.problem)
    if args.kind == "gam":
        if not args.upsilon:
            raise InputError("--kind gam needs --upsilon")
        tp = tf.gamkrelidze(p, sym.parse(args.upsilon), parse_box(args.box, p) if args.box else None)
    else:
        if args.upsilon:
            raise InputError("--upsilon applies to --kind gam only")
        tp = tf.tau_transform(p)
    if args.lift and args.project:
        raise InputError("--lift and --project are mutually exclusive")
    text = dump_problem(tp.image, comments=[f"{tp.kind} image of {p.name}"])
    out = {"problem": p.name, **tp.to_dict(), "image_problem": text}
    if args.image:
        Path(args.image).write_text(text, encoding="utf-8")
        out["image_path"] = args.image
    if args.lift:
        inputs["trajectory"] = {"path": args.lift, "sha256": _sha256(args.lift)}
        e = _load_trajectory(args.lift, p)
        v = None
        if args.v:
            vexpr = sym.parse(args.v)
            extra = sym.free_vars(vexpr) - {"tau"}
            if extra:
                raise InputError(f"--v must be an expression in tau; found '{sorted(extra)[0]}'")
            fv = sym.compile_expr(vexpr, ("tau",))
            v = lambda s: fv(s)
        li = tf.lift_extremal(tp, e, v)
        if args.out:
            li.to_csv(args.out)
        out["lift"] = {"H_img_max_abs": float(np.max(np.abs(li.H))), "cost_original": e.cost,
                       "cost_image": li.cost, "tau_final": float(li.grid[-1]), "rows": len(li.grid),
                       "psi0": li.psi0, "out": args.out}
    if args.project:
        inputs["trajectory"] = {"path": args.project, "sha256": _sha256(args.project)}
        ei = _load_trajectory(args.project, tp.image)
        level = tf.zero_level(tp, ei)
        pr = tf.project_extremal(tp, ei)
        if args.out:
            pr.to_csv(args.out)
        out["project"] = {"H_img_max_abs": level, "cost_image": tf.image_cost(tp, ei), "cost_original": pr.cost,
                          "rows": len(pr.grid), "psi0": pr.psi0, "out": args.out}
    return out, 0


def cmd_regularity(args, inputs):
    from . import regularity as rg
    from .box import parse_box

    p = load_problem(args.problem)
    box = parse_box(args.box, p)
    cond = args.condition
    if cond in ("9", "25", "27"):
        res = rg.fit_growth(p, cond, box, args.samples).to_dict()
    elif cond == "26":
        if not args.params:
            raise InputError("--condition 26 needs --params gamma,beta,eta,mu")
        vals = _floats(args.params, "--params")
        if len(vals) != 4:
            raise InputError("--params needs four values gamma,beta,eta,mu")
        res = rg.check_affine_growth(p, vals, box, args.samples).to_dict()
    elif cond == "coercivity":
        if not args.theta:
            raise InputError("--condition coercivity needs --theta")
        res = rg.check_coercivity(p, sym.parse(args.theta), box, args.samples).to_dict()
    else:
        res = rg.check_convexity(p, box, args.samples).to_dict()
    return {"problem": p.name, "condition": cond, "result": res}, 0


# --------------------------------------------------------------------------
# parser and driver


def build_parser():
    ap = argparse.ArgumentParser(prog="extremal-lab", description=__doc__.splitlines()[0])
    ap.add_argument("--report", help="also write the JSON report to this file")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="shoot an extremal and write its trajectory")
    s.add_argument("problem")
    s.add_argument("--steps", type=int, default=DEFAULTS["steps"], help="RK4 intervals (default %(default)s)")
    s.add_argument("--tol", type=float, default=DEFAULTS["shoot_tol"], help="shooting tolerance (default %(default)s)")
    s.add_argument("--max-iter", type=int, default=DEFAULTS["shoot_max_iter"], help="Newton iterations (default %(default)s)")
    s.add_argument("--guess", help="initial psi(a), comma separated (default zeros)")
    s.add_argument("--psi0", type=float, choices=[0.0, -1.0], help="cost multiplier branch (default from file)")
    s.add_argument("--out", help="trajectory CSV path")
    s.set_defaults(func=cmd_solve)

    c = sub.add_parser("check", help="test whether F is conserved along extremals")
    c.add_argument("problem")
    c.add_argument("--f", required=True, help="expression in t, x, u, psi0, psi and H")
    c.add_argument("--trajectory", help="trajectory CSV to monitor F on")
    c.add_argument("--psi0", type=float, choices=[0.0, -1.0])
    c.set_defaults(func=cmd_check)

    n = sub.add_parser("noether", help="first-order quasi-invariance and conserved quantities")
    n.add_argument("problem")
    n.add_argument("family")
    n.add_argument("--trajectory", help="trajectory CSV (default: shoot one when the boundary is complete)")
    n.add_argument("--steps", type=int, default=DEFAULTS["steps"])
    n.set_defaults(func=cmd_noether)

    t = sub.add_parser("transform", help="build an autonomous image and map extremals")
    t.add_argument("problem")
    t.add_argument("--kind", choices=["gam", "tau"], required=True)
    t.add_argument("--upsilon", help="positive time-scaling factor (gam only)")
    t.add_argument("--box", help='positivity box for Upsilon, e.g. "t:0,1;x1:-1,1;u1:-10,10"')
    t.add_argument("--v", help="positive clock rate as an expression in tau (tau only, default 1)")
    t.add_argument("--lift", help="extremal CSV of the original problem to lift")
    t.add_argument("--project", help="extremal CSV of the image problem to project")
    t.add_argument("--out", help="CSV path for the lifted or projected trajectory")
    t.add_argument("--image", help="path to write the image problem file")
    t.set_defaults(func=cmd_transform)

    r = sub.add_parser("regularity", help="audit growth, coercivity and convexity hypotheses on a box")
    r.add_argument("problem")
    r.add_argument("--condition", required=True, choices=["9", "25", "26", "27", "coercivity", "convexity"])
    r.add_argument("--box", default="", help='intervals, e.g. "t:0,1;x1:-1,1;u1:-10,10" (default states +-1, controls +-10)')
    r.add_argument("--samples", type=int, default=DEFAULTS["samples"], help="Halton samples (default %(default)s)")
    r.add_argument("--theta", help="coercivity gauge as an expression in r")
    r.add_argument("--params", help="gamma,beta,eta,mu for condition 26")
    r.set_defaults(func=cmd_regularity)
    return ap


def _emit(report, path):
    text = json.dumps(_jsonable(report), indent=2) + "\n"
    sys.stdout.write(text)
    if path:
        Path(path).write_text(text, encoding="utf-8")


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    start = time.perf_counter()
    report = {"schema_version": SCHEMA_VERSION, "command": args.command, "inputs": {}}
    try:
        report["inputs"]["problem"] = {"path": args.problem, "sha256": _sha256(args.problem)}
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            results, code = args.func(args, report["inputs"])
        report["results"] = results
    except ExtremalLabError as err:
        code = err.exit_code
        report["error"] = {"type": type(err).__name__, "message": str(err), "exit_code": code}
        print(f"error: {err}", file=sys.stderr)
    except Exception as err:  # internal failure, never a user error
        code = 4
        report["error"] = {"type": type(err).__name__, "message": str(err), "exit_code": code}
        print(f"internal error: {type(err).__name__}: {err}", file=sys.stderr)
    report["wall_time_ms"] = int(round((time.perf_counter() - start) * 1000))
    _emit(report, args.report)
    return code


if __name__ == "__main__":
    sys.exit(main())
