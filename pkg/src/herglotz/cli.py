"""Batch front end.

Exit codes are a stable contract: 0 success, 2 validation failure,
3 numeric failure, 4 solver non-convergence (best iterate still written).
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import conditions as cd
from . import expr as ex
from . import functional as fn
from . import multipliers as ml
from . import noether as nt
from . import problem as pb
from . import reduction as rd
from . import solver as sv
from . import specfile
from . import trajectory as tr
from .errors import (DegenerateFamily, DomainError, ExprSyntaxError, GridTooSmall,
                     HerglotzError, NonFiniteLagrangian, OutOfHistoryRange,
                     OutOfRange, SingularJacobian, UnboundVariable,
                     UnknownFunction, ValidationError, ZeroDelay)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3
EXIT_NO_CONVERGENCE = 4

_VALIDATION_ERRORS = (ValidationError, ExprSyntaxError, UnknownFunction,
                      FileNotFoundError, IsADirectoryError)
_NUMERIC_ERRORS = (DomainError, NonFiniteLagrangian, UnboundVariable,
                   GridTooSmall, OutOfRange, OutOfHistoryRange,
                   DegenerateFamily, SingularJacobian, ZeroDelay,
                   FloatingPointError)


def _load(path):
    with open(path) as fh:
        raw = specfile.parse_problem_file(fh.read())
    return raw, pb.build_problem(raw)


def _grid_options(args, p):
    return tr.align_grid(p.a, p.b, p.tau, n=p.n, M=args.M, h=args.h if args.M is None else None)


def _fmt(v):
    return f"{v:.17g}"


def cmd_simulate(args):
    raw, p = _load(args.file)
    if raw.candidate is None:
        raise ValidationError("simulate needs a [candidate] section with x1..xm")
    grid = _grid_options(args, p)
    traj = tr.from_expressions(p, grid, list(raw.candidate))
    traj = fn.simulate_z(p, traj)
    if args.out:
        tr.write_trajectory_csv(traj, args.out)
        print(f"wrote {args.out}")
    else:
        tr.write_trajectory_csv(traj, sys.stdout)
    defect = fn.admissibility_defect(p, traj)
    print(f"z(b) = {_fmt(traj.z[-1])}")
    print(f"admissibility defect sup|dz/dt - L| = {_fmt(defect)}")
    return EXIT_OK


def _solve(args, p):
    opts = sv.SolveOptions(M=args.M, h=args.h if args.M is None else None,
                           tol_r=args.tol, max_iters=args.max_iters)
    return sv.solve_extremal(p, opts)


def _print_report(result):
    norms = result.report.norms
    unflagged = result.report.norms_unflagged
    print(f"iterations: {len(result.iterations) - 1}")
    for it, norm, lam in result.iterations:
        print(f"  iter {it:3d}  residual {norm:.6e}  damping {lam:.3g}")
    for key in ("el1", "el2", "tc", "dbr"):
        print(f"sup {key}: {_fmt(norms[key])} (unflagged {_fmt(unflagged[key])})")
    print(f"converged: {result.converged}")


def cmd_solve(args):
    _, p = _load(args.file)
    result = _solve(args, p)
    if args.out:
        tr.write_trajectory_csv(result.trajectory, args.out)
        print(f"wrote {args.out}")
    if args.mult_out:
        ml.write_multiplier_csv(result.trajectory.grid, result.multipliers,
                                args.mult_out)
        print(f"wrote {args.mult_out}")
    _print_report(result)
    return EXIT_OK if result.converged else EXIT_NO_CONVERGENCE


def cmd_verify(args):
    _, p = _load(args.file)
    traj = tr.read_trajectory_csv(p, args.trajectory)
    problems = []
    if abs(traj.z[0] - p.gamma) > 1e-9 * (1 + abs(p.gamma)):
        problems.append(f"z(a)={traj.z[0]!r} does not match gamma={p.gamma!r}")
    for j in range(1, p.m + 1):
        mu_a = pb.history_derivative(p, j, 0, p.a)
        if abs(traj.x[j - 1, 0, 0] - mu_a) > 1e-9 * (1 + abs(mu_a)):
            problems.append(f"x{j}(a)={traj.x[j - 1, 0, 0]!r} does not match "
                            f"history value {mu_a!r}")
    if problems:
        raise ValidationError(problems)
    psi = fn.compute_psi(p, traj)
    mult = ml.compute_phi(p, traj, psi)
    report = cd.full_report(p, traj, mult)
    if args.out:
        _write_residual_csv(report, args.out)
        print(f"wrote {args.out}")
    norms = report.norms
    unflagged = report.norms_unflagged
    for key in ("el1", "el2", "tc", "dbr"):
        print(f"sup {key}: {_fmt(norms[key])} (unflagged {_fmt(unflagged[key])})")
    return EXIT_OK


def _write_residual_csv(report, path):
    grid = report.grid
    t = grid.nodes()
    lines = ["t,block," + ",".join(f"r{j + 1}" for j in range(report.el1.shape[0]))]
    for i in range(report.el1.shape[-1]):
        vals = ",".join(_fmt(v) for v in report.el1[:, i])
        lines.append(f"{_fmt(t[i])},el1,{vals}")
    for i in range(report.el2.shape[-1]):
        vals = ",".join(_fmt(v) for v in report.el2[:, i])
        lines.append(f"{_fmt(t[grid.junction + i])},el2,{vals}")
    for i in range(grid.M + 1):
        pad = "," * max(report.el1.shape[0] - 1, 0)
        lines.append(f"{_fmt(t[i])},dbr,{_fmt(report.dbr[i])}{pad}")
    norms = report.norms
    lines.append("# sup " + " ".join(f"{k}={_fmt(v)}" for k, v in norms.items()))
    text = "\n".join(lines) + "\n"
    with open(path, "w") as fh:
        fh.write(text)


def cmd_reduce(args):
    _, p = _load(args.file)
    rp = rd.guinn_reduce(p)
    if args.out:
        rd.write_reduced_file(rp, args.out)
        print(f"wrote {args.out}")
    else:
        rd.write_reduced_file(rp, sys.stdout)
    cut = "none" if rp.cut is None else _fmt(rp.cut)
    print(f"N = {rp.N}, tau = {_fmt(rp.tau)}, cut = {cut}")
    return EXIT_OK


def cmd_charge(args):
    raw, p = _load(args.file)
    fam_content = raw.family
    if args.family_file:
        with open(args.family_file) as fh:
            fam_sections = specfile.parse_sections(fh.read())
        if "family" not in fam_sections:
            raise ValidationError(f"{args.family_file} has no [family] section")
        kv = dict(fam_sections["family"])
        wanted = {"T", "Z", "xi"} | {f"X{j}" for j in range(1, p.m + 1)}
        unknown = set(kv) - wanted
        missing = ({"T", "Z"} | {f"X{j}" for j in range(1, p.m + 1)}) - set(kv)
        if unknown or missing:
            raise ValidationError(
                [f"unknown key '{k}' in [family]" for k in sorted(unknown)]
                + [f"missing key '{k}' in [family]" for k in sorted(missing)])
        fam_content = specfile.FamilyContent(
            T=kv["T"], X=tuple(kv[f"X{j}"] for j in range(1, p.m + 1)),
            Z=kv["Z"], xi=float(kv.get("xi", 0.0)))
    if fam_content is None:
        raise ValidationError("charge needs a [family] section (in the problem "
                              "file or a separate family file)")
    fam = nt.make_family(p, fam_content.T, fam_content.X, fam_content.Z,
                         fam_content.xi)
    result = _solve(args, p)
    if not result.converged:
        _print_report(result)
        return EXIT_NO_CONVERGENCE
    traj = result.trajectory
    d1, d2 = nt.invariance_defect(p, traj, fam, ds=args.ds)
    charge = nt.noether_charge(p, traj, result.multipliers, fam)
    total = nt.drift(charge)
    interior = nt.drift(charge, mask=result.report.dbr_flags)
    if args.out:
        _write_charge_csv(traj.grid, charge, total, args.out)
        print(f"wrote {args.out}")
    print(f"invariance defect: condition1 {_fmt(d1)}, condition2 {_fmt(d2)}")
    print(f"charge drift: {_fmt(total)} (unflagged {_fmt(interior)})")
    if max(d1, d2) > args.defect_tol:
        print(f"family is NOT invariant at tolerance {args.defect_tol:g}; "
              "charge is not expected to be conserved")
    else:
        print(f"family invariant at tolerance {args.defect_tol:g}")
    return EXIT_OK


def _write_charge_csv(grid, charge, total, path):
    t = grid.nodes()
    lines = ["t,charge"]
    for i in range(grid.M + 1):
        lines.append(f"{_fmt(t[i])},{_fmt(charge[i])}")
    lines.append(f"# drift {_fmt(total)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def cmd_check_derivs(args):
    with open(args.file) as fh:
        raw = specfile.parse_problem_file(fh.read())
    p = pb.build_problem(raw)
    rows = pb.check_derivatives(p)
    print(f"{'slot':<12} {'t':>12} {'symbolic':>16} {'fd':>16} {'rel_err':>12}")
    worst = 0.0
    for name, t, sym, fd, rel in rows:
        worst = max(worst, rel)
        print(f"{name:<12} {t:>12.6g} {sym:>16.9g} {fd:>16.9g} {rel:>12.3e}")
    print(f"worst relative error: {worst:.3e}")
    if worst > 1e-6:
        print("FAIL: symbolic partials disagree with finite differences")
        return EXIT_VALIDATION
    print("OK: all partials agree with finite differences (<= 1e-6)")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="herglotz",
        description="Solve and certify delayed higher-order Herglotz "
                    "variational problems")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_grid(sp):
        sp.add_argument("--h", type=float, default=1e-3,
                        help="target grid step (nudged so tau is a multiple)")
        sp.add_argument("--M", type=int, default=None,
                        help="exact node-count override")

    sp = sub.add_parser("simulate", help="integrate z for a candidate x")
    sp.add_argument("file")
    add_grid(sp)
    sp.add_argument("--out", default=None, help="trajectory CSV path")
    sp.set_defaults(fn=cmd_simulate)

    sp = sub.add_parser("solve", help="solve for an extremal")
    sp.add_argument("file")
    add_grid(sp)
    sp.add_argument("--tol", type=float, default=1e-6)
    sp.add_argument("--max-iters", type=int, default=25)
    sp.add_argument("--out", default=None, help="trajectory CSV path")
    sp.add_argument("--mult-out", default=None, help="multiplier CSV path")
    sp.set_defaults(fn=cmd_solve)

    sp = sub.add_parser("verify", help="residual report for a trajectory CSV")
    sp.add_argument("file")
    sp.add_argument("trajectory")
    sp.add_argument("--out", default=None, help="residual CSV path")
    sp.set_defaults(fn=cmd_verify)

    sp = sub.add_parser("reduce", help="emit the stacked non-delayed problem")
    sp.add_argument("file")
    sp.add_argument("--out", default=None)
    sp.set_defaults(fn=cmd_reduce)

    sp = sub.add_parser("charge", help="solve, check invariance, evaluate the "
                                       "conserved quantity")
    sp.add_argument("file")
    sp.add_argument("family_file", nargs="?", default=None,
                    help="optional separate file holding the [family] section")
    add_grid(sp)
    sp.add_argument("--tol", type=float, default=1e-6)
    sp.add_argument("--max-iters", type=int, default=25)
    sp.add_argument("--ds", type=float, default=1e-3)
    sp.add_argument("--defect-tol", type=float, default=1e-6)
    sp.add_argument("--out", default=None, help="charge CSV path")
    sp.set_defaults(fn=cmd_charge)

    sp = sub.add_parser("check-derivs", help="finite-difference audit of the "
                                             "Lagrangian partials")
    sp.add_argument("file")
    sp.set_defaults(fn=cmd_check_derivs)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except _VALIDATION_ERRORS as err:
        print(f"validation error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except _NUMERIC_ERRORS as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except HerglotzError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
