"""Acceptance suite: one criterion per test, each printing a pass/fail line.

Two clauses are asserted at their stated tolerances and are expected to fail, both
for the same mathematical reason: for a Lagrangian with genuine delayed
dependence, the pointwise quantity sum_k phi_k . x^(k) + psi L is NOT
constant along extremals (its derivative telescopes across the delay
comb t, t + tau, ...), so neither the pointwise DuBois-Reymond identity nor
pointwise conservation of the time-translation charge can hold.  What the
stacked optimal-control argument actually yields is conservation of the
stacked Hamiltonian (the sum over all delay intervals), which
test_criterion_6_conserved_counterparts verifies to ~1e-6 on the same
fixture, together with the charge returning to its initial value at b.
The delay-free criteria all pass.
"""

import time

import numpy as np
import pytest

from herglotz import conditions as cd
from herglotz import expr as ex
from herglotz import functional as fn
from herglotz import multipliers as ml
from herglotz import noether as nt
from herglotz import problem as pb
from herglotz import reduction as rd
from herglotz import trajectory as tr
from herglotz.cli import main
from herglotz.solver import SolveOptions, solve_extremal

from conftest import (delayed_problem, make_problem, oscillator_closed_form,
                      oscillator_closed_form_src, oscillator_problem)
from oracles import (delay_free_el, delay_free_tc, first_order_delayed_el,
                     first_order_delayed_dbr, first_order_delayed_charge)


def report(criterion, ok, detail):
    print(f"[acceptance] criterion {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")


# -- 1 -------------------------------------------------------------------

def test_criterion_1_closed_form_extremal(oscillator_solved):
    p, res = oscillator_solved
    t = res.trajectory.grid.nodes()
    err = float(np.max(np.abs(res.trajectory.x[0, 0] - oscillator_closed_form(t))))
    ok = res.converged and err <= 1e-4 and res.elapsed < 30.0
    report(1, ok, f"max pointwise error {err:.3e} (tol 1e-4), "
                  f"runtime {res.elapsed:.2f}s (< 30s), M=1000")
    assert res.converged
    assert err <= 1e-4
    assert res.elapsed < 30.0


# -- 2 -------------------------------------------------------------------

def test_criterion_2_psi_contract():
    p = make_problem("0.5*xd1^2 - z")  # dL/dz = -1
    sups, resids = [], []
    for h in (4e-3, 2e-3, 1e-3):
        g = tr.align_grid(0.0, 1.0, 0.0, n=1, h=h)
        traj = fn.simulate_z(p, tr.from_expressions(p, g, ["1"]))
        psi = fn.compute_psi(p, traj)
        sups.append(float(np.max(np.abs(psi.values - np.exp(g.nodes() - 1.0)))))
        gz = fn.eval_on_nodes(p, g, traj.x, traj.z, "z")
        r = tr.differentiate_values(psi.values, g.h, 1) + psi.values * gz
        resids.append(float(np.max(np.abs(r))))
        assert psi.values[-1] == 1.0  # exactly
    order = float(np.log2(resids[0] / resids[2]) / 2.0)
    ok = sups[-1] <= 1e-10 and order >= 2.0
    report(2, ok, f"sup|psi - exp(t-b)| {sups[-1]:.3e} (tol 1e-10), psi(b)=1 exact, "
                  f"adjoint-residual order {order:.2f} over h in (4e-3, 2e-3, 1e-3)")
    assert sups[-1] <= 1e-10
    assert order >= 2.0


# -- 3 -------------------------------------------------------------------

def test_criterion_3_transversality(oscillator_solved, quadratic_n2_solved_fine):
    worst = 0.0
    for _, res in (oscillator_solved, quadratic_n2_solved_fine):
        assert res.converged
        worst = max(worst, float(np.max(np.abs(res.report.tc))))

    # perturb the n=1 closed form so xd(b) = 0.1 while keeping x(a) = mu(a)
    p = oscillator_problem()
    g = tr.align_grid(0.0, 1.0, 0.0, n=1, h=1e-3)
    src = oscillator_closed_form_src() + " + 0.05*t^2"
    traj = fn.simulate_z(p, tr.from_expressions(p, g, [src]))
    psi = fn.compute_psi(p, traj)
    mult = ml.compute_phi(p, traj, psi)
    tc = cd.transversality_residual(p, traj, mult)
    err = abs(float(tc[0, 0]) - 0.1)
    ok = worst <= 1e-4 and err <= 1e-5
    report(3, ok, f"worst TC on converged fixtures {worst:.3e} (tol 1e-4); "
                  f"perturbed xd(b)=0.1 read back within {err:.3e} (tol 1e-5)")
    assert worst <= 1e-4
    assert err <= 1e-5


# -- 4 -------------------------------------------------------------------

def test_criterion_4_dbr_delay_free(oscillator_solved, quadratic_n2_solved_fine):
    worst_dbr, worst_drift = 0.0, 0.0
    for p, res in (oscillator_solved, quadratic_n2_solved_fine):
        worst_dbr = max(worst_dbr, res.report.norms_unflagged["dbr"])
        inner = cd.dbr_inner(p, res.trajectory.grid, res.trajectory.x,
                             res.trajectory.z, res.multipliers.phi,
                             res.multipliers.psi.values)
        worst_drift = max(worst_drift, nt.drift(inner, res.report.dbr_flags))
    ok = worst_dbr <= 1e-3 and worst_drift <= 1e-4
    report("4 (delay-free)", ok,
           f"dbr sup {worst_dbr:.3e} (tol 1e-3), "
           f"inner drift {worst_drift:.3e} (tol 1e-4) on n=1 and n=2 extremals")
    assert worst_dbr <= 1e-3
    assert worst_drift <= 1e-4


def test_criterion_4_dbr_delayed_strict(delayed_solved):
    """Asserted at the stated tolerance; fails because the pointwise identity
    does not extend to Lagrangians with delayed dependence (see the module
    docstring and test_criterion_6_conserved_counterparts)."""
    p, res = delayed_solved
    dbr = res.report.norms_unflagged["dbr"]
    inner = cd.dbr_inner(p, res.trajectory.grid, res.trajectory.x,
                         res.trajectory.z, res.multipliers.phi,
                         res.multipliers.psi.values)
    drift = nt.drift(inner, res.report.dbr_flags)
    ok = dbr <= 1e-3 and drift <= 1e-4
    report("4 (delayed)", ok,
           f"dbr sup {dbr:.3e} (tol 1e-3), inner drift {drift:.3e} (tol 1e-4) "
           "- the pointwise identity provably fails off the delay comb; "
           "its stacked counterpart passes in criterion 6's counterpart test")
    assert dbr <= 1e-3
    assert drift <= 1e-4


# -- 5 -------------------------------------------------------------------

def test_criterion_5_reduction_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = 0.0
    count = 0
    for tau in (0.25, 1.0 / 3.0, 0.3):  # 0.3 is the padding case
        p = make_problem("0.5*xd1^2 + 0.25*tau_x1^2 - 0.3*x1*tau_xd1 - z",
                         mu=("1 + 0.5*t",), tau=tau, gamma=0.2)
        g = tr.align_grid(0.0, 1.0, tau, n=1, h=1e-3)
        for _ in range(7):
            c = rng.uniform(-1, 1, size=5)
            src = " + ".join(["1"] + [f"({float(c[i])!r})*t^{i + 1}"
                                      for i in range(5)])
            traj = fn.simulate_z(p, tr.from_expressions(p, g, [src]))
            eq = rd.verify_reduction_equivalence(p, traj)
            worst = max(worst, eq.objective, eq.coupling)
            count += 1
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-7 and elapsed < 10.0 and count >= 20
    report(5, ok, f"{count} random degree-5 trajectories, worst defect "
                  f"{worst:.3e} (tol 1e-7), runtime {elapsed:.2f}s (< 10s)")
    assert count >= 20
    assert worst <= 1e-7
    assert elapsed < 10.0


# -- 6 -------------------------------------------------------------------

def _time_translation(p):
    return nt.make_family(p, "t + s", ["x1"], "z", xi=0.0)


def test_criterion_6_invariance_defect(delayed_solved):
    p, res = delayed_solved
    d1, d2 = nt.invariance_defect(p, res.trajectory, _time_translation(p))
    ok = max(d1, d2) <= 1e-6
    report("6 (defect)", ok, f"invariance defects {d1:.3e}, {d2:.3e} (tol 1e-6)")
    assert max(d1, d2) <= 1e-6


def test_criterion_6_charge_drift_strict(delayed_solved):
    """Asserted at the stated tolerance; fails for the same reason as the
    delayed DuBois-Reymond clause: with T=1, X=0, Z=0 the charge is minus
    the pointwise inner quantity, which drifts between a and b (while
    returning to its initial value at b and while the stacked Hamiltonian
    is conserved; both verified below)."""
    p, res = delayed_solved
    C = nt.noether_charge(p, res.trajectory, res.multipliers,
                          _time_translation(p))
    drift = nt.drift(C, res.report.dbr_flags)
    ok = drift <= 1e-3
    report("6 (drift)", ok,
           f"charge drift {drift:.3e} (tol 1e-3) - pointwise conservation "
           "provably fails for delayed Lagrangians; the conserved "
           "counterparts pass in the next test")
    assert drift <= 1e-3


def test_criterion_6_conserved_counterparts(delayed_solved):
    """What the stacked optimal-control argument actually guarantees, on the
    same fixture: the stacked Hamiltonian is constant on [0, tau] and the
    charge returns to its initial value at b (constant history)."""
    p, res = delayed_solved
    rp = rd.guinn_reduce(p)
    stacked = rd.map_trajectory(rp, res.trajectory)
    mults = rd.map_multipliers(rp, res.trajectory, res.multipliers)
    H = rd.reduced_hamiltonian(rp, stacked, mults)
    h_drift = float(np.max(H) - np.min(H))
    C = nt.noether_charge(p, res.trajectory, res.multipliers,
                          _time_translation(p))
    endpoint = abs(float(C[-1] - C[0]))
    ok = h_drift <= 1e-5 and endpoint <= 1e-5
    report("6 (conserved counterparts)", ok,
           f"stacked-Hamiltonian drift {h_drift:.3e}, "
           f"charge endpoint return {endpoint:.3e} (tol 1e-5)")
    assert h_drift <= 1e-5
    assert endpoint <= 1e-5


def test_criterion_6_perturbed_non_extremal(delayed_solved):
    p, res = delayed_solved
    g = res.trajectory.grid
    pos = res.trajectory.x[:, 0, :].copy()
    pos[0] += 1e-2 * np.sin(np.pi * g.nodes())
    pert = fn.simulate_z(p, tr.from_positions(p, g, pos))
    psi = fn.compute_psi(p, pert)
    mult = ml.compute_phi(p, pert, psi)
    C = nt.noether_charge(p, pert, mult, _time_translation(p))
    drift = nt.drift(C, res.report.dbr_flags)
    ok = drift >= 1e-2
    report("6 (perturbed)", ok, f"non-extremal charge drift {drift:.3e} (>= 1e-2)")
    assert drift >= 1e-2


# -- 7 -------------------------------------------------------------------

def test_criterion_7_special_case_equivalences():
    worst = 0.0

    # delay-free special case: tau=0, higher order, independent code path
    p = make_problem("0.5*xdd1^2 - 0.4*x1^2 - z", mu=("1",), n=2)
    g = tr.align_grid(0.0, 1.0, 0.0, n=2, M=200)
    traj = fn.simulate_z(p, tr.from_expressions(p, g, ["cos(t)"]))
    psi = fn.compute_psi(p, traj)
    mult = ml.compute_phi(p, traj, psi)
    el1, _ = cd.el_residual(p, traj, mult)
    worst = max(worst, float(np.max(np.abs(el1 - delay_free_el(p, traj, psi.values)))))
    tc = cd.transversality_residual(p, traj, mult)
    worst = max(worst, float(np.max(np.abs(tc - delay_free_tc(p, traj, psi.values)))))

    # first-order delayed special cases: direct two-term formulas
    pd = make_problem("0.5*xd1^2 + 0.25*tau_x1^2 - 0.1*x1*tau_xd1 - z", tau=0.25)
    gd = tr.align_grid(0.0, 1.0, 0.25, n=1, M=200)
    trajd = fn.simulate_z(pd, tr.from_expressions(pd, gd, ["1 - 0.3*t^2"]))
    psid = fn.compute_psi(pd, trajd)
    multd = ml.compute_phi(pd, trajd, psid)
    el1d, el2d = cd.el_residual(pd, trajd, multd)
    ref1, ref2 = first_order_delayed_el(pd, trajd, psid.values)
    worst = max(worst, float(np.max(np.abs(el1d[0] - ref1))),
                float(np.max(np.abs(el2d[0] - ref2))))
    worst = max(worst, float(np.max(np.abs(
        cd.dbr_residual(pd, trajd, multd) - first_order_delayed_dbr(pd, trajd, psid.values)))))
    fam = nt.make_family(pd, "t + s", ["x1 + 0.5*s*x1"], "z + s*t")
    gen = nt.lift_generators(fam, trajd)
    C = nt.noether_charge(pd, trajd, multd, fam)
    ref5 = first_order_delayed_charge(pd, trajd, psid.values, gen.T, gen.X[0, 0], gen.Z)
    worst = max(worst, float(np.max(np.abs(C - ref5))))

    ok = worst <= 1e-10
    report(7, ok, f"worst pointwise gap against the four special-case "
                  f"formulas {worst:.3e} (tol 1e-10)")
    assert worst <= 1e-10


# -- 8 -------------------------------------------------------------------

def test_criterion_8_first_variation(oscillator_solved, quadratic_n2_solved_fine):
    ratios = []
    for p, res in (oscillator_solved, quadratic_n2_solved_fine):
        grid = res.trajectory.grid
        t = grid.nodes()
        z_b = res.trajectory.z[-1]

        def z_eps(eps):
            pos = res.trajectory.x[:, 0, :].copy()
            pos[0] += eps * (t - grid.a) ** 2  # vanishes with n-1 derivatives at a
            return fn.simulate_z(p, tr.from_positions(p, grid, pos)).z[-1]

        d1 = z_eps(1e-2) - z_b
        d2 = z_eps(5e-3) - z_b
        ratios.append(float(d1 / d2))
    ok = all(3.0 <= r <= 5.0 for r in ratios)
    report(8, ok, f"quadratic ratios {[f'{r:.3f}' for r in ratios]} "
                  "(target 4 +/- 25%)")
    for r in ratios:
        assert 3.0 <= r <= 5.0


# -- 9 -------------------------------------------------------------------

FIXTURE_SPECS = {
    "oscillator": ("0.5*xd1^2 - 0.5*x1^2 - z", 0.0, 1, "1"),
    "free": ("0.5*xd1^2 - z", 0.0, 1, "1"),
    "quadratic_n2": ("0.5*xdd1^2 - z", 0.0, 2, "1 + t"),
    "delayed": ("0.5*xd1^2 + 0.25*tau_x1^2 - z", 0.5, 1, "1"),
    "delayed_velocity": ("0.5*xd1^2 + 0.5*tau_xd1^2 - z", 0.25, 1, "1"),
    "reduction": ("0.5*xd1^2 + 0.25*tau_x1^2 - 0.3*x1*tau_xd1 - z", 0.25, 1,
                  "1 + 0.5*t"),
}


def test_criterion_9_derivative_validation(tmp_path):
    failures = []
    for name, (L, tau, n, mu) in FIXTURE_SPECS.items():
        text = (f"[problem]\na = 0.0\nb = 1.0\ntau = {tau}\nn = {n}\nm = 1\n"
                f"gamma = 0.0\n\n[lagrangian]\nL = \"{L}\"\n\n"
                f"[history]\nmu1 = \"{mu}\"\n")
        spec = tmp_path / f"{name}.spec"
        spec.write_text(text)
        if main(["check-derivs", str(spec)]) != 0:
            failures.append(name)
    ok = not failures
    report(9, ok, f"check-derivs on {len(FIXTURE_SPECS)} fixture Lagrangians"
                  + (f"; failures: {failures}" if failures else ""))
    assert not failures
