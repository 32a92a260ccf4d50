import numpy as np
import pytest

from herglotz import conditions as cd
from herglotz import functional as fn
from herglotz import trajectory as tr
from herglotz.errors import SingularJacobian, ValidationError
from herglotz.reduction import verify_reduction_equivalence
from herglotz.solver import SolveOptions, solve_extremal

from conftest import (delayed_problem, make_problem, oscillator_closed_form,
                      oscillator_problem)


def test_oscillator_matches_closed_form(oscillator_solved):
    p, res = oscillator_solved
    t = res.trajectory.grid.nodes()
    err = np.max(np.abs(res.trajectory.x[0, 0] - oscillator_closed_form(t)))
    assert res.converged
    assert err <= 1e-4
    assert err <= 1e-9  # the discrete solve is far tighter in practice


def test_free_particle_stays_constant():
    p = make_problem("0.5*xd1^2 - z", gamma=1.0)
    res = solve_extremal(p, SolveOptions(M=200, h=None))
    assert res.converged
    assert np.max(np.abs(res.trajectory.x[0, 0] - 1.0)) <= 1e-8
    t = res.trajectory.grid.nodes()
    assert np.max(np.abs(res.trajectory.z - np.exp(-t))) <= 1e-8


def test_delayed_fixture_with_reduction_cross_check(delayed_solved):
    p, res = delayed_solved
    assert res.converged
    assert res.report.norms_unflagged["el1"] <= 1e-4
    assert res.report.norms_unflagged["el2"] <= 1e-4
    eq = verify_reduction_equivalence(p, res.trajectory)
    assert eq.objective <= 1e-6


def test_delayed_velocity_fixture_constant(delayed_velocity_solved):
    p, res = delayed_velocity_solved
    assert res.converged
    assert np.max(np.abs(res.trajectory.x[0, 0] - 1.0)) <= 1e-7


def test_converged_implies_tolerances(delayed_solved):
    _, res = delayed_solved
    un = res.report.norms_unflagged
    assert un["el1"] <= 1e-6 and un["el2"] <= 1e-6 and un["tc"] <= 1e-6


def test_transversality_and_dbr_on_tau0_extremal(oscillator_solved):
    p, res = oscillator_solved
    assert res.report.norms_unflagged["tc"] <= 1e-6
    assert res.report.norms_unflagged["dbr"] <= 1e-3


def test_mesh_independence():
    p = oscillator_problem()
    r1 = solve_extremal(p, SolveOptions(M=500, h=None))
    r2 = solve_extremal(p, SolveOptions(M=1000, h=None))
    shared = r2.trajectory.x[0, 0, ::2]
    assert np.max(np.abs(r1.trajectory.x[0, 0] - shared)) <= 1e-8


def test_guess_is_used():
    p = oscillator_problem()
    first = solve_extremal(p, SolveOptions(M=200, h=None))
    again = solve_extremal(p, SolveOptions(M=200, h=None), guess=first.trajectory)
    assert again.converged
    assert len(again.iterations) <= 2  # already at the solution


def test_max_iters_returns_best_iterate():
    p = make_problem("0.5*xd1^2 + 0.25*x1^4 - z")
    res = solve_extremal(p, SolveOptions(M=100, h=None, max_iters=1, tol_r=1e-10))
    assert not res.converged
    assert res.trajectory.z is not None
    assert len(res.iterations) >= 2
    full = solve_extremal(p, SolveOptions(M=100, h=None, tol_r=1e-8))
    assert full.converged
    # the aborted solve's best iterate is no better than the full solve
    assert res.iterations[-1][1] >= full.iterations[-1][1]


def test_singular_jacobian_reported():
    # EL residual is psi(t) > 0 independent of x: the Jacobian vanishes
    p = make_problem("x1 - z")
    with pytest.raises(SingularJacobian):
        solve_extremal(p, SolveOptions(M=100, h=None))


def test_grid_alignment_validated():
    p = delayed_problem()
    with pytest.raises(ValidationError):
        solve_extremal(p, SolveOptions(M=333, h=None))


def test_options_validated():
    p = oscillator_problem()
    with pytest.raises(ValidationError):
        solve_extremal(p, SolveOptions(M=100, h=None, tol_r=-1.0))
    with pytest.raises(ValidationError):
        solve_extremal(p, SolveOptions(M=100, h=None, damping=0.0))


def test_iteration_log_shape(oscillator_solved):
    _, res = oscillator_solved
    assert res.iterations[0][0] == 0
    for it, norm, lam in res.iterations:
        assert norm >= 0 and 0 < lam <= 1


def test_n2_fixture_straight_line(quadratic_n2_solved):
    p, res = quadratic_n2_solved
    t = res.trajectory.grid.nodes()
    assert res.converged
    assert np.max(np.abs(res.trajectory.x[0, 0] - (1 + t))) <= 1e-7


def test_multicomponent_solve():
    p = make_problem("0.5*xd1^2 + 0.5*xd2^2 - 0.5*x1^2 - 0.5*x2^2 - z",
                     mu=("1", "2"), m=2)
    res = solve_extremal(p, SolveOptions(M=200, h=None))
    assert res.converged
    t = res.trajectory.grid.nodes()
    want = oscillator_closed_form(t)
    assert np.max(np.abs(res.trajectory.x[0, 0] - want)) <= 1e-7
    assert np.max(np.abs(res.trajectory.x[1, 0] - 2 * want)) <= 1e-7


def test_objective_stationarity(oscillator_solved):
    p, res = oscillator_solved
    grid = res.trajectory.grid
    t = grid.nodes()
    z_b = res.trajectory.z[-1]

    def z_eps(eps):
        pos = res.trajectory.x[:, 0, :].copy()
        pos[0] += eps * t ** 2
        return fn.simulate_z(p, tr.from_positions(p, grid, pos)).z[-1]

    d1 = z_eps(1e-2) - z_b
    d2 = z_eps(5e-3) - z_b
    assert 3.0 <= d1 / d2 <= 5.0


def test_third_order_quadratic_extremal():
    # only the l=3 summand survives, so the extremal continues the history
    # quadratically; exercises the deep l/k index paths
    p = make_problem("0.5*x1_d3^2 - z", mu=("1 + t + 0.5*t^2",), n=3)
    res = solve_extremal(p, SolveOptions(M=50, h=None, tol_r=1e-4))
    t = res.trajectory.grid.nodes()
    want = 1 + t + 0.5 * t ** 2
    assert res.converged
    assert np.max(np.abs(res.trajectory.x[0, 0] - want)) <= 1e-8


def test_second_order_delayed_solve():
    p = make_problem("0.5*xdd1^2 + 0.25*tau_x1^2 - z", mu=("1",), n=2, tau=0.5)
    res = solve_extremal(p, SolveOptions(M=200, h=None, tol_r=1e-5))
    assert res.converged
    assert res.report.norms_unflagged["el1"] <= 1e-5
    assert res.report.norms_unflagged["tc"] <= 1e-5


def test_multicomponent_delayed_solve_with_reduction():
    p = make_problem("0.5*xd1^2 + 0.5*xd2^2 + 0.25*tau_x1^2 + 0.25*tau_x2^2 - z",
                     mu=("1", "2"), m=2, tau=0.25)
    res = solve_extremal(p, SolveOptions(M=200, h=None))
    assert res.converged
    eq = verify_reduction_equivalence(p, res.trajectory)
    assert eq.objective <= 1e-6


def test_large_delay_short_first_block():
    p = make_problem("0.5*xd1^2 + 0.25*tau_x1^2 - z", tau=0.9)
    res = solve_extremal(p, SolveOptions(M=200, h=None))
    assert res.converged
    assert res.report.norms_unflagged["el1"] <= 1e-6
