import numpy as np
import pytest

from herglotz import functional as fn
from herglotz import trajectory as tr
from herglotz.errors import NonFiniteLagrangian

from conftest import make_problem


def build(p, src, h=1e-3, M=None):
    g = tr.align_grid(p.a, p.b, p.tau, n=p.n, M=M, h=None if M else h)
    return tr.from_expressions(p, g, [src] * p.m)


def test_simulate_zero_lagrangian():
    p = make_problem("0*x1", gamma=0.7)
    traj = fn.simulate_z(p, build(p, "1", M=100))
    assert np.all(traj.z == 0.7)


def test_simulate_constant_lagrangian():
    p = make_problem("1 + 0*x1")
    traj = fn.simulate_z(p, build(p, "1", M=100))
    assert abs(traj.z[-1] - 1.0) <= 1e-12


def test_simulate_linear_ode():
    p = make_problem("-z", gamma=1.0)
    traj = fn.simulate_z(p, build(p, "1", h=1e-3))
    t = traj.grid.nodes()
    assert np.max(np.abs(traj.z - np.exp(-t))) <= 1e-9


def test_simulate_rk4_exact_for_cubic_time_polynomials():
    p = make_problem("t^3 - 2*t^2 + 0.5")
    traj = fn.simulate_z(p, build(p, "1", M=100))
    t = traj.grid.nodes()
    want = t ** 4 / 4 - 2 * t ** 3 / 3 + 0.5 * t
    assert np.max(np.abs(traj.z - want)) <= 1e-12


def test_simulate_nonfinite_reported():
    p = make_problem("1/x1")
    g = tr.align_grid(0.0, 1.0, 0.0, n=1, M=100)
    traj = tr.from_expressions(p, g, ["t - 0.5"])  # crosses zero
    with pytest.raises(NonFiniteLagrangian):
        fn.simulate_z(p, traj)


def test_admissibility_defect_small_on_simulated():
    p = make_problem("0.5*xd1^2 - 0.5*x1^2 - z")
    traj = fn.simulate_z(p, build(p, "cos(t)", h=1e-3))
    assert fn.admissibility_defect(p, traj) <= 1e-8


def test_psi_identity_when_z_free():
    p = make_problem("0.5*xd1^2")
    traj = fn.simulate_z(p, build(p, "sin(t)", M=100))
    psi = fn.compute_psi(p, traj)
    assert np.all(psi.values == 1.0)


def test_psi_constant_coefficient():
    p = make_problem("0.5*xd1^2 - z")
    traj = fn.simulate_z(p, build(p, "1", h=1e-3))
    psi = fn.compute_psi(p, traj)
    t = traj.grid.nodes()
    assert psi.values[-1] == 1.0
    assert np.max(np.abs(psi.values - np.exp(t - 1.0))) <= 1e-10
    assert abs(psi.values[0] - 0.36787944117) <= 1e-10


def test_psi_polynomial_coefficient():
    # dL/dz = -t: psi(t) = exp((t^2 - 1)/2)
    p = make_problem("-t*z")
    traj = fn.simulate_z(p, build(p, "1", h=1e-3))
    psi = fn.compute_psi(p, traj)
    t = traj.grid.nodes()
    assert np.max(np.abs(psi.values - np.exp((t ** 2 - 1.0) / 2.0))) <= 1e-9
    assert abs(psi.values[0] - 0.60653065971) <= 1e-9


def test_psi_positive_and_bounded_when_gz_nonpositive():
    p = make_problem("-z - 0.5*z*x1^2")
    traj = fn.simulate_z(p, build(p, "cos(t)", M=200))
    psi = fn.compute_psi(p, traj)
    assert np.all(psi.values > 0)
    assert np.all(psi.values <= 1.0 + 1e-15)


def test_adjoint_residual_refinement():
    # curved dL/dz so the quadrature error dominates: halving h must
    # roughly quarter the residual
    p = make_problem("-t^2*z")
    resids = []
    for h in (4e-3, 2e-3, 1e-3):
        traj = fn.simulate_z(p, build(p, "1", h=h))
        psi = fn.compute_psi(p, traj)
        gz = fn.eval_on_nodes(p, traj.grid, traj.x, traj.z, "z")
        r = tr.differentiate_values(psi.values, traj.grid.h, 1) + psi.values * gz
        resids.append(np.max(np.abs(r)))
    assert resids[0] / resids[1] >= 3.0
    assert resids[1] / resids[2] >= 3.0


def test_psi_shift_convention():
    p = make_problem("0.5*xd1^2 - z", tau=0.25)
    traj = fn.simulate_z(p, build(p, "1", M=100))
    psi = fn.compute_psi(p, traj)
    sh = psi.shifted()
    q = traj.grid.p
    assert np.array_equal(sh[:-q], psi.values[q:])
    assert np.all(sh[-q:] == 1.0)  # the convention value past b


def test_delayed_slots_feed_simulation():
    # dz/dt = x(t - tau) with constant history 2 on [-0.5, 0]:
    # z(t) = 2t until the delayed argument enters [0, 1]
    p = make_problem("tau_x1 + 0*xd1", mu=("2",), tau=0.5)
    g = tr.align_grid(0.0, 1.0, 0.5, n=1, M=100)
    traj = fn.simulate_z(p, tr.from_expressions(p, g, ["2 + t"]))
    t = g.nodes()
    first = t <= 0.5
    assert np.max(np.abs(traj.z[first] - 2 * t[first])) <= 1e-12
    want_tail = 1.0 + 2 * (t - 0.5) + (t - 0.5) ** 2 / 2
    assert np.max(np.abs(traj.z[~first] - want_tail[~first])) <= 1e-10


def test_batch_rk4_matches_scalar():
    p = make_problem("0.5*xd1^2 - 0.3*x1*z - z", tau=0.25, mu=("1 - t",))
    g = tr.align_grid(0.0, 1.0, 0.25, n=1, M=80)
    rng = np.random.default_rng(8)
    batch = rng.uniform(0.5, 1.5, size=(4, 1, g.M + 1))
    batch[:, 0, 0] = 1.0
    xb = tr.build_series(batch, g.h, 1)
    zb = fn.rk4_z(p, g, xb, p.gamma)
    for i in range(4):
        traj = tr.from_positions(p, g, batch[i])
        zs = fn.rk4_z(p, g, traj.x, p.gamma)
        assert np.array_equal(zb[i], zs)
