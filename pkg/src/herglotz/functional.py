"""Forward simulation of the Herglotz functional z and the multiplier psi.

z is driven by dz/dt = L(t, x(t), ..., x(t - tau), ..., z(t)) with classical
fixed-step RK4; psi(t) = exp(integral_t^b dL/dz) via composite Simpson taken
cumulatively from b (odd leftover interval closed with one trapezoid).

The low-level helpers accept leading batch axes on the sample arrays; the
solver uses them to evaluate whole Jacobian chunks in one sweep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import problem as pb
from . import trajectory as tr
from .errors import NonFiniteLagrangian, ValidationError


def history_node_values(p: pb.ProblemSpec, grid: tr.Grid, j, k, idx):
    """mu_j^(k) at the pre-interval nodes a + idx*h (idx negative)."""
    t = grid.a + grid.h * np.asarray(idx, dtype=float)
    out = p.history_fn(j, k)(t)
    return np.broadcast_to(np.asarray(out, dtype=float), t.shape).copy()


def delayed_node_series(p: pb.ProblemSpec, grid: tr.Grid, x, j, k):
    """x_j^(k)(t_i - tau) for every node: an index shift by the delay offset,
    with the history expression answering below a."""
    M, q = grid.M, grid.p
    out = np.empty(x.shape[:-3] + (M + 1,))
    if q:
        out[..., :q] = history_node_values(p, grid, j, k, np.arange(-q, 0))
    out[..., q:] = x[..., j - 1, k, :M + 1 - q]
    return out


def slot_args_nodes(p: pb.ProblemSpec, grid: tr.Grid, x):
    """Per-node value arrays for every Lagrangian argument except z, in the
    canonical order of problem.arg_names."""
    args = [grid.nodes()]
    for j in range(1, p.m + 1):
        for k in range(p.n + 1):
            args.append(x[..., j - 1, k, :])
    for j in range(1, p.m + 1):
        for k in range(p.n + 1):
            args.append(delayed_node_series(p, grid, x, j, k))
    return args


def slot_args_mid(p: pb.ProblemSpec, grid: tr.Grid, x):
    """Same as slot_args_nodes but at interval midpoints t_i + h/2."""
    mids = tr.midpoint_values(x, grid.h)  # (..., m, n+1, M)
    args = [grid.nodes()[:-1] + 0.5 * grid.h]
    for j in range(1, p.m + 1):
        for k in range(p.n + 1):
            args.append(mids[..., j - 1, k, :])
    q = grid.p
    M = grid.M
    for j in range(1, p.m + 1):
        for k in range(p.n + 1):
            out = np.empty(x.shape[:-3] + (M,))
            if q:
                tpast = grid.a + grid.h * (np.arange(-q, 0) + 0.5)
                vals = p.history_fn(j, k)(tpast)
                out[..., :q] = np.broadcast_to(np.asarray(vals, dtype=float),
                                               tpast.shape)
            out[..., q:] = mids[..., j - 1, k, :M - q]
            args.append(out)
    return args


def eval_on_nodes(p: pb.ProblemSpec, grid: tr.Grid, x, z, which="body"):
    """Evaluate the Lagrangian body or one partial along the trajectory."""
    fn = p.lagrangian.compiled(which)
    args = slot_args_nodes(p, grid, x) + [z]
    with np.errstate(all="ignore"):
        out = fn(*args)
    shape = np.broadcast_shapes(x.shape[:-3] + (grid.M + 1,), np.shape(out))
    return np.broadcast_to(np.asarray(out, dtype=float), shape).copy()


def rk4_z(p: pb.ProblemSpec, grid: tr.Grid, x, gamma):
    """March z across the grid; batch axes of x are carried through."""
    L = p.lagrangian.compiled("body")
    cur = slot_args_nodes(p, grid, x)
    mid = slot_args_mid(p, grid, x)
    t = cur[0]
    h = grid.h
    batch = x.shape[:-3]
    z = np.empty(batch + (grid.M + 1,))
    z[..., 0] = gamma
    with np.errstate(all="ignore"):
        for i in range(grid.M):
            zi = z[..., i]
            ai = [A[..., i] for A in cur[1:]]
            am = [A[..., i] for A in mid[1:]]
            an = [A[..., i + 1] for A in cur[1:]]
            tm = t[i] + 0.5 * h
            k1 = L(t[i], *ai, zi)
            k2 = L(tm, *am, zi + 0.5 * h * k1)
            k3 = L(tm, *am, zi + 0.5 * h * k2)
            k4 = L(t[i + 1], *an, zi + h * k3)
            z[..., i + 1] = zi + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
    return z


def simulate_z(p: pb.ProblemSpec, traj: tr.StateTrajectory) -> tr.StateTrajectory:
    """Fill z on a trajectory by RK4 with z(a) = gamma.

    Raises NonFiniteLagrangian at the first node where the right-hand side
    stopped being finite.
    """
    z = rk4_z(p, traj.grid, traj.x, p.gamma)
    bad = ~np.isfinite(z)
    if bad.any():
        i = int(np.argmax(bad))
        raise NonFiniteLagrangian(traj.grid.a + traj.grid.h * max(i - 1, 0))
    return traj.with_z(z)


def admissibility_defect(p: pb.ProblemSpec, traj: tr.StateTrajectory) -> float:
    """sup |dz/dt - L| over the nodes (stencil derivative of the z series)."""
    if traj.z is None:
        raise ValidationError("trajectory has no z series")
    zdot = tr.differentiate_values(traj.z, traj.grid.h, 1)
    lvals = eval_on_nodes(p, traj.grid, traj.x, traj.z, "body")
    return float(np.max(np.abs(zdot - lvals)))


# ---------------------------------------------------------------------------
# psi

@dataclass(frozen=True)
class PsiSeries:
    """psi on the grid nodes of [a, b]; on (b, b + tau] the convention value
    is the constant 1 (the stacked problem's closing interval has a null
    Lagrangian)."""

    values: np.ndarray  # (..., M+1)
    p: int

    def shifted(self):
        """psi(t_i + tau) per node, 1 beyond b."""
        return psi_shift(self.values, self.p)


def psi_shift(values, p):
    if p == 0:
        return values
    out = np.ones_like(values)
    out[..., :values.shape[-1] - p] = values[..., p:]
    return out


def integral_to_b(g, h):
    """J_i = integral from t_i to b of a node series, composite Simpson from
    the right; nodes an odd number of steps from b close the first interval
    with a trapezoid."""
    g = np.asarray(g, dtype=float)
    M = g.shape[-1] - 1
    J = np.zeros_like(g)
    if M == 0:
        return J
    if M >= 2:
        c = (h / 3.0) * (g[..., :-2] + 4.0 * g[..., 1:-1] + g[..., 2:])
        idx_even = np.arange(M - 2, -1, -2)
        if idx_even.size:
            J[..., idx_even] = np.cumsum(c[..., idx_even], axis=-1)
    idx_odd = np.arange(M - 1, -1, -2)
    J[..., idx_odd] = (0.5 * h * (g[..., idx_odd] + g[..., idx_odd + 1])
                       + J[..., idx_odd + 1])
    return J


def psi_values(p: pb.ProblemSpec, grid: tr.Grid, x, z):
    gz = eval_on_nodes(p, grid, x, z, "z")
    J = integral_to_b(gz, grid.h)
    with np.errstate(all="ignore"):
        return np.exp(J)


def compute_psi(p: pb.ProblemSpec, traj: tr.StateTrajectory) -> PsiSeries:
    """psi(t) = exp(integral_t^b dL/dz); psi(b) = 1 exactly."""
    if traj.z is None:
        raise ValidationError("trajectory has no z series; simulate it first")
    return PsiSeries(values=psi_values(p, traj.grid, traj.x, traj.z), p=traj.grid.p)
