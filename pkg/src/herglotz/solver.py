"""Compute extremals: find position samples x(t_i) such that the discretized
Euler-Lagrange equations and transversality conditions hold, with z and psi
re-simulated from scratch for every candidate.

Unknowns are the positions at nodes 1..M (node 0 is pinned to the history
value); all derivative series come from the differentiation stencils, so the
derivative-consistency invariants hold by construction.  The residual vector
stacks one Euler-Lagrange equation per interior node (the delayed-sum block
left of b - tau, the current-only block from there on), the n transversality
values, and the continuity constraints x^(k)(a) = mu^(k)(a) for k = 1..n-1,
which makes the system square.  Junction and end zones stay in the root
system but are excluded from the acceptance sup-norms of the final report.

The Jacobian is a forward finite difference of the full residual map,
evaluated in vectorized column chunks.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import conditions as cd
from . import functional as fn
from . import multipliers as ml
from . import problem as pb
from . import trajectory as tr
from .errors import SingularJacobian, ValidationError

_CHUNK = 256


@dataclass(frozen=True)
class SolveOptions:
    M: int | None = None          # grid resolution; None = derive from h
    h: float | None = 1e-3
    damping: float = 1.0          # initial Newton damping in (0, 1]
    max_iters: int = 25
    tol_r: float = 1e-6
    tol_x: float = 1e-12
    jacobian_fd_step: float = 1e-7

    def validate(self):
        problems = []
        if not self.tol_r > 0:
            problems.append(f"tol_r must be positive, got {self.tol_r!r}")
        if not 0 < self.damping <= 1:
            problems.append(f"damping must lie in (0, 1], got {self.damping!r}")
        if self.M is None and self.h is None:
            problems.append("one of M or h must be given")
        if problems:
            raise ValidationError(problems)


@dataclass
class SolveResult:
    trajectory: tr.StateTrajectory
    multipliers: ml.MultiplierSet
    report: cd.ResidualReport
    iterations: list = field(default_factory=list)  # (iter, residual, damping)
    converged: bool = False
    elapsed: float = 0.0


class _System:
    """Residual map R(U) for one problem on one grid, with batch support."""

    def __init__(self, p, grid):
        self.p = p
        self.grid = grid
        n, m, M = p.n, p.m, grid.M
        if grid.p == 0:
            self.sel1 = np.arange(n, M - n + 1)
            self.sel2 = np.arange(0)
        else:
            # Every interior node contributes one equation; left of the
            # junction it is the delayed-sum equation, from the junction on
            # the current-only one.  Dropping the junction-zone rows instead
            # leaves a few unknowns unconstrained and the Newton step parks a
            # parasitic wiggle there, so the zone stays in the root system
            # and is only excluded from the acceptance sup-norms.
            j = grid.junction
            self.sel1 = np.arange(n, j)
            self.sel2 = np.arange(0, M - n - j + 1)  # junction node uses el2
            if self.sel1.size == 0 or self.sel2.size == 0:
                raise ValidationError(
                    "grid too coarse for the delay: the Euler-Lagrange blocks "
                    "have no interior nodes")
        self.pinned = np.array([[pb.history_derivative(p, j_, 0, p.a)]
                                for j_ in range(1, m + 1)])
        self.mu_at_a = np.array([[pb.history_derivative(p, j_, k, p.a)
                                  for k in range(1, n)]
                                 for j_ in range(1, m + 1)])  # (m, n-1)
        self.n_res = m * (self.sel1.size + self.sel2.size) + n * m + (n - 1) * m
        self.n_unknowns = m * M
        assert self.n_res == self.n_unknowns  # square by construction

    def initial_positions(self):
        """Taylor extension of the history from a."""
        p, grid = self.p, self.grid
        t = grid.nodes() - grid.a
        pos = np.zeros((p.m, grid.M + 1))
        for j in range(1, p.m + 1):
            acc = np.zeros_like(t)
            fact = 1.0
            for k in range(p.n):
                if k:
                    fact *= k
                acc += pb.history_derivative(p, j, k, p.a) * t ** k / fact
            pos[j - 1] = acc
        return pos

    def pack(self, positions):
        return np.asarray(positions)[..., :, 1:].reshape(
            positions.shape[:-2] + (-1,))

    def unpack(self, U):
        batch = U.shape[:-1]
        m, M = self.p.m, self.grid.M
        pos = np.empty(batch + (m, M + 1))
        pos[..., :, 0] = self.pinned[:, 0]
        pos[..., :, 1:] = U.reshape(batch + (m, M))
        return pos

    def residual(self, U):
        """R(U), batched over leading axes of U."""
        p, grid = self.p, self.grid
        pos = self.unpack(np.asarray(U, dtype=float))
        x = tr.build_series(pos, grid.h, p.n)
        z = fn.rk4_z(p, grid, x, p.gamma)
        psi = fn.psi_values(p, grid, x, z)
        el1, el2 = cd.el_blocks(p, grid, x, z, psi)
        tc = cd.transversality_values(p, grid, x, z, psi)
        parts = [el1[..., self.sel1].reshape(U.shape[:-1] + (-1,))]
        if self.sel2.size:
            parts.append(el2[..., self.sel2].reshape(U.shape[:-1] + (-1,)))
        parts.append(tc.reshape(U.shape[:-1] + (-1,)))
        if p.n > 1:
            cont = x[..., :, 1:p.n, 0] - self.mu_at_a
            parts.append(cont.reshape(U.shape[:-1] + (-1,)))
        return np.concatenate(parts, axis=-1)

    def jacobian(self, U, R0, fd_step):
        nu = U.shape[0]
        J = np.empty((self.n_res, nu))
        deltas = fd_step * (1.0 + np.abs(U))
        for lo in range(0, nu, _CHUNK):
            cols = np.arange(lo, min(lo + _CHUNK, nu))
            Ub = np.repeat(U[np.newaxis, :], cols.size, axis=0)
            Ub[np.arange(cols.size), cols] += deltas[cols]
            Rb = self.residual(Ub)
            J[:, cols] = ((Rb - R0) / deltas[cols, np.newaxis]).T
        return J


def solve_extremal(p: pb.ProblemSpec, opts: SolveOptions | None = None,
                   guess: tr.StateTrajectory | None = None) -> SolveResult:
    """Damped Newton iteration on the discretized necessary conditions.

    Returns the best iterate with converged=False when the iteration budget
    runs out; raises SingularJacobian when the linearized system degenerates.
    """
    opts = opts or SolveOptions()
    opts.validate()
    t0 = time.perf_counter()
    grid = tr.align_grid(p.a, p.b, p.tau, n=p.n, M=opts.M, h=opts.h)
    sys = _System(p, grid)

    if guess is not None:
        if guess.grid.M != grid.M:
            raise ValidationError("guess grid does not match the solve grid")
        U = sys.pack(guess.x[:, 0, :]).astype(float)
    else:
        U = sys.pack(sys.initial_positions()).astype(float)

    R = sys.residual(U)
    norm = _sup(R)
    lam = opts.damping
    log = [(0, norm, lam)]
    best_U, best_norm = U.copy(), norm

    for it in range(1, opts.max_iters + 1):
        if norm <= opts.tol_r:
            break
        J = sys.jacobian(U, R, opts.jacobian_fd_step)
        step = _newton_step(J, R)
        lam = opts.damping
        accepted = False
        while lam >= 1e-8:
            U_try = U + lam * step
            R_try = sys.residual(U_try)
            norm_try = _sup(R_try)
            if norm_try < norm:
                U, R, norm = U_try, R_try, norm_try
                accepted = True
                break
            lam *= 0.5
        log.append((it, norm, lam))
        if norm < best_norm:
            best_U, best_norm = U.copy(), norm
        if not accepted:
            break
        if lam * _sup(step) <= opts.tol_x * (1.0 + _sup(U)):
            break

    if best_norm < norm:
        U = best_U
    traj = tr.from_positions(p, grid, sys.unpack(U))
    traj = fn.simulate_z(p, traj)
    psi = fn.compute_psi(p, traj)
    mult = ml.compute_phi(p, traj, psi)
    report = cd.full_report(p, traj, mult)
    sup_ok = report.norms_unflagged
    converged = (sup_ok["el1"] <= opts.tol_r and sup_ok["el2"] <= opts.tol_r
                 and sup_ok["tc"] <= opts.tol_r)
    return SolveResult(trajectory=traj, multipliers=mult, report=report,
                       iterations=log, converged=converged,
                       elapsed=time.perf_counter() - t0)


def _sup(v):
    m = np.max(np.abs(v))
    return float(m) if np.isfinite(m) else float("inf")


def _newton_step(J, R):
    if not np.all(np.isfinite(J)):
        raise SingularJacobian(float("inf"))
    try:
        return np.linalg.solve(J, -R)
    except np.linalg.LinAlgError:
        raise SingularJacobian(_cond_estimate(J)) from None


def _cond_estimate(J):
    sv = np.linalg.svd(J, compute_uv=False)
    return float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
