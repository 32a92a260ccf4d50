"""Necessary-condition residuals: the two Euler-Lagrange equations, the n
transversality values at b, and the DuBois-Reymond identity.

The first Euler-Lagrange block lives on [a, b - tau] and carries both the
current and the (index-shifted) delayed summand; the second block lives on
[b - tau, b] where the delayed summand is null by convention, which makes it
the same code path with the shift masked.  Node ranges near a differentiated
block's edges use one-sided stencils and are flagged; flagged entries stay in
the report but are excluded from acceptance sup-norms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import functional as fn
from . import multipliers as ml
from . import problem as pb
from . import trajectory as tr
from .errors import ValidationError


def flag_width(n):
    # 5-point stencil reaches 2 nodes; up to 2n passes touch a block edge
    return 4 * n


def edge_flags(length, width):
    flags = np.zeros(length, dtype=bool)
    w = min(width, length)
    flags[:w] = True
    flags[length - w:] = True
    return flags


@dataclass(frozen=True)
class ResidualReport:
    grid: tr.Grid
    el1: np.ndarray        # (m, junction+1) on nodes 0..M-p
    el2: np.ndarray        # (m, p+1) on nodes M-p..M
    tc: np.ndarray         # (n, m)
    dbr: np.ndarray        # (M+1,)
    el1_flags: np.ndarray  # per-node one-sided-stencil flags
    el2_flags: np.ndarray
    dbr_flags: np.ndarray

    @property
    def norms(self):
        """Exact sup over every stored entry per block."""
        return {"el1": float(np.max(np.abs(self.el1))),
                "el2": float(np.max(np.abs(self.el2))),
                "tc": float(np.max(np.abs(self.tc))),
                "dbr": float(np.max(np.abs(self.dbr)))}

    @property
    def norms_unflagged(self):
        """Sup over the nodes away from one-sided stencil zones (acceptance)."""
        def masked(vals, flags):
            keep = np.abs(vals[..., ~flags])
            return float(np.max(keep)) if keep.size else 0.0
        return {"el1": masked(self.el1, self.el1_flags),
                "el2": masked(self.el2, self.el2_flags),
                "tc": float(np.max(np.abs(self.tc))),
                "dbr": masked(self.dbr, self.dbr_flags)}


def el_summand_blocks(p, grid, x, z, psi):
    """The l-indexed summand series for both blocks: list over l of
    (W_l restricted to [0, junction], C_l restricted to [junction, M])."""
    blocks = []
    for l in range(0, p.n + 1):
        W = ml.weighted_term(p, grid, x, z, psi, l)
        C = ml.current_term(p, grid, x, z, psi, l)
        blocks.append((W[..., :grid.junction + 1], C[..., grid.junction:]))
    return blocks


def el_blocks(p, grid, x, z, psi):
    """Euler-Lagrange residual arrays (el1, el2) with batch support."""
    blocks = el_summand_blocks(p, grid, x, z, psi)
    el1 = np.zeros_like(blocks[0][0])
    for l, (W, _) in enumerate(blocks):
        d = W if l == 0 else tr.differentiate_values(W, grid.h, l)
        el1 += d if l % 2 == 0 else -d
    if grid.p == 0:
        el2 = el1[..., -1:]
    else:
        el2 = np.zeros_like(blocks[0][1])
        for l, (_, C) in enumerate(blocks):
            d = C if l == 0 else tr.differentiate_values(C, grid.h, l)
            el2 += d if l % 2 == 0 else -d
    return el1, el2


def el_residual(p: pb.ProblemSpec, traj: tr.StateTrajectory,
                mult: ml.MultiplierSet):
    """(el1, el2) residual arrays for a single trajectory."""
    _require_z(traj)
    return el_blocks(p, traj.grid, traj.x, traj.z, mult.psi.values)


def transversality_values(p, grid, x, z, psi):
    """For k = 1..n the value at b of sum_l (-1)^l d^l/dt^l (psi dL/dx^(l+k));
    the delayed summand is already null there."""
    n = p.n
    C = [None] + [ml.current_term(p, grid, x, z, psi, r) for r in range(1, n + 1)]
    batch = C[1].shape[:-2]
    tc = np.zeros(batch + (n, p.m))
    for k in range(1, n + 1):
        acc = np.zeros(batch + (p.m,))
        for l in range(0, n - k + 1):
            series = C[l + k]
            d = series if l == 0 else tr.differentiate_values(series, grid.h, l)
            acc += d[..., -1] if l % 2 == 0 else -d[..., -1]
        tc[..., k - 1, :] = acc
    return tc


def transversality_residual(p: pb.ProblemSpec, traj: tr.StateTrajectory,
                            mult: ml.MultiplierSet) -> np.ndarray:
    _require_z(traj)
    return transversality_values(p, traj.grid, traj.x, traj.z, mult.psi.values)


def dbr_inner(p, grid, x, z, phi, psi):
    """sum_k phi_k . x^(k) + psi * L, the quantity whose total derivative the
    DuBois-Reymond identity pins down."""
    inner = psi * fn.eval_on_nodes(p, grid, x, z, "body")
    for k in range(1, p.n + 1):
        inner = inner + np.sum(phi[..., k - 1, :, :] * x[..., :, k, :], axis=-2)
    return inner


def dbr_residual(p: pb.ProblemSpec, traj: tr.StateTrajectory,
                 mult: ml.MultiplierSet) -> np.ndarray:
    """d/dt(inner) - psi dL/dt per node; the time derivative honors the
    junction split because phi switches its delayed term off at b - tau."""
    _require_z(traj)
    grid = traj.grid
    inner = dbr_inner(p, grid, traj.x, traj.z, mult.phi, mult.psi.values)
    dinner = ml.blockwise_derivative(inner, grid.h, 1, grid.junction)
    lt = fn.eval_on_nodes(p, grid, traj.x, traj.z, "t")
    return dinner - mult.psi.values * lt


def full_report(p: pb.ProblemSpec, traj: tr.StateTrajectory,
                mult: ml.MultiplierSet) -> ResidualReport:
    grid = traj.grid
    el1, el2 = el_residual(p, traj, mult)
    tc = transversality_residual(p, traj, mult)
    dbr = dbr_residual(p, traj, mult)
    w = flag_width(p.n)
    el1_flags = edge_flags(el1.shape[-1], w)
    el2_flags = edge_flags(el2.shape[-1], w)
    dbr_flags = np.zeros(grid.M + 1, dtype=bool)
    dbr_flags[:grid.junction + 1] |= edge_flags(grid.junction + 1, w)
    dbr_flags[grid.junction:] |= edge_flags(grid.M - grid.junction + 1, w)
    return ResidualReport(grid=grid, el1=el1, el2=el2, tc=tc, dbr=dbr,
                          el1_flags=el1_flags, el2_flags=el2_flags,
                          dbr_flags=dbr_flags)


def _require_z(traj):
    if traj.z is None:
        raise ValidationError("trajectory has no z series; simulate it first")
