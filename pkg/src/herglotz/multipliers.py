"""Costate series phi_k, k = 1..n, from the closed-form sum

    phi_k(t) = sum_{l=0}^{n-k} (-1)^(l+1) d^l/dt^l [ psi(t) dL/dx^(l+k)(t)
               + psi(t+tau) dL/dx_tau^(l+k)(t+tau) ]

with the delayed term null once t + tau passes b.  The delayed factor is an
index shift by the delay offset; time derivatives are taken separately on
[a, b-tau] and [b-tau, b] because the delayed term switches off at b-tau.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import functional as fn
from . import problem as pb
from . import trajectory as tr
from .errors import ValidationError


@dataclass(frozen=True)
class MultiplierSet:
    psi: fn.PsiSeries
    phi: np.ndarray  # (n, m, M+1)


def current_term(p, grid, x, z, psi, r):
    """psi(t) * dL/dx^(r)(t) for every component: (..., m, M+1)."""
    out = np.empty(np.broadcast_shapes(x.shape[:-3], psi.shape[:-1])
                   + (p.m, grid.M + 1))
    for j in range(1, p.m + 1):
        vals = fn.eval_on_nodes(p, grid, x, z, pb.slot_name(j, r))
        out[..., j - 1, :] = psi * vals
    return out


def delayed_term(p, grid, x, z, psi, r):
    """psi(t+tau) * dL/dx_tau^(r)(t+tau) per component, zero once t+tau > b."""
    q = grid.p
    out = np.zeros(np.broadcast_shapes(x.shape[:-3], psi.shape[:-1])
                   + (p.m, grid.M + 1))
    for j in range(1, p.m + 1):
        vals = psi * fn.eval_on_nodes(p, grid, x, z, pb.delayed_slot_name(j, r))
        if q == 0:
            out[..., j - 1, :] = vals
        else:
            out[..., j - 1, :grid.M + 1 - q] = vals[..., q:]
    return out


def weighted_term(p, grid, x, z, psi, r):
    return current_term(p, grid, x, z, psi, r) + delayed_term(p, grid, x, z, psi, r)


def blockwise_derivative(vals, h, l, junction):
    """d^l/dt^l taken independently on the node ranges [0, junction] and
    [junction, M]; the junction node keeps the left-range value."""
    if l == 0:
        return np.array(vals, dtype=float, copy=True)
    M = vals.shape[-1] - 1
    if junction >= M:
        return tr.differentiate_values(vals, h, l)
    out = np.empty_like(np.asarray(vals, dtype=float))
    out[..., :junction + 1] = tr.differentiate_values(vals[..., :junction + 1], h, l)
    out[..., junction + 1:] = tr.differentiate_values(vals[..., junction:], h, l)[..., 1:]
    return out


def compute_phi(p: pb.ProblemSpec, traj: tr.StateTrajectory,
                psi: fn.PsiSeries) -> MultiplierSet:
    """Evaluate the closed form for every k; no backward integration."""
    if traj.z is None:
        raise ValidationError("trajectory has no z series; simulate it first")
    grid = traj.grid
    n = p.n
    W = [None] + [weighted_term(p, grid, traj.x, traj.z, psi.values, r)
                  for r in range(1, n + 1)]
    phi = np.zeros((n, p.m, grid.M + 1))
    for k in range(1, n + 1):
        acc = np.zeros((p.m, grid.M + 1))
        for l in range(0, n - k + 1):
            term = blockwise_derivative(W[l + k], grid.h, l, grid.junction)
            acc += term if (l + 1) % 2 == 0 else -term
        phi[k - 1] = acc
    return MultiplierSet(psi=psi, phi=phi)


def write_multiplier_csv(grid, mult: MultiplierSet, path):
    """One row per node: t, psi, phi{k}_{j} (17 significant digits)."""
    n, m = mult.phi.shape[0], mult.phi.shape[1]
    header = ["t", "psi"] + [f"phi{k}_{j}" for k in range(1, n + 1)
                             for j in range(1, m + 1)]
    cols = [grid.nodes(), mult.psi.values] + [mult.phi[k, j]
                                              for k in range(n) for j in range(m)]
    tr._write_csv(path, header, cols)


def compute_phi_history(p: pb.ProblemSpec, traj: tr.StateTrajectory,
                        psi: fn.PsiSeries) -> np.ndarray:
    """phi_k on [a - tau, a] (delayed-term-only branch of the closed form):
    shape (n, m, p+1).  Only the reduction cross-checks need this."""
    grid = traj.grid
    n, q = p.n, grid.p
    # the t-argument shift makes this the delayed term's generator series
    # evaluated on [a, a + tau]
    S = [None] + [psi.values * np.stack(
        [fn.eval_on_nodes(p, grid, traj.x, traj.z, pb.delayed_slot_name(j, r))
         for j in range(1, p.m + 1)])
        for r in range(1, n + 1)]
    phi = np.zeros((n, p.m, q + 1))
    for k in range(1, n + 1):
        acc = np.zeros((p.m, q + 1))
        for l in range(0, n - k + 1):
            d = tr.differentiate_values(S[l + k], grid.h, l)[..., :q + 1]
            acc += d if (l + 1) % 2 == 0 else -d
        phi[k - 1] = acc
    return phi
