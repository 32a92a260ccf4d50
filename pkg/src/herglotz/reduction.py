"""Reduction of the delayed problem to a stacked non-delayed optimal control
problem on one delay interval.

With the origin shifted to the left endpoint and b - a = N tau (after
padding), interval i carries the states x^{k;i}(t) = x^(k)(a + t + (i-1)tau)
and z_j(t) = z(a + t + (j-1)tau) for local t in [0, tau]; the control of
interval i is the top derivative x^{n;i}.  When b - a is not an integer
multiple of tau, the last interval's dynamics are truncated at
cut = b - a - (N-1) tau and its states are null beyond the cut.

Used as a verification oracle: the direct solve path never goes through the
reduced form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import expr as ex
from . import functional as fn
from . import multipliers as ml
from . import problem as pb
from . import trajectory as tr
from .errors import ValidationError, ZeroDelay

_EXACT = 1e-9


def state_name(k: int, i: int, j: int = 1, m: int = 1) -> str:
    return f"x{k}_{i}" if m == 1 else f"x{k}_{i}_{j}"


def z_name(j: int) -> str:
    return f"z{j}"


@dataclass(frozen=True)
class ReducedProblem:
    problem: pb.ProblemSpec | None
    N: int
    tau: float
    n: int
    m: int
    gamma: float
    cut: float | None  # local truncation time of interval N, None when exact
    lagrangians: tuple  # L_1 .. L_N as expressions over the stacked names
    stacked_history: tuple  # [j][k] expressions of local t for the i=0 states

    def interval_args(self, j: int):
        """Positional argument names of L_j, mirroring the delayed problem's
        canonical order: t, interval-j slots, interval-(j-1) slots, z_j."""
        cur = [state_name(k, j, jc, self.m)
               for jc in range(1, self.m + 1) for k in range(self.n + 1)]
        prev = [state_name(k, j - 1, jc, self.m)
                for jc in range(1, self.m + 1) for k in range(self.n + 1)]
        return ["t"] + cur + prev + [z_name(j)]


def guinn_reduce(p: pb.ProblemSpec) -> ReducedProblem:
    """Build the stacked problem; raises ZeroDelay when tau = 0."""
    if p.tau == 0.0:
        raise ZeroDelay("the reduction is defined for tau > 0")
    span = p.b - p.a
    ratio = span / p.tau
    if abs(ratio - round(ratio)) <= _EXACT:
        N = int(round(ratio))
        cut = None
    else:
        N = int(np.ceil(ratio))
        cut = span - (N - 1) * p.tau
    lags = []
    for j in range(1, N + 1):
        mapping = {}
        offset = p.a + (j - 1) * p.tau
        mapping["t"] = ex.BinOp("+", ex.Var("t"), ex.Num(offset)) if offset else ex.Var("t")
        for jc in range(1, p.m + 1):
            for k in range(p.n + 1):
                mapping[pb.slot_name(jc, k)] = ex.Var(state_name(k, j, jc, p.m))
                mapping[pb.delayed_slot_name(jc, k)] = ex.Var(state_name(k, j - 1, jc, p.m))
        mapping["z"] = ex.Var(z_name(j))
        lags.append(ex.simplify(ex.substitute(p.lagrangian.body, mapping)))
    hist = []
    for jc in range(1, p.m + 1):
        row = []
        for k in range(p.n + 1):
            # x^{k;0}(t) = mu^(k)(a - tau + t) on local t in [0, tau]
            shift = ex.BinOp("+", ex.Var("t"), ex.Num(p.a - p.tau))
            row.append(ex.simplify(ex.substitute(p.history_derivs[jc - 1][k],
                                                 {"t": shift})))
        hist.append(tuple(row))
    return ReducedProblem(problem=p, N=N, tau=p.tau, n=p.n, m=p.m,
                          gamma=p.gamma, cut=cut, lagrangians=tuple(lags),
                          stacked_history=tuple(hist))


# ---------------------------------------------------------------------------
# change of variables

@dataclass(frozen=True)
class StackedTrajectory:
    rp: ReducedProblem
    h: float
    P: int  # steps per delay interval
    cut_steps: int  # = P when not padded
    x: np.ndarray  # (N+1, m, n+1, P+1); index 0 is the history interval
    z: np.ndarray | None  # (N, P+1)


def map_trajectory(rp: ReducedProblem, traj: tr.StateTrajectory) -> StackedTrajectory:
    """Push a delayed-problem trajectory through the change of variables.
    Exact index bookkeeping, no interpolation."""
    g = traj.grid
    P = g.p
    if P == 0:
        raise ZeroDelay("trajectory grid has no delay offset")
    cut_steps = g.M - (rp.N - 1) * P
    if not 0 < cut_steps <= P:
        raise ValidationError(
            f"grid M={g.M} inconsistent with N={rp.N} intervals of {P} steps")
    m, n = rp.m, rp.n
    x = np.zeros((rp.N + 1, m, n + 1, P + 1))
    tloc = g.h * np.arange(P + 1)
    for jc in range(1, m + 1):
        for k in range(n + 1):
            vals = ex.compile_expr(rp.stacked_history[jc - 1][k], ["t"])(tloc)
            x[0, jc - 1, k] = np.broadcast_to(np.asarray(vals, dtype=float),
                                              tloc.shape)
    # at local tau the history interval touches t = a, where the top
    # derivative (the control) may jump; use the trajectory's right limit
    # there to match the delayed-slot convention of the direct simulation
    x[0, :, n, P] = traj.x[:, n, 0]
    for i in range(1, rp.N + 1):
        lo = (i - 1) * P
        hi = min(lo + P, g.M)
        x[i, :, :, :hi - lo + 1] = traj.x[:, :, lo:hi + 1]
        # padded tail of the last interval stays zero per the construction
    z = None
    if traj.z is not None:
        z = np.zeros((rp.N, P + 1))
        for j in range(1, rp.N + 1):
            lo = (j - 1) * P
            hi = min(lo + P, g.M)
            z[j - 1, :hi - lo + 1] = traj.z[lo:hi + 1]
            z[j - 1, hi - lo + 1:] = traj.z[g.M]  # dz_N/dt = 0 past the cut
    return StackedTrajectory(rp=rp, h=g.h, P=P, cut_steps=cut_steps, x=x, z=z)


def unmap_trajectory(rp: ReducedProblem, stacked: StackedTrajectory,
                     traj: tr.StateTrajectory) -> tr.StateTrajectory:
    """Inverse change of variables back onto the original grid (exact)."""
    g = traj.grid
    P = stacked.P
    x = np.empty_like(traj.x)
    for i in range(1, rp.N + 1):
        lo = (i - 1) * P
        hi = min(lo + P, g.M)
        x[:, :, lo:hi + 1] = stacked.x[i, :, :, :hi - lo + 1]
    z = None
    if stacked.z is not None:
        z = np.empty(g.M + 1)
        for j in range(1, rp.N + 1):
            lo = (j - 1) * P
            hi = min(lo + P, g.M)
            z[lo:hi + 1] = stacked.z[j - 1, :hi - lo + 1]
    return tr.StateTrajectory(problem=traj.problem, grid=g, x=x, z=z)


# ---------------------------------------------------------------------------
# forward simulation of the stacked system

def _interval_callable(rp, j):
    return ex.compile_expr(rp.lagrangians[j - 1], rp.interval_args(j))


def _stacked_args(rp, stacked, j):
    """Node and midpoint argument arrays of L_j (z excluded).

    Two conventions keep this bit-compatible with the direct simulation:
    the history interval's midpoints come from the exact history
    expressions, and a padded last interval interpolates only over its
    live range instead of reaching into the zeroed tail."""
    cur, prev = stacked.x[j], stacked.x[j - 1]
    h = stacked.h
    P = stacked.P
    tloc = h * np.arange(P + 1)
    tmid = tloc[:-1] + 0.5 * h
    if j == rp.N and stacked.cut_steps < P:
        c = stacked.cut_steps
        mid_cur = np.zeros(cur.shape[:-1] + (P,))
        mid_cur[..., :c] = tr.midpoint_values(cur[..., :c + 1], h)
    else:
        mid_cur = tr.midpoint_values(cur, h)
    if j == 1:
        mid_prev = np.empty(prev.shape[:-1] + (P,))
        for jc in range(rp.m):
            for k in range(rp.n + 1):
                vals = ex.compile_expr(rp.stacked_history[jc][k], ["t"])(tmid)
                mid_prev[jc, k] = np.broadcast_to(np.asarray(vals, dtype=float),
                                                  tmid.shape)
    else:
        mid_prev = tr.midpoint_values(prev, h)
    nodes = [tloc]
    mids = [tmid]
    for block, mblock in ((cur, mid_cur), (prev, mid_prev)):
        for jc in range(rp.m):
            for k in range(rp.n + 1):
                nodes.append(block[jc, k])
                mids.append(mblock[jc, k])
    return nodes, mids


def simulate_reduced(rp: ReducedProblem, stacked: StackedTrajectory) -> np.ndarray:
    """March z_j across [0, tau] for j = 1..N with the coupling conditions
    z_j(0) = z_{j-1}(tau); the padded interval integrates only to the cut.
    Returns the (N, P+1) stacked z array."""
    P = stacked.P
    h = stacked.h
    zr = np.empty((rp.N, P + 1))
    z0 = rp.gamma
    for j in range(1, rp.N + 1):
        L = _interval_callable(rp, j)
        nodes, mids = _stacked_args(rp, stacked, j)
        stop = stacked.cut_steps if j == rp.N else P
        zr[j - 1, 0] = z0
        t = nodes[0]
        with np.errstate(all="ignore"):
            for i in range(P):
                zi = zr[j - 1, i]
                if i >= stop:
                    zr[j - 1, i + 1] = zi
                    continue
                ai = [A[i] for A in nodes[1:]]
                am = [A[i] for A in mids[1:]]
                an = [A[i + 1] for A in nodes[1:]]
                tm = t[i] + 0.5 * h
                k1 = L(t[i], *ai, zi)
                k2 = L(tm, *am, zi + 0.5 * h * k1)
                k3 = L(tm, *am, zi + 0.5 * h * k2)
                k4 = L(t[i + 1], *an, zi + h * k3)
                zr[j - 1, i + 1] = zi + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        z0 = zr[j - 1, P]
    return zr


@dataclass(frozen=True)
class EquivalenceDefects:
    objective: float  # |z_N(tau) - z(b)|
    coupling: float   # sup state mismatch at the coupling nodes


def verify_reduction_equivalence(p: pb.ProblemSpec,
                                 traj: tr.StateTrajectory) -> EquivalenceDefects:
    """Map the trajectory through the reduction, re-integrate the stacked z
    chain, and compare its terminal value with the direct z(b)."""
    if traj.z is None:
        raise ValidationError("trajectory has no z series; simulate it first")
    rp = guinn_reduce(p)
    stacked = map_trajectory(rp, traj)
    zr = simulate_reduced(rp, stacked)
    objective = abs(float(zr[-1, -1]) - float(traj.z[-1]))
    coupling = 0.0
    # the coupling conditions bind the states x^{k;i}, k = 0..n-1; the top
    # order is the control and may jump between intervals
    for i in range(1, rp.N + 1):
        mismatch = np.max(np.abs(stacked.x[i, :, :rp.n, 0]
                                 - stacked.x[i - 1, :, :rp.n, -1]))
        coupling = max(coupling, float(mismatch))
    return EquivalenceDefects(objective=objective, coupling=coupling)


# ---------------------------------------------------------------------------
# reduced multipliers and Hamiltonian

def reduced_psi(rp: ReducedProblem, stacked: StackedTrajectory) -> np.ndarray:
    """Per-interval psi_j on [0, tau] with the coupling terminal conditions
    (psi_N(tau) = 1, psi_j(tau) = psi_{j+1}(0)); shape (N+1, P+1), the last
    row being the closing interval's constant 1."""
    P, h = stacked.P, stacked.h
    psi = np.ones((rp.N + 1, P + 1))
    terminal = 1.0
    for j in range(rp.N, 0, -1):
        fnz = ex.compile_expr(
            ex.differentiate(rp.lagrangians[j - 1], z_name(j)), rp.interval_args(j))
        nodes, _ = _stacked_args(rp, stacked, j)
        with np.errstate(all="ignore"):
            g = fnz(*nodes, stacked.z[j - 1])
        g = np.broadcast_to(np.asarray(g, dtype=float), (P + 1,)).copy()
        if j == rp.N and stacked.cut_steps < P:
            c = stacked.cut_steps
            J = np.zeros(P + 1)
            J[:c + 1] = fn.integral_to_b(g[:c + 1], h)
            psi[j - 1] = terminal * np.exp(J)
        else:
            psi[j - 1] = terminal * np.exp(fn.integral_to_b(g, h))
        terminal = psi[j - 1, 0]
    return psi


@dataclass(frozen=True)
class ReducedMultipliers:
    psi: np.ndarray  # (N+1, P+1)
    phi: np.ndarray  # (n, N+1, m, P+1); interval index 0 is the history block


def map_multipliers(rp: ReducedProblem, traj: tr.StateTrajectory,
                    mult: ml.MultiplierSet) -> ReducedMultipliers:
    """Restrict the delayed-problem multipliers to the stacked intervals,
    including the history-interval costates."""
    g = traj.grid
    P = g.p
    phi_hist = ml.compute_phi_history(rp.problem, traj, mult.psi)
    phi = np.zeros((rp.n, rp.N + 1, rp.m, P + 1))
    psi = np.ones((rp.N + 1, P + 1))
    phi[:, 0, :, :] = phi_hist
    for i in range(1, rp.N + 1):
        lo = (i - 1) * P
        hi = min(lo + P, g.M)
        phi[:, i, :, :hi - lo + 1] = mult.phi[:, :, lo:hi + 1]
        psi[i - 1, :hi - lo + 1] = mult.psi.values[lo:hi + 1]
    return ReducedMultipliers(psi=psi, phi=phi)


def reduced_hamiltonian(rp: ReducedProblem, stacked: StackedTrajectory,
                        mults: ReducedMultipliers) -> np.ndarray:
    """H(t) = sum_l sum_i phi_{l;i} . x^{l;i} + sum_j psi_j L_j per node of
    [0, tau]; the closing interval contributes nothing (L_{N+1} = 0)."""
    P = stacked.P
    H = np.zeros(P + 1)
    for l in range(1, rp.n + 1):
        for i in range(rp.N + 1):
            H += np.sum(mults.phi[l - 1, i] * stacked.x[i, :, l, :], axis=0)
    for j in range(1, rp.N + 1):
        L = _interval_callable(rp, j)
        nodes, _ = _stacked_args(rp, stacked, j)
        with np.errstate(all="ignore"):
            lv = L(*nodes, stacked.z[j - 1])
        lv = np.broadcast_to(np.asarray(lv, dtype=float), (P + 1,)).copy()
        if j == rp.N and stacked.cut_steps < P:
            lv[stacked.cut_steps + 1:] = 0.0
        H += mults.psi[j - 1] * lv
    return H


# ---------------------------------------------------------------------------
# reduced spec file

def write_reduced_file(rp: ReducedProblem, path):
    """Emit the stacked problem in the bracket-section key=value format so
    third-party tools can consume it; round-trips through
    read_reduced_file."""
    lines = ["[reduced]",
             f"tau = {rp.tau!r}",
             f"N = {rp.N}",
             f"n = {rp.n}",
             f"m = {rp.m}",
             f"gamma = {rp.gamma!r}"]
    if rp.cut is not None:
        lines.append(f"cut = {rp.cut!r}")
    lines.append("")
    lines.append("[intervals]")
    for j, e in enumerate(rp.lagrangians, start=1):
        lines.append(f'L{j} = "{ex.unparse(e)}"')
    lines.append("")
    lines.append("[stacked_history]")
    for jc in range(1, rp.m + 1):
        for k in range(rp.n + 1):
            name = state_name(k, 0, jc, rp.m)
            lines.append(f'{name} = "{ex.unparse(rp.stacked_history[jc - 1][k])}"')
    text = "\n".join(lines) + "\n"
    if hasattr(path, "write"):
        path.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def read_reduced_file(path) -> ReducedProblem:
    """Parse a file produced by write_reduced_file (problem link is None)."""
    from . import specfile
    if hasattr(path, "read"):
        text = path.read()
    else:
        with open(path) as fh:
            text = fh.read()
    sections = specfile.parse_sections(text)
    problems = []
    for name in sections:
        if name not in ("reduced", "intervals", "stacked_history"):
            problems.append(f"unknown section [{name}]")
    head = dict(sections.get("reduced", []))
    for key in ("tau", "N", "n", "m", "gamma"):
        if key not in head:
            problems.append(f"missing key '{key}' in [reduced]")
    if problems:
        raise ValidationError(problems)
    N = int(float(head["N"]))
    n = int(float(head["n"]))
    m = int(float(head["m"]))
    ivs = dict(sections.get("intervals", []))
    lags = []
    for j in range(1, N + 1):
        if f"L{j}" not in ivs:
            problems.append(f"missing key 'L{j}' in [intervals]")
        else:
            lags.append(ex.parse_expression(ivs[f"L{j}"]))
    hist_kv = dict(sections.get("stacked_history", []))
    hist = []
    for jc in range(1, m + 1):
        row = []
        for k in range(n + 1):
            name = state_name(k, 0, jc, m)
            if name not in hist_kv:
                problems.append(f"missing key '{name}' in [stacked_history]")
            else:
                row.append(ex.parse_expression(hist_kv[name]))
        hist.append(tuple(row))
    if problems:
        raise ValidationError(problems)
    return ReducedProblem(problem=None, N=N, tau=float(head["tau"]), n=n, m=m,
                          gamma=float(head["gamma"]),
                          cut=float(head["cut"]) if "cut" in head else None,
                          lagrangians=tuple(lags), stacked_history=tuple(hist))
