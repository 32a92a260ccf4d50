"""Problem instances: Lagrangian with precomputed partials, interval, delay,
order, dimension, history and initial value.

Slot naming convention (flat variable names for the expression engine):

* ``t`` and ``z``
* component j, derivative order k: ``x{j}`` (k=0), ``xd{j}`` (k=1),
  ``xdd{j}`` (k=2), ``x{j}_d{k}`` (k >= 3)
* the same quantity evaluated at t - tau carries a ``tau_`` prefix,
  e.g. ``tau_xd1`` for the delayed first derivative of component 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .errors import OutOfHistoryRange, UnboundVariable, ValidationError

_FD_POINTS = 10
_FD_RELTOL = 1e-6


def slot_name(j: int, k: int) -> str:
    if k == 0:
        return f"x{j}"
    if k == 1:
        return f"xd{j}"
    if k == 2:
        return f"xdd{j}"
    return f"x{j}_d{k}"


def delayed_slot_name(j: int, k: int) -> str:
    return "tau_" + slot_name(j, k)


def arg_names(n: int, m: int) -> list[str]:
    """Canonical argument order used by every compiled Lagrangian callable:
    t, current slots (j outer, k inner), delayed slots, z."""
    cur = [slot_name(j, k) for j in range(1, m + 1) for k in range(n + 1)]
    tau = [delayed_slot_name(j, k) for j in range(1, m + 1) for k in range(n + 1)]
    return ["t"] + cur + tau + ["z"]


@dataclass(frozen=True)
class LagrangianSpec:
    """L plus its symbolic partial derivative w.r.t. every argument slot."""

    n: int
    m: int
    body: ex.Expr
    partials: dict  # keyed by slot name ('t', 'z', x-slots, tau_ slots)
    _compiled: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def args(self):
        return arg_names(self.n, self.m)

    def compiled(self, which="body"):
        """Positional numpy callable for the body or a partial ('t', 'z',
        a slot name).  Cached per spec instance."""
        fn = self._compiled.get(which)
        if fn is None:
            e = self.body if which == "body" else self.partials[which]
            fn = ex.compile_expr(e, self.args)
            self._compiled[which] = fn
        return fn


def make_lagrangian(n: int, m: int, body) -> LagrangianSpec:
    """Differentiate the body w.r.t. every slot; rejects free variables
    outside the slot set."""
    if isinstance(body, str):
        body = ex.parse_expression(body)
    names = arg_names(n, m)
    extra = ex.free_variables(body) - set(names)
    if extra:
        raise ValidationError(
            [f"Lagrangian uses unknown variable '{v}'" for v in sorted(extra)])
    partials = {name: ex.differentiate(body, name) for name in names}
    # 2 + 2*m*(n+1) entries: t, z, and current+delayed per (j, k)
    return LagrangianSpec(n=n, m=m, body=body, partials=partials)


@dataclass(frozen=True)
class ProblemSpec:
    a: float
    b: float
    tau: float
    gamma: float
    lagrangian: LagrangianSpec
    history: tuple  # m expressions of t
    history_derivs: tuple  # [j][k] = k-th symbolic derivative, k = 0..n
    _compiled: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n(self):
        return self.lagrangian.n

    @property
    def m(self):
        return self.lagrangian.m

    def history_fn(self, j, k):
        """Compiled mu_j^(k), callable on arrays of t."""
        key = (j, k)
        fn = self._compiled.get(key)
        if fn is None:
            fn = ex.compile_expr(self.history_derivs[j - 1][k], ["t"])
            self._compiled[key] = fn
        return fn


def history_derivative(p: ProblemSpec, j: int, k: int, t: float) -> float:
    """mu_j^(k)(t) for t in [a - tau, a]; k up to n (the delayed slots need
    the n-th derivative of the history)."""
    slack = 1e-9 * max(1.0, abs(p.b - p.a))
    if t < p.a - p.tau - slack or t > p.a + slack:
        raise OutOfHistoryRange(
            f"t={t!r} outside history interval [{p.a - p.tau!r}, {p.a!r}]")
    return ex.evaluate(p.history_derivs[j - 1][k], {"t": t})


def build_problem(raw) -> ProblemSpec:
    """Construct and validate a ProblemSpec from parsed file content (or any
    object with the same attributes).  Collects every violated invariant
    into a single ValidationError."""
    problems = []

    n, m = raw.n, raw.m
    if not (isinstance(n, int) and n >= 1):
        problems.append(f"order n must be an integer >= 1, got {n!r}")
    if not (isinstance(m, int) and m >= 1):
        problems.append(f"dimension m must be an integer >= 1, got {m!r}")
    if problems:
        raise ValidationError(problems)

    a, b, tau = float(raw.a), float(raw.b), float(raw.tau)
    if not b > a:
        problems.append(f"interval endpoints must satisfy b > a, got a={a!r}, b={b!r}")
    if not (0.0 <= tau < b - a):
        problems.append(f"delay must satisfy 0 <= tau < b - a, got tau={tau!r}")

    lag = None
    try:
        lag = make_lagrangian(n, m, raw.lagrangian_src)
    except ValidationError as err:
        problems.extend(f"lagrangian: {msg}" for msg in err.problems)
    except Exception as err:  # syntax errors, unknown functions
        problems.append(f"lagrangian: {err}")

    if len(raw.history_src) != m:
        problems.append(f"need {m} history expressions, got {len(raw.history_src)}")
        raise ValidationError(problems)

    history = []
    history_derivs = []
    for j in range(1, m + 1):
        try:
            mu = ex.parse_expression(raw.history_src[j - 1])
            extra = ex.free_variables(mu) - {"t"}
            if extra:
                problems.append(
                    f"history mu{j} may only depend on t, found {sorted(extra)}")
                continue
            derivs = [mu]
            for _ in range(n):
                derivs.append(ex.differentiate(derivs[-1], "t"))
            history.append(mu)
            history_derivs.append(tuple(derivs))
        except Exception as err:
            problems.append(f"history mu{j}: {err}")

    if lag is not None and not problems:
        problems.extend(_check_partials_fd(lag, a, b))

    if problems:
        raise ValidationError(problems)

    return ProblemSpec(a=a, b=b, tau=tau, gamma=float(raw.gamma),
                       lagrangian=lag, history=tuple(history),
                       history_derivs=tuple(history_derivs))


def _check_partials_fd(lag, a, b, rng=None, points=_FD_POINTS, reltol=_FD_RELTOL):
    """Compare each symbolic partial with a central finite difference at
    random interior points.  Returns a list of failure descriptions."""
    rng = rng or np.random.default_rng(12345)
    failures = []
    names = lag.args
    checked = 0
    attempts = 0
    while checked < points and attempts < 40 * points:
        attempts += 1
        binding = {name: rng.uniform(0.6, 1.4) for name in names}
        binding["t"] = rng.uniform(a, b)
        results = _fd_compare_at(lag, binding, reltol)
        if results is None:
            continue  # non-finite evaluation; resample
        checked += 1
        failures.extend(results)
    if checked < points:
        failures.append("could not find enough finite evaluation points for the "
                        "finite-difference validation of the partials")
    return failures


def _fd_compare_at(lag, binding, reltol, h=1e-6):
    """Failure messages at one evaluation point, or None when the point is
    unusable (non-finite values, domain errors)."""
    results = []
    try:
        for name in lag.args:
            sym = ex.evaluate(lag.partials[name], binding)
            lo = dict(binding)
            hi = dict(binding)
            lo[name] -= h
            hi[name] += h
            fd = (ex.evaluate(lag.body, hi) - ex.evaluate(lag.body, lo)) / (2 * h)
            if not (np.isfinite(sym) and np.isfinite(fd)):
                return None
            if abs(sym - fd) > reltol * (1.0 + abs(sym)):
                results.append(
                    f"partial d/d{name} disagrees with finite differences at "
                    f"t={binding['t']:.6g}: symbolic {sym:.9g} vs fd {fd:.9g}")
    except Exception:
        return None
    return results


def check_derivatives(p: ProblemSpec, points=_FD_POINTS, seed=4242):
    """Finite-difference audit of every partial; returns a list of rows
    (slot, t, symbolic, fd, rel_err).  Used by the check-derivs command."""
    rng = np.random.default_rng(seed)
    lag = p.lagrangian
    rows = []
    checked = 0
    attempts = 0
    while checked < points and attempts < 40 * points:
        attempts += 1
        binding = {name: rng.uniform(0.6, 1.4) for name in lag.args}
        binding["t"] = rng.uniform(p.a, p.b)
        try:
            sample = []
            for name in lag.args:
                sym = ex.evaluate(lag.partials[name], binding)
                lo, hi = dict(binding), dict(binding)
                lo[name] -= 1e-6
                hi[name] += 1e-6
                fd = (ex.evaluate(lag.body, hi) - ex.evaluate(lag.body, lo)) / 2e-6
                if not (np.isfinite(sym) and np.isfinite(fd)):
                    raise ArithmeticError
                rel = abs(sym - fd) / (1.0 + abs(sym))
                sample.append((name, binding["t"], sym, fd, rel))
        except Exception:
            continue
        rows.extend(sample)
        checked += 1
    return rows
