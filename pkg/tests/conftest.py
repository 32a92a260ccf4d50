import numpy as np
import pytest

from herglotz import build_problem, solve_extremal
from herglotz.solver import SolveOptions
from herglotz.specfile import ProblemFileContent


def make_problem(L, mu=("1",), a=0.0, b=1.0, tau=0.0, gamma=0.0, n=1, m=1):
    raw = ProblemFileContent(a=a, b=b, tau=tau, gamma=gamma, n=n, m=m,
                             lagrangian_src=L, history_src=tuple(mu))
    return build_problem(raw)


# canonical fixtures reused across the suite

def oscillator_problem():
    """tau=0, n=1: extremal solves xdd + xd + x = 0, x(0)=1, xd(1)=0."""
    return make_problem("0.5*xd1^2 - 0.5*x1^2 - z")


def oscillator_closed_form(t):
    w = np.sqrt(3.0) / 2.0
    B = (0.5 * np.cos(w) + w * np.sin(w)) / (w * np.cos(w) - 0.5 * np.sin(w))
    return np.exp(-t / 2.0) * (np.cos(w * t) + B * np.sin(w * t))


def oscillator_closed_form_src():
    w = float(np.sqrt(3.0) / 2.0)
    B = float((0.5 * np.cos(w) + w * np.sin(w)) / (w * np.cos(w) - 0.5 * np.sin(w)))
    return f"exp(-t/2)*(cos({w!r}*t) + ({B!r})*sin({w!r}*t))"


def quadratic_n2_problem():
    """tau=0, n=2: L = xdd^2/2 - z with mu = 1 + t; the extremal is 1 + t."""
    return make_problem("0.5*xdd1^2 - z", mu=("1 + t",), n=2)


def delayed_problem():
    """The autonomous delayed fixture: L = xd^2/2 + x_tau^2/4 - z."""
    return make_problem("0.5*xd1^2 + 0.25*tau_x1^2 - z", tau=0.5)


def delayed_velocity_problem():
    """Delayed-velocity fixture: L = xd^2/2 + xd_tau^2/2 - z, extremal x = 1."""
    return make_problem("0.5*xd1^2 + 0.5*tau_xd1^2 - z", tau=0.25)


@pytest.fixture(scope="session")
def oscillator_solved():
    p = oscillator_problem()
    res = solve_extremal(p, SolveOptions(M=1000, h=None))
    assert res.converged
    return p, res


@pytest.fixture(scope="session")
def quadratic_n2_solved():
    p = quadratic_n2_problem()
    res = solve_extremal(p, SolveOptions(M=100, h=None))
    assert res.converged
    return p, res


@pytest.fixture(scope="session")
def quadratic_n2_solved_fine():
    # at h=1e-3 the twice-repeated stencils leave a rounding floor of about
    # 5e-4 in the n=2 residual metric, so the tolerance sits above it; the
    # trajectory itself is exact to ~1e-11
    p = quadratic_n2_problem()
    res = solve_extremal(p, SolveOptions(M=1000, h=None, tol_r=1e-3))
    assert res.converged
    return p, res


@pytest.fixture(scope="session")
def delayed_solved():
    p = delayed_problem()
    res = solve_extremal(p, SolveOptions(M=1000, h=None))
    assert res.converged
    return p, res


@pytest.fixture(scope="session")
def delayed_velocity_solved():
    p = delayed_velocity_problem()
    res = solve_extremal(p, SolveOptions(M=400, h=None))
    assert res.converged
    return p, res
