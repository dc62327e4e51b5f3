import numpy as np
import pytest

from hamlock.errors import SolverError
from hamlock.functional import action, residual
from hamlock.model import builtin
from hamlock.seq import Sequence, random_sequence
from hamlock.solvers import StepControl, descend, newton_refine

from oracles import LAMBDA

GALLERY = [builtin("scalar_power", [1, 4]), builtin("coupled_pair", [1, 2]),
           builtin("periodic_scalar", [1, 2, 4])]


def sech_seed(amp=1.0, width=0.5, N=80):
    return Sequence.from_function(-N, N, lambda t: amp / np.cosh(width * t))


def test_descend_from_zero(cubic):
    tr = descend(Sequence.zeros(), cubic, 10)
    assert tr.actions == [0.0] and tr.final.is_zero
    tr = descend(Sequence.zeros(), cubic, 10, window=(-5, 5))
    assert all(a == 0.0 for a in tr.actions) and tr.converged


def test_descend_requires_steps(cubic):
    with pytest.raises(ValueError):
        descend(Sequence.delta(0, 1.0), cubic, 0)


@pytest.mark.parametrize("m", GALLERY, ids=lambda m: m.name)
def test_descend_monotone(m):
    rng = np.random.default_rng(0)
    for scale in (0.3, 1.0, 2.0):
        u0 = random_sequence(rng, -15, 15, m.dim, scale=scale)
        tr = descend(u0, m, 60, StepControl(floor=-1e6), window=(-20, 20))
        a = np.array(tr.actions)
        assert np.all(np.diff(a) <= 0)
        assert len(tr.iterates) == len(tr.actions) == len(tr.grad_norms) == len(tr.step_sizes)
        # every accepted step obeys the Armijo rule
        g2 = np.array(tr.grad_norms) ** 2
        h = np.array(tr.step_sizes)
        assert np.all(a[1:] <= a[:-1] - 1e-4 * h[1:] * g2[:-1] + 1e-12 * np.abs(a[:-1]))


def test_descend_below_bump_collapses_to_zero(cubic, cubic_bump):
    v = cubic_bump.solution
    tr = descend(0.8 * v, cubic, 200, window=(-80, 80))
    assert tr.converged and not tr.stagnated
    assert tr.actions[-1] >= 0 and tr.actions[-1] <= 1e-20
    g = np.array(tr.grad_norms)
    assert np.all(np.diff(g[2:]) < 0)


def test_descend_above_bump_escapes(cubic, cubic_bump):
    # past the ridge the flow runs down to -infinity
    v = cubic_bump.solution
    tr = descend(1.2 * v, cubic, 200, StepControl(floor=-1e3), window=(-80, 80))
    assert tr.actions[-1] < -1e3
    assert np.all(np.diff(tr.actions) <= 0)


def test_flow_csv(cubic):
    tr = descend(Sequence.delta(0, 0.5), cubic, 5, window=(-5, 5))
    lines = tr.to_csv().splitlines()
    assert lines[0] == "iter,f,grad_norm,step" and len(lines) == len(tr) + 1


def test_newton_fixed_point(cubic, cubic_bump):
    v = cubic_bump.solution
    rep = newton_refine(v, cubic)
    assert rep.iterations <= 1 and rep.residual_sup <= 1e-12 and rep.converged


def test_newton_zero_seed(cubic):
    rep = newton_refine(Sequence.zeros(), cubic, window=(-10, 10))
    assert rep.converged and rep.zero_solution and rep.star_norm <= 1e-12


def test_newton_sech_seed(cubic):
    rep = newton_refine(sech_seed(), cubic, window=(-80, 80))
    assert rep.converged and rep.residual_sup <= 1e-10 and not rep.zero_solution
    assert rep.star_grad_norm <= 1e-8
    v = rep.solution
    ratios = [abs(v(t + 1)[0] / v(t)[0]) for t in range(5, 16)]
    assert max(abs(r - LAMBDA) for r in ratios) <= 1e-4
    r = residual(v, cubic)
    assert r.sup_norm() <= 1e-10


def test_newton_quadratic_tail(cubic):
    h = newton_refine(sech_seed(), cubic, window=(-80, 80)).residual_history
    assert len(h) >= 4
    C = max(h[k + 1] / h[k] ** 2 for k in range(len(h) - 3, len(h) - 1))
    assert C < 1e3


def test_newton_coupled_pair():
    m = builtin("coupled_pair", [1, 2])
    u0 = Sequence(-60, np.stack([1.0 / np.cosh(0.5 * np.arange(-60, 61)), np.zeros(121)], axis=1))
    rep = newton_refine(u0, m)
    assert rep.converged and not rep.zero_solution and action(rep.solution, m) > 0


def test_newton_failure_paths(cubic):
    with pytest.raises(ValueError):
        newton_refine(sech_seed(), cubic, tol_res=0.0)
    rep = newton_refine(sech_seed(), cubic, max_iter=1)
    assert not rep.converged and "no convergence" in rep.message
    with pytest.raises(SolverError):
        newton_refine(sech_seed(), cubic, max_iter=1, raise_on_failure=True)


def test_solve_report_dict(cubic, cubic_bump):
    d = cubic_bump.to_dict()
    for key in ("converged", "residual_sup", "action", "star_grad_norm", "iterations", "window_used"):
        assert key in d
    assert d["window_used"] == 80
