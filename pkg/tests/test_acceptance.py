"""Acceptance criteria, one test each, printing a PASS/FAIL line per criterion.

Run directly (``python3 tests/test_acceptance.py``) or through pytest; the
lines are printed even when pytest captures output.
"""

import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hamlock.diagnostics import cc_classify, mass_profile  # noqa: E402
from hamlock.errors import ModelError  # noqa: E402
from hamlock.functional import action, apply_operator_A, grad_l2  # noqa: E402
from hamlock.model import builtin, check_assumptions  # noqa: E402
from hamlock.mountainpass import find_one_bump, negative_endpoint  # noqa: E402
from hamlock.multibump import MultibumpConfig, find_multibump, make_separation  # noqa: E402
from hamlock.seq import (IndexSet, Sequence, apply_cutoff, inner_l2, inner_star, norm_star,  # noqa: E402
                         ramp_cutoff, random_sequence, shift, window_energy)

from oracles import LAMBDA, shooting_bump  # noqa: E402

CUBIC = builtin("scalar_power", [1, 4])
PAIR = builtin("coupled_pair", [1, 2])
PERIODIC = builtin("periodic_scalar", [1, 2, 4])

_capture = None


def _line(n, title, ok, detail):
    msg = f"[acceptance] {n:>2}. {title}: {'PASS' if ok else 'FAIL'} ({detail})"
    if _capture is not None:
        with _capture.disabled():
            print(msg)
    else:
        print(msg)
    return ok


@pytest.fixture(autouse=True)
def _uncaptured(capsys):
    global _capture
    _capture = capsys
    yield
    _capture = None


_bump_cache = {}


def _bump():
    if "rep" not in _bump_cache:
        t0 = time.perf_counter()
        _bump_cache["rep"] = find_one_bump(CUBIC)
        _bump_cache["time"] = time.perf_counter() - t0
    return _bump_cache["rep"], _bump_cache["time"]


def test_01_gradient_consistency():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    h = 1e-5
    worst = 0.0
    for i in range(50):
        m = CUBIC if i % 2 == 0 else PAIR
        u = random_sequence(rng, -32, 31, m.dim, scale=0.5)
        v = random_sequence(rng, -32, 31, m.dim, scale=0.5)
        d = inner_l2(grad_l2(u, m), v)
        fd = (action(u + h * v, m) - action(u - h * v, m)) / (2 * h)
        worst = max(worst, abs(d - fd) / (1 + abs(d)))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-6 and dt < 2.0
    assert _line(1, "gradient consistency", ok, f"max rel err {worst:.2e} <= 1e-6, {dt:.2f}s < 2s")


def test_02_summation_by_parts():
    rng = np.random.default_rng(102)
    worst = 0.0
    for i in range(100):
        m = (CUBIC, PAIR, PERIODIC)[i % 3]
        u = random_sequence(rng, -20, 15, m.dim)
        v = random_sequence(rng, -12, 25, m.dim)
        a = inner_star(u, v, m)
        b = inner_l2(apply_operator_A(u, m), v)
        worst = max(worst, abs(a - b) / max(abs(a), 1e-300))
    assert _line(2, "summation by parts", worst <= 1e-12, f"max rel err {worst:.2e} <= 1e-12")


def test_03_one_bump_reproduction():
    rep, dt = _bump()
    v = rep.solution
    ratios = np.array([v(t + 1)[0] / v(t)[0] for t in range(5, 16)])
    ratio_err = float(np.max(np.abs(ratios - LAMBDA)))
    ts, x = shooting_bump()
    oracle = Sequence(int(ts[0]), x)
    lo, hi = min(v.base, oracle.base), max(v.end, oracle.end)
    shoot_err = float(np.max(np.abs(v.on(lo, hi) - oracle.on(lo, hi))))
    ok = (rep.converged and rep.residual_sup <= 1e-10 and ratio_err <= 1e-4
          and shoot_err <= 1e-8 and dt < 10.0)
    assert _line(3, "one-bump reproduction", ok,
                 f"residual {rep.residual_sup:.1e} <= 1e-10, tail ratio err {ratio_err:.1e} <= 1e-4, "
                 f"shooting err {shoot_err:.1e} <= 1e-8, {dt:.2f}s < 10s")


def test_04_mountain_pass_geometry():
    rep, _ = _bump()
    w = negative_endpoint(CUBIC)
    f0 = action(Sequence.zeros(), CUBIC)
    fw = action(w, CUBIC)
    hist = np.array(rep.extras["minimax"]["history"])
    nonincreasing = bool(np.all(np.diff(hist) <= 0))
    alpha, beta = CUBIC.alpha, CUBIC.beta
    bound = (0.5 - 1 / beta - alpha / beta) * norm_star(rep.solution, CUBIC) ** 2
    ok = (f0 == 0.0 and fw < -1 and nonincreasing and hist[-1] > 0 and (alpha, beta) == (0.5, 4.0)
          and rep.action_value >= bound - 1e-8)
    assert _line(4, "mountain-pass geometry", ok,
                 f"f(0)={f0}, f(w)={fw}, history non-increasing={nonincreasing}, final level {hist[-1]:.6f} > 0, "
                 f"f(v)={rep.action_value:.6f} >= {bound:.6f}")


@pytest.mark.parametrize("k", [2, 3])
def test_05_multibump_verification(k):
    t0 = time.perf_counter()
    rep1, _ = _bump()
    window = max(400, 4 * 48 * k)
    P = make_separation(k, 4, 1, 48, window)
    rep = find_multibump(rep1.solution, P, CUBIC, 0.1, MultibumpConfig(window=window))
    # the runtime budget covers the one-bump solve that seeds the train
    dt = time.perf_counter() - t0 + _bump()[1]
    fv = rep.one_bump_action
    dist = max(rep.per_window_distance)
    tail = max(rep.tail_energies)
    lvl = max(abs(a - fv) for a in rep.per_window_action)
    ok = (rep.newton["converged"] and rep.residual_sup <= 1e-10 and dist <= 0.05 and tail <= 1e-8
          and lvl <= 1e-6 and dt < 30.0)
    assert _line(5, f"multibump verification k={k}", ok,
                 f"residual {rep.residual_sup:.1e}, max distance {dist:.1e} <= 0.05, "
                 f"max gap energy {tail:.1e} <= 1e-8, max |f_i - f(v)| {lvl:.1e} <= 1e-6, window {window}, {dt:.2f}s < 30s")


def test_06_sum_of_translates():
    v = _bump()[0].solution
    vv = inner_star(v, v, CUBIC)
    errs = []
    for s in (20, 30, 40):
        u = v + shift(v, s)
        errs.append(abs(inner_star(u, u, CUBIC) - 2 * vv))
    ok = errs[0] > errs[1] > errs[2] and errs[2] <= 1e-8
    assert _line(6, "sum-of-translates additivity", ok,
                 "errors " + ", ".join(f"{e:.1e}" for e in errs) + " decreasing, last <= 1e-8")


def test_07_translation_invariance():
    rng = np.random.default_rng(107)
    worst = 0.0
    for _ in range(20):
        u = random_sequence(rng, -12, 12)
        f = action(u, PERIODIC)
        for j in range(-3, 4):
            worst = max(worst, abs(action(shift(u, j * PERIODIC.period), PERIODIC) - f))
    assert _line(7, "translation invariance", worst <= 1e-13, f"max |df| {worst:.1e} <= 1e-13")


def test_08_assumption_auditor():
    gallery = [CUBIC, PAIR, PERIODIC]
    passed = [check_assumptions(m).passed for m in gallery]
    try:
        builtin("scalar_power", [1, 1.5])
        rejected = False
    except ModelError:
        rejected = True
    ok = all(passed) and rejected
    assert _line(8, "assumption auditor", ok, f"gallery pass {passed}, beta=1.5 rejected={rejected}")


def test_09_concentration_compactness():
    rho = mass_profile(_bump()[0].solution)
    ks = range(10, 101)
    uniform = [Sequence(-k, np.full(2 * k + 1, 1.0 / (2 * k + 1))) for k in ks]
    soliton = [shift(rho, k) for k in ks]
    split = [0.5 * rho + 0.5 * shift(rho, 2 * k) for k in ks]
    kinds = [cc_classify(f) for f in (uniform, soliton, split)]
    eta = kinds[2].eta
    ok = ([c.kind for c in kinds] == ["vanishing", "concentration", "dichotomy"]
          and eta is not None and 0.45 <= eta <= 0.55)
    assert _line(9, "concentration-compactness classifier", ok,
                 f"kinds {[c.kind for c in kinds]}, eta {eta:.4f} in [0.45, 0.55]")


def test_10_cutoff_inequality():
    rng = np.random.default_rng(110)
    violations = 0
    for i in range(100):
        m = (CUBIC, PAIR, PERIODIC)[i % 3]
        N0 = int(rng.integers(8, 25))
        a = int(rng.integers(-30, 20))
        c = ramp_cutoff(IndexSet.interval(a, a + int(rng.integers(0, 20))), N0)
        u = random_sequence(rng, -80, 80, m.dim)
        lo = int(rng.integers(-90, 60))
        F = IndexSet.interval(lo, lo + int(rng.integers(0, 80)))
        lhs = window_energy(apply_cutoff(c, u), F, m)
        rhs = 2 * window_energy(u, F & c.support.dilate(1), m)
        violations += lhs > rhs
    assert _line(10, "cutoff inequality", violations == 0, f"{violations} violations in 100 trials")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
