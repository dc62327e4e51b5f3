import numpy as np
import pytest

from hamlock.diagnostics import (DecayError, bump_decompose, cc_classify, decay_rate, mass_profile,
                                 windowed_mass)
from hamlock.model import builtin
from hamlock.mountainpass import find_one_bump
from hamlock.multibump import glue, make_separation
from hamlock.seq import Sequence, norm_star, shift

from oracles import LAMBDA


def uniform(k):
    return Sequence(-k, np.full(2 * k + 1, 1.0 / (2 * k + 1)))


@pytest.fixture(scope="module")
def rho(cubic_bump):
    return mass_profile(cubic_bump.solution)


def test_mass_profile(cubic_bump, rho):
    assert rho.values.sum() == pytest.approx(1.0, abs=1e-14)
    with pytest.raises(ValueError):
        mass_profile(Sequence.zeros())


def test_windowed_mass():
    r = Sequence(0, [0.1, 0.2, 0.4, 0.2, 0.1])
    assert windowed_mass(r, 0) == (0.4, 2)
    m, c = windowed_mass(r, 1)
    assert m == pytest.approx(0.8) and c == 2
    assert windowed_mass(r, 10)[0] == pytest.approx(1.0)


def test_vanishing():
    v = cc_classify([uniform(k) for k in range(10, 101)])
    assert v.kind == "vanishing"


def test_concentration(rho):
    v = cc_classify([shift(rho, k) for k in range(10, 101)])
    assert v.kind == "concentration"
    assert all(abs(c - k) <= 1 for c, k in zip(v.centers, range(10, 101)))


def test_dichotomy(rho):
    v = cc_classify([0.5 * rho + 0.5 * shift(rho, 2 * k) for k in range(10, 101)])
    assert v.kind == "dichotomy" and 0.45 <= v.eta <= 0.55


def test_shift_invariance(rho):
    fams = [[uniform(k) for k in range(10, 60)], [shift(rho, k) for k in range(10, 60)],
            [0.5 * rho + 0.5 * shift(rho, 2 * k) for k in range(10, 60)]]
    for fam in fams:
        base = cc_classify(fam).kind
        assert cc_classify([shift(r, 37) for r in fam]).kind == base


def test_undetermined():
    # constant profile: neither spreading nor concentrating nor splitting
    fam = [uniform(30)] * 20
    assert cc_classify(fam).kind == "undetermined"


def test_cc_errors(rho):
    with pytest.raises(ValueError):
        cc_classify([Sequence(0, [0.5, 0.4])])
    with pytest.raises(ValueError):
        cc_classify([Sequence(0, [1.5, -0.5])])
    with pytest.raises(ValueError):
        cc_classify([])


def test_decay_rate_geometric():
    u = Sequence.from_function(-60, 60, lambda t: 0.5 ** abs(t))
    assert decay_rate(u) == pytest.approx(0.5, abs=1e-9)


def test_decay_rate_bump(cubic_bump):
    assert abs(decay_rate(cubic_bump.solution) - LAMBDA) <= 1e-4


def test_decay_rate_errors():
    with pytest.raises(DecayError):
        decay_rate(Sequence.delta(0, 1.0))
    with pytest.raises(DecayError):
        decay_rate(Sequence.zeros())


def test_decay_rate_gallery():
    for name, params in [("coupled_pair", [1, 2]), ("periodic_scalar", [1, 2, 4])]:
        lam = decay_rate(find_one_bump(builtin(name, params)).solution)
        assert 0 < lam < 1


def test_decompose_one_bump(cubic, cubic_bump):
    v = cubic_bump.solution
    d = bump_decompose(v, cubic)
    assert d.centers == [0]
    assert d.remainder_norm <= 1e-3 * norm_star(v, cubic)


def _check_structure(u, d, m, sep):
    spans = sorted((c + p.base, c + p.end) for c, p in d.bumps)
    for (a0, b0), (a1, b1) in zip(spans, spans[1:]):
        assert a1 - b0 >= sep
    assert norm_star(u - d.reconstruct(), m) == pytest.approx(d.remainder_norm, rel=1e-12, abs=1e-300)


def test_decompose_glued(cubic, cubic_bump):
    v = cubic_bump.solution
    for k in (2, 3):
        P = make_separation(k, 4, 1, 96)
        u = glue(v, P, 400)
        d = bump_decompose(u, cubic)
        assert len(d.bumps) == k
        assert all(abs(c - p) <= 1 for c, p in zip(d.centers, P.points))
        assert d.remainder_norm <= 1e-6 * norm_star(u, cubic)
        _check_structure(u, d, cubic, 3)


def test_decompose_close_bumps_respects_sep(cubic, cubic_bump):
    v = cubic_bump.solution
    u = v + shift(v, 20)
    # at this spacing the default threshold region would span both bumps
    d = bump_decompose(u, cubic, sep=5, thresh=1e-2)
    assert d.centers == [0, 20]
    _check_structure(u, d, cubic, 5)


def test_decompose_zero_and_errors(cubic):
    d = bump_decompose(Sequence.zeros(), cubic)
    assert d.bumps == [] and d.remainder_norm == 0.0
    with pytest.raises(ValueError):
        bump_decompose(Sequence.delta(0, 1.0), cubic, sep=2)
    with pytest.raises(ValueError):
        bump_decompose(Sequence.delta(0, 1.0), cubic, thresh=0.0)
    spikes = Sequence(0, np.tile([1.0, 0, 0, 0, 0, 0, 0, 0], 80))
    with pytest.raises(ValueError):
        bump_decompose(spikes, cubic)
