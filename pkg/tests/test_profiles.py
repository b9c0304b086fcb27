import math

import numpy as np
import pytest
from scipy import integrate

from beltflow.profiles import (ArcProfile, Constant, FunctionProfile, Gaussian, PiecewiseConstant, Sampled,
                               as_profile, gaussian_bump, sampled)

PROFILES = [
    Gaussian(-1.885, 0.577),
    Gaussian(0.3, 0.05, 0.8),
    PiecewiseConstant((-1.0, 0.5), (0.2, 0.9, 0.1)),
    Sampled((-2.0, -1.0, 0.0, 1.5), (0.0, 0.7, 0.3, 0.0)),
    FunctionProfile(lambda x: 0.5 + 0.4 * math.sin(3 * x)),
    Constant(0.4),
]


@pytest.mark.parametrize("prof", PROFILES)
def test_integral_matches_quadrature(prof):
    for a, b in [(-3.0, -1.2), (-0.7, 0.9), (0.2, 0.25), (-2.5, 1.6)]:
        ref, _ = integrate.quad(lambda x: float(prof.value(x)), a, b, limit=400, epsabs=1e-12,
                                points=[p for p in (-2.0, -1.0, 0.0, 0.5, 1.5) if a < p < b])
        assert prof.integral(a, b) == pytest.approx(ref, abs=1e-9)
        assert prof.integral(b, a) == pytest.approx(-prof.integral(a, b), abs=1e-15)


@pytest.mark.parametrize("prof", PROFILES)
def test_integral_is_additive(prof):
    for a, m, b in [(-3.0, -1.0, 2.0), (-0.4, -0.39, 0.6)]:
        assert prof.integral(a, m) + prof.integral(m, b) == pytest.approx(prof.integral(a, b), abs=1e-9)


def test_gaussian_tails_keep_precision():
    g = Gaussian(0.0, 0.1)
    tail = g.integral(1.0, 1.5)
    assert 0 < tail < 1e-40
    assert tail == pytest.approx(0.1 * math.sqrt(math.pi) / 2 * (math.erfc(10) - math.erfc(15)), rel=1e-12)


def test_reference_bump():
    b = gaussian_bump()
    assert b(-3 * math.pi / 5) == 1.0
    x = 0.3
    assert b(x) == pytest.approx(math.exp(-3 * (x + 3 * math.pi / 5) ** 2))
    assert b.integral(-math.inf, math.inf) == pytest.approx(math.sqrt(math.pi / 3))


def test_arc_profile_zero_extension():
    prof = ArcProfile(Constant(0.5), -1.0, 0.0)
    assert prof(-1.5) == 0.0 and prof(-0.5) == 0.5 and prof(0.5) == 0.0
    assert prof.integral(-3.0, 3.0) == pytest.approx(0.5)
    assert prof.integral(0.0, -3.0) == pytest.approx(-0.5)


def test_sampled_zero_outside_and_max():
    s = sampled([[0.0, 0.2], [1.0, 0.9], [2.0, 0.1]])
    assert s(-0.1) == 0.0 and s(2.1) == 0.0
    assert s(0.5) == pytest.approx(0.55)
    assert s.max_value(0.0, 2.0) == pytest.approx(0.9)
    with pytest.raises(ValueError):
        Sampled((0.0, 0.0), (0.1, 0.2))


def test_as_profile():
    assert isinstance(as_profile(0.3), Constant)
    assert isinstance(as_profile(np.sin), FunctionProfile)
    with pytest.raises(TypeError):
        as_profile("nope")


def test_piecewise_constant_validation():
    with pytest.raises(ValueError):
        PiecewiseConstant((0.0,), (1.0,))
    with pytest.raises(ValueError):
        PiecewiseConstant((1.0, 0.0), (0.1, 0.2, 0.3))
