import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from locindex.errors import (
    ContinuumOfFixedPointsError,
    NonRealFieldError,
    SpectralTailError,
)
from locindex.harmonics import (
    CircleDiffeo,
    TrigPoly,
    compose_resample,
    critical_values,
    fixed_points,
    flow_time_one,
    grid,
    project_samples,
)

coef = st.complex_numbers(max_magnitude=3.0, allow_nan=False, allow_infinity=False)


def trig_polys(max_degree=4):
    return st.integers(0, max_degree).flatmap(
        lambda d: st.lists(coef, min_size=2 * d + 1, max_size=2 * d + 1).map(lambda c: TrigPoly(np.array(c)))
    )


def test_monomial_and_eval():
    f = TrigPoly.monomial(3, 2.0)
    x = np.array([0.0, 0.4, 1.3])
    assert np.allclose(f(x), 2.0 * np.exp(3j * x))
    assert f.degree == 3
    assert f.coeff(3) == 2.0 and f.coeff(-3) == 0.0


def test_sin_cos_real():
    s, c = TrigPoly.sin(2, 0.5), TrigPoly.cos(1)
    x = grid(16)
    assert s.real_valued and c.real_valued
    assert np.allclose(s(x), 0.5 * np.sin(2 * x))
    assert np.allclose(c(x), np.cos(x))


def test_real_valued_needs_symmetry():
    with pytest.raises(ValueError):
        TrigPoly(np.array([1.0, 0.0, 0.0]), real_valued=True)


def test_even_length_rejected():
    with pytest.raises(ValueError):
        TrigPoly(np.array([1.0, 2.0]))


def test_from_function_tail_error():
    with pytest.raises(SpectralTailError):
        TrigPoly.from_function(lambda x: np.abs(np.sin(x)), tol=1e-12, max_points=256)


def test_project_samples_exact():
    f = TrigPoly.from_dict({-2: 1.0, 1: 0.5j})
    p, tail = project_samples(f.samples(16), 4)
    assert tail < 1e-15
    assert p.allclose(f.padded(4))


def test_reciprocal_two_plus_cos():
    f = 2.0 + TrigPoly.cos(1)
    r = f.reciprocal()
    x = grid(64)
    assert np.max(np.abs(r(x) * f(x) - 1.0)) < 1e-13
    # mean of 1/(2 + cos x) is 1/sqrt(3)
    assert r.mean() == pytest.approx(1 / math.sqrt(3), abs=1e-13)


@given(trig_polys(), trig_polys())
def test_product_matches_pointwise(f, g):
    x = grid(40)
    assert np.allclose((f * g)(x), f(x) * g(x), atol=1e-10)


@given(trig_polys())
def test_derivative_of_shift_commutes(f):
    a = 0.37
    assert f.shift(a).derivative().allclose(f.derivative().shift(a), atol=1e-10)


@given(trig_polys())
def test_parseval(f):
    x = grid(64)
    assert f.norm_l2() ** 2 == pytest.approx(np.mean(np.abs(f(x)) ** 2), rel=1e-10, abs=1e-12)


@given(trig_polys())
def test_pairs_round_trip(f):
    assert TrigPoly.from_pairs(f.to_pairs()).allclose(f, atol=0.0)


def test_rotation_fixed_points():
    assert fixed_points(CircleDiffeo.rotation(0.3)) == []
    with pytest.raises(ContinuumOfFixedPointsError):
        fixed_points(CircleDiffeo.identity())


def test_compose_and_inverse():
    psi = CircleDiffeo(TrigPoly.sin(1, 0.3))
    inv = psi.inverse()
    ident = psi.compose(inv)
    x = grid(32)
    assert np.max(np.abs(ident(x) - x)) < 1e-9


def test_compose_resample_tail_error():
    psi = CircleDiffeo(TrigPoly.sin(1, 0.9))
    with pytest.raises(SpectralTailError):
        compose_resample(TrigPoly.cos(8), psi, 2)


def test_flow_requires_real_field():
    with pytest.raises(NonRealFieldError):
        flow_time_one(TrigPoly.monomial(1))


@pytest.mark.parametrize("eps", [0.3, 0.7])
def test_sin_flow_fixed_points(eps):
    # y' = eps sin y fixes 0 and pi with multipliers exp(+-eps)
    psi = flow_time_one(TrigPoly.sin(1, eps))
    fps = fixed_points(psi)
    assert [round(y, 10) for y, _ in fps] == [0.0, round(math.pi, 10)]
    assert fps[0][1] == pytest.approx(math.exp(eps), rel=1e-10)
    assert fps[1][1] == pytest.approx(math.exp(-eps), rel=1e-10)


def test_sin_flow_matches_closed_form():
    # tan(y1/2) = exp(eps) tan(y0/2) for y' = eps sin y
    eps = 0.7
    psi = flow_time_one(TrigPoly.sin(1, eps))
    y0 = np.linspace(0.1, 3.0, 7)
    y1 = 2 * np.arctan(np.exp(eps) * np.tan(y0 / 2))
    assert np.max(np.abs(psi(y0) - y1)) < 1e-10


def test_critical_values_symmetric():
    psi = flow_time_one(TrigPoly.sin(1, 0.7))
    vals = critical_values(psi)
    assert len(vals) == 2
    assert vals[0] == pytest.approx(-vals[1], abs=1e-10)
