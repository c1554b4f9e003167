import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from locindex.errors import EstimatorDisagreementError
from locindex.harmonics import TrigPoly, flow_time_one
from locindex.operators import (
    canonical_q,
    multiplication_operator,
    nonneg_projector,
    quantize,
    second_q,
    toeplitz,
    toeplitz_parametrix,
)
from locindex.scenario import product_symbol_from_spec
from locindex.symbols import ClassicalSymbol
from locindex.zeta import (
    ContinuationConfig,
    continue_zeta,
    equivariant_residue_local,
    equivariant_residue_spectral,
    leading_symbol_residue,
    lerch_tail,
    oscillatory_tail_sum,
    residue_pairing_spectral,
    tail_sum,
    wodzicki_local,
)

seeds = st.integers(0, 2**31 - 1)


def _hurwitz_tail(s, mu2, a, terms=40):
    # binomial expansion in mu2 / k^2 against Hurwitz zeta values
    total = mpmath.mpf(0)
    for n in range(terms):
        total += mpmath.binomial(s / 2, n) * mpmath.mpf(mu2) ** n * mpmath.zeta(2 * n - s, a)
    return complex(total)


@pytest.mark.parametrize("s", [-3.0, -1.5, 0.5, 1.3, 2.5 + 1.0j])
def test_tail_sum_matches_hurwitz_expansion(s):
    mu2, a = 1.0, 10
    got = tail_sum(s, mu2, a)[0]
    want = _hurwitz_tail(s, mu2, a)
    assert abs(got - want) <= 1e-10 * max(1.0, abs(want))


def test_tail_sum_convergent_direct():
    k = np.arange(12, 400001, dtype=float)
    direct = np.sum((2.0 + k * k) ** -1.5)
    assert abs(tail_sum(-3.0, 2.0, 12)[0] - direct) < 1e-11


@pytest.mark.parametrize("omega", [0.7, 2.0, -1.3])
def test_lerch_tail_direct_sum(omega):
    l = np.arange(5, 200001, dtype=float)
    direct = np.sum(np.exp(1j * l * omega) * l**-3.0)
    assert abs(lerch_tail(omega, 3.0, 5)[0] - direct) < 1e-9


def test_oscillatory_tail_direct_sum():
    k = np.arange(20, 200001, dtype=float)
    direct = np.sum(np.exp(1j * 1.1 * k) * (1.0 + k * k) ** -1.5)
    assert abs(oscillatory_tail_sum(-3.0, 1.0, 20, 1.1)[0] - direct) < 1e-10


def test_canonical_residue_is_two():
    ld = continue_zeta(None, None, canonical_q(1024), 1.0)
    assert set(ld.estimates) == {"tail", "heat"}
    for r, _ in ld.estimates.values():
        assert abs(r - 2.0) < 1e-4
    assert ld.a_minus2 < 1e-6


def test_wodzicki_local_trivial():
    assert wodzicki_local(ClassicalSymbol.abs_p(-1)) == pytest.approx(2.0)
    assert wodzicki_local(ClassicalSymbol.constant(1.0)) == 0.0


@settings(max_examples=8)
@given(seeds)
def test_residue_matches_local_formula(seed):
    rng = np.random.default_rng(seed)
    N = 256
    a = ClassicalSymbol.random(rng, -1, 6, 4)
    ld = continue_zeta(quantize(a, N), None, canonical_q(N), 0.0)
    assert abs(complex(ld.residue) - wodzicki_local(a)) <= max(1e-3, 5.0 / N)
    assert ld.a_minus2 <= 1e-6 * (1 + abs(ld.residue))


@settings(max_examples=5)
@given(seeds)
def test_residue_independent_of_q(seed):
    rng = np.random.default_rng(seed)
    N = 256
    A = quantize(ClassicalSymbol.random(rng, -1, 6, 3), N)
    r1 = continue_zeta(A, None, canonical_q(N), 0.0).residue
    r2 = continue_zeta(A, None, second_q(N), 0.0).residue
    assert abs(r1 - r2) < 1e-3


def test_heat_only_at_leading_pole(rng):
    N = 256
    A = quantize(ClassicalSymbol.random(rng, 0, 6, 3), N)
    lead = continue_zeta(A, None, canonical_q(N), 1.0)
    sub = continue_zeta(A, None, canonical_q(N), 0.0)
    assert set(lead.estimates) == {"tail", "heat"}
    assert set(sub.estimates) == {"tail"}


def test_estimator_disagreement_raises():
    cfg = ContinuationConfig(agree_tol=1e-14)
    with pytest.raises(EstimatorDisagreementError):
        continue_zeta(None, None, canonical_q(256), 1.0, cfg)


def test_config_validation():
    with pytest.raises(ValueError):
        ContinuationConfig(J=2)
    with pytest.raises(ValueError):
        ContinuationConfig(primary="other")


@pytest.mark.parametrize("w", [-2, -1, 0, 1, 3])
def test_residue_pairing_is_winding(w):
    N = 128
    u = TrigPoly.monomial(w)
    T = toeplitz(nonneg_projector(N), multiplication_operator(u, N))
    r = residue_pairing_spectral(T, canonical_q(N), parametrix=toeplitz_parametrix(u, N))
    assert abs(r - w) < 1e-3


def test_leading_symbol_residue():
    u = TrigPoly.monomial(2)
    assert leading_symbol_residue(u) == 2.0
    assert leading_symbol_residue(u, []) == 0.0
    assert leading_symbol_residue(u, [3.0, 0.5]) == pytest.approx(2 * (0.5 + 2.0))


def _inverse_radius():
    return product_symbol_from_spec(None)


@pytest.mark.parametrize("eps", [0.3, 0.7, 1.2])
def test_equivariant_local_closed_form(eps):
    # fixed points of the sin flow have psi' = exp(+-eps)
    psi = flow_time_one(TrigPoly.sin(1, eps))
    local = equivariant_residue_local(_inverse_radius(), psi)
    assert abs(local - 2.0 / math.tanh(eps / 2)) < 1e-8


def test_equivariant_orderings_agree_for_order_minus_one():
    psi = flow_time_one(TrigPoly.sin(1, 0.5))
    spec = {"order": -1, "terms": [[0, 0, 0, 0, 1.0, 0.0], [0, 1, 1, 0, 0.3, 0.0]]}
    sigma = product_symbol_from_spec(spec)
    a = equivariant_residue_local(sigma, psi, ordering="exact")
    b = equivariant_residue_local(sigma, psi, ordering="frozen")
    assert abs(a - b) < 1e-12


def test_equivariant_spectral_matches_closed_form():
    eps = 0.7
    psi = flow_time_one(TrigPoly.sin(1, eps))
    ld = equivariant_residue_spectral(_inverse_radius(), psi, N=64)
    want = 2.0 / math.tanh(eps / 2)
    assert abs(ld.residue - want) <= 1e-2 * (1 + want)
