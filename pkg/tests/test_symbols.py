import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from locindex.errors import InsufficientDepthError, NonEllipticError
from locindex.harmonics import TrigPoly
from locindex.symbols import (
    ClassicalSymbol,
    ProductSymbol2D,
    compose1d,
    log_commutator,
    log_symbol,
    parametrix1d,
)

K = 6
seeds = st.integers(0, 2**31 - 1)


def rand_symbol(seed, order, depth=K, max_degree=2):
    return ClassicalSymbol.random(np.random.default_rng(seed), order, depth, max_degree)


def sheets_close(a: ClassicalSymbol, b: ClassicalSymbol, atol=1e-9):
    assert a.order == b.order
    for j in range(max(a.depth, b.depth)):
        for s in (0, 1):
            assert a.component(j)[s].allclose(b.component(j)[s], atol=atol), f"component {j} sheet {s}"


def test_evaluate_japanese_matches_sqrt():
    q = ClassicalSymbol.japanese(depth=10)
    p = np.array([5.0, -7.0, 20.0])
    assert np.allclose(q.evaluate(0.0, p), np.sqrt(1 + p**2), rtol=1e-8)


def test_japanese_squared_is_polynomial():
    # sqrt(1 + p^2) o sqrt(1 + p^2) = 1 + p^2 for x-independent symbols
    q = ClassicalSymbol.japanese(depth=K)
    sq = compose1d(q, q, K)
    assert sq.order == 2
    assert sq.component(0)[0].allclose(TrigPoly.constant(1.0))
    assert sq.component(2)[0].allclose(TrigPoly.constant(1.0))
    for j in (1, 3, 4, 5):
        assert sq.component(j)[0].allclose(TrigPoly.zero(), atol=1e-14)


def test_compose_with_multiplication_commutator():
    # [p, f] = -i f'
    f = TrigPoly.sin(1) + TrigPoly.cos(2, 0.5)
    P = ClassicalSymbol.momentum(K)
    F = ClassicalSymbol.multiplication(f, K)
    comm = compose1d(P, F, K) - compose1d(F, P, K)
    expected = ClassicalSymbol.multiplication(f.derivative() * (-1j), K)
    sheets_close(comm.truncated(K), ClassicalSymbol(1, ((TrigPoly.zero(), TrigPoly.zero()),) + expected.components[: K - 1]))


@given(seeds, seeds, seeds)
def test_composition_associative(s1, s2, s3):
    a, b, c = rand_symbol(s1, 1), rand_symbol(s2, 0), rand_symbol(s3, -1)
    left = compose1d(compose1d(a, b, K), c, K)
    right = compose1d(a, compose1d(b, c, K), K)
    sheets_close(left, right, atol=1e-8)


@given(seeds)
def test_parametrix_is_inverse(seed):
    rng = np.random.default_rng(seed)
    lead = 2.0 + TrigPoly.cos(1, rng.uniform(-0.9, 0.9))
    tail = rand_symbol(seed, 0)
    a = ClassicalSymbol(1, ((lead, lead * 1.5),) + tail.components[: K - 1])
    r = parametrix1d(a, K)
    prod = compose1d(a, r, K)
    sheets_close(prod, ClassicalSymbol.constant(1.0, K), atol=1e-9)


def test_parametrix_needs_ellipticity():
    a = ClassicalSymbol.multiplication(TrigPoly.cos(1), K)
    with pytest.raises(NonEllipticError):
        parametrix1d(a, K)


def test_insufficient_depth():
    with pytest.raises(InsufficientDepthError):
        compose1d(ClassicalSymbol.japanese(depth=3), ClassicalSymbol.japanese(depth=3), K)


def test_dp_lowers_order_and_respects_sheets():
    a = ClassicalSymbol.abs_p(2, depth=2)
    d = a.d_p()
    assert d.order == 1
    # d/dp |p|^2 = 2 p: +2 on the positive sheet, -2 on the negative
    assert d.component(0)[0].coeff(0) == 2.0
    assert d.component(0)[1].coeff(0) == -2.0


def test_log_symbol_of_japanese():
    # ln sqrt(1 + p^2) = ln|p| + 1/(2 p^2) - 1/(4 p^4) + ...
    ell = log_symbol(ClassicalSymbol.japanese(depth=K), K)
    p = np.array([6.0, -9.0])
    assert np.allclose(ell.evaluate(0.0, p), 0.5 * np.log1p(p**2), atol=1e-6)


def test_log_commutator_with_constant_q_vanishes_on_constants():
    q = ClassicalSymbol.japanese(depth=K)
    a = ClassicalSymbol.abs_p(-1, depth=K)
    lc = log_commutator(q, a, K)
    assert lc.max_abs() < 1e-14


def test_json_round_trip():
    a = rand_symbol(7, -1)
    b = ClassicalSymbol.from_json(a.to_json())
    sheets_close(a, b, atol=0.0)


def test_product_symbol_shapes():
    s = ProductSymbol2D.from_functions(-1, [lambda X, Y, T: 1 + 0.5 * np.sin(Y) * np.cos(T)], nx=2, ny=16, ntheta=16)
    assert s.shape == (2, 16, 16)
    assert s.order == -1 and s.depth == 1
    assert s.degree_of(0) == -1
