import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from locindex.errors import (
    IllConditionedError,
    NotHermitianError,
    TruncationError,
    WindingError,
)
from locindex.harmonics import CircleDiffeo, TrigPoly
from locindex.operators import (
    FourierOperator,
    canonical_q,
    complex_power,
    diffeo_operator,
    eig_residual,
    fredholm_index,
    hermitian_eig,
    invert,
    make_chi,
    milnor_idempotent,
    modes,
    multiplication_operator,
    nonneg_projector,
    quantize,
    second_q,
    shift_isometry,
    suspension_operator,
    toeplitz,
    toeplitz_parametrix,
    winding_number,
)
from locindex.symbols import ClassicalSymbol, compose1d

seeds = st.integers(0, 2**31 - 1)


def test_identity_and_momentum_exact():
    N = 8
    assert np.allclose(quantize(ClassicalSymbol.constant(1.0), N).matrix, np.eye(2 * N + 1))
    assert np.allclose(quantize(ClassicalSymbol.momentum(), N).matrix, np.diag(modes(N)))


def test_multiplication_operator_entries():
    u = TrigPoly.from_dict({1: 2.0, -2: 0.5j})
    M = multiplication_operator(u, 8).matrix
    # column l of M is the spectrum of u(x) exp(i l x)
    assert M[8 + 3, 8 + 2] == 2.0
    assert M[8 - 2, 8 + 0] == 0.5j
    assert np.count_nonzero(M[:, 8]) == 2


def test_truncation_guard():
    with pytest.raises(TruncationError):
        multiplication_operator(TrigPoly.monomial(5), 8)


def test_chi_bridge_only_touches_column_zero():
    a = ClassicalSymbol.abs_p(-1, depth=2, coefficient=TrigPoly.cos(1) + 2.0)
    A1 = quantize(a, 16, make_chi(0.5)).matrix
    A2 = quantize(a, 16, make_chi(0.25)).matrix
    diff = np.abs(A1 - A2)
    diff[:, 16] = 0.0
    assert diff.max() == 0.0


@given(seeds)
def test_quantization_is_multiplicative_on_interior(seed):
    rng = np.random.default_rng(seed)
    a = ClassicalSymbol.random(rng, 0, 6, 2)
    f = TrigPoly.from_dict({1: rng.normal(), -1: rng.normal()})
    F = ClassicalSymbol.multiplication(f, 6)
    N = 48
    lhs = quantize(F, N).matrix @ quantize(a, N).matrix
    rhs = quantize(compose1d(F, a, 6), N).matrix
    inner = np.abs(modes(N)) <= N - 8
    # f is a multiplier, so left composition with it is exact away from the box edge
    assert np.max(np.abs((lhs - rhs)[np.ix_(inner, inner)])) < 1e-12


@given(st.integers(2, 24), seeds)
def test_jacobi_matches_lapack(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    H = A + A.conj().T
    eig = hermitian_eig(H)
    assert np.allclose(eig.values, np.linalg.eigvalsh(H), atol=1e-10)
    assert eig_residual(H, eig) < 1e-9


def test_jacobi_rejects_non_hermitian():
    with pytest.raises(NotHermitianError):
        hermitian_eig(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_complex_power_of_canonical_q():
    Q = canonical_q(4)
    P = complex_power(Q, 2.0).matrix
    k = modes(4)
    assert np.allclose(np.diag(P), 1.0 / (1 + k**2))


def test_second_q_sheets():
    Q = second_q(3)
    lam = dict(zip(Q.modes.tolist(), Q.values.tolist()))
    assert lam[2] == pytest.approx(2 * np.sqrt(7))
    assert lam[-2] == pytest.approx(np.sqrt(7))
    assert lam[0] == pytest.approx(np.sqrt(3))


def test_rotation_operator_is_diagonal_phase():
    U = diffeo_operator(CircleDiffeo.rotation(0.4), 6).matrix
    assert np.allclose(U, np.diag(np.exp(0.4j * modes(6))))


@pytest.mark.parametrize("w", [-3, -2, -1, 0, 1, 2, 3])
def test_toeplitz_index_of_monomials(w):
    N = 32
    u = TrigPoly.monomial(w)
    T = toeplitz(nonneg_projector(N), multiplication_operator(u, N))
    assert fredholm_index(T, parametrix=toeplitz_parametrix(u, N)) == -w
    assert winding_number(u) == w


def test_toeplitz_index_smooth_symbol():
    u = (2.0 + TrigPoly.cos(1)) * TrigPoly.monomial(-2)
    N = 64
    T = toeplitz(nonneg_projector(N), multiplication_operator(u, N, strict=False))
    assert fredholm_index(T, parametrix=toeplitz_parametrix(u, N)) == 2


def test_winding_needs_nonvanishing():
    with pytest.raises(WindingError):
        winding_number(TrigPoly.cos(1))


def test_shift_index_sign():
    # ker S = 0, coker S = span(e_0): index -1
    S = shift_isometry(10)
    assert fredholm_index(S, window=False) == -1
    assert fredholm_index(shift_isometry(10, adjoint=True), window=False) == 1


@given(st.integers(1, 12), st.integers(1, 12), seeds)
def test_milnor_idempotent_any_pair(n_in, n_out, seed):
    rng = np.random.default_rng(seed)
    P = rng.normal(size=(n_out, n_in)) / np.sqrt(n_in)
    Q = rng.normal(size=(n_in, n_out)) / np.sqrt(n_out)
    res = milnor_idempotent(P, Q)
    assert res.defect < 1e-12 * max(1.0, float(np.max(np.abs(res.e))) ** 2)


def test_milnor_exact_inverse_gives_e0():
    rng = np.random.default_rng(0)
    P = rng.normal(size=(5, 5)) + 3 * np.eye(5)
    res = milnor_idempotent(P, np.linalg.inv(P))
    assert abs(res.pairing) < 1e-12


@pytest.mark.parametrize("adjoint,expected", [(False, 1), (True, -1)])
def test_milnor_pairing_on_shift(adjoint, expected):
    S = shift_isometry(16, adjoint=adjoint)
    res = milnor_idempotent(S, S.adjoint())
    assert res.nearest == expected and res.distance == 0.0
    assert res.nearest == -fredholm_index(S, window=False)


def test_invert_condition_guard():
    T = FourierOperator(1, np.diag([1.0, 1e-14, 1.0]), 0, "circle")
    with pytest.raises(IllConditionedError):
        invert(T)


def test_suspension_projector():
    D = FourierOperator(0, np.array([[0.5]], dtype=complex), 1, "rect")
    S = suspension_operator(D, 8)
    P = S.P.matrix
    assert np.allclose(P @ P, P, atol=1e-12)
    assert np.allclose(S.F.matrix @ S.F.matrix, np.eye(P.shape[0]), atol=1e-12)
    # |Q| = sqrt(k^2 + 1/4)
    assert np.allclose(np.sort(S.abs_q.values), np.sort(np.repeat(np.sqrt(np.arange(-8, 9) ** 2 + 0.25), 2)))
