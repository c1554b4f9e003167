"""Matrix realizations on truncated Fourier modes.

Modes on the circle run over k = -N..N in increasing order, so index i of a
vector corresponds to k = i - N.  Operators act on coefficient vectors; the
multiplication operator by exp(i x) sends mode k to mode k + 1.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    ConvergenceError,
    IllConditionedError,
    IndexRouteDisagreementError,
    NonPositiveSpectrumError,
    NotHermitianError,
    NotIdempotentError,
    RankAmbiguityError,
    SpectralGapError,
    TruncationError,
    WindingError,
)
from .harmonics import CircleDiffeo, TrigPoly, grid
from .symbols import ClassicalSymbol

log = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-12
GAP_TOL = 1e-8


def modes(N: int) -> np.ndarray:
    return np.arange(-N, N + 1)


def smoothstep(s):
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


def make_chi(inner: float = 0.5) -> Callable[[np.ndarray], np.ndarray]:
    """Cutoff equal to 0 for |p| <= inner and 1 for |p| >= 1.

    ``inner = 0.5`` gives the default bridge h(2|p| - 1).
    """
    if not 0.0 <= inner < 1.0:
        raise ValueError("inner radius must lie in [0, 1)")

    def chi(p):
        return smoothstep((np.abs(np.asarray(p, dtype=float)) - inner) / (1.0 - inner))

    chi.inner = inner
    return chi


chi_default = make_chi(0.5)


@dataclass(frozen=True)
class FourierOperator:
    """Dense matrix on truncated Fourier modes.

    ``structure`` is one of "circle", "torus", "suspension" or "rect" (a
    rectangular map between two mode boxes).  ``order`` is an integer or the
    string "smoothing".
    """

    n: int
    matrix: np.ndarray
    order: int | str = 0
    structure: str = "circle"
    hermitian: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2:
            raise ValueError("matrix must be 2-d")
        if self.structure == "circle" and m.shape != (2 * self.n + 1, 2 * self.n + 1):
            raise ValueError(f"circle operator with N={self.n} needs shape {(2 * self.n + 1,) * 2}, got {m.shape}")
        if self.hermitian:
            if m.shape[0] != m.shape[1]:
                raise NotHermitianError("hermitian operator must be square")
            scale = max(1.0, float(np.max(np.abs(m))) if m.size else 1.0)
            if np.max(np.abs(m - m.conj().T)) >= HERMITIAN_TOL * scale:
                raise NotHermitianError("matrix is not hermitian")
            m = 0.5 * (m + m.conj().T)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def modes(self) -> np.ndarray:
        return modes(self.n)

    @classmethod
    def identity(cls, N: int) -> "FourierOperator":
        return cls(N, np.eye(2 * N + 1), 0, "circle", True)

    def like(self, matrix: np.ndarray, order=None, hermitian: bool = False) -> "FourierOperator":
        return FourierOperator(self.n, matrix, self.order if order is None else order, self.structure, hermitian)

    def __matmul__(self, other: "FourierOperator") -> "FourierOperator":
        order = _add_orders(self.order, other.order)
        structure = self.structure if self.structure == other.structure else "rect"
        if self.matrix.shape[1] != other.matrix.shape[0]:
            raise ValueError("dimension mismatch")
        return FourierOperator(self.n, self.matrix @ other.matrix, order, structure)

    def __add__(self, other: "FourierOperator") -> "FourierOperator":
        return FourierOperator(self.n, self.matrix + other.matrix, _max_order(self.order, other.order), self.structure)

    def __sub__(self, other: "FourierOperator") -> "FourierOperator":
        return FourierOperator(self.n, self.matrix - other.matrix, _max_order(self.order, other.order), self.structure)

    def __mul__(self, c) -> "FourierOperator":
        return FourierOperator(self.n, self.matrix * c, self.order, self.structure)

    __rmul__ = __mul__

    def adjoint(self) -> "FourierOperator":
        return FourierOperator(self.n, self.matrix.conj().T, self.order, self.structure, self.hermitian)

    def interior(self, n_inner: int) -> np.ndarray:
        """Block on modes |k| <= n_inner (circle operators)."""
        sl = slice(self.n - n_inner, self.n + n_inner + 1)
        return self.matrix[sl, sl]

    def to_dict(self) -> dict:
        rows = [[float(v) for z in row for v in (z.real, z.imag)] for row in self.matrix]
        return {"n": self.n, "order": self.order, "structure": self.structure, "rows": rows}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "FourierOperator":
        rows = [np.array(r[0::2]) + 1j * np.array(r[1::2]) for r in data["rows"]]
        return cls(int(data["n"]), np.array(rows), data["order"], data.get("structure", "circle"))

    @classmethod
    def from_json(cls, text: str) -> "FourierOperator":
        return cls.from_dict(json.loads(text))


def _add_orders(a, b):
    if a == "smoothing" or b == "smoothing":
        return "smoothing"
    return int(a) + int(b)


def _max_order(a, b):
    if a == "smoothing":
        return b
    if b == "smoothing":
        return a
    return max(int(a), int(b))


# --------------------------------------------------------------------------
# quantization


def _column_weights(sym: ClassicalSymbol, j: int, ls: np.ndarray, chi) -> tuple[np.ndarray, np.ndarray]:
    """|l|^d chi(l) on the two sheets, or the exact polynomial values."""
    d = sym.order - j
    lf = ls.astype(float)
    if sym.is_polynomial_component(j):
        # c(x) p^d restricted to the sheets; no cutoff needed
        w = lf**d if d > 0 else np.ones_like(lf)
        return np.where(ls >= 0, w, 0.0), np.where(ls < 0, w * (-1) ** d, 0.0)
    absl = np.abs(lf)
    safe = np.where(absl > 0, absl, 1.0)
    w = np.where(absl > 0, safe ** float(d), 0.0) * chi(lf)
    return np.where(ls > 0, w, 0.0), np.where(ls < 0, w, 0.0)


def quantize(a: ClassicalSymbol, N: int, chi=None, strict: bool = True) -> FourierOperator:
    """Left quantization: A[k, l] = a_hat_{k-l}(l).

    Non-polynomial homogeneous components are multiplied by the cutoff chi,
    which only changes the column l = 0.  Components of the form c(x) p^d
    with d >= 0 are quantized exactly, so 1 gives the identity and p gives
    diag(k).  ``strict=False`` skips the truncation guard (for multipliers
    with rapidly decaying coefficients).
    """
    chi = chi or chi_default
    if strict and N < 4 * a.max_trig_degree:
        raise TruncationError(f"N={N} is below 4 x trig degree {a.max_trig_degree}")
    ls = modes(N)
    dim = 2 * N + 1
    mat = np.zeros((dim, dim), dtype=complex)
    for j, (plus, minus) in enumerate(a.components):
        wp, wm = _column_weights(a, j, ls, chi)
        for sheet, w in ((plus, wp), (minus, wm)):
            for m, c in zip(sheet.frequencies, sheet.coeffs):
                if c == 0 or abs(m) > 2 * N:
                    continue
                # entries (k, l) with k - l = m
                if m >= 0:
                    cols = np.arange(0, dim - m)
                else:
                    cols = np.arange(-m, dim)
                mat[cols + m, cols] += c * w[cols]
    return FourierOperator(N, mat, a.order, "circle")


def multiplication_operator(u: TrigPoly, N: int, strict: bool = True) -> FourierOperator:
    """Multiplication by u(x) on modes -N..N."""
    return quantize(ClassicalSymbol.multiplication(u, depth=1), N, strict=strict)


def diffeo_operator(psi: CircleDiffeo, N: int, M: int | None = None, tol: float = 1e-12) -> FourierOperator:
    """(U xi)(x) = xi(psi(x)), U[k, l] = (1/2pi) int exp(i l psi(x) - i k x) dx."""
    M = M or 8 * N
    if M < 8 * N:
        raise ValueError("quadrature needs at least 8N points")
    x = grid(M)
    ls = modes(N)
    E = np.exp(1j * np.multiply.outer(psi(x), ls))
    spec = np.fft.fft(E, axis=0) / M
    freqs = np.fft.fftfreq(M, d=1.0 / M).astype(int)
    alias = np.abs(freqs) > 3 * M // 8
    leak = float(np.max(np.abs(spec[alias]))) if np.any(alias) else 0.0
    if leak > tol:
        raise TruncationError(f"quadrature aliasing {leak:.2e}; increase M")
    rows = np.mod(ls, M)
    return FourierOperator(N, spec[rows, :], 0, "circle")


def nonneg_projector(N: int) -> FourierOperator:
    return FourierOperator(N, np.diag((modes(N) >= 0).astype(float)), 0, "circle", True)


def shift_isometry(N: int, adjoint: bool = False) -> FourierOperator:
    """Unilateral shift from modes 0..N into modes 0..N+1 (a genuine isometry)."""
    S = np.zeros((N + 2, N + 1))
    S[np.arange(1, N + 2), np.arange(N + 1)] = 1.0
    return FourierOperator(N, S.T if adjoint else S, 0, "rect")


# --------------------------------------------------------------------------
# Hermitian eigenproblem


@dataclass(frozen=True)
class QModel:
    """Closed form lambda_k = c_sign * sqrt(mu2 + k^2) of a diagonal Q."""

    c_plus: float = 1.0
    c_minus: float = 1.0
    mu2: float = 1.0

    def __call__(self, k):
        k = np.asarray(k, dtype=float)
        c = np.where(k > 0, self.c_plus, self.c_minus)
        return c * np.sqrt(self.mu2 + k * k)


@dataclass(frozen=True)
class EigenData:
    """Ascending eigenvalues with eigenvectors.

    ``vectors`` may be None for diagonal operators; then ``index[i]`` is the
    basis position of the i-th eigenvalue.  ``modes`` holds the Fourier
    labels of those positions when known, and ``model`` an optional closed
    form used by the tail-fit estimator.
    """

    values: np.ndarray
    vectors: np.ndarray | None = None
    index: np.ndarray | None = None
    modes: np.ndarray | None = None
    model: object | None = None
    positive: bool = False

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "positive", bool(vals.size and vals.min() > 0))

    @property
    def dim(self) -> int:
        return self.values.size

    @classmethod
    def from_diagonal(cls, diag, labels=None, model=None) -> "EigenData":
        diag = np.asarray(diag, dtype=float)
        order = np.argsort(diag, kind="stable")
        labels = None if labels is None else np.asarray(labels)[order]
        return cls(diag[order], None, order, labels, model)

    def basis_matrix(self) -> np.ndarray:
        if self.vectors is not None:
            return self.vectors
        V = np.zeros((self.dim, self.dim))
        V[self.index, np.arange(self.dim)] = 1.0
        return V

    def function(self, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """Matrix of f(Q) in the original basis."""
        fv = f(self.values)
        if self.vectors is None:
            out = np.zeros((self.dim, self.dim), dtype=complex)
            out[self.index, self.index] = fv
            return out
        return (self.vectors * fv) @ self.vectors.conj().T

    def diagonal_of(self, matrix: np.ndarray) -> np.ndarray:
        """<phi_i | M | phi_i> for each eigenvector, in eigenvalue order."""
        if self.vectors is None:
            return np.asarray(matrix)[self.index, self.index]
        V = self.vectors
        return np.einsum("ij,ij->j", V.conj(), np.asarray(matrix) @ V)


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Deterministic parallel ordering: n-1 rounds of disjoint pairs."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        p = np.array([players[i] for i in range(m // 2)])
        q = np.array([players[m - 1 - i] for i in range(m // 2)])
        keep = (p < n) & (q < n)
        lo, hi = np.minimum(p, q)[keep], np.maximum(p, q)[keep]
        rounds.append((lo, hi))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def hermitian_eig(M: FourierOperator | np.ndarray, tol: float = 1e-12, max_sweeps: int = 100) -> EigenData:
    """Cyclic Jacobi eigen-decomposition with a round-robin sweep order.

    Each round applies disjoint complex Givens rotations at once.  Stops when
    the off-diagonal Frobenius norm is below tol * max(1, ||M||_F).
    """
    A = np.array(M.matrix if isinstance(M, FourierOperator) else M, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NotHermitianError("matrix must be square")
    scale = max(1.0, float(np.linalg.norm(A)))
    if np.max(np.abs(A - A.conj().T), initial=0.0) > HERMITIAN_TOL * scale:
        raise NotHermitianError("matrix is not hermitian")
    A = 0.5 * (A + A.conj().T)
    n = A.shape[0]
    V = np.eye(n, dtype=complex)
    rounds = _round_robin(n) if n > 1 else []
    thresh = tol * scale
    off_mask = ~np.eye(n, dtype=bool)

    def off_norm():
        return float(np.linalg.norm(A[off_mask]))

    for sweep in range(max_sweeps + 1):
        if off_norm() < thresh:
            break
        if sweep == max_sweeps:
            raise ConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps (off={off_norm():.2e})")
        for P, Q in rounds:
            b = A[P, Q]
            mag = np.abs(b)
            act = mag > 1e-300
            if not np.any(act):
                continue
            P, Q, b, mag = P[act], Q[act], b[act], mag[act]
            a = A[P, P].real
            d = A[Q, Q].real
            phase = b / mag
            tau = (d - a) / (2.0 * mag)
            sgn = np.where(tau >= 0, 1.0, -1.0)
            t = sgn / (np.abs(tau) + np.sqrt(1.0 + tau * tau))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            eph = np.conj(phase)
            Jpp, Jpq, Jqp, Jqq = c, s, -s * eph, c * eph
            colP, colQ = A[:, P].copy(), A[:, Q].copy()
            A[:, P] = colP * Jpp + colQ * Jqp
            A[:, Q] = colP * Jpq + colQ * Jqq
            rowP, rowQ = A[P, :].copy(), A[Q, :].copy()
            A[P, :] = np.conj(Jpp)[:, None] * rowP + np.conj(Jqp)[:, None] * rowQ
            A[Q, :] = np.conj(Jpq)[:, None] * rowP + np.conj(Jqq)[:, None] * rowQ
            A[P, Q] = 0.0
            A[Q, P] = 0.0
            vP, vQ = V[:, P].copy(), V[:, Q].copy()
            V[:, P] = vP * Jpp + vQ * Jqp
            V[:, Q] = vP * Jpq + vQ * Jqq
    vals = np.real(np.diag(A))
    order = np.argsort(vals, kind="stable")
    return EigenData(vals[order], V[:, order], order)


def eig_residual(M: FourierOperator | np.ndarray, eig: EigenData) -> float:
    A = np.asarray(M.matrix if isinstance(M, FourierOperator) else M)
    V = eig.basis_matrix()
    return float(np.max(np.linalg.norm(A @ V - V * eig.values, axis=0)))


def complex_power(Q: EigenData, z: complex, n: int | None = None, structure: str = "circle") -> FourierOperator:
    """Q^{-z} = V diag(lambda^{-z}) V* for a positive spectrum.

    The recorded order is ceil(-Re z), an upper bound for an order-1 Q.
    """
    if not Q.positive:
        raise NonPositiveSpectrumError("complex powers need a positive spectrum")
    n = (Q.dim - 1) // 2 if n is None else n
    mat = Q.function(lambda lam: np.exp(-z * np.log(lam)))
    return FourierOperator(n, mat, int(np.ceil(-np.real(z))), structure)


def canonical_q(N: int, mu2: float = 1.0) -> EigenData:
    """Q = diag sqrt(mu2 + k^2) on modes -N..N."""
    k = modes(N)
    return EigenData.from_diagonal(np.sqrt(mu2 + k * k.astype(float)), k, QModel(1.0, 1.0, mu2))


def second_q(N: int) -> EigenData:
    """A second positive elliptic order-1 Q with different sheet constants."""
    k = modes(N)
    model = QModel(2.0, 1.0, 3.0)
    return EigenData.from_diagonal(model(k), k, model)


# --------------------------------------------------------------------------
# suspension and sign projection


@dataclass(frozen=True)
class SuspensionData:
    """Q, F = Q|Q|^{-1}, P = (1 + F)/2 and |Q| for a graded suspension.

    The Hilbert space is ordered by suspension mode k_x; inside each block
    the even fiber modes come first, then the odd ones.
    """

    Q: FourierOperator
    F: FourierOperator
    P: FourierOperator
    abs_q: EigenData
    kx: np.ndarray
    block_size: int

    def __iter__(self):
        return iter((self.Q, self.F, self.P))


def suspension_operator(Dplus: FourierOperator, Nx: int, gap_tol: float = GAP_TOL) -> SuspensionData:
    """[[D_x, D+*], [D+, -D_x]] with D_x = diag(k_x) on the suspension circle."""
    if Nx < 8:
        raise ValueError("Nx must be at least 8")
    Dp = np.asarray(Dplus.matrix)
    nf = Dp.shape[0]
    if Dp.shape != (nf, nf):
        raise ValueError("D+ must be square")
    kx = np.arange(-Nx, Nx + 1)
    b = 2 * nf
    dim = kx.size * b
    Qm = np.zeros((dim, dim), dtype=complex)
    Fm = np.zeros((dim, dim), dtype=complex)
    abs_vals = np.zeros(dim)
    abs_vecs = np.zeros((dim, dim), dtype=complex)
    eye = np.eye(nf)
    for i, k in enumerate(kx):
        blk = np.block([[k * eye, Dp.conj().T], [Dp, -k * eye]])
        eig = hermitian_eig(blk)
        if np.min(np.abs(eig.values)) < gap_tol:
            raise SpectralGapError(f"eigenvalue {np.min(np.abs(eig.values)):.2e} near zero at k_x={k}")
        V = eig.vectors
        sl = slice(i * b, (i + 1) * b)
        Qm[sl, sl] = blk
        Fm[sl, sl] = (V * np.sign(eig.values)) @ V.conj().T
        abs_vals[sl] = np.abs(eig.values)
        abs_vecs[sl, sl] = V
    order = np.argsort(abs_vals, kind="stable")
    abs_q = EigenData(abs_vals[order], abs_vecs[:, order], order)
    Q = FourierOperator(Nx, Qm, 1, "suspension", True)
    F = FourierOperator(Nx, Fm, 0, "suspension", True)
    P = FourierOperator(Nx, 0.5 * (np.eye(dim) + Fm), 0, "suspension", True)
    return SuspensionData(Q, F, P, abs_q, kx, b)


# --------------------------------------------------------------------------
# Toeplitz operators, idempotents and indices


def _idempotency_defect(P: np.ndarray) -> float:
    return float(np.max(np.abs(P @ P - P))) if P.size else 0.0


def toeplitz(P: FourierOperator, U: FourierOperator, tol: float = 1e-10) -> FourierOperator:
    """T = P U P + (1 - P)."""
    Pm, Um = P.matrix, U.matrix
    if Pm.shape != Um.shape:
        raise ValueError("P and U must have equal shapes")
    defect = _idempotency_defect(Pm)
    if defect > tol:
        raise NotIdempotentError(f"|P^2 - P| = {defect:.2e}")
    T = Pm @ Um @ Pm + (np.eye(Pm.shape[0]) - Pm)
    return FourierOperator(P.n, T, 0, P.structure)


@dataclass(frozen=True)
class MilnorResult:
    """The idempotent e and its pairing with the trace.

    ``pairing`` is the trace of e - e0 over the selected window (all modes
    unless a window was given); ``full_trace`` always uses every mode.
    """

    e: np.ndarray
    pairing: float
    full_trace: float
    nearest: int
    distance: float
    defect: float

    def __iter__(self):
        return iter((self.e, self.pairing))


def milnor_idempotent(P: FourierOperator | np.ndarray, Q: FourierOperator | np.ndarray, window: np.ndarray | None = None) -> MilnorResult:
    """e = [[1 - (1-QP)^2, Q(2-PQ)(1-PQ)], [(1-PQ)P, (1-PQ)^2]].

    P may be rectangular (n_out x n_in) with Q of shape (n_in x n_out); then
    e acts on C^{n_in} + C^{n_out}.  ``window`` is a boolean mask over the
    modes of a square P selecting the modes kept in the trace, which removes
    the defect that a finite truncation creates at the outer modes.
    """
    Pm = np.asarray(P.matrix if isinstance(P, FourierOperator) else P, dtype=complex)
    Qm = np.asarray(Q.matrix if isinstance(Q, FourierOperator) else Q, dtype=complex)
    n_out, n_in = Pm.shape
    if Qm.shape != (n_in, n_out):
        raise ValueError("Q must have the transposed shape of P")
    I_in, I_out = np.eye(n_in), np.eye(n_out)
    QP = Qm @ Pm
    PQ = Pm @ Qm
    A = I_in - QP
    B = I_out - PQ
    e = np.block([[I_in - A @ A, Qm @ (2 * I_out - PQ) @ B], [B @ Pm, B @ B]])
    e0 = np.zeros_like(e)
    e0[:n_in, :n_in] = I_in
    diff = np.real(np.diag(e - e0))
    full = float(diff.sum())
    if window is not None:
        if n_in != n_out or window.size != n_in:
            raise ValueError("window needs a square P with matching size")
        w = np.concatenate([window, window])
        pairing = float(diff[w].sum())
    else:
        pairing = full
    nearest = int(round(pairing))
    defect = float(np.max(np.abs(e @ e - e)))
    return MilnorResult(e, pairing, full, nearest, abs(pairing - nearest), defect)


def interior_window(N: int, fraction: float = 0.25) -> np.ndarray:
    """Modes with |k| <= N - max(4, fraction * N)."""
    margin = max(4, int(round(fraction * N)))
    return np.abs(modes(N)) <= N - margin


def _count_small(H: np.ndarray, thresh2: float, window: np.ndarray | None) -> int:
    vals, vecs = np.linalg.eigh(H)
    if np.any((vals > 0.1 * thresh2) & (vals < 10.0 * thresh2)):
        raise RankAmbiguityError("singular value within a factor 10 of the rank threshold")
    small = vals < thresh2
    if window is None:
        return int(small.sum())
    mass = np.sum(np.abs(vecs[window, :]) ** 2, axis=0)
    return int(np.sum(small & (mass > 0.5)))


def fredholm_index(
    T: FourierOperator | np.ndarray,
    rank_tol: float = 1e-8,
    parametrix: FourierOperator | np.ndarray | None = None,
    window: np.ndarray | bool | None = True,
) -> int:
    """dim ker T - dim coker T from the small eigenvalues of T*T and TT*.

    For square circle operators ``window=True`` keeps only singular vectors
    concentrated on interior modes, which discards the spurious kernel that
    truncation creates at the outermost modes.  When a parametrix is given
    the Milnor pairing over the same window is computed as a second route
    and both must agree (index = -pairing).
    """
    Tm = np.asarray(T.matrix if isinstance(T, FourierOperator) else T, dtype=complex)
    n_out, n_in = Tm.shape
    if window is True:
        window = interior_window((n_in - 1) // 2) if (n_in == n_out and isinstance(T, FourierOperator) and T.structure == "circle") else None
    elif window is False:
        window = None
    norm = float(np.linalg.norm(Tm, 2))
    thresh2 = (rank_tol * norm) ** 2
    ker = _count_small(Tm.conj().T @ Tm, thresh2, window)
    coker = _count_small(Tm @ Tm.conj().T, thresh2, window)
    index = ker - coker
    if parametrix is not None:
        res = milnor_idempotent(Tm, parametrix, window)
        if res.distance > 1e-6 or -res.nearest != index:
            raise IndexRouteDisagreementError(f"kernel count {index} vs Milnor pairing {res.pairing:.6f}")
    return index


def winding_number(u: TrigPoly, m: int | None = None) -> int:
    """(1/2 pi i) * contour integral of u'/u, rounded."""
    m = m or max(1024, 32 * (u.degree + 1))
    vals = u.samples(m)
    if np.min(np.abs(vals)) < 1e-12 * max(1.0, np.max(np.abs(vals))):
        raise WindingError("u vanishes on the circle")
    dvals = u.derivative().samples(m)
    w = np.mean(dvals / vals) / 1j
    n = int(round(w.real))
    if abs(w - n) > 1e-6:
        raise WindingError(f"winding {w} is not an integer")
    return n


def toeplitz_parametrix(u: TrigPoly, N: int) -> FourierOperator:
    """P M_{1/u} P + (1 - P) with P the projector onto k >= 0."""
    P = nonneg_projector(N)
    return toeplitz(P, multiplication_operator(u.reciprocal().trimmed(1e-15), N, strict=False))


def invert(T: FourierOperator, cond_max: float = 1e12) -> FourierOperator:
    """Exact inverse with a condition-number guard."""
    c = float(np.linalg.cond(T.matrix))
    if not np.isfinite(c) or c > cond_max:
        raise IllConditionedError(f"condition number {c:.2e} exceeds {cond_max:.1e}")
    return T.like(np.linalg.inv(T.matrix), order=-T.order if isinstance(T.order, int) else T.order)
