"""Trigonometric polynomials and circle diffeomorphisms.

Everything lives on the circle of circumference 2*pi.  A ``TrigPoly`` stores
the Fourier coefficients c_k, |k| <= d, of f(x) = sum_k c_k exp(i k x); the
algebraic operations (evaluation, derivatives, products, means) are exact up
to floating point.  Non-polynomial functions enter through sampling and an
FFT projection whose spectral tail is checked against a tolerance.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import (
    ContinuumOfFixedPointsError,
    DegenerateFixedPointError,
    NonRealFieldError,
    SpectralTailError,
)

log = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
DEFAULT_TAIL_TOL = 1e-10


def grid(m: int) -> np.ndarray:
    """Uniform grid x_j = 2*pi*j/m on [0, 2*pi)."""
    return TWO_PI * np.arange(m) / m


def project_samples(values: np.ndarray, degree: int) -> tuple["TrigPoly", float]:
    """Project samples on a uniform grid to a trigonometric polynomial.

    Args:
        values: samples f(x_j) on ``grid(len(values))``.
        degree: largest retained |k|; must satisfy 2*degree < len(values).

    Returns:
        The projected polynomial and the relative l2 norm of the discarded
        coefficients (0 when the input vanishes).
    """
    values = np.asarray(values, dtype=complex)
    m = values.size
    if 2 * degree >= m:
        raise ValueError(f"degree {degree} needs more than {2 * degree} samples, got {m}")
    spec = np.fft.fft(values) / m
    freqs = np.fft.fftfreq(m, d=1.0 / m).astype(int)
    coeffs = np.zeros(2 * degree + 1, dtype=complex)
    keep = np.abs(freqs) <= degree
    coeffs[freqs[keep] + degree] = spec[keep]
    total = np.linalg.norm(spec)
    tail = float(np.linalg.norm(spec[~keep]) / total) if total > 0 else 0.0
    return TrigPoly(coeffs), tail


@dataclass(frozen=True)
class TrigPoly:
    """f(x) = sum_{|k|<=d} c_k exp(i k x).

    ``coeffs[k + d]`` holds c_k.  With ``real_valued`` set the coefficients
    satisfy c_{-k} = conj(c_k) and evaluation returns real arrays.
    """

    coeffs: np.ndarray
    real_valued: bool = False

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=complex)).copy()
        if c.ndim != 1 or c.size % 2 == 0:
            raise ValueError("coefficient array must be 1-d with odd length")
        if self.real_valued:
            scale = max(1.0, float(np.max(np.abs(c))))
            if np.max(np.abs(c - np.conj(c[::-1]))) > 1e-12 * scale:
                raise ValueError("real_valued polynomial needs c_{-k} = conj(c_k)")
            c = 0.5 * (c + np.conj(c[::-1]))
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    # construction -------------------------------------------------------
    @classmethod
    def constant(cls, value: complex, real_valued: bool | None = None) -> "TrigPoly":
        if real_valued is None:
            real_valued = np.isreal(value)
        return cls(np.array([value], dtype=complex), bool(real_valued))

    @classmethod
    def zero(cls) -> "TrigPoly":
        return cls.constant(0.0, True)

    @classmethod
    def monomial(cls, k: int, value: complex = 1.0) -> "TrigPoly":
        """value * exp(i k x)."""
        d = abs(k)
        c = np.zeros(2 * d + 1, dtype=complex)
        c[k + d] = value
        return cls(c)

    @classmethod
    def cos(cls, k: int = 1, amplitude: float = 1.0) -> "TrigPoly":
        return (cls.monomial(k, 0.5 * amplitude) + cls.monomial(-k, 0.5 * amplitude)).as_real()

    @classmethod
    def sin(cls, k: int = 1, amplitude: float = 1.0) -> "TrigPoly":
        return (cls.monomial(k, -0.5j * amplitude) + cls.monomial(-k, 0.5j * amplitude)).as_real()

    @classmethod
    def from_dict(cls, terms: dict[int, complex], real_valued: bool = False) -> "TrigPoly":
        d = max((abs(k) for k in terms), default=0)
        c = np.zeros(2 * d + 1, dtype=complex)
        for k, v in terms.items():
            c[k + d] += v
        return cls(c, real_valued)

    @classmethod
    def from_samples(
        cls,
        values: np.ndarray,
        degree: int | None = None,
        tol: float = DEFAULT_TAIL_TOL,
        real_valued: bool = False,
    ) -> "TrigPoly":
        """FFT projection with a tail check; degree defaults to len(values)//4."""
        values = np.asarray(values)
        if degree is None:
            degree = values.size // 4
        p, tail = project_samples(values, degree)
        if tail > tol:
            raise SpectralTailError(f"spectral tail {tail:.3e} exceeds {tol:.1e}")
        p = p.trimmed()
        return p.as_real() if real_valued else p

    @classmethod
    def from_function(
        cls,
        f: Callable[[np.ndarray], np.ndarray],
        tol: float = DEFAULT_TAIL_TOL,
        real_valued: bool = False,
        start: int = 32,
        max_points: int = 1 << 16,
    ) -> "TrigPoly":
        """Adaptive projection of a smooth periodic function."""
        m = start
        while True:
            vals = np.asarray(f(grid(m)), dtype=complex)
            p, tail = project_samples(vals, m // 4)
            if tail <= tol:
                p = p.trimmed()
                return p.as_real() if real_valued else p
            if m >= max_points:
                raise SpectralTailError(f"tail {tail:.3e} at {m} points")
            m *= 2

    # basic data ---------------------------------------------------------
    @property
    def degree(self) -> int:
        return (self.coeffs.size - 1) // 2

    def coeff(self, k: int) -> complex:
        d = self.degree
        return complex(self.coeffs[k + d]) if abs(k) <= d else 0.0j

    @property
    def frequencies(self) -> np.ndarray:
        d = self.degree
        return np.arange(-d, d + 1)

    def as_real(self) -> "TrigPoly":
        c = 0.5 * (self.coeffs + np.conj(self.coeffs[::-1]))
        return TrigPoly(c, True)

    def is_real(self, tol: float = 1e-12) -> bool:
        c = self.coeffs
        return bool(np.max(np.abs(c - np.conj(c[::-1]))) <= tol * max(1.0, np.max(np.abs(c))))

    def padded(self, degree: int) -> "TrigPoly":
        d = self.degree
        if degree < d:
            raise ValueError("cannot pad to a smaller degree")
        c = np.zeros(2 * degree + 1, dtype=complex)
        c[degree - d : degree + d + 1] = self.coeffs
        return TrigPoly(c, self.real_valued)

    def truncated(self, degree: int) -> "TrigPoly":
        d = self.degree
        if degree >= d:
            return self
        return TrigPoly(self.coeffs[d - degree : d + degree + 1], self.real_valued)

    def trimmed(self, rel_tol: float = 1e-16) -> "TrigPoly":
        """Drop outer coefficient pairs below rel_tol times the largest one."""
        c = self.coeffs
        scale = np.max(np.abs(c)) if c.size else 0.0
        d = self.degree
        if scale == 0.0:
            return TrigPoly(np.zeros(1, dtype=complex), self.real_valued)
        while d > 0 and max(abs(c[0]), abs(c[-1])) <= rel_tol * scale:
            c = c[1:-1]
            d -= 1
        return TrigPoly(c, self.real_valued)

    # evaluation ---------------------------------------------------------
    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        k = self.frequencies
        vals = np.exp(1j * np.multiply.outer(x, k)) @ self.coeffs
        return vals.real if self.real_valued else vals

    def samples(self, m: int) -> np.ndarray:
        """Values on ``grid(m)`` via inverse FFT (exact when m > 2*degree)."""
        d = self.degree
        if m <= 2 * d:
            return np.asarray(self(grid(m)))
        buf = np.zeros(m, dtype=complex)
        k = self.frequencies
        buf[k % m] = self.coeffs
        vals = np.fft.ifft(buf) * m
        return vals.real if self.real_valued else vals

    # calculus -----------------------------------------------------------
    def derivative(self, n: int = 1) -> "TrigPoly":
        if n == 0:
            return self
        k = self.frequencies
        return TrigPoly(self.coeffs * (1j * k) ** n, self.real_valued)

    def mean(self) -> complex:
        """(1/2pi) * integral over the circle; returns c_0."""
        c0 = self.coeff(0)
        return c0.real if self.real_valued else c0

    def integral(self) -> complex:
        return TWO_PI * self.mean()

    def shift(self, a: float) -> "TrigPoly":
        """x -> f(x + a)."""
        return TrigPoly(self.coeffs * np.exp(1j * self.frequencies * a), self.real_valued)

    def conj(self) -> "TrigPoly":
        return TrigPoly(np.conj(self.coeffs[::-1]), self.real_valued)

    def norm_l2(self) -> float:
        """sqrt((1/2pi) * integral |f|^2)."""
        return float(np.linalg.norm(self.coeffs))

    def sup_norm(self, m: int | None = None) -> float:
        m = m or max(64, 8 * (self.degree + 1))
        return float(np.max(np.abs(self.samples(m))))

    def reciprocal(self, tol: float = 1e-14) -> "TrigPoly":
        """1/f projected adaptively; f must be nowhere zero."""
        m0 = max(64, 8 * (self.degree + 1))
        vals = self.samples(4 * m0)
        if np.min(np.abs(vals)) < 1e-12 * max(1.0, np.max(np.abs(vals))):
            raise ZeroDivisionError("polynomial vanishes on the sample grid")
        p = TrigPoly.from_function(lambda x: 1.0 / self(x), tol=tol, start=m0)
        return p.as_real() if self.real_valued else p

    # arithmetic ---------------------------------------------------------
    def _coerce(self, other) -> "TrigPoly":
        if isinstance(other, TrigPoly):
            return other
        return TrigPoly.constant(other)

    def __add__(self, other) -> "TrigPoly":
        other = self._coerce(other)
        d = max(self.degree, other.degree)
        c = self.padded(d).coeffs + other.padded(d).coeffs
        return TrigPoly(c, self.real_valued and other.real_valued)

    __radd__ = __add__

    def __neg__(self) -> "TrigPoly":
        return TrigPoly(-self.coeffs, self.real_valued)

    def __sub__(self, other) -> "TrigPoly":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "TrigPoly":
        return self._coerce(other) - self

    def __mul__(self, other) -> "TrigPoly":
        if isinstance(other, TrigPoly):
            c = np.convolve(self.coeffs, other.coeffs)
            return TrigPoly(c, self.real_valued and other.real_valued)
        real = self.real_valued and bool(np.isreal(other))
        return TrigPoly(self.coeffs * other, real)

    __rmul__ = __mul__

    def __truediv__(self, scalar) -> "TrigPoly":
        return self * (1.0 / scalar)

    def allclose(self, other: "TrigPoly", atol: float = 1e-12) -> bool:
        d = max(self.degree, other.degree)
        return bool(np.max(np.abs(self.padded(d).coeffs - other.padded(d).coeffs)) <= atol)

    # serialization ------------------------------------------------------
    def to_pairs(self) -> list[list[float]]:
        return [[float(z.real), float(z.imag)] for z in self.coeffs]

    @classmethod
    def from_pairs(cls, pairs: Sequence[Sequence[float]], real_valued: bool = False) -> "TrigPoly":
        return cls(np.array([complex(a, b) for a, b in pairs]), real_valued)


@dataclass(frozen=True)
class CircleDiffeo:
    """psi(x) = x + delta(x) on the circle of circumference 2*pi.

    ``dpsi`` caches psi' as a TrigPoly.  It defaults to 1 + delta'; flows
    supply the derivative obtained from the variational equation instead.
    """

    delta: TrigPoly
    dpsi: TrigPoly | None = field(default=None)

    def __post_init__(self):
        if not self.delta.is_real():
            raise ValueError("displacement must be real-valued")
        object.__setattr__(self, "delta", self.delta.as_real())
        if self.dpsi is None:
            object.__setattr__(self, "dpsi", (1.0 + self.delta.derivative()).as_real())
        m = max(256, 8 * (self.dpsi.degree + 1))
        if np.min(self.dpsi.samples(m)) <= 0.0:
            raise ValueError("diffeomorphism must be orientation preserving (psi' > 0)")

    @classmethod
    def identity(cls) -> "CircleDiffeo":
        return cls(TrigPoly.zero())

    @classmethod
    def rotation(cls, alpha: float) -> "CircleDiffeo":
        return cls(TrigPoly.constant(float(alpha), True))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return x + self.delta(x)

    def derivative(self, x):
        return self.dpsi(x)

    @property
    def degree(self) -> int:
        return self.delta.degree

    def is_rotation(self, tol: float = 1e-12) -> bool:
        c = self.delta.coeffs
        d = self.delta.degree
        nonconst = np.concatenate([c[:d], c[d + 1 :]])
        return nonconst.size == 0 or bool(np.max(np.abs(nonconst)) <= tol)

    def compose(self, inner: "CircleDiffeo", degree: int | None = None, tol: float = DEFAULT_TAIL_TOL) -> "CircleDiffeo":
        """(self o inner)(x) = self(inner(x))."""
        if degree is not None:
            outer_delta = compose_resample(self.delta, inner, degree, tol)
            return CircleDiffeo((inner.delta + outer_delta).trimmed(1e-17))
        # double the degree until the tail test passes; iterated maps stay small
        cap = 4 * (self.degree + 1) * (inner.degree + 1) + 16
        degree = min(cap, 2 * (self.degree + inner.degree) + 16)
        while True:
            try:
                outer_delta = compose_resample(self.delta, inner, degree, tol)
                break
            except SpectralTailError:
                if degree >= cap:
                    raise
                degree = min(cap, 2 * degree)
        return CircleDiffeo((inner.delta + outer_delta).trimmed(1e-17))

    def inverse(self, degree: int | None = None, tol: float = DEFAULT_TAIL_TOL) -> "CircleDiffeo":
        """Inverse map by Newton iteration on a grid."""
        degree = degree or 4 * (self.degree + 1) + 32
        m = 8 * degree
        x = grid(m)
        y = x - self.delta(x)
        for _ in range(60):
            step = (self(y) - x) / self.dpsi(y)
            y = y - step
            if np.max(np.abs(step)) < 1e-15:
                break
        p, tail = project_samples(y - x, degree)
        if tail > tol:
            raise SpectralTailError(f"inverse displacement tail {tail:.3e}")
        return CircleDiffeo(p.as_real().trimmed(1e-17))


def compose_resample(f: TrigPoly, psi: CircleDiffeo, out_degree: int, tol: float = DEFAULT_TAIL_TOL) -> TrigPoly:
    """Pullback f o psi projected to degree ``out_degree``.

    Samples on ``4*(2*out_degree+1)`` grid points and raises
    ``SpectralTailError`` when the relative tail norm exceeds ``tol``.
    """
    m = 4 * (2 * out_degree + 1)
    vals = f(psi(grid(m)))
    p, tail = project_samples(vals, out_degree)
    log.debug("compose_resample tail %.3e at degree %d", tail, out_degree)
    if tail > tol:
        raise SpectralTailError(f"pullback tail {tail:.3e} exceeds {tol:.1e}; raise out_degree")
    return p.as_real() if f.real_valued else p


def _rk4_flow(v: TrigPoly, dv: TrigPoly, y0: np.ndarray, steps: int) -> tuple[np.ndarray, np.ndarray]:
    """Integrate y' = v(y), w' = v'(y) w to time 1 with classical RK4."""
    h = 1.0 / steps
    y = y0.copy()
    w = np.ones_like(y0)
    for _ in range(steps):
        k1 = v(y)
        l1 = dv(y) * w
        y2 = y + 0.5 * h * k1
        k2 = v(y2)
        l2 = dv(y2) * (w + 0.5 * h * l1)
        y3 = y + 0.5 * h * k2
        k3 = v(y3)
        l3 = dv(y3) * (w + 0.5 * h * l2)
        y4 = y + h * k3
        k4 = v(y4)
        l4 = dv(y4) * (w + h * l3)
        y = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        w = w + h / 6.0 * (l1 + 2 * l2 + 2 * l3 + l4)
    return y, w


def flow_time_one(field: TrigPoly, steps: int = 256, tol: float = DEFAULT_TAIL_TOL, max_points: int = 4096) -> CircleDiffeo:
    """Time-1 map of the vector field y' = field(y).

    RK4 with uniform steps on a sample grid, with the variational equation
    integrated alongside so that psi' is as accurate as psi.  The grid is
    doubled until both projected displacements have a relative tail below
    ``tol``.
    """
    if steps < 16:
        raise ValueError("steps must be at least 16")
    if not field.is_real():
        raise NonRealFieldError("flow_time_one needs a real-valued field")
    v = field.as_real()
    dv = v.derivative()
    m = max(64, 8 * (v.degree + 1))
    while True:
        y0 = grid(m)
        y1, w1 = _rk4_flow(v, dv, y0, steps)
        delta, tail_d = project_samples(y1 - y0, m // 4)
        dpsi, tail_w = project_samples(w1, m // 4)
        if max(tail_d, tail_w) <= tol:
            return CircleDiffeo(delta.as_real().trimmed(1e-17), dpsi.as_real().trimmed(1e-17))
        if m >= max_points:
            raise SpectralTailError(f"flow displacement tail {max(tail_d, tail_w):.3e} at {m} points")
        m *= 2


def fixed_points(psi: CircleDiffeo, tol: float = 1e-10) -> list[tuple[float, float]]:
    """Isolated fixed points of psi with their derivatives psi'(y).

    Roots of psi(y) - y - 2*pi*m are bracketed by sign changes on a dense
    grid, refined by Brent's method and a final Newton step.

    Raises:
        ContinuumOfFixedPointsError: psi is the identity.
        DegenerateFixedPointError: some fixed point has |1 - psi'| < tol, or
            a tangential zero is detected.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    delta = psi.delta
    ddelta = delta.derivative()
    nonconst = np.concatenate([delta.coeffs[: delta.degree], delta.coeffs[delta.degree + 1 :]])
    if psi.is_rotation(tol):
        shift = float(delta.mean())
        if abs(shift - TWO_PI * round(shift / TWO_PI)) <= tol:
            raise ContinuumOfFixedPointsError("every point is fixed")
        return []
    m = max(2048, 32 * (delta.degree + 1))
    x = grid(m + 1)
    x[-1] = TWO_PI
    # direct evaluation so that bracket signs agree with the root function
    vals = np.asarray(delta(x), dtype=float)
    scale = float(np.max(np.abs(nonconst))) + 1.0
    roots: list[float] = []
    for wind in range(int(np.floor(vals.min() / TWO_PI)), int(np.ceil(vals.max() / TWO_PI)) + 1):
        g = vals - TWO_PI * wind
        fun = lambda y, w=wind: float(delta(y)) - TWO_PI * w
        for j in range(m):
            a, b = g[j], g[j + 1]
            xa, xb = x[j], x[j + 1]
            if a == 0.0:
                roots.append(xa)
                continue
            if a * b < 0:
                r = brentq(fun, xa, xb, xtol=1e-15)
                r -= fun(r) / float(ddelta(r))
                roots.append(r)
            else:
                # tangential zero: a local minimum of |g| close to zero without a sign change
                prev = g[j - 1]
                if abs(a) <= abs(prev) and abs(a) <= abs(b) and abs(a) < 1e-6 * scale and a * prev > 0:
                    raise DegenerateFixedPointError(f"tangential fixed point near y={xa:.6f}")
    out: list[tuple[float, float]] = []
    for r in sorted(np.mod(roots, TWO_PI)):
        if r > TWO_PI - 1e-12 or r < 1e-13:
            r = 0.0
        if out and abs(r - out[-1][0]) < 1e-9:
            continue
        d = float(psi.dpsi(r))
        if abs(1.0 - d) < tol:
            raise DegenerateFixedPointError(f"|1 - psi'| = {abs(1 - d):.2e} at y={r:.6f}")
        out.append((float(r), d))
    if len(out) > 1 and abs(out[0][0] + TWO_PI - out[-1][0]) < 1e-9:
        out.pop()
    return out


def critical_values(psi: CircleDiffeo) -> list[float]:
    """Values of psi(y) - y at the critical points of the displacement.

    These are the oscillation frequencies of the diagonal entries of the
    composition operator; each is reduced to (-pi, pi].
    """
    dd = psi.delta.derivative()
    d2 = dd.derivative()
    if dd.degree == 0 or np.max(np.abs(dd.coeffs)) == 0:
        return []
    m = max(2048, 32 * (dd.degree + 1))
    x = grid(m)
    g = dd.samples(m)
    vals = []
    for j in range(m):
        a, b = g[j], g[(j + 1) % m]
        if a * b < 0 or a == 0.0:
            if a == 0.0:
                r = x[j]
            else:
                r = brentq(lambda y: float(dd(y)), x[j], x[j] + TWO_PI / m, xtol=1e-15)
            if abs(float(d2(r))) < 1e-14:
                continue
            w = float(psi.delta(r))
            vals.append(float(np.angle(np.exp(1j * w))))
    uniq: list[float] = []
    for v in sorted(vals):
        if not uniq or abs(v - uniq[-1]) > 1e-9:
            uniq.append(v)
    return uniq
