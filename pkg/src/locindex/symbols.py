"""Classical symbols on circle fibers and product symbols on torus fibers.

A ``ClassicalSymbol`` of order m stores homogeneous components of degrees
m, m-1, ..., m-J+1.  Component j is a pair of TrigPolys (plus, minus) with

    sigma_{m-j}(x, p) = plus(x) |p|^{m-j}   for p >= 1,
    sigma_{m-j}(x, p) = minus(x) |p|^{m-j}  for p <= -1.

Composition uses the left (Kohn-Nirenberg) convention

    sigma_{a o b} ~ sum_k ((-i)^k / k!) d_p^k a  d_x^k b.

``ProductSymbol2D`` keeps grid samples over (x, y, theta) of components
homogeneous in (p, q) = r (cos theta, sin theta).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from math import factorial
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import InsufficientDepthError, NonEllipticError, SpectralTailError
from .harmonics import TWO_PI, TrigPoly, grid

DEFAULT_DEPTH = 6
_TRIM = 1e-16

Sheet = tuple[TrigPoly, TrigPoly]


def _zero_sheet() -> Sheet:
    return (TrigPoly.zero(), TrigPoly.zero())


def falling(d: float, k: int) -> float:
    """Falling factorial d (d-1) ... (d-k+1)."""
    out = 1.0
    for i in range(k):
        out *= d - i
    return out


@dataclass(frozen=True)
class ClassicalSymbol:
    """Classical 1-step polyhomogeneous symbol on the circle."""

    order: int
    components: tuple[Sheet, ...]

    def __post_init__(self):
        comps = tuple((TrigPoly(a.coeffs, a.real_valued), TrigPoly(b.coeffs, b.real_valued)) for a, b in self.components)
        if not comps:
            comps = (_zero_sheet(),)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "order", int(self.order))

    # construction -------------------------------------------------------
    @classmethod
    def from_sheets(cls, order: int, sheets: Iterable[Sequence]) -> "ClassicalSymbol":
        comps = []
        for plus, minus in sheets:
            plus = plus if isinstance(plus, TrigPoly) else TrigPoly.constant(plus)
            minus = minus if isinstance(minus, TrigPoly) else TrigPoly.constant(minus)
            comps.append((plus, minus))
        return cls(order, tuple(comps))

    @classmethod
    def constant(cls, value: complex = 1.0, depth: int = DEFAULT_DEPTH) -> "ClassicalSymbol":
        """The order-0 symbol with constant leading part and zero tail."""
        c = TrigPoly.constant(value)
        return cls.from_sheets(0, [(c, c)]).padded(depth)

    @classmethod
    def multiplication(cls, f: TrigPoly, depth: int = DEFAULT_DEPTH) -> "ClassicalSymbol":
        """Multiplication operator by f(x)."""
        return cls.from_sheets(0, [(f, f)]).padded(depth)

    @classmethod
    def abs_p(cls, power: int = 1, depth: int = DEFAULT_DEPTH, coefficient: TrigPoly | complex = 1.0) -> "ClassicalSymbol":
        """coefficient(x) * |p|^power."""
        c = coefficient if isinstance(coefficient, TrigPoly) else TrigPoly.constant(coefficient)
        return cls.from_sheets(power, [(c, c)]).padded(depth)

    @classmethod
    def momentum(cls, depth: int = DEFAULT_DEPTH) -> "ClassicalSymbol":
        """The symbol p (order 1, sheets +1 and -1)."""
        return cls.from_sheets(1, [(1.0, -1.0)]).padded(depth)

    @classmethod
    def japanese(cls, depth: int = DEFAULT_DEPTH, mu2: float = 1.0, scale: float = 1.0) -> "ClassicalSymbol":
        """scale * sqrt(mu2 + p^2) expanded in |p|^{1-2n}."""
        sheets = []
        for j in range(depth):
            if j % 2:
                sheets.append((0.0, 0.0))
            else:
                n = j // 2
                c = scale * _binom_half(n) * mu2**n
                sheets.append((c, c))
        return cls.from_sheets(1, sheets)

    @classmethod
    def random(cls, rng: np.random.Generator, order: int, depth: int = DEFAULT_DEPTH, max_degree: int = 4, scale: float = 1.0) -> "ClassicalSymbol":
        """Random symbol with complex trig-poly sheets of degree <= max_degree."""
        sheets = []
        for _ in range(depth):
            pair = []
            for _ in range(2):
                d = int(rng.integers(0, max_degree + 1))
                c = scale * (rng.standard_normal(2 * d + 1) + 1j * rng.standard_normal(2 * d + 1)) / (1 + np.abs(np.arange(-d, d + 1)))
                pair.append(TrigPoly(c))
            sheets.append(tuple(pair))
        return cls(order, tuple(sheets))

    # access -------------------------------------------------------------
    @property
    def depth(self) -> int:
        return len(self.components)

    def degree_of(self, j: int) -> int:
        return self.order - j

    def component(self, j: int) -> Sheet:
        if 0 <= j < self.depth:
            return self.components[j]
        return _zero_sheet()

    def at_degree(self, d: int) -> Sheet:
        return self.component(self.order - d)

    @property
    def leading(self) -> Sheet:
        return self.components[0]

    @property
    def max_trig_degree(self) -> int:
        return max(max(a.degree, b.degree) for a, b in self.components)

    def padded(self, depth: int) -> "ClassicalSymbol":
        if depth <= self.depth:
            return self
        return ClassicalSymbol(self.order, self.components + tuple(_zero_sheet() for _ in range(depth - self.depth)))

    def truncated(self, depth: int) -> "ClassicalSymbol":
        return ClassicalSymbol(self.order, self.components[:depth])

    def is_elliptic(self, m: int = 512) -> bool:
        plus, minus = self.leading
        return bool(np.min(np.abs(plus.samples(m))) > 1e-12 and np.min(np.abs(minus.samples(m))) > 1e-12)

    def is_polynomial_component(self, j: int, tol: float = 0.0) -> bool:
        """True when component j is the restriction of c(x) p^d, d >= 0 integer."""
        d = self.order - j
        if d < 0:
            return False
        plus, minus = self.component(j)
        return (plus - (-1) ** d * minus).allclose(TrigPoly.zero(), atol=tol)

    # evaluation ---------------------------------------------------------
    def evaluate(self, x, p) -> np.ndarray:
        """Sum of the stored homogeneous components at (x, p), |p| >= 1."""
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        out = np.zeros(np.broadcast(x, p).shape, dtype=complex)
        ap = np.abs(p)
        for j, (plus, minus) in enumerate(self.components):
            d = self.order - j
            sheet = np.where(p > 0, plus(x), minus(x))
            out = out + sheet * ap ** float(d)
        return out

    # calculus -----------------------------------------------------------
    def d_p(self, k: int = 1) -> "ClassicalSymbol":
        """k-th p-derivative; the order drops by k."""
        if k == 0:
            return self
        comps = []
        for j, (plus, minus) in enumerate(self.components):
            f = falling(self.order - j, k)
            comps.append((plus * f, minus * (f * (-1) ** k)))
        return ClassicalSymbol(self.order - k, tuple(comps))

    def d_x(self, k: int = 1) -> "ClassicalSymbol":
        if k == 0:
            return self
        return ClassicalSymbol(self.order, tuple((a.derivative(k), b.derivative(k)) for a, b in self.components))

    def map_sheets(self, fn: Callable[[TrigPoly], TrigPoly]) -> "ClassicalSymbol":
        return ClassicalSymbol(self.order, tuple((fn(a), fn(b)) for a, b in self.components))

    def __add__(self, other: "ClassicalSymbol") -> "ClassicalSymbol":
        if not isinstance(other, ClassicalSymbol):
            return NotImplemented
        top = max(self.order, other.order)
        low = min(self.order - self.depth, other.order - other.depth)
        comps = []
        for d in range(top, low, -1):
            a = self.at_degree(d)
            b = other.at_degree(d)
            comps.append((a[0] + b[0], a[1] + b[1]))
        return ClassicalSymbol(top, tuple(comps))

    def __neg__(self) -> "ClassicalSymbol":
        return self.map_sheets(lambda t: -t)

    def __sub__(self, other: "ClassicalSymbol") -> "ClassicalSymbol":
        return self + (-other)

    def __mul__(self, c) -> "ClassicalSymbol":
        """Scalar or left multiplication by a TrigPoly in x."""
        return self.map_sheets(lambda t: (t * c) if not isinstance(c, TrigPoly) else (c * t).trimmed(_TRIM))

    __rmul__ = __mul__

    def max_abs(self, from_degree: int | None = None) -> float:
        """Largest coefficient modulus over components with degree <= from_degree."""
        out = 0.0
        for j, (a, b) in enumerate(self.components):
            if from_degree is not None and self.order - j > from_degree:
                continue
            out = max(out, float(np.max(np.abs(a.coeffs))), float(np.max(np.abs(b.coeffs))))
        return out

    # serialization ------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "components": [
                {"degree": self.order - j, "sheet_plus": a.to_pairs(), "sheet_minus": b.to_pairs()}
                for j, (a, b) in enumerate(self.components)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ClassicalSymbol":
        order = int(data["order"])
        by_degree = {int(c["degree"]): c for c in data["components"]}
        depth = max(order - d for d in by_degree) + 1 if by_degree else 1
        sheets = []
        for j in range(depth):
            c = by_degree.get(order - j)
            if c is None:
                sheets.append(_zero_sheet())
            else:
                sheets.append((TrigPoly.from_pairs(c["sheet_plus"]), TrigPoly.from_pairs(c["sheet_minus"])))
        return cls(order, tuple(sheets))

    @classmethod
    def from_json(cls, text: str) -> "ClassicalSymbol":
        return cls.from_dict(json.loads(text))


def _binom_half(n: int) -> float:
    """Binomial coefficient C(1/2, n)."""
    out = 1.0
    for i in range(n):
        out *= (0.5 - i) / (i + 1)
    return out


def _check_depth(K: int, *symbols: ClassicalSymbol) -> None:
    for s in symbols:
        if s.depth < K:
            raise InsufficientDepthError(f"symbol of depth {s.depth} cannot be composed to depth {K}; use .padded({K})")


def _mul_sheet(a: Sheet, b: Sheet, coef: complex) -> Sheet:
    return ((a[0] * b[0]) * coef, (a[1] * b[1]) * coef)


def _add_sheet(a: Sheet, b: Sheet) -> Sheet:
    return (a[0] + b[0], a[1] + b[1])


def _trim_sheet(a: Sheet) -> Sheet:
    return (a[0].trimmed(_TRIM), a[1].trimmed(_TRIM))


def compose1d(a: ClassicalSymbol, b: ClassicalSymbol, K: int = DEFAULT_DEPTH) -> ClassicalSymbol:
    """Asymptotic product a o b truncated to K homogeneous components."""
    _check_depth(K, a, b)
    dpa = [a.d_p(k) for k in range(K)]
    dxb = [b.d_x(k) for k in range(K)]
    comps: list[Sheet] = []
    for j in range(K):
        acc = _zero_sheet()
        for k in range(j + 1):
            coef = (-1j) ** k / factorial(k)
            for ja in range(j - k + 1):
                jb = j - k - ja
                acc = _add_sheet(acc, _mul_sheet(dpa[k].component(ja), dxb[k].component(jb), coef))
        comps.append(_trim_sheet(acc))
    return ClassicalSymbol(a.order + b.order, tuple(comps))


def parametrix1d(a: ClassicalSymbol, K: int = DEFAULT_DEPTH, tol: float = 1e-15) -> ClassicalSymbol:
    """Symbol r of order -m with compose1d(a, r, K) = 1 in all K stored degrees."""
    _check_depth(K, a)
    if not a.is_elliptic():
        raise NonEllipticError("leading symbol vanishes somewhere")
    plus0, minus0 = a.leading
    inv = (plus0.reciprocal(tol), minus0.reciprocal(tol))
    r_comps: list[Sheet] = [inv]
    dpa = [a.d_p(k) for k in range(K)]
    for j in range(1, K):
        r = ClassicalSymbol(-a.order, tuple(r_comps) + (_zero_sheet(),) * (K - j))
        dxr = [r.d_x(k) for k in range(j + 1)]
        acc = _zero_sheet()
        for k in range(j + 1):
            coef = (-1j) ** k / factorial(k)
            for ja in range(j - k + 1):
                jr = j - k - ja
                if ja == 0 and k == 0:
                    continue
                acc = _add_sheet(acc, _mul_sheet(dpa[k].component(ja), dxr[k].component(jr), coef))
        r_comps.append(_trim_sheet(_mul_sheet(inv, acc, -1.0)))
    return ClassicalSymbol(-a.order, tuple(r_comps))


@dataclass(frozen=True)
class LogSymbol:
    """ln Q at symbol level: ell0 * ln|p| + tail."""

    ell0: float
    tail: ClassicalSymbol

    def d_p(self) -> ClassicalSymbol:
        """p-derivative as an order -1 classical symbol (d_p ln|p| = 1/p)."""
        K = self.tail.depth
        lead = ClassicalSymbol.from_sheets(-1, [(self.ell0, -self.ell0)]).padded(K)
        return lead + self.tail.d_p(1).truncated(K)

    def evaluate(self, x, p) -> np.ndarray:
        return self.ell0 * np.log(np.abs(np.asarray(p, dtype=float))) + self.tail.evaluate(x, p)


def _log1p_series(u: list[TrigPoly], K: int) -> list[TrigPoly]:
    """Coefficients of ln(1 + sum_{j>=1} u_j t^j) in powers t^0..t^{K-1}."""
    out = [TrigPoly.zero() for _ in range(K)]
    power = [TrigPoly.constant(1.0)] + [TrigPoly.zero() for _ in range(K - 1)]
    for n in range(1, K):
        new = [TrigPoly.zero() for _ in range(K)]
        for i in range(K):
            if power[i].coeffs.size == 1 and power[i].coeffs[0] == 0:
                continue
            for j in range(1, K - i):
                new[i + j] = new[i + j] + power[i] * u[j]
        power = [p.trimmed(_TRIM) for p in new]
        sign = 1.0 if n % 2 else -1.0
        for i in range(K):
            out[i] = out[i] + power[i] * (sign / n)
    return [p.trimmed(_TRIM) for p in out]


def log_symbol(q: ClassicalSymbol, K: int = DEFAULT_DEPTH) -> LogSymbol:
    """Symbol of ln Q for a positive elliptic order-1 symbol q.

    With t = 1/|p| the sheets factor as q = q_1 |p| (1 + u(t)), so that
    ln q = ln|p| + ln q_1 + ln(1 + u).  This is the exact log symbol when
    the coefficients do not depend on x; for x-dependent q only the order-0
    component is exact (composition corrections are not included).
    """
    _check_depth(K, q)
    if q.order != 1:
        raise NonEllipticError("log_symbol expects an order-1 symbol")
    comps: list[list[TrigPoly]] = [[], []]
    for side in (0, 1):
        lead = q.leading[side]
        vals = lead.samples(512)
        if np.max(np.abs(np.imag(vals))) > 1e-12 or np.min(np.real(vals)) <= 0:
            raise NonEllipticError("leading symbol must be strictly positive on both sheets")
        inv = lead.reciprocal() if lead.degree > 0 else TrigPoly.constant(1.0 / lead.coeff(0))
        u = [TrigPoly.zero()] + [(q.component(j)[side] * inv).trimmed(_TRIM) for j in range(1, K)]
        series = _log1p_series(u, K)
        ln_lead = TrigPoly.from_function(lambda x, f=lead: np.log(np.real(f(x))), real_valued=True)
        series[0] = series[0] + ln_lead
        comps[side] = series
    tail = ClassicalSymbol(0, tuple(zip(comps[0], comps[1])))
    return LogSymbol(1.0, tail)


def log_commutator(q: ClassicalSymbol, a: ClassicalSymbol, K: int = DEFAULT_DEPTH) -> ClassicalSymbol:
    """Symbol of [ln Q, A] truncated to K components; order m_a - 1."""
    _check_depth(K, a)
    ell = log_symbol(q, K)
    dl = ell.d_p()
    tail = ell.tail
    dpa = [a.d_p(k) for k in range(K + 1)]
    dxa = [a.d_x(k) for k in range(K + 1)]
    dxt = [tail.d_x(k) for k in range(K + 1)]
    dpl = [dl.d_p(k) for k in range(K)]
    comps: list[Sheet] = []
    for j in range(K):
        acc = _zero_sheet()
        for k in range(1, j + 2):
            coef = (-1j) ** k / factorial(k)
            for i1 in range(j - k + 2):
                i2 = j - k + 1 - i1
                # d_p^k ell . d_x^k a  (d_p^k ell = d_p^{k-1} of the order -1 symbol dl)
                acc = _add_sheet(acc, _mul_sheet(dpl[k - 1].component(i1), dxa[k].component(i2), coef))
                # - d_p^k a . d_x^k tail
                acc = _add_sheet(acc, _mul_sheet(dpa[k].component(i1), dxt[k].component(i2), -coef))
        comps.append(_trim_sheet(acc))
    return ClassicalSymbol(a.order - 1, tuple(comps))


# --------------------------------------------------------------------------
# product symbols on the torus


def _fft_derivative(values: np.ndarray, axis: int, order: int = 1) -> np.ndarray:
    n = values.shape[axis]
    k = np.fft.fftfreq(n, d=1.0 / n)
    if n % 2 == 0:
        k[n // 2] = 0.0
    shape = [1] * values.ndim
    shape[axis] = n
    mult = ((1j * k) ** order).reshape(shape)
    out = np.fft.ifft(np.fft.fft(values, axis=axis) * mult, axis=axis)
    return out


def _tail_fraction(values: np.ndarray, axis: int) -> float:
    n = values.shape[axis]
    if n < 8:
        return 0.0
    spec = np.abs(np.fft.fft(values, axis=axis)) ** 2
    k = np.abs(np.fft.fftfreq(n, d=1.0 / n))
    shape = [1] * values.ndim
    shape[axis] = n
    high = (k > n // 4).reshape(shape)
    total = spec.sum()
    return float(np.sqrt((spec * high).sum() / total)) if total > 0 else 0.0


@dataclass(frozen=True)
class ProductSymbol2D:
    """Symbol on a torus fiber stored as polar-homogeneous grid samples.

    ``components[j]`` has shape (nx, ny, ntheta) and holds the degree
    ``order - j`` component at (p, q) = (cos theta, sin theta) over the
    uniform x, y and theta grids.
    """

    order: int
    components: tuple[np.ndarray, ...]

    def __post_init__(self):
        comps = tuple(np.asarray(c, dtype=complex) for c in self.components)
        shapes = {c.shape for c in comps}
        if len(shapes) != 1 or len(next(iter(shapes))) != 3:
            raise ValueError("components must share one 3-d grid shape")
        if comps[0].shape[2] % 2:
            raise ValueError("angle grid must have even size")
        for c in comps:
            c.setflags(write=False)
        object.__setattr__(self, "components", comps)

    @classmethod
    def from_functions(
        cls,
        order: int,
        funcs: Sequence[Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray] | None],
        nx: int = 8,
        ny: int = 64,
        ntheta: int = 64,
    ) -> "ProductSymbol2D":
        """Sample f_j(x, y, theta) for each component on the tensor grid."""
        X, Y, T = np.meshgrid(grid(nx), grid(ny), grid(ntheta), indexing="ij")
        comps = []
        for f in funcs:
            comps.append(np.zeros(X.shape, dtype=complex) if f is None else np.broadcast_to(np.asarray(f(X, Y, T), dtype=complex), X.shape).copy())
        return cls(order, tuple(comps))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.components[0].shape

    @property
    def depth(self) -> int:
        return len(self.components)

    def degree_of(self, j: int) -> int:
        return self.order - j

    def at_degree(self, d: int) -> np.ndarray | None:
        j = self.order - d
        return self.components[j] if 0 <= j < self.depth else None

    def spectral_tail(self) -> float:
        return max(_tail_fraction(c, ax) for c in self.components for ax in range(3))

    def check_tail(self, tol: float = 1e-10) -> None:
        t = self.spectral_tail()
        if t > tol:
            raise SpectralTailError(f"grid tail {t:.2e} above {tol:.1e}")

    def q_derivative(self, check: bool = False, tol: float = 1e-10) -> "ProductSymbol2D":
        """d/dq on each component: (d sin(theta) + cos(theta) d/dtheta)."""
        if check:
            self.check_tail(tol)
        theta = grid(self.shape[2])
        s, c = np.sin(theta), np.cos(theta)
        comps = []
        for j, comp in enumerate(self.components):
            d = self.order - j
            dth = _fft_derivative(comp, axis=2)
            comps.append(d * s * comp + c * dth)
        return ProductSymbol2D(self.order - 1, tuple(comps))

    def p_derivative(self) -> "ProductSymbol2D":
        """d/dp on each component: (d cos(theta) - sin(theta) d/dtheta)."""
        theta = grid(self.shape[2])
        s, c = np.sin(theta), np.cos(theta)
        comps = []
        for j, comp in enumerate(self.components):
            d = self.order - j
            comps.append(d * c * comp - s * _fft_derivative(comp, axis=2))
        return ProductSymbol2D(self.order - 1, tuple(comps))

    def y_derivative(self, order: int = 1, check: bool = False, tol: float = 1e-10) -> "ProductSymbol2D":
        if check:
            self.check_tail(tol)
        return ProductSymbol2D(self.order, tuple(_fft_derivative(c, axis=1, order=order) for c in self.components))

    def restrict_q0(self, d: int) -> tuple[np.ndarray, np.ndarray]:
        """Degree-d component on the sheets (p, q) = (+1, 0) and (-1, 0)."""
        comp = self.at_degree(d)
        nx, ny, nt = self.shape
        if comp is None:
            z = np.zeros((nx, ny), dtype=complex)
            return z, z.copy()
        return comp[:, :, 0].copy(), comp[:, :, nt // 2].copy()

    def angular_coefficients(self) -> list[np.ndarray]:
        """x-mean, y- and theta-Fourier coefficients of each component.

        Returns arrays of shape (ny, ntheta) in numpy FFT ordering, normalised
        so that f(y, theta) = sum c[m, n] exp(i m y + i n theta).
        """
        out = []
        for comp in self.components:
            mean_x = comp.mean(axis=0)
            out.append(np.fft.fft2(mean_x) / mean_x.size)
        return out
