"""Foliated models with a transverse flow, crossed-product elements and traces.

A transversal component is either periodic (a circle B_p of length p on
which the flow acts by translation b -> b + t) or a fixed point v of the
flow with exponent kappa.  Leaves are circles; going once around a periodic
component returns the leaf through the map h.

Elements of the convolution algebra are sampled as f(b, t) on a uniform
t-grid over [-T, T] and a uniform b-grid, with the product

    (f g)(b, s) = int f(b, t) g(b + t, s - t) dt.

All quadratures are trapezoid sums on the grid, which is spectrally accurate
for smooth compactly supported data and keeps the discrete trace identities
exact up to rounding.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import expm

from .errors import (
    ContinuumOfFixedPointsError,
    ModelError,
    NormalizationError,
    NotIdempotentError,
    SupportError,
)
from .harmonics import TWO_PI, CircleDiffeo, TrigPoly, fixed_points
from .operators import (
    EigenData,
    FourierOperator,
    QModel,
    suspension_operator,
    toeplitz,
)
from .zeta import ContinuationConfig, continue_diagonal, log_commutator_operator

log = logging.getLogger(__name__)

SUPPORT_TOL = 1e-13


# --------------------------------------------------------------------------
# models


@dataclass(frozen=True)
class PeriodicComponent:
    """Periodic transversal of length ``period`` with leaf return map h."""

    period: float
    return_map: CircleDiffeo
    j: np.ndarray | None = None
    rotation: float | None = None

    @property
    def kind(self) -> str:
        return "periodic"


@dataclass(frozen=True)
class FixedPointComponent:
    """Fixed point of the flow with exponent kappa and bundle generator j."""

    kappa: float
    j: np.ndarray | None = None

    @property
    def kind(self) -> str:
        return "fixed_point"


@dataclass(frozen=True)
class OrbitData:
    """Orbit constants entering the localized traces.

    For a periodic orbit: ``period`` p_Pi, the return derivative ``hprime``
    (constant along the orbit), the bundle return map ``j`` and the number
    of passes ``windings`` through the transversal.  For a fixed point:
    ``kappa`` and the generator ``j``.
    """

    kind: str
    component: int
    j: np.ndarray
    n_plus: int
    period: float = 0.0
    hprime: float = 1.0
    windings: int = 1
    kappa: float = 0.0
    base_points: tuple = ()

    def supertrace(self, M: np.ndarray) -> complex:
        d = np.diag(M)
        return complex(np.sum(d[: self.n_plus]) - np.sum(d[self.n_plus :]))


@dataclass(frozen=True)
class FoliatedModel:
    """Transversal components with graded bundle data.

    ``leaf_modes`` is the truncation of the leaf Fourier modes used by
    index_pairing; ``n_max`` bounds the non-degeneracy checks.
    """

    components: tuple
    n_plus: int = 1
    n_minus: int = 0
    n_max: int = 4
    leaf_modes: int = 8
    name: str = ""

    def __post_init__(self):
        if not self.components:
            raise ModelError("a model needs at least one transversal component")
        if self.n_plus < 0 or self.n_minus < 0 or self.n_plus + self.n_minus == 0:
            raise ModelError("bundle dimensions must be nonnegative and not both zero")
        for i, c in enumerate(self.components):
            if isinstance(c, PeriodicComponent):
                if c.period <= 0:
                    raise ModelError(f"component {i}: period must be positive")
            # kappa = 0 is kept so that check_nondegenerate can report it
            elif not isinstance(c, FixedPointComponent):
                raise ModelError(f"component {i}: unknown kind")
            j = self.bundle_map(i)
            if j.shape != (self.rank, self.rank):
                raise ModelError(f"component {i}: j has shape {j.shape}, expected {(self.rank, self.rank)}")
            off = np.abs(j[: self.n_plus, self.n_plus :]).max(initial=0.0) + np.abs(j[self.n_plus :, : self.n_plus]).max(initial=0.0)
            if off > 1e-12:
                raise ModelError(f"component {i}: j does not preserve the grading")

    @property
    def rank(self) -> int:
        return self.n_plus + self.n_minus

    def bundle_map(self, i: int) -> np.ndarray:
        c = self.components[i]
        if c.j is not None:
            return np.atleast_2d(np.asarray(c.j, dtype=complex))
        if isinstance(c, PeriodicComponent):
            return np.eye(self.rank, dtype=complex)
        return np.zeros((self.rank, self.rank), dtype=complex)

    @property
    def periodic(self) -> list[int]:
        return [i for i, c in enumerate(self.components) if isinstance(c, PeriodicComponent)]

    @property
    def fixed(self) -> list[int]:
        return [i for i, c in enumerate(self.components) if isinstance(c, FixedPointComponent)]

    def orbits(self, n_max: int | None = None) -> list[OrbitData]:
        """Periodic orbits of period n p (n <= n_max) and the fixed points of the flow."""
        n_max = self.n_max if n_max is None else n_max
        out: list[OrbitData] = []
        for i in self.periodic:
            c = self.components[i]
            if c.rotation is not None:
                continue  # rotations have no isolated periodic points
            j = self.bundle_map(i)
            seen: list[float] = []
            hn = c.return_map
            for n in range(1, n_max + 1):
                if n > 1:
                    hn = c.return_map.compose(hn)
                for y, dh in fixed_points(hn):
                    if any(_circle_dist(y, s) < 1e-8 for s in seen):
                        continue
                    cycle = [y]
                    z = y
                    for _ in range(n - 1):
                        z = float(np.mod(c.return_map(z), TWO_PI))
                        cycle.append(z)
                    seen.extend(cycle)
                    out.append(
                        OrbitData(
                            "periodic",
                            i,
                            np.linalg.matrix_power(j, n),
                            self.n_plus,
                            period=n * c.period,
                            hprime=float(dh),
                            windings=n,
                            base_points=tuple(cycle),
                        )
                    )
        for i in self.fixed:
            c = self.components[i]
            out.append(OrbitData("fixed_point", i, self.bundle_map(i), self.n_plus, kappa=c.kappa))
        return out


def _circle_dist(a: float, b: float) -> float:
    d = abs(np.mod(a - b, TWO_PI))
    return min(d, TWO_PI - d)


def rotation_component(period: float, angle: float, j=None) -> PeriodicComponent:
    """Periodic component whose leaf return map is the rotation by ``angle``."""
    return PeriodicComponent(period, CircleDiffeo.rotation(angle), j, rotation=float(angle))


# --------------------------------------------------------------------------
# elements


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_j = (j - c) h, j = 0..2c, with c h = T."""

    T: float
    h: float

    def __post_init__(self):
        c = self.T / self.h
        if abs(c - round(c)) > 1e-9 or c < 2:
            raise ValueError("T must be a positive integer multiple of h (at least 2 h)")

    @property
    def center(self) -> int:
        return int(round(self.T / self.h))

    @property
    def size(self) -> int:
        return 2 * self.center + 1

    @property
    def t(self) -> np.ndarray:
        return (np.arange(self.size) - self.center) * self.h

    def index(self, t: float) -> int | None:
        """Grid index of t, or None when t is not a grid point."""
        x = t / self.h
        if abs(x - round(x)) > 1e-9:
            return None
        i = int(round(x)) + self.center
        return i if 0 <= i < self.size else -1


@dataclass(frozen=True)
class CrossedElement:
    """lambda + f with f(b, t) sampled per component.

    ``data[c]`` has shape (nt, nb_c, m, m): nb_c uniform b-samples on [0, p)
    for a periodic component and nb_c = 1 for a fixed point.  ``unit`` is
    the m x m coefficient of the adjoined unit (None for 0).
    """

    model: FoliatedModel
    grid: TimeGrid
    data: tuple
    positive: bool = False
    unit: np.ndarray | None = None

    def __post_init__(self):
        if len(self.data) != len(self.model.components):
            raise SupportError("one data array per component is required")
        m = None
        for c, arr in enumerate(self.data):
            if arr.ndim != 4 or arr.shape[0] != self.grid.size or arr.shape[2] != arr.shape[3]:
                raise SupportError(f"component {c}: data must have shape (nt, nb, m, m)")
            if isinstance(self.model.components[c], FixedPointComponent) and arr.shape[1] != 1:
                raise SupportError(f"component {c}: fixed-point data must have nb = 1")
            if m is not None and arr.shape[2] != m:
                raise SupportError("matrix sizes differ between components")
            m = arr.shape[2]
            scale = max(1.0, float(np.max(np.abs(arr))))
            if np.max(np.abs(arr[[0, -1]])) > SUPPORT_TOL * scale:
                raise SupportError(f"component {c}: samples do not vanish at the grid boundary")
            if self.positive:
                nonpos = arr[: self.grid.center + 1]
                if np.max(np.abs(nonpos)) > SUPPORT_TOL * scale:
                    raise SupportError(f"component {c}: positive-time element has support at t <= 0")
        if self.unit is not None:
            object.__setattr__(self, "unit", np.atleast_2d(np.asarray(self.unit, dtype=complex)))
            if self.unit.shape != (m, m):
                raise SupportError("unit coefficient has the wrong size")

    # construction ----------------------------------------------------------
    @classmethod
    def from_function(
        cls,
        model: FoliatedModel,
        grid: TimeGrid,
        funcs: Sequence[Callable | None],
        nb: int = 32,
        msize: int = 1,
        positive: bool = False,
        unit=None,
    ) -> "CrossedElement":
        """Sample funcs[c](b, t) (broadcast over arrays, matrix values in the last two axes)."""
        data = []
        t = grid.t
        for c, comp in enumerate(model.components):
            nbc = nb if isinstance(comp, PeriodicComponent) else 1
            b = np.arange(nbc) * (comp.period / nbc) if nbc > 1 else np.zeros(1)
            arr = np.zeros((t.size, nbc, msize, msize), dtype=complex)
            f = funcs[c] if c < len(funcs) else None
            if f is not None:
                vals = np.asarray(f(b[None, :], t[:, None]), dtype=complex)
                if vals.ndim == 2:
                    vals = vals[..., None, None] * np.eye(msize)
                arr[:] = np.broadcast_to(vals, arr.shape)
            data.append(arr)
        return cls(model, grid, tuple(data), positive, unit)

    @classmethod
    def zeros_like(cls, other: "CrossedElement") -> "CrossedElement":
        return cls(other.model, other.grid, tuple(np.zeros_like(a) for a in other.data), other.positive, None)

    @property
    def msize(self) -> int:
        return self.data[0].shape[2]

    def unit_matrix(self) -> np.ndarray:
        return np.zeros((self.msize, self.msize), dtype=complex) if self.unit is None else self.unit

    # algebra ---------------------------------------------------------------
    def _check(self, other: "CrossedElement"):
        if other.model is not self.model and other.model != self.model:
            raise ModelError("elements belong to different models")
        if other.grid != self.grid:
            raise SupportError("elements use different t-grids")
        if [a.shape for a in self.data] != [a.shape for a in other.data]:
            raise SupportError("elements use different b-grids or matrix sizes")

    def __add__(self, other: "CrossedElement") -> "CrossedElement":
        self._check(other)
        unit = None if self.unit is None and other.unit is None else self.unit_matrix() + other.unit_matrix()
        return CrossedElement(self.model, self.grid, tuple(a + b for a, b in zip(self.data, other.data)), self.positive and other.positive, unit)

    def __neg__(self) -> "CrossedElement":
        return self * -1.0

    def __sub__(self, other: "CrossedElement") -> "CrossedElement":
        return self + (-other)

    def __mul__(self, c) -> "CrossedElement":
        if isinstance(c, CrossedElement):
            return convolve(self, c)
        unit = None if self.unit is None else self.unit * c
        return CrossedElement(self.model, self.grid, tuple(a * c for a in self.data), self.positive, unit)

    __rmul__ = __mul__

    def matrix_map(self, left: np.ndarray | None = None, right: np.ndarray | None = None) -> "CrossedElement":
        """Multiply samples (and unit) by constant matrices."""
        L = np.eye(self.msize) if left is None else left
        R = np.eye(self.msize) if right is None else right
        data = tuple(np.einsum("ab,tnbc,cd->tnad", L, a, R) for a in self.data)
        unit = None if self.unit is None else L @ self.unit @ R
        return CrossedElement(self.model, self.grid, data, self.positive, unit)

    def sup_norm(self) -> float:
        n = max(float(np.max(np.abs(a))) for a in self.data)
        if self.unit is not None:
            n = max(n, float(np.max(np.abs(self.unit))))
        return n

    def support(self) -> tuple[float, float] | None:
        """Smallest [t0, t1] containing the samples of all components."""
        t = self.grid.t
        live = np.zeros(t.size, dtype=bool)
        for a in self.data:
            scale = max(1e-300, float(np.max(np.abs(a))))
            live |= np.max(np.abs(a), axis=(1, 2, 3)) > SUPPORT_TOL * scale
        if not live.any():
            return None
        idx = np.flatnonzero(live)
        return float(t[idx[0]]), float(t[idx[-1]])

    def b_tail(self) -> float:
        """Relative energy in the upper quarter of the b-spectrum (smoothness proxy)."""
        worst = 0.0
        for a in self.data:
            nb = a.shape[1]
            if nb < 8:
                continue
            spec = np.fft.fft(a, axis=1)
            freqs = np.abs(np.fft.fftfreq(nb, d=1.0 / nb))
            hi = freqs >= nb / 4
            tot = float(np.sum(np.abs(spec) ** 2))
            if tot > 0:
                worst = max(worst, float(np.sum(np.abs(spec[:, hi]) ** 2) / tot))
        return worst

    def allclose(self, other: "CrossedElement", tol: float) -> bool:
        return (self - other).sup_norm() <= tol


def _shift_samples(a: np.ndarray, shifts: np.ndarray, period: float) -> np.ndarray:
    """a(b + s) on the b-grid for each shift s; returns shape (len(shifts),) + a.shape."""
    nb = a.shape[1]
    if nb == 1:
        return np.broadcast_to(a, (shifts.size,) + a.shape)
    spec = np.fft.fft(a, axis=1)
    q = np.fft.fftfreq(nb, d=1.0 / nb)
    phase = np.exp(1j * TWO_PI / period * np.multiply.outer(shifts, q))
    return np.fft.ifft(spec[None] * phase[:, None, :, None, None], axis=2)


def _convolve_arrays(fa: np.ndarray, ga: np.ndarray, grid: TimeGrid, period: float | None) -> np.ndarray:
    nt, nb = fa.shape[0], fa.shape[1]
    c = grid.center
    h = grid.h
    out = np.zeros((nt,) + fa.shape[1:], dtype=complex)
    live = np.flatnonzero(np.max(np.abs(fa), axis=(1, 2, 3)) > 0)
    if live.size == 0 or not np.any(ga):
        return out
    # only the rows where g lives need shifting
    glive = np.flatnonzero(np.max(np.abs(ga), axis=(1, 2, 3)) > 0)
    g0, g1 = int(glive[0]), int(glive[-1]) + 1
    gsub = ga[g0:g1]
    gspec = np.fft.fft(gsub, axis=1) if nb > 1 else None
    q = np.fft.fftfreq(nb, d=1.0 / nb)
    for j in live:
        tj = (j - c) * h
        # s_i = t_j + tau_k  <=>  i = j + k - c
        i0, i1 = j + g0 - c, j + g1 - c
        lo, hi = max(0, i0), min(nt, i1)
        if lo >= hi:
            continue
        if nb > 1:
            phase = np.exp(1j * TWO_PI / period * q * tj)
            gs = np.fft.ifft(gspec[lo - i0 : hi - i0] * phase[None, :, None, None], axis=1)
        else:
            gs = gsub[lo - i0 : hi - i0]
        out[lo:hi] += np.einsum("nab,knbc->knac", fa[j], gs)
    return out * h


def convolve(f: CrossedElement, g: CrossedElement) -> CrossedElement:
    """(f g)(b, s) = int f(b, t) g(b + t, s - t) dt, with unit parts."""
    f._check(g)
    sf, sg = f.support(), g.support()
    if sf is not None and sg is not None:
        lo, hi = sf[0] + sg[0], sf[1] + sg[1]
        if lo <= -f.grid.T or hi >= f.grid.T:
            raise SupportError(f"product support [{lo:.3g}, {hi:.3g}] overflows the grid [-{f.grid.T}, {f.grid.T}]")
    data = []
    for c, comp in enumerate(f.model.components):
        period = comp.period if isinstance(comp, PeriodicComponent) else None
        arr = _convolve_arrays(f.data[c], g.data[c], f.grid, period)
        if f.unit is not None:
            arr = arr + np.einsum("ab,tnbc->tnac", f.unit, g.data[c])
        if g.unit is not None:
            arr = arr + np.einsum("tnab,bc->tnac", f.data[c], g.unit)
        data.append(arr)
    unit = None if f.unit is None or g.unit is None else f.unit @ g.unit
    return CrossedElement(f.model, f.grid, tuple(data), f.positive and g.positive, unit)


# --------------------------------------------------------------------------
# representation and traces


def _t_interp(samples: np.ndarray, grid: TimeGrid, t: np.ndarray) -> np.ndarray:
    """Trigonometric interpolation in t of samples (nt, ...) at arbitrary points."""
    nt = grid.size
    spec = np.fft.fft(samples, axis=0) / nt
    freqs = np.fft.fftfreq(nt, d=1.0 / nt)
    L = nt * grid.h
    t0 = grid.t[0]
    E = np.exp(1j * TWO_PI / L * np.multiply.outer(np.asarray(t) - t0, freqs))
    return np.tensordot(E, spec, axes=(E.ndim - 1, 0))


def _at_time(f: CrossedElement, c: int, t: float) -> np.ndarray:
    """Samples of component c at time t, shape (nb, m, m)."""
    i = f.grid.index(t)
    if i is None:
        return _t_interp(f.data[c], f.grid, np.array([t]))[0]
    if i < 0:
        return np.zeros(f.data[c].shape[1:], dtype=complex)
    return f.data[c][i]


def _periodic(f: CrossedElement, component: int) -> PeriodicComponent:
    comp = f.model.components[component]
    if not isinstance(comp, PeriodicComponent):
        raise ModelError(f"component {component} is not periodic")
    return comp


def _winding_range(f: CrossedElement, period: float) -> range:
    n = int(math.floor(f.grid.T / period))
    return range(-n, n + 1)


def resample_b(samples: np.ndarray, nb_out: int) -> np.ndarray:
    """Band-limited resampling along the b axis (axis 1)."""
    nb = samples.shape[1]
    if nb_out == nb:
        return samples
    if nb_out < nb:
        raise ValueError("resampling can only refine the b-grid")
    spec = np.fft.fft(samples, axis=1)
    out = np.zeros((samples.shape[0], nb_out) + samples.shape[2:], dtype=complex)
    half = nb // 2
    out[:, :half] = spec[:, :half]
    out[:, nb_out - (nb - half) :] = spec[:, half:]
    if nb % 2 == 0:
        # split the Nyquist coefficient between +-nb/2
        out[:, half] = spec[:, half] / 2
        out[:, nb_out - half] = spec[:, half] / 2
    return np.fft.ifft(out, axis=1) * (nb_out / nb)


def rep_kernel(f: CrossedElement, component: int = 0, twist: float = 0.0, nb_out: int | None = None) -> np.ndarray:
    """k_f(b, b') = sum_n exp(i n twist) f(b, n p + b' - b) on a b-grid, shape (nb, nb, m, m).

    ``twist`` is the holonomy phase of a leaf mode (0 for the untwisted
    representation).  ``nb_out`` refines the b-grid so that kernel
    compositions (with db' = p / nb) resolve the t-profile.
    """
    comp = _periodic(f, component)
    p = comp.period
    data = f.data[component] if nb_out is None else resample_b(f.data[component], nb_out)
    nb = data.shape[1]
    b = np.arange(nb) * (p / nb)
    diff = b[None, :] - b[:, None]
    m = f.msize
    K = np.zeros((nb, nb, m, m), dtype=complex)
    nt = f.grid.size
    spec = np.fft.fft(data, axis=0) / nt
    freqs = np.fft.fftfreq(nt, d=1.0 / nt)
    L = nt * f.grid.h
    for n in _winding_range(f, p):
        tt = n * p + diff
        for i in range(nb):
            cols = np.flatnonzero(np.abs(tt[i]) < f.grid.T)
            if cols.size == 0:
                continue
            E = np.exp(1j * TWO_PI / L * np.multiply.outer(tt[i, cols] - f.grid.t[0], freqs))
            K[i, cols] += np.exp(1j * n * twist) * np.tensordot(E, spec[:, i], axes=(1, 0))
    return K


def kernel_compose(K1: np.ndarray, K2: np.ndarray, period: float) -> np.ndarray:
    nb = K1.shape[0]
    return np.einsum("ikab,kjbc->ijac", K1, K2) * (period / nb)


def kernel_trace(K: np.ndarray, period: float) -> complex:
    nb = K.shape[0]
    return complex(np.einsum("iiaa->", K) * (period / nb))


def _b_integral(samples: np.ndarray, period: float | None) -> complex:
    """int tr f(b) db over the component (counting measure at a fixed point)."""
    tr = np.einsum("naa->n", samples)
    if period is None:
        return complex(tr[0])
    return complex(np.mean(tr) * period)


def trace_op(f: CrossedElement, twist: float = 0.0, windings: Sequence[int] | None = None) -> complex:
    """Tr(f) = sum_components sum_n exp(i n twist) int tr f(b, n p) db.

    ``windings`` restricts the n-sum (n = 0 alone gives the unit-localized
    trace).
    """
    if f.model.fixed:
        raise ModelError("model has a fixed-point component; use trace_extended")
    total = 0.0 + 0.0j
    for c in f.model.periodic:
        p = f.model.components[c].period
        for n in _winding_range(f, p):
            if windings is not None and n not in windings:
                continue
            total += np.exp(1j * n * twist) * _b_integral(_at_time(f, c, n * p), p)
    return total


def fixed_point_weight(kappa: float, t: np.ndarray) -> np.ndarray:
    """1 / |1 - exp(kappa t)| for t > 0."""
    if kappa == 0:
        raise ModelError("kappa must be nonzero")
    return 1.0 / np.abs(-np.expm1(kappa * t))


def _fixed_integral(f: CrossedElement, c: int, weight: Callable[[np.ndarray], np.ndarray]) -> complex:
    grid = f.grid
    pos = slice(grid.center + 1, grid.size)
    t = grid.t[pos]
    tr = np.einsum("tnaa->t", f.data[c][pos])
    return complex(np.sum(weight(t) * tr) * grid.h)


def trace_extended(f: CrossedElement, twist: float = 0.0) -> complex:
    """Extended trace on positive-time elements.

    Periodic components contribute sum_{n >= 1} exp(i n twist) int f(b, n p) db,
    fixed points int_0^inf tr f(v, t) / |1 - exp(kappa t)| dt.
    """
    if not f.positive:
        raise SupportError("trace_extended needs a positive-time element")
    total = 0.0 + 0.0j
    for c in f.model.periodic:
        p = f.model.components[c].period
        for n in _winding_range(f, p):
            if n >= 1:
                total += np.exp(1j * n * twist) * _b_integral(_at_time(f, c, n * p), p)
    for c in f.model.fixed:
        kappa = f.model.components[c].kappa
        total += _fixed_integral(f, c, lambda t: fixed_point_weight(kappa, t))
    return total


def trace_units(f: CrossedElement, component: int | None = None) -> complex:
    """Tr_0(f) = int tr f(b, 0) db (summed over components unless one is given)."""
    comps = range(len(f.model.components)) if component is None else [component]
    total = 0.0 + 0.0j
    for c in comps:
        comp = f.model.components[c]
        period = comp.period if isinstance(comp, PeriodicComponent) else None
        total += _b_integral(f.data[c][f.grid.center], period)
    return total


def theta_trace(orbit: OrbitData, e: CrossedElement, n_max: int | None = None, per_n: bool = False):
    """sum_{n != 0} tr_s(j^n) / |1 - h'^n| int_Pi tr e(v, n p_Pi) dv.

    The orbit integral is taken over the transversal, traversed ``windings``
    times.  With ``per_n`` the individual contributions are returned too.
    """
    if orbit.kind != "periodic":
        raise ModelError("theta_trace needs a periodic orbit")
    comp = e.model.components[orbit.component]
    n_max = int(math.floor(e.grid.T / orbit.period)) if n_max is None else n_max
    terms = {}
    for n in range(-n_max, n_max + 1):
        if n == 0 or abs(n * orbit.period) >= e.grid.T:
            continue
        hn = orbit.hprime**n
        if abs(1.0 - hn) < 1e-12:
            raise ModelError(f"degenerate orbit: h'^{n} = 1")
        jn = np.linalg.matrix_power(orbit.j, n) if n > 0 else np.linalg.matrix_power(np.linalg.inv(orbit.j), -n)
        integral = orbit.windings * _b_integral(_at_time(e, orbit.component, n * orbit.period), comp.period)
        terms[n] = orbit.supertrace(jn) / abs(1.0 - hn) * integral
    total = complex(sum(terms.values()))
    return (total, terms) if per_n else total


def w_trace(fp: OrbitData, e: CrossedElement) -> complex:
    """int_0^inf tr_s(exp(j t)) / |1 - exp(kappa t)| tr e(v, t) dt."""
    if fp.kind != "fixed_point":
        raise ModelError("w_trace needs a fixed point")
    if not e.positive:
        raise SupportError("w_trace needs a positive-time element")
    if fp.kappa == 0:
        raise ModelError("kappa must be nonzero")

    def weight(t):
        st = np.array([fp.supertrace(expm(fp.j * ti)) for ti in t])
        return st * fixed_point_weight(fp.kappa, t)

    return _fixed_integral(e, fp.component, weight)


# --------------------------------------------------------------------------
# idempotents


def partition_profile(period: float, delta: float) -> Callable[[np.ndarray], np.ndarray]:
    """Smooth g with g = 1 on |t| <= p/2 - delta, g = 0 beyond p/2 + delta and sum_n g(t + n p) = 1."""
    if not 0 < delta < period / 2:
        raise ValueError("delta must lie in (0, p/2)")

    def bump(x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)

    def g(t):
        x = (period / 2 + delta - np.abs(np.asarray(t, dtype=float))) / (2 * delta)
        x = np.clip(x, 0.0, 1.0)
        a, b = bump(x), bump(1.0 - x)
        return a / (a + b)

    return g


def concentrated_phi(period: float, sharpness: float = 12.0, center: float = 0.0) -> TrigPoly:
    """L^2-normalized exp(s (cos x - 1)) in x = 2 pi b / p, as a TrigPoly."""
    f = TrigPoly.from_function(lambda x: np.exp(sharpness * (np.cos(x - center) - 1.0)), tol=1e-14)
    mass = float(np.real((f * f.conj()).mean())) * period
    return f * (1.0 / math.sqrt(mass))


def rank_one_projection(
    model: FoliatedModel,
    phi: TrigPoly,
    g: Callable[[np.ndarray], np.ndarray],
    grid: TimeGrid,
    nb: int = 256,
    component: int = 0,
    idem_tol: float = 1e-6,
    kernel_tol: float = 1e-8,
    check: bool = True,
) -> CrossedElement:
    """e(b, t) = phi(b) g(t) conj(phi)(b + t) on one periodic component.

    Its kernel is |phi><phi| whenever ||phi|| = 1 and g is a partition of
    unity over period translates.  The element itself is idempotent under
    convolution only when phi is concentrated on an arc shorter than the
    plateau of g allows; this is checked and reported.
    """
    comp = model.components[component]
    if not isinstance(comp, PeriodicComponent):
        raise ModelError("rank_one_projection needs a periodic component")
    p = comp.period
    xb = TWO_PI * np.arange(nb) / nb
    mass = float(np.real(np.mean(np.abs(phi(xb)) ** 2))) * p
    if abs(mass - 1.0) > 1e-10:
        raise NormalizationError(f"||phi||^2 = {mass:.12g}, expected 1")
    s = np.linspace(0.0, p, 257)
    ns = np.arange(-int(grid.T / p) - 2, int(grid.T / p) + 3)
    pou = np.sum(g(s[:, None] + ns[None, :] * p), axis=1)
    if np.max(np.abs(pou - 1.0)) > 1e-10:
        raise NormalizationError(f"profile is not a partition of unity (deviation {np.max(np.abs(pou - 1)):.2e})")

    def fn(b, t):
        x = TWO_PI * b / p
        xt = TWO_PI * (b + t) / p
        return phi(x) * g(t) * np.conj(phi(xt))

    funcs = [fn if c == component else None for c in range(len(model.components))]
    e = CrossedElement.from_function(model, grid, funcs, nb=nb)
    if check:
        K = rep_kernel(e, component)[:, :, 0, 0]
        ph = phi(xb)
        dev = float(np.max(np.abs(K - np.outer(ph, np.conj(ph)))))
        if dev > kernel_tol:
            raise NotIdempotentError(f"kernel differs from |phi><phi| by {dev:.2e}")
        defect = (convolve(e, e) - e).sup_norm()
        if defect > idem_tol:
            raise NotIdempotentError(f"convolve(e, e) - e has size {defect:.2e}")
    return e


def nilpotent_class(base: CrossedElement) -> tuple[CrossedElement, CrossedElement]:
    """(e, e0) with e0 = diag(1, 0) times the unit and e = e0 + base E_12.

    e is exactly idempotent and e - e0 has traceless matrix part, so every
    trace pairs trivially with [e] - [e0].
    """
    if base.msize != 1:
        raise ValueError("base element must be scalar")
    m = 2
    E12 = np.array([[0, 1], [0, 0]], dtype=complex)
    data = tuple(np.einsum("tn,ab->tnab", a[:, :, 0, 0], E12) for a in base.data)
    e0u = np.diag([1.0, 0.0]).astype(complex)
    e = CrossedElement(base.model, base.grid, data, base.positive, e0u)
    zero = tuple(np.zeros_like(a) for a in data)
    e0 = CrossedElement(base.model, base.grid, zero, base.positive, e0u)
    return e, e0


@dataclass
class SuspensionSymbol:
    """u = (1 - e) + e beta and u^{-1} = (1 - e) + e beta^{-1} as Laurent coefficients in beta."""

    u: dict
    u_inv: dict

    def defect(self) -> float:
        """sup-norm of u u^{-1} - 1, coefficient by coefficient."""
        prod: dict[int, CrossedElement] = {}
        for a, x in self.u.items():
            for b, y in self.u_inv.items():
                term = convolve(x, y)
                prod[a + b] = term if a + b not in prod else prod[a + b] + term
        worst = 0.0
        for k, x in prod.items():
            if k == 0:
                ident = np.eye(x.msize)
                worst = max(worst, (x - _unit_element(x, ident)).sup_norm())
            else:
                worst = max(worst, x.sup_norm())
        return worst


def _unit_element(like: CrossedElement, matrix: np.ndarray) -> CrossedElement:
    return CrossedElement(like.model, like.grid, tuple(np.zeros_like(a) for a in like.data), like.positive, matrix)


def suspension_symbol(e: CrossedElement, tol: float = 1e-8) -> SuspensionSymbol:
    """u = 1 + e (beta - 1) with inverse 1 + e (beta^{-1} - 1)."""
    defect = (convolve(e, e) - e).sup_norm()
    if defect > tol:
        raise NotIdempotentError(f"e is not idempotent (defect {defect:.2e})")
    one = _unit_element(e, np.eye(e.msize))
    rest = one - e
    u = {0: rest, 1: e}
    u_inv = {0: rest, -1: e}
    return SuspensionSymbol(u, u_inv)


# --------------------------------------------------------------------------
# Morita transport to a q-fold covering


@dataclass(frozen=True)
class MoritaElement:
    """Element over the pullback of B_p to the q-fold covering circle M of length q p.

    ``data`` has shape (q, nt, nbM, m, m): F(x, t, a) is the arrow from x to
    y = x + t + a p in M.
    """

    base: CrossedElement
    component: int
    q: int
    data: np.ndarray

    @property
    def period(self) -> float:
        return self.base.model.components[self.component].period

    def __sub__(self, other: "MoritaElement") -> "MoritaElement":
        return replace(self, data=self.data - other.data)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.data)))


def morita_cutoff(q: int, period: float, w: Callable[[np.ndarray], np.ndarray]) -> Callable[[np.ndarray], np.ndarray]:
    """c = sqrt(w / sum_a w(. + a p)) for a positive weight w on M = R / q p Z."""

    def c(x):
        x = np.asarray(x, dtype=float)
        tot = sum(w(x + a * period) for a in range(q))
        return np.sqrt(w(x) / tot)

    return c


def rho_morita(e: CrossedElement, c: Callable[[np.ndarray], np.ndarray], q: int, component: int = 0, tol: float = 1e-10) -> MoritaElement:
    """rho(f)(x, t, y) = c(x) f(r(x), t) c(y) with y = x + t + a p and r(x) = x mod p."""
    comp = _periodic(e, component)
    p = comp.period
    if e.unit is not None:
        raise SupportError("rho_morita acts on the non-unital part only")
    nb = e.data[component].shape[1]
    nM = q * nb
    x = np.arange(nM) * (p / nb)
    xs = np.linspace(0.0, p, 101)
    norm = sum(np.asarray(c(xs + a * p)) ** 2 for a in range(q))
    if np.max(np.abs(norm - 1.0)) > tol:
        raise NormalizationError(f"sum of c^2 over the fibre deviates from 1 by {np.max(np.abs(norm - 1)):.2e}")
    t = e.grid.t
    base = e.data[component]  # (nt, nb, m, m)
    lifted = np.tile(base, (1, q, 1, 1))  # f(x mod p, t) on the M-grid
    cx = np.asarray(c(x))
    data = np.empty((q,) + lifted.shape, dtype=complex)
    for a in range(q):
        cy = np.asarray(c(x[None, :] + t[:, None] + a * p))
        data[a] = lifted * (cx[None, :] * cy)[:, :, None, None]
    return MoritaElement(e, component, q, data)


def morita_convolve(F: MoritaElement, G: MoritaElement) -> MoritaElement:
    """(F G)(x, t, a) = sum_{a1} int F(x, t', a1) G(x + t' + a1 p, t - t', a - a1) dt'."""
    q, p = F.q, F.period
    grid = F.base.grid
    L = q * p
    out = np.zeros_like(F.data)
    for a1 in range(q):
        shifted = _shift_samples_grid(G.data, a1 * p, L)
        for a in range(q):
            out[a] += _convolve_arrays(F.data[a1], shifted[(a - a1) % q], grid, L)
    return replace(F, data=out)


def _shift_samples_grid(data: np.ndarray, s: float, period: float) -> np.ndarray:
    nb = data.shape[2]
    spec = np.fft.fft(data, axis=2)
    qf = np.fft.fftfreq(nb, d=1.0 / nb)
    phase = np.exp(1j * TWO_PI / period * qf * s)
    return np.fft.ifft(spec * phase[None, None, :, None, None], axis=2)


def morita_trace(F: MoritaElement, twist: float = 0.0, windings: Sequence[int] | None = None) -> complex:
    """sum_n exp(i n twist) int_M tr F(x, n p, a = -n mod q) dx."""
    p = F.period
    grid = F.base.grid
    total = 0.0 + 0.0j
    nM = F.data.shape[2]
    for n in _winding_range(F.base, p):
        if windings is not None and n not in windings:
            continue
        i = grid.index(n * p)
        if i is None or i < 0:
            continue
        tr = np.einsum("naa->n", F.data[(-n) % F.q, i])
        total += np.exp(1j * n * twist) * np.mean(tr) * (F.q * p)
    return complex(total)


# --------------------------------------------------------------------------
# index pairing


def leaf_dirac(shift: float = 0.5) -> Callable[[int], complex]:
    """Leaf mode m -> m + shift, the rotation-invariant -i d/dtheta + shift."""
    return lambda m: complex(m + shift)


@dataclass
class PairingReport:
    value: float
    selector: str
    mode_residues: dict
    mode_traces: dict
    breakdown: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def c(z):
            z = complex(z)
            return [z.real, z.imag]

        return {
            "value": self.value,
            "selector": self.selector,
            "mode_residues": {str(k): c(v) for k, v in sorted(self.mode_residues.items())},
            "mode_traces": {str(k): c(v) for k, v in sorted(self.mode_traces.items())},
            "breakdown": {k: c(v) for k, v in sorted(self.breakdown.items())},
        }


@functools.lru_cache(maxsize=256)
def suspension_residue(d: complex, Nx: int = 128, cfg: ContinuationConfig | None = None) -> float:
    """Res_{z=0} Tr(T^{-1}[ln|Q|, T] |Q|^{-z}) for T = P beta P + 1 - P.

    Q is the suspension of the scalar fibre operator d on the circle; the
    result equals the index of d (zero when d is invertible).
    """
    S = suspension_operator(FourierOperator(0, np.array([[d]], dtype=complex), 1, "rect"), Nx)
    b = S.block_size
    shift = np.eye(2 * Nx + 1, k=-1)
    beta = FourierOperator(Nx, np.kron(shift, np.eye(b)), 0, "suspension")
    T = toeplitz(S.P, beta)
    Sinv = toeplitz(S.P, beta.adjoint())
    X = Sinv.matrix @ log_commutator_operator(S.abs_q, T.matrix)
    diag = S.abs_q.diagonal_of(X)
    # both eigenvectors of a k_x block share |Q| = sqrt(k^2 + |d|^2); sum them
    labels = np.repeat(S.kx, b)[S.abs_q.index]
    agg = np.zeros(S.kx.size, dtype=complex)
    np.add.at(agg, labels + Nx, diag)
    mu2 = abs(d) ** 2
    Q = EigenData.from_diagonal(np.sqrt(mu2 + S.kx.astype(float) ** 2), S.kx, QModel(1.0, 1.0, mu2))
    cfg = cfg or ContinuationConfig(edge=4)
    ld = continue_diagonal(Q.diagonal_of(np.diag(agg)), Q, 0.0, cfg, order=-1)
    return float(np.real(ld.residue))


def _mode_twist(model: FoliatedModel, c: int) -> Callable[[int], float]:
    comp = model.components[c]
    if isinstance(comp, PeriodicComponent):
        if comp.rotation is None:
            raise ModelError("index_pairing needs rotation return maps (rotation-invariant leaf operator)")
        return lambda m: m * comp.rotation
    return lambda m: 0.0


def _selected_trace(x, model: FoliatedModel, selector: str, twist_of: dict, m: int) -> complex:
    """Localized trace of a compactly supported element x for leaf mode m."""
    if isinstance(x, MoritaElement):
        tw = twist_of[x.component](m)
        if selector == "units":
            return morita_trace(x, tw, windings=[0])
        if selector == "periodic":
            return morita_trace(x, tw) - morita_trace(x, tw, windings=[0])
        if selector == "fixed":
            return 0.0
        return morita_trace(x, tw)
    total = 0.0 + 0.0j
    for c in model.periodic:
        p = model.components[c].period
        tw = twist_of[c](m)
        for n in _winding_range(x, p):
            if selector == "units" and n != 0:
                continue
            if selector == "periodic" and n == 0:
                continue
            if selector == "fixed":
                continue
            if x.positive and n <= 0:
                continue
            total += np.exp(1j * n * tw) * _b_integral(_at_time(x, c, n * p), p)
    if selector in ("full", "fixed"):
        for c in model.fixed:
            if not x.positive:
                if np.any(x.data[c]):
                    raise SupportError("fixed-point components need positive-time elements")
                continue
            kappa = model.components[c].kappa
            total += _fixed_integral(x, c, lambda t: fixed_point_weight(kappa, t))
    return total


def index_pairing(
    model: FoliatedModel,
    e,
    D_plus: Callable[[int], complex] | None = None,
    N: int = 128,
    selector: str = "full",
    e0=None,
    cfg: ContinuationConfig | None = None,
    report: bool = False,
):
    """Pairing of the localized trace with Ind(D, [e] - [e0]) through residues.

    For rotation return maps the leaf operator commutes with the algebra,
    so T^{-1}[ln|Q|, T] = (e - e0) x C_m exactly on leaf mode m, where C_m
    is the suspension commutator term.  The pairing is therefore
    sum_m tau_m(e - e0) r_m with r_m the spectral residue of mode m and
    tau_m the selected trace twisted by the holonomy of mode m.

    Selectors: full, units, periodic, fixed.  full = units + periodic
    (+ fixed for positive-time elements).
    """
    if selector not in ("full", "units", "periodic", "fixed"):
        raise ValueError(f"unknown selector {selector!r}")
    D_plus = D_plus or leaf_dirac()
    twist_of = {c: _mode_twist(model, c) for c in range(len(model.components))}
    if isinstance(e, MoritaElement):
        x = e if e0 is None else e - e0
    else:
        x = e if e0 is None else e - e0
        if x.unit is not None and np.max(np.abs(x.unit)) > 0:
            raise SupportError("e - e0 must be compactly supported (equal unit parts)")
    residues, traces = {}, {}
    total = 0.0 + 0.0j
    for m in range(-model.leaf_modes, model.leaf_modes + 1):
        tr = _selected_trace(x, model, selector, twist_of, m)
        traces[m] = tr
        if abs(tr) == 0:
            residues[m] = 0.0
            continue
        residues[m] = suspension_residue(complex(D_plus(m)), N, cfg)
        total += tr * residues[m]
    value = float(np.real(total))
    if report:
        return PairingReport(value, selector, residues, traces)
    return value


def index_rhs(model: FoliatedModel, e: CrossedElement, n_max: int | None = None, D_plus=None, N: int = 128, e0=None, breakdown: bool = False):
    """units pairing (absent for positive-time elements) + sum Theta + sum W."""
    x = e if e0 is None else e - e0
    parts: dict[str, complex] = {}
    if not e.positive:
        parts["units"] = index_pairing(model, e, D_plus, N, "units", e0)
    for k, orb in enumerate(model.orbits(n_max)):
        if orb.kind == "periodic":
            parts[f"theta[{k}]"] = theta_trace(orb, x, n_max)
        elif e.positive:
            parts[f"w[{k}]"] = w_trace(orb, x)
    total = float(np.real(sum(parts.values()))) if parts else 0.0
    return (total, parts) if breakdown else total


def check_nondegenerate(model: FoliatedModel, n_max: int | None = None) -> dict:
    """Margins |1 - (h^n)'| at leafwise fixed points and |kappa| at flow fixed points."""
    n_max = model.n_max if n_max is None else n_max
    entries = []
    ok = True
    for i in model.periodic:
        comp = model.components[i]
        hn = comp.return_map
        for n in range(1, n_max + 1):
            if n > 1:
                hn = comp.return_map.compose(hn)
            try:
                fps = fixed_points(hn)
            except ContinuumOfFixedPointsError:
                entries.append({"component": i, "n": n, "point": None, "margin": 0.0})
                ok = False
                continue
            for y, dh in fps:
                margin = abs(1.0 - dh)
                entries.append({"component": i, "n": n, "point": float(y), "margin": float(margin)})
                if margin < 1e-10:
                    ok = False
    for i in model.fixed:
        kappa = model.components[i].kappa
        entries.append({"component": i, "n": None, "point": None, "margin": float(abs(kappa))})
        if kappa == 0:
            ok = False
    return {"nondegenerate": ok, "entries": entries}
