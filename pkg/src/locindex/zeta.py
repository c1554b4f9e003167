"""Zeta traces, their meromorphic continuation, and local residue formulas.

Two continuation estimators are implemented:

* tail fit: the diagonal d_k = <phi_k | A U | phi_k> is fit on a window of
  large |k| against powers lambda^alpha (per sheet); each fitted tail sum is
  continued in closed form (Euler-Maclaurin against the exact integral), the
  data up to the truncation are summed directly, and Laurent coefficients
  are read off a circular contour around z0;
* heat log-fit: H(s) = sum_k d_k exp(-s lambda_k) is fit on a geometric
  s-grid to sum_j b_j s^-j + r ln(1/s) + c + sum_i (e_i s^i + f_i s^i ln s),
  and the Mellin transform turns r, c, b_j into residues and finite parts.

Torus operators of the form Op(sigma) (I x U_psi) use the same tail fit row
by row, followed by an oscillatory fit in the second mode index whose tail is
continued with Lerch transcendents.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import mpmath
import numpy as np
from scipy.special import bernoulli, gamma

from .errors import (
    EstimatorDisagreementError,
    FitResidualError,
    IllConditionedError,
    LocIndexError,
    PoleOrderError,
)
from .harmonics import TWO_PI, CircleDiffeo, TrigPoly, critical_values, fixed_points, grid, project_samples
from .operators import (
    EigenData,
    FourierOperator,
    QModel,
    chi_default,
    invert,
    modes,
    winding_number,
)
from .symbols import ClassicalSymbol, ProductSymbol2D

log = logging.getLogger(__name__)

EULER_GAMMA = 0.5772156649015329


@dataclass(frozen=True)
class ContinuationConfig:
    """Numerical settings shared by both estimators.

    K: last mode of the head; the fit window is K < |k| <= N - edge.
    J: number of tail-fit exponents.
    top: leading exponent of the diagonal in lambda (None: taken from the
        declared order of A U).
    frequencies: oscillation frequencies for the second torus index.
    """

    K: int = 16
    J: int = 8
    top: int | None = None
    edge: int = 0
    frequencies: tuple[float, ...] = ()
    contour_radius: float = 0.25
    contour_points: int = 32
    heat_smin: float | None = None
    heat_smax: float = 0.7
    heat_points: int = 60
    heat_log_pairs: int = 7
    agree_tol: float = 1e-3
    fit_tol: float = 1e-6
    pole2_tol: float = 1e-6
    primary: str = "tail"
    estimators: tuple[str, ...] = ("tail", "heat")
    # torus second-index settings
    K_l: int = 24
    J_l: int = 6
    edge_l: int = 0

    def __post_init__(self):
        if self.J < 3:
            raise ValueError("J must be at least 3")
        if self.K < 1:
            raise ValueError("K must be positive")
        if self.primary not in ("tail", "heat"):
            raise ValueError("primary must be 'tail' or 'heat'")


@dataclass
class LaurentData:
    """Laurent data of a zeta function at z0.

    ``higher`` holds a_1, a_2, ...; ``estimates`` maps estimator names to
    their (residue, finite part) pairs and ``spread`` is the largest residue
    difference between estimators.
    """

    z0: complex
    residue: complex
    finite_part: complex | None
    higher: list = field(default_factory=list)
    a_minus2: float = 0.0
    residual: float = 0.0
    spread: float = 0.0
    estimates: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def c(z):
            if z is None:
                return None
            z = complex(z)
            return [z.real, z.imag]

        return {
            "z0": c(self.z0),
            "residue": c(self.residue),
            "finite_part": c(self.finite_part),
            "higher": [c(h) for h in self.higher],
            "a_minus2": float(self.a_minus2),
            "spread": float(self.spread),
            "residual": float(self.residual),
            "estimates": {k: [c(v[0]), c(v[1])] for k, v in sorted(self.estimates.items())},
        }


# --------------------------------------------------------------------------
# closed-form tail sums


def _binom_series_power(beta: np.ndarray, u1: float, u2: float, n: int) -> np.ndarray:
    """Coefficients of (1 + u1 h + u2 h^2)^beta up to h^n, one row per beta."""
    c = np.zeros((n + 1,) + beta.shape, dtype=complex)
    c[0] = 1.0
    u = (0.0, u1, u2)
    for k in range(1, n + 1):
        acc = np.zeros(beta.shape, dtype=complex)
        for j in (1, 2):
            if j <= k:
                acc = acc + (beta * j - (k - j)) * u[j] * c[k - j]
        c[k] = acc / k
    return c


_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)


def tail_sum(s, mu2: float, a: int, p: int = 8) -> np.ndarray:
    """Continuation of sum_{k >= a} (mu2 + k^2)^{s/2} to complex s.

    Euler-Maclaurin with p Bernoulli corrections; the integral from 0 to
    infinity is taken in closed form and the piece from 0 to a by composite
    Gauss-Legendre quadrature.  Accurate to roundoff for a >= 8.
    """
    s = np.atleast_1d(np.asarray(s, dtype=complex))
    mu = math.sqrt(mu2)
    full = mu ** (s + 1) * (math.sqrt(math.pi) / 2) * gamma(-(s + 1) / 2) / gamma(-s / 2)
    width = min(1.0, mu / 2)
    npan = max(1, int(math.ceil(a / width)))
    edges = np.linspace(0.0, float(a), npan + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1:] - edges[:-1])
    xs = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    ws = (half[:, None] * _GL_W[None, :]).ravel()
    base = mu2 + xs * xs
    partial = np.exp(np.multiply.outer(s / 2, np.log(base))) @ ws
    A = mu2 + a * a
    coeffs = _binom_series_power(s / 2, 2 * a / A, 1 / A, 2 * p)
    fa = A ** (s / 2)
    em = fa / 2
    B = bernoulli(2 * p)
    for j in range(1, p + 1):
        deriv = fa * coeffs[2 * j - 1] * math.factorial(2 * j - 1)
        em = em - B[2 * j] / math.factorial(2 * j) * deriv
    return full - partial + em


def lerch_tail(omega: float, s, a: int) -> np.ndarray:
    """sum_{l >= a} exp(i l omega) l^{-s} for complex s (omega not in 2 pi Z)."""
    s = np.atleast_1d(np.asarray(s, dtype=complex))
    zq = mpmath.exp(1j * omega)
    pref = complex(mpmath.exp(1j * a * omega))
    out = np.empty(s.shape, dtype=complex)
    for i, si in enumerate(s):
        out[i] = pref * complex(mpmath.lerchphi(zq, complex(si), a))
    return out


def oscillatory_tail_sum(s, mu2: float, a: int, omega: float, terms: int = 12) -> np.ndarray:
    """sum_{k >= a} exp(i k omega) (mu2 + k^2)^{s/2} via a binomial expansion (a > sqrt(mu2))."""
    s = np.atleast_1d(np.asarray(s, dtype=complex))
    if a * a <= mu2:
        raise ValueError("oscillatory tail needs a^2 > mu2")
    out = np.zeros(s.shape, dtype=complex)
    coef = np.ones(s.shape, dtype=complex)
    for n in range(terms):
        out = out + coef * mu2**n * lerch_tail(omega, -(s - 2 * n), a)
        coef = coef * (s / 2 - n) / (n + 1)
    return out


# --------------------------------------------------------------------------
# diagonal data


def diagonal(A: FourierOperator | None, U: FourierOperator | None, Q: EigenData) -> np.ndarray:
    """<phi_i | A U | phi_i> in the eigenbasis of Q (eigenvalue order)."""
    if A is None and U is None:
        return np.ones(Q.dim, dtype=complex)
    if U is None:
        M = A.matrix
    elif A is None:
        M = U.matrix
    else:
        if A.matrix.shape != U.matrix.shape:
            raise ValueError("dimension mismatch between A and U")
        M = A.matrix @ U.matrix
    if M.shape != (Q.dim, Q.dim):
        raise ValueError("dimension mismatch between operator and Q")
    return np.asarray(Q.diagonal_of(M), dtype=complex)


def zeta_trace(A: FourierOperator | None, U: FourierOperator | None, Q: EigenData, z: complex) -> complex:
    """Tr(A U Q^{-z}) summed in eigenvalue order."""
    d = diagonal(A, U, Q)
    return complex(np.sum(d * np.exp(-z * np.log(Q.values))))


def _contour(z0: complex, cfg: ContinuationConfig) -> np.ndarray:
    th = TWO_PI * (np.arange(cfg.contour_points) + 0.5) / cfg.contour_points
    return z0 + cfg.contour_radius * np.exp(1j * th)


def _laurent_from_contour(values: np.ndarray, z0: complex, cfg: ContinuationConfig, n_high: int = 3):
    w = _contour(z0, cfg) - z0
    a = {n: complex(np.mean(values * w ** (-n))) for n in range(-2, n_high + 1)}
    return a


def _lstsq(A: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float]:
    sc = np.max(np.abs(A), axis=0)
    sc[sc == 0] = 1.0
    c = np.linalg.lstsq(A / sc, y, rcond=None)[0] / sc
    norm = np.linalg.norm(y)
    res = float(np.linalg.norm(A @ c - y) / norm) if norm > 0 else 0.0
    return c, res


def _top_exponent(cfg: ContinuationConfig, order) -> int:
    if cfg.top is not None:
        return int(cfg.top)
    if isinstance(order, (int, np.integer)):
        return int(order)
    return -2


def _tail_estimate(d: np.ndarray, Q: EigenData, z0: complex, cfg: ContinuationConfig, top: int):
    """Head sum of all data plus continued fitted tails beyond the window."""
    model = Q.model
    if not isinstance(model, QModel) or Q.modes is None or np.ndim(Q.modes) != 1:
        raise LocIndexError("tail fit needs a mode-labelled diagonal Q with a closed-form model")
    k = np.asarray(Q.modes)
    lam = Q.values
    N = int(np.max(np.abs(k)))
    last = N - cfg.edge
    if last <= cfg.K + cfg.J:
        raise LocIndexError("fit window too short")
    zs = _contour(z0, cfg)
    keep = np.abs(k) <= last
    head = np.exp(-np.multiply.outer(zs, np.log(lam[keep]))) @ d[keep]
    alphas = [top - j for j in range(cfg.J)]
    total = head.copy()
    worst = 0.0
    coeffs = {}
    for sign, c_sheet in ((1, model.c_plus), (-1, model.c_minus)):
        win = (sign * k > cfg.K) & (sign * k <= last)
        if not np.any(d[win]):
            coeffs[sign] = np.zeros(len(alphas))
            continue
        basis = np.array([lam[win] ** al for al in alphas]).T
        terms = list(alphas)
        cols = [basis]
        for om in cfg.frequencies:
            cols.append(basis * np.exp(1j * sign * k[win] * om)[:, None])
        Amat = np.hstack(cols)
        c, res = _lstsq(Amat, d[win])
        worst = max(worst, res)
        coeffs[sign] = c[: len(alphas)]
        for i, al in enumerate(alphas):
            total += c[i] * c_sheet ** (al - zs) * tail_sum(al - zs, model.mu2, last + 1)
        for f, om in enumerate(cfg.frequencies, start=1):
            for i, al in enumerate(alphas):
                ci = c[f * len(alphas) + i]
                if ci != 0:
                    total += ci * c_sheet ** (al - zs) * oscillatory_tail_sum(al - zs, model.mu2, last + 1, sign * om)
    a = _laurent_from_contour(total, z0, cfg)
    return a, worst, coeffs


def _heat_estimate(d: np.ndarray, lam: np.ndarray, z0: complex, cfg: ContinuationConfig, top: int, head=None, lam_edge: float | None = None):
    """Residue and finite part from the small-s expansion of the heat trace.

    Entries flagged by ``head`` are summed exactly; they only add an entire
    function and would spoil the asymptotic fit.
    """
    head = np.zeros(lam.size, dtype=bool) if head is None else head
    head_value = complex(np.sum(d[head] * lam[head] ** (-complex(z0))))
    d, lam = d[~head], lam[~head]
    lam_edge = float(np.max(lam)) if lam_edge is None else lam_edge
    smin = cfg.heat_smin if cfg.heat_smin is not None else 25.0 / lam_edge
    s = np.geomspace(smin, cfg.heat_smax, cfg.heat_points)
    H = np.exp(-np.multiply.outer(s, lam)) @ d
    npos = max(0, top + 1)
    cols = [s ** (-j) for j in range(npos, 0, -1)] + [np.log(1 / s), np.ones_like(s)]
    for i in range(1, cfg.heat_log_pairs + 1):
        cols += [s**i, s**i * np.log(s)]
    A = np.array(cols).T
    c, res = _lstsq(A, H)
    b = {j: c[npos - j] for j in range(1, npos + 1)}
    r = c[npos]
    const = c[npos + 1]
    z0r = complex(z0)
    if abs(z0r) < 1e-12:
        return r, const + EULER_GAMMA * r + head_value, res
    j = int(round(z0r.real))
    if abs(z0r - j) < 1e-12 and j >= 1:
        return b.get(j, 0.0) / math.gamma(j), None, res
    raise LocIndexError("heat estimator supports integer expansion points only")


def _heat_edge(Q: EigenData) -> float:
    """Smallest of the per-sheet top eigenvalues; the heat fit must not see either truncation."""
    lam = np.abs(Q.values)
    if Q.modes is None:
        return float(np.max(lam))
    k = np.asarray(Q.modes)
    tops = [float(np.max(lam[sel])) for sel in (k > 0, k < 0) if np.any(sel)]
    return min(tops) if tops else float(np.max(lam))


def continue_diagonal(d: np.ndarray, Q: EigenData, z0: complex, cfg: ContinuationConfig | None = None, order=None) -> LaurentData:
    """Laurent data at z0 of sum_k d_k lambda_k^{-z}."""
    cfg = cfg or ContinuationConfig()
    d = np.asarray(d, dtype=complex)
    top = _top_exponent(cfg, order)
    estimates = {}
    a = None
    residual = 0.0
    use_tail = "tail" in cfg.estimators and isinstance(Q.model, QModel) and Q.modes is not None
    if use_tail:
        a, residual, _ = _tail_estimate(d, Q, z0, cfg, top)
        estimates["tail"] = (a[-1], a[0])
        if residual > cfg.fit_tol:
            raise FitResidualError(f"tail-fit residual {residual:.2e} above {cfg.fit_tol:.1e}")
        if abs(a[-2]) > cfg.pole2_tol * (1 + abs(a[-1])):
            raise PoleOrderError(f"|a_-2| = {abs(a[-2]):.2e} indicates a higher-order pole")
    # the heat fit is only trusted at the leading pole z0 = top + 1
    leading = abs(complex(z0) - (top + 1)) < 1e-12
    if "heat" in cfg.estimators and (leading or not use_tail):
        try:
            r, fp, hres = _heat_estimate(d, Q.values, z0, cfg, top, lam_edge=_heat_edge(Q))
            estimates["heat"] = (r, fp)
        except LocIndexError:
            if not use_tail:
                raise
    if not estimates:
        raise LocIndexError("no estimator applicable")
    residues = [v[0] for v in estimates.values()]
    spread = float(max(abs(x - y) for x in residues for y in residues))
    ref = estimates.get("tail", estimates.get("heat"))[0]
    if spread > cfg.agree_tol * (1 + abs(ref)):
        raise EstimatorDisagreementError(f"estimators disagree by {spread:.2e}: {estimates}")
    primary = cfg.primary if cfg.primary in estimates else next(iter(estimates))
    residue, fp = estimates[primary]
    if fp is None and "tail" in estimates:
        fp = estimates["tail"][1]
    higher = [a[n] for n in (1, 2, 3)] if a is not None else []
    return LaurentData(
        z0=z0,
        residue=residue,
        finite_part=fp,
        higher=higher,
        a_minus2=float(abs(a[-2])) if a is not None else 0.0,
        residual=residual,
        spread=spread,
        estimates=estimates,
    )


def continue_zeta(
    A: FourierOperator | None,
    U: FourierOperator | None,
    Q: EigenData,
    z0: complex,
    cfg: ContinuationConfig | None = None,
) -> LaurentData:
    """Laurent data at z0 of Tr(A U Q^{-z})."""
    d = diagonal(A, U, Q)
    order = 0
    if A is not None:
        order = A.order
    return continue_diagonal(d, Q, z0, cfg, order)


def wodzicki_local(a: ClassicalSymbol) -> float:
    """(1/2 pi) int (a_{-1}(x, +1) + a_{-1}(x, -1)) dx."""
    plus, minus = a.at_degree(-1)
    val = plus.mean() + minus.mean()
    return complex(val).real if abs(complex(val).imag) < 1e-14 else complex(val)


# --------------------------------------------------------------------------
# torus: Op(sigma) (I x U_psi)


def _theta_eval(coef_row: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Evaluate a theta Fourier series given in FFT ordering."""
    n = coef_row.size
    freqs = np.fft.fftfreq(n, d=1.0 / n)
    if n % 2 == 0:
        # split the Nyquist coefficient symmetrically
        half = coef_row[n // 2] / 2
        vals = np.exp(1j * np.multiply.outer(theta, freqs[: n // 2])) @ coef_row[: n // 2]
        vals += np.exp(1j * np.multiply.outer(theta, freqs[n // 2 + 1 :])) @ coef_row[n // 2 + 1 :]
        vals += half * (np.exp(1j * n / 2 * theta) + np.exp(-1j * n / 2 * theta))
        return vals
    return np.exp(1j * np.multiply.outer(theta, freqs)) @ coef_row


def torus_symbol_values(sigma: ProductSymbol2D, ks: np.ndarray, ls: np.ndarray, chi=None, ymode_tol: float = 1e-14) -> dict[int, np.ndarray]:
    """x-averaged y-Fourier coefficients sigma_hat_m(k, l) with the cutoff applied.

    Returns a map m -> array over the (ks, ls) grid.
    """
    chi = chi or chi_default
    K, L = np.meshgrid(ks.astype(float), ls.astype(float), indexing="ij")
    r = np.hypot(K, L)
    theta = np.arctan2(L, K)
    cut = chi(r)
    safe = np.where(r > 0, r, 1.0)
    coefs = sigma.angular_coefficients()
    ny = sigma.shape[1]
    yfreq = np.fft.fftfreq(ny, d=1.0 / ny).astype(int)
    out: dict[int, np.ndarray] = {}
    for j, c in enumerate(coefs):
        deg = sigma.order - j
        radial = np.where(r > 0, safe**deg, 0.0) * cut
        for iy, m in enumerate(yfreq):
            if np.max(np.abs(c[iy])) <= ymode_tol:
                continue
            vals = _theta_eval(c[iy], theta.ravel()).reshape(theta.shape) * radial
            out[int(m)] = out.get(int(m), 0.0) + vals
    return out


def y_bandwidth(sigma: ProductSymbol2D, tol: float = 1e-14) -> int:
    """Largest y-frequency carried by the x-average of sigma."""
    ny = sigma.shape[1]
    yfreq = np.abs(np.fft.fftfreq(ny, d=1.0 / ny).astype(int))
    band = 0
    for c in sigma.angular_coefficients():
        live = np.max(np.abs(c), axis=1) > tol
        if np.any(live):
            band = max(band, int(yfreq[live].max()))
    return band


def diffeo_entries(psi: CircleDiffeo, rows: np.ndarray, cols: np.ndarray, M: int) -> np.ndarray:
    """U[k, l] = (1/2pi) int exp(i l psi(x) - i k x) dx for the given rows and columns."""
    x = grid(M)
    E = np.exp(1j * np.multiply.outer(psi(x), cols))
    spec = np.fft.fft(E, axis=0) / M
    return spec[np.mod(rows, M), :]


def torus_diagonal(sigma: ProductSymbol2D, psi: CircleDiffeo, N: int, chi=None) -> np.ndarray:
    """Diagonal of Op(sigma)(I x U_psi) on the mode box [-N, N]^2, indexed [k, l].

    Only the x-average of sigma enters the diagonal.  Intermediate modes are
    restricted to the box, as in the truncated matrix product.
    """
    ks = modes(N)
    ls = modes(N)
    vals = torus_symbol_values(sigma, ks, ls, chi)
    M = 8 * N
    U = diffeo_entries(psi, ls, ls, M)
    d = np.zeros((ks.size, ls.size), dtype=complex)
    for m, s_m in vals.items():
        # term sigma_hat_m(k, l - m) U[l - m, l] with l - m inside the box
        for il, l in enumerate(ls):
            lp = l - m
            if abs(lp) > N:
                continue
            d[:, il] += s_m[:, lp + N] * U[lp + N, il]
    return d


def _torus_rows(d: np.ndarray, N: int, zs: np.ndarray, cfg: ContinuationConfig, top: int):
    """Row sums D_l(z) over k (continued) and per-row residues."""
    ks = modes(N)
    ls = modes(N)
    last = N - cfg.edge
    alphas = [top - j for j in range(cfg.J)]
    keep = np.abs(ks) <= last
    D = np.zeros((ls.size, zs.size), dtype=complex)
    rho = np.zeros(ls.size, dtype=complex)
    worst = 0.0
    for il, l in enumerate(ls):
        mu2 = 1.0 + float(l) * float(l)
        lam = np.sqrt(mu2 + ks.astype(float) ** 2)
        row = d[:, il]
        D[il] = np.exp(-np.multiply.outer(zs, np.log(lam[keep]))) @ row[keep]
        for sign in (1, -1):
            win = (sign * ks > cfg.K) & (sign * ks <= last)
            if not np.any(row[win]):
                continue
            basis = np.array([lam[win] ** al for al in alphas]).T
            c, res = _lstsq(basis, row[win])
            worst = max(worst, res)
            for i, al in enumerate(alphas):
                D[il] += c[i] * tail_sum(al - zs, mu2, last + 1)
                if al == -1:
                    rho[il] += c[i]
    return D, rho, worst


def smooth_step(t, inner: float = 0.0):
    """C-infinity step: 1 for t <= inner, 0 for t >= 1."""
    t = np.asarray(t, dtype=float)
    s = np.clip((t - inner) / (1.0 - inner), 0.0, 1.0)
    inside = (s > 0) & (s < 1)
    e1 = np.exp(-1.0 / np.where(inside, s, 1.0))
    e2 = np.exp(-1.0 / np.where(inside, 1.0 - s, 1.0))
    return np.where(s <= 0, 1.0, np.where(s >= 1, 0.0, e2 / (e1 + e2)))


def continue_torus(d: np.ndarray, N: int, z0: complex, cfg: ContinuationConfig, order: int) -> LaurentData:
    """Laurent data at z0 of sum_{k,l} d[k,l] (1 + k^2 + l^2)^{-z/2}.

    Estimator "tail": rows are continued in k by the tail fit, then the
    oscillatory l-dependence is fit against exp(i l omega) |l|^{beta - j}
    with omega from ``cfg.frequencies`` and continued with Lerch sums.
    Estimator "heat": per-row residues are summed over l with a smooth
    compactly supported cutoff of width N - edge_l (a regularized sum).
    """
    if not cfg.frequencies:
        raise LocIndexError("torus continuation needs the oscillation frequencies")
    zs = _contour(z0, cfg)
    D, rho, worst = _torus_rows(d, N, zs, cfg, order)
    ls = modes(N)
    last = N - cfg.edge_l
    beta = order + 0.5
    Z = D[np.abs(ls) <= cfg.K_l].sum(axis=0)
    for sign in (1, -1):
        sel = (sign * ls > cfg.K_l) & (sign * ls <= last)
        L = np.abs(ls[sel]).astype(float)
        cols, meta = [], []
        for om in cfg.frequencies:
            for j in range(cfg.J_l):
                cols.append(np.exp(1j * sign * om * L) * L ** (beta - j))
                meta.append((sign * om, j))
        Amat = np.array(cols).T
        # data inside the window are summed exactly, only l > last is extrapolated
        Z += D[sel].sum(axis=0)
        for ic, z in enumerate(zs):
            c, res = _lstsq(Amat, D[sel, ic] * L**z)
            worst = max(worst, res)
            for cj, (om, j) in zip(c, meta):
                Z[ic] += cj * lerch_tail(om, j - beta + z, last + 1)[0]
    a = _laurent_from_contour(Z, z0, cfg)
    estimates = {"tail": (a[-1], a[0])}
    if worst > cfg.fit_tol:
        raise FitResidualError(f"torus fit residual {worst:.2e} above {cfg.fit_tol:.1e}")
    if abs(a[-2]) > cfg.pole2_tol * (1 + abs(a[-1])):
        raise PoleOrderError(f"|a_-2| = {abs(a[-2]):.2e}")
    if "heat" in cfg.estimators and abs(complex(z0)) < 1e-12:
        g = smooth_step(np.abs(ls) / float(last))
        estimates["heat"] = (complex(np.sum(rho * g)), None)
    residues = [v[0] for v in estimates.values()]
    spread = float(max(abs(x - y) for x in residues for y in residues))
    if spread > cfg.agree_tol * (1 + abs(a[-1])):
        raise EstimatorDisagreementError(f"torus estimators disagree by {spread:.2e}")
    primary = cfg.primary if cfg.primary in estimates else "tail"
    return LaurentData(z0, estimates[primary][0], a[0], [a[1], a[2], a[3]], float(abs(a[-2])), worst, spread, estimates)


def torus_config(psi: CircleDiffeo, **kw) -> ContinuationConfig:
    """Default settings for torus continuations with the frequencies of psi."""
    base = dict(K=24, J=8, agree_tol=2e-2, fit_tol=1e-6, K_l=24, J_l=6, frequencies=tuple(critical_values(psi)))
    base.update(kw)
    return ContinuationConfig(**base)


def equivariant_residue_spectral(sigma: ProductSymbol2D, psi: CircleDiffeo, N: int = 128, cfg: ContinuationConfig | None = None, chi=None) -> LaurentData:
    """Res_{z=0} Tr(Op(sigma)(I x U_psi) Q^{-z}) with Q = diag sqrt(1 + k^2 + l^2)."""
    cfg = cfg or torus_config(psi)
    # rows within the y-bandwidth of the box edge miss intermediate modes
    cfg = replace(cfg, edge_l=max(cfg.edge_l, y_bandwidth(sigma)))
    d = torus_diagonal(sigma, psi, N, chi)
    return continue_torus(d, N, 0.0, cfg, sigma.order)


# --------------------------------------------------------------------------
# local formula at fixed points


class _Taylor:
    """Truncated power series in h = y - y0."""

    def __init__(self, c, n):
        c = np.zeros(n, dtype=complex) if c is None else np.asarray(c, dtype=complex)
        self.c = np.zeros(n, dtype=complex)
        self.c[: min(n, c.size)] = c[:n]
        self.n = n

    @classmethod
    def of(cls, f: TrigPoly, y0: float, n: int) -> "_Taylor":
        return cls([complex(f.derivative(r)(y0)) / math.factorial(r) for r in range(n)], n)

    def __add__(self, o):
        return _Taylor(self.c + o.c, self.n)

    def __sub__(self, o):
        return _Taylor(self.c - o.c, self.n)

    def __mul__(self, o):
        if isinstance(o, _Taylor):
            return _Taylor(np.convolve(self.c, o.c)[: self.n], self.n)
        return _Taylor(self.c * o, self.n)

    __rmul__ = __mul__

    def deriv(self):
        return _Taylor(self.c[1:] * np.arange(1, self.n), self.n)

    def recip(self):
        out = np.zeros(self.n, dtype=complex)
        out[0] = 1.0 / self.c[0]
        for k in range(1, self.n):
            out[k] = -np.dot(self.c[1 : k + 1], out[k - 1 :: -1][:k]) / self.c[0]
        return _Taylor(out, self.n)

    def at0(self) -> complex:
        return complex(self.c[0])


def _fixed_point_functions(sigma: ProductSymbol2D, Kmax: int, tol: float = 1e-10):
    """b_n^{+-}(y) = x-mean of [d_q^n sigma / n!]_{degree -1} at (+-1, 0), as TrigPolys."""
    out = []
    cur = sigma
    ny = sigma.shape[1]
    for n in range(Kmax + 1):
        if n > 0:
            cur = cur.q_derivative()
        pair = []
        for sheet in cur.restrict_q0(-1):
            vals = sheet.mean(axis=0) / math.factorial(n)
            p, tail = project_samples(vals, ny // 2 - 1)
            if tail > tol and np.max(np.abs(vals)) > 0:
                raise LocIndexError(f"y-grid too coarse (tail {tail:.1e})")
            pair.append(p)
        out.append(tuple(pair))
    return out


def equivariant_residue_local(
    sigma: ProductSymbol2D,
    psi: CircleDiffeo,
    Kmax: int = 4,
    ordering: str = "exact",
    tol: float = 1e-10,
) -> complex:
    """Fixed-point localized residue for Op(sigma)(I x U_psi).

    The x circle is fixed pointwise and psi acts on the normal circle.  With
    b_n(y) = [d_q^n sigma]_{-1}(x, +-1; y, 0) / n! averaged over x:

    ordering="exact": the distributional trace of b_n(y) D_y^n U_psi,
        evaluated by repeated integration by parts against
        delta(y - psi(y)); this is exact for every n.
    ordering="frozen": sum_n i^n c_j^n d_y^n (b_n / |1 - psi'|)(y_j) with
        c_j = 1 / (1 - psi'(y_j)) frozen at the fixed point.

    Both agree on the n = 0 term, which is all that contributes for symbols
    of order -1.
    """
    fps = fixed_points(psi, tol)
    if not fps:
        return 0.0
    bs = _fixed_point_functions(sigma, Kmax)
    nt = 2 * Kmax + 3
    total = 0.0 + 0.0j
    for y0, dpsi0 in fps:
        one_minus = 1.0 - dpsi0
        sgn = 1.0 if one_minus > 0 else -1.0
        P1 = _Taylor.of(psi.dpsi, y0, nt)
        phi_p = _Taylor([1.0], nt) - P1  # phi' = 1 - psi'
        inv_phi_p = phi_p.recip()
        for n, pair in enumerate(bs):
            for b in pair:
                if np.max(np.abs(b.coeffs)) == 0:
                    continue
                B = _Taylor.of(b, y0, nt)
                if ordering == "frozen":
                    w = inv_phi_p * sgn
                    f = B * w
                    for _ in range(n):
                        f = f.deriv()
                    total += (1j**n) * (1.0 / one_minus) ** n * f.at0()
                elif ordering == "exact":
                    # (-i d_y)^n delta(y' - psi(y)) = sum_r G_r delta^{(r)}(y' - psi(y))
                    G = {0: _Taylor([1.0], nt)}
                    for _ in range(n):
                        new: dict[int, _Taylor] = {}
                        for r, g in G.items():
                            new[r] = new.get(r, _Taylor(None, nt)) + g.deriv()
                            new[r + 1] = new.get(r + 1, _Taylor(None, nt)) - g * P1
                        G = new
                    for r, g in G.items():
                        H = B * g * ((-1j) ** n)
                        for _ in range(r):
                            H = (H * inv_phi_p).deriv() * (-1.0)
                        total += H.at0() / abs(one_minus)
                else:
                    raise ValueError("ordering must be 'exact' or 'frozen'")
    return total.real if abs(total.imag) < 1e-12 * max(1.0, abs(total)) else total


# --------------------------------------------------------------------------
# index pairings


def log_commutator_operator(Q: EigenData, T: np.ndarray) -> np.ndarray:
    """[ln Q, T] through the spectral logarithm."""
    lnQ = Q.function(np.log)
    return lnQ @ T - T @ lnQ


def residue_pairing_laurent(
    T: FourierOperator,
    Q: EigenData,
    cfg: ContinuationConfig | None = None,
    parametrix: FourierOperator | None = None,
    cond_max: float = 1e12,
) -> LaurentData:
    """Laurent data at 0 of Tr(T^{-1} [ln Q, T] Q^{-z})."""
    S = parametrix if parametrix is not None else invert(T, cond_max)
    X = S.matrix @ log_commutator_operator(Q, T.matrix)
    d = Q.diagonal_of(X)
    cfg = cfg or ContinuationConfig(edge=4)
    return continue_diagonal(d, Q, 0.0, cfg, order=-1)


def residue_pairing_spectral(
    T: FourierOperator,
    Q: EigenData,
    cfg: ContinuationConfig | None = None,
    parametrix: FourierOperator | None = None,
    cond_max: float = 1e12,
) -> float:
    """Res_{z=0} Tr(T^{-1}[ln Q, T] Q^{-z}).

    A parametrix (inverse modulo finite rank) may replace the exact inverse
    when T is singular at the truncation.  With P the projector onto
    nonnegative modes the result equals winding(u) = -index(T_u).
    """
    ld = residue_pairing_laurent(T, Q, cfg, parametrix, cond_max)
    r = complex(ld.residue)
    return r.real if abs(r.imag) < 1e-8 else r


def leading_symbol_residue(u: TrigPoly, derivatives: Sequence[float] | None = None) -> float:
    """winding(u) * sum_j 1 / |1 - h'_j|.

    ``derivatives=None`` stands for the identity contribution (weight 1);
    an empty list means no fixed points.
    """
    w = winding_number(u)
    if derivatives is None:
        return float(w)
    total = 0.0
    for hp in derivatives:
        if abs(1.0 - hp) < 1e-12:
            raise LocIndexError("degenerate fixed point (h' = 1)")
        total += 1.0 / abs(1.0 - hp)
    return float(w) * total
