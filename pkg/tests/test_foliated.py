import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from locindex import foliated as fol
from locindex.errors import ModelError, NormalizationError, SupportError
from locindex.harmonics import TrigPoly, flow_time_one
from locindex.scenario import GOLDEN_ANGLE, random_element

seeds = st.integers(0, 2**31 - 1)
KAPPA = math.log(2.0)


def bump(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    m = np.abs(x) < 1
    out[m] = np.exp(-1.0 / (1.0 - x[m] ** 2))
    return out


@pytest.fixture(scope="module")
def rot_model():
    return fol.FoliatedModel((fol.rotation_component(1.0, GOLDEN_ANGLE),), n_plus=1, n_minus=1)


@pytest.fixture(scope="module")
def mixed_model():
    j = np.diag([0.3, -0.2]).astype(complex)
    return fol.FoliatedModel((fol.rotation_component(1.0, GOLDEN_ANGLE), fol.FixedPointComponent(KAPPA, j)), n_plus=1, n_minus=1)


def _pair(seed, model, T=5.0, msize=2, positive=False, count=2, nb=16):
    rng = np.random.default_rng(seed)
    grid = fol.TimeGrid(T, 1 / 32)
    return [random_element(rng, model, grid, nb, msize, positive) for _ in range(count)]


def test_time_grid():
    g = fol.TimeGrid(1.0, 0.25)
    assert g.size == 9 and g.center == 4
    assert g.index(0.5) == 6 and g.index(0.3) is None and g.index(2.0) == -1
    with pytest.raises(ValueError):
        fol.TimeGrid(1.0, 0.3)


def test_model_validation():
    with pytest.raises(ModelError):
        fol.FoliatedModel(())
    with pytest.raises(ModelError):
        fol.FoliatedModel((fol.rotation_component(-1.0, 0.1),))
    with pytest.raises(ModelError):
        # j mixes the even and odd parts
        fol.FoliatedModel((fol.rotation_component(1.0, 0.1, np.ones((2, 2))),), n_plus=1, n_minus=1)


def test_support_checks(rot_model):
    grid = fol.TimeGrid(1.0, 1 / 16)
    with pytest.raises(SupportError):
        fol.CrossedElement.from_function(rot_model, grid, [lambda b, t: np.ones_like(b + t)], nb=8)
    with pytest.raises(SupportError):
        fol.CrossedElement.from_function(rot_model, grid, [lambda b, t: bump(t / 0.5) + 0 * b], nb=8, positive=True)
    f = fol.CrossedElement.from_function(rot_model, grid, [lambda b, t: bump(t / 0.6) + 0 * b], nb=8)
    with pytest.raises(SupportError):
        fol.convolve(f, f)


@settings(max_examples=6)
@given(seeds)
def test_convolution_associative(rot_model, seed):
    f, g, h = _pair(seed, rot_model, T=6.0, count=3)
    lhs = fol.convolve(fol.convolve(f, g), h)
    rhs = fol.convolve(f, fol.convolve(g, h))
    assert (lhs - rhs).sup_norm() <= 1e-10 * max(1.0, lhs.sup_norm())


def test_unit_acts_as_identity(rot_model):
    f, g = _pair(3, rot_model)
    one = fol.CrossedElement(rot_model, f.grid, tuple(np.zeros_like(a) for a in f.data), unit=np.eye(2))
    assert (fol.convolve(one, g) - g).sup_norm() < 1e-14
    assert (fol.convolve(g, one) - g).sup_norm() < 1e-14
    lhs = fol.convolve(one + f, g)
    assert (lhs - (g + fol.convolve(f, g))).sup_norm() < 1e-13
    assert lhs.unit is None


@settings(max_examples=8)
@given(seeds)
def test_trace_commutators_vanish(rot_model, seed):
    f, g = _pair(seed, rot_model, T=3.0)
    for T in (fol.trace_op, fol.trace_units, lambda x: fol.trace_op(x, twist=1.1)):
        a, b = T(fol.convolve(f, g)), T(fol.convolve(g, f))
        assert abs(a - b) <= 1e-8 * (1 + abs(a))


@settings(max_examples=6)
@given(seeds)
def test_positive_trace_commutators_vanish(mixed_model, seed):
    f, g = _pair(seed, mixed_model, T=3.0, positive=True)
    fp = [o for o in mixed_model.orbits() if o.kind == "fixed_point"][0]
    for T in (fol.trace_extended, lambda x: fol.w_trace(fp, x)):
        a, b = T(fol.convolve(f, g)), T(fol.convolve(g, f))
        assert abs(a - b) <= 1e-8 * (1 + abs(a))


def test_trace_op_refuses_fixed_points(mixed_model):
    f, _ = _pair(0, mixed_model, T=3.0)
    with pytest.raises(ModelError):
        fol.trace_op(f)


@settings(max_examples=5)
@given(seeds, st.floats(0.0, 2 * math.pi))
def test_kernel_trace_matches_trace_op(rot_model, seed, twist):
    f, _ = _pair(seed, rot_model, T=3.0)
    a = fol.trace_op(f, twist)
    b = fol.kernel_trace(fol.rep_kernel(f, twist=twist, nb_out=64), 1.0)
    assert abs(a - b) <= 1e-6 * abs(a)


def test_kernel_homomorphism(rot_model):
    f, g = _pair(11, rot_model, T=4.0, msize=1)
    Kfg = fol.rep_kernel(fol.convolve(f, g), nb_out=128)
    KK = fol.kernel_compose(fol.rep_kernel(f, nb_out=128), fol.rep_kernel(g, nb_out=128), 1.0)
    assert np.max(np.abs(Kfg - KK)) <= 1e-5 * np.max(np.abs(Kfg))


def test_resample_b_preserves_band_limited_data():
    nb = 8
    b = np.arange(nb) / nb
    samples = np.exp(2j * np.pi * 2 * b)[None, :, None, None]
    out = fol.resample_b(samples, 32)
    want = np.exp(2j * np.pi * 2 * np.arange(32) / 32)
    assert np.allclose(out[0, :, 0, 0], want, atol=1e-14)
    with pytest.raises(ValueError):
        fol.resample_b(samples, 4)


def test_w_trace_quadrature_oracle(mixed_model):
    # scipy.integrate.quad of (e^{0.3t} - e^{-0.2t}) / |1 - 2^t| * 2 bump((t - 0.9) / 0.5)
    frozen = 0.24373836843174385
    grid = fol.TimeGrid(2.0, 1 / 256)
    e = fol.CrossedElement.from_function(
        mixed_model, grid, [None, lambda b, t: bump((t - 0.9) / 0.5) + 0 * b], msize=2, positive=True
    )
    fp = [o for o in mixed_model.orbits() if o.kind == "fixed_point"][0]
    assert abs(fol.w_trace(fp, e) - frozen) < 1e-10


def test_fixed_point_weight_requires_kappa():
    with pytest.raises(ModelError):
        fol.fixed_point_weight(0.0, np.array([1.0]))
    assert fol.fixed_point_weight(KAPPA, np.array([1.0]))[0] == pytest.approx(1.0)


def test_theta_trace_hyperbolic_return_map():
    # return map with fixed points 0 and pi, h' = exp(+-1/2); e(b, t) = bump(t / 2.6)
    frozen = 2.899054754762103
    h = flow_time_one(TrigPoly.sin(1, 0.5))
    model = fol.FoliatedModel((fol.PeriodicComponent(1.0, h),), n_max=3)
    orbits = model.orbits()
    assert len(orbits) == 2
    # h' comes from the RK4 flow integrator, accurate to about 1e-10
    assert sorted(o.hprime for o in orbits) == pytest.approx([math.exp(-0.5), math.exp(0.5)], abs=1e-9)
    e = fol.CrossedElement.from_function(model, fol.TimeGrid(3.0, 1 / 32), [lambda b, t: bump(t / 2.6) + 0 * b], nb=8)
    total = sum(fol.theta_trace(o, e) for o in orbits)
    assert abs(total - frozen) < 1e-8
    with pytest.raises(ModelError):
        fol.index_pairing(model, e)


def test_rotation_orbits_and_nondegeneracy(rot_model):
    assert rot_model.orbits() == []
    assert fol.check_nondegenerate(rot_model)["nondegenerate"]
    flat = fol.FoliatedModel((fol.rotation_component(1.0, 0.0),))
    assert not fol.check_nondegenerate(flat)["nondegenerate"]
    frozen_fp = fol.FoliatedModel((fol.FixedPointComponent(0.0),))
    report = fol.check_nondegenerate(frozen_fp)
    assert not report["nondegenerate"]
    assert report["entries"][0]["margin"] == 0.0


@pytest.mark.parametrize("d", [0.5, 1.5 + 0.5j, -2.0])
def test_suspension_residue_vanishes_for_invertible_fibre(d):
    assert abs(fol.suspension_residue(complex(d))) < 1e-6


def test_nilpotent_class(mixed_model):
    grid = fol.TimeGrid(5.0, 1 / 32)
    base = fol.CrossedElement.from_function(
        mixed_model, grid, [lambda b, t: bump((t - 1.2) / 0.8) + 0 * b] * 2, nb=16, positive=True
    )
    e, e0 = fol.nilpotent_class(base)
    assert (fol.convolve(e, e) - e).sup_norm() == 0.0
    assert fol.suspension_symbol(e).defect() < 1e-14
    for sel in ("full", "units", "periodic", "fixed"):
        assert fol.index_pairing(mixed_model, e, selector=sel, e0=e0) == 0.0
    total, parts = fol.index_rhs(mixed_model, e, e0=e0, breakdown=True)
    assert total == 0.0 and all(v == 0 for v in parts.values())


def test_rank_one_projection(rot_model):
    scalar = fol.FoliatedModel(rot_model.components)
    phi = fol.concentrated_phi(1.0)
    g = fol.partition_profile(1.0, 0.04)
    e = fol.rank_one_projection(scalar, phi, g, fol.TimeGrid(2.0, 1 / 128))
    assert abs(fol.trace_op(e) - 1.0) < 1e-8
    with pytest.raises(NormalizationError):
        fol.rank_one_projection(scalar, phi * 2.0, g, fol.TimeGrid(2.0, 1 / 128))


@settings(max_examples=4)
@given(seeds, st.integers(2, 3))
def test_morita_homomorphism_and_trace(rot_model, seed, q):
    # c f is not band-limited at nb = 16 (error 6e-7); nb = 32 resolves it to rounding
    f, g = _pair(seed, rot_model, T=4.0, msize=1, nb=32)
    w = lambda x: 2.0 + np.cos(2 * np.pi * x / q) + 0.5 * np.sin(4 * np.pi * x / q)
    c = fol.morita_cutoff(q, 1.0, w)
    Rf, Rg = fol.rho_morita(f, c, q), fol.rho_morita(g, c, q)
    Rfg = fol.rho_morita(fol.convolve(f, g), c, q)
    assert (fol.morita_convolve(Rf, Rg) - Rfg).sup_norm() <= 1e-8 * max(1.0, Rfg.sup_norm())
    for twist in (0.0, 0.7):
        assert abs(fol.morita_trace(Rf, twist) - fol.trace_op(f, twist)) < 1e-10


def test_morita_cutoff_normalization(rot_model):
    f, _ = _pair(0, rot_model, msize=1)
    with pytest.raises(NormalizationError):
        fol.rho_morita(f, lambda x: np.ones_like(np.asarray(x, dtype=float)), 2)
