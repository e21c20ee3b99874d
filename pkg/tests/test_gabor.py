import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import SQRT_2PI
from oracles import gaussian_stft_modulus, stft_quadrature
from tfnuclear.errors import CGFailure, ConfigError, DomainError
from tfnuclear.gabor import (GaborSystem, analysis, canonical_dual, conjugate_gradient,
                             cosine_similarity, decay_profile, dual_residual,
                             frame_bounds, frame_failure_suspected, frame_operator_apply,
                             gaussian_window, roundtrip, stft, synthesis,
                             time_frequency_shift)
from tfnuclear.grid import SampledFunction, TruncationWarning
from tfnuclear.komatsu import hermite_function
from tfnuclear.lattice import CoefficientArray, LatticeSpec
from tfnuclear.weights import WeightFunction

SMALL = dict(R=6.0, h=1 / 16)


def small_window():
    return gaussian_window(1, **SMALL)


def random_functions(template, n, seed, spread=2.0):
    rng = np.random.default_rng(seed)
    x = template.axis()
    out = []
    for _ in range(n):
        c, xi, s = rng.uniform(-spread, spread), rng.uniform(-spread, spread), rng.uniform(0.6, 1.5)
        amp = complex(rng.normal(), rng.normal())
        out.append(template.like(amp * np.exp(-(x - c) ** 2 / (2 * s * s) + 1j * xi * x)))
    return out


# time-frequency shifts

def test_tf_shift_identity(window):
    g = time_frequency_shift(window, 0.0, 0.0)
    assert np.array_equal(g.values, window.values)


def test_tf_shift_modulus_is_translation(window):
    a = time_frequency_shift(window, 1.5, 0.0)
    b = time_frequency_shift(window, 1.5, 2.7)
    assert np.max(np.abs(np.abs(a.values) - np.abs(b.values))) <= 1e-15


def test_tf_shift_unitary(window):
    f = hermite_function(2, window)
    g = window.like(window.values * np.exp(1j * window.axis()))
    z = (0.75, -1.25)
    lhs = time_frequency_shift(f, *z).inner(time_frequency_shift(g, *z))
    assert abs(lhs - f.inner(g)) <= 1e-10 * abs(f.inner(g))


def test_tf_shift_fractional_flag(window):
    g = time_frequency_shift(window, 0.3, 0.0)
    assert "fractional-shift" in g.flags
    exact = np.exp(-(window.axis() - 0.3) ** 2)
    assert np.max(np.abs(g.values - exact)) <= 1e-12


def test_tf_shift_truncation_warning(window):
    with pytest.warns(TruncationWarning):
        g = time_frequency_shift(window, 11.5, 0.0)
    assert "shift-truncation" in g.flags


# STFT

def test_stft_gaussian_origin(window):
    v = stft(window, window, [(0.0, 0.0)])[0]
    assert v.real == pytest.approx(math.sqrt(math.pi / 2), rel=1e-8)


def test_stft_matches_quadrature_oracle():
    w = small_window()
    x = w.axis()
    fn = lambda y: y * np.exp(-(y - 0.5) ** 2)
    f = w.like(fn(x))
    win = lambda y: np.exp(-y ** 2)
    for z in [(0.0, 0.0), (1.0, -2.0), (-0.5, 3.25)]:
        got = stft(f, w, [z])[0]
        ref = stft_quadrature(fn, win, z[0], z[1], x)
        assert abs(got - ref) <= 1e-12 * max(1.0, abs(ref))


def test_stft_covariance(window):
    f = hermite_function(1, window)
    u, eta = 1.0, 2.0
    g = time_frequency_shift(f, u, eta)
    pts = [(x, xi) for x in (-1.0, 0.5, 2.0) for xi in (-1.0, 0.0, 3.0)]
    lhs = np.abs(stft(g, window, pts))
    rhs = np.abs(stft(f, window, [(x - u, xi - eta) for x, xi in pts]))
    assert np.max(np.abs(lhs - rhs)) <= 1e-8


def test_stft_rejects_out_of_band():
    w = small_window()
    with pytest.raises(DomainError):
        stft(w, w, [(0.0, 100.0)])


# analysis, synthesis and the frame operator

def test_analysis_origin_coefficient(system, window):
    c = analysis(window, system)
    assert c.values[16, 16].real == pytest.approx(math.sqrt(math.pi / 2), rel=1e-8)


def test_analysis_zero(system, window):
    c = analysis(SampledFunction.zeros_like(window), system)
    assert not np.any(c.values)


def test_analysis_hermite_boundary_shell(system, window):
    c = analysis(hermite_function(2, window), system)
    assert c.boundary_ratio() < 1e-8


def test_synthesis_of_unit_vector_is_window(system, window):
    e = CoefficientArray.unit(system.lattice, (0, 0))
    g = synthesis(e, system.dual, system)
    assert np.max(np.abs(g.values - system.dual.values)) <= 1e-15 * np.max(np.abs(system.dual.values))


def test_synthesis_linear(system):
    rng = np.random.default_rng(0)
    shape = system.lattice.shape
    c1 = CoefficientArray(rng.normal(size=shape) * 1e-12, system.lattice)
    c2 = CoefficientArray(rng.normal(size=shape) * 1e-12, system.lattice)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        lhs = synthesis(CoefficientArray(2 * c1.values - 3j * c2.values, system.lattice),
                        system.window, system)
        rhs = 2 * synthesis(c1, system.window, system) - 3j * synthesis(c2, system.window, system)
    assert np.max(np.abs(lhs.values - rhs.values)) <= 1e-13 * np.max(np.abs(rhs.values))


def test_synthesis_flags_inadequate_coefficients(system):
    c = CoefficientArray(np.ones(system.lattice.shape), system.lattice)
    with pytest.warns(TruncationWarning):
        g = synthesis(c, system.window, system)
    assert "inadequate-coefficients" in g.flags


def test_analysis_synthesis_adjoint():
    w = small_window()
    sys_ = GaborSystem(LatticeSpec(1.0, 1.0, 1, 5, 8), w)
    rng = np.random.default_rng(1)
    f = random_functions(w, 1, 2)[0]
    c = CoefficientArray(rng.normal(size=sys_.lattice.shape)
                         + 1j * rng.normal(size=sys_.lattice.shape), sys_.lattice)
    lhs = np.vdot(c.values, analysis(f, sys_).values)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        rhs = f.inner(synthesis(c, w, sys_))
    assert abs(lhs - rhs) <= 1e-8 * abs(lhs)


def test_frame_operator_positive(system, window):
    for f in random_functions(window, 20, 5):
        q = frame_operator_apply(f, system).inner(f)
        assert q.real > 0 and abs(q.imag) <= 1e-10 * q.real


def test_frame_operator_self_adjoint(system, window):
    f, g = random_functions(window, 2, 6)
    a = frame_operator_apply(f, system).inner(g)
    b = f.inner(frame_operator_apply(g, system))
    assert abs(a - b) <= 1e-10 * abs(a)


def test_zero_step_lattice_rejected():
    with pytest.raises(ConfigError):
        LatticeSpec(0.0, 0.0, 1, 4, 4)


def test_dense_rayleigh_quotients_nearly_constant(dense_system):
    q = [frame_operator_apply(f, dense_system).inner(f).real / f.norm() ** 2
         for f in random_functions(dense_system.window, 20, 7)]
    assert (max(q) - min(q)) / min(q) < 0.05


def test_dense_parseval_pinch(dense_system):
    r = []
    for f in random_functions(dense_system.window, 20, 8):
        c = analysis(f, dense_system.frame_system())
        r.append(np.sum(np.abs(c.values) ** 2) / f.norm() ** 2)
    assert (max(r) - min(r)) / min(r) < 0.05


# frame bounds and the canonical dual

def test_frame_bounds_ordered(system):
    A, B = frame_bounds(system, seed=0)
    assert 0 < A <= B < np.inf


def test_frame_bounds_identity_operator(system):
    A, B = frame_bounds(GaborSystem(system.lattice, system.window), seed=0,
                        apply=lambda g: g)
    assert A == pytest.approx(1.0, abs=1e-12) and B == pytest.approx(1.0, abs=1e-12)


def test_frame_bounds_need_ten_trials(system):
    with pytest.raises(ConfigError):
        frame_bounds(system, trials=5)


def test_critical_density_contrast(system, critical_system):
    A1, _ = frame_bounds(GaborSystem(system.lattice, system.window), seed=0)
    Ac, _ = frame_bounds(critical_system, seed=0)
    assert Ac * 10 <= A1
    assert "no-frame-guarantee" in critical_system.flags
    assert frame_failure_suspected(critical_system, Ac)
    assert not frame_failure_suspected(system, A1)


def test_frame_guarantee_threshold():
    assert LatticeSpec(1.0, 1.0, 1, 4, 4).frame_guarantee
    assert not LatticeSpec(SQRT_2PI, SQRT_2PI, 1, 4, 4).frame_guarantee


def test_canonical_dual_residual(system):
    assert dual_residual(system) <= 1e-9
    assert system.cg_history[-1] <= 1e-9


def test_dense_dual_close_to_window(dense_system):
    assert cosine_similarity(dense_system.dual, dense_system.window) >= 0.99


def test_duality_symmetry(system):
    other = GaborSystem(system.lattice, system.dual, frame_box=system.frame_box)
    back = canonical_dual(other)
    assert cosine_similarity(back, system.window) >= 1 - 1e-6


def test_cg_rejects_negative_operator():
    w = SampledFunction.from_callable(lambda x: np.exp(-x ** 2), R=2, h=0.25)
    with pytest.raises(CGFailure) as exc:
        conjugate_gradient(lambda g: g * -1.0, w)
    assert exc.value.residuals == [1.0]


def test_cg_stagnation_reports_residuals():
    w = SampledFunction.from_callable(lambda x: np.exp(-x ** 2), R=2, h=0.25)
    rng = np.random.default_rng(0)
    noisy = lambda g: g.like(g.values + 1e-6 * rng.normal(size=g.n))
    with pytest.raises(CGFailure) as exc:
        conjugate_gradient(noisy, w, tol=1e-14, window=10)
    hist = exc.value.residuals
    assert min(hist) > 1e-14 and len(hist) >= 11


def test_cg_solves_diagonal_system():
    w = SampledFunction.from_callable(lambda x: np.exp(-x ** 2), R=2, h=0.25)
    d = 1 + np.linspace(0, 1, w.n)
    x, hist = conjugate_gradient(lambda g: g.like(g.values * d), w, tol=1e-12)
    assert np.max(np.abs(x.values - w.values / d)) <= 1e-11
    assert hist[-1] <= 1e-12


def test_dual_cache_key_depends_on_content(system):
    a = GaborSystem(system.lattice, system.window)
    b = GaborSystem(system.lattice, system.window, cg_tol=1e-8)
    c = GaborSystem(system.lattice.with_truncation(15, 16), system.window)
    assert a.key() == GaborSystem(system.lattice, system.window).key()
    assert len({a.key(), b.key(), c.key()}) == 3


# roundtrip

@pytest.mark.parametrize("j", [0, 3])
def test_roundtrip_hermite(system, window, j):
    assert roundtrip(hermite_function(j, window), system)["rel_error"] <= 1e-4


def test_roundtrip_zero(system, window):
    rt = roundtrip(SampledFunction.zeros_like(window), system)
    assert rt["rel_error"] == 0.0 and not np.any(rt["reconstruction"].values)


def test_roundtrip_needs_dual(window):
    with pytest.raises(ConfigError):
        roundtrip(window, GaborSystem(LatticeSpec(1.0, 1.0, 1, 4, 4), window))


def test_roundtrip_error_decreases_with_box(window):
    errs = []
    for K in (4, 8, 16):
        sys_ = GaborSystem(LatticeSpec(1.0, 1.0, 1, K, K), window)
        canonical_dual(sys_)
        errs.append(roundtrip(window, sys_)["rel_error"])
    for a, b in zip(errs, errs[1:]):
        assert b <= a * 1.1


def test_lattice_shift_permutes_coefficients(system, window):
    f = hermite_function(1, window)
    k0, n0 = 2, -3
    g = time_frequency_shift(f, k0 * 1.0, n0 * 1.0)
    c, cs = analysis(f, system).values, analysis(g, system).values
    K = system.lattice.K
    sub = np.abs(c[K - 6:K + 7, K - 6:K + 7])
    shifted = np.abs(cs[K - 6 + k0:K + 7 + k0, K - 6 + n0:K + 7 + n0])
    assert np.max(np.abs(sub - shifted)) <= 1e-8


def test_two_dimensional_smoke():
    w = gaussian_window(2, 5.0, 0.25)
    sys_ = GaborSystem(LatticeSpec(1.0, 1.0, 2, 10, 10), w)
    f = w.like(w.values * np.exp(1j * w.coords()[0]))
    c = analysis(f, sys_)
    assert c.values.shape == (21, 21, 21, 21)
    assert c.values[10, 10, 10, 10].real == pytest.approx(
        abs(stft(f, w, [((0.0, 0.0), (0.0, 0.0))])[0]), rel=1e-6)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        canonical_dual(sys_)
        assert dual_residual(sys_) <= 1e-9
        assert roundtrip(w, sys_)["rel_error"] <= 1e-4


# decay profile

LAMS = list(range(1, 21))


def test_decay_profile_gaussian(system, window):
    prof = decay_profile(analysis(window, system), WeightFunction.log_power(1), LAMS)
    assert all(not r.divergent for r in prof["rows"])
    fit = prof["fits"]["gaussian"]
    assert fit["slope"] < 0 and fit["r2"] >= 0.95
    assert prof["fits"]["gaussian_pointwise"]["slope"] < 0


def test_decay_profile_unit_vector(system):
    w = WeightFunction.log_power(1)
    prof = decay_profile(CoefficientArray.unit(system.lattice, (0, 0)), w, LAMS)
    for r in prof["rows"]:
        assert r.sup == 1.0 and not r.divergent


def test_decay_profile_synthetic_counterexample(system):
    w = WeightFunction.log_power(1)
    lat = system.lattice
    c = CoefficientArray(np.ones(lat.shape), lat)
    c = CoefficientArray(np.exp(-w(c.norms())), lat)
    rows = {r.lam: r for r in decay_profile(c, w, [0.5, 1, 2, 3])["rows"]}
    assert not rows[0.5].divergent and not rows[1].divergent
    assert rows[2].divergent and rows[3].divergent


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2 ** 16))
def test_adjointness_property(seed):
    w = small_window()
    sys_ = GaborSystem(LatticeSpec(1.0, 1.0, 1, 4, 6), w)
    rng = np.random.default_rng(seed)
    f = random_functions(w, 1, seed)[0]
    c = CoefficientArray(rng.normal(size=sys_.lattice.shape), sys_.lattice)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        rhs = f.inner(synthesis(c, w, sys_))
    lhs = np.vdot(c.values, analysis(f, sys_).values)
    assert abs(lhs - rhs) <= 1e-8 * max(abs(lhs), 1e-300)
