import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nitsche_helmholtz.assembly import ImpedanceField, assemble, hermitian_form, norm_matrices
from nitsche_helmholtz.fespace import Discretization
from nitsche_helmholtz.linsolve import DiscreteField, solve
from nitsche_helmholtz.scenarios import muffler_geometry, muffler_problem, waveguide_geometry, waveguide_problem
from nitsche_helmholtz.verify import (
    ConvergenceTable,
    WaveguideExact,
    balance_terms,
    consistency_residual,
    convergence_study,
    default_gamma,
    error_norms,
    estimate_inverse_constant,
    exact_waveguide,
    fit_slope,
    garding_check,
    garding_ratios,
    interpolate,
    lambda_property_suite,
    make_probes,
    surface_wave_metrics,
    weak_flux_residual,
)

from helpers import PolyField, square_pair

passive = st.builds(complex, st.floats(0, 5), st.floats(-5, 5))


def disc_for(ny=1, k=1, ny2=None):
    m1, m2 = waveguide_geometry(ny, ny2).build(0)
    return Discretization.build(m1, m2, k)


# ------------------------------------------------------------ exact solution

def test_exact_waveguide_values():
    k = 5.0
    p1, _ = exact_waveguide(k, 2.0, (0.0, 0.05), 1)
    p2, _ = exact_waveguide(k, 2.0, (0.0, 0.05), 2)
    assert p1 == pytest.approx(1.5 * np.exp(-1j * k))
    assert p2 == pytest.approx(0.5 * np.exp(-1j * k))
    assert p1 - p2 == pytest.approx(np.exp(-1j * k))
    x = np.linspace(-1, 1, 9)
    ex = WaveguideExact(k, 0)
    np.testing.assert_allclose(ex.value(x, 0, 1), np.exp(-1j * k * (x + 1)))
    np.testing.assert_allclose(ex.value(x, 0, 2), np.exp(-1j * k * (x + 1)))
    with pytest.raises(ValueError):
        WaveguideExact(k, -2)


@given(z=passive, kappa=st.floats(0.5, 100))
def test_exact_waveguide_interface_and_boundary_conditions(z, kappa):
    if abs(z) < 1e-3:
        return
    ex = WaveguideExact(kappa, z)
    y = np.linspace(0, 0.1, 20)
    jump = ex.value(0.0, y, 1) - ex.value(0.0, y, 2)
    f1 = ex.gradient(0.0, y, 1)[..., 0]
    f2 = ex.gradient(0.0, y, 2)[..., 0]
    scale = kappa * (1 + abs(1 / z))
    np.testing.assert_allclose(f1, f2, atol=1e-13 * kappa)
    np.testing.assert_allclose(1j * kappa / z * jump + 0.5 * (f1 + f2), 0, atol=1e-13 * scale)
    # io ends: i kappa p + dp/dn = 2 i kappa g
    left = 1j * kappa * ex.value(-1.0, y, 1) - ex.gradient(-1.0, y, 1)[..., 0]
    right = 1j * kappa * ex.value(1.0, y, 2) + ex.gradient(1.0, y, 2)[..., 0]
    np.testing.assert_allclose(left, 2j * kappa, atol=1e-12 * kappa)
    np.testing.assert_allclose(right, 0, atol=1e-12 * kappa)


# --------------------------------------------------------------- error norms

@pytest.mark.parametrize("k", [1, 2, 3])
def test_polynomial_has_zero_error(k, rng):
    c = rng.standard_normal((k + 1, k + 1))
    exact = PolyField(c, -c)
    d = square_pair(3, 2, k)
    f = interpolate(exact.value, d)
    rep = error_norms(f, exact, waveguide_problem(5.0, 0.3 + 0.1j, k), gamma=20.0)
    assert rep.l2 <= 1e-12 and rep.triple <= 1e-12


def test_error_report_invariants(rng):
    d = disc_for(2, 2)
    s = waveguide_problem(7.0, 0.21 + 0.1j, 2, gamma=40.0)
    f = DiscreteField(rng.standard_normal(d.n_dofs) * (1 + 0.5j), d)
    rep = error_norms(f, WaveguideExact(7.0, 0.21 + 0.1j), s)
    assert rep.l2 >= 0 and rep.triple >= 7.0 * rep.l2 and rep.balance_residual >= 0
    zero = error_norms(interpolate(lambda x, y, side: 0 * x, d), PolyField([[0]], [[0]]), s)
    assert zero.l2 == 0 and zero.triple == 0


@given(r=st.floats(1e-6, 1e6), phase=st.floats(0, 2 * np.pi), seed=st.integers(0, 1000))
def test_norms_absolutely_homogeneous(r, phase, seed):
    c = r * np.exp(1j * phase)
    d = disc_for(2, 1)
    nm = norm_matrices(waveguide_problem(10.0, -0.2j, 1), d, 10.0)
    p = np.array([1, 1j]) @ np.random.default_rng(seed).standard_normal((2, d.n_dofs))
    for S in (nm.triple(), nm.u_norm()):
        a, b = math.sqrt(hermitian_form(S, c * p)), abs(c) * math.sqrt(hermitian_form(S, p))
        assert a == pytest.approx(b, rel=1e-13)


def test_triple_norm_dominates_h1_and_l2(rng):
    d = disc_for(2, 2)
    nm = norm_matrices(waveguide_problem(10.0, 1 + 1j, 2), d, 40.0)
    for _ in range(5):
        p = rng.standard_normal(d.n_dofs) + 1j * rng.standard_normal(d.n_dofs)
        t = hermitian_form(nm.triple(), p)
        assert t >= hermitian_form(nm.K, p) and t >= 100 * hermitian_form(nm.M, p)


# -------------------------------------------------------- inverse constant

def test_inverse_constant_strip():
    c = estimate_inverse_constant(square_pair(1, m1=4, m2=4, k=1))
    assert 0 < c < np.inf


@pytest.mark.parametrize("k", [1, 2])
def test_inverse_constant_mesh_independent(k):
    a = estimate_inverse_constant(disc_for(1, k))
    b = estimate_inverse_constant(disc_for(2, k))
    assert abs(a - b) < 0.1 * a


def test_patch_estimate_matches_full_mesh():
    d = disc_for(3, 2, ny2=2)
    assert default_gamma(d) == pytest.approx(20 * estimate_inverse_constant(d), rel=1e-8)


# ----------------------------------------------------------------- lambda

def test_lambda_suite():
    rep = lambda_property_suite(10_000, seed=3)
    assert rep.ok and rep.identity_max <= 1e-14
    assert rep.sharp_bound_max <= math.sqrt(2) * (1 + 1e-12)


# ---------------------------------------------------------------- Garding

@pytest.mark.parametrize("z", [1 + 1j, 0, -0.2j])
def test_garding(z):
    rep = garding_check(waveguide_problem(10.0, z, 1), disc_for(4, 1), n_samples=50, seed=1)
    assert rep.ok and rep.min_ratio >= 1


def test_garding_zero_vector():
    d = disc_for(1, 1)
    s = waveguide_problem(5.0, 1 + 1j, 1, gamma=10.0)
    A = assemble(s, d).A
    nm = norm_matrices(s, d, 10.0)
    p = np.zeros(d.n_dofs, complex)
    assert abs(np.vdot(p, A @ p)) + hermitian_form(nm.u_norm(), p) == 0 == hermitian_form(nm.triple(), p)
    assert garding_ratios(A, nm, [p])[0] == np.inf


def test_garding_flags_small_gamma():
    rep = garding_check(waveguide_problem(5.0, 1 + 1j, 1), disc_for(2, 1), n_samples=5, gamma=1.0)
    assert not rep.gamma_ok and not rep.ok


# ---------------------------------------------------------------- balance

@pytest.mark.parametrize("z", [0.21 + 0.1j, 2.0, -0.3j, 0.05 + 1j])
def test_standard_balance_exact(z):
    s = waveguide_problem(5.0, z, 2, method="standard")
    f = solve(assemble(s, disc_for(1, 2)))
    g_sq, out, loss = balance_terms(f, s)
    assert abs(g_sq - out - loss) <= 1e-10 * g_sq


def test_balance_zero_data():
    s = waveguide_problem(5.0, 0.5, 1).with_(g={})
    f = solve(assemble(s, disc_for(1, 1)))
    assert balance_terms(f, s) == (0.0, 0.0, 0.0)


def test_nitsche_balance_converges():
    res = []
    for ny in (1, 2, 4):
        s = waveguide_problem(5.0, 0.21 + 0.1j, 1)
        f = solve(assemble(s, disc_for(ny, 1)))
        g, o, l = balance_terms(f, s)
        res.append(abs(g - o - l))
    assert res[0] > res[1] > res[2]


# ------------------------------------------------------------------- flux

def test_weak_flux_standard_exact():
    d = disc_for(2, 2)
    s = waveguide_problem(5.0, 0.21 + 0.1j, 2, method="standard")
    f = solve(assemble(s, d))
    assert weak_flux_residual(f, s, make_probes(d, 8, seed=0)) <= 1e-10


def test_weak_flux_nitsche_and_exact_converge():
    z = 0.21 + 0.1j
    nit, ex = [], []
    for ny in (1, 2, 4):
        d = disc_for(ny, 2)
        s = waveguide_problem(5.0, z, 2)
        probes = make_probes(d, 8, seed=0)
        nit.append(weak_flux_residual(solve(assemble(s, d)), s, probes))
        ex.append(weak_flux_residual(interpolate(WaveguideExact(5.0, z).value, d), s, probes))
    assert nit[0] > nit[1] > nit[2]
    assert ex[0] > ex[1] > ex[2] and ex[2] < 1e-4


def test_probe_guards():
    m1, m2 = muffler_geometry(18, 2, 2).build(0)
    with pytest.raises(ValueError, match="rectangle"):
        make_probes(Discretization.build(m1, m2, 1), 2)
    with pytest.raises(ValueError, match="matching"):
        make_probes(disc_for(3, 1, ny2=2), 2)


# ------------------------------------------------------------- convergence

@pytest.mark.parametrize("k", [1, 2, 3])
def test_interpolant_rates(k):
    ex = WaveguideExact(5.0, 0.21 + 0.1j)
    hs, l2, tr = [], [], []
    for ny in (1, 2, 4, 8):
        d = disc_for(ny, k)
        rep = error_norms(interpolate(ex.value, d), ex, waveguide_problem(5.0, 0.21 + 0.1j, k))
        hs.append(rep.h), l2.append(rep.l2), tr.append(rep.triple)
    assert fit_slope(hs, tr) == pytest.approx(k, abs=0.15)
    assert fit_slope(hs, l2) == pytest.approx(k + 1, abs=0.15)


def test_convergence_needs_four_levels():
    with pytest.raises(ValueError, match="4"):
        convergence_study(waveguide_geometry(1), waveguide_problem(5.0, 0.5, 1), [0, 1, 2],
                          WaveguideExact(5.0, 0.5))


def test_convergence_table_csv(tmp_path):
    study = convergence_study(waveguide_geometry(1), waveguide_problem(5.0, 0.5, 1), [0, 1, 2, 3],
                              WaveguideExact(5.0, 0.5), methods=("nitsche", "standard"))
    tb = study.tables["nitsche"]
    assert tb.filename() == "conv_nitsche_k1_kappa5.csv"
    path = tb.write_csv(str(tmp_path / tb.filename()))
    lines = open(path).read().splitlines()
    assert lines[0] == "level,h,dofs,err_L2,err_triple,rate_L2,rate_triple,balance_residual"
    assert len(lines) == 5 and lines[1].split(",")[5] == ""
    assert len(study.distance_l2) == 4


def test_consistency_residual_decreases():
    z = 0.21 + 0.1j
    r = [consistency_residual(waveguide_problem(5.0, z, 2), disc_for(ny, 2), WaveguideExact(5.0, z))
         for ny in (1, 2, 4)]
    assert r[0] > r[1] > r[2]


# ----------------------------------------------------------- surface waves

def surface_field(kappa, z):
    m1, m2 = muffler_geometry(180, 8, 8, grading=4.0).build(0)
    d = Discretization.build(m1, m2, 2)
    s = muffler_problem(kappa, z)
    return solve(assemble(s, d)), s


def test_surface_wave_decay_and_wavelength():
    f, s = surface_field(10.0, -0.2j)
    m = surface_wave_metrics(f, s)
    assert m.decay_length == pytest.approx(0.01, rel=0.1)
    assert m.wavelength == pytest.approx(2 * np.pi / (10 * math.sqrt(1 + 4 / 0.04)), rel=0.05)
    assert m.n_crossings >= 4


def test_no_surface_layer_for_positive_imaginary_part():
    f, s = surface_field(10.0, 1 + 1j)
    m = surface_wave_metrics(f, s)
    assert m.decay_length is None and "decay" in m.reason
