import mpmath
import numpy as np
import pytest
import scipy.io
from hypothesis import given, strategies as st

from nitsche_helmholtz.assembly import (
    AssemblyError,
    ImpedanceField,
    ProblemSpec,
    ResolutionError,
    StandardMethodError,
    assemble,
    assemble_nitsche,
    assemble_standard,
    check_resolution,
    compute_lambda,
    interface_coefficients,
    io_boundary,
    resolution_limit,
    volume_matrices,
)
from nitsche_helmholtz.fespace import Discretization
from nitsche_helmholtz.mesh import RectDomain, build_mesh

from helpers import WG1, WG2, hand_interface_block, square_pair

G_LEFT = {(1, "left"): 1.0}


def spec(z=0.21 + 0.1j, kappa=5.0, k=1, method="nitsche", gamma=16.0, g=G_LEFT):
    zf = z if isinstance(z, ImpedanceField) else ImpedanceField.constant(z)
    return ProblemSpec(kappa, zf, g, method, k, gamma)


def one_by_one():
    a = build_mesh(RectDomain(-0.1, 0, 0, 0.1, 1), 1, 1, WG1)
    b = build_mesh(RectDomain(0, 0.1, 0, 0.1, 2), 1, 1, WG2)
    return Discretization.build(a, b, 1)


def base_matrix(s, d):
    K, M = volume_matrices(d)
    R, _, _ = io_boundary(d, s.g)
    return (K - s.kappa ** 2 * M + 1j * s.kappa * R).toarray()


# ------------------------------------------------------------------- lambda

def test_lambda_examples():
    assert compute_lambda(0, 10.0, 0.1, 16.0) == pytest.approx(160.0)
    assert compute_lambda(0.0625j, 10.0, 0.1, 16.0) == pytest.approx(80.0)


def test_lambda_against_high_precision_oracle():
    mpmath.mp.dps = 40
    z = mpmath.mpc(0.21, 0.10)
    ref = 1 / (mpmath.mpf(0.05) / 16 + z / (1j * mpmath.mpf(5)))
    lam = compute_lambda(0.21 + 0.10j, 5.0, 0.05, 16.0)
    assert abs(lam - complex(ref)) <= 1e-14 * abs(lam)
    assert lam == pytest.approx(10.0597 + 18.2707j, abs=1e-4)


def test_lambda_zero_denominator():
    with pytest.raises(AssemblyError):
        compute_lambda(-0.0625j, 10.0, 0.1, 16.0)


@given(zr=st.floats(0, 10), zi=st.floats(-10, 10), kappa=st.floats(0.1, 200), h=st.floats(1e-4, 1),
       gamma=st.floats(1, 500))
def test_lambda_identity(zr, zi, kappa, h, gamma):
    z = complex(zr, zi)
    if zi < 0 and h * zi < -gamma * abs(z) ** 2 / (4 * kappa):
        return  # outside the resolution condition
    lam = compute_lambda(z, kappa, h, gamma)
    w = z / (1j * kappa)
    scale = max(1.0, abs(lam * w), abs(h / gamma * lam))
    assert abs((1 - lam * w) - h / gamma * lam) <= 1e-14 * scale
    assert 0 < abs(lam) <= gamma / h * (1 + 1e-12)


# --------------------------------------------------------------- resolution

def test_resolution_limit_examples():
    assert resolution_limit(16, 0.2, 10) == pytest.approx(0.08)
    d = square_pair(1)  # h = 0.1
    assert not check_resolution(spec(-0.2j, 10.0), d.pairing, 16.0).ok
    rep = check_resolution(spec(1 + 1j, 10.0), d.pairing, 16.0)
    assert rep.ok and rep.h0 == np.inf
    rep = check_resolution(spec(-0.2j, 10.0), square_pair(2).pairing, 16.0)
    assert rep.ok and rep.h0 == pytest.approx(0.08)


def test_resolution_uses_the_coarser_side():
    d = square_pair(2, 1)  # h1 = 0.05, h2 = 0.1
    rep = check_resolution(spec(-0.2j, 10.0), d.pairing, 16.0)
    assert not rep.ok and rep.violations == (0, 1)
    with pytest.raises(ResolutionError):
        assemble_nitsche(spec(-0.2j, 10.0), d)
    assemble_nitsche(spec(-0.2j, 10.0), d, enforce_resolution=False)


def test_piecewise_impedance_per_subsegment():
    z = ImpedanceField.piecewise([0, 0.05, 0.1], [1 + 1j, -0.2j])
    d = square_pair(4)
    co = interface_coefficients(spec(z, 10.0), d.pairing, 16.0)
    np.testing.assert_allclose(co.zeta, [1 + 1j, 1 + 1j, -0.2j, -0.2j])
    assert list(co.minus) == [False, False, True, True]
    np.testing.assert_allclose(co.beta, co.h / 16.0 * co.lam)
    np.testing.assert_allclose(co.mu, co.zeta / (10j) * co.beta)


# -------------------------------------------------------------- validation

def test_problem_validation():
    with pytest.raises(AssemblyError, match="kappa"):
        spec(kappa=-1.0)
    with pytest.raises(AssemblyError, match="gamma"):
        spec(gamma=0.0)
    with pytest.raises(AssemblyError):
        spec(method="mortar")
    with pytest.raises(StandardMethodError, match="nitsche"):
        spec(0, method="standard")
    with pytest.raises(StandardMethodError):
        spec(ImpedanceField.piecewise([0, 0.05, 0.1], [1, 0]), method="standard")
    with pytest.raises(AssemblyError, match="passive"):
        ImpedanceField.constant(-1 + 1j)


def test_mass_spring_damper_impedance():
    z = ImpedanceField.mass_spring_damper(2.0, 3.0, 8.0, 1.2, 340.0, 4.0)
    assert z.samples()[0] == pytest.approx((3.0 + 1j * (8.0 - 2.0)) / (1.2 * 340.0))


def test_unknown_io_edge_rejected():
    with pytest.raises(AssemblyError):
        assemble(spec(g={(1, "top"): 1.0}), square_pair(2))


# ----------------------------------------------------------- matrix checks

@pytest.mark.parametrize("method", ["nitsche", "standard"])
@pytest.mark.parametrize("k", [1, 2, 3])
def test_symmetric_not_hermitian(method, k):
    s = spec(0.3 - 0.05j, 5.0, k, method)
    A = assemble(s, square_pair(3, 2, k)).A
    assert abs(A - A.T).max() <= 1e-13 * abs(A).max()
    assert abs(A - A.conj().T).max() > 1e-3 * abs(A).max()


@given(nx=st.integers(1, 5), ny=st.integers(1, 5), k=st.sampled_from([1, 2, 3]))
def test_volume_matrices(nx, ny, k):
    d = square_pair(ny, ny, k, m1=nx, m2=nx + 1)
    K, M = volume_matrices(d)
    one = np.ones(d.n_dofs)
    assert abs(K @ one).max() < 1e-11
    assert one @ M @ one == pytest.approx(0.02, rel=1e-12)
    xs = np.concatenate([d.dof_coordinates(1)[:, 0], d.dof_coordinates(2)[:, 0]])
    # int |d/dx x|^2 = area
    assert xs @ K @ xs == pytest.approx(0.02, rel=1e-11)


def test_io_boundary_terms():
    d = square_pair(3, 3, 2)
    R, load, g_sq = io_boundary(d, {(1, "left"): 2.0})
    one = np.ones(d.n_dofs)
    assert one @ R @ one == pytest.approx(0.2)  # two io edges of length 0.1
    assert load.sum() == pytest.approx(0.2)
    assert g_sq == pytest.approx(0.4)


def test_zero_data_gives_zero_load():
    sysm = assemble(spec(g={}), square_pair(2))
    assert not np.any(sysm.b)


def test_methods_differ_only_on_interface_blocks():
    d = square_pair(3, 3, 2)
    A = assemble(spec(1 + 1j, k=2), d).A.toarray()
    B = assemble(spec(1 + 1j, k=2, method="standard"), d).A.toarray()
    on = np.zeros(d.n_dofs, bool)
    on[d.cell_dofs(1)[d.pairing.elem1].ravel()] = True
    on[d.cell_dofs(2)[d.pairing.elem2].ravel()] = True
    diff = np.abs(A - B)
    assert diff[~on, :].max() == 0 and diff[:, ~on].max() == 0
    assert diff.max() > 0


def test_standard_block_by_hand():
    d = one_by_one()
    s = spec(2.0, 5.0, method="standard", gamma=None)
    block = assemble_standard(s, d).A.toarray() - base_matrix(s, d)
    ref = hand_interface_block(0.1, 0.1, 0.1, c_jj=1j * 5.0 / 2.0, c_flux=0)
    np.testing.assert_allclose(block, ref, rtol=0, atol=1e-14 * np.abs(ref).max())


def test_nitsche_zeta_zero_is_interior_penalty():
    d = one_by_one()
    s = spec(0, 5.0, gamma=16.0)
    block = assemble_nitsche(s, d).A.toarray() - base_matrix(s, d)
    ref = hand_interface_block(0.1, 0.1, 0.1, c_jj=16 / 0.1, c_flux=-1)
    np.testing.assert_allclose(block, ref, rtol=0, atol=1e-13 * np.abs(ref).max())


def test_assembly_is_deterministic():
    d = square_pair(3, 2, 2)
    A1 = assemble(spec(k=2), d).A
    A2 = assemble(spec(k=2), d).A
    assert (A1 != A2).nnz == 0


def test_matrix_market_roundtrip(tmp_path):
    sysm = assemble(spec(), square_pair(2, 2, 1))
    path = tmp_path / "A.mtx"
    sysm.write_matrix_market(str(path))
    B = scipy.io.mmread(str(path)).tocsr()
    assert abs(B - sysm.A).max() == 0
    assert "complex general" in path.read_text().splitlines()[0]


def test_nonmatching_assembly_symmetric():
    d = square_pair(3, 2, 2, m1=2, m2=5)
    A = assemble(spec(0.5 + 0.5j, k=2), d).A
    assert abs(A - A.T).max() <= 1e-13 * abs(A).max()
