import numpy as np
import pytest
import scipy.sparse as sp

from nitsche_helmholtz.assembly import ImpedanceField, ProblemSpec, assemble
from nitsche_helmholtz.fespace import Discretization
from nitsche_helmholtz.linsolve import (
    DiscreteField,
    SolverError,
    eval_field,
    solve,
    solve_linear,
    write_field_csv,
    write_field_vtk,
)
from nitsche_helmholtz.scenarios import waveguide_geometry, waveguide_problem

from helpers import square_pair


def waveguide_system(ny=1, k=1, z=0.21 + 0.1j):
    m1, m2 = waveguide_geometry(ny).build(0)
    d = Discretization.build(m1, m2, k)
    return assemble(waveguide_problem(5.0, z, k, gamma=20 * k ** 2 / 2), d)


def test_zero_rhs_gives_zero():
    x = solve_linear(sp.identity(3, format="csc") * (1 + 1j), np.zeros(3))
    assert not np.any(x)


def test_scalar_system():
    x = solve_linear(sp.csc_matrix([[2 + 1j]]), np.array([4 + 2j]))
    assert x[0] == pytest.approx(2.0)


def test_singular_matrix_reported():
    A = sp.csc_matrix(np.array([[1.0, 2.0], [2.0, 4.0]]))
    with pytest.raises(SolverError, match="pivot|singular|factorization"):
        solve_linear(A, np.array([1.0, 0.0]))


def test_shape_mismatch():
    with pytest.raises(SolverError, match="shape"):
        solve_linear(sp.identity(3, format="csc"), np.ones(2))


def test_waveguide_residual():
    sysm = waveguide_system(ny=4)  # 40 elements along each side
    assert sysm.disc.mesh1.nx == 40
    x = solve(sysm).coeffs
    assert np.linalg.norm(sysm.A @ x - sysm.b) / np.linalg.norm(sysm.b) <= 1e-10


def test_matches_dense_solve():
    d = square_pair(4, 3, 2)
    sysm = assemble(ProblemSpec(7.0, ImpedanceField.constant(0.4 + 0.2j), {(1, "left"): 1.0}, order=2, gamma=40.0), d)
    x = solve(sysm).coeffs
    ref = np.linalg.solve(sysm.A.toarray(), sysm.b)
    assert np.linalg.norm(x - ref) <= 1e-12 * np.linalg.norm(ref)


def test_permuted_ordering_gives_same_field(rng):
    sysm = waveguide_system(ny=2, k=2)
    f = solve(sysm)
    perm = rng.permutation(sysm.n)
    y = solve_linear(sysm.A[perm][:, perm], sysm.b[perm])
    x = np.empty_like(y)
    x[perm] = y
    g = DiscreteField(x, sysm.disc)
    for side, (lo, hi) in ((1, (-1, 0)), (2, (0, 1))):
        px, py = rng.uniform(lo, hi, 50), rng.uniform(0, 0.1, 50)
        np.testing.assert_allclose(g.evaluate(px, py, side), f.evaluate(px, py, side), rtol=0, atol=1e-11)


def test_eval_constant_and_nodal_values(rng):
    d = square_pair(3, 2, 3)
    c = DiscreteField(np.full(d.n_dofs, 2.5 - 1j), d)
    assert eval_field(c, (-0.03, 0.07), 1) == pytest.approx(2.5 - 1j)
    v, g = eval_field(c, (0.05, 0.01), 2, gradient=True)
    assert v == pytest.approx(2.5 - 1j) and np.abs(g).max() < 1e-10
    coeffs = rng.standard_normal(d.n_dofs)
    f = DiscreteField(coeffs, d)
    for side in (1, 2):
        xy = d.dof_coordinates(side)
        off = d.dofmap.offset(side)
        np.testing.assert_allclose(f.evaluate(xy[:, 0], xy[:, 1], side), coeffs[off:off + len(xy)], atol=1e-12)


def test_interface_traces_give_the_jump(rng):
    d = square_pair(3, 2, 2)
    f = DiscreteField(rng.standard_normal(d.n_dofs) + 0j, d)
    t = rng.uniform(0, 0.1, 10)
    v1, _ = f.trace_and_flux(t, 1)
    v2, _ = f.trace_and_flux(t, 2)
    for ti, a, b in zip(t, v1, v2):
        assert eval_field(f, (0.0, ti), 1) - eval_field(f, (0.0, ti), 2) == pytest.approx(a - b)


def test_eval_outside_raises():
    d = square_pair(2)
    f = DiscreteField(np.zeros(d.n_dofs, complex), d)
    with pytest.raises(ValueError, match="other subdomain"):
        eval_field(f, (0.05, 0.05), 1)
    with pytest.raises(ValueError, match="both"):
        eval_field(f, (0.5, 0.5), 1)


def test_field_dumps(tmp_path):
    f = solve(waveguide_system())
    path = write_field_csv(f, str(tmp_path / "f.csv"), 11, 3)
    lines = open(path).read().splitlines()
    assert lines[0] == "x,y,side,re_p,im_p,abs_p" and len(lines) == 1 + 2 * 33
    files = write_field_vtk(f, str(tmp_path), 11, 3)
    text = open(files[0]).read()
    assert text.startswith("# vtk DataFile Version 3.0") and "DIMENSIONS 11 3 1" in text
