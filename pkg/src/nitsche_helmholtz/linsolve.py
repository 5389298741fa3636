"""Direct solution of the assembled system and evaluation of the result."""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fespace import Discretization

RESIDUAL_TOL = 1e-10
PIVOT_TOL = 1e-14


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class DiscreteField:
    """DOF vector bound to a discretization.

    Evaluation needs a side hint because the field is two-valued on the
    interface.
    """

    coeffs: np.ndarray
    disc: Discretization

    def __post_init__(self):
        if len(self.coeffs) != self.disc.n_dofs:
            raise ValueError(f"expected {self.disc.n_dofs} coefficients, got {len(self.coeffs)}")

    def side_coeffs(self, side: int) -> np.ndarray:
        return self.coeffs[self.disc.dofmap.side_slice(side)]

    def evaluate(self, x, y, side: int, gradient: bool = False):
        disc = self.disc
        mesh = disc.mesh(side)
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        elem = mesh.locate(x, y)
        xi, eta, hx, hy = disc.reference_coords(side, elem, x, y)
        phi, dxi, deta = disc.basis.tabulate(np.clip(xi, -1, 1), np.clip(eta, -1, 1))
        c = self.coeffs[disc.cell_dofs(side)[elem]]
        val = np.einsum("pa,pa->p", phi, c)
        if not gradient:
            return val
        gx = np.einsum("pa,pa->p", dxi, c) * 2.0 / hx
        gy = np.einsum("pa,pa->p", deta, c) * 2.0 / hy
        return val, np.stack([gx, gy], axis=-1)

    def trace_and_flux(self, t, side: int):
        """One-sided trace and derivative along the fixed interface normal at
        interface parameters ``t``."""
        pr = self.disc.pairing
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any((t < pr.t0[0] - 1e-12) | (t > pr.t1[-1] + 1e-12)):
            raise ValueError("point not on the interface")
        x, y = pr.points(t)
        v, g = self.evaluate(x, y, side, gradient=True)
        return v, g @ pr.normal


def eval_field(field: DiscreteField, point, side: int, gradient: bool = False):
    """Value (and gradient) of ``field`` at one point of the hinted side."""
    mesh = field.disc.mesh(side)
    if not mesh.contains(point[0], point[1]):
        other = field.disc.mesh(3 - side)
        where = "the other subdomain" if other.contains(point[0], point[1]) else "both subdomains"
        raise ValueError(f"point {tuple(point)} lies outside side {side} (in {where})")
    out = field.evaluate([point[0]], [point[1]], side, gradient)
    if gradient:
        return out[0][0], out[1][0]
    return out[0]


def solve(system, check: bool = True) -> DiscreteField:
    """Sparse LU solve; ``system`` is a ComplexSparseSystem."""
    x = solve_linear(system.A, system.b, check=check)
    return DiscreteField(x, system.disc)


def solve_linear(A, b, check: bool = True) -> np.ndarray:
    A = sp.csc_matrix(A, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if A.shape[0] != A.shape[1] or A.shape[0] != len(b):
        raise SolverError(f"shape mismatch: A {A.shape}, b {b.shape}")
    if not np.any(b):
        return np.zeros_like(b)
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:  # exactly singular
        raise SolverError(f"factorization failed: {exc}") from None
    scale = abs(A).max()
    d = np.abs(lu.U.diagonal())
    small = np.flatnonzero(d <= PIVOT_TOL * scale)
    if len(small):
        raise SolverError(f"matrix singular to working precision (pivot {int(small[0])}, |u| = {d[small[0]]:.3g})")
    x = lu.solve(b)
    if check:
        res = np.linalg.norm(A @ x - b) / np.linalg.norm(b)
        if not res <= RESIDUAL_TOL:
            raise SolverError(f"relative residual {res:.3g} exceeds {RESIDUAL_TOL:g}")
    return x


def sample_grid(field: DiscreteField, nx: int, ny: int):
    """Rows (x, y, side, p) on an nx-by-ny grid over each subdomain."""
    rows = []
    for side in (1, 2):
        d = field.disc.mesh(side).domain
        X, Y = np.meshgrid(np.linspace(d.x_min, d.x_max, nx), np.linspace(d.y_min, d.y_max, ny))
        p = field.evaluate(X.ravel(), Y.ravel(), side)
        rows.append((X.ravel(), Y.ravel(), np.full(X.size, side), p))
    return rows


def write_field_csv(field: DiscreteField, path: str, nx: int = 101, ny: int = 11) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "side", "re_p", "im_p", "abs_p"])
        for X, Y, S, P in sample_grid(field, nx, ny):
            for x, y, s, p in zip(X, Y, S, P):
                w.writerow([f"{x:.12g}", f"{y:.12g}", int(s), f"{p.real:.12g}", f"{p.imag:.12g}", f"{abs(p):.12g}"])
    return path


def write_field_vtk(field: DiscreteField, out_dir: str, nx: int = 101, ny: int = 11, prefix: str = "field") -> list[str]:
    """Legacy ASCII VTK structured grids, one file per subdomain."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for X, Y, S, P in sample_grid(field, nx, ny):
        side = int(S[0])
        path = os.path.join(out_dir, f"{prefix}_side{side}.vtk")
        with open(path, "w") as fh:
            fh.write("# vtk DataFile Version 3.0\n")
            fh.write(f"pressure side {side}\nASCII\nDATASET STRUCTURED_GRID\n")
            fh.write(f"DIMENSIONS {nx} {ny} 1\nPOINTS {nx * ny} double\n")
            for x, y in zip(X, Y):
                fh.write(f"{x:.12g} {y:.12g} 0\n")
            fh.write(f"POINT_DATA {nx * ny}\n")
            for name, vals in (("re_p", P.real), ("im_p", P.imag), ("abs_p", np.abs(P))):
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                fh.writelines(f"{v:.12g}\n" for v in vals)
        paths.append(path)
    return paths
