"""Tensor-product Lagrange elements on rectangles.

Reference element is [-1, 1]^2 with equispaced nodes; local node ``a + (k+1)*b``
sits at ``(xi_a, eta_b)``.  Each side gets its own global numbering and side 2
is offset by the number of side-1 DOFs, so no DOF is ever shared across the
interface.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .mesh import InterfacePairing, StructuredQuadMesh, build_interface_pairing


def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss rule on [-1, 1] (exact to degree 2n - 1)."""
    return np.polynomial.legendre.leggauss(n)


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (nq, dim)
    weights: np.ndarray
    degree: int

    @classmethod
    def segment(cls, n: int) -> "QuadratureRule":
        x, w = gauss_legendre(n)
        return cls(x[:, None], w, 2 * n - 1)

    @classmethod
    def square(cls, n: int) -> "QuadratureRule":
        x, w = gauss_legendre(n)
        X, Y = np.meshgrid(x, x)
        W = np.outer(w, w)
        return cls(np.column_stack([X.ravel(), Y.ravel()]), W.ravel(), 2 * n - 1)


def _lagrange_1d(nodes: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values and derivatives of the 1D Lagrange polynomials at ``x``.

    Returns two arrays of shape (len(x), len(nodes)).
    """
    x = np.asarray(x, dtype=float)
    n = len(nodes)
    val = np.ones((len(x), n))
    der = np.zeros((len(x), n))
    for a in range(n):
        others = [nodes[m] for m in range(n) if m != a]
        denom = np.prod([nodes[a] - o for o in others])
        for o in others:
            val[:, a] *= x - o
        for skip in range(n - 1):
            term = np.ones_like(x)
            for m, o in enumerate(others):
                if m != skip:
                    term = term * (x - o)
            der[:, a] += term
        val[:, a] /= denom
        der[:, a] /= denom
    return val, der


@dataclass(frozen=True)
class QkBasis:
    k: int

    def __post_init__(self):
        if self.k not in (1, 2, 3):
            raise ValueError(f"element order must be 1, 2 or 3, got {self.k}")

    @property
    def n_local(self) -> int:
        return (self.k + 1) ** 2

    @cached_property
    def nodes_1d(self) -> np.ndarray:
        return np.linspace(-1.0, 1.0, self.k + 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        X, Y = np.meshgrid(self.nodes_1d, self.nodes_1d)
        return np.column_stack([X.ravel(), Y.ravel()])

    def tabulate(self, xi, eta) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Shape values and reference derivatives at points (xi, eta).

        Returns ``(phi, dphi_dxi, dphi_deta)`` each of shape (npts, n_local).
        """
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        eta = np.atleast_1d(np.asarray(eta, dtype=float))
        lx, dlx = _lagrange_1d(self.nodes_1d, xi)
        ly, dly = _lagrange_1d(self.nodes_1d, eta)
        m = self.k + 1
        # local index a + m*b  ->  outer product over (b, a)
        phi = (ly[:, :, None] * lx[:, None, :]).reshape(len(xi), m * m)
        dxi = (ly[:, :, None] * dlx[:, None, :]).reshape(len(xi), m * m)
        deta = (dly[:, :, None] * lx[:, None, :]).reshape(len(xi), m * m)
        return phi, dxi, deta

    def edge_nodes(self, edge: str) -> np.ndarray:
        """Local indices of the nodes lying on a reference edge."""
        m = self.k + 1
        a = np.arange(m)
        return {
            "bottom": a,
            "top": a + m * (m - 1),
            "left": a * m,
            "right": a * m + (m - 1),
        }[edge]


def eval_shape(basis: QkBasis, xi) -> tuple[np.ndarray, np.ndarray]:
    """Values (n_local,) and reference gradients (n_local, 2) at one point."""
    xi = np.asarray(xi, dtype=float)
    assert np.all(np.abs(xi) <= 1.0 + 1e-12), "reference point outside [-1, 1]^2"
    phi, dxi, deta = basis.tabulate(xi[0], xi[1])
    return phi[0], np.column_stack([dxi[0], deta[0]])


def edge_reference_points(edge: str, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reference coordinates of points with parameter s in [-1, 1] on an edge."""
    one = np.ones_like(s)
    return {
        "bottom": (s, -one),
        "top": (s, one),
        "left": (-one, s),
        "right": (one, s),
    }[edge]


@dataclass(frozen=True, eq=False)
class DofMap:
    """Global numbering of the Q_k lattice nodes of both sides."""

    k: int
    shapes: tuple[tuple[int, int], tuple[int, int]]  # lattice sizes (mx, my) per side

    @classmethod
    def build(cls, mesh1: StructuredQuadMesh, mesh2: StructuredQuadMesh, k: int) -> "DofMap":
        return cls(k, tuple((k * m.nx + 1, k * m.ny + 1) for m in (mesh1, mesh2)))

    def n_side(self, side: int) -> int:
        mx, my = self.shapes[side - 1]
        return mx * my

    @property
    def n_dofs(self) -> int:
        return self.n_side(1) + self.n_side(2)

    def offset(self, side: int) -> int:
        return 0 if side == 1 else self.n_side(1)

    def side_slice(self, side: int) -> slice:
        o = self.offset(side)
        return slice(o, o + self.n_side(side))

    def cell_dofs(self, side: int, mesh: StructuredQuadMesh) -> np.ndarray:
        """(n_elements, n_local) global DOF indices."""
        k = self.k
        mx, _ = self.shapes[side - 1]
        i, j = mesh.element_ij(np.arange(mesh.n_elements))
        m = k + 1
        a = np.tile(np.arange(m), m)
        b = np.repeat(np.arange(m), m)
        gi = k * i[:, None] + a[None, :]
        gj = k * j[:, None] + b[None, :]
        return self.offset(side) + gj * mx + gi


def lattice_coordinates(mesh: StructuredQuadMesh, k: int) -> tuple[np.ndarray, np.ndarray]:
    """1D coordinate arrays of the Q_k lattice (equispaced inside each element)."""
    def refine(c):
        s = np.linspace(0.0, 1.0, k + 1)[:-1]
        inner = (c[:-1, None] + np.diff(c)[:, None] * s[None, :]).ravel()
        return np.concatenate([inner, c[-1:]])
    return refine(mesh.xs), refine(mesh.ys)


@dataclass(frozen=True, eq=False)
class Discretization:
    """Both meshes, their interface overlay, the element and the DOF map."""

    mesh1: StructuredQuadMesh
    mesh2: StructuredQuadMesh
    pairing: InterfacePairing
    basis: QkBasis
    dofmap: DofMap

    @classmethod
    def build(cls, mesh1: StructuredQuadMesh, mesh2: StructuredQuadMesh, k: int) -> "Discretization":
        basis = QkBasis(k)
        return cls(mesh1, mesh2, build_interface_pairing(mesh1, mesh2), basis, DofMap.build(mesh1, mesh2, k))

    @property
    def k(self) -> int:
        return self.basis.k

    @property
    def n_dofs(self) -> int:
        return self.dofmap.n_dofs

    def mesh(self, side: int) -> StructuredQuadMesh:
        return self.mesh1 if side == 1 else self.mesh2

    @cached_property
    def _cell_dofs(self):
        return {s: self.dofmap.cell_dofs(s, self.mesh(s)) for s in (1, 2)}

    def cell_dofs(self, side: int) -> np.ndarray:
        return self._cell_dofs[side]

    def dof_coordinates(self, side: int) -> np.ndarray:
        gx, gy = lattice_coordinates(self.mesh(side), self.k)
        X, Y = np.meshgrid(gx, gy)
        return np.column_stack([X.ravel(), Y.ravel()])

    def boundary_dofs(self, side: int) -> np.ndarray:
        """Global indices of lattice nodes on the outer rectangle boundary."""
        mx, my = self.dofmap.shapes[side - 1]
        J, I = np.divmod(np.arange(mx * my), mx)
        on = (I == 0) | (I == mx - 1) | (J == 0) | (J == my - 1)
        return self.dofmap.offset(side) + np.flatnonzero(on)

    def reference_coords(self, side: int, elem, x, y):
        x0, y0, hx, hy = self.mesh(side).element_box(elem)
        return 2.0 * (x - x0) / hx - 1.0, 2.0 * (y - y0) / hy - 1.0, hx, hy

    def interface_tables(self, side: int, t: np.ndarray):
        """Basis values and fixed-normal derivatives on interface points.

        ``t`` has shape (n_segments, nq) and holds interface parameters inside
        each subsegment.  Returns ``(dofs, phi, dphi_dn)`` with shapes
        (ns, n_local) and (ns, nq, n_local).  The derivative is taken along the
        pairing normal (side 1 -> side 2) on both sides.
        """
        pr = self.pairing
        elem = pr.elem1 if side == 1 else pr.elem2
        x, y = pr.points(t)
        E = np.broadcast_to(elem[:, None], t.shape)
        xi, eta, hx, hy = self.reference_coords(side, E, x, y)
        xi = np.clip(xi, -1.0, 1.0)
        eta = np.clip(eta, -1.0, 1.0)
        phi, dxi, deta = self.basis.tabulate(xi.ravel(), eta.ravel())
        shape = t.shape + (self.basis.n_local,)
        n = pr.normal
        dn = n[0] * dxi * (2.0 / hx).ravel()[:, None] + n[1] * deta * (2.0 / hy).ravel()[:, None]
        return self.cell_dofs(side)[elem], phi.reshape(shape), dn.reshape(shape)


def trace_and_flux(mesh: StructuredQuadMesh, basis: QkBasis, elem: int, coeffs, point, normal):
    """One-sided value and normal derivative of a local field on an element facet.

    ``coeffs`` are the element's local DOF values; ``normal`` is the fixed
    interface normal, used unchanged on either side.
    """
    x0, y0, hx, hy = mesh.element_box(elem)
    x, y = float(point[0]), float(point[1])
    xi, eta = 2.0 * (x - x0) / hx - 1.0, 2.0 * (y - y0) / hy - 1.0
    tol = 1e-10
    if abs(xi) > 1 + tol or abs(eta) > 1 + tol or min(1 - abs(xi), 1 - abs(eta)) > tol:
        raise ValueError(f"point {point} is not on a facet of element {elem}")
    phi, dxi, deta = basis.tabulate(np.clip(xi, -1, 1), np.clip(eta, -1, 1))
    c = np.asarray(coeffs)
    value = phi[0] @ c
    dn = normal[0] * (2.0 / hx) * (dxi[0] @ c) + normal[1] * (2.0 / hy) * (deta[0] @ c)
    return value, dn
