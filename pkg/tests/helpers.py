"""Small geometries and oracles shared by the tests."""
import numpy as np

from nitsche_helmholtz.fespace import Discretization
from nitsche_helmholtz.mesh import RectDomain, TwoDomainGeometry, build_mesh

WG1 = {"left": "io", "right": "interface", "bottom": "s", "top": "s"}
WG2 = {"left": "interface", "right": "io", "bottom": "s", "top": "s"}


def square_pair(n1=4, n2=None, k=1, m1=None, m2=None):
    """[-0.1, 0] x [0, 0.1] and [0, 0.1] x [0, 0.1], io on the outer ends."""
    n2 = n1 if n2 is None else n2
    a = build_mesh(RectDomain(-0.1, 0.0, 0.0, 0.1, 1), m1 or n1, n1, WG1)
    b = build_mesh(RectDomain(0.0, 0.1, 0.0, 0.1, 2), m2 or n2, n2, WG2)
    return Discretization.build(a, b, k)


def square_geometry(n1=4, n2=None):
    n2 = n1 if n2 is None else n2
    return TwoDomainGeometry(RectDomain(-0.1, 0.0, 0.0, 0.1, 1), RectDomain(0.0, 0.1, 0.0, 0.1, 2),
                             WG1, WG2, (n1, n1), (n2, n2))


class PolyField:
    """Side-wise polynomial sum c_ab x^a y^b with gradient."""

    def __init__(self, coeffs1, coeffs2):
        self.c = {1: np.asarray(coeffs1, dtype=complex), 2: np.asarray(coeffs2, dtype=complex)}

    def value(self, x, y, side):
        c = self.c[side]
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        out = np.zeros(np.broadcast(x, y).shape, dtype=complex)
        for a in range(c.shape[0]):
            for b in range(c.shape[1]):
                out = out + c[a, b] * x ** a * y ** b
        return out

    def gradient(self, x, y, side):
        c = self.c[side]
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        gx = np.zeros(np.broadcast(x, y).shape, dtype=complex)
        gy = np.zeros_like(gx)
        for a in range(c.shape[0]):
            for b in range(c.shape[1]):
                if a:
                    gx = gx + a * c[a, b] * x ** (a - 1) * y ** b
                if b:
                    gy = gy + b * c[a, b] * x ** a * y ** (b - 1)
        return np.stack([gx, gy], axis=-1)


def hand_interface_block(width1, width2, height, c_jj, c_flux):
    """Dense interface block of a one-element-per-side Q1 pair, built with sympy.

    Side 1 is [-width1, 0] x [0, height], side 2 is [0, width2] x [0, height].
    Returns the 8x8 matrix of

        int_0^height  c_jj [[u]][[v]] + c_flux ([[u]]{du/dn}... symmetric part)

    i.e. B_ij = int c_jj J_i J_j + c_flux (J_i F_j + F_i J_j), with the jump
    J = u1 - u2 and the average F = (d_x u1 + d_x u2) / 2 at x = 0.
    """
    import sympy

    x, y = sympy.symbols("x y", real=True)

    def q1(x0, x1):
        lx = [(x1 - x) / (x1 - x0), (x - x0) / (x1 - x0)]
        ly = [(height - y) / height, y / height]
        return [lx[a] * ly[b] for b in range(2) for a in range(2)]

    s1 = q1(-sympy.nsimplify(width1), 0)
    s2 = q1(0, sympy.nsimplify(width2))
    J = [f.subs(x, 0) for f in s1] + [-f.subs(x, 0) for f in s2]
    F = [sympy.Rational(1, 2) * sympy.diff(f, x).subs(x, 0) for f in s1 + s2]
    B = sympy.zeros(8, 8)
    for i in range(8):
        for j in range(8):
            B[i, j] = sympy.integrate(c_jj * J[i] * J[j] + c_flux * (J[i] * F[j] + F[i] * J[j]), (y, 0, height))
    return np.array(B.evalf(30).tolist(), dtype=complex)
