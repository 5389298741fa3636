"""Geometry and problem factories for the shipped experiments."""
from __future__ import annotations

from .assembly import ImpedanceField, ProblemSpec
from .mesh import RectDomain, TwoDomainGeometry

WAVEGUIDE_LENGTH = 1.0
WAVEGUIDE_WIDTH = 0.1


def waveguide_geometry(ny1: int = 1, ny2: int | None = None) -> TwoDomainGeometry:
    """2 x 0.1 strip cut at x = 0; square elements of size 0.1/ny on each side."""
    ny2 = ny1 if ny2 is None else ny2
    L, W = WAVEGUIDE_LENGTH, WAVEGUIDE_WIDTH
    left = RectDomain(-L, 0.0, 0.0, W, side_id=1)
    right = RectDomain(0.0, L, 0.0, W, side_id=2)
    tags1 = {"left": "io", "right": "interface", "bottom": "s", "top": "s"}
    tags2 = {"left": "interface", "right": "io", "bottom": "s", "top": "s"}
    n = round(L / W)
    return TwoDomainGeometry(left, right, tags1, tags2, (n * ny1, ny1), (n * ny2, ny2))


def waveguide_problem(kappa: float, zeta, order: int = 1, method: str = "nitsche",
                      gamma: float | None = None) -> ProblemSpec:
    z = zeta if isinstance(zeta, ImpedanceField) else ImpedanceField.constant(zeta)
    return ProblemSpec(kappa, z, {(1, "left"): 1.0}, method, order, gamma)


# pipe with a side chamber above part of its top wall
PIPE = (0.0, 0.9, 0.0, 0.05)
CHAMBER = (0.2, 0.7, 0.05, 0.1)


def muffler_geometry(nx: int = 90, ny1: int = 5, ny2: int = 5, grading: float = 1.0) -> TwoDomainGeometry:
    """Pipe (side 1) coupled to a chamber (side 2) along part of the pipe wall."""
    x0, x1, y0, y1 = PIPE
    a, b, _, c1 = CHAMBER
    pipe = RectDomain(x0, x1, y0, y1, side_id=1)
    chamber = RectDomain(a, b, y1, c1, side_id=2)
    tags1 = {"left": "io", "right": "io", "bottom": "s",
             "top": [(x0, a, "s"), (a, b, "interface"), (b, x1, "s")]}
    tags2 = {"bottom": "interface", "left": "s", "right": "s", "top": "s"}
    nx2 = round(nx * (b - a) / (x1 - x0))
    return TwoDomainGeometry(pipe, chamber, tags1, tags2, (nx, ny1), (nx2, ny2), grading)


def muffler_problem(kappa: float, zeta, order: int = 2, method: str = "nitsche",
                    gamma: float | None = None) -> ProblemSpec:
    z = zeta if isinstance(zeta, ImpedanceField) else ImpedanceField.constant(zeta)
    return ProblemSpec(kappa, z, {(1, "left"): 1.0, (1, "right"): 0.0}, method, order, gamma)
