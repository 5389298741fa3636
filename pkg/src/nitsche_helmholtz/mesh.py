"""Structured tensor-grid meshes for two rectangular subdomains and the
overlay of their interface facets.

Each subdomain gets its own mesh; nothing is shared between the two sides
except the geometric interface segment.  Interface orientation convention:
the normal ``n`` always points from side 1 into side 2, so that the jump is
``[[p]] = p1 - p2``.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

EDGES = ("bottom", "right", "top", "left")
TAGS = ("io", "s", "interface")

# outward unit normal of each rectangle edge
EDGE_NORMALS = {
    "bottom": np.array([0.0, -1.0]),
    "right": np.array([1.0, 0.0]),
    "top": np.array([0.0, 1.0]),
    "left": np.array([-1.0, 0.0]),
}
OPPOSITE = {"bottom": "top", "top": "bottom", "left": "right", "right": "left"}


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class RectDomain:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    side_id: int = 1

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise MeshError(f"degenerate rectangle {self}")
        if self.side_id not in (1, 2):
            raise MeshError(f"side_id must be 1 or 2, got {self.side_id}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    def edge_line(self, edge: str) -> tuple[int, float, float, float]:
        """(fixed axis, fixed coordinate, t_min, t_max) of a rectangle edge.

        Axis 0 means the edge is vertical (x fixed) and is parametrised by y.
        """
        if edge == "left":
            return 0, self.x_min, self.y_min, self.y_max
        if edge == "right":
            return 0, self.x_max, self.y_min, self.y_max
        if edge == "bottom":
            return 1, self.y_min, self.x_min, self.x_max
        if edge == "top":
            return 1, self.y_max, self.x_min, self.x_max
        raise MeshError(f"unknown edge {edge!r}")


def _normalize_rules(tag_rules: Mapping[str, object]) -> dict[str, tuple]:
    """Turn an edge->tag map into edge->((t0, t1, tag), ...) segment lists.

    A value may be a single tag string (whole edge) or a sequence of
    ``(t0, t1, tag)`` triples covering the edge in absolute coordinates.
    """
    missing = [e for e in EDGES if e not in tag_rules]
    if missing:
        raise MeshError(f"tag_rules missing edge(s): {', '.join(missing)}")
    unknown = [e for e in tag_rules if e not in EDGES]
    if unknown:
        raise MeshError(f"unknown edge name(s) in tag_rules: {unknown}")
    out = {}
    for edge in EDGES:
        rule = tag_rules[edge]
        if isinstance(rule, str):
            if rule not in TAGS:
                raise MeshError(f"unknown tag {rule!r} on edge {edge}")
            out[edge] = rule
        else:
            segs = tuple((float(a), float(b), str(t)) for a, b, t in rule)
            for _, _, t in segs:
                if t not in TAGS:
                    raise MeshError(f"unknown tag {t!r} on edge {edge}")
            out[edge] = segs
    return out


@dataclass(frozen=True, eq=False)
class StructuredQuadMesh:
    """Tensor grid of axis-aligned rectangles.

    Elements are numbered ``e = j * nx + i`` and vertices ``v = j * (nx+1) + i``.
    Element vertices run counter-clockwise from the lower-left corner.
    Boundary facets are stored as flat arrays; ``facet_edge`` names the edge of
    the element (and of the domain) the facet lies on.
    """

    domain: RectDomain
    xs: np.ndarray
    ys: np.ndarray
    tag_rules: dict
    facet_elem: np.ndarray = field(repr=False)
    facet_edge: np.ndarray = field(repr=False)
    facet_tag: np.ndarray = field(repr=False)
    facet_t: np.ndarray = field(repr=False)  # (nf, 2) parameter range along the edge

    @property
    def nx(self) -> int:
        return len(self.xs) - 1

    @property
    def ny(self) -> int:
        return len(self.ys) - 1

    @property
    def side(self) -> int:
        return self.domain.side_id

    @property
    def n_elements(self) -> int:
        return self.nx * self.ny

    @property
    def hx(self) -> np.ndarray:
        return np.diff(self.xs)

    @property
    def hy(self) -> np.ndarray:
        return np.diff(self.ys)

    @property
    def h_max(self) -> float:
        return float(max(self.hx.max(), self.hy.max()))

    @property
    def nodes(self) -> np.ndarray:
        X, Y = np.meshgrid(self.xs, self.ys)
        return np.column_stack([X.ravel(), Y.ravel()])

    @property
    def elements(self) -> np.ndarray:
        i, j = np.meshgrid(np.arange(self.nx), np.arange(self.ny))
        i, j = i.ravel(), j.ravel()
        w = self.nx + 1
        return np.column_stack([j * w + i, j * w + i + 1, (j + 1) * w + i + 1, (j + 1) * w + i])

    def element_ij(self, elem) -> tuple[np.ndarray, np.ndarray]:
        elem = np.asarray(elem)
        return elem % self.nx, elem // self.nx

    def element_box(self, elem):
        """Lower-left corner and sizes (x0, y0, hx, hy) of element(s)."""
        i, j = self.element_ij(elem)
        return self.xs[i], self.ys[j], self.xs[i + 1] - self.xs[i], self.ys[j + 1] - self.ys[j]

    def facets_with_tag(self, tag: str) -> np.ndarray:
        return np.flatnonzero(self.facet_tag == tag)

    def facet_nodes(self) -> np.ndarray:
        """Vertex ids (nf, 2) of each boundary facet."""
        els = self.elements
        local = {"bottom": (0, 1), "right": (1, 2), "top": (2, 3), "left": (3, 0)}
        out = np.empty((len(self.facet_elem), 2), dtype=int)
        for f, (e, edge) in enumerate(zip(self.facet_elem, self.facet_edge)):
            a, b = local[edge]
            out[f] = els[e, a], els[e, b]
        return out

    def locate(self, x, y) -> np.ndarray:
        """Element index containing each point (points on shared edges go to
        the element with the larger index, except on the max boundary)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        d = self.domain
        tol = 1e-12 * max(d.width, d.height)
        if np.any((x < d.x_min - tol) | (x > d.x_max + tol) | (y < d.y_min - tol) | (y > d.y_max + tol)):
            raise MeshError(f"point outside side-{self.side} domain")
        i = np.clip(np.searchsorted(self.xs, x, side="right") - 1, 0, self.nx - 1)
        j = np.clip(np.searchsorted(self.ys, y, side="right") - 1, 0, self.ny - 1)
        return j * self.nx + i

    def contains(self, x, y, tol: float = 1e-12) -> np.ndarray:
        d = self.domain
        s = tol * max(d.width, d.height)
        x, y = np.asarray(x), np.asarray(y)
        return (x >= d.x_min - s) & (x <= d.x_max + s) & (y >= d.y_min - s) & (y <= d.y_max + s)


def _grid(lo: float, hi: float, n: int, coords: Sequence[float] | None) -> np.ndarray:
    if coords is not None:
        c = np.asarray(coords, dtype=float)
        if c.ndim != 1 or len(c) < 2 or np.any(np.diff(c) <= 0):
            raise MeshError("grid coordinates must be strictly increasing")
        if not (np.isclose(c[0], lo) and np.isclose(c[-1], hi)):
            raise MeshError("grid coordinates must span the domain")
        c[0], c[-1] = lo, hi
        return c
    if int(n) != n or n < 1:
        raise MeshError(f"element count must be a positive integer, got {n}")
    return np.linspace(lo, hi, int(n) + 1)


def build_mesh(domain: RectDomain, nx: int, ny: int, tag_rules: Mapping[str, object],
               xs: Sequence[float] | None = None, ys: Sequence[float] | None = None) -> StructuredQuadMesh:
    """Build a tensor-grid mesh of ``domain`` and tag its boundary facets.

    ``xs``/``ys`` optionally give non-uniform grid lines; otherwise the grid is
    uniform with ``nx`` by ``ny`` elements.
    """
    if xs is None and (int(nx) != nx or nx < 1):
        raise MeshError(f"nx must be a positive integer, got {nx}")
    if ys is None and (int(ny) != ny or ny < 1):
        raise MeshError(f"ny must be a positive integer, got {ny}")
    rules = _normalize_rules(tag_rules)
    gx = _grid(domain.x_min, domain.x_max, nx, xs)
    gy = _grid(domain.y_min, domain.y_max, ny, ys)
    mx, my = len(gx) - 1, len(gy) - 1

    elems, edges, tags, ts = [], [], [], []
    for edge in EDGES:
        if edge in ("bottom", "top"):
            idx = np.arange(mx)
            el = idx + (0 if edge == "bottom" else (my - 1) * mx)
            t = np.column_stack([gx[:-1], gx[1:]])
        else:
            idx = np.arange(my)
            el = idx * mx + (0 if edge == "left" else mx - 1)
            t = np.column_stack([gy[:-1], gy[1:]])
        rule = rules[edge]
        if isinstance(rule, str):
            tg = [rule] * len(el)
        else:
            tg = _segment_tags(rule, t, domain, edge)
        elems.append(el)
        edges += [edge] * len(el)
        tags += tg
        ts.append(t)
    return StructuredQuadMesh(
        domain=domain, xs=gx, ys=gy, tag_rules=rules,
        facet_elem=np.concatenate(elems), facet_edge=np.array(edges),
        facet_tag=np.array(tags), facet_t=np.vstack(ts),
    )


def _segment_tags(rule, t, domain, edge) -> list[str]:
    _, _, lo, hi = domain.edge_line(edge)
    tol = 1e-12 * (hi - lo)
    segs = sorted(rule)
    if abs(segs[0][0] - lo) > tol or abs(segs[-1][1] - hi) > tol:
        raise MeshError(f"tag segments on edge {edge} do not cover the edge")
    for (a0, a1, _), (b0, b1, _) in zip(segs, segs[1:]):
        if abs(a1 - b0) > tol:
            raise MeshError(f"tag segments on edge {edge} leave a gap or overlap")
    out = []
    for t0, t1 in t:
        hit = [tag for a, b, tag in segs if t0 >= a - tol and t1 <= b + tol]
        if not hit:
            raise MeshError(f"facet [{t0}, {t1}] on edge {edge} straddles a tag boundary")
        out.append(hit[0])
    return out


@dataclass(frozen=True, eq=False)
class InterfacePairing:
    """Common refinement of the two sides' interface facets.

    Subsegment ``s`` spans ``[t0[s], t1[s]]`` along the interface line and lies
    inside facet ``elem1[s]`` of side 1 and ``elem2[s]`` of side 2; ``h1``,
    ``h2`` are the lengths of those owning facets.
    """

    axis: int  # 0: vertical interface (x fixed), 1: horizontal (y fixed)
    coord: float
    normal: np.ndarray  # unit normal pointing from side 1 into side 2
    edge1: str
    edge2: str
    t0: np.ndarray
    t1: np.ndarray
    elem1: np.ndarray
    elem2: np.ndarray
    h1: np.ndarray
    h2: np.ndarray

    def __len__(self) -> int:
        return len(self.t0)

    @property
    def lengths(self) -> np.ndarray:
        return self.t1 - self.t0

    @property
    def length(self) -> float:
        return float(self.t1[-1] - self.t0[0])

    @property
    def h(self) -> np.ndarray:
        """Local mesh size used in the interface weights: mean of both facets."""
        return 0.5 * (self.h1 + self.h2)

    def points(self, t) -> tuple[np.ndarray, np.ndarray]:
        """Physical coordinates of interface parameter values ``t``."""
        t = np.asarray(t, dtype=float)
        c = np.full_like(t, self.coord)
        return (c, t) if self.axis == 0 else (t, c)

    def midpoints(self) -> tuple[np.ndarray, np.ndarray]:
        return self.points(0.5 * (self.t0 + self.t1))


def _interface_facets(mesh: StructuredQuadMesh):
    f = mesh.facets_with_tag("interface")
    if len(f) == 0:
        raise MeshError(f"side {mesh.side} has no interface facets")
    edges = set(mesh.facet_edge[f])
    if len(edges) != 1:
        raise MeshError(f"side {mesh.side} interface spans several edges: {sorted(edges)}")
    edge = edges.pop()
    order = np.argsort(mesh.facet_t[f, 0])
    f = f[order]
    t = mesh.facet_t[f]
    if np.any(np.abs(t[1:, 0] - t[:-1, 1]) > 1e-12 * (t[-1, 1] - t[0, 0])):
        raise MeshError(f"side {mesh.side} interface is not a contiguous segment")
    return edge, f, t


def build_interface_pairing(mesh1: StructuredQuadMesh, mesh2: StructuredQuadMesh) -> InterfacePairing:
    """Overlay the interface facet partitions of two meshes."""
    if mesh1.side != 1 or mesh2.side != 2:
        raise MeshError("expected meshes of side 1 and side 2, in that order")
    edge1, f1, t1 = _interface_facets(mesh1)
    edge2, f2, t2 = _interface_facets(mesh2)
    if OPPOSITE[edge1] != edge2:
        raise MeshError(f"interface edges {edge1}/{edge2} are not facing each other")
    axis, c1, _, _ = mesh1.domain.edge_line(edge1)
    _, c2, _, _ = mesh2.domain.edge_line(edge2)
    if abs(c1 - c2) > 1e-12:
        raise MeshError(f"interface lines do not coincide (offset {abs(c1 - c2):.3g})")
    lo1, hi1, lo2, hi2 = t1[0, 0], t1[-1, 1], t2[0, 0], t2[-1, 1]
    if abs(lo1 - lo2) > 1e-12 or abs(hi1 - hi2) > 1e-12:
        raise MeshError("interface segments of the two sides differ")
    length = hi1 - lo1
    tol = 1e-12 * length

    br = np.sort(np.concatenate([t1[:, 0], t1[-1:, 1], t2[:, 0], t2[-1:, 1]]))
    keep = np.concatenate([[True], np.diff(br) > tol])
    br = br[keep]
    br[0], br[-1] = lo1, hi1
    a, b = br[:-1], br[1:]
    mid = 0.5 * (a + b)
    k1 = np.clip(np.searchsorted(t1[:, 0], mid, side="right") - 1, 0, len(f1) - 1)
    k2 = np.clip(np.searchsorted(t2[:, 0], mid, side="right") - 1, 0, len(f2) - 1)
    return InterfacePairing(
        axis=axis, coord=float(c1), normal=EDGE_NORMALS[edge1].copy(),
        edge1=edge1, edge2=edge2, t0=a, t1=b,
        elem1=mesh1.facet_elem[f1[k1]], elem2=mesh2.facet_elem[f2[k2]],
        h1=t1[k1, 1] - t1[k1, 0], h2=t2[k2, 1] - t2[k2, 0],
    )


@dataclass(frozen=True)
class TwoDomainGeometry:
    """Two tagged rectangles plus base resolutions; ``build(level)`` refines
    both sides uniformly by ``2**level``.

    ``grading`` optionally clusters grid lines toward the interface on each
    side: a ratio r > 1 makes the element next to the interface r times
    smaller than a uniform one, with geometric growth away from it.
    """

    omega1: RectDomain
    omega2: RectDomain
    tags1: dict
    tags2: dict
    resolution1: tuple[int, int]
    resolution2: tuple[int, int]
    grading: float = 1.0

    def build(self, level: int = 0) -> tuple[StructuredQuadMesh, StructuredQuadMesh]:
        f = 2 ** int(level)
        meshes = []
        for dom, tags, (nx, ny) in ((self.omega1, self.tags1, self.resolution1),
                                    (self.omega2, self.tags2, self.resolution2)):
            nx, ny = nx * f, ny * f
            xs = ys = None
            if self.grading != 1.0:
                edge = next(e for e in EDGES if _has_interface(tags[e]))
                xs, ys = _graded_lines(dom, nx, ny, edge, self.grading)
            meshes.append(build_mesh(dom, nx, ny, tags, xs=xs, ys=ys))
        return meshes[0], meshes[1]


def _has_interface(rule) -> bool:
    if isinstance(rule, str):
        return rule == "interface"
    return any(t == "interface" for _, _, t in rule)


def _graded_lines(dom: RectDomain, nx: int, ny: int, edge: str, ratio: float):
    axis, c, _, _ = dom.edge_line(edge)

    def graded(lo, hi, n, toward_hi):
        # geometric sizes with first/last size = uniform/ratio
        if n == 1:
            return np.array([lo, hi])
        q = _growth_factor(n, ratio)
        sizes = q ** np.arange(n)
        sizes *= (hi - lo) / sizes.sum()
        if toward_hi:
            sizes = sizes[::-1]
        return np.concatenate([[lo], lo + np.cumsum(sizes)])

    xs = ys = None
    if axis == 0:
        xs = graded(dom.x_min, dom.x_max, nx, toward_hi=(c == dom.x_max))
    else:
        ys = graded(dom.y_min, dom.y_max, ny, toward_hi=(c == dom.y_max))
    return xs, ys


def _growth_factor(n: int, ratio: float) -> float:
    # solve n * (q - 1) / (q**n - 1) = 1 / ratio for q > 1
    from scipy.optimize import brentq

    target = 1.0 / ratio
    f = lambda q: n * (q - 1.0) / (q ** n - 1.0) - target  # noqa: E731
    return brentq(f, 1.0 + 1e-12, 10.0)


def dump_mesh_csv(mesh: StructuredQuadMesh, out_dir: str, prefix: str | None = None) -> list[str]:
    """Write node, element and facet tables of ``mesh`` as CSV files."""
    os.makedirs(out_dir, exist_ok=True)
    prefix = prefix or f"mesh{mesh.side}"
    paths = [os.path.join(out_dir, f"{prefix}_{name}.csv") for name in ("nodes", "elements", "facets")]
    with open(paths[0], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "x", "y"])
        for i, (x, y) in enumerate(mesh.nodes):
            w.writerow([i, repr(float(x)), repr(float(y))])
    with open(paths[1], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "n0", "n1", "n2", "n3"])
        for i, row in enumerate(mesh.elements):
            w.writerow([i, *row.tolist()])
    with open(paths[2], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "element", "edge", "n0", "n1", "tag"])
        for i, (e, edge, (a, b), tag) in enumerate(zip(mesh.facet_elem, mesh.facet_edge,
                                                       mesh.facet_nodes(), mesh.facet_tag)):
            w.writerow([i, int(e), edge, int(a), int(b), tag])
    return paths
