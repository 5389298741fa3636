"""Complex sparse assembly of the interface Helmholtz problem.

Two interface treatments are available:

* ``nitsche``: the weighted Nitsche-type form whose interface part reads

      - (1 - lam z) ([[q]] {dp/dn} + [[p]] {dq/dn})
      - z (1 - lam z) {dp/dn} {dq/dn}
      + lam [[p]] [[q]],          z = zeta / (i kappa),  lam = (h/gamma + z)^-1

  which stays well defined for zeta = 0 (classic symmetric Nitsche coupling);
* ``standard``: the plain impedance term ``(i kappa / zeta) [[p]] [[q]]``.

Both are bilinear (no conjugation), so every matrix is complex symmetric.
Jumps use the fixed normal from side 1 to side 2: ``[[p]] = p1 - p2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import scipy.io
import scipy.sparse as sp

from .fespace import Discretization, QuadratureRule, edge_reference_points
from .mesh import InterfacePairing

METHODS = ("nitsche", "standard")
ZETA_FLOOR = 1e-12


class AssemblyError(ValueError):
    pass


class ResolutionError(AssemblyError):
    pass


class StandardMethodError(AssemblyError):
    pass


@dataclass(frozen=True)
class ImpedanceField:
    """Normalized transmission impedance along the interface.

    Evaluated by interface parameter ``t`` (the coordinate running along the
    interface line).  ``breaks``/``values`` describe a piecewise constant field
    with ``values[i]`` on ``[breaks[i], breaks[i+1])``.
    """

    kind: str = "constant"
    value: complex = 0j
    breaks: tuple = ()
    values: tuple = ()
    msd: tuple = ()  # (mass, damping, spring, rho, c, omega)

    def __post_init__(self):
        if self.kind not in ("constant", "piecewise", "msd"):
            raise AssemblyError(f"unknown impedance kind {self.kind!r}")
        if self.kind == "piecewise":
            if len(self.breaks) != len(self.values) + 1 or np.any(np.diff(self.breaks) <= 0):
                raise AssemblyError("piecewise impedance needs increasing breaks, one more than values")
        if self.kind == "msd" and len(self.msd) != 6:
            raise AssemblyError("mass-spring-damper impedance needs (m, d, k, rho, c, omega)")
        if np.any(np.real(self.samples()) < 0):
            raise AssemblyError("impedance must be passive (Re zeta >= 0)")

    @classmethod
    def constant(cls, z) -> "ImpedanceField":
        return cls("constant", complex(z))

    @classmethod
    def piecewise(cls, breaks, values) -> "ImpedanceField":
        return cls("piecewise", breaks=tuple(float(b) for b in breaks),
                   values=tuple(complex(v) for v in values))

    @classmethod
    def mass_spring_damper(cls, mass, damping, spring, rho, c, omega) -> "ImpedanceField":
        """zeta = (d + i (m omega - k / omega)) / (rho c), per unit area."""
        return cls("msd", msd=tuple(float(v) for v in (mass, damping, spring, rho, c, omega)))

    def samples(self) -> np.ndarray:
        if self.kind == "constant":
            return np.array([self.value])
        if self.kind == "piecewise":
            return np.array(self.values)
        m, d, k, rho, c, omega = self.msd
        return np.array([(d + 1j * (m * omega - k / omega)) / (rho * c)])

    def at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind == "piecewise":
            b = np.asarray(self.breaks)
            tol = 1e-12 * (b[-1] - b[0])
            if np.any((t < b[0] - tol) | (t > b[-1] + tol)):
                raise AssemblyError("interface point outside the impedance table")
            idx = np.clip(np.searchsorted(b, t, side="right") - 1, 0, len(self.values) - 1)
            return np.asarray(self.values)[idx]
        return np.full(t.shape, self.samples()[0], dtype=complex)


@dataclass(frozen=True)
class ProblemSpec:
    """Wave number, impedance, inflow data and discretization choices.

    ``g`` maps ``(side, edge)`` of an ``io`` boundary part to its complex inflow
    amplitude; unlisted ``io`` edges get ``g = 0``.  ``gamma=None`` means
    "estimate from the inverse inequality" (see ``verify.default_gamma``).
    """

    kappa: float
    zeta: ImpedanceField
    g: Mapping = field(default_factory=dict)
    method: str = "nitsche"
    order: int = 1
    gamma: float | None = None

    def __post_init__(self):
        if not (np.isfinite(self.kappa) and self.kappa > 0):
            raise AssemblyError(f"kappa must be positive, got {self.kappa}")
        if self.gamma is not None and not (self.gamma > 0):
            raise AssemblyError(f"gamma must be positive, got {self.gamma}")
        if self.method not in METHODS:
            raise AssemblyError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.order not in (1, 2, 3):
            raise AssemblyError(f"order must be 1, 2 or 3, got {self.order}")
        if self.method == "standard" and np.min(np.abs(self.zeta.samples())) < ZETA_FLOOR:
            raise StandardMethodError(
                "standard method needs |zeta| bounded away from zero; use method='nitsche' for a vanishing impedance")

    def with_(self, **changes) -> "ProblemSpec":
        from dataclasses import replace
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class ComplexSparseSystem:
    A: sp.csr_matrix
    b: np.ndarray
    disc: Discretization
    spec: ProblemSpec
    gamma: float | None
    coefficients: "InterfaceCoefficients | None"  # None for the standard method

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def symmetry_defect(self) -> float:
        """max |A - A^T| / max |A|."""
        d = self.A - self.A.T
        top = abs(d).max() if d.nnz else 0.0
        return float(top / abs(self.A).max())

    def write_matrix_market(self, path: str) -> None:
        scipy.io.mmwrite(path, self.A.tocoo(), field="complex", symmetry="general")


def compute_lambda(zeta, kappa, h, gamma):
    """Nitsche weight ``(h/gamma + zeta/(i kappa))^-1`` (vectorized)."""
    zeta = np.asarray(zeta, dtype=complex)
    denom = np.asarray(h, dtype=float) / gamma + zeta / (1j * kappa)
    if np.any(denom == 0):
        raise AssemblyError("h/gamma + zeta/(i kappa) vanishes; the resolution condition is violated")
    lam = 1.0 / denom
    return lam[()] if lam.ndim == 0 else lam


def resolution_limit(gamma: float, delta_minus: float, kappa: float) -> float:
    """Largest admissible mesh size gamma * delta / (4 kappa)."""
    return gamma * delta_minus / (4.0 * kappa)


@dataclass(frozen=True)
class ResolutionReport:
    ok: bool
    h0: float
    delta_minus: float  # min |zeta| over subsegments with Im zeta < 0 (inf if none)
    violations: tuple  # indices of subsegments with max(h1, h2) > h0

    def to_dict(self) -> dict:
        return {"ok": self.ok, "h0": self.h0, "delta_minus": self.delta_minus,
                "violations": list(self.violations)}


def segment_impedance(zeta: ImpedanceField, pairing: InterfacePairing) -> np.ndarray:
    """Impedance per subsegment, sampled at subsegment midpoints."""
    return zeta.at(0.5 * (pairing.t0 + pairing.t1))


def check_resolution(spec: ProblemSpec, pairing: InterfacePairing, gamma: float) -> ResolutionReport:
    z = segment_impedance(spec.zeta, pairing)
    minus = z.imag < 0
    if not np.any(minus):
        return ResolutionReport(True, np.inf, np.inf, ())
    delta = float(np.min(np.abs(z[minus])))
    if delta <= 0:
        raise ResolutionError("|zeta| vanishes where Im zeta < 0")
    h0 = resolution_limit(gamma, delta, spec.kappa)
    hmax = np.maximum(pairing.h1, pairing.h2)
    bad = np.flatnonzero(hmax > h0 * (1 + 1e-12))
    return ResolutionReport(len(bad) == 0, h0, delta, tuple(int(i) for i in bad))


@dataclass(frozen=True, eq=False)
class InterfaceCoefficients:
    """Per-subsegment constants entering the interface forms."""

    zeta: np.ndarray
    h: np.ndarray
    lam: np.ndarray  # Nitsche weight (also kept for the standard method's norms)
    beta: np.ndarray  # 1 - lam * zeta / (i kappa)
    mu: np.ndarray  # zeta / (i kappa) * beta

    @property
    def minus(self) -> np.ndarray:
        return self.zeta.imag < 0


def interface_coefficients(spec: ProblemSpec, pairing: InterfacePairing, gamma: float) -> InterfaceCoefficients:
    z = segment_impedance(spec.zeta, pairing)
    h = pairing.h
    lam = compute_lambda(z, spec.kappa, h, gamma)
    zk = z / (1j * spec.kappa)
    beta = 1.0 - lam * zk
    mu = zk * beta
    for name, arr in (("lambda", lam), ("beta", beta), ("mu", mu)):
        if not np.all(np.isfinite(arr)):
            raise AssemblyError(f"non-finite interface coefficient {name}")
    return InterfaceCoefficients(z, h, np.atleast_1d(lam), beta, mu)


# ---------------------------------------------------------------- volume parts

def _reference_volume(disc: Discretization):
    k = disc.k
    q = QuadratureRule.square(k + 2)
    phi, dxi, deta = disc.basis.tabulate(q.points[:, 0], q.points[:, 1])
    w = q.weights
    Kx = np.einsum("q,qa,qb->ab", w, dxi, dxi)
    Ky = np.einsum("q,qa,qb->ab", w, deta, deta)
    M = np.einsum("q,qa,qb->ab", w, phi, phi)
    return Kx, Ky, M


def _scatter(rows_dofs: np.ndarray, local: np.ndarray, n: int) -> sp.csr_matrix:
    """Sum local matrices (ne, nl, nl) into a global (n, n) matrix."""
    nl = rows_dofs.shape[1]
    r = np.repeat(rows_dofs, nl, axis=1).ravel()
    c = np.tile(rows_dofs, (1, nl)).ravel()
    return sp.coo_matrix((local.ravel(), (r, c)), shape=(n, n)).tocsr()


def volume_matrices(disc: Discretization) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Broken stiffness and mass matrices over both sides."""
    Kx, Ky, M = _reference_volume(disc)
    n = disc.n_dofs
    K_all, M_all = [], []
    for side in (1, 2):
        mesh = disc.mesh(side)
        _, _, hx, hy = mesh.element_box(np.arange(mesh.n_elements))
        Ke = (hy / hx)[:, None, None] * Kx + (hx / hy)[:, None, None] * Ky
        Me = (hx * hy / 4.0)[:, None, None] * M
        dofs = disc.cell_dofs(side)
        K_all.append(_scatter(dofs, Ke, n))
        M_all.append(_scatter(dofs, Me, n))
    return (K_all[0] + K_all[1]).tocsr(), (M_all[0] + M_all[1]).tocsr()


def io_boundary(disc: Discretization, g: Mapping) -> tuple[sp.csr_matrix, np.ndarray, float]:
    """Mass matrix on Gamma_io, load vector int g q, and int |g|^2."""
    k = disc.k
    s, w = np.polynomial.legendre.leggauss(k + 2)
    n = disc.n_dofs
    rows, cols, vals = [], [], []
    load = np.zeros(n, dtype=complex)
    g_sq = 0.0
    unknown = set(g) - {(side, e) for side in (1, 2) for e in ("bottom", "right", "top", "left")}
    if unknown:
        raise AssemblyError(f"inflow data given for unknown boundary parts {sorted(unknown)}")
    for side in (1, 2):
        mesh = disc.mesh(side)
        dofs = disc.cell_dofs(side)
        f = mesh.facets_with_tag("io")
        for edge in ("bottom", "right", "top", "left"):
            fe = f[mesh.facet_edge[f] == edge]
            gval = complex(g.get((side, edge), 0.0))
            if len(fe) == 0:
                if gval != 0:
                    raise AssemblyError(f"inflow data on side {side} {edge} edge, which has no io facets")
                continue
            xi, eta = edge_reference_points(edge, s)
            phi, _, _ = disc.basis.tabulate(xi, eta)
            E = np.einsum("q,qa,qb->ab", w, phi, phi)
            m = np.einsum("q,qa->a", w, phi)
            L = mesh.facet_t[fe, 1] - mesh.facet_t[fe, 0]
            el_dofs = dofs[mesh.facet_elem[fe]]
            loc = (L / 2.0)[:, None, None] * E
            nl = el_dofs.shape[1]
            rows.append(np.repeat(el_dofs, nl, axis=1).ravel())
            cols.append(np.tile(el_dofs, (1, nl)).ravel())
            vals.append(loc.ravel())
            if gval != 0:
                np.add.at(load, el_dofs.ravel(), (gval * (L / 2.0)[:, None] * m).ravel())
                g_sq += abs(gval) ** 2 * float(L.sum())
    if rows:
        R = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)).tocsr()
    else:
        R = sp.csr_matrix((n, n))
    return R, load, g_sq


# ------------------------------------------------------------- interface parts

@dataclass(frozen=True, eq=False)
class InterfaceTables:
    """Jump and average-flux tables on interface quadrature points.

    ``J`` and ``F`` have shape (ns, nq, 2*n_local): local DOF order is side-1
    element DOFs followed by side-2 element DOFs (``dofs``).  ``w`` holds the
    physical quadrature weights (ns, nq).
    """

    dofs: np.ndarray
    J: np.ndarray
    F: np.ndarray
    w: np.ndarray


def interface_tables(disc: Discretization, n_points: int | None = None) -> InterfaceTables:
    pr = disc.pairing
    nq = n_points or disc.k + 2
    s, w = np.polynomial.legendre.leggauss(nq)
    half = 0.5 * pr.lengths
    t = 0.5 * (pr.t0 + pr.t1)[:, None] + half[:, None] * s[None, :]
    d1, p1, n1 = disc.interface_tables(1, t)
    d2, p2, n2 = disc.interface_tables(2, t)
    J = np.concatenate([p1, -p2], axis=2)
    F = 0.5 * np.concatenate([n1, n2], axis=2)
    return InterfaceTables(np.concatenate([d1, d2], axis=1), J, F, half[:, None] * w[None, :])


def interface_matrix(disc: Discretization, c_jj=None, c_sym=None, c_ff=None,
                     tables: InterfaceTables | None = None) -> sp.csr_matrix:
    """Assemble sum over subsegments of

        c_jj [[p]][[q]] + c_sym ([[p]]{dq/dn} + {dp/dn}[[q]]) + c_ff {dp/dn}{dq/dn}

    with per-subsegment constant coefficients (any of them may be None).
    """
    tb = tables or interface_tables(disc)
    ns, _, nl = tb.J.shape
    loc = np.zeros((ns, nl, nl), dtype=complex)
    if c_jj is not None:
        loc += np.asarray(c_jj)[:, None, None] * np.einsum("sq,sqa,sqb->sab", tb.w, tb.J, tb.J)
    if c_sym is not None:
        JF = np.einsum("sq,sqa,sqb->sab", tb.w, tb.J, tb.F)
        loc += np.asarray(c_sym)[:, None, None] * (JF + JF.transpose(0, 2, 1))
    if c_ff is not None:
        loc += np.asarray(c_ff)[:, None, None] * np.einsum("sq,sqa,sqb->sab", tb.w, tb.F, tb.F)
    return _scatter(tb.dofs, loc, disc.n_dofs)


def _resolve_gamma(spec: ProblemSpec, disc: Discretization) -> float:
    if spec.gamma is not None:
        return float(spec.gamma)
    from .verify import default_gamma
    return default_gamma(disc)


def _base(spec: ProblemSpec, disc: Discretization):
    if disc.k != spec.order:
        raise AssemblyError(f"discretization order {disc.k} does not match problem order {spec.order}")
    K, M = volume_matrices(disc)
    R, load, _ = io_boundary(disc, spec.g)
    A0 = K - spec.kappa ** 2 * M + 1j * spec.kappa * R
    return A0.tocsr(), 2j * spec.kappa * load


def assemble_nitsche(spec: ProblemSpec, disc: Discretization, *, enforce_resolution: bool = True) -> ComplexSparseSystem:
    gamma = _resolve_gamma(spec, disc)
    if enforce_resolution:
        rep = check_resolution(spec, disc.pairing, gamma)
        if not rep.ok:
            raise ResolutionError(
                f"interface mesh too coarse for the surface-wave layer: h0 = {rep.h0:.4g}, "
                f"{len(rep.violations)} subsegment(s) violate it")
    co = interface_coefficients(spec, disc.pairing, gamma)
    A0, b = _base(spec, disc)
    I = interface_matrix(disc, c_jj=co.lam, c_sym=-co.beta, c_ff=-co.mu)
    return ComplexSparseSystem((A0 + I).tocsr(), b, disc, spec, gamma, co)


def assemble_standard(spec: ProblemSpec, disc: Discretization) -> ComplexSparseSystem:
    z = segment_impedance(spec.zeta, disc.pairing)
    if np.any(np.abs(z) < ZETA_FLOOR):
        raise StandardMethodError(
            "standard method needs |zeta| bounded away from zero on every subsegment; use method='nitsche'")
    A0, b = _base(spec, disc)
    I = interface_matrix(disc, c_jj=1j * spec.kappa / z)
    return ComplexSparseSystem((A0 + I).tocsr(), b, disc, spec, spec.gamma, None)


def assemble(spec: ProblemSpec, disc: Discretization, **kw) -> ComplexSparseSystem:
    if spec.method == "nitsche":
        return assemble_nitsche(spec, disc, **kw)
    return assemble_standard(spec, disc)


@dataclass(frozen=True, eq=False)
class NormMatrices:
    """Hermitian-form matrices of the energy-type norms (all real symmetric
    except where |lambda| enters, which is still real)."""

    K: sp.csr_matrix  # int |grad p|^2
    M: sp.csr_matrix  # int |p|^2
    flux: sp.csr_matrix  # int_Gamma h |{dp/dn}|^2
    jump_lam: sp.csr_matrix  # int_Gamma |lambda| |[[p]]|^2
    jump_minus: sp.csr_matrix  # int over Im zeta < 0 of |[[p]]|^2
    gamma: float
    kappa: float
    delta_minus: float

    def triple(self) -> sp.csr_matrix:
        return (self.K + self.kappa ** 2 * self.M + self.flux / self.gamma + self.jump_lam).tocsr()

    def u_norm(self) -> sp.csr_matrix:
        U = self.kappa * self.M
        if np.isfinite(self.delta_minus):
            U = U + self.jump_minus / self.delta_minus
        return U.tocsr()


def hermitian_form(S: sp.spmatrix, p: np.ndarray) -> float:
    return float(np.real(np.vdot(p, S @ p)))


def norm_matrices(spec: ProblemSpec, disc: Discretization, gamma: float) -> NormMatrices:
    K, M = volume_matrices(disc)
    co = interface_coefficients(spec, disc.pairing, gamma)
    tb = interface_tables(disc)
    flux = interface_matrix(disc, c_ff=co.h, tables=tb).real.tocsr()
    jl = interface_matrix(disc, c_jj=np.abs(co.lam), tables=tb).real.tocsr()
    jm = interface_matrix(disc, c_jj=co.minus.astype(float), tables=tb).real.tocsr()
    minus = co.minus
    delta = float(np.min(np.abs(co.zeta[minus]))) if np.any(minus) else np.inf
    return NormMatrices(K, M, flux, jl, jm, gamma, spec.kappa, delta)
