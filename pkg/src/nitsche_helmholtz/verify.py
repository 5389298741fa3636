"""Exact solutions, error norms and numerical checks of the method's
stability and consistency properties."""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .assembly import (
    ImpedanceField,
    NormMatrices,
    ProblemSpec,
    assemble,
    assemble_nitsche,
    check_resolution,
    compute_lambda,
    hermitian_form,
    interface_coefficients,
    interface_matrix,
    interface_tables,
    io_boundary,
    norm_matrices,
    segment_impedance,
    volume_matrices,
)
from .fespace import Discretization, QuadratureRule
from .linsolve import DiscreteField, SolverError, solve
from .mesh import EDGES, RectDomain, TwoDomainGeometry, build_mesh

GAMMA_SAFETY = 16 * 1.25


# ------------------------------------------------------------ exact solution

@dataclass(frozen=True)
class WaveguideExact:
    """Plane-wave solution in the strip -1 < x < 1 with the interface at x = 0.

    Incoming unit wave from the left, reflected part ``zeta/(2+zeta)``,
    transmitted part ``2/(2+zeta)``; both ends absorb outgoing waves.
    """

    kappa: float
    zeta: complex

    def __post_init__(self):
        if self.zeta == -2:
            raise ValueError("zeta = -2 is a pole of the transmission coefficient")

    def value(self, x, y, side: int):
        x = np.asarray(x, dtype=float)
        k, z = self.kappa, complex(self.zeta)
        if side == 1:
            return np.exp(-1j * k * (x + 1)) + z / (2 + z) * np.exp(1j * k * (x - 1))
        return 2 / (2 + z) * np.exp(-1j * k * (x + 1))

    def gradient(self, x, y, side: int):
        x = np.asarray(x, dtype=float)
        k, z = self.kappa, complex(self.zeta)
        if side == 1:
            dx = -1j * k * np.exp(-1j * k * (x + 1)) + 1j * k * z / (2 + z) * np.exp(1j * k * (x - 1))
        else:
            dx = -1j * k * 2 / (2 + z) * np.exp(-1j * k * (x + 1))
        return np.stack([dx, np.zeros_like(dx)], axis=-1)


def exact_waveguide(kappa: float, zeta: complex, point, side: int):
    """Value and gradient of the waveguide solution at one point."""
    ex = WaveguideExact(kappa, zeta)
    x, y = point
    return complex(ex.value(x, y, side)), ex.gradient(x, y, side)


def interpolate(fn: Callable, disc: Discretization) -> DiscreteField:
    """Nodal interpolant of ``fn(x, y, side)`` on each side separately."""
    c = np.zeros(disc.n_dofs, dtype=complex)
    for side in (1, 2):
        xy = disc.dof_coordinates(side)
        c[disc.dofmap.side_slice(side)] = fn(xy[:, 0], xy[:, 1], side)
    return DiscreteField(c, disc)


# ---------------------------------------------------------------- error norms

@dataclass(frozen=True)
class ErrorReport:
    l2: float
    triple: float
    balance_residual: float
    dofs: int
    h: float

    def as_row(self) -> dict:
        return {"h": self.h, "dofs": self.dofs, "err_L2": self.l2,
                "err_triple": self.triple, "balance_residual": self.balance_residual}


def _volume_points(disc: Discretization, side: int, nq: int):
    q = QuadratureRule.square(nq)
    mesh = disc.mesh(side)
    x0, y0, hx, hy = mesh.element_box(np.arange(mesh.n_elements))
    X = x0[:, None] + (q.points[None, :, 0] + 1) * hx[:, None] / 2
    Y = y0[:, None] + (q.points[None, :, 1] + 1) * hy[:, None] / 2
    W = q.weights[None, :] * (hx * hy / 4)[:, None]
    phi, dxi, deta = disc.basis.tabulate(q.points[:, 0], q.points[:, 1])
    return X, Y, W, phi, dxi, deta, hx, hy


def _field_on_volume(coeffs, disc, side, tabs):
    X, Y, W, phi, dxi, deta, hx, hy = tabs
    c = coeffs[disc.cell_dofs(side)]  # (ne, nl)
    v = c @ phi.T
    gx = (c @ dxi.T) * (2 / hx)[:, None]
    gy = (c @ deta.T) * (2 / hy)[:, None]
    return v, gx, gy


def error_norms(field: DiscreteField, exact, spec: ProblemSpec, gamma: float | None = None) -> ErrorReport:
    """Broken L2 and triple-norm errors of ``field`` against ``exact``.

    ``exact`` needs ``value(x, y, side)`` and ``gradient(x, y, side)``.
    Interface weights (h, |lambda|) are the ones used in assembly.
    """
    disc = field.disc
    gamma = _gamma(spec, disc, gamma)
    nq = disc.k + 3
    l2 = grad2 = 0.0
    for side in (1, 2):
        tabs = _volume_points(disc, side, nq)
        X, Y, W = tabs[:3]
        v, gx, gy = _field_on_volume(field.coeffs, disc, side, tabs)
        ev = exact.value(X, Y, side)
        eg = exact.gradient(X, Y, side)
        l2 += float(np.sum(W * np.abs(ev - v) ** 2))
        grad2 += float(np.sum(W * (np.abs(eg[..., 0] - gx) ** 2 + np.abs(eg[..., 1] - gy) ** 2)))

    pr = disc.pairing
    co = interface_coefficients(spec, pr, gamma)
    s, w = np.polynomial.legendre.leggauss(nq)
    half = 0.5 * pr.lengths
    t = 0.5 * (pr.t0 + pr.t1)[:, None] + half[:, None] * s[None, :]
    x, y = pr.points(t)
    errs = {}
    for side in (1, 2):
        v, dn = field.trace_and_flux(t.ravel(), side)
        ev = exact.value(x.ravel(), y.ravel(), side)
        eg = exact.gradient(x.ravel(), y.ravel(), side) @ pr.normal
        errs[side] = ((ev - v).reshape(t.shape), (eg - dn).reshape(t.shape))
    jump = errs[1][0] - errs[2][0]
    avg = 0.5 * (errs[1][1] + errs[2][1])
    W = half[:, None] * w[None, :]
    flux_term = float(np.sum(W * co.h[:, None] * np.abs(avg) ** 2)) / gamma
    jump_term = float(np.sum(W * np.abs(co.lam)[:, None] * np.abs(jump) ** 2))
    triple = math.sqrt(grad2 + spec.kappa ** 2 * l2 + flux_term + jump_term)
    bal = balance_residual(field, spec)
    h = max(disc.mesh1.h_max, disc.mesh2.h_max)
    return ErrorReport(math.sqrt(l2), triple, bal, disc.n_dofs, h)


def l2_norm(field: DiscreteField) -> float:
    _, M = volume_matrices(field.disc)
    return math.sqrt(hermitian_form(M, field.coeffs))


# ------------------------------------------------------------- balance law

def balance_terms(field: DiscreteField, spec: ProblemSpec) -> tuple[float, float, float]:
    """(int |g|^2, int |p - g|^2 over Gamma_io, int Re(1/zeta) |[[p]]|^2)."""
    disc = field.disc
    R, load, g_sq = io_boundary(disc, spec.g)
    p = field.coeffs
    # int |p - g|^2 = int |p|^2 - 2 Re int g conj(p) + int |g|^2
    out = hermitian_form(R, p) - 2 * float(np.real(np.vdot(p, load))) + g_sq
    z = segment_impedance(spec.zeta, disc.pairing)
    re_inv = np.where(np.abs(z) > 0, np.real(1 / np.where(z == 0, 1, z)), 0.0)
    loss = hermitian_form(interface_matrix(disc, c_jj=re_inv).real, p)
    return g_sq, out, loss


def balance_residual(field: DiscreteField, spec: ProblemSpec) -> float:
    g_sq, out, loss = balance_terms(field, spec)
    return abs(g_sq - out - loss)


# -------------------------------------------------------- weak flux continuity

def make_probes(disc: Discretization, n: int, seed: int = 0) -> list[np.ndarray]:
    """Discrete H^1_0 test functions that are continuous across the interface.

    Products of sines over the bounding box of both subdomains, interpolated
    on each side.  Needs node-matching interface facets.
    """
    pr = disc.pairing
    if not (np.allclose(pr.h1, pr.h2) and len(pr) == len(disc.mesh1.facets_with_tag("interface"))):
        raise ValueError("continuous probes need matching interface meshes")
    doms = [disc.mesh1.domain, disc.mesh2.domain]
    X0, X1 = min(d.x_min for d in doms), max(d.x_max for d in doms)
    Y0, Y1 = min(d.y_min for d in doms), max(d.y_max for d in doms)
    if not np.isclose(sum(d.width * d.height for d in doms), (X1 - X0) * (Y1 - Y0), rtol=1e-12):
        raise ValueError("sine probes need the two subdomains to tile a rectangle")
    # keep the modes resolved by the coarser lattice so no probe interpolates to zero
    lat = [np.diff(c).max() for side in (1, 2) for c in _lattice(disc, side)]
    step = max(lat)
    mmax = max(1, min(5, int((X1 - X0) / step) // 2))
    lmax = max(1, min(5, int((Y1 - Y0) / step) // 2))
    rng = np.random.default_rng(seed)
    probes = []
    for _ in range(n):
        m, l = rng.integers(1, mmax + 1), rng.integers(1, lmax + 1)
        ph = rng.uniform(0, 2 * np.pi)

        def w(x, y, side, m=m, l=l, ph=ph):
            return np.exp(1j * ph) * np.sin(m * np.pi * (x - X0) / (X1 - X0)) * np.sin(l * np.pi * (y - Y0) / (Y1 - Y0))
        c = interpolate(w, disc).coeffs
        if np.abs(c).max() < 1e-8:
            raise ValueError("mesh has no interior lattice nodes for the probes")
        probes.append(c)
    return probes


def _lattice(disc: Discretization, side: int):
    from .fespace import lattice_coordinates
    return lattice_coordinates(disc.mesh(side), disc.k)


def _outer_boundary_dofs(disc: Discretization) -> np.ndarray:
    pr = disc.pairing
    out = []
    for side in (1, 2):
        b = disc.boundary_dofs(side)
        xy = disc.dof_coordinates(side)[b - disc.dofmap.offset(side)]
        fixed, along = xy[:, pr.axis], xy[:, 1 - pr.axis]
        on_if = (np.abs(fixed - pr.coord) < 1e-12) & (along >= pr.t0[0] - 1e-12) & (along <= pr.t1[-1] + 1e-12)
        out.append(b[~on_if])
    return np.concatenate(out)


def weak_flux_residual(field: DiscreteField, spec: ProblemSpec, probes: Sequence[np.ndarray]) -> float:
    """max over probes w of |sum_i (grad p, grad w)_i - kappa^2 (p, w)_i| / ||w||_H1.

    For probes with zero jump this is the pairing of the difference of the two
    one-sided weak fluxes with w.
    """
    disc = field.disc
    K, M = volume_matrices(disc)
    Jm = interface_matrix(disc, c_jj=np.ones(len(disc.pairing))).real
    bnd = _outer_boundary_dofs(disc)
    L = (K - spec.kappa ** 2 * M).tocsr()
    worst = 0.0
    for w in probes:
        w = np.asarray(w)
        scale = np.abs(w).max()
        if np.abs(w[bnd]).max(initial=0) > 1e-12 * scale:
            raise ValueError("probe does not vanish on the outer boundary")
        h1 = math.sqrt(hermitian_form(K + M, w))
        if h1 == 0:
            raise ValueError("zero probe")
        if hermitian_form(Jm, w) > 1e-20 * h1 ** 2:
            raise ValueError("probe jumps across the interface")
        worst = max(worst, abs(w @ (L @ field.coeffs)) / h1)
    return worst


# -------------------------------------------------------- inverse inequality

MAX_DENSE_DOFS = 4000


def estimate_inverse_constant(disc: Discretization) -> float:
    """Largest ratio int_Gamma h |{dp/dn}|^2 / int |grad p|^2 over V_h.

    Dense generalized eigenproblem on the complement of the per-side
    constants (the kernel of the broken stiffness matrix).
    """
    n = disc.n_dofs
    if n > MAX_DENSE_DOFS:
        raise ValueError(f"{n} DOFs is too many for the dense eigenproblem (max {MAX_DENSE_DOFS})")
    K, _ = volume_matrices(disc)
    B = interface_matrix(disc, c_ff=disc.pairing.h).real
    K, B = K.toarray(), B.toarray()
    C = np.zeros((n, 2))
    for side in (1, 2):
        C[disc.dofmap.side_slice(side), side - 1] = 1.0
    Q, _ = np.linalg.qr(C, mode="complete")
    Qc = Q[:, 2:]
    Kr = Qc.T @ K @ Qc
    Br = Qc.T @ B @ Qc
    Kr = 0.5 * (Kr + Kr.T)
    Br = 0.5 * (Br + Br.T)
    try:
        mu = scipy.linalg.eigh(Br, Kr, eigvals_only=True, subset_by_index=[n - 3, n - 3])
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise RuntimeError(f"inverse-constant eigenproblem failed: {exc}") from None
    return float(mu[0])


def _interface_patch(disc: Discretization, n_normal: int = 4) -> Discretization:
    """Small mesh pair with the same element shapes next to the interface."""
    pr = disc.pairing
    meshes = []
    N = []
    for side in (1, 2):
        mesh = disc.mesh(side)
        f = mesh.facets_with_tag("interface")
        N.append(len(f))
    g = math.gcd(*N)
    units = [N[0] // g, N[1] // g]
    c = max(1, math.ceil(2 / min(units)))
    units = [u * c for u in units]
    length = pr.length * units[0] / N[0]
    t0 = pr.t0[0]
    for side, edge in ((1, pr.edge1), (2, pr.edge2)):
        mesh = disc.mesh(side)
        normal_lines = mesh.xs if pr.axis == 0 else mesh.ys
        sizes = np.diff(normal_lines)
        if edge in ("left", "bottom"):
            near = sizes[:n_normal]
            lines = pr.coord + np.concatenate([[0], np.cumsum(near)])
        else:
            near = sizes[::-1][:n_normal]
            lines = pr.coord - np.concatenate([[0], np.cumsum(near)])[::-1]
        tang = np.linspace(t0, t0 + length, units[side - 1] + 1)
        if pr.axis == 0:
            dom = RectDomain(lines[0], lines[-1], tang[0], tang[-1], side)
            xs, ys = lines, tang
        else:
            dom = RectDomain(tang[0], tang[-1], lines[0], lines[-1], side)
            xs, ys = tang, lines
        tags = {e: "s" for e in EDGES}
        tags[edge] = "interface"
        meshes.append(build_mesh(dom, len(xs) - 1, len(ys) - 1, tags, xs=xs, ys=ys))
    return Discretization.build(meshes[0], meshes[1], disc.k)


@lru_cache(maxsize=64)
def _patch_constant(key) -> float:
    disc = _PATCH_CACHE.pop(key)
    return estimate_inverse_constant(disc)


_PATCH_CACHE: dict = {}


def default_gamma(disc: Discretization) -> float:
    """16 * 1.25 * C_I, with C_I estimated on an interface patch."""
    patch = _interface_patch(disc)
    key = (patch.k, tuple(np.round(patch.mesh1.xs - patch.mesh1.xs[0], 14)),
           tuple(np.round(patch.mesh1.ys - patch.mesh1.ys[0], 14)),
           tuple(np.round(patch.mesh2.xs - patch.mesh1.xs[0], 14)),
           tuple(np.round(patch.mesh2.ys - patch.mesh1.ys[0], 14)))
    _PATCH_CACHE[key] = patch
    return GAMMA_SAFETY * _patch_constant(key)


def inverse_constant(disc: Discretization) -> float:
    """C_I on the mesh itself when small enough, else on an interface patch."""
    if disc.n_dofs <= MAX_DENSE_DOFS:
        return estimate_inverse_constant(disc)
    return default_gamma(disc) / GAMMA_SAFETY


def _gamma(spec: ProblemSpec, disc: Discretization, gamma: float | None) -> float:
    if gamma is not None:
        return float(gamma)
    if spec.gamma is not None:
        return float(spec.gamma)
    return default_gamma(disc)


# --------------------------------------------------------- lambda properties

@dataclass
class LambdaSuiteReport:
    n_samples: int
    identity_max: float  # max relative defect of 1 - lam z = (h/gamma) lam
    violations: dict
    sharp_bound_max: float  # max |lam| delta / kappa on Gamma^- (sqrt(2) expected)

    @property
    def ok(self) -> bool:
        return self.identity_max <= 1e-14 and not any(self.violations.values())

    def to_dict(self) -> dict:
        return {"ok": self.ok, "n_samples": self.n_samples, "identity_max": self.identity_max,
                "violations": dict(self.violations), "sharp_bound_max": self.sharp_bound_max}


def sample_admissible(n: int, seed: int = 0):
    """Random (zeta, kappa, h, gamma, delta) satisfying the resolution condition.

    ``delta`` is a lower bound of |zeta| (only meaningful where Im zeta < 0).
    """
    rng = np.random.default_rng(seed)
    kappa = 10 ** rng.uniform(-1, 2.5, n)
    gamma = 10 ** rng.uniform(0, 2.5, n)
    r = 10 ** rng.uniform(-3, 1.5, n)
    ang = rng.uniform(-np.pi / 2, np.pi / 2, n)
    zeta = r * np.exp(1j * ang)
    zeta[rng.random(n) < 0.05] = 0.0
    zeta.real[rng.random(n) < 0.1] = 0.0
    delta = np.abs(zeta) * rng.uniform(0.05, 1.0, n)
    # pointwise mesh-size ceiling gamma |zeta|^2 / (4 kappa |Im zeta|) where Im zeta < 0
    hmax = np.where(zeta.imag < 0, gamma * np.abs(zeta) ** 2 / (4 * kappa * np.maximum(-zeta.imag, 1e-300)), np.inf)
    h = np.where(np.isfinite(hmax), hmax * rng.uniform(1e-3, 1.0, n), 10 ** rng.uniform(-4, 0, n))
    return zeta, kappa, h, gamma, delta


def lambda_property_suite(n: int = 10_000, seed: int = 0, rtol: float = 1e-12) -> LambdaSuiteReport:
    zeta, kappa, h, gamma, delta = sample_admissible(n, seed)
    lam = compute_lambda(zeta, kappa, h, gamma)
    z = zeta / (1j * kappa)
    lhs = 1 - lam * z
    rhs = h / gamma * lam
    scale = np.maximum.reduce([np.ones(n), np.abs(lam * z), np.abs(rhs)])
    ident = np.abs(lhs - rhs) / scale
    a = np.abs(lam)
    minus = zeta.imag < 0
    delta = np.where(minus, delta, np.inf)
    split = lam.real + lam.imag - 0.5 * a
    slack = 1 + rtol
    v = {
        "lambda_positive": int(np.sum(~(a > 0))),
        "lambda_le_gamma_over_h": int(np.sum(a > gamma / h * slack)),
        "flux_weight_le_2h_over_gamma": int(np.sum(np.abs(z * (1 - lam * z)) > 2 * h / gamma * slack)),
        "lambda_le_2kappa_over_delta": int(np.sum(minus & (a > 2 * kappa / delta * slack))),
        "split_bound": int(np.sum(np.where(minus, split < -3 * kappa / delta * slack - rtol * a,
                                           split < 0.5 * a - rtol * a))),
    }
    sharp = float(np.max(a[minus] * delta[minus] / kappa[minus])) if np.any(minus) else 0.0
    return LambdaSuiteReport(n, float(ident.max()), v, sharp)


# ------------------------------------------------------------------- Garding

@dataclass
class GardingReport:
    min_ratio: float
    n_samples: int
    gamma: float
    c_inverse: float
    h0: float
    resolution_ok: bool
    gamma_ok: bool
    failures: list = field(default_factory=list)  # seeds of violating samples

    @property
    def ok(self) -> bool:
        return not self.failures and self.resolution_ok and self.gamma_ok

    def to_dict(self) -> dict:
        return {"ok": self.ok, "min_ratio": self.min_ratio, "n_samples": self.n_samples,
                "gamma": self.gamma, "c_inverse": self.c_inverse, "h0": self.h0,
                "resolution_ok": self.resolution_ok, "gamma_ok": self.gamma_ok,
                "failures": list(self.failures)}


def garding_ratios(A, nm: NormMatrices, vectors) -> np.ndarray:
    """(|a(p, conj p)| + 2 kappa ||Jp||_U^2) / (|||p|||^2 / 4) for each vector."""
    T, U = nm.triple(), nm.u_norm()
    out = []
    for p in vectors:
        lhs = abs(np.vdot(p, A @ p)) + 2 * nm.kappa * hermitian_form(U, p)
        rhs = 0.25 * hermitian_form(T, p)
        out.append(np.inf if rhs == 0 else lhs / rhs)
    return np.array(out)


def _garding_sample(disc: Discretization, kappa: float, rng, smooth: bool) -> np.ndarray:
    """White-noise DOFs, or a few plane waves with |k| <= 2 kappa drawn
    independently per side (so the sample jumps across the interface)."""
    n = disc.n_dofs
    if not smooth:
        return rng.standard_normal(n) + 1j * rng.standard_normal(n)
    out = np.zeros(n, dtype=complex)
    for side in (1, 2):
        xy = disc.dof_coordinates(side)
        for _ in range(3):
            kv = 2 * kappa * rng.uniform(0, 1) * np.array([np.cos(a := rng.uniform(0, 2 * np.pi)), np.sin(a)])
            amp = rng.standard_normal() + 1j * rng.standard_normal()
            out[disc.dofmap.side_slice(side)] += amp * np.exp(1j * xy @ kv)
    return out


def garding_check(spec: ProblemSpec, disc: Discretization, n_samples: int = 200, seed: int = 0,
                  gamma: float | None = None) -> GardingReport:
    """Sample the discrete Garding inequality on random complex DOF vectors.

    Even-numbered samples are white noise, odd ones are smooth per-side plane
    wave mixtures.  Sample ``i`` is reproducible from the seed ``[seed, i]``.

    With ``gamma=None`` the penalty is 16 * 1.25 * C_I with C_I estimated on
    ``disc`` itself (or on an interface patch for large meshes).
    """
    c_inv = inverse_constant(disc)
    if gamma is None:
        gamma = spec.gamma if spec.gamma is not None else GAMMA_SAFETY * c_inv
    spec = spec.with_(gamma=gamma, method="nitsche")
    res = check_resolution(spec, disc.pairing, gamma)
    sysm = assemble_nitsche(spec, disc, enforce_resolution=False)
    nm = norm_matrices(spec, disc, gamma)
    vecs, seeds = [], []
    for i in range(n_samples):
        vecs.append(_garding_sample(disc, spec.kappa, np.random.default_rng([seed, i]), smooth=i % 2 == 1))
        seeds.append([seed, i])
    ratios = garding_ratios(sysm.A, nm, vecs)
    fails = [s for s, r in zip(seeds, ratios) if r < 1]
    return GardingReport(float(ratios.min()) if len(ratios) else np.inf, n_samples, gamma, c_inv,
                         res.h0, res.ok, gamma >= 16 * c_inv, fails)


# ------------------------------------------------------------- consistency

def consistency_residual(spec: ProblemSpec, disc: Discretization, exact) -> float:
    """max_j |(b - A pi_h p)_j| / ||A[:, j]||_2 for the interpolated exact solution."""
    sysm = assemble(spec, disc)
    pi = interpolate(exact.value, disc)
    r = sysm.b - sysm.A @ pi.coeffs
    A = sysm.A.tocsc()
    col = np.sqrt(np.asarray(abs(A).power(2).sum(axis=0))).ravel()
    return float(np.max(np.abs(r) / col))


# -------------------------------------------------------------- convergence

def fit_slope(h, err, last: int = 3) -> float:
    """Least-squares slope of log(err) against log(h) over the last levels."""
    h = np.asarray(h, dtype=float)[-last:]
    e = np.asarray(err, dtype=float)[-last:]
    return float(np.polyfit(np.log(h), np.log(e), 1)[0])


@dataclass
class ConvergenceTable:
    method: str
    k: int
    kappa: float
    zeta: complex
    rows: list = field(default_factory=list)  # ErrorReport per level

    @property
    def h(self):
        return [r.h for r in self.rows]

    def slope(self, norm: str = "l2", last: int = 3) -> float:
        return fit_slope(self.h, [getattr(r, norm) for r in self.rows], last)

    def local_rates(self, norm: str) -> list:
        e = [getattr(r, norm) for r in self.rows]
        return [None] + [math.log(e[i] / e[i - 1]) / math.log(self.h[i] / self.h[i - 1])
                         for i in range(1, len(e))]

    def filename(self) -> str:
        return f"conv_{self.method}_k{self.k}_kappa{self.kappa:g}.csv"

    def write_csv(self, path: str) -> str:
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        rl, rt = self.local_rates("l2"), self.local_rates("triple")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["level", "h", "dofs", "err_L2", "err_triple", "rate_L2", "rate_triple", "balance_residual"])
            for i, r in enumerate(self.rows):
                w.writerow([i, f"{r.h:.12g}", r.dofs, f"{r.l2:.12g}", f"{r.triple:.12g}",
                            "" if rl[i] is None else f"{rl[i]:.6f}",
                            "" if rt[i] is None else f"{rt[i]:.6f}", f"{r.balance_residual:.6g}"])
        return path


@dataclass
class ConvergenceStudy:
    tables: dict  # method -> ConvergenceTable
    distance_l2: list = field(default_factory=list)  # ||p_nitsche - p_standard||_L2 per level


class ConvergenceError(RuntimeError):
    def __init__(self, msg, partial):
        super().__init__(msg)
        self.partial = partial


def convergence_study(geometry: TwoDomainGeometry, spec: ProblemSpec, levels: Sequence[int], exact,
                      methods: Sequence[str] = ("nitsche",)) -> ConvergenceStudy:
    """Solve on each refinement level and tabulate errors against ``exact``.

    The triple norm of every method uses the penalty of the Nitsche form.
    """
    if len(levels) < 4:
        raise ValueError("a convergence study needs at least 4 refinement levels")
    tables = {m: ConvergenceTable(m, spec.order, spec.kappa, complex(spec.zeta.samples()[0])) for m in methods}
    study = ConvergenceStudy(tables)
    for lev in levels:
        m1, m2 = geometry.build(lev)
        disc = Discretization.build(m1, m2, spec.order)
        gamma = _gamma(spec, disc, None)
        fields = {}
        for m in methods:
            s = spec.with_(method=m, gamma=gamma if m == "nitsche" else spec.gamma)
            try:
                fields[m] = solve(assemble(s, disc))
            except SolverError as exc:
                raise ConvergenceError(f"level {lev}, method {m}: {exc}", study) from exc
            tables[m].rows.append(error_norms(fields[m], exact, s, gamma))
        if len(methods) == 2:
            diff = DiscreteField(fields["nitsche"].coeffs - fields["standard"].coeffs, disc)
            study.distance_l2.append(l2_norm(diff))
    return study


# ------------------------------------------------------------- surface waves

@dataclass
class SurfaceWaveMetrics:
    """Decay length and wavelength of the interface-bound wave.

    ``decay_length`` / ``wavelength`` are None when the corresponding fit is
    rejected; ``reason`` then says why.
    """

    decay_length: float | None
    wavelength: float | None
    wavenumber: float | None  # spectral peak along the interface
    n_crossings: int
    fit_r2: float
    reason: str = ""

    def to_dict(self) -> dict:
        return {"decay_length": self.decay_length, "wavelength": self.wavelength,
                "wavenumber": self.wavenumber, "n_crossings": self.n_crossings,
                "fit_r2": self.fit_r2, "reason": self.reason}


def _band_filter(p: np.ndarray, dt: float, kappa: float, peak: float | None = None):
    """Keep tangential wavenumbers in [peak/2, 3 peak/2] above 2 kappa.

    The bulk wave has |k_t| <= kappa, so what survives is the fast
    interface-bound component.  Returns (filtered, peak).
    """
    win = np.hanning(len(p))
    F = np.fft.fft(p * win)
    k = np.abs(2 * np.pi * np.fft.fftfreq(len(p), dt))
    # three bins of margin keep the window's main lobe around the bulk wave out
    fast = k > 2 * kappa + 3 * (2 * np.pi / (len(p) * dt))
    if peak is None:
        if not np.any(fast) or not np.any(np.abs(F[fast]) > 0):
            return np.zeros_like(p), None
        peak = float(k[fast][np.argmax(np.abs(F[fast]))])
    band = fast & (k >= 0.5 * peak) & (k <= 1.5 * peak)
    F[~band] = 0
    return np.fft.ifft(F), peak


def surface_wave_metrics(field: DiscreteField, spec: ProblemSpec, side: int = 1,
                         n_samples: int = 4001, n_lines: int = 101, min_r2: float = 0.9) -> SurfaceWaveMetrics:
    """Fit the decay away from and the wavelength along the interface.

    Samples the field on lines parallel to the interface, band-passes each
    line around the dominant tangential wavenumber above 2 kappa, and fits
    log(max |p|) against the distance while the amplitude stays above
    e^-2 of its interface value.  The wavelength is twice the mean spacing of
    zero crossings of the filtered Re p on the interface.
    """
    pr = field.disc.pairing
    mesh = field.disc.mesh(side)
    t = np.linspace(pr.t0[0], pr.t1[-1], n_samples)
    dt = t[1] - t[0]
    sign = -1.0 if side == 1 else 1.0
    d = mesh.domain
    extent = d.width if pr.axis == 0 else d.height
    dist = np.linspace(0.0, 0.4 * extent, n_lines)

    def line(s):
        x, y = pr.points(t)
        x = x + sign * s * pr.normal[0]
        y = y + sign * s * pr.normal[1]
        return field.evaluate(x, y, side)

    p0 = line(0.0)
    f0, peak = _band_filter(p0, dt, spec.kappa)
    if peak is None:
        return SurfaceWaveMetrics(None, None, None, 0, 0.0, "no tangential content above 2 kappa")
    amp = np.array([np.abs(f0).max()] + [np.abs(_band_filter(line(s), dt, spec.kappa, peak)[0]).max()
                                         for s in dist[1:]])
    reason = []
    decay = None
    r2 = 0.0
    if amp[0] == 0:
        reason.append("zero amplitude on the interface")
    else:
        keep = amp >= amp[0] * np.exp(-2)
        if keep.sum() < 3:
            reason.append("layer thinner than the sampling step")
        else:
            c, res, *_ = np.polyfit(dist[keep], np.log(amp[keep]), 1, full=True)
            y = np.log(amp[keep])
            ss = float(np.sum((y - y.mean()) ** 2))
            r2 = 1.0 - float(res[0]) / ss if len(res) and ss > 0 else 0.0
            if c[0] >= 0:
                reason.append("amplitude does not decay away from the interface")
            elif amp.min() > amp[0] * np.exp(-1):
                reason.append("amplitude falls by less than e over the sampled band")
            elif r2 < min_r2:
                reason.append(f"exponential fit rejected (R^2 = {r2:.3f})")
            else:
                decay = -1.0 / c[0]
    # zero crossings of the filtered trace away from the taper of the window
    core = slice(n_samples // 10, n_samples - n_samples // 10)
    re = np.real(f0[core])
    tc = t[core]
    idx = np.flatnonzero(np.sign(re[:-1]) * np.sign(re[1:]) < 0)
    zeros = tc[idx] - re[idx] * (tc[idx + 1] - tc[idx]) / (re[idx + 1] - re[idx])
    wavelength = None
    if len(zeros) < 4:
        reason.append(f"only {len(zeros)} zero crossings, wavelength undefined")
    else:
        wavelength = 2.0 * float(np.mean(np.diff(zeros)))
    return SurfaceWaveMetrics(decay, wavelength, peak, len(zeros), r2, "; ".join(reason))
