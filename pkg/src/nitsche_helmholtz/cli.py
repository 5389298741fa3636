"""Command-line front end.

    nitsche-helmholtz solve --config scenarios/waveguide-convergence.json --out out/
    nitsche-helmholtz convergence --config scenarios/waveguide-convergence.json
    nitsche-helmholtz check --config scenarios/pressure-jump.json
    nitsche-helmholtz surface-wave --config scenarios/surface-wave-kappa.json
    nitsche-helmholtz dump-mesh --config scenarios/pressure-jump.json

Exit codes: 0 ok, 1 runtime or check failure, 2 invalid input.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from . import verify
from .assembly import AssemblyError, ImpedanceField, assemble, check_resolution
from .config import ConfigError, RunConfig, dump_complex, load_config, parse_complex
from .fespace import Discretization
from .linsolve import SolverError, solve, write_field_csv, write_field_vtk
from .mesh import MeshError, dump_mesh_csv

log = logging.getLogger("nitsche_helmholtz")

EXIT_OK, EXIT_FAIL, EXIT_INVALID = 0, 1, 2


class CheckFailed(RuntimeError):
    pass


def _write_json(path: str, data) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_plain(data), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, complex):
        return dump_complex(x)
    if isinstance(x, np.generic):
        return _plain(x.item())
    if isinstance(x, float) and not np.isfinite(x):
        return str(x)
    return x


def _discretize(cfg: RunConfig, level: int, order: int):
    m1, m2 = cfg.geometry.build().build(level)
    return Discretization.build(m1, m2, order)


def _is_waveguide(cfg: RunConfig) -> bool:
    return cfg.geometry.kind == "waveguide" and cfg.problem.zeta.kind == "constant"


# ------------------------------------------------------------------ commands

def cmd_solve(cfg: RunConfig) -> dict:
    spec = cfg.problem.spec()
    disc = _discretize(cfg, cfg.solve.level, spec.order)
    system = assemble(spec, disc)
    field = solve(system)
    out = cfg.output
    nx, ny = cfg.solve.grid
    files = [write_field_csv(field, os.path.join(out, "field.csv"), nx, ny)]
    if cfg.solve.vtk:
        files += write_field_vtk(field, out, nx, ny)
    g_sq, outflow, loss = verify.balance_terms(field, spec)
    report = {"dofs": disc.n_dofs, "gamma": system.gamma, "method": spec.method, "order": spec.order,
              "kappa": spec.kappa, "balance": {"incoming": g_sq, "outgoing": outflow, "interface_loss": loss,
                                               "residual": abs(g_sq - outflow - loss)}}
    if system.gamma is not None:
        report["resolution"] = check_resolution(spec, disc.pairing, system.gamma).to_dict()
    if _is_waveguide(cfg):
        exact = verify.WaveguideExact(spec.kappa, spec.zeta.value)
        err = verify.error_norms(field, exact, spec)
        table = verify.ConvergenceTable(spec.method, spec.order, spec.kappa, spec.zeta.value, [err])
        files.append(table.write_csv(os.path.join(out, table.filename())))
        report["errors"] = err.as_row()
    files.append(_write_json(os.path.join(out, "solve.json"), report))
    report["files"] = files
    print(f"solved {disc.n_dofs} dofs, balance residual {report['balance']['residual']:.3g}")
    if "errors" in report:
        print(f"L2 error {report['errors']['err_L2']:.6g}, triple-norm error {report['errors']['err_triple']:.6g}")
    return report


def _zeta_dir(z: complex) -> str:
    return f"zeta_{z.real:g}_{z.imag:g}".replace("-", "m")


def cmd_convergence(cfg: RunConfig) -> dict:
    if not _is_waveguide(cfg):
        raise ConfigError("geometry.kind: convergence studies need the waveguide (exact solution known)")
    cc = cfg.convergence
    zetas = [complex(*z) for z in cc.zetas]
    geometry = cfg.geometry.build()
    # validate every combination before the first solve
    for z in zetas:
        for m in cc.methods:
            cfg.problem.spec(zeta=ImpedanceField.constant(z), method=m)
    files, rows = [], []
    for z in zetas:
        sub = cfg.output if len(zetas) == 1 else os.path.join(cfg.output, _zeta_dir(z))
        for kappa in cc.kappas:
            for k in cc.orders:
                spec = cfg.problem.spec(kappa=kappa, order=k, zeta=ImpedanceField.constant(z))
                study = verify.convergence_study(geometry, spec, cc.levels, verify.WaveguideExact(kappa, z),
                                                 cc.methods)
                for m, tb in study.tables.items():
                    files.append(tb.write_csv(os.path.join(sub, tb.filename())))
                    rows.append({"zeta": z, "kappa": kappa, "k": k, "method": m,
                                 "slope_L2": tb.slope("l2"), "slope_triple": tb.slope("triple")})
                    print(f"zeta={z:g} kappa={kappa:g} k={k} {m}: L2 slope {tb.slope('l2'):.3f}, "
                          f"triple slope {tb.slope('triple'):.3f}")
                if study.distance_l2:
                    rows[-1]["distance_L2_finest"] = study.distance_l2[-1]
    _write_json(os.path.join(cfg.output, "convergence.json"), {"rates": rows})
    return {"files": files, "rates": rows}


def cmd_check(cfg: RunConfig) -> dict:
    cc = cfg.check
    spec = cfg.problem.spec(method="nitsche")
    disc = _discretize(cfg, cc.level, spec.order)
    report, failures = {}, []

    lam = verify.lambda_property_suite(cc.lambda_samples, cfg.seed)
    report["lambda"] = lam.to_dict()
    if not lam.ok:
        failures.append("lambda property suite")

    c_inv = verify.inverse_constant(disc)
    gamma = spec.gamma if spec.gamma is not None else verify.GAMMA_SAFETY * c_inv
    report["inverse_constant"] = {"c_inverse": c_inv, "gamma": gamma, "gamma_min": 16 * c_inv}

    res = check_resolution(spec, disc.pairing, gamma)
    report["resolution"] = res.to_dict()
    if not res.ok:
        failures.append(f"resolution: {len(res.violations)} subsegment(s) coarser than h0 = {res.h0:.4g}")

    gard = verify.garding_check(spec, disc, cc.n_samples, cfg.seed, gamma=gamma)
    report["garding"] = gard.to_dict()
    if not gard.gamma_ok:
        report["garding"]["note"] = "gamma below 16 C_I: the stability hypothesis does not hold"
        failures.append("garding precondition gamma >= 16 C_I violated")
    elif gard.failures:
        failures.append(f"garding: {len(gard.failures)} sample(s) below ratio 1")

    bal = {}
    solved = {}
    for method in ("nitsche", "standard"):
        try:
            s = spec.with_(method=method, gamma=gamma if method == "nitsche" else None)
        except AssemblyError as exc:
            bal[method] = {"skipped": str(exc)}
            continue
        if method == "nitsche" and not res.ok:
            bal[method] = {"skipped": "resolution condition violated"}
            continue
        solved[method] = (s, solve(assemble(s, disc)))
        g_sq, outflow, loss = verify.balance_terms(solved[method][1], s)
        bal[method] = {"incoming": g_sq, "outgoing": outflow, "interface_loss": loss,
                       "relative_residual": abs(g_sq - outflow - loss) / g_sq if g_sq else 0.0}
    report["balance"] = bal
    if "standard" in solved and bal["standard"]["relative_residual"] > 1e-9:
        failures.append("balance law for the standard method")

    flux = {}
    try:
        probes = verify.make_probes(disc, cc.n_probes, cfg.seed)
    except ValueError as exc:
        flux["skipped"] = str(exc)
        probes = None
    if probes is not None:
        for method, (s, f) in solved.items():
            try:
                flux[method] = verify.weak_flux_residual(f, s, probes)
            except ValueError as exc:
                flux = {"skipped": str(exc)}
                break
        if "standard" in flux and flux["standard"] > 1e-10:
            failures.append("weak flux continuity for the standard method")
    report["flux"] = flux
    report["failures"] = failures
    report["ok"] = not failures
    _write_json(os.path.join(cfg.output, "check.json"), report)
    print(f"lambda suite: {'pass' if lam.ok else 'FAIL'} ({lam.n_samples} samples)")
    print(f"C_I = {c_inv:.6g}, gamma = {gamma:.6g}, h0 = {res.h0:.6g}: resolution {'pass' if res.ok else 'FAIL'}")
    print(f"garding: min ratio {gard.min_ratio:.4g} over {gard.n_samples} samples")
    for m, b in bal.items():
        print(f"balance ({m}): " + (b["skipped"] if "skipped" in b else f"relative residual {b['relative_residual']:.3g}"))
    print("flux: " + ", ".join(f"{k} {v:.3g}" if isinstance(v, float) else f"{k}: {v}" for k, v in flux.items()))
    print("check: " + ("all passed" if not failures else "FAILED: " + "; ".join(failures)))
    if failures:
        raise CheckFailed("; ".join(failures))
    return report


def cmd_surface_wave(cfg: RunConfig) -> dict:
    sw = cfg.surface_wave
    geometry = cfg.geometry.build()
    m1, m2 = geometry.build(cfg.solve.level)
    disc = Discretization.build(m1, m2, cfg.problem.order)
    rows, failures = [], []
    for z in (complex(*v) for v in sw.zetas):
        for kappa in sw.kappas:
            spec = cfg.problem.spec(kappa=kappa, zeta=ImpedanceField.constant(z))
            system = assemble(spec, disc)
            res = check_resolution(spec, disc.pairing, system.gamma)
            field = solve(system)
            m = verify.surface_wave_metrics(field, spec, side=sw.side)
            layer = z.imag < 0 and z.real == 0
            theory_d = abs(z.imag) / (2 * kappa) if layer else None
            theory_l = 2 * np.pi / (kappa * np.sqrt(1 + 4 / z.imag ** 2)) if layer else None
            row = {"kappa": kappa, "zeta": z, **m.to_dict(), "theory_decay_length": theory_d,
                   "theory_wavelength": theory_l, "h0": res.h0,
                   "resolved_h0_over_2": bool(max(disc.pairing.h1.max(), disc.pairing.h2.max()) <= res.h0 / 2)}
            rows.append(row)
            if z.imag < 0 and (m.decay_length is None or m.wavelength is None):
                failures.append(f"kappa={kappa:g}, zeta={z:g}: {m.reason}")
            print(f"kappa={kappa:g} zeta={z:g}: decay length {m.decay_length}, wavelength {m.wavelength}"
                  + (f" ({m.reason})" if m.reason else ""))
    path = os.path.join(cfg.output, "surface_wave.csv")
    os.makedirs(cfg.output, exist_ok=True)
    cols = ["kappa", "zeta_re", "zeta_im", "decay_length", "wavelength", "wavenumber", "theory_decay_length",
            "theory_wavelength", "n_crossings", "fit_r2", "h0", "resolved_h0_over_2", "reason"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            vals = dict(r, zeta_re=r["zeta"].real, zeta_im=r["zeta"].imag)
            w.writerow(["" if vals[c] is None else (f"{vals[c]:.10g}" if isinstance(vals[c], float) else vals[c])
                        for c in cols])
    _write_json(os.path.join(cfg.output, "surface_wave.json"), {"rows": rows, "failures": failures})
    if failures:
        raise CheckFailed("; ".join(failures))
    return {"rows": rows, "files": [path]}


def cmd_dump_mesh(cfg: RunConfig) -> dict:
    m1, m2 = cfg.geometry.build().build(cfg.solve.level)
    files = dump_mesh_csv(m1, cfg.output) + dump_mesh_csv(m2, cfg.output)
    print(f"wrote {len(files)} files to {cfg.output}")
    return {"files": files}


COMMANDS = {"solve": cmd_solve, "convergence": cmd_convergence, "check": cmd_check,
            "surface-wave": cmd_surface_wave, "dump-mesh": cmd_dump_mesh}


# ---------------------------------------------------------------- arg parsing

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--seed", type=int, help="random seed for checks")
    common.add_argument("--gamma", type=float, help="penalty override")
    common.add_argument("--method", choices=("nitsche", "standard"), help="interface treatment")
    common.add_argument("--zeta", help="constant impedance override, e.g. 0.21+0.1j")
    common.add_argument("--kappa", type=float, help="wave number override")
    common.add_argument("--order", type=int, help="element order override")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="nitsche-helmholtz", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return p


def resolve_config(args) -> RunConfig:
    if args.config:
        try:
            cfg = load_config(args.config)
        except OSError as exc:
            raise ConfigError(f"--config: {exc}") from None
    else:
        cfg = RunConfig.from_dict({})
    data = cfg.to_dict()
    if args.out is not None:
        data["output"] = args.out
    if args.seed is not None:
        data["seed"] = args.seed
    for key in ("gamma", "method", "kappa", "order"):
        v = getattr(args, key)
        if v is not None:
            data["problem"][key] = v
    if args.zeta is not None:
        data["problem"]["zeta"] = dump_complex(parse_complex(args.zeta, "--zeta"))
    return RunConfig.from_dict(data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = resolve_config(args)
        COMMANDS[args.command](cfg)
    except (ConfigError, AssemblyError, MeshError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (CheckFailed, SolverError, verify.ConvergenceError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (OSError, RuntimeError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
