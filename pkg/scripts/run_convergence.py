"""Run the waveguide convergence grid and print the fitted slopes.

    python scripts/run_convergence.py [--out out/convergence] [--method standard]
"""
import argparse
import json
import os
import sys

from nitsche_helmholtz.cli import main as cli_main

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=os.path.join(ROOT, "scenarios", "waveguide-convergence.json"))
    ap.add_argument("--out", default="out/convergence")
    ap.add_argument("--method", choices=["nitsche", "standard"])
    args = ap.parse_args(argv)
    cmd = ["convergence", "--config", args.config, "--out", args.out]
    if args.method:
        cmd += ["--method", args.method]
    code = cli_main(cmd)
    if code:
        return code
    rates = json.load(open(os.path.join(args.out, "convergence.json")))["rates"]
    print(f"{'method':>8} {'zeta':>14} {'kappa':>6} {'k':>2} {'L2':>6} {'triple':>6}")
    for r in rates:
        z = f"{r['zeta'][0]:g}{r['zeta'][1]:+g}i"
        print(f"{r['method']:>8} {z:>14} {r['kappa']:>6g} {r['k']:>2} {r['slope_L2']:6.2f} {r['slope_triple']:6.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
