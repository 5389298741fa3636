"""Measure surface-wave decay length and wavelength for both muffler sweeps.

    python scripts/run_surface_waves.py [--out out/surface]
"""
import argparse
import csv
import os
import sys

from nitsche_helmholtz.cli import main as cli_main

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SWEEPS = ("surface-wave-kappa", "surface-wave-zeta")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="out/surface")
    args = ap.parse_args(argv)
    for name in SWEEPS:
        out = os.path.join(args.out, name)
        code = cli_main(["surface-wave", "--config", os.path.join(ROOT, "scenarios", name + ".json"), "--out", out])
        if code:
            return code
        print(name)
        for row in csv.DictReader(open(os.path.join(out, "surface_wave.csv"))):
            print(f"  kappa={row['kappa']:>6} zeta={row['zeta_re']}{float(row['zeta_im']):+g}i "
                  f"decay={row['decay_length']} (theory {row['theory_decay_length']}) "
                  f"wavelength={row['wavelength']} (theory {row['theory_wavelength']})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
