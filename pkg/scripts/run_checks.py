"""Run the stability and consistency checks on every shipped scenario.

    python scripts/run_checks.py [--out out/checks]
"""
import argparse
import os
import sys

from nitsche_helmholtz.cli import main as cli_main

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="out/checks")
    args = ap.parse_args(argv)
    status = 0
    for name in ("pressure-jump", "waveguide-convergence"):
        code = cli_main(["check", "--config", os.path.join(ROOT, "scenarios", name + ".json"),
                         "--out", os.path.join(args.out, name)])
        print(f"{name}: {'ok' if code == 0 else 'FAILED'}")
        status = max(status, code)
    return status


if __name__ == "__main__":
    sys.exit(main())
