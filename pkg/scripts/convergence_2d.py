"""First natural frequency on the unit square (or annulus) vs DOFs, Q1 and Q2 pairs."""
import argparse
from pathlib import Path

from pfem.models import ModelConfig
from pfem.spectra import convergence_study, write_convergence_csv

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/convergence_2d")
    ap.add_argument("--levels", type=int, nargs="+", default=[4, 8, 16])
    ap.add_argument("--p-continuity", default=None, choices=["continuous", "discontinuous"])
    args = ap.parse_args()
    pairs = [(1, 1, args.p_continuity), (2, 2, args.p_continuity)]
    rows = convergence_study(ModelConfig(model="swe2d"), pairs, args.levels)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_convergence_csv(out / "convergence.csv", rows)
    for r in rows:
        print(f"{r.label:8s} n={r.level:3d} dofs={r.dofs:5d} err={r.rel_error:.3e} order={r.emp_order:.2f}")
