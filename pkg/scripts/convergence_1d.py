"""First natural frequency of the 1D channel vs DOFs for several basis pairs."""
import argparse
from pathlib import Path

from pfem.models import ModelConfig
from pfem.spectra import convergence_study, write_convergence_csv

PAIRS = [(1, 0), (1, 1), (1, 2), (2, 1), (3, 3)]

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/convergence_1d")
    ap.add_argument("--levels", type=int, nargs="+", default=[8, 16, 32, 64])
    ap.add_argument("--p-continuity", default=None, choices=["continuous", "discontinuous"])
    args = ap.parse_args()
    rows = convergence_study(ModelConfig(model="swe1d"),
                             [(q, p, args.p_continuity) for q, p in PAIRS], args.levels)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_convergence_csv(out / "convergence.csv", rows)
    for r in rows:
        print(f"{r.label:6s} n={r.level:3d} dofs={r.dofs:5d} err={r.rel_error:.3e} order={r.emp_order:.2f}")
