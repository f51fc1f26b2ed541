"""Free-free Euler-Bernoulli beam (unit stiffness and density): first frequencies vs the analytic roots of cos(bL) cosh(bL) = 1."""
import argparse

import numpy as np
from scipy.optimize import brentq

from pfem.models import ModelConfig
from pfem.spectra import spectrum_for

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--L", type=float, default=1.0)
    ap.add_argument("--levels", type=int, nargs="+", default=[4, 8, 16, 32, 64])
    ap.add_argument("--modes", type=int, default=4)
    args = ap.parse_args()
    f = lambda b: np.cos(b) * np.cosh(b) - 1.0
    roots = [brentq(f, (k + 0.5) * np.pi - 0.5, (k + 0.5) * np.pi + 0.5) for k in range(1, args.modes + 1)]
    exact = np.array(roots) ** 2 / args.L ** 2
    for n in args.levels:
        res = spectrum_for(ModelConfig(model="beam", n=n, L=args.L), args.modes)
        errs = np.abs(res.omegas - exact) / exact
        print(f"n={n:3d} dofs={res.dofs:4d} " + " ".join(f"{e:.2e}" for e in errs))
