"""How fast does power iteration pin down the top singular value?

Prints, per matrix family, how many of 20 random 64x64 matrices reach a
given accuracy after n steps, together with the sigma2/sigma1 ratios that
govern the rate.

    python scripts/spectral_convergence.py --steps 50 200 1000
"""

import argparse

import numpy as np

from deblur import norm
from deblur import tensor as T

FAMILIES = {
    "gaussian": lambda rng: rng.standard_normal((64, 64)),
    "uniform(-1,1)": lambda rng: rng.uniform(-1, 1, (64, 64)),
    "uniform(0,1)": lambda rng: rng.uniform(0, 1, (64, 64)),
    "init 0.02*N": lambda rng: 0.02 * rng.standard_normal((64, 64)),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, nargs="+", default=[50, 200, 1000])
    ap.add_argument("--tol", type=float, default=1e-3)
    args = ap.parse_args()
    with T.precision("f64"):
        for name, draw in FAMILIES.items():
            ratios, hits = [], {n: 0 for n in args.steps}
            worst = {n: 0.0 for n in args.steps}
            for seed in range(20):
                rng = np.random.default_rng(seed)
                w = draw(rng)
                s = np.linalg.svd(w, compute_uv=False)
                ratios.append(s[1] / s[0])
                u0 = norm.SpectralState.init(64, rng, 1, np.float64).u
                for n in args.steps:
                    u, v = norm.power_iteration(w, u0, n)
                    err = abs(float(u @ w @ v) - s[0]) / s[0]
                    hits[n] += err * s[0] < args.tol
                    worst[n] = max(worst[n], err)
            summary = "  ".join(f"n={n}: {hits[n]:2d}/20 abs<tol (worst rel {worst[n]:.1e})" for n in args.steps)
            print(f"{name:14s} s2/s1 {min(ratios):.3f}-{max(ratios):.3f}  {summary}")


if __name__ == "__main__":
    main()
