"""Grid and horizon study for kappa_3.

    python scripts/kappa_convergence.py --spacings 0.04 0.02 --horizons 256 512
"""
import argparse

from emptyball.pde import kappa_estimate


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--d", type=int, default=3)
    ap.add_argument("--spacings", type=float, nargs="+", default=[0.04, 0.02])
    ap.add_argument("--horizons", type=float, nargs="+", default=[256.0, 512.0])
    ap.add_argument("--levels", type=int, default=3)
    args = ap.parse_args()

    for T in args.horizons:
        times = []
        t = 1.0
        while t <= T:
            times.append(t)
            t *= 2
        for h in args.spacings:
            lc = kappa_estimate(args.d, times=tuple(times), spacing=h, levels=args.levels)
            tail = ", ".join(f"{v:.4f}@{t:g}" for t, v in lc.diagnostics[-3:])
            print(f"T={T:g} h={h:g}: kappa = {lc.value:.5f} (fit residual {lc.residual:.1e}); I(t) {tail}")


if __name__ == "__main__":
    main()
