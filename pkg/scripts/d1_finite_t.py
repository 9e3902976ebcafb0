"""Finite-t behaviour on the line.

Prints I^{rt}(t) for the limiting equation together with the empty-ball
probabilities it implies, the density-N prediction, and optionally a Monte
Carlo estimate, so the approach to exp(-2r) can be read off directly.

    python scripts/d1_finite_t.py --times 5 10 20 40 --mc-replicas 2000
"""
import argparse
import math

from emptyball.harness import ExperimentPlan, run_plan
from emptyball.pde import PdeConfig, empty_prob_poisson, refined_mass, solve_radial
from emptyball.recipes import finite_n_prediction


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--r", type=float, default=1.0)
    ap.add_argument("--times", type=float, nargs="+", default=[5, 10, 20, 40, 80])
    ap.add_argument("--N", type=int, default=100)
    ap.add_argument("--mc-replicas", type=int, default=0)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    r = args.r
    print(f"limit exp(-2r) = {math.exp(-2 * r):.5f}")
    print(f"{'t':>6} {'I(t)':>9} {'sqrt(t)(I-2r)':>14} {'P_pois':>8} {'P_N':>8} {'MC':>15}")
    for t in args.times:
        radius = r * math.sqrt(t)
        _, est, _, _ = refined_mass(PdeConfig(d=1, r=radius, t_final=1.0, spacing=min(0.02, radius / 20)), levels=3)
        I = est[0] / math.sqrt(t)
        sol = solve_radial(PdeConfig(d=1, r=r * t, t_final=t, spacing=0.02))
        p_pois = empty_prob_poisson(sol, t)
        p_n, _ = finite_n_prediction(1, r * t, t, args.N, "poisson")
        mc = ""
        if args.mc_replicas:
            plan = ExperimentPlan(d=1, targets=((t, r),), replicas=args.mc_replicas, N=args.N, seed=args.seed, normalized=True)
            row = run_plan(plan).rows[0]
            mc = f"{row.p_hat:.4f}+/-{row.se:.4f}"
        print(f"{t:6g} {I:9.5f} {math.sqrt(t) * (I - 2 * r):14.4f} {p_pois:8.5f} {p_n:8.5f} {mc:>15}")


if __name__ == "__main__":
    main()
