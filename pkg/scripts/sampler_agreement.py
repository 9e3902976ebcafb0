"""Compare the genealogy sampler against the event-driven one at small N.

    python scripts/sampler_agreement.py --N 20 --replicas 5000
"""
import argparse

import numpy as np
from scipy import stats

from emptyball.particles import Box, SimConfig, advance, empty_ball_radius, init_point_mass
from emptyball.rng import stream


def sample(method, cfg, t, replicas, offset):
    mass = np.empty(replicas)
    radius = np.empty(replicas)
    for i in range(replicas):
        ps = advance(init_point_mass(cfg, np.full(cfg.d, 0.5), 1.0), t, stream(cfg.seed, offset + i), method=method)
        mass[i] = ps.total_mass
        radius[i] = empty_ball_radius(ps).radius
    return mass, radius


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--d", type=int, default=2)
    ap.add_argument("--N", type=int, default=20)
    ap.add_argument("--t", type=float, default=1.0)
    ap.add_argument("--replicas", type=int, default=5000)
    ap.add_argument("--seed", type=int, default=3)
    args = ap.parse_args()

    cfg = SimConfig(d=args.d, N=args.N, window=Box.centered(args.d, 1.0), horizon=args.t, seed=args.seed)
    m_tree, r_tree = sample("tree", cfg, args.t, args.replicas, 0)
    m_evt, r_evt = sample("events", cfg, args.t, args.replicas, args.replicas)
    for name, a, b in (("total mass", m_tree, m_evt), ("radius", r_tree, r_evt)):
        a, b = a[np.isfinite(a)], b[np.isfinite(b)]
        res = stats.ks_2samp(a, b)
        print(f"{name:>10}: mean {a.mean():.4f} vs {b.mean():.4f}, KS p = {res.pvalue:.3f}")


if __name__ == "__main__":
    main()
