"""Command-line front end.

Exit codes: 0 pass, 1 verification failure, 2 configuration error,
3 resource abort (population cap), 4 mathematical invariant violated.
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import records
from .harness import estimate, run_replicas
from .pde import (
    DiscretizationFailure,
    DomainTooSmall,
    LowerBoundViolation,
    a2_estimate,
    d1_mass_limit,
    empty_prob_poisson,
    kappa_estimate,
    mass_integral,
    solve_radial,
)
from .recipes import RECIPES, Budget, verify_moments
from .stats import wilson_interval

log = logging.getLogger("emptyball")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RESOURCE, EXIT_INVARIANT = 0, 1, 2, 3, 4


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _jobs(n):
    return n if n and n > 0 else (os.cpu_count() or 1)


def _seed(args, fallback=None):
    seed = args.seed if args.seed is not None else fallback
    if seed is None:
        raise CliError("missing required field 'seed': pass --seed", EXIT_CONFIG)
    return seed


def _manifest(command, digest, seed, tolerances, outputs, start, **extra):
    return records.RunManifest(
        command=command,
        config_digest=digest,
        seed=seed,
        tolerances=tolerances,
        outputs=[str(o) for o in outputs],
        wall_clock=round(time.time() - start, 3),
        started=time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(start)),
        extra=extra,
    )


# ---------------------------------------------------------------- simulate


def cmd_simulate(args) -> int:
    start = time.time()
    rc = cfgmod.load(args.config)
    seed = _seed(args, rc.seed)
    overrides = {}
    if args.fast:
        overrides["replicas"] = max(100, min(rc.section("plan").get("replicas", 100), 1000))
    plan = cfgmod.plan_from(rc, seed=seed, **overrides)
    digest = cfgmod.digest(rc)
    out = records.ensure_dir(args.out)
    recs = run_replicas(plan, _jobs(args.jobs))
    table = estimate(plan, recs)

    rows = []
    for rec in recs:
        for t, r in plan.targets:
            if t != rec.t:
                continue
            radius = plan.ball_radius(t, r)
            rows.append(
                (rec.replica_id, t, r, radius, rec.radius, rec.censored, (not rec.overflow) and rec.radius >= radius,
                 rec.total_mass, rec.peak, rec.overflow, seed)
            )
    f_rec = records.write_table(out / "records.csv", records.REPLICA_COLUMNS, rows, digest, {"seed": seed})
    est_rows = [
        (r.d, r.t, r.r, r.p_hat, r.ci_lo, r.ci_hi, r.n_effective, r.successes, r.censored_count, r.cap_hit_count)
        for r in table.rows
    ]
    f_est = records.write_table(out / "estimates.csv", records.ESTIMATE_COLUMNS, est_rows, digest, {"seed": seed})
    f_sum = records.write_jsonl(
        out / "summary.jsonl",
        [{"kind": "estimate", **vars(r), "reliable": r.reliable} for r in table.rows],
    )
    (out / "config.ini").write_text(cfgmod.dumps(rc), encoding="utf-8")
    tol = {"confidence": plan.confidence, "epsilon": plan.epsilon}
    records.write_manifest(out, _manifest("simulate", digest, seed, tol, [f_rec, f_est, f_sum], start, replicas=plan.replicas))
    for r in table.rows:
        print(f"d={r.d} t={r.t:g} r={r.r:g}  p_hat={r.p_hat:.5f}  [{r.ci_lo:.5f}, {r.ci_hi:.5f}]  n={r.n_effective}  caps={r.cap_hit_count}")
    if any(not r.reliable for r in table.rows):
        print("population cap hit in more than 1% of replicas", file=sys.stderr)
        return EXIT_RESOURCE
    return EXIT_OK


# ---------------------------------------------------------------- solve


def cmd_solve(args) -> int:
    start = time.time()
    rc = cfgmod.load(args.config)
    pde_cfg, extras = cfgmod.pde_from(rc, args.tolerance)
    digest = cfgmod.digest(rc)
    out = records.ensure_dir(args.out)
    kind = extras["kind"]
    levels = extras.get("levels", 2 if args.fast else 3)
    summary = []
    outputs = []
    if kind == "solution":
        sol = solve_radial(pde_cfg)
        for k, t in enumerate(sol.times):
            summary.append(
                {
                    "kind": "mass",
                    "t": float(t),
                    "I_fv": float(sol.mass[k]),
                    "I_quad": mass_integral(sol, t),
                    "tail_bound": float(sol.tail_bound[k]),
                    "empty_prob_poisson": empty_prob_poisson(sol, t),
                    "max_u_times_t": float(sol.profiles[k].max() * t),
                }
            )
        if pde_cfg.uniform:
            late = [k for k, t in enumerate(sol.times) if t >= 1.0]
            dev = max((float(np.max(np.abs(sol.profiles[k] - 1.0 / sol.times[k]))) for k in late), default=0.0)
            summary.append({"kind": "uniform_selftest", "max_abs_deviation": dev, "passed": dev < 1e-12})
            print(f"uniform self-test: max|u - 1/t| = {dev:.3g}")
            if dev >= 1e-12:
                raise CliError(f"uniform mode deviates from 1/t by {dev:.3g}", EXIT_INVARIANT)
        if extras.get("dump_profiles", True):
            rows = ((float(t), float(rho), float(u)) for k, t in enumerate(sol.times) for rho, u in zip(sol.grid, sol.profiles[k]))
            outputs.append(records.write_table(out / "profile.csv", ("t", "rho", "u"), rows, digest))
        for s in summary:
            if s["kind"] == "mass":
                print(f"t={s['t']:g}  I={s['I_fv']:.8g}  tail<={s['tail_bound']:.2g}")
    elif kind == "kappa":
        times = pde_cfg.output_times or (1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0)
        lc = kappa_estimate(pde_cfg.d, times=times, spacing=pde_cfg.spacing, levels=levels)
        summary.append(lc.as_record())
        print(f"kappa_{pde_cfg.d} = {lc.value:.6g}  residual {lc.residual:.2g}  monotone={lc.monotone}")
    elif kind == "a2":
        lc = a2_estimate(pde_cfg.r, spacing=pde_cfg.spacing, levels=levels)
        summary.append(lc.as_record())
        print(f"A2({pde_cfg.r:g}) = {lc.value:.6g}  ratio to pi r^2 = {lc.extras['ratio_to_area']:.4f}")
    elif kind == "d1_limit":
        times = pde_cfg.output_times or (16.0, 64.0, 256.0, 1024.0)
        lc = d1_mass_limit(pde_cfg.r, times=times, spacing=pde_cfg.spacing, levels=levels)
        summary.append(lc.as_record())
        print(f"d1 mass limit (r={pde_cfg.r:g}) = {lc.value:.6g}  monotone increasing={lc.monotone}")
    outputs.append(records.write_jsonl(out / "summary.jsonl", summary))
    (out / "config.ini").write_text(cfgmod.dumps(rc), encoding="utf-8")
    tol = {"tolerance": pde_cfg.tolerance, "tail_budget": pde_cfg.tail_budget}
    records.write_manifest(out, _manifest("solve", digest, None, tol, outputs, start, kind=kind))
    return EXIT_OK


# ---------------------------------------------------------------- verify / moments


def _print_verification(v):
    for c in v.checks:
        tag = "PASS" if c.passed else "FAIL"
        extra = " (supplementary)" if c.supplementary else ""
        print(f"[{tag}] {v.theorem}: {c.name}{extra}\n        {c.detail}")
    print(f"{v.theorem}: {'PASS' if v.passed else 'FAIL'}")


def _write_verification(out, v, seed, budget, start, command):
    out = records.ensure_dir(out)
    rows = [{"kind": "check", "theorem": v.theorem, **vars(c)} for c in v.checks]
    rows.append({"kind": "data", "theorem": v.theorem, "data": v.data})
    f = records.write_jsonl(out / f"{command}_{v.theorem}.jsonl", rows)
    tol = {"sigma": 3.0}
    digest = records_digest(v.theorem, budget)
    records.write_manifest(out, _manifest(command, digest, seed, tol, [f], start, passed=v.passed))


def records_digest(name, budget):
    import hashlib
    import json
    from dataclasses import asdict

    blob = json.dumps({"recipe": name, **asdict(budget)}, sort_keys=True, default=list)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def cmd_verify(args) -> int:
    start = time.time()
    seed = _seed(args)
    budget = Budget.fast() if args.fast else Budget()
    v = RECIPES[args.theorem](seed, budget, _jobs(args.jobs))
    _print_verification(v)
    _write_verification(args.out, v, seed, budget, start, "verify")
    if args.theorem == "d3":
        k = v.data["kappa"]["value"]
        if k < v.data["kappa"]["lower_bound"]:
            raise CliError(f"kappa_3 estimate {k:.6g} is below the lower bound c(3)", EXIT_INVARIANT)
    return EXIT_OK if v.passed else EXIT_FAIL


def cmd_moments(args) -> int:
    start = time.time()
    seed = _seed(args)
    budget = Budget.fast() if args.fast else Budget()
    if args.replicas:
        from dataclasses import replace

        budget = replace(budget, moment_replicas=args.replicas)
    v = verify_moments(seed, budget, _jobs(args.jobs), N=args.N)
    _print_verification(v)
    _write_verification(args.out, v, seed, budget, start, "moments")
    return EXIT_OK if v.passed else EXIT_FAIL


# ---------------------------------------------------------------- report


def cmd_report(args) -> int:
    inputs = [Path(p) for p in args.inputs]
    manifests, tables = [], []
    for p in inputs:
        d = p if p.is_dir() else p.parent
        try:
            manifests.append((d, records.read_manifest(d)))
            tables.append(records.read_table(d / "estimates.csv"))
        except (OSError, ValueError) as exc:
            raise CliError(f"cannot read run {d}: {exc}", EXIT_CONFIG) from None
    digests = {m.config_digest for _, m in manifests}
    if len(digests) > 1:
        listing = ", ".join(f"{d}={m.config_digest}" for d, m in manifests)
        raise CliError(f"refusing to merge runs with different config digests: {listing}", EXIT_CONFIG)
    (d0, m0) = manifests[0]
    for d, m in manifests[1:]:
        if m.tolerances != m0.tolerances:
            raise CliError(
                f"conflicting tolerances between {d0 / 'manifest.json'} {m0.tolerances} and {d / 'manifest.json'} {m.tolerances}",
                EXIT_CONFIG,
            )
    conf = float(m0.tolerances.get("confidence", 0.95))
    pooled: dict = {}
    order = []
    for _, rows in tables:
        for row in rows:
            key = (int(row["d"]), float(row["t"]), float(row["r"]))
            if key not in pooled:
                pooled[key] = [0, 0, 0, 0]
                order.append(key)
            acc = pooled[key]
            acc[0] += int(row["successes"])
            acc[1] += int(row["n_effective"])
            acc[2] += int(row["censored_count"])
            acc[3] += int(row["cap_hit_count"])
    out_rows = []
    for key in order:
        k, n, cens, caps = pooled[key]
        lo, hi = wilson_interval(k, n, conf) if n else (0.0, 1.0)
        out_rows.append((*key, k / n if n else math.nan, lo, hi, n, k, cens, caps))
    digest = digests.pop()
    seeds = ",".join(str(m.seed) for _, m in manifests)
    out = records.ensure_dir(args.out)
    records.write_table(out / "merged.csv", records.ESTIMATE_COLUMNS, out_rows, digest, {"seeds": seeds})
    lines = [f"merged {len(inputs)} run(s), digest {digest}, seeds {seeds}", ""]
    lines.append(f"{'d':>2} {'t':>8} {'r':>8} {'p_hat':>9} {'ci_lo':>9} {'ci_hi':>9} {'n':>8}")
    for row in out_rows:
        lines.append(f"{row[0]:>2} {row[1]:>8g} {row[2]:>8g} {row[3]:>9.5f} {row[4]:>9.5f} {row[5]:>9.5f} {row[6]:>8d}")
    text = "\n".join(lines) + "\n"
    (out / "report.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


# ---------------------------------------------------------------- entry


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit); required for random runs")
    common.add_argument("--jobs", type=int, default=0, help="worker processes (default: all cores)")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--fast", action="store_true", help="reduced run sizes")
    common.add_argument("--tolerance", type=float, help="override the PDE tolerance")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="emptyball", description="Empty-ball statistics of critical branching Brownian motion.")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", parents=[common], help="run a Monte Carlo plan")
    s.add_argument("--config", required=True)
    s = sub.add_parser("solve", parents=[common], help="run the radial PDE solver")
    s.add_argument("--config", required=True)
    s = sub.add_parser("verify", parents=[common], help="run a verification recipe")
    s.add_argument("theorem", choices=sorted(RECIPES))
    s = sub.add_parser("moments", parents=[common], help="moment formulas against point-mass replicas")
    s.add_argument("--replicas", type=int, default=None)
    s.add_argument("--N", type=int, default=1000)
    s = sub.add_parser("report", parents=[common], help="merge simulate runs")
    s.add_argument("inputs", nargs="+")
    return p


COMMANDS = {
    "simulate": cmd_simulate,
    "solve": cmd_solve,
    "verify": cmd_verify,
    "moments": cmd_moments,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DomainTooSmall as exc:
        print(f"config error: {exc}; enlarge rmax", file=sys.stderr)
        return EXIT_CONFIG
    except DiscretizationFailure as exc:
        print(f"invariant violated (u <= 1/t): {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except LowerBoundViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
