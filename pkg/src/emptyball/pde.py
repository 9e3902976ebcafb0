"""Radial solver for u_t = Delta u / 2 - u^2 and the quantities built on it.

``u(t, x) = -log P_{delta_x}(X_t(B(r)) = 0)`` is the solution started from
``+inf`` on the ball.  Two regularisations are offered:

* exact mode: start at a small time ``t0`` from ``1/t0`` on the ball, the
  largest value any solution can take at that time;
* theta mode: start at time 0 from ``theta`` on the ball.  This is the exact
  object for the particle system at density ``N = theta``.

The scheme is a conservative finite-volume discretisation on a uniform
radial grid (nodes ``j h``, faces at ``(j + 1/2) h``), which reduces to the
usual ``3 u_rr`` stencil at the origin.  Each step does backward-Euler
diffusion and then solves the reaction exactly, ``u -> u / (1 + u dt)``.
Both halves preserve ``0 <= u <= 1/t``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import simpson
from scipy.linalg import solve_banded

from .analytic import (
    certified_outer_radius,
    check_dimension,
    far_field_bound,
    far_field_mass,
    paley_zygmund_constant,
    sphere_area,
)

__all__ = [
    "PdeConfig",
    "PdeSolution",
    "LimitConstants",
    "DiscretizationFailure",
    "DomainTooSmall",
    "LowerBoundViolation",
    "solve_radial",
    "mass_integral",
    "empty_prob_poisson",
    "empty_prob_particles",
    "richardson",
    "refined_mass",
    "d1_mass_limit",
    "a2_estimate",
    "kappa_estimate",
    "scaling_check",
    "theta_ramp",
]


class DiscretizationFailure(ArithmeticError):
    """The computed profile broke the exact bound u <= 1/t."""


class DomainTooSmall(ValueError):
    """The outer radius does not certify the requested tail budget."""


class LowerBoundViolation(ArithmeticError):
    """A computed constant fell below a proven lower bound."""


BOUND_RTOL = 1e-12


@dataclass(frozen=True)
class PdeConfig:
    """Radial solve of the ball problem.

    ``spacing`` sets the grid unless ``grid_points`` is given.  ``t0``
    defaults to ``spacing**2``.  Time steps grow geometrically,
    ``dt = step_fraction * t``, and land exactly on ``output_times``.
    ``theta`` switches from exact mode to theta mode.  ``rmax = None`` picks
    the smallest certified outer radius for ``tail_budget``.
    """

    d: int
    r: float
    t_final: float
    rmax: float | None = None
    spacing: float = 0.01
    grid_points: int | None = None
    t0: float | None = None
    theta: float | None = None
    step_fraction: float = 0.005
    output_times: tuple[float, ...] = ()
    tolerance: float = 1e-3
    tail_budget: float = 1e-6
    uniform: bool = False

    def __post_init__(self):
        check_dimension(self.d)
        if not self.r > 0:
            raise ValueError("ball radius must be positive")
        if not self.t_final > 0:
            raise ValueError("t_final must be positive")
        if self.rmax is not None and not self.rmax > self.r:
            raise ValueError("outer radius must exceed the ball radius")
        if self.theta is not None and not self.theta > 0:
            raise ValueError("theta must be positive")
        if not 0 < self.step_fraction < 1:
            raise ValueError("step_fraction must lie in (0, 1)")
        if self.t0 is not None and not 0 < self.t0 < self.t_final:
            raise ValueError("need 0 < t0 < t_final")
        h = self.h
        if self.r / h < 20:
            raise ValueError(f"grid too coarse: {self.r / h:.1f} cells across the ball, need 20")
        if any(not 0 < t <= self.t_final for t in self.output_times):
            raise ValueError("output times must lie in (0, t_final]")

    @property
    def outer(self) -> float:
        if self.rmax is not None:
            return float(self.rmax)
        return certified_outer_radius(self.d, self.r, self.t_final, self.tail_budget)[0]

    @property
    def h(self) -> float:
        if self.grid_points is not None:
            if self.rmax is None:
                raise ValueError("grid_points needs an explicit rmax")
            return self.rmax / self.grid_points
        return self.spacing

    @property
    def start_time(self) -> float:
        if self.theta is not None:
            return 0.0
        return self.t0 if self.t0 is not None else min(self.spacing**2, 0.5 * self.t_final)

    def refined(self, factor: float = 2.0) -> "PdeConfig":
        """Same problem with spacing, t0 and step fraction divided by ``factor``."""
        kw = dict(spacing=self.h / factor, grid_points=None, step_fraction=self.step_fraction / factor)
        if self.rmax is None:
            kw["rmax"] = None
        else:
            kw["rmax"] = self.rmax
        if self.t0 is not None:
            kw["t0"] = self.t0 / factor**2
        return replace(self, **kw)


@dataclass
class PdeSolution:
    config: PdeConfig
    grid: np.ndarray
    times: np.ndarray
    profiles: np.ndarray
    mass: np.ndarray
    tail_bound: np.ndarray
    cell_volumes: np.ndarray = field(repr=False)
    steps: int = 0

    def index(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if not math.isclose(self.times[k], t, rel_tol=1e-9, abs_tol=1e-12):
            raise KeyError(f"t={t} is not an output time (have {self.times.tolist()})")
        return k

    def profile(self, t: float) -> np.ndarray:
        return self.profiles[self.index(t)]


def _fv_geometry(d: int, h: float, m: int):
    """Cell volumes / s_{d-1} and face areas / s_{d-1} for nodes 0..m."""
    j = np.arange(m + 1)
    face_hi = (j + 0.5) * h
    face_lo = np.maximum(j - 0.5, 0.0) * h
    vol = (face_hi**d - face_lo**d) / d
    area = face_hi ** (d - 1)
    return vol, area


def _ball_fraction(d: int, h: float, m: int, r: float) -> np.ndarray:
    """Fraction of each radial cell's volume lying inside B(r)."""
    j = np.arange(m + 1)
    hi = (j + 0.5) * h
    lo = np.maximum(j - 0.5, 0.0) * h
    inner = np.clip(r, lo, hi)
    return (inner**d - lo**d) / (hi**d - lo**d)


def solve_radial(config: PdeConfig) -> PdeSolution:
    """Integrate from the regularised start to ``t_final``.

    Raises :class:`DiscretizationFailure` if any accepted step violates
    ``u <= 1/t`` and :class:`DomainTooSmall` if the outer radius leaves more
    than ``tail_budget`` of mass uncertified.
    """
    cfg = config
    d = cfg.d
    rmax = cfg.outer
    h = cfg.h
    m = int(math.ceil(rmax / h - 1e-9))
    grid = np.arange(m + 1) * h
    vol, area = _fv_geometry(d, h, m)
    s = sphere_area(d)

    # the uniform self-test has no ball and hence no far field
    tail = 0.0 if cfg.uniform else far_field_mass(d, cfg.r, cfg.t_final, grid[-1])
    if tail > cfg.tail_budget * (1 + 1e-6):
        raise DomainTooSmall(
            f"outer radius {grid[-1]:.4g} leaves a certified tail of {tail:.3g} > budget {cfg.tail_budget:.3g}"
        )

    # off-diagonal couplings of L u = (1/2)[A+(u+ - u) - A-(u - u-)] / (h V)
    up = np.zeros(m)
    dn = np.zeros(m)
    up[:-1] = 0.5 * area[: m - 1] / (h * vol[: m - 1])
    dn[1:] = 0.5 * area[: m - 1] / (h * vol[1:m])
    diag = up + dn
    diag[-1] = 0.5 * (area[m - 2] + area[m - 1]) / (h * vol[m - 1])  # Dirichlet face to node m

    t = cfg.start_time
    level = 1.0 / t if cfg.theta is None else float(cfg.theta)
    if cfg.uniform:
        u = np.full(m + 1, level)
    else:
        u = level * _ball_fraction(d, h, m, cfg.r)
        u[-1] = 0.0

    outs = sorted(set(cfg.output_times) | {cfg.t_final})
    times, profiles = [], []
    ab = np.zeros((3, m))
    steps = 0
    theta_shift = 0.0 if cfg.theta is None else 1.0 / cfg.theta
    for target in outs:
        while t < target:
            dt = cfg.step_fraction * (t + theta_shift)
            if t + dt >= target * (1 - 1e-12) or target - (t + dt) < 1e-3 * dt:
                dt = target - t
                t_next = target
            else:
                t_next = t + dt
            if not cfg.uniform:
                ab[0, 1:] = -dt * up[:-1]
                ab[1] = 1.0 + dt * diag
                ab[2, :-1] = -dt * dn[1:]
                u[:m] = solve_banded((1, 1), ab, u[:m], check_finite=False)
            u = u / (1.0 + u * dt)
            t = t_next
            steps += 1
            _check_bound(u, t, cfg.theta)
        times.append(t)
        profiles.append(u.copy())

    profiles = np.array(profiles)
    times = np.array(times)
    mass = s * profiles @ vol
    tails = np.array([far_field_mass(d, cfg.r, tt, grid[-1]) if not cfg.uniform else 0.0 for tt in times])
    return PdeSolution(cfg, grid, times, profiles, mass, tails, vol, steps)


def _check_bound(u: np.ndarray, t: float, theta: float | None):
    cap = 1.0 / t if theta is None else theta / (1.0 + theta * t)
    worst = float(u.max()) if u.size else 0.0
    if worst > cap * (1 + BOUND_RTOL) or float(u.min()) < 0.0:
        raise DiscretizationFailure(
            f"exact bound 0 <= u <= 1/t broken at t={t:.6g}: max u = {worst:.17g}, 1/t = {cap:.17g}"
        )


def _radial_integral(sol: PdeSolution, values: np.ndarray) -> float:
    d = sol.config.d
    return sphere_area(d) * float(simpson(values * sol.grid ** (d - 1), x=sol.grid))


def mass_integral(sol: PdeSolution, t: float) -> float:
    """Integral of u(t, .) over R^d: composite Simpson on the grid plus the certified tail."""
    k = sol.index(t)
    return _radial_integral(sol, sol.profiles[k]) + float(sol.tail_bound[k])


def empty_prob_poisson(sol: PdeSolution, t: float) -> float:
    """exp(-int (1 - e^{-u})): empty-ball probability from a rate-1 Poisson start."""
    k = sol.index(t)
    return math.exp(-(_radial_integral(sol, -np.expm1(-sol.profiles[k])) + float(sol.tail_bound[k])))


def empty_prob_particles(sol: PdeSolution, t: float, start: str = "lebesgue", n: int | None = None) -> float:
    """Empty-ball probability of the density-n particle system, from a theta = n solve.

    With ``theta = n`` the profile is ``n w`` where ``w`` is the probability
    that one particle's family meets the ball.  The Lebesgue proxy then gives
    ``exp(-int u)`` and a Poisson start with ``n`` particles per atom gives
    ``exp(-int (1 - (1 - u/n)^n))``.
    """
    k = sol.index(t)
    u = sol.profiles[k]
    n = n if n is not None else sol.config.theta
    if start == "lebesgue":
        lam = _radial_integral(sol, u)
    elif start == "poisson":
        if n is None:
            lam = _radial_integral(sol, -np.expm1(-u))
        else:
            lam = _radial_integral(sol, -np.expm1(n * np.log1p(-np.minimum(u / n, 1.0))))
    else:
        raise ValueError(f"unknown start {start!r}")
    return math.exp(-(lam + float(sol.tail_bound[k])))


def richardson(values, ratio: float = 2.0, order: float = 1.0):
    """Richardson extrapolation of a refinement sequence.

    Returns ``(estimate, residual, observed_order)``.  With three or more
    values the observed order from the last three is reported and the
    residual is the change between the last two extrapolants; with two it is
    the size of the correction.
    """
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise ValueError("need at least two resolutions")
    f = ratio**order
    ext = (f * v[1:] - v[:-1]) / (f - 1.0)
    observed = math.nan
    if v.size >= 3:
        a, b = v[-3] - v[-2], v[-2] - v[-1]
        if a != 0 and b != 0 and a / b > 0:
            observed = math.log(a / b) / math.log(ratio)
        residual = abs(ext[-1] - ext[-2])
    else:
        residual = abs(ext[-1] - v[-1])
    return float(ext[-1]), float(residual), observed


def refined_mass(config: PdeConfig, levels: int = 3, times=None):
    """I(t) at ``levels`` successive halvings, Richardson-extrapolated.

    Returns ``(times, estimates, residuals, raw)`` where ``raw`` has one row
    per level.
    """
    times = tuple(times) if times is not None else tuple(config.output_times) or (config.t_final,)
    base = replace(config, output_times=times, rmax=config.outer)
    rows = []
    cfg = base
    for _ in range(levels):
        sol = solve_radial(cfg)
        rows.append([float(sol.mass[sol.index(t)] + sol.tail_bound[sol.index(t)]) for t in times])
        cfg = cfg.refined(2.0)
    raw = np.array(rows)
    est, res = [], []
    for j in range(len(times)):
        e, r_, _ = richardson(raw[:, j])
        est.append(e)
        res.append(r_)
    return np.array(times), np.array(est), np.array(res), raw


@dataclass
class LimitConstants:
    kind: str
    value: float
    r: float
    diagnostics: list
    monotone: bool
    residual: float
    extras: dict = field(default_factory=dict)

    def as_record(self) -> dict:
        return {
            "kind": self.kind,
            "value": self.value,
            "r": self.r,
            "monotone": self.monotone,
            "residual": self.residual,
            "diagnostics": [[float(t), float(v)] for t, v in self.diagnostics],
            **{k: v for k, v in self.extras.items()},
        }


def _tail_fit(ts, vals):
    """Fit I(t) = L + a t^{-1/2} (+ b t^{-1}) on the largest times.

    Returns ``(limit, residual)`` where the residual compares the linear and
    quadratic fits in ``t^{-1/2}``.
    """
    s = np.asarray(ts, dtype=float) ** -0.5
    v = np.asarray(vals, dtype=float)
    lin = np.polyfit(s[-2:], v[-2:], 1)[-1]
    if len(s) >= 3:
        quad = np.polyfit(s[-3:], v[-3:], 2)[-1]
        return float(quad), float(abs(quad - lin))
    return float(lin), float(abs(lin - v[-1]))


def _monotone(vals, direction: int, tol: float) -> bool:
    diffs = np.diff(np.asarray(vals, dtype=float))
    return bool(np.all(direction * diffs > -tol))


def d1_mass_limit(
    r: float,
    times=(16.0, 64.0, 256.0, 1024.0, 4096.0),
    spacing: float = 0.02,
    levels: int = 3,
    tolerance: float = 1e-3,
) -> LimitConstants:
    """Limit of int u over the ball B(r t) at time t as t grows (expected 2r).

    Uses I^{rt}(t) = t^{-1/2} I^{r sqrt t}(1), so every point is a time-1
    solve.  Diagnostics are ``(t, I(t))``; ``monotone`` records whether they
    increase, the direction asserted for this regime.
    """
    if not r > 0:
        raise ValueError("r must be positive")
    diag = []
    residuals = []
    for t in times:
        radius = r * math.sqrt(t)
        h = min(spacing, radius / 20)
        cfg = PdeConfig(d=1, r=radius, t_final=1.0, spacing=h, tolerance=tolerance)
        _, est, res, _ = refined_mass(cfg, levels=levels)
        diag.append((float(t), float(est[0]) / math.sqrt(t)))
        residuals.append(float(res[0]) / math.sqrt(t))
    vals = [v for _, v in diag]
    limit, fit_res = _tail_fit(times, vals)
    monotone = _monotone(vals, +1, max(residuals))
    return LimitConstants(
        "d1_mass_limit",
        limit,
        r,
        diag,
        monotone,
        fit_res + max(residuals),
        {"grid_residuals": residuals, "strictly_increasing": bool(np.all(np.diff(vals) > 0))},
    )


def a2_estimate(r: float, spacing: float = 0.02, levels: int = 3, tolerance: float = 1e-3, theta_values=None) -> LimitConstants:
    """A_2(r) = int u over R^2 at time 1 for the ball of radius r."""
    if not r > 0:
        raise ValueError("r must be positive")
    h = min(spacing, r / 20)
    cfg = PdeConfig(d=2, r=r, t_final=1.0, spacing=h, tolerance=tolerance)
    _, est, res, raw = refined_mass(cfg, levels=levels)
    extras = {"ratio_to_area": float(est[0]) / (math.pi * r * r), "levels": raw[:, 0].tolist()}
    if theta_values:
        ramp = theta_ramp(cfg, theta_values)
        extras["theta_ramp"] = ramp
    return LimitConstants("A2", float(est[0]), r, [(1.0, float(est[0]))], True, float(res[0]), extras)


def kappa_estimate(
    d: int = 3,
    times=(1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0),
    spacing: float = 0.02,
    levels: int = 3,
    tolerance: float = 1e-3,
    check_lower: bool = True,
) -> LimitConstants:
    """kappa_d = lim int u^1(t, .) over R^d, from a doubling time sequence.

    I(t) approaches its limit like t^{-1/2} (the mass lost after t is about
    int u^2, and u is close to kappa times a heat kernel), so the limit is
    read off a fit in t^{-1/2} on the three largest times.  The estimate is
    repeated without the largest time to give the t-doubling residual.
    """
    d = check_dimension(d)
    if d < 3:
        raise ValueError("kappa is defined for d >= 3")
    times = tuple(sorted(times))
    cfg = PdeConfig(d=d, r=1.0, t_final=times[-1], spacing=spacing, output_times=times, tolerance=tolerance)
    ts, est, res, raw = refined_mass(cfg, levels=levels)
    limit, fit_res = _tail_fit(ts, est)
    prev, _ = _tail_fit(ts[:-1], est[:-1])
    # the same fit on the unextrapolated finest level, for the grid residual
    coarse, _ = _tail_fit(ts, raw[-1])
    monotone = _monotone(est, -1, 0.0) and all(_monotone(row, -1, 0.0) for row in raw)
    lc = LimitConstants(
        "kappa",
        limit,
        1.0,
        list(zip(ts.tolist(), est.tolist())),
        monotone,
        max(fit_res, abs(limit - prev)),
        {
            "d": d,
            "grid_residuals": res.tolist(),
            "doubling_change": abs(limit - prev),
            "finest_level_limit": coarse,
            "lower_bound": paley_zygmund_constant(d),
            "levels": raw.tolist(),
        },
    )
    if check_lower and limit < paley_zygmund_constant(d):
        raise LowerBoundViolation(f"kappa_{d} estimate {limit:.6g} is below the proven lower bound {paley_zygmund_constant(d):.6g}")
    return lc


def scaling_check(d: int, r: float, epsilon: float, t: float, spacing: float = 0.02, levels: int = 2):
    """Relative discrepancy in the two scaling identities for I.

    * pairing: ``I^r(t) = eps^{d-2} I^{r/eps}(t/eps^2)``;
    * integrated: ``I^r(t) = r^{d-2} I^1(t/r^2)``.

    Each side is solved on its own grid and extrapolated.  Returns a dict
    with both relative errors and the values used.
    """
    d = check_dimension(d)
    if not (r > 0 and epsilon > 0 and t > 0):
        raise ValueError("r, epsilon and t must be positive")

    def integral(radius, time):
        h = min(spacing, radius / 20)
        cfg = PdeConfig(d=d, r=radius, t_final=time, spacing=h)
        _, est, res, _ = refined_mass(cfg, levels=levels)
        return float(est[0]), float(res[0])

    lhs, lhs_res = integral(r, t)
    if epsilon == 1.0:
        paired, paired_res = lhs, lhs_res
    else:
        v, paired_res = integral(r / epsilon, t / epsilon**2)
        paired = epsilon ** (d - 2) * v
        paired_res *= epsilon ** (d - 2)
    if r == 1.0:
        unit, unit_res = lhs, lhs_res
    else:
        v, unit_res = integral(1.0, t / r**2)
        unit = r ** (d - 2) * v
        unit_res *= r ** (d - 2)
    return {
        "lhs": lhs,
        "paired": paired,
        "unit": unit,
        "pairing_error": abs(lhs - paired) / lhs,
        "integrated_error": abs(lhs - unit) / lhs,
        "residual": max(lhs_res, paired_res, unit_res) / lhs,
    }


def theta_ramp(config: PdeConfig, thetas) -> dict:
    """Finite-theta integrals I_theta(t_final) and their extrapolation to theta = inf.

    The regularisation error behaves like theta^{-1/2}, so the ramp is
    extrapolated linearly in that variable on the two largest values.
    """
    thetas = sorted(float(x) for x in thetas)
    if len(thetas) < 2:
        raise ValueError("need at least two theta values")
    vals = []
    for th in thetas:
        sol = solve_radial(replace(config, theta=th, output_times=()))
        vals.append(float(sol.mass[-1] + sol.tail_bound[-1]))
    x = np.asarray(thetas) ** -0.5
    limit = float(np.polyfit(x[-2:], vals[-2:], 1)[-1])
    return {"theta": thetas, "values": vals, "limit": limit, "residual": abs(limit - vals[-1])}
