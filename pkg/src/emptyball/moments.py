"""First and second moments of X_t(B(r)) under P_{delta_x}.

moment1 is P_t 1_B(x) = P(|x + W_t - c| < r).  The distance |x + W_t - c|
has a radial density built from a modified Bessel function, which is what
the quadratures below integrate against.

moment2 is (P_t 1_B)^2 + 2 int_0^t P_s[(P_{t-s} 1_B)^2] ds, the second
moment of super-Brownian motion with branching mechanism u^2.
"""
from __future__ import annotations

import math
import warnings

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.special import chndtr, gammaln, ive

from .analytic import check_dimension

__all__ = ["moment1", "moment2", "particle_moment2", "radial_density", "QuadratureError"]


class QuadratureError(ArithmeticError):
    """Adaptive quadrature did not reach the requested tolerance."""


def _offset(x, center, d):
    x = np.zeros(d) if x is None else np.asarray(x, dtype=float).reshape(-1)
    c = np.zeros(d) if center is None else np.asarray(center, dtype=float).reshape(-1)
    if x.shape[0] != d or c.shape[0] != d:
        raise ValueError("point dimension does not match d")
    return float(np.linalg.norm(x - c))


def radial_density(rho, a: float, t: float, d: int):
    """Density of |a e_1 + W_t| at ``rho`` for d-dimensional Brownian motion."""
    rho = np.asarray(rho, dtype=float)
    nu = d / 2.0 - 1.0
    out = np.zeros_like(rho)
    pos = rho > 0
    rr = rho[pos]
    if a == 0.0:
        logf = (d - 1) * np.log(rr) - rr**2 / (2 * t) - (nu * math.log(2.0) + gammaln(d / 2.0) + (d / 2.0) * math.log(t))
        out[pos] = np.exp(logf)
    else:
        z = a * rr / t
        # I_nu(z) e^{-z} keeps the exponent bounded: exp(-(rho - a)^2 / 2t)
        out[pos] = (rr / t) * (rr / a) ** nu * np.exp(-((rr - a) ** 2) / (2 * t)) * ive(nu, z)
    return out if out.ndim else float(out)


def _quad(f, lo, hi, points=None, epsabs=1e-13, epsrel=1e-10):
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            val, err = quad(f, lo, hi, points=points, limit=200, epsabs=epsabs, epsrel=epsrel)
        except IntegrationWarning as exc:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                val, err = quad(f, lo, hi, points=points, limit=200, epsabs=epsabs, epsrel=epsrel)
            if err > 1e-7 * max(abs(val), 1e-300) and err > 1e-12:
                raise QuadratureError(f"quadrature stalled at estimated error {err:.3g}: {exc}") from None
    return val


def _ball_prob(a: float, t: float, r: float, d: int) -> float:
    """P(|a e_1 + W_t| < r)."""
    if r == 0:
        return 0.0
    if t == 0:
        return 1.0 if a < r else 0.0
    s = math.sqrt(t)
    lo = max(0.0, a - 12 * s)
    hi = min(r, a + 12 * s)
    if hi <= lo:
        return 0.0
    pts = [p for p in (a,) if lo < p < hi]
    return min(1.0, _quad(lambda rho: radial_density(np.array([rho]), a, t, d)[0], lo, hi, points=pts or None))


def moment1(t: float, r: float, x=None, d: int | None = None, center=None) -> float:
    """E_{delta_x}[X_t(B(center, r))] = P_t 1_B(x).

    ``d`` is inferred from ``x`` when omitted.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    if r < 0:
        raise ValueError("radius must be nonnegative")
    if d is None:
        d = 1 if x is None else np.asarray(x).reshape(-1).shape[0]
    d = check_dimension(d)
    if math.isinf(r):
        return 1.0
    return _ball_prob(_offset(x, center, d), t, r, d)


def _outer_expectation(g, a: float, s: float, d: int, reach: float) -> float:
    """E[g(|a e_1 + W_s|)] restricted to radii below ``reach`` (g vanishes beyond)."""
    sd = math.sqrt(s)
    lo = max(0.0, a - 12 * sd)
    hi = min(a + 12 * sd, reach)
    if hi <= lo:
        return 0.0
    pts = sorted({p for p in (a,) if lo < p < hi})
    return _quad(lambda rho: radial_density(np.array([rho]), a, s, d)[0] * g(rho), lo, hi, points=pts or None, epsrel=1e-8)


def moment2(t: float, r: float, x=None, d: int | None = None, center=None) -> float:
    """E_{delta_x}[X_t(B(center, r))^2] for super-Brownian motion."""
    if not t > 0:
        raise ValueError("t must be positive")
    if r < 0:
        raise ValueError("radius must be nonnegative")
    if d is None:
        d = 1 if x is None else np.asarray(x).reshape(-1).shape[0]
    d = check_dimension(d)
    a = _offset(x, center, d)
    m1 = _ball_prob(a, t, r, d)
    return m1 * m1 + 2.0 * _cross_term(a, t, r, d)


def _cross_term(a: float, t: float, r: float, d: int) -> float:
    """int_0^t E[(P_{t-s} 1_B)^2 (a e_1 + W_s)] ds."""
    if r == 0:
        return 0.0

    def inner(s):
        tau = t - s
        if tau <= 0:
            return _ball_prob(a, s, r, d)
        reach = r + 12 * math.sqrt(tau)

        def g(rho):
            # closed-form noncentral chi-square cdf keeps the nested integral cheap
            p = chndtr(r * r / tau, d, rho * rho / tau)
            return p * p

        if s <= 0:
            return g(a)
        return _outer_expectation(g, a, s, d, reach)

    return _quad(inner, 0.0, t, epsabs=1e-10, epsrel=1e-7)


def particle_moment2(t: float, r: float, N: int, x=None, d: int | None = None, center=None) -> float:
    """Second moment of X_t(B) for the density-N particle system from a unit point mass.

    Each of the N particles' families contributes an independent count C with
    E[C] = m1 and E[C(C-1)] = 2N J, J the cross term; averaging over N
    families adds (m1 - m1^2)/N to the superprocess value.
    """
    if d is None:
        d = 1 if x is None else np.asarray(x).reshape(-1).shape[0]
    m1 = moment1(t, r, x, d, center)
    return moment2(t, r, x, d, center) + (m1 - m1 * m1) / N
