"""Closed-form reference quantities.

Everything here is a pure function of its arguments and is used as an exact
oracle by the simulator, the PDE engine and the harness.  The total-mass
process is the Feller diffusion with branching mechanism ``psi(u) = u**2``.
"""
from __future__ import annotations

import math
import warnings
from fractions import Fraction

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import ndtr

__all__ = [
    "ProbabilityUnderflow",
    "check_dimension",
    "gamma_half_integer",
    "ball_volume",
    "sphere_area",
    "heat_kernel",
    "csbp_laplace",
    "csbp_extinction",
    "gaussian_hit_tail",
    "projected_hit_tail",
    "paley_zygmund_constant",
    "scaling_exponent",
    "far_field_bound",
    "far_field_mass",
    "certified_outer_radius",
]

# extinction probabilities below this clamp to zero (with a warning)
UNDERFLOW_FLOOR = 1e-300


class ProbabilityUnderflow(UserWarning):
    """A probability fell below the double-precision floor and was clamped to 0."""


def check_dimension(d) -> int:
    if isinstance(d, bool) or int(d) != d or d < 1:
        raise ValueError(f"dimension must be a positive integer, got {d!r}")
    return int(d)


def gamma_half_integer(k: int) -> tuple[Fraction, bool]:
    """Gamma(k/2) for positive integer ``k`` as ``(q, has_sqrt_pi)``.

    The value is ``q`` when ``k`` is even and ``q * sqrt(pi)`` when odd.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if k % 2 == 0:
        return Fraction(math.factorial(k // 2 - 1)), False
    # Gamma(1/2) = sqrt(pi); Gamma(x + 1) = x Gamma(x)
    q = Fraction(1)
    x = Fraction(1, 2)
    while x < Fraction(k, 2):
        q *= x
        x += 1
    return q, True


def _gamma_half(k: int) -> float:
    q, root = gamma_half_integer(k)
    return float(q) * (math.sqrt(math.pi) if root else 1.0)


def ball_volume(d: int, r: float = 1.0) -> float:
    """Volume of the d-dimensional ball of radius ``r``."""
    d = check_dimension(d)
    if r < 0:
        raise ValueError("radius must be nonnegative")
    return math.pi ** (d / 2) * r**d / _gamma_half(d + 2)


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere in R^d (2 for d=1)."""
    d = check_dimension(d)
    return 2.0 * math.pi ** (d / 2) / _gamma_half(d)


def heat_kernel(t: float, x, d: int | None = None):
    """Brownian transition density ``(2 pi t)^(-d/2) exp(-|x|^2 / 2t)``.

    ``x`` is a point (last axis = coordinates) or, with ``d`` given, a
    radius or array of radii.
    """
    if not t > 0:
        raise ValueError(f"heat kernel needs t > 0, got {t}")
    x = np.asarray(x, dtype=float)
    if d is None:
        d = 1 if x.ndim == 0 else x.shape[-1]
        r2 = x**2 if x.ndim == 0 else np.sum(x**2, axis=-1)
    else:
        d = check_dimension(d)
        r2 = x**2 if (x.ndim == 0 or x.shape[-1] != d) else np.sum(x**2, axis=-1)
    out = (2.0 * math.pi * t) ** (-d / 2) * np.exp(-r2 / (2.0 * t))
    return float(out) if np.ndim(out) == 0 else out


def csbp_laplace(theta: float, m: float, t: float) -> float:
    """E_m[exp(-theta X_t(1))] = exp(-theta m / (1 + theta t)).

    ``theta = inf`` gives the extinction probability; ``m = inf`` gives 0.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    if m < 0:
        raise ValueError("initial mass must be nonnegative")
    if not theta > 0:
        raise ValueError("theta must be positive")
    if math.isinf(m):
        return 0.0
    if m == 0:
        return 1.0
    if math.isinf(theta):
        return csbp_extinction(m, t)
    return _clamped_exp(-theta * m / (1.0 + theta * t))


def csbp_extinction(m: float, t: float) -> float:
    """P_m(X_t(1) = 0) = exp(-m / t)."""
    if not t > 0:
        raise ValueError("t must be positive")
    if m < 0:
        raise ValueError("initial mass must be nonnegative")
    if math.isinf(m):
        return 0.0
    return _clamped_exp(-m / t)


def _clamped_exp(x: float) -> float:
    v = math.exp(x)
    if v < UNDERFLOW_FLOOR:
        warnings.warn(
            f"exp({x:.6g}) is below {UNDERFLOW_FLOOR:g}; clamped to 0",
            ProbabilityUnderflow,
            stacklevel=3,
        )
        return 0.0
    return v


def gaussian_hit_tail(t: float, distance):
    """Closed-form bound ``4 sqrt(t) / (sqrt(pi) g) * exp(-g^2 / 4t)``.

    Bounds the probability that planar Brownian motion started at gap ``g``
    from a ball enters it before time ``t``.  Loose by design; see
    :func:`projected_hit_tail` for the sharper bound used for sizing.
    """
    g = np.asarray(distance, dtype=float)
    if np.any(g <= 0):
        raise ValueError("distance must be positive (bound is vacuous at 0)")
    if not t > 0:
        raise ValueError("t must be positive")
    out = 4.0 * math.sqrt(t) / (math.sqrt(math.pi) * g) * np.exp(-(g**2) / (4.0 * t))
    return float(out) if out.ndim == 0 else out


def projected_hit_tail(t: float, distance):
    """P(Brownian motion in any dimension gets within ``distance`` closer
    to a point before time ``t``) <= 2 * Phi_bar(g / sqrt(t)).

    Entering a ball at gap ``g`` forces the component along the start
    direction to drop by ``g``; the reflection principle gives the rest.
    """
    g = np.asarray(distance, dtype=float)
    if not t > 0:
        raise ValueError("t must be positive")
    out = np.where(g > 0, 2.0 * ndtr(-np.maximum(g, 0.0) / math.sqrt(t)), 1.0)
    return float(out) if out.ndim == 0 else out


def paley_zygmund_constant(d: int) -> float:
    """c(d) = e^{-3/2} 3^{-d/2} v_d(1) / 7, a lower bound on kappa_d (d >= 3)."""
    d = check_dimension(d)
    if d < 3:
        raise ValueError("the Paley-Zygmund lower constant is defined for d >= 3")
    return math.exp(-1.5) * 3.0 ** (-d / 2) * ball_volume(d, 1.0) / 7.0


def scaling_exponent(d: int) -> float:
    """Exponent a in the normalisation R_t / t^a: 1, 1/2, 0 for d = 1, 2, >=3."""
    d = check_dimension(d)
    return min(1.0 / d, float(max(3 - d, 0)))


_SPLIT_FRACTIONS = np.linspace(0.02, 0.98, 49)


def far_field_bound(t: float, rho, r: float, hit_tail=projected_hit_tail):
    """Certified upper bound on u(t, x) = -log P_{delta_x}(X_t(B(r)) = 0), |x| = rho > r.

    Combines three facts about the binary-branching SBM:

    * u(t, x) <= 1/t (total-mass extinction);
    * u(t, x) <= 3 / (|x| - r)^2, the radial supersolution of
      ``Delta v / 2 = v^2`` that blows up on the sphere of radius r,
      which dominates the range-hitting function;
    * Feynman-Kac through the sphere of radius r + a:
      u(t, x) <= (3 / a^2) * P_x(hit B(r + a) before t).

    The split ``a`` is optimised over a fixed grid of fractions of the gap.
    """
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    gap = rho - r
    out = np.full(rho.shape, 1.0 / t)
    pos = gap > 0
    if np.any(pos):
        g = gap[pos][:, None]
        a = _SPLIT_FRACTIONS[None, :] * g
        fk = (3.0 / a**2) * hit_tail(t, g - a)
        best = np.minimum(fk.min(axis=1), 3.0 / gap[pos] ** 2)
        out[pos] = np.minimum(out[pos], best)
    return out


def far_field_mass(d: int, r: float, t: float, outer: float, hit_tail=projected_hit_tail) -> float:
    """Certified bound on the integral of u(t, .) over {|x| > outer}."""
    d = check_dimension(d)
    if outer <= r:
        return math.inf
    s = sphere_area(d)

    def f(rho):
        return far_field_bound(t, rho, r, hit_tail)[0] * rho ** (d - 1)

    # the integrand is Gaussian-like on the sqrt(t) scale beyond the gap
    scale = math.sqrt(t)
    upper = outer + 60.0 * scale + 10.0
    pts = [outer + k * scale for k in range(1, 40) if outer + k * scale < upper]
    with warnings.catch_warnings():
        # integrand spans hundreds of decades; roundoff notices are expected
        warnings.simplefilter("ignore")
        total, _ = quad(f, outer, upper, points=pts[:48], limit=400, epsabs=0.0, epsrel=1e-8)
    return s * total


def certified_outer_radius(d: int, r: float, t: float, budget: float, hit_tail=projected_hit_tail):
    """Smallest radius R > r whose exterior carries at most ``budget`` of u(t, .).

    Returns ``(R, bound)`` with ``bound = far_field_mass(d, r, t, R) <= budget``.
    """
    if not 0 < budget < math.inf:
        raise ValueError("budget must be positive and finite")
    step = math.sqrt(t) + 1.0
    hi = r + step
    while far_field_mass(d, r, t, hi, hit_tail) > budget:
        hi += step
        step *= 1.5
    lo = max(r + 1e-9, hi - step)
    if far_field_mass(d, r, t, lo, hit_tail) <= budget:
        return lo, far_field_mass(d, r, t, lo, hit_tail)

    def g(x):
        return math.log(far_field_mass(d, r, t, x, hit_tail)) - math.log(budget)

    root = brentq(g, lo, hi, xtol=1e-6)
    # step just outside the root so the certificate holds exactly
    while True:
        bound = far_field_mass(d, r, t, root, hit_tail)
        if bound <= budget:
            return root, bound
        root += 1e-4 * step
